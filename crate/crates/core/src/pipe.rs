//! Line-oriented external processes.
//!
//! An external question generator or scorer reads one item per line on
//! stdin and writes exactly one result per line on stdout, in order.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::thread;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipeError {
    #[error("cannot run {command:?}: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("{command:?} failed: {source}")]
    Io { command: String, source: io::Error },
    #[error("{command:?} exited with {status}")]
    Status { command: String, status: std::process::ExitStatus },
    #[error("{command:?} produced {got} lines for {expected} inputs")]
    LineCount { command: String, expected: usize, got: usize },
    #[error("line {line}: cannot parse score {text:?}")]
    BadScore { line: usize, text: String },
}

/// Runs `command` through `sh -c`, feeding `lines` and collecting one output
/// line per input line.
pub fn run_line_filter(command: &str, lines: &[String]) -> Result<Vec<String>, PipeError> {
    let io_err = |source| PipeError::Io {
        command: command.to_string(),
        source,
    };
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|source| PipeError::Spawn {
            command: command.to_string(),
            source,
        })?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let payload: String = lines.iter().map(|l| format!("{l}\n")).collect();
    let writer = thread::spawn(move || stdin.write_all(payload.as_bytes()));
    let stdout = child.stdout.take().expect("piped stdout");
    let out: Vec<String> = BufReader::new(stdout)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    let status = child.wait().map_err(io_err)?;
    // a broken pipe only matters if the line count is also off
    let _ = writer.join().expect("writer thread");
    if !status.success() {
        return Err(PipeError::Status {
            command: command.to_string(),
            status,
        });
    }
    if out.len() != lines.len() {
        return Err(PipeError::LineCount {
            command: command.to_string(),
            expected: lines.len(),
            got: out.len(),
        });
    }
    Ok(out)
}

/// Parses one decimal score per line.
pub fn parse_scores(lines: &[String]) -> Result<Vec<f64>, PipeError> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| PipeError::BadScore {
                line: i + 1,
                text: l.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echoes_through_a_shell_filter() {
        let lines = vec!["a b".to_string(), "c".to_string()];
        let out = run_line_filter("tr a-z A-Z", &lines).unwrap();
        assert_eq!(out, vec!["A B", "C"]);
    }

    #[test]
    fn line_count_mismatch() {
        let lines = vec!["x".to_string(), "y".to_string()];
        assert!(matches!(
            run_line_filter("head -n 1", &lines),
            Err(PipeError::LineCount { expected: 2, got: 1, .. })
        ));
        assert!(matches!(run_line_filter("exit 3", &lines), Err(PipeError::Status { .. }) | Err(PipeError::LineCount { .. })));
    }

    #[test]
    fn scores() {
        assert_eq!(parse_scores(&["1.5".into(), " 2 ".into()]).unwrap(), vec![1.5, 2.0]);
        assert!(matches!(
            parse_scores(&["x".into()]),
            Err(PipeError::BadScore { line: 1, .. })
        ));
    }
}
