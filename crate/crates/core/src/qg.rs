//! Question-generator input serialization and the template transcriber.
//!
//! A sampled query, its answer and the table headers are linearized as
//!
//! ```text
//! [S] <OP> <select header> [W] <header> <sym> <value> ... [A] <answer> [C] <h1> [CS] <h2> ...
//! ```
//!
//! which is what an external sequence-to-sequence generator consumes, one
//! input per line. [`template_transcribe`] is the built-in stand-in for that
//! generator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::{Answer, CmpOp, ReturnType, SqlQuery};
use crate::table::Table;

const MARKERS: [&str; 5] = ["[S]", "[W]", "[A]", "[C]", "[CS]"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QgError {
    #[error("cannot serialize: {0}")]
    Serialization(String),
    #[error("malformed generator input at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QgInput {
    pub text: String,
    pub query: SqlQuery,
    pub answer: Answer,
    pub headers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QgCondition {
    pub header: String,
    pub op: CmpOp,
    pub value: String,
}

/// Fields recovered from a serialized input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QgFields {
    pub ret: ReturnType,
    pub select_header: String,
    pub conditions: Vec<QgCondition>,
    pub answer: String,
    pub headers: Vec<String>,
}

impl QgFields {
    /// The fields a query/answer pair serializes to.
    pub fn of(q: &SqlQuery, a: &Answer, t: &Table) -> Self {
        Self {
            ret: q.ret,
            select_header: t.header(q.select_col).to_string(),
            conditions: q
                .conds
                .iter()
                .map(|c| QgCondition {
                    header: t.header(c.col).to_string(),
                    op: c.op,
                    value: c.value.clone(),
                })
                .collect(),
            answer: a.render(),
            headers: t.headers().to_vec(),
        }
    }
}

fn check_piece(kind: &str, s: &str) -> Result<(), QgError> {
    if s.contains(['\n', '\r']) {
        return Err(QgError::Serialization(format!("{kind} contains a line break: {s:?}")));
    }
    if let Some(m) = MARKERS.iter().find(|m| s.contains(*m)) {
        return Err(QgError::Serialization(format!("{kind} contains reserved token {m}: {s:?}")));
    }
    Ok(())
}

/// Linearizes `q`, its answer and `t`'s headers.
pub fn serialize_qg_input(q: &SqlQuery, a: &Answer, t: &Table) -> Result<QgInput, QgError> {
    q.validate(t).map_err(|e| QgError::Serialization(e.to_string()))?;
    let fields = QgFields::of(q, a, t);
    check_piece("select header", &fields.select_header)?;
    for c in &fields.conditions {
        check_piece("header", &c.header)?;
        check_piece("value", &c.value)?;
        if c.value.is_empty() {
            return Err(QgError::Serialization("empty WHERE value".into()));
        }
    }
    check_piece("answer", &fields.answer)?;
    for h in &fields.headers {
        check_piece("header", h)?;
    }

    let mut text = format!("[S] {} {}", fields.ret.keyword(), fields.select_header);
    for c in &fields.conditions {
        text.push_str(&format!(" [W] {} {} {}", c.header, c.op.symbol(), c.value));
    }
    text.push_str(" [A] ");
    text.push_str(&fields.answer);
    text.push_str(" [C] ");
    text.push_str(&fields.headers.join(" [CS] "));
    Ok(QgInput {
        text,
        query: q.clone(),
        answer: a.clone(),
        headers: fields.headers,
    })
}

fn malformed(offset: usize, message: impl Into<String>) -> QgError {
    QgError::Malformed {
        offset,
        message: message.into(),
    }
}

/// Recovers the fields of a serialized input.
///
/// Headers are read first, from the `[C]` section, and used to split each
/// `[W]` element into header, operator and value, so headers that contain
/// operator symbols still parse.
pub fn parse_qg_input(text: &str) -> Result<QgFields, QgError> {
    if !text.starts_with("[S] ") {
        return Err(malformed(0, "expected leading '[S] '"));
    }
    let a_at = text
        .find(" [A] ")
        .ok_or_else(|| malformed(text.len(), "missing ' [A] '"))?;
    let c_at = text[a_at + 5..]
        .find(" [C] ")
        .map(|i| i + a_at + 5)
        .ok_or_else(|| malformed(text.len(), "missing ' [C] ' after the answer"))?;
    let answer = text[a_at + 5..c_at].to_string();
    let headers: Vec<String> = text[c_at + 5..].split(" [CS] ").map(str::to_string).collect();
    if headers.iter().any(|h| h.is_empty()) {
        return Err(malformed(c_at + 5, "empty header"));
    }

    let head = &text[4..a_at];
    let mut parts = head.split(" [W] ");
    let select_part = parts.next().unwrap_or_default();
    let (kw, select_header) = select_part
        .split_once(' ')
        .ok_or_else(|| malformed(4, "expected '<OP> <column>' after [S]"))?;
    let ret = ReturnType::from_keyword(kw)
        .ok_or_else(|| malformed(4, format!("unknown operator {kw:?}")))?;
    if select_header.is_empty() {
        return Err(malformed(4 + kw.len() + 1, "empty select column"));
    }

    let mut conditions = Vec::new();
    let mut offset = 4 + select_part.len();
    for part in parts {
        offset += " [W] ".len();
        conditions.push(split_condition(part, &headers).ok_or_else(|| {
            malformed(offset, "expected '<column> <=|>|<> <value>' after [W]")
        })?);
        offset += part.len();
    }
    Ok(QgFields {
        ret,
        select_header: select_header.to_string(),
        conditions,
        answer,
        headers,
    })
}

fn split_condition(part: &str, headers: &[String]) -> Option<QgCondition> {
    let split_at = |hlen: usize| -> Option<QgCondition> {
        let rest = part.get(hlen..)?;
        let sym = rest.get(1..2)?;
        let op = CmpOp::from_symbol(sym)?;
        if !rest.starts_with(' ') || rest.get(2..3)? != " " {
            return None;
        }
        let value = &rest[3..];
        (!value.is_empty()).then(|| QgCondition {
            header: part[..hlen].to_string(),
            op,
            value: value.to_string(),
        })
    };
    let mut known: Vec<&String> = headers.iter().filter(|h| part.starts_with(h.as_str())).collect();
    known.sort_by_key(|h| std::cmp::Reverse(h.len()));
    if let Some(c) = known.into_iter().find_map(|h| split_at(h.len())) {
        return Some(c);
    }
    [" = ", " > ", " < "]
        .iter()
        .filter_map(|p| part.find(p))
        .min()
        .and_then(split_at)
}

fn condition_phrase(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Eq => "is",
        CmpOp::Gt => "is larger than",
        CmpOp::Lt => "is smaller than",
    }
}

/// Deterministic English question for a query, one template family per
/// return type. Headers and values are copied verbatim.
pub fn template_transcribe(q: &SqlQuery, t: &Table) -> String {
    let col = t.header(q.select_col);
    let lead = match q.ret {
        ReturnType::Select => format!("what is the {col}"),
        ReturnType::Max => format!("what is the highest {col}"),
        ReturnType::Min => format!("what is the lowest {col}"),
        ReturnType::Sum => format!("what is the total {col}"),
        ReturnType::Avg => format!("what is the average {col}"),
        ReturnType::Count => format!("how many {col} are there"),
    };
    if q.conds.is_empty() {
        return format!("{lead}?");
    }
    let conds: Vec<String> = q
        .conds
        .iter()
        .map(|c| format!("{} {} {}", t.header(c.col), condition_phrase(c.op), c.value))
        .collect();
    format!("{lead} when {}?", conds.join(", and "))
}

/// One generated question with its provenance, as stored in JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QgRecord {
    pub table_id: String,
    pub sql: String,
    pub qg_input: String,
    pub question: String,
    pub perplexity: Option<f64>,
}

impl QgRecord {
    pub fn new(t: &Table, input: &QgInput, question: impl Into<String>) -> Result<Self, QgError> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(QgError::Serialization("empty question".into()));
        }
        Ok(Self {
            table_id: t.id().to_string(),
            sql: input.query.render(t),
            qg_input: input.text.clone(),
            question,
            perplexity: None,
        })
    }
}
