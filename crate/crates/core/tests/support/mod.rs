//! Shared generators and brute-force oracles for the integration tests.
//! Nothing here calls the code under test except to build inputs.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use tabsynth::rerank::{Candidate, FeatureVector, NUM_FEATURES};
use tabsynth::sql::{Answer, CmpOp, ReturnType, SqlQuery, WhereClause};
use tabsynth::table::{DataType, Table};

const WORDS: [&str; 12] = [
    "red", "green", "blue", "north", "south", "river", "city", "united", "club", "party", "lake", "star",
];

/// A random table with `cols` columns and `rows` rows: a mix of small-domain
/// numeric columns (some with thousands separators) and one- or two-word
/// text columns, with the odd empty cell.
pub fn random_table_sized<R: Rng>(rng: &mut R, id: &str, cols: usize, rows: usize) -> Table {
    let headers: Vec<String> = (0..cols).map(|c| format!("Col{c} {}", WORDS[c % WORDS.len()])).collect();
    let kinds: Vec<u8> = (0..cols).map(|_| rng.gen_range(0..3)).collect();
    let domain: Vec<usize> = (0..cols).map(|_| rng.gen_range(2..12)).collect();
    let data = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|c| {
                    if rng.gen_bool(0.02) {
                        return String::new();
                    }
                    let k = rng.gen_range(0..domain[c]);
                    match kinds[c] {
                        0 => format!("{}", k * 3),
                        1 => format!("{},{:03}", 1 + k, (k * 37) % 1000),
                        _ if k % 3 == 0 => WORDS[k % WORDS.len()].to_string(),
                        _ => format!("{} {}", WORDS[k % WORDS.len()], WORDS[(k * 5 + 1) % WORDS.len()]),
                    }
                })
                .collect()
        })
        .collect();
    Table::new(id, headers, data).expect("generated table is valid")
}

/// 5 to 12 columns, 5 to 200 rows.
pub fn random_table<R: Rng>(rng: &mut R, id: &str) -> Table {
    let cols = rng.gen_range(5..=12);
    let rows = rng.gen_range(5..=200);
    random_table_sized(rng, id, cols, rows)
}

fn oracle_number(s: &str) -> Option<f64> {
    let s: String = s.trim().replace(',', "");
    let unsigned = s.trim_start_matches(['+', '-']);
    if s.len() - unsigned.len() > 1 {
        return None;
    }
    let ok = !unsigned.is_empty()
        && unsigned.chars().all(|c| c.is_ascii_digit() || c == '.')
        && unsigned.matches('.').count() <= 1
        && unsigned.chars().any(|c| c.is_ascii_digit());
    if ok {
        s.parse().ok()
    } else {
        None
    }
}

fn fold_case(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

fn oracle_clause(t: &Table, row: usize, c: &WhereClause) -> bool {
    let cell = &t.rows()[row][c.col];
    let nums = (oracle_number(cell), oracle_number(&c.value));
    match c.op {
        CmpOp::Eq => match nums {
            (Some(a), Some(b)) if t.col_types()[c.col] == DataType::Numeric => a == b,
            _ => fold_case(cell) == fold_case(&c.value),
        },
        CmpOp::Gt => matches!(nums, (Some(a), Some(b)) if a > b),
        CmpOp::Lt => matches!(nums, (Some(a), Some(b)) if a < b),
    }
}

pub fn oracle_rows(t: &Table, conds: &[WhereClause]) -> Vec<usize> {
    let mut out = Vec::new();
    for r in 0..t.rows().len() {
        if conds.iter().all(|c| oracle_clause(t, r, c)) {
            out.push(r);
        }
    }
    out
}

/// `None` where the operator is undefined (an empty numeric aggregate).
pub fn oracle_answer(t: &Table, ret: ReturnType, col: usize, rows: &[usize]) -> Option<Answer> {
    let nums: Vec<f64> = rows.iter().filter_map(|&r| oracle_number(&t.rows()[r][col])).collect();
    Some(match ret {
        ReturnType::Select => Answer::Cells(rows.iter().map(|&r| t.rows()[r][col].clone()).collect()),
        ReturnType::Count => Answer::Scalar(rows.len() as f64),
        ReturnType::Sum => Answer::Scalar(nums.iter().sum()),
        ReturnType::Avg if !nums.is_empty() => Answer::Scalar(nums.iter().sum::<f64>() / nums.len() as f64),
        ReturnType::Max if !nums.is_empty() => Answer::Scalar(nums.iter().cloned().fold(f64::MIN, f64::max)),
        ReturnType::Min if !nums.is_empty() => Answer::Scalar(nums.iter().cloned().fold(f64::MAX, f64::min)),
        _ => return None,
    })
}

pub fn oracle_execute(t: &Table, q: &SqlQuery) -> Option<Answer> {
    oracle_answer(t, q.ret, q.select_col, &oracle_rows(t, &q.conds))
}

pub fn oracle_same(a: &Answer, b: &Answer) -> bool {
    match (a, b) {
        (Answer::Cells(x), Answer::Cells(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| fold_case(p) == fold_case(q))
        }
        (Answer::Scalar(x), Answer::Scalar(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => false,
    }
}

/// All subsets of `items`, by recursion.
fn subsets<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    match items.split_first() {
        None => vec![Vec::new()],
        Some((head, rest)) => {
            let tails = subsets(rest);
            let mut out = tails.clone();
            for mut s in tails {
                s.insert(0, head.clone());
                out.push(s);
            }
            out
        }
    }
}

/// No proper subset of the WHERE clauses (the empty one included) gives the
/// same answer.
pub fn oracle_minimal(t: &Table, q: &SqlQuery) -> bool {
    let Some(full) = oracle_execute(t, q) else {
        return false;
    };
    subsets(&q.conds)
        .into_iter()
        .filter(|s| s.len() < q.conds.len())
        .all(|s| match oracle_answer(t, q.ret, q.select_col, &oracle_rows(t, &s)) {
            Some(a) => !oracle_same(&a, &full),
            None => true,
        })
}

/// A random (not necessarily valid or minimal) query with up to four
/// clauses drawn from the table's own cells.
pub fn random_query<R: Rng>(rng: &mut R, t: &Table) -> SqlQuery {
    let n = rng.gen_range(0..=4.min(t.num_cols() - 1));
    let mut cols: Vec<usize> = (0..t.num_cols()).collect();
    cols.shuffle(rng);
    let select_col = cols[n];
    let conds = cols[..n]
        .iter()
        .map(|&c| {
            let v = t.cell(rng.gen_range(0..t.num_rows()), c).to_string();
            let op = if t.col_type(c) == DataType::Numeric {
                [CmpOp::Eq, CmpOp::Gt, CmpOp::Lt][rng.gen_range(0..3)]
            } else {
                CmpOp::Eq
            };
            WhereClause::new(c, op, v)
        })
        .collect();
    let ret = if t.col_type(select_col) == DataType::Numeric {
        ReturnType::ALL[rng.gen_range(0..ReturnType::ALL.len())]
    } else {
        [ReturnType::Select, ReturnType::Count][rng.gen_range(0..2)]
    };
    SqlQuery::new(ret, select_col, conds)
}

/// Every simple upward path from `from`, as (end node, length) pairs.
pub fn all_upward_paths(parents: &BTreeMap<&str, Vec<&str>>, from: &str) -> Vec<(String, usize)> {
    fn go<'a>(
        parents: &BTreeMap<&'a str, Vec<&'a str>>,
        node: &'a str,
        trail: &mut Vec<&'a str>,
        out: &mut Vec<(String, usize)>,
    ) {
        out.push((node.to_string(), trail.len() - 1));
        for &p in parents.get(node).into_iter().flatten() {
            if !trail.contains(&p) {
                trail.push(p);
                go(parents, p, trail, out);
                trail.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(parents, from, &mut vec![from], &mut out);
    out
}

fn candidate(prob: f64, correct: bool, features: [f64; NUM_FEATURES]) -> Candidate {
    let mut f = features;
    f[6] = prob;
    let mut c = Candidate::new(SqlQuery::new(ReturnType::Select, 0, Vec::new()), prob);
    c.features = Some(FeatureVector(f));
    c.label = Some(correct);
    c
}

/// Five candidates per question with descending model probability. Out of
/// every 100 questions, 67 have the correct candidate on top, 18 have it in
/// positions 2 to 5 and 15 have none, so oracle@5 exceeds base@1 by 18
/// points. Cell-link features are noisy but higher for correct candidates.
pub fn synthetic_candidate_log<R: Rng>(rng: &mut R, questions: usize) -> Vec<Vec<Candidate>> {
    (0..questions)
        .map(|q| {
            let slot = q % 100;
            let correct_at = if slot < 67 {
                Some(0)
            } else if slot < 85 {
                Some(1 + (slot - 67) % 4)
            } else {
                None
            };
            let mut probs: Vec<f64> = (0..5).map(|_| rng.gen_range(0.01..1.0)).collect();
            probs.sort_by(|a, b| b.total_cmp(a));
            let total: f64 = probs.iter().sum();
            (0..5)
                .map(|i| {
                    let ok = correct_at == Some(i);
                    let mut f = [0.0; NUM_FEATURES];
                    let links = if ok { rng.gen_range(1..=3) } else { rng.gen_range(0..=2) };
                    f[0] = links as f64;
                    f[1] = if ok { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.75) } * links as f64;
                    f[2] = rng.gen_range(0.3..1.0) * links as f64;
                    f[3] = rng.gen_range(1..=2) as f64;
                    f[4] = f[3] * rng.gen_range(0.5..1.0);
                    f[5] = f[4];
                    f[7] = 1.0;
                    f[9] = 1.0;
                    f[10] = rng.gen_range(1..=3) as f64;
                    candidate(probs[i] / total, ok, f)
                })
                .collect()
        })
        .collect()
}

/// Labels given by `x[6] > 0.5`, with a margin around the boundary.
pub fn separable_examples<R: Rng>(rng: &mut R, n: usize) -> Vec<(FeatureVector, bool)> {
    (0..n)
        .map(|_| {
            let mut f = [0.0; NUM_FEATURES];
            for v in &mut f {
                *v = rng.gen_range(0.0..1.0);
            }
            let x = if rng.gen_bool(0.5) { rng.gen_range(0.0..0.45) } else { rng.gen_range(0.55..1.0) };
            f[6] = x;
            (FeatureVector(f), x > 0.5)
        })
        .collect()
}
