//! The SQL subset sampled from and executed against a single table.
//!
//! Queries are a return operator over one column plus a conjunction of at
//! most four `col OP value` conditions. The executor here is the reference
//! semantics for every check the sampler performs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{fold_text, parse_number, DataType, Table};

pub const MAX_WHERE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SqlError {
    #[error("column {col} out of range for a table with {width} columns")]
    ColumnOutOfRange { col: usize, width: usize },
    #[error("{op} needs a numeric column, but column {col} is text")]
    TypeMismatch { op: &'static str, col: usize },
    #[error("{0} over zero matched rows")]
    EmptyAggregate(ReturnType),
    #[error("{0} WHERE clauses exceed the limit of {MAX_WHERE}")]
    TooManyClauses(usize),
    #[error("aggregate result is not finite")]
    NonFinite,
    #[error("cannot parse SQL at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Eq,
    Gt,
    Lt,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        match s {
            "=" => Some(CmpOp::Eq),
            ">" => Some(CmpOp::Gt),
            "<" => Some(CmpOp::Lt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReturnType {
    Select,
    Sum,
    Avg,
    Max,
    Min,
    Count,
}

impl ReturnType {
    /// The operators the sampler draws from, in distribution order.
    pub const SAMPLED: [ReturnType; 5] = [
        ReturnType::Select,
        ReturnType::Sum,
        ReturnType::Avg,
        ReturnType::Max,
        ReturnType::Min,
    ];

    pub const ALL: [ReturnType; 6] = [
        ReturnType::Select,
        ReturnType::Count,
        ReturnType::Min,
        ReturnType::Max,
        ReturnType::Sum,
        ReturnType::Avg,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            ReturnType::Select => "SELECT",
            ReturnType::Sum => "SUM",
            ReturnType::Avg => "AVG",
            ReturnType::Max => "MAX",
            ReturnType::Min => "MIN",
            ReturnType::Count => "COUNT",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.keyword() == s)
    }

    pub fn is_aggregate(self) -> bool {
        self != ReturnType::Select
    }

    /// Aggregates that read the numeric value of the select column.
    pub fn needs_numeric(self) -> bool {
        matches!(
            self,
            ReturnType::Sum | ReturnType::Avg | ReturnType::Max | ReturnType::Min
        )
    }
}

impl fmt::Display for ReturnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WhereClause {
    pub col: usize,
    pub op: CmpOp,
    pub value: String,
}

impl WhereClause {
    pub fn new(col: usize, op: CmpOp, value: impl Into<String>) -> Self {
        Self {
            col,
            op,
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SqlQuery {
    pub ret: ReturnType,
    pub select_col: usize,
    #[serde(rename = "where")]
    pub conds: Vec<WhereClause>,
}

impl SqlQuery {
    pub fn new(ret: ReturnType, select_col: usize, conds: Vec<WhereClause>) -> Self {
        Self {
            ret,
            select_col,
            conds,
        }
    }

    /// Checks the query's structural invariants against `t`.
    pub fn validate(&self, t: &Table) -> Result<(), SqlError> {
        let width = t.num_cols();
        if self.select_col >= width {
            return Err(SqlError::ColumnOutOfRange {
                col: self.select_col,
                width,
            });
        }
        if self.conds.len() > MAX_WHERE {
            return Err(SqlError::TooManyClauses(self.conds.len()));
        }
        if self.ret.needs_numeric() && t.col_type(self.select_col) != DataType::Numeric {
            return Err(SqlError::TypeMismatch {
                op: self.ret.keyword(),
                col: self.select_col,
            });
        }
        for c in &self.conds {
            if c.col >= width {
                return Err(SqlError::ColumnOutOfRange { col: c.col, width });
            }
            if c.op != CmpOp::Eq && t.col_type(c.col) != DataType::Numeric {
                return Err(SqlError::TypeMismatch {
                    op: c.op.symbol(),
                    col: c.col,
                });
            }
        }
        Ok(())
    }

    /// True when some column occurs twice among the select and WHERE columns.
    pub fn has_repeated_columns(&self) -> bool {
        let mut cols: Vec<usize> = self.conds.iter().map(|c| c.col).collect();
        cols.push(self.select_col);
        cols.sort_unstable();
        cols.windows(2).any(|w| w[0] == w[1])
    }

    /// Renders as `SELECT [AGG(]col[)] WHERE col OP val AND ...`.
    pub fn render(&self, t: &Table) -> String {
        let mut s = match self.ret {
            ReturnType::Select => format!("SELECT {}", t.header(self.select_col)),
            agg => format!("SELECT {}({})", agg.keyword(), t.header(self.select_col)),
        };
        for (i, c) in self.conds.iter().enumerate() {
            s.push_str(if i == 0 { " WHERE " } else { " AND " });
            s.push_str(t.header(c.col));
            s.push(' ');
            s.push_str(c.op.symbol());
            s.push(' ');
            s.push_str(&c.value);
        }
        s
    }

    /// Parses the canonical rendering back into a query, resolving headers
    /// against `t`. Where several headers could match at a position, the
    /// longest wins; duplicated header names resolve to their first column.
    pub fn parse(text: &str, t: &Table) -> Result<Self, SqlError> {
        let err = |offset: usize, message: &str| SqlError::Parse {
            offset,
            message: message.to_string(),
        };
        let rest = text
            .strip_prefix("SELECT ")
            .ok_or_else(|| err(0, "expected 'SELECT '"))?;
        let mut pos = "SELECT ".len();

        let mut ret = ReturnType::Select;
        let mut select_col = None;
        let mut after_select = rest;
        for agg in ReturnType::ALL.iter().filter(|r| r.is_aggregate()) {
            let open = format!("{}(", agg.keyword());
            if let Some(inner) = rest.strip_prefix(open.as_str()) {
                if let Some((col, len)) = match_header(inner, t, |tail| tail.starts_with(')')) {
                    ret = *agg;
                    select_col = Some(col);
                    after_select = &inner[len + 1..];
                    pos += open.len() + len + 1;
                    break;
                }
            }
        }
        if select_col.is_none() {
            let (col, len) = match_header(rest, t, |tail| tail.is_empty() || tail.starts_with(" WHERE "))
                .ok_or_else(|| err(pos, "unknown select column"))?;
            select_col = Some(col);
            after_select = &rest[len..];
            pos += len;
        }

        let mut conds = Vec::new();
        if !after_select.is_empty() {
            let mut body = after_select
                .strip_prefix(" WHERE ")
                .ok_or_else(|| err(pos, "expected ' WHERE '"))?;
            pos += " WHERE ".len();
            loop {
                let (col, hlen) = match_header(body, t, |tail| {
                    [" = ", " > ", " < "].iter().any(|p| tail.starts_with(p))
                })
                .ok_or_else(|| err(pos, "unknown condition column"))?;
                let op = CmpOp::from_symbol(&body[hlen + 1..hlen + 2]).expect("matched operator");
                let value_start = hlen + 3;
                let tail = &body[value_start..];
                let value_end = next_condition(tail, t).unwrap_or(tail.len());
                conds.push(WhereClause::new(col, op, &tail[..value_end]));
                if value_end == tail.len() {
                    break;
                }
                let advance = value_start + value_end + " AND ".len();
                body = &body[advance..];
                pos += advance;
            }
        }
        let q = SqlQuery::new(ret, select_col.expect("resolved"), conds);
        q.validate(t)?;
        Ok(q)
    }
}

/// Longest header that prefixes `s` and whose remainder satisfies `follow`.
fn match_header(s: &str, t: &Table, follow: impl Fn(&str) -> bool) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for (i, h) in t.headers().iter().enumerate() {
        if s.starts_with(h.as_str()) && follow(&s[h.len()..]) {
            match best {
                Some((_, len)) if len >= h.len() => {}
                _ => best = Some((i, h.len())),
            }
        }
    }
    best
}

/// Byte offset of the first ` AND ` that begins another `header OP ` condition.
fn next_condition(s: &str, t: &Table) -> Option<usize> {
    s.match_indices(" AND ").map(|(i, _)| i).find(|&i| {
        let after = &s[i + " AND ".len()..];
        match_header(after, t, |tail| {
            [" = ", " > ", " < "].iter().any(|p| tail.starts_with(p))
        })
        .is_some()
    })
}

/// Result of executing a query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Cells(Vec<String>),
    Scalar(f64),
}

impl Answer {
    /// Number of cells; scalars count as one.
    pub fn len(&self) -> usize {
        match self {
            Answer::Cells(c) => c.len(),
            Answer::Scalar(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Display form: cells joined with `"; "`, whole scalars without a
    /// fractional part.
    pub fn render(&self) -> String {
        match self {
            Answer::Cells(c) => c.join("; "),
            Answer::Scalar(v) => format_number(*v),
        }
    }
}

pub fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Answer equality: cell lists compare in order after lowercasing and
/// whitespace normalization, scalars within a relative tolerance of 1e-9.
pub fn answers_equal(a: &Answer, b: &Answer) -> bool {
    match (a, b) {
        (Answer::Cells(x), Answer::Cells(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| fold_text(p) == fold_text(q))
        }
        (Answer::Scalar(x), Answer::Scalar(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()),
        _ => false,
    }
}

/// A clause with its value parsed once, for scanning many rows.
struct Matcher {
    col: usize,
    op: CmpOp,
    number: Option<f64>,
    folded: String,
    numeric_col: bool,
}

impl Matcher {
    fn new(c: &WhereClause, t: &Table) -> Self {
        Self {
            col: c.col,
            op: c.op,
            number: parse_number(&c.value),
            folded: fold_text(&c.value),
            numeric_col: t.col_type(c.col) == DataType::Numeric,
        }
    }

    fn matches(&self, t: &Table, row: usize) -> bool {
        let cell = t.number(row, self.col);
        match self.op {
            CmpOp::Eq => match (cell, self.number) {
                (Some(a), Some(b)) if self.numeric_col => a == b,
                _ => t.folded(row, self.col) == self.folded,
            },
            CmpOp::Gt => matches!((cell, self.number), (Some(a), Some(b)) if a > b),
            CmpOp::Lt => matches!((cell, self.number), (Some(a), Some(b)) if a < b),
        }
    }
}

/// Indices of rows satisfying every clause, in table order.
pub fn matching_rows<'a, I>(conds: I, t: &Table) -> Vec<usize>
where
    I: IntoIterator<Item = &'a WhereClause>,
{
    let matchers: Vec<Matcher> = conds.into_iter().map(|c| Matcher::new(c, t)).collect();
    (0..t.num_rows())
        .filter(|&r| matchers.iter().all(|m| m.matches(t, r)))
        .collect()
}

/// For each clause, which rows satisfy it on its own.
pub fn clause_row_masks(conds: &[WhereClause], t: &Table) -> Vec<Vec<bool>> {
    conds
        .iter()
        .map(|c| {
            let m = Matcher::new(c, t);
            (0..t.num_rows()).map(|r| m.matches(t, r)).collect()
        })
        .collect()
}

/// Applies the return operator to an already-filtered set of rows.
pub fn answer_for_rows(ret: ReturnType, select_col: usize, rows: &[usize], t: &Table) -> Result<Answer, SqlError> {
    match ret {
        ReturnType::Select => Ok(Answer::Cells(
            rows.iter().map(|&r| t.cell(r, select_col).to_string()).collect(),
        )),
        ReturnType::Count => Ok(Answer::Scalar(rows.len() as f64)),
        agg => {
            let values: Vec<f64> = rows
                .iter()
                .filter_map(|&r| t.number(r, select_col))
                .collect();
            let v = match agg {
                ReturnType::Sum => values.iter().sum(),
                _ if values.is_empty() => return Err(SqlError::EmptyAggregate(agg)),
                ReturnType::Avg => values.iter().sum::<f64>() / values.len() as f64,
                ReturnType::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ReturnType::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                _ => unreachable!(),
            };
            if v.is_finite() {
                Ok(Answer::Scalar(v))
            } else {
                Err(SqlError::NonFinite)
            }
        }
    }
}

/// Executes `q` against `t`.
pub fn execute(q: &SqlQuery, t: &Table) -> Result<Answer, SqlError> {
    q.validate(t)?;
    let rows = matching_rows(&q.conds, t);
    answer_for_rows(q.ret, q.select_col, &rows, t)
}
