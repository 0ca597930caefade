//! Controllable SQL sampling from a single table.
//!
//! Each emitted query is drawn by first fixing a WHERE-clause count and a
//! return operator from their configured distributions, then rejection
//! sampling conditions and a select column until the query passes both
//! quality checks:
//!
//! * **minimality**: no proper subset of the WHERE clauses (the empty set
//!   included) reproduces the answer, so every condition is load-bearing;
//! * **aggregate validity**: an aggregate matches at least two rows, so the
//!   aggregation itself is load-bearing.
//!
//! Conditions are built around an anchor row: every column value is read off
//! one randomly chosen row, so the conjunction always matches at least that
//! row. Marginally, Eq values are still uniform over the column's cells.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, substream_seed};
use crate::sql::{
    answer_for_rows, answers_equal, clause_row_masks, execute, matching_rows, Answer, CmpOp, ReturnType, SqlError,
    SqlQuery, WhereClause, MAX_WHERE,
};
use crate::table::{parse_number, DataType, Table};

/// Anchor rows tried by [`generate_where_clauses`] before giving up.
const WHERE_ATTEMPTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("prior corpus is empty")]
    EmptyCorpus,
    #[error("invalid sampler config: {0}")]
    InvalidConfig(String),
    #[error("cannot place {requested} WHERE clauses on distinct columns (at most {max})")]
    InvalidWhereCount { requested: usize, max: usize },
    #[error("table needs at least 2 columns, has {0}")]
    TooFewColumns(usize),
    #[error("target number of queries must be at least 1")]
    ZeroTarget,
    #[error("no satisfiable WHERE clause set found")]
    Unsatisfiable,
    #[error("no WHERE count with positive probability fits this table")]
    NoFeasibleWhereCount,
    #[error("query check failed: {0}")]
    CheckFailed(SqlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Probabilities of 1, 2, 3 and 4 WHERE clauses.
    pub where_count_dist: [f64; 4],
    /// Probabilities of SELECT, SUM, AVG, MAX and MIN.
    pub ret_type_dist: [f64; 5],
    pub max_attempts_per_query: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            where_count_dist: [0.60, 0.25, 0.10, 0.05],
            ret_type_dist: [0.70, 0.075, 0.075, 0.075, 0.075],
            max_attempts_per_query: 200,
            seed: 0,
        }
    }
}

fn check_dist(name: &str, dist: &[f64]) -> Result<(), SampleError> {
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(SampleError::InvalidConfig(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SampleError::InvalidConfig(format!(
            "{name} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SampleError> {
        check_dist("where_count_dist", &self.where_count_dist)?;
        check_dist("ret_type_dist", &self.ret_type_dist)?;
        if self.max_attempts_per_query == 0 {
            return Err(SampleError::InvalidConfig(
                "max_attempts_per_query must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Observed WHERE-count and return-type histograms of a query corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorStats {
    pub where_count_hist: [u64; 4],
    pub ret_type_hist: [u64; 5],
}

fn normalize<const N: usize>(hist: &[u64; N]) -> Option<[f64; N]> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return None;
    }
    let mut out = [0.0; N];
    for (o, &c) in out.iter_mut().zip(hist) {
        *o = c as f64 / total as f64;
    }
    Some(out)
}

impl PriorStats {
    /// Turns the histograms into a config, keeping `base`'s attempt budget
    /// and seed.
    pub fn to_config(&self, base: &SamplerConfig) -> Result<SamplerConfig, SampleError> {
        let where_count_dist = normalize(&self.where_count_hist)
            .ok_or_else(|| SampleError::InvalidConfig("empty WHERE-count histogram".into()))?;
        let ret_type_dist = normalize(&self.ret_type_hist).ok_or_else(|| {
            SampleError::InvalidConfig("corpus has no SELECT/SUM/AVG/MAX/MIN queries".into())
        })?;
        let cfg = SamplerConfig {
            where_count_dist,
            ret_type_dist,
            ..base.clone()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Histograms a corpus of queries. WHERE counts are clamped into 1..=4;
/// COUNT queries contribute to the WHERE histogram only.
pub fn estimate_priors(corpus: &[SqlQuery]) -> Result<PriorStats, SampleError> {
    if corpus.is_empty() {
        return Err(SampleError::EmptyCorpus);
    }
    let mut stats = PriorStats {
        where_count_hist: [0; 4],
        ret_type_hist: [0; 5],
    };
    for q in corpus {
        let n = q.conds.len().clamp(1, MAX_WHERE);
        stats.where_count_hist[n - 1] += 1;
        if let Some(i) = ReturnType::SAMPLED.iter().position(|&r| r == q.ret) {
            stats.ret_type_hist[i] += 1;
        }
    }
    Ok(stats)
}

/// Index drawn from the categorical distribution given by `weights`
/// (need not be normalized; must have positive total).
fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).expect("positive total")
}

/// Samples `n` conditions on `n` distinct columns that jointly match at
/// least one row. Gt/Lt only appear on numeric columns, with thresholds taken
/// from the column's own cells.
pub fn generate_where_clauses<R: Rng + ?Sized>(
    t: &Table,
    n: usize,
    rng: &mut R,
) -> Result<Vec<WhereClause>, SampleError> {
    let max = MAX_WHERE.min(t.num_cols());
    if n == 0 || n > max {
        return Err(SampleError::InvalidWhereCount { requested: n, max });
    }
    for _ in 0..WHERE_ATTEMPTS {
        let anchor = rng.gen_range(0..t.num_rows());
        let usable: Vec<usize> = (0..t.num_cols())
            .filter(|&c| !t.cell(anchor, c).trim().is_empty())
            .collect();
        if usable.len() < n {
            continue;
        }
        let mut conds: Vec<WhereClause> = index::sample(rng, usable.len(), n)
            .into_iter()
            .map(|i| clause_from_anchor(t, usable[i], anchor, rng))
            .collect();
        conds.sort_by_key(|c| c.col);
        if !matching_rows(&conds, t).is_empty() {
            return Ok(conds);
        }
    }
    Err(SampleError::Unsatisfiable)
}

fn clause_from_anchor<R: Rng + ?Sized>(t: &Table, col: usize, anchor: usize, rng: &mut R) -> WhereClause {
    let cell = t.cell(anchor, col).trim();
    if t.col_type(col) == DataType::Numeric {
        if let Some(v) = parse_number(cell) {
            let op = match rng.gen_range(0..3) {
                0 => CmpOp::Eq,
                1 => CmpOp::Gt,
                _ => CmpOp::Lt,
            };
            if op != CmpOp::Eq {
                // A Gt threshold must sit strictly below the anchor value (Lt
                // strictly above); fall back to the other side, then to Eq.
                let below = |x: f64| x < v;
                let above = |x: f64| x > v;
                let sides: [(CmpOp, &dyn Fn(f64) -> bool); 2] = if op == CmpOp::Gt {
                    [(CmpOp::Gt, &below), (CmpOp::Lt, &above)]
                } else {
                    [(CmpOp::Lt, &above), (CmpOp::Gt, &below)]
                };
                for (side_op, keep) in sides {
                    let pool: Vec<&str> = t
                        .column(col)
                        .map(str::trim)
                        .filter(|c| parse_number(c).is_some_and(keep))
                        .collect();
                    if !pool.is_empty() {
                        let pick = pool[rng.gen_range(0..pool.len())];
                        return WhereClause::new(col, side_op, pick);
                    }
                }
            }
        }
    }
    WhereClause::new(col, CmpOp::Eq, cell)
}

/// True iff no proper subset of the WHERE clauses, including the empty set,
/// yields an answer equal to the full query's.
pub fn check_minimality(q: &SqlQuery, t: &Table) -> Result<bool, SampleError> {
    let full = execute(q, t).map_err(SampleError::CheckFailed)?;
    let n = q.conds.len();
    let masks = clause_row_masks(&q.conds, t);
    for mask in 0u32..(1u32 << n) - 1 {
        let rows: Vec<usize> = (0..t.num_rows())
            .filter(|&r| (0..n).all(|i| mask & (1 << i) == 0 || masks[i][r]))
            .collect();
        if let Ok(ans) = answer_for_rows(q.ret, q.select_col, &rows, t) {
            if answers_equal(&ans, &full) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// SELECT is always valid; an aggregate must match at least two rows.
pub fn check_aggregate_validity(q: &SqlQuery, t: &Table) -> bool {
    !q.ret.is_aggregate() || matching_rows(&q.conds, t).len() >= 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledQuery {
    pub query: SqlQuery,
    pub answer: Answer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub queries: Vec<SampledQuery>,
    /// Set when the attempt budget ran out before `target_num` queries.
    pub exhausted: bool,
    pub attempts: usize,
}

/// Samples up to `target_num` distinct queries that pass both checks.
///
/// The WHERE-count distribution is conditioned on counts the table can host
/// (at most `num_cols - 1`, leaving a select column), and numeric aggregates
/// are dropped for tables without a numeric column.
pub fn generate_sqls<R: Rng + ?Sized>(
    t: &Table,
    target_num: usize,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<SampleOutcome, SampleError> {
    cfg.validate()?;
    if target_num == 0 {
        return Err(SampleError::ZeroTarget);
    }
    if t.num_cols() < 2 {
        return Err(SampleError::TooFewColumns(t.num_cols()));
    }
    let max_where = MAX_WHERE.min(t.num_cols() - 1);
    let where_weights = &cfg.where_count_dist[..max_where];
    if where_weights.iter().sum::<f64>() <= 0.0 {
        return Err(SampleError::NoFeasibleWhereCount);
    }
    let has_numeric = t.col_types().contains(&DataType::Numeric);
    let mut ret_weights = cfg.ret_type_dist;
    if !has_numeric {
        ret_weights[1..].fill(0.0);
    }
    if ret_weights.iter().sum::<f64>() <= 0.0 {
        return Ok(SampleOutcome {
            queries: Vec::new(),
            exhausted: true,
            attempts: 0,
        });
    }

    let budget = target_num.saturating_mul(cfg.max_attempts_per_query);
    let mut seen: HashSet<String> = HashSet::new();
    let mut queries = Vec::with_capacity(target_num);
    let mut attempts = 0usize;

    while queries.len() < target_num && attempts < budget {
        let n = sample_index(where_weights, rng) + 1;
        let ret = ReturnType::SAMPLED[sample_index(&ret_weights, rng)];
        for _ in 0..cfg.max_attempts_per_query {
            if attempts >= budget {
                break;
            }
            attempts += 1;
            let conds = match generate_where_clauses(t, n, rng) {
                Ok(c) => c,
                Err(SampleError::Unsatisfiable) => continue,
                Err(e) => return Err(e),
            };
            let choices: Vec<usize> = (0..t.num_cols())
                .filter(|c| conds.iter().all(|w| w.col != *c))
                .filter(|&c| !ret.needs_numeric() || t.col_type(c) == DataType::Numeric)
                .collect();
            if choices.is_empty() {
                continue;
            }
            let select_col = choices[rng.gen_range(0..choices.len())];
            let query = SqlQuery::new(ret, select_col, conds);
            let key = query.render(t);
            if seen.contains(&key) {
                continue;
            }
            let Ok(answer) = execute(&query, t) else {
                continue;
            };
            if !check_aggregate_validity(&query, t) || !check_minimality(&query, t)? {
                continue;
            }
            seen.insert(key);
            queries.push(SampledQuery { query, answer });
            break;
        }
    }
    Ok(SampleOutcome {
        exhausted: queries.len() < target_num,
        queries,
        attempts,
    })
}

/// Seed of the per-table stream: a function of the run seed and the table id
/// only, so results do not depend on corpus order or thread count.
pub fn table_seed(cfg: &SamplerConfig, table_id: &str) -> u64 {
    substream_seed(cfg.seed, table_id)
}

/// Samples every table on the current rayon pool; results come back in
/// table order.
pub fn sample_corpus(
    tables: &[Table],
    target_num: usize,
    cfg: &SamplerConfig,
) -> Vec<Result<SampleOutcome, SampleError>> {
    tables
        .par_iter()
        .map(|t| {
            let mut rng = seeded(table_seed(cfg, t.id()));
            generate_sqls(t, target_num, cfg, &mut rng)
        })
        .collect()
}

/// One line of the sampler's JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub table_id: String,
    pub sql: String,
    pub ret: ReturnType,
    pub select_col: usize,
    #[serde(rename = "where")]
    pub conds: Vec<WhereClause>,
    pub answer: Answer,
}

impl QueryRecord {
    pub fn new(t: &Table, s: &SampledQuery) -> Self {
        Self {
            table_id: t.id().to_string(),
            sql: s.query.render(t),
            ret: s.query.ret,
            select_col: s.query.select_col,
            conds: s.query.conds.clone(),
            answer: s.answer.clone(),
        }
    }

    pub fn query(&self) -> SqlQuery {
        SqlQuery::new(self.ret, self.select_col, self.conds.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::table::fixtures::election;

    fn eq(col: usize, v: &str) -> WhereClause {
        WhereClause::new(col, CmpOp::Eq, v)
    }

    #[test]
    fn priors_count_where_and_ret() {
        let corpus = vec![
            SqlQuery::new(ReturnType::Select, 0, vec![eq(1, "a")]),
            SqlQuery::new(ReturnType::Select, 0, vec![eq(1, "a")]),
            SqlQuery::new(ReturnType::Select, 0, vec![eq(1, "a"), eq(2, "b")]),
        ];
        let p = estimate_priors(&corpus).unwrap();
        assert_eq!(p.where_count_hist, [2, 1, 0, 0]);
        let cfg = p.to_config(&SamplerConfig::default()).unwrap();
        assert_eq!(cfg.ret_type_dist, [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(estimate_priors(&[]), Err(SampleError::EmptyCorpus));
    }

    #[test]
    fn priors_clamp_where_counts() {
        let zero = SqlQuery::new(ReturnType::Max, 0, vec![]);
        let five = SqlQuery::new(ReturnType::Min, 0, vec![eq(1, "x"); 5]);
        let p = estimate_priors(&[zero, five]).unwrap();
        assert_eq!(p.where_count_hist, [1, 0, 0, 1]);
        assert_eq!(p.ret_type_hist, [0, 0, 0, 1, 1]);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SamplerConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.where_count_dist = [0.5, 0.5, 0.5, -0.5];
        assert!(cfg.validate().is_err());
        cfg.where_count_dist = [0.5, 0.4, 0.0, 0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn single_where_on_election_matches() {
        let t = election();
        let mut rng = seeded(3);
        for _ in 0..200 {
            let conds = generate_where_clauses(&t, 1, &mut rng).unwrap();
            assert_eq!(conds.len(), 1);
            assert!(!matching_rows(&conds, &t).is_empty());
            if conds[0].col != 2 {
                assert_eq!(conds[0].op, CmpOp::Eq);
            }
            if conds[0].col == 0 && conds[0].value == "Labour" {
                let q = SqlQuery::new(ReturnType::Select, 1, conds.clone());
                assert_eq!(execute(&q, &t).unwrap().len(), 1);
            }
        }
    }

    #[test]
    fn where_count_bounds() {
        let t = election();
        let mut rng = seeded(0);
        assert!(matches!(
            generate_where_clauses(&t, 4, &mut rng),
            Err(SampleError::InvalidWhereCount { requested: 4, max: 3 })
        ));
        assert!(generate_where_clauses(&t, 0, &mut rng).is_err());
        let three = generate_where_clauses(&t, 3, &mut rng).unwrap();
        let cols: Vec<usize> = three.iter().map(|c| c.col).collect();
        assert_eq!(cols, vec![0, 1, 2]);
    }

    #[test]
    fn minimality_examples() {
        let t = election();
        let redundant = SqlQuery::new(
            ReturnType::Select,
            2,
            vec![eq(0, "Conservatives"), eq(1, "Andrew Turner")],
        );
        assert!(!check_minimality(&redundant, &t).unwrap());
        let lookup = SqlQuery::new(ReturnType::Select, 1, vec![eq(0, "Labour")]);
        assert!(check_minimality(&lookup, &t).unwrap());
        let dup = SqlQuery::new(ReturnType::Select, 1, vec![eq(0, "Labour"), eq(0, "Labour")]);
        assert!(!check_minimality(&dup, &t).unwrap());
        let no_where = SqlQuery::new(ReturnType::Select, 1, vec![]);
        assert!(check_minimality(&no_where, &t).unwrap());
        let broken = SqlQuery::new(ReturnType::Avg, 2, vec![eq(0, "Green")]);
        assert!(matches!(
            check_minimality(&broken, &t),
            Err(SampleError::CheckFailed(SqlError::EmptyAggregate(_)))
        ));
    }

    #[test]
    fn aggregate_validity_examples() {
        let t = election();
        let one_row = SqlQuery::new(ReturnType::Max, 2, vec![eq(0, "Labour")]);
        assert!(!check_aggregate_validity(&one_row, &t));
        let two_rows = SqlQuery::new(
            ReturnType::Sum,
            2,
            vec![WhereClause::new(2, CmpOp::Gt, "11,484")],
        );
        assert!(check_aggregate_validity(&two_rows, &t));
        let select = SqlQuery::new(ReturnType::Select, 1, vec![eq(0, "Labour")]);
        assert!(check_aggregate_validity(&select, &t));
    }

    #[test]
    fn election_sampling_respects_checks() {
        let t = election();
        let cfg = SamplerConfig {
            seed: 11,
            ..Default::default()
        };
        let mut rng = seeded(cfg.seed);
        let out = generate_sqls(&t, 50, &cfg, &mut rng).unwrap();
        assert!(!out.queries.is_empty());
        let mut keys = HashSet::new();
        for s in &out.queries {
            let q = &s.query;
            assert!(keys.insert(q.render(&t)));
            assert!(q.conds.iter().all(|c| c.col != q.select_col));
            if q.ret.is_aggregate() {
                assert_eq!(t.col_type(q.select_col), DataType::Numeric);
                assert!(matching_rows(&q.conds, &t).len() >= 2);
            }
            assert!(check_minimality(q, &t).unwrap());
            assert_eq!(execute(q, &t).unwrap(), s.answer);
        }
    }

    #[test]
    fn one_column_table_rejected() {
        let t = Table::new("x", vec!["A".into()], vec![vec!["1".into()]]).unwrap();
        let mut rng = seeded(0);
        assert_eq!(
            generate_sqls(&t, 5, &SamplerConfig::default(), &mut rng),
            Err(SampleError::TooFewColumns(1))
        );
        assert_eq!(
            generate_sqls(&election(), 0, &SamplerConfig::default(), &mut rng),
            Err(SampleError::ZeroTarget)
        );
    }

    #[test]
    fn small_table_exhausts_softly() {
        let t = Table::new(
            "tiny",
            vec!["A".into(), "B".into()],
            vec![vec!["x".into(), "y".into()], vec!["z".into(), "w".into()]],
        )
        .unwrap();
        let cfg = SamplerConfig {
            max_attempts_per_query: 20,
            ..Default::default()
        };
        let out = generate_sqls(&t, 50, &cfg, &mut seeded(1)).unwrap();
        assert!(out.exhausted);
        assert!(out.queries.len() <= 4);
        assert!(!out.queries.is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let t = election();
        let cfg = SamplerConfig::default();
        let a = generate_sqls(&t, 20, &cfg, &mut seeded(5)).unwrap();
        let b = generate_sqls(&t, 20, &cfg, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corpus_sampling_independent_of_threads() {
        let tables = vec![election(), {
            let mut rows = Vec::new();
            for i in 0..12 {
                rows.push(vec![format!("t{}", i % 3), format!("{}", i * 7 % 10), format!("r{i}")]);
            }
            Table::new("other", vec!["g".into(), "n".into(), "name".into()], rows).unwrap()
        }];
        let cfg = SamplerConfig::default();
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sample_corpus(&tables, 10, &cfg));
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sample_corpus(&tables, 10, &cfg));
        assert_eq!(serial, parallel);
    }
}
