//! Reranking a parser's top candidate logical forms.
//!
//! Each candidate gets twelve features, six from entity linking and six from
//! the logical form itself, and a boosted classifier trained on
//! correct/incorrect candidates picks the best-scoring one.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{entity_features_with, Linker};
use crate::gbt::{self, GbtConfig, GbtError, GbtModel, TrainReport};
use crate::sql::{answers_equal, execute, Answer, ReturnType, SqlError, SqlQuery};
use crate::table::Table;

pub const NUM_FEATURES: usize = 12;
pub const MAX_CANDIDATES: usize = 5;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "cell_count",
    "cell_ratio_sum",
    "cell_certainty_sum",
    "header_count",
    "header_ratio_sum",
    "header_certainty_sum",
    "model_prob",
    "answer_cells",
    "has_count",
    "has_select",
    "where_count",
    "repeated_columns",
];

#[derive(Debug, Error)]
pub enum RerankError {
    #[error("no candidates to rerank")]
    EmptyCandidates,
    #[error("{0} candidates exceed the top-{MAX_CANDIDATES} limit")]
    TooManyCandidates(usize),
    #[error("candidate is missing its features")]
    MissingFeatures,
    #[error(transparent)]
    Model(#[from] GbtError),
    #[error("candidate {index}: {source}")]
    Sql { index: usize, source: SqlError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; NUM_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub query: SqlQuery,
    pub model_prob: f64,
    /// The parser's answer, when it reported one.
    pub predicted_answer: Option<Answer>,
    pub features: Option<FeatureVector>,
    pub label: Option<bool>,
}

impl Candidate {
    pub fn new(query: SqlQuery, model_prob: f64) -> Self {
        Self {
            query,
            model_prob,
            predicted_answer: None,
            features: None,
            label: None,
        }
    }
}

/// Features plus whether execution failed (in which case the answer length
/// is 0).
pub fn featurize_with(linker: &Linker, question: &str, t: &Table, query: &SqlQuery, model_prob: f64) -> (FeatureVector, bool) {
    let (cells, headers) = entity_features_with(linker, question, t, query);
    let (answer_len, degraded) = match execute(query, t) {
        Ok(a) => (a.len() as f64, false),
        Err(_) => (0.0, true),
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let f = [
        cells.count,
        cells.ratio_sum,
        cells.certainty_sum,
        headers.count,
        headers.ratio_sum,
        headers.certainty_sum,
        model_prob.clamp(0.0, 1.0),
        answer_len,
        flag(query.ret == ReturnType::Count),
        flag(query.ret == ReturnType::Select),
        query.conds.len() as f64,
        flag(query.has_repeated_columns()),
    ];
    (FeatureVector(f), degraded)
}

pub fn featurize(question: &str, t: &Table, c: &Candidate) -> (FeatureVector, bool) {
    featurize_with(&Linker::new(t), question, t, &c.query, c.model_prob)
}

/// Trains the reranking classifier on labelled feature vectors.
pub fn train(examples: &[(FeatureVector, bool)], cfg: &GbtConfig) -> Result<(GbtModel, TrainReport), RerankError> {
    let xs: Vec<Vec<f64>> = examples.iter().map(|(f, _)| f.0.to_vec()).collect();
    let ys: Vec<bool> = examples.iter().map(|(_, y)| *y).collect();
    if xs.is_empty() {
        return Err(GbtError::DegenerateLabels.into());
    }
    Ok(gbt::train(&xs, &ys, cfg)?)
}

/// Index of the candidate the classifier scores highest. Ties go to the
/// higher model probability, then to the earlier candidate.
pub fn rerank_index(candidates: &[Candidate], m: &GbtModel) -> Result<usize, RerankError> {
    if candidates.is_empty() {
        return Err(RerankError::EmptyCandidates);
    }
    if candidates.len() > MAX_CANDIDATES {
        return Err(RerankError::TooManyCandidates(candidates.len()));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, c) in candidates.iter().enumerate() {
        let f = c.features.ok_or(RerankError::MissingFeatures)?;
        let s = m.score(f.as_slice());
        let better = s > best_score || (s == best_score && c.model_prob > candidates[best].model_prob);
        if better {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// Featurizes any candidate lacking features, then returns the classifier's
/// pick.
pub fn rerank<'a>(question: &str, t: &Table, candidates: &'a mut [Candidate], m: &GbtModel) -> Result<&'a Candidate, RerankError> {
    let linker = Linker::new(t);
    for c in candidates.iter_mut() {
        if c.features.is_none() {
            c.features = Some(featurize_with(&linker, question, t, &c.query, c.model_prob).0);
        }
    }
    let i = rerank_index(candidates, m)?;
    Ok(&candidates[i])
}

/// Top-1, oracle and reranked accuracy over labelled candidate sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RerankMetrics {
    pub questions: usize,
    pub base_at_1: f64,
    pub oracle_at_k: f64,
    pub reranked_at_1: f64,
}

pub fn evaluate(sets: &[Vec<Candidate>], m: &GbtModel) -> Result<RerankMetrics, RerankError> {
    let mut base = 0usize;
    let mut oracle = 0usize;
    let mut reranked = 0usize;
    for set in sets {
        let correct = |c: &Candidate| c.label == Some(true);
        base += usize::from(set.first().is_some_and(correct));
        oracle += usize::from(set.iter().any(correct));
        reranked += usize::from(correct(&set[rerank_index(set, m)?]));
    }
    let pct = |n: usize| 100.0 * n as f64 / sets.len().max(1) as f64;
    Ok(RerankMetrics {
        questions: sets.len(),
        base_at_1: pct(base),
        oracle_at_k: pct(oracle),
        reranked_at_1: pct(reranked),
    })
}

/// A candidate as stored in the candidate log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedCandidate {
    pub sql: String,
    pub prob: f64,
    #[serde(default)]
    pub answer: Option<Answer>,
    #[serde(default)]
    pub label: Option<bool>,
}

/// One question with its parser candidates, as stored in the candidate log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateLogEntry {
    pub qid: String,
    pub table_id: String,
    pub question: String,
    pub candidates: Vec<LoggedCandidate>,
}

impl CandidateLogEntry {
    /// Parses and featurizes the logged candidates, sorted by descending
    /// probability. Missing labels are filled in by comparing the executed
    /// answer against `gold` when one is given.
    pub fn to_candidates(&self, t: &Table, gold: Option<&Answer>) -> Result<Vec<Candidate>, RerankError> {
        let linker = Linker::new(t);
        let mut out = Vec::with_capacity(self.candidates.len());
        for (index, lc) in self.candidates.iter().enumerate() {
            let query = SqlQuery::parse(&lc.sql, t).map_err(|source| RerankError::Sql { index, source })?;
            let (features, _) = featurize_with(&linker, &self.question, t, &query, lc.prob);
            let label = lc.label.or_else(|| {
                gold.map(|g| execute(&query, t).is_ok_and(|a| answers_equal(&a, g)))
            });
            out.push(Candidate {
                query,
                model_prob: lc.prob,
                predicted_answer: lc.answer.clone(),
                features: Some(features),
                label,
            });
        }
        // stable, so equal probabilities keep log order
        out.sort_by(|a, b| b.model_prob.total_cmp(&a.model_prob));
        Ok(out)
    }
}
