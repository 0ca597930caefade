//! Answer accuracy and its breakdowns by question type and WHERE count.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sql::{answers_equal, Answer, ReturnType, SqlQuery};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold answers")]
    LengthMismatch { preds: usize, golds: usize },
}

fn pct(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * correct as f64 / total as f64
    }
}

/// Percentage of positions whose answers are equal.
pub fn answer_accuracy(preds: &[Answer], golds: &[Answer]) -> Result<f64, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    let correct = preds.iter().zip(golds).filter(|(p, g)| answers_equal(p, g)).count();
    Ok(pct(correct, preds.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalInstance {
    #[serde(default)]
    pub gold_query: Option<SqlQuery>,
    pub gold: Answer,
    pub pred: Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

impl Bucket {
    fn push(&mut self, ok: bool) {
        self.count += 1;
        self.correct += usize::from(ok);
        self.accuracy = pct(self.correct, self.count);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: f64,
    pub total: usize,
    pub correct: usize,
    /// Keyed by lowercase operator name; absent without gold queries.
    pub by_return_type: Option<BTreeMap<String, Bucket>>,
    /// Keyed by number of gold WHERE clauses; absent without gold queries.
    pub by_where_count: Option<BTreeMap<usize, Bucket>>,
}

/// Overall accuracy plus slices by gold return type and gold WHERE count.
/// Slices are only produced when every instance carries its gold query.
pub fn sliced_report(instances: &[EvalInstance]) -> EvalReport {
    let oks: Vec<bool> = instances.iter().map(|i| answers_equal(&i.pred, &i.gold)).collect();
    let correct = oks.iter().filter(|&&b| b).count();
    let with_gold = instances.iter().all(|i| i.gold_query.is_some());
    let (by_return_type, by_where_count) = if with_gold && !instances.is_empty() {
        let mut by_ret: BTreeMap<String, Bucket> = BTreeMap::new();
        let mut by_where: BTreeMap<usize, Bucket> = BTreeMap::new();
        for (inst, &ok) in instances.iter().zip(&oks) {
            let q = inst.gold_query.as_ref().expect("checked above");
            by_ret
                .entry(q.ret.keyword().to_lowercase())
                .or_insert(Bucket { count: 0, correct: 0, accuracy: 0.0 })
                .push(ok);
            by_where
                .entry(q.conds.len())
                .or_insert(Bucket { count: 0, correct: 0, accuracy: 0.0 })
                .push(ok);
        }
        (Some(by_ret), Some(by_where))
    } else {
        (None, None)
    };
    EvalReport {
        overall: pct(correct, instances.len()),
        total: instances.len(),
        correct,
        by_return_type,
        by_where_count,
    }
}

/// Count-weighted mean of bucket accuracies.
pub fn weighted_mean<'a>(buckets: impl IntoIterator<Item = &'a Bucket>) -> f64 {
    let (mut num, mut den) = (0.0, 0usize);
    for b in buckets {
        num += b.accuracy * b.count as f64;
        den += b.count;
    }
    if den == 0 {
        0.0
    } else {
        num / den as f64
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables with two-decimal percentages.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "overall\t{:.2}\t({}/{})", self.overall, self.correct, self.total).unwrap();
        if let Some(by_ret) = &self.by_return_type {
            writeln!(s, "\nreturn type\taccuracy\tcount").unwrap();
            for ret in ReturnType::ALL {
                let key = ret.keyword().to_lowercase();
                if let Some(b) = by_ret.get(&key) {
                    writeln!(s, "{key}\t{:.2}\t{}", b.accuracy, b.count).unwrap();
                }
            }
        }
        if let Some(by_where) = &self.by_where_count {
            writeln!(s, "\nwhere clauses\taccuracy\tcount").unwrap();
            for (n, b) in by_where {
                writeln!(s, "{n}\t{:.2}\t{}", b.accuracy, b.count).unwrap();
            }
        }
        s
    }

    /// WHERE-count buckets as CSV (`where_count,count,correct,accuracy`).
    pub fn where_count_csv(&self) -> String {
        let mut s = String::from("where_count,count,correct,accuracy\n");
        for (n, b) in self.by_where_count.iter().flatten() {
            writeln!(s, "{n},{},{},{:.2}", b.count, b.correct, b.accuracy).unwrap();
        }
        s
    }
}

/// Real ids followed by `min(real, synthetic)` synthetic ids drawn without
/// replacement.
pub fn build_composite_dev<R: Rng + ?Sized>(real: &[String], synthetic: &[String], rng: &mut R) -> Vec<String> {
    let take = real.len().min(synthetic.len());
    let mut out = real.to_vec();
    out.extend(
        index::sample(rng, synthetic.len(), take)
            .into_iter()
            .map(|i| synthetic[i].clone()),
    );
    out
}
