//! Perplexity scoring and filtering of generated questions.
//!
//! The default scorer is a word-level n-gram model with add-k smoothing.
//! Any other scorer (an external neural LM, say) plugs into
//! [`filter_by_score`] as a plain score vector.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qg::QgRecord;

const UNK: u32 = 0;
const BOS: u32 = 1;
const EOS: u32 = 2;
const FIRST_WORD: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be 2 or 3, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("sentence has no tokens")]
    EmptySentence,
}

/// Lowercased whitespace tokens.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence.split_whitespace().map(str::to_lowercase).collect()
}

/// Add-k smoothed n-gram model over word tokens.
///
/// Each sentence is padded with `n - 1` start markers and one end marker.
/// The predicted outcome space is every training word, the end marker and a
/// reserved unknown-word token, so `P(w | h) = (c(h w) + k) / (c(h) + k * |outcomes|)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NGramLm {
    n: usize,
    k: f64,
    vocab: HashMap<String, u32>,
    ngrams: HashMap<Vec<u32>, u64>,
    contexts: HashMap<Vec<u32>, u64>,
}

impl NGramLm {
    fn check(n: usize, k: f64) -> Result<(), LmError> {
        if !(2..=3).contains(&n) {
            return Err(LmError::InvalidOrder(n));
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(LmError::InvalidSmoothing(k));
        }
        Ok(())
    }

    /// A model that knows `words` but has seen no n-grams: every outcome is
    /// equally likely.
    pub fn uniform<S: AsRef<str>>(n: usize, k: f64, words: &[S]) -> Result<Self, LmError> {
        Self::check(n, k)?;
        let mut lm = Self {
            n,
            k,
            vocab: HashMap::new(),
            ngrams: HashMap::new(),
            contexts: HashMap::new(),
        };
        for w in words {
            lm.intern(&w.as_ref().to_lowercase());
        }
        Ok(lm)
    }

    pub fn train<S: AsRef<str>>(corpus: &[S], n: usize, k: f64) -> Result<Self, LmError> {
        Self::check(n, k)?;
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| tokenize(s.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let mut lm = Self::uniform::<&str>(n, k, &[])?;
        for words in &sentences {
            for w in words {
                lm.intern(w);
            }
        }
        for words in &sentences {
            let ids = lm.padded(words);
            for gram in ids.windows(n) {
                *lm.ngrams.entry(gram.to_vec()).or_default() += 1;
                *lm.contexts.entry(gram[..n - 1].to_vec()).or_default() += 1;
            }
        }
        Ok(lm)
    }

    fn intern(&mut self, word: &str) {
        let next = FIRST_WORD + self.vocab.len() as u32;
        self.vocab.entry(word.to_string()).or_insert(next);
    }

    fn padded(&self, words: &[String]) -> Vec<u32> {
        let mut ids = vec![BOS; self.n - 1];
        ids.extend(words.iter().map(|w| *self.vocab.get(w).unwrap_or(&UNK)));
        ids.push(EOS);
        ids
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    /// Known types: training words plus the end marker.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len() + 1
    }

    /// Size of the predicted outcome space (known types plus unknown).
    pub fn outcome_space(&self) -> usize {
        self.vocab_size() + 1
    }

    fn prob_ids(&self, gram: &[u32]) -> f64 {
        let joint = self.ngrams.get(gram).copied().unwrap_or(0) as f64;
        let ctx = self.contexts.get(&gram[..self.n - 1]).copied().unwrap_or(0) as f64;
        (joint + self.k) / (ctx + self.k * self.outcome_space() as f64)
    }

    /// Smoothed `P(word | history)`; `history` holds the preceding `n - 1`
    /// words (`"<s>"` for the start marker), `word` may be `"</s>"`.
    pub fn prob(&self, history: &[&str], word: &str) -> f64 {
        let id = |w: &str| match w {
            "<s>" => BOS,
            "</s>" => EOS,
            w => *self.vocab.get(&w.to_lowercase()).unwrap_or(&UNK),
        };
        let mut gram: Vec<u32> = history.iter().map(|w| id(w)).collect();
        gram.push(id(word));
        assert_eq!(gram.len(), self.n, "history must hold n - 1 words");
        self.prob_ids(&gram)
    }

    /// `exp` of the mean negative log probability over the sentence's
    /// tokens and its end marker.
    pub fn perplexity(&self, sentence: &str) -> Result<f64, LmError> {
        let words = tokenize(sentence);
        if words.is_empty() {
            return Err(LmError::EmptySentence);
        }
        let ids = self.padded(&words);
        let grams: Vec<&[u32]> = ids.windows(self.n).collect();
        let nll: f64 = grams.iter().map(|g| -self.prob_ids(g).ln()).sum();
        Ok((nll / grams.len() as f64).exp())
    }
}

/// Number of items kept out of `n` at `keep_fraction`, i.e. `ceil(f * n)`.
/// The product is nudged down by a few ulps so that fractions like 2/3
/// times 3 do not round up past the exact count.
pub fn keep_count(n: usize, keep_fraction: f64) -> usize {
    let raw = keep_fraction * n as f64;
    ((raw - raw.abs() * 1e-12).ceil().max(0.0) as usize).min(n)
}

/// Keeps the `ceil(keep_fraction * len)` lowest-scoring items in their
/// original order. Equal scores favour the earlier item; NaN scores sort
/// last.
///
/// # Panics
/// If `keep_fraction` is outside `(0, 1]` or the lengths differ.
pub fn filter_by_score<T>(items: Vec<T>, scores: &[f64], keep_fraction: f64) -> Vec<T> {
    assert!(
        keep_fraction > 0.0 && keep_fraction <= 1.0,
        "keep_fraction must be in (0, 1]"
    );
    assert_eq!(items.len(), scores.len(), "one score per item");
    let keep = keep_count(items.len(), keep_fraction);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let key = |i: usize| if scores[i].is_nan() { f64::INFINITY } else { scores[i] };
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let mut survive = vec![false; items.len()];
    for &i in &order[..keep] {
        survive[i] = true;
    }
    items
        .into_iter()
        .zip(survive)
        .filter_map(|(item, keep)| keep.then_some(item))
        .collect()
}

/// Scores every record's question, stores the score as its perplexity and
/// keeps the lowest-scoring fraction.
pub fn filter_questions<F>(mut records: Vec<QgRecord>, scorer: F, keep_fraction: f64) -> Vec<QgRecord>
where
    F: Fn(&str) -> f64,
{
    let scores: Vec<f64> = records.iter().map(|r| scorer(&r.question)).collect();
    for (r, &s) in records.iter_mut().zip(&scores) {
        r.perplexity = Some(s);
    }
    filter_by_score(records, &scores, keep_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn add_k_bigram_formula() {
        let k = 0.5;
        let lm = NGramLm::train(&["a b", "a b"], 2, k).unwrap();
        // outcomes: a, b, </s>, unk
        let v = lm.outcome_space() as f64;
        assert_eq!(v, 4.0);
        assert!((lm.prob(&["a"], "b") - (2.0 + k) / (2.0 + k * v)).abs() < 1e-15);
        assert!((lm.prob(&["<s>"], "a") - (2.0 + k) / (2.0 + k * v)).abs() < 1e-15);
        assert!((lm.prob(&["b"], "a") - k / (2.0 + k * v)).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert_eq!(NGramLm::train(&["a"], 5, 1.0).unwrap_err(), LmError::InvalidOrder(5));
        assert_eq!(NGramLm::train(&["a"], 1, 1.0).unwrap_err(), LmError::InvalidOrder(1));
        assert!(matches!(
            NGramLm::train(&["a"], 2, 0.0),
            Err(LmError::InvalidSmoothing(_))
        ));
        assert_eq!(
            NGramLm::train::<&str>(&[], 2, 1.0).unwrap_err(),
            LmError::EmptyCorpus
        );
        assert_eq!(NGramLm::train(&["  "], 2, 1.0).unwrap_err(), LmError::EmptyCorpus);
    }

    #[test]
    fn uniform_model_perplexity() {
        for n in [2, 3] {
            let lm = NGramLm::uniform(n, 0.3, &["x", "y", "z"]).unwrap();
            let v = lm.vocab_size() as f64;
            for s in ["x", "y z x q", "never seen words"] {
                let ppl = lm.perplexity(s).unwrap();
                assert!((ppl - (v + 1.0)).abs() < 1e-9, "{ppl}");
            }
        }
    }

    #[test]
    fn deterministic_limit() {
        let lm = NGramLm::train(&["x"], 2, 1e-12).unwrap();
        let ppl = lm.perplexity("x").unwrap();
        assert!((ppl - 1.0).abs() < 1e-9);
        assert!(ppl > 0.0);
    }

    #[test]
    fn empty_sentence() {
        let lm = NGramLm::train(&["a"], 2, 1.0).unwrap();
        assert_eq!(lm.perplexity("   "), Err(LmError::EmptySentence));
    }

    #[test]
    fn whitespace_and_case_invariant() {
        let lm = NGramLm::train(&["what is the total votes", "who is the candidate"], 3, 0.1).unwrap();
        let a = lm.perplexity("What is the  total votes").unwrap();
        let b = lm.perplexity("what is the total votes   ").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn filter_examples() {
        let items = vec!["r1", "r2", "r3"];
        assert_eq!(filter_by_score(items.clone(), &[3.0, 1.0, 2.0], 2.0 / 3.0), vec!["r2", "r3"]);
        assert_eq!(filter_by_score(items.clone(), &[3.0, 1.0, 2.0], 1.0), items);
        assert_eq!(filter_by_score(items.clone(), &[1.0, 1.0, 1.0], 0.5), vec!["r1", "r2"]);
        assert_eq!(filter_by_score(items, &[f64::NAN, 1.0, 2.0], 0.5), vec!["r2", "r3"]);
        assert_eq!(keep_count(10, 0.9), 9);
        assert_eq!(keep_count(10, 0.91), 10);
        assert_eq!(keep_count(3, 0.01), 1);
        assert_eq!(keep_count(0, 0.5), 0);
    }

    #[test]
    fn filter_sets_perplexity() {
        let rec = |q: &str| QgRecord {
            table_id: "t".into(),
            sql: "SELECT a".into(),
            qg_input: "[S] SELECT a [A] x [C] a".into(),
            question: q.into(),
            perplexity: None,
        };
        let out = filter_questions(vec![rec("aaaa"), rec("b"), rec("cc")], |q| q.len() as f64, 0.5);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].question, "b");
        assert_eq!(out[1].perplexity, Some(2.0));
    }

    proptest! {
        #[test]
        fn survivors_are_a_subsequence_with_lower_mean(
            scores in prop::collection::vec(0.0f64..1000.0, 1..60),
            keep in 0.01f64..=1.0,
        ) {
            let idx: Vec<usize> = (0..scores.len()).collect();
            let kept = filter_by_score(idx, &scores, keep);
            prop_assert_eq!(kept.len(), keep_count(scores.len(), keep));
            prop_assert!(kept.windows(2).all(|w| w[0] < w[1]));
            let mean_in = scores.iter().sum::<f64>() / scores.len() as f64;
            let mean_out = kept.iter().map(|&i| scores[i]).sum::<f64>() / kept.len() as f64;
            prop_assert!(mean_out <= mean_in + 1e-9);
        }
    }
}
