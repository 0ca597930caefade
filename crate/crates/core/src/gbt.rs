//! Gradient-boosted regression trees for binary classification.
//!
//! Trees are grown depth-first with exact greedy splits on the second-order
//! expansion of the logistic loss; leaves hold Newton steps
//! `-G / (H + lambda)`. Each round is accepted only if it lowers the
//! training loss, halving the tree's contribution until it does.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_FORMAT: &str = "tabsynth-gbt";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum GbtError {
    #[error("training needs at least one example of each label")]
    DegenerateLabels,
    #[error("example {index} has {found} features, expected {expected}")]
    FeatureCount {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    /// Minimum hessian mass on each side of a split.
    pub min_child_weight: f64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A tree stored as a flat node list; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] < *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn scale(&mut self, factor: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= factor;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub format: String,
    pub version: u32,
    pub n_features: usize,
    pub max_depth: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Mean logistic loss of raw scores against 0/1 labels.
pub fn logistic_loss(scores: &[f64], labels: &[bool]) -> f64 {
    let total: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let m = if y { s } else { -s };
            // log(1 + exp(-m)), stable for large |m|
            if m > 0.0 {
                (-m).exp().ln_1p()
            } else {
                -m + m.exp().ln_1p()
            }
        })
        .sum();
    total / scores.len() as f64
}

impl GbtModel {
    /// Raw additive score (log-odds).
    pub fn score(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }

    pub fn validate(&self) -> Result<(), GbtError> {
        let bad = |m: String| Err(GbtError::InvalidModel(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unknown format {:?}", self.format));
        }
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        for (ti, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return bad(format!("tree {ti} is empty"));
            }
            for (ni, node) in tree.nodes.iter().enumerate() {
                if let Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    if *feature >= self.n_features {
                        return bad(format!("tree {ti} splits on feature {feature}"));
                    }
                    // children always follow their parent, which rules out cycles
                    if *left <= ni || *right <= ni || *left >= tree.nodes.len() || *right >= tree.nodes.len() {
                        return bad(format!("tree {ti} node {ni} has invalid children"));
                    }
                }
            }
            if tree.depth() > self.max_depth {
                return bad(format!("tree {ti} deeper than {}", self.max_depth));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GbtError> {
        let m: Self = serde_json::from_str(s).map_err(|e| GbtError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Training loss before the first tree and after each accepted tree.
    pub loss_history: Vec<f64>,
}

struct Grower<'a> {
    xs: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a GbtConfig,
    n_features: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf_value(&self, rows: &[usize]) -> f64 {
        let g: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        -g / (h + self.cfg.lambda)
    }

    fn best_split(&self, rows: &[usize]) -> Option<(usize, f64, f64)> {
        let lambda = self.cfg.lambda;
        let g_all: f64 = rows.iter().map(|&i| self.grad[i]).sum();
        let h_all: f64 = rows.iter().map(|&i| self.hess[i]).sum();
        let parent = g_all * g_all / (h_all + lambda);
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted = rows.to_vec();
        for f in 0..self.n_features {
            sorted.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]).then(a.cmp(&b)));
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..sorted.len() - 1 {
                let i = sorted[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let (lo, hi) = (self.xs[i][f], self.xs[sorted[w + 1]][f]);
                if lo == hi {
                    continue;
                }
                let (gr, hr) = (g_all - gl, h_all - hl);
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
                if gain > 1e-12 && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, lo + (hi - lo) / 2.0, gain));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(rows),
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return id;
        }
        let Some((feature, threshold, _)) = self.best_split(rows) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.xs[i][feature] < threshold);
        let left = self.grow(&l, depth + 1);
        let right = self.grow(&r, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Fits a boosted ensemble on feature rows with binary labels.
pub fn train(xs: &[Vec<f64>], labels: &[bool], cfg: &GbtConfig) -> Result<(GbtModel, TrainReport), GbtError> {
    assert_eq!(xs.len(), labels.len(), "one label per example");
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(GbtError::DegenerateLabels);
    }
    let n_features = xs[0].len();
    if let Some((index, x)) = xs.iter().enumerate().find(|(_, x)| x.len() != n_features) {
        return Err(GbtError::FeatureCount {
            index,
            expected: n_features,
            found: x.len(),
        });
    }
    let rate = pos as f64 / labels.len() as f64;
    let mut model = GbtModel {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        n_features,
        max_depth: cfg.max_depth,
        base_score: (rate / (1.0 - rate)).ln(),
        learning_rate: cfg.learning_rate,
        trees: Vec::with_capacity(cfg.n_trees),
    };
    let mut scores = vec![model.base_score; xs.len()];
    let mut loss = logistic_loss(&scores, labels);
    let mut history = vec![loss];
    let all: Vec<usize> = (0..xs.len()).collect();

    for _ in 0..cfg.n_trees {
        let mut grad = Vec::with_capacity(xs.len());
        let mut hess = Vec::with_capacity(xs.len());
        for (&s, &y) in scores.iter().zip(labels) {
            let p = sigmoid(s);
            grad.push(p - if y { 1.0 } else { 0.0 });
            hess.push((p * (1.0 - p)).max(1e-16));
        }
        let mut grower = Grower {
            xs,
            grad: &grad,
            hess: &hess,
            cfg,
            n_features,
            nodes: Vec::new(),
        };
        grower.grow(&all, 0);
        let mut tree = Tree { nodes: grower.nodes };

        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = scores
                .iter()
                .zip(xs)
                .map(|(&s, x)| s + cfg.learning_rate * tree.predict(x))
                .collect();
            let trial_loss = logistic_loss(&trial, labels);
            if trial_loss <= loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            tree.scale(0.5);
        }
        let Some((trial, trial_loss)) = accepted else {
            break;
        };
        let converged = loss - trial_loss < 1e-15;
        scores = trial;
        loss = trial_loss;
        history.push(loss);
        model.trees.push(tree);
        if converged {
            break;
        }
    }
    Ok((model, TrainReport { loss_history: history }))
}
