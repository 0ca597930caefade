//! Topic assignment over a category graph and topic-shift split tooling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopicError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("no main topic reachable from {0:?}")]
    Unreachable(String),
    #[error("topic {0:?} does not occur in any assignment")]
    UnknownTopic(String),
    #[error("topic group {0:?} has no instances")]
    UnknownTopicGroup(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("malformed input at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Directed child-to-parent graph of articles and categories.
#[derive(Debug, Clone, Default)]
pub struct CategoryGraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    parents: Vec<BTreeSet<usize>>,
    main_topics: BTreeSet<usize>,
}

impl CategoryGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn node(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        self.parents.push(BTreeSet::new());
        i
    }

    /// Adds a node with no edges (isolated articles, say).
    pub fn add_node(&mut self, name: &str) {
        self.node(name);
    }

    /// Adds a `child -> parent` edge, creating both nodes as needed.
    /// Duplicate edges collapse.
    pub fn add_edge(&mut self, child: &str, parent: &str) {
        let c = self.node(child);
        let p = self.node(parent);
        self.parents[c].insert(p);
    }

    pub fn add_main_topic(&mut self, name: &str) {
        let i = self.node(name);
        self.main_topics.insert(i);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn main_topics(&self) -> impl Iterator<Item = &str> {
        self.main_topics.iter().map(|&i| self.names[i].as_str())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    /// Nodes with no incoming edge that are not main topics: the articles of
    /// a graph that lists only article-to-category links at its bottom layer.
    pub fn leaves(&self) -> Vec<&str> {
        let mut has_child = vec![false; self.names.len()];
        for ps in &self.parents {
            for &p in ps {
                has_child[p] = true;
            }
        }
        let mut out: Vec<&str> = (0..self.names.len())
            .filter(|&i| !has_child[i] && !self.main_topics.contains(&i))
            .map(|i| self.names[i].as_str())
            .collect();
        out.sort_unstable();
        out
    }

    /// Reads `child<TAB>parent` lines; blank lines and `#` comments skipped.
    pub fn read_edges<R: BufRead>(&mut self, reader: R) -> Result<(), TopicError> {
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TopicError::Malformed {
                line: n + 1,
                message: e.to_string(),
            })?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (child, parent) = line.split_once('\t').ok_or_else(|| TopicError::Malformed {
                line: n + 1,
                message: "expected child<TAB>parent".into(),
            })?;
            if parent.contains('\t') || child.trim().is_empty() || parent.trim().is_empty() {
                return Err(TopicError::Malformed {
                    line: n + 1,
                    message: "expected exactly two non-empty fields".into(),
                });
            }
            self.add_edge(child.trim(), parent.trim());
        }
        Ok(())
    }

    /// Reads one main topic per line.
    pub fn read_main_topics<R: BufRead>(&mut self, reader: R) -> Result<(), TopicError> {
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| TopicError::Malformed {
                line: n + 1,
                message: e.to_string(),
            })?;
            let name = line.trim();
            if !name.is_empty() && !name.starts_with('#') {
                self.add_main_topic(name);
            }
        }
        Ok(())
    }

    /// Breadth-first distances and shortest-path counts upward from `start`.
    /// Each node is expanded once, so cycles are harmless.
    fn bfs(&self, start: usize) -> (Vec<Option<usize>>, Vec<u128>) {
        let mut dist = vec![None; self.names.len()];
        let mut paths = vec![0u128; self.names.len()];
        dist[start] = Some(0);
        paths[start] = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes have a distance");
            for &p in &self.parents[u] {
                match dist[p] {
                    None => {
                        dist[p] = Some(du + 1);
                        paths[p] = paths[u];
                        queue.push_back(p);
                    }
                    Some(dp) if dp == du + 1 => paths[p] = paths[p].saturating_add(paths[u]),
                    _ => {}
                }
            }
        }
        (dist, paths)
    }

    /// Reachable main topics ordered nearest first: by distance, then by
    /// number of distinct shortest paths (more first), then by name.
    pub fn ranked_topics(&self, article: &str) -> Result<Vec<TopicDistance>, TopicError> {
        let &start = self
            .index
            .get(article)
            .ok_or_else(|| TopicError::UnknownNode(article.to_string()))?;
        let (dist, paths) = self.bfs(start);
        let mut out: Vec<TopicDistance> = self
            .main_topics
            .iter()
            .filter_map(|&m| {
                dist[m].map(|d| TopicDistance {
                    topic: self.names[m].clone(),
                    distance: d,
                    shortest_paths: paths[m],
                })
            })
            .collect();
        out.sort_by(|a, b| {
            a.distance
                .cmp(&b.distance)
                .then(b.shortest_paths.cmp(&a.shortest_paths))
                .then(a.topic.cmp(&b.topic))
        });
        Ok(out)
    }

    pub fn assign_topic(&self, article: &str) -> Result<TopicDistance, TopicError> {
        self.ranked_topics(article)?
            .into_iter()
            .next()
            .ok_or_else(|| TopicError::Unreachable(article.to_string()))
    }

    /// The first `k` topics of [`ranked_topics`](Self::ranked_topics).
    pub fn nearest_topics(&self, article: &str, k: usize) -> Result<Vec<String>, TopicError> {
        Ok(self
            .ranked_topics(article)?
            .into_iter()
            .take(k)
            .map(|t| t.topic)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicDistance {
    pub topic: String,
    pub distance: usize,
    pub shortest_paths: u128,
}

/// Jaccard similarity of two topics over articles' nearest-topic lists:
/// articles listing both over articles listing either.
pub fn topic_jaccard(assignments: &BTreeMap<String, Vec<String>>, a: &str, b: &str) -> Result<f64, TopicError> {
    let mut both = 0usize;
    let mut either = 0usize;
    let (mut seen_a, mut seen_b) = (false, false);
    for topics in assignments.values() {
        let has_a = topics.iter().any(|t| t == a);
        let has_b = topics.iter().any(|t| t == b);
        seen_a |= has_a;
        seen_b |= has_b;
        both += usize::from(has_a && has_b);
        either += usize::from(has_a || has_b);
    }
    if !seen_a {
        return Err(TopicError::UnknownTopic(a.to_string()));
    }
    if !seen_b {
        return Err(TopicError::UnknownTopic(b.to_string()));
    }
    Ok(both as f64 / either as f64)
}

/// Lowercased words with leading and trailing punctuation trimmed.
pub fn vocab_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
}

fn frequencies<S: AsRef<str>>(corpus: &[S]) -> HashMap<String, usize> {
    let mut freq = HashMap::new();
    for s in corpus {
        for w in vocab_words(s.as_ref()) {
            *freq.entry(w).or_insert(0) += 1;
        }
    }
    freq
}

/// Words ordered by descending frequency, ties lexicographic.
fn by_frequency(freq: HashMap<String, usize>) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = freq.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Percentage of the `top_k` most frequent test words that occur anywhere in
/// the training questions.
pub fn vocab_overlap<S: AsRef<str>, T: AsRef<str>>(train: &[S], test: &[T], top_k: usize) -> Result<f64, TopicError> {
    if train.is_empty() || test.is_empty() {
        return Err(TopicError::EmptyInput("question lists must be non-empty"));
    }
    if top_k == 0 {
        return Err(TopicError::EmptyInput("top_k must be at least 1"));
    }
    let top: Vec<String> = by_frequency(frequencies(test))
        .into_iter()
        .take(top_k)
        .map(|(w, _)| w)
        .collect();
    if top.is_empty() {
        return Err(TopicError::EmptyInput("test questions contain no words"));
    }
    let train_vocab: HashSet<String> = train.iter().flat_map(|s| vocab_words(s.as_ref())).collect();
    let hits = top.iter().filter(|w| train_vocab.contains(*w)).count();
    Ok(100.0 * hits as f64 / top.len() as f64)
}

/// Frequent corpus words missing from `base_vocab`: frequency strictly above
/// `min_freq`, most frequent first, at most `max_terms`.
pub fn extract_topic_vocab<S: AsRef<str>>(
    corpus: &[S],
    base_vocab: &HashSet<String>,
    min_freq: usize,
    max_terms: usize,
) -> Vec<String> {
    by_frequency(frequencies(corpus))
        .into_iter()
        .filter(|(w, f)| *f > min_freq && !base_vocab.contains(w))
        .take(max_terms)
        .map(|(w, _)| w)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fold {
    Train,
    Dev,
    Test,
}

impl std::str::FromStr for Fold {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Fold::Train),
            "dev" => Ok(Fold::Dev),
            "test" => Ok(Fold::Test),
            other => Err(format!("unknown fold {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub group: String,
    pub fold: Fold,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TopicSplit {
    pub target: String,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

/// Leave-one-out split: every instance of `target` is test; the other
/// groups' train and dev instances keep their folds, and their test
/// instances are left out.
pub fn build_loo_splits(instances: &[Instance], target: &str) -> Result<TopicSplit, TopicError> {
    if !instances.iter().any(|i| i.group == target) {
        return Err(TopicError::UnknownTopicGroup(target.to_string()));
    }
    let mut split = TopicSplit {
        target: target.to_string(),
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for inst in instances {
        if inst.group == target {
            split.test.push(inst.id.clone());
        } else {
            match inst.fold {
                Fold::Train => split.train.push(inst.id.clone()),
                Fold::Dev => split.dev.push(inst.id.clone()),
                Fold::Test => {}
            }
        }
    }
    Ok(split)
}

/// The five topic groups and the main topics each one gathers.
pub const TOPIC_GROUPS: [(&str, &[&str]); 5] = [
    (
        "Politics",
        &[
            "Crime", "Geography", "Government", "Law", "Military", "Policy", "Politics", "Society", "World",
        ],
    ),
    (
        "Culture",
        &[
            "Entertainment",
            "Events",
            "History",
            "Human behavior",
            "Humanities",
            "Life",
            "Culture",
            "Mass media",
            "Music",
            "Organizations",
        ],
    ),
    ("Sports", &["Sports"]),
    ("People", &["People"]),
    (
        "Misc",
        &[
            "Academic disciplines",
            "Business",
            "Concepts",
            "Economy",
            "Education",
            "Energy",
            "Engineering",
            "Food and Drink",
            "Health",
            "Industry",
            "Knowledge",
            "Language",
            "Mathematics",
            "Mind",
            "Objects",
            "Philosophy",
            "Religion",
            "Nature",
            "Science and technology",
            "Universe",
        ],
    ),
];

/// Group of a main topic under [`TOPIC_GROUPS`] (case-insensitive).
pub fn topic_group(topic: &str) -> Option<&'static str> {
    TOPIC_GROUPS
        .iter()
        .find(|(_, members)| members.iter().any(|m| m.eq_ignore_ascii_case(topic)))
        .map(|(g, _)| *g)
}
