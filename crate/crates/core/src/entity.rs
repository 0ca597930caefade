//! String-match entity linking between a question and a table.
//!
//! Entities are the table's distinct cell values and its headers. An entity
//! links to a question when at least one of its words occurs in the question;
//! the link records how much of the entity matched and how ambiguous the
//! matched words are across the whole table.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use crate::sql::SqlQuery;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Cell,
    Header,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityLink {
    pub entity_text: String,
    pub entity_kind: EntityKind,
    /// Matched entity words over all entity words.
    pub match_ratio: f64,
    /// `1 / ambiguity`.
    pub certainty: f64,
    /// Table entities (cells and headers pooled) containing every matched word.
    pub ambiguity: usize,
    pub matched: Vec<String>,
}

/// Lowercased words with all non-alphanumeric characters removed.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
struct Entity {
    text: String,
    kind: EntityKind,
    words: BTreeSet<String>,
}

/// The entity pool of one table, built once and reused for every question.
#[derive(Debug, Clone)]
pub struct Linker {
    entities: Vec<Entity>,
}

impl Linker {
    pub fn new(t: &Table) -> Self {
        let mut seen: HashSet<(EntityKind, BTreeSet<String>)> = HashSet::new();
        let mut entities = Vec::new();
        let headers = t.headers().iter().map(|h| (EntityKind::Header, h.as_str()));
        let cells = t.rows().iter().flatten().map(|c| (EntityKind::Cell, c.as_str()));
        for (kind, text) in headers.chain(cells) {
            let ws: BTreeSet<String> = words(text).into_iter().collect();
            if ws.is_empty() || !seen.insert((kind, ws.clone())) {
                continue;
            }
            entities.push(Entity {
                text: text.to_string(),
                kind,
                words: ws,
            });
        }
        Self { entities }
    }

    fn ambiguity(&self, matched: &BTreeSet<String>, kind: EntityKind, own: &BTreeSet<String>) -> usize {
        let pooled = self
            .entities
            .iter()
            .filter(|e| matched.is_subset(&e.words))
            .count();
        let in_pool = self.entities.iter().any(|e| e.kind == kind && &e.words == own);
        if in_pool {
            pooled
        } else {
            pooled + 1
        }
    }

    /// Links one entity (which need not occur in the table) against the
    /// question's words.
    pub fn link_entity(&self, question: &HashSet<String>, text: &str, kind: EntityKind) -> Option<EntityLink> {
        let own: BTreeSet<String> = words(text).into_iter().collect();
        let matched: BTreeSet<String> = own.iter().filter(|w| question.contains(*w)).cloned().collect();
        if matched.is_empty() {
            return None;
        }
        let ambiguity = self.ambiguity(&matched, kind, &own);
        Some(EntityLink {
            entity_text: text.to_string(),
            entity_kind: kind,
            match_ratio: matched.len() as f64 / own.len() as f64,
            certainty: 1.0 / ambiguity as f64,
            ambiguity,
            matched: matched.into_iter().collect(),
        })
    }

    /// Every table entity sharing at least one word with the question.
    pub fn link(&self, question: &str) -> Vec<EntityLink> {
        let q: HashSet<String> = words(question).into_iter().collect();
        self.entities
            .iter()
            .filter_map(|e| self.link_entity(&q, &e.text, e.kind))
            .collect()
    }
}

pub fn link(question: &str, t: &Table) -> Vec<EntityLink> {
    Linker::new(t).link(question)
}

/// Link statistics for one entity kind: linked count, summed match ratio,
/// summed certainty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LinkStats {
    pub count: f64,
    pub ratio_sum: f64,
    pub certainty_sum: f64,
}

impl LinkStats {
    fn add(&mut self, l: &EntityLink) {
        self.count += 1.0;
        self.ratio_sum += l.match_ratio;
        self.certainty_sum += l.certainty;
    }
}

/// Entity features of a logical form: WHERE values as cell entities, select
/// and WHERE columns as header entities, each counted once.
pub fn entity_features_with(linker: &Linker, question: &str, t: &Table, q: &SqlQuery) -> (LinkStats, LinkStats) {
    let qwords: HashSet<String> = words(question).into_iter().collect();
    let mut cells = LinkStats::default();
    let mut headers = LinkStats::default();

    let mut seen_values: HashSet<Vec<String>> = HashSet::new();
    for c in &q.conds {
        if !seen_values.insert(words(&c.value)) {
            continue;
        }
        if let Some(l) = linker.link_entity(&qwords, &c.value, EntityKind::Cell) {
            cells.add(&l);
        }
    }
    let mut cols: Vec<usize> = vec![q.select_col];
    cols.extend(q.conds.iter().map(|c| c.col));
    let mut seen_cols = HashSet::new();
    for col in cols {
        if col >= t.num_cols() || !seen_cols.insert(col) {
            continue;
        }
        if let Some(l) = linker.link_entity(&qwords, t.header(col), EntityKind::Header) {
            headers.add(&l);
        }
    }
    (cells, headers)
}

pub fn entity_features(question: &str, t: &Table, q: &SqlQuery) -> [f64; 6] {
    let (c, h) = entity_features_with(&Linker::new(t), question, t, q);
    [c.count, c.ratio_sum, c.certainty_sum, h.count, h.ratio_sum, h.certainty_sum]
}
