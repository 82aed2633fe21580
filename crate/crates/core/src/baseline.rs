//! Frequency baseline: recommend the identifiers seen most often in training.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metamodel::{ElementKind, Identifier, Metamodel};
use crate::nn::Candidate;

/// Identifier counts per element kind over a training corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub per_kind: BTreeMap<ElementKind, BTreeMap<String, usize>>,
}

impl FrequencyTable {
    pub fn from_corpus<'a>(corpus: impl IntoIterator<Item = &'a Metamodel>) -> Self {
        let mut table = Self::default();
        for m in corpus {
            for class in &m.classes {
                table.add(ElementKind::Class, class.name.as_str());
                for a in &class.attributes {
                    table.add(ElementKind::Attribute, a.name.as_str());
                }
                for a in &class.associations {
                    table.add(ElementKind::Association, a.name.as_str());
                }
            }
        }
        table
    }

    pub fn add(&mut self, kind: ElementKind, ident: &str) {
        *self.per_kind.entry(kind).or_default().entry(ident.to_string()).or_default() += 1;
    }

    /// Occurrences of `ident` across all kinds.
    pub fn occurrences(&self, ident: &str) -> usize {
        self.per_kind.values().filter_map(|m| m.get(ident)).sum()
    }
}

/// Top-`k` identifiers of `kind` by training frequency; ties are broken
/// lexicographically. Scores are log relative frequencies.
pub fn baseline_rank(table: &FrequencyTable, kind: ElementKind, k: usize) -> Vec<Candidate> {
    let Some(counts) = table.per_kind.get(&kind) else {
        return Vec::new();
    };
    let total: usize = counts.values().sum();
    let mut entries: Vec<(&String, usize)> = counts.iter().map(|(s, &c)| (s, c)).collect();
    // BTreeMap order is already lexicographic; a stable sort keeps it for ties.
    entries.sort_by(|a, b| b.1.cmp(&a.1));
    entries
        .into_iter()
        .take(k)
        .filter_map(|(text, count)| {
            Some(Candidate {
                text: Identifier::new(text.clone()).ok()?,
                score: libm::log(count as f64 / total as f64),
            })
        })
        .collect()
}
