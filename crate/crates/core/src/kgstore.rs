//! Knowledge triples and the untyped "is related" lookup.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::corpus::Vocabulary;

/// Lowercased, trimmed entity label.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

fn unordered(a: String, b: String) -> (String, String) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Immutable set of `(subject, relation, object)` triples with normalized
/// labels. Relation types are kept but ignored by [`TripleStore::related`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripleStore {
    triples: BTreeSet<(String, String, String)>,
    links: BTreeSet<(String, String)>,
}

impl TripleStore {
    pub fn new<I, S>(triples: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: AsRef<str>,
    {
        let mut store = Self::default();
        for (s, r, o) in triples {
            let (s, r, o) = (
                normalize_label(s.as_ref()),
                normalize_label(r.as_ref()),
                normalize_label(o.as_ref()),
            );
            store.links.insert(unordered(s.clone(), o.clone()));
            store.triples.insert((s, r, o));
        }
        store
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.triples
            .iter()
            .map(|(s, r, o)| (s.as_str(), r.as_str(), o.as_str()))
    }

    /// True iff some triple links `a` and `b` in either direction.
    pub fn related(&self, a: &str, b: &str) -> bool {
        self.links
            .contains(&unordered(normalize_label(a), normalize_label(b)))
    }

    /// Maps each triple label that matches a vocabulary word exactly to the
    /// word's node ids.
    pub fn label_index(&self, vocab: &Vocabulary) -> BTreeMap<String, Vec<u32>> {
        let mut index: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        for (s, o) in &self.links {
            for label in [s, o] {
                if index.contains_key(label) {
                    continue;
                }
                let ids: Vec<u32> = vocab
                    .words()
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| normalize_label(w) == *label)
                    .map(|(i, _)| i as u32)
                    .collect();
                if !ids.is_empty() {
                    index.insert(label.clone(), ids);
                }
            }
        }
        index
    }

    /// Unordered label pairs linked by at least one triple.
    pub fn links(&self) -> impl Iterator<Item = (&str, &str)> {
        self.links.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}
