//! Word and relation vocabularies.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::RawPair;

pub const UNK_WORD: &str = "<unk>";
pub const UNK_RELATION: &str = "<unk-rel>";
pub const ROOT_RELATION: &str = "<root>";

pub const UNK_WORD_ID: usize = 0;
pub const UNK_RELATION_ID: usize = 0;
pub const ROOT_RELATION_ID: usize = 1;

pub const DEFAULT_MIN_RELATION_FREQ: usize = 2;

/// Dense string → index map with stable insertion order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Interner {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    pub fn intern(&mut self, s: &str) -> usize {
        if let Some(&i) = self.index.get(s) {
            return i;
        }
        let i = self.items.len();
        self.items.push(s.to_owned());
        self.index.insert(s.to_owned(), i);
        i
    }

    pub fn get(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn name(&self, i: usize) -> Option<&str> {
        self.items.get(i).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }
}

impl From<Vec<String>> for Interner {
    fn from(items: Vec<String>) -> Self {
        let mut out = Interner::default();
        for s in &items {
            out.intern(s);
        }
        out
    }
}

impl From<Interner> for Vec<String> {
    fn from(i: Interner) -> Self {
        i.items
    }
}

/// Word vocabulary (UNK at 0) and relation vocabulary (UNK-relation at 0,
/// ROOT at 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Interner,
    relations: Interner,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    /// A vocabulary holding only the reserved entries.
    pub fn new() -> Self {
        let mut words = Interner::default();
        words.intern(UNK_WORD);
        let mut relations = Interner::default();
        relations.intern(UNK_RELATION);
        relations.intern(ROOT_RELATION);
        Self { words, relations }
    }

    /// Rebuilds a vocabulary from stored lists. The reserved entries must be
    /// in their slots and entries must be unique.
    pub fn from_lists(words: Vec<String>, relations: Vec<String>) -> Option<Self> {
        let (nw, nr) = (words.len(), relations.len());
        let words = Interner::from(words);
        let relations = Interner::from(relations);
        let ok = words.len() == nw
            && relations.len() == nr
            && words.get(UNK_WORD) == Some(UNK_WORD_ID)
            && relations.get(UNK_RELATION) == Some(UNK_RELATION_ID)
            && relations.get(ROOT_RELATION) == Some(ROOT_RELATION_ID);
        ok.then_some(Self { words, relations })
    }

    pub fn add_word(&mut self, w: &str) -> usize {
        self.words.intern(w)
    }

    pub fn add_relation(&mut self, r: &str) -> usize {
        self.relations.intern(r)
    }

    pub fn word_id(&self, w: &str) -> usize {
        self.words.get(w).unwrap_or(UNK_WORD_ID)
    }

    pub fn relation_id(&self, r: &str) -> usize {
        self.relations.get(r).unwrap_or(UNK_RELATION_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.name(id)
    }

    pub fn relation(&self, id: usize) -> Option<&str> {
        self.relations.name(id)
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn words(&self) -> &[String] {
        self.words.items()
    }

    pub fn relations(&self) -> &[String] {
        self.relations.items()
    }
}

/// Builds the vocabulary from training pairs.
///
/// Every training word is kept. Relations on non-root edges are kept when they
/// occur at least `min_relation_freq` times; rarer ones fall back to
/// UNK-relation. Indices follow first occurrence, so identical corpora give
/// identical vocabularies.
pub fn build_vocab(records: &[RawPair], min_relation_freq: usize) -> Option<Vocab> {
    if records.is_empty() {
        return None;
    }
    let mut vocab = Vocab::new();
    let mut rel_order = Interner::default();
    let mut rel_counts: Vec<usize> = Vec::new();
    for rec in records {
        for tree in [&rec.premise, &rec.hypothesis] {
            for tok in &tree.tokens {
                vocab.add_word(tok);
            }
            for (rel, &head) in tree.rels.iter().zip(&tree.heads) {
                if head == 0 {
                    continue;
                }
                let i = rel_order.intern(rel);
                if i == rel_counts.len() {
                    rel_counts.push(0);
                }
                rel_counts[i] += 1;
            }
        }
    }
    for (rel, &count) in rel_order.items().iter().zip(&rel_counts) {
        if count >= min_relation_freq {
            vocab.add_relation(rel);
        }
    }
    Some(vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RawTree;

    fn tree(tokens: &[&str], heads: &[usize], rels: &[&str]) -> RawTree {
        RawTree {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            heads: heads.to_vec(),
            rels: rels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn pair(p: RawTree, h: RawTree) -> RawPair {
        RawPair {
            premise: p,
            hypothesis: h,
            label: Some("neutral".into()),
        }
    }

    #[test]
    fn reserved_slots() {
        let v = Vocab::new();
        assert_eq!(v.word_id("anything"), UNK_WORD_ID);
        assert_eq!(v.relation_id(ROOT_RELATION), ROOT_RELATION_ID);
        assert_eq!(v.relation_id("nsubj"), UNK_RELATION_ID);
    }

    #[test]
    fn rare_relations_fold_into_unk() {
        let common = tree(&["men", "ride"], &[2, 0], &["nsubj", "root"]);
        let mut records: Vec<RawPair> = (0..50).map(|_| pair(common.clone(), common.clone())).collect();
        records.push(pair(
            tree(&["cat", "sits", "mat"], &[2, 0, 2], &["nsubj", "root", "prep_atop"]),
            common.clone(),
        ));
        let v = build_vocab(&records, 2).unwrap();
        assert_eq!(v.relation_id("prep_atop"), UNK_RELATION_ID);
        assert_ne!(v.relation_id("nsubj"), UNK_RELATION_ID);
        // the root label itself never becomes a relation entry
        assert_eq!(v.relation_id("root"), UNK_RELATION_ID);
        assert_eq!(v.num_relations(), 3);

        let v1 = build_vocab(&records, 1).unwrap();
        assert_ne!(v1.relation_id("prep_atop"), UNK_RELATION_ID);
        assert_eq!(v1.num_relations(), 4);
    }

    #[test]
    fn deterministic_and_complete() {
        let records = vec![pair(
            tree(&["a", "b", "c"], &[0, 1, 1], &["root", "x", "x"]),
            tree(&["c", "d"], &[0, 1], &["root", "y"]),
        )];
        let v1 = build_vocab(&records, 1).unwrap();
        let v2 = build_vocab(&records, 1).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.words(), &["<unk>", "a", "b", "c", "d"]);
        assert!(build_vocab(&[], 2).is_none());
    }

    #[test]
    fn from_lists_validates_reserved() {
        let v = Vocab::new();
        let back = Vocab::from_lists(v.words().to_vec(), v.relations().to_vec()).unwrap();
        assert_eq!(back, v);
        assert!(Vocab::from_lists(vec!["x".into()], v.relations().to_vec()).is_none());
        assert!(Vocab::from_lists(vec!["<unk>".into(), "a".into(), "a".into()], v.relations().to_vec()).is_none());
    }
}
