use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Special token standing for every out-of-vocabulary word.
pub const RARE: &str = "<rare>";
pub const DEFAULT_MIN_COUNT: u64 = 10;

/// Token ↔ index map with corpus counts.
///
/// Index 0 is always [`RARE`], whose count is the total count of the
/// tokens it absorbed. The remaining tokens are ordered by descending
/// count, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

pub fn build_vocab<'a, D, T>(documents: D, min_count: u64) -> Vocabulary
where
    D: IntoIterator<Item = T>,
    T: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<&'a str, u64> = HashMap::new();
    for doc in documents {
        for tok in doc {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut rare_count = counts.remove(RARE).unwrap_or(0);
    let mut kept: Vec<(&str, u64)> = Vec::new();
    for (tok, c) in counts {
        if c >= min_count {
            kept.push((tok, c));
        } else {
            rare_count += c;
        }
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = Vec::with_capacity(kept.len() + 1);
    let mut cnts = Vec::with_capacity(kept.len() + 1);
    tokens.push(RARE.to_string());
    cnts.push(rare_count);
    for (t, c) in kept {
        tokens.push(t.to_string());
        cnts.push(c);
    }
    Vocabulary::from_parts(tokens, cnts)
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, counts: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            counts,
            index,
        }
    }

    /// Number of entries including [`RARE`].
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when the vocabulary holds nothing but [`RARE`].
    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn rare_index(&self) -> usize {
        0
    }

    pub fn contains(&self, token: &str) -> bool {
        token != RARE && self.index.contains_key(token)
    }

    /// Index of `token`, or the [`RARE`] index for unknown tokens.
    pub fn encode(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn encode_all<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Vec<usize> {
        tokens.into_iter().map(|t| self.encode(t)).collect()
    }

    pub fn decode(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `token<TAB>count` per line in index order.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (t, c) in self.tokens.iter().zip(&self.counts) {
            s.push_str(t);
            s.push('\t');
            s.push_str(&c.to_string());
            s.push('\n');
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("vocab line {}: missing tab", i + 1)))?;
            let count = count
                .trim()
                .parse()
                .map_err(|e| Error::Format(format!("vocab line {}: {e}", i + 1)))?;
            tokens.push(tok.to_string());
            counts.push(count);
        }
        if tokens.first().map(String::as_str) != Some(RARE) {
            return Err(Error::Format(format!("vocab must start with {RARE}")));
        }
        let v = Self::from_parts(tokens, counts);
        if v.index.len() != v.tokens.len() {
            return Err(Error::Format("vocab has duplicate tokens".into()));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Rng;
    use proptest::prelude::*;

    fn corpus(spec: &[(&str, usize)]) -> Vec<Vec<&'static str>> {
        let mut doc = Vec::new();
        for &(t, n) in spec {
            let t: &'static str = Box::leak(t.to_string().into_boxed_str());
            doc.extend(std::iter::repeat_n(t, n));
        }
        vec![doc]
    }

    #[test]
    fn min_count_boundary() {
        let docs = corpus(&[("sepsis", 10), ("zebra", 9)]);
        let v = build_vocab(docs.iter().map(|d| d.iter().copied()), 10);
        assert!(v.contains("sepsis"));
        assert!(!v.contains("zebra"));
        assert_eq!(v.encode("zebra"), v.rare_index());
        assert_eq!(v.count(0), 9);
    }

    #[test]
    fn ties_are_lexicographic() {
        let docs = corpus(&[("beta", 3), ("alpha", 3), ("gamma", 5)]);
        let v = build_vocab(docs.iter().map(|d| d.iter().copied()), 1);
        assert_eq!(v.tokens(), &["<rare>", "gamma", "alpha", "beta"]);
    }

    #[test]
    fn empty_corpus_is_valid() {
        let v = build_vocab(Vec::<Vec<&str>>::new(), 10);
        assert!(v.is_empty());
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn tsv_round_trip() {
        let docs = corpus(&[("a", 4), ("b", 2)]);
        let v = build_vocab(docs.iter().map(|d| d.iter().copied()), 1);
        assert_eq!(Vocabulary::from_tsv(&v.to_tsv()).unwrap(), v);
        assert!(Vocabulary::from_tsv("a\t1\n").is_err());
    }

    proptest! {
        #[test]
        fn index_round_trip_and_shuffle_invariance(
            docs in proptest::collection::vec(proptest::collection::vec("[a-e]{1,2}", 0..15), 0..12),
            seed in 0u64..1000,
        ) {
            let v = build_vocab(docs.iter().map(|d| d.iter().map(String::as_str)), 2);
            for i in 0..v.len() {
                prop_assert_eq!(v.encode(v.decode(i)), i);
            }
            let mut shuffled = docs.clone();
            Rng::new(seed).shuffle(&mut shuffled);
            let w = build_vocab(shuffled.iter().map(|d| d.iter().map(String::as_str)), 2);
            prop_assert_eq!(v, w);
        }
    }
}
