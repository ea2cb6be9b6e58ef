use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{EntitySpan, EntityType};
use crate::corpus::tokenize;
use crate::{Error, Result};

/// Surface n-grams (as normalized token sequences) mapped to entity types.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: HashMap<Vec<String>, EntityType>,
    max_len: usize,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a surface form, tokenized the same way as note text. Empty
    /// surfaces are ignored; a repeated surface keeps its last type.
    pub fn insert(&mut self, surface: &str, entity_type: EntityType) {
        let key = tokenize(surface);
        if key.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(key.len());
        self.entries.insert(key, entity_type);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn get(&self, tokens: &[String]) -> Option<EntityType> {
        self.entries.get(tokens).copied()
    }

    /// Entries sorted by surface, as `(surface, type)`.
    pub fn entries(&self) -> Vec<(String, EntityType)> {
        let mut v: Vec<_> = self.entries.iter().map(|(k, t)| (k.join(" "), *t)).collect();
        v.sort();
        v
    }

    /// `surface form<TAB>type` per line; blank lines and `#` comments skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, ty) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("lexicon line {}: missing tab", i + 1)))?;
            let ty = EntityType::parse(ty.trim())
                .ok_or_else(|| Error::Format(format!("lexicon line {}: unknown type `{ty}`", i + 1)))?;
            lex.insert(surface, ty);
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(s, t)| format!("{s}\t{}\n", t.as_str()))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }
}

/// Greedy left-to-right longest match; spans are disjoint, sorted and start
/// un-negated.
pub fn match_entities(tokens: &[String], lexicon: &Lexicon) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=lexicon.max_len().min(tokens.len() - i))
            .rev()
            .find_map(|n| lexicon.get(&tokens[i..i + n]).map(|t| (n, t)));
        match longest {
            Some((n, ty)) => {
                spans.push(EntitySpan::new(i, i + n, ty));
                i += n;
            }
            None => i += 1,
        }
    }
    spans
}
