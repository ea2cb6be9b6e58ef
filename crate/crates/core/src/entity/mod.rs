//! Clinical entity extraction with negation filtering.
//!
//! The default backend is deterministic: a longest-match [`Lexicon`] over
//! five entity types followed by rule-based negation scoping. A trainable
//! hierarchical tagger ([`tagger`]) can stand in for the lexicon.

mod lexicon;
mod negation;
pub mod tagger;
mod tags;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_terminator, DayDocument};

pub use lexicon::{match_entities, Lexicon};
pub use negation::{detect_negation, NegationConfig, DEFAULT_TRIGGERS};
pub use tags::{spans_from_tags, validate_bio, Tag, NUM_TAGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Condition,
    Medication,
    Test,
    Treatment,
    Procedure,
}

impl EntityType {
    pub const ALL: [EntityType; 5] = [
        EntityType::Condition,
        EntityType::Medication,
        EntityType::Test,
        EntityType::Treatment,
        EntityType::Procedure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Condition => "condition",
            EntityType::Medication => "medication",
            EntityType::Test => "test",
            EntityType::Treatment => "treatment",
            EntityType::Procedure => "procedure",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Half-open token range `[start, end)` recognised as one entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
    pub negated: bool,
}

impl EntitySpan {
    pub fn new(start: usize, end: usize, entity_type: EntityType) -> Self {
        Self {
            start,
            end,
            entity_type,
            negated: false,
        }
    }

    pub fn surface<'a>(&self, tokens: &'a [String]) -> &'a [String] {
        &tokens[self.start..self.end]
    }

    /// Surface tokens joined with `_` into a single corpus token.
    pub fn joined_surface(&self, tokens: &[String]) -> String {
        self.surface(tokens).join("_")
    }
}

pub fn filter_negated(spans: Vec<EntitySpan>) -> Vec<EntitySpan> {
    spans.into_iter().filter(|s| !s.negated).collect()
}

/// Token sequence of surviving entities for one day document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCorpusDoc {
    pub stay_id: u64,
    pub day: u32,
    pub tokens: Vec<String>,
}

/// Where entity spans come from.
#[derive(Debug, Clone)]
pub enum EntityBackend {
    Lexicon(Lexicon),
    Tagger(Box<tagger::Tagger>),
}

/// Span extraction plus negation handling for whole day documents.
#[derive(Debug, Clone)]
pub struct EntityExtractor {
    pub backend: EntityBackend,
    pub negation: NegationConfig,
    /// When false, negated entities are kept (ablation of the filter).
    pub filter_negated: bool,
}

impl EntityExtractor {
    pub fn lexicon(lexicon: Lexicon, negation: NegationConfig) -> Self {
        Self {
            backend: EntityBackend::Lexicon(lexicon),
            negation,
            filter_negated: true,
        }
    }

    /// Spans with negation flags over the full token stream (terminators
    /// included).
    pub fn spans(&self, tokens: &[String]) -> Vec<EntitySpan> {
        match &self.backend {
            EntityBackend::Lexicon(lex) => detect_negation(tokens, match_entities(tokens, lex), &self.negation),
            EntityBackend::Tagger(t) => {
                let mut spans = Vec::new();
                let mut start = 0;
                for end in (0..=tokens.len()).filter(|&i| i == tokens.len() || is_terminator(&tokens[i])) {
                    if end > start {
                        let sentence = &tokens[start..end];
                        let tags = t.predict(sentence);
                        spans.extend(spans_from_tags(&tags).into_iter().map(|mut s| {
                            s.start += start;
                            s.end += start;
                            s
                        }));
                    }
                    start = end + 1;
                }
                spans
            }
        }
    }

    /// Entity document: surviving spans' surfaces in document order, each
    /// multi-token surface joined with `_`.
    pub fn entity_document(&self, doc: &DayDocument) -> EntityCorpusDoc {
        let mut spans = self.spans(&doc.tokens);
        if self.filter_negated {
            spans = filter_negated(spans);
        }
        EntityCorpusDoc {
            stay_id: doc.stay_id,
            day: doc.day,
            tokens: spans.iter().map(|s| s.joined_surface(&doc.tokens)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize_clauses;

    fn lexicon() -> Lexicon {
        let mut lex = Lexicon::new();
        lex.insert("oropharyngeal lesion", EntityType::Condition);
        lex.insert("acute mi", EntityType::Condition);
        lex.insert("fever", EntityType::Condition);
        lex.insert("aspirin", EntityType::Medication);
        lex
    }

    fn doc(text: &str) -> DayDocument {
        DayDocument {
            stay_id: 3,
            day: 0,
            tokens: tokenize_clauses(text),
        }
    }

    #[test]
    fn negated_entity_discarded() {
        let ex = EntityExtractor::lexicon(lexicon(), NegationConfig::default());
        let out = ex.entity_document(&doc("No oropharyngeal lesion. Acute MI."));
        assert_eq!(out.tokens, vec!["acute_mi"]);
        assert_eq!((out.stay_id, out.day), (3, 0));
    }

    #[test]
    fn empty_and_repeated() {
        let ex = EntityExtractor::lexicon(lexicon(), NegationConfig::default());
        assert!(ex.entity_document(&doc("nothing relevant here")).tokens.is_empty());
        let out = ex.entity_document(&doc("fever noted. fever again."));
        assert_eq!(out.tokens, vec!["fever", "fever"]);
    }

    #[test]
    fn filter_can_be_disabled() {
        let mut ex = EntityExtractor::lexicon(lexicon(), NegationConfig::default());
        ex.filter_negated = false;
        let out = ex.entity_document(&doc("No oropharyngeal lesion. Acute MI."));
        assert_eq!(out.tokens, vec!["oropharyngeal_lesion", "acute_mi"]);
    }

    #[test]
    fn filter_negated_examples() {
        let mut neg = EntitySpan::new(0, 1, EntityType::Test);
        neg.negated = true;
        assert!(filter_negated(vec![neg]).is_empty());
        assert!(filter_negated(vec![]).is_empty());
        let a = EntitySpan::new(0, 1, EntityType::Test);
        let b = EntitySpan::new(2, 3, EntityType::Condition);
        assert_eq!(filter_negated(vec![a, neg, b]), vec![a, b]);
    }

    #[test]
    fn entity_document_count_matches_surviving_spans() {
        let ex = EntityExtractor::lexicon(lexicon(), NegationConfig::default());
        let d = doc("fever and aspirin; no fever but aspirin. denies acute mi");
        let surviving = filter_negated(ex.spans(&d.tokens));
        assert_eq!(ex.entity_document(&d).tokens.len(), surviving.len());
        assert_eq!(surviving.len(), 3);
    }
}
