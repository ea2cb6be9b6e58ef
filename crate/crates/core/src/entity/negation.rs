use std::fs;
use std::path::Path;

use super::EntitySpan;
use crate::corpus::tokenize;
use crate::Result;

/// Trigger list shipped with the crate (`data/negation_triggers.txt`).
pub const DEFAULT_TRIGGERS: &str = include_str!("../../data/negation_triggers.txt");

/// Negation scope rules: a span is negated when a trigger phrase ends within
/// `window` tokens before it and no terminator lies between the trigger and
/// the span.
#[derive(Debug, Clone, PartialEq)]
pub struct NegationConfig {
    pub triggers: Vec<Vec<String>>,
    pub window: usize,
    pub terminators: Vec<String>,
}

impl Default for NegationConfig {
    fn default() -> Self {
        Self {
            triggers: parse_triggers(DEFAULT_TRIGGERS),
            window: 5,
            terminators: ["but", "however", ".", ";"].map(String::from).to_vec(),
        }
    }
}

fn parse_triggers(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(tokenize)
        .filter(|t| !t.is_empty())
        .collect()
}

impl NegationConfig {
    /// Replaces the trigger list with the phrases in `path` (one per line).
    pub fn with_trigger_file(mut self, path: &Path) -> Result<Self> {
        self.triggers = parse_triggers(&fs::read_to_string(path)?);
        Ok(self)
    }

    pub fn with_triggers(mut self, text: &str) -> Self {
        self.triggers = parse_triggers(text);
        self
    }

    fn trigger_ends(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for start in 0..tokens.len() {
            for trig in &self.triggers {
                let end = start + trig.len();
                if end <= tokens.len() && tokens[start..end] == trig[..] {
                    out.push((start, end));
                }
            }
        }
        out
    }
}

/// Sets `negated` on spans inside a trigger's scope; other flags untouched.
pub fn detect_negation(tokens: &[String], mut spans: Vec<EntitySpan>, cfg: &NegationConfig) -> Vec<EntitySpan> {
    let triggers = cfg.trigger_ends(tokens);
    let is_term = |t: &String| cfg.terminators.iter().any(|x| x == t);
    for span in &mut spans {
        let lo = span.start.saturating_sub(cfg.window);
        let scoped = triggers.iter().any(|&(ts, te)| {
            ts >= lo && te <= span.start && !tokens[te..span.start].iter().any(is_term)
        });
        if scoped {
            span.negated = true;
        }
    }
    spans
}
