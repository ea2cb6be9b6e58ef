//! Entity pools, sentence templates and the gold tagged corpus.

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::entity::tagger::TaggedSentence;
use crate::entity::{EntitySpan, EntityType, Lexicon, Tag};
use crate::numkit::Rng;

use EntityType::*;

const RISK_POOL: &[(&str, EntityType)] = &[
    ("septic shock", Condition),
    ("acute respiratory failure", Condition),
    ("cardiac arrest", Condition),
    ("intracranial hemorrhage", Condition),
    ("multiorgan failure", Condition),
    ("acute kidney injury", Condition),
    ("norepinephrine", Medication),
    ("vasopressin", Medication),
    ("serum lactate", Test),
    ("blood cultures", Test),
    ("mechanical ventilation", Treatment),
    ("crrt", Treatment),
    ("intubation", Procedure),
    ("central line placement", Procedure),
    ("coagulopathy", Condition),
    ("cardiogenic shock", Condition),
];

const BENIGN_POOL: &[(&str, EntityType)] = &[
    ("hypertension", Condition),
    ("ankle sprain", Condition),
    ("hyperlipidemia", Condition),
    ("osteoarthritis", Condition),
    ("acetaminophen", Medication),
    ("metoprolol", Medication),
    ("docusate", Medication),
    ("chest xray", Test),
    ("urinalysis", Test),
    ("cbc", Test),
    ("physical therapy", Treatment),
    ("incentive spirometry", Treatment),
    ("diet advancement", Treatment),
    ("hernia repair", Procedure),
    ("cataract surgery", Procedure),
    ("foley removal", Procedure),
    ("gerd", Condition),
    ("seasonal allergies", Condition),
];

/// Prefix negation cues used for decoys; all appear in the default trigger
/// list.
pub const DECOY_TRIGGERS: &[&str] = &["no", "denies", "negative for", "without", "free of"];

const FILLER: &[&str] = &[
    "patient resting comfortably",
    "family at bedside",
    "plan discussed with team",
    "heart rate 92 bpm",
    "temp 37.8 overnight",
    "tolerating diet well",
    "skin warm and dry",
    "will continue to monitor",
    "sats 96 percent on room air",
    "ambulating with assistance",
    "pain controlled",
    "mental status at baseline",
];

fn templates(ty: EntityType) -> &'static [(&'static str, &'static str)] {
    match ty {
        Condition => &[("patient with", ""), ("", "noted on exam"), ("concern for", "")],
        Medication => &[("started on", ""), ("given", "overnight"), ("", "dose adjusted")],
        Test => &[("", "ordered"), ("", "results reviewed"), ("repeat", "sent")],
        Treatment => &[("continue", ""), ("", "initiated"), ("remains on", "")],
        Procedure => &[("underwent", ""), ("", "performed today"), ("s/p", "")],
    }
}

/// Entity surfaces of one cohort: risk entities first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityInventory {
    pub risk: Vec<(String, EntityType)>,
    pub benign: Vec<(String, EntityType)>,
}

impl EntityInventory {
    pub fn new(n_risk: usize, n_benign: usize) -> Self {
        let take = |pool: &[(&str, EntityType)], n: usize, tag: &str| -> Vec<(String, EntityType)> {
            (0..n)
                .map(|i| match pool.get(i) {
                    Some((s, t)) => (s.to_string(), *t),
                    None => (format!("{tag} finding {}", i - pool.len() + 1), Condition),
                })
                .collect()
        };
        Self {
            risk: take(RISK_POOL, n_risk, "severe"),
            benign: take(BENIGN_POOL, n_benign, "minor"),
        }
    }

    pub fn lexicon(&self) -> Lexicon {
        let mut lex = Lexicon::new();
        for (s, t) in self.risk.iter().chain(&self.benign) {
            lex.insert(s, *t);
        }
        lex
    }
}

/// One generated sentence with its entity spans (token offsets).
#[derive(Debug, Clone, PartialEq)]
pub struct GoldSentence {
    pub tokens: Vec<String>,
    pub spans: Vec<EntitySpan>,
}

impl GoldSentence {
    pub fn tags(&self) -> Vec<Tag> {
        let mut tags = vec![Tag::O; self.tokens.len()];
        for s in &self.spans {
            tags[s.start] = Tag::B {
                ty: s.entity_type,
                negated: s.negated,
            };
            for t in &mut tags[s.start + 1..s.end] {
                *t = Tag::I {
                    ty: s.entity_type,
                    negated: s.negated,
                };
            }
        }
        tags
    }

    pub fn tagged(&self) -> TaggedSentence {
        TaggedSentence {
            tokens: self.tokens.clone(),
            tags: self.tags().iter().map(Tag::to_string).collect(),
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

fn assemble(parts: &[(&str, Option<(EntityType, bool)>)]) -> GoldSentence {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    for (text, ent) in parts {
        let toks = tokenize(text);
        if let Some((ty, neg)) = ent {
            let mut s = EntitySpan::new(tokens.len(), tokens.len() + toks.len(), *ty);
            s.negated = *neg;
            spans.push(s);
        }
        tokens.extend(toks);
    }
    GoldSentence { tokens, spans }
}

/// Affirmed mention of an entity.
pub fn mention_sentence(surface: &str, ty: EntityType, rng: &mut Rng) -> GoldSentence {
    let t = templates(ty);
    let (pre, post) = t[rng.below(t.len())];
    assemble(&[(pre, None), (surface, Some((ty, false))), (post, None)])
}

/// Negated decoy: `<trigger> <entity>`.
pub fn decoy_sentence(surface: &str, ty: EntityType, rng: &mut Rng) -> GoldSentence {
    let trig = DECOY_TRIGGERS[rng.below(DECOY_TRIGGERS.len())];
    assemble(&[(trig, None), (surface, Some((ty, true)))])
}

pub fn filler_sentence(rng: &mut Rng) -> GoldSentence {
    assemble(&[(FILLER[rng.below(FILLER.len())], None)])
}

/// Gold tagged corpus for the toy tagger: a deterministic mix of affirmed
/// mentions, negated decoys and entity-free sentences.
pub fn gold_sentences(inv: &EntityInventory, n: usize, seed: u64) -> Vec<GoldSentence> {
    let mut rng = Rng::new(seed);
    let all: Vec<&(String, EntityType)> = inv.risk.iter().chain(&inv.benign).collect();
    (0..n)
        .map(|i| {
            let (s, ty) = all[rng.below(all.len())];
            match i % 5 {
                0 | 1 => mention_sentence(s, *ty, &mut rng),
                2 | 3 => decoy_sentence(s, *ty, &mut rng),
                _ => filler_sentence(&mut rng),
            }
        })
        .collect()
}
