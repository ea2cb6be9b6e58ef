use std::fmt;

use super::{EntitySpan, EntityType};
use crate::{Error, Result};

/// O plus B/I for each of 5 types in affirmed and negated variants.
pub const NUM_TAGS: usize = 1 + 5 * 4;

/// BIO tag with a negation variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    B { ty: EntityType, negated: bool },
    I { ty: EntityType, negated: bool },
}

impl Tag {
    /// Dense index in `0..NUM_TAGS`; `O` is 0.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B { ty, negated } => 1 + ty.index() * 4 + usize::from(negated) * 2,
            Tag::I { ty, negated } => 2 + ty.index() * 4 + usize::from(negated) * 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Tag> {
        if i == 0 {
            return Some(Tag::O);
        }
        if i >= NUM_TAGS {
            return None;
        }
        let k = i - 1;
        let ty = EntityType::ALL[k / 4];
        let negated = (k % 4) >= 2;
        Some(if k.is_multiple_of(2) {
            Tag::B { ty, negated }
        } else {
            Tag::I { ty, negated }
        })
    }

    /// `O`, `B-condition`, `I-medication-neg`, ...
    pub fn parse(s: &str) -> Option<Tag> {
        if s == "O" {
            return Some(Tag::O);
        }
        let (prefix, rest) = s.split_once('-')?;
        let (ty, negated) = match rest.strip_suffix("-neg") {
            Some(t) => (t, true),
            None => (rest, false),
        };
        let ty = EntityType::parse(ty)?;
        match prefix {
            "B" => Some(Tag::B { ty, negated }),
            "I" => Some(Tag::I { ty, negated }),
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Tag> {
        (0..NUM_TAGS).filter_map(Tag::from_index)
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, ty, neg) = match self {
            Tag::O => return f.write_str("O"),
            Tag::B { ty, negated } => ("B", ty, negated),
            Tag::I { ty, negated } => ("I", ty, negated),
        };
        write!(f, "{p}-{}{}", ty.as_str(), if *neg { "-neg" } else { "" })
    }
}

/// Lenient BIO decoding: maximal B-I runs become spans, and an `I` that does
/// not continue an open span of the same type and variant opens one.
pub fn spans_from_tags(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, &tag) in tags.iter().enumerate() {
        match tag {
            Tag::O => spans.extend(open.take()),
            Tag::B { ty, negated } => {
                spans.extend(open.take());
                open = Some(EntitySpan {
                    start: i,
                    end: i + 1,
                    entity_type: ty,
                    negated,
                });
            }
            Tag::I { ty, negated } => match &mut open {
                Some(s) if s.entity_type == ty && s.negated == negated => s.end = i + 1,
                _ => {
                    spans.extend(open.take());
                    open = Some(EntitySpan {
                        start: i,
                        end: i + 1,
                        entity_type: ty,
                        negated,
                    });
                }
            },
        }
    }
    spans.extend(open);
    spans
}

/// Strict check used on gold data: every `I` continues a span of the same
/// type and variant.
pub fn validate_bio(tags: &[Tag]) -> Result<()> {
    let mut prev = Tag::O;
    for (i, &tag) in tags.iter().enumerate() {
        if let Tag::I { ty, negated } = tag {
            let ok = matches!(prev, Tag::B { ty: t, negated: n } | Tag::I { ty: t, negated: n } if t == ty && n == negated);
            if !ok {
                return Err(Error::Data(format!("tag {i} ({tag}) does not continue a span")));
            }
        }
        prev = tag;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Vec<Tag> {
        s.split_whitespace().map(|t| Tag::parse(t).unwrap()).collect()
    }

    #[test]
    fn index_round_trip() {
        for i in 0..NUM_TAGS {
            let t = Tag::from_index(i).unwrap();
            assert_eq!(t.index(), i);
            assert_eq!(Tag::parse(&t.to_string()), Some(t));
        }
        assert_eq!(Tag::all().count(), 21);
        assert!(Tag::from_index(21).is_none());
    }

    #[test]
    fn decode_examples() {
        let spans = spans_from_tags(&parse("B-condition I-condition O"));
        assert_eq!(spans, vec![EntitySpan::new(0, 2, EntityType::Condition)]);

        let spans = spans_from_tags(&parse("I-condition"));
        assert_eq!(spans, vec![EntitySpan::new(0, 1, EntityType::Condition)]);

        let spans = spans_from_tags(&parse("B-condition-neg I-condition-neg"));
        assert_eq!(spans.len(), 1);
        assert!(spans[0].negated);
        assert_eq!((spans[0].start, spans[0].end), (0, 2));
    }

    #[test]
    fn decode_splits_on_type_change() {
        let spans = spans_from_tags(&parse("B-test I-condition B-test B-test"));
        assert_eq!(spans.len(), 4);
    }

    #[test]
    fn strict_validation() {
        assert!(validate_bio(&parse("B-test I-test O B-condition-neg I-condition-neg")).is_ok());
        assert!(validate_bio(&parse("O I-test")).is_err());
        assert!(validate_bio(&parse("B-test I-test-neg")).is_err());
    }
}
