//! Linguistic preprocessing: tokenization with character spans, part-of-speech
//! tagging, noun extraction and alignment against a model's subtokenization.
//!
//! All spans are half-open byte ranges into the UTF-8 source string. Byte and
//! character offsets induce the same overlap relation, so alignment results do
//! not depend on the unit.

mod align;
mod perceptron;
mod tagger;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use align::{align_tokenizations, AlignmentMap, Subtoken};
pub use perceptron::{AveragedPerceptron, PerceptronTagger, TaggedSentence, TrainingReport, BUNDLED_MODEL};
pub use tagger::{extract_nouns, pos_tag, shape_tag, LexiconTagger, PosTagger};
pub use tokenize::linguistic_tokenize;

#[derive(Debug, Error)]
pub enum TextprocError {
    #[error("tagger model missing or invalid: {0}")]
    TaggerModelMissing(String),
    #[error("token {index} ({text:?}) has no part-of-speech tag")]
    UntaggedToken { index: usize, text: String },
    #[error("subtoken {index} span {start}..{end} exceeds source length {len}")]
    SpanMismatch {
        index: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("malformed training data at line {line}: {message}")]
    MalformedTrainingData { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Half-open byte range `[start, end)` over a source string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    /// The zero-width span used for special marker subtokens.
    pub fn empty() -> Self {
        Span { start: 0, end: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    /// Non-empty intersection of two half-open ranges.
    pub fn overlaps(&self, other: &Span) -> bool {
        !self.is_empty() && !other.is_empty() && self.start < other.end && other.start < self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl Upos {
    pub const ALL: [Upos; 17] = [
        Upos::Adj,
        Upos::Adp,
        Upos::Adv,
        Upos::Aux,
        Upos::Cconj,
        Upos::Det,
        Upos::Intj,
        Upos::Noun,
        Upos::Num,
        Upos::Part,
        Upos::Pron,
        Upos::Propn,
        Upos::Punct,
        Upos::Sconj,
        Upos::Sym,
        Upos::Verb,
        Upos::X,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Upos::Adj => "ADJ",
            Upos::Adp => "ADP",
            Upos::Adv => "ADV",
            Upos::Aux => "AUX",
            Upos::Cconj => "CCONJ",
            Upos::Det => "DET",
            Upos::Intj => "INTJ",
            Upos::Noun => "NOUN",
            Upos::Num => "NUM",
            Upos::Part => "PART",
            Upos::Pron => "PRON",
            Upos::Propn => "PROPN",
            Upos::Punct => "PUNCT",
            Upos::Sconj => "SCONJ",
            Upos::Sym => "SYM",
            Upos::Verb => "VERB",
            Upos::X => "X",
        }
    }

    /// Nouns for pooling purposes: common and proper nouns.
    pub fn is_noun(&self) -> bool {
        matches!(self, Upos::Noun | Upos::Propn)
    }

    pub(crate) fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for Upos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Upos {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Upos::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown universal POS tag {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinguisticToken {
    pub text: String,
    pub span: Span,
    pub pos: Option<Upos>,
}

impl LinguisticToken {
    pub fn new(text: impl Into<String>, span: Span) -> Self {
        LinguisticToken {
            text: text.into(),
            span,
            pos: None,
        }
    }

    pub fn with_pos(mut self, pos: Upos) -> Self {
        self.pos = Some(pos);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upos_round_trips_through_str() {
        for tag in Upos::ALL {
            assert_eq!(tag.as_str().parse::<Upos>().unwrap(), tag);
            assert_eq!(Upos::ALL[tag.index()], tag);
        }
        assert!("NN".parse::<Upos>().is_err());
    }

    #[test]
    fn span_overlap_is_half_open() {
        let a = Span::new(0, 4);
        assert!(a.overlaps(&Span::new(3, 5)));
        assert!(!a.overlaps(&Span::new(4, 6)));
        assert!(!a.overlaps(&Span::new(2, 2)));
        assert!(!Span::empty().overlaps(&a));
    }
}
