use std::collections::HashMap;

use super::{LinguisticToken, TextprocError, Upos};

/// A part-of-speech tagger over pre-tokenized text.
///
/// Implementations hold an immutable model once constructed, so concurrent
/// calls are safe.
pub trait PosTagger: Send + Sync {
    /// Stable name of the tagger and its model, used in cache keys.
    fn identity(&self) -> &str;

    /// One tag per input token.
    fn tag_words(&self, words: &[&str]) -> Vec<Upos>;
}

/// Returns copies of `tokens` with `pos` filled in by `tagger`.
pub fn pos_tag(tokens: &[LinguisticToken], tagger: &dyn PosTagger) -> Vec<LinguisticToken> {
    let words: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    let tags = tagger.tag_words(&words);
    debug_assert_eq!(tags.len(), tokens.len());
    tokens
        .iter()
        .zip(tags)
        .map(|(tok, tag)| tok.clone().with_pos(tag))
        .collect()
}

/// Keeps the NOUN and PROPN tokens, in order.
pub fn extract_nouns(tagged: &[LinguisticToken]) -> Result<Vec<LinguisticToken>, TextprocError> {
    let mut nouns = Vec::new();
    for (index, tok) in tagged.iter().enumerate() {
        match tok.pos {
            Some(tag) if tag.is_noun() => nouns.push(tok.clone()),
            Some(_) => {}
            None => {
                return Err(TextprocError::UntaggedToken {
                    index,
                    text: tok.text.clone(),
                })
            }
        }
    }
    Ok(nouns)
}

const SYMBOL_CHARS: &str = "#$%&*+<=>@^`|~";
const UNICODE_PUNCT: &str = "\u{2013}\u{2014}\u{2026}\u{2018}\u{2019}\u{201c}\u{201d}\u{00ab}\u{00bb}\u{00a1}\u{00bf}";

/// Tag for tokens without letters or digits: `PUNCT` when every character
/// is punctuation, `SYM` otherwise (symbols, emoji, emoticons). `None` for
/// anything containing a letter or digit.
pub fn shape_tag(word: &str) -> Option<Upos> {
    if word.is_empty() || word.chars().any(char::is_alphanumeric) {
        return None;
    }
    let punct = word
        .chars()
        .all(|c| (c.is_ascii_punctuation() && !SYMBOL_CHARS.contains(c)) || UNICODE_PUNCT.contains(c));
    Some(if punct { Upos::Punct } else { Upos::Sym })
}

/// Dictionary tagger with shape-based fallbacks.
///
/// Unknown alphabetic words are tagged `NOUN` (or `PROPN` when capitalized
/// mid-sentence), digits `NUM`, punctuation `PUNCT` and anything else `SYM`.
/// Meant for tests and fixtures where noun selection must be predictable.
#[derive(Debug, Clone)]
pub struct LexiconTagger {
    entries: HashMap<String, Upos>,
    identity: String,
}

const CLOSED_CLASS: &[(&str, Upos)] = &[
    ("a", Upos::Det),
    ("an", Upos::Det),
    ("the", Upos::Det),
    ("this", Upos::Det),
    ("that", Upos::Det),
    ("these", Upos::Det),
    ("those", Upos::Det),
    ("every", Upos::Det),
    ("each", Upos::Det),
    ("some", Upos::Det),
    ("any", Upos::Det),
    ("no", Upos::Det),
    ("all", Upos::Det),
    ("i", Upos::Pron),
    ("me", Upos::Pron),
    ("my", Upos::Pron),
    ("you", Upos::Pron),
    ("your", Upos::Pron),
    ("it", Upos::Pron),
    ("its", Upos::Pron),
    ("we", Upos::Pron),
    ("our", Upos::Pron),
    ("they", Upos::Pron),
    ("their", Upos::Pron),
    ("he", Upos::Pron),
    ("she", Upos::Pron),
    ("him", Upos::Pron),
    ("her", Upos::Pron),
    ("is", Upos::Aux),
    ("are", Upos::Aux),
    ("was", Upos::Aux),
    ("were", Upos::Aux),
    ("be", Upos::Aux),
    ("been", Upos::Aux),
    ("am", Upos::Aux),
    ("do", Upos::Aux),
    ("does", Upos::Aux),
    ("did", Upos::Aux),
    ("can", Upos::Aux),
    ("cannot", Upos::Aux),
    ("could", Upos::Aux),
    ("will", Upos::Aux),
    ("would", Upos::Aux),
    ("should", Upos::Aux),
    ("wo", Upos::Aux),
    ("ca", Upos::Aux),
    ("not", Upos::Part),
    ("n't", Upos::Part),
    ("to", Upos::Part),
    ("in", Upos::Adp),
    ("on", Upos::Adp),
    ("at", Upos::Adp),
    ("of", Upos::Adp),
    ("for", Upos::Adp),
    ("with", Upos::Adp),
    ("from", Upos::Adp),
    ("after", Upos::Adp),
    ("by", Upos::Adp),
    ("and", Upos::Cconj),
    ("or", Upos::Cconj),
    ("but", Upos::Cconj),
    ("when", Upos::Sconj),
    ("if", Upos::Sconj),
    ("because", Upos::Sconj),
    ("very", Upos::Adv),
    ("so", Upos::Adv),
    ("too", Upos::Adv),
    ("again", Upos::Adv),
    ("always", Upos::Adv),
    ("never", Upos::Adv),
    ("anymore", Upos::Adv),
    ("please", Upos::Intj),
];

impl LexiconTagger {
    /// Closed-class English function words only.
    pub fn new() -> Self {
        Self::with_entries(std::iter::empty::<(&str, Upos)>())
    }

    /// Closed-class words plus caller-supplied entries, which take precedence.
    pub fn with_entries<S: AsRef<str>>(extra: impl IntoIterator<Item = (S, Upos)>) -> Self {
        let mut entries: HashMap<String, Upos> = CLOSED_CLASS.iter().map(|&(w, t)| (w.to_string(), t)).collect();
        for (w, t) in extra {
            entries.insert(w.as_ref().to_lowercase(), t);
        }
        LexiconTagger {
            entries,
            identity: "lexicon-tagger/1".to_string(),
        }
    }

    fn tag_one(&self, word: &str, position: usize) -> Upos {
        let lower = word.to_lowercase();
        if let Some(&tag) = self.entries.get(&lower) {
            return tag;
        }
        let mut chars = word.chars();
        let first = match chars.next() {
            Some(c) => c,
            None => return Upos::X,
        };
        if word.chars().all(|c| c.is_numeric() || c == '.' || c == ',') && first.is_numeric() {
            Upos::Num
        } else if first.is_alphanumeric() {
            if first.is_uppercase() && position > 0 {
                Upos::Propn
            } else {
                Upos::Noun
            }
        } else {
            shape_tag(word).unwrap_or(Upos::Sym)
        }
    }
}

impl Default for LexiconTagger {
    fn default() -> Self {
        Self::new()
    }
}

impl PosTagger for LexiconTagger {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn tag_words(&self, words: &[&str]) -> Vec<Upos> {
        words.iter().enumerate().map(|(i, w)| self.tag_one(w, i)).collect()
    }
}
