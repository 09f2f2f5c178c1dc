use std::collections::HashMap;
use std::fs;
use std::path::Path;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::textproc::{Span, Subtoken};

use super::EmbeddingError;

const MAX_WORD_CHARS: usize = 100;

/// BERT-style WordPiece tokenizer that keeps byte spans into the input.
#[derive(Debug, Clone)]
pub struct WordPieceTokenizer {
    vocab: HashMap<String, u32>,
    lowercase: bool,
    unk: u32,
    cls: u32,
    sep: u32,
}

/// Model input for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub subtokens: Vec<Subtoken>,
    pub truncated: bool,
}

impl WordPieceTokenizer {
    /// Reads a `vocab.txt` with one piece per line; the line number is the id.
    pub fn from_file(path: impl AsRef<Path>, lowercase: bool) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| EmbeddingError::ModelMissing(format!("{}: {e}", path.display())))?;
        Self::from_vocab(text.lines(), lowercase)
    }

    pub fn from_vocab<S: AsRef<str>>(
        pieces: impl IntoIterator<Item = S>,
        lowercase: bool,
    ) -> Result<Self, EmbeddingError> {
        let vocab: HashMap<String, u32> = pieces
            .into_iter()
            .enumerate()
            .map(|(i, p)| (p.as_ref().trim_end_matches('\r').to_string(), i as u32))
            .collect();
        let special = |name: &str| {
            vocab
                .get(name)
                .copied()
                .ok_or_else(|| EmbeddingError::ModelMissing(format!("vocabulary lacks {name}")))
        };
        Ok(WordPieceTokenizer {
            unk: special("[UNK]")?,
            cls: special("[CLS]")?,
            sep: special("[SEP]")?,
            vocab,
            lowercase,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Pieces without special markers.
    pub fn tokenize(&self, text: &str) -> Vec<(u32, Subtoken)> {
        let mut out = Vec::new();
        for word in self.basic_words(text) {
            self.word_pieces(&word, &mut out);
        }
        out
    }

    /// `[CLS] pieces [SEP]`, cut to `max_len` entries.
    pub fn encode(&self, text: &str, max_len: usize) -> Encoding {
        let pieces = self.tokenize(text);
        let room = max_len.saturating_sub(2);
        let truncated = pieces.len() > room;
        let mut ids = vec![self.cls];
        let mut subtokens = vec![Subtoken::new("[CLS]", Span::empty(), 0)];
        for (id, mut sub) in pieces.into_iter().take(room) {
            sub.index = subtokens.len();
            ids.push(id);
            subtokens.push(sub);
        }
        let index = subtokens.len();
        ids.push(self.sep);
        subtokens.push(Subtoken::new("[SEP]", Span::empty(), index));
        Encoding {
            ids,
            subtokens,
            truncated,
        }
    }

    /// Normalized characters grouped into words, each char carrying the
    /// byte span of the source character it came from.
    fn basic_words(&self, text: &str) -> Vec<Vec<(char, Span)>> {
        let mut words = Vec::new();
        let mut current: Vec<(char, Span)> = Vec::new();
        for (i, c) in text.char_indices() {
            let span = Span::new(i, i + c.len_utf8());
            if c == '\0' || c == '\u{fffd}' || (c.is_control() && !c.is_whitespace()) {
                continue;
            }
            if c.is_whitespace() {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                continue;
            }
            if is_punctuation(c) || is_cjk(c) {
                if !current.is_empty() {
                    words.push(std::mem::take(&mut current));
                }
                words.push(vec![(self.normalize_one(c).next().unwrap_or(c), span)]);
                continue;
            }
            current.extend(self.normalize_one(c).map(|n| (n, span)));
        }
        if !current.is_empty() {
            words.push(current);
        }
        words.retain(|w| !w.is_empty());
        words
    }

    fn normalize_one(&self, c: char) -> Box<dyn Iterator<Item = char>> {
        if self.lowercase {
            Box::new(
                c.to_lowercase()
                    .collect::<String>()
                    .nfd()
                    .filter(|ch| !is_combining_mark(*ch))
                    .collect::<Vec<_>>()
                    .into_iter(),
            )
        } else {
            Box::new(std::iter::once(c))
        }
    }

    fn word_pieces(&self, word: &[(char, Span)], out: &mut Vec<(u32, Subtoken)>) {
        let whole = Span::new(word[0].1.start, word[word.len() - 1].1.end);
        if word.len() > MAX_WORD_CHARS {
            out.push((self.unk, Subtoken::new("[UNK]", whole, 0)));
            return;
        }
        let chars: Vec<char> = word.iter().map(|(c, _)| *c).collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let body: String = chars[start..end].iter().collect();
                let piece = if start > 0 { format!("##{body}") } else { body };
                if let Some(&id) = self.vocab.get(&piece) {
                    found = Some((id, piece));
                    break;
                }
                end -= 1;
            }
            let Some((id, piece)) = found else {
                out.push((self.unk, Subtoken::new("[UNK]", whole, 0)));
                return;
            };
            let span = Span::new(word[start].1.start, word[end - 1].1.end);
            pieces.push((id, Subtoken::new(piece, span, 0)));
            start = end;
        }
        out.extend(pieces);
    }
}

fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(c as u32,
        0x00A1 | 0x00A7 | 0x00AB | 0x00B6 | 0x00B7 | 0x00BB | 0x00BF
        | 0x037E | 0x0387 | 0x055A..=0x055F | 0x0589 | 0x05BE | 0x060C | 0x061B | 0x061F
        | 0x2010..=0x2027 | 0x2030..=0x2043 | 0x2045..=0x2051 | 0x2053..=0x205E
        | 0x207D | 0x207E | 0x208D | 0x208E | 0x2308..=0x230B | 0x2329 | 0x232A
        | 0x2E00..=0x2E4F | 0x3001..=0x3003 | 0x3008..=0x3011 | 0x3014..=0x301F
        | 0xFE10..=0xFE19 | 0xFE30..=0xFE52 | 0xFE54..=0xFE61 | 0xFF01..=0xFF03
        | 0xFF05..=0xFF0A | 0xFF0C..=0xFF0F | 0xFF1A | 0xFF1B | 0xFF1F | 0xFF20
        | 0xFF3B..=0xFF3D | 0xFF3F | 0xFF5B | 0xFF5D | 0xFF5F..=0xFF65)
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF | 0x3400..=0x4DBF | 0x20000..=0x2A6DF | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F | 0x2B820..=0x2CEAF | 0xF900..=0xFAFF | 0x2F800..=0x2FA1F)
}
