use crate::textproc::{Span, Subtoken};

use super::{EmbeddingBackend, EmbeddingError, SubtokenEmbeddings, TokenEmbedding};

pub(crate) const DEFAULT_DIMENSION: usize = 768;
pub(crate) const DEFAULT_MAX_LEN: usize = 512;
const PIECE_CHARS: usize = 6;
const CONTEXT_WEIGHT: f64 = 0.25;

/// Deterministic stand-in for a contextual model.
///
/// Lowercased words are cut into pieces of at most six characters (later
/// pieces prefixed `##`), other visible characters become single pieces.
/// Each piece gets a pseudo-random base vector seeded by its text, and its
/// contextual vector adds a quarter of the mean base vector of its
/// neighbours. Equal words in similar contexts therefore get nearly equal
/// vectors, which is all the tests rely on.
#[derive(Debug, Clone)]
pub struct HashingBackend {
    dimension: usize,
    max_len: usize,
    identity: String,
}

impl Default for HashingBackend {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION, DEFAULT_MAX_LEN)
    }
}

impl HashingBackend {
    pub fn new(dimension: usize, max_sequence_length: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        assert!(max_sequence_length >= 3, "sequence length must leave room for text");
        HashingBackend {
            dimension,
            max_len: max_sequence_length,
            identity: format!("hashing/v1/d{dimension}/n{max_sequence_length}"),
        }
    }

    /// Subtokens including the empty-span start and end markers.
    pub fn tokenize(&self, text: &str) -> (Vec<Subtoken>, bool) {
        let mut pieces = vec![Subtoken::new("[CLS]", Span::empty(), 0)];
        let mut word: Vec<(usize, char)> = Vec::new();
        let flush = |word: &mut Vec<(usize, char)>, pieces: &mut Vec<Subtoken>| {
            for (k, chunk) in word.chunks(PIECE_CHARS).enumerate() {
                let start = chunk[0].0;
                let last = chunk[chunk.len() - 1];
                let end = last.0 + last.1.len_utf8();
                let body: String = chunk.iter().flat_map(|(_, c)| c.to_lowercase()).collect();
                let text = if k == 0 { body } else { format!("##{body}") };
                let index = pieces.len();
                pieces.push(Subtoken::new(text, Span::new(start, end), index));
            }
            word.clear();
        };
        for (i, c) in text.char_indices() {
            if c.is_alphanumeric() {
                word.push((i, c));
                continue;
            }
            flush(&mut word, &mut pieces);
            if !c.is_whitespace() && !c.is_control() {
                let index = pieces.len();
                pieces.push(Subtoken::new(c.to_string(), Span::new(i, i + c.len_utf8()), index));
            }
        }
        flush(&mut word, &mut pieces);
        let truncated = pieces.len() + 1 > self.max_len;
        pieces.truncate(self.max_len - 1);
        let index = pieces.len();
        pieces.push(Subtoken::new("[SEP]", Span::empty(), index));
        (pieces, truncated)
    }

    fn base(&self, piece: &str) -> Vec<f64> {
        let mut state = fnv1a(piece.as_bytes());
        (0..self.dimension)
            .map(|_| {
                state = splitmix64(state);
                // uniform in [-1, 1)
                (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
            })
            .collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EmbeddingBackend for HashingBackend {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn max_sequence_length(&self) -> usize {
        self.max_len
    }

    fn embed_subtokens(&self, text: &str) -> Result<SubtokenEmbeddings, EmbeddingError> {
        let (pieces, truncated) = self.tokenize(text);
        let bases: Vec<Vec<f64>> = pieces.iter().map(|p| self.base(&p.text)).collect();
        let n = pieces.len();
        let tokens = pieces
            .into_iter()
            .enumerate()
            .map(|(i, subtoken)| {
                let neighbours: Vec<usize> = [i.checked_sub(1), (i + 1 < n).then_some(i + 1)]
                    .into_iter()
                    .flatten()
                    .collect();
                let vector = (0..self.dimension)
                    .map(|d| {
                        let ctx = neighbours.iter().map(|&j| bases[j][d]).sum::<f64>() / neighbours.len().max(1) as f64;
                        (bases[i][d] + CONTEXT_WEIGHT * ctx) as f32
                    })
                    .collect();
                TokenEmbedding { subtoken, vector }
            })
            .collect();
        Ok(SubtokenEmbeddings { tokens, truncated })
    }
}
