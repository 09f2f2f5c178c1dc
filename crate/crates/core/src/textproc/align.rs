use serde::{Deserialize, Serialize};

use super::{LinguisticToken, Span, TextprocError};

/// A unit of an embedding model's tokenizer.
///
/// Special markers such as sequence delimiters carry an empty span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtoken {
    pub text: String,
    pub span: Span,
    pub index: usize,
}

impl Subtoken {
    pub fn new(text: impl Into<String>, span: Span, index: usize) -> Self {
        Subtoken {
            text: text.into(),
            span,
            index,
        }
    }

    pub fn is_special(&self) -> bool {
        self.span.is_empty()
    }
}

/// For each linguistic token (by position), the ordered positions of the
/// subtokens whose spans overlap it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub entries: Vec<Vec<usize>>,
}

impl AlignmentMap {
    pub fn subtokens_of(&self, token: usize) -> &[usize] {
        self.entries.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Maps each linguistic token to every subtoken whose span intersects its
/// span. Both sequences must be sorted by span, as produced by tokenizers;
/// a sweep over the two sequences keeps this linear in their combined length.
///
/// `source_len` is the byte length of the text both tokenizations came from.
pub fn align_tokenizations(
    linguistic: &[LinguisticToken],
    subtokens: &[Subtoken],
    source_len: usize,
) -> Result<AlignmentMap, TextprocError> {
    for (index, sub) in subtokens.iter().enumerate() {
        if sub.span.end > source_len || sub.span.start > sub.span.end {
            return Err(TextprocError::SpanMismatch {
                index,
                start: sub.span.start,
                end: sub.span.end,
                len: source_len,
            });
        }
    }

    let spanned: Vec<usize> = (0..subtokens.len())
        .filter(|&j| !subtokens[j].span.is_empty())
        .collect();

    let mut entries = Vec::with_capacity(linguistic.len());
    let mut first = 0;
    for token in linguistic {
        // subtokens ending at or before this token can't overlap it or any later one
        while first < spanned.len() && subtokens[spanned[first]].span.end <= token.span.start {
            first += 1;
        }
        let mut hits = Vec::new();
        for &j in &spanned[first..] {
            let span = subtokens[j].span;
            if span.start >= token.span.end {
                break;
            }
            if span.overlaps(&token.span) {
                hits.push(j);
            }
        }
        entries.push(hits);
    }
    Ok(AlignmentMap { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ling(items: &[(&str, usize, usize)]) -> Vec<LinguisticToken> {
        items
            .iter()
            .map(|&(t, s, e)| LinguisticToken::new(t, Span::new(s, e)))
            .collect()
    }

    fn subs(items: &[(&str, usize, usize)]) -> Vec<Subtoken> {
        items
            .iter()
            .enumerate()
            .map(|(i, &(t, s, e))| Subtoken::new(t, Span::new(s, e), i))
            .collect()
    }

    fn brute_force(l: &[LinguisticToken], s: &[Subtoken]) -> Vec<Vec<usize>> {
        l.iter()
            .map(|tok| (0..s.len()).filter(|&j| s[j].span.overlaps(&tok.span)).collect())
            .collect()
    }

    #[test]
    fn word_split_into_pieces() {
        let l = ling(&[("upload", 5, 11)]);
        let s = subs(&[("up", 5, 7), ("##load", 7, 11)]);
        assert_eq!(align_tokenizations(&l, &s, 11).unwrap().entries, vec![vec![0, 1]]);
    }

    #[test]
    fn identical_tokenizations_align_identically() {
        let l = ling(&[("a", 0, 1), ("bc", 2, 4), ("d", 5, 6)]);
        let s = subs(&[("a", 0, 1), ("bc", 2, 4), ("d", 5, 6)]);
        let map = align_tokenizations(&l, &s, 6).unwrap();
        assert_eq!(map.entries, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn only_overlapping_pieces_are_listed() {
        let l = ling(&[("nextcloud", 0, 9)]);
        let s = subs(&[("next", 0, 4), ("##cloud", 4, 9), ("login", 10, 15)]);
        let map = align_tokenizations(&l, &s, 15).unwrap();
        assert_eq!(map.entries, brute_force(&l, &s));
        assert_eq!(map.entries, vec![vec![0, 1]]);
    }

    #[test]
    fn special_markers_never_align() {
        let l = ling(&[("hi", 0, 2)]);
        let s = subs(&[("[CLS]", 0, 0), ("hi", 0, 2), ("[SEP]", 0, 0)]);
        assert_eq!(align_tokenizations(&l, &s, 2).unwrap().entries, vec![vec![1]]);
    }

    #[test]
    fn dropped_characters_yield_empty_lists() {
        let l = ling(&[("a", 0, 1), ("\u{7}", 2, 3), ("b", 4, 5)]);
        let s = subs(&[("a", 0, 1), ("b", 4, 5)]);
        let map = align_tokenizations(&l, &s, 5).unwrap();
        assert_eq!(map.entries, vec![vec![0], vec![], vec![1]]);
    }

    #[test]
    fn subtoken_straddling_two_tokens_maps_to_both() {
        let l = ling(&[("new", 0, 3), ("tab", 4, 7)]);
        let s = subs(&[("new ta", 0, 6), ("b", 6, 7)]);
        let map = align_tokenizations(&l, &s, 7).unwrap();
        assert_eq!(map.entries, vec![vec![0], vec![0, 1]]);
    }

    #[test]
    fn span_past_source_is_rejected() {
        let l = ling(&[("a", 0, 1)]);
        let s = subs(&[("a", 0, 1), ("zz", 3, 9)]);
        let err = align_tokenizations(&l, &s, 4).unwrap_err();
        assert!(matches!(err, TextprocError::SpanMismatch { index: 1, .. }));
    }
}
