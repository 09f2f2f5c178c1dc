use super::{LinguisticToken, Span};

const EMOTICONS: &[&str] = &[
    ":-)", ":-(", ":-D", ":-P", ":-p", ";-)", ":'(", ":)", ":(", ":D", ":P", ":p", ";)", ":/", ":o", ":O", "<3", "xD",
    "XD", "^^", "(:", "):",
];

const CLITICS: &[&str] = &["s", "re", "ve", "ll", "d", "m"];

/// Splits `text` into word, punctuation and symbol tokens.
///
/// Rules, applied left to right over non-whitespace input:
/// - URLs (`http://`, `https://`, `www.`) are single tokens.
/// - Emoticons standing alone (`:)`, `<3`, ...) are single tokens.
/// - Words are runs of alphanumerics joined by `-`, `_`, `.` or an apostrophe
///   when the connector is followed by another alphanumeric; `,` joins only
///   digit groups. Contractions split Penn-style: `doesn't` → `does` + `n't`,
///   `it's` → `it` + `'s`.
/// - Runs of one repeated punctuation character (`!!!`, `...`) form one token;
///   other punctuation is one token per character.
/// - Emoji are one token each, including skin-tone modifiers, variation
///   selectors and zero-width-joiner sequences.
/// - Control characters are dropped.
pub fn linguistic_tokenize(text: &str) -> Vec<LinguisticToken> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let end_of = |i: usize| -> usize {
        if i < chars.len() {
            chars[i].0
        } else {
            text.len()
        }
    };
    let mut tokens = Vec::new();
    let mut i = 0;

    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() || c.is_control() {
            i += 1;
            continue;
        }
        let at_boundary = i == 0 || chars[i - 1].1.is_whitespace();

        if at_boundary {
            if let Some(next) = match_url(&chars, i) {
                push(&mut tokens, text, start, end_of(next));
                i = next;
                continue;
            }
            if let Some(next) = match_emoticon(text, &chars, i) {
                push(&mut tokens, text, start, end_of(next));
                i = next;
                continue;
            }
        }

        if c.is_alphanumeric() {
            let next = scan_word(&chars, i);
            let word_end = end_of(next);
            split_clitics(&mut tokens, text, start, word_end);
            i = next;
        } else if is_punctuation(c) {
            let mut next = i + 1;
            while next < chars.len() && chars[next].1 == c {
                next += 1;
            }
            push(&mut tokens, text, start, end_of(next));
            i = next;
        } else {
            let next = scan_symbol(&chars, i);
            push(&mut tokens, text, start, end_of(next));
            i = next;
        }
    }
    tokens
}

fn push(tokens: &mut Vec<LinguisticToken>, text: &str, start: usize, end: usize) {
    if start < end {
        tokens.push(LinguisticToken::new(&text[start..end], Span::new(start, end)));
    }
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3000}'..='\u{303F}' | '«' | '»' | '¿' | '¡' | '·'
        )
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn scan_word(chars: &[(usize, char)], mut i: usize) -> usize {
    let n = chars.len();
    while i < n {
        let c = chars[i].1;
        if c.is_alphanumeric() || is_mark(c) {
            i += 1;
            continue;
        }
        let prev = if i > 0 { Some(chars[i - 1].1) } else { None };
        let next = chars.get(i + 1).map(|&(_, ch)| ch);
        let joins = match (c, prev, next) {
            ('-' | '_' | '.', Some(p), Some(q)) => p.is_alphanumeric() && q.is_alphanumeric(),
            (',', Some(p), Some(q)) => p.is_ascii_digit() && q.is_ascii_digit(),
            (a, Some(p), Some(q)) if is_apostrophe(a) => p.is_alphanumeric() && q.is_alphabetic(),
            _ => false,
        };
        if joins {
            i += 1;
        } else {
            break;
        }
    }
    i
}

fn is_mark(c: char) -> bool {
    // combining diacritics stay attached to their base letter
    matches!(c, '\u{0300}'..='\u{036F}' | '\u{1AB0}'..='\u{1AFF}' | '\u{20D0}'..='\u{20FF}')
}

fn scan_symbol(chars: &[(usize, char)], mut i: usize) -> usize {
    i += 1;
    while i < chars.len() {
        let c = chars[i].1;
        let modifier = matches!(c, '\u{FE0E}' | '\u{FE0F}' | '\u{1F3FB}'..='\u{1F3FF}' | '\u{20E3}');
        if modifier {
            i += 1;
        } else if c == '\u{200D}' && i + 1 < chars.len() {
            i += 2;
        } else {
            break;
        }
    }
    i
}

fn match_url(chars: &[(usize, char)], i: usize) -> Option<usize> {
    let head: String = chars[i..]
        .iter()
        .take(8)
        .map(|&(_, c)| c.to_ascii_lowercase())
        .collect();
    if !(head.starts_with("http://") || head.starts_with("https://") || head.starts_with("www.")) {
        return None;
    }
    let mut end = i;
    while end < chars.len() && !chars[end].1.is_whitespace() {
        end += 1;
    }
    while end > i && matches!(chars[end - 1].1, '.' | ',' | ';' | ':' | '!' | '?' | ')' | '"' | '\'') {
        end -= 1;
    }
    Some(end)
}

fn match_emoticon(text: &str, chars: &[(usize, char)], i: usize) -> Option<usize> {
    let rest = &text[chars[i].0..];
    for emoticon in EMOTICONS {
        if let Some(after) = rest.strip_prefix(emoticon) {
            let standalone = after
                .chars()
                .next()
                .is_none_or(|c| c.is_whitespace() || matches!(c, '.' | ',' | '!' | '?'));
            if standalone {
                return Some(i + emoticon.chars().count());
            }
        }
    }
    None
}

/// Emits the word `text[start..end]`, splitting a trailing negation or
/// pronoun/verb clitic into its own token.
fn split_clitics(tokens: &mut Vec<LinguisticToken>, text: &str, start: usize, end: usize) {
    let word = &text[start..end];

    for negation in ["n't", "n\u{2019}t"] {
        let n = negation.len();
        if word.len() > n
            && word.is_char_boundary(word.len() - n)
            && word[word.len() - n..].eq_ignore_ascii_case(negation)
        {
            let cut = end - n;
            push(tokens, text, start, cut);
            push(tokens, text, cut, end);
            return;
        }
    }

    if let Some((pos, apostrophe)) = word.char_indices().rev().find(|&(_, c)| is_apostrophe(c)) {
        let suffix = &word[pos + apostrophe.len_utf8()..];
        if pos > 0 && CLITICS.iter().any(|c| c.eq_ignore_ascii_case(suffix)) {
            push(tokens, text, start, start + pos);
            push(tokens, text, start + pos, end);
            return;
        }
    }
    push(tokens, text, start, end);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn texts(s: &str) -> Vec<String> {
        linguistic_tokenize(s).into_iter().map(|t| t.text).collect()
    }

    #[test]
    fn whitespace_split_with_spans() {
        let toks = linguistic_tokenize("auto upload broken");
        let got: Vec<_> = toks
            .iter()
            .map(|t| (t.text.as_str(), t.span.start, t.span.end))
            .collect();
        assert_eq!(got, vec![("auto", 0, 4), ("upload", 5, 11), ("broken", 12, 18)]);
    }

    #[test]
    fn empty_text_has_no_tokens() {
        assert!(linguistic_tokenize("").is_empty());
        assert!(linguistic_tokenize("  \t\n").is_empty());
    }

    #[test]
    fn intra_word_hyphen_is_kept() {
        let toks = linguistic_tokenize("Wi-Fi fails");
        let got: Vec<_> = toks
            .iter()
            .map(|t| (t.text.as_str(), t.span.start, t.span.end))
            .collect();
        assert_eq!(got, vec![("Wi-Fi", 0, 5), ("fails", 6, 11)]);
    }

    #[test]
    fn contractions_split() {
        assert_eq!(texts("doesn't work"), ["does", "n't", "work"]);
        assert_eq!(texts("it won't open"), ["it", "wo", "n't", "open"]);
        assert_eq!(texts("It's the app's icon"), ["It", "'s", "the", "app", "'s", "icon"]);
        assert_eq!(texts("I'm here"), ["I", "'m", "here"]);
        assert_eq!(texts("users' files"), ["users", "'", "files"]);
        assert_eq!(texts("wont cant"), ["wont", "cant"]);
    }

    #[test]
    fn punctuation_runs_and_singles() {
        assert_eq!(texts("It is working!!"), ["It", "is", "working", "!!"]);
        assert_eq!(texts("wait... what?"), ["wait", "...", "what", "?"]);
        assert_eq!(texts("(beta)"), ["(", "beta", ")"]);
        assert_eq!(texts("80% battery"), ["80", "%", "battery"]);
        assert_eq!(texts("\"Waiting for Wifi\""), ["\"", "Waiting", "for", "Wifi", "\""]);
    }

    #[test]
    fn dotted_identifiers_and_numbers() {
        assert_eq!(
            texts("java.lang.RuntimeException in 3.2"),
            ["java.lang.RuntimeException", "in", "3.2"]
        );
        assert_eq!(texts("1,000 users."), ["1,000", "users", "."]);
        assert_eq!(texts("end. Start"), ["end", ".", "Start"]);
    }

    #[test]
    fn urls_and_emoticons() {
        assert_eq!(
            texts("see https://example.org/a?b=1."),
            ["see", "https://example.org/a?b=1", "."]
        );
        assert_eq!(texts("love it :) <3"), ["love", "it", ":)", "<3"]);
        assert_eq!(texts("Terrible :("), ["Terrible", ":("]);
    }

    #[test]
    fn emoji_are_single_tokens() {
        assert_eq!(texts("good app👍"), ["good", "app", "👍"]);
        assert_eq!(texts("👍🏽 ok"), ["👍🏽", "ok"]);
        assert_eq!(texts("👨\u{200D}💻!"), ["👨\u{200D}💻", "!"]);
    }

    #[test]
    fn control_characters_are_dropped() {
        assert_eq!(texts("a\u{0007}b c"), ["a", "b", "c"]);
    }

    #[test]
    fn multibyte_spans_slice_source() {
        let text = "Überweisung klappt nicht — schade";
        for tok in linguistic_tokenize(text) {
            assert_eq!(tok.span.slice(text), tok.text);
        }
    }

    #[test]
    fn clitics_after_case_changing_letters() {
        // 'İ' lowercases to a longer byte sequence
        assert_eq!(texts("İSN'T"), ["İS", "N'T"]);
        assert_eq!(texts("İt's"), ["İt", "'s"]);
    }

    proptest! {
        #[test]
        fn spans_sorted_disjoint_and_consistent(text in "\\PC{0,60}") {
            let toks = linguistic_tokenize(&text);
            let mut prev_end = 0;
            for tok in &toks {
                prop_assert!(tok.span.start < tok.span.end);
                prop_assert!(tok.span.end <= text.len());
                prop_assert!(tok.span.start >= prev_end);
                prop_assert_eq!(tok.span.slice(&text), tok.text.as_str());
                prev_end = tok.span.end;
            }
        }

        #[test]
        fn skipped_text_is_whitespace_or_control(text in "[a-zA-Z0-9 ,.!?'\\-]{0,60}") {
            let toks = linguistic_tokenize(&text);
            let mut rebuilt = String::new();
            let mut cursor = 0;
            for tok in &toks {
                let gap = &text[cursor..tok.span.start];
                prop_assert!(gap.chars().all(|c| c.is_whitespace() || c.is_control()));
                rebuilt.push_str(gap);
                rebuilt.push_str(&tok.text);
                cursor = tok.span.end;
            }
            rebuilt.push_str(&text[cursor..]);
            prop_assert_eq!(rebuilt, text);
        }
    }
}
