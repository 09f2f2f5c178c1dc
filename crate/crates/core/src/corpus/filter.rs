use super::AppReview;

/// Reviews shorter than this many words carry too little to match on.
pub const DEFAULT_MIN_WORDS: usize = 10;

/// Number of maximal non-whitespace runs.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps reviews with at least `min_words` words, preserving order.
pub fn filter_min_length(reviews: &[AppReview], min_words: usize) -> Vec<AppReview> {
    reviews
        .iter()
        .filter(|r| word_count(&r.text) >= min_words)
        .cloned()
        .collect()
}
