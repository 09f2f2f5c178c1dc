//! Matches app-store problem reports against issue-tracker bug reports.
//!
//! Texts are embedded with a contextual subtoken model, the subtoken vectors
//! aligned to nouns are averaged into one document vector, and candidates are
//! ranked by cosine similarity. The crate also carries the evaluation
//! machinery used to judge such rankings (average precision, hit ratio, noun
//! overlap, date-gap analysis, coder agreement).

pub mod corpus;
pub mod embedding;
pub mod matcher;
pub mod metrics;
pub mod textproc;

pub use corpus::{AppReview, BugReport, Corpus, ProblemReport};
pub use embedding::{DocumentEmbedding, Embedder, EmbeddingBackend, Pooled};
pub use matcher::{cosine_similarity, MatchIndex, MatchQuery, MatchResult};
pub use textproc::{LinguisticToken, PosTagger, Span, Upos};
