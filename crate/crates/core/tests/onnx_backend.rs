//! Runs the ONNX backend on a tiny randomly initialised DistilBERT and
//! compares tokenization and hidden states with values computed by the
//! reference Python implementation (see tests/fixtures/tiny-distilbert).
#![cfg(feature = "onnx")]

use std::path::PathBuf;
use std::sync::Arc;

use feedmatch::embedding::{Embedder, EmbeddingBackend, OnnxBackend};
use feedmatch::textproc::LexiconTagger;
use feedmatch::Pooled;
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    text: String,
    input_ids: Vec<u32>,
    offsets: Vec<(usize, usize)>,
    hidden: Vec<Vec<f32>>,
}

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny-distilbert")
}

fn references() -> Vec<Reference> {
    let text = std::fs::read_to_string(fixture().join("reference.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn tokenization_matches_reference() {
    let backend = OnnxBackend::load(fixture(), None).unwrap();
    for r in references() {
        let enc = backend.tokenizer().encode(&r.text, 512);
        assert_eq!(enc.ids, r.input_ids, "{}", r.text);
        let spans: Vec<(usize, usize)> = enc.subtokens.iter().map(|s| (s.span.start, s.span.end)).collect();
        assert_eq!(spans, r.offsets, "{}", r.text);
    }
}

#[test]
fn hidden_states_match_reference() {
    let backend = OnnxBackend::load(fixture(), None).unwrap();
    assert_eq!(backend.dimension(), 32);
    for r in references() {
        let out = backend.embed_subtokens(&r.text).unwrap();
        assert_eq!(out.tokens.len(), r.hidden.len());
        for (tok, expected) in out.tokens.iter().zip(&r.hidden) {
            for (a, b) in tok.vector.iter().zip(expected) {
                assert!((a - b).abs() < 1e-4, "{}: {a} vs {b}", r.text);
            }
        }
    }
}

#[test]
fn long_inputs_are_truncated() {
    let backend = OnnxBackend::load(fixture(), Some(8)).unwrap();
    let out = backend
        .embed_subtokens("the app the app the app the app the app")
        .unwrap();
    assert!(out.truncated);
    assert_eq!(out.tokens.len(), 8);
}

#[test]
fn pools_nouns_through_the_model() {
    let backend: Arc<dyn EmbeddingBackend> = Arc::new(OnnxBackend::load(fixture(), None).unwrap());
    let embedder = Embedder::new(backend, Arc::new(LexiconTagger::new()));
    match embedder.embed("Auto upload broken!").unwrap() {
        Pooled::Embedded(e) => {
            assert_eq!(e.vector.len(), 32);
            assert!(e.subtoken_count >= 2);
        }
        Pooled::NoNouns => panic!("expected nouns"),
    }
}

#[test]
fn missing_model_directory() {
    assert!(OnnxBackend::load("/nonexistent/model", None).is_err());
}

/// Set FEEDMATCH_MODEL_DIR to a directory holding a full-size DistilBERT
/// export to run this check.
#[test]
fn full_size_model_when_available() {
    let Ok(dir) = std::env::var("FEEDMATCH_MODEL_DIR") else {
        eprintln!("FEEDMATCH_MODEL_DIR unset; skipping");
        return;
    };
    let backend = OnnxBackend::load(dir, None).unwrap();
    assert_eq!(backend.dimension(), 768);
    let out = backend.embed_subtokens("The camera app crashes on startup").unwrap();
    assert!(out.tokens.iter().all(|t| t.vector.len() == 768));

    // same surface token, different context
    let first_apple = |text: &str| {
        let out = backend.embed_subtokens(text).unwrap();
        out.tokens
            .into_iter()
            .find(|t| t.subtoken.text.starts_with("apple"))
            .unwrap()
            .vector
    };
    let a = first_apple("I love apples");
    let b = first_apple("I love Apple macbooks");
    assert_ne!(a, b);
    assert!(feedmatch::cosine_similarity(&a, &b).unwrap() < 0.999);
}
