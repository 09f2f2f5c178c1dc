//! Averaged perceptron part-of-speech tagger.
//!
//! Greedy left-to-right tagging with a linear model over sparse string
//! features (word identity, affixes, word shape, neighbouring words, the two
//! previous predicted tags, and an optional external lexicon's tag for the
//! surrounding words). Training uses the averaged perceptron update with
//! lazy weight averaging.
//!
//! The model file is JSON:
//!
//! ```text
//! {
//!   "magic": "feedmatch-pos-perceptron",
//!   "version": 1,
//!   "name": "<model name>",
//!   "tagset": ["ADJ", "ADP", ...],            // universal tags, in weight order
//!   "tagdict": {"the": "DET", ...},            // unambiguous frequent words
//!   "lexicon": {"battery": "NN", ...},         // external lexicon tags (free-form)
//!   "weights": {"i suffix ery": {"NOUN": 1.25, ...}, ...}
//! }
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tagger::shape_tag;
use super::{PosTagger, TextprocError, Upos};

const MAGIC: &str = "feedmatch-pos-perceptron";
const VERSION: u32 = 1;
const START: [&str; 2] = ["-START-", "-START2-"];
const END: [&str; 2] = ["-END-", "-END2-"];
const N_TAGS: usize = Upos::ALL.len();

/// Multiclass linear model over the universal tagset with averaged weights.
#[derive(Debug, Clone, Default)]
pub struct AveragedPerceptron {
    weights: HashMap<String, [f64; N_TAGS]>,
    totals: HashMap<String, [f64; N_TAGS]>,
    stamps: HashMap<String, [u64; N_TAGS]>,
    instances: u64,
}

impl AveragedPerceptron {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn predict(&self, features: &[String]) -> Upos {
        let mut scores = [0.0f64; N_TAGS];
        for feat in features {
            if let Some(w) = self.weights.get(feat) {
                for (s, x) in scores.iter_mut().zip(w) {
                    *s += x;
                }
            }
        }
        let mut best = 0;
        for k in 1..N_TAGS {
            if scores[k] > scores[best] {
                best = k;
            }
        }
        Upos::ALL[best]
    }

    pub fn update(&mut self, truth: Upos, guess: Upos, features: &[String]) {
        self.instances += 1;
        if truth == guess {
            return;
        }
        for feat in features {
            self.bump(feat, truth.index(), 1.0);
            self.bump(feat, guess.index(), -1.0);
        }
    }

    fn bump(&mut self, feat: &str, class: usize, delta: f64) {
        if !self.weights.contains_key(feat) {
            self.weights.insert(feat.to_string(), [0.0; N_TAGS]);
            self.totals.insert(feat.to_string(), [0.0; N_TAGS]);
            self.stamps.insert(feat.to_string(), [0; N_TAGS]);
        }
        let w = self.weights.get_mut(feat).expect("inserted above");
        let total = self.totals.get_mut(feat).expect("inserted above");
        let stamp = self.stamps.get_mut(feat).expect("inserted above");
        total[class] += (self.instances - stamp[class]) as f64 * w[class];
        stamp[class] = self.instances;
        w[class] += delta;
    }

    /// Replaces every weight with its average over all updates seen so far.
    pub fn average_weights(&mut self) {
        let instances = self.instances.max(1);
        for (feat, w) in self.weights.iter_mut() {
            let total = &self.totals[feat];
            let stamp = &self.stamps[feat];
            for k in 0..N_TAGS {
                let t = total[k] + (instances - stamp[k]) as f64 * w[k];
                w[k] = (t / instances as f64 * 1000.0).round() / 1000.0;
            }
        }
        self.weights.retain(|_, w| w.iter().any(|&x| x != 0.0));
        self.totals.clear();
        self.stamps.clear();
    }

    fn to_sparse(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        self.weights
            .iter()
            .map(|(feat, w)| {
                let row = Upos::ALL
                    .iter()
                    .zip(w)
                    .filter(|(_, &x)| x != 0.0)
                    .map(|(t, &x)| (t.as_str().to_string(), x))
                    .collect();
                (feat.clone(), row)
            })
            .collect()
    }
}

/// One gold-tagged sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedSentence {
    pub words: Vec<String>,
    pub tags: Vec<Upos>,
}

impl TaggedSentence {
    /// Parses `word/TAG word/TAG ...`; the last `/` separates the tag.
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, TextprocError> {
        let mut words = Vec::new();
        let mut tags = Vec::new();
        for item in line.split_whitespace() {
            let (word, tag) = item
                .rsplit_once('/')
                .ok_or_else(|| TextprocError::MalformedTrainingData {
                    line: line_no,
                    message: format!("token {item:?} has no /TAG suffix"),
                })?;
            let tag = tag
                .parse::<Upos>()
                .map_err(|message| TextprocError::MalformedTrainingData { line: line_no, message })?;
            if word.is_empty() {
                return Err(TextprocError::MalformedTrainingData {
                    line: line_no,
                    message: format!("empty word in {item:?}"),
                });
            }
            words.push(word.to_string());
            tags.push(tag);
        }
        Ok(TaggedSentence { words, tags })
    }

    /// Reads a corpus file: one sentence per line, `#` comments, blank lines ignored.
    pub fn read_corpus(text: &str) -> Result<Vec<Self>, TextprocError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .map(|(i, l)| Self::parse_line(l, i + 1))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingReport {
    pub sentences: usize,
    pub tokens: usize,
    pub iterations: usize,
    /// Training-set accuracy of the (non-averaged) model during each pass.
    pub pass_accuracy: Vec<f64>,
    pub features: usize,
    pub tagdict_entries: usize,
}

pub const BUNDLED_MODEL: &str = include_str!("../../assets/tagger-en.json");

#[derive(Serialize, Deserialize)]
struct ModelFile {
    magic: String,
    version: u32,
    name: String,
    tagset: Vec<String>,
    tagdict: BTreeMap<String, Upos>,
    lexicon: BTreeMap<String, String>,
    weights: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Greedy averaged-perceptron tagger producing universal tags.
#[derive(Debug, Clone)]
pub struct PerceptronTagger {
    model: AveragedPerceptron,
    tagdict: HashMap<String, Upos>,
    lexicon: HashMap<String, String>,
    name: String,
    identity: String,
}

impl PerceptronTagger {
    pub fn new(name: impl Into<String>, lexicon: HashMap<String, String>) -> Self {
        let name = name.into();
        PerceptronTagger {
            model: AveragedPerceptron::new(),
            tagdict: HashMap::new(),
            lexicon,
            identity: format!("perceptron:{name}:untrained"),
            name,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// English model shipped with the crate, trained on `data/tagger`.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_MODEL).expect("bundled tagger model is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TextprocError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| TextprocError::TaggerModelMissing(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, TextprocError> {
        let file: ModelFile = serde_json::from_str(text)
            .map_err(|e| TextprocError::TaggerModelMissing(format!("invalid model file: {e}")))?;
        if file.magic != MAGIC {
            return Err(TextprocError::TaggerModelMissing(format!(
                "bad magic {:?}, expected {MAGIC:?}",
                file.magic
            )));
        }
        if file.version != VERSION {
            return Err(TextprocError::TaggerModelMissing(format!(
                "unsupported model version {}",
                file.version
            )));
        }
        let expected: Vec<&str> = Upos::ALL.iter().map(Upos::as_str).collect();
        if file.tagset != expected {
            return Err(TextprocError::TaggerModelMissing(format!(
                "model tagset {:?} does not match the universal tagset",
                file.tagset
            )));
        }
        let mut weights = HashMap::with_capacity(file.weights.len());
        for (feat, row) in file.weights {
            let mut w = [0.0; N_TAGS];
            for (tag, x) in row {
                let tag: Upos = tag.parse().map_err(TextprocError::TaggerModelMissing)?;
                w[tag.index()] = x;
            }
            weights.insert(feat, w);
        }
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Ok(PerceptronTagger {
            model: AveragedPerceptron {
                weights,
                ..AveragedPerceptron::default()
            },
            tagdict: file.tagdict.into_iter().collect(),
            lexicon: file.lexicon.into_iter().collect(),
            identity: format!("perceptron:{}:{}", file.name, &digest[..16]),
            name: file.name,
        })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            magic: MAGIC.to_string(),
            version: VERSION,
            name: self.name.clone(),
            tagset: Upos::ALL.iter().map(|t| t.as_str().to_string()).collect(),
            tagdict: self.tagdict.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            lexicon: self.lexicon.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
            weights: self.model.to_sparse(),
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TextprocError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Trains from scratch on `sentences` for `iterations` shuffled passes.
    pub fn train(&mut self, sentences: &[TaggedSentence], iterations: usize, seed: u64) -> TrainingReport {
        self.model = AveragedPerceptron::new();
        self.build_tagdict(sentences);
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pass_accuracy = Vec::with_capacity(iterations);
        let tokens: usize = sentences.iter().map(|s| s.words.len()).sum();

        for _ in 0..iterations {
            let mut correct = 0usize;
            for &s in &order {
                let sentence = &sentences[s];
                let words: Vec<&str> = sentence.words.iter().map(String::as_str).collect();
                let ctx = Context::new(&words, &self.lexicon);
                let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
                for (i, &truth) in sentence.tags.iter().enumerate() {
                    let guess = match self.tagdict.get(&ctx.normalized[i + 2]) {
                        Some(&tag) => tag,
                        None => {
                            let feats = ctx.features(i, &prev, &prev2);
                            let guess = self.model.predict(&feats);
                            self.model.update(truth, guess, &feats);
                            guess
                        }
                    };
                    if guess == truth {
                        correct += 1;
                    }
                    prev2 = std::mem::replace(&mut prev, guess.as_str().to_string());
                }
            }
            pass_accuracy.push(correct as f64 / tokens.max(1) as f64);
            order.shuffle(&mut rng);
        }
        self.model.average_weights();

        let digest = hex::encode(Sha256::digest(self.to_json().as_bytes()));
        self.identity = format!("perceptron:{}:{}", self.name, &digest[..16]);
        TrainingReport {
            sentences: sentences.len(),
            tokens,
            iterations,
            pass_accuracy,
            features: self.model.weights.len(),
            tagdict_entries: self.tagdict.len(),
        }
    }

    /// Token accuracy against gold sentences.
    pub fn accuracy(&self, sentences: &[TaggedSentence]) -> f64 {
        let mut correct = 0usize;
        let mut total = 0usize;
        for s in sentences {
            let words: Vec<&str> = s.words.iter().map(String::as_str).collect();
            let guess = self.tag_words(&words);
            correct += guess.iter().zip(&s.tags).filter(|(g, t)| g == t).count();
            total += s.tags.len();
        }
        correct as f64 / total.max(1) as f64
    }

    fn build_tagdict(&mut self, sentences: &[TaggedSentence]) {
        const MIN_FREQ: usize = 6;
        const MIN_RATIO: f64 = 0.97;
        let mut counts: HashMap<String, HashMap<Upos, usize>> = HashMap::new();
        for s in sentences {
            for (w, &t) in s.words.iter().zip(&s.tags) {
                *counts.entry(normalize(w)).or_default().entry(t).or_default() += 1;
            }
        }
        self.tagdict = counts
            .into_iter()
            .filter_map(|(word, tags)| {
                let n: usize = tags.values().sum();
                let (&tag, &best) = tags.iter().max_by_key(|(t, c)| (**c, std::cmp::Reverse(**t)))?;
                (n >= MIN_FREQ && best as f64 / n as f64 >= MIN_RATIO).then_some((word, tag))
            })
            .collect();
    }

    /// Reads a lexicon in Brill format (`word TAG [TAG ...]`, `;;;` comments);
    /// the first listed tag wins.
    pub fn read_lexicon(text: &str) -> HashMap<String, String> {
        text.lines()
            .filter(|l| !l.starts_with(";;;"))
            .filter_map(|l| {
                let mut parts = l.split_whitespace();
                let word = parts.next()?;
                let tag = parts.next()?.split('|').next()?;
                Some((word.to_string(), tag.to_string()))
            })
            .collect()
    }
}

impl PosTagger for PerceptronTagger {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn tag_words(&self, words: &[&str]) -> Vec<Upos> {
        let ctx = Context::new(words, &self.lexicon);
        let mut tags = Vec::with_capacity(words.len());
        let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
        for (i, word) in words.iter().enumerate() {
            let tag = match (shape_tag(word), self.tagdict.get(&ctx.normalized[i + 2])) {
                (Some(tag), _) | (None, Some(&tag)) => tag,
                (None, None) => self.model.predict(&ctx.features(i, &prev, &prev2)),
            };
            tags.push(tag);
            prev2 = std::mem::replace(&mut prev, tag.as_str().to_string());
        }
        tags
    }
}

/// Padded per-sentence views used for feature extraction.
struct Context<'a> {
    raw: Vec<&'a str>,
    normalized: Vec<String>,
    lexical: Vec<String>,
}

impl<'a> Context<'a> {
    fn new(words: &[&'a str], lexicon: &HashMap<String, String>) -> Self {
        let mut raw = vec![START[0], START[1]];
        raw.extend_from_slice(words);
        raw.extend_from_slice(&END);
        let normalized = raw
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if i < 2 || i >= words.len() + 2 {
                    w.to_string()
                } else {
                    normalize(w)
                }
            })
            .collect();
        let lexical = raw
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if i < 2 || i >= words.len() + 2 {
                    return w.to_string();
                }
                lexicon
                    .get(*w)
                    .or_else(|| lexicon.get(&w.to_lowercase()))
                    .cloned()
                    .unwrap_or_else(|| "-".to_string())
            })
            .collect();
        Context {
            raw,
            normalized,
            lexical,
        }
    }

    fn features(&self, i: usize, prev: &str, prev2: &str) -> Vec<String> {
        let p = i + 2;
        let word = &self.normalized[p];
        let raw = self.raw[p];
        let sentence_initial = i == 0 || matches!(self.raw[p - 1], "." | "!" | "?" | "!!" | "...");
        let mut f = vec![
            "bias".to_string(),
            format!("i suffix {}", suffix(word, 3)),
            format!("i suffix2 {}", suffix(word, 2)),
            format!("i pref1 {}", word.chars().next().unwrap_or(' ')),
            format!("i-1 tag {prev}"),
            format!("i-2 tag {prev2}"),
            format!("i tag+i-2 tag {prev} {prev2}"),
            format!("i word {word}"),
            format!("i-1 tag+i word {prev} {word}"),
            format!("i-1 word {}", self.normalized[p - 1]),
            format!("i-1 suffix {}", suffix(&self.normalized[p - 1], 3)),
            format!("i-2 word {}", self.normalized[p - 2]),
            format!("i+1 word {}", self.normalized[p + 1]),
            format!("i+1 suffix {}", suffix(&self.normalized[p + 1], 3)),
            format!("i+2 word {}", self.normalized[p + 2]),
            format!("i shape {}", shape(raw)),
            format!("i lex {}", self.lexical[p]),
            format!("i-1 lex {}", self.lexical[p - 1]),
            format!("i+1 lex {}", self.lexical[p + 1]),
            format!("i-1 tag+i lex {prev} {}", self.lexical[p]),
            format!("i lex+i+1 lex {} {}", self.lexical[p], self.lexical[p + 1]),
        ];
        if raw.chars().next().is_some_and(char::is_uppercase) {
            f.push(
                if sentence_initial {
                    "i cap initial"
                } else {
                    "i cap inner"
                }
                .to_string(),
            );
        }
        f
    }
}

fn normalize(word: &str) -> String {
    let digits = word.chars().filter(char::is_ascii_digit).count();
    if digits == 4 && word.chars().count() == 4 {
        "!YEAR".to_string()
    } else if digits > 0 && word.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        "!DIGITS".to_string()
    } else {
        word.to_lowercase()
    }
}

fn suffix(word: &str, n: usize) -> &str {
    let start = word.char_indices().rev().nth(n - 1).map(|(i, _)| i).unwrap_or(0);
    &word[start..]
}

fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else if c.is_alphabetic() {
            'a'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
        if out.chars().count() >= 5 {
            break;
        }
    }
    out
}
