use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use tract_onnx::prelude::*;

use super::{EmbeddingBackend, EmbeddingError, SubtokenEmbeddings, TokenEmbedding, WordPieceTokenizer};

type Plan = TypedRunnableModel<TypedModel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Input {
    Ids,
    Mask,
    TokenTypes,
}

/// A BERT-family encoder exported to ONNX, run on CPU.
///
/// The model directory holds `model.onnx` (inputs `input_ids` and
/// `attention_mask`, optionally `token_type_ids`, first output the final
/// hidden states `[1, seq, dim]`) and a WordPiece `vocab.txt`. An optional
/// `config.json` supplies `max_position_embeddings`, and an optional
/// `tokenizer_config.json` supplies `do_lower_case`.
pub struct OnnxBackend {
    plan: Plan,
    inputs: Vec<Input>,
    tokenizer: WordPieceTokenizer,
    dimension: usize,
    max_len: usize,
    identity: String,
}

fn model_err(e: impl std::fmt::Display) -> EmbeddingError {
    EmbeddingError::ModelMissing(e.to_string())
}

fn json_field(path: &Path, key: &str) -> Option<serde_json::Value> {
    let text = fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get(key).cloned()
}

impl OnnxBackend {
    pub fn load(dir: impl AsRef<Path>, max_sequence_length: Option<usize>) -> Result<Self, EmbeddingError> {
        let dir = dir.as_ref();
        let model_path = dir.join("model.onnx");
        let bytes = fs::read(&model_path).map_err(|e| model_err(format!("{}: {e}", model_path.display())))?;
        let lowercase = json_field(&dir.join("tokenizer_config.json"), "do_lower_case")
            .and_then(|v| v.as_bool())
            .unwrap_or(true);
        let tokenizer = WordPieceTokenizer::from_file(dir.join("vocab.txt"), lowercase)?;
        let max_len = max_sequence_length
            .or_else(|| {
                json_field(&dir.join("config.json"), "max_position_embeddings")
                    .and_then(|v| v.as_u64())
                    .map(|v| v as usize)
            })
            .unwrap_or(512);
        if max_len < 3 {
            return Err(EmbeddingError::Config(format!(
                "max sequence length {max_len} is too small"
            )));
        }

        let mut model = tract_onnx::onnx()
            .model_for_read(&mut bytes.as_slice())
            .map_err(model_err)?;
        let mut inputs = Vec::new();
        for (i, outlet) in model
            .input_outlets()
            .map_err(model_err)?
            .to_vec()
            .into_iter()
            .enumerate()
        {
            let name = model.node(outlet.node).name.clone();
            let kind = if name.contains("mask") {
                Input::Mask
            } else if name.contains("type") {
                Input::TokenTypes
            } else if name.contains("ids") || i == 0 {
                Input::Ids
            } else {
                return Err(model_err(format!("unexpected model input {name:?}")));
            };
            inputs.push(kind);
        }
        if !inputs.contains(&Input::Ids) {
            return Err(model_err("model has no input_ids input"));
        }
        let seq = model.symbols.sym("S");
        for i in 0..inputs.len() {
            model
                .set_input_fact(
                    i,
                    InferenceFact::dt_shape(i64::datum_type(), tvec!(1.to_dim(), seq.to_dim())),
                )
                .map_err(model_err)?;
        }
        let plan = model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| model_err(format!("{e:#}")))?;

        let digest = hex::encode(Sha256::digest(&bytes));
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("model").to_string();
        let mut backend = OnnxBackend {
            plan,
            inputs,
            tokenizer,
            dimension: 0,
            max_len,
            identity: format!("onnx:{name}:{}", &digest[..16]),
        };
        let probe = backend.forward(&[2, 3])?;
        backend.dimension = probe.shape()[2];
        Ok(backend)
    }

    fn forward(&self, ids: &[i64]) -> Result<Tensor, EmbeddingError> {
        let n = ids.len();
        let array = |v: Vec<i64>| -> Result<TValue, EmbeddingError> {
            let a =
                tract_ndarray::Array2::from_shape_vec((1, n), v).map_err(|e| EmbeddingError::Backend(e.to_string()))?;
            Ok(Tensor::from(a).into())
        };
        let mut values = TVec::new();
        for kind in &self.inputs {
            values.push(match kind {
                Input::Ids => array(ids.to_vec())?,
                Input::Mask => array(vec![1; n])?,
                Input::TokenTypes => array(vec![0; n])?,
            });
        }
        let mut out = self
            .plan
            .run(values)
            .map_err(|e| EmbeddingError::Backend(format!("{e:#}")))?;
        let hidden = out.remove(0).into_tensor();
        let shape = hidden.shape();
        if shape.len() != 3 || shape[0] != 1 || shape[1] != n {
            return Err(EmbeddingError::Backend(format!(
                "expected output [1, {n}, dim], got {shape:?}"
            )));
        }
        Ok(hidden)
    }

    pub fn tokenizer(&self) -> &WordPieceTokenizer {
        &self.tokenizer
    }
}

impl EmbeddingBackend for OnnxBackend {
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
        let enc = self.tokenizer.encode(text, self.max_len);
        let ids: Vec<i64> = enc.ids.iter().map(|&i| i as i64).collect();
        let hidden = self.forward(&ids)?;
        let view = hidden
            .to_array_view::<f32>()
            .map_err(|e| EmbeddingError::Backend(e.to_string()))?;
        let tokens = enc
            .subtokens
            .into_iter()
            .enumerate()
            .map(|(i, subtoken)| TokenEmbedding {
                subtoken,
                vector: (0..self.dimension).map(|d| view[[0, i, d]]).collect(),
            })
            .collect();
        Ok(SubtokenEmbeddings {
            tokens,
            truncated: enc.truncated,
        })
    }
}
