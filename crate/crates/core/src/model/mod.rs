//! The summarization model: two-phase tree encoder, relative-position
//! code token encoder, and a transformer decoder with serial AST-then-
//! code cross-attention and a copy gate.

mod ast_encoder;
mod code_encoder;
mod decoder;
mod generate;
mod layers;

pub use ast_encoder::{encode_structure, encode_subtree};
pub use code_encoder::{encode_code, rel_attention_scores};
pub use decoder::{batch_loss, copy_distribution, decode, prepare_example, DecoderOutput, PreparedExample};
pub use generate::{generate, DecodeMode, DecodeOutput};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Initializer, ModelParams, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ff: usize,
    pub k_clip: usize,
    pub dropout: f64,
    pub ast_vocab: usize,
    pub code_vocab: usize,
    pub summary_vocab: usize,
    pub max_code_len: usize,
    pub max_summary_len: usize,
    /// Feed subtree vectors to the decoder without the structure RvNN.
    pub no_aggregation: bool,
    /// Force the gate to 1 and skip the copy path entirely.
    pub no_copy: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            ff: 512,
            k_clip: 16,
            dropout: 0.1,
            ast_vocab: 10_000,
            code_vocab: 30_000,
            summary_vocab: 50_000,
            max_code_len: 200,
            max_summary_len: 30,
            no_aggregation: false,
            no_copy: false,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        assert!(
            self.d % self.heads == 0,
            "hidden size {} not divisible by {} heads",
            self.d,
            self.heads
        );
        self.d / self.heads
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: String,
        found: String,
    },
    #[error("sequence length {len} exceeds maximum {max}")]
    Length { len: usize, max: usize },
    #[error("checkpoint tensor {name:?} unknown to this model (checkpoint format v1)")]
    UnknownTensor { name: String },
    #[error("model is missing tensor {name:?}")]
    MissingTensor { name: String },
}

pub struct SummaryModel<S> {
    pub config: ModelConfig,
    pub params: ModelParams<S>,
}

impl<S: Scalar> SummaryModel<S> {
    /// Fresh model with seeded initialization; the parameter insertion
    /// order is fixed and becomes the checkpoint payload order.
    pub fn new(config: ModelConfig, seed: u64) -> SummaryModel<S> {
        let mut init = Initializer::new(seed);
        let mut p = ModelParams::default();
        let d = config.d;
        let dh = config.head_dim();
        let r = 2 * config.k_clip + 1;

        p.insert("ast.embed", init.embedding(config.ast_vocab, d));
        p.insert("ast.WC", init.projection(d, d));
        p.insert("ast.WA", init.projection(d, d));
        if !config.no_aggregation {
            p.insert("ast.WS", init.projection(d, d));
            p.insert("ast.WB", init.projection(d, d));
        }

        p.insert("code.embed", init.embedding(config.code_vocab, d));
        for i in 0..config.enc_layers {
            let pre = format!("code.L{i}");
            for name in ["q", "k", "v", "o"] {
                p.insert(format!("{pre}.{name}"), init.projection(d, d));
            }
            p.insert(format!("{pre}.ak"), init.embedding(r, dh));
            p.insert(format!("{pre}.av"), init.embedding(r, dh));
            insert_ff_ln(&mut p, &mut init, &pre, d, config.ff, 2);
        }
        p.insert("code.ln.g", init.ones(&[1, d]));
        p.insert("code.ln.b", init.zeros(&[1, d]));

        p.insert("dec.embed", init.embedding(config.summary_vocab, d));
        for i in 0..config.dec_layers {
            let pre = format!("dec.L{i}");
            for name in ["self.q", "self.k", "self.v", "self.o"] {
                p.insert(format!("{pre}.{name}"), init.projection(d, d));
            }
            p.insert(format!("{pre}.self.ak"), init.embedding(r, dh));
            p.insert(format!("{pre}.self.av"), init.embedding(r, dh));
            for name in [
                "xast.q", "xast.k", "xast.v", "xast.o", "xcode.q", "xcode.k", "xcode.v",
                "xcode.o",
            ] {
                p.insert(format!("{pre}.{name}"), init.projection(d, d));
            }
            insert_ff_ln(&mut p, &mut init, &pre, d, config.ff, 4);
        }
        p.insert("dec.ln.g", init.ones(&[1, d]));
        p.insert("dec.ln.b", init.zeros(&[1, d]));
        p.insert("dec.out.w", init.projection(d, config.summary_vocab));
        p.insert("dec.out.b", init.zeros(&[1, config.summary_vocab]));

        if !config.no_copy {
            p.insert("copy.Wcp", init.projection(d, d));
            p.insert("copy.gate.w", init.projection(d, 1));
            p.insert("copy.gate.b", init.zeros(&[1, 1]));
        }

        SummaryModel { config, params: p }
    }

    /// Wraps loaded parameters, verifying names and shapes both ways.
    pub fn from_params(
        config: ModelConfig,
        params: ModelParams<S>,
    ) -> Result<SummaryModel<S>, ModelError> {
        let reference: SummaryModel<S> = SummaryModel::new(config.clone(), 0);
        for (name, tensor) in params.iter() {
            match reference.params.get(name) {
                None => {
                    return Err(ModelError::UnknownTensor {
                        name: name.to_string(),
                    })
                }
                Some(expected) if expected.shape() != tensor.shape() => {
                    return Err(ModelError::Shape {
                        what: name.to_string(),
                        expected: format!("{:?}", expected.shape()),
                        found: format!("{:?}", tensor.shape()),
                    });
                }
                Some(_) => {}
            }
        }
        for name in reference.params.names() {
            if params.get(name).is_none() {
                return Err(ModelError::MissingTensor {
                    name: name.to_string(),
                });
            }
        }
        Ok(SummaryModel { config, params })
    }

    pub fn cast<T: Scalar>(&self) -> SummaryModel<T> {
        SummaryModel {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }
}

fn insert_ff_ln<S: Scalar>(
    p: &mut ModelParams<S>,
    init: &mut Initializer,
    pre: &str,
    d: usize,
    ff: usize,
    ln_count: usize,
) {
    p.insert(format!("{pre}.ff1.w"), init.projection(d, ff));
    p.insert(format!("{pre}.ff1.b"), init.zeros(&[1, ff]));
    p.insert(format!("{pre}.ff2.w"), init.projection(ff, d));
    p.insert(format!("{pre}.ff2.b"), init.zeros(&[1, d]));
    for k in 1..=ln_count {
        p.insert(format!("{pre}.ln{k}.g"), init.ones(&[1, d]));
        p.insert(format!("{pre}.ln{k}.b"), init.zeros(&[1, d]));
    }
}
