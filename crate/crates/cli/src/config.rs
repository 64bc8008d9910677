//! Run configuration: one JSON file, overridable per-flag.

use serde::{Deserialize, Serialize};
use treesum_core::model::ModelConfig;
use treesum_core::nn::AdamwHyper;
use treesum_core::preprocess::Limits;
use treesum_core::train::TrainOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub ast_vocab_cap: usize,
    pub code_vocab_cap: usize,
    pub summary_vocab_cap: usize,
    pub d: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ff: usize,
    pub k_clip: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub valid_bleu_every: usize,
    pub no_aggregation: bool,
    pub no_copy: bool,
    pub decode_mode: String,
    pub beam_width: usize,
    pub length_penalty: f64,
    pub max_code_len: usize,
    pub max_summary_len: usize,
    pub max_subtrees: usize,
    pub max_subtree_nodes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            ast_vocab_cap: 10_000,
            code_vocab_cap: 30_000,
            summary_vocab_cap: 50_000,
            d: 128,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            ff: 512,
            k_clip: 16,
            dropout: 0.1,
            lr: 1e-4,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            valid_bleu_every: 5,
            no_aggregation: false,
            no_copy: false,
            decode_mode: "greedy".into(),
            beam_width: 4,
            length_penalty: 1.0,
            max_code_len: 200,
            max_summary_len: 30,
            max_subtrees: 40,
            max_subtree_nodes: 100,
        }
    }
}

impl RunConfig {
    pub fn limits(&self) -> Limits {
        Limits {
            max_code_tokens: self.max_code_len,
            max_summary_tokens: self.max_summary_len,
            max_subtrees: self.max_subtrees,
            max_subtree_nodes: self.max_subtree_nodes,
        }
    }

    pub fn model_config(&self, ast_vocab: usize, code_vocab: usize, summary_vocab: usize) -> ModelConfig {
        ModelConfig {
            d: self.d,
            heads: self.heads,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            ff: self.ff,
            k_clip: self.k_clip,
            dropout: self.dropout,
            ast_vocab,
            code_vocab,
            summary_vocab,
            max_code_len: self.max_code_len,
            max_summary_len: self.max_summary_len,
            no_aggregation: self.no_aggregation,
            no_copy: self.no_copy,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            seed: self.seed,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            hyper: AdamwHyper {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
                weight_decay: self.weight_decay,
            },
            valid_bleu_every: self.valid_bleu_every,
        }
    }
}
