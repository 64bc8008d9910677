//! Teacher-forced training with AdamW, per-epoch validation, early
//! stopping, and best-checkpoint tracking.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{bleu_cn, ScoredPair};
use crate::model::{
    batch_loss, generate, prepare_example, DecodeMode, ModelError, PreparedExample, SummaryModel,
};
use crate::nn::{adamw_step, save_checkpoint, AdamwHyper, OptimState, Tape};
use crate::preprocess::{EncodedExample, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub hyper: AdamwHyper,
    /// Compute validation BLEU every this many epochs (greedy decoding
    /// is the expensive part of an epoch); 1 scores every epoch.
    pub valid_bleu_every: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            seed: 1,
            batch_size: 32,
            max_epochs: 200,
            patience: 20,
            hyper: AdamwHyper::default(),
            valid_bleu_every: 5,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    /// Most recently computed validation BLEU (x100 scale).
    pub valid_bleu: f64,
    pub seconds: f64,
    /// Set when this epoch produced a new best validation loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

pub struct TrainOutcome {
    pub model: SummaryModel<f32>,
    pub log: Vec<TrainLogRecord>,
    pub best_valid_loss: f64,
    pub stopped_early: bool,
}

/// Trains in place, returning the best-validation-loss parameters. When
/// `checkpoint_path` is set, the best parameters are written there each
/// time validation improves.
pub fn train(
    mut model: SummaryModel<f32>,
    train_set: &[EncodedExample],
    valid_set: &[EncodedExample],
    summary_vocab: &Vocabulary,
    options: &TrainOptions,
    checkpoint_path: Option<&Path>,
    mut on_epoch: impl FnMut(&TrainLogRecord),
) -> Result<TrainOutcome, ModelError> {
    assert!(!train_set.is_empty(), "empty training set");
    assert!(!valid_set.is_empty(), "empty validation set");
    let prepared_train: Vec<PreparedExample> = train_set
        .iter()
        .map(|e| prepare_example(e, summary_vocab, model.config.no_copy))
        .collect();
    let prepared_valid: Vec<PreparedExample> = valid_set
        .iter()
        .map(|e| prepare_example(e, summary_vocab, model.config.no_copy))
        .collect();

    let mut state = OptimState::new(&model.params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(0x9e3779b9));
    let mut best_valid = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut since_best = 0usize;
    let mut log = Vec::new();
    let mut last_bleu = 0.0;
    let mut stopped_early = false;

    for epoch in 1..=options.max_epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..prepared_train.len()).collect();
        order.shuffle(&mut shuffle_rng);

        let mut nll_sum = 0.0;
        let mut token_sum = 0usize;
        for (batch_idx, chunk) in order.chunks(options.batch_size).enumerate() {
            let batch: Vec<PreparedExample> =
                chunk.iter().map(|&i| prepared_train[i].clone()).collect();
            let tape_seed = options
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((epoch * 10_000 + batch_idx) as u64);
            let tape: Tape<f32> = Tape::new(tape_seed);
            let bindings = tape.bind(&model.params);
            let loss = batch_loss(&tape, &bindings, &model.config, &batch, true)?;
            let loss_value = tape.value(loss).item() as f64;
            let grads = tape.backward(loss).expect("loss is scalar");
            adamw_step(&mut model.params, &grads, &mut state, &options.hyper);
            let tokens: usize = batch.iter().map(|p| p.target_ids.len()).sum();
            nll_sum += loss_value * tokens as f64;
            token_sum += tokens;
        }
        let train_loss = nll_sum / token_sum.max(1) as f64;

        let valid_loss = evaluate_loss(&model, &prepared_valid, options.batch_size)?;
        if options.valid_bleu_every > 0
            && (epoch % options.valid_bleu_every == 0 || epoch == options.max_epochs)
        {
            last_bleu = validation_bleu(&model, valid_set, summary_vocab)? * 100.0;
        }

        let mut record = TrainLogRecord {
            epoch,
            train_loss,
            valid_loss,
            valid_bleu: last_bleu,
            seconds: started.elapsed().as_secs_f64(),
            checkpoint: None,
        };
        if valid_loss < best_valid {
            best_valid = valid_loss;
            best_params = model.params.clone();
            since_best = 0;
            if let Some(path) = checkpoint_path {
                save_checkpoint(&best_params, path).map_err(|e| ModelError::Shape {
                    what: format!("checkpoint write {}", path.display()),
                    expected: "writable path".into(),
                    found: e.to_string(),
                })?;
                record.checkpoint = Some(path.display().to_string());
            } else {
                record.checkpoint = Some(String::from("<in-memory>"));
            }
        } else {
            since_best += 1;
        }
        on_epoch(&record);
        log.push(record);
        if since_best >= options.patience {
            stopped_early = true;
            break;
        }
    }

    Ok(TrainOutcome {
        model: SummaryModel {
            config: model.config,
            params: best_params,
        },
        log,
        best_valid_loss: best_valid,
        stopped_early,
    })
}

/// Mean per-token negative log-likelihood without dropout or updates.
pub fn evaluate_loss(
    model: &SummaryModel<f32>,
    prepared: &[PreparedExample],
    batch_size: usize,
) -> Result<f64, ModelError> {
    let mut nll_sum = 0.0;
    let mut token_sum = 0usize;
    for chunk in prepared.chunks(batch_size) {
        let tape: Tape<f32> = Tape::new(0);
        let bindings = tape.bind(&model.params);
        let loss = batch_loss(&tape, &bindings, &model.config, chunk, false)?;
        let tokens: usize = chunk.iter().map(|p| p.target_ids.len()).sum();
        nll_sum += tape.value(loss).item() as f64 * tokens as f64;
        token_sum += tokens;
    }
    Ok(nll_sum / token_sum.max(1) as f64)
}

/// Greedy-decoding BLEU-CN against gold summaries, in [0, 1].
pub fn validation_bleu(
    model: &SummaryModel<f32>,
    examples: &[EncodedExample],
    summary_vocab: &Vocabulary,
) -> Result<f64, ModelError> {
    let mut pairs = Vec::with_capacity(examples.len());
    for example in examples {
        let out = generate(model, example, summary_vocab, DecodeMode::Greedy)?;
        pairs.push(ScoredPair {
            hypothesis: out.tokens,
            reference: example.summary_tokens.clone(),
        });
    }
    Ok(bleu_cn(&pairs))
}

/// Loads the encoded dataset triple produced by preprocessing.
pub fn load_vocab(path: &Path) -> std::io::Result<Vocabulary> {
    let text = std::fs::read_to_string(path)?;
    Vocabulary::from_json(&text)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))
}

/// Conventional vocabulary file names inside a preprocess output dir.
pub fn vocab_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join("vocab.ast.json"),
        dir.join("vocab.code.json"),
        dir.join("vocab.summary.json"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{
        build_vocab, encode_example, generate_records, preprocess_record, Channel, Limits,
    };

    fn toy_setup(n: usize) -> (Vec<EncodedExample>, Vocabulary, ModelConfig) {
        let records = generate_records(11, n);
        let limits = Limits::default();
        let examples: Vec<_> = records
            .iter()
            .map(|r| preprocess_record(&r.id, &r.code, r.summary.as_deref(), &limits).unwrap())
            .collect();
        let ast_vocab = build_vocab(&examples, Channel::Ast, 2000);
        let code_vocab = build_vocab(&examples, Channel::Code, 2000);
        let summary_vocab = build_vocab(&examples, Channel::Summary, 2000);
        let encoded: Vec<_> = examples
            .iter()
            .map(|e| encode_example(e, &ast_vocab, &code_vocab, &summary_vocab))
            .collect();
        let config = ModelConfig {
            d: 32,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ff: 64,
            k_clip: 8,
            dropout: 0.0,
            ast_vocab: ast_vocab.size(),
            code_vocab: code_vocab.size(),
            summary_vocab: summary_vocab.size(),
            max_code_len: 200,
            max_summary_len: 30,
            no_aggregation: false,
            no_copy: false,
        };
        (encoded, summary_vocab, config)
    }

    #[test]
    fn loss_decreases_over_first_ten_steps() {
        let (encoded, vocab, config) = toy_setup(4);
        let mut model: SummaryModel<f32> = SummaryModel::new(config.clone(), 3);
        let prepared: Vec<_> = encoded
            .iter()
            .map(|e| prepare_example(e, &vocab, false))
            .collect();
        let hyper = AdamwHyper {
            lr: 1e-3,
            ..AdamwHyper::default()
        };
        let mut state = OptimState::new(&model.params);
        let mut losses = Vec::new();
        for _ in 0..10 {
            let tape: Tape<f32> = Tape::new(0);
            let b = tape.bind(&model.params);
            let loss = batch_loss(&tape, &b, &config, &prepared, false).unwrap();
            losses.push(tape.value(loss).item());
            let grads = tape.backward(loss).unwrap();
            adamw_step(&mut model.params, &grads, &mut state, &hyper);
        }
        for w in losses.windows(2) {
            assert!(w[1] < w[0], "loss not decreasing: {losses:?}");
        }
    }

    #[test]
    fn early_stopping_and_best_checkpoint() {
        let (encoded, vocab, config) = toy_setup(6);
        let model: SummaryModel<f32> = SummaryModel::new(config, 3);
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("best.ckpt");
        let options = TrainOptions {
            seed: 5,
            batch_size: 4,
            max_epochs: 6,
            patience: 2,
            hyper: AdamwHyper {
                lr: 1e-3,
                ..AdamwHyper::default()
            },
            valid_bleu_every: 0,
        };
        let outcome = train(
            model,
            &encoded[..4],
            &encoded[4..],
            &vocab,
            &options,
            Some(&ckpt),
            |_| {},
        )
        .unwrap();
        assert!(ckpt.exists());
        // Epochs strictly increasing, best tracks the minimum.
        let mut best = f64::INFINITY;
        for (i, rec) in outcome.log.iter().enumerate() {
            assert_eq!(rec.epoch, i + 1);
            if rec.valid_loss < best {
                best = rec.valid_loss;
                assert!(rec.checkpoint.is_some());
            }
        }
        assert_eq!(best, outcome.best_valid_loss);

        // Reloading the checkpoint reproduces the best validation loss.
        let loaded = crate::nn::load_checkpoint::<f32>(&ckpt).unwrap();
        let reloaded = SummaryModel::from_params(outcome.model.config.clone(), loaded).unwrap();
        let prepared: Vec<_> = encoded[4..]
            .iter()
            .map(|e| prepare_example(e, &vocab, false))
            .collect();
        let loss = evaluate_loss(&reloaded, &prepared, 4).unwrap();
        assert!((loss - outcome.best_valid_loss).abs() < 1e-5);
    }
}
