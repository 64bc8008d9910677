//! Greedy and beam-search decoding over the extended vocabulary.

use super::decoder::{decode, encode_ast_states};
use super::code_encoder::encode_code;
use super::{ModelError, SummaryModel};
use crate::nn::{Scalar, Tape};
use crate::preprocess::{EncodedExample, ExtendedVocab, Vocabulary, BOS, EOS, UNK};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecodeMode {
    Greedy,
    Beam { width: usize, length_penalty: f64 },
}

impl Default for DecodeMode {
    fn default() -> Self {
        DecodeMode::Beam {
            width: 4,
            length_penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Emitted ids in the extended space, without bos/eos.
    pub token_ids: Vec<u32>,
    /// Rendered tokens (extended ids resolved through the example's
    /// code tokens).
    pub tokens: Vec<String>,
    /// Copy-gate value at each emitted step (1.0 when the copy path is
    /// disabled).
    pub gammas: Vec<f64>,
}

/// Distribution over next tokens given a prefix, plus the gate value at
/// the final step.
fn step_distribution<S: Scalar>(
    model: &SummaryModel<S>,
    example: &EncodedExample,
    ext: &ExtendedVocab,
    prefix: &[u32],
) -> Result<(Vec<f64>, f64), ModelError> {
    let tape: Tape<S> = Tape::new(0);
    let b = tape.bind(&model.params);
    let ast = encode_ast_states(&tape, &b, &model.config, example)?;
    let code = encode_code(&tape, &b, &model.config, &example.code_ids, false)?;
    let out = decode(&tape, &b, &model.config, prefix, ast, code, ext, false)?;
    let probs = tape.value(out.probs);
    let last = probs.rows() - 1;
    let row: Vec<f64> = (0..probs.cols())
        .map(|j| probs.at(last, j).to_f64().unwrap())
        .collect();
    let gamma = match out.gamma {
        Some(g) => {
            let g = tape.value(g);
            g.at(g.rows() - 1, 0).to_f64().unwrap()
        }
        None => 1.0,
    };
    Ok((row, gamma))
}

/// Decoder input id for a previously emitted extended id: extended ids
/// have no embedding, so they feed back as unk.
fn feedback_id(id: u32, base_size: usize) -> u32 {
    if (id as usize) < base_size {
        id
    } else {
        UNK
    }
}

pub fn generate<S: Scalar>(
    model: &SummaryModel<S>,
    example: &EncodedExample,
    summary_vocab: &Vocabulary,
    mode: DecodeMode,
) -> Result<DecodeOutput, ModelError> {
    let ext = ExtendedVocab::build(&example.code_tokens, summary_vocab);
    match mode {
        DecodeMode::Greedy => greedy(model, example, summary_vocab, &ext),
        DecodeMode::Beam {
            width,
            length_penalty,
        } => beam(model, example, summary_vocab, &ext, width.max(1), length_penalty),
    }
}

fn greedy<S: Scalar>(
    model: &SummaryModel<S>,
    example: &EncodedExample,
    summary_vocab: &Vocabulary,
    ext: &ExtendedVocab,
) -> Result<DecodeOutput, ModelError> {
    let base = summary_vocab.size();
    let mut prefix = vec![BOS];
    let mut token_ids = Vec::new();
    let mut gammas = Vec::new();
    for _ in 0..model.config.max_summary_len {
        let (row, gamma) = step_distribution(model, example, ext, &prefix)?;
        let best = argmax(&row);
        if best == EOS as usize {
            break;
        }
        token_ids.push(best as u32);
        gammas.push(gamma);
        prefix.push(feedback_id(best as u32, base));
    }
    Ok(render(token_ids, gammas, ext, summary_vocab))
}

#[derive(Clone)]
struct Beam {
    prefix: Vec<u32>,
    emitted: Vec<u32>,
    gammas: Vec<f64>,
    log_prob: f64,
    done: bool,
}

impl Beam {
    fn score(&self, alpha: f64) -> f64 {
        let len = self.emitted.len().max(1) as f64;
        self.log_prob / len.powf(alpha)
    }
}

fn beam<S: Scalar>(
    model: &SummaryModel<S>,
    example: &EncodedExample,
    summary_vocab: &Vocabulary,
    ext: &ExtendedVocab,
    width: usize,
    alpha: f64,
) -> Result<DecodeOutput, ModelError> {
    let base = summary_vocab.size();
    let mut beams = vec![Beam {
        prefix: vec![BOS],
        emitted: Vec::new(),
        gammas: Vec::new(),
        log_prob: 0.0,
        done: false,
    }];
    for _ in 0..model.config.max_summary_len {
        if beams.iter().all(|b| b.done) {
            break;
        }
        let mut candidates: Vec<Beam> = Vec::new();
        for beam in &beams {
            if beam.done {
                candidates.push(beam.clone());
                continue;
            }
            let (row, gamma) = step_distribution(model, example, ext, &beam.prefix)?;
            let mut ranked: Vec<(usize, f64)> = row.iter().copied().enumerate().collect();
            ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
            for &(id, p) in ranked.iter().take(width) {
                let log_p = p.max(f64::MIN_POSITIVE).ln();
                let mut next = beam.clone();
                next.log_prob += log_p;
                if id == EOS as usize {
                    next.done = true;
                } else {
                    next.emitted.push(id as u32);
                    next.gammas.push(gamma);
                    next.prefix.push(feedback_id(id as u32, base));
                }
                candidates.push(next);
            }
        }
        candidates.sort_by(|a, b| {
            b.score(alpha)
                .partial_cmp(&a.score(alpha))
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        candidates.truncate(width);
        beams = candidates;
    }
    let best = beams
        .into_iter()
        .max_by(|a, b| {
            a.score(alpha)
                .partial_cmp(&b.score(alpha))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("at least one beam");
    Ok(render(best.emitted, best.gammas, ext, summary_vocab))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn render(
    token_ids: Vec<u32>,
    gammas: Vec<f64>,
    ext: &ExtendedVocab,
    summary_vocab: &Vocabulary,
) -> DecodeOutput {
    let tokens = token_ids
        .iter()
        .map(|&id| ext.token(id, summary_vocab).to_string())
        .collect();
    DecodeOutput {
        token_ids,
        tokens,
        gammas,
    }
}
