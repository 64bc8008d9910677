//! Transformer decoder with serial cross-attention (AST states first,
//! then code states within every layer), a copy distribution over code
//! positions, the gated mixture over the extended vocabulary, and the
//! teacher-forced likelihood loss.

use super::ast_encoder::encode_structure;
use super::code_encoder::encode_code;
use super::layers::{attention, feed_forward, layer_norm, linear, AttentionSpec};
use super::{ModelConfig, ModelError};
use crate::nn::{Bindings, Scalar, Tape, Var};
use crate::preprocess::{EncodedExample, ExtendedVocab, Vocabulary, BOS, EOS};

pub struct DecoderOutput {
    /// Token distribution per step over the extended id space (the base
    /// summary vocabulary when the copy path is disabled).
    pub probs: Var,
    /// Generation distribution over the base vocabulary.
    pub generation: Var,
    /// Final decoder states, one row per step.
    pub hidden: Var,
    /// Copy gate per step; absent when the copy path is disabled.
    pub gamma: Option<Var>,
}

/// Full teacher-forced decoder pass over a summary prefix.
pub fn decode<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    config: &ModelConfig,
    prefix_ids: &[u32],
    ast_states: Var,
    code_states: Var,
    ext: &ExtendedVocab,
    train: bool,
) -> Result<DecoderOutput, ModelError> {
    if prefix_ids.is_empty() || prefix_ids.len() > config.max_summary_len + 1 {
        return Err(ModelError::Length {
            len: prefix_ids.len(),
            max: config.max_summary_len + 1,
        });
    }
    if tape.shape(ast_states)[1] != config.d || tape.shape(code_states)[1] != config.d {
        return Err(ModelError::Shape {
            what: "encoder states".into(),
            expected: format!("[*, {}]", config.d),
            found: format!(
                "{:?} / {:?}",
                tape.shape(ast_states),
                tape.shape(code_states)
            ),
        });
    }
    if !config.no_copy && ext.base_size != config.summary_vocab {
        return Err(ModelError::Shape {
            what: "extended vocabulary base".into(),
            expected: format!("{}", config.summary_vocab),
            found: format!("{}", ext.base_size),
        });
    }
    let p = if train { config.dropout } else { 0.0 };
    let mut x = tape.embed(b.var("dec.embed"), prefix_ids);
    x = tape.dropout(x, p);
    for i in 0..config.dec_layers {
        let pre = format!("dec.L{i}");
        let self_spec = AttentionSpec {
            prefix: &format!("{pre}.self"),
            heads: config.heads,
            rel_clip: Some(config.k_clip),
            causal: true,
        };
        let normed = layer_norm(tape, b, x, &format!("{pre}.ln1"));
        let self_attn = attention(tape, b, normed, normed, &self_spec);
        x = tape.add(x, tape.dropout(self_attn, p));

        // Serial integration: query the AST states first, then chain
        // into the code states.
        let ast_spec = AttentionSpec {
            prefix: &format!("{pre}.xast"),
            heads: config.heads,
            rel_clip: None,
            causal: false,
        };
        let normed = layer_norm(tape, b, x, &format!("{pre}.ln2"));
        let z = attention(tape, b, normed, ast_states, &ast_spec);
        x = tape.add(x, tape.dropout(z, p));

        let code_spec = AttentionSpec {
            prefix: &format!("{pre}.xcode"),
            heads: config.heads,
            rel_clip: None,
            causal: false,
        };
        let normed = layer_norm(tape, b, x, &format!("{pre}.ln3"));
        let y = attention(tape, b, normed, code_states, &code_spec);
        x = tape.add(x, tape.dropout(y, p));

        let normed = layer_norm(tape, b, x, &format!("{pre}.ln4"));
        let ff = feed_forward(tape, b, normed, &pre);
        x = tape.add(x, tape.dropout(ff, p));
    }
    let hidden = layer_norm(tape, b, x, "dec.ln");
    let logits = linear(tape, b, hidden, "dec.out.w", "dec.out.b");
    let generation = tape.softmax_rows(logits);

    if config.no_copy {
        return Ok(DecoderOutput {
            probs: generation,
            generation,
            hidden,
            gamma: None,
        });
    }

    let copy = copy_distribution(tape, b, code_states, hidden);
    let gate_logit = linear(tape, b, hidden, "copy.gate.w", "copy.gate.b");
    let gamma = tape.sigmoid(gate_logit);
    let probs = tape.mix_copy(
        generation,
        copy,
        gamma,
        &ext.code_position_ids,
        ext.size(),
    );
    Ok(DecoderOutput {
        probs,
        generation,
        hidden,
        gamma: Some(gamma),
    })
}

/// Attention distribution over code positions:
/// `P(i) ∝ exp(< W^cp h_i^(c), h_t^(s) >)`.
pub fn copy_distribution<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    code_states: Var,
    decoder_states: Var,
) -> Var {
    let mapped = tape.matmul(decoder_states, b.var("copy.Wcp"));
    let scores = tape.matmul_nt(mapped, code_states);
    tape.softmax_rows(scores)
}

/// One example with everything the loss needs precomputed.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub example: EncodedExample,
    pub ext: ExtendedVocab,
    /// Decoder input: bos followed by the gold base-vocabulary ids.
    pub input_ids: Vec<u32>,
    /// Targets: gold ids (extended space unless `no_copy`) then eos.
    pub target_ids: Vec<u32>,
}

pub fn prepare_example(
    example: &EncodedExample,
    summary_vocab: &Vocabulary,
    no_copy: bool,
) -> PreparedExample {
    let ext = ExtendedVocab::build(&example.code_tokens, summary_vocab);
    let mut input_ids = Vec::with_capacity(example.summary_ids.len() + 1);
    input_ids.push(BOS);
    input_ids.extend_from_slice(&example.summary_ids);
    let mut target_ids: Vec<u32> = if no_copy {
        example.summary_ids.clone()
    } else {
        example
            .summary_tokens
            .iter()
            .map(|tok| ext.target_id(tok, summary_vocab))
            .collect()
    };
    target_ids.push(EOS);
    PreparedExample {
        example: example.clone(),
        ext,
        input_ids,
        target_ids,
    }
}

/// Encodes one example's subtrees (and structure tree unless ablated)
/// into the decoder-facing AST state matrix.
pub fn encode_ast_states<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    config: &ModelConfig,
    example: &EncodedExample,
) -> Result<Var, ModelError> {
    if example.subtrees.is_empty() {
        return Err(ModelError::Shape {
            what: "subtree set".into(),
            expected: "at least one subtree".into(),
            found: "none".into(),
        });
    }
    // One embedding lookup for every node of every subtree.
    let all_ids: Vec<u32> = example
        .subtrees
        .iter()
        .flat_map(|t| t.label_ids.iter().copied())
        .collect();
    let all_rows = tape.embed(b.var("ast.embed"), &all_ids);
    let mut vectors = Vec::with_capacity(example.subtrees.len());
    let mut offset = 0;
    for tree in &example.subtrees {
        let rows = tape.slice_rows(all_rows, offset, tree.label_ids.len());
        offset += tree.label_ids.len();
        vectors.push(super::ast_encoder::encode_subtree_rows(tape, b, tree, rows));
    }
    if config.no_aggregation {
        return Ok(tape.concat_rows(&vectors));
    }
    let aggregated = encode_structure(tape, b, &vectors, &example.edges)?;
    Ok(tape.concat_rows(&aggregated))
}

/// Mean negative log-likelihood per summary token over a batch,
/// teacher-forced.
pub fn batch_loss<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    config: &ModelConfig,
    batch: &[PreparedExample],
    train: bool,
) -> Result<Var, ModelError> {
    assert!(!batch.is_empty(), "empty batch");
    let mut token_losses = Vec::new();
    for prepared in batch {
        let ast_states = encode_ast_states(tape, b, config, &prepared.example)?;
        let code_states = encode_code(tape, b, config, &prepared.example.code_ids, train)?;
        let out = decode(
            tape,
            b,
            config,
            &prepared.input_ids,
            ast_states,
            code_states,
            &prepared.ext,
            train,
        )?;
        let picked = tape.gather_cols(out.probs, &prepared.target_ids);
        token_losses.push(tape.log(picked));
    }
    let all = tape.concat_rows(&token_losses);
    Ok(tape.scale(tape.mean_all(all), S::fr(-1.0)))
}
