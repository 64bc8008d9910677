//! Code token encoder: transformer layers whose self-attention carries
//! clipped relative-position representations on both the key and value
//! sides.

use super::layers::{attention, feed_forward, layer_norm, AttentionSpec};
use super::{ModelConfig, ModelError};
use crate::nn::{Bindings, Scalar, Tape, Var};

/// Encodes a code token id sequence into one state per token.
pub fn encode_code<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    config: &ModelConfig,
    ids: &[u32],
    train: bool,
) -> Result<Var, ModelError> {
    if ids.is_empty() || ids.len() > config.max_code_len {
        return Err(ModelError::Length {
            len: ids.len(),
            max: config.max_code_len,
        });
    }
    let p = if train { config.dropout } else { 0.0 };
    let mut x = tape.embed(b.var("code.embed"), ids);
    x = tape.dropout(x, p);
    for i in 0..config.enc_layers {
        let pre = format!("code.L{i}");
        let spec = AttentionSpec {
            prefix: &pre,
            heads: config.heads,
            rel_clip: Some(config.k_clip),
            causal: false,
        };
        let normed = layer_norm(tape, b, x, &format!("{pre}.ln1"));
        let attn = attention(tape, b, normed, normed, &spec);
        x = tape.add(x, tape.dropout(attn, p));
        let normed = layer_norm(tape, b, x, &format!("{pre}.ln2"));
        let ff = feed_forward(tape, b, normed, &pre);
        x = tape.add(x, tape.dropout(ff, p));
    }
    Ok(layer_norm(tape, b, x, "code.ln"))
}

/// Raw single-head relative-position attention scores
/// `e[i, j] = (q_i · k_j + q_i · a^K_{clip(j-i)}) / sqrt(d)`, exposed
/// for direct verification.
pub fn rel_attention_scores<S: Scalar>(
    tape: &Tape<S>,
    q: Var,
    k: Var,
    ak: Var,
    clip: usize,
) -> Var {
    let n = tape.shape(q)[0];
    let dh = tape.shape(q)[1];
    let content = tape.matmul_nt(q, k);
    let qa = tape.matmul_nt(q, ak);
    let bias = tape.rel_bias(qa, n, clip);
    tape.scale(tape.add(content, bias), S::fr(1.0 / (dh as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SummaryModel;
    use crate::nn::Tensor;
    use approx::assert_abs_diff_eq;

    fn tiny() -> ModelConfig {
        ModelConfig {
            d: 8,
            heads: 2,
            enc_layers: 1,
            dec_layers: 1,
            ff: 16,
            k_clip: 3,
            dropout: 0.0,
            ast_vocab: 16,
            code_vocab: 24,
            summary_vocab: 16,
            max_code_len: 40,
            max_summary_len: 10,
            no_aggregation: false,
            no_copy: false,
        }
    }

    #[test]
    fn rejects_over_length_input() {
        let model: SummaryModel<f64> = SummaryModel::new(tiny(), 3);
        let tape = Tape::new(0);
        let b = tape.bind(&model.params);
        let ids = vec![1u32; 41];
        assert!(matches!(
            encode_code(&tape, &b, &model.config, &ids, false),
            Err(ModelError::Length { len: 41, max: 40 })
        ));
        assert!(matches!(
            encode_code(&tape, &b, &model.config, &[], false),
            Err(ModelError::Length { len: 0, .. })
        ));
    }

    #[test]
    fn output_shape_and_determinism() {
        let model: SummaryModel<f64> = SummaryModel::new(tiny(), 3);
        let run = || {
            let tape = Tape::new(0);
            let b = tape.bind(&model.params);
            let out = encode_code(&tape, &b, &model.config, &[4, 5, 6, 7], false).unwrap();
            tape.value(out)
        };
        let a = run();
        assert_eq!(a.shape(), [4, 8]);
        assert_eq!(a, run());
    }

    #[test]
    fn identical_tokens_give_toeplitz_scores() {
        // With every token equal, e depends only on clip(j - i): the
        // score matrix is constant along diagonals and saturates past
        // the clip distance.
        let tape: Tape<f64> = Tape::new(0);
        let n = 9;
        let dh = 4;
        let clip = 2;
        let row: Vec<f64> = vec![0.3, -0.8, 0.5, 0.1];
        let q = tape.constant(Tensor::matrix(n, dh, row.repeat(n)));
        let k = tape.constant(Tensor::matrix(n, dh, row.repeat(n)));
        let ak = tape.constant(Tensor::matrix(
            2 * clip + 1,
            dh,
            (0..(2 * clip + 1) * dh).map(|i| (i as f64) * 0.07 - 0.2).collect(),
        ));
        let e = tape.value(rel_attention_scores(&tape, q, k, ak, clip));
        for i in 0..n {
            for j in 0..n {
                // Same relative offset implies the same score.
                for s in 1..3 {
                    if i + s < n && j + s < n {
                        assert_abs_diff_eq!(e.at(i, j), e.at(i + s, j + s), epsilon = 1e-12);
                    }
                }
                // Offsets beyond the clip distance collapse.
                if j >= i + clip && j + 1 < n {
                    assert_abs_diff_eq!(e.at(i, j), e.at(i, j + 1), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn hand_computed_two_token_attention() {
        // Single head, d = 2, n = 2: evaluate e, alpha, o longhand and
        // compare against the op graph.
        let q_rows = [[0.5, -0.25], [1.0, 0.75]];
        let k_rows = [[0.2, 0.4], [-0.6, 0.1]];
        let v_rows = [[1.0, 0.0], [0.0, 2.0]];
        let clip = 1usize;
        let ak_rows = [[0.3, -0.1], [0.0, 0.2], [-0.4, 0.5]]; // offsets -1, 0, +1
        let av_rows = [[0.1, 0.1], [-0.2, 0.3], [0.25, 0.0]];

        let tape: Tape<f64> = Tape::new(0);
        let q = tape.constant(Tensor::matrix(2, 2, q_rows.concat()));
        let k = tape.constant(Tensor::matrix(2, 2, k_rows.concat()));
        let ak = tape.constant(Tensor::matrix(3, 2, ak_rows.concat()));
        let av = tape.constant(Tensor::matrix(3, 2, av_rows.concat()));
        let e = rel_attention_scores(&tape, q, k, ak, clip);
        let alpha = tape.softmax_rows(e);
        let v = tape.constant(Tensor::matrix(2, 2, v_rows.concat()));
        let content = tape.matmul(alpha, v);
        let o = tape.add(content, tape.rel_values(alpha, av, clip));

        // Longhand evaluation.
        let dot = |a: [f64; 2], b: [f64; 2]| a[0] * b[0] + a[1] * b[1];
        let scale = 1.0 / 2.0f64.sqrt();
        let mut e_hand = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let rel = (j as isize - i as isize).clamp(-1, 1) + 1;
                e_hand[i][j] =
                    (dot(q_rows[i], k_rows[j]) + dot(q_rows[i], ak_rows[rel as usize])) * scale;
            }
        }
        let e_val = tape.value(e);
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(e_val.at(i, j), e_hand[i][j], epsilon = 1e-12);
            }
        }
        let o_val = tape.value(o);
        for i in 0..2 {
            let exp0 = (e_hand[i][0]).exp();
            let exp1 = (e_hand[i][1]).exp();
            let a0 = exp0 / (exp0 + exp1);
            let a1 = exp1 / (exp0 + exp1);
            let rel0 = ((0 - i as isize).clamp(-1, 1) + 1) as usize;
            let rel1 = ((1 - i as isize).clamp(-1, 1) + 1) as usize;
            for c in 0..2 {
                let expected = a0 * (v_rows[0][c] + av_rows[rel0][c])
                    + a1 * (v_rows[1][c] + av_rows[rel1][c]);
                assert_abs_diff_eq!(o_val.at(i, c), expected, epsilon = 1e-12);
            }
        }
    }
}
