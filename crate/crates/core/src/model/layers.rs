//! Shared transformer building blocks in pre-norm residual form.

use crate::nn::{Bindings, Scalar, Tape, Tensor, Var};

pub(crate) const LN_EPS: f64 = 1e-5;
pub(crate) const MASK_NEG: f64 = -1e9;

/// `x · W + b`
pub(crate) fn linear<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    x: Var,
    weight: &str,
    bias: &str,
) -> Var {
    let y = tape.matmul(x, b.var(weight));
    tape.add_row(y, b.var(bias))
}

/// Row-wise layer norm with learned gain and bias.
pub(crate) fn layer_norm<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    x: Var,
    prefix: &str,
) -> Var {
    let mu = tape.mean_cols(x);
    let centered = tape.add_col(x, tape.scale(mu, S::fr(-1.0)));
    let var = tape.mean_cols(tape.mul(centered, centered));
    let rstd = tape.exp(tape.scale(
        tape.log(tape.add_scalar(var, S::fr(LN_EPS))),
        S::fr(-0.5),
    ));
    let normed = tape.mul_col(centered, rstd);
    let scaled = tape.mul_row(normed, b.var(&format!("{prefix}.g")));
    tape.add_row(scaled, b.var(&format!("{prefix}.b")))
}

/// Position-wise feed-forward: `tanh(x W1 + b1) W2 + b2`.
pub(crate) fn feed_forward<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    x: Var,
    prefix: &str,
) -> Var {
    let hidden = tape.tanh(linear(tape, b, x, &format!("{prefix}.ff1.w"), &format!("{prefix}.ff1.b")));
    linear(tape, b, hidden, &format!("{prefix}.ff2.w"), &format!("{prefix}.ff2.b"))
}

pub(crate) struct AttentionSpec<'a> {
    /// Parameter prefix owning `q`, `k`, `v`, `o` (e.g. `dec.L0.xast`).
    pub prefix: &'a str,
    pub heads: usize,
    /// Relative-position tables `{prefix}.ak` / `{prefix}.av` with this
    /// clip distance; self-attention only.
    pub rel_clip: Option<usize>,
    pub causal: bool,
}

/// Multi-head scaled dot-product attention; queries from `q_in`, keys
/// and values from `kv_in`.
pub(crate) fn attention<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    q_in: Var,
    kv_in: Var,
    spec: &AttentionSpec<'_>,
) -> Var {
    let m = tape.shape(q_in)[0];
    let n = tape.shape(kv_in)[0];
    let d = tape.shape(q_in)[1];
    let heads = spec.heads;
    let dh = d / heads;
    let scale = S::fr(1.0 / (dh as f64).sqrt());

    let q = tape.matmul(q_in, b.var(&format!("{}.q", spec.prefix)));
    let k = tape.matmul(kv_in, b.var(&format!("{}.k", spec.prefix)));
    let v = tape.matmul(kv_in, b.var(&format!("{}.v", spec.prefix)));

    let mask = spec.causal.then(|| {
        let mut mask = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in (i + 1)..n {
                mask.set(i, j, S::fr(MASK_NEG));
            }
        }
        tape.constant(mask)
    });

    let mut head_outputs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh);
        let kh = tape.slice_cols(k, h * dh, dh);
        let vh = tape.slice_cols(v, h * dh, dh);
        let mut scores = tape.matmul_nt(qh, kh);
        if let Some(clip) = spec.rel_clip {
            assert_eq!(m, n, "relative positions need self-attention");
            let qa = tape.matmul_nt(qh, b.var(&format!("{}.ak", spec.prefix)));
            scores = tape.add(scores, tape.rel_bias(qa, n, clip));
        }
        let mut scaled = tape.scale(scores, scale);
        if let Some(mask) = mask {
            scaled = tape.add(scaled, mask);
        }
        let alpha = tape.softmax_rows(scaled);
        let mut out = tape.matmul(alpha, vh);
        if let Some(clip) = spec.rel_clip {
            out = tape.add(out, tape.rel_values(alpha, b.var(&format!("{}.av", spec.prefix)), clip));
        }
        head_outputs.push(out);
    }
    let merged = tape.concat_cols(&head_outputs);
    tape.matmul(merged, b.var(&format!("{}.o", spec.prefix)))
}
