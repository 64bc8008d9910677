//! Two-phase AST encoding. Phase one runs a recursive network bottom-up
//! over each subtree and max-pools the node states into one vector per
//! subtree; phase two runs a second recursive network with its own
//! weights over the structure tree to aggregate the subtree vectors.

use super::ModelError;
use crate::nn::{Bindings, Scalar, Tape, Var};
use crate::preprocess::EncodedTree;

/// Bottom-up pass over one subtree.
///
/// Internal nodes compute `tanh(W^C c + mean_j(W^A h_j))`; leaves take
/// `W^C c` with no nonlinearity. The subtree vector is the
/// coordinate-wise max over every node state.
pub fn encode_subtree<S: Scalar>(tape: &Tape<S>, b: &Bindings, tree: &EncodedTree) -> Var {
    let rows = tape.embed(b.var("ast.embed"), &tree.label_ids);
    encode_subtree_rows(tape, b, tree, rows)
}

/// As [`encode_subtree`], with the node embeddings already looked up
/// (one row per node). Batching the lookup across subtrees keeps the
/// embedding gradient to one scatter per example.
pub(crate) fn encode_subtree_rows<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    tree: &EncodedTree,
    rows: Var,
) -> Var {
    let n = tree.label_ids.len();
    assert!(n > 0, "subtree must be nonempty");
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, &p) in tree.parents.iter().enumerate() {
        if p >= 0 {
            children[p as usize].push(i);
        }
    }

    let wa = b.var("ast.WA");
    // One projection for every node at once.
    let projected = tape.matmul(rows, b.var("ast.WC"));
    let mut states: Vec<Option<Var>> = vec![None; n];
    // Preorder storage puts children after parents, so reverse index
    // order is a valid bottom-up schedule.
    for i in (0..n).rev() {
        let wc_c = tape.slice_rows(projected, i, 1);
        let h = if children[i].is_empty() {
            wc_c
        } else {
            let child_states: Vec<Var> = children[i]
                .iter()
                .map(|&c| states[c].expect("child encoded"))
                .collect();
            let mean = tape.mean_many(&child_states);
            let message = tape.matmul(mean, wa);
            tape.tanh(tape.add(wc_c, message))
        };
        states[i] = Some(h);
    }
    let all: Vec<Var> = states.into_iter().map(|s| s.unwrap()).collect();
    let stacked = tape.concat_rows(&all);
    tape.max_rows(stacked)
}

/// Bottom-up pass over the structure tree: `tanh(W^S s_t +
/// mean_k(W^B h_k))`, with `tanh(W^S s_t)` at structure leaves. The
/// output keeps the input (preorder) order.
pub fn encode_structure<S: Scalar>(
    tape: &Tape<S>,
    b: &Bindings,
    subtree_vectors: &[Var],
    edges: &[(usize, usize)],
) -> Result<Vec<Var>, ModelError> {
    let n = subtree_vectors.len();
    let node_count = edges.len() + 1;
    if n != node_count {
        return Err(ModelError::Shape {
            what: "structure-tree vectors".into(),
            expected: format!("{node_count} vectors"),
            found: format!("{n} vectors"),
        });
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(p, c) in edges {
        if p >= n || c >= n {
            return Err(ModelError::Shape {
                what: "structure-tree edge".into(),
                expected: format!("indices below {n}"),
                found: format!("({p}, {c})"),
            });
        }
        children[p].push(c);
    }

    let ws = b.var("ast.WS");
    let wb = b.var("ast.WB");
    let mut states: Vec<Option<Var>> = vec![None; n];
    let mut stack = vec![(0usize, false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            let projected = tape.matmul(subtree_vectors[node], ws);
            let h = if children[node].is_empty() {
                tape.tanh(projected)
            } else {
                let kids: Vec<Var> = children[node]
                    .iter()
                    .map(|&c| states[c].expect("child state ready"))
                    .collect();
                let mean = tape.mean_many(&kids);
                let message = tape.matmul(mean, wb);
                tape.tanh(tape.add(projected, message))
            };
            states[node] = Some(h);
        } else {
            stack.push((node, true));
            for &c in &children[node] {
                stack.push((c, false));
            }
        }
    }
    Ok(states
        .into_iter()
        .map(|s| s.expect("structure tree is connected"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelParams, Tensor};
    use crate::splitter::SubtreeKind;
    use approx::assert_abs_diff_eq;

    fn one_d_params(wc: f64, wa: f64, ws: f64, wb: f64, embeds: Vec<f64>) -> ModelParams<f64> {
        let mut p = ModelParams::default();
        let v = embeds.len();
        p.insert("ast.embed", Tensor::matrix(v, 1, embeds));
        p.insert("ast.WC", Tensor::scalar(wc));
        p.insert("ast.WA", Tensor::scalar(wa));
        p.insert("ast.WS", Tensor::scalar(ws));
        p.insert("ast.WB", Tensor::scalar(wb));
        p
    }

    #[test]
    fn single_node_with_identity_weight_returns_embedding() {
        let mut p = ModelParams::default();
        p.insert("ast.embed", Tensor::matrix(2, 3, vec![0.0; 3].into_iter().chain([0.3, -0.7, 0.9]).collect()));
        p.insert(
            "ast.WC",
            Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]),
        );
        p.insert("ast.WA", Tensor::zeros(&[3, 3]));
        let tape: Tape<f64> = Tape::new(0);
        let b = tape.bind(&p);
        let tree = EncodedTree {
            kind: SubtreeKind::StmtsT,
            label_ids: vec![1],
            parents: vec![-1],
        };
        let s = encode_subtree(&tape, &b, &tree);
        assert_eq!(tape.value(s).data(), [0.3, -0.7, 0.9]);
    }

    #[test]
    fn one_dimensional_hand_computation() {
        // WC = 2, WA = 1, root embedding 0.5, leaf embedding 1.0:
        // leaf h = 2.0, root h = tanh(1.0 + 2.0), pooled = 2.0
        let p = one_d_params(2.0, 1.0, 0.0, 0.0, vec![0.5, 1.0]);
        let tape: Tape<f64> = Tape::new(0);
        let b = tape.bind(&p);
        let tree = EncodedTree {
            kind: SubtreeKind::BlockT,
            label_ids: vec![0, 1],
            parents: vec![-1, 0],
        };
        let s = encode_subtree(&tape, &b, &tree);
        let expected = 2.0f64.max((3.0f64).tanh());
        assert_abs_diff_eq!(tape.value(s).item(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(tape.value(s).item(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn structure_chain_hand_computation() {
        // WS = WB = 1, chain with s = (0, 1):
        // child h = tanh(1) ~ 0.76159, root h = tanh(0 + 0.76159) ~ 0.64201
        let p = one_d_params(0.0, 0.0, 1.0, 1.0, vec![0.0]);
        let tape: Tape<f64> = Tape::new(0);
        let b = tape.bind(&p);
        let s0 = tape.constant(Tensor::scalar(0.0));
        let s1 = tape.constant(Tensor::scalar(1.0));
        let out = encode_structure(&tape, &b, &[s0, s1], &[(0, 1)]).unwrap();
        assert_eq!(out.len(), 2);
        assert_abs_diff_eq!(tape.value(out[1]).item(), 0.76159, epsilon = 1e-5);
        assert_abs_diff_eq!(tape.value(out[0]).item(), 0.64201, epsilon = 1e-5);
    }

    #[test]
    fn structure_vector_count_mismatch_is_shape_error() {
        let p = one_d_params(0.0, 0.0, 1.0, 1.0, vec![0.0]);
        let tape: Tape<f64> = Tape::new(0);
        let b = tape.bind(&p);
        let s0 = tape.constant(Tensor::scalar(0.0));
        let err = encode_structure(&tape, &b, &[s0], &[(0, 1)]).unwrap_err();
        assert!(matches!(err, ModelError::Shape { .. }));
    }

    #[test]
    fn node_storage_order_does_not_change_subtree_vector() {
        // The same star tree with children listed through different
        // preorder layouts: (root, a, b) vs (root, b, a) relabeled.
        let p = one_d_params(1.5, 0.8, 0.0, 0.0, vec![0.2, -0.4, 0.9]);
        let encode = |labels: Vec<u32>, parents: Vec<i32>| {
            let tape: Tape<f64> = Tape::new(0);
            let b = tape.bind(&p);
            let tree = EncodedTree {
                kind: SubtreeKind::BlockT,
                label_ids: labels,
                parents,
            };
            tape.value(encode_subtree(&tape, &b, &tree)).item()
        };
        // Child order swapped; Eq. (1) averages children, so the
        // result must be bitwise identical.
        let a = encode(vec![0, 1, 2], vec![-1, 0, 0]);
        let b = encode(vec![0, 2, 1], vec![-1, 0, 0]);
        assert_eq!(a, b);
    }

    #[test]
    fn internal_states_bounded_by_tanh() {
        let p = one_d_params(3.0, 2.0, 0.0, 0.0, vec![2.0, -3.0, 1.0]);
        let tape: Tape<f64> = Tape::new(0);
        let b = tape.bind(&p);
        let tree = EncodedTree {
            kind: SubtreeKind::BlockT,
            label_ids: vec![0, 1, 2],
            parents: vec![-1, 0, 1],
        };
        let _ = encode_subtree(&tape, &b, &tree);
        // Root state is node 0's tanh output: strictly inside (-1, 1).
        // Reconstruct: leaf h = WC*1.0 = 3, mid = tanh(WC*-3 + WA*3),
        // root = tanh(WC*2 + WA*mid).
        let leaf = 3.0f64;
        let mid = (3.0 * -3.0 + 2.0 * leaf).tanh();
        let root = (3.0 * 2.0 + 2.0 * mid).tanh();
        assert!(mid.abs() < 1.0 && root.abs() < 1.0);
    }
}
