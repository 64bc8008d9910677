//! Reverse-mode tape over rank-2 tensors.
//!
//! Forward ops append nodes carrying their output value and a VJP
//! closure; [`Tape::backward`] walks the node list in reverse, routing
//! each node's upstream gradient to its parents. Scalars are `[1,1]`
//! tensors and biases are `[1,d]` rows, so every graph value is rank 2.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::params::{Gradients, ModelParams};
use super::tensor::Tensor;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}

type BackFn<S> = Box<dyn Fn(&Tensor<S>, &Tensor<S>, &[&Tensor<S>]) -> Vec<Tensor<S>>>;

struct TapeNode<S> {
    value: Tensor<S>,
    parents: Vec<usize>,
    back: Option<BackFn<S>>,
}

/// Parameter-name to graph-variable map for one recorded graph.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    map: HashMap<String, Var>,
}

impl Bindings {
    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound"))
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.map.get(name).copied()
    }
}

pub struct Tape<S: Scalar> {
    nodes: RefCell<Vec<TapeNode<S>>>,
    params: RefCell<Vec<(String, usize)>>,
    rng: RefCell<ChaCha8Rng>,
}

impl<S: Scalar> Tape<S> {
    pub fn new(seed: u64) -> Tape<S> {
        Tape {
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(Vec::new()),
            rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn push(&self, value: Tensor<S>, parents: Vec<usize>, back: Option<BackFn<S>>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(TapeNode {
            value,
            parents,
            back,
        });
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: Tensor<S>) -> Var {
        self.push(value, vec![], None)
    }

    pub fn param(&self, name: &str, value: Tensor<S>) -> Var {
        let var = self.push(value, vec![], None);
        self.params.borrow_mut().push((name.to_string(), var.0));
        var
    }

    /// Binds every tensor of `params` as a leaf of this graph.
    pub fn bind(&self, params: &ModelParams<S>) -> Bindings {
        let mut map = HashMap::new();
        for (name, tensor) in params.iter() {
            map.insert(name.to_string(), self.param(name, tensor.clone()));
        }
        Bindings { map }
    }

    pub fn value(&self, v: Var) -> Tensor<S> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn val<R>(&self, v: Var, f: impl FnOnce(&Tensor<S>) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    // ---- arithmetic ----

    pub fn add(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(x.shape(), y.shape(), "add shape mismatch");
                let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
                Tensor::new(x.shape().to_vec(), data)
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| vec![g.clone(), g.clone()])),
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let neg = self.scale(b, S::fr(-1.0));
        self.add(a, neg)
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
                let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
                Tensor::new(x.shape().to_vec(), data)
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, ps| {
                let (a, b) = (ps[0], ps[1]);
                let da = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(b.data()).map(|(&p, &q)| p * q).collect(),
                );
                let db = Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(a.data()).map(|(&p, &q)| p * q).collect(),
                );
                vec![da, db]
            })),
        )
    }

    pub fn scale(&self, a: Var, c: S) -> Var {
        let value = self.val(a, |x| x.map(|v| v * c));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, _| vec![g.map(|v| v * c)])),
        )
    }

    pub fn add_scalar(&self, a: Var, c: S) -> Var {
        let value = self.val(a, |x| x.map(|v| v + c));
        self.push(value, vec![a.0], Some(Box::new(|g, _, _| vec![g.clone()])))
    }

    pub fn add_row(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(y.rows(), 1, "add_row bias must be a row");
                assert_eq!(x.cols(), y.cols(), "add_row width mismatch");
                let mut out = x.clone();
                let cols = x.cols();
                for i in 0..x.rows() {
                    for j in 0..cols {
                        out.set(i, j, x.at(i, j) + y.at(0, j));
                    }
                }
                out
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| {
                let mut db = Tensor::zeros(&[1, g.cols()]);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        let v = db.at(0, j) + g.at(i, j);
                        db.set(0, j, v);
                    }
                }
                vec![g.clone(), db]
            })),
        )
    }

    pub fn mul_row(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(y.rows(), 1, "mul_row factor must be a row");
                assert_eq!(x.cols(), y.cols(), "mul_row width mismatch");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        out.set(i, j, x.at(i, j) * y.at(0, j));
                    }
                }
                out
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, ps| {
                let (a, b) = (ps[0], ps[1]);
                let mut da = g.clone();
                let mut db = Tensor::zeros(&[1, g.cols()]);
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        da.set(i, j, g.at(i, j) * b.at(0, j));
                        let v = db.at(0, j) + g.at(i, j) * a.at(i, j);
                        db.set(0, j, v);
                    }
                }
                vec![da, db]
            })),
        )
    }

    pub fn add_col(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(y.cols(), 1, "add_col bias must be a column");
                assert_eq!(x.rows(), y.rows(), "add_col height mismatch");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        out.set(i, j, x.at(i, j) + y.at(i, 0));
                    }
                }
                out
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, _| {
                let mut db = Tensor::zeros(&[g.rows(), 1]);
                for i in 0..g.rows() {
                    let sum: S = (0..g.cols()).map(|j| g.at(i, j)).sum();
                    db.set(i, 0, sum);
                }
                vec![g.clone(), db]
            })),
        )
    }

    pub fn mul_col(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| {
            self.val(b, |y| {
                assert_eq!(y.cols(), 1, "mul_col factor must be a column");
                assert_eq!(x.rows(), y.rows(), "mul_col height mismatch");
                let mut out = x.clone();
                for i in 0..x.rows() {
                    for j in 0..x.cols() {
                        out.set(i, j, x.at(i, j) * y.at(i, 0));
                    }
                }
                out
            })
        });
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, ps| {
                let (a, b) = (ps[0], ps[1]);
                let mut da = g.clone();
                let mut db = Tensor::zeros(&[g.rows(), 1]);
                for i in 0..g.rows() {
                    let mut sum = S::zero();
                    for j in 0..g.cols() {
                        da.set(i, j, g.at(i, j) * b.at(i, 0));
                        sum += g.at(i, j) * a.at(i, j);
                    }
                    db.set(i, 0, sum);
                }
                vec![da, db]
            })),
        )
    }

    // ---- matrix products ----

    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| self.val(b, |y| mat_mul(x, y)));
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, ps| {
                vec![mat_mul_nt(g, ps[1]), mat_mul_tn(ps[0], g)]
            })),
        )
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&self, a: Var, b: Var) -> Var {
        let value = self.val(a, |x| self.val(b, |y| mat_mul_nt(x, y)));
        self.push(
            value,
            vec![a.0, b.0],
            Some(Box::new(|g, _, ps| {
                vec![mat_mul(g, ps[1]), mat_mul_tn(g, ps[0])]
            })),
        )
    }

    // ---- nonlinearities ----

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.val(a, |x| x.map(|v| v.tanh()));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, y, _| {
                vec![Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * (S::one() - yv * yv))
                        .collect(),
                )]
            })),
        )
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let value = self.val(a, |x| x.map(|v| S::one() / (S::one() + (-v).exp())));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, y, _| {
                vec![Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv * (S::one() - yv))
                        .collect(),
                )]
            })),
        )
    }

    pub fn exp(&self, a: Var) -> Var {
        let value = self.val(a, |x| x.map(|v| v.exp()));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, y, _| {
                vec![Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv)
                        .collect(),
                )]
            })),
        )
    }

    pub fn log(&self, a: Var) -> Var {
        let value = self.val(a, |x| x.map(|v| v.ln()));
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, _, ps| {
                vec![Tensor::new(
                    g.shape().to_vec(),
                    g.data()
                        .iter()
                        .zip(ps[0].data())
                        .map(|(&gv, &xv)| gv / xv)
                        .collect(),
                )]
            })),
        )
    }

    /// Row-wise softmax with max-shift stabilization.
    pub fn softmax_rows(&self, a: Var) -> Var {
        let value = self.val(a, |x| {
            let mut out = x.clone();
            for i in 0..x.rows() {
                let mut mx = x.at(i, 0);
                for j in 1..x.cols() {
                    mx = mx.max(x.at(i, j));
                }
                let mut sum = S::zero();
                for j in 0..x.cols() {
                    let e = (x.at(i, j) - mx).exp();
                    out.set(i, j, e);
                    sum += e;
                }
                for j in 0..x.cols() {
                    out.set(i, j, out.at(i, j) / sum);
                }
            }
            out
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, y, _| {
                let mut da = g.clone();
                for i in 0..g.rows() {
                    let dot: S = (0..g.cols()).map(|j| g.at(i, j) * y.at(i, j)).sum();
                    for j in 0..g.cols() {
                        da.set(i, j, y.at(i, j) * (g.at(i, j) - dot));
                    }
                }
                vec![da]
            })),
        )
    }

    /// Coordinate-wise max over rows; ties route the gradient to the
    /// first maximizing row.
    pub fn max_rows(&self, a: Var) -> Var {
        let (value, argmax) = self.val(a, |x| {
            let mut out = Tensor::zeros(&[1, x.cols()]);
            let mut arg = vec![0usize; x.cols()];
            for j in 0..x.cols() {
                let mut best = x.at(0, j);
                for i in 1..x.rows() {
                    if x.at(i, j) > best {
                        best = x.at(i, j);
                        arg[j] = i;
                    }
                }
                out.set(0, j, best);
            }
            (out, arg)
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, ps| {
                let mut da = Tensor::zeros(ps[0].shape());
                for (j, &i) in argmax.iter().enumerate() {
                    da.set(i, j, g.at(0, j));
                }
                vec![da]
            })),
        )
    }

    // ---- structure ----

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let nodes = self.nodes.borrow();
        let cols = nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut row_counts = Vec::with_capacity(parts.len());
        for part in parts {
            let v = &nodes[part.0].value;
            assert_eq!(v.cols(), cols, "concat_rows width mismatch");
            row_counts.push(v.rows());
            data.extend_from_slice(v.data());
        }
        drop(nodes);
        let total: usize = row_counts.iter().sum();
        let value = Tensor::matrix(total, cols, data);
        self.push(
            value,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g, _, _| {
                let cols = g.cols();
                let mut out = Vec::with_capacity(row_counts.len());
                let mut row = 0;
                for &rc in &row_counts {
                    let slice = &g.data()[row * cols..(row + rc) * cols];
                    out.push(Tensor::matrix(rc, cols, slice.to_vec()));
                    row += rc;
                }
                out
            })),
        )
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let nodes = self.nodes.borrow();
        let rows = nodes[parts[0].0].value.rows();
        let col_counts: Vec<usize> = parts
            .iter()
            .map(|p| {
                let v = &nodes[p.0].value;
                assert_eq!(v.rows(), rows, "concat_cols height mismatch");
                v.cols()
            })
            .collect();
        let total: usize = col_counts.iter().sum();
        let mut value = Tensor::zeros(&[rows, total]);
        let mut offset = 0;
        for part in parts {
            let v = &nodes[part.0].value;
            for i in 0..rows {
                for j in 0..v.cols() {
                    value.set(i, offset + j, v.at(i, j));
                }
            }
            offset += v.cols();
        }
        drop(nodes);
        self.push(
            value,
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g, _, _| {
                let mut out = Vec::with_capacity(col_counts.len());
                let mut offset = 0;
                for &cc in &col_counts {
                    let mut part = Tensor::zeros(&[g.rows(), cc]);
                    for i in 0..g.rows() {
                        for j in 0..cc {
                            part.set(i, j, g.at(i, offset + j));
                        }
                    }
                    out.push(part);
                    offset += cc;
                }
                out
            })),
        )
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Var {
        let value = self.val(a, |x| {
            assert!(start + len <= x.rows(), "slice_rows out of range");
            let cols = x.cols();
            Tensor::matrix(
                len,
                cols,
                x.data()[start * cols..(start + len) * cols].to_vec(),
            )
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, ps| {
                let mut da = Tensor::zeros(ps[0].shape());
                for i in 0..len {
                    for j in 0..g.cols() {
                        da.set(start + i, j, g.at(i, j));
                    }
                }
                vec![da]
            })),
        )
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Var {
        let value = self.val(a, |x| {
            assert!(start + len <= x.cols(), "slice_cols out of range");
            let mut out = Tensor::zeros(&[x.rows(), len]);
            for i in 0..x.rows() {
                for j in 0..len {
                    out.set(i, j, x.at(i, start + j));
                }
            }
            out
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, ps| {
                let mut da = Tensor::zeros(ps[0].shape());
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        da.set(i, start + j, g.at(i, j));
                    }
                }
                vec![da]
            })),
        )
    }

    /// Rows of `table` selected by `ids`.
    pub fn embed(&self, table: Var, ids: &[u32]) -> Var {
        let ids = ids.to_vec();
        let value = self.val(table, |t| {
            let d = t.cols();
            let mut out = Vec::with_capacity(ids.len() * d);
            for &id in &ids {
                out.extend_from_slice(&t.data()[id as usize * d..(id as usize + 1) * d]);
            }
            Tensor::new(vec![ids.len(), d], out)
        });
        self.push(
            value,
            vec![table.0],
            Some(Box::new(move |g, _, ps| {
                let d = g.cols();
                let mut dt = Tensor::zeros(ps[0].shape());
                let dt_data = dt.data_mut();
                for (i, &id) in ids.iter().enumerate() {
                    let row = &g.data()[i * d..(i + 1) * d];
                    let target = &mut dt_data[id as usize * d..(id as usize + 1) * d];
                    for (t, &v) in target.iter_mut().zip(row) {
                        *t += v;
                    }
                }
                vec![dt]
            })),
        )
    }

    /// Arithmetic mean of same-shaped tensors.
    pub fn mean_many(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let k = S::fr(parts.len() as f64);
        let nodes = self.nodes.borrow();
        let shape = nodes[parts[0].0].value.shape().to_vec();
        let mut data = vec![S::zero(); nodes[parts[0].0].value.numel()];
        for part in parts {
            let v = &nodes[part.0].value;
            assert_eq!(v.shape(), &shape[..], "mean_many shape mismatch");
            for (d, &s) in data.iter_mut().zip(v.data()) {
                *d += s;
            }
        }
        drop(nodes);
        for d in &mut data {
            *d /= k;
        }
        let count = parts.len();
        self.push(
            Tensor::new(shape, data),
            parts.iter().map(|v| v.0).collect(),
            Some(Box::new(move |g, _, _| {
                let share = g.map(|v| v / S::fr(count as f64));
                vec![share; count]
            })),
        )
    }

    pub fn mean_cols(&self, a: Var) -> Var {
        let value = self.val(a, |x| {
            let mut out = Tensor::zeros(&[x.rows(), 1]);
            let d = S::fr(x.cols() as f64);
            for i in 0..x.rows() {
                let sum: S = (0..x.cols()).map(|j| x.at(i, j)).sum();
                out.set(i, 0, sum / d);
            }
            out
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, _, ps| {
                let cols = ps[0].cols();
                let d = S::fr(cols as f64);
                let mut da = Tensor::zeros(ps[0].shape());
                for i in 0..da.rows() {
                    for j in 0..cols {
                        da.set(i, j, g.at(i, 0) / d);
                    }
                }
                vec![da]
            })),
        )
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let value = self.val(a, |x| {
            let sum: S = x.data().iter().copied().sum();
            Tensor::scalar(sum / S::fr(x.numel() as f64))
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(|g, _, ps| {
                let n = S::fr(ps[0].numel() as f64);
                let gv = g.item() / n;
                vec![ps[0].map(|_| gv)]
            })),
        )
    }

    /// Per-row element pick: `out[i, 0] = a[i, ids[i]]`.
    pub fn gather_cols(&self, a: Var, ids: &[u32]) -> Var {
        let ids = ids.to_vec();
        let value = self.val(a, |x| {
            assert_eq!(x.rows(), ids.len(), "gather_cols id count mismatch");
            let mut out = Tensor::zeros(&[ids.len(), 1]);
            for (i, &id) in ids.iter().enumerate() {
                out.set(i, 0, x.at(i, id as usize));
            }
            out
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, ps| {
                let mut da = Tensor::zeros(ps[0].shape());
                for (i, &id) in ids.iter().enumerate() {
                    da.set(i, id as usize, g.at(i, 0));
                }
                vec![da]
            })),
        )
    }

    /// Relative-position score bias: `out[i, j] = qa[i, clip(j - i)]`
    /// where `qa` has `2 * clip + 1` columns.
    pub fn rel_bias(&self, qa: Var, seq_len: usize, clip: usize) -> Var {
        let idx = move |i: usize, j: usize| -> usize {
            let rel = (j as isize - i as isize).clamp(-(clip as isize), clip as isize);
            (rel + clip as isize) as usize
        };
        let value = self.val(qa, |x| {
            assert_eq!(x.cols(), 2 * clip + 1, "rel_bias table width");
            let mut out = Tensor::zeros(&[seq_len, seq_len]);
            for i in 0..seq_len {
                for j in 0..seq_len {
                    out.set(i, j, x.at(i, idx(i, j)));
                }
            }
            out
        });
        self.push(
            value,
            vec![qa.0],
            Some(Box::new(move |g, _, ps| {
                let mut da = Tensor::zeros(ps[0].shape());
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        let k = idx(i, j);
                        let v = da.at(i, k) + g.at(i, j);
                        da.set(i, k, v);
                    }
                }
                vec![da]
            })),
        )
    }

    /// Relative-position value mix: `out[i, :] = Σ_j α[i, j] · av[clip(j - i), :]`.
    pub fn rel_values(&self, alpha: Var, av: Var, clip: usize) -> Var {
        let idx = move |i: usize, j: usize| -> usize {
            let rel = (j as isize - i as isize).clamp(-(clip as isize), clip as isize);
            (rel + clip as isize) as usize
        };
        let value = self.val(alpha, |al| {
            self.val(av, |t| {
                assert_eq!(t.rows(), 2 * clip + 1, "rel_values table height");
                let mut out = Tensor::zeros(&[al.rows(), t.cols()]);
                for i in 0..al.rows() {
                    for j in 0..al.cols() {
                        let k = idx(i, j);
                        for c in 0..t.cols() {
                            let v = out.at(i, c) + al.at(i, j) * t.at(k, c);
                            out.set(i, c, v);
                        }
                    }
                }
                out
            })
        });
        self.push(
            value,
            vec![alpha.0, av.0],
            Some(Box::new(move |g, _, ps| {
                let (al, t) = (ps[0], ps[1]);
                let mut dal = Tensor::zeros(al.shape());
                let mut dt = Tensor::zeros(t.shape());
                for i in 0..al.rows() {
                    for j in 0..al.cols() {
                        let k = idx(i, j);
                        let mut dot = S::zero();
                        for c in 0..t.cols() {
                            dot += g.at(i, c) * t.at(k, c);
                            let v = dt.at(k, c) + al.at(i, j) * g.at(i, c);
                            dt.set(k, c, v);
                        }
                        dal.set(i, j, dot);
                    }
                }
                vec![dal, dt]
            })),
        )
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout(&self, a: Var, p: f64) -> Var {
        if p <= 0.0 {
            return a;
        }
        let keep = S::fr(1.0 - p);
        let mask: Vec<S> = {
            let mut rng = self.rng.borrow_mut();
            let numel = self.nodes.borrow()[a.0].value.numel();
            (0..numel)
                .map(|_| {
                    if rng.gen_bool(1.0 - p) {
                        S::one() / keep
                    } else {
                        S::zero()
                    }
                })
                .collect()
        };
        let value = self.val(a, |x| {
            Tensor::new(
                x.shape().to_vec(),
                x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
            )
        });
        self.push(
            value,
            vec![a.0],
            Some(Box::new(move |g, _, _| {
                vec![Tensor::new(
                    g.shape().to_vec(),
                    g.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
                )]
            })),
        )
    }

    /// Gated vocabulary/copy mixture over the extended id space:
    /// `out[t, v] = γ_t · pg[t, v]` for base ids, plus
    /// `(1 - γ_t) · pc[t, i]` added at `map[i]` for every code position.
    pub fn mix_copy(&self, pg: Var, pc: Var, gamma: Var, map: &[u32], ext_size: usize) -> Var {
        let map = map.to_vec();
        let value = self.val(pg, |pgv| {
            self.val(pc, |pcv| {
                self.val(gamma, |gv| {
                    assert_eq!(pcv.cols(), map.len(), "mix_copy map length");
                    assert_eq!(gv.cols(), 1, "gamma must be a column");
                    assert_eq!(gv.rows(), pgv.rows(), "gamma rows");
                    assert!(ext_size >= pgv.cols(), "extended space too small");
                    let mut out = Tensor::zeros(&[pgv.rows(), ext_size]);
                    for t in 0..pgv.rows() {
                        let g = gv.at(t, 0);
                        for v in 0..pgv.cols() {
                            out.set(t, v, g * pgv.at(t, v));
                        }
                        for (i, &slot) in map.iter().enumerate() {
                            let v = out.at(t, slot as usize) + (S::one() - g) * pcv.at(t, i);
                            out.set(t, slot as usize, v);
                        }
                    }
                    out
                })
            })
        });
        self.push(
            value,
            vec![pg.0, pc.0, gamma.0],
            Some(Box::new(move |g, _, ps| {
                let (pgv, pcv, gv) = (ps[0], ps[1], ps[2]);
                let mut dpg = Tensor::zeros(pgv.shape());
                let mut dpc = Tensor::zeros(pcv.shape());
                let mut dgamma = Tensor::zeros(gv.shape());
                for t in 0..pgv.rows() {
                    let gm = gv.at(t, 0);
                    let mut acc = S::zero();
                    for v in 0..pgv.cols() {
                        dpg.set(t, v, gm * g.at(t, v));
                        acc += g.at(t, v) * pgv.at(t, v);
                    }
                    for (i, &slot) in map.iter().enumerate() {
                        dpc.set(t, i, (S::one() - gm) * g.at(t, slot as usize));
                        acc -= g.at(t, slot as usize) * pcv.at(t, i);
                    }
                    dgamma.set(t, 0, acc);
                }
                vec![dpg, dpc, dgamma]
            })),
        )
    }

    // ---- reverse pass ----

    /// Reverse accumulation from a scalar loss. Every bound parameter
    /// gets an entry; parameters the loss never touched get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>, GraphError> {
        let nodes = self.nodes.borrow();
        let loss_shape = nodes[loss.0].value.shape().to_vec();
        if nodes[loss.0].value.numel() != 1 {
            return Err(GraphError::NonScalarLoss(loss_shape));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(nodes[loss.0].value.map(|_| S::one()));

        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            // Leaves keep their accumulated gradients for collection.
            let Some(back) = &node.back else { continue };
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let parent_vals: Vec<&Tensor<S>> =
                node.parents.iter().map(|&p| &nodes[p].value).collect();
            let contribs = back(&grad, &node.value, &parent_vals);
            assert_eq!(contribs.len(), node.parents.len());
            for (&p, c) in node.parents.iter().zip(contribs) {
                match &mut grads[p] {
                    Some(existing) => existing.add_assign(&c),
                    slot => *slot = Some(c),
                }
            }
        }

        let mut out = Gradients::default();
        for (name, idx) in self.params.borrow().iter() {
            let grad = grads[*idx]
                .take()
                .unwrap_or_else(|| Tensor::zeros(nodes[*idx].value.shape()));
            out.insert(name.clone(), grad);
        }
        Ok(out)
    }
}

// Plain matrix products used by forward passes and VJPs. The ikj loop
// order keeps the inner updates independent so they vectorize.

pub(crate) fn mat_mul<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    assert_eq!(b.rows(), k, "matmul inner dims {k} vs {}", b.rows());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        let a_row = &ad[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        for (l, &av) in a_row.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let b_row = &bd[l * n..(l + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub(crate) fn mat_mul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    assert_eq!(b.cols(), k, "matmul_nt inner dims {k} vs {}", b.cols());
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let a_row = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &bd[j * k..(j + 1) * k];
            out.push(dot4(a_row, b_row));
        }
    }
    Tensor::new(vec![m, n], out)
}

pub(crate) fn mat_mul_tn<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Tensor<S> {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    assert_eq!(b.rows(), k, "matmul_tn inner dims {k} vs {}", b.rows());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![S::zero(); m * n];
    for l in 0..k {
        let a_row = &ad[l * m..(l + 1) * m];
        let b_row = &bd[l * n..(l + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            if av == S::zero() {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = *o + av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

// Four independent accumulators break the reduction dependency chain.
fn dot4<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = S::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn square_gradient() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.param("x", Tensor::scalar(1.5));
        let y = tape.mul(x, x);
        let grads = tape.backward(y).unwrap();
        assert_abs_diff_eq!(grads.get("x").unwrap().item(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.param("x", Tensor::scalar(0.0));
        let y = tape.tanh(x);
        let grads = tape.backward(y).unwrap();
        assert_abs_diff_eq!(grads.get("x").unwrap().item(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.param("x", Tensor::row(vec![1.0, 2.0]));
        assert_eq!(
            tape.backward(x),
            Err(GraphError::NonScalarLoss(vec![1, 2]))
        );
    }

    #[test]
    fn unreachable_params_get_zeros() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.param("x", Tensor::scalar(2.0));
        let _unused = tape.param("w", Tensor::matrix(2, 2, vec![1.0; 4]));
        let y = tape.mul(x, x);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get("w").unwrap().data(), [0.0; 4]);
    }

    #[test]
    fn matmul_gradients_match_hand_values() {
        // y = sum(A·B); dA = ones·Bᵀ, dB = Aᵀ·ones
        let tape: Tape<f64> = Tape::new(0);
        let a = tape.param("a", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let b = tape.param("b", Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let y = tape.matmul(a, b);
        let loss = tape.mean_all(y);
        let loss = tape.scale(loss, 4.0); // sum = mean * numel
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("a").unwrap().data(), [11.0, 15.0, 11.0, 15.0]);
        assert_eq!(grads.get("b").unwrap().data(), [4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_positive() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.constant(Tensor::matrix(
            3,
            4,
            vec![
                0.5, -1.0, 2.0, 0.0, 10.0, 10.0, 10.0, 10.0, -5.0, 3.0, 0.1, 0.2,
            ],
        ));
        let y = tape.value(tape.softmax_rows(x));
        for i in 0..3 {
            let row_sum: f64 = (0..4).map(|j| y.at(i, j)).sum();
            assert_abs_diff_eq!(row_sum, 1.0, epsilon = 1e-12);
            for j in 0..4 {
                assert!(y.at(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn gradient_linearity() {
        // grad(f + g) == grad f + grad g on a small random-ish graph
        let run = |wa: f64, wb: f64| -> (f64, f64) {
            let tape: Tape<f64> = Tape::new(0);
            let x = tape.param("x", Tensor::scalar(0.7));
            let f = tape.tanh(tape.scale(x, 2.0));
            let g = tape.mul(x, x);
            let f = tape.scale(f, wa);
            let g = tape.scale(g, wb);
            let sum = tape.add(f, g);
            let grads = tape.backward(sum).unwrap();
            (grads.get("x").unwrap().item(), tape.value(sum).item())
        };
        let (d_f, _) = run(1.0, 0.0);
        let (d_g, _) = run(0.0, 1.0);
        let (d_sum, _) = run(1.0, 1.0);
        assert_abs_diff_eq!(d_sum, d_f + d_g, epsilon = 1e-12);
    }

    #[test]
    fn max_rows_takes_coordinate_wise_max() {
        let tape: Tape<f64> = Tape::new(0);
        let x = tape.constant(Tensor::matrix(2, 2, vec![1.0, -2.0, 0.0, 5.0]));
        let y = tape.value(tape.max_rows(x));
        assert_eq!(y.data(), [1.0, 5.0]);
    }

    #[test]
    fn embed_and_gather_round_trip() {
        let tape: Tape<f64> = Tape::new(0);
        let table = tape.param(
            "e",
            Tensor::matrix(3, 2, vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]),
        );
        let rows = tape.embed(table, &[2, 0]);
        assert_eq!(tape.value(rows).data(), [20.0, 21.0, 0.0, 1.0]);
        let picked = tape.gather_cols(rows, &[1, 0]);
        assert_eq!(tape.value(picked).data(), [21.0, 0.0]);
        let loss = tape.mean_all(picked);
        let grads = tape.backward(loss).unwrap();
        // d/dtable: row 2 col 1 and row 0 col 0 each get 0.5
        assert_eq!(
            grads.get("e").unwrap().data(),
            [0.5, 0.0, 0.0, 0.0, 0.0, 0.5]
        );
    }

    #[test]
    fn dropout_zero_probability_is_identity() {
        let tape: Tape<f32> = Tape::new(1);
        let x = tape.constant(Tensor::row(vec![1.0, 2.0]));
        let y = tape.dropout(x, 0.0);
        assert_eq!(x, y);
    }

    #[test]
    fn mix_copy_duplicate_tokens_merge() {
        // code = [a, b, a] with P(c) = (0.5, 0.3, 0.2), gamma = 0:
        // the two `a` positions share one slot.
        let tape: Tape<f64> = Tape::new(0);
        let pg = tape.constant(Tensor::matrix(1, 4, vec![0.25; 4]));
        let pc = tape.constant(Tensor::matrix(1, 3, vec![0.5, 0.3, 0.2]));
        let gamma = tape.constant(Tensor::matrix(1, 1, vec![0.0]));
        let mixed = tape.mix_copy(pg, pc, gamma, &[4, 5, 4], 6);
        let y = tape.value(mixed);
        assert_abs_diff_eq!(y.at(0, 4), 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(y.at(0, 5), 0.3, epsilon = 1e-12);
        let total: f64 = y.data().iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }
}
