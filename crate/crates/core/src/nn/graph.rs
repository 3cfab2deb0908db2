//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! A [`Graph`] borrows a [`ParamSet`] immutably, records every operation
//! applied to its variables, and on [`Graph::backward`] returns dense
//! gradients for all parameters touched by the loss. Graphs are cheap and
//! single-use: one per training example, which lets a batch be evaluated in
//! parallel with no shared mutable state.

use super::conv;
use super::gemm::{gemm, gemm_strided, Strides};
use super::gru::{self, GruCache, GruGrads, GruWeights};
use super::{ParamId, ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
        kernel: usize,
        pad_left: usize,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
    Concat(Vec<Var>),
    Reshape(Var),
    Permute3 {
        x: Var,
        perm: [usize; 3],
    },
    CrossCorr {
        text: Var,
        audio: Var,
        c_in: usize,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
        kernel: usize,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    UpConv2x2 {
        x: Var,
        w: Var,
        b: Var,
    },
    Pad2d {
        x: Var,
        row_src: Vec<usize>,
        col_src: Vec<usize>,
    },
    Crop2d(Var),
    Gru {
        x: Var,
        w_ih: Var,
        w_hh: Var,
        b_ih: Var,
        b_hh: Var,
        cache: GruCache,
    },
    RowCrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Value,
    op: Op,
}

/// Dense per-parameter gradients produced by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamSet) -> Self {
        Self {
            grads: params
                .ids()
                .map(|id| Some(Tensor::zeros(params.get(id).shape())))
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Element-wise accumulation; parameters untouched on both sides stay `None`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            match (mine.as_mut(), theirs) {
                (Some(m), Some(t)) => m.add_assign(t),
                (None, Some(t)) => *mine = Some(t.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.iter().flatten().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::all_finite)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Input)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Looks a parameter up by name. Panics on unknown names (a model bug).
    pub fn param_named(&mut self, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(id)
    }

    /// `[.., k] × [k, m] → [.., m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, k) = (av.rows(), av.last_dim());
        assert_eq!(bv.shape().len(), 2, "matmul rhs must be 2-D");
        assert_eq!(bv.shape()[0], k, "matmul inner dimension mismatch");
        let m = bv.shape()[1];
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, av.data(), false, bv.data(), false, 0.0, &mut out);
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = m;
        self.push(Tensor::from_vec(&shape, out), Op::MatMul(a, b))
    }

    /// Adds a `[m]` bias to every row of a `[.., m]` tensor.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(b));
        let m = xv.last_dim();
        assert_eq!(bv.len(), m, "bias length mismatch");
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(m) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        self.push(out, Op::AddBias(x, b))
    }

    pub fn linear(&mut self, x: Var, w: &str, b: &str) -> Var {
        let w = self.param_named(w);
        let b = self.param_named(b);
        let y = self.matmul(x, w);
        self.add_bias(y, b)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "element-wise shape mismatch");
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let t = Tensor::from_vec(av.shape(), data);
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|v| f(*v)).collect();
        let t = Tensor::from_vec(xv.shape(), data);
        self.push(t, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, f64::tanh, Op::Tanh(x))
    }

    /// Row lookup `table[ids[i], :]`, giving `[len(ids), E]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Var {
        let tv = self.value(table);
        let e = tv.last_dim();
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            out.extend_from_slice(&tv.data()[id * e..(id + 1) * e]);
        }
        let t = Tensor::from_vec(&[ids.len(), e], out);
        self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Same-length 1-D convolution over `x: [T, Cin]` with `w: [K*Cin, Cout]`, `b: [Cout]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (t, c) = (xv.rows(), xv.last_dim());
        assert_eq!(wv.shape()[0], kernel * c, "conv1d weight/input mismatch");
        let cout = wv.shape()[1];
        let pad_left = (kernel - 1) / 2;
        let cols = conv::im2col_1d(xv.data(), t, c, kernel, pad_left);
        let mut out = vec![0.0; t * cout];
        gemm(t, kernel * c, cout, &cols, false, wv.data(), false, 0.0, &mut out);
        for row in out.chunks_mut(cout) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        self.push(
            Tensor::from_vec(&[t, cout], out),
            Op::Conv1d {
                x,
                w,
                b,
                cols,
                kernel,
                pad_left,
            },
        )
    }

    pub fn maxpool1d(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (t, c) = (xv.rows(), xv.last_dim());
        let (y, argmax) = conv::maxpool1d(xv.data(), t, c);
        self.push(Tensor::from_vec(&[t, c], y), Op::MaxPool1d { x, argmax })
    }

    /// Concatenates along the last axis; all parts share the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let pv = self.value(*p);
            assert_eq!(pv.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                out[r * total + off..r * total + off + w]
                    .copy_from_slice(&pv.data()[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let mut shape = self.value(parts[0]).shape().to_vec();
        *shape.last_mut().unwrap() = total;
        self.push(Tensor::from_vec(&shape, out), Op::Concat(parts.to_vec()))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshape(shape);
        self.push(t, Op::Reshape(x))
    }

    /// Axis permutation of a 3-D tensor: output axis `i` is input axis `perm[i]`.
    pub fn permute3(&mut self, x: Var, perm: [usize; 3]) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        assert_eq!(s.len(), 3);
        let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
        let in_strides = [s[1] * s[2], s[2], 1];
        let mut out = Vec::with_capacity(xv.len());
        for i in 0..out_shape[0] {
            for j in 0..out_shape[1] {
                for k in 0..out_shape[2] {
                    let idx = i * in_strides[perm[0]] + j * in_strides[perm[1]] + k * in_strides[perm[2]];
                    out.push(xv.data()[idx]);
                }
            }
        }
        self.push(Tensor::from_vec(&out_shape, out), Op::Permute3 { x, perm })
    }

    /// Per-channel inner products between token features `text: [L, C_in*C_enc]`
    /// and frame features `audio: [T, C_in*C_enc]`, giving `[C_in, L, T]`.
    pub fn cross_correlate(&mut self, text: Var, audio: Var, c_in: usize) -> Var {
        let (tv, av) = (self.value(text), self.value(audio));
        let out = cross_correlate_raw(tv.data(), av.data(), tv.rows(), av.rows(), tv.last_dim(), c_in);
        let shape = [c_in, tv.rows(), av.rows()];
        self.push(
            Tensor::from_vec(&shape, out),
            Op::CrossCorr { text, audio, c_in },
        )
    }

    /// Same-size 2-D convolution over `x: [H, W, Cin]` with `w: [k*k*Cin, Cout]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, kernel: usize) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let s = xv.shape();
        let (h, wd, c) = (s[0], s[1], s[2]);
        assert_eq!(wv.shape()[0], kernel * kernel * c, "conv2d weight/input mismatch");
        let cout = wv.shape()[1];
        let (cols, patch) = if kernel == 1 {
            (Vec::new(), c)
        } else {
            (conv::im2col_2d(xv.data(), h, wd, c, kernel), kernel * kernel * c)
        };
        let src: &[f64] = if kernel == 1 { xv.data() } else { &cols };
        let mut out = vec![0.0; h * wd * cout];
        gemm(h * wd, patch, cout, src, false, wv.data(), false, 0.0, &mut out);
        for row in out.chunks_mut(cout) {
            for (v, bb) in row.iter_mut().zip(bv.data()) {
                *v += bb;
            }
        }
        self.push(
            Tensor::from_vec(&[h, wd, cout], out),
            Op::Conv2d {
                x,
                w,
                b,
                cols,
                kernel,
            },
        )
    }

    pub fn maxpool2d(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let (h, w, c) = (s[0], s[1], s[2]);
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool2d needs even spatial dims");
        let (y, argmax) = conv::maxpool2d(xv.data(), h, w, c);
        self.push(
            Tensor::from_vec(&[h / 2, w / 2, c], y),
            Op::MaxPool2d { x, argmax },
        )
    }

    /// 2×2 stride-2 transposed convolution, `w: [Cin, 4*Cout]`, `b: [Cout]`.
    pub fn upconv2x2(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let s = xv.shape();
        let (h, wd, c) = (s[0], s[1], s[2]);
        let co = bv.len();
        assert_eq!(wv.shape(), &[c, 4 * co], "upconv weight mismatch");
        let mut prod = vec![0.0; h * wd * 4 * co];
        gemm(h * wd, c, 4 * co, xv.data(), false, wv.data(), false, 0.0, &mut prod);
        let y = conv::upconv_scatter(&prod, h, wd, co, bv.data());
        self.push(
            Tensor::from_vec(&[2 * h, 2 * wd, co], y),
            Op::UpConv2x2 { x, w, b },
        )
    }

    /// Reflection-pads `x: [H, W, C]` at the bottom/right up to `[h2, w2, C]`.
    pub fn reflect_pad2d(&mut self, x: Var, h2: usize, w2: usize) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let (h, w, c) = (s[0], s[1], s[2]);
        let row_src: Vec<usize> = (0..h2).map(|i| conv::reflect_index(i, h)).collect();
        let col_src: Vec<usize> = (0..w2).map(|j| conv::reflect_index(j, w)).collect();
        let mut out = Vec::with_capacity(h2 * w2 * c);
        for &ri in &row_src {
            for &cj in &col_src {
                let src = (ri * w + cj) * c;
                out.extend_from_slice(&xv.data()[src..src + c]);
            }
        }
        self.push(
            Tensor::from_vec(&[h2, w2, c], out),
            Op::Pad2d {
                x,
                row_src,
                col_src,
            },
        )
    }

    /// Keeps the top-left `[h, w, C]` corner.
    pub fn crop2d(&mut self, x: Var, h: usize, w: usize) -> Var {
        let xv = self.value(x);
        let s = xv.shape();
        let (w2, c) = (s[1], s[2]);
        let mut out = Vec::with_capacity(h * w * c);
        for i in 0..h {
            out.extend_from_slice(&xv.data()[(i * w2) * c..(i * w2 + w) * c]);
        }
        self.push(Tensor::from_vec(&[h, w, c], out), Op::Crop2d(x))
    }

    /// Single-direction GRU over `x: [B, T, D]` giving `[B, T, H]`.
    /// Parameters are looked up as `{prefix}.w_ih`, `.w_hh`, `.b_ih`, `.b_hh`.
    pub fn gru(&mut self, x: Var, prefix: &str, reverse: bool) -> Var {
        let w_ih = self.param_named(&format!("{prefix}.w_ih"));
        let w_hh = self.param_named(&format!("{prefix}.w_hh"));
        let b_ih = self.param_named(&format!("{prefix}.b_ih"));
        let b_hh = self.param_named(&format!("{prefix}.b_hh"));
        let xv = self.value(x);
        let s = xv.shape();
        assert_eq!(s.len(), 3, "gru input must be [B, T, D]");
        let (b, t, d) = (s[0], s[1], s[2]);
        let hidden = self.value(w_hh).shape()[0];
        let wts = GruWeights {
            w_ih: self.value(w_ih).data(),
            w_hh: self.value(w_hh).data(),
            b_ih: self.value(b_ih).data(),
            b_hh: self.value(b_hh).data(),
        };
        let (out, cache) = gru::forward(xv.data(), (b, t, d, hidden), &wts, reverse);
        self.push(
            Tensor::from_vec(&[b, t, hidden], out),
            Op::Gru {
                x,
                w_ih,
                w_hh,
                b_ih,
                b_hh,
                cache,
            },
        )
    }

    /// Mean over `targets` of `-log softmax(logits[row, :])[col]`; `logits: [L, T]`.
    pub fn row_cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        let lv = self.value(logits);
        let t = lv.last_dim();
        let mut probs = Vec::with_capacity(targets.len() * t);
        let mut loss = 0.0;
        for &(row, col) in targets {
            let r = &lv.data()[row * t..(row + 1) * t];
            let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = r.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - r[col];
            probs.extend(r.iter().map(|v| (v - lse).exp()));
        }
        loss /= targets.len().max(1) as f64;
        self.push(
            Tensor::from_vec(&[1], vec![loss]),
            Op::RowCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        )
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(vec![1.0]);
        let mut param_grads: Vec<Option<Tensor>> = (0..self.params.len()).map(|_| None).collect();

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if let Value::Param(id) = node.value {
                match &mut param_grads[id.0] {
                    Some(t) => t.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot => *slot = Some(Tensor::from_vec(self.params.get(id).shape(), g)),
                }
                continue;
            }
            self.backward_op(idx, &g, &mut grads);
        }
        Gradients { grads: param_grads }
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let len = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn backward_op(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out_val = self.value(Var(idx));
        match &self.nodes[idx].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k, m) = (av.rows(), av.last_dim(), bv.shape()[1]);
                gemm(n, m, k, g, false, bv.data(), true, 1.0, self.slot(grads, *a));
                gemm(k, n, m, av.data(), true, g, false, 1.0, self.slot(grads, *b));
            }
            Op::AddBias(x, b) => {
                add_into(self.slot(grads, *x), g);
                let m = self.value(*b).len();
                let db = self.slot(grads, *b);
                for row in g.chunks(m) {
                    add_into(db, row);
                }
            }
            Op::Add(a, b) => {
                add_into(self.slot(grads, *a), g);
                add_into(self.slot(grads, *b), g);
            }
            Op::Sub(a, b) => {
                add_into(self.slot(grads, *a), g);
                self.slot(grads, *b).iter_mut().zip(g).for_each(|(d, v)| *d -= v);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.slot(grads, *a).iter_mut().zip(g).zip(bv).for_each(|((d, v), y)| *d += v * y);
                self.slot(grads, *b).iter_mut().zip(g).zip(av).for_each(|((d, v), x)| *d += v * x);
            }
            Op::Relu(x) => {
                let y = out_val.data();
                self.slot(grads, *x)
                    .iter_mut()
                    .zip(g)
                    .zip(y)
                    .for_each(|((d, v), y)| {
                        if *y > 0.0 {
                            *d += v
                        }
                    });
            }
            Op::Sigmoid(x) => {
                let y = out_val.data();
                self.slot(grads, *x)
                    .iter_mut()
                    .zip(g)
                    .zip(y)
                    .for_each(|((d, v), y)| *d += v * y * (1.0 - y));
            }
            Op::Tanh(x) => {
                let y = out_val.data();
                self.slot(grads, *x)
                    .iter_mut()
                    .zip(g)
                    .zip(y)
                    .for_each(|((d, v), y)| *d += v * (1.0 - y * y));
            }
            Op::Embedding { table, ids } => {
                let e = self.value(*table).last_dim();
                let dt = self.slot(grads, *table);
                for (i, &id) in ids.iter().enumerate() {
                    add_into(&mut dt[id * e..(id + 1) * e], &g[i * e..(i + 1) * e]);
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                cols,
                kernel,
                pad_left,
            } => {
                let xv = self.value(*x);
                let (t, c) = (xv.rows(), xv.last_dim());
                let cout = self.value(*b).len();
                let kc = kernel * c;
                gemm(kc, t, cout, cols, true, g, false, 1.0, self.slot(grads, *w));
                let db = self.slot(grads, *b);
                for row in g.chunks(cout) {
                    add_into(db, row);
                }
                let mut dcols = vec![0.0; t * kc];
                gemm(t, cout, kc, g, false, self.value(*w).data(), true, 0.0, &mut dcols);
                conv::col2im_1d_add(&dcols, t, c, *kernel, *pad_left, self.slot(grads, *x));
            }
            Op::MaxPool1d { x, argmax } | Op::MaxPool2d { x, argmax } => {
                let dx = self.slot(grads, *x);
                for (v, &src) in g.iter().zip(argmax) {
                    dx[src] += v;
                }
            }
            Op::Concat(parts) => {
                let total = out_val.last_dim();
                let rows = out_val.rows();
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).last_dim();
                    let dp = self.slot(grads, *p);
                    for r in 0..rows {
                        add_into(
                            &mut dp[r * w..(r + 1) * w],
                            &g[r * total + off..r * total + off + w],
                        );
                    }
                    off += w;
                }
            }
            Op::Reshape(x) => add_into(self.slot(grads, *x), g),
            Op::Permute3 { x, perm } => {
                let s = self.value(*x).shape().to_vec();
                let out_shape = [s[perm[0]], s[perm[1]], s[perm[2]]];
                let in_strides = [s[1] * s[2], s[2], 1];
                let dx = self.slot(grads, *x);
                let mut o = 0;
                for i in 0..out_shape[0] {
                    for j in 0..out_shape[1] {
                        for k in 0..out_shape[2] {
                            let idx = i * in_strides[perm[0]]
                                + j * in_strides[perm[1]]
                                + k * in_strides[perm[2]];
                            dx[idx] += g[o];
                            o += 1;
                        }
                    }
                }
            }
            Op::CrossCorr { text, audio, c_in } => {
                let (tv, av) = (self.value(*text), self.value(*audio));
                let (l, t, width) = (tv.rows(), av.rows(), tv.last_dim());
                let ce = width / c_in;
                let (tdata, adata) = (tv.data(), av.data());
                for c in 0..*c_in {
                    let gc = &g[c * l * t..(c + 1) * l * t];
                    // d text_c [L, Ce] += g_c [L, T] · audio_c [T, Ce]
                    gemm_strided(
                        l,
                        t,
                        ce,
                        gc,
                        Strides::dense(t, false),
                        &adata[c * ce..],
                        Strides { row: width as isize, col: 1 },
                        1.0,
                        &mut self.slot(grads, *text)[c * ce..],
                        Strides { row: width as isize, col: 1 },
                    );
                    // d audio_c [T, Ce] += g_cᵀ [T, L] · text_c [L, Ce]
                    gemm_strided(
                        t,
                        l,
                        ce,
                        gc,
                        Strides::dense(t, true),
                        &tdata[c * ce..],
                        Strides { row: width as isize, col: 1 },
                        1.0,
                        &mut self.slot(grads, *audio)[c * ce..],
                        Strides { row: width as isize, col: 1 },
                    );
                }
            }
            Op::Conv2d {
                x,
                w,
                b,
                cols,
                kernel,
            } => {
                let xv = self.value(*x);
                let s = xv.shape();
                let (h, wd, c) = (s[0], s[1], s[2]);
                let cout = self.value(*b).len();
                let patch = kernel * kernel * c;
                let src: &[f64] = if *kernel == 1 { xv.data() } else { cols };
                gemm(patch, h * wd, cout, src, true, g, false, 1.0, self.slot(grads, *w));
                let db = self.slot(grads, *b);
                for row in g.chunks(cout) {
                    add_into(db, row);
                }
                if *kernel == 1 {
                    gemm(h * wd, cout, c, g, false, self.value(*w).data(), true, 1.0, self.slot(grads, *x));
                } else {
                    let mut dcols = vec![0.0; h * wd * patch];
                    gemm(h * wd, cout, patch, g, false, self.value(*w).data(), true, 0.0, &mut dcols);
                    conv::col2im_2d_add(&dcols, h, wd, c, *kernel, self.slot(grads, *x));
                }
            }
            Op::UpConv2x2 { x, w, b } => {
                let xv = self.value(*x);
                let s = xv.shape();
                let (h, wd, c) = (s[0], s[1], s[2]);
                let co = self.value(*b).len();
                let gathered = conv::upconv_gather(g, h, wd, co);
                gemm(c, h * wd, 4 * co, xv.data(), true, &gathered, false, 1.0, self.slot(grads, *w));
                gemm(h * wd, 4 * co, c, &gathered, false, self.value(*w).data(), true, 1.0, self.slot(grads, *x));
                let db = self.slot(grads, *b);
                for row in g.chunks(co) {
                    add_into(db, row);
                }
            }
            Op::Pad2d {
                x,
                row_src,
                col_src,
            } => {
                let s = self.value(*x).shape().to_vec();
                let (w, c) = (s[1], s[2]);
                let dx = self.slot(grads, *x);
                let mut o = 0;
                for &ri in row_src {
                    for &cj in col_src {
                        let src = (ri * w + cj) * c;
                        add_into(&mut dx[src..src + c], &g[o..o + c]);
                        o += c;
                    }
                }
            }
            Op::Crop2d(x) => {
                let s = self.value(*x).shape().to_vec();
                let (w2, c) = (s[1], s[2]);
                let (h, w) = (out_val.shape()[0], out_val.shape()[1]);
                let dx = self.slot(grads, *x);
                for i in 0..h {
                    add_into(
                        &mut dx[(i * w2) * c..(i * w2 + w) * c],
                        &g[i * w * c..(i + 1) * w * c],
                    );
                }
            }
            Op::Gru {
                x,
                w_ih,
                w_hh,
                b_ih,
                b_hh,
                cache,
            } => {
                let wts = GruWeights {
                    w_ih: self.value(*w_ih).data(),
                    w_hh: self.value(*w_hh).data(),
                    b_ih: self.value(*b_ih).data(),
                    b_hh: self.value(*b_hh).data(),
                };
                let input = self.value(*x).last_dim();
                let mut dx = vec![0.0; self.value(*x).len()];
                let mut dwih = vec![0.0; wts.w_ih.len()];
                let mut dwhh = vec![0.0; wts.w_hh.len()];
                let mut dbih = vec![0.0; wts.b_ih.len()];
                let mut dbhh = vec![0.0; wts.b_hh.len()];
                gru::backward(
                    self.value(*x).data(),
                    input,
                    g,
                    cache,
                    &wts,
                    GruGrads {
                        x: &mut dx,
                        w_ih: &mut dwih,
                        w_hh: &mut dwhh,
                        b_ih: &mut dbih,
                        b_hh: &mut dbhh,
                    },
                );
                add_into(self.slot(grads, *x), &dx);
                add_into(self.slot(grads, *w_ih), &dwih);
                add_into(self.slot(grads, *w_hh), &dwhh);
                add_into(self.slot(grads, *b_ih), &dbih);
                add_into(self.slot(grads, *b_hh), &dbhh);
            }
            Op::RowCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let t = self.value(*logits).last_dim();
                let scale = g[0] / targets.len().max(1) as f64;
                let dl = self.slot(grads, *logits);
                for (k, &(row, col)) in targets.iter().enumerate() {
                    let p = &probs[k * t..(k + 1) * t];
                    let dr = &mut dl[row * t..(row + 1) * t];
                    for (d, pv) in dr.iter_mut().zip(p) {
                        *d += scale * pv;
                    }
                    dr[col] -= scale;
                }
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// `out[c, l, t] = Σ_k text[l, c*ce + k] · audio[t, c*ce + k]` for row-major
/// `text: [L, C_in*ce]`, `audio: [T, C_in*ce]`.
pub fn cross_correlate_raw(
    text: &[f64],
    audio: &[f64],
    l: usize,
    t: usize,
    width: usize,
    c_in: usize,
) -> Vec<f64> {
    assert_eq!(width % c_in, 0, "feature width must be divisible by C_in");
    let ce = width / c_in;
    let mut out = vec![0.0; c_in * l * t];
    if ce == 0 {
        return out;
    }
    for c in 0..c_in {
        gemm_strided(
            l,
            ce,
            t,
            &text[c * ce..],
            Strides { row: width as isize, col: 1 },
            &audio[c * ce..],
            Strides { row: 1, col: width as isize },
            0.0,
            &mut out[c * l * t..(c + 1) * l * t],
            Strides::dense(t, false),
        );
    }
    out
}
