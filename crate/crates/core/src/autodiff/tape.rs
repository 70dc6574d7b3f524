use std::collections::BTreeMap;

use super::capture::{CaptureRecord, Contribution, Factor, PerExampleCaptures};
use super::tensor::{axpy, dot, matmul_acc, matmul_tn_acc, transpose, Tensor};
use crate::error::{Error, Result};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Embed {
        table: Var,
        ids: Vec<usize>,
        batch: usize,
    },
    Affine {
        x: Var,
        w: Var,
        b: Option<Var>,
        transposed: bool,
        batch: usize,
    },
    Add(Var, Var),
    Scale(Var, f64),
    MatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
        batch: usize,
    },
    Gelu(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
        batch: usize,
        seq: usize,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<f64>,
        probs: Vec<f64>,
        counts: Vec<f64>,
        seq: usize,
        vocab: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// How parameter gradients are reported by [`Tape::backward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// Batch-summed gradient per parameter.
    Summed,
    /// Per-example factor captures per parameter; no summed parameter
    /// gradients are formed.
    PerExample,
}

/// Result of a reverse pass.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    leaves: BTreeMap<Var, Tensor>,
    params: BTreeMap<String, Tensor>,
    captures: Option<PerExampleCaptures>,
}

impl Gradients {
    /// Gradient of a non-parameter leaf created with `requires_grad`.
    pub fn leaf(&self, v: Var) -> Option<&Tensor> {
        self.leaves.get(&v)
    }

    /// Summed gradients of every trainable parameter (zeros when a parameter
    /// does not influence the root). Empty in per-example mode.
    pub fn params(&self) -> &BTreeMap<String, Tensor> {
        &self.params
    }

    pub fn into_params(self) -> BTreeMap<String, Tensor> {
        self.params
    }

    pub fn captures(&self) -> Option<&PerExampleCaptures> {
        self.captures.as_ref()
    }

    pub fn into_captures(self) -> Option<PerExampleCaptures> {
        self.captures
    }
}

/// Reverse-mode tape. One forward pass records onto one tape; the tape can be
/// differentiated any number of times with different seeds.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: BTreeMap<String, Var>,
    param_of: BTreeMap<Var, String>,
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Unnamed leaf; gradients are reported via [`Gradients::leaf`].
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Op::Leaf, value, requires_grad)
    }

    /// Named parameter leaf. Frozen parameters (`trainable = false`) carry no
    /// gradient and are never captured.
    pub fn param(&mut self, name: &str, value: Tensor, trainable: bool) -> Var {
        let v = self.push(Op::Leaf, value, trainable);
        self.params.insert(name.to_string(), v);
        if trainable {
            self.param_of.insert(v, name.to_string());
        }
        v
    }

    /// Row lookup `table[ids]`. `ids` holds `batch × T` indices; the output is
    /// `[batch, T, d]`.
    pub fn embed(&mut self, table: Var, ids: &[usize], batch: usize) -> Result<Var> {
        let tshape = self.value(table).shape().to_vec();
        if tshape.len() != 2 || batch == 0 || ids.len() % batch != 0 {
            return Err(shape_err("embed", &tshape, &[batch, ids.len()]));
        }
        let (vocab, d) = (tshape[0], tshape[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::Index(format!("embedding index {bad} >= table size {vocab}")));
        }
        let tdata = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tdata[i * d..(i + 1) * d]);
        }
        let value = Tensor::from_parts(vec![batch, ids.len() / batch, d], out);
        let rg = self.rg(table);
        Ok(self.push(
            Op::Embed {
                table,
                ids: ids.to_vec(),
                batch,
            },
            value,
            rg,
        ))
    }

    /// `x · W + b` with `x: [B, …, d]`, `W: [d, p]`, `b: [p]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.affine_impl(x, w, b, false)
    }

    /// `x · Wᵀ + b` with `x: [B, …, d]`, `W: [p, d]`, `b: [p]`.
    pub fn affine_t(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        self.affine_impl(x, w, b, true)
    }

    fn affine_impl(&mut self, x: Var, w: Var, b: Option<Var>, transposed: bool) -> Result<Var> {
        let op = "affine";
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() < 2 || ws.len() != 2 {
            return Err(shape_err(op, &xs, &ws));
        }
        let d = *xs.last().expect("rank >= 2");
        let (wd, p) = if transposed { (ws[1], ws[0]) } else { (ws[0], ws[1]) };
        if wd != d {
            return Err(shape_err(op, &xs, &ws));
        }
        if let Some(b) = b {
            let bs = self.value(b).shape();
            if bs != [p] {
                return Err(shape_err(op, &ws, bs));
            }
        }
        let rows = self.value(x).numel() / d;
        let wdata: std::borrow::Cow<[f64]> = if transposed {
            transpose(self.value(w).data(), p, d).into()
        } else {
            self.value(w).data().into()
        };
        let mut out = vec![0.0; rows * p];
        if let Some(b) = b {
            let bd = self.value(b).data();
            for r in 0..rows {
                out[r * p..(r + 1) * p].copy_from_slice(bd);
            }
        }
        matmul_acc(self.value(x).data(), &wdata, &mut out, rows, d, p);
        let mut oshape = xs.clone();
        *oshape.last_mut().expect("rank >= 2") = p;
        let value = Tensor::from_parts(oshape, out).check_finite(op)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Op::Affine {
                x,
                w,
                b,
                transposed,
                batch: xs[0],
            },
            value,
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("add", av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data).check_finite("add")?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x * s).collect();
        let value = Tensor::from_parts(av.shape().to_vec(), data).check_finite("scale")?;
        let rg = self.rg(a);
        Ok(self.push(Op::Scale(a, s), value, rg))
    }

    /// Batched product `[B, m, k] · [B, k, n] → [B, m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (as_, bs) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if as_.len() != 3 || bs.len() != 3 || as_[0] != bs[0] || as_[2] != bs[1] {
            return Err(shape_err("matmul", &as_, &bs));
        }
        let (batch, m, k, n) = (as_[0], as_[1], as_[2], bs[2]);
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            matmul_acc(
                &ad[i * m * k..(i + 1) * m * k],
                &bd[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let value = Tensor::from_parts(vec![batch, m, n], out).check_finite("matmul")?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
            },
            value,
            rg,
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = *xv.shape().last().ok_or_else(|| shape_err("softmax", xv.shape(), &[]))?;
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            softmax_in_place(row);
        }
        let value = Tensor::from_parts(xv.shape().to_vec(), out).check_finite("softmax")?;
        let rg = self.rg(x);
        Ok(self.push(Op::Softmax(x), value, rg))
    }

    /// Layer normalization over the last axis with gain and bias `[d]`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let d = *xs.last().ok_or_else(|| shape_err("layer_norm", &xs, &[]))?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [d] {
                return Err(shape_err("layer_norm", &xs, self.value(p).shape()));
            }
        }
        let (g, bta) = (self.value(gamma).data(), self.value(beta).data());
        let xd = self.value(x).data();
        let rows = xd.len() / d;
        let mut xhat = vec![0.0; xd.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g[j] + bta[j];
            }
        }
        let value = Tensor::from_parts(xs.clone(), out).check_finite("layer_norm")?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
                batch: xs[0],
            },
            value,
            rg,
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| gelu_scalar(v))
            .collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data).check_finite("gelu")?;
        let rg = self.rg(x);
        Ok(self.push(Op::Gelu(x), value, rg))
    }

    /// Multi-head causal self-attention on `[B, T, d]` projections; position
    /// `t` attends to positions `0..=t`.
    pub fn causal_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let qs = self.value(q).shape().to_vec();
        for other in [k, v] {
            if self.value(other).shape() != qs.as_slice() {
                return Err(shape_err("causal_attention", &qs, self.value(other).shape()));
            }
        }
        if qs.len() != 3 || heads == 0 || qs[2] % heads != 0 {
            return Err(shape_err("causal_attention", &qs, &[heads]));
        }
        let (batch, seq, d) = (qs[0], qs[1], qs[2]);
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.value(q).data(), self.value(k).data(), self.value(v).data());
        let mut probs = vec![0.0; batch * heads * seq * seq];
        let mut out = vec![0.0; batch * seq * d];
        for b in 0..batch {
            for h in 0..heads {
                let pbase = (b * heads + h) * seq * seq;
                for t in 0..seq {
                    let qt = &qd[(b * seq + t) * d + h * dh..][..dh];
                    let prow = &mut probs[pbase + t * seq..pbase + (t + 1) * seq];
                    for s in 0..=t {
                        prow[s] = dot(qt, &kd[(b * seq + s) * d + h * dh..][..dh]) * scale;
                    }
                    softmax_in_place(&mut prow[..=t]);
                    let orow = &mut out[(b * seq + t) * d + h * dh..][..dh];
                    for s in 0..=t {
                        axpy(prow[s], &vd[(b * seq + s) * d + h * dh..][..dh], orow);
                    }
                }
            }
        }
        let value = Tensor::from_parts(qs.clone(), out).check_finite("causal_attention")?;
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
                batch,
                seq,
            },
            value,
            rg,
        ))
    }

    /// Per-example mean negative log-likelihood over masked positions.
    /// `logits: [B, T, V]`, `targets` and `mask` hold `B × T` entries. An
    /// example with an all-zero mask has loss 0 and receives no gradient.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[f64]) -> Result<Var> {
        let ls = self.value(logits).shape().to_vec();
        if ls.len() != 3 || targets.len() != ls[0] * ls[1] || mask.len() != targets.len() {
            return Err(shape_err("cross_entropy", &ls, &[targets.len(), mask.len()]));
        }
        let (batch, seq, vocab) = (ls[0], ls[1], ls[2]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Index(format!("target {bad} >= vocabulary size {vocab}")));
        }
        if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Domain("cross-entropy mask entries must be 0 or 1".into()));
        }
        let ld = self.value(logits).data();
        let mut probs = ld.to_vec();
        let mut losses = vec![0.0; batch];
        let mut counts = vec![0.0; batch];
        for b in 0..batch {
            let mut total = 0.0;
            for t in 0..seq {
                let r = b * seq + t;
                let row = &mut probs[r * vocab..(r + 1) * vocab];
                let lse = softmax_in_place(row);
                if mask[r] != 0.0 {
                    total += lse - ld[r * vocab + targets[r]];
                    counts[b] += 1.0;
                }
            }
            if counts[b] > 0.0 {
                losses[b] = total / counts[b];
            }
        }
        let value = Tensor::from_parts(vec![batch], losses).check_finite("cross_entropy")?;
        let rg = self.rg(logits);
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
                probs,
                counts,
                seq,
                vocab,
            },
            value,
            rg,
        ))
    }

    /// Reverse pass from `root` seeded with `seed` (same length as the root).
    pub fn backward(&self, root: Var, seed: &[f64], mode: GradMode) -> Result<Gradients> {
        let node = self
            .nodes
            .get(root.0)
            .ok_or_else(|| Error::Usage(format!("variable {} is not on this tape", root.0)))?;
        if !node.requires_grad {
            return Err(Error::Usage("backward on a detached tensor".into()));
        }
        if seed.len() != node.value.numel() {
            return Err(shape_err("backward", node.value.shape(), &[seed.len()]));
        }
        let mut ctx = Backward {
            tape: self,
            grads: (0..=root.0).map(|_| None).collect(),
            mode,
            records: Vec::new(),
            batch: 0,
        };
        ctx.grads[root.0] = Some(seed.to_vec());
        for i in (0..=root.0).rev() {
            let Some(g) = ctx.grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                ctx.grads[i] = Some(g);
                continue;
            }
            ctx.step(i, g)?;
        }

        let mut out = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate().take(root.0 + 1) {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let v = Var(i);
            let g = ctx.grads[i].take();
            if self.param_of.contains_key(&v) {
                if mode == GradMode::Summed {
                    let t = match g {
                        Some(g) => Tensor::from_parts(node.value.shape().to_vec(), g),
                        None => Tensor::zeros(node.value.shape()),
                    };
                    out.params.insert(self.param_of[&v].clone(), t);
                }
            } else if let Some(g) = g {
                out.leaves
                    .insert(v, Tensor::from_parts(node.value.shape().to_vec(), g));
            }
        }
        if mode == GradMode::PerExample {
            out.captures = Some(PerExampleCaptures {
                batch: ctx.batch,
                records: ctx.records,
            });
        }
        Ok(out)
    }
}

/// Normalizes `row` into probabilities in place and returns its log-sum-exp.
pub(crate) fn gelu_scalar(v: f64) -> f64 {
    0.5 * v * (1.0 + (GELU_C * (v + GELU_K * v * v * v)).tanh())
}

/// Normalizes `row` in place and returns its log-sum-exp.
pub(crate) fn softmax_in_place(row: &mut [f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in row.iter_mut() {
        *v /= z;
    }
    m + z.ln()
}

struct Backward<'a> {
    tape: &'a Tape,
    grads: Vec<Option<Vec<f64>>>,
    mode: GradMode,
    records: Vec<CaptureRecord>,
    batch: usize,
}

impl<'a> Backward<'a> {
    fn val(&self, v: Var) -> &'a Tensor {
        &self.tape.nodes[v.0].value
    }

    fn rg(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }

    fn captured_param(&self, v: Var) -> Option<&'a str> {
        if self.mode == GradMode::PerExample {
            self.tape.param_of.get(&v).map(String::as_str)
        } else {
            None
        }
    }

    fn accumulate(&mut self, v: Var, g: Vec<f64>) -> Result<()> {
        if let Some(name) = self.captured_param(v) {
            return Err(Error::Usage(format!(
                "parameter {name} feeds an op without per-example capture support"
            )));
        }
        match &mut self.grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn record(&mut self, param: &str, batch: usize, per_example: Vec<Contribution>) {
        self.batch = self.batch.max(batch);
        self.records.push(CaptureRecord {
            param: param.to_string(),
            per_example,
        });
    }

    /// Per-example row sums of `g` viewed as `[batch, rows_per, width]`.
    fn per_example_row_sums(g: &[f64], batch: usize, width: usize) -> Vec<Contribution> {
        let per = g.len() / batch;
        (0..batch)
            .map(|b| {
                let mut s = vec![0.0; width];
                for row in g[b * per..(b + 1) * per].chunks(width) {
                    axpy(1.0, row, &mut s);
                }
                Contribution::Dense(s)
            })
            .collect()
    }

    fn step(&mut self, i: usize, g: Vec<f64>) -> Result<()> {
        let tape = self.tape;
        let node = &tape.nodes[i];
        match &node.op {
            Op::Leaf => unreachable!("leaves are handled by the caller"),
            Op::Embed { table, ids, batch } => {
                let (table, batch) = (*table, *batch);
                if !self.rg(table) {
                    return Ok(());
                }
                let tshape = self.val(table).shape().to_vec();
                let (vocab, d) = (tshape[0], tshape[1]);
                if let Some(name) = self.captured_param(table).map(str::to_string) {
                    let seq = ids.len() / batch;
                    let per = (0..batch)
                        .map(|b| Contribution::Outer {
                            left: Factor::OneHot {
                                ids: ids[b * seq..(b + 1) * seq].to_vec(),
                                cols: vocab,
                            },
                            right: Factor::Dense {
                                rows: seq,
                                cols: d,
                                data: g[b * seq * d..(b + 1) * seq * d].to_vec(),
                            },
                        })
                        .collect();
                    self.record(&name, batch, per);
                } else {
                    let mut gt = vec![0.0; vocab * d];
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(1.0, &g[r * d..(r + 1) * d], &mut gt[id * d..(id + 1) * d]);
                    }
                    self.accumulate(table, gt)?;
                }
            }
            Op::Affine {
                x,
                w,
                b,
                transposed,
                batch,
            } => {
                let (x, w, b, transposed, batch) = (*x, *w, *b, *transposed, *batch);
                let d = *self.val(x).shape().last().expect("rank >= 2");
                let wshape = self.val(w).shape().to_vec();
                let p = if transposed { wshape[0] } else { wshape[1] };
                let rows = g.len() / p;
                if self.rg(x) {
                    // dx = g · Wᵀ (or g · W when transposed)
                    let wmat: std::borrow::Cow<[f64]> = if transposed {
                        self.val(w).data().into()
                    } else {
                        transpose(self.val(w).data(), d, p).into()
                    };
                    let mut dx = vec![0.0; rows * d];
                    matmul_acc(&g, &wmat, &mut dx, rows, p, d);
                    self.accumulate(x, dx)?;
                }
                if self.rg(w) {
                    let xd = self.val(x).data();
                    if let Some(name) = self.captured_param(w).map(str::to_string) {
                        let seq = rows / batch;
                        let per = (0..batch)
                            .map(|e| {
                                let a = Factor::Dense {
                                    rows: seq,
                                    cols: d,
                                    data: xd[e * seq * d..(e + 1) * seq * d].to_vec(),
                                };
                                let o = Factor::Dense {
                                    rows: seq,
                                    cols: p,
                                    data: g[e * seq * p..(e + 1) * seq * p].to_vec(),
                                };
                                if transposed {
                                    Contribution::Outer { left: o, right: a }
                                } else {
                                    Contribution::Outer { left: a, right: o }
                                }
                            })
                            .collect();
                        self.record(&name, batch, per);
                    } else {
                        let mut gw = vec![0.0; d * p];
                        if transposed {
                            matmul_tn_acc(&g, xd, &mut gw, rows, p, d);
                        } else {
                            matmul_tn_acc(xd, &g, &mut gw, rows, d, p);
                        }
                        self.accumulate(w, gw)?;
                    }
                }
                if let Some(b) = b.filter(|&b| self.rg(b)) {
                    if let Some(name) = self.captured_param(b).map(str::to_string) {
                        let per = Self::per_example_row_sums(&g, batch, p);
                        self.record(&name, batch, per);
                    } else {
                        let mut gb = vec![0.0; p];
                        for row in g.chunks(p) {
                            axpy(1.0, row, &mut gb);
                        }
                        self.accumulate(b, gb)?;
                    }
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                match (self.rg(a), self.rg(b)) {
                    (true, true) => {
                        self.accumulate(a, g.clone())?;
                        self.accumulate(b, g)?;
                    }
                    (true, false) => self.accumulate(a, g)?,
                    (false, true) => self.accumulate(b, g)?,
                    (false, false) => {}
                }
            }
            Op::Scale(a, s) => {
                let (a, s) = (*a, *s);
                self.accumulate(a, g.into_iter().map(|v| v * s).collect())?;
            }
            Op::MatMul {
                a,
                b,
                batch,
                m,
                k,
                n,
            } => {
                let (a, b, batch, m, k, n) = (*a, *b, *batch, *m, *k, *n);
                if self.rg(a) {
                    let bd = self.val(b).data();
                    let mut da = vec![0.0; batch * m * k];
                    for e in 0..batch {
                        let bt = transpose(&bd[e * k * n..(e + 1) * k * n], k, n);
                        matmul_acc(
                            &g[e * m * n..(e + 1) * m * n],
                            &bt,
                            &mut da[e * m * k..(e + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    self.accumulate(a, da)?;
                }
                if self.rg(b) {
                    let ad = self.val(a).data();
                    let mut db = vec![0.0; batch * k * n];
                    for e in 0..batch {
                        matmul_tn_acc(
                            &ad[e * m * k..(e + 1) * m * k],
                            &g[e * m * n..(e + 1) * m * n],
                            &mut db[e * k * n..(e + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    self.accumulate(b, db)?;
                }
            }
            Op::Softmax(x) => {
                let x = *x;
                let y = node.value.data();
                let n = *node.value.shape().last().expect("nonempty shape");
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                    let s = dot(yr, gr);
                    for j in 0..n {
                        dr[j] = yr[j] * (gr[j] - s);
                    }
                }
                self.accumulate(x, dx)?;
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
                batch,
            } => {
                let (x, gamma, beta, batch) = (*x, *gamma, *beta, *batch);
                let d = self.val(gamma).numel();
                let gm = self.val(gamma).data();
                if self.rg(x) {
                    let mut dx = vec![0.0; g.len()];
                    for (r, &rs) in rstd.iter().enumerate() {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            let dh = gr[j] * gm[j];
                            mean_dh += dh;
                            mean_dh_h += dh * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            dx[r * d + j] = rs * (gr[j] * gm[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    self.accumulate(x, dx)?;
                }
                let gh: Vec<f64> = g.iter().zip(xhat).map(|(a, b)| a * b).collect();
                for (p, src) in [(gamma, &gh), (beta, &g)] {
                    if !self.rg(p) {
                        continue;
                    }
                    if let Some(name) = self.captured_param(p).map(str::to_string) {
                        let per = Self::per_example_row_sums(src, batch, d);
                        self.record(&name, batch, per);
                    } else {
                        let mut acc = vec![0.0; d];
                        for row in src.chunks(d) {
                            axpy(1.0, row, &mut acc);
                        }
                        self.accumulate(p, acc)?;
                    }
                }
            }
            Op::Gelu(x) => {
                let x = *x;
                let xd = self.val(x).data();
                let dx = xd
                    .iter()
                    .zip(&g)
                    .map(|(&v, &gv)| {
                        let u = GELU_C * (v + GELU_K * v * v * v);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_K * v * v);
                        gv * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
                    })
                    .collect();
                self.accumulate(x, dx)?;
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
                batch,
                seq,
            } => {
                let (q, k, v, heads, batch, seq) = (*q, *k, *v, *heads, *batch, *seq);
                let d = self.val(q).shape()[2];
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qd, kd, vd) = (self.val(q).data(), self.val(k).data(), self.val(v).data());
                let mut dq = vec![0.0; qd.len()];
                let mut dk = vec![0.0; kd.len()];
                let mut dv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; seq];
                for b in 0..batch {
                    for h in 0..heads {
                        let pbase = (b * heads + h) * seq * seq;
                        for t in 0..seq {
                            let off_t = (b * seq + t) * d + h * dh;
                            let go = &g[off_t..off_t + dh];
                            let prow = &probs[pbase + t * seq..pbase + t * seq + t + 1];
                            for s in 0..=t {
                                let off_s = (b * seq + s) * d + h * dh;
                                dp[s] = dot(go, &vd[off_s..off_s + dh]);
                                axpy(prow[s], go, &mut dv[off_s..off_s + dh]);
                            }
                            let sdot = dot(prow, &dp[..=t]);
                            for s in 0..=t {
                                let ds = prow[s] * (dp[s] - sdot) * scale;
                                if ds == 0.0 {
                                    continue;
                                }
                                let off_s = (b * seq + s) * d + h * dh;
                                axpy(ds, &kd[off_s..off_s + dh], &mut dq[off_t..off_t + dh]);
                                axpy(ds, &qd[off_t..off_t + dh], &mut dk[off_s..off_s + dh]);
                            }
                        }
                    }
                }
                for (var, grad) in [(q, dq), (k, dk), (v, dv)] {
                    if self.rg(var) {
                        self.accumulate(var, grad)?;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
                probs,
                counts,
                seq,
                vocab,
            } => {
                let (logits, seq, vocab) = (*logits, *seq, *vocab);
                let mut dl = vec![0.0; probs.len()];
                for (b, &cnt) in counts.iter().enumerate() {
                    if cnt == 0.0 || g[b] == 0.0 {
                        continue;
                    }
                    let coef = g[b] / cnt;
                    for t in 0..seq {
                        let r = b * seq + t;
                        if mask[r] == 0.0 {
                            continue;
                        }
                        let row = &mut dl[r * vocab..(r + 1) * vocab];
                        axpy(coef, &probs[r * vocab..(r + 1) * vocab], row);
                        row[targets[r]] -= coef;
                    }
                }
                self.accumulate(logits, dl)?;
            }
        }
        Ok(())
    }
}
