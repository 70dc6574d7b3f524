//! Per-example gradient records produced by a capturing backward pass.
//!
//! The gradient an example contributes to a weight matrix `W` used in an
//! affine map is a sum over positions of outer products, i.e. `Lᵀ R` for two
//! per-example factor matrices with one row per position. Storing the
//! factors instead of the product is what lets ghost clipping compute norms
//! without materializing per-example weight gradients.

use std::collections::BTreeMap;

use super::tensor::{axpy, dot, matmul_tn_acc};

/// One per-example factor matrix with `rows` positions and `cols` columns.
#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Dense {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    /// Row `t` is the unit vector `e_{ids[t]}` of length `cols`.
    OneHot { ids: Vec<usize>, cols: usize },
}

impl Factor {
    pub fn rows(&self) -> usize {
        match self {
            Factor::Dense { rows, .. } => *rows,
            Factor::OneHot { ids, .. } => ids.len(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Factor::Dense { cols, .. } | Factor::OneHot { cols, .. } => *cols,
        }
    }

    /// Cross Gram matrix `self · otherᵀ`, shape `[self.rows × other.rows]`.
    pub fn gram(&self, other: &Factor) -> Vec<f64> {
        let (m, n) = (self.rows(), other.rows());
        let mut out = vec![0.0; m * n];
        match (self, other) {
            (
                Factor::Dense { cols, data: a, .. },
                Factor::Dense { data: b, .. },
            ) => {
                let c = *cols;
                for i in 0..m {
                    let ar = &a[i * c..(i + 1) * c];
                    for j in 0..n {
                        out[i * n + j] = dot(ar, &b[j * c..(j + 1) * c]);
                    }
                }
            }
            (Factor::OneHot { ids, .. }, Factor::Dense { cols, data, .. }) => {
                for (i, &id) in ids.iter().enumerate() {
                    for j in 0..n {
                        out[i * n + j] = data[j * cols + id];
                    }
                }
            }
            (Factor::Dense { cols, data, .. }, Factor::OneHot { ids, .. }) => {
                for i in 0..m {
                    for (j, &id) in ids.iter().enumerate() {
                        out[i * n + j] = data[i * cols + id];
                    }
                }
            }
            (Factor::OneHot { ids: a, .. }, Factor::OneHot { ids: b, .. }) => {
                for (i, &x) in a.iter().enumerate() {
                    for (j, &y) in b.iter().enumerate() {
                        if x == y {
                            out[i * n + j] = 1.0;
                        }
                    }
                }
            }
        }
        out
    }
}

/// `leftᵀ · right`, shape `[left.cols × right.cols]`, row-major.
pub fn outer_product(left: &Factor, right: &Factor) -> Vec<f64> {
    let (m, n) = (left.cols(), right.cols());
    let mut out = vec![0.0; m * n];
    if let (Factor::Dense { data: l, .. }, Factor::Dense { data: r, .. }) = (left, right) {
        matmul_tn_acc(l, r, &mut out, left.rows(), m, n);
        return out;
    }
    let mut row = Vec::with_capacity(n);
    for t in 0..left.rows() {
        row.clear();
        match right {
            Factor::Dense { cols, data, .. } => row.extend_from_slice(&data[t * cols..(t + 1) * cols]),
            Factor::OneHot { ids, cols } => {
                row.resize(*cols, 0.0);
                row[ids[t]] = 1.0;
            }
        }
        match left {
            Factor::Dense { cols, data, .. } => {
                for (i, &lv) in data[t * cols..(t + 1) * cols].iter().enumerate() {
                    if lv != 0.0 {
                        axpy(lv, &row, &mut out[i * n..(i + 1) * n]);
                    }
                }
            }
            Factor::OneHot { ids, .. } => {
                let i = ids[t];
                axpy(1.0, &row, &mut out[i * n..(i + 1) * n]);
            }
        }
    }
    out
}

/// One example's contribution to one parameter's gradient.
#[derive(Debug, Clone, PartialEq)]
pub enum Contribution {
    /// Gradient equals `leftᵀ · right`.
    Outer { left: Factor, right: Factor },
    /// Materialized gradient, flattened row-major.
    Dense(Vec<f64>),
}

impl Contribution {
    pub fn materialize(&self) -> Vec<f64> {
        match self {
            Contribution::Outer { left, right } => outer_product(left, right),
            Contribution::Dense(v) => v.clone(),
        }
    }

    pub fn numel(&self) -> usize {
        match self {
            Contribution::Outer { left, right } => left.cols() * right.cols(),
            Contribution::Dense(v) => v.len(),
        }
    }

    /// `out += alpha · materialize()` without forming the product.
    pub fn accumulate_into(&self, alpha: f64, out: &mut [f64]) {
        assert_eq!(out.len(), self.numel());
        match self {
            Contribution::Dense(v) => axpy(alpha, v, out),
            Contribution::Outer { left, right } => {
                let n = right.cols();
                match (left, right) {
                    (Factor::Dense { rows, cols, data }, Factor::Dense { data: r, .. }) => {
                        let scaled: Vec<f64> = data.iter().map(|v| alpha * v).collect();
                        matmul_tn_acc(&scaled, r, out, *rows, *cols, n);
                    }
                    (Factor::OneHot { ids, .. }, Factor::Dense { data: r, .. }) => {
                        for (t, &i) in ids.iter().enumerate() {
                            axpy(alpha, &r[t * n..(t + 1) * n], &mut out[i * n..(i + 1) * n]);
                        }
                    }
                    (Factor::Dense { cols, data, .. }, Factor::OneHot { ids, .. }) => {
                        for (t, &j) in ids.iter().enumerate() {
                            for (i, &l) in data[t * cols..(t + 1) * cols].iter().enumerate() {
                                out[i * n + j] += alpha * l;
                            }
                        }
                    }
                    (Factor::OneHot { ids: a, .. }, Factor::OneHot { ids: b, .. }) => {
                        for (&i, &j) in a.iter().zip(b) {
                            out[i * n + j] += alpha;
                        }
                    }
                }
            }
        }
    }
}

/// Per-example contributions for one use site of a parameter. A parameter
/// used at several sites (tied embeddings) carries several records.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureRecord {
    pub param: String,
    /// Indexed by example.
    pub per_example: Vec<Contribution>,
}

/// Everything a capturing backward pass recorded about a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerExampleCaptures {
    pub batch: usize,
    pub records: Vec<CaptureRecord>,
}

impl PerExampleCaptures {
    /// Records grouped by parameter name in deterministic order.
    pub fn by_param(&self) -> BTreeMap<&str, Vec<&CaptureRecord>> {
        let mut map: BTreeMap<&str, Vec<&CaptureRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(r.param.as_str()).or_default().push(r);
        }
        map
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(rows: usize, cols: usize, seed: f64) -> Factor {
        Factor::Dense {
            rows,
            cols,
            data: (0..rows * cols).map(|i| ((i as f64 + seed) * 0.7).sin()).collect(),
        }
    }

    fn to_dense(f: &Factor) -> Factor {
        match f {
            Factor::OneHot { ids, cols } => {
                let mut data = vec![0.0; ids.len() * cols];
                for (t, &i) in ids.iter().enumerate() {
                    data[t * cols + i] = 1.0;
                }
                Factor::Dense {
                    rows: ids.len(),
                    cols: *cols,
                    data,
                }
            }
            d => d.clone(),
        }
    }

    #[test]
    fn one_hot_paths_match_dense_paths() {
        let oh = Factor::OneHot {
            ids: vec![2, 0, 2],
            cols: 4,
        };
        let d = dense(5, 4, 1.0);
        let ohd = to_dense(&oh);
        assert_eq!(oh.gram(&d), ohd.gram(&d));
        assert_eq!(d.gram(&oh), d.gram(&ohd));
        assert_eq!(oh.gram(&oh), ohd.gram(&ohd));
        let r = dense(3, 2, 3.0);
        assert_eq!(outer_product(&oh, &r), outer_product(&ohd, &r));
        let l = dense(3, 6, 2.0);
        assert_eq!(outer_product(&l, &oh), outer_product(&l, &ohd));
    }

    #[test]
    fn accumulation_matches_materialization() {
        let oh = Factor::OneHot {
            ids: vec![1, 3, 1],
            cols: 4,
        };
        let (l, r) = (dense(3, 5, 0.5), dense(3, 4, 1.5));
        for c in [
            Contribution::Outer { left: l.clone(), right: r.clone() },
            Contribution::Outer { left: oh.clone(), right: r.clone() },
            Contribution::Outer { left: l.clone(), right: oh.clone() },
            Contribution::Outer { left: oh.clone(), right: oh.clone() },
            Contribution::Dense(vec![0.5, -1.0, 2.0]),
        ] {
            let mut out = vec![1.0; c.numel()];
            c.accumulate_into(-0.7, &mut out);
            for (o, m) in out.iter().zip(c.materialize()) {
                assert!((o - (1.0 - 0.7 * m)).abs() < 1e-12);
            }
        }
    }
}
