use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// Dense row-major tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting a length mismatch or non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape {
                op: "tensor",
                left: shape,
                right: vec![data.len()],
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor"));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Entries drawn from `N(0, std²)`.
    pub fn randn<R: RngCore>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| std * standard_normal(rng)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub(crate) fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn transpose(src: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

const MR: usize = 4;
const NR: usize = 4;

/// `out[m×n] += a[m×k] · b[k×n]`
///
/// Works on `MR × NR` output tiles held in registers; every entry still
/// accumulates its products in increasing `k` order.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    tiled(out, m, n, k, Strided { data: a, row: k, depth: 1 }, b);
}

/// `out[m×n] += a[r×m]ᵀ · b[r×n]`
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], r: usize, m: usize, n: usize) {
    tiled(out, m, n, r, Strided { data: a, row: 1, depth: m }, b);
}

/// Left operand addressed as `data[i·row + kk·depth]`.
#[derive(Clone, Copy)]
struct Strided<'a> {
    data: &'a [f64],
    row: usize,
    depth: usize,
}

impl Strided<'_> {
    #[inline(always)]
    fn at(&self, i: usize, kk: usize) -> f64 {
        self.data[i * self.row + kk * self.depth]
    }
}

fn tiled(out: &mut [f64], m: usize, n: usize, depth: usize, a: Strided<'_>, b: &[f64]) {
    assert!(out.len() >= m * n && b.len() >= depth * n);
    let (full_rows, full_cols) = (m - m % MR, n - n % NR);
    // B packed into NR-wide column panels, each `depth × NR` contiguous
    let mut bpack = vec![0.0; full_cols * depth];
    for (p, panel) in bpack.chunks_exact_mut(depth * NR).enumerate() {
        for (kk, dst) in panel.chunks_exact_mut(NR).enumerate() {
            dst.copy_from_slice(&b[kk * n + p * NR..kk * n + p * NR + NR]);
        }
    }
    let mut apack = vec![0.0; depth * MR];
    for i in (0..full_rows).step_by(MR) {
        for (kk, dst) in apack.chunks_exact_mut(MR).enumerate() {
            for (r, d) in dst.iter_mut().enumerate() {
                *d = a.at(i + r, kk);
            }
        }
        for (p, panel) in bpack.chunks_exact(depth * NR).enumerate() {
            tile(out, n, i, p * NR, &apack, panel);
        }
    }
    // ragged edges
    for i in 0..m {
        let cols = if i < full_rows { full_cols..n } else { 0..n };
        if cols.is_empty() {
            continue;
        }
        for kk in 0..depth {
            let av = a.at(i, kk);
            let brow = &b[kk * n + cols.start..kk * n + cols.end];
            for (o, bv) in out[i * n + cols.start..i * n + cols.end].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[inline(always)]
fn tile(out: &mut [f64], n: usize, i: usize, j: usize, apack: &[f64], bpanel: &[f64]) {
    let mut acc = [[0.0; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&out[(i + r) * n + j..(i + r) * n + j + NR]);
    }
    for (x, bb) in apack.chunks_exact(MR).zip(bpanel.chunks_exact(NR)) {
        for r in 0..MR {
            for c in 0..NR {
                acc[r][c] += x[r] * bb[c];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        out[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
    }
}
