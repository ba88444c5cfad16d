//! Plain dense tensors and the forward kernels shared by the tape and by
//! tape-free inference code.

use crate::error::{invalid, shape_err, Result};

/// Dense row-major `f64` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return invalid(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            );
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Builds a 2-D tensor from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return shape_err("from_rows", &[cols], &[r.len()]);
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            shape: vec![rows.len(), cols],
            data,
        })
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

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of columns of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return shape_err("reshape", &self.shape, shape);
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn require_2d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => invalid(op, format!("expected a 2-D tensor, got shape {s:?}")),
    }
}

/// `c += alpha * op(a) * op(b)` on raw row-major buffers.
///
/// `ta`/`tb` read the operand transposed; `m, k, n` describe the logical
/// product after transposition.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices cover m*k, k*n and m*n elements under the strides
    // above; callers check shapes before reaching this point.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of two 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = require_2d("matmul", a)?;
    let (k2, n) = require_2d("matmul", b)?;
    if k != k2 {
        return shape_err("matmul", a.shape(), b.shape());
    }
    let mut out = vec![0.0; m * n];
    if k > 0 {
        gemm_acc(m, k, n, a.data(), false, b.data(), false, &mut out, 0.0);
    }
    Tensor::new(&[m, n], out)
}

/// Adds `bias` (length = cols) to every row.
pub fn add_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (r, c) = require_2d("add_bias", x)?;
    if bias.numel() != c {
        return shape_err("add_bias", x.shape(), bias.shape());
    }
    let mut out = x.data().to_vec();
    for i in 0..r {
        for (o, b) in out[i * c..(i + 1) * c].iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Tensor::new(&[r, c], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Linear layer followed by an optional relu: `relu(x·w + b)`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor, relu_after: bool) -> Result<Tensor> {
    let y = add_bias(&matmul(x, w)?, b)?;
    Ok(if relu_after { relu(&y) } else { y })
}

/// Max over the neighbor axis of a `[centers, neighbors, channels]` tensor.
///
/// Returns the pooled `[centers, channels]` tensor and, for every output
/// element, the flat input index that produced it (lowest index on ties).
pub fn max_pool_groups(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (g, k, c) = match x.shape() {
        [g, k, c] => (*g, *k, *c),
        s => return invalid("max_pool_groups", format!("expected 3-D input, got {s:?}")),
    };
    if k == 0 {
        return invalid("max_pool_groups", "empty neighbor axis");
    }
    let d = x.data();
    let mut out = Vec::with_capacity(g * c);
    let mut arg = Vec::with_capacity(g * c);
    for gi in 0..g {
        let base = gi * k * c;
        out.extend_from_slice(&d[base..base + c]);
        arg.extend((0..c).map(|ci| base + ci));
        let o = &mut out[gi * c..];
        let a = &mut arg[gi * c..];
        for ki in 1..k {
            let row = &d[base + ki * c..base + (ki + 1) * c];
            for ci in 0..c {
                if row[ci] > o[ci] {
                    o[ci] = row[ci];
                    a[ci] = base + ki * c + ci;
                }
            }
        }
    }
    Ok((Tensor::new(&[g, c], out)?, arg))
}

/// Gathers rows of a 2-D tensor.
pub fn gather_rows(x: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let (r, c) = require_2d("gather_rows", x)?;
    let mut out = Vec::with_capacity(idx.len() * c);
    for &i in idx {
        if i >= r {
            return invalid("gather_rows", format!("row {i} out of range for {r} rows"));
        }
        out.extend_from_slice(x.row(i));
    }
    Tensor::new(&[idx.len(), c], out)
}

/// Concatenates 2-D tensors with equal row counts along columns.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let rows = parts.first().map_or(0, |p| p.rows());
    let mut total = 0;
    for p in parts {
        let (r, c) = require_2d("concat_cols", p)?;
        if r != rows {
            return shape_err("concat_cols", parts[0].shape(), p.shape());
        }
        total += c;
    }
    let mut out = Vec::with_capacity(rows * total);
    for i in 0..rows {
        for p in parts {
            out.extend_from_slice(p.row(i));
        }
    }
    Tensor::new(&[rows, total], out)
}

/// `out[i] = sum_j weights[i*k + j] * x[idx[i*k + j]]` over rows of `x`.
pub fn weighted_gather(x: &Tensor, idx: &[usize], weights: &[f64], k: usize) -> Result<Tensor> {
    let (r, c) = require_2d("weighted_gather", x)?;
    if k == 0 || idx.len() != weights.len() || idx.len() % k != 0 {
        return invalid(
            "weighted_gather",
            format!("{} indices / {} weights for fan-in {k}", idx.len(), weights.len()),
        );
    }
    let n = idx.len() / k;
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let o = &mut out[i * c..(i + 1) * c];
        for j in 0..k {
            let src = idx[i * k + j];
            if src >= r {
                return invalid("weighted_gather", format!("row {src} out of range for {r} rows"));
            }
            let w = weights[i * k + j];
            for (ov, xv) in o.iter_mut().zip(x.row(src)) {
                *ov += w * xv;
            }
        }
    }
    Tensor::new(&[n, c], out)
}
