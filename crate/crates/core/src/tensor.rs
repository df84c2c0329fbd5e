//! Dense row-major `f64` tensors and the kernels the network is built from.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return invalid(format!("tensor extents must be positive, got {shape:?}"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return dim_err(format!("shape {shape:?} needs {expected} values, got {}", data.len()));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return dim_err("ragged rows");
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return dim_err(format!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.shape[1])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Strided view of a matrix operand for [`gemm`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: isize,
    pub col_stride: isize,
}

impl<'a> MatRef<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert!(data.len() >= rows * cols);
        MatRef { data, rows, cols, row_stride: cols as isize, col_stride: 1 }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }
}

/// `out = beta * out + a * b`, `out` row-major `a.rows × b.cols`.
pub(crate) fn gemm(a: MatRef<'_>, b: MatRef<'_>, beta: f64, out: &mut [f64]) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert!(out.len() >= a.rows * b.cols);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the operand slices cover every (row, col) addressed through the
    // given strides and `out` holds m*n contiguous row-major elements.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.row_stride,
            a.col_stride,
            b.data.as_ptr(),
            b.row_stride,
            b.col_stride,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of `a` (m×k) and `b` (k×n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[0] {
        return dim_err(format!("matmul shapes {:?} and {:?} do not chain", a.shape, b.shape));
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    gemm(MatRef::new(&a.data, m, k), MatRef::new(&b.data, k, n), 0.0, &mut out);
    debug_assert!(out.iter().all(|v| v.is_finite()) || !(a.all_finite() && b.all_finite()));
    Tensor::new(vec![m, n], out)
}

/// Unrolls every `kh×kw` window of a `C×H×W` image into a
/// `(C·kh·kw) × (Ho·Wo)` column matrix.
pub(crate) fn im2col(input: &[f64], (c, h, w): (usize, usize, usize), (kh, kw): (usize, usize), cols: &mut [f64]) {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let p = ho * wo;
    debug_assert_eq!(cols.len(), c * kh * kw * p);
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = (ci * kh + dy) * kw + dx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let src = &plane[(oy + dy) * w + dx..(oy + dy) * w + dx + wo];
                    dst[oy * wo..(oy + 1) * wo].copy_from_slice(src);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates a column matrix back into an image.
pub(crate) fn col2im(cols: &[f64], (c, h, w): (usize, usize, usize), (kh, kw): (usize, usize), image: &mut [f64]) {
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let p = ho * wo;
    image.iter_mut().for_each(|v| *v = 0.0);
    for ci in 0..c {
        let plane = &mut image[ci * h * w..(ci + 1) * h * w];
        for dy in 0..kh {
            for dx in 0..kw {
                let row = (ci * kh + dy) * kw + dx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..ho {
                    let dst = &mut plane[(oy + dy) * w + dx..(oy + dy) * w + dx + wo];
                    for (d, s) in dst.iter_mut().zip(&src[oy * wo..(oy + 1) * wo]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Valid (unpadded, stride 1) cross-correlation with per-channel bias.
///
/// `input` is `C_in×H×W`, `kernels` is `C_out×C_in×kh×kw`, `bias` is `C_out`.
pub fn conv2d_valid(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let [c, h, w] = input.shape[..] else {
        return dim_err(format!("conv input must be C×H×W, got {:?}", input.shape));
    };
    let [co, ci, kh, kw] = kernels.shape[..] else {
        return dim_err(format!("kernels must be Cout×Cin×kh×kw, got {:?}", kernels.shape));
    };
    if ci != c {
        return dim_err(format!(
            "kernel channels {ci} do not match input channels {c} (input {:?}, kernels {:?})",
            input.shape, kernels.shape
        ));
    }
    if kh > h || kw > w {
        return dim_err(format!("kernel {kh}×{kw} larger than input {h}×{w}"));
    }
    if bias.shape != [co] {
        return dim_err(format!("bias must have shape [{co}], got {:?}", bias.shape));
    }
    let (ho, wo) = (h - kh + 1, w - kw + 1);
    let k = c * kh * kw;
    let p = ho * wo;
    let mut cols = vec![0.0; k * p];
    im2col(&input.data, (c, h, w), (kh, kw), &mut cols);
    let mut out = vec![0.0; co * p];
    for (o, chunk) in out.chunks_mut(p).enumerate() {
        chunk.iter_mut().for_each(|v| *v = bias.data[o]);
    }
    gemm(MatRef::new(&kernels.data, co, k), MatRef::new(&cols, k, p), 1.0, &mut out);
    Tensor::new(vec![co, ho, wo], out)
}

/// In-place numerically stable softmax of one row.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Row-wise softmax of a `b×n` logit matrix.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    if logits.shape.len() != 2 {
        return dim_err(format!("softmax expects b×n, got {:?}", logits.shape));
    }
    if logits.shape[1] < 2 {
        return invalid("softmax needs at least two classes");
    }
    let mut out = logits.clone();
    for row in out.data.chunks_mut(logits.shape[1]) {
        softmax_in_place(row);
    }
    Ok(out)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
