//! Dense row-major tensors and the forward/backward kernels the autograd
//! tape dispatches to.
//!
//! Tensors are plain values: gradient tracking lives on the tape
//! ([`crate::autograd::Graph`]), which pairs each recorded value with its
//! accumulated gradient.

use crate::error::TensorError;
use crate::scalar::Scalar;

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::dim("tensor", format!("zero extent in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(TensorError::dim(
                "tensor",
                format!("shape {shape:?} needs {n} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn eye(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { T::one() } else { T::zero() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<T> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.to_f64_lossy())).collect(),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(TensorError::shape(op, &self.shape, &other.shape));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub(crate) fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.numel() as f64)
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(|x| x.tanh())
    }

    pub fn gelu(&self) -> Self {
        self.map(gelu)
    }

    fn as_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(TensorError::dim(op, format!("expected a matrix, got {:?}", self.shape))),
        }
    }

    /// Matrix product `self · other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.matmul_with(other, false, false)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        self.matmul_with(other, false, true)
    }

    /// `selfᵀ · other`.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        self.matmul_with(other, true, false)
    }

    fn matmul_with(&self, other: &Self, ta: bool, tb: bool) -> Result<Self> {
        let (ar, ac) = self.as_matrix("matmul")?;
        let (br, bc) = other.as_matrix("matmul")?;
        let (m, k, a_strides) = if ta { (ac, ar, (1, ac)) } else { (ar, ac, (ac, 1)) };
        let (k2, n, b_strides) = if tb { (bc, br, (1, bc)) } else { (br, bc, (bc, 1)) };
        if k != k2 {
            return Err(TensorError::shape("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, &self.data, a_strides, &other.data, b_strides, &mut out, false);
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.as_matrix("transpose")?;
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            out.extend((0..r).map(|i| self.data[i * c + j]));
        }
        Ok(Tensor {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Adds `bias` (length C) to every row of an N×C matrix.
    pub fn add_row_bias(&self, bias: &Self) -> Result<Self> {
        let (_, c) = self.as_matrix("add_row_bias")?;
        if bias.numel() != c || bias.ndim() != 1 {
            return Err(TensorError::shape("add_row_bias", &self.shape, &bias.shape));
        }
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            for (x, &b) in row.iter_mut().zip(&bias.data) {
                *x += b;
            }
        }
        Ok(out)
    }

    /// Row-wise softmax, stabilized by subtracting each row's maximum.
    pub fn softmax_rows(&self) -> Result<Self> {
        let (_, c) = self.as_matrix("softmax_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        Ok(out)
    }

    /// Normalizes every row to zero mean and unit variance (no affine part).
    pub fn layer_norm_rows(&self) -> Result<Self> {
        let (_, c) = self.as_matrix("layer_norm_rows")?;
        let mut out = self.clone();
        for row in out.data.chunks_mut(c) {
            let (mean, inv_std) = row_moments(row);
            for x in row.iter_mut() {
                *x = (*x - mean) * inv_std;
            }
        }
        Ok(out)
    }

    /// Rows `[start, start+len)` along the leading axis.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        let lead = self.shape[0];
        if len == 0 || start + len > lead {
            return Err(TensorError::dim(
                "slice_rows",
                format!("range {start}..{} outside leading extent {lead}", start + len),
            ));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Tensor {
            shape,
            data: self.data[start * inner..(start + len) * inner].to_vec(),
        })
    }

    /// Concatenation along the leading axis.
    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Usage("concat of zero tensors".into()))?;
        let mut lead = 0;
        for p in parts {
            if p.shape[1..] != first.shape[1..] {
                return Err(TensorError::shape("concat_rows", &first.shape, &p.shape));
            }
            lead += p.shape[0];
        }
        let mut shape = first.shape.clone();
        shape[0] = lead;
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Tensor { shape, data })
    }

    /// Columns `[start, start+len)` of a matrix.
    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self> {
        let (r, c) = self.as_matrix("slice_cols")?;
        if len == 0 || start + len > c {
            return Err(TensorError::dim(
                "slice_cols",
                format!("range {start}..{} outside {c} columns", start + len),
            ));
        }
        let mut data = Vec::with_capacity(r * len);
        for row in self.data.chunks(c) {
            data.extend_from_slice(&row[start..start + len]);
        }
        Ok(Tensor {
            shape: vec![r, len],
            data,
        })
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Usage("concat of zero tensors".into()))?;
        let (r, _) = first.as_matrix("concat_cols")?;
        let mut total = 0;
        for p in parts {
            let (pr, pc) = p.as_matrix("concat_cols")?;
            if pr != r {
                return Err(TensorError::shape("concat_cols", &first.shape, &p.shape));
            }
            total += pc;
        }
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for p in parts {
                let pc = p.shape[1];
                data.extend_from_slice(&p.data[i * pc..(i + 1) * pc]);
            }
        }
        Ok(Tensor {
            shape: vec![r, total],
            data,
        })
    }

    fn as_image(&self, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(TensorError::dim(op, format!("expected C×H×W, got {:?}", self.shape))),
        }
    }

    /// 2-D cross-correlation of a C×H×W input with O×C×kh×kw kernels.
    pub fn conv2d(&self, kernels: &Self, bias: Option<&Self>, stride: usize, pad: usize) -> Result<Self> {
        let geom = ConvGeometry::new(self, kernels, stride, pad)?;
        if let Some(b) = bias {
            if b.shape != [geom.out_c] {
                return Err(TensorError::shape("conv2d", &kernels.shape, &b.shape));
            }
        }
        let p = geom.out_h * geom.out_w;
        let mut out = vec![T::zero(); geom.out_c * p];
        if let Some(b) = bias {
            for (row, &bv) in out.chunks_mut(p).zip(&b.data) {
                row.fill(bv);
            }
        }
        let ckk = geom.patch_len();
        let cols_owned;
        let cols: &[T] = if geom.is_pointwise() {
            &self.data
        } else {
            cols_owned = geom.im2col(&self.data);
            &cols_owned
        };
        T::gemm(geom.out_c, ckk, p, &kernels.data, (ckk, 1), cols, (p, 1), &mut out, true);
        Ok(Tensor {
            shape: vec![geom.out_c, geom.out_h, geom.out_w],
            data: out,
        })
    }

    /// Average pooling with a square window. In `ceil` mode the trailing
    /// partial windows are kept and averaged over their in-bounds cells.
    pub fn avgpool2d(&self, window: usize, stride: usize, ceil: bool) -> Result<Self> {
        let geom = PoolGeometry::new(self, window, stride, ceil)?;
        let (c, h, w) = (geom.c, geom.h, geom.w);
        let mut out = Vec::with_capacity(c * geom.out_h * geom.out_w);
        for ch in 0..c {
            let plane = &self.data[ch * h * w..(ch + 1) * h * w];
            for oy in 0..geom.out_h {
                for ox in 0..geom.out_w {
                    let (ys, xs) = geom.window(oy, ox);
                    let mut acc = T::zero();
                    for y in ys.clone() {
                        for x in xs.clone() {
                            acc += plane[y * w + x];
                        }
                    }
                    out.push(acc / T::of((ys.len() * xs.len()) as f64));
                }
            }
        }
        Ok(Tensor {
            shape: vec![c, geom.out_h, geom.out_w],
            data: out,
        })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Standard normal CDF.
#[inline]
pub(crate) fn phi<T: Scalar>(x: T) -> T {
    T::of(0.5) * (T::one() + (x * T::of(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

#[inline]
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    x * phi(x)
}

/// d/dx [x·Φ(x)] = Φ(x) + x·φ(x)
#[inline]
pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let pdf = (-(x * x) * T::of(0.5)).exp() * T::of(0.398_942_280_401_432_7);
    phi(x) + x * pdf
}

pub(crate) const LAYER_NORM_EPS: f64 = 1e-5;

pub(crate) fn row_moments<T: Scalar>(row: &[T]) -> (T, T) {
    let n = T::of(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    (mean, T::one() / (var + T::of(LAYER_NORM_EPS)).sqrt())
}

/// Wraps an angle to (−π, π].
pub fn wrap_angle<T: Scalar>(a: T) -> T {
    let pi = T::of(std::f64::consts::PI);
    let two_pi = pi + pi;
    let mut r = a - two_pi * ((a + pi) / two_pi).floor();
    // r ∈ [−π, π); move the closed end to +π
    if r <= -pi {
        r += two_pi;
    }
    r
}

/// Index bookkeeping shared by the conv forward and backward passes.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new<T: Scalar>(input: &Tensor<T>, kernels: &Tensor<T>, stride: usize, pad: usize) -> Result<Self> {
        let (c, h, w) = input.as_image("conv2d")?;
        let [out_c, kc, kh, kw] = kernels.shape[..] else {
            return Err(TensorError::dim(
                "conv2d",
                format!("kernels must be O×C×kh×kw, got {:?}", kernels.shape),
            ));
        };
        if kc != c {
            return Err(TensorError::shape("conv2d", &input.shape, &kernels.shape));
        }
        if stride == 0 {
            return Err(TensorError::dim("conv2d", "stride must be at least 1"));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(TensorError::dim(
                "conv2d",
                format!(
                    "kernel {kh}×{kw} larger than padded input {}×{} (input {:?})",
                    h + 2 * pad,
                    w + 2 * pad,
                    input.shape
                ),
            ));
        }
        Ok(ConvGeometry {
            c,
            h,
            w,
            out_c,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Lowers the input to a (C·kh·kw)×(H'·W') patch matrix.
    pub fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let p = self.out_h * self.out_w;
        let mut cols = vec![T::zero(); self.patch_len() * p];
        for ch in 0..self.c {
            let plane = &x[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    self.for_each_tap(ky, kx, |o, src| dst[o] = plane[src]);
                }
            }
        }
        cols
    }

    /// Scatter-adds a patch matrix back onto a C×H×W buffer.
    pub fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let p = self.out_h * self.out_w;
        for ch in 0..self.c {
            let plane = &mut dx[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ch * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    self.for_each_tap(ky, kx, |o, dst| plane[dst] += src[o]);
                }
            }
        }
    }

    /// Visits every (output position, input offset) pair for one kernel tap
    /// that lands inside the unpadded input.
    #[inline]
    fn for_each_tap(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize)) {
        for oy in 0..self.out_h {
            let y = (oy * self.stride + ky) as isize - self.pad as isize;
            if y < 0 || y >= self.h as isize {
                continue;
            }
            let y = y as usize;
            for ox in 0..self.out_w {
                let x = (ox * self.stride + kx) as isize - self.pad as isize;
                if x >= 0 && (x as usize) < self.w {
                    f(oy * self.out_w + ox, y * self.w + x as usize);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PoolGeometry {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub window: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeometry {
    pub fn new<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize, ceil: bool) -> Result<Self> {
        let (c, h, w) = input.as_image("avgpool2d")?;
        if window == 0 || stride == 0 {
            return Err(TensorError::dim("avgpool2d", "window and stride must be positive"));
        }
        if window > h || window > w {
            return Err(TensorError::dim(
                "avgpool2d",
                format!("window {window} exceeds extent {h}×{w}"),
            ));
        }
        let extent = |n: usize| {
            if ceil {
                (n - window).div_ceil(stride) + 1
            } else {
                (n - window) / stride + 1
            }
        };
        Ok(PoolGeometry {
            c,
            h,
            w,
            window,
            stride,
            out_h: extent(h),
            out_w: extent(w),
        })
    }

    pub fn window(&self, oy: usize, ox: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let y0 = oy * self.stride;
        let x0 = ox * self.stride;
        (
            y0..(y0 + self.window).min(self.h),
            x0..(x0 + self.window).min(self.w),
        )
    }
}
