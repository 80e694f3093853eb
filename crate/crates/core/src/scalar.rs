//! Scalar abstraction shared by every numeric kernel in the crate.
//!
//! Everything above this module is written against [`Scalar`] so the same
//! network can be evaluated in `f64` (training, gradient checks) or `f32`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating point element type: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Gauss error function.
    fn erf(self) -> Self;

    /// General strided matrix product `c (+)= a · b` with `a: m×k`, `b: k×n`,
    /// `c: m×n`. Strides are `(row, col)` in elements. When `accumulate` is
    /// false `c` is overwritten.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        c: &mut [Self],
        accumulate: bool,
    ) {
        naive_gemm(m, k, n, a, a_strides, b, b_strides, c, accumulate);
    }
}

#[allow(clippy::too_many_arguments)]
fn naive_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (ars, acs): (usize, usize),
    b: &[T],
    (brs, bcs): (usize, usize),
    c: &mut [T],
    accumulate: bool,
) {
    for i in 0..m {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..k {
                acc += a[i * ars + p * acs] * b[p * brs + j * bcs];
            }
            let slot = &mut c[i * n + j];
            *slot = if accumulate { *slot + acc } else { acc };
        }
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "gemm operand too short: need {} got {len}", last + 1);
    }
}

macro_rules! blas_scalar {
    ($t:ty, $gemm:path, $erf:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn erf(self) -> Self {
                $erf(self)
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                c: &mut [Self],
                accumulate: bool,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                assert!(c.len() >= m * n, "gemm output too short");
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: extents checked above; c is a dense m×n row-major block.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

blas_scalar!(f64, matrixmultiply::dgemm, libm::erf);
blas_scalar!(f32, matrixmultiply::sgemm, libm::erff);
