//! Floating-point element trait and a strided GEMM wrapper over `matrixmultiply`.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

/// Parameter precision. `f32` is used for training; `f64` for gradient checks.
pub trait Scalar:
    Float + Debug + Default + Send + Sync + AddAssign + SubAssign + MulAssign + Sum + 'static
{
    /// `C = alpha * A·B + beta * C` with arbitrary (row, column) strides.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must lie
    /// inside the corresponding buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> f32 {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn from_f64(x: f64) -> f64 {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

/// Read-only strided matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    /// Contiguous row-major `[rows, cols]` starting at `offset`.
    pub fn rm(data: &'a [T], offset: usize, rows: usize, cols: usize, row_stride: usize) -> Self {
        View {
            data: &data[offset..],
            rows,
            cols,
            rs: row_stride,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
        }
    }
}

/// Mutable strided matrix view.
pub(crate) struct ViewMut<'a, T> {
    pub data: &'a mut [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> ViewMut<'a, T> {
    pub fn rm(
        data: &'a mut [T],
        offset: usize,
        rows: usize,
        cols: usize,
        row_stride: usize,
    ) -> Self {
        ViewMut {
            data: &mut data[offset..],
            rows,
            cols,
            rs: row_stride,
            cs: 1,
        }
    }
}

/// `c = alpha * a·b + beta * c`; when `beta == 0` the old contents of `c` are ignored.
pub(crate) fn gemm<T: Scalar>(alpha: T, a: View<'_, T>, b: View<'_, T>, beta: T, c: ViewMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!(a.rows, c.rows, "row count differs");
    assert_eq!(b.cols, c.cols, "column count differs");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    let c_max = (c.rows - 1) * c.rs + (c.cols - 1) * c.cs;
    assert!(c_max < c.data.len(), "output view out of bounds");
    if a.cols == 0 {
        for i in 0..c.rows {
            for j in 0..c.cols {
                let x = &mut c.data[i * c.rs + j * c.cs];
                *x = if beta == T::zero() { T::zero() } else { *x * beta };
            }
        }
        return;
    }
    assert!(a.max_index() < a.data.len(), "left view out of bounds");
    assert!(b.max_index() < b.data.len(), "right view out of bounds");
    // SAFETY: the asserts above bound every reachable index of a, b and c.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// Row-major `out[m,n] (+)= x[m,k] · w[k,n]`.
pub(crate) fn matmul<T: Scalar>(x: &[T], w: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    gemm(
        T::one(),
        View::rm(x, 0, m, k, k),
        View::rm(w, 0, k, n, n),
        beta,
        ViewMut::rm(out, 0, m, n, n),
    );
}

/// Row-major `out[m,n] (+)= x[m,k] · w[n,k]ᵀ`.
pub(crate) fn matmul_bt<T: Scalar>(x: &[T], w: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    gemm(
        T::one(),
        View::rm(x, 0, m, k, k),
        View::rm(w, 0, n, k, k).t(),
        beta,
        ViewMut::rm(out, 0, m, n, n),
    );
}

/// Row-major `out[k,n] (+)= x[m,k]ᵀ · y[m,n]`.
pub(crate) fn matmul_at<T: Scalar>(x: &[T], y: &[T], out: &mut [T], m: usize, k: usize, n: usize, acc: bool) {
    let beta = if acc { T::one() } else { T::zero() };
    gemm(
        T::one(),
        View::rm(x, 0, m, k, k).t(),
        View::rm(y, 0, m, n, n),
        beta,
        ViewMut::rm(out, 0, k, n, n),
    );
}
