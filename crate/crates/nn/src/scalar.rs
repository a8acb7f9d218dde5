use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Floating-point element type of tensors: `f32` for training, `f64` for
/// gradient checks.
pub trait Scalar:
    Float + Default + Debug + Display + Sum + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    const NAME: &'static str;

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;

    /// `C <- alpha A B + beta C` on strided matrices.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must lie
    /// inside the allocation behind each pointer.
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
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn of(x: f64) -> Self {
        x as f32
    }

    fn f64(self) -> f64 {
        self as f64
    }

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
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn of(x: f64) -> Self {
        x
    }

    fn f64(self) -> f64 {
        self
    }

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
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// A strided matrix view into a slice.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

pub(crate) struct MatMut<'a, T> {
    pub data: &'a mut [T],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

fn last_index(offset: usize, rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    offset + (rows - 1) * rs + (cols - 1) * cs
}

/// `C <- alpha A B + beta C`, bounds-checked.
pub(crate) fn gemm<T: Scalar>(alpha: T, a: Mat<T>, b: Mat<T>, beta: T, c: MatMut<T>) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "gemm output shape");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        for r in 0..c.rows {
            for k in 0..c.cols {
                let v = &mut c.data[c.offset + r * c.rs + k * c.cs];
                *v = *v * beta;
            }
        }
        return;
    }
    assert!(last_index(a.offset, a.rows, a.cols, a.rs, a.cs) < a.data.len());
    assert!(last_index(b.offset, b.rows, b.cols, b.rs, b.cs) < b.data.len());
    assert!(last_index(c.offset, c.rows, c.cols, c.rs, c.cs) < c.data.len());
    // SAFETY: the three asserts above bound every reachable element.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        )
    }
}

/// Row-major dense matrix view.
pub(crate) fn dense<T>(data: &[T], offset: usize, rows: usize, cols: usize) -> Mat<'_, T> {
    Mat { data, offset, rows, cols, rs: cols, cs: 1 }
}

/// Transposed view of a row-major `rows x cols` block.
pub(crate) fn dense_t<T>(data: &[T], offset: usize, rows: usize, cols: usize) -> Mat<'_, T> {
    Mat { data, offset, rows: cols, cols: rows, rs: 1, cs: cols }
}

pub(crate) fn dense_mut<T>(data: &mut [T], offset: usize, rows: usize, cols: usize) -> MatMut<'_, T> {
    MatMut { data, offset, rows, cols, rs: cols, cs: 1 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive() {
        let a: Vec<f64> = (0..6).map(f64::from).collect();
        let b: Vec<f64> = (0..12).map(|v| f64::from(v) * 0.5 - 1.0).collect();
        let mut c = vec![1.0; 8];
        gemm(2.0, dense(&a, 0, 2, 3), dense(&b, 0, 3, 4), 1.0, dense_mut(&mut c, 0, 2, 4));
        for i in 0..2 {
            for j in 0..4 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 4 + j]).sum();
                assert_eq!(c[i * 4 + j], 1.0 + 2.0 * s);
            }
        }
        let mut ct = vec![0.0f64; 9];
        gemm(1.0, dense_t(&a, 0, 2, 3), dense(&a, 0, 2, 3), 0.0, dense_mut(&mut ct, 0, 3, 3));
        assert_eq!(ct[0 * 3 + 1], a[0] * a[1] + a[3] * a[4]);
    }
}
