//! Raw forward/backward kernels on channels-last buffers.

use crate::layer::tap_offset;
use crate::scalar::{dense, dense_mut, dense_t, gemm, Mat, MatMut, Scalar};

/// Spatial extent `(N, S, F)` of an activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Grid {
    pub n: usize,
    pub s: usize,
    pub f: usize,
}

impl Grid {
    pub fn rows(&self) -> usize {
        self.n * self.s * self.f
    }
}

/// Filter and dilation of a spatial layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Taps {
    pub ks: usize,
    pub kf: usize,
    pub ds: usize,
    pub df: usize,
}

impl Taps {
    pub fn is_pointwise(&self) -> bool {
        self.ks == 1 && self.kf == 1
    }
}

/// Output range `[lo, hi)` whose shifted input index stays inside `0..len`.
fn valid_range(len: usize, offset: isize) -> (usize, usize) {
    let lo = (-offset).max(0) as usize;
    let hi = (len as isize - offset).clamp(0, len as isize) as usize;
    (lo.min(hi), hi)
}

/// One contiguous run of output rows and the matching input rows for a tap.
struct Run {
    out_row: usize,
    in_row: usize,
    len: usize,
}

/// Visits every tap and every run of rows it touches.
fn for_each_run(g: Grid, t: Taps, mut visit: impl FnMut(usize, Run)) {
    for a in 0..t.ks {
        let os = tap_offset(a, t.ks, t.ds);
        let (i0, i1) = valid_range(g.s, os);
        for b in 0..t.kf {
            let of = tap_offset(b, t.kf, t.df);
            let (j0, j1) = valid_range(g.f, of);
            if i0 >= i1 || j0 >= j1 {
                continue;
            }
            let tap = a * t.kf + b;
            for n in 0..g.n {
                if of == 0 {
                    // Whole symbols are contiguous; merge them into one run.
                    let out_row = (n * g.s + i0) * g.f;
                    let in_row = (n * g.s + (i0 as isize + os) as usize) * g.f;
                    visit(tap, Run { out_row, in_row, len: (i1 - i0) * g.f });
                    continue;
                }
                for i in i0..i1 {
                    let ii = (i as isize + os) as usize;
                    let out_row = (n * g.s + i) * g.f + j0;
                    let in_row = (n * g.s + ii) * g.f + (j0 as isize + of) as usize;
                    visit(tap, Run { out_row, in_row, len: j1 - j0 });
                }
            }
        }
    }
}

/// Dilated "same" convolution. `w` is `(ks, kf, cin, cout)`.
pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    g: Grid,
    cin: usize,
    w: &[T],
    t: Taps,
    cout: usize,
    bias: Option<&[T]>,
) -> Vec<T> {
    let mut y = vec![T::zero(); g.rows() * cout];
    if let Some(b) = bias {
        for row in y.chunks_exact_mut(cout) {
            row.copy_from_slice(b);
        }
    }
    if t.is_pointwise() {
        gemm(T::one(), dense(x, 0, g.rows(), cin), dense(w, 0, cin, cout), T::one(), dense_mut(&mut y, 0, g.rows(), cout));
        return y;
    }
    for_each_run(g, t, |tap, r| {
        gemm(
            T::one(),
            dense(x, r.in_row * cin, r.len, cin),
            dense(w, tap * cin * cout, cin, cout),
            T::one(),
            dense_mut(&mut y, r.out_row * cout, r.len, cout),
        );
    });
    y
}

/// Gradients of [`conv2d_forward`] with respect to input, weight and bias.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    g: Grid,
    cin: usize,
    w: &[T],
    t: Taps,
    cout: usize,
    dy: &[T],
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let mut dw = vec![T::zero(); w.len()];
    let mut db = vec![T::zero(); cout];
    for row in dy.chunks_exact(cout) {
        for (acc, &v) in db.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let mut dx = want_dx.then(|| vec![T::zero(); g.rows() * cin]);
    if t.is_pointwise() {
        let rows = g.rows();
        gemm(T::one(), dense_t(x, 0, rows, cin), dense(dy, 0, rows, cout), T::zero(), dense_mut(&mut dw, 0, cin, cout));
        if let Some(dx) = dx.as_mut() {
            gemm(T::one(), dense(dy, 0, rows, cout), dense_t(w, 0, cin, cout), T::zero(), dense_mut(dx, 0, rows, cin));
        }
        return (dx, dw, db);
    }
    for_each_run(g, t, |tap, r| {
        gemm(
            T::one(),
            Mat { data: x, offset: r.in_row * cin, rows: cin, cols: r.len, rs: 1, cs: cin },
            dense(dy, r.out_row * cout, r.len, cout),
            T::one(),
            dense_mut(&mut dw, tap * cin * cout, cin, cout),
        );
        if let Some(dx) = dx.as_mut() {
            gemm(
                T::one(),
                dense(dy, r.out_row * cout, r.len, cout),
                dense_t(w, tap * cin * cout, cin, cout),
                T::one(),
                MatMut { data: dx, offset: r.in_row * cin, rows: r.len, cols: cin, rs: cin, cs: 1 },
            );
        }
    });
    (dx, dw, db)
}

/// Repeats every channel `dm` times: `out[r, c * dm + m] = x[r, c]`.
fn expand_channels<T: Scalar>(x: &[T], cin: usize, dm: usize) -> Vec<T> {
    if dm == 1 {
        return x.to_vec();
    }
    let mut out = vec![T::zero(); x.len() * dm];
    if dm == 2 {
        for (o, &v) in out.chunks_exact_mut(2).zip(x) {
            o[0] = v;
            o[1] = v;
        }
    } else {
        for (o, &v) in out.chunks_exact_mut(dm).zip(x) {
            o.fill(v);
        }
    }
    debug_assert_eq!(out.len() % (cin * dm), 0);
    out
}

#[inline]
fn fma_row<T: Scalar>(dst: &mut [T], a: &[T], b: &[T]) {
    for ((d, &x), &y) in dst.iter_mut().zip(a).zip(b) {
        *d += x * y;
    }
}

/// Tap offsets `(tap index, ds, df)` of a filter.
fn tap_offsets(t: Taps) -> Vec<(usize, isize, isize)> {
    let mut v = Vec::with_capacity(t.ks * t.kf);
    for a in 0..t.ks {
        for b in 0..t.kf {
            v.push((a * t.kf + b, tap_offset(a, t.ks, t.ds), tap_offset(b, t.kf, t.df)));
        }
    }
    v
}

/// Row index of `(n, i + di, j + dj)` if it lies inside the grid.
#[inline]
fn shifted_row(g: Grid, n: usize, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
    let ii = i as isize + di;
    let jj = j as isize + dj;
    if ii < 0 || jj < 0 || ii >= g.s as isize || jj >= g.f as isize {
        return None;
    }
    Some((n * g.s + ii as usize) * g.f + jj as usize)
}

/// Depthwise convolution: output channel `c * dm + m` filters input channel
/// `c`. `w` is `(ks, kf, cin, dm)`.
pub(crate) fn depthwise_forward<T: Scalar>(x: &[T], g: Grid, cin: usize, w: &[T], t: Taps, dm: usize) -> Vec<T> {
    let cout = cin * dm;
    let xe = expand_channels(x, cin, dm);
    let taps = tap_offsets(t);
    let mut y = vec![T::zero(); g.rows() * cout];
    let mut rows = y.chunks_exact_mut(cout);
    for n in 0..g.n {
        for i in 0..g.s {
            for j in 0..g.f {
                let dst = rows.next().expect("row");
                for &(tap, di, dj) in &taps {
                    if let Some(src) = shifted_row(g, n, i, j, di, dj) {
                        fma_row(dst, &xe[src * cout..(src + 1) * cout], &w[tap * cout..(tap + 1) * cout]);
                    }
                }
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn depthwise_backward<T: Scalar>(
    x: &[T],
    g: Grid,
    cin: usize,
    w: &[T],
    t: Taps,
    dm: usize,
    dy: &[T],
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>) {
    let cout = cin * dm;
    let xe = expand_channels(x, cin, dm);
    let taps = tap_offsets(t);
    let mut dw = vec![T::zero(); w.len()];
    let mut row = 0;
    for n in 0..g.n {
        for i in 0..g.s {
            for j in 0..g.f {
                let grad = &dy[row * cout..(row + 1) * cout];
                for &(tap, di, dj) in &taps {
                    if let Some(src) = shifted_row(g, n, i, j, di, dj) {
                        fma_row(&mut dw[tap * cout..(tap + 1) * cout], &xe[src * cout..(src + 1) * cout], grad);
                    }
                }
                row += 1;
            }
        }
    }
    if !want_dx {
        return (None, dw);
    }
    // Input row (i, j) received output rows (i - di, j - dj).
    let mut dxe = vec![T::zero(); g.rows() * cout];
    let mut rows = dxe.chunks_exact_mut(cout);
    for n in 0..g.n {
        for i in 0..g.s {
            for j in 0..g.f {
                let dst = rows.next().expect("row");
                for &(tap, di, dj) in &taps {
                    if let Some(out) = shifted_row(g, n, i, j, -di, -dj) {
                        fma_row(dst, &dy[out * cout..(out + 1) * cout], &w[tap * cout..(tap + 1) * cout]);
                    }
                }
            }
        }
    }
    let dx = if dm == 1 { dxe } else { dxe.chunks_exact(dm).map(|c| c.iter().fold(T::zero(), |a, &b| a + b)).collect() };
    (Some(dx), dw)
}

/// Per-channel mean and biased variance over all rows.
pub(crate) fn channel_stats<T: Scalar>(x: &[T], c: usize) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / c;
    let mut mean = vec![0.0f64; c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v.f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0f64; c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.f64() - m;
            *s += d * d;
        }
    }
    (mean.into_iter().map(T::of).collect(), var.into_iter().map(|v| T::of(v / rows as f64)).collect())
}
