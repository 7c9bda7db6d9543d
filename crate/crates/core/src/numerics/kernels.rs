//! Raw slice kernels shared by the forward and backward passes.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// `c += op(a) · op(b)` on row-major slices, where `op` optionally transposes.
/// `a` is stored as `m × k` (or `k × m` when `ta`), `b` as `k × n` (or `n × k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm_acc(
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    c: &mut [f64],
) {
    let av = if ta {
        ArrayView2::from_shape((k, m), a).expect("a shape").reversed_axes()
    } else {
        ArrayView2::from_shape((m, k), a).expect("a shape")
    };
    let bv = if tb {
        ArrayView2::from_shape((n, k), b).expect("b shape").reversed_axes()
    } else {
        ArrayView2::from_shape((k, n), b).expect("b shape")
    };
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("c shape");
    general_mat_mul(1.0, &av, &bv, 1.0, &mut cv);
}

pub(crate) fn gemm(a: &[f64], ta: bool, b: &[f64], tb: bool, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    gemm_acc(a, ta, b, tb, m, k, n, &mut c);
    c
}

/// Geometry of a temporal convolution over `[N, T, V, C]` inputs with
/// symmetric zero padding of `(K − 1) / 2` frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub t: usize,
    pub v: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn pad(&self) -> usize {
        (self.k - 1) / 2
    }

    pub fn t_out(&self) -> usize {
        (self.t + 2 * self.pad() - self.k) / self.stride + 1
    }

    pub fn rows(&self) -> usize {
        self.n * self.t_out() * self.v
    }

    pub fn width(&self) -> usize {
        self.k * self.cin
    }

    /// Input frame read by output frame `to` at tap `tap`, if inside the sequence.
    fn source(&self, to: usize, tap: usize) -> Option<usize> {
        let pos = (to * self.stride + tap) as isize - self.pad() as isize;
        (pos >= 0 && (pos as usize) < self.t).then_some(pos as usize)
    }
}

/// Unfolds `x` into a `rows × (K·Cin)` matrix.
pub(crate) fn im2col(x: &[f64], g: &ConvGeom) -> Vec<f64> {
    let width = g.width();
    let t_out = g.t_out();
    let mut cols = vec![0.0; g.rows() * width];
    for n in 0..g.n {
        for to in 0..t_out {
            for tap in 0..g.k {
                let Some(ti) = g.source(to, tap) else { continue };
                for v in 0..g.v {
                    let row = (n * t_out + to) * g.v + v;
                    let src = ((n * g.t + ti) * g.v + v) * g.cin;
                    let dst = row * width + tap * g.cin;
                    cols[dst..dst + g.cin].copy_from_slice(&x[src..src + g.cin]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds column gradients back onto the input.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom) -> Vec<f64> {
    let width = g.width();
    let t_out = g.t_out();
    let mut x = vec![0.0; g.n * g.t * g.v * g.cin];
    for n in 0..g.n {
        for to in 0..t_out {
            for tap in 0..g.k {
                let Some(ti) = g.source(to, tap) else { continue };
                for v in 0..g.v {
                    let row = (n * t_out + to) * g.v + v;
                    let dst = ((n * g.t + ti) * g.v + v) * g.cin;
                    let src = row * width + tap * g.cin;
                    for c in 0..g.cin {
                        x[dst + c] += cols[src + c];
                    }
                }
            }
        }
    }
    x
}
