//! Shared numerical primitives: compensated summation, deterministic
//! parallel reduction, and small bounded maximizers.

use rayon::prelude::*;

/// Neumaier variant of Kahan summation. Keeps a running compensation term so
/// that long sums of mixed-magnitude terms stay accurate to ~1 ulp.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Fixed chunk width for parallel sums. Chunk boundaries depend only on the
/// index range, never on the thread count, so results are reproducible.
pub const SUM_CHUNK: usize = 4096;

/// Sum `term(i)` for `i in 0..n` with compensated accumulation.
///
/// The range is split into fixed-width chunks; each chunk is summed in index
/// order and the chunk totals are combined in index order, so the result is
/// identical for any number of worker threads (including one).
pub fn chunked_sum<F>(n: usize, term: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    if n == 0 {
        return 0.0;
    }
    let chunks = n.div_ceil(SUM_CHUNK);
    let partials: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * SUM_CHUNK;
            let hi = (lo + SUM_CHUNK).min(n);
            let mut acc = CompensatedSum::new();
            for i in lo..hi {
                acc.add(term(i));
            }
            acc.value()
        })
        .collect();
    let mut total = CompensatedSum::new();
    for p in partials {
        total.add(p);
    }
    total.value()
}

/// Golden-section search for the maximum of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmax, max)`. Tolerance is on the argument interval.
pub fn golden_max<F>(mut lo: f64, mut hi: f64, x_tol: f64, f: F) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut a = hi - INV_PHI * (hi - lo);
    let mut b = lo + INV_PHI * (hi - lo);
    let mut fa = f(a);
    let mut fb = f(b);
    while hi - lo > x_tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_PHI * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_PHI * (hi - lo);
            fa = f(a);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid);
    if fm >= fa && fm >= fb {
        (mid, fm)
    } else if fa >= fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Solve the symmetric positive-definite system `G x = y` for dim 1..=3 by
/// direct elimination. Returns `None` when the pivot degenerates.
pub fn solve_spd_small(g: &[[f64; 3]; 3], y: &[f64; 3], dim: usize) -> Option<[f64; 3]> {
    let mut a = *g;
    let mut b = *y;
    // Gaussian elimination with partial pivoting on the leading dim x dim block.
    let mut perm = [0usize, 1, 2];
    for k in 0..dim {
        let (mut p, mut best) = (k, a[perm[k]][k].abs());
        for r in (k + 1)..dim {
            let v = a[perm[r]][k].abs();
            if v > best {
                p = r;
                best = v;
            }
        }
        if best < 1e-300 {
            return None;
        }
        perm.swap(k, p);
        let pivot = a[perm[k]][k];
        for r in (k + 1)..dim {
            let factor = a[perm[r]][k] / pivot;
            for c in k..dim {
                a[perm[r]][c] -= factor * a[perm[k]][c];
            }
            b[perm[r]] -= factor * b[perm[k]];
        }
    }
    let mut x = [0.0f64; 3];
    for k in (0..dim).rev() {
        let mut s = b[perm[k]];
        for c in (k + 1)..dim {
            s -= a[perm[k]][c] * x[c];
        }
        x[k] = s / a[perm[k]][k];
    }
    Some(x)
}

/// Least-squares fit of `y = a + b x`; returns the slope `b`.
pub fn linear_fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
