//! A small abstraction over statistical models with a finite dataset space:
//! the quantum experiment (states = Bloch vectors) and the classical noisy
//! coin (states = biases in [0,1]) both implement it, so exact risk sums,
//! maximum-risk searches, and the least-favorable-prior solvers are written
//! once.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::experiment::ExperimentDesign;
use crate::numeric::{chunked_sum, golden_max};
use crate::qstate::{self, EPS_PHYS};
use crate::vec3::{self, Vec3};

/// Grid densities for the two-phase maximum-risk search. The grid phase is
/// followed by coordinate-ascent refinement from the best `refine_top`
/// points; the reported maximum is a certified lower bound on the true one.
#[derive(Debug, Clone)]
pub struct SearchConfig {
    /// Radial divisions for disk/ball grids.
    pub radial: usize,
    /// Angular divisions of the rebit disk grid.
    pub angular: usize,
    /// Fibonacci-sphere direction count for the qubit grid.
    pub sphere_points: usize,
    /// Grid points on [0, 1] for scalar (coin) models.
    pub line_points: usize,
    /// How many top grid points to refine locally.
    pub refine_top: usize,
    /// Coordinate-ascent sweeps in the refinement phase.
    pub refine_rounds: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            radial: 200,
            angular: 360,
            sphere_points: 300,
            line_points: 2001,
            refine_top: 10,
            refine_rounds: 8,
        }
    }
}

/// Width of the Bregman decomposition used by fast risk sums:
/// `loss(t, e) = self_term(t) - cross_coeffs(e) . features(t)`.
pub const FEATURE_WIDTH: usize = 4;

pub trait StatModel: Sync {
    type Point: Clone + Send + Sync + std::fmt::Debug + PartialEq;

    fn dataset_count(&self) -> usize;

    /// Fill `out[d] = Pr(D_d | point)` for every dataset index.
    fn likelihoods(&self, point: &Self::Point, out: &mut [f64]);

    /// Whether `Pr(D_d | point) > 0` in exact arithmetic (immune to
    /// floating-point underflow of the likelihood itself).
    fn dataset_possible(&self, point: &Self::Point, dataset_index: usize) -> bool;

    /// Loss `d(truth : estimate)` in nats; may be `+inf`.
    fn loss(&self, truth: &Self::Point, estimate: &Self::Point) -> f64;

    fn self_term(&self, truth: &Self::Point) -> f64;

    fn features(&self, truth: &Self::Point) -> [f64; FEATURE_WIDTH];

    /// `None` marks a singular estimate (rank-deficient or unphysical):
    /// risk sums must then call `loss` directly.
    fn cross_coeffs(&self, estimate: &Self::Point) -> Option<[f64; FEATURE_WIDTH]>;

    /// Convex combination with nonnegative (unnormalized) weights; the
    /// posterior-mean workhorse. Weights must not all vanish.
    fn mean_point(&self, points: &[Self::Point], weights: &[f64]) -> Self::Point;

    /// Rebuild a point from accumulated weighted features (feature 0 is the
    /// total weight). The posterior-mean inner loop accumulates features
    /// row-by-row over the likelihood matrix and reconstructs points here.
    fn point_from_mean_features(&self, acc: &[f64; FEATURE_WIDTH]) -> Self::Point;

    /// Draw from the uniform reference measure over the state space.
    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Self::Point;

    /// Gaussian jitter of scale `sigma`, projected back into the state space.
    fn perturb(&self, center: &Self::Point, sigma: f64, rng: &mut ChaCha8Rng) -> Self::Point;

    /// Deterministic coordinate stencil around `center` (one step each way
    /// along every coordinate, projected into the state space).
    fn stencil(&self, center: &Self::Point, step: f64) -> Vec<Self::Point>;

    fn search_grid(&self, cfg: &SearchConfig) -> Vec<Self::Point>;

    /// Local coordinate ascent of `f` from `start`, staying in the state
    /// space. Returns the refined point and its value.
    fn refine<F: Fn(&Self::Point) -> f64>(
        &self,
        f: F,
        start: &Self::Point,
        cfg: &SearchConfig,
    ) -> (Self::Point, f64);

    fn distance(&self, a: &Self::Point, b: &Self::Point) -> f64;
}

/// A table of estimates with precomputed loss coefficients, ready for
/// repeated exact risk sums.
pub struct PreparedTable<P> {
    pub entries: Vec<P>,
    /// Per-dataset cross coefficients; `[NaN; 4]` marks singular entries.
    cross: Vec<[f64; FEATURE_WIDTH]>,
    /// Indices of singular entries (handled by direct loss evaluation).
    singular: Vec<usize>,
}

pub fn prepare_table<M: StatModel>(model: &M, entries: Vec<M::Point>) -> PreparedTable<M::Point> {
    assert_eq!(entries.len(), model.dataset_count());
    let mut cross = Vec::with_capacity(entries.len());
    let mut singular = Vec::new();
    for (idx, e) in entries.iter().enumerate() {
        match model.cross_coeffs(e) {
            Some(c) => cross.push(c),
            None => {
                cross.push([f64::NAN; FEATURE_WIDTH]);
                singular.push(idx);
            }
        }
    }
    PreparedTable {
        entries,
        cross,
        singular,
    }
}

/// Exact pointwise risk `sum_D Pr(D|truth) d(truth : entry(D))`.
///
/// Returns `+inf` as soon as a dataset that is possible under `truth` maps
/// to an estimate whose support excludes `truth`'s. `scratch` is a reusable
/// likelihood buffer (resized as needed).
pub fn pointwise_risk_prepared<M: StatModel>(
    model: &M,
    table: &PreparedTable<M::Point>,
    truth: &M::Point,
    scratch: &mut Vec<f64>,
) -> f64 {
    let n = model.dataset_count();
    scratch.resize(n, 0.0);
    model.likelihoods(truth, scratch);

    // Singular entries first: they decide between +inf and a finite
    // correction, independent of likelihood underflow.
    let mut singular_part = 0.0;
    for &idx in &table.singular {
        if !model.dataset_possible(truth, idx) {
            continue;
        }
        let l = model.loss(truth, &table.entries[idx]);
        if l.is_infinite() {
            return f64::INFINITY;
        }
        singular_part += scratch[idx] * l;
    }

    let self_term = model.self_term(truth);
    let feats = model.features(truth);
    let lik = &scratch[..];
    let cross = &table.cross[..];
    let regular = chunked_sum(n, |d| {
        let c = &cross[d];
        if c[0].is_nan() {
            0.0
        } else {
            let dotp = c[0] * feats[0] + c[1] * feats[1] + c[2] * feats[2] + c[3] * feats[3];
            lik[d] * (self_term - dotp)
        }
    });
    regular + singular_part
}

/// Two-phase maximum-risk search: dense grid, then coordinate ascent from
/// the best grid points. Deterministic (ties break toward the lower index).
pub fn max_risk_prepared<M: StatModel>(
    model: &M,
    table: &PreparedTable<M::Point>,
    cfg: &SearchConfig,
) -> (f64, M::Point) {
    let grid = model.search_grid(cfg);
    let values: Vec<f64> = grid
        .par_chunks(64)
        .map_init(Vec::new, |scratch, chunk| {
            chunk
                .iter()
                .map(|p| pointwise_risk_prepared(model, table, p, scratch))
                .collect::<Vec<f64>>()
        })
        .flatten()
        .collect();

    for (i, v) in values.iter().enumerate() {
        if v.is_infinite() {
            return (f64::INFINITY, grid[i].clone());
        }
    }

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));

    let scratch = std::cell::RefCell::new(Vec::new());
    let mut best_value = f64::NEG_INFINITY;
    let mut best_point = grid[order[0]].clone();
    for &idx in order.iter().take(cfg.refine_top.min(order.len())) {
        let (point, value) = model.refine(
            |p| pointwise_risk_prepared(model, table, p, &mut *scratch.borrow_mut()),
            &grid[idx],
            cfg,
        );
        if value > best_value {
            best_value = value;
            best_point = point;
        }
        if best_value.is_infinite() {
            break;
        }
    }
    (best_value, best_point)
}

/// The quantum tomography model: points are raw Bloch vectors so that
/// unphysical table entries (linear inversion) are representable; a truth
/// point is always physical.
pub struct QuantumModel<'a> {
    design: &'a ExperimentDesign,
}

impl<'a> QuantumModel<'a> {
    pub fn new(design: &'a ExperimentDesign) -> Self {
        Self { design }
    }

    pub fn design(&self) -> &ExperimentDesign {
        self.design
    }

    fn dim(&self) -> usize {
        self.design.kind().dim()
    }
}

/// Posterior means are floored just inside the boundary: an exact convex
/// combination can saturate to norm 1 in f64 when one weight dominates by
/// hundreds of orders of magnitude, which would turn a vanishing risk
/// contribution into a spurious infinity.
pub(crate) const MEAN_NORM_FLOOR: f64 = 1e-12;

impl StatModel for QuantumModel<'_> {
    type Point = Vec3;

    fn dataset_count(&self) -> usize {
        self.design
            .dataset_count()
            .expect("design dataset count under cap")
    }

    fn likelihoods(&self, point: &Vec3, out: &mut [f64]) {
        let rows = self.design.pmf_rows(point);
        let shots = self.design.shots();
        let bases = rows.len();
        // Mixed-radix walk in lexicographic order (last basis fastest).
        let mut counts = vec![0u32; bases];
        for slot in out.iter_mut() {
            let mut p = 1.0;
            for (b, row) in rows.iter().enumerate() {
                p *= row[counts[b] as usize];
            }
            *slot = p;
            for b in (0..bases).rev() {
                if counts[b] < shots[b] {
                    counts[b] += 1;
                    break;
                }
                counts[b] = 0;
            }
        }
    }

    fn dataset_possible(&self, point: &Vec3, dataset_index: usize) -> bool {
        let ds = self.design.dataset_at(dataset_index);
        self.design.dataset_possible(&ds.counts, point)
    }

    fn loss(&self, truth: &Vec3, estimate: &Vec3) -> f64 {
        qstate::relative_entropy_vec(truth, estimate)
    }

    fn self_term(&self, truth: &Vec3) -> f64 {
        qstate::tr_rho_log_rho(vec3::norm(truth))
    }

    fn features(&self, truth: &Vec3) -> [f64; FEATURE_WIDTH] {
        [1.0, truth[0], truth[1], truth[2]]
    }

    fn cross_coeffs(&self, estimate: &Vec3) -> Option<[f64; FEATURE_WIDTH]> {
        let b = vec3::norm(estimate);
        if b > 1.0 + EPS_PHYS || b >= 1.0 {
            return None;
        }
        let mu_plus = 0.5 * (1.0 + b);
        let mu_minus = 0.5 * (1.0 - b);
        let half_sum = 0.5 * (mu_plus.ln() + mu_minus.ln());
        if b == 0.0 {
            return Some([half_sum, 0.0, 0.0, 0.0]);
        }
        let half_diff_over_b = 0.5 * (mu_plus.ln() - mu_minus.ln()) / b;
        Some([
            half_sum,
            half_diff_over_b * estimate[0],
            half_diff_over_b * estimate[1],
            half_diff_over_b * estimate[2],
        ])
    }

    fn mean_point(&self, points: &[Vec3], weights: &[f64]) -> Vec3 {
        let mut acc = [0.0f64; FEATURE_WIDTH];
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 {
                acc[0] += w;
                acc[1] += w * p[0];
                acc[2] += w * p[1];
                acc[3] += w * p[2];
            }
        }
        self.point_from_mean_features(&acc)
    }

    fn point_from_mean_features(&self, acc: &[f64; FEATURE_WIDTH]) -> Vec3 {
        debug_assert!(acc[0] > 0.0);
        let mut mean = vec3::scale(&[acc[1], acc[2], acc[3]], 1.0 / acc[0]);
        let n = vec3::norm(&mean);
        let cap = 1.0 - MEAN_NORM_FLOOR;
        if n > cap {
            mean = vec3::scale(&mean, cap / n);
        }
        mean
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        *qstate::sample_one(self.design.kind(), rng).vec3()
    }

    fn perturb(&self, center: &Vec3, sigma: f64, rng: &mut ChaCha8Rng) -> Vec3 {
        // Box-Muller normals, projected back into the ball.
        let dim = self.dim();
        let mut p = *center;
        let mut i = 0;
        while i < dim {
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = std::f64::consts::TAU * u2;
            p[i] += sigma * radius * angle.cos();
            i += 1;
            if i < dim {
                p[i] += sigma * radius * angle.sin();
                i += 1;
            }
        }
        let n = vec3::norm(&p);
        if n > 1.0 {
            p = vec3::scale(&p, 1.0 / n);
        }
        p
    }

    fn stencil(&self, center: &Vec3, step: f64) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let mut p = *center;
                p[axis] += sign * step;
                let n = vec3::norm(&p);
                if n > 1.0 {
                    p = vec3::scale(&p, 1.0 / n);
                }
                out.push(p);
            }
        }
        out
    }

    fn search_grid(&self, cfg: &SearchConfig) -> Vec<Vec3> {
        let mut grid = Vec::new();
        match self.design.kind() {
            crate::qstate::Kind::Rebit => {
                grid.push([0.0, 0.0, 0.0]);
                for ir in 1..=cfg.radial {
                    let t = ir as f64 / cfg.radial as f64;
                    for ia in 0..cfg.angular {
                        let theta = std::f64::consts::TAU * ia as f64 / cfg.angular as f64;
                        grid.push([t * theta.cos(), t * theta.sin(), 0.0]);
                    }
                }
            }
            crate::qstate::Kind::Qubit => {
                grid.push([0.0, 0.0, 0.0]);
                let golden_angle = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                let dirs: Vec<Vec3> = (0..cfg.sphere_points)
                    .map(|k| {
                        let z = 1.0 - 2.0 * (k as f64 + 0.5) / cfg.sphere_points as f64;
                        let s = (1.0 - z * z).max(0.0).sqrt();
                        let phi = golden_angle * k as f64;
                        [s * phi.cos(), s * phi.sin(), z]
                    })
                    .collect();
                let shells = cfg.radial.min(100).max(1);
                for ir in 1..=shells {
                    let t = ir as f64 / shells as f64;
                    for d in &dirs {
                        grid.push(vec3::scale(d, t));
                    }
                }
            }
        }
        grid
    }

    fn refine<F: Fn(&Vec3) -> f64>(
        &self,
        f: F,
        start: &Vec3,
        cfg: &SearchConfig,
    ) -> (Vec3, f64) {
        let dim = self.dim();
        let mut point = *start;
        let mut value = f(&point);
        for _ in 0..cfg.refine_rounds {
            let before = value;
            for axis in 0..dim {
                // Admissible segment through `point` along coordinate `axis`.
                let others: f64 = (0..3)
                    .filter(|&i| i != axis)
                    .map(|i| point[i] * point[i])
                    .sum();
                let span = (1.0 - others).max(0.0).sqrt();
                let (t, ft) = golden_max(-span, span, 1e-10, |t| {
                    let mut cand = point;
                    cand[axis] = t;
                    f(&cand)
                });
                if ft > value {
                    point[axis] = t;
                    value = ft;
                }
            }
            if value - before < 1e-13 {
                break;
            }
        }
        (point, value)
    }

    fn distance(&self, a: &Vec3, b: &Vec3) -> f64 {
        vec3::dist(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Dataset;
    use crate::qstate::BlochState;

    #[test]
    fn likelihood_matrix_matches_scalar_path() {
        let design = ExperimentDesign::rebit_default(5);
        let model = QuantumModel::new(&design);
        let rho = BlochState::rebit(0.4, -0.3).unwrap();
        let mut out = vec![0.0; model.dataset_count()];
        model.likelihoods(rho.vec3(), &mut out);
        for (idx, &lik) in out.iter().enumerate() {
            let ds = design.dataset_at(idx);
            let reference = design.likelihood(&ds, &rho).unwrap();
            assert!((lik - reference).abs() < 1e-14, "dataset {idx}");
        }
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prepared_risk_matches_direct_sum() {
        let design = ExperimentDesign::rebit_default(6);
        let model = QuantumModel::new(&design);
        // A slightly off-center constant estimator.
        let sigma = BlochState::rebit(0.2, 0.1).unwrap();
        let entries = vec![*sigma.vec3(); model.dataset_count()];
        let table = prepare_table(&model, entries);
        let rho = BlochState::rebit(-0.5, 0.3).unwrap();
        let mut scratch = Vec::new();
        let fast = pointwise_risk_prepared(&model, &table, rho.vec3(), &mut scratch);

        let mut direct = 0.0;
        for ds in design.enumerate_datasets().unwrap() {
            let lik = design.likelihood(&ds, &rho).unwrap();
            direct += lik * crate::qstate::relative_entropy(&rho, &sigma).unwrap();
        }
        assert!((fast - direct).abs() < 1e-12);
    }

    #[test]
    fn singular_entries_give_infinite_risk_only_when_reachable() {
        let design = ExperimentDesign::rebit_default(2);
        let model = QuantumModel::new(&design);
        // Map every dataset to the +X pure state.
        let entries = vec![[1.0, 0.0, 0.0]; model.dataset_count()];
        let table = prepare_table(&model, entries);
        let mut scratch = Vec::new();

        let mixed = BlochState::rebit(0.3, 0.0).unwrap();
        assert!(pointwise_risk_prepared(&model, &table, mixed.vec3(), &mut scratch)
            .is_infinite());

        // The +X pure state itself only reaches datasets with n_x = M, and
        // the estimate there matches it exactly: risk 0.
        let pure = BlochState::rebit(1.0, 0.0).unwrap();
        let risk = pointwise_risk_prepared(&model, &table, pure.vec3(), &mut scratch);
        assert!(risk.abs() < 1e-12, "risk {risk}");
    }

    #[test]
    fn max_risk_of_constant_mixed_estimator() {
        let design = ExperimentDesign::rebit_default(2);
        let model = QuantumModel::new(&design);
        let entries = vec![[0.0, 0.0, 0.0]; model.dataset_count()];
        let table = prepare_table(&model, entries);
        let (value, argmax) =
            max_risk_prepared(&model, &table, &SearchConfig::default());
        assert!((value - std::f64::consts::LN_2).abs() < 1e-9);
        assert!((vec3::norm(&argmax) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn qubit_grid_stays_in_ball() {
        let design = ExperimentDesign::qubit_default(2);
        let model = QuantumModel::new(&design);
        let grid = model.search_grid(&SearchConfig::default());
        assert!(grid.iter().all(|p| vec3::norm(p) <= 1.0 + 1e-12));
        assert!(grid.iter().any(|p| vec3::norm(p) > 0.999));
    }

    #[test]
    fn dataset_possibility_tracks_support() {
        let design = ExperimentDesign::rebit_default(3);
        let model = QuantumModel::new(&design);
        let pure = [1.0, 0.0, 0.0];
        let idx_bad = design
            .dataset_index(&Dataset::new(vec![1, 2]))
            .unwrap();
        let idx_ok = design
            .dataset_index(&Dataset::new(vec![3, 2]))
            .unwrap();
        assert!(!model.dataset_possible(&pure, idx_bad));
        assert!(model.dataset_possible(&pure, idx_ok));
        let mixed = [0.0, 0.0, 0.0];
        assert!(model.dataset_possible(&mixed, idx_bad));
    }
}
