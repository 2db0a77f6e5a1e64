//! The estimator zoo: linear inversion, maximum likelihood, hedged maximum
//! likelihood, Bayesian mean, and dense dataset-to-state tables used to
//! represent minimax solutions.

use rayon::prelude::*;
use thiserror::Error;

use crate::experiment::{Dataset, DesignError, ExperimentDesign};
use crate::lfp::DiscretePrior;
use crate::numeric::solve_spd_small;
use crate::qstate::{BlochState, Estimate, Kind, UnphysicalPoint};
use crate::vec3::{self, Vec3};

/// Convergence tolerance on the log objective of the MLE/HML inner solver.
const OBJ_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERS: usize = 400;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("all prior supports have zero likelihood on this dataset")]
    ZeroEvidence,
    #[error("table must have {expected} entries, got {got}")]
    TableShape { expected: usize, got: usize },
    #[error("table entry {index} is unphysical but the table is not flagged allow_unphysical")]
    UnphysicalEntry { index: usize },
    #[error("entry kind does not match design kind")]
    EntryKindMismatch,
}

/// Linear inversion: equate each measured probability to its observed
/// frequency and solve for the Bloch vector (least squares for general axis
/// sets; exact per-axis `2 n/M - 1` for the orthonormal defaults). The
/// result may lie outside the physical set.
pub fn linear_inversion(design: &ExperimentDesign, dataset: &Dataset) -> Estimate {
    let r = linear_inversion_vec(design, dataset);
    match BlochState::new(design.kind(), &r[..design.kind().dim()]) {
        Ok(state) => Estimate::Physical(state),
        Err(_) => Estimate::Unphysical(UnphysicalPoint {
            kind: design.kind(),
            r,
        }),
    }
}

fn linear_inversion_vec(design: &ExperimentDesign, dataset: &Dataset) -> Vec3 {
    let dim = design.kind().dim();
    // Normal equations sum_b (a_b a_b^T) r = sum_b a_b t_b with t_b = 2 n_b/M_b - 1.
    let mut g = [[0.0f64; 3]; 3];
    let mut y = [0.0f64; 3];
    for (b, axis) in design.axes().iter().enumerate() {
        let a = axis.vec();
        let t = 2.0 * dataset.counts[b] as f64 / design.shots()[b] as f64 - 1.0;
        for i in 0..dim {
            y[i] += a[i] * t;
            for j in 0..dim {
                g[i][j] += a[i] * a[j];
            }
        }
    }
    solve_spd_small(&g, &y, dim).unwrap_or([0.0; 3])
}

/// Log objective for the constrained likelihood maximizers: the exact data
/// log-likelihood plus `beta * log det(rho)` (`beta = 0` recovers plain MLE).
struct HedgedObjective<'a> {
    design: &'a ExperimentDesign,
    counts: &'a [u32],
    beta: f64,
}

impl HedgedObjective<'_> {
    fn value(&self, r: &Vec3) -> f64 {
        let mut f = 0.0;
        for (b, axis) in self.design.axes().iter().enumerate() {
            let q = 0.5 * (1.0 + vec3::dot(axis.vec(), r));
            let n = self.counts[b] as f64;
            let m = self.design.shots()[b] as f64;
            if n > 0.0 {
                if q <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                f += n * q.ln();
            }
            if n < m {
                if q >= 1.0 {
                    return f64::NEG_INFINITY;
                }
                f += (m - n) * (1.0 - q).ln();
            }
        }
        if self.beta > 0.0 {
            let det = 0.25 * (1.0 - vec3::dot(r, r));
            if det <= 0.0 {
                return f64::NEG_INFINITY;
            }
            f += self.beta * det.ln();
        }
        f
    }

    fn grad_hess(&self, r: &Vec3) -> (Vec3, [[f64; 3]; 3]) {
        let dim = self.design.kind().dim();
        let mut g = [0.0f64; 3];
        let mut h = [[0.0f64; 3]; 3];
        for (b, axis) in self.design.axes().iter().enumerate() {
            let a = axis.vec();
            let q = 0.5 * (1.0 + vec3::dot(a, r));
            let n = self.counts[b] as f64;
            let m = self.design.shots()[b] as f64;
            let mut first = 0.0;
            let mut second = 0.0;
            if n > 0.0 {
                first += n / q;
                second -= n / (q * q);
            }
            if n < m {
                first -= (m - n) / (1.0 - q);
                second -= (m - n) / ((1.0 - q) * (1.0 - q));
            }
            for i in 0..dim {
                g[i] += 0.5 * first * a[i];
                for j in 0..dim {
                    h[i][j] += 0.25 * second * a[i] * a[j];
                }
            }
        }
        if self.beta > 0.0 {
            let one_minus = 1.0 - vec3::dot(r, r);
            let c1 = -2.0 * self.beta / one_minus;
            let c2 = -4.0 * self.beta / (one_minus * one_minus);
            for i in 0..dim {
                g[i] += c1 * r[i];
                for j in 0..dim {
                    h[i][j] += c2 * r[i] * r[j];
                }
                h[i][i] += c1;
            }
        }
        (g, h)
    }
}

fn project_ball(r: &Vec3, radius: f64) -> Vec3 {
    let n = vec3::norm(r);
    if n > radius {
        vec3::scale(r, radius / n)
    } else {
        *r
    }
}

/// Projected Newton ascent on the (closed or open) unit ball, started from
/// the clipped linear-inversion point.
fn maximize_on_ball(obj: &HedgedObjective, start: Vec3, max_radius: f64) -> Vec3 {
    let dim = obj.design.kind().dim();
    let mut r = project_ball(&start, max_radius);
    let mut f = obj.value(&r);
    if f.is_infinite() {
        // Retreat toward the center until the objective is finite.
        let mut scale = 0.5;
        while f.is_infinite() && scale > 1e-12 {
            r = vec3::scale(&start, scale / vec3::norm(&start).max(1e-300));
            f = obj.value(&r);
            scale *= 0.5;
        }
        if f.is_infinite() {
            r = [0.0; 3];
            f = obj.value(&r);
        }
    }

    for _ in 0..MAX_NEWTON_ITERS {
        let (g, h) = obj.grad_hess(&r);
        // Newton direction from the negated (positive-definite) Hessian,
        // with a small ridge for safety.
        let mut neg_h = [[0.0f64; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                neg_h[i][j] = -h[i][j];
            }
            neg_h[i][i] += 1e-12;
        }
        let dir = solve_spd_small(&neg_h, &g, dim).unwrap_or(g);
        let mut improved = false;
        let mut t = 1.0;
        while t > 1e-14 {
            let cand = project_ball(&vec3::add(&r, &vec3::scale(&dir, t)), max_radius);
            let fc = obj.value(&cand);
            if fc > f {
                let gain = fc - f;
                r = cand;
                f = fc;
                improved = true;
                if gain < OBJ_TOL {
                    return r;
                }
                break;
            }
            t *= 0.5;
        }
        if !improved {
            // Steepest-ascent fallback.
            let mut t = 1.0;
            let gn = vec3::norm(&g).max(1e-300);
            while t > 1e-14 {
                let cand =
                    project_ball(&vec3::add(&r, &vec3::scale(&g, t / gn)), max_radius);
                let fc = obj.value(&cand);
                if fc > f + OBJ_TOL * 0.01 {
                    r = cand;
                    f = fc;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }
    r
}

/// One-dimensional angle polish on the boundary |r| = 1, for maximizers that
/// stick to the sphere/circle. Golden-section in each angle coordinate.
fn polish_on_boundary(obj: &HedgedObjective, r: Vec3) -> Vec3 {
    let unit = |theta: f64, phi: f64| -> Vec3 {
        match obj.design.kind() {
            Kind::Rebit => [theta.cos(), theta.sin(), 0.0],
            Kind::Qubit => [
                phi.sin() * theta.cos(),
                phi.sin() * theta.sin(),
                phi.cos(),
            ],
        }
    };
    let mut theta = r[1].atan2(r[0]);
    let mut phi = match obj.design.kind() {
        Kind::Rebit => std::f64::consts::FRAC_PI_2,
        Kind::Qubit => (r[2] / vec3::norm(&r).max(1e-300)).clamp(-1.0, 1.0).acos(),
    };
    for window in [0.4, 0.02, 1e-4] {
        let (t, _) = crate::numeric::golden_max(theta - window, theta + window, 1e-14, |t| {
            obj.value(&unit(t, phi))
        });
        theta = t;
        if obj.design.kind() == Kind::Qubit {
            let (p, _) = crate::numeric::golden_max(phi - window, phi + window, 1e-14, |p| {
                obj.value(&unit(theta, p))
            });
            phi = p;
        }
    }
    unit(theta, phi)
}

/// Maximum-likelihood estimate. If the linear-inversion point is physical
/// and matches the observed frequencies exactly it is returned as-is;
/// otherwise the maximizer is found numerically (it then lies on the
/// boundary for the orthonormal default designs).
pub fn mle(design: &ExperimentDesign, dataset: &Dataset) -> BlochState {
    let li = linear_inversion_vec(design, dataset);
    if vec3::norm(&li) <= 1.0 {
        let consistent = design.axes().iter().enumerate().all(|(b, axis)| {
            let t = 2.0 * dataset.counts[b] as f64 / design.shots()[b] as f64 - 1.0;
            (vec3::dot(axis.vec(), &li) - t).abs() < 1e-12
        });
        if consistent {
            return BlochState::from_vec3_unchecked(design.kind(), li);
        }
    }
    let obj = HedgedObjective {
        design,
        counts: &dataset.counts,
        beta: 0.0,
    };
    let mut r = maximize_on_ball(&obj, li, 1.0);
    if vec3::norm(&r) > 1.0 - 1e-7 {
        let polished = polish_on_boundary(&obj, r);
        if obj.value(&polished) >= obj.value(&r) {
            r = polished;
        }
    }
    BlochState::from_vec3_unchecked(design.kind(), project_ball(&r, 1.0))
}

/// Hedged maximum likelihood: maximizes `det(rho)^beta * L(rho)`. The
/// estimate is always strictly interior.
pub fn hml(design: &ExperimentDesign, dataset: &Dataset, beta_hedge: f64) -> BlochState {
    assert!(beta_hedge > 0.0, "hedging parameter must be positive");
    let li = linear_inversion_vec(design, dataset);
    let start = project_ball(&li, 1.0 - 1e-3);
    let obj = HedgedObjective {
        design,
        counts: &dataset.counts,
        beta: beta_hedge,
    };
    let r = maximize_on_ball(&obj, start, 1.0 - 1e-12);
    BlochState::from_vec3_unchecked(design.kind(), r)
}

/// Posterior-mean estimate under a discrete prior. Evaluated in log space;
/// errors only when every support has exactly zero likelihood.
pub fn bayes_mean(
    prior: &DiscretePrior,
    design: &ExperimentDesign,
    dataset: &Dataset,
) -> Result<BlochState, EstimatorError> {
    let mut log_weights = Vec::with_capacity(prior.len());
    let mut max_lw = f64::NEG_INFINITY;
    for (state, w) in prior.iter() {
        let lw = if w > 0.0 {
            w.ln() + design.log_likelihood(dataset, state)?
        } else {
            f64::NEG_INFINITY
        };
        if lw > max_lw {
            max_lw = lw;
        }
        log_weights.push(lw);
    }
    if max_lw == f64::NEG_INFINITY {
        return Err(EstimatorError::ZeroEvidence);
    }
    let mut mean = [0.0f64; 3];
    let mut total = 0.0;
    for ((state, _), lw) in prior.iter().zip(&log_weights) {
        let u = (lw - max_lw).exp();
        if u > 0.0 {
            vec3::axpy(&mut mean, u, state.vec3());
            total += u;
        }
    }
    let mean = vec3::scale(&mean, 1.0 / total);
    Ok(BlochState::from_vec3_unchecked(design.kind(), mean))
}

/// A dense map from every dataset (by lexicographic index) to an estimate,
/// with provenance metadata. Entries are physical unless the table was
/// built from an estimator that can leave the state space (linear
/// inversion), in which case `allow_unphysical` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedEstimator {
    design: ExperimentDesign,
    entries: Vec<Vec3>,
    allow_unphysical: bool,
    provenance: String,
}

impl TabulatedEstimator {
    pub fn new(
        design: ExperimentDesign,
        entries: Vec<Estimate>,
        provenance: &str,
    ) -> Result<Self, EstimatorError> {
        let expected = design.dataset_count()?;
        if entries.len() != expected {
            return Err(EstimatorError::TableShape {
                expected,
                got: entries.len(),
            });
        }
        let mut raw = Vec::with_capacity(entries.len());
        let mut allow_unphysical = false;
        for e in &entries {
            if e.kind() != design.kind() {
                return Err(EstimatorError::EntryKindMismatch);
            }
            if matches!(e, Estimate::Unphysical(_)) {
                allow_unphysical = true;
            }
            raw.push(e.bloch());
        }
        Ok(Self {
            design,
            entries: raw,
            allow_unphysical,
            provenance: provenance.to_string(),
        })
    }

    pub(crate) fn from_raw_entries(
        design: ExperimentDesign,
        entries: Vec<Vec3>,
        allow_unphysical: bool,
        provenance: String,
    ) -> Result<Self, EstimatorError> {
        let expected = design.dataset_count()?;
        if entries.len() != expected {
            return Err(EstimatorError::TableShape {
                expected,
                got: entries.len(),
            });
        }
        if !allow_unphysical {
            for (i, r) in entries.iter().enumerate() {
                if vec3::norm(r) > 1.0 + crate::qstate::EPS_PHYS {
                    return Err(EstimatorError::UnphysicalEntry { index: i });
                }
            }
        }
        Ok(Self {
            design,
            entries,
            allow_unphysical,
            provenance,
        })
    }

    pub fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn allow_unphysical(&self) -> bool {
        self.allow_unphysical
    }

    pub fn entry(&self, index: usize) -> Estimate {
        let r = self.entries[index];
        match BlochState::new(self.design.kind(), &r[..self.design.kind().dim()]) {
            Ok(s) => Estimate::Physical(s),
            Err(_) => Estimate::Unphysical(UnphysicalPoint {
                kind: self.design.kind(),
                r,
            }),
        }
    }

    pub fn estimate_for(&self, dataset: &Dataset) -> Result<Estimate, DesignError> {
        Ok(self.entry(self.design.dataset_index(dataset)?))
    }

    pub(crate) fn raw_entries(&self) -> &[Vec3] {
        &self.entries
    }

    /// Smallest distance from any entry to the boundary, `min_D (1 - |r|)`.
    pub fn min_interior_margin(&self) -> f64 {
        self.entries
            .iter()
            .map(|r| 1.0 - vec3::norm(r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Tabulate the linear-inversion estimator.
    pub fn linear_inversion(design: &ExperimentDesign) -> Result<Self, EstimatorError> {
        tabulate(|d, ds| linear_inversion(d, ds), design, "linear inversion")
    }

    /// Tabulate the maximum-likelihood estimator.
    pub fn mle(design: &ExperimentDesign) -> Result<Self, EstimatorError> {
        tabulate(
            |d, ds| Estimate::Physical(mle(d, ds)),
            design,
            "maximum likelihood",
        )
    }

    /// Tabulate hedged maximum likelihood with hedging parameter `beta`.
    pub fn hml(design: &ExperimentDesign, beta_hedge: f64) -> Result<Self, EstimatorError> {
        tabulate(
            |d, ds| Estimate::Physical(hml(d, ds, beta_hedge)),
            design,
            &format!("hedged maximum likelihood (beta = {beta_hedge})"),
        )
    }

    /// Tabulate the posterior-mean estimator of a discrete prior. Datasets
    /// that are impossible under every support point fall back to the prior
    /// mean (they carry zero probability under the prior).
    pub fn bayes(
        design: &ExperimentDesign,
        prior: &DiscretePrior,
        provenance: &str,
    ) -> Result<Self, EstimatorError> {
        let fallback = prior.mean();
        tabulate(
            |d, ds| {
                Estimate::Physical(match bayes_mean(prior, d, ds) {
                    Ok(s) => s,
                    Err(_) => BlochState::from_vec3_unchecked(d.kind(), fallback),
                })
            },
            design,
            provenance,
        )
    }
}

/// Build a dense table by applying `estimator` to every dataset of the
/// design. Entries are independent, so the map runs in parallel; the result
/// is deterministic.
pub fn tabulate<F>(
    estimator: F,
    design: &ExperimentDesign,
    provenance: &str,
) -> Result<TabulatedEstimator, EstimatorError>
where
    F: Fn(&ExperimentDesign, &Dataset) -> Estimate + Sync,
{
    let total = design.dataset_count()?;
    let entries: Vec<Estimate> = (0..total)
        .into_par_iter()
        .map(|idx| estimator(design, &design.dataset_at(idx)))
        .collect();
    TabulatedEstimator::new(design.clone(), entries, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::Axis;

    fn rebit_dataset(nx: u32, ny: u32) -> Dataset {
        Dataset::new(vec![nx, ny])
    }

    /// Brute-force grid oracle over the disk (about 10^6 points).
    fn grid_oracle(design: &ExperimentDesign, dataset: &Dataset, beta: f64) -> Vec3 {
        let obj = HedgedObjective {
            design,
            counts: &dataset.counts,
            beta,
        };
        let mut best = ([0.0; 3], f64::NEG_INFINITY);
        for ir in 0..=1000 {
            let radius = ir as f64 / 1000.0;
            for ia in 0..1000 {
                let theta = std::f64::consts::TAU * ia as f64 / 1000.0;
                let r = [radius * theta.cos(), radius * theta.sin(), 0.0];
                let f = obj.value(&r);
                if f > best.1 {
                    best = (r, f);
                }
            }
        }
        best.0
    }

    #[test]
    fn linear_inversion_examples() {
        let d = ExperimentDesign::rebit_default(8);
        match linear_inversion(&d, &rebit_dataset(4, 4)) {
            Estimate::Physical(s) => assert!(s.radius() < 1e-14),
            _ => panic!("expected physical"),
        }
        match linear_inversion(&d, &rebit_dataset(8, 8)) {
            Estimate::Unphysical(u) => {
                assert!((vec3::norm(&u.r) - 2f64.sqrt()).abs() < 1e-12);
                assert!((u.r[0] - 1.0).abs() < 1e-12 && (u.r[1] - 1.0).abs() < 1e-12);
            }
            _ => panic!("expected unphysical"),
        }
        let q = ExperimentDesign::qubit_default(4);
        match linear_inversion(&q, &Dataset::new(vec![4, 2, 2])) {
            Estimate::Physical(s) => {
                let r = s.components();
                assert!((r[0] - 1.0).abs() < 1e-12 && r[1].abs() < 1e-12 && r[2].abs() < 1e-12);
            }
            _ => panic!("expected physical"),
        }
    }

    #[test]
    fn mle_interior_equals_linear_inversion() {
        let d = ExperimentDesign::rebit_default(8);
        let s = mle(&d, &rebit_dataset(6, 4));
        assert!((s.components()[0] - 0.5).abs() < 1e-15);
        assert!(s.components()[1].abs() < 1e-15);
    }

    #[test]
    fn mle_boundary_cases_match_grid_oracle() {
        let d = ExperimentDesign::rebit_default(8);

        let s = mle(&d, &rebit_dataset(8, 8));
        let oracle = grid_oracle(&d, &rebit_dataset(8, 8), 0.0);
        assert!(vec3::dist(s.vec3(), &oracle) < 1e-3, "{:?} vs {:?}", s, oracle);
        // (8,8) is symmetric in x/y, so the maximizer sits at 45 degrees.
        let invsqrt2 = 1.0 / 2f64.sqrt();
        assert!((s.components()[0] - invsqrt2).abs() < 1e-9);
        assert!((s.components()[1] - invsqrt2).abs() < 1e-9);

        let s = mle(&d, &rebit_dataset(8, 4));
        let oracle = grid_oracle(&d, &rebit_dataset(8, 4), 0.0);
        assert!(vec3::dist(s.vec3(), &oracle) < 1e-3);
        assert!((s.components()[0] - 1.0).abs() < 1e-9);
        assert!(s.components()[1].abs() < 1e-9);
    }

    #[test]
    fn hml_examples() {
        let d = ExperimentDesign::rebit_default(8);
        // Symmetric data pins the maximizer at the center for any beta.
        let s = hml(&d, &rebit_dataset(4, 4), 0.7);
        assert!(s.radius() < 1e-9);

        let s = hml(&d, &rebit_dataset(8, 8), 0.04);
        assert!(s.radius() < 1.0);
        let oracle = grid_oracle(&d, &rebit_dataset(8, 8), 0.04);
        assert!(vec3::dist(s.vec3(), &oracle) < 1e-3);

        // beta -> 0 approaches the MLE on datasets with interior MLE.
        let a = hml(&d, &rebit_dataset(6, 4), 1e-9);
        let b = mle(&d, &rebit_dataset(6, 4));
        assert!(vec3::dist(a.vec3(), b.vec3()) < 1e-6);
    }

    #[test]
    fn hml_is_strictly_interior() {
        let d = ExperimentDesign::rebit_default(8);
        let table = TabulatedEstimator::hml(&d, 0.04).unwrap();
        assert_eq!(table.len(), 81);
        assert!(table.min_interior_margin() > 0.0);
        assert!(!table.allow_unphysical());
    }

    #[test]
    fn mle_matches_li_whenever_li_physical() {
        let d = ExperimentDesign::rebit_default(8);
        for ds in d.enumerate_datasets().unwrap() {
            if let Estimate::Physical(li) = linear_inversion(&d, &ds) {
                let m = mle(&d, &ds);
                assert!(
                    vec3::dist(li.vec3(), m.vec3()) < 1e-9,
                    "dataset {:?}",
                    ds.counts
                );
            }
        }
    }

    #[test]
    fn bayes_mean_point_and_symmetric_priors() {
        let d = ExperimentDesign::rebit_default(8);
        let anchor = BlochState::rebit(0.3, -0.2).unwrap();
        let point = DiscretePrior::new(vec![anchor], vec![1.0]).unwrap();
        for ds in [rebit_dataset(0, 0), rebit_dataset(8, 3)] {
            let est = bayes_mean(&point, &d, &ds).unwrap();
            assert!(vec3::dist(est.vec3(), anchor.vec3()) < 1e-15);
        }

        let two = DiscretePrior::new(
            vec![
                BlochState::rebit(0.5, 0.0).unwrap(),
                BlochState::rebit(-0.5, 0.0).unwrap(),
            ],
            vec![0.5, 0.5],
        )
        .unwrap();
        // Equal x-counts give both supports equal likelihood: the posterior
        // mean is the midpoint.
        let est = bayes_mean(&two, &d, &rebit_dataset(4, 6)).unwrap();
        assert!(est.radius() < 1e-12);
    }

    #[test]
    fn bayes_mean_zero_evidence() {
        let d = ExperimentDesign::rebit_default(8);
        let pure_x = DiscretePrior::new(vec![BlochState::rebit(1.0, 0.0).unwrap()], vec![1.0])
            .unwrap();
        // n_x < M is impossible when the only support is the +X pure state.
        assert!(matches!(
            bayes_mean(&pure_x, &d, &rebit_dataset(3, 4)),
            Err(EstimatorError::ZeroEvidence)
        ));
    }

    #[test]
    fn tabulate_linear_inversion_m1() {
        let d = ExperimentDesign::rebit_default(1);
        let t = TabulatedEstimator::linear_inversion(&d).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.allow_unphysical());
        let expected = [[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
        for (idx, e) in expected.iter().enumerate() {
            let r = t.entry(idx).bloch();
            assert!((r[0] - e[0]).abs() < 1e-14 && (r[1] - e[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn tabulate_point_prior_is_constant() {
        let d = ExperimentDesign::rebit_default(4);
        let anchor = BlochState::rebit(0.1, 0.6).unwrap();
        let prior = DiscretePrior::new(vec![anchor], vec![1.0]).unwrap();
        let t = TabulatedEstimator::bayes(&d, &prior, "point prior").unwrap();
        for idx in 0..t.len() {
            assert!(vec3::dist(&t.entry(idx).bloch(), anchor.vec3()) < 1e-14);
        }
    }

    #[test]
    fn estimators_are_equivariant_under_design_symmetry() {
        let d = ExperimentDesign::rebit_default(8);
        let m = 8u32;
        // Generators of the dihedral symmetry: swap X/Y counts and flip the
        // sign of the X outcome. Linear inversion is exactly equivariant.
        for ds in d.enumerate_datasets().unwrap() {
            let (nx, ny) = (ds.counts[0], ds.counts[1]);
            let li = linear_inversion(&d, &ds).bloch();
            let li_s = linear_inversion(&d, &rebit_dataset(ny, nx)).bloch();
            let li_f = linear_inversion(&d, &rebit_dataset(m - nx, ny)).bloch();
            assert!((li[0] - li_s[1]).abs() < 1e-14 && (li[1] - li_s[0]).abs() < 1e-14);
            assert!((li[0] + li_f[0]).abs() < 1e-14 && (li[1] - li_f[1]).abs() < 1e-14);
        }

        // The numeric solvers are equivariant up to the plateau width of the
        // objective (the log-likelihood is flat to f64 resolution over about
        // 1e-8 in the components near a boundary maximum).
        for (nx, ny) in [(8, 6), (7, 0), (8, 1), (8, 8), (5, 2)] {
            let a = mle(&d, &rebit_dataset(nx, ny));
            let b = mle(&d, &rebit_dataset(ny, nx));
            assert!((a.components()[0] - b.components()[1]).abs() < 1e-7);
            assert!((a.components()[1] - b.components()[0]).abs() < 1e-7);
            let a = hml(&d, &rebit_dataset(nx, ny), 0.04);
            let b = hml(&d, &rebit_dataset(ny, nx), 0.04);
            assert!((a.components()[0] - b.components()[1]).abs() < 1e-7);
            assert!((a.components()[1] - b.components()[0]).abs() < 1e-7);

            let a = mle(&d, &rebit_dataset(m - nx, ny));
            let b = mle(&d, &rebit_dataset(nx, ny));
            assert!((a.components()[0] + b.components()[0]).abs() < 1e-7);
            assert!((a.components()[1] - b.components()[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn hml_rejects_nonpositive_beta() {
        let d = ExperimentDesign::rebit_default(2);
        let result = std::panic::catch_unwind(|| hml(&d, &rebit_dataset(1, 1), 0.0));
        assert!(result.is_err());
    }
}
