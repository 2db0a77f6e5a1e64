//! Measurement designs (Pauli bases and shot counts), dataset enumeration,
//! exact likelihoods, and the effective-noise / resolution quantities that
//! drive the noisy-coin reduction.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::qstate::{BlochState, Kind};
use crate::vec3::{self, Vec3};

/// Unit-vector tolerance for measurement axes.
const EPS_AXIS: f64 = 1e-12;

/// Hard cap on enumerable dataset counts.
pub const DEFAULT_DATASET_CAP: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("axis is not a unit vector (|a| = {0})")]
    NonUnitAxis(f64),
    #[error("rebit axes must lie in the measurement plane (z = 0)")]
    AxisOutOfPlane,
    #[error("design needs at least one basis")]
    NoBases,
    #[error("shots per basis must be positive")]
    ZeroShots,
    #[error("dataset count {required} exceeds cap {cap}")]
    CapExceeded { required: u128, cap: usize },
    #[error("dataset shape mismatch: expected {expected} counts, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("count {count} exceeds shots {shots} for basis {basis}")]
    CountOutOfRange { basis: usize, count: u32, shots: u32 },
    #[error("state kind {0:?} does not match design kind {1:?}")]
    KindMismatch(Kind, Kind),
}

/// A measurement axis: a unit Bloch vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis(Vec3);

impl Axis {
    pub const X: Axis = Axis([1.0, 0.0, 0.0]);
    pub const Y: Axis = Axis([0.0, 1.0, 0.0]);
    pub const Z: Axis = Axis([0.0, 0.0, 1.0]);

    pub fn new(v: Vec3) -> Result<Self, DesignError> {
        let n = vec3::norm(&v);
        if (n - 1.0).abs() > EPS_AXIS {
            return Err(DesignError::NonUnitAxis(n));
        }
        Ok(Axis(v))
    }

    /// Normalize a nonzero vector into an axis.
    pub fn from_direction(v: Vec3) -> Result<Self, DesignError> {
        let n = vec3::norm(&v);
        if n == 0.0 || !n.is_finite() {
            return Err(DesignError::NonUnitAxis(n));
        }
        Ok(Axis(vec3::scale(&v, 1.0 / n)))
    }

    /// In-plane axis at angle `theta` from X (rebit geometry).
    pub fn in_plane(theta: f64) -> Self {
        Axis([theta.cos(), theta.sin(), 0.0])
    }

    pub fn vec(&self) -> &Vec3 {
        &self.0
    }
}

/// Which Pauli bases are measured and how many shots each.
///
/// The defaults pin the standard allocations: rebit designs measure X and Y
/// with `M = N/2` shots each, qubit designs measure X, Y, Z with `M = N/3`
/// each. Arbitrary axis lists and unequal shot allocations are accepted so
/// trial-dependent noise models stay expressible.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentDesign {
    kind: Kind,
    axes: Vec<Axis>,
    shots: Vec<u32>,
    /// log C(M_b, n) per basis, precomputed at construction.
    log_binom: Vec<Vec<f64>>,
}

/// Outcome counts per measured basis (number of +1 results).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dataset {
    pub counts: Vec<u32>,
}

impl Dataset {
    pub fn new(counts: Vec<u32>) -> Self {
        Dataset { counts }
    }
}

fn log_binomial_row(m: u32) -> Vec<f64> {
    let mut row = Vec::with_capacity(m as usize + 1);
    let mut acc = 0.0f64;
    row.push(0.0);
    for k in 0..m {
        acc += ((m - k) as f64).ln() - ((k + 1) as f64).ln();
        row.push(acc);
    }
    row
}

impl ExperimentDesign {
    /// Rebit default: X and Y bases, `shots_per_basis` shots each (N = 2M).
    pub fn rebit_default(shots_per_basis: u32) -> Self {
        Self::new(Kind::Rebit, vec![Axis::X, Axis::Y], vec![shots_per_basis; 2])
            .expect("default rebit design is valid")
    }

    /// Qubit default: X, Y and Z bases, `shots_per_basis` shots each (N = 3M).
    pub fn qubit_default(shots_per_basis: u32) -> Self {
        Self::new(
            Kind::Qubit,
            vec![Axis::X, Axis::Y, Axis::Z],
            vec![shots_per_basis; 3],
        )
        .expect("default qubit design is valid")
    }

    pub fn new(kind: Kind, axes: Vec<Axis>, shots: Vec<u32>) -> Result<Self, DesignError> {
        if axes.is_empty() {
            return Err(DesignError::NoBases);
        }
        if shots.len() != axes.len() {
            return Err(DesignError::ShapeMismatch {
                expected: axes.len(),
                got: shots.len(),
            });
        }
        if shots.iter().any(|&m| m == 0) {
            return Err(DesignError::ZeroShots);
        }
        if kind == Kind::Rebit && axes.iter().any(|a| a.vec()[2].abs() > EPS_AXIS) {
            return Err(DesignError::AxisOutOfPlane);
        }
        let log_binom = shots.iter().map(|&m| log_binomial_row(m)).collect();
        Ok(Self {
            kind,
            axes,
            shots,
            log_binom,
        })
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn shots(&self) -> &[u32] {
        &self.shots
    }

    pub fn num_bases(&self) -> usize {
        self.axes.len()
    }

    /// Total number of samples N.
    pub fn total_shots(&self) -> u64 {
        self.shots.iter().map(|&m| m as u64).sum()
    }

    /// Uniform shots per basis, when the allocation is uniform.
    pub fn uniform_shots(&self) -> Option<u32> {
        let m = self.shots[0];
        self.shots.iter().all(|&s| s == m).then_some(m)
    }

    /// Number of distinct datasets, `prod_b (M_b + 1)`, checked against the cap.
    pub fn dataset_count(&self) -> Result<usize, DesignError> {
        let mut required: u128 = 1;
        for &m in &self.shots {
            required = required.saturating_mul(m as u128 + 1);
            if required > DEFAULT_DATASET_CAP as u128 {
                return Err(DesignError::CapExceeded {
                    required,
                    cap: DEFAULT_DATASET_CAP,
                });
            }
        }
        Ok(required as usize)
    }

    /// Lexicographic index of a dataset (last basis varies fastest).
    pub fn dataset_index(&self, dataset: &Dataset) -> Result<usize, DesignError> {
        self.check_dataset(dataset)?;
        let mut idx = 0usize;
        for (b, &n) in dataset.counts.iter().enumerate() {
            idx = idx * (self.shots[b] as usize + 1) + n as usize;
        }
        Ok(idx)
    }

    /// Dataset at a lexicographic index.
    pub fn dataset_at(&self, mut index: usize) -> Dataset {
        let mut counts = vec![0u32; self.num_bases()];
        for b in (0..self.num_bases()).rev() {
            let base = self.shots[b] as usize + 1;
            counts[b] = (index % base) as u32;
            index /= base;
        }
        Dataset::new(counts)
    }

    pub fn check_dataset(&self, dataset: &Dataset) -> Result<(), DesignError> {
        if dataset.counts.len() != self.num_bases() {
            return Err(DesignError::ShapeMismatch {
                expected: self.num_bases(),
                got: dataset.counts.len(),
            });
        }
        for (b, (&n, &m)) in dataset.counts.iter().zip(&self.shots).enumerate() {
            if n > m {
                return Err(DesignError::CountOutOfRange {
                    basis: b,
                    count: n,
                    shots: m,
                });
            }
        }
        Ok(())
    }

    fn check_state(&self, rho: &BlochState) -> Result<(), DesignError> {
        if rho.kind() != self.kind {
            return Err(DesignError::KindMismatch(rho.kind(), self.kind));
        }
        Ok(())
    }

    /// Born probability of the +1 outcome when measuring `axis` on `rho`:
    /// `q = (1 + a . r)/2`.
    pub fn outcome_probability(&self, axis: &Axis, rho: &BlochState) -> Result<f64, DesignError> {
        self.check_state(rho)?;
        Ok(born_probability(axis, rho))
    }

    /// Exact log-likelihood of a dataset: sum over bases of the binomial
    /// log-pmf (binomial coefficients included, so likelihoods sum to 1
    /// over all datasets).
    pub fn log_likelihood(&self, dataset: &Dataset, rho: &BlochState) -> Result<f64, DesignError> {
        self.check_state(rho)?;
        self.check_dataset(dataset)?;
        let mut ll = 0.0;
        for (b, &n) in dataset.counts.iter().enumerate() {
            let q = born_probability(&self.axes[b], rho);
            ll += self.log_binom[b][n as usize] + log_pmf_terms(q, n, self.shots[b]);
        }
        Ok(ll)
    }

    /// Likelihood in [0, 1]; evaluated in log-space internally.
    pub fn likelihood(&self, dataset: &Dataset, rho: &BlochState) -> Result<f64, DesignError> {
        Ok(self.log_likelihood(dataset, rho)?.exp())
    }

    /// Per-basis binomial pmf vectors for a fixed state, indexed `[b][n]`.
    /// The building block for exact sums over all datasets.
    pub(crate) fn pmf_rows(&self, r: &Vec3) -> Vec<Vec<f64>> {
        self.axes
            .iter()
            .enumerate()
            .map(|(b, axis)| {
                let q = 0.5 * (1.0 + vec3::dot(axis.vec(), r));
                let m = self.shots[b];
                (0..=m)
                    .map(|n| (self.log_binom[b][n as usize] + log_pmf_terms(q, n, m)).exp())
                    .collect()
            })
            .collect()
    }

    /// Iterate every dataset exactly once in lexicographic order.
    pub fn enumerate_datasets(&self) -> Result<DatasetIter, DesignError> {
        let total = self.dataset_count()?;
        Ok(DatasetIter {
            design: self.clone(),
            next: 0,
            total,
        })
    }

    /// True when `Pr(dataset | rho) > 0` in exact arithmetic. Needed by risk
    /// sums: a support violation only matters on datasets with nonzero
    /// probability, and tiny likelihoods must not be confused with zeros.
    pub(crate) fn dataset_possible(&self, counts: &[u32], r: &Vec3) -> bool {
        for (b, &n) in counts.iter().enumerate() {
            let q = 0.5 * (1.0 + vec3::dot(self.axes[b].vec(), r));
            if q <= 0.0 && n > 0 {
                return false;
            }
            if q >= 1.0 && n < self.shots[b] {
                return false;
            }
        }
        true
    }
}

#[inline]
pub(crate) fn born_probability(axis: &Axis, rho: &BlochState) -> f64 {
    (0.5 * (1.0 + vec3::dot(axis.vec(), rho.vec3()))).clamp(0.0, 1.0)
}

/// `n log q + (M - n) log(1 - q)` with the `0 log 0 = 0` convention.
#[inline]
fn log_pmf_terms(q: f64, n: u32, m: u32) -> f64 {
    let q = q.clamp(0.0, 1.0);
    let mut ll = 0.0;
    if n > 0 {
        if q == 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += n as f64 * q.ln();
    }
    if n < m {
        if q == 1.0 {
            return f64::NEG_INFINITY;
        }
        ll += (m - n) as f64 * (1.0 - q).ln();
    }
    ll
}

/// Cloneable iterator over all datasets of a design; clones are independent.
#[derive(Debug, Clone)]
pub struct DatasetIter {
    design: ExperimentDesign,
    next: usize,
    total: usize,
}

impl Iterator for DatasetIter {
    type Item = Dataset;

    fn next(&mut self) -> Option<Dataset> {
        if self.next >= self.total {
            return None;
        }
        let d = self.design.dataset_at(self.next);
        self.next += 1;
        Some(d)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

impl ExactSizeIterator for DatasetIter {}

/// Effective noise of a single shot: the probability that measuring
/// `basis_axis` on the principal eigenstate of `eigenbasis_axis` records the
/// minority outcome, `alpha = (1 - a . e)/2`.
pub fn effective_noise(basis_axis: &Axis, eigenbasis_axis: &Axis) -> f64 {
    (0.5 * (1.0 - vec3::dot(basis_axis.vec(), eigenbasis_axis.vec()))).clamp(0.0, 1.0)
}

/// Per-sample resolution `(1 - 2a)^2 / (a (1 - a))`. Infinite at `a ∈ {0, 1}`
/// (noiseless shots), zero at `a = 1/2` (pure-noise shots).
pub fn resolution(alpha: f64) -> f64 {
    let denominator = alpha * (1.0 - alpha);
    if denominator <= 0.0 {
        return f64::INFINITY;
    }
    let num = 1.0 - 2.0 * alpha;
    num * num / denominator
}

/// Shot-averaged resolution of a design against a candidate eigenbasis.
/// Propagates `+inf` when any measured basis is noiseless for that axis.
pub fn mean_resolution(design: &ExperimentDesign, eigenbasis_axis: &Axis) -> f64 {
    let mut total = 0.0;
    for (axis, &m) in design.axes().iter().zip(design.shots()) {
        let beta = resolution(effective_noise(axis, eigenbasis_axis));
        if beta.is_infinite() {
            return f64::INFINITY;
        }
        total += m as f64 * beta;
    }
    total / design.total_shots() as f64
}

#[derive(Serialize, Deserialize)]
struct DesignRepr {
    kind: Kind,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    shots: Option<Vec<u32>>,
    axes: Vec<Vec<f64>>,
}

impl Serialize for ExperimentDesign {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let uniform = self.uniform_shots();
        DesignRepr {
            kind: self.kind,
            m: uniform,
            shots: if uniform.is_some() {
                None
            } else {
                Some(self.shots.clone())
            },
            axes: self
                .axes
                .iter()
                .map(|a| a.vec()[..self.kind.dim()].to_vec())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExperimentDesign {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = DesignRepr::deserialize(deserializer)?;
        let dim = repr.kind.dim();
        let mut axes = Vec::with_capacity(repr.axes.len());
        for a in &repr.axes {
            if a.len() != dim {
                return Err(D::Error::custom(format!(
                    "axis must have {dim} components, got {}",
                    a.len()
                )));
            }
            let mut v = [0.0; 3];
            v[..a.len()].copy_from_slice(a);
            if !v.iter().all(|x| x.is_finite()) {
                return Err(D::Error::custom("axis component is not finite"));
            }
            axes.push(Axis::new(v).map_err(D::Error::custom)?);
        }
        let shots = match (repr.m, repr.shots) {
            (Some(m), None) => vec![m; axes.len()],
            (None, Some(s)) => s,
            (Some(_), Some(_)) => {
                return Err(D::Error::custom("give either M or shots, not both"))
            }
            (None, None) => return Err(D::Error::custom("missing M or shots")),
        };
        let design = ExperimentDesign::new(repr.kind, axes, shots).map_err(D::Error::custom)?;
        design.dataset_count().map_err(D::Error::custom)?;
        Ok(design)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn born_rule_examples() {
        let d = ExperimentDesign::rebit_default(8);
        let pure_x = BlochState::rebit(1.0, 0.0).unwrap();
        let mixed = BlochState::maximally_mixed(Kind::Rebit);
        let tilted = BlochState::rebit(0.6, 0.8).unwrap();
        assert!((d.outcome_probability(&Axis::X, &pure_x).unwrap() - 1.0).abs() < 1e-15);
        assert!((d.outcome_probability(&Axis::X, &mixed).unwrap() - 0.5).abs() < 1e-15);
        // 2x2 matrix oracle: Tr(Pi rho) with Pi = (1 + sigma_x)/2 equals (1 + x)/2.
        assert!((d.outcome_probability(&Axis::X, &tilted).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn likelihood_hand_computation() {
        let d = ExperimentDesign::rebit_default(2);
        let mixed = BlochState::maximally_mixed(Kind::Rebit);
        let ds = Dataset::new(vec![1, 1]);
        // C(2,1)^2 (1/2)^4 = 4/16.
        assert!((d.likelihood(&ds, &mixed).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn impossible_dataset_has_zero_likelihood() {
        let d = ExperimentDesign::rebit_default(8);
        let pure_x = BlochState::rebit(1.0, 0.0).unwrap();
        let ds = Dataset::new(vec![5, 4]);
        assert_eq!(d.likelihood(&ds, &pure_x).unwrap(), 0.0);
        assert!(!d.dataset_possible(&ds.counts, pure_x.vec3()));
        let full = Dataset::new(vec![8, 4]);
        assert!(d.dataset_possible(&full.counts, pure_x.vec3()));
    }

    #[test]
    fn likelihood_normalization() {
        let d = ExperimentDesign::rebit_default(8);
        let rho = BlochState::rebit(0.3, -0.6).unwrap();
        let total: f64 = d
            .enumerate_datasets()
            .unwrap()
            .map(|ds| d.likelihood(&ds, &rho).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn enumeration_counts_and_order() {
        let d = ExperimentDesign::rebit_default(1);
        let all: Vec<Vec<u32>> = d
            .enumerate_datasets()
            .unwrap()
            .map(|ds| ds.counts)
            .collect();
        assert_eq!(all, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        assert_eq!(
            ExperimentDesign::qubit_default(2)
                .enumerate_datasets()
                .unwrap()
                .count(),
            27
        );
        assert_eq!(
            ExperimentDesign::rebit_default(64)
                .enumerate_datasets()
                .unwrap()
                .count(),
            4225
        );
        // Index round trip.
        let d = ExperimentDesign::qubit_default(3);
        for idx in 0..d.dataset_count().unwrap() {
            assert_eq!(d.dataset_index(&d.dataset_at(idx)).unwrap(), idx);
        }
    }

    #[test]
    fn cap_is_enforced() {
        let d = ExperimentDesign::qubit_default(4000);
        assert!(matches!(
            d.dataset_count(),
            Err(DesignError::CapExceeded { .. })
        ));
    }

    #[test]
    fn effective_noise_paper_values() {
        assert_eq!(effective_noise(&Axis::X, &Axis::X), 0.0);
        let rebit_lf = Axis::in_plane(std::f64::consts::FRAC_PI_4);
        let a2 = effective_noise(&Axis::X, &rebit_lf);
        assert!((a2 - 0.5 * (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        let qubit_lf = Axis::from_direction([1.0, 1.0, 1.0]).unwrap();
        let a3 = effective_noise(&Axis::X, &qubit_lf);
        assert!((a3 - 0.5 * (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn resolution_values() {
        let a2 = 0.5 * (1.0 - 1.0 / 2f64.sqrt());
        let a3 = 0.5 * (1.0 - 1.0 / 3f64.sqrt());
        assert!((resolution(a2) - 4.0).abs() < 1e-12);
        assert!((resolution(a3) - 2.0).abs() < 1e-12);
        assert!(resolution(0.5).abs() < 1e-15);
        assert_eq!(resolution(0.0), f64::INFINITY);
        assert_eq!(resolution(1.0), f64::INFINITY);
    }

    #[test]
    fn mean_resolution_default_designs() {
        let rebit = ExperimentDesign::rebit_default(8);
        let lf2 = Axis::in_plane(std::f64::consts::FRAC_PI_4);
        assert!((mean_resolution(&rebit, &lf2) - 4.0).abs() < 1e-12);
        // Aligned with a measured basis: that basis is noiseless.
        assert_eq!(mean_resolution(&rebit, &Axis::X), f64::INFINITY);

        let qubit = ExperimentDesign::qubit_default(8);
        let lf3 = Axis::from_direction([1.0, 1.0, 1.0]).unwrap();
        assert!((mean_resolution(&qubit, &lf3) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_favorable_axis_minimizes_mean_resolution() {
        // Grid search over the sphere: the diagonal axis should minimize the
        // qubit default design's mean resolution.
        let qubit = ExperimentDesign::qubit_default(4);
        let lf3 = Axis::from_direction([1.0, 1.0, 1.0]).unwrap();
        let best = mean_resolution(&qubit, &lf3);
        let steps = 60;
        for i in 0..=steps {
            let z = -1.0 + 2.0 * i as f64 / steps as f64;
            for j in 0..(2 * steps) {
                let phi = std::f64::consts::TAU * j as f64 / (2 * steps) as f64;
                let s = (1.0f64 - z * z).max(0.0).sqrt();
                let axis = Axis::from_direction([s * phi.cos(), s * phi.sin(), z]).unwrap();
                assert!(mean_resolution(&qubit, &axis) >= best - 1e-9);
            }
        }
    }

    #[test]
    fn design_json_round_trip() {
        let d = ExperimentDesign::qubit_default(12);
        let text = serde_json::to_string(&d).unwrap();
        assert!(text.contains("\"M\":12"));
        let back: ExperimentDesign = serde_json::from_str(&text).unwrap();
        assert_eq!(d, back);

        let uneven = ExperimentDesign::new(
            Kind::Rebit,
            vec![Axis::X, Axis::Y],
            vec![3, 5],
        )
        .unwrap();
        let text = serde_json::to_string(&uneven).unwrap();
        let back: ExperimentDesign = serde_json::from_str(&text).unwrap();
        assert_eq!(uneven, back);

        assert!(serde_json::from_str::<ExperimentDesign>(
            r#"{"kind":"rebit","M":4,"axes":[[1.0,0.1]]}"#
        )
        .is_err());
    }
}
