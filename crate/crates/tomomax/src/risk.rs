//! Exact risk functionals: pointwise risk (the likelihood-weighted sum of
//! relative entropies over every dataset), Bayes risk, maximum risk over the
//! state space, and 1-D risk profiles.
//!
//! All sums are exact enumerations with compensated accumulation; infinite
//! risks propagate as `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::estimators::TabulatedEstimator;
use crate::experiment::{Axis, DesignError, ExperimentDesign};
use crate::io::ext_real;
use crate::lfp::DiscretePrior;
use crate::model::{
    max_risk_prepared, pointwise_risk_prepared, prepare_table, PreparedTable, QuantumModel,
    SearchConfig,
};
use crate::numeric::CompensatedSum;
use crate::qstate::BlochState;
use crate::vec3::{scale, Vec3};

/// A table with precomputed per-entry loss coefficients; build once, then
/// evaluate risks at many states.
pub struct RiskEvaluator<'a> {
    design: &'a ExperimentDesign,
    table: PreparedTable<Vec3>,
}

impl<'a> RiskEvaluator<'a> {
    pub fn new(estimator: &'a TabulatedEstimator) -> Self {
        let model = QuantumModel::new(estimator.design());
        let table = prepare_table(&model, estimator.raw_entries().to_vec());
        Self {
            design: estimator.design(),
            table,
        }
    }

    pub fn design(&self) -> &ExperimentDesign {
        self.design
    }

    fn check(&self, rho: &BlochState) -> Result<(), DesignError> {
        if rho.kind() != self.design.kind() {
            return Err(DesignError::KindMismatch(rho.kind(), self.design.kind()));
        }
        Ok(())
    }

    /// Exact pointwise risk at `rho`; `+inf` iff a dataset that `rho` can
    /// produce maps to an estimate whose support excludes `rho`'s.
    pub fn pointwise(&self, rho: &BlochState) -> Result<f64, DesignError> {
        self.check(rho)?;
        let model = QuantumModel::new(self.design);
        let mut scratch = Vec::new();
        Ok(pointwise_risk_prepared(
            &model,
            &self.table,
            rho.vec3(),
            &mut scratch,
        ))
    }

    /// Prior-weighted pointwise risk.
    pub fn bayes(&self, prior: &DiscretePrior) -> Result<f64, DesignError> {
        let model = QuantumModel::new(self.design);
        let mut scratch = Vec::new();
        let mut acc = CompensatedSum::new();
        for (state, w) in prior.iter() {
            self.check(state)?;
            if w == 0.0 {
                continue;
            }
            let r = pointwise_risk_prepared(&model, &self.table, state.vec3(), &mut scratch);
            if r.is_infinite() {
                return Ok(f64::INFINITY);
            }
            acc.add(w * r);
        }
        Ok(acc.value())
    }

    /// Two-phase maximum-risk search (dense grid + coordinate ascent).
    /// The returned value is a certified lower bound on the true maximum.
    pub fn max(&self, config: &SearchConfig) -> (f64, BlochState) {
        let model = QuantumModel::new(self.design);
        let (value, point) = max_risk_prepared(&model, &self.table, config);
        (
            value,
            BlochState::from_vec3_unchecked(self.design.kind(), point),
        )
    }

    /// Risk along the ray `t * axis` for `t` on a uniform grid over [0, 1].
    pub fn profile(&self, axis: &Axis, num_points: usize) -> Vec<(f64, f64)> {
        let model = QuantumModel::new(self.design);
        let mut scratch = Vec::new();
        (0..num_points)
            .map(|i| {
                let t = if num_points == 1 {
                    0.0
                } else {
                    i as f64 / (num_points - 1) as f64
                };
                let point = scale(axis.vec(), t);
                let risk =
                    pointwise_risk_prepared(&model, &self.table, &point, &mut scratch);
                (t, risk)
            })
            .collect()
    }
}

/// Exact pointwise risk of a tabulated estimator at a single state.
pub fn pointwise_risk(
    estimator: &TabulatedEstimator,
    rho: &BlochState,
) -> Result<f64, DesignError> {
    RiskEvaluator::new(estimator).pointwise(rho)
}

/// Bayes risk of a discrete prior under a tabulated estimator.
pub fn bayes_risk(
    prior: &DiscretePrior,
    estimator: &TabulatedEstimator,
) -> Result<f64, DesignError> {
    RiskEvaluator::new(estimator).bayes(prior)
}

/// Maximum pointwise risk over the state space and its argmax.
pub fn max_risk(estimator: &TabulatedEstimator, config: &SearchConfig) -> (f64, BlochState) {
    RiskEvaluator::new(estimator).max(config)
}

/// Risk profile along `axis`: `(radius, risk)` pairs on a uniform grid.
pub fn risk_profile(
    estimator: &TabulatedEstimator,
    axis: &Axis,
    num_points: usize,
) -> Vec<(f64, f64)> {
    RiskEvaluator::new(estimator).profile(axis, num_points)
}

/// Local maxima of a sampled profile on (0, 1]: interior points that beat
/// both neighbors, plus the right endpoint when the profile rises into it.
pub fn profile_local_maxima(profile: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut maxima = Vec::new();
    for i in 1..profile.len().saturating_sub(1) {
        if profile[i].1 > profile[i - 1].1 && profile[i].1 > profile[i + 1].1 {
            maxima.push(profile[i]);
        }
    }
    if profile.len() >= 2 {
        let last = profile.len() - 1;
        if profile[last].1 > profile[last - 1].1 {
            maxima.push(profile[last]);
        }
    }
    maxima
}

/// Summary of a risk evaluation run, exportable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskReport {
    #[serde(with = "ext_real")]
    pub pointwise_max: f64,
    pub argmax_state: BlochState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bayes_risk: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<(f64, f64)>>,
    pub design: ExperimentDesign,
    pub estimator: String,
}

impl RiskReport {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(b) = self.bayes_risk {
            if b > self.pointwise_max + 1e-9 {
                return Err(format!(
                    "bayes risk {b} exceeds pointwise max {}",
                    self.pointwise_max
                ));
            }
        }
        if let Some(profile) = &self.profile {
            for (t, risk) in profile {
                if *risk > self.pointwise_max + 1e-9 && risk.is_finite() {
                    return Err(format!(
                        "profile value {risk} at radius {t} exceeds pointwise max"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{tabulate, TabulatedEstimator};
    use crate::qstate::{relative_entropy, Estimate, Kind};

    fn constant_table(design: &ExperimentDesign, state: BlochState) -> TabulatedEstimator {
        tabulate(
            |_, _| Estimate::Physical(state),
            design,
            "constant estimator",
        )
        .unwrap()
    }

    #[test]
    fn constant_estimator_risk_identities() {
        let design = ExperimentDesign::rebit_default(2);
        let anchor = BlochState::rebit(0.3, -0.1).unwrap();
        let table = constant_table(&design, anchor);
        // Zero at its own state.
        assert!(pointwise_risk(&table, &anchor).unwrap().abs() < 1e-13);
        // The sum telescopes to a single relative entropy elsewhere.
        let mixed_table = constant_table(&design, BlochState::maximally_mixed(Kind::Rebit));
        let pure = BlochState::rebit(1.0, 0.0).unwrap();
        let risk = pointwise_risk(&mixed_table, &pure).unwrap();
        assert!((risk - std::f64::consts::LN_2).abs() < 1e-13);
    }

    #[test]
    fn mle_risk_is_infinite_on_full_rank_states() {
        let design = ExperimentDesign::rebit_default(8);
        let mle_table = TabulatedEstimator::mle(&design).unwrap();
        let rho = BlochState::rebit(0.2, 0.3).unwrap();
        assert!(pointwise_risk(&mle_table, &rho).unwrap().is_infinite());

        // HML stays finite.
        let hml_table = TabulatedEstimator::hml(&design, 0.04).unwrap();
        assert!(pointwise_risk(&hml_table, &rho).unwrap().is_finite());
    }

    #[test]
    fn unphysical_entries_poison_reachable_states() {
        let design = ExperimentDesign::rebit_default(2);
        let li = TabulatedEstimator::linear_inversion(&design).unwrap();
        let rho = BlochState::rebit(0.1, 0.2).unwrap();
        assert!(pointwise_risk(&li, &rho).unwrap().is_infinite());
    }

    #[test]
    fn bayes_risk_identities() {
        let design = ExperimentDesign::rebit_default(2);
        let anchor = BlochState::rebit(0.25, 0.4).unwrap();
        let table = constant_table(&design, anchor);
        let point = DiscretePrior::new(vec![anchor], vec![1.0]).unwrap();
        assert!(bayes_risk(&point, &table).unwrap().abs() < 1e-13);

        let a = BlochState::rebit(0.5, 0.0).unwrap();
        let b = BlochState::rebit(-0.3, 0.2).unwrap();
        let two = DiscretePrior::new(vec![a, b], vec![0.5, 0.5]).unwrap();
        let expected = 0.5 * pointwise_risk(&table, &a).unwrap()
            + 0.5 * pointwise_risk(&table, &b).unwrap();
        assert!((bayes_risk(&two, &table).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn bayes_risk_is_linear_in_the_prior() {
        let design = ExperimentDesign::rebit_default(4);
        let table = TabulatedEstimator::hml(&design, 0.1).unwrap();
        let s1 = BlochState::rebit(0.7, 0.1).unwrap();
        let s2 = BlochState::rebit(-0.2, -0.6).unwrap();
        let s3 = BlochState::rebit(0.0, 0.3).unwrap();
        let p = DiscretePrior::new(vec![s1, s2], vec![0.4, 0.6]).unwrap();
        let q = DiscretePrior::new(vec![s2, s3], vec![0.5, 0.5]).unwrap();
        let lambda = 0.3;
        let mix = DiscretePrior::new(
            vec![s1, s2, s3],
            vec![lambda * 0.4, lambda * 0.6 + (1.0 - lambda) * 0.5, (1.0 - lambda) * 0.5],
        )
        .unwrap();
        let lhs = bayes_risk(&mix, &table).unwrap();
        let rhs = lambda * bayes_risk(&p, &table).unwrap()
            + (1.0 - lambda) * bayes_risk(&q, &table).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn max_risk_of_constant_mixed_estimator_is_ln2_at_pure() {
        let design = ExperimentDesign::rebit_default(2);
        let table = constant_table(&design, BlochState::maximally_mixed(Kind::Rebit));
        let (value, argmax) = max_risk(&table, &SearchConfig::default());
        assert!((value - std::f64::consts::LN_2).abs() < 1e-10);
        assert!((argmax.radius() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn profile_of_constant_estimator_dips_at_its_state() {
        let design = ExperimentDesign::rebit_default(2);
        let anchor = BlochState::rebit(0.5, 0.0).unwrap();
        let table = constant_table(&design, anchor);
        let profile = risk_profile(&table, &Axis::X, 201);
        // Zero at t = 0.5, positive elsewhere on the ray.
        let at_half = profile
            .iter()
            .find(|(t, _)| (t - 0.5).abs() < 1e-12)
            .unwrap();
        assert!(at_half.1.abs() < 1e-13);
        assert!(profile.iter().filter(|(_, r)| *r > 0.0).count() > 150);

        for (t, risk) in &profile {
            let rho = BlochState::rebit(*t, 0.0).unwrap();
            let direct = relative_entropy(&rho, &anchor).unwrap();
            assert!((risk - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pointwise_risk_is_continuous_for_full_rank_tables() {
        let design = ExperimentDesign::rebit_default(8);
        let table = TabulatedEstimator::hml(&design, 0.04).unwrap();
        let ev = RiskEvaluator::new(&table);
        let step = 1e-4;
        for (x, y, dx, dy) in [
            (0.3, 0.2, 1.0, 0.0),
            (-0.5, 0.1, 0.0, 1.0),
            (0.0, 0.0, 0.70710678, 0.70710678),
        ] {
            let at = |s: f64| {
                let rho = BlochState::rebit(x + s * dx, y + s * dy).unwrap();
                ev.pointwise(&rho).unwrap()
            };
            let forward = (at(step) - at(0.0)) / step;
            let backward = (at(0.0) - at(-step)) / step;
            assert!(
                (forward - backward).abs() < 1e-2 * (1.0 + forward.abs()),
                "derivative jump at ({x},{y})"
            );
            // Continuity at the 1e-6 scale for a 1e-4 step.
            assert!((at(step) - at(0.0)).abs() < 1e-2);
        }
    }

    #[test]
    fn parallel_sum_is_partition_independent() {
        let design = ExperimentDesign::rebit_default(32);
        let table = TabulatedEstimator::hml(&design, 0.04).unwrap();
        let rho = BlochState::rebit(0.4, -0.5).unwrap();
        let reference = pointwise_risk(&table, &rho).unwrap();
        for threads in [1, 2, 4] {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            let value = pool.install(|| pointwise_risk(&table, &rho).unwrap());
            assert_eq!(value, reference, "thread count {threads}");
        }
    }

    #[test]
    fn local_maxima_detection() {
        let profile = vec![
            (0.0, 0.1),
            (0.25, 0.3),
            (0.5, 0.2),
            (0.75, 0.15),
            (1.0, 0.4),
        ];
        let maxima = profile_local_maxima(&profile);
        assert_eq!(maxima.len(), 2);
        assert_eq!(maxima[0].0, 0.25);
        assert_eq!(maxima[1].0, 1.0);
    }
}
