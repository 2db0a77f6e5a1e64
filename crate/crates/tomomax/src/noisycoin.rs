//! The classical noisy-coin model: a Bernoulli parameter observed through
//! per-trial bit-flip noise. It reproduces the sampling mismatch of Pauli
//! tomography, carries the analytic minimax lower bounds, and plugs into the
//! same least-favorable-prior solvers as the quantum model.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{Axis, Dataset, ExperimentDesign};
use crate::lfp::GenericConfig;
use crate::model::{prepare_table, pointwise_risk_prepared, SearchConfig, StatModel, FEATURE_WIDTH};
use crate::numeric::golden_max;
use crate::qstate::BlochState;
use crate::vec3 as v3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoinError {
    #[error("trial error probability {0} outside [0, 1/2)")]
    InvalidAlpha(f64),
    #[error("model has no trials")]
    Empty,
    #[error("outcome vector length {got} does not match trial count {expected}")]
    OutcomeLength { expected: usize, got: usize },
    #[error("bimodal prior requires p0 = 0 for the likelihood-ratio form")]
    NonzeroP0,
    #[error("bimodal prior needs distinct modes")]
    EqualModes,
    #[error("binned dataset count exceeds the enumeration cap")]
    CapExceeded,
}

/// A coin with bias `p` whose k-th flip is recorded incorrectly with known
/// probability `alpha_k ∈ [0, 1/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyCoinModel {
    alphas: Vec<f64>,
}

impl NoisyCoinModel {
    pub fn new(alphas: Vec<f64>) -> Result<Self, CoinError> {
        if alphas.is_empty() {
            return Err(CoinError::Empty);
        }
        for &a in &alphas {
            if !(0.0..0.5).contains(&a) {
                return Err(CoinError::InvalidAlpha(a));
            }
        }
        Ok(Self { alphas })
    }

    /// All trials share one error probability.
    pub fn uniform(alpha: f64, trials: usize) -> Result<Self, CoinError> {
        Self::new(vec![alpha; trials])
    }

    /// A perfectly observed coin.
    pub fn noiseless(trials: usize) -> Result<Self, CoinError> {
        Self::new(vec![0.0; trials])
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// Probability of recording heads on trial `k`:
    /// `q_k(p) = alpha_k + p (1 - 2 alpha_k)`.
    pub fn trial_probability(&self, trial: usize, p: f64) -> f64 {
        let a = self.alphas[trial];
        a + p * (1.0 - 2.0 * a)
    }
}

/// Exact likelihood of a recorded outcome vector; log-space internally.
pub fn coin_likelihood(
    model: &NoisyCoinModel,
    outcomes: &[bool],
    p: f64,
) -> Result<f64, CoinError> {
    Ok(coin_log_likelihood(model, outcomes, p)?.exp())
}

pub fn coin_log_likelihood(
    model: &NoisyCoinModel,
    outcomes: &[bool],
    p: f64,
) -> Result<f64, CoinError> {
    if outcomes.len() != model.len() {
        return Err(CoinError::OutcomeLength {
            expected: model.len(),
            got: outcomes.len(),
        });
    }
    let mut ll = 0.0;
    for (k, &heads) in outcomes.iter().enumerate() {
        let q = model.trial_probability(k, p).clamp(0.0, 1.0);
        let term = if heads { q } else { 1.0 - q };
        if term == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += term.ln();
    }
    Ok(ll)
}

/// Two-point prior with equal weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BimodalPrior {
    pub p0: f64,
    pub p1: f64,
}

impl BimodalPrior {
    pub fn new(p0: f64, p1: f64) -> Result<Self, CoinError> {
        if p0 == p1 {
            return Err(CoinError::EqualModes);
        }
        Ok(Self { p0, p1 })
    }

    /// The scaling-matched mode `p1 = 1 / sqrt(beta_bar N)` above `p0 = 0`.
    pub fn matched(beta_bar: f64, trials: usize) -> Result<Self, CoinError> {
        Self::new(0.0, 1.0 / (beta_bar * trials as f64).sqrt())
    }
}

/// Posterior mean of the bimodal prior with `p0 = 0`, in the
/// likelihood-ratio form `p1 / (1 + Lambda)`. Stable in log space.
pub fn bimodal_bayes_p(
    model: &NoisyCoinModel,
    prior: &BimodalPrior,
    outcomes: &[bool],
) -> Result<f64, CoinError> {
    if prior.p0 != 0.0 {
        return Err(CoinError::NonzeroP0);
    }
    let ll0 = coin_log_likelihood(model, outcomes, prior.p0)?;
    let ll1 = coin_log_likelihood(model, outcomes, prior.p1)?;
    Ok(prior.p1 * posterior_share(ll1, ll0))
}

/// `exp(a) / (exp(a) + exp(b))` without overflow; ties (including two
/// impossible datasets) resolve to 1/2.
fn posterior_share(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return 0.5;
    }
    if a >= b {
        1.0 / (1.0 + (b - a).exp())
    } else {
        let r = (a - b).exp();
        r / (1.0 + r)
    }
}

/// Bayes estimate for the two-point quantum prior supported on the pure
/// state along `psi_axis` and its partner with spectrum `(1-p1, p1)`:
/// `r_hat = [1 - 2 p1 Pr(D|rho1)/(Pr(D|rho0)+Pr(D|rho1))] psi_axis`.
pub fn qubit_bimodal_bayes(
    design: &ExperimentDesign,
    psi_axis: &Axis,
    p1: f64,
    dataset: &Dataset,
) -> Result<BlochState, crate::experiment::DesignError> {
    assert!(p1 > 0.0 && p1 < 0.5, "p1 must lie in (0, 1/2)");
    let kind = design.kind();
    let rho0 = BlochState::from_vec3_unchecked(kind, *psi_axis.vec());
    let rho1 = BlochState::from_vec3_unchecked(kind, v3::scale(psi_axis.vec(), 1.0 - 2.0 * p1));
    let ll0 = design.log_likelihood(dataset, &rho0)?;
    let ll1 = design.log_likelihood(dataset, &rho1)?;
    let share1 = posterior_share(ll1, ll0);
    let radius = 1.0 - 2.0 * p1 * share1;
    Ok(BlochState::from_vec3_unchecked(
        kind,
        v3::scale(psi_axis.vec(), radius),
    ))
}

// ---------------------------------------------------------------------------
// Analytic bounds.
// ---------------------------------------------------------------------------

/// Minimax lower bound for a noisy coin with mean resolution `beta_bar`:
/// `e^{-1/2} / (2 sqrt(beta_bar n))`.
pub fn bound_noisy_coin(trials: u64, beta_bar: f64) -> f64 {
    assert!(trials >= 1 && beta_bar > 0.0);
    (-0.5f64).exp() / (2.0 * (beta_bar * trials as f64).sqrt())
}

/// Minimax lower bound for Pauli tomography: `e^{-1/2}/4 * sqrt(D-1)/sqrt(n)`
/// with `D = 2` for rebits and `D = 3` for qubits. Evaluated through the
/// noisy-coin form with `beta_bar = 4/(D-1)`, which is the same expression,
/// so the two bounds agree bit-for-bit.
pub fn bound_pauli(trials: u64, d: u32) -> f64 {
    assert!(d == 2 || d == 3, "D must be 2 (rebit) or 3 (qubit)");
    bound_noisy_coin(trials, 4.0 / (d - 1) as f64)
}

/// Minimax lower bound under the Haar-uniform rank-1 measurement:
/// `(2e)^{-3/2} / sqrt(n ln n)`.
pub fn bound_haar(trials: u64) -> f64 {
    assert!(trials >= 2);
    let n = trials as f64;
    (2.0 * std::f64::consts::E).powf(-1.5) / (n * n.ln()).sqrt()
}

/// Mean resolution conditioned on `alpha ∈ [1/(2n), 1 - 1/(2n)]`, in closed
/// form; grows like `2 ln n + O(1)`.
pub fn truncated_mean_resolution(trials: u64) -> f64 {
    assert!(trials >= 2);
    let n = trials as f64;
    let a = 1.0 / (2.0 * n);
    (2.0 * ((1.0 - a) / a).ln() - 4.0 * (1.0 - 2.0 * a)) / (1.0 - 1.0 / n)
}

/// The classical comparison baseline: minimax risk of a noiseless coin is
/// almost exactly `0.5 / n`.
pub fn classical_coin_reference(trials: u64) -> f64 {
    assert!(trials >= 1);
    0.5 / trials as f64
}

/// Hedged ("add-beta") estimate of the coin bias. For a noiseless coin this
/// is the closed form `(h + beta)/(n + 2 beta)`; with noise it maximizes
/// `[p(1-p)]^beta Pr(outcomes | p)` over `p` (1-D concave problem).
pub fn add_beta_estimator(
    model: &NoisyCoinModel,
    outcomes: &[bool],
    beta_hedge: f64,
) -> Result<f64, CoinError> {
    assert!(beta_hedge > 0.0);
    if outcomes.len() != model.len() {
        return Err(CoinError::OutcomeLength {
            expected: model.len(),
            got: outcomes.len(),
        });
    }
    if model.alphas.iter().all(|&a| a == 0.0) {
        let heads = outcomes.iter().filter(|&&b| b).count() as f64;
        return Ok((heads + beta_hedge) / (model.len() as f64 + 2.0 * beta_hedge));
    }
    let objective = |p: f64| -> f64 {
        let hedge = beta_hedge * (p.ln() + (1.0 - p).ln());
        match coin_log_likelihood(model, outcomes, p) {
            Ok(ll) => hedge + ll,
            Err(_) => f64::NEG_INFINITY,
        }
    };
    let (p, _) = golden_max(0.0, 1.0, 1e-12, objective);
    Ok(p.clamp(1e-300, 1.0 - 1e-16))
}

// ---------------------------------------------------------------------------
// Binned sufficient statistics and the StatModel implementation.
// ---------------------------------------------------------------------------

/// Trials with identical `alpha` are exchangeable, so the head count per
/// distinct noise level is sufficient. Datasets are tuples of per-group head
/// counts in lexicographic order (last group fastest).
#[derive(Debug, Clone)]
pub struct BinnedCoinModel {
    groups: Vec<(f64, u32)>,
    log_binom: Vec<Vec<f64>>,
    dataset_count: usize,
}

impl BinnedCoinModel {
    pub fn new(model: &NoisyCoinModel) -> Result<Self, CoinError> {
        let mut groups: Vec<(f64, u32)> = Vec::new();
        for &a in model.alphas() {
            match groups.iter_mut().find(|(g, _)| *g == a) {
                Some((_, count)) => *count += 1,
                None => groups.push((a, 1)),
            }
        }
        let mut dataset_count: u128 = 1;
        for &(_, count) in &groups {
            dataset_count = dataset_count.saturating_mul(count as u128 + 1);
            if dataset_count > (1 << 24) {
                return Err(CoinError::CapExceeded);
            }
        }
        let log_binom = groups
            .iter()
            .map(|&(_, m)| {
                let mut row = vec![0.0f64];
                let mut acc = 0.0;
                for k in 0..m {
                    acc += ((m - k) as f64).ln() - ((k + 1) as f64).ln();
                    row.push(acc);
                }
                row
            })
            .collect();
        Ok(Self {
            groups,
            log_binom,
            dataset_count: dataset_count as usize,
        })
    }

    pub fn groups(&self) -> &[(f64, u32)] {
        &self.groups
    }

    fn counts_at(&self, mut index: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.groups.len()];
        for g in (0..self.groups.len()).rev() {
            let base = self.groups[g].1 as usize + 1;
            counts[g] = (index % base) as u32;
            index /= base;
        }
        counts
    }

    fn group_probability(&self, group: usize, p: f64) -> f64 {
        let a = self.groups[group].0;
        (a + p * (1.0 - 2.0 * a)).clamp(0.0, 1.0)
    }
}

fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Binary relative entropy `KL(p || q)` in nats, with support conventions.
pub fn binary_kl(p: f64, q: f64) -> f64 {
    let mut d = xlnx(p) + xlnx(1.0 - p);
    if p > 0.0 {
        if q <= 0.0 {
            return f64::INFINITY;
        }
        d -= p * q.ln();
    }
    if p < 1.0 {
        if q >= 1.0 {
            return f64::INFINITY;
        }
        d -= (1.0 - p) * (1.0 - q).ln();
    }
    d.max(0.0)
}

/// Posterior means are clamped just inside (0, 1); see the quantum model's
/// norm floor for the rationale.
const P_FLOOR: f64 = 1e-15;

impl StatModel for BinnedCoinModel {
    type Point = f64;

    fn dataset_count(&self) -> usize {
        self.dataset_count
    }

    fn likelihoods(&self, point: &f64, out: &mut [f64]) {
        let rows: Vec<Vec<f64>> = self
            .groups
            .iter()
            .enumerate()
            .map(|(g, &(_, m))| {
                let q = self.group_probability(g, *point);
                (0..=m)
                    .map(|h| {
                        let mut ll = self.log_binom[g][h as usize];
                        if h > 0 {
                            if q == 0.0 {
                                return 0.0;
                            }
                            ll += h as f64 * q.ln();
                        }
                        if h < m {
                            if q == 1.0 {
                                return 0.0;
                            }
                            ll += (m - h) as f64 * (1.0 - q).ln();
                        }
                        ll.exp()
                    })
                    .collect()
            })
            .collect();
        let mut counts = vec![0u32; self.groups.len()];
        for slot in out.iter_mut() {
            let mut prob = 1.0;
            for (g, row) in rows.iter().enumerate() {
                prob *= row[counts[g] as usize];
            }
            *slot = prob;
            for g in (0..self.groups.len()).rev() {
                if counts[g] < self.groups[g].1 {
                    counts[g] += 1;
                    break;
                }
                counts[g] = 0;
            }
        }
    }

    fn dataset_possible(&self, point: &f64, dataset_index: usize) -> bool {
        let counts = self.counts_at(dataset_index);
        for (g, &h) in counts.iter().enumerate() {
            let q = self.group_probability(g, *point);
            if q <= 0.0 && h > 0 {
                return false;
            }
            if q >= 1.0 && h < self.groups[g].1 {
                return false;
            }
        }
        true
    }

    fn loss(&self, truth: &f64, estimate: &f64) -> f64 {
        binary_kl(*truth, *estimate)
    }

    fn self_term(&self, truth: &f64) -> f64 {
        xlnx(*truth) + xlnx(1.0 - *truth)
    }

    fn features(&self, truth: &f64) -> [f64; FEATURE_WIDTH] {
        [1.0, *truth, 0.0, 0.0]
    }

    fn cross_coeffs(&self, estimate: &f64) -> Option<[f64; FEATURE_WIDTH]> {
        let q = *estimate;
        if q <= 0.0 || q >= 1.0 {
            return None;
        }
        Some([(1.0 - q).ln(), q.ln() - (1.0 - q).ln(), 0.0, 0.0])
    }

    fn mean_point(&self, points: &[f64], weights: &[f64]) -> f64 {
        let mut mean = 0.0;
        let mut total = 0.0;
        for (p, &w) in points.iter().zip(weights) {
            if w > 0.0 {
                mean += w * p;
                total += w;
            }
        }
        debug_assert!(total > 0.0);
        (mean / total).clamp(P_FLOOR, 1.0 - P_FLOOR)
    }

    fn sample_uniform(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.gen::<f64>()
    }

    fn perturb(&self, center: &f64, sigma: f64, rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen();
        let normal = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        (center + sigma * normal).clamp(0.0, 1.0)
    }

    fn stencil(&self, center: &f64, step: f64) -> Vec<f64> {
        vec![
            (center + step).clamp(0.0, 1.0),
            (center - step).clamp(0.0, 1.0),
        ]
    }

    fn search_grid(&self, cfg: &SearchConfig) -> Vec<f64> {
        (0..cfg.line_points)
            .map(|i| i as f64 / (cfg.line_points - 1) as f64)
            .collect()
    }

    fn refine<F: Fn(&f64) -> f64>(
        &self,
        f: F,
        start: &f64,
        cfg: &SearchConfig,
    ) -> (f64, f64) {
        let spacing = 1.0 / (cfg.line_points - 1) as f64;
        let mut point = *start;
        let mut value = f(&point);
        for window in [2.0 * spacing, 0.1 * spacing] {
            let lo = (point - window).max(0.0);
            let hi = (point + window).min(1.0);
            let (candidate, cand_value) = golden_max(lo, hi, 1e-12, |p| f(&p));
            if cand_value > value {
                point = candidate;
                value = cand_value;
            }
        }
        (point, value)
    }

    fn distance(&self, a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }
}

// ---------------------------------------------------------------------------
// Exact bimodal risks and the coin LFP surface.
// ---------------------------------------------------------------------------

/// Table of bimodal posterior means over the binned dataset space.
fn bimodal_entries(binned: &BinnedCoinModel, prior: &BimodalPrior) -> Vec<f64> {
    let nd = binned.dataset_count();
    let mut l0 = vec![0.0; nd];
    let mut l1 = vec![0.0; nd];
    binned.likelihoods(&prior.p0, &mut l0);
    binned.likelihoods(&prior.p1, &mut l1);
    (0..nd)
        .map(|d| {
            // Binomial coefficients cancel in the posterior share.
            let share1 = if l0[d] == 0.0 && l1[d] == 0.0 {
                0.5
            } else {
                l1[d] / (l0[d] + l1[d])
            };
            let p_hat = prior.p0 + (prior.p1 - prior.p0) * share1;
            p_hat.clamp(P_FLOOR, 1.0 - P_FLOOR)
        })
        .collect()
}

/// Exact pointwise risk of the bimodal-prior Bayes estimator at `p_true`.
pub fn bimodal_pointwise_risk(
    model: &NoisyCoinModel,
    prior: &BimodalPrior,
    p_true: f64,
) -> Result<f64, CoinError> {
    let binned = BinnedCoinModel::new(model)?;
    let entries = bimodal_entries(&binned, prior);
    let table = prepare_table(&binned, entries);
    let mut scratch = Vec::new();
    Ok(pointwise_risk_prepared(&binned, &table, &p_true, &mut scratch))
}

/// Exact Bayes risk of the bimodal prior, `[risk(p0) + risk(p1)] / 2`.
pub fn bimodal_bayes_risk(model: &NoisyCoinModel, prior: &BimodalPrior) -> Result<f64, CoinError> {
    Ok(0.5 * bimodal_pointwise_risk(model, prior, prior.p0)?
        + 0.5 * bimodal_pointwise_risk(model, prior, prior.p1)?)
}

/// Minimax certificate for a noisy coin from the Monte Carlo LFP solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoinLfpResult {
    pub supports: Vec<f64>,
    pub weights: Vec<f64>,
    pub av_risk: f64,
    pub max_risk: f64,
    pub gap: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub converged: bool,
    pub algorithm: String,
}

/// Monte Carlo LFP configuration for coins; mirrors the quantum defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoinLfpConfig {
    pub tol: f64,
    pub weight_tol: f64,
    pub m_per_point: usize,
    pub sigma: Option<f64>,
    pub n_init: usize,
    pub seed: u64,
    pub max_outer: usize,
    pub weight_rel_tol: f64,
    pub max_weight_iters: usize,
}

impl Default for CoinLfpConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            weight_tol: 1e-4,
            m_per_point: 5,
            sigma: None,
            n_init: 60,
            seed: 0,
            max_outer: 80,
            weight_rel_tol: 1e-6,
            max_weight_iters: 4000,
        }
    }
}

/// Monte Carlo least-favorable-prior search for a noisy coin. Deterministic
/// for a fixed seed; on hitting the iteration limit the best certificate so
/// far is returned with `converged = false`.
pub fn coin_mc_lfp(
    model: &NoisyCoinModel,
    config: &CoinLfpConfig,
) -> Result<CoinLfpResult, CoinError> {
    let started = Instant::now();
    let binned = BinnedCoinModel::new(model)?;
    let n = model.len() as f64;
    let generic = GenericConfig {
        tol: config.tol,
        weight_tol: config.weight_tol,
        mixing_alpha: None,
        m_per_point: config.m_per_point,
        sigma: config.sigma.unwrap_or(0.5 / n.sqrt()),
        n_init: config.n_init,
        seed: config.seed,
        max_outer: config.max_outer,
        weight_rel_tol: config.weight_rel_tol,
        max_weight_iters: config.max_weight_iters,
        location_rounds: 2,
        location_step: 0.5 / n.sqrt(),
        search: SearchConfig::default(),
    };
    let raw = crate::lfp::mc_lfp_model(&binned, &generic, None)
        .map_err(|_| CoinError::CapExceeded)?;
    let total: f64 = raw.weights.iter().sum();
    let gap = if raw.av_risk > 0.0 {
        (raw.max_risk - raw.av_risk).abs() / raw.av_risk
    } else {
        f64::INFINITY
    };
    Ok(CoinLfpResult {
        supports: raw.points,
        weights: raw.weights.iter().map(|w| w / total).collect(),
        av_risk: raw.av_risk,
        max_risk: raw.max_risk,
        gap,
        iterations: raw.iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        converged: raw.converged,
        algorithm: "mc".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn coin_likelihood_examples() {
        let noiseless = NoisyCoinModel::noiseless(3).unwrap();
        assert_eq!(
            coin_likelihood(&noiseless, &[true, false, false], 0.0).unwrap(),
            0.0
        );

        let one = NoisyCoinModel::uniform(0.25, 1).unwrap();
        assert!((coin_likelihood(&one, &[true], 0.0).unwrap() - 0.25).abs() < 1e-15);

        let two = NoisyCoinModel::new(vec![0.1, 0.2]).unwrap();
        for outcomes in [[true, true], [true, false], [false, true], [false, false]] {
            assert!(
                (coin_likelihood(&two, &outcomes, 0.5).unwrap() - 0.25).abs() < 1e-15,
                "p = 1/2 erases the noise"
            );
        }
    }

    #[test]
    fn model_validation() {
        assert!(matches!(
            NoisyCoinModel::new(vec![0.5]),
            Err(CoinError::InvalidAlpha(_))
        ));
        assert!(matches!(NoisyCoinModel::new(vec![]), Err(CoinError::Empty)));
        assert!(NoisyCoinModel::new(vec![0.0, 0.49]).is_ok());
    }

    #[test]
    fn bimodal_bayes_examples() {
        // A noiseless trial showing heads is impossible under p = 0.
        let model = NoisyCoinModel::new(vec![0.0, 0.25]).unwrap();
        let prior = BimodalPrior::new(0.0, 0.3).unwrap();
        let p_hat = bimodal_bayes_p(&model, &prior, &[true, false]).unwrap();
        assert!((p_hat - 0.3).abs() < 1e-15);

        // Equal evidence halves p1: alpha = 1/4, p1 = 1 gives q1 = 3/4, and
        // the outcome (heads, tails) has likelihood 3/16 under both modes.
        let model = NoisyCoinModel::uniform(0.25, 2).unwrap();
        let prior = BimodalPrior::new(0.0, 1.0).unwrap();
        let p_hat = bimodal_bayes_p(&model, &prior, &[true, false]).unwrap();
        assert!((p_hat - 0.5).abs() < 1e-14);

        // Random instances match the direct two-term weighted average.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n = 1 + (rng.gen::<u64>() % 12) as usize;
            let alphas: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 0.45).collect();
            let model = NoisyCoinModel::new(alphas).unwrap();
            let p1 = 0.05 + 0.9 * rng.gen::<f64>();
            let prior = BimodalPrior::new(0.0, p1).unwrap();
            let outcomes: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
            let fast = bimodal_bayes_p(&model, &prior, &outcomes).unwrap();
            let l0 = coin_likelihood(&model, &outcomes, 0.0).unwrap();
            let l1 = coin_likelihood(&model, &outcomes, p1).unwrap();
            let direct = (0.5 * 0.0 * l0 + 0.5 * p1 * l1) / (0.5 * l0 + 0.5 * l1);
            assert!((fast - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn qubit_bimodal_matches_generic_bayes_mean() {
        let design = ExperimentDesign::rebit_default(4);
        let psi = Axis::in_plane(std::f64::consts::FRAC_PI_4);
        let p1 = 0.125;
        let rho0 = BlochState::from_vec3_unchecked(design.kind(), *psi.vec());
        let rho1 = BlochState::from_vec3_unchecked(
            design.kind(),
            v3::scale(psi.vec(), 1.0 - 2.0 * p1),
        );
        let prior =
            crate::lfp::DiscretePrior::new(vec![rho0, rho1], vec![0.5, 0.5]).unwrap();
        for ds in design.enumerate_datasets().unwrap() {
            let direct = qubit_bimodal_bayes(&design, &psi, p1, &ds).unwrap();
            let generic = crate::estimators::bayes_mean(&prior, &design, &ds).unwrap();
            assert!(
                v3::dist(direct.vec3(), generic.vec3()) < 1e-12,
                "dataset {:?}",
                ds.counts
            );
        }
    }

    #[test]
    fn bound_values() {
        assert!((bound_noisy_coin(100, 4.0) - 0.015163).abs() < 1e-6);
        assert!((bound_noisy_coin(100, 2.0) - 0.021444).abs() < 1e-6);
        assert!((bound_pauli(192, 3) - 0.015476).abs() < 1e-6);
        assert!((bound_pauli(128, 2) - 0.013402).abs() < 1e-6);
        assert!((bound_haar(1000) - 9.492e-4).abs() < 1e-6);
        assert!((bound_haar(8) - 0.019342).abs() < 1e-5);
        // Algebraic identity between the Pauli and noisy-coin forms.
        for n in [1u64, 16, 128, 500] {
            for d in [2u32, 3] {
                let bb = 4.0 / (d - 1) as f64;
                assert_eq!(bound_noisy_coin(n, bb), bound_pauli(n, d));
            }
        }
        // sqrt scaling: quadrupling N halves the bound.
        assert!((bound_pauli(400, 2) - 0.5 * bound_pauli(100, 2)).abs() < 1e-15);
        // Monotone decreasing.
        let mut prev = f64::INFINITY;
        for n in 2..200u64 {
            let b = bound_haar(n);
            assert!(b < prev);
            prev = b;
        }
    }

    #[test]
    fn truncated_resolution_matches_quadrature() {
        // Independent oracle: substitute u = logit(alpha), so the integrand
        // becomes the bounded 1 - 4 a(1-a) and plain Simpson converges.
        let quadrature = |n: f64| -> f64 {
            let a = 1.0 / (2.0 * n);
            let lo = (a / (1.0 - a)).ln();
            let hi = ((1.0 - a) / a).ln();
            let panels = 1 << 16;
            let h = (hi - lo) / panels as f64;
            let g = |u: f64| {
                let s = 1.0 / (1.0 + (-u).exp());
                1.0 - 4.0 * s * (1.0 - s)
            };
            let mut total = g(lo) + g(hi);
            for i in 1..panels {
                let u = lo + i as f64 * h;
                total += if i % 2 == 1 { 4.0 } else { 2.0 } * g(u);
            }
            (total * h / 3.0) / (1.0 - 1.0 / n)
        };
        for n in [100u64, 10_000, 1_000_000] {
            let closed = truncated_mean_resolution(n);
            let oracle = quadrature(n as f64);
            assert!(
                (closed - oracle).abs() < 1e-7 * closed,
                "n = {n}: {closed} vs {oracle}"
            );
        }
        // Asymptotics: approaches 2 ln n from below, tighter as n grows.
        let r4 = truncated_mean_resolution(10_000) / (2.0 * (10_000f64).ln());
        let r6 = truncated_mean_resolution(1_000_000) / (2.0 * (1_000_000f64).ln());
        assert!((r4 - 1.0).abs() < 0.15);
        assert!((r6 - 1.0).abs() < (r4 - 1.0).abs());
    }

    #[test]
    fn add_beta_examples() {
        let noiseless2 = NoisyCoinModel::noiseless(2).unwrap();
        let est = add_beta_estimator(&noiseless2, &[true, false], 0.5).unwrap();
        assert!((est - 0.5).abs() < 1e-15);

        let noiseless4 = NoisyCoinModel::noiseless(4).unwrap();
        let est = add_beta_estimator(&noiseless4, &[true; 4], 0.5).unwrap();
        assert!((est - 0.9).abs() < 1e-15);

        // Noisy case against a dense grid oracle.
        let model = NoisyCoinModel::uniform(0.1, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let outcomes: Vec<bool> = (0..16).map(|_| rng.gen::<bool>()).collect();
            let est = add_beta_estimator(&model, &outcomes, 0.04).unwrap();
            let mut best = (0.5, f64::NEG_INFINITY);
            for i in 1..200_000 {
                let p = i as f64 / 200_000.0;
                let v = 0.04 * (p.ln() + (1.0 - p).ln())
                    + coin_log_likelihood(&model, &outcomes, p).unwrap();
                if v > best.1 {
                    best = (p, v);
                }
            }
            assert!((est - best.0).abs() < 1e-4, "{est} vs {}", best.0);
            assert!(est > 0.0 && est < 1.0);
        }
    }

    #[test]
    fn binned_model_matches_explicit_enumeration() {
        // Brute force over all 2^N outcome vectors (the N <= 20 oracle).
        let model = NoisyCoinModel::new(vec![0.1, 0.1, 0.3, 0.1, 0.3, 0.3, 0.1, 0.1]).unwrap();
        let prior = BimodalPrior::new(0.0, 0.35).unwrap();
        let n = model.len();
        let p_true = 0.0;
        let mut brute = 0.0;
        for bits in 0..(1u32 << n) {
            let outcomes: Vec<bool> = (0..n).map(|k| bits >> k & 1 == 1).collect();
            let lik = coin_likelihood(&model, &outcomes, p_true).unwrap();
            if lik == 0.0 {
                continue;
            }
            let p_hat = bimodal_bayes_p(&model, &prior, &outcomes).unwrap();
            brute += lik * binary_kl(p_true, p_hat);
        }
        let fast = bimodal_pointwise_risk(&model, &prior, p_true).unwrap();
        assert!((fast - brute).abs() < 1e-12, "{fast} vs {brute}");

        let binned = BinnedCoinModel::new(&model).unwrap();
        assert_eq!(binned.groups().len(), 2);
        assert_eq!(binned.dataset_count(), 6 * 4);
        let mut lik = vec![0.0; binned.dataset_count()];
        binned.likelihoods(&0.3, &mut lik);
        assert!((lik.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bimodal_bayes_risk_dominates_analytic_bound() {
        let alpha = 0.5 * (1.0 - 1.0 / 2f64.sqrt());
        for n in [16usize, 64] {
            let model = NoisyCoinModel::uniform(alpha, n).unwrap();
            let prior = BimodalPrior::matched(4.0, n).unwrap();
            let exact = bimodal_bayes_risk(&model, &prior).unwrap();
            let bound = bound_noisy_coin(n as u64, 4.0);
            assert!(
                exact >= bound,
                "n = {n}: exact bimodal risk {exact} below bound {bound}"
            );
        }
    }

    #[test]
    fn noiseless_coin_lfp_tracks_half_over_n() {
        let model = NoisyCoinModel::noiseless(16).unwrap();
        let config = CoinLfpConfig {
            n_init: 40,
            seed: 5,
            tol: 5e-3,
            ..Default::default()
        };
        let result = coin_mc_lfp(&model, &config).unwrap();
        assert!(result.av_risk <= result.max_risk + 1e-9);
        let midpoint = 0.5 * (result.av_risk + result.max_risk);
        let reference = classical_coin_reference(16);
        assert!(
            (midpoint - reference).abs() / reference < 0.2,
            "midpoint {midpoint} vs 0.5/N {reference}"
        );
    }
}
