//! Least-favorable-prior solvers.
//!
//! Both solvers maintain a discrete prior and its exact Bayes estimator and
//! emit a two-sided certificate: the prior's Bayes risk is a lower bound on
//! the minimax risk, the estimator's maximum risk an upper bound (the
//! duality sandwich). The deterministic solver grows the support one point
//! at a time at the current risk maximum; the Monte Carlo solver resamples
//! supports around the survivors of a weight-pruning step.
//!
//! Everything here is generic over [`StatModel`], so the same machinery
//! solves the quantum problem and the classical noisy coin.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::TabulatedEstimator;
use crate::experiment::{DesignError, ExperimentDesign};
use crate::model::{
    max_risk_prepared, prepare_table, QuantumModel, SearchConfig, StatModel, FEATURE_WIDTH,
};
use crate::numeric::CompensatedSum;
use crate::qstate::{BlochState, Kind};
use crate::vec3::Vec3;

#[derive(Debug, Error)]
pub enum LfpError {
    #[error("prior: {0}")]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("inner solver failure: {0}")]
    InnerSolverFailure(String),
    #[error("iteration limit reached (gap {gap:.3e} > tol); best certificate returned")]
    IterationLimit { gap: f64, best: Box<LfpResult> },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("prior needs at least one support")]
    Empty,
    #[error("weights must match supports: {supports} vs {weights}")]
    LengthMismatch { supports: usize, weights: usize },
    #[error("weights must be nonnegative")]
    NegativeWeight,
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("supports {0} and {1} coincide within 1e-10")]
    DuplicateSupport(usize, usize),
    #[error("supports mix state kinds")]
    MixedKinds,
}

/// A weighted finite set of states: the candidate least favorable prior.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretePrior {
    supports: Vec<BlochState>,
    weights: Vec<f64>,
}

impl DiscretePrior {
    pub fn new(supports: Vec<BlochState>, weights: Vec<f64>) -> Result<Self, PriorError> {
        if supports.is_empty() {
            return Err(PriorError::Empty);
        }
        if supports.len() != weights.len() {
            return Err(PriorError::LengthMismatch {
                supports: supports.len(),
                weights: weights.len(),
            });
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(PriorError::NegativeWeight);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PriorError::WeightSum(total));
        }
        let kind = supports[0].kind();
        if supports.iter().any(|s| s.kind() != kind) {
            return Err(PriorError::MixedKinds);
        }
        for i in 0..supports.len() {
            for j in (i + 1)..supports.len() {
                if crate::vec3::dist(supports[i].vec3(), supports[j].vec3()) < 1e-10 {
                    return Err(PriorError::DuplicateSupport(i, j));
                }
            }
        }
        Ok(Self { supports, weights })
    }

    pub fn uniform(supports: Vec<BlochState>) -> Result<Self, PriorError> {
        let w = 1.0 / supports.len() as f64;
        let weights = vec![w; supports.len()];
        Self::new(supports, weights)
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }

    pub fn kind(&self) -> Kind {
        self.supports[0].kind()
    }

    pub fn supports(&self) -> &[BlochState] {
        &self.supports
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&BlochState, f64)> {
        self.supports.iter().zip(self.weights.iter().copied())
    }

    /// Prior-mean Bloch vector.
    pub(crate) fn mean(&self) -> Vec3 {
        let mut mean = [0.0; 3];
        for (s, w) in self.iter() {
            crate::vec3::axpy(&mut mean, w, s.vec3());
        }
        mean
    }
}

impl<'de> Deserialize<'de> for DiscretePrior {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            supports: Vec<BlochState>,
            weights: Vec<f64>,
        }
        let repr = Repr::deserialize(deserializer)?;
        DiscretePrior::new(repr.supports, repr.weights).map_err(serde::de::Error::custom)
    }
}

/// Output of an LFP run: the prior, its Bayes-estimator table, and the
/// two-sided certificate `av_risk <= minimax risk <= max_risk`.
#[derive(Debug, Clone)]
pub struct LfpResult {
    pub prior: DiscretePrior,
    pub estimator: TabulatedEstimator,
    /// Bayes risk of the prior: lower bound on the minimax risk.
    pub av_risk: f64,
    /// Maximum risk of the Bayes estimator: upper bound on the minimax risk.
    pub max_risk: f64,
    /// Relative certificate width `|av - max| / av`.
    pub gap: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub algorithm: String,
    pub converged: bool,
}

/// The certificate interval `(lower, upper)` bracketing the minimax risk.
pub fn minimax_certificate(result: &LfpResult) -> (f64, f64) {
    (result.av_risk, result.max_risk)
}

fn relative_gap(av: f64, max: f64) -> f64 {
    if av > 0.0 {
        (max - av).abs() / av
    } else if max.abs() <= 1e-15 {
        0.0
    } else {
        f64::INFINITY
    }
}

// ---------------------------------------------------------------------------
// Generic machinery over StatModel.
// ---------------------------------------------------------------------------

/// Fixed support set with its likelihood matrix and per-support loss
/// features; the workhorse of the weight solver.
pub(crate) struct SupportSet<'m, M: StatModel> {
    model: &'m M,
    pub points: Vec<M::Point>,
    lik: Vec<f64>,
    feats: Vec<[f64; FEATURE_WIDTH]>,
    selfs: Vec<f64>,
    nd: usize,
}

impl<'m, M: StatModel> SupportSet<'m, M> {
    pub fn new(model: &'m M, points: Vec<M::Point>) -> Self {
        let nd = model.dataset_count();
        let mut lik = vec![0.0; points.len() * nd];
        lik.par_chunks_mut(nd)
            .zip(points.par_iter())
            .for_each(|(row, p)| model.likelihoods(p, row));
        let feats = points.iter().map(|p| model.features(p)).collect();
        let selfs = points.iter().map(|p| model.self_term(p)).collect();
        Self {
            model,
            points,
            lik,
            feats,
            selfs,
            nd,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Posterior-mean table for the given weights. Datasets impossible under
    /// every support fall back to the prior mean; they carry zero prior
    /// probability, so the choice only pads the table.
    pub fn bayes_entries(&self, weights: &[f64]) -> Vec<M::Point> {
        let n = self.len();
        let fallback = self.model.mean_point(&self.points, weights);
        (0..self.nd)
            .into_par_iter()
            .map(|d| {
                let mut posterior = Vec::with_capacity(n);
                let mut total = 0.0;
                for i in 0..n {
                    let u = weights[i] * self.lik[i * self.nd + d];
                    posterior.push(u);
                    total += u;
                }
                if total > 0.0 {
                    self.model.mean_point(&self.points, &posterior)
                } else {
                    fallback.clone()
                }
            })
            .collect()
    }

    /// Pointwise risk of the table at every support.
    pub fn support_risks(&self, entries: &[M::Point]) -> Vec<f64> {
        let mut cross = Vec::with_capacity(self.nd);
        let mut singular = Vec::new();
        for (d, e) in entries.iter().enumerate() {
            match self.model.cross_coeffs(e) {
                Some(c) => cross.push(c),
                None => {
                    cross.push([0.0; FEATURE_WIDTH]);
                    singular.push(d);
                }
            }
        }
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let row = &self.lik[i * self.nd..(i + 1) * self.nd];
                let f = &self.feats[i];
                let mut acc = CompensatedSum::new();
                for (d, c) in cross.iter().enumerate() {
                    let dotp =
                        c[0] * f[0] + c[1] * f[1] + c[2] * f[2] + c[3] * f[3];
                    acc.add(row[d] * (self.selfs[i] - dotp));
                }
                let mut risk = acc.value();
                for &d in &singular {
                    // Remove the bogus regular term and add the direct loss.
                    risk -= row[d] * self.selfs[i];
                    if self.model.dataset_possible(&self.points[i], d) {
                        let l = self.model.loss(&self.points[i], &entries[d]);
                        if l.is_infinite() {
                            return f64::INFINITY;
                        }
                        risk += row[d] * l;
                    }
                }
                risk
            })
            .collect()
    }
}

fn weighted_sum(weights: &[f64], values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (w, v) in weights.iter().zip(values) {
        acc.add(w * v);
    }
    acc.value()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        acc += u;
        let candidate = (acc - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&u| (u - tau).max(0.0)).collect()
}

pub(crate) struct WeightOutcome {
    pub weights: Vec<f64>,
    pub av_risk: f64,
    pub support_risks: Vec<f64>,
    pub converged: bool,
}

/// Maximize the Bayes risk over the weight simplex with supports fixed.
///
/// The objective is concave (it is a minimum of linear functions of the
/// weights), its gradient is the vector of pointwise risks at the supports,
/// and `max_i grad_i - J` certifies the optimality gap. Multiplicative
/// (exponentiated-gradient) updates with a backtracked step, falling back to
/// projected gradient if they stall.
pub(crate) fn maximize_weights_model<M: StatModel>(
    sup: &SupportSet<M>,
    init: &[f64],
    rel_tol: f64,
    max_iters: usize,
) -> WeightOutcome {
    let n = sup.len();
    let mut weights: Vec<f64> = init.to_vec();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        weights = vec![1.0 / n as f64; n];
    } else {
        weights.iter_mut().for_each(|w| *w /= total);
    }

    let evaluate = |w: &[f64]| -> (Vec<f64>, f64) {
        let entries = sup.bayes_entries(w);
        let risks = sup.support_risks(&entries);
        let j = weighted_sum(w, &risks);
        (risks, j)
    };

    let (mut risks, mut j) = evaluate(&weights);
    if n == 1 {
        return WeightOutcome {
            weights,
            av_risk: j,
            support_risks: risks,
            converged: true,
        };
    }

    let mut eta = 1.0 / j.abs().max(1e-6);
    let mut converged = false;
    for _ in 0..max_iters {
        let g_max = risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let gap = g_max - j;
        if gap <= rel_tol * j.abs().max(1e-12) {
            converged = true;
            break;
        }

        // Exponentiated-gradient step, backtracked until the concave
        // objective improves.
        let mut improved = false;
        let mut step = eta;
        while step > 1e-14 {
            let mut cand: Vec<f64> = weights
                .iter()
                .zip(&risks)
                .map(|(&w, &g)| w * (step * (g - g_max)).exp())
                .collect();
            let total: f64 = cand.iter().sum();
            if total > 0.0 {
                cand.iter_mut().for_each(|w| *w /= total);
                let (cand_risks, cand_j) = evaluate(&cand);
                if cand_j > j {
                    weights = cand;
                    risks = cand_risks;
                    j = cand_j;
                    eta = step * 1.5;
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }

        if !improved {
            // Projected-gradient fallback.
            let mut step = 1.0 / (1.0 + g_max.abs());
            while step > 1e-14 {
                let shifted: Vec<f64> = weights
                    .iter()
                    .zip(&risks)
                    .map(|(&w, &g)| w + step * g)
                    .collect();
                let cand = project_simplex(&shifted);
                let (cand_risks, cand_j) = evaluate(&cand);
                if cand_j > j {
                    weights = cand;
                    risks = cand_risks;
                    j = cand_j;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
        }

        if !improved {
            // No ascent direction yields progress at machine precision.
            let g_max = risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            converged = g_max - j <= 10.0 * rel_tol * j.abs().max(1e-12);
            break;
        }
    }

    WeightOutcome {
        weights,
        av_risk: j,
        support_risks: risks,
        converged,
    }
}

pub(crate) struct ModelLfp<P> {
    pub points: Vec<P>,
    pub weights: Vec<f64>,
    pub entries: Vec<P>,
    pub av_risk: f64,
    pub max_risk: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct GenericConfig {
    pub tol: f64,
    pub weight_tol: f64,
    pub mixing_alpha: Option<f64>,
    pub m_per_point: usize,
    pub sigma: f64,
    pub n_init: usize,
    pub seed: u64,
    pub max_outer: usize,
    pub weight_rel_tol: f64,
    pub max_weight_iters: usize,
    pub location_rounds: usize,
    pub location_step: f64,
    pub search: SearchConfig,
}

fn dedup_points<M: StatModel>(model: &M, points: &mut Vec<M::Point>, tol: f64) {
    let mut keep: Vec<M::Point> = Vec::with_capacity(points.len());
    for p in points.drain(..) {
        if keep.iter().all(|q| model.distance(q, &p) >= tol) {
            keep.push(p);
        }
    }
    *points = keep;
}

/// Maximum risk of a table, also scanning the supports themselves so the
/// certificate can never fall below the Bayes risk it pairs with.
fn certified_max<M: StatModel>(
    model: &M,
    entries: &[M::Point],
    supports: &[M::Point],
    support_risks: &[f64],
    cfg: &SearchConfig,
) -> (f64, M::Point) {
    let prepared = prepare_table(model, entries.to_vec());
    let (mut best_value, mut best_point) = max_risk_prepared(model, &prepared, cfg);
    for (p, &r) in supports.iter().zip(support_risks) {
        if r > best_value {
            best_value = r;
            best_point = p.clone();
        }
    }
    (best_value, best_point)
}

/// Monte Carlo LFP: uniform initial supports, weight maximization, pruning,
/// and Gaussian resampling around survivors until the certificate closes.
/// `init_points` replaces the uniform draw when resuming from a checkpoint.
pub(crate) fn mc_lfp_model<M: StatModel>(
    model: &M,
    cfg: &GenericConfig,
    init_points: Option<Vec<M::Point>>,
) -> Result<ModelLfp<M::Point>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut points: Vec<M::Point> = match init_points {
        Some(p) if !p.is_empty() => p,
        _ => (0..cfg.n_init.max(1))
            .map(|_| model.sample_uniform(&mut rng))
            .collect(),
    };
    dedup_points(model, &mut points, 1e-10);
    let mut weights = vec![1.0 / points.len() as f64; points.len()];

    let mut best: Option<ModelLfp<M::Point>> = None;
    let mut iterations = 0;
    for outer in 1..=cfg.max_outer {
        iterations = outer;
        let sup = SupportSet::new(model, points.clone());
        let outcome =
            maximize_weights_model(&sup, &weights, cfg.weight_rel_tol, cfg.max_weight_iters);
        weights = outcome.weights.clone();
        let entries = sup.bayes_entries(&weights);
        let (max_risk, _) = certified_max(
            model,
            &entries,
            &points,
            &outcome.support_risks,
            &cfg.search,
        );
        let av = outcome.av_risk;
        let gap = relative_gap(av, max_risk);

        let better = best
            .as_ref()
            .map_or(true, |b| gap < relative_gap(b.av_risk, b.max_risk));
        if better {
            best = Some(ModelLfp {
                points: points.clone(),
                weights: weights.clone(),
                entries: entries.clone(),
                av_risk: av,
                max_risk,
                iterations,
                converged: gap <= cfg.tol,
            });
        }

        // Prune low-weight supports.
        let survivors: Vec<usize> = (0..points.len())
            .filter(|&i| weights[i] >= cfg.weight_tol)
            .collect();
        let (mut kept_points, mut kept_weights): (Vec<M::Point>, Vec<f64>) = if survivors
            .is_empty()
        {
            let top = (0..points.len())
                .max_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap())
                .unwrap();
            (vec![points[top].clone()], vec![1.0])
        } else {
            (
                survivors.iter().map(|&i| points[i].clone()).collect(),
                survivors.iter().map(|&i| weights[i]).collect(),
            )
        };
        let total: f64 = kept_weights.iter().sum();
        kept_weights.iter_mut().for_each(|w| *w /= total);

        if gap <= cfg.tol || outer == cfg.max_outer {
            points = kept_points;
            weights = kept_weights;
            break;
        }

        // Resample around survivors and reset to uniform weights.
        let survivors_snapshot = kept_points.clone();
        for center in &survivors_snapshot {
            for _ in 0..cfg.m_per_point {
                kept_points.push(model.perturb(center, cfg.sigma, &mut rng));
            }
        }
        dedup_points(model, &mut kept_points, 1e-10);
        weights = vec![1.0 / kept_points.len() as f64; kept_points.len()];
        points = kept_points;
    }

    // Final certificate on the pruned support set, warm-started from the
    // surviving weights.
    let sup = SupportSet::new(model, points.clone());
    let warm = if weights.len() == sup.len() {
        weights.clone()
    } else {
        vec![1.0 / sup.len() as f64; sup.len()]
    };
    let outcome =
        maximize_weights_model(&sup, &warm, cfg.weight_rel_tol, cfg.max_weight_iters);
    let entries = sup.bayes_entries(&outcome.weights);
    let (max_risk, _) = certified_max(
        model,
        &entries,
        &points,
        &outcome.support_risks,
        &cfg.search,
    );
    let final_gap = relative_gap(outcome.av_risk, max_risk);
    let final_result = ModelLfp {
        points,
        weights: outcome.weights,
        entries,
        av_risk: outcome.av_risk,
        max_risk,
        iterations,
        converged: final_gap <= cfg.tol,
    };
    let use_final = best
        .as_ref()
        .map_or(true, |b| final_gap <= relative_gap(b.av_risk, b.max_risk));
    Ok(if use_final {
        final_result
    } else {
        best.unwrap()
    })
}

/// Deterministic support-growing LFP: jointly optimize locations and
/// weights, then add a support point wherever the risk peaks.
pub(crate) fn kempthorne_lfp_model<M: StatModel>(
    model: &M,
    init_points: Vec<M::Point>,
    init_weights: Vec<f64>,
    cfg: &GenericConfig,
) -> Result<ModelLfp<M::Point>, String> {
    let mut points = init_points;
    let mut weights = init_weights;
    let mut previous_av = 0.0f64;
    let mut best: Option<ModelLfp<M::Point>> = None;

    for outer in 1..=cfg.max_outer {

        // (a) maximize the Bayes risk over priors with this support count:
        // alternate convex weight maximization with per-point local search.
        let mut sup = SupportSet::new(model, points.clone());
        let mut outcome =
            maximize_weights_model(&sup, &weights, cfg.weight_rel_tol, cfg.max_weight_iters);
        for _ in 0..cfg.location_rounds {
            let mut moved = false;
            for i in 0..points.len() {
                if let Some(better) = improve_location(
                    model,
                    &points,
                    &outcome.weights,
                    i,
                    cfg.location_step,
                    outcome.av_risk,
                ) {
                    points[i] = better;
                    moved = true;
                    sup = SupportSet::new(model, points.clone());
                    outcome = maximize_weights_model(
                        &sup,
                        &outcome.weights,
                        cfg.weight_rel_tol,
                        cfg.max_weight_iters,
                    );
                }
            }
            if !moved {
                break;
            }
        }
        weights = outcome.weights.clone();

        // Weight maximization over a superset of supports can only improve;
        // guard the monotone certificate against a poor mixing start.
        if outcome.av_risk < previous_av - 1e-12 {
            let restarted = maximize_weights_model(
                &sup,
                &weights,
                cfg.weight_rel_tol,
                cfg.max_weight_iters * 2,
            );
            if restarted.av_risk > outcome.av_risk {
                outcome = restarted;
                weights = outcome.weights.clone();
            }
        }
        previous_av = outcome.av_risk.max(previous_av);

        // (b, c) certificate for this prior.
        let entries = sup.bayes_entries(&weights);
        let prepared = prepare_table(model, entries.clone());
        let (grid_max, max_point) = max_risk_prepared(model, &prepared, &cfg.search);
        let mut max_risk = grid_max;
        for &r in &outcome.support_risks {
            if r > max_risk {
                max_risk = r;
            }
        }
        let av = outcome.av_risk;
        let gap = relative_gap(av, max_risk);

        let better = best
            .as_ref()
            .map_or(true, |b| gap < relative_gap(b.av_risk, b.max_risk));
        if better {
            best = Some(ModelLfp {
                points: points.clone(),
                weights: weights.clone(),
                entries,
                av_risk: av,
                max_risk,
                iterations: outer,
                converged: gap <= cfg.tol,
            });
        }
        if gap <= cfg.tol {
            break;
        }
        if outer == cfg.max_outer {
            break;
        }

        // (d) add a support at the risk maximum with the mixing weight.
        let n_old = points.len();
        let alpha = cfg
            .mixing_alpha
            .unwrap_or(1.0 / (n_old as f64 + 1.0))
            .clamp(1e-6, 1.0 - 1e-6);
        if points
            .iter()
            .all(|p| model.distance(p, &max_point) >= 1e-8)
        {
            points.push(max_point);
            weights.iter_mut().for_each(|w| {
                *w = (*w - alpha / n_old as f64).max(0.0);
            });
            weights.push(alpha);
        } else {
            // The maximum sits on an existing support; bump its weight.
            let nearest = (0..n_old)
                .min_by(|&a, &b| {
                    model
                        .distance(&points[a], &max_point)
                        .partial_cmp(&model.distance(&points[b], &max_point))
                        .unwrap()
                })
                .unwrap();
            weights[nearest] += alpha;
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);

        // Merge near-duplicate supports to keep the simplex well posed.
        let mut merged_points: Vec<M::Point> = Vec::new();
        let mut merged_weights: Vec<f64> = Vec::new();
        for (p, w) in points.iter().zip(&weights) {
            if let Some(k) = merged_points
                .iter()
                .position(|q| model.distance(q, p) < 1e-6)
            {
                merged_weights[k] += w;
            } else {
                merged_points.push(p.clone());
                merged_weights.push(*w);
            }
        }
        points = merged_points;
        weights = merged_weights;
    }

    best.ok_or_else(|| "no iteration completed".to_string())
}

/// Derivative-free pattern search for a single support location, accepting
/// only moves that increase the Bayes risk (weights held fixed).
fn improve_location<M: StatModel>(
    model: &M,
    points: &[M::Point],
    weights: &[f64],
    index: usize,
    initial_step: f64,
    current_value: f64,
) -> Option<M::Point> {
    let value_of = |candidate: &M::Point| -> f64 {
        let mut trial: Vec<M::Point> = points.to_vec();
        trial[index] = candidate.clone();
        let sup = SupportSet::new(model, trial);
        let entries = sup.bayes_entries(weights);
        let risks = sup.support_risks(&entries);
        weighted_sum(weights, &risks)
    };

    let mut best_point: Option<M::Point> = None;
    let mut best_value = current_value;
    let mut center = points[index].clone();
    let mut step = initial_step;
    for _ in 0..4 {
        let mut improved_at_step = false;
        for cand in model.stencil(&center, step) {
            let v = value_of(&cand);
            if v > best_value + 1e-14 {
                best_value = v;
                center = cand.clone();
                best_point = Some(cand);
                improved_at_step = true;
            }
        }
        if !improved_at_step {
            step *= 0.25;
        }
    }
    best_point
}

// ---------------------------------------------------------------------------
// Quantum-facing API.
// ---------------------------------------------------------------------------

/// Hyperparameters shared by both solvers. `None` fields fall back to the
/// documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LfpConfig {
    /// Relative certificate gap at which a run counts as converged.
    pub tol: f64,
    /// Supports below this weight are pruned (Monte Carlo only).
    pub weight_tol: f64,
    /// Weight given to a freshly added support (deterministic solver);
    /// default `1 / (support count + 1)`.
    pub mixing_alpha: Option<f64>,
    /// New samples per surviving support at each Monte Carlo expansion.
    pub m_per_point: usize,
    /// Resampling scale; default `0.5 / sqrt(N)`.
    pub sigma: Option<f64>,
    /// Initial support count for the Monte Carlo solver.
    pub n_init: usize,
    pub seed: u64,
    pub max_outer: usize,
    /// Relative optimality gap for the inner weight solver.
    pub weight_rel_tol: f64,
    pub max_weight_iters: usize,
    /// Location-search sweeps per outer iteration (deterministic solver).
    pub location_rounds: usize,
    #[serde(skip, default)]
    pub search: SearchConfig,
}

impl Default for LfpConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            weight_tol: 1e-4,
            mixing_alpha: None,
            m_per_point: 5,
            sigma: None,
            n_init: 100,
            seed: 0,
            max_outer: 80,
            weight_rel_tol: 1e-6,
            max_weight_iters: 4000,
            location_rounds: 2,
            search: SearchConfig::default(),
        }
    }
}

impl LfpConfig {
    fn generic(&self, design: &ExperimentDesign) -> GenericConfig {
        let n = design.total_shots() as f64;
        GenericConfig {
            tol: self.tol,
            weight_tol: self.weight_tol,
            mixing_alpha: self.mixing_alpha,
            m_per_point: self.m_per_point,
            sigma: self.sigma.unwrap_or(0.5 / n.sqrt()),
            n_init: self.n_init,
            seed: self.seed,
            max_outer: self.max_outer,
            weight_rel_tol: self.weight_rel_tol,
            max_weight_iters: self.max_weight_iters,
            location_rounds: self.location_rounds,
            location_step: 0.5 / n.sqrt(),
            search: self.search.clone(),
        }
    }
}

/// Weight-only maximization of the Bayes risk for a fixed support list.
pub struct WeightSolution {
    pub prior: DiscretePrior,
    pub av_risk: f64,
    pub converged: bool,
}

pub fn maximize_weights(
    supports: &[BlochState],
    design: &ExperimentDesign,
    init_weights: Option<&[f64]>,
) -> Result<WeightSolution, LfpError> {
    if supports.is_empty() {
        return Err(PriorError::Empty.into());
    }
    let model = QuantumModel::new(design);
    let points: Vec<Vec3> = supports.iter().map(|s| *s.vec3()).collect();
    let sup = SupportSet::new(&model, points);
    let uniform = vec![1.0 / supports.len() as f64; supports.len()];
    let init = init_weights.unwrap_or(&uniform);
    if init.len() != supports.len() {
        return Err(PriorError::LengthMismatch {
            supports: supports.len(),
            weights: init.len(),
        }
        .into());
    }
    let outcome = maximize_weights_model(&sup, init, 1e-6, 4000);
    let prior = DiscretePrior::new(supports.to_vec(), normalize(&outcome.weights))?;
    Ok(WeightSolution {
        prior,
        av_risk: outcome.av_risk,
        converged: outcome.converged,
    })
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    w.iter().map(|&x| x / total).collect()
}

fn package_result(
    design: &ExperimentDesign,
    raw: ModelLfp<Vec3>,
    algorithm: &str,
    tol: f64,
    started: Instant,
) -> Result<LfpResult, LfpError> {
    let kind = design.kind();
    let supports: Vec<BlochState> = raw
        .points
        .iter()
        .map(|r| BlochState::from_vec3_unchecked(kind, *r))
        .collect();
    let prior = DiscretePrior::new(supports, normalize(&raw.weights))?;
    let estimator = TabulatedEstimator::from_raw_entries(
        design.clone(),
        raw.entries,
        false,
        format!(
            "bayes estimator of {} prior ({} supports, tol {:.1e})",
            algorithm,
            prior.len(),
            tol
        ),
    )
    .map_err(|e| LfpError::InnerSolverFailure(e.to_string()))?;
    let gap = relative_gap(raw.av_risk, raw.max_risk);
    let result = LfpResult {
        prior,
        estimator,
        av_risk: raw.av_risk,
        max_risk: raw.max_risk,
        gap,
        iterations: raw.iterations,
        wall_time_s: started.elapsed().as_secs_f64(),
        algorithm: algorithm.to_string(),
        converged: raw.converged,
    };
    if result.av_risk > result.max_risk + 1e-9 {
        return Err(LfpError::InnerSolverFailure(format!(
            "certificate inverted: av {} > max {}",
            result.av_risk, result.max_risk
        )));
    }
    if !result.converged {
        return Err(LfpError::IterationLimit {
            gap,
            best: Box::new(result),
        });
    }
    Ok(result)
}

/// Default deterministic initial prior: the maximally mixed state plus the
/// axis-aligned pure states.
pub fn default_init_prior(design: &ExperimentDesign) -> DiscretePrior {
    let kind = design.kind();
    let mut supports = vec![BlochState::maximally_mixed(kind)];
    for axis in design.axes() {
        let v = axis.vec();
        supports.push(BlochState::from_vec3_unchecked(kind, *v));
        supports.push(BlochState::from_vec3_unchecked(kind, [-v[0], -v[1], -v[2]]));
    }
    DiscretePrior::uniform(supports).expect("default init prior is valid")
}

/// Deterministic (support-growing) least-favorable-prior solver.
pub fn kempthorne_lfp(
    design: &ExperimentDesign,
    init_prior: Option<&DiscretePrior>,
    config: &LfpConfig,
) -> Result<LfpResult, LfpError> {
    let started = Instant::now();
    design.dataset_count()?;
    let default_prior;
    let prior = match init_prior {
        Some(p) => p,
        None => {
            default_prior = default_init_prior(design);
            &default_prior
        }
    };
    let model = QuantumModel::new(design);
    let points: Vec<Vec3> = prior.supports().iter().map(|s| *s.vec3()).collect();
    let raw = kempthorne_lfp_model(
        &model,
        points,
        prior.weights().to_vec(),
        &config.generic(design),
    )
    .map_err(LfpError::InnerSolverFailure)?;
    package_result(design, raw, "kempthorne", config.tol, started)
}

/// Monte Carlo least-favorable-prior solver. Deterministic for a fixed seed.
pub fn mc_lfp(design: &ExperimentDesign, config: &LfpConfig) -> Result<LfpResult, LfpError> {
    mc_lfp_impl(design, config, None)
}

/// Monte Carlo solver resumed from the support set of a previous run.
pub fn mc_lfp_resumed(
    design: &ExperimentDesign,
    config: &LfpConfig,
    init: &DiscretePrior,
) -> Result<LfpResult, LfpError> {
    mc_lfp_impl(design, config, Some(init))
}

fn mc_lfp_impl(
    design: &ExperimentDesign,
    config: &LfpConfig,
    init: Option<&DiscretePrior>,
) -> Result<LfpResult, LfpError> {
    let started = Instant::now();
    design.dataset_count()?;
    let model = QuantumModel::new(design);
    let init_points = init.map(|p| p.supports().iter().map(|s| *s.vec3()).collect());
    let raw = mc_lfp_model(&model, &config.generic(design), init_points)
        .map_err(LfpError::InnerSolverFailure)?;
    package_result(design, raw, "mc", config.tol, started)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk;

    #[test]
    fn prior_invariants() {
        let a = BlochState::rebit(0.1, 0.0).unwrap();
        let b = BlochState::rebit(-0.4, 0.3).unwrap();
        assert!(DiscretePrior::new(vec![a, b], vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            DiscretePrior::new(vec![a, b], vec![0.6, 0.5]),
            Err(PriorError::WeightSum(_))
        ));
        assert!(matches!(
            DiscretePrior::new(vec![a, a], vec![0.5, 0.5]),
            Err(PriorError::DuplicateSupport(0, 1))
        ));
        assert!(matches!(
            DiscretePrior::new(vec![], vec![]),
            Err(PriorError::Empty)
        ));
    }

    #[test]
    fn single_support_weight_maximization() {
        let design = ExperimentDesign::rebit_default(2);
        let s = BlochState::rebit(0.3, 0.1).unwrap();
        let sol = maximize_weights(&[s], &design, None).unwrap();
        assert!((sol.prior.weights()[0] - 1.0).abs() < 1e-15);
        assert!(sol.av_risk.abs() < 1e-9, "point prior Bayes risk {}", sol.av_risk);
    }

    #[test]
    fn symmetric_supports_get_equal_weights() {
        let design = ExperimentDesign::rebit_default(2);
        let a = BlochState::rebit(0.6, 0.0).unwrap();
        let b = BlochState::rebit(-0.6, 0.0).unwrap();
        let sol = maximize_weights(&[a, b], &design, Some(&[0.9, 0.1])).unwrap();
        assert!(sol.converged);
        assert!(
            (sol.prior.weights()[0] - 0.5).abs() < 1e-3,
            "weights {:?}",
            sol.prior.weights()
        );
    }

    #[test]
    fn weight_solver_certificate_matches_risk_module() {
        let design = ExperimentDesign::rebit_default(2);
        let supports = vec![
            BlochState::rebit(0.9, 0.0).unwrap(),
            BlochState::rebit(0.0, 0.9).unwrap(),
            BlochState::rebit(-0.5, -0.5).unwrap(),
        ];
        let sol = maximize_weights(&supports, &design, None).unwrap();
        let table =
            TabulatedEstimator::bayes(&design, &sol.prior, "weight solver check").unwrap();
        let direct = risk::bayes_risk(&sol.prior, &table).unwrap();
        assert!(
            (direct - sol.av_risk).abs() < 1e-8,
            "direct {direct} vs solver {}",
            sol.av_risk
        );
    }

    #[test]
    fn trivial_tolerance_returns_after_one_loop() {
        let design = ExperimentDesign::rebit_default(1);
        let config = LfpConfig {
            tol: f64::INFINITY,
            ..Default::default()
        };
        let result = kempthorne_lfp(&design, None, &config).unwrap();
        assert_eq!(result.iterations, 1);
        assert!(result.av_risk <= result.max_risk + 1e-9);
        let (lower, upper) = minimax_certificate(&result);
        assert!(lower <= upper + 1e-9);
    }

    #[test]
    fn small_rebit_certificates_agree_across_algorithms() {
        let design = ExperimentDesign::rebit_default(1); // N = 2
        let config = LfpConfig {
            tol: 5e-3,
            n_init: 40,
            seed: 7,
            ..Default::default()
        };
        let det = kempthorne_lfp(&design, None, &config).unwrap();
        let mc = mc_lfp(&design, &config).unwrap();
        assert!(det.converged && mc.converged);
        assert!(det.av_risk <= det.max_risk + 1e-9);
        assert!(mc.av_risk <= mc.max_risk + 1e-9);
        let mid_det = 0.5 * (det.av_risk + det.max_risk);
        let mid_mc = 0.5 * (mc.av_risk + mc.max_risk);
        assert!(
            (mid_det - mid_mc).abs() / mid_det < 0.02,
            "midpoints {mid_det} vs {mid_mc}"
        );
    }

    #[test]
    fn mc_without_pruning_grows_supports() {
        let design = ExperimentDesign::rebit_default(1);
        let config = LfpConfig {
            tol: 1e-9, // force at least one expansion
            weight_tol: 0.0,
            n_init: 10,
            m_per_point: 2,
            max_outer: 2,
            seed: 3,
            max_weight_iters: 200,
            ..Default::default()
        };
        match mc_lfp(&design, &config) {
            // Without pruning every support survives, so the support count
            // never shrinks below the initial draw.
            Ok(r) => assert!(r.prior.len() >= 10),
            Err(LfpError::IterationLimit { best, .. }) => assert!(best.prior.len() >= 10),
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
