//! Two-level quantum states as Bloch vectors: relative entropy in closed
//! form, determinant/spectrum utilities, and Hilbert-Schmidt-uniform
//! sampling.
//!
//! A rebit state lives in the unit disk (components `⟨σx⟩, ⟨σy⟩`), a qubit
//! state in the unit ball. All entropies are in nats. Infinite relative
//! entropy is returned as `f64::INFINITY` and is propagated, not thrown, so
//! that estimators with infinite risk are a reportable result.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::vec3::{self, Vec3};

/// Numerical slack on the physicality constraint `|r| <= 1`.
pub const EPS_PHYS: f64 = 1e-12;

/// Overlap weights below this are treated as exact zeros when they multiply
/// a log of a vanishing eigenvalue (the `0 log 0 = 0` convention). A few ulps
/// of the overlap computation `(1 - c)/2` for unit vectors.
const OVERLAP_ZERO: f64 = 4e-16;

/// State-space flavor: real-amplitude two-level system (unit disk) or full
/// qubit (unit ball).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Rebit,
    Qubit,
}

impl Kind {
    /// Number of Bloch components.
    pub fn dim(self) -> usize {
        match self {
            Kind::Rebit => 2,
            Kind::Qubit => 3,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("kind mismatch: {0:?} vs {1:?}")]
    KindMismatch(Kind, Kind),
    #[error("unphysical argument: |r| = {0} exceeds 1 + eps")]
    UnphysicalArgument(f64),
    #[error("bloch vector must have {expected} components, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("bloch component is not finite")]
    NotFinite,
}

/// A physical two-level state `rho = (1 + r . sigma)/2` stored by its Bloch
/// vector. `|r| <= 1 + EPS_PHYS` is enforced at construction; norms inside
/// the slack band are clamped to 1 before any entropy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochState {
    kind: Kind,
    r: Vec3,
}

/// A point produced by linear inversion that lies outside the physical
/// state space (`|r| > 1`). It carries no entropy semantics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnphysicalPoint {
    pub kind: Kind,
    pub r: Vec3,
}

/// Outcome of an estimator that is allowed to leave the physical set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimate {
    Physical(BlochState),
    Unphysical(UnphysicalPoint),
}

impl Estimate {
    pub fn kind(&self) -> Kind {
        match self {
            Estimate::Physical(s) => s.kind(),
            Estimate::Unphysical(u) => u.kind,
        }
    }

    pub fn bloch(&self) -> Vec3 {
        match self {
            Estimate::Physical(s) => s.r,
            Estimate::Unphysical(u) => u.r,
        }
    }

    pub fn as_physical(&self) -> Option<&BlochState> {
        match self {
            Estimate::Physical(s) => Some(s),
            Estimate::Unphysical(_) => None,
        }
    }
}

impl BlochState {
    /// Build a state from its Bloch components (length 2 for rebit, 3 for
    /// qubit). Rejects non-finite input and `|r| > 1 + EPS_PHYS`.
    pub fn new(kind: Kind, components: &[f64]) -> Result<Self, StateError> {
        if components.len() != kind.dim() {
            return Err(StateError::BadLength {
                expected: kind.dim(),
                got: components.len(),
            });
        }
        let mut r = [0.0; 3];
        r[..components.len()].copy_from_slice(components);
        if !r.iter().all(|x| x.is_finite()) {
            return Err(StateError::NotFinite);
        }
        let n = vec3::norm(&r);
        if n > 1.0 + EPS_PHYS {
            return Err(StateError::UnphysicalArgument(n));
        }
        Ok(Self { kind, r })
    }

    pub fn rebit(x: f64, y: f64) -> Result<Self, StateError> {
        Self::new(Kind::Rebit, &[x, y])
    }

    pub fn qubit(x: f64, y: f64, z: f64) -> Result<Self, StateError> {
        Self::new(Kind::Qubit, &[x, y, z])
    }

    /// The maximally mixed state `r = 0`.
    pub fn maximally_mixed(kind: Kind) -> Self {
        Self { kind, r: [0.0; 3] }
    }

    /// Internal constructor for vectors already known to satisfy the
    /// physicality bound (e.g. convex combinations, projected iterates).
    pub(crate) fn from_vec3_unchecked(kind: Kind, r: Vec3) -> Self {
        debug_assert!(vec3::norm(&r) <= 1.0 + 1e-9);
        Self { kind, r }
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Bloch components, `kind.dim()` entries.
    pub fn components(&self) -> &[f64] {
        &self.r[..self.kind.dim()]
    }

    pub(crate) fn vec3(&self) -> &Vec3 {
        &self.r
    }

    /// Euclidean norm of the Bloch vector (1 for pure states).
    pub fn radius(&self) -> f64 {
        vec3::norm(&self.r)
    }

    /// Eigenvalues of the density matrix, `((1+|r|)/2, (1-|r|)/2)`.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let n = self.radius().min(1.0);
        (0.5 * (1.0 + n), 0.5 * (1.0 - n))
    }

    /// Smaller eigenvalue of the density matrix, the spectrum parameter used
    /// by the noisy-coin reduction.
    pub fn minor_eigenvalue(&self) -> f64 {
        self.eigenvalues().1
    }

    pub fn is_pure(&self) -> bool {
        self.radius() >= 1.0 - EPS_PHYS
    }
}

/// Determinant of the density matrix, `(1 - |r|^2)/4 ∈ [0, 1/4]`.
pub fn determinant(rho: &BlochState) -> f64 {
    let n2 = vec3::dot(rho.vec3(), rho.vec3()).min(1.0);
    0.25 * (1.0 - n2)
}

#[inline]
fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `Tr rho log rho` from the spectrum (negative von Neumann entropy).
#[inline]
pub(crate) fn tr_rho_log_rho(norm_r: f64) -> f64 {
    let n = norm_r.min(1.0);
    xlnx(0.5 * (1.0 + n)) + xlnx(0.5 * (1.0 - n))
}

/// Closed-form quantum relative entropy on raw Bloch vectors, in nats.
///
/// Returns `+inf` when `sigma` has a vanishing eigenvalue whose eigenvector
/// is not orthogonal to the support of `rho`, and also when `sigma` is
/// unphysical (`|r| > 1 + EPS_PHYS`), which is the semantics risk sums need
/// for tables containing unphysical entries.
pub(crate) fn relative_entropy_vec(r_rho: &Vec3, r_sigma: &Vec3) -> f64 {
    let a = vec3::norm(r_rho);
    let b = vec3::norm(r_sigma);
    if b > 1.0 + EPS_PHYS {
        return f64::INFINITY;
    }
    let s_term = tr_rho_log_rho(a);

    let cross = if b == 0.0 {
        -std::f64::consts::LN_2
    } else {
        let b_eff = b.min(1.0);
        let mu_plus = 0.5 * (1.0 + b_eff);
        let mu_minus = 0.5 * (1.0 - b_eff);
        // Overlap of rho with sigma's eigenprojectors.
        let c = vec3::dot(r_rho, r_sigma) / b;
        let w_plus = (0.5 * (1.0 + c)).clamp(0.0, 1.0);
        let w_minus = (0.5 * (1.0 - c)).clamp(0.0, 1.0);
        if mu_minus <= 0.0 {
            if w_minus > OVERLAP_ZERO {
                return f64::INFINITY;
            }
            w_plus * mu_plus.ln()
        } else {
            w_plus * mu_plus.ln() + w_minus * mu_minus.ln()
        }
    };

    let d = s_term - cross;
    // The closed form is nonnegative in exact arithmetic; absorb roundoff.
    if d < 0.0 {
        debug_assert!(d > -1e-12, "relative entropy {d} below roundoff band");
        0.0
    } else {
        d
    }
}

/// Quantum relative entropy `D(rho || sigma)` in nats (Umegaki form for 2x2
/// density matrices, evaluated from the eigenstructure). May return `+inf`.
pub fn relative_entropy(rho: &BlochState, sigma: &BlochState) -> Result<f64, StateError> {
    if rho.kind != sigma.kind {
        return Err(StateError::KindMismatch(rho.kind, sigma.kind));
    }
    Ok(relative_entropy_vec(rho.vec3(), sigma.vec3()))
}

/// Draw `count` states from the Hilbert-Schmidt-uniform measure: uniform on
/// the unit ball for qubits, uniform on the unit disk for rebits.
/// Deterministic for a given seed.
pub fn sample_hs_uniform(kind: Kind, count: usize, seed: u64) -> Vec<BlochState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(sample_one(kind, &mut rng));
    }
    out
}

pub(crate) fn sample_one<R: Rng>(kind: Kind, rng: &mut R) -> BlochState {
    let r = match kind {
        Kind::Rebit => {
            let theta = std::f64::consts::TAU * rng.gen::<f64>();
            let radius = rng.gen::<f64>().sqrt();
            [radius * theta.cos(), radius * theta.sin(), 0.0]
        }
        Kind::Qubit => {
            let z = 2.0 * rng.gen::<f64>() - 1.0;
            let phi = std::f64::consts::TAU * rng.gen::<f64>();
            let radius = rng.gen::<f64>().cbrt();
            let s = (1.0 - z * z).max(0.0).sqrt();
            [radius * s * phi.cos(), radius * s * phi.sin(), radius * z]
        }
    };
    BlochState::from_vec3_unchecked(kind, r)
}

#[derive(Serialize, Deserialize)]
struct BlochStateRepr {
    kind: Kind,
    r: Vec<f64>,
}

impl Serialize for BlochState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        BlochStateRepr {
            kind: self.kind,
            r: self.components().to_vec(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for BlochState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = BlochStateRepr::deserialize(deserializer)?;
        BlochState::new(repr.kind, &repr.r).map_err(D::Error::custom)
    }
}
