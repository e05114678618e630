//! Per-index relative perturbations `‖χ_ς f − ξ_ς f‖ ≤ α₁‖χ_ς f‖ + α₂‖ξ_ς f‖`
//! and the woven-bound windows they imply.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gframe::{check_compatible, BlockFamily};
use crate::harness::io::{ser_extended, ser_extended_vec};
use crate::linalg::{c64, eigh, Matrix, PencilPlan, Tolerances, Vector};
use crate::weaving::WovenReport;

/// Default number of random unit vectors tried per index.
pub const DEFAULT_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Decided by the exact one-sided constants.
    Exact,
    /// No violation among the sampled and spectral candidates.
    SampledVerified,
    /// A concrete violating `(ς, f)` was found.
    Falsified,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub index: usize,
    pub vector: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub alpha1: f64,
    pub alpha2: f64,
    pub verified: bool,
    pub verdict: Verdict,
    /// Largest `‖(χ_ς−ξ_ς)f‖ − α₁‖χ_ς f‖ − α₂‖ξ_ς f‖` over candidate unit `f`.
    pub worst_margin: f64,
    pub worst_witness: Option<Witness>,
    /// Exact smallest `α₁` per index when `α₂ = 0`.
    #[serde(serialize_with = "ser_extended_vec")]
    pub onesided_alpha1: Vec<f64>,
}

pub(crate) fn check_alpha(value: f64) -> Result<()> {
    if (0.0..1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::AlphaOutOfRange { value })
    }
}

/// `√ sup ‖Δf‖²/‖Bf‖²`, `+∞` when `Δ` does not vanish on `ker B`.
fn relative_constant(delta: &Matrix, base: &Matrix, tol: &Tolerances) -> Result<(f64, Vector)> {
    let plan = PencilPlan::new(&(base.adjoint() * base), tol)?;
    let (value, witness) = plan.sup_schur(&(delta.adjoint() * delta))?;
    Ok((value.sqrt(), witness))
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    let v = Vector::from_iterator(
        n,
        (0..n).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            c64(re, im)
        }),
    );
    let norm = v.norm();
    if norm > 0.0 {
        v / c64(norm, 0.0)
    } else {
        v
    }
}

struct IndexOutcome {
    onesided: f64,
    worst_margin: f64,
    worst_vector: Vector,
}

fn margin(delta: &Matrix, chi: &Matrix, xi: &Matrix, f: &Vector, alpha1: f64, alpha2: f64) -> f64 {
    (delta * f).norm() - alpha1 * (chi * f).norm() - alpha2 * (xi * f).norm()
}

fn index_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[allow(clippy::too_many_arguments)]
fn check_index(
    index: usize,
    chi: &Matrix,
    xi: &Matrix,
    alpha1: f64,
    alpha2: f64,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<IndexOutcome> {
    let n = chi.ncols();
    let delta = chi - xi;
    let (onesided, sup_witness) = relative_constant(&delta, chi, tol)?;
    let mut candidates = vec![sup_witness];
    for gram in [chi.adjoint() * chi, xi.adjoint() * xi, delta.adjoint() * &delta] {
        let spec = eigh(&gram);
        candidates.extend((0..n).map(|k| spec.vector(k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(index_seed(seed, index));
    candidates.extend((0..samples).map(|_| random_unit(&mut rng, n)));

    let mut best = (f64::NEG_INFINITY, Vector::zeros(n));
    for f in candidates {
        let m = margin(&delta, chi, xi, &f, alpha1, alpha2);
        if m > best.0 {
            best = (m, f);
        }
    }
    Ok(IndexOutcome { onesided, worst_margin: best.0, worst_vector: best.1 })
}

/// Check the claim that `ξ` is an `(α₁, α₂)`-perturbation of `χ`.
///
/// The claim is decided exactly when the one-sided constants already satisfy
/// it or when `α₂ = 0`; otherwise a seeded search over random and spectral
/// candidates can only falsify it.
pub fn perturbation_check(
    chi: &BlockFamily,
    xi: &BlockFamily,
    alpha1: f64,
    alpha2: f64,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<PerturbationReport> {
    check_alpha(alpha1)?;
    check_alpha(alpha2)?;
    check_compatible(chi, xi)?;
    let outcomes: Vec<IndexOutcome> = (0..chi.len())
        .into_par_iter()
        .map(|i| check_index(i, chi.block(i), xi.block(i), alpha1, alpha2, samples, seed, tol))
        .collect::<Result<_>>()?;

    let onesided_alpha1: Vec<f64> = outcomes.iter().map(|o| o.onesided).collect();
    let max_onesided = onesided_alpha1.iter().copied().fold(0.0, f64::max);
    let mut worst: Option<(usize, &IndexOutcome)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if worst.is_none_or(|(_, w)| o.worst_margin > w.worst_margin) {
            worst = Some((i, o));
        }
    }
    let worst_margin = worst.map_or(f64::NEG_INFINITY, |(_, o)| o.worst_margin);
    let scale = chi.blocks().iter().chain(xi.blocks()).map(crate::linalg::op_norm).fold(1.0, f64::max);
    let sampled_ok = worst_margin <= tol.check * scale;

    let onesided_ok = max_onesided <= alpha1 + tol.check;
    let (verified, verdict) = if onesided_ok {
        (true, Verdict::Exact)
    } else if alpha2 == 0.0 {
        (false, Verdict::Exact)
    } else if sampled_ok {
        (true, Verdict::SampledVerified)
    } else {
        (false, Verdict::Falsified)
    };
    Ok(PerturbationReport {
        alpha1,
        alpha2,
        verified,
        verdict,
        worst_margin,
        worst_witness: worst
            .map(|(index, o)| Witness { index, vector: crate::linalg::vector_to_pairs(&o.worst_vector) }),
        onesided_alpha1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatedBounds {
    pub lower_factor: f64,
    pub upper_factor: f64,
    #[serde(serialize_with = "ser_extended")]
    pub lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub upper: f64,
}

/// Window for the woven bounds of `(χ', ξ')` when `χ'` is a `pair1`- and
/// `ξ'` a `pair2`-perturbation of a woven `(χ, ξ)` with bounds `(lower, upper)`.
pub fn propagated_window(lower: f64, upper: f64, pair1: (f64, f64), pair2: (f64, f64)) -> Result<PropagatedBounds> {
    for v in [pair1.0, pair1.1, pair2.0, pair2.1] {
        check_alpha(v)?;
    }
    let shrink = |(a, b): (f64, f64)| ((1.0 - a) / (1.0 + b)).powi(2);
    let grow = |(a, b): (f64, f64)| ((1.0 + a) / (1.0 - b)).powi(2);
    let lower_factor = shrink(pair1).min(shrink(pair2));
    let upper_factor = grow(pair1).max(grow(pair2));
    Ok(PropagatedBounds { lower_factor, upper_factor, lower: lower_factor * lower, upper: upper_factor * upper })
}

pub fn propagate_woven_bounds(base: &WovenReport, pair1: (f64, f64), pair2: (f64, f64)) -> Result<PropagatedBounds> {
    propagated_window(base.universal_lower, base.universal_upper, pair1, pair2)
}

/// Smallest `m` with `‖χ_ς f − χ'_ς f‖ ≤ m·min{‖χ_ς f‖, ‖χ'_ς f‖}` for all
/// `ς` and `f`.
pub fn relative_gap_measure(chi: &BlockFamily, chi_p: &BlockFamily, tol: &Tolerances) -> Result<f64> {
    check_compatible(chi, chi_p)?;
    let per_index: Vec<f64> = (0..chi.len())
        .into_par_iter()
        .map(|i| {
            let (a, b) = (chi.block(i), chi_p.block(i));
            let delta = a - b;
            let first = relative_constant(&delta, a, tol)?.0;
            let second = relative_constant(&delta, b, tol)?.0;
            Ok(first.max(second))
        })
        .collect::<Result<_>>()?;
    Ok(per_index.into_iter().fold(0.0, f64::max))
}

/// Window implied by relative gaps `m_chi`, `m_xi`: each index satisfies
/// `‖χ_ς f‖/(1+m) ≤ ‖χ'_ς f‖ ≤ (1+m)‖χ_ς f‖`.
pub fn relative_gap_window(lower: f64, upper: f64, m_chi: f64, m_xi: f64) -> PropagatedBounds {
    let grow = (1.0 + m_chi.max(m_xi)).powi(2);
    PropagatedBounds { lower_factor: 1.0 / grow, upper_factor: grow, lower: lower / grow, upper: upper * grow }
}
