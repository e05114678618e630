//! Atomic systems for `L`, exact and approximate `L`-duals.
//!
//! Coefficient maps live in stacked coordinates (`√w_ς`-scaled, see
//! [`gframe::synthesis_matrix`]) so Euclidean norms are direct-integral norms.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gframe::{self, check_compatible, BlockFamily, TargetOperator};
use crate::harness::io::{ser_extended, ser_matrix};
use crate::linalg::{self, pseudo_inverse, Matrix, PencilPlan, Tolerances};
use crate::measure::Partition;
use crate::weaving::{at_least, at_most, strategy_partitions, woven_bounds, Strategy};

#[derive(Debug, Clone, Serialize)]
pub struct AtomicCertificate {
    pub valid: bool,
    /// `σ_max(T⁺L)`; meaningful only when `valid`.
    pub alpha_star: f64,
    pub range_defect: f64,
    /// `f ↦ T⁺Lf` in stacked coordinates.
    #[serde(serialize_with = "ser_matrix")]
    pub coefficient_map: Matrix,
}

fn relative_defect(synthesis: &Matrix, pinv: &Matrix, target: &Matrix) -> f64 {
    let residual = target - synthesis * (pinv * target);
    linalg::op_norm(&residual) / linalg::op_norm(target).max(f64::MIN_POSITIVE)
}

/// Minimal-norm coefficient certificate for `Lf = ∫ χ_ς* w_ς dμ`.
pub fn atomic_certificate(chi: &BlockFamily, target: &TargetOperator, tol: &Tolerances) -> Result<AtomicCertificate> {
    target.check_dim(chi.dim())?;
    let synthesis = gframe::synthesis_matrix(chi).adjoint();
    let pinv = pseudo_inverse(&synthesis, tol.rank);
    let range_defect = relative_defect(&synthesis, &pinv, target.matrix());
    let coefficient_map = &pinv * target.matrix();
    Ok(AtomicCertificate {
        valid: range_defect <= tol.kernel,
        alpha_star: linalg::sigma_max(&coefficient_map),
        range_defect,
        coefficient_map,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WovenAtomicReport {
    pub alpha1_star: f64,
    pub alpha2_star: f64,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub actual_lower: f64,
    pub worst_defect: f64,
    pub strategy: Strategy,
    pub vacuous: bool,
    pub holds: bool,
}

/// Rows of the combined stack that belong to `χ` (those in `J`) and to `ξ`.
fn split_rows(dims: &[usize], j: &Partition) -> (Vec<usize>, Vec<usize>) {
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    let mut at = 0;
    for (i, &d) in dims.iter().enumerate() {
        let side = if j.contains(i) { &mut inside } else { &mut outside };
        side.extend(at..at + d);
        at += d;
    }
    (inside, outside)
}

fn combined_stack(chi: &BlockFamily, xi: &BlockFamily, j: &Partition) -> Matrix {
    let rows: usize = chi.block_dims().iter().sum();
    let mut out = Matrix::zeros(rows, chi.dim());
    let mut at = 0;
    for i in 0..chi.len() {
        let b = if j.contains(i) { chi.block(i) } else { xi.block(i) };
        let s = linalg::c64(chi.weight(i).sqrt(), 0.0);
        out.view_mut((at, 0), (b.nrows(), chi.dim())).copy_from(&(b * s));
        at += b.nrows();
    }
    out
}

/// Uniform atomic constants of the woven system and the lower weaving bound
/// `1/(α₁+α₂)²` they imply.
pub fn woven_atomic_certificate(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<WovenAtomicReport> {
    check_compatible(chi, xi)?;
    target.check_dim(chi.dim())?;
    let dims = chi.block_dims();
    let per_partition = |j: &Partition| -> (f64, f64, f64) {
        let synthesis = combined_stack(chi, xi, j).adjoint();
        let pinv = pseudo_inverse(&synthesis, tol.rank);
        let defect = relative_defect(&synthesis, &pinv, target.matrix());
        let coeff = pinv * target.matrix();
        let (inside, outside) = split_rows(&dims, j);
        let a1 = linalg::sigma_max(&coeff.select_rows(inside.iter()));
        let a2 = linalg::sigma_max(&coeff.select_rows(outside.iter()));
        (a1, a2, defect)
    };
    let partitions = strategy_partitions(chi.space(), strategy, None)?;
    let values: Vec<(f64, f64, f64)> = partitions.par_iter().map(per_partition).collect();

    let mut alpha1_star: f64 = 0.0;
    let mut alpha2_star: f64 = 0.0;
    let mut worst_defect: (f64, usize) = (0.0, 0);
    for (k, &(a1, a2, defect)) in values.iter().enumerate() {
        alpha1_star = alpha1_star.max(a1);
        alpha2_star = alpha2_star.max(a2);
        if defect > worst_defect.0 {
            worst_defect = (defect, k);
        }
    }
    if worst_defect.0 > tol.kernel {
        return Err(Error::AtomicDefect { partition: partitions[worst_defect.1].to_string(), defect: worst_defect.0 });
    }
    let sum = alpha1_star + alpha2_star;
    let predicted_lower = if sum > 0.0 { 1.0 / (sum * sum) } else { f64::INFINITY };
    let actual = woven_bounds(chi, xi, target, strategy, tol)?;
    let vacuous = predicted_lower.is_infinite();
    Ok(WovenAtomicReport {
        alpha1_star,
        alpha2_star,
        predicted_lower,
        actual_lower: actual.universal_lower,
        worst_defect: worst_defect.0,
        strategy,
        vacuous,
        holds: vacuous || at_least(actual.universal_lower, predicted_lower, tol.check),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualReport {
    #[serde(serialize_with = "ser_extended")]
    pub t_star: f64,
    pub kernel_ok: bool,
    pub is_exact: bool,
    pub is_approximate: bool,
    /// `Σ w ξ_ς*χ_ς`.
    #[serde(serialize_with = "ser_matrix")]
    pub mixed_operator: Matrix,
}

/// Smallest `t` with `‖Lf − Mf‖ ≤ t‖Lf‖`, `M = Σ w ξ_ς*χ_ς`.
pub fn approx_dual_ratio(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    tol: &Tolerances,
) -> Result<DualReport> {
    check_compatible(chi, xi)?;
    target.check_dim(chi.dim())?;
    let mixed = gframe::mixed_frame_operator(xi, chi, None)?;
    let l = target.matrix();
    let residual = l - &mixed;
    let scale = linalg::op_norm(l).max(linalg::op_norm(&mixed)).max(f64::MIN_POSITIVE);
    let gram = target.inner_gram();
    let kernel_projector = Matrix::identity(l.ncols(), l.ncols()) - pseudo_inverse(&gram, tol.rank) * &gram;
    let kernel_ok = linalg::op_norm(&(&residual * kernel_projector)) <= tol.kernel * scale;
    let t_star = if kernel_ok {
        let plan = PencilPlan::new(&gram, tol)?;
        plan.sup_schur(&(residual.adjoint() * &residual))?.0.sqrt()
    } else {
        f64::INFINITY
    };
    Ok(DualReport {
        t_star,
        kernel_ok,
        is_exact: t_star <= tol.check,
        is_approximate: t_star < 1.0,
        mixed_operator: mixed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactDual {
    #[serde(skip)]
    pub dual: BlockFamily,
    pub t_star: f64,
    pub residual: f64,
}

/// Largest tolerated relative residual of the constructed dual identity.
pub const DUAL_RESIDUAL_TOL: f64 = 1e-9;

/// From an approximate `L`-dual `ξ` of `χ` build the exact one
/// `{ξ_ς U*}` with `U = L M⁺`.
pub fn construct_exact_dual(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    tol: &Tolerances,
) -> Result<ExactDual> {
    let report = approx_dual_ratio(chi, xi, target, tol)?;
    if report.t_star >= 1.0 || report.t_star.is_nan() {
        return Err(Error::NotApproximateDual { t: report.t_star });
    }
    let l = target.matrix();
    let u = l * pseudo_inverse(&report.mixed_operator, tol.rank);
    let u_adj = u.adjoint();
    let dual = xi.map_blocks(|_, b| b * &u_adj)?;
    let rebuilt = gframe::mixed_frame_operator(&dual, chi, None)?;
    let residual = linalg::op_norm(&(rebuilt - l)) / linalg::op_norm(l).max(f64::MIN_POSITIVE);
    if residual > DUAL_RESIDUAL_TOL {
        return Err(Error::ResidualTooLarge { residual });
    }
    Ok(ExactDual { dual, t_star: report.t_star, residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualPerturbationReport {
    /// Optimal `G` with `(∫‖(χ_ς−ξ_ς)f‖²dμ)^{1/2} ≤ G‖Lf‖`.
    #[serde(serialize_with = "ser_extended")]
    pub g_star: f64,
    /// Bessel bound of the dual family.
    pub bessel_dual: f64,
    pub t: f64,
    #[serde(serialize_with = "ser_extended")]
    pub t_prime_predicted: f64,
    /// `t + √D·G`, the bound the triangle inequality actually yields.
    #[serde(serialize_with = "ser_extended")]
    pub t_prime_corrected: f64,
    #[serde(serialize_with = "ser_extended")]
    pub t_prime_actual: f64,
    /// `√(D·G) < 1 − t`.
    pub applicable: bool,
    pub holds: Option<bool>,
    pub corrected_holds: bool,
}

/// Stability of the approximate-dual constant when `χ` is replaced by `ξ`
/// while the dual `φ` is kept.
pub fn dual_perturbation_bound(
    chi: &BlockFamily,
    xi: &BlockFamily,
    phi: &BlockFamily,
    target: &TargetOperator,
    tol: &Tolerances,
) -> Result<DualPerturbationReport> {
    check_compatible(chi, xi)?;
    check_compatible(chi, phi)?;
    target.check_dim(chi.dim())?;
    let t = approx_dual_ratio(chi, phi, target, tol)?.t_star;
    if t >= 1.0 || t.is_nan() {
        return Err(Error::NotApproximateDual { t });
    }
    let bessel_dual = gframe::bessel_bound(phi)?;
    let spread = gframe::frame_operator(&chi.difference(xi)?, None)?;
    let g_star = PencilPlan::new(&target.inner_gram(), tol)?.sup_schur(&spread)?.0.sqrt();
    let t_prime_actual = approx_dual_ratio(xi, phi, target, tol)?.t_star;
    let t_prime_predicted = t + (bessel_dual * g_star).sqrt();
    let t_prime_corrected = t + bessel_dual.sqrt() * g_star;
    let applicable = (bessel_dual * g_star).sqrt() < 1.0 - t;
    Ok(DualPerturbationReport {
        g_star,
        bessel_dual,
        t,
        t_prime_predicted,
        t_prime_corrected,
        t_prime_actual,
        applicable,
        holds: applicable.then(|| at_most(t_prime_actual, t_prime_predicted, tol.check)),
        corrected_holds: at_most(t_prime_actual, t_prime_corrected, tol.check),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaReport {
    /// Largest `γ` with `‖S_{ξ,χ} f‖ ≥ γ‖L*f‖`.
    #[serde(serialize_with = "ser_extended")]
    pub gamma_star: f64,
    pub bessel_xi: f64,
    #[serde(serialize_with = "ser_extended")]
    pub implied_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub actual_lower: f64,
    pub vacuous: bool,
    pub holds: bool,
}

/// A lower `L`-g bound for `χ` from the mixed operator: `A_χ ≥ γ²/B_ξ`.
pub fn mixed_lower_bound(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    tol: &Tolerances,
) -> Result<GammaReport> {
    check_compatible(chi, xi)?;
    target.check_dim(chi.dim())?;
    let mixed = gframe::mixed_frame_operator(xi, chi, None)?;
    let plan = PencilPlan::new(&target.outer_gram(), tol)?;
    let gamma_star = plan.inf_schur(&(mixed.adjoint() * &mixed))?.0.sqrt();
    let bessel_xi = gframe::bessel_bound(xi)?;
    let implied_lower = if gamma_star.is_infinite() {
        f64::INFINITY
    } else if bessel_xi > 0.0 {
        gamma_star * gamma_star / bessel_xi
    } else {
        0.0
    };
    let actual_lower = plan.inf_schur(&gframe::frame_operator(chi, None)?)?.0;
    let vacuous = gamma_star.is_infinite();
    Ok(GammaReport {
        gamma_star,
        bessel_xi,
        implied_lower,
        actual_lower,
        vacuous,
        holds: vacuous || at_least(actual_lower, implied_lower, tol.check),
    })
}
