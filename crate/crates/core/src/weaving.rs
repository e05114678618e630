//! Partition-quantified bounds for pairs of families.
//!
//! For a subset `J` of indices the woven operator is
//! `S^J_χ + S^{Jᶜ}_ξ`; a pair is woven when the lower bound of that operator
//! against `LL*` stays positive uniformly over every `J`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gframe::{self, check_compatible, BlockFamily, TargetOperator};
use crate::harness::io::ser_extended;
use crate::linalg::{self, eigh, Matrix, PencilPlan, Tolerances, Vector};
use crate::measure::{self, sample_partitions, MeasureSpace, Partition, DEFAULT_ENUMERATION_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    Exhaustive { limit: usize },
    Sampled { count: usize, seed: u64 },
}

impl Default for Strategy {
    fn default() -> Self {
        Strategy::Exhaustive { limit: DEFAULT_ENUMERATION_LIMIT }
    }
}

impl Strategy {
    /// Exhaustive up to the default limit, otherwise a seeded sample.
    pub fn auto(n: usize, seed: u64) -> Self {
        if n <= DEFAULT_ENUMERATION_LIMIT {
            Strategy::default()
        } else {
            Strategy::Sampled { count: 4096, seed }
        }
    }

    pub fn is_estimate(&self) -> bool {
        matches!(self, Strategy::Sampled { .. })
    }
}

/// The partitions a strategy visits. `descent` scores a partition (lower is
/// worse) and drives the local search in sampled mode.
pub fn strategy_partitions(
    space: &MeasureSpace,
    strategy: Strategy,
    descent: Option<&(dyn Fn(&Partition) -> f64 + Sync)>,
) -> Result<Vec<Partition>> {
    match strategy {
        Strategy::Exhaustive { limit } => {
            let n = space.len();
            let count = measure::mask_count(n, limit)?;
            Ok((0..count).map(|m| Partition::from_mask(n, m)).collect())
        }
        Strategy::Sampled { count, seed } => {
            let eval = descent.map(|d| d as &dyn Fn(&Partition) -> f64);
            Ok(sample_partitions(space, count, seed, eval))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PartitionBound {
    pub partition: Partition,
    #[serde(serialize_with = "ser_extended")]
    pub lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WovenReport {
    #[serde(serialize_with = "ser_extended")]
    pub universal_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub universal_upper: f64,
    pub worst_lower_partition: Partition,
    pub worst_upper_partition: Partition,
    pub lower_witness: Vec<[f64; 2]>,
    /// Schur/bisection gap on the worst lower partition.
    pub lower_method_agreement: Option<f64>,
    pub strategy: Strategy,
    /// Sampled reports over-estimate the lower and under-estimate the upper
    /// bound.
    pub is_estimate: bool,
    pub partitions_scanned: usize,
    pub woven: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_partition_log: Option<Vec<PartitionBound>>,
}

/// Precomputed per-index Gram terms of a pair and the `LL*` split.
pub(crate) struct WeaveScan {
    dim: usize,
    chi_terms: Vec<Matrix>,
    xi_terms: Vec<Matrix>,
    plan: PencilPlan,
}

impl WeaveScan {
    pub(crate) fn new(chi: &BlockFamily, xi: &BlockFamily, target: &TargetOperator, tol: &Tolerances) -> Result<Self> {
        check_compatible(chi, xi)?;
        target.check_dim(chi.dim())?;
        Ok(WeaveScan {
            dim: chi.dim(),
            chi_terms: chi.gram_terms(),
            xi_terms: xi.gram_terms(),
            plan: PencilPlan::new(&target.outer_gram(), tol)?,
        })
    }

    pub(crate) fn operator(&self, j: &Partition) -> Matrix {
        let mut s = Matrix::zeros(self.dim, self.dim);
        for (i, (a, b)) in self.chi_terms.iter().zip(&self.xi_terms).enumerate() {
            s += if j.contains(i) { a } else { b };
        }
        s
    }

    fn lower(&self, j: &Partition) -> Result<(f64, Vector)> {
        self.plan.inf_schur(&self.operator(j))
    }

    fn bounds(&self, j: &Partition) -> Result<(f64, f64)> {
        let s = self.operator(j);
        let (lower, _) = self.plan.inf_schur(&s)?;
        Ok((lower, eigh(&s).max().max(0.0)))
    }
}

/// `S^J_χ + S^{Jᶜ}_ξ`.
pub fn partition_frame_operator(chi: &BlockFamily, xi: &BlockFamily, j: &Partition) -> Result<Matrix> {
    check_compatible(chi, xi)?;
    j.check_space(chi.space())?;
    Ok(gframe::frame_operator(chi, Some(j))? + gframe::frame_operator(xi, Some(&j.complement()))?)
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn woven_bounds(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<WovenReport> {
    woven_bounds_logged(chi, xi, target, strategy, tol, false)
}

/// Optimal universal bounds over the partitions of `strategy`; lower bounds
/// against `‖L*f‖²`, upper against `‖f‖²`.
pub fn woven_bounds_logged(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
    log: bool,
) -> Result<WovenReport> {
    let scan = WeaveScan::new(chi, xi, target, tol)?;
    let descent = |p: &Partition| scan.lower(p).map(|r| r.0).unwrap_or(f64::NEG_INFINITY);
    let partitions = strategy_partitions(chi.space(), strategy, Some(&descent))?;
    let results: Vec<(f64, f64)> = partitions.par_iter().map(|p| scan.bounds(p)).collect::<Result<_>>()?;

    let lo = argmin(results.iter().map(|r| r.0));
    let hi = argmax(results.iter().map(|r| r.1));
    let worst = scan.plan.inf(&scan.operator(&partitions[lo]))?;

    let per_partition_log = log.then(|| {
        let mut rows: Vec<PartitionBound> = partitions
            .iter()
            .zip(&results)
            .map(|(p, &(lower, upper))| PartitionBound { partition: p.clone(), lower, upper })
            .collect();
        rows.sort_by(|a, b| a.partition.cmp(&b.partition));
        rows
    });

    let universal_lower = results[lo].0;
    Ok(WovenReport {
        universal_lower,
        universal_upper: results[hi].1,
        worst_lower_partition: partitions[lo].clone(),
        worst_upper_partition: partitions[hi].clone(),
        lower_witness: worst.witness,
        lower_method_agreement: worst.method_agreement,
        strategy,
        is_estimate: strategy.is_estimate(),
        partitions_scanned: partitions.len(),
        woven: universal_lower.is_finite() && universal_lower > tol.frame,
        per_partition_log,
    })
}

/// `lhs ≥ rhs − tol·max(1, |rhs|)`, with infinities compared exactly.
pub(crate) fn at_least(lhs: f64, rhs: f64, tol: f64) -> bool {
    if rhs == f64::NEG_INFINITY || lhs == f64::INFINITY {
        return true;
    }
    if rhs == f64::INFINITY {
        return false;
    }
    lhs >= rhs - tol * rhs.abs().max(1.0)
}

pub(crate) fn at_most(lhs: f64, rhs: f64, tol: f64) -> bool {
    at_least(-lhs, -rhs, tol)
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossedReport {
    #[serde(serialize_with = "ser_extended")]
    pub gamma_star: f64,
    pub worst_partition: Partition,
    pub bessel_chi: f64,
    pub bessel_xi: f64,
    #[serde(serialize_with = "ser_extended")]
    pub implied_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub actual_lower: f64,
    pub vacuous: bool,
    pub holds: bool,
}

/// Lower weaving bound for `(χ', ξ')` implied by
/// `‖(S^J_{χ,χ'} + S^{Jᶜ}_{ξ,ξ'}) f‖ ≥ γ‖L*f‖`, namely `γ²/(√B_χ + √B_ξ)²`,
/// compared against the computed bound.
#[allow(clippy::too_many_arguments)]
pub fn crossed_lower_criterion(
    chi: &BlockFamily,
    chi_p: &BlockFamily,
    xi: &BlockFamily,
    xi_p: &BlockFamily,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<CrossedReport> {
    check_compatible(chi, chi_p)?;
    check_compatible(chi, xi)?;
    check_compatible(chi, xi_p)?;
    target.check_dim(chi.dim())?;
    let plan = PencilPlan::new(&target.outer_gram(), tol)?;
    let crossed = |j: &Partition| -> Result<Matrix> {
        Ok(gframe::mixed_frame_operator(chi, chi_p, Some(j))?
            + gframe::mixed_frame_operator(xi, xi_p, Some(&j.complement()))?)
    };
    let gamma_sq = |j: &Partition| -> Result<f64> {
        let m = crossed(j)?;
        Ok(plan.inf_schur(&(m.adjoint() * &m))?.0)
    };
    let descent = |p: &Partition| gamma_sq(p).unwrap_or(f64::NEG_INFINITY);
    let partitions = strategy_partitions(chi.space(), strategy, Some(&descent))?;
    let values: Vec<f64> = partitions.par_iter().map(gamma_sq).collect::<Result<_>>()?;
    let worst = argmin(values.iter().copied());
    let gamma_star = values[worst].sqrt();

    let bessel_chi = gframe::bessel_bound(chi)?;
    let bessel_xi = gframe::bessel_bound(xi)?;
    let denom = (bessel_chi.sqrt() + bessel_xi.sqrt()).powi(2);
    let implied_lower = if gamma_star.is_infinite() { f64::INFINITY } else { gamma_star * gamma_star / denom };
    let actual = woven_bounds(chi_p, xi_p, target, strategy, tol)?;
    Ok(CrossedReport {
        gamma_star,
        worst_partition: partitions[worst].clone(),
        bessel_chi,
        bessel_xi,
        implied_lower,
        actual_lower: actual.universal_lower,
        vacuous: gamma_star.is_infinite(),
        holds: gamma_star.is_infinite() || at_least(actual.universal_lower, implied_lower, tol.check),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectSumReport {
    #[serde(skip)]
    pub chi: BlockFamily,
    #[serde(skip)]
    pub xi: BlockFamily,
    #[serde(skip)]
    pub target: TargetOperator,
    #[serde(serialize_with = "ser_extended")]
    pub first_lower: f64,
    pub first_upper: f64,
    #[serde(serialize_with = "ser_extended")]
    pub second_lower: f64,
    pub second_upper: f64,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub computed: WovenReport,
    pub holds: bool,
}

fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

fn direct_sum_family(a: &BlockFamily, b: &BlockFamily) -> Result<BlockFamily> {
    let blocks = a.blocks().iter().zip(b.blocks()).map(|(x, y)| block_diag(x, y)).collect();
    BlockFamily::new(a.space().clone(), a.dim() + b.dim(), blocks)
}

fn check_same_measure(a: &MeasureSpace, b: &MeasureSpace) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SpaceMismatch);
    }
    for (index, (x, y)) in a.weights().iter().zip(b.weights()).enumerate() {
        if x != y {
            return Err(Error::WeightMismatch { index });
        }
    }
    Ok(())
}

/// Weave `{χ_ς ⊕ χ'_ς}` with `{ξ_ς ⊕ ξ'_ς}` on `ℋ ⊕ ℋ'` against `L ⊕ L'`;
/// the bounds are predicted to be `(min{A,A'}, max{B,B'})`.
#[allow(clippy::too_many_arguments)]
pub fn direct_sum_weave(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    chi_p: &BlockFamily,
    xi_p: &BlockFamily,
    target_p: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<DirectSumReport> {
    check_compatible(chi, xi)?;
    check_compatible(chi_p, xi_p)?;
    check_same_measure(chi.space(), chi_p.space())?;
    let first = woven_bounds(chi, xi, target, strategy, tol)?;
    let second = woven_bounds(chi_p, xi_p, target_p, strategy, tol)?;
    let sum_chi = direct_sum_family(chi, chi_p)?;
    let sum_xi = direct_sum_family(xi, xi_p)?;
    let sum_target = TargetOperator::new(block_diag(target.matrix(), target_p.matrix()))?;
    let computed = woven_bounds(&sum_chi, &sum_xi, &sum_target, strategy, tol)?;
    let predicted_lower = first.universal_lower.min(second.universal_lower);
    let predicted_upper = first.universal_upper.max(second.universal_upper);
    let holds = at_least(computed.universal_lower, predicted_lower, tol.check)
        && at_most(computed.universal_upper, predicted_upper, tol.check);
    Ok(DirectSumReport {
        chi: sum_chi,
        xi: sum_xi,
        target: sum_target,
        first_lower: first.universal_lower,
        first_upper: first.universal_upper,
        second_lower: second.universal_lower,
        second_upper: second.universal_upper,
        predicted_lower,
        predicted_upper,
        computed,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SumWeaveReport {
    #[serde(skip)]
    pub chi: BlockFamily,
    #[serde(skip)]
    pub xi: BlockFamily,
    /// Smallest cross-term margin over the scanned partitions.
    pub positivity_margin: f64,
    #[serde(serialize_with = "ser_extended")]
    pub lower_first: f64,
    #[serde(serialize_with = "ser_extended")]
    pub lower_second: f64,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    pub computed: WovenReport,
    pub holds: bool,
}

/// Weave `{χ_ς + χ'_ς}` with `{ξ_ς + ξ'_ς}` after checking that the cross
/// terms `S^J_{χ',χ} + S^J_{χ,χ'} + S^{Jᶜ}_{ξ',ξ} + S^{Jᶜ}_{ξ,ξ'}` are PSD on
/// every scanned partition. The summed lower bound is predicted to be at least
/// `A + A'`.
#[allow(clippy::too_many_arguments)]
pub fn sum_weave(
    chi: &BlockFamily,
    chi_p: &BlockFamily,
    xi: &BlockFamily,
    xi_p: &BlockFamily,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<SumWeaveReport> {
    check_compatible(chi, chi_p)?;
    check_compatible(chi, xi)?;
    check_compatible(chi, xi_p)?;
    target.check_dim(chi.dim())?;
    let scale = [chi, chi_p, xi, xi_p].iter().map(|f| gframe::bessel_bound(f)).sum::<Result<f64>>()?;
    let cross = |j: &Partition| -> Result<f64> {
        let jc = j.complement();
        let m = gframe::mixed_frame_operator(chi_p, chi, Some(j))?
            + gframe::mixed_frame_operator(chi, chi_p, Some(j))?
            + gframe::mixed_frame_operator(xi_p, xi, Some(&jc))?
            + gframe::mixed_frame_operator(xi, xi_p, Some(&jc))?;
        Ok(eigh(&m).min())
    };
    let descent = |p: &Partition| cross(p).unwrap_or(f64::NEG_INFINITY);
    let partitions = strategy_partitions(chi.space(), strategy, Some(&descent))?;
    let margins: Vec<f64> = partitions.par_iter().map(cross).collect::<Result<_>>()?;
    let worst = argmin(margins.iter().copied());
    let positivity_margin = margins[worst];
    if positivity_margin < -tol.psd * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::PositivityFailed { partition: partitions[worst].to_string(), margin: positivity_margin });
    }

    let first = woven_bounds(chi, xi, target, strategy, tol)?;
    let second = woven_bounds(chi_p, xi_p, target, strategy, tol)?;
    let sum_chi = chi.sum(chi_p)?;
    let sum_xi = xi.sum(xi_p)?;
    let computed = woven_bounds(&sum_chi, &sum_xi, target, strategy, tol)?;
    let predicted_lower = first.universal_lower + second.universal_lower;
    Ok(SumWeaveReport {
        chi: sum_chi,
        xi: sum_xi,
        positivity_margin,
        lower_first: first.universal_lower,
        lower_second: second.universal_lower,
        predicted_lower,
        holds: at_least(computed.universal_lower, predicted_lower, tol.check),
        computed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RemovalReport {
    /// Optimal `C` with `∫_J ‖χ_ς f‖² dμ ≤ C‖L*f‖²`.
    #[serde(serialize_with = "ser_extended")]
    pub c_star: f64,
    #[serde(serialize_with = "ser_extended")]
    pub base_lower: f64,
    pub base_upper: f64,
    pub applicable: bool,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    pub reduced: Option<WovenReport>,
    pub holds: Option<bool>,
}

/// Drop the indices in `J` from both families. When `C* < A_w` the remainder
/// is predicted to be `(A_w − C*, B_w)`-woven.
pub fn remove_subset(
    chi: &BlockFamily,
    xi: &BlockFamily,
    target: &TargetOperator,
    j: &Partition,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<RemovalReport> {
    check_compatible(chi, xi)?;
    j.check_space(chi.space())?;
    let base = woven_bounds(chi, xi, target, strategy, tol)?;
    let plan = PencilPlan::new(&target.outer_gram(), tol)?;
    let c_star = plan.sup(&gframe::frame_operator(chi, Some(j))?)?.value;
    let keep: Vec<usize> = j.complement().members().collect();
    let applicable =
        c_star.is_finite() && base.universal_lower.is_finite() && c_star < base.universal_lower && !keep.is_empty();
    let predicted_lower = base.universal_lower - c_star;
    let mut report = RemovalReport {
        c_star,
        base_lower: base.universal_lower,
        base_upper: base.universal_upper,
        applicable,
        predicted_lower,
        reduced: None,
        holds: None,
    };
    if applicable {
        let reduced = woven_bounds(&chi.restrict(&keep)?, &xi.restrict(&keep)?, target, strategy, tol)?;
        report.holds = Some(
            at_least(reduced.universal_lower, predicted_lower, tol.check)
                && at_most(reduced.universal_upper, base.universal_upper, tol.check),
        );
        report.reduced = Some(reduced);
    }
    Ok(report)
}

/// `K` on the ambient space plus per-index left factors for each family.
#[derive(Debug, Clone)]
pub struct OperatorTransform {
    outer: Matrix,
    left_chi: Vec<Matrix>,
    left_xi: Vec<Matrix>,
    alpha: f64,
    beta: f64,
}

impl OperatorTransform {
    /// `alpha` is recomputed as the smallest singular value over all left
    /// factors (both families) and `beta` as the largest.
    pub fn new(outer: Matrix, left_chi: Vec<Matrix>, left_xi: Vec<Matrix>) -> Result<Self> {
        linalg::check_square(&outer)?;
        if left_chi.len() != left_xi.len() {
            return Err(Error::DimensionMismatch {
                what: "left factor count",
                expected: left_chi.len(),
                found: left_xi.len(),
            });
        }
        let mut alpha = f64::INFINITY;
        let mut beta: f64 = 0.0;
        for k in left_chi.iter().chain(&left_xi) {
            linalg::check_square(k)?;
            alpha = alpha.min(linalg::sigma_min(k));
            beta = beta.max(linalg::sigma_max(k));
        }
        Ok(OperatorTransform { outer, left_chi, left_xi, alpha, beta })
    }

    /// Identity left factors matching `fam`'s block dimensions.
    pub fn outer_only(outer: Matrix, fam: &BlockFamily) -> Result<Self> {
        let ids: Vec<Matrix> = fam.block_dims().into_iter().map(|d| Matrix::identity(d, d)).collect();
        Self::new(outer, ids.clone(), ids)
    }

    pub fn outer(&self) -> &Matrix {
        &self.outer
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn apply(&self, fam: &BlockFamily, left: &[Matrix]) -> Result<BlockFamily> {
        if left.len() != fam.len() {
            return Err(Error::DimensionMismatch { what: "left factor count", expected: fam.len(), found: left.len() });
        }
        if self.outer.nrows() != fam.dim() {
            return Err(Error::DimensionMismatch {
                what: "outer operator",
                expected: fam.dim(),
                found: self.outer.nrows(),
            });
        }
        for (i, (k, b)) in left.iter().zip(fam.blocks()).enumerate() {
            if k.ncols() != b.nrows() {
                return Err(Error::BlockShapeMismatch { index: i, expected: (b.nrows(), b.nrows()), found: k.shape() });
            }
        }
        fam.map_blocks(|i, b| &left[i] * b * &self.outer)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformReport {
    #[serde(skip)]
    pub chi: BlockFamily,
    #[serde(skip)]
    pub xi: BlockFamily,
    pub alpha: f64,
    pub beta: f64,
    pub outer_norm: f64,
    #[serde(serialize_with = "ser_extended")]
    pub base_lower: f64,
    pub base_upper: f64,
    /// Bounds of the transformed pair relative to `K*L`.
    pub transformed: WovenReport,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub holds: bool,
    /// `KL* = L*K` and `σ_min(K) ≥ α`.
    pub commuting: bool,
    /// Lower bound of the transformed pair relative to `L` itself.
    #[serde(serialize_with = "ser_extended")]
    pub commuting_lower: f64,
    #[serde(serialize_with = "ser_extended")]
    pub commuting_predicted_lower: f64,
    pub commuting_holds: Option<bool>,
}

fn commutes_with_adjoint(k: &Matrix, l: &Matrix, tol: &Tolerances) -> bool {
    let gap = linalg::op_norm(&(k * l.adjoint() - l.adjoint() * k));
    gap <= tol.check * (linalg::op_norm(k) * linalg::op_norm(l)).max(f64::MIN_POSITIVE)
}

/// Transform `χ'_ς = K_ς χ_ς K`, `ξ'_ς = K'_ς ξ_ς K`. Against `K*L` the
/// transformed pair is predicted to have bounds `α²A_w` and `β²B_w‖K‖²`; when
/// `K` commutes with `L*` and `σ_min(K) ≥ α` the lower bound against `L` is
/// predicted to be at least `α⁴A_w`.
pub fn operator_transform_weave(
    chi: &BlockFamily,
    xi: &BlockFamily,
    transform: &OperatorTransform,
    target: &TargetOperator,
    strategy: Strategy,
    tol: &Tolerances,
) -> Result<TransformReport> {
    check_compatible(chi, xi)?;
    target.check_dim(chi.dim())?;
    let chi_t = transform.apply(chi, &transform.left_chi)?;
    let xi_t = transform.apply(xi, &transform.left_xi)?;
    let base = woven_bounds(chi, xi, target, strategy, tol)?;
    let shifted = TargetOperator::new(transform.outer.adjoint() * target.matrix())?;
    let transformed = woven_bounds(&chi_t, &xi_t, &shifted, strategy, tol)?;
    let outer_norm = linalg::op_norm(&transform.outer);
    let (alpha, beta) = (transform.alpha, transform.beta);
    let predicted_lower = alpha * alpha * base.universal_lower;
    let predicted_upper = beta * beta * base.universal_upper * outer_norm * outer_norm;
    let holds = at_least(transformed.universal_lower, predicted_lower, tol.check)
        && at_most(transformed.universal_upper, predicted_upper, tol.check);

    let commuting = commutes_with_adjoint(&transform.outer, target.matrix(), tol)
        && linalg::sigma_min(&transform.outer) >= alpha * (1.0 - tol.check);
    let commuting_predicted_lower = alpha.powi(4) * base.universal_lower;
    let (commuting_lower, commuting_holds) = if commuting {
        let rel_l = woven_bounds(&chi_t, &xi_t, target, strategy, tol)?;
        (rel_l.universal_lower, Some(at_least(rel_l.universal_lower, commuting_predicted_lower, tol.check)))
    } else {
        (f64::NAN, None)
    };
    Ok(TransformReport {
        chi: chi_t,
        xi: xi_t,
        alpha,
        beta,
        outer_norm,
        base_lower: base.universal_lower,
        base_upper: base.universal_upper,
        transformed,
        predicted_lower,
        predicted_upper,
        holds,
        commuting,
        commuting_lower,
        commuting_predicted_lower,
        commuting_holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleTransformReport {
    pub commuting: bool,
    #[serde(serialize_with = "ser_extended")]
    pub lower: f64,
    pub upper: f64,
    #[serde(serialize_with = "ser_extended")]
    pub predicted_lower: f64,
    pub predicted_upper: f64,
    pub holds: Option<bool>,
}

/// Single-family mode: `{χ_ς K}` for invertible `K` commuting with `L*` is
/// predicted to have L-g bounds in `[A/‖K⁻¹‖², B‖K‖²]`.
pub fn single_family_transform(
    chi: &BlockFamily,
    outer: &Matrix,
    target: &TargetOperator,
    tol: &Tolerances,
) -> Result<SingleTransformReport> {
    target.check_dim(chi.dim())?;
    linalg::check_square(outer)?;
    if outer.nrows() != chi.dim() {
        return Err(Error::DimensionMismatch { what: "outer operator", expected: chi.dim(), found: outer.nrows() });
    }
    let smin = linalg::sigma_min(outer);
    let smax = linalg::sigma_max(outer);
    if smin <= tol.rank * smax {
        return Err(Error::SingularK);
    }
    let base = gframe::lg_frame_bounds(chi, target, tol)?;
    let moved = chi.map_blocks(|_, b| b * outer)?;
    let bounds = gframe::lg_frame_bounds(&moved, target, tol)?;
    // ‖K⁻¹‖ = 1/σ_min(K).
    let predicted_lower = base.lower * smin * smin;
    let predicted_upper = base.upper * smax * smax;
    let commuting = commutes_with_adjoint(outer, target.matrix(), tol);
    let holds = commuting.then(|| {
        at_least(bounds.lower, predicted_lower, tol.check) && at_most(bounds.upper, predicted_upper, tol.check)
    });
    Ok(SingleTransformReport {
        commuting,
        lower: bounds.lower,
        upper: bounds.upper,
        predicted_lower,
        predicted_upper,
        holds,
    })
}

/// Scale every weight by `factor[ς] ≥ 1`; used to probe monotonicity.
pub fn inflate_weights(fam: &BlockFamily, factor: &[f64]) -> Result<BlockFamily> {
    let w: Vec<f64> = fam.space().weights().iter().zip(factor).map(|(w, f)| w * f).collect();
    fam.with_space(MeasureSpace::new(w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, identity, real_diag};
    use approx::assert_abs_diff_eq;

    fn rows(rs: &[&[f64]]) -> BlockFamily {
        let space = MeasureSpace::counting(rs.len()).unwrap();
        BlockFamily::from_rows(space, &rs.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn partition_operator_examples() {
        let chi = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let xi = rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let j = Partition::from_members(2, &[0]);
        let s = partition_frame_operator(&chi, &xi, &j).unwrap();
        assert_eq!(s, real_diag(&[2.0, 0.0]));
        let sc = gframe::frame_operator(&chi, None).unwrap();
        assert_eq!(partition_frame_operator(&chi, &xi, &Partition::full(2)).unwrap(), sc);
        let sx = gframe::frame_operator(&xi, None).unwrap();
        assert_eq!(partition_frame_operator(&chi, &xi, &Partition::empty(2)).unwrap(), sx);
        for m in 0..4 {
            let p = Partition::from_mask(2, m);
            assert_eq!(partition_frame_operator(&chi, &chi, &p).unwrap(), sc);
        }
    }

    #[test]
    fn woven_examples() {
        let chi = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let xi = rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let r = woven_bounds(&chi, &xi, &TargetOperator::identity(2), Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.universal_lower, 0.0, epsilon = 1e-12);
        assert!(!r.woven);
        assert_eq!(r.worst_lower_partition, Partition::from_members(2, &[0]));

        let r = woven_bounds(&chi, &chi, &TargetOperator::identity(2), Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.universal_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.universal_upper, 1.0, epsilon = 1e-12);
        assert!(r.woven);
    }

    #[test]
    fn self_weaving_collapses_to_lg_bounds() {
        let chi = rows(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 0.2]]);
        let l = TargetOperator::new(linalg::real_matrix(2, 2, &[1.0, 0.5, 0.0, 0.0])).unwrap();
        let r = woven_bounds(&chi, &chi, &l, Strategy::default(), &tol()).unwrap();
        let b = gframe::lg_frame_bounds(&chi, &l, &tol()).unwrap();
        assert_abs_diff_eq!(r.universal_lower, b.lower, epsilon = 1e-10);
        assert_abs_diff_eq!(r.universal_upper, b.upper, epsilon = 1e-10);
    }

    #[test]
    fn exhaustive_guard() {
        let space = MeasureSpace::counting(5).unwrap();
        let chi = BlockFamily::new(space, 1, vec![identity(1); 5]).unwrap();
        let e = woven_bounds(&chi, &chi, &TargetOperator::identity(1), Strategy::Exhaustive { limit: 3 }, &tol());
        assert!(matches!(e, Err(Error::TooManyIndices { .. })));
    }

    #[test]
    fn log_is_canonical() {
        let chi = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let xi = chi.scaled(1.1);
        let r = woven_bounds_logged(
            &chi,
            &xi,
            &TargetOperator::identity(2),
            Strategy::Sampled { count: 8, seed: 3 },
            &tol(),
            true,
        )
        .unwrap();
        let log = r.per_partition_log.unwrap();
        assert_eq!(log.len(), 8);
        assert!(log.windows(2).all(|w| w[0].partition < w[1].partition));
    }

    #[test]
    fn crossed_parseval() {
        let p = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r =
            crossed_lower_criterion(&p, &p, &p, &p, &TargetOperator::identity(2), Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.gamma_star, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.implied_lower, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.actual_lower, 1.0, epsilon = 1e-12);
        assert!(r.holds);

        let r = crossed_lower_criterion(&p, &p, &p, &p, &TargetOperator::zero(2), Strategy::default(), &tol()).unwrap();
        assert!(r.gamma_star.is_infinite() && r.vacuous && r.holds);
    }

    #[test]
    fn crossed_homogeneity() {
        let chi = rows(&[&[1.0, 0.3], &[0.2, 1.0], &[0.5, -0.4]]);
        let xi = chi.scaled(0.9);
        let base =
            crossed_lower_criterion(&chi, &chi, &xi, &xi, &TargetOperator::identity(2), Strategy::default(), &tol())
                .unwrap();
        let c = 1.7;
        let scaled = crossed_lower_criterion(
            &chi,
            &chi.scaled(c),
            &xi,
            &xi.scaled(c),
            &TargetOperator::identity(2),
            Strategy::default(),
            &tol(),
        )
        .unwrap();
        assert_abs_diff_eq!(scaled.gamma_star, c * base.gamma_star, epsilon = 1e-10);
        assert_abs_diff_eq!(scaled.implied_lower, c * c * base.implied_lower, epsilon = 1e-10);
    }

    #[test]
    fn direct_sum_examples() {
        let id = TargetOperator::identity(2);
        let p = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = direct_sum_weave(&p, &p, &id, &p, &p, &id, Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.predicted_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.computed.universal_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.computed.universal_upper, 1.0, epsilon = 1e-12);
        assert!(r.holds);

        // (1, 2) pair and (0.5, 3) pair give the (0.5, 3) prediction.
        let a = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        let b = BlockFamily::new(
            MeasureSpace::counting(3).unwrap(),
            1,
            vec![
                linalg::real_matrix(1, 1, &[0.5f64.sqrt()]),
                linalg::real_matrix(1, 1, &[1.5f64.sqrt()]),
                linalg::real_matrix(1, 1, &[1.0]),
            ],
        )
        .unwrap();
        let b_xi = BlockFamily::new(
            MeasureSpace::counting(3).unwrap(),
            1,
            vec![
                linalg::real_matrix(1, 1, &[0.5f64.sqrt()]),
                linalg::real_matrix(1, 1, &[1.5f64.sqrt()]),
                linalg::real_matrix(1, 1, &[1.0]),
            ],
        )
        .unwrap();
        let r = direct_sum_weave(&a, &a, &id, &b, &b_xi, &TargetOperator::identity(1), Strategy::default(), &tol())
            .unwrap();
        assert_abs_diff_eq!(r.first_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.first_upper, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.second_upper, 3.0, epsilon = 1e-12);
        // Self-weaving (0.5·1 + 1.5 + 1) = 3 on ℂ¹; its lower bound is 3 as well.
        assert_abs_diff_eq!(r.predicted_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.predicted_upper, 3.0, epsilon = 1e-12);
        assert!(r.holds);

        let w = BlockFamily::new(MeasureSpace::new(vec![1.0, 2.0]).unwrap(), 2, vec![identity(2); 2]).unwrap();
        assert!(matches!(
            direct_sum_weave(&p, &p, &id, &w, &w, &id, Strategy::default(), &tol()),
            Err(Error::WeightMismatch { index: 1 })
        ));
    }

    #[test]
    fn sum_weave_examples() {
        let id = TargetOperator::identity(2);
        let chi = rows(&[&[1.0, 0.2], &[0.1, 1.0], &[0.4, 0.4]]);
        let xi = chi.scaled(1.05);
        let base = woven_bounds(&chi, &xi, &id, Strategy::default(), &tol()).unwrap();
        let r = sum_weave(&chi, &chi, &xi, &xi, &id, Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.computed.universal_lower, 4.0 * base.universal_lower, epsilon = 1e-10);
        assert!(r.holds);

        let e = sum_weave(&chi, &chi.scaled(-1.0), &xi, &xi.scaled(-1.0), &id, Strategy::default(), &tol());
        assert!(matches!(e, Err(Error::PositivityFailed { .. })));

        let r = sum_weave(&chi, &chi.zeros_like(), &xi, &xi.zeros_like(), &id, Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.predicted_lower, base.universal_lower, epsilon = 1e-12);
        assert_abs_diff_eq!(r.computed.universal_lower, base.universal_lower, epsilon = 1e-10);
    }

    #[test]
    fn removal_examples() {
        let id = TargetOperator::identity(2);
        let fam = rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let r = remove_subset(&fam, &fam, &id, &Partition::from_members(4, &[0]), Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.base_lower, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.c_star, 1.0, epsilon = 1e-12);
        assert!(r.applicable);
        assert_abs_diff_eq!(r.reduced.as_ref().unwrap().universal_lower, 1.0, epsilon = 1e-12);
        assert_eq!(r.holds, Some(true));

        let r = remove_subset(&fam, &fam, &id, &Partition::empty(4), Strategy::default(), &tol()).unwrap();
        assert_eq!(r.c_star, 0.0);
        assert_abs_diff_eq!(r.reduced.as_ref().unwrap().universal_lower, 2.0, epsilon = 1e-12);

        let basis = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r =
            remove_subset(&basis, &basis, &id, &Partition::from_members(2, &[0]), Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.c_star, 1.0, epsilon = 1e-12);
        assert!(!r.applicable);
        assert!(r.reduced.is_none());
    }

    #[test]
    fn transform_examples() {
        let id = TargetOperator::identity(2);
        let chi = rows(&[&[1.0, 0.3], &[0.2, 1.0], &[0.5, -0.4]]);
        let xi = chi.scaled(1.02);
        let base = woven_bounds(&chi, &xi, &id, Strategy::default(), &tol()).unwrap();

        let t = OperatorTransform::outer_only(identity(2) * c64(2.0, 0.0), &chi).unwrap();
        let r = operator_transform_weave(&chi, &xi, &t, &id, Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.transformed.universal_lower, base.universal_lower, epsilon = 1e-10);
        assert_abs_diff_eq!(r.predicted_lower, base.universal_lower, epsilon = 1e-12);
        assert!(r.holds);
        assert!(r.commuting);
        assert_eq!(r.commuting_holds, Some(true));

        let t = OperatorTransform::outer_only(identity(2), &chi).unwrap();
        let r = operator_transform_weave(&chi, &xi, &t, &id, Strategy::default(), &tol()).unwrap();
        assert_abs_diff_eq!(r.transformed.universal_lower, base.universal_lower, epsilon = 1e-10);
        assert_abs_diff_eq!(r.transformed.universal_upper, base.universal_upper, epsilon = 1e-10);
        assert_abs_diff_eq!(r.predicted_upper, base.universal_upper, epsilon = 1e-10);
    }

    #[test]
    fn single_family_transform_example() {
        let p = rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = single_family_transform(&p, &real_diag(&[2.0, 1.0]), &TargetOperator::identity(2), &tol()).unwrap();
        assert_abs_diff_eq!(r.lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.upper, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.predicted_lower, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.predicted_upper, 4.0, epsilon = 1e-12);
        assert_eq!(r.holds, Some(true));
        assert!(matches!(
            single_family_transform(&p, &real_diag(&[1.0, 0.0]), &TargetOperator::identity(2), &tol()),
            Err(Error::SingularK)
        ));
    }
}
