//! Seeded verification suites: every predicted bound becomes a one-sided
//! record `lhs ≤ rhs` that can be audited without rerunning.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::generate::{generate_instance, left_perturbation, BlockDims, InstanceKind, InstanceSpec, WeightProfile};
use super::io::CsvTable;
use crate::atomic::{
    approx_dual_ratio, atomic_certificate, construct_exact_dual, dual_perturbation_bound, mixed_lower_bound,
    woven_atomic_certificate, DUAL_RESIDUAL_TOL,
};
use crate::error::{Error, Result};
use crate::gframe::{self, frame_operator, lg_frame_bounds, BlockFamily, TargetOperator};
use crate::linalg::{self, c64, eigh, psd_margin, Matrix, Tolerances, Vector};
use crate::measure::Partition;
use crate::perturbation::{perturbation_check, propagated_window, relative_gap_measure, relative_gap_window};
use crate::weaving::{
    crossed_lower_criterion, direct_sum_weave, operator_transform_weave, partition_frame_operator, remove_subset,
    single_family_transform, sum_weave, woven_bounds, OperatorTransform, Strategy,
};

pub const SUITES: [&str; 6] = ["bounds", "weaving", "atomic", "duals", "perturbation", "transforms"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub suite: String,
    pub check: String,
    pub anchor: String,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    /// Passes when `rhs − lhs ≥ −tol·max(1, |rhs|)`.
    pub fn at_most(suite: &str, check: &str, anchor: &str, seed: u64, lhs: f64, rhs: f64, tol: f64) -> Self {
        let margin = rhs - lhs;
        CheckRecord {
            suite: suite.into(),
            check: check.into(),
            anchor: anchor.into(),
            seed,
            lhs,
            rhs,
            margin,
            pass: margin >= -tol * rhs.abs().max(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub instances: usize,
    pub seed: u64,
    pub tol: f64,
    pub records: Vec<CheckRecord>,
    /// Checks skipped because a side was infinite or a hypothesis failed.
    pub not_applicable: usize,
    /// `check@seed` labels of failing records and errors.
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl CsvTable for SuiteReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["suite", "check", "anchor", "seed", "lhs", "rhs", "margin", "pass"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                vec![
                    r.suite.clone(),
                    r.check.clone(),
                    r.anchor.clone(),
                    r.seed.to_string(),
                    r.lhs.to_string(),
                    r.rhs.to_string(),
                    r.margin.to_string(),
                    r.pass.to_string(),
                ]
            })
            .collect()
    }
}

/// Collects records for one instance; non-finite comparisons are counted as
/// not applicable instead of being recorded.
struct Recorder<'a> {
    suite: &'a str,
    seed: u64,
    tol: f64,
    records: Vec<CheckRecord>,
    skipped: usize,
}

impl<'a> Recorder<'a> {
    fn new(suite: &'a str, seed: u64, tol: f64) -> Self {
        Recorder { suite, seed, tol, records: Vec::new(), skipped: 0 }
    }

    fn at_most(&mut self, check: &str, anchor: &str, lhs: f64, rhs: f64) {
        if lhs.is_finite() && rhs.is_finite() {
            self.records.push(CheckRecord::at_most(self.suite, check, anchor, self.seed, lhs, rhs, self.tol));
        } else {
            self.skipped += 1;
        }
    }

    fn skip(&mut self) {
        self.skipped += 1;
    }
}

struct InstanceOutcome {
    seed: u64,
    records: Vec<CheckRecord>,
    skipped: usize,
    error: Option<String>,
}

fn suite_salt(suite: &str) -> u64 {
    suite.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Per-instance seeds, fixed before any work is scheduled.
pub fn instance_seeds(suite: &str, instances: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ suite_salt(suite));
    (0..instances).map(|_| rng.next_u64()).collect()
}

fn shape(rng: &mut ChaCha8Rng, max_dim: usize, max_indices: usize) -> (usize, usize, BlockDims) {
    let dim = rng.random_range(2..=max_dim);
    let indices = rng.random_range(dim.max(2)..=max_indices.max(dim));
    let dims = (0..indices).map(|_| rng.random_range(1..=3)).collect();
    (dim, indices, BlockDims::PerIndex(dims))
}

fn profile(rng: &mut ChaCha8Rng) -> WeightProfile {
    if rng.random_bool(0.5) {
        WeightProfile::Random
    } else {
        WeightProfile::Uniform
    }
}

fn target_rank(rng: &mut ChaCha8Rng, dim: usize) -> Option<usize> {
    if rng.random_bool(0.5) {
        None
    } else {
        Some(rng.random_range(1..=dim))
    }
}

/// Spec for instance `seed` of a suite; the shape is drawn from `seed`.
pub fn suite_spec(kind: InstanceKind, seed: u64, max_dim: usize, max_indices: usize) -> InstanceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, indices, block_dims) = shape(&mut rng, max_dim, max_indices);
    let mut spec = InstanceSpec { kind, dim, indices, block_dims, params: Default::default(), seed: rng.next_u64() };
    spec.params.weights = profile(&mut rng);
    spec.params.target_rank = target_rank(&mut rng, dim);
    spec
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    let v = super::generate::gaussian_matrix(rng, n, 1).column(0).into_owned();
    let norm = v.norm();
    v / c64(norm, 0.0)
}

fn bounds_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let kind = if seed.is_multiple_of(2) { InstanceKind::Gframe } else { InstanceKind::LgFrame };
    let inst = generate_instance(&suite_spec(kind, seed, 8, 12))?;
    let target = inst.target_or_identity();
    let s = frame_operator(&inst.chi, None)?;
    let s_norm = linalg::op_norm(&s);
    let b = lg_frame_bounds(&inst.chi, &target, tol)?;
    let lower_gap = psd_margin(&(&s - target.outer_gram() * c64(b.lower, 0.0)))? / s_norm;
    let upper_gap = psd_margin(&(Matrix::identity(s.nrows(), s.ncols()) * c64(b.upper, 0.0) - &s))? / s_norm;
    rec.at_most("lower_sandwich", "A‖L*f‖² ≤ ∫‖χ_ς f‖²dμ", 0.0, lower_gap);
    rec.at_most("upper_sandwich", "∫‖χ_ς f‖²dμ ≤ B‖f‖²", 0.0, upper_gap);
    if target.is_identity() {
        rec.at_most("lower_is_eigenvalue", "A = λ_min(S)", (b.lower - eigh(&s).min()).abs(), 0.0);
    }
    Ok(())
}

fn weaving_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let spec = suite_spec(InstanceKind::WovenPair, seed, 5, 10);
    let inst = generate_instance(&spec)?;
    let (chi, xi, target) = (&inst.chi, inst.require_xi()?, inst.target_or_identity());
    let strategy = Strategy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));

    let base = woven_bounds(chi, xi, &target, strategy, tol)?;
    let own = lg_frame_bounds(chi, &target, tol)?;
    let delta = spec.params.delta;
    let window = propagated_window(own.lower, own.upper, (0.0, 0.0), (delta, 0.0))?;
    rec.at_most("generated_pair_woven", "(1−α₁)/(1+α₂)", window.lower, base.universal_lower);

    let j = Partition::from_mask(chi.len(), rng.random_range(0..1u64 << chi.len()));
    let swapped = partition_frame_operator(chi, xi, &j)? + partition_frame_operator(xi, chi, &j)?;
    let total = frame_operator(chi, None)? + frame_operator(xi, None)?;
    rec.at_most(
        "swap_complement",
        "S^J_χ + S^{Jᶜ}_ξ",
        linalg::op_norm(&(swapped - &total)) / linalg::op_norm(&total),
        0.0,
    );

    let sampled = woven_bounds(chi, xi, &target, Strategy::Sampled { count: 16, seed }, tol)?;
    rec.at_most("sampled_lower_estimate", "A_w", base.universal_lower, sampled.universal_lower);
    rec.at_most("sampled_upper_estimate", "B_w", sampled.universal_upper, base.universal_upper);

    let gamma = mixed_lower_bound(chi, xi, &target, tol)?;
    rec.at_most("mixed_lower_bound", "(γ²/B)‖L*f‖²", gamma.implied_lower, gamma.actual_lower);

    let chi_p = left_perturbation(&mut rng, chi, 0.3, None)?;
    let xi_p = left_perturbation(&mut rng, xi, 0.3, None)?;
    let crossed = crossed_lower_criterion(chi, &chi_p, xi, &xi_p, &target, strategy, tol)?;
    rec.at_most("crossed_criterion", "γ²‖L*f‖²/(√B₁+√B₂)²", crossed.implied_lower, crossed.actual_lower);

    let mut other_spec = suite_spec(InstanceKind::WovenPair, seed.wrapping_add(1), 4, 10);
    other_spec.indices = chi.len();
    other_spec.dim = other_spec.dim.min(chi.len());
    other_spec.block_dims = BlockDims::Constant(rng.random_range(1..=2));
    other_spec.params.target_rank = other_spec.params.target_rank.map(|r| r.min(other_spec.dim));
    let other = generate_instance(&other_spec)?;
    let other_chi = other.chi.with_space(chi.space().clone())?;
    let other_xi = other.require_xi()?.with_space(chi.space().clone())?;
    let sum = direct_sum_weave(chi, xi, &target, &other_chi, &other_xi, &other.target_or_identity(), strategy, tol)?;
    rec.at_most("direct_sum_lower", "min{A,A'}", sum.predicted_lower, sum.computed.universal_lower);
    rec.at_most("direct_sum_upper", "max{B,B'}", sum.computed.universal_upper, sum.predicted_upper);

    let c = rng.random_range(0.5..1.5);
    let chi_q = left_perturbation(&mut rng, chi, 0.5, None)?.scaled(c);
    let xi_q = left_perturbation(&mut rng, xi, 0.5, None)?.scaled(c);
    match sum_weave(chi, &chi_q, xi, &xi_q, &target, strategy, tol) {
        Ok(r) => rec.at_most("sum_lower", "(A+A')LL*", r.predicted_lower, r.computed.universal_lower),
        Err(Error::PositivityFailed { .. }) => rec.skip(),
        Err(e) => return Err(e),
    }

    let lightest = lightest_index(chi);
    let removal = remove_subset(chi, xi, &target, &Partition::from_members(chi.len(), &[lightest]), strategy, tol)?;
    match &removal.reduced {
        Some(reduced) => {
            rec.at_most("removal_lower", "(A−C,B) woven", removal.predicted_lower, reduced.universal_lower);
            rec.at_most("removal_upper", "(A−C,B) woven", reduced.universal_upper, removal.base_upper);
        }
        None => rec.skip(),
    }
    Ok(())
}

/// Index with the smallest weighted Gram norm.
pub fn lightest_index(fam: &BlockFamily) -> usize {
    let mut best = (0, f64::INFINITY);
    for i in 0..fam.len() {
        let size = fam.weight(i) * linalg::op_norm(fam.block(i)).powi(2);
        if size < best.1 {
            best = (i, size);
        }
    }
    best.0
}

fn atomic_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let mut spec = suite_spec(InstanceKind::AtomicSystem, seed, 5, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(29));
    spec.params.delta = rng.random_range(0.0..0.6);
    let inst = generate_instance(&spec)?;
    let (chi, xi, target) = (&inst.chi, inst.require_xi()?, inst.target_or_identity());

    let woven = woven_atomic_certificate(chi, xi, &target, Strategy::default(), tol)?;
    rec.at_most("woven_atomic_lower", "1/(α₁+α₂)²", woven.predicted_lower, woven.actual_lower);

    let cert = atomic_certificate(chi, &target, tol)?;
    rec.at_most("atomic_range", "Lf = ∫χ_ς*(w_ς)dμ", cert.range_defect, 0.0);
    let synthesis = gframe::synthesis_matrix(chi).adjoint();
    let (mut worst_residual, mut worst_ratio) = (0.0f64, 0.0f64);
    for _ in 0..16 {
        let f = random_unit(&mut rng, chi.dim());
        let w = &cert.coefficient_map * &f;
        worst_residual = worst_residual.max((&synthesis * &w - target.matrix() * &f).norm());
        worst_ratio = worst_ratio.max(w.norm());
    }
    rec.at_most("atomic_reconstruction", "Lf = ∫χ_ς*(w_ς)dμ", worst_residual, 0.0);
    rec.at_most("atomic_alpha", "‖𝒲_f‖ ≤ α‖f‖", worst_ratio, cert.alpha_star);
    Ok(())
}

fn duals_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let mut spec = suite_spec(InstanceKind::ApproxDualPair, seed, 6, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(41));
    spec.params.dual_defect = rng.random_range(0.05..0.6);
    spec.params.delta = rng.random_range(0.0..0.1);
    let inst = generate_instance(&spec)?;
    let (chi, xi, phi, target) = (&inst.chi, inst.require_xi()?, inst.require_phi()?, inst.target_or_identity());

    let t = approx_dual_ratio(chi, phi, &target, tol)?.t_star;
    rec.at_most("generated_dual_defect", "‖Lf − S_{χ,ξ}f‖ ≤ t‖Lf‖", (t - spec.params.dual_defect).abs(), 0.01);

    let dual = construct_exact_dual(chi, phi, &target, tol)?;
    rec.at_most("exact_dual_residual", "Lf = ∫ξ_ς*χ_ς(f)dμ", dual.residual, DUAL_RESIDUAL_TOL);

    let pert = dual_perturbation_bound(chi, xi, phi, &target, tol)?;
    if pert.applicable {
        rec.at_most("dual_perturbation", "√(DG) < 1−t", pert.t_prime_actual, pert.t_prime_predicted);
    } else {
        rec.skip();
    }
    rec.at_most("dual_perturbation_triangle", "t + √D·G", pert.t_prime_actual, pert.t_prime_corrected);
    Ok(())
}

fn perturbation_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let mut spec = suite_spec(InstanceKind::PerturbedPair, seed, 5, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(53));
    spec.params.alpha1 = rng.random_range(0.0..0.2);
    let inst = generate_instance(&spec)?;
    let (chi, xi, target) = (&inst.chi, inst.require_xi()?, inst.target_or_identity());
    let chi_p = inst.chi_p.as_ref().expect("perturbed pair carries chi_p");
    let xi_p = inst.xi_p.as_ref().expect("perturbed pair carries xi_p");
    let alpha1 = spec.params.alpha1;

    let claim = perturbation_check(chi, chi_p, alpha1, 0.0, 0, seed, tol)?;
    let onesided = claim.onesided_alpha1.iter().copied().fold(0.0, f64::max);
    rec.at_most("onesided_alpha", "‖χ_ς f − χ'_ς f‖ ≤ α₁‖χ_ς f‖", onesided, alpha1);

    let base = woven_bounds(chi, xi, &target, Strategy::default(), tol)?;
    let moved = woven_bounds(chi_p, xi_p, &target, Strategy::default(), tol)?;
    let window = propagated_window(base.universal_lower, base.universal_upper, (alpha1, 0.0), (alpha1, 0.0))?;
    rec.at_most("propagated_lower", "(1−α₁)/(1+α₂)", window.lower, moved.universal_lower);
    rec.at_most("propagated_upper", "(1+α₁)/(1−α₂)", moved.universal_upper, window.upper);

    let m_chi = relative_gap_measure(chi, chi_p, tol)?;
    let m_xi = relative_gap_measure(xi, xi_p, tol)?;
    let gap = relative_gap_window(base.universal_lower, base.universal_upper, m_chi, m_xi);
    rec.at_most("relative_gap_lower", "m₁ min{‖χ_ς f‖, ‖χ'_ς f‖}", gap.lower, moved.universal_lower);
    rec.at_most("relative_gap_upper", "m₁ min{‖χ_ς f‖, ‖χ'_ς f‖}", moved.universal_upper, gap.upper);
    Ok(())
}

fn near_identity(rng: &mut ChaCha8Rng, d: usize, size: f64) -> Matrix {
    let c = super::generate::gaussian_matrix(rng, d, d);
    let scale = rng.random_range(0.0..size) / linalg::op_norm(&c).max(f64::MIN_POSITIVE);
    Matrix::identity(d, d) + c * c64(scale, 0.0)
}

fn transforms_checks(rec: &mut Recorder, seed: u64, tol: &Tolerances) -> Result<()> {
    let mut spec = suite_spec(InstanceKind::WovenPair, seed, 5, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
    let commuting = rng.random_bool(0.5);
    if commuting {
        spec.params.target_rank = None;
    }
    let inst = generate_instance(&spec)?;
    let (chi, xi, target) = (&inst.chi, inst.require_xi()?, inst.target_or_identity());
    let n = chi.dim();

    let left_chi: Vec<Matrix> = chi.block_dims().into_iter().map(|d| near_identity(&mut rng, d, 0.3)).collect();
    let left_xi: Vec<Matrix> = chi.block_dims().into_iter().map(|d| near_identity(&mut rng, d, 0.3)).collect();
    let probe = OperatorTransform::new(Matrix::identity(n, n), left_chi.clone(), left_xi.clone())?;
    let mut outer = near_identity(&mut rng, n, 0.6);
    // Scale K so σ_min(K) ≥ α, which the commuting variant needs.
    let smin = linalg::sigma_min(&outer);
    outer *= c64(1.01 * probe.alpha().max(1.0) / smin, 0.0);
    let transform = OperatorTransform::new(outer.clone(), left_chi, left_xi)?;

    let r = operator_transform_weave(chi, xi, &transform, &target, Strategy::default(), tol)?;
    rec.at_most("transform_lower", "α²A", r.predicted_lower, r.transformed.universal_lower);
    rec.at_most("transform_upper", "β²B‖K‖²", r.transformed.universal_upper, r.predicted_upper);
    if r.commuting {
        rec.at_most("transform_commuting_lower", "α⁴A", r.commuting_predicted_lower, r.commuting_lower);
    } else {
        rec.skip();
    }

    // L = K* commutes with K in the sense KL* = L*K.
    let single_transform_target = if commuting { target.clone() } else { TargetOperator::new(outer.adjoint())? };
    let single = single_family_transform(chi, &outer, &single_transform_target, tol)?;
    rec.at_most("single_transform_lower", "A/‖K⁻¹‖²", single.predicted_lower, single.lower);
    rec.at_most("single_transform_upper", "B‖K‖²", single.upper, single.predicted_upper);
    Ok(())
}

type CheckFn = fn(&mut Recorder, u64, &Tolerances) -> Result<()>;

fn checks_for(suite: &str) -> Result<CheckFn> {
    Ok(match suite {
        "bounds" => bounds_checks,
        "weaving" => weaving_checks,
        "atomic" => atomic_checks,
        "duals" => duals_checks,
        "perturbation" => perturbation_checks,
        "transforms" => transforms_checks,
        other => return Err(Error::UnknownSuite(other.into())),
    })
}

fn run_one(suite: &str, check: CheckFn, seed: u64, tol: &Tolerances) -> InstanceOutcome {
    let mut rec = Recorder::new(suite, seed, tol.check);
    let error = check(&mut rec, seed, tol).err().map(|e| format!("{suite}@{seed}: {e}"));
    InstanceOutcome { seed, records: rec.records, skipped: rec.skipped, error }
}

/// Run `instances` seeded instances of `suite` (or of every suite for
/// `"all"`). Records are ordered by suite, then instance seed.
pub fn run_suite(suite: &str, instances: usize, seed: u64, tol: &Tolerances) -> Result<SuiteReport> {
    let names: Vec<&str> = if suite == "all" { SUITES.to_vec() } else { vec![suite] };
    let mut report = SuiteReport {
        suite: suite.into(),
        instances,
        seed,
        tol: tol.check,
        records: Vec::new(),
        not_applicable: 0,
        failures: Vec::new(),
    };
    for name in names {
        let check = checks_for(name)?;
        let mut outcomes: Vec<InstanceOutcome> =
            instance_seeds(name, instances, seed).into_par_iter().map(|s| run_one(name, check, s, tol)).collect();
        outcomes.sort_by_key(|o| o.seed);
        for o in outcomes {
            report.not_applicable += o.skipped;
            report.failures.extend(o.error);
            for r in o.records {
                if !r.pass {
                    report.failures.push(format!("{}@{}", r.check, r.seed));
                }
                report.records.push(r);
            }
        }
    }
    Ok(report)
}
