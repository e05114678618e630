//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

use std::process::{Command, ExitCode};
use std::time::Instant;

use framekit::gframe::{frame_operator, lg_frame_bounds};
use framekit::harness::generate::gaussian_matrix;
use framekit::harness::suite::lightest_index;
use framekit::harness::{generate_instance, run_suite, CheckRecord, InstanceKind, InstanceSpec, SuiteReport};
use framekit::linalg::{op_norm, psd_margin, quadratic_form, PencilPlan};
use framekit::weaving::{remove_subset, Strategy};
use framekit::{c64, Matrix, Partition, TargetOperator, Tolerances, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 42;
const ABS_TOL: f64 = 1e-8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn failed(detail: impl std::fmt::Display) -> Verdict {
    Verdict { pass: false, detail: detail.to_string() }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    let v = gaussian_matrix(rng, n, 1).column(0).into_owned();
    let norm = v.norm();
    v / c64(norm, 0.0)
}

/// Suite output shared by several criteria.
struct Suites {
    weaving: SuiteReport,
    atomic: SuiteReport,
    duals: SuiteReport,
    perturbation: SuiteReport,
    transforms: SuiteReport,
}

impl Suites {
    fn run(tol: &Tolerances) -> framekit::Result<Self> {
        Ok(Suites {
            weaving: run_suite("weaving", 100, SEED, tol)?,
            atomic: run_suite("atomic", 100, SEED, tol)?,
            // Only some approximate-dual pairs satisfy the perturbation hypothesis.
            duals: run_suite("duals", 400, SEED, tol)?,
            perturbation: run_suite("perturbation", 100, SEED, tol)?,
            transforms: run_suite("transforms", 100, SEED, tol)?,
        })
    }
}

/// Errors raised while building or checking instances (as opposed to failing records).
fn errors(report: &SuiteReport) -> Vec<&String> {
    report.failures.iter().filter(|f| f.contains(": ")).collect()
}

/// Checks `lhs ≤ rhs + slack(rhs)` on the first `want` records named in `checks`.
fn records_hold(report: &SuiteReport, checks: &[&str], want: usize, slack: impl Fn(f64) -> f64) -> Verdict {
    let errs = errors(report);
    if !errs.is_empty() {
        return failed(format!("{} instance errors, first: {}", errs.len(), errs[0]));
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for check in checks {
        let picked: Vec<&CheckRecord> = report.records.iter().filter(|r| r.check == *check).take(want).collect();
        let worst = picked.iter().map(|r| r.rhs + slack(r.rhs) - r.lhs).fold(f64::INFINITY, f64::min);
        let bad = picked.iter().filter(|r| r.lhs > r.rhs + slack(r.rhs)).count();
        pass &= picked.len() >= want && bad == 0;
        parts.push(format!("{check}: {}/{} ok, min margin {worst:.3e}", picked.len() - bad, picked.len()));
    }
    verdict(pass, parts.join("; "))
}

fn absolute(_: f64) -> f64 {
    ABS_TOL
}

fn frame_sandwich(tol: &Tolerances) -> Verdict {
    let start = Instant::now();
    let mut worst = f64::INFINITY;
    for k in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ (k << 8));
        let dim = rng.random_range(2..=8);
        let indices = rng.random_range(dim..=12);
        let spec = InstanceSpec::new(InstanceKind::Gframe, dim, indices, rng.random_range(1..=3), rng.random());
        let outcome = generate_instance(&spec).and_then(|inst| {
            let s = frame_operator(&inst.chi, None)?;
            let b = lg_frame_bounds(&inst.chi, &TargetOperator::identity(dim), tol)?;
            let eye = Matrix::identity(dim, dim);
            let scale = op_norm(&s);
            let lower = psd_margin(&(&s - &eye * c64(b.lower, 0.0)))?;
            let upper = psd_margin(&(&eye * c64(b.upper, 0.0) - &s))?;
            Ok(lower.min(upper) / scale)
        });
        match outcome {
            Ok(m) => worst = worst.min(m),
            Err(e) => return failed(format!("instance {k}: {e}")),
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        worst >= -ABS_TOL && elapsed < 5.0,
        format!("200 g-frames, min relative psd margin {worst:.3e}, {elapsed:.2}s"),
    )
}

fn pencil_agreement(tol: &Tolerances) -> Verdict {
    const PAIRS: usize = 500;
    const VECTORS_PER_PAIR: usize = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut worst_agreement, mut worst_rayleigh, mut rank_deficient, mut vectors) = (0.0f64, 0.0f64, 0, 0);
    for k in 0..PAIRS {
        let n = rng.random_range(2..=6);
        let p_rank = if k % 2 == 0 { n } else { rng.random_range(1..n) };
        rank_deficient += usize::from(p_rank < n);
        let h = gaussian_matrix(&mut rng, n, p_rank);
        let p = &h * h.adjoint();
        // Half the numerators live inside range(P) so the sup stays finite.
        let m = if rng.random_bool(0.5) {
            let cols = rng.random_range(1..=p_rank);
            let c = gaussian_matrix(&mut rng, p_rank, cols);
            &h * &c * c.adjoint() * h.adjoint()
        } else {
            let cols = rng.random_range(1..=n);
            let g = gaussian_matrix(&mut rng, n, cols);
            &g * g.adjoint()
        };
        let plan = match PencilPlan::new(&p, tol) {
            Ok(plan) => plan,
            Err(e) => return failed(format!("pair {k}: {e}")),
        };
        let (lower, upper) = match (plan.inf(&m), plan.sup(&m)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => return failed(format!("pair {k}: {e}")),
        };
        let ratio_scale = op_norm(&m) / op_norm(&p);
        for r in [&lower, &upper] {
            if let Some(gap) = r.method_agreement {
                worst_agreement = worst_agreement.max(gap / r.value.max(ratio_scale));
            }
        }
        let p_norm = op_norm(&p);
        for _ in 0..VECTORS_PER_PAIR {
            let f = random_unit(&mut rng, n);
            let denom = quadratic_form(&p, &f);
            if denom <= 1e-12 * p_norm {
                continue;
            }
            vectors += 1;
            let ratio = quadratic_form(&m, &f) / denom;
            let below = (lower.value - ratio) / lower.value.max(1.0);
            let above = if upper.value.is_finite() { (ratio - upper.value) / upper.value.max(1.0) } else { 0.0 };
            worst_rayleigh = worst_rayleigh.max(below).max(above);
        }
    }
    verdict(
        worst_agreement <= 1e-8 && worst_rayleigh <= 1e-7,
        format!(
            "{PAIRS} pairs ({rank_deficient} rank-deficient), max relative method gap {worst_agreement:.3e}, \
             max Rayleigh excursion {worst_rayleigh:.3e} over {vectors} vectors"
        ),
    )
}

fn subset_removal(tol: &Tolerances) -> Verdict {
    const WANT: usize = 100;
    let (mut applicable, mut tried, mut bad) = (0, 0, 0);
    let mut worst = f64::INFINITY;
    while applicable < WANT && tried < 20 * WANT {
        let mut rng = ChaCha8Rng::seed_from_u64(SEED.wrapping_mul(31).wrapping_add(tried as u64));
        tried += 1;
        let spec = InstanceSpec::new(
            InstanceKind::WovenPair,
            rng.random_range(2..=3),
            rng.random_range(8..=10),
            rng.random_range(1..=2),
            rng.random(),
        );
        let report = generate_instance(&spec).and_then(|inst| {
            let xi = inst.require_xi()?;
            let drop = Partition::from_members(inst.chi.len(), &[lightest_index(&inst.chi)]);
            remove_subset(&inst.chi, xi, &inst.target_or_identity(), &drop, Strategy::default(), tol)
        });
        let report = match report {
            Ok(r) => r,
            Err(e) => return failed(format!("instance {tried}: {e}")),
        };
        let Some(reduced) = report.reduced.as_ref().filter(|_| report.applicable) else { continue };
        applicable += 1;
        let lower_margin = reduced.universal_lower - (report.predicted_lower - ABS_TOL);
        let upper_margin = report.base_upper + ABS_TOL - reduced.universal_upper;
        worst = worst.min(lower_margin).min(upper_margin);
        bad += usize::from(lower_margin < 0.0 || upper_margin < 0.0);
    }
    verdict(
        applicable >= WANT && bad == 0,
        format!("{applicable} instances with C* < A_w ({tried} drawn), {bad} violations, min margin {worst:.3e}"),
    )
}

fn determinism() -> Verdict {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_framekit"))
            .args(["verify", "--suite", "all", "--seed", "42"])
            .env_remove("FRAMEKIT_TOL")
            .output()
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => verdict(
            a.stdout == b.stdout && !a.stdout.is_empty(),
            format!("two runs, {} bytes each, exit {:?}", a.stdout.len(), a.status.code()),
        ),
        (Err(e), _) | (_, Err(e)) => failed(e),
    }
}

fn main() -> ExitCode {
    let tol = Tolerances::default();
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Verdict)> =
        vec![(1, "frame-operator sandwich", frame_sandwich(&tol)), (2, "pencil correctness", pencil_agreement(&tol))];
    match Suites::run(&tol) {
        Ok(s) => {
            let relative = |rhs: f64| ABS_TOL * rhs.abs().max(1.0);
            results.extend([
                (3, "woven atomic lower bound", records_hold(&s.atomic, &["woven_atomic_lower"], 100, absolute)),
                (4, "mixed lower bound", records_hold(&s.weaving, &["mixed_lower_bound"], 100, absolute)),
                (5, "crossed criterion", records_hold(&s.weaving, &["crossed_criterion"], 100, absolute)),
                (
                    6,
                    "direct-sum weaving",
                    records_hold(&s.weaving, &["direct_sum_lower", "direct_sum_upper"], 100, absolute),
                ),
                (7, "sum weaving", records_hold(&s.weaving, &["sum_lower"], 100, absolute)),
                (8, "subset removal", subset_removal(&tol)),
                (9, "exact-dual construction", records_hold(&s.duals, &["exact_dual_residual"], 100, |_| 0.0)),
                (10, "dual perturbation", records_hold(&s.duals, &["dual_perturbation"], 100, absolute)),
                (
                    11,
                    "transform weaving",
                    records_hold(
                        &s.transforms,
                        &["transform_lower", "transform_upper", "single_transform_lower", "single_transform_upper"],
                        100,
                        absolute,
                    ),
                ),
                (
                    12,
                    "perturbation propagation",
                    records_hold(&s.perturbation, &["propagated_lower", "propagated_upper"], 100, relative),
                ),
            ]);
        }
        Err(e) => results.extend((3..=12).map(|k| (k, "suite run", failed(&e)))),
    }
    results.push((13, "determinism", determinism()));
    results.sort_by_key(|r| r.0);

    let mut all = true;
    for (k, name, v) in &results {
        all &= v.pass;
        println!("{} {k:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance finished in {:.1}s", start.elapsed().as_secs_f64());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
