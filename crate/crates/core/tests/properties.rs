use framekit::atomic::{atomic_certificate, construct_exact_dual};
use framekit::gframe::{frame_operator, lg_frame_bounds, synthesis_apply, CoefficientVector};
use framekit::harness::generate::{generate_instance, InstanceKind, InstanceSpec, WeightProfile};
use framekit::harness::io::{instance_to_json, parse_instance};
use framekit::linalg::{c64, pencil_inf, pencil_sup, pseudo_inverse, quadratic_form, Matrix, Tolerances, Vector};
use framekit::measure::{MeasureSpace, Partition};
use framekit::perturbation::{perturbation_check, relative_gap_measure};
use framekit::weaving::{inflate_weights, partition_frame_operator, woven_bounds, Strategy};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        c64(re, im)
    })
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    let v = gaussian(rng, n, 1).column(0).into_owned();
    let norm = v.norm();
    v / c64(norm, 0.0)
}

fn spec(kind: InstanceKind, dim: usize, indices: usize, block: usize, seed: u64, rank: Option<usize>) -> InstanceSpec {
    let mut s = InstanceSpec::new(kind, dim, indices.max(dim), block, seed);
    s.params.weights = if seed.is_multiple_of(2) { WeightProfile::Random } else { WeightProfile::Uniform };
    s.params.target_rank = rank.map(|r| r.clamp(1, dim));
    s
}

fn close(a: &Matrix, b: &Matrix, eps: f64) -> bool {
    (a - b).norm() <= eps * (1.0 + b.norm())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, .. ProptestConfig::default() })]

    #[test]
    fn complement_partitions_the_space(n in 0usize..70, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let members: Vec<usize> = (0..n).filter(|_| rand::Rng::random_bool(&mut rng, 0.5)).collect();
        let j = Partition::from_members(n, &members);
        let jc = j.complement();
        prop_assert_eq!(j.count() + jc.count(), n);
        for i in 0..n {
            prop_assert!(j.contains(i) != jc.contains(i));
        }
        prop_assert_eq!(jc.complement(), j);
    }

    #[test]
    fn pencil_ratios_stay_in_window(n in 1usize..6, rank in 0usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n + 1);
        let m = &a * a.adjoint();
        let b = gaussian(&mut rng, n, rank.min(n));
        let p = &b * b.adjoint();
        let lower = pencil_inf(&m, &p, &tol()).unwrap().value;
        let upper = pencil_sup(&m, &p, &tol()).unwrap().value;
        for _ in 0..200 {
            let f = unit(&mut rng, n);
            let num = quadratic_form(&m, &f);
            let den = quadratic_form(&p, &f);
            let scale = num.abs() + 1e-300;
            if lower.is_finite() {
                prop_assert!(num >= lower * den - 1e-7 * scale.max(lower * den));
            }
            if upper.is_finite() {
                prop_assert!(num <= upper * den + 1e-7 * scale.max(upper * den));
            }
        }
    }

    #[test]
    fn pencil_scaling_covariance(n in 1usize..5, c in 0.1f64..10.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian(&mut rng, n, n);
        let m = &a * a.adjoint() + Matrix::identity(n, n) * c64(0.1, 0.0);
        let b = gaussian(&mut rng, n, n);
        let p = &b * b.adjoint();
        let base = pencil_inf(&m, &p, &tol()).unwrap().value;
        let scaled = pencil_inf(&(&m * c64(c, 0.0)), &p, &tol()).unwrap().value;
        prop_assert!((scaled - c * base).abs() <= 1e-8 * (c * base).max(1.0));
    }

    #[test]
    fn pseudo_inverse_penrose(rows in 1usize..6, cols in 1usize..6, rank in 0usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rank.min(rows).min(cols);
        let m = gaussian(&mut rng, rows, r) * gaussian(&mut rng, r, cols);
        let pinv = pseudo_inverse(&m, 1e-10);
        prop_assert!(close(&(&m * &pinv * &m), &m, 1e-9));
        prop_assert!(close(&(&pinv * &m * &pinv), &pinv, 1e-9));
        let mp = &m * &pinv;
        prop_assert!(close(&mp.adjoint(), &mp, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn swap_complement_identity(dim in 1usize..5, n in 1usize..7, mask in any::<u64>(), seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::WovenPair, dim, n, 2, seed, None)).unwrap();
        let xi = inst.xi.clone().unwrap();
        let j = Partition::from_mask(inst.chi.len(), mask & ((1 << inst.chi.len()) - 1));
        let lhs = partition_frame_operator(&inst.chi, &xi, &j).unwrap() + partition_frame_operator(&xi, &inst.chi, &j).unwrap();
        let rhs = frame_operator(&inst.chi, None).unwrap() + frame_operator(&xi, None).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn self_weaving_collapses(dim in 1usize..5, n in 1usize..7, rank in 1usize..5, seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::LgFrame, dim, n, 1, seed, Some(rank))).unwrap();
        let target = inst.target_or_identity();
        let w = woven_bounds(&inst.chi, &inst.chi, &target, Strategy::default(), &tol()).unwrap();
        let b = lg_frame_bounds(&inst.chi, &target, &tol()).unwrap();
        prop_assert!((w.universal_lower - b.lower).abs() <= 1e-8 * b.lower.max(1.0));
        prop_assert!((w.universal_upper - b.upper).abs() <= 1e-8 * b.upper.max(1.0));
    }

    #[test]
    fn inflating_weights_is_monotone(dim in 1usize..4, n in 2usize..7, seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::WovenPair, dim, n, 1, seed, None)).unwrap();
        let xi = inst.xi.clone().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let factor: Vec<f64> = (0..inst.chi.len()).map(|_| rand::Rng::random_range(&mut rng, 1.0..3.0)).collect();
        let target = inst.target_or_identity();
        let before = woven_bounds(&inst.chi, &xi, &target, Strategy::default(), &tol()).unwrap();
        let after = woven_bounds(
            &inflate_weights(&inst.chi, &factor).unwrap(),
            &inflate_weights(&xi, &factor).unwrap(),
            &target,
            Strategy::default(),
            &tol(),
        ).unwrap();
        prop_assert!(after.universal_lower >= before.universal_lower * (1.0 - 1e-10));
        prop_assert!(after.universal_upper >= before.universal_upper * (1.0 - 1e-10));
    }

    #[test]
    fn sampled_bounds_are_estimates(dim in 1usize..4, n in 2usize..9, count in 1usize..20, seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::WovenPair, dim, n, 1, seed, None)).unwrap();
        let xi = inst.xi.clone().unwrap();
        let target = inst.target_or_identity();
        let exact = woven_bounds(&inst.chi, &xi, &target, Strategy::default(), &tol()).unwrap();
        let sampled = woven_bounds(&inst.chi, &xi, &target, Strategy::Sampled { count, seed }, &tol()).unwrap();
        prop_assert!(sampled.is_estimate);
        prop_assert!(sampled.universal_lower >= exact.universal_lower * (1.0 - 1e-12));
        prop_assert!(sampled.universal_upper <= exact.universal_upper * (1.0 + 1e-12));
    }

    #[test]
    fn atomic_reconstruction(dim in 1usize..5, n in 1usize..7, rank in 1usize..5, seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::LgFrame, dim, n, 2, seed, Some(rank))).unwrap();
        let target = inst.target_or_identity();
        let cert = atomic_certificate(&inst.chi, &target, &tol()).unwrap();
        prop_assert!(cert.valid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20 {
            let f = unit(&mut rng, inst.chi.dim());
            let w = CoefficientVector::from_stacked(&inst.chi, &(&cert.coefficient_map * &f)).unwrap();
            let back = synthesis_apply(&inst.chi, &w).unwrap();
            prop_assert!((back - target.matrix() * &f).norm() <= 1e-8);
            prop_assert!(w.norm() <= cert.alpha_star * (1.0 + 1e-10));
        }
    }

    #[test]
    fn exact_dual_identity(dim in 1usize..5, n in 1usize..7, rank in 1usize..5, t in 0.0f64..0.9, seed in any::<u64>()) {
        let mut s = spec(InstanceKind::ApproxDualPair, dim, n, 1, seed, Some(rank));
        s.params.dual_defect = t;
        let inst = generate_instance(&s).unwrap();
        let target = inst.target_or_identity();
        let dual = construct_exact_dual(&inst.chi, inst.phi.as_ref().unwrap(), &target, &tol()).unwrap();
        prop_assert!(dual.residual <= 1e-9);
    }

    #[test]
    fn relative_gap_is_symmetric(dim in 1usize..4, n in 1usize..6, alpha in 0.0f64..0.5, seed in any::<u64>()) {
        let mut s = spec(InstanceKind::PerturbedPair, dim, n, 2, seed, None);
        s.params.alpha1 = alpha;
        let inst = generate_instance(&s).unwrap();
        let chi_p = inst.chi_p.unwrap();
        let a = relative_gap_measure(&inst.chi, &chi_p, &tol()).unwrap();
        let b = relative_gap_measure(&chi_p, &inst.chi, &tol()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn verified_perturbations_sandwich(dim in 1usize..4, n in 1usize..6, alpha in 0.0f64..0.5, seed in any::<u64>()) {
        let mut s = spec(InstanceKind::PerturbedPair, dim, n, 2, seed, None);
        s.params.alpha1 = alpha;
        let inst = generate_instance(&s).unwrap();
        let chi_p = inst.chi_p.unwrap();
        let claim = perturbation_check(&inst.chi, &chi_p, alpha, 0.0, 32, seed, &tol()).unwrap();
        prop_assert!(claim.verified);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..inst.chi.len() {
            for _ in 0..10 {
                let f = unit(&mut rng, inst.chi.dim());
                let base = (inst.chi.block(i) * &f).norm();
                let moved = (chi_p.block(i) * &f).norm();
                prop_assert!(moved >= (1.0 - alpha) * base - 1e-10);
                prop_assert!(moved <= (1.0 + alpha) * base + 1e-10);
            }
        }
    }

    #[test]
    fn instance_json_round_trips(dim in 1usize..4, n in 1usize..6, seed in any::<u64>()) {
        let inst = generate_instance(&spec(InstanceKind::PerturbedPair, dim, n, 2, seed, Some(1))).unwrap();
        let text = instance_to_json(&inst);
        let back = parse_instance(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(instance_to_json(&back), text);
    }

    #[test]
    fn weights_must_be_positive(weights in proptest::collection::vec(-1.0f64..2.0, 1..8)) {
        let r = MeasureSpace::new(weights.clone());
        prop_assert_eq!(r.is_ok(), weights.iter().all(|&w| w > 0.0));
    }
}
