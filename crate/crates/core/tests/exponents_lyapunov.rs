mod common;

use cocycle_lab::base::{generic_point, BaseSystem, ShiftSpace};
use cocycle_lab::cocycle::CocycleGenerator;
use cocycle_lab::exponents::{estimate_exponents, gk_good_density, km_good_times, MeasureKind, MeasureSampler};
use cocycle_lab::linalg::Operator;
use cocycle_lab::lyapunov_norm::{check_contraction, lyap_vector_norm, LyapunovNormContext};
use proptest::prelude::*;

#[test]
fn good_times_match_double_loop() {
    let (base, g) = common::diag_pair();
    for seed in 0..4 {
        let x = generic_point(&base, seed, 0);
        let fast = km_good_times(&g, &base, &x, 200, 0.0, 0.1, 10).unwrap();
        let slow = common::brute_good_times(&g, &base, &x, 200, 0.0, 0.1, 10);
        assert_eq!(fast, slow);
    }
    let shift = ShiftSpace::full(2).unwrap();
    let g = CocycleGenerator::from_symbol_ops(&shift, &common::golden_ops()).unwrap();
    let base = BaseSystem::Shift(shift);
    let x = generic_point(&base, 9, 0);
    let fast = km_good_times(&g, &base, &x, 150, 0.4, 0.05, 5).unwrap();
    assert_eq!(fast, common::brute_good_times(&g, &base, &x, 150, 0.4, 0.05, 5));
}

#[test]
fn good_density_of_diagonal_pair() {
    let (base, g) = common::diag_pair();
    let x = generic_point(&base, 1, 0);
    let d = gk_good_density(&g, &base, &x, 0.0, &[0.5, 0.3, 0.2], 400).unwrap();
    assert!((0.0..=1.0).contains(&d));
    assert!(gk_good_density(&g, &base, &x, 0.0, &[0.1, 0.2], 10).is_err());
}

#[test]
fn markov_sampler_estimates() {
    let shift = ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], std::f64::consts::E).unwrap();
    let g = CocycleGenerator::from_symbol_ops(&shift, &[Operator::diag(&[2.0, 1.0]), Operator::diag(&[1.0, 3.0])])
        .unwrap();
    let base = BaseSystem::Shift(shift);
    // stationary distribution of [[1/2, 1/2], [1, 0]] is (2/3, 1/3)
    let kind = MeasureKind::Markov {
        matrix: vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        stationary: vec![2.0 / 3.0, 1.0 / 3.0],
    };
    let s = MeasureSampler::new(kind, 4).unwrap();
    let r = estimate_exponents(&g, &base, &s, 20_000, 8).unwrap();
    // diagonal: λ = max(2/3 ln 2, 1/3 ln 3), χ = min of the two
    let (a, b) = (2.0 / 3.0 * 2f64.ln(), 1.0 / 3.0 * 3f64.ln());
    assert!((r.upper.value - a.max(b)).abs() < 0.02);
    assert!((r.lower.value - a.min(b)).abs() < 0.02);
}

#[test]
fn estimates_do_not_depend_on_thread_count() {
    let (base, g) = common::diag_pair();
    let s = MeasureSampler::bernoulli(vec![0.5, 0.5], 11).unwrap();
    let run = |t| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .unwrap()
            .install(|| estimate_exponents(&g, &base, &s, 3000, 12).unwrap())
    };
    assert_eq!(run(1), run(5));
}

#[test]
fn lyapunov_norm_matches_direct_sum() {
    let (base, g) = common::diag_pair();
    let mut ctx = LyapunovNormContext::new(0.0, 0.0, 0.1).unwrap();
    ctx.truncation_n = 60;
    for seed in 0..3 {
        let x = generic_point(&base, seed, 0);
        let u = [0.6, -0.8];
        let v = lyap_vector_norm(&ctx, &g, &base, &x, &u).unwrap();
        let direct = common::brute_lyap_norm(&g, &base, &x, &u, 0.0, 0.0, 0.1, 60);
        assert!(common::rel_err(v.value, direct) < 1e-12);
    }
}

#[test]
fn contraction_on_the_diagonal_pair() {
    let (base, g) = common::diag_pair();
    let ctx = LyapunovNormContext::new(0.0, 0.0, 0.1).unwrap();
    let x = generic_point(&base, 2, 0);
    let r = check_contraction(&ctx, &g, &base, &x, 8).unwrap();
    assert_eq!(r.violations, 0, "{r:?}");
    assert!(r.max_forward_ratio <= 1.0 + r.slack);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sandwich(seed in any::<u64>(), a in -1.0f64..1.0, b in -1.0f64..1.0) {
        let (base, g) = common::diag_pair();
        let mut ctx = LyapunovNormContext::new(0.0, 0.0, 0.1).unwrap();
        ctx.truncation_n = 50;
        let x = generic_point(&base, seed, 0);
        let u = [a, b];
        let v = lyap_vector_norm(&ctx, &g, &base, &x, &u).unwrap();
        prop_assert!((a * a + b * b).sqrt() <= v.value);
    }

    #[test]
    fn lyapunov_norm_is_a_norm(seed in any::<u64>(), u in prop::array::uniform2(-1.0f64..1.0), w in prop::array::uniform2(-1.0f64..1.0), c in -3.0f64..3.0) {
        let (base, g) = common::diag_pair();
        let mut ctx = LyapunovNormContext::new(0.0, 0.0, 0.1).unwrap();
        ctx.truncation_n = 40;
        let x = generic_point(&base, seed, 0);
        let n = |v: &[f64]| lyap_vector_norm(&ctx, &g, &base, &x, v).unwrap().value;
        let sum = [u[0] + w[0], u[1] + w[1]];
        prop_assert!(n(&sum) <= (n(&u) + n(&w)) * (1.0 + 1e-12));
        let scaled = [c * u[0], c * u[1]];
        prop_assert!(common::rel_err(n(&scaled), c.abs() * n(&u)) < 1e-12 || n(&u) == 0.0);
    }
}
