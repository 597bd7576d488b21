mod common;

use std::collections::BTreeMap;

use cocycle_lab::base::{generic_point, BasePoint, BaseSystem, ShiftSpace};
use cocycle_lab::cocycle::{CocycleGenerator, GeneratorBounds};
use cocycle_lab::exponents::{subadditive_sequence, SequenceKind};
use cocycle_lab::linalg::{NormKind, Operator, ScaledOperator};
use proptest::prelude::*;

/// Relative distance between two scaled products.
fn scaled_rel_diff(a: &ScaledOperator, b: &ScaledOperator) -> f64 {
    let shift = a.log_scale().max(b.log_scale());
    let sa = (a.log_scale() - shift).exp();
    let sb = (b.log_scale() - shift).exp();
    let diff: f64 = a
        .op
        .entries()
        .iter()
        .zip(b.op.entries())
        .map(|(x, y)| (x * sa - y * sb).abs())
        .fold(0.0, f64::max);
    let size = a.op.max_abs() * sa;
    diff / size.max(1e-300)
}

fn golden_mean_memory_one() -> (BaseSystem, CocycleGenerator) {
    let shift = ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], std::f64::consts::E).unwrap();
    let mats = [
        Operator::from_rows(&[[1.2, 0.3], [-0.4, 0.9]]).unwrap(),
        Operator::from_rows(&[[0.7, -0.5], [0.6, 1.1]]).unwrap(),
        Operator::from_rows(&[[2.0, 0.1], [0.0, 0.6]]).unwrap(),
    ];
    let words = [vec![0, 0, 0], vec![0, 0, 1], vec![1, 0, 0], vec![1, 0, 1], vec![0, 1, 0]];
    let table: BTreeMap<_, _> = words
        .into_iter()
        .enumerate()
        .map(|(i, w)| (w, mats[i % 3].clone()))
        .collect();
    let g = CocycleGenerator::locally_constant(&shift, 1, table, NormKind::L2Induced, GeneratorBounds::default()).unwrap();
    (BaseSystem::Shift(shift), g)
}

fn smooth_on_cat_map() -> (BaseSystem, CocycleGenerator) {
    let a0 = Operator::from_rows(&[[2.0, 1.0], [1.0, 1.0]]).unwrap();
    let g = CocycleGenerator::torus_smooth(a0, 0.2, vec![1.0, 0.0], NormKind::L2Induced, GeneratorBounds::default())
        .unwrap();
    (BaseSystem::cat_map(), g)
}

fn systems() -> Vec<(BaseSystem, CocycleGenerator)> {
    let (s, g) = common::diag_pair();
    let shift = s.as_shift().unwrap().clone();
    vec![
        (s, g),
        (
            BaseSystem::Shift(shift.clone()),
            CocycleGenerator::from_symbol_ops(&shift, &common::golden_ops()).unwrap(),
        ),
        golden_mean_memory_one(),
        smooth_on_cat_map(),
        (
            BaseSystem::cat_map(),
            CocycleGenerator::constant(Operator::from_rows(&[[2.0, 1.0], [1.0, 1.0]]).unwrap()).unwrap(),
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cocycle_equation(which in 0usize..5, seed in any::<u64>(), n in 0i64..80, k in 0i64..80) {
        let (base, g) = &systems()[which];
        let x = generic_point(base, seed, 0);
        let lhs = g.evaluate_scaled(base, &x, n + k).unwrap();
        let fkx = base.step(&x, k).unwrap();
        let rhs = g.evaluate_scaled(base, &fkx, n).unwrap().compose(&g.evaluate_scaled(base, &x, k).unwrap());
        prop_assert!(scaled_rel_diff(&lhs, &rhs) < 1e-8);
    }

    #[test]
    fn negative_times_invert_forward_products(which in 0usize..5, seed in any::<u64>(), n in 1i64..60) {
        let (base, g) = &systems()[which];
        let x = generic_point(base, seed, 1);
        let fwd = g.evaluate_scaled(base, &x, n).unwrap();
        let back = g.evaluate_scaled(base, &base.step(&x, n).unwrap(), -n).unwrap();
        let id = back.compose(&fwd);
        // rounding in back ∘ fwd is amplified by the condition number of the product
        let ln_cond = fwd.ln_norm(g.norm()) + back.ln_norm(g.norm());
        let tol = 1e-13 * n as f64 * ln_cond.exp();
        let s = id.log_scale().exp();
        let eye = Operator::identity(g.dim());
        let err = id.op.entries().iter().zip(eye.entries()).map(|(a, b)| (a * s - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < tol.max(1e-12), "err {err:e}, tol {tol:e}");
    }

    #[test]
    fn subadditivity(which in 0usize..5, seed in any::<u64>(), n in 1usize..60, k in 1usize..60) {
        let (base, g) = &systems()[which];
        let x = generic_point(base, seed, 2);
        let fkx = base.step(&x, k as i64).unwrap();
        for kind in [SequenceKind::A, SequenceKind::ATilde, SequenceKind::B, SequenceKind::BTilde] {
            let s = subadditive_sequence(g, base, &x, kind, n + k).unwrap();
            let (shifted, ref_point) = match kind {
                SequenceKind::A | SequenceKind::ATilde => (subadditive_sequence(g, base, &fkx, kind, n).unwrap(), k),
                // b_{n+k}(x) ≤ b_n(f^{−k}x) + b_k(x)
                _ => (subadditive_sequence(g, base, &base.step(&x, -(k as i64)).unwrap(), kind, n).unwrap(), k),
            };
            let lhs = s.values[n + k];
            let rhs = shifted.values[n] + s.values[ref_point];
            prop_assert!(lhs <= rhs + 1e-8 * lhs.abs().max(1.0), "{kind:?}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn products_match_naive(which in 0usize..5, seed in any::<u64>(), n in 0usize..40) {
        let (base, g) = &systems()[which];
        let x = generic_point(base, seed, 3);
        let naive = common::naive_product(g, base, &x, n);
        let fast = g.evaluate(base, &x, n as i64).unwrap();
        let scale = naive.max_abs();
        for (a, b) in naive.entries().iter().zip(fast.entries()) {
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn constant_cocycle_is_a_power() {
    let a = Operator::from_rows(&[[1.0, 2.0], [0.5, 1.5]]).unwrap();
    let g = CocycleGenerator::constant(a.clone()).unwrap();
    let base = BaseSystem::full_shift(2).unwrap();
    let x = generic_point(&base, 1, 0);
    let p = g.evaluate(&base, &x, 3).unwrap();
    let q = a.matmul(&a).matmul(&a);
    for (u, v) in p.entries().iter().zip(q.entries()) {
        assert!((u - v).abs() < 1e-12);
    }
}

#[test]
fn missing_word_is_reported() {
    let shift = ShiftSpace::full(2).unwrap();
    let mut table = BTreeMap::new();
    table.insert(vec![0u8], Operator::identity(2));
    let err = CocycleGenerator::locally_constant(&shift, 0, table, NormKind::L2Induced, GeneratorBounds::default());
    assert!(matches!(err, Err(cocycle_lab::Error::MissingWord(w)) if w == vec![1]));
}

#[test]
fn periodic_point_products_repeat() {
    let (base, g) = common::diag_pair();
    let p = BasePoint::Symbolic(cocycle_lab::base::SymbolicWindow::periodic(vec![0, 0, 1]));
    let a3 = g.evaluate(&base, &p, 3).unwrap();
    let a6 = g.evaluate(&base, &p, 6).unwrap();
    let sq = a3.matmul(&a3);
    for (u, v) in a6.entries().iter().zip(sq.entries()) {
        assert!((u - v).abs() < 1e-12);
    }
}
