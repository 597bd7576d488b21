mod common;

use cocycle_lab::linalg::{invert, op_norm, spectral_radius, NormKind, Operator, ScaledOperator};
use proptest::prelude::*;

fn operator(dim: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec(-2.0f64..2.0, dim * dim).prop_map(move |e| Operator::new(dim, e).unwrap())
}

fn invertible(dim: usize) -> impl Strategy<Value = Operator> {
    operator(dim).prop_filter("well conditioned", |a| a.condition_estimate() < 1e6)
}

proptest! {
    #[test]
    fn scaled_products_match_plain_products(ops in prop::collection::vec(operator(3), 1..25)) {
        let mut s = ScaledOperator::identity(3);
        let mut p = Operator::identity(3);
        for a in &ops {
            s.left_mul(a);
            p = a.matmul(&p);
        }
        let q = s.to_operator();
        let scale = p.max_abs().max(1e-300);
        for (x, y) in q.entries().iter().zip(p.entries()) {
            prop_assert!((x - y).abs() <= 1e-10 * scale);
        }
        for kind in NormKind::ALL {
            let plain = op_norm(&p, kind);
            if plain > 1e-250 {
                prop_assert!((s.ln_norm(kind) - plain.ln()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn norms_are_submultiplicative(a in operator(3), b in operator(3)) {
        for kind in NormKind::ALL {
            let lhs = op_norm(&a.matmul(&b), kind);
            prop_assert!(lhs <= op_norm(&a, kind) * op_norm(&b, kind) * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn spectral_radius_below_every_norm(a in operator(3)) {
        let r = spectral_radius(&a);
        for kind in NormKind::ALL {
            prop_assert!(r <= op_norm(&a, kind) * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn inverse_is_two_sided(a in invertible(2)) {
        let ai = invert(&a).unwrap();
        for p in [a.matmul(&ai), ai.matmul(&a)] {
            let id = Operator::identity(2);
            for (x, y) in p.entries().iter().zip(id.entries()) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn scaled_inverse_inverts(ops in prop::collection::vec(invertible(2), 1..10)) {
        let mut s = ScaledOperator::identity(2);
        for a in &ops {
            s.left_mul(a);
        }
        if let Ok(si) = s.inverse() {
            let id = si.compose(&s);
            let p = id.to_operator();
            prop_assert!((p.get(0, 0) - 1.0).abs() < 1e-6 && p.get(1, 0).abs() < 1e-6);
        }
    }
}

#[test]
fn singular_operator_is_rejected() {
    let a = Operator::from_rows(&[[1.0, 2.0], [2.0, 4.0]]).unwrap();
    assert!(matches!(invert(&a), Err(cocycle_lab::Error::SingularOperator { .. })));
}

#[test]
fn golden_norm_is_phi() {
    let a = &common::golden_ops()[0];
    assert!((op_norm(a, NormKind::L2Induced) - common::PHI).abs() < 1e-12);
}
