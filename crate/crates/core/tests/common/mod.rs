//! Brute-force reference implementations. Deliberately naive: plain matrix
//! products, full enumeration, no scale tracking.
#![allow(dead_code)]

use std::collections::BTreeSet;

use cocycle_lab::base::{BasePoint, BaseSystem, ShiftSpace};
use cocycle_lab::cocycle::CocycleGenerator;
use cocycle_lab::linalg::{op_norm, spectral_radius, NormKind, Operator};

/// `A(f^{n−1}x) ⋯ A(x)` by repeated multiplication.
pub fn naive_product(gen: &CocycleGenerator, base: &BaseSystem, x: &BasePoint, n: usize) -> Operator {
    let mut p = Operator::identity(gen.dim());
    let mut y = x.clone();
    for _ in 0..n {
        p = gen.generator_at(base, &y).unwrap().matmul(&p);
        y = base.step(&y, 1).unwrap();
    }
    p
}

/// Generator values `A(f^j x)`, `j = 0..n`.
pub fn naive_factors(gen: &CocycleGenerator, base: &BaseSystem, x: &BasePoint, n: usize) -> Vec<Operator> {
    let mut out = Vec::with_capacity(n);
    let mut y = x.clone();
    for _ in 0..n {
        out.push(gen.generator_at(base, &y).unwrap());
        y = base.step(&y, 1).unwrap();
    }
    out
}

/// Double loop over `(n, i)`: `n` is good when
/// `a_n(x) − a_{n−i}(f^i x) ≥ (λ − ε) i` for all `L ≤ i ≤ n`.
/// Suffix norms are tabulated first from plain products.
pub fn brute_good_times(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    n_max: usize,
    lambda: f64,
    eps: f64,
    l_min: usize,
) -> Vec<usize> {
    let f = naive_factors(gen, base, x, n_max);
    let d = gen.dim();
    let norm = gen.norm();
    // suffix[i][m] = ln ‖A(f^{i+m−1}x) ⋯ A(f^i x)‖
    let suffix: Vec<Vec<f64>> = (0..=n_max)
        .map(|i| {
            let mut p = Operator::identity(d);
            let mut row = vec![0.0];
            for a in &f[i..] {
                p = a.matmul(&p);
                row.push(op_norm(&p, norm).ln());
            }
            row
        })
        .collect();
    let mut good = Vec::new();
    for n in 1..=n_max {
        let a_n = suffix[0][n];
        let ok = (l_min.max(1)..=n).all(|i| a_n - suffix[i][n - i] >= (lambda - eps) * i as f64);
        if ok {
            good.push(n);
        }
    }
    good
}

/// All cyclically allowed words of length `k`, and the set of their rotation
/// classes (each class keyed by its smallest member).
pub fn brute_periodic_words(shift: &ShiftSpace, k: usize) -> (Vec<Vec<u8>>, BTreeSet<Vec<u8>>) {
    let a = shift.alphabet_size();
    let mut words = Vec::new();
    let total = a.pow(k as u32);
    for code in 0..total {
        let mut w = vec![0u8; k];
        let mut c = code;
        for i in (0..k).rev() {
            w[i] = (c % a) as u8;
            c /= a;
        }
        if shift.cyclically_allowed(&w) {
            words.push(w);
        }
    }
    let classes = words
        .iter()
        .map(|w| (0..k).map(|r| [&w[r..], &w[..r]].concat()).min().unwrap())
        .collect();
    (words, classes)
}

/// Every word of each length `1..=depth`, products in cocycle order.
pub fn all_products(ops: &[Operator], depth: usize) -> Vec<(Vec<u8>, Operator)> {
    let d = ops[0].dim();
    let mut level = vec![(Vec::new(), Operator::identity(d))];
    let mut out = Vec::new();
    for _ in 0..depth {
        let mut next = Vec::new();
        for (w, p) in &level {
            for (s, a) in ops.iter().enumerate() {
                let mut w2 = w.clone();
                w2.push(s as u8);
                next.push((w2, a.matmul(p)));
            }
        }
        out.extend(next.iter().cloned());
        level = next;
    }
    out
}

/// `(max r(P)^{1/ℓ} over ℓ ≤ depth, max ‖P‖^{1/ℓ} per ℓ)`.
pub fn brute_jsr(ops: &[Operator], depth: usize, norm: NormKind) -> (f64, Vec<f64>) {
    let mut lower: f64 = 0.0;
    let mut norm_max = vec![0.0f64; depth];
    for (w, p) in all_products(ops, depth) {
        let l = w.len();
        lower = lower.max(spectral_radius(&p).powf(1.0 / l as f64));
        norm_max[l - 1] = norm_max[l - 1].max(op_norm(&p, norm).powf(1.0 / l as f64));
    }
    (lower, norm_max)
}

/// Periodic points of period `k` of a 2×2 integer matrix, by scanning the
/// grid `(1/N)ℤ²` with `N = |det(M^k − I)|`. Numerators over `N`, sorted.
pub fn brute_torus_periodic(m: [[i64; 2]; 2], k: u32) -> (u128, Vec<[u128; 2]>) {
    let mul = |a: [[i64; 2]; 2], b: [[i64; 2]; 2]| {
        let mut c = [[0i64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    };
    let mut p = [[1, 0], [0, 1]];
    for _ in 0..k {
        p = mul(p, m);
    }
    let b = [[p[0][0] - 1, p[0][1]], [p[1][0], p[1][1] - 1]];
    let n = (b[0][0] * b[1][1] - b[0][1] * b[1][0]).unsigned_abs() as i64;
    let mut pts = Vec::new();
    for u in 0..n {
        for v in 0..n {
            let r0 = (b[0][0] * u + b[0][1] * v).rem_euclid(n);
            let r1 = (b[1][0] * u + b[1][1] * v).rem_euclid(n);
            if r0 == 0 && r1 == 0 {
                pts.push([u as u128, v as u128]);
            }
        }
    }
    (n as u128, pts)
}

/// The truncated Lyapunov norm summed term by term from plain products.
pub fn brute_lyap_norm(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    u: &[f64],
    lambda: f64,
    chi: f64,
    eps: f64,
    t: usize,
) -> f64 {
    let norm = gen.norm();
    let mut sum = 0.0;
    for n in 0..=t {
        let p = naive_product(gen, base, x, n);
        sum += norm.vector_norm(&p.apply(u)) * (-(lambda + eps) * n as f64).exp();
    }
    // 𝔸^{−n}_x = A(f^{−n}x)^{−1} ⋯ A(f^{−1}x)^{−1}
    let mut q = Operator::identity(gen.dim());
    let mut y = x.clone();
    for n in 1..=t {
        y = base.step(&y, -1).unwrap();
        let inv = cocycle_lab::linalg::invert(&gen.generator_at(base, &y).unwrap()).unwrap();
        q = inv.matmul(&q);
        sum += norm.vector_norm(&q.apply(u)) * ((chi - eps) * n as f64).exp();
    }
    sum
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn diag_pair() -> (BaseSystem, CocycleGenerator) {
    let shift = ShiftSpace::full(2).unwrap();
    let g = CocycleGenerator::from_symbol_ops(&shift, &[Operator::diag(&[2.0, 0.5]), Operator::diag(&[0.5, 2.0])])
        .unwrap();
    (BaseSystem::Shift(shift), g)
}

pub fn golden_ops() -> Vec<Operator> {
    vec![
        Operator::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
        Operator::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
    ]
}

pub const PHI: f64 = 1.618_033_988_749_895;

/// Path of a repo fixture.
pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
