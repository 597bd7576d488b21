//! Cocycle generators `x ↦ A(x)` and the products
//! `𝔸ⁿ_x = A(f^{n−1}x) ⋯ A(x)`, `𝔸^{−n}_x = (𝔸ⁿ_{f^{−n}x})^{−1}`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem, ShiftSpace, TorusPoint};
use crate::error::{Error, Result};
use crate::linalg::{invert, op_norm, NormKind, Operator, ScaledOperator};

/// Largest lookup table (in words) a locally constant generator may index.
const MAX_TABLE: usize = 1 << 20;

/// Tolerance on the uniform bounds `λ′`, `χ′`.
const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorKind {
    Constant(Operator),
    /// `A(x)` depends on `x_{−m} … x_m`.
    LocallyConstant {
        memory: usize,
        table: BTreeMap<Vec<u8>, Operator>,
    },
    /// `A(x) = A₀ · exp(η Φ(x))`, `Φ = cos θ · D + sin θ · S`,
    /// `θ = 2π ⟨freq, x⟩`, `D = diag(1, −1, 1, …)`, `S` skew with ones above
    /// the diagonal.
    TorusSmooth {
        a0: Operator,
        eta: f64,
        freq: Vec<f64>,
    },
}

/// Declared regularity; `None` fields are derived from the generator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBounds {
    pub holder_alpha: Option<f64>,
    #[serde(rename = "holder_M")]
    pub holder_m: Option<f64>,
    pub lambda_prime: Option<f64>,
    pub chi_prime: Option<f64>,
}

#[derive(Debug, Clone)]
struct Lookup {
    alphabet: usize,
    width: usize,
    modulus: usize,
    /// word index -> slot in `ops`
    index: Vec<Option<u32>>,
    ops: Vec<Operator>,
    inverses: Vec<Operator>,
}

#[derive(Debug, Clone)]
pub struct CocycleGenerator {
    kind: GeneratorKind,
    dim: usize,
    norm: NormKind,
    holder_alpha: f64,
    holder_m: f64,
    lambda_prime: f64,
    chi_prime: f64,
    constant_inverse: Option<Operator>,
    lookup: Option<Lookup>,
    smooth: Option<SmoothField>,
}

#[derive(Debug, Clone)]
struct SmoothField {
    a0_inv: Operator,
    d: DMatrix<f64>,
    s: DMatrix<f64>,
}

/// `‖A − B‖ + ‖A⁻¹ − B⁻¹‖`.
pub fn gl_distance(a: &Operator, b: &Operator, kind: NormKind) -> Result<f64> {
    let (ai, bi) = (invert(a)?, invert(b)?);
    Ok(op_norm(&a.sub(b), kind) + op_norm(&ai.sub(&bi), kind))
}

fn alternating_diag(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| if i != j { 0.0 } else if i % 2 == 0 { 1.0 } else { -1.0 })
}

fn upper_skew(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| match i.cmp(&j) {
        std::cmp::Ordering::Less => 1.0,
        std::cmp::Ordering::Greater => -1.0,
        std::cmp::Ordering::Equal => 0.0,
    })
}

/// All allowed words of the given length, in lexicographic order.
pub(crate) fn allowed_words(shift: &ShiftSpace, len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(len);
    fn rec(shift: &ShiftSpace, len: usize, word: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if word.len() == len {
            out.push(word.clone());
            return;
        }
        for s in 0..shift.alphabet_size() as u8 {
            if word.last().is_none_or(|&l| shift.allowed(l, s)) {
                word.push(s);
                rec(shift, len, word, out);
                word.pop();
            }
        }
    }
    rec(shift, len, &mut word, &mut out);
    out
}

impl CocycleGenerator {
    pub fn constant(a: Operator) -> Result<Self> {
        Self::constant_with(a, NormKind::default(), GeneratorBounds::default())
    }

    pub fn constant_with(a: Operator, norm: NormKind, bounds: GeneratorBounds) -> Result<Self> {
        let inv = invert(&a)?;
        let lam = op_norm(&a, norm).ln();
        let chi = -op_norm(&inv, norm).ln();
        let mut g = Self {
            dim: a.dim(),
            kind: GeneratorKind::Constant(a),
            norm,
            holder_alpha: 1.0,
            holder_m: 1.0,
            lambda_prime: lam,
            chi_prime: chi,
            constant_inverse: Some(inv),
            lookup: None,
            smooth: None,
        };
        g.apply_declared(bounds, lam, chi)?;
        Ok(g)
    }

    /// `A(x) = table[x_{−m} … x_m]`; the table must cover every allowed word.
    pub fn locally_constant(
        shift: &ShiftSpace,
        memory: usize,
        table: BTreeMap<Vec<u8>, Operator>,
        norm: NormKind,
        bounds: GeneratorBounds,
    ) -> Result<Self> {
        let width = 2 * memory + 1;
        let alphabet = shift.alphabet_size();
        let modulus = (alphabet as f64).powi(width as i32);
        if modulus > MAX_TABLE as f64 {
            return Err(Error::InvalidGenerator(format!(
                "alphabet^(2m+1) = {modulus} exceeds the lookup budget"
            )));
        }
        let modulus = modulus as usize;
        let dim = table
            .values()
            .next()
            .map(|a| a.dim())
            .ok_or_else(|| Error::InvalidGenerator("empty generator table".into()))?;
        let mut index = vec![None; modulus];
        let mut ops = Vec::with_capacity(table.len());
        let mut inverses = Vec::with_capacity(table.len());
        for (word, a) in &table {
            if word.len() != width || word.iter().any(|&s| s as usize >= alphabet) {
                return Err(Error::InvalidGenerator(format!(
                    "table word {word:?} is not a word of length {width} over {alphabet} symbols"
                )));
            }
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: a.dim(),
                });
            }
            let slot = ops.len() as u32;
            inverses.push(invert(a)?);
            ops.push(a.clone());
            index[word_index(word, alphabet)] = Some(slot);
        }
        for w in allowed_words(shift, width) {
            if index[word_index(&w, alphabet)].is_none() {
                return Err(Error::MissingWord(w));
            }
        }
        let lam = ops.iter().map(|a| op_norm(a, norm).ln()).fold(f64::NEG_INFINITY, f64::max);
        let chi = -inverses.iter().map(|a| op_norm(a, norm).ln()).fold(f64::NEG_INFINITY, f64::max);
        // A changes only when the central (2m+1)-word does, i.e. at distance
        // >= base^{−m}.
        let mut spread: f64 = 0.0;
        for i in 0..ops.len() {
            for j in i + 1..ops.len() {
                spread = spread.max(
                    op_norm(&ops[i].sub(&ops[j]), norm) + op_norm(&inverses[i].sub(&inverses[j]), norm),
                );
            }
        }
        let holder_m = (spread * shift.metric_base().powi(memory as i32)).max(1e-12);
        let mut g = Self {
            kind: GeneratorKind::LocallyConstant { memory, table },
            dim,
            norm,
            holder_alpha: 1.0,
            holder_m,
            lambda_prime: lam,
            chi_prime: chi,
            constant_inverse: None,
            lookup: Some(Lookup {
                alphabet,
                width,
                modulus,
                index,
                ops,
                inverses,
            }),
            smooth: None,
        };
        g.apply_declared(bounds, lam, chi)?;
        Ok(g)
    }

    /// One operator per symbol over the full shift (`m = 0`).
    pub fn from_symbol_ops(shift: &ShiftSpace, ops: &[Operator]) -> Result<Self> {
        if ops.len() != shift.alphabet_size() {
            return Err(Error::InvalidGenerator(format!(
                "{} operators for {} symbols",
                ops.len(),
                shift.alphabet_size()
            )));
        }
        let table = ops.iter().enumerate().map(|(s, a)| (vec![s as u8], a.clone())).collect();
        Self::locally_constant(shift, 0, table, NormKind::default(), GeneratorBounds::default())
    }

    pub fn torus_smooth(a0: Operator, eta: f64, freq: Vec<f64>, norm: NormKind, bounds: GeneratorBounds) -> Result<Self> {
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidGenerator("eta must be finite and non-negative".into()));
        }
        if freq.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidGenerator("frequencies must be finite".into()));
        }
        let dim = a0.dim();
        let a0_inv = invert(&a0)?;
        let d = alternating_diag(dim);
        let s = upper_skew(dim);
        let s_norm = op_norm(&Operator::from_nalgebra(&s), norm);
        let phi_bound = (1.0 + s_norm * s_norm).sqrt();
        let lam = op_norm(&a0, norm).ln() + eta * phi_bound;
        let chi = -(op_norm(&a0_inv, norm).ln() + eta * phi_bound);
        let freq_l1: f64 = freq.iter().map(|f| f.abs()).sum();
        let holder_m = ((op_norm(&a0, norm) + op_norm(&a0_inv, norm))
            * eta
            * (eta * (1.0 + s_norm)).exp()
            * (1.0 + s_norm)
            * 2.0
            * std::f64::consts::PI
            * freq_l1)
            .max(1e-12);
        let mut g = Self {
            kind: GeneratorKind::TorusSmooth { a0, eta, freq },
            dim,
            norm,
            holder_alpha: 1.0,
            holder_m,
            lambda_prime: lam,
            chi_prime: chi,
            constant_inverse: None,
            lookup: None,
            smooth: Some(SmoothField { a0_inv, d, s }),
        };
        g.apply_declared(bounds, lam, chi)?;
        Ok(g)
    }

    /// Install declared constants, checking the uniform bounds against the
    /// exact (or analytic) values.
    fn apply_declared(&mut self, bounds: GeneratorBounds, lam: f64, chi: f64) -> Result<()> {
        if let Some(a) = bounds.holder_alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::InvalidGenerator("holder_alpha must lie in (0, 1]".into()));
            }
            self.holder_alpha = a;
        }
        if let Some(m) = bounds.holder_m {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidGenerator("holder_M must be positive".into()));
            }
            self.holder_m = m;
        }
        let exact = !matches!(self.kind, GeneratorKind::TorusSmooth { .. });
        if let Some(l) = bounds.lambda_prime {
            if exact && l < lam - BOUND_TOL {
                return Err(Error::BoundsViolated(format!("lambda' = {l} < sup ln|A| = {lam}")));
            }
            self.lambda_prime = l;
        }
        if let Some(c) = bounds.chi_prime {
            if exact && c > chi + BOUND_TOL {
                return Err(Error::BoundsViolated(format!("chi' = {c} > -sup ln|A^-1| = {chi}")));
            }
            self.chi_prime = c;
        }
        if self.chi_prime > self.lambda_prime + BOUND_TOL {
            return Err(Error::BoundsViolated("chi' exceeds lambda'".into()));
        }
        Ok(())
    }

    /// Check declared torus bounds on a deterministic sweep of `samples` points.
    pub fn verify_bounds_on_sweep(&self, base: &BaseSystem, samples: usize, seed: u64) -> Result<()> {
        if !matches!(self.kind, GeneratorKind::TorusSmooth { .. }) {
            return Ok(());
        }
        for i in 0..samples as u64 {
            let x = crate::base::generic_point(base, seed, i);
            self.generator_pair(base, &x)?;
        }
        Ok(())
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> NormKind {
        self.norm
    }

    pub fn holder_alpha(&self) -> f64 {
        self.holder_alpha
    }

    pub fn holder_m(&self) -> f64 {
        self.holder_m
    }

    pub fn lambda_prime(&self) -> f64 {
        self.lambda_prime
    }

    pub fn chi_prime(&self) -> f64 {
        self.chi_prime
    }

    pub fn is_locally_constant(&self) -> bool {
        !matches!(self.kind, GeneratorKind::TorusSmooth { .. })
    }

    /// Symbol window `[−m, m]` the generator reads; 0 for constant ones.
    pub fn memory(&self) -> usize {
        match &self.kind {
            GeneratorKind::LocallyConstant { memory, .. } => *memory,
            _ => 0,
        }
    }

    /// The same generator multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter("scale must be positive".into()));
        }
        let mut g = self.clone();
        let shift = c.ln();
        g.lambda_prime += shift;
        g.chi_prime += shift;
        g.holder_m *= c.max(1.0 / c);
        match &mut g.kind {
            GeneratorKind::Constant(a) => *a = a.scale(c),
            GeneratorKind::LocallyConstant { table, .. } => {
                for a in table.values_mut() {
                    *a = a.scale(c);
                }
            }
            GeneratorKind::TorusSmooth { a0, .. } => *a0 = a0.scale(c),
        }
        if let Some(inv) = &mut g.constant_inverse {
            *inv = inv.scale(1.0 / c);
        }
        if let Some(l) = &mut g.lookup {
            l.ops.iter_mut().for_each(|a| *a = a.scale(c));
            l.inverses.iter_mut().for_each(|a| *a = a.scale(1.0 / c));
        }
        if let Some(s) = &mut g.smooth {
            s.a0_inv = s.a0_inv.scale(1.0 / c);
        }
        Ok(g)
    }

    fn check_base(&self, base: &BaseSystem, x: &BasePoint) -> Result<()> {
        match (&self.kind, base, x) {
            (GeneratorKind::Constant(_), _, _) => Ok(()),
            (GeneratorKind::LocallyConstant { .. }, BaseSystem::Shift(s), BasePoint::Symbolic(_)) => {
                let l = self.lookup.as_ref().expect("lookup table");
                if s.alphabet_size() != l.alphabet {
                    return Err(Error::InvalidGenerator("alphabet does not match the base".into()));
                }
                Ok(())
            }
            (GeneratorKind::TorusSmooth { freq, .. }, BaseSystem::Torus(t), BasePoint::Torus(_)) => {
                if freq.len() != t.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: t.dim(),
                        found: freq.len(),
                    });
                }
                Ok(())
            }
            _ => Err(Error::InvalidGenerator("generator kind does not match the base system".into())),
        }
    }

    fn smooth_pair(&self, p: &TorusPoint) -> Result<(Operator, Operator)> {
        let GeneratorKind::TorusSmooth { a0, eta, freq } = &self.kind else {
            unreachable!()
        };
        let sf = self.smooth.as_ref().expect("smooth field");
        let coords = p.coords();
        let theta = 2.0 * std::f64::consts::PI * freq.iter().zip(&coords).map(|(f, c)| f * c).sum::<f64>();
        let phi = &sf.d * theta.cos() + &sf.s * theta.sin();
        let e_plus = Operator::from_nalgebra(&(&phi * *eta).exp());
        let e_minus = Operator::from_nalgebra(&(&phi * -*eta).exp());
        let a = a0.matmul(&e_plus);
        let a_inv = e_minus.matmul(&sf.a0_inv);
        if !a.is_finite() || !a_inv.is_finite() {
            return Err(Error::InvalidGenerator("generator is not finite".into()));
        }
        let (la, li) = (op_norm(&a, self.norm).ln(), op_norm(&a_inv, self.norm).ln());
        if la > self.lambda_prime + BOUND_TOL || li > -self.chi_prime + BOUND_TOL {
            return Err(Error::BoundsViolated(format!(
                "ln|A(x)| = {la}, ln|A(x)^-1| = {li} against lambda' = {}, chi' = {}",
                self.lambda_prime, self.chi_prime
            )));
        }
        Ok((a, a_inv))
    }

    /// `(A(x), A(x)⁻¹)`.
    pub fn generator_pair(&self, base: &BaseSystem, x: &BasePoint) -> Result<(Operator, Operator)> {
        self.check_base(base, x)?;
        match (&self.kind, x) {
            (GeneratorKind::Constant(a), _) => Ok((a.clone(), self.constant_inverse.clone().unwrap())),
            (GeneratorKind::LocallyConstant { memory, .. }, BasePoint::Symbolic(w)) => {
                let m = *memory as i64;
                let word = w.symbols(-m, m)?;
                let l = self.lookup.as_ref().unwrap();
                let slot = l.index[word_index(&word, l.alphabet)].ok_or(Error::MissingWord(word))?;
                Ok((l.ops[slot as usize].clone(), l.inverses[slot as usize].clone()))
            }
            (GeneratorKind::TorusSmooth { .. }, BasePoint::Torus(p)) => self.smooth_pair(p),
            _ => unreachable!("checked by check_base"),
        }
    }

    pub fn generator_at(&self, base: &BaseSystem, x: &BasePoint) -> Result<Operator> {
        Ok(self.generator_pair(base, x)?.0)
    }

    /// Calls `visit(A, A⁻¹)` for the points `f^j x`, `j = 0..count`.
    fn for_each_factor(
        &self,
        base: &BaseSystem,
        x: &BasePoint,
        count: usize,
        mut visit: impl FnMut(&Operator, &Operator),
    ) -> Result<()> {
        self.check_base(base, x)?;
        if count == 0 {
            return Ok(());
        }
        match (&self.kind, x) {
            (GeneratorKind::Constant(a), _) => {
                let inv = self.constant_inverse.as_ref().unwrap();
                for _ in 0..count {
                    visit(a, inv);
                }
            }
            (GeneratorKind::LocallyConstant { memory, .. }, BasePoint::Symbolic(w)) => {
                let m = *memory as i64;
                let l = self.lookup.as_ref().unwrap();
                let symbols = w.symbols(-m, count as i64 - 1 + m)?;
                let mut idx = word_index(&symbols[..l.width - 1], l.alphabet);
                for j in 0..count {
                    idx = (idx * l.alphabet + symbols[j + l.width - 1] as usize) % l.modulus;
                    let slot = match l.index[idx] {
                        Some(s) => s as usize,
                        None => return Err(Error::MissingWord(symbols[j..j + l.width].to_vec())),
                    };
                    visit(&l.ops[slot], &l.inverses[slot]);
                }
            }
            (GeneratorKind::TorusSmooth { .. }, BasePoint::Torus(p)) => {
                let t = base.as_torus().unwrap();
                let mut q = p.clone();
                for j in 0..count {
                    let (a, ai) = self.smooth_pair(&q)?;
                    visit(&a, &ai);
                    if j + 1 < count {
                        q = t.step(&q, 1);
                    }
                }
            }
            _ => unreachable!("checked by check_base"),
        }
        Ok(())
    }

    /// `(A(f^j x), A(f^j x)⁻¹)` for `j = lo, …, lo + count − 1`.
    pub fn orbit_pairs(&self, base: &BaseSystem, x: &BasePoint, lo: i64, count: usize) -> Result<Vec<(Operator, Operator)>> {
        let start = base.step(x, lo)?;
        let mut out = Vec::with_capacity(count);
        self.for_each_factor(base, &start, count, |a, ai| out.push((a.clone(), ai.clone())))?;
        Ok(out)
    }

    /// `(𝔸ⁿ_x, (𝔸ⁿ_x)⁻¹)` as scale-tracked products. The inverse is built as
    /// a product of inverses, never by inverting a long product.
    pub fn evaluate_pair(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<(ScaledOperator, ScaledOperator)> {
        let count = n.unsigned_abs() as usize;
        let start = if n >= 0 { x.clone() } else { base.step(x, n)? };
        let mut fwd = ScaledOperator::identity(self.dim);
        let mut inv = ScaledOperator::identity(self.dim);
        self.for_each_factor(base, &start, count, |a, ai| {
            fwd.left_mul(a);
            inv.right_mul(ai);
        })?;
        if n >= 0 {
            Ok((fwd, inv))
        } else {
            Ok((inv, fwd))
        }
    }

    pub fn evaluate_scaled(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<ScaledOperator> {
        let count = n.unsigned_abs() as usize;
        if n >= 0 {
            let mut fwd = ScaledOperator::identity(self.dim);
            self.for_each_factor(base, x, count, |a, _| fwd.left_mul(a))?;
            Ok(fwd)
        } else {
            let start = base.step(x, n)?;
            let mut inv = ScaledOperator::identity(self.dim);
            self.for_each_factor(base, &start, count, |_, ai| inv.right_mul(ai))?;
            Ok(inv)
        }
    }

    /// `𝔸ⁿ_x` as a plain matrix (may overflow for very long products; use
    /// [`Self::evaluate_scaled`] then).
    pub fn evaluate(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<Operator> {
        Ok(self.evaluate_scaled(base, x, n)?.to_operator())
    }

    /// `ln ‖𝔸ⁿ_x‖`.
    pub fn log_norm(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<f64> {
        Ok(self.evaluate_scaled(base, x, n)?.ln_norm(self.norm))
    }

    /// `ln ‖(𝔸ⁿ_x)⁻¹‖`.
    pub fn log_norm_inverse(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<f64> {
        let (_, inv) = self.evaluate_pair(base, x, n)?;
        Ok(inv.ln_norm(self.norm))
    }

    /// `ln Q(x, n) = ln ‖𝔸ⁿ_x‖ + ln ‖(𝔸ⁿ_x)⁻¹‖`.
    pub fn distortion(&self, base: &BaseSystem, x: &BasePoint, n: i64) -> Result<f64> {
        let (fwd, inv) = self.evaluate_pair(base, x, n)?;
        Ok(fwd.ln_norm(self.norm) + inv.ln_norm(self.norm))
    }

    /// `a_k(x)` and `ã_k(x)` for `k = 0..=n` along one forward pass.
    pub fn log_norm_profile(&self, base: &BaseSystem, x: &BasePoint, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut a = Vec::with_capacity(n + 1);
        let mut at = Vec::with_capacity(n + 1);
        a.push(0.0);
        at.push(0.0);
        let mut fwd = ScaledOperator::identity(self.dim);
        let mut inv = ScaledOperator::identity(self.dim);
        let norm = self.norm;
        self.for_each_factor(base, x, n, |m, mi| {
            fwd.left_mul(m);
            inv.right_mul(mi);
            a.push(fwd.ln_norm(norm));
            at.push(inv.ln_norm(norm));
        })?;
        Ok((a, at))
    }
}

fn word_index(word: &[u8], alphabet: usize) -> usize {
    word.iter().fold(0usize, |acc, &s| acc * alphabet + s as usize)
}
