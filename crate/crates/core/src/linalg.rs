//! Dense real matrix kernels: products, inverses, induced norms and the
//! spectral radius.
//!
//! Matrices here are small (the fiber dimension of a cocycle), so everything
//! is stored row-major in a flat `Vec<f64>`. Decompositions are delegated to
//! `nalgebra`.

use std::fmt;
use std::ops::Mul;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Condition estimate above which a matrix is treated as singular.
pub const SINGULAR_CONDITION: f64 = 1e14;

/// Above this dimension the spectral radius falls back to an iterative
/// Gelfand estimate instead of a full eigenvalue decomposition.
const EIGEN_DIM_LIMIT: usize = 64;

/// Induced operator norm used throughout an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    L2Induced,
    L1Induced,
    LinfInduced,
}

impl NormKind {
    pub const ALL: [NormKind; 3] = [NormKind::L2Induced, NormKind::L1Induced, NormKind::LinfInduced];

    /// The vector norm this operator norm is induced by.
    pub fn vector_norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L2Induced => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::L1Induced => v.iter().map(|x| x.abs()).sum(),
            NormKind::LinfInduced => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// A dense `dim × dim` real matrix with finite entries.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    entries: Vec<f64>,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

impl Operator {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidOperator("dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidOperator("entries must be finite".into()));
        }
        Ok(Self { dim, entries })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::InvalidOperator(format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1.0)
    }

    pub fn scalar(dim: usize, c: f64) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = c;
        }
        Self { dim, entries }
    }

    pub fn diag(values: &[f64]) -> Self {
        let dim = values.len();
        let mut entries = vec![0.0; dim * dim];
        for (i, v) in values.iter().enumerate() {
            entries[i * dim + i] = *v;
        }
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                entries[j * d + i] = self.entries[i * d + j];
            }
        }
        Self { dim: d, entries }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Operator) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            let row = &self.entries[i * d..(i + 1) * d];
            let out_row = &mut out[i * d..(i + 1) * d];
            for (k, a) in row.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let other_row = &other.entries[k * d..(k + 1) * d];
                for (o, b) in out_row.iter_mut().zip(other_row) {
                    *o += a * b;
                }
            }
        }
        Self { dim: d, entries: out }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        self.entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|x| x.is_finite())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let mut entries = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                entries.push(m[(i, j)]);
            }
        }
        Self { dim: d, entries }
    }

    fn singular_values(&self) -> Vec<f64> {
        match self.dim {
            1 => return vec![self.entries[0].abs()],
            2 => {
                let max = l2_norm_2x2(self);
                let (p, q, r, s) = (self.entries[0], self.entries[1], self.entries[2], self.entries[3]);
                let min = if max == 0.0 { 0.0 } else { (p * s - q * r).abs() / max };
                return vec![max, min];
            }
            _ => {}
        }
        self.to_nalgebra().singular_values().iter().copied().collect()
    }

    /// Ratio of the extreme singular values; infinite when rank deficient.
    pub fn condition_estimate(&self) -> f64 {
        let sv = self.singular_values();
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.matmul(rhs)
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Operator::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Induced operator norm.
pub fn op_norm(a: &Operator, kind: NormKind) -> f64 {
    let d = a.dim;
    match kind {
        NormKind::L1Induced => (0..d)
            .map(|j| (0..d).map(|i| a.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::LinfInduced => a
            .entries
            .chunks(d)
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::L2Induced => {
            if d == 2 {
                l2_norm_2x2(a)
            } else {
                a.singular_values().into_iter().fold(0.0, f64::max)
            }
        }
    }
}

/// Closed form for the largest singular value of a 2×2 matrix.
fn l2_norm_2x2(a: &Operator) -> f64 {
    let (p, q, r, s) = (a.entries[0], a.entries[1], a.entries[2], a.entries[3]);
    // Rescale so the squares below neither overflow nor underflow.
    let m = a.max_abs();
    if m == 0.0 {
        return 0.0;
    }
    let (p, q, r, s) = (p / m, q / m, r / m, s / m);
    let frob = p * p + q * q + r * r + s * s;
    let det = p * s - q * r;
    // σ₁² = (F + √(F² − 4 det²)) / 2, written as √((F/2)² − det²) to keep
    // cancellation out of the discriminant.
    let half = 0.5 * frob;
    let disc = ((half - det) * (half + det)).max(0.0).sqrt();
    m * (half + disc).sqrt()
}

/// Matrix inverse, rejecting operators whose condition estimate exceeds
/// [`SINGULAR_CONDITION`].
pub fn invert(a: &Operator) -> Result<Operator> {
    let condition = a.condition_estimate();
    if !(condition <= SINGULAR_CONDITION) {
        return Err(Error::SingularOperator { condition });
    }
    if a.dim == 1 {
        return Ok(Operator::scalar(1, 1.0 / a.entries[0]));
    }
    if a.dim == 2 {
        let (p, q, r, s) = (a.entries[0], a.entries[1], a.entries[2], a.entries[3]);
        let det = p * s - q * r;
        return Ok(Operator {
            dim: 2,
            entries: vec![s / det, -q / det, -r / det, p / det],
        });
    }
    let inv = a
        .to_nalgebra()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularOperator { condition })?;
    Ok(Operator::from_nalgebra(&inv))
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Operator) -> f64 {
    match a.dim {
        1 => a.entries[0].abs(),
        2 => {
            let (p, q, r, s) = (a.entries[0], a.entries[1], a.entries[2], a.entries[3]);
            let m = a.max_abs();
            if m == 0.0 {
                return 0.0;
            }
            let (p, q, r, s) = (p / m, q / m, r / m, s / m);
            let half_tr = 0.5 * (p + s);
            let det = p * s - q * r;
            let disc = half_tr * half_tr - det;
            let rho = if disc >= 0.0 {
                let root = disc.sqrt();
                // Larger-magnitude root computed without cancellation.
                half_tr.abs() + root
            } else {
                det.abs().sqrt()
            };
            m * rho
        }
        d if d <= EIGEN_DIM_LIMIT => a
            .to_nalgebra()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        _ => gelfand_radius(a),
    }
}

/// ‖A^(2^j)‖^(1/2^j) by repeated squaring with exact power-of-two rescaling.
fn gelfand_radius(a: &Operator) -> f64 {
    let mut p = ScaledOperator::from_operator(a.clone());
    let mut prev = f64::NAN;
    for j in 0..60 {
        if p.op.max_abs() == 0.0 {
            return 0.0;
        }
        let est = (p.ln_norm(NormKind::L2Induced) / 2f64.powi(j)).exp();
        if (est - prev).abs() <= 1e-12 * est {
            return est;
        }
        prev = est;
        let sq = p.op.matmul(&p.op);
        p = ScaledOperator {
            op: sq,
            exp2: 2 * p.exp2,
        };
        p.renormalize();
    }
    prev
}

/// A product kept as `2^exp2 · op` with `op` rescaled so that its largest
/// entry lies in `[1, 2)`. Long cocycle products stay representable this way.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledOperator {
    pub op: Operator,
    pub exp2: i64,
}

impl ScaledOperator {
    pub fn identity(dim: usize) -> Self {
        Self {
            op: Operator::identity(dim),
            exp2: 0,
        }
    }

    pub fn from_operator(op: Operator) -> Self {
        let mut s = Self { op, exp2: 0 };
        s.renormalize();
        s
    }

    pub fn dim(&self) -> usize {
        self.op.dim
    }

    /// Natural log of the scale factor.
    pub fn log_scale(&self) -> f64 {
        self.exp2 as f64 * std::f64::consts::LN_2
    }

    pub fn renormalize(&mut self) {
        let m = self.op.max_abs();
        if m == 0.0 || !m.is_finite() {
            return;
        }
        let e = binary_exponent(m);
        if e != 0 {
            let f = pow2(-e);
            for x in &mut self.op.entries {
                *x *= f;
            }
            self.exp2 += e as i64;
        }
    }

    /// Replace the product `P` by `a · P`.
    pub fn left_mul(&mut self, a: &Operator) {
        self.op = a.matmul(&self.op);
        self.renormalize();
    }

    /// Replace the product `P` by `P · a`.
    pub fn right_mul(&mut self, a: &Operator) {
        self.op = self.op.matmul(a);
        self.renormalize();
    }

    pub fn compose(&self, rhs: &ScaledOperator) -> ScaledOperator {
        let mut out = ScaledOperator {
            op: self.op.matmul(&rhs.op),
            exp2: self.exp2 + rhs.exp2,
        };
        out.renormalize();
        out
    }

    pub fn ln_norm(&self, kind: NormKind) -> f64 {
        self.log_scale() + op_norm(&self.op, kind).ln()
    }

    pub fn ln_spectral_radius(&self) -> f64 {
        self.log_scale() + spectral_radius(&self.op).ln()
    }

    pub fn inverse(&self) -> Result<ScaledOperator> {
        let inv = invert(&self.op)?;
        let mut out = ScaledOperator {
            op: inv,
            exp2: -self.exp2,
        };
        out.renormalize();
        Ok(out)
    }

    /// The plain matrix; overflows to infinity for very long products.
    pub fn to_operator(&self) -> Operator {
        if self.exp2.abs() > 2000 {
            let f = (self.log_scale()).exp();
            return self.op.scale(f);
        }
        let mut op = self.op.clone();
        let mut e = self.exp2;
        while e != 0 {
            let step = e.clamp(-1000, 1000);
            let f = pow2(step as i32);
            for x in &mut op.entries {
                *x *= f;
            }
            e -= step;
        }
        op
    }

    /// Apply to a vector, returning the unscaled image and the log scale.
    pub fn apply_scaled(&self, v: &[f64]) -> (Vec<f64>, f64) {
        (self.op.apply(v), self.log_scale())
    }
}

/// Exponent `e` with `2^e <= m < 2^(e+1)` for finite positive `m`.
fn binary_exponent(m: f64) -> i32 {
    let bits = m.to_bits();
    let raw = ((bits >> 52) & 0x7ff) as i32;
    if raw == 0 {
        // subnormal
        m.log2().floor() as i32
    } else {
        raw - 1023
    }
}

fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}
