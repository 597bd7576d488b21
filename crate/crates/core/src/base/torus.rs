//! Hyperbolic toral automorphisms acting on exact rational points.
//!
//! A torus point is stored as integer numerators over a common denominator:
//! generic points live on the dyadic grid `2^-64 ℤ^d / ℤ^d` and periodic
//! points on `N^-1 ℤ^d / ℤ^d` with `N = |det(M^k − I)|`. Both grids are
//! invariant under an integer matrix with determinant ±1, so orbits are
//! computed exactly and `f^k p = p` holds bit-for-bit for closed orbits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Operator;

/// Denominator of generic (sampled) points.
pub const DYADIC_DEN: u128 = 1u128 << 64;

/// A square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    pub dim: usize,
    pub entries: Vec<i128>,
}

impl IntMatrix {
    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidBase("integer matrix must be square and non-empty".into()));
        }
        Ok(Self {
            dim,
            entries: rows.iter().flatten().map(|&v| v as i128).collect(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1;
        }
        Self { dim, entries }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i128 {
        self.entries[i * self.dim + j]
    }

    pub fn rows_i64(&self) -> Vec<Vec<i64>> {
        self.entries
            .chunks(self.dim)
            .map(|r| r.iter().map(|&v| v as i64).collect())
            .collect()
    }

    pub fn checked_mul(&self, other: &IntMatrix) -> Option<IntMatrix> {
        let d = self.dim;
        let mut entries = vec![0i128; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc: i128 = 0;
                for k in 0..d {
                    acc = acc.checked_add(self.get(i, k).checked_mul(other.get(k, j))?)?;
                }
                entries[i * d + j] = acc;
            }
        }
        Some(IntMatrix { dim: d, entries })
    }

    pub fn checked_pow(&self, n: u32) -> Option<IntMatrix> {
        let mut result = IntMatrix::identity(self.dim);
        for _ in 0..n {
            result = self.checked_mul(&result)?;
        }
        Some(result)
    }

    pub fn minus_identity(&self) -> IntMatrix {
        let mut out = self.clone();
        for i in 0..self.dim {
            out.entries[i * self.dim + i] -= 1;
        }
        out
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn checked_det(&self) -> Option<i128> {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n {
            if a[k * n + k] == 0 {
                let swap = (k + 1..n).find(|&r| a[r * n + k] != 0)?;
                for c in 0..n {
                    a.swap(k * n + c, swap * n + c);
                }
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = a[i * n + j]
                        .checked_mul(a[k * n + k])?
                        .checked_sub(a[i * n + k].checked_mul(a[k * n + j])?)?;
                    a[i * n + j] = num / prev;
                }
            }
            prev = a[k * n + k];
        }
        Some(sign * a[(n - 1) * n + (n - 1)])
    }

    /// Adjugate, so that `self · adj = det · I`.
    pub fn checked_adjugate(&self) -> Option<IntMatrix> {
        let n = self.dim;
        if n == 1 {
            return Some(IntMatrix { dim: 1, entries: vec![1] });
        }
        let mut entries = vec![0i128; n * n];
        for i in 0..n {
            for j in 0..n {
                let minor: Vec<Vec<i128>> = (0..n)
                    .filter(|&r| r != j)
                    .map(|r| (0..n).filter(|&c| c != i).map(|c| self.get(r, c)).collect())
                    .collect();
                let m = IntMatrix {
                    dim: n - 1,
                    entries: minor.into_iter().flatten().collect(),
                };
                let det = m.checked_det().unwrap_or(0);
                let det = if n - 1 == 1 { m.entries[0] } else { det };
                entries[i * n + j] = if (i + j) % 2 == 0 { det } else { det.checked_neg()? };
            }
        }
        Some(IntMatrix { dim: n, entries })
    }

    pub fn to_operator(&self) -> Operator {
        Operator::new(self.dim, self.entries.iter().map(|&v| v as f64).collect())
            .expect("integer matrix entries are finite")
    }

    /// Entries reduced into `[0, modulus)`.
    fn reduce(&self, modulus: u128) -> Vec<u128> {
        self.entries.iter().map(|&v| rem_euclid(v, modulus)).collect()
    }
}

fn rem_euclid(v: i128, modulus: u128) -> u128 {
    if modulus > i128::MAX as u128 {
        // modulus = 2^127 or more never happens; denominators are <= 2^64
        unreachable!("modulus out of range")
    }
    v.rem_euclid(modulus as i128) as u128
}

#[inline]
fn mulmod(a: u128, b: u128, m: u128) -> u128 {
    // a, b < m <= 2^64, so the product fits in 128 bits
    (a * b) % m
}

#[inline]
fn addmod(a: u128, b: u128, m: u128) -> u128 {
    (a + b) % m
}

/// `M · v mod m` for residues `mat` already reduced mod `m`.
fn matvec_mod(mat: &[u128], dim: usize, v: &[u128], m: u128) -> Vec<u128> {
    (0..dim)
        .map(|i| {
            (0..dim).fold(0u128, |acc, j| addmod(acc, mulmod(mat[i * dim + j], v[j], m), m))
        })
        .collect()
}

fn matmul_mod(a: &[u128], b: &[u128], dim: usize, m: u128) -> Vec<u128> {
    let mut out = vec![0u128; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            out[i * dim + j] =
                (0..dim).fold(0u128, |acc, k| addmod(acc, mulmod(a[i * dim + k], b[k * dim + j], m), m));
        }
    }
    out
}

fn matpow_mod(mat: &[u128], dim: usize, mut n: u64, m: u128) -> Vec<u128> {
    let mut result = vec![0u128; dim * dim];
    for i in 0..dim {
        result[i * dim + i] = 1 % m;
    }
    let mut base = mat.to_vec();
    while n > 0 {
        if n & 1 == 1 {
            result = matmul_mod(&base, &result, dim, m);
        }
        base = matmul_mod(&base, &base, dim, m);
        n >>= 1;
    }
    result
}

/// A point of `ℝ^d / ℤ^d` with coordinates `num_i / den`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TorusPoint {
    num: Vec<u128>,
    den: u128,
}

impl TorusPoint {
    /// Nearest dyadic grid point to the given real coordinates (mod 1).
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("torus coordinates must be finite".into()));
        }
        let num = coords
            .iter()
            .map(|&c| {
                let frac = c - c.floor();
                // exact: scaling by a power of two
                let v = (frac * 18446744073709551616.0).floor();
                if v >= 18446744073709551616.0 {
                    0
                } else {
                    v as u128
                }
            })
            .collect();
        Ok(Self { num, den: DYADIC_DEN })
    }

    pub fn from_rational(num: Vec<u128>, den: u128) -> Result<Self> {
        if den == 0 || den > DYADIC_DEN || num.iter().any(|&n| n >= den) {
            return Err(Error::InvalidParameter("bad rational torus point".into()));
        }
        Ok(Self { num, den })
    }

    pub(crate) fn from_dyadic(num: Vec<u128>) -> Self {
        Self { num, den: DYADIC_DEN }
    }

    pub fn dim(&self) -> usize {
        self.num.len()
    }

    pub fn numerators(&self) -> &[u128] {
        &self.num
    }

    pub fn denominator(&self) -> u128 {
        self.den
    }

    /// Coordinates in `[0, 1)`.
    pub fn coords(&self) -> Vec<f64> {
        let below_one = f64::from_bits(1f64.to_bits() - 1);
        self.num
            .iter()
            .map(|&n| (n as f64 / self.den as f64).min(below_one))
            .collect()
    }

    /// Max over coordinates of the circle distance, computed from exact
    /// numerator differences.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.num
            .iter()
            .zip(&other.num)
            .map(|(&a, &b)| {
                let (diff, total) = if self.den == other.den {
                    (a.abs_diff(b), self.den)
                } else {
                    // a/A − b/B = (aB − bA)/(AB); AB < 2^128 because one
                    // denominator is below 2^64
                    let (x, y) = (a * other.den, b * self.den);
                    (x.abs_diff(y), self.den * other.den)
                };
                let circ = diff.min(total - diff);
                circ as f64 / total as f64
            })
            .fold(0.0, f64::max)
    }
}

/// A hyperbolic automorphism of `𝕋^d` given by an integer matrix with
/// determinant ±1 and no eigenvalue on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusMap {
    matrix: IntMatrix,
    inverse: IntMatrix,
    eigen_moduli: Vec<f64>,
}

impl TorusMap {
    pub fn new(rows: &[Vec<i64>]) -> Result<Self> {
        let matrix = IntMatrix::from_rows(rows)?;
        if matrix.dim < 2 {
            return Err(Error::InvalidBase("torus dimension must be at least 2".into()));
        }
        let det = matrix
            .checked_det()
            .ok_or_else(|| Error::InvalidBase("determinant overflow".into()))?;
        if det.abs() != 1 {
            return Err(Error::InvalidBase(format!("determinant is {det}, expected ±1")));
        }
        let adj = matrix
            .checked_adjugate()
            .ok_or_else(|| Error::InvalidBase("adjugate overflow".into()))?;
        let inverse = IntMatrix {
            dim: adj.dim,
            entries: adj.entries.iter().map(|&v| v * det).collect(),
        };
        let eigen_moduli: Vec<f64> = matrix
            .to_operator()
            .to_nalgebra()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .collect();
        let gap = eigen_moduli.iter().map(|m| (m - 1.0).abs()).fold(f64::INFINITY, f64::min);
        if !(gap > 1e-9) {
            return Err(Error::InvalidBase("matrix is not hyperbolic".into()));
        }
        Ok(Self {
            matrix,
            inverse,
            eigen_moduli,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &IntMatrix {
        &self.inverse
    }

    pub fn eigen_moduli(&self) -> &[f64] {
        &self.eigen_moduli
    }

    /// Slowest exponential rate of the hyperbolic splitting.
    pub fn expansion_rate(&self) -> f64 {
        self.eigen_moduli.iter().map(|m| m.ln().abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn step(&self, p: &TorusPoint, n: i64) -> TorusPoint {
        if n == 0 {
            return p.clone();
        }
        let m = if n > 0 { &self.matrix } else { &self.inverse };
        let red = m.reduce(p.den);
        let num = if n.unsigned_abs() == 1 {
            matvec_mod(&red, self.dim(), &p.num, p.den)
        } else {
            let pw = matpow_mod(&red, self.dim(), n.unsigned_abs(), p.den);
            matvec_mod(&pw, self.dim(), &p.num, p.den)
        };
        TorusPoint { num, den: p.den }
    }

    /// `M^k − I` exactly, or `None` on overflow.
    pub(crate) fn power_minus_identity(&self, k: u32) -> Option<IntMatrix> {
        let pw = self.matrix.checked_pow(k)?;
        if pw.entries.iter().any(|v| v.unsigned_abs() > i64::MAX as u128) {
            return None;
        }
        Some(pw.minus_identity())
    }

    /// Periodic point of period `k` nearest to `x`: `p = (M^k − I)^{-1} w`
    /// with `w` the integer vector nearest to `(M^k − I) x`.
    pub fn close(&self, x: &TorusPoint, k: usize) -> Result<TorusPoint> {
        let ill = |msg: &str| Error::IllConditionedClosing(format!("period {k}: {msg}"));
        let b = self
            .power_minus_identity(k as u32)
            .ok_or_else(|| ill("M^k overflows 64-bit integers"))?;
        let det = b.checked_det().ok_or_else(|| ill("determinant overflow"))?;
        if det == 0 {
            return Err(ill("M^k − I is singular"));
        }
        let n = det.unsigned_abs();
        if n >= DYADIC_DEN {
            return Err(ill("period denominator exceeds 64 bits"));
        }
        let adj = b.checked_adjugate().ok_or_else(|| ill("adjugate overflow"))?;
        let d = self.dim();
        let den = x.den as i128;
        // w_i = round(Σ_j B_ij x_j / den), split per term to stay in i128.
        let mut w = Vec::with_capacity(d);
        for i in 0..d {
            let mut q: i128 = 0;
            let mut r: i128 = 0;
            for j in 0..d {
                let prod = b
                    .get(i, j)
                    .checked_mul(x.num[j] as i128)
                    .ok_or_else(|| ill("product overflow"))?;
                q += prod.div_euclid(den);
                r += prod.rem_euclid(den);
            }
            q += r.div_euclid(den);
            let r = r.rem_euclid(den);
            if 2 * r >= den {
                q += 1;
            }
            w.push(q);
        }
        let adj_red = adj.reduce(n);
        let w_red: Vec<u128> = w.iter().map(|&v| rem_euclid(v, n)).collect();
        let mut num = matvec_mod(&adj_red, d, &w_red, n);
        if det < 0 {
            for v in &mut num {
                *v = (n - *v) % n;
            }
        }
        let p = TorusPoint { num, den: n };
        let back = self.step(&p, k as i64);
        if back != p {
            return Err(ill("closed point is not periodic"));
        }
        Ok(p)
    }

    /// All points with `(M^k − I) p ∈ ℤ^d`, sorted by numerators.
    ///
    /// The solutions form the group `B^{-1}ℤ^d / ℤ^d`, `B = M^k − I`, of order
    /// `|det B|`. Coset representatives of `ℤ^d / Bℤ^d` are read off the
    /// Hermite normal form of `B`.
    pub fn periodic_points(&self, k: usize, budget: u64) -> Result<Vec<TorusPoint>> {
        let ill = |msg: &str| Error::IllConditionedClosing(format!("period {k}: {msg}"));
        let b = self
            .power_minus_identity(k as u32)
            .ok_or_else(|| ill("M^k overflows 64-bit integers"))?;
        let det = b.checked_det().ok_or_else(|| ill("determinant overflow"))?;
        let n = det.unsigned_abs();
        if n as f64 > budget as f64 {
            return Err(Error::BudgetExceeded {
                needed: n as f64,
                budget: budget as f64,
            });
        }
        let d = self.dim();
        let h = hermite_diagonal(&b).ok_or_else(|| ill("Hermite form overflow"))?;
        debug_assert_eq!(h.iter().product::<u128>(), n);
        let adj_red = b.checked_adjugate().ok_or_else(|| ill("adjugate overflow"))?.reduce(n);
        let mut out = Vec::with_capacity(n as usize);
        let mut z = vec![0u128; d];
        loop {
            let mut num = matvec_mod(&adj_red, d, &z, n);
            if det < 0 {
                for v in &mut num {
                    *v = (n - *v) % n;
                }
            }
            out.push(TorusPoint { num, den: n });
            // odometer over 0 <= z_i < h_i
            let mut i = 0;
            loop {
                if i == d {
                    out.sort();
                    return Ok(out);
                }
                z[i] += 1;
                if z[i] < h[i] {
                    break;
                }
                z[i] = 0;
                i += 1;
            }
        }
    }
}

/// Diagonal of a lower-triangular Hermite form `B·U` (U unimodular), whose
/// product is `|det B|`. The box `0 <= z_i < h_i` then enumerates
/// `ℤ^d / Bℤ^d`.
fn hermite_diagonal(b: &IntMatrix) -> Option<Vec<u128>> {
    let n = b.dim;
    // column operations on a copy of B
    let mut a: Vec<Vec<i128>> = (0..n).map(|i| (0..n).map(|j| b.get(i, j)).collect()).collect();
    let mut diag = Vec::with_capacity(n);
    for row in 0..n {
        // eliminate a[row][c] for c > row using gcd steps on columns row, c
        for c in row + 1..n {
            while a[row][c] != 0 {
                let q = a[row][row].checked_div_euclid(a[row][c]).unwrap_or(0);
                for r in 0..n {
                    let v = a[r][row].checked_sub(q.checked_mul(a[r][c])?)?;
                    a[r][row] = v;
                }
                for r in 0..n {
                    let t = a[r][row];
                    a[r][row] = a[r][c];
                    a[r][c] = t;
                }
            }
        }
        diag.push(a[row][row].unsigned_abs());
    }
    if diag.iter().any(|&v| v == 0) {
        return None;
    }
    Some(diag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cat() -> TorusMap {
        TorusMap::new(&[vec![2, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn rejects_non_automorphisms() {
        assert!(TorusMap::new(&[vec![2, 0], vec![0, 1]]).is_err());
        assert!(TorusMap::new(&[vec![1, 1], vec![0, 1]]).is_err());
        assert!(TorusMap::new(&[vec![0, -1], vec![1, 0]]).is_err());
    }

    #[test]
    fn cat_map_step_examples() {
        let f = cat();
        let o = TorusPoint::from_coords(&[0.0, 0.0]).unwrap();
        assert_eq!(f.step(&o, 7), o);
        let x = TorusPoint::from_coords(&[0.1, 0.2]).unwrap();
        let y = f.step(&x, 1).coords();
        assert!((y[0] - 0.4).abs() < 1e-15 && (y[1] - 0.3).abs() < 1e-15);
        assert_eq!(f.step(&f.step(&x, 37), -37), x);
    }

    #[test]
    fn wraparound_distance() {
        let a = TorusPoint::from_coords(&[0.95, 0.5]).unwrap();
        let b = TorusPoint::from_coords(&[0.05, 0.5]).unwrap();
        assert!((a.distance(&b) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn expansion_rate_of_cat_map() {
        let rate = cat().expansion_rate();
        assert!((rate - ((3.0 + 5f64.sqrt()) / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn periodic_point_counts_match_determinant() {
        let f = cat();
        for k in 1..=8 {
            let pts = f.periodic_points(k, 1 << 24).unwrap();
            let det = f.power_minus_identity(k as u32).unwrap().checked_det().unwrap();
            assert_eq!(pts.len() as i128, det.abs());
            for p in &pts {
                assert_eq!(&f.step(p, k as i64), p);
            }
            let mut dedup = pts.clone();
            dedup.dedup();
            assert_eq!(dedup.len(), pts.len());
        }
        assert_eq!(f.periodic_points(1, 10).unwrap().len(), 1);
    }

    #[test]
    fn hermite_handles_three_dimensions() {
        let f = TorusMap::new(&[vec![0, 0, 1], vec![1, 0, -1], vec![0, 1, 3]]).unwrap();
        let pts = f.periodic_points(2, 1 << 20).unwrap();
        let det = f.power_minus_identity(2).unwrap().checked_det().unwrap();
        assert_eq!(pts.len() as i128, det.abs());
        for p in &pts {
            assert_eq!(&f.step(p, 2), p);
        }
    }

    #[test]
    fn integer_determinant_and_adjugate() {
        let m = IntMatrix::from_rows(&[vec![2, 1, 0], vec![1, 3, 4], vec![0, -2, 5]]).unwrap();
        let det = m.checked_det().unwrap();
        assert_eq!(det, 2 * (15 + 8) - (5));
        let adj = m.checked_adjugate().unwrap();
        let prod = m.checked_mul(&adj).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(prod.get(i, j), if i == j { det } else { 0 });
            }
        }
    }
}
