//! Near-returns, closing them into periodic orbits, and the exponential
//! shadowing envelope `D · dist(x, f^k x) · e^{−γ min(i, k−i)}`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BasePoint, BaseSystem, SymbolicWindow, TorusMap, TorusPoint};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Absolute slack added to envelope comparisons.
const ENVELOPE_SLACK: f64 = 1e-15;

/// Return times scanned per calibration sample.
const SHIFT_SCAN: usize = 64;
const TORUS_SCAN: usize = 36;

/// Near-returns farther than this are not closed during calibration.
const SHIFT_THRESHOLD: f64 = 1.0;
const TORUS_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosingParams {
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma: f64,
    pub delta0: f64,
}

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub point: BasePoint,
    pub period: usize,
    /// `dist(f^k p, p)`.
    pub residual: f64,
}

impl PeriodicOrbit {
    pub fn new(base: &BaseSystem, point: BasePoint, period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidParameter("period must be at least 1".into()));
        }
        let back = base.step(&point, period as i64)?;
        let residual = base.distance(&point, &back)?;
        if residual > 1e-9 {
            return Err(Error::IllConditionedClosing(format!(
                "point is not {period}-periodic (residual {residual:e})"
            )));
        }
        Ok(Self {
            point,
            period,
            residual,
        })
    }
}

/// Smallest `k` with `n(1+ε') < k < n(1+2ε')` and `dist(x, f^k x) < δ`.
pub fn find_return(base: &BaseSystem, x: &BasePoint, n: usize, eps_prime: f64, delta: f64) -> Result<usize> {
    if n == 0 || !(eps_prime > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter("find_return needs n >= 1, eps' > 0, delta > 0".into()));
    }
    let lo = n as f64 * (1.0 + eps_prime);
    let hi = n as f64 * (1.0 + 2.0 * eps_prime);
    let k_min = (lo + 1e-9).floor() as usize + 1;
    let k_max = ((hi - 1e-9).ceil() as usize).saturating_sub(1);
    if k_min > k_max {
        return Err(Error::NotFound { lo, hi });
    }
    let mut y = base.step(x, k_min as i64)?;
    for k in k_min..=k_max {
        if base.distance(x, &y)? < delta {
            return Ok(k);
        }
        y = base.step(&y, 1)?;
    }
    Err(Error::NotFound { lo, hi })
}

/// A `k`-periodic point shadowing the segment `x, f x, …, f^k x`.
pub fn close_orbit(base: &BaseSystem, x: &BasePoint, k: usize) -> Result<PeriodicOrbit> {
    if k == 0 {
        return Err(Error::InvalidParameter("period must be at least 1".into()));
    }
    match (base, x) {
        (BaseSystem::Shift(s), BasePoint::Symbolic(w)) => {
            let word = w.symbols(0, k as i64 - 1)?;
            let (last, first) = (word[k - 1], word[0]);
            if !s.allowed(last, first) {
                return Err(Error::ForbiddenWrap { from: last, to: first });
            }
            if !s.word_allowed(&word) {
                return Err(Error::InvalidParameter("segment contains a forbidden transition".into()));
            }
            Ok(PeriodicOrbit {
                point: BasePoint::Symbolic(SymbolicWindow::periodic(word)),
                period: k,
                residual: 0.0,
            })
        }
        (BaseSystem::Torus(t), BasePoint::Torus(p)) => {
            let q = t.close(p, k)?;
            let residual = t.step(&q, k as i64).distance(&q);
            if residual > 1e-9 {
                return Err(Error::IllConditionedClosing(format!("residual {residual:e}")));
            }
            Ok(PeriodicOrbit {
                point: BasePoint::Torus(q),
                period: k,
                residual,
            })
        }
        _ => Err(Error::InvalidParameter("point does not belong to this base system".into())),
    }
}

/// `dist(f^i x, f^i p)` for `i = 0..=k`.
pub fn shadowing_profile(base: &BaseSystem, x: &BasePoint, p: &BasePoint, k: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(k + 1);
    let mut a = x.clone();
    let mut b = p.clone();
    for i in 0..=k {
        out.push(base.distance(&a, &b)?);
        if i < k {
            a = base.step(&a, 1)?;
            b = base.step(&b, 1)?;
        }
    }
    Ok(out)
}

/// `D · d0 · e^{−γ min(i, k−i)}`.
pub fn envelope(params: &ClosingParams, d0: f64, i: usize, k: usize) -> f64 {
    params.d * d0 * (-params.gamma * i.min(k - i) as f64).exp()
}

/// Whether every entry of `profile` lies under the envelope.
pub fn within_envelope(params: &ClosingParams, profile: &[f64], d0: f64) -> bool {
    let k = profile.len() - 1;
    profile
        .iter()
        .enumerate()
        .all(|(i, &v)| v <= envelope(params, d0, i, k) + ENVELOPE_SLACK)
}

/// Worst case of `max_i ‖M^i (M^k − I)^{-1}‖_∞ e^{γ min(i, k−i)}` over
/// `1 <= k <= k_max`. Since `x − p = (M^k − I)^{-1} v` with `|v|_∞` the
/// return distance, this bounds every torus profile ratio.
pub fn torus_worst_case_constant(t: &TorusMap, k_max: usize) -> f64 {
    let gamma = t.expansion_rate();
    let m = t.matrix().to_operator();
    let mut worst: f64 = 1.0;
    for k in 1..=k_max {
        let Some(b) = t.power_minus_identity(k as u32) else { break };
        let (Some(det), Some(adj)) = (b.checked_det(), b.checked_adjugate()) else { break };
        if det == 0 {
            continue;
        }
        let inv = adj.to_operator().scale(1.0 / det as f64);
        let mut cur = inv;
        for i in 0..=k {
            let norm = crate::linalg::op_norm(&cur, crate::linalg::NormKind::LinfInduced);
            let w = (gamma * i.min(k - i) as f64).exp();
            worst = worst.max(norm * w);
            cur = m.matmul(&cur);
        }
    }
    // float rounding in M^i for large k
    worst * (1.0 + 1e-9)
}

/// Fit `(D, γ, δ₀)` from near-returns of the given points.
pub fn calibrate_closing_on(base: &BaseSystem, points: &[BasePoint]) -> Result<ClosingParams> {
    if points.is_empty() {
        return Err(Error::InvalidParameter("calibration needs at least one point".into()));
    }
    let gamma = base.expansion_rate();
    let (scan, threshold) = match base {
        BaseSystem::Shift(_) => (SHIFT_SCAN, SHIFT_THRESHOLD),
        BaseSystem::Torus(_) => (TORUS_SCAN, TORUS_THRESHOLD),
    };
    let mut d: f64 = 1.0;
    let mut delta0: f64 = 0.0;
    let mut closed = 0usize;
    for x in points {
        let mut y = x.clone();
        for k in 1..=scan {
            y = base.step(&y, 1)?;
            let d0 = base.distance(x, &y)?;
            if d0 >= threshold {
                continue;
            }
            let orbit = match close_orbit(base, x, k) {
                Ok(o) => o,
                Err(Error::ForbiddenWrap { .. }) | Err(Error::IllConditionedClosing(_)) => continue,
                Err(e) => return Err(e),
            };
            closed += 1;
            let profile = shadowing_profile(base, x, &orbit.point, k)?;
            if d0 == 0.0 {
                if profile.iter().any(|&v| v > 0.0) {
                    return Err(Error::CalibrationFailed(format!(
                        "exact return at k = {k} is not shadowed exactly"
                    )));
                }
                continue;
            }
            delta0 = delta0.max(d0);
            for (i, &v) in profile.iter().enumerate() {
                let ratio = v / (d0 * (-gamma * i.min(k - i) as f64).exp());
                d = d.max(ratio);
            }
        }
    }
    if closed == 0 {
        return Err(Error::CalibrationFailed("no sampled near-return could be closed".into()));
    }
    if let BaseSystem::Torus(t) = base {
        d = d.max(torus_worst_case_constant(t, scan));
    }
    if !d.is_finite() || d > 1e6 {
        return Err(Error::CalibrationFailed(format!("fitted D = {d:e} is not a usable constant")));
    }
    if delta0 == 0.0 {
        // only exact returns were seen; they close at any tested scale
        delta0 = threshold;
    }
    Ok(ClosingParams { d, gamma, delta0 })
}

/// Fit closing constants on `samples` generic points drawn from `seed`.
pub fn calibrate_closing(base: &BaseSystem, samples: usize, seed: u64) -> Result<ClosingParams> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be at least 1".into()));
    }
    let points: Vec<BasePoint> = (0..samples as u64)
        .map(|s| generic_point(base, seed, s))
        .collect();
    calibrate_closing_on(base, &points)
}

/// A reproducible "typical" point: uniform-successor chain on shifts,
/// a uniform dyadic point on tori.
pub fn generic_point(base: &BaseSystem, seed: u64, index: u64) -> BasePoint {
    let mut rng = stream_rng(seed, "generic-point", index);
    match base {
        BaseSystem::Shift(s) => BasePoint::Symbolic(SymbolicWindow::sampled(s.uniform_chain(rng.random()))),
        BaseSystem::Torus(t) => {
            let num = (0..t.dim()).map(|_| rng.random::<u64>() as u128).collect();
            BasePoint::Torus(TorusPoint::from_dyadic(num))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::ShiftSpace;

    #[test]
    fn find_return_examples() {
        let s = BaseSystem::full_shift(2).unwrap();
        let x = BasePoint::Symbolic(SymbolicWindow::periodic(vec![0]));
        assert_eq!(find_return(&s, &x, 10, 0.2, 0.5).unwrap(), 13);
        let t = BaseSystem::cat_map();
        let o = BasePoint::Torus(TorusPoint::from_coords(&[0.0, 0.0]).unwrap());
        assert_eq!(find_return(&t, &o, 10, 0.3, 1e-6).unwrap(), 14);
    }

    #[test]
    fn find_return_reports_empty_window() {
        let s = BaseSystem::full_shift(2).unwrap();
        let x = BasePoint::Symbolic(SymbolicWindow::periodic(vec![0, 1]));
        // only k = 13 is in the window and x is 2-periodic
        assert!(matches!(find_return(&s, &x, 10, 0.2, 0.5), Err(Error::NotFound { .. })));
    }

    #[test]
    fn shift_closing_repeats_the_word() {
        let s = BaseSystem::full_shift(2).unwrap();
        let x = BasePoint::Symbolic(SymbolicWindow::finite(-10, vec![0; 10].into_iter().chain([0, 1, 1, 0, 0, 1]).collect()));
        let orbit = close_orbit(&s, &x, 4).unwrap();
        assert_eq!(orbit.point.as_symbolic().unwrap().periodic_word().unwrap(), vec![0, 1, 1, 0]);
    }

    #[test]
    fn forbidden_wrap() {
        let s = BaseSystem::Shift(ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], 2.0).unwrap());
        let x = BasePoint::Symbolic(SymbolicWindow::finite(0, vec![1, 0, 1, 0]));
        assert!(matches!(close_orbit(&s, &x, 3), Err(Error::ForbiddenWrap { from: 1, to: 1 })));
    }

    #[test]
    fn torus_fixed_point_closes_to_itself() {
        let t = BaseSystem::cat_map();
        let o = BasePoint::Torus(TorusPoint::from_coords(&[0.0, 0.0]).unwrap());
        let orbit = close_orbit(&t, &o, 3).unwrap();
        assert_eq!(orbit.point.as_torus().unwrap().coords(), vec![0.0, 0.0]);
        assert_eq!(shadowing_profile(&t, &o, &orbit.point, 3).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn calibration_rates() {
        let s = BaseSystem::full_shift(2).unwrap();
        let p = calibrate_closing(&s, 20, 3).unwrap();
        assert_eq!(p.gamma, 1.0);
        assert!(p.d >= 1.0 && p.d <= std::f64::consts::E + 1e-12);
        let t = BaseSystem::cat_map();
        let p = calibrate_closing(&t, 20, 3).unwrap();
        assert!((p.gamma - 0.9624236501192069).abs() < 1e-12);
        assert!(p.d.is_finite() && p.delta0 > 0.0);
    }

    #[test]
    fn fixed_point_calibration_gives_unit_constant() {
        let t = BaseSystem::cat_map();
        let o = BasePoint::Torus(TorusPoint::from_coords(&[0.0, 0.0]).unwrap());
        let s = BaseSystem::full_shift(2).unwrap();
        let z = BasePoint::Symbolic(SymbolicWindow::periodic(vec![0]));
        assert_eq!(calibrate_closing_on(&s, &[z]).unwrap().d, 1.0);
        // torus D also carries the worst case over all scanned periods
        assert!(calibrate_closing_on(&t, &[o]).unwrap().d >= 1.0);
    }
}
