//! The ε-Lyapunov norm
//!
//! ```text
//! ‖u‖_{x,ε} = Σ_{n≥0} ‖𝔸ⁿ_x u‖ e^{−(λ+ε)n} + Σ_{n≥1} ‖𝔸^{−n}_x u‖ e^{(χ−ε)n}
//! ```
//!
//! truncated at `|n| ≤ N`, with empirical checks of its contraction
//! properties, temperedness of the comparison functions, and growth along
//! shadowing orbits.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem};
use crate::cocycle::CocycleGenerator;
use crate::error::{Error, Result};
use crate::linalg::{NormKind, Operator, ScaledOperator};
use crate::rng::stream_rng;

/// Trailing terms inspected by the convergence flag.
const TAIL_TERMS: usize = 10;
const RANDOM_DIRECTIONS: usize = 200;
const ASCENT_STEPS: usize = 50;
const ANGULAR_GRID: usize = 720;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovNormContext {
    pub lambda: f64,
    pub chi: f64,
    pub eps: f64,
    pub truncation_n: usize,
    pub tail_tol: f64,
    pub ell: f64,
    pub rho: f64,
}

impl LyapunovNormContext {
    pub fn new(lambda: f64, chi: f64, eps: f64) -> Result<Self> {
        Self {
            lambda,
            chi,
            eps,
            truncation_n: 200,
            tail_tol: 1e-6,
            ell: 2.0,
            rho: eps,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !self.lambda.is_finite() || !self.chi.is_finite() || self.chi > self.lambda {
            return bad("need finite chi <= lambda");
        }
        if self.truncation_n == 0 {
            return bad("truncation_N must be at least 1");
        }
        if !(self.tail_tol > 0.0) || !(self.ell > 1.0) || !(self.rho > 0.0) {
            return bad("need tail_tol > 0, ell > 1, rho > 0");
        }
        Ok(self)
    }

    fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..*self }
    }
}

/// A truncated norm value with its convergence flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub converged: bool,
}

/// The products `𝔸ⁿ_x` and `𝔸^{−n}_x`, `0 ≤ n ≤ N`, at one point.
#[derive(Debug, Clone)]
pub struct LyapunovFrame {
    forward: Vec<ScaledOperator>,
    backward: Vec<ScaledOperator>,
    norm: NormKind,
}

impl LyapunovFrame {
    pub fn build(ctx: &LyapunovNormContext, gen: &CocycleGenerator, base: &BaseSystem, x: &BasePoint) -> Result<Self> {
        let t = ctx.truncation_n;
        let pairs = gen.orbit_pairs(base, x, -(t as i64), 2 * t)?;
        Ok(Self::from_pairs(&pairs, t, t, gen.dim(), gen.norm()))
    }

    /// Frame at `pairs[center]`'s point from a precomputed orbit slice that
    /// covers `center − t .. center + t`.
    fn from_pairs(pairs: &[(Operator, Operator)], center: usize, t: usize, dim: usize, norm: NormKind) -> Self {
        let mut forward = Vec::with_capacity(t + 1);
        let mut backward = Vec::with_capacity(t + 1);
        let mut p = ScaledOperator::identity(dim);
        forward.push(p.clone());
        for n in 0..t {
            p.left_mul(&pairs[center + n].0);
            forward.push(p.clone());
        }
        // 𝔸^{−n}_x = A(f^{−n}x)⁻¹ · 𝔸^{−(n−1)}_x
        let mut q = ScaledOperator::identity(dim);
        backward.push(q.clone());
        for n in 1..=t {
            q.left_mul(&pairs[center - n].1);
            backward.push(q.clone());
        }
        Self { forward, backward, norm }
    }

    pub fn truncation(&self) -> usize {
        self.forward.len() - 1
    }

    fn terms(&self, ctx: &LyapunovNormContext, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w_f = ctx.lambda + ctx.eps;
        let w_b = ctx.chi - ctx.eps;
        let term = |p: &ScaledOperator, log_weight: f64| {
            let v = self.norm.vector_norm(&p.op.apply(u));
            if v == 0.0 {
                0.0
            } else {
                (v.ln() + p.log_scale() + log_weight).exp()
            }
        };
        let fwd = self
            .forward
            .iter()
            .enumerate()
            .map(|(n, p)| term(p, -w_f * n as f64))
            .collect();
        let bwd = self
            .backward
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, p)| term(p, w_b * n as f64))
            .collect();
        (fwd, bwd)
    }

    pub fn vector_norm(&self, ctx: &LyapunovNormContext, u: &[f64]) -> NormValue {
        let (fwd, bwd) = self.terms(ctx, u);
        let sf: f64 = fwd.iter().sum();
        let sb: f64 = bwd.iter().sum();
        let value = sf + sb;
        let tail_ok = |terms: &[f64], sum: f64| {
            terms.iter().rev().take(TAIL_TERMS).all(|&t| t < ctx.tail_tol * sum || t == 0.0)
        };
        let converged = value.is_finite() && tail_ok(&fwd, sf) && tail_ok(&bwd, sb.max(sf));
        NormValue { value, converged }
    }
}

/// `‖u‖_{x,ε}` truncated at `|n| ≤ N`.
pub fn lyap_vector_norm(
    ctx: &LyapunovNormContext,
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    u: &[f64],
) -> Result<NormValue> {
    if u.len() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            found: u.len(),
        });
    }
    Ok(LyapunovFrame::build(ctx, gen, base, x)?.vector_norm(ctx, u))
}

fn normalize(u: &mut [f64]) {
    let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        u.iter_mut().for_each(|v| *v /= n);
    }
}

/// Sampled lower bound of `sup ‖A u‖_y / ‖u‖_x` between precomputed frames.
pub fn lyap_op_norm_frames(
    ctx: &LyapunovNormContext,
    a: &Operator,
    fx: &LyapunovFrame,
    fy: &LyapunovFrame,
) -> NormValue {
    let d = a.dim();
    let ratio = |u: &[f64]| -> (f64, bool) {
        let den = fx.vector_norm(ctx, u);
        let num = fy.vector_norm(ctx, &a.apply(u));
        if den.value == 0.0 {
            return (0.0, true);
        }
        (num.value / den.value, num.converged && den.converged)
    };
    let mut rng = stream_rng(0, "lyap-op-norm", d as u64);
    let mut best_u: Vec<f64> = vec![0.0; d];
    best_u[0] = 1.0;
    let (mut best, mut best_conv) = ratio(&best_u);
    let consider = |u: Vec<f64>, best: &mut f64, best_u: &mut Vec<f64>, best_conv: &mut bool| {
        let (r, c) = ratio(&u);
        if r > *best {
            *best = r;
            *best_u = u;
            *best_conv = c;
        }
    };
    for _ in 0..RANDOM_DIRECTIONS {
        let mut u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        normalize(&mut u);
        consider(u, &mut best, &mut best_u, &mut best_conv);
    }
    if d <= 2 {
        for k in 0..ANGULAR_GRID {
            let th = std::f64::consts::PI * k as f64 / ANGULAR_GRID as f64;
            let u = if d == 1 { vec![1.0] } else { vec![th.cos(), th.sin()] };
            consider(u, &mut best, &mut best_u, &mut best_conv);
        }
    }
    let mut h = 0.5;
    for _ in 0..ASCENT_STEPS {
        let mut improved = false;
        for j in 0..d {
            for s in [1.0, -1.0] {
                let mut u = best_u.clone();
                u[j] += s * h;
                normalize(&mut u);
                let before = best;
                consider(u, &mut best, &mut best_u, &mut best_conv);
                improved |= best > before;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    NormValue {
        value: best,
        converged: best_conv,
    }
}

/// `‖A‖_{y←x}`: maximized over 200 random directions, a coordinate ascent
/// from the best, and a 720-point angular grid when `dim ≤ 2`.
pub fn lyap_op_norm(
    ctx: &LyapunovNormContext,
    gen: &CocycleGenerator,
    base: &BaseSystem,
    a: &Operator,
    x: &BasePoint,
    y: &BasePoint,
) -> Result<NormValue> {
    if a.dim() != gen.dim() {
        return Err(Error::DimensionMismatch {
            expected: gen.dim(),
            found: a.dim(),
        });
    }
    let fx = LyapunovFrame::build(ctx, gen, base, x)?;
    let fy = LyapunovFrame::build(ctx, gen, base, y)?;
    Ok(lyap_op_norm_frames(ctx, a, &fx, &fy))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub steps: usize,
    /// `‖A(x_j)‖_{x_{j+1}←x_j} / e^{λ+ε}`
    pub forward_ratios: Vec<f64>,
    /// `‖A(x_{j−1})⁻¹‖_{x_{j−1}←x_j} / e^{−χ+ε}`
    pub backward_ratios: Vec<f64>,
    pub forward_converged: Vec<bool>,
    pub backward_converged: Vec<bool>,
    pub max_forward_ratio: f64,
    pub max_backward_ratio: f64,
    pub slack: f64,
    /// Evaluations exceeding `1 + slack`, converged or not.
    pub violations: usize,
    /// Evaluations whose truncated series did not pass the tail test.
    pub nonconvergent: usize,
}

/// Checks `‖A(x_j)‖_{x_{j+1}←x_j} ≤ e^{λ+ε}` and
/// `‖A(x_{j−1})⁻¹‖_{x_{j−1}←x_j} ≤ e^{−χ+ε}` at `x_j = f^j x`, `0 ≤ j < steps`.
///
/// A truncated series can over-shoot in either direction, so only evaluations
/// whose series passed the tail test count toward `violations`; the rest are
/// tallied in `nonconvergent` (the point is outside the regular set at this
/// truncation).
pub fn check_contraction(
    ctx: &LyapunovNormContext,
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    steps: usize,
) -> Result<ContractionReport> {
    let slack = 10.0 * ctx.tail_tol;
    if steps == 0 {
        return Ok(ContractionReport {
            steps,
            forward_ratios: vec![],
            backward_ratios: vec![],
            forward_converged: vec![],
            backward_converged: vec![],
            max_forward_ratio: 0.0,
            max_backward_ratio: 0.0,
            slack,
            violations: 0,
            nonconvergent: 0,
        });
    }
    let t = ctx.truncation_n;
    // frames at j = −1..=steps; pairs cover −1−t .. steps+t
    let lo = -1 - t as i64;
    let pairs = gen.orbit_pairs(base, x, lo, steps + 2 * t + 2)?;
    let offset = (1 + t) as usize;
    let frames: Vec<LyapunovFrame> = (-1..=steps as i64)
        .into_par_iter()
        .map(|j| LyapunovFrame::from_pairs(&pairs, (offset as i64 + j) as usize, t, gen.dim(), gen.norm()))
        .collect();
    let frame = |j: i64| &frames[(j + 1) as usize];
    let fwd_bound = (ctx.lambda + ctx.eps).exp();
    let bwd_bound = (-ctx.chi + ctx.eps).exp();
    let evals: Vec<(NormValue, NormValue)> = (0..steps as i64)
        .into_par_iter()
        .map(|j| {
            let (a, _) = &pairs[(offset as i64 + j) as usize];
            let (_, a_prev_inv) = &pairs[(offset as i64 + j - 1) as usize];
            let f = lyap_op_norm_frames(ctx, a, frame(j), frame(j + 1));
            let b = lyap_op_norm_frames(ctx, a_prev_inv, frame(j), frame(j - 1));
            (f, b)
        })
        .collect();
    let forward_ratios: Vec<f64> = evals.iter().map(|(f, _)| f.value / fwd_bound).collect();
    let backward_ratios: Vec<f64> = evals.iter().map(|(_, b)| b.value / bwd_bound).collect();
    let forward_converged: Vec<bool> = evals.iter().map(|(f, _)| f.converged).collect();
    let backward_converged: Vec<bool> = evals.iter().map(|(_, b)| b.converged).collect();
    let mut violations = 0;
    let mut nonconvergent = 0;
    for (ratios, conv) in [(&forward_ratios, &forward_converged), (&backward_ratios, &backward_converged)] {
        for (r, &c) in ratios.iter().zip(conv) {
            if !c {
                nonconvergent += 1;
            } else if *r > 1.0 + slack {
                violations += 1;
            }
        }
    }
    Ok(ContractionReport {
        steps,
        max_forward_ratio: forward_ratios.iter().copied().fold(0.0, f64::max),
        max_backward_ratio: backward_ratios.iter().copied().fold(0.0, f64::max),
        forward_ratios,
        backward_ratios,
        forward_converged,
        backward_converged,
        slack,
        violations,
        nonconvergent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperednessReport {
    /// Orbit times `−N..=N` the arrays below are indexed by (offset `N`).
    pub horizon: usize,
    #[serde(rename = "M_eps_values")]
    pub m_eps_values: Vec<f64>,
    #[serde(rename = "M_eps_prime_values")]
    pub m_eps_prime_values: Vec<f64>,
    /// `(M_{ε/2} + M′_{ε/2}) / (1 − e^{−ε/2})`
    #[serde(rename = "M_tilde_values")]
    pub m_tilde_values: Vec<f64>,
    #[serde(rename = "K_rho_truncated")]
    pub k_rho_truncated: f64,
    /// Least-squares slope of `(1/n) ln M_ε(fⁿx)` against `n` over the last half.
    pub forward_slope: f64,
    pub backward_slope: f64,
    /// Least-squares slope of `ln M_ε(f^{±n}x)` against `n` over `1..=N`,
    /// i.e. the exponential growth rate that temperedness says vanishes.
    pub forward_rate: f64,
    pub backward_rate: f64,
    pub rho: f64,
}

impl TemperednessReport {
    pub fn m_eps(&self, n: i64) -> f64 {
        self.m_eps_values[(n + self.horizon as i64) as usize]
    }

    pub fn m_tilde(&self, n: i64) -> f64 {
        self.m_tilde_values[(n + self.horizon as i64) as usize]
    }

    /// `Σ_{|n| ≤ W} M̃(f^{n+s}x) e^{−ρ|n|}` with `W = N − |s|`.
    pub fn k_rho_shifted(&self, s: i64) -> f64 {
        let w = self.horizon as i64 - s.abs();
        (-w..=w).map(|n| self.m_tilde(n + s) * (-self.rho * n.abs() as f64).exp()).sum()
    }

    /// `K` on the window `W` around the base point.
    pub fn k_rho_window(&self, w: i64) -> f64 {
        (-w..=w).map(|n| self.m_tilde(n) * (-self.rho * n.abs() as f64).exp()).sum()
    }
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// `M_ε` and `M′_ε` (sup over `0 ≤ n ≤ truncation_N`) at every `fⁿx`,
/// `|n| ≤ N`, plus `M̃`, truncated `K_ρ` and growth slopes.
pub fn temperedness_diagnostic(
    ctx: &LyapunovNormContext,
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    n: usize,
) -> Result<TemperednessReport> {
    let t = ctx.truncation_n;
    let lo = -((n + t) as i64);
    let pairs = gen.orbit_pairs(base, x, lo, 2 * (n + t))?;
    let norm = gen.norm();
    let half = ctx.with_eps(ctx.eps / 2.0);
    // (M_ε, M′_ε, M_{ε/2}, M′_{ε/2}) at f^j x
    let per_point: Vec<[f64; 4]> = (-(n as i64)..=n as i64)
        .into_par_iter()
        .map(|j| {
            let c = (j - lo) as usize;
            let mut out = [0.0f64; 4];
            let mut p = ScaledOperator::identity(gen.dim());
            let mut q = ScaledOperator::identity(gen.dim());
            for k in 0..=t {
                if k > 0 {
                    p.left_mul(&pairs[c + k - 1].0);
                    q.left_mul(&pairs[c - k].1);
                }
                let (lf, lb) = (p.ln_norm(norm), q.ln_norm(norm));
                let kf = k as f64;
                for (slot, cx) in [(0, ctx), (2, &half)] {
                    out[slot] = out[slot].max((lf - (cx.lambda + cx.eps) * kf).exp());
                    out[slot + 1] = out[slot + 1].max((lb + (cx.chi - cx.eps) * kf).exp());
                }
            }
            out
        })
        .collect();
    let m_eps_values: Vec<f64> = per_point.iter().map(|v| v[0]).collect();
    let m_eps_prime_values: Vec<f64> = per_point.iter().map(|v| v[1]).collect();
    let denom = 1.0 - (-ctx.eps / 2.0).exp();
    let m_tilde_values: Vec<f64> = per_point.iter().map(|v| (v[2] + v[3]) / denom).collect();
    let k_rho_truncated = (-(n as i64)..=n as i64)
        .map(|j| m_tilde_values[(j + n as i64) as usize] * (-ctx.rho * j.abs() as f64).exp())
        .sum();
    let ln_m = |k: i64| m_eps_values[(k + n as i64) as usize].ln();
    // ln M is stationary along the orbit, so the rate uses the whole window;
    // (1/n) ln M is fitted on the last half, away from the 1/n blow-up
    let fit = |range: std::ops::RangeInclusive<usize>, per_n: bool, sign: i64| {
        let xs: Vec<f64> = range.clone().map(|k| k as f64).collect();
        let ys: Vec<f64> = range
            .map(|k| ln_m(sign * k as i64) / if per_n { k as f64 } else { 1.0 })
            .collect();
        ls_slope(&xs, &ys)
    };
    let half_window = (n / 2).max(1)..=n;
    Ok(TemperednessReport {
        horizon: n,
        forward_slope: fit(half_window.clone(), true, 1),
        backward_slope: fit(half_window, true, -1),
        forward_rate: fit(1..=n, false, 1),
        backward_rate: fit(1..=n, false, -1),
        m_eps_values,
        m_eps_prime_values,
        m_tilde_values,
        k_rho_truncated,
        rho: ctx.rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowGrowthReport {
    pub m: usize,
    pub ell: f64,
    pub delta: f64,
    /// Smallest `c ≥ 0` with `a_n(p) ≤ ln ℓ + cℓδ^α + n(λ+ε)` for `n ≤ m`.
    pub c_upper: f64,
    /// Same for `ã_n(p) ≤ ln ℓ + ε min(n, m−n) + cℓδ^α + n(−χ+ε)`.
    pub c_lower: f64,
    pub c: f64,
    /// Bound failures at the fitted `c` (non-zero only if `c` is infinite).
    pub violations: usize,
    pub upper_margins: Vec<f64>,
    pub lower_margins: Vec<f64>,
}

/// Fit the constant of the growth bounds along a shadowing orbit `p` of `x`.
#[allow(clippy::too_many_arguments)]
pub fn shadow_growth_check(
    ctx: &LyapunovNormContext,
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    p: &BasePoint,
    m: usize,
    ell: f64,
    delta: f64,
) -> Result<ShadowGrowthReport> {
    if !(ell > 1.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter("need ell > 1 and delta >= 0".into()));
    }
    let gamma = base.expansion_rate();
    let mut a = x.clone();
    let mut b = p.clone();
    for i in 0..=m {
        let dist = base.distance(&a, &b)?;
        let bound = delta * (-gamma * i.min(m - i) as f64).exp();
        if dist > bound + 1e-15 {
            return Err(Error::ProfileViolated {
                index: i,
                distance: dist,
                bound,
            });
        }
        if i < m {
            a = base.step(&a, 1)?;
            b = base.step(&b, 1)?;
        }
    }
    let (an, atn) = gen.log_norm_profile(base, p, m)?;
    let scale = ell * delta.powf(gen.holder_alpha());
    let ln_ell = ell.ln();
    let upper_excess: Vec<f64> = (0..=m)
        .map(|n| an[n] - ln_ell - n as f64 * (ctx.lambda + ctx.eps))
        .collect();
    let lower_excess: Vec<f64> = (0..=m)
        .map(|n| atn[n] - ln_ell - ctx.eps * n.min(m - n) as f64 - n as f64 * (-ctx.chi + ctx.eps))
        .collect();
    let fit = |excess: &[f64]| {
        let worst = excess[1..].iter().copied().fold(0.0f64, f64::max);
        if worst <= 0.0 {
            0.0
        } else if scale > 0.0 {
            worst / scale
        } else {
            f64::INFINITY
        }
    };
    let c_upper = fit(&upper_excess);
    let c_lower = fit(&lower_excess);
    let c = c_upper.max(c_lower);
    let cs = if c.is_finite() { c * scale } else { f64::INFINITY };
    let violations = upper_excess[1..]
        .iter()
        .chain(&lower_excess[1..])
        .filter(|&&e| e > cs * (1.0 + 1e-12) + 1e-12)
        .count();
    Ok(ShadowGrowthReport {
        m,
        ell,
        delta,
        c_upper,
        c_lower,
        c,
        violations,
        upper_margins: upper_excess.iter().map(|e| cs - e).collect(),
        lower_margins: lower_excess.iter().map(|e| cs - e).collect(),
    })
}

/// The smallest `c` that makes every report's segment pass.
pub fn fit_shadow_constant(reports: &[ShadowGrowthReport]) -> f64 {
    reports.iter().map(|r| r.c).fold(0.0, f64::max)
}
