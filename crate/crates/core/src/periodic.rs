//! Periodic orbits: enumeration, exponent scores, and the search for a
//! periodic point whose growth rates approximate `(λ, χ)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{
    close_orbit, find_return, word_string, BasePoint, BaseSystem, PeriodicOrbit, ShiftSpace, SymbolicWindow,
};
use crate::cocycle::{CocycleGenerator, GeneratorKind};
use crate::error::{Error, Result};
use crate::exponents::{km_good_times, ExponentEstimate, MeasureSampler};
use crate::linalg::{Operator, ScaledOperator};

pub const DEFAULT_BUDGET: u64 = 1 << 24;

/// Samples used for the supremum over `x` when it cannot be enumerated.
const SUP_SAMPLES: usize = 10_000;

/// Whether `word` is its own lexicographically smallest rotation.
pub fn is_min_rotation(word: &[u8]) -> bool {
    let k = word.len();
    (1..k).all(|r| {
        for i in 0..k {
            let (a, b) = (word[i], word[(i + r) % k]);
            if a != b {
                return a < b;
            }
        }
        true
    })
}

/// Number of distinct rotations of `word`.
pub fn rotation_class_size(word: &[u8]) -> usize {
    let k = word.len();
    (1..=k).find(|&r| k % r == 0 && (0..k).all(|i| word[i] == word[(i + r) % k])).unwrap_or(k)
}

fn closable_words(shift: &ShiftSpace, k: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut word = Vec::with_capacity(k);
    fn rec(shift: &ShiftSpace, k: usize, word: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if word.len() == k {
            if shift.allowed(word[k - 1], word[0]) && is_min_rotation(word) {
                out.push(word.clone());
            }
            return;
        }
        for s in 0..shift.alphabet_size() as u8 {
            // a minimal rotation never has a symbol below its first one
            if word.first().is_some_and(|&f| s < f) {
                continue;
            }
            if word.last().is_none_or(|&l| shift.allowed(l, s)) {
                word.push(s);
                rec(shift, k, word, out);
                word.pop();
            }
        }
    }
    rec(shift, k, &mut word, &mut out);
    out
}

/// One representative per periodic orbit of (not necessarily least) period
/// `k`: the minimal rotation for shifts, the lexicographically smallest
/// orbit point for tori.
pub fn enumerate_periodic(base: &BaseSystem, k: usize, budget: u64) -> Result<Vec<PeriodicOrbit>> {
    if k == 0 {
        return Err(Error::InvalidParameter("period must be at least 1".into()));
    }
    match base {
        BaseSystem::Shift(s) => {
            let needed = (s.alphabet_size() as f64).powi(k as i32);
            if needed > budget as f64 {
                return Err(Error::BudgetExceeded {
                    needed,
                    budget: budget as f64,
                });
            }
            Ok(closable_words(s, k)
                .into_iter()
                .map(|w| PeriodicOrbit {
                    point: BasePoint::Symbolic(SymbolicWindow::periodic(w)),
                    period: k,
                    residual: 0.0,
                })
                .collect())
        }
        BaseSystem::Torus(t) => {
            if t.dim() > 3 {
                return Err(Error::InvalidParameter("torus enumeration supports dim <= 3".into()));
            }
            let pts = t.periodic_points(k, budget)?;
            let reps: Vec<_> = pts
                .into_par_iter()
                .filter(|p| {
                    let mut q = p.clone();
                    (1..k).all(|_| {
                        q = t.step(&q, 1);
                        *p <= q
                    })
                })
                .collect();
            Ok(reps
                .into_iter()
                .map(|p| PeriodicOrbit {
                    point: BasePoint::Torus(p),
                    period: k,
                    residual: 0.0,
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicScore {
    pub k: usize,
    pub label: String,
    pub upper_rate: f64,
    pub lower_rate: f64,
    pub upper_exponent: f64,
    pub lower_exponent: f64,
    #[serde(rename = "ln_Q")]
    pub ln_q: f64,
}

pub fn score_periodic(gen: &CocycleGenerator, base: &BaseSystem, orbit: &PeriodicOrbit) -> Result<PeriodicScore> {
    let k = orbit.period;
    let (p, pinv) = gen.evaluate_pair(base, &orbit.point, k as i64)?;
    let kf = k as f64;
    let (ln_norm, ln_inv_norm) = (p.ln_norm(gen.norm()), pinv.ln_norm(gen.norm()));
    Ok(PeriodicScore {
        k,
        label: orbit.point.label(),
        upper_rate: ln_norm / kf,
        lower_rate: -ln_inv_norm / kf,
        upper_exponent: p.ln_spectral_radius() / kf,
        lower_exponent: -pinv.ln_spectral_radius() / kf,
        ln_q: ln_norm + ln_inv_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremMode {
    #[default]
    Exhaustive,
    Constructive,
}

/// Knobs of the constructive recipe that the existence proof leaves open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructiveParams {
    /// Minimum suffix length in the good-time condition.
    #[serde(rename = "L")]
    pub l_min: usize,
    /// Return radius handed to the return search.
    pub delta: f64,
    /// Orbit length scanned for good times.
    pub horizon: usize,
    /// Sampled starting points tried before giving up.
    pub attempts: usize,
}

impl Default for ConstructiveParams {
    fn default() -> Self {
        Self {
            l_min: 10,
            delta: 0.5,
            horizon: 400,
            attempts: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub mode: TheoremMode,
    pub lambda_hat: f64,
    pub chi_hat: f64,
    pub stderr: f64,
    pub eps_target: f64,
    pub winner: Option<PeriodicScore>,
    pub residual: f64,
    pub upper_residual: f64,
    pub lower_residual: f64,
    pub success: bool,
    /// `upper_exponent < λ̂ + ε` for the winner.
    pub one_sided_upper: bool,
    /// `lower_exponent > χ̂ − ε` for the winner.
    pub one_sided_lower: bool,
    pub table: Vec<PeriodicScore>,
    /// Why the constructive recipe stopped without a periodic point.
    pub stall_reason: Option<String>,
}

fn residuals(s: &PeriodicScore, lambda: f64, chi: f64) -> (f64, f64) {
    ((lambda - s.upper_rate).abs(), (chi - s.lower_rate).abs())
}

/// Exhaustive mode scores every periodic orbit with `N_min < k ≤ k_max` and
/// keeps the minimax residual (ties: smaller `k`, then enumeration order).
#[allow(clippy::too_many_arguments)]
pub fn verify_main_theorem(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    sampler: &MeasureSampler,
    upper: &ExponentEstimate,
    lower: &ExponentEstimate,
    eps_target: f64,
    k_max: usize,
    n_min: usize,
    mode: TheoremMode,
    constructive: &ConstructiveParams,
    budget: u64,
) -> Result<TheoremReport> {
    if !(eps_target > 0.0) {
        return Err(Error::InvalidParameter("eps_target must be positive".into()));
    }
    let (lambda, chi) = (upper.value, lower.value);
    let stderr = upper.stderr.max(lower.stderr);
    let mut stall_reason = None;
    let table: Vec<PeriodicScore> = match mode {
        TheoremMode::Exhaustive => {
            let mut orbits = Vec::new();
            for k in n_min + 1..=k_max {
                orbits.extend(enumerate_periodic(base, k, budget)?);
            }
            orbits
                .par_iter()
                .map(|o| score_periodic(gen, base, o))
                .collect::<Result<_>>()?
        }
        TheoremMode::Constructive => {
            match constructive_orbit(gen, base, sampler, lambda, eps_target, n_min, constructive)? {
                Ok(orbit) => vec![score_periodic(gen, base, &orbit)?],
                Err(reason) => {
                    stall_reason = Some(reason);
                    vec![]
                }
            }
        }
    };
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in table.iter().enumerate() {
        let (ru, rl) = residuals(s, lambda, chi);
        let r = ru.max(rl);
        let better = match best {
            None => true,
            Some((j, b)) => r < b || (r == b && s.k < table[j].k),
        };
        if better {
            best = Some((i, r));
        }
    }
    let winner = best.map(|(i, _)| table[i].clone());
    let (upper_residual, lower_residual) = winner
        .as_ref()
        .map(|w| residuals(w, lambda, chi))
        .unwrap_or((f64::INFINITY, f64::INFINITY));
    let residual = upper_residual.max(lower_residual);
    let (one_sided_upper, one_sided_lower) = winner
        .as_ref()
        .map(|w| (w.upper_exponent < lambda + eps_target, w.lower_exponent > chi - eps_target))
        .unwrap_or((false, false));
    Ok(TheoremReport {
        mode,
        lambda_hat: lambda,
        chi_hat: chi,
        stderr,
        eps_target,
        success: residual < eps_target + 2.0 * stderr,
        winner,
        residual,
        upper_residual,
        lower_residual,
        one_sided_upper,
        one_sided_lower,
        table,
        stall_reason,
    })
}

/// Good time `n` along a sampled point, a return `k ∈ (n(1+ε′), n(1+2ε′))`
/// with `ε′ = 3ε/(αγ)`, then closing. The inner `Err` is a stall reason.
fn constructive_orbit(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    sampler: &MeasureSampler,
    lambda: f64,
    eps: f64,
    n_min: usize,
    params: &ConstructiveParams,
) -> Result<std::result::Result<PeriodicOrbit, String>> {
    let eps_prime = 3.0 * eps / (gen.holder_alpha() * base.expansion_rate());
    let stage = sampler.for_stage("constructive");
    let mut reason = String::from("no attempts made");
    for attempt in 0..params.attempts as u64 {
        let x = stage.sample_point(base, attempt)?;
        let good = km_good_times(gen, base, &x, params.horizon, lambda, eps, params.l_min)?;
        let candidates: Vec<usize> = good.into_iter().filter(|&n| n > n_min.max(params.l_min)).collect();
        if candidates.is_empty() {
            reason = format!("no good time above N_min within horizon {}", params.horizon);
            continue;
        }
        let mut returned = false;
        for &n in &candidates {
            let k = match find_return(base, &x, n, eps_prime, params.delta) {
                Ok(k) => k,
                Err(Error::NotFound { .. }) => continue,
                Err(e) => return Err(e),
            };
            returned = true;
            match close_orbit(base, &x, k) {
                Ok(o) => return Ok(Ok(o)),
                Err(Error::ForbiddenWrap { .. }) | Err(Error::IllConditionedClosing(_)) => {
                    reason = format!("closing failed at n = {n}, k = {k}");
                }
                Err(e) => return Err(e),
            }
        }
        if !returned {
            reason = format!(
                "no return closer than {} in any window (n(1+ε'), n(1+2ε')) with ε' = {eps_prime:.4}",
                params.delta
            );
        }
    }
    Ok(Err(reason))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRateReport {
    /// `s_n = sup_x (1/n) ln ‖𝔸ⁿ_x‖`, `n = 1..=n_max`
    pub s: Vec<f64>,
    /// `t_k = max_{p = f^k p} (1/k) ln ‖𝔸ᵏ_p‖`, `k = 1..=k_max`
    pub t: Vec<f64>,
    /// `sup_x (1/n) ln Q(x, n)`
    pub q_sup: Vec<f64>,
    /// `max_p (1/k) ln Q(p, k)`
    pub q_periodic: Vec<f64>,
    /// `|s_m − t_m|` and `|q_sup_m − q_periodic_m|` at `m = min(n_max, k_max)`
    pub gap: f64,
    pub q_gap: f64,
    /// Whether `s_n` was an exact maximum over words or a sampled one.
    pub exact: bool,
}

/// Max of `(ln ‖P‖, ln ‖P‖ + ln ‖P⁻¹‖)` over products along all allowed
/// words of length `n + 2m`.
fn word_sup(gen: &CocycleGenerator, shift: &ShiftSpace, n: usize, budget: u64) -> Result<(f64, f64)> {
    let m = gen.memory();
    let len = n + 2 * m;
    let needed = (shift.alphabet_size() as f64).powi(len as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded {
            needed,
            budget: budget as f64,
        });
    }
    let GeneratorKind::LocallyConstant { table, .. } = gen.kind() else {
        unreachable!("called for locally constant generators")
    };
    let inverses: std::collections::BTreeMap<&Vec<u8>, Operator> = table
        .iter()
        .map(|(w, a)| Ok((w, crate::linalg::invert(a)?)))
        .collect::<Result<_>>()?;
    struct Walk<'a> {
        shift: &'a ShiftSpace,
        table: &'a std::collections::BTreeMap<Vec<u8>, Operator>,
        inverses: &'a std::collections::BTreeMap<&'a Vec<u8>, Operator>,
        width: usize,
        len: usize,
        norm: crate::linalg::NormKind,
        best: (f64, f64),
    }
    fn rec(w: &mut Walk, word: &mut Vec<u8>, p: &ScaledOperator, pi: &ScaledOperator) -> Result<()> {
        if word.len() == w.len {
            let a = p.ln_norm(w.norm);
            w.best.0 = w.best.0.max(a);
            w.best.1 = w.best.1.max(a + pi.ln_norm(w.norm));
            return Ok(());
        }
        for s in 0..w.shift.alphabet_size() as u8 {
            if word.last().is_some_and(|&l| !w.shift.allowed(l, s)) {
                continue;
            }
            word.push(s);
            if word.len() >= w.width {
                let key = word[word.len() - w.width..].to_vec();
                let a = w.table.get(&key).ok_or_else(|| Error::MissingWord(key.clone()))?;
                let ai = &w.inverses[&key];
                let mut p2 = p.clone();
                p2.left_mul(a);
                let mut pi2 = pi.clone();
                pi2.right_mul(ai);
                rec(w, word, &p2, &pi2)?;
            } else {
                rec(w, word, p, pi)?;
            }
            word.pop();
        }
        Ok(())
    }
    let mut walk = Walk {
        shift,
        table,
        inverses: &inverses,
        width: 2 * m + 1,
        len,
        norm: gen.norm(),
        best: (f64::NEG_INFINITY, f64::NEG_INFINITY),
    };
    let id = ScaledOperator::identity(gen.dim());
    rec(&mut walk, &mut Vec::with_capacity(len), &id, &id)?;
    Ok(walk.best)
}

/// Norm and distortion growth: suprema over all points against maxima over
/// periodic points.
pub fn corollary_norm_rates(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    n_max: usize,
    k_max: usize,
    seed: u64,
    budget: u64,
) -> Result<NormRateReport> {
    if n_max == 0 || k_max == 0 {
        return Err(Error::InvalidParameter("n_max and k_max must be at least 1".into()));
    }
    let exact = match (gen.kind(), base) {
        (GeneratorKind::Constant(_), _) => true,
        (GeneratorKind::LocallyConstant { .. }, BaseSystem::Shift(_)) => true,
        _ => false,
    };
    let mut s = Vec::with_capacity(n_max);
    let mut q_sup = Vec::with_capacity(n_max);
    let samples: Vec<BasePoint> = if exact {
        vec![]
    } else {
        (0..SUP_SAMPLES as u64)
            .map(|i| crate::base::generic_point(base, seed, i))
            .collect()
    };
    for n in 1..=n_max {
        let (a, q) = match (gen.kind(), base) {
            (GeneratorKind::LocallyConstant { .. }, BaseSystem::Shift(shift)) => word_sup(gen, shift, n, budget)?,
            (GeneratorKind::Constant(_), _) => {
                let x = crate::base::generic_point(base, seed, 0);
                let (p, pi) = gen.evaluate_pair(base, &x, n as i64)?;
                let a = p.ln_norm(gen.norm());
                (a, a + pi.ln_norm(gen.norm()))
            }
            _ => samples
                .par_iter()
                .map(|x| {
                    let (p, pi) = gen.evaluate_pair(base, x, n as i64)?;
                    let a = p.ln_norm(gen.norm());
                    Ok((a, a + pi.ln_norm(gen.norm())))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |acc, v| (acc.0.max(v.0), acc.1.max(v.1))),
        };
        s.push(a / n as f64);
        q_sup.push(q / n as f64);
    }
    let mut t = Vec::with_capacity(k_max);
    let mut q_periodic = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let scores: Vec<PeriodicScore> = enumerate_periodic(base, k, budget)?
            .par_iter()
            .map(|o| score_periodic(gen, base, o))
            .collect::<Result<_>>()?;
        t.push(scores.iter().map(|s| s.upper_rate).fold(f64::NEG_INFINITY, f64::max));
        q_periodic.push(scores.iter().map(|s| s.ln_q / k as f64).fold(f64::NEG_INFINITY, f64::max));
    }
    let m = n_max.min(k_max) - 1;
    Ok(NormRateReport {
        gap: (s[m] - t[m]).abs(),
        q_gap: (q_sup[m] - q_periodic[m]).abs(),
        s,
        t,
        q_sup,
        q_periodic,
        exact,
    })
}

/// Canonical label of a periodic point (word or coordinates).
pub fn orbit_label(orbit: &PeriodicOrbit) -> String {
    match &orbit.point {
        BasePoint::Symbolic(w) => w.periodic_word().map(|w| word_string(&w)).unwrap_or_default(),
        p => p.label(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::NormKind;

    fn diag_pair() -> (BaseSystem, CocycleGenerator) {
        let shift = ShiftSpace::full(2).unwrap();
        let g = CocycleGenerator::from_symbol_ops(&shift, &[Operator::diag(&[2.0, 0.5]), Operator::diag(&[0.5, 2.0])])
            .unwrap();
        (BaseSystem::Shift(shift), g)
    }

    #[test]
    fn full_shift_enumeration_examples() {
        let base = BaseSystem::full_shift(2).unwrap();
        let labels = |k| {
            enumerate_periodic(&base, k, DEFAULT_BUDGET)
                .unwrap()
                .iter()
                .map(orbit_label)
                .collect::<Vec<_>>()
        };
        assert_eq!(labels(1), vec!["0", "1"]);
        assert_eq!(labels(3), vec!["000", "001", "011", "111"]);
    }

    #[test]
    fn cat_map_has_one_fixed_point() {
        let base = BaseSystem::cat_map();
        let fixed = enumerate_periodic(&base, 1, DEFAULT_BUDGET).unwrap();
        assert_eq!(fixed.len(), 1);
        assert_eq!(fixed[0].point.as_torus().unwrap().coords(), vec![0.0, 0.0]);
        // |det(M^2 - I)| = 5 points of period 2: the origin and two 2-cycles
        assert_eq!(enumerate_periodic(&base, 2, DEFAULT_BUDGET).unwrap().len(), 3);
    }

    #[test]
    fn budget_is_enforced() {
        let base = BaseSystem::full_shift(2).unwrap();
        assert!(matches!(enumerate_periodic(&base, 30, DEFAULT_BUDGET), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn score_examples() {
        let (base, g) = diag_pair();
        let alt = PeriodicOrbit::new(&base, BasePoint::Symbolic(SymbolicWindow::periodic(vec![0, 1])), 2).unwrap();
        let s = score_periodic(&g, &base, &alt).unwrap();
        assert!(s.upper_rate.abs() < 1e-15 && s.upper_exponent.abs() < 1e-15);
        let zero = PeriodicOrbit::new(&base, BasePoint::Symbolic(SymbolicWindow::periodic(vec![0])), 1).unwrap();
        let s = score_periodic(&g, &base, &zero).unwrap();
        assert!((s.upper_rate - 2f64.ln()).abs() < 1e-15);
        let c = CocycleGenerator::constant(Operator::scalar(2, 3.0)).unwrap();
        let s = score_periodic(&c, &base, &alt).unwrap();
        assert!((s.lower_rate - 3f64.ln()).abs() < 1e-15 && s.ln_q.abs() < 1e-12);
    }

    #[test]
    fn norm_rates_for_unipotent_power() {
        // a single unipotent matrix on both symbols
        let shift = ShiftSpace::full(2).unwrap();
        let b0 = Operator::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap();
        let g = CocycleGenerator::from_symbol_ops(&shift, &[b0.clone(), b0]).unwrap();
        let base = BaseSystem::Shift(shift);
        let r = corollary_norm_rates(&g, &base, 12, 8, 0, DEFAULT_BUDGET).unwrap();
        assert!(r.exact);
        assert!(r.s[11] < r.s[0]);
        assert!(r.s[11] < 0.25 && r.gap < 1e-12);
    }

    #[test]
    fn memory_one_word_sup_matches_brute_force() {
        let shift = ShiftSpace::full(2).unwrap();
        let mut table = std::collections::BTreeMap::new();
        let mats = [
            Operator::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
            Operator::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
            Operator::diag(&[2.0, 0.5]),
            Operator::diag(&[1.0, 1.5]),
        ];
        for (i, w) in crate::cocycle::allowed_words(&shift, 3).into_iter().enumerate() {
            table.insert(w, mats[i % 4].clone());
        }
        let g = CocycleGenerator::locally_constant(&shift, 1, table, NormKind::default(), Default::default()).unwrap();
        let base = BaseSystem::Shift(shift.clone());
        let (sup, _) = word_sup(&g, &shift, 4, DEFAULT_BUDGET).unwrap();
        let mut brute = f64::NEG_INFINITY;
        for w in crate::cocycle::allowed_words(&shift, 6) {
            let x = BasePoint::Symbolic(SymbolicWindow::finite(-1, w));
            brute = brute.max(g.log_norm(&base, &x, 4).unwrap());
        }
        assert!((sup - brute).abs() < 1e-12);
    }
}
