//! Invariant-measure samplers, Monte-Carlo estimates of the extremal
//! exponents, and good-time detection for the sequence `a_n(x) = ln ‖𝔸ⁿ_x‖`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::{BasePoint, BaseSystem, SampledChain, SymbolicWindow, TorusPoint};
use crate::cocycle::CocycleGenerator;
use crate::error::{Error, Result};
use crate::linalg::ScaledOperator;
use crate::rng::{stream_rng, stream_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    Bernoulli { probabilities: Vec<f64> },
    Markov { matrix: Vec<Vec<f64>>, stationary: Vec<f64> },
    LebesgueTorus,
}

/// A seeded description of an invariant measure `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSampler {
    kind: MeasureKind,
    seed: u64,
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidSampler(format!("{what} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSampler(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl MeasureSampler {
    pub fn new(kind: MeasureKind, seed: u64) -> Result<Self> {
        match &kind {
            MeasureKind::Bernoulli { probabilities } => check_distribution(probabilities, "probability vector")?,
            MeasureKind::Markov { matrix, stationary } => {
                let n = matrix.len();
                if stationary.len() != n || matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidSampler("Markov matrix must be square and match the stationary vector".into()));
                }
                for (i, row) in matrix.iter().enumerate() {
                    check_distribution(row, &format!("row {i}"))?;
                }
                check_distribution(stationary, "stationary vector")?;
                for j in 0..n {
                    let pj: f64 = (0..n).map(|i| stationary[i] * matrix[i][j]).sum();
                    if (pj - stationary[j]).abs() > 1e-10 {
                        return Err(Error::InvalidSampler(format!("stationary vector fails πP = π at state {j}")));
                    }
                }
                if !irreducible(matrix) {
                    return Err(Error::InvalidSampler("Markov chain is not irreducible".into()));
                }
            }
            MeasureKind::LebesgueTorus => {}
        }
        Ok(Self { kind, seed })
    }

    pub fn bernoulli(probabilities: Vec<f64>, seed: u64) -> Result<Self> {
        Self::new(MeasureKind::Bernoulli { probabilities }, seed)
    }

    pub fn lebesgue(seed: u64) -> Self {
        Self {
            kind: MeasureKind::LebesgueTorus,
            seed,
        }
    }

    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The same measure with an independent seed derived for `stage`.
    pub fn for_stage(&self, stage: &str) -> Self {
        Self {
            kind: self.kind.clone(),
            seed: stream_seed(self.seed, stage, 0),
        }
    }

    pub fn check_compatible(&self, base: &BaseSystem) -> Result<()> {
        match (&self.kind, base) {
            (MeasureKind::Bernoulli { probabilities }, BaseSystem::Shift(s)) => {
                if probabilities.len() != s.alphabet_size() {
                    return Err(Error::IncompatibleSampler("probability vector length differs from the alphabet".into()));
                }
                let support: Vec<usize> = (0..probabilities.len()).filter(|&a| probabilities[a] > 0.0).collect();
                for &a in &support {
                    for &b in &support {
                        if !s.allowed(a as u8, b as u8) {
                            return Err(Error::IncompatibleSampler(format!(
                                "Bernoulli support uses the forbidden transition {a} -> {b}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            (MeasureKind::Markov { matrix, .. }, BaseSystem::Shift(s)) => {
                if matrix.len() != s.alphabet_size() {
                    return Err(Error::IncompatibleSampler("Markov matrix size differs from the alphabet".into()));
                }
                for (a, row) in matrix.iter().enumerate() {
                    for (b, &p) in row.iter().enumerate() {
                        if p > 0.0 && !s.allowed(a as u8, b as u8) {
                            return Err(Error::IncompatibleSampler(format!(
                                "Markov support uses the forbidden transition {a} -> {b}"
                            )));
                        }
                    }
                }
                Ok(())
            }
            (MeasureKind::LebesgueTorus, BaseSystem::Torus(_)) => Ok(()),
            (MeasureKind::LebesgueTorus, _) => Err(Error::IncompatibleSampler("Lebesgue measure needs a torus base".into())),
            (_, BaseSystem::Torus(_)) => Err(Error::IncompatibleSampler("symbolic measure over a torus base".into())),
        }
    }

    /// The `index`-th independent `μ`-distributed point.
    pub fn sample_point(&self, base: &BaseSystem, index: u64) -> Result<BasePoint> {
        self.check_compatible(base)?;
        let seed = stream_seed(self.seed, "sample-point", index);
        match (&self.kind, base) {
            (MeasureKind::Bernoulli { probabilities }, _) => {
                let rows = vec![probabilities.clone(); probabilities.len()];
                let chain = SampledChain::new(seed, probabilities.clone(), rows.clone(), rows);
                Ok(BasePoint::Symbolic(SymbolicWindow::sampled(chain)))
            }
            (MeasureKind::Markov { matrix, stationary }, _) => {
                let n = matrix.len();
                // time reversal: P(x_{i−1} = a | x_i = b) = π_a P(a, b) / π_b
                let backward = (0..n)
                    .map(|b| (0..n).map(|a| stationary[a] * matrix[a][b] / stationary[b]).collect())
                    .collect();
                let chain = SampledChain::new(seed, stationary.clone(), matrix.clone(), backward);
                Ok(BasePoint::Symbolic(SymbolicWindow::sampled(chain)))
            }
            (MeasureKind::LebesgueTorus, BaseSystem::Torus(t)) => {
                let mut rng = stream_rng(seed, "lebesgue", 0);
                let num = (0..t.dim()).map(|_| rng.random::<u64>() as u128).collect();
                Ok(BasePoint::Torus(TorusPoint::from_rational(num, crate::base::DYADIC_DEN)?))
            }
            _ => unreachable!("checked by check_compatible"),
        }
    }
}

fn irreducible(matrix: &[Vec<f64>]) -> bool {
    let n = matrix.len();
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(a) = stack.pop() {
            for b in 0..n {
                let p = if forward { matrix[a][b] } else { matrix[b][a] };
                if p > 0.0 && !seen[b] {
                    seen[b] = true;
                    stack.push(b);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    n > 0 && reach(0, true) && reach(0, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub value: f64,
    pub horizon_n: usize,
    pub replicas: usize,
    pub stderr: f64,
}

impl ExponentEstimate {
    fn from_samples(samples: &[f64], n: usize) -> Self {
        let r = samples.len();
        let mean = samples.iter().sum::<f64>() / r as f64;
        let stderr = if r > 1 {
            let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
            (var / r as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value: mean,
            horizon_n: n,
            replicas: r,
            stderr,
        }
    }
}

/// One replica's normalized values `a_n/n` and `ã_n/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub replica: usize,
    pub n: usize,
    pub a_over_n: f64,
    pub a_tilde_over_n: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub upper: ExponentEstimate,
    pub lower: ExponentEstimate,
    pub rows: Vec<ReplicaRow>,
}

/// `λ̂` and `χ̂` from the same replicas; each replica is a point drawn from
/// its own stream, evaluated in parallel and reduced in replica order.
pub fn estimate_exponents(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    sampler: &MeasureSampler,
    n: usize,
    replicas: usize,
) -> Result<ExponentReport> {
    if n == 0 || replicas == 0 {
        return Err(Error::InvalidParameter("n and replicas must be at least 1".into()));
    }
    sampler.check_compatible(base)?;
    let rows: Vec<ReplicaRow> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let x = sampler.sample_point(base, r as u64)?;
            let (fwd, inv) = gen.evaluate_pair(base, &x, n as i64)?;
            Ok(ReplicaRow {
                replica: r,
                n,
                a_over_n: fwd.ln_norm(gen.norm()) / n as f64,
                a_tilde_over_n: inv.ln_norm(gen.norm()) / n as f64,
            })
        })
        .collect::<Result<_>>()?;
    let upper: Vec<f64> = rows.iter().map(|r| r.a_over_n).collect();
    let lower: Vec<f64> = rows.iter().map(|r| -r.a_tilde_over_n).collect();
    Ok(ExponentReport {
        upper: ExponentEstimate::from_samples(&upper, n),
        lower: ExponentEstimate::from_samples(&lower, n),
        rows,
    })
}

/// Mean of `a_n(x)/n` over `replicas` points `x ~ μ`.
pub fn estimate_upper(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    sampler: &MeasureSampler,
    n: usize,
    replicas: usize,
) -> Result<ExponentEstimate> {
    Ok(estimate_exponents(gen, base, sampler, n, replicas)?.upper)
}

/// Mean of `−ã_n(x)/n` over `replicas` points `x ~ μ`.
pub fn estimate_lower(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    sampler: &MeasureSampler,
    n: usize,
    replicas: usize,
) -> Result<ExponentEstimate> {
    Ok(estimate_exponents(gen, base, sampler, n, replicas)?.lower)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// `ln ‖𝔸ⁿ_x‖`
    A,
    /// `ln ‖(𝔸ⁿ_x)⁻¹‖`
    ATilde,
    /// `a_n(f^{−n} x)`
    B,
    /// `ã_n(f^{−n} x) = ln ‖𝔸^{−n}_x‖`
    BTilde,
}

#[derive(Debug, Clone)]
pub struct SubadditiveSequence {
    pub values: Vec<f64>,
    pub kind: SequenceKind,
    pub x_ref: BasePoint,
}

/// `values[k]` for `k = 0..=n_max` of the requested sequence along `x`.
pub fn subadditive_sequence(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    kind: SequenceKind,
    n_max: usize,
) -> Result<SubadditiveSequence> {
    let norm = gen.norm();
    let values = match kind {
        SequenceKind::A => gen.log_norm_profile(base, x, n_max)?.0,
        SequenceKind::ATilde => gen.log_norm_profile(base, x, n_max)?.1,
        SequenceKind::B | SequenceKind::BTilde => {
            // 𝔸ⁿ_{f^{−n}x} = A(f^{−1}x) ⋯ A(f^{−n}x): extend on the right
            let mut fwd = ScaledOperator::identity(gen.dim());
            let mut inv = ScaledOperator::identity(gen.dim());
            let mut values = vec![0.0];
            let mut y = x.clone();
            for _ in 0..n_max {
                y = base.step(&y, -1)?;
                let (a, ai) = gen.generator_pair(base, &y)?;
                fwd.right_mul(&a);
                inv.left_mul(&ai);
                values.push(if kind == SequenceKind::B {
                    fwd.ln_norm(norm)
                } else {
                    inv.ln_norm(norm)
                });
            }
            values
        }
    };
    Ok(SubadditiveSequence {
        values,
        kind,
        x_ref: x.clone(),
    })
}

/// Flags `good[n]`, `n = 0..=n_max`: whether
/// `a_n(x) − a_{n−i}(f^i x) ≥ (λ − tol(i)) i` for every `l_min ≤ i ≤ n`.
///
/// One scale-tracked pass per suffix start `i`; O(n_max²) products.
fn good_time_flags(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    n_max: usize,
    lambda_hat: f64,
    tol: &(dyn Fn(usize) -> f64 + Sync),
    l_min: usize,
) -> Result<Vec<bool>> {
    let norm = gen.norm();
    let a = gen.log_norm_profile(base, x, n_max)?.0;
    // orbit points f^i x, i = 0..n_max
    let mut points = Vec::with_capacity(n_max + 1);
    points.push(x.clone());
    for i in 1..=n_max {
        points.push(base.step(&points[i - 1], 1)?);
    }
    let factors: Vec<_> = points[..n_max]
        .par_iter()
        .map(|p| gen.generator_at(base, p))
        .collect::<Result<_>>()?;
    let bad: Vec<Vec<usize>> = (l_min.max(1)..=n_max)
        .into_par_iter()
        .map(|i| {
            let threshold = (lambda_hat - tol(i)) * i as f64;
            let mut out = Vec::new();
            let mut suffix = ScaledOperator::identity(gen.dim());
            // n = i: the suffix product is the identity
            for n in i..=n_max {
                if n > i {
                    suffix.left_mul(&factors[n - 1]);
                }
                let s = if n == i { 0.0 } else { suffix.ln_norm(norm) };
                if !(a[n] - s >= threshold) {
                    out.push(n);
                }
            }
            out
        })
        .collect();
    let mut good = vec![true; n_max + 1];
    for list in bad {
        for n in list {
            good[n] = false;
        }
    }
    Ok(good)
}

/// Times `1 ≤ n ≤ n_max` at which `a_n(x) − a_{n−i}(f^i x) ≥ (λ̂ − ε) i` for
/// all `L ≤ i ≤ n`. Times `n < L` satisfy this vacuously.
pub fn km_good_times(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    n_max: usize,
    lambda_hat: f64,
    eps: f64,
    l_min: usize,
) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter("eps must be positive".into()));
    }
    let flags = good_time_flags(gen, base, x, n_max, lambda_hat, &|_| eps, l_min)?;
    Ok((1..=n_max).filter(|&n| flags[n]).collect())
}

/// Fraction of `n ∈ [0, N)` satisfying the good-time inequality for all
/// `1 ≤ i ≤ n` with tolerance `ε_i` (the last schedule entry repeats).
pub fn gk_good_density(
    gen: &CocycleGenerator,
    base: &BaseSystem,
    x: &BasePoint,
    lambda_hat: f64,
    eps_schedule: &[f64],
    n: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    if eps_schedule.is_empty() || eps_schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("eps schedule must be non-empty and positive".into()));
    }
    if eps_schedule.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("eps schedule must be non-increasing".into()));
    }
    let last = *eps_schedule.last().unwrap();
    let tol = |i: usize| eps_schedule.get(i - 1).copied().unwrap_or(last);
    let flags = good_time_flags(gen, base, x, n - 1, lambda_hat, &tol, 1)?;
    Ok(flags.iter().filter(|&&g| g).count() as f64 / n as f64)
}
