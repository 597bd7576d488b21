//! Joint and generalized spectral radii of a finite operator set.
//!
//! Words `w₁ … w_ℓ` stand for the products `A_{w_ℓ} ⋯ A_{w₁}` (later symbols
//! multiply on the left, as along a cocycle orbit).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::base::word_string;
use crate::error::{Error, Result};
use crate::linalg::{NormKind, Operator, ScaledOperator};

pub const DEFAULT_PRODUCT_BUDGET: u64 = 1 << 20;

/// Witness updates require this relative improvement.
const WITNESS_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusBounds {
    pub lower: f64,
    pub upper: f64,
    #[serde(rename = "depth")]
    pub depth_reached: usize,
    #[serde(rename = "witness")]
    pub witness_word: String,
    /// `lower` and `upper` after each depth `1..=depth_reached`.
    pub lower_by_depth: Vec<f64>,
    pub upper_by_depth: Vec<f64>,
    /// Largest norm rate among length-`ℓ` products (exhaustive search only).
    pub norm_max_by_depth: Vec<f64>,
    /// Products whose norm was evaluated.
    pub nodes: u64,
}

impl RadiusBounds {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_ops(ops: &[Operator]) -> Result<usize> {
    let d = ops
        .first()
        .map(|a| a.dim())
        .ok_or_else(|| Error::InvalidParameter("operator set is empty".into()))?;
    if let Some(a) = ops.iter().find(|a| a.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: a.dim(),
        });
    }
    if ops.len() > 36 {
        return Err(Error::InvalidParameter("at most 36 operators are supported".into()));
    }
    Ok(d)
}

#[derive(Clone)]
struct Best {
    rate: f64,
    word: Vec<u8>,
}

impl Best {
    fn none() -> Self {
        Self {
            rate: f64::NEG_INFINITY,
            word: vec![],
        }
    }

    fn offer(&mut self, rate: f64, word: &[u8]) {
        let better = if self.rate.is_finite() && self.rate > 0.0 {
            rate > self.rate * (1.0 + WITNESS_IMPROVEMENT)
        } else {
            rate > self.rate
        };
        if better {
            self.rate = rate;
            self.word = word.to_vec();
        }
    }

    fn merge(mut self, other: Best) -> Best {
        self.offer(other.rate, &other.word);
        self
    }
}

/// Depth-first, lexicographic search of one subtree.
struct Subtree {
    best: Best,
    /// per depth (index ℓ−1): max ‖P‖^{1/ℓ}, max r(P)^{1/ℓ}
    norm_max: Vec<f64>,
    nodes: u64,
}

fn explore(ops: &[Operator], norm: NormKind, depth: usize, word: &mut Vec<u8>, p: &ScaledOperator, out: &mut Subtree) {
    let l = word.len();
    let lf = l as f64;
    out.nodes += 1;
    let nr = (p.ln_norm(norm) / lf).exp();
    out.norm_max[l - 1] = out.norm_max[l - 1].max(nr);
    out.best.offer((p.ln_spectral_radius() / lf).exp(), word);
    if l == depth {
        return;
    }
    for (s, a) in ops.iter().enumerate() {
        let mut q = p.clone();
        q.left_mul(a);
        word.push(s as u8);
        explore(ops, norm, depth, word, &q, out);
        word.pop();
    }
}

/// All products up to `depth`: `lower` is the best spectral-radius rate,
/// `upper` the best (over lengths) of the largest norm rate.
pub fn exhaustive_bounds(ops: &[Operator], depth: usize) -> Result<RadiusBounds> {
    exhaustive_bounds_with(ops, depth, NormKind::default(), DEFAULT_PRODUCT_BUDGET)
}

pub fn exhaustive_bounds_with(ops: &[Operator], depth: usize, norm: NormKind, budget: u64) -> Result<RadiusBounds> {
    check_ops(ops)?;
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    let needed = (ops.len() as f64).powi(depth as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded {
            needed,
            budget: budget as f64,
        });
    }
    let subtrees: Vec<Subtree> = ops
        .par_iter()
        .enumerate()
        .map(|(s, a)| {
            let mut out = Subtree {
                best: Best::none(),
                norm_max: vec![0.0; depth],
                nodes: 0,
            };
            let p = ScaledOperator::from_operator(a.clone());
            explore(ops, norm, depth, &mut vec![s as u8], &p, &mut out);
            out
        })
        .collect();
    let mut norm_max = vec![0.0f64; depth];
    let mut best = Best::none();
    let mut nodes = 0;
    // spectral maxima per depth need their own pass; recompute cheaply from
    // the merged subtrees in lexicographic order
    for st in subtrees {
        for (m, v) in norm_max.iter_mut().zip(&st.norm_max) {
            *m = m.max(*v);
        }
        best = best.merge(st.best);
        nodes += st.nodes;
    }
    let lower_by_depth = spectral_lower_by_depth(ops, depth)?;
    let mut upper_by_depth = Vec::with_capacity(depth);
    let mut u = f64::INFINITY;
    for &m in &norm_max {
        u = u.min(m);
        upper_by_depth.push(u);
    }
    Ok(RadiusBounds {
        lower: best.rate.max(0.0),
        upper: u,
        depth_reached: depth,
        witness_word: word_string(&best.word),
        lower_by_depth,
        upper_by_depth,
        norm_max_by_depth: norm_max,
        nodes,
    })
}

/// `max_{|w| ≤ ℓ} r(P_w)^{1/|w|}` for each `ℓ`. Cyclic rotations share a
/// spectral radius, so only minimal rotations are evaluated.
fn spectral_lower_by_depth(ops: &[Operator], depth: usize) -> Result<Vec<f64>> {
    let per_len: Vec<f64> = (1..=depth)
        .into_par_iter()
        .map(|l| {
            let mut best: f64 = 0.0;
            let mut word = vec![0u8; l];
            let k = ops.len() as u8;
            loop {
                if crate::periodic::is_min_rotation(&word) {
                    let mut p = ScaledOperator::identity(ops[0].dim());
                    for &s in &word {
                        p.left_mul(&ops[s as usize]);
                    }
                    best = best.max((p.ln_spectral_radius() / l as f64).exp());
                }
                // odometer, most significant symbol first
                let mut i = l;
                loop {
                    if i == 0 {
                        return best;
                    }
                    i -= 1;
                    word[i] += 1;
                    if word[i] < k {
                        break;
                    }
                    word[i] = 0;
                }
            }
        })
        .collect();
    let mut out = Vec::with_capacity(depth);
    let mut acc: f64 = 0.0;
    for v in per_len {
        acc = acc.max(v);
        out.push(acc);
    }
    Ok(out)
}

#[derive(Clone)]
struct Node {
    word: Vec<u8>,
    p: ScaledOperator,
    /// `min` over prefixes of `‖P_prefix‖^{1/len}`
    prefix_rate: f64,
}

/// Level-by-level search that drops products whose best prefix rate falls
/// below `lower − target_gap`.
///
/// Every long product splits greedily into blocks that are either a pruned
/// prefix (rate `< lower − gap`) or a depth-`ℓ` survivor cut at its best
/// prefix, so `max(lower, max over survivors of prefix_rate)` bounds the
/// joint spectral radius from above at every level.
pub fn branch_and_bound(ops: &[Operator], target_gap: f64, max_depth: usize) -> Result<RadiusBounds> {
    branch_and_bound_with(ops, target_gap, max_depth, NormKind::default(), DEFAULT_PRODUCT_BUDGET)
}

pub fn branch_and_bound_with(
    ops: &[Operator],
    target_gap: f64,
    max_depth: usize,
    norm: NormKind,
    frontier_budget: u64,
) -> Result<RadiusBounds> {
    check_ops(ops)?;
    if !(target_gap > 0.0) {
        return Err(Error::InvalidParameter("target_gap must be positive".into()));
    }
    if max_depth == 0 {
        return Err(Error::InvalidParameter("max_depth must be at least 1".into()));
    }
    let mut best = Best::none();
    let mut upper = f64::INFINITY;
    let mut lower_by_depth = Vec::new();
    let mut upper_by_depth = Vec::new();
    let mut nodes = 0u64;
    let mut frontier = vec![Node {
        word: vec![],
        p: ScaledOperator::identity(ops[0].dim()),
        prefix_rate: f64::INFINITY,
    }];
    let mut depth = 0;
    while depth < max_depth {
        depth += 1;
        let l = depth as f64;
        // children in lexicographic order
        let children: Vec<(Node, f64)> = frontier
            .par_iter()
            .flat_map_iter(|n| {
                ops.iter().enumerate().map(move |(s, a)| {
                    let mut p = n.p.clone();
                    p.left_mul(a);
                    let rate = (p.ln_norm(norm) / l).exp();
                    let spec = (p.ln_spectral_radius() / l).exp();
                    let mut word = n.word.clone();
                    word.push(s as u8);
                    (
                        Node {
                            word,
                            p,
                            prefix_rate: n.prefix_rate.min(rate),
                        },
                        spec,
                    )
                })
            })
            .collect();
        nodes += children.len() as u64;
        for (c, spec) in &children {
            best.offer(*spec, &c.word);
        }
        let lower = best.rate.max(0.0);
        frontier = children
            .into_iter()
            .map(|(c, _)| c)
            .filter(|c| c.prefix_rate >= lower - target_gap)
            .collect();
        let survivors = frontier.iter().map(|c| c.prefix_rate).fold(f64::NEG_INFINITY, f64::max);
        upper = upper.min(lower.max(survivors));
        lower_by_depth.push(lower);
        upper_by_depth.push(upper);
        if upper - lower <= target_gap || frontier.is_empty() {
            break;
        }
        if (frontier.len() * ops.len()) as u64 > frontier_budget {
            log::warn!("branch and bound stopped at depth {depth}: frontier budget exhausted");
            break;
        }
    }
    Ok(RadiusBounds {
        lower: best.rate.max(0.0),
        upper,
        depth_reached: depth,
        witness_word: word_string(&best.word),
        lower_by_depth,
        upper_by_depth,
        norm_max_by_depth: vec![],
        nodes,
    })
}

/// `(depth, upper − lower)` from exhaustive search at each requested depth.
pub fn berger_wang_gap(ops: &[Operator], depths: &[usize]) -> Result<Vec<(usize, f64)>> {
    depths
        .iter()
        .map(|&d| Ok((d, exhaustive_bounds(ops, d)?.gap())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> Vec<Operator> {
        vec![
            Operator::from_rows(&[[1.0, 1.0], [0.0, 1.0]]).unwrap(),
            Operator::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap(),
        ]
    }

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn scalar_set() {
        let b = exhaustive_bounds(&[Operator::scalar(2, 1.5)], 5).unwrap();
        assert!((b.lower - 1.5).abs() < 1e-12 && (b.upper - 1.5).abs() < 1e-12);
        let bb = branch_and_bound(&[Operator::scalar(2, 1.5)], 1e-6, 10).unwrap();
        assert_eq!(bb.depth_reached, 1);
        assert!(bb.gap().abs() < 1e-12);
    }

    #[test]
    fn diagonal_pair() {
        let ops = [Operator::diag(&[2.0, 0.5]), Operator::diag(&[0.5, 2.0])];
        let b = exhaustive_bounds(&ops, 4).unwrap();
        assert!((b.lower - 2.0).abs() < 1e-12 && (b.upper - 2.0).abs() < 1e-12);
        assert_eq!(b.witness_word, "0");
    }

    #[test]
    fn golden_pair_witness() {
        let b = exhaustive_bounds(&golden(), 8).unwrap();
        assert!(b.lower >= PHI - 1e-9);
        assert_eq!(b.witness_word, "01");
        assert!(b.upper >= b.lower - 1e-9);
    }

    #[test]
    fn bounds_are_monotone_in_depth() {
        let ops = [
            Operator::from_rows(&[[0.3, -0.9], [0.7, 0.2]]).unwrap(),
            Operator::from_rows(&[[-0.5, 0.4], [0.1, 0.8]]).unwrap(),
        ];
        let b = exhaustive_bounds(&ops, 10).unwrap();
        assert!(b.lower_by_depth.windows(2).all(|w| w[1] >= w[0]));
        assert!(b.upper_by_depth.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(exhaustive_bounds(&golden(), 21), Err(Error::BudgetExceeded { .. })));
    }
}
