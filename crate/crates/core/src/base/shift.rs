//! Shift spaces and bi-infinite symbol sequences.

use std::fmt;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the disagreement radius examined by the symbolic metric.
pub const DEFAULT_HORIZON: usize = 256;

/// Sampled sequences refuse to materialize coordinates beyond this radius.
const MAX_EXTENT: i64 = 1 << 28;

/// A subshift of finite type given by a 0/1 transition matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpace {
    alphabet_size: usize,
    transition: Vec<Vec<u8>>,
    metric_base: f64,
    horizon: usize,
}

impl ShiftSpace {
    pub fn new(transition: Vec<Vec<u8>>, metric_base: f64) -> Result<Self> {
        let n = transition.len();
        if n < 2 {
            return Err(Error::InvalidBase("alphabet must have at least 2 symbols".into()));
        }
        if n > 256 {
            return Err(Error::InvalidBase("alphabet is limited to 256 symbols".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidBase(format!("transition row {i} has wrong length")));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidBase("transition entries must be 0 or 1".into()));
            }
            if row.iter().all(|&v| v == 0) {
                return Err(Error::InvalidBase(format!("symbol {i} has no successor")));
            }
        }
        for j in 0..n {
            if transition.iter().all(|row| row[j] == 0) {
                return Err(Error::InvalidBase(format!("symbol {j} has no predecessor")));
            }
        }
        if !(metric_base > 1.0) || !metric_base.is_finite() {
            return Err(Error::InvalidBase("metric base must be finite and > 1".into()));
        }
        Ok(Self {
            alphabet_size: n,
            transition,
            metric_base,
            horizon: DEFAULT_HORIZON,
        })
    }

    pub fn full(alphabet_size: usize) -> Result<Self> {
        Self::new(vec![vec![1; alphabet_size]; alphabet_size], std::f64::consts::E)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon.max(1);
        self
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn transition(&self) -> &[Vec<u8>] {
        &self.transition
    }

    pub fn metric_base(&self) -> f64 {
        self.metric_base
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_full(&self) -> bool {
        self.transition.iter().all(|r| r.iter().all(|&v| v == 1))
    }

    #[inline]
    pub fn allowed(&self, a: u8, b: u8) -> bool {
        self.transition[a as usize][b as usize] == 1
    }

    pub fn word_allowed(&self, word: &[u8]) -> bool {
        word.iter().all(|&s| (s as usize) < self.alphabet_size)
            && word.windows(2).all(|w| self.allowed(w[0], w[1]))
    }

    /// Whether the word can be repeated periodically.
    pub fn cyclically_allowed(&self, word: &[u8]) -> bool {
        !word.is_empty()
            && self.word_allowed(word)
            && self.allowed(*word.last().unwrap(), word[0])
    }

    /// `metric_base^(-N)` with `N` the first disagreement radius, or 0 when
    /// the sequences agree on `[-H, H]`.
    pub fn distance(&self, x: &SymbolicWindow, y: &SymbolicWindow) -> Result<f64> {
        for r in 0..=self.horizon as i64 {
            let differs = x.symbol(r)? != y.symbol(r)? || (r > 0 && x.symbol(-r)? != y.symbol(-r)?);
            if differs {
                return Ok(self.metric_base.powi(-(r as i32)));
            }
        }
        Ok(0.0)
    }

    /// Uniform-successor chain over the transition graph; the generic
    /// "random point" used when no measure is prescribed.
    pub fn uniform_chain(&self, seed: u64) -> SampledChain {
        let n = self.alphabet_size;
        let forward: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                let deg = self.transition[a].iter().filter(|&&v| v == 1).count() as f64;
                (0..n).map(|b| self.transition[a][b] as f64 / deg).collect()
            })
            .collect();
        let backward: Vec<Vec<f64>> = (0..n)
            .map(|b| {
                let deg = (0..n).filter(|&a| self.transition[a][b] == 1).count() as f64;
                (0..n).map(|a| self.transition[a][b] as f64 / deg).collect()
            })
            .collect();
        SampledChain::new(seed, vec![1.0 / n as f64; n], forward, backward)
    }
}

/// Where the coordinates of a bi-infinite sequence come from.
pub enum SymbolSource {
    /// `symbol(i) = word[i mod k]`.
    Periodic(Vec<u8>),
    /// Explicit symbols on `[lo, lo + len)`; nothing outside.
    Finite { lo: i64, symbols: Vec<u8> },
    /// A Markov chain realized lazily outward from index 0.
    Sampled(SampledChain),
}

impl SymbolSource {
    fn symbol(&self, i: i64) -> Result<u8> {
        match self {
            SymbolSource::Periodic(word) => Ok(word[i.rem_euclid(word.len() as i64) as usize]),
            SymbolSource::Finite { lo, symbols } => {
                let j = i - lo;
                if j < 0 || j >= symbols.len() as i64 {
                    Err(Error::WindowExhausted { index: i })
                } else {
                    Ok(symbols[j as usize])
                }
            }
            SymbolSource::Sampled(chain) => chain.symbol(i),
        }
    }
}

/// Markov chain with separate forward (`x_{i+1} | x_i`) and backward
/// (`x_{i-1} | x_i`) kernels, extended contiguously from the origin. Each
/// direction draws from its own ChaCha stream, so the realized sequence is a
/// function of the seed alone, whatever order coordinates are requested in.
pub struct SampledChain {
    initial: Vec<f64>,
    forward: Vec<Vec<f64>>,
    backward: Vec<Vec<f64>>,
    state: Mutex<ChainState>,
}

struct ChainState {
    /// `pos[j]` holds index `j`, `neg[j]` holds index `-(j + 1)`.
    pos: Vec<u8>,
    neg: Vec<u8>,
    fwd_rng: ChaCha8Rng,
    bwd_rng: ChaCha8Rng,
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (s, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = s;
        if u < acc {
            return s as u8;
        }
    }
    last as u8
}

impl SampledChain {
    pub fn new(seed: u64, initial: Vec<f64>, forward: Vec<Vec<f64>>, backward: Vec<Vec<f64>>) -> Self {
        let mut fwd_rng = ChaCha8Rng::seed_from_u64(seed);
        fwd_rng.set_stream(0);
        let mut bwd_rng = ChaCha8Rng::seed_from_u64(seed);
        bwd_rng.set_stream(1);
        let first = draw(&mut fwd_rng, &initial);
        Self {
            initial,
            forward,
            backward,
            state: Mutex::new(ChainState {
                pos: vec![first],
                neg: Vec::new(),
                fwd_rng,
                bwd_rng,
            }),
        }
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    fn symbol(&self, i: i64) -> Result<u8> {
        if i.abs() > MAX_EXTENT {
            return Err(Error::WindowExhausted { index: i });
        }
        let mut st = self.state.lock().expect("chain state poisoned");
        if i >= 0 {
            let i = i as usize;
            while st.pos.len() <= i {
                let prev = *st.pos.last().unwrap() as usize;
                let s = draw(&mut st.fwd_rng, &self.forward[prev]);
                st.pos.push(s);
            }
            Ok(st.pos[i])
        } else {
            let j = (-i - 1) as usize;
            while st.neg.len() <= j {
                let prev = *st.neg.last().unwrap_or(&st.pos[0]) as usize;
                let s = draw(&mut st.bwd_rng, &self.backward[prev]);
                st.neg.push(s);
            }
            Ok(st.neg[j])
        }
    }
}

/// A point of a shift space: a shared symbol source read at an offset, so
/// that `x_n = source[offset + n]`. Shifting only moves the offset.
#[derive(Clone)]
pub struct SymbolicWindow {
    offset: i64,
    source: Arc<SymbolSource>,
}

impl fmt::Debug for SymbolicWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &*self.source {
            SymbolSource::Periodic(w) => format!("periodic({})", word_string(w)),
            SymbolSource::Finite { lo, symbols } => format!("finite({lo}, {})", word_string(symbols)),
            SymbolSource::Sampled(_) => "sampled".to_string(),
        };
        write!(f, "SymbolicWindow {{ offset: {}, {} }}", self.offset, kind)
    }
}

impl SymbolicWindow {
    pub fn periodic(word: Vec<u8>) -> Self {
        assert!(!word.is_empty(), "periodic word must be non-empty");
        Self {
            offset: 0,
            source: Arc::new(SymbolSource::Periodic(word)),
        }
    }

    /// Explicit symbols with `symbols[0]` at index `lo`.
    pub fn finite(lo: i64, symbols: Vec<u8>) -> Self {
        Self {
            offset: 0,
            source: Arc::new(SymbolSource::Finite { lo, symbols }),
        }
    }

    pub fn sampled(chain: SampledChain) -> Self {
        Self {
            offset: 0,
            source: Arc::new(SymbolSource::Sampled(chain)),
        }
    }

    pub fn center_offset(&self) -> i64 {
        self.offset
    }

    #[inline]
    pub fn symbol(&self, n: i64) -> Result<u8> {
        self.source.symbol(self.offset + n)
    }

    /// Symbols `x_lo, …, x_hi` inclusive.
    pub fn symbols(&self, lo: i64, hi: i64) -> Result<Vec<u8>> {
        (lo..=hi).map(|i| self.symbol(i)).collect()
    }

    pub fn shifted(&self, n: i64) -> Self {
        Self {
            offset: self.offset + n,
            source: Arc::clone(&self.source),
        }
    }

    /// The repeating word if this point is periodic, read from index 0.
    pub fn periodic_word(&self) -> Option<Vec<u8>> {
        match &*self.source {
            SymbolSource::Periodic(w) => {
                let k = w.len() as i64;
                Some((0..k).map(|i| w[(self.offset + i).rem_euclid(k) as usize]).collect())
            }
            _ => None,
        }
    }
}

pub fn word_string(word: &[u8]) -> String {
    const DIGITS: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyz";
    if word.iter().all(|&s| (s as usize) < DIGITS.len()) {
        word.iter().map(|&s| DIGITS[s as usize] as char).collect()
    } else {
        word.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(".")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_dead_symbols() {
        assert!(ShiftSpace::new(vec![vec![1, 0], vec![1, 0]], 2.0).is_err());
        assert!(ShiftSpace::new(vec![vec![0, 0], vec![1, 1]], 2.0).is_err());
        assert!(ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], 1.0).is_err());
        assert!(ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], 2.0).is_ok());
    }

    #[test]
    fn distance_examples() {
        let s = ShiftSpace::full(2).unwrap();
        let x = SymbolicWindow::periodic(vec![0, 1]);
        assert_eq!(s.distance(&x, &x).unwrap(), 0.0);
        let y = SymbolicWindow::periodic(vec![1, 0]);
        assert_eq!(s.distance(&x, &y).unwrap(), 1.0);
        // agree on |n| < 3
        let a = SymbolicWindow::finite(-5, vec![0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let b = SymbolicWindow::finite(-5, vec![1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1]);
        let d = s.clone().with_horizon(5).distance(&a, &b).unwrap();
        assert!((d - std::f64::consts::E.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn finite_window_exhausts() {
        let w = SymbolicWindow::finite(0, vec![0, 1]);
        assert_eq!(w.symbol(1).unwrap(), 1);
        assert!(matches!(w.symbol(2), Err(Error::WindowExhausted { index: 2 })));
    }

    #[test]
    fn sampled_chain_is_order_independent() {
        let s = ShiftSpace::full(3).unwrap();
        let a = SymbolicWindow::sampled(s.uniform_chain(11));
        let b = SymbolicWindow::sampled(s.uniform_chain(11));
        let fwd_first: Vec<u8> = (-20..20).map(|i| a.symbol(i).unwrap()).collect();
        let back_first: Vec<u8> = (-20..20).rev().map(|i| b.symbol(i).unwrap()).rev().collect();
        assert_eq!(fwd_first, back_first);
    }

    #[test]
    fn uniform_chain_respects_transitions() {
        let s = ShiftSpace::new(vec![vec![1, 1], vec![1, 0]], 2.0).unwrap();
        let x = SymbolicWindow::sampled(s.uniform_chain(5));
        let w = x.symbols(-300, 300).unwrap();
        assert!(s.word_allowed(&w));
        assert!(w.contains(&1));
    }
}
