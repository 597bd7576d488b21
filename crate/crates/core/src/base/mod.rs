//! Base dynamics: shift spaces and hyperbolic toral automorphisms.

mod closing;
mod shift;
mod torus;

pub use closing::{
    calibrate_closing, calibrate_closing_on, close_orbit, envelope, find_return, generic_point, shadowing_profile,
    torus_worst_case_constant, within_envelope, ClosingParams, PeriodicOrbit,
};
pub use shift::{word_string, SampledChain, ShiftSpace, SymbolicWindow, DEFAULT_HORIZON};
pub use torus::{IntMatrix, TorusMap, TorusPoint, DYADIC_DEN};

use crate::error::{Error, Result};

/// The base homeomorphism `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseSystem {
    Shift(ShiftSpace),
    Torus(TorusMap),
}

/// A point of a base system.
#[derive(Debug, Clone)]
pub enum BasePoint {
    Symbolic(SymbolicWindow),
    Torus(TorusPoint),
}

impl BasePoint {
    pub fn as_symbolic(&self) -> Option<&SymbolicWindow> {
        match self {
            BasePoint::Symbolic(w) => Some(w),
            _ => None,
        }
    }

    pub fn as_torus(&self) -> Option<&TorusPoint> {
        match self {
            BasePoint::Torus(p) => Some(p),
            _ => None,
        }
    }

    /// Short human-readable label: the repeating word or the coordinates.
    pub fn label(&self) -> String {
        match self {
            BasePoint::Symbolic(w) => match w.periodic_word() {
                Some(word) => word_string(&word),
                None => format!("{w:?}"),
            },
            BasePoint::Torus(p) => {
                let c: Vec<String> = p.coords().iter().map(|v| format!("{v:.16e}")).collect();
                c.join(" ")
            }
        }
    }
}

impl From<SymbolicWindow> for BasePoint {
    fn from(w: SymbolicWindow) -> Self {
        BasePoint::Symbolic(w)
    }
}

impl From<TorusPoint> for BasePoint {
    fn from(p: TorusPoint) -> Self {
        BasePoint::Torus(p)
    }
}

fn mismatch() -> Error {
    Error::InvalidParameter("point does not belong to this base system".into())
}

impl BaseSystem {
    pub fn full_shift(alphabet_size: usize) -> Result<Self> {
        Ok(BaseSystem::Shift(ShiftSpace::full(alphabet_size)?))
    }

    pub fn torus(rows: &[Vec<i64>]) -> Result<Self> {
        Ok(BaseSystem::Torus(TorusMap::new(rows)?))
    }

    pub fn cat_map() -> Self {
        BaseSystem::Torus(TorusMap::new(&[vec![2, 1], vec![1, 1]]).expect("cat map is hyperbolic"))
    }

    pub fn as_shift(&self) -> Option<&ShiftSpace> {
        match self {
            BaseSystem::Shift(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_torus(&self) -> Option<&TorusMap> {
        match self {
            BaseSystem::Torus(t) => Some(t),
            _ => None,
        }
    }

    /// `f^n(x)`. Shifts move the read offset; torus points are multiplied
    /// exactly by `M^n` modulo the point's denominator.
    pub fn step(&self, x: &BasePoint, n: i64) -> Result<BasePoint> {
        match (self, x) {
            (BaseSystem::Shift(_), BasePoint::Symbolic(w)) => {
                let y = w.shifted(n);
                // surface exhaustion at the new origin right away
                y.symbol(0)?;
                Ok(BasePoint::Symbolic(y))
            }
            (BaseSystem::Torus(t), BasePoint::Torus(p)) => {
                if p.dim() != t.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: t.dim(),
                        found: p.dim(),
                    });
                }
                Ok(BasePoint::Torus(t.step(p, n)))
            }
            _ => Err(mismatch()),
        }
    }

    pub fn distance(&self, x: &BasePoint, y: &BasePoint) -> Result<f64> {
        match (self, x, y) {
            (BaseSystem::Shift(s), BasePoint::Symbolic(a), BasePoint::Symbolic(b)) => s.distance(a, b),
            (BaseSystem::Torus(_), BasePoint::Torus(a), BasePoint::Torus(b)) => Ok(a.distance(b)),
            _ => Err(mismatch()),
        }
    }

    /// The contraction rate `γ` of the closing property.
    pub fn expansion_rate(&self) -> f64 {
        match self {
            BaseSystem::Shift(s) => s.metric_base().ln(),
            BaseSystem::Torus(t) => t.expansion_rate(),
        }
    }

    pub fn is_symbolic(&self) -> bool {
        matches!(self, BaseSystem::Shift(_))
    }
}
