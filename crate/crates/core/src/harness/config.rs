use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::base::{BaseSystem, ShiftSpace};
use crate::cocycle::{CocycleGenerator, GeneratorBounds};
use crate::error::{Error, Result};
use crate::exponents::{MeasureKind, MeasureSampler};
use crate::linalg::{NormKind, Operator};
use crate::periodic::{ConstructiveParams, TheoremMode};

/// Points checked against declared bounds when building a smooth torus cocycle.
const BOUNDS_SWEEP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseSpec {
    FullShift {
        alphabet: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric_base: Option<f64>,
    },
    Sft {
        transition: Vec<Vec<u8>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metric_base: Option<f64>,
    },
    Torus {
        matrix: Vec<Vec<i64>>,
    },
}

impl BaseSpec {
    pub fn build(&self) -> Result<BaseSystem> {
        let e = std::f64::consts::E;
        match self {
            BaseSpec::FullShift { alphabet, metric_base } => {
                let t = vec![vec![1u8; *alphabet]; *alphabet];
                Ok(BaseSystem::Shift(ShiftSpace::new(t, metric_base.unwrap_or(e))?))
            }
            BaseSpec::Sft {
                transition,
                metric_base,
            } => Ok(BaseSystem::Shift(ShiftSpace::new(transition.clone(), metric_base.unwrap_or(e))?)),
            BaseSpec::Torus { matrix } => BaseSystem::torus(matrix),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordEntry {
    pub word: Vec<u8>,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CocycleSpec {
    Constant {
        matrix: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<GeneratorBounds>,
    },
    /// Either a full `table` of words of length `2·memory + 1`, or the
    /// `matrices` shorthand for memory 0 (one matrix per symbol).
    LocallyConstant {
        #[serde(default)]
        memory: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<Vec<WordEntry>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrices: Option<Vec<Vec<Vec<f64>>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<GeneratorBounds>,
    },
    TorusSmooth {
        a0: Vec<Vec<f64>>,
        eta: f64,
        freq: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<GeneratorBounds>,
    },
}

impl CocycleSpec {
    pub fn build(&self, base: &BaseSystem) -> Result<CocycleGenerator> {
        match self {
            CocycleSpec::Constant { matrix, norm, bounds } => CocycleGenerator::constant_with(
                Operator::from_rows(matrix)?,
                norm.unwrap_or_default(),
                bounds.unwrap_or_default(),
            ),
            CocycleSpec::LocallyConstant {
                memory,
                table,
                matrices,
                norm,
                bounds,
            } => {
                let shift = base
                    .as_shift()
                    .ok_or_else(|| Error::InvalidGenerator("locally constant cocycles need a symbolic base".into()))?;
                let table: BTreeMap<Vec<u8>, Operator> = match (table, matrices) {
                    (Some(t), None) => t
                        .iter()
                        .map(|e| Ok((e.word.clone(), Operator::from_rows(&e.matrix)?)))
                        .collect::<Result<_>>()?,
                    (None, Some(ms)) if *memory == 0 => ms
                        .iter()
                        .enumerate()
                        .map(|(s, m)| Ok((vec![s as u8], Operator::from_rows(m)?)))
                        .collect::<Result<_>>()?,
                    (None, Some(_)) => {
                        return Err(Error::InvalidGenerator("the matrices shorthand requires memory 0".into()))
                    }
                    _ => return Err(Error::InvalidGenerator("give exactly one of table or matrices".into())),
                };
                CocycleGenerator::locally_constant(shift, *memory, table, norm.unwrap_or_default(), bounds.unwrap_or_default())
            }
            CocycleSpec::TorusSmooth {
                a0,
                eta,
                freq,
                norm,
                bounds,
            } => CocycleGenerator::torus_smooth(
                Operator::from_rows(a0)?,
                *eta,
                freq.clone(),
                norm.unwrap_or_default(),
                bounds.unwrap_or_default(),
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizons {
    pub n: usize,
    pub replicas: usize,
    pub k_max: usize,
    #[serde(rename = "N_min")]
    pub n_min: usize,
    #[serde(rename = "truncation_N")]
    pub truncation_n: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovSpec {
    pub tail_tol: f64,
    pub ell: f64,
    /// Defaults to `eps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// Sampled points for the contraction and temperedness checks.
    pub points: usize,
    pub contraction_steps: usize,
    #[serde(rename = "temperedness_N")]
    pub temperedness_n: usize,
}

impl Default for LyapunovSpec {
    fn default() -> Self {
        Self {
            tail_tol: 1e-6,
            ell: 2.0,
            rho: None,
            points: 5,
            contraction_steps: 20,
            temperedness_n: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremSpec {
    pub mode: TheoremMode,
    /// Defaults to `eps`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_target: Option<f64>,
    pub constructive: ConstructiveParams,
}

impl Default for TheoremSpec {
    fn default() -> Self {
        Self {
            mode: TheoremMode::Exhaustive,
            eps_target: None,
            constructive: ConstructiveParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JsrSpec {
    pub target_gap: f64,
    pub max_depth: usize,
}

impl Default for JsrSpec {
    fn default() -> Self {
        Self {
            target_gap: 1e-3,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base: BaseSpec,
    pub cocycle: CocycleSpec,
    pub measure: MeasureKind,
    pub eps: f64,
    pub horizons: Horizons,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub lyapunov: LyapunovSpec,
    #[serde(default)]
    pub theorem: TheoremSpec,
    #[serde(default)]
    pub jsr: JsrSpec,
}

/// Everything a run needs, built from a validated config.
pub struct Experiment {
    pub base: BaseSystem,
    pub generator: CocycleGenerator,
    pub sampler: MeasureSampler,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Field-level checks; building the experiment checks the rest.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        let h = &self.horizons;
        for (name, v) in [
            ("n", h.n),
            ("replicas", h.replicas),
            ("k_max", h.k_max),
            ("truncation_N", h.truncation_n),
            ("depth", h.depth),
        ] {
            if v == 0 {
                return bad(format!("horizons.{name} must be positive"));
            }
        }
        if h.n_min >= h.k_max {
            return bad("horizons.N_min must be below k_max".into());
        }
        let l = &self.lyapunov;
        if !(l.tail_tol > 0.0) || !(l.ell > 1.0) || l.rho.is_some_and(|r| !(r > 0.0)) {
            return bad("lyapunov: need tail_tol > 0, ell > 1, rho > 0".into());
        }
        if l.points == 0 || l.temperedness_n == 0 {
            return bad("lyapunov: points and temperedness_N must be positive".into());
        }
        if self.theorem.eps_target.is_some_and(|e| !(e > 0.0)) {
            return bad("theorem.eps_target must be positive".into());
        }
        if !(self.jsr.target_gap > 0.0) || self.jsr.max_depth == 0 {
            return bad("jsr: need target_gap > 0 and max_depth > 0".into());
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Experiment> {
        self.validate()?;
        let base = self.base.build()?;
        let generator = self.cocycle.build(&base)?;
        // declared smooth-generator bounds fail here rather than mid-stage
        generator.verify_bounds_on_sweep(&base, BOUNDS_SWEEP, self.seed)?;
        let sampler = MeasureSampler::new(self.measure.clone(), self.seed)?;
        sampler.check_compatible(&base)?;
        Ok(Experiment {
            base,
            generator,
            sampler,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIAG: &str = r#"{
        "base": {"kind": "full_shift", "alphabet": 2},
        "cocycle": {"kind": "locally_constant", "matrices": [[[2, 0], [0, 0.5]], [[0.5, 0], [0, 2]]]},
        "measure": {"kind": "bernoulli", "probabilities": [0.5, 0.5]},
        "eps": 0.1,
        "horizons": {"n": 100, "replicas": 2, "k_max": 6, "N_min": 0, "truncation_N": 50, "depth": 4},
        "seed": 3,
        "output_dir": "out"
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = ExperimentConfig::from_json(DIAG).unwrap();
        let exp = cfg.build().unwrap();
        assert!(exp.generator.is_locally_constant());
        assert_eq!(cfg.lyapunov, LyapunovSpec::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::from_json(DIAG).unwrap();
        cfg.eps = 0.1 + 1e-17 * 3.0;
        cfg.lyapunov.rho = Some(std::f64::consts::PI / 7.0);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.eps.to_bits(), cfg.eps.to_bits());
    }

    #[test]
    fn rejects_bad_eps_and_unknown_fields() {
        let bad = DIAG.replace("\"eps\": 0.1", "\"eps\": 0");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::InvalidParameter(_))));
        let bad = DIAG.replace("\"seed\": 3", "\"seed\": 3, \"sede\": 4");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn sampler_must_match_base() {
        let bad = DIAG.replace(r#"{"kind": "bernoulli", "probabilities": [0.5, 0.5]}"#, r#"{"kind": "lebesgue_torus"}"#);
        let cfg = ExperimentConfig::from_json(&bad).unwrap();
        assert!(cfg.build().is_err());
    }

    #[test]
    fn smooth_bounds_are_swept_at_build() {
        let smooth = |lam: f64| {
            format!(
                r#"{{
                "base": {{"kind": "torus", "matrix": [[2, 1], [1, 1]]}},
                "cocycle": {{"kind": "torus_smooth", "a0": [[2, 1], [1, 1]], "eta": 0.2, "freq": [1, 0],
                             "bounds": {{"lambda_prime": {lam}}}}},
                "measure": {{"kind": "lebesgue_torus"}},
                "eps": 0.1,
                "horizons": {{"n": 100, "replicas": 2, "k_max": 6, "N_min": 0, "truncation_N": 50, "depth": 4}},
                "seed": 3,
                "output_dir": "out"
            }}"#
            )
        };
        // ln‖a0‖ = ln φ² is exceeded wherever the perturbation stretches further
        let tight = ExperimentConfig::from_json(&smooth(0.9624)).unwrap();
        assert!(matches!(tight.build(), Err(Error::BoundsViolated(_))));
        assert!(ExperimentConfig::from_json(&smooth(3.0)).unwrap().build().is_ok());
    }
}
