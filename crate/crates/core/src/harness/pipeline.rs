use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{Experiment, ExperimentConfig};
use crate::cocycle::GeneratorKind;
use crate::error::Error;
use crate::exponents::{estimate_exponents, ExponentEstimate, ExponentReport};
use crate::linalg::Operator;
use crate::lyapunov_norm::{check_contraction, temperedness_diagnostic, LyapunovNormContext};
use crate::periodic::{corollary_norm_rates, verify_main_theorem, NormRateReport, TheoremReport, DEFAULT_BUDGET};
use crate::spectral::{branch_and_bound, exhaustive_bounds, RadiusBounds};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Validation(Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: &'static str, source: Error },
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            _ => 2,
        }
    }
}

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Estimate,
    LyapunovNorm,
    Periodic,
    NormRates,
    Jsr,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Estimate => "estimate",
            Stage::LyapunovNorm => "lyapunov_norm",
            Stage::Periodic => "periodic",
            Stage::NormRates => "norm_rates",
            Stage::Jsr => "jsr",
        }
    }
}

/// Which stages a subcommand runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plan {
    Full,
    Estimate,
    Periodic,
    Jsr,
    LyapNorm,
}

impl Plan {
    fn stages(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Plan::Full => &[Estimate, LyapunovNorm, Periodic, NormRates, Jsr],
            Plan::Estimate => &[Estimate],
            Plan::Periodic => &[Estimate, Periodic, NormRates],
            Plan::Jsr => &[Jsr],
            Plan::LyapNorm => &[Estimate, LyapunovNorm],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSummary {
    pub lambda_hat: ExponentEstimate,
    pub chi_hat: ExponentEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointNormCheck {
    pub sample: usize,
    pub point: String,
    pub contraction_violations: usize,
    pub contraction_nonconvergent: usize,
    pub max_forward_ratio: f64,
    pub max_backward_ratio: f64,
    pub forward_rate: f64,
    pub backward_rate: f64,
    pub forward_slope: f64,
    pub backward_slope: f64,
    pub k_rho_truncated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormChecks {
    pub context: LyapunovNormContext,
    pub points: Vec<PointNormCheck>,
    pub total_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsrReport {
    pub exhaustive: RadiusBounds,
    pub branch_and_bound: RadiusBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub provenance: Provenance,
    pub stages: Vec<Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponents: Option<ExponentSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_reports: Option<NormChecks>,
    /// Without the per-orbit table, which goes to `periodic_scores.csv`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theorem_report: Option<TheoremReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_rates: Option<NormRateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_bounds: Option<JsrReport>,
    /// Stages that were requested but do not apply to this experiment.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// `SOURCE_DATE_EPOCH` pins the timestamp for reproducible bundles.
fn timestamp() -> String {
    let when = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0))
        .unwrap_or_else(chrono::Utc::now);
    when.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// The hash covers everything but `output_dir`, which does not affect results.
pub fn provenance(cfg: &ExperimentConfig) -> Provenance {
    let mut hashed = cfg.clone();
    hashed.output_dir = Default::default();
    let canonical = serde_json::to_vec(&hashed).expect("config serializes");
    Provenance {
        config_hash: hex(&Sha256::digest(&canonical)),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: timestamp(),
    }
}

/// Full pipeline.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultBundle, HarnessError> {
    run_plan(cfg, Plan::Full)
}

pub fn run_plan(cfg: &ExperimentConfig, plan: Plan) -> Result<ResultBundle, HarnessError> {
    let exp = cfg.build().map_err(HarnessError::Validation)?;
    if plan == Plan::Jsr && jsr_operators(&exp).is_none() {
        return Err(HarnessError::Validation(Error::InvalidGenerator(
            "joint spectral radius needs a constant or one-step locally constant cocycle over a full shift".into(),
        )));
    }
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut bundle = ResultBundle {
        provenance: provenance(cfg),
        stages: vec![],
        exponents: None,
        norm_reports: None,
        theorem_report: None,
        norm_rates: None,
        radius_bounds: None,
        skipped: vec![],
    };
    let mut exps: Option<ExponentReport> = None;
    for &stage in plan.stages() {
        let fail = |source| HarnessError::Stage {
            stage: stage.name(),
            source,
        };
        if stage == Stage::Jsr && jsr_operators(&exp).is_none() {
            log::info!("stage {}: skipped (generator is not a one-step locally constant cocycle)", stage.name());
            bundle.skipped.push(stage.name().to_string());
            continue;
        }
        log::info!("stage {}: start", stage.name());
        bundle.stages.push(stage);
        match stage {
            Stage::Estimate => {
                let r = estimate_exponents(&exp.generator, &exp.base, &exp.sampler, cfg.horizons.n, cfg.horizons.replicas)
                    .map_err(fail)?;
                write_exponents_csv(out, &r)?;
                let summary = ExponentSummary {
                    lambda_hat: r.upper.clone(),
                    chi_hat: r.lower.clone(),
                };
                write_json(&out.join("exponents.json"), &summary)?;
                log::info!("lambda_hat = {:.6}, chi_hat = {:.6}", r.upper.value, r.lower.value);
                bundle.exponents = Some(summary);
                exps = Some(r);
            }
            Stage::LyapunovNorm => {
                let r = exps.as_ref().expect("estimate runs first");
                let checks = norm_checks(cfg, &exp, r).map_err(fail)?;
                write_json(&out.join("norm_checks.json"), &checks)?;
                bundle.norm_reports = Some(checks);
            }
            Stage::Periodic => {
                let r = exps.as_ref().expect("estimate runs first");
                let mut report = verify_main_theorem(
                    &exp.generator,
                    &exp.base,
                    &exp.sampler,
                    &r.upper,
                    &r.lower,
                    cfg.theorem.eps_target.unwrap_or(cfg.eps),
                    cfg.horizons.k_max,
                    cfg.horizons.n_min,
                    cfg.theorem.mode,
                    &cfg.theorem.constructive,
                    DEFAULT_BUDGET,
                )
                .map_err(fail)?;
                write_scores_csv(out, &report)?;
                log::info!("theorem residual {:.3e}, success {}", report.residual, report.success);
                report.table.clear();
                bundle.theorem_report = Some(report);
            }
            Stage::NormRates => {
                let h = &cfg.horizons;
                let r = corollary_norm_rates(&exp.generator, &exp.base, h.depth, h.k_max, cfg.seed, DEFAULT_BUDGET)
                    .map_err(fail)?;
                bundle.norm_rates = Some(r);
            }
            Stage::Jsr => {
                let ops = jsr_operators(&exp).expect("checked above");
                let exhaustive = exhaustive_bounds(&ops, cfg.horizons.depth).map_err(fail)?;
                let bb = branch_and_bound(&ops, cfg.jsr.target_gap, cfg.jsr.max_depth).map_err(fail)?;
                let report = JsrReport {
                    exhaustive,
                    branch_and_bound: bb,
                };
                write_json(&out.join("jsr.json"), &report)?;
                bundle.radius_bounds = Some(report);
            }
        }
        log::info!("stage {}: done", stage.name());
    }
    write_json(&out.join("bundle.json"), &bundle)?;
    Ok(bundle)
}

/// The operator set of a memory-0 cocycle over the full shift, in symbol
/// order; a constant cocycle counts as a single operator.
pub fn jsr_operators(exp: &Experiment) -> Option<Vec<Operator>> {
    match exp.generator.kind() {
        GeneratorKind::Constant(a) => Some(vec![a.clone()]),
        GeneratorKind::LocallyConstant { memory: 0, table } if exp.base.as_shift().is_some_and(|s| s.is_full()) => {
            Some(table.values().cloned().collect())
        }
        _ => None,
    }
}

fn norm_checks(cfg: &ExperimentConfig, exp: &Experiment, r: &ExponentReport) -> crate::Result<NormChecks> {
    let l = &cfg.lyapunov;
    let ctx = LyapunovNormContext {
        truncation_n: cfg.horizons.truncation_n,
        tail_tol: l.tail_tol,
        ell: l.ell,
        rho: l.rho.unwrap_or(cfg.eps),
        ..LyapunovNormContext::new(r.upper.value, r.lower.value, cfg.eps)?
    }
    .validated()?;
    let stage = exp.sampler.for_stage("lyapunov-norm");
    let mut points = Vec::with_capacity(l.points);
    for i in 0..l.points {
        let x = stage.sample_point(&exp.base, i as u64)?;
        let c = check_contraction(&ctx, &exp.generator, &exp.base, &x, l.contraction_steps)?;
        let t = temperedness_diagnostic(&ctx, &exp.generator, &exp.base, &x, l.temperedness_n)?;
        points.push(PointNormCheck {
            sample: i,
            point: x.label(),
            contraction_violations: c.violations,
            contraction_nonconvergent: c.nonconvergent,
            max_forward_ratio: c.max_forward_ratio,
            max_backward_ratio: c.max_backward_ratio,
            forward_rate: t.forward_rate,
            backward_rate: t.backward_rate,
            forward_slope: t.forward_slope,
            backward_slope: t.backward_slope,
            k_rho_truncated: t.k_rho_truncated,
        });
    }
    Ok(NormChecks {
        context: ctx,
        total_violations: points.iter().map(|p| p.contraction_violations).sum(),
        points,
    })
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_exponents_csv(out: &Path, r: &ExponentReport) -> Result<(), HarnessError> {
    write_csv(
        &out.join("exponents.csv"),
        &["replica", "n", "a_n_over_n", "a_tilde_n_over_n"],
        r.rows.iter().map(|row| {
            vec![
                row.replica.to_string(),
                row.n.to_string(),
                fmt_f64(row.a_over_n),
                fmt_f64(row.a_tilde_over_n),
            ]
        }),
    )
}

fn write_scores_csv(out: &Path, report: &TheoremReport) -> Result<(), HarnessError> {
    write_csv(
        &out.join("periodic_scores.csv"),
        &["k", "point", "upper_rate", "lower_rate", "upper_exponent", "lower_exponent", "ln_Q"],
        report.table.iter().map(|s| {
            vec![
                s.k.to_string(),
                s.label.clone(),
                fmt_f64(s.upper_rate),
                fmt_f64(s.lower_rate),
                fmt_f64(s.upper_exponent),
                fmt_f64(s.lower_exponent),
                fmt_f64(s.ln_q),
            ]
        }),
    )
}

/// Render a bundle for humans (stderr summaries).
pub fn summary(bundle: &ResultBundle) -> String {
    let mut s = Vec::new();
    if let Some(e) = &bundle.exponents {
        let _ = writeln!(
            s,
            "lambda_hat = {:.6} ± {:.2e}, chi_hat = {:.6} ± {:.2e}",
            e.lambda_hat.value, e.lambda_hat.stderr, e.chi_hat.value, e.chi_hat.stderr
        );
    }
    if let Some(n) = &bundle.norm_reports {
        let _ = writeln!(s, "contraction violations: {}", n.total_violations);
    }
    if let Some(t) = &bundle.theorem_report {
        let _ = writeln!(s, "periodic approximation residual {:.3e} (success: {})", t.residual, t.success);
    }
    if let Some(j) = &bundle.radius_bounds {
        let b = &j.branch_and_bound;
        let _ = writeln!(s, "joint spectral radius in [{:.6}, {:.6}], witness {}", b.lower, b.upper, b.witness_word);
    }
    String::from_utf8(s).expect("utf-8")
}
