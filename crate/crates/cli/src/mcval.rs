//! Monte-Carlo cross-check of the deterministic excess-noise matrix.

use std::fmt::Write as _;

use mechsqueeze::bayes::CostSpec;
use mechsqueeze::markov::optimal_lambda;
use mechsqueeze::mc::{build_sde, estimate_excess_noise, validate_against_reference, EnsembleEstimate, FeedbackLaw, ValidationReport};
use mechsqueeze::model::SystemParams;
use mechsqueeze::Mat4;
use serde::Serialize;
use serde_json::json;

use crate::config::{Feedback, LambdaSetting, RunConfig};
use crate::output::{format_float, header_comment};
use crate::presets::optimal_kappa;

/// Smallest ensemble accepted for validation.
pub const MIN_TRAJ: usize = 100;

const NAMES: [&str; 4] = ["X", "Y", "Q", "P"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McOutcome {
    pub law: String,
    pub params: SystemParams,
    pub estimate: EnsembleEstimate,
    /// Matrix the estimate was tested against (the reference times `reference_scale`).
    pub tested_against: Mat4,
    pub reference_scale: f64,
    pub z_max: f64,
    pub report: ValidationReport,
}

#[derive(Debug)]
pub enum McError {
    Config(String),
    Numerical(String),
}

/// Single-point configuration to a feedback law with κ and λ resolved.
pub fn resolve_law(cfg: &RunConfig) -> Result<(SystemParams, FeedbackLaw), McError> {
    if cfg.sweep.is_some() || !cfg.series.is_empty() {
        return Err(McError::Config("mc-validate runs a single point; remove sweep and series keys".into()));
    }
    if cfg.numerics.n_traj < MIN_TRAJ {
        return Err(McError::Config(format!("mc-validate needs numerics.n_traj >= {MIN_TRAJ}, got {}", cfg.numerics.n_traj)));
    }
    let num = |e: mechsqueeze::Error| McError::Numerical(e.to_string());
    let mut p = cfg.params;
    if cfg.kappa_auto {
        p.kappa = optimal_kappa(&p).map_err(num)?;
    }
    let law = match cfg.feedback {
        Feedback::None => FeedbackLaw::None,
        f if f.is_markov() => {
            let lambda = match cfg.lambda {
                None => 0.0,
                Some(LambdaSetting::Value(l)) => l,
                Some(LambdaSetting::Auto | LambdaSetting::AutoPerG) => {
                    let mut q = p;
                    if cfg.lambda == Some(LambdaSetting::AutoPerG) {
                        q.kappa = optimal_kappa(&q).map_err(num)?;
                    }
                    optimal_lambda(&q, &cfg.numerics.core()).map_err(num)?.best.lambda
                }
            };
            FeedbackLaw::Markov { variant: f.markov_variant(lambda).expect("markov") }
        }
        f => {
            let chi = cfg.chi.ok_or_else(|| McError::Config("chi missing".into()))?;
            FeedbackLaw::Bayes { variant: f.bayes_variant().expect("bayes"), cost: CostSpec::with_chi(chi) }
        }
    };
    Ok((p, law))
}

/// Runs the ensemble and tests it against `reference_scale ×` the deterministic matrix.
pub fn mc_validate(cfg: &RunConfig, z_max: f64, reference_scale: f64) -> Result<McOutcome, McError> {
    let (p, law) = resolve_law(cfg)?;
    let num = |e: mechsqueeze::Error| McError::Numerical(e.to_string());
    let sde = build_sde(&p, &law, &cfg.numerics.core()).map_err(num)?;
    let mut spec = sde.auto_spec(cfg.numerics.n_traj, cfg.numerics.base_seed).map_err(num)?;
    if let Some(dt) = cfg.numerics.dt_sde {
        spec.dt_sde = dt;
    }
    let estimate = estimate_excess_noise(&sde, &spec).map_err(num)?;
    let tested_against = estimate.reference * reference_scale;
    let report = validate_against_reference(&estimate, &tested_against, z_max);
    Ok(McOutcome { law: law.name(), params: p, estimate, tested_against, reference_scale, z_max, report })
}

/// Z-score table with a comment header.
pub fn to_csv(cfg: &RunConfig, o: &McOutcome) -> String {
    let mut s = header_comment(cfg, "mc-validate");
    let e = &o.estimate;
    let (wi, wj) = o.report.worst_entry;
    let _ = writeln!(
        s,
        "# law = {}; n_traj = {}; n_batches = {}; dt_sde = {}; t_end = {}; burn_in = {}; snapshots = {}",
        o.law, e.n_traj, e.n_batches, format_float(e.spec.dt_sde), format_float(e.spec.t_end),
        format_float(e.spec.burn_in), e.spec.snapshots
    );
    let _ = writeln!(
        s,
        "# result = {}; worst |z| = {} at ({},{}); z_max = {}; reference_scale = {}",
        if o.report.pass { "PASS" } else { "FAIL" },
        format_float(o.report.worst_z),
        NAMES[wi],
        NAMES[wj],
        o.z_max,
        o.reference_scale
    );
    s.push_str("row,col,sigma_hat,reference,stderr,z\n");
    for i in 0..4 {
        for j in i..4 {
            let se = e.stderr[(i, j)];
            let z = if se > 0.0 { (e.sigma_hat[(i, j)] - o.tested_against[(i, j)]) / se } else { 0.0 };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                NAMES[i],
                NAMES[j],
                format_float(e.sigma_hat[(i, j)]),
                format_float(o.tested_against[(i, j)]),
                format_float(se),
                format_float(z)
            );
        }
    }
    s
}

pub fn to_json(cfg: &RunConfig, o: &McOutcome) -> String {
    let doc = json!({
        "tool": "mechsqueeze",
        "version": crate::output::VERSION,
        "config": cfg,
        "outcome": o,
    });
    serde_json::to_string_pretty(&doc).expect("json") + "\n"
}
