//! Flat `key = value` run configuration with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! feedback = markov_mechanical
//! params.g = 0.05
//! sweep.variable = kappa
//! sweep.start = 1e-3
//! sweep.stop = 100
//! sweep.points = 61
//! sweep.log_spaced = true
//! ```
//!
//! A `preset = <name>` line starts from a preset; every other key overrides it
//! regardless of its position in the file.

use std::fmt::Write as _;

use mechsqueeze::bayes::BayesVariant;
use mechsqueeze::dynamics::Numerics;
use mechsqueeze::gaussian::ReportingConvention;
use mechsqueeze::markov::MarkovVariant;
use mechsqueeze::model::SystemParams;
use serde::Serialize;
use thiserror::Error;

use crate::presets::{preset, PresetName};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}, key '{key}': {message}")]
    Parse { line: usize, key: String, message: String },
    #[error("unknown preset '{0}' (expected one of fig1a, fig2_top, fig2_bottom, fig3, fig4)")]
    UnknownPreset(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    None,
    MarkovIdeal,
    MarkovCavity,
    MarkovMechanical,
    MarkovForce,
    BayesIdeal,
    BayesForce,
}

impl Feedback {
    pub const ALL: [Feedback; 7] = [
        Feedback::None,
        Feedback::MarkovIdeal,
        Feedback::MarkovCavity,
        Feedback::MarkovMechanical,
        Feedback::MarkovForce,
        Feedback::BayesIdeal,
        Feedback::BayesForce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feedback::None => "none",
            Feedback::MarkovIdeal => "markov_ideal",
            Feedback::MarkovCavity => "markov_cavity",
            Feedback::MarkovMechanical => "markov_mechanical",
            Feedback::MarkovForce => "markov_force",
            Feedback::BayesIdeal => "bayes_ideal",
            Feedback::BayesForce => "bayes_force",
        }
    }

    pub fn is_markov(self) -> bool {
        matches!(
            self,
            Feedback::MarkovIdeal | Feedback::MarkovCavity | Feedback::MarkovMechanical | Feedback::MarkovForce
        )
    }

    pub fn is_bayes(self) -> bool {
        matches!(self, Feedback::BayesIdeal | Feedback::BayesForce)
    }

    /// Markovian variant at a given λ (ignored unless force-limited).
    pub fn markov_variant(self, lambda: f64) -> Option<MarkovVariant> {
        Some(match self {
            Feedback::MarkovIdeal => MarkovVariant::Ideal,
            Feedback::MarkovCavity => MarkovVariant::CavityLimited,
            Feedback::MarkovMechanical => MarkovVariant::MechanicalLimited,
            Feedback::MarkovForce => MarkovVariant::ForceLimited { lambda },
            _ => return None,
        })
    }

    pub fn bayes_variant(self) -> Option<BayesVariant> {
        match self {
            Feedback::BayesIdeal => Some(BayesVariant::Ideal),
            Feedback::BayesForce => Some(BayesVariant::ForceLimited),
            _ => None,
        }
    }
}

/// How the force-limited Markovian parameter λ is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSetting {
    Value(f64),
    /// Minimize the period-averaged variance separately at every point.
    Auto,
    /// Minimize once per coupling `g`, at that coupling's optimal κ.
    AutoPerG,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    Kappa,
    G,
    Lambda,
    Chi,
}

impl SweepVar {
    pub const ALL: [SweepVar; 4] = [SweepVar::G, SweepVar::Kappa, SweepVar::Chi, SweepVar::Lambda];

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::Kappa => "kappa",
            SweepVar::G => "g",
            SweepVar::Lambda => "lambda",
            SweepVar::Chi => "chi",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        SweepVar::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Rates and costs must be strictly positive; λ only non-negative.
    fn strictly_positive(self) -> bool {
        self != SweepVar::Lambda
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Grid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize, log_spaced: bool },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Grid::List(ref v) => v.clone(),
            Grid::Range { start, stop, points, log_spaced } => {
                if points == 1 {
                    return vec![start];
                }
                let last = (points - 1) as f64;
                (0..points)
                    .map(|k| {
                        let f = k as f64 / last;
                        if log_spaced {
                            let (a, b) = (start.log10(), stop.log10());
                            10f64.powf(a + (b - a) * f)
                        } else {
                            start + (stop - start) * f
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn log_spaced(&self) -> bool {
        matches!(self, Grid::Range { log_spaced: true, .. })
    }
}

/// Innermost loop of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub variable: SweepVar,
    pub grid: Grid,
}

/// Outer loop over one variable; several series nest in listed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NumericsConfig {
    /// Upper bound on the deterministic RK4 step.
    pub dt: Option<f64>,
    /// Euler–Maruyama step; derived from the flow when absent.
    pub dt_sde: Option<f64>,
    pub tol_period: f64,
    pub max_periods: usize,
    pub n_traj: usize,
    pub base_seed: u64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let n = Numerics::default();
        Self { dt: None, dt_sde: None, tol_period: n.tol_period, max_periods: n.max_periods, n_traj: 1000, base_seed: 1 }
    }
}

impl NumericsConfig {
    pub fn core(&self) -> Numerics {
        Numerics { dt: self.dt, tol_period: self.tol_period, max_periods: self.max_periods }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct OutputConfig {
    /// Destination file; standard output when absent.
    pub path: Option<String>,
    pub format: Format,
    pub db_convention: ReportingConvention,
    /// Emit wall-clock seconds per row (makes output non-reproducible).
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub label: Option<String>,
    pub params: SystemParams,
    /// `params.kappa = auto`: use the κ minimizing the conditional variance.
    pub kappa_auto: bool,
    pub feedback: Feedback,
    pub lambda: Option<LambdaSetting>,
    pub chi: Option<f64>,
    pub series: Vec<Series>,
    pub sweep: Option<Sweep>,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            label: None,
            params: SystemParams::default(),
            kappa_auto: false,
            feedback: Feedback::None,
            lambda: None,
            chi: None,
            series: Vec::new(),
            sweep: None,
            numerics: NumericsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    /// Whether `var` is set by a series or the sweep.
    pub fn is_varied(&self, var: SweepVar) -> bool {
        self.series.iter().any(|s| s.variable == var) || self.sweep.as_ref().is_some_and(|s| s.variable == var)
    }

    /// All invariant violations; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = &self.params;
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("params.{name} must be positive and finite, got {v}"));
            }
        };
        positive("omega_m", p.omega_m);
        positive("gamma", p.gamma);
        if !self.kappa_auto {
            positive("kappa", p.kappa);
        }
        if !(p.g >= 0.0 && p.g.is_finite()) {
            out.push(format!("params.g must be non-negative and finite, got {}", p.g));
        }
        if !(p.nbar >= 0.0 && p.nbar.is_finite()) {
            out.push(format!("params.nbar must be non-negative and finite, got {}", p.nbar));
        }
        if !(p.eta > 0.0 && p.eta <= 1.0) {
            out.push(format!("params.eta must lie in (0, 1], got {}", p.eta));
        }

        let has_lambda = self.lambda.is_some() || self.is_varied(SweepVar::Lambda);
        if self.feedback == Feedback::MarkovForce && !has_lambda {
            out.push("feedback = markov_force requires lambda".into());
        }
        if self.feedback != Feedback::MarkovForce && has_lambda {
            out.push(format!("lambda is only meaningful for markov_force, not {}", self.feedback.name()));
        }
        if self.lambda.is_some() && self.is_varied(SweepVar::Lambda) {
            out.push("lambda is given both as a scalar and as a sweep or series".into());
        }
        if let Some(LambdaSetting::Value(l)) = self.lambda {
            if !l.is_finite() {
                out.push(format!("lambda must be finite, got {l}"));
            }
        }

        let has_chi = self.chi.is_some() || self.is_varied(SweepVar::Chi);
        if self.feedback.is_bayes() && !has_chi {
            out.push(format!("feedback = {} requires chi", self.feedback.name()));
        }
        if !self.feedback.is_bayes() && has_chi {
            out.push(format!("chi is only meaningful for bayes feedback, not {}", self.feedback.name()));
        }
        if self.chi.is_some() && self.is_varied(SweepVar::Chi) {
            out.push("chi is given both as a scalar and as a sweep or series".into());
        }
        if let Some(chi) = self.chi {
            if !(chi > 0.0 && chi.is_finite()) {
                out.push(format!("chi must be positive and finite, got {chi}"));
            }
        }

        if self.kappa_auto && self.is_varied(SweepVar::Kappa) {
            out.push("params.kappa = auto conflicts with a kappa sweep or series".into());
        }

        for s in &self.series {
            if s.values.is_empty() {
                out.push(format!("series.{} is empty", s.variable.name()));
            }
            check_values(&mut out, &format!("series.{}", s.variable.name()), s.variable, &s.values);
            if self.sweep.as_ref().is_some_and(|w| w.variable == s.variable) {
                out.push(format!("{} is both swept and used as a series", s.variable.name()));
            }
        }
        if let Some(sweep) = &self.sweep {
            match sweep.grid {
                Grid::List(ref v) if v.is_empty() => out.push("sweep.values is empty".into()),
                Grid::Range { start, stop, points, log_spaced } => {
                    if points == 0 {
                        out.push("sweep.points must be at least 1".into());
                    }
                    if !(start.is_finite() && stop.is_finite()) {
                        out.push("sweep.start and sweep.stop must be finite".into());
                    }
                    if log_spaced && !(start > 0.0 && stop > 0.0) {
                        out.push("a log-spaced sweep needs positive start and stop".into());
                    }
                }
                _ => {}
            }
            check_values(&mut out, "sweep", sweep.variable, &sweep.grid.values());
        }

        let n = &self.numerics;
        for (name, v) in [("dt", n.dt), ("dt_sde", n.dt_sde)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("numerics.{name} must be positive, got {v}"));
                }
            }
        }
        if !(n.tol_period > 0.0) {
            out.push(format!("numerics.tol_period must be positive, got {}", n.tol_period));
        }
        if n.max_periods == 0 {
            out.push("numerics.max_periods must be at least 1".into());
        }
        if n.n_traj < 2 {
            out.push(format!("numerics.n_traj must be at least 2, got {}", n.n_traj));
        }
        if self.output.path.as_deref() == Some("") {
            out.push("output.path is empty".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Validation(v))
        }
    }
}

fn check_values(out: &mut Vec<String>, what: &str, var: SweepVar, values: &[f64]) {
    for &v in values {
        let ok = if var.strictly_positive() { v > 0.0 && v.is_finite() } else { v.is_finite() && v >= 0.0 };
        if !ok {
            let need = if var.strictly_positive() { "strictly positive" } else { "non-negative" };
            out.push(format!("{what}: {} values must be {need}, got {v}", var.name()));
            return;
        }
    }
}

/// One `key = value` entry with its source line (0 for command-line overrides).
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits a document into entries, dropping comments and blank lines.
pub fn tokenize(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let entry = parse_entry(content, line)?;
        if entries.iter().any(|e| e.key == entry.key) {
            return Err(ConfigError::Parse { line, key: entry.key, message: "duplicate key".into() });
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// Parses a single `key=value` override.
pub fn parse_override(text: &str) -> Result<Entry, ConfigError> {
    parse_entry(text.trim(), 0)
}

fn parse_entry(content: &str, line: usize) -> Result<Entry, ConfigError> {
    let Some((key, value)) = content.split_once('=') else {
        return Err(ConfigError::Parse {
            line,
            key: content.to_string(),
            message: "expected 'key = value'".into(),
        });
    };
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Parse { line, key: String::new(), message: "empty key".into() });
    }
    Ok(Entry { line, key: key.to_string(), value: value.trim().to_string() })
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_with_overrides(text, &[])
}

/// Parses a document, applies `overrides` after it, then validates.
pub fn parse_with_overrides(text: &str, overrides: &[Entry]) -> Result<RunConfig, ConfigError> {
    let mut entries = tokenize(text)?;
    entries.extend_from_slice(overrides);
    let base = match entries.iter().rev().find(|e| e.key == "preset") {
        Some(e) => {
            let name: PresetName =
                e.value.parse().map_err(|_| ConfigError::UnknownPreset(e.value.clone()))?;
            preset(name)
        }
        None => RunConfig::default(),
    };
    let mut b = Builder::from(base);
    for e in entries.iter().filter(|e| e.key != "preset") {
        b.apply(e).map_err(|message| ConfigError::Parse { line: e.line, key: e.key.clone(), message })?;
    }
    let cfg = b.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sweep fields as they are being assembled from individual keys.
#[derive(Default)]
struct SweepDraft {
    variable: Option<SweepVar>,
    values: Option<Vec<f64>>,
    start: Option<f64>,
    stop: Option<f64>,
    points: Option<usize>,
    log_spaced: bool,
}

struct Builder {
    cfg: RunConfig,
    sweep: SweepDraft,
}

impl From<RunConfig> for Builder {
    fn from(mut cfg: RunConfig) -> Self {
        let mut sweep = SweepDraft::default();
        if let Some(s) = cfg.sweep.take() {
            sweep.variable = Some(s.variable);
            match s.grid {
                Grid::List(v) => sweep.values = Some(v),
                Grid::Range { start, stop, points, log_spaced } => {
                    sweep.start = Some(start);
                    sweep.stop = Some(stop);
                    sweep.points = Some(points);
                    sweep.log_spaced = log_spaced;
                }
            }
        }
        Self { cfg, sweep }
    }
}

fn real(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got '{v}'"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| real(x.trim())).collect()
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn unsigned<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("expected a non-negative integer, got '{v}'"))
}

fn optional_real(v: &str) -> Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        real(v).map(Some)
    }
}

impl Builder {
    fn apply(&mut self, e: &Entry) -> Result<(), String> {
        let v = e.value.as_str();
        let c = &mut self.cfg;
        match e.key.as_str() {
            "label" => c.label = (!v.is_empty()).then(|| v.to_string()),
            "feedback" => {
                c.feedback = Feedback::ALL
                    .into_iter()
                    .find(|f| f.name() == v)
                    .ok_or_else(|| format!("unknown feedback '{v}'"))?
            }
            "lambda" => {
                c.lambda = match v {
                    "none" => None,
                    "auto" => Some(LambdaSetting::Auto),
                    "auto_per_g" => Some(LambdaSetting::AutoPerG),
                    _ => Some(LambdaSetting::Value(real(v)?)),
                }
            }
            "chi" => c.chi = optional_real(v)?,
            "params.omega_m" => c.params.omega_m = real(v)?,
            "params.g" => c.params.g = real(v)?,
            "params.kappa" => {
                if v == "auto" {
                    c.kappa_auto = true;
                } else {
                    c.kappa_auto = false;
                    c.params.kappa = real(v)?;
                }
            }
            "params.gamma" => c.params.gamma = real(v)?,
            "params.nbar" => c.params.nbar = real(v)?,
            "params.eta" => c.params.eta = real(v)?,
            "params.rwa" => c.params.rwa = boolean(v)?,
            "sweep.variable" => {
                if v == "none" {
                    self.sweep = SweepDraft::default();
                } else {
                    self.sweep.variable =
                        Some(SweepVar::parse(v).ok_or_else(|| format!("unknown sweep variable '{v}'"))?);
                }
            }
            "sweep.values" => {
                self.sweep.values = Some(list(v)?);
                self.sweep.start = None;
                self.sweep.stop = None;
                self.sweep.points = None;
                self.sweep.log_spaced = false;
            }
            "sweep.start" | "sweep.stop" | "sweep.points" | "sweep.log_spaced" => {
                self.sweep.values = None;
                match e.key.as_str() {
                    "sweep.start" => self.sweep.start = Some(real(v)?),
                    "sweep.stop" => self.sweep.stop = Some(real(v)?),
                    "sweep.points" => self.sweep.points = Some(unsigned(v)?),
                    _ => self.sweep.log_spaced = boolean(v)?,
                }
            }
            "numerics.dt" => c.numerics.dt = optional_real(v)?,
            "numerics.dt_sde" => c.numerics.dt_sde = optional_real(v)?,
            "numerics.tol_period" => c.numerics.tol_period = real(v)?,
            "numerics.max_periods" => c.numerics.max_periods = unsigned(v)?,
            "numerics.n_traj" => c.numerics.n_traj = unsigned(v)?,
            "numerics.base_seed" => c.numerics.base_seed = unsigned(v)?,
            "output.path" => c.output.path = (!v.is_empty() && v != "-").then(|| v.to_string()),
            "output.format" => {
                c.output.format = match v {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(format!("expected csv or json, got '{v}'")),
                }
            }
            "output.db_convention" => {
                c.output.db_convention = match v {
                    "absolute" => ReportingConvention::Absolute,
                    "vacuum" => ReportingConvention::RelativeToVacuum,
                    _ => return Err(format!("expected absolute or vacuum, got '{v}'")),
                }
            }
            "output.timings" => c.output.timings = boolean(v)?,
            key => {
                let Some(var) = key.strip_prefix("series.").and_then(SweepVar::parse) else {
                    return Err("unknown key".into());
                };
                let pos = c.series.iter().position(|s| s.variable == var);
                if v == "none" {
                    if let Some(i) = pos {
                        c.series.remove(i);
                    }
                } else {
                    let values = list(v)?;
                    match pos {
                        Some(i) => c.series[i].values = values,
                        None => c.series.push(Series { variable: var, values }),
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<RunConfig, ConfigError> {
        let mut cfg = self.cfg;
        let d = self.sweep;
        cfg.sweep = match d.variable {
            None => {
                if d.values.is_some() || d.start.is_some() || d.stop.is_some() || d.points.is_some() {
                    return Err(ConfigError::Validation(vec!["sweep grid given without sweep.variable".into()]));
                }
                None
            }
            Some(variable) => {
                let grid = match (d.values, d.start, d.stop, d.points) {
                    (Some(v), ..) => Grid::List(v),
                    (None, Some(start), Some(stop), Some(points)) => {
                        Grid::Range { start, stop, points, log_spaced: d.log_spaced }
                    }
                    _ => {
                        return Err(ConfigError::Validation(vec![
                            "sweep needs sweep.values or all of sweep.start, sweep.stop, sweep.points".into(),
                        ]))
                    }
                };
                Some(Sweep { variable, grid })
            }
        };
        Ok(cfg)
    }
}

fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_real(*x)).collect::<Vec<_>>().join(", ")
}

fn convention_name(c: ReportingConvention) -> &'static str {
    match c {
        ReportingConvention::Absolute => "absolute",
        ReportingConvention::RelativeToVacuum => "vacuum",
    }
}

/// Canonical text form; `parse_config(&emit(c))` reproduces `c`.
pub fn emit(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    if let Some(l) = &cfg.label {
        kv("label", l.clone());
    }
    kv("feedback", cfg.feedback.name().into());
    match cfg.lambda {
        Some(LambdaSetting::Value(l)) => kv("lambda", fmt_real(l)),
        Some(LambdaSetting::Auto) => kv("lambda", "auto".into()),
        Some(LambdaSetting::AutoPerG) => kv("lambda", "auto_per_g".into()),
        None => {}
    }
    if let Some(chi) = cfg.chi {
        kv("chi", fmt_real(chi));
    }
    let p = &cfg.params;
    kv("params.omega_m", fmt_real(p.omega_m));
    kv("params.g", fmt_real(p.g));
    kv("params.kappa", if cfg.kappa_auto { "auto".into() } else { fmt_real(p.kappa) });
    kv("params.gamma", fmt_real(p.gamma));
    kv("params.nbar", fmt_real(p.nbar));
    kv("params.eta", fmt_real(p.eta));
    kv("params.rwa", p.rwa.to_string());
    for series in &cfg.series {
        kv(&format!("series.{}", series.variable.name()), fmt_list(&series.values));
    }
    if let Some(sweep) = &cfg.sweep {
        kv("sweep.variable", sweep.variable.name().into());
        match &sweep.grid {
            Grid::List(v) => kv("sweep.values", fmt_list(v)),
            Grid::Range { start, stop, points, log_spaced } => {
                kv("sweep.start", fmt_real(*start));
                kv("sweep.stop", fmt_real(*stop));
                kv("sweep.points", points.to_string());
                kv("sweep.log_spaced", log_spaced.to_string());
            }
        }
    }
    let n = &cfg.numerics;
    kv("numerics.dt", n.dt.map_or("none".into(), fmt_real));
    kv("numerics.dt_sde", n.dt_sde.map_or("none".into(), fmt_real));
    kv("numerics.tol_period", fmt_real(n.tol_period));
    kv("numerics.max_periods", n.max_periods.to_string());
    kv("numerics.n_traj", n.n_traj.to_string());
    kv("numerics.base_seed", n.base_seed.to_string());
    if let Some(path) = &cfg.output.path {
        kv("output.path", path.clone());
    }
    kv(
        "output.format",
        match cfg.output.format {
            Format::Csv => "csv".into(),
            Format::Json => "json".into(),
        },
    );
    kv("output.db_convention", convention_name(cfg.output.db_convention).into());
    kv("output.timings", cfg.output.timings.to_string());
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("feedback = none\nparams.g = 0.05\n").unwrap();
        assert_eq!(c.params.gamma, 1e-4);
        assert_eq!(c.params.eta, 1.0);
        assert_eq!(c.params.nbar, 10.0);
        assert!(c.params.rwa);
        assert_eq!(c.feedback, Feedback::None);
    }

    #[test]
    fn markov_force_needs_lambda() {
        let err = parse_config("feedback = markov_force\n").unwrap_err();
        let ConfigError::Validation(v) = err else { panic!("{err:?}") };
        assert!(v.iter().any(|m| m.contains("requires lambda")));
        assert!(parse_config("feedback = markov_force\nlambda = 0.1\n").is_ok());
    }

    #[test]
    fn chi_only_for_bayes() {
        assert!(parse_config("feedback = bayes_ideal\n").is_err());
        assert!(parse_config("feedback = markov_ideal\nchi = 0.1\n").is_err());
        assert!(parse_config("feedback = bayes_force\nchi = 0.1\n").is_ok());
    }

    #[test]
    fn violations_are_all_listed() {
        let err = parse_config("feedback = bayes_ideal\nparams.gamma = -1\nparams.eta = 2\n").unwrap_err();
        let ConfigError::Validation(v) = err else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn parse_errors_carry_context() {
        let err = parse_config("feedback = none\n\nparams.bogus = 1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Parse { line: 3, key: "params.bogus".into(), message: "unknown key".into() }
        );
        let err = parse_config("params.g = fast").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }));
        assert!(matches!(parse_config("params.g 0.1"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse_config("params.g = 1\nparams.g = 2"), Err(ConfigError::Parse { line: 2, .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let c = parse_config("# header\n  params.g=0.3   # trailing\n\n").unwrap();
        assert_eq!(c.params.g, 0.3);
    }

    #[test]
    fn sweep_rates_must_be_positive() {
        let text = "sweep.variable = kappa\nsweep.values = 1, 0, 2\n";
        assert!(matches!(parse_config(text), Err(ConfigError::Validation(_))));
        let text = "feedback = markov_force\nsweep.variable = lambda\nsweep.values = 0, 0.5\n";
        assert!(parse_config(text).is_ok());
    }

    #[test]
    fn log_grid_hits_decades() {
        let g = Grid::Range { start: 1e-3, stop: 1e2, points: 61, log_spaced: true };
        let v = g.values();
        assert_eq!(v.len(), 61);
        for (k, want) in [(0, 1e-3), (12, 1e-2), (24, 1e-1), (36, 1.0), (60, 1e2)] {
            assert!((v[k] / want - 1.0).abs() < 1e-12, "{k}: {}", v[k]);
        }
    }

    #[test]
    fn preset_key_with_overrides() {
        let c = parse_config("params.nbar = 5\npreset = fig1a\n").unwrap();
        assert_eq!(c.params.nbar, 5.0);
        assert_eq!(c.feedback, Feedback::MarkovMechanical);
        assert_eq!(parse_config("preset = fig9"), Err(ConfigError::UnknownPreset("fig9".into())));
    }

    #[test]
    fn overrides_replace_file_values() {
        let o = [parse_override("params.g=0.3").unwrap(), parse_override("series.g = none").unwrap()];
        let c = parse_with_overrides("preset = fig1a\n", &o).unwrap();
        assert_eq!(c.params.g, 0.3);
        assert!(c.series.is_empty());
    }

    #[test]
    fn emit_round_trip_custom() {
        let text = "label = x\nfeedback = markov_force\nlambda = auto\nparams.kappa = auto\nparams.rwa = false\n\
                    series.g = 0.01, 0.3\nsweep.variable = g\nsweep.values = 1e-20, 0.5\n\
                    numerics.dt = 0.01\noutput.path = out.csv\noutput.format = json\noutput.db_convention = vacuum\n";
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
        let text = text.replace("series.g = 0.01, 0.3\n", "");
        let c = parse_config(&text).unwrap();
        assert_eq!(parse_config(&emit(&c)).unwrap(), c);
    }
}
