//! Expansion of a configuration into points and per-point evaluation.

use std::collections::HashMap;
use std::time::Instant;

use mechsqueeze::bayes::{bayes_report_from, CostSpec, ForceConversion};
use mechsqueeze::dynamics::{time_average, PeriodicTrajectory};
use mechsqueeze::gaussian::{check_mat4_physicality, squeezing_db, variance_q_of};
use mechsqueeze::markov::{markov_report_from, optimal_lambda};
use mechsqueeze::model::{adiabatic_variance, conditional_steady_state, squeezing_threshold, SystemParams};
use mechsqueeze::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Feedback, LambdaSetting, RunConfig, SweepVar};
use crate::presets::optimal_kappa;

/// Tolerance of the uncertainty-relation check applied to every output covariance.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Fully specified point before κ and λ are resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub sweep_value: Option<f64>,
    pub params: SystemParams,
    pub kappa_auto: bool,
    pub chi: Option<f64>,
    pub lambda: Option<LambdaSetting>,
}

/// Cartesian product of the series (outer, in listed order) and the sweep (inner).
pub fn expand(cfg: &RunConfig) -> Vec<Point> {
    let seed = Point {
        sweep_value: None,
        params: cfg.params,
        kappa_auto: cfg.kappa_auto,
        chi: cfg.chi,
        lambda: cfg.lambda,
    };
    let mut points = vec![seed];
    let mut axes: Vec<(SweepVar, Vec<f64>, bool)> =
        cfg.series.iter().map(|s| (s.variable, s.values.clone(), false)).collect();
    if let Some(sweep) = &cfg.sweep {
        axes.push((sweep.variable, sweep.grid.values(), true));
    }
    for (var, values, is_sweep) in axes {
        points = points
            .iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = *p;
                    match var {
                        SweepVar::G => q.params.g = v,
                        SweepVar::Kappa => q.params.kappa = v,
                        SweepVar::Chi => q.chi = Some(v),
                        SweepVar::Lambda => q.lambda = Some(LambdaSetting::Value(v)),
                    }
                    if is_sweep {
                        q.sweep_value = Some(v);
                    }
                    q
                })
            })
            .collect();
    }
    points
}

/// One output row. `None` is written as the null token.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_value: Option<f64>,
    pub g: f64,
    pub kappa: Option<f64>,
    pub chi: Option<f64>,
    pub lambda: Option<f64>,
    pub var_c: Option<f64>,
    pub var_fb_mean: Option<f64>,
    pub var_fb_min: Option<f64>,
    pub var_fb_max: Option<f64>,
    pub db_c: Option<f64>,
    pub db_fb: Option<f64>,
    pub threshold: Option<f64>,
    pub adiabatic: Option<f64>,
    #[serde(rename = "excess_Q")]
    pub excess_q: Option<f64>,
    pub avg_force_dimensionless: Option<f64>,
    pub avg_force_newton: Option<f64>,
    pub converged: Option<bool>,
    pub runtime_s: Option<f64>,
    pub status: String,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn empty(point: &Point) -> Self {
        Self {
            sweep_value: point.sweep_value,
            g: point.params.g,
            kappa: (!point.kappa_auto).then_some(point.params.kappa),
            chi: point.chi,
            lambda: match point.lambda {
                Some(LambdaSetting::Value(l)) => Some(l),
                _ => None,
            },
            var_c: None,
            var_fb_mean: None,
            var_fb_min: None,
            var_fb_max: None,
            db_c: None,
            db_fb: None,
            threshold: None,
            adiabatic: None,
            excess_q: None,
            avg_force_dimensionless: None,
            avg_force_newton: None,
            converged: None,
            runtime_s: None,
            status: "ok".into(),
        }
    }
}

fn ensure_physical(traj: &PeriodicTrajectory) -> Result<()> {
    for (t, s) in traj.times().zip(traj.values.iter()) {
        let r = check_mat4_physicality(s, PHYSICALITY_TOL)?;
        if !r.physical {
            return Err(Error::Unphysical { t, min_eigenvalue: r.min_eigenvalue });
        }
    }
    Ok(())
}

/// Optimal λ for each distinct coupling, evaluated at that coupling's optimal κ.
fn lambda_per_g(cfg: &RunConfig, points: &[Point]) -> HashMap<u64, std::result::Result<f64, String>> {
    let mut gs: Vec<f64> = points
        .iter()
        .filter(|p| p.lambda == Some(LambdaSetting::AutoPerG))
        .map(|p| p.params.g)
        .collect();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    let numerics = cfg.numerics.core();
    gs.par_iter()
        .map(|&g| {
            let r = (|| {
                let mut p = SystemParams { g, ..cfg.params };
                p.kappa = optimal_kappa(&p)?;
                Ok::<_, Error>(optimal_lambda(&p, &numerics)?.best.lambda)
            })();
            (g.to_bits(), r.map_err(|e| e.to_string()))
        })
        .collect()
}

/// Resolves κ and λ for a point, then runs its pipeline.
pub fn evaluate_point(
    cfg: &RunConfig,
    point: &Point,
    per_g: &HashMap<u64, std::result::Result<f64, String>>,
) -> ResultRow {
    let start = Instant::now();
    let mut row = ResultRow::empty(point);
    if let Err(e) = fill_row(cfg, point, per_g, &mut row) {
        let keep = (row.sweep_value, row.g, row.kappa, row.chi, row.lambda);
        row = ResultRow::empty(point);
        (row.sweep_value, row.g, row.kappa, row.chi, row.lambda) = keep;
        row.status = format!("error: {e}");
    }
    if cfg.output.timings {
        row.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    row
}

fn fill_row(
    cfg: &RunConfig,
    point: &Point,
    per_g: &HashMap<u64, std::result::Result<f64, String>>,
    row: &mut ResultRow,
) -> std::result::Result<(), String> {
    let err = |e: Error| e.to_string();
    let numerics = cfg.numerics.core();
    let conv = cfg.output.db_convention;
    let mut p = point.params;
    if point.kappa_auto {
        p.kappa = optimal_kappa(&p).map_err(err)?;
        row.kappa = Some(p.kappa);
    }
    let lambda = match point.lambda {
        None => None,
        Some(LambdaSetting::Value(l)) => Some(l),
        Some(LambdaSetting::Auto) => Some(optimal_lambda(&p, &numerics).map_err(err)?.best.lambda),
        Some(LambdaSetting::AutoPerG) => Some(
            per_g
                .get(&p.g.to_bits())
                .cloned()
                .unwrap_or_else(|| Err("missing per-coupling optimum".into()))?,
        ),
    };
    row.lambda = lambda;

    let sigma_c = conditional_steady_state(&p, &numerics).map_err(err)?;
    ensure_physical(&sigma_c).map_err(err)?;
    let var_c = time_average(&sigma_c, variance_q_of).map_err(err)?.mean;
    row.var_c = Some(var_c);
    row.db_c = Some(squeezing_db(var_c, conv).map_err(err)?);
    row.threshold = Some(squeezing_threshold(&p).threshold);
    row.adiabatic = adiabatic_variance(&p).ok();
    row.converged = Some(sigma_c.converged);

    let feedback = cfg.feedback;
    let (excess, sigma_fb) = if let Some(variant) = feedback.markov_variant(lambda.unwrap_or(0.0)) {
        let r = markov_report_from(&p, variant, &sigma_c, &numerics).map_err(err)?;
        (r.excess, r.sigma_fb)
    } else if let Some(variant) = feedback.bayes_variant() {
        let chi = point.chi.ok_or("chi missing")?;
        let r = bayes_report_from(&p, &CostSpec::with_chi(chi), variant, &sigma_c, &numerics, &ForceConversion::default())
            .map_err(err)?;
        row.avg_force_dimensionless = Some(r.avg_force.dimensionless);
        row.avg_force_newton = Some(r.avg_force.force_newton);
        (r.excess, r.sigma_fb)
    } else {
        debug_assert_eq!(feedback, Feedback::None);
        return Ok(());
    };
    ensure_physical(&sigma_fb).map_err(err)?;
    let stats = time_average(&sigma_fb, variance_q_of).map_err(err)?;
    row.var_fb_mean = Some(stats.mean);
    row.var_fb_min = Some(stats.min);
    row.var_fb_max = Some(stats.max);
    row.db_fb = Some(squeezing_db(stats.mean, conv).map_err(err)?);
    row.excess_q = Some(time_average(&excess, variance_q_of).map_err(err)?.mean);
    row.converged = Some(sigma_c.converged && excess.converged);
    Ok(())
}

/// Evaluates every point in parallel; rows keep the input order.
pub fn run_sweep(cfg: &RunConfig) -> Vec<ResultRow> {
    let points = expand(cfg);
    let per_g = lambda_per_g(cfg, &points);
    points.par_iter().map(|pt| evaluate_point(cfg, pt, &per_g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn expansion_order() {
        let c = parse_config(
            "feedback = bayes_ideal\nseries.g = 0.1, 0.2\nseries.chi = 1, 2, 3\nsweep.variable = kappa\nsweep.values = 0.5, 1\n",
        )
        .unwrap();
        let pts = expand(&c);
        assert_eq!(pts.len(), 12);
        assert_eq!((pts[0].params.g, pts[0].chi, pts[0].params.kappa), (0.1, Some(1.0), 0.5));
        assert_eq!((pts[1].params.g, pts[1].chi, pts[1].params.kappa), (0.1, Some(1.0), 1.0));
        assert_eq!((pts[2].params.g, pts[2].chi), (0.1, Some(2.0)));
        assert_eq!(pts[11].params.g, 0.2);
        assert!(pts.iter().all(|p| p.sweep_value == Some(p.params.kappa)));
    }

    #[test]
    fn single_point_without_sweep() {
        let pts = expand(&RunConfig::default());
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].sweep_value, None);
    }

    #[test]
    fn conditional_only_row_has_null_feedback_columns() {
        let rows = run_sweep(&parse_config("params.g = 0.05\n").unwrap());
        let r = &rows[0];
        assert!(r.ok(), "{}", r.status);
        assert!(r.var_c.is_some() && r.var_fb_mean.is_none() && r.avg_force_newton.is_none());
    }

    #[test]
    fn failing_point_is_reported_in_status() {
        let rows = run_sweep(&parse_config("params.g = 0\nparams.kappa = auto\n").unwrap());
        assert!(!rows[0].ok());
        assert!(rows[0].var_c.is_none());
    }
}
