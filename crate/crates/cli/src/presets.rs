//! Named sweep configurations.

use std::str::FromStr;

use mechsqueeze::model::{conditional_variance_analytic, SystemParams};
use mechsqueeze::Result;
use serde::Serialize;

use crate::config::{Feedback, Grid, LambdaSetting, RunConfig, Series, Sweep, SweepVar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    Fig1a,
    Fig2Top,
    Fig2Bottom,
    Fig3,
    Fig4,
}

impl PresetName {
    pub const ALL: [PresetName; 5] =
        [PresetName::Fig1a, PresetName::Fig2Top, PresetName::Fig2Bottom, PresetName::Fig3, PresetName::Fig4];

    pub fn name(self) -> &'static str {
        match self {
            PresetName::Fig1a => "fig1a",
            PresetName::Fig2Top => "fig2_top",
            PresetName::Fig2Bottom => "fig2_bottom",
            PresetName::Fig3 => "fig3",
            PresetName::Fig4 => "fig4",
        }
    }
}

impl FromStr for PresetName {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        PresetName::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

/// Couplings of the Markovian presets.
pub const MARKOV_COUPLINGS: [f64; 3] = [0.01, 0.05, 0.3];
/// Couplings of the Bayesian presets.
pub const BAYES_COUPLINGS: [f64; 2] = [0.05, 0.3];
/// Actuation costs of the Bayesian presets.
pub const CHI_VALUES: [f64; 3] = [1e-3, 0.1, 10.0];

/// κ/ω_m from 10⁻³ to 10², 12 points per decade.
pub fn kappa_grid() -> Grid {
    Grid::Range { start: 1e-3, stop: 1e2, points: 61, log_spaced: true }
}

/// λ from 0 to 1.5 in steps of 0.05.
pub fn lambda_grid() -> Grid {
    Grid::Range { start: 0.0, stop: 1.5, points: 31, log_spaced: false }
}

/// κ on [`kappa_grid`] minimizing the RWA conditional variance at `p.g`.
pub fn optimal_kappa(p: &SystemParams) -> Result<f64> {
    let mut best = (f64::INFINITY, f64::NAN);
    for kappa in kappa_grid().values() {
        let v = conditional_variance_analytic(&SystemParams { kappa, ..*p })?;
        if v < best.0 {
            best = (v, kappa);
        }
    }
    Ok(best.1)
}

fn base(name: PresetName, feedback: Feedback, rwa: bool) -> RunConfig {
    let mut c = RunConfig { label: Some(name.name().into()), feedback, ..RunConfig::default() };
    c.params.rwa = rwa;
    c
}

fn kappa_sweep() -> Option<Sweep> {
    Some(Sweep { variable: SweepVar::Kappa, grid: kappa_grid() })
}

fn series(variable: SweepVar, values: &[f64]) -> Series {
    Series { variable, values: values.to_vec() }
}

pub fn preset(name: PresetName) -> RunConfig {
    match name {
        PresetName::Fig1a => RunConfig {
            series: vec![series(SweepVar::G, &MARKOV_COUPLINGS)],
            sweep: kappa_sweep(),
            ..base(name, Feedback::MarkovMechanical, true)
        },
        PresetName::Fig2Top => RunConfig {
            kappa_auto: true,
            series: vec![series(SweepVar::G, &MARKOV_COUPLINGS)],
            sweep: Some(Sweep { variable: SweepVar::Lambda, grid: lambda_grid() }),
            ..base(name, Feedback::MarkovForce, false)
        },
        PresetName::Fig2Bottom => RunConfig {
            lambda: Some(LambdaSetting::AutoPerG),
            series: vec![series(SweepVar::G, &MARKOV_COUPLINGS)],
            sweep: kappa_sweep(),
            ..base(name, Feedback::MarkovForce, false)
        },
        PresetName::Fig3 => RunConfig {
            series: vec![series(SweepVar::G, &BAYES_COUPLINGS), series(SweepVar::Chi, &CHI_VALUES)],
            sweep: kappa_sweep(),
            ..base(name, Feedback::BayesIdeal, true)
        },
        PresetName::Fig4 => RunConfig {
            series: vec![series(SweepVar::G, &BAYES_COUPLINGS), series(SweepVar::Chi, &CHI_VALUES)],
            sweep: kappa_sweep(),
            ..base(name, Feedback::BayesForce, false)
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PresetName::ALL {
            let c = preset(name);
            assert!(c.violations().is_empty(), "{}: {:?}", name.name(), c.violations());
            assert_eq!(name.name().parse::<PresetName>(), Ok(name));
        }
    }

    #[test]
    fn fig1a_parameters() {
        let c = preset(PresetName::Fig1a);
        assert_eq!((c.params.gamma, c.params.eta, c.params.nbar), (1e-4, 1.0, 10.0));
        assert!(c.params.rwa);
        assert_eq!(c.sweep.unwrap().variable, SweepVar::Kappa);
    }

    #[test]
    fn fig4_costs_and_fig2_variable() {
        let c = preset(PresetName::Fig4);
        let chi = c.series.iter().find(|s| s.variable == SweepVar::Chi).unwrap();
        assert!(chi.values.contains(&0.1));
        assert!(!c.params.rwa);
        assert_eq!(preset(PresetName::Fig2Top).sweep.unwrap().variable, SweepVar::Lambda);
    }

    #[test]
    fn optimal_kappa_is_interior() {
        for g in MARKOV_COUPLINGS {
            let k = optimal_kappa(&SystemParams { g, ..Default::default() }).unwrap();
            assert!(k > 1e-3 && k < 1e2, "g={g}: {k}");
        }
    }
}
