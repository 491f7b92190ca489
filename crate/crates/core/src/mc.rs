//! Euler–Maruyama ensembles of conditional first moments.
//!
//! At steady state the conditional mean obeys the linear SDE
//! `dr̄ = Ã r̄ dt + V dw/√2`, so the excess noise `Σ = 2·Cov(r̄)` can be
//! estimated from independent trajectories and compared against the
//! deterministic Lyapunov solution.

use std::f64::consts::SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{bayes_report_from, BayesVariant, CostSpec, ForceConversion};
use crate::dynamics::{monodromy, rate_scale, DIVERGENCE_GUARD, MatrixFn, Numerics, PeriodicTrajectory};
use crate::markov::{closed_loop, markov_law, markov_report_from, open_loop_excess, MarkovVariant};
use crate::model::{build_matrices, conditional_steady_state, SystemParams};
use crate::{Error, Mat4, Result, Vec4};

/// Feedback strategy driving an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeedbackLaw {
    None,
    Markov { variant: MarkovVariant },
    Bayes { variant: BayesVariant, cost: CostSpec },
}

impl FeedbackLaw {
    pub fn name(&self) -> String {
        match self {
            FeedbackLaw::None => "none".into(),
            FeedbackLaw::Markov { variant } => format!("markov_{}", variant.name()),
            FeedbackLaw::Bayes { variant, .. } => format!("bayes_{}", variant.name()),
        }
    }
}

/// How Markovian feedback enters the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRoute {
    /// Closed-loop drift `Ã` and noise `Z` folded together.
    #[default]
    Combined,
    /// Simulate the current `dy = dw − √2 Bᵀr̄ dt` and feed it back through `F·M`.
    RawCurrent,
}

/// Ensemble size, time grid and seeding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub dt_sde: f64,
    pub t_end: f64,
    pub base_seed: u64,
    /// Statistics use snapshots in `(burn_in, t_end]` only.
    pub burn_in: f64,
    /// Evenly spaced snapshots per trajectory; the last one sits at `t_end`.
    pub snapshots: usize,
    /// Gaussian increments summed per step. Paths with step `h·m` and `m`
    /// increments per step see the same Brownian path as paths with step `h`.
    pub increments_per_step: usize,
    pub route: NoiseRoute,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if !(self.dt_sde > 0.0 && self.dt_sde.is_finite()) {
            return bad("dt_sde must be positive");
        }
        if !(self.t_end > 0.0 && self.burn_in >= 0.0 && self.burn_in <= self.t_end) {
            return bad("need 0 ≤ burn_in ≤ t_end and t_end > 0");
        }
        if self.snapshots == 0 || self.increments_per_step == 0 {
            return bad("snapshots and increments_per_step must be positive");
        }
        if self.n_traj < 2 {
            return Err(Error::InsufficientEnsemble { n_traj: self.n_traj });
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt_sde).round() as usize
    }

    /// Step indices at which snapshots are taken.
    pub fn sample_steps(&self) -> Vec<usize> {
        let n = self.snapshots;
        let window = self.t_end - self.burn_in;
        (0..n)
            .map(|j| {
                let t = self.t_end - window * (n - 1 - j) as f64 / n as f64;
                ((t / self.dt_sde).round() as usize).min(self.n_steps())
            })
            .collect()
    }
}

/// The linear SDE of a feedback law plus its deterministic excess noise.
#[derive(Debug, Clone)]
pub struct LinearSde {
    pub law: FeedbackLaw,
    pub a_tilde: MatrixFn,
    pub v: MatrixFn,
    pub period: f64,
    /// Deterministic (periodic) excess-noise matrix.
    pub reference: PeriodicTrajectory,
    /// Step used by the deterministic solvers for the same flow.
    pub dt_reference: f64,
    raw: Option<RawCurrent>,
}

#[derive(Debug, Clone)]
struct RawCurrent {
    a: MatrixFn,
    l: MatrixFn,
    fm: MatrixFn,
    bt: Mat4,
}

/// Builds the closed-loop SDE and its Lyapunov reference for `law`.
pub fn build_sde(p: &SystemParams, law: &FeedbackLaw, numerics: &Numerics) -> Result<LinearSde> {
    let problem = build_matrices(p)?;
    let sigma_c = conditional_steady_state(p, numerics)?;
    let (e, b) = (problem.e, problem.b);
    let l = sigma_c.to_fn().map(move |s| e - s * b);
    let (a_tilde, v, reference, raw) = match law {
        FeedbackLaw::None => {
            let reference = open_loop_excess(p, &sigma_c, numerics)?;
            (problem.drift.clone(), l, reference, None)
        }
        FeedbackLaw::Markov { variant } => {
            let ml = markov_law(p, *variant, &sigma_c)?;
            let cl = closed_loop(&problem.drift, &ml.f, &ml.m, &b, &e, &sigma_c.to_fn());
            let reference = markov_report_from(p, *variant, &sigma_c, numerics)?.excess;
            let fm = ml.f.zip_with(&ml.m, |f, m| f * m);
            let raw = RawCurrent { a: problem.drift.clone(), l, fm, bt: b.transpose() };
            (cl.a_tilde, cl.z, reference, Some(raw))
        }
        FeedbackLaw::Bayes { variant, cost } => {
            let r = bayes_report_from(p, cost, *variant, &sigma_c, numerics, &ForceConversion::default())?;
            let fk = r.law.f.zip_with(&r.law.k, |f, k| f * k);
            let a_tilde = problem.drift.zip_with(&fk, |a, fk| a - fk);
            (a_tilde, l, r.excess, None)
        }
    };
    let time_dependent = !(a_tilde.is_constant() && v.is_constant());
    let dt_reference =
        numerics.step(p.omega_m, time_dependent, p.rate_scale().max(rate_scale(&a_tilde, 64)), p.period());
    Ok(LinearSde { law: *law, a_tilde, v, period: p.period(), reference, dt_reference, raw })
}

/// Time after which the transient `Φ(t)ΣΦ(t)ᵀ` of a start at `r̄ = 0` has
/// fallen below `tol·‖Σ‖`. Periodic drifts are probed at whole periods.
pub fn relaxation_time(a: &MatrixFn, sigma: &Mat4, period: f64, dt: f64, tol: f64) -> Result<f64> {
    let target = tol * sigma.norm();
    let small = |phi: &Mat4| (phi * sigma * phi.transpose()).norm() <= target;
    let (base, tau) = match a {
        MatrixFn::Constant(m) => {
            let tau = 1.0 / m.norm().max(1e-300);
            ((m * tau).exp(), tau)
        }
        MatrixFn::Periodic { .. } => (monodromy(a, period, dt)?, period),
    };
    // Doubling to bracket, then linear steps of tau from the lower bracket.
    let mut phi = base;
    let mut k = 0u32;
    while !small(&phi) {
        if k > 60 || !phi.iter().all(|x| x.is_finite()) {
            return Err(Error::NotHurwitz { re: 0.0, im: 0.0 });
        }
        phi = phi * phi;
        k += 1;
    }
    if k == 0 {
        return Ok(tau);
    }
    let mut n = 1u64 << (k - 1);
    let mut phi = base;
    for _ in 0..k - 1 {
        phi = phi * phi;
    }
    let stride = (n / 16).max(1);
    let mut jump = Mat4::identity();
    for _ in 0..stride {
        jump *= base;
    }
    while !small(&phi) {
        phi = jump * phi;
        n += stride;
    }
    Ok(n as f64 * tau)
}

impl LinearSde {
    /// Ensemble spec with a time horizon set by the slowest excited decay.
    pub fn auto_spec(&self, n_traj: usize, base_seed: u64) -> Result<EnsembleSpec> {
        let sigma = self.reference.mean();
        let relax = relaxation_time(&self.a_tilde, &sigma, self.period, self.dt_reference, 1e-5)?;
        let periodic = !(self.a_tilde.is_constant() && self.v.is_constant());
        let dt = self.dt_reference;
        let (t_end, burn_in, snapshots) = if periodic {
            let n = (relax / self.period).ceil().max(1.0) + 1.0;
            (n * self.period, (n - 1.0) * self.period, 16)
        } else {
            let t = (relax / dt).ceil() * dt;
            (t, t, 1)
        };
        Ok(EnsembleSpec {
            n_traj,
            dt_sde: dt,
            t_end,
            base_seed,
            burn_in,
            snapshots,
            increments_per_step: 1,
            route: NoiseRoute::Combined,
        })
    }

    /// Period average of the deterministic reference over the snapshot times.
    pub fn reference_at_snapshots(&self, spec: &EnsembleSpec) -> Mat4 {
        let steps = spec.sample_steps();
        steps.iter().map(|&k| self.reference.at(k as f64 * spec.dt_sde)).sum::<Mat4>() / steps.len() as f64
    }
}

/// States of one trajectory at the snapshot steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub states: Vec<Vec4>,
}

fn active_columns(v: &MatrixFn, period: f64) -> Vec<usize> {
    let probe: Vec<Mat4> = match v {
        MatrixFn::Constant(m) => vec![*m],
        MatrixFn::Periodic { .. } => (0..64).map(|k| v.at(period * k as f64 / 64.0)).collect(),
    };
    (0..4).filter(|&j| probe.iter().any(|m| m.column(j).amax() > 0.0)).collect()
}

fn rng_for(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Wiener increments over one step, `increments` sub-draws summed.
#[inline]
fn draw(rng: &mut ChaCha8Rng, cols: &[usize], h: f64, increments: usize) -> Vec4 {
    let mut dw = Vec4::zeros();
    let scale = (h / increments as f64).sqrt();
    for _ in 0..increments {
        for &j in cols {
            let x: f64 = StandardNormal.sample(rng);
            dw[j] += x * scale;
        }
    }
    dw
}

fn run_path(
    stepper: &dyn Fn(f64, &Vec4, &Vec4) -> Vec4,
    cols: &[usize],
    spec: &EnsembleSpec,
    traj_index: u64,
    r0: &Vec4,
) -> Result<SamplePath> {
    let h = spec.dt_sde;
    let steps = spec.sample_steps();
    let mut rng = rng_for(spec.base_seed, traj_index);
    let mut r = *r0;
    let mut out = SamplePath { times: Vec::with_capacity(steps.len()), states: Vec::with_capacity(steps.len()) };
    let mut next = 0;
    while next < steps.len() && steps[next] == 0 {
        out.times.push(0.0);
        out.states.push(r);
        next += 1;
    }
    for k in 0..spec.n_steps() {
        let t = k as f64 * h;
        let dw = draw(&mut rng, cols, h, spec.increments_per_step);
        r = stepper(t, &r, &dw);
        if !r.iter().all(|x| x.abs() <= DIVERGENCE_GUARD) {
            return Err(Error::Divergence { t: t + h });
        }
        while next < steps.len() && steps[next] == k + 1 {
            out.times.push((k + 1) as f64 * h);
            out.states.push(r);
            next += 1;
        }
    }
    Ok(out)
}

/// One Euler–Maruyama path of `dr̄ = Ã r̄ dt + V dw/√2` from `r0`.
pub fn simulate_trajectory(
    a_tilde: &MatrixFn,
    v: &MatrixFn,
    spec: &EnsembleSpec,
    traj_index: u64,
    r0: &Vec4,
) -> Result<SamplePath> {
    let h = spec.dt_sde;
    let cols = active_columns(v, a_tilde.period().or(v.period()).unwrap_or(1.0));
    match (a_tilde.constant_value(), v.constant_value()) {
        (Some(a), Some(vm)) => run_constant(&(Mat4::identity() + a * h), &(vm / SQRT_2), &cols, spec, traj_index, r0),
        _ => run_path(
            &|t, r, dw| r + a_tilde.at(t) * r * h + v.at(t) * dw / SQRT_2,
            &cols,
            spec,
            traj_index,
            r0,
        ),
    }
}

/// Constant-coefficient fast path of [`run_path`]; draws the same increments.
fn run_constant(
    step: &Mat4,
    vs: &Mat4,
    cols: &[usize],
    spec: &EnsembleSpec,
    traj_index: u64,
    r0: &Vec4,
) -> Result<SamplePath> {
    let h = spec.dt_sde;
    let m = spec.increments_per_step;
    let scale = (h / m as f64).sqrt();
    let vcols: Vec<Vec4> = cols.iter().map(|&j| vs.column(j) * scale).collect();
    let steps = spec.sample_steps();
    let mut rng = rng_for(spec.base_seed, traj_index);
    let mut r = *r0;
    let mut out = SamplePath { times: Vec::with_capacity(steps.len()), states: Vec::with_capacity(steps.len()) };
    let mut next = 0;
    while next < steps.len() && steps[next] == 0 {
        out.times.push(0.0);
        out.states.push(r);
        next += 1;
    }
    let mut xi = [0.0f64; 4];
    for k in 0..spec.n_steps() {
        xi[..vcols.len()].fill(0.0);
        for _ in 0..m {
            for x in xi[..vcols.len()].iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += z;
            }
        }
        r = step * r;
        for (c, x) in vcols.iter().zip(xi.iter()) {
            r.axpy(*x, c, 1.0);
        }
        if k % 1024 == 0 && !r.iter().all(|x| x.abs() <= DIVERGENCE_GUARD) {
            return Err(Error::Divergence { t: (k + 1) as f64 * h });
        }
        while next < steps.len() && steps[next] == k + 1 {
            if !r.iter().all(|x| x.abs() <= DIVERGENCE_GUARD) {
                return Err(Error::Divergence { t: (k + 1) as f64 * h });
            }
            out.times.push((k + 1) as f64 * h);
            out.states.push(r);
            next += 1;
        }
    }
    Ok(out)
}

fn simulate_raw(raw: &RawCurrent, spec: &EnsembleSpec, traj_index: u64) -> Result<SamplePath> {
    let h = spec.dt_sde;
    let period = raw.a.period().or(raw.fm.period()).or(raw.l.period()).unwrap_or(1.0);
    let mut cols = active_columns(&raw.l, period);
    for c in active_columns(&raw.fm, period) {
        if !cols.contains(&c) {
            cols.push(c);
        }
    }
    cols.sort_unstable();
    let stepper = |t: f64, r: &Vec4, dw: &Vec4| {
        let dy = dw - raw.bt * r * (SQRT_2 * h);
        r + raw.a.at(t) * r * h + raw.l.at(t) * dw / SQRT_2 + raw.fm.at(t) * dy
    };
    run_path(&stepper, &cols, spec, traj_index, &Vec4::zeros())
}

/// Sample excess-noise estimate with batch-means standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEstimate {
    pub sigma_hat: Mat4,
    pub stderr: Mat4,
    /// `(Σ̂ − Σ_ref)/stderr`, zero where the standard error vanishes.
    pub z_scores: Mat4,
    pub reference: Mat4,
    pub n_traj: usize,
    pub n_batches: usize,
    pub spec: EnsembleSpec,
}

/// Pass/fail of an estimate against a reference matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pass: bool,
    pub worst_entry: (usize, usize),
    pub worst_z: f64,
}

fn batch_estimate(paths: &[SamplePath], n_batches: usize) -> (Mat4, Mat4) {
    let n = paths.len();
    let mut batch_covs = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let lo = b * n / n_batches;
        let hi = (b + 1) * n / n_batches;
        let samples: Vec<&Vec4> = paths[lo..hi].iter().flat_map(|p| p.states.iter()).collect();
        let m = samples.len() as f64;
        let mean = samples.iter().copied().sum::<Vec4>() / m;
        let mut c = Mat4::zeros();
        for r in &samples {
            let d = *r - mean;
            c += d * d.transpose();
        }
        batch_covs.push(c * (2.0 / (m - 1.0).max(1.0)));
    }
    let nb = n_batches as f64;
    let mean = batch_covs.iter().sum::<Mat4>() / nb;
    let mut var = Mat4::zeros();
    for c in &batch_covs {
        let d = c - mean;
        var += d.component_mul(&d);
    }
    let stderr = (var / (nb * (nb - 1.0).max(1.0))).map(f64::sqrt);
    ((mean + mean.transpose()) * 0.5, stderr)
}

/// Runs `spec.n_traj` trajectories of `sde` in parallel and estimates `Σ`.
pub fn estimate_excess_noise(sde: &LinearSde, spec: &EnsembleSpec) -> Result<EnsembleEstimate> {
    spec.validate()?;
    let paths: Vec<SamplePath> = (0..spec.n_traj as u64)
        .into_par_iter()
        .map(|i| match (spec.route, &sde.raw) {
            (NoiseRoute::RawCurrent, Some(raw)) => simulate_raw(raw, spec, i),
            _ => simulate_trajectory(&sde.a_tilde, &sde.v, spec, i, &Vec4::zeros()),
        })
        .collect::<Result<_>>()?;
    Ok(estimate_from_paths(sde, spec, &paths))
}

/// Batch-means estimate from precomputed paths (one per trajectory, in index order).
pub fn estimate_from_paths(sde: &LinearSde, spec: &EnsembleSpec, paths: &[SamplePath]) -> EnsembleEstimate {
    let n_batches = paths.len().min(50);
    let (sigma_hat, stderr) = batch_estimate(paths, n_batches);
    let reference = sde.reference_at_snapshots(spec);
    let z_scores = Mat4::from_fn(|i, j| {
        let s = stderr[(i, j)];
        if s > 0.0 {
            (sigma_hat[(i, j)] - reference[(i, j)]) / s
        } else {
            0.0
        }
    });
    EnsembleEstimate { sigma_hat, stderr, z_scores, reference, n_traj: paths.len(), n_batches, spec: *spec }
}

/// Builds the SDE for `law` and estimates its excess noise.
pub fn ensemble_excess_noise(
    law: &FeedbackLaw,
    p: &SystemParams,
    spec: &EnsembleSpec,
    numerics: &Numerics,
) -> Result<EnsembleEstimate> {
    spec.validate()?;
    estimate_excess_noise(&build_sde(p, law, numerics)?, spec)
}

/// Largest `|Σ̂ − Σ_ref|/stderr` over entries whose standard error exceeds
/// `10⁻¹⁰·max|Σ̂|`; passes when it is at most `z_max`.
pub fn validate_against_reference(est: &EnsembleEstimate, reference: &Mat4, z_max: f64) -> ValidationReport {
    let floor = 1e-10 * est.sigma_hat.amax();
    let mut worst = ValidationReport { pass: true, worst_entry: (0, 0), worst_z: 0.0 };
    for i in 0..4 {
        for j in i..4 {
            let s = est.stderr[(i, j)];
            if !(s > floor) {
                continue;
            }
            let z = ((est.sigma_hat[(i, j)] - reference[(i, j)]) / s).abs();
            if z > worst.worst_z {
                worst.worst_z = z;
                worst.worst_entry = (i, j);
            }
        }
    }
    worst.pass = worst.worst_z <= z_max;
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n_traj: usize, dt: f64, t_end: f64) -> EnsembleSpec {
        EnsembleSpec {
            n_traj,
            dt_sde: dt,
            t_end,
            base_seed: 11,
            burn_in: 0.0,
            snapshots: 10,
            increments_per_step: 1,
            route: NoiseRoute::Combined,
        }
    }

    #[test]
    fn zero_noise_zero_start_stays_zero() {
        let a = MatrixFn::Constant(Mat4::identity() * -0.3);
        let v = MatrixFn::Constant(Mat4::zeros());
        let p = simulate_trajectory(&a, &v, &spec(2, 0.01, 5.0), 0, &Vec4::zeros()).unwrap();
        assert!(p.states.iter().all(|r| r.amax() == 0.0));
    }

    #[test]
    fn zero_noise_decays_like_exponential() {
        let mut am = Mat4::identity() * -0.5;
        am[(0, 1)] = 0.3;
        let a = MatrixFn::Constant(am);
        let v = MatrixFn::Constant(Mat4::zeros());
        let r0 = Vec4::new(1.0, -2.0, 0.5, 3.0);
        let err = |dt: f64| {
            let p = simulate_trajectory(&a, &v, &spec(2, dt, 4.0), 0, &r0).unwrap();
            p.times
                .iter()
                .zip(&p.states)
                .map(|(t, r)| ((am * *t).exp() * r0 - r).amax())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.01), err(0.005));
        assert!(e1 < 0.02);
        // First order in dt.
        assert!((e1 / e2 - 2.0).abs() < 0.2, "{e1} {e2}");
    }

    #[test]
    fn seeds_are_reproducible_and_distinct() {
        let a = MatrixFn::Constant(Mat4::identity() * -1.0);
        let v = MatrixFn::Constant(Mat4::identity());
        let s = spec(2, 0.01, 1.0);
        let p0 = simulate_trajectory(&a, &v, &s, 0, &Vec4::zeros()).unwrap();
        let p0b = simulate_trajectory(&a, &v, &s, 0, &Vec4::zeros()).unwrap();
        let p1 = simulate_trajectory(&a, &v, &s, 1, &Vec4::zeros()).unwrap();
        assert_eq!(p0, p0b);
        assert_ne!(p0, p1);
    }

    #[test]
    fn single_trajectory_rejected() {
        let p = SystemParams::default();
        let s = spec(1, 0.05, 1.0);
        assert_eq!(
            ensemble_excess_noise(&FeedbackLaw::None, &p, &s, &Numerics::default()),
            Err(Error::InsufficientEnsemble { n_traj: 1 })
        );
    }

    #[test]
    fn validation_flags_perturbed_entry() {
        let est = EnsembleEstimate {
            sigma_hat: Mat4::identity(),
            stderr: Mat4::from_element(0.01),
            z_scores: Mat4::zeros(),
            reference: Mat4::identity(),
            n_traj: 100,
            n_batches: 20,
            spec: spec(100, 0.1, 1.0),
        };
        let ok = validate_against_reference(&est, &Mat4::identity(), 4.0);
        assert!(ok.pass && ok.worst_z == 0.0);
        let mut r = Mat4::identity();
        r[(1, 2)] += 0.1;
        r[(2, 1)] += 0.1;
        let bad = validate_against_reference(&est, &r, 4.0);
        assert!(!bad.pass);
        assert_eq!(bad.worst_entry, (1, 2));
        assert!((bad.worst_z - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ideal_markov_collapses() {
        let p = SystemParams::default();
        let sde = build_sde(&p, &FeedbackLaw::Markov { variant: MarkovVariant::Ideal }, &Numerics::default()).unwrap();
        assert!(sde.v.at(0.0).amax() < 1e-12);
        let s = EnsembleSpec { snapshots: 1, burn_in: 50.0, ..spec(20, 0.05, 50.0) };
        let est = estimate_excess_noise(&sde, &s).unwrap();
        assert!(est.sigma_hat.amax() < 1e-20);
    }

    #[test]
    fn constant_fast_path_matches_generic_stepper() {
        let mut am = Mat4::identity() * -0.4;
        am[(1, 2)] = 0.2;
        let mut vm = Mat4::zeros();
        vm[(1, 1)] = 0.8;
        vm[(2, 1)] = -0.3;
        let s = EnsembleSpec { increments_per_step: 2, ..spec(2, 0.02, 3.0) };
        let fast = simulate_trajectory(&am.into(), &vm.into(), &s, 5, &Vec4::zeros()).unwrap();
        let a = MatrixFn::periodic(1.0, move |_| am);
        let v = MatrixFn::periodic(1.0, move |_| vm);
        let slow = simulate_trajectory(&a, &v, &s, 5, &Vec4::zeros()).unwrap();
        for (x, y) in fast.states.iter().zip(&slow.states) {
            assert!((x - y).amax() < 1e-12);
        }
    }

    #[test]
    fn relaxation_of_scalar_decay() {
        // Σ transient decays as e^{−2t}: 1e-5 needs t ≈ 5.76.
        let a = MatrixFn::Constant(Mat4::identity() * -1.0);
        let t = relaxation_time(&a, &Mat4::identity(), 1.0, 0.01, 1e-5).unwrap();
        assert!(t >= 5.75 && t < 5.75 * 1.1, "{t}");
    }

    #[test]
    fn raw_current_route_matches_combined() {
        let p = SystemParams::default();
        let sde = build_sde(&p, &FeedbackLaw::Markov { variant: MarkovVariant::MechanicalLimited }, &Numerics::default())
            .unwrap();
        let s = EnsembleSpec { snapshots: 5, ..spec(2, 0.05, 20.0) };
        let a = simulate_trajectory(&sde.a_tilde, &sde.v, &s, 3, &Vec4::zeros()).unwrap();
        let b = simulate_raw(sde.raw.as_ref().unwrap(), &s, 3).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!((x - y).amax() < 1e-10 * x.amax().max(1.0));
        }
    }
}
