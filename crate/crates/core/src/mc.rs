//! Monte Carlo estimators of the quenched tube-survival probability.
//!
//! Replica `r` of [`survival_naive_mc`] walks exactly the path
//! `walk::sample_path(env, f_offset, n, x0, derive_seed(seed, Walk, r))`,
//! cut short at the first exit. [`survival_splitting`] advances a fixed
//! population block by block along the time axis and resamples survivors
//! between blocks; its first block uses the same replica streams, so with a
//! single checkpoint it reproduces the naive estimator draw for draw.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvRealization;
use crate::error::{Error, Result};
pub use crate::estimate::{Method, SurvivalEstimate};
use crate::quench_dp::log_xi_factor;
use crate::rng::{self, derive_seed, Domain};
use crate::tube::TubeSpec;
use crate::walk::check_window;

const BOUNDARY_EPS: f64 = 1e-9;

/// How the auxiliary variables xi_i <= r_n enter the estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiMode {
    /// Multiply by the closed-form product of P_mu(xi_i <= r_n).
    #[default]
    Analytic,
    /// Draw xi_i alongside each step and kill the replica when it exceeds r_n.
    Sampled,
}

/// Per-step bounds, with the end window folded into the last slice.
fn slices(tube: &TubeSpec) -> Result<Vec<(f64, f64)>> {
    let mut b: Vec<(f64, f64)> = (0..=tube.n).map(|i| tube.bounds_at(i)).collect::<Result<_>>()?;
    if let Some((a, e)) = tube.end_bounds() {
        let last = &mut b[tube.n];
        *last = (last.0.max(a), last.1.min(e));
    }
    Ok(b.into_iter().map(|(lo, hi)| (lo - BOUNDARY_EPS, hi + BOUNDARY_EPS)).collect())
}

struct Runner<'a> {
    env: &'a EnvRealization,
    tube: &'a TubeSpec,
    bounds: Vec<(f64, f64)>,
    xi: Option<f64>,
}

impl<'a> Runner<'a> {
    fn new(env: &'a EnvRealization, tube: &'a TubeSpec, x0: f64, mode: XiMode) -> Result<Self> {
        tube.validate()?;
        check_window(env, tube.f_offset, tube.n)?;
        let (lower, upper) = tube.bounds_at(0)?;
        if !(x0 > lower && x0 < upper) {
            return Err(Error::StartOutsideTube { x0, lower, upper });
        }
        let xi = match mode {
            XiMode::Sampled => tube.xi_threshold,
            XiMode::Analytic => None,
        };
        Ok(Self { env, tube, bounds: slices(tube)?, xi })
    }

    /// Advances from `x` at time `from` to time `to`. Returns the final
    /// position, or `None` on exit, together with the steps taken.
    fn advance(&self, mut x: f64, from: usize, to: usize, stream_seed: u64) -> (Option<f64>, u64) {
        let mut walk = rng::stream(stream_seed, Domain::Walk, 0);
        let mut xi = self.xi.map(|r| (r, rng::stream(stream_seed, Domain::Xi, 0)));
        for i in from..to {
            let law = &self.env.steps[self.tube.f_offset + i];
            x += law.sample(&mut walk);
            let (lo, hi) = self.bounds[i + 1];
            let xi_ok = match &mut xi {
                Some((r, g)) => law.sample_xi(g) <= *r,
                None => true,
            };
            if x < lo || x > hi || !xi_ok {
                return (None, (i + 1 - from) as u64);
            }
        }
        (Some(x), (to - from) as u64)
    }

    fn analytic_xi(&self, mode: XiMode) -> f64 {
        match mode {
            XiMode::Analytic => log_xi_factor(self.env, self.tube),
            XiMode::Sampled => 0.0,
        }
    }
}

/// Naive replication with the analytic xi factor.
pub fn survival_naive_mc(env: &EnvRealization, tube: &TubeSpec, x0: f64, replicas: usize, seed: u64) -> Result<SurvivalEstimate> {
    survival_naive_mc_with(env, tube, x0, replicas, seed, XiMode::Analytic)
}

/// Fraction of `replicas` independent paths that survive; binomial standard
/// error, carried to the log scale by the delta method.
pub fn survival_naive_mc_with(
    env: &EnvRealization,
    tube: &TubeSpec,
    x0: f64,
    replicas: usize,
    seed: u64,
    mode: XiMode,
) -> Result<SurvivalEstimate> {
    if replicas < 100 {
        return Err(Error::InvalidArgument(format!("replicas must be >= 100, got {replicas}")));
    }
    let runner = Runner::new(env, tube, x0, mode)?;
    let (alive, work) = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let (end, steps) = runner.advance(x0, 0, tube.n, derive_seed(seed, Domain::Walk, r));
            (u64::from(end.is_some()), steps)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    let n = replicas as f64;
    let p = alive as f64 / n;
    let stderr_log = if alive == 0 { f64::INFINITY } else { ((1.0 - p) / (n * p)).sqrt() };
    let log_p = if alive == 0 { f64::NEG_INFINITY } else { p.ln() } + runner.analytic_xi(mode);
    Ok(SurvivalEstimate::stochastic(log_p, stderr_log, Method::NaiveMc, work, seed))
}

/// Binomial standard error of a naive estimate's `p` (before any xi factor).
pub fn binomial_stderr(p: f64, replicas: usize) -> f64 {
    (p * (1.0 - p) / replicas as f64).sqrt()
}

/// Fixed-effort splitting with the analytic xi factor.
pub fn survival_splitting(
    env: &EnvRealization,
    tube: &TubeSpec,
    x0: f64,
    particles: usize,
    checkpoints: usize,
    seed: u64,
) -> Result<SurvivalEstimate> {
    survival_splitting_with(env, tube, x0, particles, checkpoints, seed, XiMode::Analytic)
}

/// Splits `[0, n]` into `checkpoints` blocks of `ceil(n / checkpoints)` steps
/// (the last one shorter if needed). Each block advances the whole
/// population, records the surviving fraction phi_k, and resamples survivors
/// multinomially back to `particles`. Returns `ln prod phi_k` with standard
/// error `sqrt(sum (1 - phi_k) / (N phi_k))`.
pub fn survival_splitting_with(
    env: &EnvRealization,
    tube: &TubeSpec,
    x0: f64,
    particles: usize,
    checkpoints: usize,
    seed: u64,
    mode: XiMode,
) -> Result<SurvivalEstimate> {
    if particles < 100 {
        return Err(Error::InvalidArgument(format!("particles must be >= 100, got {particles}")));
    }
    if checkpoints == 0 || checkpoints > tube.n {
        return Err(Error::InvalidArgument(format!("checkpoints must lie in 1..={}, got {checkpoints}", tube.n)));
    }
    let runner = Runner::new(env, tube, x0, mode)?;
    let block = tube.n.div_ceil(checkpoints);
    let nf = particles as f64;
    let mut population = vec![x0; particles];
    let mut log_p = 0.0;
    let mut var_log = 0.0;
    let mut work = 0u64;
    let mut extinct = false;
    let mut start = 0;
    let mut k = 0u64;
    while start < tube.n {
        let end = (start + block).min(tube.n);
        let block_seed = derive_seed(seed, Domain::SplitAdvance, k);
        let moved: Vec<(Option<f64>, u64)> = population
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let s = if k == 0 { derive_seed(seed, Domain::Walk, i as u64) } else { derive_seed(block_seed, Domain::Walk, i as u64) };
                runner.advance(x, start, end, s)
            })
            .collect();
        work += moved.iter().map(|m| m.1).sum::<u64>();
        let survivors: Vec<f64> = moved.into_iter().filter_map(|m| m.0).collect();
        if survivors.is_empty() {
            extinct = true;
            break;
        }
        let phi = survivors.len() as f64 / nf;
        log_p += phi.ln();
        var_log += (1.0 - phi) / (nf * phi);
        if end < tube.n {
            let mut pick = rng::stream(seed, Domain::SplitResample, k);
            population = (0..particles).map(|_| survivors[pick.random_range(0..survivors.len())]).collect();
        }
        start = end;
        k += 1;
    }
    let mut est = if extinct {
        SurvivalEstimate::stochastic(f64::NEG_INFINITY, f64::INFINITY, Method::Splitting, work, seed)
    } else {
        SurvivalEstimate::stochastic(log_p + runner.analytic_xi(mode), var_log.sqrt(), Method::Splitting, work, seed)
    };
    est.extinct = extinct;
    Ok(est)
}
