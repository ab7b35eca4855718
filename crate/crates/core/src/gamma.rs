//! The confinement rate gamma(beta).
//!
//! Given a Brownian path W, the process Y = B - beta W is a Gaussian Markov
//! chain on the dt-grid with step law N(-beta dW_k, dt), so the quenched
//! probability that B stays within 1/2 of beta W is a one-dimensional
//! absorption problem in the static tube [-1/2, 1/2]. We propagate the
//! surviving sub-density on a cell grid. Between grid times the path is a
//! Brownian bridge, and each transition is weighted by the probability that
//! the bridge does not touch either wall; without that factor the estimate
//! only monitors grid times and the effective tube is wider by about
//! 0.5826 sqrt(dt) on each side. When W is a sampled Brownian path it is
//! only known at grid times, so the bridge of Y between them carries
//! variance (1 + beta^2) dt.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::normal::normal_cdf;
use crate::rng::{self, Domain};

const KERNEL_SIGMAS: f64 = 8.0;

/// gamma(0) = pi^2 / 2.
pub fn gamma_zero() -> f64 {
    PI * PI / 2.0
}

/// Exponential decay rate of P(|Z_s - c| <= width / 2 for s <= t) for Z
/// Brownian with variance sigma^2 per unit time: pi^2 sigma^2 / (2 width^2).
pub fn bm_tube_rate(sigma: f64, width: f64) -> f64 {
    PI * PI * sigma * sigma / (2.0 * width * width)
}

/// Settings for the density propagation in [`confinement_log_survival`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub dt: f64,
    pub width: f64,
    pub grid_points: usize,
    /// Weight transitions by the bridge non-exit probability.
    pub bridge: bool,
    /// Variance rate of the drift between grid times (beta^2 when the drift
    /// is -beta dW and W is only known at grid times).
    pub drift_diffusion: f64,
}

impl Propagation {
    pub fn unit(dt: f64, grid_points: usize) -> Self {
        Self { dt, width: 1.0, grid_points, bridge: true, drift_diffusion: 0.0 }
    }

    /// Unit tube for Y = B - beta W.
    pub fn quenched(beta: f64, dt: f64, grid_points: usize) -> Self {
        Self { drift_diffusion: beta * beta, ..Self::unit(dt, grid_points) }
    }
}

/// Log-probability that a Brownian motion started at `y0`, with the known
/// per-step drifts, stays in `[-width/2, width/2]`; one value per entry of
/// `record` (step counts, ascending, each <= drifts.len()).
pub fn confinement_log_survival(drifts: &[f64], y0: f64, opts: Propagation, record: &[usize]) -> Result<Vec<f64>> {
    let Propagation { dt, width, grid_points, bridge, drift_diffusion } = opts;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if grid_points < 50 {
        return Err(Error::InvalidArgument(format!("grid_points must be >= 50, got {grid_points}")));
    }
    if record.windows(2).any(|w| w[1] < w[0]) || record.last().is_some_and(|&r| r > drifts.len()) {
        return Err(Error::InvalidArgument("record steps must be ascending and within the drift path".into()));
    }
    let half = width / 2.0;
    if y0.is_nan() || y0.abs() >= half {
        return Ok(vec![f64::NEG_INFINITY; record.len()]);
    }
    let g = grid_points;
    let h = width / g as f64;
    let sd = dt.sqrt();
    let centre = |j: usize| -half + (j as f64 + 0.5) * h;
    if !(drift_diffusion >= 0.0 && drift_diffusion.is_finite()) {
        return Err(Error::InvalidArgument(format!("drift_diffusion must be >= 0, got {drift_diffusion}")));
    }
    let bridge_var = dt * (1.0 + drift_diffusion);
    let non_exit = |x: f64, y: f64| {
        if !bridge {
            return 1.0;
        }
        let lo = -(-2.0 * (x + half) * (y + half) / bridge_var).exp_m1();
        let hi = -(-2.0 * (half - x) * (half - y) / bridge_var).exp_m1();
        lo * hi
    };

    let reach = (KERNEL_SIGMAS * sd / h).ceil() as i64 + 1;

    let mut out = Vec::with_capacity(record.len());
    let mut rec = record.iter().peekable();
    while rec.peek() == Some(&&0) {
        out.push(0.0);
        rec.next();
    }
    if rec.peek().is_none() {
        return Ok(out);
    }

    // Step 1 starts from the exact point y0.
    let mut mass: Vec<f64> = (0..g)
        .map(|k| {
            let m = drifts[0];
            let lo = (-half + k as f64 * h - y0 - m) / sd;
            let hi = (-half + (k + 1) as f64 * h - y0 - m) / sd;
            (normal_cdf(hi) - normal_cdf(lo)) * non_exit(y0, centre(k))
        })
        .collect();
    let mut log_scale = 0.0;
    let mut next = vec![0.0; g];
    let mut kernel: Vec<f64> = Vec::new();
    // non-exit weights, row-major by (source, target)
    let bridge_matrix: Vec<f64> = if bridge {
        (0..g * g).map(|i| non_exit(centre(i / g), centre(i % g))).collect()
    } else {
        Vec::new()
    };

    let mut step = 1;
    loop {
        let s: f64 = mass.iter().sum();
        if s <= 0.0 {
            log_scale = f64::NEG_INFINITY;
            mass.iter_mut().for_each(|m| *m = 0.0);
        } else {
            mass.iter_mut().for_each(|m| *m /= s);
            log_scale += s.ln();
        }
        while rec.peek() == Some(&&step) {
            out.push(log_scale);
            rec.next();
        }
        if rec.peek().is_none() {
            return Ok(out);
        }
        if log_scale == f64::NEG_INFINITY {
            out.extend(std::iter::repeat_n(f64::NEG_INFINITY, record.len() - out.len()));
            return Ok(out);
        }

        let m = drifts[step];
        let shift = (m / h).round() as i64;
        let dmin = shift - reach;
        let dmax = shift + reach;
        kernel.clear();
        kernel.extend((dmin..=dmax).map(|d| {
            let lo = ((d as f64 - 0.5) * h - m) / sd;
            let hi = ((d as f64 + 0.5) * h - m) / sd;
            normal_cdf(hi) - normal_cdf(lo)
        }));
        next.iter_mut().for_each(|x| *x = 0.0);
        for (j, &mj) in mass.iter().enumerate() {
            if mj == 0.0 {
                continue;
            }
            let kmin = (j as i64 + dmin).max(0);
            let kmax = (j as i64 + dmax).min(g as i64 - 1);
            if kmin > kmax {
                continue;
            }
            let ks = kmin as usize..=kmax as usize;
            let kern = &kernel[(kmin - j as i64 - dmin) as usize..=(kmax - j as i64 - dmin) as usize];
            if bridge {
                let row = &bridge_matrix[j * g..(j + 1) * g];
                for ((&w, &b), out) in kern.iter().zip(&row[ks.clone()]).zip(&mut next[ks]) {
                    *out += mj * w * b;
                }
            } else {
                for (&w, out) in kern.iter().zip(&mut next[ks]) {
                    *out += mj * w;
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        step += 1;
    }
}

/// Probability that Y = B - beta W stays in [-1/2, 1/2] up to the end of the
/// given W increments, starting from `y0`. W is taken as linear between grid
/// times, so all-zero increments give the same value for every beta.
pub fn quenched_bm_confinement(w_increments: &[f64], beta: f64, dt: f64, grid_points: usize, y0: f64) -> Result<f64> {
    let drifts: Vec<f64> = w_increments.iter().map(|dw| -beta * dw).collect();
    let lp = confinement_log_survival(&drifts, y0, Propagation::unit(dt, grid_points), &[drifts.len()])?;
    Ok(lp[0].exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub beta: f64,
    pub horizon_t: f64,
    pub dt: f64,
    pub grid_points: usize,
    pub env_replicas: usize,
    pub gamma_hat: f64,
    pub ci95: (f64, f64),
    /// Fitted slope of -ln P against t, one per W replica.
    pub per_replica_values: Vec<f64>,
}

/// OLS slope of `ys` against `xs`.
pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Mean and two-sided 95% Student-t interval.
pub(crate) fn t_interval(values: &[f64]) -> (f64, (f64, f64)) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, (mean, mean));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let q = StudentsT::new(0.0, 1.0, n - 1.0).expect("dof > 0").inverse_cdf(0.975);
    let half = q * (var / n).sqrt();
    (mean, (mean - half, mean + half))
}

/// Brownian increments of replica `r` on a dt-grid.
pub fn w_increments(seed: u64, replica: usize, steps: usize, dt: f64) -> Vec<f64> {
    let mut rng = rng::stream(seed, Domain::GammaReplica, replica as u64);
    let sd = dt.sqrt();
    (0..steps).map(|_| sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect()
}

/// Horizons t/2, 3t/4, t expressed in steps of `dt`.
pub fn fit_horizons(horizon_t: f64, dt: f64) -> [usize; 3] {
    [0.5, 0.75, 1.0].map(|f| (f * horizon_t / dt).round() as usize)
}

/// Estimates gamma(beta): for each W replica, the slope of -ln P against t
/// over the horizons t/2, 3t/4 and t; averaged over replicas. The bridge
/// weighting accounts for the unsampled part of W between grid times.
pub fn estimate_gamma(beta: f64, horizon_t: f64, dt: f64, grid_points: usize, env_replicas: usize, seed: u64) -> Result<GammaEstimate> {
    if env_replicas < 8 {
        return Err(Error::InvalidArgument(format!("env_replicas must be >= 8, got {env_replicas}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be >= 0, got {beta}")));
    }
    if !(horizon_t > 0.0 && dt > 0.0 && horizon_t / dt >= 4.0) {
        return Err(Error::InvalidArgument(format!("need t > 0 and at least 4 steps, got t={horizon_t}, dt={dt}")));
    }
    let horizons = fit_horizons(horizon_t, dt);
    let times: Vec<f64> = horizons.iter().map(|&k| k as f64 * dt).collect();
    let steps = horizons[2];
    let per_replica: Vec<f64> = (0..env_replicas)
        .into_par_iter()
        .map(|r| {
            let drifts: Vec<f64> = w_increments(seed, r, steps, dt).iter().map(|dw| -beta * dw).collect();
            let lp = confinement_log_survival(&drifts, 0.0, Propagation::quenched(beta, dt, grid_points), &horizons)?;
            if lp.iter().any(|v| !v.is_finite()) {
                return Err(Error::ZeroProbability { replica: r, beta });
            }
            let neg: Vec<f64> = lp.iter().map(|v| -v).collect();
            Ok(ols_slope(&times, &neg))
        })
        .collect::<Result<_>>()?;
    let (gamma_hat, ci95) = t_interval(&per_replica);
    Ok(GammaEstimate {
        beta,
        horizon_t,
        dt,
        grid_points,
        env_replicas,
        gamma_hat,
        ci95,
        per_replica_values: per_replica,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_constants() {
        assert!((bm_tube_rate(1.0, 2.0) - PI * PI / 8.0).abs() < 1e-15);
        assert!((bm_tube_rate(1.0, 1.0) - PI * PI / 2.0).abs() < 1e-15);
        assert_eq!(gamma_zero(), bm_tube_rate(1.0, 1.0));
    }

    #[test]
    fn zero_increments_ignore_beta() {
        let w = vec![0.0; 500];
        let a = quenched_bm_confinement(&w, 0.0, 1e-3, 100, 0.0).unwrap();
        let b = quenched_bm_confinement(&w, 3.7, 1e-3, 100, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_short_step_is_almost_sure() {
        let p = quenched_bm_confinement(&[0.0], 0.0, 1e-5, 200, 0.0).unwrap();
        assert!(p > 1.0 - 1e-9, "{p}");
    }

    #[test]
    fn start_outside_is_zero() {
        assert_eq!(quenched_bm_confinement(&[0.0; 3], 0.0, 1e-3, 100, 0.5).unwrap(), 0.0);
        assert!(quenched_bm_confinement(&[0.0; 3], 0.0, 0.0, 100, 0.0).is_err());
        assert!(quenched_bm_confinement(&[0.0; 3], 0.0, 1e-3, 10, 0.0).is_err());
    }

    #[test]
    fn brownian_scaling() {
        // Width lambda with (dt, drift) equals width 1 with (dt/lambda^2, drift/lambda).
        let lambda = 2.5;
        let dt = 4e-3;
        let drifts: Vec<f64> = w_increments(3, 0, 400, dt).iter().map(|d| -0.7 * d).collect();
        let wide = confinement_log_survival(&drifts, 0.3, Propagation { dt, width: lambda, grid_points: 120, bridge: true, drift_diffusion: 0.0 }, &[400]).unwrap();
        let scaled: Vec<f64> = drifts.iter().map(|d| d / lambda).collect();
        let unit = confinement_log_survival(&scaled, 0.3 / lambda, Propagation { dt: dt / (lambda * lambda), width: 1.0, grid_points: 120, bridge: true, drift_diffusion: 0.0 }, &[400]).unwrap();
        assert!((wide[0].exp() - unit[0].exp()).abs() < 1e-3);
    }

    #[test]
    fn mass_decreases_in_time_and_drift() {
        let dt: f64 = 1e-3;
        let w = vec![0.5 * dt.sqrt(); 600];
        let record: Vec<usize> = (0..=600).step_by(50).collect();
        let mut prev_final = 0.0;
        for (i, beta) in [0.0, 0.5, 1.0, 2.0].into_iter().enumerate() {
            let drifts: Vec<f64> = w.iter().map(|d| -beta * d).collect();
            let lp = confinement_log_survival(&drifts, 0.0, Propagation::unit(dt, 100), &record).unwrap();
            assert!(lp.windows(2).all(|p| p[1] <= p[0]));
            if i > 0 {
                assert!(*lp.last().unwrap() < prev_final);
            }
            prev_final = *lp.last().unwrap();
        }
    }

    #[test]
    fn bridge_weighting_shrinks_survival() {
        let dt = 1e-3;
        let drifts = vec![0.0; 1000];
        let cont = confinement_log_survival(&drifts, 0.0, Propagation::unit(dt, 100), &[1000]).unwrap()[0];
        let disc = confinement_log_survival(&drifts, 0.0, Propagation { bridge: false, ..Propagation::unit(dt, 100) }, &[1000]).unwrap()[0];
        assert!(cont < disc);
    }

    #[test]
    fn all_zero_replicas_collapse() {
        // beta = 0: W is irrelevant and every replica gives the same slope.
        let est = estimate_gamma(0.0, 1.0, 2e-3, 100, 8, 1).unwrap();
        assert!(est.per_replica_values.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(est.ci95.0, est.ci95.1);
        let drifts = vec![0.0; 500];
        let hz = fit_horizons(1.0, 2e-3);
        let lp = confinement_log_survival(&drifts, 0.0, Propagation::unit(2e-3, 100), &hz).unwrap();
        let t: Vec<f64> = hz.iter().map(|&k| k as f64 * 2e-3).collect();
        let neg: Vec<f64> = lp.iter().map(|v| -v).collect();
        assert_eq!(est.gamma_hat, ols_slope(&t, &neg));
    }

    #[test]
    fn argument_checks() {
        assert!(estimate_gamma(0.0, 1.0, 1e-2, 100, 4, 0).is_err());
        assert!(estimate_gamma(-1.0, 1.0, 1e-2, 100, 8, 0).is_err());
    }
}
