//! Decay-constant extraction and comparison with the predicted rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::env::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::estimate::SurvivalEstimate;
use crate::gamma::{self, GammaEstimate};
use crate::mc::{self, XiMode};
use crate::quench_dp;
use crate::rng::{derive_seed, Domain};
use crate::tube::TubeSpec;

/// Least-squares fit of ln P against n^(1 - 2 alpha).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub points: Vec<(usize, f64)>,
    pub alpha: f64,
    /// Coefficient of n^(1 - 2 alpha).
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_ci95: (f64, f64),
}

/// OLS of `log_p` on `n^(1 - 2 alpha)`. Non-finite points are dropped; at
/// least three distinct n must remain.
pub fn decay_fit(points: &[(usize, f64)], alpha: f64) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> = points.iter().copied().filter(|p| p.1.is_finite()).collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 finite points, got {}", pts.len())));
    }
    let mut ns: Vec<usize> = pts.iter().map(|p| p.0).collect();
    ns.sort_unstable();
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Fit("n values must be distinct".into()));
    }
    let expo = 1.0 - 2.0 * alpha;
    let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).powf(expo)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let se = (ssr / (m - 2.0) / sxx).sqrt();
    let q = StudentsT::new(0.0, 1.0, m - 2.0).expect("dof >= 1").inverse_cdf(0.975);
    Ok(RateFit { points: pts, alpha, slope, intercept, r_squared, slope_ci95: (slope - q * se, slope + q * se) })
}

/// Which survival estimator [`theorem_check`] runs per n.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    /// Lattice DP when the environment is lattice, grid otherwise.
    #[default]
    Auto,
    DpLattice,
    Grid,
    NaiveMc,
    Splitting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    pub replicas: usize,
    pub particles: usize,
    pub checkpoints: usize,
    pub grid_points: usize,
    /// Grid refinement tolerance.
    pub tolerance: f64,
    /// Start points swept across the start window; the minimum is kept.
    pub start_points: usize,
    pub xi_mode: XiMode,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::Auto,
            replicas: 10_000,
            particles: 10_000,
            checkpoints: 20,
            grid_points: 200,
            tolerance: quench_dp::DEFAULT_GRID_TOLERANCE,
            start_points: 1,
            xi_mode: XiMode::Analytic,
        }
    }
}

/// Runs the configured estimator at start point `x0`.
pub fn estimate_survival(
    spec: &EnvironmentSpec,
    env: &crate::env::EnvRealization,
    tube: &TubeSpec,
    x0: f64,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<SurvivalEstimate> {
    let method = match cfg.method {
        EstimatorMethod::Auto if spec.lattice().is_some() => EstimatorMethod::DpLattice,
        EstimatorMethod::Auto => EstimatorMethod::Grid,
        m => m,
    };
    match method {
        EstimatorMethod::DpLattice => quench_dp::survival_dp_lattice(env, tube, x0),
        EstimatorMethod::Grid => quench_dp::survival_grid_with_tolerance(env, tube, x0, cfg.grid_points, cfg.tolerance),
        EstimatorMethod::NaiveMc => mc::survival_naive_mc_with(env, tube, x0, cfg.replicas, seed, cfg.xi_mode),
        EstimatorMethod::Splitting => {
            mc::survival_splitting_with(env, tube, x0, cfg.particles, cfg.checkpoints.min(tube.n), seed, cfg.xi_mode)
        }
        EstimatorMethod::Auto => unreachable!(),
    }
}

/// Minimum over the start sweep.
pub fn estimate_survival_inf(
    spec: &EnvironmentSpec,
    env: &crate::env::EnvRealization,
    tube: &TubeSpec,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<(f64, SurvivalEstimate)> {
    let mut best: Option<(f64, SurvivalEstimate)> = None;
    for x0 in tube.start_sweep(cfg.start_points) {
        let est = estimate_survival(spec, env, tube, x0, cfg, seed)?;
        if best.as_ref().is_none_or(|b| est.log_p < b.1.log_p) {
            best = Some((x0, est));
        }
    }
    Ok(best.expect("sweep is never empty"))
}

/// Source of gamma(sigma_A / sigma_Q) for the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaSource {
    /// pi^2 / 2; only meaningful when sigma_A = 0.
    Reference,
    /// A known value.
    Value { gamma: f64 },
    /// Estimate by density propagation at beta = sigma_A / sigma_Q.
    Estimate { t: f64, dt: f64, grid_points: usize, replicas: usize, seed: u64 },
}

/// f(n) = floor(c n^kappa).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetRule {
    pub c: f64,
    pub kappa: f64,
}

impl Default for OffsetRule {
    fn default() -> Self {
        Self { c: 0.0, kappa: 1.0 }
    }
}

impl OffsetRule {
    pub fn offset(&self, n: usize) -> usize {
        (self.c * (n as f64).powf(self.kappa)).floor().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c >= 0.0 && self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::InvalidArgument(format!("f_offset rule needs c >= 0 and kappa >= 0, got {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSettings {
    pub seed: u64,
    /// Use one environment realization for all n instead of one per n.
    pub shared_env: bool,
    pub offset: OffsetRule,
    /// Maximum relative discrepancy between fitted and predicted slope.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub n: usize,
    pub f_offset: usize,
    pub env_seed: u64,
    pub x0: f64,
    pub n_pow: f64,
    pub estimate: SurvivalEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub environment: EnvironmentSpec,
    pub sigma_a_sq: f64,
    pub sigma_q_sq: f64,
    pub beta: f64,
    pub c_gh: f64,
    pub gamma_value: f64,
    pub gamma_estimate: Option<GammaEstimate>,
    pub rows: Vec<CheckRow>,
    pub fit: RateFit,
    pub predicted_slope: f64,
    /// |slope - predicted| / |predicted|.
    pub discrepancy: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Resolves gamma at beta = sigma_A / sigma_Q.
pub fn resolve_gamma(source: &GammaSource, beta: f64) -> Result<(f64, Option<GammaEstimate>)> {
    match source {
        GammaSource::Reference => Ok((gamma::gamma_zero(), None)),
        GammaSource::Value { gamma } => Ok((*gamma, None)),
        GammaSource::Estimate { t, dt, grid_points, replicas, seed } => {
            let est = gamma::estimate_gamma(beta, *t, *dt, *grid_points, *replicas, *seed)?;
            Ok((est.gamma_hat, Some(est)))
        }
    }
}

/// Survival estimates for each n (one fresh environment per n unless
/// `shared_env`), fitted against n^(1 - 2 alpha).
pub fn survival_rows(
    env_spec: &EnvironmentSpec,
    tube_template: &TubeSpec,
    n_list: &[usize],
    estimator: &EstimatorConfig,
    settings: &CheckSettings,
) -> Result<Vec<CheckRow>> {
    settings.offset.validate()?;
    n_list
        .par_iter()
        .map(|&n| {
            let at_n = |e: Error| Error::AtN { n, source: Box::new(e) };
            let f = settings.offset.offset(n);
            let mut tube = tube_template.with_n(n);
            tube.f_offset = f;
            tube.validate().map_err(at_n)?;
            let env_seed = if settings.shared_env { settings.seed } else { derive_seed(settings.seed, Domain::EnvSeedPerN, n as u64) };
            let env = env_spec.sample(f + n, env_seed).map_err(at_n)?;
            let walk_seed = derive_seed(settings.seed, Domain::Walk, n as u64);
            let (x0, estimate) = estimate_survival_inf(env_spec, &env, &tube, estimator, walk_seed).map_err(at_n)?;
            Ok(CheckRow { n, f_offset: f, env_seed, x0, n_pow: (n as f64).powf(1.0 - 2.0 * tube.alpha), estimate })
        })
        .collect()
}

/// Fits the empirical decay constant across `n_list` and compares it with
/// -C_{g,h} sigma_Q^2 gamma(sigma_A / sigma_Q).
pub fn theorem_check(
    env_spec: &EnvironmentSpec,
    tube_template: &TubeSpec,
    n_list: &[usize],
    estimator: &EstimatorConfig,
    gamma_source: &GammaSource,
    settings: &CheckSettings,
) -> Result<CheckReport> {
    if n_list.len() < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 values of n, got {}", n_list.len())));
    }
    let (sa2, sq2) = env_spec.moments()?;
    let beta = (sa2 / sq2).sqrt();
    let rows = survival_rows(env_spec, tube_template, n_list, estimator, settings)?;
    let points: Vec<(usize, f64)> = rows.iter().map(|r| (r.n, r.estimate.log_p)).collect();
    let fit = decay_fit(&points, tube_template.alpha)?;
    let (gamma_value, gamma_estimate) = resolve_gamma(gamma_source, beta)?;
    let c_gh = tube_template.c_gh(crate::tube::DEFAULT_PANELS)?;
    let predicted_slope = tube_template.predicted_rate(sq2, gamma_value)?;
    let discrepancy = ((fit.slope - predicted_slope) / predicted_slope).abs();
    Ok(CheckReport {
        environment: env_spec.clone(),
        sigma_a_sq: sa2,
        sigma_q_sq: sq2,
        beta,
        c_gh,
        gamma_value,
        gamma_estimate,
        rows,
        fit,
        predicted_slope,
        discrepancy,
        tolerance: settings.tolerance,
        pass: discrepancy <= settings.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tube::PiecewiseLinear;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<(usize, f64)> {
        [10usize, 20, 40, 80].iter().map(|&n| (n, f((n as f64).powf(0.4)))).collect()
    }

    #[test]
    fn noiseless_fits() {
        let fit = decay_fit(&pts(|x| -2.0 * x), 0.3).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fit = decay_fit(&pts(|x| -2.0 * x + 3.0), 0.3).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!((fit.intercept - 3.0).abs() < 1e-10);
    }

    #[test]
    fn fit_errors() {
        assert!(decay_fit(&[(1, 0.0), (2, -1.0)], 0.3).is_err());
        assert!(decay_fit(&[(1, 0.0), (2, -1.0), (2, -3.0)], 0.3).is_err());
        assert!(decay_fit(&[(1, 0.0), (2, -1.0), (3, f64::NEG_INFINITY)], 0.3).is_err());
        assert!(decay_fit(&[(1, 0.0), (2, -1.0), (3, f64::NEG_INFINITY), (4, -2.5)], 0.3).is_ok());
    }

    #[test]
    fn fit_is_affine_equivariant() {
        let base = pts(|x| -1.3 * x + 0.7 + (x * 7.0).sin() * 0.1);
        let a = decay_fit(&base, 0.3).unwrap();
        let scaled: Vec<_> = base.iter().map(|&(n, y)| (n, 2.5 * y)).collect();
        let b = decay_fit(&scaled, 0.3).unwrap();
        assert!((b.slope - 2.5 * a.slope).abs() < 1e-12);
        assert!((b.intercept - 2.5 * a.intercept).abs() < 1e-10);
        assert!((a.r_squared - b.r_squared).abs() < 1e-12);
        assert!(a.slope_ci95.0 < a.slope && a.slope < a.slope_ci95.1);
    }

    #[test]
    fn offset_rule() {
        let r = OffsetRule { c: 2.0, kappa: 0.5 };
        assert_eq!(r.offset(100), 20);
        assert_eq!(OffsetRule::default().offset(100), 0);
        assert!(OffsetRule { c: -1.0, kappa: 1.0 }.validate().is_err());
    }

    #[test]
    fn curved_tube_decays_slower_than_constant() {
        let settings = CheckSettings { seed: 5, shared_env: false, offset: OffsetRule::default(), tolerance: 1.0 };
        let cfg = EstimatorConfig::default();
        let spec = EnvironmentSpec::rademacher();
        let n = [200, 400, 800];
        let flat = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        let curved = TubeSpec::new(PiecewiseLinear::linear(-1.0, -1.0), PiecewiseLinear::linear(1.0, 1.0), 0.3, 10).unwrap();
        let a = theorem_check(&spec, &flat, &n, &cfg, &GammaSource::Reference, &settings).unwrap();
        let b = theorem_check(&spec, &curved, &n, &cfg, &GammaSource::Reference, &settings).unwrap();
        assert!(b.fit.slope.abs() < a.fit.slope.abs());
        assert!(b.predicted_slope.abs() < a.predicted_slope.abs());
    }

    #[test]
    fn per_n_environments_and_offsets() {
        let settings = CheckSettings { seed: 1, shared_env: false, offset: OffsetRule { c: 1.0, kappa: 0.5 }, tolerance: 1.0 };
        let spec = EnvironmentSpec::random_shift(0.5, 2);
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        let rows = survival_rows(&spec, &t, &[50, 100], &EstimatorConfig::default(), &settings).unwrap();
        assert_eq!(rows[0].f_offset, 7);
        assert_eq!(rows[1].f_offset, 10);
        assert_ne!(rows[0].env_seed, rows[1].env_seed);
        let shared = CheckSettings { shared_env: true, ..settings };
        let rows = survival_rows(&spec, &t, &[50, 100], &EstimatorConfig::default(), &shared).unwrap();
        assert_eq!(rows[0].env_seed, rows[1].env_seed);
    }

    #[test]
    fn errors_carry_n() {
        let settings = CheckSettings { seed: 1, shared_env: false, offset: OffsetRule::default(), tolerance: 1.0 };
        let spec = EnvironmentSpec::random_mean_gaussian(0.0, 1.0);
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        let cfg = EstimatorConfig { method: EstimatorMethod::DpLattice, ..Default::default() };
        let err = survival_rows(&spec, &t, &[20, 30], &cfg, &settings).unwrap_err();
        assert!(matches!(err, Error::AtN { n: 20, .. }));
    }
}
