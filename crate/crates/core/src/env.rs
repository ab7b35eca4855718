//! Random environments in time.
//!
//! An [`EnvironmentSpec`] is the meta-law of the i.i.d. per-step measures;
//! an [`EnvRealization`] is one draw of the whole sequence. Conditionally on a
//! realization the walk has independent, non-identically distributed steps.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

const WEIGHT_TOL: f64 = 1e-12;
const LATTICE_TOL: f64 = 1e-9;
/// Largest lattice denominator probed by [`lattice_denominator`].
pub const MAX_LATTICE_DENOMINATOR: u64 = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Every step has the same law, given by `atoms` as `(position, weight)`.
    Degenerate { atoms: Vec<(f64, f64)> },
    /// Step = Rademacher + m, with m uniform on {-shift, +shift} per step.
    /// `shift * denominator` must be an integer.
    RandomShiftBernoulli { shift: f64, denominator: u32 },
    /// Step ~ N(m, tau^2) with m ~ N(0, sigma_a^2) per step.
    RandomMeanGaussian { sigma_a: f64, tau: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub family: Family,
    /// Scale of the auxiliary variable: xi_i ~ xi_scale * Exp(1) under mu_i.
    pub xi_scale: f64,
}

impl EnvironmentSpec {
    pub fn new(family: Family) -> Self {
        Self { family, xi_scale: 1.0 }
    }

    /// Symmetric simple random walk with no environment randomness.
    pub fn rademacher() -> Self {
        Self::new(Family::Degenerate { atoms: vec![(-1.0, 0.5), (1.0, 0.5)] })
    }

    pub fn random_shift(shift: f64, denominator: u32) -> Self {
        Self::new(Family::RandomShiftBernoulli { shift, denominator })
    }

    pub fn random_mean_gaussian(sigma_a: f64, tau: f64) -> Self {
        Self::new(Family::RandomMeanGaussian { sigma_a, tau })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnvironment(m));
        if !(self.xi_scale.is_finite() && self.xi_scale > 0.0) {
            return bad(format!("xi_scale must be positive, got {}", self.xi_scale));
        }
        match &self.family {
            Family::Degenerate { atoms } => {
                if atoms.is_empty() {
                    return bad("degenerate environment has no atoms".into());
                }
                validate_atoms(atoms).map_err(Error::InvalidEnvironment)?;
                let (mean, var) = atom_moments(atoms);
                if mean.abs() > 1e-12 {
                    return bad(format!("E[M_1] must be 0, atoms have mean {mean}"));
                }
                if var <= 0.0 {
                    return bad("quenched variance sigma_Q^2 must be positive".into());
                }
            }
            Family::RandomShiftBernoulli { shift, denominator } => {
                if !(shift.is_finite() && *shift >= 0.0) {
                    return bad(format!("shift must be >= 0, got {shift}"));
                }
                if *denominator == 0 {
                    return bad("lattice denominator must be positive".into());
                }
                let scaled = shift * f64::from(*denominator);
                if (scaled - scaled.round()).abs() > LATTICE_TOL {
                    return bad(format!(
                        "shift {shift} is not a multiple of 1/{denominator}"
                    ));
                }
            }
            Family::RandomMeanGaussian { sigma_a, tau } => {
                if !(sigma_a.is_finite() && *sigma_a >= 0.0) {
                    return bad(format!("sigma_a must be >= 0, got {sigma_a}"));
                }
                if !(tau.is_finite() && *tau > 0.0) {
                    return bad(format!("tau must be positive, got {tau}"));
                }
            }
        }
        Ok(())
    }

    /// Closed-form `(sigma_A^2, sigma_Q^2)`.
    pub fn moments(&self) -> Result<(f64, f64)> {
        self.validate()?;
        Ok(match &self.family {
            Family::Degenerate { atoms } => (0.0, atom_moments(atoms).1),
            Family::RandomShiftBernoulli { shift, .. } => (shift * shift, 1.0),
            Family::RandomMeanGaussian { sigma_a, tau } => (sigma_a * sigma_a, tau * tau),
        })
    }

    /// The lattice denominator q if every possible step is supported on (1/q)Z.
    pub fn lattice(&self) -> Option<u64> {
        match &self.family {
            Family::Degenerate { atoms } => lattice_denominator(atoms.iter().map(|a| a.0)),
            Family::RandomShiftBernoulli { denominator, .. } => Some(u64::from(*denominator)),
            Family::RandomMeanGaussian { .. } => None,
        }
    }

    fn draw_step(&self, rng: &mut impl Rng) -> StepLaw {
        match &self.family {
            Family::Degenerate { atoms } => StepLaw::atoms(atoms.clone(), self.xi_scale),
            Family::RandomShiftBernoulli { shift, .. } => {
                let m = if rng.random::<bool>() { *shift } else { -*shift };
                StepLaw::atoms(vec![(m - 1.0, 0.5), (m + 1.0, 0.5)], self.xi_scale)
            }
            Family::RandomMeanGaussian { sigma_a, tau } => {
                let z: f64 = StandardNormal.sample(rng);
                StepLaw::gaussian(sigma_a * z, *tau, self.xi_scale)
            }
        }
    }

    /// Samples `length` i.i.d. step laws. Step `i` depends only on `(seed, i)`,
    /// so realizations of different lengths share their common prefix.
    pub fn sample(&self, length: usize, seed: u64) -> Result<EnvRealization> {
        self.validate()?;
        if length == 0 {
            return Err(Error::InvalidArgument("environment length must be >= 1".into()));
        }
        let steps = (0..length)
            .map(|i| self.draw_step(&mut rng::stream(seed, Domain::Environment, i as u64)))
            .collect();
        Ok(EnvRealization { steps, seed, spec: self.clone() })
    }

    pub fn verify_assumptions(&self) -> AssumptionReport {
        let mut report = AssumptionReport::default();
        if let Err(e) = self.validate() {
            report.messages.push(e.to_string());
            return report;
        }
        let (sa2, sq2) = self.moments().expect("validated");
        let mean_m = match &self.family {
            Family::Degenerate { atoms } => atom_moments(atoms).0,
            // symmetric meta-laws
            Family::RandomShiftBernoulli { .. } | Family::RandomMeanGaussian { .. } => 0.0,
        };
        report.mean_m1 = mean_m;
        report.sigma_a_sq = sa2;
        report.sigma_q_sq = sq2;
        report.h1 = mean_m.abs() <= 1e-12 && sq2 > 0.0 && sa2.is_finite();
        match &self.family {
            Family::Degenerate { atoms } => {
                let bound = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
                // M_1 = 0 and |U_1| <= max |atom|.
                report.lambda1 = Some(1.0);
                report.lambda2 = Some(1.0);
                report.lambda3 = Some(bound.exp());
                report.messages.push(format!("bounded support, |U_1| <= {bound}"));
            }
            Family::RandomShiftBernoulli { .. } => {
                // |M_1| = shift and |U_1| = 1 almost surely.
                report.lambda1 = Some(1.0);
                report.lambda2 = Some(1.0);
                report.lambda3 = Some(1f64.exp());
                report.messages.push("bounded support, |U_1| = 1; any lambda_2 works".into());
            }
            Family::RandomMeanGaussian { sigma_a, tau } => {
                // E e^{l|Z|} <= 2 e^{l^2 s^2 / 2} for Z ~ N(0, s^2).
                report.lambda1 = Some(1.0);
                report.lambda2 = Some(1.0);
                report.lambda3 = Some(2.0 * (tau * tau / 2.0).exp());
                report.messages.push(format!(
                    "Gaussian exponential moments: E e^|M_1| <= {:.6}",
                    2.0 * (sigma_a * sigma_a / 2.0).exp()
                ));
            }
        }
        report.h2 = true;
        report.h3 = true;
        report
    }
}

/// Outcome of checking the integrability assumptions on the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub h1: bool,
    pub h2: bool,
    pub h3: bool,
    pub mean_m1: f64,
    pub sigma_a_sq: f64,
    pub sigma_q_sq: f64,
    /// Witness for E exp(lambda1 |M_1|) < infinity.
    pub lambda1: Option<f64>,
    /// Witnesses for E_mu exp(lambda2 |U_1|) <= lambda3 almost surely.
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub messages: Vec<String>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.h1 && self.h2 && self.h3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepKind {
    Atoms(Vec<(f64, f64)>),
    Gaussian { mean: f64, std: f64 },
}

/// The law mu_i of a single step, with its quenched moments cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    pub kind: StepKind,
    pub quenched_mean: f64,
    pub quenched_var: f64,
    pub xi_scale: f64,
}

impl StepLaw {
    pub fn atoms(atoms: Vec<(f64, f64)>, xi_scale: f64) -> Self {
        let (quenched_mean, quenched_var) = atom_moments(&atoms);
        Self { kind: StepKind::Atoms(atoms), quenched_mean, quenched_var, xi_scale }
    }

    pub fn gaussian(mean: f64, std: f64, xi_scale: f64) -> Self {
        Self { kind: StepKind::Gaussian { mean, std }, quenched_mean: mean, quenched_var: std * std, xi_scale }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match &self.kind {
            StepKind::Atoms(a) => validate_atoms(a),
            StepKind::Gaussian { std, .. } if *std > 0.0 && std.is_finite() => Ok(()),
            StepKind::Gaussian { std, .. } => Err(format!("gaussian step needs std > 0, got {std}")),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match &self.kind {
            StepKind::Atoms(atoms) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, w) in atoms {
                    acc += w;
                    if u < acc {
                        return x;
                    }
                }
                atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
            StepKind::Gaussian { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
        }
    }

    /// Draws xi_i under this step's law.
    #[inline]
    pub fn sample_xi(&self, rng: &mut impl Rng) -> f64 {
        let e: f64 = Exp1.sample(rng);
        self.xi_scale * e
    }

    /// ln P_mu(xi_i <= r).
    pub fn log_xi_cdf(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (-(-r / self.xi_scale).exp_m1()).ln()
    }
}

/// One draw of the environment: the quenched world the walk lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRealization {
    pub steps: Vec<StepLaw>,
    pub seed: u64,
    pub spec: EnvironmentSpec,
}

impl EnvRealization {
    /// Builds a realization from explicit step laws (for hand-built and test
    /// environments).
    pub fn from_steps(steps: Vec<StepLaw>, spec: EnvironmentSpec) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::InvalidArgument("environment length must be >= 1".into()));
        }
        for (i, s) in steps.iter().enumerate() {
            s.validate().map_err(|m| Error::InvalidEnvironment(format!("step {i}: {m}")))?;
        }
        Ok(Self { steps, seed: 0, spec })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Lattice denominator shared by all steps in `range`, if any.
    pub fn lattice_in(&self, range: std::ops::Range<usize>) -> std::result::Result<u64, usize> {
        let mut q = 1u64;
        for i in range {
            match &self.steps[i].kind {
                StepKind::Atoms(a) => match lattice_denominator(a.iter().map(|p| p.0)) {
                    Some(qi) => q = lcm(q, qi),
                    None => return Err(i),
                },
                StepKind::Gaussian { .. } => return Err(i),
            }
            if q > MAX_LATTICE_DENOMINATOR {
                return Err(i);
            }
        }
        Ok(q)
    }
}

fn validate_atoms(atoms: &[(f64, f64)]) -> std::result::Result<(), String> {
    if atoms.is_empty() {
        return Err("no atoms".into());
    }
    if atoms.iter().any(|&(x, w)| !x.is_finite() || !w.is_finite() || w < 0.0) {
        return Err("atom positions must be finite and weights nonnegative".into());
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(format!("atom weights sum to {total}, expected 1"));
    }
    Ok(())
}

fn atom_moments(atoms: &[(f64, f64)]) -> (f64, f64) {
    let mean: f64 = atoms.iter().map(|&(x, w)| x * w).sum();
    let var: f64 = atoms.iter().map(|&(x, w)| w * (x - mean).powi(2)).sum();
    (mean, var)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Smallest q <= [`MAX_LATTICE_DENOMINATOR`] with every position in (1/q)Z.
pub fn lattice_denominator(positions: impl IntoIterator<Item = f64> + Clone) -> Option<u64> {
    (1..=MAX_LATTICE_DENOMINATOR).find(|&q| {
        positions.clone().into_iter().all(|x| {
            let s = x * q as f64;
            (s - s.round()).abs() <= LATTICE_TOL * s.abs().max(1.0)
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_closed_form() {
        assert_eq!(EnvironmentSpec::rademacher().moments().unwrap(), (0.0, 1.0));
        assert_eq!(EnvironmentSpec::random_shift(0.5, 2).moments().unwrap(), (0.25, 1.0));
        assert_eq!(EnvironmentSpec::random_mean_gaussian(1.0, 2.0).moments().unwrap(), (1.0, 4.0));
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(EnvironmentSpec::random_mean_gaussian(1.0, 0.0).moments().is_err());
        assert!(EnvironmentSpec::new(Family::Degenerate { atoms: vec![] }).moments().is_err());
        // zero variance
        assert!(EnvironmentSpec::new(Family::Degenerate { atoms: vec![(0.0, 1.0)] }).moments().is_err());
        // nonzero mean
        assert!(EnvironmentSpec::new(Family::Degenerate { atoms: vec![(0.0, 0.5), (1.0, 0.5)] })
            .moments()
            .is_err());
        // shift off the lattice
        assert!(EnvironmentSpec::random_shift(0.3, 2).validate().is_err());
    }

    #[test]
    fn degenerate_realization_is_constant() {
        let env = EnvironmentSpec::rademacher().sample(50, 123).unwrap();
        assert!(env.steps.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let spec = EnvironmentSpec::random_mean_gaussian(1.0, 2.0);
        let a = spec.sample(200, 42).unwrap();
        let b = spec.sample(200, 42).unwrap();
        assert_eq!(a, b);
        let c = spec.sample(100, 42).unwrap();
        assert_eq!(&a.steps[..100], &c.steps[..]);
        assert_ne!(a, spec.sample(200, 43).unwrap());
    }

    #[test]
    fn random_shift_mean_clt_bound() {
        let env = EnvironmentSpec::random_shift(0.5, 2).sample(1000, 7).unwrap();
        let mean: f64 = env.steps.iter().map(|s| s.quenched_mean).sum::<f64>() / 1000.0;
        assert!(mean.abs() <= 4.0 * 0.5 / 1000f64.sqrt(), "mean {mean}");
        for s in &env.steps {
            assert!((s.quenched_mean.abs() - 0.5).abs() < 1e-15);
            assert!((s.quenched_var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_moments_match_kind() {
        let env = EnvironmentSpec::random_mean_gaussian(1.0, 2.0).sample(20, 1).unwrap();
        for s in &env.steps {
            let StepKind::Gaussian { mean, std } = s.kind else { panic!() };
            assert!((s.quenched_mean - mean).abs() < 1e-12);
            assert!((s.quenched_var - std * std).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_step_moments_over_many_steps() {
        for spec in [
            EnvironmentSpec::rademacher(),
            EnvironmentSpec::random_shift(0.5, 2),
            EnvironmentSpec::random_mean_gaussian(1.0, 2.0),
        ] {
            let (sa2, sq2) = spec.moments().unwrap();
            let n = 100_000;
            let env = spec.sample(n, 99).unwrap();
            let nf = n as f64;
            let m: f64 = env.steps.iter().map(|s| s.quenched_mean).sum::<f64>() / nf;
            assert!(m.abs() <= 5.0 * (sa2 / nf).sqrt() + 1e-12, "{spec:?}: mean m = {m}");
            let v: Vec<f64> = env.steps.iter().map(|s| s.quenched_var).collect();
            let vm = v.iter().sum::<f64>() / nf;
            let vv = v.iter().map(|x| (x - vm).powi(2)).sum::<f64>() / (nf - 1.0);
            assert!((vm - sq2).abs() <= 5.0 * (vv / nf).sqrt() + 1e-12, "{spec:?}: mean v = {vm}");
        }
    }

    #[test]
    fn moments_match_monte_carlo_draws() {
        // Annealed moments from 10^6 environment draws, one step per draw.
        for spec in [EnvironmentSpec::random_shift(0.5, 2), EnvironmentSpec::random_mean_gaussian(1.0, 2.0)] {
            let (sa2, sq2) = spec.moments().unwrap();
            let n = 1_000_000usize;
            let env = spec.sample(n, 2024).unwrap();
            let nf = n as f64;
            let m2: Vec<f64> = env.steps.iter().map(|s| s.quenched_mean.powi(2)).collect();
            let mean_m2 = m2.iter().sum::<f64>() / nf;
            let var_m2 = m2.iter().map(|x| (x - mean_m2).powi(2)).sum::<f64>() / (nf - 1.0);
            assert!((mean_m2 - sa2).abs() <= 5.0 * (var_m2 / nf).sqrt() + 1e-12);
            let mean_v = env.steps.iter().map(|s| s.quenched_var).sum::<f64>() / nf;
            assert!((mean_v - sq2).abs() <= 1e-9);
        }
    }

    #[test]
    fn assumption_reports() {
        for spec in [
            EnvironmentSpec::rademacher(),
            EnvironmentSpec::random_shift(0.5, 2),
            EnvironmentSpec::random_mean_gaussian(1.0, 2.0),
        ] {
            let r = spec.verify_assumptions();
            assert!(r.all_pass(), "{spec:?}: {r:?}");
            assert!(r.lambda2.is_some() && r.lambda3.is_some());
        }
        let bad = EnvironmentSpec::random_mean_gaussian(1.0, 0.0).verify_assumptions();
        assert!(!bad.h1);
    }

    #[test]
    fn lattice_detection() {
        assert_eq!(lattice_denominator([-1.0, 1.0]), Some(1));
        assert_eq!(lattice_denominator([-1.5, 0.5]), Some(2));
        assert_eq!(lattice_denominator([1.0 / 3.0, -2.0 / 3.0]), Some(3));
        assert_eq!(lattice_denominator([std::f64::consts::PI]), None);
        assert_eq!(EnvironmentSpec::random_shift(0.5, 2).lattice(), Some(2));
        let env = EnvironmentSpec::random_shift(0.5, 2).sample(30, 3).unwrap();
        assert_eq!(env.lattice_in(0..30), Ok(2));
        let g = EnvironmentSpec::random_mean_gaussian(0.0, 1.0).sample(3, 3).unwrap();
        assert_eq!(g.lattice_in(0..3), Err(0));
    }

    #[test]
    fn xi_cdf_closed_form() {
        let s = StepLaw::atoms(vec![(-1.0, 0.5), (1.0, 0.5)], 2.0);
        assert!((s.log_xi_cdf(3.0) - (1.0 - (-1.5f64).exp()).ln()).abs() < 1e-15);
        assert_eq!(s.log_xi_cdf(0.0), f64::NEG_INFINITY);
    }
}
