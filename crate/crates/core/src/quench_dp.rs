//! Deterministic quenched tube-survival probabilities.
//!
//! [`survival_dp_lattice`] is exact for environments whose steps all live on
//! a common lattice (1/q)Z; [`survival_grid`] propagates a discretized
//! sub-probability density and handles continuous steps. Both treat the tube
//! as closed: a walk sitting exactly on a boundary survives.

use crate::env::{EnvRealization, StepKind, StepLaw};
use crate::error::{Error, Result};
use crate::estimate::{Method, SurvivalEstimate};
use crate::normal::normal_cdf;
use crate::tube::TubeSpec;
use crate::walk::check_window;

/// Slack used when comparing lattice points against real-valued bounds.
const BOUNDARY_EPS: f64 = 1e-9;
/// Gaussian transition mass beyond this many standard deviations is dropped.
const KERNEL_SIGMAS: f64 = 9.0;
/// Default tolerance on the grid refinement delta in log space.
pub const DEFAULT_GRID_TOLERANCE: f64 = 1e-3;

/// Sub-probability mass of the surviving walk on a set of positions.
///
/// The true mass at `grid[k]` is `mass[k] * exp(log_scale)`; `mass` is
/// renormalized every step so long horizons do not underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct SubDensity {
    pub grid: Vec<f64>,
    pub mass: Vec<f64>,
    pub log_scale: f64,
}

impl SubDensity {
    pub fn log_total(&self) -> f64 {
        let s: f64 = self.mass.iter().sum();
        if s > 0.0 { s.ln() + self.log_scale } else { f64::NEG_INFINITY }
    }

    pub fn total(&self) -> f64 {
        self.log_total().exp()
    }

    fn renormalize(&mut self) {
        let s: f64 = self.mass.iter().sum();
        if s > 0.0 {
            self.mass.iter_mut().for_each(|m| *m /= s);
            self.log_scale += s.ln();
        } else {
            self.log_scale = f64::NEG_INFINITY;
        }
    }
}

fn check_start(tube: &TubeSpec, x0: f64) -> Result<()> {
    let (lower, upper) = tube.bounds_at(0)?;
    if !(x0 > lower && x0 < upper) {
        return Err(Error::StartOutsideTube { x0, lower, upper });
    }
    Ok(())
}

/// ln of the product of P_mu(xi_i <= r_n) over the steps the walk uses.
pub fn log_xi_factor(env: &EnvRealization, tube: &TubeSpec) -> f64 {
    match tube.xi_threshold {
        Some(r) => env.steps[tube.f_offset..tube.f_offset + tube.n].iter().map(|s| s.log_xi_cdf(r)).sum(),
        None => 0.0,
    }
}

/// Integer lattice range `[kmin, kmax]` with `x0 + k/q` in `[lo, hi]`.
fn lattice_range(lo: f64, hi: f64, x0: f64, q: f64) -> (i64, i64) {
    let kmin = ((lo - x0) * q - BOUNDARY_EPS).ceil() as i64;
    let kmax = ((hi - x0) * q + BOUNDARY_EPS).floor() as i64;
    (kmin, kmax)
}

fn lattice_shifts(law: &StepLaw, q: f64) -> Vec<(i64, f64)> {
    match &law.kind {
        StepKind::Atoms(a) => a.iter().filter(|x| x.1 > 0.0).map(|&(x, w)| ((x * q).round() as i64, w)).collect(),
        StepKind::Gaussian { .. } => unreachable!("lattice checked"),
    }
}

/// Runs the lattice DP, pushing the log-survival after every step into
/// `profile`, and returns the final surviving sub-density.
fn run_lattice(env: &EnvRealization, tube: &TubeSpec, x0: f64, profile: &mut Vec<f64>) -> Result<SubDensity> {
    tube.validate()?;
    check_window(env, tube.f_offset, tube.n)?;
    check_start(tube, x0)?;
    let range = tube.f_offset..tube.f_offset + tube.n;
    let q = env.lattice_in(range.clone()).map_err(|index| Error::NonLattice { index })? as f64;

    profile.push(0.0);
    // mass[j] sits at x0 + (kmin + j) / q
    let mut kmin = 0i64;
    let mut density = SubDensity { grid: vec![x0], mass: vec![1.0], log_scale: 0.0 };
    let mut next = Vec::new();
    for (i, law) in env.steps[range].iter().enumerate() {
        let (lo, hi) = tube.bounds_at(i + 1)?;
        let (mut nmin, mut nmax) = lattice_range(lo, hi, x0, q);
        if i + 1 == tube.n {
            if let Some((a, b)) = tube.end_bounds() {
                let (emin, emax) = lattice_range(a, b, x0, q);
                nmin = nmin.max(emin);
                nmax = nmax.min(emax);
            }
        }
        if nmax < nmin || density.log_scale == f64::NEG_INFINITY {
            profile.extend(std::iter::repeat_n(f64::NEG_INFINITY, tube.n - i));
            return Ok(SubDensity { grid: vec![], mass: vec![], log_scale: f64::NEG_INFINITY });
        }
        next.clear();
        next.resize((nmax - nmin + 1) as usize, 0.0);
        for (shift, w) in lattice_shifts(law, q) {
            for (j, &m) in density.mass.iter().enumerate() {
                let k = kmin + j as i64 + shift;
                if k >= nmin && k <= nmax {
                    next[(k - nmin) as usize] += w * m;
                }
            }
        }
        std::mem::swap(&mut density.mass, &mut next);
        kmin = nmin;
        density.renormalize();
        profile.push(density.log_scale);
    }
    density.grid = (0..density.mass.len()).map(|j| x0 + (kmin + j as i64) as f64 / q).collect();
    Ok(density)
}

/// Exact log-survival after each step 0..=n (without the xi factor).
pub fn survival_dp_lattice_profile(env: &EnvRealization, tube: &TubeSpec, x0: f64) -> Result<Vec<f64>> {
    let mut profile = Vec::with_capacity(tube.n + 1);
    run_lattice(env, tube, x0, &mut profile)?;
    Ok(profile)
}

/// Surviving sub-density at time n (without the xi factor).
pub fn survival_dp_lattice_density(env: &EnvRealization, tube: &TubeSpec, x0: f64) -> Result<SubDensity> {
    run_lattice(env, tube, x0, &mut Vec::new())
}

/// Exact quenched probability that the walk started at `x0` at time
/// `f_offset` stays in the tube for n steps, ends in the end window (if
/// any) and keeps every xi below the threshold (if any).
pub fn survival_dp_lattice(env: &EnvRealization, tube: &TubeSpec, x0: f64) -> Result<SurvivalEstimate> {
    let profile = survival_dp_lattice_profile(env, tube, x0)?;
    let log_p = profile[tube.n] + log_xi_factor(env, tube);
    let q = env.lattice_in(tube.f_offset..tube.f_offset + tube.n).unwrap_or(1) as f64;
    let width = (tube.scale() * 2.0 * q).ceil() as u64 + 1;
    Ok(SurvivalEstimate::exact(log_p, Method::DpLattice, tube.n as u64 * width))
}

/// Survival by enumerating every atom path. Exponential cost; used as an
/// independent check of the lattice DP on small instances.
pub fn survival_brute_force(env: &EnvRealization, tube: &TubeSpec, x0: f64) -> Result<SurvivalEstimate> {
    tube.validate()?;
    check_window(env, tube.f_offset, tube.n)?;
    check_start(tube, x0)?;
    let laws = &env.steps[tube.f_offset..tube.f_offset + tube.n];
    let mut atoms = Vec::with_capacity(laws.len());
    for (i, law) in laws.iter().enumerate() {
        match &law.kind {
            StepKind::Atoms(a) => atoms.push(a.as_slice()),
            StepKind::Gaussian { .. } => return Err(Error::NonLattice { index: tube.f_offset + i }),
        }
    }
    let bounds: Vec<(f64, f64)> = (0..=tube.n).map(|i| tube.bounds_at(i)).collect::<Result<_>>()?;
    let end = tube.end_bounds();
    let inside = |x: f64, (lo, hi): (f64, f64)| x >= lo - BOUNDARY_EPS && x <= hi + BOUNDARY_EPS;

    let mut total = 0.0;
    let mut paths = 0u64;
    // explicit stack of (depth, position, probability)
    let mut stack = vec![(0usize, x0, 1.0f64)];
    while let Some((depth, x, w)) = stack.pop() {
        if depth == tube.n {
            paths += 1;
            if end.is_none_or(|e| inside(x, e)) {
                total += w;
            }
            continue;
        }
        for &(step, pw) in atoms[depth] {
            let y = x + step;
            if pw > 0.0 && inside(y, bounds[depth + 1]) {
                stack.push((depth + 1, y, w * pw));
            }
        }
    }
    let log_p = if total > 0.0 { total.ln() } else { f64::NEG_INFINITY } + log_xi_factor(env, tube);
    Ok(SurvivalEstimate::exact(log_p, Method::BruteForce, paths))
}

/// Node grid of `points` positions spanning `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
struct NodeGrid {
    lo: f64,
    hi: f64,
    points: usize,
}

impl NodeGrid {
    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.points - 1) as f64
    }

    fn node(&self, k: usize) -> f64 {
        if k + 1 == self.points { self.hi } else { self.lo + k as f64 * self.spacing() }
    }

    /// Lower edge of the cell owned by node `k`; cells of the end nodes are
    /// half-width so the union is exactly `[lo, hi]`.
    fn edge(&self, k: usize) -> f64 {
        if k == 0 {
            self.lo
        } else if k >= self.points {
            self.hi
        } else {
            self.lo + (k as f64 - 0.5) * self.spacing()
        }
    }
}

/// Pushes `src` through one step into `dst` (on `to`), killing mass that
/// leaves `to`'s interval.
fn propagate(src: &[f64], from: NodeGrid, dst: &mut [f64], to: NodeGrid, law: &StepLaw, cdf: &mut Vec<f64>) {
    dst.iter_mut().for_each(|m| *m = 0.0);
    match &law.kind {
        StepKind::Gaussian { mean, std } => {
            let same = from == to;
            if same {
                // Transition mass only depends on the node offset.
                let d = to.spacing();
                let g = to.points as i64;
                // cdf[o + g] = Phi((edge offset o - mean) / std), edge offset o in [-g, g]
                cdf.clear();
                cdf.extend((-g..=g).map(|o| normal_cdf(((o as f64 - 0.5) * d - mean) / std)));
                for (j, &m) in src.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let x = from.node(j);
                    for (k, out) in dst.iter_mut().enumerate() {
                        let lo = if k == 0 {
                            normal_cdf((to.lo - x - mean) / std)
                        } else {
                            cdf[(k as i64 - j as i64 + g) as usize]
                        };
                        let hi = if k + 1 == to.points {
                            normal_cdf((to.hi - x - mean) / std)
                        } else {
                            cdf[(k as i64 + 1 - j as i64 + g) as usize]
                        };
                        *out += m * (hi - lo);
                    }
                }
            } else {
                for (j, &m) in src.iter().enumerate() {
                    if m == 0.0 {
                        continue;
                    }
                    let centre = from.node(j) + mean;
                    let reach = KERNEL_SIGMAS * std;
                    let d = to.spacing();
                    let kmin = (((centre - reach - to.lo) / d).floor().max(0.0) as usize).min(to.points - 1);
                    let kmax = (((centre + reach - to.lo) / d).ceil().max(0.0) as usize).min(to.points - 1);
                    let mut prev = normal_cdf((to.edge(kmin) - centre) / std);
                    for (k, out) in dst.iter_mut().enumerate().take(kmax + 1).skip(kmin) {
                        let cur = normal_cdf((to.edge(k + 1) - centre) / std);
                        *out += m * (cur - prev);
                        prev = cur;
                    }
                }
            }
        }
        StepKind::Atoms(atoms) => {
            let d = to.spacing();
            for (j, &m) in src.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let x = from.node(j);
                for &(a, w) in atoms {
                    let y = x + a;
                    if y < to.lo - BOUNDARY_EPS || y > to.hi + BOUNDARY_EPS {
                        continue;
                    }
                    let u = ((y - to.lo) / d).clamp(0.0, (to.points - 1) as f64);
                    let r = u.round();
                    if (u - r).abs() <= 1e-9 {
                        dst[r as usize] += w * m;
                    } else {
                        let k = u.floor() as usize;
                        let t = u - k as f64;
                        dst[k] += w * m * (1.0 - t);
                        dst[k + 1] += w * m * t;
                    }
                }
            }
        }
    }
}

fn grid_log_survival(env: &EnvRealization, tube: &TubeSpec, x0: f64, grid_points: usize) -> Result<f64> {
    let slice = |i: usize| -> Result<NodeGrid> {
        let (mut lo, mut hi) = tube.bounds_at(i)?;
        if i == tube.n {
            if let Some((a, b)) = tube.end_bounds() {
                lo = lo.max(a);
                hi = hi.min(b);
            }
        }
        Ok(NodeGrid { lo, hi, points: grid_points })
    };
    // Time 0 is a point mass: a one-node grid at x0.
    let mut from = NodeGrid { lo: x0, hi: x0, points: 1 };
    let mut src = vec![1.0];
    let mut dst = vec![0.0; grid_points];
    let mut cdf = Vec::new();
    let mut log_scale = 0.0;
    for (i, law) in env.steps[tube.f_offset..tube.f_offset + tube.n].iter().enumerate() {
        let to = slice(i + 1)?;
        if to.hi < to.lo {
            return Ok(f64::NEG_INFINITY);
        }
        if from.points == 1 {
            // A one-node grid has zero spacing; go through the general path.
            let degenerate = NodeGrid { lo: x0, hi: x0 + 1.0, points: 2 };
            let pad = [1.0, 0.0];
            propagate(&pad, degenerate, &mut dst, to, law, &mut cdf);
        } else {
            propagate(&src, from, &mut dst, to, law, &mut cdf);
        }
        let s: f64 = dst.iter().sum();
        if s <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        dst.iter_mut().for_each(|m| *m /= s);
        log_scale += s.ln();
        if src.len() != grid_points {
            src = vec![0.0; grid_points];
        }
        std::mem::swap(&mut src, &mut dst);
        from = to;
    }
    Ok(log_scale)
}

/// Grid density-propagation estimate with the default refinement tolerance.
pub fn survival_grid(env: &EnvRealization, tube: &TubeSpec, x0: f64, grid_points: usize) -> Result<SurvivalEstimate> {
    survival_grid_with_tolerance(env, tube, x0, grid_points, DEFAULT_GRID_TOLERANCE)
}

/// Propagates the surviving sub-density over a node grid spanning each time
/// slice of the tube. Gaussian steps use exact bin-edge CDF masses; atom
/// steps are shifted exactly and split linearly between neighbouring nodes.
/// The result is flagged `coarse` when halving the grid moves log p by more
/// than `tolerance`.
pub fn survival_grid_with_tolerance(
    env: &EnvRealization,
    tube: &TubeSpec,
    x0: f64,
    grid_points: usize,
    tolerance: f64,
) -> Result<SurvivalEstimate> {
    tube.validate()?;
    if grid_points < 50 {
        return Err(Error::InvalidArgument(format!("grid_points must be >= 50, got {grid_points}")));
    }
    check_window(env, tube.f_offset, tube.n)?;
    check_start(tube, x0)?;
    let fine = grid_log_survival(env, tube, x0, grid_points)?;
    let coarse = grid_log_survival(env, tube, x0, grid_points / 2)?;
    let delta = if fine.is_finite() && coarse.is_finite() { (fine - coarse).abs() } else { f64::INFINITY };
    let log_p = fine + log_xi_factor(env, tube);
    let mut est = SurvivalEstimate::exact(log_p, Method::Grid, (tube.n * grid_points * grid_points) as u64);
    est.refinement_delta = Some(delta);
    est.coarse = delta > tolerance;
    Ok(est)
}

/// Minimum of the lattice DP over `points` start positions spread across the
/// start window (approximates the infimum over the window).
pub fn infimum_over_start(env: &EnvRealization, tube: &TubeSpec, points: usize) -> Result<SurvivalEstimate> {
    let mut best: Option<SurvivalEstimate> = None;
    for x0 in tube.start_sweep(points) {
        let est = survival_dp_lattice(env, tube, x0)?;
        if best.as_ref().is_none_or(|b| est.log_p < b.log_p) {
            best = Some(est);
        }
    }
    Ok(best.expect("sweep is never empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentSpec, Family};
    use crate::tube::PiecewiseLinear;

    fn rademacher(n: usize) -> EnvRealization {
        EnvironmentSpec::rademacher().sample(n, 0).unwrap()
    }

    /// Tube whose raw bounds are exactly [lo, hi] (alpha chosen so n^alpha = 1
    /// is impossible; rescale the boundaries instead).
    fn raw_tube(lo: f64, hi: f64, n: usize) -> TubeSpec {
        let alpha = 0.25;
        let k = (n as f64).powf(alpha);
        TubeSpec::constant(lo / k, hi / k, alpha, n).unwrap()
    }

    #[test]
    fn one_step_inside() {
        let p = survival_dp_lattice(&rademacher(1), &raw_tube(-2.0, 2.0, 1), 0.0).unwrap();
        assert_eq!(p.p, 1.0);
        assert!(p.stderr_log.is_none());
    }

    #[test]
    fn two_steps_unit_tube() {
        // Paths: ++ and -- leave at step 1... only +- and -+ return to 0,
        // but both pass through +-1 which is on the closed boundary.
        // Enumerated: S1 in {-1, 1} always inside; S2 in {-2, 0, 0, 2}.
        let p = survival_dp_lattice(&rademacher(2), &raw_tube(-1.0, 1.0, 2), 0.0).unwrap();
        assert!((p.p - 0.5).abs() < 1e-15);
        let b = survival_brute_force(&rademacher(2), &raw_tube(-1.0, 1.0, 2), 0.0).unwrap();
        assert!((b.p - 0.5).abs() < 1e-15);
        assert_eq!(b.work, 2); // exits are pruned before the leaves
    }

    #[test]
    fn random_shift_matches_enumeration() {
        let spec = EnvironmentSpec::random_shift(0.5, 2);
        for seed in 0..5 {
            let env = spec.sample(14, seed).unwrap();
            let mut tube = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
            tube.f_offset = 4;
            let dp = survival_dp_lattice(&env, &tube, 0.0).unwrap();
            let bf = survival_brute_force(&env, &tube, 0.0).unwrap();
            assert!((dp.p - bf.p).abs() < 1e-10, "{} vs {}", dp.p, bf.p);
        }
    }

    #[test]
    fn rejects_non_lattice_and_bad_start() {
        let g = EnvironmentSpec::random_mean_gaussian(0.0, 1.0).sample(10, 0).unwrap();
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        assert!(matches!(survival_dp_lattice(&g, &t, 0.0), Err(Error::NonLattice { index: 0 })));
        assert!(matches!(survival_dp_lattice(&rademacher(10), &t, 5.0), Err(Error::StartOutsideTube { .. })));
        // boundary itself is not in the open tube
        let k = t.scale();
        assert!(survival_dp_lattice(&rademacher(10), &t, k).is_err());
        assert!(matches!(survival_dp_lattice(&rademacher(5), &t, 0.0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn end_window_and_xi_factor() {
        let env = rademacher(4);
        let mut t = raw_tube(-2.0, 2.0, 4);
        let open = survival_dp_lattice(&env, &t, 0.0).unwrap().p;
        let k = t.scale();
        t.end_window = Some((-0.5 / k, 0.5 / k));
        let pinned = survival_dp_lattice(&env, &t, 0.0).unwrap().p;
        assert!(pinned < open);
        assert!((pinned - survival_brute_force(&env, &t, 0.0).unwrap().p).abs() < 1e-15);
        t.xi_threshold = Some(2.0);
        let with_xi = survival_dp_lattice(&env, &t, 0.0).unwrap();
        let factor = (1.0 - (-2.0f64).exp()).powi(4);
        assert!((with_xi.p - pinned * factor).abs() < 1e-14);
    }

    #[test]
    fn disjoint_end_window_gives_zero() {
        // Four Rademacher steps from 0 end on even sites; window (0.2, 0.8) holds none.
        let env = rademacher(4);
        let mut t = raw_tube(-3.0, 3.0, 4);
        let k = t.scale();
        t.end_window = Some((0.2 / k, 0.8 / k));
        let est = survival_dp_lattice(&env, &t, 0.0).unwrap();
        assert_eq!(est.p, 0.0);
        assert_eq!(est.log_p, f64::NEG_INFINITY);
    }

    #[test]
    fn profile_is_nonincreasing() {
        let env = EnvironmentSpec::random_shift(0.5, 2).sample(300, 4).unwrap();
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 300).unwrap();
        let prof = survival_dp_lattice_profile(&env, &t, 0.0).unwrap();
        assert_eq!(prof.len(), 301);
        assert!(prof.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let d = survival_dp_lattice_density(&env, &t, 0.0).unwrap();
        assert!((d.log_total() - prof[300]).abs() < 1e-12);
        let (lo, hi) = t.bounds_at(300).unwrap();
        assert!(d.grid.iter().all(|&x| x >= lo - 1e-9 && x <= hi + 1e-9));
        assert!(d.mass.iter().all(|&m| m >= 0.0));
        assert!((d.total() - prof[300].exp()).abs() < 1e-12);
    }

    #[test]
    fn grid_wide_tube_is_certain() {
        let env = EnvironmentSpec::random_mean_gaussian(0.0, 1.0).sample(10, 1).unwrap();
        let t = raw_tube(-500.0, 500.0, 10);
        let est = survival_grid(&env, &t, 0.0, 200).unwrap();
        assert!((est.p - 1.0).abs() < 1e-9, "{}", est.p);
    }

    #[test]
    fn grid_matches_lattice_dp() {
        let env = EnvironmentSpec::random_shift(0.5, 2).sample(20, 11).unwrap();
        // raw bounds [-3, 3]; node spacing 6 / 600 = 0.01 divides 1/2
        let t = raw_tube(-3.0, 3.0, 20);
        let dp = survival_dp_lattice(&env, &t, 0.0).unwrap();
        let grid = survival_grid(&env, &t, 0.0, 601).unwrap();
        assert!((dp.p - grid.p).abs() < 1e-6, "{} vs {}", dp.p, grid.p);
        assert!(grid.refinement_delta.is_some());
    }

    #[test]
    fn grid_matches_closed_form_for_one_gaussian_step() {
        let env = EnvironmentSpec::random_mean_gaussian(0.0, 1.0).sample(1, 1).unwrap();
        let t = raw_tube(-1.0, 1.5, 1);
        let est = survival_grid(&env, &t, 0.2, 100).unwrap();
        let StepKind::Gaussian { mean, std } = env.steps[0].kind else { panic!() };
        let exact = normal_cdf((1.5 - 0.2 - mean) / std) - normal_cdf((-1.0 - 0.2 - mean) / std);
        assert!((est.p - exact).abs() < 1e-12);
    }

    #[test]
    fn grid_rejects_tiny_grid() {
        let env = rademacher(3);
        assert!(survival_grid(&env, &raw_tube(-2.0, 2.0, 3), 0.0, 10).is_err());
    }

    #[test]
    fn gaussian_grid_converges_under_refinement() {
        let spec = EnvironmentSpec::new(Family::RandomMeanGaussian { sigma_a: 0.5, tau: 1.0 });
        let env = spec.sample(60, 3).unwrap();
        let g = PiecewiseLinear::linear(-1.0, -0.5);
        let h = PiecewiseLinear::linear(1.0, 0.5);
        let t = TubeSpec::new(g, h, 0.3, 60).unwrap();
        let a = survival_grid(&env, &t, 0.0, 200).unwrap();
        let b = survival_grid(&env, &t, 0.0, 400).unwrap();
        assert!((a.log_p - b.log_p).abs() < 1e-3 * a.log_p.abs().max(1.0));
        assert!(!b.coarse, "{:?}", b.refinement_delta);
    }

    #[test]
    fn start_sweep_takes_minimum() {
        let env = rademacher(40);
        let mut t = TubeSpec::constant(-1.0, 1.0, 0.3, 40).unwrap();
        t.start_window = (-0.5, 0.5);
        let inf = infimum_over_start(&env, &t, 11).unwrap();
        for x in t.start_sweep(11) {
            assert!(survival_dp_lattice(&env, &t, x).unwrap().log_p >= inf.log_p);
        }
    }
}
