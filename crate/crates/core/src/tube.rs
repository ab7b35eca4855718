//! The moving tube `[g(i/n) n^alpha, h(i/n) n^alpha]` and its rate constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Panel count used when a caller does not pick one.
pub const DEFAULT_PANELS: usize = 64;

/// A continuous piecewise-linear function on [0, 1] given by breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// Breakpoints must start at s = 0, end at s = 1 and be strictly increasing.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidTube(m.to_string()));
        if points.len() < 2 {
            return bad("a boundary needs at least two breakpoints");
        }
        if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return bad("breakpoints must be finite");
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return bad("breakpoints must span exactly [0, 1]");
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return bad("breakpoint abscissae must be strictly increasing");
        }
        Ok(Self { points })
    }

    pub fn constant(v: f64) -> Self {
        Self { points: vec![(0.0, v), (1.0, v)] }
    }

    /// The line `a + b s`.
    pub fn linear(a: f64, b: f64) -> Self {
        Self { points: vec![(0.0, a), (1.0, a + b)] }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, s: f64) -> f64 {
        let p = &self.points;
        let k = p.partition_point(|q| q.0 <= s).clamp(1, p.len() - 1);
        let (s0, v0) = p[k - 1];
        let (s1, v1) = p[k];
        v0 + (v1 - v0) * (s - s0) / (s1 - s0)
    }

    /// Same function scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { points: self.points.iter().map(|&(s, v)| (s, v * factor)).collect() }
    }

    /// Same function with extra breakpoints inserted at `at`.
    pub fn refined(&self, at: &[f64]) -> Self {
        let mut xs: Vec<f64> = self.points.iter().map(|p| p.0).chain(at.iter().copied()).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        Self { points: xs.iter().map(|&s| (s, self.eval(s))).collect() }
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = Error;
    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSpec {
    pub g: PiecewiseLinear,
    pub h: PiecewiseLinear,
    pub alpha: f64,
    pub n: usize,
    pub f_offset: usize,
    /// Start window `[a0, b0]` in units of n^alpha.
    pub start_window: (f64, f64),
    /// Optional end window `[a', b']` in units of n^alpha.
    pub end_window: Option<(f64, f64)>,
    /// Threshold r_n for the auxiliary variables xi_i.
    pub xi_threshold: Option<f64>,
}

impl TubeSpec {
    /// Tube with the start window collapsed onto the midpoint of `[g(0), h(0)]`.
    pub fn new(g: PiecewiseLinear, h: PiecewiseLinear, alpha: f64, n: usize) -> Result<Self> {
        let c = 0.5 * (g.eval(0.0) + h.eval(0.0));
        let t = Self { g, h, alpha, n, f_offset: 0, start_window: (c, c), end_window: None, xi_threshold: None };
        t.validate()?;
        Ok(t)
    }

    /// Constant tube `[a, b]`.
    pub fn constant(a: f64, b: f64, alpha: f64, n: usize) -> Result<Self> {
        Self::new(PiecewiseLinear::constant(a), PiecewiseLinear::constant(b), alpha, n)
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidTube(m));
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must lie in (0, 1/2), got {}", self.alpha));
        }
        if self.n == 0 {
            return bad("n must be >= 1".into());
        }
        for s in self.breakpoints() {
            if self.g.eval(s) >= self.h.eval(s) {
                return bad(format!("g(s) < h(s) fails at s = {s}"));
            }
        }
        let (a0, b0) = self.start_window;
        let (g0, h0) = (self.g.eval(0.0), self.h.eval(0.0));
        if !(g0 < a0 && a0 <= b0 && b0 < h0) {
            return bad(format!("start window [{a0}, {b0}] must satisfy g(0)={g0} < a0 <= b0 < h(0)={h0}"));
        }
        if let Some((a1, b1)) = self.end_window {
            let (g1, h1) = (self.g.eval(1.0), self.h.eval(1.0));
            if !(g1 <= a1 && a1 < b1 && b1 <= h1) {
                return bad(format!("end window [{a1}, {b1}] must satisfy g(1)={g1} <= a' < b' <= h(1)={h1}"));
            }
        }
        if let Some(r) = self.xi_threshold {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("xi threshold must be positive, got {r}"));
            }
        }
        Ok(())
    }

    /// Sorted union of the breakpoints of g and h.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut xs: Vec<f64> = self.g.points.iter().chain(&self.h.points).map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs
    }

    /// n^alpha.
    pub fn scale(&self) -> f64 {
        (self.n as f64).powf(self.alpha)
    }

    /// Raw bounds of the tube at step `i`.
    pub fn bounds_at(&self, i: usize) -> Result<(f64, f64)> {
        if i > self.n {
            return Err(Error::OutOfRange(format!("step {i} beyond n = {}", self.n)));
        }
        let s = i as f64 / self.n as f64;
        let k = self.scale();
        Ok((self.g.eval(s) * k, self.h.eval(s) * k))
    }

    /// Raw end window, if any.
    pub fn end_bounds(&self) -> Option<(f64, f64)> {
        let k = self.scale();
        self.end_window.map(|(a, b)| (a * k, b * k))
    }

    /// Raw start window.
    pub fn start_bounds(&self) -> (f64, f64) {
        let k = self.scale();
        (self.start_window.0 * k, self.start_window.1 * k)
    }

    /// `points` start positions evenly spread over the raw start window.
    pub fn start_sweep(&self, points: usize) -> Vec<f64> {
        let (a, b) = self.start_bounds();
        if points <= 1 || a == b {
            return vec![0.5 * (a + b)];
        }
        (0..points).map(|k| a + (b - a) * k as f64 / (points - 1) as f64).collect()
    }

    /// Composite Simpson estimate of the integral of 1/(h-g)^2 over [0, 1].
    /// Every breakpoint is a panel boundary. A piece gets `panels` panels per
    /// unit of length or per unit of |ln| width change, whichever is larger,
    /// so steep pieces are resolved as well as flat ones.
    pub fn c_gh(&self, panels: usize) -> Result<f64> {
        self.validate()?;
        if panels == 0 {
            return Err(Error::InvalidArgument("panels must be >= 1".into()));
        }
        let f = |s: f64| {
            let w = self.h.eval(s) - self.g.eval(s);
            1.0 / (w * w)
        };
        let xs = self.breakpoints();
        let mut total = 0.0;
        for seg in xs.windows(2) {
            let (lo, hi) = (seg[0], seg[1]);
            let w_lo = self.h.eval(lo) - self.g.eval(lo);
            let w_hi = self.h.eval(hi) - self.g.eval(hi);
            let spread = (hi - lo).max((w_hi / w_lo).ln().abs());
            let m = ((panels as f64 * spread).ceil() as usize).max(1);
            let step = (hi - lo) / m as f64;
            let mut acc = 0.0;
            for j in 0..m {
                let a = lo + j as f64 * step;
                let b = if j + 1 == m { hi } else { a + step };
                acc += (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
            }
            total += acc;
        }
        Ok(total)
    }

    /// Richardson-style refinement check: |C(2 panels) - C(panels)|.
    pub fn c_gh_refinement_delta(&self, panels: usize) -> Result<f64> {
        Ok((self.c_gh(2 * panels)? - self.c_gh(panels)?).abs())
    }

    /// Predicted coefficient of n^(1-2 alpha) in ln P: -C_{g,h} sigma_Q^2 gamma,
    /// where `gamma_value` is the rate function at sigma_A / sigma_Q.
    pub fn predicted_rate(&self, sigma_q_sq: f64, gamma_value: f64) -> Result<f64> {
        Ok(-self.c_gh(DEFAULT_PANELS)? * sigma_q_sq * gamma_value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Exact integral of 1/w^2 for w linear on each piece.
    fn c_gh_exact(t: &TubeSpec) -> f64 {
        t.breakpoints()
            .windows(2)
            .map(|seg| {
                let w0 = t.h.eval(seg[0]) - t.g.eval(seg[0]);
                let w1 = t.h.eval(seg[1]) - t.g.eval(seg[1]);
                let len = seg[1] - seg[0];
                if (w1 - w0).abs() < 1e-15 {
                    len / (w0 * w0)
                } else {
                    len * (1.0 / w0 - 1.0 / w1) / (w1 - w0)
                }
            })
            .sum()
    }

    #[test]
    fn bounds_examples() {
        let t = TubeSpec::constant(-1.0, 1.0, 0.25, 16).unwrap();
        for i in [0, 3, 16] {
            assert_eq!(t.bounds_at(i).unwrap(), (-2.0, 2.0));
        }
        let t = TubeSpec::new(PiecewiseLinear::linear(0.0, 1.0), PiecewiseLinear::linear(1.0, 1.0), 0.25, 16).unwrap();
        assert_eq!(t.bounds_at(8).unwrap(), (1.0, 3.0));
        assert_eq!(t.bounds_at(16).unwrap(), (2.0, 4.0));
        assert!(matches!(t.bounds_at(17), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn c_gh_examples() {
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        assert!((t.c_gh(1).unwrap() - 0.25).abs() < 1e-12);
        let t = TubeSpec::new(PiecewiseLinear::constant(0.0), PiecewiseLinear::linear(1.0, 1.0), 0.3, 10).unwrap();
        assert!((t.c_gh(64).unwrap() - 0.5).abs() < 1e-8);
        assert!(t.c_gh_refinement_delta(64).unwrap() < 1e-8);
    }

    #[test]
    fn predicted_rate_examples() {
        let t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        let r = t.predicted_rate(1.0, PI * PI / 2.0).unwrap();
        assert!((r + PI * PI / 8.0).abs() < 1e-12);
        let wide = TubeSpec::constant(-2.0, 2.0, 0.3, 10).unwrap();
        let rw = wide.predicted_rate(1.0, PI * PI / 2.0).unwrap();
        assert!((r / rw - 4.0).abs() < 1e-12);
        let r4 = t.predicted_rate(4.0, PI * PI / 2.0).unwrap();
        assert!((r4 / r - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_tubes() {
        assert!(TubeSpec::constant(1.0, -1.0, 0.3, 10).is_err());
        assert!(TubeSpec::constant(-1.0, 1.0, 0.5, 10).is_err());
        assert!(TubeSpec::constant(-1.0, 1.0, 0.0, 10).is_err());
        // crossing boundaries
        let g = PiecewiseLinear::new(vec![(0.0, -1.0), (0.5, 2.0), (1.0, -1.0)]).unwrap();
        assert!(TubeSpec::new(g, PiecewiseLinear::constant(1.0), 0.3, 10).is_err());
        let mut t = TubeSpec::constant(-1.0, 1.0, 0.3, 10).unwrap();
        t.start_window = (-1.0, 0.0);
        assert!(t.validate().is_err());
        t.start_window = (-0.5, 0.5);
        t.end_window = Some((0.2, 0.1));
        assert!(t.validate().is_err());
        t.end_window = Some((-1.0, 1.0));
        assert!(t.validate().is_ok());
        assert!(PiecewiseLinear::new(vec![(0.0, 1.0), (0.9, 1.0)]).is_err());
    }

    #[test]
    fn serde_rejects_unsorted_breakpoints() {
        let r: std::result::Result<PiecewiseLinear, _> = serde_json::from_str("[[0.0,1.0],[0.6,1.0],[0.5,1.0],[1.0,2.0]]");
        assert!(r.is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_tube() -> impl Strategy<Value = TubeSpec> {
            (prop::collection::vec((0.05f64..0.95, -1.0f64..1.0, 0.2f64..2.0), 0..4), -1.0f64..1.0, 0.2f64..2.0, 0.2f64..2.0)
                .prop_map(|(mids, g0, w0, w1)| {
                    let mut xs: Vec<(f64, f64, f64)> = mids;
                    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    xs.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
                    let mut gp = vec![(0.0, g0)];
                    let mut hp = vec![(0.0, g0 + w0)];
                    for (s, g, w) in xs {
                        gp.push((s, g));
                        hp.push((s, g + w));
                    }
                    gp.push((1.0, g0));
                    hp.push((1.0, g0 + w1));
                    TubeSpec::new(PiecewiseLinear::new(gp).unwrap(), PiecewiseLinear::new(hp).unwrap(), 0.3, 50).unwrap()
                })
        }

        proptest! {
            #[test]
            fn simpson_matches_closed_form(t in arb_tube()) {
                let exact = c_gh_exact(&t);
                let c = t.c_gh(256).unwrap();
                prop_assert!(((c - exact) / exact).abs() < 1e-8, "{c} vs {exact}");
                prop_assert!(t.c_gh_refinement_delta(256).unwrap() < 1e-8 * exact.max(1.0));
            }

            #[test]
            fn refinement_of_breakpoints_is_invariant(t in arb_tube(), extra in prop::collection::vec(0.01f64..0.99, 1..4)) {
                let r = TubeSpec { g: t.g.refined(&extra), h: t.h.refined(&extra), ..t.clone() };
                let a = t.c_gh(512).unwrap();
                let b = r.c_gh(512).unwrap();
                prop_assert!(((a - b) / a).abs() < 1e-8);
            }

            #[test]
            fn constant_tubes_exact(a in -5.0f64..5.0, w in 0.1f64..10.0) {
                let t = TubeSpec::constant(a, a + w, 0.3, 10).unwrap();
                let c = t.c_gh(1).unwrap();
                prop_assert!((c - 1.0 / (w * w)).abs() <= 1e-12 * (1.0 / (w * w)).max(1.0));
                prop_assert!(t.predicted_rate(1.0, 4.9).unwrap() < 0.0);
            }
        }
    }
}
