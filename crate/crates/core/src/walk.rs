//! Quenched paths and the decomposition S = x0 + M + U.

use std::io::Write;

use crate::env::EnvRealization;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// A sampled path together with its drift part `m` (cumulative quenched
/// means), fluctuation part `u`, and cumulative quenched variance `gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPath {
    pub s: Vec<f64>,
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl WalkPath {
    pub fn len(&self) -> usize {
        self.s.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn increments(&self) -> impl Iterator<Item = f64> + '_ {
        self.s.windows(2).map(|w| w[1] - w[0])
    }

    /// Writes the path as CSV with columns `i,s,m,u,gamma`.
    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "s", "m", "u", "gamma"])?;
        for i in 0..self.s.len() {
            w.write_record([
                i.to_string(),
                format!("{:.16e}", self.s[i]),
                format!("{:.16e}", self.m[i]),
                format!("{:.16e}", self.u[i]),
                format!("{:.16e}", self.gamma[i]),
            ])?;
        }
        w.flush()
    }
}

pub(crate) fn check_window(env: &EnvRealization, start_index: usize, length: usize) -> Result<()> {
    match start_index.checked_add(length) {
        Some(end) if end <= env.len() => Ok(()),
        _ => Err(Error::OutOfRange(format!(
            "steps {start_index}..{start_index}+{length} exceed environment length {}",
            env.len()
        ))),
    }
}

/// Samples `length` steps of the walk from `x0`, with step `i` drawn from
/// `env.steps[start_index + i]`.
pub fn sample_path(env: &EnvRealization, start_index: usize, length: usize, x0: f64, seed: u64) -> Result<WalkPath> {
    check_window(env, start_index, length)?;
    let mut rng = rng::stream(seed, Domain::Walk, 0);
    let mut path = WalkPath {
        s: Vec::with_capacity(length + 1),
        m: Vec::with_capacity(length + 1),
        u: Vec::with_capacity(length + 1),
        gamma: Vec::with_capacity(length + 1),
    };
    path.s.push(x0);
    path.m.push(0.0);
    path.u.push(0.0);
    path.gamma.push(0.0);
    let (mut m, mut u, mut g) = (0.0, 0.0, 0.0);
    for law in &env.steps[start_index..start_index + length] {
        let x = law.sample(&mut rng);
        m += law.quenched_mean;
        u += x - law.quenched_mean;
        g += law.quenched_var;
        path.m.push(m);
        path.u.push(u);
        path.gamma.push(g);
        // s is defined through the decomposition so it holds exactly.
        path.s.push(x0 + m + u);
    }
    Ok(path)
}
