//! Batch front-end: `tubewalk <subcommand> --config PATH [--seed U64]
//! [--set key=value ...] [--out DIR]`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::env::EnvironmentSpec;
use crate::quench_dp;
use crate::rate::{self, CheckReport, CheckRow};
use crate::rng::{derive_seed, stream, Domain};
use crate::tube::{TubeSpec, DEFAULT_PANELS};
use crate::walk::sample_path;
use crate::{gamma, mc};

pub const SCHEMA_VERSION: u32 = 1;
pub const THREADS_VAR: &str = "TUBEWALK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "tubewalk", version, about = "Quenched tube-survival experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Survival estimates for every n in the config.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also write one sample path per n (columns i, s, m, u, gamma).
        #[arg(long)]
        dump_path: bool,
    },
    /// Confinement rate gamma(beta) for each configured beta.
    Gamma {
        #[command(flatten)]
        common: Common,
    },
    /// Decay-rate fit against the predicted rate.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Assumption report and self-tests; exits nonzero on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Consolidates earlier outputs in the output directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dotted-key override, e.g. `--set tube.alpha=0.25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Only errors and warnings on the terminal.
    #[arg(long, short)]
    pub quiet: bool,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Gamma { common }
            | Command::Fit { common }
            | Command::Verify { common }
            | Command::Report { common } => common,
        }
    }
}

/// Parses arguments, runs, and maps the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("error: {THREADS_VAR} must be a positive integer, got `{v}`");
                return 2;
            }
        },
        Err(_) => None,
    };
    match run_with_threads(&cli, threads) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

/// Runs `cli` on a pool of `threads` workers (rayon's default when `None`).
/// Returns `Ok(false)` when `verify` finds a failure.
pub fn run_with_threads(cli: &Cli, threads: Option<usize>) -> anyhow::Result<bool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("building worker pool")?;
    pool.install(|| run(cli))
}

pub fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let text = fs::read_to_string(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
    let mut overrides = common.overrides.clone();
    if let Some(seed) = common.seed {
        if seed > i64::MAX as u64 {
            bail!("--seed must be below 2^63");
        }
        overrides.push(format!("seed={seed}"));
    }
    ExperimentConfig::from_toml_with_overrides(&text, &overrides)
        .with_context(|| format!("invalid config {}", common.config.display()))
}

pub fn run(cli: &Cli) -> anyhow::Result<bool> {
    let common = cli.command.common();
    let cfg = load_config(common)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let ctx = Ctx { hash: cfg.hash(), cfg, out, quiet: common.quiet };
    match &cli.command {
        Command::Simulate { dump_path, .. } => simulate(&ctx, *dump_path).map(|_| true),
        Command::Gamma { .. } => gamma_table(&ctx).map(|_| true),
        Command::Fit { .. } => fit(&ctx).map(|_| true),
        Command::Verify { .. } => verify(&ctx),
        Command::Report { .. } => report(&ctx).map(|_| true),
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn say(&self, line: impl std::fmt::Display) {
        if !self.quiet {
            println!("{line}");
        }
    }

    fn wants(&self, format: &str) -> bool {
        self.cfg.output.formats.iter().any(|f| f == format)
    }

    fn envelope(&self, kind: &str, body: impl Serialize) -> anyhow::Result<Value> {
        Ok(json!({
            "schema_version": SCHEMA_VERSION,
            "kind": kind,
            "seed": self.cfg.seed,
            "config_hash": self.hash,
            "config": self.cfg,
            "config_toml": self.cfg.to_toml(),
            "result": serde_json::to_value(body)?,
        }))
    }

    fn write_json(&self, name: &str, value: &Value) -> anyhow::Result<PathBuf> {
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn csv(&self, name: &str) -> anyhow::Result<(PathBuf, csv::Writer<fs::File>)> {
        let path = self.out.join(name);
        let w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        Ok((path, w))
    }
}

/// 17 significant digits; `inf`, `-inf`, `NaN` spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn simulate(ctx: &Ctx, dump_path: bool) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let spec = cfg.environment.spec()?;
    let template = cfg.tube.template()?;
    let n_list = cfg.tube.n_values()?;
    let settings = cfg.check_settings();
    let rows = rate::survival_rows(&spec, &template, &n_list, &cfg.estimator(), &settings)?;

    let (path, mut w) = ctx.csv("survival.csv")?;
    w.write_record([
        "n", "f_offset", "x0", "method", "p", "log_p", "stderr_log", "work", "refinement_delta", "coarse", "extinct",
        "env_seed", "walk_seed", "seed", "config_hash",
    ])?;
    for r in &rows {
        let e = &r.estimate;
        w.write_record([
            r.n.to_string(),
            r.f_offset.to_string(),
            fmt_f64(r.x0),
            e.method.as_str().to_string(),
            fmt_f64(e.p),
            fmt_f64(e.log_p),
            fmt_opt(e.stderr_log),
            e.work.to_string(),
            fmt_opt(e.refinement_delta),
            e.coarse.to_string(),
            e.extinct.to_string(),
            r.env_seed.to_string(),
            derive_seed(cfg.seed, Domain::Walk, r.n as u64).to_string(),
            cfg.seed.to_string(),
            ctx.hash.clone(),
        ])?;
    }
    w.flush()?;
    ctx.say(format_args!("wrote {}", path.display()));
    for r in &rows {
        if r.estimate.coarse {
            eprintln!("warning: n={} grid refinement delta exceeds tolerance", r.n);
        }
        if r.estimate.extinct {
            eprintln!("warning: n={} splitting population went extinct", r.n);
        }
    }

    if dump_path {
        for r in &rows {
            let env = spec.sample(r.f_offset + r.n, r.env_seed)?;
            let walk_seed = derive_seed(cfg.seed, Domain::Walk, r.n as u64);
            let p = sample_path(&env, r.f_offset, r.n, r.x0, walk_seed)?;
            let path = ctx.out.join(format!("path_n{}.csv", r.n));
            p.write_csv(fs::File::create(&path)?)?;
            ctx.say(format_args!("wrote {}", path.display()));
        }
    }
    if ctx.wants("json") {
        let path = ctx.write_json("simulate.json", &ctx.envelope("simulate", &rows)?)?;
        ctx.say(format_args!("wrote {}", path.display()));
    }
    Ok(())
}

fn gamma_table(ctx: &Ctx) -> anyhow::Result<()> {
    let g = &ctx.cfg.gamma;
    let mut estimates = Vec::with_capacity(g.beta.len());
    for &beta in &g.beta {
        let est = gamma::estimate_gamma(beta, g.t, g.dt, g.grid, g.replicas, ctx.cfg.seed)
            .with_context(|| format!("estimating gamma at beta = {beta}"))?;
        ctx.say(format_args!("beta = {beta}: gamma_hat = {:.6} ({:.6}, {:.6})", est.gamma_hat, est.ci95.0, est.ci95.1));
        estimates.push(est);
    }
    let (path, mut w) = ctx.csv("gamma.csv")?;
    w.write_record(["beta", "gamma_hat", "ci_lo", "ci_hi", "t", "dt", "grid", "replicas", "seed", "config_hash"])?;
    for e in &estimates {
        w.write_record([
            fmt_f64(e.beta),
            fmt_f64(e.gamma_hat),
            fmt_f64(e.ci95.0),
            fmt_f64(e.ci95.1),
            fmt_f64(e.horizon_t),
            fmt_f64(e.dt),
            e.grid_points.to_string(),
            e.env_replicas.to_string(),
            ctx.cfg.seed.to_string(),
            ctx.hash.clone(),
        ])?;
    }
    w.flush()?;
    ctx.say(format_args!("wrote {}", path.display()));
    if ctx.wants("json") {
        let path = ctx.write_json("gamma.json", &ctx.envelope("gamma", &estimates)?)?;
        ctx.say(format_args!("wrote {}", path.display()));
    }
    Ok(())
}

fn fit(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = &ctx.cfg;
    let spec = cfg.environment.spec()?;
    let template = cfg.tube.template()?;
    let n_list = cfg.tube.n_values()?;
    let report = rate::theorem_check(&spec, &template, &n_list, &cfg.estimator(), &cfg.gamma.source(cfg.seed), &cfg.check_settings())?;

    let (path, mut w) = ctx.csv("fit.csv")?;
    w.write_record(["n", "n_pow", "log_p", "seed", "config_hash"])?;
    for r in &report.rows {
        w.write_record([r.n.to_string(), fmt_f64(r.n_pow), fmt_f64(r.estimate.log_p), cfg.seed.to_string(), ctx.hash.clone()])?;
    }
    w.flush()?;
    ctx.say(format_args!("wrote {}", path.display()));
    let path = ctx.write_json("fit.json", &ctx.envelope("fit", &report)?)?;
    ctx.say(format_args!("wrote {}", path.display()));
    if ctx.wants("svg") {
        let path = ctx.out.join("fit.svg");
        fs::write(&path, fit_svg(&report.rows, &report))?;
        ctx.say(format_args!("wrote {}", path.display()));
    }
    ctx.say(format_args!(
        "slope = {:.6} (95% CI {:.6}, {:.6}), r^2 = {:.6}; predicted = {:.6}; discrepancy = {:.4} (tolerance {}) -> {}",
        report.fit.slope,
        report.fit.slope_ci95.0,
        report.fit.slope_ci95.1,
        report.fit.r_squared,
        report.predicted_slope,
        report.discrepancy,
        report.tolerance,
        if report.pass { "PASS" } else { "FAIL" }
    ));
    Ok(())
}

/// Static line chart of (n^(1 - 2 alpha), log p) with the fitted line.
pub fn fit_svg(rows: &[CheckRow], report: &CheckReport) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.n_pow, r.estimate.log_p)).filter(|p| p.1.is_finite()).collect();
    let xmax = pts.iter().map(|p| p.0).fold(0.0, f64::max).max(1e-12) * 1.05;
    let line_end = report.fit.intercept + report.fit.slope * xmax;
    let ys = pts.iter().map(|p| p.1).chain([report.fit.intercept, line_end, 0.0]);
    let (ymin, ymax) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let span = (ymax - ymin).max(1e-12);
    let sx = |x: f64| m + x / xmax * (w - 2.0 * m);
    let sy = |y: f64| h - m - (y - ymin) / span * (h - 2.0 * m);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx}\" y=\"{lb}\" text-anchor=\"middle\" font-size=\"13\">n^(1-2 alpha)</text>\n\
         <text x=\"16\" y=\"{cy}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 {cy})\">log p</text>\n\
         <text x=\"{m}\" y=\"{lb}\" font-size=\"11\">0</text>\n\
         <text x=\"{r}\" y=\"{lb}\" text-anchor=\"end\" font-size=\"11\">{xmax:.3}</text>\n\
         <text x=\"{tl}\" y=\"{tt}\" text-anchor=\"end\" font-size=\"11\">{ymax:.3}</text>\n\
         <text x=\"{tl}\" y=\"{b}\" text-anchor=\"end\" font-size=\"11\">{ymin:.3}</text>\n",
        b = h - m,
        r = w - m,
        cx = w / 2.0,
        cy = h / 2.0,
        lb = h - m + 24.0,
        tl = m - 4.0,
        tt = m + 4.0,
    );
    s.push_str(&format!(
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"steelblue\" stroke-width=\"2\"/>\n",
        sx(0.0),
        sy(report.fit.intercept),
        sx(xmax),
        sy(line_end)
    ));
    for (x, y) in &pts {
        s.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"firebrick\"/>\n", sx(*x), sy(*y)));
    }
    s.push_str(&format!(
        "<text x=\"{:.0}\" y=\"30\" text-anchor=\"middle\" font-size=\"13\">slope {:.4}, predicted {:.4}</text>\n</svg>\n",
        w / 2.0,
        report.fit.slope,
        report.predicted_slope
    ));
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfTest {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: String) -> SelfTest {
    SelfTest { name: name.to_string(), pass, detail }
}

/// Fast invariant checks against the configured environment and tube.
pub fn self_tests(spec: &EnvironmentSpec, tube: &TubeSpec, seed: u64) -> Vec<SelfTest> {
    let mut out = Vec::new();
    let attempt = |name: &str, f: &dyn Fn() -> crate::Result<SelfTest>| f().unwrap_or_else(|e| check(name, false, e.to_string()));

    out.push(attempt("moments", &|| {
        let (sa2, sq2) = spec.moments()?;
        let k = 20_000;
        let env = spec.sample(k, derive_seed(seed, Domain::Moments, 0))?;
        let m2: Vec<f64> = env.steps.iter().map(|s| s.quenched_mean * s.quenched_mean).collect();
        let v: Vec<f64> = env.steps.iter().map(|s| s.quenched_var).collect();
        let ok = |xs: &[f64], target: f64| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let se = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
            ((mean - target).abs() <= 5.0 * se + 1e-12 * target.abs().max(1.0), mean)
        };
        let (a, ma) = ok(&m2, sa2);
        let (q, mq) = ok(&v, sq2);
        Ok(check("moments", a && q, format!("sigma_A^2 {sa2} vs sample {ma}; sigma_Q^2 {sq2} vs sample {mq}")))
    }));

    out.push(attempt("walk_decomposition", &|| {
        let env = spec.sample(64, seed)?;
        let p = sample_path(&env, 0, 64, 0.0, seed)?;
        let exact = (0..=64).all(|i| (p.s[i] - (p.s[0] + p.m[i] + p.u[i])).abs() <= 1e-9 * (1.0 + p.s[i].abs()));
        let mono = p.gamma[0] == 0.0 && p.gamma.windows(2).all(|w| w[1] >= w[0]);
        Ok(check("walk_decomposition", exact && mono, format!("s = x0 + m + u: {exact}; gamma nondecreasing: {mono}")))
    }));

    out.push(attempt("environment_determinism", &|| {
        let a = spec.sample(40, seed)?;
        let b = spec.sample(40, seed)?;
        let c = spec.sample(20, seed)?;
        let ok = a == b && a.steps[..20] == c.steps[..];
        Ok(check("environment_determinism", ok, "same seed reproduces; shorter realization is a prefix".into()))
    }));

    out.push(attempt("quadrature", &|| {
        let d = tube.c_gh_refinement_delta(DEFAULT_PANELS)?;
        Ok(check("quadrature", d < 1e-8, format!("C_gh = {}, doubling-panels delta {d:.3e}", tube.c_gh(DEFAULT_PANELS)?)))
    }));

    out.push(attempt("estimator_oracle", &|| {
        let n = 10;
        let mut small = tube.with_n(n);
        small.f_offset = 0;
        small.validate()?;
        let env = spec.sample(n, seed)?;
        let x0 = small.start_sweep(1)[0];
        if spec.lattice().is_some() {
            let dp = quench_dp::survival_dp_lattice(&env, &small, x0)?;
            let bf = quench_dp::survival_brute_force(&env, &small, x0)?;
            let d = (dp.p - bf.p).abs();
            Ok(check("estimator_oracle", d <= 1e-10, format!("n = {n}: lattice DP {} vs enumeration {} (|diff| {d:.2e})", dp.p, bf.p)))
        } else {
            let grid = quench_dp::survival_grid(&env, &small, x0, 400)?;
            let reps = 20_000;
            let mc = mc::survival_naive_mc(&env, &small, x0, reps, seed)?;
            let walk_only = (mc.log_p - quench_dp::log_xi_factor(&env, &small)).exp();
            let grid_walk = (grid.log_p - quench_dp::log_xi_factor(&env, &small)).exp();
            let se = mc::binomial_stderr(grid_walk, reps).max(1.0 / reps as f64);
            let ok = (walk_only - grid_walk).abs() <= 4.0 * se + 2e-3;
            Ok(check("estimator_oracle", ok, format!("n = {n}: grid {grid_walk} vs naive MC {walk_only} (stderr {se:.2e})")))
        }
    }));

    out.push(attempt("rng_streams", &|| {
        use rand::Rng;
        let a: u64 = stream(seed, Domain::Walk, 3).random();
        let b: u64 = stream(seed, Domain::Walk, 3).random();
        let c: u64 = stream(seed, Domain::Walk, 4).random();
        Ok(check("rng_streams", a == b && a != c, "streams are reproducible and index-separated".into()))
    }));
    out
}

fn verify(ctx: &Ctx) -> anyhow::Result<bool> {
    let spec = ctx.cfg.environment.spec()?;
    let tube = ctx.cfg.tube.template()?;
    let assumptions = spec.verify_assumptions();
    let tests = self_tests(&spec, &tube, ctx.cfg.seed);
    let all = assumptions.all_pass() && tests.iter().all(|t| t.pass);
    ctx.say(format_args!("assumptions H1 {} H2 {} H3 {}", assumptions.h1, assumptions.h2, assumptions.h3));
    for m in &assumptions.messages {
        ctx.say(format_args!("  {m}"));
    }
    for t in &tests {
        ctx.say(format_args!("{} {}: {}", if t.pass { "PASS" } else { "FAIL" }, t.name, t.detail));
    }
    let body = json!({ "assumptions": assumptions, "self_tests": tests, "pass": all });
    let path = ctx.write_json("verify.json", &ctx.envelope("verify", body)?)?;
    ctx.say(format_args!("wrote {}", path.display()));
    Ok(all)
}

fn read_part(dir: &Path, name: &str) -> anyhow::Result<Option<Value>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

fn report(ctx: &Ctx) -> anyhow::Result<()> {
    let mut parts = serde_json::Map::new();
    let mut found = 0;
    for kind in ["simulate", "gamma", "fit", "verify"] {
        let part = read_part(&ctx.out, &format!("{kind}.json"))?;
        if let Some(p) = &part {
            found += 1;
            let h = p.get("config_hash").and_then(Value::as_str).unwrap_or("");
            if h != ctx.hash {
                eprintln!("warning: {kind}.json was produced by config {h}, not {}", ctx.hash);
            }
        }
        parts.insert(kind.to_string(), part.map(|p| p["result"].clone()).unwrap_or(Value::Null));
    }
    if found == 0 {
        bail!("no simulate/gamma/fit/verify outputs in {}", ctx.out.display());
    }
    let path = ctx.write_json("report.json", &ctx.envelope("report", Value::Object(parts))?)?;
    ctx.say(format_args!("wrote {}", path.display()));
    Ok(())
}
