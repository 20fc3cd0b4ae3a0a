//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE` with the top-level keys
//! `params`, `integrator`, `command` and `output`; flags override file
//! values. The fully resolved configuration, in the same shape, is echoed
//! into every output so that it can be fed back with `--config`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or runtime error.

pub mod output;
pub mod plot;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cones::{SetKind, SetSpec};
use crate::eigen_ode::{EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::integrator::{integrate_partial, IntegratorConfig};
use crate::pinch::EstimateVariant;
use crate::verifier::{
    check_estimate_batch, check_estimate_with, check_invariance_with, derivative_batch, scan_inequality_with,
    scan_random, DerivQuantity, InequalityKind, InvarianceOptions, ScanOptions,
};

use output::{envelope, export_trajectory, render, ExportMeta, Format};

/// Environment variable capping the worker thread count (0 = automatic).
pub const THREADS_ENV: &str = "PINCHLAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "pinchlab", version, about = "Reaction ODE laboratory for the 3D Ricci-Bourguignon flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one state and export the trajectory as CSV.
    Simulate(WithCommon<SimulateArgs>),
    /// Grid or random scan of a polynomial sign claim.
    Scan(WithCommon<ScanArgs>),
    /// Near-boundary invariance check of a preserved set.
    VerifySet(WithCommon<VerifySetArgs>),
    /// Check a Hamilton-Ivey type estimate along seeded trajectories.
    VerifyEstimate(WithCommon<EstimateArgs>),
    /// Central-difference check of the Lambda and xi rate formulas.
    DerivCheck(WithCommon<DerivArgs>),
    /// Draw CSV columns as a standalone SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct WithCommon<A: Args> {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    args: A,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    blowup_norm: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Add a wall-clock timestamp to the output envelope.
    #[arg(long)]
    stamp: bool,
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn parse_str<T: FromStr<Err = PinchError>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: PinchError| e.to_string())
}

/// Field-wise `flag.or(file)`.
macro_rules! merge {
    ($a:expr, $b:expr; $($f:ident),*) => {
        Self { $($f: $a.$f.or($b.$f)),* }
    };
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// Initial eigenvalues `lambda,mu,nu` (re-sorted if needed).
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    state: Option<[f64; 3]>,
    #[arg(long, allow_negative_numbers = true)]
    t0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    t_end: Option<f64>,
    /// Interior checkpoints per step in the CSV.
    #[arg(long)]
    refine: Option<usize>,
}

impl SimulateArgs {
    fn merge(self, f: Self) -> Self {
        merge!(self, f; state, t0, t_end, refine)
    }
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScanArgs {
    #[arg(long, value_parser = parse_str::<InequalityKind>)]
    kind: Option<InequalityKind>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Times for the xi-prime time term.
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    /// Random scan with this many states instead of a grid.
    #[arg(long)]
    random: Option<usize>,
    /// Isotropic states added to a random trace-bound scan.
    #[arg(long)]
    isotropic: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ScanArgs {
    fn merge(self, f: Self) -> Self {
        merge!(self, f; kind, resolution, tol, times, random, isotropic, seed)
    }
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct VerifySetArgs {
    #[arg(long, value_parser = parse_str::<SetKind>)]
    set: Option<SetKind>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Near-boundary band at t = 0 (default 100 * tol).
    #[arg(long)]
    band: Option<f64>,
    /// Re-check membership of a different set (observation only).
    #[arg(long, value_parser = parse_str::<SetKind>)]
    recheck: Option<SetKind>,
    #[arg(long)]
    refine: Option<usize>,
}

impl VerifySetArgs {
    fn merge(self, f: Self) -> Self {
        merge!(self, f; set, samples, horizon, seed, tol, band, recheck, refine)
    }
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EstimateArgs {
    #[arg(long, value_parser = parse_str::<EstimateVariant>)]
    variant: Option<EstimateVariant>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Check a single trajectory from this state instead of a seeded batch.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    state: Option<[f64; 3]>,
}

impl EstimateArgs {
    fn merge(self, f: Self) -> Self {
        merge!(self, f; variant, count, seed, horizon, tol, state)
    }
}

#[derive(Args, Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DerivArgs {
    #[arg(long, value_parser = parse_str::<DerivQuantity>)]
    quantity: Option<DerivQuantity>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

impl DerivArgs {
    fn merge(self, f: Self) -> Self {
        merge!(self, f; quantity, count, seed, h, horizon, tol)
    }
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Trajectory CSV to read.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "t")]
    x: String,
    #[arg(long, value_delimiter = ',', default_value = "lambda,mu,nu")]
    columns: Vec<String>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    params: Option<FileParams>,
    integrator: Option<Value>,
    command: Option<serde_json::Map<String, Value>>,
    output: Option<FileOutput>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileParams {
    rho: Option<f64>,
    eta: Option<f64>,
    theta: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileOutput {
    path: Option<PathBuf>,
    format: Option<Format>,
}

fn usage(msg: impl Into<String>) -> PinchError {
    PinchError::InvalidParams(msg.into())
}

fn load_file(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| PinchError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Everything shared by the verification subcommands, fully resolved.
struct Resolved {
    params: FlowParams,
    integrator: IntegratorConfig,
    out: Option<PathBuf>,
    format: Format,
    timestamp: Option<u64>,
}

impl Resolved {
    fn config_json<A: Serialize>(&self, name: &str, args: &A) -> Value {
        let mut output = serde_json::Map::new();
        if let Some(p) = &self.out {
            output.insert("path".into(), json!(p));
        }
        output.insert("format".into(), json!(self.format));
        json!({
            "params": self.params,
            "integrator": self.integrator,
            "command": { name: args },
            "output": output,
        })
    }

    fn emit<R: Serialize>(&self, report: &R, config: &Value) -> Result<()> {
        let env = envelope(report, config, self.timestamp)?;
        let text = render(&env, self.format);
        match &self.out {
            Some(p) => std::fs::write(p, text).map_err(|e| PinchError::io(format!("writing {}", p.display()), e)),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

/// Merges flags over the file for the shared sections and returns the
/// command section of the file parsed as `A`.
fn resolve<A: DeserializeOwned + Default>(
    common: &Common,
    name: &str,
    default_theta: impl FnOnce(f64) -> f64,
) -> Result<(Resolved, A)> {
    let file = load_file(common.config.as_deref())?;
    let fp = file.params.unwrap_or_default();
    let rho = common.rho.or(fp.rho).ok_or_else(|| usage("missing --rho"))?;
    let eta = common.eta.or(fp.eta).unwrap_or(-4.0);
    let theta = common.theta.or(fp.theta).unwrap_or_else(|| default_theta(rho));
    let params = FlowParams::new(rho, eta, theta)?;

    let mut integrator: IntegratorConfig = match file.integrator {
        Some(v) => serde_json::from_value(v).map_err(|e| usage(format!("config integrator: {e}")))?,
        None => IntegratorConfig::default(),
    };
    let c = common;
    integrator.rel_tol = c.rel_tol.unwrap_or(integrator.rel_tol);
    integrator.abs_tol = c.abs_tol.unwrap_or(integrator.abs_tol);
    integrator.max_step = c.max_step.unwrap_or(integrator.max_step);
    integrator.blowup_norm = c.blowup_norm.unwrap_or(integrator.blowup_norm);
    integrator.max_steps = c.max_steps.unwrap_or(integrator.max_steps);
    integrator.validate()?;

    let fo = file.output.unwrap_or_default();
    let cmd: A = match file.command {
        None => A::default(),
        Some(map) => {
            if map.len() != 1 || !map.contains_key(name) {
                let keys: Vec<&String> = map.keys().collect();
                return Err(usage(format!("config command section {keys:?} does not match subcommand '{name}'")));
            }
            let v = map.into_iter().next().expect("one entry").1;
            serde_json::from_value(v).map_err(|e| usage(format!("config command.{name}: {e}")))?
        }
    };
    let timestamp = c.stamp.then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs())
    });
    Ok((
        Resolved {
            params,
            integrator,
            out: c.out.clone().or(fo.path),
            format: c.format.or(fo.format).unwrap_or_default(),
            timestamp,
        },
        cmd,
    ))
}

fn unit_theta(_: f64) -> f64 {
    1.0
}

fn simulate(w: WithCommon<SimulateArgs>) -> Result<bool> {
    let (r, file) = resolve::<SimulateArgs>(&w.common, "simulate", unit_theta)?;
    let mut a = w.args.merge(file);
    a.t0 = Some(a.t0.unwrap_or(0.0));
    a.refine = Some(a.refine.unwrap_or(3));
    let state = a.state.ok_or_else(|| usage("missing --state"))?;
    let t_end = a.t_end.ok_or_else(|| usage("missing --t-end"))?;
    let (s0, _) = EigenTriple::sorted(state)?;
    let traj = integrate_partial(&s0, &r.params, a.t0.unwrap_or(0.0), t_end, &r.integrator)?;
    let meta = ExportMeta {
        config: Some(r.config_json("simulate", &a)),
        seed: None,
        refine: a.refine.unwrap_or(3),
    };
    match &r.out {
        Some(p) => export_trajectory(&traj, &r.params, p, &meta)?,
        None => {
            let stdout = std::io::stdout();
            output::write_trajectory_csv(&traj, &r.params, &meta, stdout.lock())
                .map_err(|e| PinchError::io("writing stdout", e))?;
        }
    }
    Ok(true)
}

fn scan(w: WithCommon<ScanArgs>) -> Result<bool> {
    let kind = w.args.kind;
    let (r, file) = resolve::<ScanArgs>(&w.common, "scan", |rho| {
        // the xi-prime claim is stated for theta = -1/(2 rho)
        if kind == Some(InequalityKind::XiPrime) && rho < 0.0 {
            -1.0 / (2.0 * rho)
        } else {
            1.0
        }
    })?;
    let mut a = w.args.merge(file);
    let kind = a.kind.ok_or_else(|| usage("missing --kind"))?;
    let opts = ScanOptions {
        tol: *a.tol.get_or_insert(1e-12),
        times: a.times.get_or_insert_with(|| vec![0.0]).clone(),
    };
    let report = match a.random {
        Some(count) => {
            let seed = *a.seed.get_or_insert(42);
            let iso = *a.isotropic.get_or_insert(16);
            scan_random(kind, &r.params, count, iso, seed, &opts)?
        }
        None => scan_inequality_with(kind, &r.params, *a.resolution.get_or_insert(200), &opts)?,
    };
    let cfg = r.config_json("scan", &a);
    r.emit(&report, &cfg)?;
    Ok(report.passed())
}

fn verify_set(w: WithCommon<VerifySetArgs>) -> Result<bool> {
    let (r, file) = resolve::<VerifySetArgs>(&w.common, "verify-set", unit_theta)?;
    let mut a = w.args.merge(file);
    let kind = a.set.ok_or_else(|| usage("missing --set"))?;
    let spec = SetSpec::new(kind, r.params)?;
    let tol = *a.tol.get_or_insert(1e-8);
    let opts = InvarianceOptions {
        band: a.band,
        refine: *a.refine.get_or_insert(3),
        recheck: a.recheck,
        ..InvarianceOptions::default()
    };
    let samples = *a.samples.get_or_insert(1000);
    let horizon = *a.horizon.get_or_insert(0.05);
    let seed = *a.seed.get_or_insert(42);
    let report = check_invariance_with(&spec, samples, horizon, seed, &r.integrator, tol, &opts)?;
    let cfg = r.config_json("verify-set", &a);
    r.emit(&report, &cfg)?;
    Ok(report.passed)
}

fn verify_estimate(w: WithCommon<EstimateArgs>) -> Result<bool> {
    let (r, file) = resolve::<EstimateArgs>(&w.common, "verify-estimate", unit_theta)?;
    let mut a = w.args.merge(file);
    let variant = a.variant.ok_or_else(|| usage("missing --variant"))?;
    let tol = *a.tol.get_or_insert(1e-8);
    let horizon = *a.horizon.get_or_insert(10.0);
    if let Some(state) = a.state {
        let (s0, _) = EigenTriple::sorted(state)?;
        let traj = integrate_partial(&s0, &r.params, 0.0, horizon, &r.integrator)?;
        let report = check_estimate_with(&traj, variant, tol, 3, 0)?;
        let cfg = r.config_json("verify-estimate", &a);
        r.emit(&report, &cfg)?;
        return Ok(report.passed);
    }
    let count = *a.count.get_or_insert(100);
    let seed = *a.seed.get_or_insert(42);
    let report = check_estimate_batch(variant, &r.params, count, seed, horizon, &r.integrator, tol)?;
    let cfg = r.config_json("verify-estimate", &a);
    r.emit(&report, &cfg)?;
    Ok(report.passed)
}

fn deriv_check(w: WithCommon<DerivArgs>) -> Result<bool> {
    let (r, file) = resolve::<DerivArgs>(&w.common, "deriv-check", unit_theta)?;
    let mut a = w.args.merge(file);
    let q = a.quantity.ok_or_else(|| usage("missing --quantity"))?;
    let report = derivative_batch(
        q,
        &r.params,
        *a.count.get_or_insert(20),
        *a.seed.get_or_insert(42),
        *a.h.get_or_insert(1e-4),
        *a.horizon.get_or_insert(0.02),
        &r.integrator,
        *a.tol.get_or_insert(1e-6),
    )?;
    let cfg = r.config_json("deriv-check", &a);
    r.emit(&report, &cfg)?;
    Ok(report.passed && report.order_observed)
}

fn plot(a: PlotArgs) -> Result<bool> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| PinchError::io(format!("reading {}", a.input.display()), e))?;
    let table = plot::parse_csv(&text)?;
    let title = a.title.unwrap_or_else(|| a.input.display().to_string());
    let svg = plot::render_svg(&table, &a.x, &a.columns, &title)?;
    std::fs::write(&a.out, svg).map_err(|e| PinchError::io(format!("writing {}", a.out.display()), e))?;
    Ok(true)
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Simulate(w) => simulate(w),
        Command::Scan(w) => scan(w),
        Command::VerifySet(w) => verify_set(w),
        Command::VerifyEstimate(w) => verify_estimate(w),
        Command::DerivCheck(w) => deriv_check(w),
        Command::Plot(a) => plot(a),
    }
}

fn thread_count() -> std::result::Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got '{v}'")),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
