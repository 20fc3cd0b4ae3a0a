//! Trajectory CSV export and report writing.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cones::{membership, SetKind, SetSpec, PRNG_NAME};
use crate::eigen_ode::{EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::integrator::Trajectory;

pub const TOOL: &str = "pinchlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exact CSV header row.
pub const CSV_HEADER: &str = "t,lambda,mu,nu,R,ric_min,margin_X,margin_W,margin_K";

/// Extra metadata written into the `#` block of a trajectory CSV.
#[derive(Debug, Clone, Default)]
pub struct ExportMeta {
    /// Fully resolved configuration echoed verbatim.
    pub config: Option<Value>,
    pub seed: Option<u64>,
    /// Interior dense checkpoints per step.
    pub refine: usize,
}

fn set_margin(kind: SetKind, params: &FlowParams, state: &EigenTriple, t: f64) -> f64 {
    SetSpec::new(kind, *params)
        .and_then(|spec| membership(&spec, state, t))
        .map_or(f64::NAN, |m| m.margin)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn compact<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("metadata is serializable")
}

/// Writes the CSV to any writer; see [`export_trajectory`].
pub fn write_trajectory_csv<W: Write>(
    traj: &Trajectory,
    params: &FlowParams,
    meta: &ExportMeta,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "# tool: {TOOL} {VERSION}")?;
    writeln!(w, "# params: {}", compact(params))?;
    if let Some(cfg) = &meta.config {
        writeln!(w, "# config: {}", compact(cfg))?;
    }
    match meta.seed {
        Some(s) => writeln!(w, "# seed: {s}")?,
        None => writeln!(w, "# seed: none")?,
    }
    writeln!(w, "# terminal: {}", compact(&traj.terminal))?;
    writeln!(w, "# events: {}", compact(&traj.events))?;
    writeln!(w, "# rejected_steps: {}", traj.rejected_steps)?;
    writeln!(w, "# min_gap: {}", num(if traj.is_empty() { 0.0 } else { traj.min_gap() }))?;
    writeln!(w, "{CSV_HEADER}")?;
    for t in traj.checkpoints(meta.refine) {
        let s = traj.eval_at(t).map_err(std::io::Error::other)?;
        let row = [
            t,
            s.lambda(),
            s.mu(),
            s.nu(),
            2.0 * s.trace(),
            s.ricci_min(),
            set_margin(SetKind::X, params, &s, t),
            set_margin(SetKind::W, params, &s, t),
            set_margin(SetKind::K, params, &s, t),
        ];
        let line: Vec<String> = row.iter().map(|v| num(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Writes one CSV row per dense checkpoint with 17 significant digits.
/// Set margins are `NaN` where the set is not defined for `params`.
pub fn export_trajectory(traj: &Trajectory, params: &FlowParams, path: &Path, meta: &ExportMeta) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = std::fs::File::create(path).map_err(|e| PinchError::io(ctx(), e))?;
    let mut w = std::io::BufWriter::new(file);
    write_trajectory_csv(traj, params, meta, &mut w).map_err(|e| PinchError::io(ctx(), e))?;
    w.flush().map_err(|e| PinchError::io(ctx(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Text,
}

/// Wraps a report with tool identity and the resolved configuration.
pub fn envelope<R: Serialize>(report: &R, config: &Value, timestamp: Option<u64>) -> Result<Value> {
    let report = serde_json::to_value(report).map_err(|e| PinchError::io("serializing report", e))?;
    let mut out = Map::new();
    out.insert("tool".into(), json!(TOOL));
    out.insert("version".into(), json!(VERSION));
    out.insert("prng".into(), json!(PRNG_NAME));
    if let Some(ts) = timestamp {
        out.insert("timestamp".into(), json!(ts));
    }
    out.insert("config".into(), config.clone());
    out.insert("report".into(), report);
    Ok(Value::Object(out))
}

fn scalar_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Array(a) if a.iter().any(Value::is_object) => format!("[{} entries]", a.len()),
        other => other.to_string(),
    }
}

/// Human-readable `key: value` lines; report fields come last, one per line.
pub fn render_text(env: &Value) -> String {
    let mut out = String::new();
    let Value::Object(map) = env else {
        return env.to_string();
    };
    for (k, v) in map {
        if k == "report" {
            continue;
        }
        out.push_str(&format!("{k}: {}\n", scalar_text(v)));
    }
    if let Some(Value::Object(r)) = map.get("report") {
        for (k, v) in r {
            out.push_str(&format!("{k}: {}\n", scalar_text(v)));
        }
    }
    out
}

/// Renders an envelope in the chosen format.
pub fn render(env: &Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(env).expect("values serialize");
            s.push('\n');
            s
        }
        Format::Text => render_text(env),
    }
}

/// Writes `report` wrapped in an [`envelope`] to `path`.
pub fn write_report<R: Serialize>(
    report: &R,
    config: &Value,
    path: &Path,
    format: Format,
    timestamp: Option<u64>,
) -> Result<()> {
    let env = envelope(report, config, timestamp)?;
    std::fs::write(path, render(&env, format)).map_err(|e| PinchError::io(format!("writing {}", path.display()), e))
}
