use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{membership, sample_set_with, SamplerConfig, SetKind, SetSpec, PRNG_NAME};
use crate::eigen_ode::EigenTriple;
use crate::error::{PinchError, Result};
use crate::integrator::{integrate_partial, IntegratorConfig, Terminal};

use super::normalized;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceOptions {
    /// Width of the near-boundary band at `t = 0`; `None` means `100 * tol`.
    pub band: Option<f64>,
    /// Interior dense checkpoints per accepted step.
    pub refine: usize,
    /// Set whose membership is re-checked along trajectories. A kind other
    /// than the sampled one makes the run an observation, never a failure.
    pub recheck: Option<SetKind>,
    pub sampler: SamplerConfig,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        Self {
            band: None,
            refine: 3,
            recheck: None,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub spec: SetSpec,
    pub recheck: SetKind,
    pub observation_only: bool,
    pub samples: usize,
    pub horizon: f64,
    pub seed: u64,
    pub prng: String,
    pub tol: f64,
    pub band: f64,
    /// Most negative membership margin, divided by `1 + sup-norm`, over all
    /// checkpoints of all trajectories.
    pub worst_drift: f64,
    pub worst_sample: usize,
    pub worst_time: f64,
    pub worst_state: EigenTriple,
    /// Index of the first sample whose trajectory left the set, if any.
    pub violating_seed: Option<usize>,
    pub violating_state: Option<EigenTriple>,
    pub checkpoints: usize,
    pub blowups: usize,
    pub step_limits: usize,
    pub passed: bool,
}

struct SampleOutcome {
    drift: f64,
    time: f64,
    state: EigenTriple,
    checkpoints: usize,
    terminal: Terminal,
}

fn run_sample(
    recheck: &SetSpec,
    start: &EigenTriple,
    horizon: f64,
    config: &IntegratorConfig,
    refine: usize,
) -> Result<SampleOutcome> {
    let traj = integrate_partial(start, &recheck.params, 0.0, horizon, config)?;
    let mut out = SampleOutcome {
        drift: f64::INFINITY,
        time: 0.0,
        state: *start,
        checkpoints: 0,
        terminal: traj.terminal,
    };
    for t in traj.checkpoints(refine) {
        let s = traj.eval_at(t)?;
        let m = normalized(membership(recheck, &s, t)?.margin, &s);
        out.checkpoints += 1;
        if m < out.drift {
            out.drift = m;
            out.time = t;
            out.state = s;
        }
    }
    Ok(out)
}

/// [`check_invariance_with`] with default options.
pub fn check_invariance(
    spec: &SetSpec,
    samples: usize,
    horizon: f64,
    seed: u64,
    config: &IntegratorConfig,
    tol: f64,
) -> Result<InvarianceReport> {
    check_invariance_with(spec, samples, horizon, seed, config, tol, &InvarianceOptions::default())
}

/// Samples near-boundary members of `spec` at `t = 0`, integrates each to
/// `horizon` (or blow-up) and re-evaluates time-dependent membership at
/// dense checkpoints.
///
/// Margins are divided by `1 + sup-norm` so that drifts from states of very
/// different sizes are comparable.
pub fn check_invariance_with(
    spec: &SetSpec,
    samples: usize,
    horizon: f64,
    seed: u64,
    config: &IntegratorConfig,
    tol: f64,
    opts: &InvarianceOptions,
) -> Result<InvarianceReport> {
    spec.check()?;
    config.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(PinchError::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    if !(tol >= 0.0) {
        return Err(PinchError::InvalidParams(format!("tol must be >= 0, got {tol}")));
    }
    let band = opts.band.unwrap_or(100.0 * tol);
    let recheck_kind = opts.recheck.unwrap_or(spec.kind);
    let recheck = SetSpec::new(recheck_kind, spec.params)?;

    let starts = sample_set_with(spec, 0.0, samples, seed, band, &opts.sampler)?;
    let outcomes: Vec<Result<SampleOutcome>> = starts
        .par_iter()
        .map(|s| run_sample(&recheck, s, horizon, config, opts.refine))
        .collect();

    let mut worst: Option<(usize, SampleOutcome)> = None;
    let mut violating = None;
    let (mut checkpoints, mut blowups, mut step_limits) = (0, 0, 0);
    for (i, o) in outcomes.into_iter().enumerate() {
        let o = o?;
        checkpoints += o.checkpoints;
        match o.terminal {
            Terminal::BlowUp { .. } => blowups += 1,
            Terminal::StepLimit => step_limits += 1,
            Terminal::ReachedEnd => {}
        }
        if violating.is_none() && o.drift < -tol {
            violating = Some((i, starts[i]));
        }
        // strict comparison keeps the lowest index on ties
        if worst.as_ref().is_none_or(|(_, w)| o.drift < w.drift) {
            worst = Some((i, o));
        }
    }
    let (worst_sample, w) = worst.expect("sampler returns at least one state");
    let observation_only = recheck_kind != spec.kind;
    Ok(InvarianceReport {
        spec: *spec,
        recheck: recheck_kind,
        observation_only,
        samples,
        horizon,
        seed,
        prng: PRNG_NAME.to_string(),
        tol,
        band,
        worst_drift: w.drift,
        worst_sample,
        worst_time: w.time,
        worst_state: w.state,
        violating_seed: violating.map(|v| v.0),
        violating_state: violating.map(|v| v.1),
        checkpoints,
        blowups,
        step_limits,
        passed: observation_only || violating.is_none(),
    })
}
