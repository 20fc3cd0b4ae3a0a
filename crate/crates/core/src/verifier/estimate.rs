use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{shard_seed, PRNG_NAME};
use crate::eigen_ode::{EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::integrator::{integrate_partial, IntegratorConfig, Terminal, Trajectory};
use crate::pinch::{estimate_rhs, EstimateVariant};

use super::normalized;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub variant: EstimateVariant,
    pub params: FlowParams,
    pub trajectory_id: usize,
    pub initial_state: EigenTriple,
    pub tol: f64,
    /// Smallest `(R - estimate_rhs) / (1 + sup-norm)` over checkpoints where
    /// the trigger is active; `inf` if it never is.
    #[serde(with = "crate::floatser")]
    pub worst_slack: f64,
    #[serde(with = "crate::floatser")]
    pub worst_time: f64,
    /// Closed time intervals (between checkpoints) on which the trigger
    /// quantity was negative.
    pub trigger_times: Vec<[f64; 2]>,
    pub checkpoints: usize,
    pub t_end: f64,
    pub terminal: Terminal,
    pub passed: bool,
}

/// Checks the variant's hypothesis on an initial state.
///
/// - `NegRhoScalar`: `R >= 0` and the estimate itself holds at `t = 0`
///   (the initial state lies in the set the proof propagates).
/// - `NegRhoSectional`: `mu + nu >= 0` and `nu >= -1`.
/// - `NonnegRho`: `nu >= -1`.
pub fn check_hypothesis(variant: EstimateVariant, state: &EigenTriple, params: &FlowParams) -> Result<()> {
    variant.check_params(params)?;
    let fail = |what: &str| {
        Err(PinchError::HypothesisViolated(format!(
            "{} at {:?}: {what}",
            variant.name(),
            state.to_array()
        )))
    };
    match variant {
        EstimateVariant::NegRhoScalar => {
            if state.trace() < 0.0 {
                return fail("scalar curvature is negative");
            }
            let a = state.ricci_min();
            if a < 0.0 && 2.0 * state.trace() < estimate_rhs(variant, a, params, 0.0)? {
                return fail("estimate fails at t = 0");
            }
        }
        EstimateVariant::NegRhoSectional => {
            if state.ricci_min() < 0.0 {
                return fail("Ricci curvature is negative");
            }
            if state.nu() < -1.0 {
                return fail("nu < -1");
            }
        }
        EstimateVariant::NonnegRho => {
            if state.nu() < -1.0 {
                return fail("nu < -1");
            }
        }
    }
    Ok(())
}

/// [`check_estimate_with`] at three interior checkpoints per step.
pub fn check_estimate(traj: &Trajectory, variant: EstimateVariant, tol: f64) -> Result<EstimateReport> {
    check_estimate_with(traj, variant, tol, 3, 0)
}

/// Evaluates `R - estimate_rhs` at dense checkpoints of a trajectory
/// starting at `t = 0` wherever the trigger quantity is negative.
pub fn check_estimate_with(
    traj: &Trajectory,
    variant: EstimateVariant,
    tol: f64,
    refine: usize,
    trajectory_id: usize,
) -> Result<EstimateReport> {
    let params = traj.params;
    let Some(t0) = traj.t_start() else {
        return Err(PinchError::InvalidParams("empty trajectory".into()));
    };
    if t0 != 0.0 {
        return Err(PinchError::InvalidParams(format!("trajectory must start at t = 0, got {t0}")));
    }
    let initial = traj.state(0);
    check_hypothesis(variant, &initial, &params)?;

    let mut worst = f64::INFINITY;
    let mut worst_time = f64::NAN;
    let mut intervals: Vec<[f64; 2]> = Vec::new();
    let mut open: Option<[f64; 2]> = None;
    let mut count = 0;
    for t in traj.checkpoints(refine) {
        let s = traj.eval_at(t)?;
        count += 1;
        let a = variant.smallest(&s);
        if a < 0.0 {
            let slack = normalized(2.0 * s.trace() - estimate_rhs(variant, a, &params, t)?, &s);
            if slack < worst {
                worst = slack;
                worst_time = t;
            }
            open = Some(match open {
                Some([start, _]) => [start, t],
                None => [t, t],
            });
        } else if let Some(iv) = open.take() {
            intervals.push(iv);
        }
    }
    intervals.extend(open);
    Ok(EstimateReport {
        variant,
        params,
        trajectory_id,
        initial_state: initial,
        tol,
        worst_slack: worst,
        worst_time,
        trigger_times: intervals,
        checkpoints: count,
        t_end: traj.t_last().unwrap_or(0.0),
        terminal: traj.terminal,
        passed: worst >= -tol,
    })
}

/// Seeded initial states satisfying the variant's hypothesis.
///
/// `NegRhoScalar`: `|mu + nu|` log-uniform in `[0.1, 4000]`, `lambda` at
/// least the amount making `R >= 0` and the `t = 0` estimate hold, plus a
/// random excess (zero for every fourth state, which then sits on the
/// boundary). The other variants draw `nu` in `[-1, 0)` and the remaining
/// eigenvalues up to 10.
pub fn sample_hypothesis_states(
    variant: EstimateVariant,
    params: &FlowParams,
    count: usize,
    seed: u64,
) -> Result<Vec<EigenTriple>> {
    variant.check_params(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, 0));
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = match variant {
            EstimateVariant::NegRhoScalar => {
                let a = rng.random_range(0.1f64.ln()..4000f64.ln()).exp();
                let u = rng.random_range(0.0..=a / 2.0);
                let (mu, nu) = (-a / 2.0 + u, -a / 2.0 - u);
                let k = 1.0 - 2.0 * params.rho;
                let log_bound = if a >= 1.0 { a * (a.ln() - 2.0 * k) / (2.0 * k) } else { 0.0 };
                // relative nudge keeps rounding from putting boundary states outside
                let floor = (a + log_bound.max(0.0)) * (1.0 + 1e-12);
                let excess = if i % 4 == 0 { 0.0 } else { rng.random_range(0.0..=a) };
                EigenTriple::new(floor + excess, mu, nu)?
            }
            EstimateVariant::NegRhoSectional => {
                let nu = -rng.random_range(0.0..1.0f64).max(1e-3);
                let mu = rng.random_range(-nu..=10.0);
                let lambda = rng.random_range(mu..=10.0);
                EigenTriple::new(lambda, mu, nu)?
            }
            EstimateVariant::NonnegRho => {
                let nu = -rng.random_range(0.0..1.0f64).max(1e-3);
                let mu = rng.random_range(nu..=10.0);
                let lambda = rng.random_range(mu..=10.0);
                EigenTriple::new(lambda, mu, nu)?
            }
        };
        check_hypothesis(variant, &s, params)?;
        out.push(s);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateBatchReport {
    pub variant: EstimateVariant,
    pub params: FlowParams,
    pub count: usize,
    pub seed: u64,
    pub prng: String,
    pub horizon: f64,
    pub tol: f64,
    #[serde(with = "crate::floatser")]
    pub worst_slack: f64,
    pub worst_trajectory: Option<usize>,
    /// Trajectories stopped by the blow-up detector before the horizon.
    pub blowups: usize,
    pub step_limits: usize,
    pub triggered: usize,
    pub reports: Vec<EstimateReport>,
    pub passed: bool,
}

/// Runs `count` seeded trajectories from hypothesis states until blow-up or
/// `horizon` and checks the estimate along each.
pub fn check_estimate_batch(
    variant: EstimateVariant,
    params: &FlowParams,
    count: usize,
    seed: u64,
    horizon: f64,
    config: &IntegratorConfig,
    tol: f64,
) -> Result<EstimateBatchReport> {
    if count == 0 {
        return Err(PinchError::InvalidParams("count must be positive".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(PinchError::InvalidParams(format!("horizon must be positive, got {horizon}")));
    }
    let starts = sample_hypothesis_states(variant, params, count, seed)?;
    let reports = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let traj = integrate_partial(s, params, 0.0, horizon, config)?;
            check_estimate_with(&traj, variant, tol, 3, i)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut worst = f64::INFINITY;
    let mut worst_trajectory = None;
    for r in &reports {
        if r.worst_slack < worst {
            worst = r.worst_slack;
            worst_trajectory = Some(r.trajectory_id);
        }
    }
    let count_terminal = |f: fn(&Terminal) -> bool| reports.iter().filter(|r| f(&r.terminal)).count();
    Ok(EstimateBatchReport {
        variant,
        params: *params,
        count,
        seed,
        prng: PRNG_NAME.to_string(),
        horizon,
        tol,
        worst_slack: worst,
        worst_trajectory,
        blowups: count_terminal(|t| matches!(t, Terminal::BlowUp { .. })),
        step_limits: count_terminal(|t| matches!(t, Terminal::StepLimit)),
        triggered: reports.iter().filter(|r| !r.trigger_times.is_empty()).count(),
        passed: reports.iter().all(|r| r.passed),
        reports,
    })
}
