//! Adaptive integration of the eigenvalue reaction ODE.
//!
//! The method is the Dormand-Prince 5(4) pair (FSAL, seven stages) with the
//! PI step-size controller and the fourth-order continuous extension of
//! Hairer, Norsett and Wanner. Trigger crossings are located on the dense
//! output by bisection.

use serde::{Deserialize, Serialize};

use crate::eigen_ode::{reaction, EigenTriple, FlowParams};
use crate::error::{PinchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest step magnitude; `inf` means unbounded.
    #[serde(with = "crate::floatser")]
    pub max_step: f64,
    /// A state whose sup-norm exceeds this is treated as blown up.
    pub blowup_norm: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            blowup_norm: 1e12,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(PinchError::InvalidParams("tolerances must be positive".into()));
        }
        if !(self.blowup_norm > 0.0) {
            return Err(PinchError::InvalidParams("blowup_norm must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(PinchError::InvalidParams("max_step must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(PinchError::InvalidParams("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// How an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Terminal {
    ReachedEnd,
    /// `t_est` is the last accepted time. `norm_exceeded` and `step_collapsed`
    /// tell which detector fired.
    BlowUp {
        t_est: f64,
        norm_exceeded: bool,
        step_collapsed: bool,
    },
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// `nu` crosses `-1 / (1 + 2 (1 + eta rho) t)`.
    SectionalTrigger,
    /// `mu + nu` crosses `-1 / (1 - 4 rho t)`.
    RicciTrigger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub t: f64,
    /// `true` when the trigger becomes active (the quantity drops below the
    /// threshold).
    pub entering: bool,
}

/// Continuous extension coefficients of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseStep {
    pub r: [[f64; 3]; 5],
}

impl DenseStep {
    fn eval(&self, theta: f64) -> [f64; 3] {
        let th1 = 1.0 - theta;
        let r = &self.r;
        std::array::from_fn(|i| r[0][i] + theta * (r[1][i] + th1 * (r[2][i] + theta * (r[3][i] + th1 * r[4][i]))))
    }
}

/// Dense numerical solution over `[times[0], times[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub params: FlowParams,
    pub times: Vec<f64>,
    /// Raw `(lambda, mu, nu)` nodes, not re-sorted.
    pub nodes: Vec<[f64; 3]>,
    pub dense: Vec<DenseStep>,
    pub terminal: Terminal,
    pub events: Vec<Event>,
    pub rejected_steps: usize,
}

impl Trajectory {
    fn empty(params: FlowParams) -> Self {
        Self {
            params,
            times: Vec::new(),
            nodes: Vec::new(),
            dense: Vec::new(),
            terminal: Terminal::ReachedEnd,
            events: Vec::new(),
            rejected_steps: 0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn t_start(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn t_last(&self) -> Option<f64> {
        self.times.last().copied()
    }

    /// Stored nodes as ordered triples. Nodes whose order drifted by rounding
    /// are re-sorted here; [`Trajectory::min_gap`] exposes the drift.
    pub fn states(&self) -> Vec<EigenTriple> {
        self.nodes.iter().map(|y| to_triple(*y)).collect()
    }

    pub fn state(&self, i: usize) -> EigenTriple {
        to_triple(self.nodes[i])
    }

    /// Smallest of `lambda - mu` and `mu - nu` over nodes, scaled by
    /// `1 + sup-norm`; negative values reveal ordering drift.
    pub fn min_gap(&self) -> f64 {
        self.nodes
            .iter()
            .map(|y| {
                let norm = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                ((y[0] - y[1]).min(y[1] - y[2])) / norm
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Raw dense-output value at `t`; stored nodes are returned unchanged.
    pub fn eval_raw(&self, t: f64) -> Result<[f64; 3]> {
        let (start, end) = match (self.times.first(), self.times.last()) {
            (Some(&a), Some(&b)) => (a.min(b), a.max(b)),
            _ => return Err(PinchError::OutOfRange { t, start: f64::NAN, end: f64::NAN }),
        };
        if !(t >= start && t <= end) {
            return Err(PinchError::OutOfRange { t, start, end });
        }
        let forward = self.times[self.times.len() - 1] >= self.times[0];
        let idx = if forward {
            self.times.partition_point(|&x| x < t)
        } else {
            self.times.partition_point(|&x| x > t)
        };
        if idx < self.times.len() && self.times[idx] == t {
            return Ok(self.nodes[idx]);
        }
        // t lies strictly inside step idx-1 -> idx
        let i = idx - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        Ok(self.dense[i].eval((t - t0) / (t1 - t0)))
    }

    pub fn eval_at(&self, t: f64) -> Result<EigenTriple> {
        Ok(to_triple(self.eval_raw(t)?))
    }

    /// Checkpoint times: every node plus `refine` equally spaced interior
    /// points per step.
    pub fn checkpoints(&self, refine: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.times.len() * (refine + 1));
        for (i, &t) in self.times.iter().enumerate() {
            out.push(t);
            if i + 1 < self.times.len() && refine > 0 {
                let t1 = self.times[i + 1];
                for k in 1..=refine {
                    let s = k as f64 / (refine + 1) as f64;
                    out.push(t + s * (t1 - t));
                }
            }
        }
        out
    }
}

fn to_triple(y: [f64; 3]) -> EigenTriple {
    EigenTriple::sorted(y).expect("trajectory nodes are finite").0
}

fn sup_norm(y: &[f64; 3]) -> f64 {
    y.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;
const EXPO: f64 = 0.2 - BETA * 0.75;

fn comb(y: &[f64; 3], h: f64, terms: &[(f64, &[f64; 3])]) -> [f64; 3] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(a, k)| a * k[i]).sum::<f64>())
}

struct Step {
    y1: [f64; 3],
    k7: [f64; 3],
    err: f64,
    dense: DenseStep,
}

fn dopri_step(y: &[f64; 3], k1: &[f64; 3], h: f64, rho: f64, cfg: &IntegratorConfig) -> Step {
    let f = |v: [f64; 3]| reaction(v, rho);
    let k2 = f(comb(y, h, &[(A21, k1)]));
    let k3 = f(comb(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y1 = comb(y, h, &[(A71, k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
    let k7 = f(y1);

    let mut acc = 0.0;
    for i in 0..3 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = cfg.abs_tol + cfg.rel_tol * y[i].abs().max(y1[i].abs());
        acc += (e / sc) * (e / sc);
    }
    let err = (acc / 3.0).sqrt();

    let mut r = [[0.0; 3]; 5];
    for i in 0..3 {
        let ydiff = y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        r[0][i] = y[i];
        r[1][i] = ydiff;
        r[2][i] = bspl;
        r[3][i] = ydiff - h * k7[i] - bspl;
        r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    Step { y1, k7, err, dense: DenseStep { r } }
}

/// Starting step guess (Hairer's `hinit`).
fn initial_step(y: &[f64; 3], f0: &[f64; 3], rho: f64, dir: f64, cfg: &IntegratorConfig) -> f64 {
    let sk = |i: usize| cfg.abs_tol + cfg.rel_tol * y[i].abs();
    let norm = |v: &[f64; 3]| ((0..3).map(|i| (v[i] / sk(i)).powi(2)).sum::<f64>() / 3.0).sqrt();
    let (dnf, dny) = (norm(f0), norm(y));
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { 0.01 * dny / dnf };
    h = h.min(cfg.max_step);
    let y1 = comb(y, dir * h, &[(1.0, f0)]);
    let f1 = reaction(y1, rho);
    let diff: [f64; 3] = std::array::from_fn(|i| f1[i] - f0[i]);
    let der2 = norm(&diff) / h;
    let der12 = dnf.max(der2);
    let h1 = if der12 <= 1e-15 {
        (1e-6f64).max(h * 1e-3)
    } else {
        (0.01 / der12).powf(0.2)
    };
    h.min(100.0 * h).min(h1).min(cfg.max_step)
}

fn trigger_values(params: &FlowParams, t: f64, y: &[f64; 3]) -> [Option<f64>; 2] {
    let sectional = (params.eta_factor() > 0.0).then(|| {
        let s = params.sectional_time_factor(t);
        y[2] + 1.0 / s
    });
    let ricci = (params.rho < 0.0).then(|| {
        let s = params.ricci_time_factor(t);
        y[1] + y[2] + 1.0 / s
    });
    [sectional, ricci]
}

const EVENT_KINDS: [EventKind; 2] = [EventKind::SectionalTrigger, EventKind::RicciTrigger];

fn locate_events(params: &FlowParams, t0: f64, t1: f64, y0: &[f64; 3], y1: &[f64; 3], dense: &DenseStep, out: &mut Vec<Event>) {
    let g0 = trigger_values(params, t0, y0);
    let g1 = trigger_values(params, t1, y1);
    for k in 0..2 {
        let (Some(a), Some(b)) = (g0[k], g1[k]) else { continue };
        if (a > 0.0) == (b > 0.0) {
            continue;
        }
        // bisection on theta in [0, 1]; stop once |dt| < 1e-10
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let ga = a;
        while (hi - lo) * (t1 - t0).abs() > 1e-10 {
            let mid = 0.5 * (lo + hi);
            let tm = t0 + mid * (t1 - t0);
            let gm = trigger_values(params, tm, &dense.eval(mid))[k].unwrap_or(0.0);
            if (gm > 0.0) == (ga > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
            if (hi - lo).abs() < f64::EPSILON {
                break;
            }
        }
        let theta = 0.5 * (lo + hi);
        out.push(Event {
            kind: EVENT_KINDS[k],
            t: t0 + theta * (t1 - t0),
            entering: a > 0.0,
        });
    }
    out.sort_by(|x, y| x.t.total_cmp(&y.t));
}

/// Integrates from `t0` to `t_end`; a step-limit stop is an error.
///
/// `t_end < t0` integrates backwards in time. `t_end == t0` yields an empty
/// trajectory.
pub fn integrate(
    state0: &EigenTriple,
    params: &FlowParams,
    t0: f64,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    let traj = integrate_partial(state0, params, t0, t_end, config)?;
    if traj.terminal == Terminal::StepLimit {
        return Err(PinchError::StepLimit {
            t: traj.t_last().unwrap_or(t0),
            max_steps: config.max_steps,
        });
    }
    Ok(traj)
}

/// As [`integrate`], but a step-limit stop returns the partial trajectory
/// with [`Terminal::StepLimit`].
pub fn integrate_partial(
    state0: &EigenTriple,
    params: &FlowParams,
    t0: f64,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t0.is_finite() && t_end.is_finite()) {
        return Err(PinchError::InvalidParams("integration bounds must be finite".into()));
    }
    let mut traj = Trajectory::empty(*params);
    if t_end == t0 {
        return Ok(traj);
    }
    let rho = params.rho;
    let dir = if t_end > t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();

    let mut t = t0;
    let mut y = state0.to_array();
    let mut k1 = reaction(y, rho);
    traj.times.push(t);
    traj.nodes.push(y);

    if sup_norm(&y) > config.blowup_norm {
        traj.terminal = Terminal::BlowUp { t_est: t, norm_exceeded: true, step_collapsed: false };
        return Ok(traj);
    }

    let mut h = initial_step(&y, &k1, rho, dir, config).min(span);
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;
    let mut steps = 0usize;

    loop {
        if steps >= config.max_steps {
            traj.terminal = Terminal::StepLimit;
            return Ok(traj);
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        // step collapse: the step no longer changes t
        if t + dir * h == t {
            traj.terminal = Terminal::BlowUp {
                t_est: t,
                norm_exceeded: sup_norm(&y) > config.blowup_norm,
                step_collapsed: true,
            };
            return Ok(traj);
        }
        steps += 1;
        let step = dopri_step(&y, &k1, dir * h, rho, config);
        let finite = step.y1.iter().all(|v| v.is_finite()) && step.err.is_finite();

        if finite && step.err <= 1.0 {
            let fac11 = step.err.powf(EXPO);
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = step.err.max(1e-4);

            let t_new = if last { t_end } else { t + dir * h };
            locate_events(params, t, t_new, &y, &step.y1, &step.dense, &mut traj.events);
            t = t_new;
            y = step.y1;
            k1 = step.k7;
            traj.times.push(t);
            traj.nodes.push(y);
            traj.dense.push(step.dense);

            if sup_norm(&y) > config.blowup_norm {
                traj.terminal = Terminal::BlowUp { t_est: t, norm_exceeded: true, step_collapsed: false };
                return Ok(traj);
            }
            if last {
                traj.terminal = Terminal::ReachedEnd;
                return Ok(traj);
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new.min(config.max_step);
        } else {
            traj.rejected_steps += 1;
            let shrink = if finite {
                (step.err.powf(EXPO) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                10.0
            };
            h /= shrink.max(1.0);
            last_rejected = true;
        }
    }
}

/// [`Trajectory::eval_at`] as a free function.
pub fn eval_at(traj: &Trajectory, t: f64) -> Result<EigenTriple> {
    traj.eval_at(t)
}
