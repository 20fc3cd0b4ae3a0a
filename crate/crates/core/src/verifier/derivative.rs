use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{shard_seed, PRNG_NAME};
use crate::eigen_ode::{reaction, EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::integrator::{integrate_partial, IntegratorConfig, Trajectory};
use crate::pinch::{lambda_pinch, lambda_rate, xi_pinch, xi_rate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivQuantity {
    /// Lambda, compared against `2 J / (mu + nu)^2`.
    Lambda,
    /// xi, compared against its exact rate.
    Xi,
}

impl DerivQuantity {
    pub fn name(&self) -> &'static str {
        match self {
            DerivQuantity::Lambda => "lambda",
            DerivQuantity::Xi => "xi",
        }
    }

    fn value(&self, y: [f64; 3], p: &FlowParams, t: f64) -> Result<f64> {
        let s = EigenTriple::sorted(y)?.0;
        match self {
            DerivQuantity::Lambda => lambda_pinch(&s, p),
            DerivQuantity::Xi => xi_pinch(&s, p, t),
        }
    }

    fn rate(&self, y: [f64; 3], p: &FlowParams, t: f64) -> Result<f64> {
        let s = EigenTriple::sorted(y)?.0;
        match self {
            DerivQuantity::Lambda => lambda_rate(&s, p),
            DerivQuantity::Xi => xi_rate(&s, p, t),
        }
    }
}

impl std::str::FromStr for DerivQuantity {
    type Err = PinchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" | "Lambda" => Ok(DerivQuantity::Lambda),
            "xi" | "Xi" => Ok(DerivQuantity::Xi),
            _ => Err(PinchError::InvalidParams(format!("unknown quantity '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub quantity: DerivQuantity,
    pub params: FlowParams,
    pub h: f64,
    pub times: usize,
    /// Largest `|central difference - closed form|` at step `h`.
    pub max_discrepancy: f64,
    /// Same at step `h / 2`.
    pub max_discrepancy_half: f64,
    /// `max_discrepancy / max_discrepancy_half`; about 4 for second order.
    #[serde(with = "crate::floatser")]
    pub ratio: f64,
    pub worst_time: f64,
}

/// Classical RK4 from `(t, y)` to `t + dt` in `n` substeps.
fn rk4(mut y: [f64; 3], dt: f64, n: usize, rho: f64) -> [f64; 3] {
    let h = dt / n as f64;
    let add = |y: [f64; 3], k: [f64; 3], c: f64| -> [f64; 3] { std::array::from_fn(|i| y[i] + c * k[i]) };
    for _ in 0..n {
        let k1 = reaction(y, rho);
        let k2 = reaction(add(y, k1, h / 2.0), rho);
        let k3 = reaction(add(y, k2, h / 2.0), rho);
        let k4 = reaction(add(y, k3, h), rho);
        y = std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    y
}

const MAX_TIMES: usize = 32;
const SUBSTEPS: usize = 4;

fn central(q: DerivQuantity, p: &FlowParams, y: [f64; 3], t: f64, h: f64) -> Result<f64> {
    let plus = q.value(rk4(y, h, SUBSTEPS, p.rho), p, t + h)?;
    let minus = q.value(rk4(y, -h, SUBSTEPS, p.rho), p, t - h)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Compares the central difference of `quantity` with its closed-form rate
/// at up to 32 evenly spaced times of `traj`.
///
/// The neighbours `t +- h` are obtained by propagating the dense-output
/// state at `t` with a few fixed RK4 substeps, so the difference measures
/// the derivative along the exact flow through that state rather than
/// interpolation error.
pub fn derivative_consistency(traj: &Trajectory, quantity: DerivQuantity, h: f64) -> Result<DerivativeReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(PinchError::InvalidParams(format!("h must be positive, got {h}")));
    }
    let (Some(t0), Some(t1)) = (traj.t_start(), traj.t_last()) else {
        return Err(PinchError::InvalidParams("empty trajectory".into()));
    };
    let p = traj.params;
    let n = MAX_TIMES.min(traj.len().max(1) * 4);
    let mut worst = (0.0f64, 0.0f64, t0);
    for k in 0..n {
        let t = t0 + (k as f64 + 0.5) / n as f64 * (t1 - t0);
        if quantity == DerivQuantity::Xi && t - h < 0.0 {
            return Err(PinchError::Domain(format!("xi window [{}, {}] reaches t < 0", t - h, t + h)));
        }
        let y = traj.eval_raw(t)?;
        let exact = quantity.rate(y, &p, t)?;
        let d1 = (central(quantity, &p, y, t, h)? - exact).abs();
        let d2 = (central(quantity, &p, y, t, h / 2.0)? - exact).abs();
        if d1 > worst.0 {
            worst = (d1, d2, t);
        }
        worst.1 = worst.1.max(d2);
    }
    Ok(DerivativeReport {
        quantity,
        params: p,
        h,
        times: n,
        max_discrepancy: worst.0,
        max_discrepancy_half: worst.1,
        ratio: worst.0 / worst.1,
        worst_time: worst.2,
    })
}

/// Seeded initial states inside the quantity's domain: `mu + nu` in
/// `[-2, -1]` for Lambda, `nu` in `[-2, -1]` for xi, other eigenvalues of
/// order one. The `h^2` term of the central difference grows roughly with
/// the cube of the state size, so the sizes are kept moderate.
pub fn sample_derivative_states(quantity: DerivQuantity, count: usize, seed: u64) -> Result<Vec<EigenTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, 0));
    (0..count)
        .map(|_| match quantity {
            DerivQuantity::Lambda => {
                let sum = rng.random_range(-2.0..=-1.0);
                let u = rng.random_range(0.0..=0.5);
                let (mu, nu) = (sum / 2.0 + u, sum / 2.0 - u);
                let lambda = rng.random_range(mu..=mu + 1.5);
                EigenTriple::new(lambda, mu, nu)
            }
            DerivQuantity::Xi => {
                let nu = rng.random_range(-2.0..=-1.0);
                let mu = rng.random_range(nu..=0.5);
                let lambda = rng.random_range(mu..=1.0);
                EigenTriple::new(lambda, mu, nu)
            }
        })
        .collect()
}

fn in_domain(q: DerivQuantity, s: &EigenTriple) -> bool {
    match q {
        DerivQuantity::Lambda => s.ricci_min() < 0.0,
        DerivQuantity::Xi => s.nu() < 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBatchReport {
    pub quantity: DerivQuantity,
    pub params: FlowParams,
    pub count: usize,
    pub seed: u64,
    pub prng: String,
    pub h: f64,
    pub horizon: f64,
    pub tol: f64,
    pub max_discrepancy: f64,
    pub max_discrepancy_half: f64,
    /// Smallest per-trajectory ratio among trajectories whose discrepancy at
    /// `h` is above `floor`.
    pub min_ratio: Option<f64>,
    /// Discrepancies below this are treated as rounding noise when judging
    /// the convergence order.
    pub floor: f64,
    pub order_observed: bool,
    pub reports: Vec<DerivativeReport>,
    pub passed: bool,
}

/// Integrates `count` seeded trajectories for `horizon` (shortened to 90% of
/// the first checkpoint leaving the domain) and runs
/// [`derivative_consistency`] on each.
#[allow(clippy::too_many_arguments)]
pub fn derivative_batch(
    quantity: DerivQuantity,
    params: &FlowParams,
    count: usize,
    seed: u64,
    h: f64,
    horizon: f64,
    config: &IntegratorConfig,
    tol: f64,
) -> Result<DerivativeBatchReport> {
    if count == 0 {
        return Err(PinchError::InvalidParams("count must be positive".into()));
    }
    if quantity == DerivQuantity::Xi {
        params.require_k_admissible()?;
    }
    let states = sample_derivative_states(quantity, count, seed)?;
    // xi windows must not reach negative times
    let t0 = if quantity == DerivQuantity::Xi { 2.0 * h } else { 0.0 };
    let reports = states
        .par_iter()
        .map(|s| {
            let full = integrate_partial(s, params, t0, t0 + horizon, config)?;
            let mut end = full.t_last().unwrap_or(t0);
            for t in full.checkpoints(3) {
                if !in_domain(quantity, &full.eval_at(t)?) {
                    end = t0 + 0.9 * (t - t0);
                    break;
                }
            }
            let traj = if end < full.t_last().unwrap_or(t0) {
                integrate_partial(s, params, t0, end, config)?
            } else {
                full
            };
            derivative_consistency(&traj, quantity, h)
        })
        .collect::<Result<Vec<_>>>()?;

    let max_d = reports.iter().map(|r| r.max_discrepancy).fold(0.0, f64::max);
    let max_half = reports.iter().map(|r| r.max_discrepancy_half).fold(0.0, f64::max);
    let floor = 1e-9;
    let min_ratio = reports
        .iter()
        .filter(|r| r.max_discrepancy > floor)
        .map(|r| r.ratio)
        .reduce(f64::min);
    Ok(DerivativeBatchReport {
        quantity,
        params: *params,
        count,
        seed,
        prng: PRNG_NAME.to_string(),
        h,
        horizon,
        tol,
        max_discrepancy: max_d,
        max_discrepancy_half: max_half,
        min_ratio,
        floor,
        order_observed: min_ratio.is_some_and(|r| r >= 3.0),
        passed: max_d <= tol,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::integrate;

    #[test]
    fn rk4_matches_isotropic_closed_form() {
        let p = FlowParams::with_rho(0.0).unwrap();
        let y = rk4([1.0; 3], 1e-3, 4, 0.0);
        let c = crate::eigen_ode::isotropic_solution(1.0, &p, 1e-3).unwrap();
        assert!((y[0] - c).abs() < 1e-12);
    }

    #[test]
    fn lambda_identity_second_order() {
        let p = FlowParams::with_rho(-0.1).unwrap();
        let s = EigenTriple::new(1.0, -1.0, -2.0).unwrap();
        let traj = integrate(&s, &p, 0.0, 0.01, &IntegratorConfig::default()).unwrap();
        let r = derivative_consistency(&traj, DerivQuantity::Lambda, 1e-4).unwrap();
        assert!(r.max_discrepancy <= 1e-6, "{}", r.max_discrepancy);
        assert!(r.ratio > 3.0, "ratio {}", r.ratio);
    }

    #[test]
    fn xi_isotropic_negative() {
        let p = FlowParams::new(0.0, -4.0, 1.0).unwrap();
        let s = EigenTriple::isotropic(-1.0).unwrap();
        let traj = integrate(&s, &p, 0.01, 0.05, &IntegratorConfig::default()).unwrap();
        let r = derivative_consistency(&traj, DerivQuantity::Xi, 1e-4).unwrap();
        assert!(r.max_discrepancy <= 1e-6, "{}", r.max_discrepancy);
    }

    #[test]
    fn domain_violation_is_an_error() {
        let p = FlowParams::with_rho(-1.0).unwrap();
        let s = EigenTriple::new(1.0, 1.0, 0.5).unwrap();
        let traj = integrate(&s, &p, 0.0, 0.01, &IntegratorConfig::default()).unwrap();
        assert!(matches!(
            derivative_consistency(&traj, DerivQuantity::Lambda, 1e-4),
            Err(PinchError::Domain(_))
        ));
    }

    #[test]
    fn batch_deterministic_and_passing() {
        let p = FlowParams::with_rho(-0.1).unwrap();
        let cfg = IntegratorConfig::default();
        let a = derivative_batch(DerivQuantity::Lambda, &p, 4, 1, 1e-4, 0.02, &cfg, 1e-6).unwrap();
        let b = derivative_batch(DerivQuantity::Lambda, &p, 4, 1, 1e-4, 0.02, &cfg, 1e-6).unwrap();
        assert_eq!(a, b);
        assert!(a.passed, "{}", a.max_discrepancy);
    }
}
