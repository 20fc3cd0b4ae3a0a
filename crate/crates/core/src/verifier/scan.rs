use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{shard_seed, PRNG_NAME};
use crate::eigen_ode::{trace_excess, EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::pinch::{i_polynomial, j_polynomial, xi_numerator_at};

use super::better;

/// A polynomial sign claim together with the region it is claimed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InequalityKind {
    /// `J >= 0` on `{trace <= 0, mu + nu < 0}`, `rho < 0`.
    #[serde(rename = "j-neg-trace")]
    JCaseNegTrace,
    /// `J >= rho/(1-2rho) (mu+nu)^3 >= 0` on `{trace >= 0, mu + nu < 0}`, `rho < 0`.
    #[serde(rename = "j-nonneg-trace")]
    JCaseNonnegTrace,
    /// `I >= 0` on `{nu < 0}`, `rho in [0, 1/4)`.
    #[serde(rename = "i-poly")]
    IPoly,
    /// `nu^2 xi' >= 0` on `{mu + nu >= 0, nu < 0}` for `rho in (-1/eta, 0)`,
    /// `theta = -1/(2 rho)`.
    #[serde(rename = "xi-prime")]
    XiPrime,
    /// `trace' >= (4/3)(1 - 3 rho) trace^2` on every ordered state.
    #[serde(rename = "trace-bound")]
    TraceBound,
}

impl InequalityKind {
    pub const ALL: [InequalityKind; 5] = [
        InequalityKind::JCaseNegTrace,
        InequalityKind::JCaseNonnegTrace,
        InequalityKind::IPoly,
        InequalityKind::XiPrime,
        InequalityKind::TraceBound,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            InequalityKind::JCaseNegTrace => "j-neg-trace",
            InequalityKind::JCaseNonnegTrace => "j-nonneg-trace",
            InequalityKind::IPoly => "i-poly",
            InequalityKind::XiPrime => "xi-prime",
            InequalityKind::TraceBound => "trace-bound",
        }
    }

    pub fn check_params(&self, p: &FlowParams) -> Result<()> {
        let ok = match self {
            InequalityKind::JCaseNegTrace | InequalityKind::JCaseNonnegTrace => p.rho < 0.0,
            InequalityKind::IPoly => (0.0..0.25).contains(&p.rho),
            InequalityKind::XiPrime => {
                let theta = -1.0 / (2.0 * p.rho);
                p.eta > 0.0
                    && p.rho < 0.0
                    && p.rho > -1.0 / p.eta
                    && (p.theta - theta).abs() <= 1e-12 * theta
            }
            InequalityKind::TraceBound => true,
        };
        if ok {
            Ok(())
        } else {
            Err(PinchError::Domain(format!(
                "parameters rho={}, eta={}, theta={} are not admissible for {}",
                p.rho,
                p.eta,
                p.theta,
                self.name()
            )))
        }
    }

    /// Region membership on a raw (unnormalized) state. The regions are cones,
    /// so this equals membership of the normalized state.
    pub fn in_region(&self, s: &EigenTriple) -> bool {
        match self {
            InequalityKind::JCaseNegTrace => s.trace() <= 0.0 && s.ricci_min() < 0.0,
            InequalityKind::JCaseNonnegTrace => s.trace() >= 0.0 && s.ricci_min() < 0.0,
            InequalityKind::IPoly => s.nu() < 0.0,
            InequalityKind::XiPrime => s.ricci_min() >= 0.0 && s.nu() < 0.0,
            InequalityKind::TraceBound => s.sup_norm() > 0.0,
        }
    }

    /// Distance of a normalized state to the thresholds defining the region.
    fn boundary_distance(&self, s: &EigenTriple) -> f64 {
        match self {
            InequalityKind::JCaseNegTrace | InequalityKind::JCaseNonnegTrace => {
                s.trace().abs().min(s.ricci_min().abs())
            }
            InequalityKind::IPoly => s.nu().abs(),
            InequalityKind::XiPrime => s.ricci_min().abs().min(s.nu().abs()),
            InequalityKind::TraceBound => f64::INFINITY,
        }
    }

    /// Claim margin at a normalized state; `>= 0` means the claim holds.
    ///
    /// For `XiPrime` the exact `nu^2 xi'` is evaluated at each time `t` on the
    /// ray point sitting on the trigger threshold `nu = -1/(1 + 2(1+eta rho)t)`
    /// (the most adverse point of the ray) and rescaled back by the cube of
    /// the ray factor.
    pub fn margin(&self, s: &EigenTriple, p: &FlowParams, times: &[f64]) -> Result<f64> {
        Ok(match self {
            InequalityKind::JCaseNegTrace => j_polynomial(s, p),
            InequalityKind::JCaseNonnegTrace => {
                let c = p.rho / (1.0 - 2.0 * p.rho) * s.ricci_min().powi(3);
                (j_polynomial(s, p) - c).min(c)
            }
            InequalityKind::IPoly => i_polynomial(s, p),
            InequalityKind::XiPrime => {
                let mut m = f64::INFINITY;
                for &t in times {
                    let k = 1.0 / (p.sectional_time_factor(t) * (-s.nu()));
                    let on_trigger = s.scaled(k)?;
                    m = m.min(xi_numerator_at(&on_trigger, p, t)? / (k * k * k));
                }
                m
            }
            InequalityKind::TraceBound => trace_excess(s, p),
        })
    }
}

impl std::str::FromStr for InequalityKind {
    type Err = PinchError;

    fn from_str(s: &str) -> Result<Self> {
        InequalityKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| PinchError::InvalidParams(format!("unknown inequality kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// `resolution` equally spaced values per axis on `[-1, 1]`.
    Grid { resolution: usize },
    /// Uniform draws in `[-1, 1]^3`; `isotropic` extra states `c (1, 1, 1)`.
    Random {
        count: usize,
        seed: u64,
        isotropic: usize,
        prng: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub tol: f64,
    /// Times at which the `XiPrime` time term is evaluated.
    pub times: Vec<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { tol: 1e-12, times: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub kind: InequalityKind,
    pub params: FlowParams,
    pub sampling: Sampling,
    /// Normalization applied before evaluating margins.
    pub normalization: String,
    pub tol: f64,
    /// Times used for the `XiPrime` time term; empty for other kinds.
    pub times: Vec<f64>,
    pub points_checked: usize,
    pub min_margin: f64,
    pub argmin_state: EigenTriple,
    pub violations: usize,
    /// Points within `2/resolution` of a region threshold.
    pub near_boundary: usize,
    pub near_boundary_violations: usize,
    /// Largest `|margin|` over injected isotropic states (trace bound only).
    pub isotropic_max_abs_margin: Option<f64>,
}

impl ScanReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Copy)]
struct Acc {
    count: usize,
    best: Option<(f64, EigenTriple)>,
    violations: usize,
    near: usize,
    near_violations: usize,
    iso_max: f64,
}

impl Acc {
    fn new() -> Self {
        Self {
            count: 0,
            best: None,
            violations: 0,
            near: 0,
            near_violations: 0,
            iso_max: 0.0,
        }
    }

    fn merge(self, o: Self) -> Self {
        let best = match (self.best, o.best) {
            (Some(a), Some(b)) => Some(better(a, b)),
            (a, None) => a,
            (None, b) => b,
        };
        Self {
            count: self.count + o.count,
            best,
            violations: self.violations + o.violations,
            near: self.near + o.near,
            near_violations: self.near_violations + o.near_violations,
            iso_max: self.iso_max.max(o.iso_max),
        }
    }
}

struct Ctx<'a> {
    kind: InequalityKind,
    params: &'a FlowParams,
    times: &'a [f64],
    tol: f64,
    near_width: f64,
}

impl Ctx<'_> {
    /// Adds one raw state (not necessarily normalized).
    fn visit(&self, acc: &mut Acc, raw: &EigenTriple) -> Result<()> {
        if !self.kind.in_region(raw) {
            return Ok(());
        }
        let unit = raw.scaled(1.0 / raw.sup_norm())?;
        let m = self.kind.margin(&unit, self.params, self.times)?;
        acc.count += 1;
        let violated = m < -self.tol;
        if violated {
            acc.violations += 1;
        }
        if self.kind.boundary_distance(&unit) < self.near_width {
            acc.near += 1;
            if violated {
                acc.near_violations += 1;
            }
        }
        acc.best = Some(match acc.best {
            Some(b) => better(b, (m, unit)),
            None => (m, unit),
        });
        Ok(())
    }
}

fn finish(kind: InequalityKind, params: &FlowParams, sampling: Sampling, opts: &ScanOptions, acc: Acc, iso: bool) -> Result<ScanReport> {
    let Some((min_margin, argmin_state)) = acc.best else {
        return Err(PinchError::EmptyRegion(kind.name().to_string()));
    };
    Ok(ScanReport {
        kind,
        params: *params,
        sampling,
        normalization: "sup-norm: max(|lambda|, |mu|, |nu|) = 1".into(),
        tol: opts.tol,
        times: if kind == InequalityKind::XiPrime { opts.times.clone() } else { Vec::new() },
        points_checked: acc.count,
        min_margin,
        argmin_state,
        violations: acc.violations,
        near_boundary: acc.near,
        near_boundary_violations: acc.near_violations,
        isotropic_max_abs_margin: iso.then_some(acc.iso_max),
    })
}

/// Grid scan with the default options (`tol`, `t = 0` for `XiPrime`).
pub fn scan_inequality(kind: InequalityKind, params: &FlowParams, resolution: usize, tol: f64) -> Result<ScanReport> {
    let opts = ScanOptions { tol, ..ScanOptions::default() };
    scan_inequality_with(kind, params, resolution, &opts)
}

/// Brute-force scan of the claim over the ordered points of a
/// `resolution^3` grid on `[-1, 1]^3`.
///
/// Every claim is homogeneous of degree three, so each grid point is
/// normalized to sup-norm one before its margin is evaluated; region tests
/// use the raw grid values and are exact.
pub fn scan_inequality_with(
    kind: InequalityKind,
    params: &FlowParams,
    resolution: usize,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    if resolution < 2 {
        return Err(PinchError::InvalidParams("resolution must be at least 2".into()));
    }
    kind.check_params(params)?;
    check_times(kind, params, &opts.times)?;
    // integer numerators keep the axis exactly symmetric, so mu + nu = 0 on the grid is exact
    let n = (resolution - 1) as i64;
    let axis: Vec<f64> = (0..=n).map(|i| (2 * i - n) as f64 / n as f64).collect();
    let ctx = Ctx {
        kind,
        params,
        times: &opts.times,
        tol: opts.tol,
        near_width: 2.0 / resolution as f64,
    };
    // lambda index >= mu index >= nu index gives ordered triples
    let acc = (0..resolution)
        .into_par_iter()
        .map(|i| -> Result<Acc> {
            let mut acc = Acc::new();
            for j in 0..=i {
                for k in 0..=j {
                    let s = EigenTriple::new(axis[i], axis[j], axis[k])?;
                    ctx.visit(&mut acc, &s)?;
                }
            }
            Ok(acc)
        })
        .try_reduce(Acc::new, |a, b| Ok(a.merge(b)))?;
    finish(kind, params, Sampling::Grid { resolution }, opts, acc, false)
}

fn check_times(kind: InequalityKind, params: &FlowParams, times: &[f64]) -> Result<()> {
    if kind != InequalityKind::XiPrime {
        return Ok(());
    }
    if times.is_empty() {
        return Err(PinchError::InvalidParams("xi-prime scan needs at least one time".into()));
    }
    for &t in times {
        if !(t >= 0.0 && params.sectional_time_factor(t) > 0.0) {
            return Err(PinchError::Domain(format!("time {t} is not admissible for xi-prime")));
        }
    }
    Ok(())
}

const RANDOM_SHARD: usize = 4096;

/// Monte Carlo version of the scan: `count` uniform draws from `[-1, 1]^3`,
/// sorted. For `TraceBound`, `isotropic` states `c (1, 1, 1)` with random
/// `c` are added and the largest `|margin|` among them is reported; those
/// states are the equality case.
pub fn scan_random(
    kind: InequalityKind,
    params: &FlowParams,
    count: usize,
    isotropic: usize,
    seed: u64,
    opts: &ScanOptions,
) -> Result<ScanReport> {
    if count == 0 {
        return Err(PinchError::InvalidParams("count must be positive".into()));
    }
    kind.check_params(params)?;
    check_times(kind, params, &opts.times)?;
    let ctx = Ctx {
        kind,
        params,
        times: &opts.times,
        tol: opts.tol,
        near_width: 0.0,
    };
    let shards = count.div_ceil(RANDOM_SHARD);
    let mut acc = (0..shards)
        .into_par_iter()
        .map(|k| -> Result<Acc> {
            let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, k as u64));
            let n = RANDOM_SHARD.min(count - k * RANDOM_SHARD);
            let mut acc = Acc::new();
            for _ in 0..n {
                let v: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
                let (s, _) = EigenTriple::sorted(v)?;
                ctx.visit(&mut acc, &s)?;
            }
            Ok(acc)
        })
        .try_reduce(Acc::new, |a, b| Ok(a.merge(b)))?;

    let with_iso = kind == InequalityKind::TraceBound && isotropic > 0;
    if with_iso {
        let mut rng = ChaCha8Rng::seed_from_u64(shard_seed(seed, u64::MAX));
        let mut iso = Acc::new();
        for i in 0..isotropic {
            let c = match i {
                0 => 1.0,
                1 => -1.0,
                _ => rng.random_range(-1.0..=1.0),
            };
            if c == 0.0 {
                continue;
            }
            let s = EigenTriple::isotropic(c)?;
            let before = iso.count;
            ctx.visit(&mut iso, &s)?;
            if iso.count > before {
                let unit = s.scaled(1.0 / s.sup_norm())?;
                iso.iso_max = iso.iso_max.max(kind.margin(&unit, params, &opts.times)?.abs());
            }
        }
        acc = acc.merge(iso);
    }
    let sampling = Sampling::Random {
        count,
        seed,
        isotropic: if with_iso { isotropic } else { 0 },
        prng: PRNG_NAME.to_string(),
    };
    finish(kind, params, sampling, opts, acc, with_iso)
}
