//! Membership predicates and samplers for the preserved sets `X`, `K(t)`,
//! `Y(t)` and `W(t)`.
//!
//! Margins are raw inequality slacks `lhs - rhs`, so `margin >= 0` means the
//! constraint holds. Conditional constraints whose trigger is false are
//! inactive and contribute `+inf`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen_ode::{EigenTriple, FlowParams};
use crate::error::{PinchError, Result};
use crate::pinch::{f_domain_min, f_inverse, f_range_min};

/// Name of the generator used by every seeded routine in the crate.
pub const PRNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9); shard seeds = splitmix64(seed ^ splitmix64(shard))";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetKind {
    X,
    K,
    Y,
    W,
}

impl std::str::FromStr for SetKind {
    type Err = PinchError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(SetKind::X),
            "K" | "k" => Ok(SetKind::K),
            "Y" | "y" => Ok(SetKind::Y),
            "W" | "w" => Ok(SetKind::W),
            _ => Err(PinchError::InvalidParams(format!("unknown set '{s}'"))),
        }
    }
}

/// A preserved set together with the parameters it is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub kind: SetKind,
    pub params: FlowParams,
}

impl SetSpec {
    pub fn new(kind: SetKind, params: FlowParams) -> Result<Self> {
        let spec = Self { kind, params };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        match self.kind {
            SetKind::X | SetKind::W if !(self.params.rho < 0.0) => Err(PinchError::Domain(format!(
                "set {:?} needs rho < 0, got {}",
                self.kind, self.params.rho
            ))),
            SetKind::K | SetKind::Y => self.params.require_k_admissible(),
            _ => Ok(()),
        }
    }

    /// Eigenvalue size at which the set's logarithmic constraint starts to
    /// bind at time `t`; the sampler box is a multiple of it.
    ///
    /// X: `e^{1-4rho}`, below which `mu + nu >= -f^{-1}(trace)` is automatic.
    /// K, Y: `e^{3/theta} / (1 + 2(1+eta rho) t)`, where the (P2) bound turns
    /// positive. W: `e^{2(1-2rho)} / (1 - 4 rho t)`, where the (P3) bound
    /// turns positive.
    pub fn binding_scale(&self, t: f64) -> f64 {
        let p = &self.params;
        match self.kind {
            SetKind::X => f_domain_min(p),
            SetKind::K | SetKind::Y => (3.0 / p.theta).exp() / p.sectional_time_factor(t),
            SetKind::W => (2.0 * (1.0 - 2.0 * p.rho)).exp() / p.ricci_time_factor(t),
        }
    }
}

/// Label of a single inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// `trace >= -e^{1-4rho} / (2(1-2rho))`
    TraceFloor,
    /// `mu + nu >= -f^{-1}(trace)`
    RicciPinch,
    /// (P1) `trace >= -3 / (1 + 2(1+eta rho) t)`
    P1,
    /// (P2) sectional-trigger bound
    P2,
    /// `mu + nu >= 0`
    RicciNonneg,
    /// `trace >= 0`
    TraceNonneg,
    /// (P3) Ricci-trigger bound
    P3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    pub member: bool,
    pub margin: f64,
    pub active_constraint: Constraint,
}

struct MarginMin {
    margin: f64,
    label: Constraint,
}

impl MarginMin {
    fn new(margin: f64, label: Constraint) -> Self {
        Self { margin, label }
    }

    fn push(&mut self, margin: f64, label: Constraint) {
        if margin < self.margin {
            self.margin = margin;
            self.label = label;
        }
    }

    fn finish(self) -> MembershipResult {
        MembershipResult {
            member: self.margin >= 0.0,
            margin: self.margin,
            active_constraint: self.label,
        }
    }
}

fn positive_time_factor(value: f64, what: &str, t: f64) -> Result<f64> {
    if value > 0.0 {
        Ok(value)
    } else {
        Err(PinchError::Domain(format!(
            "time factor {what} = {value} is not positive at t = {t}"
        )))
    }
}

/// Evaluates every constraint of `spec` at `(state, t)` and returns the
/// smallest slack.
pub fn membership(spec: &SetSpec, state: &EigenTriple, t: f64) -> Result<MembershipResult> {
    spec.check()?;
    if !(t >= 0.0) {
        return Err(PinchError::Domain(format!("membership needs t >= 0, got {t}")));
    }
    let p = &spec.params;
    let tr = state.trace();
    let ric = state.ricci_min();
    let nu = state.nu();

    let result = match spec.kind {
        SetKind::X => {
            let floor = f_range_min(p);
            let mut m = MarginMin::new(tr - floor, Constraint::TraceFloor);
            // f^{-1} is only defined above the floor; below it the floor constraint already fails
            if tr >= floor {
                m.push(ric + f_inverse(tr, p)?, Constraint::RicciPinch);
            }
            m.finish()
        }
        SetKind::K | SetKind::Y => {
            let s = positive_time_factor(p.sectional_time_factor(t), "1 + 2(1 + eta rho) t", t)?;
            let mut m = MarginMin::new(tr + 3.0 / s, Constraint::P1);
            if nu <= -1.0 / s {
                let bound = -p.theta * nu * ((-nu).ln() + s.ln() - 3.0 / p.theta);
                m.push(tr - bound, Constraint::P2);
            }
            if spec.kind == SetKind::Y {
                m.push(ric, Constraint::RicciNonneg);
            }
            m.finish()
        }
        SetKind::W => {
            let s = positive_time_factor(p.ricci_time_factor(t), "1 - 4 rho t", t)?;
            let mut m = MarginMin::new(tr, Constraint::TraceNonneg);
            if ric <= -1.0 / s {
                let k = 2.0 * (1.0 - 2.0 * p.rho);
                let bound = -ric * ((-ric).ln() + s.ln() - k) / k;
                m.push(tr - bound, Constraint::P3);
            }
            m.finish()
        }
    };
    Ok(result)
}

/// Knobs of [`sample_set_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Half-width of the sampling box in units of [`SetSpec::binding_scale`].
    pub box_scale: f64,
    /// Rejection attempts allowed per placed state.
    pub attempts_per_state: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            box_scale: 10.0,
            attempts_per_state: 10_000,
        }
    }
}

const SHARD: usize = 64;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of shard `index` derived from a user seed.
pub fn shard_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

fn draw_box(rng: &mut ChaCha8Rng, half_width: f64) -> EigenTriple {
    let v = [
        rng.random_range(-half_width..=half_width),
        rng.random_range(-half_width..=half_width),
        rng.random_range(-half_width..=half_width),
    ];
    EigenTriple::sorted(v).expect("finite box draw").0
}

fn lerp(a: &EigenTriple, b: &EigenTriple, s: f64) -> EigenTriple {
    let (x, y) = (a.to_array(), b.to_array());
    // convex combinations of ordered triples stay ordered
    let v = [
        x[0] + s * (y[0] - x[0]),
        x[1] + s * (y[1] - x[1]),
        x[2] + s * (y[2] - x[2]),
    ];
    EigenTriple::sorted(v).expect("finite interpolation").0
}

/// Bisects the segment from a member to a non-member until the member end has
/// margin at most `band`.
fn walk_to_boundary(
    spec: &SetSpec,
    t: f64,
    inside: EigenTriple,
    outside: EigenTriple,
    band: f64,
) -> Result<Option<EigenTriple>> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = inside;
    for _ in 0..200 {
        let r = membership(spec, &best, t)?;
        if r.margin <= band {
            return Ok(Some(best));
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let candidate = lerp(&inside, &outside, mid);
        if membership(spec, &candidate, t)?.member {
            lo = mid;
            best = candidate;
        } else {
            hi = mid;
        }
    }
    Ok(None)
}

fn sample_shard(
    spec: &SetSpec,
    t: f64,
    count: usize,
    seed: u64,
    band: f64,
    cfg: &SamplerConfig,
) -> Result<Vec<EigenTriple>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_width = cfg.box_scale * spec.binding_scale(t);
    let budget = cfg.attempts_per_state.max(1) * count;
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        if attempts >= budget {
            return Err(PinchError::SamplingExhausted {
                attempts,
                placed: out.len(),
                requested: count,
            });
        }
        attempts += 1;
        let inside = draw_box(&mut rng, half_width);
        if !membership(spec, &inside, t)?.member {
            continue;
        }
        if band.is_infinite() {
            out.push(inside);
            continue;
        }
        let outside = draw_box(&mut rng, half_width);
        if membership(spec, &outside, t)?.member {
            continue;
        }
        if let Some(s) = walk_to_boundary(spec, t, inside, outside, band)? {
            out.push(s);
        }
    }
    Ok(out)
}

/// [`sample_set_with`] using [`SamplerConfig::default`].
pub fn sample_set(spec: &SetSpec, t: f64, count: usize, seed: u64, band: f64) -> Result<Vec<EigenTriple>> {
    sample_set_with(spec, t, count, seed, band, &SamplerConfig::default())
}

/// Draws `count` ordered states of the set at time `t` whose margin lies in
/// `[0, band]`; `band = inf` samples the whole set inside the box.
///
/// States are drawn uniformly from `[-B, B]^3` with `B = box_scale *
/// binding_scale(t)`, sorted, and kept if they are members. For finite `band` a second
/// non-member draw is paired with each member and the connecting segment is
/// bisected to the boundary. Work is split into fixed shards of 64 states with
/// seeds from [`shard_seed`], so the output does not depend on thread count.
pub fn sample_set_with(
    spec: &SetSpec,
    t: f64,
    count: usize,
    seed: u64,
    band: f64,
    cfg: &SamplerConfig,
) -> Result<Vec<EigenTriple>> {
    spec.check()?;
    if count == 0 {
        return Err(PinchError::InvalidParams("sample count must be positive".into()));
    }
    if !(band >= 0.0) {
        return Err(PinchError::InvalidParams(format!("band must be >= 0, got {band}")));
    }
    let shards = count.div_ceil(SHARD);
    let parts: Vec<Result<Vec<EigenTriple>>> = (0..shards)
        .into_par_iter()
        .map(|k| {
            let n = SHARD.min(count - k * SHARD);
            sample_shard(spec, t, n, shard_seed(seed, k as u64), band, cfg)
        })
        .collect();
    let mut out = Vec::with_capacity(count);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinch::{f_pinch, lambda_pinch};
    use proptest::prelude::*;

    fn st(l: f64, m: f64, n: f64) -> EigenTriple {
        EigenTriple::new(l, m, n).unwrap()
    }

    fn spec(kind: SetKind, rho: f64, eta: f64, theta: f64) -> SetSpec {
        SetSpec::new(kind, FlowParams::new(rho, eta, theta).unwrap()).unwrap()
    }

    #[test]
    fn x_example() {
        let x = spec(SetKind::X, -1.0, -4.0, 1.0);
        let r = membership(&x, &st(1.0, 1.0, 1.0), 0.0).unwrap();
        assert!(r.member);
        assert!(r.margin > 0.0);
        // -f^{-1}(3) <= -e^5 < 2
        assert!(f_inverse(3.0, &x.params).unwrap() >= 5f64.exp());
    }

    #[test]
    fn w_origin_on_boundary() {
        let w = spec(SetKind::W, -1.0, -4.0, 1.0);
        for t in [0.0, 0.3, 5.0] {
            let r = membership(&w, &st(0.0, 0.0, 0.0), t).unwrap();
            assert!(r.member);
            assert_eq!(r.margin, 0.0);
            assert_eq!(r.active_constraint, Constraint::TraceNonneg);
        }
    }

    #[test]
    fn k_normalized_state_on_boundary() {
        let k = spec(SetKind::K, 0.0, -4.0, 1.0);
        let r = membership(&k, &st(-1.0, -1.0, -1.0), 0.0).unwrap();
        assert!(r.member);
        assert_eq!(r.margin, 0.0);
        let below = membership(&k, &st(-1.0, -1.0, -1.0 - 1e-9), 0.0).unwrap();
        assert!(!below.member);
    }

    #[test]
    fn triggers_are_closed() {
        // nu exactly at -1/s evaluates the (P2) bound, which then coincides with (P1)
        let k = spec(SetKind::K, 0.1, -4.0, 1.0);
        let t = 0.5;
        let s = k.params.sectional_time_factor(t);
        let state = st(1.0, 0.0, -1.0 / s);
        let r = membership(&k, &state, t).unwrap();
        assert!(r.margin.is_finite());
    }

    #[test]
    fn inadmissible_params_rejected() {
        let p = FlowParams::with_rho(0.1).unwrap();
        assert!(SetSpec::new(SetKind::X, p).is_err());
        assert!(SetSpec::new(SetKind::W, p).is_err());
        let q = FlowParams::new(-1.0, 1.0, 1.0).unwrap();
        assert!(SetSpec::new(SetKind::K, q).is_err());
        let bad = SetSpec { kind: SetKind::W, params: p };
        assert!(membership(&bad, &st(1.0, 0.0, 0.0), 0.0).is_err());
        let w = spec(SetKind::W, -1.0, -4.0, 1.0);
        assert!(membership(&w, &st(1.0, 0.0, 0.0), -1.0).is_err());
    }

    #[test]
    fn x_sample_whole_set() {
        let x = spec(SetKind::X, -1.0, -4.0, 1.0);
        let states = sample_set(&x, 0.0, 10, 42, f64::INFINITY).unwrap();
        assert_eq!(states.len(), 10);
        for s in &states {
            assert!(membership(&x, s, 0.0).unwrap().member);
        }
    }

    #[test]
    fn w_sample_near_boundary_reaches_p3() {
        let w = spec(SetKind::W, -1.0, -4.0, 1.0);
        let states = sample_set(&w, 0.0, 200, 7, 0.01).unwrap();
        let mut p3 = 0;
        for s in &states {
            let r = membership(&w, s, 0.0).unwrap();
            assert!((0.0..=0.01).contains(&r.margin), "margin {}", r.margin);
            if r.active_constraint == Constraint::P3 {
                p3 += 1;
            }
        }
        assert!(p3 > 0, "no sample on the (P3) boundary");
    }

    #[test]
    fn y_sample_covers_negative_sectional() {
        let y = spec(SetKind::Y, -0.5, 1.0, 1.0);
        let states = sample_set(&y, 0.0, 200, 3, 0.01).unwrap();
        let mut negative_nu = 0;
        for s in &states {
            let r = membership(&y, s, 0.0).unwrap();
            assert!((0.0..=0.01).contains(&r.margin));
            assert!(s.ricci_min() >= 0.0);
            if s.nu() < 0.0 {
                negative_nu += 1;
            }
        }
        assert!(negative_nu > 0);
    }

    #[test]
    fn sampling_is_reproducible() {
        let k = spec(SetKind::K, 0.1, -4.0, 1.0);
        let a = sample_set(&k, 0.2, 150, 99, 1e-4).unwrap();
        let b = sample_set(&k, 0.2, 150, 99, 1e-4).unwrap();
        let bits = |v: &[EigenTriple]| v.iter().flat_map(|s| s.to_array().map(f64::to_bits)).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = sample_set(&k, 0.2, 150, 100, 1e-4).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn exhausted_sampler_reports() {
        let k = spec(SetKind::K, 0.1, -4.0, 1.0);
        let cfg = SamplerConfig { box_scale: 10.0, attempts_per_state: 1 };
        let err = sample_set_with(&k, 0.0, 64, 1, 0.0, &cfg).unwrap_err();
        assert!(matches!(err, PinchError::SamplingExhausted { .. }));
    }

    fn ordered(b: f64) -> impl Strategy<Value = EigenTriple> {
        prop::array::uniform3(-b..b).prop_map(|v| EigenTriple::sorted(v).unwrap().0)
    }

    proptest! {
        #[test]
        fn raising_lambda_keeps_membership(s in ordered(20.0), bump in 0.0f64..50.0, t in 0.0f64..1.0, which in 0usize..4) {
            let sp = [
                spec(SetKind::X, -1.0, -4.0, 1.0),
                spec(SetKind::K, 0.1, -4.0, 1.0),
                spec(SetKind::Y, -0.5, 1.0, 1.0),
                spec(SetKind::W, -1.0, -4.0, 1.0),
            ][which];
            let raised = st(s.lambda() + bump, s.mu(), s.nu());
            if membership(&sp, &s, t).unwrap().member {
                prop_assert!(membership(&sp, &raised, t).unwrap().member);
            }
        }

        #[test]
        fn x_matches_lambda_form(m in -400.0f64..-150.0, split in 0.0f64..0.5, lam in 0.0f64..5000.0) {
            // mu + nu <= -e^{1-4rho}: second constraint <=> Lambda >= 0
            let x = spec(SetKind::X, -1.0, -4.0, 1.0);
            let nu = m * (1.0 - split);
            let mu = m - nu;
            prop_assume!(lam >= mu);
            let s = st(lam, mu, nu);
            prop_assume!(s.trace() >= f_range_min(&x.params));
            let r = membership(&x, &s, 0.0).unwrap();
            let big_lambda = lambda_pinch(&s, &x.params).unwrap();
            let f = f_pinch(-s.ricci_min(), &x.params).unwrap();
            // skip states within rounding of the boundary
            prop_assume!((s.trace() - f).abs() > 1e-9 * (1.0 + f.abs()));
            prop_assert_eq!(r.member, big_lambda >= 0.0);
        }
    }
}
