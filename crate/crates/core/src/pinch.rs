//! Scalar pinching quantities: `f` and its inverse, `Lambda`, the cubics `J`
//! and `I`, `xi`, and the right-hand sides of the three Hamilton-Ivey type
//! estimates.
//!
//! All logarithms are natural logarithms.

use serde::{Deserialize, Serialize};

use crate::eigen_ode::{rhs, EigenTriple, FlowParams};
use crate::error::{PinchError, Result};

/// Left end `e^{1 - 4 rho}` of the domain of `f`.
pub fn f_domain_min(params: &FlowParams) -> f64 {
    (1.0 - 4.0 * params.rho).exp()
}

/// Minimum `-e^{1 - 4 rho} / (2 (1 - 2 rho))` of `f`, attained at the left end
/// of its domain.
pub fn f_range_min(params: &FlowParams) -> f64 {
    -f_domain_min(params) / (2.0 * (1.0 - 2.0 * params.rho))
}

fn f_unchecked(x: f64, rho: f64) -> f64 {
    let k = 2.0 * (1.0 - 2.0 * rho);
    x * (x.ln() - k) / k
}

fn f_slope(x: f64, rho: f64) -> f64 {
    let k = 2.0 * (1.0 - 2.0 * rho);
    (x.ln() - k + 1.0) / k
}

/// `f(x) = x (ln x - 2(1 - 2 rho)) / (2 (1 - 2 rho))` on `[e^{1 - 4 rho}, inf)`.
pub fn f_pinch(x: f64, params: &FlowParams) -> Result<f64> {
    let lo = f_domain_min(params);
    if !(x >= lo) || !x.is_finite() {
        return Err(PinchError::Domain(format!(
            "f is defined on [{lo}, inf), got x = {x}"
        )));
    }
    Ok(f_unchecked(x, params.rho))
}

/// Inverse of [`f_pinch`] on its range.
///
/// The root is bracketed between `e^{1 - 4 rho}` and a doubling upper bound,
/// then located with Newton steps that fall back to bisection whenever they
/// leave the bracket. `f` is convex and increasing, so the bracket stays valid.
pub fn f_inverse(y: f64, params: &FlowParams) -> Result<f64> {
    let rho = params.rho;
    let x_min = f_domain_min(params);
    let y_min = f_range_min(params);
    if !(y >= y_min) || !y.is_finite() {
        return Err(PinchError::Domain(format!(
            "f^-1 is defined on [{y_min}, inf), got y = {y}"
        )));
    }
    if y == y_min {
        return Ok(x_min);
    }

    let mut lo = x_min;
    let mut hi = 2.0 * x_min;
    while f_unchecked(hi, rho) < y {
        lo = hi;
        hi *= 2.0;
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = f_unchecked(x, rho) - y;
        if g == 0.0 {
            return Ok(x);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = f_slope(x, rho);
        let newton = x - g / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// `Lambda = -lambda / (mu + nu) - ln(-mu - nu) / (2 (1 - 2 rho))`, defined
/// where `mu + nu < 0`.
pub fn lambda_pinch(state: &EigenTriple, params: &FlowParams) -> Result<f64> {
    let s = state.ricci_min();
    if !(s < 0.0) {
        return Err(PinchError::Domain(format!(
            "Lambda needs mu + nu < 0, got {s}"
        )));
    }
    Ok(-state.lambda() / s - (-s).ln() / (2.0 * (1.0 - 2.0 * params.rho)))
}

/// The cubic `J` with `Lambda' = 2 (mu + nu)^{-2} J`.
pub fn j_polynomial(state: &EigenTriple, params: &FlowParams) -> f64 {
    let (l, m, n) = (state.lambda(), state.mu(), state.nu());
    let rho = params.rho;
    let k = 1.0 - 2.0 * rho;
    let s = m + n;
    let q = m * m + n * n;
    l * q - s * m * n - s * q / (2.0 * k) - l * s * s / (2.0 * k) + rho * s * s * (l + m + n) / k
}

/// `Lambda'` obtained by the chain rule directly from the reaction field.
pub fn lambda_rate(state: &EigenTriple, params: &FlowParams) -> Result<f64> {
    let s = state.ricci_min();
    if !(s < 0.0) {
        return Err(PinchError::Domain(format!(
            "Lambda needs mu + nu < 0, got {s}"
        )));
    }
    let d = rhs(state, params);
    let ds = d.dmu + d.dnu;
    Ok(-d.dlambda / s + state.lambda() * ds / (s * s) - ds / (2.0 * (1.0 - 2.0 * params.rho) * s))
}

/// The cubic `I` controlling `xi'` when `theta = 1` and `eta = -4`.
pub fn i_polynomial(state: &EigenTriple, params: &FlowParams) -> f64 {
    let (l, m, n) = (state.lambda(), state.mu(), state.nu());
    let rho = params.rho;
    -2.0 * n * (l * l + m * m) + 2.0 * m * l * (m + l) - 2.0 * n * m * l
        + 4.0 * rho * n * n * (l + m)
        - 4.0 * rho * n * n * n
}

fn check_xi_domain(state: &EigenTriple, params: &FlowParams, t: f64) -> Result<f64> {
    if !(state.nu() < 0.0) {
        return Err(PinchError::Domain(format!("xi needs nu < 0, got {}", state.nu())));
    }
    let s = params.sectional_time_factor(t);
    if !(s > 0.0) {
        return Err(PinchError::Domain(format!(
            "time factor 1 + 2(1 + eta rho) t = {s} is not positive at t = {t}"
        )));
    }
    Ok(s)
}

/// `xi = trace / (-nu) - theta ln(-nu) - theta ln(1 + 2 (1 + eta rho) t)`.
pub fn xi_pinch(state: &EigenTriple, params: &FlowParams, t: f64) -> Result<f64> {
    let s = check_xi_domain(state, params, t)?;
    let n = state.nu();
    Ok(state.trace() / (-n) - params.theta * (-n).ln() - params.theta * s.ln())
}

/// Exact `xi'` along the reaction flow.
pub fn xi_rate(state: &EigenTriple, params: &FlowParams, t: f64) -> Result<f64> {
    let s = check_xi_domain(state, params, t)?;
    Ok(xi_numerator(state, params, s) / (state.nu() * state.nu()))
}

/// `nu^2 xi'` with the time term `-2 theta (1 + eta rho) nu^2 / s`.
fn xi_numerator(state: &EigenTriple, params: &FlowParams, time_factor: f64) -> f64 {
    let d = rhs(state, params);
    let n = state.nu();
    let theta = params.theta;
    -n * d.trace() + state.trace() * d.dnu - theta * n * d.dnu
        - 2.0 * theta * params.eta_factor() * n * n / time_factor
}

/// `nu^2 xi'` at time `t`, exact.
pub fn xi_numerator_at(state: &EigenTriple, params: &FlowParams, t: f64) -> Result<f64> {
    let s = check_xi_domain(state, params, t)?;
    Ok(xi_numerator(state, params, s))
}

/// Cubic lower bound for `nu^2 xi'` valid wherever the sectional trigger
/// `nu <= -1 / (1 + 2 (1 + eta rho) t)` holds: the time term is replaced by
/// `2 theta (1 + eta rho) nu^3`. Homogeneous of degree three and independent
/// of `t`.
pub fn xi_numerator_cubic(state: &EigenTriple, params: &FlowParams) -> f64 {
    let d = rhs(state, params);
    let n = state.nu();
    let theta = params.theta;
    -n * (d.dlambda + d.dmu) + (state.lambda() + state.mu()) * d.dnu - theta * n * d.dnu
        + 2.0 * theta * params.eta_factor() * n * n * n
}

/// Which Hamilton-Ivey type estimate is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateVariant {
    /// `rho < 0`, nonnegative initial scalar curvature; bound in `mu + nu`.
    NegRhoScalar,
    /// `eta > 0`, `rho in (-1/eta, 0)`, nonnegative initial Ricci curvature and
    /// `nu_0 >= -1`; bound in `nu`.
    NegRhoSectional,
    /// `rho in [0, 1/4)` and `nu_0 >= -1`; bound in `nu`.
    NonnegRho,
}

impl EstimateVariant {
    pub const ALL: [EstimateVariant; 3] = [
        EstimateVariant::NegRhoScalar,
        EstimateVariant::NegRhoSectional,
        EstimateVariant::NonnegRho,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimateVariant::NegRhoScalar => "neg-rho-scalar",
            EstimateVariant::NegRhoSectional => "neg-rho-sectional",
            EstimateVariant::NonnegRho => "nonneg-rho",
        }
    }

    pub fn check_params(&self, params: &FlowParams) -> Result<()> {
        let (rho, eta) = (params.rho, params.eta);
        let ok = match self {
            EstimateVariant::NegRhoScalar => rho < 0.0,
            EstimateVariant::NegRhoSectional => eta > 0.0 && rho < 0.0 && rho > -1.0 / eta,
            EstimateVariant::NonnegRho => (0.0..0.25).contains(&rho),
        };
        if ok {
            Ok(())
        } else {
            Err(PinchError::Domain(format!(
                "parameters rho={rho}, eta={eta} are not admissible for {}",
                self.name()
            )))
        }
    }

    /// The eigenvalue quantity the estimate is stated in: `mu + nu` for the
    /// scalar variant, `nu` otherwise.
    pub fn smallest(&self, state: &EigenTriple) -> f64 {
        match self {
            EstimateVariant::NegRhoScalar => state.ricci_min(),
            _ => state.nu(),
        }
    }

    fn time_factor(&self, params: &FlowParams, t: f64) -> f64 {
        match self {
            EstimateVariant::NegRhoScalar => params.ricci_time_factor(t),
            EstimateVariant::NegRhoSectional => params.sectional_time_factor(t),
            EstimateVariant::NonnegRho => 1.0 + 2.0 * (1.0 - 4.0 * params.rho) * t,
        }
    }
}

impl std::str::FromStr for EstimateVariant {
    type Err = PinchError;

    fn from_str(s: &str) -> Result<Self> {
        EstimateVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PinchError::InvalidParams(format!("unknown estimate variant '{s}'")))
    }
}

/// Right-hand side of the estimate `R >= estimate_rhs(...)`.
///
/// `smallest` is `mu + nu` for [`EstimateVariant::NegRhoScalar`] and `nu`
/// for the other two variants; it must be negative.
pub fn estimate_rhs(
    variant: EstimateVariant,
    smallest: f64,
    params: &FlowParams,
    t: f64,
) -> Result<f64> {
    variant.check_params(params)?;
    if !(smallest < 0.0) {
        return Err(PinchError::Domain(format!(
            "{} estimate needs a negative smallest eigenvalue quantity, got {smallest}",
            variant.name()
        )));
    }
    let s = variant.time_factor(params, t);
    if !(s > 0.0) {
        return Err(PinchError::Domain(format!(
            "time factor {s} of {} is not positive at t = {t}",
            variant.name()
        )));
    }
    let a = smallest.abs();
    let rho = params.rho;
    Ok(match variant {
        EstimateVariant::NegRhoScalar => {
            a * (a.ln() + s.ln() - 2.0 * (1.0 - 2.0 * rho)) / (1.0 - 2.0 * rho)
        }
        // +6 rho equals -3/theta with theta = -1/(2 rho)
        EstimateVariant::NegRhoSectional => -a * (a.ln() + s.ln() + 6.0 * rho) / rho,
        EstimateVariant::NonnegRho => 2.0 * a * (a.ln() + s.ln() - 3.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn st(l: f64, m: f64, n: f64) -> EigenTriple {
        EigenTriple::new(l, m, n).unwrap()
    }

    fn rho(r: f64) -> FlowParams {
        FlowParams::with_rho(r).unwrap()
    }

    /// Plain bisection, kept independent of the Newton path in `f_inverse`.
    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn f_examples() {
        for r in [-3.0, -1.0, 0.0, 0.2] {
            let p = rho(r);
            let x0 = (1.0 - 4.0 * r).exp();
            let expected = -x0 / (2.0 * (1.0 - 2.0 * r));
            assert_relative_eq!(f_pinch(x0, &p).unwrap(), expected, max_relative = 1e-14);
            assert_eq!(f_inverse(expected, &p).unwrap(), x0);
        }
        assert!(f_pinch(E * E, &rho(0.0)).unwrap().abs() < 1e-14);
        assert_relative_eq!(f_pinch(5f64.exp(), &rho(-1.0)).unwrap(), -(5f64.exp()) / 6.0, max_relative = 1e-14);
        assert_relative_eq!(-(5f64.exp()) / 6.0, -24.7355, epsilon = 1e-4);
        assert!(f_pinch(1.0, &rho(0.0)).is_err());
        assert!(f_inverse(-100.0, &rho(0.0)).is_err());
    }

    #[test]
    fn f_inverse_examples() {
        assert_relative_eq!(f_inverse(0.0, &rho(0.0)).unwrap(), E * E, max_relative = 1e-12);
        assert_relative_eq!(E * E, 7.389056, epsilon = 1e-6);
        // rho = -1: f(x) = x (ln x - 6) / 6, so f(x) = 3 means x (ln x - 6) = 18
        let oracle = bisect(|x| x * (x.ln() - 6.0) - 18.0, 5f64.exp(), 7f64.exp());
        let x = f_inverse(3.0, &rho(-1.0)).unwrap();
        assert_relative_eq!(x, oracle, max_relative = 1e-12);
        assert!(x >= 5f64.exp());
    }

    #[test]
    fn lambda_examples() {
        let p0 = rho(0.0);
        assert!(lambda_pinch(&st(E / 2.0, -E / 2.0, -E / 2.0), &p0).unwrap().abs() < 1e-15);
        for r in [-2.0, 0.0, 0.1] {
            assert_eq!(lambda_pinch(&st(0.7, -0.5, -0.5), &rho(r)).unwrap(), 0.7);
        }
        let v = lambda_pinch(&st(2.0, -1.0, -1.0), &rho(-1.0)).unwrap();
        assert_relative_eq!(v, 1.0 - 2f64.ln() / 6.0, max_relative = 1e-15);
        assert_relative_eq!(v, 0.884475, epsilon = 1e-6);
        assert!(lambda_pinch(&st(1.0, 0.0, 0.0), &p0).is_err());
    }

    #[test]
    fn j_and_i_examples() {
        assert_relative_eq!(j_polynomial(&st(-1.0, -1.0, -1.0), &rho(-1.0)), 16.0 / 3.0, max_relative = 1e-15);
        // chain rule at (1,-1,-1), rho=-1: rates (0, 4, 4), Lambda' = 8/3, J = Lambda' (mu+nu)^2 / 2
        assert_relative_eq!(j_polynomial(&st(1.0, -1.0, -1.0), &rho(-1.0)), 16.0 / 3.0, max_relative = 1e-14);
        assert_eq!(j_polynomial(&st(0.0, 0.0, 0.0), &rho(-3.0)), 0.0);
        assert_eq!(i_polynomial(&st(-1.0, -1.0, -1.0), &rho(0.0)), 2.0);
        assert_relative_eq!(i_polynomial(&st(-1.0, -1.0, -1.0), &rho(0.2)), 1.2, max_relative = 1e-15);
        assert_eq!(i_polynomial(&st(0.0, 0.0, 0.0), &rho(0.1)), 0.0);
    }

    #[test]
    fn xi_examples() {
        let p = FlowParams::new(0.0, -4.0, 1.0).unwrap();
        assert_eq!(xi_pinch(&st(-1.0, -1.0, -1.0), &p, 0.0).unwrap(), -3.0);
        assert_eq!(xi_pinch(&st(2.0, 1.0, -1.0), &p, 0.0).unwrap(), 2.0);
        let q = FlowParams::new(-0.5, 1.0, 1.0).unwrap();
        assert_eq!(xi_pinch(&st(2.0, 1.0, -1.0), &q, 0.0).unwrap(), 2.0);
        let v = xi_pinch(&st(2.0, 1.0, -1.0), &p, (E - 1.0) / 2.0).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-15);
        assert!(xi_pinch(&st(2.0, 1.0, 0.0), &p, 0.0).is_err());
        // 1 + eta rho = -1: the time factor 1 - 2t vanishes at t = 1/2
        let shrinking = FlowParams::new(0.2, -10.0, 1.0).unwrap();
        assert!(xi_pinch(&st(2.0, 1.0, -1.0), &shrinking, 0.25).is_ok());
        assert!(xi_pinch(&st(2.0, 1.0, -1.0), &shrinking, 1.0).is_err());
    }

    #[test]
    fn estimate_examples() {
        let pm1 = rho(-1.0);
        let v = estimate_rhs(EstimateVariant::NegRhoScalar, -(6f64.exp()), &pm1, 0.0).unwrap();
        assert!(v.abs() < 1e-12);
        let v = estimate_rhs(EstimateVariant::NonnegRho, -1.0, &rho(0.0), 0.0).unwrap();
        assert_eq!(v, -6.0);
        let q = FlowParams::new(-0.5, 1.0, 1.0).unwrap();
        let v = estimate_rhs(EstimateVariant::NegRhoSectional, -1.0, &q, 0.0).unwrap();
        assert_relative_eq!(v, -6.0, max_relative = 1e-15);
        assert!(estimate_rhs(EstimateVariant::NonnegRho, 0.5, &rho(0.0), 0.0).is_err());
        assert!(estimate_rhs(EstimateVariant::NonnegRho, -1.0, &pm1, 0.0).is_err());
        assert!(estimate_rhs(EstimateVariant::NegRhoScalar, -1.0, &rho(0.0), 0.0).is_err());
        let out_of_range = FlowParams::new(-0.5, 3.0, 1.0).unwrap();
        assert!(estimate_rhs(EstimateVariant::NegRhoSectional, -1.0, &out_of_range, 0.0).is_err());
    }

    #[test]
    fn sectional_constant_matches_trigger_bound() {
        // (P2) written with theta = -1/(2 rho), doubled, is the sectional estimate
        let p = FlowParams::new(-0.4, 2.0, 1.25).unwrap();
        let (n, t) = (-3.0, 0.3);
        let s = p.sectional_time_factor(t);
        let p2 = -p.theta * n * ((-n).ln() + s.ln() - 3.0 / p.theta);
        let est = estimate_rhs(EstimateVariant::NegRhoSectional, n, &p, t).unwrap();
        assert_relative_eq!(2.0 * p2, est, max_relative = 1e-14);
    }

    #[test]
    fn xi_cubic_matches_expanded_polynomial() {
        let p = FlowParams::new(-0.4, 2.0, 1.25).unwrap();
        for s in [st(3.0, 2.0, -1.0), st(1.0, 0.5, -0.5), st(5.0, -1.0, -2.0)] {
            let (l, m, n) = (s.lambda(), s.mu(), s.nu());
            let tr = s.trace();
            let th = p.theta;
            let expanded = -2.0 * n * (l * l + m * m) + 2.0 * l * m * (l + m)
                - 2.0 * th * n * (n * n + l * m - 2.0 * p.rho * n * tr)
                + 2.0 * th * p.eta_factor() * n * n * n;
            assert_relative_eq!(xi_numerator_cubic(&s, &p), expanded, max_relative = 1e-13);
        }
    }

    fn ordered() -> impl Strategy<Value = EigenTriple> {
        prop::array::uniform3(-20.0f64..20.0).prop_map(|v| EigenTriple::sorted(v).unwrap().0)
    }

    proptest! {
        #[test]
        fn f_round_trip(u in 0.0f64..30.0, r in -10.0f64..0.249) {
            let p = rho(r);
            let x = f_domain_min(&p) * u.exp();
            let back = f_inverse(f_pinch(x, &p).unwrap(), &p).unwrap();
            prop_assert!((back - x).abs() <= 1e-10 * x);
        }

        #[test]
        fn f_inverse_round_trip(v in 0.0f64..1.0, r in -10.0f64..0.249) {
            let p = rho(r);
            let y_min = f_range_min(&p);
            let y = y_min + v * 1e3 * y_min.abs();
            let back = f_pinch(f_inverse(y, &p).unwrap(), &p).unwrap();
            prop_assert!((back - y).abs() <= 1e-10 * y.abs().max(y_min.abs()));
        }

        #[test]
        fn f_increasing_convex(r in -5.0f64..0.249, start in 0.0f64..10.0, step in 1e-3f64..1.0) {
            let p = rho(r);
            let x0 = f_domain_min(&p) * (1.0 + start);
            let h = step * x0;
            let f = |x: f64| f_pinch(x, &p).unwrap();
            let (a, b, c) = (f(x0), f(x0 + h), f(x0 + 2.0 * h));
            let scale = a.abs().max(c.abs());
            prop_assert!(b - a >= -1e-12 * scale);
            prop_assert!(c - 2.0 * b + a >= -1e-12 * scale);
        }

        #[test]
        fn cubics_are_homogeneous(s in ordered(), k in 0.1f64..10.0, r in -5.0f64..0.24) {
            let p = rho(r);
            let ks = s.scaled(k).unwrap();
            let n3 = s.sup_norm().powi(3) * (1.0 + 4.0 * r.abs());
            let (j1, j0) = (j_polynomial(&ks, &p), j_polynomial(&s, &p));
            prop_assert!((j1 - k.powi(3) * j0).abs() <= 1e-12 * k.powi(3) * (1.0 + n3));
            let (i1, i0) = (i_polynomial(&ks, &p), i_polynomial(&s, &p));
            prop_assert!((i1 - k.powi(3) * i0).abs() <= 1e-12 * k.powi(3) * (1.0 + n3));
        }

        #[test]
        fn lambda_rate_is_two_j_over_square(s in ordered(), r in -5.0f64..0.24) {
            prop_assume!(s.ricci_min() < -0.1);
            let p = rho(r);
            let via_j = 2.0 * j_polynomial(&s, &p) / (s.ricci_min() * s.ricci_min());
            let via_chain = lambda_rate(&s, &p).unwrap();
            let scale = (1.0 + s.sup_norm()).powi(3) / (s.ricci_min() * s.ricci_min()) * (1.0 + 4.0 * r.abs());
            prop_assert!((via_j - via_chain).abs() <= 1e-12 * scale);
        }

        #[test]
        fn xi_numerator_bounded_by_cubic_under_trigger(s in ordered(), t in 0.0f64..2.0) {
            prop_assume!(s.nu() < 0.0);
            let p = FlowParams::new(-0.3, 2.0, 1.0 / 0.6).unwrap();
            let sf = p.sectional_time_factor(t);
            prop_assume!(s.nu() <= -1.0 / sf);
            let exact = xi_numerator_at(&s, &p, t).unwrap();
            let cubic = xi_numerator_cubic(&s, &p);
            prop_assert!(exact >= cubic - 1e-12 * (1.0 + s.sup_norm()).powi(3));
        }
    }
}
