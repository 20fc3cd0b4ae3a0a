//! State space and reaction vector field for the curvature-operator
//! eigenvalues of a three-dimensional Ricci-Bourguignon flow.
//!
//! With ordered eigenvalues `lambda >= mu >= nu` and `T = lambda + mu + nu`
//! the reaction system reads
//!
//! ```text
//! lambda' = 2 lambda^2 + 2 mu nu     - 4 rho lambda T
//! mu'     = 2 mu^2     + 2 lambda nu - 4 rho mu T
//! nu'     = 2 nu^2     + 2 lambda mu - 4 rho nu T
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{PinchError, Result};

/// Ordered triple of curvature-operator eigenvalues, `lambda >= mu >= nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct EigenTriple {
    lambda: f64,
    mu: f64,
    nu: f64,
}

impl EigenTriple {
    /// Builds a triple that is already ordered. Disordered or non-finite
    /// input is rejected.
    pub fn new(lambda: f64, mu: f64, nu: f64) -> Result<Self> {
        if !(lambda.is_finite() && mu.is_finite() && nu.is_finite()) {
            return Err(PinchError::InvalidState(format!(
                "non-finite eigenvalue in ({lambda}, {mu}, {nu})"
            )));
        }
        if !(lambda >= mu && mu >= nu) {
            return Err(PinchError::InvalidState(format!(
                "eigenvalues ({lambda}, {mu}, {nu}) are not ordered lambda >= mu >= nu"
            )));
        }
        Ok(Self { lambda, mu, nu })
    }

    /// Sorts arbitrary values into descending order. The flag is `true` when
    /// the input was not already ordered.
    pub fn sorted(values: [f64; 3]) -> Result<(Self, bool)> {
        let mut v = values;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PinchError::InvalidState(format!(
                "non-finite eigenvalue in {values:?}"
            )));
        }
        let reordered = !(v[0] >= v[1] && v[1] >= v[2]);
        if reordered {
            v.sort_by(|a, b| b.total_cmp(a));
        }
        Ok((Self { lambda: v[0], mu: v[1], nu: v[2] }, reordered))
    }

    pub fn isotropic(c: f64) -> Result<Self> {
        Self::new(c, c, c)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn trace(&self) -> f64 {
        self.lambda + self.mu + self.nu
    }

    /// Smallest Ricci eigenvalue `mu + nu`.
    pub fn ricci_min(&self) -> f64 {
        self.mu + self.nu
    }

    /// `max(|lambda|, |mu|, |nu|)`; for an ordered triple this is
    /// `max(|lambda|, |nu|)`.
    pub fn sup_norm(&self) -> f64 {
        self.lambda.abs().max(self.nu.abs()).max(self.mu.abs())
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.lambda, self.mu, self.nu]
    }

    /// Multiplies every eigenvalue by a positive factor; ordering is kept.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(PinchError::Domain(format!("scale factor {s} must be positive")));
        }
        Self::new(s * self.lambda, s * self.mu, s * self.nu)
    }

    /// Lexicographic total order on `(lambda, mu, nu)`; used to break ties
    /// deterministically in reductions.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.lambda
            .total_cmp(&other.lambda)
            .then(self.mu.total_cmp(&other.mu))
            .then(self.nu.total_cmp(&other.nu))
    }
}

impl TryFrom<[f64; 3]> for EigenTriple {
    type Error = PinchError;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<EigenTriple> for [f64; 3] {
    fn from(s: EigenTriple) -> Self {
        s.to_array()
    }
}

/// Parameter bundle `(rho, eta, theta)`.
///
/// `rho < 1/4` and `theta > 0` are enforced at construction. The condition
/// `1 + eta * rho > 0` only matters for the time-dependent sets and `xi`, so it
/// is checked there through [`FlowParams::require_k_admissible`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub rho: f64,
    pub eta: f64,
    pub theta: f64,
}

impl FlowParams {
    pub fn new(rho: f64, eta: f64, theta: f64) -> Result<Self> {
        if !(rho.is_finite() && eta.is_finite() && theta.is_finite()) {
            return Err(PinchError::InvalidParams(format!(
                "non-finite parameter in (rho={rho}, eta={eta}, theta={theta})"
            )));
        }
        if !(rho < 0.25) {
            return Err(PinchError::InvalidParams(format!("rho = {rho} must be < 1/4")));
        }
        if !(theta > 0.0) {
            return Err(PinchError::InvalidParams(format!("theta = {theta} must be > 0")));
        }
        Ok(Self { rho, eta, theta })
    }

    /// Only `rho` set; `eta = -4` and `theta = 1` (Hamilton's normalization).
    pub fn with_rho(rho: f64) -> Result<Self> {
        Self::new(rho, -4.0, 1.0)
    }

    /// `1 + eta * rho`.
    pub fn eta_factor(&self) -> f64 {
        1.0 + self.eta * self.rho
    }

    /// `1 + 2 (1 + eta rho) t`, the time factor of the sectional trigger.
    pub fn sectional_time_factor(&self, t: f64) -> f64 {
        1.0 + 2.0 * self.eta_factor() * t
    }

    /// `1 - 4 rho t`, the time factor of the Ricci trigger.
    pub fn ricci_time_factor(&self, t: f64) -> f64 {
        1.0 - 4.0 * self.rho * t
    }

    pub fn require_k_admissible(&self) -> Result<()> {
        if self.eta_factor() > 0.0 {
            Ok(())
        } else {
            Err(PinchError::Domain(format!(
                "1 + eta*rho = {} must be positive (eta={}, rho={})",
                self.eta_factor(),
                self.eta,
                self.rho
            )))
        }
    }
}

/// Time derivative of an eigenvalue triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenDerivative {
    pub dlambda: f64,
    pub dmu: f64,
    pub dnu: f64,
}

impl EigenDerivative {
    pub fn trace(&self) -> f64 {
        self.dlambda + self.dmu + self.dnu
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.dlambda, self.dmu, self.dnu]
    }
}

/// Ricci eigenvalues, scalar curvature and trace of a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCurvatures {
    /// `lambda + mu >= lambda + nu >= mu + nu`
    pub ricci_eigs: [f64; 3],
    pub scalar: f64,
    pub trace: f64,
}

/// Reaction field on raw coordinates, in the fixed order `(lambda, mu, nu)`.
#[inline]
pub fn reaction(y: [f64; 3], rho: f64) -> [f64; 3] {
    let [l, m, n] = y;
    let tr = l + m + n;
    let c = 4.0 * rho * tr;
    [
        2.0 * l * l + 2.0 * m * n - c * l,
        2.0 * m * m + 2.0 * l * n - c * m,
        2.0 * n * n + 2.0 * l * m - c * n,
    ]
}

pub fn rhs(state: &EigenTriple, params: &FlowParams) -> EigenDerivative {
    let [dlambda, dmu, dnu] = reaction(state.to_array(), params.rho);
    EigenDerivative { dlambda, dmu, dnu }
}

pub fn derived_curvatures(state: &EigenTriple) -> DerivedCurvatures {
    let (l, m, n) = (state.lambda, state.mu, state.nu);
    let trace = l + m + n;
    DerivedCurvatures {
        ricci_eigs: [l + m, l + n, m + n],
        scalar: 2.0 * trace,
        trace,
    }
}

/// `trace' - (4/3)(1 - 3 rho) trace^2`, evaluated from the reaction field.
/// Nonnegative on every state; zero exactly on isotropic states.
pub fn trace_excess(state: &EigenTriple, params: &FlowParams) -> f64 {
    let d = rhs(state, params);
    let tr = state.trace();
    d.trace() - 4.0 / 3.0 * (1.0 - 3.0 * params.rho) * tr * tr
}

/// Exact solution `c(t) = c0 / (1 - 4 (1 - 3 rho) c0 t)` on isotropic data.
pub fn isotropic_solution(c0: f64, params: &FlowParams, t: f64) -> Result<f64> {
    let denominator = 1.0 - 4.0 * (1.0 - 3.0 * params.rho) * c0 * t;
    if denominator <= 0.0 {
        return Err(PinchError::BlowUpReached { t, denominator });
    }
    Ok(c0 / denominator)
}

/// Blow-up time `1 / (4 (1 - 3 rho) c0)` of the isotropic solution, if any.
pub fn isotropic_blowup_time(c0: f64, params: &FlowParams) -> Option<f64> {
    let k = 4.0 * (1.0 - 3.0 * params.rho) * c0;
    (k > 0.0).then(|| 1.0 / k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn st(l: f64, m: f64, n: f64) -> EigenTriple {
        EigenTriple::new(l, m, n).unwrap()
    }

    #[test]
    fn rhs_examples() {
        let p0 = FlowParams::with_rho(0.0).unwrap();
        let pm1 = FlowParams::with_rho(-1.0).unwrap();
        assert_eq!(rhs(&st(1.0, 1.0, 1.0), &p0).to_array(), [4.0, 4.0, 4.0]);
        assert_eq!(rhs(&st(1.0, 1.0, 1.0), &pm1).to_array(), [16.0, 16.0, 16.0]);
        assert_eq!(rhs(&st(1.0, 0.0, -1.0), &p0).to_array(), [2.0, -2.0, 2.0]);
    }

    #[test]
    fn derived_examples() {
        let d = derived_curvatures(&st(1.0, 1.0, 1.0));
        assert_eq!(d.ricci_eigs, [2.0, 2.0, 2.0]);
        assert_eq!(d.scalar, 6.0);
        let d = derived_curvatures(&st(1.0, 0.0, -1.0));
        assert_eq!(d.ricci_eigs, [1.0, 0.0, -1.0]);
        assert_eq!(d.scalar, 0.0);
        let d = derived_curvatures(&st(3.0, -1.0, -2.0));
        assert_eq!(d.ricci_eigs, [2.0, 1.0, -3.0]);
        assert_eq!(d.scalar, 0.0);
    }

    #[test]
    fn isotropic_examples() {
        let p0 = FlowParams::with_rho(0.0).unwrap();
        let pm1 = FlowParams::with_rho(-1.0).unwrap();
        assert_relative_eq!(isotropic_solution(1.0, &p0, 0.2).unwrap(), 5.0, max_relative = 1e-14);
        assert_eq!(isotropic_solution(1.0, &p0, 0.0).unwrap(), 1.0);
        for t in [0.0, 0.5, 3.0, 100.0] {
            let expected = -1.0 / (1.0 + 16.0 * t);
            assert_relative_eq!(isotropic_solution(-1.0, &pm1, t).unwrap(), expected, max_relative = 1e-14);
        }
        assert!(matches!(
            isotropic_solution(1.0, &p0, 0.25),
            Err(PinchError::BlowUpReached { .. })
        ));
        assert_eq!(isotropic_blowup_time(1.0, &p0), Some(0.25));
        assert_eq!(isotropic_blowup_time(-1.0, &p0), None);
    }

    #[test]
    fn construction_rules() {
        assert!(EigenTriple::new(0.0, 1.0, -1.0).is_err());
        assert!(EigenTriple::new(f64::NAN, 0.0, -1.0).is_err());
        assert!(EigenTriple::new(1.0, 1.0, 1.0).is_ok());
        let (s, reordered) = EigenTriple::sorted([0.0, 1.0, -1.0]).unwrap();
        assert!(reordered);
        assert_eq!(s.to_array(), [1.0, 0.0, -1.0]);
        let (_, reordered) = EigenTriple::sorted([2.0, 2.0, -1.0]).unwrap();
        assert!(!reordered);
        assert!(FlowParams::new(0.25, 0.0, 1.0).is_err());
        assert!(FlowParams::new(0.0, 0.0, 0.0).is_err());
        assert!(FlowParams::new(-0.5, 1.0, 1.0).unwrap().require_k_admissible().is_ok());
        assert!(FlowParams::new(-1.0, 1.0, 1.0).unwrap().require_k_admissible().is_err());
    }

    #[test]
    fn serde_rejects_disorder() {
        let s: EigenTriple = serde_json::from_str("[3.0, 1.0, -2.0]").unwrap();
        assert_eq!(s, st(3.0, 1.0, -2.0));
        assert!(serde_json::from_str::<EigenTriple>("[1.0, 3.0, -2.0]").is_err());
    }

    fn ordered() -> impl Strategy<Value = EigenTriple> {
        prop::array::uniform3(-50.0f64..50.0).prop_map(|v| EigenTriple::sorted(v).unwrap().0)
    }

    proptest! {
        #[test]
        fn trace_inequality_holds(s in ordered(), rho in -10.0f64..0.249) {
            let p = FlowParams::with_rho(rho).unwrap();
            let scale = 1.0 + s.sup_norm();
            prop_assert!(trace_excess(&s, &p) >= -1e-12 * scale * scale * (1.0 + rho.abs()));
        }

        #[test]
        fn equal_eigenvalues_have_equal_rates(a in -20.0f64..20.0, b in -20.0f64..20.0, rho in -5.0f64..0.24) {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let p = FlowParams::with_rho(rho).unwrap();
            let d = rhs(&st(hi, lo, lo), &p);
            prop_assert_eq!(d.dmu, d.dnu);
            let d = rhs(&st(hi, hi, lo), &p);
            prop_assert_eq!(d.dlambda, d.dmu);
        }

        #[test]
        fn rhs_is_quadratic(s in ordered(), k in 0.01f64..100.0, rho in -5.0f64..0.24) {
            let p = FlowParams::with_rho(rho).unwrap();
            let a = rhs(&s.scaled(k).unwrap(), &p).to_array();
            let b = rhs(&s, &p).to_array();
            let scale = 1.0 + s.sup_norm() * s.sup_norm() * (1.0 + 4.0 * rho.abs());
            for i in 0..3 {
                prop_assert!((a[i] - k * k * b[i]).abs() <= 1e-12 * k * k * scale);
            }
        }

        #[test]
        fn ricci_sum_is_scalar(s in ordered()) {
            let d = derived_curvatures(&s);
            prop_assert_eq!(d.scalar, 2.0 * d.trace);
            let sum: f64 = d.ricci_eigs.iter().sum();
            prop_assert!((sum - d.scalar).abs() <= 1e-12 * (1.0 + s.sup_norm()));
            prop_assert!(d.ricci_eigs[0] >= d.ricci_eigs[1] && d.ricci_eigs[1] >= d.ricci_eigs[2]);
        }
    }
}
