//! Numerical checks of the sign claims, set invariance, estimates and
//! derivative identities.
//!
//! Every routine is deterministic: parallel work is reduced with
//! order-independent operations, and ties in minima are broken by the
//! lexicographic order of the state.

mod derivative;
mod estimate;
mod invariance;
mod scan;

pub use derivative::{
    derivative_batch, derivative_consistency, sample_derivative_states, DerivQuantity, DerivativeBatchReport,
    DerivativeReport,
};
pub use estimate::{
    check_estimate, check_estimate_batch, check_estimate_with, check_hypothesis, sample_hypothesis_states,
    EstimateBatchReport, EstimateReport,
};
pub use invariance::{check_invariance, check_invariance_with, InvarianceOptions, InvarianceReport};
pub use scan::{scan_inequality, scan_inequality_with, scan_random, InequalityKind, Sampling, ScanOptions, ScanReport};

use crate::eigen_ode::EigenTriple;

/// Relative slack used by invariance and estimate checks: raw slack divided
/// by `1 + max|eigenvalue|`.
pub fn normalized(slack: f64, state: &EigenTriple) -> f64 {
    slack / (1.0 + state.sup_norm())
}

/// Minimum with deterministic tie-breaking on the attached state.
pub(crate) fn better(a: (f64, EigenTriple), b: (f64, EigenTriple)) -> (f64, EigenTriple) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.1.lex_cmp(&b.1) != std::cmp::Ordering::Greater {
                a
            } else {
                b
            }
        }
    }
}
