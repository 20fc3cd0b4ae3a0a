// `!(x >= lo)` style checks are used on purpose so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cones;
pub mod eigen_ode;
pub mod error;
pub mod floatser;
pub mod integrator;
pub mod pinch;
pub mod verifier;
