//! Large-gain analysis of slowly oscillating periodic solutions of delayed
//! negative feedback equations and of their synchrony in coupled networks.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments,
    clippy::type_complexity
)]

pub mod classify;
pub mod coupling;
pub mod ddesolve;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod floquet;
pub mod limitcore;
pub mod linalg;
pub mod sops;

pub use error::{LabError, Result};
