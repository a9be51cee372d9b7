//! Sum rates, rate regions, and optimal jointly Gaussian test channels for
//! the vector Gaussian multiple-description problem with L individual
//! receivers and one central receiver.
//!
//! Rates are in nats throughout. Conversion to bits happens only at the
//! command-line boundary.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod instance;
pub mod kkt;
pub mod matcore;
pub mod mc;
pub mod region;
pub mod riccati;
pub mod scalar;

pub use bounds::RateNats;
pub use error::{Error, ParseError, Result};
pub use instance::MdInstance;
pub use kkt::{sum_rate, KktCase, KktSolution, SumRateResult};
pub use matcore::SymMatrix;
pub use region::{RateRegion, Subset, TestChannel};
