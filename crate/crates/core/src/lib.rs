// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod bound;
pub mod calibration;
pub mod conic;
pub mod error;
pub mod evtbaseline;
pub mod harness;
pub mod model;
pub mod par;
pub mod stats;
pub mod transform;

pub use error::{Error, Result};
