// Index loops mirror the tensor notation; NaN-rejecting tests are written `!(x > 0.0)`.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod objective;
pub mod scenarios;
pub mod solver;
pub mod targets;
pub mod trigger;

pub use error::{Result, TmopError};
