//! Multiscale Linear Memory Networks.
//!
//! Recurrent cells whose linear memory is split into modules clocked at
//! exponentially spaced rates, a closed-form linear autoencoder for sequences
//! used to initialize new memory modules, and an incremental trainer that grows
//! the memory one module at a time.

// `!(x >= 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod laes;
pub mod lmn;
pub mod mslmn;
pub mod numerics;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Matrix;
