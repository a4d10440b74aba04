//! Multi-task lasso solvers, Carathéodory reduction and neural-network width
//! compression under weight decay.

// `!(x > 0.0)` is the NaN-rejecting form of a positivity check, and the
// matrix kernels read better with explicit indices.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod caratheodory;
pub mod cli;
pub mod compress;
pub mod container;
pub mod error;
pub mod mlp;
pub mod mtl;
pub mod norms;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Matrix, Threshold};
