//! Solution-decomposition splitting schemes for `du/dt + A u = f` with a
//! symmetric positive definite `A`.
//!
//! The state `u` is written as `Σ R_iᵀ v_i` for a family of restriction
//! operators `R_i`, and each time step only inverts the diagonal blocks
//! `R_i A R_iᵀ` (or `I + c R_i A R_iᵀ`).

pub mod assembly;
pub mod decomposition;
pub mod error;
pub mod harness;
pub mod linops;
pub mod problems;
pub mod schemes;

pub use error::{Error, Result};
pub use linops::{Matrix, Vector};
