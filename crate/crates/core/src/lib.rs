//! Variational solvers for `-Δu - λV(x)u + h(x)|u|^{p-2}u = 0` on truncated
//! domains with sign-changing weights `V` and `h`.
//!
//! The crate is organised bottom-up: [`grid`] discretizes the domain,
//! [`weights`] samples `V` and `h`, [`functional`] evaluates the energy
//! `I_λ` and its derivatives, and the solver modules ([`eigen`], [`minimize`],
//! [`mountainpass`], [`branch`]) build on those.

pub mod benchmarks;
pub mod branch;
pub mod eigen;
pub mod error;
pub mod functional;
pub mod grid;
pub mod linalg;
pub mod minimize;
pub mod verify;
pub mod mountainpass;
pub mod weights;

pub use error::{LabError, Result};
