//! Tabular laboratory for kernel-based state-action representations and
//! stable offline policy evaluation.
//!
//! The crate is organised bottom-up: [`mdp`] and [`dataset`] hold exact
//! tabular machinery, [`kernel`] the KROPE kernel operator and its fixed
//! point, [`training`] gradient-based linear encoders, [`lspe`] the linear
//! evaluation protocol, [`diagnostics`] the representation metrics and
//! [`experiments`] the batch harness behind the `krope` binary.

pub mod dataset;
pub mod diagnostics;
pub mod encoder;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kernel;
pub mod linalg;
pub mod lspe;
pub mod mdp;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
