//! Simulator of a keyed NLFSR challenge-obfuscation front end for an arbiter
//! PUF, with its masked variant, a power-leakage model and attack tooling.

pub mod apuf;
pub mod attacks;
pub mod bits;
pub mod defaults;
pub mod error;
pub mod fsr;
pub mod leakage;
pub mod masking;
pub mod protocol;
pub mod stats;

pub use bits::BitState;
pub use error::{Error, Result};
