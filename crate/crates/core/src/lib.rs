//! Exact-rational martingales, martingale/monotone-function transforms, interval
//! approximation, interval betting strategies, sawtooth test functions and slope probes.

#![allow(clippy::result_large_err)]

pub mod error;
pub mod exact;
pub mod function;
pub mod martingale;
pub mod correspondence;
pub mod slopes;
pub mod linterval;
pub mod doobtree;
pub mod sawtooth;
pub mod diffpoint;
pub mod cli;

pub use error::{Error, Result};
pub use exact::{CauchyName, DyadicRational, Rational};
