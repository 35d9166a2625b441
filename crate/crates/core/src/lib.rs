//! Symbolic dynamics toolkit for tent-map inverse limit spaces.

pub mod arith;
pub mod cli;
pub mod error;
pub mod hofbauer;
pub mod inverse_limit;
pub mod kneading;
pub mod presets;
pub mod seqgen;
pub mod subcontinua;
pub mod verdict;

pub use arith::{ArithError, Scalar, SignRelC, SlopeParam};
pub use kneading::{CuttingData, KneadingPrefix};
pub use verdict::{Status, Verdict};
