//! Hypergeometric motive Frobenius traces modulo prime powers, for all primes
//! up to a bound at once, via accumulating remainder trees.
//!
//! The pipeline has three phases:
//!
//! 1. [`gamma`] builds, for every needed denominator `d`, the expansions
//!    `Γ_p(py + γ) ≡ c·exp s(py)` for all primes at once.
//! 2. [`engine`] turns those into per-range constants for each prime.
//! 3. [`engine`] runs one remainder forest per (range, residue class) and
//!    assembles `H_p mod p^e`, lifting to an integer when the precision allows.
//!
//! [`oracle`] holds slow definitional evaluators used for verification.

pub mod arith;
pub mod datum;
pub mod engine;
pub mod error;
pub mod forest;
pub mod gamma;
pub mod oracle;
pub mod primes;

pub use arith::{Fraction, IntegerMatrix, PrimePower, ResidueElement, TruncatedSeries};
pub use datum::{HypergeometricDatum, PrimeClass};
pub use engine::{hypergeometric_traces, lift_trace, Method, TraceResult};
pub use error::{Error, Result};
