//! Construction and diagnostics for dense subsets of F_p that are almost
//! invariant under the affine maps x -> ax + b with small |a| and |b|.
//!
//! The pipeline, end to end:
//!
//! 1. [`family::derive_params`] turns (p, K) into scale parameters: a real
//!    scale L, per-prime exponent bounds, the scale constant Q, and a
//!    translation radius T.
//! 2. [`family::build_family`] materializes the indexed family of rational
//!    affine maps g_{m,j}(x) = m x + m j / Q^2 with m ranging over K-smooth
//!    rationals in an exponent box and |j| <= T, together with the shift set
//!    it should be compared against.
//! 3. [`construct::construct`] draws one +-1 sign per {x, -x} orbit from a
//!    keyed PRF and keeps the points where the family majority vote is
//!    positive. The result is an exactly symmetric set of density near 1/2.
//! 4. [`defect::defect_profile`] measures |A ^ phi(A)| / p exactly over the
//!    whole shift grid, on packed bitsets.
//! 5. [`spectral`] runs the Fourier-side diagnostics: energy under the
//!    translation kernel, dilation invariance of the spectral measure, and
//!    the valuation bookkeeping that converts dilation invariance into a
//!    lower bound on the number of dilation-invariant scales.
//! 6. [`coupling`] bounds the probability that a majority vote flips when a
//!    bounded number of votes is resampled, exactly and by Monte Carlo.
//! 7. [`oracle`] provides brute-force references: hash-set defect counts and
//!    exhaustive searches over small ground sets.

pub mod arith;
pub mod construct;
pub mod coupling;
pub mod defect;
pub mod error;
pub mod family;
pub mod indicator;
pub mod oracle;
mod serde_util;
pub mod spectral;

pub use error::{Error, Result};
