//! Generic and typical ranks of complex and real 3-tensors.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: exact rank over prime fields and over the rationals.
//! * [`tensor`]: dense integer 3-tensors, unfoldings, slices and the
//!   multilinear-rank bounds on tensor rank.
//! * [`terracini`]: the Jacobian of the rank-one-sum map and randomized
//!   rank probes that estimate the generic rank of a shape.
//! * [`formulas`]: closed-form generic/maximal rank values and bounds.
//! * [`typical_real`]: certificates that the real maximal typical rank of
//!   `(m, m, (m-1)^2 + 1)` exceeds the complex generic rank.
//! * [`harness`]: the conjecture sweep with its append-only JSONL cache.

pub mod error;
pub mod formulas;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod tensor;
pub mod terracini;
pub mod typical_real;

pub use error::{Error, Result};
pub use linalg::{fp_rank, random_prime, rational_rank, FpMatrix, IntMatrix};
pub use tensor::{IntTensor3, Shape};
