//! Least-squares identification of linear system models over *emulated*
//! leveled homomorphic arithmetic.
//!
//! The crate provides:
//!
//! * [`leveled`] — a leveled-arithmetic emulator with an exact backend and a
//!   fixed-point backend (quantization plus optional per-multiplication
//!   noise). Ciphertext values here are **emulated and carry no cryptographic
//!   protection**; the emulator reproduces level accounting and precision
//!   behaviour only.
//! * [`regressors`] — builders that turn input/output records into the
//!   canonical least-squares problem `M Z = V` for transfer-function,
//!   state-space, and multi-step-predictor model structures, plus an exact
//!   plaintext oracle.
//! * [`itersolve`] — iterative kernels evaluated on ciphertexts: scalar
//!   reciprocal iterations, Schulz pseudoinverse iterations, their
//!   depth-halved product variants, binary exponentiation, and a Laplace
//!   determinant expansion.
//! * [`reliability`] — parameter selection (contraction factor, iteration
//!   counts), multiplicative-depth planning, and encrypted accuracy
//!   certificates.
//! * [`protocol`] — client/server roles and the file-based request/response
//!   exchange.

pub mod error;
pub mod itersolve;
pub mod leveled;
pub mod protocol;
pub mod regressors;
pub mod reliability;

pub use error::{Error, Result};
