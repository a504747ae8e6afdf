//! Factorizations and iterative solvers used across the crate.

pub mod cholesky;
pub mod lsqr;
pub mod qr;

pub use cholesky::EnvelopeCholesky;
pub use lsqr::{lsqr, LinearOperator, LsqrOutcome, LsqrParams, StopReason};
pub use qr::HouseholderQr;
