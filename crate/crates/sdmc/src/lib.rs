//! Secure distributed matrix computation over prime fields.
//!
//! Matrices are split into blocks, encoded as polynomials whose
//! coefficients mix data blocks with uniformly random key blocks, and
//! evaluated at roots of unity to produce one share per server. Servers
//! multiply shares locally and exchange re-shares; the user averages a
//! full set of responses to recover the product while any T colluding
//! servers learn nothing about the inputs. An auditor checks that claim
//! exhaustively at small scale, and a simulated network accounts for
//! every transmitted field element so communication costs can be
//! compared against closed-form predictions exactly.

pub mod audit;
pub mod error;
pub mod field;
pub mod matrix;
pub mod protocols;
pub mod sharing;
pub mod simnet;

pub use error::{Error, Result};
