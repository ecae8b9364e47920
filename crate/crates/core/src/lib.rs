//! Dense QR factorization with classical, column-wise and generalized Givens
//! rotations, Householder baselines, exact operation accounting and a
//! tile-parallel GGR driver.

pub mod counting;
pub mod error;
pub mod factorization;
pub mod ggr;
pub mod householder;
pub mod matcore;
pub mod rotations;
pub mod tilepar;

pub use counting::{Channel, OpCounter};
pub use error::{Error, ParseErrorKind, Result};
pub use factorization::{factorize, Algorithm, FactorizationResult, FactorizeOptions};
pub use matcore::{DenseMatrix, Metrics};
