//! Approximate KKT certificates for the max-margin problem and an
//! independent hard-margin solver for linear models.

mod certificate;
mod svm;

pub use certificate::{kkt_certificate, kkt_certificate_at, KktReport};
pub use svm::{solve_max_margin_linear, MaxMarginOptions, MaxMarginSolution};
