//! Gradient flow on quasi-homogeneous classifiers and the geometry of its
//! implicit maximum-margin bias.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod collapse;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod kkt;
pub mod linalg;
pub mod quasimodel;
pub mod twoballs;

pub use error::{Error, Result};
