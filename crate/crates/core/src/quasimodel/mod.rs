//! Quasi-homogeneous classifiers: forward passes, hand-written
//! subgradients, scaling exponents, and a numeric scaling-law verifier.

mod dataset;
mod lambda;
mod model;
mod params;
mod verify;

pub use dataset::{ClassificationDataset, Labels};
pub use lambda::LambdaSpec;
pub use model::{layer_normalize, Model, ModelKind};
pub use params::{Layout, ParamVec, Segment};
pub use verify::{verify_quasi_homogeneity, CheckKind, QuasiHomogeneityReport, VerifyFailure};
