//! Neural collapse in the last layer: the closed-form simplex optimum,
//! collapse metrics, and cross-entropy flow with unconstrained,
//! layer-normalized features.

mod closed_form;
mod flow;
mod metrics;

pub use closed_form::{nc_closed_form, NcClosedForm};
pub use flow::{run_nc_flow, NcRun, NC_HEADER};
pub use metrics::{nc_metrics, NcMetrics, NcThresholds};
