//! Evaluation metrics and the energy-scaling baselines.

mod baseline;
mod distance;
mod report;
mod room;

pub use baseline::{baseline, BaselineKind};
pub use distance::{env_distance, mag_distance};
pub use report::{binaural_metrics, ir_metrics, MetricReport, SampleMetrics};
pub use room::{c50, c50_error, edt, edt_error, schroeder_db, t60, t60_error, C50_LIMIT_DB};
