//! Fitting a metaball model to a voxel mask.

mod clustering;
mod loss;
mod report;
mod search;

pub use clustering::{hull_frame_origin, sphere_clustering, InscribedSphere, SphereClustering};
pub use loss::{branch_slope, branch_value, loss_gradient, metaball_loss};
pub use report::{parse_report, write_report, ReportSummary};
pub use search::{gradient_search, metaball_image, spheres_to_model, FitReport, GSConfig, KFloor};
