//! Geometric primitives and kernels shared by every stage of the pipeline.

mod contour;
mod distance;
mod index;
mod normalize;
mod point;
mod sampling;

pub use contour::{resample_contours, Contour, ContourSet, PlanePose, ResampleMode, View};
pub use distance::{
    chamfer, chamfer_with, euclidean_error, mae_points, mean_norm_error, ChamferKind,
    ElectrodeErrors,
};
pub use index::SpatialIndex;
pub use normalize::{normalize_cloud, NormTransform};
pub use point::{Features, Point3, PointCloud};
pub use sampling::{farthest_first, fps, fps_indices};
