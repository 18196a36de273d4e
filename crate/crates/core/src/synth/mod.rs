//! Synthetic subjects: parametric torsos, canonical electrodes and the
//! contour slicer that stands in for image-derived torso contours.

mod dataset;
mod placement;
mod slicing;
mod torso;

pub use dataset::{
    format_torso, generate_subject, load_subject, make_dataset, parse_torso, split_counts,
    subject_dir, write_subject, Dataset, Manifest, ManifestEntry, Split, Subject, MANIFEST_FILE,
    N_COARSE, N_DENSE, N_TOPOLOGY,
};
pub use placement::{place_electrodes, placement_for, PLACEMENT};
pub use slicing::{slice_contours, slice_plane, Fov, GapModel, PlannedPlane, SliceOutput, SliceProtocol};
pub use torso::{sample_surface, sample_torso, CrossSection, TorsoSpec, TorsoSurface};
