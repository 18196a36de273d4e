//! Electrode localization from sparse torso contours.
//!
//! The crate is organised as a pipeline:
//!
//! * [`geometry`] point clouds, nearest-neighbour index, farthest point
//!   sampling, Chamfer distance and contour resampling.
//! * [`synth`] parametric torsos with analytic ground-truth electrodes and an
//!   MRI-like contour slicer that produces sparse, incomplete inputs.
//! * [`model`] the topology-informed network (point encoder, keypoint head,
//!   coarse decoder, surface skeleton, dense refinement) with hand-written
//!   reverse-mode gradients.
//! * [`train`] deterministic AdamW training, resampling augmentation and
//!   parameter sweeps.
//! * [`eval`] per-subject metrics and the statistics used to summarise them.
//! * [`ecg`] Eikonal activation on a biventricular phantom, pseudo-ECG lead
//!   synthesis and morphology comparison.
//! * [`report`] SVG figures.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ecg;
pub mod electrodes;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod report;
pub mod synth;
pub mod textio;
pub mod train;

pub use electrodes::{Electrode, ElectrodeSet};
pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud};

/// Mixes a base seed with a stream of identifiers into a new 64-bit seed.
///
/// SplitMix64 finaliser applied per component; stable across platforms.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
