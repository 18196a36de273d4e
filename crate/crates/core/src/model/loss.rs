use std::hash::Hasher;

use super::config::LossWeights;
use crate::electrodes::N_ELECTRODES;
use crate::error::{Error, Result};
use crate::geometry::{ChamferKind, NormTransform, Point3, PointCloud, SpatialIndex};
use crate::synth::Subject;

/// Ground-truth cloud in subject coordinates (cm) with its search index.
#[derive(Clone, Debug)]
pub struct TargetCloud {
    pub points: Vec<Point3>,
    index: SpatialIndex,
}

impl TargetCloud {
    pub fn new(cloud: &PointCloud) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::Config("ground-truth cloud is empty".into()));
        }
        Ok(TargetCloud {
            points: cloud.points.clone(),
            index: SpatialIndex::new(&cloud.points),
        })
    }
}

/// Everything the loss compares against, in subject coordinates.
#[derive(Clone, Debug)]
pub struct Target {
    pub electrodes: [Point3; N_ELECTRODES],
    pub topology: TargetCloud,
    pub coarse: TargetCloud,
    pub dense: TargetCloud,
}

impl Target {
    pub fn new(electrodes: [Point3; N_ELECTRODES], topology: &PointCloud, coarse: &PointCloud, dense: &PointCloud) -> Result<Self> {
        Ok(Target {
            electrodes,
            topology: TargetCloud::new(topology)?,
            coarse: TargetCloud::new(coarse)?,
            dense: TargetCloud::new(dense)?,
        })
    }

    pub fn from_subject(s: &Subject) -> Result<Self> {
        Self::new(s.electrodes.positions, &s.topology, &s.coarse, &s.dense)
    }
}

/// Individual loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub electrode: f64,
    pub keypoint: f64,
    pub coarse: f64,
    pub dense: f64,
}

impl LossTerms {
    pub fn combine(electrode: f64, keypoint: f64, coarse: f64, dense: f64, w: &LossWeights) -> Self {
        LossTerms {
            total: electrode + w.lambda_keypoint * keypoint + w.lambda_rec * (coarse + w.beta * dense),
            electrode,
            keypoint,
            coarse,
            dense,
        }
    }

    pub fn add_scaled(&mut self, o: &LossTerms, s: f64) {
        self.total += s * o.total;
        self.electrode += s * o.electrode;
        self.keypoint += s * o.keypoint;
        self.coarse += s * o.coarse;
        self.dense += s * o.dense;
    }
}

/// Mean absolute coordinate error of the electrode slots and its gradient.
pub(crate) fn electrode_term(
    pred: &[Point3],
    gt: &[Point3],
    tf: &NormTransform,
    scale: f64,
    grad: &mut [Point3],
    sig: &mut impl Hasher,
) -> f64 {
    let n = pred.len().min(gt.len());
    let denom = 3.0 * n as f64;
    let mut s = 0.0;
    for i in 0..n {
        let d = pred[i] - tf.apply(gt[i]);
        for a in 0..3 {
            s += d[a].abs();
            let sign = if d[a] > 0.0 {
                1.0
            } else if d[a] < 0.0 {
                -1.0
            } else {
                0.0
            };
            sig.write_i8(sign as i8);
            let mut e = [0.0; 3];
            e[a] = sign * scale / denom;
            grad[i] += Point3::from_array(e);
        }
    }
    s / denom
}

/// Chamfer term between `pred` (normalized) and `gt` (subject coordinates,
/// mapped through `tf`). When `scale` is non-zero its gradient, times
/// `scale`, is added to `grad` and the nearest-neighbour choices are hashed.
pub(crate) fn chamfer_term(
    pred: &[Point3],
    gt: &TargetCloud,
    tf: &NormTransform,
    kind: ChamferKind,
    scale: f64,
    grad: &mut [Point3],
    sig: &mut impl Hasher,
) -> f64 {
    let active = scale != 0.0;
    let deriv = |diff: Point3, d2: f64| -> Point3 {
        match kind {
            ChamferKind::Squared => diff * 2.0,
            ChamferKind::Euclidean => {
                if d2 > 0.0 {
                    diff * (1.0 / d2.sqrt())
                } else {
                    Point3::ZERO
                }
            }
        }
    };
    let np = pred.len() as f64;
    let mut forward = 0.0;
    for (i, &p) in pred.iter().enumerate() {
        let (j, _) = gt.index.nearest(tf.invert(p));
        let diff = p - tf.apply(gt.points[j]);
        let d2 = diff.norm_sq();
        forward += kind.term(d2);
        if active {
            sig.write_usize(j);
            grad[i] += deriv(diff, d2) * (scale / np);
        }
    }
    let pred_index = SpatialIndex::new(pred);
    let ng = gt.points.len() as f64;
    let mut backward = 0.0;
    for &g in &gt.points {
        let q = tf.apply(g);
        let (i, _) = pred_index.nearest(q);
        let diff = pred[i] - q;
        let d2 = diff.norm_sq();
        backward += kind.term(d2);
        if active {
            sig.write_usize(i);
            grad[i] += deriv(diff, d2) * (scale / ng);
        }
    }
    forward / np + backward / ng
}
