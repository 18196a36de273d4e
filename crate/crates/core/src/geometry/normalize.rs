use super::point::{Point3, PointCloud};
use crate::error::Result;

/// Similarity transform mapping a cloud to zero centroid and unit max radius.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormTransform {
    pub centroid: Point3,
    pub scale: f64,
    /// Set when every point coincided and the scale fell back to 1.
    pub degenerate: bool,
}

impl NormTransform {
    pub fn identity() -> Self {
        NormTransform {
            centroid: Point3::ZERO,
            scale: 1.0,
            degenerate: false,
        }
    }

    pub fn apply(&self, p: Point3) -> Point3 {
        (p - self.centroid) * (1.0 / self.scale)
    }

    pub fn invert(&self, p: Point3) -> Point3 {
        p * self.scale + self.centroid
    }

    pub fn apply_cloud(&self, c: &PointCloud) -> PointCloud {
        c.map(|p| self.apply(p))
    }

    pub fn invert_cloud(&self, c: &PointCloud) -> PointCloud {
        c.map(|p| self.invert(p))
    }
}

pub fn normalize_cloud(cloud: &PointCloud) -> Result<(PointCloud, NormTransform)> {
    cloud.require_nonempty("normalize")?;
    let centroid = cloud.centroid();
    let radius = cloud
        .points
        .iter()
        .map(|p| p.dist(centroid))
        .fold(0.0, f64::max);
    let (scale, degenerate) = if radius > 0.0 {
        (radius, false)
    } else {
        (1.0, true)
    };
    let t = NormTransform {
        centroid,
        scale,
        degenerate,
    };
    Ok((t.apply_cloud(cloud), t))
}
