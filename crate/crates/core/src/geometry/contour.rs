use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::point::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Acquisition view a contour was extracted from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum View {
    Sax,
    Lax2ch,
    Lax3ch,
    Lax4ch,
    LocalizerSagittal,
    LocalizerCoronal,
    LocalizerAxial,
}

impl View {
    pub const ALL: [View; 7] = [
        View::Sax,
        View::Lax2ch,
        View::Lax3ch,
        View::Lax4ch,
        View::LocalizerSagittal,
        View::LocalizerCoronal,
        View::LocalizerAxial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            View::Sax => "sax",
            View::Lax2ch => "lax-2ch",
            View::Lax3ch => "lax-3ch",
            View::Lax4ch => "lax-4ch",
            View::LocalizerSagittal => "localizer-sagittal",
            View::LocalizerCoronal => "localizer-coronal",
            View::LocalizerAxial => "localizer-axial",
        }
    }

    pub fn is_localizer(self) -> bool {
        matches!(
            self,
            View::LocalizerSagittal | View::LocalizerCoronal | View::LocalizerAxial
        )
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for View {
    type Err = Error;
    fn from_str(s: &str) -> Result<View> {
        View::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown view '{s}'")))
    }
}

/// Pose of an image plane: origin plus two orthonormal in-plane axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePose {
    pub origin: Point3,
    pub u: Point3,
    pub v: Point3,
}

impl PlanePose {
    pub fn new(origin: Point3, u: Point3, v: Point3) -> Result<Self> {
        let pose = PlanePose { origin, u, v };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = 1e-9;
        if (self.u.norm() - 1.0).abs() > tol
            || (self.v.norm() - 1.0).abs() > tol
            || self.u.dot(self.v).abs() > tol
        {
            return Err(Error::Invalid("plane axes are not orthonormal".into()));
        }
        if !(self.origin.is_finite() && self.u.is_finite() && self.v.is_finite()) {
            return Err(Error::Invalid("plane pose is not finite".into()));
        }
        Ok(())
    }

    pub fn normal(&self) -> Point3 {
        self.u.cross(self.v)
    }

    pub fn lift(&self, uv: [f64; 2]) -> Point3 {
        self.origin + self.u * uv[0] + self.v * uv[1]
    }

    pub fn project(&self, p: Point3) -> [f64; 2] {
        let d = p - self.origin;
        [d.dot(self.u), d.dot(self.v)]
    }
}

/// One in-plane polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Contour {
    pub view: View,
    pub plane: PlanePose,
    pub points: Vec<[f64; 2]>,
    /// Whether the last point connects back to the first.
    pub closed: bool,
}

impl Contour {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 3 {
            return Err(Error::Invalid(format!(
                "contour has {} points, need at least 3",
                self.points.len()
            )));
        }
        self.plane.validate()
    }

    pub fn lifted(&self) -> Vec<Point3> {
        self.points.iter().map(|&uv| self.plane.lift(uv)).collect()
    }

    fn segments(&self) -> Vec<(Point3, Point3)> {
        let pts = self.lifted();
        let mut segs: Vec<_> = pts.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed {
            segs.push((pts[pts.len() - 1], pts[0]));
        }
        segs
    }

    pub fn arc_length(&self) -> f64 {
        self.segments().iter().map(|(a, b)| a.dist(*b)).sum()
    }
}

/// Sparse torso contours collected from several image planes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContourSet {
    pub contours: Vec<Contour>,
}

impl ContourSet {
    pub fn validate(&self) -> Result<()> {
        self.contours.iter().try_for_each(Contour::validate)
    }

    pub fn total_length(&self) -> f64 {
        self.contours.iter().map(Contour::arc_length).sum()
    }

    /// All polyline vertices lifted to 3-D.
    pub fn vertices(&self) -> PointCloud {
        PointCloud::new(self.contours.iter().flat_map(|c| c.lifted()).collect())
    }
}

/// How resampling positions are drawn along the total arc length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ResampleMode {
    /// Independent uniform draws by arc length.
    #[default]
    Random,
    /// Positions `(i + 0.5) L / n`.
    EqualSpacing,
}

/// Lifts every contour to 3-D and draws `n` points uniformly by arc length
/// over the union of all contours.
pub fn resample_contours(
    contours: &ContourSet,
    n: usize,
    rng_seed: u64,
    mode: ResampleMode,
) -> Result<PointCloud> {
    if contours.contours.is_empty() {
        return Err(Error::EmptyInput("contour set"));
    }
    if n == 0 {
        return Err(Error::Invalid("resample count must be at least 1".into()));
    }
    let segs: Vec<(Point3, Point3)> = contours
        .contours
        .iter()
        .flat_map(|c| c.segments())
        .collect();
    let mut cum = Vec::with_capacity(segs.len());
    let mut total = 0.0;
    for (a, b) in &segs {
        total += a.dist(*b);
        cum.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Invalid("contours have zero total arc length".into()));
    }
    let at = |s: f64| -> Point3 {
        let k = cum.partition_point(|&c| c <= s).min(segs.len() - 1);
        let start = if k == 0 { 0.0 } else { cum[k - 1] };
        let len = cum[k] - start;
        let t = if len > 0.0 { ((s - start) / len).clamp(0.0, 1.0) } else { 0.0 };
        segs[k].0.lerp(segs[k].1, t)
    };
    let points = match mode {
        ResampleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            (0..n).map(|_| at(rng.random::<f64>() * total)).collect()
        }
        ResampleMode::EqualSpacing => (0..n)
            .map(|i| at((i as f64 + 0.5) * total / n as f64))
            .collect(),
    };
    Ok(PointCloud::new(points))
}
