use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

/// Superellipse cross-section parameters at a fractional torso height.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossSection {
    /// Height fraction in `[0, 1]`, 0 at the waist, 1 at the shoulders.
    pub frac: f64,
    /// Lateral half-axis (cm), along x.
    pub a: f64,
    /// Antero-posterior half-axis (cm), along y.
    pub b: f64,
    /// Squareness exponent: `|x/a|^p + |y/b|^p = 1`.
    pub p: f64,
}

/// Parametric torso: a stack of superellipse cross-sections interpolated
/// linearly in height.
///
/// Frame: x towards the subject's left, y anterior, z up; z = 0 at the waist.
#[derive(Clone, Debug, PartialEq)]
pub struct TorsoSpec {
    pub height: f64,
    pub levels: Vec<CrossSection>,
    /// Girth factor applied to every half-axis (BMI-like, dimensionless).
    pub scale: f64,
    pub seed: u64,
    /// Left-right mirrored subject: electrode placement flips sides.
    pub mirrored: bool,
}

/// Template cross-sections before per-subject variation.
const TEMPLATE: [CrossSection; 5] = [
    CrossSection { frac: 0.0, a: 15.0, b: 10.5, p: 2.3 },
    CrossSection { frac: 0.25, a: 14.0, b: 10.0, p: 2.4 },
    CrossSection { frac: 0.5, a: 15.0, b: 10.5, p: 2.5 },
    CrossSection { frac: 0.75, a: 16.0, b: 11.0, p: 2.7 },
    CrossSection { frac: 1.0, a: 18.5, b: 9.5, p: 3.2 },
];

pub const MIN_HEIGHT: f64 = 40.0;
pub const MAX_HEIGHT: f64 = 80.0;
pub const MIN_P: f64 = 1.5;
pub const MAX_P: f64 = 4.0;

impl TorsoSpec {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_HEIGHT..=MAX_HEIGHT).contains(&self.height) {
            return Err(Error::Invalid(format!("torso height {} out of range", self.height)));
        }
        if self.levels.len() < 2 {
            return Err(Error::Invalid("torso needs at least two control levels".into()));
        }
        if self.levels[0].frac != 0.0 || self.levels[self.levels.len() - 1].frac != 1.0 {
            return Err(Error::Invalid("control levels must span fractions 0..1".into()));
        }
        for w in self.levels.windows(2) {
            if w[1].frac <= w[0].frac {
                return Err(Error::Invalid("control levels must increase in height".into()));
            }
        }
        for l in &self.levels {
            if !(l.a > 0.0 && l.b > 0.0) || !(MIN_P..=MAX_P).contains(&l.p) {
                return Err(Error::Invalid(format!("bad cross-section {l:?}")));
            }
        }
        if !(self.scale > 0.0) {
            return Err(Error::Invalid("torso scale must be positive".into()));
        }
        Ok(())
    }

    /// Circular cylinder of radius `r`; handy for tests.
    pub fn cylinder(height: f64, r: f64) -> TorsoSpec {
        TorsoSpec {
            height,
            levels: vec![
                CrossSection { frac: 0.0, a: r, b: r, p: 2.0 },
                CrossSection { frac: 1.0, a: r, b: r, p: 2.0 },
            ],
            scale: 1.0,
            seed: 0,
            mirrored: false,
        }
    }

    /// Cross-section `(a, b, p)` at height `z` (clamped to the torso).
    pub fn section_at(&self, z: f64) -> (f64, f64, f64) {
        let f = (z / self.height).clamp(0.0, 1.0);
        let k = self
            .levels
            .partition_point(|l| l.frac <= f)
            .clamp(1, self.levels.len() - 1);
        let (l0, l1) = (&self.levels[k - 1], &self.levels[k]);
        let t = (f - l0.frac) / (l1.frac - l0.frac);
        let lerp = |a: f64, b: f64| a + (b - a) * t;
        (
            lerp(l0.a, l1.a) * self.scale,
            lerp(l0.b, l1.b) * self.scale,
            lerp(l0.p, l1.p),
        )
    }

    /// Superellipse parametrisation: `x = a sgn(cos t)|cos t|^(2/p)`, likewise y.
    pub fn surface_point(&self, z: f64, theta: f64) -> Point3 {
        let (a, b, p) = self.section_at(z);
        let e = 2.0 / p;
        let (s, c) = theta.sin_cos();
        Point3::new(a * c.signum() * c.abs().powf(e), b * s.signum() * s.abs().powf(e), z)
    }

    /// Distance from the torso axis to the surface along polar angle `phi`.
    pub fn radius_at(&self, z: f64, phi: f64) -> f64 {
        let (a, b, p) = self.section_at(z);
        let (s, c) = phi.sin_cos();
        ((c / a).abs().powf(p) + (s / b).abs().powf(p)).powf(-1.0 / p)
    }

    /// Surface point hit by the horizontal ray from the axis at angle `phi`.
    pub fn ray_point(&self, z: f64, phi: f64) -> Point3 {
        let r = self.radius_at(z, phi);
        let (s, c) = phi.sin_cos();
        Point3::new(r * c, r * s, z)
    }

    /// Implicit value `|x/a|^p + |y/b|^p` of the cross-section through `q`.
    pub fn implicit(&self, q: Point3) -> f64 {
        let (a, b, p) = self.section_at(q.z);
        (q.x / a).abs().powf(p) + (q.y / b).abs().powf(p)
    }

    pub fn contains(&self, q: Point3) -> bool {
        q.z >= 0.0 && q.z <= self.height && self.implicit(q) < 1.0
    }

    /// Horizontal radial distance from `q` to the lateral surface.
    pub fn radial_deviation(&self, q: Point3) -> f64 {
        let r = q.x.hypot(q.y);
        (r - self.radius_at(q.z, q.y.atan2(q.x))).abs()
    }

    /// Perimeter of the cross-section at height `z` (polygonal, `n` sides).
    pub fn perimeter(&self, z: f64, n: usize) -> f64 {
        let pts: Vec<Point3> = (0..n)
            .map(|i| self.surface_point(z, std::f64::consts::TAU * i as f64 / n as f64))
            .collect();
        (0..n).map(|i| pts[i].dist(pts[(i + 1) % n])).sum()
    }
}

/// Densely sampled torso surface plus its analytic description.
#[derive(Clone, Debug)]
pub struct TorsoSurface {
    pub spec: TorsoSpec,
    pub dense: PointCloud,
}

pub const DENSE_SAMPLES: usize = 4096;

impl TorsoSurface {
    pub fn new(spec: TorsoSpec) -> Result<Self> {
        spec.validate()?;
        let dense = sample_surface(&spec, DENSE_SAMPLES, spec.seed ^ 0xD3A5);
        Ok(TorsoSurface { spec, dense })
    }
}

/// Draws a random torso; identical seeds give identical torsos.
pub fn sample_torso(seed: u64) -> (TorsoSpec, TorsoSurface) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let height = rng.random_range(52.0..68.0);
    let scale = rng.random_range(0.85..1.25);
    let levels = TEMPLATE
        .iter()
        .map(|t| CrossSection {
            frac: t.frac,
            a: t.a * (1.0 + rng.random_range(-0.1..0.1)),
            b: t.b * (1.0 + rng.random_range(-0.1..0.1)),
            p: (t.p + rng.random_range(-0.3..0.3)).clamp(MIN_P, MAX_P),
        })
        .collect();
    let spec = TorsoSpec {
        height,
        levels,
        scale,
        seed,
        mirrored: false,
    };
    let surface = TorsoSurface::new(spec.clone()).expect("sampled torso is valid by construction");
    (spec, surface)
}

const ARC_TABLE: usize = 128;

/// Area-weighted random samples of the lateral surface.
///
/// Height is drawn from the perimeter-weighted distribution, then the angle
/// uniformly by arc length within the cross-section. Every sample is an
/// analytic surface evaluation.
pub fn sample_surface(spec: &TorsoSpec, n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = 200;
    let mut cum = Vec::with_capacity(rows + 1);
    cum.push(0.0);
    let mut prev = spec.perimeter(0.0, ARC_TABLE);
    for i in 1..=rows {
        let z = spec.height * i as f64 / rows as f64;
        let per = spec.perimeter(z, ARC_TABLE);
        cum.push(cum[i - 1] + 0.5 * (prev + per));
        prev = per;
    }
    let total = cum[rows];
    let mut theta_table = vec![0.0; ARC_TABLE + 1];
    let points = (0..n)
        .map(|_| {
            let s = rng.random::<f64>() * total;
            let k = cum.partition_point(|&c| c <= s).clamp(1, rows);
            let t = (s - cum[k - 1]) / (cum[k] - cum[k - 1]);
            let z = spec.height * (k as f64 - 1.0 + t) / rows as f64;
            // arc-length table for this cross-section
            let mut last = spec.surface_point(z, 0.0);
            theta_table[0] = 0.0;
            for j in 1..=ARC_TABLE {
                let p = spec.surface_point(z, std::f64::consts::TAU * j as f64 / ARC_TABLE as f64);
                theta_table[j] = theta_table[j - 1] + p.dist(last);
                last = p;
            }
            let arc = rng.random::<f64>() * theta_table[ARC_TABLE];
            let j = theta_table.partition_point(|&c| c <= arc).clamp(1, ARC_TABLE);
            let w = (arc - theta_table[j - 1]) / (theta_table[j] - theta_table[j - 1]);
            let theta = std::f64::consts::TAU * (j as f64 - 1.0 + w) / ARC_TABLE as f64;
            spec.surface_point(z, theta)
        })
        .collect();
    PointCloud::new(points)
}
