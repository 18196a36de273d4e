use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::synth::{SliceProtocol, TorsoSpec};
use crate::textio::parse_key_values;

/// Fast conduction direction and its speed-up over transverse conduction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fiber {
    pub direction: Point3,
    pub factor: f64,
}

/// Voxelized myocardium with conduction velocities and activation roots.
#[derive(Clone, Debug, PartialEq)]
pub struct HeartPhantom {
    pub dims: [usize; 3],
    /// Voxel edge length (cm).
    pub spacing: f64,
    /// World position of voxel (0, 0, 0).
    pub origin: Point3,
    pub mask: Vec<bool>,
    /// Conduction velocity (cm/ms); only mask voxels are read.
    pub velocity: Vec<f64>,
    pub fiber: Option<Fiber>,
    /// Linear voxel indices of the activation roots.
    pub roots: Vec<usize>,
}

impl HeartPhantom {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, [i, j, k]: [usize; 3]) -> usize {
        (k * self.dims[1] + j) * self.dims[0] + i
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        [i, j, idx / (self.dims[0] * self.dims[1])]
    }

    pub fn position(&self, idx: usize) -> Point3 {
        let [i, j, k] = self.coords(idx);
        self.origin + Point3::new(i as f64, j as f64, k as f64) * self.spacing
    }

    /// Neighbour of `idx` at integer offset `o`, if it lies on the grid.
    pub fn offset(&self, idx: usize, o: [i64; 3]) -> Option<usize> {
        let c = self.coords(idx);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let v = c[a] as i64 + o[a];
            if v < 0 || v >= self.dims[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out))
    }

    /// Voxel whose cell contains `p`.
    pub fn voxel_at(&self, p: Point3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.origin[a]) / self.spacing).round();
            if !(f >= 0.0 && f < self.dims[a] as f64) {
                return None;
            }
            c[a] = f as usize;
        }
        Some(self.index(c))
    }

    pub fn contains(&self, p: Point3) -> bool {
        self.voxel_at(p).is_some_and(|v| self.mask[v])
    }

    pub fn tissue_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same tissue moved rigidly by `d`.
    pub fn translated(&self, d: Point3) -> HeartPhantom {
        HeartPhantom {
            origin: self.origin + d,
            ..self.clone()
        }
    }

    /// Structural checks that every solver relies on.
    pub fn check_basic(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Config("phantom grid has a zero dimension".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::Config(format!("phantom spacing must be positive, got {}", self.spacing)));
        }
        for (what, n) in [("mask", self.mask.len()), ("velocity", self.velocity.len())] {
            if n != self.len() {
                return Err(Error::Size {
                    context: if what == "mask" { "phantom mask" } else { "phantom velocity" },
                    expected: self.len(),
                    got: n,
                });
            }
        }
        if let Some(v) = self.mask.iter().zip(&self.velocity).find(|(m, v)| **m && !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("conduction velocity must be positive, got {}", v.1)));
        }
        if self.roots.is_empty() {
            return Err(Error::Config("phantom has no root nodes".into()));
        }
        if let Some(&r) = self.roots.iter().find(|&&r| r >= self.len() || !self.mask[r]) {
            return Err(Error::Config(format!("root voxel {r} is outside the myocardium")));
        }
        if let Some(f) = &self.fiber {
            if !(f.factor > 0.0 && f.factor.is_finite()) || !(f.direction.norm() > 0.0) {
                return Err(Error::Config("fiber needs a non-zero direction and positive factor".into()));
            }
        }
        Ok(())
    }

    /// Full validation, including 6-connectivity of the mask.
    pub fn validate(&self) -> Result<()> {
        self.check_basic()?;
        let total = self.tissue_count();
        let mut seen = vec![false; self.len()];
        let mut queue = VecDeque::from([self.roots[0]]);
        seen[self.roots[0]] = true;
        let mut reached = 0;
        while let Some(v) = queue.pop_front() {
            reached += 1;
            for o in FACE_OFFSETS {
                if let Some(n) = self.offset(v, o) {
                    if self.mask[n] && !seen[n] {
                        seen[n] = true;
                        queue.push_back(n);
                    }
                }
            }
        }
        if reached != total {
            return Err(Error::Config(format!(
                "myocardium mask is not 6-connected ({reached} of {total} voxels reachable)"
            )));
        }
        Ok(())
    }
}

pub(crate) const FACE_OFFSETS: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

/// Ellipsoidal shell: outer half-axes `radii`, wall thickness `wall`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shell {
    pub center: Point3,
    pub radii: Point3,
    pub wall: f64,
}

impl Shell {
    fn level(&self, p: Point3, shrink: f64) -> f64 {
        let d = p - self.center;
        (0..3).map(|a| (d[a] / (self.radii[a] - shrink)).powi(2)).sum()
    }

    fn inside_outer(&self, p: Point3) -> bool {
        self.level(p, 0.0) <= 1.0
    }

    fn inside_cavity(&self, p: Point3) -> bool {
        self.level(p, self.wall) < 1.0
    }
}

/// Parametric biventricular phantom: two nested ellipsoidal shells cut at a
/// basal plane. Shell centres, the base height and root points are relative
/// to `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub spacing: f64,
    pub center: Point3,
    pub lv: Shell,
    pub rv: Shell,
    /// Tissue above this height is removed.
    pub base: f64,
    pub velocity: f64,
    pub fiber: Option<Fiber>,
    /// Grid size; fitted to the shells when absent.
    pub dims: Option<[usize; 3]>,
    /// Root voxel indices; the default root points are snapped when absent.
    pub roots: Option<Vec<[usize; 3]>>,
}

/// Septal and free-wall endocardial points, relative to the phantom centre.
pub const DEFAULT_ROOT_POINTS: [Point3; 3] = [
    Point3 { x: -1.6, y: 0.0, z: -0.5 },
    Point3 { x: 0.6, y: 1.5, z: -1.5 },
    Point3 { x: 1.5, y: -0.5, z: 0.0 },
];

const MARGIN: usize = 2;

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            spacing: 0.2,
            center: Point3::ZERO,
            lv: Shell {
                center: Point3::ZERO,
                radii: Point3::new(2.5, 2.5, 4.0),
                wall: 0.9,
            },
            rv: Shell {
                center: Point3::new(-1.8, 0.8, 0.3),
                radii: Point3::new(3.0, 2.2, 3.5),
                wall: 0.4,
            },
            base: 1.5,
            velocity: 0.07,
            fiber: None,
            dims: None,
            roots: None,
        }
    }
}

impl PhantomSpec {
    pub fn centered_at(center: Point3) -> Self {
        PhantomSpec {
            center,
            ..Default::default()
        }
    }

    /// Default heart placed at the subject's cardiac position.
    pub fn for_torso(torso: &TorsoSpec, protocol: &SliceProtocol) -> Self {
        Self::centered_at(protocol.heart_position(torso))
    }

    fn tissue(&self, rel: Point3) -> bool {
        if rel.z > self.base {
            return false;
        }
        let lv = self.lv.inside_outer(rel) && !self.lv.inside_cavity(rel);
        let rv = self.rv.inside_outer(rel) && !self.rv.inside_cavity(rel) && !self.lv.inside_outer(rel);
        lv || rv
    }

    fn bounds(&self) -> (Point3, Point3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for s in [&self.lv, &self.rv] {
            for a in 0..3 {
                lo[a] = lo[a].min(s.center[a] - s.radii[a]);
                hi[a] = hi[a].max(s.center[a] + s.radii[a]);
            }
        }
        hi[2] = hi[2].min(self.base);
        (Point3::from_array(lo), Point3::from_array(hi))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !pos(self.spacing) || !pos(self.velocity) {
            return Err(Error::Config("phantom spacing and velocity must be positive".into()));
        }
        for (name, s) in [("lv", &self.lv), ("rv", &self.rv)] {
            let r = s.radii;
            if !(pos(r.x) && pos(r.y) && pos(r.z) && pos(s.wall)) || s.wall >= r.x.min(r.y).min(r.z) {
                return Err(Error::Config(format!("{name} shell needs positive radii larger than its wall")));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<HeartPhantom> {
        self.validate()?;
        let h = self.spacing;
        let (lo, hi) = self.bounds();
        let dims = match self.dims {
            Some(d) => d,
            None => {
                let mut d = [0; 3];
                for a in 0..3 {
                    d[a] = ((hi[a] - lo[a]) / h).ceil() as usize + 1 + 2 * MARGIN;
                }
                d
            }
        };
        let mid = (lo + hi) * 0.5;
        let rel_origin = Point3::new(
            mid.x - (dims[0] - 1) as f64 * h / 2.0,
            mid.y - (dims[1] - 1) as f64 * h / 2.0,
            mid.z - (dims[2] - 1) as f64 * h / 2.0,
        );
        let n = dims[0] * dims[1] * dims[2];
        let mut mask = vec![false; n];
        for (idx, m) in mask.iter_mut().enumerate() {
            let i = idx % dims[0];
            let j = (idx / dims[0]) % dims[1];
            let k = idx / (dims[0] * dims[1]);
            let rel = rel_origin + Point3::new(i as f64, j as f64, k as f64) * h;
            *m = self.tissue(rel);
        }
        let mut phantom = HeartPhantom {
            dims,
            spacing: h,
            origin: self.center + rel_origin,
            mask,
            velocity: vec![self.velocity; n],
            fiber: self.fiber.map(|f| Fiber {
                direction: f.direction.normalized(),
                factor: f.factor,
            }),
            roots: Vec::new(),
        };
        phantom.roots = match &self.roots {
            Some(r) => {
                let mut out = Vec::with_capacity(r.len());
                for &c in r {
                    if (0..3).any(|a| c[a] >= dims[a]) {
                        return Err(Error::Config(format!("root voxel {c:?} is off the grid")));
                    }
                    out.push(phantom.index(c));
                }
                out
            }
            None => DEFAULT_ROOT_POINTS
                .iter()
                .map(|&p| nearest_tissue(&phantom, self.center + p))
                .collect::<Result<_>>()?,
        };
        phantom.validate()?;
        Ok(phantom)
    }

    pub fn to_text(&self) -> String {
        let v = |p: Point3| format!("{} {} {}", p.x, p.y, p.z);
        let mut s = String::new();
        let _ = writeln!(s, "spacing = {}", self.spacing);
        let _ = writeln!(s, "center = {}", v(self.center));
        for (name, sh) in [("lv", &self.lv), ("rv", &self.rv)] {
            let _ = writeln!(s, "{name}_center = {}", v(sh.center));
            let _ = writeln!(s, "{name}_radii = {}", v(sh.radii));
            let _ = writeln!(s, "{name}_wall = {}", sh.wall);
        }
        let _ = writeln!(s, "base = {}", self.base);
        let _ = writeln!(s, "velocity = {}", self.velocity);
        if let Some(f) = &self.fiber {
            let _ = writeln!(s, "fiber = {}", v(f.direction));
            let _ = writeln!(s, "fiber_factor = {}", f.factor);
        }
        if let Some(d) = self.dims {
            let _ = writeln!(s, "dims = {} {} {}", d[0], d[1], d[2]);
        }
        if let Some(r) = &self.roots {
            let list: Vec<String> = r.iter().map(|c| format!("{} {} {}", c[0], c[1], c[2])).collect();
            let _ = writeln!(s, "roots = {}", list.join("; "));
        }
        s
    }

    /// Parses the `key = value` phantom format written by [`to_text`](Self::to_text).
    /// Keys that are absent keep their default values.
    pub fn from_text(text: &str, path: &str) -> Result<Self> {
        let mut spec = PhantomSpec::default();
        let mut fiber_dir = None;
        let mut fiber_factor = None;
        for (k, val) in parse_key_values(text, path)? {
            let bad = |m: &str| Error::Config(format!("{path}: key '{k}': {m}"));
            let nums = |n: usize| -> Result<Vec<f64>> {
                let v: Vec<f64> = val
                    .split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|_| bad("expected numbers")))
                    .collect::<Result<_>>()?;
                if v.len() != n {
                    return Err(bad(&format!("expected {n} values")));
                }
                Ok(v)
            };
            let point = || nums(3).map(|v| Point3::new(v[0], v[1], v[2]));
            let scalar = || nums(1).map(|v| v[0]);
            match k.as_str() {
                "spacing" => spec.spacing = scalar()?,
                "center" => spec.center = point()?,
                "lv_center" => spec.lv.center = point()?,
                "lv_radii" => spec.lv.radii = point()?,
                "lv_wall" => spec.lv.wall = scalar()?,
                "rv_center" => spec.rv.center = point()?,
                "rv_radii" => spec.rv.radii = point()?,
                "rv_wall" => spec.rv.wall = scalar()?,
                "base" => spec.base = scalar()?,
                "velocity" => spec.velocity = scalar()?,
                "fiber" => fiber_dir = Some(point()?),
                "fiber_factor" => fiber_factor = Some(scalar()?),
                "dims" => spec.dims = Some(parse_triple(&val).ok_or_else(|| bad("expected three integers"))?),
                "roots" => {
                    let r: Option<Vec<[usize; 3]>> = val.split(';').map(parse_triple).collect();
                    spec.roots = Some(r.ok_or_else(|| bad("expected 'i j k; i j k; ...'"))?);
                }
                _ => return Err(Error::Config(format!("{path}: unknown phantom key '{k}'"))),
            }
        }
        spec.fiber = match (fiber_dir, fiber_factor) {
            (Some(direction), Some(factor)) => Some(Fiber { direction, factor }),
            (None, None) => None,
            _ => return Err(Error::Config(format!("{path}: 'fiber' and 'fiber_factor' must be given together"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_triple(s: &str) -> Option<[usize; 3]> {
    let v: Vec<usize> = s.split_whitespace().map(|t| t.parse().ok()).collect::<Option<_>>()?;
    v.try_into().ok()
}

fn nearest_tissue(ph: &HeartPhantom, p: Point3) -> Result<usize> {
    (0..ph.len())
        .filter(|&i| ph.mask[i])
        .min_by(|&a, &b| ph.position(a).dist_sq(p).total_cmp(&ph.position(b).dist_sq(p)))
        .ok_or_else(|| Error::Config("phantom mask is empty".into()))
}
