//! Emulated cardiac-MRI acquisition: image planes are intersected with the
//! torso, clipped to their field of view and thinned by a gap model so the
//! result is the sparse, incomplete contour input the model sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Contour, ContourSet, PlanePose, Point3, View};

use super::torso::{TorsoSpec, TorsoSurface};

/// Rectangular field of view in plane coordinates (cm).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fov {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Fov {
    pub fn centered(half_u: f64, half_v: f64) -> Fov {
        Fov {
            u_min: -half_u,
            u_max: half_u,
            v_min: -half_v,
            v_max: half_v,
        }
    }

    pub fn unbounded() -> Fov {
        Fov::centered(f64::INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, uv: [f64; 2]) -> bool {
        uv[0] >= self.u_min && uv[0] <= self.u_max && uv[1] >= self.v_min && uv[1] <= self.v_max
    }
}

/// Contour-removal model emulating shadowed regions near shoulders and waist.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapModel {
    /// Points above this fraction of torso height are dropped.
    pub shoulder_cut: f64,
    /// Points below this fraction of torso height are dropped.
    pub waist_cut: f64,
    /// Probability that a plane loses one contiguous arc.
    pub arc_probability: f64,
    /// Range of the removed arc as a fraction of the full contour.
    pub arc_fraction: (f64, f64),
}

impl GapModel {
    pub fn none() -> GapModel {
        GapModel {
            shoulder_cut: f64::INFINITY,
            waist_cut: f64::NEG_INFINITY,
            arc_probability: 0.0,
            arc_fraction: (0.0, 0.0),
        }
    }
}

impl Default for GapModel {
    fn default() -> Self {
        GapModel {
            shoulder_cut: 0.88,
            waist_cut: 0.12,
            arc_probability: 0.8,
            arc_fraction: (0.1, 0.3),
        }
    }
}

/// Which planes are acquired and how they degrade.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceProtocol {
    /// Heart centre as (fraction of half-axis a, fraction of half-axis b,
    /// fraction of height).
    pub heart_center: (f64, f64, f64),
    /// Base-to-apex direction of the left ventricle.
    pub long_axis: Point3,
    pub sax_count: usize,
    pub sax_spacing: f64,
    /// Rotations (degrees) of the long-axis planes about the long axis.
    pub lax_angles: Vec<(View, f64)>,
    /// Sagittal localizer offsets as fractions of the lateral half-axis.
    pub sagittal: Vec<f64>,
    /// Coronal localizer offsets as fractions of the antero-posterior half-axis.
    pub coronal: Vec<f64>,
    /// Axial localizer heights as fractions of torso height.
    pub axial: Vec<f64>,
    pub cardiac_fov: (f64, f64),
    pub localizer_fov: (f64, f64),
    pub dropout_sax: f64,
    pub dropout_lax: f64,
    pub dropout_localizer: f64,
    /// Positional jitter of the heart (cm) and localizer planes.
    pub jitter_cm: f64,
    /// Angular jitter of the long axis (degrees).
    pub jitter_deg: f64,
    pub gaps: GapModel,
    /// Rays cast per plane.
    pub rays: usize,
}

impl Default for SliceProtocol {
    fn default() -> Self {
        SliceProtocol {
            heart_center: (0.12, 0.2, 0.62),
            long_axis: Point3::new(0.55, 0.45, -0.7),
            sax_count: 9,
            sax_spacing: 1.0,
            lax_angles: vec![(View::Lax2ch, 0.0), (View::Lax3ch, 60.0), (View::Lax4ch, 120.0)],
            sagittal: vec![0.0],
            coronal: vec![0.0],
            axial: vec![0.7],
            cardiac_fov: (15.0, 13.0),
            localizer_fov: (18.0, 18.0),
            dropout_sax: 0.05,
            dropout_lax: 0.15,
            dropout_localizer: 0.2,
            jitter_cm: 1.0,
            jitter_deg: 8.0,
            gaps: GapModel::default(),
            rays: 360,
        }
    }
}

impl SliceProtocol {
    pub fn validate(&self) -> Result<()> {
        let n_planes = self.sax_count
            + self.lax_angles.len()
            + self.sagittal.len()
            + self.coronal.len()
            + self.axial.len();
        if n_planes == 0 {
            return Err(Error::Invalid("protocol acquires no planes".into()));
        }
        let pos = |(a, b): (f64, f64)| a > 0.0 && b > 0.0;
        if !pos(self.cardiac_fov) || !pos(self.localizer_fov) {
            return Err(Error::Invalid("field-of-view extents must be positive".into()));
        }
        for p in [self.dropout_sax, self.dropout_lax, self.dropout_localizer] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid("dropout probabilities must lie in [0, 1]".into()));
            }
        }
        if self.rays < 8 {
            return Err(Error::Invalid("need at least 8 rays per plane".into()));
        }
        if !(self.long_axis.norm() > 0.0) {
            return Err(Error::Invalid("long axis must be non-zero".into()));
        }
        Ok(())
    }

    /// Heart centre in torso coordinates (no jitter).
    pub fn heart_position(&self, spec: &TorsoSpec) -> Point3 {
        let z = self.heart_center.2 * spec.height;
        let (a, b, _) = spec.section_at(z);
        let sx = if spec.mirrored { -1.0 } else { 1.0 };
        Point3::new(sx * self.heart_center.0 * a, self.heart_center.1 * b, z)
    }

    /// Planes for one subject, with per-subject jitter drawn from `rng`.
    pub fn plan(&self, spec: &TorsoSpec, rng: &mut ChaCha8Rng) -> Vec<PlannedPlane> {
        let mut jitter = |s: f64| rng.random_range(-1.0..=1.0) * s;
        let heart = self.heart_position(spec)
            + Point3::new(jitter(self.jitter_cm), jitter(self.jitter_cm), jitter(self.jitter_cm));
        let mut axis = self.long_axis.normalized();
        if spec.mirrored {
            axis.x = -axis.x;
        }
        let tilt = jitter(self.jitter_deg).to_radians();
        axis = rotate(axis, perpendicular(axis), tilt);
        let e1 = perpendicular(axis);
        let e2 = axis.cross(e1);
        let cardiac = Fov::centered(self.cardiac_fov.0, self.cardiac_fov.1);
        let localizer = Fov::centered(self.localizer_fov.0, self.localizer_fov.1);
        let mut planes = Vec::new();
        for k in 0..self.sax_count {
            let off = (k as f64 - (self.sax_count as f64 - 1.0) / 2.0) * self.sax_spacing;
            planes.push(PlannedPlane {
                view: View::Sax,
                pose: PlanePose { origin: heart + axis * off, u: e1, v: e2 },
                fov: cardiac,
                dropout: self.dropout_sax,
            });
        }
        for &(view, deg) in &self.lax_angles {
            let n = rotate(e1, axis, deg.to_radians());
            planes.push(PlannedPlane {
                view,
                pose: PlanePose { origin: heart, u: axis, v: n.cross(axis) },
                fov: cardiac,
                dropout: self.dropout_lax,
            });
        }
        let mid = spec.height * 0.5;
        let (a_mid, b_mid, _) = spec.section_at(mid);
        let x = Point3::new(1.0, 0.0, 0.0);
        let y = Point3::new(0.0, 1.0, 0.0);
        let z = Point3::new(0.0, 0.0, 1.0);
        for &f in &self.sagittal {
            let origin = Point3::new(f * a_mid + jitter(self.jitter_cm), 0.0, mid);
            planes.push(PlannedPlane {
                view: View::LocalizerSagittal,
                pose: PlanePose { origin, u: y, v: z },
                fov: localizer,
                dropout: self.dropout_localizer,
            });
        }
        for &f in &self.coronal {
            let origin = Point3::new(0.0, f * b_mid + jitter(self.jitter_cm), mid);
            planes.push(PlannedPlane {
                view: View::LocalizerCoronal,
                pose: PlanePose { origin, u: x, v: z },
                fov: localizer,
                dropout: self.dropout_localizer,
            });
        }
        for &f in &self.axial {
            let origin = Point3::new(0.0, 0.0, f * spec.height + jitter(self.jitter_cm));
            planes.push(PlannedPlane {
                view: View::LocalizerAxial,
                pose: PlanePose { origin, u: x, v: y },
                fov: localizer,
                dropout: self.dropout_localizer,
            });
        }
        planes
    }
}

fn perpendicular(a: Point3) -> Point3 {
    let helper = if a.z.abs() < 0.9 {
        Point3::new(0.0, 0.0, 1.0)
    } else {
        Point3::new(1.0, 0.0, 0.0)
    };
    a.cross(helper).normalized()
}

/// Rodrigues rotation of `v` about unit `axis`.
fn rotate(v: Point3, axis: Point3, angle: f64) -> Point3 {
    let (s, c) = angle.sin_cos();
    v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannedPlane {
    pub view: View,
    pub pose: PlanePose,
    pub fov: Fov,
    pub dropout: f64,
}

/// Result of slicing one subject.
#[derive(Clone, Debug)]
pub struct SliceOutput {
    pub contours: ContourSet,
    /// Set when every plane was dropped and one localizer was re-acquired.
    pub regenerated: bool,
}

/// Surface hit of the in-plane ray at angle `psi`, if it leaves the torso
/// through the lateral surface.
fn cast(spec: &TorsoSpec, pose: &PlanePose, psi: f64) -> Option<[f64; 2]> {
    let (s, c) = psi.sin_cos();
    let dir = pose.u * c + pose.v * s;
    let at = |t: f64| pose.origin + dir * t;
    if !spec.contains(pose.origin) {
        return None;
    }
    let step = 0.5;
    let mut t0 = 0.0;
    let mut t1 = step;
    while spec.contains(at(t1)) {
        t0 = t1;
        t1 += step;
        if t1 > 500.0 {
            return None;
        }
    }
    for _ in 0..80 {
        let m = 0.5 * (t0 + t1);
        if spec.contains(at(m)) {
            t0 = m;
        } else {
            t1 = m;
        }
    }
    let hit = at(t0);
    let eps = 1e-7;
    if hit.z <= eps || hit.z >= spec.height - eps {
        return None;
    }
    Some([t0 * c, t0 * s])
}

/// Intersects one plane with the torso, clips to the field of view and
/// applies the gap model. Returns zero or more polylines of at least three
/// points.
pub fn slice_plane(
    spec: &TorsoSpec,
    view: View,
    pose: &PlanePose,
    fov: &Fov,
    gaps: &GapModel,
    rays: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Contour> {
    let hits: Vec<Option<[f64; 2]>> = (0..rays)
        .map(|i| cast(spec, pose, std::f64::consts::TAU * i as f64 / rays as f64))
        .collect();
    let mut keep: Vec<bool> = hits
        .iter()
        .map(|h| match h {
            None => false,
            Some(uv) => {
                let z = pose.lift(*uv).z / spec.height;
                fov.contains(*uv) && z <= gaps.shoulder_cut && z >= gaps.waist_cut
            }
        })
        .collect();
    if gaps.arc_probability > 0.0 && rng.random::<f64>() < gaps.arc_probability {
        let (lo, hi) = gaps.arc_fraction;
        let frac = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let len = (frac * rays as f64).round() as usize;
        // bias the gap towards the highest or lowest part of the contour
        let extreme = if rng.random::<bool>() {
            let by_z = |i: &usize| hits[*i].map(|uv| pose.lift(uv).z);
            let up = rng.random::<bool>();
            let cands = (0..rays).filter(|i| hits[*i].is_some());
            if up {
                cands.max_by(|a, b| by_z(a).partial_cmp(&by_z(b)).unwrap())
            } else {
                cands.min_by(|a, b| by_z(a).partial_cmp(&by_z(b)).unwrap())
            }
        } else {
            None
        };
        let center = extreme.unwrap_or_else(|| rng.random_range(0..rays));
        for k in 0..len {
            keep[(center + rays - len / 2 + k) % rays] = false;
        }
    }
    let max_jump = 3.0;
    let all_kept = keep.iter().all(|&k| k);
    let closes = all_kept && {
        let a = hits[rays - 1].unwrap();
        let b = hits[0].unwrap();
        (a[0] - b[0]).hypot(a[1] - b[1]) <= max_jump
    };
    if closes {
        let pts: Vec<[f64; 2]> = hits.iter().map(|h| h.unwrap()).collect();
        let mut runs = split_jumps(&pts, max_jump);
        if runs.len() == 1 {
            return vec![Contour { view, plane: *pose, points: runs.remove(0), closed: true }];
        }
    }
    // rotate so that index 0 follows a removed ray, then collect runs
    let start = (0..rays).find(|&i| !keep[i]).map_or(0, |i| i + 1);
    let mut runs: Vec<Vec<[f64; 2]>> = Vec::new();
    let mut cur: Vec<[f64; 2]> = Vec::new();
    for k in 0..rays {
        let i = (start + k) % rays;
        if keep[i] {
            cur.push(hits[i].unwrap());
        } else if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs.into_iter()
        .flat_map(|r| split_jumps(&r, max_jump))
        .filter(|r| r.len() >= 3)
        .map(|points| Contour { view, plane: *pose, points, closed: false })
        .collect()
}

fn split_jumps(pts: &[[f64; 2]], max_jump: f64) -> Vec<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            let q = pts[i - 1];
            if (p[0] - q[0]).hypot(p[1] - q[1]) > max_jump {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(*p);
    }
    out.push(cur);
    out
}

/// Slices one subject according to `protocol`; deterministic per seed.
pub fn slice_contours(
    surface: &TorsoSurface,
    protocol: &SliceProtocol,
    seed: u64,
) -> Result<SliceOutput> {
    protocol.validate()?;
    let spec = &surface.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = protocol.plan(spec, &mut rng);
    let survive: Vec<bool> = planes.iter().map(|p| rng.random::<f64>() >= p.dropout).collect();
    let mut regenerated = false;
    let mut contours = Vec::new();
    for (plane, _) in planes.iter().zip(&survive).filter(|(_, s)| **s) {
        contours.extend(slice_plane(
            spec,
            plane.view,
            &plane.pose,
            &plane.fov,
            &protocol.gaps,
            protocol.rays,
            &mut rng,
        ));
    }
    if contours.is_empty() {
        regenerated = true;
        let fallback = planes
            .iter()
            .find(|p| p.view.is_localizer())
            .or_else(|| planes.first())
            .ok_or_else(|| Error::Invalid("protocol acquires no planes".into()))?;
        contours = slice_plane(
            spec,
            fallback.view,
            &fallback.pose,
            &fallback.fov,
            &GapModel::none(),
            protocol.rays,
            &mut rng,
        );
        if contours.is_empty() {
            return Err(Error::Invalid("no plane intersects the torso".into()));
        }
    }
    for c in &contours {
        c.validate()?;
    }
    Ok(SliceOutput {
        contours: ContourSet { contours },
        regenerated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::torso::sample_torso;

    fn axial(z: f64) -> PlanePose {
        PlanePose::new(
            Point3::new(0.0, 0.0, z),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        )
        .unwrap()
    }

    #[test]
    fn axial_plane_through_cylinder_is_one_closed_circle() {
        let spec = TorsoSpec::cylinder(60.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = slice_plane(&spec, View::LocalizerAxial, &axial(30.0), &Fov::unbounded(), &GapModel::none(), 180, &mut rng);
        assert_eq!(c.len(), 1);
        assert!(c[0].closed);
        assert_eq!(c[0].points.len(), 180);
        for uv in &c[0].points {
            assert!((uv[0].hypot(uv[1]) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fov_clip_confines_to_half_plane() {
        let spec = TorsoSpec::cylinder(60.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fov = Fov { u_min: 0.0, u_max: f64::INFINITY, v_min: f64::NEG_INFINITY, v_max: f64::INFINITY };
        let c = slice_plane(&spec, View::LocalizerAxial, &axial(30.0), &fov, &GapModel::none(), 180, &mut rng);
        assert_eq!(c.len(), 1);
        assert!(!c[0].closed);
        assert!(c[0].points.iter().all(|uv| uv[0] >= 0.0));
        for p in c[0].lifted() {
            assert!(p.x >= 0.0);
        }
    }

    #[test]
    fn contour_points_lie_on_surface() {
        for seed in 0..10 {
            let (_, surface) = sample_torso(seed);
            let out = slice_contours(&surface, &SliceProtocol::default(), seed).unwrap();
            assert!(!out.contours.contours.is_empty());
            for c in &out.contours.contours {
                assert!(c.points.len() >= 3);
                for p in c.lifted() {
                    let d = surface.spec.radial_deviation(p);
                    assert!(d < 1e-6, "deviation {d} in {}", c.view);
                }
            }
        }
    }

    #[test]
    fn slicing_is_deterministic() {
        let (_, surface) = sample_torso(3);
        let a = slice_contours(&surface, &SliceProtocol::default(), 17).unwrap();
        let b = slice_contours(&surface, &SliceProtocol::default(), 17).unwrap();
        assert_eq!(a.contours, b.contours);
    }

    #[test]
    fn all_dropped_regenerates_one_localizer() {
        let (_, surface) = sample_torso(1);
        let p = SliceProtocol {
            dropout_sax: 1.0,
            dropout_lax: 1.0,
            dropout_localizer: 1.0,
            ..SliceProtocol::default()
        };
        let out = slice_contours(&surface, &p, 2).unwrap();
        assert!(out.regenerated);
        assert!(out.contours.contours.iter().all(|c| c.view.is_localizer()));
    }
}
