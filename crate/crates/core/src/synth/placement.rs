//! Canonical electrode placement on a parametric torso.
//!
//! Positions are fixed conventions of this crate: each electrode sits at a
//! fraction of torso height and a polar angle measured from the subject's
//! left lateral direction (+x) towards anterior (+y). The chest leads run
//! from the sternal border (V1, V2) to the mid-axillary line (V6); V4-V6
//! share the fifth-intercostal level.

use crate::electrodes::{Electrode, ElectrodeSet, N_ELECTRODES};
use crate::geometry::Point3;

use super::torso::{TorsoSpec, TorsoSurface};

/// `(height fraction, polar angle in degrees)` per electrode, canonical order.
pub const PLACEMENT: [(f64, f64); N_ELECTRODES] = [
    (0.93, 40.0),  // LA
    (0.93, 140.0), // RA
    (0.06, 60.0),  // LL
    (0.06, 120.0), // RL
    (0.70, 98.0),  // V1
    (0.70, 82.0),  // V2
    (0.665, 70.0), // V3
    (0.63, 58.0),  // V4
    (0.63, 32.0),  // V5
    (0.63, 0.0),   // V6
];

/// Places all ten electrodes on the analytic surface.
pub fn place_electrodes(spec: &TorsoSpec, _surface: &TorsoSurface) -> ElectrodeSet {
    placement_for(spec)
}

pub fn placement_for(spec: &TorsoSpec) -> ElectrodeSet {
    let mut positions = [Point3::ZERO; N_ELECTRODES];
    for e in Electrode::ALL {
        let (frac, deg) = PLACEMENT[e.index()];
        let deg = if spec.mirrored { 180.0 - deg } else { deg };
        positions[e.index()] = spec.ray_point(frac * spec.height, deg.to_radians());
    }
    let mut set = ElectrodeSet::new(positions);
    if spec.mirrored {
        set.positions.swap(Electrode::LA.index(), Electrode::RA.index());
        set.positions.swap(Electrode::LL.index(), Electrode::RL.index());
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::torso::sample_torso;

    #[test]
    fn mirrored_subject_swaps_sides() {
        let (spec, _) = sample_torso(5);
        let base = placement_for(&spec);
        let mut m = spec.clone();
        m.mirrored = true;
        let mirrored = placement_for(&m);
        let expect = base.mirrored_x();
        for (a, b) in mirrored.positions.iter().zip(&expect.positions) {
            assert!(a.dist(*b) < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn heights_scale_with_torso_height() {
        let (spec, _) = sample_torso(8);
        let mut tall = spec.clone();
        tall.height = spec.height * 1.2;
        let a = placement_for(&spec);
        let b = placement_for(&tall);
        for (p, q) in a.positions.iter().zip(&b.positions) {
            assert!((q.z - 1.2 * p.z).abs() < 1e-9);
            assert!((q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9);
        }
    }

    #[test]
    fn v6_on_left_mid_axillary_line() {
        for seed in 0..10 {
            let (spec, _) = sample_torso(seed);
            let v6 = placement_for(&spec).get(Electrode::V6);
            let (a, _, _) = spec.section_at(v6.z);
            assert!((v6.x - a).abs() < 1e-9, "x {} vs a {}", v6.x, a);
            assert!(v6.y.abs() < 1e-9);
        }
    }

    #[test]
    fn all_electrodes_on_surface() {
        for seed in 0..20 {
            let (spec, _) = sample_torso(seed);
            let set = placement_for(&spec);
            for e in Electrode::ALL {
                assert!(spec.radial_deviation(set.get(e)) < 1e-6);
            }
            // V4-V6 share one level
            let z4 = set.get(Electrode::V4).z;
            assert_eq!(z4, set.get(Electrode::V5).z);
            assert_eq!(z4, set.get(Electrode::V6).z);
        }
    }
}
