use rayon::prelude::*;

use super::eikonal::ActivationMap;
use super::leads::{derive_leads, EcgTrace};
use super::phantom::HeartPhantom;
use crate::electrodes::{Electrode, ElectrodeSet};
use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Cubic smoothstep on [0, 1], clamped outside.
pub fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Transmembrane voltage per voxel at time `t` (ms): rises 0 to 1 over
/// `[tau, tau + upstroke]`. Voxels that never activate stay at 0.
pub fn transmembrane(act: &ActivationMap, t: f64, upstroke: f64) -> Result<Vec<f64>> {
    if !(upstroke > 0.0) {
        return Err(Error::Config(format!("upstroke must be positive, got {upstroke}")));
    }
    Ok(act
        .times
        .iter()
        .map(|&tau| if tau.is_finite() { smoothstep((t - tau) / upstroke) } else { 0.0 })
        .collect())
}

/// Per-tissue-voxel neighbour lists for the gradient stencil.
struct Stencil {
    voxels: Vec<usize>,
    /// (minus, plus) tissue neighbours along each axis.
    sides: Vec<[(Option<usize>, Option<usize>); 3]>,
}

impl Stencil {
    fn new(ph: &HeartPhantom) -> Self {
        let voxels: Vec<usize> = (0..ph.len()).filter(|&i| ph.mask[i]).collect();
        let sides = voxels
            .iter()
            .map(|&v| {
                let pick = |o| ph.offset(v, o).filter(|&n| ph.mask[n]);
                [
                    (pick([-1, 0, 0]), pick([1, 0, 0])),
                    (pick([0, -1, 0]), pick([0, 1, 0])),
                    (pick([0, 0, -1]), pick([0, 0, 1])),
                ]
            })
            .collect();
        Stencil { voxels, sides }
    }

    /// Gradient at the `s`-th tissue voxel: central where both neighbours are
    /// tissue, one-sided where only one is, zero otherwise.
    fn gradient(&self, s: usize, vm: &[f64], h: f64) -> [f64; 3] {
        let v = vm[self.voxels[s]];
        let mut g = [0.0; 3];
        for (a, &(lo, hi)) in self.sides[s].iter().enumerate() {
            g[a] = match (lo, hi) {
                (Some(l), Some(u)) => (vm[u] - vm[l]) / (2.0 * h),
                (None, Some(u)) => (vm[u] - v) / h,
                (Some(l), None) => (v - vm[l]) / h,
                (None, None) => 0.0,
            };
        }
        g
    }
}

/// Volume weights `grad(1/|x - e|) dV` at every tissue voxel.
fn lead_field(ph: &HeartPhantom, st: &Stencil, e: Point3) -> Result<Vec<[f64; 3]>> {
    if ph.contains(e) {
        return Err(Error::ElectrodeInsideTissue { x: e.x, y: e.y, z: e.z });
    }
    let dv = ph.spacing.powi(3);
    Ok(st
        .voxels
        .iter()
        .map(|&v| {
            let d = ph.position(v) - e;
            let r = d.norm();
            let k = -dv / (r * r * r);
            [d.x * k, d.y * k, d.z * k]
        })
        .collect())
}

/// Potential at `e` for one voltage field.
pub fn pseudo_ecg_frame(ph: &HeartPhantom, vm: &[f64], e: Point3) -> Result<f64> {
    if vm.len() != ph.len() {
        return Err(Error::Size {
            context: "transmembrane field",
            expected: ph.len(),
            got: vm.len(),
        });
    }
    let st = Stencil::new(ph);
    let w = lead_field(ph, &st, e)?;
    Ok((0..st.voxels.len())
        .map(|s| {
            let g = st.gradient(s, vm, ph.spacing);
            g[0] * w[s][0] + g[1] * w[s][1] + g[2] * w[s][2]
        })
        .sum())
}

/// Potentials at several electrodes over `times`; one series per electrode.
pub fn pseudo_ecg_multi(
    ph: &HeartPhantom,
    act: &ActivationMap,
    electrodes: &[Point3],
    times: &[f64],
    upstroke: f64,
) -> Result<Vec<Vec<f64>>> {
    transmembrane(act, 0.0, upstroke)?;
    let st = Stencil::new(ph);
    let fields: Vec<Vec<[f64; 3]>> = electrodes.iter().map(|&e| lead_field(ph, &st, e)).collect::<Result<_>>()?;
    let frames: Vec<Vec<f64>> = times
        .par_iter()
        .map(|&t| {
            let mut vm = vec![0.0; ph.len()];
            for &v in &st.voxels {
                let tau = act.times[v];
                if tau.is_finite() {
                    vm[v] = smoothstep((t - tau) / upstroke);
                }
            }
            let grads: Vec<[f64; 3]> = (0..st.voxels.len()).map(|s| st.gradient(s, &vm, ph.spacing)).collect();
            fields
                .iter()
                .map(|w| grads.iter().zip(w).map(|(g, w)| g[0] * w[0] + g[1] * w[1] + g[2] * w[2]).sum())
                .collect()
        })
        .collect();
    Ok((0..electrodes.len()).map(|i| frames.iter().map(|f| f[i]).collect()).collect())
}

/// Single-electrode potential series.
pub fn pseudo_ecg(ph: &HeartPhantom, act: &ActivationMap, e: Point3, times: &[f64], upstroke: f64) -> Result<Vec<f64>> {
    Ok(pseudo_ecg_multi(ph, act, &[e], times, upstroke)?.remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub upstroke_ms: f64,
    pub dt_ms: f64,
    /// Recording continues this long after the last voxel finishes its upstroke.
    pub tail_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            upstroke_ms: 10.0,
            dt_ms: 1.0,
            tail_ms: 10.0,
        }
    }
}

impl SimConfig {
    pub fn times(&self, act: &ActivationMap) -> Vec<f64> {
        let end = act.max_time() + self.upstroke_ms + self.tail_ms;
        let n = (end / self.dt_ms).ceil() as usize + 1;
        (0..n).map(|i| i as f64 * self.dt_ms).collect()
    }
}

/// Eight-lead QRS recorded at the nine non-ground electrodes.
pub fn simulate_ecg(ph: &HeartPhantom, act: &ActivationMap, electrodes: &ElectrodeSet, cfg: &SimConfig) -> Result<EcgTrace> {
    if !(cfg.dt_ms > 0.0) || !(cfg.tail_ms >= 0.0) {
        return Err(Error::Config("sampling period must be positive and tail non-negative".into()));
    }
    let times = cfg.times(act);
    let chans: Vec<Point3> = Electrode::ALL
        .iter()
        .filter(|&&e| e != Electrode::RL)
        .map(|&e| electrodes.get(e))
        .collect();
    let pots = pseudo_ecg_multi(ph, act, &chans, &times, cfg.upstroke_ms)?;
    derive_leads(&pots, cfg.dt_ms)
}
