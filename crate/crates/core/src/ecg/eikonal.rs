use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::phantom::HeartPhantom;
use crate::error::Result;
use crate::geometry::Point3;

/// Activation times (ms) per voxel; infinite outside the myocardium.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationMap {
    pub times: Vec<f64>,
    /// Mask voxels the front never reached.
    pub unreachable: Vec<usize>,
    /// Voxels in the order the front accepted them.
    pub order: Vec<usize>,
}

impl ActivationMap {
    /// Latest finite activation time.
    pub fn max_time(&self) -> f64 {
        self.times.iter().copied().filter(|t| t.is_finite()).fold(0.0, f64::max)
    }
}

#[derive(PartialEq)]
struct Entry {
    t: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.t.total_cmp(&self.t).then(o.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Travel-time metric `(d . d - c (f . d)^2) / v^2`.
#[derive(Clone, Copy)]
struct Metric {
    inv_v2: f64,
    c: f64,
    f: Point3,
}

impl Metric {
    fn dot(&self, a: Point3, b: Point3) -> f64 {
        (a.dot(b) - self.c * self.f.dot(a) * self.f.dot(b)) * self.inv_v2
    }
}

fn neighbour_offsets() -> Vec<[i64; 3]> {
    let mut out = Vec::with_capacity(26);
    for k in -1..=1 {
        for j in -1..=1 {
            for i in -1..=1 {
                if (i, j, k) != (0, 0, 0) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

fn adjacent(a: [i64; 3], b: [i64; 3]) -> bool {
    a != b && (0..3).all(|k| (a[k] - b[k]).abs() <= 1)
}

fn vec_of(o: [i64; 3], h: f64) -> Point3 {
    Point3::new(o[0] as f64 * h, o[1] as f64 * h, o[2] as f64 * h)
}

/// Minimum over the segment interior of linear interpolation plus travel
/// time, where `a` points from the target to vertex 0 and `b` from vertex 0
/// to vertex 1.
fn segment_update(m: &Metric, t0: f64, t1: f64, a: Point3, b: Point3) -> Option<f64> {
    let ga = m.dot(b, b);
    let gb = m.dot(b, a);
    let c = m.dot(a, a);
    let delta = t1 - t0;
    let den = 1.0 - delta * delta / ga;
    if ga <= 0.0 || den <= 0.0 {
        return None;
    }
    let r = (c - gb * gb / ga).max(0.0);
    let s = (r / den).sqrt();
    let lambda = (-gb - s * delta) / ga;
    (lambda > 0.0 && lambda < 1.0).then_some(t0 + lambda * delta + s)
}

/// Same over the interior of the triangle (x0, x0 + b1, x0 + b2).
fn triangle_update(m: &Metric, t: [f64; 3], a: Point3, b1: Point3, b2: Point3) -> Option<f64> {
    let g00 = m.dot(b1, b1);
    let g01 = m.dot(b1, b2);
    let g11 = m.dot(b2, b2);
    let det = g00 * g11 - g01 * g01;
    if det <= 1e-12 * g00 * g11 {
        return None;
    }
    let inv = [g11 / det, -g01 / det, g00 / det];
    let g = [m.dot(b1, a), m.dot(b2, a)];
    let c = m.dot(a, a);
    let l0 = [-(inv[0] * g[0] + inv[1] * g[1]), -(inv[1] * g[0] + inv[2] * g[1])];
    let r = (c + g[0] * l0[0] + g[1] * l0[1]).max(0.0);
    let d = [t[1] - t[0], t[2] - t[0]];
    let w = [inv[0] * d[0] + inv[1] * d[1], inv[1] * d[0] + inv[2] * d[1]];
    let den = 1.0 - (d[0] * w[0] + d[1] * w[1]);
    if den <= 0.0 {
        return None;
    }
    let s = (r / den).sqrt();
    let l = [l0[0] - s * w[0], l0[1] - s * w[1]];
    (l[0] > 0.0 && l[1] > 0.0 && l[0] + l[1] < 1.0).then(|| t[0] + l[0] * d[0] + l[1] * d[1] + s)
}

/// Earliest activation times from the phantom's roots.
///
/// Fast marching on the 26-neighbour stencil: a voxel is updated from every
/// accepted neighbour, every accepted adjacent pair and every accepted
/// mutually adjacent triple, keeping only causal candidates (not earlier than
/// the front). Single-neighbour candidates make the result never exceed the
/// 26-neighbour graph distance.
pub fn solve_eikonal(ph: &HeartPhantom) -> Result<ActivationMap> {
    ph.check_basic()?;
    let n = ph.len();
    let h = ph.spacing;
    let offsets = neighbour_offsets();
    let (c, f) = match &ph.fiber {
        Some(fb) => (1.0 - 1.0 / (fb.factor * fb.factor), fb.direction.normalized()),
        None => (0.0, Point3::ZERO),
    };
    let mut times = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let mut heap = BinaryHeap::new();
    for &r in &ph.roots {
        times[r] = 0.0;
        heap.push(Entry { t: 0.0, idx: r });
    }
    let mut order = Vec::with_capacity(ph.tissue_count());
    let mut near: Vec<([i64; 3], f64)> = Vec::with_capacity(26);
    while let Some(Entry { t: tn, idx: nv }) = heap.pop() {
        if accepted[nv] || tn > times[nv] {
            continue;
        }
        accepted[nv] = true;
        order.push(nv);
        for &o in &offsets {
            let Some(x) = ph.offset(nv, o) else { continue };
            if !ph.mask[x] || accepted[x] {
                continue;
            }
            let v = ph.velocity[x];
            let m = Metric {
                inv_v2: 1.0 / (v * v),
                c,
                f,
            };
            // Offsets below are relative to x.
            let on = [-o[0], -o[1], -o[2]];
            let an = vec_of(on, h);
            let mut best = tn + m.dot(an, an).sqrt();
            near.clear();
            for &o2 in &offsets {
                if !adjacent(o2, on) {
                    continue;
                }
                if let Some(y) = ph.offset(x, o2) {
                    if accepted[y] {
                        near.push((o2, times[y]));
                    }
                }
            }
            for (i, &(om, tm)) in near.iter().enumerate() {
                let b = vec_of(om, h) - an;
                if let Some(val) = segment_update(&m, tn, tm, an, b) {
                    if val >= tn && val < best {
                        best = val;
                    }
                }
                for &(ok, tk) in &near[i + 1..] {
                    if !adjacent(om, ok) {
                        continue;
                    }
                    let b2 = vec_of(ok, h) - an;
                    if let Some(val) = triangle_update(&m, [tn, tm, tk], an, b, b2) {
                        if val >= tn && val < best {
                            best = val;
                        }
                    }
                }
            }
            if best < times[x] {
                times[x] = best;
                heap.push(Entry { t: best, idx: x });
            }
        }
    }
    let unreachable = (0..n).filter(|&i| ph.mask[i] && !accepted[i]).collect();
    for i in 0..n {
        if !ph.mask[i] {
            times[i] = f64::INFINITY;
        }
    }
    Ok(ActivationMap {
        times,
        unreachable,
        order,
    })
}
