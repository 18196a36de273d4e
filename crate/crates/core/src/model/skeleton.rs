use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, SpatialIndex};

/// Squared separation below which two keypoints count as coincident.
const COINCIDENT_SQ: f64 = 1e-20;

/// Curves and triangle patches spanning a keypoint set, sampled and pulled
/// towards a coarse surface.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceSkeleton {
    pub samples: PointCloud,
    pub edges: Vec<[usize; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Interpolation weights of every sample over its element's keypoints.
    /// Edge samples leave the third slot at weight zero.
    pub weights: Vec<[(usize, f64); 3]>,
    /// Coarse point each sample was projected towards.
    pub nearest: Vec<usize>,
    /// Elements dropped because their keypoints coincide.
    pub skipped: usize,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkeletonParams {
    pub neighbors: usize,
    pub density: usize,
    pub alpha: f64,
}

impl Default for SkeletonParams {
    fn default() -> Self {
        SkeletonParams {
            neighbors: 3,
            density: 8,
            alpha: 0.5,
        }
    }
}

/// Evenly spread barycentric weights for the `s`-th of `d` triangle samples.
pub fn triangle_weights(s: usize, d: usize) -> [f64; 3] {
    const GOLDEN: f64 = 0.618_033_988_749_894_8;
    let u = (s as f64 + 0.5) / d as f64;
    let v = (s as f64 * GOLDEN + 0.5).fract();
    let r = u.sqrt();
    let w1 = r * (1.0 - v);
    let w2 = r * v;
    [1.0 - w1 - w2, w1, w2]
}

/// Links every keypoint to its nearest neighbours, closes triangles between
/// mutually linked triples and samples both kinds of element.
///
/// Each sample is `(1 - alpha) * interpolated + alpha * nearest coarse point`.
pub fn build_skeleton(keypoints: &[Point3], coarse: &PointCloud, params: SkeletonParams) -> Result<SurfaceSkeleton> {
    let n = keypoints.len();
    if n < 2 {
        return Err(Error::Size {
            context: "skeleton keypoints",
            expected: 2,
            got: n,
        });
    }
    coarse.require_nonempty("skeleton coarse cloud")?;
    if params.density == 0 || params.neighbors == 0 || !(0.0..=1.0).contains(&params.alpha) {
        return Err(Error::Config("skeleton needs positive density and neighbours, alpha in [0, 1]".into()));
    }
    let k = params.neighbors.min(n - 1);
    let mut linked = vec![false; n * n];
    let mut skipped = 0usize;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            keypoints[i]
                .dist_sq(keypoints[a])
                .total_cmp(&keypoints[i].dist_sq(keypoints[b]))
                .then(a.cmp(&b))
        });
        for &j in &order[..k] {
            linked[i * n + j] = true;
            linked[j * n + i] = true;
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if !linked[i * n + j] {
                continue;
            }
            if keypoints[i].dist_sq(keypoints[j]) <= COINCIDENT_SQ {
                skipped += 1;
                linked[i * n + j] = false;
                linked[j * n + i] = false;
                continue;
            }
            edges.push([i, j]);
        }
    }
    let mut triangles = Vec::new();
    for &[i, j] in &edges {
        for m in j + 1..n {
            if linked[i * n + m] && linked[j * n + m] {
                let area2 = (keypoints[j] - keypoints[i]).cross(keypoints[m] - keypoints[i]).norm_sq();
                if area2 <= COINCIDENT_SQ * COINCIDENT_SQ {
                    skipped += 1;
                } else {
                    triangles.push([i, j, m]);
                }
            }
        }
    }

    let d = params.density;
    let mut weights = Vec::with_capacity((edges.len() + triangles.len()) * d);
    for &[i, j] in &edges {
        for s in 0..d {
            let t = (s + 1) as f64 / (d + 1) as f64;
            weights.push([(i, 1.0 - t), (j, t), (j, 0.0)]);
        }
    }
    for &[i, j, m] in &triangles {
        for s in 0..d {
            let [a, b, c] = triangle_weights(s, d);
            weights.push([(i, a), (j, b), (m, c)]);
        }
    }

    let index = SpatialIndex::new(&coarse.points);
    let mut points = Vec::with_capacity(weights.len());
    let mut nearest = Vec::with_capacity(weights.len());
    for w in &weights {
        let interp = w.iter().fold(Point3::ZERO, |acc, &(idx, wt)| acc + keypoints[idx] * wt);
        let (c, _) = index.nearest(interp);
        nearest.push(c);
        points.push(interp * (1.0 - params.alpha) + coarse.points[c] * params.alpha);
    }
    Ok(SurfaceSkeleton {
        samples: PointCloud::new(points),
        edges,
        triangles,
        weights,
        nearest,
        skipped,
        alpha: params.alpha,
    })
}

impl SurfaceSkeleton {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Scatters sample gradients onto keypoints and coarse points.
    pub fn backward(&self, d_samples: &[Point3], d_keypoints: &mut [Point3], d_coarse: &mut [Point3]) {
        for ((w, &c), &g) in self.weights.iter().zip(&self.nearest).zip(d_samples) {
            for &(idx, wt) in w {
                d_keypoints[idx] += g * (wt * (1.0 - self.alpha));
            }
            d_coarse[c] += g * self.alpha;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn two_keypoints_give_evenly_spaced_segment_samples() {
        let kp = [p(0.0, 0.0, 0.0), p(4.0, 0.0, 0.0)];
        let coarse = PointCloud::new(vec![p(100.0, 0.0, 0.0)]);
        let sk = build_skeleton(&kp, &coarse, SkeletonParams { neighbors: 3, density: 3, alpha: 0.0 }).unwrap();
        assert_eq!(sk.edges, vec![[0, 1]]);
        assert!(sk.triangles.is_empty());
        let xs: Vec<f64> = sk.samples.points.iter().map(|q| q.x).collect();
        assert_eq!(xs, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn full_projection_lands_on_coarse_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kp: Vec<Point3> = (0..12).map(|_| p(rng.random(), rng.random(), rng.random())).collect();
        let coarse = PointCloud::new((0..50).map(|_| p(rng.random(), rng.random(), rng.random())).collect());
        let sk = build_skeleton(&kp, &coarse, SkeletonParams { alpha: 1.0, ..Default::default() }).unwrap();
        assert!(!sk.triangles.is_empty());
        for q in &sk.samples.points {
            assert!(coarse.points.contains(q));
        }
    }

    #[test]
    fn sample_count_is_density_times_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let kp: Vec<Point3> = (0..20).map(|_| p(rng.random(), rng.random(), rng.random())).collect();
        let coarse = PointCloud::new(kp.clone());
        let sk = build_skeleton(&kp, &coarse, SkeletonParams::default()).unwrap();
        assert_eq!(sk.len(), 8 * (sk.edges.len() + sk.triangles.len()));
        for &[i, j] in &sk.edges {
            assert!(i < j);
        }
    }

    #[test]
    fn triangle_weights_reconstruct_samples() {
        for d in [1, 3, 8, 17] {
            for s in 0..d {
                let w = triangle_weights(s, d);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(w.iter().all(|&x| x >= -1e-15));
            }
        }
        let kp = [p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)];
        let coarse = PointCloud::new(vec![p(9.0, 9.0, 9.0)]);
        let sk = build_skeleton(&kp, &coarse, SkeletonParams { neighbors: 2, density: 5, alpha: 0.0 }).unwrap();
        assert_eq!(sk.triangles, vec![[0, 1, 2]]);
        for (q, w) in sk.samples.points.iter().zip(&sk.weights) {
            let sum: f64 = w.iter().map(|x| x.1).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let rebuilt = w.iter().fold(Point3::ZERO, |a, &(i, wt)| a + kp[i] * wt);
            assert!(rebuilt.dist(*q) < 1e-12);
            assert!(q.x >= -1e-12 && q.y >= -1e-12 && q.x + q.y <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn coincident_keypoints_are_skipped() {
        let kp = [p(0.0, 0.0, 0.0), p(0.0, 0.0, 0.0), p(1.0, 0.0, 0.0), p(0.0, 1.0, 0.0)];
        let coarse = PointCloud::new(kp.to_vec());
        let sk = build_skeleton(&kp, &coarse, SkeletonParams::default()).unwrap();
        assert!(sk.skipped >= 1);
        assert!(!sk.edges.contains(&[0, 1]));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let kp: Vec<Point3> = (0..6).map(|_| p(rng.random(), rng.random(), rng.random())).collect();
        let coarse = PointCloud::new((0..30).map(|_| p(rng.random(), rng.random(), rng.random())).collect());
        let params = SkeletonParams { neighbors: 3, density: 4, alpha: 0.3 };
        let sk = build_skeleton(&kp, &coarse, params).unwrap();
        let dirs: Vec<Point3> = (0..sk.len()).map(|_| p(rng.random(), rng.random(), rng.random())).collect();
        let obj = |s: &SurfaceSkeleton| s.samples.points.iter().zip(&dirs).map(|(a, b)| a.dot(*b)).sum::<f64>();
        let mut dk = vec![Point3::ZERO; kp.len()];
        let mut dc = vec![Point3::ZERO; coarse.len()];
        sk.backward(&dirs, &mut dk, &mut dc);
        let h = 1e-6;
        for i in 0..kp.len() {
            for a in 0..3 {
                let mut up = kp.clone();
                let mut dn = kp.clone();
                let mut e = [0.0; 3];
                e[a] = h;
                up[i] += Point3::from_array(e);
                dn[i] += Point3::from_array(e) * -1.0;
                let su = build_skeleton(&up, &coarse, params).unwrap();
                let sd = build_skeleton(&dn, &coarse, params).unwrap();
                if su.nearest != sk.nearest || sd.nearest != sk.nearest {
                    continue;
                }
                let fd = (obj(&su) - obj(&sd)) / (2.0 * h);
                assert!((fd - dk[i][a]).abs() < 1e-6, "{fd} vs {}", dk[i][a]);
            }
        }
    }
}
