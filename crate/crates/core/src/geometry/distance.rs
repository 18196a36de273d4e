use super::index::SpatialIndex;
use super::point::{Point3, PointCloud};
use crate::electrodes::{ElectrodeSet, N_ELECTRODES};
use crate::error::{Error, Result};

/// Per-pair distance used inside a Chamfer sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChamferKind {
    /// Plain Euclidean distance; the result is in the input units (cm).
    #[default]
    Euclidean,
    /// Squared Euclidean distance; smoother, used for training losses.
    Squared,
}

impl ChamferKind {
    #[inline]
    pub fn term(self, d_sq: f64) -> f64 {
        match self {
            ChamferKind::Euclidean => d_sq.sqrt(),
            ChamferKind::Squared => d_sq,
        }
    }
}

/// Symmetric Chamfer distance with unsquared terms, in cm.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_with(a, b, ChamferKind::Euclidean)
}

/// Mean nearest-neighbour term from `a` to `b` plus the reverse direction.
pub fn chamfer_with(a: &PointCloud, b: &PointCloud, kind: ChamferKind) -> Result<f64> {
    a.require_nonempty("chamfer")?;
    b.require_nonempty("chamfer")?;
    let ia = SpatialIndex::new(&a.points);
    let ib = SpatialIndex::new(&b.points);
    Ok(one_way(&a.points, &ib, kind) + one_way(&b.points, &ia, kind))
}

fn one_way(from: &[Point3], to: &SpatialIndex, kind: ChamferKind) -> f64 {
    let s: f64 = from.iter().map(|&p| kind.term(to.nearest(p).1)).sum();
    s / from.len() as f64
}

/// Mean absolute coordinate error between index-matched clouds.
pub fn mae_points(pred: &PointCloud, gt: &PointCloud) -> Result<f64> {
    check_matched(pred, gt)?;
    let s: f64 = pred
        .points
        .iter()
        .zip(&gt.points)
        .map(|(p, g)| ((p.x - g.x).abs() + (p.y - g.y).abs() + (p.z - g.z).abs()) / 3.0)
        .sum();
    Ok(s / pred.len() as f64)
}

/// Mean Euclidean norm of the per-point difference (MAE ablation variant).
pub fn mean_norm_error(pred: &PointCloud, gt: &PointCloud) -> Result<f64> {
    check_matched(pred, gt)?;
    let s: f64 = pred.points.iter().zip(&gt.points).map(|(p, g)| p.dist(*g)).sum();
    Ok(s / pred.len() as f64)
}

fn check_matched(pred: &PointCloud, gt: &PointCloud) -> Result<()> {
    pred.require_nonempty("point error")?;
    if pred.len() != gt.len() {
        return Err(Error::Size {
            context: "matched point clouds",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    Ok(())
}

/// Per-electrode Euclidean distances and their mean, in cm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElectrodeErrors {
    pub per_electrode: [f64; N_ELECTRODES],
    pub mean: f64,
}

pub fn euclidean_error(pred: &ElectrodeSet, gt: &ElectrodeSet) -> ElectrodeErrors {
    let mut per_electrode = [0.0; N_ELECTRODES];
    for (i, d) in per_electrode.iter_mut().enumerate() {
        *d = pred.positions[i].dist(gt.positions[i]);
    }
    let mean = per_electrode.iter().sum::<f64>() / N_ELECTRODES as f64;
    ElectrodeErrors {
        per_electrode,
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrodes::Electrode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
    }

    fn brute_chamfer(a: &PointCloud, b: &PointCloud) -> f64 {
        let dir = |x: &PointCloud, y: &PointCloud| {
            x.points
                .iter()
                .map(|p| {
                    y.points
                        .iter()
                        .map(|q| p.dist(*q))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / x.len() as f64
        };
        dir(a, b) + dir(b, a)
    }

    #[test]
    fn chamfer_identity_and_single_pair() {
        let a = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)]);
        let b = PointCloud::new(vec![Point3::new(3.0, 4.0, 0.0)]);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(chamfer(&a, &b).unwrap(), 10.0);
    }

    #[test]
    fn chamfer_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_cloud(&mut rng, 50);
            let b = random_cloud(&mut rng, 50);
            let got = chamfer(&a, &b).unwrap();
            assert!((got - brute_chamfer(&a, &b)).abs() < 1e-9);
            assert_eq!(got, chamfer(&b, &a).unwrap());
        }
    }

    #[test]
    fn chamfer_rejects_empty() {
        let a = PointCloud::new(vec![Point3::ZERO]);
        assert!(matches!(
            chamfer(&a, &PointCloud::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn mae_uniform_offset_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_cloud(&mut rng, 10);
        let pred = gt.map(|p| p + Point3::new(1.0, 1.0, 1.0));
        assert!((mae_points(&pred, &gt).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mae_points(&gt, &gt).unwrap(), 0.0);
        let short = PointCloud::new(gt.points[..3].to_vec());
        assert!(matches!(mae_points(&short, &gt), Err(Error::Size { .. })));
    }

    #[test]
    fn euclidean_error_three_four_five() {
        let gt = ElectrodeSet::new([Point3::ZERO; N_ELECTRODES]);
        let mut pred = gt;
        pred.positions[Electrode::V3.index()] = Point3::new(0.0, 3.0, 4.0);
        let e = euclidean_error(&pred, &gt);
        assert_eq!(e.per_electrode[Electrode::V3.index()], 5.0);
        assert_eq!(e.mean, 0.5);
        assert_eq!(euclidean_error(&gt, &gt).mean, 0.0);
    }
}
