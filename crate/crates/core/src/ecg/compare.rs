use super::leads::EcgTrace;
use crate::error::{Error, Result};
use crate::eval::stats::{mean, pearson};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dtw {
    pub distance: f64,
    /// A series had zero variance and was compared without normalization.
    pub flagged: bool,
}

/// Z-scored copy of `x`, or `x` itself when it has zero variance.
fn zscore(x: &[f64]) -> (Vec<f64>, bool) {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64;
    if var > 0.0 {
        let sd = var.sqrt();
        (x.iter().map(|v| (v - m) / sd).collect(), false)
    } else {
        (x.to_vec(), true)
    }
}

/// Alignment cost of two raw series divided by the warping-path length.
///
/// Steps (1,0), (0,1), (1,1); ties prefer the lower cost, then the shorter
/// path.
pub fn dtw_raw(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("dtw series"));
    }
    let m = b.len();
    let mut prev: Vec<(f64, usize)> = vec![(f64::INFINITY, 0); m];
    let mut cur = prev.clone();
    for (i, &x) in a.iter().enumerate() {
        for j in 0..m {
            let c = (x - b[j]).abs();
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let mut cands = [(f64::INFINITY, 0); 3];
                if i > 0 {
                    cands[0] = prev[j];
                }
                if j > 0 {
                    cands[1] = cur[j - 1];
                }
                if i > 0 && j > 0 {
                    cands[2] = prev[j - 1];
                }
                cands
                    .into_iter()
                    .min_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)))
                    .unwrap_or((f64::INFINITY, 0))
            };
            cur[j] = (best.0 + c, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (cost, len) = prev[m - 1];
    Ok(cost / len as f64)
}

/// DTW distance between z-score normalized series.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<Dtw> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("dtw series"));
    }
    let (za, fa) = zscore(a);
    let (zb, fb) = zscore(b);
    Ok(Dtw {
        distance: dtw_raw(&za, &zb)?,
        flagged: fa || fb,
    })
}

/// First-to-last time (ms) any lead's slope exceeds `fraction` of that
/// lead's steepest slope.
pub fn qrs_duration(tr: &EcgTrace, fraction: f64) -> f64 {
    let n = tr.len();
    if n < 2 {
        return 0.0;
    }
    let mut first = usize::MAX;
    let mut last = 0;
    for l in &tr.leads {
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                ((l[hi] - l[lo]) / ((hi - lo) as f64 * tr.dt_ms)).abs()
            })
            .collect();
        let peak = d.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            continue;
        }
        let thr = fraction * peak;
        if let Some(f) = d.iter().position(|&x| x > thr) {
            first = first.min(f);
        }
        if let Some(l) = d.iter().rposition(|&x| x > thr) {
            last = last.max(l);
        }
    }
    if first == usize::MAX {
        0.0
    } else {
        (last - first) as f64 * tr.dt_ms
    }
}

/// R (largest positive) over S (largest negative magnitude) deflection;
/// `None` when the lead has no negative deflection.
pub fn rs_ratio(x: &[f64]) -> Option<f64> {
    let r = x.iter().copied().fold(0.0, f64::max);
    let s = -x.iter().copied().fold(0.0, f64::min);
    (s > 0.0).then(|| r / s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcgComparison {
    pub dtw: [f64; 8],
    /// NaN where a lead is flat in exactly one trace.
    pub pearson: [f64; 8],
    pub mean_dtw: f64,
    pub mean_pearson: f64,
    pub qrs_pred_ms: f64,
    pub qrs_gt_ms: f64,
    pub qrs_diff_ms: f64,
    /// Mean absolute R/S difference over leads where both ratios exist.
    pub rs_diff: f64,
}

pub const DEFAULT_QRS_FRACTION: f64 = 0.05;

pub fn compare_ecgs(pred: &EcgTrace, gt: &EcgTrace, qrs_fraction: f64) -> Result<EcgComparison> {
    if pred.dt_ms != gt.dt_ms {
        return Err(Error::Invalid(format!(
            "sample periods differ: {} vs {} ms",
            pred.dt_ms, gt.dt_ms
        )));
    }
    let mut d = [0.0; 8];
    let mut r = [0.0; 8];
    let mut rs = Vec::new();
    for l in 0..8 {
        let (p, g) = (&pred.leads[l], &gt.leads[l]);
        d[l] = dtw(p, g)?.distance;
        r[l] = if p == g {
            1.0
        } else if p.len() == g.len() {
            pearson(p, g).unwrap_or(f64::NAN)
        } else {
            f64::NAN
        };
        if let (Some(a), Some(b)) = (rs_ratio(p), rs_ratio(g)) {
            rs.push((a - b).abs());
        }
    }
    let finite: Vec<f64> = r.iter().copied().filter(|x| x.is_finite()).collect();
    let qp = qrs_duration(pred, qrs_fraction);
    let qg = qrs_duration(gt, qrs_fraction);
    Ok(EcgComparison {
        dtw: d,
        pearson: r,
        mean_dtw: mean(&d),
        mean_pearson: if finite.is_empty() { f64::NAN } else { mean(&finite) },
        qrs_pred_ms: qp,
        qrs_gt_ms: qg,
        qrs_diff_ms: (qp - qg).abs(),
        rs_diff: if rs.is_empty() { 0.0 } else { mean(&rs) },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(t: f64, c: f64, w: f64) -> f64 {
        (-((t - c) / w).powi(2)).exp()
    }

    fn trace(f: impl Fn(usize, f64) -> f64) -> EcgTrace {
        let leads: [Vec<f64>; 8] = std::array::from_fn(|l| (0..80).map(|i| f(l, i as f64)).collect());
        EcgTrace::new(1.0, leads).unwrap()
    }

    #[test]
    fn five_sample_table_by_hand() {
        // Cumulative table for |a - b| costs; the last row is 4 4 4 2 2 and the
        // cheapest path is the diagonal, cost 2 over 5 cells.
        let a = [0.0, 1.0, 2.0, 1.0, 0.0];
        let b = [0.0, 2.0, 2.0, 0.0, 0.0];
        let got = dtw_raw(&a, &b).unwrap();
        assert_eq!(got, 2.0 / 5.0);
    }

    #[test]
    fn symmetric_and_zero_on_self() {
        let a: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..33).map(|i| (i as f64 * 0.37).cos() * 2.0).collect();
        assert_eq!(dtw(&a, &a).unwrap().distance, 0.0);
        assert_eq!(dtw(&a, &b).unwrap().distance, dtw(&b, &a).unwrap().distance);
        let flat = dtw(&[1.0; 5], &a).unwrap();
        assert!(flat.flagged && flat.distance >= 0.0);
        assert!(dtw(&[], &a).is_err());
    }

    #[test]
    fn warping_absorbs_a_small_shift() {
        let a: Vec<f64> = (0..100).map(|i| bump(i as f64, 40.0, 6.0)).collect();
        let b: Vec<f64> = (0..100).map(|i| bump(i as f64, 43.0, 6.0)).collect();
        let (za, _) = zscore(&a);
        let (zb, _) = zscore(&b);
        let pointwise = za.iter().zip(&zb).map(|(x, y)| (x - y).abs()).sum::<f64>() / 100.0;
        assert!(dtw(&a, &b).unwrap().distance < pointwise);
    }

    #[test]
    fn identical_and_scaled_traces() {
        let gt = trace(|l, t| bump(t, 30.0 + l as f64, 5.0) - 0.5 * bump(t, 45.0, 4.0));
        let c = compare_ecgs(&gt, &gt, DEFAULT_QRS_FRACTION).unwrap();
        assert_eq!(c.mean_dtw, 0.0);
        assert_eq!(c.mean_pearson, 1.0);
        assert_eq!(c.qrs_diff_ms, 0.0);
        assert_eq!(c.rs_diff, 0.0);
        let doubled = EcgTrace::new(1.0, gt.leads.clone().map(|l| l.iter().map(|x| 2.0 * x).collect())).unwrap();
        let c = compare_ecgs(&doubled, &gt, DEFAULT_QRS_FRACTION).unwrap();
        for l in 0..8 {
            assert!((c.pearson[l] - 1.0).abs() < 1e-12);
            assert!(c.dtw[l] < 1e-12);
        }
    }

    #[test]
    fn constructed_two_deflection_ratio() {
        let x: Vec<f64> = (0..100).map(|i| 2.0 * bump(i as f64, 30.0, 3.0) - bump(i as f64, 60.0, 3.0)).collect();
        let r = rs_ratio(&x).unwrap();
        assert!((r - 2.0).abs() < 1e-9, "{r}");
        assert_eq!(rs_ratio(&[0.0, 1.0, 0.5]), None);
    }

    #[test]
    fn qrs_duration_spans_active_samples() {
        let tr = trace(|l, t| if l == 0 && (20.0..=30.0).contains(&t) { (t - 20.0) * 0.1 } else if l == 0 && t > 30.0 { 1.0 } else { 0.0 });
        // Central slopes are non-zero from the ramp start to its end.
        assert_eq!(qrs_duration(&tr, 0.05), 10.0);
    }
}
