use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample (n - 1) standard deviation; zero for a single value.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Quantile by linear interpolation between order statistics (type 7):
/// position `(n - 1) p` in the sorted sample.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sample sd and five-number summary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::EmptyInput("summary values"));
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    Ok(Summary {
        n: s.len(),
        mean: mean(values),
        sd: sample_sd(values),
        min: s[0],
        q1: quantile(&s, 0.25),
        median: quantile(&s, 0.5),
        q3: quantile(&s, 0.75),
        max: s[s.len() - 1],
    })
}

/// Ranks starting at 1; tied values share the average of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationReport {
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

fn pearson_raw(x: &[f64], y: &[f64]) -> Result<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("x is constant"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("y is constant"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y, 2)?;
    pearson_raw(x, y)
}

fn check_pairs(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Size {
            context: "paired samples",
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < min {
        return Err(Error::Size {
            context: "paired samples (minimum)",
            expected: min,
            got: x.len(),
        });
    }
    Ok(())
}

/// Pearson, Spearman and the least-squares line of `y` on `x`.
pub fn correlate(x: &[f64], y: &[f64]) -> Result<CorrelationReport> {
    check_pairs(x, y, 3)?;
    let pearson = pearson_raw(x, y)?;
    let spearman = pearson_raw(&average_ranks(x), &average_ranks(y))?;
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let fitted: Vec<f64> = x.iter().map(|a| intercept + slope * a).collect();
    let r2 = match pearson_raw(&fitted, y) {
        Ok(r) => r * r,
        Err(_) => 0.0,
    };
    Ok(CorrelationReport {
        n: x.len(),
        pearson,
        spearman,
        slope,
        intercept,
        r2,
    })
}

/// Welch's two-sample t-test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Welch {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
}

pub fn significance(a: &[f64], b: &[f64]) -> Result<Welch> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Size {
            context: "t-test group size (minimum)",
            expected: 2,
            got: a.len().min(b.len()),
        });
    }
    let (ma, mb) = (mean(a), mean(b));
    let va = sample_sd(a).powi(2) / a.len() as f64;
    let vb = sample_sd(b).powi(2) / b.len() as f64;
    let se2 = va + vb;
    if se2 == 0.0 {
        let p = if ma == mb { 1.0 } else { 0.0 };
        let t = if ma == mb { 0.0 } else { (ma - mb).signum() * f64::INFINITY };
        return Ok(Welch {
            t,
            df: (a.len() + b.len() - 2) as f64,
            p,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(Welch { t, df, p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn four_subject_quartiles_by_hand() {
        // Sorted 1, 2, 4, 10: q1 at position 0.75, median 1.5, q3 2.25.
        let s = summarize(&[4.0, 1.0, 10.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max), (1.0, 10.0));
        assert!((s.q1 - 1.75).abs() < 1e-15);
        assert!((s.median - 3.0).abs() < 1e-15);
        assert!((s.q3 - 5.5).abs() < 1e-15);
        assert!((s.mean - 4.25).abs() < 1e-15);
        let sd = ((3.25f64.powi(2) + 2.25f64.powi(2) + 5.75f64.powi(2) + 0.25f64.powi(2)) / 3.0).sqrt();
        assert!((s.sd - sd).abs() < 1e-14);
    }

    #[test]
    fn identical_values_have_zero_spread() {
        let s = summarize(&[2.5; 7]).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!((s.q1, s.median, s.q3), (2.5, 2.5, 2.5));
    }

    #[test]
    fn exact_lines() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let r = correlate(&x, &y).unwrap();
        assert!((r.pearson - 1.0).abs() < 1e-15 && (r.r2 - 1.0).abs() < 1e-15);
        assert!((r.slope - 2.0).abs() < 1e-14 && (r.intercept - 1.0).abs() < 1e-13);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let r = correlate(&x, &neg).unwrap();
        assert_eq!((r.pearson, r.spearman), (-1.0, -1.0));
        assert!(matches!(correlate(&[1.0; 4], &x[..4]), Err(Error::UndefinedCorrelation(_))));
    }

    fn pearson_formula(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let syy: f64 = y.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn random_pairs_match_direct_formulas() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v * 0.3 + rng.random_range(-2.0..2.0)).collect();
        let r = correlate(&x, &y).unwrap();
        assert!((r.pearson - pearson_formula(&x, &y)).abs() < 1e-12);
        // Without ties Spearman is 1 - 6 sum d^2 / (n (n^2 - 1)).
        let (rx, ry) = (average_ranks(&x), average_ranks(&y));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let rho = 1.0 - 6.0 * d2 / (20.0 * (400.0 - 1.0));
        assert!((r.spearman - rho).abs() < 1e-12);
        assert!((r.r2 - r.pearson * r.pearson).abs() < 1e-12);
    }

    #[test]
    fn ties_share_average_ranks() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn welch_worked_examples() {
        let a1 = [27.5, 21.0, 19.0, 23.6, 17.0, 17.9, 16.9, 20.1, 21.9, 22.6, 23.1, 19.6, 19.0, 21.7, 21.4];
        let a2 = [27.1, 22.0, 20.8, 23.4, 23.4, 23.5, 25.8, 22.0, 24.8, 20.2, 21.9, 22.1, 22.9, 20.5, 24.4];
        let w = significance(&a1, &a2).unwrap();
        // Published: t = -2.46, df = 25.0, p = 0.021.
        assert!((w.t - -2.46).abs() < 5e-3 && (w.df - 25.0).abs() < 0.05 && (w.p - 0.021).abs() < 5e-4);
        assert!((w.t - -2.455356398286006).abs() < 1e-9);
        assert!((w.p - 0.021378001462866985).abs() < 1e-9);
        let b1 = [17.2, 20.9, 22.6, 18.1, 21.7, 21.4, 23.5, 24.2, 14.7, 21.8];
        let b2 = [
            21.5, 22.8, 21.0, 23.0, 21.6, 23.6, 22.5, 20.7, 23.4, 21.8, 20.7, 21.7, 21.5, 22.5, 23.6, 21.5, 22.5, 23.5,
            21.5, 21.8,
        ];
        let w = significance(&b1, &b2).unwrap();
        assert!((w.p - 0.149).abs() < 5e-4 && (w.df - 9.9).abs() < 0.05);
        assert!((w.p - 0.14884169660532834).abs() < 1e-9);
    }

    #[test]
    fn welch_edge_cases() {
        assert!((significance(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap().p - 1.0).abs() < 1e-9);
        assert_eq!(significance(&[2.0; 3], &[2.0; 4]).unwrap().p, 1.0);
        assert!(significance(&[0.0; 4], &[5.0, 5.0, 5.0, 5.0001]).unwrap().p < 1e-6);
        assert!(significance(&[1.0], &[2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn correlations_are_affine_invariant(
            v in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 5..30),
            a in 0.1..10.0f64, b in -50.0..50.0f64,
        ) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            prop_assume!(sample_sd(&x) > 1e-6 && sample_sd(&y) > 1e-6);
            let r = correlate(&x, &y).unwrap();
            let x2: Vec<f64> = x.iter().map(|t| a * t + b).collect();
            let y3: Vec<f64> = y.iter().map(|t| t.powi(3)).collect();
            let r2 = correlate(&x2, &y).unwrap();
            prop_assert!((r.pearson - r2.pearson).abs() < 1e-9);
            prop_assert!((r.spearman - r2.spearman).abs() < 1e-12);
            let r3 = correlate(&x, &y3).unwrap();
            prop_assert!((r.spearman - r3.spearman).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&r.pearson) && (0.0..=1.0).contains(&r.r2));
        }
    }
}
