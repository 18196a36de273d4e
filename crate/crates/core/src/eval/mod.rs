//! Test-set metrics and the statistics used to summarise them.

pub mod stats;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

pub use stats::{
    average_ranks, correlate, mean, pearson, quantile, sample_sd, significance, summarize, CorrelationReport, Summary,
    Welch,
};

use crate::electrodes::{Electrode, ElectrodeSet, N_ELECTRODES};
use crate::error::{Error, Result};
use crate::geometry::{chamfer, euclidean_error, resample_contours, PointCloud, ResampleMode};
use crate::model::Tim;
use crate::synth::Subject;
use crate::textio;

/// Stream tag separating evaluation resamplings from training ones.
const EVAL_STREAM: u64 = 0xE7A1;

/// Deterministic network input used whenever a subject is evaluated.
pub fn eval_input(subject: &Subject, n_in: usize, seed: u64) -> Result<PointCloud> {
    resample_contours(
        &subject.contours,
        n_in,
        crate::derive_seed(seed, &[EVAL_STREAM, u64::from(subject.id)]),
        ResampleMode::Random,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectResult {
    pub id: u32,
    /// Euclidean error per electrode in canonical order, cm.
    pub per_electrode: [f64; N_ELECTRODES],
    pub mean_ed: f64,
    /// Chamfer distance between predicted and true dense torso, cm.
    pub cd: Option<f64>,
    /// Girth factor of the synthetic torso.
    pub scale: Option<f64>,
    /// Per-lead DTW between simulated ECGs, when computed.
    pub dtw: Option<Vec<f64>>,
}

/// Compares a prediction against a subject's ground truth.
pub fn score(subject: &Subject, electrodes: &ElectrodeSet, dense: Option<&PointCloud>) -> Result<SubjectResult> {
    let e = euclidean_error(electrodes, &subject.electrodes);
    let cd = match dense {
        Some(d) => Some(chamfer(d, &subject.dense)?),
        None => None,
    };
    Ok(SubjectResult {
        id: subject.id,
        per_electrode: e.per_electrode,
        mean_ed: e.mean,
        cd,
        scale: Some(subject.spec.scale),
        dtw: None,
    })
}

/// Runs the model on every subject; results keep the input order.
pub fn evaluate_model(model: &Tim, subjects: &[Subject], seed: u64) -> Result<Vec<SubjectResult>> {
    subjects
        .par_iter()
        .map(|s| {
            let input = eval_input(s, model.config.n_in, seed)?;
            let pred = model.predict(&input)?;
            score(s, &pred.electrodes, pred.dense.as_ref())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub ed_mean: f64,
    pub ed_sd: f64,
    pub cd_mean: Option<f64>,
    pub cd_sd: Option<f64>,
}

pub fn aggregate(results: &[SubjectResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::EmptyInput("evaluation results"));
    }
    let ed: Vec<f64> = results.iter().map(|r| r.mean_ed).collect();
    let cd: Option<Vec<f64>> = results.iter().map(|r| r.cd).collect();
    Ok(Aggregate {
        n: results.len(),
        ed_mean: mean(&ed),
        ed_sd: sample_sd(&ed),
        cd_mean: cd.as_deref().map(mean),
        cd_sd: cd.as_deref().map(sample_sd),
    })
}

/// Boxplot-ready summary per electrode, canonical order.
pub fn per_electrode_stats(results: &[SubjectResult]) -> Result<Vec<(Electrode, Summary)>> {
    Electrode::ALL
        .iter()
        .map(|&e| {
            let v: Vec<f64> = results.iter().map(|r| r.per_electrode[e.index()]).collect();
            Ok((e, summarize(&v)?))
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const RESULTS_HEADER: &str = "subject,LA,RA,LL,RL,V1,V2,V3,V4,V5,V6,mean_ED,CD_torso,scale";

pub fn format_results(results: &[SubjectResult]) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in results {
        let _ = write!(s, "{}", r.id);
        for e in r.per_electrode {
            let _ = write!(s, ",{e}");
        }
        let _ = writeln!(s, ",{},{},{}", r.mean_ed, opt(r.cd), opt(r.scale));
    }
    s
}

pub fn parse_results(text: &str, path: &str) -> Result<Vec<SubjectResult>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(Error::parse(path, 1, format!("expected header '{RESULTS_HEADER}'"))),
    }
    let mut out = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(Error::parse(path, ln + 1, format!("expected 14 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::parse(path, ln + 1, format!("bad number '{s}'")))
        };
        let optnum = |s: &str| -> Result<Option<f64>> {
            if s.trim().is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        let id = f[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, ln + 1, format!("bad subject id '{}'", f[0])))?;
        let mut per_electrode = [0.0; N_ELECTRODES];
        for (i, v) in per_electrode.iter_mut().enumerate() {
            *v = num(f[1 + i])?;
        }
        out.push(SubjectResult {
            id,
            per_electrode,
            mean_ed: num(f[11])?,
            cd: optnum(f[12])?,
            scale: optnum(f[13])?,
            dtw: None,
        });
    }
    Ok(out)
}

pub fn format_electrode_stats(stats: &[(Electrode, Summary)]) -> String {
    let mut s = String::from("electrode,n,mean,sd,min,q1,median,q3,max\n");
    for (e, x) in stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            e.name(),
            x.n,
            x.mean,
            x.sd,
            x.min,
            x.q1,
            x.median,
            x.q3,
            x.max
        );
    }
    s
}

pub fn format_correlations(rows: &[(&str, &str, CorrelationReport)]) -> String {
    let mut s = String::from("x,y,n,pearson,spearman,slope,intercept,r2\n");
    for (x, y, r) in rows {
        let _ = writeln!(
            s,
            "{x},{y},{},{},{},{},{},{}",
            r.n, r.pearson, r.spearman, r.slope, r.intercept, r.r2
        );
    }
    s
}

/// Writes `results.csv`, `electrodes.csv` and `correlations.csv`.
///
/// Correlations relate the mean electrode error to the torso CD and to the
/// torso scale factor, whenever those are available and non-constant.
pub fn write_reports(dir: &Path, results: &[SubjectResult]) -> Result<Aggregate> {
    let agg = aggregate(results)?;
    textio::write_atomic(&dir.join("results.csv"), format_results(results).as_bytes())?;
    let stats = per_electrode_stats(results)?;
    textio::write_atomic(&dir.join("electrodes.csv"), format_electrode_stats(&stats).as_bytes())?;
    let ed: Vec<f64> = results.iter().map(|r| r.mean_ed).collect();
    let mut rows = Vec::new();
    if let Some(cd) = results.iter().map(|r| r.cd).collect::<Option<Vec<f64>>>() {
        if let Ok(r) = correlate(&cd, &ed) {
            rows.push(("CD_torso", "mean_ED", r));
        }
    }
    if let Some(sc) = results.iter().map(|r| r.scale).collect::<Option<Vec<f64>>>() {
        if let Ok(r) = correlate(&sc, &ed) {
            rows.push(("scale", "mean_ED", r));
        }
    }
    textio::write_atomic(&dir.join("correlations.csv"), format_correlations(&rows).as_bytes())?;
    Ok(agg)
}
