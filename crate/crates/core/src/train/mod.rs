//! Deterministic training: AdamW, step learning-rate decay, resampling
//! augmentation, checkpoints and parameter sweeps.

pub mod config;
pub mod optim;

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{TrainConfig, CONFIG_KEYS};
pub use optim::AdamW;

use crate::error::{Error, Result};
use crate::eval::{aggregate, evaluate_model};
use crate::geometry::{resample_contours, PointCloud, ResampleMode};
use crate::model::{Checkpoint, Grads, LossTerms, ParamStore, Target, Tensor, Tim};
use crate::synth::Subject;
use crate::textio;

const AUGMENT_STREAM: u64 = 0xA0C5;
const SHUFFLE_STREAM: u64 = 0x5B0F;
const INIT_STREAM: u64 = 0x1417;

pub const METRICS_HEADER: &str = "iter,epoch,lr,L_total,L_electrode,L_keypoint,L_coarse,L_dense";
pub const VALIDATION_HEADER: &str = "epoch,iter,val_ED,val_CD";

/// Seed of one resampling repeat.
pub fn augment_seed(seed: u64, subject: u32, repeat: usize) -> u64 {
    crate::derive_seed(seed, &[AUGMENT_STREAM, u64::from(subject), repeat as u64])
}

/// `n_rr` independent resamplings of the subject's contours.
pub fn augment_resample(subject: &Subject, n_rr: usize, n_in: usize, seed: u64) -> Result<Vec<PointCloud>> {
    if n_rr == 0 {
        return Err(Error::Config("n_rr must be at least 1".into()));
    }
    (0..n_rr)
        .map(|r| resample_contours(&subject.contours, n_in, augment_seed(seed, subject.id, r), ResampleMode::Random))
        .collect()
}

/// Parameters of the epoch with the lowest validation error so far.
#[derive(Clone, Debug, PartialEq)]
pub struct BestSnapshot {
    pub epoch: usize,
    pub iter: u64,
    pub val_ed: f64,
    pub params: ParamStore,
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Tim,
    pub opt: AdamW,
    /// Optimizer steps completed.
    pub iter: u64,
    pub best: Option<BestSnapshot>,
}

fn prefixed(prefix: &str, names: &ParamStore, data: &[Vec<f64>]) -> Vec<Tensor> {
    names
        .tensors
        .iter()
        .zip(data)
        .map(|(t, d)| Tensor {
            name: format!("{prefix}{}", t.name),
            shape: t.shape.clone(),
            data: d.clone(),
        })
        .collect()
}

fn store_from(template: &ParamStore, tensors: Vec<Tensor>, what: &str) -> Result<ParamStore> {
    if tensors.len() != template.len()
        || tensors
            .iter()
            .zip(&template.tensors)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape || a.data.len() != b.data.len())
    {
        return Err(Error::Config(format!("checkpoint {what} tensors do not match the configuration")));
    }
    Ok(ParamStore { tensors })
}

fn meta_num<T: std::str::FromStr>(c: &Checkpoint, key: &str) -> Result<T> {
    c.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Config(format!("checkpoint metadata '{key}' missing or malformed")))
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<TrainState> {
        config.validate()?;
        let (m, _) = config.effective();
        let model = Tim::new(m, crate::derive_seed(config.seed, &[INIT_STREAM]))?;
        let opt = AdamW::new(&model.params, config.weight_decay);
        Ok(TrainState {
            config,
            model,
            opt,
            iter: 0,
            best: None,
        })
    }

    /// Model with the best-validation parameters (current ones if none).
    pub fn best_model(&self) -> Tim {
        let mut m = self.model.clone();
        if let Some(b) = &self.best {
            m.params = b.params.clone();
        }
        m
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let p = &self.model.params;
        let data: Vec<Vec<f64>> = p.tensors.iter().map(|t| t.data.clone()).collect();
        let mut tensors = prefixed("param/", p, &data);
        tensors.extend(prefixed("adam_m/", p, &self.opt.m.data));
        tensors.extend(prefixed("adam_v/", p, &self.opt.v.data));
        let mut meta = vec![("iter".to_owned(), self.iter.to_string()), ("adam_t".to_owned(), self.opt.t.to_string())];
        if let Some(b) = &self.best {
            let bd: Vec<Vec<f64>> = b.params.tensors.iter().map(|t| t.data.clone()).collect();
            tensors.extend(prefixed("best/", p, &bd));
            meta.push(("best_epoch".into(), b.epoch.to_string()));
            meta.push(("best_iter".into(), b.iter.to_string()));
            meta.push(("best_val_ed".into(), format!("{:?}", b.val_ed.to_bits())));
        }
        Checkpoint {
            config_text: self.config.to_text(),
            meta,
            tensors,
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<TrainState> {
        let config = TrainConfig::from_text(&c.config_text, "checkpoint config")?;
        let mut state = TrainState::new(config)?;
        let template = state.model.params.clone();
        state.model = Tim::from_params(state.model.config.clone(), store_from(&template, c.group("param/"), "parameter")?)?;
        let m = store_from(&template, c.group("adam_m/"), "first-moment")?;
        let v = store_from(&template, c.group("adam_v/"), "second-moment")?;
        state.opt.m = Grads {
            data: m.tensors.into_iter().map(|t| t.data).collect(),
        };
        state.opt.v = Grads {
            data: v.tensors.into_iter().map(|t| t.data).collect(),
        };
        state.opt.t = meta_num(c, "adam_t")?;
        state.iter = meta_num(c, "iter")?;
        let best = c.group("best/");
        if !best.is_empty() {
            state.best = Some(BestSnapshot {
                epoch: meta_num(c, "best_epoch")?,
                iter: meta_num(c, "best_iter")?,
                val_ed: f64::from_bits(meta_num(c, "best_val_ed")?),
                params: store_from(&template, best, "best")?,
            });
        }
        Ok(state)
    }
}

/// Inference checkpoint holding only model parameters.
pub fn model_checkpoint(config: &TrainConfig, model: &Tim, meta: Vec<(String, String)>) -> Checkpoint {
    let p = &model.params;
    let data: Vec<Vec<f64>> = p.tensors.iter().map(|t| t.data.clone()).collect();
    Checkpoint {
        config_text: config.to_text(),
        meta,
        tensors: prefixed("param/", p, &data),
    }
}

/// Loads a model from either a full training state or an inference checkpoint.
/// A training state yields its best-validation parameters when present.
pub fn load_model(path: &Path) -> Result<(TrainConfig, Tim)> {
    let c = Checkpoint::load(path)?;
    let config = TrainConfig::from_text(&c.config_text, &path.display().to_string())?;
    let (mc, _) = config.effective();
    let reference = Tim::new(mc.clone(), 0)?;
    let group = if c.tensors.iter().any(|t| t.name.starts_with("best/")) {
        c.group("best/")
    } else {
        c.group("param/")
    };
    let params = store_from(&reference.params, group, "parameter")?;
    Ok((config, Tim::from_params(mc, params)?))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRow {
    pub iter: u64,
    pub epoch: usize,
    pub lr: f64,
    pub terms: LossTerms,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValRow {
    pub epoch: usize,
    pub iter: u64,
    pub ed: f64,
    pub cd: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<MetricRow>,
    pub validation: Vec<ValRow>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions<'a> {
    /// Receives `metrics.csv`, `validation.csv`, `state.ckpt`, `best.ckpt`.
    pub out_dir: Option<&'a Path>,
    /// Stop once this many optimizer steps have been taken.
    pub stop_after: Option<u64>,
    /// Print one line per epoch to stderr.
    pub verbose: bool,
}

fn metric_line(r: &MetricRow) -> String {
    let t = &r.terms;
    format!(
        "{},{},{},{},{},{},{},{}\n",
        r.iter, r.epoch, r.lr, t.total, t.electrode, t.keypoint, t.coarse, t.dense
    )
}

fn val_line(r: &ValRow) -> String {
    format!("{},{},{},{}\n", r.epoch, r.iter, r.ed, r.cd.map(|c| c.to_string()).unwrap_or_default())
}

fn append(path: &Path, header: &str, fresh: bool, body: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut s = String::new();
    if fresh {
        let _ = writeln!(s, "{header}");
    }
    s.push_str(body);
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Steps per epoch for `n_subjects` training subjects.
pub fn iters_per_epoch(config: &TrainConfig, n_subjects: usize) -> u64 {
    (n_subjects * config.n_rr).div_ceil(config.batch_size) as u64
}

fn epoch_order(config: &TrainConfig, epoch: usize, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(config.seed, &[SHUFFLE_STREAM, epoch as u64]));
    order.shuffle(&mut rng);
    order
}

/// Runs (or continues) training until `epochs` are complete.
///
/// Per-sample gradients may be computed on any number of threads; they are
/// summed in batch order so the result does not depend on the thread count.
/// A non-finite loss or gradient aborts the run after writing the last good
/// state to `last_good.ckpt`.
pub fn train(state: &mut TrainState, train_set: &[Subject], val_set: &[Subject], opts: &TrainOptions) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training subjects"));
    }
    let cfg = state.config.clone();
    let (_, weights) = cfg.effective();
    let n_in = state.model.config.n_in;
    let targets: Vec<Target> = train_set.par_iter().map(Target::from_subject).collect::<Result<_>>()?;
    let n_samples = train_set.len() * cfg.n_rr;
    let ipe = iters_per_epoch(&cfg, train_set.len());
    let total = ipe * cfg.epochs as u64;
    let end = opts.stop_after.map_or(total, |s| s.min(total));
    let fresh = state.iter == 0;
    let mut report = TrainReport::default();
    let mut pending_metrics = String::new();
    let mut pending_val = String::new();
    if let Some(dir) = opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if fresh {
            append(&dir.join("metrics.csv"), METRICS_HEADER, true, "")?;
            append(&dir.join("validation.csv"), VALIDATION_HEADER, true, "")?;
        }
    }
    let flush = |metrics: &mut String, val: &mut String, st: &TrainState| -> Result<()> {
        if let Some(dir) = opts.out_dir {
            append(&dir.join("metrics.csv"), METRICS_HEADER, false, metrics)?;
            append(&dir.join("validation.csv"), VALIDATION_HEADER, false, val)?;
            st.to_checkpoint().save(&dir.join("state.ckpt"))?;
            let best = st.best_model();
            let meta = st
                .best
                .as_ref()
                .map(|b| vec![("epoch".to_owned(), b.epoch.to_string()), ("val_ED".to_owned(), b.val_ed.to_string())])
                .unwrap_or_default();
            model_checkpoint(&st.config, &best, meta).save(&dir.join("best.ckpt"))?;
        }
        metrics.clear();
        val.clear();
        Ok(())
    };

    let mut order_epoch = usize::MAX;
    let mut order = Vec::new();
    while state.iter < end {
        let epoch = (state.iter / ipe) as usize;
        if epoch != order_epoch {
            order = epoch_order(&cfg, epoch, n_samples);
            order_epoch = epoch;
        }
        let b = (state.iter % ipe) as usize;
        let batch = &order[b * cfg.batch_size..((b + 1) * cfg.batch_size).min(n_samples)];
        let model = &state.model;
        let evals: Vec<Result<_>> = batch
            .par_iter()
            .map(|&s| {
                let (subj, rep) = (s / cfg.n_rr, s % cfg.n_rr);
                let raw = resample_contours(
                    &train_set[subj].contours,
                    n_in,
                    augment_seed(cfg.seed, train_set[subj].id, rep),
                    ResampleMode::Random,
                )?;
                let sample = model.prepare(&raw)?;
                model.loss_and_grad(&sample, &targets[subj], &weights)
            })
            .collect();
        let mut grads = state.model.params.zeros_like();
        let mut terms = LossTerms::default();
        let inv = 1.0 / batch.len() as f64;
        for e in evals {
            let e = match e {
                Ok(e) => e,
                Err(err @ Error::NonFinite { .. }) => {
                    if let Some(dir) = opts.out_dir {
                        state.to_checkpoint().save(&dir.join("last_good.ckpt"))?;
                    }
                    return Err(err);
                }
                Err(err) => return Err(err),
            };
            grads.add_assign(&e.grads);
            terms.add_scaled(&e.terms, inv);
        }
        grads.scale(inv);
        if !grads.is_finite() {
            if let Some(dir) = opts.out_dir {
                state.to_checkpoint().save(&dir.join("last_good.ckpt"))?;
            }
            return Err(Error::NonFinite { layer: "batch gradient" });
        }
        let lr = cfg.lr_at(state.iter);
        state.opt.step(&mut state.model.params, &grads, lr);
        state.iter += 1;
        let row = MetricRow {
            iter: state.iter,
            epoch,
            lr,
            terms,
        };
        pending_metrics.push_str(&metric_line(&row));
        report.metrics.push(row);

        if state.iter.is_multiple_of(ipe) {
            let mut vrow = ValRow {
                epoch,
                iter: state.iter,
                ed: f64::NAN,
                cd: None,
            };
            if !val_set.is_empty() {
                let agg = aggregate(&evaluate_model(&state.model, val_set, cfg.seed)?)?;
                vrow.ed = agg.ed_mean;
                vrow.cd = agg.cd_mean;
            }
            let better = match &state.best {
                None => true,
                Some(b) => val_set.is_empty() || vrow.ed < b.val_ed,
            };
            if better {
                state.best = Some(BestSnapshot {
                    epoch,
                    iter: state.iter,
                    val_ed: vrow.ed,
                    params: state.model.params.clone(),
                });
            }
            if opts.verbose {
                eprintln!(
                    "epoch {epoch:>4}  iter {:>7}  lr {lr:.3e}  loss {:.5}  val ED {:.3} cm",
                    state.iter, terms.total, vrow.ed
                );
            }
            pending_val.push_str(&val_line(&vrow));
            report.validation.push(vrow);
            flush(&mut pending_metrics, &mut pending_val, state)?;
        }
    }
    if !pending_metrics.is_empty() || !pending_val.is_empty() {
        flush(&mut pending_metrics, &mut pending_val, state)?;
    }
    Ok(report)
}

/// Axis of a parameter sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Nrr,
    Nkp,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<SweepAxis> {
        match s {
            "N_rr" | "n_rr" => Ok(SweepAxis::Nrr),
            "N_kp" | "n_kp" => Ok(SweepAxis::Nkp),
            _ => Err(Error::Config(format!("unknown sweep axis '{s}' (N_rr or N_kp)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nrr => "N_rr",
            SweepAxis::Nkp => "N_kp",
        }
    }
}

/// One sweep value's test-set result, or the reason it failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: usize,
    pub outcome: std::result::Result<crate::eval::Aggregate, String>,
}

/// Trains and evaluates one model per value with otherwise identical settings.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[usize],
    train_set: &[Subject],
    val_set: &[Subject],
    test_set: &[Subject],
    out_dir: Option<&Path>,
    verbose: bool,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let run = || -> Result<crate::eval::Aggregate> {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Nrr => cfg.n_rr = v,
                SweepAxis::Nkp => cfg.model.n_kp = v,
            }
            let mut state = TrainState::new(cfg)?;
            let sub = out_dir.map(|d| d.join(format!("{}_{v}", axis.name())));
            train(
                &mut state,
                train_set,
                val_set,
                &TrainOptions {
                    out_dir: sub.as_deref(),
                    stop_after: None,
                    verbose,
                },
            )?;
            aggregate(&evaluate_model(&state.best_model(), test_set, state.config.seed)?)
        };
        rows.push(SweepRow {
            value: v,
            outcome: run().map_err(|e| e.to_string()),
        });
    }
    if let Some(dir) = out_dir {
        textio::write_atomic(&dir.join("sweep.csv"), format_sweep(axis, &rows).as_bytes())?;
    }
    Ok(rows)
}

pub fn format_sweep(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = format!("{},CD_torso_mean,CD_torso_sd,ED_electrode_mean,ED_electrode_sd,error\n", axis.name());
    for r in rows {
        match &r.outcome {
            Ok(a) => {
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                let _ = writeln!(s, "{},{},{},{},{},", r.value, opt(a.cd_mean), opt(a.cd_sd), a.ed_mean, a.ed_sd);
            }
            Err(e) => {
                let _ = writeln!(s, "{},,,,,{}", r.value, e.replace([',', '\n'], ";"));
            }
        }
    }
    s
}

/// Reads `metrics.csv` text back into rows.
pub fn parse_metrics(text: &str, path: &str) -> Result<Vec<MetricRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(Error::parse(path, 1, "missing metrics header")),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(ln, l)| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::parse(path, ln + 1, "malformed metrics row");
            if f.len() != 8 {
                return Err(bad());
            }
            let n = |i: usize| f[i].parse::<f64>().map_err(|_| bad());
            Ok(MetricRow {
                iter: f[0].parse().map_err(|_| bad())?,
                epoch: f[1].parse().map_err(|_| bad())?,
                lr: n(2)?,
                terms: LossTerms {
                    total: n(3)?,
                    electrode: n(4)?,
                    keypoint: n(5)?,
                    coarse: n(6)?,
                    dense: n(7)?,
                },
            })
        })
        .collect()
}
