use std::fmt::Write as _;

use crate::electrodes::N_ELECTRODES;
use crate::error::{Error, Result};
use crate::model::{config_hash, LossWeights, ModelConfig, Variant};
use crate::textio;

/// Every key accepted in a training configuration file, with a description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("variant", "tim | tim-no-recon | tim-no-kp | pcn-3fc"),
    ("seed", "master seed for initialisation, shuffling and resampling"),
    ("batch_size", "samples per optimizer step (default 6)"),
    ("initial_lr", "learning rate before any decay (default 1e-4)"),
    ("lr_decay_factor", "multiplier applied at every decay step (default 0.5)"),
    ("lr_decay_every", "iterations between decay steps (default 9000)"),
    ("weight_decay", "decoupled weight decay (default 1e-3)"),
    ("epochs", "passes over subjects x n_rr samples (default 120)"),
    ("n_rr", "contour resampling repeats per subject (default 30)"),
    ("n_kp", "number of keypoints; the first 10 are the electrodes (default 64)"),
    ("beta", "dense versus coarse reconstruction weight (default 5)"),
    ("lambda_keypoint", "keypoint Chamfer weight (default 0.05)"),
    ("lambda_rec", "reconstruction weight (default 0.05)"),
    ("n_in", "input points per cloud (default 2048)"),
    ("n_coarse", "coarse output points (default 1024)"),
    ("n_dense", "dense output points (default 4096)"),
    ("encoder_stage1", "comma-separated per-point widths before the first pooling"),
    ("encoder_stage2", "comma-separated widths after concatenating the pooled feature"),
    ("head", "anchored | direct"),
    ("keypoint_hidden", "hidden widths of the keypoint head (may be empty)"),
    ("coarse_hidden", "hidden widths of the coarse decoder (may be empty)"),
    ("refine_hidden", "hidden widths of the refinement network (may be empty)"),
    ("grid_size", "folding grid side per refinement seed (default 2)"),
    ("grid_scale", "folding grid half-extent in normalized units (default 0.05)"),
    ("reconstruction", "true | false: coarse and dense branch present"),
    ("skeleton", "true | false: surface skeleton feeds the refinement"),
    ("skeleton_neighbors", "nearest keypoints linked per keypoint (default 3)"),
    ("skeleton_density", "samples per skeleton element (default 8)"),
    ("skeleton_alpha", "projection weight towards the coarse surface (default 0.5)"),
    ("train_chamfer", "squared | euclidean Chamfer terms in the loss"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    pub seed: u64,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every: u64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub n_rr: usize,
    pub weights: LossWeights,
    /// Architecture before the variant is applied.
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Tim,
            seed: 0,
            batch_size: 6,
            initial_lr: 1e-4,
            lr_decay_factor: 0.5,
            lr_decay_every: 9000,
            weight_decay: 1e-3,
            epochs: 120,
            n_rr: 30,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Architecture and loss weights with the variant applied.
    pub fn effective(&self) -> (ModelConfig, LossWeights) {
        let mut m = self.model.clone();
        let mut w = self.weights;
        self.variant.apply(&mut m, &mut w);
        (m, w)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_owned()));
        if self.batch_size == 0 || self.epochs == 0 || self.n_rr == 0 || self.lr_decay_every == 0 {
            return err("batch_size, epochs, n_rr and lr_decay_every must be positive");
        }
        for (name, v) in [
            ("initial_lr", self.initial_lr),
            ("lr_decay_factor", self.lr_decay_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return err(&format!("{name} must be positive"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return err("weight_decay must be non-negative");
        }
        if self.model.n_kp < N_ELECTRODES {
            return err("n_kp must be at least 10 (the electrode slots)");
        }
        self.weights.validate()?;
        let (m, w) = self.effective();
        m.validate()?;
        w.validate()
    }

    /// Learning rate in effect at `iter` (zero-based).
    pub fn lr_at(&self, iter: u64) -> f64 {
        let steps = (iter / self.lr_decay_every).min(i32::MAX as u64) as i32;
        self.initial_lr * self.lr_decay_factor.powi(steps)
    }

    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("bad value '{value}' for '{key}'"));
        let f = || value.parse::<f64>().map_err(|_| bad());
        let u = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "variant" => self.variant = Variant::parse(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = u()?,
            "initial_lr" => self.initial_lr = f()?,
            "lr_decay_factor" => self.lr_decay_factor = f()?,
            "lr_decay_every" => self.lr_decay_every = value.parse().map_err(|_| bad())?,
            "weight_decay" => self.weight_decay = f()?,
            "epochs" => self.epochs = u()?,
            "n_rr" => self.n_rr = u()?,
            "beta" => self.weights.beta = f()?,
            "lambda_keypoint" => self.weights.lambda_keypoint = f()?,
            "lambda_rec" => self.weights.lambda_rec = f()?,
            _ => {
                if !self.model.apply(key, value)? {
                    return Err(Error::Config(format!("unknown configuration key '{key}'")));
                }
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str, path: &str) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        for (k, v) in textio::parse_key_values(text, path)? {
            c.apply(&k, &v)?;
        }
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant = {}", self.variant.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "initial_lr = {}", self.initial_lr);
        let _ = writeln!(s, "lr_decay_factor = {}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_decay_every = {}", self.lr_decay_every);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "n_rr = {}", self.n_rr);
        let _ = writeln!(s, "beta = {}", self.weights.beta);
        let _ = writeln!(s, "lambda_keypoint = {}", self.weights.lambda_keypoint);
        let _ = writeln!(s, "lambda_rec = {}", self.weights.lambda_rec);
        s.push_str(&self.model.to_text());
        s
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_text())
    }
}
