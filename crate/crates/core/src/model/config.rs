use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::electrodes::N_ELECTRODES;
use crate::error::{Error, Result};
use crate::geometry::ChamferKind;

/// How keypoint coordinates are produced from encoder features.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    /// Anchors picked by farthest-first traversal in local-feature space plus
    /// a regressed offset per slot.
    Anchored,
    /// Coordinates regressed directly from the global feature.
    Direct,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Anchored => "anchored",
            HeadKind::Direct => "direct",
        }
    }

    pub fn parse(s: &str) -> Result<HeadKind> {
        match s {
            "anchored" => Ok(HeadKind::Anchored),
            "direct" => Ok(HeadKind::Direct),
            _ => Err(Error::Config(format!("unknown head kind '{s}'"))),
        }
    }
}

/// Architecture of the topology-informed model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub n_in: usize,
    pub n_kp: usize,
    pub n_coarse: usize,
    pub n_dense: usize,
    /// Per-point widths before the first max-pool; the last one is the
    /// local-feature width.
    pub encoder_stage1: Vec<usize>,
    /// Widths after concatenating the pooled stage-1 feature; the last one is
    /// the global-feature width.
    pub encoder_stage2: Vec<usize>,
    pub head: HeadKind,
    pub keypoint_hidden: Vec<usize>,
    pub coarse_hidden: Vec<usize>,
    pub refine_hidden: Vec<usize>,
    /// Folding grid side length; each seed expands to `grid^2` points.
    pub grid_size: usize,
    pub grid_scale: f64,
    /// Coarse/dense reconstruction branch present.
    pub reconstruction: bool,
    /// Surface skeleton feeds the dense refinement.
    pub skeleton: bool,
    pub skeleton_neighbors: usize,
    pub skeleton_density: usize,
    pub skeleton_alpha: f64,
    /// Chamfer form used by the training loss.
    pub train_chamfer: ChamferKind,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_in: 2048,
            n_kp: 64,
            n_coarse: 1024,
            n_dense: 4096,
            encoder_stage1: vec![128, 256],
            encoder_stage2: vec![512, 1024],
            head: HeadKind::Anchored,
            keypoint_hidden: vec![256],
            coarse_hidden: vec![1024, 1024],
            refine_hidden: vec![256, 256],
            grid_size: 2,
            grid_scale: 0.05,
            reconstruction: true,
            skeleton: true,
            skeleton_neighbors: 3,
            skeleton_density: 8,
            skeleton_alpha: 0.5,
            train_chamfer: ChamferKind::Squared,
        }
    }
}

impl ModelConfig {
    /// Small architecture for toy problems and quick checks.
    pub fn tiny(n_in: usize, n_kp: usize) -> ModelConfig {
        ModelConfig {
            n_in,
            n_kp,
            n_coarse: 8,
            n_dense: 16,
            encoder_stage1: vec![6, 5],
            encoder_stage2: vec![8, 6],
            keypoint_hidden: vec![7],
            coarse_hidden: vec![6],
            refine_hidden: vec![5],
            skeleton_density: 2,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_owned()));
        if self.n_in == 0 {
            return err("n_in must be positive");
        }
        if self.n_kp == 0 {
            return err("n_kp must be positive");
        }
        if self.encoder_stage1.is_empty() || self.encoder_stage2.is_empty() {
            return err("encoder stages need at least one layer each");
        }
        if self.encoder_stage1.iter().chain(&self.encoder_stage2).any(|&w| w == 0) {
            return err("layer widths must be positive");
        }
        if self.reconstruction {
            if self.n_coarse == 0 || self.n_dense == 0 {
                return err("n_coarse and n_dense must be positive");
            }
            if self.grid_size == 0 || !self.n_dense.is_multiple_of(self.grid_size * self.grid_size) {
                return err("n_dense must be divisible by grid_size^2");
            }
            if self.skeleton {
                if self.n_kp < 4 {
                    return err("the surface skeleton needs at least 4 keypoints");
                }
                if self.skeleton_neighbors == 0 || self.skeleton_density == 0 {
                    return err("skeleton neighbours and density must be positive");
                }
                if !(0.0..=1.0).contains(&self.skeleton_alpha) {
                    return err("skeleton_alpha must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    pub fn global_width(&self) -> usize {
        *self.encoder_stage2.last().unwrap_or(&0)
    }

    pub fn local_width(&self) -> usize {
        *self.encoder_stage1.last().unwrap_or(&0)
    }

    pub fn skeleton_active(&self) -> bool {
        self.reconstruction && self.skeleton
    }

    /// Canonical `key = value` text; also the input of [`Self::hash`].
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "n_in = {}", self.n_in);
        let _ = writeln!(s, "n_kp = {}", self.n_kp);
        let _ = writeln!(s, "n_coarse = {}", self.n_coarse);
        let _ = writeln!(s, "n_dense = {}", self.n_dense);
        let _ = writeln!(s, "encoder_stage1 = {}", list(&self.encoder_stage1));
        let _ = writeln!(s, "encoder_stage2 = {}", list(&self.encoder_stage2));
        let _ = writeln!(s, "head = {}", self.head.name());
        let _ = writeln!(s, "keypoint_hidden = {}", list(&self.keypoint_hidden));
        let _ = writeln!(s, "coarse_hidden = {}", list(&self.coarse_hidden));
        let _ = writeln!(s, "refine_hidden = {}", list(&self.refine_hidden));
        let _ = writeln!(s, "grid_size = {}", self.grid_size);
        let _ = writeln!(s, "grid_scale = {}", self.grid_scale);
        let _ = writeln!(s, "reconstruction = {}", self.reconstruction);
        let _ = writeln!(s, "skeleton = {}", self.skeleton);
        let _ = writeln!(s, "skeleton_neighbors = {}", self.skeleton_neighbors);
        let _ = writeln!(s, "skeleton_density = {}", self.skeleton_density);
        let _ = writeln!(s, "skeleton_alpha = {}", self.skeleton_alpha);
        let _ = writeln!(
            s,
            "train_chamfer = {}",
            match self.train_chamfer {
                ChamferKind::Squared => "squared",
                ChamferKind::Euclidean => "euclidean",
            }
        );
        s
    }

    /// Applies one `key = value` pair; returns `Ok(false)` for keys this
    /// struct does not own.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::Config(format!("bad value '{value}' for '{key}'"));
        let usize_ = || value.parse::<usize>().map_err(|_| bad());
        let list = || -> Result<Vec<usize>> {
            if value.trim().is_empty() {
                return Ok(Vec::new());
            }
            value.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
        };
        let bool_ = || value.parse::<bool>().map_err(|_| bad());
        match key {
            "n_in" => self.n_in = usize_()?,
            "n_kp" => self.n_kp = usize_()?,
            "n_coarse" => self.n_coarse = usize_()?,
            "n_dense" => self.n_dense = usize_()?,
            "encoder_stage1" => self.encoder_stage1 = list()?,
            "encoder_stage2" => self.encoder_stage2 = list()?,
            "head" => self.head = HeadKind::parse(value)?,
            "keypoint_hidden" => self.keypoint_hidden = list()?,
            "coarse_hidden" => self.coarse_hidden = list()?,
            "refine_hidden" => self.refine_hidden = list()?,
            "grid_size" => self.grid_size = usize_()?,
            "grid_scale" => self.grid_scale = value.parse().map_err(|_| bad())?,
            "reconstruction" => self.reconstruction = bool_()?,
            "skeleton" => self.skeleton = bool_()?,
            "skeleton_neighbors" => self.skeleton_neighbors = usize_()?,
            "skeleton_density" => self.skeleton_density = usize_()?,
            "skeleton_alpha" => self.skeleton_alpha = value.parse().map_err(|_| bad())?,
            "train_chamfer" => {
                self.train_chamfer = match value {
                    "squared" => ChamferKind::Squared,
                    "euclidean" => ChamferKind::Euclidean,
                    _ => return Err(bad()),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_text())
    }
}

/// Hex SHA-256 prefix of a configuration text.
pub fn config_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Weights of the loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Dense-vs-coarse balance inside the reconstruction term.
    pub beta: f64,
    pub lambda_keypoint: f64,
    pub lambda_rec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta: 5.0,
            lambda_keypoint: 0.05,
            lambda_rec: 0.05,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.beta, self.lambda_keypoint, self.lambda_rec]
            .iter()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::Config("loss weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Named model configurations compared in the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Full model: keypoints, skeleton and reconstruction.
    Tim,
    /// Reconstruction branch and its losses removed.
    NoRecon,
    /// Only the ten electrode slots; no keypoint loss and no skeleton.
    NoKp,
    /// Point encoder with three fully connected layers regressing electrodes.
    Pcn3fc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Tim, Variant::NoRecon, Variant::NoKp, Variant::Pcn3fc];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tim => "tim",
            Variant::NoRecon => "tim-no-recon",
            Variant::NoKp => "tim-no-kp",
            Variant::Pcn3fc => "pcn-3fc",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }

    /// Rewrites the architecture and loss weights for this variant.
    pub fn apply(self, model: &mut ModelConfig, weights: &mut LossWeights) {
        match self {
            Variant::Tim => {}
            Variant::NoRecon => {
                model.reconstruction = false;
                weights.lambda_rec = 0.0;
            }
            Variant::NoKp => {
                model.n_kp = N_ELECTRODES;
                model.skeleton = false;
                weights.lambda_keypoint = 0.0;
            }
            Variant::Pcn3fc => {
                let w = model.global_width().max(1);
                model.n_kp = N_ELECTRODES;
                model.head = HeadKind::Direct;
                model.keypoint_hidden = vec![w, w];
                model.reconstruction = false;
                model.skeleton = false;
                weights.lambda_keypoint = 0.0;
                weights.lambda_rec = 0.0;
            }
        }
    }
}
