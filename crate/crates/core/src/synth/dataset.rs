use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::electrodes::ElectrodeSet;
use crate::error::{Error, Result};
use crate::geometry::{fps, ContourSet, PointCloud};
use crate::textio;

use super::placement::place_electrodes;
use super::slicing::{slice_contours, SliceProtocol};
use super::torso::{sample_surface, sample_torso, CrossSection, TorsoSpec};

pub const N_COARSE: usize = 1024;
pub const N_DENSE: usize = 4096;
pub const N_TOPOLOGY: usize = 128;

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Invalid(format!("unknown split '{s}'"))),
        }
    }
}

/// Train/validation/test counts for `n` subjects (60/10/30 %).
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = (0.6 * n as f64).round() as usize;
    let val = (0.1 * n as f64).round() as usize;
    (train, val, n - train - val)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: u32,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub master_seed: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> Vec<u32> {
        self.entries.iter().filter(|e| e.split == split).map(|e| e.id).collect()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |s| self.entries.iter().filter(|e| e.split == s).count();
        (c(Split::Train), c(Split::Val), c(Split::Test))
    }

    pub fn format(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# master_seed={}", self.master_seed);
        let _ = writeln!(s, "# id split seed");
        for e in &self.entries {
            let _ = writeln!(s, "{:04} {} {}", e.id, e.split, e.seed);
        }
        s
    }

    pub fn parse(text: &str, path: &str) -> Result<Manifest> {
        let mut master_seed = 0;
        let mut entries = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("master_seed=") {
                    master_seed = v.parse().map_err(|_| Error::parse(path, ln + 1, "bad master seed"))?;
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            if t.len() != 3 {
                return Err(Error::parse(path, ln + 1, "expected 'id split seed'"));
            }
            entries.push(ManifestEntry {
                id: t[0].parse().map_err(|_| Error::parse(path, ln + 1, "bad id"))?,
                split: t[1].parse().map_err(|e: Error| Error::parse(path, ln + 1, e.to_string()))?,
                seed: t[2].parse().map_err(|_| Error::parse(path, ln + 1, "bad seed"))?,
            });
        }
        Ok(Manifest { master_seed, entries })
    }
}

/// Everything known about one synthetic subject.
#[derive(Clone, Debug)]
pub struct Subject {
    pub id: u32,
    pub spec: TorsoSpec,
    pub contours: ContourSet,
    pub electrodes: ElectrodeSet,
    pub coarse: PointCloud,
    pub dense: PointCloud,
    pub topology: PointCloud,
    /// Set when the slicer had to re-acquire a localizer.
    pub regenerated: bool,
}

pub fn generate_subject(id: u32, seed: u64, protocol: &SliceProtocol) -> Result<Subject> {
    let (spec, surface) = sample_torso(seed);
    let electrodes = place_electrodes(&spec, &surface);
    let sliced = slice_contours(&surface, protocol, crate::derive_seed(seed, &[1]))?;
    let coarse = sample_surface(&spec, N_COARSE, crate::derive_seed(seed, &[2]));
    let dense = surface.dense;
    let topology = fps(&dense, N_TOPOLOGY, 0)?;
    Ok(Subject {
        id,
        spec,
        contours: sliced.contours,
        electrodes,
        coarse,
        dense,
        topology,
        regenerated: sliced.regenerated,
    })
}

pub fn subject_dir(root: &Path, id: u32) -> PathBuf {
    root.join("subjects").join(format!("{id:04}"))
}

pub fn format_torso(spec: &TorsoSpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "height = {}", spec.height);
    let _ = writeln!(s, "scale = {}", spec.scale);
    let _ = writeln!(s, "seed = {}", spec.seed);
    let _ = writeln!(s, "mirrored = {}", spec.mirrored);
    for (i, l) in spec.levels.iter().enumerate() {
        let _ = writeln!(s, "level{i} = {} {} {} {}", l.frac, l.a, l.b, l.p);
    }
    s
}

pub fn parse_torso(text: &str, path: &str) -> Result<TorsoSpec> {
    let kv = textio::parse_key_values(text, path)?;
    let mut spec = TorsoSpec {
        height: 0.0,
        levels: Vec::new(),
        scale: 1.0,
        seed: 0,
        mirrored: false,
    };
    let bad = |k: &str| Error::parse(path, 0, format!("bad value for '{k}'"));
    for (k, v) in &kv {
        match k.as_str() {
            "height" => spec.height = v.parse().map_err(|_| bad(k))?,
            "scale" => spec.scale = v.parse().map_err(|_| bad(k))?,
            "seed" => spec.seed = v.parse().map_err(|_| bad(k))?,
            "mirrored" => spec.mirrored = v.parse().map_err(|_| bad(k))?,
            _ if k.starts_with("level") => {
                let f: Vec<f64> = v
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(k)))
                    .collect::<Result<_>>()?;
                if f.len() != 4 {
                    return Err(bad(k));
                }
                spec.levels.push(CrossSection { frac: f[0], a: f[1], b: f[2], p: f[3] });
            }
            _ => return Err(Error::parse(path, 0, format!("unknown key '{k}'"))),
        }
    }
    spec.validate().map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok(spec)
}

pub fn write_subject(root: &Path, s: &Subject) -> Result<()> {
    let dir = subject_dir(root, s.id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let hdr = format!("subject {:04}\nmanifest: ../../{MANIFEST_FILE}", s.id);
    textio::write_contours(&dir.join("contours.txt"), &s.contours, &hdr)?;
    textio::write_electrodes(&dir.join("electrodes.txt"), &s.electrodes, &hdr)?;
    textio::write_xyz(&dir.join("coarse.xyz"), &s.coarse, &hdr)?;
    textio::write_xyz(&dir.join("dense.xyz"), &s.dense, &hdr)?;
    textio::write_xyz(&dir.join("topology.xyz"), &s.topology, &hdr)?;
    textio::write_atomic(&dir.join("torso.txt"), format_torso(&s.spec).as_bytes())
}

pub fn load_subject(root: &Path, id: u32) -> Result<Subject> {
    let dir = subject_dir(root, id);
    let wrap = |e: Error| Error::Subject { id, source: Box::new(e) };
    let spec_path = dir.join("torso.txt");
    let spec = parse_torso(
        &textio::read_to_string(&spec_path).map_err(wrap)?,
        &spec_path.display().to_string(),
    )
    .map_err(wrap)?;
    Ok(Subject {
        id,
        spec,
        contours: textio::read_contours(&dir.join("contours.txt")).map_err(wrap)?,
        electrodes: textio::read_electrodes(&dir.join("electrodes.txt")).map_err(wrap)?,
        coarse: textio::read_xyz(&dir.join("coarse.xyz")).map_err(wrap)?,
        dense: textio::read_xyz(&dir.join("dense.xyz")).map_err(wrap)?,
        topology: textio::read_xyz(&dir.join("topology.xyz")).map_err(wrap)?,
        regenerated: false,
    })
}

/// Generates `n` subjects under `out`, writing per-subject files and the
/// manifest. Bit-identical for identical arguments.
pub fn make_dataset(out: &Path, n: usize, protocol: &SliceProtocol, seed: u64) -> Result<Manifest> {
    if n < 3 {
        return Err(Error::Invalid(format!("need at least 3 subjects, got {n}")));
    }
    protocol.validate()?;
    let (n_train, n_val, _) = split_counts(n);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, &[0x5911])));
    let mut splits = vec![Split::Test; n];
    for (rank, &id) in order.iter().enumerate() {
        splits[id as usize] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    let entries: Vec<ManifestEntry> = (0..n as u32)
        .map(|id| ManifestEntry {
            id,
            split: splits[id as usize],
            seed: crate::derive_seed(seed, &[u64::from(id)]),
        })
        .collect();
    entries.par_iter().try_for_each(|e| {
        let s = generate_subject(e.id, e.seed, protocol)
            .map_err(|err| Error::Subject { id: e.id, source: Box::new(err) })?;
        write_subject(out, &s).map_err(|err| Error::Subject { id: e.id, source: Box::new(err) })
    })?;
    let manifest = Manifest { master_seed: seed, entries };
    textio::write_atomic(&out.join(MANIFEST_FILE), manifest.format().as_bytes())?;
    Ok(manifest)
}

/// Handle on a generated dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Dataset> {
        let path = root.join(MANIFEST_FILE);
        let manifest = Manifest::parse(&textio::read_to_string(&path)?, &path.display().to_string())?;
        Ok(Dataset { root: root.to_path_buf(), manifest })
    }

    pub fn load(&self, id: u32) -> Result<Subject> {
        load_subject(&self.root, id)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<Subject>> {
        self.manifest.ids(split).into_iter().map(|id| self.load(id)).collect()
    }
}
