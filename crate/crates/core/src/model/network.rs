use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{HeadKind, LossWeights, ModelConfig};
use super::layers::{column_max, hash_mask, relu_backward, relu_inplace, Fused, Mlp, MlpCache};
use super::loss::{chamfer_term, electrode_term, LossTerms, Target};
use super::params::{Grads, Init, ParamStore};
use super::skeleton::{build_skeleton, SkeletonParams, SurfaceSkeleton};
use crate::electrodes::{ElectrodeSet, N_ELECTRODES};
use crate::error::{Error, Result};
use crate::geometry::{farthest_first, normalize_cloud, NormTransform, Point3, PointCloud};

#[derive(Clone, Debug)]
struct Layout {
    enc1: Mlp,
    enc2_in: Fused,
    enc2: Mlp,
    head: Mlp,
    mix: Option<usize>,
    coarse: Option<Mlp>,
    refine_in: Option<Fused>,
    refine: Option<Mlp>,
}

impl Layout {
    fn build(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Layout {
        let enc1 = Mlp::new(store, "encoder.stage1", 3, &cfg.encoder_stage1, rng);
        let local = cfg.local_width();
        let enc2_in = Fused::new(store, "encoder.stage2.0", local, local, cfg.encoder_stage2[0], rng);
        let enc2 = Mlp::new(store, "encoder.stage2.rest", cfg.encoder_stage2[0], &cfg.encoder_stage2[1..], rng);
        let global = cfg.global_width();
        let mut head_widths = cfg.keypoint_hidden.clone();
        head_widths.push(cfg.n_kp * 3);
        let head = Mlp::new(store, "keypoints.head", global, &head_widths, rng);
        let mix = (cfg.head == HeadKind::Anchored)
            .then(|| store.add("keypoints.anchor_mix".into(), vec![cfg.n_kp, 3, 3], Init::Zero, rng));
        let (coarse, refine_in, refine) = if cfg.reconstruction {
            let mut w = cfg.coarse_hidden.clone();
            w.push(cfg.n_coarse * 3);
            let coarse = Mlp::new(store, "coarse", global, &w, rng);
            let first = cfg.refine_hidden.first().copied().unwrap_or(3);
            let refine_in = Fused::new(store, "refine.0", 5, global, first, rng);
            let rest: Vec<usize> = if cfg.refine_hidden.is_empty() {
                Vec::new()
            } else {
                cfg.refine_hidden[1..].iter().copied().chain([3]).collect()
            };
            let refine = Mlp::new(store, "refine.rest", first, &rest, rng);
            (Some(coarse), Some(refine_in), Some(refine))
        } else {
            (None, None, None)
        };
        Layout {
            enc1,
            enc2_in,
            enc2,
            head,
            mix,
            coarse,
            refine_in,
            refine,
        }
    }
}

/// The topology-informed electrode model.
#[derive(Clone, Debug)]
pub struct Tim {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

/// A normalized network input and the transform that produced it.
#[derive(Clone, Debug)]
pub struct Sample {
    pub cloud: PointCloud,
    pub transform: NormTransform,
}

/// Encoder output.
#[derive(Clone, Debug)]
pub struct Encoding {
    /// Per-point local features, one row per input point.
    pub local: Array2<f64>,
    pub global: Vec<f64>,
    cache: EncoderCache,
}

#[derive(Clone, Debug)]
struct EncoderCache {
    enc1: MlpCache,
    g1: Vec<f64>,
    arg1: Vec<usize>,
    h2: Array2<f64>,
    enc2: MlpCache,
    arg2: Vec<usize>,
}

/// All outputs of one forward pass, in normalized coordinates.
#[derive(Clone, Debug)]
pub struct Forward {
    pub encoding: Encoding,
    /// Input rows used as keypoint anchors (empty for the direct head).
    pub anchors: Vec<usize>,
    pub keypoints: Vec<Point3>,
    pub coarse: Option<Vec<Point3>>,
    pub skeleton: Option<SurfaceSkeleton>,
    pub dense: Option<Vec<Point3>>,
    head_cache: MlpCache,
    anchor_points: Vec<Point3>,
    coarse_cache: Option<MlpCache>,
    refine: Option<RefineCache>,
}

#[derive(Clone, Debug)]
struct RefineCache {
    /// Index of each selected seed in `skeleton samples ++ coarse`.
    source: Vec<usize>,
    x: Array2<f64>,
    h: Array2<f64>,
    rest: MlpCache,
}

/// Gradients of the loss with respect to the model outputs.
#[derive(Clone, Debug)]
pub struct OutputGrads {
    pub keypoints: Vec<Point3>,
    pub coarse: Vec<Point3>,
    pub dense: Vec<Point3>,
}

/// Loss value, parameter gradients and the discrete structure of the pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub terms: LossTerms,
    pub grads: Grads,
    /// Hash of every discrete choice (ReLU masks, max-pool and nearest
    /// neighbour indices, anchors). Equal signatures mean the loss is smooth
    /// between the two parameter settings.
    pub signature: u64,
}

/// Model outputs mapped back to subject coordinates.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub keypoints: PointCloud,
    pub electrodes: ElectrodeSet,
    pub coarse: Option<PointCloud>,
    pub dense: Option<PointCloud>,
}

fn flat_points(v: &[f64]) -> Vec<Point3> {
    v.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect()
}

fn check(what: &'static str, v: impl IntoIterator<Item = f64>) -> Result<()> {
    if v.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: what })
    }
}

fn check_points(what: &'static str, v: &[Point3]) -> Result<()> {
    if v.iter().all(|p| p.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { layer: what })
    }
}

/// Grid coordinate of cell `i` along one axis of a `g`-sided grid.
fn grid_coord(i: usize, g: usize) -> f64 {
    if g == 1 {
        0.0
    } else {
        2.0 * i as f64 / (g - 1) as f64 - 1.0
    }
}

/// Sorted distinct values of `v` and, for each, its position.
fn unique_rows(v: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut rows: Vec<usize> = v.into_iter().collect();
    rows.sort_unstable();
    rows.dedup();
    rows
}

impl Tim {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Tim> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let layout = Layout::build(&config, &mut params, &mut rng);
        Ok(Tim { config, params, layout })
    }

    /// Wraps existing parameters; names and shapes must match `config`.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Tim> {
        let reference = Tim::new(config, 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, configuration expects {}",
                params.len(),
                reference.params.len()
            )));
        }
        for (a, b) in reference.params.tensors.iter().zip(&params.tensors) {
            if a.name != b.name || a.shape != b.shape || b.data.len() != a.data.len() {
                return Err(Error::Config(format!(
                    "tensor '{}' {:?} does not match expected '{}' {:?}",
                    b.name, b.shape, a.name, a.shape
                )));
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite { layer: "checkpoint parameters" });
        }
        Ok(Tim {
            config: reference.config,
            params,
            layout: reference.layout,
        })
    }

    /// Normalizes a subject-coordinate cloud of exactly `n_in` points.
    pub fn prepare(&self, raw: &PointCloud) -> Result<Sample> {
        if raw.len() != self.config.n_in {
            return Err(Error::Size {
                context: "network input points",
                expected: self.config.n_in,
                got: raw.len(),
            });
        }
        let (cloud, transform) = normalize_cloud(raw)?;
        Ok(Sample { cloud, transform })
    }

    pub fn encode(&self, cloud: &PointCloud) -> Result<Encoding> {
        if cloud.len() != self.config.n_in {
            return Err(Error::Size {
                context: "encoder input points",
                expected: self.config.n_in,
                got: cloud.len(),
            });
        }
        let p = &self.params;
        let l = &self.layout;
        let x = Array2::from_shape_fn((cloud.len(), 3), |(i, a)| cloud.points[i][a]);
        let (f1, enc1) = l.enc1.forward(p, x);
        check("encoder stage 1", f1.iter().copied())?;
        let (g1, arg1) = column_max(f1.view());
        let mut h2 = l.enc2_in.forward(p, f1.view(), &g1);
        let (out, enc2) = if l.enc2.layers.is_empty() {
            (h2.clone(), MlpCache { inputs: Vec::new() })
        } else {
            relu_inplace(&mut h2);
            l.enc2.forward(p, h2.clone())
        };
        let (global, arg2) = column_max(out.view());
        check("encoder stage 2", global.iter().copied())?;
        Ok(Encoding {
            local: f1,
            global,
            cache: EncoderCache {
                enc1,
                g1,
                arg1,
                h2,
                enc2,
                arg2,
            },
        })
    }

    /// Farthest-first traversal over local-feature rows, started at the row
    /// with the largest feature norm.
    pub fn feature_anchors(local: ArrayView2<f64>, k: usize) -> Vec<usize> {
        let n = local.nrows();
        let mut start = 0;
        let mut best = f64::NEG_INFINITY;
        for (i, r) in local.rows().into_iter().enumerate() {
            let s = r.dot(&r);
            if s > best {
                best = s;
                start = i;
            }
        }
        let w = local.ncols();
        let flat: Vec<f64> = local.iter().copied().collect();
        farthest_first(n, k, start, |a, b| {
            flat[a * w..(a + 1) * w]
                .iter()
                .zip(&flat[b * w..(b + 1) * w])
                .map(|(x, y)| (x - y) * (x - y))
                .sum()
        })
    }

    pub fn forward(&self, sample: &Sample) -> Result<Forward> {
        let cfg = &self.config;
        let p = &self.params;
        let l = &self.layout;
        let encoding = self.encode(&sample.cloud)?;
        let g = Array2::from_shape_vec((1, encoding.global.len()), encoding.global.clone()).expect("row");

        let (head_out, head_cache) = l.head.forward(p, g.clone());
        let offsets = flat_points(head_out.as_slice().expect("contiguous"));
        let (anchors, anchor_points, keypoints) = match cfg.head {
            HeadKind::Direct => (Vec::new(), Vec::new(), offsets),
            HeadKind::Anchored => {
                if cfg.n_kp > cfg.n_in {
                    return Err(Error::Size {
                        context: "keypoints versus input points",
                        expected: cfg.n_in,
                        got: cfg.n_kp,
                    });
                }
                let anchors = Self::feature_anchors(encoding.local.view(), cfg.n_kp);
                let pts: Vec<Point3> = anchors.iter().map(|&i| sample.cloud.points[i]).collect();
                let mix = p.data(l.mix.expect("anchored head has a mixing tensor"));
                let kp = pts
                    .iter()
                    .zip(&offsets)
                    .enumerate()
                    .map(|(j, (&a, &o))| {
                        let c = &mix[j * 9..j * 9 + 9];
                        let ca = Point3::new(
                            c[0] * a.x + c[1] * a.y + c[2] * a.z,
                            c[3] * a.x + c[4] * a.y + c[5] * a.z,
                            c[6] * a.x + c[7] * a.y + c[8] * a.z,
                        );
                        a + o + ca
                    })
                    .collect();
                (anchors, pts, kp)
            }
        };
        check_points("keypoint head", &keypoints)?;

        let mut coarse = None;
        let mut coarse_cache = None;
        let mut skeleton = None;
        let mut dense = None;
        let mut refine = None;
        if let (Some(cd), Some(rin), Some(rrest)) = (&l.coarse, &l.refine_in, &l.refine) {
            let (c_out, c_cache) = cd.forward(p, g);
            let c_pts = flat_points(c_out.as_slice().expect("contiguous"));
            check_points("coarse decoder", &c_pts)?;
            let mut sources: Vec<Point3> = Vec::new();
            if cfg.skeleton {
                let sk = build_skeleton(
                    &keypoints,
                    &PointCloud::new(c_pts.clone()),
                    SkeletonParams {
                        neighbors: cfg.skeleton_neighbors,
                        density: cfg.skeleton_density,
                        alpha: cfg.skeleton_alpha,
                    },
                )?;
                sources.extend_from_slice(&sk.samples.points);
                skeleton = Some(sk);
            }
            sources.extend_from_slice(&c_pts);
            let gsz = cfg.grid_size;
            let per = gsz * gsz;
            let m = cfg.n_dense / per;
            let source: Vec<usize> = (0..m).map(|i| i * sources.len() / m).collect();
            let mut x = Array2::zeros((m * per, 5));
            for (i, &s) in source.iter().enumerate() {
                let seed = sources[s];
                for u in 0..gsz {
                    for v in 0..gsz {
                        let r = i * per + u * gsz + v;
                        x[[r, 0]] = seed.x;
                        x[[r, 1]] = seed.y;
                        x[[r, 2]] = seed.z;
                        x[[r, 3]] = grid_coord(u, gsz);
                        x[[r, 4]] = grid_coord(v, gsz);
                    }
                }
            }
            let mut h = rin.forward(p, x.view(), &encoding.global);
            let (disp, rest) = if rrest.layers.is_empty() {
                (h.clone(), MlpCache { inputs: Vec::new() })
            } else {
                relu_inplace(&mut h);
                rrest.forward(p, h.clone())
            };
            let d_pts: Vec<Point3> = disp
                .rows()
                .into_iter()
                .zip(x.rows())
                .map(|(d, xr)| {
                    Point3::new(
                        xr[0] + cfg.grid_scale * xr[3] + d[0],
                        xr[1] + cfg.grid_scale * xr[4] + d[1],
                        xr[2] + d[2],
                    )
                })
                .collect();
            check_points("dense refinement", &d_pts)?;
            coarse = Some(c_pts);
            coarse_cache = Some(c_cache);
            dense = Some(d_pts);
            refine = Some(RefineCache { source, x, h, rest });
        }
        Ok(Forward {
            encoding,
            anchors,
            keypoints,
            coarse,
            skeleton,
            dense,
            head_cache,
            anchor_points,
            coarse_cache,
            refine,
        })
    }

    /// Loss terms and output gradients for one forward pass.
    pub fn loss(&self, fwd: &Forward, sample: &Sample, target: &Target, w: &LossWeights) -> Result<(LossTerms, OutputGrads, u64)> {
        let tf = &sample.transform;
        let kind = self.config.train_chamfer;
        let mut sig = DefaultHasher::new();
        let mut gk = vec![Point3::ZERO; fwd.keypoints.len()];
        let n_e = fwd.keypoints.len().min(N_ELECTRODES);
        let le = electrode_term(&fwd.keypoints[..n_e], &target.electrodes[..n_e], tf, 1.0, &mut gk, &mut sig);
        let lk = chamfer_term(&fwd.keypoints, &target.topology, tf, kind, w.lambda_keypoint, &mut gk, &mut sig);
        let (mut lc, mut ld) = (0.0, 0.0);
        let mut gc = Vec::new();
        let mut gd = Vec::new();
        if let (Some(c), Some(d)) = (&fwd.coarse, &fwd.dense) {
            gc = vec![Point3::ZERO; c.len()];
            gd = vec![Point3::ZERO; d.len()];
            lc = chamfer_term(c, &target.coarse, tf, kind, w.lambda_rec, &mut gc, &mut sig);
            ld = chamfer_term(d, &target.dense, tf, kind, w.lambda_rec * w.beta, &mut gd, &mut sig);
        }
        let terms = LossTerms::combine(le, lk, lc, ld, w);
        if !terms.total.is_finite() {
            return Err(Error::NonFinite { layer: "loss" });
        }
        Ok((
            terms,
            OutputGrads {
                keypoints: gk,
                coarse: gc,
                dense: gd,
            },
            sig.finish(),
        ))
    }

    /// Reverse pass from output gradients to parameter gradients.
    pub fn backward(&self, fwd: &Forward, d: &OutputGrads) -> Result<Grads> {
        let cfg = &self.config;
        let p = &self.params;
        let l = &self.layout;
        let global = &fwd.encoding.global;
        let mut grads = p.zeros_like();
        let mut dfg = vec![0.0; global.len()];
        let mut dk = d.keypoints.clone();

        if let (Some(rc), Some(rin), Some(rrest), Some(cd), Some(cc), Some(coarse)) = (
            &fwd.refine,
            &l.refine_in,
            &l.refine,
            &l.coarse,
            &fwd.coarse_cache,
            &fwd.coarse,
        ) {
            let mut dcoarse = d.coarse.clone();
            let ddense = Array2::from_shape_fn((d.dense.len(), 3), |(i, a)| d.dense[i][a]);
            let dh = if rrest.layers.is_empty() {
                ddense.clone()
            } else {
                let mut dh = rrest.backward(p, &rc.rest, ddense.clone(), &mut grads, true).expect("dx");
                relu_backward(&mut dh, rc.h.view());
                dh
            };
            let (dx, dg) = rin.backward(p, rc.x.view(), global, dh.view(), &mut grads, true);
            let dx = dx.expect("dx");
            for (a, b) in dfg.iter_mut().zip(dg) {
                *a += b;
            }
            let per = cfg.grid_size * cfg.grid_size;
            let n_sk = fwd.skeleton.as_ref().map_or(0, |s| s.len());
            let mut dsk = vec![Point3::ZERO; n_sk];
            for (i, &s) in rc.source.iter().enumerate() {
                let mut acc = Point3::ZERO;
                for r in i * per..(i + 1) * per {
                    acc += Point3::new(ddense[[r, 0]] + dx[[r, 0]], ddense[[r, 1]] + dx[[r, 1]], ddense[[r, 2]] + dx[[r, 2]]);
                }
                if s < n_sk {
                    dsk[s] += acc;
                } else {
                    dcoarse[s - n_sk] += acc;
                }
            }
            if let Some(sk) = &fwd.skeleton {
                sk.backward(&dsk, &mut dk, &mut dcoarse);
            }
            debug_assert_eq!(dcoarse.len(), coarse.len());
            let dflat = Array2::from_shape_fn((1, dcoarse.len() * 3), |(_, k)| dcoarse[k / 3][k % 3]);
            let dgc = cd.backward(p, cc, dflat, &mut grads, true).expect("dx");
            for (a, b) in dfg.iter_mut().zip(dgc.iter()) {
                *a += b;
            }
        }

        if let Some(mix) = l.mix {
            let gm = &mut grads.data[mix];
            for (j, (g, a)) in dk.iter().zip(&fwd.anchor_points).enumerate() {
                for r in 0..3 {
                    for c in 0..3 {
                        gm[j * 9 + r * 3 + c] += g[r] * a[c];
                    }
                }
            }
        }
        let dout = Array2::from_shape_fn((1, dk.len() * 3), |(_, k)| dk[k / 3][k % 3]);
        let dgh = l.head.backward(p, &fwd.head_cache, dout, &mut grads, true).expect("dx");
        for (a, b) in dfg.iter_mut().zip(dgh.iter()) {
            *a += b;
        }
        check("global feature gradient", dfg.iter().copied())?;
        self.encoder_backward(&fwd.encoding, &dfg, &mut grads);
        if !grads.is_finite() {
            return Err(Error::NonFinite { layer: "parameter gradients" });
        }
        Ok(grads)
    }

    /// Backward through both max-pools, touching only the winning rows.
    fn encoder_backward(&self, enc: &Encoding, dfg: &[f64], grads: &mut Grads) {
        let p = &self.params;
        let l = &self.layout;
        let c = &enc.cache;
        let rows2 = unique_rows(c.arg2.iter().copied());
        let pos2 = |r: usize| rows2.binary_search(&r).expect("row present");
        let mut dout = Array2::zeros((rows2.len(), dfg.len()));
        for (col, (&r, &dv)) in c.arg2.iter().zip(dfg).enumerate() {
            dout[[pos2(r), col]] = dv;
        }
        let dh = if l.enc2.layers.is_empty() {
            dout
        } else {
            let sub = c.enc2.gather(&rows2);
            let mut dh = l.enc2.backward(p, &sub, dout, grads, true).expect("dx");
            relu_backward(&mut dh, c.h2.select(Axis(0), &rows2).view());
            dh
        };
        let f1_sub = enc.local.select(Axis(0), &rows2);
        let (df1_sub, dg1) = l.enc2_in.backward(p, f1_sub.view(), &c.g1, dh.view(), grads, true);
        let df1_sub = df1_sub.expect("dx");
        let rows1 = unique_rows(rows2.iter().copied().chain(c.arg1.iter().copied()));
        let pos1 = |r: usize| rows1.binary_search(&r).expect("row present");
        let mut df1 = Array2::zeros((rows1.len(), enc.local.ncols()));
        for (k, &r) in rows2.iter().enumerate() {
            let mut dst = df1.row_mut(pos1(r));
            dst += &df1_sub.row(k);
        }
        for (col, (&r, &dv)) in c.arg1.iter().zip(&dg1).enumerate() {
            df1[[pos1(r), col]] += dv;
        }
        let sub1 = c.enc1.gather(&rows1);
        l.enc1.backward(p, &sub1, df1, grads, false);
    }

    /// Hash of the forward pass's discrete choices.
    pub fn structure_hash(&self, fwd: &Forward) -> u64 {
        let mut h = DefaultHasher::new();
        let c = &fwd.encoding.cache;
        c.enc1.mask_hash(&mut h);
        for &a in c.arg1.iter().chain(&c.arg2).chain(&fwd.anchors) {
            h.write_usize(a);
        }
        if !self.layout.enc2.layers.is_empty() {
            hash_mask(c.h2.view(), &mut h);
        }
        c.enc2.mask_hash(&mut h);
        fwd.head_cache.mask_hash(&mut h);
        if let Some(cc) = &fwd.coarse_cache {
            cc.mask_hash(&mut h);
        }
        if let Some(sk) = &fwd.skeleton {
            for e in &sk.edges {
                h.write_usize(e[0]);
                h.write_usize(e[1]);
            }
            for t in &sk.triangles {
                h.write_usize(t[0]);
                h.write_usize(t[1]);
                h.write_usize(t[2]);
            }
            for &n in &sk.nearest {
                h.write_usize(n);
            }
        }
        if let Some(rc) = &fwd.refine {
            if !self.layout.refine.as_ref().is_some_and(|m| m.layers.is_empty()) {
                hash_mask(rc.h.view(), &mut h);
            }
            rc.rest.mask_hash(&mut h);
        }
        h.finish()
    }

    /// Loss terms only, with the combined structure signature.
    pub fn evaluate_loss(&self, sample: &Sample, target: &Target, w: &LossWeights) -> Result<(LossTerms, u64)> {
        let fwd = self.forward(sample)?;
        let (terms, _, sig) = self.loss(&fwd, sample, target, w)?;
        Ok((terms, sig ^ self.structure_hash(&fwd).rotate_left(17)))
    }

    pub fn loss_and_grad(&self, sample: &Sample, target: &Target, w: &LossWeights) -> Result<Evaluation> {
        let fwd = self.forward(sample)?;
        let (terms, d, sig) = self.loss(&fwd, sample, target, w)?;
        let grads = self.backward(&fwd, &d)?;
        Ok(Evaluation {
            terms,
            grads,
            signature: sig ^ self.structure_hash(&fwd).rotate_left(17),
        })
    }

    /// Runs the model on a subject-coordinate cloud and maps the outputs back.
    pub fn predict(&self, raw: &PointCloud) -> Result<Prediction> {
        let sample = self.prepare(raw)?;
        let fwd = self.forward(&sample)?;
        let tf = &sample.transform;
        let back = |v: &[Point3]| PointCloud::new(v.iter().map(|&q| tf.invert(q)).collect());
        let keypoints = back(&fwd.keypoints);
        if keypoints.len() < N_ELECTRODES {
            return Err(Error::Config(format!(
                "model has {} keypoints; electrodes need {N_ELECTRODES}",
                keypoints.len()
            )));
        }
        let electrodes = ElectrodeSet::from_slice(&keypoints.points[..N_ELECTRODES])?;
        Ok(Prediction {
            keypoints,
            electrodes,
            coarse: fwd.coarse.as_deref().map(back),
            dense: fwd.dense.as_deref().map(back),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_gradients;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
    }

    fn toy_target(rng: &mut ChaCha8Rng) -> Target {
        let e = random_cloud(rng, N_ELECTRODES);
        Target::new(
            e.points.try_into().unwrap(),
            &random_cloud(rng, 12),
            &random_cloud(rng, 20),
            &random_cloud(rng, 30),
        )
        .unwrap()
    }

    fn set(model: &mut Tim, name: &str, data: &[f64]) {
        let id = model.params.find(name).unwrap_or_else(|| panic!("no tensor {name}"));
        assert_eq!(model.params.tensors[id].data.len(), data.len(), "{name}");
        model.params.tensors[id].data = data.to_vec();
    }

    fn zero_matching(model: &mut Tim, pred: impl Fn(&str) -> bool) {
        for t in &mut model.params.tensors {
            if pred(&t.name) {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    #[test]
    fn global_feature_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Tim::new(ModelConfig::tiny(64, 10), 5).unwrap();
        let cloud = random_cloud(&mut rng, 64);
        let base = model.encode(&cloud).unwrap();
        for _ in 0..10 {
            let mut perm: Vec<usize> = (0..64).collect();
            perm.shuffle(&mut rng);
            let enc = model.encode(&cloud.select(&perm)).unwrap();
            assert_eq!(enc.global, base.global);
            for (i, &src) in perm.iter().enumerate() {
                assert_eq!(enc.local.row(i), base.local.row(src));
            }
        }
    }

    #[test]
    fn zero_weights_give_a_bias_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = Tim::new(ModelConfig::tiny(32, 10), 3).unwrap();
        zero_matching(&mut model, |n| n.starts_with("encoder") && !n.ends_with(".bias"));
        let a = model.encode(&random_cloud(&mut rng, 32)).unwrap();
        let b = model.encode(&random_cloud(&mut rng, 32)).unwrap();
        assert_eq!(a.global, b.global);
        let last = model.params.find("encoder.stage2.rest.0.bias").unwrap();
        assert_eq!(a.global, model.params.tensors[last].data);
    }

    #[test]
    fn two_point_single_unit_forward_by_hand() {
        let cfg = ModelConfig {
            n_in: 2,
            n_kp: 1,
            encoder_stage1: vec![1],
            encoder_stage2: vec![1],
            head: HeadKind::Direct,
            keypoint_hidden: vec![],
            reconstruction: false,
            ..ModelConfig::default()
        };
        let mut model = Tim::new(cfg, 0).unwrap();
        set(&mut model, "encoder.stage1.0.weight", &[0.5, -1.0, 2.0]);
        set(&mut model, "encoder.stage1.0.bias", &[0.1]);
        set(&mut model, "encoder.stage2.0.weight", &[2.0]);
        set(&mut model, "encoder.stage2.0.bias", &[-1.0]);
        set(&mut model, "encoder.stage2.0.shared", &[0.5]);
        let cloud = PointCloud::new(vec![Point3::new(1.0, 2.0, 3.0), Point3::new(-1.0, 0.0, 2.0)]);
        let enc = model.encode(&cloud).unwrap();
        // f = (4.6, 3.6), pooled 4.6; h = 2 f + 0.5 * 4.6 - 1.
        assert!((enc.local[[0, 0]] - 4.6).abs() < 1e-12);
        assert!((enc.local[[1, 0]] - 3.6).abs() < 1e-12);
        assert!((enc.global[0] - 10.5).abs() < 1e-12);
    }

    fn brute_feature_fps(f: &[f64], k: usize) -> Vec<usize> {
        let start = (0..f.len()).fold(0, |b, i| if f[i] * f[i] > f[b] * f[b] { i } else { b });
        let mut sel = vec![start];
        while sel.len() < k {
            let mut best = (f64::NEG_INFINITY, 0);
            for i in 0..f.len() {
                if sel.contains(&i) {
                    continue;
                }
                let d = sel.iter().map(|&s| (f[i] - f[s]).powi(2)).fold(f64::INFINITY, f64::min);
                if d > best.0 {
                    best = (d, i);
                }
            }
            sel.push(best.1);
        }
        sel
    }

    #[test]
    fn feature_fps_matches_brute_force() {
        let f = [0.0, 3.0, 1.0, 7.0, 4.0];
        let a = Array2::from_shape_vec((5, 1), f.to_vec()).unwrap();
        let got = Tim::feature_anchors(a.view(), 5);
        assert_eq!(got, vec![3, 0, 1, 2, 4]);
        assert_eq!(got, brute_feature_fps(&f, 5));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let f: Vec<f64> = (0..30).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = Array2::from_shape_vec((30, 1), f.clone()).unwrap();
            assert_eq!(Tim::feature_anchors(a.view(), 12), brute_feature_fps(&f, 12));
        }
    }

    #[test]
    fn zero_offset_head_selects_input_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n_kp in [10, 24] {
            let mut cfg = ModelConfig::tiny(24, n_kp);
            cfg.reconstruction = false;
            let mut model = Tim::new(cfg, 9).unwrap();
            zero_matching(&mut model, |n| n.starts_with("keypoints.head"));
            let sample = model.prepare(&random_cloud(&mut rng, 24)).unwrap();
            let fwd = model.forward(&sample).unwrap();
            for (k, &a) in fwd.keypoints.iter().zip(&fwd.anchors) {
                assert_eq!(*k, sample.cloud.points[a]);
            }
            if n_kp == 24 {
                let mut idx = fwd.anchors.clone();
                idx.sort_unstable();
                assert_eq!(idx, (0..24).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn identity_coarse_layer_repeats_the_global_feature() {
        let mut cfg = ModelConfig::tiny(16, 10);
        cfg.encoder_stage2 = vec![8, 3];
        cfg.coarse_hidden = vec![];
        cfg.n_coarse = 4;
        let mut model = Tim::new(cfg, 1).unwrap();
        let w: Vec<f64> = (0..12).flat_map(|r| (0..3).map(move |c| f64::from(u8::from(r % 3 == c)))).collect();
        set(&mut model, "coarse.0.weight", &w);
        set(&mut model, "coarse.0.bias", &[0.0; 12]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sample = model.prepare(&random_cloud(&mut rng, 16)).unwrap();
        let fwd = model.forward(&sample).unwrap();
        let g = &fwd.encoding.global;
        for c in fwd.coarse.as_ref().unwrap() {
            assert_eq!(c.to_array().to_vec(), *g);
        }
        let again = model.forward(&sample).unwrap();
        assert_eq!(again.coarse, fwd.coarse);
    }

    #[test]
    fn zero_refinement_replicates_seeds_on_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = ModelConfig::tiny(20, 10);
        let mut model = Tim::new(cfg.clone(), 2).unwrap();
        zero_matching(&mut model, |n| n.starts_with("refine"));
        let sample = model.prepare(&random_cloud(&mut rng, 20)).unwrap();
        let fwd = model.forward(&sample).unwrap();
        let mut sources = fwd.skeleton.as_ref().unwrap().samples.points.clone();
        sources.extend_from_slice(fwd.coarse.as_ref().unwrap());
        let dense = fwd.dense.as_ref().unwrap();
        assert_eq!(dense.len(), cfg.n_dense);
        let m = cfg.n_dense / 4;
        for (r, q) in dense.iter().enumerate() {
            let seed = sources[(r / 4) * sources.len() / m];
            let (u, v) = ((r % 4) / 2, r % 2);
            let off = Point3::new(
                cfg.grid_scale * (2.0 * u as f64 - 1.0),
                cfg.grid_scale * (2.0 * v as f64 - 1.0),
                0.0,
            );
            assert!(q.dist(seed + off) < 1e-15);
        }
    }

    #[test]
    fn single_unit_refinement_by_hand() {
        let cfg = ModelConfig {
            n_in: 12,
            n_kp: 10,
            n_coarse: 2,
            n_dense: 2,
            grid_size: 1,
            skeleton: false,
            refine_hidden: vec![1],
            ..ModelConfig::tiny(12, 10)
        };
        let mut model = Tim::new(cfg, 4).unwrap();
        set(&mut model, "refine.0.weight", &[1.0, -2.0, 0.5, 0.0, 0.0]);
        set(&mut model, "refine.0.bias", &[0.25]);
        let g = model.config.global_width();
        set(&mut model, "refine.0.shared", &vec![0.0; g]);
        set(&mut model, "refine.rest.0.weight", &[2.0, -1.0, 0.5]);
        set(&mut model, "refine.rest.0.bias", &[0.1, 0.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let sample = model.prepare(&random_cloud(&mut rng, 12)).unwrap();
        let fwd = model.forward(&sample).unwrap();
        let coarse = fwd.coarse.as_ref().unwrap();
        for (s, q) in coarse.iter().zip(fwd.dense.as_ref().unwrap()) {
            let h = (s.x - 2.0 * s.y + 0.5 * s.z + 0.25).max(0.0);
            let want = Point3::new(s.x + 2.0 * h + 0.1, s.y - h + 0.2, s.z + 0.5 * h + 0.3);
            assert!(q.dist(want) < 1e-12);
        }
    }

    #[test]
    fn disabled_terms_leave_the_electrode_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let model = Tim::new(ModelConfig::tiny(16, 10), 7).unwrap();
        let sample = model.prepare(&random_cloud(&mut rng, 16)).unwrap();
        let target = toy_target(&mut rng);
        let w = LossWeights {
            lambda_keypoint: 0.0,
            lambda_rec: 0.0,
            ..LossWeights::default()
        };
        let (t, _) = model.evaluate_loss(&sample, &target, &w).unwrap();
        assert_eq!(t.total, t.electrode);
        assert!(t.keypoint > 0.0 && t.coarse > 0.0 && t.dense > 0.0);
    }

    #[test]
    fn loss_terms_match_geometry_kernels() {
        use crate::geometry::{chamfer_with, mae_points};
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let model = Tim::new(ModelConfig::tiny(16, 12), 8).unwrap();
        for _ in 0..5 {
            let raw = random_cloud(&mut rng, 16).map(|p| p * 20.0 + Point3::new(3.0, -1.0, 30.0));
            let sample = model.prepare(&raw).unwrap();
            let target = toy_target(&mut rng);
            let w = LossWeights::default();
            let fwd = model.forward(&sample).unwrap();
            let (t, _, _) = model.loss(&fwd, &sample, &target, &w).unwrap();
            let tf = &sample.transform;
            let norm = |c: &TargetClouds| PointCloud::new(c.iter().map(|&p| tf.apply(p)).collect());
            type TargetClouds = Vec<Point3>;
            let kind = model.config.train_chamfer;
            let kp = PointCloud::new(fwd.keypoints.clone());
            let e = mae_points(&kp.select(&(0..10).collect::<Vec<_>>()), &norm(&target.electrodes.to_vec())).unwrap();
            let k = chamfer_with(&kp, &norm(&target.topology.points), kind).unwrap();
            let c = chamfer_with(&PointCloud::new(fwd.coarse.clone().unwrap()), &norm(&target.coarse.points), kind).unwrap();
            let d = chamfer_with(&PointCloud::new(fwd.dense.clone().unwrap()), &norm(&target.dense.points), kind).unwrap();
            let total = e + 0.05 * k + 0.05 * (c + 5.0 * d);
            for (a, b) in [(t.electrode, e), (t.keypoint, k), (t.coarse, c), (t.dense, d), (t.total, total)] {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let model = Tim::new(ModelConfig::tiny(16, 4), 11).unwrap();
        let sample = model.prepare(&random_cloud(&mut rng, 16)).unwrap();
        let target = toy_target(&mut rng);
        let r = check_gradients(&model, &sample, &target, &LossWeights::default(), 1e-4, 1e-6).unwrap();
        let total = model.params.num_scalars();
        assert!(r.max_rel_error < 1e-3, "{r:?}");
        assert!(r.checked * 10 >= total * 9, "{r:?} of {total}");
    }

    #[test]
    fn gradients_scale_with_output_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let model = Tim::new(ModelConfig::tiny(16, 10), 12).unwrap();
        let sample = model.prepare(&random_cloud(&mut rng, 16)).unwrap();
        let target = toy_target(&mut rng);
        let fwd = model.forward(&sample).unwrap();
        let (_, d, _) = model.loss(&fwd, &sample, &target, &LossWeights::default()).unwrap();
        let g1 = model.backward(&fwd, &d).unwrap();
        let scaled = OutputGrads {
            keypoints: d.keypoints.iter().map(|&p| p * 3.0).collect(),
            coarse: d.coarse.iter().map(|&p| p * 3.0).collect(),
            dense: d.dense.iter().map(|&p| p * 3.0).collect(),
        };
        let g3 = model.backward(&fwd, &scaled).unwrap();
        for (a, b) in g1.flat().zip(g3.flat()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let zero = OutputGrads {
            keypoints: vec![Point3::ZERO; d.keypoints.len()],
            coarse: vec![Point3::ZERO; d.coarse.len()],
            dense: vec![Point3::ZERO; d.dense.len()],
        };
        assert!(model.backward(&fwd, &zero).unwrap().flat().all(|v| v == 0.0));
    }

    #[test]
    fn variants_build_and_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for v in crate::model::Variant::ALL {
            let mut cfg = ModelConfig::tiny(16, 10);
            let mut w = LossWeights::default();
            v.apply(&mut cfg, &mut w);
            let model = Tim::new(cfg, 1).unwrap();
            let raw = random_cloud(&mut rng, 16);
            let pred = model.predict(&raw).unwrap();
            assert_eq!(pred.keypoints.len(), model.config.n_kp);
            assert_eq!(pred.dense.is_some(), model.config.reconstruction);
        }
    }

    #[test]
    fn wrong_point_count_is_a_size_error() {
        let model = Tim::new(ModelConfig::tiny(16, 10), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        assert!(matches!(model.prepare(&random_cloud(&mut rng, 15)), Err(Error::Size { .. })));
        let mut cfg = ModelConfig::tiny(8, 10);
        cfg.reconstruction = false;
        let m = Tim::new(cfg, 1).unwrap();
        let s = m.prepare(&random_cloud(&mut rng, 8)).unwrap();
        assert!(matches!(m.forward(&s), Err(Error::Size { .. })));
    }
}
