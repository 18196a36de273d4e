use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand_chacha::ChaCha8Rng;

use super::params::{Grads, Init, ParamStore};

/// Fully connected layer `y = x W^T + b` with `W` stored `out x in`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::with_bound(store, name, fan_in, fan_out, 1.0 / (fan_in as f64).sqrt(), rng)
    }

    pub fn with_bound(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bound: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(format!("{name}.weight"), vec![fan_out, fan_in], Init::Uniform(bound), rng);
        let b = store.add(format!("{name}.bias"), vec![fan_out], Init::Uniform(bound), rng);
        Linear { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, p: &ParamStore, x: ArrayView2<f64>) -> Array2<f64> {
        let mut y = x.dot(&p.matrix(self.w).t());
        let b = p.data(self.b);
        for mut row in y.rows_mut() {
            for (v, bi) in row.iter_mut().zip(b) {
                *v += bi;
            }
        }
        y
    }

    /// Accumulates parameter gradients; returns `dL/dx` when `want_dx`.
    pub fn backward(
        &self,
        p: &ParamStore,
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        g: &mut Grads,
        want_dx: bool,
    ) -> Option<Array2<f64>> {
        {
            let mut dw = g.matrix_mut(self.w, self.fan_out, self.fan_in);
            general_mat_mul(1.0, &dy.t(), &x, 1.0, &mut dw);
        }
        let db = &mut g.data[self.b];
        for row in dy.rows() {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        want_dx.then(|| dy.dot(&p.matrix(self.w)))
    }
}

/// Linear layer on per-row inputs plus a bias-free projection of one vector
/// shared by every row. Equivalent to concatenating that vector to each row.
#[derive(Clone, Copy, Debug)]
pub struct Fused {
    pub lin: Linear,
    pub wg: usize,
    pub g_width: usize,
}

impl Fused {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        g_width: usize,
        fan_out: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / ((fan_in + g_width) as f64).sqrt();
        let lin = Linear::with_bound(store, name, fan_in, fan_out, bound, rng);
        let wg = store.add(format!("{name}.shared"), vec![fan_out, g_width], Init::Uniform(bound), rng);
        Fused { lin, wg, g_width }
    }

    pub fn forward(&self, p: &ParamStore, x: ArrayView2<f64>, g: &[f64]) -> Array2<f64> {
        let mut y = self.lin.forward(p, x);
        let shared = p.matrix(self.wg).dot(&ndarray::ArrayView1::from(g));
        for mut row in y.rows_mut() {
            row += &shared;
        }
        y
    }

    /// Returns `dL/dx` (when asked) and `dL/dg`.
    pub fn backward(
        &self,
        p: &ParamStore,
        x: ArrayView2<f64>,
        g: &[f64],
        dy: ArrayView2<f64>,
        grads: &mut Grads,
        want_dx: bool,
    ) -> (Option<Array2<f64>>, Vec<f64>) {
        let dx = self.lin.backward(p, x, dy, grads, want_dx);
        let col = dy.sum_axis(Axis(0));
        {
            let mut dw = grads.matrix_mut(self.wg, self.lin.fan_out, self.g_width);
            for (mut row, &c) in dw.rows_mut().into_iter().zip(col.iter()) {
                for (d, &gv) in row.iter_mut().zip(g) {
                    *d += c * gv;
                }
            }
        }
        let dg = p.matrix(self.wg).t().dot(&col).to_vec();
        (dx, dg)
    }
}

pub fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 });
}

/// Zeroes `d` wherever the post-activation `act` is not positive.
pub fn relu_backward(d: &mut Array2<f64>, act: ArrayView2<f64>) {
    for (dv, &a) in d.iter_mut().zip(act.iter()) {
        if a <= 0.0 {
            *dv = 0.0;
        }
    }
}

/// Stack of linear layers with ReLU between them (none after the last).
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Inputs seen by each layer during the forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    pub inputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = fan_in;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}.{i}"), prev, w, rng));
            prev = w;
        }
        Mlp { layers }
    }

    pub fn fan_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn forward(&self, p: &ParamStore, x: Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.forward(p, cur.view());
            if i + 1 < self.layers.len() {
                relu_inplace(&mut y);
            }
            inputs.push(cur);
            cur = y;
        }
        (cur, MlpCache { inputs })
    }

    /// Backward pass restricted to the cached rows; returns `dL/dx` when asked.
    pub fn backward(
        &self,
        p: &ParamStore,
        cache: &MlpCache,
        dout: Array2<f64>,
        g: &mut Grads,
        want_dx: bool,
    ) -> Option<Array2<f64>> {
        let mut d = dout;
        for i in (0..self.layers.len()).rev() {
            let need = want_dx || i > 0;
            let mut dx = self.layers[i].backward(p, cache.inputs[i].view(), d.view(), g, need)?;
            if i > 0 {
                relu_backward(&mut dx, cache.inputs[i].view());
            }
            d = dx;
        }
        Some(d)
    }
}

impl MlpCache {
    /// Cache restricted to the given rows (for sparse upstream gradients).
    pub fn gather(&self, rows: &[usize]) -> MlpCache {
        MlpCache {
            inputs: self.inputs.iter().map(|a| a.select(Axis(0), rows)).collect(),
        }
    }

    /// Activation pattern fingerprint: every ReLU on/off bit, hashed.
    pub fn mask_hash(&self, h: &mut impl std::hash::Hasher) {
        for a in self.inputs.iter().skip(1) {
            hash_mask(a.view(), h);
        }
    }
}

pub fn hash_mask(a: ArrayView2<f64>, h: &mut impl std::hash::Hasher) {
    let mut word = 0u64;
    let mut n = 0;
    for &v in a.iter() {
        word = (word << 1) | u64::from(v > 0.0);
        n += 1;
        if n == 64 {
            h.write_u64(word);
            word = 0;
            n = 0;
        }
    }
    h.write_u64(word);
}

/// Column-wise max with the lowest row index winning ties.
pub fn column_max(a: ArrayView2<f64>) -> (Vec<f64>, Vec<usize>) {
    let cols = a.ncols();
    let mut val = vec![f64::NEG_INFINITY; cols];
    let mut arg = vec![0usize; cols];
    for (r, row) in a.rows().into_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v > val[c] {
                val[c] = v;
                arg[c] = r;
            }
        }
    }
    (val, arg)
}
