use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A named, row-major parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Flat, ordered collection of every trainable tensor of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zero,
    /// `U(-bound, bound)`.
    Uniform(f64),
}

impl ParamStore {
    pub fn add(&mut self, name: String, shape: Vec<usize>, init: Init, rng: &mut ChaCha8Rng) -> usize {
        let n = shape.iter().product();
        let data = match init {
            Init::Zero => vec![0.0; n],
            Init::Uniform(b) => (0..n).map(|_| rng.random_range(-b..=b)).collect(),
        };
        self.tensors.push(Tensor { name, shape, data });
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn data(&self, id: usize) -> &[f64] {
        &self.tensors[id].data
    }

    pub fn matrix(&self, id: usize) -> ArrayView2<'_, f64> {
        let t = &self.tensors[id];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("rank-2 tensor")
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn zeros_like(&self) -> Grads {
        Grads {
            data: self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Scalar at flat position `k` across all tensors.
    pub fn flat_get(&self, k: usize) -> f64 {
        let (t, i) = self.locate(k);
        self.tensors[t].data[i]
    }

    pub fn flat_set(&mut self, k: usize, v: f64) {
        let (t, i) = self.locate(k);
        self.tensors[t].data[i] = v;
    }

    /// `(tensor id, offset)` of flat index `k`.
    pub fn locate(&self, mut k: usize) -> (usize, usize) {
        for (t, ten) in self.tensors.iter().enumerate() {
            if k < ten.data.len() {
                return (t, k);
            }
            k -= ten.data.len();
        }
        panic!("flat parameter index out of range");
    }
}

/// Gradient buffers laid out like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn matrix_mut(&mut self, id: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[id]).expect("rank-2 gradient")
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().flatten().copied()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(f64::is_finite)
    }
}
