//! A small fully connected network over a flat parameter vector.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scalar types the network runs in.
pub trait Real: Float + LinalgScalar + ScalarOperand + std::fmt::Debug + Send + Sync + 'static {}
impl<T: Float + LinalgScalar + ScalarOperand + std::fmt::Debug + Send + Sync + 'static> Real for T {}

/// Layer sizes plus all weights, laid out per layer as a row-major
/// `out x in` matrix followed by the `out` biases. SiLU between layers,
/// linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    dims: Vec<usize>,
    params: Vec<T>,
}

/// Activations kept from a forward pass.
pub struct Tape<T> {
    /// Input followed by each layer's post-activation output.
    acts: Vec<Array2<T>>,
    /// SiLU derivatives at the hidden pre-activations.
    slopes: Vec<Array2<T>>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Mlp<T> {
    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Uniform Kaiming-style initialization, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2, "at least an input and an output layer");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(dims));
        for w in dims.windows(2) {
            let bound = (3.0 / w[0] as f64).sqrt();
            params.extend((0..w[0] * w[1]).map(|_| T::from(rng.random_range(-bound..bound)).expect("finite")));
            params.extend(std::iter::repeat_n(T::zero(), w[1]));
        }
        Mlp { dims: dims.to_vec(), params }
    }

    pub fn from_parts(dims: Vec<usize>, params: Vec<T>) -> Option<Self> {
        (dims.len() >= 2 && dims.iter().all(|&d| d > 0) && params.len() == Self::param_count(&dims)).then_some(Mlp { dims, params })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> Mlp<U> {
        Mlp { dims: self.dims.clone(), params: self.params.iter().map(|&p| U::from(p).expect("representable")).collect() }
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, T>, ArrayView1<'_, T>) {
        let offset: usize = Self::param_count(&self.dims[..=k]);
        let (i, o) = (self.dims[k], self.dims[k + 1]);
        let w = ArrayView2::from_shape((o, i), &self.params[offset..offset + o * i]).expect("layer shape");
        let b = ArrayView1::from(&self.params[offset + o * i..offset + o * i + o]);
        (w, b)
    }

    /// Scores of a batch of rows.
    pub fn forward(&self, x: ArrayView2<'_, T>) -> (Array1<T>, Tape<T>) {
        let layers = self.dims.len() - 1;
        let mut acts = vec![x.to_owned()];
        let mut slopes = Vec::with_capacity(layers - 1);
        for k in 0..layers {
            let (w, b) = self.layer(k);
            let mut z = acts[k].dot(&w.t()) + b;
            if k + 1 < layers {
                let mut slope = z.clone();
                ndarray::Zip::from(&mut z).and(&mut slope).for_each(|a, d| {
                    let x = *a;
                    let s = sigmoid(x);
                    *a = x * s;
                    *d = s * (T::one() + x * (T::one() - s));
                });
                acts.push(z);
                slopes.push(slope);
            } else {
                acts.push(z);
            }
        }
        let out = acts[layers].column(0).to_owned();
        (out, Tape { acts, slopes })
    }

    pub fn score_rows(&self, x: ArrayView2<'_, T>) -> Array1<T> {
        self.forward(x).0
    }

    /// Adds the parameter gradient for output gradient `d_out` into `grad`.
    pub fn backward(&self, tape: &Tape<T>, d_out: ArrayView1<'_, T>, grad: &mut [T]) {
        let layers = self.dims.len() - 1;
        let mut delta = d_out.insert_axis(Axis(1)).to_owned();
        for k in (0..layers).rev() {
            let (w, _) = self.layer(k);
            let offset = Self::param_count(&self.dims[..=k]);
            let (i, o) = (self.dims[k], self.dims[k + 1]);
            let gw = delta.t().dot(&tape.acts[k]);
            for (g, v) in grad[offset..offset + o * i].iter_mut().zip(gw.iter()) {
                *g = *g + *v;
            }
            for (g, v) in grad[offset + o * i..offset + o * i + o].iter_mut().zip(delta.sum_axis(Axis(0)).iter()) {
                *g = *g + *v;
            }
            if k > 0 {
                let mut back = delta.dot(&w);
                back.zip_mut_with(&tape.slopes[k - 1], |d, &g| *d = *d * g);
                delta = back;
            }
        }
    }
}
