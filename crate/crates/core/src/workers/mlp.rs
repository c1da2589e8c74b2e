//! Fully connected network with ReLU hidden layers and a linear output.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::WorkerError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `inputs × outputs`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { w: Array2::zeros((inputs, outputs)), b: Array1::zeros(outputs) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of a forward pass, needed by `backward`.
#[derive(Clone, Debug)]
pub struct Tape {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Gradients with the same layout as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| Dense::zeros(l.w.nrows(), l.w.ncols())).collect() }
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.scaled_add(scale, &b.w);
            a.b.scaled_add(scale, &b.b);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }
}

impl Mlp {
    /// Uniform initialization in `±1/sqrt(fan_in)`. The output layer is
    /// scaled by `output_scale` so fresh policies start close to uniform.
    pub fn new(sizes: &[usize], output_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output size");
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let scale = if i + 1 == n { output_scale } else { 1.0 };
                let w = Array2::from_shape_simple_fn((io[0], io[1]), || rng.gen_range(-bound..bound) * scale);
                let b = Array1::from_shape_simple_fn(io[1], || rng.gen_range(-bound..bound) * scale);
                Dense { w, b }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|io| Dense::zeros(io[0], io[1])).collect() }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Tape, WorkerError> {
        if x.ncols() != self.input_dim() {
            return Err(WorkerError::Dimension { expected: self.input_dim(), got: x.ncols() });
        }
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = inputs[i].dot(&layer.w) + &layer.b;
            if i == last {
                return Ok(Tape { inputs, pre, output: z });
            }
            inputs.push(z.mapv(|v| v.max(0.0)));
            pre.push(z);
        }
        unreachable!("loop returns at the last layer")
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, WorkerError> {
        Ok(self.forward(x)?.output)
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, tape: &Tape, grad_output: &Array2<f64>) -> Grads {
        let mut grads = Grads::zeros_like(self);
        let mut g = grad_output.clone();
        for i in (0..self.layers.len()).rev() {
            grads.layers[i].w = tape.inputs[i].t().dot(&g);
            grads.layers[i].b = g.sum_axis(Axis(0));
            if i > 0 {
                let mut back = g.dot(&self.layers[i].w.t());
                back.zip_mut_with(&tape.pre[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                g = back;
            }
        }
        grads
    }

    /// Adds `scale * grads` to the parameters.
    pub fn apply(&mut self, grads: &Grads, scale: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            l.w.scaled_add(scale, &g.w);
            l.b.scaled_add(scale, &g.b);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), WorkerError> {
        if params.len() != self.param_count() {
            return Err(WorkerError::Dimension { expected: self.param_count(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            l.b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }
}
