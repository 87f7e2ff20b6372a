//! Fully connected network over a flat parameter vector.
//!
//! Layer `l` stores its weight as an `in x out` row-major block followed by
//! the `out` biases. Hidden layers use tanh; the output layer is linear.

use nalgebra::DMatrix;
use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// All-zero network with the given layer sizes (input first).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Orthogonal weight initialization with zero biases. Hidden layers use
    /// gain sqrt(2); the output layer uses `output_gain`.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers {
                output_gain
            } else {
                std::f64::consts::SQRT_2
            };
            let w = orthogonal_matrix(fan_in, fan_out, rng) * gain;
            let (off, _) = net.layer_offsets(l);
            for r in 0..fan_in {
                for c in 0..fan_out {
                    net.params[off + r * fan_out + c] = w[(r, c)];
                }
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offsets of the weight block and the bias block of layer `l`.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(l) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn weight(&self, l: usize) -> ArrayView2<'_, f64> {
        let (w, _) = self.layer_offsets(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        ArrayView2::from_shape((i, o), &self.params[w..w + i * o]).unwrap()
    }

    fn bias(&self, l: usize) -> ArrayView1<'_, f64> {
        let (_, b) = self.layer_offsets(l);
        ArrayView1::from(&self.params[b..b + self.sizes[l + 1]])
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> ForwardCache {
        assert_eq!(x.ncols(), self.input_dim(), "input width mismatch");
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut current = x.to_owned();
        for l in 0..layers {
            let mut z = Array2::zeros((current.nrows(), self.sizes[l + 1]));
            z += &self.bias(l);
            general_mat_mul(1.0, &current, &self.weight(l), 1.0, &mut z);
            if l + 1 < layers {
                z.mapv_inplace(f64::tanh);
            }
            inputs.push(std::mem::replace(&mut current, z));
        }
        ForwardCache {
            inputs,
            output: current,
        }
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
    pub fn backward(&self, cache: &ForwardCache, d_output: ArrayView2<'_, f64>, grad: &mut [f64]) {
        assert_eq!(grad.len(), self.params.len());
        let layers = self.num_layers();
        let mut delta = d_output.to_owned();
        for l in (0..layers).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.inputs[l];
            {
                let (head, tail) = grad.split_at_mut(b_off);
                let mut gw = ArrayViewMut2::from_shape((i, o), &mut head[w_off..]).unwrap();
                general_mat_mul(1.0, &input.t(), &delta, 1.0, &mut gw);
                let mut gb = ArrayViewMut1::from(&mut tail[..o]);
                gb += &delta.sum_axis(Axis(0));
            }
            if l > 0 {
                let mut d_in = Array2::zeros((delta.nrows(), i));
                general_mat_mul(1.0, &delta, &self.weight(l).t(), 0.0, &mut d_in);
                // input to layer l is tanh output of layer l-1
                d_in.zip_mut_with(input, |d, a| *d *= 1.0 - a * a);
                delta = d_in;
            }
        }
    }
}

fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let (tall_r, tall_c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::<f64>::from_fn(tall_r, tall_c, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    // Sign fix so the distribution is uniform over orthogonal matrices.
    let r = qr.r();
    for c in 0..tall_c {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}
