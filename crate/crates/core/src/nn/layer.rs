use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::ParamMut;

/// Epsilon added to the variance inside the LayerNorm square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `W x + b` with `W` stored row-major as `(out, in)`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) grad_weights: Vec<f64>,
    pub(crate) grad_bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            grad_weights: vec![0.0; in_dim * out_dim],
            grad_bias: vec![0.0; out_dim],
        }
    }

    /// He-style uniform initialisation: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero bias.
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    ///
    /// Non-zero biases matter here: with zero biases a LayerNorm after this
    /// layer makes the network invariant to the scale of its input.
    pub fn fan_in_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        let limit = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = dist.sample(rng);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `out = W x + b` for one row.
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias))
        {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients for one row and writes `W^T g` into
    /// `grad_in` when requested.
    pub(crate) fn accumulate(&mut self, x: &[f64], grad_out: &[f64], grad_in: Option<&mut [f64]>) {
        for (o, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            self.grad_bias[o] += g;
            let row = &mut self.grad_weights[o * self.in_dim..(o + 1) * self.in_dim];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if let Some(grad_in) = grad_in {
            grad_in.fill(0.0);
            for (o, &g) in grad_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
                for (gi, w) in grad_in.iter_mut().zip(row) {
                    *gi += g * w;
                }
            }
        }
    }

    pub(crate) fn zero_grad(&mut self) {
        self.grad_weights.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    pub(crate) fn params_mut(&mut self, prefix: &str) -> [ParamMut<'_>; 2] {
        [
            ParamMut::new(format!("{prefix}.weight"), &mut self.weights, &mut self.grad_weights),
            ParamMut::new(format!("{prefix}.bias"), &mut self.bias, &mut self.grad_bias),
        ]
    }
}

/// Per-row layer normalisation with learned gain and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub(crate) gain: Vec<f64>,
    pub(crate) shift: Vec<f64>,
    pub(crate) grad_gain: Vec<f64>,
    pub(crate) grad_shift: Vec<f64>,
}

impl LayerNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gain: vec![1.0; width],
            shift: vec![0.0; width],
            grad_gain: vec![0.0; width],
            grad_shift: vec![0.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.gain.len()
    }

    pub fn gain_mut(&mut self) -> &mut [f64] {
        &mut self.gain
    }

    pub fn shift_mut(&mut self) -> &mut [f64] {
        &mut self.shift
    }

    /// Writes the normalised row into `normalized` and returns `1/sqrt(var + eps)`.
    pub(crate) fn normalize(a: &[f64], normalized: &mut [f64]) -> f64 {
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let var = a.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for (o, v) in normalized.iter_mut().zip(a) {
            *o = (v - mean) * inv_std;
        }
        inv_std
    }

    pub(crate) fn affine(&self, normalized: &[f64], out: &mut [f64]) {
        for (o, ((x, g), s)) in out
            .iter_mut()
            .zip(normalized.iter().zip(&self.gain).zip(&self.shift))
        {
            *o = g * x + s;
        }
    }

    /// Gradient through gain/shift and the mean/variance normalisation for one
    /// row; writes the gradient with respect to the un-normalised input.
    pub(crate) fn backward(
        &mut self,
        normalized: &[f64],
        inv_std: f64,
        grad_out: &[f64],
        grad_in: &mut [f64],
    ) {
        let n = normalized.len() as f64;
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for j in 0..normalized.len() {
            self.grad_gain[j] += grad_out[j] * normalized[j];
            self.grad_shift[j] += grad_out[j];
            let g = grad_out[j] * self.gain[j];
            grad_in[j] = g;
            mean_g += g;
            mean_gx += g * normalized[j];
        }
        mean_g /= n;
        mean_gx /= n;
        for (gi, x) in grad_in.iter_mut().zip(normalized) {
            *gi = inv_std * (*gi - mean_g - x * mean_gx);
        }
    }

    pub(crate) fn zero_grad(&mut self) {
        self.grad_gain.fill(0.0);
        self.grad_shift.fill(0.0);
    }

    pub(crate) fn params_mut(&mut self, prefix: &str) -> [ParamMut<'_>; 2] {
        [
            ParamMut::new(format!("{prefix}.gain"), &mut self.gain, &mut self.grad_gain),
            ParamMut::new(format!("{prefix}.shift"), &mut self.shift, &mut self.grad_shift),
        ]
    }
}
