use rand::Rng;

use super::layer::{DenseLayer, LayerNorm};
use super::ParamMut;
use crate::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Two-layer perceptron `W2 · LN(LReLU(W1 x + b1)) + b2`.
///
/// LayerNorm is applied after the activation.
#[derive(Debug, Clone)]
pub struct MlpNet {
    pub(crate) layer1: DenseLayer,
    pub(crate) norm: LayerNorm,
    pub(crate) layer2: DenseLayer,
    pub(crate) leaky_slope: f64,
}

/// Activations retained by [`MlpNet::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    in_dim: usize,
    hidden: usize,
    input: Vec<f64>,
    pre: Vec<f64>,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    post_norm: Vec<f64>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// First-layer outputs before the activation, `(batch, hidden)`.
    pub fn pre_activations(&self) -> &[f64] {
        &self.pre
    }
}

impl MlpNet {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        leaky_slope: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            layer1: DenseLayer::fan_in_uniform(in_dim, hidden, rng),
            norm: LayerNorm::new(hidden),
            layer2: DenseLayer::fan_in_uniform(hidden, out_dim, rng),
            leaky_slope,
        }
    }

    /// All weights and biases zero, LayerNorm at its identity (gain 1, shift 0).
    pub fn zeros(in_dim: usize, hidden: usize, out_dim: usize, leaky_slope: f64) -> Self {
        Self {
            layer1: DenseLayer::zeros(in_dim, hidden),
            norm: LayerNorm::new(hidden),
            layer2: DenseLayer::zeros(hidden, out_dim),
            leaky_slope,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layer1.in_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.layer1.out_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layer2.out_dim
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn layer1(&self) -> &DenseLayer {
        &self.layer1
    }

    pub fn layer2(&self) -> &DenseLayer {
        &self.layer2
    }

    pub fn layer1_mut(&mut self) -> &mut DenseLayer {
        &mut self.layer1
    }

    pub fn layer2_mut(&mut self) -> &mut DenseLayer {
        &mut self.layer2
    }

    pub fn norm(&self) -> &LayerNorm {
        &self.norm
    }

    pub fn norm_mut(&mut self) -> &mut LayerNorm {
        &mut self.norm
    }

    fn check_input(&self, input: &[f64]) -> Result<usize> {
        let d = self.in_dim();
        if input.len() % d != 0 {
            return Err(Error::Shape(format!(
                "input length {} is not a multiple of input width {d}",
                input.len()
            )));
        }
        if let Some(pos) = input.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite network input at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(input.len() / d)
    }

    /// Forward pass over a row-major batch `(batch, in_dim)`; returns the
    /// `(batch, out_dim)` output and the activation cache.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let batch = self.check_input(input)?;
        let (d, h, o) = (self.in_dim(), self.hidden_dim(), self.out_dim());
        let mut pre = vec![0.0; batch * h];
        let mut normalized = vec![0.0; batch * h];
        let mut post_norm = vec![0.0; batch * h];
        let mut inv_std = vec![0.0; batch];
        let mut output = vec![0.0; batch * o];
        let mut act = vec![0.0; h];
        for r in 0..batch {
            let x = &input[r * d..(r + 1) * d];
            let z = &mut pre[r * h..(r + 1) * h];
            self.layer1.apply(x, z);
            for (a, &zi) in act.iter_mut().zip(z.iter()) {
                *a = if zi > 0.0 { zi } else { self.leaky_slope * zi };
            }
            let xhat = &mut normalized[r * h..(r + 1) * h];
            inv_std[r] = LayerNorm::normalize(&act, xhat);
            let hn = &mut post_norm[r * h..(r + 1) * h];
            self.norm.affine(xhat, hn);
            self.layer2.apply(hn, &mut output[r * o..(r + 1) * o]);
        }
        let cache = ForwardCache {
            batch,
            in_dim: d,
            hidden: h,
            input: input.to_vec(),
            pre,
            normalized,
            inv_std,
            post_norm,
        };
        Ok((output, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Accumulates parameter gradients for `grad_output` (shape `(batch, out_dim)`)
    /// into the gradient buffers and returns the input gradient.
    ///
    /// Gradients add onto whatever the buffers already hold; call
    /// [`MlpNet::zero_grad`] between optimiser steps.
    pub fn backward(&mut self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Vec<f64>> {
        let (d, h, o) = (self.in_dim(), self.hidden_dim(), self.out_dim());
        if cache.in_dim != d || cache.hidden != h {
            return Err(Error::Usage(
                "forward cache was produced by a network of a different shape".into(),
            ));
        }
        if grad_output.len() != cache.batch * o {
            return Err(Error::Shape(format!(
                "output gradient has length {}, expected {}",
                grad_output.len(),
                cache.batch * o
            )));
        }
        let mut grad_input = vec![0.0; cache.batch * d];
        let mut g_hidden = vec![0.0; h];
        let mut g_act = vec![0.0; h];
        for r in 0..cache.batch {
            let go = &grad_output[r * o..(r + 1) * o];
            let hn = &cache.post_norm[r * h..(r + 1) * h];
            self.layer2.accumulate(hn, go, Some(&mut g_hidden));
            let xhat = &cache.normalized[r * h..(r + 1) * h];
            self.norm.backward(xhat, cache.inv_std[r], &g_hidden, &mut g_act);
            let z = &cache.pre[r * h..(r + 1) * h];
            for (g, &zi) in g_act.iter_mut().zip(z) {
                if zi <= 0.0 {
                    *g *= self.leaky_slope;
                }
            }
            let x = &cache.input[r * d..(r + 1) * d];
            self.layer1
                .accumulate(x, &g_act, Some(&mut grad_input[r * d..(r + 1) * d]));
        }
        Ok(grad_input)
    }

    pub fn zero_grad(&mut self) {
        self.layer1.zero_grad();
        self.norm.zero_grad();
        self.layer2.zero_grad();
    }

    /// Parameters in a fixed order: layer1 weight/bias, norm gain/shift,
    /// layer2 weight/bias. Names are prefixed with `prefix`.
    pub fn params_mut(&mut self, prefix: &str) -> Vec<ParamMut<'_>> {
        let Self { layer1, norm, layer2, .. } = self;
        let mut out = Vec::with_capacity(6);
        out.extend(layer1.params_mut(&format!("{prefix}.layer1")));
        out.extend(norm.params_mut(&format!("{prefix}.norm")));
        out.extend(layer2.params_mut(&format!("{prefix}.layer2")));
        out
    }

    pub fn parameter_count(&self) -> usize {
        let (d, h, o) = (self.in_dim(), self.hidden_dim(), self.out_dim());
        d * h + h + 2 * h + h * o + o
    }

    pub fn all_finite(&self) -> bool {
        [
            &self.layer1.weights,
            &self.layer1.bias,
            &self.norm.gain,
            &self.norm.shift,
            &self.layer2.weights,
            &self.layer2.bias,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }
}
