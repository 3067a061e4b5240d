use alloc::vec;
use alloc::vec::Vec;

use super::{check_eval_inputs, finish_grad, GradientOracle};
use crate::error::{Error, Result};
use crate::param::{dot, ParamVector};

/// Smooth hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(z),
            Activation::Softplus => z.max(0.0) + libm::log1p(libm::exp(-z.abs())),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Softplus => {
                if z >= 0.0 {
                    1.0 / (1.0 + libm::exp(-z))
                } else {
                    let e = libm::exp(z);
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// Fully connected classifier with softmax cross-entropy loss.
///
/// Parameters are laid out layer by layer: the row-major `out × in` weight
/// matrix followed by the `out` biases.
#[derive(Debug, Clone)]
pub struct MlpObjective {
    sizes: Vec<usize>,
    activation: Activation,
    features: Vec<f64>,
    labels: Vec<usize>,
    l2_weight: f64,
    loss_scale: f64,
}

impl MlpObjective {
    /// `sizes` is `[inputs, hidden..., classes]` and needs at least one
    /// hidden layer.
    pub fn new(
        sizes: Vec<usize>,
        activation: Activation,
        features: Vec<f64>,
        labels: Vec<usize>,
        l2_weight: f64,
    ) -> Result<Self> {
        if sizes.len() < 3 {
            return Err(Error::invalid(
                "layers",
                "need inputs, at least one hidden layer and outputs",
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::invalid("layers", "layer sizes must be positive"));
        }
        if labels.is_empty() {
            return Err(Error::invalid("labels", "shard must be non-empty"));
        }
        let inputs = sizes[0];
        if features.len() != inputs * labels.len() {
            return Err(Error::Dimension {
                expected: inputs * labels.len(),
                found: features.len(),
            });
        }
        let classes = *sizes.last().unwrap();
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::invalid(
                "labels",
                alloc::format!("label {bad} out of range for {classes} outputs"),
            ));
        }
        if !(l2_weight >= 0.0) {
            return Err(Error::invalid("l2_weight", "must be non-negative"));
        }
        Ok(Self {
            sizes,
            activation,
            features,
            labels,
            l2_weight,
            loss_scale: 1.0,
        })
    }

    /// Multiplies the batch loss (and therefore the gradient) by `scale`.
    pub fn with_loss_scale(mut self, scale: f64) -> Self {
        self.loss_scale = scale;
        self
    }

    pub fn parameter_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    /// Offset of the output-layer biases inside the flat layout.
    pub fn output_bias_offset(&self) -> usize {
        let n = self.sizes.len();
        Self::parameter_count(&self.sizes) - self.sizes[n - 1]
    }

    fn sample(&self, i: usize) -> &[f64] {
        let d = self.sizes[0];
        &self.features[i * d..(i + 1) * d]
    }

    /// Forward pass returning pre-activations and activations of every layer
    /// (activations[0] is the input; the last entry holds the logits).
    fn forward(&self, params: &[f64], input: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let layers = self.sizes.len() - 1;
        let mut pre = Vec::with_capacity(layers);
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let prev = &acts[l];
            let z: Vec<f64> = (0..fan_out)
                .map(|r| dot(&weights[r * fan_in..(r + 1) * fan_in], prev) + bias[r])
                .collect();
            let a = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            acts.push(a);
        }
        (pre, acts)
    }
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    logits.iter().map(|&z| z - lse).collect()
}

impl GradientOracle for MlpObjective {
    fn dim(&self) -> usize {
        Self::parameter_count(&self.sizes)
    }

    fn num_samples(&self) -> usize {
        self.labels.len()
    }

    fn eval(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        check_eval_inputs(self.dim(), self.num_samples(), params, batch)?;
        let p = params.as_slice();
        let layers = self.sizes.len() - 1;
        let mut grad = vec![0.0; p.len()];
        let mut loss = 0.0;

        // Start offset of each layer's block.
        let mut offsets = Vec::with_capacity(layers);
        let mut acc = 0;
        for l in 0..layers {
            offsets.push(acc);
            acc += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }

        for &i in batch {
            let (pre, acts) = self.forward(p, self.sample(i));
            let log_probs = log_softmax(&acts[layers]);
            let label = self.labels[i];
            loss -= log_probs[label];

            let mut delta: Vec<f64> = log_probs.iter().map(|&lp| libm::exp(lp)).collect();
            delta[label] -= 1.0;

            for l in (0..layers).rev() {
                let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
                let base = offsets[l];
                let prev = &acts[l];
                for r in 0..fan_out {
                    let row = &mut grad[base + r * fan_in..base + (r + 1) * fan_in];
                    for (g, a) in row.iter_mut().zip(prev) {
                        *g += delta[r] * a;
                    }
                    grad[base + fan_in * fan_out + r] += delta[r];
                }
                if l > 0 {
                    let weights = &p[base..base + fan_in * fan_out];
                    let mut back = vec![0.0; fan_in];
                    for r in 0..fan_out {
                        let w_row = &weights[r * fan_in..(r + 1) * fan_in];
                        for (b, w) in back.iter_mut().zip(w_row) {
                            *b += w * delta[r];
                        }
                    }
                    for (j, b) in back.iter_mut().enumerate() {
                        *b *= self.activation.derivative(pre[l - 1][j], acts[l][j]);
                    }
                    delta = back;
                }
            }
        }

        let scale = self.loss_scale / batch.len() as f64;
        loss = loss * scale + self.loss_scale * 0.5 * self.l2_weight * dot(p, p);
        for (g, w) in grad.iter_mut().zip(p) {
            *g = *g * scale + self.loss_scale * self.l2_weight * w;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        Ok((loss, finish_grad(grad)?))
    }

    fn correct_count(&self, params: &ParamVector) -> Option<usize> {
        let layers = self.sizes.len() - 1;
        Some(
            (0..self.num_samples())
                .filter(|&i| {
                    let (_, acts) = self.forward(params.as_slice(), self.sample(i));
                    let logits = &acts[layers];
                    let best = (0..logits.len()).fold(0, |b, k| if logits[k] > logits[b] { k } else { b });
                    best == self.labels[i]
                })
                .count(),
        )
    }
}
