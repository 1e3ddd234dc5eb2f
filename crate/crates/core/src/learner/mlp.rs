//! Fully connected classifier with softmax cross-entropy loss.
//!
//! Parameters are packed layer by layer: the weight matrix of layer `l` is
//! stored input-major (`fan_in × fan_out`, row `j` holds the outgoing weights
//! of input unit `j`), followed by its bias vector. Input-major storage lets
//! the forward and backward passes skip zero inputs, which is most of an
//! MNIST image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::vector::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Layer widths including input and output, e.g. `[784, 64, 10]`.
    pub layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = MlpSpec { layers, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::invalid("layers", "need at least input and output widths"));
        }
        if self.layers.contains(&0) {
            return Err(Error::invalid("layers", "layer widths must be >= 1"));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layers
            .windows(2)
            .map(|w| {
                let weights = off;
                let bias = off + w[0] * w[1];
                off = bias + w[1];
                (weights, bias)
            })
            .collect()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, rng: &RngSpec) -> ParamVector {
        let mut gen = rng.rng();
        let mut params = vec![0.0; self.param_count()];
        for (w, (wo, _)) in self.layers.windows(2).zip(self.offsets()) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for v in &mut params[wo..wo + w[0] * w[1]] {
                *v = gen.gen_range(-limit..limit);
            }
        }
        ParamVector::new(params)
    }

    fn forward(&self, params: &[f64], offsets: &[(usize, usize)], acts: &mut [Vec<f64>]) {
        let n_layers = self.layers.len() - 1;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let (wo, bo) = offsets[l];
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.copy_from_slice(&params[bo..bo + fan_out]);
            for (j, &a) in input.iter().enumerate().take(fan_in) {
                if a == 0.0 {
                    continue;
                }
                let row = &params[wo + j * fan_out..wo + (j + 1) * fan_out];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += a * w;
                }
            }
            if l + 1 < n_layers {
                for o in out.iter_mut() {
                    *o = self.activation.apply(*o);
                }
            }
        }
    }

    /// Mean softmax cross-entropy and its gradient over `indices`.
    pub fn loss_and_grad(
        &self,
        params: &ParamVector,
        data: &LabeledDataset,
        indices: &[usize],
    ) -> Result<(f64, ParamVector)> {
        self.check_shapes(params, data)?;
        let offsets = self.offsets();
        let p = params.as_slice();
        let mut grad = vec![0.0; p.len()];
        let mut acts: Vec<Vec<f64>> = self.layers.iter().map(|&w| vec![0.0; w]).collect();
        let mut deltas: Vec<Vec<f64>> = self.layers.iter().map(|&w| vec![0.0; w]).collect();
        let n_layers = self.layers.len() - 1;
        let mut total_loss = 0.0;

        for &i in indices {
            data.row_into(i, &mut acts[0]);
            self.forward(p, &offsets, &mut acts);
            let y = data.label(i);
            let logits = &acts[n_layers];
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            total_loss += log_z - logits[y];
            for (d, z) in deltas[n_layers].iter_mut().zip(logits) {
                *d = (z - log_z).exp();
            }
            deltas[n_layers][y] -= 1.0;

            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
                let (wo, bo) = offsets[l];
                let (d_prev, d_next) = deltas.split_at_mut(l + 1);
                let delta = &d_next[0];
                for (g, d) in grad[bo..bo + fan_out].iter_mut().zip(delta) {
                    *g += d;
                }
                let input = &acts[l];
                for j in 0..fan_in {
                    let a = input[j];
                    if a == 0.0 && l == 0 {
                        continue;
                    }
                    let base = wo + j * fan_out;
                    if a != 0.0 {
                        for (g, d) in grad[base..base + fan_out].iter_mut().zip(delta) {
                            *g += a * d;
                        }
                    }
                    if l > 0 {
                        let row = &p[base..base + fan_out];
                        let back: f64 = row.iter().zip(delta).map(|(w, d)| w * d).sum();
                        d_prev[l][j] = back * self.activation.derivative_from_output(a);
                    }
                }
            }
        }

        let scale = 1.0 / indices.len().max(1) as f64;
        for g in &mut grad {
            *g *= scale;
        }
        let loss = total_loss * scale;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss {loss}")));
        }
        Ok((loss, ParamVector::new(grad)))
    }

    fn check_shapes(&self, params: &ParamVector, data: &LabeledDataset) -> Result<()> {
        if params.dim() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.dim(),
            });
        }
        if data.n_features() != self.layers[0] {
            return Err(Error::DimensionMismatch {
                expected: self.layers[0],
                got: data.n_features(),
            });
        }
        if data.n_classes() > *self.layers.last().unwrap() {
            return Err(Error::invalid(
                "layers",
                format!("output width below class count {}", data.n_classes()),
            ));
        }
        Ok(())
    }

    /// Accuracy (argmax, ties to the lowest class index) and mean loss.
    pub fn evaluate(&self, params: &ParamVector, data: &LabeledDataset) -> Result<(f64, f64)> {
        self.check_shapes(params, data)?;
        if data.is_empty() {
            return Err(Error::invalid("test_set", "empty"));
        }
        let offsets = self.offsets();
        let p = params.as_slice();
        let mut acts: Vec<Vec<f64>> = self.layers.iter().map(|&w| vec![0.0; w]).collect();
        let n_layers = self.layers.len() - 1;
        let mut correct = 0usize;
        let mut total_loss = 0.0;
        for i in 0..data.len() {
            data.row_into(i, &mut acts[0]);
            self.forward(p, &offsets, &mut acts);
            let logits = &acts[n_layers];
            let mut best = 0;
            for (c, &z) in logits.iter().enumerate() {
                if z > logits[best] {
                    best = c;
                }
            }
            let y = data.label(i);
            correct += usize::from(best == y);
            let max = logits[best];
            let log_z = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            total_loss += log_z - logits[y];
        }
        let n = data.len() as f64;
        Ok((correct as f64 / n, total_loss / n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian_clusters;

    #[test]
    fn param_count_and_layout() {
        let spec = MlpSpec::new(vec![784, 64, 10], Activation::Relu).unwrap();
        assert_eq!(spec.param_count(), 784 * 64 + 64 + 64 * 10 + 10);
        assert_eq!(spec.offsets(), vec![(0, 50_176), (50_240, 50_880)]);
        assert!(MlpSpec::new(vec![3], Activation::Relu).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], Activation::Relu).is_err());
    }

    #[test]
    fn init_respects_glorot_limit() {
        let spec = MlpSpec::new(vec![10, 6, 4], Activation::Relu).unwrap();
        let w = spec.init_params(&RngSpec::new(3));
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(w.as_slice()[..60].iter().all(|v| v.abs() <= limit));
        assert!(w.as_slice()[60..66].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_predict_class_zero() {
        let ds = synth_gaussian_clusters(4, 3, 40, 1.0, &RngSpec::new(1)).unwrap();
        let spec = MlpSpec::new(vec![3, 5, 4], Activation::Relu).unwrap();
        let (acc, loss) = spec.evaluate(&ParamVector::zeros(spec.param_count()), &ds).unwrap();
        assert_eq!(acc, 0.25);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let ds = synth_gaussian_clusters(4, 3, 40, 1.0, &RngSpec::new(1)).unwrap();
        let spec = MlpSpec::new(vec![3, 5, 4], Activation::Relu).unwrap();
        assert!(spec.loss_and_grad(&ParamVector::zeros(3), &ds, &[0]).is_err());
        let wide = MlpSpec::new(vec![4, 4], Activation::Relu).unwrap();
        assert!(wide.evaluate(&ParamVector::zeros(wide.param_count()), &ds).is_err());
    }
}
