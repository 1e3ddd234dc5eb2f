//! Local training: T mini-batch SGD steps per round on each device.

mod mlp;

pub use mlp::{Activation, MlpSpec};

use rand::seq::index;
use rand::Rng;

use crate::data::{DevicePartition, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::types::HyperParams;
use crate::vector::ParamVector;

/// Quadratic surrogate `F_k(w) = ½‖w − c_k‖²`, one center per device. Its
/// gradient ignores the batch, which makes every divergence bound constant
/// computable in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub centers: Vec<ParamVector>,
}

impl QuadraticSpec {
    pub fn new(centers: Vec<ParamVector>) -> Result<Self> {
        let dim = centers
            .first()
            .ok_or_else(|| Error::invalid("centers", "need at least one device center"))?
            .dim();
        for c in &centers {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: c.dim(),
                });
            }
            if !c.is_finite() {
                return Err(Error::invalid("centers", "non-finite center"));
            }
        }
        Ok(QuadraticSpec { centers })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    fn center(&self, device: usize) -> Result<&ParamVector> {
        self.centers.get(device).ok_or_else(|| {
            Error::invalid(
                "device",
                format!("no quadratic center for device {device}"),
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Mlp(MlpSpec),
    Quadratic(QuadraticSpec),
}

impl ModelSpec {
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Mlp(m) => m.param_count(),
            ModelSpec::Quadratic(q) => q.dim(),
        }
    }

    pub fn needs_data(&self) -> bool {
        matches!(self, ModelSpec::Mlp(_))
    }

    pub fn init_params(&self, rng: &RngSpec) -> ParamVector {
        match self {
            ModelSpec::Mlp(m) => m.init_params(rng),
            ModelSpec::Quadratic(q) => ParamVector::zeros(q.dim()),
        }
    }
}

/// Sample indices of one mini-batch, all drawn from a single device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub device_id: usize,
    pub sample_indices: Vec<usize>,
}

/// Uniform mini-batch of `size` samples from a partition; without
/// replacement when the partition is large enough, with replacement
/// otherwise. Empty partitions yield an empty batch.
pub fn sample_batch<R: Rng>(part: &DevicePartition, size: usize, rng: &mut R) -> Batch {
    let n = part.len();
    let sample_indices = if n == 0 {
        Vec::new()
    } else if size <= n {
        index::sample(rng, n, size)
            .into_iter()
            .map(|i| part.sample_indices[i])
            .collect()
    } else {
        (0..size)
            .map(|_| part.sample_indices[rng.gen_range(0..n)])
            .collect()
    };
    Batch {
        device_id: part.device_id,
        sample_indices,
    }
}

pub fn loss_and_grad(
    model: &ModelSpec,
    w: &ParamVector,
    batch: &Batch,
    data: Option<&LabeledDataset>,
) -> Result<(f64, ParamVector)> {
    match model {
        ModelSpec::Mlp(m) => {
            let data = data.ok_or_else(|| Error::invalid("data", "MLP needs a dataset"))?;
            if batch.sample_indices.is_empty() {
                return Err(Error::invalid("batch", "empty batch"));
            }
            m.loss_and_grad(w, data, &batch.sample_indices)
        }
        ModelSpec::Quadratic(q) => {
            let c = q.center(batch.device_id)?;
            c.check_dim(w)?;
            let grad: Vec<f64> = w.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a - b).collect();
            let loss = 0.5 * grad.iter().map(|g| g * g).sum::<f64>();
            if !loss.is_finite() {
                return Err(Error::Divergence(format!("non-finite loss {loss}")));
            }
            Ok((loss, ParamVector::new(grad)))
        }
    }
}

/// Result of a local update with the largest squared gradient and parameter
/// norms seen along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrace {
    pub params: ParamVector,
    pub max_grad_sq: f64,
    pub max_param_sq: f64,
}

pub fn local_update(
    model: &ModelSpec,
    w_init: &ParamVector,
    part: &DevicePartition,
    data: Option<&LabeledDataset>,
    hp: &HyperParams,
    rng: &RngSpec,
) -> Result<ParamVector> {
    local_update_traced(model, w_init, part, data, hp, rng).map(|t| t.params)
}

pub fn local_update_traced(
    model: &ModelSpec,
    w_init: &ParamVector,
    part: &DevicePartition,
    data: Option<&LabeledDataset>,
    hp: &HyperParams,
    rng: &RngSpec,
) -> Result<LocalTrace> {
    if !w_init.is_finite() {
        return Err(Error::Divergence("non-finite initial parameters".into()));
    }
    if w_init.dim() != model.param_count() {
        return Err(Error::DimensionMismatch {
            expected: model.param_count(),
            got: w_init.dim(),
        });
    }
    let mut gen = rng.rng();
    let mut w = w_init.clone();
    let mut max_grad_sq: f64 = 0.0;
    let mut max_param_sq = w.sq_norm();
    for step in 0..hp.local_epochs {
        let batch = sample_batch(part, hp.batch_size, &mut gen);
        let (_, grad) = loss_and_grad(model, &w, &batch, data)?;
        max_grad_sq = max_grad_sq.max(grad.sq_norm());
        w.axpy_in_place(-hp.learning_rate, &grad)?;
        if !w.is_finite() {
            return Err(Error::Divergence(format!(
                "device {} produced non-finite parameters at local step {step}",
                part.device_id
            )));
        }
        max_param_sq = max_param_sq.max(w.sq_norm());
    }
    Ok(LocalTrace {
        params: w,
        max_grad_sq,
        max_param_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    /// Absent for the quadratic surrogate, which has no labels.
    pub accuracy: Option<f64>,
    pub mean_loss: f64,
}

/// Test-set accuracy and loss. The quadratic surrogate reports the global
/// objective `(1/K)·Σ_k ½‖w − c_k‖²` instead.
pub fn evaluate(
    model: &ModelSpec,
    w: &ParamVector,
    test_set: Option<&LabeledDataset>,
) -> Result<Evaluation> {
    match model {
        ModelSpec::Mlp(m) => {
            let test = test_set.ok_or_else(|| Error::invalid("test_set", "MLP needs a test set"))?;
            let (accuracy, mean_loss) = m.evaluate(w, test)?;
            Ok(Evaluation {
                accuracy: Some(accuracy),
                mean_loss,
            })
        }
        ModelSpec::Quadratic(q) => {
            let mut total = 0.0;
            for c in &q.centers {
                total += 0.5 * w.sq_distance(c)?;
            }
            Ok(Evaluation {
                accuracy: None,
                mean_loss: total / q.centers.len() as f64,
            })
        }
    }
}
