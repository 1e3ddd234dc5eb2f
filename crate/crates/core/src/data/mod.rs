//! Datasets and their split across devices.

mod idx;
mod partition;
mod synth;

pub use idx::{load_idx, load_idx_with, load_mnist_dir, MnistSplit};
pub use partition::{partition_iid, partition_noniid_shards, DevicePartition};
pub use synth::{split_holdout, synth_gaussian_clusters};

use crate::error::{Error, Result};

/// How feature values are held in memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    #[default]
    Dense,
    /// Raw bytes scaled by 1/255 on access. Only valid for byte-valued
    /// sources such as IDX images.
    Bytes,
}

#[derive(Debug, Clone, PartialEq)]
enum Features {
    Dense(Vec<f64>),
    Bytes(Vec<u8>),
}

/// Row-major feature matrix plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Features,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn from_dense(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                got: features.len(),
            });
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("features", "NaN feature value"));
        }
        Self::check_labels(&labels, n_classes)?;
        Ok(LabeledDataset {
            features: Features::Dense(features),
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn from_bytes(
        features: Vec<u8>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                got: features.len(),
            });
        }
        Self::check_labels(&labels, n_classes)?;
        Ok(LabeledDataset {
            features: Features::Bytes(features),
            labels,
            n_features,
            n_classes,
        })
    }

    fn check_labels(labels: &[usize], n_classes: usize) -> Result<()> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::invalid(
                "labels",
                format!("label {bad} outside [0, {n_classes})"),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn storage(&self) -> Storage {
        match self.features {
            Features::Dense(_) => Storage::Dense,
            Features::Bytes(_) => Storage::Bytes,
        }
    }

    /// Copies row `i` into `out`, scaling bytes to [0, 1] when needed.
    pub fn row_into(&self, i: usize, out: &mut [f64]) {
        let range = i * self.n_features..(i + 1) * self.n_features;
        match &self.features {
            Features::Dense(v) => out.copy_from_slice(&v[range]),
            Features::Bytes(v) => {
                for (o, &b) in out.iter_mut().zip(&v[range]) {
                    *o = f64::from(b) / 255.0;
                }
            }
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        self.row_into(i, &mut out);
        out
    }

    /// New dataset holding the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let nf = self.n_features;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let features = match &self.features {
            Features::Dense(v) => Features::Dense(
                indices
                    .iter()
                    .flat_map(|&i| v[i * nf..(i + 1) * nf].iter().copied())
                    .collect(),
            ),
            Features::Bytes(v) => Features::Bytes(
                indices
                    .iter()
                    .flat_map(|&i| v[i * nf..(i + 1) * nf].iter().copied())
                    .collect(),
            ),
        };
        LabeledDataset {
            features,
            labels,
            n_features: nf,
            n_classes: self.n_classes,
        }
    }

    pub fn label_histogram(&self, indices: &[usize]) -> Vec<usize> {
        let mut hist = vec![0; self.n_classes];
        for &i in indices {
            hist[self.labels[i]] += 1;
        }
        hist
    }
}
