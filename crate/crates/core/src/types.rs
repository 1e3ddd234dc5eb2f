use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Local-training hyperparameters. One "local epoch" is a single mini-batch
/// step, so a round performs `local_epochs` SGD steps per device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub rounds: usize,
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(
                "learning_rate",
                format!("must be finite and non-negative, got {}", self.learning_rate),
            ));
        }
        if self.local_epochs == 0 {
            return Err(Error::invalid("local_epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be at least 1"));
        }
        Ok(())
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.001,
            local_epochs: 10,
            batch_size: 50,
            rounds: 100,
        }
    }
}

/// Devices chosen for one round, stored in ascending id order so that
/// aggregation sums run in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SelectionSet {
    ids: Vec<usize>,
}

impl SelectionSet {
    pub fn new(mut ids: Vec<usize>, num_devices: usize) -> Result<Self> {
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("selection", "duplicate device id"));
        }
        if let Some(&max) = ids.last() {
            if max >= num_devices {
                return Err(Error::invalid(
                    "selection",
                    format!("device id {max} out of range for K = {num_devices}"),
                ));
            }
        }
        Ok(SelectionSet { ids })
    }

    pub fn all(num_devices: usize) -> Self {
        SelectionSet {
            ids: (0..num_devices).collect(),
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.ids.binary_search(&id).is_ok()
    }
}
