use crate::error::{Error, Result};

/// Constants entering the weight-divergence bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    /// Bound on the expected squared stochastic-gradient norm.
    pub gamma_sq: f64,
    /// Bound on the expected squared parameter norm.
    pub g_sq: f64,
    pub eta: f64,
    pub local_epochs: usize,
    pub k: usize,
    pub n: usize,
    /// Error-free probability of every device, length `k`.
    pub probs: Vec<f64>,
}

impl BoundConstants {
    /// `η ≤ G/(T·γ)`, under which reuse provably beats discarding.
    pub fn small_learning_rate(&self) -> bool {
        self.eta * self.local_epochs as f64 * self.gamma_sq.sqrt() <= self.g_sq.sqrt()
    }

    /// `η²·T²·γ²`, the squared one-round displacement budget of a device.
    pub fn step_budget(&self) -> f64 {
        let t = self.local_epochs as f64;
        self.eta * self.eta * t * t * self.gamma_sq
    }

    /// `(K − N) / (N·(K − 1))`, the variance factor of sampling without
    /// replacement.
    fn selection_factor(&self) -> f64 {
        let (k, n) = (self.k as f64, self.n as f64);
        (k - n) / (n * (k - 1.0))
    }

    fn validate(&self, allow_zero_prob: bool) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid("K", format!("bounds need K >= 2, got {}", self.k)));
        }
        if self.n == 0 || self.n > self.k {
            return Err(Error::invalid(
                "N",
                format!("need 1 <= N <= K, got N = {}, K = {}", self.n, self.k),
            ));
        }
        if self.probs.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: self.probs.len(),
            });
        }
        for (device, &p) in self.probs.iter().enumerate() {
            let ok = if allow_zero_prob {
                (0.0..=1.0).contains(&p)
            } else {
                p > 0.0 && p <= 1.0
            };
            if !ok {
                return Err(Error::ProbabilityOutOfRange { device, value: p });
            }
        }
        if !(self.gamma_sq >= 0.0 && self.g_sq >= 0.0 && self.eta >= 0.0) {
            return Err(Error::invalid("constants", "γ², G² and η must be non-negative"));
        }
        Ok(())
    }
}

/// Upper bound on the one-round weight divergence of global model reuse:
/// `Σ_k (η²T²γ²/K)·(s·p_k² − p_k + 1)` with `s = (K−N)/(N(K−1))`.
pub fn zeta_bound_gomore(c: &BoundConstants) -> Result<f64> {
    c.validate(true)?;
    let s = c.selection_factor();
    let scale = c.step_budget() / c.k as f64;
    Ok(c.probs.iter().map(|&p| scale * (s * p * p - p + 1.0)).sum())
}

/// Upper bound on the one-round weight divergence of direct discarding:
/// `Σ_k (η²T²γ²·s/K + (1 − p_k)/(K·p_k)·G²)`. Any `p_k = 0` is rejected,
/// as the bound is infinite there.
pub fn zeta_bound_dds(c: &BoundConstants) -> Result<f64> {
    c.validate(false)?;
    let k = c.k as f64;
    let selection = c.step_budget() * c.selection_factor() / k;
    Ok(c
        .probs
        .iter()
        .map(|&p| selection + (1.0 - p) / (k * p) * c.g_sq)
        .sum())
}

/// Lower bound on `zeta_bound_dds − zeta_bound_gomore`, valid when
/// `η ≤ G/(T·γ)`:
/// `Σ_k (η²T²γ²/K)·(s·(1 − p_k²) + (1 − p_k)²/p_k)`.
pub fn theorem_gap_lower(c: &BoundConstants) -> Result<f64> {
    c.validate(false)?;
    if !c.small_learning_rate() {
        return Err(Error::Precondition(format!(
            "learning rate {} exceeds G/(T·γ) = {}",
            c.eta,
            c.g_sq.sqrt() / (c.local_epochs as f64 * c.gamma_sq.sqrt())
        )));
    }
    let s = c.selection_factor();
    let scale = c.step_budget() / c.k as f64;
    Ok(c
        .probs
        .iter()
        .map(|&p| scale * (s * (1.0 - p * p) + (1.0 - p) * (1.0 - p) / p))
        .sum())
}
