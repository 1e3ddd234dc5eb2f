//! Choice of the number of participating devices.
//!
//! With a fixed bandwidth and delay budget, each extra participant shrinks
//! every device's share of the band and raises its outage probability. The
//! planner evaluates the divergence-bound objective for every `N` in `1..=K`
//! and keeps the smallest minimizer.

use crate::channel::{error_free_prob_rate, RATE_EXPONENT_LIMIT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationPlan {
    /// Objective for `N = 1..=K` (index `N − 1`).
    pub objective_values: Vec<f64>,
    pub best_n: usize,
    pub probs_at_best: Vec<f64>,
}

fn objective_terms(lambdas: &[f64], rho: f64, n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let exponent_scale = if rho * nf > RATE_EXPONENT_LIMIT {
        f64::INFINITY
    } else {
        (rho * nf * std::f64::consts::LN_2).exp_m1() / nf
    };
    let selection = if n == k {
        0.0
    } else {
        (k - n) as f64 / ((k - 1) as f64 * nf)
    };
    lambdas
        .iter()
        .map(|&lambda| {
            let x = if lambda == 0.0 { 0.0 } else { lambda * exponent_scale };
            selection * (-2.0 * x).exp() - (-x).exp()
        })
        .sum()
}

fn check_inputs(lambdas: &[f64], rho: f64, k: usize) -> Result<()> {
    if lambdas.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: lambdas.len(),
        });
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(Error::invalid("lambda", format!("must be >= 0, got {bad}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be > 0, got {rho}")));
    }
    Ok(())
}

/// `Σ_k [ (K−N)/((K−1)N)·e^{−2λ_k(2^{ρN}−1)/N} − e^{−λ_k(2^{ρN}−1)/N} ]`,
/// the part of the GoMORE divergence bound that depends on `N`.
pub fn activation_objective(lambdas: &[f64], rho: f64, n: usize, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::invalid("K", format!("objective needs K >= 2, got {k}")));
    }
    if n == 0 || n > k {
        return Err(Error::invalid("N", format!("need 1 <= N <= K, got {n}")));
    }
    check_inputs(lambdas, rho, k)?;
    Ok(objective_terms(lambdas, rho, n, k))
}

/// Exhaustive search over `N ∈ 1..=K`; ties go to the smaller `N`.
pub fn optimize_participation(lambdas: &[f64], rho: f64, k: usize) -> Result<ActivationPlan> {
    if k == 0 {
        return Err(Error::invalid("K", "need at least one device"));
    }
    check_inputs(lambdas, rho, k)?;
    let objective_values: Vec<f64> = (1..=k).map(|n| objective_terms(lambdas, rho, n, k)).collect();
    let mut best = 0;
    for (i, &v) in objective_values.iter().enumerate() {
        if v < objective_values[best] {
            best = i;
        }
    }
    let best_n = best + 1;
    let probs_at_best = lambdas
        .iter()
        .map(|&l| error_free_prob_rate(l, rho, best_n))
        .collect::<Result<_>>()?;
    Ok(ActivationPlan {
        objective_values,
        best_n,
        probs_at_best,
    })
}

/// The objective curve read as a prediction of the accuracy-versus-N curve:
/// its argmin is the predicted accuracy-maximizing participant count.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveShape {
    pub objective_values: Vec<f64>,
    pub predicted_best_n: usize,
    /// The optimum lies strictly between 1 and K.
    pub interior: bool,
}

impl CurveShape {
    /// Whether the predicted optimum is within `tolerance` devices of the
    /// best entry of `empirical` (pairs of `(N, accuracy)`).
    pub fn matches_empirical(&self, empirical: &[(usize, f64)], tolerance: usize) -> Option<bool> {
        let (best_n, _) = empirical
            .iter()
            .copied()
            .fold(None, |acc: Option<(usize, f64)>, (n, a)| match acc {
                Some((_, best)) if best >= a => acc,
                _ => Some((n, a)),
            })?;
        Some(best_n.abs_diff(self.predicted_best_n) <= tolerance)
    }
}

pub fn predict_accuracy_curve_shape(plan: &ActivationPlan) -> CurveShape {
    let k = plan.objective_values.len();
    CurveShape {
        objective_values: plan.objective_values.clone(),
        predicted_best_n: plan.best_n,
        interior: plan.best_n > 1 && plan.best_n < k,
    }
}
