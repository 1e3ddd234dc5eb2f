use rand::seq::SliceRandom;

use crate::aggregation::FlContext;
use crate::error::{Error, Result};
use crate::learner::{local_update_traced, ModelSpec, QuadraticSpec};
use crate::rng::{label, RngSpec};
use crate::vector::ParamVector;

pub const DEFAULT_SAFETY_FACTOR: f64 = 1.5;

/// Values for γ² (gradient bound) and G² (parameter bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedConstants {
    pub gamma_sq: f64,
    pub g_sq: f64,
    /// Closed form rather than probed.
    pub exact: bool,
    /// γ² = 0: nothing moves and every bound collapses to zero.
    pub degenerate: bool,
}

/// Exact constants for the quadratic family with `0 ≤ η ≤ 1`.
///
/// Each SGD step moves the iterate toward a center, and GoMORE and ideal
/// aggregation are convex combinations, so every iterate stays in the convex
/// hull of `w_start` and the centers. Both squared norms are convex, so
/// their suprema over the hull are attained at its vertices.
fn quadratic_constants(q: &QuadraticSpec, w_start: &ParamVector) -> Result<EstimatedConstants> {
    let vertices: Vec<&ParamVector> = std::iter::once(w_start).chain(q.centers.iter()).collect();
    let mut gamma_sq: f64 = 0.0;
    for c in &q.centers {
        for v in &vertices {
            gamma_sq = gamma_sq.max(v.sq_distance(c)?);
        }
    }
    let g_sq = vertices.iter().map(|v| v.sq_norm()).fold(0.0, f64::max);
    Ok(EstimatedConstants {
        gamma_sq,
        g_sq,
        exact: true,
        degenerate: gamma_sq == 0.0,
    })
}

/// Bound constants for the divergence analysis.
///
/// The quadratic family gets closed-form values when `η ≤ 1`. Otherwise
/// `n_probes` local trajectories start from `w_start`, visiting devices in
/// a shuffled order so that every device is probed once `n_probes ≥ K`. The
/// largest squared gradient and parameter norms seen are
/// multiplied by `safety_factor`.
pub fn estimate_constants(
    ctx: &FlContext<'_>,
    w_start: &ParamVector,
    n_probes: usize,
    safety_factor: f64,
    rng: &RngSpec,
) -> Result<EstimatedConstants> {
    if let ModelSpec::Quadratic(q) = ctx.model {
        if (0.0..=1.0).contains(&ctx.hp.learning_rate) {
            return quadratic_constants(q, w_start);
        }
    }
    if n_probes == 0 {
        return Err(Error::invalid("n_probes", "must be at least 1"));
    }
    if ctx.partitions.is_empty() {
        return Err(Error::invalid("partitions", "no devices to probe"));
    }
    let mut order: Vec<usize> = (0..ctx.partitions.len()).collect();
    order.shuffle(&mut rng.derive(&[label::PROBE]).rng());
    let mut gamma_sq: f64 = 0.0;
    let mut g_sq: f64 = 0.0;
    for i in 0..n_probes {
        let stream = rng.derive(&[label::PROBE, i as u64]);
        let device = order[i % order.len()];
        let trace = local_update_traced(
            ctx.model,
            w_start,
            &ctx.partitions[device],
            ctx.train,
            &ctx.hp,
            &stream.derive(&[1]),
        )?;
        gamma_sq = gamma_sq.max(trace.max_grad_sq);
        g_sq = g_sq.max(trace.max_param_sq);
    }
    Ok(EstimatedConstants {
        gamma_sq: safety_factor * gamma_sq,
        g_sq: safety_factor * g_sq,
        exact: false,
        degenerate: gamma_sq == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DevicePartition;
    use crate::types::HyperParams;

    fn ctx_for(model: &ModelSpec, parts: &[DevicePartition]) -> EstimatedConstants {
        let ctx = FlContext {
            model,
            partitions: parts,
            train: None,
            hp: HyperParams { learning_rate: 0.5, local_epochs: 3, batch_size: 1, rounds: 1 },
        };
        estimate_constants(&ctx, &ParamVector::zeros(model.param_count()), 1, 1.5, &RngSpec::new(0)).unwrap()
    }

    #[test]
    fn zero_centers_are_degenerate() {
        let model = ModelSpec::Quadratic(QuadraticSpec::new(vec![ParamVector::zeros(2); 3]).unwrap());
        let parts: Vec<_> = (0..3).map(DevicePartition::empty).collect();
        let c = ctx_for(&model, &parts);
        assert!(c.degenerate && c.exact);
        assert_eq!(c.gamma_sq, 0.0);
    }

    #[test]
    fn symmetric_scalar_centers() {
        // Iterates confined to [-1, 1]: sup |w − c|² = 4, sup |w|² = 1.
        let model = ModelSpec::Quadratic(
            QuadraticSpec::new(vec![ParamVector::new(vec![-1.0]), ParamVector::new(vec![1.0])]).unwrap(),
        );
        let parts: Vec<_> = (0..2).map(DevicePartition::empty).collect();
        let c = ctx_for(&model, &parts);
        assert_eq!(c.gamma_sq, 4.0);
        assert_eq!(c.g_sq, 1.0);
        assert!(!c.degenerate);
    }
}
