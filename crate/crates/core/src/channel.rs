//! Uplink channel model.
//!
//! Under Rayleigh fading with a fixed transmission rate the outage event of a
//! device is fully described by its error-free probability `p_k`, so the
//! simulator never samples fading coefficients. It draws one Bernoulli event
//! per selected device and round.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngSpec;
use crate::types::SelectionSet;

/// Beyond this value of `ρ·N` the success probability underflows to zero.
pub const RATE_EXPONENT_LIMIT: f64 = 1000.0;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) / 1000.0
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Radio constants shared by all devices, in SI units and linear scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioConstants {
    pub transmit_power_w: f64,
    pub bandwidth_hz: f64,
    pub noise_density_w_per_hz: f64,
    /// Linear power gain at the reference distance (|h0|²).
    pub ref_gain: f64,
    pub pathloss_exp: f64,
    /// Fixed SNR threshold θ. `None` means the threshold follows from the
    /// payload size and delay budget.
    pub snr_threshold: Option<f64>,
    pub payload_bits: f64,
    pub delay_s: f64,
}

impl Default for RadioConstants {
    fn default() -> Self {
        RadioConstants {
            transmit_power_w: 0.1,
            bandwidth_hz: 1e6,
            noise_density_w_per_hz: dbm_to_watts(-174.0),
            ref_gain: db_to_linear(-30.0),
            pathloss_exp: 2.2,
            snr_threshold: None,
            payload_bits: 1_628_480.0,
            delay_s: 1.6,
        }
    }
}

impl RadioConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("transmit_power", self.transmit_power_w),
            ("bandwidth", self.bandwidth_hz),
            ("noise_density", self.noise_density_w_per_hz),
            ("ref_gain", self.ref_gain),
            ("pathloss_exponent", self.pathloss_exp),
            ("payload_bits", self.payload_bits),
            ("delay", self.delay_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if let Some(theta) = self.snr_threshold {
            if !(theta.is_finite() && theta >= 0.0) {
                return Err(Error::invalid(
                    "snr_threshold",
                    format!("must be non-negative, got {theta}"),
                ));
            }
        }
        Ok(())
    }

    /// Spectral-efficiency budget ρ = d / (B·τ).
    pub fn rho(&self) -> f64 {
        self.payload_bits / (self.bandwidth_hz * self.delay_s)
    }

    pub fn rate(&self) -> RateParams {
        RateParams { rho: self.rho() }
    }

    /// λ_k = B·N0 / (2·P·|h0|²·d_k^{-α}).
    pub fn lambda_for_distance(&self, distance_m: f64) -> f64 {
        self.bandwidth_hz * self.noise_density_w_per_hz * distance_m.powf(self.pathloss_exp)
            / (2.0 * self.transmit_power_w * self.ref_gain)
    }
}

/// Per-device path statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceLink {
    pub distance_m: Option<f64>,
    pub lambda: f64,
}

impl DeviceLink {
    pub fn at_distance(distance_m: f64, radio: &RadioConstants) -> Result<Self> {
        if !(distance_m.is_finite() && distance_m > 0.0) {
            return Err(Error::invalid(
                "distance",
                format!("must be positive, got {distance_m}"),
            ));
        }
        Ok(DeviceLink {
            distance_m: Some(distance_m),
            lambda: radio.lambda_for_distance(distance_m),
        })
    }

    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be non-negative, got {lambda}"),
            ));
        }
        Ok(DeviceLink {
            distance_m: None,
            lambda,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub rho: f64,
}

/// Error-free probability for a fixed SNR threshold θ with the band split
/// equally among `n_active` devices.
pub fn error_free_prob_direct(
    radio: &RadioConstants,
    link: &DeviceLink,
    n_active: usize,
    theta: f64,
) -> Result<f64> {
    if !(radio.bandwidth_hz > 0.0) {
        return Err(Error::invalid("bandwidth", "must be positive"));
    }
    if !(radio.transmit_power_w > 0.0) {
        return Err(Error::invalid("transmit_power", "must be positive"));
    }
    if n_active == 0 {
        return Err(Error::invalid("n_active", "must be at least 1"));
    }
    if !(theta >= 0.0) {
        return Err(Error::invalid("snr_threshold", format!("must be >= 0, got {theta}")));
    }
    if theta == 0.0 {
        return Ok(1.0);
    }
    let exponent = match link.distance_m {
        Some(d) => {
            radio.bandwidth_hz * radio.noise_density_w_per_hz * theta
                / (2.0
                    * n_active as f64
                    * radio.transmit_power_w
                    * radio.ref_gain
                    * d.powf(-radio.pathloss_exp))
        }
        None => link.lambda * theta / n_active as f64,
    };
    Ok((-exponent).exp())
}

/// Error-free probability under a rate budget:
/// `p_k = exp(-λ_k·(2^{ρN} − 1)/N)`.
pub fn error_free_prob_rate(lambda: f64, rho: f64, n_active: usize) -> Result<f64> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("lambda", format!("must be >= 0, got {lambda}")));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::invalid("rho", format!("must be > 0, got {rho}")));
    }
    if n_active == 0 {
        return Err(Error::invalid("n_active", "must be at least 1"));
    }
    let n = n_active as f64;
    if rho * n > RATE_EXPONENT_LIMIT {
        return Ok(0.0);
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    let threshold = (rho * n * std::f64::consts::LN_2).exp_m1();
    Ok((-lambda * threshold / n).exp())
}

/// SNR threshold implied by a rate budget: θ = 2^{ρN} − 1.
pub fn rate_threshold(rho: f64, n_active: usize) -> f64 {
    (rho * n_active as f64 * std::f64::consts::LN_2).exp_m1()
}

/// Per-device error-free probabilities for all links at `n_active`
/// participants, using the fixed threshold when one is configured and the
/// rate budget otherwise.
pub fn link_probabilities(
    radio: &RadioConstants,
    links: &[DeviceLink],
    n_active: usize,
) -> Result<Vec<f64>> {
    links
        .iter()
        .map(|link| match radio.snr_threshold {
            Some(theta) => error_free_prob_direct(radio, link, n_active, theta),
            None => error_free_prob_rate(link.lambda, radio.rho(), n_active),
        })
        .collect()
}

/// Draws one reception event per selected device. `probs[i]` belongs to
/// `selected.ids()[i]`. The returned map is keyed by device id; `true` means
/// the upload arrived error-free.
pub fn sample_error_events(
    probs: &[f64],
    selected: &SelectionSet,
    rng: &RngSpec,
) -> Result<BTreeMap<usize, bool>> {
    if probs.len() != selected.len() {
        return Err(Error::DimensionMismatch {
            expected: selected.len(),
            got: probs.len(),
        });
    }
    for (&id, &p) in selected.ids().iter().zip(probs) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange { device: id, value: p });
        }
    }
    let mut gen = rng.rng();
    Ok(selected
        .ids()
        .iter()
        .zip(probs)
        .map(|(&id, &p)| (id, gen.gen::<f64>() < p))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_zero_threshold_is_certain() {
        let radio = RadioConstants::default();
        let link = DeviceLink::at_distance(300.0, &radio).unwrap();
        assert_eq!(error_free_prob_direct(&radio, &link, 5, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn direct_unit_exponent() {
        // λ·θ/N = 1  ⇒  p = e^{-1}
        let link = DeviceLink::from_lambda(2.0).unwrap();
        let p = error_free_prob_direct(&RadioConstants::default(), &link, 4, 2.0).unwrap();
        assert!((p - 0.367_879_441_171_442_3).abs() < 1e-15);
    }

    #[test]
    fn direct_decreases_in_threshold() {
        let radio = RadioConstants::default();
        let link = DeviceLink::at_distance(400.0, &radio).unwrap();
        let mut prev = 1.0;
        for i in 1..60 {
            let theta = 10f64.powf(i as f64 / 4.0);
            let p = error_free_prob_direct(&radio, &link, 3, theta).unwrap();
            assert!(p < prev || p == 0.0);
            prev = p;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn direct_rejects_bad_radio() {
        let mut radio = RadioConstants::default();
        radio.bandwidth_hz = 0.0;
        let link = DeviceLink::from_lambda(1.0).unwrap();
        assert!(error_free_prob_direct(&radio, &link, 1, 1.0).is_err());
        radio = RadioConstants::default();
        radio.transmit_power_w = -1.0;
        assert!(error_free_prob_direct(&radio, &link, 1, 1.0).is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(error_free_prob_rate(0.0, 3.0, 7).unwrap(), 1.0);
        let p = error_free_prob_rate(1.0, 1.0, 1).unwrap();
        assert!((p - 0.367_879_4).abs() < 1e-7);
        let p = error_free_prob_rate(0.1, 0.5, 4).unwrap();
        assert!((p - 0.927_743_5).abs() < 1e-7);
    }

    #[test]
    fn rate_overflow_guard() {
        assert_eq!(error_free_prob_rate(1e-9, 100.0, 11).unwrap(), 0.0);
        assert!(error_free_prob_rate(-1.0, 1.0, 1).is_err());
        assert!(error_free_prob_rate(1.0, 0.0, 1).is_err());
        assert!(error_free_prob_rate(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn lambda_matches_radio_constants() {
        let radio = RadioConstants::default();
        let d: f64 = 250.0;
        let link = DeviceLink::at_distance(d, &radio).unwrap();
        let expected = radio.bandwidth_hz * radio.noise_density_w_per_hz
            / (2.0 * radio.transmit_power_w * radio.ref_gain * d.powf(-radio.pathloss_exp));
        assert!(((link.lambda - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn events_degenerate_probabilities() {
        let sel = SelectionSet::new(vec![0, 2, 5], 6).unwrap();
        let spec = RngSpec::new(1);
        let all = sample_error_events(&[1.0; 3], &sel, &spec).unwrap();
        assert!(all.values().all(|&ok| ok));
        assert_eq!(all.keys().copied().collect::<Vec<_>>(), vec![0, 2, 5]);
        let none = sample_error_events(&[0.0; 3], &sel, &spec).unwrap();
        assert!(none.values().all(|&ok| !ok));
    }

    #[test]
    fn events_reject_bad_probability() {
        let sel = SelectionSet::all(2);
        let err = sample_error_events(&[0.5, 1.5], &sel, &RngSpec::new(0)).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { device: 1, .. }));
    }

    #[test]
    fn events_empirical_rate() {
        let sel = SelectionSet::all(1);
        let root = RngSpec::new(99);
        let n = 100_000;
        let hits = (0..n)
            .filter(|&i| sample_error_events(&[0.5], &sel, &root.derive(&[i]))
                .unwrap()[&0])
            .count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.005, "rate {rate}");
    }

    #[test]
    fn events_reproducible() {
        let sel = SelectionSet::all(50);
        let probs = vec![0.4; 50];
        let spec = RngSpec::new(5).derive(&[1, 2]);
        assert_eq!(
            sample_error_events(&probs, &sel, &spec).unwrap(),
            sample_error_events(&probs, &sel, &spec).unwrap()
        );
    }
}
