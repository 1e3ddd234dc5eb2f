use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{label, RngSpec};

/// Balanced Gaussian-cluster classification data. Class centers are drawn
/// from a standard normal per coordinate; each sample is its class center
/// plus isotropic noise with standard deviation `spread`. Sample `i` has
/// label `i mod n_classes`.
pub fn synth_gaussian_clusters(
    n_classes: usize,
    n_features: usize,
    n_samples: usize,
    spread: f64,
    rng: &RngSpec,
) -> Result<LabeledDataset> {
    if n_classes == 0 || n_features == 0 || n_samples == 0 {
        return Err(Error::invalid("synthetic", "all counts must be positive"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid("spread", format!("must be >= 0, got {spread}")));
    }
    let mut center_rng = rng.derive(&[label::CENTERS]).rng();
    let centers: Vec<f64> = (0..n_classes * n_features)
        .map(|_| StandardNormal.sample(&mut center_rng))
        .collect();

    let mut noise_rng = rng.derive(&[label::DATA]).rng();
    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let c = i % n_classes;
        labels.push(c);
        let center = &centers[c * n_features..(c + 1) * n_features];
        for &mu in center {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            features.push(mu + spread * z);
        }
    }
    LabeledDataset::from_dense(features, labels, n_features, n_classes)
}

/// Random split into `(train, holdout)` with `holdout_fraction` of the rows
/// (rounded down) going to the holdout set.
pub fn split_holdout(
    ds: &LabeledDataset,
    holdout_fraction: f64,
    rng: &RngSpec,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..1.0).contains(&holdout_fraction) {
        return Err(Error::invalid(
            "holdout_fraction",
            format!("must be in [0, 1), got {holdout_fraction}"),
        ));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng.rng());
    let n_hold = (ds.len() as f64 * holdout_fraction).floor() as usize;
    let (hold, train) = idx.split_at(n_hold);
    Ok((ds.subset(train), ds.subset(hold)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_spread_hits_centers() {
        let ds = synth_gaussian_clusters(3, 4, 30, 0.0, &RngSpec::new(1)).unwrap();
        for i in 0..30 {
            assert_eq!(ds.row(i), ds.row(i % 3));
        }
        assert_ne!(ds.row(0), ds.row(1));
    }

    #[test]
    fn single_class() {
        let ds = synth_gaussian_clusters(1, 2, 17, 1.0, &RngSpec::new(1)).unwrap();
        assert!(ds.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn balanced_labels() {
        let ds = synth_gaussian_clusters(10, 2, 1000, 1.0, &RngSpec::new(3)).unwrap();
        assert_eq!(ds.label_histogram(&(0..1000).collect::<Vec<_>>()), vec![100; 10]);
    }

    #[test]
    fn nearest_center_oracle() {
        // Brute-force nearest-center classifier using the generating centers
        // (recovered from a zero-spread draw with the same seed).
        let spec = RngSpec::new(2024);
        let ds = synth_gaussian_clusters(10, 20, 10_000, 0.5, &spec).unwrap();
        let centers = synth_gaussian_clusters(10, 20, 10, 0.0, &spec).unwrap();
        let mut correct = 0;
        for i in 0..ds.len() {
            let x = ds.row(i);
            let best = (0..10)
                .min_by(|&a, &b| {
                    let da: f64 = centers.row(a).iter().zip(&x).map(|(c, v)| (c - v).powi(2)).sum();
                    let db: f64 = centers.row(b).iter().zip(&x).map(|(c, v)| (c - v).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            correct += usize::from(best == ds.label(i));
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc > 0.95, "nearest-center accuracy {acc}");
    }

    #[test]
    fn holdout_split_sizes() {
        let ds = synth_gaussian_clusters(2, 2, 101, 1.0, &RngSpec::new(3)).unwrap();
        let (train, test) = split_holdout(&ds, 0.2, &RngSpec::new(4)).unwrap();
        assert_eq!(test.len(), 20);
        assert_eq!(train.len(), 81);
        assert!(split_holdout(&ds, 1.0, &RngSpec::new(4)).is_err());
    }
}
