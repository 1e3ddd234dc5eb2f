use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::RngSpec;

/// One device's slice of the training set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DevicePartition {
    pub device_id: usize,
    pub sample_indices: Vec<usize>,
    pub label_histogram: Vec<usize>,
}

impl DevicePartition {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }

    /// Partition with no samples, used by data-free model families.
    pub fn empty(device_id: usize) -> Self {
        DevicePartition {
            device_id,
            sample_indices: Vec::new(),
            label_histogram: Vec::new(),
        }
    }

    pub fn distinct_labels(&self) -> usize {
        self.label_histogram.iter().filter(|&&c| c > 0).count()
    }
}

fn build(ds: &LabeledDataset, chunks: Vec<Vec<usize>>) -> Vec<DevicePartition> {
    chunks
        .into_iter()
        .enumerate()
        .map(|(device_id, sample_indices)| DevicePartition {
            device_id,
            label_histogram: ds.label_histogram(&sample_indices),
            sample_indices,
        })
        .collect()
}

/// Random permutation cut into `k` equal slices; `n mod k` samples are
/// dropped so every device holds exactly `D = n / k` samples.
pub fn partition_iid(ds: &LabeledDataset, k: usize, rng: &RngSpec) -> Result<Vec<DevicePartition>> {
    if k == 0 || ds.len() < k {
        return Err(Error::invalid(
            "devices",
            format!("need 1 <= K <= n_samples, got K = {k}, n = {}", ds.len()),
        ));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut rng.rng());
    let d = ds.len() / k;
    let chunks = idx.chunks_exact(d).take(k).map(<[usize]>::to_vec).collect();
    Ok(build(ds, chunks))
}

/// Label-sorted shard partitioning. The samples are shuffled, the remainder
/// beyond a multiple of `k·shards_per_device` is dropped, the rest is sorted
/// by label and cut into contiguous shards, and each device receives
/// `shards_per_device` shards drawn without replacement.
pub fn partition_noniid_shards(
    ds: &LabeledDataset,
    k: usize,
    shards_per_device: usize,
    rng: &RngSpec,
) -> Result<Vec<DevicePartition>> {
    if k == 0 || shards_per_device == 0 {
        return Err(Error::invalid("shards", "K and shards_per_device must be positive"));
    }
    let n_shards = k * shards_per_device;
    let shard_size = ds.len() / n_shards;
    if shard_size == 0 {
        return Err(Error::invalid(
            "shards",
            format!(
                "{n_shards} shards do not fit into {} samples",
                ds.len()
            ),
        ));
    }
    let mut gen = rng.rng();
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    idx.shuffle(&mut gen);
    idx.truncate(n_shards * shard_size);
    idx.sort_by_key(|&i| (ds.label(i), i));

    let mut shard_order: Vec<usize> = (0..n_shards).collect();
    shard_order.shuffle(&mut gen);
    let chunks = shard_order
        .chunks_exact(shards_per_device)
        .map(|shards| {
            let mut samples: Vec<usize> = shards
                .iter()
                .flat_map(|&s| idx[s * shard_size..(s + 1) * shard_size].iter().copied())
                .collect();
            samples.sort_unstable();
            samples
        })
        .collect();
    Ok(build(ds, chunks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_gaussian_clusters;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn balanced(n_classes: usize, n: usize) -> LabeledDataset {
        synth_gaussian_clusters(n_classes, 2, n, 1.0, &RngSpec::new(0)).unwrap()
    }

    fn check_disjoint_equal(parts: &[DevicePartition], k: usize, n: usize) {
        assert_eq!(parts.len(), k);
        let d = parts[0].len();
        assert!(d >= 1);
        let mut seen = HashSet::new();
        for p in parts {
            assert_eq!(p.len(), d);
            for &i in &p.sample_indices {
                assert!(i < n);
                assert!(seen.insert(i), "sample {i} assigned twice");
            }
        }
        assert_eq!(seen.len(), k * d);
    }

    #[test]
    fn iid_single_device() {
        let ds = balanced(3, 10);
        let parts = partition_iid(&ds, 1, &RngSpec::new(1)).unwrap();
        assert_eq!(parts[0].len(), 10);
    }

    #[test]
    fn iid_one_sample_each() {
        let ds = balanced(3, 12);
        let parts = partition_iid(&ds, 12, &RngSpec::new(1)).unwrap();
        check_disjoint_equal(&parts, 12, 12);
        assert!(parts.iter().all(|p| p.len() == 1));
    }

    #[test]
    fn iid_too_many_devices() {
        assert!(partition_iid(&balanced(2, 4), 5, &RngSpec::new(1)).is_err());
    }

    #[test]
    fn iid_histograms_track_global_proportions() {
        let ds = balanced(10, 60_000);
        // 3000 samples per device: one class share has a standard deviation
        // of about 5.5% relative, so ±15% is a 2.7σ band and a few of the 200
        // cells may leave it; none should leave a 5σ band.
        for seed in 0..5 {
            let parts = partition_iid(&ds, 20, &RngSpec::new(seed)).unwrap();
            let mut outside = 0;
            for p in &parts {
                for &c in &p.label_histogram {
                    let rel = (c as f64 / p.len() as f64 - 0.1).abs() / 0.1;
                    assert!(rel <= 0.275, "relative deviation {rel}");
                    if rel > 0.15 {
                        outside += 1;
                    }
                }
            }
            assert!(outside <= 6, "{outside} of 200 class shares outside ±15%");
        }
    }

    #[test]
    fn shards_one_per_device_hold_at_most_two_labels() {
        let ds = balanced(10, 1000);
        let parts = partition_noniid_shards(&ds, 10, 1, &RngSpec::new(3)).unwrap();
        check_disjoint_equal(&parts, 10, 1000);
        assert!(parts.iter().all(|p| p.distinct_labels() <= 2));
    }

    #[test]
    fn shards_spanning_all_classes() {
        let ds = balanced(4, 400);
        let parts = partition_noniid_shards(&ds, 1, 4, &RngSpec::new(3)).unwrap();
        assert_eq!(parts[0].label_histogram, vec![100; 4]);
    }

    #[test]
    fn shards_twenty_devices_two_shards() {
        let ds = balanced(10, 8000);
        let parts = partition_noniid_shards(&ds, 20, 2, &RngSpec::new(11)).unwrap();
        check_disjoint_equal(&parts, 20, 8000);
        assert!(parts.iter().all(|p| p.distinct_labels() <= 4));
    }

    #[test]
    fn shards_indivisible() {
        assert!(partition_noniid_shards(&balanced(2, 10), 6, 2, &RngSpec::new(0)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn partitions_disjoint_equal_and_deterministic(
            n in 20usize..300, k in 1usize..10, spd in 1usize..3, seed in any::<u64>(), shards in any::<bool>()
        ) {
            let ds = balanced(5, n);
            let spec = RngSpec::new(seed);
            let run = || if shards {
                partition_noniid_shards(&ds, k, spd, &spec)
            } else {
                partition_iid(&ds, k, &spec)
            };
            let parts = run().unwrap();
            check_disjoint_equal(&parts, k, n);
            prop_assert_eq!(parts, run().unwrap());
        }
    }
}
