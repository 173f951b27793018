//! Spatially buffered train/test split over square world-position bins.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Manifest;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub bin_size_m: f64,
    pub n_test_bins: usize,
    pub buffer_m: f64,
    pub rng_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { bin_size_m: 65.0, n_test_bins: 100, buffer_m: 65.0, rng_seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bin_size_m.is_finite()
            && self.bin_size_m > 0.0
            && self.buffer_m.is_finite()
            && self.buffer_m > 0.0
            && self.n_test_bins > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("split parameters must be positive: {self:?}")))
        }
    }

    pub fn bin_of(&self, pos: [f64; 2]) -> (i64, i64) {
        ((pos[0] / self.bin_size_m).floor() as i64, (pos[1] / self.bin_size_m).floor() as i64)
    }

    /// Euclidean distance from `pos` to the closed square of `bin` (zero inside).
    pub fn distance_to_bin(&self, pos: [f64; 2], bin: (i64, i64)) -> f64 {
        let axis = |v: f64, k: i64| {
            let lo = k as f64 * self.bin_size_m;
            let hi = lo + self.bin_size_m;
            if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            }
        };
        axis(pos[0], bin.0).hypot(axis(pos[1], bin.1))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub buffer: Vec<usize>,
    pub test_bins: Vec<(i64, i64)>,
}

pub fn spatial_split(manifest: &Manifest, spec: &SplitSpec) -> Result<Split> {
    let points: Vec<(usize, [f64; 2])> = manifest.entries.iter().map(|e| (e.id, e.world_pos)).collect();
    split_positions(&points, spec)
}

/// Splits `(id, world_pos)` pairs. Ids are returned in input order.
pub fn split_positions(points: &[(usize, [f64; 2])], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    if let Some((id, _)) = points.iter().find(|(_, p)| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::InvalidArgument(format!("sample {id} has a non-finite world position")));
    }
    let mut occupied: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for (_, p) in points {
        *occupied.entry(spec.bin_of(*p)).or_default() += 1;
    }
    if occupied.len() < spec.n_test_bins {
        return Err(Error::InvalidArgument(format!(
            "only {} occupied bins, {} test bins requested",
            occupied.len(),
            spec.n_test_bins
        )));
    }
    let bins: Vec<(i64, i64)> = occupied.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut picked: Vec<usize> = sample(&mut rng, bins.len(), spec.n_test_bins).into_vec();
    picked.sort_unstable();
    let test_bins: BTreeSet<(i64, i64)> = picked.iter().map(|&i| bins[i]).collect();

    // Only bins this close (in bin units) can lie within the buffer.
    let reach = (spec.buffer_m / spec.bin_size_m).ceil() as i64 + 1;
    let mut split = Split { test_bins: test_bins.iter().copied().collect(), ..Split::default() };
    for &(id, p) in points {
        let (bi, bj) = spec.bin_of(p);
        if test_bins.contains(&(bi, bj)) {
            split.test.push(id);
            continue;
        }
        let near = (bi - reach..=bi + reach).any(|i| {
            (bj - reach..=bj + reach)
                .any(|j| test_bins.contains(&(i, j)) && spec.distance_to_bin(p, (i, j)) < spec.buffer_m)
        });
        if near {
            split.buffer.push(id);
        } else {
            split.train.push(id);
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(step: f64, n: usize) -> Vec<(usize, [f64; 2])> {
        (0..n * n).map(|k| (k, [(k / n) as f64 * step + 0.5, (k % n) as f64 * step + 0.5])).collect()
    }

    #[test]
    fn defaults_are_65_100_65() {
        let s = SplitSpec::default();
        assert_eq!((s.bin_size_m, s.n_test_bins, s.buffer_m), (65.0, 100, 65.0));
    }

    #[test]
    fn single_bin_goes_to_test() {
        let pts: Vec<_> = (0..20).map(|k| (k, [1.0 + k as f64, 2.0])).collect();
        let spec = SplitSpec { n_test_bins: 1, ..SplitSpec::default() };
        let s = split_positions(&pts, &spec).unwrap();
        assert!(s.train.is_empty() && s.buffer.is_empty());
        assert_eq!(s.test, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let pts = grid(10.0, 3);
        assert!(split_positions(&pts, &SplitSpec::default()).is_err());
    }

    #[test]
    fn grid_respects_buffer_by_brute_force() {
        let pts = grid(13.0, 60);
        let spec = SplitSpec { n_test_bins: 10, rng_seed: 3, ..SplitSpec::default() };
        let s = split_positions(&pts, &spec).unwrap();
        assert_eq!(s.train.len() + s.test.len() + s.buffer.len(), pts.len());
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).chain(&s.buffer).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..pts.len()).collect::<Vec<_>>());
        for &id in &s.train {
            let p = pts[id].1;
            for &b in &s.test_bins {
                let lo = [b.0 as f64 * 65.0, b.1 as f64 * 65.0];
                let dx = (lo[0] - p[0]).max(p[0] - lo[0] - 65.0).max(0.0);
                let dy = (lo[1] - p[1]).max(p[1] - lo[1] - 65.0).max(0.0);
                assert!((dx * dx + dy * dy).sqrt() >= 65.0, "train sample {id} too close to {b:?}");
            }
        }
        assert!(!s.buffer.is_empty() && !s.train.is_empty());
    }

    #[test]
    fn same_seed_same_split() {
        let pts = grid(20.0, 40);
        let spec = SplitSpec { n_test_bins: 5, rng_seed: 9, ..SplitSpec::default() };
        assert_eq!(split_positions(&pts, &spec).unwrap(), split_positions(&pts, &spec).unwrap());
    }

    #[test]
    fn non_positive_spec_rejected() {
        let pts = grid(20.0, 10);
        let spec = SplitSpec { buffer_m: 0.0, n_test_bins: 1, ..SplitSpec::default() };
        assert!(split_positions(&pts, &spec).is_err());
    }
}
