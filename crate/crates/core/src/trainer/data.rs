//! In-memory datasets and deterministic batch selection.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::depth_target_transform;
use crate::scenegen::{load_manifest, read_sample, Sample};
use crate::tensor::Tensor;

/// Samples held in memory in compact form; batches are expanded to `f64`
/// on demand.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub height: usize,
    pub width: usize,
    pub ids: Vec<usize>,
    images: Vec<f32>,
    depth_m: Vec<f32>,
    mask: Vec<u8>,
    time_min: Vec<f64>,
    weather: Vec<u8>,
}

/// One training or evaluation batch.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B,H,W,3]`
    pub input: Tensor,
    /// `[B,H,W]` depth targets in `r`-space.
    pub depth_r: Tensor,
    pub mask: Vec<usize>,
    pub time_min: Vec<f64>,
    pub weather: Vec<usize>,
}

impl Dataset {
    /// Loads the samples of `dir` whose manifest id is in `ids`, or all of
    /// them when `ids` is `None`.
    pub fn load(dir: &Path, ids: Option<&[usize]>) -> Result<Dataset> {
        let manifest = load_manifest(dir)?;
        let entries: Vec<_> = match ids {
            None => manifest.entries.iter().collect(),
            Some(ids) => {
                let by_id: HashMap<usize, _> = manifest.entries.iter().map(|e| (e.id, e)).collect();
                ids.iter()
                    .map(|id| {
                        by_id.get(id).copied().ok_or_else(|| {
                            Error::InvalidArgument(format!("sample id {id} not in manifest of {}", dir.display()))
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut data = Dataset::default();
        for e in entries {
            let sample = read_sample(&dir.join(&e.file))?;
            data.push(e.id, &sample)?;
        }
        if data.is_empty() {
            return Err(Error::InvalidArgument(format!("no samples selected from {}", dir.display())));
        }
        Ok(data)
    }

    pub fn from_samples(samples: &[Sample]) -> Result<Dataset> {
        let mut data = Dataset::default();
        for (i, s) in samples.iter().enumerate() {
            data.push(i, s)?;
        }
        Ok(data)
    }

    fn push(&mut self, id: usize, s: &Sample) -> Result<()> {
        if self.ids.is_empty() {
            self.height = s.height;
            self.width = s.width;
        } else if (s.height, s.width) != (self.height, self.width) {
            return Err(Error::InvalidArgument(format!(
                "sample {id} is {}x{}, dataset is {}x{}",
                s.height, s.width, self.height, self.width
            )));
        }
        self.ids.push(id);
        self.images.extend_from_slice(&s.image);
        self.depth_m.extend_from_slice(&s.depth_m);
        self.mask.extend_from_slice(&s.mask);
        self.time_min.push(s.time_min);
        self.weather.push(s.weather);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Gathers the samples at positions `idx` (not manifest ids).
    pub fn batch(&self, idx: &[usize]) -> Result<Batch> {
        let px = self.height * self.width;
        let mut input = Vec::with_capacity(idx.len() * px * 3);
        let mut depth = Vec::with_capacity(idx.len() * px);
        let mut mask = Vec::with_capacity(idx.len() * px);
        for &i in idx {
            input.extend(self.images[i * px * 3..(i + 1) * px * 3].iter().map(|&v| v as f64));
            for &d in &self.depth_m[i * px..(i + 1) * px] {
                depth.push(depth_target_transform(d as f64)?);
            }
            mask.extend(self.mask[i * px..(i + 1) * px].iter().map(|&m| m as usize));
        }
        let b = idx.len();
        Ok(Batch {
            input: Tensor::new(vec![b, self.height, self.width, 3], input)?,
            depth_r: Tensor::new(vec![b, self.height, self.width], depth)?,
            mask,
            time_min: idx.iter().map(|&i| self.time_min[i]).collect(),
            weather: idx.iter().map(|&i| self.weather[i] as usize).collect(),
        })
    }
}

/// Dataset positions used at `iteration` (1-based).
///
/// Iterations walk consecutive slices of one shuffled pass per epoch; the
/// shuffle of epoch `e` comes from its own random stream, so the result
/// depends only on the arguments.
pub fn batch_indices(seed: u64, iteration: usize, n: usize, batch_size: usize) -> Vec<usize> {
    assert!(n > 0 && batch_size > 0 && iteration > 0);
    let start = (iteration - 1) * batch_size;
    let mut out = Vec::with_capacity(batch_size);
    let mut cached: Option<(usize, Vec<usize>)> = None;
    for k in start..start + batch_size {
        let epoch = k / n;
        if cached.as_ref().map(|(e, _)| *e) != Some(epoch) {
            cached = Some((epoch, epoch_order(seed, epoch, n)));
        }
        out.push(cached.as_ref().unwrap().1[k % n]);
    }
    out
}

fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::{generate_sample, LabelDistribution};

    #[test]
    fn batches_cover_each_epoch_once() {
        let n = 10;
        let mut seen: Vec<usize> = (1..=5).flat_map(|i| batch_indices(3, i, n, 2)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn batch_order_is_pure() {
        for it in [1, 7, 50] {
            assert_eq!(batch_indices(9, it, 13, 4), batch_indices(9, it, 13, 4));
        }
        assert_ne!(
            (1..5).map(|i| batch_indices(1, i, 100, 4)).collect::<Vec<_>>(),
            (1..5).map(|i| batch_indices(2, i, 100, 4)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn batch_tensors_have_expected_shapes() {
        let dist = LabelDistribution::default();
        let samples: Vec<_> = (0..3).map(|i| generate_sample(1, i, &dist).unwrap()).collect();
        let data = Dataset::from_samples(&samples).unwrap();
        let b = data.batch(&[2, 0]).unwrap();
        assert_eq!(b.input.shape(), &[2, 48, 64, 3]);
        assert_eq!(b.depth_r.shape(), &[2, 48, 64]);
        assert_eq!(b.mask.len(), 2 * 48 * 64);
        assert_eq!(b.weather, vec![samples[2].weather as usize, samples[0].weather as usize]);
        assert_eq!(b.input.data()[0], samples[2].image[0] as f64);
        let r = depth_target_transform(samples[2].depth_m[5] as f64).unwrap();
        assert_eq!(b.depth_r.data()[5], r);
    }
}
