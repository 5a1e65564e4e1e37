use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::images::{ImageSet, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::numerics::{standard_normal, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompositionalOptions {
    /// Fraction of ordered class combinations reserved for the test split.
    /// `None` draws train and test inputs from the same combinations.
    pub ood_split: Option<f64>,
    /// Standard deviation of Gaussian noise added to training inputs after
    /// concatenation and normalization.
    pub noise_sigma: f64,
    pub normalize: bool,
    /// Seed of the hash that assigns class combinations to splits.
    pub partition_seed: u64,
}

impl Default for CompositionalOptions {
    fn default() -> Self {
        CompositionalOptions {
            ood_split: None,
            noise_sigma: 0.0,
            normalize: true,
            partition_seed: 0,
        }
    }
}

/// Per-channel mean and standard deviation of pixels scaled to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ChannelStats {
    pub fn from_images(set: &ImageSet) -> Result<ChannelStats> {
        if set.is_empty() {
            return Err(Error::Precondition("cannot normalize an empty image set".into()));
        }
        let plane = set.plane_size();
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        for i in 0..set.len() {
            for (j, &px) in set.image(i).iter().enumerate() {
                let v = px as f64 / 255.0;
                sum[j / plane] += v;
                sum_sq[j / plane] += v * v;
            }
        }
        let count = (set.len() * plane) as f64;
        let mut mean = [0.0; 3];
        let mut std = [0.0; 3];
        for c in 0..3 {
            mean[c] = sum[c] / count;
            std[c] = (sum_sq[c] / count - mean[c] * mean[c]).max(0.0).sqrt().max(1e-8);
        }
        Ok(ChannelStats { mean, std })
    }
}

/// Inputs are `k` source images concatenated; targets are k-hot with one
/// 10-wide block per component image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionalDataset {
    pub k: usize,
    pub x: Matrix,
    pub y: Matrix,
    pub combos: Vec<Vec<u8>>,
}

impl CompositionalDataset {
    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> CompositionalDataset {
        CompositionalDataset {
            k: self.k,
            x: self.x.select_rows(idx),
            y: self.y.select_rows(idx),
            combos: idx.iter().map(|&i| self.combos[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionalSplit {
    pub train: CompositionalDataset,
    pub test: CompositionalDataset,
    /// Normalization constants, computed from the training source images.
    pub stats: Option<ChannelStats>,
}

/// Maps an ordered class tuple to `[0, 1)` deterministically.
pub fn combo_hash(seed: u64, combo: &[u8]) -> f64 {
    let mut rng = RngStream::new(seed, 0xc0b0).keyed(&combo.iter().map(|&c| c as u64).collect::<Vec<_>>());
    (rand::RngCore::next_u64(&mut rng) >> 11) as f64 / (1u64 << 53) as f64
}

fn in_test_partition(opts: &CompositionalOptions, combo: &[u8]) -> Option<bool> {
    opts.ood_split
        .map(|frac| combo_hash(opts.partition_seed, combo) < frac)
}

const MAX_DRAWS_PER_ROW: usize = 100_000;

struct Builder<'a> {
    images: &'a ImageSet,
    k: usize,
    stats: Option<ChannelStats>,
}

impl Builder<'_> {
    /// Draws `n` rows whose combination lies in the requested partition.
    fn build(
        &self,
        rng: &mut RngStream,
        n: usize,
        opts: &CompositionalOptions,
        want_test: bool,
        noise: Option<(f64, &mut RngStream)>,
    ) -> Result<CompositionalDataset> {
        let mut noise = noise.filter(|(sigma, _)| *sigma > 0.0);
        let width = self.k * self.images.pixels;
        let mut x = Matrix::zeros(n, width);
        let mut y = Matrix::zeros(n, NUM_CLASSES * self.k);
        let mut combos = Vec::with_capacity(n);
        for row in 0..n {
            let mut draws = 0;
            let picks = loop {
                let picks = index::sample(rng, self.images.len(), self.k).into_vec();
                let combo: Vec<u8> = picks.iter().map(|&i| self.images.labels[i]).collect();
                match in_test_partition(opts, &combo) {
                    Some(t) if t != want_test => {}
                    _ => break picks,
                }
                draws += 1;
                if draws >= MAX_DRAWS_PER_ROW {
                    return Err(Error::Precondition(format!(
                        "no class combination found for the {} partition",
                        if want_test { "test" } else { "train" }
                    )));
                }
            };
            let out = x.row_mut(row);
            let plane = self.images.plane_size();
            for (slot, &img) in picks.iter().enumerate() {
                let dst = &mut out[slot * self.images.pixels..(slot + 1) * self.images.pixels];
                for (j, (&px, d)) in self.images.image(img).iter().zip(dst.iter_mut()).enumerate() {
                    let v = px as f64 / 255.0;
                    *d = match &self.stats {
                        Some(s) => (v - s.mean[j / plane]) / s.std[j / plane],
                        None => v,
                    };
                }
            }
            if let Some((sigma, noise_rng)) = noise.as_mut() {
                for d in out.iter_mut() {
                    *d += *sigma * standard_normal(noise_rng);
                }
            }
            let combo: Vec<u8> = picks.iter().map(|&i| self.images.labels[i]).collect();
            for (slot, &c) in combo.iter().enumerate() {
                y.set(row, slot * NUM_CLASSES + c as usize, 1.0);
            }
            combos.push(combo);
        }
        Ok(CompositionalDataset { k: self.k, x, y, combos })
    }
}

/// Builds train and test inputs by concatenating `k` distinct source images
/// in random order. Training inputs come from `train_images`, test inputs
/// from `test_images`.
pub fn gen_compositional(
    rng: &mut RngStream,
    train_images: &ImageSet,
    test_images: &ImageSet,
    k: usize,
    n_train: usize,
    n_test: usize,
    opts: &CompositionalOptions,
) -> Result<CompositionalSplit> {
    if k == 0 {
        return Err(Error::Dimension("k must be >= 1".into()));
    }
    for (name, set) in [("training", train_images), ("test", test_images)] {
        if set.len() < k {
            return Err(Error::Precondition(format!(
                "k = {k} exceeds the {} available {name} images",
                set.len()
            )));
        }
    }
    if train_images.pixels != test_images.pixels {
        return Err(Error::shape(train_images.pixels, test_images.pixels));
    }
    if let Some(f) = opts.ood_split {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::Precondition(format!("ood_split must lie in (0, 1), got {f}")));
        }
    }
    let stats = if opts.normalize {
        Some(ChannelStats::from_images(train_images)?)
    } else {
        None
    };
    // noise has its own stream so toggling it leaves the sampled inputs alone
    let mut noise_rng = RngStream::new(rand::RngCore::next_u64(rng), 0x6e6f);
    let train = Builder {
        images: train_images,
        k,
        stats,
    }
    .build(rng, n_train, opts, false, Some((opts.noise_sigma, &mut noise_rng)))?;
    let test = Builder {
        images: test_images,
        k,
        stats,
    }
    .build(rng, n_test, opts, true, None)?;
    Ok(CompositionalSplit { train, test, stats })
}
