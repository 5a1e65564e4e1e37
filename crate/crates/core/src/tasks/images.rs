use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{standard_normal, RngStream};

/// Pixels in one CIFAR-10 image: 3 planes (R, G, B) of 32×32.
pub const CIFAR_PIXELS: usize = 3072;
const CIFAR_RECORD: usize = CIFAR_PIXELS + 1;
pub const NUM_CLASSES: usize = 10;

/// A labelled set of planar RGB images stored as raw bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSet {
    /// Pixels per image; a multiple of 3, laid out as R plane, G plane, B plane.
    pub pixels: usize,
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn new(pixels: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if pixels == 0 || pixels % 3 != 0 {
            return Err(Error::Dimension(format!(
                "pixels per image must be a positive multiple of 3, got {pixels}"
            )));
        }
        if images.len() != pixels * labels.len() {
            return Err(Error::shape(pixels * labels.len(), images.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::Precondition(format!("label {bad} out of range")));
        }
        Ok(ImageSet {
            pixels,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        &self.images[i * self.pixels..(i + 1) * self.pixels]
    }

    pub fn plane_size(&self) -> usize {
        self.pixels / 3
    }

    /// Concatenates several sets with the same image size.
    pub fn concat(sets: Vec<ImageSet>) -> Result<ImageSet> {
        let mut iter = sets.into_iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::Precondition("no image sets to concatenate".into()))?;
        for s in iter {
            if s.pixels != out.pixels {
                return Err(Error::shape(out.pixels, s.pixels));
            }
            out.images.extend_from_slice(&s.images);
            out.labels.extend_from_slice(&s.labels);
        }
        Ok(out)
    }
}

/// Reads a file in CIFAR-10 binary layout: repeated 3073-byte records of one
/// label byte followed by 3072 pixel bytes.
pub fn load_cifar10(path: impl AsRef<Path>) -> Result<ImageSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "size {} is not a multiple of the {CIFAR_RECORD}-byte record",
                bytes.len()
            ),
        });
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (record, chunk) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        let label = chunk[0];
        if label as usize >= NUM_CLASSES {
            return Err(Error::Corruption {
                path: path.to_path_buf(),
                record,
                label,
            });
        }
        labels.push(label);
        images.extend_from_slice(&chunk[1..]);
    }
    Ok(ImageSet {
        pixels: CIFAR_PIXELS,
        images,
        labels,
    })
}

/// Loads and concatenates several CIFAR-10 batch files.
pub fn load_cifar10_files<P: AsRef<Path>>(paths: &[P]) -> Result<ImageSet> {
    let sets = paths.iter().map(load_cifar10).collect::<Result<Vec<_>>>()?;
    ImageSet::concat(sets)
}

/// Writes `set` in CIFAR-10 binary layout. Requires 3072-pixel images.
pub fn write_cifar10(path: impl AsRef<Path>, set: &ImageSet) -> Result<()> {
    let path = path.as_ref();
    if set.pixels != CIFAR_PIXELS {
        return Err(Error::shape(CIFAR_PIXELS, set.pixels));
    }
    let mut bytes = Vec::with_capacity(set.len() * CIFAR_RECORD);
    for i in 0..set.len() {
        bytes.push(set.labels[i]);
        bytes.extend_from_slice(set.image(i));
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Settings for procedurally generated class-conditional images.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyImageConfig {
    pub side: usize,
    /// Seed for the per-class prototype patterns.
    pub prototype_seed: u64,
    /// Standard deviation of per-pixel noise, in byte units.
    pub noise: f64,
    /// Standard deviation of a per-image brightness shift, in byte units.
    pub brightness: f64,
}

impl Default for ToyImageConfig {
    fn default() -> Self {
        ToyImageConfig {
            side: 8,
            prototype_seed: 0,
            noise: 64.0,
            brightness: 24.0,
        }
    }
}

/// Smooth random pattern per class: a sum of a few low-frequency planar
/// waves per channel.
fn prototypes(cfg: &ToyImageConfig) -> Vec<Vec<f64>> {
    let mut rng = RngStream::new(cfg.prototype_seed, 0x70_7e);
    let side = cfg.side as f64;
    (0..NUM_CLASSES)
        .map(|_| {
            let mut img = vec![128.0; 3 * cfg.side * cfg.side];
            for ch in 0..3 {
                for _ in 0..3 {
                    let fx = rng.random_range(-2.0..2.0) * std::f64::consts::PI / side;
                    let fy = rng.random_range(-2.0..2.0) * std::f64::consts::PI / side;
                    let ph = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp = 40.0 * standard_normal(&mut rng);
                    for yy in 0..cfg.side {
                        for xx in 0..cfg.side {
                            let idx = ch * cfg.side * cfg.side + yy * cfg.side + xx;
                            img[idx] += amp * (fx * xx as f64 + fy * yy as f64 + ph).sin();
                        }
                    }
                }
            }
            img
        })
        .collect()
}

/// Generates `n` labelled toy images with uniformly random classes. The
/// class patterns depend only on `cfg`, so different draws share classes.
pub fn toy_images(rng: &mut RngStream, n: usize, cfg: &ToyImageConfig) -> Result<ImageSet> {
    if cfg.side == 0 {
        return Err(Error::Dimension("toy image side must be >= 1".into()));
    }
    let protos = prototypes(cfg);
    let pixels = 3 * cfg.side * cfg.side;
    let mut images = Vec::with_capacity(n * pixels);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..NUM_CLASSES);
        let shift = cfg.brightness * standard_normal(rng);
        for &v in &protos[label] {
            let px = v + shift + cfg.noise * standard_normal(rng);
            images.push(px.round().clamp(0.0, 255.0) as u8);
        }
        labels.push(label as u8);
    }
    ImageSet::new(pixels, images, labels)
}
