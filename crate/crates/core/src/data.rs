//! MNIST in IDX format, train/test splitting, seeded batching and a
//! synthetic stand-in dataset for offline runs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::{self, Rng};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_DIM: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 10;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub name: String,
}

impl ImageDataset {
    pub fn new(images: Tensor, labels: Vec<usize>, name: impl Into<String>) -> Result<Self> {
        if images.rows() != labels.len() {
            return Err(Error::CountMismatch {
                images: images.rows(),
                labels: labels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: NUM_CLASSES,
            });
        }
        if images.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::InvalidTensor("pixel outside [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn subset(&self, idx: &[usize], name: impl Into<String>) -> ImageDataset {
        ImageDataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            name: name.into(),
        }
    }

    /// First `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> ImageDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx, self.name.clone())
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            reason: "header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

/// Reads an IDX image/label file pair; pixels are scaled by 1/255.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageDataset> {
    let img = read_file(images_path)?;
    let magic = read_u32(&img, 0, images_path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: images_path.to_path_buf(),
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(&img, 4, images_path)? as usize;
    let rows = read_u32(&img, 8, images_path)? as usize;
    let cols = read_u32(&img, 12, images_path)? as usize;
    let dim = rows * cols;
    let pixels = &img[16..];
    if pixels.len() < count * dim {
        return Err(Error::Truncated {
            path: images_path.to_path_buf(),
            reason: format!("expected {} pixel bytes, found {}", count * dim, pixels.len()),
        });
    }

    let lab = read_file(labels_path)?;
    let magic = read_u32(&lab, 0, labels_path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::BadMagic {
            path: labels_path.to_path_buf(),
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let label_count = read_u32(&lab, 4, labels_path)? as usize;
    if label_count != count {
        return Err(Error::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let label_bytes = &lab[8..];
    if label_bytes.len() < count {
        return Err(Error::Truncated {
            path: labels_path.to_path_buf(),
            reason: format!("expected {count} labels, found {}", label_bytes.len()),
        });
    }

    let data = pixels[..count * dim].iter().map(|&p| p as f64 / 255.0).collect();
    let labels = label_bytes[..count].iter().map(|&l| l as usize).collect();
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    ImageDataset::new(Tensor::matrix(count, dim, data)?, labels, name)
}

/// Loads `train-images-idx3-ubyte` / `train-labels-idx1-ubyte` from `dir`.
pub fn load_mnist_train(dir: &Path) -> Result<ImageDataset> {
    load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))
}

/// Writes a dataset as an IDX pair of square images (pixels rounded to bytes).
pub fn write_idx(ds: &ImageDataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let side = (ds.dim() as f64).sqrt() as usize;
    if side * side != ds.dim() {
        return Err(Error::Config(format!("image dimension {} is not square", ds.dim())));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    for v in [IMAGE_MAGIC, ds.len() as u32, side as u32, side as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(ds.images.data().iter().map(|&p| (p * 255.0).round() as u8));
    fs::write(images_path, img).map_err(|e| Error::file(images_path, e))?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend(ds.labels.iter().map(|&l| l as u8));
    fs::write(labels_path, lab).map_err(|e| Error::file(labels_path, e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_count: usize,
    pub test_count: usize,
    pub shuffle_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_count: 50_000,
            test_count: 10_000,
            shuffle_seed: 0,
        }
    }
}

/// Seeded disjoint train/test split.
pub fn split(ds: &ImageDataset, spec: &SplitSpec) -> Result<(ImageDataset, ImageDataset)> {
    let (train_idx, test_idx) = split_indices(ds.len(), spec)?;
    Ok((
        ds.subset(&train_idx, format!("{}-train", ds.name)),
        ds.subset(&test_idx, format!("{}-test", ds.name)),
    ))
}

pub fn split_indices(n: usize, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if spec.train_count + spec.test_count > n {
        return Err(Error::InvalidSplit {
            train: spec.train_count,
            test: spec.test_count,
            available: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(spec.shuffle_seed, 0));
    let test = idx[spec.train_count..spec.train_count + spec.test_count].to_vec();
    idx.truncate(spec.train_count);
    Ok((idx, test))
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub images: Tensor,
    pub labels: Vec<usize>,
}

/// One epoch over `ds` in a seeded random order; the last batch may be short.
pub struct Batches<'a> {
    ds: &'a ImageDataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

pub fn batches<'a>(ds: &'a ImageDataset, batch_size: usize, rng: &mut Rng) -> Result<Batches<'a>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(rng);
    Ok(Batches {
        ds,
        order,
        batch_size,
        pos: 0,
    })
}

impl Iterator for Batches<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(Batch {
            images: self.ds.images.select_rows(&indices),
            labels: indices.iter().map(|&i| self.ds.labels[i]).collect(),
            indices,
        })
    }
}

pub const SYNTHETIC_NOISE_STD: f64 = 0.05;

/// Ten random class prototypes in `[0,1]^784`.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    prototypes: Vec<Vec<f64>>,
}

impl SyntheticSource {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng::stream(seed, 0);
        let prototypes = (0..NUM_CLASSES)
            .map(|_| (0..IMAGE_DIM).map(|_| rng.random::<f64>()).collect())
            .collect();
        Self { prototypes }
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    /// `n` noisy samples with labels cycling through the classes, shuffled.
    pub fn draw(&self, n: usize, rng: &mut Rng) -> ImageDataset {
        let noise = Normal::new(0.0, SYNTHETIC_NOISE_STD).expect("valid std");
        let mut labels: Vec<usize> = (0..n).map(|i| i % NUM_CLASSES).collect();
        labels.shuffle(rng);
        let mut data = Vec::with_capacity(n * IMAGE_DIM);
        for &label in &labels {
            data.extend(
                self.prototypes[label]
                    .iter()
                    .map(|&p| (p + noise.sample(rng)).clamp(0.0, 1.0)),
            );
        }
        let images = Tensor::matrix(n, IMAGE_DIM, data).expect("sized above");
        ImageDataset::new(images, labels, "synthetic").expect("valid by construction")
    }
}

/// Synthetic dataset of `n ≥ 10` samples, deterministic in `seed`.
pub fn synthetic(n: usize, seed: u64) -> Result<ImageDataset> {
    if n < NUM_CLASSES {
        return Err(Error::Config(format!("synthetic dataset needs at least {NUM_CLASSES} samples")));
    }
    Ok(SyntheticSource::new(seed).draw(n, &mut rng::stream(seed, 1)))
}

/// Standard MNIST file locations inside `dir`, for diagnostics.
pub fn mnist_paths(dir: &Path) -> [PathBuf; 2] {
    [dir.join(TRAIN_IMAGES), dir.join(TRAIN_LABELS)]
}
