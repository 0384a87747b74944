//! MNIST ingestion: IDX container parsing, crop/binarize preprocessing, and
//! deterministic epoch shuffling.
//!
//! Preprocessing crops the 4-pixel border (28x28 -> 20x20) and binarizes at
//! one half of full scale, with the boundary value mapping to 1. The 10x10
//! geometry first averages 2x2 blocks of the cropped grayscale, then
//! binarizes. Both rules are evaluated in exact integer arithmetic.

use byteorder::{BigEndian, ReadBytesExt};
use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;
const CACHE_MAGIC: &[u8; 4] = b"SNDS";
const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error reading {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: bad magic {found:#010x} at offset 0, expected {expected:#010x}")]
    BadMagic { path: String, found: u32, expected: u32 },
    #[error("{path}: truncated after {offset} bytes")]
    Truncated { path: String, offset: u64 },
    #[error("{path}: images are {rows}x{cols}, expected 28x28")]
    BadImageDims { path: String, rows: u32, cols: u32 },
    #[error("images ({images}) and labels ({labels}) disagree in count")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: label {label} at index {index} outside 0..10")]
    LabelRange { path: String, index: usize, label: u8 },
    #[error("{path}: unsupported cache version {version}")]
    CacheVersion { path: String, version: u32 },
    #[error("{path}: cache geometry {geometry} is not a known layout")]
    CacheGeometry { path: String, geometry: u32 },
}

/// Input geometry after preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Geometry {
    /// 20x20: cropped and binarized.
    Px20,
    /// 10x10: cropped, block-averaged, binarized.
    Px10,
}

impl Geometry {
    pub fn side(&self) -> usize {
        match self {
            Geometry::Px20 => 20,
            Geometry::Px10 => 10,
        }
    }

    pub fn pixels(&self) -> usize {
        self.side() * self.side()
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "20x20" | "20" => Some(Geometry::Px20),
            "10x10" | "10" => Some(Geometry::Px10),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::Px20 => "20x20",
            Geometry::Px10 => "10x10",
        }
    }
}

/// Raw 28x28 grayscale images with labels.
#[derive(Clone, Debug)]
pub struct RawDataset {
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

/// Preprocessed binary dataset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub geometry: Geometry,
    /// Binary vectors of `geometry.pixels()` entries each.
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn bits(&self, i: usize) -> &[u8] {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// One-hot target vector for sample `i`.
    pub fn one_hot(&self, i: usize, n_out: usize) -> Vec<u8> {
        let mut t = vec![0u8; n_out];
        t[self.labels[i] as usize] = 1;
        t
    }

    /// 64-bit FNV-1a over all bits and labels; preprocessing determinism
    /// check.
    pub fn fingerprint(&self) -> u64 {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |byte: u8| {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x1_0000_0000_01b3);
        };
        eat(self.geometry.side() as u8);
        for (img, &label) in self.images.iter().zip(&self.labels) {
            for &b in img {
                eat(b);
            }
            eat(label);
        }
        hash
    }
}

fn io_err(path: &Path, source: io::Error) -> DataError {
    if source.kind() == io::ErrorKind::UnexpectedEof {
        DataError::Truncated { path: path.display().to_string(), offset: 0 }
    } else {
        DataError::Io { path: path.display().to_string(), source }
    }
}

/// Parses the big-endian IDX image container (magic 0x00000803, 28x28).
pub fn load_idx_images(path: &Path) -> Result<Vec<Vec<u8>>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let magic = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_IMAGE_MAGIC,
        });
    }
    let count = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let rows = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))?;
    let cols = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))?;
    if rows != 28 || cols != 28 {
        return Err(DataError::BadImageDims { path: path.display().to_string(), rows, cols });
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let mut img = vec![0u8; 784];
        r.read_exact(&mut img).map_err(|_| DataError::Truncated {
            path: path.display().to_string(),
            offset: 16 + i as u64 * 784,
        })?;
        images.push(img);
    }
    Ok(images)
}

/// Parses the big-endian IDX label container (magic 0x00000801).
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let magic = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: magic,
            expected: IDX_LABEL_MAGIC,
        });
    }
    let count = r.read_u32::<BigEndian>().map_err(|e| io_err(path, e))? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels)
        .map_err(|_| DataError::Truncated { path: path.display().to_string(), offset: 8 })?;
    for (i, &l) in labels.iter().enumerate() {
        if l > 9 {
            return Err(DataError::LabelRange {
                path: path.display().to_string(),
                index: i,
                label: l,
            });
        }
    }
    Ok(labels)
}

/// Loads an image/label pair into a raw dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset, DataError> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(DataError::CountMismatch { images: images.len(), labels: labels.len() });
    }
    Ok(RawDataset { images, labels })
}

/// Crops the 4-pixel border of a 28x28 image to 20x20. Output index (r, c)
/// maps to input index (r + 4, c + 4).
fn crop(img: &[u8]) -> [u8; 400] {
    let mut out = [0u8; 400];
    for r in 0..20 {
        for c in 0..20 {
            out[r * 20 + c] = img[(r + 4) * 28 + (c + 4)];
        }
    }
    out
}

/// One pixel binarized at half scale: `p / 255 >= 0.5` is exactly `p >= 128`.
#[inline]
fn binarize_px(p: u8) -> u8 {
    u8::from(p >= 128)
}

/// Preprocesses raw images to the requested geometry.
pub fn preprocess(raw: &RawDataset, geometry: Geometry) -> Dataset {
    let images = raw
        .images
        .iter()
        .map(|img| {
            let cropped = crop(img);
            match geometry {
                Geometry::Px20 => cropped.iter().map(|&p| binarize_px(p)).collect(),
                Geometry::Px10 => {
                    // Average 2x2 grayscale blocks, then binarize:
                    // mean / 255 >= 0.5 is exactly sum-of-4 >= 510.
                    let mut out = vec![0u8; 100];
                    for r in 0..10 {
                        for c in 0..10 {
                            let sum: u32 = [(0, 0), (0, 1), (1, 0), (1, 1)]
                                .iter()
                                .map(|&(dr, dc)| cropped[(2 * r + dr) * 20 + 2 * c + dc] as u32)
                                .sum();
                            out[r * 10 + c] = u8::from(sum >= 510);
                        }
                    }
                    out
                }
            }
        })
        .collect();
    Dataset { geometry, images, labels: raw.labels.clone() }
}

/// Deterministic permutation of `0..n` for one epoch. The same (seed, epoch)
/// always yields the same order; different epochs differ.
pub fn epoch_order(seed: u64, epoch: u32, n: usize) -> Vec<u32> {
    let mut rng_state = splitmix64(seed ^ splitmix64(0x9e37_79b9_7f4a_7c15 ^ epoch as u64));
    let mut order: Vec<u32> = (0..n as u32).collect();
    // Fisher-Yates with explicit rejection sampling, so the permutation
    // depends only on the splitmix stream.
    for i in (1..n).rev() {
        let bound = (i + 1) as u64;
        let j = loop {
            rng_state = splitmix64(rng_state);
            let v = rng_state;
            let limit = u64::MAX - u64::MAX % bound;
            if v < limit {
                break (v % bound) as usize;
            }
        };
        order.swap(i, j);
    }
    order
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Writes the preprocessed dataset as a versioned packed-bit cache:
/// magic "SNDS", version u32, side u32, count u32 (all little-endian),
/// `count` label bytes, then per image `ceil(pixels / 8)` bytes of
/// row-major bits, least significant bit first.
pub fn write_cache(dataset: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(dataset.geometry.side() as u32).to_le_bytes());
    out.extend_from_slice(&(dataset.len() as u32).to_le_bytes());
    out.extend_from_slice(&dataset.labels);
    let stride = dataset.geometry.pixels().div_ceil(8);
    for img in &dataset.images {
        let mut row = vec![0u8; stride];
        for (i, &b) in img.iter().enumerate() {
            row[i / 8] |= b << (i % 8);
        }
        out.extend_from_slice(&row);
    }
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&out).map_err(|e| io_err(path, e))
}

/// Reads a cache written by [`write_cache`].
pub fn read_cache(path: &Path) -> Result<Dataset, DataError> {
    let mut f = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != CACHE_MAGIC {
        return Err(DataError::BadMagic {
            path: path.display().to_string(),
            found: u32::from_be_bytes(magic),
            expected: u32::from_be_bytes(*CACHE_MAGIC),
        });
    }
    let mut word = [0u8; 4];
    f.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let version = u32::from_le_bytes(word);
    if version != CACHE_VERSION {
        return Err(DataError::CacheVersion { path: path.display().to_string(), version });
    }
    f.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let side = u32::from_le_bytes(word);
    let geometry = match side {
        20 => Geometry::Px20,
        10 => Geometry::Px10,
        other => {
            return Err(DataError::CacheGeometry {
                path: path.display().to_string(),
                geometry: other,
            })
        }
    };
    f.read_exact(&mut word).map_err(|e| io_err(path, e))?;
    let count = u32::from_le_bytes(word) as usize;
    let mut labels = vec![0u8; count];
    f.read_exact(&mut labels).map_err(|e| io_err(path, e))?;
    let pixels = geometry.pixels();
    let stride = pixels.div_ceil(8);
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut row = vec![0u8; stride];
        f.read_exact(&mut row).map_err(|e| io_err(path, e))?;
        images.push((0..pixels).map(|i| (row[i / 8] >> (i % 8)) & 1).collect());
    }
    Ok(Dataset { geometry, images, labels })
}
