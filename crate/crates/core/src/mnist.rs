//! MNIST in the IDX container format.
//!
//! Image files: big-endian `u32` magic 2051, then `n`, `rows`, `cols`, then
//! `n * rows * cols` unsigned bytes. Label files: magic 2049, `n`, then `n`
//! bytes. Files must already be decompressed.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::tensor::Tensor;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum MnistError {
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("truncated input: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("label {value} at byte offset {offset} is not a digit")]
    LabelOutOfRange { offset: usize, value: u8 },

    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("images must be {SIDE}x{SIDE}, found {rows}x{cols}")]
    ImageSize { rows: usize, cols: usize },

    #[error("pixel {index} has value {value}, outside [0, 1]")]
    PixelRange { index: usize, value: f32 },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<MnistError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MnistError {
    fn in_file(self, path: &Path) -> Self {
        MnistError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, MnistError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(MnistError::Truncated {
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), MnistError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(MnistError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an IDX image file into a `[n, rows, cols]` tensor with pixels scaled to `[0, 1]`.
pub fn load_images(bytes: &[u8]) -> Result<Tensor, MnistError> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() < expected {
        return Err(MnistError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let data = bytes[16..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Ok(Tensor::new([n, rows, cols], data).expect("length checked above"))
}

/// Decodes an IDX label file.
pub fn load_labels(bytes: &[u8]) -> Result<Vec<u8>, MnistError> {
    check_magic(bytes, LABEL_MAGIC)?;
    let n = read_u32(bytes, 4)? as usize;
    let expected = 8 + n;
    if bytes.len() < expected {
        return Err(MnistError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let labels = &bytes[8..expected];
    if let Some((i, &value)) = labels
        .iter()
        .enumerate()
        .find(|(_, &v)| v as usize >= CLASSES)
    {
        return Err(MnistError::LabelOutOfRange {
            offset: 8 + i,
            value,
        });
    }
    Ok(labels.to_vec())
}

/// Encodes a `[n, rows, cols]` tensor as an IDX image file, quantizing
/// each pixel to `round(p * 255)`.
pub fn encode_images(images: &Tensor) -> Vec<u8> {
    let e = images.shape().extents();
    assert_eq!(e.len(), 3, "image tensor must be [n, rows, cols]");
    let mut out = Vec::with_capacity(16 + images.len());
    for v in [IMAGE_MAGIC, e[0] as u32, e[1] as u32, e[2] as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        images
            .data()
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Length-10 vector with 1.0 at `label`.
pub fn one_hot(label: u8) -> Result<Tensor, MnistError> {
    if label as usize >= CLASSES {
        return Err(MnistError::LabelOutOfRange {
            offset: 0,
            value: label,
        });
    }
    let mut v = vec![0.0; CLASSES];
    v[label as usize] = 1.0;
    Ok(Tensor::vector(v))
}

/// Images `[n, 28, 28]` in `[0, 1]` with their digit labels.
#[derive(Debug, Clone)]
pub struct MnistSet {
    images: Tensor,
    labels: Vec<u8>,
}

impl MnistSet {
    pub fn new(images: Tensor, labels: Vec<u8>) -> Result<Self, MnistError> {
        let e = images.shape().extents();
        if e.len() != 3 || e[1] != SIDE || e[2] != SIDE {
            let (rows, cols) = match e {
                [_, r, c] => (*r, *c),
                _ => (0, 0),
            };
            return Err(MnistError::ImageSize { rows, cols });
        }
        if e[0] != labels.len() {
            return Err(MnistError::CountMismatch {
                images: e[0],
                labels: labels.len(),
            });
        }
        if let Some((i, &value)) = labels
            .iter()
            .enumerate()
            .find(|(_, &v)| v as usize >= CLASSES)
        {
            return Err(MnistError::LabelOutOfRange { offset: i, value });
        }
        if let Some((index, &value)) = images
            .data()
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(MnistError::PixelRange { index, value });
        }
        Ok(MnistSet { images, labels })
    }

    /// Decodes a pair of IDX byte streams.
    pub fn from_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Self, MnistError> {
        Self::new(load_images(image_bytes)?, load_labels(label_bytes)?)
    }

    /// Reads a pair of IDX files, keeping at most `limit` examples.
    pub fn from_files(
        images: impl AsRef<Path>,
        labels: impl AsRef<Path>,
        limit: Option<usize>,
    ) -> Result<Self, MnistError> {
        let read = |p: &Path| {
            std::fs::read(p).map_err(|source| MnistError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        let (ip, lp) = (images.as_ref(), labels.as_ref());
        let img = load_images(&read(ip)?).map_err(|e| e.in_file(ip))?;
        let lab = load_labels(&read(lp)?).map_err(|e| e.in_file(lp))?;
        let set = Self::new(img, lab).map_err(|e| e.in_file(ip))?;
        Ok(match limit {
            Some(n) => set.truncate(n),
            None => set,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> Tensor {
        self.images.select(&[i]).expect("image index in range")
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// The first `n` examples (or all of them if there are fewer).
    pub fn truncate(&self, n: usize) -> MnistSet {
        let n = n.min(self.len());
        let images = Tensor::new(
            [n, SIDE, SIDE],
            self.images.data()[..n * SIDE * SIDE].to_vec(),
        )
        .expect("prefix of a valid set");
        MnistSet {
            images,
            labels: self.labels[..n].to_vec(),
        }
    }

    /// IDX encodings of the images and labels.
    pub fn to_idx(&self) -> (Vec<u8>, Vec<u8>) {
        (encode_images(&self.images), encode_labels(&self.labels))
    }
}

/// One `(image, one-hot label)` pair.
pub type Example = (Tensor, Tensor);

/// Consecutive groups of `size` examples in dataset order; the last group may be shorter.
pub fn batches(set: &MnistSet, size: usize) -> Batches<'_> {
    Batches {
        set,
        size: size.max(1),
        next: 0,
    }
}

pub struct Batches<'a> {
    set: &'a MnistSet,
    size: usize,
    next: usize,
}

impl Iterator for Batches<'_> {
    type Item = Vec<Example>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.set.len() {
            return None;
        }
        let end = (self.next + self.size).min(self.set.len());
        let batch = (self.next..end)
            .map(|i| {
                let y = one_hot(self.set.label(i)).expect("labels validated at construction");
                (self.set.image(i), y)
            })
            .collect();
        self.next = end;
        Some(batch)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.set.len() - self.next.min(self.set.len());
        let n = left.div_ceil(self.size);
        (n, Some(n))
    }
}

impl ExactSizeIterator for Batches<'_> {}
