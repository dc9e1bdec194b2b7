//! The digit-recognition CNN.
//!
//! ```text
//! I [28,28] -> C1 [6,24,24] -> S1 [6,12,12] -> C2 [12,1,8,8] -> S2 [12,1,4,4] -> out [10,1,1,1,1]
//! ```
//!
//! Every layer is `sigmoid(mconv(..))` or `avgpool(..)`; the fully connected
//! layer is an `mconv` whose kernels cover the whole input. Training is plain
//! mini-batch SGD on the squared loss `0.5 * sum((y - yhat)^2)`.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mnist::{batches, one_hot, MnistSet, CLASSES, SIDE};
use crate::nn::{
    avgpool, backavgpool, backsigmoid, mbackbias, mbackin, mbackweights, mconv, sigmoid,
};
use crate::runtime::{self, ExecConfig};
use crate::tensor::{Result, Shape, Tensor, TensorError};

pub const K1_SHAPE: [usize; 3] = [6, 5, 5];
pub const B1_SHAPE: [usize; 1] = [6];
pub const K2_SHAPE: [usize; 4] = [12, 6, 5, 5];
pub const B2_SHAPE: [usize; 1] = [12];
pub const FC_SHAPE: [usize; 5] = [10, 12, 1, 4, 4];
pub const B_SHAPE: [usize; 1] = [10];

pub const PARAM_NAMES: [&str; 6] = ["k1", "b1", "k2", "b2", "fc", "b"];

fn param_shapes() -> [Shape; 6] {
    [
        K1_SHAPE.into(),
        B1_SHAPE.into(),
        K2_SHAPE.into(),
        B2_SHAPE.into(),
        FC_SHAPE.into(),
        B_SHAPE.into(),
    ]
}

/// Total number of trainable scalars.
pub fn param_count() -> usize {
    param_shapes().iter().map(Shape::numel).sum()
}

/// Weights and biases of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub k1: Tensor,
    pub b1: Tensor,
    pub k2: Tensor,
    pub b2: Tensor,
    pub fc: Tensor,
    pub b: Tensor,
}

/// Gradients share the parameter layout.
pub type Grads = Params;

impl Params {
    pub fn zeros() -> Self {
        let [k1, b1, k2, b2, fc, b] = param_shapes().map(Tensor::zeros);
        Params {
            k1,
            b1,
            k2,
            b2,
            fc,
            b,
        }
    }

    /// Builds parameters from six tensors in `k1, b1, k2, b2, fc, b` order,
    /// checking every shape.
    pub fn from_tensors(tensors: [Tensor; 6]) -> Result<Self> {
        for (t, s) in tensors.iter().zip(param_shapes()) {
            if t.shape() != &s {
                return Err(TensorError::Mismatch {
                    op: "params",
                    left: t.shape().clone(),
                    right: s,
                });
            }
        }
        let [k1, b1, k2, b2, fc, b] = tensors;
        Ok(Params {
            k1,
            b1,
            k2,
            b2,
            fc,
            b,
        })
    }

    /// Uniform Glorot initialisation with zero biases.
    ///
    /// Each weight tensor is drawn from `U(-a, a)` with
    /// `a = sqrt(6 / (fan_in + fan_out))`, where `fan_in` is the size of one
    /// kernel and `fan_out` the size of the output slice it produces. Draws
    /// come from one ChaCha8 stream seeded with `seed`, in `k1, k2, fc`
    /// order; each `u32` word `w` maps to `(w >> 8) * 2^-24` in `[0, 1)`.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shape: &[usize], fan_out: usize| {
            let fan_in: usize = shape[1..].iter().product();
            let bound = init_bound(fan_in, fan_out);
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| {
                    let u = (rng.next_u32() >> 8) as f32 * (1.0 / (1u32 << 24) as f32);
                    (2.0 * u - 1.0) * bound
                })
                .collect();
            Tensor::new(shape.to_vec(), data).expect("shape matches draw count")
        };
        let k1 = draw(&K1_SHAPE, 24 * 24);
        let k2 = draw(&K2_SHAPE, 8 * 8);
        let fc = draw(&FC_SHAPE, 1);
        Params {
            k1,
            b1: Tensor::zeros(B1_SHAPE),
            k2,
            b2: Tensor::zeros(B2_SHAPE),
            fc,
            b: Tensor::zeros(B_SHAPE),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.k1, &self.b1, &self.k2, &self.b2, &self.fc, &self.b]
    }

    /// Concatenated flat buffers in `k1, b1, k2, b2, fc, b` order.
    pub fn write_flat(&self, out: &mut [f32]) {
        let mut at = 0;
        for t in self.tensors() {
            out[at..at + t.len()].copy_from_slice(t.data());
            at += t.len();
        }
    }

    pub fn from_flat(flat: &[f32]) -> Self {
        assert_eq!(flat.len(), param_count(), "flat parameter length");
        let mut at = 0;
        let tensors = param_shapes().map(|s| {
            let n = s.numel();
            let t = Tensor::new(s, flat[at..at + n].to_vec()).expect("length checked");
            at += n;
            t
        });
        Params::from_tensors(tensors).expect("shapes from the canonical list")
    }

    /// Bitwise equality of every tensor.
    pub fn bit_eq(&self, other: &Params) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .all(|(a, b)| a.bit_eq(b))
    }

    /// Writes the checkpoint format: magic `TLM1`, then for each tensor its
    /// rank, extents and raw `f32` values, all little-endian.
    pub fn write_checkpoint(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for t in self.tensors() {
            w.write_all(&(t.rank() as u32).to_le_bytes())?;
            for &e in t.shape().extents() {
                w.write_all(&(e as u32).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(CheckpointError::Read)?;
        Self::decode_checkpoint(&bytes)
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cur = Cursor { bytes, at: 0 };
        let magic = cur.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let mut tensors = Vec::with_capacity(6);
        for (name, expected) in PARAM_NAMES.iter().zip(param_shapes()) {
            let rank = cur.u32()? as usize;
            if rank != expected.rank() {
                return Err(CheckpointError::Rank {
                    tensor: name,
                    expected: expected.rank(),
                    found: rank,
                });
            }
            let extents = (0..rank)
                .map(|_| cur.u32().map(|e| e as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let found = Shape::new(extents);
            if found != expected {
                return Err(CheckpointError::Shape {
                    tensor: name,
                    expected,
                    found,
                });
            }
            let raw = cur.take(4 * found.numel())?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor::new(found, data).expect("length from shape"));
        }
        if cur.at != bytes.len() {
            return Err(CheckpointError::TrailingBytes {
                extra: bytes.len() - cur.at,
            });
        }
        let tensors: [Tensor; 6] = tensors.try_into().expect("six tensors");
        Ok(Params::from_tensors(tensors).expect("shapes checked"))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)
            .map_err(CheckpointError::Read)?;
        std::fs::write(path, buf).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode_checkpoint(&bytes)
    }
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f32 {
    (6.0f64 / (fan_in + fan_out) as f64).sqrt() as f32
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TLM1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: magic {found:?} is not \"TLM1\"")]
    BadMagic { found: Vec<u8> },

    #[error("checkpoint truncated at byte {at}")]
    Truncated { at: usize },

    #[error("tensor {tensor}: expected rank {expected}, found {found}")]
    Rank {
        tensor: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("tensor {tensor}: expected shape {expected}, found {found}")]
    Shape {
        tensor: &'static str,
        expected: Shape,
        found: Shape,
    },

    #[error("{extra} unexpected bytes after the last tensor")]
    TrailingBytes { extra: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Read(std::io::Error),
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or(CheckpointError::Truncated {
                at: self.bytes.len(),
            })?;
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ActCache {
    pub input: Tensor,
    pub c1: Tensor,
    pub s1: Tensor,
    pub c2: Tensor,
    pub s2: Tensor,
    pub out: Tensor,
}

impl ActCache {
    /// The network output as a length-10 vector.
    pub fn yhat(&self) -> Tensor {
        self.out
            .reshape([CLASSES])
            .expect("output has ten elements")
    }
}

/// Runs the network on one `[28, 28]` image.
pub fn forward(input: &Tensor, p: &Params) -> Result<(Tensor, ActCache)> {
    if input.shape().extents() != [SIDE, SIDE] {
        return Err(TensorError::Mismatch {
            op: "forward",
            left: input.shape().clone(),
            right: Shape::from([SIDE, SIDE]),
        });
    }
    let c1 = sigmoid(&mconv(input, &p.k1, &p.b1)?);
    let s1 = avgpool(&c1)?;
    let c2 = sigmoid(&mconv(&s1, &p.k2, &p.b2)?);
    let s2 = avgpool(&c2)?;
    let out = sigmoid(&mconv(&s2, &p.fc, &p.b)?);
    let cache = ActCache {
        input: input.clone(),
        c1,
        s1,
        c2,
        s2,
        out,
    };
    Ok((cache.yhat(), cache))
}

/// `0.5 * sum((y - yhat)^2)`.
pub fn loss(yhat: &Tensor, y: &Tensor) -> Result<f32> {
    let d = y.sub(yhat)?;
    Ok(0.5 * d.data().iter().fold(0.0f32, |acc, &x| acc + x * x))
}

/// Gradients of the loss for one example, given its forward cache.
pub fn backward(cache: &ActCache, p: &Params, y: &Tensor) -> Result<Grads> {
    let d_yhat = cache.yhat().sub(y)?;
    let d_out = d_yhat.into_reshape(cache.out.shape().clone())?;
    let d_z3 = backsigmoid(&d_out, &cache.out)?;
    let fc = mbackweights(&d_z3, &cache.s2)?;
    let b = mbackbias(&d_z3)?;
    let d_s2 = mbackin(&d_z3, &p.fc, &cache.s2)?;

    let d_c2 = backavgpool(&d_s2)?;
    let d_z2 = backsigmoid(&d_c2, &cache.c2)?;
    let k2 = mbackweights(&d_z2, &cache.s1)?;
    let b2 = mbackbias(&d_z2)?;
    let d_s1 = mbackin(&d_z2, &p.k2, &cache.s1)?;

    let d_c1 = backavgpool(&d_s1)?;
    let d_z1 = backsigmoid(&d_c1, &cache.c1)?;
    let k1 = mbackweights(&d_z1, &cache.input)?;
    let b1 = mbackbias(&d_z1)?;

    Params::from_tensors([k1, b1, k2, b2, fc, b])
}

/// `w - rate * (acc / batch)` for every parameter tensor.
pub fn sgd_step(p: &Params, acc: &Grads, rate: f32, batch: usize) -> Params {
    let n = batch.max(1) as f32;
    let step = |w: &Tensor, g: &Tensor| {
        w.zip_with(g, "sgd_step", |w, g| w - rate * (g / n))
            .expect("gradients congruent with parameters")
    };
    Params {
        k1: step(&p.k1, &acc.k1),
        b1: step(&p.b1, &acc.b1),
        k2: step(&p.k2, &acc.k2),
        b2: step(&p.b2, &acc.b2),
        fc: step(&p.fc, &acc.fc),
        b: step(&p.b, &acc.b),
    }
}

/// Training hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub rate: f32,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper {
            rate: 0.05,
            epochs: 10,
            batch: 100,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: Params,
    /// Mean per-example loss observed during each epoch.
    pub epoch_losses: Vec<f32>,
}

/// Summed gradients and summed loss over a group of examples.
///
/// Per-example gradients are computed in one comprehension over the batch
/// (each cell is the flattened gradient followed by the loss) and then
/// accumulated in example order, so the result does not depend on how the
/// comprehension was scheduled.
pub fn batch_gradients(p: &Params, batch: &[(Tensor, Tensor)]) -> Result<(Grads, f32)> {
    let np = param_count();
    let cells = Tensor::build(
        Shape::from([batch.len()]),
        Shape::from([np + 1]),
        |iv, cell| {
            let (x, y) = &batch[iv[0]];
            let (yhat, cache) = forward(x, p)?;
            let g = backward(&cache, p, y)?;
            g.write_flat(&mut cell[..np]);
            cell[np] = loss(&yhat, y)?;
            Ok::<_, TensorError>(())
        },
    )?;
    let mut acc = vec![0.0f32; np + 1];
    for cell in cells.data().chunks_exact(np + 1) {
        for (a, &g) in acc.iter_mut().zip(cell) {
            *a += g;
        }
    }
    let total_loss = acc[np];
    Ok((Params::from_flat(&acc[..np]), total_loss))
}

/// Mini-batch SGD over `data` in dataset order. `on_epoch(epoch, mean_loss)`
/// is called after each epoch, with `epoch` counted from 0.
pub fn train(
    p: &Params,
    data: &MnistSet,
    h: &Hyper,
    mut on_epoch: impl FnMut(usize, f32),
) -> Result<TrainReport> {
    let mut params = p.clone();
    let mut epoch_losses = Vec::with_capacity(h.epochs);
    for epoch in 0..h.epochs {
        let mut total = 0.0f64;
        for batch in batches(data, h.batch) {
            let (acc, batch_loss) = batch_gradients(&params, &batch)?;
            params = sgd_step(&params, &acc, h.rate, batch.len());
            total += batch_loss as f64;
        }
        let mean = (total / data.len().max(1) as f64) as f32;
        epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TrainReport {
        params,
        epoch_losses,
    })
}

/// Network outputs for every image, as an `[n, 10]` tensor.
pub fn predict_all(p: &Params, data: &MnistSet) -> Result<Tensor> {
    let images = data.images();
    Tensor::build(
        Shape::from([data.len()]),
        Shape::from([CLASSES]),
        |iv, cell| {
            let x = images.select(iv)?;
            let (yhat, _) = forward(&x, p)?;
            cell.copy_from_slice(yhat.data());
            Ok::<_, TensorError>(())
        },
    )
}

/// Index of the largest element; the lowest index wins ties.
pub fn argmax(v: &[f32]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// Fraction of images whose most likely class equals the label.
pub fn evaluate(p: &Params, data: &MnistSet) -> Result<f64> {
    let out = predict_all(p, data)?;
    let correct = out
        .data()
        .chunks_exact(CLASSES)
        .zip(data.labels())
        .filter(|(yhat, &label)| argmax(yhat) == label as usize)
        .count();
    Ok(correct as f64 / data.len().max(1) as f64)
}

/// Mean loss over the whole set.
pub fn mean_loss(p: &Params, data: &MnistSet) -> Result<f32> {
    let out = predict_all(p, data)?;
    let mut total = 0.0f64;
    for (yhat, &label) in out.data().chunks_exact(CLASSES).zip(data.labels()) {
        let y = one_hot(label).expect("validated label");
        total += loss(&Tensor::vector(yhat.to_vec()), &y)? as f64;
    }
    Ok((total / data.len().max(1) as f64) as f32)
}

/// Runs `f` with `workers` threads available to comprehensions.
pub fn with_workers<R>(workers: usize, f: impl FnOnce() -> R) -> R {
    runtime::with_config(ExecConfig::new(workers), f)
}
