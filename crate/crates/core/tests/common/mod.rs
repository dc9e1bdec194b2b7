//! Test-only reference implementations.
//!
//! Everything here uses plain `f64` nested loops over explicit index
//! enumeration and shares no code with the library kernels.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tensorloom::Tensor;

/// Dense f64 array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Nd {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// All indices of `shape` in row-major order.
pub fn indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &e in shape {
        let mut next = Vec::new();
        for prefix in &out {
            for i in 0..e {
                let mut p = prefix.clone();
                p.push(i);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn flat(shape: &[usize], iv: &[usize]) -> usize {
    let mut off = 0;
    for (d, &i) in iv.iter().enumerate() {
        assert!(i < shape[d], "oracle index out of range");
        off = off * shape[d] + i;
    }
    off
}

impl Nd {
    pub fn zeros(shape: &[usize]) -> Nd {
        Nd {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Nd {
        Nd {
            shape: t.shape().extents().to_vec(),
            data: t.data().iter().map(|&x| x as f64).collect(),
        }
    }

    pub fn get(&self, iv: &[usize]) -> f64 {
        self.data[flat(&self.shape, iv)]
    }

    pub fn set(&mut self, iv: &[usize], v: f64) {
        let o = flat(&self.shape, iv);
        self.data[o] = v;
    }

    /// Sub-array at the first index.
    pub fn row(&self, i: usize) -> Nd {
        let inner: usize = self.shape[1..].iter().product();
        Nd {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }

    pub fn stack(rows: &[Nd]) -> Nd {
        let mut shape = vec![rows.len()];
        shape.extend(&rows[0].shape);
        Nd {
            shape,
            data: rows.iter().flat_map(|r| r.data.clone()).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Nd {
        Nd {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn dot(&self, other: &Nd) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }
}

pub fn max_abs_diff(t: &Tensor, nd: &Nd) -> f64 {
    assert_eq!(
        t.shape().extents(),
        nd.shape.as_slice(),
        "shape mismatch against oracle"
    );
    t.data()
        .iter()
        .zip(&nd.data)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0, f64::max)
}

/// `out[iv] = sum_ov I[iv + ov] * k[ov]`.
pub fn conv(input: &Nd, k: &Nd) -> Nd {
    let out_shape: Vec<usize> = input
        .shape
        .iter()
        .zip(&k.shape)
        .map(|(&i, &kk)| i - kk + 1)
        .collect();
    let mut out = Nd::zeros(&out_shape);
    for iv in indices(&out_shape) {
        let mut s = 0.0;
        for ov in indices(&k.shape) {
            let pos: Vec<usize> = iv.iter().zip(&ov).map(|(a, b)| a + b).collect();
            s += input.get(&pos) * k.get(&ov);
        }
        out.set(&iv, s);
    }
    out
}

pub fn mconv(input: &Nd, k: &Nd, b: &Nd) -> Nd {
    let rows: Vec<Nd> = (0..b.shape[0])
        .map(|i| conv(input, &k.row(i)).map(|x| x + b.data[i]))
        .collect();
    Nd::stack(&rows)
}

pub fn sigmoid(x: &Nd) -> Nd {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

/// Mean of each 2x2 block on the trailing two axes.
pub fn avgpool(x: &Nd) -> Nd {
    let r = x.shape.len();
    let mut out_shape = x.shape.clone();
    out_shape[r - 2] /= 2;
    out_shape[r - 1] /= 2;
    let mut out = Nd::zeros(&out_shape);
    for iv in indices(&out_shape) {
        let mut s = 0.0;
        for dy in 0..2 {
            for dx in 0..2 {
                let mut src = iv.clone();
                src[r - 2] = 2 * iv[r - 2] + dy;
                src[r - 1] = 2 * iv[r - 1] + dx;
                s += x.get(&src);
            }
        }
        out.set(&iv, s / 4.0);
    }
    out
}

pub fn backavgpool(d: &Nd) -> Nd {
    let r = d.shape.len();
    let mut out_shape = d.shape.clone();
    out_shape[r - 2] *= 2;
    out_shape[r - 1] *= 2;
    let mut out = Nd::zeros(&out_shape);
    for iv in indices(&out_shape) {
        let mut src = iv.clone();
        src[r - 2] /= 2;
        src[r - 1] /= 2;
        out.set(&iv, d.get(&src) / 4.0);
    }
    out
}

/// Full convolution: embed `d` in zeros padded by `k - 1` on both sides of
/// every axis, then correlate with the flipped kernel.
pub fn backin_zero_pad(d: &Nd, k: &Nd) -> Nd {
    let pad_shape: Vec<usize> = d
        .shape
        .iter()
        .zip(&k.shape)
        .map(|(&dd, &kk)| dd + 2 * (kk - 1))
        .collect();
    let mut padded = Nd::zeros(&pad_shape);
    for iv in indices(&d.shape) {
        let pos: Vec<usize> = iv
            .iter()
            .zip(&k.shape)
            .map(|(&i, &kk)| i + kk - 1)
            .collect();
        padded.set(&pos, d.get(&iv));
    }
    let mut flipped = Nd::zeros(&k.shape);
    for iv in indices(&k.shape) {
        let pos: Vec<usize> = iv
            .iter()
            .zip(&k.shape)
            .map(|(&i, &kk)| kk - 1 - i)
            .collect();
        flipped.set(&pos, k.get(&iv));
    }
    conv(&padded, &flipped)
}

/// Loss of the whole network in f64, from parameters given as f64 arrays.
pub struct NetF64 {
    pub params: Vec<Nd>,
}

impl NetF64 {
    pub fn from_params(p: &tensorloom::Params) -> NetF64 {
        NetF64 {
            params: p.tensors().iter().map(|t| Nd::from_tensor(t)).collect(),
        }
    }

    pub fn forward(&self, input: &Nd) -> Nd {
        let [k1, b1, k2, b2, fc, b] = [0, 1, 2, 3, 4, 5].map(|i| &self.params[i]);
        let c1 = sigmoid(&mconv(input, k1, b1));
        let s1 = avgpool(&c1);
        let c2 = sigmoid(&mconv(&s1, k2, b2));
        let s2 = avgpool(&c2);
        sigmoid(&mconv(&s2, fc, b))
    }

    pub fn loss(&self, input: &Nd, y: &[f64]) -> f64 {
        let out = self.forward(input);
        out.data
            .iter()
            .zip(y)
            .map(|(o, t)| 0.5 * (t - o) * (t - o))
            .sum()
    }
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn random_shape(rng: &mut impl Rng, rank: usize, max: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.gen_range(1..=max)).collect()
}

/// Directory holding the IDX fixture files used by the end-to-end checks.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("TENSORLOOM_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
        })
}
