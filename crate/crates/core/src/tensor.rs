//! Rank-polymorphic dense arrays.
//!
//! A [`Tensor`] is a [`Shape`] plus a flat row-major buffer of `f32`. Scalars
//! are rank-0 tensors with one element. Every non-trivial array in this crate
//! is produced by a comprehension: a frame shape and a function from frame
//! index to cell, whose results are concatenated into a tensor of shape
//! `frame ++ cell`.

use std::fmt;

use thiserror::Error;

use crate::runtime::{self, ExecConfig};

/// Errors raised by shape checks in array operations and kernels.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("index of length {len} is too long for an array of rank {rank}")]
    IndexTooLong { len: usize, rank: usize },

    #[error("index {index} out of range on axis {axis} (extent {extent})")]
    IndexOutOfBounds {
        axis: usize,
        index: usize,
        extent: usize,
    },

    #[error("buffer of {len} elements does not fit shape {shape}")]
    DataLength { len: usize, shape: Shape },

    #[error("cannot reshape {from} ({from_len} elements) into {to} ({to_len} elements)")]
    Reshape {
        from: Shape,
        from_len: usize,
        to: Shape,
        to_len: usize,
    },

    #[error("cell at {index:?} has shape {found}, but cell at {first:?} has shape {expected}")]
    CellShape {
        first: Vec<usize>,
        expected: Shape,
        index: Vec<usize>,
        found: Shape,
    },

    #[error("{op}: unsupported shape {shape}: {reason}")]
    Unsupported {
        op: &'static str,
        shape: Shape,
        reason: &'static str,
    },

    #[error("{op}: shapes {left} and {right} are incompatible")]
    Mismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Per-axis extents. The empty shape is the shape of a scalar.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(extents: impl Into<Vec<usize>>) -> Self {
        Shape(extents.into())
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.0
    }

    /// Number of elements; 1 for a scalar.
    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides, in elements.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.rank()];
        for d in (0..self.rank().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.0[d + 1];
        }
        strides
    }

    /// `self ++ other`.
    pub fn concat(&self, other: &Shape) -> Shape {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Shape(v)
    }

    /// The axes after the first `n`.
    pub fn drop_front(&self, n: usize) -> Shape {
        Shape(self.0[n.min(self.rank())..].to_vec())
    }

    /// The axes before the last `n`.
    pub fn drop_back(&self, n: usize) -> Shape {
        Shape(self.0[..self.rank().saturating_sub(n)].to_vec())
    }

    /// Row-major offset of a full index. Caller guarantees it is in range.
    pub fn offset(&self, iv: &[usize]) -> usize {
        iv.iter().zip(&self.0).fold(0, |acc, (&i, &e)| acc * e + i)
    }

    /// Row-major offset of a (possibly partial) prefix index, after checking
    /// both selection constraints.
    pub fn checked_prefix_offset(&self, iv: &[usize]) -> Result<usize> {
        if iv.len() > self.rank() {
            return Err(TensorError::IndexTooLong {
                len: iv.len(),
                rank: self.rank(),
            });
        }
        for (axis, (&index, &extent)) in iv.iter().zip(&self.0).enumerate() {
            if index >= extent {
                return Err(TensorError::IndexOutOfBounds {
                    axis,
                    index,
                    extent,
                });
            }
        }
        let cell = self.drop_front(iv.len()).numel();
        Ok(self.offset(iv) * cell)
    }

    /// Inverse of [`Shape::offset`]; writes into `iv`.
    pub fn unravel_into(&self, mut flat: usize, iv: &mut [usize]) {
        for d in (0..self.rank()).rev() {
            let e = self.0[d];
            iv[d] = flat % e;
            flat /= e;
        }
    }
}

impl From<Vec<usize>> for Shape {
    fn from(v: Vec<usize>) -> Self {
        Shape(v)
    }
}

impl From<&[usize]> for Shape {
    fn from(v: &[usize]) -> Self {
        Shape(v.to_vec())
    }
}

impl<const N: usize> From<[usize; N]> for Shape {
    fn from(v: [usize; N]) -> Self {
        Shape(v.to_vec())
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Advances a row-major multi-index over `extents`. Returns false on wrap-around.
pub(crate) fn step_index(iv: &mut [usize], extents: &[usize]) -> bool {
    for d in (0..iv.len()).rev() {
        iv[d] += 1;
        if iv[d] < extents[d] {
            return true;
        }
        iv[d] = 0;
    }
    false
}

/// Elementwise binary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    #[inline]
    pub fn apply(self, a: f32, b: f32) -> f32 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

/// An immutable dense array of `f32` in row-major order.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: impl Into<Shape>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f32) -> Self {
        Tensor {
            shape: Shape::scalar(),
            data: vec![v],
        }
    }

    pub fn vector(v: impl Into<Vec<f32>>) -> Self {
        let data = v.into();
        Tensor {
            shape: Shape::new(vec![data.len()]),
            data,
        }
    }

    pub fn filled(shape: impl Into<Shape>, v: f32) -> Self {
        let shape = shape.into();
        let data = vec![v; shape.numel()];
        Tensor { shape, data }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.rank()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The flat row-major buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// The value of a rank-0 tensor, or the first element otherwise.
    pub fn as_scalar(&self) -> Option<f32> {
        (self.rank() == 0).then(|| self.data[0])
    }

    /// Prefix selection.
    ///
    /// A full-length index selects a scalar; a shorter one selects the
    /// sub-array over the remaining trailing axes; `[]` selects everything.
    pub fn select(&self, iv: &[usize]) -> Result<Tensor> {
        let start = self.shape.checked_prefix_offset(iv)?;
        let cell = self.shape.drop_front(iv.len());
        let end = start + cell.numel();
        Ok(Tensor {
            shape: cell,
            data: self.data[start..end].to_vec(),
        })
    }

    /// Borrowed buffer of the sub-array selected by `iv`.
    pub fn select_data(&self, iv: &[usize]) -> Result<&[f32]> {
        let start = self.shape.checked_prefix_offset(iv)?;
        let end = start + self.shape.drop_front(iv.len()).numel();
        Ok(&self.data[start..end])
    }

    /// Scalar at a full index.
    pub fn at(&self, iv: &[usize]) -> Result<f32> {
        if iv.len() != self.rank() {
            return Err(TensorError::Mismatch {
                op: "at",
                left: self.shape.clone(),
                right: Shape::new(vec![iv.len()]),
            });
        }
        Ok(self.data[self.shape.checked_prefix_offset(iv)?])
    }

    /// Same data, new shape; elements are not reordered.
    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Tensor> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: impl Into<Shape>) -> Result<Tensor> {
        let to = shape.into();
        if to.numel() != self.data.len() {
            return Err(TensorError::Reshape {
                from_len: self.shape.numel(),
                from: self.shape,
                to_len: to.numel(),
                to,
            });
        }
        Ok(Tensor {
            shape: to,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Elementwise `self op other`. `other` must have the same shape or be a
    /// rank-0 scalar, which is applied to every element.
    pub fn ew_map2(&self, other: &Tensor, op: BinOp) -> Result<Tensor> {
        if let Some(s) = other.as_scalar() {
            return Ok(self.map(|x| op.apply(x, s)));
        }
        self.zip_with(other, "ew_map2", |a, b| op.apply(a, b))
    }

    pub fn zip_with(
        &self,
        other: &Tensor,
        op: &'static str,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(TensorError::Mismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.ew_map2(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.ew_map2(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.ew_map2(other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.ew_map2(other, BinOp::Div)
    }

    /// Sum of all elements, accumulated left to right in row-major order.
    pub fn sum_all(&self) -> f32 {
        self.data.iter().fold(0.0f32, |acc, &x| acc + x)
    }

    /// Inner product of the flat buffers, accumulated in `f64`.
    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(TensorError::Mismatch {
                op: "dot",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        let d = self.zip_with(other, "max_abs_diff", |a, b| (a - b).abs())?;
        Ok(d.data.iter().fold(0.0f32, |m, &x| m.max(x)))
    }

    /// Bitwise equality of shape and data.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// `{ iv -> f(iv) | iv < frame }` with scalar cells.
    pub fn from_fn(frame: impl Into<Shape>, f: impl Fn(&[usize]) -> f32 + Sync) -> Tensor {
        let frame = frame.into();
        let r: Result<Tensor, std::convert::Infallible> =
            Self::build(frame, Shape::scalar(), |iv, cell| {
                cell[0] = f(iv);
                Ok(())
            });
        match r {
            Ok(t) => t,
            Err(never) => match never {},
        }
    }

    /// `{ iv -> f(iv) | iv < frame }`.
    ///
    /// The result has shape `frame ++ shape(f(iv))`. Every cell must have the
    /// same shape; the cell at the all-zeros index fixes it. For a frame with
    /// no elements the cell is taken to be a scalar; use
    /// [`Tensor::comprehend_cells`] to declare it instead.
    pub fn comprehend(
        frame: impl Into<Shape>,
        f: impl Fn(&[usize]) -> Tensor + Sync,
    ) -> Result<Tensor> {
        Self::try_comprehend(frame, |iv| Ok(f(iv)))
    }

    /// Like [`Tensor::comprehend`], for element functions that can fail.
    pub fn try_comprehend(
        frame: impl Into<Shape>,
        f: impl Fn(&[usize]) -> Result<Tensor> + Sync,
    ) -> Result<Tensor> {
        let frame = frame.into();
        if frame.numel() == 0 {
            return Ok(Tensor::zeros(frame));
        }
        let first = vec![0; frame.rank()];
        let cell = f(&first)?.shape;
        Self::build(frame, cell.clone(), |iv, out| {
            let t = f(iv)?;
            if t.shape != cell {
                return Err(TensorError::CellShape {
                    first: first.clone(),
                    expected: cell.clone(),
                    index: iv.to_vec(),
                    found: t.shape,
                });
            }
            out.copy_from_slice(&t.data);
            Ok(())
        })
    }

    /// Comprehension with a declared cell shape, writing cells in place.
    pub fn comprehend_cells(
        frame: impl Into<Shape>,
        cell: impl Into<Shape>,
        f: impl Fn(&[usize], &mut [f32]) + Sync,
    ) -> Tensor {
        let r: Result<Tensor, std::convert::Infallible> =
            Self::build(frame.into(), cell.into(), |iv, out| {
                f(iv, out);
                Ok(())
            });
        match r {
            Ok(t) => t,
            Err(never) => match never {},
        }
    }

    /// Core comprehension: evaluates `f(iv, cell)` for every frame index
    /// under the thread's current [`ExecConfig`].
    pub fn build<E: Send>(
        frame: Shape,
        cell: Shape,
        f: impl Fn(&[usize], &mut [f32]) -> Result<(), E> + Sync,
    ) -> Result<Tensor, E> {
        Self::build_with(runtime::current_config(), frame, cell, f)
    }

    pub fn build_with<E: Send>(
        cfg: ExecConfig,
        frame: Shape,
        cell: Shape,
        f: impl Fn(&[usize], &mut [f32]) -> Result<(), E> + Sync,
    ) -> Result<Tensor, E> {
        let cell_len = cell.numel();
        let data = runtime::parallel_chunks(frame.numel(), cell_len, cfg, |range, out| {
            let mut iv = vec![0; frame.rank()];
            frame.unravel_into(range.start, &mut iv);
            for k in 0..range.len() {
                f(&iv, &mut out[k * cell_len..(k + 1) * cell_len])?;
                step_index(&mut iv, frame.extents());
            }
            Ok(())
        })?;
        Ok(Tensor {
            shape: frame.concat(&cell),
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn shape_enquiry() {
        let b = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(b.shape().extents(), &[3, 2]);
        assert_eq!(Tensor::scalar(42.0).shape().extents(), &[] as &[usize]);
        let c = t(&[2, 2, 2], &[1., 2., 3., 4., 5., 6., 7., 8.]);
        assert_eq!(c.shape().extents(), &[2, 2, 2]);
        assert_eq!(Tensor::vector(vec![]).shape().extents(), &[0]);
        assert_eq!(Tensor::zeros([1, 0]).len(), 0);
    }

    #[test]
    fn selection() {
        let b = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(b.select(&[0]).unwrap(), Tensor::vector(vec![1., 2.]));
        assert!(b.select(&[]).unwrap().bit_eq(&b));
        assert_eq!(b.select(&[2, 1]).unwrap(), Tensor::scalar(6.0));
        assert_eq!(b.at(&[2, 1]).unwrap(), 6.0);
    }

    #[test]
    fn selection_errors() {
        let b = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(
            b.select(&[3]).unwrap_err(),
            TensorError::IndexOutOfBounds {
                axis: 0,
                index: 3,
                extent: 3
            }
        );
        assert_eq!(
            b.select(&[0, 2]).unwrap_err(),
            TensorError::IndexOutOfBounds {
                axis: 1,
                index: 2,
                extent: 2
            }
        );
        assert_eq!(
            b.select(&[0, 0, 0]).unwrap_err(),
            TensorError::IndexTooLong { len: 3, rank: 2 }
        );
    }

    #[test]
    fn comprehension_examples() {
        let ones = Tensor::comprehend([3], |_| Tensor::scalar(1.0)).unwrap();
        assert_eq!(ones, t(&[3], &[1., 1., 1.]));

        let rows = Tensor::comprehend([2], |_| Tensor::vector(vec![1., 2.])).unwrap();
        assert_eq!(rows, t(&[2, 2], &[1., 2., 1., 2.]));

        let a = t(&[1, 1], &[0.]);
        let inc = Tensor::comprehend(a.shape().clone(), |iv| {
            Tensor::scalar(a.at(iv).unwrap() + 1.0)
        })
        .unwrap();
        assert_eq!(inc, t(&[1, 1], &[1.]));
    }

    #[test]
    fn comprehension_rejects_ragged_cells() {
        let err = Tensor::comprehend([3], |iv| {
            Tensor::zeros(vec![if iv[0] == 2 { 3 } else { 2 }])
        })
        .unwrap_err();
        match err {
            TensorError::CellShape {
                first,
                expected,
                index,
                found,
            } => {
                assert_eq!(first, vec![0]);
                assert_eq!(expected, Shape::from([2]));
                assert_eq!(index, vec![2]);
                assert_eq!(found, Shape::from([3]));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_frame_defaults_to_scalar_cell() {
        let e = Tensor::comprehend([2, 0], |_| Tensor::zeros([4])).unwrap();
        assert_eq!(e.shape().extents(), &[2, 0]);
        let declared = Tensor::comprehend_cells([0], [4], |_, _| unreachable!());
        assert_eq!(declared.shape().extents(), &[0, 4]);
    }

    #[test]
    fn reshape_keeps_order() {
        let m = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(m.reshape([4]).unwrap(), t(&[4], &[1., 2., 3., 4.]));
        let s = Tensor::scalar(3.0);
        assert!(s.reshape(Shape::scalar()).unwrap().bit_eq(&s));
        let big = Tensor::from_fn([12, 1, 8, 8], |iv| iv[0] as f32 + iv[3] as f32);
        let flat = big.reshape([12, 8, 8]).unwrap();
        assert_eq!(flat.rank(), 3);
        assert_eq!(flat.data(), big.data());
        assert!(matches!(m.reshape([3]), Err(TensorError::Reshape { .. })));
    }

    #[test]
    fn elementwise() {
        let m = t(&[2, 2], &[1., 2., 3., 4.]);
        assert_eq!(
            m.add(&Tensor::scalar(1.0)).unwrap(),
            t(&[2, 2], &[2., 3., 4., 5.])
        );
        assert!(m.sub(&m).unwrap().data().iter().all(|&x| x == 0.0));
        let p = t(&[1, 2], &[1., 2.]).mul(&t(&[1, 2], &[3., 4.])).unwrap();
        assert_eq!(p, t(&[1, 2], &[3., 8.]));
        assert!(matches!(
            m.add(&t(&[4], &[0.; 4])),
            Err(TensorError::Mismatch { .. })
        ));
    }

    #[test]
    fn sums() {
        assert_eq!(t(&[2, 2], &[1., 2., 3., 4.]).sum_all(), 10.0);
        assert_eq!(Tensor::zeros([0]).sum_all(), 0.0);
        assert_eq!(Tensor::scalar(7.0).sum_all(), 7.0);
    }

    #[test]
    fn offsets_round_trip() {
        let s = Shape::from([3, 4, 5]);
        let mut iv = [0; 3];
        for flat in 0..s.numel() {
            s.unravel_into(flat, &mut iv);
            assert_eq!(s.offset(&iv), flat);
        }
        assert_eq!(s.strides(), vec![20, 5, 1]);
    }
}
