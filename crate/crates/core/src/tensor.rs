//! Dense row-major `f64` tensors with size-1 broadcasting and axis reductions.
//!
//! Every constructor and operation rejects non-finite values, so a NaN or
//! infinity surfaces as an error at the operation that produced it.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {lhs:?} vs {rhs:?}")]
    Shape { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
}

/// Which axes of a tensor are collapsed to size 1 and shared.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AxisMask(Vec<bool>);

impl AxisMask {
    pub fn new(reduced: Vec<bool>) -> Self {
        Self(reduced)
    }

    /// No axis reduced.
    pub fn none(rank: usize) -> Self {
        Self(vec![false; rank])
    }

    /// Every axis reduced.
    pub fn all(rank: usize) -> Self {
        Self(vec![true; rank])
    }

    /// Reduce exactly the listed axes.
    pub fn axes(rank: usize, axes: &[usize]) -> Result<Self, TensorError> {
        let mut reduced = vec![false; rank];
        for &a in axes {
            if a >= rank {
                return Err(TensorError::InvalidArgument(format!(
                    "axis {a} out of range for rank {rank}"
                )));
            }
            reduced[a] = true;
        }
        Ok(Self(reduced))
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn is_reduced(&self, axis: usize) -> bool {
        self.0[axis]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Shape of a slot variable for a tensor of `shape` under this mask.
    pub fn reduced_shape(&self, shape: &[usize]) -> Result<Vec<usize>, TensorError> {
        if shape.len() != self.rank() {
            return Err(TensorError::InvalidArgument(format!(
                "mask rank {} does not match tensor rank {}",
                self.rank(),
                shape.len()
            )));
        }
        Ok(shape
            .iter()
            .zip(&self.0)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect())
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn check_finite(data: &[f64], op: &'static str) -> Result<(), TensorError> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite(op))
    }
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Strides into a tensor of `shape` when iterated over `out_shape`; size-1
/// axes that are stretched get stride 0.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    row_major_strides(shape)
        .into_iter()
        .zip(shape.iter().zip(out_shape))
        .map(|(s, (&d, &o))| if d == 1 && o != 1 { 0 } else { s })
        .collect()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::InvalidArgument(format!(
                "dimension sizes must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::InvalidArgument(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_finite(&data, "construction")?;
        Ok(Self { shape, data })
    }

    /// Rank-1 tensor over `data`.
    pub fn vector(data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![data.len()], data)
    }

    /// Rank-0 tensor holding one value.
    pub fn scalar(value: f64) -> Result<Self, TensorError> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self, TensorError> {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0).expect("zeros: dimension sizes must be positive")
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0).expect("ones: dimension sizes must be positive")
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn ones_like(other: &Tensor) -> Self {
        Self {
            shape: other.shape.clone(),
            data: vec![1.0; other.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Replaces the contents in place; the new data must match the shape
    /// and be finite.
    pub fn assign(&mut self, data: &[f64]) -> Result<(), TensorError> {
        if data.len() != self.data.len() {
            return Err(TensorError::InvalidArgument(format!(
                "assign: expected {} values, got {}",
                self.data.len(),
                data.len()
            )));
        }
        check_finite(data, "assign")?;
        self.data.copy_from_slice(data);
        Ok(())
    }

    /// Single value of a tensor with exactly one element.
    pub fn item(&self) -> Result<f64, TensorError> {
        match self.data.as_slice() {
            [x] => Ok(*x),
            _ => Err(TensorError::InvalidArgument(format!(
                "item() on tensor with {} elements",
                self.data.len()
            ))),
        }
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self, TensorError> {
        let data: Vec<f64> = self.data.iter().map(|&x| f(x)).collect();
        check_finite(&data, "map")?;
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Result<Self, TensorError> {
        self.map(|x| c * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> Result<f64, TensorError> {
        if self.data.is_empty() {
            return Err(TensorError::InvalidArgument("mean of empty tensor".into()));
        }
        Ok(self.sum() / self.data.len() as f64)
    }

    /// Quadratic mean of all entries, `sqrt(mean(x^2))`.
    pub fn m2(&self) -> Result<f64, TensorError> {
        if self.data.is_empty() {
            return Err(TensorError::InvalidArgument("m2 of empty tensor".into()));
        }
        let ss: f64 = self.data.iter().map(|x| x * x).sum();
        let out = (ss / self.data.len() as f64).sqrt();
        if out.is_finite() {
            Ok(out)
        } else {
            Err(TensorError::NonFinite("m2"))
        }
    }

    /// Mean of `f(x)` over each slice collapsed by `mask`. Accumulation walks
    /// the source in row-major order, so the summation order is fixed.
    fn reduce_mean_over_axes(
        &self,
        mask: &AxisMask,
        f: impl Fn(f64) -> f64,
        op: &'static str,
    ) -> Result<Self, TensorError> {
        let out_shape = mask.reduced_shape(&self.shape)?;
        let out_strides = broadcast_strides(&out_shape, &self.shape);
        let mut acc = vec![0.0; out_shape.iter().product()];
        let mut index = vec![0usize; self.rank()];
        let mut out_pos = 0usize;
        for &x in &self.data {
            acc[out_pos] += f(x);
            // Advance the multi-index, tracking the output offset.
            for axis in (0..index.len()).rev() {
                index[axis] += 1;
                out_pos += out_strides[axis];
                if index[axis] < self.shape[axis] {
                    break;
                }
                out_pos -= out_strides[axis] * index[axis];
                index[axis] = 0;
            }
        }
        let count = (self.data.len() / acc.len()) as f64;
        for a in &mut acc {
            *a /= count;
        }
        check_finite(&acc, op)?;
        Ok(Self {
            shape: out_shape,
            data: acc,
        })
    }

    /// Mean of squares over each collapsed slice, at the reduced shape.
    pub fn mean_square_over_axes(&self, mask: &AxisMask) -> Result<Self, TensorError> {
        self.reduce_mean_over_axes(mask, |x| x * x, "mean_square_over_axes")
    }

    /// Quadratic mean over each collapsed slice; masked axes become size 1.
    pub fn m2_over_axes(&self, mask: &AxisMask) -> Result<Self, TensorError> {
        self.mean_square_over_axes(mask)?.map(f64::sqrt)
    }

    /// Arithmetic mean over each collapsed slice.
    pub fn mean_over_axes(&self, mask: &AxisMask) -> Result<Self, TensorError> {
        self.reduce_mean_over_axes(mask, |x| x, "mean_over_axes")
    }

    /// Shape produced by broadcasting `a` against `b` (equal rank, size-1 axes
    /// stretch).
    pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>, TensorError> {
        let mismatch = || TensorError::Shape {
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        };
        if a.len() != b.len() {
            return Err(mismatch());
        }
        a.iter()
            .zip(b)
            .map(|(&x, &y)| match (x, y) {
                _ if x == y => Ok(x),
                (1, y) => Ok(y),
                (x, 1) => Ok(x),
                _ => Err(mismatch()),
            })
            .collect()
    }

    /// Element-wise `op(a, b)` with size-1 axes stretched.
    pub fn broadcast_binary(
        op: impl Fn(f64, f64) -> f64,
        a: &Tensor,
        b: &Tensor,
    ) -> Result<Tensor, TensorError> {
        if a.shape == b.shape {
            let data: Vec<f64> = a.data.iter().zip(&b.data).map(|(&x, &y)| op(x, y)).collect();
            check_finite(&data, "broadcast_binary")?;
            return Ok(Tensor {
                shape: a.shape.clone(),
                data,
            });
        }
        let out_shape = Self::broadcast_shape(&a.shape, &b.shape)?;
        let sa = broadcast_strides(&a.shape, &out_shape);
        let sb = broadcast_strides(&b.shape, &out_shape);
        let n: usize = out_shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut index = vec![0usize; out_shape.len()];
        let (mut pa, mut pb) = (0usize, 0usize);
        for _ in 0..n {
            data.push(op(a.data[pa], b.data[pb]));
            for axis in (0..index.len()).rev() {
                index[axis] += 1;
                pa += sa[axis];
                pb += sb[axis];
                if index[axis] < out_shape[axis] {
                    break;
                }
                pa -= sa[axis] * index[axis];
                pb -= sb[axis] * index[axis];
                index[axis] = 0;
            }
        }
        check_finite(&data, "broadcast_binary")?;
        Ok(Tensor {
            shape: out_shape,
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        Self::broadcast_binary(|x, y| x + y, self, other)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        Self::broadcast_binary(|x, y| x - y, self, other)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        Self::broadcast_binary(|x, y| x * y, self, other)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        Self::broadcast_binary(|x, y| x / y, self, other)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn m2_examples() {
        assert_eq!(t(&[4], &[1.0; 4]).m2().unwrap(), 1.0);
        assert_eq!(t(&[3], &[0.0; 3]).m2().unwrap(), 0.0);
        assert_eq!(t(&[2], &[3.0, 4.0]).m2().unwrap(), 3.5355339059327378);
    }

    #[test]
    fn empty_and_bad_shapes_are_rejected() {
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(TensorError::InvalidArgument(_))
        ));
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::vector(vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite(_))
        ));
    }

    #[test]
    fn overflow_raises_instead_of_propagating() {
        let big = t(&[1], &[1e308]);
        assert_eq!(big.scale(10.0), Err(TensorError::NonFinite("map")));
        assert!(big.add(&big).is_err());
    }

    #[test]
    fn m2_over_axes_examples() {
        let x = t(&[2, 2], &[1.0; 4]);
        let r = x.m2_over_axes(&AxisMask::axes(2, &[0]).unwrap()).unwrap();
        assert_eq!(r, t(&[1, 2], &[1.0, 1.0]));

        let x = t(&[2, 1], &[3.0, 4.0]);
        let r = x.m2_over_axes(&AxisMask::axes(2, &[0]).unwrap()).unwrap();
        assert_eq!(r, t(&[1, 1], &[3.5355339059327378]));

        let x = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.25, -7.0]);
        let r = x.m2_over_axes(&AxisMask::none(2)).unwrap();
        assert_eq!(r.shape(), x.shape());
        for (a, b) in r.data().iter().zip(x.data()) {
            assert_eq!(*a, b.abs());
        }
    }

    #[test]
    fn m2_over_axes_middle_axis() {
        // shape 2x3x2, reduce axis 1: slice (i, :, k)
        let data: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let x = t(&[2, 3, 2], &data);
        let r = x.m2_over_axes(&AxisMask::axes(3, &[1]).unwrap()).unwrap();
        assert_eq!(r.shape(), &[2, 1, 2]);
        let expect = |vals: [f64; 3]| (vals.iter().map(|v| v * v).sum::<f64>() / 3.0).sqrt();
        assert_eq!(r.data()[0], expect([0.0, 2.0, 4.0]));
        assert_eq!(r.data()[1], expect([1.0, 3.0, 5.0]));
        assert_eq!(r.data()[2], expect([6.0, 8.0, 10.0]));
        assert_eq!(r.data()[3], expect([7.0, 9.0, 11.0]));
    }

    #[test]
    fn mask_rank_mismatch() {
        let x = t(&[2, 2], &[1.0; 4]);
        assert!(matches!(
            x.m2_over_axes(&AxisMask::none(3)),
            Err(TensorError::InvalidArgument(_))
        ));
        assert!(AxisMask::axes(2, &[2]).is_err());
    }

    #[test]
    fn broadcast_examples() {
        let a = t(&[1, 2], &[1.0, 2.0]);
        let b = t(&[2, 1], &[10.0, 20.0]);
        assert_eq!(a.add(&b).unwrap(), t(&[2, 2], &[11.0, 12.0, 21.0, 22.0]));

        let x = t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.25, -7.0]);
        assert_eq!(x.mul(&Tensor::ones_like(&x)).unwrap(), x);
        assert_eq!(x.add(&Tensor::zeros(&[1, 1])).unwrap(), x);

        assert!(matches!(
            t(&[2, 3], &[0.0; 6]).add(&t(&[3, 2], &[0.0; 6])),
            Err(TensorError::Shape { .. })
        ));
        assert!(t(&[2], &[0.0; 2]).add(&t(&[1, 2], &[0.0; 2])).is_err());
    }

    fn tensor_strategy() -> impl Strategy<Value = Tensor> {
        prop::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
            let n: usize = shape.iter().product();
            prop::collection::vec(-100.0f64..100.0, n)
                .prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn all_axes_reduction_equals_m2(x in tensor_strategy()) {
            let r = x.m2_over_axes(&AxisMask::all(x.rank())).unwrap();
            prop_assert_eq!(r.len(), 1);
            let full = x.m2().unwrap();
            prop_assert!((r.data()[0] - full).abs() <= 1e-12 * full.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn m2_is_positively_homogeneous(x in tensor_strategy(), c in -50.0f64..50.0) {
            let lhs = x.scale(c).unwrap().m2().unwrap();
            let rhs = c.abs() * x.m2().unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(f64::MIN_POSITIVE));
        }

        #[test]
        fn full_shape_broadcast_is_identity(x in tensor_strategy()) {
            let y = Tensor::broadcast_binary(|a, _| a, &x, &Tensor::zeros_like(&x)).unwrap();
            prop_assert_eq!(y.data(), x.data());
            let z = Tensor::broadcast_binary(|_, b| b, &Tensor::zeros(&vec![1; x.rank()]), &x).unwrap();
            prop_assert_eq!(z.data(), x.data());
        }
    }
}
