//! Dense n-axis arrays stored x-fastest over `[N, C, D, H, W]`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;

use crate::error::{Error, Result};

/// Floating-point element type of a tensor.
///
/// Implemented for `f32` (training default) and `f64` (verification mode).
pub trait Real:
    Float + Default + fmt::Debug + fmt::Display + Send + Sync + core::iter::Sum + 'static
{
    const NAME: &'static str;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    /// `c = alpha * a * b + beta * c` for row-major `a: m x k` with strides
    /// `(rsa, csa)`, `b: k x n` with `(rsb, csb)` and `c: m x n` with `(rsc, csc)`.
    ///
    /// # Safety
    /// Every addressed element of `a`, `b` and `c` must lie inside the
    /// corresponding allocation, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }
}

/// Tensor extents, at most five axes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 5 {
            return Err(Error::Rank { got: dims.len() });
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::ZeroExtent { axis });
        }
        Ok(Shape(dims.to_vec()))
    }

    /// The one-element shape used for scalars.
    pub fn scalar() -> Self {
        Shape(vec![1])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Extents as `[N, C, D, H, W]`; fails for tensors of another rank.
    pub fn dims5(&self) -> Result<[usize; 5]> {
        match self.0.as_slice() {
            &[n, c, d, h, w] => Ok([n, c, d, h, w]),
            _ => Err(Error::Rank { got: self.0.len() }),
        }
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::BufferLength { expected: shape.numel(), actual: data.len() });
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Tensor { shape, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn scalar(v: T) -> Self {
        Tensor { shape: Shape::scalar(), data: vec![v] }
    }

    pub fn from_f64(dims: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(dims, data.iter().map(|&v| T::of(v)).collect())
    }

    pub(crate) fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor { shape, data }
    }

    pub(crate) fn zeros_like_shape(shape: &Shape) -> Self {
        Tensor { shape: shape.clone(), data: vec![T::zero(); shape.numel()] }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::NotScalar { shape: self.shape.clone() })
        }
    }

    pub fn reshape(self, dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn sum(&self) -> T {
        sum_fixed(&self.data)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|v| U::of(v.f64())).collect() }
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor<T>) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Copies channels `start..start + len` of a 5-axis tensor.
    pub fn slice_channels(&self, start: usize, len: usize) -> Result<Self> {
        let [n, c, d, h, w] = self.shape.dims5()?;
        if len == 0 || start + len > c {
            return Err(Error::ChannelRange { start, len, channels: c });
        }
        let vox = d * h * w;
        let mut data = Vec::with_capacity(n * len * vox);
        for b in 0..n {
            let base = (b * c + start) * vox;
            data.extend_from_slice(&self.data[base..base + len * vox]);
        }
        Ok(Tensor { shape: Shape(vec![n, len, d, h, w]), data })
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.f64() - b.f64()).abs())
            .fold(0.0, f64::max)
    }
}

/// Sum with a fixed pairwise tree, independent of how callers split work.
pub fn sum_fixed<T: Real>(xs: &[T]) -> T {
    const LEAF: usize = 256;
    if xs.len() <= LEAF {
        let mut acc = T::zero();
        for &x in xs {
            acc = acc + x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        sum_fixed(&xs[..mid]) + sum_fixed(&xs[mid..])
    }
}

/// Safe `c = alpha * a * b + beta * c` over dense matrices with explicit strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    alpha: T,
    a: &[T],
    (rsa, csa): (usize, usize),
    b: &[T],
    (rsb, csb): (usize, usize),
    beta: T,
    c: &mut [T],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |r: usize, cc: usize, rows: usize, cols: usize| (rows - 1) * r + (cols - 1) * cc;
    if k > 0 {
        assert!(last(rsa, csa, m, k) < a.len(), "gemm: a out of bounds");
        assert!(last(rsb, csb, k, n) < b.len(), "gemm: b out of bounds");
    }
    assert!(last(rsc, csc, m, n) < c.len(), "gemm: c out of bounds");
    // SAFETY: bounds checked above; `c` is a distinct &mut borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_rejects_zero_and_rank() {
        assert!(matches!(Shape::new(&[1, 0, 2]), Err(Error::ZeroExtent { axis: 1 })));
        assert!(Shape::new(&[]).is_err());
        assert!(Shape::new(&[1, 1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn buffer_length_checked() {
        let err = Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::BufferLength { expected: 6, actual: 5 }));
    }

    #[test]
    fn fixed_sum_matches_naive_on_small_ints() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(sum_fixed(&xs), 499500.0);
    }

    #[test]
    fn gemm_small() {
        // [1 2; 3 4] * [5 6; 7 8]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        gemm(2, 2, 2, 1.0, &a, (2, 1), &b, (2, 1), 0.0, &mut c, (2, 1));
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }
}
