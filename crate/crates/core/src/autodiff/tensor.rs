use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor of rank 0, 1 or 2.
///
/// Values are immutable once built and may be shared freely across threads.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor, rejecting length mismatches and non-finite values.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let t = Self::new_allow_nonfinite(shape, data)?;
        if !t.is_finite() {
            return Err(Error::NonFinite { op: "tensor" });
        }
        Ok(t)
    }

    /// Like [`Tensor::new`] but accepts NaN and infinities.
    pub fn new_allow_nonfinite(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.len() > 2 {
            return Err(Error::dim("tensor", "rank <= 2", format!("rank {}", shape.len())));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("{expected} values for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for kernels whose output shape is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(v: T) -> Self {
        Self::from_parts(Vec::new(), vec![v])
    }

    pub fn vector(data: Vec<T>) -> Self {
        Self::from_parts(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(&[rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self::from_parts(shape.to_vec(), vec![v; shape.iter().product()])
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    /// Builds a matrix by stacking equally long rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(&[rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Number of rows of a matrix; vectors count as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Number of columns of a matrix, or the length of a vector.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// The single value of a tensor holding exactly one element.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::dim("item", "1 element", self.data.len()));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.len() > 2 {
            return Err(Error::dim(
                "reshape",
                format!("{} values", self.data.len()),
                format!("{shape:?}"),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Copies the rows at `indices` into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::from_parts(vec![indices.len(), c], data)
    }

    /// Column block `[start, start + width)` of a matrix.
    pub fn columns(&self, start: usize, width: usize) -> Result<Self> {
        let c = self.cols();
        if start + width > c {
            return Err(Error::dim("columns", format!("<= {c} columns"), start + width));
        }
        let r = self.rows();
        let mut data = Vec::with_capacity(r * width);
        for i in 0..r {
            data.extend_from_slice(&self.row(i)[start..start + width]);
        }
        Ok(Self::from_parts(vec![r, width], data))
    }

    pub fn transpose(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                data.push(self.data[i * c + j]);
            }
        }
        Self::from_parts(vec![c, r], data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.shape, other.shape);
        Self::from_parts(
            self.shape.clone(),
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.rank() != 2 || other.rank() != 2 || self.shape[1] != other.shape[0] {
            return Err(Error::dim(
                "matmul",
                format!("[m,k] x [k,n], lhs {:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        let (m, k, n) = (self.shape[0], self.shape[1], other.shape[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(
            Mat::plain(&self.data, m, k),
            Mat::plain(&other.data, k, n),
            T::zero(),
            &mut out,
        );
        Ok(Self::from_parts(vec![m, n], out))
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &Self) -> Result<Self> {
        if self.rank() != 2 || v.rank() != 1 || self.shape[1] != v.shape[0] {
            return Err(Error::dim(
                "matvec",
                format!("[m,k] x [k], matrix {:?}", self.shape),
                format!("{:?}", v.shape),
            ));
        }
        let data = (0..self.shape[0]).map(|i| dot(self.row(i), &v.data)).collect();
        Ok(Self::from_parts(vec![self.shape[0]], data))
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Borrowed matrix operand, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    data: &'a [T],
    /// Logical rows/cols after applying `trans`.
    rows: usize,
    cols: usize,
    trans: bool,
}

impl<'a, T> Mat<'a, T> {
    pub(crate) fn plain(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self {
            data,
            rows,
            cols,
            trans: false,
        }
    }

    /// Logical transpose of a stored `rows x cols` matrix.
    pub(crate) fn transposed(data: &'a [T], stored_rows: usize, stored_cols: usize) -> Self {
        Self {
            data,
            rows: stored_cols,
            cols: stored_rows,
            trans: true,
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.trans {
            (1, self.rows as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out <- a * b + beta * out` with `out` stored row-major.
pub(crate) fn gemm<T: Scalar>(a: Mat<'_, T>, b: Mat<'_, T>, beta: T, out: &mut [T]) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "gemm inner dimension");
    assert_eq!(a.data.len(), m * k, "gemm lhs length");
    assert_eq!(b.data.len(), k * n, "gemm rhs length");
    assert_eq!(out.len(), m * n, "gemm output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        out.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: lengths were checked against the logical shapes above, the
    // strides address exactly those elements, and `out` is a distinct
    // mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_nonfinite() {
        assert!(Tensor::<f64>::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(matches!(
            Tensor::<f64>::new(&[1], vec![f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
        assert!(Tensor::<f64>::new_allow_nonfinite(&[1], vec![f64::INFINITY]).is_ok());
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::matrix(3, 1, vec![1.0, 0.0, -1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[-2.0, -2.0]);
    }

    #[test]
    fn transposed_operand_reads_columns() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2 x 3
        let mut out = vec![0.0; 9];
        gemm(Mat::transposed(&a, 2, 3), Mat::plain(&a, 2, 3), 0.0, &mut out);
        // a^T a
        assert_eq!(out, vec![17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }

    #[test]
    fn empty_inner_dimension_scales_output() {
        let mut out = vec![2.0; 4];
        gemm::<f64>(Mat::plain(&[], 2, 0), Mat::plain(&[], 0, 2), 0.5, &mut out);
        assert_eq!(out, vec![1.0; 4]);
    }
}
