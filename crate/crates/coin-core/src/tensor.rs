//! Dense row-major `f64` matrices and the parameter/gradient pair used by the
//! hand-coded backward passes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("data length {len} does not match {rows}x{cols}")]
    BadLength { len: usize, rows: usize, cols: usize },
}

/// Dense matrix, row-major, always `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::BadLength { len: data.len(), rows, cols });
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Build from nested rows; panics on ragged input (test/fixture helper).
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: r, cols: c, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Largest absolute entrywise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self * other`, (n x a)(a x b) -> (n x b). ikj loop order keeps the
    /// inner updates contiguous so the compiler vectorizes them.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (n, a, b) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(n, b);
        for i in 0..n {
            let x_row = &self.data[i * a..(i + 1) * a];
            let out_row = &mut out.data[i * b..(i + 1) * b];
            for (k, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let w_row = &other.data[k * b..(k + 1) * b];
                for (o, &wv) in out_row.iter_mut().zip(w_row) {
                    *o += xv * wv;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * other`, (n x a)^T (n x b) -> (a x b). Used for weight
    /// gradients `dW = X^T dOut`.
    pub fn matmul_tn(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.rows != other.rows {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_tn",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (n, a, b) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(a, b);
        for i in 0..n {
            let x_row = &self.data[i * a..(i + 1) * a];
            let d_row = &other.data[i * b..(i + 1) * b];
            for (k, &xv) in x_row.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[k * b..(k + 1) * b];
                for (o, &dv) in out_row.iter_mut().zip(d_row) {
                    *o += xv * dv;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`, (n x b)(a x b)^T -> (n x a). Used for input
    /// gradients `dX = dOut W^T`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor, TensorError> {
        if self.cols != other.cols {
            return Err(TensorError::ShapeMismatch {
                op: "matmul_nt",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (n, b, a) = (self.rows, self.cols, other.rows);
        let mut out = Tensor::zeros(n, a);
        for i in 0..n {
            let d_row = &self.data[i * b..(i + 1) * b];
            let out_row = &mut out.data[i * a..(i + 1) * a];
            for (k, o) in out_row.iter_mut().enumerate() {
                let w_row = &other.data[k * b..(k + 1) * b];
                let mut acc = 0.0;
                for (&dv, &wv) in d_row.iter().zip(w_row) {
                    acc += dv * wv;
                }
                *o = acc;
            }
        }
        Ok(out)
    }
}

/// A value tensor paired with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Param { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Compressed sparse row view of a feature matrix. Bag-of-words features are
/// mostly zero; the input layer runs over the nonzeros only.
#[derive(Debug, Clone)]
pub struct CsrFeatures {
    pub rows: usize,
    pub cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrFeatures {
    pub fn from_dense(x: &Tensor) -> Self {
        let (rows, cols) = x.shape();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..rows {
            for (j, &v) in x.row(i).iter().enumerate() {
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        CsrFeatures { rows, cols, indptr, indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let w = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(eye.matmul(&w).unwrap(), w);
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let a = Tensor::zeros(2, 3);
        let b = Tensor::zeros(2, 3);
        assert!(a.matmul(&b).is_err());
    }

    #[test]
    fn transpose_variants_agree_with_naive() {
        let a = Tensor::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.0, 1.0]]);
        let b = Tensor::from_rows(&[vec![2.0, 1.0], vec![-1.0, 0.0], vec![4.0, -3.0]]);
        let ab = a.matmul(&b).unwrap();
        // (A B)^T = B^T A^T checked entrywise through the tn/nt kernels
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += a.get(i, k) * b.get(k, j);
                }
                assert!((ab.get(i, j) - acc).abs() < 1e-15);
            }
        }
        let atb = a.matmul_tn(&ab).unwrap(); // A^T (A B)
        assert_eq!(atb.shape(), (3, 2));
        let abt = ab.matmul_nt(&b).unwrap(); // (A B) B^T -> n x 3
        assert_eq!(abt.shape(), (2, 3));
    }

    #[test]
    fn csr_from_dense_roundtrip() {
        let x = Tensor::from_rows(&[vec![0.0, 1.5, 0.0], vec![2.0, 0.0, 0.0]]);
        let s = CsrFeatures::from_dense(&x);
        assert_eq!(s.nnz(), 2);
        assert_eq!(s.indptr, vec![0, 1, 2]);
        assert_eq!(s.indices, vec![1, 0]);
        assert_eq!(s.values, vec![1.5, 2.0]);
    }
}
