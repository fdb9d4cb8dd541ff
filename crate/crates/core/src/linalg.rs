//! Minimal dense linear algebra for adapter math and the toy harness.
//!
//! Values are stored as `f64` and all reductions accumulate in `f64`; the
//! float32 storage path (checkpoints, weight containers) goes through
//! [`Matrix::round_to_f32`] / [`Vector::round_to_f32`]. Shapes here are tiny,
//! so there is no BLAS and no blocking — plain loops are both fast enough
//! and easy to audit.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting length mismatches and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite matrix entry {v}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested row slices (test and example helper).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimMismatch("ragged rows".into()));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Borrow row `i` as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `M x`, accumulated in f64. Output length is `rows`.
    pub fn matvec(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "matvec: {}x{} with vector of length {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x.data()) {
                acc += a * b;
            }
            *o = acc;
        }
        Ok(Vector { data: out })
    }

    /// `Mᵀ y` without materializing the transpose.
    pub fn matvec_t(&self, y: &Vector) -> Result<Vector> {
        if y.len() != self.rows {
            return Err(Error::DimMismatch(format!(
                "matvec_t: {}x{} with vector of length {}",
                self.rows,
                self.cols,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let yi = y.data()[i];
            if yi == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += self.data[i * self.cols + j] * yi;
            }
        }
        Ok(Vector { data: out })
    }

    /// Rank-one update `self += scale · y xᵀ`.
    pub fn add_outer(&mut self, y: &Vector, x: &Vector, scale: f64) -> Result<()> {
        if y.len() != self.rows || x.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "outer accumulate: acc {}x{}, y {} x {}",
                self.rows,
                self.cols,
                y.len(),
                x.len()
            )));
        }
        for i in 0..self.rows {
            let s = scale * y.data()[i];
            for j in 0..self.cols {
                self.data[i * self.cols + j] += s * x.data()[j];
            }
        }
        Ok(())
    }

    /// Copy of the first `k` rows.
    pub fn slice_rows(&self, k: usize) -> Result<Matrix> {
        if k == 0 || k > self.rows {
            return Err(Error::InvalidParameter(format!(
                "slice_rows: k={k} not in 1..={}",
                self.rows
            )));
        }
        Ok(Matrix {
            rows: k,
            cols: self.cols,
            data: self.data[..k * self.cols].to_vec(),
        })
    }

    /// Copy of the first `k` columns.
    pub fn slice_cols(&self, k: usize) -> Result<Matrix> {
        if k == 0 || k > self.cols {
            return Err(Error::InvalidParameter(format!(
                "slice_cols: k={k} not in 1..={}",
                self.cols
            )));
        }
        let mut data = Vec::with_capacity(self.rows * k);
        for i in 0..self.rows {
            data.extend_from_slice(&self.data[i * self.cols..i * self.cols + k]);
        }
        Ok(Matrix {
            rows: self.rows,
            cols: k,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch(format!(
                "add: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// Every entry passed through f32 and back — the storage precision path.
    pub fn round_to_f32(&self) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

/// Dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    /// Builds a vector, rejecting non-finite entries.
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite vector entry {v}"
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![0.0; n] }
    }

    pub fn ones(n: usize) -> Self {
        Self { data: vec![1.0; n] }
    }

    pub fn filled(n: usize, v: f64) -> Self {
        Self { data: vec![v; n] }
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

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, i: usize) -> f64 {
        self.data[i]
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::DimMismatch(format!(
                "hadamard: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * b)
                .collect(),
        })
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::DimMismatch(format!(
                "vector add: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        if self.len() != other.len() {
            return Err(Error::DimMismatch(format!(
                "vector sub: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Vector {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector {
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimMismatch(format!(
                "dot: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum())
    }

    /// Euclidean norm.
    pub fn norm2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn round_to_f32(&self) -> Vector {
        Vector {
            data: self.data.iter().map(|&v| v as f32 as f64).collect(),
        }
    }
}

impl From<Vec<f64>> for Vector {
    /// Internal-path constructor; does not re-validate finiteness.
    fn from(data: Vec<f64>) -> Self {
        Self { data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec2(a: f64, b: f64) -> Vector {
        Vector::new(vec![a, b]).unwrap()
    }

    #[test]
    fn matvec_identity() {
        let m = Matrix::identity(2);
        let x = vec2(1.0, 2.0);
        assert_eq!(m.matvec(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn matvec_hand_sum() {
        let m = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let x = vec2(1.0, 2.0);
        assert_eq!(m.matvec(&x).unwrap().data(), &[3.0]);
    }

    #[test]
    fn matvec_dim_mismatch() {
        let m = Matrix::identity(2);
        let x = Vector::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(m.matvec(&x), Err(Error::DimMismatch(_))));
    }

    #[test]
    fn matvec_t_identity() {
        let m = Matrix::identity(3);
        let v = Vector::new(vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.matvec_t(&v).unwrap().data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn matvec_t_hand_sum() {
        // [[1],[1]]ᵀ · (1,0) = (1)
        let m = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        let y = vec2(1.0, 0.0);
        assert_eq!(m.matvec_t(&y).unwrap().data(), &[1.0]);
    }

    // Independent naive oracle used by the random-case tests.
    fn naive_matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; m.rows()];
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                out[i] += m.get(i, j) * x[j];
            }
        }
        out
    }

    fn test_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut stream = crate::rng::RngStream::new(seed, 0xA11CE);
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| stream.uniform(-1.0, 1.0).unwrap())
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    }

    fn test_vector(n: usize, seed: u64) -> Vector {
        let mut stream = crate::rng::RngStream::new(seed, 0xB0B);
        Vector::new((0..n).map(|_| stream.uniform(-1.0, 1.0).unwrap()).collect()).unwrap()
    }

    #[test]
    fn matvec_matches_naive_oracle() {
        let m = test_matrix(5, 7, 1);
        let x = test_vector(7, 2);
        let got = m.matvec(&x).unwrap();
        let want = naive_matvec(&m, x.data());
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn matvec_t_matches_naive_oracle() {
        let m = test_matrix(6, 4, 3);
        let y = test_vector(6, 4);
        let got = m.matvec_t(&y).unwrap();
        let t = m.transpose();
        let want = naive_matvec(&t, y.data());
        for (g, w) in got.data().iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
    }

    #[test]
    fn hadamard_ones_zeros() {
        let a = test_vector(5, 7);
        assert_eq!(a.hadamard(&Vector::ones(5)).unwrap(), a);
        assert_eq!(a.hadamard(&Vector::zeros(5)).unwrap(), Vector::zeros(5));
        let x = Vector::new(vec![2.0]).unwrap();
        let y = Vector::new(vec![3.0]).unwrap();
        assert_eq!(x.hadamard(&y).unwrap().data(), &[6.0]);
        assert!(x.hadamard(&Vector::zeros(2)).is_err());
    }

    #[test]
    fn outer_accumulate_cases() {
        let mut acc = test_matrix(3, 4, 9);
        let before = acc.clone();
        acc.add_outer(&test_vector(3, 1), &test_vector(4, 2), 0.0)
            .unwrap();
        assert_eq!(acc, before);

        let mut zeros = Matrix::zeros(2, 2);
        zeros
            .add_outer(&vec2(1.0, 0.0), &vec2(0.0, 1.0), 1.0)
            .unwrap();
        assert_eq!(zeros.data(), &[0.0, 1.0, 0.0, 0.0]);

        // random case against a naive loop
        let mut acc = test_matrix(3, 5, 11);
        let y = test_vector(3, 12);
        let x = test_vector(5, 13);
        let mut want = acc.clone();
        acc.add_outer(&y, &x, 0.7).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let v = want.get(i, j) + 0.7 * y.get(i) * x.get(j);
                want.set(i, j, v);
            }
        }
        for (a, b) in acc.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn slices() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.slice_rows(2).unwrap(), m);
        assert_eq!(m.slice_cols(1).unwrap().data(), &[1.0, 3.0]);
        assert!(m.slice_rows(0).is_err());
        assert!(m.slice_cols(3).is_err());

        // slice_rows ∘ slice_cols commutes
        let big = test_matrix(6, 6, 21);
        let a = big.slice_rows(3).unwrap().slice_cols(2).unwrap();
        let b = big.slice_cols(2).unwrap().slice_rows(3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![f64::INFINITY, 0.0]).is_err());
        assert!(Vector::new(vec![f64::NEG_INFINITY]).is_err());
        assert!(Matrix::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn f32_roundtrip_is_idempotent() {
        let m = test_matrix(4, 4, 33);
        let once = m.round_to_f32();
        assert_eq!(once, once.round_to_f32());
    }

    proptest! {
        // (Mᵀ)ᵀ y = M y: matvec against the explicit transpose cross-checks
        // matvec_t, and vice versa.
        #[test]
        fn transpose_involution(seed in 0u64..1000, rows in 1usize..8, cols in 1usize..8) {
            let m = test_matrix(rows, cols, seed);
            let y = test_vector(rows, seed ^ 1);
            let x = test_vector(cols, seed ^ 2);
            let t = m.transpose();
            let a = m.matvec_t(&y).unwrap();
            let b = t.matvec(&y).unwrap();
            for (u, v) in a.data().iter().zip(b.data()) {
                prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
            let c = m.matvec(&x).unwrap();
            let d = t.matvec_t(&x).unwrap();
            for (u, v) in c.data().iter().zip(d.data()) {
                prop_assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }

        // M(αx + βz) = αMx + βMz to 1e-12 relative error.
        #[test]
        fn matvec_linearity(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
            let m = test_matrix(4, 6, seed);
            let x = test_vector(6, seed ^ 3);
            let z = test_vector(6, seed ^ 4);
            let lhs = m.matvec(&x.scale(alpha).add(&z.scale(beta)).unwrap()).unwrap();
            let rhs = m.matvec(&x).unwrap().scale(alpha)
                .add(&m.matvec(&z).unwrap().scale(beta)).unwrap();
            for (a, b) in lhs.data().iter().zip(rhs.data()) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
