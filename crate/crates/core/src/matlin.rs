//! Small dense matrices: exponential, symmetric square root, spectrum.

use crate::error::{KfpError, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 16;

/// Row-major square matrix with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for SquareMatrix {
    type Error = KfpError;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SquareMatrix::from_rows(&rows)
    }
}

impl From<SquareMatrix> for Vec<Vec<f64>> {
    fn from(m: SquareMatrix) -> Self {
        (0..m.n).map(|i| m.row(i).to_vec()).collect()
    }
}

impl SquareMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || n > MAX_DIM {
            return Err(KfpError::InvalidInput(format!(
                "dimension {n} outside 1..={MAX_DIM}"
            )));
        }
        if data.len() != n * n {
            return Err(KfpError::InvalidInput(format!(
                "expected {} entries, got {}",
                n * n,
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(KfpError::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(KfpError::InvalidInput("matrix is not square".into()));
        }
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for (i, v) in d.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let n = self.n;
        assert_eq!(n, other.n, "dimension mismatch");
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    #[inline]
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            y[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.n, other.n, "dimension mismatch");
        Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn symmetrize(&self) -> Self {
        self.add(&self.transpose()).scale(0.5)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = 1.0 + self.max_abs();
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_symmetric(tol) && eigenvalues(self).iter().all(|&l| l >= -tol)
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = m[(i, j)];
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        self.to_nalgebra().lu().determinant()
    }

    pub fn inverse(&self) -> Result<Self> {
        self.to_nalgebra()
            .try_inverse()
            .map(|m| Self::from_nalgebra(&m))
            .ok_or_else(|| KfpError::InvalidInput("singular matrix".into()))
    }

    /// Embed blocks [[a, b], [c, d]] into a matrix of twice the size.
    pub fn block2(a: &Self, b: &Self, c: &Self, d: &Self) -> Result<Self> {
        let n = a.n;
        let m = 2 * n;
        let mut data = vec![0.0; m * m];
        for i in 0..n {
            for j in 0..n {
                data[i * m + j] = a.get(i, j);
                data[i * m + n + j] = b.get(i, j);
                data[(n + i) * m + j] = c.get(i, j);
                data[(n + i) * m + n + j] = d.get(i, j);
            }
        }
        Self::new(m, data)
    }

    /// Block (bi, bj) of size k.
    pub fn sub_block(&self, bi: usize, bj: usize, k: usize) -> Self {
        let mut out = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                out.data[i * k + j] = self.get(bi * k + i, bj * k + j);
            }
        }
        out
    }
}

fn eigenvalues(m: &SquareMatrix) -> Vec<f64> {
    SymmetricEigen::new(m.symmetrize().to_nalgebra()).eigenvalues.iter().copied().collect()
}

// Higham's Padé(13) coefficients.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// e^{tA} by scaling and squaring with a Padé(13) rational approximant.
pub fn mat_exp(a: &SquareMatrix, t: f64) -> Result<SquareMatrix> {
    if !t.is_finite() {
        return Err(KfpError::InvalidInput("non-finite time".into()));
    }
    let n = a.dim();
    if t == 0.0 {
        return Ok(SquareMatrix::identity(n));
    }
    let at = a.scale(t);
    let norm = at.norm1();
    if !norm.is_finite() || norm > 1e8 {
        return Err(KfpError::InvalidInput(format!("|t|*||A|| = {norm:e} too large")));
    }
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let x = at.scale(0.5f64.powi(squarings));

    let id = SquareMatrix::identity(n);
    let x2 = x.matmul(&x);
    let x4 = x2.matmul(&x2);
    let x6 = x2.matmul(&x4);
    let b = &PADE13;
    let w1 = x6.scale(b[13]).add(&x4.scale(b[11])).add(&x2.scale(b[9]));
    let w2 = x6.scale(b[7]).add(&x4.scale(b[5])).add(&x2.scale(b[3])).add(&id.scale(b[1]));
    let u = x.matmul(&x6.matmul(&w1).add(&w2));
    let z1 = x6.scale(b[12]).add(&x4.scale(b[10])).add(&x2.scale(b[8]));
    let z2 = x6.scale(b[6]).add(&x4.scale(b[4])).add(&x2.scale(b[2])).add(&id.scale(b[0]));
    let v = x6.matmul(&z1).add(&z2);

    let p = v.add(&u).to_nalgebra();
    let q = v.sub(&u).to_nalgebra();
    let r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| KfpError::InvalidInput("Padé denominator singular".into()))?;
    let mut r = SquareMatrix::from_nalgebra(&r);
    for _ in 0..squarings {
        r = r.matmul(&r);
    }
    if r.data.iter().any(|v| !v.is_finite()) {
        return Err(KfpError::InvalidInput("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Symmetric PSD square root; eigenvalues in [-1e-10, 0) are clamped to zero.
pub fn psd_sqrt(m: &SquareMatrix) -> Result<SquareMatrix> {
    if !m.is_symmetric(1e-10) {
        return Err(KfpError::InvalidInput("psd_sqrt needs a symmetric matrix".into()));
    }
    let eig = SymmetricEigen::new(m.symmetrize().to_nalgebra());
    let scale = 1.0 + m.max_abs();
    let mut roots = Vec::with_capacity(m.dim());
    for &l in eig.eigenvalues.iter() {
        if l < -1e-10 * scale {
            return Err(KfpError::NotPsd(l));
        }
        roots.push(l.max(0.0).sqrt());
    }
    let q = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(roots));
    Ok(SquareMatrix::from_nalgebra(&(q * d * q.transpose())).symmetrize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    pub det: f64,
    pub min_eig: f64,
    pub max_eig: f64,
}

/// Determinant and extreme eigenvalues of a symmetric matrix.
pub fn sym_spectrum(m: &SquareMatrix) -> Result<Spectrum> {
    if !m.is_symmetric(1e-10) {
        return Err(KfpError::InvalidInput("sym_spectrum needs a symmetric matrix".into()));
    }
    let ev = eigenvalues(m);
    let min_eig = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // LU keeps relative accuracy when the eigenvalues span many decades.
    let det = m.symmetrize().determinant();
    Ok(Spectrum { det, min_eig, max_eig })
}

/// Diagonally rescaled copy D^{-1} M D^{-1}, D = sqrt(diag M), and the scales.
/// Returns None when a diagonal entry is not positive.
pub fn correlation(m: &SquareMatrix) -> Option<(SquareMatrix, Vec<f64>)> {
    let n = m.dim();
    let d: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    if d.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return None;
    }
    let d: Vec<f64> = d.iter().map(|x| x.sqrt()).collect();
    let mut c = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            c.set(i, j, m.get(i, j) / (d[i] * d[j]));
        }
    }
    Some((c, d))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_of_nilpotent_drift() {
        let b = SquareMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let e = mat_exp(&b, 1.0).unwrap();
        assert_eq!(e.data(), &[1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn quarter_rotation() {
        let b = SquareMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap();
        let e = mat_exp(&b, std::f64::consts::FRAC_PI_2).unwrap();
        let want = [0.0, -1.0, 1.0, 0.0];
        for (a, w) in e.data().iter().zip(want) {
            assert!((a - w).abs() < 1e-14);
        }
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = psd_sqrt(&SquareMatrix::diag(&[4.0, 9.0])).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-14 && (s.get(1, 1) - 3.0).abs() < 1e-14);
        assert!(s.get(0, 1).abs() < 1e-14);
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        assert!(matches!(psd_sqrt(&SquareMatrix::diag(&[1.0, -1e-6])), Err(KfpError::NotPsd(_))));
        assert!(psd_sqrt(&SquareMatrix::diag(&[1.0, -1e-12])).is_ok());
    }

    #[test]
    fn non_finite_rejected() {
        assert!(SquareMatrix::new(2, vec![1.0, f64::NAN, 0.0, 1.0]).is_err());
    }

    #[test]
    fn nonsymmetric_spectrum_rejected() {
        let m = SquareMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(sym_spectrum(&m).is_err());
    }
}
