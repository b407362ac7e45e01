use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;
pub type RVector = DVector<f64>;

/// Relative asymmetry tolerated when constructing a [`HermitianMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense complex Hermitian matrix.
///
/// Construction checks Hermitian symmetry against [`HERMITIAN_TOL`] times the
/// largest entry magnitude, then projects onto the Hermitian part so that the
/// diagonal is exactly real.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HermitianRepr", into = "HermitianRepr")]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Structural(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = max_abs_c(&m);
        let asym = max_abs_c(&(&m - m.adjoint()));
        if asym > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
            return Err(Error::Structural(format!(
                "matrix is not Hermitian (asymmetry {asym:.3e}, scale {scale:.3e})"
            )));
        }
        Ok(Self::hermitian_part(&m))
    }

    /// Hermitian part `(m + m^H)/2` without any symmetry check.
    pub fn hermitian_part(m: &CMatrix) -> Self {
        let mut h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self(h)
    }

    pub fn from_real(m: &RMatrix) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    /// Rank-one matrix `v v^H`.
    pub fn outer(v: &CVector) -> Self {
        Self::hermitian_part(&(v * v.adjoint()))
    }

    /// Real diagonal matrix.
    pub fn diagonal(d: &[f64]) -> Self {
        let mut m = CMatrix::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn scale(&self, a: f64) -> Self {
        Self(&self.0 * C64::new(a, 0.0))
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &HermitianMatrix) -> Self {
        Self(&self.0 + &other.0 * C64::new(a, 0.0))
    }

    pub fn add(&self, other: &HermitianMatrix) -> Self {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &HermitianMatrix) -> Self {
        self.add_scaled(-1.0, other)
    }

    /// `self + shift * I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)].re += shift;
        }
        Self(m)
    }

    /// `tr(self * other)`, real for Hermitian arguments.
    pub fn trace_product(&self, other: &HermitianMatrix) -> f64 {
        trace_product(&self.0, &other.0).re
    }

    /// `v^H self v`.
    pub fn quad_form(&self, v: &CVector) -> f64 {
        (v.adjoint() * &self.0 * v)[(0, 0)].re
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs_c(&self.0)
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    /// Real part as a symmetric real matrix.
    pub fn real_part(&self) -> RMatrix {
        self.0.map(|z| z.re)
    }
}

/// `tr(A B)` for general complex matrices.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_r(m: &RMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    /// Eigenvalues in ascending order.
    pub values: RVector,
    /// Orthonormal eigenvectors, column `i` paired with `values[i]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

pub fn hermitian_eig(a: &HermitianMatrix) -> HermitianEigen {
    let n = a.dim();
    if n == 0 {
        return HermitianEigen {
            values: RVector::zeros(0),
            vectors: CMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(a.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = RVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    HermitianEigen { values, vectors }
}

/// Ascending eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(a: &RMatrix) -> RVector {
    let mut v: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    RVector::from_vec(v)
}

/// Spectral norm of a Hermitian matrix.
pub fn spectral_norm(a: &HermitianMatrix) -> f64 {
    let e = hermitian_eig(a);
    if e.values.is_empty() {
        0.0
    } else {
        e.min().abs().max(e.max().abs())
    }
}

/// PSD test: smallest eigenvalue `>= -tol * ||A||` (spectral norm).
pub fn is_psd(a: &HermitianMatrix, tol: f64) -> bool {
    let e = hermitian_eig(a);
    if e.values.is_empty() {
        return true;
    }
    let norm = e.min().abs().max(e.max().abs());
    e.min() >= -tol * norm
}

/// Real symmetric embedding `[[Re A, -Im A], [Im A, Re A]]`.
pub fn real_embed(a: &HermitianMatrix) -> RMatrix {
    let n = a.dim();
    let mut r = RMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = a.0[(i, j)];
            r[(i, j)] = z.re;
            r[(i + n, j + n)] = z.re;
            r[(i, j + n)] = -z.im;
            r[(i + n, j)] = z.im;
        }
    }
    r
}

/// Projects a real symmetric `2n x 2n` matrix onto the range of [`real_embed`]
/// and returns the Hermitian preimage.
///
/// For `X` symmetric, `<real_embed(F), X> = 2 tr(F de_embed(X))` for every Hermitian
/// `F`, and `X ⪰ 0` implies `de_embed(X) ⪰ 0`.
pub fn de_embed(x: &RMatrix) -> HermitianMatrix {
    let n = x.nrows() / 2;
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
            let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
            m[(i, j)] = C64::new(re, im);
        }
    }
    HermitianMatrix::hermitian_part(&m)
}

#[derive(Serialize, Deserialize)]
struct HermitianRepr {
    dim: usize,
    /// Row-major `[re, im]` pairs.
    entries: Vec<[f64; 2]>,
}

impl TryFrom<HermitianRepr> for HermitianMatrix {
    type Error = Error;
    fn try_from(r: HermitianRepr) -> Result<Self> {
        if r.entries.len() != r.dim * r.dim {
            return Err(Error::Structural(format!(
                "expected {} entries, got {}",
                r.dim * r.dim,
                r.entries.len()
            )));
        }
        let m = CMatrix::from_row_iterator(
            r.dim,
            r.dim,
            r.entries.iter().map(|e| C64::new(e[0], e[1])),
        );
        HermitianMatrix::new(m)
    }
}

impl From<HermitianMatrix> for HermitianRepr {
    fn from(h: HermitianMatrix) -> Self {
        let n = h.dim();
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = h.0[(i, j)];
                entries.push([z.re, z.im]);
            }
        }
        HermitianRepr { dim: n, entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(HermitianMatrix::new(m), Err(Error::Structural(_))));
    }

    #[test]
    fn diagonal_imaginary_parts_are_cleared() {
        let m = CMatrix::from_row_slice(1, 1, &[c(2.0, 1e-16)]);
        let h = HermitianMatrix::new(m).unwrap();
        assert_eq!(h.get(0, 0).im, 0.0);
    }

    #[test]
    fn identity_eigenvalues() {
        let e = hermitian_eig(&HermitianMatrix::identity(3));
        for v in e.values.iter() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn de_embed_inverts_embed() {
        let m = CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.5, -1.0), c(0.5, 1.0), c(3.0, 0.0)]);
        let h = HermitianMatrix::new(m).unwrap();
        let back = de_embed(&real_embed(&h));
        assert!((back.as_matrix() - h.as_matrix()).norm() < 1e-15);
    }

    #[test]
    fn embedded_pairing_is_twice_the_trace() {
        let f = HermitianMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.3, 0.7), c(0.3, -0.7), c(-2.0, 0.0)],
        ))
        .unwrap();
        // Arbitrary symmetric X, not of embedded form.
        let x = RMatrix::from_fn(4, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 + ((j * 7 + i * 3) % 5) as f64);
        let lhs = real_embed(&f).dot(&x);
        let rhs = 2.0 * f.trace_product(&de_embed(&x));
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
