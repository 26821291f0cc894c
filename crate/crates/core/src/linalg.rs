//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex;

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Splits a complex matrix into its real and imaginary parts.
pub fn split(m: &CMatrix) -> (DMatrix<f64>, DMatrix<f64>) {
    (m.map(|c| c.re), m.map(|c| c.im))
}

pub fn join(re: &DMatrix<f64>, im: &DMatrix<f64>) -> CMatrix {
    re.zip_map(im, C64::new)
}

/// Complex product through four real gemms, which `nalgebra` dispatches to
/// `matrixmultiply`; its generic complex path is several times slower.
pub fn complex_matmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `(1/n) Σ Σ*` for an `N × n` matrix.
pub fn gram(sigma: &CMatrix) -> CMatrix {
    let n = sigma.ncols().max(1) as f64;
    let (ar, ai) = split(sigma);
    let art = ar.transpose();
    let ait = ai.transpose();
    let re = (&ar * &art + &ai * &ait) / n;
    let im = (&ai * &art - &ar * &ait) / n;
    let mut g = join(&re, &im);
    // exact Hermitian symmetry for the eigensolver
    for j in 0..g.ncols() {
        g[(j, j)].im = 0.0;
        for i in (j + 1)..g.nrows() {
            let avg = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
            g[(i, j)] = avg;
            g[(j, i)] = avg.conj();
        }
    }
    g
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, c| acc.max(c.norm()))
}

/// Largest entrywise `|m_jk - conj(m_kj)|`, relative to the largest entry.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let scale = max_abs(m).max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in j..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst / scale
}

pub fn ensure_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let deviation = hermitian_deviation(m);
    if deviation > tol {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Projects onto the Hermitian part, `(M + M*) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Ascending eigenvalues of a Hermitian matrix; reads the lower triangle.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver("non-finite eigenvalue".into()));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<SymmetricEigen<C64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigensolver("Hermitian eigensolver did not converge".into()))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0, |acc: f64, &s| acc.max(s))
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for k in 0..a.nrows() {
            acc += a[(j, k)] * b[(k, j)];
        }
    }
    acc
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn is_identity(m: &CMatrix) -> bool {
    m.nrows() == m.ncols()
        && m.iter().enumerate().all(|(k, c)| {
            let (i, j) = (k % m.nrows(), k / m.nrows());
            let want = if i == j { 1.0 } else { 0.0 };
            c.re == want && c.im == 0.0
        })
}

pub fn from_real(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}
