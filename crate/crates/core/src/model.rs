//! Correlation ensembles `{Ω_i}` and their Hermitian square roots.
//!
//! Columns that share an identical covariance are stored once as a
//! *profile*; every quantity downstream depends on the multiset of
//! covariances only, and the solver exploits the grouping.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMatrix, C64};
use crate::solver::Structure;
use crate::{Error, Result};

/// Entrywise relative tolerance for the Hermitian check.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default floor for the smallest eigenvalue over all `Ω_i`.
pub const DEFAULT_WMIN_TOL: f64 = 1e-10;
/// Negative eigenvalues above `-PSD_CLAMP` are treated as zero.
pub const PSD_CLAMP: f64 = 1e-12;

#[derive(Debug)]
pub struct CorrelationEnsemble {
    dim: usize,
    columns: usize,
    profiles: Vec<CMatrix>,
    profile_extremes: Vec<(f64, f64)>,
    assignment: Vec<usize>,
    counts: Vec<usize>,
    w_min: f64,
    w_max: f64,
    thetas: OnceLock<Vec<CMatrix>>,
    pub(crate) structure: OnceLock<Structure>,
}

impl CorrelationEnsemble {
    /// All `Ω_i = I_N`; the Marchenko–Pastur case.
    pub fn identity(dim: usize, columns: usize) -> Result<Self> {
        check_dims(dim, columns)?;
        Self::from_profiles(dim, vec![linalg::identity(dim)], vec![0; columns])
    }

    /// `[Ω_i]_{jk} = ρ_i^{|j-k|}` with one `ρ_i ∈ [0, 1)` per column.
    pub fn exponential(dim: usize, columns: usize, rhos: &[f64]) -> Result<Self> {
        check_dims(dim, columns)?;
        if rhos.len() != columns {
            return Err(Error::Dimension(format!(
                "expected {columns} correlation coefficients, got {}",
                rhos.len()
            )));
        }
        let mut distinct: Vec<f64> = Vec::new();
        let mut assignment = Vec::with_capacity(columns);
        for (i, &rho) in rhos.iter().enumerate() {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Domain(format!("rho[{i}] = {rho} is outside [0, 1)")));
            }
            let idx = match distinct.iter().position(|&r| r.to_bits() == rho.to_bits()) {
                Some(idx) => idx,
                None => {
                    distinct.push(rho);
                    distinct.len() - 1
                }
            };
            assignment.push(idx);
        }
        let profiles = distinct
            .iter()
            .map(|&rho| exponential_matrix(dim, rho))
            .collect();
        Self::from_profiles(dim, profiles, assignment)
    }

    /// One covariance per column; identical matrices are grouped.
    pub fn from_matrices(omegas: Vec<CMatrix>) -> Result<Self> {
        let columns = omegas.len();
        let dim = omegas.first().map(|m| m.nrows()).unwrap_or(0);
        check_dims(dim, columns)?;
        let mut profiles: Vec<CMatrix> = Vec::new();
        let mut assignment = Vec::with_capacity(columns);
        for (i, omega) in omegas.into_iter().enumerate() {
            if omega.nrows() != dim || omega.ncols() != dim {
                return Err(Error::Dimension(format!(
                    "Omega[{i}] is {}x{}, expected {dim}x{dim}",
                    omega.nrows(),
                    omega.ncols()
                )));
            }
            let idx = match profiles.iter().position(|p| bitwise_equal(p, &omega)) {
                Some(idx) => idx,
                None => {
                    profiles.push(omega);
                    profiles.len() - 1
                }
            };
            assignment.push(idx);
        }
        Self::from_profiles(dim, profiles, assignment)
    }

    fn from_profiles(dim: usize, profiles: Vec<CMatrix>, assignment: Vec<usize>) -> Result<Self> {
        let mut extremes = Vec::with_capacity(profiles.len());
        for (g, p) in profiles.iter().enumerate() {
            let column = assignment.iter().position(|&a| a == g).unwrap_or(0);
            linalg::ensure_square(p, "Omega")?;
            linalg::ensure_hermitian(p, HERMITIAN_TOL).map_err(|e| match e {
                Error::NotHermitian { deviation } => Error::Domain(format!(
                    "Omega[{column}] is not Hermitian (deviation {deviation:e})"
                )),
                other => other,
            })?;
            let eigs = linalg::hermitian_eigenvalues(&linalg::hermitian_part(p))?;
            extremes.push((eigs[0], eigs[eigs.len() - 1]));
        }
        let mut counts = vec![0; profiles.len()];
        for &a in &assignment {
            counts[a] += 1;
        }
        let mut ensemble = Self {
            dim,
            columns: assignment.len(),
            profiles,
            profile_extremes: extremes,
            assignment,
            counts,
            w_min: 0.0,
            w_max: 0.0,
            thetas: OnceLock::new(),
            structure: OnceLock::new(),
        };
        let (w_min, w_max) = ensemble.validate()?;
        ensemble.w_min = w_min;
        ensemble.w_max = w_max;
        Ok(ensemble)
    }

    /// Extreme eigenvalues over all `Ω_i`, failing when the smallest is not
    /// above [`DEFAULT_WMIN_TOL`].
    pub fn validate(&self) -> Result<(f64, f64)> {
        self.validate_with_tolerance(DEFAULT_WMIN_TOL)
    }

    pub fn validate_with_tolerance(&self, tol: f64) -> Result<(f64, f64)> {
        if self.dim == 0 || self.columns <= self.dim {
            return Err(Error::Dimension(format!(
                "need 0 < N < n, got N = {}, n = {}",
                self.dim, self.columns
            )));
        }
        let mut w_min = f64::INFINITY;
        let mut w_max = f64::NEG_INFINITY;
        for (column, &g) in self.assignment.iter().enumerate() {
            let (lo, hi) = self.profile_extremes[g];
            if !(lo > tol) || !hi.is_finite() {
                return Err(Error::AssumptionViolation {
                    column,
                    eigenvalue: lo,
                    tolerance: tol,
                });
            }
            w_min = w_min.min(lo);
            w_max = w_max.max(hi);
        }
        Ok((w_min, w_max))
    }

    /// Row dimension `N`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of columns `n`.
    pub fn columns(&self) -> usize {
        self.columns
    }

    /// `c_N = N / n`.
    pub fn ratio(&self) -> f64 {
        self.dim as f64 / self.columns as f64
    }

    pub fn w_min(&self) -> f64 {
        self.w_min
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn omega(&self, column: usize) -> &CMatrix {
        &self.profiles[self.assignment[column]]
    }

    pub fn omegas(&self) -> impl Iterator<Item = &CMatrix> + '_ {
        self.assignment.iter().map(move |&g| &self.profiles[g])
    }

    /// Hermitian square root `Θ_i` of `Ω_i`, computed once per profile.
    pub fn theta(&self, column: usize) -> &CMatrix {
        &self.profile_thetas()[self.assignment[column]]
    }

    pub(crate) fn profile_thetas(&self) -> &[CMatrix] {
        self.thetas.get_or_init(|| {
            self.profiles
                .iter()
                .map(|p| hermitian_sqrt(p).expect("profiles are validated Hermitian PSD"))
                .collect()
        })
    }

    /// Distinct covariance matrices.
    pub fn profiles(&self) -> &[CMatrix] {
        &self.profiles
    }

    /// Profile index of every column.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of columns carrying each profile.
    pub fn profile_counts(&self) -> &[usize] {
        &self.counts
    }

    /// Stable identifier derived from the covariance data.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over dimensions, assignment and profile bits
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.dim as u64);
        eat(self.columns as u64);
        for &a in &self.assignment {
            eat(a as u64);
        }
        for p in &self.profiles {
            for c in p.iter() {
                eat(c.re.to_bits());
                eat(c.im.to_bits());
            }
        }
        h
    }
}

impl Clone for CorrelationEnsemble {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            columns: self.columns,
            profiles: self.profiles.clone(),
            profile_extremes: self.profile_extremes.clone(),
            assignment: self.assignment.clone(),
            counts: self.counts.clone(),
            w_min: self.w_min,
            w_max: self.w_max,
            thetas: self.thetas.clone(),
            structure: OnceLock::new(),
        }
    }
}

fn check_dims(dim: usize, columns: usize) -> Result<()> {
    if dim == 0 || columns == 0 || dim >= columns {
        return Err(Error::Dimension(format!(
            "need 0 < N < n, got N = {dim}, n = {columns}"
        )));
    }
    Ok(())
}

fn bitwise_equal(a: &CMatrix, b: &CMatrix) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits())
}

/// Real Toeplitz matrix `ρ^{|j-k|}`.
pub fn exponential_matrix(dim: usize, rho: f64) -> CMatrix {
    CMatrix::from_fn(dim, dim, |j, k| {
        C64::new(rho.powi(j.abs_diff(k) as i32), 0.0)
    })
}

/// Hermitian PSD square root through an eigendecomposition.
pub fn hermitian_sqrt(omega: &CMatrix) -> Result<CMatrix> {
    linalg::ensure_square(omega, "Omega")?;
    linalg::ensure_hermitian(omega, HERMITIAN_TOL)?;
    let eig = linalg::hermitian_eigen(&linalg::hermitian_part(omega))?;
    let scale = eig
        .eigenvalues
        .iter()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -PSD_CLAMP * scale {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda:e})"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, r) in roots.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*r);
    }
    let theta = linalg::complex_matmul(&scaled, &u.adjoint());
    Ok(linalg::hermitian_part(&theta))
}

/// Ensemble description as read from JSON configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    pub n: usize,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelConfig {
    // a struct variant so that stray keys are rejected too
    Identity {},
    /// The `rho` pattern is repeated across the `n` columns.
    Exponential {
        rho: Vec<f64>,
    },
    /// `n` concatenated `N × N` complex matrices, row-major, interleaved
    /// real/imaginary little-endian `f64`.
    File {
        path: PathBuf,
    },
}

impl EnsembleConfig {
    /// Builds the ensemble; relative file paths resolve against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<CorrelationEnsemble> {
        match &self.model {
            ModelConfig::Identity {} => CorrelationEnsemble::identity(self.dim, self.n),
            ModelConfig::Exponential { rho } => {
                if rho.is_empty() {
                    return Err(Error::Domain(
                        "exponential model needs at least one rho".into(),
                    ));
                }
                let rhos: Vec<f64> = rho.iter().copied().cycle().take(self.n).collect();
                CorrelationEnsemble::exponential(self.dim, self.n, &rhos)
            }
            ModelConfig::File { path } => {
                let resolved = match base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let omegas = read_matrices(&resolved, self.dim, self.n)?;
                CorrelationEnsemble::from_matrices(omegas)
            }
        }
    }

    /// Same profile at another size, for scaling families.
    pub fn resized(&self, dim: usize, n: usize) -> Result<Self> {
        if let ModelConfig::File { .. } = self.model {
            return Err(Error::Precondition(
                "file ensembles have a fixed size and cannot form a family".into(),
            ));
        }
        Ok(Self {
            dim,
            n,
            model: self.model.clone(),
        })
    }
}

/// Reads `n` concatenated `N × N` complex matrices from a raw binary file.
pub fn read_matrices(path: &Path, dim: usize, n: usize) -> Result<Vec<CMatrix>> {
    let bytes = fs::read(path)?;
    let expected = n * dim * dim * 16;
    if bytes.len() != expected {
        return Err(Error::Dimension(format!(
            "{} holds {} bytes, expected {expected} for {n} matrices of size {dim}x{dim}",
            path.display(),
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = CMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                let re = values.next().expect("length checked");
                let im = values.next().expect("length checked");
                m[(r, c)] = C64::new(re, im);
            }
        }
        out.push(m);
    }
    Ok(out)
}

pub fn write_matrices(path: &Path, matrices: &[CMatrix]) -> Result<()> {
    let mut file = fs::File::create(path)?;
    let mut buf = Vec::new();
    for m in matrices {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                buf.extend_from_slice(&m[(r, c)].re.to_le_bytes());
                buf.extend_from_slice(&m[(r, c)].im.to_le_bytes());
            }
        }
    }
    file.write_all(&buf)?;
    Ok(())
}
