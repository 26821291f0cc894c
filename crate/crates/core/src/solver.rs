//! The coupled fixed-point system
//!
//! ```text
//! δ_i(z) = (1/n) tr Ω_i T_N(z),   T_N(z) = ((1/n) Σ_k Ω_k / (1 + δ_k(z)) - z I)^{-1}
//! ```
//!
//! with `m_N(z) = (1/N) tr T_N(z)`, and the `z = 0` system
//! `φ_i(ℓ, 0) = ℓ_i` reached through the interference-function iteration at
//! `r_p = -1/p`.
//!
//! Columns sharing a covariance profile have identical `φ_i`, so every sweep
//! runs on profiles and expands to columns at the end. When all profiles are
//! diagonal in a common eigenbasis the resolvent is evaluated through their
//! spectra instead of a dense factorisation.

use nalgebra::{DMatrix, DVector};

use crate::algebra;
use crate::linalg::{self, CMatrix, C64};
use crate::model::CorrelationEnsemble;
use crate::{Error, Result};

/// Relative off-diagonal size under which a profile counts as diagonal in the
/// shared eigenbasis.
const COMMON_BASIS_TOL: f64 = 1e-12;
/// Tolerance for the `J u = v` identity.
pub const JACOBIAN_IDENTITY_TOL: f64 = 1e-8;
/// Slack for `ρ(J) ≤ 1 - min ℓ / (1 + max ℓ)`.
pub const RADIUS_SLACK: f64 = 1e-10;
const MAX_OUTER_LEVELS: u32 = 62;

/// A point of `C \ [0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint(C64);

impl SpectralPoint {
    pub fn new(z: C64) -> Result<Self> {
        let on_half_line = z.im == 0.0 && z.re >= 0.0;
        if on_half_line || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::InvalidSpectralPoint { re: z.re, im: z.im });
        }
        Ok(Self(z))
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self> {
        Self::new(C64::new(re, im))
    }

    pub fn z(&self) -> C64 {
        self.0
    }

    pub fn is_real(&self) -> bool {
        self.0.im == 0.0
    }

    /// Distance to `[0, ∞)`.
    pub fn distance_to_half_line(&self) -> f64 {
        if self.0.re >= 0.0 {
            self.0.im.abs()
        } else {
            self.0.norm()
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// `None` picks 1 on the negative axis and 0.5 off the real axis.
    pub damping: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            damping: None,
        }
    }
}

impl SolveOptions {
    fn damping_for(&self, z: &SpectralPoint) -> Result<f64> {
        let d = self.damping.unwrap_or(if z.is_real() { 1.0 } else { 0.5 });
        if !(d > 0.0 && d <= 1.0) {
            return Err(Error::Domain(format!("damping {d} is outside (0, 1]")));
        }
        Ok(d)
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub z: SpectralPoint,
    /// One `δ_i` per column.
    pub delta: Vec<C64>,
    pub t: CMatrix,
    pub m: C64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct ZeroSolution {
    /// One `ℓ_i` per column.
    pub ell: Vec<f64>,
    pub jacobian_radius: f64,
    /// `1 - min ℓ / (1 + max ℓ)`, see [`JacobianReport::bound`].
    pub radius_bound: f64,
    /// `1 - 1 / (1 + max ℓ)`, see [`JacobianReport::certified_bound`].
    pub certified_bound: f64,
    pub p_sequence_used: Vec<u64>,
    /// Column-level solutions at `r_p = -1/p`, in the order of `p_sequence_used`.
    pub p_solutions: Vec<Vec<f64>>,
    /// `max_i |φ_i(ℓ, 0) - ℓ_i|`.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct JacobianReport {
    pub j: DMatrix<f64>,
    pub rho: f64,
    /// `1 - min ℓ / (1 + max ℓ)`, the lemma applied with `v = ℓ`. The
    /// lemma needs `u = J u + v`, which `J u = ℓ` does not give, and this
    /// value falls below `ρ(J)` once `c > 1/2`; reported, not enforced.
    pub bound: f64,
    /// `1 - 1 / (1 + max ℓ)`, the lemma applied to `u = J u + 1`.
    pub certified_bound: f64,
    pub identity_residual: f64,
}

/// How the resolvent is evaluated for an ensemble.
#[derive(Debug)]
pub(crate) enum Structure {
    Dense,
    /// All profiles are `U diag(λ_g) U*` for one unitary `U`.
    Diagonal {
        basis: CMatrix,
        spectra: Vec<Vec<f64>>,
    },
}

impl Structure {
    fn detect(ensemble: &CorrelationEnsemble) -> Structure {
        let profiles = ensemble.profiles();
        let Ok(eig) = linalg::hermitian_eigen(&profiles[0]) else {
            return Structure::Dense;
        };
        let basis = eig.eigenvectors;
        let basis_adj = basis.adjoint();
        let mut spectra = Vec::with_capacity(profiles.len());
        for p in profiles {
            let d = linalg::complex_matmul(&linalg::complex_matmul(&basis_adj, p), &basis);
            let scale = linalg::max_abs(&d).max(f64::MIN_POSITIVE);
            let mut off = 0.0f64;
            for j in 0..d.ncols() {
                for i in 0..d.nrows() {
                    if i != j {
                        off = off.max(d[(i, j)].norm());
                    }
                }
            }
            if off > COMMON_BASIS_TOL * scale {
                return Structure::Dense;
            }
            spectra.push(d.diagonal().iter().map(|c| c.re).collect());
        }
        Structure::Diagonal { basis, spectra }
    }
}

pub(crate) fn structure(ensemble: &CorrelationEnsemble) -> &Structure {
    ensemble
        .structure
        .get_or_init(|| Structure::detect(ensemble))
}

/// `T` evaluated at per-profile weights `a_g`, with
/// `A = Σ_g a_g R_g - z I`.
pub(crate) struct Resolvent {
    /// `tr(R_g T)` for every profile.
    pub traces: Vec<C64>,
    pub trace_t: C64,
    pub t: Option<CMatrix>,
}

pub(crate) fn resolvent(
    ensemble: &CorrelationEnsemble,
    weights: &[C64],
    z: C64,
    want_t: bool,
) -> Result<Resolvent> {
    let dim = ensemble.dim();
    match structure(ensemble) {
        Structure::Diagonal { basis, spectra } => {
            let mut inv_diag = vec![C64::new(0.0, 0.0); dim];
            for (j, slot) in inv_diag.iter_mut().enumerate() {
                let mut d = -z;
                for (g, a) in weights.iter().enumerate() {
                    d += a * spectra[g][j];
                }
                if d.norm() == 0.0 || !d.re.is_finite() || !d.im.is_finite() {
                    return Err(Error::Singular(format!("bulk matrix singular at z = {z}")));
                }
                *slot = d.inv();
            }
            let traces = spectra
                .iter()
                .map(|lam| lam.iter().zip(&inv_diag).map(|(l, d)| d * *l).sum())
                .collect();
            let trace_t = inv_diag.iter().sum();
            let t = want_t.then(|| {
                let mut scaled = basis.clone();
                for (j, d) in inv_diag.iter().enumerate() {
                    scaled.column_mut(j).apply(|c| *c *= *d);
                }
                linalg::complex_matmul(&scaled, &basis.adjoint())
            });
            Ok(Resolvent { traces, trace_t, t })
        }
        Structure::Dense => {
            let profiles = ensemble.profiles();
            let mut a = CMatrix::from_diagonal_element(dim, dim, -z);
            for (g, w) in weights.iter().enumerate() {
                a.zip_apply(&profiles[g], |x, r| *x += w * r);
            }
            let lu = a.lu();
            let t = lu
                .solve(&linalg::identity(dim))
                .filter(|t| t.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
                .ok_or_else(|| Error::Singular(format!("bulk matrix singular at z = {z}")))?;
            let traces = profiles
                .iter()
                .map(|r| linalg::trace_of_product(r, &t))
                .collect();
            let trace_t = linalg::trace(&t);
            Ok(Resolvent {
                traces,
                trace_t,
                t: want_t.then_some(t),
            })
        }
    }
}

/// Per-profile weights `a_g = (1/n) Σ_{k ∈ g} 1 / (1 + x_k)` from column values.
fn column_weights(ensemble: &CorrelationEnsemble, x: &[C64]) -> Vec<C64> {
    let n = ensemble.columns() as f64;
    let mut w = vec![C64::new(0.0, 0.0); ensemble.profiles().len()];
    for (k, &g) in ensemble.assignment().iter().enumerate() {
        w[g] += (C64::new(1.0, 0.0) + x[k]).inv() / n;
    }
    w
}

/// Same weights when `x` is constant on profiles.
fn profile_weights(ensemble: &CorrelationEnsemble, x: &[C64]) -> Vec<C64> {
    let n = ensemble.columns() as f64;
    ensemble
        .profile_counts()
        .iter()
        .zip(x)
        .map(|(&count, xg)| (C64::new(1.0, 0.0) + xg).inv() * (count as f64 / n))
        .collect()
}

fn expand(ensemble: &CorrelationEnsemble, per_profile: &[C64]) -> Vec<C64> {
    ensemble
        .assignment()
        .iter()
        .map(|&g| per_profile[g])
        .collect()
}

/// `φ_i(x, z) = (1/n) tr Ω_i ((1/n) Σ_k Ω_k / (1 + x_k) - z I)^{-1}` for
/// `z ≤ 0` and `x ≥ 0`.
pub fn phi(ensemble: &CorrelationEnsemble, x: &[f64], z: f64) -> Result<Vec<f64>> {
    if x.len() != ensemble.columns() {
        return Err(Error::Dimension(format!(
            "phi needs {} arguments, got {}",
            ensemble.columns(),
            x.len()
        )));
    }
    if !(z <= 0.0) {
        return Err(Error::Domain(format!("phi is defined for z <= 0, got {z}")));
    }
    if let Some(bad) = x.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "x[{bad}] = {} is not a finite nonnegative value",
            x[bad]
        )));
    }
    let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let weights = column_weights(ensemble, &xc);
    let r = resolvent(ensemble, &weights, C64::new(z, 0.0), false)?;
    let n = ensemble.columns() as f64;
    Ok(ensemble
        .assignment()
        .iter()
        .map(|&g| r.traces[g].re / n)
        .collect())
}

/// Profile-level Picard iteration; returns `(δ per profile, iterations, residual)`.
pub(crate) fn iterate_profiles(
    ensemble: &CorrelationEnsemble,
    z: &SpectralPoint,
    opts: &SolveOptions,
    init: &[C64],
) -> Result<(Vec<C64>, usize, f64)> {
    let damping = opts.damping_for(z)?;
    let n = ensemble.columns() as f64;
    let mut x = init.to_vec();
    let mut residual = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let weights = profile_weights(ensemble, &x);
        let r = resolvent(ensemble, &weights, z.z(), false)?;
        residual = 0.0;
        for (xg, tr) in x.iter_mut().zip(&r.traces) {
            let next = *xg * (1.0 - damping) + (tr / n) * damping;
            residual = residual.max((next - *xg).norm());
            *xg = next;
        }
        if !residual.is_finite() {
            break;
        }
        if residual < opts.tol {
            return Ok((x, it, residual));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// History length of the accelerated iteration, capped by the unknown count.
const ANDERSON_DEPTH: usize = 5;
/// Iterations without a new best residual before mixing is abandoned.
const ANDERSON_STALL: usize = 50;

/// [`iterate_profiles`] with Anderson mixing over the damped map.
///
/// Converges to the same fixed point: the stopping rule is the residual of
/// the plain damped step. Candidates leaving the half-plane of `z` (or the
/// positive axis for real `z`) are discarded and the history restarts.
pub(crate) fn iterate_profiles_accelerated(
    ensemble: &CorrelationEnsemble,
    z: &SpectralPoint,
    opts: &SolveOptions,
    init: &[C64],
) -> Result<(Vec<C64>, usize, f64)> {
    let damping = opts.damping_for(z)?;
    let n = ensemble.columns() as f64;
    let unknowns = init.len();
    let depth = ANDERSON_DEPTH.min(unknowns);
    let admissible = |x: &[C64]| {
        x.iter().all(|v| {
            v.re.is_finite()
                && v.im.is_finite()
                && if z.is_real() {
                    v.re >= 0.0
                } else {
                    v.im * z.z().im >= 0.0
                }
        })
    };
    let step = |x: &[C64]| -> Result<Vec<C64>> {
        let weights = profile_weights(ensemble, x);
        let r = resolvent(ensemble, &weights, z.z(), false)?;
        Ok(x.iter()
            .zip(&r.traces)
            .map(|(xg, tr)| *xg * (1.0 - damping) + (tr / n) * damping)
            .collect())
    };
    let mut x = init.to_vec();
    let mut df: Vec<Vec<C64>> = Vec::new();
    let mut dg: Vec<Vec<C64>> = Vec::new();
    let mut prev: Option<(Vec<C64>, Vec<C64>)> = None;
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut accelerate = true;
    for it in 1..=opts.max_iter {
        let gx = step(&x)?;
        let f: Vec<C64> = gx.iter().zip(&x).map(|(a, b)| a - b).collect();
        residual = f.iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
        if !residual.is_finite() {
            break;
        }
        if residual < opts.tol {
            return Ok((gx, it, residual));
        }
        if residual < best {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
        }
        // mixing can stagnate far from the fixed point; plain steps cannot
        if since_best > ANDERSON_STALL {
            accelerate = false;
        }
        if !accelerate {
            x = gx;
            continue;
        }
        if let Some((pg, pf)) = prev.take() {
            df.push(f.iter().zip(&pf).map(|(a, b)| a - b).collect());
            dg.push(gx.iter().zip(&pg).map(|(a, b)| a - b).collect());
            if df.len() > depth {
                df.remove(0);
                dg.remove(0);
            }
        }
        prev = Some((gx.clone(), f.clone()));
        let mut next = gx;
        if !df.is_empty() {
            let a = CMatrix::from_fn(unknowns, df.len(), |i, j| df[j][i]);
            let svd = a.svd(true, true);
            let cutoff = svd.singular_values.max() * 1e-12;
            if let Ok(gamma) = svd.solve(&nalgebra::DVector::from_column_slice(&f), cutoff) {
                let candidate: Vec<C64> = (0..unknowns)
                    .map(|i| next[i] - (0..df.len()).map(|j| dg[j][i] * gamma[j]).sum::<C64>())
                    .collect();
                if admissible(&candidate) {
                    next = candidate;
                } else {
                    df.clear();
                    dg.clear();
                }
            }
        }
        x = next;
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// `m_N(z)` from converged profile values.
pub(crate) fn m_from_profiles(
    ensemble: &CorrelationEnsemble,
    x: &[C64],
    z: &SpectralPoint,
) -> Result<C64> {
    let weights = profile_weights(ensemble, x);
    let r = resolvent(ensemble, &weights, z.z(), false)?;
    Ok(r.trace_t / ensemble.dim() as f64)
}

/// Damped Picard iteration from `δ⁰ = 0`.
pub fn solve_deltas(
    ensemble: &CorrelationEnsemble,
    z: SpectralPoint,
    opts: &SolveOptions,
) -> Result<FixedPointSolution> {
    let init = vec![C64::new(0.0, 0.0); ensemble.profiles().len()];
    solve_deltas_from(ensemble, z, opts, &init)
}

/// Damped Picard iteration from an initial value per covariance profile.
pub fn solve_deltas_from(
    ensemble: &CorrelationEnsemble,
    z: SpectralPoint,
    opts: &SolveOptions,
    init: &[C64],
) -> Result<FixedPointSolution> {
    if init.len() != ensemble.profiles().len() {
        return Err(Error::Dimension(format!(
            "need {} initial values (one per profile), got {}",
            ensemble.profiles().len(),
            init.len()
        )));
    }
    let (x, iterations, residual) = iterate_profiles(ensemble, &z, opts, init)?;
    let weights = profile_weights(ensemble, &x);
    let r = resolvent(ensemble, &weights, z.z(), true)?;
    Ok(FixedPointSolution {
        z,
        delta: expand(ensemble, &x),
        t: r.t.expect("requested"),
        m: r.trace_t / ensemble.dim() as f64,
        iterations,
        residual,
    })
}

/// `m_N(z) = (1/N) tr T_N(z)` with default solver options.
pub fn m_of_z(ensemble: &CorrelationEnsemble, z: SpectralPoint) -> Result<C64> {
    let init = vec![C64::new(0.0, 0.0); ensemble.profiles().len()];
    let (x, _, _) = iterate_profiles(ensemble, &z, &SolveOptions::default(), &init)?;
    m_from_profiles(ensemble, &x, &z)
}

/// Interference iteration `x ← φ(x, r)` on profiles until the update is below `tol`.
fn interference_fixed_point(
    ensemble: &CorrelationEnsemble,
    r: f64,
    x: &mut [f64],
    tol: f64,
    limit: f64,
) -> Result<()> {
    let n = ensemble.columns() as f64;
    let mut residual = f64::INFINITY;
    for _ in 0..10_000 {
        let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        let weights = profile_weights(ensemble, &xc);
        let res = resolvent(ensemble, &weights, C64::new(r, 0.0), false)?;
        residual = 0.0;
        for (xg, tr) in x.iter_mut().zip(&res.traces) {
            let next = tr.re / n;
            if !(next <= limit) {
                return Err(Error::Divergence { value: next, limit });
            }
            residual = residual.max((next - *xg).abs());
            *xg = next;
        }
        if residual < tol {
            return Ok(());
        }
    }
    Err(Error::NonConvergence {
        iterations: 10_000,
        residual,
    })
}

/// Solves `φ(ℓ, 0) = ℓ` by following the fixed points at `r_p = -1/p` for
/// `p = 1, 2, 4, ...`, each warm-started from the previous one, then polishing
/// at `z = 0`. The result carries the Jacobian certificate.
pub fn solve_at_zero(ensemble: &CorrelationEnsemble, tol: f64) -> Result<ZeroSolution> {
    let c = ensemble.ratio();
    let limit = 10.0 * c / (1.0 - c) * (ensemble.w_max() / ensemble.w_min());
    let groups = ensemble.profiles().len();
    let mut x = vec![0.0; groups];
    let mut p_sequence = Vec::new();
    let mut p_solutions: Vec<Vec<f64>> = Vec::new();
    let mut previous: Option<Vec<f64>> = None;
    let mut converged = false;
    for level in 0..MAX_OUTER_LEVELS {
        let p = 1u64 << level;
        interference_fixed_point(ensemble, -1.0 / p as f64, &mut x, tol, limit)?;
        p_sequence.push(p);
        p_solutions.push(ensemble.assignment().iter().map(|&g| x[g]).collect());
        if let Some(prev) = &previous {
            let change = prev
                .iter()
                .zip(&x)
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            if change < tol {
                converged = true;
                break;
            }
        }
        previous = Some(x.clone());
    }
    if !converged {
        return Err(Error::NonConvergence {
            iterations: MAX_OUTER_LEVELS as usize,
            residual: f64::NAN,
        });
    }
    interference_fixed_point(ensemble, 0.0, &mut x, tol, limit)?;
    let ell: Vec<f64> = ensemble.assignment().iter().map(|&g| x[g]).collect();
    let residual = phi(ensemble, &ell, 0.0)?
        .iter()
        .zip(&ell)
        .fold(0.0f64, |acc, (f, l)| acc.max((f - l).abs()));
    let report = jacobian_at_zero(ensemble, &ell)?;
    Ok(ZeroSolution {
        ell,
        jacobian_radius: report.rho,
        radius_bound: report.bound,
        certified_bound: report.certified_bound,
        p_sequence_used: p_sequence,
        p_solutions,
        residual,
    })
}

/// `[J]_{i,m} = (1/n²) tr[Ω_i A^{-1} Ω_m A^{-1}] / (1 + ℓ_m)²` with
/// `A = (1/n) Σ_k Ω_k / (1 + ℓ_k)` and its spectral radius. Fails unless
/// `J u = v` for `u = 1 + ℓ`, `v = ℓ`, and unless `ρ(J)` respects
/// [`JacobianReport::certified_bound`].
pub fn jacobian_at_zero(ensemble: &CorrelationEnsemble, ell: &[f64]) -> Result<JacobianReport> {
    let n = ensemble.columns();
    if ell.len() != n {
        return Err(Error::Dimension(format!(
            "need {n} values of ell, got {}",
            ell.len()
        )));
    }
    if let Some(bad) = ell.iter().position(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "ell[{bad}] = {} is not positive",
            ell[bad]
        )));
    }
    let xc: Vec<C64> = ell.iter().map(|&v| C64::new(v, 0.0)).collect();
    let weights = column_weights(ensemble, &xc);
    let groups = ensemble.profiles().len();
    let mut table = DMatrix::<f64>::zeros(groups, groups);
    match structure(ensemble) {
        Structure::Diagonal { spectra, .. } => {
            let dim = ensemble.dim();
            let mut inv_sq = vec![0.0; dim];
            for (j, slot) in inv_sq.iter_mut().enumerate() {
                let d: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(g, a)| a.re * spectra[g][j])
                    .sum();
                if d == 0.0 {
                    return Err(Error::Singular("bulk matrix singular at z = 0".into()));
                }
                *slot = 1.0 / (d * d);
            }
            for g in 0..groups {
                for h in 0..groups {
                    table[(g, h)] = (0..dim)
                        .map(|j| spectra[g][j] * spectra[h][j] * inv_sq[j])
                        .sum();
                }
            }
        }
        Structure::Dense => {
            let res = resolvent(ensemble, &weights, C64::new(0.0, 0.0), true)?;
            let a_inv = res.t.expect("requested");
            let products: Vec<CMatrix> = ensemble
                .profiles()
                .iter()
                .map(|r| linalg::complex_matmul(r, &a_inv))
                .collect();
            for g in 0..groups {
                for h in 0..groups {
                    table[(g, h)] = linalg::trace_of_product(&products[g], &products[h]).re;
                }
            }
        }
    }
    let assignment = ensemble.assignment();
    let n2 = (n * n) as f64;
    let j = DMatrix::from_fn(n, n, |i, m| {
        table[(assignment[i], assignment[m])] / (n2 * (1.0 + ell[m]).powi(2))
    });
    let u = DVector::from_iterator(n, ell.iter().map(|l| 1.0 + l));
    let v = DVector::from_column_slice(ell);
    let identity_residual = (&j * &u - &v).amax();
    if !(identity_residual <= JACOBIAN_IDENTITY_TOL) {
        return Err(Error::JacobianIdentity {
            residual: identity_residual,
        });
    }
    let rho = algebra::spectral_radius(&j)?;
    let min_ell = ell.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ell = ell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = 1.0 - min_ell / (1.0 + max_ell);
    let certified_bound = 1.0 - 1.0 / (1.0 + max_ell);
    if !(rho <= certified_bound + RADIUS_SLACK && rho < 1.0) {
        return Err(Error::InequalityViolation(format!(
            "rho(J) = {rho} exceeds certificate {certified_bound}"
        )));
    }
    Ok(JacobianReport {
        j,
        rho,
        bound,
        certified_bound,
        identity_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::exponential_matrix;

    fn identity(dim: usize, n: usize) -> CorrelationEnsemble {
        CorrelationEnsemble::identity(dim, n).unwrap()
    }

    /// Same matrices as `identity`, but forced through the dense path.
    fn identity_dense(dim: usize, n: usize) -> CorrelationEnsemble {
        let e = identity(dim, n);
        e.structure.set(Structure::Dense).unwrap();
        e
    }

    fn mp_delta(c: f64, z: f64) -> f64 {
        // δ² + (1 - c - z)δ ... for z = -1: δ² + (2 - c)δ - c = 0
        assert_eq!(z, -1.0);
        (-(2.0 - c) + ((2.0 - c) * (2.0 - c) + 4.0 * c).sqrt()) / 2.0
    }

    #[test]
    fn spectral_point_domain() {
        assert!(SpectralPoint::from_parts(2.0, 0.0).is_err());
        assert!(SpectralPoint::from_parts(0.0, 0.0).is_err());
        assert!(SpectralPoint::from_parts(-1.0, 0.0).is_ok());
        assert!(SpectralPoint::from_parts(1.0, 1e-4).is_ok());
        assert!(SpectralPoint::from_parts(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn phi_scalar_reductions() {
        let e = identity(64, 256);
        let zero = vec![0.0; 256];
        for v in phi(&e, &zero, 0.0).unwrap() {
            assert!((v - 0.25).abs() < 1e-14);
        }
        let third = vec![1.0 / 3.0; 256];
        for v in phi(&e, &third, 0.0).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-14);
        }
        for v in phi(&e, &zero, -1.0).unwrap() {
            assert!((v - 0.125).abs() < 1e-14);
        }
    }

    #[test]
    fn phi_rejects_bad_arguments() {
        let e = identity(2, 4);
        assert!(matches!(phi(&e, &[0.0; 4], 0.5), Err(Error::Domain(_))));
        assert!(matches!(
            phi(&e, &[0.0, -1.0, 0.0, 0.0], 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(phi(&e, &[0.0; 3], 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn phi_is_monotone_and_positive() {
        let rhos: Vec<f64> = (0..12).map(|i| [0.2, 0.5, 0.9][i % 3]).collect();
        let e = CorrelationEnsemble::exponential(5, 12, &rhos).unwrap();
        let lo: Vec<f64> = (0..12).map(|i| 0.1 * i as f64).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + 0.3).collect();
        let a = phi(&e, &lo, -0.5).unwrap();
        let b = phi(&e, &hi, -0.5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!(*x > 0.0 && y >= x);
        }
    }

    #[test]
    fn delta_matches_quadratic_root() {
        let e = identity(64, 256);
        let z = SpectralPoint::from_parts(-1.0, 0.0).unwrap();
        let sol = solve_deltas(&e, z, &SolveOptions::default()).unwrap();
        let want = mp_delta(0.25, -1.0);
        assert!((want - 0.132_782_2).abs() < 1e-7);
        for d in &sol.delta {
            assert!((d.re - want).abs() < 1e-11 && d.im == 0.0);
        }
        let m_want = (1.0 + want) / (2.0 + want);
        assert!((sol.m.re - m_want).abs() < 1e-11);
        assert!((sol.m.re - 0.531_128_9).abs() < 1e-7);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn dense_and_diagonal_paths_agree() {
        let a = identity(8, 32);
        let b = identity_dense(8, 32);
        assert!(matches!(structure(&a), Structure::Diagonal { .. }));
        for z in [
            C64::new(-1.0, 0.0),
            C64::new(0.7, 0.05),
            C64::new(2.0, 1e-3),
        ] {
            let z = SpectralPoint::new(z).unwrap();
            let sa = solve_deltas(&a, z, &SolveOptions::default()).unwrap();
            let sb = solve_deltas(&b, z, &SolveOptions::default()).unwrap();
            assert!((sa.m - sb.m).norm() < 1e-10);
            assert!((&sa.t - &sb.t).iter().all(|c| c.norm() < 1e-10));
        }
    }

    #[test]
    fn half_line_rejected() {
        assert!(matches!(
            SpectralPoint::from_parts(2.0, 0.0),
            Err(Error::InvalidSpectralPoint { .. })
        ));
    }

    #[test]
    fn near_support_keeps_positive_imaginary_parts() {
        let rhos: Vec<f64> = (0..40).map(|i| [0.2, 0.5, 0.9][i % 3]).collect();
        let e = CorrelationEnsemble::exponential(10, 40, &rhos).unwrap();
        let z = SpectralPoint::from_parts(1e-4, 1e-4).unwrap();
        let opts = SolveOptions {
            max_iter: 100_000,
            ..SolveOptions::default()
        };
        let sol = solve_deltas(&e, z, &opts).unwrap();
        assert!(sol.delta.iter().all(|d| d.im > 0.0));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let e = identity(4, 16);
        let z = SpectralPoint::from_parts(1.0, 1e-6).unwrap();
        let opts = SolveOptions {
            max_iter: 3,
            ..SolveOptions::default()
        };
        match solve_deltas(&e, z, &opts) {
            Err(Error::NonConvergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn accelerated_iteration_reaches_the_same_point() {
        let rhos: Vec<f64> = (0..60).map(|i| [0.2, 0.5, 0.9][i % 3]).collect();
        let e = CorrelationEnsemble::exponential(15, 60, &rhos).unwrap();
        let opts = SolveOptions {
            tol: 1e-12,
            max_iter: 200_000,
            damping: None,
        };
        let zero = vec![C64::new(0.0, 0.0); 3];
        for z in [
            C64::new(-1.0, 0.0),
            C64::new(0.1, 1e-4),
            C64::new(1.0, 1e-3),
            C64::new(30.0, 1e-4),
        ] {
            let z = SpectralPoint::new(z).unwrap();
            let (plain, it_plain, _) = iterate_profiles(&e, &z, &opts, &zero).unwrap();
            let (fast, it_fast, _) = iterate_profiles_accelerated(&e, &z, &opts, &zero).unwrap();
            assert!(it_fast <= it_plain);
            for (a, b) in plain.iter().zip(&fast) {
                assert!((a - b).norm() < 1e-9, "{z:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn stieltjes_tail() {
        let e = identity(16, 64);
        let z = SpectralPoint::from_parts(0.0, 1e6).unwrap();
        let m = m_of_z(&e, z).unwrap();
        assert!((z.z() * m + 1.0).norm() < 1e-5);
    }

    #[test]
    fn conjugate_symmetry() {
        let e = CorrelationEnsemble::exponential(6, 12, &[0.3; 12]).unwrap();
        let up = m_of_z(&e, SpectralPoint::from_parts(0.8, 0.2).unwrap()).unwrap();
        let down = m_of_z(&e, SpectralPoint::from_parts(0.8, -0.2).unwrap()).unwrap();
        assert!((up - down.conj()).norm() < 1e-12);
    }

    #[test]
    fn zero_solution_closed_form() {
        for (dim, n, c) in [(64, 256, 0.25), (64, 128, 0.5)] {
            let e = identity(dim, n);
            let sol = solve_at_zero(&e, 1e-12).unwrap();
            let want = c / (1.0 - c);
            assert!(sol.ell.iter().all(|l| (l - want).abs() < 1e-10));
            assert!((sol.jacobian_radius - c).abs() < 1e-8);
            assert!(sol.jacobian_radius <= sol.radius_bound + RADIUS_SLACK);
            // the certificate is tight for white ensembles
            assert!((sol.certified_bound - c).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_solution_dense_path() {
        let e = identity_dense(8, 32);
        let sol = solve_at_zero(&e, 1e-12).unwrap();
        assert!(sol.ell.iter().all(|l| (l - 1.0 / 3.0).abs() < 1e-10));
        assert!((sol.jacobian_radius - 0.25).abs() < 1e-8);
    }

    #[test]
    fn jacobian_identity_case() {
        let e = identity(64, 256);
        let ell = vec![1.0 / 3.0; 256];
        let rep = jacobian_at_zero(&e, &ell).unwrap();
        let want = 64.0 / (256.0 * 256.0);
        assert!(rep.j.iter().all(|v| (v - want).abs() < 1e-15));
        assert!((rep.rho - 0.25).abs() < 1e-8);
        assert!((rep.bound - 0.75).abs() < 1e-14);
        let e = identity(64, 128);
        let rep = jacobian_at_zero(&e, &vec![1.0; 128]).unwrap();
        assert!((rep.rho - 0.5).abs() < 1e-8 && (rep.bound - 0.5).abs() < 1e-14);
    }

    #[test]
    fn stated_bound_fails_above_half_but_certificate_holds() {
        let e = identity(48, 64);
        let rep = jacobian_at_zero(&e, &vec![3.0; 64]).unwrap();
        assert!((rep.rho - 0.75).abs() < 1e-8);
        assert!((rep.bound - 0.25).abs() < 1e-14 && rep.rho > rep.bound);
        assert!((rep.certified_bound - 0.75).abs() < 1e-14);
    }

    #[test]
    fn jacobian_rejects_non_fixed_point() {
        let e = identity(4, 16);
        let err = jacobian_at_zero(&e, &[1.0; 16]).unwrap_err();
        assert!(matches!(err, Error::JacobianIdentity { .. }));
    }

    #[test]
    fn mixed_exponential_zero_bound() {
        let rhos: Vec<f64> = (0..48).map(|i| [0.2, 0.5, 0.9][i % 3]).collect();
        let e = CorrelationEnsemble::exponential(12, 48, &rhos).unwrap();
        let sol = solve_at_zero(&e, 1e-12).unwrap();
        let c = e.ratio();
        let min = sol.ell.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(min <= c / (1.0 - c) + 1e-10);
        assert!(sol.residual < 1e-11);
        assert!(sol.jacobian_radius < 1.0 && sol.jacobian_radius <= sol.radius_bound);
        // outer path is entrywise nondecreasing in p
        for w in sol.p_solutions.windows(2) {
            assert!(w[0].iter().zip(&w[1]).all(|(a, b)| *b >= a - 1e-12));
        }
    }

    #[test]
    fn dense_jacobian_matches_finite_differences() {
        let mut omegas = Vec::new();
        for i in 0..9 {
            omegas.push(exponential_matrix(
                3,
                0.1 * (i % 4) as f64 + 0.05 * i as f64,
            ));
        }
        let e = CorrelationEnsemble::from_matrices(omegas).unwrap();
        let sol = solve_at_zero(&e, 1e-13).unwrap();
        let rep = jacobian_at_zero(&e, &sol.ell).unwrap();
        let h = 1e-6;
        for m in 0..9 {
            let mut up = sol.ell.clone();
            let mut dn = sol.ell.clone();
            up[m] += h;
            dn[m] -= h;
            let fu = phi(&e, &up, 0.0).unwrap();
            let fd = phi(&e, &dn, 0.0).unwrap();
            for i in 0..9 {
                let fdiff = (fu[i] - fd[i]) / (2.0 * h);
                assert!((fdiff - rep.j[(i, m)]).abs() < 1e-7, "J[{i},{m}]");
            }
        }
    }
}
