//! Linear-algebra lemmas with property-test surfaces.
//!
//! * positive systems: `u = A u + v` with `A ≥ 0`, `u, v > 0` forces
//!   `ρ(A) ≤ 1 - min v / max u < 1`;
//! * trace inequality: `(1/n) tr A A* ≥ |(1/n) tr A|²` for Hermitian `A`;
//! * Hadamard dominance: `|A_ij| ≤ √(B_ij C_ij)` gives
//!   `ρ(A) ≤ √(ρ(B) ρ(C))` and, when `ρ(B), ρ(C) < 1`, the matching bound on
//!   `‖(I - ·)^{-1}‖_∞`.

use nalgebra::{DMatrix, DVector, Schur};
use rand::Rng;

use crate::linalg::{self, CMatrix, C64};
use crate::{Error, Result};

/// Slack granted to proven inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-10;
/// Residual tolerance for positive-system witnesses.
pub const WITNESS_TOL: f64 = 1e-10;

const SCHUR_MAX_ITER: usize = 10_000;

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m.nrows(), m.ncols())?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Eigensolver("real Schur decomposition did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, e| acc.max(e.norm())))
}

/// Largest eigenvalue modulus of a complex square matrix.
pub fn spectral_radius_complex(m: &CMatrix) -> Result<f64> {
    check_square(m.nrows(), m.ncols())?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Eigensolver("complex Schur decomposition did not converge".into()))?;
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::Eigensolver("Schur form is not triangular".into()))?;
    Ok(eig.iter().fold(0.0f64, |acc, e| acc.max(e.norm())))
}

/// `‖D^k‖_∞^{1/k}`, which tends to `ρ(D)` as `k` grows.
pub fn power_norm_radius(m: &DMatrix<f64>, k: u32) -> Result<f64> {
    check_square(m.nrows(), m.ncols())?;
    if k == 0 {
        return Err(Error::Domain("power must be positive".into()));
    }
    let mut log_norm = 0.0;
    let mut power = m.clone();
    for step in 1..=k {
        if step > 1 {
            power = &power * m;
        }
        let s = inf_norm(&power);
        if s == 0.0 {
            return Ok(0.0);
        }
        // renormalise so that high powers stay in range
        log_norm += s.ln();
        power /= s;
    }
    Ok((log_norm / k as f64).exp())
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square(rows: usize, cols: usize) -> Result<()> {
    if rows != cols {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// `A ≥ 0` and `u, v > 0` with `u = A u + v`.
#[derive(Debug, Clone)]
pub struct PositiveSystemWitness {
    a: DMatrix<f64>,
    u: DVector<f64>,
    v: DVector<f64>,
}

impl PositiveSystemWitness {
    pub fn new(a: DMatrix<f64>, u: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        check_square(a.nrows(), a.ncols())?;
        if u.len() != a.nrows() || v.len() != a.nrows() {
            return Err(Error::Dimension("u and v must match the size of A".into()));
        }
        if a.iter().any(|x| !(*x >= 0.0)) || u.iter().chain(v.iter()).any(|x| !(*x > 0.0)) {
            return Err(Error::Domain("need A >= 0 and u, v > 0 entrywise".into()));
        }
        let residual = (&u - &a * &u - &v).amax();
        // relative to the size of u so that scaled witnesses behave alike
        let scale = u.amax().max(1.0);
        if !(residual <= WITNESS_TOL * scale) {
            return Err(Error::WitnessInvalid { residual });
        }
        Ok(Self { a, u, v })
    }

    /// Random witness: `A ≥ 0` scaled to a spectral radius below one, `v > 0`
    /// random, `u = (I - A)^{-1} v`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Self> {
        let raw = DMatrix::from_fn(n, n, |_, _| {
            // sparse-ish entries exercise reducible patterns too
            if rng.random::<f64>() < 0.2 {
                0.0
            } else {
                rng.random::<f64>()
            }
        });
        let target = rng.random_range(0.05..0.98);
        let a = scale_to_radius(raw, target)?;
        let v = DVector::from_fn(n, |_, _| rng.random_range(0.01..1.0));
        let lhs = DMatrix::identity(n, n) - &a;
        let u = lhs
            .lu()
            .solve(&v)
            .ok_or_else(|| Error::Singular("I - A is singular".into()))?;
        Self::new(a, u, v)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn v(&self) -> &DVector<f64> {
        &self.v
    }
}

/// Divides a nonnegative matrix by `ρ / target` so that its spectral radius
/// becomes `target`; matrices with zero radius are returned unchanged.
pub fn scale_to_radius(m: DMatrix<f64>, target: f64) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(&m)?;
    if rho == 0.0 {
        return Ok(m);
    }
    Ok(m * (target / rho))
}

/// `(ρ(A), 1 - min v / max u)`; fails if the bound does not hold.
pub fn positive_system_bound(w: &PositiveSystemWitness) -> Result<(f64, f64)> {
    let rho = spectral_radius(&w.a)?;
    let bound = 1.0 - w.v.min() / w.u.max();
    if !(rho <= bound + INEQUALITY_SLACK) || !(bound < 1.0) {
        return Err(Error::InequalityViolation(format!(
            "rho(A) = {rho} > 1 - min v / max u = {bound}"
        )));
    }
    Ok((rho, bound))
}

/// `(1/n) tr A A* - |(1/n) tr A|²` for Hermitian `A`.
pub fn trace_jensen_gap(a: &CMatrix) -> Result<f64> {
    linalg::ensure_square(a, "A")?;
    linalg::ensure_hermitian(a, 1e-12)?;
    let n = a.nrows() as f64;
    let second = a.iter().map(|c| c.norm_sqr()).sum::<f64>() / n;
    let first = linalg::trace(a) / n;
    let gap = second - first.norm_sqr();
    let scale = second.max(1.0);
    if gap < -1e-12 * scale {
        return Err(Error::InequalityViolation(format!(
            "trace gap {gap:e} is negative"
        )));
    }
    Ok(gap.max(0.0))
}

/// True when `A` is a multiple of the identity within `tol` (relative).
pub fn is_scalar_multiple_of_identity(a: &CMatrix, tol: f64) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let mean = linalg::trace(a) / n as f64;
    let scale = linalg::max_abs(a).max(1.0);
    (0..n).all(|j| {
        (0..n).all(|i| {
            let want = if i == j { mean } else { C64::new(0.0, 0.0) };
            (a[(i, j)] - want).norm() <= tol * scale
        })
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DominanceReport {
    pub rho_a: f64,
    pub rho_b: f64,
    pub rho_c: f64,
    /// `(‖(I-A)^{-1}‖_∞, ‖(I-B)^{-1}‖_∞, ‖(I-C)^{-1}‖_∞)` when `ρ(B), ρ(C) < 1`.
    pub norms: Option<(f64, f64, f64)>,
}

/// Checks the Hadamard-dominance lemma on one triple.
pub fn hadamard_dominance(
    a: &CMatrix,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DominanceReport> {
    let n = a.nrows();
    check_square(n, a.ncols())?;
    check_square(b.nrows(), b.ncols())?;
    check_square(c.nrows(), c.ncols())?;
    if b.nrows() != n || c.nrows() != n {
        return Err(Error::Dimension("A, B and C must share one size".into()));
    }
    for j in 0..n {
        for i in 0..n {
            let (bij, cij) = (b[(i, j)], c[(i, j)]);
            if !(bij >= 0.0 && cij >= 0.0) {
                return Err(Error::Domain(format!(
                    "B and C must be nonnegative (entry ({i}, {j}))"
                )));
            }
            let cap = (bij * cij).sqrt();
            if a[(i, j)].norm() > cap * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::DominanceViolation { i, j });
            }
        }
    }
    let rho_a = spectral_radius_complex(a)?;
    let rho_b = spectral_radius(b)?;
    let rho_c = spectral_radius(c)?;
    let geometric = (rho_b * rho_c).sqrt();
    if !(rho_a <= geometric + INEQUALITY_SLACK) {
        return Err(Error::InequalityViolation(format!(
            "rho(A) = {rho_a} > sqrt(rho(B) rho(C)) = {geometric}"
        )));
    }
    // radii within the slack of 1 count as 1: I - B is numerically singular there
    let norms = if rho_b < 1.0 - INEQUALITY_SLACK && rho_c < 1.0 - INEQUALITY_SLACK {
        let na = resolvent_inf_norm_complex(a)?;
        let nb = resolvent_inf_norm(b)?;
        let nc = resolvent_inf_norm(c)?;
        let rhs = (nb * nc).sqrt();
        if !(na <= rhs + 1e-8) {
            return Err(Error::InequalityViolation(format!(
                "||(I-A)^-1|| = {na} > sqrt(||(I-B)^-1|| ||(I-C)^-1||) = {rhs}"
            )));
        }
        Some((na, nb, nc))
    } else {
        None
    };
    Ok(DominanceReport {
        rho_a,
        rho_b,
        rho_c,
        norms,
    })
}

fn resolvent_inf_norm(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    let inv = (DMatrix::identity(n, n) - m)
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - B is singular".into()))?;
    Ok(inf_norm(&inv))
}

fn resolvent_inf_norm_complex(m: &CMatrix) -> Result<f64> {
    let n = m.nrows();
    let inv = (linalg::identity(n) - m)
        .try_inverse()
        .ok_or_else(|| Error::Singular("I - A is singular".into()))?;
    Ok(inv
        .row_iter()
        .map(|r| r.iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max))
}

/// Random triple with `ρ(B), ρ(C) < 1` and `A_ij = e^{iθ_ij} √(B_ij C_ij)`
/// scaled by a random factor in `[0, 1]`.
pub fn random_dominance_triple<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
) -> Result<(CMatrix, DMatrix<f64>, DMatrix<f64>)> {
    let rb = rng.random_range(0.05..0.95);
    let rc = rng.random_range(0.05..0.95);
    let b = scale_to_radius(DMatrix::from_fn(n, n, |_, _| rng.random::<f64>()), rb)?;
    let c = scale_to_radius(DMatrix::from_fn(n, n, |_, _| rng.random::<f64>()), rc)?;
    let a = CMatrix::from_fn(n, n, |i, j| {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let shrink = rng.random::<f64>();
        C64::from_polar(shrink * (b[(i, j)] * c[(i, j)]).sqrt(), theta)
    });
    Ok((a, b, c))
}

/// Random Hermitian matrix with Gaussian-like entries.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMatrix {
    let raw = CMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    linalg::hermitian_part(&raw)
}

/// Violation counts from randomized runs of all three lemmas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SelfTestSummary {
    pub witnesses: usize,
    pub witness_violations: usize,
    pub triples: usize,
    pub triple_violations: usize,
    pub jensen_draws: usize,
    pub jensen_violations: usize,
}

impl SelfTestSummary {
    pub fn violations(&self) -> usize {
        self.witness_violations + self.triple_violations + self.jensen_violations
    }
}

/// Runs the three property suites with the given draw counts.
pub fn self_test<R: Rng + ?Sized>(
    rng: &mut R,
    witnesses: usize,
    triples: usize,
    jensen_draws: usize,
) -> SelfTestSummary {
    let mut s = SelfTestSummary {
        witnesses,
        triples,
        jensen_draws,
        ..Default::default()
    };
    for _ in 0..witnesses {
        let n = rng.random_range(1..=8);
        let ok = PositiveSystemWitness::random(rng, n)
            .and_then(|w| positive_system_bound(&w))
            .is_ok();
        s.witness_violations += usize::from(!ok);
    }
    for _ in 0..triples {
        let n = rng.random_range(1..=8);
        let ok = random_dominance_triple(rng, n)
            .and_then(|(a, b, c)| hadamard_dominance(&a, &b, &c))
            .map(|r| r.norms.is_some())
            .unwrap_or(false);
        s.triple_violations += usize::from(!ok);
    }
    for _ in 0..jensen_draws {
        let n = rng.random_range(1..=8);
        let ok = trace_jensen_gap(&random_hermitian(rng, n)).is_ok();
        s.jensen_violations += usize::from(!ok);
    }
    s
}
