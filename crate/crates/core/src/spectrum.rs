//! Density of the deterministic equivalent by Stieltjes inversion, support
//! detection and the gap at zero.

use rayon::prelude::*;

use crate::linalg::C64;
use crate::model::CorrelationEnsemble;
use crate::solver::{self, SolveOptions, SpectralPoint, ZeroSolution};
use crate::{Error, Result};

/// Default offset `y` of `x + iy`.
pub const DEFAULT_Y: f64 = 1e-4;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Negative densities down to this are rounding and clamp to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-9;
/// Grid points solved sequentially with warm starts; chunks run in parallel.
const CHUNK: usize = 32;

fn sweep_options() -> SolveOptions {
    SolveOptions {
        tol: 1e-11,
        max_iter: 200_000,
        damping: None,
    }
}

#[derive(Debug, Clone)]
pub struct DensityCurve {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub y_imag: f64,
    /// Trapezoid integral of `ys` over `xs`.
    pub mass: f64,
    /// Largest iteration count over the grid.
    pub max_iterations: usize,
}

impl DensityCurve {
    /// Trapezoid integral of `f(x) · density(x)`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        trapezoid(
            &self.xs,
            &self
                .xs
                .iter()
                .zip(&self.ys)
                .map(|(x, y)| f(*x) * y)
                .collect::<Vec<_>>(),
        )
    }

    /// Cumulative trapezoid integral at every grid point.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.xs.len());
        out.push(0.0);
        for j in 1..self.xs.len() {
            acc += 0.5 * (self.ys[j] + self.ys[j - 1]) * (self.xs[j] - self.xs[j - 1]);
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SupportReport {
    /// Disjoint, sorted `[a_k, b_k]`.
    pub intervals: Vec<(f64, f64)>,
    pub epsilon_at_zero: f64,
    pub threshold: f64,
    pub y_imag: f64,
    pub grid_step: f64,
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
        .sum()
}

pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi - lo) / (points - 1) as f64;
    (0..points)
        .map(|j| {
            if j + 1 == points {
                hi
            } else {
                lo + step * j as f64
            }
        })
        .collect()
}

/// Converged state at one grid point.
#[derive(Debug, Clone)]
struct GridSolution {
    density: f64,
    profile_delta: Vec<C64>,
    iterations: usize,
}

fn solve_point(
    ensemble: &CorrelationEnsemble,
    x: f64,
    y: f64,
    init: &[C64],
) -> Result<GridSolution> {
    let wrap = |e: Error| Error::GridPoint {
        x,
        source: Box::new(e),
    };
    let z = SpectralPoint::from_parts(x, y).map_err(wrap)?;
    let (delta, iterations, _) =
        solver::iterate_profiles_accelerated(ensemble, &z, &sweep_options(), init).map_err(wrap)?;
    let m = solver::m_from_profiles(ensemble, &delta, &z).map_err(wrap)?;
    let raw = m.im / std::f64::consts::PI;
    let density = if raw >= 0.0 {
        raw
    } else if raw >= -NEGATIVE_CLAMP {
        0.0
    } else {
        return Err(wrap(Error::NegativeDensity { x, value: raw }));
    };
    Ok(GridSolution {
        density,
        profile_delta: delta,
        iterations,
    })
}

/// Solves every grid point; chunks are warm-started internally and run in
/// parallel, so the result does not depend on the thread count.
fn sweep(ensemble: &CorrelationEnsemble, xs: &[f64], y: f64) -> Result<Vec<GridSolution>> {
    let groups = ensemble.profiles().len();
    let chunks: Vec<Result<Vec<GridSolution>>> = xs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut init = vec![C64::new(0.0, 0.0); groups];
            let mut out = Vec::with_capacity(chunk.len());
            for &x in chunk {
                let sol = solve_point(ensemble, x, y, &init)?;
                init.clone_from(&sol.profile_delta);
                out.push(sol);
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(xs.len());
    for c in chunks {
        all.extend(c?);
    }
    Ok(all)
}

/// `(1/π) Im m_N(x + iy)` on `steps` equally spaced points of `[x_lo, x_hi]`.
pub fn density(
    ensemble: &CorrelationEnsemble,
    x_lo: f64,
    x_hi: f64,
    steps: usize,
    y: f64,
) -> Result<DensityCurve> {
    if !(x_lo < x_hi) || !x_lo.is_finite() || !x_hi.is_finite() {
        return Err(Error::Precondition(format!(
            "need x_lo < x_hi, got [{x_lo}, {x_hi}]"
        )));
    }
    if steps < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 grid points, got {steps}"
        )));
    }
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Precondition(format!("y must be positive, got {y}")));
    }
    let xs = linspace(x_lo, x_hi, steps);
    let sols = sweep(ensemble, &xs, y)?;
    let ys: Vec<f64> = sols.iter().map(|s| s.density).collect();
    let max_iterations = sols.iter().map(|s| s.iterations).max().unwrap_or(0);
    let mass = trapezoid(&xs, &ys);
    Ok(DensityCurve {
        xs,
        ys,
        y_imag: y,
        mass,
        max_iterations,
    })
}

/// `(1/N) Σ_k (1/n) tr Ω_k`, the first moment of the limiting measure.
pub fn first_moment(ensemble: &CorrelationEnsemble) -> f64 {
    let total: f64 = ensemble
        .profiles()
        .iter()
        .zip(ensemble.profile_counts())
        .map(|(p, &count)| count as f64 * crate::linalg::trace(p).re)
        .sum();
    total / (ensemble.columns() as f64 * ensemble.dim() as f64)
}

/// A priori right end for support grids, `4 · first_moment · w_max / w_min`.
pub fn support_upper_bound(ensemble: &CorrelationEnsemble) -> f64 {
    4.0 * first_moment(ensemble) * ensemble.w_max() / ensemble.w_min()
}

/// `|iy · m_N(iy) + 1|`.
pub fn mass_check(ensemble: &CorrelationEnsemble, y: f64) -> Result<f64> {
    let z = SpectralPoint::from_parts(0.0, y)?;
    let m = solver::m_of_z(ensemble, z)?;
    Ok((z.z() * m + 1.0).norm())
}

/// `m̄(0) = (1/N) tr ((1/n) Σ_k Ω_k / (1 + ℓ_k))^{-1}`.
pub fn m_at_zero(ensemble: &CorrelationEnsemble, zero: &ZeroSolution) -> Result<f64> {
    if zero.ell.len() != ensemble.columns() {
        return Err(Error::Dimension(
            "zero solution belongs to another ensemble".into(),
        ));
    }
    let n = ensemble.columns() as f64;
    let mut weights = vec![C64::new(0.0, 0.0); ensemble.profiles().len()];
    for (&g, l) in ensemble.assignment().iter().zip(&zero.ell) {
        weights[g] += C64::new(1.0 / ((1.0 + l) * n), 0.0);
    }
    let r = solver::resolvent(ensemble, &weights, C64::new(0.0, 0.0), false)?;
    Ok(r.trace_t.re / ensemble.dim() as f64)
}

/// Support detection with the a priori grid check.
pub fn detect_support(
    ensemble: &CorrelationEnsemble,
    x_hi: f64,
    steps: usize,
    y: f64,
    threshold: f64,
) -> Result<SupportReport> {
    let bound = support_upper_bound(ensemble);
    if !(x_hi > bound) {
        return Err(Error::Precondition(format!(
            "x_hi = {x_hi} does not exceed the a priori support bound {bound}"
        )));
    }
    detect_support_unchecked(ensemble, x_hi, steps, y, threshold)
}

/// Support detection on `[0, x_hi]` without the a priori bound; the caller
/// vouches for the grid. A run touching `x_hi` is still reported as
/// truncated.
pub fn detect_support_unchecked(
    ensemble: &CorrelationEnsemble,
    x_hi: f64,
    steps: usize,
    y: f64,
    threshold: f64,
) -> Result<SupportReport> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::Precondition(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    if !(x_hi > 0.0) {
        return Err(Error::Precondition(format!(
            "x_hi must be positive, got {x_hi}"
        )));
    }
    if steps < 2 {
        return Err(Error::Precondition(format!(
            "need at least 2 grid points, got {steps}"
        )));
    }
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Precondition(format!("y must be positive, got {y}")));
    }
    let xs = linspace(0.0, x_hi, steps);
    let grid_step = xs[1] - xs[0];
    let sols = sweep(ensemble, &xs, y)?;
    let above: Vec<bool> = sols.iter().map(|s| s.density >= threshold).collect();
    if !above.iter().any(|&a| a) {
        return Err(Error::EmptySupport { threshold });
    }
    if above[above.len() - 1] {
        return Err(Error::TruncatedSupport { x_hi });
    }

    let refine = |below: usize, inside: usize| -> Result<f64> {
        // density(x_below) < threshold <= density(x_inside)
        let (mut lo, mut hi) = (xs[below], xs[inside]);
        let mut init = sols[inside].profile_delta.clone();
        while (hi - lo).abs() > grid_step / 100.0 {
            let mid = 0.5 * (lo + hi);
            let s = solve_point(ensemble, mid, y, &init)?;
            if s.density >= threshold {
                hi = mid;
                init = s.profile_delta;
            } else {
                lo = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };

    let mut runs = Vec::new();
    let mut j = 0;
    while j < above.len() {
        if !above[j] {
            j += 1;
            continue;
        }
        let start = j;
        while j + 1 < above.len() && above[j + 1] {
            j += 1;
        }
        runs.push((start, j));
        j += 1;
    }
    let edges: Vec<Result<(f64, f64)>> = runs
        .par_iter()
        .map(|&(start, end)| {
            let a = if start == 0 {
                0.0
            } else {
                refine(start - 1, start)?
            };
            let b = refine(end + 1, end)?;
            Ok((a, b))
        })
        .collect();
    let mut intervals = Vec::with_capacity(edges.len());
    for e in edges {
        intervals.push(e?);
    }
    Ok(SupportReport {
        epsilon_at_zero: intervals[0].0,
        intervals,
        threshold,
        y_imag: y,
        grid_step,
    })
}
