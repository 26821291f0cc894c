//! Gaussian draws from a correlation ensemble, empirical spectra and the
//! Monte Carlo experiments built on them.
//!
//! Column `i` of trial seed `s` is drawn from a ChaCha8 stream keyed by
//! `(s, i)`, so draws are independent of evaluation order and thread count.
//! Trial `t` of a run with base seed `seed0` uses `seed0 + t` (wrapping).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::linalg::{self, CMatrix, C64};
use crate::model::CorrelationEnsemble;
use crate::moments;
use crate::solver::{self, SolveOptions, SpectralPoint};
use crate::stats;
use crate::{Error, Result};

/// Eigenvalues down to `-EIGEN_CLAMP · max(1, λ_max)` are jitter and clamp to 0.
pub const EIGEN_CLAMP: f64 = 1e-10;
/// Relative tolerance for `Σ λ = (1/n) ‖Σ‖_F²`.
pub const TRACE_TOL: f64 = 1e-8;
/// Trials per control variate in the bias experiment.
const TRIALS_PER_CONTROL: usize = 20;

pub fn trial_seed(seed0: u64, trial: usize) -> u64 {
    seed0.wrapping_add(trial as u64)
}

fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(column as u64);
    rng
}

/// `N` circularly-symmetric standard complex Gaussians, `E |g_j|² = 1`.
fn complex_gaussians(rng: &mut ChaCha8Rng, len: usize, out: &mut [C64]) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for slot in out.iter_mut().take(len) {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        *slot = C64::new(re * s, im * s);
    }
}

/// The `N × n` matrix with columns `Θ_i g_i`.
pub fn sample_matrix(ensemble: &CorrelationEnsemble, seed: u64) -> CMatrix {
    let dim = ensemble.dim();
    let n = ensemble.columns();
    let thetas = ensemble.profile_thetas();
    let mut sigma = CMatrix::zeros(dim, n);
    for (g, theta) in thetas.iter().enumerate() {
        let cols: Vec<usize> = (0..n).filter(|&i| ensemble.assignment()[i] == g).collect();
        let mut raw = CMatrix::zeros(dim, cols.len());
        for (k, &i) in cols.iter().enumerate() {
            let mut rng = column_rng(seed, i);
            complex_gaussians(&mut rng, dim, raw.column_mut(k).as_mut_slice());
        }
        let mixed = if linalg::is_identity(theta) {
            raw
        } else {
            linalg::complex_matmul(theta, &raw)
        };
        for (k, &i) in cols.iter().enumerate() {
            sigma.set_column(i, &mixed.column(k));
        }
    }
    sigma
}

/// Ascending eigenvalues of `(1/n) Σ Σ*`.
pub fn gram_eigenvalues(sigma: &CMatrix) -> Result<Vec<f64>> {
    let (dim, n) = sigma.shape();
    if dim > n {
        return Err(Error::Precondition(format!("need N <= n, got {dim} x {n}")));
    }
    let w = linalg::gram(sigma);
    let mut values = linalg::hermitian_eigenvalues(&w)?;
    let scale = values.last().copied().unwrap_or(0.0).abs().max(1.0);
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v >= -EIGEN_CLAMP * scale {
                *v = 0.0;
            } else {
                return Err(Error::Eigensolver(format!(
                    "Gram eigenvalue {v:e} is negative beyond rounding"
                )));
            }
        }
    }
    let frob = sigma.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
    let sum: f64 = values.iter().sum();
    if (sum - frob).abs() > TRACE_TOL * frob.max(f64::MIN_POSITIVE) {
        return Err(Error::Eigensolver(format!(
            "eigenvalue sum {sum:e} does not match trace {frob:e}"
        )));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    /// [`CorrelationEnsemble::fingerprint`] of the sampled ensemble.
    pub ensemble_id: u64,
    pub seeds: Vec<u64>,
    pub eigenvalue_sets: Vec<Vec<f64>>,
    pub lambda_min: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub batch: TrialBatch,
    pub min_over_trials: f64,
    pub test_interval: Option<(f64, f64)>,
    /// Eigenvalues inside the test interval, per trial.
    pub counts: Vec<usize>,
}

impl GapReport {
    pub fn total_in_interval(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Eigenvalue sets for `trials` consecutive seeds, in trial order.
pub fn sample_spectra(
    ensemble: &CorrelationEnsemble,
    trials: usize,
    seed0: u64,
) -> Result<TrialBatch> {
    if trials == 0 {
        return Err(Error::Precondition("need at least one trial".into()));
    }
    // force the lazy square roots before fanning out
    ensemble.profile_thetas();
    let seeds: Vec<u64> = (0..trials).map(|t| trial_seed(seed0, t)).collect();
    let sets: Vec<Result<Vec<f64>>> = seeds
        .par_iter()
        .map(|&s| gram_eigenvalues(&sample_matrix(ensemble, s)))
        .collect();
    let eigenvalue_sets = sets.into_iter().collect::<Result<Vec<_>>>()?;
    let lambda_min = eigenvalue_sets.iter().map(|v| v[0]).collect();
    Ok(TrialBatch {
        ensemble_id: ensemble.fingerprint(),
        seeds,
        eigenvalue_sets,
        lambda_min,
    })
}

/// Smallest eigenvalue per trial and the number of eigenvalues in the closed
/// `test_interval`.
pub fn monte_carlo_gap(
    ensemble: &CorrelationEnsemble,
    trials: usize,
    seed0: u64,
    test_interval: Option<(f64, f64)>,
) -> Result<GapReport> {
    if let Some((a, b)) = test_interval {
        if !(a <= b) {
            return Err(Error::Precondition(format!(
                "empty test interval [{a}, {b}]"
            )));
        }
    }
    let batch = sample_spectra(ensemble, trials, seed0)?;
    let min_over_trials = batch
        .lambda_min
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let counts = batch
        .eigenvalue_sets
        .iter()
        .map(|set| match test_interval {
            Some((a, b)) => set.iter().filter(|&&l| a <= l && l <= b).count(),
            None => 0,
        })
        .collect();
    Ok(GapReport {
        batch,
        min_over_trials,
        test_interval,
        counts,
    })
}

#[derive(Debug, Clone)]
pub struct ScalingReport {
    pub sizes: Vec<usize>,
    /// `|E (1/N) tr Q(z) - m_N(z)|` per size.
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Deterministic equivalents `m_N(z)`.
    pub m_values: Vec<C64>,
    /// Number of power-moment control variates used per size.
    pub degrees: Vec<usize>,
    pub trials: usize,
    /// Log-log least-squares fit of `values` against `sizes`.
    pub slope: f64,
    pub intercept: f64,
}

impl ScalingReport {
    /// Fails with the first size whose bias is below three standard errors.
    pub fn check_signal(&self) -> Result<()> {
        for ((&size, &bias), &stderr) in self.sizes.iter().zip(&self.values).zip(&self.stderrs) {
            if !(bias >= 3.0 * stderr) {
                return Err(Error::SignalBelowNoise { size, bias, stderr });
            }
        }
        Ok(())
    }
}

/// Bias of `(1/N) tr Q(z)` per size, without the signal check.
///
/// Each size's mean is estimated with the power moments `(1/N) tr W^k` as
/// control variates; their exact expectations come from
/// [`moments::expected_power_moments`]. The degree is the largest within
/// the exact-moment budget and at most `trials / 20`.
pub fn bias_scaling_report(
    family: &[CorrelationEnsemble],
    z: SpectralPoint,
    trials: usize,
    seed0: u64,
) -> Result<ScalingReport> {
    if family.len() < 3 {
        return Err(Error::Precondition(format!(
            "bias scaling needs at least 3 sizes, got {}",
            family.len()
        )));
    }
    if family.windows(2).any(|w| w[0].dim() >= w[1].dim()) {
        return Err(Error::Precondition(
            "family sizes must be strictly increasing".into(),
        ));
    }
    if trials < 2 {
        return Err(Error::Precondition(
            "bias scaling needs at least 2 trials".into(),
        ));
    }
    let opts = SolveOptions {
        tol: 1e-14,
        max_iter: 100_000,
        damping: None,
    };
    let mut report = ScalingReport {
        sizes: Vec::new(),
        values: Vec::new(),
        stderrs: Vec::new(),
        m_values: Vec::new(),
        degrees: Vec::new(),
        trials,
        slope: f64::NAN,
        intercept: f64::NAN,
    };
    for ensemble in family {
        let m = solver::solve_deltas(ensemble, z, &opts)?.m;
        let degree =
            moments::max_degree(ensemble.profiles().len()).min(trials / TRIALS_PER_CONTROL);
        let exact = moments::expected_power_moments(ensemble, degree)?;
        let batch = sample_spectra(ensemble, trials, seed0)?;
        let mut re = Vec::with_capacity(trials);
        let mut im = Vec::with_capacity(trials);
        let mut controls = vec![Vec::with_capacity(trials); degree];
        for set in &batch.eigenvalue_sets {
            let s: C64 = set
                .iter()
                .map(|&l| (C64::new(l, 0.0) - z.z()).inv())
                .sum::<C64>()
                / set.len() as f64;
            re.push(s.re);
            im.push(s.im);
            for (k, p) in moments::empirical_power_moments(set, degree)
                .iter()
                .enumerate()
            {
                controls[k].push(p - exact[k]);
            }
        }
        let (mean_re, se_re) = stats::control_variate_mean(&re, &controls)?;
        let (mean_im, se_im) = if z.is_real() {
            (0.0, 0.0)
        } else {
            stats::control_variate_mean(&im, &controls)?
        };
        report.sizes.push(ensemble.dim());
        report.values.push((C64::new(mean_re, mean_im) - m).norm());
        report.stderrs.push(se_re.hypot(se_im));
        report.m_values.push(m);
        report.degrees.push(degree);
    }
    let xs: Vec<f64> = report.sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = report.values.iter().map(|v| v.ln()).collect();
    if ys.iter().all(|v| v.is_finite()) {
        let (slope, intercept) = stats::linear_fit(&xs, &ys)?;
        report.slope = slope;
        report.intercept = intercept;
    }
    Ok(report)
}

/// [`bias_scaling_report`] followed by [`ScalingReport::check_signal`].
pub fn bias_scaling(
    family: &[CorrelationEnsemble],
    z: SpectralPoint,
    trials: usize,
    seed0: u64,
) -> Result<ScalingReport> {
    let report = bias_scaling_report(family, z, trials, seed0)?;
    report.check_signal()?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct VarianceReport {
    /// Sample variance `Σ |X_t - X̄|² / (T - 1)` of `X = (1/n) tr A Q(z)`.
    pub measured_var: f64,
    pub bound: f64,
    pub mean: C64,
    /// `|Im z|` was replaced by the distance from `z` to `[0, ∞)`.
    pub distance_substituted: bool,
    pub trials: usize,
}

/// `(2 w_max / n²) ‖A‖² (|z| + 1)(s⁻⁴ + s⁻³)` with `s = |Im z|`, or the
/// distance to `[0, ∞)` for negative real `z`.
pub fn variance_bound(
    ensemble: &CorrelationEnsemble,
    a_norm: f64,
    z: SpectralPoint,
) -> (f64, bool) {
    let substituted = z.is_real();
    let s = if substituted {
        z.distance_to_half_line()
    } else {
        z.z().im.abs()
    };
    let n = ensemble.columns() as f64;
    let c = 2.0 * ensemble.w_max();
    let bound = c / (n * n) * a_norm * a_norm * (z.z().norm() + 1.0) * (s.powi(-4) + s.powi(-3));
    (bound, substituted)
}

/// Sample variance of `(1/n) tr A Q(z)` over `trials` draws against the bound.
pub fn variance_scaling(
    ensemble: &CorrelationEnsemble,
    a: &CMatrix,
    z: SpectralPoint,
    trials: usize,
    seed0: u64,
) -> Result<VarianceReport> {
    let dim = ensemble.dim();
    if a.shape() != (dim, dim) {
        return Err(Error::Dimension(format!(
            "A must be {dim}x{dim}, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    linalg::ensure_hermitian(a, crate::model::HERMITIAN_TOL)?;
    if z.z().im < 0.0 {
        return Err(Error::Precondition(
            "variance bound needs Im z > 0 or z < 0".into(),
        ));
    }
    if trials < 2 {
        return Err(Error::Precondition(
            "variance needs at least 2 trials".into(),
        ));
    }
    ensemble.profile_thetas();
    let n = ensemble.columns() as f64;
    let samples: Vec<Result<C64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = linalg::gram(&sample_matrix(ensemble, trial_seed(seed0, t)));
            let shifted = w - CMatrix::from_diagonal_element(dim, dim, z.z());
            let qa = shifted
                .lu()
                .solve(a)
                .ok_or_else(|| Error::Singular("W - zI is singular".into()))?;
            Ok(linalg::trace(&qa) / n)
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = samples.iter().sum::<C64>() / trials as f64;
    let measured_var =
        samples.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (trials - 1) as f64;
    let (bound, distance_substituted) = variance_bound(ensemble, linalg::spectral_norm(a), z);
    if !(measured_var <= bound) {
        return Err(Error::InequalityViolation(format!(
            "variance {measured_var:e} exceeds bound {bound:e}"
        )));
    }
    Ok(VarianceReport {
        measured_var,
        bound,
        mean,
        distance_substituted,
        trials,
    })
}
