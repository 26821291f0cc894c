//! Summary statistics used by the Monte Carlo experiments.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (sample_variance(xs) / xs.len() as f64).sqrt())
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Precondition(
            "linear fit needs two or more paired points".into(),
        ));
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition(
            "linear fit needs distinct abscissae".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Linear-interpolated quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Control-variate estimate of `E[y]`.
///
/// Every control must have an exactly known mean of zero (callers subtract
/// the exact expectation first). Regresses `y` on `[1, controls]` and
/// returns the intercept with its OLS standard error. Constant controls are
/// dropped.
pub fn control_variate_mean(y: &[f64], controls: &[Vec<f64>]) -> Result<(f64, f64)> {
    let t = y.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for c in controls {
        if c.len() != t {
            return Err(Error::Dimension(
                "control length differs from sample length".into(),
            ));
        }
        let sd = sample_variance(c).sqrt();
        if sd > 0.0 && sd.is_finite() {
            cols.push(c.iter().map(|v| v / sd).collect());
        }
    }
    let p = cols.len() + 1;
    if t <= p {
        return Err(Error::Precondition(format!(
            "{t} samples cannot support {p} regression terms"
        )));
    }
    let x = DMatrix::from_fn(t, p, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let svd = x.clone().svd(true, true);
    let cutoff = svd.singular_values.max() * 1e-12;
    let beta = svd
        .solve(&DVector::from_column_slice(y), cutoff)
        .map_err(|e| Error::Precondition(e.into()))?;
    let resid = DVector::from_column_slice(y) - &x * &beta;
    let sigma2 = resid.norm_squared() / (t - p) as f64;
    // [(XᵀX)^{-1}]_{00} = Σ_k V_{0k}² / s_k²
    let v_t = svd.v_t.as_ref().expect("computed");
    let mut inv00 = 0.0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s > cutoff {
            inv00 += v_t[(k, 0)] * v_t[(k, 0)] / (s * s);
        }
    }
    Ok((beta[0], (sigma2 * inv00).sqrt()))
}
