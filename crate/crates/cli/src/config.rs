use std::fs;
use std::path::{Path, PathBuf};

use gramgap_core::EnsembleConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a command reads. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    /// Offset `y` of `x + iy` for Stieltjes inversion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `[re, im]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_interval: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_eigenvalues: Option<bool>,
    /// Row dimensions of a scaling family; `n` follows at the ratio of `ensemble`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<VarianceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selftest: Option<SelfTestConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_hi: Option<f64>,
    /// Number of grid points.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

/// Variance of `(1/n) tr Q(z)` per family member, run alongside the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    pub z: [f64; 2],
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfTestConfig {
    pub witnesses: usize,
    pub triples: usize,
    pub jensen: usize,
}

impl Default for SelfTestConfig {
    fn default() -> Self {
        Self {
            witnesses: 500,
            triples: 1000,
            jensen: 1000,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Range checks on every field that is present.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if let Some(y) = self.y {
            if !(y > 0.0 && y.is_finite()) {
                return bad(format!("y must be positive and finite, got {y}"));
            }
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("threshold must be positive and finite, got {t}"));
            }
        }
        if self.trials == Some(0) {
            return bad("trials must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if let Some(g) = &self.grid {
            if let Some(steps) = g.steps {
                if steps < 2 {
                    return bad(format!("grid needs at least 2 points, got {steps}"));
                }
            }
            for v in [g.x_lo, g.x_hi].into_iter().flatten() {
                if !v.is_finite() {
                    return bad(format!("grid bounds must be finite, got {v}"));
                }
            }
            if let (Some(lo), Some(hi)) = (g.x_lo, g.x_hi) {
                if !(lo < hi) {
                    return bad(format!("grid needs x_lo < x_hi, got [{lo}, {hi}]"));
                }
            }
        }
        if let Some([re, im]) = self.z {
            if !(re.is_finite() && im.is_finite()) {
                return bad("z must be finite".into());
            }
        }
        if let Some([a, b]) = self.test_interval {
            if !(a <= b) {
                return bad(format!("test interval [{a}, {b}] is empty"));
            }
        }
        if let Some(sizes) = &self.sizes {
            if sizes.contains(&0) {
                return bad("sizes must be positive".into());
            }
        }
        if let Some(v) = &self.variance {
            if v.trials < 2 {
                return bad("variance needs at least 2 trials".into());
            }
        }
        Ok(())
    }

    /// The config as it affects results: seed resolved, output location and
    /// worker count dropped.
    pub fn echo(&self, seed: u64) -> serde_json::Value {
        let mut c = self.clone();
        c.seed = Some(seed);
        c.out_dir = None;
        c.workers = None;
        serde_json::to_value(c).expect("config serializes")
    }
}
