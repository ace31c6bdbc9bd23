//! Network and backoff parameters, their validity ranges and the default
//! parameter formulas used by the figure presets.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};

/// Minislots needed to transmit one update in the default setting.
pub const DEFAULT_MINISLOTS_PER_UPDATE: u64 = 10_000;
pub const DEFAULT_DELTA_SCALE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_sources: usize,
    pub weights: Vec<f64>,
    pub horizon_frames: u64,
    pub seed: u64,
    /// Theorem-exactness mode: every weight must be a positive integer.
    #[serde(default)]
    pub integer_weights: bool,
}

impl NetworkConfig {
    pub fn new(weights: Vec<f64>, horizon_frames: u64, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_sources: weights.len(),
            weights,
            horizon_frames,
            seed,
            integer_weights: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn uniform(n: usize, horizon_frames: u64, seed: u64) -> Result<Self> {
        Self::new(vec![1.0; n], horizon_frames, seed)
    }

    /// Weight of source k (1-indexed) is sqrt(k).
    pub fn sqrt_weights(n: usize, horizon_frames: u64, seed: u64) -> Result<Self> {
        Self::new((1..=n).map(|k| (k as f64).sqrt()).collect(), horizon_frames, seed)
    }

    pub fn with_integer_weights(mut self) -> Result<Self> {
        self.integer_weights = true;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources == 0 {
            return Err(param_err("n_sources must be at least 1"));
        }
        if self.weights.len() != self.n_sources {
            return Err(param_err(format!(
                "expected {} weights, got {}",
                self.n_sources,
                self.weights.len()
            )));
        }
        if let Some((i, w)) = self
            .weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(param_err(format!("weight {i} must be positive, got {w}")));
        }
        if self.integer_weights {
            if let Some((i, w)) = self.weights.iter().enumerate().find(|(_, w)| w.fract() != 0.0) {
                return Err(param_err(format!(
                    "theorem-exactness mode requires integer weights; weight {i} is {w}"
                )));
            }
        }
        if self.horizon_frames == 0 {
            return Err(param_err("horizon must be at least one frame"));
        }
        Ok(())
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffParams {
    pub alpha: f64,
    pub beta: f64,
    pub b_offset: u64,
    pub minislots_per_update: u64,
    /// Idealized timer scale. Timers are compared rather than waited on, so
    /// this only enters the per-frame match threshold.
    pub delta_scale: f64,
}

impl BackoffParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(param_err(format!("alpha must be > 1, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > 1.0) {
            return Err(param_err(format!("beta must be > 1, got {}", self.beta)));
        }
        if self.minislots_per_update == 0 {
            return Err(param_err("minislots_per_update must be at least 1"));
        }
        if !(self.delta_scale > 0.0 && self.delta_scale <= 1.0) {
            return Err(param_err(format!(
                "delta_scale must lie in (0, 1], got {}",
                self.delta_scale
            )));
        }
        Ok(())
    }

    pub fn ln_alpha(&self) -> f64 {
        self.alpha.ln()
    }

    pub fn ln_beta(&self) -> f64 {
        self.beta.ln()
    }
}

/// Base of the `log` appearing in the default beta formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    Natural,
    /// Default: reproduces the reported collision plateau at N = 10.
    #[default]
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }

    /// `max(log(log(n)), 0)`; zero for n <= 1 where the inner log is not positive.
    fn loglog_clamped(self, n: usize) -> f64 {
        let v = self.log(self.log(n as f64));
        if v.is_nan() {
            0.0
        } else {
            v.max(0.0)
        }
    }
}

/// Default parameters for weighted-AoI experiments:
/// alpha = 1 + 1/sum(w), beta = 1.1 + max(log log N, 0), B = 250 + N, M = 10000.
pub fn aoi_defaults(weights: &[f64], log_base: LogBase) -> BackoffParams {
    let n = weights.len();
    let wsum: f64 = weights.iter().sum();
    BackoffParams {
        alpha: 1.0 + 1.0 / wsum,
        beta: 1.1 + log_base.loglog_clamped(n),
        b_offset: 250 + n as u64,
        minislots_per_update: DEFAULT_MINISLOTS_PER_UPDATE,
        delta_scale: DEFAULT_DELTA_SCALE,
    }
}

/// Default parameters for AoII experiments:
/// alpha = 2.1, beta = 1.05 + log log N, B = 250 + floor(N/4), M = 10000.
///
/// `log log N` is clamped at zero so that beta stays above 1 for N <= 2.
pub fn aoii_defaults(n: usize, log_base: LogBase) -> BackoffParams {
    BackoffParams {
        alpha: 2.1,
        beta: 1.05 + log_base.loglog_clamped(n),
        b_offset: 250 + (n / 4) as u64,
        minislots_per_update: DEFAULT_MINISLOTS_PER_UPDATE,
        delta_scale: DEFAULT_DELTA_SCALE,
    }
}

/// Smallest alpha for which the per-frame match probability is at least 1 - delta.
pub fn theorem1_alpha_threshold(n: usize, delta: f64) -> f64 {
    (n as f64 - 1.0) * (1.0 - delta) / delta
}

/// Alpha must strictly exceed this for the drift comparison to hold.
pub fn theorem2_alpha_threshold(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let sum_sqrt: f64 = weights.iter().map(|w| w.sqrt()).sum();
    let min_sqrt = weights.iter().map(|w| w.sqrt()).fold(f64::INFINITY, f64::min);
    (n - 1.0) * sum_sqrt / min_sqrt
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub theorem1_threshold: f64,
    pub meets_theorem1: bool,
    pub theorem2_threshold: f64,
    pub meets_theorem2: bool,
    pub defaults: BackoffParams,
    pub warnings: Vec<String>,
}

/// Checks structural validity (hard errors) and reports whether alpha clears
/// the per-frame and long-run guarantee thresholds (warnings only).
pub fn validate_params(config: &NetworkConfig, params: &BackoffParams) -> Result<ValidationReport> {
    config.validate()?;
    params.validate()?;
    let t1 = theorem1_alpha_threshold(config.n_sources, params.delta_scale);
    let t2 = theorem2_alpha_threshold(&config.weights);
    let meets_theorem1 = params.alpha >= t1;
    let meets_theorem2 = params.alpha > t2;
    let mut warnings = Vec::new();
    if !meets_theorem1 {
        warnings.push(format!(
            "alpha = {} is below the per-frame match threshold {t1} for delta = {}",
            params.alpha, params.delta_scale
        ));
    }
    if !meets_theorem2 {
        warnings.push(format!(
            "alpha = {} does not exceed the drift-dominance threshold {t2}",
            params.alpha
        ));
    }
    Ok(ValidationReport {
        theorem1_threshold: t1,
        meets_theorem1,
        theorem2_threshold: t2,
        meets_theorem2,
        defaults: aoi_defaults(&config.weights, LogBase::default()),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, beta: f64) -> BackoffParams {
        BackoffParams {
            alpha,
            beta,
            b_offset: 5,
            minislots_per_update: 100,
            delta_scale: 0.1,
        }
    }

    #[test]
    fn theorem1_threshold_n10() {
        assert!((theorem1_alpha_threshold(10, 0.1) - 81.0).abs() < 1e-12);
    }

    #[test]
    fn theorem2_threshold_two_sources() {
        assert!((theorem2_alpha_threshold(&[1.0, 1.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn default_alpha_uniform_weights() {
        for n in [1usize, 2, 10, 37] {
            let d = aoi_defaults(&vec![1.0; n], LogBase::Natural);
            assert!((d.alpha - (1.0 + 1.0 / n as f64)).abs() < 1e-15);
            assert_eq!(d.b_offset, 250 + n as u64);
            assert_eq!(d.minislots_per_update, 10_000);
        }
    }

    #[test]
    fn default_beta_n10() {
        let d = aoi_defaults(&[1.0; 10], LogBase::Natural);
        assert!((d.beta - (1.1 + 10f64.ln().ln())).abs() < 1e-15);
        assert!((d.beta - 1.934).abs() < 1e-3);
        let d10 = aoi_defaults(&[1.0; 10], LogBase::Ten);
        assert!((d10.beta - 1.1).abs() < 1e-15);
    }

    #[test]
    fn default_beta_small_n_clamped() {
        assert_eq!(aoi_defaults(&[1.0], LogBase::Natural).beta, 1.1);
        assert_eq!(aoi_defaults(&[1.0, 1.0], LogBase::Natural).beta, 1.1);
        assert_eq!(aoii_defaults(2, LogBase::Natural).beta, 1.05);
    }

    #[test]
    fn aoii_defaults_n10() {
        let d = aoii_defaults(10, LogBase::Natural);
        assert_eq!(d.alpha, 2.1);
        assert_eq!(d.b_offset, 252);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(params(1.0, 2.0).validate().is_err());
        assert!(params(2.0, 1.0).validate().is_err());
        assert!(params(f64::NAN, 2.0).validate().is_err());
        let mut p = params(2.0, 2.0);
        p.minislots_per_update = 0;
        assert!(p.validate().is_err());
        p.minislots_per_update = 1;
        p.delta_scale = 0.0;
        assert!(p.validate().is_err());
        p.delta_scale = 1.0;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn rejects_bad_config() {
        assert!(NetworkConfig::uniform(0, 10, 0).is_err());
        assert!(NetworkConfig::new(vec![1.0, -1.0], 10, 0).is_err());
        assert!(NetworkConfig::uniform(3, 0, 0).is_err());
        let sqrt = NetworkConfig::sqrt_weights(3, 10, 0).unwrap();
        assert!(sqrt.with_integer_weights().is_err());
        let ints = NetworkConfig::new(vec![1.0, 2.0, 3.0], 10, 0).unwrap();
        assert!(ints.with_integer_weights().is_ok());
    }

    #[test]
    fn small_alpha_is_warning_not_error() {
        let cfg = NetworkConfig::uniform(10, 100, 1).unwrap();
        let report = validate_params(&cfg, &params(1.1, 2.0)).unwrap();
        assert_eq!(report.defaults.beta, 1.1);
        assert!(!report.meets_theorem1);
        assert!(!report.meets_theorem2);
        assert_eq!(report.warnings.len(), 2);
        assert!((report.defaults.alpha - 1.1).abs() < 1e-15);

        let ok = validate_params(&cfg, &params(91.0, 2.0)).unwrap();
        assert!(ok.meets_theorem1 && ok.meets_theorem2);
        assert!(ok.warnings.is_empty());
    }

    #[test]
    fn structural_errors_propagate() {
        let cfg = NetworkConfig::uniform(2, 100, 1).unwrap();
        assert!(validate_params(&cfg, &params(0.5, 2.0)).is_err());
    }
}
