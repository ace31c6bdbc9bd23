//! Scalar timer kernels: log-domain exponential sampling and the
//! continuous-to-minislot timer mapping.

use crate::error::{param_err, Result};
use crate::params::BackoffParams;
use crate::rng::RngStream;

/// Exponents above this (in natural-log units) are never turned into linear rates.
pub const LINEAR_RATE_LOG_THRESHOLD: f64 = 700.0;

/// Per-source contention rates held as `ln(lambda_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRate {
    pub log_lambda: Vec<f64>,
}

impl LogRate {
    /// `ln(lambda_i) = exponent_i * ln(alpha)`.
    pub fn from_exponents(exponents: &[f64], ln_alpha: f64) -> Self {
        Self {
            log_lambda: exponents.iter().map(|e| e * ln_alpha).collect(),
        }
    }

    /// Weighted-AoI exponents `w_i * A_i^2`.
    pub fn from_ages(weights: &[f64], frame_age: &[u64], ln_alpha: f64) -> Self {
        Self::from_exponents(&aoi_exponents(weights, frame_age), ln_alpha)
    }

    pub fn len(&self) -> usize {
        self.log_lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_lambda.is_empty()
    }

    /// Linear-domain rates, or `None` if any exponent exceeds `threshold`.
    pub fn linear(&self, threshold: f64) -> Option<Vec<f64>> {
        if self.log_lambda.iter().any(|l| *l > threshold) {
            None
        } else {
            Some(self.log_lambda.iter().map(|l| l.exp()).collect())
        }
    }

    /// `ln(sum_i lambda_i)` via log-sum-exp.
    pub fn log_total(&self) -> f64 {
        log_sum_exp(&self.log_lambda)
    }
}

pub fn aoi_exponents(weights: &[f64], frame_age: &[u64]) -> Vec<f64> {
    weights
        .iter()
        .zip(frame_age)
        .map(|(w, a)| {
            let a = *a as f64;
            w * a * a
        })
        .collect()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `E / lambda` for a given unit-exponential draw `E`.
pub fn exponential_from_unit(unit: f64, log_rate: f64) -> f64 {
    unit * (-log_rate).exp()
}

/// Draws `Z ~ exp(lambda)` with `ln(lambda) = log_rate`.
///
/// For large rates the linear value underflows; contention code should use
/// [`sample_log_exponential`] instead.
pub fn sample_exponential(stream: &mut RngStream, log_rate: f64) -> Result<f64> {
    check_log_rate(log_rate)?;
    Ok(exponential_from_unit(stream.unit_exponential(), log_rate))
}

/// Draws `ln(Z)` for `Z ~ exp(lambda)`, computed as `ln(E) - ln(lambda)`.
pub fn sample_log_exponential(stream: &mut RngStream, log_rate: f64) -> Result<f64> {
    check_log_rate(log_rate)?;
    Ok(stream.unit_exponential().ln() - log_rate)
}

fn check_log_rate(log_rate: f64) -> Result<()> {
    if log_rate.is_finite() {
        Ok(())
    } else {
        Err(param_err(format!("log rate must be finite, got {log_rate}")))
    }
}

/// `floor(x)`, treating values within a few ulps of an integer as that integer
/// so exact powers of beta land on the right minislot.
fn robust_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 8.0 * f64::EPSILON * r.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// `max(B + floor(log_beta(z)), 0)` with `log_z = ln(z)`. Never exponentiates.
pub fn discretize_log_timer(log_z: f64, ln_beta: f64, b_offset: u64) -> u64 {
    let slot = b_offset as f64 + robust_floor(log_z / ln_beta);
    if slot <= 0.0 {
        0
    } else {
        // saturating cast
        slot as u64
    }
}

pub fn discretize_timer(z: f64, params: &BackoffParams) -> Result<u64> {
    params.validate()?;
    if !(z > 0.0) {
        return Err(param_err(format!("timer value must be positive, got {z}")));
    }
    Ok(discretize_log_timer(z.ln(), params.ln_beta(), params.b_offset))
}
