//! Upper incomplete gamma function at order zero, `Γ(0, x) = E1(x)`.

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const MAX_ITER: usize = 500;

/// `Γ(0, x) = ∫_x^∞ e^{-t}/t dt` for `x > 0`.
///
/// Power series below 1, Lentz continued fraction above. Relative error is
/// around 1e-15 across the range.
pub fn gamma_upper_incomplete_zero(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("Γ(0, x) diverges for x = {x} <= 0")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x <= 1.0 { series(x) } else { continued_fraction(x) })
}

/// `Γ(0, e^{log_x})` without forming `x` when it would underflow.
pub fn gamma_upper_incomplete_zero_from_log(log_x: f64) -> Result<f64> {
    if log_x.is_nan() {
        return Err(Error::Domain("Γ(0, x) argument is NaN".into()));
    }
    if log_x < -40.0 {
        // -γ - ln x + x - x²/4 + ...; the x terms are below 1e-17 here
        let x = log_x.exp();
        return Ok(-EULER_GAMMA - log_x + x);
    }
    gamma_upper_incomplete_zero(log_x.exp())
}

fn series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ_{k>=1} (-x)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -x / kf;
        let contrib = term / kf;
        sum += contrib;
        if contrib.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}
