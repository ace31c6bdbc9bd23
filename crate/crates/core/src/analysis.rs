//! Closed-form bounds: pairwise distinct-timer probability, expected backoff
//! overhead, per-frame match probability and one-frame Lyapunov drift.
//! Monte Carlo checkers live next to the bounds they check.

use serde::Serialize;

use crate::error::{param_err, Result};
use crate::params::BackoffParams;
use crate::policy::{argmax_set, scheduling_prob_closed_form, stationary_randomized_probs};
use crate::rng::RngStream;
use crate::special::gamma_upper_incomplete_zero_from_log;
use crate::timer::{aoi_exponents, discretize_log_timer, log_sum_exp};

pub const DEFAULT_MC_TRIALS: usize = 100_000;
pub const DEFAULT_MC_SIGMAS: f64 = 3.0;

/// Arguments of ψ with the rates in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiArgs {
    pub b_offset: u64,
    pub beta: f64,
    pub log_lambda_i: f64,
    pub log_lambda_j: f64,
}

impl PsiArgs {
    pub fn from_rates(b_offset: u64, beta: f64, lambda_i: f64, lambda_j: f64) -> Self {
        Self {
            b_offset,
            beta,
            log_lambda_i: lambda_i.ln(),
            log_lambda_j: lambda_j.ln(),
        }
    }

    pub fn swapped(self) -> Self {
        Self {
            log_lambda_i: self.log_lambda_j,
            log_lambda_j: self.log_lambda_i,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(param_err(format!("beta must be > 1, got {}", self.beta)));
        }
        if !(self.log_lambda_i.is_finite() && self.log_lambda_j.is_finite()) {
            return Err(param_err("rates must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub bound_value: f64,
    pub empirical_value: Option<f64>,
    pub satisfied: Option<bool>,
    pub mc_std_error: Option<f64>,
}

impl BoundReport {
    pub fn bound_only(bound_value: f64) -> Self {
        Self {
            bound_value,
            empirical_value: None,
            satisfied: None,
            mc_std_error: None,
        }
    }
}

/// ψ(B, β, λ_i, λ_j) = λ_i e^{-c(λ_i+βλ_j)}/(λ_i+βλ_j) + (e^{cλ_i} - 1) e^{-c(λ_i+βλ_j)}
/// with c = β^{-B}.
///
/// The second term is evaluated as `(1 - e^{-cλ_i}) e^{-cβλ_j}`, which is the
/// same quantity without the overflowing `e^{cλ_i}` factor.
pub fn psi(args: PsiArgs) -> Result<f64> {
    args.validate()?;
    let ln_beta = args.beta.ln();
    let shift = args.b_offset as f64 * ln_beta;
    let ci = (args.log_lambda_i - shift).exp();
    let cj = (args.log_lambda_j - shift).exp();
    // λ_i / (λ_i + βλ_j)
    let share = 1.0 / (1.0 + (ln_beta + args.log_lambda_j - args.log_lambda_i).exp());
    let first = share * (-(ci + args.beta * cj)).exp();
    let second = -(-ci).exp_m1() * (-args.beta * cj).exp();
    Ok(first + second)
}

/// ψ(i,j) + ψ(j,i): lower bound on P(D_i != D_j).
pub fn distinct_timer_bound(args: PsiArgs) -> Result<f64> {
    Ok(psi(args)? + psi(args.swapped())?)
}

/// The large-B limit λ_i/(λ_i+βλ_j) + λ_j/(λ_j+βλ_i).
pub fn distinct_timer_limit(args: PsiArgs) -> f64 {
    let ln_beta = args.beta.ln();
    let d = args.log_lambda_j - args.log_lambda_i;
    1.0 / (1.0 + (ln_beta + d).exp()) + 1.0 / (1.0 + (ln_beta - d).exp())
}

/// Pairwise bound at the current ages of sources `i` and `j`.
pub fn collision_lower_bound(
    frame_age: &[u64],
    weights: &[f64],
    params: &BackoffParams,
    pair: (usize, usize),
) -> Result<BoundReport> {
    params.validate()?;
    let (i, j) = pair;
    if i >= frame_age.len() || j >= frame_age.len() || i == j {
        return Err(param_err(format!("invalid source pair ({i}, {j})")));
    }
    let e = aoi_exponents(weights, frame_age);
    let ln_alpha = params.ln_alpha();
    let args = PsiArgs {
        b_offset: params.b_offset,
        beta: params.beta,
        log_lambda_i: e[i] * ln_alpha,
        log_lambda_j: e[j] * ln_alpha,
    };
    Ok(BoundReport::bound_only(distinct_timer_bound(args)?))
}

/// Samples `trials` independent timer pairs and compares the observed
/// P(D_i != D_j) with the bound. The margin uses the larger of the sample and
/// null-hypothesis binomial standard errors so a zero count is still judged.
pub fn check_distinct_timers_mc(
    args: PsiArgs,
    trials: usize,
    sigmas: f64,
    stream: &mut RngStream,
) -> Result<BoundReport> {
    let bound = distinct_timer_bound(args)?;
    let ln_beta = args.beta.ln();
    let mut differ = 0usize;
    for _ in 0..trials {
        let zi = stream.unit_exponential().ln() - args.log_lambda_i;
        let zj = stream.unit_exponential().ln() - args.log_lambda_j;
        if discretize_log_timer(zi, ln_beta, args.b_offset) != discretize_log_timer(zj, ln_beta, args.b_offset) {
            differ += 1;
        }
    }
    let n = trials as f64;
    let p = differ as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    let se_null = (bound.clamp(0.0, 1.0) * (1.0 - bound.clamp(0.0, 1.0)) / n).sqrt();
    Ok(BoundReport {
        bound_value: bound,
        empirical_value: Some(p),
        satisfied: Some(p >= bound - sigmas * se.max(se_null)),
        mc_std_error: Some(se),
    })
}

/// `1/M + Γ(0, λβ^{-B}) / (M ln β)` with `ln λ = log_lambda_total`, in time units.
pub fn overhead_upper_bound_from_log_rate(log_lambda_total: f64, params: &BackoffParams) -> Result<f64> {
    params.validate()?;
    let ln_beta = params.ln_beta();
    let log_arg = log_lambda_total - params.b_offset as f64 * ln_beta;
    let g = gamma_upper_incomplete_zero_from_log(log_arg)?;
    Ok((1.0 + g / ln_beta) / params.minislots_per_update as f64)
}

/// Expected idle time bound at the instantaneous ages.
pub fn overhead_upper_bound(frame_age: &[u64], weights: &[f64], params: &BackoffParams) -> Result<f64> {
    let logs: Vec<f64> = aoi_exponents(weights, frame_age)
        .iter()
        .map(|e| e * params.ln_alpha())
        .collect();
    overhead_upper_bound_from_log_rate(log_sum_exp(&logs), params)
}

/// Horizon-level approximation using λ̄ = Σ α^{w_i Ā_i²} from average ages.
pub fn overhead_upper_bound_avg(avg_ages: &[f64], weights: &[f64], params: &BackoffParams) -> Result<f64> {
    let logs: Vec<f64> = weights
        .iter()
        .zip(avg_ages)
        .map(|(w, a)| w * a * a * params.ln_alpha())
        .collect();
    overhead_upper_bound_from_log_rate(log_sum_exp(&logs), params)
}

/// Mean of `D(t)/M` over `trials` fresh contentions at a fixed state, with
/// its standard error.
pub fn mean_backoff_mc(
    log_lambda: &[f64],
    params: &BackoffParams,
    trials: usize,
    stream: &mut RngStream,
) -> (f64, f64) {
    let ln_beta = params.ln_beta();
    let m = params.minislots_per_update as f64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let d = log_lambda
            .iter()
            .map(|l| discretize_log_timer(stream.unit_exponential().ln() - l, ln_beta, params.b_offset))
            .min()
            .unwrap_or(0) as f64
            / m;
        sum += d;
        sum_sq += d * d;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Closed-form probability that Fresh-CSMA picks a source in the argmax set
/// of `exponents` (either `w_i A_i²` or AoII values).
pub fn theorem1_match_probability(exponents: &[f64], alpha: f64) -> f64 {
    let r = scheduling_prob_closed_form(exponents, alpha);
    argmax_set(exponents).iter().map(|i| r[*i]).sum()
}

/// Expected one-frame drift of `L = Σ √w_i A_i` under Fresh-CSMA and under
/// the optimal stationary randomized policy, in that order.
pub fn drift_pair(frame_age: &[u64], weights: &[f64], alpha: f64) -> (f64, f64) {
    let r = scheduling_prob_closed_form(&aoi_exponents(weights, frame_age), alpha);
    let pi = stationary_randomized_probs(weights);
    let base: f64 = weights.iter().map(|w| w.sqrt()).sum();
    let pull = |p: &[f64]| -> f64 {
        p.iter()
            .zip(weights)
            .zip(frame_age)
            .map(|((p, w), a)| p * w.sqrt() * *a as f64)
            .sum()
    };
    (base - pull(&r), base - pull(&pi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::EULER_GAMMA;

    fn args(b: u64, beta: f64, li: f64, lj: f64) -> PsiArgs {
        PsiArgs::from_rates(b, beta, li, lj)
    }

    /// ψ straight from its defining expression, for moderate arguments.
    fn psi_naive(b: u64, beta: f64, li: f64, lj: f64) -> f64 {
        let c = beta.powi(-(b as i32));
        let e = (-c * (li + beta * lj)).exp();
        li * e / (li + beta * lj) + ((li * c).exp() - 1.0) * e
    }

    #[test]
    fn psi_matches_naive_formula() {
        for &(b, beta, li, lj) in &[(0, 2.0, 1.0, 1.0), (5, 1.5, 3.0, 0.5), (10, 1.1, 20.0, 7.0), (2, 3.0, 0.1, 9.0)] {
            let got = psi(args(b, beta, li, lj)).unwrap();
            let want = psi_naive(b, beta, li, lj);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn psi_large_b_limit() {
        let a = args(500, 2.0, 1.0, 1.0);
        let sum = distinct_timer_bound(a).unwrap();
        assert!((sum - 2.0 / 3.0).abs() < 1e-9);
        assert!((distinct_timer_limit(a) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn psi_fine_grid_limit_near_one() {
        let sum = distinct_timer_bound(args(20_000, 1.001, 1.0, 1.0)).unwrap();
        assert!((sum - 1.0).abs() < 1e-3, "{sum}");
    }

    #[test]
    fn psi_increases_with_b() {
        let lo = psi(args(5, 1.5, 1.0, 1.0)).unwrap();
        let hi = psi(args(10, 1.5, 1.0, 1.0)).unwrap();
        assert!(hi >= lo);
    }

    #[test]
    fn psi_symmetric_terms_equal() {
        let a = args(7, 1.3, 2.0, 2.0);
        assert_eq!(psi(a).unwrap(), psi(a.swapped()).unwrap());
    }

    #[test]
    fn psi_in_unit_interval_for_extreme_rates() {
        for li in [0.0, 20.0, 500.0] {
            for lj in [0.0, 20.0, 500.0] {
                for b in [0, 10, 250] {
                    let a = PsiArgs { b_offset: b, beta: 1.1, log_lambda_i: li, log_lambda_j: lj };
                    let v = psi(a).unwrap();
                    assert!((0.0..=1.0).contains(&v), "{v}");
                }
            }
        }
    }

    #[test]
    fn psi_rejects_bad_args() {
        assert!(psi(args(1, 1.0, 1.0, 1.0)).is_err());
        assert!(psi(PsiArgs { b_offset: 1, beta: 2.0, log_lambda_i: f64::INFINITY, log_lambda_j: 0.0 }).is_err());
    }

    #[test]
    fn coarse_grid_collapses_timers() {
        let mut s = RngStream::new(1, 1);
        let r = check_distinct_timers_mc(args(0, 1e6, 1.0, 1.0), 100_000, 3.0, &mut s).unwrap();
        assert!(r.empirical_value.unwrap() < 0.01);
        assert!(r.bound_value <= r.empirical_value.unwrap() + 3.0 * r.mc_std_error.unwrap() + 1e-3);
        assert_eq!(r.satisfied, Some(true));
    }

    #[test]
    fn mc_distinct_timers_above_bound() {
        let mut s = RngStream::new(2, 1);
        let r = check_distinct_timers_mc(args(250, 1.1, 1.0, 1.0), 100_000, 3.0, &mut s).unwrap();
        assert_eq!(r.satisfied, Some(true), "{r:?}");
    }

    #[test]
    fn collision_bound_at_state() {
        let p = BackoffParams { alpha: 1.1, beta: 1.1, b_offset: 260, minislots_per_update: 10_000, delta_scale: 0.1 };
        let r = collision_lower_bound(&[3, 3], &[1.0, 1.0], &p, (0, 1)).unwrap();
        assert!(r.bound_value > 0.0 && r.bound_value < 1.0);
        assert!(collision_lower_bound(&[3, 3], &[1.0, 1.0], &p, (0, 0)).is_err());
    }

    #[test]
    fn overhead_bound_monotone_in_b() {
        let mut p = BackoffParams { alpha: 1.1, beta: 1.9, b_offset: 250, minislots_per_update: 10_000, delta_scale: 0.1 };
        let lo = overhead_upper_bound(&[3, 5, 7], &[1.0; 3], &p).unwrap();
        p.b_offset = 300;
        let hi = overhead_upper_bound(&[3, 5, 7], &[1.0; 3], &p).unwrap();
        assert!(hi >= lo);
    }

    #[test]
    fn overhead_bound_large_b_approximation() {
        let lambda: f64 = 1e4;
        let beta: f64 = 1.5;
        let logb_lambda = lambda.ln() / beta.ln();
        let b = (10.0 * logb_lambda).round() as u64;
        let p = BackoffParams { alpha: 2.0, beta, b_offset: b, minislots_per_update: 10_000, delta_scale: 0.1 };
        let bound = overhead_upper_bound_from_log_rate(lambda.ln(), &p).unwrap();
        let approx = b as f64 - logb_lambda;
        let got = bound * 10_000.0 - 1.0;
        assert!(((got - approx) / approx).abs() < 0.01, "{got} vs {approx}");
        // exact asymptote keeps the Euler term
        let exact = b as f64 - logb_lambda - EULER_GAMMA / beta.ln();
        assert!((got - exact).abs() < 1e-6);
    }

    #[test]
    fn mean_backoff_below_bound() {
        let p = BackoffParams { alpha: 1.1, beta: 1.934, b_offset: 260, minislots_per_update: 10_000, delta_scale: 0.1 };
        let ages = [1u64, 4, 7, 9, 10];
        let logs: Vec<f64> = aoi_exponents(&[1.0; 5], &ages).iter().map(|e| e * p.ln_alpha()).collect();
        let mut s = RngStream::new(3, 3);
        let (mean, _se) = mean_backoff_mc(&logs, &p, 100_000, &mut s);
        let bound = overhead_upper_bound(&ages, &[1.0; 5], &p).unwrap();
        assert!(mean <= bound, "{mean} > {bound}");
    }

    #[test]
    fn theorem1_examples() {
        let m = theorem1_match_probability(&aoi_exponents(&[1.0, 1.0], &[1, 2]), 9.0);
        assert!((m - 9f64.powi(4) / (9.0 + 9f64.powi(4))).abs() < 1e-14);
        assert!(m >= 0.9);
        assert!((theorem1_match_probability(&[4.0, 4.0, 4.0], 3.0) - 1.0).abs() < 1e-15);
        let ages: Vec<u64> = (1..=10).collect();
        assert!(theorem1_match_probability(&aoi_exponents(&[1.0; 10], &ages), 81.0) >= 0.9);
    }

    #[test]
    fn drift_examples() {
        let (c, s) = drift_pair(&[4, 4, 4], &[1.0; 3], 2.0);
        assert!((c - (3.0 - 4.0)).abs() < 1e-12);
        assert!((s - (3.0 - 4.0)).abs() < 1e-12);

        let (c, s) = drift_pair(&[1, 3], &[1.0, 1.0], 10.0);
        let r2 = 1e9 / (10.0 + 1e9);
        let r1 = 10.0 / (10.0 + 1e9);
        assert!((c - (2.0 - (r1 + 3.0 * r2))).abs() < 1e-12);
        assert!((s - 0.0).abs() < 1e-15);
        assert!(c <= s);
    }
}
