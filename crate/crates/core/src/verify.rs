//! Randomized checks of the scheduling and backoff results. Each check
//! returns a report with the smallest margin seen; a negative margin is a
//! violation.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{
    check_distinct_timers_mc, drift_pair, mean_backoff_mc, overhead_upper_bound_from_log_rate, psi,
    theorem1_match_probability, PsiArgs, DEFAULT_MC_SIGMAS, DEFAULT_MC_TRIALS,
};
use crate::error::{Error, Result};
use crate::params::{aoi_defaults, theorem1_alpha_threshold, theorem2_alpha_threshold, LogBase};
use crate::policy::{fresh_csma_timers, scheduling_prob_closed_form, AccessModel, Freshness, TimerVector};
use crate::rng::RngStream;
use crate::timer::{aoi_exponents, log_sum_exp};

pub const DEFAULT_STATE_TRIALS: usize = 10_000;
pub const THM1_N: usize = 10;
pub const THM1_DELTA: f64 = 0.1;
pub const LEMMA1_STATES: usize = 20;
pub const THM4_STATES: usize = 10;
/// Absolute slack for comparisons that are exact in real arithmetic.
pub const FLOAT_TOL: f64 = 1e-12;
pub const LOG_LAMBDA_GRID: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
pub const BETA_GRID: [f64; 3] = [1.1, 1.5, 2.0];
pub const B_GRID: [u64; 3] = [0, 10, 250];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    Thm1,
    Lemma1,
    Lemma2,
    Thm3,
    Thm4,
    Thm5,
}

impl Theorem {
    pub const ALL: [Theorem; 6] = [
        Theorem::Thm1,
        Theorem::Lemma1,
        Theorem::Lemma2,
        Theorem::Thm3,
        Theorem::Thm4,
        Theorem::Thm5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Thm1 => "thm1",
            Theorem::Lemma1 => "lemma1",
            Theorem::Lemma2 => "lemma2",
            Theorem::Thm3 => "thm3",
            Theorem::Thm4 => "thm4",
            Theorem::Thm5 => "thm5",
        }
    }

    /// Random states for the closed-form checks, samples per state for the
    /// Monte Carlo ones.
    pub fn default_trials(self) -> usize {
        match self {
            Theorem::Thm1 | Theorem::Lemma2 | Theorem::Thm5 => DEFAULT_STATE_TRIALS,
            Theorem::Lemma1 | Theorem::Thm3 | Theorem::Thm4 => DEFAULT_MC_TRIALS,
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown theorem '{s}'; expected thm1, lemma1, lemma2, thm3, thm4 or thm5")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub theorem: Theorem,
    pub trials: usize,
    pub checks: usize,
    pub failures: usize,
    pub worst_margin: f64,
    pub worst_case: String,
    pub passed: bool,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} ({} checks, {} failures, trials {}, worst margin {:.6e} at {})",
            self.theorem,
            if self.passed { "PASS" } else { "FAIL" },
            self.checks,
            self.failures,
            self.trials,
            self.worst_margin,
            self.worst_case
        )
    }
}

struct Tally {
    checks: usize,
    failures: usize,
    worst: f64,
    worst_case: String,
}

impl Tally {
    fn new() -> Self {
        Self {
            checks: 0,
            failures: 0,
            worst: f64::INFINITY,
            worst_case: String::new(),
        }
    }

    fn add(&mut self, margin: f64, case: impl FnOnce() -> String) {
        self.checks += 1;
        if margin < 0.0 || margin.is_nan() {
            self.failures += 1;
        }
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
            self.worst_case = case();
        }
    }

    fn report(self, theorem: Theorem, trials: usize) -> VerifyReport {
        VerifyReport {
            theorem,
            trials,
            checks: self.checks,
            failures: self.failures,
            worst_margin: self.worst,
            worst_case: self.worst_case,
            passed: self.failures == 0 && self.checks > 0,
        }
    }
}

/// Mass on the argmax set minus `1 - delta`.
pub fn match_margin(exponents: &[f64], alpha: f64, delta: f64) -> f64 {
    theorem1_match_probability(exponents, alpha) - (1.0 - delta) + FLOAT_TOL
}

fn random_ages(stream: &mut RngStream, n: usize, max: u64) -> Vec<u64> {
    (0..n).map(|_| 1 + stream.index(max as usize) as u64).collect()
}

fn random_int_weights(stream: &mut RngStream, n: usize, max: u64) -> Vec<f64> {
    (0..n).map(|_| (1 + stream.index(max as usize)) as f64).collect()
}

/// Runs one check. `trials` defaults per theorem when `None`.
pub fn verify(theorem: Theorem, trials: Option<usize>, seed: u64) -> Result<VerifyReport> {
    let trials = trials.unwrap_or_else(|| theorem.default_trials());
    if trials == 0 {
        return Err(Error::Config("trials must be positive".into()));
    }
    match theorem {
        Theorem::Thm1 => Ok(verify_thm1(trials, seed)),
        Theorem::Thm5 => Ok(verify_thm5(trials, seed)),
        Theorem::Lemma1 => verify_lemma1(trials, seed),
        Theorem::Lemma2 => Ok(verify_lemma2(trials, seed)),
        Theorem::Thm3 => verify_thm3(trials, seed),
        Theorem::Thm4 => verify_thm4(trials, seed),
    }
}

/// Integer-weight states at the smallest compliant α. Half the states use unit
/// weights, the rest weights in 1..=4 so exponent gaps of one occur.
fn verify_thm1(trials: usize, seed: u64) -> VerifyReport {
    let alpha = theorem1_alpha_threshold(THM1_N, THM1_DELTA);
    let mut stream = RngStream::new(seed, 1);
    let mut tally = Tally::new();
    for t in 0..trials {
        let weights = if t % 2 == 0 {
            vec![1.0; THM1_N]
        } else {
            random_int_weights(&mut stream, THM1_N, 4)
        };
        let ages = random_ages(&mut stream, THM1_N, 12);
        let e = aoi_exponents(&weights, &ages);
        tally.add(match_margin(&e, alpha, THM1_DELTA), || format!("w={weights:?} A={ages:?}"));
    }
    tally.report(Theorem::Thm1, trials)
}

/// Same check with AoII values as exponents.
fn verify_thm5(trials: usize, seed: u64) -> VerifyReport {
    let alpha = theorem1_alpha_threshold(THM1_N, THM1_DELTA);
    let mut stream = RngStream::new(seed, 5);
    let mut tally = Tally::new();
    for _ in 0..trials {
        let aoii: Vec<f64> = (0..THM1_N).map(|_| stream.index(16) as f64).collect();
        tally.add(match_margin(&aoii, alpha, THM1_DELTA), || format!("aoii={aoii:?}"));
    }
    tally.report(Theorem::Thm5, trials)
}

/// Empirical winner frequencies of idealized contention against the softmax
/// probabilities. Margin is in standard errors: `sigmas - |dev| / se`.
fn verify_lemma1(trials: usize, seed: u64) -> Result<VerifyReport> {
    const NS: [usize; 3] = [2, 5, 10];
    const ALPHAS: [f64; 3] = [1.1, 2.0, 9.0];
    let mut state_stream = RngStream::new(seed, 2);
    let mut tally = Tally::new();
    for s in 0..LEMMA1_STATES {
        let n = NS[s % NS.len()];
        let alpha = ALPHAS[(s / NS.len()) % ALPHAS.len()];
        let weights = vec![1.0; n];
        let ages = random_ages(&mut state_stream, n, 3);
        let r = scheduling_prob_closed_form(&aoi_exponents(&weights, &ages), alpha);
        let params = crate::params::BackoffParams {
            alpha,
            ..aoi_defaults(&weights, LogBase::default())
        };
        let mut streams: Vec<RngStream> = (0..n).map(|i| RngStream::new(seed, 0x100 + (s * 16 + i) as u64)).collect();
        let mut wins = vec![0u64; n];
        for _ in 0..trials {
            let timers = fresh_csma_timers(
                &mut streams,
                &ages,
                &weights,
                &params,
                AccessModel::Idealized,
                Freshness::FrameAge,
                None,
            )?;
            if let TimerVector::Continuous(z) = timers {
                let winner = (0..n).min_by(|a, b| z[*a].total_cmp(&z[*b])).unwrap_or(0);
                wins[winner] += 1;
            }
        }
        for i in 0..n {
            let freq = wins[i] as f64 / trials as f64;
            let se = (r[i] * (1.0 - r[i]) / trials as f64).sqrt();
            let dev = (freq - r[i]).abs();
            let margin = if se > 0.0 {
                DEFAULT_MC_SIGMAS - dev / se
            } else if dev <= FLOAT_TOL {
                DEFAULT_MC_SIGMAS
            } else {
                -1.0
            };
            tally.add(margin, || format!("N={n} alpha={alpha} A={ages:?} source {i}: freq {freq} vs {}", r[i]));
        }
    }
    Ok(tally.report(Theorem::Lemma1, trials))
}

/// Closed-form drift comparison just above the threshold. Margin is
/// `Δsr - Δcsma` with a relative slack of 1e-9.
fn verify_lemma2(trials: usize, seed: u64) -> VerifyReport {
    let mut stream = RngStream::new(seed, 3);
    let mut tally = Tally::new();
    for _ in 0..trials {
        let n = 2 + stream.index(9);
        let weights = random_int_weights(&mut stream, n, 4);
        let ages = random_ages(&mut stream, n, 30);
        let alpha = theorem2_alpha_threshold(&weights) * 1.01;
        let (csma, sr) = drift_pair(&ages, &weights, alpha);
        let scale = 1.0 + csma.abs().max(sr.abs());
        tally.add(sr - csma + 1e-9 * scale, || format!("w={weights:?} A={ages:?} alpha={alpha}"));
    }
    tally.report(Theorem::Lemma2, trials)
}

/// Monte Carlo distinct-timer frequency over the parameter grid, plus
/// monotonicity of ψ in B. MC margin: `p - (bound - sigmas * se)`.
fn verify_thm3(trials: usize, seed: u64) -> Result<VerifyReport> {
    let mut tally = Tally::new();
    let mut sub = 0x300u64;
    for &li in &LOG_LAMBDA_GRID {
        for &lj in &LOG_LAMBDA_GRID {
            for &beta in &BETA_GRID {
                let mut prev = f64::NEG_INFINITY;
                for &b in &B_GRID {
                    let args = PsiArgs {
                        b_offset: b,
                        beta,
                        log_lambda_i: li,
                        log_lambda_j: lj,
                    };
                    let mut stream = RngStream::new(seed, sub);
                    sub += 1;
                    let rep = check_distinct_timers_mc(args, trials, DEFAULT_MC_SIGMAS, &mut stream)?;
                    let p = rep.empirical_value.unwrap_or(f64::NAN);
                    let se = rep.mc_std_error.unwrap_or(0.0);
                    let b01 = rep.bound_value.clamp(0.0, 1.0);
                    let se = se.max((b01 * (1.0 - b01) / trials as f64).sqrt());
                    let margin = p - (rep.bound_value - DEFAULT_MC_SIGMAS * se);
                    tally.add(margin, || {
                        format!("ln λ=({li},{lj}) beta={beta} B={b}: p={p} bound={}", rep.bound_value)
                    });
                    let value = psi(args)?;
                    tally.add(value - prev + FLOAT_TOL, || format!("psi not monotone in B at ln λ=({li},{lj}) beta={beta} B={b}"));
                    prev = value;
                }
            }
        }
    }
    Ok(tally.report(Theorem::Thm3, trials))
}

/// Empirical mean backoff per frame at random symmetric states under the
/// default parameters for N = 10, against the closed-form idle-time bound.
/// Margin is `bound - mean`, in time units.
fn verify_thm4(trials: usize, seed: u64) -> Result<VerifyReport> {
    let n = 10;
    let weights = vec![1.0; n];
    let params = aoi_defaults(&weights, LogBase::default());
    let mut state_stream = RngStream::new(seed, 4);
    let mut tally = Tally::new();
    for s in 0..THM4_STATES {
        let ages = if s == 0 { vec![1; n] } else { random_ages(&mut state_stream, n, 8) };
        let logs: Vec<f64> = aoi_exponents(&weights, &ages).iter().map(|e| e * params.ln_alpha()).collect();
        let bound = overhead_upper_bound_from_log_rate(log_sum_exp(&logs), &params)?;
        let mut stream = RngStream::new(seed, 0x400 + s as u64);
        let (mean, _) = mean_backoff_mc(&logs, &params, trials, &mut stream);
        tally.add(bound - mean, || format!("A={ages:?}: mean {mean} bound {bound}"));
    }
    Ok(tally.report(Theorem::Thm4, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        for t in Theorem::ALL {
            assert_eq!(t.name().parse::<Theorem>().unwrap(), t);
        }
        assert!("thm2".parse::<Theorem>().is_err());
    }

    #[test]
    fn thm1_adversarial_state_is_tight() {
        // unique max one exponent unit above the other nine: mass = 81 / 90
        let mut e = vec![4.0; 10];
        e[0] = 5.0;
        let m = match_margin(&e, 81.0, 0.1);
        assert!((0.0..1e-10).contains(&m), "{m}");
        assert!(match_margin(&e, 80.0, 0.1) < 0.0);
    }

    #[test]
    fn thm1_and_thm5_pass_small() {
        assert!(verify(Theorem::Thm1, Some(500), 3).unwrap().passed);
        assert!(verify(Theorem::Thm5, Some(500), 3).unwrap().passed);
    }

    #[test]
    fn lemma2_passes_small() {
        assert!(verify(Theorem::Lemma2, Some(500), 3).unwrap().passed);
    }

    #[test]
    fn lemma2_can_fail_below_threshold() {
        // α barely above 1 spreads mass almost uniformly, which loses to π*
        // when one source is much staler
        let (csma, sr) = drift_pair(&[1, 1, 20], &[1.0, 1.0, 4.0], 1.0001);
        assert!(csma > sr);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(verify(Theorem::Thm3, Some(0), 1).is_err());
    }

    #[test]
    fn reports_are_deterministic() {
        let a = verify(Theorem::Thm4, Some(2_000), 11).unwrap();
        let b = verify(Theorem::Thm4, Some(2_000), 11).unwrap();
        assert_eq!(a, b);
    }
}
