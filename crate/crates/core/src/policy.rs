//! Scheduling rules. Centralized rules pick one source per frame; CSMA rules
//! hand back one backoff timer per source and let contention pick the winner.

use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::params::{BackoffParams, NetworkConfig};
use crate::rng::RngStream;
use crate::timer::{aoi_exponents, discretize_log_timer, sample_log_exponential};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    MaxWeight,
    StationaryRandomizedOptimal,
    IdealizedCsma,
    IdealizedFreshCsma,
    NearRealisticFreshCsma,
    MaxAoii,
    IdealizedFreshCsmaAoii,
    NearRealisticFreshCsmaAoii,
}

/// Frame timing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessModel {
    /// Unit-length frames, continuous timers, no backoff overhead.
    Idealized,
    /// Minislot timers; a frame lasts `1 + D/M`.
    NearRealistic,
}

/// Which per-source quantity drives a Fresh-CSMA timer rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Freshness {
    /// Exponent `w_i * A_i^2`.
    FrameAge,
    /// Exponent `AoII_i`, unweighted.
    Aoii,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::MaxWeight,
        PolicyKind::StationaryRandomizedOptimal,
        PolicyKind::IdealizedCsma,
        PolicyKind::IdealizedFreshCsma,
        PolicyKind::NearRealisticFreshCsma,
        PolicyKind::MaxAoii,
        PolicyKind::IdealizedFreshCsmaAoii,
        PolicyKind::NearRealisticFreshCsmaAoii,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::MaxWeight => "max_weight",
            PolicyKind::StationaryRandomizedOptimal => "stationary_randomized_optimal",
            PolicyKind::IdealizedCsma => "idealized_csma",
            PolicyKind::IdealizedFreshCsma => "idealized_fresh_csma",
            PolicyKind::NearRealisticFreshCsma => "near_realistic_fresh_csma",
            PolicyKind::MaxAoii => "max_aoii",
            PolicyKind::IdealizedFreshCsmaAoii => "idealized_fresh_csma_aoii",
            PolicyKind::NearRealisticFreshCsmaAoii => "near_realistic_fresh_csma_aoii",
        }
    }

    pub fn is_centralized(self) -> bool {
        matches!(
            self,
            PolicyKind::MaxWeight | PolicyKind::StationaryRandomizedOptimal | PolicyKind::MaxAoii
        )
    }

    pub fn access_model(self) -> AccessModel {
        match self {
            PolicyKind::NearRealisticFreshCsma | PolicyKind::NearRealisticFreshCsmaAoii => {
                AccessModel::NearRealistic
            }
            _ => AccessModel::Idealized,
        }
    }

    /// True if the policy needs per-source AoII values (and so Markov sources).
    pub fn uses_aoii(self) -> bool {
        matches!(
            self,
            PolicyKind::MaxAoii
                | PolicyKind::IdealizedFreshCsmaAoii
                | PolicyKind::NearRealisticFreshCsmaAoii
        )
    }

    pub fn uses_frame_age(self) -> bool {
        matches!(
            self,
            PolicyKind::MaxWeight | PolicyKind::IdealizedFreshCsma | PolicyKind::NearRealisticFreshCsma
        )
    }

    fn stream_base(self) -> u64 {
        let idx = PolicyKind::ALL.iter().position(|k| *k == self).unwrap() as u64;
        (idx + 1) << 32
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy '{s}'")))
    }
}

/// One backoff timer per source.
#[derive(Debug, Clone, PartialEq)]
pub enum TimerVector {
    /// Continuous timers stored as `ln(Z_i)`.
    Continuous(Vec<f64>),
    /// Integer timers in minislots.
    Minislots(Vec<u64>),
}

impl TimerVector {
    pub fn len(&self) -> usize {
        match self {
            TimerVector::Continuous(v) => v.len(),
            TimerVector::Minislots(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Schedule(usize),
    Timers(TimerVector),
}

/// Indices attaining the maximum (exact comparison).
pub fn argmax_set(values: &[f64]) -> Vec<usize> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == max)
        .map(|(i, _)| i)
        .collect()
}

fn uniform_pick(set: &[usize], stream: &mut RngStream) -> usize {
    if set.len() == 1 {
        set[0]
    } else {
        set[stream.index(set.len())]
    }
}

/// argmax_j w_j A_j^2, ties broken uniformly with `stream`. Returns a 0-based index.
pub fn max_weight_decide(frame_age: &[u64], weights: &[f64], stream: &mut RngStream) -> usize {
    uniform_pick(&argmax_set(&aoi_exponents(weights, frame_age)), stream)
}

/// argmax_j AoII_j, ties broken uniformly. Needs the true source states, so it
/// only exists as a reference point.
pub fn max_aoii_decide(aoii: &[u64], stream: &mut RngStream) -> usize {
    let values: Vec<f64> = aoii.iter().map(|a| *a as f64).collect();
    uniform_pick(&argmax_set(&values), stream)
}

/// pi*_i = sqrt(w_i) / sum_j sqrt(w_j).
pub fn stationary_randomized_probs(weights: &[f64]) -> Vec<f64> {
    let roots: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let total: f64 = roots.iter().sum();
    roots.iter().map(|r| r / total).collect()
}

/// r_i = alpha^{e_i} / sum_j alpha^{e_j}, evaluated as a max-shifted softmax.
pub fn scheduling_prob_closed_form(exponents: &[f64], alpha: f64) -> Vec<f64> {
    let ln_alpha = alpha.ln();
    let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // shift before scaling so integer exponent gaps stay exact
    let shifted: Vec<f64> = exponents.iter().map(|e| ((e - max) * ln_alpha).exp()).collect();
    let total: f64 = shifted.iter().sum();
    shifted.iter().map(|x| x / total).collect()
}

/// Plain CSMA: every source draws `exp(alpha)` regardless of state.
pub fn idealized_csma_timers(streams: &mut [RngStream], alpha: f64) -> Result<TimerVector> {
    if !(alpha > 1.0) {
        return Err(param_err(format!("alpha must be > 1, got {alpha}")));
    }
    let log_rate = alpha.ln();
    let values = streams
        .iter_mut()
        .map(|s| sample_log_exponential(s, log_rate))
        .collect::<Result<Vec<_>>>()?;
    Ok(TimerVector::Continuous(values))
}

/// Fresh-CSMA timers: source i draws `Z_i ~ exp(alpha^{e_i})` with `e_i` from
/// its own freshness value; near-realistic mode maps `Z_i` to minislots.
pub fn fresh_csma_timers(
    streams: &mut [RngStream],
    frame_age: &[u64],
    weights: &[f64],
    params: &BackoffParams,
    model: AccessModel,
    freshness: Freshness,
    aoii: Option<&[u64]>,
) -> Result<TimerVector> {
    params.validate()?;
    let exponents = match freshness {
        Freshness::FrameAge => aoi_exponents(weights, frame_age),
        Freshness::Aoii => aoii
            .ok_or_else(|| param_err("AoII freshness requires an AoII vector"))?
            .iter()
            .map(|a| *a as f64)
            .collect(),
    };
    if exponents.len() != streams.len() {
        return Err(param_err(format!(
            "{} streams for {} sources",
            streams.len(),
            exponents.len()
        )));
    }
    let ln_alpha = params.ln_alpha();
    let log_z = streams
        .iter_mut()
        .zip(&exponents)
        .map(|(s, e)| sample_log_exponential(s, e * ln_alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(match model {
        AccessModel::Idealized => TimerVector::Continuous(log_z),
        AccessModel::NearRealistic => {
            let ln_beta = params.ln_beta();
            TimerVector::Minislots(
                log_z
                    .iter()
                    .map(|lz| discretize_log_timer(*lz, ln_beta, params.b_offset))
                    .collect(),
            )
        }
    })
}

/// A policy instance with its own random streams.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    weights: Vec<f64>,
    params: BackoffParams,
    source_streams: Vec<RngStream>,
    choice_stream: RngStream,
    stationary: Option<WeightedIndex<f64>>,
}

impl Policy {
    pub fn new(kind: PolicyKind, config: &NetworkConfig, params: &BackoffParams) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let base = kind.stream_base();
        let source_streams = (0..config.n_sources)
            .map(|i| RngStream::new(config.seed, base + 1 + i as u64))
            .collect();
        let stationary = if kind == PolicyKind::StationaryRandomizedOptimal {
            Some(
                WeightedIndex::new(stationary_randomized_probs(&config.weights))
                    .map_err(|e| param_err(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            kind,
            weights: config.weights.clone(),
            params: *params,
            source_streams,
            choice_stream: RngStream::new(config.seed, base),
            stationary,
        })
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn params(&self) -> &BackoffParams {
        &self.params
    }

    pub fn decide(&mut self, frame_age: &[u64], aoii: Option<&[u64]>) -> Result<Decision> {
        let need_aoii = || aoii.ok_or_else(|| param_err(format!("{} needs AoII values", self.kind)));
        Ok(match self.kind {
            PolicyKind::MaxWeight => {
                Decision::Schedule(max_weight_decide(frame_age, &self.weights, &mut self.choice_stream))
            }
            PolicyKind::StationaryRandomizedOptimal => {
                let dist = self.stationary.as_ref().expect("built in new");
                Decision::Schedule(dist.sample(self.choice_stream.rng_mut()))
            }
            PolicyKind::MaxAoii => {
                let a = need_aoii()?;
                Decision::Schedule(max_aoii_decide(a, &mut self.choice_stream))
            }
            PolicyKind::IdealizedCsma => {
                Decision::Timers(idealized_csma_timers(&mut self.source_streams, self.params.alpha)?)
            }
            PolicyKind::IdealizedFreshCsma | PolicyKind::NearRealisticFreshCsma => {
                Decision::Timers(fresh_csma_timers(
                    &mut self.source_streams,
                    frame_age,
                    &self.weights,
                    &self.params,
                    self.kind.access_model(),
                    Freshness::FrameAge,
                    None,
                )?)
            }
            PolicyKind::IdealizedFreshCsmaAoii | PolicyKind::NearRealisticFreshCsmaAoii => {
                let a = need_aoii()?;
                Decision::Timers(fresh_csma_timers(
                    &mut self.source_streams,
                    frame_age,
                    &self.weights,
                    &self.params,
                    self.kind.access_model(),
                    Freshness::Aoii,
                    Some(a),
                )?)
            }
        })
    }
}
