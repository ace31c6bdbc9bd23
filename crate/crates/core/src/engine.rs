//! Frame-by-frame network evolution.
//!
//! Each frame: record metrics at the frame start, let the Markov sources
//! transition (if any), ask the policy for a decision, resolve contention,
//! then update ages and AoII.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::params::{BackoffParams, NetworkConfig};
use crate::policy::{AccessModel, Decision, Policy, PolicyKind, TimerVector};
use crate::rng::RngStream;

const MARKOV_SUBSTREAM: u64 = 0xFFFF_FFFF_0000_0000;

#[derive(Debug, Clone, PartialEq)]
pub struct AgeState {
    /// Frames since the last delivered update; never below 1.
    pub frame_age: Vec<u64>,
    /// Time units since the last delivered update.
    pub clock_age: Vec<f64>,
}

impl AgeState {
    pub fn new(n: usize) -> Self {
        Self {
            frame_age: vec![1; n],
            clock_age: vec![1.0; n],
        }
    }

    pub fn from_frame_age(frame_age: Vec<u64>) -> Self {
        let clock_age = frame_age.iter().map(|a| *a as f64).collect();
        Self { frame_age, clock_age }
    }

    pub fn len(&self) -> usize {
        self.frame_age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_age.is_empty()
    }
}

/// Symmetric two-state sources and the base station's estimates of them.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovNetState {
    pub q: Vec<f64>,
    pub x_true: Vec<bool>,
    pub x_est: Vec<bool>,
    pub aoii: Vec<u64>,
}

impl MarkovNetState {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(bad) = q.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(param_err(format!("transition probability {bad} outside [0, 1]")));
        }
        let n = q.len();
        Ok(Self {
            q,
            x_true: vec![false; n],
            x_est: vec![false; n],
            aoii: vec![0; n],
        })
    }

    /// Each source flips its state with probability `q_i`.
    pub fn transition(&mut self, stream: &mut RngStream) {
        for (x, q) in self.x_true.iter_mut().zip(&self.q) {
            if stream.bernoulli(*q) {
                *x = !*x;
            }
        }
    }

    /// Delivery copies the true state; then AoII resets on agreement and
    /// grows by one frame on mismatch.
    pub fn apply_delivery(&mut self, delivered: Option<usize>) {
        if let Some(j) = delivered {
            self.x_est[j] = self.x_true[j];
        }
        for i in 0..self.aoii.len() {
            if self.x_true[i] == self.x_est[i] {
                self.aoii[i] = 0;
            } else {
                self.aoii[i] += 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimerValue {
    /// `ln(Z)` of the smallest continuous timer.
    Continuous { log_z: f64 },
    Minislots(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameOutcome {
    pub winners: Vec<usize>,
    /// `None` for centralized decisions.
    pub min_timer: Option<TimerValue>,
    pub collided: bool,
    pub delivered: Option<usize>,
    pub frame_duration: f64,
}

impl FrameOutcome {
    pub fn scheduled(source: usize) -> Self {
        Self {
            winners: vec![source],
            min_timer: None,
            collided: false,
            delivered: Some(source),
            frame_duration: 1.0,
        }
    }

    pub fn overhead_minislots(&self) -> u64 {
        match self.min_timer {
            Some(TimerValue::Minislots(d)) => d,
            _ => 0,
        }
    }

    fn from_winners(winners: Vec<usize>, min_timer: TimerValue, frame_duration: f64) -> Self {
        let collided = winners.len() > 1;
        let delivered = if collided { None } else { Some(winners[0]) };
        Self {
            winners,
            min_timer: Some(min_timer),
            collided,
            delivered,
            frame_duration,
        }
    }
}

/// Finds the earliest timer(s). Equal minima collide.
pub fn resolve_contention(timers: &TimerVector, minislots_per_update: u64) -> Result<FrameOutcome> {
    if timers.is_empty() {
        return Err(param_err("empty timer vector"));
    }
    Ok(match timers {
        TimerVector::Continuous(log_z) => {
            let min = log_z.iter().copied().fold(f64::INFINITY, f64::min);
            let winners = (0..log_z.len()).filter(|i| log_z[*i] == min).collect();
            FrameOutcome::from_winners(winners, TimerValue::Continuous { log_z: min }, 1.0)
        }
        TimerVector::Minislots(d) => {
            let min = *d.iter().min().expect("non-empty");
            let winners = (0..d.len()).filter(|i| d[*i] == min).collect();
            let duration = 1.0 + min as f64 / minislots_per_update as f64;
            FrameOutcome::from_winners(winners, TimerValue::Minislots(min), duration)
        }
    })
}

pub fn resolve_decision(decision: &Decision, minislots_per_update: u64) -> Result<FrameOutcome> {
    match decision {
        Decision::Schedule(s) => Ok(FrameOutcome::scheduled(*s)),
        Decision::Timers(t) => resolve_contention(t, minislots_per_update),
    }
}

/// A delivering source restarts at age 1 (frames) and one frame duration
/// (clock); everyone else ages by one frame.
pub fn apply_outcome(ages: &mut AgeState, outcome: &FrameOutcome) {
    let d = outcome.frame_duration;
    for i in 0..ages.len() {
        if outcome.delivered == Some(i) {
            ages.frame_age[i] = 1;
            ages.clock_age[i] = d;
        } else {
            ages.frame_age[i] += 1;
            ages.clock_age[i] += d;
        }
    }
}

/// One idealized frame: the decision must be centralized or carry continuous timers.
pub fn step_idealized(ages: &mut AgeState, decision: &Decision) -> Result<FrameOutcome> {
    if let Decision::Timers(TimerVector::Minislots(_)) = decision {
        return Err(param_err("idealized frames need continuous timers"));
    }
    let outcome = resolve_decision(decision, 1)?;
    apply_outcome(ages, &outcome);
    Ok(outcome)
}

/// One near-realistic frame lasting `1 + D/M`.
pub fn step_near_realistic(
    ages: &mut AgeState,
    decision: &Decision,
    params: &BackoffParams,
) -> Result<FrameOutcome> {
    if let Decision::Timers(TimerVector::Continuous(_)) = decision {
        return Err(param_err("near-realistic frames need minislot timers"));
    }
    let outcome = resolve_decision(decision, params.minislots_per_update)?;
    apply_outcome(ages, &outcome);
    Ok(outcome)
}

/// One frame with Markov sources: transition, contention, delivery, AoII update.
pub fn step_markov(
    markov: &mut MarkovNetState,
    ages: &mut AgeState,
    policy: &mut Policy,
    params: &BackoffParams,
    stream: &mut RngStream,
) -> Result<FrameOutcome> {
    markov.transition(stream);
    let decision = policy.decide(&ages.frame_age, Some(&markov.aoii))?;
    let outcome = match policy.kind().access_model() {
        AccessModel::Idealized => step_idealized(ages, &decision)?,
        AccessModel::NearRealistic => step_near_realistic(ages, &decision, params)?,
    };
    markov.apply_delivery(outcome.delivered);
    Ok(outcome)
}

/// How the wall-clock age is integrated over a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeIntegration {
    /// Age at the frame start times the frame duration. Reduces to the plain
    /// per-frame mean when every frame has unit length.
    #[default]
    LeftEndpoint,
    /// Exact integral of the linearly growing age within the frame.
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsAccumulator {
    pub elapsed_time: f64,
    pub clock_age_integral: Vec<f64>,
    pub frame_age_sum: Vec<u128>,
    pub aoii_sum: Vec<u128>,
    pub collision_count: u64,
    pub frame_count: u64,
    pub overhead_sum_minislots: u64,
    pub delivery_counts: Vec<u64>,
    pub integration: TimeIntegration,
}

impl MetricsAccumulator {
    pub fn new(n: usize, integration: TimeIntegration) -> Self {
        Self {
            elapsed_time: 0.0,
            clock_age_integral: vec![0.0; n],
            frame_age_sum: vec![0; n],
            aoii_sum: vec![0; n],
            collision_count: 0,
            frame_count: 0,
            overhead_sum_minislots: 0,
            delivery_counts: vec![0; n],
            integration,
        }
    }

    /// Records one frame given the state at its start.
    pub fn record(&mut self, ages: &AgeState, aoii: Option<&[u64]>, outcome: &FrameOutcome) {
        let d = outcome.frame_duration;
        let extra = match self.integration {
            TimeIntegration::LeftEndpoint => 0.0,
            TimeIntegration::Trapezoid => 0.5 * d * d,
        };
        for i in 0..ages.len() {
            self.frame_age_sum[i] += ages.frame_age[i] as u128;
            self.clock_age_integral[i] += ages.clock_age[i] * d + extra;
        }
        if let Some(a) = aoii {
            for (s, v) in self.aoii_sum.iter_mut().zip(a) {
                *s += *v as u128;
            }
        }
        self.elapsed_time += d;
        self.frame_count += 1;
        self.overhead_sum_minislots += outcome.overhead_minislots();
        if outcome.collided {
            self.collision_count += 1;
        }
        if let Some(j) = outcome.delivered {
            self.delivery_counts[j] += 1;
        }
    }

    pub fn deliveries(&self) -> u64 {
        self.delivery_counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub policy: PolicyKind,
    pub model: AccessModel,
    /// `(1/N) * sum_i w_i * avg_age_i`.
    pub normalized_weighted_avg_aoi: f64,
    /// Time-average of the wall-clock age per source.
    pub per_source_avg_aoi: Vec<f64>,
    /// Per-frame mean of the integer frame age per source.
    pub per_source_avg_frame_age: Vec<f64>,
    pub normalized_avg_aoii: Option<f64>,
    pub per_source_avg_aoii: Option<Vec<f64>>,
    pub collision_rate: f64,
    pub avg_overhead_minislots: f64,
    pub frames: u64,
    pub deliveries: u64,
    pub elapsed_time: f64,
    pub config: NetworkConfig,
    pub params: BackoffParams,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    Frames(u64),
    /// Run until `target` updates are delivered, giving up after `max_frames`.
    Deliveries { target: u64, max_frames: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// `None` runs `config.horizon_frames` frames.
    pub stop: Option<StopRule>,
    pub integration: TimeIntegration,
}

#[derive(Debug, Serialize)]
struct TraceRecord<'a> {
    frame: u64,
    min_timer: Option<TimerValue>,
    winners: &'a [usize],
    delivered: Option<usize>,
    collided: bool,
    duration: f64,
}

pub struct Engine {
    config: NetworkConfig,
    params: BackoffParams,
    policy: Policy,
    ages: AgeState,
    markov: Option<MarkovNetState>,
    markov_stream: RngStream,
    metrics: MetricsAccumulator,
}

impl Engine {
    /// `markov_q` enables Markov sources; AoII policies require it.
    pub fn new(
        config: &NetworkConfig,
        kind: PolicyKind,
        params: &BackoffParams,
        markov_q: Option<Vec<f64>>,
        integration: TimeIntegration,
    ) -> Result<Self> {
        let policy = Policy::new(kind, config, params)?;
        let markov = match markov_q {
            Some(q) => {
                if q.len() != config.n_sources {
                    return Err(param_err(format!(
                        "{} transition probabilities for {} sources",
                        q.len(),
                        config.n_sources
                    )));
                }
                Some(MarkovNetState::new(q)?)
            }
            None => None,
        };
        if kind.uses_aoii() && markov.is_none() {
            return Err(param_err(format!("{kind} requires Markov sources")));
        }
        Ok(Self {
            config: config.clone(),
            params: *params,
            policy,
            ages: AgeState::new(config.n_sources),
            markov,
            markov_stream: RngStream::new(config.seed, MARKOV_SUBSTREAM),
            metrics: MetricsAccumulator::new(config.n_sources, integration),
        })
    }

    pub fn ages(&self) -> &AgeState {
        &self.ages
    }

    pub fn markov(&self) -> Option<&MarkovNetState> {
        self.markov.as_ref()
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn step(&mut self) -> Result<FrameOutcome> {
        if let Some(m) = self.markov.as_mut() {
            m.transition(&mut self.markov_stream);
        }
        let aoii = self.markov.as_ref().map(|m| m.aoii.as_slice());
        let decision = self.policy.decide(&self.ages.frame_age, aoii)?;
        let outcome = resolve_decision(&decision, self.params.minislots_per_update)?;
        self.metrics.record(&self.ages, aoii, &outcome);
        apply_outcome(&mut self.ages, &outcome);
        if let Some(m) = self.markov.as_mut() {
            m.apply_delivery(outcome.delivered);
        }
        Ok(outcome)
    }

    fn done(&self, stop: StopRule) -> bool {
        match stop {
            StopRule::Frames(n) => self.metrics.frame_count >= n,
            StopRule::Deliveries { target, max_frames } => {
                self.metrics.deliveries() >= target || self.metrics.frame_count >= max_frames
            }
        }
    }

    pub fn run_until(&mut self, stop: StopRule) -> Result<()> {
        while !self.done(stop) {
            self.step()?;
        }
        Ok(())
    }

    /// Like [`Engine::run_until`], writing one JSON line per frame.
    pub fn run_traced(&mut self, stop: StopRule, out: &mut dyn Write) -> Result<()> {
        while !self.done(stop) {
            let frame = self.metrics.frame_count;
            let o = self.step()?;
            let rec = TraceRecord {
                frame,
                min_timer: o.min_timer,
                winners: &o.winners,
                delivered: o.delivered,
                collided: o.collided,
                duration: o.frame_duration,
            };
            serde_json::to_writer(&mut *out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn result(&self) -> SimulationResult {
        let m = &self.metrics;
        let n = self.config.n_sources;
        let frames = m.frame_count.max(1) as f64;
        let elapsed = if m.elapsed_time > 0.0 { m.elapsed_time } else { 1.0 };
        let per_source_avg_aoi: Vec<f64> = m.clock_age_integral.iter().map(|s| s / elapsed).collect();
        let per_source_avg_frame_age = m.frame_age_sum.iter().map(|s| *s as f64 / frames).collect();
        let normalized_weighted_avg_aoi = self
            .config
            .weights
            .iter()
            .zip(&per_source_avg_aoi)
            .map(|(w, a)| w * a)
            .sum::<f64>()
            / n as f64;
        let per_source_avg_aoii: Option<Vec<f64>> = self
            .markov
            .as_ref()
            .map(|_| m.aoii_sum.iter().map(|s| *s as f64 / frames).collect());
        let normalized_avg_aoii = per_source_avg_aoii
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / n as f64);
        SimulationResult {
            policy: self.policy.kind(),
            model: self.policy.kind().access_model(),
            normalized_weighted_avg_aoi,
            per_source_avg_aoi,
            per_source_avg_frame_age,
            normalized_avg_aoii,
            per_source_avg_aoii,
            collision_rate: m.collision_count as f64 / frames,
            avg_overhead_minislots: m.overhead_sum_minislots as f64 / frames,
            frames: m.frame_count,
            deliveries: m.deliveries(),
            elapsed_time: m.elapsed_time,
            config: self.config.clone(),
            params: self.params,
            seed: self.config.seed,
        }
    }
}

/// Runs one policy to completion.
pub fn run(
    config: &NetworkConfig,
    kind: PolicyKind,
    params: &BackoffParams,
    markov_q: Option<Vec<f64>>,
    options: RunOptions,
) -> Result<SimulationResult> {
    let mut engine = Engine::new(config, kind, params, markov_q, options.integration)?;
    engine.run_until(options.stop.unwrap_or(StopRule::Frames(config.horizon_frames)))?;
    Ok(engine.result())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::aoi_defaults;
    use crate::params::LogBase;
    use proptest::prelude::*;

    fn params(m: u64) -> BackoffParams {
        BackoffParams {
            alpha: 1.1,
            beta: 1.9,
            b_offset: 260,
            minislots_per_update: m,
            delta_scale: 0.1,
        }
    }

    #[test]
    fn idealized_step_resets_winner() {
        let mut ages = AgeState::from_frame_age(vec![4, 7]);
        step_idealized(&mut ages, &Decision::Schedule(1)).unwrap();
        assert_eq!(ages.frame_age, vec![5, 1]);
    }

    #[test]
    fn single_source_stays_fresh() {
        let cfg = NetworkConfig::uniform(1, 50, 3).unwrap();
        let mut e = Engine::new(&cfg, PolicyKind::IdealizedFreshCsma, &params(100), None, Default::default())
            .unwrap();
        for _ in 0..50 {
            e.step().unwrap();
            assert_eq!(e.ages().frame_age, vec![1]);
        }
    }

    #[test]
    fn max_weight_step() {
        let cfg = NetworkConfig::uniform(3, 10, 0).unwrap();
        let mut pol = Policy::new(PolicyKind::MaxWeight, &cfg, &params(100)).unwrap();
        let mut ages = AgeState::from_frame_age(vec![1, 2, 3]);
        let d = pol.decide(&ages.frame_age, None).unwrap();
        step_idealized(&mut ages, &d).unwrap();
        assert_eq!(ages.frame_age, vec![2, 3, 1]);
    }

    #[test]
    fn near_realistic_collision() {
        let mut ages = AgeState::new(3);
        let o = step_near_realistic(
            &mut ages,
            &Decision::Timers(TimerVector::Minislots(vec![3, 7, 3])),
            &params(100),
        )
        .unwrap();
        assert_eq!(o.winners, vec![0, 2]);
        assert!(o.collided);
        assert_eq!(o.delivered, None);
        assert!((o.frame_duration - 1.03).abs() < 1e-15);
        assert_eq!(ages.frame_age, vec![2, 2, 2]);
    }

    #[test]
    fn near_realistic_zero_backoff() {
        let mut ages = AgeState::new(2);
        let o = step_near_realistic(
            &mut ages,
            &Decision::Timers(TimerVector::Minislots(vec![0, 5])),
            &params(10_000),
        )
        .unwrap();
        assert_eq!(o.delivered, Some(0));
        assert_eq!(o.frame_duration, 1.0);
        assert_eq!(ages.clock_age, vec![1.0, 2.0]);
    }

    #[test]
    fn near_realistic_overhead() {
        let mut ages = AgeState::new(2);
        let o = step_near_realistic(
            &mut ages,
            &Decision::Timers(TimerVector::Minislots(vec![250, 260])),
            &params(10_000),
        )
        .unwrap();
        assert!((o.frame_duration - 1.025).abs() < 1e-15);
        assert_eq!(o.overhead_minislots(), 250);
        assert_eq!(ages.clock_age, vec![1.025, 2.025]);
    }

    #[test]
    fn model_mismatch_rejected() {
        let mut ages = AgeState::new(2);
        assert!(step_idealized(&mut ages, &Decision::Timers(TimerVector::Minislots(vec![1, 2]))).is_err());
        assert!(step_near_realistic(
            &mut ages,
            &Decision::Timers(TimerVector::Continuous(vec![0.1, 0.2])),
            &params(10)
        )
        .is_err());
    }

    #[test]
    fn continuous_tie_is_collision() {
        let o = resolve_contention(&TimerVector::Continuous(vec![-1.0, -1.0, 0.0]), 1).unwrap();
        assert!(o.collided);
        assert_eq!(o.delivered, None);
    }

    #[test]
    fn markov_examples() {
        let mut m = MarkovNetState::new(vec![0.0, 0.0]).unwrap();
        m.apply_delivery(Some(1));
        assert_eq!(m.aoii, vec![0, 0]);

        let mut m = MarkovNetState {
            q: vec![0.0, 0.0],
            x_true: vec![true, false],
            x_est: vec![false, false],
            aoii: vec![2, 0],
        };
        let mut other = m.clone();
        m.apply_delivery(Some(0));
        assert_eq!(m.aoii, vec![0, 0]);
        assert_eq!(m.x_est, vec![true, false]);
        other.apply_delivery(Some(1));
        assert_eq!(other.aoii, vec![3, 0]);
    }

    #[test]
    fn markov_rejects_bad_q() {
        assert!(MarkovNetState::new(vec![0.5, 1.5]).is_err());
    }

    #[test]
    fn step_markov_with_zero_flip_rate_keeps_aoii_zero() {
        let cfg = NetworkConfig::uniform(3, 10, 0).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let mut pol = Policy::new(PolicyKind::IdealizedFreshCsmaAoii, &cfg, &p).unwrap();
        let mut m = MarkovNetState::new(vec![0.0; 3]).unwrap();
        let mut ages = AgeState::new(3);
        let mut s = RngStream::new(0, 1);
        for _ in 0..100 {
            step_markov(&mut m, &mut ages, &mut pol, &p, &mut s).unwrap();
            assert_eq!(m.aoii, vec![0, 0, 0]);
        }
    }

    #[test]
    fn aoii_policy_without_markov_rejected() {
        let cfg = NetworkConfig::uniform(3, 10, 0).unwrap();
        assert!(Engine::new(&cfg, PolicyKind::MaxAoii, &params(10), None, Default::default()).is_err());
        assert!(Engine::new(&cfg, PolicyKind::MaxAoii, &params(10), Some(vec![0.1]), Default::default()).is_err());
    }

    #[test]
    fn duration_accounting() {
        let cfg = NetworkConfig::uniform(5, 20_000, 9).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let mut e = Engine::new(&cfg, PolicyKind::NearRealisticFreshCsma, &p, None, Default::default()).unwrap();
        e.run_until(StopRule::Frames(20_000)).unwrap();
        let m = e.metrics();
        let expect = m.frame_count as f64 + m.overhead_sum_minislots as f64 / p.minislots_per_update as f64;
        assert!((m.elapsed_time - expect).abs() < 1e-9 * expect);
        assert_eq!(m.frame_count, m.collision_count + m.deliveries());
    }

    #[test]
    fn idealized_never_collides_and_time_average_is_frame_mean() {
        let cfg = NetworkConfig::uniform(6, 20_000, 4).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let r = run(&cfg, PolicyKind::IdealizedFreshCsma, &p, None, RunOptions::default()).unwrap();
        assert_eq!(r.collision_rate, 0.0);
        assert_eq!(r.elapsed_time, 20_000.0);
        for (a, b) in r.per_source_avg_aoi.iter().zip(&r.per_source_avg_frame_age) {
            assert!((a - b).abs() < 1e-9 * b);
        }
    }

    #[test]
    fn trapezoid_adds_half_frame_in_idealized_model() {
        let cfg = NetworkConfig::uniform(4, 10_000, 4).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let opts = RunOptions {
            stop: None,
            integration: TimeIntegration::Trapezoid,
        };
        let r = run(&cfg, PolicyKind::MaxWeight, &p, None, opts).unwrap();
        for (a, b) in r.per_source_avg_aoi.iter().zip(&r.per_source_avg_frame_age) {
            assert!((a - b - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn deliveries_stop_rule_and_frame_cap() {
        let cfg = NetworkConfig::uniform(4, 1, 4).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let opts = RunOptions {
            stop: Some(StopRule::Deliveries { target: 1000, max_frames: 10_000 }),
            ..Default::default()
        };
        let r = run(&cfg, PolicyKind::NearRealisticFreshCsma, &p, None, opts).unwrap();
        assert_eq!(r.deliveries, 1000);

        let mut collapsing = p;
        collapsing.beta = 1.01;
        let opts = RunOptions {
            stop: Some(StopRule::Deliveries { target: 1_000_000, max_frames: 5_000 }),
            ..Default::default()
        };
        let r = run(&cfg, PolicyKind::NearRealisticFreshCsma, &collapsing, None, opts).unwrap();
        assert_eq!(r.frames, 5_000);
    }

    #[test]
    fn trace_lines_are_json() {
        let cfg = NetworkConfig::uniform(3, 5, 4).unwrap();
        let p = aoi_defaults(&cfg.weights, LogBase::Natural);
        let mut e = Engine::new(&cfg, PolicyKind::NearRealisticFreshCsma, &p, None, Default::default()).unwrap();
        let mut buf = Vec::new();
        e.run_traced(StopRule::Frames(5), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        for (i, l) in lines.iter().enumerate() {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["frame"], i as u64);
            assert!(v["min_timer"]["minislots"].is_u64());
        }
    }

    proptest! {
        #[test]
        fn idealized_conservation(ages in proptest::collection::vec(1u64..1000, 1..10), pick in 0usize..10) {
            let n = ages.len();
            let w = pick % n;
            let mut st = AgeState::from_frame_age(ages.clone());
            step_idealized(&mut st, &Decision::Schedule(w)).unwrap();
            let delta: i64 = st.frame_age.iter().zip(&ages).map(|(a, b)| *a as i64 - *b as i64).sum();
            prop_assert_eq!(delta, n as i64 - ages[w] as i64);
            prop_assert!(st.frame_age.iter().all(|a| *a >= 1));
        }

        #[test]
        fn minislot_collision_iff_tied_minimum(d in proptest::collection::vec(0u64..20, 1..8)) {
            let o = resolve_contention(&TimerVector::Minislots(d.clone()), 100).unwrap();
            let min = *d.iter().min().unwrap();
            let ties = d.iter().filter(|x| **x == min).count();
            prop_assert_eq!(o.collided, ties >= 2);
            prop_assert_eq!(o.delivered.is_some(), ties == 1);
        }

        #[test]
        fn aoii_recursion(x_true in proptest::collection::vec(any::<bool>(), 1..8), est_seed in any::<u64>(), deliver in proptest::option::of(0usize..8)) {
            let n = x_true.len();
            let x_est: Vec<bool> = (0..n).map(|i| (est_seed >> i) & 1 == 1).collect();
            let mut m = MarkovNetState { q: vec![0.0; n], x_true: x_true.clone(), x_est, aoii: vec![5; n] };
            let before = m.clone();
            let deliver = deliver.filter(|j| *j < n);
            m.apply_delivery(deliver);
            for i in 0..n {
                if m.x_true[i] == m.x_est[i] {
                    prop_assert_eq!(m.aoii[i], 0);
                } else {
                    prop_assert_eq!(m.aoii[i], before.aoii[i] + 1);
                }
            }
        }
    }
}
