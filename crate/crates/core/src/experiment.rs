//! Experiment specs, figure presets, sweeps and CSV output.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{distinct_timer_bound, overhead_upper_bound_avg, PsiArgs};
use crate::engine::{run, RunOptions, SimulationResult, StopRule, TimeIntegration};
use crate::error::{Error, Result};
use crate::params::{aoi_defaults, aoii_defaults, BackoffParams, LogBase, NetworkConfig};
use crate::policy::{AccessModel, PolicyKind};
use crate::rng::derive_seed;

pub const PRESET_N_RANGE: [usize; 5] = [2, 5, 10, 20, 30];
pub const DEFAULT_HORIZON_DELIVERIES: u64 = 100_000;
pub const DEFAULT_MAX_FRAME_FACTOR: u64 = 10;
pub const MARKOV_Q: f64 = 0.05;

pub const PRESET_NAMES: [&str; 9] = [
    "fig3_symmetric",
    "fig4_sqrt_weights",
    "fig5_alpha_sweep",
    "fig6_beta_collisions",
    "fig7_B_collisions",
    "fig8_beta_overhead",
    "fig9_B_overhead",
    "fig10_aoii",
    "fig11_aoii_aoi",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    /// `"uniform"` or `"sqrt"` (w_k = sqrt(k)).
    Profile(String),
    Values(Vec<f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Profile("uniform".into())
    }
}

impl WeightSpec {
    pub fn weights(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            WeightSpec::Profile(p) if p == "uniform" => Ok(vec![1.0; n]),
            WeightSpec::Profile(p) if p == "sqrt" => Ok((1..=n).map(|k| (k as f64).sqrt()).collect()),
            WeightSpec::Profile(p) => Err(Error::Config(format!("unknown weight profile '{p}'"))),
            WeightSpec::Values(v) if v.len() == n => Ok(v.clone()),
            WeightSpec::Values(v) => Err(Error::Config(format!(
                "{} weights given for {n} sources",
                v.len()
            ))),
        }
    }
}

/// Which default-parameter formulas seed each sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamDefaults {
    #[default]
    Aoi,
    Aoii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    NSources,
    Alpha,
    Beta,
    BOffset,
    MinislotsPerUpdate,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::NSources => "n_sources",
            SweepParam::Alpha => "alpha",
            SweepParam::Beta => "beta",
            SweepParam::BOffset => "b_offset",
            SweepParam::MinislotsPerUpdate => "minislots_per_update",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepParam::NSources,
            SweepParam::Alpha,
            SweepParam::Beta,
            SweepParam::BOffset,
            SweepParam::MinislotsPerUpdate,
        ]
        .into_iter()
        .find(|p| p.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown sweep parameter '{s}'")))
    }
}

fn default_n() -> usize {
    10
}
fn default_horizon() -> u64 {
    DEFAULT_HORIZON_DELIVERIES
}
fn default_factor() -> u64 {
    DEFAULT_MAX_FRAME_FACTOR
}
fn default_reps() -> u32 {
    1
}
fn default_seed() -> u64 {
    1
}

/// A full experiment description. Also the schema of the config file: a flat
/// TOML table with exactly these keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub policies: Vec<PolicyKind>,
    #[serde(default = "default_n")]
    pub n_sources: usize,
    #[serde(default)]
    pub weights: WeightSpec,
    #[serde(default)]
    pub param_defaults: ParamDefaults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_offset: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minislots_per_update: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_param: Option<SweepParam>,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
    /// Flip probability shared by every Markov source; enables AoII tracking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov_q: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon_deliveries: u64,
    #[serde(default = "default_factor")]
    pub max_frame_factor: u64,
    #[serde(default = "default_reps")]
    pub replications: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub log_base: LogBase,
    #[serde(default)]
    pub time_integration: TimeIntegration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// One concrete parameter setting of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub swept_value: f64,
    pub n_sources: usize,
    pub weights: Vec<f64>,
    pub params: BackoffParams,
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        match (self.sweep_param, self.sweep_values.is_empty()) {
            (Some(p), true) => {
                return Err(Error::Config(format!("sweep over {p} needs sweep_values")));
            }
            (None, false) => {
                return Err(Error::Config("sweep_values given without sweep_param".into()));
            }
            _ => {}
        }
        if self.horizon_deliveries == 0 || self.max_frame_factor == 0 || self.replications == 0 {
            return Err(Error::Config(
                "horizon_deliveries, max_frame_factor and replications must be positive".into(),
            ));
        }
        if let Some(q) = self.markov_q {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("markov_q = {q} outside [0, 1]")));
            }
        }
        if self.markov_q.is_none() {
            if let Some(p) = self.policies.iter().find(|p| p.uses_aoii()) {
                return Err(Error::Config(format!("policy {p} requires markov_q")));
            }
        }
        for point in self.points()? {
            point.params.validate()?;
            NetworkConfig::new(point.weights.clone(), 1, 0)?;
        }
        Ok(())
    }

    /// Sweep points in ascending order of the swept value. Without a sweep,
    /// a single point keyed by `n_sources`.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let (param, mut values) = match self.sweep_param {
            Some(p) => (p, self.sweep_values.clone()),
            None => (SweepParam::NSources, vec![self.n_sources as f64]),
        };
        values.sort_by(|a, b| a.total_cmp(b));
        values.dedup();
        values
            .into_iter()
            .map(|v| {
                let n = if param == SweepParam::NSources {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::Config(format!("n_sources sweep value {v} is not a positive integer")));
                    }
                    v as usize
                } else {
                    self.n_sources
                };
                let weights = self.weights.weights(n)?;
                let mut params = match self.param_defaults {
                    ParamDefaults::Aoi => aoi_defaults(&weights, self.log_base),
                    ParamDefaults::Aoii => aoii_defaults(n, self.log_base),
                };
                if let Some(a) = self.alpha {
                    params.alpha = a;
                }
                if let Some(b) = self.beta {
                    params.beta = b;
                }
                if let Some(b) = self.b_offset {
                    params.b_offset = b;
                }
                if let Some(m) = self.minislots_per_update {
                    params.minislots_per_update = m;
                }
                if let Some(d) = self.delta_scale {
                    params.delta_scale = d;
                }
                match param {
                    SweepParam::NSources => {}
                    SweepParam::Alpha => params.alpha = v,
                    SweepParam::Beta => params.beta = v,
                    SweepParam::BOffset => params.b_offset = integral(v, "b_offset")?,
                    SweepParam::MinislotsPerUpdate => {
                        params.minislots_per_update = integral(v, "minislots_per_update")?
                    }
                }
                Ok(SweepPoint {
                    swept_value: v,
                    n_sources: n,
                    weights,
                    params,
                })
            })
            .collect()
    }

    pub fn swept_param(&self) -> SweepParam {
        self.sweep_param.unwrap_or(SweepParam::NSources)
    }

    pub fn replication_seed(&self, rep: u32) -> u64 {
        derive_seed(self.seed, rep as u64)
    }
}

fn integral(v: f64, what: &str) -> Result<u64> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as u64)
    } else {
        Err(Error::Config(format!("{what} sweep value {v} is not a non-negative integer")))
    }
}

/// Builds a figure preset at desk scale.
pub fn preset(name: &str) -> Result<ExperimentSpec> {
    use PolicyKind::*;
    let n_range: Vec<f64> = PRESET_N_RANGE.iter().map(|n| *n as f64).collect();
    let base = ExperimentSpec {
        scenario: name.to_string(),
        policies: vec![MaxWeight, StationaryRandomizedOptimal, IdealizedFreshCsma, NearRealisticFreshCsma],
        n_sources: 10,
        weights: WeightSpec::default(),
        param_defaults: ParamDefaults::Aoi,
        alpha: None,
        beta: None,
        b_offset: None,
        minislots_per_update: None,
        delta_scale: None,
        sweep_param: Some(SweepParam::NSources),
        sweep_values: n_range.clone(),
        markov_q: None,
        horizon_deliveries: DEFAULT_HORIZON_DELIVERIES,
        max_frame_factor: DEFAULT_MAX_FRAME_FACTOR,
        replications: 1,
        seed: 1,
        log_base: LogBase::default(),
        time_integration: TimeIntegration::default(),
        output: None,
    };
    let beta_grid = vec![1.01, 1.03, 1.05, 1.07, 1.1, 1.2, 1.3, 1.5, 1.75, 2.0];
    let b_grid = vec![0.0, 10.0, 25.0, 50.0, 100.0, 150.0, 200.0, 260.0, 300.0, 400.0];
    let spec = match name {
        "fig3_symmetric" => base,
        "fig4_sqrt_weights" => ExperimentSpec {
            weights: WeightSpec::Profile("sqrt".into()),
            ..base
        },
        "fig5_alpha_sweep" => ExperimentSpec {
            policies: vec![MaxWeight, IdealizedFreshCsma, NearRealisticFreshCsma],
            sweep_param: Some(SweepParam::Alpha),
            sweep_values: vec![1.01, 1.02, 1.05, 1.1, 1.2, 1.5, 2.0],
            ..base
        },
        "fig6_beta_collisions" | "fig8_beta_overhead" => ExperimentSpec {
            policies: vec![NearRealisticFreshCsma],
            sweep_param: Some(SweepParam::Beta),
            sweep_values: beta_grid,
            ..base
        },
        "fig7_B_collisions" | "fig9_B_overhead" => ExperimentSpec {
            policies: vec![NearRealisticFreshCsma],
            sweep_param: Some(SweepParam::BOffset),
            sweep_values: b_grid,
            ..base
        },
        "fig10_aoii" | "fig11_aoii_aoi" => ExperimentSpec {
            policies: vec![MaxWeight, IdealizedFreshCsmaAoii, NearRealisticFreshCsmaAoii],
            param_defaults: ParamDefaults::Aoii,
            markov_q: Some(MARKOV_Q),
            ..base
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; expected one of {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(spec)
}

/// One CSV row: a (policy, sweep point) pair aggregated over replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub policy: PolicyKind,
    pub n_sources: usize,
    pub swept_param: SweepParam,
    pub swept_value: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b_offset: u64,
    pub minislots_per_update: u64,
    pub replications: u32,
    pub normalized_weighted_avg_aoi: f64,
    pub normalized_weighted_avg_aoi_se: f64,
    pub normalized_avg_aoii: Option<f64>,
    pub normalized_avg_aoii_se: Option<f64>,
    pub collision_rate: f64,
    pub collision_rate_se: f64,
    pub avg_overhead_minislots: f64,
    pub avg_overhead_minislots_se: f64,
    /// Horizon overhead approximation at the simulated average ages.
    pub overhead_bound_minislots: Option<f64>,
    /// Smallest pairwise distinct-timer lower bound at the average ages.
    pub min_pair_distinct_bound: Option<f64>,
    pub frames: u64,
    pub deliveries: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Bound columns for near-realistic runs, evaluated at the average state the
/// policy saw (frame ages, or AoII for AoII policies).
fn bound_columns(r: &SimulationResult) -> Result<(Option<f64>, Option<f64>)> {
    if r.model != AccessModel::NearRealistic {
        return Ok((None, None));
    }
    let (avg, weights): (Vec<f64>, Vec<f64>) = if r.policy.uses_aoii() {
        let a = r.per_source_avg_aoii.clone().unwrap_or_default();
        let w = vec![1.0; a.len()];
        (a.iter().map(|x| x.sqrt()).collect(), w)
    } else {
        (r.per_source_avg_frame_age.clone(), r.config.weights.clone())
    };
    let overhead = overhead_upper_bound_avg(&avg, &weights, &r.params)? * r.params.minislots_per_update as f64;
    let ln_alpha = r.params.ln_alpha();
    let logs: Vec<f64> = avg.iter().zip(&weights).map(|(a, w)| w * a * a * ln_alpha).collect();
    let mut min_pair: Option<f64> = None;
    for i in 0..logs.len() {
        for j in i + 1..logs.len() {
            let b = distinct_timer_bound(PsiArgs {
                b_offset: r.params.b_offset,
                beta: r.params.beta,
                log_lambda_i: logs[i],
                log_lambda_j: logs[j],
            })?;
            min_pair = Some(min_pair.map_or(b, |m| m.min(b)));
        }
    }
    Ok((Some(overhead), min_pair))
}

/// Runs every (policy, sweep point, replication) and aggregates per
/// (policy, sweep point). Jobs run in parallel; output order is fixed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultTable> {
    spec.validate()?;
    let points = spec.points()?;
    let stop = StopRule::Deliveries {
        target: spec.horizon_deliveries,
        max_frames: spec.horizon_deliveries.saturating_mul(spec.max_frame_factor),
    };
    let options = RunOptions {
        stop: Some(stop),
        integration: spec.time_integration,
    };
    let jobs: Vec<(usize, usize, u32)> = (0..points.len())
        .flat_map(|p| (0..spec.policies.len()).flat_map(move |k| (0..spec.replications).map(move |r| (p, k, r))))
        .collect();
    let results: Vec<SimulationResult> = jobs
        .par_iter()
        .map(|&(p, k, r)| {
            let point = &points[p];
            let cfg = NetworkConfig::new(point.weights.clone(), spec.horizon_deliveries, spec.replication_seed(r))?;
            let q = spec.markov_q.map(|q| vec![q; point.n_sources]);
            run(&cfg, spec.policies[k], &point.params, q, options)
        })
        .collect::<Result<_>>()?;

    let reps = spec.replications as usize;
    let mut rows = Vec::with_capacity(points.len() * spec.policies.len());
    for (chunk_idx, chunk) in results.chunks(reps).enumerate() {
        let point = &points[chunk_idx / spec.policies.len()];
        let policy = spec.policies[chunk_idx % spec.policies.len()];
        let col = |f: &dyn Fn(&SimulationResult) -> f64| mean_se(&chunk.iter().map(f).collect::<Vec<_>>());
        let (aoi, aoi_se) = col(&|r| r.normalized_weighted_avg_aoi);
        let (coll, coll_se) = col(&|r| r.collision_rate);
        let (ovh, ovh_se) = col(&|r| r.avg_overhead_minislots);
        let (aoii, aoii_se) = if chunk[0].normalized_avg_aoii.is_some() {
            let (m, s) = col(&|r| r.normalized_avg_aoii.unwrap_or(0.0));
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        let (overhead_bound, pair_bound) = bound_columns(&chunk[0])?;
        rows.push(ResultRow {
            scenario: spec.scenario.clone(),
            policy,
            n_sources: point.n_sources,
            swept_param: spec.swept_param(),
            swept_value: point.swept_value,
            alpha: point.params.alpha,
            beta: point.params.beta,
            b_offset: point.params.b_offset,
            minislots_per_update: point.params.minislots_per_update,
            replications: spec.replications,
            normalized_weighted_avg_aoi: aoi,
            normalized_weighted_avg_aoi_se: aoi_se,
            normalized_avg_aoii: aoii,
            normalized_avg_aoii_se: aoii_se,
            collision_rate: coll,
            collision_rate_se: coll_se,
            avg_overhead_minislots: ovh,
            avg_overhead_minislots_se: ovh_se,
            overhead_bound_minislots: overhead_bound,
            min_pair_distinct_bound: pair_bound,
            frames: chunk.iter().map(|r| r.frames).sum(),
            deliveries: chunk.iter().map(|r| r.deliveries).sum(),
            seed: spec.seed,
        });
    }
    Ok(ResultTable { rows })
}
