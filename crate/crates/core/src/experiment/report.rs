use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::FoldPlan;
use crate::error::Result;
use crate::lesion::{CompensationReport, TelemetrySnapshot};
use crate::rng::{self, Purpose};

use super::config::{Engine, ImpactClass, ImpactThresholds, ScenarioConfig};

pub const TOOL_NAME: &str = "neurolesion";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// The one field allowed to differ between reruns of the same config.
pub const TIMESTAMP_FIELD: &str = "generated_unix_secs";

/// Pretty JSON with keys sorted at every level.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// sha256 over the compact canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let bytes = serde_json::to_vec(&v)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryPoint {
    pub step: u64,
    pub loss: f64,
    pub layer_grad_norms: Vec<f64>,
    pub vanishing_layers: usize,
    pub dead_neurons: usize,
}

impl From<&TelemetrySnapshot> for TelemetryPoint {
    fn from(s: &TelemetrySnapshot) -> Self {
        Self {
            step: s.step,
            loss: s.loss,
            layer_grad_norms: s.layer_grad_norms.clone(),
            vanishing_layers: s.vanishing.iter().filter(|&&v| v).count(),
            dead_neurons: s.dead_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySummary {
    /// Lesioned twin, every `every` steps.
    pub series: Vec<TelemetryPoint>,
    pub before_death: Option<TelemetrySnapshot>,
    pub after_death: Option<TelemetrySnapshot>,
    pub final_lesioned: TelemetrySnapshot,
    pub final_baseline: TelemetrySnapshot,
    /// Incoming-gradient L2 norm of the dead neuron, maximum over the
    /// post-lesion snapshots.
    pub dead_incoming_grad_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnSeedMetrics {
    /// Spikes per step of every LIF neuron on the probe batch.
    pub rates_before_lesion: Vec<Vec<f64>>,
    pub rates_after_lesion: Vec<Vec<f64>>,
    pub final_rates_baseline: Vec<Vec<f64>>,
    pub final_rates_lesioned: Vec<Vec<f64>>,
    /// `final_rates_lesioned - final_rates_baseline`.
    pub final_rate_delta: Vec<Vec<f64>>,
    pub output_rate_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub fold: usize,
    pub status: SeedStatus,
    pub failure: Option<String>,
    pub total_steps: u64,
    pub death_step: u64,
    pub lesion_fired: bool,
    pub init_hash: Option<String>,
    pub baseline_hash_at_death: Option<String>,
    pub lesioned_hash_at_death: Option<String>,
    pub baseline_loss: Option<f64>,
    pub lesioned_loss: Option<f64>,
    pub baseline_test_loss: Option<f64>,
    pub lesioned_test_loss: Option<f64>,
    pub degradation: Option<f64>,
    pub degradation_note: Option<String>,
    pub compensation: Option<CompensationReport>,
    pub compensation_note: Option<String>,
    /// Mean `|a_dead| · Σ|w_out|` of the lesioned neuron after training.
    pub residual_contribution: Option<f64>,
    pub telemetry: Option<TelemetrySummary>,
    pub snn: Option<SnnSeedMetrics>,
}

impl SeedResult {
    pub fn failed(seed: u64, fold: usize, total_steps: u64, death_step: u64, reason: String) -> Self {
        Self {
            seed,
            fold,
            status: SeedStatus::Failed,
            failure: Some(reason),
            total_steps,
            death_step,
            lesion_fired: false,
            init_hash: None,
            baseline_hash_at_death: None,
            lesioned_hash_at_death: None,
            baseline_loss: None,
            lesioned_loss: None,
            baseline_test_loss: None,
            lesioned_test_loss: None,
            degradation: None,
            degradation_note: None,
            compensation: None,
            compensation_note: None,
            residual_contribution: None,
            telemetry: None,
            snn: None,
        }
    }

    pub fn twins_match(&self) -> bool {
        self.baseline_hash_at_death == self.lesioned_hash_at_death
    }
}

/// `(D, note)`: relative loss increase, or a reason it is undefined.
pub fn degradation(baseline: f64, lesioned: f64) -> (Option<f64>, Option<String>) {
    if !baseline.is_finite() || !lesioned.is_finite() {
        return (None, Some("non-finite loss".into()));
    }
    if baseline == 0.0 {
        if lesioned == 0.0 {
            return (Some(0.0), None);
        }
        return (None, Some("baseline loss is exactly zero".into()));
    }
    let d = (lesioned - baseline) / baseline;
    (Some(d), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareStats {
    pub n: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    /// Percentile bootstrap interval of the mean.
    pub ci95_low: Option<f64>,
    pub ci95_high: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub class: Option<ImpactClass>,
    pub engine: Engine,
    pub thresholds: ImpactThresholds,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub median_degradation: Option<f64>,
    pub median_baseline_loss: Option<f64>,
    pub median_lesioned_loss: Option<f64>,
    pub nearest_share_outgoing: ShareStats,
    pub nearest_share_incoming: ShareStats,
    /// Spiking scenarios only: median change of the output neuron's rate.
    pub median_output_rate_delta: Option<f64>,
    pub impact: Impact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub id: u8,
    pub training_algorithm: String,
    pub method: String,
    pub activation: String,
    pub engine: Engine,
    pub expected_impact: ImpactClass,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub tool: String,
    pub tool_version: String,
    pub generated_unix_secs: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub scenario: ScenarioLabel,
    pub fold_plan: FoldPlan,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Aggregate,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        to_canonical_json(self)
    }

    /// One row per seed.
    pub fn seeds_csv(&self) -> String {
        let mut out = String::from(
            "scenario,seed,fold,status,death_step,baseline_loss,lesioned_loss,degradation,nearest_share_outgoing,nearest_share_incoming\n",
        );
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
        for s in &self.seeds {
            let (out_s1, in_s1) = match &s.compensation {
                Some(c) => (c.outgoing.nearest_share, c.incoming.nearest_share),
                None => (None, None),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                self.scenario.id,
                s.seed,
                s.fold,
                if s.status == SeedStatus::Ok { "ok" } else { "failed" },
                s.death_step,
                f(s.baseline_loss),
                f(s.lesioned_loss),
                f(s.degradation),
                f(out_s1),
                f(in_s1),
            ));
        }
        out
    }

    /// Survivor rows of every seed's outgoing compensation view.
    pub fn compensation_csv(&self) -> String {
        let mut out = String::from("seed,layer,index,distance,delta,share\n");
        for s in &self.seeds {
            if let Some(c) = &s.compensation {
                for line in c.to_csv().lines().skip(1) {
                    out.push_str(&format!("{},{line}\n", s.seed));
                }
            }
        }
        out
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

/// Linear-interpolated quantile of sorted data, `q` in [0, 1].
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap 95% interval of the mean.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = rng::stream(seed, Purpose::Bootstrap, 0, 0);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[(rng.next() % n as u64) as usize]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Some((quantile(&means, 0.025), quantile(&means, 0.975)))
}

pub fn share_stats(values: &[f64], total_seeds: usize, resamples: usize, seed: u64) -> ShareStats {
    let ci = bootstrap_ci(values, resamples, seed);
    let note = if values.is_empty() {
        Some("no seed produced a defined nearest-neighbor share".to_string())
    } else if values.len() < total_seeds {
        Some(format!(
            "{} of {total_seeds} seeds had no defined share",
            total_seeds - values.len()
        ))
    } else {
        None
    };
    ShareStats {
        n: values.len(),
        median: median(values),
        mean: mean(values),
        ci95_low: ci.map(|c| c.0),
        ci95_high: ci.map(|c| c.1),
        note,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: u8,
    pub training_algorithm: String,
    pub activation: String,
    pub engine: Engine,
    pub expected_impact: ImpactClass,
    pub measured_impact: Option<ImpactClass>,
    pub median_degradation: Option<f64>,
    pub nearest_share_median: Option<f64>,
    pub nearest_share_ci95_low: Option<f64>,
    pub nearest_share_ci95_high: Option<f64>,
    pub seeds_ok: usize,
    pub seeds_failed: usize,
    pub error: Option<String>,
}

impl SummaryRow {
    pub fn from_report(r: &ScenarioReport) -> Self {
        let s1 = &r.aggregate.nearest_share_outgoing;
        Self {
            scenario: r.scenario.id,
            training_algorithm: r.scenario.training_algorithm.clone(),
            activation: r.scenario.activation.clone(),
            engine: r.scenario.engine,
            expected_impact: r.scenario.expected_impact,
            measured_impact: r.aggregate.impact.class,
            median_degradation: r.aggregate.median_degradation,
            nearest_share_median: s1.median,
            nearest_share_ci95_low: s1.ci95_low,
            nearest_share_ci95_high: s1.ci95_high,
            seeds_ok: r.aggregate.seeds_ok,
            seeds_failed: r.aggregate.seeds_failed,
            error: None,
        }
    }

    pub fn failed(cfg: &ScenarioConfig, error: String) -> Self {
        Self {
            scenario: cfg.id,
            training_algorithm: cfg.training_algorithm().into(),
            activation: cfg.activation.to_string(),
            engine: cfg.engine,
            expected_impact: cfg.expected_impact(),
            measured_impact: None,
            median_degradation: None,
            nearest_share_median: None,
            nearest_share_ci95_low: None,
            nearest_share_ci95_high: None,
            seeds_ok: 0,
            seeds_failed: cfg.settings.seeds.len(),
            error: Some(error),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub tool: String,
    pub tool_version: String,
    pub generated_unix_secs: u64,
    pub config_hash: String,
    pub partial: bool,
    pub rows: Vec<SummaryRow>,
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,training_algorithm,activation,expected_impact,measured_impact,median_degradation,nearest_share_median,nearest_share_ci95_low,nearest_share_ci95_high,seeds_ok,seeds_failed\n",
        );
        let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:?}"));
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.scenario,
                r.training_algorithm,
                r.activation,
                r.expected_impact,
                r.measured_impact.map_or_else(String::new, |c| c.to_string()),
                f(r.median_degradation),
                f(r.nearest_share_median),
                f(r.nearest_share_ci95_low),
                f(r.nearest_share_ci95_high),
                r.seeds_ok,
                r.seeds_failed,
            ));
        }
        out
    }

    /// Fixed-width table for terminals.
    pub fn to_table(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut out = format!(
            "{:<3} {:<26} {:<16} {:<9} {:<9} {:>10} {:>8} {:>19}\n",
            "id", "training algorithm", "activation", "expected", "measured", "median D", "S1", "S1 95% CI"
        );
        for r in &self.rows {
            let ci = match (r.nearest_share_ci95_low, r.nearest_share_ci95_high) {
                (Some(a), Some(b)) => format!("[{a:.3}, {b:.3}]"),
                _ => "-".into(),
            };
            out.push_str(&format!(
                "{:<3} {:<26} {:<16} {:<9} {:<9} {:>10} {:>8} {:>19}\n",
                r.scenario,
                r.training_algorithm,
                r.activation,
                r.expected_impact.to_string(),
                r.measured_impact.map_or_else(|| "-".to_string(), |c| c.to_string()),
                f(r.median_degradation),
                f(r.nearest_share_median),
                ci
            ));
        }
        if self.partial {
            out.push_str("partial sweep: at least one scenario failed\n");
        }
        out
    }
}
