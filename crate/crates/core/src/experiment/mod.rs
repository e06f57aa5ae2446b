//! Scenario runner: maps the six scenarios to configurations, runs
//! baseline/lesioned twins per seed, and writes JSON and CSV reports.

mod ann;
mod config;
mod report;
mod spiking;

pub use ann::dataset_loss;
pub use config::{
    classify_impact, Engine, ImpactClass, ImpactThresholds, LesionPlan, Method, ScenarioConfig, Settings,
    TelemetryConfig, DEFAULT_LAYERS, DEFAULT_SGD_LR, EARLY_DEATH_FRAC, LATE_DEATH_FRAC, SCENARIO_IDS,
};
pub use report::{
    bootstrap_ci, config_hash, degradation, median, to_canonical_json, Aggregate, Impact, ScenarioLabel,
    ScenarioReport, SeedResult, SeedStatus, ShareStats, SnnSeedMetrics, SummaryRow, SweepSummary, TelemetryPoint,
    TelemetrySummary, TIMESTAMP_FIELD, TOOL_NAME, TOOL_VERSION,
};
pub use spiking::teacher_train;

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::data::{generate_dataset, kfold_split};
use crate::error::{Error, Result};

fn aggregate(cfg: &ScenarioConfig, seeds: &[SeedResult]) -> Aggregate {
    let s = &cfg.settings;
    let ok: Vec<&SeedResult> = seeds.iter().filter(|r| r.status == SeedStatus::Ok).collect();
    let collect = |f: &dyn Fn(&SeedResult) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
    let ds = collect(&|r| r.degradation);
    let median_d = median(&ds);
    let s1_out = collect(&|r| r.compensation.as_ref().and_then(|c| c.outgoing.nearest_share));
    let s1_in = collect(&|r| r.compensation.as_ref().and_then(|c| c.incoming.nearest_share));
    let boot_seed = s.seeds.iter().fold(u64::from(cfg.id), |acc, &x| acc.rotate_left(7) ^ x);
    let rate_deltas = collect(&|r| r.snn.as_ref().map(|m| m.output_rate_delta));
    let impact = match median_d {
        Some(d) => Impact {
            class: Some(classify_impact(d, cfg.engine, &s.thresholds)),
            engine: cfg.engine,
            thresholds: s.thresholds,
            note: None,
        },
        None => Impact {
            class: None,
            engine: cfg.engine,
            thresholds: s.thresholds,
            note: Some("no seed produced a finite degradation".into()),
        },
    };
    Aggregate {
        seeds_ok: ok.len(),
        seeds_failed: seeds.len() - ok.len(),
        median_degradation: median_d,
        median_baseline_loss: median(&collect(&|r| r.baseline_loss)),
        median_lesioned_loss: median(&collect(&|r| r.lesioned_loss)),
        nearest_share_outgoing: report::share_stats(&s1_out, ok.len(), s.bootstrap_resamples, boot_seed),
        nearest_share_incoming: report::share_stats(&s1_in, ok.len(), s.bootstrap_resamples, boot_seed ^ 1),
        median_output_rate_delta: median(&rate_deltas),
        impact,
    }
}

/// Train every seed's twins, aggregate, classify. Seeds that diverge are
/// marked failed; the run errors only when all of them fail.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport> {
    cfg.validate()?;
    let s = &cfg.settings;
    let ds = generate_dataset(s.dataset_seed, s.dataset)?;
    let plan = kfold_split(ds.len(), s.k_folds, s.dataset_seed)?;
    let splits = (0..plan.k).map(|f| plan.split(&ds, f)).collect::<Result<Vec<_>>>()?;

    let seeds: Vec<SeedResult> = s
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let fold = i % plan.k;
            match cfg.engine {
                Engine::Ann => ann::run_seed(cfg, &splits[fold], seed, fold),
                Engine::Snn => spiking::run_seed(cfg, &splits[fold], seed, fold),
            }
        })
        .collect();
    if seeds.iter().all(|r| r.status == SeedStatus::Failed) {
        let reasons: Vec<String> = seeds
            .iter()
            .map(|r| format!("seed {}: {}", r.seed, r.failure.clone().unwrap_or_default()))
            .collect();
        return Err(Error::Run(format!(
            "every seed of scenario {} failed: {}",
            cfg.id,
            reasons.join("; ")
        )));
    }
    let aggregate = aggregate(cfg, &seeds);
    Ok(ScenarioReport {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        generated_unix_secs: report::unix_now(),
        config_hash: config_hash(cfg)?,
        config: cfg.clone(),
        scenario: ScenarioLabel {
            id: cfg.id,
            training_algorithm: cfg.training_algorithm().into(),
            method: cfg.method.label().into(),
            activation: cfg.activation.to_string(),
            engine: cfg.engine,
            expected_impact: cfg.expected_impact(),
            notes: cfg.notes(),
        },
        fold_plan: plan,
        seeds,
        aggregate,
    })
}

/// Write `<stem>.json`, `<stem>_seeds.csv` and `<stem>_compensation.csv`.
pub fn write_report(report: &ScenarioReport, dir: &Path, stem: &str) -> Result<()> {
    fs::write(dir.join(format!("{stem}.json")), report.to_json()?)?;
    fs::write(dir.join(format!("{stem}_seeds.csv")), report.seeds_csv())?;
    fs::write(dir.join(format!("{stem}_compensation.csv")), report.compensation_csv())?;
    Ok(())
}

pub fn scenario_stem(id: u8) -> String {
    format!("scenario_{id}")
}

/// Run scenarios 1..=6 on shared settings and write one report per
/// scenario plus `summary.json` and `summary.csv`. A scenario that fails
/// outright becomes an error row and marks the summary partial.
pub fn sweep_all(settings: &Settings, out_dir: &Path) -> Result<SweepSummary> {
    settings.validate()?;
    fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    let mut partial = false;
    for id in SCENARIO_IDS {
        let cfg = ScenarioConfig::table(id, settings)?;
        match run_scenario(&cfg) {
            Ok(r) => {
                write_report(&r, out_dir, &scenario_stem(id))?;
                rows.push(SummaryRow::from_report(&r));
            }
            Err(e) => {
                partial = true;
                rows.push(SummaryRow::failed(&cfg, e.to_string()));
            }
        }
    }
    let summary = SweepSummary {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        generated_unix_secs: report::unix_now(),
        config_hash: config_hash(settings)?,
        partial,
        rows,
    };
    fs::write(out_dir.join("summary.json"), to_canonical_json(&summary)?)?;
    fs::write(out_dir.join("summary.csv"), summary.to_csv())?;
    Ok(summary)
}

/// Rebuild the summary table from the scenario reports found in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<SweepSummary> {
    let mut reports = Vec::new();
    for id in SCENARIO_IDS {
        let path = dir.join(format!("{}.json", scenario_stem(id)));
        if path.exists() {
            let text = fs::read_to_string(&path)?;
            let r: ScenarioReport = serde_json::from_str(&text)?;
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(Error::config(format!("no scenario reports in {}", dir.display())));
    }
    let hashes: Vec<&str> = reports.iter().map(|r| r.config_hash.as_str()).collect();
    Ok(SweepSummary {
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        generated_unix_secs: report::unix_now(),
        config_hash: config_hash(&hashes)?,
        partial: reports.len() < SCENARIO_IDS.len(),
        rows: reports.iter().map(SummaryRow::from_report).collect(),
    })
}
