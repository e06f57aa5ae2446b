//! Dense-network twin runs: train to the death step, fork, lesion one twin.

use rand::seq::SliceRandom;

use crate::data::NormalizedSplit;
use crate::error::{Error, Result};
use crate::lesion::{self, LesionSpec, TelemetrySnapshot};
use crate::nn::{self, DropoutCtx, Network, TrainConfig};
use crate::optim::Optimizer;
use crate::rng::{self, Purpose};

use super::config::ScenarioConfig;
use super::report::{degradation, SeedResult, SeedStatus, TelemetryPoint, TelemetrySummary};

#[derive(Clone)]
struct Trainer<'a> {
    net: Network,
    opt: Optimizer,
    cfg: TrainConfig,
    split: &'a NormalizedSplit,
    order: Vec<usize>,
    step: u64,
}

impl<'a> Trainer<'a> {
    fn step(&mut self) -> Result<()> {
        let n = self.split.train_x.len() as u64;
        let (epoch, pos) = (self.step / n, (self.step % n) as usize);
        if pos == 0 {
            self.order = (0..n as usize).collect();
            self.order
                .shuffle(&mut rng::stream(self.cfg.seed, Purpose::Shuffle, 0, epoch));
        }
        let i = self.order[pos];
        let ctx = (self.cfg.dropout_keep < 1.0).then_some(DropoutCtx {
            keep: self.cfg.dropout_keep,
            seed: self.cfg.seed,
            step: self.step,
        });
        let trace = nn::forward_train(&self.net, &self.split.train_x[i], ctx)?;
        if !trace.prediction().is_finite() {
            return Err(Error::Numeric {
                step: self.step as usize,
                detail: "prediction is not finite".into(),
            });
        }
        let grad = nn::backward(&self.net, &trace, &[self.split.train_y[i]], &self.cfg)?;
        self.opt.step(&mut self.net, &grad)?;
        if !self.net.params_finite() {
            return Err(Error::Numeric {
                step: self.step as usize,
                detail: "parameters diverged".into(),
            });
        }
        self.step += 1;
        Ok(())
    }
}

/// Mean `½(y − ŷ)²` in inference mode.
pub fn dataset_loss(net: &Network, xs: &[Vec<f64>], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        total += nn::mse_loss(y, nn::forward(net, x)?.prediction());
    }
    Ok(total / xs.len() as f64)
}

pub(crate) fn probe_rows(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Purpose::Probe, 0, 0));
    idx.truncate(size.min(n));
    idx
}

struct Probe {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    threshold: f64,
}

impl Probe {
    fn snap(&self, net: &Network, step: u64) -> Result<TelemetrySnapshot> {
        lesion::probe_telemetry(net, &self.x, &self.y, step, self.threshold)
    }
}

fn dead_grad_norm(net: &Network, spec: &LesionSpec, probe: &Probe) -> Result<f64> {
    let cfg = TrainConfig {
        l2_lambda: 0.0,
        dropout_keep: 1.0,
        ..TrainConfig::default()
    };
    let mut worst: f64 = 0.0;
    for (x, &y) in probe.x.iter().zip(&probe.y) {
        let trace = nn::forward(net, x)?;
        let g = nn::backward(net, &trace, &[y], &cfg)?;
        worst = worst.max(lesion::incoming_grad_norm(&g, spec));
    }
    Ok(worst)
}

/// One seed of a dense scenario. Divergence is reported as a failed seed.
pub fn run_seed(cfg: &ScenarioConfig, split: &NormalizedSplit, seed: u64, fold: usize) -> SeedResult {
    let s = &cfg.settings;
    let total = (s.train.epochs * split.train_x.len()) as u64;
    let spec = s.lesion.spec(total);
    match run_seed_inner(cfg, split, seed, fold, total, &spec) {
        Ok(r) => r,
        Err(e) => SeedResult::failed(seed, fold, total, spec.death_step, e.to_string()),
    }
}

fn run_seed_inner(
    cfg: &ScenarioConfig,
    split: &NormalizedSplit,
    seed: u64,
    fold: usize,
    total: u64,
    spec: &LesionSpec,
) -> Result<SeedResult> {
    let s = &cfg.settings;
    let net = nn::init_network(&s.layer_sizes, &cfg.ann_activations(), seed)?;
    let init_hash = net.param_hash();
    let opt = cfg
        .optimizer
        .as_ref()
        .ok_or_else(|| Error::config("dense scenario without optimizer"))?
        .build(&net)?;
    let train_cfg = TrainConfig { seed, ..s.train };
    let rows = probe_rows(split.train_x.len(), s.telemetry.probe_size, seed);
    let probe = Probe {
        x: rows.iter().map(|&r| split.train_x[r].clone()).collect(),
        y: rows.iter().map(|&r| split.train_y[r]).collect(),
        threshold: s.telemetry.vanishing_threshold,
    };
    let every = s.telemetry.every;

    let mut trainer = Trainer {
        net,
        opt,
        cfg: train_cfg,
        split,
        order: Vec::new(),
        step: 0,
    };
    let mut series = Vec::new();
    let fires = spec.death_step < total;
    let fork_at = spec.death_step.min(total);
    while trainer.step < fork_at {
        if trainer.step % every == 0 {
            series.push(TelemetryPoint::from(&probe.snap(&trainer.net, trainer.step)?));
        }
        trainer.step()?;
    }

    let mut baseline = trainer.clone();
    let mut lesioned = trainer;
    let baseline_hash = baseline.net.param_hash();
    let lesioned_hash = lesioned.net.param_hash();
    let at_death = lesioned.net.clone();
    let (mut before_death, mut after_death, mut dead_grad) = (None, None, None);
    if fires {
        before_death = Some(probe.snap(&lesioned.net, lesioned.step)?);
        lesion::inject_lesion(&mut lesioned.net, spec)?;
        after_death = Some(probe.snap(&lesioned.net, lesioned.step)?);
        dead_grad = Some(dead_grad_norm(&lesioned.net, spec, &probe)?);
    }

    while lesioned.step < total {
        if lesioned.step % every == 0 {
            let snap = probe.snap(&lesioned.net, lesioned.step)?;
            if fires {
                let g = dead_grad_norm(&lesioned.net, spec, &probe)?;
                dead_grad = dead_grad.map(|d: f64| d.max(g));
            }
            series.push(TelemetryPoint::from(&snap));
        }
        lesioned.step()?;
        baseline.step()?;
    }
    let final_lesioned = probe.snap(&lesioned.net, total)?;
    let final_baseline = probe.snap(&baseline.net, total)?;
    series.push(TelemetryPoint::from(&final_lesioned));

    let baseline_loss = dataset_loss(&baseline.net, &split.train_x, &split.train_y)?;
    let lesioned_loss = dataset_loss(&lesioned.net, &split.train_x, &split.train_y)?;
    let (d, d_note) = degradation(baseline_loss, lesioned_loss);
    let (compensation, compensation_note, residual) = if fires {
        let c = lesion::compensation_report(&at_death, &lesioned.net, spec)?;
        let r = lesion::residual_contribution(&lesioned.net, spec, &probe.x)?;
        (Some(c), None, Some(r))
    } else {
        (
            None,
            Some("lesion scheduled after the end of training".to_string()),
            None,
        )
    };

    Ok(SeedResult {
        seed,
        fold,
        status: SeedStatus::Ok,
        failure: None,
        total_steps: total,
        death_step: spec.death_step,
        lesion_fired: fires,
        init_hash: Some(init_hash),
        baseline_hash_at_death: Some(baseline_hash),
        lesioned_hash_at_death: Some(lesioned_hash),
        baseline_loss: Some(baseline_loss),
        lesioned_loss: Some(lesioned_loss),
        baseline_test_loss: Some(dataset_loss(&baseline.net, &split.test_x, &split.test_y)?),
        lesioned_test_loss: Some(dataset_loss(&lesioned.net, &split.test_x, &split.test_y)?),
        degradation: d,
        degradation_note: d_note,
        compensation,
        compensation_note,
        residual_contribution: residual,
        telemetry: Some(TelemetrySummary {
            series,
            before_death,
            after_death,
            final_lesioned,
            final_baseline,
            dead_incoming_grad_max: dead_grad,
        }),
        snn: None,
    })
}
