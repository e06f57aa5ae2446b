//! Spiking twin runs for the surrogate-gradient and SUR scenarios.

use rand::seq::SliceRandom;

use crate::data::NormalizedSplit;
use crate::error::{Error, Result};
use crate::lesion::{self, LesionSpec};
use crate::rng::{self, Purpose};
use crate::snn::{self, NeuronId, SnnNetwork, SnnSettings, SpikeTrain};

use super::ann::probe_rows;
use super::config::{Method, ScenarioConfig};
use super::report::{degradation, SeedResult, SeedStatus, SnnSeedMetrics};

/// Inputs clamped into the encoder's `[0, 1]` domain.
struct SpikeData {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl SpikeData {
    fn new(xs: &[Vec<f64>], ys: &[f64]) -> Self {
        Self {
            x: xs
                .iter()
                .map(|r| r.iter().map(|v| v.clamp(0.0, 1.0)).collect())
                .collect(),
            y: ys.to_vec(),
        }
    }
}

fn window_seed(seed: u64, purpose: Purpose, layer: u64, step: u64) -> u64 {
    rng::stream(seed, purpose, layer, step).next()
}

/// Poisson train for the output neuron at `y / decode_scale` spikes per step.
pub fn teacher_train(y: f64, settings: &SnnSettings, seed: u64, step: u64) -> SpikeTrain {
    let p = (y / settings.decode_scale).clamp(0.0, 1.0);
    let mut rng = rng::stream(seed, Purpose::Teacher, 0, step);
    let steps = (0..settings.steps as u32).filter(|_| rng.bernoulli(p)).collect();
    SpikeTrain::new(NeuronId { layer: 0, index: 0 }, steps)
}

#[derive(Clone)]
struct Trainer<'a> {
    net: SnnNetwork,
    method: Method,
    settings: SnnSettings,
    data: &'a SpikeData,
    seed: u64,
    order: Vec<usize>,
    step: u64,
}

impl<'a> Trainer<'a> {
    fn step(&mut self) -> Result<()> {
        let n = self.data.x.len() as u64;
        let (epoch, pos) = (self.step / n, (self.step % n) as usize);
        if pos == 0 {
            self.order = (0..n as usize).collect();
            self.order
                .shuffle(&mut rng::stream(self.seed, Purpose::Shuffle, 0, epoch));
        }
        let i = self.order[pos];
        let s = &self.settings;
        let input = snn::encode_poisson(
            &self.data.x[i],
            s.max_rate,
            s.steps,
            window_seed(self.seed, Purpose::Poisson, 0, self.step),
        )?;
        let y = self.data.y[i];
        match self.method {
            Method::Surrogate => {
                let loss = snn::surrogate_backprop_step(&mut self.net, &input, &[y], s)?;
                if !loss.is_finite() {
                    return Err(Error::Numeric {
                        step: self.step as usize,
                        detail: "loss is not finite".into(),
                    });
                }
            }
            Method::Sur => {
                let teacher = teacher_train(y, s, self.seed, self.step);
                snn::train_window(&mut self.net, &input, Some(&teacher), &s.sur, s)?;
            }
            _ => return Err(Error::config("spiking run needs a spiking method")),
        }
        self.step += 1;
        Ok(())
    }
}

struct Eval {
    inputs: Vec<Vec<SpikeTrain>>,
    targets: Vec<f64>,
    probe: Vec<usize>,
}

impl Eval {
    fn new(data: &SpikeData, settings: &SnnSettings, seed: u64, probe_size: usize) -> Result<Self> {
        let inputs = data
            .x
            .iter()
            .enumerate()
            .map(|(r, x)| {
                snn::encode_poisson(
                    x,
                    settings.max_rate,
                    settings.steps,
                    window_seed(seed, Purpose::Probe, 1, r as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inputs,
            targets: data.y.clone(),
            probe: probe_rows(data.x.len(), probe_size, seed),
        })
    }

    fn loss(&self, net: &SnnNetwork, settings: &SnnSettings) -> Result<f64> {
        if self.inputs.is_empty() {
            return Ok(0.0);
        }
        let mut scratch = net.clone();
        let mut total = 0.0;
        for (input, &y) in self.inputs.iter().zip(&self.targets) {
            total += snn::rate_loss(&mut scratch, input, &[y], settings)?;
        }
        Ok(total / self.inputs.len() as f64)
    }

    fn rates(&self, net: &SnnNetwork, settings: &SnnSettings) -> Result<Vec<Vec<f64>>> {
        let batch: Vec<Vec<SpikeTrain>> = self.probe.iter().map(|&r| self.inputs[r].clone()).collect();
        snn::firing_rates(net, &batch, settings.steps)
    }
}

fn diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect())
        .collect()
}

pub fn run_seed(cfg: &ScenarioConfig, split: &NormalizedSplit, seed: u64, fold: usize) -> SeedResult {
    let s = &cfg.settings;
    let total = (s.snn_epochs * split.train_x.len()) as u64;
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
    let gate = (cfg.method == Method::Sur).then_some(cfg.activation);
    let net = SnnNetwork::new(&s.layer_sizes, &s.snn, gate, seed)?;
    let init_hash = net.param_hash();
    let train = SpikeData::new(&split.train_x, &split.train_y);
    let test = SpikeData::new(&split.test_x, &split.test_y);
    let eval = Eval::new(&train, &s.snn, seed, s.telemetry.probe_size)?;
    let test_eval = Eval::new(&test, &s.snn, seed, 1)?;

    let mut trainer = Trainer {
        net,
        method: cfg.method,
        settings: s.snn,
        data: &train,
        seed,
        order: Vec::new(),
        step: 0,
    };
    let fires = spec.death_step < total;
    while trainer.step < spec.death_step.min(total) {
        trainer.step()?;
    }
    let mut baseline = trainer.clone();
    let mut lesioned = trainer;
    let baseline_hash = baseline.net.param_hash();
    let lesioned_hash = lesioned.net.param_hash();
    let at_death = lesioned.net.clone();
    let rates_before = eval.rates(&lesioned.net, &s.snn)?;
    if fires {
        lesioned.net.inject_lesion(spec)?;
    }
    let rates_after = eval.rates(&lesioned.net, &s.snn)?;
    while lesioned.step < total {
        lesioned.step()?;
        baseline.step()?;
    }

    let baseline_loss = eval.loss(&baseline.net, &s.snn)?;
    let lesioned_loss = eval.loss(&lesioned.net, &s.snn)?;
    let (d, d_note) = degradation(baseline_loss, lesioned_loss);
    let final_base = eval.rates(&baseline.net, &s.snn)?;
    let final_les = eval.rates(&lesioned.net, &s.snn)?;
    let final_delta = diff(&final_les, &final_base);
    let output_rate_delta = final_delta.last().map_or(0.0, |v| v.iter().sum());
    let (compensation, compensation_note) = if fires {
        let c = lesion::compensation_from_weights(&at_death.weights, &lesioned.net.weights, spec.layer, spec.neuron)?;
        (Some(c), None)
    } else {
        (None, Some("lesion scheduled after the end of training".to_string()))
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
        baseline_test_loss: Some(test_eval.loss(&baseline.net, &s.snn)?),
        lesioned_test_loss: Some(test_eval.loss(&lesioned.net, &s.snn)?),
        degradation: d,
        degradation_note: d_note,
        compensation,
        compensation_note,
        residual_contribution: None,
        telemetry: None,
        snn: Some(SnnSeedMetrics {
            rates_before_lesion: rates_before,
            rates_after_lesion: rates_after,
            final_rates_baseline: final_base,
            final_rates_lesioned: final_les,
            final_rate_delta: final_delta,
            output_rate_delta,
        }),
    })
}
