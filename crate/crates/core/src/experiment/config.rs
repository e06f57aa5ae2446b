use std::fmt;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::data::DatasetParams;
use crate::error::{Error, Result};
use crate::lesion::{LesionMode, LesionSpec, DEFAULT_VANISHING_THRESHOLD};
use crate::nn::TrainConfig;
use crate::optim::{AdamParams, OptimizerConfig};
use crate::snn::SnnSettings;

pub const SCENARIO_IDS: [u8; 6] = [1, 2, 3, 4, 5, 6];
pub const DEFAULT_LAYERS: [usize; 5] = [5, 10, 10, 10, 1];
pub const DEFAULT_SGD_LR: f64 = 0.05;
pub const EARLY_DEATH_FRAC: f64 = 0.5;
pub const LATE_DEATH_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Ann,
    Snn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    BackpropSgd,
    Adam,
    Surrogate,
    Sur,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::BackpropSgd => "backprop-sgd",
            Method::Adam => "adam",
            Method::Surrogate => "surrogate",
            Method::Sur => "sur",
        }
    }
}

/// Which neuron dies, how, and when as a fraction of total training steps.
/// A fraction of 1 or more means the lesion never fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionPlan {
    pub layer: usize,
    pub neuron: usize,
    pub mode: LesionMode,
    pub freeze: bool,
    pub death_frac: f64,
}

impl Default for LesionPlan {
    fn default() -> Self {
        Self {
            layer: 1,
            neuron: 4,
            mode: LesionMode::ZeroIncoming,
            freeze: true,
            death_frac: EARLY_DEATH_FRAC,
        }
    }
}

impl LesionPlan {
    pub fn death_step(&self, total_steps: u64) -> u64 {
        (self.death_frac * total_steps as f64).floor() as u64
    }

    pub fn spec(&self, total_steps: u64) -> LesionSpec {
        LesionSpec {
            layer: self.layer,
            neuron: self.neuron,
            mode: self.mode,
            death_step: self.death_step(total_steps),
            freeze: self.freeze,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryConfig {
    pub every: u64,
    pub probe_size: usize,
    pub vanishing_threshold: f64,
}

impl Default for TelemetryConfig {
    fn default() -> Self {
        Self {
            every: 50,
            probe_size: 32,
            vanishing_threshold: DEFAULT_VANISHING_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactThresholds {
    pub moderate: f64,
    pub severe: f64,
}

impl Default for ImpactThresholds {
    fn default() -> Self {
        Self {
            moderate: 0.10,
            severe: 0.50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactClass {
    Minor,
    Moderate,
    Severe,
    Complex,
}

impl fmt::Display for ImpactClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ImpactClass::Minor => "Minor",
            ImpactClass::Moderate => "Moderate",
            ImpactClass::Severe => "Severe",
            ImpactClass::Complex => "Complex",
        };
        f.write_str(s)
    }
}

/// Spiking runs are always `Complex`; dense runs are bucketed by median D.
pub fn classify_impact(median_d: f64, engine: Engine, thresholds: &ImpactThresholds) -> ImpactClass {
    match engine {
        Engine::Snn => ImpactClass::Complex,
        Engine::Ann if median_d < thresholds.moderate => ImpactClass::Minor,
        Engine::Ann if median_d < thresholds.severe => ImpactClass::Moderate,
        Engine::Ann => ImpactClass::Severe,
    }
}

/// Everything a sweep shares across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seeds: Vec<u64>,
    pub layer_sizes: Vec<usize>,
    pub train: TrainConfig,
    pub sgd_lr: f64,
    pub adam: AdamParams,
    pub leaky_slope: f64,
    pub srelu_a: f64,
    pub srelu_b: f64,
    pub lesion: LesionPlan,
    pub dataset: DatasetParams,
    pub dataset_seed: u64,
    pub k_folds: usize,
    pub snn: SnnSettings,
    pub snn_epochs: usize,
    pub telemetry: TelemetryConfig,
    pub thresholds: ImpactThresholds,
    pub bootstrap_resamples: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            seeds: (1..=20).collect(),
            layer_sizes: DEFAULT_LAYERS.to_vec(),
            train: TrainConfig::default(),
            sgd_lr: DEFAULT_SGD_LR,
            adam: AdamParams::default(),
            leaky_slope: crate::activations::DEFAULT_LEAKY_SLOPE,
            srelu_a: crate::activations::DEFAULT_SRELU_A,
            srelu_b: crate::activations::DEFAULT_SRELU_B,
            lesion: LesionPlan::default(),
            dataset: DatasetParams::default(),
            dataset_seed: 2024,
            k_folds: 5,
            snn: SnnSettings::default(),
            snn_epochs: 3,
            telemetry: TelemetryConfig::default(),
            thresholds: ImpactThresholds::default(),
            bootstrap_resamples: 1000,
        }
    }
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds must be distinct"));
        }
        if self.layer_sizes.len() < 3 || self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::config(
                "layer sizes need an input, at least one hidden layer, and an output",
            ));
        }
        if self.layer_sizes[0] != crate::data::FEATURE_YEARS || *self.layer_sizes.last().unwrap() != 1 {
            return Err(Error::config("the forecasting task needs 5 inputs and 1 output"));
        }
        self.train.validate()?;
        OptimizerConfig::Sgd { lr: self.sgd_lr }.validate()?;
        self.adam.validate()?;
        ActivationKind::LeakyRelu {
            slope: self.leaky_slope,
        }
        .validate()?;
        ActivationKind::SRelu {
            a: self.srelu_a,
            b: self.srelu_b,
        }
        .validate()?;
        if !(self.lesion.death_frac >= 0.0 && self.lesion.death_frac.is_finite()) {
            return Err(Error::config(format!(
                "death fraction must be >= 0, got {}",
                self.lesion.death_frac
            )));
        }
        self.lesion.spec(0).validate_for(&self.layer_sizes)?;
        self.dataset.validate()?;
        if self.k_folds < 2 || self.k_folds > crate::data::DAYS {
            return Err(Error::config(format!(
                "k_folds must lie in 2..=365, got {}",
                self.k_folds
            )));
        }
        self.snn.validate()?;
        if self.snn_epochs == 0 {
            return Err(Error::config("snn_epochs must be positive"));
        }
        if self.telemetry.every == 0 || self.telemetry.probe_size == 0 {
            return Err(Error::config("telemetry cadence and probe size must be positive"));
        }
        if !(self.thresholds.moderate <= self.thresholds.severe) {
            return Err(Error::config("impact thresholds must satisfy moderate <= severe"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::config("bootstrap_resamples must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: u8,
    pub engine: Engine,
    pub method: Method,
    /// Hidden-layer activation (ANN), surrogate nonlinearity (scenario 5), or
    /// current gate (scenario 6).
    pub activation: ActivationKind,
    /// Dense scenarios only.
    pub optimizer: Option<OptimizerConfig>,
    pub settings: Settings,
}

fn kind_matches(a: &ActivationKind, b: &ActivationKind) -> bool {
    std::mem::discriminant(a) == std::mem::discriminant(b)
}

impl ScenarioConfig {
    /// The configuration of one row of the scenario table.
    pub fn table(id: u8, settings: &Settings) -> Result<Self> {
        let sgd = Some(OptimizerConfig::Sgd { lr: settings.sgd_lr });
        let (engine, method, activation, optimizer) = match id {
            1 => (Engine::Ann, Method::BackpropSgd, ActivationKind::Sigmoid, sgd),
            2 => (Engine::Ann, Method::BackpropSgd, ActivationKind::Relu, sgd),
            3 => (
                Engine::Ann,
                Method::BackpropSgd,
                ActivationKind::LeakyRelu {
                    slope: settings.leaky_slope,
                },
                sgd,
            ),
            4 => (
                Engine::Ann,
                Method::Adam,
                ActivationKind::Sigmoid,
                Some(OptimizerConfig::Adam(settings.adam)),
            ),
            5 => (Engine::Snn, Method::Surrogate, ActivationKind::Sigmoid, None),
            6 => (
                Engine::Snn,
                Method::Sur,
                ActivationKind::SRelu {
                    a: settings.srelu_a,
                    b: settings.srelu_b,
                },
                None,
            ),
            _ => return Err(Error::config(format!("scenario id must be 1..=6, got {id}"))),
        };
        let cfg = Self {
            id,
            engine,
            method,
            activation,
            optimizer,
            settings: settings.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        self.activation.validate()?;
        let expected = Self::table_row(self.id)?;
        if (self.engine, self.method) != (expected.0, expected.1) || !kind_matches(&self.activation, &expected.2) {
            return Err(Error::config(format!(
                "scenario {} must be {:?}/{}/{}, got {:?}/{}/{}",
                self.id,
                expected.0,
                expected.1.label(),
                expected.2,
                self.engine,
                self.method.label(),
                self.activation
            )));
        }
        match (self.method, &self.optimizer) {
            (Method::BackpropSgd, Some(OptimizerConfig::Sgd { .. }))
            | (Method::Adam, Some(OptimizerConfig::Adam(_))) => {}
            (Method::Surrogate | Method::Sur, None) => {}
            _ => return Err(Error::config(format!("optimizer does not fit scenario {}", self.id))),
        }
        if let Some(opt) = &self.optimizer {
            opt.validate()?;
        }
        Ok(())
    }

    fn table_row(id: u8) -> Result<(Engine, Method, ActivationKind)> {
        let s = Settings::default();
        Ok(match id {
            1 => (Engine::Ann, Method::BackpropSgd, ActivationKind::Sigmoid),
            2 => (Engine::Ann, Method::BackpropSgd, ActivationKind::Relu),
            3 => (
                Engine::Ann,
                Method::BackpropSgd,
                ActivationKind::LeakyRelu { slope: s.leaky_slope },
            ),
            4 => (Engine::Ann, Method::Adam, ActivationKind::Sigmoid),
            5 => (Engine::Snn, Method::Surrogate, ActivationKind::Sigmoid),
            6 => (
                Engine::Snn,
                Method::Sur,
                ActivationKind::SRelu {
                    a: s.srelu_a,
                    b: s.srelu_b,
                },
            ),
            _ => return Err(Error::config(format!("scenario id must be 1..=6, got {id}"))),
        })
    }

    pub fn training_algorithm(&self) -> &'static str {
        match self.id {
            1..=3 => "ANN with Backpropagation",
            4 => "ANN with Adam optimizer",
            5 => "SNN with Backpropagation",
            _ => "SNN with SUR algorithm",
        }
    }

    /// The qualitative label the scenario is expected to show.
    pub fn expected_impact(&self) -> ImpactClass {
        match self.id {
            1 | 4 => ImpactClass::Minor,
            2 => ImpactClass::Severe,
            3 => ImpactClass::Moderate,
            _ => ImpactClass::Complex,
        }
    }

    /// Hidden activations followed by an identity regression output.
    pub fn ann_activations(&self) -> Vec<ActivationKind> {
        let n = self.settings.layer_sizes.len() - 1;
        let mut acts = vec![self.activation; n];
        acts[n - 1] = ActivationKind::Identity;
        acts
    }

    pub fn notes(&self) -> Vec<String> {
        let mut notes = vec![
            "compensation distance is the absolute index difference within the lesioned layer".to_string(),
            "degradation D compares final training loss of the lesioned twin with its baseline twin".to_string(),
        ];
        match self.method {
            Method::Surrogate => notes.push(
                "backpropagation is realized as surrogate-gradient BPTT with a sigmoid surrogate on binary spikes"
                    .into(),
            ),
            Method::Sur => {
                notes.push("SUR uses a rectangular pairing window; STDP is its exponential-window variant".into());
                notes.push(
                    "the output layer is teacher-forced with a Poisson train at the target rate during SUR training"
                        .into(),
                );
                notes.push("SReLU gates each neuron's input current before integration".into());
            }
            _ => {}
        }
        notes
    }
}
