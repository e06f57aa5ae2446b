//! Clock-driven leaky-integrate-and-fire network.
//!
//! Layer 0 is a bank of spike sources fed by [`encode_poisson`]; layers
//! `1..` are LIF neurons connected densely to the layer below with zero
//! synaptic delay. Spikes are binary on the forward path in every mode
//! except the relaxed mode used to check surrogate gradients.

mod encode;
mod plasticity;
mod sim;
mod surrogate;

pub use encode::encode_poisson;
pub use plasticity::{
    pair_count_sur, pair_update, plasticity_delta, stdp_update, sur_update, train_window, PlasticityRule,
};
pub use sim::{lif_simulate, simulate, LayerRecord, SimOutput, SimRecord, SpikeMode};
pub use surrogate::{rate_loss, relaxed_loss, surrogate_backprop_step, surrogate_gradient};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::lesion::{self, LesionSpec};
use crate::linalg::Matrix;
use crate::rng::{self, Purpose};

/// Spike steps kept per neuron in [`SnnNetwork::history`].
pub const HISTORY_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifParams {
    /// Membrane time constant in steps.
    pub tau_m: f64,
    pub v_rest: f64,
    pub v_reset: f64,
    pub v_th: f64,
    /// Input resistance scale.
    pub r: f64,
    /// Steps a neuron ignores input after spiking.
    pub refractory: u32,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_m: 10.0,
            v_rest: 0.0,
            v_reset: 0.0,
            v_th: 1.0,
            r: 10.0,
            refractory: 2,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) || !(self.v_th > self.v_reset) {
            return Err(Error::config(format!("invalid LIF parameters {self:?}")));
        }
        Ok(())
    }
}

/// Every numeric default of the spiking engine in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnnSettings {
    pub lif: LifParams,
    /// Simulation window T in steps.
    pub steps: usize,
    /// Expected input spikes per window at x = 1.
    pub max_rate: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Steepness of the sigmoid surrogate.
    pub surrogate_beta: f64,
    /// Multiplier turning spike counts per step into a prediction.
    pub decode_scale: f64,
    pub learning_rate: f64,
    pub sur: PlasticityRule,
    pub stdp: PlasticityRule,
    /// Initial weights are uniform in `[init_low, init_high] / sqrt(fan_in)`.
    pub init_low: f64,
    pub init_high: f64,
}

impl Default for SnnSettings {
    fn default() -> Self {
        Self {
            lif: LifParams::default(),
            steps: 100,
            max_rate: 30.0,
            w_min: -1.0,
            w_max: 1.0,
            surrogate_beta: 4.0,
            decode_scale: 3.0,
            learning_rate: 0.01,
            sur: PlasticityRule::Sur { eta: 0.005, window: 5 },
            stdp: PlasticityRule::Stdp {
                a_plus: 0.01,
                a_minus: 0.012,
                tau_plus: 20.0,
                tau_minus: 20.0,
            },
            init_low: -1.0,
            init_high: 2.0,
        }
    }
}

impl SnnSettings {
    pub fn validate(&self) -> Result<()> {
        self.lif.validate()?;
        self.sur.validate()?;
        self.stdp.validate()?;
        if self.steps == 0 {
            return Err(Error::config("simulation window must be at least one step"));
        }
        if !(self.max_rate >= 0.0) || !(self.w_min < self.w_max) || !(self.decode_scale > 0.0) {
            return Err(Error::config("invalid spiking settings"));
        }
        if !(self.learning_rate > 0.0) || !(self.surrogate_beta >= 0.0) || !(self.init_low <= self.init_high) {
            return Err(Error::config("invalid spiking training settings"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub neuron: NeuronId,
    /// Strictly increasing spike steps, each below the window length.
    pub steps: Vec<u32>,
}

impl SpikeTrain {
    pub fn new(neuron: NeuronId, steps: Vec<u32>) -> Self {
        debug_assert!(steps.windows(2).all(|w| w[0] < w[1]));
        Self { neuron, steps }
    }

    pub fn count(&self) -> usize {
        self.steps.len()
    }
}

/// `scale * spikes / T`.
pub fn rate_decode(train: &SpikeTrain, steps: usize, scale: f64) -> f64 {
    if steps == 0 {
        return 0.0;
    }
    scale * train.count() as f64 / steps as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnNetwork {
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1` (rows = postsynaptic).
    pub weights: Vec<Matrix>,
    pub frozen: Vec<Matrix<bool>>,
    pub lif: LifParams,
    /// Optional SReLU applied to each neuron's input current.
    pub gate: Option<ActivationKind>,
    /// Membrane potential per LIF layer (index 0 = network layer 1).
    pub v: Vec<Vec<f64>>,
    pub refractory: Vec<Vec<u32>>,
    /// Most recent spike steps per LIF neuron, oldest first.
    pub history: Vec<Vec<VecDeque<u32>>>,
    pub lesioned: Vec<(usize, usize)>,
}

impl SnnNetwork {
    pub fn new(layer_sizes: &[usize], settings: &SnnSettings, gate: Option<ActivationKind>, seed: u64) -> Result<Self> {
        settings.validate()?;
        if layer_sizes.len() < 2 || layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::config("a spiking network needs at least two nonempty layers"));
        }
        if let Some(g) = gate {
            if !matches!(g, ActivationKind::SRelu { .. }) {
                return Err(Error::config(format!("current gate must be srelu, got {g}")));
            }
            g.validate()?;
        }
        let mut weights = Vec::new();
        for (l, pair) in layer_sizes.windows(2).enumerate() {
            let scale = 1.0 / (pair[0] as f64).sqrt();
            let mut rng = rng::stream(seed, Purpose::Init, l as u64, 0);
            let data = (0..pair[0] * pair[1])
                .map(|_| {
                    let w = scale * rng.uniform(settings.init_low, settings.init_high);
                    w.clamp(settings.w_min, settings.w_max)
                })
                .collect();
            weights.push(Matrix::from_vec(pair[1], pair[0], data)?);
        }
        let mut net = SnnNetwork {
            layer_sizes: layer_sizes.to_vec(),
            frozen: weights.iter().map(|w| Matrix::filled(w.rows, w.cols, false)).collect(),
            weights,
            lif: settings.lif,
            gate,
            v: Vec::new(),
            refractory: Vec::new(),
            history: Vec::new(),
            lesioned: Vec::new(),
        };
        net.reset_state();
        Ok(net)
    }

    /// Membrane potentials to rest, refractory counters and histories cleared.
    pub fn reset_state(&mut self) {
        let lif_layers = &self.layer_sizes[1..];
        self.v = lif_layers.iter().map(|&n| vec![self.lif.v_rest; n]).collect();
        self.refractory = lif_layers.iter().map(|&n| vec![0; n]).collect();
        self.history = lif_layers
            .iter()
            .map(|&n| vec![VecDeque::with_capacity(HISTORY_LEN); n])
            .collect();
    }

    pub fn num_lif_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn inject_lesion(&mut self, spec: &LesionSpec) -> Result<()> {
        spec.validate_for(&self.layer_sizes)?;
        lesion::zero_weights(&mut self.weights, &mut self.frozen, &mut self.lesioned, spec)
    }

    /// Add `delta` to every unfrozen weight of layer `l`, then clamp.
    pub fn apply_delta(&mut self, l: usize, delta: &Matrix, w_min: f64, w_max: f64) -> Result<()> {
        let w = &mut self.weights[l];
        if !w.same_shape(delta) {
            return Err(Error::shape("weight delta does not match layer"));
        }
        for ((w, d), &f) in w.data.iter_mut().zip(&delta.data).zip(&self.frozen[l].data) {
            if !f {
                *w = (*w + d).clamp(w_min, w_max);
            }
        }
        Ok(())
    }

    pub fn param_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for w in &self.weights {
            for x in &w.data {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        for f in &self.frozen {
            for &b in &f.data {
                h.update([b as u8]);
            }
        }
        hex::encode(h.finalize())
    }

    /// Global neuron id: layers flattened in order, input layer first.
    pub fn global_id(&self, id: NeuronId) -> usize {
        self.layer_sizes[..id.layer].iter().sum::<usize>() + id.index
    }
}

/// Mean firing rate (spikes per step) of every LIF neuron over a batch of
/// encoded inputs.
pub fn firing_rates(net: &SnnNetwork, inputs: &[Vec<SpikeTrain>], steps: usize) -> Result<Vec<Vec<f64>>> {
    let mut sums: Vec<Vec<f64>> = net.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
    if inputs.is_empty() {
        return Ok(sums);
    }
    let mut scratch = net.clone();
    for trains in inputs {
        let rec = simulate(&mut scratch, trains, steps, SpikeMode::Spiking)?;
        for (l, layer) in rec.layers.iter().enumerate() {
            for j in 0..layer.width {
                sums[l][j] += layer.spike_count(j) as f64;
            }
        }
    }
    let denom = (inputs.len() * steps) as f64;
    sums.iter_mut().flatten().for_each(|s| *s /= denom);
    Ok(sums)
}

/// CSV raster with header `neuron_id,step`, one row per spike.
pub fn raster_csv(net: &SnnNetwork, trains: &[SpikeTrain]) -> String {
    let mut rows: Vec<(usize, u32)> = trains
        .iter()
        .flat_map(|t| {
            let id = net.global_id(t.neuron);
            t.steps.iter().map(move |&s| (id, s))
        })
        .collect();
    rows.sort_unstable();
    let mut out = String::from("neuron_id,step\n");
    for (id, s) in rows {
        out.push_str(&format!("{id},{s}\n"));
    }
    out
}
