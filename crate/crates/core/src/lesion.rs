//! Dead-neuron injection, training telemetry, and compensation analysis.
//!
//! Hidden layers are addressed by their index among hidden layers: hidden
//! layer `h` receives `weights[h]` and feeds `weights[h + 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{l2_norm, Matrix};
use crate::nn::{self, Gradient, Network, TrainConfig};

pub const DEFAULT_VANISHING_THRESHOLD: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LesionMode {
    ZeroIncoming,
    ZeroOutgoing,
    ZeroBoth,
}

impl LesionMode {
    fn incoming(self) -> bool {
        matches!(self, LesionMode::ZeroIncoming | LesionMode::ZeroBoth)
    }

    fn outgoing(self) -> bool {
        matches!(self, LesionMode::ZeroOutgoing | LesionMode::ZeroBoth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionSpec {
    /// Hidden-layer index (0 = first hidden layer).
    pub layer: usize,
    pub neuron: usize,
    pub mode: LesionMode,
    /// Training step at which the lesion fires.
    pub death_step: u64,
    pub freeze: bool,
}

impl LesionSpec {
    pub fn validate_for(&self, layer_sizes: &[usize]) -> Result<()> {
        let hidden = layer_sizes.len().saturating_sub(2);
        if self.layer >= hidden {
            return Err(Error::config(format!(
                "lesion layer {} out of range: network has {hidden} hidden layers",
                self.layer
            )));
        }
        let width = layer_sizes[self.layer + 1];
        if self.neuron >= width {
            return Err(Error::config(format!(
                "lesion neuron {} out of range: hidden layer {} has {width} neurons",
                self.neuron, self.layer
            )));
        }
        Ok(())
    }
}

/// Zero (and optionally freeze) the lesioned neuron's weights in a stack of
/// weight matrices. Shared by the dense and spiking engines.
pub(crate) fn zero_weights(
    weights: &mut [Matrix],
    frozen: &mut [Matrix<bool>],
    lesioned: &mut Vec<(usize, usize)>,
    spec: &LesionSpec,
) -> Result<()> {
    if lesioned.contains(&(spec.layer, spec.neuron)) {
        return Err(Error::State(format!(
            "neuron {} in hidden layer {} is already lesioned",
            spec.neuron, spec.layer
        )));
    }
    let (h, j) = (spec.layer, spec.neuron);
    if spec.mode.incoming() {
        weights[h].row_mut(j).fill(0.0);
        if spec.freeze {
            frozen[h].row_mut(j).fill(true);
        }
    }
    if spec.mode.outgoing() {
        let next = &mut weights[h + 1];
        for r in 0..next.rows {
            *next.get_mut(r, j) = 0.0;
            if spec.freeze {
                *frozen[h + 1].get_mut(r, j) = true;
            }
        }
    }
    lesioned.push((h, j));
    Ok(())
}

/// Kill one hidden neuron. `ZeroIncoming` also zeroes the neuron's bias.
pub fn inject_lesion(net: &mut Network, spec: &LesionSpec) -> Result<()> {
    spec.validate_for(&net.layer_sizes)?;
    zero_weights(&mut net.weights, &mut net.frozen_weights, &mut net.lesioned, spec)?;
    if spec.mode.incoming() {
        net.biases[spec.layer][spec.neuron] = 0.0;
        if spec.freeze {
            net.frozen_biases[spec.layer][spec.neuron] = true;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub step: u64,
    /// L2 norm of the mean weight gradient per weight layer.
    pub layer_grad_norms: Vec<f64>,
    pub vanishing: Vec<bool>,
    /// Mean |activation| per hidden neuron over the probe batch.
    pub mean_abs_activation: Vec<Vec<f64>>,
    /// Hidden neurons whose activation was exactly zero on every probe input.
    pub dead: Vec<Vec<bool>>,
    pub loss: f64,
}

impl TelemetrySnapshot {
    pub fn dead_count(&self) -> usize {
        self.dead.iter().flatten().filter(|&&d| d).count()
    }
}

/// Measure gradients and activations on a probe batch without touching the
/// network.
pub fn probe_telemetry(
    net: &Network,
    probe_inputs: &[Vec<f64>],
    probe_targets: &[f64],
    step: u64,
    vanishing_threshold: f64,
) -> Result<TelemetrySnapshot> {
    if probe_inputs.is_empty() {
        return Err(Error::config("telemetry probe batch is empty"));
    }
    if probe_inputs.len() != probe_targets.len() {
        return Err(Error::config("probe inputs and targets differ in length"));
    }
    let hidden = net.num_hidden();
    let n = probe_inputs.len() as f64;
    let mut grad = Gradient::zeros_like(net);
    let mut abs_sum: Vec<Vec<f64>> = (0..hidden).map(|h| vec![0.0; net.layer_sizes[h + 1]]).collect();
    let mut zero_count: Vec<Vec<usize>> = abs_sum.iter().map(|v| vec![0; v.len()]).collect();
    let mut loss = 0.0;
    let cfg = TrainConfig {
        l2_lambda: 0.0,
        dropout_keep: 1.0,
        ..TrainConfig::default()
    };
    for (x, &y) in probe_inputs.iter().zip(probe_targets) {
        let trace = nn::forward(net, x)?;
        loss += nn::mse_loss(y, trace.prediction());
        let g = nn::backward(net, &trace, &[y], &cfg)?;
        grad.add_scaled(&g, 1.0 / n);
        for h in 0..hidden {
            for (k, &a) in trace.post[h].iter().enumerate() {
                abs_sum[h][k] += a.abs();
                if a == 0.0 {
                    zero_count[h][k] += 1;
                }
            }
        }
    }
    let norms = grad.weight_norms();
    Ok(TelemetrySnapshot {
        step,
        vanishing: norms.iter().map(|&g| g < vanishing_threshold).collect(),
        layer_grad_norms: norms,
        mean_abs_activation: abs_sum
            .into_iter()
            .map(|v| v.into_iter().map(|s| s / n).collect())
            .collect(),
        dead: zero_count
            .into_iter()
            .map(|v| v.into_iter().map(|c| c == probe_inputs.len()).collect())
            .collect(),
        loss: loss / n,
    })
}

/// Mean over the probe batch of `|a_dead| * Σ|outgoing weights|`: how much
/// signal the lesioned neuron still pushes downstream.
pub fn residual_contribution(net: &Network, spec: &LesionSpec, probe_inputs: &[Vec<f64>]) -> Result<f64> {
    spec.validate_for(&net.layer_sizes)?;
    if probe_inputs.is_empty() {
        return Err(Error::config("residual probe batch is empty"));
    }
    let out_l1: f64 = net.weights[spec.layer + 1]
        .column(spec.neuron)
        .iter()
        .map(|w| w.abs())
        .sum();
    let mut total = 0.0;
    for x in probe_inputs {
        let t = nn::forward(net, x)?;
        total += t.post[spec.layer][spec.neuron].abs() * out_l1;
    }
    Ok(total / probe_inputs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorShare {
    pub index: usize,
    pub distance: usize,
    pub delta: f64,
    /// `None` when no survivor changed at all.
    pub share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceShare {
    pub distance: usize,
    pub share: f64,
}

/// Compensation under one reading of "involvement" (outgoing or incoming
/// weight change).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationView {
    pub survivors: Vec<SurvivorShare>,
    pub total_delta: f64,
    /// Shares summed per index distance, ascending by distance.
    pub by_distance: Vec<DistanceShare>,
    /// Share of the survivors at index distance 1.
    pub nearest_share: Option<f64>,
    pub no_adaptation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensationReport {
    pub layer: usize,
    pub neuron: usize,
    pub outgoing: CompensationView,
    pub incoming: CompensationView,
}

impl CompensationReport {
    /// One row per survivor of the outgoing view: `layer,index,distance,delta,share`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,index,distance,delta,share\n");
        for s in &self.outgoing.survivors {
            let share = s.share.map_or_else(String::new, |v| format!("{v:?}"));
            out.push_str(&format!(
                "{},{},{},{:?},{}\n",
                self.layer, s.index, s.distance, s.delta, share
            ));
        }
        out
    }
}

fn build_view(dead: usize, deltas: Vec<(usize, f64)>) -> CompensationView {
    let total: f64 = deltas.iter().map(|(_, d)| d).sum();
    let no_adaptation = !(total > 0.0);
    let survivors: Vec<SurvivorShare> = deltas
        .into_iter()
        .map(|(index, delta)| SurvivorShare {
            index,
            distance: index.abs_diff(dead),
            delta,
            share: (!no_adaptation).then(|| delta / total),
        })
        .collect();
    let mut by_distance: Vec<DistanceShare> = Vec::new();
    if !no_adaptation {
        let max_d = survivors.iter().map(|s| s.distance).max().unwrap_or(0);
        for d in 1..=max_d {
            let share: f64 = survivors
                .iter()
                .filter(|s| s.distance == d)
                .filter_map(|s| s.share)
                .sum();
            if survivors.iter().any(|s| s.distance == d) {
                by_distance.push(DistanceShare { distance: d, share });
            }
        }
    }
    let nearest_share = (!no_adaptation).then(|| by_distance.iter().find(|d| d.distance == 1).map_or(0.0, |d| d.share));
    CompensationView {
        survivors,
        total_delta: total,
        by_distance,
        nearest_share,
        no_adaptation,
    }
}

/// Compare the lesioned layer's weights at death time with the final weights.
/// Works on any weight stack laid out like [`Network::weights`].
pub fn compensation_from_weights(
    at_death: &[Matrix],
    final_weights: &[Matrix],
    layer: usize,
    neuron: usize,
) -> Result<CompensationReport> {
    if at_death.len() != final_weights.len() || at_death.iter().zip(final_weights).any(|(a, b)| !a.same_shape(b)) {
        return Err(Error::shape("snapshots do not share a topology"));
    }
    if layer + 1 >= at_death.len() || neuron >= at_death[layer].rows {
        return Err(Error::config("lesion target outside the snapshot topology"));
    }
    let width = at_death[layer].rows;
    let survivors = (0..width).filter(|&k| k != neuron);

    let (out_before, out_after) = (&at_death[layer + 1], &final_weights[layer + 1]);
    let outgoing = survivors
        .clone()
        .map(|k| {
            let d = (0..out_before.rows)
                .map(|r| (out_after.get(r, k) - out_before.get(r, k)).abs())
                .sum();
            (k, d)
        })
        .collect();

    let (in_before, in_after) = (&at_death[layer], &final_weights[layer]);
    let incoming = survivors
        .map(|k| {
            let d = in_after
                .row(k)
                .iter()
                .zip(in_before.row(k))
                .map(|(a, b)| (a - b).abs())
                .sum();
            (k, d)
        })
        .collect();

    Ok(CompensationReport {
        layer,
        neuron,
        outgoing: build_view(neuron, outgoing),
        incoming: build_view(neuron, incoming),
    })
}

pub fn compensation_report(
    snapshot_at_death: &Network,
    final_net: &Network,
    spec: &LesionSpec,
) -> Result<CompensationReport> {
    if snapshot_at_death.layer_sizes != final_net.layer_sizes {
        return Err(Error::shape("snapshots do not share a topology"));
    }
    spec.validate_for(&final_net.layer_sizes)?;
    compensation_from_weights(&snapshot_at_death.weights, &final_net.weights, spec.layer, spec.neuron)
}

/// Gradient norm of one neuron's incoming weight row.
pub fn incoming_grad_norm(grad: &Gradient, spec: &LesionSpec) -> f64 {
    l2_norm(grad.weights[spec.layer].row(spec.neuron))
}
