use crate::error::{Error, Result};

use super::{NeuronId, SnnNetwork, SpikeTrain, HISTORY_LEN};

/// How the threshold nonlinearity behaves on the forward path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeMode {
    /// Binary spikes with reset and refractory period.
    Spiking,
    /// Spikes replaced by `σ(β(u − v_th))`, soft reset, no refractory period.
    /// Only used to check surrogate gradients against finite differences.
    Relaxed { beta: f64 },
}

/// Per-step state of one LIF layer, indexed `t * width + neuron`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub width: usize,
    /// Weighted presynaptic input before the optional gate.
    pub current: Vec<f64>,
    /// Membrane potential after integration, before reset.
    pub u: Vec<f64>,
    pub spikes: Vec<f64>,
    /// Membrane potential at the end of the step.
    pub v: Vec<f64>,
    pub refractory: Vec<bool>,
}

impl LayerRecord {
    fn new(width: usize, steps: usize) -> Self {
        let n = width * steps;
        Self {
            width,
            current: vec![0.0; n],
            u: vec![0.0; n],
            spikes: vec![0.0; n],
            v: vec![0.0; n],
            refractory: vec![false; n],
        }
    }

    pub fn spike_count(&self, neuron: usize) -> usize {
        self.spikes
            .iter()
            .skip(neuron)
            .step_by(self.width)
            .filter(|&&s| s != 0.0)
            .count()
    }

    pub fn train(&self, id: NeuronId) -> SpikeTrain {
        let steps = self
            .spikes
            .iter()
            .skip(id.index)
            .step_by(self.width)
            .enumerate()
            .filter(|(_, &s)| s != 0.0)
            .map(|(t, _)| t as u32)
            .collect();
        SpikeTrain::new(id, steps)
    }
}

/// Full forward record: the input raster plus one [`LayerRecord`] per LIF layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub steps: usize,
    /// Input spikes indexed `t * width + input`.
    pub input: Vec<f64>,
    pub input_width: usize,
    pub layers: Vec<LayerRecord>,
}

impl SimRecord {
    /// Spike raster feeding LIF layer `l` (0 = first LIF layer).
    pub fn presynaptic(&self, l: usize) -> (&[f64], usize) {
        if l == 0 {
            (&self.input, self.input_width)
        } else {
            (&self.layers[l - 1].spikes, self.layers[l - 1].width)
        }
    }
}

fn rasterize(trains: &[SpikeTrain], width: usize, steps: usize) -> Result<Vec<f64>> {
    if trains.len() != width {
        return Err(Error::shape(format!(
            "{} input trains for {width} inputs",
            trains.len()
        )));
    }
    let mut raster = vec![0.0; width * steps];
    for (i, train) in trains.iter().enumerate() {
        for &s in &train.steps {
            let s = s as usize;
            if s >= steps {
                return Err(Error::domain(format!(
                    "spike at step {s} outside a {steps}-step window"
                )));
            }
            raster[s * width + i] = 1.0;
        }
    }
    Ok(raster)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run one window from rest. The network's membrane, refractory and history
/// state are left as they are at the end of the window.
pub fn simulate(net: &mut SnnNetwork, input_trains: &[SpikeTrain], steps: usize, mode: SpikeMode) -> Result<SimRecord> {
    let input_width = net.layer_sizes[0];
    let input = rasterize(input_trains, input_width, steps)?;
    net.reset_state();
    let lif = net.lif;
    let leak = 1.0 / lif.tau_m;
    let mut layers: Vec<LayerRecord> = net.layer_sizes[1..]
        .iter()
        .map(|&n| LayerRecord::new(n, steps))
        .collect();
    let mut current = Vec::new();

    for t in 0..steps {
        for l in 0..layers.len() {
            let width = layers[l].width;
            let pre: &[f64] = if l == 0 {
                &input[t * input_width..(t + 1) * input_width]
            } else {
                let w = layers[l - 1].width;
                &layers[l - 1].spikes[t * w..(t + 1) * w]
            };
            current.resize(width, 0.0);
            net.weights[l].matvec_into(pre, &mut current);
            let rec = &mut layers[l];
            for j in 0..width {
                let k = t * width + j;
                let i_raw = current[j];
                rec.current[k] = i_raw;
                let v_prev = net.v[l][j];
                if net.refractory[l][j] > 0 {
                    net.refractory[l][j] -= 1;
                    rec.refractory[k] = true;
                    rec.u[k] = v_prev;
                    rec.v[k] = v_prev;
                    continue;
                }
                let drive = match net.gate {
                    Some(g) => g.apply(i_raw),
                    None => i_raw,
                };
                let u = v_prev + leak * (-(v_prev - lif.v_rest) + lif.r * drive);
                if !u.is_finite() {
                    return Err(Error::Numeric {
                        step: t,
                        detail: format!("membrane of neuron {j} in layer {} diverged", l + 1),
                    });
                }
                let s = match mode {
                    SpikeMode::Spiking => {
                        if u >= lif.v_th {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    SpikeMode::Relaxed { beta } => sigmoid(beta * (u - lif.v_th)),
                };
                let v_next = u * (1.0 - s) + lif.v_reset * s;
                if mode == SpikeMode::Spiking && s == 1.0 {
                    net.refractory[l][j] = lif.refractory;
                    let h = &mut net.history[l][j];
                    if h.len() == HISTORY_LEN {
                        h.pop_front();
                    }
                    h.push_back(t as u32);
                }
                net.v[l][j] = v_next;
                rec.u[k] = u;
                rec.spikes[k] = s;
                rec.v[k] = v_next;
            }
        }
    }
    Ok(SimRecord {
        steps,
        input,
        input_width,
        layers,
    })
}

/// Spike trains of every LIF neuron plus membrane traces (`traces[l][j][t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub trains: Vec<Vec<SpikeTrain>>,
    pub membrane: Vec<Vec<Vec<f64>>>,
}

impl SimOutput {
    pub fn output_train(&self) -> &SpikeTrain {
        &self.trains.last().expect("at least one LIF layer")[0]
    }
}

pub fn lif_simulate(net: &mut SnnNetwork, input_trains: &[SpikeTrain], steps: usize) -> Result<SimOutput> {
    let rec = simulate(net, input_trains, steps, SpikeMode::Spiking)?;
    let trains = rec
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            (0..layer.width)
                .map(|j| layer.train(NeuronId { layer: l + 1, index: j }))
                .collect()
        })
        .collect();
    let membrane = rec
        .layers
        .iter()
        .map(|layer| {
            (0..layer.width)
                .map(|j| layer.v.iter().skip(j).step_by(layer.width).copied().collect())
                .collect()
        })
        .collect();
    Ok(SimOutput { trains, membrane })
}
