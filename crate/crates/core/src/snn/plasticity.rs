//! Pair-based plasticity. Both rules sum a per-pair update over every
//! (presynaptic spike, postsynaptic spike) pair in a window, then clamp.
//!
//! SUR uses a rectangular window: `+eta` when the presynaptic spike leads by
//! 1..=window steps, `-eta` when it lags by 1..=window steps. STDP weighs the
//! same pairs with exponentials.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::sim::{simulate, SpikeMode};
use super::{NeuronId, SnnNetwork, SnnSettings, SpikeTrain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum PlasticityRule {
    Sur {
        eta: f64,
        window: u32,
    },
    Stdp {
        a_plus: f64,
        a_minus: f64,
        tau_plus: f64,
        tau_minus: f64,
    },
}

impl PlasticityRule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PlasticityRule::Sur { eta, window } => eta > 0.0 && window >= 1,
            PlasticityRule::Stdp {
                a_plus,
                a_minus,
                tau_plus,
                tau_minus,
            } => a_plus > 0.0 && a_minus > 0.0 && tau_plus > 0.0 && tau_minus > 0.0,
        };
        if !ok {
            return Err(Error::config(format!("invalid plasticity rule {self:?}")));
        }
        Ok(())
    }
}

/// Weight change for one pair with `dt = t_post - t_pre`.
pub fn pair_update(rule: &PlasticityRule, dt: i64) -> f64 {
    match *rule {
        PlasticityRule::Sur { eta, window } => {
            let w = window as i64;
            if dt > 0 && dt <= w {
                eta
            } else if dt < 0 && -dt <= w {
                -eta
            } else {
                0.0
            }
        }
        PlasticityRule::Stdp {
            a_plus,
            a_minus,
            tau_plus,
            tau_minus,
        } => {
            if dt > 0 {
                a_plus * (-(dt as f64) / tau_plus).exp()
            } else if dt < 0 {
                -a_minus * ((dt as f64) / tau_minus).exp()
            } else {
                0.0
            }
        }
    }
}

/// Number of (pre, post) pairs where pre leads post by 1..=window steps and
/// where pre lags post by 1..=window steps. Both inputs must be sorted.
pub fn pair_count_sur(pre: &[u32], post: &[u32], window: u32) -> (u64, u64) {
    let (mut lead, mut lag) = (0u64, 0u64);
    for &tp in post {
        let tp = tp as i64;
        let w = window as i64;
        let count = |lo: i64, hi: i64| -> u64 {
            // pre spikes in [lo, hi]
            let a = pre.partition_point(|&s| (s as i64) < lo);
            let b = pre.partition_point(|&s| (s as i64) <= hi);
            (b - a) as u64
        };
        lead += count(tp - w, tp - 1);
        lag += count(tp + 1, tp + w);
    }
    (lead, lag)
}

fn synapse_delta(rule: &PlasticityRule, pre: &[u32], post: &[u32]) -> f64 {
    match *rule {
        PlasticityRule::Sur { eta, window } => {
            let (lead, lag) = pair_count_sur(pre, post, window);
            eta * (lead as f64 - lag as f64)
        }
        PlasticityRule::Stdp { .. } => {
            let mut total = 0.0;
            for &tq in post {
                for &tp in pre {
                    total += pair_update(rule, tq as i64 - tp as i64);
                }
            }
            total
        }
    }
}

/// Summed per-pair updates, shaped `post.len() x pre.len()`.
pub fn plasticity_delta(rule: &PlasticityRule, pre: &[SpikeTrain], post: &[SpikeTrain]) -> Matrix {
    let mut delta = Matrix::zeros(post.len(), pre.len());
    for (j, q) in post.iter().enumerate() {
        if q.steps.is_empty() {
            continue;
        }
        for (i, p) in pre.iter().enumerate() {
            *delta.get_mut(j, i) = synapse_delta(rule, &p.steps, &q.steps);
        }
    }
    delta
}

fn apply(
    weights: &Matrix,
    pre: &[SpikeTrain],
    post: &[SpikeTrain],
    rule: &PlasticityRule,
    bounds: (f64, f64),
) -> Result<Matrix> {
    rule.validate()?;
    if weights.rows != post.len() || weights.cols != pre.len() {
        return Err(Error::shape(format!(
            "{}x{} weights for {} post and {} pre trains",
            weights.rows,
            weights.cols,
            post.len(),
            pre.len()
        )));
    }
    let delta = plasticity_delta(rule, pre, post);
    let mut out = weights.clone();
    out.data
        .iter_mut()
        .zip(&delta.data)
        .for_each(|(w, d)| *w = (*w + d).clamp(bounds.0, bounds.1));
    Ok(out)
}

pub fn sur_update(
    weights: &Matrix,
    pre: &[SpikeTrain],
    post: &[SpikeTrain],
    rule: &PlasticityRule,
    bounds: (f64, f64),
) -> Result<Matrix> {
    if !matches!(rule, PlasticityRule::Sur { .. }) {
        return Err(Error::config("sur_update needs a SUR rule"));
    }
    apply(weights, pre, post, rule, bounds)
}

pub fn stdp_update(
    weights: &Matrix,
    pre: &[SpikeTrain],
    post: &[SpikeTrain],
    rule: &PlasticityRule,
    bounds: (f64, f64),
) -> Result<Matrix> {
    if !matches!(rule, PlasticityRule::Stdp { .. }) {
        return Err(Error::config("stdp_update needs an STDP rule"));
    }
    apply(weights, pre, post, rule, bounds)
}

/// Simulate one window and apply `rule` to every layer once. When `teacher`
/// is given it replaces the output layer's own spikes as the postsynaptic
/// side of the last weight layer. Returns the output layer's own spike count.
pub fn train_window(
    net: &mut SnnNetwork,
    input: &[SpikeTrain],
    teacher: Option<&SpikeTrain>,
    rule: &PlasticityRule,
    settings: &SnnSettings,
) -> Result<usize> {
    rule.validate()?;
    let rec = simulate(net, input, settings.steps, SpikeMode::Spiking)?;
    let n_layers = rec.layers.len();
    let trains: Vec<Vec<SpikeTrain>> = rec
        .layers
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            (0..layer.width)
                .map(|j| layer.train(NeuronId { layer: l + 1, index: j }))
                .collect()
        })
        .collect();
    for l in 0..n_layers {
        let pre: &[SpikeTrain] = if l == 0 { input } else { &trains[l - 1] };
        let delta = match teacher {
            Some(t) if l + 1 == n_layers => plasticity_delta(rule, pre, std::slice::from_ref(t)),
            _ => plasticity_delta(rule, pre, &trains[l]),
        };
        net.apply_delta(l, &delta, settings.w_min, settings.w_max)?;
    }
    Ok(trains[n_layers - 1].iter().map(SpikeTrain::count).sum())
}
