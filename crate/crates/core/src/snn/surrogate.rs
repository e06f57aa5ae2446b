//! Backpropagation through time with a sigmoid surrogate for the spike
//! derivative. In [`SpikeMode::Relaxed`] the forward pass uses the same
//! sigmoid, so the returned gradient is the exact gradient of
//! [`relaxed_loss`].

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::sim::{simulate, SimRecord, SpikeMode};
use super::{SnnNetwork, SnnSettings, SpikeTrain};

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn output_rates(rec: &SimRecord, scale: f64) -> Vec<f64> {
    let out = rec.layers.last().expect("at least one LIF layer");
    (0..out.width)
        .map(|j| scale * out.spikes.iter().skip(j).step_by(out.width).sum::<f64>() / rec.steps as f64)
        .collect()
}

fn loss_of(rates: &[f64], target: &[f64]) -> f64 {
    rates.iter().zip(target).map(|(r, y)| 0.5 * (r - y) * (r - y)).sum()
}

fn check_target(net: &SnnNetwork, target: &[f64]) -> Result<()> {
    let width = *net.layer_sizes.last().expect("validated sizes");
    if target.len() != width {
        return Err(Error::shape(format!(
            "{} targets for {width} output neurons",
            target.len()
        )));
    }
    Ok(())
}

/// `½ Σ (scale · count / T − y)²` over output neurons with binary spikes.
pub fn rate_loss(net: &mut SnnNetwork, trains: &[SpikeTrain], target: &[f64], settings: &SnnSettings) -> Result<f64> {
    check_target(net, target)?;
    let rec = simulate(net, trains, settings.steps, SpikeMode::Spiking)?;
    Ok(loss_of(&output_rates(&rec, settings.decode_scale), target))
}

/// Same loss with spikes replaced by `σ(β(u − v_th))`.
pub fn relaxed_loss(
    net: &mut SnnNetwork,
    trains: &[SpikeTrain],
    target: &[f64],
    beta: f64,
    settings: &SnnSettings,
) -> Result<f64> {
    check_target(net, target)?;
    let rec = simulate(net, trains, settings.steps, SpikeMode::Relaxed { beta })?;
    Ok(loss_of(&output_rates(&rec, settings.decode_scale), target))
}

/// Loss and weight gradient for one window. Frozen entries get zero gradient.
pub fn surrogate_gradient(
    net: &mut SnnNetwork,
    trains: &[SpikeTrain],
    target: &[f64],
    mode: SpikeMode,
    settings: &SnnSettings,
) -> Result<(f64, Vec<Matrix>)> {
    check_target(net, target)?;
    let rec = simulate(net, trains, settings.steps, mode)?;
    let beta = match mode {
        SpikeMode::Spiking => settings.surrogate_beta,
        SpikeMode::Relaxed { beta } => beta,
    };
    let rates = output_rates(&rec, settings.decode_scale);
    let loss = loss_of(&rates, target);

    let steps = rec.steps;
    let n_layers = rec.layers.len();
    let lif = net.lif;
    let keep = 1.0 - 1.0 / lif.tau_m;
    let mut grads: Vec<Matrix> = net.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect();
    // dL/dv carried backward in time, per layer
    let mut carry: Vec<Vec<f64>> = rec.layers.iter().map(|r| vec![0.0; r.width]).collect();
    // direct dL/ds at the current step, per layer
    let mut direct: Vec<Vec<f64>> = rec.layers.iter().map(|r| vec![0.0; r.width]).collect();
    let out_grad: Vec<f64> = rates
        .iter()
        .zip(target)
        .map(|(r, y)| (r - y) * settings.decode_scale / steps as f64)
        .collect();
    let mut d_current = Vec::new();
    let mut upstream = Vec::new();

    for t in (0..steps).rev() {
        direct[n_layers - 1].copy_from_slice(&out_grad);
        for l in (0..n_layers).rev() {
            let layer = &rec.layers[l];
            let width = layer.width;
            d_current.clear();
            d_current.resize(width, 0.0);
            for j in 0..width {
                let k = t * width + j;
                if layer.refractory[k] {
                    continue;
                }
                let u = layer.u[k];
                let s = layer.spikes[k];
                let a = carry[l][j];
                let ds = direct[l][j] + a * (lif.v_reset - u);
                let sg = sigmoid(beta * (u - lif.v_th));
                let du = a * (1.0 - s) + ds * beta * sg * (1.0 - sg);
                carry[l][j] = du * keep;
                let gate_slope = match net.gate {
                    Some(g) => g.slope(layer.current[k]),
                    None => 1.0,
                };
                d_current[j] = du * lif.r / lif.tau_m * gate_slope;
            }
            let (pre, pre_width) = rec.presynaptic(l);
            let pre_t = &pre[t * pre_width..(t + 1) * pre_width];
            grads[l].add_outer(1.0, &d_current, pre_t);
            if l > 0 {
                upstream.resize(pre_width, 0.0);
                net.weights[l].matvec_t_into(&d_current, &mut upstream);
                direct[l - 1].copy_from_slice(&upstream);
            }
        }
    }
    for (g, f) in grads.iter_mut().zip(&net.frozen) {
        g.data
            .iter_mut()
            .zip(&f.data)
            .filter(|(_, &fr)| fr)
            .for_each(|(x, _)| *x = 0.0);
    }
    Ok((loss, grads))
}

/// One SGD step on the surrogate gradient, clamped to the weight bounds.
/// Returns the loss before the step.
pub fn surrogate_backprop_step(
    net: &mut SnnNetwork,
    trains: &[SpikeTrain],
    target: &[f64],
    settings: &SnnSettings,
) -> Result<f64> {
    let (loss, grads) = surrogate_gradient(net, trains, target, SpikeMode::Spiking, settings)?;
    for (l, g) in grads.iter().enumerate() {
        let frozen = &net.frozen[l];
        for ((w, &d), &fr) in net.weights[l].data.iter_mut().zip(&g.data).zip(&frozen.data) {
            if !fr {
                *w = (*w - settings.learning_rate * d).clamp(settings.w_min, settings.w_max);
            }
        }
    }
    Ok(loss)
}
