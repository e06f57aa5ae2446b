use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

use super::{NeuronId, SpikeTrain};

/// Bernoulli rate coding: input `i` fires on each step with probability
/// `x[i] * max_rate / steps` (capped at 1). Input `i` draws from its own
/// `(seed, Poisson, i)` stream.
pub fn encode_poisson(x: &[f64], max_rate: f64, steps: usize, seed: u64) -> Result<Vec<SpikeTrain>> {
    if steps == 0 {
        return Err(Error::config("simulation window must be at least one step"));
    }
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("rate-coded input {bad} outside [0, 1]")));
    }
    Ok(x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let p = (xi * max_rate / steps as f64).min(1.0);
            let mut rng = rng::stream(seed, Purpose::Poisson, i as u64, 0);
            let fired = (0..steps as u32).filter(|_| rng.bernoulli(p)).collect();
            SpikeTrain::new(NeuronId { layer: 0, index: i }, fired)
        })
        .collect())
}
