//! Plain SGD and Adam parameter updates that honor a network's frozen mask.
//!
//! Optimizer settings serialize as `sgd:lr=0.05` or
//! `adam:alpha=0.001,beta1=0.9,beta2=0.999,eps=1e-8`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Gradient, Network};

pub const DEFAULT_SGD_LR: f64 = 0.05;
pub const DEFAULT_ADAM_ALPHA: f64 = 0.001;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdState {
    pub learning_rate: f64,
}

impl SgdState {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be > 0, got {learning_rate}")));
        }
        Ok(Self { learning_rate })
    }
}

/// Adam hyperparameters without the per-parameter moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ADAM_ALPHA,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.alpha > 0.0
            && self.epsilon > 0.0
            && self.alpha.is_finite()
            && self.epsilon.is_finite();
        if !ok {
            return Err(Error::config(format!("invalid adam parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradient,
    pub v: Gradient,
    /// Number of updates applied so far; incremented before each update.
    pub t: u64,
    pub params: AdamParams,
}

impl AdamState {
    pub fn new(net: &Network, params: AdamParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            m: Gradient::zeros_like(net),
            v: Gradient::zeros_like(net),
            t: 0,
            params,
        })
    }
}

pub fn sgd_step(net: &mut Network, grad: &Gradient, state: &SgdState) -> Result<()> {
    if !grad.matches(net) {
        return Err(Error::shape("gradient does not match network"));
    }
    let lr = state.learning_rate;
    for l in 0..net.weights.len() {
        sgd_slice(
            &mut net.weights[l].data,
            &grad.weights[l].data,
            &net.frozen_weights[l].data,
            lr,
        );
        sgd_slice(&mut net.biases[l], &grad.biases[l], &net.frozen_biases[l], lr);
    }
    Ok(())
}

fn sgd_slice(w: &mut [f64], g: &[f64], frozen: &[bool], lr: f64) {
    for ((w, &g), &f) in w.iter_mut().zip(g).zip(frozen) {
        if !f {
            *w -= lr * g;
        }
    }
}

/// `(m / (1 - β1^t), v / (1 - β2^t))`.
pub fn adam_bias_correction(m: f64, v: f64, t: u64, beta1: f64, beta2: f64) -> Result<(f64, f64)> {
    if t == 0 {
        return Err(Error::domain("bias correction is undefined at t = 0"));
    }
    let t = i32::try_from(t).unwrap_or(i32::MAX);
    Ok((m / (1.0 - beta1.powi(t)), v / (1.0 - beta2.powi(t))))
}

/// One Adam update. Frozen positions see a zero gradient and keep their
/// moments at zero, so a lesioned parameter carries no momentum.
pub fn adam_step(net: &mut Network, grad: &Gradient, state: &mut AdamState) -> Result<()> {
    if !grad.matches(net) || !state.m.matches(net) || !state.v.matches(net) {
        return Err(Error::shape("gradient or optimizer state does not match network"));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let p = state.params;
    let corr = Correction {
        c1: 1.0 / (1.0 - p.beta1.powi(t)),
        c2: 1.0 / (1.0 - p.beta2.powi(t)),
        params: p,
    };
    for l in 0..net.weights.len() {
        corr.apply(
            &mut net.weights[l].data,
            &grad.weights[l].data,
            &net.frozen_weights[l].data,
            &mut state.m.weights[l].data,
            &mut state.v.weights[l].data,
        );
        corr.apply(
            &mut net.biases[l],
            &grad.biases[l],
            &net.frozen_biases[l],
            &mut state.m.biases[l],
            &mut state.v.biases[l],
        );
    }
    Ok(())
}

struct Correction {
    c1: f64,
    c2: f64,
    params: AdamParams,
}

impl Correction {
    #[inline]
    fn apply(&self, w: &mut [f64], g: &[f64], frozen: &[bool], m: &mut [f64], v: &mut [f64]) {
        let AdamParams {
            alpha,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        for i in 0..w.len() {
            if frozen[i] {
                m[i] = 0.0;
                v[i] = 0.0;
                continue;
            }
            let g = g[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] * self.c1;
            let v_hat = v[i] * self.c2;
            w[i] -= alpha * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

/// Optimizer choice as carried in scenario configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OptimizerConfig {
    Sgd { lr: f64 },
    Adam(AdamParams),
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            OptimizerConfig::Sgd { lr } => SgdState::new(*lr).map(|_| ()),
            OptimizerConfig::Adam(p) => p.validate(),
        }
    }

    pub fn build(&self, net: &Network) -> Result<Optimizer> {
        Ok(match self {
            OptimizerConfig::Sgd { lr } => Optimizer::Sgd(SgdState::new(*lr)?),
            OptimizerConfig::Adam(p) => Optimizer::Adam(AdamState::new(net, *p)?),
        })
    }
}

/// A live optimizer bound to one network.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd(SgdState),
    Adam(AdamState),
}

impl Optimizer {
    pub fn step(&mut self, net: &mut Network, grad: &Gradient) -> Result<()> {
        match self {
            Optimizer::Sgd(s) => sgd_step(net, grad, s),
            Optimizer::Adam(s) => adam_step(net, grad, s),
        }
    }
}

impl fmt::Display for OptimizerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerConfig::Sgd { lr } => write!(f, "sgd:lr={lr:?}"),
            OptimizerConfig::Adam(p) => write!(
                f,
                "adam:alpha={:?},beta1={:?},beta2={:?},eps={:?}",
                p.alpha, p.beta1, p.beta2, p.epsilon
            ),
        }
    }
}

impl FromStr for OptimizerConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, rest) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut kv = Vec::new();
        for item in rest.split(',').filter(|i| !i.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value in {item:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad number {v:?} in optimizer spec")))?;
            kv.push((k.trim().to_ascii_lowercase(), v));
        }
        let cfg = match tag.to_ascii_lowercase().as_str() {
            "sgd" => {
                let mut lr = DEFAULT_SGD_LR;
                for (k, v) in kv {
                    match k.as_str() {
                        "lr" => lr = v,
                        _ => return Err(Error::config(format!("unknown sgd key {k:?}"))),
                    }
                }
                OptimizerConfig::Sgd { lr }
            }
            "adam" => {
                let mut p = AdamParams::default();
                for (k, v) in kv {
                    match k.as_str() {
                        "alpha" | "lr" => p.alpha = v,
                        "beta1" => p.beta1 = v,
                        "beta2" => p.beta2 = v,
                        "eps" | "epsilon" => p.epsilon = v,
                        _ => return Err(Error::config(format!("unknown adam key {k:?}"))),
                    }
                }
                OptimizerConfig::Adam(p)
            }
            other => return Err(Error::config(format!("unknown optimizer {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl TryFrom<String> for OptimizerConfig {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OptimizerConfig> for String {
    fn from(c: OptimizerConfig) -> String {
        c.to_string()
    }
}
