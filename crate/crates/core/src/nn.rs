//! Dense feedforward network: forward pass, half-squared-error loss,
//! reverse-mode gradients with optional L2 penalty and inverted dropout.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, Matrix};
use crate::rng::{self, Purpose};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` maps layer `l` to layer `l + 1`: shape `sizes[l+1] x sizes[l]`.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// One activation per non-input layer.
    pub activations: Vec<ActivationKind>,
    pub frozen_weights: Vec<Matrix<bool>>,
    pub frozen_biases: Vec<Vec<bool>>,
    pub seed: Option<u64>,
    /// `(hidden layer, neuron)` pairs that have been lesioned.
    pub lesioned: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2_lambda: f64,
    pub dropout_keep: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 0.0,
            dropout_keep: 1.0,
            epochs: 30,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::config(format!("l2_lambda must be >= 0, got {}", self.l2_lambda)));
        }
        check_keep(self.dropout_keep)?;
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        Ok(())
    }
}

fn check_keep(keep: f64) -> Result<()> {
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::config(format!("dropout keep must lie in (0, 1], got {keep}")));
    }
    Ok(())
}

/// Everything backpropagation needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    /// Pre-activations per non-input layer.
    pub pre: Vec<Vec<f64>>,
    /// Activations per non-input layer, after dropout scaling.
    pub post: Vec<Vec<f64>>,
    /// Dropout keep-mask per non-input layer (`None` where no dropout ran).
    pub dropout: Vec<Option<Vec<bool>>>,
    pub dropout_keep: f64,
}

impl ForwardTrace {
    pub fn y_pred(&self) -> &[f64] {
        self.post.last().expect("trace has an output layer")
    }

    /// First output unit; every experiment here has a single output.
    pub fn prediction(&self) -> f64 {
        self.y_pred()[0]
    }

    /// Activation feeding weight layer `l`.
    fn layer_input(&self, l: usize) -> &[f64] {
        if l == 0 {
            &self.input
        } else {
            &self.post[l - 1]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            weights: net.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn matches(&self, net: &Network) -> bool {
        self.weights.len() == net.weights.len()
            && self.weights.iter().zip(&net.weights).all(|(g, w)| g.same_shape(w))
            && self.biases.iter().zip(&net.biases).all(|(g, b)| g.len() == b.len())
    }

    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    /// L2 norm of each layer's weight gradient.
    pub fn weight_norms(&self) -> Vec<f64> {
        self.weights.iter().map(|w| l2_norm(&w.data)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|b| b.is_finite())
    }
}

/// Build a network with weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`
/// and zero biases. Each layer draws from its own `(seed, Init, layer)` stream.
pub fn init_network(layer_sizes: &[usize], activations: &[ActivationKind], seed: u64) -> Result<Network> {
    if layer_sizes.len() < 2 {
        return Err(Error::config("a network needs at least two layers"));
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::config("every layer needs at least one neuron"));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::config(format!(
            "{} activations given for {} non-input layers",
            activations.len(),
            layer_sizes.len() - 1
        )));
    }
    for a in activations {
        a.validate()?;
    }

    let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
    for (l, pair) in layer_sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = rng::stream(seed, Purpose::Init, l as u64, 0);
        let data = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
        weights.push(Matrix::from_vec(fan_out, fan_in, data)?);
    }
    Ok(Network {
        layer_sizes: layer_sizes.to_vec(),
        frozen_weights: weights.iter().map(|w| Matrix::filled(w.rows, w.cols, false)).collect(),
        frozen_biases: layer_sizes[1..].iter().map(|&n| vec![false; n]).collect(),
        biases: layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        weights,
        activations: activations.to_vec(),
        seed: Some(seed),
        lesioned: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct DropoutCtx {
    pub keep: f64,
    pub seed: u64,
    pub step: u64,
}

/// Inverted dropout on one hidden layer's activations. Each unit is kept
/// with probability `keep` and kept values are scaled by `1/keep`. The mask
/// depends only on `(seed, layer, step)`.
pub fn apply_dropout(activations: &mut [f64], keep: f64, seed: u64, layer: usize, step: u64) -> Result<Vec<bool>> {
    check_keep(keep)?;
    if keep == 1.0 {
        return Ok(vec![true; activations.len()]);
    }
    let mut rng = rng::stream(seed, Purpose::Dropout, layer as u64, step);
    let scale = 1.0 / keep;
    Ok(activations
        .iter_mut()
        .map(|a| {
            let kept = rng.next_f64() < keep;
            *a = if kept { *a * scale } else { 0.0 };
            kept
        })
        .collect())
}

impl Network {
    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.layer_sizes.len();
        if n < 2 || self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("invalid layer sizes"));
        }
        let ok = self.weights.len() == n - 1
            && self.biases.len() == n - 1
            && self.activations.len() == n - 1
            && self.frozen_weights.len() == n - 1
            && self.frozen_biases.len() == n - 1
            && (0..n - 1).all(|l| {
                let (rows, cols) = (self.layer_sizes[l + 1], self.layer_sizes[l]);
                self.weights[l].rows == rows
                    && self.weights[l].cols == cols
                    && self.weights[l].data.len() == rows * cols
                    && self.frozen_weights[l].same_shape(&self.weights[l])
                    && self.frozen_weights[l].data.len() == rows * cols
                    && self.biases[l].len() == rows
                    && self.frozen_biases[l].len() == rows
            });
        if !ok {
            return Err(Error::shape("parameter shapes do not match layer sizes"));
        }
        if !self.params_finite() {
            return Err(Error::domain("network parameters are not finite"));
        }
        for a in &self.activations {
            a.validate()?;
        }
        Ok(())
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|b| b.is_finite())
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_sq_sum(&self) -> f64 {
        self.weights.iter().map(Matrix::sum_sq).sum()
    }

    /// SHA-256 over layer sizes, activation tags and the bit patterns of every
    /// parameter and mask.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for &s in &self.layer_sizes {
            h.update((s as u64).to_le_bytes());
        }
        for a in &self.activations {
            h.update(a.to_string().as_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for x in w.data.iter().chain(b) {
                h.update(x.to_bits().to_le_bytes());
            }
        }
        for (fw, fb) in self.frozen_weights.iter().zip(&self.frozen_biases) {
            for &f in fw.data.iter().chain(fb) {
                h.update([f as u8]);
            }
        }
        hex::encode(h.finalize())
    }
}

/// Inference-mode forward pass.
pub fn forward(net: &Network, x: &[f64]) -> Result<ForwardTrace> {
    forward_train(net, x, None)
}

/// Forward pass, optionally applying inverted dropout to hidden layers.
pub fn forward_train(net: &Network, x: &[f64], dropout: Option<DropoutCtx>) -> Result<ForwardTrace> {
    if x.len() != net.layer_sizes[0] {
        return Err(Error::shape(format!(
            "input has {} features, network expects {}",
            x.len(),
            net.layer_sizes[0]
        )));
    }
    let n_weight_layers = net.weights.len();
    let mut pre = Vec::with_capacity(n_weight_layers);
    let mut post: Vec<Vec<f64>> = Vec::with_capacity(n_weight_layers);
    let mut masks = Vec::with_capacity(n_weight_layers);

    for l in 0..n_weight_layers {
        let input = if l == 0 { x } else { &post[l - 1] };
        let w = &net.weights[l];
        let mut z = vec![0.0; w.rows];
        w.matvec_into(input, &mut z);
        z.iter_mut().zip(&net.biases[l]).for_each(|(z, b)| *z += b);
        let kind = net.activations[l];
        let mut a: Vec<f64> = z.iter().map(|&z| kind.apply(z)).collect();
        let is_hidden = l + 1 < n_weight_layers;
        let mask = match dropout {
            Some(ctx) if is_hidden && ctx.keep < 1.0 => Some(apply_dropout(&mut a, ctx.keep, ctx.seed, l, ctx.step)?),
            _ => None,
        };
        pre.push(z);
        post.push(a);
        masks.push(mask);
    }
    Ok(ForwardTrace {
        input: x.to_vec(),
        pre,
        post,
        dropout: masks,
        dropout_keep: dropout.map_or(1.0, |d| d.keep),
    })
}

/// `½ (y_true − y_pred)²`.
pub fn mse_loss(y_true: f64, y_pred: f64) -> f64 {
    let e = y_true - y_pred;
    0.5 * e * e
}

/// Data term plus `λ Σ w²` for one sample.
pub fn total_loss(net: &Network, trace: &ForwardTrace, y_true: &[f64], l2_lambda: f64) -> f64 {
    let data: f64 = y_true.iter().zip(trace.y_pred()).map(|(&t, &p)| mse_loss(t, p)).sum();
    data + l2_lambda * net.weight_sq_sum()
}

/// Exact reverse-mode gradient of [`total_loss`] for the sample in `trace`.
/// Entries at frozen positions are forced to zero.
pub fn backward(net: &Network, trace: &ForwardTrace, y_true: &[f64], config: &TrainConfig) -> Result<Gradient> {
    let n_weight_layers = net.weights.len();
    if trace.pre.len() != n_weight_layers
        || trace.input.len() != net.layer_sizes[0]
        || trace.pre.iter().zip(&net.layer_sizes[1..]).any(|(z, &n)| z.len() != n)
    {
        return Err(Error::shape("trace does not match network topology"));
    }
    if y_true.len() != *net.layer_sizes.last().unwrap() {
        return Err(Error::shape(format!(
            "target has {} values, network has {} outputs",
            y_true.len(),
            net.layer_sizes.last().unwrap()
        )));
    }

    let mut grad = Gradient::zeros_like(net);
    let last = n_weight_layers - 1;
    let out_kind = net.activations[last];
    let mut delta: Vec<f64> = trace.post[last]
        .iter()
        .zip(y_true)
        .zip(&trace.pre[last])
        .map(|((&p, &t), &z)| (p - t) * out_kind.slope(z))
        .collect();

    for l in (0..n_weight_layers).rev() {
        grad.weights[l].add_outer(1.0, &delta, trace.layer_input(l));
        grad.biases[l].copy_from_slice(&delta);
        if l == 0 {
            break;
        }
        let mut upstream = vec![0.0; net.layer_sizes[l]];
        net.weights[l].matvec_t_into(&delta, &mut upstream);
        if let Some(mask) = &trace.dropout[l - 1] {
            let scale = 1.0 / trace.dropout_keep;
            upstream
                .iter_mut()
                .zip(mask)
                .for_each(|(u, &kept)| *u = if kept { *u * scale } else { 0.0 });
        }
        let kind = net.activations[l - 1];
        upstream
            .iter_mut()
            .zip(&trace.pre[l - 1])
            .for_each(|(u, &z)| *u *= kind.slope(z));
        delta = upstream;
    }

    if config.l2_lambda > 0.0 {
        let k = 2.0 * config.l2_lambda;
        for (g, w) in grad.weights.iter_mut().zip(&net.weights) {
            g.data.iter_mut().zip(&w.data).for_each(|(g, w)| *g += k * w);
        }
    }
    mask_frozen(net, &mut grad);
    Ok(grad)
}

pub(crate) fn mask_frozen(net: &Network, grad: &mut Gradient) {
    for (g, f) in grad.weights.iter_mut().zip(&net.frozen_weights) {
        for (g, &frozen) in g.data.iter_mut().zip(&f.data) {
            if frozen {
                *g = 0.0;
            }
        }
    }
    for (g, f) in grad.biases.iter_mut().zip(&net.frozen_biases) {
        for (g, &frozen) in g.iter_mut().zip(f) {
            if frozen {
                *g = 0.0;
            }
        }
    }
}

/// Versioned on-disk form of a [`Network`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<ActivationKind>,
    /// Row-major, one array per weight layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub frozen_weights: Vec<Vec<bool>>,
    pub frozen_biases: Vec<Vec<bool>>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub lesioned: Vec<(usize, usize)>,
}

impl From<&Network> for Checkpoint {
    fn from(net: &Network) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layer_sizes: net.layer_sizes.clone(),
            activations: net.activations.clone(),
            weights: net.weights.iter().map(|w| w.data.clone()).collect(),
            biases: net.biases.clone(),
            frozen_weights: net.frozen_weights.iter().map(|f| f.data.clone()).collect(),
            frozen_biases: net.frozen_biases.clone(),
            seed: net.seed,
            lesioned: net.lesioned.clone(),
        }
    }
}

impl TryFrom<Checkpoint> for Network {
    type Error = Error;

    fn try_from(cp: Checkpoint) -> Result<Network> {
        if cp.format_version != CHECKPOINT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint version {}",
                cp.format_version
            )));
        }
        if cp.layer_sizes.len() < 2 || cp.weights.len() != cp.layer_sizes.len() - 1 {
            return Err(Error::shape("checkpoint layer count mismatch"));
        }
        let mut weights = Vec::new();
        let mut frozen = Vec::new();
        for (l, (w, f)) in cp.weights.into_iter().zip(cp.frozen_weights).enumerate() {
            let (rows, cols) = (cp.layer_sizes[l + 1], cp.layer_sizes[l]);
            weights.push(Matrix::from_vec(rows, cols, w)?);
            frozen.push(Matrix::from_vec(rows, cols, f)?);
        }
        let net = Network {
            layer_sizes: cp.layer_sizes,
            weights,
            biases: cp.biases,
            activations: cp.activations,
            frozen_weights: frozen,
            frozen_biases: cp.frozen_biases,
            seed: cp.seed,
            lesioned: cp.lesioned,
        };
        net.validate()?;
        Ok(net)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&Checkpoint::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Network> {
        let cp: Checkpoint = serde_json::from_str(s)?;
        cp.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ActivationKind::*;

    fn two_path_net(w1: f64, w2: f64, w3: f64, b: f64) -> Network {
        // 2 inputs -> one ReLU unit -> identity output
        let mut net = init_network(&[2, 1, 1], &[Relu, Identity], 0).unwrap();
        net.weights[0].data = vec![w1, w2];
        net.biases[0] = vec![0.0];
        net.weights[1].data = vec![w3];
        net.biases[1] = vec![b];
        net
    }

    #[test]
    fn default_topology_parameter_count() {
        let acts = [Sigmoid, Sigmoid, Sigmoid, Identity];
        let net = init_network(&[5, 10, 10, 10, 1], &acts, 42).unwrap();
        // 5·10+10 + 10·10+10 + 10·10+10 + 10·1+1
        assert_eq!(net.num_params(), 291);
        assert!(net.frozen_weights.iter().all(|f| f.data.iter().all(|&x| !x)));
        assert!(net.biases.iter().flatten().all(|&b| b == 0.0));
        for (l, w) in net.weights.iter().enumerate() {
            let bound = 1.0 / (net.layer_sizes[l] as f64).sqrt();
            assert!(w.data.iter().all(|x| x.abs() <= bound));
        }
    }

    #[test]
    fn init_is_deterministic() {
        let acts = [Relu, Relu, Relu, Identity];
        let a = init_network(&[5, 10, 10, 10, 1], &acts, 42).unwrap();
        let b = init_network(&[5, 10, 10, 10, 1], &acts, 42).unwrap();
        assert_eq!(a.param_hash(), b.param_hash());
        assert_eq!(a, b);
        let c = init_network(&[5, 10, 10, 10, 1], &acts, 43).unwrap();
        assert_ne!(a.param_hash(), c.param_hash());
    }

    #[test]
    fn demo_topology() {
        let net = init_network(&[2, 2, 1], &[Relu, Identity], 1).unwrap();
        assert_eq!(net.weights[0].rows, 2);
        assert_eq!(net.weights[1].cols, 2);
    }

    #[test]
    fn init_rejects_bad_layers() {
        assert!(matches!(init_network(&[], &[], 0), Err(Error::Config(_))));
        assert!(matches!(init_network(&[3], &[], 0), Err(Error::Config(_))));
        assert!(matches!(
            init_network(&[3, 0, 1], &[Relu, Relu], 0),
            Err(Error::Config(_))
        ));
        assert!(init_network(&[3, 1], &[Relu, Relu], 0).is_err());
    }

    #[test]
    fn two_path_hand_computed() {
        let net = two_path_net(2.0, -1.0, 0.5, 0.1);
        let t = forward(&net, &[1.0, 1.0]).unwrap();
        assert_eq!(t.pre[0], vec![1.0]);
        assert_eq!(t.post[0], vec![1.0]);
        assert!((t.prediction() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_network_outputs() {
        let mut net = init_network(&[3, 4, 1], &[Sigmoid, Sigmoid], 5).unwrap();
        net.weights.iter_mut().for_each(|w| w.data.fill(0.0));
        let t = forward(&net, &[0.3, -2.0, 7.0]).unwrap();
        assert!(t.post.iter().flatten().all(|&a| a == 0.5));

        net.activations = vec![Relu, Relu];
        let t = forward(&net, &[0.3, -2.0, 7.0]).unwrap();
        assert_eq!(t.prediction(), 0.0);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = init_network(&[3, 2, 1], &[Relu, Identity], 0).unwrap();
        assert!(matches!(forward(&net, &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(7.0, 7.0), 0.0);
        assert_eq!(mse_loss(3.0, 1.0), 2.0);
        assert_eq!(mse_loss(1.0, 0.0), 0.5);
    }

    #[test]
    fn single_linear_neuron_gradient() {
        let mut net = init_network(&[1, 1], &[Identity], 0).unwrap();
        net.weights[0].data = vec![0.5];
        let t = forward(&net, &[1.0]).unwrap();
        let g = backward(&net, &t, &[1.0], &TrainConfig::default()).unwrap();
        assert_eq!(g.weights[0].data, vec![-0.5]);
    }

    #[test]
    fn l2_gradient_at_stationary_point() {
        // y_pred == y_true so the data term vanishes and only 2λw remains
        let mut net = init_network(&[1, 1], &[Identity], 0).unwrap();
        net.weights[0].data = vec![1.0];
        let t = forward(&net, &[2.0]).unwrap();
        let cfg = TrainConfig {
            l2_lambda: 0.1,
            ..TrainConfig::default()
        };
        let g = backward(&net, &t, &[2.0], &cfg).unwrap();
        assert!((g.weights[0].data[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_incoming_relu_gets_no_gradient() {
        let mut net = init_network(&[3, 4, 1], &[Relu, Identity], 3).unwrap();
        net.weights[0].row_mut(2).fill(0.0);
        net.biases[0][2] = -0.5;
        for x in [[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0], [4.0, -4.0, 1.0]] {
            let t = forward(&net, &x).unwrap();
            let g = backward(&net, &t, &[10.0], &TrainConfig::default()).unwrap();
            assert!(g.weights[0].row(2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn frozen_entries_zeroed() {
        let mut net = init_network(&[2, 3, 1], &[Sigmoid, Identity], 3).unwrap();
        *net.frozen_weights[1].get_mut(0, 1) = true;
        net.frozen_biases[0][2] = true;
        let t = forward(&net, &[0.4, 0.9]).unwrap();
        let g = backward(&net, &t, &[3.0], &TrainConfig::default()).unwrap();
        assert_eq!(*g.weights[1].get(0, 1), 0.0);
        assert_eq!(g.biases[0][2], 0.0);
        assert_ne!(*g.weights[1].get(0, 0), 0.0);
    }

    #[test]
    fn trace_mismatch_is_shape_error() {
        let a = init_network(&[2, 3, 1], &[Sigmoid, Identity], 3).unwrap();
        let b = init_network(&[2, 4, 1], &[Sigmoid, Identity], 3).unwrap();
        let t = forward(&a, &[0.1, 0.2]).unwrap();
        assert!(matches!(
            backward(&b, &t, &[1.0], &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn dropout_keep_one_is_identity() {
        let mut a = vec![0.5, -1.0, 2.0];
        let mask = apply_dropout(&mut a, 1.0, 9, 0, 0).unwrap();
        assert_eq!(a, vec![0.5, -1.0, 2.0]);
        assert!(mask.iter().all(|&m| m));
    }

    #[test]
    fn dropout_rejects_zero_keep() {
        let mut a = vec![1.0];
        assert!(matches!(apply_dropout(&mut a, 0.0, 1, 0, 0), Err(Error::Config(_))));
        assert!(matches!(apply_dropout(&mut a, 1.5, 1, 0, 0), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_mask_is_reproducible_and_scaled() {
        let src = vec![1.0; 64];
        let mut a = src.clone();
        let mut b = src.clone();
        let ma = apply_dropout(&mut a, 0.5, 11, 1, 7).unwrap();
        let mb = apply_dropout(&mut b, 0.5, 11, 1, 7).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(a, b);
        for (v, kept) in a.iter().zip(&ma) {
            assert_eq!(*v, if *kept { 2.0 } else { 0.0 });
        }
        let mut c = src;
        let mc = apply_dropout(&mut c, 0.5, 11, 1, 8).unwrap();
        assert_ne!(ma, mc);
    }

    #[test]
    fn dropped_units_pass_no_gradient() {
        let net = init_network(&[3, 8, 1], &[Sigmoid, Identity], 4).unwrap();
        let ctx = DropoutCtx {
            keep: 0.5,
            seed: 1,
            step: 3,
        };
        let t = forward_train(&net, &[0.2, 0.4, 0.6], Some(ctx)).unwrap();
        let mask = t.dropout[0].clone().unwrap();
        assert!(mask.iter().any(|&m| !m));
        let g = backward(&net, &t, &[1.0], &TrainConfig::default()).unwrap();
        for (j, kept) in mask.iter().enumerate() {
            if !kept {
                assert!(g.weights[0].row(j).iter().all(|&v| v == 0.0));
                assert_eq!(*g.weights[1].get(0, j), 0.0);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut net = init_network(&[5, 10, 10, 10, 1], &[Relu, Relu, Relu, Identity], 42).unwrap();
        net.frozen_biases[1][4] = true;
        net.lesioned.push((1, 4));
        let json = net.to_json().unwrap();
        let back = Network::from_json(&json).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.param_hash(), net.param_hash());
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["format_version"], 1);
        assert_eq!(v["activations"][0], "relu");
        assert_eq!(v["weights"][0].as_array().unwrap().len(), 50);
    }

    #[test]
    fn checkpoint_rejects_bad_shapes() {
        let net = init_network(&[2, 2, 1], &[Relu, Identity], 1).unwrap();
        let mut cp = Checkpoint::from(&net);
        cp.weights[0].pop();
        assert!(Network::try_from(cp).is_err());
        let mut cp = Checkpoint::from(&net);
        cp.format_version = 99;
        assert!(Network::try_from(cp).is_err());
    }
}
