mod common;

use neurolesion::activations::ActivationKind;
use neurolesion::lesion::{inject_lesion, LesionMode, LesionSpec};
use neurolesion::linalg::Matrix;
use neurolesion::nn::{self, DropoutCtx, Gradient, Network, TrainConfig};
use neurolesion::optim::{adam_step, sgd_step, AdamParams, AdamState, SgdState};
use neurolesion::rng::SplitMix64;
use proptest::prelude::*;

use common::*;

fn kinds() -> impl Strategy<Value = ActivationKind> {
    prop_oneof![
        Just(ActivationKind::Sigmoid),
        Just(ActivationKind::Relu),
        (0.001f64..0.5).prop_map(|slope| ActivationKind::LeakyRelu { slope }),
        (0.1f64..2.0, 0.1f64..2.0).prop_map(|(a, b)| ActivationKind::SRelu { a, b }),
        Just(ActivationKind::Identity),
    ]
}

/// A network with at least one hidden layer, so a lesion has a target.
fn deep_network(rng: &mut SplitMix64, kind: ActivationKind) -> Network {
    let n_hidden = 1 + (rng.next() % 3) as usize;
    let mut sizes = vec![1 + (rng.next() % 6) as usize];
    sizes.extend((0..n_hidden).map(|_| 2 + (rng.next() % 8) as usize));
    sizes.push(1);
    let mut acts = vec![kind; n_hidden];
    acts.push(ActivationKind::Identity);
    let mut net = nn::init_network(&sizes, &acts, rng.next()).unwrap();
    for b in net.biases.iter_mut().flatten() {
        *b = rng.uniform(-0.5, 0.5);
    }
    net
}

fn random_lesion(rng: &mut SplitMix64, net: &Network, mode: LesionMode) -> LesionSpec {
    let layer = (rng.next() % (net.layer_sizes.len() - 2) as u64) as usize;
    let neuron = (rng.next() % net.layer_sizes[layer + 1] as u64) as usize;
    LesionSpec {
        layer,
        neuron,
        mode,
        death_step: 0,
        freeze: true,
    }
}

fn random_gradient(rng: &mut SplitMix64, net: &Network) -> Gradient {
    let mut g = Gradient::zeros_like(net);
    for x in g.weights.iter_mut().flat_map(|w| w.data.iter_mut()) {
        *x = rng.uniform(-5.0, 5.0);
    }
    for x in g.biases.iter_mut().flatten() {
        *x = rng.uniform(-5.0, 5.0);
    }
    g
}

fn frozen_values(net: &Network) -> Vec<f64> {
    let w = net
        .weights
        .iter()
        .zip(&net.frozen_weights)
        .flat_map(|(w, f)| w.data.iter().zip(&f.data).filter(|(_, &f)| f).map(|(&x, _)| x));
    let b = net
        .biases
        .iter()
        .zip(&net.frozen_biases)
        .flat_map(|(b, f)| b.iter().zip(f).filter(|(_, &f)| f).map(|(&x, _)| x));
    w.chain(b).collect()
}

/// Copy of `net` with hidden neuron `(layer, neuron)` removed outright.
fn without_neuron(net: &Network, layer: usize, neuron: usize) -> Network {
    let mut sizes = net.layer_sizes.clone();
    sizes[layer + 1] -= 1;
    let mut out = nn::init_network(&sizes, &net.activations, 0).unwrap();
    for l in 0..net.weights.len() {
        let w = &net.weights[l];
        let data: Vec<f64> = (0..w.rows)
            .filter(|&r| !(l == layer && r == neuron))
            .flat_map(|r| {
                (0..w.cols)
                    .filter(move |&c| !(l == layer + 1 && c == neuron))
                    .map(move |c| *w.get(r, c))
            })
            .collect();
        out.weights[l] = Matrix::from_vec(out.weights[l].rows, out.weights[l].cols, data).unwrap();
        out.biases[l] = net.biases[l]
            .iter()
            .enumerate()
            .filter(|&(r, _)| !(l == layer && r == neuron))
            .map(|(_, &b)| b)
            .collect();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backprop_matches_finite_differences(seed in any::<u64>(), kind in kinds(), l2 in prop_oneof![Just(0.0), 0.0f64..0.1]) {
        let mut rng = SplitMix64::new(seed);
        let net = random_network(&mut rng, kind);
        let x: Vec<f64> = (0..net.layer_sizes[0]).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = rng.uniform(-1.0, 1.0);
        let cfg = TrainConfig { l2_lambda: l2, ..TrainConfig::default() };
        let r = grad_check(&net, &x, y, &cfg, None);
        prop_assert!(r.max_rel <= 1e-6, "max rel error {}", r.max_rel);
    }

    #[test]
    fn backprop_through_fixed_dropout_mask(seed in any::<u64>(), keep in 0.3f64..1.0, step in 0u64..1000) {
        let mut rng = SplitMix64::new(seed);
        let net = deep_network(&mut rng, ActivationKind::Sigmoid);
        let x: Vec<f64> = (0..net.layer_sizes[0]).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let y = rng.uniform(-1.0, 1.0);
        let cfg = TrainConfig { dropout_keep: keep, ..TrainConfig::default() };
        let ctx = DropoutCtx { keep, seed, step };
        let r = grad_check(&net, &x, y, &cfg, Some(ctx));
        prop_assert!(r.max_rel <= 1e-6, "max rel error {}", r.max_rel);
    }

    #[test]
    fn keep_one_equals_plain_backprop(seed in any::<u64>(), kind in kinds(), step in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let net = random_network(&mut rng, kind);
        let x: Vec<f64> = (0..net.layer_sizes[0]).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let y = rng.uniform(-1.0, 1.0);
        let cfg = TrainConfig::default();
        let plain = nn::forward(&net, &x).unwrap();
        let dropped = nn::forward_train(&net, &x, Some(DropoutCtx { keep: 1.0, seed, step })).unwrap();
        prop_assert_eq!(&plain.post, &dropped.post);
        let g_plain = nn::backward(&net, &plain, &[y], &cfg).unwrap();
        let g_drop = nn::backward(&net, &dropped, &[y], &cfg).unwrap();
        prop_assert_eq!(g_plain, g_drop);
    }

    #[test]
    fn frozen_entries_survive_any_optimizer_steps(seed in any::<u64>(), kind in kinds(), both in any::<bool>()) {
        let mut rng = SplitMix64::new(seed);
        let mut net = deep_network(&mut rng, kind);
        let mode = if both { LesionMode::ZeroBoth } else { LesionMode::ZeroIncoming };
        let spec = random_lesion(&mut rng, &net, mode);
        inject_lesion(&mut net, &spec).unwrap();
        let frozen = frozen_values(&net);
        prop_assert!(frozen.iter().all(|&x| x == 0.0));

        let mut sgd_net = net.clone();
        let sgd = SgdState::new(0.5).unwrap();
        let mut adam_net = net.clone();
        let mut adam = AdamState::new(&adam_net, AdamParams { alpha: 0.1, ..AdamParams::default() }).unwrap();
        for _ in 0..25 {
            let g = random_gradient(&mut rng, &net);
            sgd_step(&mut sgd_net, &g, &sgd).unwrap();
            adam_step(&mut adam_net, &g, &mut adam).unwrap();
        }
        prop_assert_eq!(frozen_values(&sgd_net), frozen.clone());
        prop_assert_eq!(frozen_values(&adam_net), frozen);
        prop_assert!(sgd_net.weights != net.weights);
    }

    #[test]
    fn zero_both_equals_deleting_the_neuron(seed in any::<u64>(), kind in kinds()) {
        let mut rng = SplitMix64::new(seed);
        let mut net = deep_network(&mut rng, kind);
        let spec = random_lesion(&mut rng, &net, LesionMode::ZeroBoth);
        inject_lesion(&mut net, &spec).unwrap();
        let pruned = without_neuron(&net, spec.layer, spec.neuron);
        for _ in 0..10 {
            let x: Vec<f64> = (0..net.layer_sizes[0]).map(|_| rng.uniform(-3.0, 3.0)).collect();
            let a = nn::forward(&net, &x).unwrap().prediction();
            let b = nn::forward(&pruned, &x).unwrap().prediction();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_both_ignores_dead_neuron_activation(seed in any::<u64>(), kind in kinds(), bias in -5.0f64..5.0) {
        let mut rng = SplitMix64::new(seed);
        let mut net = deep_network(&mut rng, kind);
        let spec = LesionSpec { freeze: false, ..random_lesion(&mut rng, &net, LesionMode::ZeroBoth) };
        inject_lesion(&mut net, &spec).unwrap();
        let mut perturbed = net.clone();
        perturbed.biases[spec.layer][spec.neuron] = bias;
        for w in perturbed.weights[spec.layer].row_mut(spec.neuron) {
            *w = rng.uniform(-3.0, 3.0);
        }
        let x: Vec<f64> = (0..net.layer_sizes[0]).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let a = nn::forward(&net, &x).unwrap().prediction();
        let b = nn::forward(&perturbed, &x).unwrap().prediction();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn single_relu_path_closed_form(
        w1 in -3.0f64..3.0, w2 in -3.0f64..3.0, w3 in -3.0f64..3.0, b in -1.0f64..1.0,
        x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, t in -2.0f64..2.0,
    ) {
        let mut net = nn::init_network(&[2, 1, 1], &[ActivationKind::Relu, ActivationKind::Identity], 0).unwrap();
        net.weights[0].data = vec![w1, w2];
        net.weights[1].data = vec![w3];
        net.biases[1] = vec![b];
        let z = w1 * x1 + w2 * x2;
        prop_assume!(z.abs() > 1e-9);
        let h = z.max(0.0);
        let y = w3 * h + b;

        let trace = nn::forward(&net, &[x1, x2]).unwrap();
        prop_assert!((trace.prediction() - y).abs() <= 1e-12);
        let g = nn::backward(&net, &trace, &[t], &TrainConfig::default()).unwrap();
        let e = y - t;
        let on = if z > 0.0 { 1.0 } else { 0.0 };
        let expected = [
            (g.weights[0].data[0], e * w3 * on * x1),
            (g.weights[0].data[1], e * w3 * on * x2),
            (g.biases[0][0], e * w3 * on),
            (g.weights[1].data[0], e * h),
            (g.biases[1][0], e),
        ];
        for (got, want) in expected {
            prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()), "{} vs {}", got, want);
        }
    }
}
