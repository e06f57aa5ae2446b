#![allow(dead_code)]

use neurolesion::activations::ActivationKind;
use neurolesion::lesion::CompensationView;
use neurolesion::nn::{self, DropoutCtx, Network, TrainConfig};
use neurolesion::rng::SplitMix64;

pub const KINKED: [ActivationKind; 4] = [
    ActivationKind::Sigmoid,
    ActivationKind::Relu,
    ActivationKind::LeakyRelu { slope: 0.01 },
    ActivationKind::SRelu { a: 1.0, b: 1.0 },
];

/// Side of every breakpoint for every pre-activation; a finite difference is
/// only meaningful if this pattern is the same at `w - h`, `w` and `w + h`.
fn branch_pattern(net: &Network, x: &[f64]) -> Vec<i8> {
    let trace = nn::forward(net, x).unwrap();
    let mut out = Vec::new();
    for (l, z) in trace.pre.iter().enumerate() {
        let bps = net.activations[l].breakpoints();
        for &zi in z {
            for &bp in &bps {
                out.push(if zi > bp {
                    1
                } else if zi < bp {
                    -1
                } else {
                    0
                });
            }
        }
    }
    out
}

fn loss_at(net: &Network, x: &[f64], y: f64, cfg: &TrainConfig, dropout: Option<DropoutCtx>) -> f64 {
    let trace = nn::forward_train(net, x, dropout).unwrap();
    nn::total_loss(net, &trace, &[y], cfg.l2_lambda)
}

pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Central differences with `h = 1e-5` against `backward`. Relative error is
/// `|a - f| / max(|a|, |f|, 1e-4)` so exactly-zero gradients do not divide
/// by zero.
pub fn grad_check(net: &Network, x: &[f64], y: f64, cfg: &TrainConfig, dropout: Option<DropoutCtx>) -> GradCheck {
    let h = 1e-5;
    let trace = nn::forward_train(net, x, dropout).unwrap();
    let g = nn::backward(net, &trace, &[y], cfg).unwrap();
    let base = branch_pattern(net, x);
    let mut probe = net.clone();
    let mut res = GradCheck {
        max_rel: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut check = |probe: &mut Network, get: &dyn Fn(&mut Network) -> &mut f64, analytic: f64| {
        let orig = *get(probe);
        *get(probe) = orig + h;
        let up_pat = branch_pattern(probe, x);
        let up = loss_at(probe, x, y, cfg, dropout);
        *get(probe) = orig - h;
        let down_pat = branch_pattern(probe, x);
        let down = loss_at(probe, x, y, cfg, dropout);
        *get(probe) = orig;
        if up_pat != base || down_pat != base {
            res.skipped += 1;
            return;
        }
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4);
        res.max_rel = res.max_rel.max(rel);
        res.checked += 1;
    };
    for l in 0..net.weights.len() {
        for k in 0..net.weights[l].data.len() {
            check(
                &mut probe,
                &|n: &mut Network| &mut n.weights[l].data[k],
                g.weights[l].data[k],
            );
        }
        for k in 0..net.biases[l].len() {
            check(&mut probe, &|n: &mut Network| &mut n.biases[l][k], g.biases[l][k]);
        }
    }
    res
}

/// Random topology with at most 4 layers, 10 units per layer, one output.
pub fn random_network(rng: &mut SplitMix64, kind: ActivationKind) -> Network {
    let n_layers = 2 + (rng.next() % 3) as usize;
    let mut sizes: Vec<usize> = (0..n_layers).map(|_| 1 + (rng.next() % 10) as usize).collect();
    sizes[n_layers - 1] = 1;
    let mut acts = vec![kind; n_layers - 1];
    if rng.next() % 2 == 0 {
        acts[n_layers - 2] = ActivationKind::Identity;
    }
    let mut net = nn::init_network(&sizes, &acts, rng.next()).unwrap();
    for b in net.biases.iter_mut().flatten() {
        *b = rng.uniform(-0.5, 0.5);
    }
    net
}

/// Number of pairs with the pre spike 1..=w steps before the post spike,
/// minus pairs with it 1..=w steps after; plain double loop.
pub fn sur_pair_sign_sum(pre: &[u32], post: &[u32], window: u32) -> i64 {
    let mut total = 0i64;
    for &tq in post {
        for &tp in pre {
            let dt = tq as i64 - tp as i64;
            if dt > 0 && dt <= window as i64 {
                total += 1;
            } else if dt < 0 && -dt <= window as i64 {
                total -= 1;
            }
        }
    }
    total
}

pub fn stdp_direct(pre: &[u32], post: &[u32], a_plus: f64, a_minus: f64, tau_plus: f64, tau_minus: f64) -> f64 {
    let mut total = 0.0;
    for &tq in post {
        for &tp in pre {
            let dt = tq as f64 - tp as f64;
            if dt > 0.0 {
                total += a_plus * (-dt / tau_plus).exp();
            } else if dt < 0.0 {
                total -= a_minus * (dt / tau_minus).exp();
            }
        }
    }
    total
}

pub fn random_train(rng: &mut SplitMix64, steps: u32, p: f64) -> Vec<u32> {
    (0..steps).filter(|_| rng.bernoulli(p)).collect()
}

/// Check a compensation view against an independent recomputation of its
/// shares and distance aggregation. Returns a description of the first
/// violation.
pub fn check_view(view: &CompensationView, dead: usize) -> Result<(), String> {
    let total: f64 = view.survivors.iter().map(|s| s.delta).sum();
    if (total - view.total_delta).abs() > 1e-12 * total.max(1.0) {
        return Err(format!("total delta {} vs recomputed {total}", view.total_delta));
    }
    if view
        .survivors
        .iter()
        .any(|s| s.index == dead || s.distance != s.index.abs_diff(dead))
    {
        return Err("survivor list includes the dead neuron or a wrong distance".into());
    }
    if total == 0.0 {
        return if view.no_adaptation && view.survivors.iter().all(|s| s.share.is_none()) {
            Ok(())
        } else {
            Err("zero total change not flagged as no adaptation".into())
        };
    }
    let mut sum = 0.0;
    for s in &view.survivors {
        let share = s.share.ok_or("missing share")?;
        if !(0.0..=1.0).contains(&share) {
            return Err(format!("share {share} outside [0, 1]"));
        }
        if (share - s.delta / total).abs() > 1e-12 {
            return Err(format!("share {share} vs recomputed {}", s.delta / total));
        }
        sum += share;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("shares sum to {sum}"));
    }
    let max_d = view.survivors.iter().map(|s| s.distance).max().unwrap_or(0);
    for d in 1..=max_d {
        let brute: f64 = view
            .survivors
            .iter()
            .filter(|s| s.distance == d)
            .map(|s| s.delta / total)
            .sum();
        let reported = view
            .by_distance
            .iter()
            .find(|b| b.distance == d)
            .map_or(0.0, |b| b.share);
        if (brute - reported).abs() > 1e-12 {
            return Err(format!("distance {d}: reported {reported}, brute force {brute}"));
        }
    }
    let s1: f64 = view
        .survivors
        .iter()
        .filter(|s| s.distance == 1)
        .map(|s| s.delta / total)
        .sum();
    match view.nearest_share {
        Some(v) if (v - s1).abs() <= 1e-12 => Ok(()),
        other => Err(format!("nearest share {other:?} vs brute force {s1}")),
    }
}
