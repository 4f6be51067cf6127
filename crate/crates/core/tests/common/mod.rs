#![allow(dead_code)]

pub mod adjoint;
pub mod ops;

use graspmap::tensor::{MapPlanes, weighted_mse_loss};
use graspmap::{GraspFcn, GraspFcnConfig, LossWeights, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor so that two near-zero gradients compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-scale..scale))
}

pub fn random_targets(rng: &mut ChaCha8Rng, n: usize, size: usize) -> MapPlanes<f64> {
    let mut t = MapPlanes::zeros(n, size, size);
    for p in t.planes_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    }
    t
}

fn network_output(net: &GraspFcn<f64>, x: &Tensor<f64>) -> MapPlanes<f64> {
    net.run(x, Mode::Train).unwrap().output
}

fn network_output_and_pattern(net: &GraspFcn<f64>, x: &Tensor<f64>) -> (MapPlanes<f64>, Vec<bool>) {
    let trace = net.run(x, Mode::Train).unwrap();
    let pattern = trace.relu_pattern();
    (trace.output, pattern)
}

/// Directions tried per tensor before giving up on finding one whose
/// `±FD_STEP` probe stays on a single linear piece of every ReLU.
pub const MAX_DIRECTIONS: usize = 40;

/// `L(plus) − L(minus)` for the weighted MSE, summed pixel by pixel as
/// `λ·(a − b)(a + b − 2t) / 2N` so the large common part of both losses
/// never has to cancel.
pub fn loss_difference(plus: &MapPlanes<f64>, minus: &MapPlanes<f64>, target: &MapPlanes<f64>) -> f64 {
    let w = LossWeights::default();
    let lambdas = [w.lambda_q, w.lambda_phi, w.lambda_phi, w.lambda_w];
    let n = target.quality.shape()[0] as f64;
    let mut total = 0.0;
    for (((a, b), t), l) in plus.planes().into_iter().zip(minus.planes()).zip(target.planes()).zip(lambdas) {
        let s: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .zip(t.data())
            .map(|((&a, &b), &t)| (a - b) * (a + b - 2.0 * t))
            .sum();
        total += l * s;
    }
    total / (2.0 * n)
}

fn perturbed_network(cfg: &GraspFcnConfig, batch: usize, seed: u64) -> (GraspFcn<f64>, Tensor<f64>, MapPlanes<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = GraspFcn::<f64>::build(cfg.clone(), seed).unwrap();
    // Non-trivial affine parameters and biases exercise every gradient path.
    for p in net.parameters_mut() {
        if p.name.ends_with("gamma") || p.name.ends_with("beta") || p.name.ends_with("bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
        }
    }
    let size = cfg.input_size;
    let x = random_tensor(&mut rng, &[batch, 1, size, size], 1.0);
    let target = random_targets(&mut rng, batch, size);
    net.zero_grad();
    let trace = net.run(&x, Mode::Train).unwrap();
    let (_, grad) = weighted_mse_loss(&trace.output, &target, &LossWeights::default()).unwrap();
    net.backward(&trace, &grad).unwrap();
    (net, x, target, rng)
}

/// Central-difference check of the directional derivative along a random
/// unit direction per parameter tensor. A probe whose `±FD_STEP` evaluations
/// flip any ReLU straddles a kink, where the difference quotient does not
/// approximate the derivative, so a fresh direction is drawn instead.
/// Returns `(name, relative error, directions discarded)` per tensor; a
/// tensor with no usable direction reports an infinite error.
pub fn check_network_directional(cfg: GraspFcnConfig, batch: usize, seed: u64) -> Vec<(String, f64, usize)> {
    let (mut net, x, target, mut rng) = perturbed_network(&cfg, batch, seed);
    let count = net.parameters().len();
    let mut out = Vec::with_capacity(count);
    for pi in 0..count {
        let name = net.parameters()[pi].name.clone();
        let orig = net.parameters()[pi].value.clone();
        let grad = net.parameters()[pi].grad.clone();
        let mut result = (name.clone(), f64::INFINITY, MAX_DIRECTIONS);
        for attempt in 0..MAX_DIRECTIONS {
            let mut dir: Vec<f64> = (0..orig.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|d| *d /= norm);
            let analytic: f64 = grad.data().iter().zip(&dir).map(|(g, d)| g * d).sum();
            let mut probe = |sign: f64| {
                let v = &mut net.parameters_mut()[pi].value;
                for ((v, &o), d) in v.data_mut().iter_mut().zip(orig.data()).zip(&dir) {
                    *v = o + sign * FD_STEP * d;
                }
                network_output_and_pattern(&net, &x)
            };
            let (plus, plus_pattern) = probe(1.0);
            let (minus, minus_pattern) = probe(-1.0);
            net.parameters_mut()[pi].value = orig.clone();
            if plus_pattern != minus_pattern {
                continue;
            }
            let numeric = loss_difference(&plus, &minus, &target) / (2.0 * FD_STEP);
            result = (name, rel_err(analytic, numeric), attempt);
            break;
        }
        out.push(result);
    }
    out
}

/// Central-difference check of the full network loss. `per_tensor` limits how
/// many entries of each parameter tensor are probed (`None` probes all).
/// Returns the worst relative error and the number of entries probed.
pub fn check_network(cfg: GraspFcnConfig, batch: usize, seed: u64, per_tensor: Option<usize>) -> (f64, usize) {
    let (mut net, x, target, mut rng) = perturbed_network(&cfg, batch, seed);
    let analytic: Vec<Vec<f64>> = net.parameters().iter().map(|p| p.grad.data().to_vec()).collect();
    let mut worst = 0.0f64;
    let mut probed = 0;
    for (pi, grads) in analytic.iter().enumerate() {
        let entries: Vec<usize> = match per_tensor {
            Some(k) if k < grads.len() => (0..k).map(|_| rng.random_range(0..grads.len())).collect(),
            _ => (0..grads.len()).collect(),
        };
        for i in entries {
            let orig = net.parameters()[pi].value.data()[i];
            net.parameters_mut()[pi].value.data_mut()[i] = orig + FD_STEP;
            let plus = network_output(&net, &x);
            net.parameters_mut()[pi].value.data_mut()[i] = orig - FD_STEP;
            let minus = network_output(&net, &x);
            net.parameters_mut()[pi].value.data_mut()[i] = orig;
            let numeric = loss_difference(&plus, &minus, &target) / (2.0 * FD_STEP);
            let e = rel_err(grads[i], numeric);
            if e > worst {
                worst = e;
            }
            probed += 1;
        }
    }
    (worst, probed)
}

/// Worst relative error between `analytic[k]` and central differences of
/// `f` with respect to every entry of `inputs[k]`.
pub fn fd_worst(inputs: &mut [Tensor<f64>], f: &dyn Fn(&[Tensor<f64>]) -> f64, analytic: &[Tensor<f64>]) -> f64 {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..inputs.len() {
        for i in 0..inputs[k].len() {
            let orig = inputs[k].data()[i];
            inputs[k].data_mut()[i] = orig + h;
            let plus = f(inputs);
            inputs[k].data_mut()[i] = orig - h;
            let minus = f(inputs);
            inputs[k].data_mut()[i] = orig;
            worst = worst.max(rel_err(analytic[k].data()[i], (plus - minus) / (2.0 * h)));
        }
    }
    worst
}
