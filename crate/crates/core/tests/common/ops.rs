//! Central-difference checks of every differentiable layer in `f64`. Each
//! layer is reduced to the scalar `⟨layer(x), r⟩` for a random `r`, whose
//! gradient is the layer backward applied to `r`.

use super::{fd_worst, random_targets, random_tensor};
use graspmap::tensor::*;
use graspmap::{LossWeights, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn conv2d() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (seed, stride, pad, k) in [(0, 1, 1, 3), (1, 2, 2, 5), (2, 2, 0, 3), (3, 1, 4, 9)] {
        let mut r = rng(seed);
        let mut inputs = vec![
            random_tensor(&mut r, &[2, 3, 9, 8], 1.0),
            random_tensor(&mut r, &[4, 3, k, k], 1.0),
            random_tensor(&mut r, &[4], 1.0),
        ];
        let y = conv2d_forward(&inputs[0], &inputs[1], Some(&inputs[2]), stride, pad).unwrap();
        let probe = random_tensor(&mut r, y.shape(), 1.0);
        let g = conv2d_backward(&probe, &inputs[0], &inputs[1], stride, pad).unwrap();
        let f = |t: &[Tensor<f64>]| {
            conv2d_forward(&t[0], &t[1], Some(&t[2]), stride, pad).unwrap().dot(&probe).unwrap()
        };
        let worst = fd_worst(&mut inputs, &f, &[g.input, g.weight, g.bias]);
        out.push((format!("conv2d stride {stride} pad {pad} k {k}"), worst));
    }
    out
}

pub fn conv_transpose2d() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (seed, stride, pad, k, op) in [(0, 1, 1, 3, 0), (1, 2, 2, 5, 1), (2, 2, 4, 9, 1), (3, 3, 1, 3, 2)] {
        let mut r = rng(seed);
        let mut inputs = vec![
            random_tensor(&mut r, &[2, 3, 5, 6], 1.0),
            random_tensor(&mut r, &[3, 4, k, k], 1.0),
            random_tensor(&mut r, &[4], 1.0),
        ];
        let y = conv_transpose2d_forward(&inputs[0], &inputs[1], Some(&inputs[2]), stride, pad, op).unwrap();
        let probe = random_tensor(&mut r, y.shape(), 1.0);
        let g = conv_transpose2d_backward(&probe, &inputs[0], &inputs[1], stride, pad).unwrap();
        let f = |t: &[Tensor<f64>]| {
            conv_transpose2d_forward(&t[0], &t[1], Some(&t[2]), stride, pad, op)
                .unwrap()
                .dot(&probe)
                .unwrap()
        };
        let worst = fd_worst(&mut inputs, &f, &[g.input, g.weight, g.bias]);
        out.push((format!("conv_transpose2d stride {stride} pad {pad} k {k} op {op}"), worst));
    }
    out
}

pub fn batchnorm() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for mode in [Mode::Train, Mode::Eval] {
        let mut r = rng(7);
        let mut inputs = vec![
            random_tensor(&mut r, &[3, 2, 4, 5], 2.0),
            random_tensor(&mut r, &[2], 1.5),
            random_tensor(&mut r, &[2], 1.0),
        ];
        let mut running = BatchNormStats::new(2);
        running.mean = random_tensor(&mut r, &[2], 0.5);
        running.var = Tensor::new([2], vec![0.7, 1.9]).unwrap();
        let (y, cache, _) = batchnorm2d_forward(&inputs[0], &inputs[1], &inputs[2], &running, mode, 1e-5).unwrap();
        let probe = random_tensor(&mut r, y.shape(), 1.0);
        let g = batchnorm2d_backward(&probe, &cache, &inputs[1]).unwrap();
        let f = |t: &[Tensor<f64>]| {
            batchnorm2d_forward(&t[0], &t[1], &t[2], &running, mode, 1e-5).unwrap().0.dot(&probe).unwrap()
        };
        let worst = fd_worst(&mut inputs, &f, &[g.input, g.gamma, g.beta]);
        out.push((format!("batchnorm {mode:?}"), worst));
    }
    out
}

pub fn activations() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut r = rng(11);
    // Keep ReLU inputs off the kink.
    let x = random_tensor(&mut r, &[2, 2, 5, 5], 3.0).map(|v| if v.abs() < 0.01 { 0.5 } else { v });
    let probe = random_tensor(&mut r, x.shape(), 1.0);
    let g_relu = relu_backward(&probe, &x).unwrap();
    let g_sig = sigmoid_backward(&probe, &sigmoid(&x)).unwrap();
    let g_tanh = tanh_backward(&probe, &tanh(&x)).unwrap();
    for (name, f, g) in [
        ("relu", relu as fn(&Tensor<f64>) -> Tensor<f64>, g_relu),
        ("sigmoid", sigmoid, g_sig),
        ("tanh", tanh, g_tanh),
    ] {
        let mut inputs = vec![x.clone()];
        let worst = fd_worst(&mut inputs, &|t| f(&t[0]).dot(&probe).unwrap(), &[g]);
        out.push((name.to_string(), worst));
    }
    out
}

pub fn weighted_mse() -> Vec<(String, f64)> {
    let mut r = rng(13);
    let target = random_targets(&mut r, 2, 6);
    let pred = random_targets(&mut r, 2, 6);
    let w = LossWeights::default();
    let (_, grad) = weighted_mse_loss(&pred, &target, &w).unwrap();
    let mut inputs: Vec<Tensor<f64>> = pred.planes().into_iter().cloned().collect();
    let f = |t: &[Tensor<f64>]| {
        let p = MapPlanes {
            quality: t[0].clone(),
            cos: t[1].clone(),
            sin: t[2].clone(),
            width: t[3].clone(),
        };
        weighted_mse_loss(&p, &target, &w).unwrap().0
    };
    let analytic: Vec<Tensor<f64>> = grad.planes().into_iter().cloned().collect();
    let worst = fd_worst(&mut inputs, &f, &analytic);
    vec![("weighted_mse".to_string(), worst)]
}

/// Every layer case as `(label, worst relative error)`.
pub fn all() -> Vec<(String, f64)> {
    [conv2d(), conv_transpose2d(), batchnorm(), activations(), weighted_mse()].concat()
}
