//! `⟨conv(x), y⟩ = ⟨x, conv_transpose(y)⟩` for the same kernel, stride and
//! padding, over random geometries.

use graspmap::tensor::{conv_transpose2d_forward, conv2d_forward, conv2d_output_size};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn leftover(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    let out = conv2d_output_size(size, k, stride, pad).unwrap();
    size + 2 * pad - ((out - 1) * stride + k)
}

/// Largest relative violation of the adjoint identity over `count` seeds.
pub fn worst_violation(count: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..count {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let k = 2 * r.random_range(0..5) + 1;
        let stride = r.random_range(1..4);
        let pad = r.random_range(0..=k / 2);
        let h = r.random_range(k..k + 12);
        // The transpose takes one output padding for both axes.
        let mut w = r.random_range(k..k + 12);
        while leftover(w, k, stride, pad) != leftover(h, k, stride, pad) {
            w += 1;
        }
        let (n, cin, cout) = (r.random_range(1..3), r.random_range(1..4), r.random_range(1..4));
        let x = super::random_tensor(&mut r, &[n, cin, h, w], 1.0);
        let weight = super::random_tensor(&mut r, &[cout, cin, k, k], 1.0);
        let ax = conv2d_forward(&x, &weight, None, stride, pad).unwrap();
        let y = super::random_tensor(&mut r, ax.shape(), 1.0);
        // A Cout×Cin kernel read as the transpose's Cin×Cout layout is the adjoint.
        let aty = conv_transpose2d_forward(&y, &weight, None, stride, pad, leftover(h, k, stride, pad)).unwrap();
        let (lhs, rhs) = (ax.dot(&y).unwrap(), x.dot(&aty).unwrap());
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
    }
    worst
}
