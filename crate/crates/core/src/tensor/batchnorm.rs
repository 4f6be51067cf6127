use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Whether batch normalization uses batch statistics or running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean / variance of one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Real> BatchNormStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: Tensor::zeros([channels]),
            var: Tensor::full([channels], T::one()),
        }
    }

    /// Exponential moving update from one batch's moments.
    pub fn update(&mut self, batch: &BatchMoments<T>, momentum: T) {
        let keep = T::one() - momentum;
        for (r, &b) in self.mean.data_mut().iter_mut().zip(&batch.mean) {
            *r = keep * *r + momentum * b;
        }
        for (r, &b) in self.var.data_mut().iter_mut().zip(&batch.var_unbiased) {
            *r = keep * *r + momentum * b;
        }
    }
}

/// Per-channel batch mean and unbiased variance seen in a training forward.
#[derive(Clone, Debug)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub var_unbiased: Vec<T>,
}

/// Values saved by the forward pass for [`batchnorm2d_backward`].
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check_vec<T: Real>(v: &Tensor<T>, channels: usize, dim: &'static str) -> Result<()> {
    if v.len() != channels {
        return Err(Error::ShapeMismatch {
            op: "batchnorm2d",
            dim,
            expected: channels,
            found: v.len(),
        });
    }
    Ok(())
}

/// Batch normalization without touching running statistics.
///
/// In `Train` mode the returned moments can be folded into the running
/// statistics with [`BatchNormStats::update`].
pub fn batchnorm2d_forward<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &BatchNormStats<T>,
    mode: Mode,
    epsilon: T,
) -> Result<(Tensor<T>, BatchNormCache<T>, Option<BatchMoments<T>>)> {
    let [n, c, h, w] = input.dims4("batchnorm2d")?;
    check_vec(gamma, c, "gamma")?;
    check_vec(beta, c, "beta")?;
    check_vec(&running.mean, c, "running mean")?;
    check_vec(&running.var, c, "running variance")?;
    let count = n * h * w;
    if count == 0 {
        return Err(Error::invalid("batchnorm2d", "zero-size batch"));
    }
    let mut normalized = Tensor::zeros(input.shape().to_vec());
    let mut out = Tensor::zeros(input.shape().to_vec());
    let mut inv_std = Vec::with_capacity(c);
    let mut moments = BatchMoments {
        mean: Vec::with_capacity(c),
        var_unbiased: Vec::with_capacity(c),
    };
    for ci in 0..c {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0f64;
                for ni in 0..n {
                    sum += input.plane(ni, ci).iter().map(|v| v.to_f64_lossy()).sum::<f64>();
                }
                let mean = sum / count as f64;
                let mut sq = 0.0f64;
                for ni in 0..n {
                    sq += input
                        .plane(ni, ci)
                        .iter()
                        .map(|v| (v.to_f64_lossy() - mean).powi(2))
                        .sum::<f64>();
                }
                let var = sq / count as f64;
                let unbiased = if count > 1 { sq / (count - 1) as f64 } else { var };
                moments.mean.push(T::from_f64_lossy(mean));
                moments.var_unbiased.push(T::from_f64_lossy(unbiased));
                (mean, var)
            }
            Mode::Eval => (
                running.mean.data()[ci].to_f64_lossy(),
                running.var.data()[ci].to_f64_lossy(),
            ),
        };
        let istd = 1.0 / (var + epsilon.to_f64_lossy()).sqrt();
        let (g, b) = (gamma.data()[ci], beta.data()[ci]);
        let mean_t = T::from_f64_lossy(mean);
        let istd_t = T::from_f64_lossy(istd);
        for ni in 0..n {
            let src = input.plane(ni, ci);
            let off = input.offset4(ni, ci, 0, 0);
            let len = src.len();
            let norm = &mut normalized.data_mut()[off..off + len];
            for (d, &s) in norm.iter_mut().zip(src) {
                *d = (s - mean_t) * istd_t;
            }
            let dst = &mut out.data_mut()[off..off + len];
            for (d, &x) in dst.iter_mut().zip(&normalized.data()[off..off + len]) {
                *d = g * x + b;
            }
        }
        inv_std.push(istd_t);
    }
    let moments = (mode == Mode::Train).then_some(moments);
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            mode,
        },
        moments,
    ))
}

/// Batch normalization; in `Train` mode the running statistics are updated
/// with the given momentum.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm2d<T: Real>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut BatchNormStats<T>,
    mode: Mode,
    momentum: T,
    epsilon: T,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (out, cache, moments) = batchnorm2d_forward(input, gamma, beta, running, mode, epsilon)?;
    if let Some(m) = moments {
        running.update(&m, momentum);
    }
    Ok((out, cache))
}

pub fn batchnorm2d_backward<T: Real>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    grad_out.ensure_shape("batchnorm2d_backward", cache.normalized.shape())?;
    let [n, c, h, w] = grad_out.dims4("batchnorm2d_backward")?;
    check_vec(gamma, c, "gamma")?;
    let count = (n * h * w) as f64;
    let mut grad_in = Tensor::zeros(grad_out.shape().to_vec());
    let mut grad_gamma = Tensor::zeros([c]);
    let mut grad_beta = Tensor::zeros([c]);
    for ci in 0..c {
        let mut sum_dy = 0.0f64;
        let mut sum_dy_x = 0.0f64;
        for ni in 0..n {
            for (&dy, &x) in grad_out.plane(ni, ci).iter().zip(cache.normalized.plane(ni, ci)) {
                sum_dy += dy.to_f64_lossy();
                sum_dy_x += (dy * x).to_f64_lossy();
            }
        }
        grad_gamma.data_mut()[ci] = T::from_f64_lossy(sum_dy_x);
        grad_beta.data_mut()[ci] = T::from_f64_lossy(sum_dy);
        let scale = gamma.data()[ci] * cache.inv_std[ci];
        let mean_dy = T::from_f64_lossy(sum_dy / count);
        let mean_dy_x = T::from_f64_lossy(sum_dy_x / count);
        for ni in 0..n {
            let off = grad_out.offset4(ni, ci, 0, 0);
            let len = h * w;
            let dys = &grad_out.data()[off..off + len];
            let xs = &cache.normalized.data()[off..off + len];
            let dst = &mut grad_in.data_mut()[off..off + len];
            match cache.mode {
                Mode::Train => {
                    for ((d, &dy), &x) in dst.iter_mut().zip(dys).zip(xs) {
                        *d = scale * (dy - mean_dy - x * mean_dy_x);
                    }
                }
                Mode::Eval => {
                    for (d, &dy) in dst.iter_mut().zip(dys) {
                        *d = scale * dy;
                    }
                }
            }
        }
    }
    Ok(BatchNormGrads {
        input: grad_in,
        gamma: grad_gamma,
        beta: grad_beta,
    })
}
