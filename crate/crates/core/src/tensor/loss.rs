use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::grasp::LossWeights;

/// The four per-pixel output planes, each `N×1×H×W`: quality, `cos 2φ`,
/// `sin 2φ` and normalized width. Used for predictions, targets and their
/// gradients alike.
#[derive(Clone, Debug, PartialEq)]
pub struct MapPlanes<T> {
    pub quality: Tensor<T>,
    pub cos: Tensor<T>,
    pub sin: Tensor<T>,
    pub width: Tensor<T>,
}

impl<T: Real> MapPlanes<T> {
    pub fn zeros(n: usize, h: usize, w: usize) -> Self {
        Self {
            quality: Tensor::zeros([n, 1, h, w]),
            cos: Tensor::zeros([n, 1, h, w]),
            sin: Tensor::zeros([n, 1, h, w]),
            width: Tensor::zeros([n, 1, h, w]),
        }
    }

    pub fn planes(&self) -> [&Tensor<T>; 4] {
        [&self.quality, &self.cos, &self.sin, &self.width]
    }

    pub fn planes_mut(&mut self) -> [&mut Tensor<T>; 4] {
        [&mut self.quality, &mut self.cos, &mut self.sin, &mut self.width]
    }

    fn check(&self, op: &'static str) -> Result<[usize; 4]> {
        let dims = self.quality.dims4(op)?;
        if dims[1] != 1 {
            return Err(Error::ShapeMismatch { op, dim: "channels", expected: 1, found: dims[1] });
        }
        for p in [&self.cos, &self.sin, &self.width] {
            p.ensure_shape(op, &dims)?;
        }
        Ok(dims)
    }
}

/// Weighted squared error over every pixel of the four planes:
///
/// `L = 1/(2N) · [λq·Σ(q̂−q)² + λφ·Σ(ĉ−c)² + λφ·Σ(ŝ−s)² + λw·Σ(ŵ−w)²]`
///
/// Returns the loss and its exact gradient with respect to the predictions.
pub fn weighted_mse_loss<T: Real>(
    pred: &MapPlanes<T>,
    target: &MapPlanes<T>,
    weights: &LossWeights,
) -> Result<(T, MapPlanes<T>)> {
    const OP: &str = "weighted_mse_loss";
    let dims = pred.check(OP)?;
    target.check(OP)?;
    for t in target.planes() {
        t.ensure_shape(OP, &dims)?;
    }
    let n = dims[0];
    if n == 0 {
        return Err(Error::invalid(OP, "empty batch"));
    }
    let lambdas = [weights.lambda_q, weights.lambda_phi, weights.lambda_phi, weights.lambda_w];
    let mut grads = MapPlanes::zeros(dims[0], dims[2], dims[3]);
    let mut total = 0.0f64;
    for (((p, t), g), &lambda) in pred.planes().into_iter().zip(target.planes()).zip(grads.planes_mut()).zip(&lambdas) {
        let mut sum = 0.0f64;
        let scale = T::from_f64_lossy(lambda / n as f64);
        for ((&a, &b), d) in p.data().iter().zip(t.data()).zip(g.data_mut()) {
            let r = a - b;
            sum += r.to_f64_lossy().powi(2);
            *d = scale * r;
        }
        total += lambda * sum;
    }
    Ok((T::from_f64_lossy(total / (2.0 * n as f64)), grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planes(v: [f64; 4]) -> MapPlanes<f64> {
        MapPlanes {
            quality: Tensor::full([1, 1, 1, 1], v[0]),
            cos: Tensor::full([1, 1, 1, 1], v[1]),
            sin: Tensor::full([1, 1, 1, 1], v[2]),
            width: Tensor::full([1, 1, 1, 1], v[3]),
        }
    }

    #[test]
    fn equal_maps_have_zero_loss() {
        let p = planes([0.3, -0.2, 0.9, 0.5]);
        let (loss, g) = weighted_mse_loss(&p, &p, &LossWeights::default()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.planes().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn unit_quality_residual_costs_half_lambda_q() {
        let (loss, g) = weighted_mse_loss(&planes([1.0, 0.0, 0.0, 0.0]), &planes([0.0; 4]), &LossWeights::default()).unwrap();
        assert_eq!(loss, 2.5);
        assert_eq!(g.quality.data(), &[5.0]);
    }

    #[test]
    fn angle_weight_applies_to_both_planes() {
        let (loss, _) = weighted_mse_loss(&planes([0.0, 1.0, 1.0, 0.0]), &planes([0.0; 4]), &LossWeights::default()).unwrap();
        assert_eq!(loss, 3.0);
    }

    #[test]
    fn mismatched_target_is_rejected() {
        let p = planes([0.0; 4]);
        let mut t = planes([0.0; 4]);
        t.width = Tensor::zeros([1, 1, 2, 1]);
        assert!(matches!(
            weighted_mse_loss(&p, &t, &LossWeights::default()),
            Err(Error::ShapeMismatch { dim: "height", .. })
        ));
    }
}
