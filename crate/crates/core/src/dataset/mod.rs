//! Depth images, labelled samples and everything that produces them:
//! Cornell-format parsing, inpainting, augmentation, fold splitting, the
//! synthetic generator and the on-disk dataset layout.

mod augment;
mod cornell;
mod folds;
mod inpaint;
pub mod io;
mod synth;

pub use augment::{AugmentParams, MAX_ROTATION, MIN_ZOOM, augment_sample};
pub use cornell::{ParsedRects, parse_ascii_pcd_to_depth, parse_cornell_rects};
pub use folds::{Fold, SplitMode, split_folds};
pub use inpaint::inpaint_depth;
pub use synth::{Bar, SyntheticSpec, make_synthetic, make_synthetic_scenes, synthesize};

use crate::grasp::GraspRectangle;
use crate::tensor::Real;

/// Depth field in metres with a per-pixel validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub height: usize,
    pub width: usize,
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
}

impl DepthImage {
    /// All-invalid image.
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            depth: vec![0.0; height * width],
            valid: vec![false; height * width],
        }
    }

    /// Image from raw depths; non-finite and non-positive values are invalid.
    pub fn from_depths(height: usize, width: usize, depth: Vec<f32>) -> Self {
        assert_eq!(depth.len(), height * width, "depth buffer size");
        let valid = depth.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self { height, width, depth, valid }
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// Network input: depth minus its mean over valid pixels, clamped to
    /// `[−1, 1]`. Invalid pixels map to 0.
    pub fn normalized<T: Real>(&self) -> Vec<T> {
        let (sum, n) = self
            .depth
            .iter()
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .fold((0.0f64, 0usize), |(s, n), (d, _)| (s + *d as f64, n + 1));
        let mean = if n == 0 { 0.0 } else { sum / n as f64 };
        self.depth
            .iter()
            .zip(&self.valid)
            .map(|(&d, &ok)| {
                let x = if ok { (d as f64 - mean).clamp(-1.0, 1.0) } else { 0.0 };
                T::from_f64_lossy(x)
            })
            .collect()
    }
}

/// One labelled depth image. `object_id` groups images of the same physical
/// object for object-wise splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub object_id: String,
    pub depth: DepthImage,
    pub rects: Vec<GraspRectangle>,
}
