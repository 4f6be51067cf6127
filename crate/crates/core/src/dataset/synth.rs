use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DepthImage, Sample};
use crate::error::{Error, Result};
use crate::grasp::{GraspRectangle, fold_angle};

pub const BACKGROUND_DEPTH: f32 = 0.70;
pub const BAR_DEPTH: f32 = 0.60;

/// A raised rectangular bar lying on the background plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bar {
    pub center_x: f64,
    pub center_y: f64,
    /// Orientation of the long axis.
    pub orientation: f64,
    pub length: f64,
    pub thickness: f64,
}

impl Bar {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.orientation.sin_cos();
        let (dx, dy) = (x - self.center_x, y - self.center_y);
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() < self.length / 2.0 && across.abs() < self.thickness / 2.0
    }

    fn radius(&self) -> f64 {
        (self.length / 2.0).hypot(self.thickness / 2.0)
    }

    /// Ground-truth grasps: perpendicular to the bar, gripper width
    /// `thickness + 0.06·size`, jaw height half the width, centres every
    /// `thickness / 2` along the middle half of the bar.
    pub fn grasps(&self, size: usize) -> Vec<GraspRectangle> {
        let width = self.thickness + 0.06 * size as f64;
        let theta = fold_angle(self.orientation + FRAC_PI_2);
        let (s, c) = self.orientation.sin_cos();
        let step = self.thickness / 2.0;
        let mut out = Vec::new();
        let mut t = -self.length / 4.0;
        while t <= self.length / 4.0 + 1e-9 {
            out.push(
                GraspRectangle::new(self.center_x + t * c, self.center_y + t * s, theta, width / 2.0, width)
                    .expect("positive extents"),
            );
            t += step;
        }
        out
    }
}

/// Shape of a synthetic dataset. Lengths and thicknesses are fractions of
/// the image size.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub size: usize,
    pub bars: usize,
    pub length: (f64, f64),
    pub thickness: (f64, f64),
}

impl SyntheticSpec {
    /// One bar per image: length `[0.4, 0.8]·size`, thickness `[0.08, 0.2]·size`.
    pub fn single_bar(size: usize) -> Self {
        Self {
            size,
            bars: 1,
            length: (0.4, 0.8),
            thickness: (0.08, 0.2),
        }
    }

    /// Several shorter, thinner bars that do not overlap.
    pub fn multi_bar(size: usize, bars: usize) -> Self {
        Self {
            size,
            bars,
            length: (0.3, 0.42),
            thickness: (0.08, 0.14),
        }
    }
}

fn draw_bar(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Bar {
    let size = spec.size as f64;
    let length = rng.random_range(spec.length.0..=spec.length.1) * size;
    let thickness = rng.random_range(spec.thickness.0..=spec.thickness.1) * size;
    // Uniform on (−π/2, π/2].
    let orientation = FRAC_PI_2 - rng.random_range(0.0..PI);
    let r = (length / 2.0).hypot(thickness / 2.0) + 2.0;
    let (lo, hi) = (r, (size - r).max(r));
    Bar {
        center_x: rng.random_range(lo..=hi),
        center_y: rng.random_range(lo..=hi),
        orientation,
        length,
        thickness,
    }
}

/// Generates `count` samples. Sample `i` depends only on `(seed, i)` and
/// `spec`, never on `count`.
pub fn synthesize(count: usize, spec: &SyntheticSpec, seed: u64) -> Result<Vec<Sample>> {
    if spec.size < 64 {
        return Err(Error::invalid("make_synthetic", format!("size {} below the minimum of 64", spec.size)));
    }
    if spec.bars == 0 {
        return Err(Error::invalid("make_synthetic", "at least one bar per image"));
    }
    let size = spec.size;
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let bars = place_bars(&mut rng, spec);
            let mut depth = vec![BACKGROUND_DEPTH; size * size];
            for v in 0..size {
                for u in 0..size {
                    if bars.iter().any(|b| b.contains(u as f64, v as f64)) {
                        depth[v * size + u] = BAR_DEPTH;
                    }
                }
            }
            let id = format!("synth-{seed}-{i:05}");
            Ok(Sample {
                object_id: id.clone(),
                id,
                depth: DepthImage::from_depths(size, size, depth),
                rects: bars.iter().flat_map(|b| b.grasps(size)).collect(),
            })
        })
        .collect()
}

fn place_bars(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Vec<Bar> {
    let gap = 0.06 * spec.size as f64;
    loop {
        let mut bars: Vec<Bar> = Vec::with_capacity(spec.bars);
        for _ in 0..200 {
            let b = draw_bar(rng, spec);
            let clear = bars.iter().all(|o| {
                (b.center_x - o.center_x).hypot(b.center_y - o.center_y) >= b.radius() + o.radius() + gap
            });
            if clear {
                bars.push(b);
                if bars.len() == spec.bars {
                    return bars;
                }
            }
        }
    }
}

/// `count` single-bar images of `size × size` pixels.
pub fn make_synthetic(count: usize, size: usize, seed: u64) -> Result<Vec<Sample>> {
    synthesize(count, &SyntheticSpec::single_bar(size), seed)
}

/// `count` images with `bars` non-overlapping bars each.
pub fn make_synthetic_scenes(count: usize, size: usize, bars: usize, seed: u64) -> Result<Vec<Sample>> {
    synthesize(count, &SyntheticSpec::multi_bar(size, bars), seed)
}
