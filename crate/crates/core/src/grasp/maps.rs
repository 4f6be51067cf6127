use serde::{Deserialize, Serialize};

use super::GraspRectangle;
use crate::error::{Error, Result};
use crate::tensor::{MapPlanes, Real, Tensor};

/// Weights of the quality, angle and width terms of the training loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_q: f64,
    pub lambda_phi: f64,
    pub lambda_w: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_q: 5.0,
            lambda_phi: 3.0,
            lambda_w: 4.0,
        }
    }
}

/// Width normalizer for a square input: 150 px at 400×400, scaled linearly.
pub fn default_width_max(input_size: usize) -> f64 {
    150.0 * input_size as f64 / 400.0
}

/// Minimum pixel distance between grasps picked by top-k decoding: 25 px at
/// 400×400, scaled linearly.
pub fn default_min_separation(input_size: usize) -> f64 {
    input_size as f64 / 16.0
}

/// Per-pixel grasp maps over an `height × width` image.
///
/// The angle is stored as `cos 2φ` / `sin 2φ` so that it is continuous across
/// the ±π/2 wrap; the width plane holds `width_px / width_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraspMapSet {
    pub height: usize,
    pub width: usize,
    pub quality: Vec<f32>,
    pub angle_cos: Vec<f32>,
    pub angle_sin: Vec<f32>,
    pub grasp_width: Vec<f32>,
}

impl GraspMapSet {
    pub fn zeros(height: usize, width: usize) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            quality: vec![0.0; n],
            angle_cos: vec![0.0; n],
            angle_sin: vec![0.0; n],
            grasp_width: vec![0.0; n],
        }
    }

    /// Ground-truth maps for a list of rectangles, rasterized in order.
    pub fn from_rects(height: usize, width: usize, rects: &[GraspRectangle], width_max: f64) -> Self {
        let mut maps = Self::zeros(height, width);
        for r in rects {
            maps.rasterize_rect(r, width_max);
        }
        maps
    }

    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    /// Stamps the rectangle's centre-third mask into the maps. Pixels outside
    /// the mask are untouched; later rectangles overwrite earlier ones.
    pub fn rasterize_rect(&mut self, rect: &GraspRectangle, width_max: f64) {
        let two_theta = 2.0 * rect.theta;
        let (c2, s2) = (two_theta.cos() as f32, two_theta.sin() as f32);
        let w = (rect.width / width_max).clamp(0.0, 1.0) as f32;
        for idx in center_third_mask(rect, self.height, self.width) {
            self.quality[idx] = 1.0;
            self.angle_cos[idx] = c2;
            self.angle_sin[idx] = s2;
            self.grasp_width[idx] = w;
        }
    }

    /// Stacks maps of equal size into `N×1×H×W` planes.
    pub fn stack<T: Real>(maps: &[GraspMapSet]) -> Result<MapPlanes<T>> {
        let first = maps.first().ok_or_else(|| Error::invalid("stack", "no maps"))?;
        let (h, w) = (first.height, first.width);
        let mut out = MapPlanes::zeros(maps.len(), h, w);
        for (n, m) in maps.iter().enumerate() {
            if m.height != h || m.width != w {
                return Err(Error::ShapeMismatch {
                    op: "stack",
                    dim: if m.height != h { "height" } else { "width" },
                    expected: if m.height != h { h } else { w },
                    found: if m.height != h { m.height } else { m.width },
                });
            }
            let src = [&m.quality, &m.angle_cos, &m.angle_sin, &m.grasp_width];
            for (dst, src) in out.planes_mut().into_iter().zip(src) {
                for (d, &s) in dst.plane_mut(n, 0).iter_mut().zip(src) {
                    *d = T::from_f64_lossy(s as f64);
                }
            }
        }
        Ok(out)
    }

    /// Extracts sample `n` of a network output.
    pub fn from_planes<T: Real>(planes: &MapPlanes<T>, n: usize) -> Result<Self> {
        let [batch, _, h, w] = planes.quality.dims4("from_planes")?;
        if n >= batch {
            return Err(Error::invalid("from_planes", format!("sample {n} of a batch of {batch}")));
        }
        let take = |t: &Tensor<T>| t.plane(n, 0).iter().map(|v| v.to_f64_lossy() as f32).collect();
        Ok(Self {
            height: h,
            width: w,
            quality: take(&planes.quality),
            angle_cos: take(&planes.cos),
            angle_sin: take(&planes.sin),
            grasp_width: take(&planes.width),
        })
    }
}

/// Row-major indices of pixels inside the rectangle's centre-third mask: the
/// band of the same centre and angle with full width and a third of the
/// height. Pixel `(u, v)` sits at point `(u, v)`; the band is half-open,
/// `−w/2 ≤ a < w/2` along the axis and `−h/6 ≤ b < h/6` across it.
pub fn center_third_mask(rect: &GraspRectangle, height: usize, width: usize) -> Vec<usize> {
    if height == 0 || width == 0 {
        return Vec::new();
    }
    let ((ax, ay), (nx, ny)) = rect.frame();
    let (half_a, half_b) = (rect.width / 2.0, rect.height / 6.0);
    // Bounding box of the band, clipped to the image.
    let ext_x = half_a * ax.abs() + half_b * nx.abs();
    let ext_y = half_a * ay.abs() + half_b * ny.abs();
    let clip = |lo: f64, hi: f64, n: usize| -> Option<(usize, usize)> {
        let lo = lo.floor().max(0.0);
        let hi = hi.ceil().min(n as f64 - 1.0);
        (lo <= hi).then_some((lo as usize, hi as usize))
    };
    let (Some((u0, u1)), Some((v0, v1))) = (
        clip(rect.center_x - ext_x, rect.center_x + ext_x, width),
        clip(rect.center_y - ext_y, rect.center_y + ext_y, height),
    ) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for v in v0..=v1 {
        let dy = v as f64 - rect.center_y;
        for u in u0..=u1 {
            let dx = u as f64 - rect.center_x;
            let a = dx * ax + dy * ay;
            let b = dx * nx + dy * ny;
            if (-half_a..half_a).contains(&a) && (-half_b..half_b).contains(&b) {
                out.push(v * width + u);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use super::*;
    use crate::grasp::{clip_convex, polygon_area};
    use proptest::prelude::*;

    #[test]
    fn axis_aligned_strip() {
        let r = GraspRectangle::new(50.0, 50.0, 0.0, 30.0, 30.0).unwrap();
        let maps = GraspMapSet::from_rects(100, 100, &[r], 150.0);
        // Brute-force oracle: the strip is x ∈ [35, 65), y ∈ [45, 55).
        for v in 0..100 {
            for u in 0..100 {
                let inside = (35..65).contains(&u) && (45..55).contains(&v);
                let q = maps.quality[maps.index(u, v)];
                assert_eq!(q, if inside { 1.0 } else { 0.0 }, "pixel ({u},{v})");
            }
        }
        assert_eq!(maps.quality.iter().filter(|&&q| q == 1.0).count(), 300);
        assert!(maps.grasp_width.iter().all(|&w| w == 0.0 || w == 0.2));
    }

    #[test]
    fn no_rects_leaves_maps_empty() {
        let maps = GraspMapSet::from_rects(20, 30, &[], 150.0);
        assert_eq!(maps, GraspMapSet::zeros(20, 30));
    }

    #[test]
    fn diagonal_rect_fills_constant_angle() {
        let r = GraspRectangle::new(40.0, 40.0, FRAC_PI_4, 24.0, 40.0).unwrap();
        let maps = GraspMapSet::from_rects(80, 80, &[r], 150.0);
        let mut hits = 0;
        for i in 0..maps.quality.len() {
            if maps.quality[i] == 1.0 {
                hits += 1;
                assert!(maps.angle_cos[i].abs() < 1e-7);
                assert_eq!(maps.angle_sin[i], 1.0);
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn width_is_clamped() {
        let r = GraspRectangle::new(10.0, 10.0, 0.3, 9.0, 300.0).unwrap();
        let maps = GraspMapSet::from_rects(20, 20, &[r], 150.0);
        assert!(maps.grasp_width.iter().all(|&w| w == 0.0 || w == 1.0));
    }

    #[test]
    fn later_rect_overwrites_earlier() {
        let a = GraspRectangle::new(10.0, 10.0, 0.0, 12.0, 12.0).unwrap();
        let b = GraspRectangle::new(10.0, 10.0, 0.5, 12.0, 6.0).unwrap();
        let maps = GraspMapSet::from_rects(20, 20, &[a, b], 12.0);
        let i = maps.index(10, 10);
        assert_eq!(maps.grasp_width[i], 0.5);
        assert_eq!(maps.angle_cos[i], (1.0f64).cos() as f32);
    }

    #[test]
    fn stack_and_extract_round_trip() {
        let r = GraspRectangle::new(8.0, 6.0, 0.2, 9.0, 10.0).unwrap();
        let m = GraspMapSet::from_rects(12, 16, &[r], 20.0);
        let planes = GraspMapSet::stack::<f32>(&[GraspMapSet::zeros(12, 16), m.clone()]).unwrap();
        assert_eq!(planes.quality.shape(), &[2, 1, 12, 16]);
        assert_eq!(GraspMapSet::from_planes(&planes, 1).unwrap(), m);
        assert!(GraspMapSet::stack::<f32>(&[m, GraspMapSet::zeros(3, 3)]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn mask_area_tracks_clipped_band_area(cx in -20.0f64..120.0, cy in -20.0f64..120.0, theta in -1.6f64..1.6,
                                              h in 3.0f64..90.0, w in 3.0f64..90.0) {
            let r = GraspRectangle::new(cx, cy, theta, h, w).unwrap();
            let count = center_third_mask(&r, 100, 100).len() as f64;
            let band = GraspRectangle::new(cx, cy, theta, h / 3.0, w).unwrap();
            // Pixel (u, v) covers [u−½, u+½) × [v−½, v+½); the image spans that.
            let image = [(-0.5, -0.5), (99.5, -0.5), (99.5, 99.5), (-0.5, 99.5)];
            let area = polygon_area(&clip_convex(&band.corners(), &image));
            let row = w.max(h / 3.0) + 1.0;
            prop_assert!((count - area).abs() <= row, "count {} area {} row {}", count, area, row);
        }

        #[test]
        fn rasterized_angle_planes_are_unit(theta in -1.6f64..1.6) {
            let r = GraspRectangle::new(30.0, 30.0, theta, 18.0, 25.0).unwrap();
            let maps = GraspMapSet::from_rects(60, 60, &[r], 50.0);
            for i in 0..maps.quality.len() {
                if maps.quality[i] > 0.0 {
                    let n = maps.angle_cos[i] as f64 * maps.angle_cos[i] as f64
                        + maps.angle_sin[i] as f64 * maps.angle_sin[i] as f64;
                    prop_assert!((n - 1.0).abs() < 1e-6);
                }
            }
        }
    }
}
