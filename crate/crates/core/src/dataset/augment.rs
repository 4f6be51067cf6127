use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DepthImage, Sample};
use crate::error::{Error, Result};
use crate::grasp::rect_from_corners;

/// Smallest zoom factor drawn during augmentation.
pub const MIN_ZOOM: f64 = 0.8;
/// Largest rotation magnitude drawn during augmentation: 20°.
pub const MAX_ROTATION: f64 = 20.0 * std::f64::consts::PI / 180.0;

const RANGE_SLACK: f64 = 1e-12;

/// One affine augmentation: rotate about the image centre by `rotation`,
/// scale by `zoom`, then take an `out_size` square whose centre sits
/// `crop_offset` pixels from the transformed image centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub zoom: f64,
    pub rotation: f64,
    pub crop_offset: (f64, f64),
    /// Seed the parameters were drawn from (0 for hand-built parameters).
    pub seed: u64,
}

impl AugmentParams {
    /// Centred crop, no rotation or zoom.
    pub fn identity() -> Self {
        Self {
            zoom: 1.0,
            rotation: 0.0,
            crop_offset: (0.0, 0.0),
            seed: 0,
        }
    }

    /// Draws zoom in `[0.8, 1]`, rotation in `[−20°, 20°]` and a crop offset
    /// that keeps the window inside the zoomed image where possible (plus a
    /// 5% jitter).
    pub fn draw(seed: u64, source_h: usize, source_w: usize, out_size: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zoom = rng.random_range(MIN_ZOOM..=1.0);
        let rotation = rng.random_range(-MAX_ROTATION..=MAX_ROTATION);
        let jitter = 0.05 * out_size as f64;
        let slack = |extent: usize| ((zoom * extent as f64 - out_size as f64) / 2.0).max(0.0) + jitter;
        let (sx, sy) = (slack(source_w), slack(source_h));
        let crop_offset = (rng.random_range(-sx..=sx), rng.random_range(-sy..=sy));
        Self {
            zoom,
            rotation,
            crop_offset,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_ZOOM - RANGE_SLACK..=1.0 + RANGE_SLACK).contains(&self.zoom) {
            return Err(Error::invalid("augment_sample", format!("zoom {} outside [0.8, 1]", self.zoom)));
        }
        if self.rotation.abs() > MAX_ROTATION + RANGE_SLACK || !self.rotation.is_finite() {
            return Err(Error::invalid(
                "augment_sample",
                format!("rotation {:.3}° outside ±20°", self.rotation.to_degrees()),
            ));
        }
        if !(self.crop_offset.0.is_finite() && self.crop_offset.1.is_finite()) {
            return Err(Error::invalid("augment_sample", "non-finite crop offset"));
        }
        Ok(())
    }
}

struct Affine {
    zoom: f64,
    cos: f64,
    sin: f64,
    src_center: (f64, f64),
    out_center: (f64, f64),
}

impl Affine {
    fn new(p: &AugmentParams, h: usize, w: usize, out: usize) -> Self {
        let (sin, cos) = p.rotation.sin_cos();
        Self {
            zoom: p.zoom,
            cos,
            sin,
            src_center: (w as f64 / 2.0, h as f64 / 2.0),
            out_center: (out as f64 / 2.0 - p.crop_offset.0, out as f64 / 2.0 - p.crop_offset.1),
        }
    }

    fn forward(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (dx, dy) = (x - self.src_center.0, y - self.src_center.1);
        (
            self.zoom * (self.cos * dx - self.sin * dy) + self.out_center.0,
            self.zoom * (self.sin * dx + self.cos * dy) + self.out_center.1,
        )
    }

    fn inverse(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (dx, dy) = ((x - self.out_center.0) / self.zoom, (y - self.out_center.1) / self.zoom);
        (
            self.cos * dx + self.sin * dy + self.src_center.0,
            -self.sin * dx + self.cos * dy + self.src_center.1,
        )
    }
}

/// Applies one augmentation to a sample, producing an `out_size` square.
///
/// Depth is resampled with nearest-neighbour lookups (window parts outside
/// the source replicate the border). Rectangle corners go through the same
/// map and are re-fitted; rectangles whose centre leaves the crop are
/// dropped, and a sample left with no rectangle is an error.
pub fn augment_sample(s: &Sample, p: &AugmentParams, out_size: usize) -> Result<Sample> {
    p.validate()?;
    let (h, w) = (s.depth.height, s.depth.width);
    if out_size == 0 || out_size > h.min(w) {
        return Err(Error::invalid(
            "augment_sample",
            format!("output size {out_size} does not fit a {h}x{w} image"),
        ));
    }
    let map = Affine::new(p, h, w, out_size);
    let mut depth = DepthImage::empty(out_size, out_size);
    for v in 0..out_size {
        for u in 0..out_size {
            let (x, y) = map.inverse((u as f64, v as f64));
            let sx = (x.round().max(0.0) as usize).min(w - 1);
            let sy = (y.round().max(0.0) as usize).min(h - 1);
            let (src, dst) = (s.depth.index(sx, sy), v * out_size + u);
            depth.depth[dst] = s.depth.depth[src];
            depth.valid[dst] = s.depth.valid[src];
        }
    }
    let limit = out_size as f64 - 1.0;
    let mut rects = Vec::with_capacity(s.rects.len());
    for r in &s.rects {
        let c = r.corners();
        let moved = rect_from_corners(&[map.forward(c[0]), map.forward(c[1]), map.forward(c[2]), map.forward(c[3])])?;
        if (0.0..=limit).contains(&moved.center_x) && (0.0..=limit).contains(&moved.center_y) {
            rects.push(moved);
        }
    }
    if rects.is_empty() && !s.rects.is_empty() {
        return Err(Error::invalid("augment_sample", format!("every rectangle of `{}` left the crop", s.id)));
    }
    Ok(Sample {
        id: s.id.clone(),
        object_id: s.object_id.clone(),
        depth,
        rects,
    })
}
