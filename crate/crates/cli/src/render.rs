//! PNG renderings of depth, grasp rectangles and grasp maps.

use graspmap::GraspRectangle;
use graspmap::dataset::DepthImage;
use graspmap::grasp::GraspMapSet;
use image::{Rgb, RgbImage};

const RECT_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
const INVALID_COLOR: Rgb<u8> = Rgb([0, 0, 64]);

/// Grey depth (near is bright) with every rectangle drawn in red; the plate
/// edges P1P2 and P3P0 are drawn two pixels thick.
pub fn overlay(depth: &DepthImage, rects: &[GraspRectangle]) -> RgbImage {
    let valid: Vec<f32> = depth
        .depth
        .iter()
        .zip(&depth.valid)
        .filter(|(_, v)| **v)
        .map(|(d, _)| *d)
        .collect();
    let lo = valid.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = valid.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::from_fn(depth.width as u32, depth.height as u32, |x, y| {
        let i = depth.index(x as usize, y as usize);
        if !depth.valid[i] {
            return INVALID_COLOR;
        }
        let g = (255.0 * (1.0 - (depth.depth[i] - lo) / span)).round() as u8;
        Rgb([g, g, g])
    });
    for r in rects {
        let c = r.corners();
        for k in 0..4 {
            let (a, b) = (c[k], c[(k + 1) % 4]);
            line(&mut img, a, b);
            if k % 2 == 1 {
                let (dx, dy) = (b.0 - a.0, b.1 - a.1);
                let len = dx.hypot(dy).max(1e-9);
                let (nx, ny) = (-dy / len, dx / len);
                line(&mut img, (a.0 + nx, a.1 + ny), (b.0 + nx, b.1 + ny));
            }
        }
    }
    img
}

/// Bresenham segment, clipped to the image.
fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64)) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (w, h) = (img.width() as i64, img.height() as i64);
    loop {
        if (0..w).contains(&x0) && (0..h).contains(&y0) {
            img.put_pixel(x0 as u32, y0 as u32, RECT_COLOR);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

/// Blue → green → red ramp over `t ∈ [0, 1]`.
fn false_color(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let r = (2.0 * t - 1.0).max(0.0);
    let b = (1.0 - 2.0 * t).max(0.0);
    let g = 1.0 - r - b;
    Rgb([(255.0 * r).round() as u8, (255.0 * g).round() as u8, (255.0 * b).round() as u8])
}

fn plane(maps: &GraspMapSet, f: impl Fn(usize) -> f64) -> RgbImage {
    RgbImage::from_fn(maps.width as u32, maps.height as u32, |x, y| {
        false_color(f(maps.index(x as usize, y as usize)))
    })
}

pub fn quality_map(maps: &GraspMapSet) -> RgbImage {
    plane(maps, |i| maps.quality[i] as f64)
}

/// Angle in (−π/2, π/2] mapped onto the ramp.
pub fn angle_map(maps: &GraspMapSet) -> RgbImage {
    plane(maps, |i| {
        let phi = 0.5 * (maps.angle_sin[i] as f64).atan2(maps.angle_cos[i] as f64);
        phi / std::f64::consts::PI + 0.5
    })
}

pub fn width_map(maps: &GraspMapSet) -> RgbImage {
    plane(maps, |i| maps.grasp_width[i] as f64)
}
