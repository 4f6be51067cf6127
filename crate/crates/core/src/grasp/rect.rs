use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Folds an angle into `(−π/2, π/2]`; grasps are symmetric under rotation by π.
pub fn fold_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 { t - PI } else { t }
}

/// Oriented grasp rectangle in image pixels (x right, y down).
///
/// `width` is the extent along the grasp axis at angle `theta` (the gripper
/// opening); `height` is the extent across it (the jaw size).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspRectangle {
    pub center_x: f64,
    pub center_y: f64,
    pub theta: f64,
    pub height: f64,
    pub width: f64,
}

impl GraspRectangle {
    pub fn new(center_x: f64, center_y: f64, theta: f64, height: f64, width: f64) -> Result<Self> {
        if ![center_x, center_y, theta, height, width].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRectangle("non-finite field".into()));
        }
        if height <= 0.0 || width <= 0.0 {
            return Err(Error::InvalidRectangle(format!(
                "extents must be positive (height {height}, width {width})"
            )));
        }
        Ok(Self {
            center_x,
            center_y,
            theta: fold_angle(theta),
            height,
            width,
        })
    }

    /// Unit vectors along (`axis`) and across (`normal`) the grasp.
    pub(crate) fn frame(&self) -> ((f64, f64), (f64, f64)) {
        let snap = |v: f64| if v.abs() < 1e-12 { 0.0 } else { v };
        let (s, c) = self.theta.sin_cos();
        let (s, c) = (snap(s), snap(c));
        ((c, s), (-s, c))
    }

    /// Corners in Cornell order: `P0→P1` runs along the grasp axis, `P1→P2`
    /// across it.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let ((ax, ay), (nx, ny)) = self.frame();
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        let at = |a: f64, b: f64| (self.center_x + a * ax + b * nx, self.center_y + a * ay + b * ny);
        [at(-hw, -hh), at(hw, -hh), at(hw, hh), at(-hw, hh)]
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> (f64, f64) {
        (self.center_x, self.center_y)
    }
}

/// Fits a rectangle to four ordered corners: the center is the corner mean,
/// the angle and width come from edge `P0→P1`, the height from `P1→P2`.
pub fn rect_from_corners(corners: &[(f64, f64); 4]) -> Result<GraspRectangle> {
    if !corners.iter().all(|(x, y)| x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidRectangle("non-finite corner".into()));
    }
    let cx = corners.iter().map(|p| p.0).sum::<f64>() / 4.0;
    let cy = corners.iter().map(|p| p.1).sum::<f64>() / 4.0;
    let (dx, dy) = (corners[1].0 - corners[0].0, corners[1].1 - corners[0].1);
    let width = dx.hypot(dy);
    let height = (corners[2].0 - corners[1].0).hypot(corners[2].1 - corners[1].1);
    if width == 0.0 || height == 0.0 {
        return Err(Error::InvalidRectangle("zero-length edge".into()));
    }
    GraspRectangle::new(cx, cy, dy.atan2(dx), height, width)
}

/// A grasp read off the maps at one pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelGrasp {
    /// Column.
    pub u: usize,
    /// Row.
    pub v: usize,
    pub phi: f64,
    pub width_px: f64,
    pub quality: f64,
}

/// Rectangle centred on the grasp pixel with `height = width·height_ratio`.
pub fn pixel_grasp_to_rectangle(g: &PixelGrasp, height_ratio: f64) -> Result<GraspRectangle> {
    GraspRectangle::new(g.u as f64, g.v as f64, g.phi, g.width_px * height_ratio, g.width_px)
}
