use std::f64::consts::PI;

use super::GraspRectangle;
use crate::error::{Error, Result};

/// Maximum angle error of a correct grasp: 30°.
pub const ANGLE_TOLERANCE: f64 = PI / 6.0;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.25;

/// Distance between two grasp angles modulo π, in `[0, π/2]`.
pub fn angle_distance(phi_a: f64, phi_b: f64) -> f64 {
    let d = (phi_a - phi_b).rem_euclid(PI);
    d.min(PI - d)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Shoelace area (absolute).
pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    signed_area(poly).abs()
}

fn signed_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum();
    twice / 2.0
}

/// Sutherland–Hodgman: clips `subject` against the convex polygon `clip`.
/// Either winding order is accepted for `clip`.
pub fn clip_convex(subject: &[(f64, f64)], clip: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let orient = if signed_area(clip) < 0.0 { -1.0 } else { 1.0 };
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let (cs, ce) = (clip[i], clip[(i + 1) % clip.len()]);
        let side = |p| orient * cross(cs, ce, p);
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().expect("non-empty");
        let mut prev_side = side(prev);
        for &cur in &input {
            let cur_side = side(cur);
            if cur_side >= 0.0 {
                if prev_side < 0.0 {
                    output.push(intersect(prev, cur, prev_side, cur_side));
                }
                output.push(cur);
            } else if prev_side >= 0.0 {
                output.push(intersect(prev, cur, prev_side, cur_side));
            }
            prev = cur;
            prev_side = cur_side;
        }
    }
    output
}

fn intersect(s: (f64, f64), e: (f64, f64), ds: f64, de: f64) -> (f64, f64) {
    let t = ds / (ds - de);
    (s.0 + t * (e.0 - s.0), s.1 + t * (e.1 - s.1))
}

/// Intersection over union of two oriented rectangles, by exact polygon clipping.
pub fn jaccard(a: &GraspRectangle, b: &GraspRectangle) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = polygon_area(&clip_convex(&a.corners(), &b.corners()));
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Rectangle metric: the prediction is correct if some ground-truth rectangle
/// is within 30° of it and overlaps it with Jaccard index above the threshold.
pub fn rectangle_metric_match(
    pred: &GraspRectangle,
    ground_truth: &[GraspRectangle],
    jaccard_threshold: f64,
) -> Result<bool> {
    if ground_truth.is_empty() {
        return Err(Error::invalid("rectangle_metric_match", "empty ground truth"));
    }
    Ok(ground_truth.iter().any(|g| {
        angle_distance(pred.theta, g.theta) < ANGLE_TOLERANCE && jaccard(pred, g) > jaccard_threshold
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn rect(cx: f64, cy: f64, theta: f64, h: f64, w: f64) -> GraspRectangle {
        GraspRectangle::new(cx, cy, theta, h, w).unwrap()
    }

    #[test]
    fn angle_distance_wraps() {
        assert_eq!(angle_distance(0.1, 0.1), 0.0);
        assert!((angle_distance(deg(87.0), deg(-88.0)) - deg(5.0)).abs() < 1e-12);
        assert!((angle_distance(deg(10.0), deg(35.0)) - deg(25.0)).abs() < 1e-12);
        assert!(angle_distance(0.3, 0.3 + PI) < 1e-12);
    }

    #[test]
    fn jaccard_basic_cases() {
        let a = rect(0.0, 0.0, 0.0, 10.0, 10.0);
        assert_eq!(jaccard(&a, &a), 1.0);
        assert_eq!(jaccard(&a, &rect(100.0, 0.0, 0.3, 10.0, 10.0)), 0.0);
        let b = rect(5.0, 0.0, 0.0, 10.0, 10.0);
        assert!((jaccard(&a, &b) - 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn rotated_square_inside_itself() {
        // A square and the same square rotated by 90° describe the same region.
        let a = rect(3.0, 4.0, 0.2, 8.0, 8.0);
        let b = rect(3.0, 4.0, 0.2 + PI / 2.0, 8.0, 8.0);
        assert!((jaccard(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_conditions() {
        let gt = rect(50.0, 50.0, 0.0, 20.0, 40.0);
        assert!(rectangle_metric_match(&gt, &[gt], 0.25).unwrap());
        let rotated = rect(50.0, 50.0, deg(45.0), 20.0, 40.0);
        assert!(!rectangle_metric_match(&rotated, &[gt], 0.25).unwrap());
        assert!(rectangle_metric_match(&gt, &[], 0.25).is_err());
    }

    #[test]
    fn stricter_threshold_rejects_marginal_overlap() {
        // Same-size axis-aligned boxes shifted along x: J = (w−d)/(w+d).
        // d = 22.5 on w = 40 gives J = 17.5/62.5 = 0.28.
        let gt = rect(50.0, 50.0, 0.0, 20.0, 40.0);
        let pred = rect(72.5, 50.0, 0.0, 20.0, 40.0);
        assert!((jaccard(&pred, &gt) - 0.28).abs() < 1e-12);
        assert!(rectangle_metric_match(&pred, &[gt], 0.25).unwrap());
        assert!(!rectangle_metric_match(&pred, &[gt], 0.30).unwrap());
    }

    proptest! {
        #[test]
        fn jaccard_symmetric_and_bounded(ax in 0.0f64..60.0, ay in 0.0f64..60.0, at in -1.6f64..1.6, ah in 1.0f64..40.0, aw in 1.0f64..40.0,
                                         bx in 0.0f64..60.0, by in 0.0f64..60.0, bt in -1.6f64..1.6, bh in 1.0f64..40.0, bw in 1.0f64..40.0) {
            let a = rect(ax, ay, at, ah, aw);
            let b = rect(bx, by, bt, bh, bw);
            let j = jaccard(&a, &b);
            prop_assert!((0.0..=1.0).contains(&j));
            prop_assert!((j - jaccard(&b, &a)).abs() < 1e-9);
        }

        #[test]
        fn angle_distance_is_pseudometric(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            prop_assert_eq!(angle_distance(a, a), 0.0);
            prop_assert!((angle_distance(a, b) - angle_distance(b, a)).abs() < 1e-12);
            prop_assert!(angle_distance(a, a + PI) < 1e-12);
            prop_assert!((0.0..=PI / 2.0).contains(&angle_distance(a, b)));
        }
    }
}
