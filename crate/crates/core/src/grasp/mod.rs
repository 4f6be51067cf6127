//! Grasp representations and the conversions between them.
//!
//! A labelled grasp is an oriented rectangle. The network works with
//! per-pixel grasp maps instead; [`GraspMapSet::rasterize_rect`] stamps a
//! rectangle into the maps and the decoders turn maps back into
//! [`PixelGrasp`]s, which [`pixel_grasp_to_rectangle`] lifts to rectangles
//! for scoring with [`rectangle_metric_match`].

mod decode;
mod maps;
mod metric;
mod rect;

pub use decode::{decode_best_grasp, decode_top_k};
pub use maps::{GraspMapSet, LossWeights, center_third_mask, default_min_separation, default_width_max};
#[cfg(test)]
pub(crate) use maps::center_third_mask as center_third_mask_for_tests;
pub use metric::{
    ANGLE_TOLERANCE, DEFAULT_JACCARD_THRESHOLD, angle_distance, clip_convex, jaccard, polygon_area,
    rectangle_metric_match,
};
pub use rect::{GraspRectangle, PixelGrasp, fold_angle, pixel_grasp_to_rectangle, rect_from_corners};

/// Predicted-rectangle height as a fraction of the predicted gripper width.
pub const DEFAULT_HEIGHT_RATIO: f64 = 0.5;
