//! Pixel-wise robotic grasp detection.
//!
//! A depth image goes through an encoder-decoder convolutional network that
//! predicts, for every pixel, a grasp quality, a grasp angle (encoded as the
//! `cos 2φ` / `sin 2φ` pair) and a normalized gripper width. The crate
//! contains everything needed to train and score such a network on CPU:
//!
//! - [`tensor`]: dense tensors, the conv / transposed-conv / batch-norm /
//!   activation layers with hand-written backward passes, the weighted MSE
//!   loss and Adam.
//! - [`grasp`]: grasp rectangles, grasp maps, rasterization, decoding and the
//!   rectangle metric (angle + Jaccard).
//! - [`dataset`]: Cornell-format parsing, depth inpainting, augmentation,
//!   fold splitting and a synthetic scene generator.
//! - [`model`]: the grasp FCN itself plus its weight-file format.
//! - [`train`]: training loop, evaluation, threshold / top-k sweeps and
//!   cross-validation.

pub mod dataset;
pub mod error;
pub mod grasp;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use grasp::{
    GraspMapSet, GraspRectangle, LossWeights, PixelGrasp, angle_distance, decode_best_grasp,
    decode_top_k, jaccard, pixel_grasp_to_rectangle, rect_from_corners,
    rectangle_metric_match,
};

pub use model::{GraspFcn, GraspFcnConfig};
pub use tensor::{Mode, Real, Tensor};
