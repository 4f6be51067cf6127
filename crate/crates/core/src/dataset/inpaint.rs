use super::DepthImage;
use crate::error::{Error, Result};

const NOT_FILLED: usize = usize::MAX;

/// Fills invalid pixels by repeated 4-neighbour dilation of the valid region.
///
/// In round `r` every still-invalid pixel touching a pixel filled before
/// round `r` copies that neighbour's depth (neighbour order: up, left,
/// right, down). Each filled pixel thus takes the value of a nearest valid
/// pixel in 4-neighbour distance. Valid pixels are never modified.
pub fn inpaint_depth(img: &DepthImage) -> Result<DepthImage> {
    let (h, w) = (img.height, img.width);
    if !img.valid.iter().any(|&v| v) {
        return Err(Error::invalid("inpaint_depth", "image has no valid pixel"));
    }
    let mut out = img.clone();
    let mut round: Vec<usize> = img.valid.iter().map(|&v| if v { 0 } else { NOT_FILLED }).collect();
    let mut frontier: Vec<usize> = (0..h * w).filter(|&i| img.valid[i]).collect();
    let neighbours = |i: usize| {
        let (u, v) = (i % w, i / w);
        [
            (v > 0).then(|| i - w),
            (u > 0).then(|| i - 1),
            (u + 1 < w).then(|| i + 1),
            (v + 1 < h).then(|| i + w),
        ]
    };
    let mut r = 0;
    while !frontier.is_empty() {
        r += 1;
        let mut candidates: Vec<usize> = frontier
            .iter()
            .flat_map(|&i| neighbours(i))
            .flatten()
            .filter(|&j| round[j] == NOT_FILLED)
            .collect();
        candidates.sort_unstable();
        candidates.dedup();
        for &j in &candidates {
            let src = neighbours(j)
                .into_iter()
                .flatten()
                .find(|&n| round[n] < r)
                .expect("candidate touches the frontier");
            out.depth[j] = out.depth[src];
            out.valid[j] = true;
            round[j] = r;
        }
        frontier = candidates;
    }
    Ok(out)
}
