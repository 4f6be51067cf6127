use std::collections::VecDeque;

use super::{GraspMapSet, PixelGrasp, fold_angle};
use crate::error::{Error, Result};

/// A connected set of equal-valued quality pixels.
struct Plateau {
    value: f32,
    /// Smallest row-major index in the plateau.
    first: usize,
    /// Plateau pixel nearest the plateau centroid (row-major on ties).
    representative: usize,
    /// No 8-neighbour of the plateau has a larger value.
    is_local_max: bool,
}

/// Flood-fills the 8-connected plateau of pixels equal to `q[start]`.
fn plateau(q: &[f32], width: usize, start: usize, visited: &mut [bool]) -> Plateau {
    let height = q.len() / width;
    let value = q[start];
    let mut members = Vec::new();
    let mut queue = VecDeque::from([start]);
    visited[start] = true;
    let mut is_local_max = true;
    while let Some(i) = queue.pop_front() {
        members.push(i);
        let (u, v) = ((i % width) as isize, (i / width) as isize);
        for dv in -1..=1 {
            for du in -1..=1 {
                if du == 0 && dv == 0 {
                    continue;
                }
                let (nu, nv) = (u + du, v + dv);
                if nu < 0 || nv < 0 || nu >= width as isize || nv >= height as isize {
                    continue;
                }
                let j = nv as usize * width + nu as usize;
                if q[j] > value {
                    is_local_max = false;
                } else if q[j] == value && !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    let n = members.len() as f64;
    let cu = members.iter().map(|&i| (i % width) as f64).sum::<f64>() / n;
    let cv = members.iter().map(|&i| (i / width) as f64).sum::<f64>() / n;
    let dist = |i: usize| ((i % width) as f64 - cu).powi(2) + ((i / width) as f64 - cv).powi(2);
    let representative = members
        .iter()
        .copied()
        .min_by(|&a, &b| dist(a).total_cmp(&dist(b)).then(a.cmp(&b)))
        .expect("plateau has at least one pixel");
    Plateau {
        value,
        first: *members.iter().min().expect("non-empty"),
        representative,
        is_local_max,
    }
}

fn grasp_at(maps: &GraspMapSet, idx: usize, width_max: f64) -> PixelGrasp {
    let phi = 0.5 * (maps.angle_sin[idx] as f64).atan2(maps.angle_cos[idx] as f64);
    PixelGrasp {
        u: idx % maps.width,
        v: idx / maps.width,
        phi: fold_angle(phi),
        width_px: maps.grasp_width[idx] as f64 * width_max,
        quality: maps.quality[idx] as f64,
    }
}

/// Best grasp: the pixel of maximum quality.
///
/// When the maximum is attained on a plateau (rasterized ground truth is flat
/// over each mask), the plateau containing the first maximal pixel in
/// row-major order is taken and the pixel nearest its centroid is returned.
/// NaN qualities are ignored.
pub fn decode_best_grasp(maps: &GraspMapSet, width_max: f64) -> Result<PixelGrasp> {
    let q = &maps.quality;
    let mut best: Option<usize> = None;
    for (i, &v) in q.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v > q[b]) {
            best = Some(i);
        }
    }
    let start = best.ok_or_else(|| Error::invalid("decode_best_grasp", "quality map has no finite value"))?;
    let mut visited = vec![false; q.len()];
    let p = plateau(q, maps.width, start, &mut visited);
    Ok(grasp_at(maps, p.representative, width_max))
}

/// Up to `k` grasps at local maxima of the quality map with quality at least
/// `q_threshold`, in descending quality, pairwise at least `min_separation`
/// pixels apart.
///
/// A local maximum is a plateau (possibly a single pixel) with no strictly
/// larger 8-neighbour; it contributes one grasp at its centroid pixel.
pub fn decode_top_k(
    maps: &GraspMapSet,
    k: usize,
    q_threshold: f64,
    min_separation: f64,
    width_max: f64,
) -> Vec<PixelGrasp> {
    let q = &maps.quality;
    if k == 0 || q.is_empty() {
        return Vec::new();
    }
    let mut visited = vec![false; q.len()];
    let mut peaks = Vec::new();
    for i in 0..q.len() {
        if visited[i] {
            continue;
        }
        if q[i].is_nan() {
            visited[i] = true;
            continue;
        }
        let p = plateau(q, maps.width, i, &mut visited);
        if p.is_local_max && p.value as f64 >= q_threshold {
            peaks.push(p);
        }
    }
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.first.cmp(&b.first)));
    let mut chosen: Vec<PixelGrasp> = Vec::with_capacity(k);
    for p in peaks {
        let g = grasp_at(maps, p.representative, width_max);
        let far = chosen.iter().all(|c| {
            let (du, dv) = (c.u as f64 - g.u as f64, c.v as f64 - g.v as f64);
            du.hypot(dv) >= min_separation
        });
        if far {
            chosen.push(g);
            if chosen.len() == k {
                break;
            }
        }
    }
    chosen
}
