use super::DepthImage;
use crate::error::{Error, Result};
use crate::grasp::{GraspRectangle, rect_from_corners};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedRects {
    pub rects: Vec<GraspRectangle>,
    /// Four-line groups skipped because a coordinate was NaN.
    pub skipped_nan: usize,
}

/// Parses a Cornell `cpos` file: one `x y` corner per line, four lines per
/// rectangle. Blank lines are ignored.
pub fn parse_cornell_rects(text: &str) -> Result<ParsedRects> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 2 coordinates, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                reason: format!("`{s}` is not a number"),
            })
        };
        points.push((line_no, (parse(fields[0])?, parse(fields[1])?)));
    }
    let mut out = ParsedRects::default();
    for group in points.chunks(4) {
        if group.len() < 4 {
            return Err(Error::Parse {
                line: group[0].0,
                reason: format!("incomplete rectangle: {} of 4 corner lines", group.len()),
            });
        }
        let corners = [group[0].1, group[1].1, group[2].1, group[3].1];
        if corners.iter().any(|(x, y)| x.is_nan() || y.is_nan()) {
            out.skipped_nan += 1;
            continue;
        }
        let rect = rect_from_corners(&corners).map_err(|e| Error::Parse {
            line: group[0].0,
            reason: e.to_string(),
        })?;
        out.rects.push(rect);
    }
    Ok(out)
}

/// Reads an ASCII PCD point cloud with an `index` field into an
/// `out_h × out_w` depth image: pixel `index` (row-major) receives the
/// point's `z`. Pixels without a point stay invalid.
pub fn parse_ascii_pcd_to_depth(text: &str, out_h: usize, out_w: usize) -> Result<DepthImage> {
    let mut lines = text.lines();
    let mut fields: Option<Vec<String>> = None;
    let mut data_seen = false;
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or_default().to_ascii_uppercase();
        match key.as_str() {
            "FIELDS" => fields = Some(parts.map(|s| s.to_ascii_lowercase()).collect()),
            "DATA" => {
                let kind = parts.next().unwrap_or_default();
                if !kind.eq_ignore_ascii_case("ascii") {
                    return Err(Error::PointCloud(format!("unsupported DATA `{kind}`, expected ascii")));
                }
                data_seen = true;
                break;
            }
            _ => {}
        }
    }
    if !data_seen {
        return Err(Error::PointCloud("missing DATA line".into()));
    }
    let fields = fields.ok_or_else(|| Error::PointCloud("missing FIELDS line".into()))?;
    let pos = |name: &str| fields.iter().position(|f| f == name);
    let z_col = pos("z").ok_or_else(|| Error::PointCloud("no `z` field".into()))?;
    let idx_col = pos("index").ok_or_else(|| Error::PointCloud("no `index` field".into()))?;
    let mut img = DepthImage::empty(out_h, out_w);
    for (n, line) in lines.enumerate() {
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.is_empty() {
            continue;
        }
        if vals.len() != fields.len() {
            return Err(Error::PointCloud(format!(
                "point {n}: {} values for {} fields",
                vals.len(),
                fields.len()
            )));
        }
        let z: f64 = vals[z_col]
            .parse()
            .map_err(|_| Error::PointCloud(format!("point {n}: bad z `{}`", vals[z_col])))?;
        let index: f64 = vals[idx_col]
            .parse()
            .map_err(|_| Error::PointCloud(format!("point {n}: bad index `{}`", vals[idx_col])))?;
        if index < 0.0 || index.fract() != 0.0 || index as usize >= out_h * out_w {
            return Err(Error::PointCloud(format!(
                "point {n}: index {index} outside a {out_h}x{out_w} image"
            )));
        }
        if z.is_finite() {
            let i = index as usize;
            img.depth[i] = z as f32;
            img.valid[i] = true;
        }
    }
    Ok(img)
}
