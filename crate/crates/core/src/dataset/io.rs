//! On-disk layout: 16-bit depth PNGs in millimetres (0 = invalid),
//! Cornell-format rectangle files and a JSON-lines manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};

use super::{DepthImage, Sample, inpaint_depth, parse_ascii_pcd_to_depth, parse_cornell_rects};
use crate::error::{Error, Result};
use crate::grasp::GraspRectangle;

pub const MANIFEST: &str = "manifest.jsonl";
/// Resolution of Cornell point clouds.
pub const CORNELL_HEIGHT: usize = 480;
pub const CORNELL_WIDTH: usize = 640;

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub object_id: String,
    pub depth_path: String,
    pub rects_path: String,
}

pub fn depth_to_mm(img: &DepthImage) -> Vec<u16> {
    img.depth
        .iter()
        .zip(&img.valid)
        .map(|(&d, &ok)| if ok { (d as f64 * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16 } else { 0 })
        .collect()
}

pub fn depth_from_mm(height: usize, width: usize, mm: &[u16]) -> DepthImage {
    let depth = mm.iter().map(|&v| if v == 0 { 0.0 } else { v as f32 / 1000.0 }).collect();
    DepthImage::from_depths(height, width, depth)
}

pub fn write_depth_png(path: &Path, img: &DepthImage) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, depth_to_mm(img))
            .ok_or_else(|| Error::Format("depth buffer does not match its dimensions".into()))?;
    buf.save(path).map_err(|e| Error::from(e).in_file(path))
}

pub fn read_depth_png(path: &Path) -> Result<DepthImage> {
    let img = image::open(path).map_err(|e| Error::from(e).in_file(path))?;
    let luma = img.into_luma16();
    let (w, h) = luma.dimensions();
    Ok(depth_from_mm(h as usize, w as usize, luma.as_raw()))
}

/// Four `x y` corner lines per rectangle.
pub fn format_cornell_rects(rects: &[GraspRectangle]) -> String {
    let mut out = String::new();
    for r in rects {
        for (x, y) in r.corners() {
            out.push_str(&format!("{x:.4} {y:.4}\n"));
        }
    }
    out
}

pub fn read_rects(path: &Path) -> Result<Vec<GraspRectangle>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(parse_cornell_rects(&text).map_err(|e| e.in_file(path))?.rects)
}

fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let path = dir.join(MANIFEST);
    let file = fs::File::create(&path).map_err(|e| Error::from(e).in_file(&path))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn write_sample(dir: &Path, s: &Sample) -> Result<ManifestEntry> {
    let entry = ManifestEntry {
        id: s.id.clone(),
        object_id: s.object_id.clone(),
        depth_path: format!("{}d.png", s.id),
        rects_path: format!("{}cpos.txt", s.id),
    };
    write_depth_png(&dir.join(&entry.depth_path), &s.depth)?;
    let rects_path = dir.join(&entry.rects_path);
    fs::write(&rects_path, format_cornell_rects(&s.rects)).map_err(|e| Error::from(e).in_file(&rects_path))?;
    Ok(entry)
}

/// Writes every sample plus the manifest into `dir`, creating it if needed.
pub fn write_dataset(dir: &Path, samples: &[Sample]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let entries = samples.iter().map(|s| write_sample(dir, s)).collect::<Result<Vec<_>>>()?;
    write_manifest(dir, &entries)
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                Error::Parse {
                    line: i + 1,
                    reason: e.to_string(),
                }
                .in_file(path)
            })
        })
        .collect()
}

/// Loads a dataset from a directory holding a manifest, or from the
/// manifest file itself.
pub fn load_dataset(path: &Path) -> Result<Vec<Sample>> {
    let manifest = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
    let root = manifest.parent().unwrap_or(Path::new("."));
    read_manifest(&manifest)?
        .into_iter()
        .map(|e| {
            Ok(Sample {
                depth: read_depth_png(&root.join(&e.depth_path))?,
                rects: read_rects(&root.join(&e.rects_path))?,
                id: e.id,
                object_id: e.object_id,
            })
        })
        .collect()
}

/// Samples read from a Cornell tree plus the point clouds that failed.
#[derive(Debug, Default)]
pub struct CornellLoad {
    pub samples: Vec<Sample>,
    pub failures: Vec<(PathBuf, String)>,
}

/// Outcome of [`convert_cornell`].
#[derive(Debug, Default)]
pub struct ConvertSummary {
    pub converted: usize,
    pub failures: Vec<(PathBuf, String)>,
}

/// Parses an object mapping file: each line starts with an image number
/// (`100` or `pcd0100`) followed by an object id. Extra columns are ignored.
pub fn parse_object_map(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let mut parts = l.split_whitespace();
            let image = parts.next()?.trim_start_matches("pcd");
            let object = parts.next()?;
            let n: u32 = image.parse().ok()?;
            Some((format!("{n:04}"), object.to_string()))
        })
        .collect()
}

fn find_point_clouds(dir: &Path, out: &mut Vec<(PathBuf, String)>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::from(e).in_file(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_point_clouds(&p, out)?;
            continue;
        }
        let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let num = name.strip_prefix("pcd").and_then(|n| n.strip_suffix(".txt"));
        if let Some(num) = num.filter(|n| n.len() == 4 && n.bytes().all(|b| b.is_ascii_digit())) {
            out.push((p.clone(), num.to_string()));
        }
    }
    Ok(())
}

fn load_cornell_sample(
    pcd_path: &Path,
    num: &str,
    z_scale: f64,
    object_map: Option<&BTreeMap<String, String>>,
) -> Result<Sample> {
    let rects_path = pcd_path.with_file_name(format!("pcd{num}cpos.txt"));
    if !rects_path.exists() {
        return Err(Error::Format(format!("missing {}", rects_path.display())));
    }
    let rects = read_rects(&rects_path)?;
    let text = fs::read_to_string(pcd_path).map_err(|e| Error::from(e).in_file(pcd_path))?;
    let mut depth =
        parse_ascii_pcd_to_depth(&text, CORNELL_HEIGHT, CORNELL_WIDTH).map_err(|e| e.in_file(pcd_path))?;
    for (d, ok) in depth.depth.iter_mut().zip(depth.valid.iter_mut()) {
        *d = (*d as f64 * z_scale) as f32;
        *ok = *ok && *d > 0.0;
    }
    let depth = inpaint_depth(&depth).map_err(|e| e.in_file(pcd_path))?;
    let object_id = object_map
        .and_then(|m| m.get(num).cloned())
        .unwrap_or_else(|| num[..2].to_string());
    Ok(Sample {
        id: format!("pcd{num}"),
        object_id,
        depth,
        rects,
    })
}

/// Reads every `pcdNNNN.txt` / `pcdNNNNcpos.txt` pair under `cornell_dir`.
/// Point-cloud `z` values are multiplied by `z_scale` to get metres, then
/// missing pixels are inpainted. Without `object_map` the object id is the
/// first two digits of `NNNN`. Failing samples are collected, not fatal.
pub fn load_cornell(
    cornell_dir: &Path,
    z_scale: f64,
    object_map: Option<&BTreeMap<String, String>>,
) -> Result<CornellLoad> {
    let mut clouds = Vec::new();
    find_point_clouds(cornell_dir, &mut clouds)?;
    let mut out = CornellLoad::default();
    for (pcd_path, num) in clouds {
        match load_cornell_sample(&pcd_path, &num, z_scale, object_map) {
            Ok(s) => out.samples.push(s),
            Err(e) => out.failures.push((pcd_path, e.to_string())),
        }
    }
    Ok(out)
}

/// [`load_cornell`] followed by [`write_dataset`] into `out_dir`.
pub fn convert_cornell(
    cornell_dir: &Path,
    out_dir: &Path,
    z_scale: f64,
    object_map: Option<&BTreeMap<String, String>>,
) -> Result<ConvertSummary> {
    let loaded = load_cornell(cornell_dir, z_scale, object_map)?;
    write_dataset(out_dir, &loaded.samples)?;
    Ok(ConvertSummary {
        converted: loaded.samples.len(),
        failures: loaded.failures,
    })
}

/// Loads a portable dataset (directory with a manifest, or the manifest
/// itself) or, failing that, a Cornell tree.
pub fn load_any(path: &Path, z_scale: f64) -> Result<CornellLoad> {
    if path.is_file() || path.join(MANIFEST).is_file() {
        return Ok(CornellLoad {
            samples: load_dataset(path)?,
            failures: Vec::new(),
        });
    }
    if !path.is_dir() {
        return Err(Error::Format(format!("{}: no such dataset", path.display())));
    }
    load_cornell(path, z_scale, None)
}
