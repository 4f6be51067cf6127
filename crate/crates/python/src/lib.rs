//! Python bindings: rectangles and the metric, synthetic and on-disk
//! datasets, and the grasp network (build, train, evaluate, predict, save).

use std::path::PathBuf;

use graspmap::dataset::{self, Sample};
use graspmap::grasp::{DEFAULT_HEIGHT_RATIO, default_min_separation, default_width_max};
use graspmap::train::{self, TrainConfig};
use graspmap::{Error, GraspFcn, GraspFcnConfig};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    if e.is_numerical() {
        return PyArithmeticError::new_err(msg);
    }
    match e {
        Error::Io(_) | Error::File { .. } | Error::Image(_) => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

#[pyclass(name = "GraspRectangle", module = "graspmap_py", frozen, from_py_object)]
#[derive(Clone)]
struct PyRect(graspmap::GraspRectangle);

#[pymethods]
impl PyRect {
    #[new]
    fn new(center_x: f64, center_y: f64, theta: f64, height: f64, width: f64) -> PyResult<Self> {
        graspmap::GraspRectangle::new(center_x, center_y, theta, height, width)
            .map(PyRect)
            .map_err(to_py)
    }

    /// Rectangle through four ordered corners `[(x, y); 4]`.
    #[staticmethod]
    fn from_corners(corners: [(f64, f64); 4]) -> PyResult<Self> {
        graspmap::rect_from_corners(&corners).map(PyRect).map_err(to_py)
    }

    #[getter]
    fn center_x(&self) -> f64 {
        self.0.center_x
    }
    #[getter]
    fn center_y(&self) -> f64 {
        self.0.center_y
    }
    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }
    #[getter]
    fn height(&self) -> f64 {
        self.0.height
    }
    #[getter]
    fn width(&self) -> f64 {
        self.0.width
    }

    fn corners(&self) -> [(f64, f64); 4] {
        self.0.corners()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn __repr__(&self) -> String {
        let r = &self.0;
        format!(
            "GraspRectangle(center_x={}, center_y={}, theta={}, height={}, width={})",
            r.center_x, r.center_y, r.theta, r.height, r.width
        )
    }
}

#[pyfunction]
fn jaccard(a: &PyRect, b: &PyRect) -> f64 {
    graspmap::jaccard(&a.0, &b.0)
}

#[pyfunction]
#[pyo3(signature = (pred, ground_truth, jaccard_threshold = 0.25))]
fn rectangle_metric_match(pred: &PyRect, ground_truth: Vec<PyRect>, jaccard_threshold: f64) -> PyResult<bool> {
    let gt: Vec<_> = ground_truth.into_iter().map(|r| r.0).collect();
    graspmap::rectangle_metric_match(&pred.0, &gt, jaccard_threshold).map_err(to_py)
}

/// Depth images with their ground-truth rectangles.
#[pyclass(name = "Dataset", module = "graspmap_py")]
struct PyDataset(Vec<Sample>);

impl PyDataset {
    fn sample(&self, i: usize) -> PyResult<&Sample> {
        self.0
            .get(i)
            .ok_or_else(|| PyIndexError::new_err(format!("sample {i} of {}", self.0.len())))
    }
}

#[pymethods]
impl PyDataset {
    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn ids(&self) -> Vec<String> {
        self.0.iter().map(|s| s.id.clone()).collect()
    }

    fn object_ids(&self) -> Vec<String> {
        self.0.iter().map(|s| s.object_id.clone()).collect()
    }

    /// `(height, width, depth)` with depth row-major in metres; invalid
    /// pixels are NaN.
    fn depth(&self, i: usize) -> PyResult<(usize, usize, Vec<f32>)> {
        let d = &self.sample(i)?.depth;
        let values = d
            .depth
            .iter()
            .zip(&d.valid)
            .map(|(&v, &ok)| if ok { v } else { f32::NAN })
            .collect();
        Ok((d.height, d.width, values))
    }

    fn rects(&self, i: usize) -> PyResult<Vec<PyRect>> {
        Ok(self.sample(i)?.rects.iter().copied().map(PyRect).collect())
    }

    /// Samples at the given indices, in that order.
    fn subset(&self, indices: Vec<usize>) -> PyResult<Self> {
        indices
            .into_iter()
            .map(|i| self.sample(i).cloned())
            .collect::<PyResult<_>>()
            .map(PyDataset)
    }

    /// Writes 16-bit depth PNGs, Cornell rectangle files and a manifest.
    fn save(&self, dir: PathBuf) -> PyResult<()> {
        dataset::io::write_dataset(&dir, &self.0).map_err(to_py)
    }
}

#[pyfunction]
#[pyo3(signature = (count, size = 96, seed = 0, bars = 1))]
fn make_synthetic(count: usize, size: usize, seed: u64, bars: usize) -> PyResult<PyDataset> {
    let samples = if bars == 1 {
        dataset::make_synthetic(count, size, seed)
    } else {
        dataset::make_synthetic_scenes(count, size, bars, seed)
    };
    samples.map(PyDataset).map_err(to_py)
}

/// Portable dataset directory or manifest, or a Cornell tree.
#[pyfunction]
#[pyo3(signature = (path, pcd_scale = 0.001))]
fn load_dataset(path: PathBuf, pcd_scale: f64) -> PyResult<PyDataset> {
    dataset::io::load_any(&path, pcd_scale)
        .map(|l| PyDataset(l.samples))
        .map_err(to_py)
}

#[pyclass(name = "GraspNet", module = "graspmap_py")]
struct PyNet(GraspFcn<f32>);

#[pymethods]
impl PyNet {
    /// Fresh network from a preset (`paper`, `desk` or `tiny`).
    #[new]
    #[pyo3(signature = (preset = "desk", seed = 0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        let cfg = GraspFcnConfig::preset(preset)
            .ok_or_else(|| PyValueError::new_err(format!("unknown preset `{preset}`")))?;
        GraspFcn::build(cfg, seed).map(PyNet).map_err(to_py)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        GraspFcn::load(data).map(PyNet).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.0.save()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        std::fs::write(&path, self.0.save()).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.0.config().input_size
    }

    fn parameter_count(&self) -> usize {
        self.0.parameter_count()
    }

    /// Trains in place; returns the mean loss of every epoch.
    #[pyo3(signature = (data, epochs = 100, batch_size = 32, lr = 0.001, seed = 0, augment = true))]
    fn train(
        &mut self,
        py: Python<'_>,
        data: &PyDataset,
        epochs: usize,
        batch_size: usize,
        lr: f64,
        seed: u64,
        augment: bool,
    ) -> PyResult<Vec<f64>> {
        let cfg = TrainConfig {
            epochs,
            batch_size,
            lr,
            seed,
            augment,
            ..TrainConfig::default()
        };
        let net = &mut self.0;
        let samples = &data.0;
        py.detach(|| train::train(net, samples, &cfg, &mut |_| {}))
            .map_err(to_py)
    }

    /// `(accuracy, passed)` under the rectangle metric.
    #[pyo3(signature = (data, jaccard_threshold = 0.25))]
    fn evaluate(&self, py: Python<'_>, data: &PyDataset, jaccard_threshold: f64) -> PyResult<(f64, Vec<bool>)> {
        let width_max = default_width_max(self.0.config().input_size);
        let (net, samples) = (&self.0, &data.0);
        let report = py
            .detach(|| train::evaluate(net, samples, jaccard_threshold, width_max))
            .map_err(to_py)?;
        Ok((report.accuracy, report.passed))
    }

    /// Up to `k` grasps per sample as `(u, v, phi, width_px, quality)`,
    /// highest quality first.
    #[pyo3(signature = (data, k = 1, q_threshold = 0.0))]
    fn predict(
        &self,
        py: Python<'_>,
        data: &PyDataset,
        k: usize,
        q_threshold: f64,
    ) -> PyResult<Vec<Vec<(usize, usize, f64, f64, f64)>>> {
        let size = self.0.config().input_size;
        let (width_max, min_sep) = (default_width_max(size), default_min_separation(size));
        let (net, samples) = (&self.0, &data.0);
        let preds = py.detach(|| train::predict(net, samples)).map_err(to_py)?;
        Ok(preds
            .iter()
            .map(|p| {
                graspmap::decode_top_k(&p.maps, k, q_threshold, min_sep, width_max)
                    .into_iter()
                    .map(|g| (g.u, g.v, g.phi, g.width_px, g.quality))
                    .collect()
            })
            .collect())
    }

    /// Best grasp of each sample as a rectangle.
    fn best_rectangles(&self, py: Python<'_>, data: &PyDataset) -> PyResult<Vec<PyRect>> {
        let width_max = default_width_max(self.0.config().input_size);
        let (net, samples) = (&self.0, &data.0);
        let preds = py.detach(|| train::predict(net, samples)).map_err(to_py)?;
        preds
            .iter()
            .map(|p| {
                let g = graspmap::decode_best_grasp(&p.maps, width_max)?;
                graspmap::pixel_grasp_to_rectangle(&g, DEFAULT_HEIGHT_RATIO).map(PyRect)
            })
            .collect::<Result<_, Error>>()
            .map_err(to_py)
    }
}

#[pymodule]
fn graspmap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRect>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNet>()?;
    m.add_function(wrap_pyfunction!(jaccard, m)?)?;
    m.add_function(wrap_pyfunction!(rectangle_metric_match, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    Ok(())
}
