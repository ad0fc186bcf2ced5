//! Python bindings for the road topology toolkit.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use roadkit::labelgen::{self, LabelParams};
use roadkit::losses::{self, ProbMap};
use roadkit::metrics::{self, AplsParams};
use roadkit::tiling;
use roadkit::vectorize::{self, DEFAULT_MIN_SPUR, DEFAULT_RDP_TOLERANCE};
use roadkit::{Point, RasterMask, Window};

fn to_py(e: roadkit::Error) -> PyErr {
    match e {
        roadkit::Error::Io(e) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Undirected road graph with polyline edges.
#[pyclass(name = "RoadGraph", module = "roadkit", frozen)]
struct PyRoadGraph(roadkit::RoadGraph);

#[pymethods]
impl PyRoadGraph {
    #[new]
    #[pyo3(signature = (nodes, edges, boundary = Vec::new()))]
    fn new(nodes: Vec<(f64, f64)>, edges: Vec<(usize, usize, Vec<(f64, f64)>)>, boundary: Vec<usize>) -> PyResult<Self> {
        let nodes = nodes.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        let edges = edges
            .into_iter()
            .map(|(a, b, pts)| (a, b, pts.into_iter().map(|(x, y)| Point::new(x, y)).collect()))
            .collect::<Vec<_>>();
        roadkit::RoadGraph::new(nodes, edges, boundary).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn from_linestrings(lines: Vec<Vec<(f64, f64)>>) -> PyResult<Self> {
        roadkit::RoadGraph::from_linestrings(lines.into_iter().map(|l| l.into_iter().map(|(x, y)| Point::new(x, y)).collect::<Vec<_>>()))
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        roadkit::RoadGraph::from_json(text).map(Self).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.0.to_json()
    }

    #[getter]
    fn nodes(&self) -> Vec<(f64, f64)> {
        self.0.nodes().iter().map(|p| (p.x, p.y)).collect()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges().iter().map(|e| (e.a, e.b)).collect()
    }

    #[getter]
    fn boundary(&self) -> Vec<usize> {
        self.0.boundary_nodes().iter().copied().collect()
    }

    fn degrees(&self) -> Vec<usize> {
        self.0.degrees()
    }

    fn total_length(&self) -> f64 {
        self.0.total_length()
    }

    fn crop(&self, x0: f64, y0: f64, width: f64, height: f64) -> PyResult<Self> {
        let w = Window::new(x0, y0, width, height).map_err(to_py)?;
        Ok(Self(self.0.crop(&w)))
    }

    fn translated(&self, dx: f64, dy: f64) -> Self {
        Self(self.0.translated(dx, dy))
    }

    fn __len__(&self) -> usize {
        self.0.node_count()
    }

    fn __repr__(&self) -> String {
        format!("RoadGraph(nodes={}, edges={})", self.0.node_count(), self.0.edge_count())
    }
}

/// Binary road mask.
#[pyclass(name = "Mask", module = "roadkit", frozen)]
struct PyMask(RasterMask);

#[pymethods]
impl PyMask {
    /// Builds a mask from rows of truthy values.
    #[new]
    fn new(rows: Vec<Vec<bool>>) -> PyResult<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(PyValueError::new_err("rows must have equal length"));
        }
        RasterMask::from_bools(width, height, rows.into_iter().flatten())
            .map(Self)
            .map_err(to_py)
    }

    #[staticmethod]
    fn blank(width: usize, height: usize) -> PyResult<Self> {
        RasterMask::new(width, height).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn read_pgm(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        RasterMask::read_pgm(std::io::BufReader::new(f)).map(Self).map_err(to_py)
    }

    fn write_pgm(&self, path: &str) -> PyResult<()> {
        let f = std::fs::File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        self.0.write_pgm(std::io::BufWriter::new(f)).map_err(to_py)
    }

    fn to_rows(&self) -> Vec<Vec<bool>> {
        (0..self.0.height())
            .map(|y| (0..self.0.width()).map(|x| self.0.is_road(x, y)).collect())
            .collect()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn __repr__(&self) -> String {
        format!("Mask({}x{}, road={})", self.0.width(), self.0.height(), self.0.count())
    }
}

fn label_params(theta: f64, lambda: Option<f64>, node_radius: Option<f64>) -> PyResult<LabelParams> {
    let p = LabelParams {
        theta,
        lambda: lambda.unwrap_or(LabelParams::default().lambda),
        node_radius: node_radius.unwrap_or(2.0 * theta),
    };
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Road mask and per-pixel connectivity classes (rows of ints 0..=5).
#[pyfunction]
#[pyo3(signature = (graph, width, height, theta = 2.0, lam = None, node_radius = None))]
fn connectivity_label(
    graph: &PyRoadGraph,
    width: usize,
    height: usize,
    theta: f64,
    lam: Option<f64>,
    node_radius: Option<f64>,
) -> PyResult<(PyMask, Vec<Vec<u8>>)> {
    let p = label_params(theta, lam, node_radius)?;
    let (mask, conn) = labelgen::connectivity_label(&graph.0, width, height, &p).map_err(to_py)?;
    let rows = conn.data().chunks(width.max(1)).map(<[u8]>::to_vec).collect();
    Ok((PyMask(mask), rows))
}

/// Euclidean distance from every pixel to the nearest road pixel.
#[pyfunction]
fn distance_map(mask: &PyMask) -> Vec<Vec<f64>> {
    let d = labelgen::distance_map(&mask.0);
    d.data().chunks(d.width().max(1)).map(<[f64]>::to_vec).collect()
}

#[pyfunction]
#[pyo3(signature = (mask, tolerance = DEFAULT_RDP_TOLERANCE, min_spur = DEFAULT_MIN_SPUR))]
fn mask_to_graph(mask: &PyMask, tolerance: f64, min_spur: f64) -> PyResult<PyRoadGraph> {
    vectorize::mask_to_graph(&mask.0, tolerance, min_spur)
        .map(PyRoadGraph)
        .map_err(to_py)
}

#[pyfunction]
fn iou(pred: &PyMask, gt: &PyMask) -> PyResult<f64> {
    metrics::iou(&pred.0, &gt.0).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (pred, gt, rho = 3.0))]
fn relaxed_iou(pred: &PyMask, gt: &PyMask, rho: f64) -> PyResult<f64> {
    metrics::relaxed_iou(&pred.0, &gt.0, rho).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (gt, proposal, snap_radius = 4.0, sample_spacing = 50.0))]
fn apls(gt: &PyRoadGraph, proposal: &PyRoadGraph, snap_radius: f64, sample_spacing: f64) -> PyResult<f64> {
    let p = AplsParams {
        snap_radius,
        sample_spacing,
    };
    p.validate().map_err(to_py)?;
    Ok(metrics::apls(&gt.0, &proposal.0, &p))
}

/// Tile plan as a list of `(read, write)` rectangles, each `(x0, y0, w, h)`.
#[pyfunction]
#[pyo3(signature = (width, height, patch = tiling::DEFAULT_PATCH, stride = tiling::DEFAULT_STRIDE, margin = tiling::DEFAULT_MARGIN))]
fn plan_tiles(
    width: usize,
    height: usize,
    patch: usize,
    stride: usize,
    margin: usize,
) -> PyResult<Vec<((usize, usize, usize, usize), (usize, usize, usize, usize))>> {
    let plan = tiling::plan_tiles(width, height, patch, stride, margin).map_err(to_py)?;
    let rect = |r: tiling::Rect| (r.x0, r.y0, r.width, r.height);
    Ok(plan.tiles.iter().map(|t| (rect(t.read), rect(t.write))).collect())
}

fn prob_map(planes: Vec<Vec<Vec<f64>>>) -> PyResult<ProbMap> {
    let classes = planes.len();
    let height = planes.first().map_or(0, Vec::len);
    let width = planes.first().and_then(|p| p.first()).map_or(0, Vec::len);
    if planes.iter().any(|p| p.len() != height || p.iter().any(|r| r.len() != width)) {
        return Err(PyValueError::new_err("planes must share one height and width"));
    }
    ProbMap::new(classes, width, height, planes.into_iter().flatten().flatten().collect()).map_err(to_py)
}

/// Soft IoU loss and its gradient for `[class][row][col]` probability maps.
#[pyfunction]
fn soft_iou_loss(pred: Vec<Vec<Vec<f64>>>, gt: Vec<Vec<Vec<f64>>>) -> PyResult<(f64, Vec<f64>)> {
    let r = losses::soft_iou_loss(&prob_map(pred)?, &prob_map(gt)?).map_err(to_py)?;
    Ok((r.loss, r.grad))
}

#[pyfunction]
fn inverse_boundary_weights(freqs: Vec<f64>) -> PyResult<Vec<f64>> {
    losses::inverse_boundary_weights(&freqs)
        .map(|w| w.as_slice().to_vec())
        .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "roadkit")]
fn roadkit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoadGraph>()?;
    m.add_class::<PyMask>()?;
    m.add_function(wrap_pyfunction!(connectivity_label, m)?)?;
    m.add_function(wrap_pyfunction!(distance_map, m)?)?;
    m.add_function(wrap_pyfunction!(mask_to_graph, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(relaxed_iou, m)?)?;
    m.add_function(wrap_pyfunction!(apls, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tiles, m)?)?;
    m.add_function(wrap_pyfunction!(soft_iou_loss, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_boundary_weights, m)?)?;
    Ok(())
}
