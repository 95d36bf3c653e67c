//! Python bindings: `import pytopoflow`.
//!
//! Point clouds cross the boundary as sequences of equal-length rows (lists
//! or 2-D numpy arrays) and come back as lists of lists. Diagrams are lists of
//! `(dim, birth, death)` tuples.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use topoflow::diffeo::{self, JitterPolicy};
use topoflow::generate::Shape;
use topoflow::gradient::{consolidate, pullback};
use topoflow::losses::{self, BoxRegion, BoxRegularizer, LossFamily, LossSpec, Selection};
use topoflow::optimizer::{self, EpochRecord, LossPipeline, Mode, OptimConfig, StopReason, StopRule};
use topoflow::rips::{build_filtration_with_budget, compute_persistence, simplex_budget_from_env};
use topoflow::{Diagram, DiagramPoint, Error, PointCloud};

create_exception!(pytopoflow, CapacityError, PyRuntimeError, "Filtration exceeds the simplex budget.");

fn to_py(e: Error) -> PyErr {
    if e.is_capacity() {
        return CapacityError::new_err(e.to_string());
    }
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Singular { .. } | Error::DegenerateEdge(..) | Error::MatchingBudget { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        Error::Epoch { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn cloud(rows: Vec<Vec<f64>>) -> PyResult<PointCloud> {
    PointCloud::from_rows(&rows).map_err(to_py)
}

fn rows(x: &PointCloud) -> Vec<Vec<f64>> {
    x.rows().map(<[f64]>::to_vec).collect()
}

fn diagram_rows(d: &Diagram) -> Vec<(usize, f64, f64)> {
    d.iter().map(|p| (p.dim, p.birth, p.death)).collect()
}

fn diagram_from(points: &[(usize, f64, f64)]) -> PyResult<Diagram> {
    Diagram::new(points.iter().map(|&(k, b, d)| DiagramPoint::new(k, b, d)).collect()).map_err(to_py)
}

/// Samples `n` points from `circle`, `sphere` or `uniform-box`.
#[pyfunction]
#[pyo3(signature = (shape, n, noise=0.0, seed=0, box_dim=None))]
fn generate(shape: &str, n: usize, noise: f64, seed: u64, box_dim: Option<usize>) -> PyResult<Vec<Vec<f64>>> {
    let mut shape: Shape = shape.parse().map_err(to_py)?;
    if let (Shape::UniformBox(_), Some(d)) = (shape, box_dim) {
        shape = Shape::UniformBox(d);
    }
    topoflow::generate::generate(shape, n, noise, seed).map(|x| rows(&x)).map_err(to_py)
}

/// Vietoris-Rips persistence diagram as `(dim, birth, death)` tuples.
#[pyfunction]
#[pyo3(signature = (points, dims=vec![0, 1], max_dim=None, max_radius=None))]
fn diagram(
    points: Vec<Vec<f64>>,
    dims: Vec<usize>,
    max_dim: Option<usize>,
    max_radius: Option<f64>,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let x = cloud(points)?;
    let max_dim = max_dim.unwrap_or(dims.iter().copied().max().unwrap_or(0) + 1);
    let c = build_filtration_with_budget(&x, max_dim, max_radius, simplex_budget_from_env()).map_err(to_py)?;
    compute_persistence(&c, &dims).map(|d| diagram_rows(&d)).map_err(to_py)
}

/// Sum of the `k` largest finite persistences.
#[pyfunction]
fn pers_k(diagram: Vec<(usize, f64, f64)>, k: usize) -> PyResult<f64> {
    Ok(losses::pers_k(&diagram_from(&diagram)?, k))
}

/// Upper bound on the Lipschitz constant of a fitted field.
#[pyfunction]
fn lipschitz_bound(kappa: f64, sigma: f64, dim: usize, pers_k: f64) -> f64 {
    diffeo::lipschitz_bound(kappa, sigma, dim, pers_k)
}

/// A persistence-based loss on Vietoris-Rips diagrams.
#[pyclass(module = "pytopoflow", frozen)]
struct Loss {
    pipeline: LossPipeline,
}

#[pymethods]
impl Loss {
    #[new]
    #[pyo3(signature = (family="simplify", dims=vec![1], top_k=None, target=None, box_region=None, max_radius=None))]
    fn new(
        family: &str,
        dims: Vec<usize>,
        top_k: Option<usize>,
        target: Option<Vec<(usize, f64, f64)>>,
        box_region: Option<(Vec<f64>, Vec<f64>, f64)>,
        max_radius: Option<f64>,
    ) -> PyResult<Self> {
        let family: LossFamily = family.parse().map_err(to_py)?;
        let selection = match (top_k, family) {
            (Some(k), _) => Selection::TopK(k),
            (None, LossFamily::Augment) => Selection::TopK(1),
            (None, _) => Selection::All,
        };
        let target = target.as_deref().map(diagram_from).transpose()?;
        let mut spec = LossSpec::new(family, dims, selection, target).map_err(to_py)?;
        if let Some((lower, upper, weight)) = box_region {
            let region = BoxRegion::new(lower, upper).map_err(to_py)?;
            spec = spec.with_regularizer(BoxRegularizer { region, weight });
        }
        Ok(Self {
            pipeline: LossPipeline::new(spec).with_max_radius(max_radius),
        })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.pipeline.loss.family().name()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.pipeline.loss.hom_dims().to_vec()
    }

    /// Loss value, including the weighted box regularizer.
    fn __call__(&self, points: Vec<Vec<f64>>) -> PyResult<f64> {
        self.pipeline.loss_value(&cloud(points)?).map_err(to_py)
    }

    fn diagram(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<(usize, f64, f64)>> {
        self.pipeline.diagram(&cloud(points)?).map(|d| diagram_rows(&d)).map_err(to_py)
    }

    /// `(loss, support, vectors)`: the sparse topological gradient.
    fn gradient(&self, points: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>, Vec<Vec<f64>>)> {
        let x = cloud(points)?;
        let e = self.pipeline.evaluate(&x).map_err(to_py)?;
        let g = pullback(&e.diagram, &e.cotangent, &x).map_err(to_py)?;
        let vectors = (0..g.len()).map(|k| g.vector(k).to_vec()).collect();
        Ok((e.loss, g.support().to_vec(), vectors))
    }

    /// Dense gradient of the full loss, one row per point.
    fn dense_gradient(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = cloud(points)?;
        let e = self.pipeline.evaluate(&x).map_err(to_py)?;
        let mut dense = e.gradient.densify();
        if let Some(reg) = &e.reg_gradient {
            dense.iter_mut().zip(reg).for_each(|(a, b)| *a += b);
        }
        Ok(dense.chunks(x.dim()).map(<[f64]>::to_vec).collect())
    }

    fn __repr__(&self) -> String {
        format!("Loss(family={:?}, dims={:?})", self.family(), self.dims())
    }
}

/// Gaussian kernel vector field interpolating gradient vectors at centers.
#[pyclass(module = "pytopoflow", frozen)]
struct Interpolant {
    inner: diffeo::Interpolant,
}

#[pymethods]
impl Interpolant {
    #[staticmethod]
    fn fit(centers: Vec<Vec<f64>>, vectors: Vec<Vec<f64>>, sigma: f64) -> PyResult<Self> {
        let c = cloud(centers)?;
        let v = cloud(vectors)?;
        if v.len() != c.len() || v.dim() != c.dim() {
            return Err(PyValueError::new_err("centers and vectors must have the same shape"));
        }
        diffeo::fit(c.coords(), v.coords(), c.dim(), sigma, &JitterPolicy::default())
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    /// Fits the field to a loss gradient at `points`, merging coincident support points.
    #[staticmethod]
    fn from_gradient(loss: &Loss, points: Vec<Vec<f64>>, sigma: f64) -> PyResult<Self> {
        let x = cloud(points)?;
        let e = loss.pipeline.evaluate(&x).map_err(to_py)?;
        let c = consolidate(&e.gradient, &x, 1e-9);
        diffeo::fit_constraints(&c, sigma, &JitterPolicy::default())
            .map(|inner| Self { inner })
            .map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    #[getter]
    fn jitter_used(&self) -> f64 {
        self.inner.jitter_used()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __call__(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = cloud(points)?;
        let v = self.inner.evaluate_cloud(&x).map_err(to_py)?;
        Ok(v.chunks(x.dim()).map(<[f64]>::to_vec).collect())
    }

    fn jacobian(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        if point.len() != self.inner.dim() {
            return Err(PyValueError::new_err("point has the wrong dimension"));
        }
        Ok(self.inner.jacobian(&point).chunks(point.len()).map(<[f64]>::to_vec).collect())
    }

    fn lipschitz_upper(&self) -> f64 {
        self.inner.lipschitz_upper()
    }

    /// Largest Jacobian spectral norm over the probe points.
    fn empirical_lipschitz(&self, probes: Vec<Vec<f64>>) -> PyResult<f64> {
        let p = cloud(probes)?;
        if p.dim() != self.inner.dim() {
            return Err(PyValueError::new_err("probes have the wrong dimension"));
        }
        Ok(self.inner.empirical_lipschitz(p.coords()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Interpolant(centers={}, dim={}, sigma={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.sigma()
        )
    }
}

/// A recorded, replayable sequence of diffeomorphic steps.
#[pyclass(module = "pytopoflow", frozen)]
struct Flow {
    inner: optimizer::Flow,
}

#[pymethods]
impl Flow {
    #[new]
    fn new(dim: usize) -> Self {
        Self {
            inner: optimizer::Flow::new(dim),
        }
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        optimizer::Flow::load(path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        optimizer::Flow::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Field and step size of step `k`.
    fn step(&self, k: usize) -> PyResult<(Interpolant, f64)> {
        let s = self
            .inner
            .steps()
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("flow has {} steps", self.inner.len())))?;
        Ok((Interpolant { inner: s.field.clone() }, s.lr))
    }

    fn apply(&self, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        optimizer::apply_flow(&self.inner, &cloud(points)?).map(|y| rows(&y)).map_err(to_py)
    }

    /// `(points, converged)`: pulls points back through the flow.
    fn invert(&self, points: Vec<Vec<f64>>) -> PyResult<(Vec<Vec<f64>>, bool)> {
        let (y, report) = optimizer::invert_flow(&self.inner, &cloud(points)?).map_err(to_py)?;
        Ok((rows(&y), report.converged()))
    }

    fn __repr__(&self) -> String {
        format!("Flow(dim={}, steps={})", self.inner.dim(), self.inner.len())
    }
}

/// Output of [`optimize`].
#[pyclass(module = "pytopoflow", frozen, get_all)]
struct RunResult {
    cloud: Vec<Vec<f64>>,
    flow: Py<Flow>,
    stop: String,
    initial_val_loss: f64,
    /// `(epoch, train_loss, val_loss or None, support)` per epoch.
    trace: Vec<(usize, f64, Option<f64>, usize)>,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn epochs(&self) -> usize {
        self.trace.len()
    }

    fn __repr__(&self) -> String {
        format!("RunResult(epochs={}, stop={:?})", self.trace.len(), self.stop)
    }
}

/// Runs vanilla or diffeomorphic descent from `points`.
#[pyfunction]
#[pyo3(signature = (
    points, loss, mode="diffeo", lr=0.1, sigma=0.1, subsample=None, epochs=250,
    seed=0, stop_eps=None, val_reps=None, val_every=1, record_clock=true
))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    points: Vec<Vec<f64>>,
    loss: &Loss,
    mode: &str,
    lr: f64,
    sigma: f64,
    subsample: Option<usize>,
    epochs: usize,
    seed: u64,
    stop_eps: Option<f64>,
    val_reps: Option<usize>,
    val_every: usize,
    record_clock: bool,
) -> PyResult<RunResult> {
    let x0 = cloud(points)?;
    let mode: Mode = mode.parse().map_err(to_py)?;
    let stop = match stop_eps {
        Some(eps) => StopRule::Threshold { eps },
        None => StopRule::default_for(loss.pipeline.loss.family()),
    };
    let cfg = OptimConfig {
        mode,
        lr,
        sigma,
        subsample,
        epochs,
        stop,
        val_reps,
        val_every,
        seed,
        record_clock,
        ..OptimConfig::default()
    };
    let pipeline = &loss.pipeline;
    let out = py.detach(|| optimizer::run(&x0, pipeline, &cfg)).map_err(to_py)?;
    let trace = out
        .trace
        .records
        .iter()
        .map(|r: &EpochRecord| (r.epoch, r.train_loss, r.val_loss, r.support))
        .collect();
    let stop = match out.stop {
        StopReason::MaxEpochs => "max-epochs",
        StopReason::Threshold => "threshold",
        StopReason::Ema => "ema",
        StopReason::Increase => "increase",
    };
    Ok(RunResult {
        cloud: rows(&out.cloud),
        flow: Py::new(py, Flow { inner: out.flow })?,
        stop: stop.into(),
        initial_val_loss: out.trace.initial_val_loss,
        trace,
    })
}

#[pymodule]
fn pytopoflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("CapacityError", m.py().get_type::<CapacityError>())?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(diagram, m)?)?;
    m.add_function(wrap_pyfunction!(pers_k, m)?)?;
    m.add_function(wrap_pyfunction!(lipschitz_bound, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_class::<Loss>()?;
    m.add_class::<Interpolant>()?;
    m.add_class::<Flow>()?;
    m.add_class::<RunResult>()?;
    Ok(())
}
