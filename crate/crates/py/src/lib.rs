//! Python bindings: wavelet systems, section matrices, coherence and
//! balancing analysis, sample allocation and the weighted ℓ¹ solver.

use cs_lab_core::analysis::{self, balancing_scan, local_coherence, Weights};
use cs_lab_core::reconstruct::{self, Mode, ReconstructionSetup, Signal};
use cs_lab_core::sampling::{allocate_samples, AllocationParams, LevelScheme};
use cs_lab_core::solver::{solve_wqcbp, SolveReport, SolveRequest, SolverOptions};
use cs_lab_core::walsh::{fwht_sequency, Normalization};
use cs_lab_core::{assemble_section, BasisIndex, CsError, Family, SectionMatrix};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(cs_lab, ResourceLimit, PyRuntimeError);

type ScanResult = (Option<u32>, Vec<(u32, f64)>);

fn err(e: CsError) -> PyErr {
    match e {
        CsError::SizeLimit(_) | CsError::EnumerationCap { .. } | CsError::ScanCap { .. } => {
            ResourceLimit::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[pyclass(name = "WaveletSystem", module = "cs_lab", frozen)]
struct PyWaveletSystem {
    inner: cs_lab_core::WaveletSystem,
}

#[pymethods]
impl PyWaveletSystem {
    #[new]
    #[pyo3(signature = (nu, j0, family = "db"))]
    fn new(nu: u32, j0: u32, family: &str) -> PyResult<Self> {
        let family: Family = family.parse().map_err(err)?;
        let inner = cs_lab_core::WaveletSystem::new(nu, j0, family).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn nu(&self) -> u32 {
        self.inner.nu()
    }

    #[getter]
    fn j0(&self) -> u32 {
        self.inner.j0()
    }

    #[getter]
    fn lowpass(&self) -> Vec<f64> {
        self.inner.lowpass().to_vec()
    }

    #[getter]
    fn has_recovery_guarantee(&self) -> bool {
        self.inner.has_recovery_guarantee()
    }

    /// Leading `n × m` block of the change-of-basis matrix.
    #[pyo3(signature = (n, m, quality = 16))]
    fn section(&self, py: Python<'_>, n: usize, m: usize, quality: u32) -> PyResult<PySection> {
        let sys = self.inner.clone();
        let inner = py
            .detach(move || assemble_section(&sys, n, m, quality))
            .map_err(err)?;
        Ok(PySection { inner })
    }

    /// `(q, θ)` pairs for `M = 2^k`, `N = 2^{k+q}` up to the first `q`
    /// whose `θ` reaches `target`.
    #[pyo3(signature = (k, target, quality = 16, max_q = 6))]
    fn balancing_scan(
        &self,
        py: Python<'_>,
        k: u32,
        target: f64,
        quality: u32,
        max_q: u32,
    ) -> PyResult<ScanResult> {
        let sys = self.inner.clone();
        let scan = py
            .detach(move || balancing_scan(&sys, k, target, quality, max_q))
            .map_err(err)?;
        Ok((scan.q, scan.trace))
    }

    fn __repr__(&self) -> String {
        format!("WaveletSystem({})", self.inner.label())
    }
}

#[pyclass(name = "Section", module = "cs_lab", frozen)]
struct PySection {
    inner: SectionMatrix,
}

#[pymethods]
impl PySection {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.rows(), self.inner.cols())
    }

    #[getter]
    fn entry_err(&self) -> f64 {
        self.inner.entry_err()
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.entries())
    }

    fn apply(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&v).map_err(err)
    }

    fn apply_adjoint(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_adjoint(&v).map_err(err)
    }

    /// Local coherences over the sampling bounds `n_bounds` and sparsity
    /// bounds `m_bounds`.
    fn coherence(&self, n_bounds: Vec<usize>, m_bounds: Vec<usize>) -> PyResult<Vec<Vec<f64>>> {
        let s = vec![0; n_bounds.len()];
        let scheme = LevelScheme::full(n_bounds, m_bounds, s).map_err(err)?;
        let table = local_coherence(&self.inner, &scheme).map_err(err)?;
        Ok(rows_of(table.matrix()))
    }

    /// `θ`, `‖G‖` and `‖G⁻¹‖` for the first `n` rows and `m` columns.
    fn balancing<'py>(&self, py: Python<'py>, n: usize, m: usize) -> PyResult<Bound<'py, PyDict>> {
        let g = analysis::balancing(&self.inner, n, m).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("theta", g.theta())?;
        d.set_item("g_norm", g.g_norm())?;
        d.set_item("g_inv_norm", g.g_inv_norm())?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Section({}x{})", self.inner.rows(), self.inner.cols())
    }
}

fn report_dict<'py>(py: Python<'py>, rep: &SolveReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", rep.xhat.clone())?;
    d.set_item("residual_norm", rep.residual_norm)?;
    d.set_item("objective", rep.objective)?;
    d.set_item("gap", rep.gap_estimate)?;
    d.set_item("iterations", rep.iterations)?;
    d.set_item("status", rep.status.as_str())?;
    d.set_item("polished", rep.polished)?;
    Ok(d)
}

/// Weighted quadratically constrained basis pursuit:
/// minimise `Σ w_i |x_i|` subject to `‖Ax − y‖ ≤ η`.
#[pyfunction]
#[pyo3(signature = (a, y, eta, weights = None, tol_feas = None, tol_gap = None, max_iters = None))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    y: Vec<f64>,
    eta: f64,
    weights: Option<Vec<f64>>,
    tol_feas: Option<f64>,
    tol_gap: Option<f64>,
    max_iters: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let a = matrix(&a)?;
    let defaults = SolverOptions::default();
    let opts = SolverOptions {
        tol_feas: tol_feas.unwrap_or(defaults.tol_feas),
        tol_gap: tol_gap.unwrap_or(defaults.tol_gap),
        max_iters: max_iters.unwrap_or(defaults.max_iters),
    };
    let w = weights.unwrap_or_else(|| vec![1.0; a.ncols()]);
    let rep = py
        .detach(|| solve_wqcbp(&SolveRequest::new(&a, &y, eta, w).with_options(opts)))
        .map_err(err)?;
    report_dict(py, &rep)
}

/// Per-level sample counts for the wavelet sampling condition.
#[pyfunction]
#[pyo3(signature = (n_bounds, s, theta, r0 = 0, q = 1, delta = 0.5, eps = 0.1, c_univ = 1.0))]
#[allow(clippy::too_many_arguments)]
fn allocate<'py>(
    py: Python<'py>,
    n_bounds: Vec<usize>,
    s: Vec<usize>,
    theta: f64,
    r0: usize,
    q: u32,
    delta: f64,
    eps: f64,
    c_univ: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = AllocationParams { delta, eps, c_univ };
    let a = allocate_samples(&n_bounds, &s, r0, theta, q, &params).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("m", a.m)?;
    d.set_item("demand", a.demand)?;
    d.set_item("bracket", a.bracket)?;
    d.set_item("log_term", a.log_term)?;
    d.set_item("converged", a.converged)?;
    Ok(d)
}

/// Walsh transform in sequency order; `normalization` is one of
/// `"none"`, `"analysis"` or `"synthesis"`.
#[pyfunction]
#[pyo3(signature = (c, normalization = "analysis"))]
fn fwht(c: Vec<f64>, normalization: &str) -> PyResult<Vec<f64>> {
    let n = match normalization {
        "none" => Normalization::Unnormalized,
        "analysis" => Normalization::Analysis,
        "synthesis" => Normalization::Synthesis,
        _ => {
            return Err(PyValueError::new_err(format!(
                "unknown normalization {normalization:?}"
            )))
        }
    };
    fwht_sequency(&c, n).map_err(err)
}

/// Recovers a wavelet expansion from its Walsh samples at `samples`.
///
/// `coefficients` holds `(kind, j, k, value)` with kind `"scaling"` or
/// `"wavelet"`. `weights` are per sparsity level over `weight_bounds`.
#[pyfunction(name = "reconstruct")]
#[pyo3(signature = (
    system, coefficients, samples, mode = "infinite", bandwidth = 32, eta = 1e-6,
    finite_scale = 5, weights = None, weight_bounds = None, quality = 16, grid_depth = 10,
    max_iters = None
))]
#[allow(clippy::too_many_arguments)]
fn reconstruct_py<'py>(
    py: Python<'py>,
    system: &PyWaveletSystem,
    coefficients: Vec<(String, u32, u64, f64)>,
    samples: Vec<usize>,
    mode: &str,
    bandwidth: usize,
    eta: f64,
    finite_scale: u32,
    weights: Option<Vec<f64>>,
    weight_bounds: Option<Vec<usize>>,
    quality: u32,
    grid_depth: u32,
    max_iters: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut terms = Vec::with_capacity(coefficients.len());
    for (kind, j, k, v) in coefficients {
        let idx = match kind.as_str() {
            "scaling" => BasisIndex::scaling(j, k),
            "wavelet" => BasisIndex::wavelet(j, k),
            _ => return Err(PyValueError::new_err(format!("unknown kind {kind:?}"))),
        };
        terms.push((idx, v));
    }
    let mode: Mode = mode.parse().map_err(err)?;
    let mut setup = ReconstructionSetup::new(mode, samples, bandwidth);
    setup.eta = eta;
    setup.finite_scale = finite_scale;
    setup.quality = quality;
    setup.grid_depth = grid_depth;
    if let Some(n) = max_iters {
        setup.max_iters = n;
    }
    if let Some(w) = weights {
        setup.weights = Some(Weights::new(w).map_err(err)?);
        setup.weight_bounds = weight_bounds.unwrap_or_default();
    }
    let sys = system.inner.clone();
    let signal = Signal::Coefficients(terms);
    let rec = py
        .detach(move || reconstruct::reconstruct(&sys, &signal, &setup))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mode", rec.mode.to_string())?;
    d.set_item("grid", rec.grid.values().to_vec())?;
    d.set_item("reference", rec.reference.values().to_vec())?;
    d.set_item("grid_error", rec.grid_error)?;
    d.set_item("coefficients", rec.coefficients)?;
    d.set_item("coefficient_error", rec.coefficient_error)?;
    match &rec.report {
        Some(rep) => d.set_item("solver", report_dict(py, rep)?)?,
        None => d.set_item("solver", py.None())?,
    }
    Ok(d)
}

#[pymodule]
fn cs_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWaveletSystem>()?;
    m.add_class::<PySection>()?;
    m.add("ResourceLimit", m.py().get_type::<ResourceLimit>())?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(fwht, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct_py, m)?)?;
    Ok(())
}
