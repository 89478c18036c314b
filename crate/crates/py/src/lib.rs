//! Python bindings. Matrices cross the boundary as lists of rows, vectors
//! as flat lists of floats.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use orthoedit_core as core;
use orthoedit_core::trace::{self, PlantSpec, TokenRecord};
use orthoedit_core::verify::{self, Suite};

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> PyResult<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!(
            "{what}: row {bad} has {} entries, expected {cols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn features(v: &[Vec<f64>]) -> PyResult<core::VisualFeatureMatrix> {
    let d = v.first().map_or(0, Vec::len);
    core::VisualFeatureMatrix::new(matrix(v, d, "visual features")?, 0).map_err(to_py)
}

fn state(h: Vec<f64>) -> PyResult<core::HiddenState> {
    core::HiddenState::new(h).map_err(to_py)
}

#[pyclass(name = "EditConfig", module = "orthoedit", skip_from_py_object)]
#[derive(Clone)]
struct PyEditConfig {
    inner: core::EditConfig,
}

#[pymethods]
impl PyEditConfig {
    /// Defaults, or the named preset (`default`, `llava7b`).
    #[new]
    #[pyo3(signature = (preset = "default"))]
    fn new(preset: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::EditConfig::preset(preset).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: core::EditConfig::from_toml_str(text).map_err(to_py)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }
    #[setter]
    fn set_r(&mut self, v: usize) {
        self.inner.r = v;
    }
    #[getter]
    fn q(&self) -> usize {
        self.inner.q
    }
    #[setter]
    fn set_q(&mut self, v: usize) {
        self.inner.q = v;
    }
    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa
    }
    #[setter]
    fn set_kappa(&mut self, v: f64) {
        self.inner.kappa = v;
    }
    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0
    }
    #[setter]
    fn set_lambda0(&mut self, v: f64) {
        self.inner.lambda0 = v;
    }
    #[getter]
    fn lambda_max(&self) -> f64 {
        self.inner.lambda_max
    }
    #[setter]
    fn set_lambda_max(&mut self, v: f64) {
        self.inner.lambda_max = v;
    }
    #[getter]
    fn eps_cert(&self) -> f64 {
        self.inner.eps_cert
    }
    #[setter]
    fn set_eps_cert(&mut self, v: f64) {
        self.inner.eps_cert = v;
    }
    #[getter]
    fn gamma_v(&self) -> f64 {
        self.inner.gamma_v
    }
    #[setter]
    fn set_gamma_v(&mut self, v: f64) {
        self.inner.gamma_v = v;
    }
    #[getter]
    fn gamma_p(&self) -> f64 {
        self.inner.gamma_p
    }
    #[setter]
    fn set_gamma_p(&mut self, v: f64) {
        self.inner.gamma_p = v;
    }
    #[getter]
    fn window(&self) -> usize {
        self.inner.window
    }
    #[setter]
    fn set_window(&mut self, v: usize) {
        self.inner.window = v;
    }
    #[getter]
    fn anchor_layer(&self) -> u32 {
        self.inner.anchor_layer
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "EditConfig(r={}, q={}, kappa={}, lambda0={}, lambda_max={}, eps_cert={}, gamma_v={}, gamma_p={})",
            c.r, c.q, c.kappa, c.lambda0, c.lambda_max, c.eps_cert, c.gamma_v, c.gamma_p
        )
    }
}

/// Orthonormal basis; `columns` is `d` rows of `rank` entries.
#[pyclass(name = "Basis", module = "orthoedit", frozen)]
struct PyBasis {
    inner: core::OrthonormalBasis,
}

#[pymethods]
impl PyBasis {
    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    #[getter]
    fn columns(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.columns())
    }
    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values().to_vec()
    }
    #[getter]
    fn gap_degenerate(&self) -> bool {
        self.inner.is_gap_degenerate()
    }
    #[getter]
    fn zero_input(&self) -> bool {
        self.inner.zero_input()
    }
    fn project(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("vector length does not match basis dimension"));
        }
        Ok(self.inner.project(&x.into()).iter().copied().collect())
    }
    fn __repr__(&self) -> String {
        format!("Basis(dim={}, rank={})", self.inner.dim(), self.inner.rank())
    }
}

fn pair(u: &PyBasis, p: &PyBasis) -> PyResult<core::SubspacePair> {
    core::SubspacePair::new(u.inner.clone(), p.inner.clone()).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (v, h, eps = 1e-8))]
fn relevance_weights(v: Vec<Vec<f64>>, h: Vec<f64>, eps: f64) -> PyResult<Vec<f64>> {
    let w = core::relevance_weights(&features(&v)?, &state(h)?, eps).map_err(to_py)?;
    Ok(w.as_vector().iter().copied().collect())
}

#[pyfunction]
fn visual_basis(v: Vec<Vec<f64>>, w: Vec<f64>, r: usize) -> PyResult<PyBasis> {
    let w = core::RelevanceWeights::new(w.into()).map_err(to_py)?;
    Ok(PyBasis {
        inner: core::visual_basis(&features(&v)?, &w, r).map_err(to_py)?,
    })
}

#[pyfunction]
fn anti_prior_basis(text: Vec<Vec<f64>>, u: PyRef<'_, PyBasis>, q: usize) -> PyResult<PyBasis> {
    let t = matrix(&text, u.inner.dim(), "text cache")?;
    Ok(PyBasis {
        inner: core::anti_prior_basis(&t, &u.inner, q).map_err(to_py)?,
    })
}

/// Returns `(h_U, h_P, h_R)`.
#[pyfunction]
fn decompose(
    h: Vec<f64>,
    u: PyRef<'_, PyBasis>,
    p: PyRef<'_, PyBasis>,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let dec = pair(&u, &p)?.decompose(&state(h)?).map_err(to_py)?;
    let v = |x: &nalgebra::DVector<f64>| x.iter().copied().collect();
    Ok((v(&dec.visual), v(&dec.prior), v(&dec.residual)))
}

#[pyfunction]
fn edit_token<'py>(
    py: Python<'py>,
    h: Vec<f64>,
    u: PyRef<'_, PyBasis>,
    p: PyRef<'_, PyBasis>,
    cfg: PyRef<'_, PyEditConfig>,
) -> PyResult<Bound<'py, PyDict>> {
    let out = core::edit_token(&state(h)?, &pair(&u, &p)?, &cfg.inner).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("edited", out.edited.as_slice().to_vec())?;
    d.set_item("gated", out.gated)?;
    d.set_item("lambda_n", out.strengths.lambda_n)?;
    d.set_item("lambda_p", out.strengths.lambda_p)?;
    d.set_item("alpha_p", out.alpha_p)?;
    d.set_item("alpha_r", out.alpha_r)?;
    d.set_item("vcr_before", out.cert_before.vcr)?;
    d.set_item("pcr_before", out.cert_before.pcr)?;
    d.set_item("vcr_after", out.cert_after.vcr)?;
    d.set_item("pcr_after", out.cert_after.pcr)?;
    d.set_item("delta_u_norm", out.delta_u_norm)?;
    d.set_item("delta_p_norm", out.delta_p_norm)?;
    Ok(d)
}

/// Dense reference solution `x = (I + λ_n Π_⊥ + λ_p Π_P)⁻¹ h`.
#[pyfunction]
fn qp_oracle(
    h: Vec<f64>,
    u: PyRef<'_, PyBasis>,
    p: PyRef<'_, PyBasis>,
    lambda_n: f64,
    lambda_p: f64,
) -> PyResult<Vec<f64>> {
    let x = core::oracle::qp_oracle(&state(h)?, &u.inner, &p.inner, lambda_n, lambda_p)
        .map_err(to_py)?;
    Ok(x.iter().copied().collect())
}

fn record_dict<'py>(py: Python<'py>, r: &TokenRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("token_idx", r.token_idx)?;
    d.set_item("vcr_before", r.vcr_before)?;
    d.set_item("pcr_before", r.pcr_before)?;
    d.set_item("vcr_after", r.vcr_after)?;
    d.set_item("pcr_after", r.pcr_after)?;
    d.set_item("gated", r.gated)?;
    d.set_item("lambda_n", r.lambda_n)?;
    d.set_item("lambda_p", r.lambda_p)?;
    d.set_item("alpha_p", r.alpha_p)?;
    d.set_item("alpha_r", r.alpha_r)?;
    d.set_item("delta_u_norm", r.delta_u_norm)?;
    d.set_item("delta_p_norm", r.delta_p_norm)?;
    d.set_item("edit_micros", r.edit_micros)?;
    Ok(d)
}

/// Writes a planted trace to `out` and its ground truth to `out + ".gt"`
/// from a `key = value` plant spec.
#[pyfunction]
fn gen_planted_trace(spec: &str, out: &str) -> PyResult<u64> {
    let spec = PlantSpec::from_toml_str(spec).map_err(to_py)?;
    let (t, gt) = trace::gen_planted_trace(&spec).map_err(to_py)?;
    trace::write_trace(out, &t).map_err(|e| to_py(e.into()))?;
    trace::write_ground_truth(format!("{out}.gt"), &gt).map_err(|e| to_py(e.into()))?;
    Ok(t.header().file_len())
}

/// Replays a trace file; one dict per generated token.
#[pyfunction]
#[pyo3(signature = (path, cfg = None))]
fn replay<'py>(
    py: Python<'py>,
    path: &str,
    cfg: Option<PyRef<'_, PyEditConfig>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = cfg.map_or_else(core::EditConfig::llava7b, |c| c.inner);
    let t = trace::read_trace(path).map_err(|e| to_py(e.into()))?;
    let records = py
        .detach(|| trace::replay(&t, &cfg))
        .map_err(to_py)?;
    records.iter().map(|r| record_dict(py, r)).collect()
}

/// Runs a property suite; returns `(name, passed, worst_defect)` per
/// property.
#[pyfunction]
#[pyo3(signature = (suite = "all", trials = 100, seed = 0))]
fn verify_suite(py: Python<'_>, suite: &str, trials: usize, seed: u64) -> PyResult<Vec<(String, bool, f64)>> {
    let suite: Suite = suite.parse().map_err(to_py)?;
    if trials == 0 {
        return Err(PyValueError::new_err("trials must be >= 1"));
    }
    let reports = py.detach(|| verify::run_suite(suite, trials, seed, None));
    Ok(reports
        .into_iter()
        .map(|r| (r.property.name().to_string(), r.passed(), r.worst_defect))
        .collect())
}

#[pymodule]
fn orthoedit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEditConfig>()?;
    m.add_class::<PyBasis>()?;
    m.add_function(wrap_pyfunction!(relevance_weights, m)?)?;
    m.add_function(wrap_pyfunction!(visual_basis, m)?)?;
    m.add_function(wrap_pyfunction!(anti_prior_basis, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(edit_token, m)?)?;
    m.add_function(wrap_pyfunction!(qp_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(gen_planted_trace, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    Ok(())
}
