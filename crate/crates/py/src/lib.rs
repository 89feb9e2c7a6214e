//! Python bindings: the spike potential, causal classification, geodesics, endpoint
//! classification, the deficiency solution and the norm map. Reports come back as dicts.

use kgsa_core::geodesic::{self, GeodesicError, GeodesicOptions, PhasePoint};
use kgsa_core::geometry::{self, Covector, GeometryError, Metric, SpacetimePoint, TangentVector};
use kgsa_core::normmap::{self, GridSpec, NormMapError};
use kgsa_core::potential::{PotentialError, SpikeFamily, WidthRule};
use kgsa_core::reduced::{self, ReducedError};
use kgsa_core::weyl::{self, Endpoint, PsiOptions, WeylError, WeylOptions};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pythonize::pythonize;
use serde::Serialize;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn potential_err(e: PotentialError) -> PyErr {
    match e {
        PotentialError::NonConvergence { .. } => runtime_error(e),
        _ => value_error(e),
    }
}

fn geodesic_err(e: GeodesicError) -> PyErr {
    match e {
        GeodesicError::ToleranceFailure(_) | GeodesicError::NoBarrier { .. } => runtime_error(e),
        _ => value_error(e),
    }
}

fn geometry_err(e: GeometryError) -> PyErr {
    value_error(e)
}

fn weyl_err(e: WeylError) -> PyErr {
    match e {
        WeylError::Solver(_) => runtime_error(e),
        _ => value_error(e),
    }
}

fn reduced_err(e: ReducedError) -> PyErr {
    runtime_error(e)
}

fn normmap_err(e: NormMapError) -> PyErr {
    match e {
        NormMapError::Io(_) | NormMapError::Csv(_) => runtime_error(e),
        _ => value_error(e),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn point(c: [f64; 4]) -> SpacetimePoint {
    SpacetimePoint::new(c[0], c[1], c[2], c[3])
}

/// V(x) = −x⁴ + Σσₙ(x) for a width rule εₙ = min(cap, scale·(n+1)^−exponent).
#[pyclass(module = "kgsa")]
struct Potential {
    inner: SpikeFamily,
}

#[pymethods]
impl Potential {
    #[new]
    #[pyo3(signature = (cap = 0.4, scale = 0.25, exponent = 3.5, tol = 1e-10, spikes = true))]
    fn new(cap: f64, scale: f64, exponent: f64, tol: f64, spikes: bool) -> PyResult<Self> {
        let inner = if spikes {
            SpikeFamily::new(WidthRule { cap, scale, exponent }, tol).map_err(potential_err)?
        } else {
            SpikeFamily::disabled()
        };
        Ok(Potential { inner })
    }

    #[getter]
    fn spikes(&self) -> bool {
        self.inner.enabled()
    }

    /// Calibrates every spike whose support starts at or below |x_max|.
    fn prepare(&mut self, x_max: f64) -> PyResult<()> {
        self.inner.prepare(x_max).map_err(potential_err)
    }

    /// V or its first or second derivative at x.
    #[pyo3(signature = (x, order = 0))]
    fn __call__(&self, x: f64, order: u8) -> PyResult<f64> {
        if order > 2 {
            return Err(value_error(format!("derivative order {order} above 2")));
        }
        Ok(self.inner.eval(x, order))
    }

    /// Calibration data for spike n ≥ 1.
    fn spike<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyAny>> {
        let s = self.inner.spike(n).map_err(potential_err)?;
        #[derive(Serialize)]
        struct Spike {
            n: usize,
            left: f64,
            width: f64,
            amplitude: f64,
            peak_t: f64,
            sup_residual: f64,
        }
        to_py(
            py,
            &Spike {
                n: s.n,
                left: s.center_left,
                width: s.width,
                amplitude: s.amplitude + s.amplitude_lo,
                peak_t: s.peak_t,
                sup_residual: s.sup_residual,
            },
        )
    }

    /// (partial sums of Σεₙn², closed-form bound, every partial sum ≤ 0.66).
    fn summability(&self, n_max: usize) -> (Vec<f64>, f64, bool) {
        let r = self.inner.check_summability(n_max);
        (r.partial_sums, r.bound, r.pass)
    }

    fn __repr__(&self) -> String {
        let r = self.inner.rule();
        if self.inner.enabled() {
            format!("Potential(cap={}, scale={}, exponent={})", r.cap, r.scale, r.exponent)
        } else {
            "Potential(spikes=False)".to_string()
        }
    }
}

/// Reduced momenta (p_y, p_z, p_η) labelling one Fourier sector.
#[pyclass(module = "kgsa", frozen, eq, skip_from_py_object)]
#[derive(Clone, Copy, PartialEq)]
struct ReducedParams {
    #[pyo3(get)]
    p_y: f64,
    #[pyo3(get)]
    p_z: f64,
    #[pyo3(get)]
    p_eta: f64,
}

impl ReducedParams {
    fn core(&self) -> reduced::ReducedParams {
        reduced::ReducedParams::new(self.p_y, self.p_z, self.p_eta)
    }
}

#[pymethods]
impl ReducedParams {
    #[new]
    fn new(p_y: f64, p_z: f64, p_eta: f64) -> Self {
        ReducedParams { p_y, p_z, p_eta }
    }

    /// W(x) = p_z²V(x) + 2p_η p_z + p_y².
    fn potential(&self, v: &Potential, x: f64) -> f64 {
        reduced::reduced_potential(&v.inner, &self.core(), x)
    }

    fn __repr__(&self) -> String {
        format!("ReducedParams(p_y={}, p_z={}, p_eta={})", self.p_y, self.p_z, self.p_eta)
    }
}

/// Causal character of X at p: (kind, orientation).
#[pyfunction]
fn classify_vector(v: &Potential, p: [f64; 4], x: [f64; 4]) -> (String, String) {
    let c = Metric::new(&v.inner).classify(&point(p), &TangentVector::new(x[0], x[1], x[2], x[3]));
    (format!("{:?}", c.kind), format!("{:?}", c.orientation))
}

/// Slacks of the four cone inequalities for a causal future X at p with |x| inside spike n.
#[pyfunction]
fn cone_inequalities<'py>(py: Python<'py>, v: &Potential, p: [f64; 4], x: [f64; 4], n: usize) -> PyResult<Bound<'py, PyAny>> {
    let r = geometry::cone_inequalities(&Metric::new(&v.inner), &point(p), &TangentVector::new(x[0], x[1], x[2], x[3]), n)
        .map_err(geometry_err)?;
    to_py(py, &r)
}

/// Bounding box of the causal diamond between p and q.
#[pyfunction]
fn diamond_bounds<'py>(py: Python<'py>, p: [f64; 4], q: [f64; 4]) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &geometry::diamond_bounds(&point(p), &point(q)))
}

/// Barrier |x| ≤ D and the |ż| bound for initial data (point, momentum covector).
#[pyfunction]
fn predict_barrier<'py>(py: Python<'py>, v: &Potential, point_: [f64; 4], momentum: [f64; 4]) -> PyResult<Bound<'py, PyAny>> {
    let s = PhasePoint::new(point(point_), Covector::new(momentum[0], momentum[1], momentum[2], momentum[3]));
    to_py(py, &geodesic::predict_barrier(&v.inner, &s).map_err(geodesic_err)?)
}

/// Integrates the geodesic to λ = ±lambda_max. Returns the drift report and the sampled
/// states [λ, η, z, x, y, p_η, p_z, p_x, p_y].
#[pyfunction]
#[pyo3(signature = (v, point_, momentum, lambda_max = 1000.0, tol = 1e-10, sample_stride = 100))]
fn integrate_geodesic<'py>(
    py: Python<'py>,
    v: &Potential,
    point_: [f64; 4],
    momentum: [f64; 4],
    lambda_max: f64,
    tol: f64,
    sample_stride: usize,
) -> PyResult<(Bound<'py, PyAny>, Vec<[f64; 9]>)> {
    let s = PhasePoint::new(point(point_), Covector::new(momentum[0], momentum[1], momentum[2], momentum[3]));
    let opts = GeodesicOptions {
        sample_stride,
        ..GeodesicOptions::new(lambda_max, tol)
    };
    let fam = &v.inner;
    let (t, d) = py.detach(|| geodesic::integrate(fam, &s, &opts)).map_err(geodesic_err)?;
    let samples = t
        .samples
        .iter()
        .map(|s| {
            let (p, k) = (s.point, s.momentum);
            [s.lambda, p.eta, p.z, p.x, p.y, k.eta, k.z, k.x, k.y]
        })
        .collect();
    Ok((to_py(py, &d)?, samples))
}

/// Weyl disk classification of one endpoint at spectral parameter λ.
#[pyfunction]
#[pyo3(signature = (v, rp, lambda_im = 1.0, plus_infinity = true, l_max = 40.0, tol = 1e-10))]
fn classify_endpoint<'py>(
    py: Python<'py>,
    v: &Potential,
    rp: &ReducedParams,
    lambda_im: f64,
    plus_infinity: bool,
    l_max: f64,
    tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let end = if plus_infinity { Endpoint::PlusInfinity } else { Endpoint::MinusInfinity };
    let (fam, core) = (&v.inner, rp.core());
    let r = py
        .detach(|| weyl::classify_endpoint(fam, &core, Complex64::new(0.0, lambda_im), end, &WeylOptions::new(l_max, tol)))
        .map_err(weyl_err)?;
    to_py(py, &r)
}

/// Deficiency indices (n₊, n₋) and the underlying reports at λ = ±i.
#[pyfunction]
#[pyo3(signature = (v, rp, l_max = 40.0, tol = 1e-10))]
fn deficiency_indices<'py>(py: Python<'py>, v: &Potential, rp: &ReducedParams, l_max: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let (fam, core) = (&v.inner, rp.core());
    let r = py
        .detach(|| weyl::deficiency_indices(fam, &core, &WeylOptions::new(l_max, tol)))
        .map_err(weyl_err)?;
    to_py(py, &r)
}

/// The even solution of (H* + i)ψ = 0 with ψ(0) = 1 on [−L, L]: norm ladder, tail bound,
/// parity defect and collocation residual.
#[pyfunction]
#[pyo3(signature = (v, rp, l = 60.0, tol = 1e-10))]
fn deficiency_psi<'py>(py: Python<'py>, v: &Potential, rp: &ReducedParams, l: f64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    #[derive(Serialize)]
    struct Psi {
        norm: f64,
        norm_with_tail: f64,
        norm_ladder: Vec<(f64, f64)>,
        tail_bound: f64,
        parity_defect: Option<f64>,
        collocation: Option<weyl::CollocationReport>,
        max_abs: f64,
    }
    let (fam, core) = (&v.inner, rp.core());
    let s = py
        .detach(|| {
            let mut o = PsiOptions::new(tol);
            o.record_samples = false;
            weyl::deficiency_psi(fam, &core, l, &o)
        })
        .map_err(weyl_err)?;
    to_py(
        py,
        &Psi {
            norm: s.norm(),
            norm_with_tail: s.norm_with_tail(),
            norm_ladder: s.norm_ladder.clone(),
            tail_bound: s.tail_bound,
            parity_defect: s.parity_defect,
            collocation: s.collocation,
            max_abs: s.max_abs,
        },
    )
}

/// Doubling increments of the L¹ conditions on the LG perturbation.
#[pyfunction]
fn l1_condition_check<'py>(py: Python<'py>, v: &Potential, rp: &ReducedParams) -> PyResult<Bound<'py, PyAny>> {
    let (fam, core) = (&v.inner, rp.core());
    let r = py.detach(|| reduced::l1_condition_check(fam, &core)).map_err(reduced_err)?;
    to_py(py, &r)
}

/// ‖ψ‖ on the cube [lo, hi]³ with `count` points per axis, and the threshold M below which
/// a fraction `target` of the grid lies. Returns (points, threshold report).
#[pyfunction]
#[pyo3(signature = (v, lo = 1.0, hi = 2.0, count = 9, l = 60.0, tol = 1e-10, target = 0.5))]
fn norm_map<'py>(
    py: Python<'py>,
    v: &Potential,
    lo: f64,
    hi: f64,
    count: usize,
    l: f64,
    tol: f64,
    target: f64,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let fam = &v.inner;
    let grid = py
        .detach(|| normmap::grid_norms(fam, &GridSpec::cube(lo, hi, count), l, tol))
        .map_err(normmap_err)?;
    let t = normmap::find_threshold(&grid, target).map_err(normmap_err)?;
    Ok((to_py(py, &grid.points)?, to_py(py, &t)?))
}

#[pymodule]
fn kgsa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Potential>()?;
    m.add_class::<ReducedParams>()?;
    m.add_function(wrap_pyfunction!(classify_vector, m)?)?;
    m.add_function(wrap_pyfunction!(cone_inequalities, m)?)?;
    m.add_function(wrap_pyfunction!(diamond_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(predict_barrier, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_geodesic, m)?)?;
    m.add_function(wrap_pyfunction!(classify_endpoint, m)?)?;
    m.add_function(wrap_pyfunction!(deficiency_indices, m)?)?;
    m.add_function(wrap_pyfunction!(deficiency_psi, m)?)?;
    m.add_function(wrap_pyfunction!(l1_condition_check, m)?)?;
    m.add_function(wrap_pyfunction!(norm_map, m)?)?;
    Ok(())
}
