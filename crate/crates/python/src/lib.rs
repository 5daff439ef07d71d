//! Python bindings: beams, angle sets and the main analyses.

use bellbeam_core::bench::{bench_chsh as core_bench_chsh, stripping_angle as core_stripping_angle, BenchMode, BenchOptions};
use bellbeam_core::chsh::{
    lhv_estimate_s, max_s_over_angles, s_from_correlations, ContinuousStrategy, LhvStrategy,
    RandomStrategy, SignStrategy,
};
use bellbeam_core::measurement::{correlation as core_correlation, joint_probabilities as core_joint};
use bellbeam_core::model::{schmidt_decompose, to_coherence, Angle, CoherenceMatrix};
use bellbeam_core::stochastic::{empirical_chsh, sample_ensemble, EnsembleConfig};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: bellbeam_core::Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Schmidt form of a beam: `kappa1 >= kappa2 >= 0`, orientation of `u_1`, intensity.
#[pyclass(name = "SchmidtBeam", module = "bellbeam", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PySchmidtBeam {
    inner: bellbeam_core::SchmidtBeam,
}

#[pymethods]
impl PySchmidtBeam {
    #[new]
    #[pyo3(signature = (kappa1_sq, orientation = 0.0, intensity = 1.0))]
    fn new(kappa1_sq: f64, orientation: f64, intensity: f64) -> PyResult<Self> {
        let inner = bellbeam_core::SchmidtBeam::from_kappa1_sq(kappa1_sq, orientation, intensity).map_err(to_py)?;
        Ok(PySchmidtBeam { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (intensity = 1.0))]
    fn thermal(intensity: f64) -> PyResult<Self> {
        let inner = bellbeam_core::SchmidtBeam::thermal(intensity).map_err(to_py)?;
        Ok(PySchmidtBeam { inner })
    }

    /// Schmidt decomposition of the coherence matrix `[[j11, j12], [conj j12, j22]]`.
    #[staticmethod]
    #[pyo3(signature = (j11, j22, j12_re = 0.0, j12_im = 0.0))]
    fn from_coherence(j11: f64, j22: f64, j12_re: f64, j12_im: f64) -> PyResult<Self> {
        let j = CoherenceMatrix::new(j11, j22, Complex64::new(j12_re, j12_im)).map_err(to_py)?;
        let inner = schmidt_decompose(&j).map_err(to_py)?;
        Ok(PySchmidtBeam { inner })
    }

    #[getter]
    fn kappa1(&self) -> f64 {
        self.inner.kappa1()
    }

    #[getter]
    fn kappa2(&self) -> f64 {
        self.inner.kappa2()
    }

    #[getter]
    fn orientation(&self) -> f64 {
        self.inner.lab_orientation().radians()
    }

    #[getter]
    fn intensity(&self) -> f64 {
        self.inner.intensity()
    }

    #[getter]
    fn orientation_unique(&self) -> bool {
        self.inner.orientation_unique()
    }

    fn degree_of_polarization(&self) -> f64 {
        self.inner.degree_of_polarization()
    }

    fn concurrence(&self) -> f64 {
        self.inner.concurrence()
    }

    /// `(j11, j22, re j12, im j12)` in the fixed frame.
    fn coherence(&self) -> (f64, f64, f64, f64) {
        let j = to_coherence(&self.inner);
        (j.j11(), j.j22(), j.j12().re, j.j12().im)
    }

    fn __repr__(&self) -> String {
        format!(
            "SchmidtBeam(kappa1={}, kappa2={}, orientation={}, intensity={})",
            self.inner.kappa1(),
            self.inner.kappa2(),
            self.inner.lab_orientation().radians(),
            self.inner.intensity()
        )
    }
}

/// Analyzer angles `(a, a', b, b')` in radians.
#[pyclass(name = "AngleSet", module = "bellbeam", frozen, from_py_object)]
#[derive(Clone, Copy)]
pub struct PyAngleSet {
    inner: bellbeam_core::AngleSet,
}

#[pymethods]
impl PyAngleSet {
    #[new]
    fn new(a: f64, a_prime: f64, b: f64, b_prime: f64) -> Self {
        PyAngleSet {
            inner: bellbeam_core::AngleSet::new(a, a_prime, b, b_prime),
        }
    }

    /// `(0, pi/4, pi/8, 3 pi/8)`.
    #[staticmethod]
    fn canonical() -> Self {
        PyAngleSet {
            inner: bellbeam_core::AngleSet::canonical(),
        }
    }

    fn as_tuple(&self) -> (f64, f64, f64, f64) {
        let [a, ap, b, bp] = self.inner.as_array().map(|x| x.radians());
        (a, ap, b, bp)
    }

    fn __repr__(&self) -> String {
        let (a, ap, b, bp) = self.as_tuple();
        format!("AngleSet(a={a}, a_prime={ap}, b={b}, b_prime={bp})")
    }
}

fn angles_or_canonical(angles: Option<PyAngleSet>) -> bellbeam_core::AngleSet {
    angles.map(|a| a.inner).unwrap_or_else(bellbeam_core::AngleSet::canonical)
}

/// `[[p11, p12], [p21, p22]]`.
#[pyfunction]
fn joint_probabilities(beam: PySchmidtBeam, a: f64, b: f64) -> [[f64; 2]; 2] {
    let t = core_joint(&beam.inner, Angle::new(a), Angle::new(b));
    [[t.p11, t.p12], [t.p21, t.p22]]
}

#[pyfunction]
fn correlation(beam: PySchmidtBeam, a: f64, b: f64) -> f64 {
    core_correlation(&beam.inner, Angle::new(a), Angle::new(b))
}

/// Analytic S at the given angles (canonical when omitted).
#[pyfunction]
#[pyo3(signature = (beam, angles = None))]
fn chsh(beam: PySchmidtBeam, angles: Option<PyAngleSet>) -> f64 {
    s_from_correlations(&beam.inner, &angles_or_canonical(angles)).s
}

/// `(angle set, S)` maximizing S.
#[pyfunction]
#[pyo3(signature = (beam, grid_resolution = 32))]
fn max_chsh(beam: PySchmidtBeam, grid_resolution: usize) -> PyResult<(PyAngleSet, f64)> {
    if grid_resolution < 8 {
        return Err(PyValueError::new_err("grid_resolution must be at least 8"));
    }
    let (set, s) = max_s_over_angles(&beam.inner, grid_resolution);
    Ok((PyAngleSet { inner: set }, s))
}

#[pyfunction]
fn stripping_angle(beam: PySchmidtBeam, b: f64) -> PyResult<f64> {
    core_stripping_angle(&beam.inner, Angle::new(b)).map(|s| s.radians()).map_err(to_py)
}

/// Monte Carlo S and its jackknife standard error.
#[pyfunction]
#[pyo3(signature = (beam, samples, seed = 0, angles = None))]
fn monte_carlo_chsh(py: Python<'_>, beam: PySchmidtBeam, samples: usize, seed: u64, angles: Option<PyAngleSet>) -> PyResult<(f64, f64)> {
    let set = angles_or_canonical(angles);
    py.detach(|| {
        let ens = sample_ensemble(&EnsembleConfig::new(beam.inner, samples, seed))?;
        empirical_chsh(&ens, &set).map(|(_, est)| (est.value, est.standard_error))
    })
    .map_err(to_py)
}

/// Runs the virtual bench. With `samples` the readings come from a seeded
/// Monte Carlo ensemble; otherwise they are analytic.
#[pyfunction]
#[pyo3(signature = (beam, angles = None, samples = None, seed = 0))]
fn bench_chsh<'py>(
    py: Python<'py>,
    beam: PySchmidtBeam,
    angles: Option<PyAngleSet>,
    samples: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let set = angles_or_canonical(angles);
    let (mode, cfg) = match samples {
        Some(n) => (BenchMode::MonteCarlo, Some(EnsembleConfig::new(beam.inner, n, seed))),
        None => (BenchMode::Analytic, None),
    };
    let v = py
        .detach(|| core_bench_chsh(&beam.inner, &set, mode, cfg.as_ref(), &BenchOptions::default()))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("s", v.s_value.s)?;
    out.set_item("standard_error", v.standard_error)?;
    out.set_item("correlations", v.s_value.breakdown.to_vec())?;
    let rows: Vec<(f64, f64, usize, f64, f64)> = v
        .rows
        .iter()
        .map(|r| {
            (
                r.readings.a.radians(),
                r.readings.b.radians(),
                r.readings.k,
                r.recovered.p_k1,
                r.recovered.p_k2,
            )
        })
        .collect();
    out.set_item("rows", rows)?;
    Ok(out)
}

/// S of a local hidden-variable strategy (`sign`, `continuous`, `random:<seed>`)
/// and its standard error.
#[pyfunction]
#[pyo3(signature = (strategy, samples, seed = 0, angles = None))]
fn lhv_chsh(py: Python<'_>, strategy: &str, samples: usize, seed: u64, angles: Option<PyAngleSet>) -> PyResult<(f64, f64)> {
    let strat: Box<dyn LhvStrategy + Send> = match strategy {
        "sign" => Box::new(SignStrategy),
        "continuous" => Box::new(ContinuousStrategy),
        other => match other.strip_prefix("random:").map(str::parse::<u64>) {
            Some(Ok(s)) => Box::new(RandomStrategy::generate(s)),
            _ => return Err(PyValueError::new_err(format!("unknown strategy '{other}'"))),
        },
    };
    let set = angles_or_canonical(angles);
    py.detach(|| lhv_estimate_s(strat.as_ref(), &set, samples, seed))
        .map(|e| (e.s.value, e.s.standard_error))
        .map_err(to_py)
}

#[pymodule]
fn bellbeam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySchmidtBeam>()?;
    m.add_class::<PyAngleSet>()?;
    m.add_function(wrap_pyfunction!(joint_probabilities, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(chsh, m)?)?;
    m.add_function(wrap_pyfunction!(max_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(stripping_angle, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(bench_chsh, m)?)?;
    m.add_function(wrap_pyfunction!(lhv_chsh, m)?)?;
    Ok(())
}
