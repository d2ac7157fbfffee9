//! Python bindings for the core renderer: medium physics, the elliptical
//! direction table, and scene rendering.

use darts::eda::{build_table, eda_pdf, eda_sample, EdaTable, EdaTableConfig};
use darts::renderer::{
    render_time_gated_threads, render_transient_threads, SensorGate, StrategyConfig,
};
use darts::scene_desc::load_scene;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

fn to_py_err(e: darts::DartsError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Medium")]
#[derive(Clone)]
struct PyMedium {
    inner: darts::Medium,
}

#[pymethods]
impl PyMedium {
    #[new]
    #[pyo3(signature = (sigma_s, sigma_a, g, eta = 1.0, c = 299_792_458.0))]
    fn new(sigma_s: f64, sigma_a: f64, g: f64, eta: f64, c: f64) -> PyResult<Self> {
        Ok(PyMedium { inner: darts::Medium::new(sigma_s, sigma_a, g, eta, c).map_err(to_py_err)? })
    }

    #[getter]
    fn sigma_t(&self) -> f64 {
        self.inner.sigma_t
    }

    #[getter]
    fn diffusion(&self) -> f64 {
        self.inner.diffusion
    }

    #[getter]
    fn phase_speed(&self) -> f64 {
        self.inner.phase_speed()
    }

    fn mfp(&self) -> f64 {
        self.inner.mfp()
    }

    fn transmittance(&self, distance: f64) -> f64 {
        darts::medium::transmittance(distance, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Medium(sigma_s={}, sigma_a={}, g={}, eta={})",
            self.inner.sigma_s, self.inner.sigma_a, self.inner.g, self.inner.eta
        )
    }
}

/// Henyey-Greenstein phase value for the cosine of the scattering angle.
#[pyfunction]
fn hg_eval(cos_angle: f64, g: f64) -> f64 {
    darts::medium::hg_eval(cos_angle, g)
}

/// Transient diffusion flux at `position` for an emitter pulse at
/// `emitter_position` released at `emission_time`.
#[pyfunction]
fn da_flux(
    position: [f64; 3],
    emitter_position: [f64; 3],
    eval_time: f64,
    emission_time: f64,
    medium: &PyMedium,
) -> f64 {
    darts::diffusion::da_flux(&darts::diffusion::DaQuery {
        position: darts::Vec3::new(position[0], position[1], position[2]),
        emitter_position: darts::Vec3::new(
            emitter_position[0],
            emitter_position[1],
            emitter_position[2],
        ),
        eval_time,
        emission_time,
        medium: medium.inner,
    })
}

#[pyclass(name = "DirectionTable")]
struct PyDirectionTable {
    inner: EdaTable,
}

#[pymethods]
impl PyDirectionTable {
    /// Builds the table; `fast=True` uses a coarse grid for interactive use.
    #[staticmethod]
    #[pyo3(signature = (medium, seed = 0, fast = false))]
    fn build(medium: &PyMedium, seed: u64, fast: bool) -> PyDirectionTable {
        let config = if fast {
            EdaTableConfig {
                ratio_bins: 8,
                s_bins: 8,
                angular_bins: 64,
                s_min_mfp: 0.1,
                s_max_mfp: 20.0,
                mc_samples_per_bin: 512,
            }
        } else {
            EdaTableConfig::default()
        };
        PyDirectionTable { inner: build_table(&medium.inner, &config, seed) }
    }

    #[staticmethod]
    fn load(path: PathBuf, medium: &PyMedium) -> PyResult<PyDirectionTable> {
        Ok(PyDirectionTable {
            inner: EdaTable::load(&path, &medium.inner)
                .map_err(|e| PyIOError::new_err(e.to_string()))?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// Draws (cos_theta, phi, pdf) for foci separated by `c_focal` and a
    /// two-segment length budget `s_sum`.
    fn sample(&self, c_focal: f64, s_sum: f64, u1: f64, u2: f64) -> PyResult<(f64, f64, f64)> {
        eda_sample(&self.inner, c_focal, s_sum, u1, u2)
            .map_err(|_| PyValueError::new_err("query outside the table range"))
    }

    fn pdf(&self, c_focal: f64, s_sum: f64, cos_theta: f64) -> PyResult<f64> {
        eda_pdf(&self.inner, c_focal, s_sum, cos_theta)
            .map_err(|_| PyValueError::new_err("query outside the table range"))
    }
}

fn strategy_from_name(name: &str, alpha: f64) -> PyResult<StrategyConfig> {
    let mut cfg = match name {
        "vanilla" => StrategyConfig::vanilla(),
        "da" => StrategyConfig::da_only(),
        "eda" => StrategyConfig::eda_only(),
        "darts" => StrategyConfig::darts(),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown strategy {other:?}; expected vanilla, da, eda or darts"
            )))
        }
    };
    cfg.alpha = alpha;
    Ok(cfg)
}

/// Renders one time-gated image from a scene file. Returns
/// (width, height, flat row-major rgb floats).
#[pyfunction]
#[pyo3(signature = (scene_path, gate_start, gate_width, spp = 64, seed = 0, strategy = "darts",
                    alpha = 0.5, warp = true, threads = 0, table = None))]
#[allow(clippy::too_many_arguments)]
fn render_gated(
    scene_path: PathBuf,
    gate_start: f64,
    gate_width: f64,
    spp: usize,
    seed: u64,
    strategy: &str,
    alpha: f64,
    warp: bool,
    threads: usize,
    table: Option<&PyDirectionTable>,
) -> PyResult<(usize, usize, Vec<f32>)> {
    let (_, scene) = load_scene(&scene_path).map_err(to_py_err)?;
    let mut gate = SensorGate::gated(gate_start, gate_width);
    gate.warp = warp;
    gate.validate().map_err(to_py_err)?;
    let cfg = strategy_from_name(strategy, alpha)?;
    let (image, _) = render_time_gated_threads(
        &scene,
        &gate,
        &cfg,
        table.map(|t| &t.inner),
        spp,
        seed,
        threads,
    );
    Ok((image.width, image.height, image.data))
}

/// Renders a transient frame sequence. Returns
/// (width, height, list of per-frame flat rgb floats).
#[pyfunction]
#[pyo3(signature = (scene_path, gate_start, gate_width, frames, spp = 64, seed = 0,
                    strategy = "darts", alpha = 0.5, warp = true, threads = 0, table = None))]
#[allow(clippy::too_many_arguments)]
fn render_transient(
    scene_path: PathBuf,
    gate_start: f64,
    gate_width: f64,
    frames: usize,
    spp: usize,
    seed: u64,
    strategy: &str,
    alpha: f64,
    warp: bool,
    threads: usize,
    table: Option<&PyDirectionTable>,
) -> PyResult<(usize, usize, Vec<Vec<f32>>)> {
    let (_, scene) = load_scene(&scene_path).map_err(to_py_err)?;
    let mut gate = SensorGate::transient(gate_start, gate_width, frames);
    gate.warp = warp;
    gate.validate().map_err(to_py_err)?;
    let cfg = strategy_from_name(strategy, alpha)?;
    let (out, _) = render_transient_threads(
        &scene,
        &gate,
        &cfg,
        table.map(|t| &t.inner),
        spp,
        seed,
        threads,
    );
    Ok((out.width, out.height, out.frames.into_iter().map(|f| f.data).collect()))
}

#[pymodule]
fn darts_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMedium>()?;
    m.add_class::<PyDirectionTable>()?;
    m.add_function(wrap_pyfunction!(hg_eval, m)?)?;
    m.add_function(wrap_pyfunction!(da_flux, m)?)?;
    m.add_function(wrap_pyfunction!(render_gated, m)?)?;
    m.add_function(wrap_pyfunction!(render_transient, m)?)?;
    Ok(())
}
