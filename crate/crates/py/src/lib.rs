//! Python bindings: tensors, the spectral and group toolkit, the
//! Navier-Stokes generator, and the G-FNO model.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use gfno_core::group::{self, GroupElement, Stab};
use gfno_core::harness;
use gfno_core::operator::{self, GfnoModel, ModelConfig, PosEnc, SpectralPath, Variant};
use gfno_core::pde;
use gfno_core::spectral::{self, Layout};
use gfno_core::tensor::{Dtype, Tensor as CoreTensor};

fn err(e: gfno_core::Error) -> PyErr {
    match &e {
        gfno_core::Error::Io { .. }
        | gfno_core::Error::BadMagic { .. }
        | gfno_core::Error::Truncated { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Dense real or complex tensor; complex payloads interleave (re, im).
#[pyclass(name = "Tensor")]
#[derive(Clone)]
struct PyTensor {
    inner: CoreTensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    #[pyo3(signature = (shape, data, complex = false))]
    fn new(shape: Vec<usize>, data: Vec<f64>, complex: bool) -> PyResult<Self> {
        let dtype = if complex { Dtype::Complex } else { Dtype::Real };
        let expect: usize = shape.iter().product::<usize>() * dtype.lanes();
        if data.len() != expect {
            return Err(PyValueError::new_err(format!(
                "payload of {} lanes does not match shape {shape:?} ({expect} expected)",
                data.len()
            )));
        }
        Ok(PyTensor {
            inner: CoreTensor::from_raw(dtype, &shape, data),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (shape, complex = false))]
    fn zeros(shape: Vec<usize>, complex: bool) -> Self {
        let dtype = if complex { Dtype::Complex } else { Dtype::Real };
        PyTensor {
            inner: CoreTensor::zeros(dtype, &shape),
        }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn is_complex(&self) -> bool {
        !self.inner.is_real()
    }

    /// Raw payload: row-major f64 lanes, complex interleaved (re, im).
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn max_abs(&self) -> f64 {
        self.inner.max_abs()
    }

    fn norm2(&self) -> f64 {
        self.inner.norm2()
    }

    fn save(&self, path: String) -> PyResult<()> {
        gfno_core::io::write_tensor(&self.inner, path).map_err(err)
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(PyTensor {
            inner: gfno_core::io::read_tensor(path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Tensor(shape={:?}, dtype={})",
            self.inner.shape(),
            self.inner.dtype().name()
        )
    }
}

fn parse_forcing(s: &str) -> PyResult<pde::Forcing> {
    pde::Forcing::parse(s).map_err(err)
}

/// Exact-erf GeLU.
#[pyfunction]
fn gelu(x: &PyTensor) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: gfno_core::tensor::gelu(&x.inner).map_err(err)?,
    })
}

/// Unnormalized forward 2-D DFT of the last two axes.
#[pyfunction]
#[pyo3(signature = (x, centered = false))]
fn dft2(x: &PyTensor, centered: bool) -> PyResult<PyTensor> {
    let layout = if centered { Layout::Centered } else { Layout::Standard };
    Ok(PyTensor {
        inner: spectral::dft2(&x.inner, layout).map_err(err)?,
    })
}

/// Inverse 2-D DFT (carries the 1/(n0*n1) factor).
#[pyfunction]
#[pyo3(signature = (x, centered = false))]
fn idft2(x: &PyTensor, centered: bool) -> PyResult<PyTensor> {
    let layout = if centered { Layout::Centered } else { Layout::Standard };
    Ok(PyTensor {
        inner: spectral::idft2(&x.inner, layout).map_err(err)?,
    })
}

/// Act on a planar field: `rot` quarter turns about the grid center, an
/// optional horizontal reflection, then a circular shift.
#[pyfunction]
#[pyo3(signature = (x, rot, refl = false, shift = (0, 0)))]
fn act_plane(x: &PyTensor, rot: usize, refl: bool, shift: (i64, i64)) -> PyResult<PyTensor> {
    let stab = if refl || rot > 0 {
        Stab::p4m(rot, refl)
    } else {
        Stab::p4m(0, false)
    };
    let g = GroupElement::new(stab, [shift.0, shift.1]);
    Ok(PyTensor {
        inner: group::act_plane(&g, &x.inner).map_err(err)?,
    })
}

/// Gaussian random field used as the solver's initial condition.
#[pyfunction]
fn grf_sample(n: usize, seed: u64) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: pde::grf_sample(n, seed).map_err(err)?,
    })
}

/// The forcing fields: "sym" (rotation invariant) or "nonsym".
#[pyfunction]
fn forcing_field(kind: String, n: usize) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: pde::forcing_field(parse_forcing(&kind)?, n),
    })
}

/// Solve the vorticity equation, returning (T+1, n, n) frames.
#[pyfunction]
#[pyo3(signature = (n, nu, dt, t, forcing, seed))]
fn ns_solve(n: usize, nu: f64, dt: f64, t: usize, forcing: String, seed: u64) -> PyResult<PyTensor> {
    let cfg = pde::NsConfig {
        n,
        nu,
        dt,
        record_dt: 1.0,
        horizon: t,
        forcing: parse_forcing(&forcing)?,
        seed,
    };
    Ok(PyTensor {
        inner: pde::ns_solve(&cfg).map_err(err)?.frames,
    })
}

/// Relative L2 distance between equally shaped tensors.
#[pyfunction]
fn rel_l2(pred: &PyTensor, truth: &PyTensor) -> PyResult<f64> {
    harness::rel_l2(&pred.inner, &truth.inner).map_err(err)
}

/// Trigonometric interpolation onto a grid finer by `factor`.
#[pyfunction]
fn trig_interp(x: &PyTensor, factor: usize) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: spectral::trig_interp(&x.inner, factor).map_err(err)?,
    })
}

/// The G-FNO model (and its fno / radial-fno variants).
#[pyclass(name = "Model")]
struct PyModel {
    inner: GfnoModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (variant = "gfno".to_string(), group = "p4".to_string(), d_z = 10,
                        k = 8, layers = 4, pos_enc = "symmetric".to_string(), in_steps = 10,
                        seed = 0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        variant: String,
        group: String,
        d_z: usize,
        k: usize,
        layers: usize,
        pos_enc: String,
        in_steps: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let config = ModelConfig {
            variant: Variant::parse(&variant).map_err(err)?,
            group: operator::parse_group(&group).map_err(err)?,
            d_z,
            k,
            layers,
            pos_enc: PosEnc::parse(&pos_enc).map_err(err)?,
            in_steps,
        };
        Ok(PyModel {
            inner: GfnoModel::new(config, seed).map_err(err)?,
        })
    }

    /// Next-step prediction from a (in_steps, n, n) window.
    fn forward(&self, x: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor {
            inner: self
                .inner
                .forward_tensor(&x.inner, SpectralPath::Half)
                .map_err(err)?,
        })
    }

    /// Autoregressive rollout of `steps` frames, stacked as (steps, n, n).
    fn rollout(&self, window: &PyTensor, steps: usize) -> PyResult<PyTensor> {
        let frames = self.inner.rollout(&window.inner, steps).map_err(err)?;
        let refs: Vec<&CoreTensor> = frames.iter().collect();
        Ok(PyTensor {
            inner: CoreTensor::concat0(&refs).map_err(err)?,
        })
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn config_json(&self) -> String {
        self.inner.config.to_json()
    }

    fn save(&self, path: String) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[staticmethod]
    fn load(path: String) -> PyResult<Self> {
        Ok(PyModel {
            inner: GfnoModel::load(path).map_err(err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(variant={}, group={}, d_z={}, k={}, layers={}, params={})",
            self.inner.config.variant.name(),
            self.inner.config.group.name(),
            self.inner.config.d_z,
            self.inner.config.k,
            self.inner.config.layers,
            self.inner.param_count()
        )
    }
}

/// Expected parameter-scalar count for a configuration.
#[pyfunction]
#[pyo3(signature = (variant, group, d_z, k, layers, pos_enc, in_steps))]
fn param_count(
    variant: String,
    group: String,
    d_z: usize,
    k: usize,
    layers: usize,
    pos_enc: String,
    in_steps: usize,
) -> PyResult<usize> {
    let config = ModelConfig {
        variant: Variant::parse(&variant).map_err(err)?,
        group: operator::parse_group(&group).map_err(err)?,
        d_z,
        k,
        layers,
        pos_enc: PosEnc::parse(&pos_enc).map_err(err)?,
        in_steps,
    };
    Ok(operator::param_count(&config))
}

#[pymodule]
fn gfno_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(gelu, m)?)?;
    m.add_function(wrap_pyfunction!(dft2, m)?)?;
    m.add_function(wrap_pyfunction!(idft2, m)?)?;
    m.add_function(wrap_pyfunction!(act_plane, m)?)?;
    m.add_function(wrap_pyfunction!(grf_sample, m)?)?;
    m.add_function(wrap_pyfunction!(forcing_field, m)?)?;
    m.add_function(wrap_pyfunction!(ns_solve, m)?)?;
    m.add_function(wrap_pyfunction!(rel_l2, m)?)?;
    m.add_function(wrap_pyfunction!(trig_interp, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    Ok(())
}
