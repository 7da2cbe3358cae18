//! Python bindings for the `vshmm` crate.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ::vshmm::averaging::{averaged_integrate_sampled, frozen_fixed_point};
use ::vshmm::problems::{self, exp1_frozen, ode_problem, pde_problem};
use ::vshmm::spectral::{self as sp, ModeClusters, SpectralState};
use ::vshmm::vshmm::{covering_radius as cover, integrate_with_schedule, torus_sampling_diagnostic};
use ::vshmm::{build_schedule, dns_integrate, verify_kernel, BaseStepper, Error, StepKernel, VshmmConfig, VshmmSchedule};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Parse(_) | Error::EmptyClusters(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "StepKernel", module = "vshmm", frozen, from_py_object)]
#[derive(Clone)]
struct PyStepKernel(StepKernel);

#[pymethods]
impl PyStepKernel {
    #[new]
    #[pyo3(signature = (name = "cosine", q = None))]
    fn new(name: &str, q: Option<u32>) -> PyResult<Self> {
        StepKernel::from_name(name, q).map(Self).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.0.name()
    }

    #[getter]
    fn q(&self) -> u32 {
        self.0.q()
    }

    fn eval(&self, phase: f64) -> PyResult<f64> {
        self.0.eval(phase).map_err(to_py)
    }

    fn theta(&self, phase: f64) -> PyResult<f64> {
        self.0.theta(phase).map_err(to_py)
    }

    fn theta_inverse(&self, u: f64) -> PyResult<f64> {
        self.0.theta_inverse(u).map_err(to_py)
    }

    /// `(moment_error, [derivative error at order r for r = 1..q])`.
    fn verify(&self) -> (f64, Vec<f64>) {
        let r = verify_kernel(&self.0);
        (r.moment_error, r.regularity_errors)
    }

    fn __repr__(&self) -> String {
        format!("StepKernel('{}', q={})", self.0.name(), self.0.q())
    }
}

#[pyclass(name = "VshmmConfig", module = "vshmm", from_py_object)]
#[derive(Clone)]
struct PyVshmmConfig(VshmmConfig);

#[pymethods]
impl PyVshmmConfig {
    #[new]
    #[pyo3(signature = (dt, macro_step, alpha, m = None, kernel = None, variable_steps = true, base = "rk4"))]
    fn new(
        dt: f64,
        macro_step: f64,
        alpha: Vec<f64>,
        m: Option<Vec<u32>>,
        kernel: Option<PyStepKernel>,
        variable_steps: bool,
        base: &str,
    ) -> PyResult<Self> {
        let mut cfg = VshmmConfig::new(dt, macro_step, alpha).with_base(BaseStepper::from_name(base).map_err(to_py)?);
        if let Some(m) = m {
            cfg = cfg.with_subperiods(m);
        }
        if let Some(k) = kernel {
            cfg = cfg.with_kernel(k.0);
        }
        if !variable_steps {
            cfg = cfg.constant_steps();
        }
        cfg.validate().map_err(to_py)?;
        Ok(Self(cfg))
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.micro_step
    }

    #[getter]
    fn macro_step(&self) -> f64 {
        self.0.macro_step
    }

    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.0.savings.clone()
    }

    #[getter]
    fn subperiods(&self) -> Vec<u32> {
        self.0.resolved_subperiods()
    }

    #[getter]
    fn variable_steps(&self) -> bool {
        self.0.variable_steps
    }

    /// Same settings with uniform mesoscopic steps.
    fn constant(&self) -> Self {
        Self(self.0.clone().constant_steps())
    }

    fn schedule(&self) -> PyResult<PySchedule> {
        build_schedule(&self.0).map(PySchedule).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "VshmmConfig(dt={}, macro_step={}, alpha={:?}, m={:?}, kernel='{}', variable_steps={})",
            self.0.micro_step,
            self.0.macro_step,
            self.0.savings,
            self.0.resolved_subperiods(),
            self.0.kernel.name(),
            self.0.variable_steps
        )
    }
}

#[pyclass(name = "Schedule", module = "vshmm", frozen)]
struct PySchedule(VshmmSchedule);

#[pymethods]
impl PySchedule {
    #[getter]
    fn n_cycles(&self) -> usize {
        self.0.n_cycles
    }

    #[getter]
    fn subperiods(&self) -> Vec<u32> {
        self.0.subperiods.clone()
    }

    #[getter]
    fn scale_factor(&self) -> f64 {
        self.0.scale_factor
    }

    /// `(cycle, level, step)` triples in execution order.
    #[getter]
    fn steps(&self) -> Vec<(usize, usize, f64)> {
        self.0.steps.iter().map(|s| (s.cycle, s.level, s.step)).collect()
    }

    fn total(&self) -> f64 {
        self.0.total()
    }

    fn steps_per_level(&self) -> Vec<usize> {
        self.0.steps_per_level()
    }

    fn mean_step(&self, level: usize) -> f64 {
        self.0.mean_step(level)
    }

    fn __len__(&self) -> usize {
        self.0.steps.len()
    }
}

#[pyclass(name = "Trajectory", module = "vshmm", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    states: Vec<Vec<f64>>,
    #[pyo3(get)]
    rhs_evals: Vec<u64>,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn total_rhs_evals(&self) -> u64 {
        self.rhs_evals.iter().sum()
    }

    fn component(&self, i: usize) -> PyResult<Vec<f64>> {
        if self.states.first().is_some_and(|s| i >= s.len()) {
            return Err(PyValueError::new_err(format!("component {i} out of range")));
        }
        Ok(self.states.iter().map(|s| s[i]).collect())
    }

    fn __len__(&self) -> usize {
        self.times.len()
    }
}

impl From<::vshmm::Trajectory> for PyTrajectory {
    fn from(t: ::vshmm::Trajectory) -> Self {
        Self {
            times: t.times,
            states: t.states,
            rhs_evals: t.rhs_evals,
        }
    }
}

/// Settings the benchmark ships with for `exp1` or `oscillators`.
#[pyfunction]
#[pyo3(signature = (problem, eps = 1e-2))]
fn recommended_config(problem: &str, eps: f64) -> PyResult<PyVshmmConfig> {
    Ok(PyVshmmConfig(ode_problem(problem, eps).map_err(to_py)?.recommended))
}

/// Fixed-step RK4 of a benchmark ODE.
#[pyfunction]
#[pyo3(signature = (problem, eps, dt, t_end, sample_every))]
fn dns(py: Python<'_>, problem: &str, eps: f64, dt: f64, t_end: f64, sample_every: f64) -> PyResult<PyTrajectory> {
    let p = ode_problem(problem, eps).map_err(to_py)?;
    let traj = py
        .detach(|| dns_integrate(&p.system, p.system.initial_state(), 0.0, BaseStepper::Rk4, dt, t_end, sample_every))
        .map_err(to_py)?;
    Ok(traj.into())
}

/// VSHMM (or constant-step splitting, per `config`) on a benchmark ODE,
/// sampled every macro interval.
#[pyfunction]
fn integrate(py: Python<'_>, problem: &str, eps: f64, config: &PyVshmmConfig, t_end: f64) -> PyResult<PyTrajectory> {
    let p = ode_problem(problem, eps).map_err(to_py)?;
    let cfg = config.0.clone();
    let traj = py
        .detach(|| {
            let sched = build_schedule(&cfg)?;
            integrate_with_schedule(&p.system, p.system.initial_state(), 0.0, &sched, cfg.base, t_end)
        })
        .map_err(to_py)?;
    Ok(traj.into())
}

/// Averaged slow equation of `exp1`.
#[pyfunction]
#[pyo3(signature = (dt, t_end, sample_every = None))]
fn averaged(dt: f64, t_end: f64, sample_every: Option<f64>) -> PyResult<PyTrajectory> {
    let eq = problems::exp1_averaged();
    Ok(averaged_integrate_sampled(&eq, dt, t_end, sample_every.unwrap_or(dt)).map_err(to_py)?.into())
}

/// `(eta, zeta)` fixed point of the `exp1` fast system with `xi` frozen;
/// `relax` replaces `eps^2` by `eps`.
#[pyfunction]
#[pyo3(signature = (xi, eps, relax = false))]
fn exp1_fixed_point(xi: f64, eps: f64, relax: bool) -> PyResult<(f64, f64)> {
    let sys = exp1_frozen(xi, eps).map_err(to_py)?;
    let fp = frozen_fixed_point(&sys, &[0.0], &[0.0], relax.then_some(eps)).map_err(to_py)?;
    Ok((fp.eta[0], fp.zeta[0]))
}

/// `(I1, I2, theta, cos_phi1)` of an oscillator state.
#[pyfunction]
fn slow_observables(state: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let o = problems::slow_observables(&state).map_err(to_py)?;
    Ok((o.i1, o.i2, o.theta, o.cos_phi1))
}

#[pyfunction]
#[pyo3(signature = (beta, count, variable, kernel = None))]
fn torus_points(beta: f64, count: usize, variable: bool, kernel: Option<PyStepKernel>) -> PyResult<Vec<(f64, f64)>> {
    let k = kernel.map_or_else(StepKernel::cosine, |k| k.0);
    let pts = torus_sampling_diagnostic(beta, count, &k, variable).map_err(to_py)?;
    Ok(pts.into_iter().map(|p| (p[0], p[1])).collect())
}

#[pyfunction]
#[pyo3(signature = (points, grid = 200))]
fn covering_radius(points: Vec<(f64, f64)>, grid: usize) -> f64 {
    let pts: Vec<[f64; 2]> = points.into_iter().map(|(a, b)| [a, b]).collect();
    cover(&pts, grid)
}

/// Mean-normalized coefficients `u_k`, `k = 0..n/2`, of a real grid field.
#[pyfunction]
fn transform(field: Vec<f64>) -> PyResult<Vec<Complex64>> {
    Ok(sp::transform(&field).map_err(to_py)?.half().to_vec())
}

#[pyfunction]
fn inverse_transform(half: Vec<Complex64>, n: usize) -> PyResult<Vec<f64>> {
    let s = SpectralState::from_half(n, half).map_err(to_py)?;
    sp::inverse_transform(&s).map_err(to_py)
}

#[pyfunction]
fn soft_threshold(half: Vec<Complex64>, n: usize, lam: f64) -> PyResult<Vec<Complex64>> {
    let s = SpectralState::from_half(n, half).map_err(to_py)?;
    Ok(sp::soft_threshold(&s, lam).map_err(to_py)?.half().to_vec())
}

/// Clusters of `|k|` values whose coefficients exceed `lam`.
#[pyfunction]
#[pyo3(signature = (half, n, lam, gap = 3, buffer = 0))]
fn cluster_modes(half: Vec<Complex64>, n: usize, lam: f64, gap: u64, buffer: u64) -> PyResult<Vec<Vec<u64>>> {
    let s = SpectralState::from_half(n, half).map_err(to_py)?;
    let c = sp::cluster_modes(&s, lam, gap, buffer).map_err(to_py)?;
    Ok(clusters_to_lists(&c))
}

fn clusters_to_lists(c: &ModeClusters) -> Vec<Vec<u64>> {
    c.clusters.iter().map(|k| k.iter().copied().collect()).collect()
}

/// Default cluster list of `diffusion` or `advection`.
#[pyfunction]
fn pde_clusters(problem: &str) -> PyResult<Vec<Vec<u64>>> {
    let c = match problem {
        "diffusion" => problems::diffusion_clusters(),
        "advection" => problems::advection_clusters(),
        other => return Err(PyValueError::new_err(format!("unknown PDE problem `{other}`"))),
    };
    Ok(clusters_to_lists(&c))
}

/// Grid snapshots `(times, fields, rhs_evals)` of a PDE benchmark. With
/// `config`, VSHMM runs on `clusters` (default: the problem's list);
/// otherwise full-grid RK4 with step `dt`, sampled every `sample_every`.
#[pyfunction]
#[pyo3(signature = (problem, n, t_end, config = None, dt = None, sample_every = None, clusters = None))]
#[allow(clippy::too_many_arguments)]
fn pde_run(
    py: Python<'_>,
    problem: &str,
    n: usize,
    t_end: f64,
    config: Option<PyVshmmConfig>,
    dt: Option<f64>,
    sample_every: Option<f64>,
    clusters: Option<Vec<Vec<u64>>>,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, Vec<u64>)> {
    let p = pde_problem(problem, n).map_err(to_py)?;
    let run = || -> ::vshmm::Result<(Vec<f64>, Vec<Vec<f64>>, Vec<u64>)> {
        let u0 = p.initial_state()?;
        let traj = match &config {
            Some(cfg) => {
                let cl = match &clusters {
                    Some(lists) => ModeClusters::new(lists.iter().map(|l| l.iter().copied().collect()).collect(), 0)?,
                    None => p.clusters.clone(),
                };
                sp::pde_vshmm_integrate(&p.clustered_operator(cl)?, &u0, &cfg.0, t_end)?.0
            }
            None => {
                let dt = dt.unwrap_or(p.dns_step);
                sp::pde_dns_integrate(&p.operator()?, &u0, dt, t_end, sample_every.unwrap_or(p.recommended.macro_step))?
            }
        };
        let grid = sp::FourierGrid::new(n)?;
        let fields = traj
            .states
            .iter()
            .map(|s| grid.inverse_transform(&SpectralState::from_packed(n, s)?))
            .collect::<::vshmm::Result<Vec<_>>>()?;
        Ok((traj.times, fields, traj.rhs_evals))
    };
    py.detach(run).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "vshmm")]
fn vshmm_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStepKernel>()?;
    m.add_class::<PyVshmmConfig>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(recommended_config, m)?)?;
    m.add_function(wrap_pyfunction!(dns, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(averaged, m)?)?;
    m.add_function(wrap_pyfunction!(exp1_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(slow_observables, m)?)?;
    m.add_function(wrap_pyfunction!(torus_points, m)?)?;
    m.add_function(wrap_pyfunction!(covering_radius, m)?)?;
    m.add_function(wrap_pyfunction!(transform, m)?)?;
    m.add_function(wrap_pyfunction!(inverse_transform, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_modes, m)?)?;
    m.add_function(wrap_pyfunction!(pde_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(pde_run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
