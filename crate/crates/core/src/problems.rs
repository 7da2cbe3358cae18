//! Built-in benchmark problems: a dissipative three-scale system, two coupled
//! resonant oscillators, and multiscale diffusion and advection on a
//! periodic interval.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::averaging::{AveragedEquation, FrozenFastSystem};
use crate::error::{Error, Result};
use crate::spectral::{grid_points, FourierGrid, ModeClusters, PdeKind, PdeOperator, SpectralState};
use crate::system::{Component, MultiscaleSystem};
use crate::vshmm::VshmmConfig;

pub const PROBLEM_NAMES: [&str; 4] = ["exp1", "oscillators", "diffusion", "advection"];

/// An ODE benchmark with its reference settings.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub eps: f64,
    pub system: MultiscaleSystem,
    pub averaged: Option<AveragedEquation>,
    /// Indices of the state components treated as slow.
    pub slow_components: Vec<usize>,
    pub recommended: VshmmConfig,
    pub dns_step: f64,
    pub t_end: f64,
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps = {eps} must lie in (0, 1)")));
    }
    Ok(())
}

fn exp1_f(xi: f64, eta: f64, zeta: f64) -> f64 {
    let s = xi + eta + zeta;
    s.sin() - s * s / 20.0
}

fn exp1_g(xi: f64, eta: f64, zeta: f64) -> f64 {
    3.0 * xi * xi - eta * eta + zeta * zeta
}

fn exp1_h(xi: f64, eta: f64, zeta: f64) -> f64 {
    xi - eta - zeta
}

/// State `(xi, eta, zeta)` with `xi' = f`, `eta' = g / eps`, `zeta' = h / eps^2`.
pub fn exp1_dissipative(eps: f64) -> Result<BenchmarkProblem> {
    check_eps(eps)?;
    let f0: Component = Arc::new(|x, out| {
        out[0] = exp1_f(x[0], x[1], x[2]);
        out[1] = 0.0;
        out[2] = 0.0;
    });
    let f1: Component = Arc::new(|x, out| {
        out[0] = 0.0;
        out[1] = exp1_g(x[0], x[1], x[2]);
        out[2] = 0.0;
    });
    let f2: Component = Arc::new(|x, out| {
        out[0] = 0.0;
        out[1] = 0.0;
        out[2] = exp1_h(x[0], x[1], x[2]);
    });
    let system = MultiscaleSystem::new(vec![f0, f1, f2], vec![eps, eps * eps], vec![5.0, -10.0, 5.0])?;
    Ok(BenchmarkProblem {
        name: "exp1",
        eps,
        system,
        averaged: Some(exp1_averaged()),
        slow_components: vec![0],
        recommended: VshmmConfig::new(1e-4, 0.1, vec![100.0, 10.0]),
        dns_step: 1e-6,
        t_end: 5.0,
    })
}

/// `dXi/dt = sin(2 Xi) - Xi^2 / 5`, `Xi(0) = 5`.
pub fn exp1_averaged() -> AveragedEquation {
    AveragedEquation {
        rhs: Arc::new(|x, out| out[0] = (2.0 * x[0]).sin() - x[0] * x[0] / 5.0),
        initial: vec![5.0],
    }
}

/// The fast part of the dissipative system with `xi` frozen.
pub fn exp1_frozen(xi: f64, eps: f64) -> Result<FrozenFastSystem> {
    check_eps(eps)?;
    Ok(FrozenFastSystem {
        xi: vec![xi],
        g: Arc::new(|xi, e, z, out| out[0] = exp1_g(xi[0], e[0], z[0])),
        h: Arc::new(|xi, e, z, out| out[0] = exp1_h(xi[0], e[0], z[0])),
        eta_dim: 1,
        zeta_dim: 1,
        eps1: eps,
        eps2: eps * eps,
    })
}

/// Slow force of the dissipative system as a map `(Xi, eta, zeta) -> f`.
pub fn exp1_slow_force(xi: &[f64], eta: &[f64], zeta: &[f64]) -> Vec<f64> {
    vec![exp1_f(xi[0], eta[0], zeta[0])]
}

/// Two coupled oscillators in `(x1, x2, y1, y2)`, each additive term placed
/// at the level of its explicit power of `eps`.
pub fn coupled_oscillators(eps: f64) -> Result<BenchmarkProblem> {
    check_eps(eps)?;
    let f0: Component = Arc::new(|s, out| {
        let (x1, x2, y1, y2) = (s[0], s[1], s[2], s[3]);
        out[0] = -3.0 * x1 * x2 * x2;
        out[1] = -x2;
        out[2] = 0.5 * y1;
        out[3] = -y2 + 2.0 * x1 * x1 * y2;
    });
    let f1: Component = Arc::new(|s, out| {
        let (x2, y2) = (s[1], s[3]);
        out[0] = y2 * y2;
        out[1] = -y2;
        out[2] = 0.0;
        out[3] = x2;
    });
    let f2: Component = Arc::new(|s, out| {
        let (x1, x2, y1, y2) = (s[0], s[1], s[2], s[3]);
        out[0] = -y1;
        out[1] = -y2;
        out[2] = x1;
        out[3] = x2;
    });
    let system = MultiscaleSystem::new(vec![f0, f1, f2], vec![eps, eps * eps], vec![1.0, 1.0, 0.0, 0.0])?;
    Ok(BenchmarkProblem {
        name: "oscillators",
        eps,
        system,
        averaged: None,
        slow_components: vec![],
        recommended: VshmmConfig::new(1e-5, 0.8, vec![100.0, 30.0]).with_subperiods(vec![1, 1]),
        dns_step: 1e-5,
        t_end: 32.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OscillatorObservables {
    pub i1: f64,
    pub i2: f64,
    pub theta: f64,
    pub cos_phi1: f64,
}

/// `(I1, I2, theta, cos phi1)`; undefined when `I1 = 0`.
pub fn slow_observables(state: &[f64]) -> Result<OscillatorObservables> {
    if state.len() != 4 {
        return Err(Error::Domain(format!("oscillator state has length {}", state.len())));
    }
    let (x1, x2, y1, y2) = (state[0], state[1], state[2], state[3]);
    let i1 = x1 * x1 + y1 * y1;
    if i1 == 0.0 {
        return Err(Error::Domain("cos phi1 is undefined at I1 = 0".into()));
    }
    Ok(OscillatorObservables {
        i1,
        i2: x2 * x2 + y2 * y2,
        theta: x1 * x2 + y1 * y2,
        cos_phi1: x1 / i1.sqrt(),
    })
}

/// A periodic PDE benchmark on an `n`-point grid.
#[derive(Debug, Clone)]
pub struct PdeProblem {
    pub kind: PdeKind,
    pub n: usize,
    /// `d(x_j)` or `a(x_j)`.
    pub coefficient: Vec<f64>,
    pub initial: Vec<f64>,
    pub clusters: ModeClusters,
    pub recommended: VshmmConfig,
    pub dns_step: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
}

impl PdeProblem {
    pub fn operator(&self) -> Result<PdeOperator> {
        PdeOperator::new(self.kind, &self.coefficient)
    }

    pub fn clustered_operator(&self, clusters: ModeClusters) -> Result<PdeOperator> {
        self.operator()?.with_clusters(clusters)
    }

    pub fn initial_state(&self) -> Result<SpectralState> {
        FourierGrid::new(self.n)?.transform(&self.initial)
    }
}

fn check_modes(n: usize, min: usize) -> Result<()> {
    if n < min || !n.is_power_of_two() {
        return Err(Error::Domain(format!("grid size {n} must be a power of two >= {min}")));
    }
    Ok(())
}

pub fn diffusion_coefficient(x: f64) -> f64 {
    0.25 * ((64.0 * x).sin().exp() + (256.0 * x).sin().exp())
}

pub fn advection_velocity(x: f64) -> f64 {
    0.25 * ((0.6 + 0.2 * (3.0 * x).cos()) / (1.0 + 0.35 * (64.0 * x).sin() + 0.35 * (256.0 * x).sin())).exp()
}

/// `exp(-(x - pi)^2)`, unsmoothed at the periodic boundary.
pub fn gaussian_bump(x: f64) -> f64 {
    (-(x - PI).powi(2)).exp()
}

pub fn diffusion_clusters() -> ModeClusters {
    ModeClusters::from_lists(&[&[0, 1, 2, 3], &[62, 63, 65, 66], &[192, 193], &[255, 257]]).expect("static cluster list")
}

pub fn advection_clusters() -> ModeClusters {
    ModeClusters::from_ranges(&[(0, 24), (64, 24), (138, 24), (256, 10)]).expect("static cluster list")
}

pub fn diffusion_problem(n: usize) -> Result<PdeProblem> {
    check_modes(n, 1024)?;
    let x = grid_points(n);
    Ok(PdeProblem {
        kind: PdeKind::Diffusion,
        n,
        coefficient: x.iter().map(|&x| diffusion_coefficient(x)).collect(),
        initial: x.iter().map(|&x| gaussian_bump(x)).collect(),
        clusters: diffusion_clusters(),
        recommended: VshmmConfig::new(1e-5, 0.05, vec![150.0, 18.0, 1.5]),
        dns_step: 1e-6,
        t_end: 1.0,
        snapshot_times: vec![0.25, 0.5, 0.75, 1.0],
    })
}

pub fn advection_problem(n: usize) -> Result<PdeProblem> {
    check_modes(n, 512)?;
    let x = grid_points(n);
    Ok(PdeProblem {
        kind: PdeKind::Advection,
        n,
        coefficient: x.iter().map(|&x| advection_velocity(x)).collect(),
        initial: x.iter().map(|&x| gaussian_bump(x)).collect(),
        clusters: advection_clusters(),
        recommended: VshmmConfig::new(1e-3, 0.5, vec![26.0, 9.0, 2.0]),
        dns_step: 1.6e-4,
        t_end: 36.0,
        snapshot_times: vec![9.0, 18.0, 27.0, 36.0],
    })
}

/// ODE benchmark by name.
pub fn ode_problem(name: &str, eps: f64) -> Result<BenchmarkProblem> {
    match name {
        "exp1" => exp1_dissipative(eps),
        "oscillators" => coupled_oscillators(eps),
        other => Err(Error::Config(format!("`{other}` is not an ODE problem (expected exp1 or oscillators)"))),
    }
}

/// PDE benchmark by name.
pub fn pde_problem(name: &str, n: usize) -> Result<PdeProblem> {
    match name {
        "diffusion" => diffusion_problem(n),
        "advection" => advection_problem(n),
        other => Err(Error::Config(format!("`{other}` is not a PDE problem (expected diffusion or advection)"))),
    }
}
