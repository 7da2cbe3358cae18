//! Reference machinery for slow-fast systems: averaged equations, frozen
//! fast subsystems and their fixed points, and numerical checks of the
//! relaxation argument for dissipative three-scale problems.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, fd_jacobian};
use crate::steppers::{dns_integrate, BaseStepper, StepBuffers, Trajectory};
use crate::system::FnRhs;

/// `(xi, eta, zeta) -> out`.
pub type FastForce = Arc<dyn Fn(&[f64], &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// The fast part `eta' = g / eps_1`, `zeta' = h / eps_2` of a three-scale
/// system with the slow state `xi` held fixed.
#[derive(Clone)]
pub struct FrozenFastSystem {
    pub xi: Vec<f64>,
    pub g: FastForce,
    pub h: FastForce,
    pub eta_dim: usize,
    pub zeta_dim: usize,
    pub eps1: f64,
    pub eps2: f64,
}

impl std::fmt::Debug for FrozenFastSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrozenFastSystem")
            .field("xi", &self.xi)
            .field("eta_dim", &self.eta_dim)
            .field("zeta_dim", &self.zeta_dim)
            .field("eps1", &self.eps1)
            .field("eps2", &self.eps2)
            .finish()
    }
}

impl FrozenFastSystem {
    pub fn with_xi(&self, xi: Vec<f64>) -> Self {
        Self { xi, ..self.clone() }
    }

    fn split<'a>(&self, y: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        y.split_at(self.eta_dim)
    }

    /// Unscaled `(g, h)` stacked.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        let (eta, zeta) = self.split(y);
        let mut out = vec![0.0; self.eta_dim + self.zeta_dim];
        let (go, ho) = out.split_at_mut(self.eta_dim);
        (self.g)(&self.xi, eta, zeta, go);
        (self.h)(&self.xi, eta, zeta, ho);
        out
    }

    /// `(g / eps1, h / eps2')` where `eps2' = max(eps2, relax_to)`.
    pub fn rate(&self, y: &[f64], relax_to: Option<f64>) -> Vec<f64> {
        let eps2 = relax_to.map_or(self.eps2, |r| self.eps2.max(r));
        let mut r = self.residual(y);
        for (i, v) in r.iter_mut().enumerate() {
            *v /= if i < self.eta_dim { self.eps1 } else { eps2 };
        }
        r
    }

    fn h_only(&self, eta: &[f64], zeta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.zeta_dim];
        (self.h)(&self.xi, eta, zeta, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub eta: Vec<f64>,
    pub zeta: Vec<f64>,
    /// Terminal point of the relaxation integration, before Newton polishing.
    pub integrated: Vec<f64>,
    /// `|g| + |h|` at the returned point.
    pub residual: f64,
    pub integration_steps: usize,
}

fn spectral_radius(jac: &DMatrix<f64>) -> f64 {
    jac.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Integrates the frozen fast subsystem until `|d(eta, zeta)/dt| < 1e-10`,
/// then polishes with Newton on `(g, h) = 0`.
pub fn frozen_fixed_point(sys: &FrozenFastSystem, eta0: &[f64], zeta0: &[f64], relax_to: Option<f64>) -> Result<FixedPoint> {
    if eta0.len() != sys.eta_dim || zeta0.len() != sys.zeta_dim {
        return Err(Error::Domain("initial guess has the wrong shape".into()));
    }
    let n = sys.eta_dim + sys.zeta_dim;
    let mut y: Vec<f64> = eta0.iter().chain(zeta0).copied().collect();
    let rhs = FnRhs::new(n, |y: &[f64], out: &mut [f64]| out.copy_from_slice(&sys.rate(y, relax_to)));
    let mut buf = StepBuffers::new(n);
    let budget = 5_000_000;
    let mut steps = 0;
    let mut h = 0.0;
    loop {
        if steps % 200 == 0 {
            let jac = fd_jacobian(|y| sys.rate(y, relax_to), &y, n);
            let rho = spectral_radius(&jac);
            if !rho.is_finite() {
                return Err(Error::NonDissipative("Jacobian is not finite along the relaxation".into()));
            }
            // |z| <= 1 stays well inside the RK4 stability region
            h = 1.0 / rho.max(1e-12);
        }
        let speed = numerics::norm(&sys.rate(&y, relax_to));
        if speed < 1e-10 {
            break;
        }
        if steps >= budget || !speed.is_finite() {
            return Err(Error::NonDissipative(format!(
                "relaxation did not settle after {steps} steps (|rate| = {speed:e})"
            )));
        }
        BaseStepper::Rk4.step(&rhs, 0, &mut y, h, &mut buf);
        steps += 1;
    }
    let integrated = y.clone();
    newton_polish(|y| sys.residual(y), &mut y)?;
    let residual: f64 = sys.residual(&y).iter().map(|v| v.abs()).sum();
    if residual >= 1e-8 {
        return Err(Error::NoConvergence(format!("fixed point residual {residual:e}")));
    }
    let (eta, zeta) = sys.split(&y);
    Ok(FixedPoint {
        eta: eta.to_vec(),
        zeta: zeta.to_vec(),
        integrated,
        residual,
        integration_steps: steps,
    })
}

fn newton_polish<F: Fn(&[f64]) -> Vec<f64>>(f: F, y: &mut [f64]) -> Result<()> {
    for _ in 0..30 {
        let r = f(y);
        if r.iter().map(|v| v.abs()).sum::<f64>() < 1e-13 {
            return Ok(());
        }
        let jac = fd_jacobian(&f, y, r.len());
        let rhs = nalgebra::DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("singular Jacobian in Newton polish".into()))?;
        for (yi, d) in y.iter_mut().zip(delta.iter()) {
            *yi += d;
        }
        if delta.norm() < 1e-15 * (1.0 + numerics::norm(y)) {
            return Ok(());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    /// `d zeta* / d eta` from re-solving `h = 0` under perturbed `eta`.
    pub fd_jacobian: Vec<Vec<f64>>,
    /// `-(d_zeta h)^-1 d_eta h`.
    pub formula_jacobian: Vec<Vec<f64>>,
    pub max_abs_diff: f64,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn solve_zeta(sys: &FrozenFastSystem, eta: &[f64], zeta_guess: &[f64]) -> Result<Vec<f64>> {
    let mut zeta = zeta_guess.to_vec();
    for _ in 0..50 {
        let r = sys.h_only(eta, &zeta);
        let size: f64 = r.iter().map(|v| v.abs()).sum();
        if size < 1e-14 {
            return Ok(zeta);
        }
        let jac = fd_jacobian(|z| sys.h_only(eta, z), &zeta, sys.zeta_dim);
        let rhs = nalgebra::DVector::from_iterator(r.len(), r.iter().map(|v| -v));
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Degenerate("d_zeta h is singular".into()))?;
        for (z, d) in zeta.iter_mut().zip(delta.iter()) {
            *z += d;
        }
        if delta.norm() < 1e-15 * (1.0 + numerics::norm(&zeta)) {
            return Ok(zeta);
        }
    }
    Ok(zeta)
}

/// Compares the implicit derivative of `zeta*(eta)` with the inverse formula.
pub fn verify_lemma_inverse(sys: &FrozenFastSystem, eta: &[f64], zeta: &[f64]) -> Result<LemmaReport> {
    let residual: f64 = sys.h_only(eta, zeta).iter().map(|v| v.abs()).sum();
    if residual >= 1e-8 {
        return Err(Error::Domain(format!("h residual {residual:e} at the supplied point")));
    }
    let dh_dzeta = fd_jacobian(|z| sys.h_only(eta, z), zeta, sys.zeta_dim);
    let dh_deta = fd_jacobian(|e| sys.h_only(e, zeta), eta, sys.zeta_dim);
    let inverse = dh_dzeta
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("d_zeta h is singular".into()))?;
    let formula = -(inverse * dh_deta);

    let delta = 1e-5;
    let mut fd = DMatrix::zeros(sys.zeta_dim, sys.eta_dim);
    let mut probe = eta.to_vec();
    for j in 0..sys.eta_dim {
        probe[j] = eta[j] + delta;
        let plus = solve_zeta(sys, &probe, zeta)?;
        probe[j] = eta[j] - delta;
        let minus = solve_zeta(sys, &probe, zeta)?;
        probe[j] = eta[j];
        for i in 0..sys.zeta_dim {
            fd[(i, j)] = (plus[i] - minus[i]) / (2.0 * delta);
        }
    }
    let max_abs_diff = (&fd - &formula).abs().max();
    Ok(LemmaReport {
        fd_jacobian: to_rows(&fd),
        formula_jacobian: to_rows(&formula),
        max_abs_diff,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigen_real_parts: Vec<f64>,
    pub all_negative: bool,
}

/// Eigenvalue real parts of the finite-difference Jacobian of the relaxed
/// system, `eps2` replaced by `eps1`.
pub fn verify_relaxation_spectrum(sys: &FrozenFastSystem, eta: &[f64], zeta: &[f64]) -> Result<SpectrumReport> {
    let y: Vec<f64> = eta.iter().chain(zeta).copied().collect();
    let n = y.len();
    let jac = fd_jacobian(|y| sys.rate(y, Some(sys.eps1)), &y, n);
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite Jacobian".into()));
    }
    let mut eigen_real_parts: Vec<f64> = jac.complex_eigenvalues().iter().map(|z| z.re).collect();
    eigen_real_parts.sort_by(|a, b| a.total_cmp(b));
    let all_negative = eigen_real_parts.iter().all(|r| *r < 0.0);
    Ok(SpectrumReport {
        eigen_real_parts,
        all_negative,
    })
}

/// `(1 / NM) sum_{n,m} f(Xi, eta_n, zeta_m)`: quadrature of the slow force
/// against the product of the two empirical fast measures.
pub fn effective_force_product<F>(f: F, eta_samples: &[Vec<f64>], zeta_samples: &[Vec<f64>], xi: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &[f64], &[f64]) -> Vec<f64>,
{
    if eta_samples.is_empty() || zeta_samples.is_empty() {
        return Err(Error::Domain("sample lists must be nonempty".into()));
    }
    let mut acc: Option<Vec<f64>> = None;
    for eta in eta_samples {
        for zeta in zeta_samples {
            let v = f(xi, eta, zeta);
            match acc.as_mut() {
                None => acc = Some(v),
                Some(a) => a.iter_mut().zip(&v).for_each(|(a, v)| *a += v),
            }
        }
    }
    let scale = 1.0 / (eta_samples.len() * zeta_samples.len()) as f64;
    Ok(acc.unwrap().into_iter().map(|v| v * scale).collect())
}

/// `dXi/dt = F(Xi)`, `Xi(0) = Xi_0`.
#[derive(Clone)]
pub struct AveragedEquation {
    pub rhs: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
    pub initial: Vec<f64>,
}

impl std::fmt::Debug for AveragedEquation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AveragedEquation").field("initial", &self.initial).finish()
    }
}

impl AveragedEquation {
    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; xi.len()];
        (self.rhs)(xi, &mut out);
        out
    }
}

/// RK4 solution of the averaged equation sampled at every step.
pub fn averaged_integrate(eq: &AveragedEquation, dt: f64, t_end: f64) -> Result<Trajectory> {
    averaged_integrate_sampled(eq, dt, t_end, dt)
}

pub fn averaged_integrate_sampled(eq: &AveragedEquation, dt: f64, t_end: f64, sample_every: f64) -> Result<Trajectory> {
    let rhs = FnRhs::new(eq.initial.len(), |x: &[f64], out: &mut [f64]| (eq.rhs)(x, out));
    dns_integrate(&rhs, &eq.initial, 0.0, BaseStepper::Rk4, dt, t_end, sample_every)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowVariableEstimate {
    pub eps: f64,
    pub max_rate: f64,
}

/// Largest finite-difference rate of change of `observable` along `traj`.
pub fn slow_variable_check<O>(traj: &Trajectory, observable: O, eps: f64) -> Result<SlowVariableEstimate>
where
    O: Fn(&[f64]) -> f64,
{
    if traj.len() < 3 {
        return Err(Error::Domain("need at least three samples".into()));
    }
    let values: Vec<f64> = traj.states.iter().map(|s| observable(s)).collect();
    let mut max_rate: f64 = 0.0;
    for i in 0..values.len() {
        let (a, b) = match i {
            0 => (0, 1),
            i if i == values.len() - 1 => (i - 1, i),
            i => (i - 1, i + 1),
        };
        let rate = (values[b] - values[a]) / (traj.times[b] - traj.times[a]);
        max_rate = max_rate.max(rate.abs());
    }
    Ok(SlowVariableEstimate { eps, max_rate })
}
