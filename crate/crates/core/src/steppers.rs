//! Explicit one-step integrators and the fixed-step DNS driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::LevelRhs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseStepper {
    Euler,
    #[default]
    Rk4,
}

impl BaseStepper {
    pub fn stages(self) -> u64 {
        match self {
            BaseStepper::Euler => 1,
            BaseStepper::Rk4 => 4,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(BaseStepper::Euler),
            "rk4" => Ok(BaseStepper::Rk4),
            other => Err(Error::Config(format!("unknown base stepper `{other}`"))),
        }
    }
}

/// Stage buffers reused across steps.
#[derive(Debug, Clone)]
pub struct StepBuffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl StepBuffers {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }
}

impl BaseStepper {
    /// Advances `x` in place by `h` on the level-`level` truncation of `sys`.
    pub fn step<S: LevelRhs + ?Sized>(self, sys: &S, level: usize, x: &mut [f64], h: f64, buf: &mut StepBuffers) {
        match self {
            BaseStepper::Euler => {
                sys.eval_level(level, x, &mut buf.k1);
                for (xi, k) in x.iter_mut().zip(&buf.k1) {
                    *xi += h * k;
                }
            }
            BaseStepper::Rk4 => {
                let StepBuffers { k1, k2, k3, k4, tmp } = buf;
                sys.eval_level(level, x, k1);
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                sys.eval_level(level, tmp, k2);
                for i in 0..x.len() {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                sys.eval_level(level, tmp, k3);
                for i in 0..x.len() {
                    tmp[i] = x[i] + h * k3[i];
                }
                sys.eval_level(level, tmp, k4);
                let sixth = h / 6.0;
                for i in 0..x.len() {
                    x[i] += sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
        }
    }
}

fn check_finite(x: &[f64], t: f64) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::blow_up(t, None, None))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("step size {h} must be positive")))
    }
}

/// One explicit Euler step of the autonomous field `f`.
pub fn euler_step<F>(f: F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    check_step(h)?;
    let mut out = x.to_vec();
    let rhs = crate::system::FnRhs::new(x.len(), f);
    BaseStepper::Euler.step(&rhs, 0, &mut out, h, &mut StepBuffers::new(x.len()));
    check_finite(&out, t + h)?;
    Ok(out)
}

/// One classical four-stage Runge-Kutta step of the autonomous field `f`.
pub fn rk4_step<F>(f: F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    check_step(h)?;
    let mut out = x.to_vec();
    let rhs = crate::system::FnRhs::new(x.len(), f);
    BaseStepper::Rk4.step(&rhs, 0, &mut out, h, &mut StepBuffers::new(x.len()));
    check_finite(&out, t + h)?;
    Ok(out)
}

/// Sampled solution plus right-hand-side evaluation counts per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `rhs_evals[level]` counts evaluations of that truncation.
    pub rhs_evals: Vec<u64>,
}

impl Trajectory {
    pub fn new(levels: usize) -> Self {
        Self {
            times: Vec::new(),
            states: Vec::new(),
            rhs_evals: vec![0; levels],
        }
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        self.times.push(t);
        self.states.push(x.to_vec());
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_rhs_evals(&self) -> u64 {
        self.rhs_evals.iter().sum()
    }

    /// Time series of one state component.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[i]).collect()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(|s| s.as_slice())
    }

    /// Index of the sample at time `t` (within `tol`).
    pub fn index_of_time(&self, t: f64, tol: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= tol)
    }
}

/// Number of `step`s that make up `span`, provided `step` divides `span` to
/// 1e-9 relative.
pub(crate) fn exact_count(span: f64, step: f64, what: &str) -> Result<usize> {
    let ratio = span / step;
    let n = ratio.round();
    if n < 0.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::Config(format!(
            "{what}: {span} is not an integer multiple of {step}"
        )));
    }
    Ok(n as usize)
}

/// Fixed-step integration of the full right-hand side from `(t0, x0)`.
/// States are recorded every `sample_every`, which `dt` must divide.
pub fn dns_integrate<S: LevelRhs + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    base: BaseStepper,
    dt: f64,
    t_end: f64,
    sample_every: f64,
) -> Result<Trajectory> {
    check_step(dt)?;
    if !(sample_every >= dt * (1.0 - 1e-12)) || !(t_end - t0 >= sample_every * (1.0 - 1e-12)) {
        return Err(Error::Config(format!(
            "need dt <= sample_every <= t_end - t0, got dt={dt}, sample_every={sample_every}, span={}",
            t_end - t0
        )));
    }
    let n_steps = exact_count(t_end - t0, dt, "dns span")?;
    let stride = exact_count(sample_every, dt, "dns sampling")?;
    let level = sys.top_level();
    let mut traj = Trajectory::new(level + 1);
    let mut x = x0.to_vec();
    let mut buf = StepBuffers::new(x.len());
    traj.push(t0, &x);
    for i in 1..=n_steps {
        base.step(sys, level, &mut x, dt, &mut buf);
        traj.rhs_evals[level] += base.stages();
        if i % stride == 0 || i == n_steps {
            let t = t0 + i as f64 * dt;
            check_finite(&x, t)?;
            traj.push(t, &x);
        }
    }
    check_finite(&x, t_end)?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::FnRhs;

    fn decay(x: &[f64], out: &mut [f64]) {
        out[0] = -x[0];
    }

    #[test]
    fn euler_examples() {
        assert!((euler_step(decay, &[1.0], 0.0, 0.1).unwrap()[0] - 0.9).abs() < 1e-15);
        let zero = |_: &[f64], out: &mut [f64]| out.fill(0.0);
        assert_eq!(euler_step(zero, &[3.0, 4.0], 0.0, 0.5).unwrap(), vec![3.0, 4.0]);
        let constant = |_: &[f64], out: &mut [f64]| out.fill(2.0);
        assert!((euler_step(constant, &[1.0], 0.0, 0.25).unwrap()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn rk4_linear_decay_polynomial() {
        let h: f64 = 0.1;
        let expected = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        let got = rk4_step(decay, &[1.0], 0.0, h).unwrap()[0];
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 0.9048375).abs() < 1e-7);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1.0_f64).exp();
        let one = rk4_step(decay, &[1.0], 0.0, 1.0).unwrap()[0];
        assert!((one - exact).abs() < 0.01);
        // h = 1 is not yet asymptotic, measure the ratio at h = 0.1
        let run = |h: f64, n: usize| (0..n).fold(vec![1.0], |x, i| rk4_step(decay, &x, i as f64 * h, h).unwrap())[0];
        let ratio = (run(0.1, 10) - exact).abs() / (run(0.05, 20) - exact).abs();
        assert!(ratio > 12.0 && ratio < 20.0, "error ratio {ratio}");
    }

    #[test]
    fn nonpositive_step_rejected() {
        assert!(matches!(rk4_step(decay, &[1.0], 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(euler_step(decay, &[1.0], 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn blow_up_is_reported_with_time() {
        let bad = |x: &[f64], out: &mut [f64]| out[0] = x[0] * 1e308 * 10.0;
        match rk4_step(bad, &[1.0], 2.0, 0.5) {
            Err(Error::BlowUp(b)) => assert_eq!(b.t, 2.5),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn dns_decay_to_one() {
        let rhs = FnRhs::new(1, decay);
        let traj = dns_integrate(&rhs, &[1.0], 0.0, BaseStepper::Rk4, 1e-3, 1.0, 0.1).unwrap();
        assert_eq!(traj.len(), 11);
        assert!((traj.last_state().unwrap()[0] - (-1.0_f64).exp()).abs() < 1e-9);
        assert_eq!(traj.rhs_evals, vec![4000]);
    }

    #[test]
    fn dns_zero_force_is_constant() {
        let rhs = FnRhs::new(2, |_: &[f64], out: &mut [f64]| out.fill(0.0));
        let traj = dns_integrate(&rhs, &[1.0, -2.0], 0.0, BaseStepper::Euler, 0.01, 1.0, 0.5).unwrap();
        assert!(traj.states.iter().all(|s| s == &vec![1.0, -2.0]));
    }

    #[test]
    fn dns_requires_divisible_sampling() {
        let rhs = FnRhs::new(1, decay);
        assert!(matches!(
            dns_integrate(&rhs, &[1.0], 0.0, BaseStepper::Rk4, 0.03, 1.0, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn richardson_order_on_smooth_problem() {
        // du/dt = -u + sin(u): no closed form, compare dt, dt/2, dt/4.
        let f = |x: &[f64], out: &mut [f64]| out[0] = -x[0] + x[0].sin() + 0.5 * x[0].cos();
        let rhs = FnRhs::new(1, f);
        let run = |dt: f64| {
            dns_integrate(&rhs, &[1.0], 0.0, BaseStepper::Rk4, dt, 2.0, 2.0).unwrap().last_state().unwrap()[0]
        };
        let (a, b, c) = (run(0.1), run(0.05), run(0.025));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order >= 3.5, "observed order {order}");
    }
}
