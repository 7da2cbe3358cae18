//! Systems whose right-hand side splits into scale components
//! `dx/dt = f_0(x) + sum_k f_k(x) / eps_k`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// An unscaled force component: writes `f_k(x)` into `out`.
pub type Component = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Anything that can evaluate a truncated right-hand side by level.
///
/// Level `0` is the slowest truncation and `top_level()` the full system.
pub trait LevelRhs {
    fn dim(&self) -> usize;
    fn top_level(&self) -> usize;
    /// Writes the level-`level` right-hand side at `x` into `out`. Callers
    /// guarantee `level <= top_level()`.
    fn eval_level(&self, level: usize, x: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub struct MultiscaleSystem {
    dim: usize,
    components: Vec<Component>,
    scales: Vec<f64>,
    initial_state: Vec<f64>,
    initial_time: f64,
}

impl fmt::Debug for MultiscaleSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiscaleSystem")
            .field("dim", &self.dim)
            .field("levels", &self.components.len())
            .field("scales", &self.scales)
            .field("initial_state", &self.initial_state)
            .field("initial_time", &self.initial_time)
            .finish()
    }
}

impl MultiscaleSystem {
    /// `components[0]` is `f_0`; `components[k]` is scaled by `scales[k-1]`.
    pub fn new(components: Vec<Component>, scales: Vec<f64>, initial_state: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("a system needs at least the slow component".into()));
        }
        if components.len() != scales.len() + 1 {
            return Err(Error::Config(format!(
                "{} components need {} scales, got {}",
                components.len(),
                components.len() - 1,
                scales.len()
            )));
        }
        if initial_state.is_empty() {
            return Err(Error::Config("empty state".into()));
        }
        for (k, eps) in scales.iter().enumerate() {
            if !(*eps > 0.0) || !eps.is_finite() {
                return Err(Error::Config(format!("scale eps_{} = {eps} must be positive", k + 1)));
            }
            if k > 0 && *eps > scales[k - 1] {
                return Err(Error::Config(format!(
                    "scales must be nonincreasing, eps_{} = {eps} > eps_{} = {}",
                    k + 1,
                    k,
                    scales[k - 1]
                )));
            }
        }
        Ok(Self {
            dim: initial_state.len(),
            components,
            scales,
            initial_state,
            initial_time: 0.0,
        })
    }

    pub fn with_initial_time(mut self, t0: f64) -> Self {
        self.initial_time = t0;
        self
    }

    pub fn with_initial_state(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::Domain(format!("state of length {} for a {}-dim system", x0.len(), self.dim)));
        }
        self.initial_state = x0;
        Ok(self)
    }

    /// Number of stiff scales `K`.
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    pub fn initial_time(&self) -> f64 {
        self.initial_time
    }

    /// `f_0(x) + sum_{k=1..=level} f_k(x) / eps_k`.
    pub fn rhs_at_level(&self, level: usize, x: &[f64]) -> Result<Vec<f64>> {
        if level > self.n_scales() {
            return Err(Error::Domain(format!("level {level} outside [0, {}]", self.n_scales())));
        }
        if x.len() != self.dim {
            return Err(Error::Domain(format!("state of length {} for a {}-dim system", x.len(), self.dim)));
        }
        let mut out = vec![0.0; self.dim];
        self.eval_level(level, x, &mut out);
        Ok(out)
    }

    /// The full right-hand side.
    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.rhs_at_level(self.n_scales(), x)
    }

    /// Unscaled `f_k(x)`.
    pub fn component(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        let f = self
            .components
            .get(k)
            .ok_or_else(|| Error::Domain(format!("no component f_{k}")))?;
        let mut out = vec![0.0; self.dim];
        f(x, &mut out);
        Ok(out)
    }

    /// Replaces every `eps_k < target` by `target`; components are shared.
    pub fn relax_scales(&self, target: f64) -> Self {
        let mut relaxed = self.clone();
        for eps in relaxed.scales.iter_mut() {
            if *eps < target {
                *eps = target;
            }
        }
        relaxed
    }
}

impl LevelRhs for MultiscaleSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn top_level(&self) -> usize {
        self.n_scales()
    }

    fn eval_level(&self, level: usize, x: &[f64], out: &mut [f64]) {
        (self.components[0])(x, out);
        if level == 0 {
            return;
        }
        let mut scratch = vec![0.0; self.dim];
        for k in 1..=level {
            scratch.iter_mut().for_each(|v| *v = 0.0);
            (self.components[k])(x, &mut scratch);
            let inv = 1.0 / self.scales[k - 1];
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += s * inv;
            }
        }
    }
}

/// A single-level right-hand side from a closure, e.g. an averaged equation.
pub struct FnRhs<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnRhs<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> LevelRhs for FnRhs<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn top_level(&self) -> usize {
        0
    }

    fn eval_level(&self, _level: usize, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}
