//! Variable step size multirate splitting.
//!
//! Each cycle advances the full system by the micro step `dt`, then every
//! coarser truncation `j - 1` by a mesoscopic step `h_j` (largest savings
//! last). The sequence of `(level, step)` pairs for one macro interval is
//! precomputed; its steps sum to the macro interval `ΔT` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::StepKernel;
use crate::steppers::{exact_count, BaseStepper, StepBuffers, Trajectory};
use crate::system::LevelRhs;

/// Subperiods with fewer cycles than this are not used by the default `m`.
pub const MIN_CYCLES_PER_SUBPERIOD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    /// Midpoint phases per cycle, globally rescaled to land on `ΔT`.
    #[default]
    Precomputed,
    /// Steps from `theta_inverse` of the elapsed phase; the last step is
    /// truncated at `ΔT`.
    Online,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VshmmConfig {
    /// Micro step `dt` used on the full system.
    pub micro_step: f64,
    /// Macro sampling interval `ΔT`.
    pub macro_step: f64,
    /// Savings factors `alpha_1 > alpha_2 > ... > 1`; `alpha_j` sets the mean
    /// of `h_j`, which advances level `j - 1`.
    pub savings: Vec<f64>,
    /// Subperiod divisors `m_1 = 1 <= m_2 <= ...`; `None` picks defaults.
    pub subperiods: Option<Vec<u32>>,
    pub kernel: StepKernel,
    /// `false` gives the constant-step splitting baseline.
    pub variable_steps: bool,
    pub base: BaseStepper,
    pub mode: ScheduleMode,
}

impl VshmmConfig {
    pub fn new(micro_step: f64, macro_step: f64, savings: Vec<f64>) -> Self {
        Self {
            micro_step,
            macro_step,
            savings,
            subperiods: None,
            kernel: StepKernel::cosine(),
            variable_steps: true,
            base: BaseStepper::Rk4,
            mode: ScheduleMode::Precomputed,
        }
    }

    pub fn with_kernel(mut self, kernel: StepKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_subperiods(mut self, m: Vec<u32>) -> Self {
        self.subperiods = Some(m);
        self
    }

    pub fn constant_steps(mut self) -> Self {
        self.variable_steps = false;
        self
    }

    pub fn with_base(mut self, base: BaseStepper) -> Self {
        self.base = base;
        self
    }

    pub fn with_mode(mut self, mode: ScheduleMode) -> Self {
        self.mode = mode;
        self
    }

    /// Number of stiff levels `K`.
    pub fn n_scales(&self) -> usize {
        self.savings.len()
    }

    /// Mean length of one cycle, `dt (1 + sum alpha)`.
    pub fn mean_cycle(&self) -> f64 {
        self.micro_step * (1.0 + self.savings.iter().sum::<f64>())
    }

    pub fn validate(&self) -> Result<()> {
        let dt = self.micro_step;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("micro step {dt} must be positive")));
        }
        if !(self.macro_step > 0.0 && self.macro_step.is_finite()) {
            return Err(Error::Config(format!("macro step {} must be positive", self.macro_step)));
        }
        if self.savings.is_empty() {
            return Err(Error::Config("at least one savings factor is required".into()));
        }
        for (j, a) in self.savings.iter().enumerate() {
            if !(*a > 1.0) {
                return Err(Error::Config(format!("savings factor alpha_{} = {a} must exceed 1", j + 1)));
            }
            if j > 0 && !(*a < self.savings[j - 1]) {
                return Err(Error::Config(format!(
                    "savings factors must decrease, alpha_{} = {a} >= alpha_{} = {}",
                    j + 1,
                    j,
                    self.savings[j - 1]
                )));
            }
        }
        if self.macro_step < self.mean_cycle() * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "macro step {} shorter than one cycle {}",
                self.macro_step,
                self.mean_cycle()
            )));
        }
        if let Some(m) = &self.subperiods {
            if m.len() != self.savings.len() {
                return Err(Error::Config(format!(
                    "{} subperiod divisors for {} savings factors",
                    m.len(),
                    self.savings.len()
                )));
            }
            if m[0] != 1 {
                return Err(Error::Config(format!("m_1 must be 1, got {}", m[0])));
            }
            if m.windows(2).any(|w| w[1] < w[0]) || m.contains(&0) {
                return Err(Error::Config(format!("subperiod divisors {m:?} must be positive and nondecreasing")));
            }
        }
        Ok(())
    }

    fn nominal_cycles(&self) -> usize {
        ((self.macro_step / self.mean_cycle()).round() as usize).max(1)
    }

    /// Explicit divisors, or `m_j = ceil(alpha_{j-1} / alpha_j)` capped so
    /// that every subperiod keeps at least `MIN_CYCLES_PER_SUBPERIOD` cycles.
    pub fn resolved_subperiods(&self) -> Vec<u32> {
        if let Some(m) = &self.subperiods {
            return m.clone();
        }
        let cap = (self.nominal_cycles() / MIN_CYCLES_PER_SUBPERIOD).max(1) as u32;
        let mut m = vec![1u32; self.savings.len()];
        for j in 1..self.savings.len() {
            let ratio = (self.savings[j - 1] / self.savings[j]).ceil() as u32;
            m[j] = ratio.min(cap).max(m[j - 1]);
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledStep {
    pub cycle: usize,
    pub level: usize,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VshmmSchedule {
    pub macro_step: f64,
    pub n_cycles: usize,
    pub subperiods: Vec<u32>,
    /// Global factor applied to the raw mesoscopic steps (1 in online mode).
    pub scale_factor: f64,
    pub steps: Vec<ScheduledStep>,
    pub top_level: usize,
}

impl VshmmSchedule {
    pub fn total(&self) -> f64 {
        self.steps.iter().map(|s| s.step).sum()
    }

    /// Number of steps taken on each level.
    pub fn steps_per_level(&self) -> Vec<usize> {
        let mut counts = vec![0; self.top_level + 1];
        for s in &self.steps {
            counts[s.level] += 1;
        }
        counts
    }

    /// Mean step on a level; for level `j - 1` this is the mean of `h_j`.
    pub fn mean_step(&self, level: usize) -> f64 {
        let (sum, n) = self
            .steps
            .iter()
            .filter(|s| s.level == level)
            .fold((0.0, 0usize), |(s, n), st| (s + st.step, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm_all(m: &[u32]) -> usize {
    m.iter().fold(1u64, |acc, &v| acc / gcd(acc, v as u64) * v as u64) as usize
}

pub fn build_schedule(cfg: &VshmmConfig) -> Result<VshmmSchedule> {
    cfg.validate()?;
    match cfg.mode {
        ScheduleMode::Precomputed => build_precomputed(cfg),
        ScheduleMode::Online => build_online(cfg),
    }
}

fn build_precomputed(cfg: &VshmmConfig) -> Result<VshmmSchedule> {
    let k_top = cfg.n_scales();
    let dt = cfg.micro_step;
    let subperiods = cfg.resolved_subperiods();
    let period = lcm_all(&subperiods);
    let n0 = cfg.nominal_cycles();
    let n_cycles = n0.div_ceil(period) * period;
    if n_cycles == 0 {
        return Err(Error::Config("schedule has no cycles".into()));
    }
    let mut steps = Vec::with_capacity(n_cycles * (k_top + 1));
    let mut raw_meso = 0.0;
    for i in 0..n_cycles {
        steps.push(ScheduledStep { cycle: i, level: k_top, step: dt });
        for j in (1..=k_top).rev() {
            let m = subperiods[j - 1] as f64;
            let phase = (m * (i as f64 + 0.5) / n_cycles as f64).fract();
            let weight = if cfg.variable_steps { cfg.kernel.value(phase) } else { 1.0 };
            let h = cfg.savings[j - 1] * dt * weight;
            raw_meso += h;
            steps.push(ScheduledStep { cycle: i, level: j - 1, step: h });
        }
    }
    let remaining = cfg.macro_step - n_cycles as f64 * dt;
    if !(remaining > 0.0) || !(raw_meso > 0.0) {
        return Err(Error::Config(format!(
            "{n_cycles} micro steps of {dt} leave no room in the macro step {}",
            cfg.macro_step
        )));
    }
    let scale = remaining / raw_meso;
    if !(0.5..=2.0).contains(&scale) {
        log::warn!("mesoscopic steps rescaled by {scale:.3}: macro step and savings factors are badly matched");
    }
    for s in steps.iter_mut().filter(|s| s.level != k_top) {
        s.step *= scale;
    }
    if steps.iter().any(|s| !(s.step > 0.0)) {
        return Err(Error::Config("schedule contains a nonpositive step".into()));
    }
    Ok(VshmmSchedule {
        macro_step: cfg.macro_step,
        n_cycles,
        subperiods,
        scale_factor: scale,
        steps,
        top_level: k_top,
    })
}

fn build_online(cfg: &VshmmConfig) -> Result<VshmmSchedule> {
    let k_top = cfg.n_scales();
    let dt = cfg.micro_step;
    let total = cfg.macro_step;
    let subperiods = cfg.resolved_subperiods();
    let mut steps = Vec::new();
    let mut t = 0.0;
    let mut cycle = 0;
    'outer: loop {
        let levels = std::iter::once((k_top, None)).chain((1..=k_top).rev().map(|j| (j - 1, Some(j))));
        for (level, meso) in levels {
            let mut h = match meso {
                None => dt,
                Some(j) => {
                    let base = cfg.savings[j - 1] * dt;
                    if cfg.variable_steps {
                        let tau = (subperiods[j - 1] as f64 * t / total).fract();
                        base * cfg.kernel.value(cfg.kernel.theta_inverse(tau)?)
                    } else {
                        base
                    }
                }
            };
            if !(h > 0.0) {
                continue;
            }
            let last = t + h >= total * (1.0 - 1e-14);
            if last {
                h = total - t;
            }
            if h > 0.0 {
                steps.push(ScheduledStep { cycle, level, step: h });
            }
            t += h;
            if last {
                break 'outer;
            }
        }
        cycle += 1;
        if cycle > 100_000_000 {
            return Err(Error::Config("online schedule does not terminate".into()));
        }
    }
    Ok(VshmmSchedule {
        macro_step: total,
        n_cycles: cycle + 1,
        subperiods,
        scale_factor: 1.0,
        steps,
        top_level: k_top,
    })
}

/// Runs one macro interval of the schedule from `(t_n, x)`. Returns `t_n + ΔT`.
pub fn macro_step<S: LevelRhs + ?Sized>(
    sys: &S,
    x: &mut [f64],
    t_n: f64,
    sched: &VshmmSchedule,
    base: BaseStepper,
    buf: &mut StepBuffers,
    rhs_evals: &mut [u64],
) -> Result<f64> {
    if sched.top_level != sys.top_level() {
        return Err(Error::Config(format!(
            "schedule has {} stiff levels but the system has {}",
            sched.top_level,
            sys.top_level()
        )));
    }
    let mut t = t_n;
    for s in &sched.steps {
        base.step(sys, s.level, x, s.step, buf);
        rhs_evals[s.level] += base.stages();
        t += s.step;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::blow_up(t, Some(s.level), Some(s.cycle)));
        }
    }
    Ok(t_n + sched.macro_step)
}

/// Repeats `macro_step` from `(t0, x0)` to `t_end`, sampling at every
/// multiple of `ΔT`.
pub fn vshmm_integrate<S: LevelRhs + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    cfg: &VshmmConfig,
    t_end: f64,
) -> Result<Trajectory> {
    let sched = build_schedule(cfg)?;
    integrate_with_schedule(sys, x0, t0, &sched, cfg.base, t_end)
}

pub fn integrate_with_schedule<S: LevelRhs + ?Sized>(
    sys: &S,
    x0: &[f64],
    t0: f64,
    sched: &VshmmSchedule,
    base: BaseStepper,
    t_end: f64,
) -> Result<Trajectory> {
    let n_macro = exact_count(t_end - t0, sched.macro_step, "vshmm span")?;
    let mut traj = Trajectory::new(sys.top_level() + 1);
    let mut x = x0.to_vec();
    let mut buf = StepBuffers::new(x.len());
    traj.push(t0, &x);
    for n in 0..n_macro {
        let t_n = t0 + n as f64 * sched.macro_step;
        macro_step(sys, &mut x, t_n, sched, base, &mut buf, &mut traj.rhs_evals)?;
        traj.push(t0 + (n + 1) as f64 * sched.macro_step, &x);
    }
    Ok(traj)
}

/// Fast-phase advance per sampling step in the torus diagnostic.
pub const TORUS_FAST_INCREMENT: f64 = 0.1;

/// Phase pairs `(fast, meso)` on the unit torus visited by `count` cycles.
///
/// The fast phase advances by [`TORUS_FAST_INCREMENT`] per cycle; the meso
/// phase by `beta` times that, modulated by the kernel when `variable`.
pub fn torus_sampling_diagnostic(beta: f64, count: usize, kernel: &StepKernel, variable: bool) -> Result<Vec<[f64; 2]>> {
    if count == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta = {beta} must be positive")));
    }
    let mut points = Vec::with_capacity(count);
    let mut meso: f64 = 0.0;
    for i in 0..count {
        let fast = i as f64 * TORUS_FAST_INCREMENT;
        points.push([fast.rem_euclid(1.0), meso.rem_euclid(1.0)]);
        let weight = if variable {
            kernel.value((i as f64 + 0.5) / count as f64)
        } else {
            1.0
        };
        meso += beta * TORUS_FAST_INCREMENT * weight;
    }
    Ok(points)
}

fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |u: f64, v: f64| {
        let x = (u - v).rem_euclid(1.0);
        x.min(1.0 - x)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

/// Largest distance from a `grid x grid` lattice on the torus to the nearest
/// sample.
pub fn covering_radius(points: &[[f64; 2]], grid: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..grid {
        for b in 0..grid {
            let probe = [a as f64 / grid as f64, b as f64 / grid as f64];
            let nearest = points
                .iter()
                .map(|p| torus_distance(*p, probe))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    worst
}

/// Lifts consecutive torus points to the plane (increments below one half)
/// and returns the largest distance to the least-squares line through them.
pub fn wrapped_line_deviation(points: &[[f64; 2]]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let mut lifted = vec![points[0]];
    for w in points.windows(2) {
        let prev = *lifted.last().unwrap();
        let step = |a: f64, b: f64| {
            let d = b - a;
            d - d.round()
        };
        lifted.push([prev[0] + step(w[0][0], w[1][0]), prev[1] + step(w[0][1], w[1][1])]);
    }
    let n = lifted.len() as f64;
    let mx = lifted.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = lifted.iter().map(|p| p[1]).sum::<f64>() / n;
    let sxx: f64 = lifted.iter().map(|p| (p[0] - mx).powi(2)).sum();
    let sxy: f64 = lifted.iter().map(|p| (p[0] - mx) * (p[1] - my)).sum();
    let slope = sxy / sxx;
    let norm = (1.0 + slope * slope).sqrt();
    lifted
        .iter()
        .map(|p| ((p[1] - my) - slope * (p[0] - mx)).abs() / norm)
        .fold(0.0, f64::max)
}
