//! Fourier machinery for periodic fields on `[0, 2 pi)`: transforms, soft
//! thresholding, mode clustering and the pseudo-spectral operators of the
//! multiscale diffusion and advection problems.
//!
//! Coefficients follow the mean-value convention
//! `u_k = (1/n) sum_j u(x_j) exp(-i k x_j)`, so `coeff(0)` is the mean.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::steppers::{dns_integrate, BaseStepper, Trajectory};
use crate::system::LevelRhs;
use crate::vshmm::{integrate_with_schedule, VshmmConfig, VshmmSchedule, build_schedule};

/// Half spectrum `k = 0..=n/2` of a real field; negative wavenumbers are
/// implied by Hermitian symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    n: usize,
    half: Vec<Complex64>,
}

fn check_grid(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Domain(format!("grid size {n} must be a power of two >= 2")));
    }
    Ok(())
}

impl SpectralState {
    pub fn zeros(n: usize) -> Result<Self> {
        check_grid(n)?;
        Ok(Self {
            n,
            half: vec![Complex64::new(0.0, 0.0); n / 2 + 1],
        })
    }

    pub fn from_half(n: usize, half: Vec<Complex64>) -> Result<Self> {
        check_grid(n)?;
        if half.len() != n / 2 + 1 {
            return Err(Error::Domain(format!("{} coefficients for grid size {n}", half.len())));
        }
        let mut s = Self { n, half };
        s.half[0].im = 0.0;
        s.half[n / 2].im = 0.0;
        Ok(s)
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    /// Largest stored wavenumber, `n/2`.
    pub fn max_wavenumber(&self) -> i64 {
        (self.n / 2) as i64
    }

    pub fn half(&self) -> &[Complex64] {
        &self.half
    }

    /// Coefficient of `exp(i k x)` for `-n/2 < k <= n/2`; zero outside.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let m = k.unsigned_abs() as usize;
        if m > self.n / 2 || k == -(self.n as i64 / 2) {
            return Complex64::new(0.0, 0.0);
        }
        if k >= 0 {
            self.half[m]
        } else {
            self.half[m].conj()
        }
    }

    /// Sets `coeff(k)` and, implicitly, `coeff(-k)`.
    pub fn set_coeff(&mut self, k: i64, value: Complex64) -> Result<()> {
        let m = k.unsigned_abs() as usize;
        if m > self.n / 2 {
            return Err(Error::Domain(format!("wavenumber {k} outside the grid")));
        }
        let mut v = if k >= 0 { value } else { value.conj() };
        if m == 0 || m == self.n / 2 {
            v.im = 0.0;
        }
        self.half[m] = v;
        Ok(())
    }

    /// Interleaved `(re, im)` pairs for `k = 0..=n/2`, length `n + 2`.
    pub fn to_packed(&self) -> Vec<f64> {
        self.half.iter().flat_map(|c| [c.re, c.im]).collect()
    }

    pub fn from_packed(n: usize, packed: &[f64]) -> Result<Self> {
        check_grid(n)?;
        if packed.len() != n + 2 {
            return Err(Error::Domain(format!("packed length {} for grid size {n}", packed.len())));
        }
        let half = packed.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
        Self::from_half(n, half)
    }

    /// `sqrt(sum_k |u_k|^2)` over all `k`, which is the RMS of the field.
    pub fn l2_norm(&self) -> f64 {
        let mut s = self.half[0].norm_sqr();
        for m in 1..self.half.len() {
            let w = if m == self.n / 2 { 1.0 } else { 2.0 };
            s += w * self.half[m].norm_sqr();
        }
        s.sqrt()
    }

    pub fn sub(&self, other: &SpectralState) -> Result<SpectralState> {
        if self.n != other.n {
            return Err(Error::Domain("grid size mismatch".into()));
        }
        let half = self.half.iter().zip(&other.half).map(|(a, b)| a - b).collect();
        Ok(SpectralState { n: self.n, half })
    }

    /// Keeps only wavenumbers with `|k|` in `keep`.
    pub fn masked(&self, keep: &BTreeSet<u64>) -> SpectralState {
        let mut out = self.clone();
        for (m, c) in out.half.iter_mut().enumerate() {
            if !keep.contains(&(m as u64)) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        out
    }
}

/// Forward and inverse transforms of one grid size with reusable work space.
pub struct FourierGrid {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    work: Mutex<(Vec<Complex64>, Vec<Complex64>)>,
}

impl std::fmt::Debug for FourierGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierGrid").field("n", &self.n).finish()
    }
}

impl FourierGrid {
    pub fn new(n: usize) -> Result<Self> {
        check_grid(n)?;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Ok(Self {
            n,
            forward,
            inverse,
            work: Mutex::new((vec![Complex64::new(0.0, 0.0); n], vec![Complex64::new(0.0, 0.0); scratch])),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid points `x_j = 2 pi j / n`.
    pub fn points(&self) -> Vec<f64> {
        grid_points(self.n)
    }

    /// Writes the half spectrum of `field` into `half`.
    pub fn forward_into(&self, field: &[f64], half: &mut [Complex64]) {
        let mut guard = self.work.lock().unwrap();
        let (buf, scratch) = &mut *guard;
        for (b, v) in buf.iter_mut().zip(field) {
            *b = Complex64::new(*v, 0.0);
        }
        self.forward.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.n as f64;
        for (h, b) in half.iter_mut().zip(buf.iter()) {
            *h = b * scale;
        }
        half[0].im = 0.0;
        half[self.n / 2].im = 0.0;
    }

    /// Writes the real field of the half spectrum `half` into `field`.
    pub fn inverse_into(&self, half: &[Complex64], field: &mut [f64]) {
        let mut guard = self.work.lock().unwrap();
        let (buf, scratch) = &mut *guard;
        let n = self.n;
        buf[0] = Complex64::new(half[0].re, 0.0);
        for m in 1..n / 2 {
            buf[m] = half[m];
            buf[n - m] = half[m].conj();
        }
        buf[n / 2] = Complex64::new(half[n / 2].re, 0.0);
        self.inverse.process_with_scratch(buf, scratch);
        for (f, b) in field.iter_mut().zip(buf.iter()) {
            *f = b.re;
        }
    }

    pub fn transform(&self, field: &[f64]) -> Result<SpectralState> {
        if field.len() != self.n {
            return Err(Error::Domain(format!("field of length {} for grid size {}", field.len(), self.n)));
        }
        let mut s = SpectralState::zeros(self.n)?;
        self.forward_into(field, &mut s.half);
        Ok(s)
    }

    pub fn inverse_transform(&self, state: &SpectralState) -> Result<Vec<f64>> {
        if state.n != self.n {
            return Err(Error::Domain("grid size mismatch".into()));
        }
        let mut field = vec![0.0; self.n];
        self.inverse_into(&state.half, &mut field);
        Ok(field)
    }
}

pub fn grid_points(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect()
}

pub fn transform(field: &[f64]) -> Result<SpectralState> {
    FourierGrid::new(field.len())?.transform(field)
}

pub fn inverse_transform(state: &SpectralState) -> Result<Vec<f64>> {
    FourierGrid::new(state.n)?.inverse_transform(state)
}

/// Mode-wise `max(|v| - lambda, 0) v / |v|`.
pub fn soft_threshold(state: &SpectralState, lambda: f64) -> Result<SpectralState> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!("shrinkage {lambda} must be nonnegative")));
    }
    let half = state
        .half
        .iter()
        .map(|c| {
            let r = c.norm();
            if r <= lambda || r == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c * ((r - lambda) / r)
            }
        })
        .collect();
    Ok(SpectralState { n: state.n, half })
}

/// Disjoint symmetric wavenumber sets, ordered by their largest `|k|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeClusters {
    /// Absolute wavenumbers of each cluster; the `-k` partners are implied.
    pub clusters: Vec<BTreeSet<u64>>,
    pub buffer: u64,
}

impl ModeClusters {
    pub fn new(clusters: Vec<BTreeSet<u64>>, buffer: u64) -> Result<Self> {
        if clusters.is_empty() || clusters.iter().any(|c| c.is_empty()) {
            return Err(Error::EmptyClusters("cluster list contains an empty set".into()));
        }
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if !clusters[i].is_disjoint(&clusters[j]) {
                    return Err(Error::Config(format!("clusters {i} and {j} overlap")));
                }
            }
            if i > 0 && clusters[i].last() <= clusters[i - 1].last() {
                return Err(Error::Config("clusters must be ordered by largest wavenumber".into()));
            }
        }
        Ok(Self { clusters, buffer })
    }

    /// Clusters given as `(center, half_width)` ranges of `|k|`, clipped at 0.
    pub fn from_ranges(ranges: &[(u64, u64)]) -> Result<Self> {
        let clusters = ranges
            .iter()
            .map(|&(c, w)| (c.saturating_sub(w)..=c + w).collect())
            .collect();
        Self::new(clusters, 0)
    }

    pub fn from_lists(lists: &[&[u64]]) -> Result<Self> {
        Self::new(lists.iter().map(|l| l.iter().copied().collect()).collect(), 0)
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn union(&self) -> BTreeSet<u64> {
        self.clusters.iter().flatten().copied().collect()
    }

    /// `K_0 u ... u K_level`.
    pub fn cumulative(&self, level: usize) -> BTreeSet<u64> {
        self.clusters[..=level.min(self.len() - 1)].iter().flatten().copied().collect()
    }

    /// Signed members `{-k, k}` of cluster `j`, ascending.
    pub fn signed(&self, j: usize) -> Vec<i64> {
        let mut out: Vec<i64> = self.clusters[j]
            .iter()
            .flat_map(|&k| if k == 0 { vec![0] } else { vec![-(k as i64), k as i64] })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn max_wavenumber(&self) -> u64 {
        self.clusters.iter().filter_map(|c| c.last()).copied().max().unwrap_or(0)
    }
}

/// Groups the wavenumbers with `|u_k| > lambda` into clusters: retained `|k|`
/// closer than `gap` share a cluster, then each cluster is widened to every
/// `|k|` within `buffer` of a member.
pub fn cluster_modes(state: &SpectralState, lambda: f64, gap: u64, buffer: u64) -> Result<ModeClusters> {
    if gap < 1 {
        return Err(Error::Config("gap must be at least 1".into()));
    }
    let retained: Vec<u64> = state
        .half
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > lambda)
        .map(|(m, _)| m as u64)
        .collect();
    if retained.is_empty() {
        return Err(Error::EmptyClusters(format!("no coefficient exceeds {lambda:e}")));
    }
    let mut groups: Vec<Vec<u64>> = vec![vec![retained[0]]];
    for &k in &retained[1..] {
        let last = groups.last_mut().unwrap();
        if k - last.last().unwrap() <= gap {
            last.push(k);
        } else {
            groups.push(vec![k]);
        }
    }
    let kmax = state.max_wavenumber() as u64;
    let mut clusters: Vec<BTreeSet<u64>> = groups
        .iter()
        .map(|g| {
            g.iter()
                .flat_map(|&k| k.saturating_sub(buffer)..=(k + buffer).min(kmax))
                .collect()
        })
        .collect();
    // buffers may make neighbours touch; merge those
    let mut merged: Vec<BTreeSet<u64>> = Vec::new();
    for c in clusters.drain(..) {
        match merged.last_mut() {
            Some(prev) if c.first().unwrap() <= prev.last().unwrap() => prev.extend(c),
            _ => merged.push(c),
        }
    }
    ModeClusters::new(merged, buffer)
}

/// `F_j` keeps the coefficients of `force` on `K_j`.
pub fn decompose_force(force: &SpectralState, clusters: &ModeClusters) -> Result<Vec<SpectralState>> {
    if clusters.is_empty() {
        return Err(Error::EmptyClusters("no clusters".into()));
    }
    Ok(clusters.clusters.iter().map(|c| force.masked(c)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PdeKind {
    /// `u_t = (d(x) u_x)_x`
    Diffusion,
    /// `u_t = -a(x) u_x`
    Advection,
}

impl PdeKind {
    pub fn name(self) -> &'static str {
        match self {
            PdeKind::Diffusion => "diffusion",
            PdeKind::Advection => "advection",
        }
    }
}

/// Pseudo-spectral right-hand side on the packed half spectrum.
///
/// With clusters, level `l` returns the force restricted to `K_0..K_l` and
/// the top level is the number of clusters minus one; without clusters there
/// is a single level, the full dealiased force.
pub struct PdeOperator {
    kind: PdeKind,
    grid: FourierGrid,
    /// Coefficient field `d` or `a`, low-pass filtered to `|k| <= n/3`.
    coefficient: Vec<f64>,
    cutoff: usize,
    clusters: Option<ModeClusters>,
    level_masks: Vec<Vec<bool>>,
    work: Mutex<PdeWork>,
}

struct PdeWork {
    spec: Vec<Complex64>,
    field: Vec<f64>,
}

impl std::fmt::Debug for PdeOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PdeOperator")
            .field("kind", &self.kind)
            .field("n", &self.grid.n())
            .field("clusters", &self.clusters)
            .finish()
    }
}

impl PdeOperator {
    pub fn new(kind: PdeKind, coefficient: &[f64]) -> Result<Self> {
        let n = coefficient.len();
        let grid = FourierGrid::new(n)?;
        let cutoff = n / 3;
        let mut spec = vec![Complex64::new(0.0, 0.0); n / 2 + 1];
        grid.forward_into(coefficient, &mut spec);
        for c in spec.iter_mut().skip(cutoff + 1) {
            *c = Complex64::new(0.0, 0.0);
        }
        let mut filtered = vec![0.0; n];
        grid.inverse_into(&spec, &mut filtered);
        Ok(Self {
            kind,
            grid,
            coefficient: filtered,
            cutoff,
            clusters: None,
            level_masks: Vec::new(),
            work: Mutex::new(PdeWork {
                spec,
                field: vec![0.0; n],
            }),
        })
    }

    pub fn with_clusters(mut self, clusters: ModeClusters) -> Result<Self> {
        if clusters.max_wavenumber() as usize > self.cutoff {
            return Err(Error::Config(format!(
                "cluster wavenumber {} beyond the dealiasing cutoff {}",
                clusters.max_wavenumber(),
                self.cutoff
            )));
        }
        let half = self.grid.n() / 2 + 1;
        self.level_masks = (0..clusters.len())
            .map(|l| {
                let keep = clusters.cumulative(l);
                (0..half).map(|m| keep.contains(&(m as u64))).collect()
            })
            .collect();
        self.clusters = Some(clusters);
        Ok(self)
    }

    pub fn kind(&self) -> PdeKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn grid(&self) -> &FourierGrid {
        &self.grid
    }

    pub fn clusters(&self) -> Option<&ModeClusters> {
        self.clusters.as_ref()
    }

    /// Dealiasing cutoff `n/3`.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Full dealiased force on half spectra.
    pub fn force_into(&self, u: &[Complex64], out: &mut [Complex64]) {
        let mut guard = self.work.lock().unwrap();
        let PdeWork { spec, field } = &mut *guard;
        for (m, s) in spec.iter_mut().enumerate() {
            *s = if m <= self.cutoff {
                u[m] * Complex64::new(0.0, m as f64)
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.grid.inverse_into(spec, field);
        for (f, c) in field.iter_mut().zip(&self.coefficient) {
            *f *= c;
        }
        self.grid.forward_into(field, out);
        for (m, o) in out.iter_mut().enumerate() {
            *o = if m > self.cutoff {
                Complex64::new(0.0, 0.0)
            } else {
                match self.kind {
                    PdeKind::Diffusion => *o * Complex64::new(0.0, m as f64),
                    PdeKind::Advection => -*o,
                }
            };
        }
        out[0].im = 0.0;
    }

    pub fn force(&self, u: &SpectralState) -> Result<SpectralState> {
        if u.n != self.n() {
            return Err(Error::Domain("grid size mismatch".into()));
        }
        let mut out = SpectralState::zeros(self.n())?;
        self.force_into(&u.half, &mut out.half);
        Ok(out)
    }
}

fn as_complex(packed: &[f64]) -> &[Complex64] {
    // Complex64 is repr(C) with two f64 fields
    unsafe { std::slice::from_raw_parts(packed.as_ptr() as *const Complex64, packed.len() / 2) }
}

fn as_complex_mut(packed: &mut [f64]) -> &mut [Complex64] {
    unsafe { std::slice::from_raw_parts_mut(packed.as_mut_ptr() as *mut Complex64, packed.len() / 2) }
}

impl LevelRhs for PdeOperator {
    fn dim(&self) -> usize {
        self.n() + 2
    }

    fn top_level(&self) -> usize {
        self.level_masks.len().saturating_sub(1)
    }

    fn eval_level(&self, level: usize, x: &[f64], out: &mut [f64]) {
        let out_c = as_complex_mut(out);
        self.force_into(as_complex(x), out_c);
        if let Some(mask) = self.level_masks.get(level) {
            for (o, keep) in out_c.iter_mut().zip(mask) {
                if !keep {
                    *o = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
}

/// `(d u_x)_x` pseudo-spectrally with 2/3-rule dealiasing.
pub fn diffusion_rhs(u: &SpectralState, d: &SpectralState) -> Result<SpectralState> {
    operator_rhs(PdeKind::Diffusion, u, d)
}

/// `-a u_x` pseudo-spectrally with 2/3-rule dealiasing.
pub fn advection_rhs(u: &SpectralState, a: &SpectralState) -> Result<SpectralState> {
    operator_rhs(PdeKind::Advection, u, a)
}

fn operator_rhs(kind: PdeKind, u: &SpectralState, c: &SpectralState) -> Result<SpectralState> {
    if u.n != c.n {
        return Err(Error::Domain("grid size mismatch".into()));
    }
    let coefficient = inverse_transform(c)?;
    PdeOperator::new(kind, &coefficient)?.force(u)
}

/// DNS of the PDE on the full grid, states sampled as packed half spectra.
pub fn pde_dns_integrate(op: &PdeOperator, u0: &SpectralState, dt: f64, t_end: f64, sample_every: f64) -> Result<Trajectory> {
    if op.clusters.is_some() {
        return Err(Error::Config("DNS needs an operator without clusters".into()));
    }
    dns_integrate(op, &u0.to_packed(), 0.0, BaseStepper::Rk4, dt, t_end, sample_every)
}

/// VSHMM run with the clusters of `op` as scale components. The initial state
/// is projected onto the union of the clusters.
pub fn pde_vshmm_integrate(op: &PdeOperator, u0: &SpectralState, cfg: &VshmmConfig, t_end: f64) -> Result<(Trajectory, VshmmSchedule)> {
    let clusters = op
        .clusters
        .as_ref()
        .ok_or_else(|| Error::Config("VSHMM needs an operator with clusters".into()))?;
    if cfg.n_scales() + 1 != clusters.len() {
        return Err(Error::Config(format!(
            "{} clusters need {} savings factors, got {}",
            clusters.len(),
            clusters.len() - 1,
            cfg.n_scales()
        )));
    }
    let x0 = u0.masked(&clusters.union()).to_packed();
    let sched = build_schedule(cfg)?;
    let traj = integrate_with_schedule(op, &x0, 0.0, &sched, cfg.base, t_end)?;
    Ok((traj, sched))
}

/// Relative RMS difference `|a - b| / |b|`.
pub fn relative_l2(a: &SpectralState, b: &SpectralState) -> Result<f64> {
    Ok(a.sub(b)?.l2_norm() / b.l2_norm())
}
