//! Step-size kernels.
//!
//! A kernel `K` lives on the unit phase interval, integrates to one and has
//! vanishing derivatives of order `0..=q` at both endpoints. Mesoscopic steps
//! are `alpha * dt * K(phase)`, so the mean step over a period is exactly
//! `alpha * dt`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `1 + cos(2 pi (t - 1/2))`, smooth to order one at the endpoints.
    Cosine,
    /// `c t^(q+1) (1-t)^(q+1)` normalized to unit mass.
    Polynomial,
    /// `K = 1`; fails the regularity condition and yields uniform steps.
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    family: KernelFamily,
    q: u32,
    /// Monomial coefficients of `K` (polynomial family only).
    poly: Vec<f64>,
    /// Monomial coefficients of the antiderivative.
    poly_integral: Vec<f64>,
}

impl StepKernel {
    pub fn cosine() -> Self {
        Self {
            family: KernelFamily::Cosine,
            q: 1,
            poly: Vec::new(),
            poly_integral: Vec::new(),
        }
    }

    pub fn constant() -> Self {
        Self {
            family: KernelFamily::Constant,
            q: 0,
            poly: Vec::new(),
            poly_integral: Vec::new(),
        }
    }

    /// C^q bump `c t^(q+1) (1-t)^(q+1)`.
    pub fn polynomial(q: u32) -> Self {
        let p = q as usize + 1;
        // 1 / B(p+1, p+1) = (2p+1)! / (p!)^2
        let mut norm = 1.0;
        for i in 1..=(2 * p + 1) {
            norm *= i as f64;
        }
        for i in 1..=p {
            norm /= (i * i) as f64;
        }
        let mut poly = vec![0.0; 2 * p + 1];
        let mut binom = 1.0;
        for i in 0..=p {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            poly[p + i] = norm * binom * sign;
            binom = binom * (p - i) as f64 / (i + 1) as f64;
        }
        let mut poly_integral = vec![0.0; poly.len() + 1];
        for (n, c) in poly.iter().enumerate() {
            poly_integral[n + 1] = c / (n + 1) as f64;
        }
        Self {
            family: KernelFamily::Polynomial,
            q,
            poly,
            poly_integral,
        }
    }

    /// Kernel by configuration name: `cosine`, `polynomial` (needs `q`,
    /// default 2) or `constant`.
    pub fn from_name(name: &str, q: Option<u32>) -> Result<Self> {
        match name {
            "cosine" => Ok(Self::cosine()),
            "constant" => Ok(Self::constant()),
            "polynomial" | "poly" => Ok(Self::polynomial(q.unwrap_or(2))),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Cosine => "cosine",
            KernelFamily::Polynomial => "polynomial",
            KernelFamily::Constant => "constant",
        }
    }

    /// Smoothness order claimed by the family.
    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn eval(&self, phase: f64) -> Result<f64> {
        check_phase(phase)?;
        Ok(self.value(phase))
    }

    pub fn theta(&self, phase: f64) -> Result<f64> {
        check_phase(phase)?;
        Ok(self.antiderivative(phase).clamp(0.0, 1.0))
    }

    /// Solves `theta(t) = u` by bisection down to a 1e-13 bracket, followed by
    /// a guarded Newton correction.
    pub fn theta_inverse(&self, u: f64) -> Result<f64> {
        check_phase(u)?;
        if self.family == KernelFamily::Constant {
            return Ok(u);
        }
        if u == 0.0 || u == 1.0 {
            return Ok(u);
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let mut iterations = 0;
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if self.antiderivative(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > 200 {
                return Err(Error::NoConvergence(format!(
                    "theta_inverse({u}) bracket stuck at [{lo}, {hi}]"
                )));
            }
        }
        let mut t = 0.5 * (lo + hi);
        let k = self.value(t);
        if k > 1e-8 {
            let newton = t - (self.antiderivative(t) - u) / k;
            if newton >= lo && newton <= hi {
                t = newton;
            }
        }
        Ok(t)
    }

    pub(crate) fn value(&self, t: f64) -> f64 {
        match self.family {
            KernelFamily::Cosine => 1.0 + (2.0 * PI * (t - 0.5)).cos(),
            KernelFamily::Constant => 1.0,
            // factored form: the expanded monomials cancel badly near t = 1
            KernelFamily::Polynomial => {
                let p = self.q as i32 + 1;
                self.poly[p as usize] * (t * (1.0 - t)).powi(p)
            }
        }
    }

    fn antiderivative(&self, t: f64) -> f64 {
        match self.family {
            KernelFamily::Cosine => t + (2.0 * PI * (t - 0.5)).sin() / (2.0 * PI),
            KernelFamily::Constant => t,
            KernelFamily::Polynomial if t > 0.5 => 1.0 - horner(&self.poly_integral, 1.0 - t),
            KernelFamily::Polynomial => horner(&self.poly_integral, t),
        }
    }
}

impl Default for StepKernel {
    fn default() -> Self {
        Self::cosine()
    }
}

fn horner(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn check_phase(phase: f64) -> Result<()> {
    if (0.0..=1.0).contains(&phase) {
        Ok(())
    } else {
        Err(Error::Domain(format!("phase {phase} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    /// `|integral of K - 1|` by composite Gauss-Legendre quadrature.
    pub moment_error: f64,
    /// Largest endpoint magnitude of `d^r K / dt^r`, for `r = 0..=q`.
    pub regularity_errors: Vec<f64>,
}

impl KernelReport {
    pub fn passes(&self, moment_tol: f64, regularity_tol: f64) -> bool {
        self.moment_error < moment_tol && self.regularity_errors.iter().all(|e| *e < regularity_tol)
    }
}

/// Checks the moment and regularity conditions numerically. Derivatives use
/// one-sided Fornberg stencils inside the support, so no values outside
/// [0, 1] are needed.
pub fn verify_kernel(kernel: &StepKernel) -> KernelReport {
    let mass = numerics::integrate(|t| kernel.value(t), 0.0, 1.0, 32, 16);
    let moment_error = (mass - 1.0).abs();
    // a power of two keeps 1 - x exact at the right endpoint
    let h = 1.0 / 1024.0;
    let accuracy = 6;
    let regularity_errors = (0..=kernel.q() as usize)
        .map(|r| {
            if r == 0 {
                return kernel.value(0.0).abs().max(kernel.value(1.0).abs());
            }
            // wide enough to be exact on degree 2q + 2 polynomials
            let points = (r + accuracy).max(2 * kernel.q() as usize + 4);
            let offsets: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
            let weights = numerics::fd_weights(0.0, &offsets, r);
            let left: f64 = weights
                .iter()
                .zip(&offsets)
                .map(|(w, x)| w * kernel.value(*x))
                .sum();
            let backward: Vec<f64> = offsets.iter().map(|x| -x).collect();
            let weights_back = numerics::fd_weights(0.0, &backward, r);
            let right: f64 = weights_back
                .iter()
                .zip(&offsets)
                .map(|(w, x)| w * kernel.value(1.0 - x))
                .sum();
            left.abs().max(right.abs())
        })
        .collect();
    KernelReport {
        moment_error,
        regularity_errors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_values() {
        let k = StepKernel::cosine();
        assert!((k.eval(0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(k.eval(0.0).unwrap().abs() < 1e-15);
        assert!((k.eval(0.25).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn phase_outside_unit_interval_is_rejected() {
        let k = StepKernel::cosine();
        assert!(matches!(k.eval(-0.1), Err(Error::Domain(_))));
        assert!(matches!(k.theta(1.5), Err(Error::Domain(_))));
        assert!(matches!(k.theta_inverse(2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cosine_theta_matches_quadrature() {
        let k = StepKernel::cosine();
        assert!((k.theta(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((k.theta(0.5).unwrap() - 0.5).abs() < 1e-15);
        // independent route: integrate the kernel numerically
        let quad = numerics::integrate(|t| 1.0 - (2.0 * PI * t).cos(), 0.0, 0.25, 8, 12);
        let closed = 0.25 - 1.0 / (2.0 * PI);
        assert!((quad - closed).abs() < 1e-14);
        assert!((k.theta(0.25).unwrap() - closed).abs() < 1e-14);
        assert!((closed - 0.09085).abs() < 1e-5);
    }

    #[test]
    fn cosine_theta_inverse_examples() {
        let k = StepKernel::cosine();
        assert!((k.theta_inverse(0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(k.theta_inverse(0.0).unwrap(), 0.0);
        let u = 0.25 - 1.0 / (2.0 * PI);
        assert!((k.theta_inverse(u).unwrap() - 0.25).abs() < 1e-12);
        // the five-digit value is off by 5e-6 in u and K(0.25) = 1
        assert!((k.theta_inverse(0.09085).unwrap() - 0.25).abs() < 1e-5);
    }

    #[test]
    fn constant_kernel_fails_regularity_only() {
        let report = verify_kernel(&StepKernel::constant());
        assert!(report.moment_error < 1e-12);
        assert_eq!(report.regularity_errors, vec![1.0]);
    }

    #[test]
    fn cosine_kernel_report() {
        let report = verify_kernel(&StepKernel::cosine());
        assert!(report.moment_error < 1e-12);
        assert_eq!(report.regularity_errors.len(), 2);
        assert!(report.regularity_errors.iter().all(|e| *e < 1e-8), "{report:?}");
    }

    #[test]
    fn polynomial_family_is_normalized_and_flat() {
        for q in 0..5 {
            let k = StepKernel::polynomial(q);
            let report = verify_kernel(&k);
            assert!(report.moment_error < 1e-12, "q={q}: {report:?}");
            assert!(report.regularity_errors.iter().all(|e| *e < 1e-6), "q={q}: {report:?}");
            assert!((k.theta(1.0).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_q2_has_nonzero_third_derivative() {
        // K = 140 t^3 (1-t)^3, so K'''(0) = 840: the family is exactly C^2.
        let k = StepKernel::polynomial(2);
        let h = 1e-3;
        let offsets: Vec<f64> = (0..9).map(|i| i as f64 * h).collect();
        let w = numerics::fd_weights(0.0, &offsets, 3);
        let d3: f64 = w.iter().zip(&offsets).map(|(w, x)| w * k.value(*x)).sum();
        assert!((d3 - 840.0).abs() < 1e-3, "{d3}");
    }

    #[test]
    fn theta_inverse_round_trip_on_grid() {
        for kernel in [StepKernel::cosine(), StepKernel::polynomial(2), StepKernel::constant()] {
            for i in 0..1000 {
                let t = i as f64 / 999.0;
                let back = kernel.theta_inverse(kernel.theta(t).unwrap()).unwrap();
                assert!((back - t).abs() < 1e-10, "{} t={t} back={back}", kernel.name());
            }
        }
    }

    #[test]
    fn midpoint_rule_converges_for_cosine() {
        let k = StepKernel::cosine();
        let n = 64;
        let mean: f64 = (0..n).map(|i| k.value((i as f64 + 0.5) / n as f64)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-8);
    }

    #[test]
    fn kernel_names_round_trip() {
        for name in ["cosine", "polynomial", "constant"] {
            assert_eq!(StepKernel::from_name(name, Some(2)).unwrap().name(), name);
        }
        assert!(StepKernel::from_name("gauss", None).is_err());
    }
}
