use ::vshmm::averaging::effective_force_product;
use ::vshmm::spectral::{inverse_transform, soft_threshold, transform, SpectralState};
use ::vshmm::{build_schedule, StepKernel, VshmmConfig};
use proptest::prelude::*;

fn config() -> impl Strategy<Value = VshmmConfig> {
    (1e-6f64..1e-3, prop::collection::vec(1.5f64..50.0, 1..4), 1usize..40, any::<bool>()).prop_map(|(dt, factors, cycles, variable)| {
        // decreasing savings factors
        let mut alpha = Vec::new();
        let mut a = 1.0;
        for f in factors.iter().rev() {
            a *= f;
            alpha.push(a);
        }
        alpha.reverse();
        let mean_cycle = dt * (1.0 + alpha.iter().sum::<f64>());
        let cfg = VshmmConfig::new(dt, mean_cycle * cycles as f64 * 1.3, alpha);
        if variable {
            cfg
        } else {
            cfg.constant_steps()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn schedule_covers_macro_step(cfg in config()) {
        let s = build_schedule(&cfg).unwrap();
        prop_assert!((s.total() - cfg.macro_step).abs() <= 1e-12 * cfg.macro_step.max(1.0));
        prop_assert!(s.steps.iter().all(|st| st.step > 0.0));
        let counts = s.steps_per_level();
        prop_assert!(counts.iter().all(|c| *c == counts[0]));
        prop_assert_eq!(s.n_cycles % s.subperiods.iter().map(|&m| m as usize).max().unwrap(), 0);
    }

    #[test]
    fn kernel_theta_round_trip(q in 1u32..6, u in 0.0f64..1.0) {
        for k in [StepKernel::cosine(), StepKernel::polynomial(q)] {
            let back = k.theta(k.theta_inverse(u).unwrap()).unwrap();
            prop_assert!((back - u).abs() < 1e-10);
        }
    }

    #[test]
    fn fft_round_trip(v in prop::collection::vec(-10.0f64..10.0, 64)) {
        let back = inverse_transform(&transform(&v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn real_field_has_real_end_modes(v in prop::collection::vec(-10.0f64..10.0, 32)) {
        let s = transform(&v).unwrap();
        let mean = v.iter().sum::<f64>() / 32.0;
        prop_assert!((s.coeff(0).re - mean).abs() < 1e-12);
        prop_assert!(s.coeff(0).im.abs() < 1e-12);
        prop_assert!(s.coeff(16).im.abs() < 1e-12);
        for k in 1..16 {
            prop_assert!((s.coeff(-k) - s.coeff(k).conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn soft_threshold_contracts(v in prop::collection::vec(-5.0f64..5.0, 32), lambda in 0.0f64..2.0) {
        let s = transform(&v).unwrap();
        let t = soft_threshold(&s, lambda).unwrap();
        for k in 0..=16 {
            let (a, b) = (s.coeff(k), t.coeff(k));
            prop_assert!(b.norm() <= a.norm() + 1e-15);
            prop_assert!((b.norm() - (a.norm() - lambda).max(0.0)).abs() < 1e-12);
        }
        let zero = soft_threshold(&SpectralState::zeros(32).unwrap(), lambda).unwrap();
        prop_assert!(zero.l2_norm() == 0.0);
    }

    #[test]
    fn product_average_ignores_sample_order(
        eta in prop::collection::vec(-3.0f64..3.0, 1..12),
        zeta in prop::collection::vec(-3.0f64..3.0, 1..12),
        shift in 0usize..12,
    ) {
        let f = |xi: &[f64], e: &[f64], z: &[f64]| vec![(xi[0] + e[0] + z[0]).sin() * e[0] - z[0] * z[0]];
        let wrap = |v: &[f64]| v.iter().map(|x| vec![*x]).collect::<Vec<_>>();
        let mut eta_r = eta.clone();
        eta_r.rotate_left(shift % eta.len());
        let mut zeta_r = zeta.clone();
        zeta_r.reverse();
        let a = effective_force_product(f, &wrap(&eta), &wrap(&zeta), &[0.4]).unwrap()[0];
        let b = effective_force_product(f, &wrap(&eta_r), &wrap(&zeta_r), &[0.4]).unwrap()[0];
        prop_assert!((a - b).abs() < 1e-13);
    }
}
