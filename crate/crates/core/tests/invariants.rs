use bdsde_lab::coefficients::{audit_assumptions, builtin_catalog, lookup_preset, Monotonicity, TerminalForm};
use bdsde_lab::drivers::{backward_ito_sum, forward_ito_sum, sample_driver_paths};
use bdsde_lab::grid::make_grid;
use bdsde_lab::linear::{
    bounding_envelope, explicit_linear_solution, q_factor, EnvelopeSide, LinearBdsdeSpec, LinearTerminal,
};
use bdsde_lab::lsmc::solve_bdsde_lsmc;
use bdsde_lab::stats::Estimate;
use bdsde_lab::verify::{comparison_check, monotonicity_scan, Thresholds};
use bdsde_lab::{DriverPaths, NoiseLoadingSpec, Problem, RngSpec, SchemeConfig};
use proptest::prelude::*;

fn paths(w: usize, b: usize, n: usize, seed: u64) -> DriverPaths {
    sample_driver_paths(&make_grid(1.0, n).unwrap(), w, b, RngSpec::new(seed)).unwrap()
}

fn in_pool<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

fn tolerance(scale: f64) -> f64 {
    64.0 * f64::EPSILON * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn paths_ignore_thread_count(seed in any::<u64>(), w in 1usize..64, b in 1usize..16, n in 1usize..12) {
        let one = in_pool(1, || paths(w, b, n, seed));
        let many = in_pool(3, || paths(w, b, n, seed));
        prop_assert_eq!(one.dw_matrix(), many.dw_matrix());
        prop_assert_eq!(one.db_matrix(), many.db_matrix());
    }

    #[test]
    fn telescoping_identities(seed in any::<u64>(), n in 1usize..40, start in 0usize..40) {
        let p = paths(3, 3, n, seed);
        let t = start % n;
        for m in 0..3 {
            let w = p.w_path(m);
            let ones = vec![1.0; n + 1];
            prop_assert!((forward_ito_sum(&w[t..], &ones[t..]).unwrap() - (w[n] - w[t])).abs() <= tolerance(1.0));
            let qv: f64 = w[t..].windows(2).map(|d| (d[1] - d[0]).powi(2)).sum();
            let lhs = forward_ito_sum(&w[t..], &w[t..]).unwrap();
            let rhs = 0.5 * (w[n] * w[n] - w[t] * w[t]) - 0.5 * qv;
            prop_assert!((lhs - rhs).abs() <= tolerance(w[n].abs() + qv), "{} vs {}", lhs, rhs);

            let b = p.b_path(m);
            prop_assert!((backward_ito_sum(&b[t..], &ones[t..]).unwrap() - (b[n] - b[t])).abs() <= tolerance(1.0));
            let qv: f64 = b[t..].windows(2).map(|d| (d[1] - d[0]).powi(2)).sum();
            let lhs = backward_ito_sum(&b[t..], &b[t..]).unwrap();
            let rhs = 0.5 * (b[n] * b[n] - b[t] * b[t]) + 0.5 * qv;
            prop_assert!((lhs - rhs).abs() <= tolerance(b[n].abs() + qv), "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn q_is_multiplicative(seed in any::<u64>(), a in -1.0f64..1.0, bz in -1.0f64..1.0, c in -1.0f64..1.0,
                           r in 0usize..9, s in 0usize..9, u in 0usize..9) {
        let mut idx = [r, s, u];
        idx.sort_unstable();
        let [t, r, s] = idx;
        let p = paths(8, 4, 8, seed);
        let spec = LinearBdsdeSpec::constant(9, a, bz, c);
        let tt = q_factor(&spec, &p, t, t).unwrap();
        prop_assert!(tt.values.iter().all(|&v| v == 1.0));
        let ts = q_factor(&spec, &p, t, s).unwrap();
        let tr = q_factor(&spec, &p, t, r).unwrap();
        let rs = q_factor(&spec, &p, r, s).unwrap();
        for b in 0..4 {
            for w in 0..8 {
                let (lhs, rhs) = (ts.get(b, w), tr.get(b, w) * rs.get(b, w));
                prop_assert!(lhs > 0.0);
                prop_assert!((lhs - rhs).abs() <= tolerance(lhs), "{} vs {}", lhs, rhs);
            }
        }
    }

    #[test]
    fn envelope_carries_sign_of_h(seed in any::<u64>(), x in -20.0f64..20.0, a in -0.5f64..0.5) {
        prop_assume!(x != 0.0);
        let p = paths(1, 8, 8, seed);
        for side in [EnvelopeSide::Upper, EnvelopeSide::Lower] {
            let env = bounding_envelope(x, side, &NoiseLoadingSpec::constant(a), 1.0, 0.5, &p, |v| v, None, 0).unwrap();
            prop_assert!(env.iter().all(|&e| e != 0.0 && e.signum() == x.signum()));
        }
    }

    #[test]
    fn explicit_solution_is_linear_in_data(seed in any::<u64>(), xi in -3.0f64..3.0, f in -1.0f64..1.0) {
        let p = paths(16, 4, 8, seed);
        let mut spec = LinearBdsdeSpec::constant(9, -0.3, 0.2, 0.4).with_terminal(LinearTerminal::Constant(xi));
        spec.forcing = vec![f; 9];
        spec.variation = (0..9).map(|i| 0.1 * i as f64).collect();
        let one = explicit_linear_solution(&spec, &p, 0).unwrap();
        let two = explicit_linear_solution(&spec.scaled(2.0), &p, 0).unwrap();
        for (a, b) in one.per_b.iter().zip(&two.per_b) {
            prop_assert_eq!(2.0 * a.mean, b.mean);
        }
    }

    #[test]
    fn comparison_is_antisymmetric(seed in any::<u64>(), c in 0.1f64..2.0) {
        let p = paths(64, 4, 4, seed);
        let preset = lookup_preset::<f64>("brownian_shift_terminal").unwrap();
        let base = Problem::from_preset(&preset, 0.3);
        let up = base.clone().with_terminal(base.terminal.shifted(c));
        let scheme = SchemeConfig::default();
        let th = Thresholds::default();
        let fwd = comparison_check(&up, &base, &p, &preset.card, &scheme, 0, &th).unwrap();
        let rev = comparison_check(&base, &up, &p, &preset.card, &scheme, 0, &th).unwrap();
        for (a, b) in fwd.differences.iter().zip(&rev.differences) {
            prop_assert_eq!(a.mean, -b.mean);
        }
    }

    #[test]
    fn scan_is_translation_invariant_for_zero_driver(seed in any::<u64>(), c in -5.0f64..5.0) {
        let p = paths(32, 4, 4, seed);
        let xs: Vec<f64> = (0..7).map(|i| -1.5 + 0.5 * i as f64).collect();
        let prob = Problem::from_preset(&lookup_preset("brownian_shift_terminal").unwrap(), 0.0);
        let moved = prob.clone().with_terminal(prob.terminal.shifted(c));
        let scheme = SchemeConfig::default();
        let th = Thresholds::default();
        let a = monotonicity_scan(&prob, &xs, &p, &scheme, &[0, 2], &th).unwrap();
        let b = monotonicity_scan(&moved, &xs, &p, &scheme, &[0, 2], &th).unwrap();
        prop_assert_eq!(a.violations, b.violations);
    }

    #[test]
    fn flagged_terminals_are_strictly_monotone(xs in proptest::collection::vec(-50.0f64..50.0, 2..20)) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for preset in builtin_catalog::<f64>().iter() {
            let TerminalForm::Deterministic(psi) = &preset.terminal.form else { continue };
            for w in xs.windows(2) {
                let (a, b) = (psi(w[0]), psi(w[1]));
                prop_assert!(a.is_finite() && b.is_finite());
                match preset.terminal.monotone {
                    Monotonicity::Increasing => prop_assert!(a < b, "{}", preset.name),
                    Monotonicity::Decreasing => prop_assert!(a > b, "{}", preset.name),
                    Monotonicity::Unspecified => {}
                }
            }
        }
    }
}

#[test]
fn increments_are_uncorrelated_across_drivers() {
    let m = 10_000;
    let p = paths(m, m, 4, 11);
    let bound = 3.0 / (m as f64).sqrt();
    let corr = |a: &[f64], b: &[f64]| {
        let (ma, mb) = (a.iter().sum::<f64>() / m as f64, b.iter().sum::<f64>() / m as f64);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    };
    for i in 0..4 {
        for j in 0..4 {
            let r = corr(&p.dw_column(i), &p.db_column(j));
            assert!(r.abs() <= bound, "corr(dW_{i}, dB_{j}) = {r}");
        }
    }
}

#[test]
fn forward_sums_of_deterministic_integrands_are_centred() {
    let p = paths(20_000, 1, 16, 3);
    let integrand: Vec<f64> = (0..17).map(|i| (i as f64 * 0.4).cos()).collect();
    let sums: Vec<f64> = (0..20_000)
        .map(|w| forward_ito_sum(&p.w_path(w), &integrand).unwrap())
        .collect();
    let e = Estimate::of(&sums);
    assert!(e.mean.abs() <= 3.0 * e.se, "{e:?}");
}

#[test]
fn every_preset_passes_its_card_at_full_probe_count() {
    for preset in builtin_catalog::<f64>().iter() {
        let rep = audit_assumptions(preset, &preset.card, 100_000, RngSpec::new(5), 1.0).unwrap();
        assert!(rep.pass(), "{}: {:#?}", preset.name, rep.failures());
    }
}

#[test]
fn explicit_matches_ode_to_first_order() {
    // b = c = 0, a = -0.7, forcing 1, ξ = 2: Y_0 = e^{aT} ξ + (e^{aT} - 1)/a
    let (a, xi) = (-0.7f64, 2.0);
    let exact = (a).exp() * xi + ((a).exp() - 1.0) / a;
    let err = |n: usize| {
        let p = paths(1, 1, n, 1);
        let mut spec = LinearBdsdeSpec::constant(n + 1, a, 0.0, 0.0).with_terminal(LinearTerminal::Constant(xi));
        spec.forcing = vec![1.0; n + 1];
        (explicit_linear_solution(&spec, &p, 0).unwrap().pooled.mean - exact).abs()
    };
    let (e16, e32, e64) = (err(16), err(32), err(64));
    assert!(e16 <= 1.0 / 16.0, "{e16}");
    assert!(e32 < e16 && e64 < e32);
    assert!((e16 / e32 - 2.0).abs() < 0.2, "ratio {}", e16 / e32);
}

#[test]
fn z_vanishes_for_constant_terminal() {
    let p = paths(2048, 8, 16, 9);
    let mut prob = Problem::from_preset(&lookup_preset("linear").unwrap(), 0.0);
    // force regression mode with a W-side terminal that is constant in value
    prob.terminal = bdsde_lab::coefficients::TerminalFamily::composite("one", Monotonicity::Unspecified, |_, _| 1.0);
    let s = solve_bdsde_lsmc(&p, &prob, &SchemeConfig::default()).unwrap();
    for node in 0..16 {
        let z = s.pooled_z(node);
        assert!(z.mean.abs() <= 3.0 * z.se + 1e-12, "node {node}: {z:?}");
    }
}

#[test]
fn refinement_ordering_over_ten_seeds() {
    let prob = Problem::from_preset(&lookup_preset("linear").unwrap(), 0.0);
    let scheme = SchemeConfig::default();
    let violations = (0..10)
        .filter(|&seed| {
            let fine = paths(1, 64, 64, 100 + seed);
            let y = |p: &DriverPaths| solve_bdsde_lsmc(p, &prob, &scheme).unwrap().pooled_y(0).mean;
            let y64 = y(&fine);
            let y32 = y(&fine.coarsen(2).unwrap());
            let y16 = y(&fine.coarsen(4).unwrap());
            (y16 - y64).abs() <= (y32 - y64).abs()
        })
        .count();
    assert!(violations <= 1, "{violations} of 10 seeds out of order");
}
