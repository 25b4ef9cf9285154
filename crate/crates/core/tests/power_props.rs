//! Power flow checked against oracles that do not use the solver's own
//! flow reporting: a closed-form two-bus solution and a per-node current
//! balance recomputed from the reported bus voltages.

mod common;

use common::power::*;
use proptest::prelude::*;
use sgcr_core::power::{solve_power_flow, NoCommands};
use sgcr_core::sample::SampleVariant;

#[test]
fn no_load_fixed_point_is_exact() {
    let sol = solve_power_flow(&two_bus(0.0, 0.0, 0.5, 1.0)).unwrap();
    assert_eq!(sol.iterations, 0);
    assert!(sol.buses.iter().all(|b| b.vm_pu == 1.0 && b.va_deg == 0.0));

    let mut net = sample_network(SampleVariant::ThreeSubstations);
    net.apply_timestep(0, &NoCommands).unwrap();
    for l in &mut net.loads {
        (l.p_mw, l.q_mvar) = (0.0, 0.0);
    }
    for g in net.generators.iter_mut().filter(|g| !g.is_slack) {
        g.p_mw = 0.0;
    }
    let sol = solve_power_flow(&net).unwrap();
    assert!(sol.converged);
    assert!(sol.buses.iter().all(|b| b.vm_pu == 1.0 && b.va_deg == 0.0), "flat start must be exact");
    assert!(sol.lines.iter().chain(&sol.transformers).all(|b| b.p_from_mw == 0.0 && b.q_from_mvar == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn two_bus_matches_closed_form(p in 0.0..8.0f64, q in -2.0..4.0f64, r in 0.01..0.5f64, x in 0.05..1.0f64) {
        // r, x in ohm on a 10 kV line: z_base = 1 ohm.
        let net = two_bus(p * 100.0 / 10.0, q * 100.0 / 10.0, r, x);
        let (pp, qp) = (p / 10.0, q / 10.0);
        // Stay clear of the nose of the PV curve, where no solution exists.
        let b = 1.0 - 2.0 * (pp * r + qp * x);
        prop_assume!(b * b - 4.0 * (pp * pp + qp * qp) * (r * r + x * x) > 0.05);
        let sol = solve_power_flow(&net).unwrap();
        prop_assert!(sol.converged);
        let expect = two_bus_oracle(pp, qp, r, x);
        prop_assert!((sol.buses[1].vm_pu - expect).abs() < 1e-6, "{} vs {}", sol.buses[1].vm_pu, expect);
        prop_assert!(kcl_mismatch(&net, &sol) < 1e-6);
    }

}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sample_grid_balances(
        scale in prop::collection::vec(0.0..2.5f64, 51),
        open in prop::collection::vec(any::<bool>(), 45),
        pv in 0.0..20.0f64,
    ) {
        let mut net = sample_network(SampleVariant::ThreeSubstations);
        net.apply_timestep(0, &NoCommands).unwrap();
        for (l, k) in net.loads.iter_mut().zip(&scale) {
            l.p_mw *= k;
            l.q_mvar *= k;
        }
        // Open roughly one switch in five.
        for (i, s) in net.switches.iter_mut().enumerate() {
            if open[i] && open[(i * 7 + 3) % open.len()] && open[(i * 11 + 5) % open.len()] {
                s.closed = false;
            }
        }
        for g in net.generators.iter_mut().filter(|g| !g.is_slack) {
            g.p_mw = pv;
        }
        let sol = solve_power_flow(&net).unwrap();
        prop_assert!(sol.converged);
        prop_assert!(sol.max_balance_error() < 1e-6);
        prop_assert!(kcl_mismatch(&net, &sol) < 1e-6, "mismatch {}", kcl_mismatch(&net, &sol));
    }
}
