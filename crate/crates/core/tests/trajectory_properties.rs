use pinchlab::eigen_ode::{isotropic_solution, rhs, trace_excess, EigenTriple, FlowParams};
use pinchlab::integrator::{integrate, integrate_partial, IntegratorConfig, Terminal};
use proptest::prelude::*;

fn ordered(scale: f64) -> impl Strategy<Value = EigenTriple> {
    prop::array::uniform3(-scale..scale).prop_map(|v| EigenTriple::sorted(v).unwrap().0)
}

fn final_error(c0: f64, rho: f64, t: f64, tol: f64) -> f64 {
    let p = FlowParams::with_rho(rho).unwrap();
    let cfg = IntegratorConfig {
        rel_tol: tol,
        abs_tol: tol * 1e-2,
        ..IntegratorConfig::default()
    };
    let tr = integrate(&EigenTriple::isotropic(c0).unwrap(), &p, 0.0, t, &cfg).unwrap();
    (tr.nodes.last().unwrap()[0] - isotropic_solution(c0, &p, t).unwrap()).abs()
}

#[test]
fn error_tracks_tolerance() {
    // global error is proportional to the tolerance, so a 4x tighter tolerance
    // must buy at least a 3x smaller error
    for (c0, rho, t) in [(1.0, 0.0, 0.2), (-1.0, 0.0, 10.0), (1.0, -1.0, 0.05)] {
        for tol in [1e-5, 2.5e-6, 6.25e-7] {
            let coarse = final_error(c0, rho, t, tol);
            let fine = final_error(c0, rho, t, tol / 4.0);
            assert!(coarse / fine >= 3.0, "c0={c0} rho={rho} tol={tol}: {coarse:e} vs {fine:e}");
        }
    }
}

#[test]
fn isotropic_run_matches_closed_form_at_dense_points() {
    let p = FlowParams::with_rho(0.2).unwrap();
    let tr = integrate(&EigenTriple::isotropic(-2.0).unwrap(), &p, 0.0, 3.0, &IntegratorConfig::default()).unwrap();
    for t in tr.checkpoints(5) {
        let exact = isotropic_solution(-2.0, &p, t).unwrap();
        assert!((tr.eval_at(t).unwrap().nu() - exact).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ordering_is_preserved(s in ordered(5.0), rho in -2.0f64..0.24) {
        let p = FlowParams::with_rho(rho).unwrap();
        let tr = integrate_partial(&s, &p, 0.0, 0.05, &IntegratorConfig::default()).unwrap();
        prop_assert!(tr.min_gap() >= -1e-9, "gap {}", tr.min_gap());
        for t in tr.checkpoints(3) {
            let y = tr.eval_raw(t).unwrap();
            let norm = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!((y[0] - y[1]).min(y[1] - y[2]) >= -1e-9 * norm);
        }
    }

    #[test]
    fn trace_inequality_along_trajectories(s in ordered(5.0), rho in -2.0f64..0.24) {
        let p = FlowParams::with_rho(rho).unwrap();
        let tr = integrate_partial(&s, &p, 0.0, 0.05, &IntegratorConfig::default()).unwrap();
        for st in tr.states() {
            let d = rhs(&st, &p);
            let scale = 1.0 + st.trace().powi(2) + d.trace().abs();
            prop_assert!(trace_excess(&st, &p) >= -1e-9 * scale);
        }
    }

    #[test]
    fn forward_then_backward_returns(s in ordered(1.0), rho in -1.0f64..0.24) {
        let p = FlowParams::with_rho(rho).unwrap();
        let cfg = IntegratorConfig::default();
        let fwd = integrate(&s, &p, 0.0, 0.05, &cfg).unwrap();
        prop_assume!(fwd.terminal == Terminal::ReachedEnd);
        let mid = fwd.state(fwd.len() - 1);
        let back = integrate(&mid, &p, 0.05, 0.0, &cfg).unwrap();
        let end = back.state(back.len() - 1);
        let scale = 1.0 + mid.sup_norm();
        for (a, b) in end.to_array().iter().zip(s.to_array()) {
            prop_assert!((a - b).abs() <= 10.0 * cfg.rel_tol * scale, "{a} vs {b}");
        }
    }
}
