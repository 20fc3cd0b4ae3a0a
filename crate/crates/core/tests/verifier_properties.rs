use pinchlab::cones::{SetKind, SetSpec};
use pinchlab::eigen_ode::{EigenTriple, FlowParams};
use pinchlab::error::PinchError;
use pinchlab::integrator::IntegratorConfig;
use pinchlab::pinch::j_polynomial;
use pinchlab::verifier::{check_invariance, scan_inequality, scan_random, InequalityKind, ScanOptions};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn scan_reports_do_not_depend_on_thread_count() {
    let p = FlowParams::with_rho(-1.0).unwrap();
    let one = in_pool(1, || scan_inequality(InequalityKind::JCaseNegTrace, &p, 80, 1e-12).unwrap());
    let four = in_pool(4, || scan_inequality(InequalityKind::JCaseNegTrace, &p, 80, 1e-12).unwrap());
    assert_eq!(one, four);
    let opts = ScanOptions::default();
    let q = FlowParams::with_rho(0.2).unwrap();
    let a = in_pool(1, || scan_random(InequalityKind::TraceBound, &q, 50_000, 8, 3, &opts).unwrap());
    let b = in_pool(3, || scan_random(InequalityKind::TraceBound, &q, 50_000, 8, 3, &opts).unwrap());
    assert_eq!(a, b);
}

#[test]
fn finer_grid_stays_sound() {
    for kind in [InequalityKind::JCaseNegTrace, InequalityKind::JCaseNonnegTrace] {
        let p = FlowParams::with_rho(-0.1).unwrap();
        let coarse = scan_inequality(kind, &p, 50, 1e-12).unwrap();
        let fine = scan_inequality(kind, &p, 100, 1e-12).unwrap();
        assert_eq!(coarse.violations, 0);
        assert!(fine.violations <= fine.near_boundary_violations);
        assert!(fine.points_checked > coarse.points_checked);
    }
}

#[test]
fn reported_minimum_is_attained() {
    let p = FlowParams::with_rho(-10.0).unwrap();
    let r = scan_inequality(InequalityKind::JCaseNegTrace, &p, 60, 1e-12).unwrap();
    assert_eq!(j_polynomial(&r.argmin_state, &p), r.min_margin);
    assert_eq!(r.argmin_state.sup_norm(), 1.0);
}

#[test]
fn region_filter_excludes_counterexamples() {
    // J is negative on positive isotropic states, which have mu + nu > 0
    // and so lie outside both regions; a scan must never visit them
    let p = FlowParams::with_rho(-1.0).unwrap();
    let s = EigenTriple::isotropic(1.0).unwrap();
    assert!(j_polynomial(&s, &p) < 0.0);
    for kind in [InequalityKind::JCaseNegTrace, InequalityKind::JCaseNonnegTrace] {
        assert!(!kind.in_region(&s));
        let r = scan_inequality(kind, &p, 41, 1e-12).unwrap();
        assert!(r.argmin_state.ricci_min() < 0.0, "{:?}", r.argmin_state);
        assert!(r.min_margin >= 0.0);
    }
}

#[test]
fn empty_region_is_reported() {
    // no grid point of a 2-point grid has nu < 0 and mu + nu >= 0 except (1, 1, -1)
    let p = FlowParams::new(-0.5, 1.0, 1.0).unwrap();
    let r = scan_inequality(InequalityKind::XiPrime, &p, 2, 1e-12).unwrap();
    assert_eq!(r.points_checked, 1);
    let q = FlowParams::with_rho(0.1).unwrap();
    assert!(matches!(
        scan_inequality(InequalityKind::JCaseNegTrace, &q, 10, 1e-12),
        Err(PinchError::Domain(_))
    ));
}

#[test]
fn vanishing_horizon_is_membership_self_test() {
    let cfg = IntegratorConfig::default();
    for (kind, p) in [
        (SetKind::X, FlowParams::with_rho(-1.0).unwrap()),
        (SetKind::K, FlowParams::new(0.1, -4.0, 1.0).unwrap()),
    ] {
        let spec = SetSpec::new(kind, p).unwrap();
        let r = check_invariance(&spec, 64, 1e-14, 5, &cfg, 1e-8).unwrap();
        assert!(r.worst_drift >= -1e-8);
        assert!(r.worst_drift <= r.band);
    }
}
