use bytower_core::geometric::{
    admissible_xi, decompose, export_geometric_law, find_n_eps, DecomposeOptions, ExportOptions, FiniteTower,
    RedistributionPlan, SearchOptions,
};
use bytower_core::map_models::{doubling_first_return, truncate_renormalized};
use bytower_core::rational::{self, int};
use std::time::Instant;

fn tower() -> FiniteTower {
    FiniteTower::new(truncate_renormalized(&doubling_first_return(), 3).unwrap()).unwrap()
}

fn plan(t: &FiniteTower) -> RedistributionPlan {
    let r = 0.05;
    let xi = admissible_xi(r, 0.0, t.scheme.lambda, 100).unwrap();
    let (n, eps) = find_n_eps(t, r, &xi, SearchOptions::default()).unwrap();
    RedistributionPlan::new(r, xi, n, eps).unwrap()
}

#[test]
fn full_resolution_decomposition() {
    let t = tower();
    let p = plan(&t);
    let start = Instant::now();
    let d = decompose(&t, &p, DecomposeOptions::default()).unwrap();
    let elapsed = start.elapsed();
    eprintln!("plan N = {} eps = {} horizon = {} clocks = {} in {:?}", p.n, rational::format(&p.eps), d.horizon, d.checks.clocks, elapsed);
    assert!(d.residual_f64() <= 1e-4);
    assert_eq!(&d.resolved_total + &d.residual, int(1));
    assert!(d.residual_matches_law);
    assert_eq!(d.checks.prop_e, 20 * d.checks.clocks);
    assert_eq!(d.checks.flat_top, d.checks.clocks);
    assert_eq!(d.checks.nonnegative, d.checks.clocks);
}

#[test]
fn export_with_default_cutoff() {
    let t = tower();
    let p = plan(&t);
    let d = decompose(&t, &p, DecomposeOptions { mass_resolution: 1e-3, ..Default::default() }).unwrap();
    let (law, rep) = export_geometric_law(&t, &d, ExportOptions::default()).unwrap();
    assert!(rep.matches_pushforward && rep.heights_match_law && rep.remainder_nonnegative);
    assert_eq!(law.heights.total_exact().unwrap(), int(1));
}
