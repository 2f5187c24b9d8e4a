use bytower_bench::{doubling_plan, doubling_tower};
use bytower_core::geometric::{admissible_xi, find_n_eps, SearchOptions};
use bytower_core::rational::rat;

#[test]
fn fixture_plan_is_the_searched_plan() {
    let t = doubling_tower();
    assert_eq!(t.tau_bar, rat(11, 7));
    let xi = admissible_xi(0.05, t.scheme.distortion_k, t.scheme.lambda, 100).unwrap();
    let (n, eps) = find_n_eps(&t, 0.05, &xi, SearchOptions::default()).unwrap();
    let p = doubling_plan();
    assert_eq!((p.xi, p.n, p.eps), (xi, n, eps));
}
