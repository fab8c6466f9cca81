mod support;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use distddp::qp::solve_qp;

#[test]
fn ddp_matches_riccati_on_random_lq_instances() {
    let rep = support::lqr::compare(20, 11);
    assert!(
        rep.worst_cost_rel <= 1e-8,
        "cost gap {:e}",
        rep.worst_cost_rel
    );
    assert!(
        rep.worst_traj_inf <= 1e-6,
        "trajectory gap {:e}",
        rep.worst_traj_inf
    );
}

#[test]
fn analytic_derivatives_match_finite_differences() {
    for (name, err) in support::fd::suite(100, 5) {
        assert!(err <= 1e-4, "{name}: {err:e}");
    }
}

#[test]
fn projections_match_brute_force() {
    let gap = support::qp_oracle::compare_projections(1000, 3);
    assert!(gap <= 1e-6, "gap {gap:e}");
}

#[test]
fn dense_qps_match_brute_force() {
    let mut rng = support::rng(21);
    for _ in 0..300 {
        let n = rng.gen_range(1..=5);
        let l = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = &l * l.transpose() + DMatrix::identity(n, n) * 0.1;
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 3.0);
        let m = rng.gen_range(0..=6);
        let a = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DVector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
        let oracle = support::qp_oracle::brute_force(&h, &g, &a, &b).expect("origin is feasible");
        let sol = solve_qp(&h, &g, &a, &b).unwrap();
        assert!((sol.x - oracle).amax() < 1e-6);
    }
}
