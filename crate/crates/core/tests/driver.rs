mod common;

use barycenter_cg::exec::Execution;
use barycenter_cg::model::{combination_cost, FEASIBILITY_TOL};
use barycenter_cg::{solve, solve_direct, DiscreteMeasure, Instance, PairVariant, SolveConfig, StartStrategy};
use common::{close, dense_matrix, random_instance, random_sizes, rng, vertex_enumeration};
use rand::Rng;

const VARIANTS: [(StartStrategy, PairVariant); 6] = [
    (StartStrategy::Greedy, PairVariant::Any),
    (StartStrategy::Greedy, PairVariant::Large),
    (StartStrategy::Greedy, PairVariant::Small),
    (StartStrategy::TwoApprox, PairVariant::Any),
    (StartStrategy::TwoApprox, PairVariant::Large),
    (StartStrategy::TwoApprox, PairVariant::Small),
];

fn config(start: StartStrategy, pair_variant: PairVariant) -> SolveConfig {
    SolveConfig { start, pair_variant, ..SolveConfig::default() }
}

#[test]
fn column_generation_matches_direct_solve() {
    let mut r = rng(21);
    for case in 0..40 {
        let n = r.gen_range(3..=5);
        let sizes = random_sizes(&mut r, n, 5, 3_000);
        let rw = r.gen_bool(0.5);
        let inst = random_instance(&mut r, &sizes, 2, rw);
        let want = solve_direct(&inst).unwrap().objective;
        for (start, pair) in VARIANTS {
            let res = solve(&inst, &config(start, pair)).unwrap();
            assert!(res.converged);
            assert!(
                close(res.objective, want, 1e-7),
                "case {case} {sizes:?} {start:?}/{pair:?}: {} vs {want}",
                res.objective
            );
            let strides = inst.strides().unwrap();
            assert!(res.weights.is_feasible(&inst, &strides, FEASIBILITY_TOL));
        }
    }
}

#[test]
fn three_point_measures_in_the_plane() {
    let tri = |pts: [[f64; 2]; 3]| DiscreteMeasure::new(pts.map(|p| p.to_vec()).to_vec(), vec![1.0 / 3.0; 3]).unwrap();
    let inst = Instance::uniform(vec![
        tri([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        tri([[2.0, 2.0], [3.0, 2.5], [2.5, 3.5]]),
        tri([[-1.0, 3.0], [0.0, 4.0], [-2.0, 4.5]]),
    ])
    .unwrap();
    let want = solve_direct(&inst).unwrap().objective;
    let res = solve(&inst, &SolveConfig::default()).unwrap();
    assert!(close(res.objective, want, 1e-7), "{} vs {want}", res.objective);
    assert!(res.barycenter.len() <= 9 - 3 + 1);
    let total: f64 = res.barycenter.iter().map(|p| p.mass).sum();
    assert!((total - 1.0).abs() < 1e-12);
    // Each point is the mean of the points it was built from.
    for p in &res.barycenter {
        for d in 0..2 {
            let mean: f64 =
                p.assignment.iter().enumerate().map(|(i, &j)| inst.measure(i).point(j)[d]).sum::<f64>() / 3.0;
            assert!((p.coords[d] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn two_by_two_by_two_matches_vertex_enumeration() {
    let mut r = rng(22);
    for _ in 0..30 {
        let inst = random_instance(&mut r, &[2, 2, 2], 1, true);
        let strides = inst.strides().unwrap();
        let a = dense_matrix(&inst);
        let b: Vec<f64> = inst.measures().iter().flat_map(|m| m.masses().iter().copied()).collect();
        let c: Vec<f64> =
            (0..strides.total()).map(|h| combination_cost(&strides.tuple_of(h).unwrap().indices, &inst)).collect();
        let want = vertex_enumeration(&a, &b, &c).unwrap();
        let res = solve(&inst, &SolveConfig::default()).unwrap();
        assert!(close(res.objective, want, 1e-7), "{} vs {want}", res.objective);
    }
}

#[test]
fn sequential_and_parallel_runs_agree_exactly() {
    let mut r = rng(23);
    let inst = random_instance(&mut r, &[6, 5, 4, 3, 3], 2, true);
    let seq = solve(&inst, &SolveConfig { exec: Execution::Sequential, ..SolveConfig::default() }).unwrap();
    let par = solve(&inst, &SolveConfig { exec: Execution::Parallel, ..SolveConfig::default() }).unwrap();
    assert_eq!(seq.objective.to_bits(), par.objective.to_bits());
    assert_eq!(seq.iterations, par.iterations);
    assert_eq!(seq.weights, par.weights);
}

#[test]
fn restricted_master_objective_never_increases() {
    let mut r = rng(24);
    for _ in 0..10 {
        let inst = random_instance(&mut r, &[5, 4, 4, 3], 2, false);
        let res = solve(&inst, &SolveConfig { polish: false, ..SolveConfig::default() }).unwrap();
        assert!(!res.trace.is_empty());
        for w in res.trace.windows(2) {
            assert!(w[1].rm_obj <= w[0].rm_obj + 1e-9, "{} then {}", w[0].rm_obj, w[1].rm_obj);
        }
        let last = res.trace.last().unwrap();
        assert!(last.pricing_obj >= -1e-6);
        assert_eq!(res.trace.len(), res.iterations + 1);
    }
}

#[test]
fn iteration_limit_reports_non_convergence() {
    let mut r = rng(25);
    let inst = random_instance(&mut r, &[6, 6, 5, 5], 2, false);
    let res = solve(&inst, &SolveConfig { max_iter: 1, ..SolveConfig::default() }).unwrap();
    assert!(!res.converged);
    assert_eq!(res.iterations, 1);
    let strides = inst.strides().unwrap();
    assert!(res.weights.is_feasible(&inst, &strides, FEASIBILITY_TOL));
}

#[test]
fn one_and_two_measures() {
    let mut r = rng(26);
    let one = random_instance(&mut r, &[4], 3, false);
    let res = solve(&one, &SolveConfig::default()).unwrap();
    assert_eq!(res.objective, 0.0);
    assert_eq!(res.barycenter.len(), 4);

    for _ in 0..20 {
        let sizes = random_sizes(&mut r, 2, 8, u64::MAX);
        let inst = random_instance(&mut r, &sizes, 2, true);
        let res = solve(&inst, &SolveConfig::default()).unwrap();
        let want = solve_direct(&inst).unwrap().objective;
        assert!(close(res.objective, want, 1e-9), "{} vs {want}", res.objective);
        assert!(res.converged);
    }
}

#[test]
fn result_objective_is_mass_times_cost() {
    let mut r = rng(27);
    let inst = random_instance(&mut r, &[4, 3, 3, 2], 2, true);
    let res = solve(&inst, &SolveConfig::default()).unwrap();
    let total: f64 = res.barycenter.iter().map(|p| p.mass * combination_cost(&p.assignment, &inst)).sum();
    assert!(close(total, res.objective, 1e-12));
}
