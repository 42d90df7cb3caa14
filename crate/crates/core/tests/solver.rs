//! Property checks of the conic solver on random small convex problems.

use dualcast::conic::{solve, AffineRow, ConicProblem, QuadBudget, SolveStatus};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random problem over the unit box with a strictly feasible origin.
fn random_problem(seed: u64, n: usize, rows: usize, with_quad: bool) -> ConicProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prob = ConicProblem::new(n);
    prob.objective = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    for i in 0..n {
        let mut a = vec![0.0; n];
        a[i] = -1.0;
        prob.affine_ineqs.push(AffineRow::new(a, 1.0));
    }
    for _ in 0..rows {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        prob.affine_ineqs.push(AffineRow::new(a, rng.random_range(0.1..1.0)));
    }
    if with_quad {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let linear = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        prob.quad_budget = Some(QuadBudget { quad: &a * a.transpose(), linear, bound: rng.random_range(0.2..1.0) });
    }
    prob.nonneg = (0..n).collect();
    prob
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn optimal_points_are_feasible_and_dominate_samples(seed in any::<u64>(), n in 2usize..5, rows in 0usize..5, with_quad in any::<bool>()) {
        let prob = random_problem(seed, n, rows, with_quad);
        let sol = solve(&prob, 1e-7).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(prob.max_violation(&sol.x) <= 1e-8 * (1.0 + sol.x.iter().map(|v| v * v).sum::<f64>().sqrt()));
        prop_assert!(sol.kkt_residual <= 1e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            if prob.max_violation(&x) <= 0.0 {
                prop_assert!(prob.objective_value(&x) <= sol.objective_value + 1e-6 * (1.0 + sol.objective_value.abs()));
            }
        }
    }

    #[test]
    fn solving_twice_is_bit_identical(seed in any::<u64>(), n in 2usize..5) {
        let prob = random_problem(seed, n, 3, true);
        let a = solve(&prob, 1e-7).unwrap();
        let b = solve(&prob, 1e-7).unwrap();
        prop_assert_eq!(a.x, b.x);
        prop_assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn text_form_round_trips(seed in any::<u64>(), n in 2usize..5) {
        let prob = random_problem(seed, n, 2, true);
        let back = ConicProblem::from_text(&prob.to_text()).unwrap();
        prop_assert_eq!(back, prob);
    }
}

#[test]
fn inconsistent_rows_report_infeasible() {
    let mut prob = ConicProblem::new(2);
    prob.objective = vec![1.0, 1.0];
    prob.affine_ineqs.push(AffineRow::new(vec![1.0, 1.0], -3.0));
    prob.affine_ineqs.push(AffineRow::new(vec![-1.0, -1.0], 1.0));
    prob.nonneg = vec![0, 1];
    assert_eq!(solve(&prob, 1e-7).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn indefinite_quadratic_is_a_construction_error() {
    let mut prob = ConicProblem::new(2);
    prob.quad_budget = Some(QuadBudget {
        quad: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
        linear: vec![0.0, 0.0],
        bound: 1.0,
    });
    assert!(solve(&prob, 1e-7).is_err());
}
