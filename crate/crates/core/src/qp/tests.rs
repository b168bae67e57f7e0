use approx::assert_abs_diff_eq;
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn check_kkt(problem: &QpProblem, sol: &QpSolution, tol: f64) {
    assert_eq!(sol.status, QpStatus::Optimal);
    let k = kkt_residuals(problem, sol);
    assert!(k.max() <= tol, "kkt residuals {k:?}");
}

/// Value of the Lagrangian dual function at the returned multipliers,
/// valid when stationarity holds.
fn dual_value(problem: &QpProblem, sol: &QpSolution) -> f64 {
    let x = &sol.x;
    let mut v = -0.5 * x.dot(&(&problem.quadratic * x)) - problem.eq_b.dot(&sol.eq_duals) - problem.ineq_b.dot(&sol.ineq_duals);
    for j in 0..x.len() {
        if sol.bound_duals[j] != 0.0 {
            v += problem.lower[j] * sol.bound_duals[j];
        }
        if sol.upper_duals[j] != 0.0 {
            v -= problem.upper[j] * sol.upper_duals[j];
        }
    }
    v
}

#[test]
fn active_lower_bound() {
    let p = QpProblem::new(1)
        .with_quadratic(dmatrix![2.0])
        .with_lower(dvector![1.0]);
    let s = solve_qp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-8);
    assert_abs_diff_eq!(s.x[0], 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.bound_duals[0], 2.0, epsilon = 1e-10);
}

#[test]
fn equality_constrained_least_norm() {
    let p = QpProblem::new(2)
        .with_quadratic(DMatrix::identity(2, 2))
        .with_eq(dmatrix![1.0, 1.0], dvector![2.0]);
    let s = solve_qp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-8);
    assert_abs_diff_eq!(s.x, dvector![1.0, 1.0], epsilon = 1e-10);
    assert_abs_diff_eq!(s.eq_duals[0], -1.0, epsilon = 1e-10);
    assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-10);
}

#[test]
fn lp_vertex() {
    let p = QpProblem::new(1)
        .with_linear(dvector![-1.0])
        .with_ineq(dmatrix![1.0], dvector![3.0])
        .with_lower(dvector![0.0]);
    let s = solve_lp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-9);
    assert_abs_diff_eq!(s.x[0], 3.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.ineq_duals[0], 1.0, epsilon = 1e-12);
}

#[test]
fn max_of_cut_intercepts() {
    // min eta s.t. eta >= 2, eta >= 5, written as -eta <= -2, -eta <= -5.
    let p = QpProblem::new(1)
        .with_linear(dvector![1.0])
        .with_ineq(dmatrix![-1.0; -1.0], dvector![-2.0, -5.0]);
    let s = solve_lp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-9);
    assert_abs_diff_eq!(s.objective, 5.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.ineq_duals, dvector![0.0, 1.0], epsilon = 1e-12);
}

#[test]
fn tight_cuts_in_two_variables() {
    // min eta s.t. eta >= q1 + q2 - 1, eta >= 2 q1, q >= (1, 0.5).
    let p = QpProblem::new(3)
        .with_linear(dvector![1.0, 0.0, 0.0])
        .with_ineq(dmatrix![-1.0, 1.0, 1.0; -1.0, 2.0, 0.0], dvector![1.0, 0.0])
        .with_lower(dvector![f64::NEG_INFINITY, 1.0, 0.5]);
    let s = solve_lp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-9);
    assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-12);
    assert_abs_diff_eq!(dual_value(&p, &s), s.objective, epsilon = 1e-10);
}

#[test]
fn duplicate_cuts_have_unique_value() {
    let p = QpProblem::new(1)
        .with_linear(dvector![1.0])
        .with_ineq(dmatrix![-1.0; -1.0; -1.0], dvector![-4.0, -4.0, -1.0]);
    let s = solve_lp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-9);
    assert_abs_diff_eq!(s.objective, 4.0, epsilon = 1e-12);
    assert_abs_diff_eq!(s.ineq_duals[0] + s.ineq_duals[1], 1.0, epsilon = 1e-12);
    assert_eq!(s.ineq_duals[2], 0.0);
}

#[test]
fn infeasible_and_unbounded_statuses() {
    let p = QpProblem::new(2)
        .with_linear(dvector![1.0, 1.0])
        .with_eq(dmatrix![1.0, 1.0], dvector![1.0])
        .with_lower(dvector![1.0, 1.0]);
    assert_eq!(solve_lp(&p, DEFAULT_TOL).unwrap().status, QpStatus::Infeasible);

    let p = QpProblem::new(2)
        .with_linear(dvector![-1.0, 0.0])
        .with_ineq(dmatrix![0.0, 1.0], dvector![1.0]);
    assert_eq!(solve_lp(&p, DEFAULT_TOL).unwrap().status, QpStatus::Unbounded);

    // Zero curvature along x1 with a decreasing linear term.
    let p = QpProblem::new(2)
        .with_quadratic(dmatrix![0.0, 0.0; 0.0, 1.0])
        .with_linear(dvector![-1.0, 0.0])
        .with_lower(dvector![0.0, 0.0]);
    assert_eq!(solve_qp(&p, DEFAULT_TOL).unwrap().status, QpStatus::Unbounded);

    let p = QpProblem::new(1)
        .with_quadratic(dmatrix![1.0])
        .with_ineq(dmatrix![1.0; -1.0], dvector![-1.0, -1.0]);
    assert_eq!(solve_qp(&p, DEFAULT_TOL).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn rejects_bad_input() {
    let p = QpProblem::new(2).with_quadratic(dmatrix![1.0, 0.0; 0.0, -1.0]);
    assert!(matches!(solve_qp(&p, 1e-8), Err(QpError::NotConvex(_))));
    let p = QpProblem::new(2).with_quadratic(dmatrix![1.0, 1.0; 0.0, 1.0]);
    assert!(matches!(solve_qp(&p, 1e-8), Err(QpError::NotConvex(_))));
    let p = QpProblem::new(2).with_eq(dmatrix![1.0], dvector![1.0]);
    assert!(matches!(solve_qp(&p, 1e-8), Err(QpError::Dimension(_))));
    assert!(solve_qp(&QpProblem::new(1), 0.0).is_err());
    let p = QpProblem::new(1).with_quadratic(dmatrix![1.0]);
    assert!(solve_lp(&p, 1e-8).is_err());
}

#[test]
fn redundant_equalities_and_fixed_variables() {
    let p = QpProblem::new(3)
        .with_linear(dvector![1.0, 2.0, 3.0])
        .with_eq(dmatrix![1.0, 1.0, 1.0; 2.0, 2.0, 2.0; 1.0, 0.0, 0.0], dvector![3.0, 6.0, 1.0])
        .with_lower(dvector![0.0, 0.0, 0.5])
        .with_upper(dvector![5.0, 5.0, 0.5]);
    let s = solve_lp(&p, DEFAULT_TOL).unwrap();
    check_kkt(&p, &s, 1e-9);
    assert_abs_diff_eq!(s.x, dvector![1.0, 1.5, 0.5], epsilon = 1e-10);
    assert_abs_diff_eq!(dual_value(&p, &s), s.objective, epsilon = 1e-9);

    let q = p.clone().with_quadratic(DMatrix::identity(3, 3));
    let s = solve_qp(&q, DEFAULT_TOL).unwrap();
    check_kkt(&q, &s, 1e-8);
    assert_abs_diff_eq!(dual_value(&q, &s), s.objective, epsilon = 1e-8);
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
    b.transpose() * b + DMatrix::identity(n, n) * ridge
}

/// Accelerated projected gradient on a box.
fn projected_gradient(q: &DMatrix<f64>, c: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> f64 {
    let n = c.len();
    let lip = q.symmetric_eigenvalues().amax().max(1e-12);
    let proj = |v: DVector<f64>| DVector::from_fn(n, |i, _| v[i].clamp(lo[i], hi[i]));
    let f = |x: &DVector<f64>| 0.5 * x.dot(&(q * x)) + c.dot(x);
    let mut x = proj(DVector::zeros(n));
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..200_000 {
        let g = q * &y + c;
        let xn = proj(&y - g / lip);
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let yn = &xn + (&xn - &x) * ((t - 1.0) / tn);
        let moved = (&xn - &x).amax();
        x = xn;
        y = yn;
        t = tn;
        if moved < 1e-13 {
            break;
        }
    }
    f(&x)
}

#[test]
fn matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let n = rng.gen_range(1..=20);
        let rank = if case % 3 == 0 { rng.gen_range(1..=n) } else { n };
        let ridge = if case % 3 == 0 { 0.0 } else { 0.05 };
        let q = random_psd(&mut rng, n, rank, ridge);
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
        let lo = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..0.0));
        let hi = DVector::from_fn(n, |i, _| lo[i] + rng.gen_range(0.1..3.0));
        let p = QpProblem::new(n)
            .with_quadratic(q.clone())
            .with_linear(c.clone())
            .with_lower(lo.clone())
            .with_upper(hi.clone());
        let s = solve_qp(&p, DEFAULT_TOL).unwrap();
        check_kkt(&p, &s, 1e-7);
        let oracle = projected_gradient(&q, &c, &lo, &hi);
        assert!(
            (s.objective - oracle).abs() <= 1e-6,
            "case {case}: solver {} oracle {oracle}",
            s.objective
        );
    }
}

#[test]
fn strong_duality_on_random_feasible_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..150 {
        let n = rng.gen_range(2..=12);
        let p_eq = rng.gen_range(0..n.min(4));
        let q_in = rng.gen_range(0..8);
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        let a_eq = DMatrix::from_fn(p_eq, n, |_, _| rng.gen_range(-1.0..1.0));
        let b_eq = &a_eq * &x0;
        let a_in = DMatrix::from_fn(q_in, n, |_, _| rng.gen_range(-1.0..1.0));
        let b_in = &a_in * &x0 + DVector::from_fn(q_in, |_, _| rng.gen_range(0.0..0.5));
        let linear = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
        let quadratic = if case % 2 == 0 {
            DMatrix::zeros(n, n)
        } else {
            let rank = rng.gen_range(1..=n);
            random_psd(&mut rng, n, rank, 0.0)
        };
        let p = QpProblem::new(n)
            .with_quadratic(quadratic)
            .with_linear(linear)
            .with_eq(a_eq, b_eq)
            .with_ineq(a_in, b_in)
            .with_lower(DVector::zeros(n))
            .with_upper(DVector::from_element(n, 1.0));
        let s = solve_qp(&p, DEFAULT_TOL).unwrap();
        check_kkt(&p, &s, 1e-7);
        assert!(
            (dual_value(&p, &s) - s.objective).abs() <= 1e-7,
            "case {case}: dual {} primal {}",
            dual_value(&p, &s),
            s.objective
        );
    }
}

/// Brute-force LP oracle for tiny problems: every vertex is the solution of
/// n linearly independent active constraints.
fn vertex_enumeration(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| a[(idx[i], j)]);
        let rhs = DVector::from_fn(n, |i, _| b[idx[i]]);
        if sub.determinant().abs() > 1e-10 {
            if let Some(x) = sub.lu().solve(&rhs) {
                if (a * &x - b).iter().all(|r| *r <= 1e-9) {
                    best = best.min(c.dot(&x));
                }
            }
        }
        // Next combination.
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for l in k + 1..n {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..300 {
        let n = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=6);
        let mut a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-2.0..2.0));
        let mut b = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..2.0));
        // Box rows keep every instance bounded.
        let mut rows: Vec<Vec<f64>> = (0..m).map(|i| a.row(i).iter().copied().collect()).collect();
        let mut rhs: Vec<f64> = b.iter().copied().collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push(e.clone());
            rhs.push(3.0);
            e[j] = -1.0;
            rows.push(e);
            rhs.push(3.0);
        }
        a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        b = DVector::from_vec(rhs);
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let p = QpProblem::new(n).with_linear(c.clone()).with_ineq(a.clone(), b.clone());
        let s = solve_lp(&p, DEFAULT_TOL).unwrap();
        let oracle = vertex_enumeration(&a, &b, &c);
        if oracle.is_infinite() {
            assert_eq!(s.status, QpStatus::Infeasible, "case {case}");
        } else {
            check_kkt(&p, &s, 1e-8);
            assert_abs_diff_eq!(s.objective, oracle, epsilon = 1e-8);
        }
    }
}

#[test]
fn warm_start_reuses_working_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10;
    let q = random_psd(&mut rng, n, 4, 0.0);
    let base = QpProblem::new(n)
        .with_quadratic(q)
        .with_lower(DVector::zeros(n))
        .with_upper(DVector::from_element(n, 1.0));
    let c1 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let p1 = base.clone().with_linear(c1.clone());
    let (s1, ws) = solve_qp_warm(&p1, DEFAULT_TOL, None).unwrap();
    check_kkt(&p1, &s1, 1e-8);
    let p2 = base.with_linear(c1 + DVector::from_element(n, 0.01));
    let cold = solve_qp(&p2, DEFAULT_TOL).unwrap();
    let (warm, _) = solve_qp_warm(&p2, DEFAULT_TOL, ws.as_ref()).unwrap();
    check_kkt(&p2, &warm, 1e-8);
    assert_abs_diff_eq!(warm.objective, cold.objective, epsilon = 1e-9);
    assert!(warm.iterations <= cold.iterations);
}

#[test]
fn repeated_solves_are_identical() {
    let p = QpProblem::new(3)
        .with_linear(dvector![-1.0, -1.0, -1.0])
        .with_ineq(dmatrix![1.0, 1.0, 0.0; 0.0, 1.0, 1.0; 1.0, 0.0, 1.0], dvector![1.0, 1.0, 1.0])
        .with_lower(DVector::zeros(3));
    let a = solve_lp(&p, DEFAULT_TOL).unwrap();
    let b = solve_lp(&p, DEFAULT_TOL).unwrap();
    assert_eq!(a, b);
    check_kkt(&p, &a, 1e-9);
}
