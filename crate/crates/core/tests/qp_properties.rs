use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
mod common;

use common::projected_gradient;
use sysrisk::qp::{kkt_residuals, solve_qp, QpProblem};

fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>, Option<f64>)> {
    (1usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                0..=n,
                prop::collection::vec(-1.0..1.0f64, n * n),
                prop::collection::vec(-2.0..2.0f64, n),
                prop::collection::vec(-1.0..0.0f64, n),
                prop::collection::vec(0.1..2.0f64, n),
                prop::option::of(0.0..1.0f64),
            )
        })
        .prop_map(|(n, rank, b, c, lo, width, frac)| {
            let b = DMatrix::from_row_slice(n, n, &b).rows(0, rank).into_owned();
            let h = b.transpose() * &b;
            let lo = DVector::from_vec(lo);
            let hi = &lo + DVector::from_vec(width);
            let total = frac.map(|f| lo.sum() + f * (hi.sum() - lo.sum()));
            (h, DVector::from_vec(c), lo, hi, total)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn active_set_matches_projected_gradient((h, c, lo, hi, total) in instance()) {
        let n = c.len();
        let mut p = QpProblem::new(n)
            .with_quadratic(h.clone())
            .with_linear(c.clone())
            .with_lower(lo.clone())
            .with_upper(hi.clone());
        if let Some(t) = total {
            p = p.with_eq(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, t));
        }
        let sol = solve_qp(&p, 1e-10).unwrap();
        prop_assert!(sol.is_optimal());
        prop_assert!(kkt_residuals(&p, &sol).max() <= 1e-7);
        let oracle = projected_gradient(&h, &c, &lo, &hi, total);
        prop_assert!((sol.objective - oracle).abs() <= 1e-6, "{} vs {oracle}", sol.objective);
    }
}
