mod common;

use common::{brute_frontier, brute_vmavar, cdf, leq, vmavar_objective};
use proptest::prelude::*;
use sysrisk::multivariate::{mavar_detailed, p_efficient_points, vmavar_scalarized, MultivariateError};
use sysrisk::risk::{evaluate_risk, RiskSpec};
use sysrisk::systemic::{AggregationWeights, VectorDistribution};

fn normalize(w: &[f64]) -> Vec<f64> {
    let t: f64 = w.iter().sum();
    w.iter().map(|x| x / t).collect()
}

/// Small integer-valued atoms, so ties and shared marginals are common.
fn instance() -> impl Strategy<Value = (VectorDistribution, Vec<f64>)> {
    (1usize..=3, 1usize..=6)
        .prop_flat_map(|(m, s)| {
            (
                prop::collection::vec(prop::collection::vec(0i32..5, m), s),
                prop::collection::vec(1u32..5, s),
                prop::collection::vec(0.05..1.0f64, m),
            )
        })
        .prop_map(|(r, p, c)| {
            let rows = r.into_iter().map(|v| v.into_iter().map(f64::from).collect()).collect();
            let p: Vec<f64> = p.into_iter().map(f64::from).collect();
            (VectorDistribution::new(rows, normalize(&p)).unwrap(), normalize(&c))
        })
}

fn level() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.1), Just(0.2), Just(0.3), 0.05..0.95f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn frontier_matches_brute_force((x, _) in instance(), p in level()) {
        let f = p_efficient_points(&x, p).unwrap();
        prop_assert!(!f.points.is_empty());
        prop_assert_eq!(&f.points, &brute_frontier(&x, p));
        for (i, a) in f.points.iter().enumerate() {
            prop_assert!(cdf(&x, a) >= p - 1e-12);
            for b in &f.points[i + 1..] {
                prop_assert!(!leq(a, b) && !leq(b, a));
            }
        }
    }

    #[test]
    fn vmavar_matches_grid_search((x, c) in instance(), p in level()) {
        let r = vmavar_scalarized(&x, p, &AggregationWeights::new(c.clone()).unwrap()).unwrap();
        let best = brute_vmavar(&x, &c, p);
        prop_assert!((r.value - best).abs() <= 1e-9 * (1.0 + best.abs()));
        prop_assert!((r.frontier_value - r.value).abs() <= 1e-9 * (1.0 + best.abs()));
        prop_assert!((vmavar_objective(&x, &c, p, &r.point) - r.value).abs() <= 1e-9 * (1.0 + best.abs()));
    }

    #[test]
    fn avar_bounds_vmavar((x, c) in instance(), p in level()) {
        let r = vmavar_scalarized(&x, p, &AggregationWeights::new(c.clone()).unwrap()).unwrap();
        let avar = evaluate_risk(&RiskSpec::avar(p), &x.scalarize(&c).unwrap()).unwrap();
        prop_assert!(avar <= r.value + 1e-9);
    }

    #[test]
    fn mavar_is_the_conditional_mean_on_the_level_set((x, c) in instance(), p in level()) {
        let w = AggregationWeights::new(c.clone()).unwrap();
        let frontier = brute_frontier(&x, p);
        let (mut mass, mut acc) = (0.0, 0.0);
        for (r, pr) in x.realizations().iter().zip(x.probs()) {
            if frontier.iter().any(|v| leq(v, r)) {
                mass += pr;
                acc += pr * r.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        match mavar_detailed(&x, p, &w) {
            Ok(m) => {
                prop_assert!((m.event_probability - mass).abs() <= 1e-12);
                prop_assert!((m.value - acc / mass).abs() <= 1e-9);
            }
            Err(MultivariateError::DegenerateEvent) => prop_assert!(mass <= 1e-12),
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}
