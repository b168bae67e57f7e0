//! Comparisons run on wireless instances: aggregate-first against
//! evaluate-first risk, and AVaR of the aggregated loss against MAVaR and
//! scalarized VMAVaR at a fixed decision.

use serde::Serialize;
use thiserror::Error;

use crate::multivariate::{mavar_detailed, vmavar_scalarized, MultivariateError};
use crate::risk::{evaluate_risk, RiskError, RiskSpec};
use crate::systemic::{AggregationWeights, SystemicError, SystemicMeasure, VectorDistribution};
use crate::two_stage::{
    enumerate_with, solve_two_stage_cached, OutcomeCache, ScenarioOutcome, SecondStageOracle, TwoStageError,
    TwoStageInstance, TwoStageOptions,
};
use crate::wireless::{NodeLayout, WirelessError, WirelessInstance};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment input: {0}")]
    Input(String),
    #[error(transparent)]
    TwoStage(#[from] TwoStageError),
    #[error(transparent)]
    Systemic(#[from] SystemicError),
    #[error(transparent)]
    Multivariate(#[from] MultivariateError),
    #[error(transparent)]
    Wireless(#[from] WirelessError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Deviation weight of both evaluate-first outer measures.
pub const DEFAULT_KAPPA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: String,
    pub z: Vec<bool>,
    pub risk_value: f64,
    /// Delivered proportion per scenario at `z`.
    pub proportions: Vec<f64>,
}

impl MethodOutcome {
    pub fn mean_proportion(&self) -> f64 {
        self.proportions.iter().sum::<f64>() / self.proportions.len().max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationComparison {
    pub alpha: f64,
    pub aggregate_first: MethodOutcome,
    pub evaluate_first: Vec<MethodOutcome>,
}

/// The evaluate-first measures at tail level `alpha`: AVaR of every robot's
/// loss, combined by a mean-AVaR mix or a mean-upper-semideviation.
pub fn evaluate_first_measures(alpha: f64, weights: &AggregationWeights, kappa: f64) -> Vec<(String, SystemicMeasure)> {
    let component = RiskSpec::avar(alpha);
    vec![
        (
            "mean_avar".to_string(),
            SystemicMeasure::mean_avar(component, weights.clone(), kappa, alpha),
        ),
        (
            "mean_semideviation".to_string(),
            SystemicMeasure::mean_semideviation(component, weights.clone(), kappa),
        ),
    ]
}

fn robot_weights(instance: &WirelessInstance) -> Result<AggregationWeights, ExperimentError> {
    Ok(AggregationWeights::new(instance.config.weights())?)
}

/// Weighted average of the robots' copies of the delivered proportion.
pub fn delivered_proportion(layout: &NodeLayout, weights: &[f64], outcome: &ScenarioOutcome) -> f64 {
    outcome
        .solution
        .iter()
        .zip(weights)
        .map(|(v, w)| w * v[layout.proportion()])
        .sum()
}

/// Per-scenario robot losses as a random vector.
pub fn loss_vectors(instance: &TwoStageInstance, outcomes: &[ScenarioOutcome]) -> Result<VectorDistribution, SystemicError> {
    VectorDistribution::new(
        outcomes.iter().map(|o| o.node_losses.clone()).collect(),
        instance.scenarios.iter().map(|s| s.probability).collect(),
    )
}

fn outcome_for(
    wireless: &WirelessInstance,
    instance: &TwoStageInstance,
    oracle: &dyn SecondStageOracle,
    cache: &OutcomeCache,
    method: &str,
    z: Vec<bool>,
    risk_value: f64,
) -> Result<MethodOutcome, ExperimentError> {
    let layout = wireless.layout();
    let weights = wireless.config.weights();
    let outcomes = cache.outcomes(instance, oracle, &z)?;
    Ok(MethodOutcome {
        method: method.to_string(),
        proportions: outcomes.iter().map(|o| delivered_proportion(&layout, &weights, o)).collect(),
        z,
        risk_value,
    })
}

/// For every `alpha`: the aggregate-first optimum of `AVaR_alpha` of the
/// weighted loss (decomposition method) and the evaluate-first optima of the
/// systemic measures from [`evaluate_first_measures`] (enumeration). All
/// methods share `cache`, so each selection is solved once.
pub fn compare_aggregation(
    wireless: &WirelessInstance,
    alphas: &[f64],
    kappa: f64,
    oracle: &dyn SecondStageOracle,
    options: &TwoStageOptions,
    cache: &OutcomeCache,
) -> Result<Vec<AggregationComparison>, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::Input("no tail levels given".into()));
    }
    let weights = robot_weights(wireless)?;
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let instance = wireless.to_two_stage(RiskSpec::avar(alpha))?;
        let agg = solve_two_stage_cached(&instance, oracle, options, cache)?;
        let aggregate_first = outcome_for(wireless, &instance, oracle, cache, "aggregate_first", agg.z, agg.risk_value)?;
        let mut evaluate_first = Vec::new();
        for (name, measure) in evaluate_first_measures(alpha, &weights, kappa) {
            measure.outer().validate()?;
            let best = enumerate_with(&instance, oracle, cache, |_, outcomes| {
                let x = loss_vectors(&instance, outcomes).map_err(|e| TwoStageError::Input(e.to_string()))?;
                measure.evaluate(&x).map_err(|e| TwoStageError::Input(e.to_string()))
            })?;
            evaluate_first.push(outcome_for(wireless, &instance, oracle, cache, &name, best.z, best.risk_value)?);
        }
        rows.push(AggregationComparison {
            alpha,
            aggregate_first,
            evaluate_first,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultivariateRow {
    pub alpha: f64,
    pub avar: f64,
    /// `None` when the conditioning event has zero probability.
    pub mavar: Option<f64>,
    pub mavar_event_probability: f64,
    pub vmavar: f64,
    pub vmavar_point: Vec<f64>,
}

impl MultivariateRow {
    /// AVaR strictly below VMAVaR strictly below MAVaR.
    pub fn strictly_ordered(&self) -> bool {
        self.mavar.is_some_and(|m| self.avar < self.vmavar && self.vmavar < m)
    }
}

/// The two loss sources per scenario at a fixed decision: the weighted
/// undelivered information `sum_i w_i y_i` and the undelivered proportion
/// `1 - x`. Their combination with the loss weights is the aggregated loss.
pub fn loss_sources(wireless: &WirelessInstance, outcomes: &[ScenarioOutcome]) -> Result<VectorDistribution, SystemicError> {
    let layout = wireless.layout();
    let weights = wireless.config.weights();
    let rows = outcomes
        .iter()
        .map(|o| {
            let y: f64 = o.solution.iter().zip(&weights).map(|(v, w)| w * v[NodeLayout::Y]).sum();
            vec![y, 1.0 - delivered_proportion(&layout, &weights, o)]
        })
        .collect();
    let probs = vec![1.0 / outcomes.len() as f64; outcomes.len()];
    VectorDistribution::new(rows, probs)
}

/// AVaR, MAVaR at level `1 - alpha` and scalarized VMAVaR with `p = alpha`
/// of the loss sources at selection `z`, per `alpha`.
pub fn compare_multivariate(
    wireless: &WirelessInstance,
    z: &[bool],
    alphas: &[f64],
    oracle: &dyn SecondStageOracle,
    cache: &OutcomeCache,
) -> Result<Vec<MultivariateRow>, ExperimentError> {
    if alphas.is_empty() {
        return Err(ExperimentError::Input("no tail levels given".into()));
    }
    let instance = wireless.to_two_stage(RiskSpec::expectation())?;
    let outcomes = cache.outcomes(&instance, oracle, z)?;
    let v = loss_sources(wireless, &outcomes)?;
    let c = AggregationWeights::new(wireless.config.loss_weights.to_vec())?;
    let total = v.scalarize(c.as_slice())?;
    alphas
        .iter()
        .map(|&alpha| {
            let avar = evaluate_risk(&RiskSpec::avar(alpha), &total)?;
            let (mavar, mavar_event_probability) = match mavar_detailed(&v, 1.0 - alpha, &c) {
                Ok(r) => (Some(r.value), r.event_probability),
                Err(MultivariateError::DegenerateEvent) => (None, 0.0),
                Err(e) => return Err(e.into()),
            };
            let vm = vmavar_scalarized(&v, alpha, &c)?;
            Ok(MultivariateRow {
                alpha,
                avar,
                mavar,
                mavar_event_probability,
                vmavar: vm.value,
                vmavar_point: vm.point,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_stage::CentralizedOracle;
    use crate::wireless::{generate_instance, WirelessConfig};

    fn small(num_robots: usize, num_scenarios: usize) -> WirelessInstance {
        let cfg = WirelessConfig {
            num_robots,
            num_scenarios,
            map_upper: [0.9, 0.9],
            candidates: vec![[0.2, 0.1], [0.7, 0.1], [0.8, 0.5], [0.5, 0.05]],
            source_mean: [0.2, 0.8],
            ..WirelessConfig::desk()
        };
        generate_instance(&cfg, 5).unwrap()
    }

    #[test]
    fn aggregate_first_is_never_worse() {
        let inst = small(6, 12);
        let cache = OutcomeCache::new();
        let rows = compare_aggregation(
            &inst,
            &[0.1, 0.3],
            DEFAULT_KAPPA,
            &CentralizedOracle::default(),
            &TwoStageOptions::default(),
            &cache,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert_eq!(row.evaluate_first.len(), 2);
            assert_eq!(row.aggregate_first.proportions.len(), 12);
            for e in &row.evaluate_first {
                assert!(row.aggregate_first.risk_value <= e.risk_value + 1e-9, "{row:?}");
            }
            for p in &row.aggregate_first.proportions {
                assert!((-1e-9..=1.0 + 1e-9).contains(p));
            }
        }
    }

    #[test]
    fn single_robot_methods_coincide() {
        let cfg = WirelessConfig {
            num_robots: 1,
            num_scenarios: 6,
            map_lower: [0.4, 0.0],
            map_upper: [0.6, 0.2],
            candidates: vec![[0.5, 0.1], [0.9, 0.1], [1.5, 1.5], [0.5, 0.5]],
            ..WirelessConfig::desk()
        };
        let inst = generate_instance(&cfg, 3).unwrap();
        let rows = compare_aggregation(
            &inst,
            &[0.2],
            DEFAULT_KAPPA,
            &CentralizedOracle::default(),
            &TwoStageOptions::default(),
            &OutcomeCache::new(),
        )
        .unwrap();
        for e in &rows[0].evaluate_first {
            assert!((e.risk_value - rows[0].aggregate_first.risk_value).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_kappa_with_expectation_components_is_the_weighted_mean() {
        let inst = small(6, 8);
        let ts = inst.to_two_stage(RiskSpec::expectation()).unwrap();
        let cache = OutcomeCache::new();
        let outcomes = cache.outcomes(&ts, &CentralizedOracle::default(), &[true, false, true, false]).unwrap();
        let x = loss_vectors(&ts, &outcomes).unwrap();
        let w = AggregationWeights::new(inst.config.weights()).unwrap();
        let aggregate: f64 = outcomes.iter().map(|o| o.value).sum::<f64>() / outcomes.len() as f64;
        for m in [
            SystemicMeasure::mean_avar(RiskSpec::expectation(), w.clone(), 0.0, 0.2),
            SystemicMeasure::mean_semideviation(RiskSpec::expectation(), w.clone(), 0.0),
        ] {
            assert!((m.evaluate(&x).unwrap() - aggregate).abs() < 1e-12);
        }
    }

    #[test]
    fn multivariate_rows_bound_avar() {
        let inst = small(6, 12);
        let cache = OutcomeCache::new();
        let oracle = CentralizedOracle::default();
        let z = [true, false, true, false];
        let rows = compare_multivariate(&inst, &z, &[0.1, 0.2, 0.3], &oracle, &cache).unwrap();
        let ts = inst.to_two_stage(RiskSpec::avar(0.2)).unwrap();
        let outcomes = cache.outcomes(&ts, &oracle, &z).unwrap();
        let total = crate::risk::ScalarDistribution::uniform(outcomes.iter().map(|o| o.value).collect()).unwrap();
        for row in &rows {
            // the two loss sources recombine into the scenario values
            let direct = evaluate_risk(&RiskSpec::avar(row.alpha), &total).unwrap();
            assert!((row.avar - direct).abs() < 1e-9);
            assert!(row.avar <= row.vmavar + 1e-9);
            assert!(row.mavar.is_some() && row.mavar_event_probability > 0.0 && row.mavar_event_probability <= 1.0);
        }
    }

    #[test]
    fn empty_level_list_is_rejected() {
        let inst = small(6, 2);
        let err = compare_multivariate(&inst, &[true, false, false, false], &[], &CentralizedOracle::default(), &OutcomeCache::new());
        assert!(matches!(err, Err(ExperimentError::Input(_))));
    }
}
