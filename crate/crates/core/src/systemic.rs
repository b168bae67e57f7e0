//! Risk measures for random vectors.
//!
//! Two constructions satisfy convexity, monotonicity, positive homogeneity
//! and translation equivariance `rho[X + a 1] = rho[X] + a rho[1]`:
//!
//! * [`systemic_risk_linear`]: a scalar measure applied to the pointwise
//!   maximum of finitely many scalarizations `max_{c in S} c'X`;
//! * [`systemic_risk_aggregated`]: evaluate each component with its own
//!   measure, then measure the resulting profile as a random variable on the
//!   component index set with mass function `c`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{
    evaluate_risk, normalize_probs, RiskError, RiskSpec, ScalarDistribution, PROB_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemicError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// `S x m` realizations of a random vector with scenario probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVectorDistribution")]
pub struct VectorDistribution {
    realizations: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawVectorDistribution {
    realizations: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl TryFrom<RawVectorDistribution> for VectorDistribution {
    type Error = SystemicError;

    fn try_from(raw: RawVectorDistribution) -> Result<Self, Self::Error> {
        Self::new(raw.realizations, raw.probs)
    }
}

impl VectorDistribution {
    pub fn new(realizations: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self, SystemicError> {
        if realizations.is_empty() {
            return Err(SystemicError::Input("no scenarios".into()));
        }
        let m = realizations[0].len();
        if m == 0 {
            return Err(SystemicError::Input("zero-dimensional vector".into()));
        }
        if realizations.iter().any(|r| r.len() != m) {
            return Err(SystemicError::Input("ragged realization matrix".into()));
        }
        if realizations.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SystemicError::Input("non-finite realization".into()));
        }
        if probs.len() != realizations.len() {
            return Err(SystemicError::Input(format!(
                "{} scenarios but {} probabilities",
                realizations.len(),
                probs.len()
            )));
        }
        let probs = normalize_probs(probs)?;
        Ok(Self {
            realizations,
            probs,
        })
    }

    pub fn uniform(realizations: Vec<Vec<f64>>) -> Result<Self, SystemicError> {
        let n = realizations.len().max(1);
        Self::new(realizations, vec![1.0 / n as f64; n])
    }

    pub fn num_scenarios(&self) -> usize {
        self.realizations.len()
    }

    pub fn dim(&self) -> usize {
        self.realizations[0].len()
    }

    pub fn realizations(&self) -> &[Vec<f64>] {
        &self.realizations
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Marginal distribution of component `i`.
    pub fn component(&self, i: usize) -> ScalarDistribution {
        let values = self.realizations.iter().map(|r| r[i]).collect();
        ScalarDistribution::new(values, self.probs.clone())
            .expect("validated probabilities")
    }

    /// `c'X` as a scalar random variable.
    pub fn scalarize(&self, c: &[f64]) -> Result<ScalarDistribution, SystemicError> {
        if c.len() != self.dim() {
            return Err(SystemicError::Input(format!(
                "weight dimension {} != vector dimension {}",
                c.len(),
                self.dim()
            )));
        }
        let values = self
            .realizations
            .iter()
            .map(|r| crate::risk::dot(c, r))
            .collect();
        Ok(ScalarDistribution::new(values, self.probs.clone())?)
    }

    /// Same probabilities, realizations mapped pointwise.
    pub fn map(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self, SystemicError> {
        Self::new(self.realizations.iter().map(|r| f(r)).collect(), self.probs.clone())
    }
}

fn check_simplex(c: &[f64]) -> Result<(), SystemicError> {
    if c.is_empty() {
        return Err(SystemicError::Input("empty weight vector".into()));
    }
    if c.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(SystemicError::Input(format!("weights must be nonnegative: {c:?}")));
    }
    let total: f64 = c.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(SystemicError::Input(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// A finite nonempty subset of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ScalarizationSet {
    vectors: Vec<Vec<f64>>,
}

impl ScalarizationSet {
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self, SystemicError> {
        if vectors.is_empty() {
            return Err(SystemicError::Input("empty scalarization set".into()));
        }
        let m = vectors[0].len();
        for c in &vectors {
            if c.len() != m {
                return Err(SystemicError::Input("scalarization vectors differ in length".into()));
            }
            check_simplex(c)?;
        }
        Ok(Self { vectors })
    }

    /// The unit vectors `e^1, ..., e^m`; `rho_S` then measures the worst component.
    pub fn coordinate(m: usize) -> Self {
        let vectors = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { vectors }
    }

    pub fn singleton(c: AggregationWeights) -> Self {
        Self {
            vectors: vec![c.0],
        }
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

impl TryFrom<Vec<Vec<f64>>> for ScalarizationSet {
    type Error = SystemicError;

    fn try_from(v: Vec<Vec<f64>>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ScalarizationSet> for Vec<Vec<f64>> {
    fn from(s: ScalarizationSet) -> Self {
        s.vectors
    }
}

/// A probability mass function on the component indices `{1, ..., m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AggregationWeights(Vec<f64>);

impl AggregationWeights {
    pub fn new(c: Vec<f64>) -> Result<Self, SystemicError> {
        check_simplex(&c)?;
        Ok(Self(c))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for AggregationWeights {
    type Error = SystemicError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<AggregationWeights> for Vec<f64> {
    fn from(w: AggregationWeights) -> Self {
        w.0
    }
}

/// `X_S(omega) = max_{c in S} c'X(omega)`.
pub fn scalarize_max(
    x: &VectorDistribution,
    set: &ScalarizationSet,
) -> Result<ScalarDistribution, SystemicError> {
    if set.dim() != x.dim() {
        return Err(SystemicError::Input(format!(
            "scalarization dimension {} != vector dimension {}",
            set.dim(),
            x.dim()
        )));
    }
    let values = x
        .realizations
        .iter()
        .map(|r| {
            set.vectors
                .iter()
                .map(|c| crate::risk::dot(c, r))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(ScalarDistribution::new(values, x.probs.clone())?)
}

/// `rho_S[X] = rho[X_S]`.
pub fn systemic_risk_linear(
    spec: &RiskSpec,
    x: &VectorDistribution,
    set: &ScalarizationSet,
) -> Result<f64, SystemicError> {
    Ok(evaluate_risk(spec, &scalarize_max(x, set)?)?)
}

/// The random variable `X_R(i) = rho_i[X_i]` on `({1..m}, c)`.
pub fn individual_risk_profile(
    specs: &[RiskSpec],
    x: &VectorDistribution,
    c: &AggregationWeights,
) -> Result<ScalarDistribution, SystemicError> {
    let m = x.dim();
    if specs.len() != m || c.dim() != m {
        return Err(SystemicError::Input(format!(
            "{} component measures and {} weights for a {m}-dimensional vector",
            specs.len(),
            c.dim()
        )));
    }
    let values = specs
        .iter()
        .enumerate()
        .map(|(i, spec)| evaluate_risk(spec, &x.component(i)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScalarDistribution::new(values, c.0.clone())?)
}

/// `rho_s[X] = rho_0[X_R]`.
pub fn systemic_risk_aggregated(
    rho0: &RiskSpec,
    specs: &[RiskSpec],
    c: &AggregationWeights,
    x: &VectorDistribution,
) -> Result<f64, SystemicError> {
    if !rho0.kind.is_coherent() {
        return Err(RiskError::Unsupported(rho0.kind).into());
    }
    Ok(evaluate_risk(rho0, &individual_risk_profile(specs, x, c)?)?)
}

/// Either construction behind one evaluation interface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "construction", rename_all = "snake_case")]
pub enum SystemicMeasure {
    Linear {
        spec: RiskSpec,
        set: ScalarizationSet,
    },
    Aggregated {
        rho0: RiskSpec,
        components: Vec<RiskSpec>,
        weights: AggregationWeights,
    },
}

impl SystemicMeasure {
    /// Example A: mean-AVaR aggregation of identically measured components.
    pub fn mean_avar(component: RiskSpec, weights: AggregationWeights, kappa: f64, alpha: f64) -> Self {
        let m = weights.dim();
        Self::Aggregated {
            rho0: RiskSpec::mean_avar_mix(kappa, alpha),
            components: vec![component; m],
            weights,
        }
    }

    /// Example B: first-order mean-upper-semideviation aggregation.
    pub fn mean_semideviation(component: RiskSpec, weights: AggregationWeights, kappa: f64) -> Self {
        let m = weights.dim();
        Self::Aggregated {
            rho0: RiskSpec::mean_semideviation(1.0, kappa),
            components: vec![component; m],
            weights,
        }
    }

    pub fn evaluate(&self, x: &VectorDistribution) -> Result<f64, SystemicError> {
        match self {
            Self::Linear { spec, set } => systemic_risk_linear(spec, x, set),
            Self::Aggregated {
                rho0,
                components,
                weights,
            } => systemic_risk_aggregated(rho0, components, weights, x),
        }
    }

    /// The scalar random variable the outer measure is applied to.
    pub fn scalarized(&self, x: &VectorDistribution) -> Result<ScalarDistribution, SystemicError> {
        match self {
            Self::Linear { set, .. } => scalarize_max(x, set),
            Self::Aggregated {
                components,
                weights,
                ..
            } => individual_risk_profile(components, x, weights),
        }
    }

    pub fn outer(&self) -> &RiskSpec {
        match self {
            Self::Linear { spec, .. } => spec,
            Self::Aggregated { rho0, .. } => rho0,
        }
    }

    /// `rho[1]`, the value on the constant all-ones vector.
    pub fn unit_value(&self, m: usize) -> Result<f64, SystemicError> {
        let ones = VectorDistribution::new(vec![vec![1.0; m]], vec![1.0])?;
        self.evaluate(&ones)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example_x() -> VectorDistribution {
        VectorDistribution::new(vec![vec![1.0, 3.0], vec![3.0, 1.0]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn coordinate_max() {
        let xs = scalarize_max(&example_x(), &ScalarizationSet::coordinate(2)).unwrap();
        assert_eq!(xs.values(), &[3.0, 3.0]);
        assert_eq!(xs.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn singleton_dot_products() {
        let set = ScalarizationSet::new(vec![vec![0.5, 0.5]]).unwrap();
        let xs = scalarize_max(&example_x(), &set).unwrap();
        assert_eq!(xs.values(), &[2.0, 2.0]);
    }

    #[test]
    fn constant_vector_scalarizes_to_constant() {
        let x = VectorDistribution::new(vec![vec![2.0, -1.0, 4.0]; 3], vec![0.2, 0.3, 0.5]).unwrap();
        let set = ScalarizationSet::new(vec![vec![0.2, 0.3, 0.5]]).unwrap();
        let xs = scalarize_max(&x, &set).unwrap();
        for v in xs.values() {
            assert_abs_diff_eq!(*v, 0.4 - 0.3 + 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn linear_measure_examples() {
        let set = ScalarizationSet::coordinate(2);
        let x = example_x();
        assert_abs_diff_eq!(
            systemic_risk_linear(&RiskSpec::expectation(), &x, &set).unwrap(),
            3.0
        );
        assert_abs_diff_eq!(systemic_risk_linear(&RiskSpec::avar(0.5), &x, &set).unwrap(), 3.0);
        let shifted = x.map(|r| r.iter().map(|v| v + 1.25).collect()).unwrap();
        for spec in [RiskSpec::avar(0.3), RiskSpec::mean_semideviation(2.0, 0.4)] {
            let a = systemic_risk_linear(&spec, &x, &set).unwrap();
            let b = systemic_risk_linear(&spec, &shifted, &set).unwrap();
            assert_abs_diff_eq!(b - a, 1.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let set = ScalarizationSet::coordinate(3);
        assert!(matches!(
            scalarize_max(&example_x(), &set),
            Err(SystemicError::Input(_))
        ));
        assert!(matches!(
            individual_risk_profile(&[RiskSpec::expectation()], &example_x(), &AggregationWeights::uniform(2)),
            Err(SystemicError::Input(_))
        ));
    }

    #[test]
    fn profile_examples() {
        let specs = [RiskSpec::expectation(); 2];
        let p = individual_risk_profile(&specs, &example_x(), &AggregationWeights::uniform(2)).unwrap();
        assert_eq!(p.values(), &[2.0, 2.0]);
        assert_eq!(p.probs(), &[0.5, 0.5]);

        let x1 = VectorDistribution::new(vec![vec![4.0], vec![0.0]], vec![0.25, 0.75]).unwrap();
        let p1 = individual_risk_profile(&[RiskSpec::avar(0.25)], &x1, &AggregationWeights::uniform(1)).unwrap();
        assert_eq!(p1.values(), &[4.0]);
        assert_eq!(p1.probs(), &[1.0]);

        let xc = VectorDistribution::new(vec![vec![1.0, 3.0]], vec![1.0]).unwrap();
        let pc = individual_risk_profile(&specs, &xc, &AggregationWeights::uniform(2)).unwrap();
        assert_eq!(pc.values(), &[1.0, 3.0]);
    }

    #[test]
    fn aggregated_examples() {
        // component risks (1, 3) under expectation
        let x = VectorDistribution::new(vec![vec![1.0, 3.0], vec![1.0, 3.0]], vec![0.5, 0.5]).unwrap();
        let c = AggregationWeights::uniform(2);
        let specs = [RiskSpec::expectation(); 2];
        let a = systemic_risk_aggregated(&RiskSpec::mean_avar_mix(1.0, 0.5), &specs, &c, &x).unwrap();
        assert_abs_diff_eq!(a, 3.0, epsilon = 1e-12);
        let b = systemic_risk_aggregated(&RiskSpec::mean_avar_mix(0.0, 0.5), &specs, &c, &x).unwrap();
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-12);
        let d = systemic_risk_aggregated(&RiskSpec::mean_semideviation(1.0, 1.0), &specs, &c, &x).unwrap();
        assert_abs_diff_eq!(d, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn example_a_matches_explicit_formula() {
        let x = VectorDistribution::new(
            vec![vec![1.0, 5.0, -2.0], vec![4.0, 0.0, 3.0], vec![2.0, 2.0, 9.0]],
            vec![0.2, 0.5, 0.3],
        )
        .unwrap();
        let c = AggregationWeights::new(vec![0.5, 0.3, 0.2]).unwrap();
        let comp = RiskSpec::avar(0.4);
        let (kappa, alpha) = (0.6, 0.35);
        let got = SystemicMeasure::mean_avar(comp, c.clone(), kappa, alpha)
            .evaluate(&x)
            .unwrap();
        let r: Vec<f64> = (0..3).map(|i| evaluate_risk(&comp, &x.component(i)).unwrap()).collect();
        let mean: f64 = r.iter().zip(c.as_slice()).map(|(a, b)| a * b).sum();
        // inf over eta restricted to the individual risks
        let tail = r
            .iter()
            .map(|&eta| {
                eta + r
                    .iter()
                    .zip(c.as_slice())
                    .map(|(ri, ci)| ci * (ri - eta).max(0.0))
                    .sum::<f64>()
                    / alpha
            })
            .fold(f64::INFINITY, f64::min);
        assert_abs_diff_eq!(got, (1.0 - kappa) * mean + kappa * tail, epsilon = 1e-12);
    }

    #[test]
    fn unit_value_is_one() {
        let c = AggregationWeights::uniform(3);
        for m in [
            SystemicMeasure::mean_avar(RiskSpec::avar(0.2), c.clone(), 0.5, 0.1),
            SystemicMeasure::mean_semideviation(RiskSpec::mean_semideviation(1.0, 0.3), c.clone(), 0.5),
            SystemicMeasure::Linear {
                spec: RiskSpec::higher_order(0.3, 2.0),
                set: ScalarizationSet::coordinate(3),
            },
        ] {
            assert_abs_diff_eq!(m.unit_value(3).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn json_arrays_are_validated() {
        let ok: ScalarizationSet = serde_json::from_str("[[0.5,0.5],[1,0]]").unwrap();
        assert_eq!(ok.vectors().len(), 2);
        assert!(serde_json::from_str::<ScalarizationSet>("[[0.5,0.6]]").is_err());
        assert!(serde_json::from_str::<ScalarizationSet>("[]").is_err());
        assert!(serde_json::from_str::<AggregationWeights>("[0.25,0.75]").is_ok());
        assert!(serde_json::from_str::<AggregationWeights>("[-0.25,1.25]").is_err());
        assert_eq!(
            serde_json::to_string(&AggregationWeights::uniform(2)).unwrap(),
            "[0.5,0.5]"
        );
    }
}
