//! Scalar coherent risk measures on finite scenario distributions.
//!
//! Every measure is evaluated in closed form (expectation, AVaR, mean
//! semideviation) or by a one-dimensional convex minimization (higher-order
//! tail measures). Each coherent measure also exposes an element of its dual
//! set attaining the supremum in `rho[Z] = sup <xi, Z>`; these elements are the
//! risk cuts used by the two-stage decomposition.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the total probability mass of a distribution.
pub const PROB_TOL: f64 = 1e-12;

const BISECT_MAX_ITER: usize = 2200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("invalid risk parameter: {0}")]
    Parameter(String),
    #[error("invalid distribution: {0}")]
    Input(String),
    #[error("{0} has no dual representation")]
    Unsupported(RiskKind),
}

/// A finite random loss: `values[s]` occurs with probability `probs[s]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarDistribution {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl ScalarDistribution {
    /// Validates and (within [`PROB_TOL`]) renormalizes the probabilities.
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::Input("empty distribution".into()));
        }
        if values.len() != probs.len() {
            return Err(RiskError::Input(format!(
                "{} values but {} probabilities",
                values.len(),
                probs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(RiskError::Input(format!("non-finite value {v}")));
        }
        let probs = normalize_probs(probs)?;
        Ok(Self { values, probs })
    }

    /// Equally likely scenarios.
    pub fn uniform(values: Vec<f64>) -> Result<Self, RiskError> {
        let n = values.len().max(1);
        Self::new(values, vec![1.0 / n as f64; n])
    }

    pub fn constant(value: f64) -> Self {
        Self {
            values: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        dot(&self.probs, &self.values)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same probabilities, values replaced.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, RiskError> {
        if values.len() != self.values.len() {
            return Err(RiskError::Input("scenario count mismatch".into()));
        }
        Ok(Self {
            values,
            probs: self.probs.clone(),
        })
    }

    /// `sum_s p_s xi_s z_s`, the pairing used throughout the crate.
    pub fn pairing(&self, xi: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(xi)
            .zip(&self.values)
            .map(|((p, x), z)| p * x * z)
            .sum()
    }

    /// Left quantile `inf { t : P(Z <= t) >= level }`.
    pub fn quantile(&self, level: f64) -> f64 {
        let order = self.sorted_order();
        let mut cum = 0.0;
        for &s in &order {
            cum += self.probs[s];
            if cum >= level - PROB_TOL {
                return self.values[s];
            }
        }
        self.values[*order.last().expect("nonempty")]
    }

    fn sorted_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        order
    }
}

pub(crate) fn normalize_probs(probs: Vec<f64>) -> Result<Vec<f64>, RiskError> {
    if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(RiskError::Input(format!("invalid probability {p}")));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(RiskError::Input(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }
    Ok(probs.into_iter().map(|p| p / total).collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    Expectation,
    /// Average Value-at-Risk at tail level `alpha`.
    Avar,
    /// `min_t t + (1/alpha) ||(Z - t)_+||_order`.
    HigherOrder,
    /// `E[Z] + kappa ||(Z - E[Z])_+||_order`.
    MeanSemideviation,
    /// `(1 - kappa) E[Z] + kappa AVaR_alpha[Z]`.
    MeanAvarMix,
    /// Value-at-Risk (left quantile at `1 - alpha`). Not coherent; evaluation only.
    ValueAtRisk,
}

impl RiskKind {
    pub fn is_coherent(self) -> bool {
        !matches!(self, RiskKind::ValueAtRisk)
    }

    fn uses_alpha(self) -> bool {
        matches!(
            self,
            RiskKind::Avar | RiskKind::HigherOrder | RiskKind::MeanAvarMix | RiskKind::ValueAtRisk
        )
    }

    fn uses_kappa(self) -> bool {
        matches!(self, RiskKind::MeanSemideviation | RiskKind::MeanAvarMix)
    }

    fn uses_order(self) -> bool {
        matches!(self, RiskKind::HigherOrder | RiskKind::MeanSemideviation)
    }
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RiskKind::Expectation => "expectation",
            RiskKind::Avar => "avar",
            RiskKind::HigherOrder => "higher_order",
            RiskKind::MeanSemideviation => "mean_semideviation",
            RiskKind::MeanAvarMix => "mean_avar_mix",
            RiskKind::ValueAtRisk => "value_at_risk",
        };
        f.write_str(s)
    }
}

/// A scalar risk measure with its parameters.
///
/// `alpha` is the tail level (the probability mass of the tail being
/// averaged), `kappa` the deviation or mixing weight and `order` the norm
/// order. Parameters a kind does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    pub kind: RiskKind,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "one")]
    pub order: f64,
}

fn one() -> f64 {
    1.0
}

impl RiskSpec {
    pub fn expectation() -> Self {
        Self {
            kind: RiskKind::Expectation,
            alpha: 1.0,
            kappa: 0.0,
            order: 1.0,
        }
    }

    pub fn avar(alpha: f64) -> Self {
        Self {
            kind: RiskKind::Avar,
            alpha,
            ..Self::expectation()
        }
    }

    pub fn higher_order(alpha: f64, order: f64) -> Self {
        Self {
            kind: RiskKind::HigherOrder,
            alpha,
            order,
            ..Self::expectation()
        }
    }

    pub fn mean_semideviation(order: f64, kappa: f64) -> Self {
        Self {
            kind: RiskKind::MeanSemideviation,
            kappa,
            order,
            ..Self::expectation()
        }
    }

    pub fn mean_avar_mix(kappa: f64, alpha: f64) -> Self {
        Self {
            kind: RiskKind::MeanAvarMix,
            alpha,
            kappa,
            ..Self::expectation()
        }
    }

    pub fn value_at_risk(alpha: f64) -> Self {
        Self {
            kind: RiskKind::ValueAtRisk,
            alpha,
            ..Self::expectation()
        }
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let k = self.kind;
        if k.uses_alpha() && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(RiskError::Parameter(format!(
                "{k}: alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if k.uses_kappa() && !(0.0..=1.0).contains(&self.kappa) {
            return Err(RiskError::Parameter(format!(
                "{k}: kappa must lie in [0, 1], got {}",
                self.kappa
            )));
        }
        if k.uses_order() && !(self.order >= 1.0 && self.order.is_finite()) {
            return Err(RiskError::Parameter(format!(
                "{k}: order must be a finite number >= 1, got {}",
                self.order
            )));
        }
        Ok(())
    }

    pub fn evaluate(&self, dist: &ScalarDistribution) -> Result<f64, RiskError> {
        evaluate_risk(self, dist)
    }

    pub fn subgradient(&self, dist: &ScalarDistribution) -> Result<Vec<f64>, RiskError> {
        risk_subgradient(self, dist)
    }
}

impl fmt::Display for RiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RiskKind::Expectation => write!(f, "mean"),
            RiskKind::Avar => write!(f, "avar:{}", self.alpha),
            RiskKind::HigherOrder => write!(f, "hor:{}:{}", self.alpha, self.order),
            RiskKind::MeanSemideviation => write!(f, "msd:{}:{}", self.order, self.kappa),
            RiskKind::MeanAvarMix => write!(f, "mix:{}:{}", self.kappa, self.alpha),
            RiskKind::ValueAtRisk => write!(f, "var:{}", self.alpha),
        }
    }
}

/// Command-line syntax `kind:param[:param]`:
/// `mean`, `avar:ALPHA`, `hor:ALPHA:ORDER`, `msd:ORDER:KAPPA`,
/// `mix:KAPPA:ALPHA`, `var:ALPHA`.
impl FromStr for RiskSpec {
    type Err = RiskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.trim().split(':');
        let kind = parts.next().unwrap_or_default().to_ascii_lowercase();
        let params: Vec<f64> = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| RiskError::Parameter(format!("bad number '{p}' in '{s}'")))
            })
            .collect::<Result<_, _>>()?;
        let want = |n: usize| -> Result<(), RiskError> {
            if params.len() == n {
                Ok(())
            } else {
                Err(RiskError::Parameter(format!(
                    "'{kind}' takes {n} parameter(s), got {} in '{s}'",
                    params.len()
                )))
            }
        };
        let spec = match kind.as_str() {
            "mean" | "expectation" | "e" => {
                want(0)?;
                RiskSpec::expectation()
            }
            "avar" | "cvar" => {
                want(1)?;
                RiskSpec::avar(params[0])
            }
            "hor" | "higher" => {
                want(2)?;
                RiskSpec::higher_order(params[0], params[1])
            }
            "msd" | "semidev" => {
                want(2)?;
                RiskSpec::mean_semideviation(params[0], params[1])
            }
            "mix" | "mavar" | "mean-avar" => {
                want(2)?;
                RiskSpec::mean_avar_mix(params[0], params[1])
            }
            "var" => {
                want(1)?;
                RiskSpec::value_at_risk(params[0])
            }
            other => {
                return Err(RiskError::Parameter(format!("unknown risk kind '{other}'")));
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `rho[Z]` for the given measure.
pub fn evaluate_risk(spec: &RiskSpec, dist: &ScalarDistribution) -> Result<f64, RiskError> {
    spec.validate()?;
    Ok(match spec.kind {
        RiskKind::Expectation => dist.mean(),
        RiskKind::Avar => avar_with_quantile(dist, spec.alpha).0,
        RiskKind::HigherOrder => higher_order(dist, spec.alpha, spec.order).0,
        RiskKind::MeanSemideviation => {
            let mean = dist.mean();
            mean + spec.kappa * upper_deviation_norm(dist, mean, spec.order)
        }
        RiskKind::MeanAvarMix => {
            (1.0 - spec.kappa) * dist.mean() + spec.kappa * avar_with_quantile(dist, spec.alpha).0
        }
        RiskKind::ValueAtRisk => dist.quantile(1.0 - spec.alpha),
    })
}

/// A dual element `xi` attaining `rho[Z] = sum_s p_s xi_s z_s`.
pub fn risk_subgradient(spec: &RiskSpec, dist: &ScalarDistribution) -> Result<Vec<f64>, RiskError> {
    spec.validate()?;
    let n = dist.len();
    let xi = match spec.kind {
        RiskKind::Expectation => vec![1.0; n],
        RiskKind::Avar => avar_subgradient(dist, spec.alpha),
        RiskKind::HigherOrder => higher_order_subgradient(dist, spec.alpha, spec.order),
        RiskKind::MeanSemideviation => semideviation_subgradient(dist, spec.kappa, spec.order),
        RiskKind::MeanAvarMix => avar_subgradient(dist, spec.alpha)
            .into_iter()
            .map(|x| (1.0 - spec.kappa) + spec.kappa * x)
            .collect(),
        RiskKind::ValueAtRisk => return Err(RiskError::Unsupported(spec.kind)),
    };
    Ok(xi)
}

/// Returns `(AVaR_alpha[Z], eta*)` where `eta*` is the left `(1 - alpha)`-quantile,
/// the smallest minimizer of `eta + E[(Z - eta)_+] / alpha`.
fn avar_with_quantile(dist: &ScalarDistribution, alpha: f64) -> (f64, f64) {
    if alpha >= 1.0 {
        return (dist.mean(), dist.min_value());
    }
    let eta = dist.quantile(1.0 - alpha);
    let excess: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .map(|(z, p)| p * (z - eta).max(0.0))
        .sum();
    (eta + excess / alpha, eta)
}

fn avar_subgradient(dist: &ScalarDistribution, alpha: f64) -> Vec<f64> {
    if alpha >= 1.0 {
        return vec![1.0; dist.len()];
    }
    let (_, eta) = avar_with_quantile(dist, alpha);
    let above: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .filter(|(z, _)| **z > eta)
        .map(|(_, p)| p)
        .sum();
    let at: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .filter(|(z, _)| **z == eta)
        .map(|(_, p)| p)
        .sum();
    let atom_weight = if at > 0.0 {
        ((1.0 - above / alpha) / at).clamp(0.0, 1.0 / alpha)
    } else {
        0.0
    };
    dist.values
        .iter()
        .map(|&z| {
            if z > eta {
                1.0 / alpha
            } else if z == eta {
                atom_weight
            } else {
                0.0
            }
        })
        .collect()
}

/// `|| (Z - t)_+ ||_order` in `L_order(P)`.
fn upper_deviation_norm(dist: &ScalarDistribution, t: f64, order: f64) -> f64 {
    let scale = dist
        .values
        .iter()
        .map(|z| (z - t).max(0.0))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    if order == 1.0 {
        return dist
            .values
            .iter()
            .zip(&dist.probs)
            .map(|(z, p)| p * (z - t).max(0.0))
            .sum();
    }
    // scaled to avoid overflow for large orders
    let s: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .map(|(z, p)| p * ((z - t).max(0.0) / scale).powf(order))
        .sum();
    scale * s.powf(1.0 / order)
}

/// Returns `(value, t*)` of `min_t t + ||(Z - t)_+||_order / alpha`.
fn higher_order(dist: &ScalarDistribution, alpha: f64, order: f64) -> (f64, f64) {
    if order == 1.0 {
        let (v, eta) = avar_with_quantile(dist, alpha);
        return (v, eta);
    }
    let hi = dist.max_value();
    if alpha >= 1.0 {
        // infimum E[Z] is approached as t -> -inf and not attained for order > 1
        return (dist.mean(), f64::NEG_INFINITY);
    }
    let mean = dist.mean();
    // any minimizer t* satisfies f(t*) <= f(max) = max, and
    // f(t) >= E[Z]/alpha + t (1 - 1/alpha) for t <= min
    let lo = dist.min_value().min((mean - alpha * hi) / (1.0 - alpha));
    let f = |t: f64| t + upper_deviation_norm(dist, t, order) / alpha;
    // the upper end of the final bracket, where the slope is nonnegative
    let t = bisect_slope(|t| higher_order_slope(dist, t, alpha, order), lo, hi);
    let best = [(f(t), t), (f(hi), hi)]
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("two candidates");
    best
}

/// Derivative in `t` of `t + ||(Z - t)_+||_order / alpha` for `order > 1`;
/// nondecreasing because the function is convex.
fn higher_order_slope(dist: &ScalarDistribution, t: f64, alpha: f64, order: f64) -> f64 {
    let scale = dist.values.iter().fold(0.0f64, |m, z| m.max(z - t));
    if scale <= 0.0 {
        return 1.0;
    }
    let (mut sp, mut sq) = (0.0, 0.0);
    for (z, p) in dist.values.iter().zip(&dist.probs) {
        let e = (z - t).max(0.0) / scale;
        if e > 0.0 {
            sp += p * e.powf(order);
            sq += p * e.powf(order - 1.0);
        }
    }
    1.0 - sq / sp.powf((order - 1.0) / order) / alpha
}

/// Bisection on the sign of the slope, run until the bracket cannot shrink.
fn bisect_slope(slope: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..BISECT_MAX_ITER {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if slope(mid) < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    b
}

fn higher_order_subgradient(dist: &ScalarDistribution, alpha: f64, order: f64) -> Vec<f64> {
    if order == 1.0 {
        return avar_subgradient(dist, alpha);
    }
    let (_, t) = higher_order(dist, alpha, order);
    if !t.is_finite() {
        return vec![1.0; dist.len()];
    }
    let excess: Vec<f64> = dist.values.iter().map(|z| (z - t).max(0.0)).collect();
    let scale = excess.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 {
        return max_atom_weights(dist);
    }
    // xi = (Z - t)_+^(order - 1) / (alpha ||(Z - t)_+||^(order - 1)) gives
    // <xi, Z> = f(t) - t * deficit, where deficit = 1 - E[xi] is the slope at
    // t (>= 0 by construction). Moving the deficit onto the atom nearest to t
    // costs deficit * |z - t| in attainment; the slope can jump between
    // neighbouring floats when the minimizer sits just below an atom.
    let norm = dist
        .values
        .iter()
        .zip(&dist.probs)
        .map(|(z, p)| p * ((z - t).max(0.0) / scale).powf(order))
        .sum::<f64>()
        .powf((order - 1.0) / order);
    let mut xi: Vec<f64> = excess
        .iter()
        .map(|e| if *e > 0.0 { (e / scale).powf(order - 1.0) / (alpha * norm) } else { 0.0 })
        .collect();
    let deficit = 1.0 - dot(&dist.probs, &xi);
    if deficit > 0.0 {
        let nearest = dist
            .values
            .iter()
            .copied()
            .min_by(|a, b| (a - t).abs().total_cmp(&(b - t).abs()))
            .expect("nonempty distribution");
        let mass: f64 = dist.values.iter().zip(&dist.probs).filter(|(z, _)| **z == nearest).map(|(_, p)| p).sum();
        for (x, z) in xi.iter_mut().zip(&dist.values) {
            if *z == nearest {
                *x += deficit / mass;
            }
        }
    }
    let mass = dot(&dist.probs, &xi);
    xi.into_iter().map(|x| x / mass).collect()
}

fn max_atom_weights(dist: &ScalarDistribution) -> Vec<f64> {
    let hi = dist.max_value();
    let mass: f64 = dist
        .values
        .iter()
        .zip(&dist.probs)
        .filter(|(z, _)| **z == hi)
        .map(|(_, p)| p)
        .sum();
    dist.values
        .iter()
        .map(|&z| if z == hi { 1.0 / mass } else { 0.0 })
        .collect()
}

fn semideviation_subgradient(dist: &ScalarDistribution, kappa: f64, order: f64) -> Vec<f64> {
    let mean = dist.mean();
    let excess: Vec<f64> = dist.values.iter().map(|z| (z - mean).max(0.0)).collect();
    let scale = excess.iter().copied().fold(0.0, f64::max);
    if scale == 0.0 || kappa == 0.0 {
        return vec![1.0; dist.len()];
    }
    // h = (Z - EZ)_+^(order-1) / ||(Z - EZ)_+||^(order-1), ||h||_q = 1
    let h: Vec<f64> = if order == 1.0 {
        excess.iter().map(|&e| if e > 0.0 { 1.0 } else { 0.0 }).collect()
    } else {
        let raw: Vec<f64> = excess.iter().map(|e| (e / scale).powf(order - 1.0)).collect();
        let norm_p: f64 = dist
            .probs
            .iter()
            .zip(&excess)
            .map(|(p, e)| p * (e / scale).powf(order))
            .sum::<f64>()
            .powf((order - 1.0) / order);
        raw.into_iter().map(|r| r / norm_p).collect()
    };
    let mean_h = dot(&dist.probs, &h);
    h.into_iter().map(|x| 1.0 + kappa * (x - mean_h)).collect()
}

/// Which axiom a randomized check exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axiom {
    Convexity,
    Monotonicity,
    PositiveHomogeneity,
    Translation,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomViolation {
    pub axiom: Axiom,
    pub trial: usize,
    /// Amount by which the inequality (or equality) is violated.
    pub excess: f64,
    pub values: Vec<f64>,
    pub other: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub violations: Vec<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Tolerance for the randomized axiom checks, relative to the data scale.
pub const AXIOM_TOL: f64 = 1e-9;

/// Random draw of a finite distribution with up to `max_scenarios` atoms.
pub(crate) fn random_probs(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // push the rounding residue onto the last atom so the mass is 1 to machine precision
    let rest: f64 = probs[..n - 1].iter().sum();
    probs[n - 1] = 1.0 - rest;
    probs
}

/// Randomized check of convexity, monotonicity, positive homogeneity and
/// translation equivariance on `trials` pairs of distributions over a common
/// scenario space.
pub fn check_axioms(spec: &RiskSpec, trials: usize, seed: u64) -> Result<AxiomReport, RiskError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for trial in 0..trials {
        let n = rng.gen_range(1..=8);
        let probs = random_probs(&mut rng, n);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let zd = ScalarDistribution::new(z.clone(), probs.clone())?;
        let yd = zd.with_values(y.clone())?;
        let rz = evaluate_risk(spec, &zd)?;
        let ry = evaluate_risk(spec, &yd)?;
        let scale = 1.0 + rz.abs().max(ry.abs());
        let tol = AXIOM_TOL * scale;
        let mut record = |axiom: Axiom, excess: f64, other: &[f64]| {
            if excess > tol {
                violations.push(AxiomViolation {
                    axiom,
                    trial,
                    excess,
                    values: z.clone(),
                    other: other.to_vec(),
                    probs: probs.clone(),
                });
            }
        };

        let lambda: f64 = rng.gen_range(0.0..1.0);
        let mix: Vec<f64> = z
            .iter()
            .zip(&y)
            .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
            .collect();
        let rmix = evaluate_risk(spec, &zd.with_values(mix)?)?;
        record(Axiom::Convexity, rmix - (lambda * rz + (1.0 - lambda) * ry), &y);

        let bumped: Vec<f64> = z.iter().map(|a| a + rng.gen_range(0.0..3.0)).collect();
        let rb = evaluate_risk(spec, &zd.with_values(bumped.clone())?)?;
        record(Axiom::Monotonicity, rz - rb, &bumped);

        let t: f64 = rng.gen_range(0.01..5.0);
        let scaled: Vec<f64> = z.iter().map(|a| t * a).collect();
        let rs = evaluate_risk(spec, &zd.with_values(scaled.clone())?)?;
        record(Axiom::PositiveHomogeneity, (rs - t * rz).abs(), &scaled);

        let a: f64 = rng.gen_range(-10.0..10.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + a).collect();
        let rt = evaluate_risk(spec, &zd.with_values(shifted.clone())?)?;
        record(Axiom::Translation, (rt - rz - a).abs(), &shifted);
    }
    Ok(AxiomReport { trials, violations })
}
