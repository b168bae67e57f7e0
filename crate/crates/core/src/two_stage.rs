//! Risk-averse two-stage problems with binary first-stage selection and a
//! per-scenario second stage made of loosely coupled nodes.
//!
//! The outer loop is a multicut decomposition: the master keeps one set of
//! objective cuts per scenario plus risk cuts `eta >= <mu, q>` generated from
//! dual subgradients of the risk measure, and is solved by enumerating the
//! feasible selections.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{self, QpError, QpProblem, QpSolution, QpStatus};
use crate::risk::{RiskError, RiskSpec, ScalarDistribution};

pub const DEFAULT_EPS: f64 = 1e-6;
const CUT_POOL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum TwoStageError {
    #[error("invalid instance: {0}")]
    Input(String),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("second stage of scenario {scenario} returned {status:?}")]
    SecondStage { scenario: usize, status: QpStatus },
    #[error("second-stage oracle failed on scenario {scenario}: {detail}")]
    Oracle { scenario: usize, detail: String },
    /// `trace` holds the master iterations completed before the failure.
    #[error("distributed solve of scenario {scenario} did not converge: {detail}")]
    NotConverged {
        scenario: usize,
        detail: String,
        trace: Vec<TraceRow>,
    },
    #[error("master loop hit the iteration cap of {cap} (last gap {gap:e})")]
    IterationLimit { cap: usize, gap: f64, trace: Vec<TraceRow> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    Eq,
    Le,
}

/// Row linking a node's variables to the first stage:
/// `sum local + sum first_stage * z (=|<=) rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRow {
    pub local: Vec<(usize, f64)>,
    pub first_stage: Vec<(usize, f64)>,
    pub rhs: f64,
    pub kind: LinkKind,
}

impl LinkRow {
    /// Right-hand side once the first-stage decision is fixed.
    pub fn rhs_at(&self, z: &[bool]) -> f64 {
        self.rhs
            - self
                .first_stage
                .iter()
                .filter(|(k, _)| z[*k])
                .map(|(_, t)| t)
                .sum::<f64>()
    }
}

/// One node (agent) of a scenario's second stage. Its loss is
/// `loss_const + loss_linear . v + 1/2 v' loss_quadratic v`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBlock {
    pub weight: f64,
    pub loss_const: f64,
    pub loss_linear: Vec<f64>,
    pub loss_quadratic: Option<DMatrix<f64>>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub links: Vec<LinkRow>,
}

impl NodeBlock {
    pub fn num_vars(&self) -> usize {
        self.loss_linear.len()
    }

    pub fn loss(&self, v: &[f64]) -> f64 {
        let mut l = self.loss_const + v.iter().zip(&self.loss_linear).map(|(a, b)| a * b).sum::<f64>();
        if let Some(q) = &self.loss_quadratic {
            let v = DVector::from_column_slice(v);
            l += 0.5 * v.dot(&(q * &v));
        }
        l
    }
}

/// Equality row coupling several nodes: `sum coef * v[node][var] = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingRow {
    pub entries: Vec<(usize, usize, f64)>,
    pub rhs: f64,
}

/// `v[a.0][a.1] = v[b.0][b.1]`: copies of a common variable held by two nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyPair {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageScenario {
    pub probability: f64,
    pub nodes: Vec<NodeBlock>,
    pub coupling: Vec<CouplingRow>,
    pub consistency: Vec<ConsistencyPair>,
}

impl SecondStageScenario {
    pub fn validate(&self, num_first_stage: usize) -> Result<(), TwoStageError> {
        let bad = |m: String| Err(TwoStageError::Input(m));
        if !(self.probability > 0.0) {
            return bad(format!("scenario probability {} must be positive", self.probability));
        }
        if self.nodes.is_empty() {
            return bad("scenario has no nodes".into());
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let n = node.num_vars();
            if node.lower.len() != n || node.upper.len() != n {
                return bad(format!("node {i}: bound lengths differ from {n}"));
            }
            if let Some(q) = &node.loss_quadratic {
                if q.shape() != (n, n) {
                    return bad(format!("node {i}: quadratic loss is {:?}", q.shape()));
                }
            }
            for link in &node.links {
                if link.local.iter().any(|(j, _)| *j >= n) || link.first_stage.iter().any(|(k, _)| *k >= num_first_stage) {
                    return bad(format!("node {i}: link row index out of range"));
                }
            }
        }
        let check = |node: usize, var: usize| node < self.nodes.len() && var < self.nodes[node].num_vars();
        for row in &self.coupling {
            if row.entries.iter().any(|(i, j, _)| !check(*i, *j)) {
                return bad("coupling entry out of range".into());
            }
        }
        for pair in &self.consistency {
            if !check(pair.a.0, pair.a.1) || !check(pair.b.0, pair.b.1) {
                return bad("consistency pair out of range".into());
            }
        }
        Ok(())
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = Vec::with_capacity(self.nodes.len() + 1);
        let mut acc = 0;
        for node in &self.nodes {
            off.push(acc);
            acc += node.num_vars();
        }
        off.push(acc);
        off
    }

    /// `sum_i w_i loss_i(v_i)`.
    pub fn objective(&self, solution: &[Vec<f64>]) -> f64 {
        self.nodes.iter().zip(solution).map(|(n, v)| n.weight * n.loss(v)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageInstance {
    pub num_first_stage: usize,
    pub budget: usize,
    pub risk: RiskSpec,
    pub first_stage_cost: Vec<f64>,
    pub scenarios: Vec<SecondStageScenario>,
}

impl TwoStageInstance {
    pub fn validate(&self) -> Result<(), TwoStageError> {
        let k0 = self.num_first_stage;
        if self.budget < 1 || self.budget >= k0 {
            return Err(TwoStageError::Input(format!("budget {} must lie in [1, {k0})", self.budget)));
        }
        if k0 > 20 {
            return Err(TwoStageError::Input(format!("{k0} first-stage variables is too many to enumerate")));
        }
        if self.first_stage_cost.len() != k0 {
            return Err(TwoStageError::Input("first-stage cost length differs from K0".into()));
        }
        if self.scenarios.is_empty() {
            return Err(TwoStageError::Input("no scenarios".into()));
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(TwoStageError::Input(format!("scenario probabilities sum to {total}")));
        }
        for s in &self.scenarios {
            s.validate(k0)?;
        }
        self.risk.validate()?;
        Ok(())
    }

    pub fn probs(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.probability).collect()
    }

    pub fn first_stage_value(&self, z: &[bool]) -> f64 {
        z.iter().zip(&self.first_stage_cost).filter(|(on, _)| **on).map(|(_, c)| c).sum()
    }
}

/// All selections with at most `budget` ones, in lexicographic order of the
/// 0/1 vectors (so the all-zero selection comes first).
pub fn feasible_selections(k0: usize, budget: usize) -> Vec<Vec<bool>> {
    let mut out: Vec<Vec<bool>> = (0u32..(1u32 << k0))
        .filter(|m| m.count_ones() as usize <= budget)
        .map(|m| (0..k0).map(|k| m & (1 << (k0 - 1 - k)) != 0).collect())
        .collect();
    out.sort();
    out
}

pub fn format_selection(z: &[bool]) -> String {
    z.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

/// Optimal second-stage solve of one scenario at a fixed selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub value: f64,
    pub subgradient: Vec<f64>,
    /// Unweighted node losses at the returned solution.
    pub node_losses: Vec<f64>,
    pub solution: Vec<Vec<f64>>,
    /// Iterations used (simplex/active-set pivots or distributed sweeps).
    pub iterations: usize,
}

pub trait SecondStageOracle: Sync {
    fn solve(&self, index: usize, scenario: &SecondStageScenario, z: &[bool]) -> Result<ScenarioOutcome, TwoStageError>;
}

/// Exact solve of the whole scenario program at once.
#[derive(Debug, Clone, Copy)]
pub struct CentralizedOracle {
    pub tol: f64,
}

impl Default for CentralizedOracle {
    fn default() -> Self {
        Self { tol: qp::DEFAULT_TOL }
    }
}

impl SecondStageOracle for CentralizedOracle {
    fn solve(&self, index: usize, scenario: &SecondStageScenario, z: &[bool]) -> Result<ScenarioOutcome, TwoStageError> {
        solve_second_stage_centralized(index, scenario, z, self.tol)
    }
}

/// Union-find spanning forest of the consistency pairs; the dropped pairs
/// are implied by the kept ones.
pub fn consistency_forest(scenario: &SecondStageScenario) -> Vec<ConsistencyPair> {
    let off = scenario.offsets();
    let mut parent: Vec<usize> = (0..off[off.len() - 1]).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut kept = Vec::new();
    for pair in &scenario.consistency {
        let a = find(&mut parent, off[pair.a.0] + pair.a.1);
        let b = find(&mut parent, off[pair.b.0] + pair.b.1);
        if a != b {
            parent[a.max(b)] = a.min(b);
            kept.push(*pair);
        }
    }
    kept
}

/// Index of a link row in the assembled centralized program.
#[derive(Debug, Clone, Copy)]
enum RowRef {
    Eq(usize),
    Ineq(usize),
}

/// Assembles the scenario program at selection `z`; returns the problem and
/// the constant dropped from its objective.
pub fn centralized_problem(scenario: &SecondStageScenario, z: &[bool]) -> (QpProblem, f64) {
    let (p, c, _) = assemble(scenario, z);
    (p, c)
}

fn assemble(scenario: &SecondStageScenario, z: &[bool]) -> (QpProblem, f64, Vec<Vec<RowRef>>) {
    let off = scenario.offsets();
    let n = off[off.len() - 1];
    let mut quad = DMatrix::zeros(n, n);
    let mut lin = DVector::zeros(n);
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);
    let mut constant = 0.0;
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut in_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    let mut link_refs = Vec::with_capacity(scenario.nodes.len());
    for (i, node) in scenario.nodes.iter().enumerate() {
        let o = off[i];
        constant += node.weight * node.loss_const;
        for j in 0..node.num_vars() {
            lin[o + j] = node.weight * node.loss_linear[j];
            lower[o + j] = node.lower[j];
            upper[o + j] = node.upper[j];
        }
        if let Some(q) = &node.loss_quadratic {
            let nv = node.num_vars();
            let mut block = quad.view_mut((o, o), (nv, nv));
            block += q * node.weight;
        }
        let mut refs = Vec::with_capacity(node.links.len());
        for link in &node.links {
            let row: Vec<(usize, f64)> = link.local.iter().map(|(j, a)| (o + j, *a)).collect();
            let rhs = link.rhs_at(z);
            match link.kind {
                LinkKind::Eq => {
                    refs.push(RowRef::Eq(eq_rows.len()));
                    eq_rows.push((row, rhs));
                }
                LinkKind::Le => {
                    refs.push(RowRef::Ineq(in_rows.len()));
                    in_rows.push((row, rhs));
                }
            }
        }
        link_refs.push(refs);
    }
    for row in &scenario.coupling {
        eq_rows.push((row.entries.iter().map(|(i, j, a)| (off[*i] + j, *a)).collect(), row.rhs));
    }
    for pair in consistency_forest(scenario) {
        eq_rows.push((vec![(off[pair.a.0] + pair.a.1, 1.0), (off[pair.b.0] + pair.b.1, -1.0)], 0.0));
    }
    let dense = |rows: &[(Vec<(usize, f64)>, f64)]| {
        let mut a = DMatrix::zeros(rows.len(), n);
        for (r, (entries, _)) in rows.iter().enumerate() {
            for (j, v) in entries {
                a[(r, *j)] += v;
            }
        }
        (a, DVector::from_iterator(rows.len(), rows.iter().map(|(_, b)| *b)))
    };
    let (eq_a, eq_b) = dense(&eq_rows);
    let (in_a, in_b) = dense(&in_rows);
    let problem = QpProblem::new(n)
        .with_quadratic(quad)
        .with_linear(lin)
        .with_eq(eq_a, eq_b)
        .with_ineq(in_a, in_b)
        .with_lower(lower)
        .with_upper(upper);
    (problem, constant, link_refs)
}

/// Exact second-stage value, subgradient with respect to `z`, and node
/// losses. The `k`-th subgradient entry is `sum_r pi_r T_rk` over link rows,
/// `pi` being the row multipliers (the sensitivity of the value to the
/// right-hand side `h - T z` is `-pi`).
pub fn solve_second_stage_centralized(
    index: usize,
    scenario: &SecondStageScenario,
    z: &[bool],
    tol: f64,
) -> Result<ScenarioOutcome, TwoStageError> {
    let (problem, constant, refs) = assemble(scenario, z);
    let sol: QpSolution = if problem.is_linear() {
        qp::solve_lp(&problem, tol)?
    } else {
        qp::solve_qp(&problem, tol)?
    };
    if sol.status != QpStatus::Optimal {
        return Err(TwoStageError::SecondStage { scenario: index, status: sol.status });
    }
    let off = scenario.offsets();
    let mut g = vec![0.0; z.len()];
    for (node, node_refs) in scenario.nodes.iter().zip(&refs) {
        for (link, r) in node.links.iter().zip(node_refs) {
            let pi = match r {
                RowRef::Eq(i) => sol.eq_duals[*i],
                RowRef::Ineq(i) => sol.ineq_duals[*i],
            };
            for (k, t) in &link.first_stage {
                g[*k] += pi * t;
            }
        }
    }
    let solution: Vec<Vec<f64>> = (0..scenario.nodes.len())
        .map(|i| sol.x.as_slice()[off[i]..off[i + 1]].to_vec())
        .collect();
    let node_losses = scenario.nodes.iter().zip(&solution).map(|(n, v)| n.loss(v)).collect();
    Ok(ScenarioOutcome {
        value: sol.objective + constant,
        subgradient: g,
        node_losses,
        solution,
        iterations: sol.iterations,
    })
}

/// Second-stage outcomes per selection, shared between solves of the same
/// instance with the same oracle (e.g. across risk measures).
#[derive(Debug, Default)]
pub struct OutcomeCache {
    map: Mutex<HashMap<Vec<bool>, std::sync::Arc<Vec<ScenarioOutcome>>>>,
}

impl OutcomeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Outcomes of every scenario at `z`, solving them (in parallel) on a miss.
    pub fn outcomes(
        &self,
        instance: &TwoStageInstance,
        oracle: &dyn SecondStageOracle,
        z: &[bool],
    ) -> Result<std::sync::Arc<Vec<ScenarioOutcome>>, TwoStageError> {
        if let Some(hit) = self.map.lock().expect("cache lock").get(z) {
            return Ok(hit.clone());
        }
        let solved: Result<Vec<ScenarioOutcome>, TwoStageError> = crate::parallel::install(|| {
            instance
                .scenarios
                .par_iter()
                .enumerate()
                .map(|(s, scen)| oracle.solve(s, scen, z))
                .collect()
        });
        let arc = std::sync::Arc::new(solved?);
        self.map.lock().expect("cache lock").insert(z.to_vec(), arc.clone());
        Ok(arc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveCut {
    pub value: f64,
    pub subgradient: Vec<f64>,
    pub anchor: Vec<bool>,
}

impl ObjectiveCut {
    pub fn at(&self, z: &[bool]) -> f64 {
        self.value
            + self
                .subgradient
                .iter()
                .zip(z.iter().zip(&self.anchor))
                .map(|(g, (a, b))| g * (f64::from(u8::from(*a)) - f64::from(u8::from(*b))))
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutPool {
    pub risk_cuts: Vec<Vec<f64>>,
    pub objective_cuts: Vec<Vec<ObjectiveCut>>,
}

impl CutPool {
    /// Pool holding only the expectation weights `mu = 1`.
    pub fn initial(num_scenarios: usize) -> Self {
        Self {
            risk_cuts: vec![vec![1.0; num_scenarios]],
            objective_cuts: vec![Vec::new(); num_scenarios],
        }
    }

    pub fn add_risk_cut(&mut self, mu: Vec<f64>, probs: &[f64]) -> Result<(), TwoStageError> {
        let total: f64 = mu.iter().zip(probs).map(|(m, p)| m * p).sum();
        if mu.len() != probs.len() || mu.iter().any(|m| *m < -CUT_POOL_TOL) || (total - 1.0).abs() > CUT_POOL_TOL {
            return Err(TwoStageError::Input(format!(
                "risk cut is not a probability density (sum p mu = {total})"
            )));
        }
        self.risk_cuts.push(mu);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub z: Vec<bool>,
    pub eta: f64,
    pub q: Vec<f64>,
    pub objective: f64,
}

/// Master problem by enumeration: for each feasible selection, the cut LP in
/// `(eta, q)` with `q_s >= max(q_lower, objective cuts at z)`.
pub fn solve_master(instance: &TwoStageInstance, cuts: &CutPool, q_lower: f64) -> Result<MasterSolution, TwoStageError> {
    if cuts.risk_cuts.is_empty() {
        return Err(TwoStageError::Input("cut pool has no risk cut".into()));
    }
    let s_count = instance.scenarios.len();
    if cuts.objective_cuts.len() != s_count {
        return Err(TwoStageError::Input("objective cuts do not match the scenarios".into()));
    }
    let probs = instance.probs();
    let mut best: Option<MasterSolution> = None;
    for z in feasible_selections(instance.num_first_stage, instance.budget) {
        let lb: Vec<f64> = cuts
            .objective_cuts
            .iter()
            .map(|pool| pool.iter().map(|c| c.at(&z)).fold(q_lower, f64::max))
            .collect();
        // Variables (eta, q_1..q_S); rows -eta + sum p mu q <= 0.
        let n = 1 + s_count;
        let mut lin = DVector::zeros(n);
        lin[0] = 1.0;
        let mut a = DMatrix::zeros(cuts.risk_cuts.len(), n);
        for (r, mu) in cuts.risk_cuts.iter().enumerate() {
            a[(r, 0)] = -1.0;
            for s in 0..s_count {
                a[(r, 1 + s)] = probs[s] * mu[s];
            }
        }
        let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
        for s in 0..s_count {
            lower[1 + s] = lb[s];
        }
        let lp = QpProblem::new(n)
            .with_linear(lin)
            .with_ineq(a, DVector::zeros(cuts.risk_cuts.len()))
            .with_lower(lower);
        let sol = qp::solve_lp(&lp, 1e-10)?;
        if sol.status != QpStatus::Optimal {
            return Err(TwoStageError::Input(format!("master LP returned {:?}", sol.status)));
        }
        let eta = sol.x[0];
        let objective = instance.first_stage_value(&z) + eta;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            best = Some(MasterSolution {
                z,
                eta,
                q: sol.x.as_slice()[1..].to_vec(),
                objective,
            });
        }
    }
    best.ok_or_else(|| TwoStageError::Input("no feasible selection".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Master value (lower bound).
    pub eta: f64,
    /// Risk of the master's selection (upper bound).
    pub rho: f64,
    pub z: Vec<bool>,
    pub values: Vec<f64>,
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("iteration,eta,rho,z");
    if let Some(first) = trace.first() {
        for s in 0..first.values.len() {
            let _ = write!(out, ",q{s}");
        }
    }
    out.push('\n');
    for row in trace {
        let _ = write!(out, "{},{:.12e},{:.12e},{}", row.iteration, row.eta, row.rho, format_selection(&row.z));
        for v in &row.values {
            let _ = write!(out, ",{v:.12e}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStageOptions {
    pub eps: f64,
    pub max_iter: usize,
    /// Lower bound on the scenario values used before objective cuts exist.
    pub q_lower: f64,
}

impl Default for TwoStageOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            max_iter: 200,
            q_lower: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageSolution {
    pub z: Vec<bool>,
    pub risk_value: f64,
    pub lower_bound: f64,
    pub trace: Vec<TraceRow>,
    /// Scenario values at the returned selection.
    pub values: Vec<f64>,
}

pub fn risk_of_outcomes(instance: &TwoStageInstance, spec: &RiskSpec, z: &[bool], values: &[f64]) -> Result<f64, TwoStageError> {
    let dist = ScalarDistribution::new(values.to_vec(), instance.probs())?;
    Ok(instance.first_stage_value(z) + spec.evaluate(&dist)?)
}

pub fn solve_two_stage(
    instance: &TwoStageInstance,
    oracle: &dyn SecondStageOracle,
    options: &TwoStageOptions,
) -> Result<TwoStageSolution, TwoStageError> {
    solve_two_stage_cached(instance, oracle, options, &OutcomeCache::new())
}

pub fn solve_two_stage_cached(
    instance: &TwoStageInstance,
    oracle: &dyn SecondStageOracle,
    options: &TwoStageOptions,
    cache: &OutcomeCache,
) -> Result<TwoStageSolution, TwoStageError> {
    instance.validate()?;
    if !(options.eps > 0.0) {
        return Err(TwoStageError::Input(format!("eps must be positive, got {}", options.eps)));
    }
    if !instance.risk.kind.is_coherent() {
        return Err(RiskError::Unsupported(instance.risk.kind).into());
    }
    let probs = instance.probs();
    let mut cuts = CutPool::initial(instance.scenarios.len());
    let mut trace = Vec::new();
    let mut incumbent: Option<(Vec<bool>, f64, Vec<f64>)> = None;
    let mut gap = f64::INFINITY;
    for iteration in 0..options.max_iter {
        let master = solve_master(instance, &cuts, options.q_lower)?;
        let outcomes = match cache.outcomes(instance, oracle, &master.z) {
            Ok(o) => o,
            Err(TwoStageError::NotConverged { scenario, detail, .. }) => {
                return Err(TwoStageError::NotConverged { scenario, detail, trace })
            }
            Err(e) => return Err(e),
        };
        let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
        if let Some(v) = values.iter().find(|v| **v < options.q_lower - 1e-9) {
            return Err(TwoStageError::Input(format!(
                "scenario value {v} is below the configured lower bound {}",
                options.q_lower
            )));
        }
        let dist = ScalarDistribution::new(values.clone(), probs.clone())?;
        let rho = instance.first_stage_value(&master.z) + instance.risk.evaluate(&dist)?;
        trace.push(TraceRow {
            iteration,
            eta: master.objective,
            rho,
            z: master.z.clone(),
            values: values.clone(),
        });
        if incumbent.as_ref().is_none_or(|(_, r, _)| rho < *r) {
            incumbent = Some((master.z.clone(), rho, values.clone()));
        }
        let best = incumbent.as_ref().map(|(_, r, _)| *r).unwrap_or(rho);
        gap = best - master.objective;
        if gap <= options.eps {
            let (z, risk_value, values) = incumbent.expect("set above");
            return Ok(TwoStageSolution {
                z,
                risk_value,
                lower_bound: master.objective,
                trace,
                values,
            });
        }
        let mu = instance.risk.subgradient(&dist)?;
        cuts.add_risk_cut(mu, &probs)?;
        for (s, o) in outcomes.iter().enumerate() {
            cuts.objective_cuts[s].push(ObjectiveCut {
                value: o.value,
                subgradient: o.subgradient.clone(),
                anchor: master.z.clone(),
            });
        }
    }
    Err(TwoStageError::IterationLimit {
        cap: options.max_iter,
        gap,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub z: Vec<bool>,
    pub risk_value: f64,
    /// Risk of every feasible selection, in enumeration order.
    pub all: Vec<(Vec<bool>, f64)>,
}

/// Exhaustive reference: evaluates `risk` at every feasible selection.
pub fn enumerate_two_stage(
    instance: &TwoStageInstance,
    oracle: &dyn SecondStageOracle,
    cache: &OutcomeCache,
) -> Result<EnumerationResult, TwoStageError> {
    enumerate_with(instance, oracle, cache, |z, outcomes| {
        let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
        risk_of_outcomes(instance, &instance.risk, z, &values)
    })
}

/// Enumerates feasible selections and minimizes an arbitrary functional of
/// the scenario outcomes; ties go to the lexicographically first selection.
pub fn enumerate_with(
    instance: &TwoStageInstance,
    oracle: &dyn SecondStageOracle,
    cache: &OutcomeCache,
    mut value: impl FnMut(&[bool], &[ScenarioOutcome]) -> Result<f64, TwoStageError>,
) -> Result<EnumerationResult, TwoStageError> {
    instance.validate()?;
    let mut all = Vec::new();
    for z in feasible_selections(instance.num_first_stage, instance.budget) {
        let outcomes = cache.outcomes(instance, oracle, &z)?;
        let v = value(&z, &outcomes)?;
        all.push((z, v));
    }
    let (z, risk_value) = all
        .iter()
        .fold(None::<&(Vec<bool>, f64)>, |best, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .cloned()
        .expect("at least the empty selection");
    Ok(EnumerationResult { z, risk_value, all })
}
