//! Accelerated distributed augmented Lagrangian (ADAL) solve of one
//! scenario's second stage. Every node minimizes its local augmented
//! Lagrangian against the previous iterate of its neighbours (Jacobi sweep),
//! takes a relaxed step towards the minimizer, and the multipliers of the
//! coupling rows and consistency pairs move with the residuals.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qp::{self, BoxQp, QpError, QpProblem, QpStatus, WarmStart};
use crate::two_stage::{
    LinkKind, ScenarioOutcome, SecondStageOracle, SecondStageScenario, TwoStageError,
};

#[derive(Debug, Error)]
pub enum AdalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("node {node}: {source}")]
    Qp {
        node: usize,
        #[source]
        source: QpError,
    },
    #[error("node {node}: local subproblem returned {status:?}")]
    Subproblem { node: usize, status: QpStatus },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdalConfig {
    /// Penalty `kappa_0`; `0.9 / q` when absent.
    pub penalty: Option<f64>,
    /// Relaxation step `kappa_s`; `1 / q` when absent.
    pub stepsize: Option<f64>,
    pub residual_tol: f64,
    /// Largest local step `|v_hat - v|` accepted at convergence.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Tolerance of the node QP solves.
    pub qp_tol: f64,
}

impl Default for AdalConfig {
    fn default() -> Self {
        Self {
            penalty: None,
            stepsize: None,
            residual_tol: 1e-5,
            step_tol: 1e-3,
            max_iter: 200_000,
            qp_tol: 1e-10,
        }
    }
}

/// Penalty and stepsize after defaults are filled in for a given `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdalParams {
    pub penalty: f64,
    pub stepsize: f64,
    pub q: usize,
}

impl AdalConfig {
    pub fn resolve(&self, q: usize) -> Result<AdalParams, AdalError> {
        let q = q.max(1);
        let penalty = self.penalty.unwrap_or(0.9 / q as f64);
        let stepsize = self.stepsize.unwrap_or(1.0 / q as f64);
        if !(penalty > 0.0 && penalty < 1.0 / q as f64 + 1e-15) {
            return Err(AdalError::Config(format!("penalty {penalty} must lie in (0, 1/{q})")));
        }
        if !(stepsize > 0.0 && stepsize <= 1.0) {
            return Err(AdalError::Config(format!("stepsize {stepsize} must lie in (0, 1]")));
        }
        if !(self.residual_tol > 0.0) || !(self.qp_tol > 0.0) || !(self.step_tol > 0.0) {
            return Err(AdalError::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(AdalError::Config("max_iter must be positive".into()));
        }
        Ok(AdalParams { penalty, stepsize, q })
    }
}

/// Coupling rows followed by one row `v_a - v_b = 0` per consistency pair.
#[derive(Debug, Clone)]
struct Row {
    entries: Vec<(usize, usize, f64)>,
    rhs: f64,
}

fn adal_rows(scenario: &SecondStageScenario) -> Vec<Row> {
    let mut rows: Vec<Row> = scenario
        .coupling
        .iter()
        .map(|r| Row {
            entries: r.entries.clone(),
            rhs: r.rhs,
        })
        .collect();
    rows.extend(scenario.consistency.iter().map(|p| Row {
        entries: vec![(p.a.0, p.a.1, 1.0), (p.b.0, p.b.1, -1.0)],
        rhs: 0.0,
    }));
    rows
}

/// Largest number of distinct nodes appearing in one coupling row or
/// consistency pair.
pub fn coupling_degree(scenario: &SecondStageScenario) -> usize {
    adal_rows(scenario)
        .iter()
        .map(|r| {
            let mut nodes: Vec<usize> = r.entries.iter().map(|e| e.0).collect();
            nodes.sort_unstable();
            nodes.dedup();
            nodes.len()
        })
        .max()
        .unwrap_or(1)
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub iteration: usize,
    pub coupling: f64,
    pub consistency: f64,
    /// `sum_i w_i loss_i` at the primal iterate.
    pub objective: f64,
    /// Largest `|v_hat - v|` of the sweep.
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdalState {
    pub primal: Vec<Vec<f64>>,
    /// Multipliers of the coupling rows, then of the consistency pairs.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<ResidualRecord>,
}

impl AdalState {
    /// Zero multipliers and the origin clamped into each node's bounds.
    pub fn new(scenario: &SecondStageScenario) -> Self {
        let primal = scenario
            .nodes
            .iter()
            .map(|n| n.lower.iter().zip(&n.upper).map(|(l, u)| 0.0f64.clamp(*l, *u)).collect())
            .collect();
        Self {
            primal,
            duals: vec![0.0; scenario.coupling.len() + scenario.consistency.len()],
            iterations: 0,
            history: Vec::new(),
        }
    }

    pub fn coupling_duals<'a>(&'a self, scenario: &SecondStageScenario) -> &'a [f64] {
        &self.duals[..scenario.coupling.len()]
    }

    pub fn consistency_duals<'a>(&'a self, scenario: &SecondStageScenario) -> &'a [f64] {
        &self.duals[scenario.coupling.len()..]
    }

    fn check(&self, scenario: &SecondStageScenario) -> Result<(), AdalError> {
        let ok = self.primal.len() == scenario.nodes.len()
            && self.primal.iter().zip(&scenario.nodes).all(|(v, n)| v.len() == n.num_vars())
            && self.duals.len() == scenario.coupling.len() + scenario.consistency.len();
        if ok {
            Ok(())
        } else {
            Err(AdalError::Scenario("state dimensions differ from the scenario".into()))
        }
    }
}

/// Minimizer of a node's local augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution {
    pub primal: Vec<f64>,
    /// Multipliers of the node's link rows, in order.
    pub link_duals: Vec<f64>,
    /// Local augmented Lagrangian at `primal`, constants included.
    pub objective: f64,
}

/// One row restricted to a node: coefficients on free variables plus the
/// contribution of the node's fixed variables.
#[derive(Debug, Clone)]
struct NodeRow {
    row: usize,
    free: Vec<(usize, f64)>,
    dense: Vec<(usize, f64)>,
    fixed: f64,
}

/// How the node's link rows enter its subproblem.
#[derive(Debug, Clone)]
enum Links {
    /// Every link bounds a single variable: `(var, coef, bound, tighter)`
    /// with the link reading `coef * v[var] <= coef * bound`; `tighter` marks
    /// bounds stricter than the variable's own. The subproblem is a
    /// box-constrained QP.
    Bounds {
        links: Vec<(usize, f64, f64, bool)>,
        qp: BoxQp,
    },
    /// General rows, solved with the dense QP solver.
    Rows {
        problem: QpProblem,
        /// Position of each link row among the QP's eq/ineq rows.
        index: Vec<(LinkKind, usize)>,
        warm: Option<WarmStart>,
    },
}

/// Node subproblem data that does not change between sweeps.
#[derive(Debug, Clone)]
struct NodeModel {
    node: usize,
    free: Vec<usize>,
    /// Full-length vector holding the fixed values (free entries are 0).
    base: Vec<f64>,
    rows: Vec<NodeRow>,
    /// `w (l_F + Q_FX v_X)`.
    linear: DVector<f64>,
    /// `w (const + l_X v_X + 1/2 v_X' Q_XX v_X)`.
    constant: f64,
    /// `w l` and `w Q` over all variables, for full gradients.
    weighted_linear: Vec<f64>,
    weighted_quadratic: Option<DMatrix<f64>>,
    links: Links,
}

impl NodeModel {
    fn build(scenario: &SecondStageScenario, rows: &[Row], node: usize, z: &[bool], penalty: f64) -> Result<Self, AdalError> {
        let blk = &scenario.nodes[node];
        let n = blk.num_vars();
        let bound_links = blk
            .links
            .iter()
            .all(|l| l.kind == LinkKind::Le && l.local.len() == 1 && l.local[0].1 != 0.0);
        let mut lo = blk.lower.clone();
        let mut hi = blk.upper.clone();
        let mut link_bounds = Vec::new();
        if bound_links {
            for link in &blk.links {
                let (j, a) = link.local[0];
                let b = link.rhs_at(z) / a;
                let own = if a > 0.0 { blk.upper[j] } else { blk.lower[j] };
                // A bound no tighter than the variable's own carries no multiplier.
                let tighter = if a > 0.0 { b < own } else { b > own };
                link_bounds.push((j, a, b, tighter));
                if a > 0.0 {
                    hi[j] = hi[j].min(b);
                } else {
                    lo[j] = lo[j].max(b);
                }
            }
        }
        if let Some(j) = (0..n).find(|j| hi[*j] < lo[*j]) {
            return Err(AdalError::Scenario(format!("node {node}: empty bounds on variable {j}")));
        }
        let fixed_var = |j: usize| hi[j] - lo[j] <= 0.0;
        let free: Vec<usize> = (0..n).filter(|j| !fixed_var(*j)).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, j) in free.iter().enumerate() {
            pos[*j] = k;
        }
        let base: Vec<f64> = (0..n).map(|j| if fixed_var(j) { lo[j] } else { 0.0 }).collect();
        let nf = free.len();

        let mut node_rows = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if !row.entries.iter().any(|e| e.0 == node) {
                continue;
            }
            let mut dense = vec![0.0; n];
            for (i, j, a) in &row.entries {
                if *i == node {
                    dense[*j] += a;
                }
            }
            let fixed: f64 = (0..n).filter(|j| fixed_var(*j)).map(|j| dense[j] * base[j]).sum();
            let free_coef: Vec<(usize, f64)> = free
                .iter()
                .enumerate()
                .filter(|(_, j)| dense[**j] != 0.0)
                .map(|(k, j)| (k, dense[*j]))
                .collect();
            let dense_nz: Vec<(usize, f64)> = dense.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| (j, *a)).collect();
            node_rows.push(NodeRow {
                row: r,
                free: free_coef,
                dense: dense_nz,
                fixed,
            });
        }

        let w = blk.weight;
        let mut h = DMatrix::zeros(nf, nf);
        let mut linear = DVector::from_iterator(nf, free.iter().map(|j| w * blk.loss_linear[*j]));
        let mut constant = w
            * (blk.loss_const
                + (0..n).filter(|j| fixed_var(*j)).map(|j| blk.loss_linear[j] * base[j]).sum::<f64>());
        if let Some(q) = &blk.loss_quadratic {
            for (a, ja) in free.iter().enumerate() {
                for (b, jb) in free.iter().enumerate() {
                    h[(a, b)] += w * q[(*ja, *jb)];
                }
                linear[a] += w * (0..n).filter(|j| fixed_var(*j)).map(|j| q[(*ja, j)] * base[j]).sum::<f64>();
            }
            let xq: f64 = (0..n)
                .filter(|j| fixed_var(*j))
                .flat_map(|a| (0..n).filter(|j| fixed_var(*j)).map(move |b| (a, b)))
                .map(|(a, b)| base[a] * q[(a, b)] * base[b])
                .sum();
            constant += 0.5 * w * xq;
        }
        for nr in &node_rows {
            for (a, ca) in &nr.free {
                for (b, cb) in &nr.free {
                    h[(*a, *b)] += penalty * ca * cb;
                }
            }
        }

        let links = if bound_links {
            Links::Bounds {
                links: link_bounds,
                qp: BoxQp::new(
                    h.clone(),
                    DVector::from_iterator(nf, free.iter().map(|j| lo[*j])),
                    DVector::from_iterator(nf, free.iter().map(|j| hi[*j])),
                ),
            }
        } else {
            let mut eq: Vec<(Vec<f64>, f64)> = Vec::new();
            let mut ineq: Vec<(Vec<f64>, f64)> = Vec::new();
            let mut index = Vec::with_capacity(blk.links.len());
            for link in &blk.links {
                let mut coef = vec![0.0; nf];
                let mut rhs = link.rhs_at(z);
                for (j, a) in &link.local {
                    if fixed_var(*j) {
                        rhs -= a * base[*j];
                    } else {
                        coef[pos[*j]] += a;
                    }
                }
                match link.kind {
                    LinkKind::Eq => {
                        index.push((LinkKind::Eq, eq.len()));
                        eq.push((coef, rhs));
                    }
                    LinkKind::Le => {
                        index.push((LinkKind::Le, ineq.len()));
                        ineq.push((coef, rhs));
                    }
                }
            }
            let dense = |rs: &[(Vec<f64>, f64)]| {
                (
                    DMatrix::from_fn(rs.len(), nf, |r, c| rs[r].0[c]),
                    DVector::from_iterator(rs.len(), rs.iter().map(|x| x.1)),
                )
            };
            let (ea, eb) = dense(&eq);
            let (ia, ib) = dense(&ineq);
            let problem = QpProblem::new(nf)
                .with_quadratic(h.clone())
                .with_linear(linear.clone())
                .with_eq(ea, eb)
                .with_ineq(ia, ib)
                .with_lower(DVector::from_iterator(nf, free.iter().map(|j| lo[*j])))
                .with_upper(DVector::from_iterator(nf, free.iter().map(|j| hi[*j])));
            Links::Rows {
                problem,
                index,
                warm: None,
            }
        };
        Ok(Self {
            node,
            free,
            base,
            rows: node_rows,
            linear,
            constant,
            weighted_linear: blk.loss_linear.iter().map(|l| w * l).collect(),
            weighted_quadratic: blk.loss_quadratic.as_ref().map(|q| q * w),
            links,
        })
    }

    /// `a_ir . v` for every row of the node.
    fn contributions(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|nr| nr.dense.iter().map(|(j, a)| a * v[*j]).sum()).collect()
    }

    /// Solves the local problem given the row totals `sum_j a_jr v_j` of the
    /// current iterate and the node's own current block.
    fn solve(
        &mut self,
        rows: &[Row],
        totals: &[f64],
        own: &[f64],
        duals: &[f64],
        penalty: f64,
        tol: f64,
    ) -> Result<LocalSolution, AdalError> {
        let own_contrib = self.contributions(own);
        let mut c = self.linear.clone();
        let mut constant = self.constant;
        // Per row, `s` collects the other nodes' terms minus b, and
        // `t = fixed + s`.
        let mut others = Vec::with_capacity(self.rows.len());
        for (nr, own_r) in self.rows.iter().zip(&own_contrib) {
            let s = totals[nr.row] - own_r - rows[nr.row].rhs;
            let t = nr.fixed + s;
            let lam = duals[nr.row];
            for (k, a) in &nr.free {
                c[*k] += (lam + penalty * t) * a;
            }
            constant += lam * nr.fixed + 0.5 * penalty * t * t;
            others.push(s);
        }
        let node = self.node;
        let (x, objective, link_duals) = match &mut self.links {
            Links::Rows { problem, index, warm } => {
                problem.linear = c;
                let (sol, ws) = qp::solve_qp_warm(problem, tol, warm.as_ref()).map_err(|source| AdalError::Qp { node, source })?;
                if sol.status != QpStatus::Optimal {
                    *warm = None;
                    return Err(AdalError::Subproblem { node, status: sol.status });
                }
                *warm = ws;
                let duals = index
                    .iter()
                    .map(|(kind, i)| match kind {
                        LinkKind::Eq => sol.eq_duals[*i],
                        LinkKind::Le => sol.ineq_duals[*i],
                    })
                    .collect::<Vec<f64>>();
                (sol.x, sol.objective, Some(duals))
            }
            Links::Bounds { qp, .. } => {
                let sol = qp.solve(&c, tol);
                if sol.status != QpStatus::Optimal {
                    return Err(AdalError::Subproblem { node, status: sol.status });
                }
                (sol.x, sol.objective, None)
            }
        };
        let mut primal = self.base.clone();
        for (k, j) in self.free.iter().enumerate() {
            primal[*j] = x[k];
        }
        let link_duals = match link_duals {
            Some(d) => d,
            None => self.bound_link_duals(&primal, &others, duals, penalty),
        };
        Ok(LocalSolution {
            primal,
            link_duals,
            objective: objective + constant,
        })
    }

    /// Multipliers of single-variable links from the full gradient of the
    /// local augmented Lagrangian at `v`.
    fn bound_link_duals(&self, v: &[f64], others: &[f64], duals: &[f64], penalty: f64) -> Vec<f64> {
        let Links::Bounds { links, .. } = &self.links else {
            return Vec::new();
        };
        let mut grad = self.weighted_linear.clone();
        if let Some(q) = &self.weighted_quadratic {
            let qv = q * DVector::from_column_slice(v);
            for (g, a) in grad.iter_mut().zip(qv.iter()) {
                *g += a;
            }
        }
        for ((nr, own_r), s) in self.rows.iter().zip(self.contributions(v)).zip(others) {
            let m = duals[nr.row] + penalty * (own_r + s);
            for (j, a) in &nr.dense {
                grad[*j] += m * a;
            }
        }
        let mut taken = vec![false; v.len()];
        links
            .iter()
            .map(|&(j, a, b, tighter)| {
                let active = tighter && (v[j] - b).abs() <= 1e-12 * (1.0 + b.abs());
                if !active || taken[j] {
                    return 0.0;
                }
                taken[j] = true;
                if a > 0.0 {
                    (-grad[j]).max(0.0) / a
                } else {
                    grad[j].max(0.0) / -a
                }
            })
            .collect()
    }
}

fn row_totals(rows: &[Row], primal: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|r| r.entries.iter().map(|(i, j, a)| a * primal[*i][*j]).sum())
        .collect()
}

/// Infinity norms of the coupling and consistency residuals, and the
/// residual vector itself.
fn residuals(rows: &[Row], num_coupling: usize, primal: &[Vec<f64>]) -> (f64, f64, Vec<f64>) {
    let r: Vec<f64> = row_totals(rows, primal).iter().zip(rows).map(|(t, row)| t - row.rhs).collect();
    let norm = |s: &[f64]| s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (norm(&r[..num_coupling]), norm(&r[num_coupling..]), r)
}

/// Local augmented Lagrangian minimizer of `node` against `state`.
pub fn local_subproblem(
    node: usize,
    scenario: &SecondStageScenario,
    state: &AdalState,
    config: &AdalConfig,
    z: &[bool],
) -> Result<LocalSolution, AdalError> {
    state.check(scenario)?;
    if node >= scenario.nodes.len() {
        return Err(AdalError::Scenario(format!("node {node} out of range")));
    }
    let params = config.resolve(coupling_degree(scenario))?;
    let rows = adal_rows(scenario);
    let mut model = NodeModel::build(scenario, &rows, node, z, params.penalty)?;
    let totals = row_totals(&rows, &state.primal);
    model.solve(&rows, &totals, &state.primal[node], &state.duals, params.penalty, config.qp_tol)
}

/// Iteration engine holding the per-node models for one selection.
struct Engine<'a> {
    scenario: &'a SecondStageScenario,
    rows: Vec<Row>,
    models: Vec<NodeModel>,
    params: AdalParams,
    config: AdalConfig,
}

/// Output of one sweep besides the updated state.
struct Sweep {
    local: Vec<LocalSolution>,
    /// Multipliers used by the sweep's local solves.
    duals_used: Vec<f64>,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a SecondStageScenario, config: &AdalConfig, z: &[bool]) -> Result<Self, AdalError> {
        scenario
            .validate(z.len())
            .map_err(|e| AdalError::Scenario(e.to_string()))?;
        let params = config.resolve(coupling_degree(scenario))?;
        let rows = adal_rows(scenario);
        let models = (0..scenario.nodes.len())
            .map(|i| NodeModel::build(scenario, &rows, i, z, params.penalty))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            scenario,
            rows,
            models,
            params,
            config: *config,
        })
    }

    fn sweep(&mut self, state: &mut AdalState) -> Result<Sweep, AdalError> {
        let totals = row_totals(&self.rows, &state.primal);
        let (rows, duals, primal) = (&self.rows, &state.duals, &state.primal);
        let (penalty, tol) = (self.params.penalty, self.config.qp_tol);
        let local: Vec<LocalSolution> = self
            .models
            .par_iter_mut()
            .map(|m| {
                let own = &primal[m.node];
                m.solve(rows, &totals, own, duals, penalty, tol)
            })
            .collect::<Result<_, _>>()?;
        let ks = self.params.stepsize;
        let mut step = 0.0f64;
        for (v, l) in state.primal.iter_mut().zip(&local) {
            for (a, b) in v.iter_mut().zip(&l.primal) {
                step = step.max((b - *a).abs());
                *a += ks * (b - *a);
            }
        }
        let duals_used = state.duals.clone();
        let nc = self.scenario.coupling.len();
        let (rc, rz, r) = residuals(&self.rows, nc, &state.primal);
        let tol = self.config.residual_tol;
        if rc > tol || rz > tol {
            let f = self.params.penalty * ks;
            for (lam, res) in state.duals.iter_mut().zip(&r) {
                *lam += f * res;
            }
        }
        state.iterations += 1;
        state.history.push(ResidualRecord {
            iteration: state.iterations,
            coupling: rc,
            consistency: rz,
            objective: self.scenario.objective(&state.primal),
            step,
        });
        Ok(Sweep { local, duals_used })
    }
}

/// One Jacobi sweep: local solves against `state`, relaxed primal step, and
/// a multiplier step when the residuals exceed the tolerance.
pub fn adal_iterate(
    scenario: &SecondStageScenario,
    state: &AdalState,
    config: &AdalConfig,
    z: &[bool],
) -> Result<AdalState, AdalError> {
    state.check(scenario)?;
    let mut engine = Engine::new(scenario, config, z)?;
    let mut next = state.clone();
    engine.sweep(&mut next)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdalStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdalResult {
    pub status: AdalStatus,
    pub primal: Vec<Vec<f64>>,
    pub coupling_duals: Vec<f64>,
    pub consistency_duals: Vec<f64>,
    /// `sum_i Lambda_i(v_hat_i) - <lambda, b>`.
    pub value: f64,
    /// `sum_i w_i loss_i` at `primal`.
    pub objective: f64,
    /// Local augmented Lagrangian values of the last sweep.
    pub node_values: Vec<f64>,
    pub node_losses: Vec<f64>,
    pub link_duals: Vec<Vec<f64>>,
    pub iterations: usize,
    pub history: Vec<ResidualRecord>,
}

impl AdalResult {
    /// Subgradient of the scenario value with respect to the selection:
    /// `sum pi_r T_rk` over all link rows.
    pub fn subgradient(&self, scenario: &SecondStageScenario, k0: usize) -> Vec<f64> {
        let mut g = vec![0.0; k0];
        for (node, pis) in scenario.nodes.iter().zip(&self.link_duals) {
            for (link, pi) in node.links.iter().zip(pis) {
                for (k, t) in &link.first_stage {
                    g[*k] += pi * t;
                }
            }
        }
        g
    }
}

/// Runs sweeps from `AdalState::new` until the coupling and consistency
/// residuals and the largest local step are all within `residual_tol`, or
/// `max_iter` sweeps have been made.
pub fn run_adal(scenario: &SecondStageScenario, config: &AdalConfig, z: &[bool]) -> Result<AdalResult, AdalError> {
    run_adal_from(scenario, config, z, AdalState::new(scenario))
}

/// `run_adal` from a given primal/dual starting point; `max_iter` counts
/// sweeps made by this call.
pub fn run_adal_from(
    scenario: &SecondStageScenario,
    config: &AdalConfig,
    z: &[bool],
    initial: AdalState,
) -> Result<AdalResult, AdalError> {
    initial.check(scenario)?;
    let mut engine = Engine::new(scenario, config, z)?;
    let mut state = AdalState {
        iterations: 0,
        history: Vec::new(),
        ..initial
    };
    let tol = config.residual_tol;
    let mut converged = false;
    let mut last = None;
    while state.iterations < config.max_iter {
        let sweep = engine.sweep(&mut state)?;
        let rec = state.history.last().expect("sweep records residuals");
        last = Some(sweep);
        if rec.coupling <= tol && rec.consistency <= tol && rec.step <= config.step_tol {
            converged = true;
            break;
        }
    }
    let sweep = last.expect("at least one sweep");
    let lam_b: f64 = sweep.duals_used.iter().zip(&engine.rows).map(|(l, r)| l * r.rhs).sum();
    let node_values: Vec<f64> = sweep.local.iter().map(|l| l.objective).collect();
    let nc = scenario.coupling.len();
    Ok(AdalResult {
        status: if converged {
            AdalStatus::Converged
        } else {
            AdalStatus::NotConverged
        },
        value: node_values.iter().sum::<f64>() - lam_b,
        objective: scenario.objective(&state.primal),
        node_losses: scenario.nodes.iter().zip(&state.primal).map(|(n, v)| n.loss(v)).collect(),
        link_duals: sweep.local.into_iter().map(|l| l.link_duals).collect(),
        node_values,
        coupling_duals: state.duals[..nc].to_vec(),
        consistency_duals: state.duals[nc..].to_vec(),
        primal: state.primal,
        iterations: state.iterations,
        history: state.history,
    })
}

/// `iteration,coupling_residual,consistency_residual,objective` rows.
pub fn residual_csv(history: &[ResidualRecord]) -> String {
    let mut out = String::from("iteration,coupling_residual,consistency_residual,objective\n");
    for r in history {
        let _ = writeln!(out, "{},{:e},{:e},{}", r.iteration, r.coupling, r.consistency, r.objective);
    }
    out
}

/// Second-stage oracle backed by `run_adal`. With `warm_start`, each
/// scenario starts from its last converged state (for instance at the
/// previous first-stage selection) instead of the origin.
#[derive(Debug, Default)]
pub struct DistributedOracle {
    pub config: AdalConfig,
    pub warm_start: bool,
    states: Mutex<HashMap<usize, AdalState>>,
}

impl DistributedOracle {
    pub fn new(config: AdalConfig, warm_start: bool) -> Self {
        Self {
            config,
            warm_start,
            states: Mutex::default(),
        }
    }

    fn start(&self, index: usize, scenario: &SecondStageScenario) -> AdalState {
        let cached = self.warm_start.then(|| self.states.lock().expect("state lock").get(&index).cloned()).flatten();
        cached
            .filter(|st| st.check(scenario).is_ok())
            .unwrap_or_else(|| AdalState::new(scenario))
    }
}

impl SecondStageOracle for DistributedOracle {
    fn solve(&self, index: usize, scenario: &SecondStageScenario, z: &[bool]) -> Result<ScenarioOutcome, TwoStageError> {
        let start = self.start(index, scenario);
        let res = run_adal_from(scenario, &self.config, z, start).map_err(|e| TwoStageError::Oracle {
            scenario: index,
            detail: e.to_string(),
        })?;
        if res.status != AdalStatus::Converged {
            let last = res.history.last().copied();
            return Err(TwoStageError::NotConverged {
                scenario: index,
                detail: format!("{} sweeps, last residuals {:?}", res.iterations, last),
                trace: Vec::new(),
            });
        }
        if self.warm_start {
            let mut duals = res.coupling_duals.clone();
            duals.extend_from_slice(&res.consistency_duals);
            self.states.lock().expect("state lock").insert(
                index,
                AdalState {
                    primal: res.primal.clone(),
                    duals,
                    iterations: 0,
                    history: Vec::new(),
                },
            );
        }
        Ok(ScenarioOutcome {
            value: res.value,
            subgradient: res.subgradient(scenario, z.len()),
            node_losses: res.node_losses,
            solution: res.primal,
            iterations: res.iterations,
        })
    }
}
