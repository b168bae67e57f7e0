//! Two-stage information exchange in a robot network: robots gather
//! information, relay it over distance-dependent lossy links, and deliver it
//! to reporting points chosen in the first stage.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::RiskSpec;
use crate::two_stage::{
    ConsistencyPair, CouplingRow, LinkKind, LinkRow, NodeBlock, SecondStageScenario, TwoStageInstance,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WirelessError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("scenario network is not connected: {0}")]
    Connectivity(String),
    #[error("no connected scenario after {0} draws")]
    Resampling(usize),
}

/// Link quality: 1 up to `inner`, 0 beyond `outer`, and the C1 cubic
/// `2t^3 - 3t^2 + 1`, `t = (d - inner) / (outer - inner)`, in between.
pub fn rate(distance: f64, inner: f64, outer: f64) -> Result<f64, WirelessError> {
    if !(inner > 0.0 && inner < outer) || !outer.is_finite() {
        return Err(WirelessError::Parameter(format!("radii must satisfy 0 < {inner} < {outer}")));
    }
    if !(distance >= 0.0) {
        return Err(WirelessError::Parameter(format!("distance {distance} must be nonnegative")));
    }
    Ok(rate_unchecked(distance, inner, outer))
}

fn rate_unchecked(d: f64, inner: f64, outer: f64) -> f64 {
    if d <= inner {
        1.0
    } else if d > outer {
        0.0
    } else {
        let t = (d - inner) / (outer - inner);
        2.0 * t * t * t - 3.0 * t * t + 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirelessConfig {
    pub num_robots: usize,
    pub budget: usize,
    pub num_scenarios: usize,
    pub map_lower: [f64; 2],
    pub map_upper: [f64; 2],
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Candidate reporting-point positions; their count is K0.
    pub candidates: Vec<[f64; 2]>,
    pub source_mean: [f64; 2],
    pub source_cov: [[f64; 2]; 2],
    pub info_scale: f64,
    pub capacity: f64,
    pub loss_weights: [f64; 2],
    /// Robot weights; uniform `1/J` when absent.
    #[serde(default)]
    pub robot_weights: Option<Vec<f64>>,
    /// Logical bound on transmissions to a reporting point; `capacity` when absent.
    #[serde(default)]
    pub big_m: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_max_draws")]
    pub max_draws: usize,
}

fn default_max_draws() -> usize {
    1000
}

impl WirelessConfig {
    /// Fifty robots on a 2x2 map, four candidate points, 200 scenarios.
    pub fn large() -> Self {
        Self {
            num_robots: 50,
            budget: 2,
            num_scenarios: 200,
            map_lower: [0.0, 0.0],
            map_upper: [2.0, 2.0],
            inner_radius: 0.3,
            outer_radius: 0.6,
            candidates: vec![[0.5, 0.3], [1.5, 0.25], [1.75, 0.5], [1.0, 0.2]],
            source_mean: [0.5, 1.75],
            source_cov: [[0.25, 0.0], [0.0, 0.25]],
            info_scale: 1.0,
            capacity: 1.0,
            loss_weights: [0.8, 0.2],
            robot_weights: None,
            big_m: None,
            seed: Some(2024),
            max_draws: default_max_draws(),
        }
    }

    /// Twenty robots on a 1.5x1.5 map, 100 scenarios; candidate points and
    /// source are the large preset's scaled by 0.75.
    pub fn desk() -> Self {
        let s = 0.75;
        let base = Self::large();
        Self {
            num_robots: 20,
            num_scenarios: 100,
            map_upper: [1.5, 1.5],
            candidates: base.candidates.iter().map(|c| [c[0] * s, c[1] * s]).collect(),
            source_mean: [base.source_mean[0] * s, base.source_mean[1] * s],
            source_cov: [[0.25 * s * s, 0.0], [0.0, 0.25 * s * s]],
            ..base
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "large" => Some(Self::large()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn big_m(&self) -> f64 {
        self.big_m.unwrap_or(self.capacity)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.robot_weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.num_robots as f64; self.num_robots])
    }

    pub fn validate(&self) -> Result<(), WirelessError> {
        let bad = |m: String| Err(WirelessError::Parameter(m));
        let j = self.num_robots;
        let k0 = self.num_candidates();
        if j == 0 {
            return bad("at least one robot is required".into());
        }
        if self.num_scenarios == 0 {
            return bad("at least one scenario is required".into());
        }
        if k0 < 2 || self.budget < 1 || self.budget >= k0 {
            return bad(format!("budget {} must satisfy 1 <= K < K0 = {k0}", self.budget));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius < self.outer_radius && self.outer_radius.is_finite()) {
            return bad(format!("radii must satisfy 0 < {} < {}", self.inner_radius, self.outer_radius));
        }
        if !(0..2).all(|d| self.map_lower[d] < self.map_upper[d]) {
            return bad("map bounds are empty".into());
        }
        let s = self.source_cov;
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        if (s[0][1] - s[1][0]).abs() > 1e-12 || s[0][0] <= 0.0 || det <= 0.0 {
            return bad("source covariance must be symmetric positive definite".into());
        }
        if !(self.info_scale > 0.0) || !(self.capacity > 0.0) {
            return bad("information scale and capacity must be positive".into());
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0) {
                return bad(format!("big-M {m} must be positive"));
            }
        }
        let [c1, c2] = self.loss_weights;
        if !(c1 > 0.0 && c2 > 0.0) || (c1 + c2 - 1.0).abs() > 1e-9 {
            return bad(format!("loss weights ({c1}, {c2}) must be positive and sum to 1"));
        }
        let w = self.weights();
        if w.len() != j || w.iter().any(|v| !(*v > 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("robot weights must be positive, one per robot, summing to 1".into());
        }
        if self.max_draws == 0 {
            return bad("max_draws must be positive".into());
        }
        Ok(())
    }

    /// Gaussian information field `w / (2 pi |S|^1/2) exp(-1/2 (d-C)' S^-1 (d-C))`.
    pub fn info_rate(&self, position: [f64; 2]) -> Result<f64, WirelessError> {
        info_rate(position, self.source_mean, self.source_cov, self.info_scale)
    }
}

pub fn info_rate(position: [f64; 2], mean: [f64; 2], cov: [[f64; 2]; 2], scale: f64) -> Result<f64, WirelessError> {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if !(det > 0.0) || !(cov[0][0] > 0.0) {
        return Err(WirelessError::Parameter("covariance must be positive definite".into()));
    }
    let dx = position[0] - mean[0];
    let dy = position[1] - mean[1];
    let quad = (cov[1][1] * dx * dx - (cov[0][1] + cov[1][0]) * dx * dy + cov[0][0] * dy * dy) / det;
    Ok(scale / (2.0 * std::f64::consts::PI * det.sqrt()) * (-0.5 * quad).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirelessScenario {
    pub positions: Vec<[f64; 2]>,
    /// `J x (J + K0)`: robots first, then candidate points.
    pub rate: Vec<Vec<f64>>,
    pub info: Vec<f64>,
}

impl WirelessScenario {
    pub fn from_positions(config: &WirelessConfig, positions: Vec<[f64; 2]>) -> Result<Self, WirelessError> {
        let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let (l, u) = (config.inner_radius, config.outer_radius);
        let rate = positions
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                positions
                    .iter()
                    .enumerate()
                    .map(|(j, &q)| if i == j { 1.0 } else { rate_unchecked(dist(p, q), l, u) })
                    .chain(config.candidates.iter().map(|&c| rate_unchecked(dist(p, c), l, u)))
                    .collect()
            })
            .collect();
        let info = positions
            .iter()
            .map(|&p| config.info_rate(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { positions, rate, info })
    }

    pub fn num_robots(&self) -> usize {
        self.positions.len()
    }
}

/// Robot graph (edges where `R_ij > 0`) is connected and some robot reaches
/// a candidate point.
pub fn check_connectivity(scenario: &WirelessScenario) -> bool {
    connectivity_problem(scenario).is_none()
}

fn connectivity_problem(scenario: &WirelessScenario) -> Option<String> {
    let j = scenario.num_robots();
    if j == 0 {
        return Some("no robots".into());
    }
    let mut seen = vec![false; j];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for k in 0..j {
            if !seen[k] && (scenario.rate[i][k] > 0.0 || scenario.rate[k][i] > 0.0) {
                seen[k] = true;
                queue.push_back(k);
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Some(format!("robot {i} is not reachable from robot 0"));
    }
    let reaches_candidate = scenario.rate.iter().any(|row| row[j..].iter().any(|r| *r > 0.0));
    (!reaches_candidate).then(|| "no robot is in range of a candidate point".into())
}

/// Indices of a node's variables: `(y, T_1..T_{J+K0}, x, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLayout {
    pub num_robots: usize,
    pub num_candidates: usize,
}

impl NodeLayout {
    pub const Y: usize = 0;

    pub fn transmit(&self, target: usize) -> usize {
        1 + target
    }

    pub fn proportion(&self) -> usize {
        1 + self.num_robots + self.num_candidates
    }

    pub fn slack(&self) -> usize {
        self.proportion() + 1
    }

    pub fn len(&self) -> usize {
        self.num_robots + self.num_candidates + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Second-stage program of one scenario, split into one node per robot.
pub fn assemble_second_stage(
    scenario: &WirelessScenario,
    config: &WirelessConfig,
    probability: f64,
) -> Result<SecondStageScenario, WirelessError> {
    if let Some(why) = connectivity_problem(scenario) {
        return Err(WirelessError::Connectivity(why));
    }
    let j_count = scenario.num_robots();
    let k0 = config.num_candidates();
    if scenario.rate.iter().any(|row| row.len() != j_count + k0) || scenario.info.len() != j_count {
        return Err(WirelessError::Parameter("scenario shape does not match the configuration".into()));
    }
    let lay = NodeLayout {
        num_robots: j_count,
        num_candidates: k0,
    };
    let [c1, c2] = config.loss_weights;
    let weights = config.weights();
    if weights.len() != j_count {
        return Err(WirelessError::Parameter("robot weights do not match the scenario".into()));
    }
    let m = config.big_m();
    let r = &scenario.rate;
    let active = |i: usize, t: usize| t != i && r[i][t] > 0.0;

    let mut nodes = Vec::with_capacity(j_count);
    for i in 0..j_count {
        let n = lay.len();
        let mut lin = vec![0.0; n];
        lin[NodeLayout::Y] = c1;
        lin[lay.proportion()] = -c2;
        let mut lower = vec![0.0; n];
        let mut upper = vec![f64::INFINITY; n];
        lower[lay.proportion()] = 0.0;
        upper[lay.proportion()] = 1.0;
        let mut links = Vec::new();
        for t in 0..j_count + k0 {
            if !active(i, t) {
                upper[lay.transmit(t)] = 0.0;
            } else if t >= j_count {
                links.push(LinkRow {
                    local: vec![(lay.transmit(t), 1.0)],
                    first_stage: vec![(t - j_count, -m)],
                    rhs: 0.0,
                    kind: LinkKind::Le,
                });
            }
        }
        nodes.push(NodeBlock {
            weight: weights[i],
            loss_const: c2,
            loss_linear: lin,
            loss_quadratic: None,
            lower,
            upper,
            links,
        });
    }

    let mut coupling = Vec::with_capacity(2 * j_count + 1);
    // Flow conservation: y_j + sum_t T_jt - sum_i R_ij T_ij = r_j.
    for j in 0..j_count {
        let mut entries = vec![(j, NodeLayout::Y, 1.0)];
        for t in 0..j_count + k0 {
            if active(j, t) {
                entries.push((j, lay.transmit(t), 1.0));
            }
        }
        for i in 0..j_count {
            if active(i, j) {
                entries.push((i, lay.transmit(j), -r[i][j]));
            }
        }
        coupling.push(CouplingRow {
            entries,
            rhs: scenario.info[j],
        });
    }
    // Capacity: incoming + outgoing + u_j = a.
    for j in 0..j_count {
        let mut entries = Vec::new();
        for i in 0..j_count {
            if active(i, j) {
                entries.push((i, lay.transmit(j), 1.0));
            }
        }
        for t in 0..j_count + k0 {
            if active(j, t) {
                entries.push((j, lay.transmit(t), 1.0));
            }
        }
        entries.push((j, lay.slack(), 1.0));
        coupling.push(CouplingRow {
            entries,
            rhs: config.capacity,
        });
    }
    // Delivered proportion: sum_i x_i r_i - sum_i sum_k R_ik T_ik = 0.
    let mut entries = Vec::new();
    for i in 0..j_count {
        entries.push((i, lay.proportion(), scenario.info[i]));
        for k in 0..k0 {
            if active(i, j_count + k) {
                entries.push((i, lay.transmit(j_count + k), -r[i][j_count + k]));
            }
        }
    }
    coupling.push(CouplingRow { entries, rhs: 0.0 });

    let mut consistency = Vec::new();
    for i in 0..j_count {
        for j in i + 1..j_count {
            if r[i][j] > 0.0 || r[j][i] > 0.0 {
                consistency.push(ConsistencyPair {
                    a: (i, lay.proportion()),
                    b: (j, lay.proportion()),
                });
            }
        }
    }
    Ok(SecondStageScenario {
        probability,
        nodes,
        coupling,
        consistency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirelessInstance {
    pub config: WirelessConfig,
    pub seed: u64,
    pub scenarios: Vec<WirelessScenario>,
}

impl WirelessInstance {
    pub fn layout(&self) -> NodeLayout {
        NodeLayout {
            num_robots: self.config.num_robots,
            num_candidates: self.config.num_candidates(),
        }
    }

    pub fn to_two_stage(&self, risk: RiskSpec) -> Result<TwoStageInstance, WirelessError> {
        let s = self.scenarios.len();
        let scenarios = self
            .scenarios
            .iter()
            .map(|sc| assemble_second_stage(sc, &self.config, 1.0 / s as f64))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TwoStageInstance {
            num_first_stage: self.config.num_candidates(),
            budget: self.config.budget,
            risk,
            first_stage_cost: vec![0.0; self.config.num_candidates()],
            scenarios,
        })
    }
}

/// Draws `num_scenarios` connected scenarios with i.i.d. uniform robot
/// positions. `seed` overrides the configured seed.
pub fn generate_instance(config: &WirelessConfig, seed: u64) -> Result<WirelessInstance, WirelessError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenarios = Vec::with_capacity(config.num_scenarios);
    for _ in 0..config.num_scenarios {
        let mut draws = 0;
        loop {
            if draws == config.max_draws {
                return Err(WirelessError::Resampling(draws));
            }
            draws += 1;
            let positions: Vec<[f64; 2]> = (0..config.num_robots)
                .map(|_| {
                    [
                        rng.gen_range(config.map_lower[0]..config.map_upper[0]),
                        rng.gen_range(config.map_lower[1]..config.map_upper[1]),
                    ]
                })
                .collect();
            let sc = WirelessScenario::from_positions(config, positions)?;
            if check_connectivity(&sc) {
                scenarios.push(sc);
                break;
            }
        }
    }
    Ok(WirelessInstance {
        config: config.clone(),
        seed,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::two_stage::{solve_second_stage_centralized, feasible_selections};
    use approx::assert_abs_diff_eq;

    fn two_robot_config() -> WirelessConfig {
        WirelessConfig {
            num_robots: 2,
            budget: 1,
            num_scenarios: 1,
            candidates: vec![[0.2, 0.0], [5.0, 5.0]],
            ..WirelessConfig::large()
        }
    }

    #[test]
    fn rate_values() {
        assert_eq!(rate(0.1, 0.3, 0.6).unwrap(), 1.0);
        assert_eq!(rate(0.8, 0.3, 0.6).unwrap(), 0.0);
        assert_abs_diff_eq!(rate(0.45, 0.3, 0.6).unwrap(), 0.5, epsilon = 1e-15);
        assert!(rate(0.1, 0.6, 0.3).is_err());
        assert!(rate(-1.0, 0.3, 0.6).is_err());
        let mut prev = 1.0;
        for k in 0..=1000 {
            let d = k as f64 * 1e-3;
            let v = rate(d, 0.3, 0.6).unwrap();
            assert!(v <= prev + 1e-15);
            assert!((v - prev).abs() < 0.01, "jump at {d}");
            prev = v;
        }
    }

    #[test]
    fn info_rate_values() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let two_pi = 2.0 * std::f64::consts::PI;
        assert_abs_diff_eq!(info_rate([0.5, 1.75], [0.5, 1.75], id, two_pi).unwrap(), 1.0, epsilon = 1e-15);
        assert!(info_rate([10.5, 1.75], [0.5, 1.75], id, two_pi).unwrap() < 1e-20);
        let cov = [[4.0, 0.0], [0.0, 1.0]];
        let peak = info_rate([0.0, 0.0], [0.0, 0.0], cov, 1.0).unwrap();
        assert_abs_diff_eq!(
            info_rate([2.0, 0.0], [0.0, 0.0], cov, 1.0).unwrap(),
            (-0.5f64).exp() * peak,
            epsilon = 1e-15
        );
        assert!(info_rate([0.0, 0.0], [0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]], 1.0).is_err());
    }

    #[test]
    fn two_robot_matrix_pattern() {
        let cfg = two_robot_config();
        let sc = WirelessScenario::from_positions(&cfg, vec![[0.0, 0.0], [0.1, 0.0]]).unwrap();
        let ss = assemble_second_stage(&sc, &cfg, 1.0).unwrap();
        let lay = NodeLayout {
            num_robots: 2,
            num_candidates: 2,
        };
        // Row of robot 0 in the flow block, restricted to node 0: y, T_01 and
        // T_0,cand0 carry 1; T_00 (1 - R_00 = 0), the out-of-range
        // candidate, x and u carry nothing.
        let mut a0 = vec![0.0; lay.len()];
        for (i, v, c) in &ss.coupling[0].entries {
            if *i == 0 {
                a0[*v] += c;
            }
        }
        assert_eq!(a0, vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        // Row of robot 1 restricted to node 0: -R_01 at T_01.
        let mut a1 = vec![0.0; lay.len()];
        for (i, v, c) in &ss.coupling[1].entries {
            if *i == 0 {
                a1[*v] += c;
            }
        }
        assert_eq!(a1, vec![0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ss.consistency.len(), 1);
    }

    #[test]
    fn connectivity_checks() {
        let mut cfg = two_robot_config();
        cfg.num_robots = 3;
        let chain = WirelessScenario::from_positions(&cfg, vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]]).unwrap();
        assert!(check_connectivity(&chain));
        let split = WirelessScenario::from_positions(&cfg, vec![[0.0, 0.0], [0.1, 0.0], [3.0, 3.0]]).unwrap();
        assert!(!check_connectivity(&split));
        assert!(matches!(
            assemble_second_stage(&split, &cfg, 1.0),
            Err(WirelessError::Connectivity(_))
        ));
        cfg.num_robots = 1;
        let single = WirelessScenario::from_positions(&cfg, vec![[0.2, 0.1]]).unwrap();
        assert!(check_connectivity(&single));
        let far = WirelessScenario::from_positions(&cfg, vec![[3.0, 3.0]]).unwrap();
        assert!(!check_connectivity(&far));
    }

    #[test]
    fn no_active_point_delivers_nothing() {
        let cfg = WirelessConfig::desk();
        let inst = generate_instance(&cfg, 3).unwrap();
        let sc = &inst.scenarios[0];
        let ss = assemble_second_stage(sc, &cfg, 1.0).unwrap();
        let lay = inst.layout();
        let o = solve_second_stage_centralized(0, &ss, &[false; 4], 1e-9).unwrap();
        let [c1, c2] = cfg.loss_weights;
        let wy: f64 = o.solution.iter().zip(cfg.weights()).map(|(v, w)| w * v[NodeLayout::Y]).sum();
        for v in &o.solution {
            assert!(v[lay.proportion()].abs() < 1e-9);
        }
        assert_abs_diff_eq!(o.value, c1 * wy + c2, epsilon = 1e-9);
        assert!(o.value >= c2 - 1e-12);
    }

    #[test]
    fn optimal_solutions_satisfy_model_identities() {
        let cfg = WirelessConfig::desk();
        let inst = generate_instance(&cfg, 5).unwrap();
        let lay = inst.layout();
        let j = cfg.num_robots;
        for sc in inst.scenarios.iter().take(5) {
            let ss = assemble_second_stage(sc, &cfg, 1.0).unwrap();
            let mut prev: Option<(Vec<bool>, f64)> = None;
            for z in feasible_selections(4, cfg.budget) {
                let o = solve_second_stage_centralized(0, &ss, &z, 1e-9).unwrap();
                let v = &o.solution;
                for i in 0..j {
                    let sent: f64 = (0..j + 4).map(|t| v[i][lay.transmit(t)]).sum();
                    let recv: f64 = (0..j).map(|k| sc.rate[k][i] * v[k][lay.transmit(i)]).sum();
                    assert!((v[i][NodeLayout::Y] - (sc.info[i] + recv - sent)).abs() < 1e-7);
                    let x = v[i][lay.proportion()];
                    assert!((-1e-12..=1.0 + 1e-12).contains(&x));
                }
                let delivered: f64 = (0..j)
                    .flat_map(|i| (0..4).map(move |k| (i, k)))
                    .map(|(i, k)| sc.rate[i][j + k] * v[i][lay.transmit(j + k)])
                    .sum();
                let weighted: f64 = (0..j).map(|i| v[i][lay.proportion()] * sc.info[i]).sum();
                assert!((delivered - weighted).abs() < 1e-7);
                if let Some((pz, pv)) = &prev {
                    // Adding a point to a subset never increases the value.
                    if pz.iter().zip(&z).all(|(a, b)| !*a || *b) {
                        assert!(o.value <= pv + 1e-9);
                    }
                }
                prev = Some((z, o.value));
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_shaped() {
        let cfg = WirelessConfig::desk();
        let a = generate_instance(&cfg, 9).unwrap();
        let b = generate_instance(&cfg, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.scenarios.len(), 100);
        assert_eq!(a.scenarios[0].rate[0].len(), 24);
        let json = serde_json::to_string(&a).unwrap();
        let back: WirelessInstance = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
        for sc in &a.scenarios {
            assert!(check_connectivity(sc));
            for i in 0..20 {
                assert_eq!(sc.rate[i][i], 1.0);
                for k in 0..20 {
                    assert_eq!(sc.rate[i][k], sc.rate[k][i]);
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = WirelessConfig::desk();
        cfg.num_robots = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = WirelessConfig::desk();
        cfg.loss_weights = [0.5, 0.6];
        assert!(cfg.validate().is_err());
        let mut cfg = WirelessConfig::desk();
        cfg.budget = 4;
        assert!(cfg.validate().is_err());
        assert!(WirelessConfig::large().validate().is_ok());
        assert!(WirelessConfig::preset("nope").is_none());
    }
}
