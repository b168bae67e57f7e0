//! Multivariate comparison measures for discrete random vectors: the
//! p-efficient frontier (multivariate VaR), the conditional expectation over
//! the p-level set (MAVaR) and the scalarized vector AVaR (VMAVaR).
//!
//! For a discrete distribution the distribution function only jumps on the
//! cross product of realized marginal values, so every search runs over that
//! grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{dot, PROB_TOL};
use crate::systemic::{AggregationWeights, VectorDistribution};

/// Largest candidate grid enumerated before giving up.
pub const MAX_GRID_POINTS: usize = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MultivariateError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("candidate grid has {0} points, above the limit of {MAX_GRID_POINTS}")]
    GridTooLarge(usize),
    #[error("conditioning event has zero probability")]
    DegenerateEvent,
}

/// Minimal points `v` with `P(X <= v) >= level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PEfficientFrontier {
    pub level: f64,
    pub points: Vec<Vec<f64>>,
}

impl PEfficientFrontier {
    /// Whether `x >= v` componentwise for some frontier point `v`, i.e.
    /// whether `x` lies in the level set `Z_p`.
    pub fn dominates_some(&self, x: &[f64]) -> bool {
        self.points
            .iter()
            .any(|v| v.iter().zip(x).all(|(vi, xi)| xi >= vi))
    }
}

/// Sorted distinct marginal values and each scenario's rank in them.
struct Grid {
    axes: Vec<Vec<f64>>,
    ranks: Vec<Vec<usize>>,
    strides: Vec<usize>,
    size: usize,
}

impl Grid {
    fn new(x: &VectorDistribution) -> Result<Self, MultivariateError> {
        let m = x.dim();
        let mut axes = Vec::with_capacity(m);
        for i in 0..m {
            let mut vals: Vec<f64> = x.realizations().iter().map(|r| r[i]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            axes.push(vals);
        }
        let mut size: usize = 1;
        for a in &axes {
            size = size
                .checked_mul(a.len())
                .filter(|s| *s <= MAX_GRID_POINTS)
                .ok_or_else(|| {
                    MultivariateError::GridTooLarge(
                        axes.iter().map(Vec::len).fold(1usize, |s, n| s.saturating_mul(n)),
                    )
                })?;
        }
        // row-major with the last coordinate fastest, so index order is lexicographic
        let mut strides = vec![1; m];
        for i in (0..m.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        let ranks = x
            .realizations()
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&axes)
                    .map(|(v, axis)| axis.partition_point(|a| a < v))
                    .collect()
            })
            .collect();
        Ok(Self {
            axes,
            ranks,
            strides,
            size,
        })
    }

    fn unflatten(&self, mut flat: usize, idx: &mut [usize]) {
        for (i, s) in self.strides.iter().enumerate() {
            idx[i] = flat / s;
            flat %= s;
        }
    }

    fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.axes).map(|(k, a)| a[*k]).collect()
    }

    /// `F(v)` at every grid point, by prefix sums of the scenario masses.
    fn cdf(&self, probs: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.size];
        for (r, p) in self.ranks.iter().zip(probs) {
            let flat: usize = r.iter().zip(&self.strides).map(|(k, s)| k * s).sum();
            f[flat] += p;
        }
        let mut idx = vec![0; self.axes.len()];
        for (dim, stride) in self.strides.iter().enumerate() {
            for flat in 0..self.size {
                self.unflatten(flat, &mut idx);
                if idx[dim] > 0 {
                    f[flat] += f[flat - stride];
                }
            }
        }
        f
    }

    /// Grid points with `F >= level`, plus the flat indices of the minimal ones.
    fn level_set(&self, probs: &[f64], level: f64) -> (Vec<bool>, Vec<usize>) {
        let f = self.cdf(probs);
        let feasible: Vec<bool> = f.iter().map(|v| *v >= level - PROB_TOL).collect();
        let mut idx = vec![0; self.axes.len()];
        let minimal = (0..self.size)
            .filter(|&flat| {
                if !feasible[flat] {
                    return false;
                }
                self.unflatten(flat, &mut idx);
                idx.iter()
                    .zip(&self.strides)
                    .all(|(k, s)| *k == 0 || !feasible[flat - s])
            })
            .collect();
        (feasible, minimal)
    }
}

fn check_level(p: f64) -> Result<(), MultivariateError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(MultivariateError::Input(format!("level must lie in (0, 1), got {p}")))
    }
}

/// The p-efficient points of `X`, in lexicographic order.
pub fn p_efficient_points(
    x: &VectorDistribution,
    p: f64,
) -> Result<PEfficientFrontier, MultivariateError> {
    check_level(p)?;
    let grid = Grid::new(x)?;
    let (_, minimal) = grid.level_set(x.probs(), p);
    let mut idx = vec![0; x.dim()];
    let points = minimal
        .into_iter()
        .map(|flat| {
            grid.unflatten(flat, &mut idx);
            grid.point(&idx)
        })
        .collect();
    Ok(PEfficientFrontier { level: p, points })
}

/// Outcome of [`mavar`] including the conditioning event.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MavarResult {
    pub value: f64,
    pub event_probability: f64,
    pub frontier: PEfficientFrontier,
}

/// `E[w'X | X in Z_p]` where `Z_p` is the union of `v + R^m_+` over the
/// p-efficient points `v`.
pub fn mavar(x: &VectorDistribution, p: f64, w: &AggregationWeights) -> Result<f64, MultivariateError> {
    mavar_detailed(x, p, w).map(|r| r.value)
}

pub fn mavar_detailed(
    x: &VectorDistribution,
    p: f64,
    w: &AggregationWeights,
) -> Result<MavarResult, MultivariateError> {
    check_weights(x, w.as_slice())?;
    let frontier = p_efficient_points(x, p)?;
    let (mut mass, mut acc) = (0.0, 0.0);
    for (r, prob) in x.realizations().iter().zip(x.probs()) {
        if frontier.dominates_some(r) {
            mass += prob;
            acc += prob * dot(w.as_slice(), r);
        }
    }
    if mass <= PROB_TOL {
        return Err(MultivariateError::DegenerateEvent);
    }
    Ok(MavarResult {
        value: acc / mass,
        event_probability: mass,
        frontier,
    })
}

fn check_weights(x: &VectorDistribution, c: &[f64]) -> Result<(), MultivariateError> {
    if c.len() != x.dim() {
        return Err(MultivariateError::Input(format!(
            "weight dimension {} != vector dimension {}",
            c.len(),
            x.dim()
        )));
    }
    Ok(())
}

/// Optimal value and minimizer of the scalarized vector AVaR problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VmavarResult {
    pub value: f64,
    pub point: Vec<f64>,
    /// Best objective over the `(1 - p)`-efficient points alone; equals `value`.
    pub frontier_value: f64,
}

/// `min c'v + E[c'(X - v)_+] / p` subject to `P(X <= v) >= 1 - p`, over the
/// candidate grid. Ties go to the lexicographically smallest point.
pub fn vmavar_scalarized(
    x: &VectorDistribution,
    p: f64,
    c: &AggregationWeights,
) -> Result<VmavarResult, MultivariateError> {
    check_level(p)?;
    check_weights(x, c.as_slice())?;
    let grid = Grid::new(x)?;
    let (feasible, minimal) = grid.level_set(x.probs(), 1.0 - p);
    // separable objective: sum_i c_i (v_i + E[(X_i - v_i)_+] / p)
    let per_axis: Vec<Vec<f64>> = grid
        .axes
        .iter()
        .enumerate()
        .map(|(i, axis)| {
            axis.iter()
                .map(|&v| {
                    let excess: f64 = x
                        .realizations()
                        .iter()
                        .zip(x.probs())
                        .map(|(r, pr)| pr * (r[i] - v).max(0.0))
                        .sum();
                    c.as_slice()[i] * (v + excess / p)
                })
                .collect()
        })
        .collect();
    let mut idx = vec![0; x.dim()];
    let mut objective = |flat: usize| {
        grid.unflatten(flat, &mut idx);
        idx.iter().zip(&per_axis).map(|(k, t)| t[*k]).sum::<f64>()
    };
    let mut best: Option<(f64, usize)> = None;
    for flat in (0..grid.size).filter(|&f| feasible[f]) {
        let val = objective(flat);
        if best.map_or(true, |(b, _)| val < b) {
            best = Some((val, flat));
        }
    }
    let (value, flat) = best.ok_or_else(|| MultivariateError::Input("infeasible level".into()))?;
    let frontier_value = minimal
        .iter()
        .map(|&f| objective(f))
        .fold(f64::INFINITY, f64::min);
    let mut idx = vec![0; x.dim()];
    grid.unflatten(flat, &mut idx);
    Ok(VmavarResult {
        value,
        point: grid.point(&idx),
        frontier_value,
    })
}
