//! Reference implementations used as oracles by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sysrisk::risk::ScalarDistribution;
use sysrisk::systemic::VectorDistribution;

/// Average of the largest values carrying total mass `alpha`.
pub fn sorted_tail(dist: &ScalarDistribution, alpha: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = dist.values().iter().copied().zip(dist.probs().iter().copied()).collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut left, mut acc) = (alpha, 0.0);
    for (v, p) in atoms {
        let take = p.min(left);
        acc += take * v;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    acc / alpha
}

/// Every point of the cross product of realized marginal values.
pub fn full_grid(x: &VectorDistribution) -> Vec<Vec<f64>> {
    let mut grid = vec![vec![]];
    for i in 0..x.dim() {
        let mut axis: Vec<f64> = x.realizations().iter().map(|r| r[i]).collect();
        axis.sort_by(f64::total_cmp);
        axis.dedup();
        grid = grid
            .into_iter()
            .flat_map(|g| axis.iter().map(move |a| [g.clone(), vec![*a]].concat()))
            .collect();
    }
    grid
}

pub fn cdf(x: &VectorDistribution, v: &[f64]) -> f64 {
    x.realizations()
        .iter()
        .zip(x.probs())
        .filter(|(r, _)| leq(r, v))
        .map(|(_, p)| p)
        .sum()
}

pub fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Minimal grid points with `F >= p`, in lexicographic order.
pub fn brute_frontier(x: &VectorDistribution, p: f64) -> Vec<Vec<f64>> {
    let feasible: Vec<Vec<f64>> = full_grid(x).into_iter().filter(|v| cdf(x, v) >= p - 1e-12).collect();
    let mut out: Vec<Vec<f64>> = feasible
        .iter()
        .filter(|v| !feasible.iter().any(|w| w != *v && leq(w, v)))
        .cloned()
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// `c'v + E[c'(X - v)_+] / p`.
pub fn vmavar_objective(x: &VectorDistribution, c: &[f64], p: f64, v: &[f64]) -> f64 {
    let base: f64 = c.iter().zip(v).map(|(a, b)| a * b).sum();
    let excess: f64 = x
        .realizations()
        .iter()
        .zip(x.probs())
        .map(|(r, pr)| pr * r.iter().zip(v).zip(c).map(|((ri, vi), ci)| ci * (ri - vi).max(0.0)).sum::<f64>())
        .sum();
    base + excess / p
}

/// Grid minimum of [`vmavar_objective`] under `F(v) >= 1 - p`.
pub fn brute_vmavar(x: &VectorDistribution, c: &[f64], p: f64) -> f64 {
    full_grid(x)
        .into_iter()
        .filter(|v| cdf(x, v) >= 1.0 - p - 1e-12)
        .map(|v| vmavar_objective(x, c, p, &v))
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection onto `{lo <= x <= hi}`, intersected with
/// `{sum x = total}` when given.
pub fn project(v: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, total: Option<f64>) -> DVector<f64> {
    let clamp = |shift: f64| DVector::from_fn(v.len(), |i, _| (v[i] - shift).clamp(lo[i], hi[i]));
    let Some(total) = total else { return clamp(0.0) };
    // the shift lies between the values that pin every coordinate at hi or lo
    let (mut a, mut b) = ((v - hi).min(), (v - lo).max());
    for _ in 0..300 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if clamp(mid).sum() > total {
            a = mid;
        } else {
            b = mid;
        }
    }
    clamp(0.5 * (a + b))
}

/// Optimal value of `min 1/2 x'Hx + c'x` over the set of [`project`], by
/// accelerated projected gradient with step one over the largest eigenvalue.
pub fn projected_gradient(h: &DMatrix<f64>, c: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>, total: Option<f64>) -> f64 {
    let lip = h.clone().symmetric_eigenvalues().amax().max(1e-9);
    let mut x = project(&DVector::zeros(c.len()), lo, hi, total);
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..40_000 {
        let g = h * &y + c;
        let next = project(&(&y - g / lip), lo, hi, total);
        if (&next - &x).amax() <= 1e-15 && (&next - &y).amax() <= 1e-15 {
            x = next;
            break;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / tn);
        x = next;
        t = tn;
    }
    0.5 * x.dot(&(h * &x)) + c.dot(&x)
}
