//! Turns single-variable inequality rows into bounds and maps the resulting
//! bound multipliers back onto the rows they came from.

use nalgebra::DVector;

use super::{QpProblem, QpStatus};

pub(crate) struct Reduced {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Inequality row (and its coefficient) that produced the bound, if any.
    pub lo_src: Vec<Option<(usize, f64)>>,
    pub hi_src: Vec<Option<(usize, f64)>>,
    /// Inequality rows with two or more nonzeros.
    pub kept: Vec<usize>,
}

impl Reduced {
    pub fn new(problem: &QpProblem, tol: f64) -> Result<Self, QpStatus> {
        let n = problem.num_vars();
        let mut lo: Vec<f64> = problem.lower.iter().copied().collect();
        let mut hi: Vec<f64> = problem.upper.iter().copied().collect();
        let mut lo_src = vec![None; n];
        let mut hi_src = vec![None; n];
        let mut kept = Vec::new();
        for r in 0..problem.ineq_b.len() {
            let row = problem.ineq_a.row(r);
            let b = problem.ineq_b[r];
            let mut nz = row.iter().enumerate().filter(|(_, v)| **v != 0.0);
            let first = nz.next();
            let second = nz.next();
            match (first, second) {
                (None, _) => {
                    if b < -tol * (1.0 + b.abs()) {
                        return Err(QpStatus::Infeasible);
                    }
                }
                (Some((j, &a)), None) => {
                    let bound = b / a;
                    if a > 0.0 {
                        if bound < hi[j] {
                            hi[j] = bound;
                            hi_src[j] = Some((r, a));
                        }
                    } else if bound > lo[j] {
                        lo[j] = bound;
                        lo_src[j] = Some((r, a));
                    }
                }
                _ => kept.push(r),
            }
        }
        for j in 0..n {
            if lo[j] > hi[j] {
                if lo[j] - hi[j] > tol * (1.0 + lo[j].abs().max(hi[j].abs())) {
                    return Err(QpStatus::Infeasible);
                }
                let mid = 0.5 * (lo[j] + hi[j]);
                lo[j] = mid;
                hi[j] = mid;
            }
        }
        Ok(Self {
            lo,
            hi,
            lo_src,
            hi_src,
            kept,
        })
    }

    /// Given `x`, equality multipliers and the multipliers of the kept rows
    /// (already stored in `ineq_duals`), attributes the remaining reduced
    /// gradient of each variable to its active bound: either the variable's
    /// own bound or the singleton row that produced it.
    pub fn finish_duals(
        &self,
        problem: &QpProblem,
        x: &DVector<f64>,
        eq_duals: &DVector<f64>,
        ineq_duals: &mut DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let n = problem.num_vars();
        let g = &problem.quadratic * x
            + &problem.linear
            + problem.eq_a.transpose() * eq_duals
            + problem.ineq_a.transpose() * &*ineq_duals;
        let mut zeta = DVector::zeros(n);
        let mut omega = DVector::zeros(n);
        for j in 0..n {
            let gj = g[j];
            if gj > 0.0 && self.lo[j].is_finite() {
                match self.lo_src[j] {
                    Some((r, a)) => ineq_duals[r] += gj / a.abs(),
                    None => zeta[j] = gj,
                }
            } else if gj < 0.0 && self.hi[j].is_finite() {
                match self.hi_src[j] {
                    Some((r, a)) => ineq_duals[r] += -gj / a,
                    None => omega[j] = -gj,
                }
            }
        }
        (zeta, omega)
    }
}
