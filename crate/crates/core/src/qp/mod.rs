//! Dense convex quadratic and linear programming.
//!
//! ```text
//! minimize    1/2 x'Qx + c'x
//! subject to  A_eq x  = b_eq
//!             A_in x <= b_in
//!             lower <= x <= upper
//! ```
//!
//! Multipliers follow the convention of the Lagrangian
//! `L = f(x) + y'(A_eq x - b_eq) + nu'(A_in x - b_in) - zeta'(x - lower) + omega'(x - upper)`
//! with `nu, zeta, omega >= 0`, so that stationarity reads
//! `Qx + c + A_eq'y + A_in'nu - zeta + omega = 0` and the sensitivity of the
//! optimal value to a right-hand side is `-y` (equalities) or `-nu`
//! (inequalities).
//!
//! Linear programs go through a bounded-variable tableau simplex; problems
//! with a nonzero quadratic term through a primal active-set method started
//! from a simplex phase-1 point. Both pivot deterministically, so repeated
//! solves return bit-identical iterates.

mod active_set;
mod box_qp;
mod presolve;
mod simplex;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use active_set::WarmStart;
pub use box_qp::{solve_box_qp, BoxQp, BoxQpSolution};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("quadratic term is not symmetric positive semidefinite: {0}")]
    NotConvex(String),
    #[error("invalid data: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration budget exhausted; the returned point is the last iterate.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_a: DMatrix<f64>,
    pub eq_b: DVector<f64>,
    pub ineq_a: DMatrix<f64>,
    pub ineq_b: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// `n` free variables, zero objective, no constraints.
    pub fn new(n: usize) -> Self {
        Self {
            quadratic: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
            eq_a: DMatrix::zeros(0, n),
            eq_b: DVector::zeros(0),
            ineq_a: DMatrix::zeros(0, n),
            ineq_b: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn with_quadratic(mut self, q: DMatrix<f64>) -> Self {
        self.quadratic = q;
        self
    }

    pub fn with_linear(mut self, c: DVector<f64>) -> Self {
        self.linear = c;
        self
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_a = a;
        self.eq_b = b;
        self
    }

    pub fn with_ineq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.ineq_a = a;
        self.ineq_b = b;
        self
    }

    pub fn with_lower(mut self, l: DVector<f64>) -> Self {
        self.lower = l;
        self
    }

    pub fn with_upper(mut self, u: DVector<f64>) -> Self {
        self.upper = u;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().all(|v| *v == 0.0)
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.quadratic * x)) + self.linear.dot(x)
    }

    /// Checks dimensions, symmetry (1e-10) and positive semidefiniteness
    /// (smallest eigenvalue at least -1e-8).
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.num_vars();
        let dim = |what: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(QpError::Dimension(format!("{what} is {got:?}, expected {want:?}")))
            }
        };
        dim("quadratic", self.quadratic.shape(), (n, n))?;
        dim("eq_a", self.eq_a.shape(), (self.eq_b.len(), n))?;
        dim("ineq_a", self.ineq_a.shape(), (self.ineq_b.len(), n))?;
        dim("lower", (self.lower.len(), 1), (n, 1))?;
        dim("upper", (self.upper.len(), 1), (n, 1))?;
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&self.quadratic)
            || !finite(&self.eq_a)
            || !finite(&self.ineq_a)
            || !self.linear.iter().all(|v| v.is_finite())
            || !self.eq_b.iter().all(|v| v.is_finite())
            || !self.ineq_b.iter().all(|v| v.is_finite())
        {
            return Err(QpError::Invalid("non-finite coefficient".into()));
        }
        if self.lower.iter().any(|v| v.is_nan() || *v == f64::INFINITY)
            || self.upper.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY)
        {
            return Err(QpError::Invalid("bad variable bound".into()));
        }
        if !self.is_linear() {
            let asym = (&self.quadratic - self.quadratic.transpose()).amax();
            if asym > 1e-10 {
                return Err(QpError::NotConvex(format!("asymmetry {asym:e}")));
            }
            let sym = (&self.quadratic + self.quadratic.transpose()) * 0.5;
            let min_eig = sym.symmetric_eigenvalues().min();
            if min_eig < -1e-8 {
                return Err(QpError::NotConvex(format!("smallest eigenvalue {min_eig:e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub ineq_duals: DVector<f64>,
    /// Multipliers of `x >= lower`.
    pub bound_duals: DVector<f64>,
    /// Multipliers of `x <= upper`.
    pub upper_duals: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }

    fn empty(n: usize, p: usize, q: usize, status: QpStatus) -> Self {
        Self {
            x: DVector::zeros(n),
            eq_duals: DVector::zeros(p),
            ineq_duals: DVector::zeros(q),
            bound_duals: DVector::zeros(n),
            upper_duals: DVector::zeros(n),
            objective: f64::NAN,
            status,
            iterations: 0,
        }
    }
}

/// Largest violations of the first-order optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub complementarity: f64,
    /// Most negative inequality or bound multiplier, as a positive number.
    pub dual_sign: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.complementarity)
            .max(self.dual_sign)
    }
}

pub fn kkt_residuals(problem: &QpProblem, sol: &QpSolution) -> KktResiduals {
    let x = &sol.x;
    let grad = &problem.quadratic * x
        + &problem.linear
        + problem.eq_a.transpose() * &sol.eq_duals
        + problem.ineq_a.transpose() * &sol.ineq_duals
        - &sol.bound_duals
        + &sol.upper_duals;
    let stationarity = grad.amax();
    let mut primal: f64 = 0.0;
    let eq_res = &problem.eq_a * x - &problem.eq_b;
    primal = primal.max(eq_res.amax());
    let in_res = &problem.ineq_a * x - &problem.ineq_b;
    primal = in_res.iter().fold(primal, |m, r| m.max(*r));
    let mut comp: f64 = 0.0;
    let mut sign: f64 = 0.0;
    for (r, nu) in in_res.iter().zip(sol.ineq_duals.iter()) {
        comp = comp.max((r * nu).abs());
        sign = sign.max(-nu);
    }
    for j in 0..x.len() {
        let (l, u) = (problem.lower[j], problem.upper[j]);
        if l.is_finite() {
            primal = primal.max(l - x[j]);
            comp = comp.max(((x[j] - l) * sol.bound_duals[j]).abs());
        }
        if u.is_finite() {
            primal = primal.max(x[j] - u);
            comp = comp.max(((u - x[j]) * sol.upper_duals[j]).abs());
        }
        sign = sign.max(-sol.bound_duals[j]).max(-sol.upper_duals[j]);
    }
    KktResiduals {
        stationarity,
        primal,
        complementarity: comp,
        dual_sign: sign,
    }
}

/// Solves a convex QP (or LP when the quadratic term is zero).
pub fn solve_qp(problem: &QpProblem, tol: f64) -> Result<QpSolution, QpError> {
    solve_qp_warm(problem, tol, None).map(|(s, _)| s)
}

/// [`solve_qp`] that can start from, and returns, an active-set warm start.
/// Warm starts only apply to problems with a quadratic term.
pub fn solve_qp_warm(
    problem: &QpProblem,
    tol: f64,
    warm: Option<&WarmStart>,
) -> Result<(QpSolution, Option<WarmStart>), QpError> {
    if !(tol > 0.0) {
        return Err(QpError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    problem.validate()?;
    if problem.is_linear() {
        return Ok((solve_lp_unchecked(problem, tol), None));
    }
    let reduced = match presolve::Reduced::new(problem, tol) {
        Ok(r) => r,
        Err(status) => {
            return Ok((
                QpSolution::empty(problem.num_vars(), problem.eq_b.len(), problem.ineq_b.len(), status),
                None,
            ))
        }
    };
    let (sol, ws) = active_set::solve(problem, &reduced, tol, warm);
    Ok((sol, ws))
}

/// Solves a linear program; the quadratic term must be zero.
pub fn solve_lp(problem: &QpProblem, tol: f64) -> Result<QpSolution, QpError> {
    if !problem.is_linear() {
        return Err(QpError::Invalid("solve_lp called with a nonzero quadratic term".into()));
    }
    if !(tol > 0.0) {
        return Err(QpError::Invalid(format!("tolerance must be positive, got {tol}")));
    }
    problem.validate()?;
    Ok(solve_lp_unchecked(problem, tol))
}

fn solve_lp_unchecked(problem: &QpProblem, tol: f64) -> QpSolution {
    let reduced = match presolve::Reduced::new(problem, tol) {
        Ok(r) => r,
        Err(status) => {
            return QpSolution::empty(problem.num_vars(), problem.eq_b.len(), problem.ineq_b.len(), status)
        }
    };
    simplex::solve(problem, &reduced, tol)
}

#[cfg(test)]
mod tests;
