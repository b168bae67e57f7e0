//! Bounded-variable two-phase tableau simplex.
//!
//! Pricing is Dantzig with a switch to Bland's rule after a streak of
//! degenerate pivots; the ratio test is a two-pass Harris test. The tableau
//! is rebuilt from an LU factorization of the basis every
//! `REFACTOR_EVERY` pivots and before duals are read off.

use nalgebra::{DMatrix, DVector};

use super::presolve::Reduced;
use super::{QpProblem, QpSolution, QpStatus};

const PIVOT_TOL: f64 = 1e-9;
const DRIVE_OUT_TOL: f64 = 1e-7;
const HARRIS_DELTA: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 30;
const REFACTOR_EVERY: usize = 100;

pub(crate) fn iteration_limit(n: usize, m: usize) -> usize {
    50 * (n + m).max(20)
}

struct Tableau {
    m: usize,
    w: usize,
    /// Standard-form constraint matrix, `m x w`.
    a: DMatrix<f64>,
    rhs: Vec<f64>,
    /// Row-major `B^-1 A`.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Basis position of each column, or `usize::MAX`.
    pos: Vec<usize>,
    val: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    dtol: f64,
    iterations: usize,
    limit: usize,
    since_refactor: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    Limit,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.w..(i + 1) * self.w]
    }

    fn set_basis(&mut self, basis: Vec<usize>) {
        self.pos = vec![usize::MAX; self.w];
        for (i, &j) in basis.iter().enumerate() {
            self.pos[j] = i;
        }
        self.basis = basis;
    }

    /// Rebuilds `t`, basic values and reduced costs from the basis.
    /// Returns false when the basis matrix is numerically singular.
    fn refactor(&mut self) -> bool {
        if self.m == 0 {
            self.recompute_reduced_costs();
            self.since_refactor = 0;
            return true;
        }
        let b = self.a.select_columns(self.basis.iter());
        let lu = b.lu();
        let Some(t) = lu.solve(&self.a) else {
            return false;
        };
        let mut r = DVector::from_vec(self.rhs.clone());
        for j in 0..self.w {
            if self.pos[j] == usize::MAX && self.val[j] != 0.0 {
                r.axpy(-self.val[j], &self.a.column(j), 1.0);
            }
        }
        let Some(xb) = lu.solve(&r) else {
            return false;
        };
        for i in 0..self.m {
            self.val[self.basis[i]] = xb[i];
            for j in 0..self.w {
                self.t[i * self.w + j] = t[(i, j)];
            }
        }
        self.recompute_reduced_costs();
        self.since_refactor = 0;
        true
    }

    fn recompute_reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.w..(i + 1) * self.w];
                for (dj, tij) in d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        for &j in &self.basis {
            d[j] = 0.0;
        }
        self.d = d;
    }

    fn entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.w {
            if self.pos[j] != usize::MAX || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj < -self.dtol && self.val[j] < self.hi[j] {
                1.0
            } else if dj > self.dtol && self.val[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    /// Moves column `q` in direction `dir`. Returns the step length, or
    /// `None` when the step is unbounded.
    fn step(&mut self, q: usize, dir: f64, bland: bool) -> Option<f64> {
        let w = self.w;
        let range = self.hi[q] - self.lo[q];
        let limit_of = |i: usize, delta: f64, tab: &Tableau| -> Option<f64> {
            let alpha = tab.t[i * w + q] * dir;
            if alpha.abs() <= PIVOT_TOL {
                return None;
            }
            let b = tab.basis[i];
            if alpha > 0.0 {
                tab.lo[b].is_finite().then(|| (tab.val[b] - tab.lo[b] + delta) / alpha)
            } else {
                tab.hi[b].is_finite().then(|| (tab.hi[b] - tab.val[b] + delta) / -alpha)
            }
        };
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        if bland {
            for i in 0..self.m {
                if let Some(th) = limit_of(i, 0.0, self) {
                    let th = th.max(0.0);
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            th < theta - 1e-14 || (th <= theta + 1e-14 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        theta = th;
                        leave = Some(i);
                    }
                }
            }
        } else {
            let mut theta_max = f64::INFINITY;
            for i in 0..self.m {
                if let Some(th) = limit_of(i, HARRIS_DELTA, self) {
                    theta_max = theta_max.min(th);
                }
            }
            if theta_max.is_finite() {
                let mut best_alpha = 0.0;
                for i in 0..self.m {
                    if let Some(th) = limit_of(i, 0.0, self) {
                        let alpha = self.t[i * w + q].abs();
                        if th <= theta_max && alpha > best_alpha {
                            best_alpha = alpha;
                            theta = th.max(0.0);
                            leave = Some(i);
                        }
                    }
                }
            }
        }
        if range.is_finite() && range <= theta {
            theta = range;
            leave = None;
        } else if leave.is_none() {
            return None;
        }
        for i in 0..self.m {
            let tiq = self.t[i * w + q];
            if tiq != 0.0 {
                self.val[self.basis[i]] -= tiq * dir * theta;
            }
        }
        match leave {
            None => {
                self.val[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            }
            Some(r) => {
                self.val[q] += dir * theta;
                let b = self.basis[r];
                self.val[b] = if self.t[r * w + q] * dir > 0.0 {
                    self.lo[b]
                } else {
                    self.hi[b]
                };
                self.pivot(r, q);
            }
        }
        Some(theta)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let w = self.w;
        let piv = self.t[r * w + q];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= piv;
        }
        let pivot_row: Vec<f64> = self.row(r).to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + q];
            if f != 0.0 {
                let row = &mut self.t[i * w..(i + 1) * w];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        }
        self.t[r * w + q] = 1.0;
        let dq = self.d[q];
        if dq != 0.0 {
            for (dj, p) in self.d.iter_mut().zip(&pivot_row) {
                *dj -= dq * p;
            }
        }
        self.d[q] = 0.0;
        let old = self.basis[r];
        self.pos[old] = usize::MAX;
        self.pos[q] = r;
        self.basis[r] = q;
        self.since_refactor += 1;
    }

    fn run(&mut self) -> Outcome {
        let mut bland = false;
        let mut streak = 0;
        let mut verified = false;
        loop {
            if self.iterations >= self.limit {
                return Outcome::Limit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            let Some((q, dir)) = self.entering(bland) else {
                // Confirm optimality on a freshly factorized tableau.
                if verified || self.since_refactor == 0 {
                    return Outcome::Optimal;
                }
                self.refactor();
                verified = true;
                continue;
            };
            verified = false;
            self.iterations += 1;
            match self.step(q, dir, bland) {
                None => return Outcome::Unbounded,
                Some(theta) if theta <= 1e-12 => {
                    streak += 1;
                    if streak > DEGENERATE_STREAK {
                        bland = true;
                    }
                }
                Some(_) => {
                    streak = 0;
                    bland = false;
                }
            }
        }
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.val).map(|(c, v)| c * v).sum()
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

pub(crate) fn solve(problem: &QpProblem, red: &Reduced, tol: f64) -> QpSolution {
    let n = problem.num_vars();
    let p = problem.eq_b.len();
    let q_all = problem.ineq_b.len();
    let mut x = DVector::from_fn(n, |j, _| initial_value(red.lo[j], red.hi[j]));

    let free_cols: Vec<usize> = (0..n).filter(|&j| red.lo[j] < red.hi[j]).collect();
    let ns = free_cols.len();
    let nk = red.kept.len();
    let m = p + nk;

    // Row data over the free structural columns, with fixed columns moved
    // to the right-hand side.
    let row_coef = |i: usize, j: usize| -> f64 {
        if i < p {
            problem.eq_a[(i, j)]
        } else {
            problem.ineq_a[(red.kept[i - p], j)]
        }
    };
    let mut rhs = vec![0.0; m];
    for (i, r) in rhs.iter_mut().enumerate() {
        let b = if i < p { problem.eq_b[i] } else { problem.ineq_b[red.kept[i - p]] };
        let fixed: f64 = (0..n)
            .filter(|&j| red.lo[j] >= red.hi[j])
            .map(|j| row_coef(i, j) * x[j])
            .sum();
        *r = b - fixed;
    }

    // Residual at the initial nonbasic point decides which rows need an
    // artificial column.
    let mut resid = rhs.clone();
    for (i, r) in resid.iter_mut().enumerate() {
        for &j in &free_cols {
            *r -= row_coef(i, j) * x[j];
        }
    }
    let needs_art: Vec<usize> = (0..m).filter(|&i| i < p || resid[i] < 0.0).collect();
    let na = needs_art.len();
    let w = ns + nk + na;

    let mut a = DMatrix::zeros(m, w);
    for i in 0..m {
        for (c, &j) in free_cols.iter().enumerate() {
            a[(i, c)] = row_coef(i, j);
        }
        if i >= p {
            a[(i, ns + i - p)] = 1.0;
        }
    }
    let mut lo = vec![0.0; w];
    let mut hi = vec![f64::INFINITY; w];
    let mut val = vec![0.0; w];
    for (c, &j) in free_cols.iter().enumerate() {
        lo[c] = red.lo[j];
        hi[c] = red.hi[j];
        val[c] = x[j];
    }
    let mut basis = vec![usize::MAX; m];
    for i in p..m {
        if resid[i] >= 0.0 {
            basis[i] = ns + i - p;
        }
    }
    for (k, &i) in needs_art.iter().enumerate() {
        let col = ns + nk + k;
        a[(i, col)] = if resid[i] < 0.0 { -1.0 } else { 1.0 };
        basis[i] = col;
    }
    let mut cost1 = vec![0.0; w];
    for c in cost1.iter_mut().skip(ns + nk) {
        *c = 1.0;
    }
    let cmax = problem.linear.amax().max(1.0);
    let mut tab = Tableau {
        m,
        w,
        a,
        rhs: rhs.clone(),
        t: vec![0.0; m * w],
        basis: Vec::new(),
        pos: Vec::new(),
        val,
        lo,
        hi,
        cost: cost1,
        d: Vec::new(),
        dtol: 1e-9,
        iterations: 0,
        limit: iteration_limit(n, m),
        since_refactor: 0,
    };
    tab.set_basis(basis);
    tab.refactor();

    // Phase 1.
    let mut rows: Vec<usize> = (0..m).collect();
    if na > 0 {
        if let Outcome::Limit = tab.run() {
            extract(&tab, &free_cols, problem, &mut x);
            return done(problem, &tab, QpStatus::IterationLimit, x, p, q_all);
        }
        let scale = rhs.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        if tab.objective() > tol * scale {
            extract(&tab, &free_cols, problem, &mut x);
            return done(problem, &tab, QpStatus::Infeasible, x, p, q_all);
        }
        // Drive artificials out of the basis; rows where that is impossible
        // are redundant and get dropped.
        rows.clear();
        for r in 0..m {
            let b = tab.basis[r];
            if b < ns + nk {
                rows.push(r);
                continue;
            }
            let mut best = None;
            let mut best_abs = DRIVE_OUT_TOL;
            for (j, v) in tab.row(r).iter().enumerate().take(ns + nk) {
                if tab.pos[j] == usize::MAX && v.abs() > best_abs {
                    best_abs = v.abs();
                    best = Some(j);
                }
            }
            if let Some(j) = best {
                tab.val[b] = 0.0;
                tab.pivot(r, j);
                rows.push(r);
            }
        }
        let kept_basis: Vec<usize> = rows.iter().map(|&r| tab.basis[r]).collect();
        let w2 = ns + nk;
        tab.a = DMatrix::from_fn(rows.len(), w2, |i, j| tab.a[(rows[i], j)]);
        tab.rhs = rows.iter().map(|&r| tab.rhs[r]).collect();
        tab.m = rows.len();
        tab.w = w2;
        tab.t = vec![0.0; tab.m * w2];
        tab.val.truncate(w2);
        tab.lo.truncate(w2);
        tab.hi.truncate(w2);
        tab.set_basis(kept_basis);
    }

    // Phase 2.
    tab.cost = vec![0.0; tab.w];
    for (c, &j) in free_cols.iter().enumerate() {
        tab.cost[c] = problem.linear[j];
    }
    tab.dtol = 1e-9 * cmax;
    tab.refactor();
    let status = match tab.run() {
        Outcome::Optimal => QpStatus::Optimal,
        Outcome::Unbounded => QpStatus::Unbounded,
        Outcome::Limit => QpStatus::IterationLimit,
    };
    extract(&tab, &free_cols, problem, &mut x);
    let mut sol = done(problem, &tab, status, x, p, q_all);
    if status != QpStatus::Optimal {
        return sol;
    }
    let b = tab.a.select_columns(tab.basis.iter());
    let cb = DVector::from_iterator(tab.m, tab.basis.iter().map(|&j| tab.cost[j]));
    let pi = if tab.m == 0 {
        DVector::zeros(0)
    } else {
        b.transpose().lu().solve(&cb).unwrap_or_else(|| DVector::zeros(tab.m))
    };
    for (k, &r) in rows.iter().enumerate() {
        if r < p {
            sol.eq_duals[r] = -pi[k];
        } else {
            sol.ineq_duals[red.kept[r - p]] = -pi[k];
        }
    }
    let (zeta, omega) = red.finish_duals(problem, &sol.x, &sol.eq_duals, &mut sol.ineq_duals);
    sol.bound_duals = zeta;
    sol.upper_duals = omega;
    sol
}

fn extract(tab: &Tableau, free_cols: &[usize], problem: &QpProblem, x: &mut DVector<f64>) {
    for (c, &j) in free_cols.iter().enumerate() {
        x[j] = tab.val[c].clamp(problem.lower[j], problem.upper[j]);
    }
}

fn done(problem: &QpProblem, tab: &Tableau, status: QpStatus, x: DVector<f64>, p: usize, q: usize) -> QpSolution {
    let mut s = QpSolution::empty(x.len(), p, q, status);
    s.objective = problem.objective(&x);
    s.x = x;
    s.iterations = tab.iterations;
    s
}
