//! Primal active-set method for convex QPs with a possibly singular Hessian.
//!
//! The working set holds variables fixed at a bound plus general rows
//! (equalities always, active inequalities as they block). Steps are
//! computed in the null space of the working rows restricted to the free
//! variables. Directions of zero curvature along which the objective
//! decreases are followed until a constraint blocks, or reported as
//! unbounded.

use nalgebra::{DMatrix, DVector};

use super::presolve::Reduced;
use super::simplex::{self, iteration_limit};
use super::{QpProblem, QpSolution, QpStatus};

const DEGENERATE_STREAK: usize = 20;

/// Final iterate and working set of a solve, reusable as a starting point
/// for a problem with the same constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub x: DVector<f64>,
    pub at_lower: Vec<usize>,
    pub at_upper: Vec<usize>,
    /// Active inequality rows (indices into `ineq_a`).
    pub rows: Vec<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Lower,
    Upper,
}

struct State<'a> {
    problem: &'a QpProblem,
    p: usize,
    x: DVector<f64>,
    fixed: Vec<Option<Side>>,
    /// Active kept inequality rows (indices into `ineq_a`).
    rows: Vec<usize>,
}

/// Result of the Gram-Schmidt pass over working rows.
struct Basis {
    /// Row identifiers: `Ok(eq index)` or `Err(ineq index)`.
    ids: Vec<Result<usize, usize>>,
    /// Rows restricted to free columns, `k x f`.
    a: DMatrix<f64>,
}

impl<'a> State<'a> {
    fn free(&self) -> Vec<usize> {
        (0..self.x.len()).filter(|&j| self.fixed[j].is_none()).collect()
    }

    fn row(&self, id: Result<usize, usize>) -> nalgebra::RowDVector<f64> {
        match id {
            Ok(i) => self.problem.eq_a.row(i).into_owned(),
            Err(r) => self.problem.ineq_a.row(r).into_owned(),
        }
    }

    /// Independent subset of the working rows over the free columns,
    /// equalities first. Dependent active inequalities leave the working
    /// set; they stay satisfied along any step that keeps the others.
    fn basis(&mut self, free: &[usize]) -> Basis {
        let f = free.len();
        let mut ortho: Vec<DVector<f64>> = Vec::new();
        let mut ids = Vec::new();
        let mut keep_rows = Vec::new();
        let cands: Vec<Result<usize, usize>> = (0..self.p)
            .map(Ok)
            .chain(self.rows.iter().map(|&r| Err(r)))
            .collect();
        for id in cands {
            let full = self.row(id);
            let v = DVector::from_iterator(f, free.iter().map(|&j| full[j]));
            let norm0 = v.norm();
            if norm0 == 0.0 {
                continue;
            }
            let mut u = v;
            for q in &ortho {
                let c = q.dot(&u);
                u.axpy(-c, q, 1.0);
            }
            for q in &ortho {
                let c = q.dot(&u);
                u.axpy(-c, q, 1.0);
            }
            let nu = u.norm();
            if nu > 1e-9 * norm0 {
                ortho.push(u / nu);
                ids.push(id);
                if let Err(r) = id {
                    keep_rows.push(r);
                }
            }
        }
        self.rows = keep_rows;
        let a = DMatrix::from_fn(ids.len(), f, |i, c| match ids[i] {
            Ok(e) => self.problem.eq_a[(e, free[c])],
            Err(r) => self.problem.ineq_a[(r, free[c])],
        });
        Basis { ids, a }
    }
}

/// Orthonormal basis of the null space of `a` (`k x f`, full row rank).
fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, f) = a.shape();
    if k == 0 {
        return DMatrix::identity(f, f);
    }
    let mut padded = DMatrix::zeros(f, f);
    padded.rows_mut(0, k).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let null: Vec<usize> = order[k..].to_vec();
    DMatrix::from_fn(f, null.len(), |r, c| vt[(null[c], r)])
}

pub(crate) fn solve(
    problem: &QpProblem,
    red: &Reduced,
    tol: f64,
    warm: Option<&WarmStart>,
) -> (QpSolution, Option<WarmStart>) {
    let n = problem.num_vars();
    let p = problem.eq_b.len();
    let q_all = problem.ineq_b.len();
    let m_kept = red.kept.len();
    let h = &problem.quadratic;
    let c = &problem.linear;
    let scale = c.amax().max(1.0);
    let dual_tol = tol * scale;
    let limit = iteration_limit(n, p + m_kept);

    let mut st = State {
        problem,
        p,
        x: DVector::zeros(n),
        fixed: vec![None; n],
        rows: Vec::new(),
    };
    let mut iterations = 0;

    let usable_warm = warm.filter(|w| w.x.len() == n && feasible(problem, red, &w.x, tol));
    if let Some(w) = usable_warm {
        st.x = w.x.clone();
        for &j in &w.at_lower {
            if j < n && red.lo[j].is_finite() && (st.x[j] - red.lo[j]).abs() <= tol {
                st.x[j] = red.lo[j];
                st.fixed[j] = Some(Side::Lower);
            }
        }
        for &j in &w.at_upper {
            if j < n && st.fixed[j].is_none() && red.hi[j].is_finite() && (st.x[j] - red.hi[j]).abs() <= tol {
                st.x[j] = red.hi[j];
                st.fixed[j] = Some(Side::Upper);
            }
        }
        st.rows = w
            .rows
            .iter()
            .copied()
            .filter(|&r| red.kept.contains(&r))
            .filter(|&r| {
                let ax = problem.ineq_a.row(r).dot(&st.x.transpose());
                (ax - problem.ineq_b[r]).abs() <= tol * (1.0 + problem.ineq_b[r].abs())
            })
            .collect();
    } else {
        let lp = QpProblem {
            quadratic: DMatrix::zeros(n, n),
            linear: DVector::zeros(n),
            ..problem.clone()
        };
        let start = simplex::solve(&lp, red, tol);
        iterations += start.iterations;
        if start.status != QpStatus::Optimal {
            let mut s = QpSolution::empty(n, p, q_all, start.status);
            s.objective = problem.objective(&start.x);
            s.x = start.x;
            s.iterations = iterations;
            return (s, None);
        }
        st.x = start.x;
        for j in 0..n {
            st.x[j] = st.x[j].clamp(red.lo[j], red.hi[j]);
        }
    }
    for j in 0..n {
        if red.lo[j] == red.hi[j] {
            st.x[j] = red.lo[j];
            st.fixed[j] = Some(Side::Lower);
        }
    }

    let mut just_newton = false;
    let mut streak = 0;
    let status;
    loop {
        if iterations >= limit {
            status = QpStatus::IterationLimit;
            break;
        }
        iterations += 1;
        let bland = streak > DEGENERATE_STREAK;
        let free = st.free();
        let basis = st.basis(&free);
        let g = h * &st.x + c;
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&j| g[j]));

        let mut step: Option<(DVector<f64>, bool)> = None;
        if !just_newton && !free.is_empty() {
            let z = null_space(&basis.a);
            if z.ncols() > 0 {
                let h_ff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
                let hr = z.transpose() * &h_ff * &z;
                let r = z.transpose() * &g_free;
                let eig = hr.symmetric_eigen();
                let lmax = eig.eigenvalues.amax().max(1.0);
                let thr = 1e-10 * lmax;
                let mut r0 = DVector::zeros(r.len());
                let mut newton = DVector::zeros(r.len());
                for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                    let v = eig.eigenvectors.column(i);
                    let coef = v.dot(&r);
                    if lam <= thr {
                        r0.axpy(coef, &v, 1.0);
                    } else {
                        newton.axpy(-coef / lam, &v, 1.0);
                    }
                }
                let (pz, is_newton) = if r0.amax() > 1e-3 * dual_tol {
                    (-r0, false)
                } else {
                    (newton, true)
                };
                let pf = &z * pz;
                let mut pfull = DVector::zeros(n);
                for (k, &j) in free.iter().enumerate() {
                    pfull[j] = pf[k];
                }
                let tiny = 1e-13 * (1.0 + st.x.amax());
                if pfull.amax() > tiny {
                    step = Some((pfull, is_newton));
                }
            }
        }

        let Some((dir, is_newton)) = step else {
            // Stationary on the working set: check multipliers.
            let lam = if basis.ids.is_empty() {
                DVector::zeros(0)
            } else {
                let at = basis.a.transpose();
                at.svd(true, true)
                    .solve(&(-&g_free), 1e-14)
                    .unwrap_or_else(|_| DVector::zeros(basis.ids.len()))
            };
            let mut atl = DVector::zeros(n);
            for (k, id) in basis.ids.iter().enumerate() {
                atl += st.row(*id).transpose() * lam[k];
            }
            // (constraint id for Bland ordering, multiplier, what to drop)
            let mut worst: Option<(usize, f64, Drop)> = None;
            let mut consider = |key: usize, mult: f64, what: Drop| {
                if mult >= -dual_tol {
                    return;
                }
                let better = match &worst {
                    None => true,
                    Some((k, m, _)) => {
                        if bland {
                            key < *k
                        } else {
                            mult < *m
                        }
                    }
                };
                if better {
                    worst = Some((key, mult, what));
                }
            };
            for (k, id) in basis.ids.iter().enumerate() {
                if let Err(r) = id {
                    consider(*r, lam[k], Drop::Row(*r));
                }
            }
            for j in 0..n {
                if red.lo[j] == red.hi[j] {
                    continue;
                }
                let gj = g[j] + atl[j];
                match st.fixed[j] {
                    Some(Side::Lower) => consider(q_all + j, gj, Drop::Var(j)),
                    Some(Side::Upper) => consider(q_all + j, -gj, Drop::Var(j)),
                    None => {}
                }
            }
            match worst {
                None => {
                    let mut sol = QpSolution::empty(n, p, q_all, QpStatus::Optimal);
                    for (k, id) in basis.ids.iter().enumerate() {
                        match id {
                            Ok(e) => sol.eq_duals[*e] = lam[k],
                            Err(r) => sol.ineq_duals[*r] = lam[k],
                        }
                    }
                    let (zeta, omega) = red.finish_duals(problem, &st.x, &sol.eq_duals, &mut sol.ineq_duals);
                    sol.bound_duals = zeta;
                    sol.upper_duals = omega;
                    sol.objective = problem.objective(&st.x);
                    sol.x = st.x.clone();
                    sol.iterations = iterations;
                    return (sol, Some(warm_start(&st)));
                }
                Some((_, _, Drop::Row(r))) => st.rows.retain(|&x| x != r),
                Some((_, _, Drop::Var(j))) => st.fixed[j] = None,
            }
            just_newton = false;
            continue;
        };

        // Ratio test against constraints outside the working set.
        let mut alpha = if is_newton { 1.0 } else { f64::INFINITY };
        let mut block: Option<(usize, Block)> = None;
        let offer = |key: usize, a: f64, what: Block, alpha: &mut f64, block: &mut Option<(usize, Block)>| {
            let a = a.max(0.0);
            let better = a < *alpha || (a == *alpha && block.as_ref().is_some_and(|(k, _)| key < *k));
            if better {
                *alpha = a;
                *block = Some((key, what));
            }
        };
        for j in 0..n {
            if st.fixed[j].is_some() || dir[j] == 0.0 {
                continue;
            }
            if dir[j] < 0.0 && red.lo[j].is_finite() {
                offer(q_all + j, (st.x[j] - red.lo[j]) / -dir[j], Block::Var(j, Side::Lower), &mut alpha, &mut block);
            } else if dir[j] > 0.0 && red.hi[j].is_finite() {
                offer(q_all + j, (red.hi[j] - st.x[j]) / dir[j], Block::Var(j, Side::Upper), &mut alpha, &mut block);
            }
        }
        for &r in &red.kept {
            if st.rows.contains(&r) {
                continue;
            }
            let row = problem.ineq_a.row(r);
            let ad = row.dot(&dir.transpose());
            if ad > 1e-12 * row.amax() * dir.amax() {
                let slack = problem.ineq_b[r] - row.dot(&st.x.transpose());
                offer(r, slack / ad, Block::Row(r), &mut alpha, &mut block);
            }
        }
        if alpha.is_infinite() {
            status = QpStatus::Unbounded;
            break;
        }
        st.x.axpy(alpha, &dir, 1.0);
        streak = if alpha <= 1e-14 { streak + 1 } else { 0 };
        match block {
            Some((_, Block::Var(j, side))) => {
                st.x[j] = if side == Side::Lower { red.lo[j] } else { red.hi[j] };
                st.fixed[j] = Some(side);
                just_newton = false;
            }
            Some((_, Block::Row(r))) => {
                st.rows.push(r);
                just_newton = false;
            }
            None => just_newton = true,
        }
    }
    let mut sol = QpSolution::empty(n, p, q_all, status);
    sol.objective = problem.objective(&st.x);
    sol.x = st.x.clone();
    sol.iterations = iterations;
    (sol, Some(warm_start(&st)))
}

enum Drop {
    Row(usize),
    Var(usize),
}

enum Block {
    Row(usize),
    Var(usize, Side),
}

fn warm_start(st: &State<'_>) -> WarmStart {
    let mut at_lower = Vec::new();
    let mut at_upper = Vec::new();
    for (j, f) in st.fixed.iter().enumerate() {
        match f {
            Some(Side::Lower) => at_lower.push(j),
            Some(Side::Upper) => at_upper.push(j),
            None => {}
        }
    }
    WarmStart {
        x: st.x.clone(),
        at_lower,
        at_upper,
        rows: st.rows.clone(),
    }
}

fn feasible(problem: &QpProblem, red: &Reduced, x: &DVector<f64>, tol: f64) -> bool {
    if x.iter().any(|v| !v.is_finite()) {
        return false;
    }
    for j in 0..x.len() {
        if x[j] < red.lo[j] - tol || x[j] > red.hi[j] + tol {
            return false;
        }
    }
    let eq = &problem.eq_a * x - &problem.eq_b;
    if eq.iter().zip(problem.eq_b.iter()).any(|(r, b)| r.abs() > tol * (1.0 + b.abs())) {
        return false;
    }
    let ineq = &problem.ineq_a * x - &problem.ineq_b;
    !ineq.iter().zip(problem.ineq_b.iter()).any(|(r, b)| *r > tol * (1.0 + b.abs()))
}
