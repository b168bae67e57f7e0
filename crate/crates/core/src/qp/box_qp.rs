//! Primal active-set method for convex QPs with simple bounds only,
//! `min 1/2 x'Hx + c'x, lower <= x <= upper`, used for small subproblems
//! solved many times in a row. The caller guarantees `H` is symmetric PSD.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::QpStatus;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    /// `Hx + c` at `x`.
    pub gradient: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Free,
    Lower,
    Upper,
    Fixed,
}

/// Starts from `x0` clamped into the box (the origin when absent); variables
/// starting on a bound begin in the working set.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    tol: f64,
) -> BoxQpSolution {
    let mut solver = BoxQp::new(h.clone(), lower.clone(), upper.clone());
    if let Some(x0) = x0 {
        solver.set_start(x0);
    }
    solver.solve(c, tol)
}

/// Box QP with fixed `H` and bounds, solved for a sequence of linear terms.
/// Each solve starts from the previous solution and reuses the last
/// factorization while the free set is unchanged.
#[derive(Debug, Clone)]
pub struct BoxQp {
    h: DMatrix<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
    x: DVector<f64>,
    factor: Option<(Vec<usize>, Cholesky<f64, Dyn>)>,
}

impl BoxQp {
    pub fn new(h: DMatrix<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        let x = DVector::from_fn(lower.len(), |j, _| 0.0f64.clamp(lower[j], upper[j].max(lower[j])));
        Self {
            h,
            lower,
            upper,
            x,
            factor: None,
        }
    }

    pub fn set_start(&mut self, x0: &DVector<f64>) {
        let (lo, hi) = (&self.lower, &self.upper);
        self.x = DVector::from_fn(lo.len(), |j, _| x0[j].clamp(lo[j], hi[j].max(lo[j])));
    }

    pub fn solve(&mut self, c: &DVector<f64>, tol: f64) -> BoxQpSolution {
        let n = c.len();
        let (h, lower, upper) = (&self.h, &self.lower, &self.upper);
        let mut x = self.x.clone();
        if (0..n).any(|j| lower[j] > upper[j]) {
            return finish(h, c, x, QpStatus::Infeasible, 0);
        }
        let mut side: Vec<Side> = (0..n)
            .map(|j| {
                if lower[j] == upper[j] {
                    Side::Fixed
                } else if x[j] == lower[j] {
                    Side::Lower
                } else if x[j] == upper[j] {
                    Side::Upper
                } else {
                    Side::Free
                }
            })
            .collect();
        let scale = 1.0 + c.amax() + h.amax();
        let gtol = tol * scale;
        let ridge = 1e-13 * (1.0 + h.diagonal().amax());
        let cap = 20 * (n + 5);
        let mut status = QpStatus::IterationLimit;
        let mut iterations = cap;
        for it in 0..cap {
            let g = h * &x + c;
            let free: Vec<usize> = (0..n).filter(|j| side[*j] == Side::Free).collect();
            let gmax = free.iter().fold(0.0f64, |m, j| m.max(g[*j].abs()));
            if gmax <= gtol {
                // Release the bound with the most negative multiplier.
                let mut best: Option<(usize, f64)> = None;
                for j in 0..n {
                    let viol = match side[j] {
                        Side::Lower => -g[j],
                        Side::Upper => g[j],
                        _ => continue,
                    };
                    if viol > gtol && best.map_or(true, |(_, v)| viol > v) {
                        best = Some((j, viol));
                    }
                }
                match best {
                    None => {
                        status = QpStatus::Optimal;
                        iterations = it;
                        break;
                    }
                    Some((j, _)) => {
                        side[j] = Side::Free;
                        continue;
                    }
                }
            }
            let nf = free.len();
            if self.factor.as_ref().map_or(true, |(set, _)| *set != free) {
                let hf = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])] + if a == b { ridge } else { 0.0 });
                match hf.cholesky() {
                    Some(ch) => self.factor = Some((free.clone(), ch)),
                    None => {
                        self.factor = None;
                        iterations = it;
                        break;
                    }
                }
            }
            let (_, chol) = self.factor.as_ref().expect("factor set above");
            let df = chol.solve(&DVector::from_fn(nf, |a, _| -g[free[a]]));
            let mut d = DVector::zeros(n);
            for (a, j) in free.iter().enumerate() {
                d[*j] = df[a];
            }
            let slope = g.dot(&d);
            if !(slope < 0.0) {
                iterations = it;
                break;
            }
            let curv = d.dot(&(h * &d));
            let exact = if curv > 1e-14 * d.norm_squared() * scale { -slope / curv } else { f64::INFINITY };
            let mut step = exact;
            let mut block = None;
            for &j in &free {
                let r = if d[j] < 0.0 {
                    (lower[j] - x[j]) / d[j]
                } else if d[j] > 0.0 {
                    (upper[j] - x[j]) / d[j]
                } else {
                    continue;
                };
                if r < step {
                    step = r;
                    block = Some(j);
                }
            }
            if !step.is_finite() {
                status = QpStatus::Unbounded;
                iterations = it;
                break;
            }
            x.axpy(step.max(0.0), &d, 1.0);
            if let Some(j) = block {
                if d[j] < 0.0 {
                    x[j] = lower[j];
                    side[j] = Side::Lower;
                } else {
                    x[j] = upper[j];
                    side[j] = Side::Upper;
                }
            }
            for &j in &free {
                x[j] = x[j].clamp(lower[j], upper[j]);
            }
        }
        if status == QpStatus::Optimal {
            self.x = x.clone();
        }
        finish(h, c, x, status, iterations)
    }
}

fn finish(h: &DMatrix<f64>, c: &DVector<f64>, x: DVector<f64>, status: QpStatus, iterations: usize) -> BoxQpSolution {
    let hx = h * &x;
    let objective = 0.5 * x.dot(&hx) + c.dot(&x);
    BoxQpSolution {
        gradient: hx + c,
        x,
        objective,
        status,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qp::{solve_qp, QpProblem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_dimensional_cases() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let lo = DVector::from_element(1, 0.0);
        let hi = DVector::from_element(1, 1.0);
        // min x^2 - 3x on [0, 1] -> x = 1
        let s = solve_box_qp(&h, &DVector::from_element(1, -3.0), &lo, &hi, None, 1e-12);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.x[0], 1.0);
        // min x^2 - x -> x = 0.5
        let s = solve_box_qp(&h, &DVector::from_element(1, -1.0), &lo, &hi, None, 1e-12);
        assert!((s.x[0] - 0.5).abs() < 1e-12);
        // zero curvature, unbounded below
        let z = DMatrix::zeros(1, 1);
        let inf = DVector::from_element(1, f64::INFINITY);
        let s = solve_box_qp(&z, &DVector::from_element(1, -1.0), &lo, &inf, None, 1e-12);
        assert_eq!(s.status, QpStatus::Unbounded);
        let s = solve_box_qp(&z, &DVector::from_element(1, 1.0), &lo, &inf, Some(&DVector::from_element(1, 5.0)), 1e-12);
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.x[0], 0.0);
        let s = solve_box_qp(&h, &DVector::from_element(1, 1.0), &hi, &lo, None, 1e-12);
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn matches_general_solver_on_random_psd_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for case in 0..300 {
            let n = rng.gen_range(1..=10);
            let rank = rng.gen_range(0..=n);
            let b = DMatrix::from_fn(rank, n, |_, _| rng.gen_range(-1.0..1.0));
            let h = b.transpose() * &b;
            let c = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let lo = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..0.0));
            let hi = DVector::from_fn(n, |j, _| if j % 4 == 3 { lo[j] } else { lo[j] + rng.gen_range(0.1..2.0) });
            let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let s = solve_box_qp(&h, &c, &lo, &hi, Some(&x0), 1e-12);
            assert_eq!(s.status, QpStatus::Optimal, "case {case}");
            let p = QpProblem::new(n)
                .with_quadratic(h.clone())
                .with_linear(c.clone())
                .with_lower(lo.clone())
                .with_upper(hi.clone());
            let r = solve_qp(&p, 1e-10).unwrap();
            assert!((s.objective - r.objective).abs() < 1e-8, "case {case}: {} vs {}", s.objective, r.objective);
            for j in 0..n {
                assert!(s.x[j] >= lo[j] && s.x[j] <= hi[j]);
                let g = s.gradient[j];
                if lo[j] < hi[j] {
                    if s.x[j] > lo[j] && s.x[j] < hi[j] {
                        assert!(g.abs() < 1e-8, "case {case}");
                    } else if s.x[j] == lo[j] {
                        assert!(g > -1e-8);
                    } else {
                        assert!(g < 1e-8);
                    }
                }
            }
        }
    }
}
