//! Dense convex QP with box constraints on the decision vector and optional
//! quadratically-penalized bounds on linear functions of it.
//!
//! ```text
//!     minimize   ½ uᵀHu + gᵀu + c₀ + w · Σₖ dist(sₖ, [s_lo, s_hi])²
//!     subject to lb ≤ u ≤ ub,         s = s₀ + M u
//! ```
//!
//! The box part is solved by a primal active-set method, which terminates
//! with the exact minimizer for the small, well-conditioned problems the
//! controller produces. The penalty is piecewise quadratic; an outer loop
//! fixes the set of violated rows, solves, and repeats until the set is
//! stable (a semismooth Newton iteration on the penalty).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 500;

/// Bounds `s_lo ≤ s₀ + M u ≤ s_hi` enforced by quadratic penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftBounds {
    pub offset: DVector<f64>,
    pub map: DMatrix<f64>,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    /// Constant term of the quadratic, so that objective values equal the
    /// unreduced cost they were condensed from.
    pub constant: f64,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub slack_weight: f64,
    pub soft: Option<SoftBounds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `‖u − Π(u − ∇f(u))‖∞`, zero exactly at a KKT point.
    pub kkt_residual: f64,
}

impl QpProblem {
    /// Box-constrained QP `½uᵀHu + gᵀu` without penalized rows.
    pub fn boxed(
        h: DMatrix<f64>,
        g: DVector<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self> {
        let qp = Self {
            h,
            g,
            constant: 0.0,
            lb,
            ub,
            slack_weight: 0.0,
            soft: None,
        };
        qp.validate()?;
        Ok(qp)
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.g.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty QP".into()));
        }
        if self.h.shape() != (n, n) || self.lb.len() != n || self.ub.len() != n {
            return Err(Error::InvalidArgument(format!(
                "QP dimension mismatch: H is {:?}, g {n}, lb {}, ub {}",
                self.h.shape(),
                self.lb.len(),
                self.ub.len()
            )));
        }
        let scale = self.h.amax().max(1.0);
        for i in 0..n {
            for j in 0..i {
                if (self.h[(i, j)] - self.h[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidArgument("H is not symmetric".into()));
                }
            }
            if !(self.lb[i] <= self.ub[i]) {
                return Err(Error::InvalidArgument(format!(
                    "lb[{i}] = {} exceeds ub[{i}] = {}",
                    self.lb[i], self.ub[i]
                )));
            }
        }
        if self.h.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("H is not positive definite".into()));
        }
        if let Some(soft) = &self.soft {
            if soft.map.ncols() != n || soft.map.nrows() != soft.offset.len() {
                return Err(Error::InvalidArgument(
                    "soft-bound dimension mismatch".into(),
                ));
            }
            if !(soft.lower < soft.upper) || !(self.slack_weight > 0.0) {
                return Err(Error::InvalidArgument("invalid soft bounds".into()));
            }
        }
        Ok(())
    }

    /// `½uᵀHu + gᵀu + c₀`, the unpenalized part of the objective.
    pub fn quadratic_cost(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u) + self.constant
    }

    pub fn penalty(&self, u: &DVector<f64>) -> f64 {
        let Some(soft) = &self.soft else { return 0.0 };
        let s = &soft.offset + &soft.map * u;
        self.slack_weight
            * s.iter()
                .map(|&sk| {
                    let over = (sk - soft.upper).max(0.0) + (soft.lower - sk).max(0.0);
                    over * over
                })
                .sum::<f64>()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        self.quadratic_cost(u) + self.penalty(u)
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut grad = &self.h * u + &self.g;
        if let Some(soft) = &self.soft {
            let s = &soft.offset + &soft.map * u;
            for (k, &sk) in s.iter().enumerate() {
                let over = (sk - soft.upper).max(0.0) - (soft.lower - sk).max(0.0);
                if over != 0.0 {
                    grad += soft.map.row(k).transpose() * (2.0 * self.slack_weight * over);
                }
            }
        }
        grad
    }

    pub fn kkt_residual(&self, u: &DVector<f64>) -> f64 {
        let grad = self.gradient(u);
        (0..u.len())
            .map(|i| (u[i] - (u[i] - grad[i]).clamp(self.lb[i], self.ub[i])).abs())
            .fold(0.0, f64::max)
    }

    fn project(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = u[i].clamp(self.lb[i], self.ub[i]);
        }
    }

    /// Signs of the penalized rows violated at `u`: +1 above, −1 below.
    fn violated_rows(&self, u: &DVector<f64>) -> Vec<i8> {
        let Some(soft) = &self.soft else {
            return Vec::new();
        };
        let s = &soft.offset + &soft.map * u;
        s.iter()
            .map(|&sk| {
                if sk > soft.upper {
                    1
                } else if sk < soft.lower {
                    -1
                } else {
                    0
                }
            })
            .collect()
    }

    /// Quadratic model that coincides with the objective wherever exactly
    /// the rows in `active` are violated.
    fn local_quadratic(&self, active: &[i8]) -> (DMatrix<f64>, DVector<f64>) {
        let mut h = self.h.clone();
        let mut g = self.g.clone();
        if let Some(soft) = &self.soft {
            let w2 = 2.0 * self.slack_weight;
            for (k, &side) in active.iter().enumerate() {
                let bound = match side {
                    1 => soft.upper,
                    -1 => soft.lower,
                    _ => continue,
                };
                let row = soft.map.row(k).transpose();
                h += &row * row.transpose() * w2;
                g += &row * (w2 * (soft.offset[k] - bound));
            }
        }
        (h, g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fixed {
    Free,
    Lower,
    Upper,
}

/// Exact minimizer of `½uᵀHu + gᵀu` over the box, by primal active set.
/// Returns the iterate and the number of iterations spent.
fn solve_box(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    warm: Option<&DVector<f64>>,
    budget: usize,
) -> (DVector<f64>, usize, bool) {
    let n = g.len();
    let mut x = match warm {
        Some(w) => w.clone(),
        None => match h.clone().cholesky() {
            Some(chol) => chol.solve(&(-g)),
            None => DVector::zeros(n),
        },
    };
    let mut state = vec![Fixed::Free; n];
    for i in 0..n {
        if x[i] <= lb[i] {
            x[i] = lb[i];
            state[i] = Fixed::Lower;
        } else if x[i] >= ub[i] {
            x[i] = ub[i];
            state[i] = Fixed::Upper;
        }
    }
    let tol = 1e-12 * (1.0 + g.amax() + h.amax());

    for iter in 1..=budget {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == Fixed::Free).collect();
        let mut step_done = true;
        if !free.is_empty() {
            // subspace minimizer over the free coordinates
            let m = free.len();
            let mut hff = DMatrix::zeros(m, m);
            let mut rhs = DVector::zeros(m);
            for (a, &i) in free.iter().enumerate() {
                let mut r = -g[i];
                for j in 0..n {
                    if state[j] != Fixed::Free {
                        r -= h[(i, j)] * x[j];
                    }
                }
                rhs[a] = r;
                for (b, &j) in free.iter().enumerate() {
                    hff[(a, b)] = h[(i, j)];
                }
            }
            let Some(chol) = hff.cholesky() else {
                return (x, iter, false);
            };
            let z = chol.solve(&rhs);
            let mut alpha = 1.0;
            let mut blocking = None;
            for (a, &i) in free.iter().enumerate() {
                let p = z[a] - x[i];
                if p < 0.0 && x[i] + p < lb[i] {
                    let t = (lb[i] - x[i]) / p;
                    if t < alpha {
                        alpha = t;
                        blocking = Some((i, Fixed::Lower));
                    }
                } else if p > 0.0 && x[i] + p > ub[i] {
                    let t = (ub[i] - x[i]) / p;
                    if t < alpha {
                        alpha = t;
                        blocking = Some((i, Fixed::Upper));
                    }
                }
            }
            for (a, &i) in free.iter().enumerate() {
                x[i] = if blocking.is_none() {
                    z[a]
                } else {
                    (x[i] + alpha * (z[a] - x[i])).clamp(lb[i], ub[i])
                };
            }
            if let Some((i, side)) = blocking {
                x[i] = if side == Fixed::Lower { lb[i] } else { ub[i] };
                state[i] = side;
                step_done = false;
            }
        }
        if !step_done {
            continue;
        }
        // multipliers of the fixed coordinates
        let grad = h * &x + g;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let violation = match state[i] {
                Fixed::Lower if lb[i] < ub[i] => -grad[i],
                Fixed::Upper if lb[i] < ub[i] => grad[i],
                _ => continue,
            };
            if violation > tol && worst.is_none_or(|(_, w)| violation > w) {
                worst = Some((i, violation));
            }
        }
        match worst {
            Some((i, _)) => state[i] = Fixed::Free,
            None => return (x, iter, true),
        }
    }
    (x, budget, false)
}

/// Solves `qp` to its KKT point; `max_iter` caps the total number of
/// active-set iterations. On hitting the cap the best iterate is returned
/// with `converged = false`.
pub fn solve_qp(qp: &QpProblem, max_iter: usize) -> QpSolution {
    let mut used = 0;
    let mut active = vec![0i8; qp.soft.as_ref().map_or(0, |s| s.offset.len())];
    let mut warm: Option<DVector<f64>> = None;
    let mut best: Option<(f64, DVector<f64>)> = None;
    loop {
        let (h, g) = qp.local_quadratic(&active);
        let (mut u, iters, ok) = solve_box(
            &h,
            &g,
            &qp.lb,
            &qp.ub,
            warm.as_ref(),
            max_iter.saturating_sub(used).max(1),
        );
        used += iters;
        qp.project(&mut u);
        let value = qp.objective(&u);
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, u.clone()));
        }
        let next = qp.violated_rows(&u);
        if ok && next == active {
            let kkt_residual = qp.kkt_residual(&u);
            return QpSolution {
                u,
                iterations: used,
                converged: true,
                kkt_residual,
            };
        }
        if used >= max_iter {
            let (_, u) = best.expect("at least one iterate");
            let kkt_residual = qp.kkt_residual(&u);
            return QpSolution {
                u,
                iterations: used,
                converged: false,
                kkt_residual,
            };
        }
        active = next;
        warm = Some(u);
    }
}
