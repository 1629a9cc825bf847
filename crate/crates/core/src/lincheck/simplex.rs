//! Dense two-phase primal simplex for bounded variables.
//!
//! Solves `max c^T x  s.t.  A x = r,  l <= x <= u` with finite `l` and
//! possibly infinite `u`. Nonbasic variables sit at one of their bounds.
//! Phase one drives a set of sign-adjusted artificial columns to zero, phase
//! two optimises the real objective with the artificials frozen at zero.
//! Entering and leaving choices follow Bland's smallest-index rule.

use crate::{Matrix, Vector};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const RATIO_TIE: f64 = 1e-12;
const PHASE1_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SimplexStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub(crate) struct BoundedLp<'a> {
    pub a: &'a Matrix,
    pub rhs: &'a Vector,
    pub cost: &'a Vector,
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome {
    pub status: SimplexStatus,
    pub x: Vector,
    /// Simplex multipliers `c_B^T B^{-1}`, the sensitivity of the optimum to `r`.
    pub duals: Vector,
    #[cfg_attr(not(test), allow(dead_code))]
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau {
    /// `B^{-1} [A | S]`, `m x (n + m)`.
    t: Matrix,
    basis: Vec<usize>,
    in_basis: Vec<Option<usize>>,
    /// Values of every variable; basic entries are kept in sync.
    x: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Artificial column signs (`S = diag(sign)`).
    sign: Vec<f64>,
    n: usize,
    iterations: usize,
}

enum StepResult {
    Optimal,
    Unbounded,
    Moved,
}

impl Tableau {
    fn new(lp: &BoundedLp<'_>) -> Self {
        let (m, n) = lp.a.shape();
        let mut x = vec![0.0; n + m];
        x[..n].copy_from_slice(lp.lower);
        let xn = Vector::from_column_slice(lp.lower);
        let resid = lp.rhs - lp.a * xn;
        let sign: Vec<f64> = resid
            .iter()
            .map(|r| if *r >= 0.0 { 1.0 } else { -1.0 })
            .collect();

        let mut t = Matrix::zeros(m, n + m);
        for k in 0..m {
            for j in 0..n {
                t[(k, j)] = sign[k] * lp.a[(k, j)];
            }
            t[(k, n + k)] = 1.0;
            x[n + k] = resid[k].abs();
        }
        let mut lower = lp.lower.to_vec();
        lower.extend(std::iter::repeat_n(0.0, m));
        let mut upper = lp.upper.to_vec();
        upper.extend(std::iter::repeat_n(f64::INFINITY, m));
        let mut in_basis = vec![None; n + m];
        for k in 0..m {
            in_basis[n + k] = Some(k);
        }
        Self {
            t,
            basis: (n..n + m).collect(),
            in_basis,
            x,
            lower,
            upper,
            sign,
            n,
            iterations: 0,
        }
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let mut d = cost[j];
        for (k, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                d -= cb * self.t[(k, j)];
            }
        }
        d
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn step(&mut self, cost: &[f64]) -> StepResult {
        let total = self.x.len();
        // Bland: lowest-index improving nonbasic column.
        let mut entering = None;
        for j in 0..total {
            if self.in_basis[j].is_some() || self.upper[j] <= self.lower[j] {
                continue;
            }
            let d = self.reduced_cost(cost, j);
            let at_lower = self.x[j] <= self.lower[j];
            if at_lower && d > COST_TOL {
                entering = Some((j, 1.0));
                break;
            }
            if !at_lower && d < -COST_TOL {
                entering = Some((j, -1.0));
                break;
            }
        }
        let Some((q, dir)) = entering else {
            return StepResult::Optimal;
        };

        let mut theta = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, bool)> = None;
        for k in 0..self.basis.len() {
            let alpha = dir * self.t[(k, q)];
            let b = self.basis[k];
            let (limit, hits_lower) = if alpha > PIVOT_TOL {
                ((self.x[b] - self.lower[b]) / alpha, true)
            } else if alpha < -PIVOT_TOL {
                ((self.upper[b] - self.x[b]) / -alpha, false)
            } else {
                continue;
            };
            let limit = limit.max(0.0);
            let better = match leave {
                _ if limit < theta - RATIO_TIE => true,
                Some((r, _)) if limit <= theta + RATIO_TIE => b < self.basis[r],
                None if limit <= theta + RATIO_TIE && theta.is_finite() => b < q,
                _ => false,
            };
            if better {
                theta = limit;
                leave = Some((k, hits_lower));
            }
        }
        if !theta.is_finite() {
            return StepResult::Unbounded;
        }

        for k in 0..self.basis.len() {
            let b = self.basis[k];
            self.x[b] -= theta * dir * self.t[(k, q)];
        }
        self.x[q] += theta * dir;
        self.iterations += 1;

        match leave {
            None => {
                self.x[q] = if dir > 0.0 {
                    self.upper[q]
                } else {
                    self.lower[q]
                };
            }
            Some((r, hits_lower)) => {
                let out = self.basis[r];
                self.x[out] = if hits_lower {
                    self.lower[out]
                } else {
                    self.upper[out]
                };
                self.pivot(r, q);
                self.in_basis[out] = None;
                self.in_basis[q] = Some(r);
                self.basis[r] = q;
            }
        }
        StepResult::Moved
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.t[(r, q)];
        let cols = self.t.ncols();
        for j in 0..cols {
            self.t[(r, j)] /= p;
        }
        for k in 0..self.t.nrows() {
            if k == r {
                continue;
            }
            let f = self.t[(k, q)];
            if f == 0.0 {
                continue;
            }
            for j in 0..cols {
                let v = self.t[(r, j)];
                if v != 0.0 {
                    self.t[(k, j)] -= f * v;
                }
            }
        }
    }

    fn run(&mut self, cost: &[f64], max_iter: usize) -> Option<StepResult> {
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            match self.step(cost) {
                StepResult::Moved => continue,
                done => return Some(done),
            }
        }
    }

    /// `B^{-1}` read off the artificial block: `T_art = B^{-1} S`.
    fn basis_inverse(&self) -> Matrix {
        let m = self.basis.len();
        let mut inv = self.t.columns(self.n, m).into_owned();
        for k in 0..m {
            let s = self.sign[k];
            inv.column_mut(k).scale_mut(s);
        }
        inv
    }

    /// Recompute the basic values from the nonbasic ones to shed drift.
    fn refresh(&mut self, lp: &BoundedLp<'_>) {
        let m = self.basis.len();
        let mut r = lp.rhs.clone();
        for j in 0..self.x.len() {
            if self.in_basis[j].is_some() || self.x[j] == 0.0 {
                continue;
            }
            let xj = self.x[j];
            if j < self.n {
                for k in 0..m {
                    r[k] -= lp.a[(k, j)] * xj;
                }
            } else {
                r[j - self.n] -= self.sign[j - self.n] * xj;
            }
        }
        let xb = self.basis_inverse() * r;
        for (k, &b) in self.basis.iter().enumerate() {
            self.x[b] = xb[k];
        }
    }
}

pub(crate) fn solve(lp: &BoundedLp<'_>, max_iter: usize) -> SimplexOutcome {
    let (m, n) = lp.a.shape();
    debug_assert_eq!(lp.cost.len(), n);
    let mut tab = Tableau::new(lp);

    let mut phase1 = vec![0.0; n + m];
    for c in phase1.iter_mut().skip(n) {
        *c = -1.0;
    }
    let finish = |tab: &Tableau, status: SimplexStatus, cost: &[f64]| {
        let cb = Vector::from_iterator(m, tab.basis.iter().map(|&b| cost[b]));
        SimplexOutcome {
            status,
            x: Vector::from_column_slice(&tab.x[..n]),
            duals: tab.basis_inverse().transpose() * cb,
            objective: tab.objective(cost),
            iterations: tab.iterations,
        }
    };

    match tab.run(&phase1, max_iter) {
        None => return finish(&tab, SimplexStatus::IterationLimit, &phase1),
        Some(StepResult::Unbounded) => unreachable!("phase one objective is bounded"),
        _ => {}
    }
    let infeasibility: f64 = tab.x[n..].iter().sum();
    let scale = 1.0 + lp.rhs.amax();
    if infeasibility > PHASE1_TOL * scale {
        return finish(&tab, SimplexStatus::Infeasible, &phase1);
    }
    for k in 0..m {
        tab.upper[n + k] = 0.0;
        if tab.in_basis[n + k].is_none() {
            tab.x[n + k] = 0.0;
        }
    }
    tab.refresh(lp);

    let mut phase2 = lp.cost.as_slice().to_vec();
    phase2.extend(std::iter::repeat_n(0.0, m));
    let status = match tab.run(&phase2, max_iter) {
        None => SimplexStatus::IterationLimit,
        Some(StepResult::Unbounded) => SimplexStatus::Unbounded,
        _ => SimplexStatus::Optimal,
    };
    tab.refresh(lp);
    finish(&tab, status, &phase2)
}
