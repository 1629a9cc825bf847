//! Emptiness LP for constrained zonotopes and its right-hand-side sensitivity.
//!
//! For `Z = <c, G, A, b>` the program
//!
//! ```text
//! v* = min v   s.t.  A z = b,  -v <= z_i <= v
//! ```
//!
//! decides emptiness: `Z` is nonempty iff `v* <= 1`. Instead of splitting `z`
//! into nonnegative parts we solve the equivalent homogenised program
//!
//! ```text
//! t* = max t   s.t.  A w - b t = 0,  -1 <= w_i <= 1,  t >= 0
//! ```
//!
//! with `v* = 1 / t*` and `z* = w* / t*`. The boxed variables keep the basis
//! small and the simplex multipliers of the homogenised rows give
//! `dv*/db = -v* * lambda`.

mod simplex;

use crate::error::{Error, Result};
use crate::setgeom::{conzono_intersect, ConstrainedZonotope, Zonotope};
use crate::{Matrix, Vector};

use simplex::{BoundedLp, SimplexStatus};

/// Default slack added to `v* <= 1` on the collision side.
pub const DEFAULT_MARGIN: f64 = 1e-9;

const DEGENERACY_PERTURBATION: f64 = 1e-7;
const DEGENERACY_DUAL_JUMP: f64 = 1e-2;
const ZERO_RHS: f64 = 1e-14;
const ZERO_T: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    TimeLimit,
}

/// Equality data `(A, b)` of an emptiness check.
#[derive(Debug, Clone, PartialEq)]
pub struct EmptinessProblem {
    pub a: Matrix,
    pub b: Vector,
}

impl EmptinessProblem {
    pub fn new(a: Matrix, b: Vector) -> Self {
        assert_eq!(a.nrows(), b.len(), "constraint rows and rhs length differ");
        Self { a, b }
    }

    pub fn num_constraints(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_generators(&self) -> usize {
        self.a.ncols()
    }

    pub fn with_rhs(&self, b: Vector) -> Self {
        Self::new(self.a.clone(), b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Optimal value; `f64::INFINITY` when the equalities have no solution.
    pub v_star: f64,
    pub z_star: Vector,
    /// `dv*/db`, one entry per equality row.
    pub equality_duals: Vector,
    pub status: LpStatus,
    pub iterations: usize,
}

impl LpSolution {
    fn infeasible(n_g: usize, n_c: usize, iterations: usize) -> Self {
        Self {
            v_star: f64::INFINITY,
            z_star: Vector::zeros(n_g),
            equality_duals: Vector::zeros(n_c),
            status: LpStatus::Infeasible,
            iterations,
        }
    }

    /// `Z` is nonempty at the given slack.
    pub fn nonempty(&self, margin: f64) -> bool {
        match self.status {
            LpStatus::Optimal => self.v_star <= 1.0 + margin,
            LpStatus::Infeasible => false,
            LpStatus::TimeLimit => true,
        }
    }
}

fn iteration_cap(n_c: usize, n_g: usize) -> usize {
    50 * (n_c + n_g + 1) + 100
}

/// Solve the emptiness LP for the equality data `(A, b)`.
pub fn emptiness_lp(problem: &EmptinessProblem) -> LpSolution {
    let (n_c, n_g) = problem.a.shape();
    let a = &problem.a;
    let b = &problem.b;

    if b.amax() <= ZERO_RHS {
        return LpSolution {
            v_star: 0.0,
            z_star: Vector::zeros(n_g),
            equality_duals: Vector::zeros(n_c),
            status: LpStatus::Optimal,
            iterations: 0,
        };
    }
    if n_g == 0 {
        return LpSolution::infeasible(0, n_c, 0);
    }

    // Row equilibration; duals are mapped back below.
    let mut row_scale = vec![1.0; n_c];
    let mut lp_a = Matrix::zeros(n_c, n_g + 1);
    for k in 0..n_c {
        let s = a.row(k).amax().max(b[k].abs());
        let s = if s > 0.0 { 1.0 / s } else { 1.0 };
        row_scale[k] = s;
        for j in 0..n_g {
            lp_a[(k, j)] = a[(k, j)] * s;
        }
        lp_a[(k, n_g)] = -b[k] * s;
    }
    let rhs = Vector::zeros(n_c);
    let mut cost = Vector::zeros(n_g + 1);
    cost[n_g] = 1.0;
    let mut lower = vec![-1.0; n_g + 1];
    let mut upper = vec![1.0; n_g + 1];
    lower[n_g] = 0.0;
    upper[n_g] = f64::INFINITY;

    let out = simplex::solve(
        &BoundedLp {
            a: &lp_a,
            rhs: &rhs,
            cost: &cost,
            lower: &lower,
            upper: &upper,
        },
        iteration_cap(n_c, n_g),
    );
    match out.status {
        SimplexStatus::Optimal => {}
        SimplexStatus::Infeasible => return LpSolution::infeasible(n_g, n_c, out.iterations),
        // A ray in t would mean b = 0, handled above; either way treat as unresolved.
        SimplexStatus::Unbounded | SimplexStatus::IterationLimit => {
            return LpSolution {
                v_star: 0.0,
                z_star: Vector::zeros(n_g),
                equality_duals: Vector::zeros(n_c),
                status: LpStatus::TimeLimit,
                iterations: out.iterations,
            }
        }
    }
    let t = out.x[n_g];
    if t <= ZERO_T {
        return LpSolution::infeasible(n_g, n_c, out.iterations);
    }
    let v_star = 1.0 / t;
    let z_star = out.x.rows(0, n_g) * v_star;
    let equality_duals =
        Vector::from_iterator(n_c, (0..n_c).map(|k| -out.duals[k] * v_star * row_scale[k]));
    LpSolution {
        v_star,
        z_star,
        equality_duals,
        status: LpStatus::Optimal,
        iterations: out.iterations,
    }
}

/// Dual objective `b^T y` for the duals stored in `sol`.
pub fn dual_objective(problem: &EmptinessProblem, sol: &LpSolution) -> f64 {
    problem.b.dot(&sol.equality_duals)
}

#[derive(Debug, Clone)]
pub struct Collision {
    pub colliding: bool,
    pub v_star: f64,
    pub solution: LpSolution,
    pub problem: EmptinessProblem,
    /// First row of the `c2 - c1` block inside `problem`.
    pub center_rows: usize,
}

/// Intersect a reachable set with an obstacle and run the emptiness test.
pub fn is_colliding(r: &Zonotope, obs: &ConstrainedZonotope, margin: f64) -> Result<Collision> {
    if r.dim() != obs.dim() {
        return Err(Error::dim("is_colliding", obs.dim(), r.dim()));
    }
    let inter = conzono_intersect(&r.to_constrained(), obs)?;
    let problem = inter.emptiness_problem();
    let solution = emptiness_lp(&problem);
    Ok(Collision {
        colliding: solution.nonempty(margin),
        v_star: solution.v_star,
        center_rows: obs.num_constraints(),
        solution,
        problem,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsGradient {
    pub grad: Vector,
    pub degenerate: bool,
}

/// `dv*/db` for an optimal solve, flagged when a small rhs perturbation moves
/// the duals, which happens when the optimal basis is not unique.
pub fn grad_v_wrt_rhs(problem: &EmptinessProblem, sol: &LpSolution) -> Result<RhsGradient> {
    if sol.status != LpStatus::Optimal {
        return Err(Error::Invariant(format!(
            "rhs gradient needs an optimal solve, got {:?}",
            sol.status
        )));
    }
    let mut degenerate = false;
    'rows: for k in 0..problem.num_constraints() {
        for sign in [1.0, -1.0] {
            let mut b = problem.b.clone();
            b[k] += sign * DEGENERACY_PERTURBATION;
            let other = emptiness_lp(&problem.with_rhs(b));
            if other.status != LpStatus::Optimal
                || (&other.equality_duals - &sol.equality_duals).amax() > DEGENERACY_DUAL_JUMP
            {
                degenerate = true;
                break 'rows;
            }
        }
    }
    Ok(RhsGradient {
        grad: sol.equality_duals.clone(),
        degenerate,
    })
}
