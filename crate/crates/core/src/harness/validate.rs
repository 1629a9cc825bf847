//! Runtime self-checks behind the `validate` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envsim::Obstacle;
use crate::error::Result;
use crate::lincheck::{self, emptiness_lp, LpStatus};
use crate::safety::{CollisionRecord, SafetyLayer};
use crate::setgeom::{ConstrainedZonotope, Interval};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub instances: usize,
    pub non_degenerate: usize,
    pub max_relative_error: f64,
    /// Non-degenerate instances above the tolerance.
    pub failures: usize,
}

/// One colliding instance: a start state, a short action sequence and a box
/// that the last tube set overlaps.
#[derive(Debug, Clone)]
pub struct GradientInstance {
    pub x0: Vector,
    pub actions: Vec<Vector>,
    pub obstacle: Obstacle,
}

/// Draw an instance whose final set collides with a box placed next to it.
pub fn colliding_instance<R: Rng + ?Sized>(
    layer: &SafetyLayer,
    steps: usize,
    rng: &mut R,
) -> Result<GradientInstance> {
    let env = layer.env();
    let p = env.position_projection();
    loop {
        let mut x0 = Vector::zeros(env.state_dim());
        for v in x0.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let actions: Vec<Vector> = (0..steps).map(|_| env.random_action(rng)).collect();
        let tube = layer.reachability().tube(&x0, &actions)?;
        let last = tube.sets[steps].linear_map(&p)?;
        let hull = last.interval_hull();
        let half: Vector = 0.5 * (hull.upper() - hull.lower());
        let dir_angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let size = rng.random_range(0.05..0.3);
        let reach = rng.random_range(0.2..0.9);
        let center = Vector::from_column_slice(&[
            last.center()[0] + dir_angle.cos() * (reach * half[0] + size),
            last.center()[1] + dir_angle.sin() * (reach * half[1] + size),
        ]);
        let lo = center.add_scalar(-size);
        let hi = center.add_scalar(size);
        let obstacle = Obstacle::aabb(Interval::new(lo, hi)?);
        let c = lincheck::is_colliding(&last, obstacle.set(), lincheck::DEFAULT_MARGIN)?;
        if c.colliding && c.solution.status == LpStatus::Optimal {
            return Ok(GradientInstance {
                x0,
                actions,
                obstacle,
            });
        }
    }
}

/// `v*` of the final set against the instance's box for `actions`.
pub fn final_value(
    layer: &SafetyLayer,
    inst: &GradientInstance,
    actions: &[Vector],
) -> Result<f64> {
    let p = layer.env().position_projection();
    let tube = layer.reachability().tube(&inst.x0, actions)?;
    let last = tube.sets[actions.len()].linear_map(&p)?;
    Ok(lincheck::is_colliding(&last, inst.obstacle.set(), lincheck::DEFAULT_MARGIN)?.v_star)
}

/// Analytic gradients for every action of the instance and the degeneracy flag.
pub fn analytic_gradient(
    layer: &SafetyLayer,
    inst: &GradientInstance,
) -> Result<(Vec<Vector>, bool)> {
    let p = layer.env().position_projection();
    let steps = inst.actions.len();
    let tube = layer.reachability().tube(&inst.x0, &inst.actions)?;
    let last = tube.sets[steps].linear_map(&p)?;
    let collision = lincheck::is_colliding(&last, inst.obstacle.set(), lincheck::DEFAULT_MARGIN)?;
    let record = CollisionRecord {
        step: steps,
        obstacle: 0,
        collision,
    };
    layer.chain_gradients(&tube, &record, steps)
}

/// Compare analytic gradients with central differences of step `h`.
pub fn gradient_check(
    layer: &SafetyLayer,
    instances: usize,
    steps: usize,
    h: f64,
    tol: f64,
    seed: u64,
) -> Result<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradientReport {
        instances,
        non_degenerate: 0,
        max_relative_error: 0.0,
        failures: 0,
    };
    for _ in 0..instances {
        let inst = colliding_instance(layer, steps, &mut rng)?;
        let (grads, degenerate) = analytic_gradient(layer, &inst)?;
        if degenerate {
            continue;
        }
        report.non_degenerate += 1;
        let (mut diff, mut scale) = (0.0f64, 0.0f64);
        for i in 0..steps {
            for a in 0..inst.actions[i].len() {
                let mut up = inst.actions.clone();
                let mut down = inst.actions.clone();
                up[i][a] += h;
                down[i][a] -= h;
                let fd = (final_value(layer, &inst, &up)? - final_value(layer, &inst, &down)?)
                    / (2.0 * h);
                diff += (fd - grads[i][a]).powi(2);
                scale = scale.max(fd.abs()).max(grads[i][a].abs());
            }
        }
        let rel = if scale > 1e-12 {
            diff.sqrt() / scale
        } else {
            0.0
        };
        report.max_relative_error = report.max_relative_error.max(rel);
        if rel >= tol {
            report.failures += 1;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpReport {
    pub pairs: usize,
    /// Pairs whose verdict is backed by a checked primal point or dual ray.
    pub certified: usize,
    pub failures: usize,
}

/// A random nonempty constrained zonotope of dimension `n`.
pub fn random_conzono<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<ConstrainedZonotope> {
    let ng = rng.random_range(1..=4);
    let nc = rng.random_range(0..ng.min(3));
    let c = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let g = Matrix::from_fn(n, ng, |_, _| rng.random_range(-1.0..1.0));
    let a = Matrix::from_fn(nc, ng, |_, _| rng.random_range(-1.0..1.0));
    let z0 = Vector::from_fn(ng, |_, _| rng.random_range(-1.0..1.0));
    let b = &a * z0;
    ConstrainedZonotope::new(c, g, a, b)
}

/// Check LP verdicts on random intersections against certificates: a
/// feasible `z` with `|z| <= 1` for nonempty sets, a dual `y` with
/// `b^T y > ||A^T y||_1` for empty ones. Pairs with `|v* - 1| <= gap` are
/// skipped and not counted.
pub fn lp_check(pairs: usize, gap: f64, seed: u64) -> Result<LpReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LpReport {
        pairs: 0,
        certified: 0,
        failures: 0,
    };
    while report.pairs < pairs {
        let n = rng.random_range(1..=3);
        let z1 = random_conzono(n, &mut rng)?;
        let z2 = random_conzono(n, &mut rng)?;
        let problem = z1.intersect(&z2)?.emptiness_problem();
        let sol = emptiness_lp(&problem);
        if sol.status == LpStatus::Optimal && (sol.v_star - 1.0).abs() <= gap {
            continue;
        }
        report.pairs += 1;
        let ok = match sol.status {
            LpStatus::Optimal if sol.v_star <= 1.0 => {
                let resid = (&problem.a * &sol.z_star - &problem.b).amax();
                resid <= 1e-7 * (1.0 + problem.b.amax()) && sol.z_star.amax() <= 1.0 + 1e-9
            }
            LpStatus::Optimal => {
                let y = &sol.equality_duals;
                let bound = (problem.a.transpose() * y).abs().sum();
                problem.b.dot(y) > bound
            }
            LpStatus::Infeasible => true,
            LpStatus::TimeLimit => false,
        };
        if ok {
            report.certified += 1;
        } else {
            report.failures += 1;
        }
    }
    Ok(report)
}
