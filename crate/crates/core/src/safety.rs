//! Receding-horizon safety loop: certify a candidate plan's reach tube,
//! push unsafe plans out of collision by projected gradient ascent on the
//! emptiness value, and fall back to the last certified plan.

use std::time::{Duration, Instant};

use crate::envsim::{BlackBoxEnv, Obstacle};
use crate::error::{Error, Result};
use crate::lincheck::{self, grad_v_wrt_rhs, Collision};
use crate::reach::{ReachTube, Reachability};
use crate::setgeom::{Interval, Zonotope};
use crate::{Matrix, Vector};

/// Actions followed by a braking suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<Vector>,
    pub brake_suffix: Vec<Vector>,
    pub origin_time: usize,
}

impl Plan {
    /// Projects `actions` into the action box and appends the braking
    /// suffix computed from `x`.
    pub fn new(env: &BlackBoxEnv, x: &Vector, actions: Vec<Vector>, origin_time: usize) -> Self {
        let actions: Vec<Vector> = actions
            .iter()
            .map(|u| project_action(u, env.action_interval()))
            .collect();
        let brake_suffix = env.brake_suffix(x, &actions);
        Self {
            actions,
            brake_suffix,
            origin_time,
        }
    }

    pub fn brake_only(env: &BlackBoxEnv, x: &Vector, origin_time: usize) -> Self {
        Self::new(env, x, Vec::new(), origin_time)
    }

    pub fn len(&self) -> usize {
        self.actions.len() + self.brake_suffix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_actions(&self) -> Vec<Vector> {
        self.actions
            .iter()
            .chain(&self.brake_suffix)
            .cloned()
            .collect()
    }

    pub fn action(&self, i: usize) -> Option<&Vector> {
        self.actions
            .get(i)
            .or_else(|| self.brake_suffix.get(i.checked_sub(self.actions.len())?))
    }

    pub fn within(&self, u: &Interval) -> bool {
        self.actions
            .iter()
            .chain(&self.brake_suffix)
            .all(|a| u.contains(a))
    }
}

/// Euclidean projection onto an axis-aligned box.
pub fn project_action(u: &Vector, bounds: &Interval) -> Vector {
    bounds.clamp(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustScope {
    /// Step every nominal action that precedes the colliding set.
    All,
    /// Step only the action that produces the colliding set.
    Last,
}

impl AdjustScope {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "all" => Ok(AdjustScope::All),
            "last" => Ok(AdjustScope::Last),
            other => Err(Error::Config(format!("unknown adjust scope `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdjustScope::All => "all",
            AdjustScope::Last => "last",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyConfig {
    pub gamma: f64,
    pub gamma_floor: f64,
    pub t_max: Duration,
    pub max_iterations_per_step: usize,
    pub margin: f64,
    pub scope: AdjustScope,
    pub stopped_tolerance: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            gamma_floor: 1e-4,
            t_max: Duration::from_millis(100),
            max_iterations_per_step: 50,
            margin: lincheck::DEFAULT_MARGIN,
            scope: AdjustScope::All,
            stopped_tolerance: 1e-6,
        }
    }
}

/// A colliding (tube set, obstacle) pair.
#[derive(Debug, Clone)]
pub struct CollisionRecord {
    pub step: usize,
    pub obstacle: usize,
    pub collision: Collision,
}

#[derive(Debug, Clone)]
pub struct Certificate {
    pub tube: ReachTube,
    pub safe: bool,
    pub stopped: bool,
    /// Smallest `v*` among the pairs that needed an LP.
    pub worst: Option<(usize, usize, f64)>,
    pub collisions: Vec<CollisionRecord>,
    /// LPs solved; pairs with disjoint bounding boxes are skipped.
    pub lp_solves: usize,
}

#[derive(Debug, Clone)]
pub struct SafetyOutcome {
    pub plan: Plan,
    pub certified: bool,
    pub adjusted: bool,
    pub iterations: usize,
    pub elapsed: Duration,
    pub budget_exhausted: bool,
    pub tube: Option<ReachTube>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionGradient {
    pub grad: Vector,
    pub degenerate: bool,
}

/// Certified plan being executed, with the index of its next action.
#[derive(Debug, Clone)]
pub struct CachedPlan {
    pub plan: Plan,
    pub tube: ReachTube,
    pub cursor: usize,
}

impl CachedPlan {
    pub fn remaining(&self) -> usize {
        self.plan.len().saturating_sub(self.cursor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSource {
    /// The planner's plan certified as proposed.
    Nominal,
    /// The planner's plan certified after adjustment.
    Adjusted,
    /// Next action of the previously certified plan.
    Previous,
    /// A freshly certified brake-only plan.
    Failsafe,
    /// No certified plan is available; feedback braking.
    Hold,
}

#[derive(Debug, Clone)]
pub struct StepDecision {
    pub action: Vector,
    pub source: ActionSource,
    /// Verdict on the planner's plan before any adjustment.
    pub nominal_safe: bool,
    pub outcome: SafetyOutcome,
    /// Set that must contain the next true state, when a certified plan
    /// is being followed.
    pub expected_set: Option<Zonotope>,
    pub elapsed: Duration,
}

/// Safety layer for one robot and one dataset.
#[derive(Debug, Clone)]
pub struct SafetyLayer {
    env: BlackBoxEnv,
    reach: Reachability,
    config: SafetyConfig,
    projection: Matrix,
}

impl SafetyLayer {
    pub fn new(env: BlackBoxEnv, reach: Reachability, config: SafetyConfig) -> Result<Self> {
        if reach.state_dim() != env.state_dim() || reach.action_dim() != env.action_dim() {
            return Err(Error::dim(
                "SafetyLayer data",
                env.state_dim(),
                reach.state_dim(),
            ));
        }
        if !(config.gamma > 0.0) || config.t_max.is_zero() {
            return Err(Error::Config("gamma and t_max must be positive".into()));
        }
        let projection = env.position_projection();
        Ok(Self {
            env,
            reach,
            config,
            projection,
        })
    }

    pub fn env(&self) -> &BlackBoxEnv {
        &self.env
    }

    pub fn reachability(&self) -> &Reachability {
        &self.reach
    }

    pub fn config(&self) -> &SafetyConfig {
        &self.config
    }

    pub fn tube(&self, plan: &Plan, x_k: &Vector) -> Result<ReachTube> {
        let mut tube = self.reach.tube(x_k, &plan.all_actions())?;
        tube.start_index = plan.origin_time;
        Ok(tube)
    }

    fn is_stopped(&self, plan: &Plan, x_k: &Vector) -> bool {
        self.env.terminal_speed(x_k, &plan.all_actions()) <= self.config.stopped_tolerance
    }

    /// Check one tube set against every obstacle. Boxes that cannot touch
    /// skip the LP.
    fn check_set(
        &self,
        set: &Zonotope,
        step: usize,
        obstacles: &[Obstacle],
        out: &mut Certificate,
    ) -> Result<()> {
        let projected = set.linear_map(&self.projection)?;
        let hull = projected.interval_hull();
        for (k, obs) in obstacles.iter().enumerate() {
            if disjoint(&hull, obs.bounds()) {
                continue;
            }
            let c = lincheck::is_colliding(&projected, obs.set(), self.config.margin)?;
            out.lp_solves += 1;
            if out.worst.is_none_or(|(_, _, v)| c.v_star < v) {
                out.worst = Some((step, k, c.v_star));
            }
            if c.colliding {
                out.collisions.push(CollisionRecord {
                    step,
                    obstacle: k,
                    collision: c,
                });
            }
        }
        Ok(())
    }

    fn collisions_at(
        &self,
        tube: &ReachTube,
        step: usize,
        obstacles: &[Obstacle],
    ) -> Result<Vec<CollisionRecord>> {
        let mut cert = empty_certificate(tube.clone());
        self.check_set(&tube.sets[step], step, obstacles, &mut cert)?;
        Ok(cert.collisions)
    }

    /// Tube for the whole plan and a collision check of every set.
    /// Obstacles are used as given, so inflate them by the robot radius
    /// first ([`BlackBoxEnv::inflated_obstacles`]).
    pub fn certify(
        &self,
        plan: &Plan,
        obstacles: &[Obstacle],
        x_k: &Vector,
    ) -> Result<Certificate> {
        let tube = self.tube(plan, x_k)?;
        let mut cert = empty_certificate(tube);
        for (j, set) in cert.tube.sets.clone().iter().enumerate() {
            self.check_set(set, j, obstacles, &mut cert)?;
        }
        cert.stopped = self.is_stopped(plan, x_k);
        cert.safe = cert.collisions.is_empty() && cert.stopped;
        Ok(cert)
    }

    /// `dv*/du_i` for a collision found at tube step `j`, through the chain
    /// `B_i^T S_{i+1}^T ... S_{j-1}^T (-P^T y)`, with `y` the duals of the
    /// center rows of the intersection.
    pub fn action_gradient(
        &self,
        tube: &ReachTube,
        record: &CollisionRecord,
        i: usize,
    ) -> Result<ActionGradient> {
        let (mut grads, degenerate) = self.chain_gradients(tube, record, i + 1)?;
        Ok(ActionGradient {
            grad: grads.pop().expect("one gradient per action"),
            degenerate,
        })
    }

    /// Gradients for actions `0..count` in one backward pass.
    pub fn chain_gradients(
        &self,
        tube: &ReachTube,
        record: &CollisionRecord,
        count: usize,
    ) -> Result<(Vec<Vector>, bool)> {
        let j = record.step;
        if j == 0 {
            return Err(Error::ZeroLengthChain(j));
        }
        let m = self.env.action_dim();
        let mut grads = vec![Vector::zeros(m); count];
        let c = &record.collision;
        let rhs = grad_v_wrt_rhs(&c.problem, &c.solution)?;
        let y = rhs
            .grad
            .rows(c.center_rows, self.projection.nrows())
            .into_owned();
        // g holds dv*/dx_{l} while walking l down from j.
        let mut g = -(self.projection.transpose() * y);
        for l in (0..j).rev() {
            if l < count {
                grads[l] = tube.models[l].input_block().transpose() * &g;
            }
            if l == 0 {
                break;
            }
            g = tube.models[l].state_block().transpose() * g;
        }
        Ok((grads, rhs.degenerate))
    }

    /// Projected gradient ascent on `v*`, one tube step at a time.
    pub fn adjust_plan(
        &self,
        plan: &Plan,
        obstacles: &[Obstacle],
        x_k: &Vector,
    ) -> Result<SafetyOutcome> {
        let start = Instant::now();
        let mut plan = plan.clone();
        let mut gamma = self.config.gamma;
        let mut iterations = 0;
        let mut adjusted = false;
        let mut budget_exhausted = false;
        let horizon = plan.len();
        let n_plan = plan.actions.len();

        let mut tube = self.tube(&plan, x_k)?;
        'steps: for j in 1..=horizon {
            let mut local = 0;
            loop {
                if start.elapsed() > self.config.t_max {
                    budget_exhausted = true;
                    break 'steps;
                }
                let hits = self.collisions_at(&tube, j, obstacles)?;
                if hits.is_empty() {
                    break;
                }
                // Remaining collisions at this step sink the plan.
                if local >= self.config.max_iterations_per_step || n_plan == 0 {
                    break 'steps;
                }
                let targets: Vec<usize> = match self.config.scope {
                    AdjustScope::All => (0..j.min(n_plan)).collect(),
                    AdjustScope::Last => vec![(j - 1).min(n_plan - 1)],
                };
                let mut step = vec![Vector::zeros(self.env.action_dim()); targets.len()];
                let mut any_degenerate = false;
                for hit in &hits {
                    if !matches!(hit.collision.solution.status, lincheck::LpStatus::Optimal) {
                        // No duals to follow.
                        continue;
                    }
                    let (grads, degenerate) = self.chain_gradients(&tube, hit, j.min(n_plan))?;
                    any_degenerate |= degenerate;
                    for (slot, &i) in targets.iter().enumerate() {
                        step[slot] += &grads[i];
                    }
                }
                if any_degenerate {
                    gamma = (0.5 * gamma).max(self.config.gamma_floor);
                }
                // gamma is a step length in action units.
                let largest = step.iter().map(|g| g.amax()).fold(0.0, f64::max);
                if !(largest > 0.0) {
                    break 'steps;
                }
                for (slot, &i) in targets.iter().enumerate() {
                    let moved = &plan.actions[i] + (gamma / largest) * &step[slot];
                    plan.actions[i] = project_action(&moved, self.env.action_interval());
                }
                plan.brake_suffix = self.env.brake_suffix(x_k, &plan.actions);
                tube = self.tube(&plan, x_k)?;
                adjusted = true;
                iterations += 1;
                local += 1;
            }
        }

        let cert = self.certify(&plan, obstacles, x_k)?;
        Ok(SafetyOutcome {
            certified: cert.safe && !budget_exhausted,
            plan,
            adjusted,
            iterations,
            elapsed: start.elapsed(),
            budget_exhausted,
            tube: Some(cert.tube),
        })
    }

    /// One control step: certify or adjust the planner's plan, otherwise
    /// continue the stored plan, otherwise brake.
    pub fn safety_step(
        &self,
        x_k: &Vector,
        nominal: &Plan,
        obstacles: &[Obstacle],
        cached: &mut Option<CachedPlan>,
    ) -> Result<StepDecision> {
        let start = Instant::now();
        let cert = self.certify(nominal, obstacles, x_k)?;
        let nominal_safe = cert.safe;
        let outcome = if cert.safe {
            SafetyOutcome {
                plan: nominal.clone(),
                certified: true,
                adjusted: false,
                iterations: 0,
                elapsed: start.elapsed(),
                budget_exhausted: false,
                tube: Some(cert.tube),
            }
        } else {
            self.adjust_plan(nominal, obstacles, x_k)?
        };

        let (action, source) = if outcome.certified {
            let plan = outcome.plan.clone();
            let tube = outcome
                .tube
                .clone()
                .expect("certified outcomes carry a tube");
            let first = plan.action(0).expect("plans have a brake suffix").clone();
            *cached = Some(CachedPlan {
                plan,
                tube,
                cursor: 1,
            });
            let source = if outcome.adjusted {
                ActionSource::Adjusted
            } else {
                ActionSource::Nominal
            };
            (first, source)
        } else if let Some(c) = cached.as_mut().filter(|c| c.remaining() > 0) {
            let u = c.plan.action(c.cursor).expect("cursor in range").clone();
            c.cursor += 1;
            (u, ActionSource::Previous)
        } else {
            let brake = Plan::brake_only(&self.env, x_k, nominal.origin_time);
            let fresh = self.certify(&brake, obstacles, x_k)?;
            if fresh.safe {
                let first = brake.action(0).expect("brake suffix").clone();
                *cached = Some(CachedPlan {
                    plan: brake,
                    tube: fresh.tube,
                    cursor: 1,
                });
                (first, ActionSource::Failsafe)
            } else {
                *cached = None;
                (self.env.brake_action(x_k), ActionSource::Hold)
            }
        };
        let expected_set = match (&source, cached.as_ref()) {
            (ActionSource::Hold, _) | (_, None) => None,
            (_, Some(c)) => c.tube.sets.get(c.cursor).cloned(),
        };
        Ok(StepDecision {
            action,
            source,
            nominal_safe,
            outcome,
            expected_set,
            elapsed: start.elapsed(),
        })
    }
}

fn empty_certificate(tube: ReachTube) -> Certificate {
    Certificate {
        tube,
        safe: false,
        stopped: false,
        worst: None,
        collisions: Vec::new(),
        lp_solves: 0,
    }
}

fn disjoint(a: &Interval, b: &Interval) -> bool {
    (0..a.dim()).any(|i| a.upper()[i] < b.lower()[i] || b.upper()[i] < a.lower()[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reach::ReachConfig;
    use crate::sysid::collect_random_data;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn layer() -> SafetyLayer {
        let env = BlackBoxEnv::point_mass();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = collect_random_data(&env, 300, None, &mut rng).unwrap();
        let reach = Reachability::new(
            &data,
            env.noise(),
            ReachConfig {
                lipschitz_scale: 0.002,
                warp: false,
            },
        )
        .unwrap();
        SafetyLayer::new(env, reach, SafetyConfig::default()).unwrap()
    }

    fn boxed(lo: [f64; 2], hi: [f64; 2]) -> Obstacle {
        Obstacle::aabb(Interval::from_slices(&lo, &hi).unwrap())
    }

    #[test]
    fn projection_clamps() {
        let u = Interval::from_slices(&[0.0, -0.5], &[0.25, 0.5]).unwrap();
        assert_eq!(project_action(&v(&[0.5, 0.9]), &u), v(&[0.25, 0.5]));
        assert_eq!(project_action(&v(&[0.1, 0.0]), &u), v(&[0.1, 0.0]));
    }

    #[test]
    fn vacuous_and_immediate() {
        let l = layer();
        let x = v(&[0.0, 0.0, 0.0, 0.0]);
        let plan = Plan::brake_only(l.env(), &x, 0);
        assert!(l.certify(&plan, &[], &x).unwrap().safe);
        let on_top = boxed([-0.1, -0.1], [0.1, 0.1]);
        let cert = l.certify(&plan, &[on_top], &x).unwrap();
        assert!(!cert.safe);
        assert_eq!(cert.collisions[0].step, 0);
    }

    #[test]
    fn wall_too_close_to_stop() {
        let l = layer();
        let x = v(&[0.0, 0.0, 2.0, 0.0]);
        let plan = Plan::brake_only(l.env(), &x, 0);
        let wall = l
            .env()
            .inflated_obstacles(&[boxed([0.1 + 0.05, -1.0], [0.5, 1.0])]);
        assert!(!l.certify(&plan, &wall, &x).unwrap().safe);
    }

    #[test]
    fn causality_and_zero_chain() {
        let l = layer();
        let x = v(&[0.0, 0.0, 0.5, 0.0]);
        let plan = Plan::new(l.env(), &x, vec![v(&[1.0, 0.0]); 3], 0);
        let obs = l
            .env()
            .inflated_obstacles(&[boxed([0.1, -0.5], [0.4, 0.5])]);
        let cert = l.certify(&plan, &obs, &x).unwrap();
        let hit = cert
            .collisions
            .iter()
            .find(|c| c.step == 2)
            .expect("collides at step 2");
        let g = l.action_gradient(&cert.tube, hit, 2).unwrap();
        assert_eq!(g.grad, Vector::zeros(2));
        let g0 = l.action_gradient(&cert.tube, hit, 0).unwrap();
        // Pushing away means decelerating in x.
        assert!(g0.grad[0] < 0.0);
        let mut at_zero = hit.clone();
        at_zero.step = 0;
        assert!(matches!(
            l.action_gradient(&cert.tube, &at_zero, 0),
            Err(Error::ZeroLengthChain(0))
        ));
    }

    #[test]
    fn safe_plan_untouched() {
        let l = layer();
        let x = v(&[0.0, 0.0, 0.0, 0.0]);
        let plan = Plan::new(l.env(), &x, vec![v(&[0.2, 0.1]); 8], 0);
        let mut cached = None;
        let d = l.safety_step(&x, &plan, &[], &mut cached).unwrap();
        assert_eq!(d.source, ActionSource::Nominal);
        assert_eq!(d.action, plan.actions[0]);
        assert!(!d.outcome.adjusted);
        let out = l.adjust_plan(&plan, &[], &x).unwrap();
        assert!(out.certified && !out.adjusted && out.iterations == 0);
        assert_eq!(out.plan, plan);
    }

    #[test]
    fn enclosed_robot_fails() {
        let l = layer();
        let x = v(&[0.0, 0.0, 0.0, 0.0]);
        let all_around = boxed([-1.0, -1.0], [1.0, 1.0]);
        let plan = Plan::new(l.env(), &x, vec![v(&[0.0, 0.0]); 8], 0);
        let out = l.adjust_plan(&plan, &[all_around], &x).unwrap();
        assert!(!out.certified);
    }

    #[test]
    fn adjust_steers_around_box() {
        let l = layer();
        let x = v(&[0.0, 0.0, 1.0, 0.0]);
        let obs = l
            .env()
            .inflated_obstacles(&[boxed([1.2, -0.05], [1.5, 0.2])]);
        let plan = Plan::new(l.env(), &x, vec![v(&[1.0, 0.0]); 8], 0);
        assert!(!l.certify(&plan, &obs, &x).unwrap().safe);
        let out = l.adjust_plan(&plan, &obs, &x).unwrap();
        if out.certified {
            assert!(l.certify(&out.plan, &obs, &x).unwrap().safe);
            assert!(out.plan.within(l.env().action_interval()));
        }
    }
}
