//! Analytic stand-ins for a learned policy. They only propose plans; the
//! safety layer never relies on them.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::envsim::{BlackBoxEnv, EnvKind};
use crate::error::{Error, Result};
use crate::safety::Plan;
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerKind {
    GoalSeeker,
    CirclePathFollower,
    RandomPolicy,
}

impl PlannerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "goal" | "goal-seeker" | "goalseeker" => Ok(PlannerKind::GoalSeeker),
            "circle" | "circle-path-follower" | "path" | "path-follower" => {
                Ok(PlannerKind::CirclePathFollower)
            }
            "random" | "random-policy" => Ok(PlannerKind::RandomPolicy),
            other => Err(Error::Config(format!("unknown planner `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::GoalSeeker => "goal-seeker",
            PlannerKind::CirclePathFollower => "circle",
            PlannerKind::RandomPolicy => "random",
        }
    }
}

/// Additive Gaussian exploration noise whose variance decays each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exploration {
    pub variance: f64,
    pub decay: f64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self {
            variance: 0.5,
            decay: 0.99995,
        }
    }
}

const DEADBAND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct NominalPlanner {
    pub kind: PlannerKind,
    pub goal: Vector,
    pub radius: f64,
    pub seed: u64,
    pub exploration: Option<Exploration>,
    /// Cruise speed toward the goal for the point mass.
    pub cruise_speed: f64,
}

impl NominalPlanner {
    pub fn goal_seeker(goal: Vector) -> Self {
        Self {
            kind: PlannerKind::GoalSeeker,
            goal,
            radius: 0.0,
            seed: 0,
            exploration: None,
            cruise_speed: 1.0,
        }
    }

    pub fn circle(radius: f64) -> Self {
        Self {
            kind: PlannerKind::CirclePathFollower,
            goal: Vector::zeros(2),
            radius,
            seed: 0,
            exploration: None,
            cruise_speed: 1.0,
        }
    }

    pub fn random(seed: u64) -> Self {
        Self {
            kind: PlannerKind::RandomPolicy,
            goal: Vector::zeros(2),
            radius: 0.0,
            seed,
            exploration: None,
            cruise_speed: 1.0,
        }
    }

    pub fn with_exploration(mut self, exploration: Exploration, seed: u64) -> Self {
        self.exploration = Some(exploration);
        self.seed = seed;
        self
    }

    fn step_rng(&self, time: usize, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(time as u128 * 64);
        rng
    }

    /// Action at absolute time `time` from state `x`, before projection.
    pub fn action(&self, env: &BlackBoxEnv, x: &Vector, time: usize) -> Vector {
        let mut u = match self.kind {
            PlannerKind::GoalSeeker => self.seek(env, x),
            PlannerKind::CirclePathFollower => self.follow(env, x),
            PlannerKind::RandomPolicy => env.random_action(&mut self.step_rng(time, 1)),
        };
        if let Some(ex) = self.exploration {
            let sd = (ex.variance * ex.decay.powi(time as i32)).sqrt();
            if sd > 0.0 {
                let normal = Normal::new(0.0, sd).expect("finite deviation");
                let mut rng = self.step_rng(time, 2);
                for ui in u.iter_mut() {
                    *ui += normal.sample(&mut rng);
                }
            }
        }
        env.action_interval().clamp(&u)
    }

    /// Roll the policy out on the noiseless model and append braking.
    pub fn propose(&self, env: &BlackBoxEnv, x_k: &Vector, n_plan: usize, time: usize) -> Plan {
        let mut x = x_k.clone();
        let mut actions = Vec::with_capacity(n_plan);
        for i in 0..n_plan {
            let u = self.action(env, &x, time + i);
            x = env.nominal_step(&x, &u);
            actions.push(u);
        }
        Plan::new(env, x_k, actions, time)
    }

    fn seek(&self, env: &BlackBoxEnv, x: &Vector) -> Vector {
        let p = env.position(x);
        let to_goal = &self.goal - &p;
        let dist = to_goal.norm();
        match env.kind() {
            EnvKind::PointMass2D => {
                let vel = Vector::from_column_slice(&[x[2], x[3]]);
                let mut v_des = to_goal.clone();
                if dist > self.cruise_speed {
                    v_des *= self.cruise_speed / dist;
                }
                let u: Vector = 2.0 * (v_des - vel);
                u.map(|a| if a.abs() < DEADBAND { 0.0 } else { a })
            }
            EnvKind::Unicycle2D => {
                if dist <= DEADBAND {
                    return Vector::zeros(2);
                }
                let err = wrap_angle(to_goal[1].atan2(to_goal[0]) - x[2]);
                let v = (0.5 * dist * err.cos()).max(0.0);
                Vector::from_column_slice(&[v, 2.0 * err])
            }
        }
    }

    fn follow(&self, env: &BlackBoxEnv, x: &Vector) -> Vector {
        let (px, py) = (x[0], x[1]);
        let rho = px.hypot(py);
        let (tx, ty, rx, ry) = if rho > DEADBAND {
            (-py / rho, px / rho, px / rho, py / rho)
        } else {
            (0.0, 1.0, 1.0, 0.0)
        };
        let radial_gain = 1.0;
        match env.kind() {
            EnvKind::PointMass2D => {
                let v_max = crate::envsim::POINT_MASS_MAX_SPEED;
                let corr = radial_gain * (self.radius - rho);
                let v_des = [v_max * tx + corr * rx, v_max * ty + corr * ry];
                Vector::from_column_slice(&[2.0 * (v_des[0] - x[2]), 2.0 * (v_des[1] - x[3])])
            }
            EnvKind::Unicycle2D => {
                let dx = tx + radial_gain * (self.radius - rho) * rx;
                let dy = ty + radial_gain * (self.radius - rho) * ry;
                let err = wrap_angle(dy.atan2(dx) - x[2]);
                Vector::from_column_slice(&[
                    crate::envsim::UNICYCLE_MAX_SPEED * err.cos().max(0.0),
                    2.0 * err,
                ])
            }
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn goal_fixed_point() {
        for env in [BlackBoxEnv::point_mass(), BlackBoxEnv::unicycle()] {
            let planner = NominalPlanner::goal_seeker(v(&[1.0, -0.5]));
            let mut x = Vector::zeros(env.state_dim());
            x[0] = 1.0;
            x[1] = -0.5;
            let u = planner.action(&env, &x, 0);
            assert!(u.amax() <= 1e-6, "{u}");
        }
    }

    #[test]
    fn random_is_reproducible() {
        let env = BlackBoxEnv::unicycle();
        let a = NominalPlanner::random(9).propose(&env, &v(&[0.0, 0.0, 0.0]), 8, 3);
        let b = NominalPlanner::random(9).propose(&env, &v(&[0.0, 0.0, 0.0]), 8, 3);
        assert_eq!(a, b);
        let c = NominalPlanner::random(10).propose(&env, &v(&[0.0, 0.0, 0.0]), 8, 3);
        assert_ne!(a.actions, c.actions);
        // Overlapping windows agree on shared times.
        let d = NominalPlanner::random(9).propose(&env, &v(&[0.0, 0.0, 0.0]), 8, 4);
        assert_eq!(a.actions[1], d.actions[0]);
    }

    #[test]
    fn circle_pushes_tangentially() {
        let env = BlackBoxEnv::point_mass();
        let p = NominalPlanner::circle(1.5);
        for (s, ang) in [(0.0, 0.0), (0.5, 1.0), (1.9, -2.0), (2.0, 3.0)] {
            let (c, si) = (f64::cos(ang), f64::sin(ang));
            let x = v(&[1.5 * c, 1.5 * si, -s * si, s * c]);
            let u = p.action(&env, &x, 0);
            let tangent = v(&[-x[1], x[0]]);
            assert!(u.dot(&tangent) >= 0.0);
        }
    }

    #[test]
    fn exploration_is_seeded() {
        let env = BlackBoxEnv::point_mass();
        let p = NominalPlanner::goal_seeker(Vector::zeros(2))
            .with_exploration(Exploration::default(), 4);
        let x = Vector::zeros(4);
        assert_eq!(p.action(&env, &x, 7), p.action(&env, &x, 7));
        assert_ne!(p.action(&env, &x, 7), p.action(&env, &x, 8));
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
