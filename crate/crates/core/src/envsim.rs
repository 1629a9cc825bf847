//! Ground-truth simulators. The safety layer only sees these through
//! recorded data and `step`; the closed-form collision test here is reserved
//! for metrics.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::setgeom::{halfspaces_to_conzono, ConstrainedZonotope, Interval, Zonotope};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    /// `(x, y, vx, vy)` with acceleration inputs.
    PointMass2D,
    /// `(x, y, theta)` with `(v, omega)` velocity inputs.
    Unicycle2D,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::PointMass2D => "point-mass",
            EnvKind::Unicycle2D => "unicycle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "point-mass" | "pointmass" | "point-mass-2d" | "pointmass2d" => {
                Ok(EnvKind::PointMass2D)
            }
            "unicycle" | "unicycle-2d" | "unicycle2d" | "turtlebot" => Ok(EnvKind::Unicycle2D),
            other => Err(Error::Config(format!("unknown environment `{other}`"))),
        }
    }
}

pub const POINT_MASS_MAX_SPEED: f64 = 2.0;
pub const POINT_MASS_MAX_ACCEL: f64 = 1.0;
pub const UNICYCLE_MAX_SPEED: f64 = 0.25;
pub const UNICYCLE_MAX_TURN: f64 = 0.5;
/// Half-width of the square that unicycle data collection starts from.
pub const DATA_START_SPREAD: f64 = 2.5;

/// A simulated robot with additive bounded noise `x+ = f(x, u) + w`, `w in W`.
#[derive(Debug, Clone)]
pub struct BlackBoxEnv {
    kind: EnvKind,
    dt: f64,
    noise: Zonotope,
    action_interval: Interval,
    robot_radius: f64,
    n_plan: usize,
    n_brk: usize,
}

impl BlackBoxEnv {
    pub fn new(kind: EnvKind) -> Self {
        match kind {
            EnvKind::PointMass2D => Self::point_mass(),
            EnvKind::Unicycle2D => Self::unicycle(),
        }
    }

    pub fn point_mass() -> Self {
        let dt = 0.1;
        let a = POINT_MASS_MAX_ACCEL;
        Self {
            kind: EnvKind::PointMass2D,
            dt,
            noise: Zonotope::from_diagonal(&[0.0, 0.0, 0.005, 0.005]),
            action_interval: Interval::from_slices(&[-a, -a], &[a, a]).expect("valid bounds"),
            robot_radius: 0.05,
            n_plan: 8,
            n_brk: (POINT_MASS_MAX_SPEED / (a * dt)).ceil() as usize,
        }
    }

    pub fn unicycle() -> Self {
        Self {
            kind: EnvKind::Unicycle2D,
            dt: 0.1,
            noise: Zonotope::from_diagonal(&[0.002, 0.002, 0.005]),
            action_interval: Interval::from_slices(
                &[0.0, -UNICYCLE_MAX_TURN],
                &[UNICYCLE_MAX_SPEED, UNICYCLE_MAX_TURN],
            )
            .expect("valid bounds"),
            robot_radius: 0.1,
            n_plan: 8,
            n_brk: 6,
        }
    }

    pub fn with_noise(mut self, noise: Zonotope) -> Result<Self> {
        if noise.dim() != self.state_dim() {
            return Err(Error::dim(
                "BlackBoxEnv::with_noise",
                self.state_dim(),
                noise.dim(),
            ));
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn with_horizons(mut self, n_plan: usize, n_brk: usize) -> Result<Self> {
        if n_brk == 0 {
            return Err(Error::Config("n_brk must be at least 1".into()));
        }
        self.n_plan = n_plan;
        self.n_brk = n_brk;
        Ok(self)
    }

    pub fn with_robot_radius(mut self, radius: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::Config(format!(
                "robot radius {radius} is not a nonnegative number"
            )));
        }
        self.robot_radius = radius;
        Ok(self)
    }

    pub fn kind(&self) -> EnvKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn noise(&self) -> &Zonotope {
        &self.noise
    }

    pub fn action_interval(&self) -> &Interval {
        &self.action_interval
    }

    pub fn robot_radius(&self) -> f64 {
        self.robot_radius
    }

    pub fn n_plan(&self) -> usize {
        self.n_plan
    }

    pub fn n_brk(&self) -> usize {
        self.n_brk
    }

    pub fn state_dim(&self) -> usize {
        match self.kind {
            EnvKind::PointMass2D => 4,
            EnvKind::Unicycle2D => 3,
        }
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    /// Rows of the state that hold the planar position.
    pub fn position_projection(&self) -> Matrix {
        let mut p = Matrix::zeros(2, self.state_dim());
        p[(0, 0)] = 1.0;
        p[(1, 1)] = 1.0;
        p
    }

    pub fn position(&self, x: &Vector) -> Vector {
        x.rows(0, 2).into_owned()
    }

    /// Noiseless successor with the input clamped into `U`.
    pub fn nominal_step(&self, x: &Vector, u: &Vector) -> Vector {
        let u = self.action_interval.clamp(u);
        let dt = self.dt;
        match self.kind {
            EnvKind::PointMass2D => {
                let mut v = Vector::from_column_slice(&[x[2] + dt * u[0], x[3] + dt * u[1]]);
                let speed = v.norm();
                if speed > POINT_MASS_MAX_SPEED {
                    v *= POINT_MASS_MAX_SPEED / speed;
                }
                Vector::from_column_slice(&[
                    x[0] + dt * x[2] + 0.5 * dt * dt * u[0],
                    x[1] + dt * x[3] + 0.5 * dt * dt * u[1],
                    v[0],
                    v[1],
                ])
            }
            EnvKind::Unicycle2D => Vector::from_column_slice(&[
                x[0] + dt * u[0] * x[2].cos(),
                x[1] + dt * u[0] * x[2].sin(),
                x[2] + dt * u[1],
            ]),
        }
    }

    /// One noisy step, `w` drawn from the noise zonotope.
    pub fn step<R: Rng + ?Sized>(&self, x: &Vector, u: &Vector, rng: &mut R) -> Result<Vector> {
        if x.len() != self.state_dim() {
            return Err(Error::dim(
                "BlackBoxEnv::step (state)",
                self.state_dim(),
                x.len(),
            ));
        }
        if u.len() != self.action_dim() {
            return Err(Error::dim(
                "BlackBoxEnv::step (action)",
                self.action_dim(),
                u.len(),
            ));
        }
        let next = self.nominal_step(x, u) + self.noise.sample_point(rng);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::EnvStep {
                step: 0,
                reason: "non-finite state".into(),
            });
        }
        Ok(next)
    }

    /// Feedback braking input. The point mass decelerates as hard as allowed
    /// toward zero velocity; the unicycle simply commands zero velocity.
    pub fn brake_action(&self, x: &Vector) -> Vector {
        match self.kind {
            EnvKind::PointMass2D => self.action_interval.clamp(&Vector::from_column_slice(&[
                -x[2] / self.dt,
                -x[3] / self.dt,
            ])),
            EnvKind::Unicycle2D => Vector::zeros(2),
        }
    }

    /// Noiseless states along `actions`, starting with `x` itself.
    pub fn rollout(&self, x: &Vector, actions: &[Vector]) -> Vec<Vector> {
        let mut states = Vec::with_capacity(actions.len() + 1);
        states.push(x.clone());
        for u in actions {
            let next = self.nominal_step(states.last().expect("nonempty"), u);
            states.push(next);
        }
        states
    }

    /// `n_brk` braking inputs that follow `actions` from `x`, computed on the
    /// noiseless model.
    pub fn brake_suffix(&self, x: &Vector, actions: &[Vector]) -> Vec<Vector> {
        let mut state = self.rollout(x, actions).pop().expect("nonempty");
        let mut suffix = Vec::with_capacity(self.n_brk);
        for _ in 0..self.n_brk {
            let u = self.brake_action(&state);
            state = self.nominal_step(&state, &u);
            suffix.push(u);
        }
        suffix
    }

    /// Planar speed at `x` given the input that produced it.
    pub fn speed(&self, x: &Vector, last_action: Option<&Vector>) -> f64 {
        match self.kind {
            EnvKind::PointMass2D => (x[2] * x[2] + x[3] * x[3]).sqrt(),
            EnvKind::Unicycle2D => last_action.map_or(0.0, |u| u[0].abs()),
        }
    }

    /// Speed of the noiseless rollout's final state after applying `actions`.
    pub fn terminal_speed(&self, x: &Vector, actions: &[Vector]) -> f64 {
        let end = self.rollout(x, actions).pop().expect("nonempty");
        let mut speed = self.speed(&end, actions.last());
        if self.kind == EnvKind::Unicycle2D {
            speed += actions.last().map_or(0.0, |u| u[1].abs());
        }
        speed
    }

    pub fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.action_interval.sample(rng)
    }

    /// Start state for offline data collection in an empty environment.
    /// Unicycle starts are spread over the arena and two turns of heading
    /// so that the regression sees the whole operating range.
    pub fn data_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self.kind {
            EnvKind::PointMass2D => Vector::zeros(4),
            EnvKind::Unicycle2D => {
                let h = DATA_START_SPREAD;
                Vector::from_column_slice(&[
                    rng.random_range(-h..=h),
                    rng.random_range(-h..=h),
                    rng.random_range(-2.0 * PI..=2.0 * PI),
                ])
            }
        }
    }

    /// Robot disc against the true obstacle geometry; the boundary counts.
    pub fn ground_truth_collision(&self, x: &Vector, obstacles: &[Obstacle]) -> bool {
        let p = self.position(x);
        obstacles
            .iter()
            .any(|o| o.distance(&p) <= self.robot_radius)
    }

    /// Obstacle sets grown by the robot's bounding square, as used by the
    /// safety layer.
    pub fn inflated_obstacles(&self, obstacles: &[Obstacle]) -> Vec<Obstacle> {
        obstacles
            .iter()
            .map(|o| o.inflated(self.robot_radius))
            .collect()
    }
}

/// A static obstacle: exact box geometry for ground truth and a constrained
/// zonotope for the safety layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    bounds: Interval,
    set: ConstrainedZonotope,
}

impl Obstacle {
    pub fn aabb(bounds: Interval) -> Self {
        let set = bounds.to_zonotope().to_constrained();
        Self { bounds, set }
    }

    /// Axis-aligned halfspaces clipped to a bounding box. The set is built
    /// by halfspace intersection; the box geometry is kept for ground truth.
    pub fn from_halfspaces(h: &Matrix, f: &Vector, bounding_box: &Interval) -> Result<Self> {
        let set = halfspaces_to_conzono(h, f, bounding_box)?;
        let mut lower = bounding_box.lower().clone();
        let mut upper = bounding_box.upper().clone();
        for k in 0..h.nrows() {
            let nz: Vec<usize> = (0..h.ncols()).filter(|&i| h[(k, i)] != 0.0).collect();
            let [i] = nz.as_slice() else {
                return Err(Error::Config(
                    "obstacle ground truth needs axis-aligned halfspaces".into(),
                ));
            };
            let bound = f[k] / h[(k, *i)];
            if h[(k, *i)] > 0.0 {
                upper[*i] = upper[*i].min(bound);
            } else {
                lower[*i] = lower[*i].max(bound);
            }
        }
        let bounds = Interval::new(lower, upper).map_err(|_| Error::EmptyPolytope)?;
        Ok(Self { bounds, set })
    }

    pub fn bounds(&self) -> &Interval {
        &self.bounds
    }

    pub fn set(&self) -> &ConstrainedZonotope {
        &self.set
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance(&self, p: &Vector) -> f64 {
        let mut sq = 0.0;
        for i in 0..p.len() {
            let d = (self.bounds.lower()[i] - p[i])
                .max(p[i] - self.bounds.upper()[i])
                .max(0.0);
            sq += d * d;
        }
        sq.sqrt()
    }

    /// Minkowski sum with the square of half-width `radius`.
    pub fn inflated(&self, radius: f64) -> Obstacle {
        if radius == 0.0 {
            return self.clone();
        }
        let n = self.bounds.dim();
        let square = Zonotope::from_diagonal(&vec![radius; n]);
        let pad = Vector::from_element(n, radius);
        Obstacle {
            bounds: Interval::new(self.bounds.lower() - &pad, self.bounds.upper() + &pad)
                .expect("grown box"),
            set: self
                .set
                .minkowski_sum_zonotope(&square)
                .expect("matching dimension"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Goal,
    PathFollowing,
}

impl TaskKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "goal" => Ok(TaskKind::Goal),
            "path" | "path-following" | "circle" => Ok(TaskKind::PathFollowing),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Goal => "goal",
            TaskKind::PathFollowing => "path-following",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Goal { center: Vector, radius: f64 },
    PathFollowing { radius: f64, x_max: f64, y_max: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub obstacles: Vec<Obstacle>,
    pub task: Task,
    pub start_state: Vector,
    pub episode_limit: usize,
    pub seed: u64,
}

/// Knobs for [`generate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub task: TaskKind,
    pub arena_size: f64,
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub obstacle_half_size: (f64, f64),
    /// Free space kept around the start beyond the robot radius.
    pub start_clearance: f64,
    pub goal_radius: f64,
    pub min_goal_distance: f64,
    pub path_radius: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub outer_box: f64,
    pub episode_limit: usize,
}

impl ScenarioParams {
    pub fn goal() -> Self {
        Self {
            task: TaskKind::Goal,
            episode_limit: 200,
            ..Self::path_following()
        }
    }

    pub fn path_following() -> Self {
        Self {
            task: TaskKind::PathFollowing,
            arena_size: 5.0,
            min_obstacles: 3,
            max_obstacles: 8,
            obstacle_half_size: (0.15, 0.5),
            start_clearance: 0.5,
            goal_radius: 0.3,
            min_goal_distance: 1.5,
            path_radius: 1.5,
            x_max: 1.0,
            y_max: 1.0,
            outer_box: 5.0,
            episode_limit: 200,
        }
    }

    pub fn for_task(task: TaskKind) -> Self {
        match task {
            TaskKind::Goal => Self::goal(),
            TaskKind::PathFollowing => Self::path_following(),
        }
    }
}

const MAX_REJECTIONS: usize = 1000;

/// Deterministic scenario for `seed`.
pub fn generate_scenario(
    env: &BlackBoxEnv,
    params: &ScenarioParams,
    seed: u64,
) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heading = |rng: &mut ChaCha8Rng| rng.random_range(-PI..=PI);
    let start_from = |p: [f64; 2], rng: &mut ChaCha8Rng| match env.kind() {
        EnvKind::PointMass2D => Vector::from_column_slice(&[p[0], p[1], 0.0, 0.0]),
        EnvKind::Unicycle2D => Vector::from_column_slice(&[p[0], p[1], heading(rng)]),
    };

    let scenario = match params.task {
        TaskKind::Goal => {
            let start = start_from([0.0, 0.0], &mut rng);
            let origin = env.position(&start);
            let half = 0.5 * params.arena_size;
            let count = rng.random_range(params.min_obstacles..=params.max_obstacles);
            let mut obstacles = Vec::with_capacity(count);
            let mut rejected = 0;
            while obstacles.len() < count {
                let c = [
                    rng.random_range(-half..=half),
                    rng.random_range(-half..=half),
                ];
                let (lo, hi) = params.obstacle_half_size;
                let h = [rng.random_range(lo..=hi), rng.random_range(lo..=hi)];
                let obs = Obstacle::aabb(Interval::from_slices(
                    &[c[0] - h[0], c[1] - h[1]],
                    &[c[0] + h[0], c[1] + h[1]],
                )?);
                if obs.distance(&origin) > env.robot_radius() + params.start_clearance {
                    obstacles.push(obs);
                } else {
                    rejected += 1;
                    if rejected > MAX_REJECTIONS {
                        return Err(Error::ScenarioGeneration(rejected));
                    }
                }
            }
            let center = loop {
                let g = Vector::from_column_slice(&[
                    rng.random_range(-half..=half),
                    rng.random_range(-half..=half),
                ]);
                let clear = obstacles
                    .iter()
                    .all(|o| o.distance(&g) > params.goal_radius);
                if clear && (&g - &origin).norm() >= params.min_goal_distance {
                    break g;
                }
                rejected += 1;
                if rejected > MAX_REJECTIONS {
                    return Err(Error::ScenarioGeneration(rejected));
                }
            };
            Scenario {
                obstacles,
                task: Task::Goal {
                    center,
                    radius: params.goal_radius,
                },
                start_state: start,
                episode_limit: params.episode_limit,
                seed,
            }
        }
        TaskKind::PathFollowing => {
            let (xm, ym) = (params.x_max, params.y_max);
            if (xm * xm + ym * ym).sqrt() >= params.path_radius {
                return Err(Error::Config(format!(
                    "safe box ({xm}, {ym}) must lie strictly inside the path circle of radius {}",
                    params.path_radius
                )));
            }
            let b = params.outer_box;
            let bbox = Interval::from_slices(&[-b, -b], &[b, b])?;
            let faces: [([f64; 2], f64); 4] = [
                ([-1.0, 0.0], -xm),
                ([1.0, 0.0], -xm),
                ([0.0, -1.0], -ym),
                ([0.0, 1.0], -ym),
            ];
            let obstacles = faces
                .iter()
                .map(|(h, f)| {
                    Obstacle::from_halfspaces(
                        &Matrix::from_row_slice(1, 2, h),
                        &Vector::from_column_slice(&[*f]),
                        &bbox,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let margin_x = xm - env.robot_radius() - params.start_clearance;
            let margin_y = ym - env.robot_radius() - params.start_clearance;
            if margin_x <= 0.0 || margin_y <= 0.0 {
                return Err(Error::ScenarioGeneration(0));
            }
            let p = [
                rng.random_range(-margin_x..=margin_x),
                rng.random_range(-margin_y..=margin_y),
            ];
            Scenario {
                obstacles,
                task: Task::PathFollowing {
                    radius: params.path_radius,
                    x_max: xm,
                    y_max: ym,
                },
                start_state: start_from(p, &mut rng),
                episode_limit: params.episode_limit,
                seed,
            }
        }
    };
    if env.ground_truth_collision(&scenario.start_state, &scenario.obstacles) {
        return Err(Error::Invariant("generated start state collides".into()));
    }
    Ok(scenario)
}

/// Planar velocity of a state; the unicycle's comes from its input.
fn planar_velocity(env: &BlackBoxEnv, x: &Vector, u: &Vector) -> (f64, f64) {
    match env.kind() {
        EnvKind::PointMass2D => (x[2], x[3]),
        EnvKind::Unicycle2D => (u[0] * x[2].cos(), u[0] * x[2].sin()),
    }
}

/// Per-step reward. `unsafe_action` is the certification verdict on the
/// planner's plan before any adjustment.
pub fn reward(env: &BlackBoxEnv, task: &Task, x: &Vector, u: &Vector, unsafe_action: bool) -> f64 {
    match task {
        Task::Goal { center, radius } => {
            let d = (env.position(x) - center).norm();
            let inside = if d <= *radius { 1.0 } else { 0.0 };
            let penalty = if unsafe_action { 1.0 } else { 0.0 };
            1e3 * inside - 20.0 * d - 1e3 * penalty
        }
        Task::PathFollowing { radius, .. } => {
            let (vx, vy) = planar_velocity(env, x, u);
            let (px, py) = (x[0], x[1]);
            (vx * -py + vy * px) / (1.0 + ((px * px + py * py).sqrt() - radius).abs())
        }
    }
}

pub fn in_goal(env: &BlackBoxEnv, task: &Task, x: &Vector) -> bool {
    match task {
        Task::Goal { center, radius } => (env.position(x) - center).norm() <= *radius,
        Task::PathFollowing { .. } => false,
    }
}
