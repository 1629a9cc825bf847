//! Benchmark fixtures.

use brsl::envsim::{generate_scenario, Obstacle, ScenarioParams};
use brsl::harness::{experiment_data, ExperimentConfig};
use brsl::lincheck::EmptinessProblem;
use brsl::{BlackBoxEnv, EnvKind, Matrix, NominalPlanner, Plan, Reachability, SafetyLayer, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Safety layer with the default data set for `kind`.
pub fn layer(kind: EnvKind) -> SafetyLayer {
    let cfg = ExperimentConfig::for_env(kind);
    let env = cfg.build_env().expect("default env");
    let data = experiment_data(&cfg, &env).expect("data");
    let reach = Reachability::new(&data, env.noise(), cfg.reach_config()).expect("fit");
    SafetyLayer::new(env, reach, cfg.safety_config()).expect("layer")
}

/// A scene for `kind`: start state, the planner's plan and inflated obstacles.
pub struct Scene {
    pub x0: Vector,
    pub plan: Plan,
    pub obstacles: Vec<Obstacle>,
}

pub fn scene(env: &BlackBoxEnv, seed: u64) -> Scene {
    let cfg = ExperimentConfig::for_env(env.kind());
    let sc = generate_scenario(env, &ScenarioParams::for_task(cfg.task), seed).expect("scenario");
    let planner = match &sc.task {
        brsl::Task::Goal { center, .. } => NominalPlanner::goal_seeker(center.clone()),
        brsl::Task::PathFollowing { radius, .. } => NominalPlanner::circle(*radius),
    };
    let plan = planner.propose(env, &sc.start_state, env.n_plan(), 0);
    Scene {
        x0: sc.start_state.clone(),
        plan,
        obstacles: env.inflated_obstacles(&sc.obstacles),
    }
}

/// Random feasible emptiness problem with `rows` constraints and `cols`
/// generators.
pub fn lp_problem(rows: usize, cols: usize, seed: u64) -> EmptinessProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let z = Vector::from_fn(cols, |_, _| rng.random_range(-1.5..1.5));
    let b = &a * z;
    EmptinessProblem::new(a, b)
}
