use std::path::Path;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::dataset::load_dataset;
use crate::envsim::{
    generate_scenario, in_goal, reward, BlackBoxEnv, Scenario, ScenarioParams, Task,
};
use crate::error::{Error, Result};
use crate::nominal::{Exploration, NominalPlanner, PlannerKind};
use crate::reach::Reachability;
use crate::safety::{ActionSource, SafetyLayer};
use crate::sysid::{collect_random_data, TrajectoryData};

/// Stream of the episode RNG used for process noise.
const NOISE_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub seed: u64,
    pub reached_goal: bool,
    pub collided: bool,
    pub steps: usize,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub cumulative_reward: f64,
    pub mean_compute_ms: f64,
    /// Steps whose action came from an adjusted plan.
    pub adjustments: usize,
    /// Steps that fell back to a stored plan, a fresh braking plan or a hold.
    pub failsafes: usize,
    /// Next states compared against a certified tube set.
    pub tube_checks: usize,
    /// Of those, states the set failed to contain.
    pub tube_misses: usize,
    /// Per-step safety-layer time in milliseconds.
    pub compute_ms: Vec<f64>,
}

/// Everything shared by the episodes of one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    env: BlackBoxEnv,
    params: ScenarioParams,
    layer: Option<SafetyLayer>,
}

impl Experiment {
    /// Validate the config, load or collect data and fit the reachability
    /// engine if the layer is on.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let env = config.build_env()?;
        let mut params = ScenarioParams::for_task(config.task);
        params.episode_limit = config.episode_limit;
        let layer = if config.layer {
            let data = experiment_data(&config, &env)?;
            let reach = Reachability::new(&data, env.noise(), config.reach_config())?;
            Some(SafetyLayer::new(
                env.clone(),
                reach,
                config.safety_config(),
            )?)
        } else {
            None
        };
        Ok(Self {
            config,
            env,
            params,
            layer,
        })
    }

    /// Replace the scenario generator settings, e.g. to clear obstacles.
    pub fn with_scenario_params(mut self, params: ScenarioParams) -> Self {
        self.params = params;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn scenario_params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn env(&self) -> &BlackBoxEnv {
        &self.env
    }

    pub fn layer(&self) -> Option<&SafetyLayer> {
        self.layer.as_ref()
    }

    pub fn scenario(&self, seed: u64) -> Result<Scenario> {
        generate_scenario(&self.env, &self.params, seed)
    }

    pub fn planner(&self, scenario: &Scenario) -> NominalPlanner {
        let planner = match (self.config.planner, &scenario.task) {
            (PlannerKind::GoalSeeker, Task::Goal { center, .. }) => {
                NominalPlanner::goal_seeker(center.clone())
            }
            (PlannerKind::GoalSeeker, _) => NominalPlanner::goal_seeker(crate::Vector::zeros(2)),
            (PlannerKind::CirclePathFollower, Task::PathFollowing { radius, .. }) => {
                NominalPlanner::circle(*radius)
            }
            (PlannerKind::CirclePathFollower, _) => NominalPlanner::circle(self.params.path_radius),
            (PlannerKind::RandomPolicy, _) => NominalPlanner::random(scenario.seed),
        };
        if self.config.exploration {
            planner.with_exploration(Exploration::default(), scenario.seed)
        } else {
            planner
        }
    }

    /// Run one episode until the goal, a crash or the step limit. A crash
    /// with the layer on is an error, not an outcome.
    pub fn run_episode(&self, seed: u64) -> Result<EpisodeMetrics> {
        let scenario = self.scenario(seed)?;
        let planner = self.planner(&scenario);
        let env = &self.env;
        let inflated = env.inflated_obstacles(&scenario.obstacles);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(NOISE_STREAM);

        let mut m = EpisodeMetrics {
            seed,
            reached_goal: false,
            collided: false,
            steps: 0,
            mean_speed: 0.0,
            max_speed: 0.0,
            cumulative_reward: 0.0,
            mean_compute_ms: 0.0,
            adjustments: 0,
            failsafes: 0,
            tube_checks: 0,
            tube_misses: 0,
            compute_ms: Vec::new(),
        };
        let mut x = scenario.start_state.clone();
        let mut cached = None;
        let mut speed_sum = 0.0;
        for k in 0..scenario.episode_limit {
            let plan = planner.propose(env, &x, env.n_plan(), k);
            let (u, unsafe_action, expected) = match &self.layer {
                Some(layer) => {
                    let d = layer.safety_step(&x, &plan, &inflated, &mut cached)?;
                    m.compute_ms.push(ms(d.elapsed));
                    match d.source {
                        ActionSource::Adjusted => m.adjustments += 1,
                        ActionSource::Previous | ActionSource::Failsafe | ActionSource::Hold => {
                            m.failsafes += 1
                        }
                        ActionSource::Nominal => {}
                    }
                    (d.action, !d.nominal_safe, d.expected_set)
                }
                None => (
                    plan.action(0).expect("plans end in braking").clone(),
                    false,
                    None,
                ),
            };
            let next = env.step(&x, &u, &mut rng)?;
            if let Some(set) = expected {
                m.tube_checks += 1;
                if !set.contains(&next, 0.0) {
                    m.tube_misses += 1;
                }
            }
            m.steps += 1;
            let speed = env.speed(&next, Some(&u));
            speed_sum += speed;
            m.max_speed = m.max_speed.max(speed);
            m.cumulative_reward += reward(env, &scenario.task, &next, &u, unsafe_action);
            x = next;
            if env.ground_truth_collision(&x, &scenario.obstacles) {
                if self.layer.is_some() {
                    return Err(Error::Invariant(format!(
                        "seed {seed}: collision at step {k} with the safety layer on, state {:?}",
                        x.as_slice()
                    )));
                }
                m.collided = true;
                break;
            }
            if in_goal(env, &scenario.task, &x) {
                m.reached_goal = true;
                break;
            }
        }
        if m.steps > 0 {
            m.mean_speed = speed_sum / m.steps as f64;
        }
        if !m.compute_ms.is_empty() {
            m.mean_compute_ms = m.compute_ms.iter().sum::<f64>() / m.compute_ms.len() as f64;
        }
        Ok(m)
    }

    /// All episodes of the configured seed range, sorted by seed.
    pub fn run(&self) -> Result<ExperimentReport> {
        let seeds: Vec<u64> = (0..self.config.episodes as u64)
            .map(|i| self.config.seed_start + i)
            .collect();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        let mut episodes = pool.install(|| {
            seeds
                .par_iter()
                .map(|&s| {
                    self.run_episode(s)
                        .map_err(|e| Error::Invariant(format!("episode with seed {s} failed: {e}")))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        episodes.sort_by_key(|e| e.seed);
        Ok(ExperimentReport::new(episodes))
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Offline data for `config`: the data file if given, otherwise a fresh
/// random rollout.
pub fn experiment_data(config: &ExperimentConfig, env: &BlackBoxEnv) -> Result<TrajectoryData> {
    let data = match &config.data_file {
        Some(path) => load_dataset(path)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.data_seed);
            let restart = (config.data_restart > 0).then_some(config.data_restart);
            collect_random_data(env, config.data_steps, restart, &mut rng)?
        }
    };
    if data.state_dim() != env.state_dim() || data.action_dim() != env.action_dim() {
        return Err(Error::Dataset(format!(
            "data has n = {}, m = {} but the environment needs n = {}, m = {}",
            data.state_dim(),
            data.action_dim(),
            env.state_dim(),
            env.action_dim()
        )));
    }
    Ok(data)
}

pub fn run_episode(config: &ExperimentConfig, seed: u64) -> Result<EpisodeMetrics> {
    Experiment::new(config.clone())?.run_episode(seed)
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    Experiment::new(config.clone())?.run()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub episodes: usize,
    pub goal_rate: f64,
    pub collision_rate: f64,
    pub mean_steps: f64,
    pub mean_speed: f64,
    pub max_speed: f64,
    pub mean_reward: f64,
    pub compute_mean_ms: f64,
    pub compute_std_ms: f64,
    pub compute_max_ms: f64,
    pub adjustments: usize,
    pub failsafes: usize,
    pub tube_checks: usize,
    pub tube_misses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub summary: Summary,
}

pub const CSV_HEADER: &str = "seed,reached_goal,collided,steps,mean_speed,max_speed,cumulative_reward,mean_compute_ms,adjustments,failsafes,tube_checks,tube_misses";

impl ExperimentReport {
    pub fn new(episodes: Vec<EpisodeMetrics>) -> Self {
        let n = episodes.len().max(1) as f64;
        let count =
            |f: fn(&EpisodeMetrics) -> bool| episodes.iter().filter(|e| f(e)).count() as f64;
        let times: Vec<f64> = episodes
            .iter()
            .flat_map(|e| e.compute_ms.iter().copied())
            .collect();
        let (mean, std) = mean_std(&times);
        let summary = Summary {
            episodes: episodes.len(),
            goal_rate: 100.0 * count(|e| e.reached_goal) / n,
            collision_rate: 100.0 * count(|e| e.collided) / n,
            mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n,
            mean_speed: episodes.iter().map(|e| e.mean_speed).sum::<f64>() / n,
            max_speed: episodes.iter().map(|e| e.max_speed).fold(0.0, f64::max),
            mean_reward: episodes.iter().map(|e| e.cumulative_reward).sum::<f64>() / n,
            compute_mean_ms: mean,
            compute_std_ms: std,
            compute_max_ms: times.iter().copied().fold(0.0, f64::max),
            adjustments: episodes.iter().map(|e| e.adjustments).sum(),
            failsafes: episodes.iter().map(|e| e.failsafes).sum(),
            tube_checks: episodes.iter().map(|e| e.tube_checks).sum(),
            tube_misses: episodes.iter().map(|e| e.tube_misses).sum(),
        };
        Self { episodes, summary }
    }

    /// Header, one row per episode and a final `aggregate` row with rates
    /// in percent and compute time as `mean±std`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for e in &self.episodes {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6},{:.3},{},{},{},{}\n",
                e.seed,
                e.reached_goal as u8,
                e.collided as u8,
                e.steps,
                e.mean_speed,
                e.max_speed,
                e.cumulative_reward,
                e.mean_compute_ms,
                e.adjustments,
                e.failsafes,
                e.tube_checks,
                e.tube_misses
            ));
        }
        let s = &self.summary;
        out.push_str(&format!(
            "aggregate,{:.2},{:.2},{:.2},{:.6},{:.6},{:.6},{:.3}±{:.3},{},{},{},{}\n",
            s.goal_rate,
            s.collision_rate,
            s.mean_steps,
            s.mean_speed,
            s.max_speed,
            s.mean_reward,
            s.compute_mean_ms,
            s.compute_std_ms,
            s.adjustments,
            s.failsafes,
            s.tube_checks,
            s.tube_misses
        ));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Short human-readable table.
    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        format!(
            "episodes        {}\n\
             goal rate       {:.1} %\n\
             collisions      {:.1} %\n\
             mean speed      {:.3} m/s\n\
             max speed       {:.3} m/s\n\
             mean reward     {:.2}\n\
             compute time    {:.2} ± {:.2} ms (max {:.2})\n\
             adjusted steps  {}\n\
             fallback steps  {}\n\
             tube checks     {} ({} misses)\n",
            s.episodes,
            s.goal_rate,
            s.collision_rate,
            s.mean_speed,
            s.max_speed,
            s.mean_reward,
            s.compute_mean_ms,
            s.compute_std_ms,
            s.compute_max_ms,
            s.adjustments,
            s.failsafes,
            s.tube_checks,
            s.tube_misses
        )
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
