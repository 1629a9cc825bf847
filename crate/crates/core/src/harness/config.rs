//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # point mass, layer on
//! env = point-mass
//! episodes = 20
//! noise = 0, 0, 0.005, 0.005
//! ```
//!
//! Keys accept `-` or `_`. `env` and `task` are applied first so the other
//! keys override the matching defaults regardless of line order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use crate::envsim::{BlackBoxEnv, EnvKind, TaskKind};
use crate::error::{Error, Result};
use crate::nominal::PlannerKind;
use crate::reach::ReachConfig;
use crate::safety::{AdjustScope, SafetyConfig};
use crate::setgeom::Zonotope;
use crate::sysid::DEFAULT_STEPS;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvKind,
    pub task: TaskKind,
    pub seed_start: u64,
    pub episodes: usize,
    pub layer: bool,
    pub planner: PlannerKind,
    pub gamma: f64,
    pub t_max: Duration,
    pub max_iterations: usize,
    pub n_plan: usize,
    pub n_brk: usize,
    /// Half-widths of an axis-aligned noise box replacing the default W.
    pub noise: Option<Vec<f64>>,
    pub data_file: Option<PathBuf>,
    pub data_steps: usize,
    pub data_seed: u64,
    /// Restart data collection every this many steps; 0 never restarts.
    pub data_restart: usize,
    pub scope: AdjustScope,
    pub lipschitz_scale: f64,
    pub warp: bool,
    pub episode_limit: usize,
    pub workers: usize,
    pub exploration: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_env(EnvKind::PointMass2D)
    }
}

impl ExperimentConfig {
    /// Defaults for `kind` with its usual task: path following for the
    /// point mass, goal reaching for the unicycle.
    pub fn for_env(kind: EnvKind) -> Self {
        let task = match kind {
            EnvKind::PointMass2D => TaskKind::PathFollowing,
            EnvKind::Unicycle2D => TaskKind::Goal,
        };
        Self::for_env_task(kind, task)
    }

    pub fn for_env_task(kind: EnvKind, task: TaskKind) -> Self {
        let env = BlackBoxEnv::new(kind);
        let reach = ReachConfig::for_env(kind);
        let safety = SafetyConfig::default();
        Self {
            env: kind,
            task,
            seed_start: 0,
            episodes: 10,
            layer: true,
            planner: match task {
                TaskKind::Goal => PlannerKind::GoalSeeker,
                TaskKind::PathFollowing => PlannerKind::CirclePathFollower,
            },
            gamma: safety.gamma,
            t_max: safety.t_max,
            max_iterations: safety.max_iterations_per_step,
            n_plan: env.n_plan(),
            n_brk: env.n_brk(),
            noise: None,
            data_file: None,
            data_steps: DEFAULT_STEPS,
            data_seed: 7,
            data_restart: match kind {
                EnvKind::PointMass2D => 0,
                EnvKind::Unicycle2D => 25,
            },
            scope: safety.scope,
            lipschitz_scale: reach.lipschitz_scale,
            warp: reach.warp,
            episode_limit: crate::envsim::ScenarioParams::for_task(task).episode_limit,
            workers: 1,
            exploration: false,
        }
    }

    /// Build from ordered key/value pairs on top of the defaults picked by
    /// `env` and `task`.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let norm: Vec<(String, &str)> = pairs
            .iter()
            .map(|(k, v)| (normalize_key(k.as_ref()), v.as_ref().trim()))
            .collect();
        let env = match norm.iter().rev().find(|(k, _)| k == "env") {
            Some((_, v)) => EnvKind::parse(v)?,
            None => EnvKind::PointMass2D,
        };
        let mut cfg = match norm.iter().rev().find(|(k, _)| k == "task") {
            Some((_, v)) => Self::for_env_task(env, TaskKind::parse(v)?),
            None => Self::for_env(env),
        };
        for (k, v) in &norm {
            if k != "env" && k != "task" {
                cfg.set(k, v)?;
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(&parse_pairs(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Set one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let value = value.trim();
        match key.as_str() {
            "env" => self.env = EnvKind::parse(value)?,
            "task" => self.task = TaskKind::parse(value)?,
            "seed_start" => self.seed_start = num(&key, value)?,
            "episodes" => self.episodes = num(&key, value)?,
            "layer" => self.layer = on_off(&key, value)?,
            "planner" => self.planner = PlannerKind::parse(value)?,
            "gamma" => self.gamma = num(&key, value)?,
            "t_max_ms" => {
                let ms: f64 = num(&key, value)?;
                if !(ms >= 0.0) || !ms.is_finite() {
                    return Err(Error::Config(format!("`{key}` must be a finite duration")));
                }
                self.t_max = Duration::from_nanos((ms * 1e6).round() as u64);
            }
            "max_iterations" => self.max_iterations = num(&key, value)?,
            "n_plan" => self.n_plan = num(&key, value)?,
            "n_brk" => self.n_brk = num(&key, value)?,
            "noise" => {
                self.noise = if value.eq_ignore_ascii_case("default") || value.is_empty() {
                    None
                } else {
                    Some(
                        value
                            .split(',')
                            .map(|s| num(&key, s.trim()))
                            .collect::<Result<_>>()?,
                    )
                }
            }
            "data_file" => self.data_file = (!value.is_empty()).then(|| PathBuf::from(value)),
            "data_steps" => self.data_steps = num(&key, value)?,
            "data_seed" => self.data_seed = num(&key, value)?,
            "data_restart" => self.data_restart = num(&key, value)?,
            "adjust_scope" | "scope" => self.scope = AdjustScope::parse(value)?,
            "lipschitz_scale" => self.lipschitz_scale = num(&key, value)?,
            "warp" => self.warp = on_off(&key, value)?,
            "episode_limit" => self.episode_limit = num(&key, value)?,
            "workers" => self.workers = num(&key, value)?,
            "exploration" => self.exploration = on_off(&key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Check ranges and referenced files.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes as f64),
            ("gamma", self.gamma),
            ("t_max_ms", self.t_max.as_secs_f64()),
            ("max_iterations", self.max_iterations as f64),
            ("n_brk", self.n_brk as f64),
            ("data_steps", self.data_steps as f64),
            ("episode_limit", self.episode_limit as f64),
            ("workers", self.workers as f64),
        ];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if !(self.lipschitz_scale >= 0.0) || !self.lipschitz_scale.is_finite() {
            return Err(Error::Config(
                "`lipschitz_scale` must be a finite non-negative number".into(),
            ));
        }
        if let Some(noise) = &self.noise {
            let n = BlackBoxEnv::new(self.env).state_dim();
            if noise.len() != n {
                return Err(Error::Config(format!(
                    "`noise` needs {n} values, got {}",
                    noise.len()
                )));
            }
            if noise.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::Config(
                    "`noise` half-widths must be finite and non-negative".into(),
                ));
            }
        }
        if let Some(path) = &self.data_file {
            if !path.is_file() {
                return Err(Error::Config(format!(
                    "data file {} does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    /// The simulator described by this config.
    pub fn build_env(&self) -> Result<BlackBoxEnv> {
        let mut env = BlackBoxEnv::new(self.env).with_horizons(self.n_plan, self.n_brk)?;
        if let Some(noise) = &self.noise {
            env = env.with_noise(Zonotope::from_diagonal(noise))?;
        }
        Ok(env)
    }

    pub fn safety_config(&self) -> SafetyConfig {
        SafetyConfig {
            gamma: self.gamma,
            t_max: self.t_max,
            max_iterations_per_step: self.max_iterations,
            scope: self.scope,
            ..SafetyConfig::default()
        }
    }

    pub fn reach_config(&self) -> ReachConfig {
        ReachConfig {
            lipschitz_scale: self.lipschitz_scale,
            warp: self.warp,
        }
    }

    /// Render in the format read by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("env", self.env.name().into());
        line("task", self.task.name().into());
        line("seed_start", self.seed_start.to_string());
        line("episodes", self.episodes.to_string());
        line("layer", if self.layer { "on" } else { "off" }.into());
        line("planner", self.planner.name().into());
        line("gamma", self.gamma.to_string());
        line("t_max_ms", (self.t_max.as_nanos() as f64 / 1e6).to_string());
        line("max_iterations", self.max_iterations.to_string());
        line("n_plan", self.n_plan.to_string());
        line("n_brk", self.n_brk.to_string());
        line(
            "noise",
            match &self.noise {
                Some(w) => w
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
                None => "default".into(),
            },
        );
        if let Some(p) = &self.data_file {
            line("data_file", p.display().to_string());
        }
        line("data_steps", self.data_steps.to_string());
        line("data_seed", self.data_seed.to_string());
        line("data_restart", self.data_restart.to_string());
        line("adjust_scope", self.scope.name().into());
        line("lipschitz_scale", self.lipschitz_scale.to_string());
        line("warp", self.warp.to_string());
        line("episode_limit", self.episode_limit.to_string());
        line("workers", self.workers.to_string());
        line("exploration", self.exploration.to_string());
        s
    }
}

/// Split config text into ordered `(key, value)` pairs.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

fn normalize_key(k: &str) -> String {
    k.trim().to_ascii_lowercase().replace('-', "_")
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn on_off(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected on/off, got `{value}`"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_text() {
        let mut cfg = ExperimentConfig::for_env(EnvKind::Unicycle2D);
        cfg.noise = Some(vec![0.001, 0.002, 0.003]);
        cfg.layer = false;
        cfg.t_max = Duration::from_millis(250);
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn env_applies_first() {
        let cfg =
            ExperimentConfig::parse("n_brk = 3\n# comment\nenv = unicycle  # trailing\n").unwrap();
        assert_eq!(cfg.env, EnvKind::Unicycle2D);
        assert_eq!(cfg.n_brk, 3);
        assert_eq!(cfg.task, TaskKind::Goal);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("gamma 0.1").is_err());
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        let cfg = ExperimentConfig::parse("gamma = -1").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::parse("noise = 1, 2").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::parse("data-file = /definitely/not/here").unwrap();
        assert!(cfg.validate().is_err());
    }
}
