use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use brsl::harness::validate::{gradient_check, lp_check};
use brsl::harness::{experiment_data, parse_pairs, save_dataset, Experiment, ExperimentConfig};
use brsl::EnvKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "brsl",
    version,
    about = "Data-driven reachability safety layer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record random-input data from an obstacle-free environment.
    Collect {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run episodes and write a CSV report.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// CSV output; printed to stdout when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check tube containment, gradients and LP verdicts.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 50)]
        gradient_instances: usize,
        #[arg(long, default_value_t = 500)]
        lp_pairs: usize,
    },
    /// Compute-time table for both environments.
    Bench {
        #[arg(long, default_value_t = 5)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

/// Experiment settings; flags override the config file.
#[derive(Args, Default)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    seed_start: Option<u64>,
    #[arg(long)]
    episodes: Option<usize>,
    /// on or off.
    #[arg(long)]
    layer: Option<String>,
    #[arg(long)]
    planner: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t_max_ms: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    n_plan: Option<usize>,
    #[arg(long)]
    n_brk: Option<usize>,
    /// Comma-separated noise half-widths, one per state coordinate.
    #[arg(long)]
    noise: Option<String>,
    #[arg(long)]
    data_file: Option<PathBuf>,
    #[arg(long)]
    data_steps: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    data_restart: Option<usize>,
    /// all or last.
    #[arg(long)]
    adjust_scope: Option<String>,
    #[arg(long)]
    lipschitz_scale: Option<f64>,
    #[arg(long)]
    warp: Option<String>,
    #[arg(long)]
    episode_limit: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    exploration: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        let s = |v: &Option<String>| v.clone();
        let n = |v: Option<f64>| v.map(|x| x.to_string());
        let u = |v: Option<usize>| v.map(|x| x.to_string());
        let l = |v: Option<u64>| v.map(|x| x.to_string());
        push("env", s(&self.env));
        push("task", s(&self.task));
        push("seed_start", l(self.seed_start));
        push("episodes", u(self.episodes));
        push("layer", s(&self.layer));
        push("planner", s(&self.planner));
        push("gamma", n(self.gamma));
        push("t_max_ms", n(self.t_max_ms));
        push("max_iterations", u(self.max_iterations));
        push("n_plan", u(self.n_plan));
        push("n_brk", u(self.n_brk));
        push("noise", s(&self.noise));
        push(
            "data_file",
            self.data_file.as_ref().map(|p| p.display().to_string()),
        );
        push("data_steps", u(self.data_steps));
        push("data_seed", l(self.data_seed));
        push("data_restart", u(self.data_restart));
        push("adjust_scope", s(&self.adjust_scope));
        push("lipschitz_scale", n(self.lipschitz_scale));
        push("warp", s(&self.warp));
        push("episode_limit", u(self.episode_limit));
        push("workers", u(self.workers));
        push("exploration", s(&self.exploration));
        let cfg = ExperimentConfig::from_pairs(&pairs)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Collect { config, out } => {
            let cfg = config.resolve()?;
            if cfg.data_file.is_some() {
                bail!("`collect` records new data; drop --data-file");
            }
            let env = cfg.build_env()?;
            let data = experiment_data(&cfg, &env)?;
            save_dataset(&out, &data).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} samples to {}", data.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Run { config, csv } => {
            let cfg = config.resolve()?;
            let report = Experiment::new(cfg)?.run()?;
            match csv {
                Some(path) => {
                    report
                        .write_csv(&path)
                        .with_context(|| format!("writing {}", path.display()))?;
                    print!("{}", report.summary_text());
                }
                None => print!("{}", report.to_csv()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            config,
            gradient_instances,
            lp_pairs,
        } => {
            let cfg = config.resolve()?;
            if !cfg.layer {
                bail!("validation needs the safety layer on");
            }
            let exp = Experiment::new(cfg)?;
            let mut ok = true;

            let report = exp.run()?;
            let s = &report.summary;
            let pass = s.tube_misses == 0 && s.collision_rate == 0.0;
            ok &= pass;
            println!(
                "{} containment: {} checks, {} misses, {:.1} % collisions",
                verdict(pass),
                s.tube_checks,
                s.tube_misses,
                s.collision_rate
            );

            let layer = exp.layer().expect("layer on");
            let g = gradient_check(
                layer,
                gradient_instances,
                3,
                1e-5,
                1e-3,
                exp.config().data_seed,
            )?;
            let pass = g.failures == 0;
            ok &= pass;
            println!(
                "{} gradients: {}/{} non-degenerate, max relative error {:.2e}",
                verdict(pass),
                g.non_degenerate,
                g.instances,
                g.max_relative_error
            );

            let lp = lp_check(lp_pairs, 0.05, exp.config().data_seed)?;
            let pass = lp.failures == 0;
            ok &= pass;
            println!(
                "{} lp verdicts: {}/{} certified",
                verdict(pass),
                lp.certified,
                lp.pairs
            );
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Bench { episodes, workers } => {
            println!(
                "{:<12} {:>8} {:>8} {:>20} {:>10}",
                "env", "episodes", "steps", "compute ms", "max ms"
            );
            for kind in [EnvKind::PointMass2D, EnvKind::Unicycle2D] {
                let mut cfg = ExperimentConfig::for_env(kind);
                cfg.episodes = episodes;
                cfg.workers = workers;
                let r = Experiment::new(cfg)?.run()?;
                let s = &r.summary;
                let steps: usize = r.episodes.iter().map(|e| e.steps).sum();
                println!(
                    "{:<12} {:>8} {:>8} {:>20} {:>10.2}",
                    kind.name(),
                    s.episodes,
                    steps,
                    format!("{:.2} ± {:.2}", s.compute_mean_ms, s.compute_std_ms),
                    s.compute_max_ms
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
