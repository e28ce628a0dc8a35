//! Command-line front end.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::drift::{self, DEFAULT_GRID_POINTS};
use crate::model::{enumerate_rulesets, NoiseSpec, RulePolarity, RuleSet, SwarmState};
use crate::output::{self, Provenance};
use crate::schema::{parse_polarity_string, parse_schema, ruleset_of_schema, schema_of_ruleset};
use crate::ssa::{self, SimConfig, DEFAULT_RULE_RATE};
use crate::validate;

pub const DEFAULT_AGENTS: usize = 101;
pub const DEFAULT_GROUP: usize = 7;
pub const DEFAULT_SAMPLES: u64 = 10_000;
pub const DEFAULT_EVENTS: u64 = 100_000;
pub const SEED_ENV: &str = "SWARMDEC_SEED";

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
        }
    }
}

fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "swarmdec",
    version,
    about = "Binary collective decision-making swarm experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic drift curve over a uniform z grid (CSV).
    Drift(Flags),
    /// Group-composition probabilities on the K lattice (CSV).
    Probs(Flags),
    /// One Gillespie trajectory (CSV) and a JSON summary on stdout.
    Simulate(Flags),
    /// Zeros of the analytic drift with stability (JSON).
    FixedPoints(Flags),
    /// All rule sets of a group size with their canonical schemas.
    Rulesets(Flags),
    /// Oracle cross-checks; exits 4 when any check fails.
    Validate(Flags),
}

/// Flags shared by every command. Unset values fall back to `--config`,
/// then to the built-in defaults.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Flags {
    /// Swarm size N (odd).
    #[arg(long)]
    pub agents: Option<usize>,
    /// Group size G (odd, >= 3).
    #[arg(long)]
    pub group: Option<usize>,
    /// Polarity string, one 'M'/'m' per minority count.
    #[arg(long, conflicts_with = "schema")]
    pub rules: Option<String>,
    /// Reaction schema file instead of --rules.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub rule_rate: Option<f64>,
    /// Defaults to $SWARMDEC_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of z grid points.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Monte Carlo samples per lattice point.
    #[arg(long)]
    pub samples: Option<u64>,
    /// Event cap for `simulate`.
    #[arg(long)]
    pub events: Option<u64>,
    /// Time horizon for `simulate`.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Add Monte Carlo estimates.
    #[arg(long)]
    #[serde(default)]
    pub empirical: bool,
    /// JSON file with any of these flags as keys.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Also write a gnuplot script next to --out.
    #[arg(long)]
    #[serde(default)]
    pub plot_script: bool,
    /// Initial z for `simulate`, rounded to the nearest lattice state.
    #[arg(long, conflicts_with = "init_k")]
    pub init_z: Option<f64>,
    /// Initial X1 count for `simulate`.
    #[arg(long)]
    pub init_k: Option<usize>,
    /// Keep unanimous (no-op) group draws in the trajectory.
    #[arg(long)]
    #[serde(default)]
    pub record_null: bool,
}

impl Flags {
    /// Reads `--config`, if given, and fills unset flags from it.
    fn with_config_file(self) -> Result<Flags, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let file: Flags = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(self.merged_over(file))
    }

    /// Fills unset flags from `file`.
    fn merged_over(self, file: Flags) -> Flags {
        Flags {
            agents: self.agents.or(file.agents),
            group: self.group.or(file.group),
            rules: self.rules.or(file.rules),
            schema: self.schema.or(file.schema),
            epsilon: self.epsilon.or(file.epsilon),
            rule_rate: self.rule_rate.or(file.rule_rate),
            seed: self.seed.or(file.seed),
            out: self.out.or(file.out),
            grid: self.grid.or(file.grid),
            samples: self.samples.or(file.samples),
            events: self.events.or(file.events),
            t_max: self.t_max.or(file.t_max),
            empirical: self.empirical || file.empirical,
            config: self.config,
            plot_script: self.plot_script || file.plot_script,
            init_z: self.init_z.or(file.init_z),
            init_k: self.init_k.or(file.init_k),
            record_null: self.record_null || file.record_null,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Z(f64),
    Count(usize),
}

/// Fully resolved and cross-checked experiment parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub rules: RuleSet,
    pub noise: NoiseSpec,
    pub rule_rate: f64,
    pub seed: u64,
    pub grid: usize,
    pub samples: u64,
    pub events: Option<u64>,
    pub t_max: Option<f64>,
    pub init: InitialCondition,
    pub out: Option<PathBuf>,
    pub empirical: bool,
    pub plot_script: bool,
    pub record_null: bool,
}

impl ExperimentConfig {
    /// Resolves flags, the optional config file and `SWARMDEC_SEED`.
    pub fn resolve(flags: Flags) -> Result<Self, CliError> {
        let flags = flags.with_config_file()?;

        let n_agents = flags.agents.unwrap_or(DEFAULT_AGENTS);
        SwarmState::new(n_agents, 0).map_err(config_err)?;

        let rules = match (&flags.rules, &flags.schema) {
            (Some(_), Some(_)) => {
                return Err(config_err("--rules and --schema are mutually exclusive"))
            }
            (Some(label), None) => {
                let g = flags.group.unwrap_or(2 * label.chars().count() + 1);
                parse_polarity_string(label, g).map_err(config_err)?
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                let schema = parse_schema(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                let rules = ruleset_of_schema(&schema);
                if let Some(g) = flags.group.filter(|&g| g != rules.group_size()) {
                    return Err(CliError::Config(format!(
                        "--group {g} does not match schema group size {}",
                        rules.group_size()
                    )));
                }
                rules
            }
            (None, None) => {
                RuleSet::uniform(flags.group.unwrap_or(DEFAULT_GROUP), RulePolarity::Majority)
                    .map_err(config_err)?
            }
        };
        rules.check_population(n_agents).map_err(config_err)?;

        let noise = NoiseSpec::new(flags.epsilon.unwrap_or(0.0)).map_err(config_err)?;
        let rule_rate = flags.rule_rate.unwrap_or(DEFAULT_RULE_RATE);
        if !(rule_rate.is_finite() && rule_rate >= 0.0) {
            return Err(CliError::Config(format!(
                "rule rate {rule_rate} must be finite and non-negative"
            )));
        }

        let seed = match flags.seed {
            Some(s) => s,
            None => match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| {
                    CliError::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
                })?,
                Err(_) => 0,
            },
        };

        let init = match (flags.init_z, flags.init_k) {
            (Some(_), Some(_)) => {
                return Err(config_err("--init-z and --init-k are mutually exclusive"))
            }
            (Some(z), None) => {
                crate::model::state_of_z(n_agents, z).map_err(config_err)?;
                InitialCondition::Z(z)
            }
            (None, Some(k)) => {
                SwarmState::new(n_agents, k).map_err(config_err)?;
                InitialCondition::Count(k)
            }
            (None, None) => InitialCondition::Z(0.0),
        };

        let grid = flags.grid.unwrap_or(DEFAULT_GRID_POINTS);
        if grid < 3 {
            return Err(CliError::Config(format!(
                "grid of {grid} points is too small (need at least 3)"
            )));
        }
        let samples = flags.samples.unwrap_or(DEFAULT_SAMPLES);
        if samples == 0 {
            return Err(config_err("--samples must be positive"));
        }
        if let Some(t) = flags.t_max {
            if !(t.is_finite() && t > 0.0) {
                return Err(CliError::Config(format!(
                    "t-max {t} must be finite and positive"
                )));
            }
        }
        // an explicit horizon alone bounds the run; otherwise cap the events
        let events = match (flags.events, flags.t_max) {
            (Some(e), _) => Some(e),
            (None, Some(_)) => None,
            (None, None) => Some(DEFAULT_EVENTS),
        };

        Ok(Self {
            n_agents,
            rules,
            noise,
            rule_rate,
            seed,
            grid,
            samples,
            events,
            t_max: flags.t_max,
            init,
            out: flags.out,
            empirical: flags.empirical,
            plot_script: flags.plot_script,
            record_null: flags.record_null,
        })
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            n_agents: self.n_agents,
            group_size: self.rules.group_size(),
            rules: self.rules.label(),
            epsilon: self.noise.epsilon(),
            seed: self.seed,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            rule_rate: self.rule_rate,
            noise_rate: ssa::noise_rate_for(self.noise.epsilon()),
            max_events: self.events,
            t_max: self.t_max,
            record_null_draws: self.record_null,
            stop_at_consensus: false,
        }
    }

    pub fn initial_state(&self) -> Result<SwarmState, CliError> {
        match self.init {
            InitialCondition::Z(z) => crate::model::state_of_z(self.n_agents, z),
            InitialCondition::Count(k) => SwarmState::new(self.n_agents, k),
        }
        .map_err(config_err)
    }

    fn require_out(&self, what: &str) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("{what} requires --out")))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    output::write_atomic(path, contents).map_err(|e| io_err(path, e))
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(cfg: &ExperimentConfig, contents: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn emit_plot_script(cfg: &ExperimentConfig, columns: usize, title: &str) -> Result<(), CliError> {
    if !cfg.plot_script {
        return Ok(());
    }
    let data = cfg.require_out("--plot-script")?;
    let script = output::plot_script(data, columns, title);
    write_file(&output::sibling_path(data, ".gp"), &script)
}

fn cmd_drift(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let prov = cfg.provenance();
    let curve =
        drift::analytic_curve(cfg.n_agents, &cfg.rules, cfg.noise, cfg.grid).map_err(config_err)?;
    if cfg.empirical {
        let out = cfg.require_out("--empirical")?;
        let mc = drift::empirical_drift(
            cfg.n_agents,
            &cfg.rules,
            cfg.noise,
            &cfg.sim_config(),
            cfg.samples,
            cfg.seed,
        )
        .map_err(config_err)?;
        write_file(
            &output::sibling_path(out, ".empirical.csv"),
            &output::drift_csv(&mc, &prov),
        )?;
    }
    emit(cfg, &output::drift_csv(&curve, &prov))?;
    emit_plot_script(cfg, 2, &format!("drift {}", prov.rules))
}

fn cmd_probs(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let g = cfg.rules.group_size();
    let n = cfg.n_agents;
    let rows = (0..=n)
        .into_par_iter()
        .map(|k| {
            let table = drift::rule_firing_probabilities(n, g, k)?;
            let freq = if cfg.empirical {
                Some(drift::empirical_firing_frequencies(
                    n,
                    g,
                    k,
                    cfg.samples,
                    ssa::derive_seed(cfg.seed, k as u64),
                )?)
            } else {
                None
            };
            Ok((2.0 * k as f64 / n as f64 - 1.0, table, freq))
        })
        .collect::<Result<Vec<_>, drift::DriftError>>()
        .map_err(config_err)?;
    emit(cfg, &output::probs_csv(&rows, g, &cfg.provenance()))?;
    emit_plot_script(cfg, g + 2, &format!("composition probabilities G={g}"))
}

fn cmd_simulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let initial = cfg.initial_state()?;
    let traj =
        ssa::simulate(initial, &cfg.rules, &cfg.sim_config(), cfg.seed).map_err(config_err)?;
    if let Some(path) = &cfg.out {
        write_file(path, &output::trajectory_csv(&traj, &cfg.provenance()))?;
    }
    let summary = serde_json::json!({
        "n_agents": cfg.n_agents,
        "rules": cfg.rules.label(),
        "epsilon": cfg.noise.epsilon(),
        "seed": cfg.seed,
        "initial_count_x1": initial.count_x1(),
        "final_count_x1": traj.final_state.count_x1(),
        "final_z": traj.final_state.z(),
        "end_time": traj.end_time,
        "events": traj.counts,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_fixed_points(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let points = drift::find_fixed_points(cfg.n_agents, &cfg.rules, cfg.noise, cfg.grid)
        .map_err(config_err)?;
    emit(cfg, &output::fixed_points_json(&points, &cfg.provenance()))
}

fn cmd_rulesets(flags: &Flags) -> Result<(), CliError> {
    let g = flags.group.unwrap_or(DEFAULT_GROUP);
    let sets = enumerate_rulesets(g).map_err(config_err)?;
    let mut text = String::new();
    for r in &sets {
        text.push_str(&format!(
            "{}\n{}\n",
            r.label(),
            schema_of_ruleset(r).to_text()
        ));
    }
    match &flags.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let report = validate::run(cfg.n_agents, cfg.rules.group_size()).map_err(config_err)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Some(path) = &cfg.out {
        write_file(path, &format!("{}{json}\n", cfg.provenance().header()))?;
    }
    println!("{json}");
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.enforced && !c.passed)
            .map(|c| c.name)
            .collect();
        Err(CliError::Validation(failed.join(", ")))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Rulesets(flags) => cmd_rulesets(&flags.with_config_file()?),
        Command::Drift(f) => cmd_drift(&ExperimentConfig::resolve(f)?),
        Command::Probs(f) => cmd_probs(&ExperimentConfig::resolve(f)?),
        Command::Simulate(f) => cmd_simulate(&ExperimentConfig::resolve(f)?),
        Command::FixedPoints(f) => cmd_fixed_points(&ExperimentConfig::resolve(f)?),
        Command::Validate(f) => cmd_validate(&ExperimentConfig::resolve(f)?),
    }
}
