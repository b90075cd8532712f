//! `rmab`: indexability checks, Whittle indices and policy simulation for
//! restless bandits described in TOML model files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmab_core::fixtures::{load_fixture, FIXTURE_NAMES};
use rmab_core::indexability::{analyze, IndexError, SubsidyGrid, DEFAULT_GRID_POINTS};
use rmab_core::io::{arm_digest, parse_model, write_csv, IndexEntry, ModelFile, ToCsv};
use rmab_core::model::ArmModel;
use rmab_core::policies::{IndexTable, PolicyError, RmabInstance, RolloutConfig};
use rmab_core::sim::{default_horizon, simulate, SimError, SimPolicy, SimulationConfig};
use rmab_core::solver::SolverConfig;
use rmab_core::structure::check_structural_conditions;

#[derive(Parser)]
#[command(name = "rmab", version, about = "Restless multi-armed bandit toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the policy matrix over a subsidy grid, check indexability and
    /// write the policy-matrix and index-report CSVs.
    Index(IndexArgs),
    /// Print the structural (threshold-in-state) conditions of one arm.
    Check(CheckArgs),
    /// Simulate an instance under the myopic, Whittle or rollout policy.
    Simulate(SimulateArgs),
    /// List or export the built-in example arms.
    Fixtures {
        #[command(subcommand)]
        action: FixturesCommand,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Print every catalog name, one per line.
    List,
    /// Write a catalog arm as a model file.
    Export {
        name: String,
        path: PathBuf,
    },
}

/// Where a single arm comes from.
#[derive(Args)]
struct ArmSource {
    /// Model file (TOML).
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    model: Option<PathBuf>,
    /// Use a catalog arm instead of a model file.
    #[arg(long)]
    fixture: Option<String>,
    /// Arm to use when the model file defines several.
    #[arg(long)]
    arm: Option<String>,
    /// Replace the arm's discount factor.
    #[arg(long, value_name = "BETA")]
    beta_override: Option<f64>,
}

#[derive(Args)]
struct SolverArgs {
    /// Action tolerance Δ: Q-gaps below it count as ties and go passive.
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    /// Value-iteration stopping tolerance ε_V on the sup-norm step.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Iteration cap T_max per subsidy.
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, CliError> {
        let cfg = SolverConfig {
            max_iterations: self.max_iters,
            value_tolerance: self.tol,
            action_tolerance: self.delta,
        };
        cfg.validate().map_err(CliError::Usage)?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    source: ArmSource,
    #[command(flatten)]
    solver: SolverArgs,
    /// Lowest subsidy of the grid (default: below the reward span, at most -1).
    #[arg(long, allow_negative_numbers = true)]
    grid_min: Option<f64>,
    /// Highest subsidy of the grid (default: above the reward span, at least 1).
    #[arg(long, allow_negative_numbers = true)]
    grid_max: Option<f64>,
    /// Number of evenly spaced grid points.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    grid_points: usize,
    /// Sharpen each index by bisection between its bracketing grid points.
    #[arg(long)]
    refine: bool,
    /// Output prefix; writes <PREFIX>.policy.csv and <PREFIX>.indices.csv
    /// (default: the arm name).
    #[arg(long, value_name = "PREFIX")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: ArmSource,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Myopic,
    Whittle,
    Rollout,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Myopic => "myopic",
            PolicyKind::Whittle => "whittle",
            PolicyKind::Rollout => "rollout",
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file with an [instance] block (or a single arm).
    #[arg(required_unless_present = "fixture", conflicts_with = "fixture")]
    instance: Option<PathBuf>,
    /// Simulate a single catalog arm instead.
    #[arg(long)]
    fixture: Option<String>,
    /// Policy to simulate.
    #[arg(long, value_enum)]
    policy: PolicyKind,
    /// Steps T per replication (default: 5·⌈1/(1−β)⌉).
    #[arg(long)]
    horizon: Option<usize>,
    /// Replications R.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Seed for every random stream.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rollout look-ahead H.
    #[arg(long, default_value_t = 4)]
    rollout_h: usize,
    /// Rollout trajectories L per candidate.
    #[arg(long, default_value_t = 30)]
    rollout_l: usize,
    /// Rollout candidate subsets |A| when more than one arm is played
    /// (default: the number of arms).
    #[arg(long)]
    candidates: Option<usize>,
    /// Replace every arm's discount factor.
    #[arg(long, value_name = "BETA")]
    beta_override: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Trace CSV path (default: <instance stem>.<policy>.trace.csv in the
    /// working directory).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    /// Bad arguments or unreadable input; exit 2.
    Usage(String),
    /// The computation itself failed; exit 1.
    Domain(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Domain(m) => f.write_str(m),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::NotConverged { .. } => CliError::Domain(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::NonIndexable { .. } | PolicyError::Index(IndexError::NotConverged { .. }) => {
                CliError::Domain(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn read_model_file(path: &Path) -> Result<ModelFile, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Domain(format!("cannot write {}: {e}", path.display())))
}

fn fixture(name: &str) -> Result<ArmModel, CliError> {
    load_fixture(name).map_err(|e| CliError::Usage(e.to_string()))
}

fn with_beta(model: ArmModel, beta: Option<f64>) -> Result<ArmModel, CliError> {
    match beta {
        Some(b) => model.with_discount(b).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(model),
    }
}

/// Resolves the arm and a name for output files.
fn load_arm(src: &ArmSource) -> Result<(String, ArmModel), CliError> {
    let (name, model) = match (&src.model, &src.fixture) {
        (_, Some(f)) => (f.clone(), fixture(f)?),
        (Some(path), None) => {
            let file = read_model_file(path)?;
            let arm = match &src.arm {
                Some(name) => file.arms.iter().find(|a| &a.name == name).ok_or_else(|| {
                    CliError::Usage(format!("{} has no arm named `{name}`", path.display()))
                })?,
                None if file.arms.len() == 1 => &file.arms[0],
                None => {
                    let names: Vec<&str> = file.arms.iter().map(|a| a.name.as_str()).collect();
                    return Err(CliError::Usage(format!(
                        "{} defines {} arms ({}); pick one with --arm",
                        path.display(),
                        names.len(),
                        names.join(", ")
                    )));
                }
            };
            (arm.name.clone(), arm.model.clone())
        }
        (None, None) => unreachable!("clap requires a model or --fixture"),
    };
    Ok((name, with_beta(model, src.beta_override)?))
}

fn cmd_index(args: &IndexArgs) -> Result<(), CliError> {
    let (name, model) = load_arm(&args.source)?;
    let config = args.solver.config()?;
    let default = SubsidyGrid::default_for(&model);
    let lo = args.grid_min.unwrap_or(default.points()[0]);
    let hi = args.grid_max.unwrap_or(*default.points().last().expect("non-empty grid"));
    let grid = SubsidyGrid::linspace(lo, hi, args.grid_points)?;

    let analysis = analyze(&model, &grid, &config, args.refine)?;
    let report = &analysis.report;

    let prefix = args.out.clone().unwrap_or_else(|| PathBuf::from(&name));
    let policy_path = suffixed(&prefix, "policy.csv");
    let index_path = suffixed(&prefix, "indices.csv");
    write_text(&policy_path, &analysis.policy.to_csv_string())?;
    write_text(&index_path, &report.to_csv_string())?;

    if report.indexable {
        println!("INDEXABLE");
        for (s, idx) in report.whittle_index.iter().enumerate() {
            let flag = idx.flag.as_str();
            if flag.is_empty() {
                println!("state={} index={}", s + 1, rmab_core::io::format_g12(idx.value));
            } else {
                println!("state={} index={} {flag}", s + 1, rmab_core::io::format_g12(idx.value));
            }
        }
    } else {
        let w = &report.witnesses[0];
        let lambdas: Vec<String> = w.lambdas.iter().map(|&l| rmab_core::io::format_g12(l)).collect();
        println!("NON-INDEXABLE state={} lambdas={}", w.state, lambdas.join(","));
    }
    Ok(())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_check(args: &CheckArgs) -> Result<(), CliError> {
    let (_, model) = load_arm(&args.source)?;
    for (name, value) in check_structural_conditions(&model).entries() {
        println!("{name}={value}");
    }
    Ok(())
}

/// Key for one arm's cached indices: arm, solver settings and grid recipe.
fn cache_key(model: &ArmModel, config: &SolverConfig) -> String {
    use sha2::{Digest, Sha256};
    let text = format!(
        "{}|max_iterations={}|value_tolerance={:e}|action_tolerance={:e}|grid=default-{}|refine",
        arm_digest(model),
        config.max_iterations,
        config.value_tolerance,
        config.action_tolerance,
        DEFAULT_GRID_POINTS
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Whittle indices for `instance`, read from or written to the sidecar.
fn indices_with_cache(
    instance: &RmabInstance,
    file: Option<(&Path, &ModelFile)>,
    config: &SolverConfig,
) -> Result<IndexTable, CliError> {
    let Some((path, file)) = file else {
        return Ok(IndexTable::compute(instance, config)?);
    };
    let sidecar = path.with_extension("indices.toml");
    let keys: Vec<String> = instance.arms().iter().map(|a| cache_key(a, config)).collect();
    let spec = file.instance.as_ref();
    let arm_names: Vec<String> = match spec {
        Some(s) => s.arms.clone(),
        None => vec![file.arms[0].name.clone()],
    };
    if let Ok(bytes) = fs::read(&sidecar) {
        if let Ok(cached) = parse_model(&bytes) {
            let hit: Option<Vec<Vec<f64>>> = arm_names
                .iter()
                .zip(&keys)
                .map(|(name, key)| {
                    cached
                        .indices
                        .iter()
                        .find(|e| &e.arm == name && &e.key == key)
                        .map(|e| e.values.clone())
                })
                .collect();
            if let Some(per_arm) = hit {
                let table = IndexTable::new(per_arm);
                if table.check_covers(instance).is_ok() {
                    return Ok(table);
                }
            }
        }
    }
    let table = IndexTable::compute(instance, config)?;
    let mut out = file.clone();
    out.indices.clear();
    for ((name, key), values) in arm_names.iter().zip(&keys).zip(table.per_arm()) {
        if !out.indices.iter().any(|e| &e.arm == name) {
            out.indices.push(IndexEntry {
                arm: name.clone(),
                key: key.clone(),
                values: values.clone(),
            });
        }
    }
    write_text(&sidecar, &out.to_toml_string())?;
    Ok(table)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let (instance, file, stem) = match (&args.instance, &args.fixture) {
        (_, Some(name)) => {
            let arm = with_beta(fixture(name)?, args.beta_override)?;
            (RmabInstance::new(vec![arm], 1)?, None, PathBuf::from(name))
        }
        (Some(path), None) => {
            let file = read_model_file(path)?;
            let instance = if file.instance.is_some() {
                file.instance(args.beta_override)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            } else if file.arms.len() == 1 {
                let arm = with_beta(file.arms[0].model.clone(), args.beta_override)?;
                RmabInstance::new(vec![arm], 1)?
            } else {
                return Err(CliError::Usage(format!(
                    "{} has several arms but no [instance] block",
                    path.display()
                )));
            };
            let stem = PathBuf::from(path.file_stem().unwrap_or(path.as_os_str()));
            (instance, Some((path.as_path(), file)), stem)
        }
        (None, None) => unreachable!("clap requires an instance or --fixture"),
    };
    let solver = args.solver.config()?;

    let policy = match args.policy {
        PolicyKind::Myopic => SimPolicy::Myopic,
        PolicyKind::Whittle => {
            let file = file.as_ref().map(|(p, f)| (*p, f));
            SimPolicy::Whittle(indices_with_cache(&instance, file, &solver)?)
        }
        PolicyKind::Rollout => {
            let rc = RolloutConfig {
                horizon: args.rollout_h,
                trajectories: args.rollout_l,
                candidate_limit: args.candidates,
                seed: args.seed,
            };
            rc.validate()?;
            SimPolicy::Rollout(rc)
        }
    };
    let horizon = args.horizon.unwrap_or_else(|| default_horizon(instance.discount()));
    let config = SimulationConfig::new(policy, horizon, args.reps, args.seed);
    let trace = simulate(&instance, &config).map_err(|e| match e {
        SimError::Config(m) => CliError::Usage(m),
        SimError::Policy(p) => CliError::from(p),
    })?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| suffixed(&stem, &format!("{}.trace.csv", args.policy)));
    write_csv(&trace, &out)
        .map_err(|e| CliError::Domain(format!("cannot write {}: {e}", out.display())))?;
    println!(
        "policy={} T={} R={} final={} ± {}",
        args.policy,
        horizon,
        args.reps,
        rmab_core::io::format_g12(trace.final_mean()),
        rmab_core::io::format_g12(trace.final_std_error())
    );
    Ok(())
}

fn cmd_fixtures(action: &FixturesCommand) -> Result<(), CliError> {
    match action {
        FixturesCommand::List => {
            for name in FIXTURE_NAMES {
                println!("{name}");
            }
        }
        FixturesCommand::Export { name, path } => {
            let model = fixture(name)?;
            write_text(path, &ModelFile::single(name, model).to_toml_string())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Check(a) => cmd_check(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fixtures { action } => cmd_fixtures(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
