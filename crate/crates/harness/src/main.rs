use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ccqm_harness::config::{Recipe, RunConfig};
use ccqm_harness::error::HarnessError;
use ccqm_harness::presets::{paper_scale, preset};
use ccqm_harness::replay::replay;
use ccqm_harness::{exit, run_with_threads};
use clap::{Args, Parser, Subcommand};

const SCHEMA: &str = r#"# Run configuration, schema_version = 1. Unknown keys are rejected.
schema_version = 1            # required
recipe = "free-spread-ccqm"   # evolve | free-spread-ccqm | exp-growth | grw-rates | symmetry-compare
                              # | double-slit | merge-then-collapse | statistics-preservation | sweep
preset = "desk"               # desk | paper-scale (recorded in summary.json)
seed = 0                      # u64; trajectory t at sweep point p uses stream (seed, p << 32 | t)
trajectories = 1
model = "unitary"             # unitary | grw | ccqm
dt = 0.05                     # > 0
t_end = 5.0                   # >= 0
max_events = 1000             # optional: stop a trajectory after this many events
stop_at_boundary = false      # end a trajectory at its last state with boundary occupancy <= 1e-6
merge_coefficient = 0.0       # merge rate beta >= 0
max_joint_points = 4194304    # optional: merges needing more grid points are deferred

[lattice]
grid_points = 256             # power of two, per axis
domain_length = 128.0         # periodic, coordinates in [-L/2, L/2)
cell_points = 4               # grid points per reference-cell side, must divide grid_points
base_magnitude_relative = 0.03  # f0 as a fraction of the initial peak |psi|; or
# base_magnitude = 0.01         # absolute f0 (set exactly one)
base_phase = 0.39269908169872414  # theta0 in (0, 2 pi]

[[particles]]
species = "e"
statistics = "distinguishable"  # distinguishable | boson | fermion
mass = 1.0
spatial_dim = 1
# cell_points = 4             # optional per-particle override
wavefunction = 0              # particles with equal index start in one joint wavefunction
initial = { kind = "gaussian", center = [0.0], width = 0.8, momentum = [0.0] }
# initial = { kind = "two_source", separation = 16.0, width = 1.0 }
# initial = { kind = "flat_cells", first = [4], count = [8] }

[hamiltonian]
h_sim = 6.283185307179586     # Planck constant in simulation units
external = { kind = "free" }  # free | harmonic {stiffness, center} | barrier {center, width, height}
                              # | double_slit {wall_position, wall_thickness, slit_separation, slit_width, height}
# [[hamiltonian.pairs]]
# species = ["a", "b"]        # optional, default all pairs
# potential = { kind = "gaussian_well", depth = 0.5, width = 2.0 }  # or soft_coulomb {strength, softening}
# cutoff = 6.0                # optional finite range

[grw]
lambda_rate = 1.0             # per-particle hit rate
alpha = 1.0                   # inverse squared localization radius

[ccqm]
v_critical = 8                # cells, >= 2
fraction_f = 0.5              # in (0, 1)
check_interval = 0.25
split_probability = 0.0       # p0
split_coefficient = 0.0       # kappa
exact_center_epsilon = false

[output]
events = "events.jsonl"       # one JSON event per line, tagged with its trajectory
timeseries = "timeseries.csv" # trajectory,time,wavefunction,n_particles,relative_volume,norm,
                              # particle,marginal_width,boundary_occupancy
summary = "summary.json"
sample_every = 1              # ticks between time-series rows
checkpoint = true             # registry checkpoint per trajectory, read by `replay`

[sweep]                       # recipe = "sweep": Cartesian product, one directory per point
base = "free-spread-ccqm"
v_critical = [8, 12]
fraction_f = [0.5]
base_magnitude = [0.03, 0.05] # replaces whichever f0 form [lattice] uses

[double_slit]                 # recipe = "double-slit"
v_critical = [25, 20, 14, 8]    # strictly decreasing; a collapse-free reference is always added
# window = 8.0                # visibility half-window, default one fringe spacing
min_visibility = 0.9

[statistics]                  # recipe = "statistics-preservation"; trajectories = trials
bins = 32
band = 3.0                    # per-bin tolerance in standard errors
"#;

#[derive(Parser)]
#[command(name = "ccqm", version, about = "Spontaneous-collapse simulator: GRW hits and critical-volume collapse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a recipe and write its artifacts.
    Run(RunArgs),
    /// Run a Cartesian parameter sweep, one output directory per point.
    Sweep(RunArgs),
    /// Check a config file and report every problem with its field.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-derive the property checks of an existing output directory.
    Replay {
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the annotated config schema, or a recipe's built-in config.
    PrintSchema {
        #[arg(long, value_enum)]
        recipe: Option<Recipe>,
        #[arg(long)]
        paper_scale: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    recipe: Option<Recipe>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    trajectories: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Start from the published-constants preset instead of a recipe preset.
    #[arg(long)]
    paper_scale: bool,
}

fn init_logging() {
    let level = std::env::var("CCQM_LOG_LEVEL").unwrap_or_else(|_| "warn".into());
    let level = match level.as_str() {
        "error" | "warn" | "info" | "debug" => level,
        other => {
            eprintln!("CCQM_LOG_LEVEL={other} is not one of error, warn, info, debug; using warn");
            "warn".into()
        }
    };
    env_logger::Builder::new().parse_filters(&level).format_timestamp(None).init();
}

fn resolve(args: &RunArgs, sweep: bool) -> Result<RunConfig, HarnessError> {
    let mut cfg = match (&args.config, args.paper_scale) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, true) => paper_scale(),
        (None, false) => preset(args.recipe.unwrap_or(if sweep { Recipe::Sweep } else { Recipe::Evolve })),
    };
    if let Some(r) = args.recipe {
        cfg.recipe = r;
    }
    if sweep {
        cfg.recipe = Recipe::Sweep;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trajectories {
        cfg.trajectories = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(args: &RunArgs, sweep: bool) -> Result<i32, HarnessError> {
    let cfg = resolve(args, sweep)?;
    let summary = run_with_threads(&cfg, &args.out, args.threads)?;
    for c in &summary.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("{} -> {}", summary.recipe, args.out.display());
    Ok(if summary.passed { exit::SUCCESS } else { exit::PROPERTY })
}

fn replay_dir(out: &Path) -> Result<i32, HarnessError> {
    let report = replay(out)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.passed { exit::SUCCESS } else { exit::PROPERTY })
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => execute(args, false),
        Command::Sweep(args) => execute(args, true),
        Command::ValidateConfig { config } => RunConfig::load(config).map(|_| {
            println!("{}: ok", config.display());
            exit::SUCCESS
        }).map_err(HarnessError::from),
        Command::Replay { out } => replay_dir(out),
        Command::PrintSchema { recipe, paper_scale: paper } => {
            match (recipe, paper) {
                (_, true) => print!("{}", paper_scale().to_toml()),
                (Some(r), false) => print!("{}", preset(*r).to_toml()),
                (None, false) => print!("{SCHEMA}"),
            }
            Ok(exit::SUCCESS)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
