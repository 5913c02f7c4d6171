//! Command-line entry points.
//!
//! Every subcommand resolves its configuration the same way — command-line
//! flags over config file over named profile — writes a manifest next to
//! anything it produces, and exits 0 on success, 1 on a validation problem
//! (bad flags, bad config, missing or malformed input files), or 2 on a
//! runtime failure (simulation divergence, optimization errors, output I/O).
//!
//! A results directory is self-describing: `manifest.json` plus the CSVs are
//! enough to re-run `stats` or `export-trajectory` without the original
//! command line.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::afpo::GenerationStats;
use crate::config::{
    self, parse_config, ConfigOverrides, Manifest, RunConfig, SimPatch, MANIFEST_FILE,
};
use crate::experiments::{
    grid_statistics_cells, optimize_predamage_controllers, run_recovery_grid,
    size_control_experiment, CellRelative, PredamageChampion, RecoveryOption,
    RecoveryRecord,
};
use crate::genome::{
    express_controller, express_shape, load_genome, save_genome, Controller, Shape,
};
use crate::morphology::{build_quadruped, damage_structure, DamageScenario, VoxelStructure};
use crate::physics::{
    frames_or_error, simulate_with_frames, write_trajectory_csv, write_trajectory_obj_sequence,
    TrajectorySummary,
};
use crate::reports::{
    read_grid_summary, write_generation_log, write_grid_summary, write_size_control_report,
    write_stats_report,
};

/// A failure with a decided exit code.
#[derive(Debug)]
pub enum AppError {
    /// Bad input from the user: exit 1.
    Validation(String),
    /// The run itself broke: exit 2.
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Validation(_) => 1,
            AppError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Validation(m) | AppError::Runtime(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for AppError {}

fn validation(e: impl fmt::Display) -> AppError {
    AppError::Validation(e.to_string())
}

fn runtime(e: impl fmt::Display) -> AppError {
    AppError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "morphovox",
    version,
    about = "Voxel soft-body locomotion, damage, and recovery experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Emit the intact robot structure (JSON dump, text grid on stdout).
    BuildRobot(BuildRobotArgs),
    /// Emit a damaged robot structure.
    Damage(DamageArgs),
    /// Run one locomotion evaluation and print its summary.
    Simulate(SimulateArgs),
    /// Optimize walking controllers for the intact robot.
    Evolve(EvolveArgs),
    /// Run a single damage × recovery-option × lineage cell.
    Recover(RecoverArgs),
    /// Run the full damage × recovery grid, with summary and statistics.
    Grid(GridArgs),
    /// Recompute statistics from a grid summary CSV.
    Stats(StatsArgs),
    /// Replay a champion and export its trajectory as an OBJ sequence.
    ExportTrajectory(ExportTrajectoryArgs),
}

/// Flags shared by every configuration-driven subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// Config file: TOML overrides, or a manifest.json from a previous run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named base profile: `desk` or `paper`.
    #[arg(long)]
    pub profile: Option<String>,
    /// Master random seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for results.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads (also settable via MORPHOVOX_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Integration time step, seconds.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Scored evaluation duration, seconds (whole actuation cycles).
    #[arg(long)]
    pub eval_duration: Option<f64>,
    /// Settling time before scoring starts, seconds.
    #[arg(long)]
    pub settle_duration: Option<f64>,
    /// Beam oscillation amplitude, cm.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Actuation frequency, Hz.
    #[arg(long)]
    pub frequency: Option<f64>,
    /// Young's modulus, Pa.
    #[arg(long)]
    pub youngs_modulus: Option<f64>,
    /// Ground contact stiffness, N/m.
    #[arg(long)]
    pub ground_stiffness: Option<f64>,
}

impl ConfigArgs {
    fn overrides(&self) -> ConfigOverrides {
        ConfigOverrides {
            profile: self.profile.clone(),
            master_seed: self.seed,
            output_dir: self.output.clone(),
            // Precedence for threads: flag, then environment, then file.
            threads: self.threads.or_else(threads_from_env),
            sim: SimPatch {
                dt: self.dt,
                eval_duration: self.eval_duration,
                settle_duration: self.settle_duration,
                actuation_amplitude: self.amplitude,
                actuation_frequency: self.frequency,
                youngs_modulus: self.youngs_modulus,
                ground_stiffness: self.ground_stiffness,
                ..SimPatch::default()
            },
            ..ConfigOverrides::default()
        }
    }

    pub fn resolve(&self) -> Result<RunConfig, AppError> {
        parse_config(self.config.as_deref(), &self.overrides()).map_err(validation)
    }
}

fn threads_from_env() -> Option<usize> {
    std::env::var("MORPHOVOX_THREADS").ok()?.parse().ok()
}

/// Install the worker pool. Repeat calls (e.g. in tests) are harmless.
fn apply_threads(threads: Option<usize>) {
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build_global();
}

#[derive(Debug, Args)]
pub struct BuildRobotArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Write the JSON dump here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DamageArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Damage scenario tag (e.g. four_legs, half_body, none).
    #[arg(long)]
    pub scenario: DamageScenario,
    /// Write the JSON dump here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Damage the robot first.
    #[arg(long)]
    pub scenario: Option<DamageScenario>,
    /// Controller genome JSON; uniform zero phases when omitted.
    #[arg(long)]
    pub genome: Option<PathBuf>,
    /// Write sampled particle positions as CSV.
    #[arg(long)]
    pub export_csv: Option<PathBuf>,
    /// Write sampled frames as an OBJ sequence into this directory.
    #[arg(long)]
    pub export_obj: Option<PathBuf>,
    /// Sample every Nth step (defaults to the config trajectory stride).
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Independent lineages to run. Command default is 1; the config-file
    /// `seeds` value drives the full grid, not this subcommand.
    #[arg(long, default_value_t = 1)]
    pub seeds: u32,
    /// Generations (defaults to the profile's predamage count).
    #[arg(long)]
    pub generations: Option<u32>,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Results directory of a prior `evolve` run.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub scenario: DamageScenario,
    /// controller_readaptation or shapeshifting.
    #[arg(long)]
    pub option: RecoveryOption,
    /// Which predamage lineage to recover.
    #[arg(long, default_value_t = 0)]
    pub lineage: u32,
    /// Generations (defaults to the profile's postdamage count).
    #[arg(long)]
    pub generations: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Lineages per cell (defaults to the config `seeds`).
    #[arg(long)]
    pub seeds: Option<u32>,
    #[arg(long)]
    pub generations_pre: Option<u32>,
    #[arg(long)]
    pub generations_post: Option<u32>,
    /// Also run the body-size control experiment.
    #[arg(long)]
    pub size_control: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Grid summary CSV to analyze.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Results directory containing grid_summary.csv (and a manifest whose
    /// master seed is reused for the bootstrap unless --seed is given).
    #[arg(long)]
    pub results: Option<PathBuf>,
    /// Bootstrap seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write the report here (defaults next to the summary).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportTrajectoryArgs {
    /// Results directory of a prior `evolve`, `recover`, or `grid` run.
    #[arg(long)]
    pub results: PathBuf,
    /// Replay a predamage champion by lineage.
    #[arg(long)]
    pub predamage: Option<u32>,
    /// Replay a grid cell: scenario...
    #[arg(long)]
    pub scenario: Option<DamageScenario>,
    /// ...recovery option...
    #[arg(long)]
    pub option: Option<RecoveryOption>,
    /// ...and lineage.
    #[arg(long)]
    pub lineage: Option<u32>,
    /// Sample every Nth step (defaults to the config trajectory stride).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Output directory (defaults inside the results directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write the frames as one CSV.
    #[arg(long)]
    pub csv: bool,
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::BuildRobot(args) => cmd_build_robot(args),
        Command::Damage(args) => cmd_damage(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Evolve(args) => cmd_evolve(args),
        Command::Recover(args) => cmd_recover(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Stats(args) => cmd_stats(args),
        Command::ExportTrajectory(args) => cmd_export_trajectory(args),
    }
}

// ---------------------------------------------------------------------------
// Structure dumps

pub const STRUCTURE_FORMAT: &str = "morphovox/structure-v1";

/// JSON form of a (possibly damaged) robot structure.
#[derive(Debug, Serialize, Deserialize)]
pub struct StructureDump {
    pub format: String,
    pub tool_version: String,
    /// The damage that produced this structure, if any.
    pub scenario: Option<DamageScenario>,
    pub lattice_pitch_cm: f64,
    pub voxel_count: usize,
    pub cells: Vec<[i32; 3]>,
}

impl StructureDump {
    pub fn new(scenario: Option<DamageScenario>, structure: &VoxelStructure) -> Self {
        StructureDump {
            format: STRUCTURE_FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            scenario,
            lattice_pitch_cm: structure.lattice_pitch(),
            voxel_count: structure.len(),
            cells: structure.iter().map(|c| [c.x, c.y, c.z]).collect(),
        }
    }
}

fn emit_structure(
    scenario: Option<DamageScenario>,
    structure: &VoxelStructure,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let dump = StructureDump::new(scenario, structure);
    let json = serde_json::to_string_pretty(&dump).map_err(runtime)?;
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(runtime)?;
                }
            }
            std::fs::write(path, json).map_err(runtime)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    // Human-oriented summary on stderr so piped stdout stays parseable.
    eprintln!("{} voxels", structure.len());
    eprint!("{}", structure.ascii_layers());
    Ok(())
}

fn cmd_build_robot(args: BuildRobotArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    let structure = build_quadruped(&config.quadruped).map_err(validation)?;
    emit_structure(None, &structure, args.out.as_deref())
}

fn cmd_damage(args: DamageArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    let intact = build_quadruped(&config.quadruped).map_err(validation)?;
    let damaged = damage_structure(&intact, &config.quadruped, args.scenario).map_err(validation)?;
    eprintln!(
        "scenario {}: removed {} of {} voxels",
        args.scenario,
        intact.len() - damaged.len(),
        intact.len()
    );
    emit_structure(Some(args.scenario), &damaged, args.out.as_deref())
}

// ---------------------------------------------------------------------------
// Single evaluation

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    let config = args.config.resolve()?;
    apply_threads(config.threads);
    let intact = build_quadruped(&config.quadruped).map_err(validation)?;
    let structure = match args.scenario {
        Some(scenario) => {
            damage_structure(&intact, &config.quadruped, scenario).map_err(validation)?
        }
        None => intact,
    };
    let controller = match &args.genome {
        Some(path) => {
            let genome = load_genome(path).map_err(validation)?;
            express_controller(
                &genome,
                &structure,
                config.sim.actuation_amplitude,
                config.sim.actuation_frequency,
            )
            .map_err(validation)?
        }
        None => Controller::uniform(
            &structure,
            0.0,
            config.sim.actuation_amplitude,
            config.sim.actuation_frequency,
        )
        .map_err(validation)?,
    };
    let shape = Shape::nominal(&structure);
    let wants_frames = args.export_csv.is_some() || args.export_obj.is_some();
    let stride = if wants_frames {
        args.stride.unwrap_or(config.trajectory_stride)
    } else {
        0
    };
    let summary =
        simulate_with_frames(&structure, &shape, &controller, &config.sim, stride)
            .map_err(runtime)?;
    export_frames(
        &summary,
        args.export_csv.as_deref(),
        args.export_obj.as_deref(),
        structure.lattice_pitch(),
    )?;
    let printable = TrajectorySummary {
        frames: None,
        ..summary
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&printable).map_err(runtime)?
    );
    Ok(())
}

fn export_frames(
    summary: &TrajectorySummary,
    csv: Option<&Path>,
    obj_dir: Option<&Path>,
    cube_side: f64,
) -> Result<(), AppError> {
    let Some(frames) = &summary.frames else {
        return Ok(());
    };
    if let Some(path) = csv {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(runtime)?;
            }
        }
        write_trajectory_csv(path, frames).map_err(runtime)?;
        println!("wrote {} ({} frames)", path.display(), frames.len());
    }
    if let Some(dir) = obj_dir {
        let n = write_trajectory_obj_sequence(dir, frames, cube_side).map_err(runtime)?;
        println!("wrote {n} OBJ frames to {}", dir.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Predamage optimization

pub const CHAMPIONS_FORMAT: &str = "morphovox/champions-v1";

/// All predamage champions of a run, with their histories.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChampionsDocument {
    pub format: String,
    pub tool_version: String,
    pub champions: Vec<PredamageChampion>,
}

pub fn champions_path(results: &Path) -> PathBuf {
    results.join("predamage").join("champions.json")
}

pub fn save_champions(
    results: &Path,
    champions: &[PredamageChampion],
) -> Result<(), AppError> {
    let doc = ChampionsDocument {
        format: CHAMPIONS_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        champions: champions.to_vec(),
    };
    let path = champions_path(results);
    std::fs::create_dir_all(path.parent().expect("has parent")).map_err(runtime)?;
    std::fs::write(&path, serde_json::to_string(&doc).map_err(runtime)?).map_err(runtime)?;
    Ok(())
}

pub fn load_champions(results: &Path) -> Result<Vec<PredamageChampion>, AppError> {
    let path = champions_path(results);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let doc: ChampionsDocument = serde_json::from_str(&text)
        .map_err(|e| validation(format!("malformed {}: {e}", path.display())))?;
    if doc.format != CHAMPIONS_FORMAT {
        return Err(validation(format!(
            "{}: format `{}` not supported",
            path.display(),
            doc.format
        )));
    }
    Ok(doc.champions)
}

fn write_predamage_outputs(
    results: &Path,
    champions: &[PredamageChampion],
) -> Result<(), AppError> {
    let dir = results.join("predamage");
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    for champion in champions {
        write_generation_log(
            &dir.join(format!("gen_{}.csv", champion.lineage)),
            &champion.history,
        )
        .map_err(runtime)?;
        save_genome(
            &dir.join(format!("champion_{}.json", champion.lineage)),
            &champion.genome,
        )
        .map_err(runtime)?;
    }
    save_champions(results, champions)
}

fn cmd_evolve(args: EvolveArgs) -> Result<(), AppError> {
    let mut config = args.config.resolve()?;
    config.seeds = args.seeds;
    if let Some(g) = args.generations {
        config.generations_pre = g;
    }
    config.validate().map_err(validation)?;
    apply_threads(config.threads);
    config::write_manifest(&config.output_dir, &Manifest::new(config.clone()))
        .map_err(runtime)?;

    let champions = optimize_predamage_controllers(
        &config.quadruped,
        &config.sim,
        config.seeds,
        config.generations_pre,
        config.population,
        config.master_seed,
    )
    .map_err(runtime)?;
    write_predamage_outputs(&config.output_dir, &champions)?;
    println!("lineage,best_cm");
    for c in &champions {
        println!("{},{}", c.lineage, c.displacement);
    }
    println!("results in {}", config.output_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Recovery cells and the grid

fn cell_stem(record: &RecoveryRecord) -> String {
    format!(
        "{}_{}_{}",
        record.scenario.tag(),
        record.option.tag(),
        record.lineage
    )
}

pub const CELL_FORMAT: &str = "morphovox/recovery-cell-v1";

/// One grid cell on disk: the full record, champion genome included.
#[derive(Debug, Serialize, Deserialize)]
pub struct CellDocument {
    pub format: String,
    pub tool_version: String,
    pub record: RecoveryRecord,
}

fn write_cell_outputs(results: &Path, record: &RecoveryRecord) -> Result<(), AppError> {
    let dir = results.join("cells");
    std::fs::create_dir_all(&dir).map_err(runtime)?;
    let stem = cell_stem(record);
    write_generation_log(&dir.join(format!("{stem}.csv")), &record.history)
        .map_err(runtime)?;
    let doc = CellDocument {
        format: CELL_FORMAT.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        record: record.clone(),
    };
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string(&doc).map_err(runtime)?,
    )
    .map_err(runtime)?;
    Ok(())
}

pub fn load_cell(
    results: &Path,
    scenario: DamageScenario,
    option: RecoveryOption,
    lineage: u32,
) -> Result<RecoveryRecord, AppError> {
    let path = results
        .join("cells")
        .join(format!("{}_{}_{}.json", scenario.tag(), option.tag(), lineage));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| validation(format!("cannot read {}: {e}", path.display())))?;
    let doc: CellDocument = serde_json::from_str(&text)
        .map_err(|e| validation(format!("malformed {}: {e}", path.display())))?;
    if doc.format != CELL_FORMAT {
        return Err(validation(format!(
            "{}: format `{}` not supported",
            path.display(),
            doc.format
        )));
    }
    Ok(doc.record)
}

fn load_results_manifest(results: &Path) -> Result<Manifest, AppError> {
    config::load_manifest(&results.join(MANIFEST_FILE)).map_err(validation)
}

fn cmd_recover(args: RecoverArgs) -> Result<(), AppError> {
    let manifest = load_results_manifest(&args.results)?;
    let config = manifest.config;
    apply_threads(config.threads);
    let champions = load_champions(&args.results)?;
    let champion = champions
        .iter()
        .find(|c| c.lineage == args.lineage)
        .ok_or_else(|| {
            validation(format!(
                "no predamage champion for lineage {} in {}",
                args.lineage,
                args.results.display()
            ))
        })?;
    let generations = args.generations.unwrap_or(config.generations_post);
    let outcome = run_recovery_grid(
        std::slice::from_ref(champion),
        &config.quadruped,
        &config.sim,
        &[args.scenario],
        &[args.option],
        generations,
        config.population,
        config.master_seed,
    )
    .map_err(runtime)?;
    if let Some(failure) = outcome.failures.first() {
        return Err(runtime(format!(
            "cell {} {} lineage {} failed: {}",
            failure.scenario, failure.option, failure.lineage, failure.message
        )));
    }
    let record = &outcome.records[0];
    write_cell_outputs(&args.results, record)?;
    println!(
        "scenario {} option {} lineage {}: predamage {:.3} cm, baseline {:.3} cm, \
         best postdamage {:.3} cm, relative {:.3}",
        record.scenario,
        record.option,
        record.lineage,
        record.predamage_cm,
        record.baseline_cm,
        record.best_postdamage_cm,
        record.relative_performance
    );
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<(), AppError> {
    let mut config = args.config.resolve()?;
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    if let Some(g) = args.generations_pre {
        config.generations_pre = g;
    }
    if let Some(g) = args.generations_post {
        config.generations_post = g;
    }
    config.validate().map_err(validation)?;
    apply_threads(config.threads);
    config::write_manifest(&config.output_dir, &Manifest::new(config.clone()))
        .map_err(runtime)?;

    println!(
        "optimizing {} predamage lineages ({} generations)...",
        config.seeds, config.generations_pre
    );
    let champions = optimize_predamage_controllers(
        &config.quadruped,
        &config.sim,
        config.seeds,
        config.generations_pre,
        config.population,
        config.master_seed,
    )
    .map_err(runtime)?;
    write_predamage_outputs(&config.output_dir, &champions)?;
    for c in &champions {
        println!("  lineage {}: {:.3} cm", c.lineage, c.displacement);
    }

    println!(
        "running {} x {} x {} recovery grid ({} generations)...",
        config.scenarios.len(),
        config.options.len(),
        champions.len(),
        config.generations_post
    );
    let outcome = run_recovery_grid(
        &champions,
        &config.quadruped,
        &config.sim,
        &config.scenarios,
        &config.options,
        config.generations_post,
        config.population,
        config.master_seed,
    )
    .map_err(runtime)?;
    for record in &outcome.records {
        write_cell_outputs(&config.output_dir, record)?;
    }
    write_grid_summary(&config.output_dir.join("grid_summary.csv"), &outcome.records)
        .map_err(runtime)?;
    for failure in &outcome.failures {
        eprintln!(
            "cell {} {} lineage {} failed: {}",
            failure.scenario, failure.option, failure.lineage, failure.message
        );
    }

    if outcome.failures.is_empty() {
        let stats = crate::experiments::grid_statistics(&outcome.records, config.master_seed)
            .map_err(runtime)?;
        write_stats_report(&config.output_dir.join("stats_report.csv"), &stats)
            .map_err(runtime)?;
        print_stats(&stats);
    }

    if args.size_control {
        println!("running body-size control...");
        let report = size_control_experiment(
            &champions,
            &outcome.records,
            &config.quadruped,
            &config.sim,
            config.generations_pre,
            config.population,
            config.master_seed,
        )
        .map_err(runtime)?;
        write_size_control_report(&config.output_dir.join("size_control.json"), &report)
            .map_err(runtime)?;
    }

    println!(
        "{} records, {} failures; results in {}",
        outcome.records.len(),
        outcome.failures.len(),
        config.output_dir.display()
    );
    if !outcome.failures.is_empty() {
        return Err(runtime(format!(
            "{} grid cells failed (see log above); statistics skipped",
            outcome.failures.len()
        )));
    }
    Ok(())
}

fn print_stats(stats: &[crate::experiments::ScenarioStats]) {
    println!(
        "scenario: U, p_raw, p_bonferroni, readaptation CI, shapeshifting CI"
    );
    for s in stats {
        println!(
            "{}: U={:.1} p={:.4} p_adj={:.4} re=[{:.3},{:.3}] sh=[{:.3},{:.3}]",
            s.scenario,
            s.u_statistic,
            s.p_raw,
            s.p_bonferroni,
            s.readaptation_ci_low,
            s.readaptation_ci_high,
            s.shapeshifting_ci_low,
            s.shapeshifting_ci_high
        );
    }
}

// ---------------------------------------------------------------------------
// Statistics from a summary CSV

fn cmd_stats(args: StatsArgs) -> Result<(), AppError> {
    let summary_path = match (&args.summary, &args.results) {
        (Some(path), _) => path.clone(),
        (None, Some(results)) => results.join("grid_summary.csv"),
        (None, None) => {
            return Err(validation("provide --summary or --results"));
        }
    };
    let rows = read_grid_summary(&summary_path).map_err(validation)?;
    if rows.is_empty() {
        return Err(validation(format!(
            "no records in {}",
            summary_path.display()
        )));
    }
    let seed = match (args.seed, &args.results) {
        (Some(seed), _) => seed,
        (None, Some(results)) => load_results_manifest(results)?.config.master_seed,
        (None, None) => 0,
    };
    let cells: Vec<CellRelative> = rows
        .iter()
        .map(|r| CellRelative {
            scenario: r.scenario,
            option: r.option,
            relative_performance: r.relative_performance,
        })
        .collect();
    let stats = grid_statistics_cells(&cells, seed).map_err(validation)?;
    let out = args.out.unwrap_or_else(|| {
        summary_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
            .join("stats_report.csv")
    });
    write_stats_report(&out, &stats).map_err(runtime)?;
    print_stats(&stats);
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Trajectory export

fn cmd_export_trajectory(args: ExportTrajectoryArgs) -> Result<(), AppError> {
    let manifest = load_results_manifest(&args.results)?;
    let config = manifest.config;
    apply_threads(config.threads);
    let stride = args.stride.unwrap_or(config.trajectory_stride).max(1);
    let intact = build_quadruped(&config.quadruped).map_err(validation)?;

    let (name, structure, shape, controller) = match (
        args.predamage,
        args.scenario,
        args.option,
        args.lineage,
    ) {
        (Some(lineage), None, None, None) => {
            let champions = load_champions(&args.results)?;
            let champion = champions
                .iter()
                .find(|c| c.lineage == lineage)
                .ok_or_else(|| {
                    validation(format!("no predamage champion for lineage {lineage}"))
                })?;
            let controller = express_controller(
                &champion.genome,
                &intact,
                config.sim.actuation_amplitude,
                config.sim.actuation_frequency,
            )
            .map_err(validation)?;
            let shape = Shape::nominal(&intact);
            (format!("predamage_{lineage}"), intact, shape, controller)
        }
        (None, Some(scenario), Some(option), Some(lineage)) => {
            let record = load_cell(&args.results, scenario, option, lineage)?;
            let damaged =
                damage_structure(&intact, &config.quadruped, scenario).map_err(validation)?;
            let (shape, controller) = match option {
                RecoveryOption::ControllerReadaptation => {
                    let controller = express_controller(
                        &record.champion,
                        &damaged,
                        config.sim.actuation_amplitude,
                        config.sim.actuation_frequency,
                    )
                    .map_err(validation)?;
                    (Shape::nominal(&damaged), controller)
                }
                RecoveryOption::Shapeshifting => {
                    let shape =
                        express_shape(&record.champion, &damaged).map_err(validation)?;
                    let champions = load_champions(&args.results)?;
                    let predamage = champions
                        .iter()
                        .find(|c| c.lineage == lineage)
                        .ok_or_else(|| {
                            validation(format!(
                                "no predamage champion for lineage {lineage}"
                            ))
                        })?;
                    let controller = express_controller(
                        &predamage.genome,
                        &intact,
                        config.sim.actuation_amplitude,
                        config.sim.actuation_frequency,
                    )
                    .map_err(validation)?
                    .restricted_to(&damaged)
                    .map_err(|c| validation(format!("controller lost voxel {c}")))?;
                    (shape, controller)
                }
            };
            let name = format!("{}_{}_{}", scenario.tag(), option.tag(), lineage);
            (name, damaged, shape, controller)
        }
        _ => {
            return Err(validation(
                "provide either --predamage <lineage>, or --scenario, --option and --lineage",
            ));
        }
    };

    let summary =
        simulate_with_frames(&structure, &shape, &controller, &config.sim, stride)
            .map_err(runtime)?;
    let frames = frames_or_error(summary.frames.as_deref()).map_err(runtime)?;
    let out_dir = args
        .out_dir
        .unwrap_or_else(|| args.results.join("trajectories").join(&name));
    let n = write_trajectory_obj_sequence(&out_dir, frames, structure.lattice_pitch())
        .map_err(runtime)?;
    println!("wrote {n} OBJ frames to {}", out_dir.display());
    if args.csv {
        let csv_path = out_dir.join("frames.csv");
        write_trajectory_csv(&csv_path, frames).map_err(runtime)?;
        println!("wrote {}", csv_path.display());
    }
    println!(
        "net displacement {:.3} cm over {} steps",
        summary.net_displacement, summary.steps
    );
    Ok(())
}

// ---------------------------------------------------------------------------

/// History rows → stdout-friendly one-liner used by a few subcommands.
pub fn final_best(history: &[GenerationStats]) -> Option<f64> {
    history.last().map(|s| s.best_fitness_cm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_the_documented_subcommands() {
        Cli::try_parse_from(["morphovox", "build-robot", "--profile", "paper"]).unwrap();
        Cli::try_parse_from(["morphovox", "damage", "--scenario", "four_legs"]).unwrap();
        Cli::try_parse_from(["morphovox", "evolve", "--profile", "desk", "--seed", "7"])
            .unwrap();
        Cli::try_parse_from([
            "morphovox",
            "recover",
            "--results",
            "r",
            "--scenario",
            "one_leg",
            "--option",
            "shapeshifting",
        ])
        .unwrap();
        Cli::try_parse_from(["morphovox", "grid", "--size-control"]).unwrap();
        Cli::try_parse_from(["morphovox", "stats", "--summary", "s.csv"]).unwrap();
        Cli::try_parse_from([
            "morphovox",
            "export-trajectory",
            "--results",
            "r",
            "--predamage",
            "0",
        ])
        .unwrap();
        Cli::try_parse_from(["morphovox", "simulate", "--dt", "0.000151"]).unwrap();
    }

    #[test]
    fn bad_scenario_tag_fails_at_parse_time() {
        assert!(
            Cli::try_parse_from(["morphovox", "damage", "--scenario", "five_legs"]).is_err()
        );
        assert!(Cli::try_parse_from([
            "morphovox",
            "recover",
            "--results",
            "r",
            "--scenario",
            "one_leg",
            "--option",
            "teleport",
        ])
        .is_err());
    }

    #[test]
    fn flag_overrides_reach_the_config() {
        let cli = Cli::try_parse_from([
            "morphovox",
            "evolve",
            "--profile",
            "desk",
            "--seed",
            "7",
            "--dt",
            "0.00025",
        ])
        .unwrap();
        let Command::Evolve(args) = cli.command else {
            panic!("expected evolve");
        };
        let config = args.config.resolve().unwrap();
        assert_eq!(config.master_seed, 7);
        assert!((config.sim.dt - 0.00025).abs() < 1e-15);
        assert_eq!(args.seeds, 1);
    }

    #[test]
    fn exit_codes_by_error_class() {
        assert_eq!(AppError::Validation("x".into()).exit_code(), 1);
        assert_eq!(AppError::Runtime("x".into()).exit_code(), 2);
    }

    #[test]
    fn structure_dump_counts_match() {
        let config = RunConfig::desk_profile();
        let structure = build_quadruped(&config.quadruped).unwrap();
        let dump = StructureDump::new(None, &structure);
        assert_eq!(dump.voxel_count, dump.cells.len());
        assert_eq!(dump.voxel_count, structure.len());
    }
}
