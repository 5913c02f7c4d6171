//! The damage-recovery experiment protocol.
//!
//! Phase one optimizes walking controllers for the intact quadruped, one
//! independent lineage per seed. Phase two damages the robot and lets each
//! lineage recover under one of two regimes: controller readaptation
//! re-optimizes the phase offsets on the fixed (nominal) damaged shape,
//! while shapeshifting keeps the original controller frozen and optimizes
//! the resting shape instead. Recovered performance is always measured
//! relative to the same lineage's predamage displacement. A body-size
//! control run checks that isometric enlargement by itself does not change
//! the oscillation amplitude or, materially, the achievable speed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::afpo::{self, AfpoConfig, EvalError, FitnessEvaluator, GenerationStats};
use crate::genome::{
    express_controller, express_shape, Controller, CppnGenome, GenomeRole, Shape,
};
use crate::morphology::{
    build_quadruped, damage_structure, DamageScenario, MorphologyError, QuadrupedSpec,
    VoxelStructure,
};
use crate::physics::{simulate, SimParams};
use crate::stats::{bonferroni, bootstrap_mean_ci, rank_sum_test, StatsError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("morphology: {0}")]
    Morphology(#[from] MorphologyError),
    #[error("optimization: {0}")]
    Afpo(#[from] afpo::AfpoError),
    #[error("statistics: {0}")]
    Stats(#[from] StatsError),
    #[error("evaluation setup: {0}")]
    Setup(String),
    #[error("no records for scenario {0}")]
    MissingScenario(DamageScenario),
    #[error("scenario {scenario} has no {option} records")]
    MissingOption {
        scenario: DamageScenario,
        option: RecoveryOption,
    },
    #[error("`{0}` is not a recovery option (expected controller_readaptation or shapeshifting)")]
    BadOptionTag(String),
    #[error("input {0} must be non-empty")]
    EmptyInput(&'static str),
}

/// Which parameter a recovery run is allowed to change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecoveryOption {
    /// Re-optimize phase offsets; resting shape stays nominal.
    #[serde(rename = "controller_readaptation")]
    ControllerReadaptation,
    /// Re-optimize resting shape; the predamage controller stays frozen.
    #[serde(rename = "shapeshifting")]
    Shapeshifting,
}

impl RecoveryOption {
    pub const ALL: [RecoveryOption; 2] = [
        RecoveryOption::ControllerReadaptation,
        RecoveryOption::Shapeshifting,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            RecoveryOption::ControllerReadaptation => "controller_readaptation",
            RecoveryOption::Shapeshifting => "shapeshifting",
        }
    }
}

impl fmt::Display for RecoveryOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for RecoveryOption {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RecoveryOption::ALL
            .into_iter()
            .find(|o| o.tag() == s)
            .ok_or_else(|| ExperimentError::BadOptionTag(s.to_string()))
    }
}

/// Derive a child seed from a master seed and a path of string parts, by
/// hashing. Cells of the experiment grid get independent, reproducible
/// streams this way, no matter in what order they run.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        hasher.update([0u8]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// Scores genomes by simulated net displacement. One evaluator is built per
/// optimization run; the half of the system not being optimized is frozen
/// in here, which is what guarantees recovery-option purity.
pub struct LocomotionEvaluator {
    structure: VoxelStructure,
    mode: EvalMode,
    params: SimParams,
}

enum EvalMode {
    /// Optimize phase offsets against this fixed resting shape.
    EvolveController { shape: Shape },
    /// Optimize the resting shape under this fixed controller.
    EvolveShape { controller: Controller },
}

impl LocomotionEvaluator {
    pub fn for_controllers(
        structure: VoxelStructure,
        shape: Shape,
        params: SimParams,
    ) -> Result<Self, ExperimentError> {
        shape
            .restricted_to(&structure)
            .map_err(|c| ExperimentError::Setup(format!("shape is missing voxel {c}")))?;
        if shape.len() != structure.len() {
            return Err(ExperimentError::Setup(
                "shape covers voxels outside the structure".into(),
            ));
        }
        Ok(LocomotionEvaluator {
            structure,
            mode: EvalMode::EvolveController { shape },
            params,
        })
    }

    pub fn for_shapes(
        structure: VoxelStructure,
        controller: Controller,
        params: SimParams,
    ) -> Result<Self, ExperimentError> {
        controller
            .restricted_to(&structure)
            .map_err(|c| ExperimentError::Setup(format!("controller is missing voxel {c}")))?;
        if controller.len() != structure.len() {
            return Err(ExperimentError::Setup(
                "controller covers voxels outside the structure".into(),
            ));
        }
        Ok(LocomotionEvaluator {
            structure,
            mode: EvalMode::EvolveShape { controller },
            params,
        })
    }

    pub fn genome_role(&self) -> GenomeRole {
        match self.mode {
            EvalMode::EvolveController { .. } => GenomeRole::Controller,
            EvalMode::EvolveShape { .. } => GenomeRole::Shape,
        }
    }

    /// The frozen controller, when shapes are being optimized.
    pub fn frozen_controller(&self) -> Option<&Controller> {
        match &self.mode {
            EvalMode::EvolveShape { controller } => Some(controller),
            EvalMode::EvolveController { .. } => None,
        }
    }

    /// The frozen shape, when controllers are being optimized.
    pub fn frozen_shape(&self) -> Option<&Shape> {
        match &self.mode {
            EvalMode::EvolveController { shape } => Some(shape),
            EvalMode::EvolveShape { .. } => None,
        }
    }

    /// Score one genome: express the mutable half, simulate, return net
    /// displacement in cm.
    pub fn displacement(&self, genome: &CppnGenome) -> Result<f64, EvalError> {
        let summary = match &self.mode {
            EvalMode::EvolveController { shape } => {
                let controller = express_controller(
                    genome,
                    &self.structure,
                    self.params.actuation_amplitude,
                    self.params.actuation_frequency,
                )?;
                simulate(&self.structure, shape, &controller, &self.params)?
            }
            EvalMode::EvolveShape { controller } => {
                let shape = express_shape(genome, &self.structure)?;
                simulate(&self.structure, &shape, controller, &self.params)?
            }
        };
        Ok(summary.net_displacement)
    }
}

impl FitnessEvaluator for LocomotionEvaluator {
    fn fitness(&self, genome: &CppnGenome) -> Result<f64, EvalError> {
        self.displacement(genome)
    }
}

/// The best walking controller one independent optimization lineage found.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredamageChampion {
    pub lineage: u32,
    pub genome: CppnGenome,
    /// Net displacement of the champion on the intact robot, cm.
    pub displacement: f64,
    pub history: Vec<GenerationStats>,
}

/// Optimize `n_seeds` independent walking controllers on the intact
/// quadruped at nominal shape (every rest length 1 cm).
pub fn optimize_predamage_controllers(
    quad: &QuadrupedSpec,
    params: &SimParams,
    n_seeds: u32,
    generations: u32,
    capacity: usize,
    master_seed: u64,
) -> Result<Vec<PredamageChampion>, ExperimentError> {
    if n_seeds == 0 {
        return Err(ExperimentError::EmptyInput("n_seeds"));
    }
    let structure = build_quadruped(quad)?;
    let mut champions = Vec::with_capacity(n_seeds as usize);
    for lineage in 0..n_seeds {
        let evaluator = LocomotionEvaluator::for_controllers(
            structure.clone(),
            Shape::nominal(&structure),
            params.clone(),
        )?;
        let config = AfpoConfig {
            generations,
            capacity,
            seed: derive_seed(master_seed, &["predamage", &lineage.to_string()]),
        };
        let outcome = afpo::run(GenomeRole::Controller, &config, &evaluator)?;
        champions.push(PredamageChampion {
            lineage,
            genome: outcome.best_genome,
            displacement: outcome.best_fitness,
            history: outcome.history,
        });
    }
    Ok(champions)
}

/// One cell of the damage × option × lineage grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryRecord {
    pub scenario: DamageScenario,
    pub option: RecoveryOption,
    pub lineage: u32,
    /// The lineage's intact-robot displacement (the denominator), cm.
    pub predamage_cm: f64,
    /// Displacement of the damaged robot with nominal shape and the frozen
    /// predamage controller, before any re-optimization, cm.
    pub baseline_cm: f64,
    /// Per-generation best displacement of the recovery run, cm.
    pub history: Vec<GenerationStats>,
    pub best_postdamage_cm: f64,
    /// best_postdamage_cm / predamage_cm.
    pub relative_performance: f64,
    /// Champion genome of the recovery run.
    pub champion: CppnGenome,
}

impl RecoveryRecord {
    /// Per-generation best displacement divided by the predamage
    /// displacement.
    pub fn relative_history(&self) -> Vec<f64> {
        self.history
            .iter()
            .map(|s| s.best_fitness_cm / self.predamage_cm)
            .collect()
    }
}

/// A grid cell that could not run; the grid carries on without it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub scenario: DamageScenario,
    pub option: RecoveryOption,
    pub lineage: u32,
    pub message: String,
}

/// Everything the grid produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub records: Vec<RecoveryRecord>,
    pub failures: Vec<CellFailure>,
}

/// Run the full damage × recovery-option × lineage grid.
///
/// Every cell starts from a fresh random population of the parameter being
/// optimized; nothing is seeded from the predamage genomes. Each cell's RNG
/// derives from (master seed, scenario, option, lineage), so cells are
/// reproducible independently of execution order.
pub fn run_recovery_grid(
    champions: &[PredamageChampion],
    quad: &QuadrupedSpec,
    params: &SimParams,
    scenarios: &[DamageScenario],
    options: &[RecoveryOption],
    generations_post: u32,
    capacity: usize,
    master_seed: u64,
) -> Result<GridOutcome, ExperimentError> {
    if champions.is_empty() {
        return Err(ExperimentError::EmptyInput("champions"));
    }
    if scenarios.is_empty() {
        return Err(ExperimentError::EmptyInput("scenarios"));
    }
    if options.is_empty() {
        return Err(ExperimentError::EmptyInput("options"));
    }
    let intact = build_quadruped(quad)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &scenario in scenarios {
        let damaged = damage_structure(&intact, quad, scenario)?;
        for &option in options {
            for champion in champions {
                match run_recovery_cell(
                    champion,
                    &intact,
                    &damaged,
                    params,
                    scenario,
                    option,
                    generations_post,
                    capacity,
                    master_seed,
                ) {
                    Ok(record) => records.push(record),
                    Err(e) => failures.push(CellFailure {
                        scenario,
                        option,
                        lineage: champion.lineage,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }
    Ok(GridOutcome { records, failures })
}

fn run_recovery_cell(
    champion: &PredamageChampion,
    intact: &VoxelStructure,
    damaged: &VoxelStructure,
    params: &SimParams,
    scenario: DamageScenario,
    option: RecoveryOption,
    generations_post: u32,
    capacity: usize,
    master_seed: u64,
) -> Result<RecoveryRecord, ExperimentError> {
    if champion.displacement <= 0.0 {
        return Err(ExperimentError::Setup(format!(
            "lineage {} has non-positive predamage displacement {}",
            champion.lineage, champion.displacement
        )));
    }
    // The surviving voxels keep the phase offsets the champion gave them.
    let full_controller = express_controller(
        &champion.genome,
        intact,
        params.actuation_amplitude,
        params.actuation_frequency,
    )
    .map_err(|e| ExperimentError::Setup(e.to_string()))?;
    let inherited_controller = full_controller
        .restricted_to(damaged)
        .map_err(|c| ExperimentError::Setup(format!("controller lost voxel {c}")))?;

    // How the damaged robot walks before any recovery: nominal shape, the
    // controller it already had.
    let baseline_cm = simulate(
        damaged,
        &Shape::nominal(damaged),
        &inherited_controller,
        params,
    )
    .map(|s| s.net_displacement)
    .unwrap_or(0.0);

    let evaluator = match option {
        RecoveryOption::ControllerReadaptation => LocomotionEvaluator::for_controllers(
            damaged.clone(),
            Shape::nominal(damaged),
            params.clone(),
        )?,
        RecoveryOption::Shapeshifting => LocomotionEvaluator::for_shapes(
            damaged.clone(),
            inherited_controller,
            params.clone(),
        )?,
    };
    let config = AfpoConfig {
        generations: generations_post,
        capacity,
        seed: derive_seed(
            master_seed,
            &[
                "cell",
                scenario.tag(),
                option.tag(),
                &champion.lineage.to_string(),
            ],
        ),
    };
    let outcome = afpo::run(evaluator.genome_role(), &config, &evaluator)?;
    Ok(RecoveryRecord {
        scenario,
        option,
        lineage: champion.lineage,
        predamage_cm: champion.displacement,
        baseline_cm,
        history: outcome.history,
        best_postdamage_cm: outcome.best_fitness,
        relative_performance: outcome.best_fitness / champion.displacement,
        champion: outcome.best_genome,
    })
}

/// Per-scenario comparison of the two recovery options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub scenario: DamageScenario,
    /// Mann–Whitney U of the readaptation sample against the shapeshifting
    /// sample (relative performances).
    pub u_statistic: f64,
    pub p_raw: f64,
    pub p_bonferroni: f64,
    pub readaptation_ci_low: f64,
    pub readaptation_ci_high: f64,
    pub shapeshifting_ci_low: f64,
    pub shapeshifting_ci_high: f64,
}

pub const BOOTSTRAP_CONFIDENCE: f64 = 0.99;
pub const BOOTSTRAP_RESAMPLES: usize = 5000;

/// The slice of a grid cell the statistics need. A summary CSV read back
/// from disk provides exactly this, so `stats` can run long after the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRelative {
    pub scenario: DamageScenario,
    pub option: RecoveryOption,
    pub relative_performance: f64,
}

/// Compare the options within each scenario present in `records`:
/// rank-sum test on relative performances, Bonferroni-corrected over the
/// number of scenarios, and a 99% bootstrap CI of each option's mean.
pub fn grid_statistics(
    records: &[RecoveryRecord],
    master_seed: u64,
) -> Result<Vec<ScenarioStats>, ExperimentError> {
    let cells: Vec<CellRelative> = records
        .iter()
        .map(|r| CellRelative {
            scenario: r.scenario,
            option: r.option,
            relative_performance: r.relative_performance,
        })
        .collect();
    grid_statistics_cells(&cells, master_seed)
}

/// As [`grid_statistics`], from bare (scenario, option, relative) cells.
pub fn grid_statistics_cells(
    records: &[CellRelative],
    master_seed: u64,
) -> Result<Vec<ScenarioStats>, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::EmptyInput("records"));
    }
    let mut scenarios: Vec<DamageScenario> = Vec::new();
    for r in records {
        if !scenarios.contains(&r.scenario) {
            scenarios.push(r.scenario);
        }
    }
    let comparisons = scenarios.len();
    let mut out = Vec::with_capacity(scenarios.len());
    for scenario in scenarios {
        let sample = |option: RecoveryOption| -> Vec<f64> {
            records
                .iter()
                .filter(|r| r.scenario == scenario && r.option == option)
                .map(|r| r.relative_performance)
                .collect()
        };
        let readaptation = sample(RecoveryOption::ControllerReadaptation);
        let shapeshifting = sample(RecoveryOption::Shapeshifting);
        for (option, s) in [
            (RecoveryOption::ControllerReadaptation, &readaptation),
            (RecoveryOption::Shapeshifting, &shapeshifting),
        ] {
            if s.is_empty() {
                return Err(ExperimentError::MissingOption { scenario, option });
            }
        }
        let test = rank_sum_test(&readaptation, &shapeshifting)?;
        let ci = |samples: &[f64], tag: &str| {
            bootstrap_mean_ci(
                samples,
                BOOTSTRAP_CONFIDENCE,
                BOOTSTRAP_RESAMPLES,
                derive_seed(master_seed, &["bootstrap", scenario.tag(), tag]),
            )
        };
        let (r_low, r_high) = ci(&readaptation, "controller_readaptation")?;
        let (s_low, s_high) = ci(&shapeshifting, "shapeshifting")?;
        out.push(ScenarioStats {
            scenario,
            u_statistic: test.u,
            p_raw: test.p_value,
            p_bonferroni: bonferroni(test.p_value, comparisons)?,
            readaptation_ci_low: r_low,
            readaptation_ci_high: r_high,
            shapeshifting_ci_low: s_low,
            shapeshifting_ci_high: s_high,
        });
    }
    Ok(out)
}

/// The body-size control: distributions for the original robot, the
/// isometrically enlarged robot, and the four-leg shapeshifting recovery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeControlReport {
    /// Best displacement per lineage, original robot, cm.
    pub original_cm: Vec<f64>,
    /// Best displacement per lineage, ×2 isometrically enlarged robot, cm.
    pub enlarged_cm: Vec<f64>,
    /// Best displacement per lineage, four-leg shapeshifting recovery, cm.
    pub four_legs_shapeshifting_cm: Vec<f64>,
    /// Shared beam oscillation amplitude, cm — identical for original and
    /// enlarged robots because oscillations add on top of the root shape.
    pub oscillation_amplitude_cm: f64,
    pub original_volume: f64,
    pub enlarged_volume: f64,
}

/// Optimize fresh controllers for the ×2 enlarged quadruped and assemble
/// the three-way comparison. The predamage champions and the grid records
/// provide the other two distributions.
pub fn size_control_experiment(
    champions: &[PredamageChampion],
    grid: &[RecoveryRecord],
    quad: &QuadrupedSpec,
    params: &SimParams,
    generations: u32,
    capacity: usize,
    master_seed: u64,
) -> Result<SizeControlReport, ExperimentError> {
    if champions.is_empty() {
        return Err(ExperimentError::EmptyInput("champions"));
    }
    let structure = build_quadruped(quad)?;
    let nominal = Shape::nominal(&structure);
    let enlarged = nominal
        .scaled(2.0)
        .map_err(|b| ExperimentError::Setup(format!("scaled rest length {b} out of range")))?;
    let original_volume = nominal.total_volume();
    let enlarged_volume = enlarged.total_volume();

    let mut enlarged_cm = Vec::with_capacity(champions.len());
    for champion in champions {
        let evaluator = LocomotionEvaluator::for_controllers(
            structure.clone(),
            enlarged.clone(),
            params.clone(),
        )?;
        let config = AfpoConfig {
            generations,
            capacity,
            seed: derive_seed(
                master_seed,
                &["size_control", &champion.lineage.to_string()],
            ),
        };
        let outcome = afpo::run(GenomeRole::Controller, &config, &evaluator)?;
        enlarged_cm.push(outcome.best_fitness);
    }

    let four_legs_shapeshifting_cm = grid
        .iter()
        .filter(|r| {
            r.scenario == DamageScenario::FourLegs
                && r.option == RecoveryOption::Shapeshifting
        })
        .map(|r| r.best_postdamage_cm)
        .collect();

    Ok(SizeControlReport {
        original_cm: champions.iter().map(|c| c.displacement).collect(),
        enlarged_cm,
        four_legs_shapeshifting_cm,
        oscillation_amplitude_cm: params.actuation_amplitude,
        original_volume,
        enlarged_volume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::GenomeDocument;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Tiny parameters for unit tests: one actuation cycle on the reduced
    /// body, coarse but stable time step.
    fn tiny_params() -> SimParams {
        SimParams {
            eval_duration: 0.2,
            settle_duration: 0.1,
            ..SimParams::desk()
        }
    }

    #[test]
    fn derive_seed_is_deterministic_and_spreads() {
        let a = derive_seed(7, &["cell", "four_legs", "shapeshifting", "0"]);
        let b = derive_seed(7, &["cell", "four_legs", "shapeshifting", "0"]);
        assert_eq!(a, b);
        let c = derive_seed(7, &["cell", "four_legs", "shapeshifting", "1"]);
        let d = derive_seed(7, &["cell", "four_legs", "controller_readaptation", "0"]);
        let e = derive_seed(8, &["cell", "four_legs", "shapeshifting", "0"]);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
        // Path structure matters, not just concatenation.
        assert_ne!(
            derive_seed(7, &["ab", "c"]),
            derive_seed(7, &["a", "bc"])
        );
    }

    #[test]
    fn option_tags_round_trip() {
        for option in RecoveryOption::ALL {
            assert_eq!(option.tag().parse::<RecoveryOption>().unwrap(), option);
        }
        assert!("warp_drive".parse::<RecoveryOption>().is_err());
    }

    #[test]
    fn evaluator_scores_random_genomes_and_rejects_mismatched_setup() {
        let quad = QuadrupedSpec::reduced();
        let structure = build_quadruped(&quad).unwrap();
        let params = tiny_params();
        let evaluator = LocomotionEvaluator::for_controllers(
            structure.clone(),
            Shape::nominal(&structure),
            params.clone(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let genome = CppnGenome::random(GenomeRole::Controller, &mut rng);
        let d = evaluator.displacement(&genome).unwrap();
        assert!(d.is_finite() && d >= 0.0);
        // Wrong-role genome is an evaluation error, not a crash.
        let shape_genome = CppnGenome::random(GenomeRole::Shape, &mut rng);
        assert!(evaluator.displacement(&shape_genome).is_err());

        // A shape that does not cover the structure is rejected up front.
        let cut: std::collections::BTreeSet<_> = structure.iter().take(1).collect();
        let smaller = structure.without(&cut).unwrap();
        let partial = Shape::nominal(&smaller);
        assert!(
            LocomotionEvaluator::for_controllers(structure, partial, params).is_err()
        );
    }

    #[test]
    fn predamage_optimization_yields_nonnegative_champions() {
        let quad = QuadrupedSpec::reduced();
        let champions =
            optimize_predamage_controllers(&quad, &tiny_params(), 1, 0, 4, 11).unwrap();
        assert_eq!(champions.len(), 1);
        let champion = &champions[0];
        assert_eq!(champion.lineage, 0);
        assert_eq!(champion.history.len(), 1);
        assert!(champion.displacement >= 0.0);
        // The champion genome really is a controller genome.
        let doc = GenomeDocument::new(champion.genome.clone());
        assert_eq!(doc.genome.role, GenomeRole::Controller);
    }

    #[test]
    fn recovery_cell_freezes_the_untouched_parameter() {
        let quad = QuadrupedSpec::reduced();
        let structure = build_quadruped(&quad).unwrap();
        let params = tiny_params();
        let champions =
            optimize_predamage_controllers(&quad, &params, 1, 0, 3, 19).unwrap();
        let grid = run_recovery_grid(
            &champions,
            &quad,
            &params,
            &[DamageScenario::OneLeg],
            &RecoveryOption::ALL,
            1,
            3,
            19,
        )
        .unwrap();
        assert!(grid.failures.is_empty(), "{:?}", grid.failures);
        assert_eq!(grid.records.len(), 2);
        for record in &grid.records {
            assert_eq!(record.history.len(), 2);
            assert!(record.relative_performance >= 0.0);
            assert!(record.best_postdamage_cm >= 0.0);
            match record.option {
                // Readaptation champions are controller genomes.
                RecoveryOption::ControllerReadaptation => {
                    assert_eq!(record.champion.role, GenomeRole::Controller)
                }
                // Shapeshifting champions are shape genomes.
                RecoveryOption::Shapeshifting => {
                    assert_eq!(record.champion.role, GenomeRole::Shape)
                }
            }
        }
        // The frozen controller of a shapeshifting evaluator is exactly the
        // champion's expression restricted to the damaged structure.
        let damaged = damage_structure(&structure, &quad, DamageScenario::OneLeg).unwrap();
        let full = express_controller(
            &champions[0].genome,
            &structure,
            params.actuation_amplitude,
            params.actuation_frequency,
        )
        .unwrap();
        let restricted = full.restricted_to(&damaged).unwrap();
        let evaluator =
            LocomotionEvaluator::for_shapes(damaged, restricted.clone(), params).unwrap();
        assert_eq!(evaluator.frozen_controller().unwrap(), &restricted);
    }

    #[test]
    fn intact_scenario_baseline_equals_predamage_exactly() {
        let quad = QuadrupedSpec::reduced();
        let params = tiny_params();
        let champions =
            optimize_predamage_controllers(&quad, &params, 1, 0, 3, 23).unwrap();
        let grid = run_recovery_grid(
            &champions,
            &quad,
            &params,
            &[DamageScenario::Intact],
            &[RecoveryOption::Shapeshifting],
            0,
            3,
            23,
        )
        .unwrap();
        assert_eq!(grid.records.len(), 1);
        let record = &grid.records[0];
        // Identical deterministic runs: the undamaged baseline IS the
        // predamage displacement, bit for bit.
        assert_eq!(record.baseline_cm, record.predamage_cm);
    }

    #[test]
    fn grid_statistics_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let genome = CppnGenome::random(GenomeRole::Controller, &mut rng);
        let record = |scenario, option, lineage, relative: f64| RecoveryRecord {
            scenario,
            option,
            lineage,
            predamage_cm: 10.0,
            baseline_cm: 1.0,
            history: vec![],
            best_postdamage_cm: relative * 10.0,
            relative_performance: relative,
            champion: genome.clone(),
        };
        let mut records = Vec::new();
        for (lineage, &r) in [0.2, 0.3, 0.25].iter().enumerate() {
            records.push(record(
                DamageScenario::FourLegs,
                RecoveryOption::ControllerReadaptation,
                lineage as u32,
                r,
            ));
        }
        for (lineage, &r) in [0.6, 0.7, 0.65].iter().enumerate() {
            records.push(record(
                DamageScenario::FourLegs,
                RecoveryOption::Shapeshifting,
                lineage as u32,
                r,
            ));
        }
        let stats = grid_statistics(&records, 99).unwrap();
        assert_eq!(stats.len(), 1);
        let s = &stats[0];
        let direct =
            rank_sum_test(&[0.2, 0.3, 0.25], &[0.6, 0.7, 0.65]).unwrap();
        assert_eq!(s.u_statistic, direct.u);
        assert_eq!(s.p_raw, direct.p_value);
        // One scenario → no correction.
        assert_eq!(s.p_bonferroni, direct.p_value);
        let (low, high) = bootstrap_mean_ci(
            &[0.6, 0.7, 0.65],
            BOOTSTRAP_CONFIDENCE,
            BOOTSTRAP_RESAMPLES,
            derive_seed(99, &["bootstrap", "four_legs", "shapeshifting"]),
        )
        .unwrap();
        assert_eq!((s.shapeshifting_ci_low, s.shapeshifting_ci_high), (low, high));
        assert!(s.readaptation_ci_low <= s.readaptation_ci_high);

        // A scenario missing one option is an error, not a silent skip.
        let lonely = vec![record(
            DamageScenario::OneLeg,
            RecoveryOption::Shapeshifting,
            0,
            0.5,
        )];
        assert!(matches!(
            grid_statistics(&lonely, 0),
            Err(ExperimentError::MissingOption { .. })
        ));
        assert!(grid_statistics(&[], 0).is_err());
    }

    #[test]
    fn bonferroni_scales_with_scenario_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let genome = CppnGenome::random(GenomeRole::Controller, &mut rng);
        let mut records = Vec::new();
        for scenario in [DamageScenario::OneLeg, DamageScenario::FourLegs] {
            for option in RecoveryOption::ALL {
                for lineage in 0..3u32 {
                    records.push(RecoveryRecord {
                        scenario,
                        option,
                        lineage,
                        predamage_cm: 10.0,
                        baseline_cm: 1.0,
                        history: vec![],
                        best_postdamage_cm: lineage as f64
                            + if option == RecoveryOption::Shapeshifting {
                                10.0
                            } else {
                                0.0
                            },
                        relative_performance: lineage as f64 / 10.0
                            + if option == RecoveryOption::Shapeshifting {
                                1.0
                            } else {
                                0.0
                            },
                        champion: genome.clone(),
                    });
                }
            }
        }
        let stats = grid_statistics(&records, 1).unwrap();
        assert_eq!(stats.len(), 2);
        for s in &stats {
            assert_eq!(s.p_bonferroni, (2.0 * s.p_raw).min(1.0));
        }
    }

    #[test]
    fn size_control_volume_and_amplitude() {
        let quad = QuadrupedSpec::reduced();
        let params = tiny_params();
        let champions =
            optimize_predamage_controllers(&quad, &params, 1, 0, 3, 31).unwrap();
        let report =
            size_control_experiment(&champions, &[], &quad, &params, 0, 3, 31).unwrap();
        assert_eq!(report.original_cm.len(), 1);
        assert_eq!(report.enlarged_cm.len(), 1);
        assert!(report.four_legs_shapeshifting_cm.is_empty());
        assert_eq!(report.oscillation_amplitude_cm, params.actuation_amplitude);
        let ratio = report.enlarged_volume / report.original_volume;
        assert!((ratio - 8.0).abs() < 1e-12, "volume ratio {ratio}");
    }
}
