//! Run configuration: named profiles, config-file overlay, and the manifest
//! that makes every results directory self-describing.
//!
//! Precedence is flags > file > profile defaults. The file is TOML; unknown
//! keys are rejected by name rather than ignored, so a typo like `gravty`
//! fails loudly instead of silently running with defaults. A results
//! manifest embeds the full effective configuration and can be fed back to
//! [`parse_config`] to reproduce the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::RecoveryOption;
use crate::morphology::{DamageScenario, QuadrupedSpec};
use crate::physics::SimParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown profile `{0}`; known profiles: desk, paper")]
    UnknownProfile(String),
    #[error("config file {path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error("manifest {path}: {message}")]
    BadManifest { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything a run needs, fully resolved. Serialized verbatim into the
/// manifest, so two runs of the same config are comparable at a glance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of the base profile this config started from.
    pub profile: String,
    /// Independent optimization lineages (one champion each).
    pub seeds: u32,
    pub master_seed: u64,
    pub generations_pre: u32,
    pub generations_post: u32,
    /// AFPO population capacity.
    pub population: usize,
    pub scenarios: Vec<DamageScenario>,
    pub options: Vec<RecoveryOption>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` means available parallelism.
    pub threads: Option<usize>,
    /// Record every Nth frame when exporting trajectories.
    pub trajectory_stride: usize,
    pub quadruped: QuadrupedSpec,
    pub sim: SimParams,
}

impl RunConfig {
    /// The full-scale configuration: complete quadruped, population 50,
    /// 1500 predamage / 500 postdamage generations, 20 lineages.
    pub fn paper_profile() -> Self {
        RunConfig {
            profile: "paper".to_string(),
            seeds: 20,
            master_seed: 0,
            generations_pre: 1500,
            generations_post: 500,
            population: 50,
            scenarios: DamageScenario::DAMAGING.to_vec(),
            options: vec![
                RecoveryOption::ControllerReadaptation,
                RecoveryOption::Shapeshifting,
            ],
            output_dir: PathBuf::from("results"),
            threads: None,
            trajectory_stride: 100,
            quadruped: QuadrupedSpec::full(),
            sim: SimParams::default(),
        }
    }

    /// The desk-scale configuration: reduced body, population 20, 30/20
    /// generations, 5 lineages. Runs the whole grid in minutes, trends in
    /// the same direction as the full-scale setup.
    pub fn desk_profile() -> Self {
        RunConfig {
            profile: "desk".to_string(),
            seeds: 5,
            master_seed: 0,
            generations_pre: 30,
            generations_post: 20,
            population: 20,
            scenarios: DamageScenario::DAMAGING.to_vec(),
            options: vec![
                RecoveryOption::ControllerReadaptation,
                RecoveryOption::Shapeshifting,
            ],
            output_dir: PathBuf::from("results"),
            threads: None,
            trajectory_stride: 100,
            quadruped: QuadrupedSpec::reduced(),
            sim: SimParams::desk(),
        }
    }

    pub fn profile(name: &str) -> Result<Self, ConfigError> {
        match name {
            "paper" => Ok(Self::paper_profile()),
            "desk" => Ok(Self::desk_profile()),
            other => Err(ConfigError::UnknownProfile(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds == 0 {
            return Err(ConfigError::Invalid("seeds must be >= 1".into()));
        }
        if self.population == 0 {
            return Err(ConfigError::Invalid("population must be >= 1".into()));
        }
        if self.scenarios.is_empty() {
            return Err(ConfigError::Invalid("scenarios must be non-empty".into()));
        }
        if self.options.is_empty() {
            return Err(ConfigError::Invalid("options must be non-empty".into()));
        }
        if self.trajectory_stride == 0 {
            return Err(ConfigError::Invalid(
                "trajectory_stride must be >= 1".into(),
            ));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::Invalid("threads must be >= 1".into()));
        }
        self.quadruped
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.sim
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("sim: {e}")))?;
        Ok(())
    }
}

/// Partial simulation parameters, as they appear under `[sim]` in a config
/// file or as individual command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimPatch {
    pub dt: Option<f64>,
    pub gravity: Option<f64>,
    pub eval_duration: Option<f64>,
    pub settle_duration: Option<f64>,
    pub actuation_amplitude: Option<f64>,
    pub actuation_frequency: Option<f64>,
    pub youngs_modulus: Option<f64>,
    pub material_density: Option<f64>,
    pub beam_damping_ratio: Option<f64>,
    pub global_velocity_damping: Option<f64>,
    pub ground_stiffness: Option<f64>,
    pub ground_damping_ratio: Option<f64>,
    pub static_friction: Option<f64>,
    pub kinetic_friction: Option<f64>,
}

impl SimPatch {
    fn apply(&self, sim: &mut SimParams) {
        macro_rules! patch {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { sim.$field = v; })*
            };
        }
        patch!(
            dt,
            gravity,
            eval_duration,
            settle_duration,
            actuation_amplitude,
            actuation_frequency,
            youngs_modulus,
            material_density,
            beam_damping_ratio,
            global_velocity_damping,
            ground_stiffness,
            ground_damping_ratio,
            static_friction,
            kinetic_friction
        );
    }

    pub fn is_empty(&self) -> bool {
        *self == SimPatch::default()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadrupedPatch {
    torso: Option<(u32, u32, u32)>,
    leg: Option<(u32, u32, u32)>,
}

/// The config-file schema: every key optional, every unknown key an error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    profile: Option<String>,
    seeds: Option<u32>,
    master_seed: Option<u64>,
    generations_pre: Option<u32>,
    generations_post: Option<u32>,
    population: Option<usize>,
    scenarios: Option<Vec<DamageScenario>>,
    options: Option<Vec<RecoveryOption>>,
    output_dir: Option<PathBuf>,
    threads: Option<usize>,
    trajectory_stride: Option<usize>,
    quadruped: Option<QuadrupedPatch>,
    sim: Option<SimPatch>,
}

/// Command-line overrides; highest precedence. The CLI layer fills this from
/// flags, tests can construct it directly.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub profile: Option<String>,
    pub seeds: Option<u32>,
    pub master_seed: Option<u64>,
    pub generations_pre: Option<u32>,
    pub generations_post: Option<u32>,
    pub population: Option<usize>,
    pub scenarios: Option<Vec<DamageScenario>>,
    pub options: Option<Vec<RecoveryOption>>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub trajectory_stride: Option<usize>,
    pub sim: SimPatch,
}

fn read_config_file(path: &Path) -> Result<ConfigFile, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|e| ConfigError::BadFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Resolve the effective configuration: profile defaults, overlaid with the
/// optional config file, overlaid with flag overrides, then validated.
///
/// A `.json` file is treated as a run manifest and its embedded config is
/// the file layer, so a finished results directory can seed a new run.
pub fn parse_config(
    file: Option<&Path>,
    overrides: &ConfigOverrides,
) -> Result<RunConfig, ConfigError> {
    // A manifest carries a complete config; short-circuit the overlay.
    if let Some(path) = file {
        if path.extension().is_some_and(|e| e == "json") {
            let manifest = load_manifest(path)?;
            let mut config = manifest.config;
            apply_overrides(&mut config, overrides);
            config.validate()?;
            return Ok(config);
        }
    }

    let file_layer = match file {
        Some(path) => read_config_file(path)?,
        None => ConfigFile::default(),
    };
    let profile_name = overrides
        .profile
        .clone()
        .or_else(|| file_layer.profile.clone())
        .unwrap_or_else(|| "desk".to_string());
    let mut config = RunConfig::profile(&profile_name)?;

    macro_rules! overlay {
        ($($field:ident),*) => {
            $(if let Some(v) = file_layer.$field.clone() { config.$field = v; })*
        };
    }
    overlay!(
        seeds,
        master_seed,
        generations_pre,
        generations_post,
        population,
        scenarios,
        options,
        output_dir,
        trajectory_stride
    );
    if let Some(threads) = file_layer.threads {
        config.threads = Some(threads);
    }
    if let Some(quad) = &file_layer.quadruped {
        if let Some(torso) = quad.torso {
            config.quadruped.torso = torso;
        }
        if let Some(leg) = quad.leg {
            config.quadruped.leg = leg;
        }
    }
    if let Some(sim) = &file_layer.sim {
        sim.apply(&mut config.sim);
    }

    apply_overrides(&mut config, overrides);
    config.validate()?;
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, overrides: &ConfigOverrides) {
    macro_rules! overlay {
        ($($field:ident),*) => {
            $(if let Some(v) = overrides.$field.clone() { config.$field = v; })*
        };
    }
    overlay!(
        seeds,
        master_seed,
        generations_pre,
        generations_post,
        population,
        scenarios,
        options,
        output_dir,
        trajectory_stride
    );
    if let Some(threads) = overrides.threads {
        config.threads = Some(threads);
    }
    overrides.sim.apply(&mut config.sim);
}

pub const MANIFEST_FORMAT: &str = "morphovox/manifest-v1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Written once per results directory; captures everything needed to re-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub tool_version: String,
    /// Unix seconds at write time — the only field allowed to differ
    /// between two runs of the same config.
    pub created_unix: u64,
    pub config: RunConfig,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        let created_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix,
            config,
        }
    }
}

/// Write `manifest.json` into `dir`, creating the directory tree first.
pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf, ConfigError> {
    std::fs::create_dir_all(dir).map_err(|source| ConfigError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_string_pretty(manifest).map_err(|e| ConfigError::BadManifest {
        path: path.clone(),
        message: e.to_string(),
    })?;
    std::fs::write(&path, body).map_err(|source| ConfigError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| ConfigError::BadManifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(ConfigError::BadManifest {
            path: path.to_path_buf(),
            message: format!("format `{}` not supported", manifest.format),
        });
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn empty_file_with_desk_profile_is_fully_defaulted() {
        let (_dir, path) = write_temp("");
        let config = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(config, RunConfig::desk_profile());
    }

    #[test]
    fn no_file_defaults_to_desk() {
        let config = parse_config(None, &ConfigOverrides::default()).unwrap();
        assert_eq!(config.profile, "desk");
        assert_eq!(config.population, 20);
        assert_eq!(config.generations_pre, 30);
        assert_eq!(config.generations_post, 20);
        assert_eq!(config.seeds, 5);
    }

    #[test]
    fn paper_profile_matches_full_scale_settings() {
        let config = RunConfig::paper_profile();
        assert_eq!(config.population, 50);
        assert_eq!(config.generations_pre, 1500);
        assert_eq!(config.generations_post, 500);
        assert_eq!(config.seeds, 20);
        assert_eq!(config.scenarios.len(), 9);
        assert_eq!(config.quadruped, QuadrupedSpec::full());
        assert!((config.sim.dt - 0.000151).abs() < 1e-15);
        assert!((config.sim.eval_duration - 4.0).abs() < 1e-15);
        config.validate().unwrap();
    }

    #[test]
    fn file_overrides_profile_and_flags_override_file() {
        let (_dir, path) = write_temp(
            "profile = \"desk\"\nmaster_seed = 3\n\n[sim]\ndt = 0.00025\n",
        );
        let config = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(config.master_seed, 3);
        assert!((config.sim.dt - 0.00025).abs() < 1e-15);

        let flags = ConfigOverrides {
            sim: SimPatch {
                dt: Some(0.000151),
                ..SimPatch::default()
            },
            master_seed: Some(9),
            ..ConfigOverrides::default()
        };
        let config = parse_config(Some(&path), &flags).unwrap();
        assert!((config.sim.dt - 0.000151).abs() < 1e-15);
        assert_eq!(config.master_seed, 9);
    }

    #[test]
    fn profile_flag_beats_file_profile() {
        let (_dir, path) = write_temp("profile = \"desk\"\n");
        let flags = ConfigOverrides {
            profile: Some("paper".to_string()),
            ..ConfigOverrides::default()
        };
        let config = parse_config(Some(&path), &flags).unwrap();
        assert_eq!(config.profile, "paper");
        assert_eq!(config.population, 50);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let (_dir, path) = write_temp("[sim]\ngravty = 9.81\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("gravty"), "{message}");

        let (_dir2, path2) = write_temp("populaton = 20\n");
        let err = parse_config(Some(&path2), &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("populaton"), "{err}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let (_dir, path) = write_temp("seeds = \"five\"\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("seeds") || message.contains("string"), "{message}");
    }

    #[test]
    fn unknown_profile_rejected() {
        let err = RunConfig::profile("pocket").unwrap_err();
        assert!(err.to_string().contains("pocket"));
    }

    #[test]
    fn scenario_and_option_lists_parse_from_tags() {
        let (_dir, path) = write_temp(
            "scenarios = [\"four_legs\", \"half_leg\"]\noptions = [\"shapeshifting\"]\n",
        );
        let config = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(
            config.scenarios,
            vec![DamageScenario::FourLegs, DamageScenario::HalfLeg]
        );
        assert_eq!(config.options, vec![RecoveryOption::Shapeshifting]);
    }

    #[test]
    fn invalid_merged_config_is_rejected() {
        let (_dir, path) = write_temp("seeds = 0\n");
        let err = parse_config(Some(&path), &ConfigOverrides::default()).unwrap_err();
        assert!(err.to_string().contains("seeds"));

        let (_dir2, path2) = write_temp("[sim]\ndt = -1.0\n");
        assert!(parse_config(Some(&path2), &ConfigOverrides::default()).is_err());
    }

    #[test]
    fn manifest_round_trips_through_parse_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = RunConfig::desk_profile();
        config.master_seed = 42;
        let manifest = Manifest::new(config.clone());
        let path = write_manifest(&dir.path().join("results/a/b"), &manifest).unwrap();

        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded, manifest);

        let reparsed = parse_config(Some(&path), &ConfigOverrides::default()).unwrap();
        assert_eq!(reparsed, config);
    }

    #[test]
    fn manifests_of_identical_configs_differ_only_in_timestamp() {
        let config = RunConfig::desk_profile();
        let mut a = Manifest::new(config.clone());
        let mut b = Manifest::new(config);
        a.created_unix = 0;
        b.created_unix = 0;
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn manifest_format_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        std::fs::write(
            &path,
            "{\"format\":\"other/v9\",\"tool_version\":\"0\",\"created_unix\":0,\"config\":{}}",
        )
        .unwrap();
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn quadruped_dimensions_can_be_overridden() {
        let (_dir, path) = write_temp("[quadruped]\ntorso = [4, 4, 2]\nleg = [2, 2, 1]\n");
        let flags = ConfigOverrides {
            profile: Some("paper".to_string()),
            ..ConfigOverrides::default()
        };
        let config = parse_config(Some(&path), &flags).unwrap();
        assert_eq!(config.quadruped, QuadrupedSpec::reduced());
    }
}
