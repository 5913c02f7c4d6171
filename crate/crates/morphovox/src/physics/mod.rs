//! Deterministic mass-spring-lattice simulation of a voxel robot.
//!
//! Each voxel becomes one particle (with orientation) and each face-adjacent
//! voxel pair one beam with axial, bending, and torsional stiffness derived
//! from the material's Young's modulus. Actuation cyclically adjusts each
//! voxel's rest length around its baseline; locomotion emerges from
//! phase-offset patterns interacting with ground contact and friction. The
//! integrator is semi-implicit Euler at a fixed small timestep, and the whole
//! pipeline is bit-deterministic for fixed inputs.
//!
//! Internally the simulation runs in cm/g/s units (forces in dyn), matching
//! the centimeter scale of the robot; [`SimParams`] is expressed in the SI
//! units its sources are usually quoted in and converted once at build time.

mod export;
mod lattice;
mod sim;

pub use export::{frames_or_error, write_trajectory_csv, write_trajectory_obj_sequence};
pub use lattice::{build_lattice, Beam, LatticeAxis, Particle, SimState};
pub use sim::Simulation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Controller, Shape};
use crate::morphology::VoxelStructure;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    BadParams(String),
    #[error("shape does not cover structure (voxel ({x}, {y}, {z}) missing or extra keys present)")]
    ShapeMismatch { x: i32, y: i32, z: i32 },
    #[error("controller does not cover structure (voxel ({x}, {y}, {z}) missing or extra keys present)")]
    ControllerMismatch { x: i32, y: i32, z: i32 },
    #[error("controller oscillation (A = {ctrl_a} cm, f = {ctrl_f} Hz) disagrees with params (A = {param_a} cm, f = {param_f} Hz)")]
    OscillationMismatch {
        ctrl_a: f64,
        ctrl_f: f64,
        param_a: f64,
        param_f: f64,
    },
    #[error("rest length {0} outside the supported range")]
    BadRestLength(f64),
    #[error("phase offset {0} outside the supported range")]
    BadPhase(f64),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("simulation diverged at t = {time} s")]
    Diverged { time: f64 },
}

/// Simulation parameters in SI-facing units (seconds, m/s², Pa, kg/m³, N/m);
/// amplitudes and displacements are in cm, the robot's natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimParams {
    /// Integration timestep, seconds.
    pub dt: f64,
    /// Gravitational acceleration, m/s², applied downward.
    pub gravity: f64,
    /// Scored actuation phase length, seconds; must be a whole number of
    /// actuation cycles.
    pub eval_duration: f64,
    /// Unscored settling phase before measurement, seconds.
    pub settle_duration: f64,
    /// Oscillation amplitude A, cm.
    pub actuation_amplitude: f64,
    /// Oscillation frequency f, Hz.
    pub actuation_frequency: f64,
    /// Material Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Material density, kg/m³ (1000 gives 1 g per nominal voxel).
    pub material_density: f64,
    /// Damping ratio for beam axial and rotational dashpots.
    pub beam_damping_ratio: f64,
    /// Per-step multiplicative velocity damping; 1.0 = none.
    pub global_velocity_damping: f64,
    /// Ground penalty-spring stiffness, N/m; 0 disables ground contact.
    pub ground_stiffness: f64,
    /// Damping ratio of the ground contact spring (1.0 = critical).
    pub ground_damping_ratio: f64,
    /// Static friction coefficient μs.
    pub static_friction: f64,
    /// Kinetic friction coefficient μk.
    pub kinetic_friction: f64,
}

impl Default for SimParams {
    /// Full-fidelity defaults: the published timestep and durations with
    /// soft-silicone-like material constants.
    fn default() -> Self {
        SimParams {
            dt: 0.000151,
            gravity: 9.81,
            eval_duration: 4.0,
            settle_duration: 0.5,
            actuation_amplitude: 0.145,
            actuation_frequency: 5.0,
            youngs_modulus: 1.0e6,
            material_density: 1000.0,
            beam_damping_ratio: 0.1,
            global_velocity_damping: 1.0,
            ground_stiffness: 1.0e4,
            ground_damping_ratio: 1.0,
            static_friction: 1.0,
            kinetic_friction: 0.8,
        }
    }
}

impl SimParams {
    /// Desk-scale profile: a shorter evaluation against a softer material
    /// and ground. The timestep is sized for the worst vibration mode any
    /// evolvable body can reach — a fully coordinated cluster of
    /// minimum-rest-length voxels, whose row-sum bound gives ω ≈ 3.8e3 rad/s
    /// axially and ≈ 4.6e3 rad/s in bending — keeping ω·dt ≤ 0.5, where the
    /// explicit integrator dissipates rather than pumps energy through
    /// ground contact. Coarser steps let shape evolution mine the
    /// integrator for thrust and fly.
    pub fn desk() -> Self {
        SimParams {
            dt: 1.0e-4,
            eval_duration: 2.0,
            youngs_modulus: 3.0e4,
            ground_stiffness: 1.0e3,
            ..SimParams::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::BadParams(msg));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return bad(format!("gravity must be >= 0, got {}", self.gravity));
        }
        if !(self.eval_duration.is_finite() && self.eval_duration >= 0.0) {
            return bad(format!(
                "eval_duration must be >= 0, got {}",
                self.eval_duration
            ));
        }
        if !(self.settle_duration.is_finite() && self.settle_duration >= 0.0) {
            return bad(format!(
                "settle_duration must be >= 0, got {}",
                self.settle_duration
            ));
        }
        if !(self.actuation_amplitude.is_finite() && self.actuation_amplitude >= 0.0) {
            return bad(format!(
                "actuation_amplitude must be >= 0, got {}",
                self.actuation_amplitude
            ));
        }
        if !(self.actuation_frequency.is_finite() && self.actuation_frequency > 0.0) {
            return bad(format!(
                "actuation_frequency must be positive, got {}",
                self.actuation_frequency
            ));
        }
        let cycles = self.eval_duration * self.actuation_frequency;
        if (cycles - cycles.round()).abs() > 1e-9 {
            return bad(format!(
                "eval_duration must cover a whole number of actuation cycles, got {cycles}"
            ));
        }
        if !(self.youngs_modulus.is_finite() && self.youngs_modulus > 0.0) {
            return bad(format!(
                "youngs_modulus must be positive, got {}",
                self.youngs_modulus
            ));
        }
        if !(self.material_density.is_finite() && self.material_density > 0.0) {
            return bad(format!(
                "material_density must be positive, got {}",
                self.material_density
            ));
        }
        if !(self.beam_damping_ratio.is_finite() && self.beam_damping_ratio >= 0.0) {
            return bad(format!(
                "beam_damping_ratio must be >= 0, got {}",
                self.beam_damping_ratio
            ));
        }
        if !(self.global_velocity_damping.is_finite()
            && self.global_velocity_damping > 0.0
            && self.global_velocity_damping <= 1.0)
        {
            return bad(format!(
                "global_velocity_damping must be in (0, 1], got {}",
                self.global_velocity_damping
            ));
        }
        if !(self.ground_stiffness.is_finite() && self.ground_stiffness >= 0.0) {
            return bad(format!(
                "ground_stiffness must be >= 0, got {}",
                self.ground_stiffness
            ));
        }
        if !(self.ground_damping_ratio.is_finite() && self.ground_damping_ratio >= 0.0) {
            return bad(format!(
                "ground_damping_ratio must be >= 0, got {}",
                self.ground_damping_ratio
            ));
        }
        if !(self.static_friction.is_finite()
            && self.kinetic_friction.is_finite()
            && self.kinetic_friction >= 0.0
            && self.kinetic_friction <= self.static_friction)
        {
            return bad(format!(
                "need 0 <= kinetic_friction <= static_friction, got μk = {}, μs = {}",
                self.kinetic_friction, self.static_friction
            ));
        }
        Ok(())
    }
}

/// Oscillation damping factor: shrinks actuation amplitude linearly as a
/// voxel's rest length approaches the minimum, reaching zero at 0.25 cm so
/// contracting voxels cannot overlap. min(1, (4b - 1)/3), clamped below at 0.
pub fn xi(b: f64) -> Result<f64, SimError> {
    if !(b.is_finite() && b >= 0.0) {
        return Err(SimError::BadRestLength(b));
    }
    Ok(((4.0 * b - 1.0) / 3.0).clamp(0.0, 1.0))
}

/// A voxel's rest length at time `t` under actuation:
/// `b + A·sin(2πft + φ)·ξ(b)`. The damping factor uses the static baseline
/// `b`, so it can be precomputed per voxel.
pub fn instantaneous_rest_length(
    b: f64,
    phi: f64,
    t: f64,
    params: &SimParams,
) -> Result<f64, SimError> {
    if !(b.is_finite() && (Shape::MIN_REST_LENGTH..=Shape::MAX_REST_LENGTH).contains(&b)) {
        return Err(SimError::BadRestLength(b));
    }
    if !(phi.is_finite() && (Controller::MIN_PHASE..=Controller::MAX_PHASE).contains(&phi)) {
        return Err(SimError::BadPhase(phi));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(SimError::NegativeTime(t));
    }
    let omega = std::f64::consts::TAU * params.actuation_frequency;
    Ok(b + params.actuation_amplitude * (omega * t + phi).sin() * xi(b)?)
}

/// One sampled animation frame: particle positions in cm, in particle-index
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Step index within the scored phase (0 = first scored step).
    pub step: usize,
    /// Simulation time in seconds.
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
}

/// Result of one evaluation: where the body's center of mass started (after
/// settling) and ended, and the horizontal distance between the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    /// Center of mass at measurement start (after the settle phase), cm.
    pub start_com: [f64; 3],
    /// Center of mass at the end of the scored phase, cm.
    pub end_com: [f64; 3],
    /// Horizontal-plane Euclidean norm of the COM displacement, cm.
    pub net_displacement: f64,
    /// Steps executed in the scored phase.
    pub steps: usize,
    /// Sampled particle positions, present only when frame recording was
    /// requested.
    pub frames: Option<Vec<Frame>>,
}

/// Evaluate one (structure, shape, controller) triple: build the lattice,
/// grow the resting shape in and settle with actuation off, then score
/// `eval_duration` seconds of actuated motion. Pure function of its inputs.
pub fn simulate(
    structure: &VoxelStructure,
    shape: &Shape,
    controller: &Controller,
    params: &SimParams,
) -> Result<TrajectorySummary, SimError> {
    simulate_with_frames(structure, shape, controller, params, 0)
}

/// As [`simulate`], additionally sampling particle positions every
/// `frame_stride` steps of the scored phase (0 disables sampling).
pub fn simulate_with_frames(
    structure: &VoxelStructure,
    shape: &Shape,
    controller: &Controller,
    params: &SimParams,
    frame_stride: usize,
) -> Result<TrajectorySummary, SimError> {
    let mut sim = Simulation::new(structure, shape, controller, params)?;
    sim.run_to_summary(frame_stride)
}
