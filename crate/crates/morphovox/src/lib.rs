//! morphovox: a voxel-lattice soft-body simulator plus an evolutionary
//! optimization toolkit built around one question — after a walking robot
//! loses part of its body, is it better off relearning how to move, or
//! changing what its body *is*?
//!
//! The crate is organized around that experiment:
//!
//! - [`morphology`] — voxel structures, the canonical quadruped, amputation
//!   and body-cut scenarios, isometric scaling.
//! - [`genome`] — compositional pattern-producing networks (CPPNs) that paint
//!   either a phase-offset controller or a rest-volume shape over a structure.
//! - [`physics`] — the mass-spring-lattice simulator that turns a (structure,
//!   shape, controller) triple into a locomotion score.
//! - [`afpo`] — age-fitness Pareto optimization over genomes.
//! - [`stats`] — bootstrapped confidence intervals and rank-sum tests for
//!   comparing recovery strategies.
//! - [`experiments`] — the orchestration layer: pre-damage controller
//!   optimization, the damage × recovery grid, and the size-control study.
//! - [`config`] / [`reports`] — run profiles, manifests, and the CSV surface.
//! - [`cli`] — the `morphovox` binary's subcommands and exit-code policy.

pub mod afpo;
pub mod cli;
pub mod config;
pub mod experiments;
pub mod genome;
pub mod morphology;
pub mod physics;
pub mod reports;
pub mod stats;
