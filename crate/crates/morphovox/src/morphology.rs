//! Voxel structures and the operations that carve them up.
//!
//! A [`VoxelStructure`] is a face-connected set of unit cells on an integer
//! lattice. The canonical robot is a four-legged quadruped built by
//! [`build_quadruped`]; damage scenarios remove legs or body quadrants from
//! it, and [`isometric_scale`] grows a body uniformly without changing its
//! topology.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::genome::{Controller, Shape};

#[derive(Debug, Error)]
pub enum MorphologyError {
    #[error("structure has no voxels")]
    Empty,
    #[error("structure is not face-connected ({reachable} of {total} voxels reachable)")]
    Disconnected { reachable: usize, total: usize },
    #[error("voxel coordinates must be non-negative, got ({x}, {y}, {z})")]
    NegativeCoord { x: i32, y: i32, z: i32 },
    #[error("lattice pitch must be positive and finite, got {0}")]
    BadPitch(f64),
    #[error("quadruped spec invalid: {0}")]
    BadSpec(String),
    #[error("unknown damage scenario `{0}`")]
    UnknownScenario(String),
    #[error("cut would remove every voxel")]
    CutRemovesEverything,
    #[error("cut leaves a disconnected remnant")]
    CutDisconnects,
    #[error("scale factor {factor} pushes rest length {value} outside [{lo}, {hi}]")]
    ScaleOutOfRange {
        factor: f64,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("{context}: voxel ({x}, {y}, {z}) has no attribute value")]
    MissingAttribute {
        context: &'static str,
        x: i32,
        y: i32,
        z: i32,
    },
    #[error("pressure estimate needs {name} > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("pressure estimate needs strain below vessel radius (r0 = {r0}, eps = {eps})")]
    StrainExceedsRadius { r0: f64, eps: f64 },
}

/// Integer lattice cell address. Ordering is (z, y, x) lexicographic via the
/// derived impl on field order, which only matters for deterministic
/// iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Coord {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Coord {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        Coord { x, y, z }
    }

    /// The six face neighbours.
    pub fn neighbours(self) -> [Coord; 6] {
        let Coord { x, y, z } = self;
        [
            Coord::new(x - 1, y, z),
            Coord::new(x + 1, y, z),
            Coord::new(x, y - 1, z),
            Coord::new(x, y + 1, z),
            Coord::new(x, y, z - 1),
            Coord::new(x, y, z + 1),
        ]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// A face-connected set of voxels with a physical lattice pitch in cm.
///
/// Invariants (checked on construction): non-empty, all coordinates
/// non-negative, face-connected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelStructure {
    cells: BTreeSet<Coord>,
    lattice_pitch: f64,
}

impl VoxelStructure {
    pub const DEFAULT_PITCH_CM: f64 = 1.0;

    pub fn new(cells: BTreeSet<Coord>, lattice_pitch: f64) -> Result<Self, MorphologyError> {
        if cells.is_empty() {
            return Err(MorphologyError::Empty);
        }
        if !(lattice_pitch.is_finite() && lattice_pitch > 0.0) {
            return Err(MorphologyError::BadPitch(lattice_pitch));
        }
        if let Some(c) = cells.iter().find(|c| c.x < 0 || c.y < 0 || c.z < 0) {
            return Err(MorphologyError::NegativeCoord {
                x: c.x,
                y: c.y,
                z: c.z,
            });
        }
        let reachable = flood_fill_count(&cells);
        if reachable != cells.len() {
            return Err(MorphologyError::Disconnected {
                reachable,
                total: cells.len(),
            });
        }
        Ok(VoxelStructure {
            cells,
            lattice_pitch,
        })
    }

    pub fn with_unit_pitch(cells: BTreeSet<Coord>) -> Result<Self, MorphologyError> {
        Self::new(cells, Self::DEFAULT_PITCH_CM)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.cells.contains(&c)
    }

    /// Deterministic (sorted) iteration over the occupied cells.
    pub fn iter(&self) -> impl Iterator<Item = Coord> + '_ {
        self.cells.iter().copied()
    }

    pub fn cells(&self) -> &BTreeSet<Coord> {
        &self.cells
    }

    pub fn lattice_pitch(&self) -> f64 {
        self.lattice_pitch
    }

    /// Mean of the occupied cell coordinates.
    pub fn centroid(&self) -> (f64, f64, f64) {
        let n = self.cells.len() as f64;
        let (mut sx, mut sy, mut sz) = (0.0, 0.0, 0.0);
        for c in &self.cells {
            sx += c.x as f64;
            sy += c.y as f64;
            sz += c.z as f64;
        }
        (sx / n, sy / n, sz / n)
    }

    /// Inclusive bounding box (min, max).
    pub fn bounds(&self) -> (Coord, Coord) {
        let mut min = Coord::new(i32::MAX, i32::MAX, i32::MAX);
        let mut max = Coord::new(i32::MIN, i32::MIN, i32::MIN);
        for c in &self.cells {
            min.x = min.x.min(c.x);
            min.y = min.y.min(c.y);
            min.z = min.z.min(c.z);
            max.x = max.x.max(c.x);
            max.y = max.y.max(c.y);
            max.z = max.z.max(c.z);
        }
        (min, max)
    }

    /// Face-adjacent cell pairs, each reported once with the lower coordinate
    /// first, in sorted order.
    pub fn adjacent_pairs(&self) -> Vec<(Coord, Coord)> {
        let mut pairs = Vec::new();
        for &c in &self.cells {
            for step in [
                Coord::new(c.x + 1, c.y, c.z),
                Coord::new(c.x, c.y + 1, c.z),
                Coord::new(c.x, c.y, c.z + 1),
            ] {
                if self.cells.contains(&step) {
                    pairs.push((c, step));
                }
            }
        }
        pairs.sort();
        pairs
    }

    /// Human-readable layer-by-layer dump: one grid per z layer, bottom layer
    /// first, `#` for occupied cells.
    pub fn ascii_layers(&self) -> String {
        let (min, max) = self.bounds();
        let mut out = String::new();
        for z in min.z..=max.z {
            out.push_str(&format!("z = {z}\n"));
            // Print higher y first so the grid reads like a map viewed from +z.
            for y in (min.y..=max.y).rev() {
                for x in min.x..=max.x {
                    out.push(if self.contains(Coord::new(x, y, z)) {
                        '#'
                    } else {
                        '.'
                    });
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }

    /// Remove `cut` from the structure, keeping pitch. Fails if nothing is
    /// left or the remnant is disconnected.
    pub fn without(&self, cut: &BTreeSet<Coord>) -> Result<VoxelStructure, MorphologyError> {
        let remaining: BTreeSet<Coord> = self.cells.difference(cut).copied().collect();
        if remaining.is_empty() {
            return Err(MorphologyError::CutRemovesEverything);
        }
        match VoxelStructure::new(remaining, self.lattice_pitch) {
            Ok(s) => Ok(s),
            Err(MorphologyError::Disconnected { .. }) => Err(MorphologyError::CutDisconnects),
            Err(e) => Err(e),
        }
    }
}

fn flood_fill_count(cells: &BTreeSet<Coord>) -> usize {
    let Some(&start) = cells.iter().next() else {
        return 0;
    };
    let mut seen = BTreeSet::new();
    let mut stack = vec![start];
    seen.insert(start);
    while let Some(c) = stack.pop() {
        for n in c.neighbours() {
            if cells.contains(&n) && seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len()
}

/// Dimensions of the canonical quadruped: a rectangular torso slab raised on
/// four rectangular legs, one under each torso corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrupedSpec {
    /// Torso extent (x, y, z) in voxels.
    pub torso: (u32, u32, u32),
    /// Leg extent (x, y, z) in voxels.
    pub leg: (u32, u32, u32),
}

impl QuadrupedSpec {
    /// Full-size body: 6x6x3 torso on 2x2x2 legs, 140 voxels.
    pub fn full() -> Self {
        QuadrupedSpec {
            torso: (6, 6, 3),
            leg: (2, 2, 2),
        }
    }

    /// Reduced body for fast runs: 4x4x2 torso on 2x2x1 legs, 48 voxels.
    pub fn reduced() -> Self {
        QuadrupedSpec {
            torso: (4, 4, 2),
            leg: (2, 2, 1),
        }
    }

    pub fn validate(&self) -> Result<(), MorphologyError> {
        let (tw, td, th) = self.torso;
        let (lw, ld, lh) = self.leg;
        if tw == 0 || td == 0 || th == 0 || lw == 0 || ld == 0 || lh == 0 {
            return Err(MorphologyError::BadSpec(
                "all torso and leg dimensions must be positive".into(),
            ));
        }
        if 2 * lw > tw || 2 * ld > td {
            return Err(MorphologyError::BadSpec(format!(
                "legs {lw}x{ld} do not fit under torso corners of a {tw}x{td} torso"
            )));
        }
        Ok(())
    }

    fn leg_height(&self) -> i32 {
        self.leg.2 as i32
    }

    /// Origin (min corner) of each leg block, keyed by which torso corner it
    /// sits under: (low/high x, low/high y).
    fn leg_origin(&self, high_x: bool, high_y: bool) -> Coord {
        let (tw, td, _) = self.torso;
        let (lw, ld, _) = self.leg;
        let x = if high_x { tw as i32 - lw as i32 } else { 0 };
        let y = if high_y { td as i32 - ld as i32 } else { 0 };
        Coord::new(x, y, 0)
    }

    fn leg_cells(&self, high_x: bool, high_y: bool) -> BTreeSet<Coord> {
        let o = self.leg_origin(high_x, high_y);
        let (lw, ld, lh) = self.leg;
        let mut cells = BTreeSet::new();
        for dx in 0..lw as i32 {
            for dy in 0..ld as i32 {
                for dz in 0..lh as i32 {
                    cells.insert(Coord::new(o.x + dx, o.y + dy, o.z + dz));
                }
            }
        }
        cells
    }

    fn torso_cells(&self) -> BTreeSet<Coord> {
        let (tw, td, th) = self.torso;
        let z0 = self.leg_height();
        let mut cells = BTreeSet::new();
        for x in 0..tw as i32 {
            for y in 0..td as i32 {
                for z in z0..z0 + th as i32 {
                    cells.insert(Coord::new(x, y, z));
                }
            }
        }
        cells
    }
}

/// Build the canonical quadruped for a given size spec. Legs stand on z = 0;
/// the torso slab sits on top of them.
pub fn build_quadruped(spec: &QuadrupedSpec) -> Result<VoxelStructure, MorphologyError> {
    spec.validate()?;
    let mut cells = spec.torso_cells();
    for (hx, hy) in [(false, false), (true, false), (false, true), (true, true)] {
        cells.extend(spec.leg_cells(hx, hy));
    }
    VoxelStructure::with_unit_pitch(cells)
}

/// The ten damage scenarios: the intact baseline, six leg amputations, and
/// three body cuts of increasing severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageScenario {
    #[serde(rename = "none")]
    Intact,
    HalfLeg,
    OneLeg,
    TwoAdjacentLegs,
    TwoDiagonalLegs,
    ThreeLegs,
    FourLegs,
    QuarterBody,
    HalfBody,
    ThreeQuarterBody,
}

impl DamageScenario {
    pub const ALL: [DamageScenario; 10] = [
        DamageScenario::Intact,
        DamageScenario::HalfLeg,
        DamageScenario::OneLeg,
        DamageScenario::TwoAdjacentLegs,
        DamageScenario::TwoDiagonalLegs,
        DamageScenario::ThreeLegs,
        DamageScenario::FourLegs,
        DamageScenario::QuarterBody,
        DamageScenario::HalfBody,
        DamageScenario::ThreeQuarterBody,
    ];

    /// The nine scenarios that actually remove material.
    pub const DAMAGING: [DamageScenario; 9] = [
        DamageScenario::HalfLeg,
        DamageScenario::OneLeg,
        DamageScenario::TwoAdjacentLegs,
        DamageScenario::TwoDiagonalLegs,
        DamageScenario::ThreeLegs,
        DamageScenario::FourLegs,
        DamageScenario::QuarterBody,
        DamageScenario::HalfBody,
        DamageScenario::ThreeQuarterBody,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            DamageScenario::Intact => "none",
            DamageScenario::HalfLeg => "half_leg",
            DamageScenario::OneLeg => "one_leg",
            DamageScenario::TwoAdjacentLegs => "two_adjacent_legs",
            DamageScenario::TwoDiagonalLegs => "two_diagonal_legs",
            DamageScenario::ThreeLegs => "three_legs",
            DamageScenario::FourLegs => "four_legs",
            DamageScenario::QuarterBody => "quarter_body",
            DamageScenario::HalfBody => "half_body",
            DamageScenario::ThreeQuarterBody => "three_quarter_body",
        }
    }
}

impl fmt::Display for DamageScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DamageScenario {
    type Err = MorphologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DamageScenario::ALL
            .into_iter()
            .find(|d| d.tag() == s)
            .ok_or_else(|| MorphologyError::UnknownScenario(s.to_string()))
    }
}

/// The set of voxels a scenario removes from the quadruped described by
/// `spec`.
///
/// Conventions: single-leg cuts take the leg under the (low x, low y) torso
/// corner; the adjacent pair shares the low-x side (adjacency along y); the
/// diagonal pair is (low, low) and (high, high); three legs spare
/// (high, high). Body cuts slice the whole body (torso and legs together) at
/// torso midplanes: a quarter keeps three quadrants, a half keeps the high-x
/// half, and three quarters keeps only the (high x, high y) quadrant.
pub fn damage_cut_set(spec: &QuadrupedSpec, scenario: DamageScenario) -> BTreeSet<Coord> {
    let (tw, td, _) = spec.torso;
    let half_x = (tw / 2) as i32;
    let half_y = (td / 2) as i32;
    let legs = |picks: &[(bool, bool)]| -> BTreeSet<Coord> {
        picks
            .iter()
            .flat_map(|&(hx, hy)| spec.leg_cells(hx, hy))
            .collect()
    };
    match scenario {
        DamageScenario::Intact => BTreeSet::new(),
        DamageScenario::HalfLeg => {
            // Bottom half of one leg; for odd leg heights the larger part goes.
            let cut_height = (spec.leg.2 as i32 + 1) / 2;
            spec.leg_cells(false, false)
                .into_iter()
                .filter(|c| c.z < cut_height)
                .collect()
        }
        DamageScenario::OneLeg => legs(&[(false, false)]),
        DamageScenario::TwoAdjacentLegs => legs(&[(false, false), (false, true)]),
        DamageScenario::TwoDiagonalLegs => legs(&[(false, false), (true, true)]),
        DamageScenario::ThreeLegs => legs(&[(false, false), (true, false), (false, true)]),
        DamageScenario::FourLegs => {
            legs(&[(false, false), (true, false), (false, true), (true, true)])
        }
        DamageScenario::QuarterBody => {
            let full = build_quadruped_cells(spec);
            full.into_iter()
                .filter(|c| c.x < half_x && c.y < half_y)
                .collect()
        }
        DamageScenario::HalfBody => {
            let full = build_quadruped_cells(spec);
            full.into_iter().filter(|c| c.x < half_x).collect()
        }
        DamageScenario::ThreeQuarterBody => {
            let full = build_quadruped_cells(spec);
            full.into_iter()
                .filter(|c| !(c.x >= half_x && c.y >= half_y))
                .collect()
        }
    }
}

fn build_quadruped_cells(spec: &QuadrupedSpec) -> BTreeSet<Coord> {
    let mut cells = spec.torso_cells();
    for (hx, hy) in [(false, false), (true, false), (false, true), (true, true)] {
        cells.extend(spec.leg_cells(hx, hy));
    }
    cells
}

/// Apply a damage scenario to a bare structure, when no attribute maps ride
/// along (a recovery run expresses fresh ones on the remnant).
pub fn damage_structure(
    structure: &VoxelStructure,
    spec: &QuadrupedSpec,
    scenario: DamageScenario,
) -> Result<VoxelStructure, MorphologyError> {
    let cut = damage_cut_set(spec, scenario);
    structure.without(&cut)
}

/// Apply a damage scenario to a quadruped and its attribute maps.
///
/// The shape and controller are restricted to the surviving voxels with their
/// values untouched; amputation changes the body, not what the remaining
/// tissue remembers.
pub fn apply_damage(
    structure: &VoxelStructure,
    shape: &Shape,
    controller: &Controller,
    spec: &QuadrupedSpec,
    scenario: DamageScenario,
) -> Result<(VoxelStructure, Shape, Controller), MorphologyError> {
    let cut = damage_cut_set(spec, scenario);
    apply_cut(structure, shape, controller, &cut)
}

/// Remove an explicit voxel set. This is the escape hatch for damage
/// geometries that are not one of the named scenarios.
pub fn apply_cut(
    structure: &VoxelStructure,
    shape: &Shape,
    controller: &Controller,
    cut: &BTreeSet<Coord>,
) -> Result<(VoxelStructure, Shape, Controller), MorphologyError> {
    let remnant = structure.without(cut)?;
    let shape = shape.restricted_to(&remnant).map_err(|c| {
        MorphologyError::MissingAttribute {
            context: "shape after cut",
            x: c.x,
            y: c.y,
            z: c.z,
        }
    })?;
    let controller =
        controller
            .restricted_to(&remnant)
            .map_err(|c| MorphologyError::MissingAttribute {
                context: "controller after cut",
                x: c.x,
                y: c.y,
                z: c.z,
            })?;
    Ok((remnant, shape, controller))
}

/// Multiply every rest length by `factor`, leaving topology alone. Fails if
/// any scaled value leaves the representable range.
pub fn isometric_scale(
    structure: &VoxelStructure,
    shape: &Shape,
    factor: f64,
) -> Result<(VoxelStructure, Shape), MorphologyError> {
    let scaled = shape.scaled(factor).map_err(|value| {
        MorphologyError::ScaleOutOfRange {
            factor,
            value,
            lo: Shape::MIN_REST_LENGTH,
            hi: Shape::MAX_REST_LENGTH,
        }
    })?;
    Ok((structure.clone(), scaled))
}

/// Internal pressure (Pa) needed to inflate a thin-walled elastic sphere of
/// Young's modulus `e` (Pa), wall thickness `t0` (m), and radius `r0` (m) to
/// a radial strain `eps`, derated by a fabrication tolerance `delta`.
pub fn required_actuation_pressure(
    e: f64,
    eps: f64,
    t0: f64,
    r0: f64,
    delta: f64,
) -> Result<f64, MorphologyError> {
    for (name, value) in [("e", e), ("eps", eps), ("t0", t0)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(MorphologyError::NonPositive { name, value });
        }
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(MorphologyError::NonPositive {
            name: "r0",
            value: r0,
        });
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(MorphologyError::NonPositive {
            name: "1 - delta",
            value: 1.0 - delta,
        });
    }
    if eps >= r0 {
        return Err(MorphologyError::StrainExceedsRadius { r0, eps });
    }
    Ok(2.0 * e * eps * t0 * (1.0 - delta) / (r0 - eps))
}
