//! Lattice construction: one particle per voxel, one beam per face-adjacent
//! pair.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::genome::Shape;
use crate::morphology::{Coord, VoxelStructure};

use super::{SimError, SimParams};

/// Which lattice direction a beam runs along at rest; fixes its bending and
/// torsion reference axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LatticeAxis {
    X,
    Y,
    Z,
}

impl LatticeAxis {
    /// Rest direction of a beam with this axis.
    pub fn direction(self) -> Vector3<f64> {
        match self {
            LatticeAxis::X => Vector3::x(),
            LatticeAxis::Y => Vector3::y(),
            LatticeAxis::Z => Vector3::z(),
        }
    }

    /// A reference vector perpendicular to the rest direction, used to
    /// measure torsion between the endpoint frames.
    pub fn twist_reference(self) -> Vector3<f64> {
        match self {
            LatticeAxis::X => Vector3::z(),
            LatticeAxis::Y => Vector3::z(),
            LatticeAxis::Z => Vector3::x(),
        }
    }
}

/// Point mass with an orientation frame. Positions are cm, velocities cm/s,
/// masses g, rotational inertia g·cm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub angular_velocity: Vector3<f64>,
    pub mass: f64,
    pub rotational_inertia: f64,
}

/// Elastic link between two particles. `base_rest_length` is the unactuated
/// rest length (the mean of the endpoint voxels' baseline values); during
/// actuation the effective rest length is the mean of the endpoints'
/// instantaneous values, recomputed every step. Stiffnesses are in cgs
/// (dyn/cm for axial, erg for the angular terms) and derive from the
/// material's Young's modulus and the 1 cm² nominal cross-section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub particles: (usize, usize),
    pub base_rest_length: f64,
    pub axis: LatticeAxis,
    pub axial_stiffness: f64,
    pub bend_stiffness: f64,
    pub twist_stiffness: f64,
    pub axial_damping: f64,
    pub angular_damping: f64,
}

/// Full dynamic state: particles, beams, and the simulated clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub particles: Vec<Particle>,
    pub beams: Vec<Beam>,
    /// Seconds since construction.
    pub time: f64,
}

/// Build the initial state for a structure and shape.
///
/// Particles sit at lattice coordinates scaled by the pitch, then the whole
/// body is translated vertically so the lowest collision envelope just
/// touches the ground plane (no initial penetration, no initial drop). When
/// a settle phase will morph the shape in gradually, the as-built envelopes
/// are pitch-sized; with no settle phase the target shape applies at t = 0
/// and its own envelopes govern placement. Particle mass is density × the
/// nominal voxel volume and never changes, even when the shape departs from
/// nominal.
pub fn build_lattice(
    structure: &VoxelStructure,
    shape: &Shape,
    params: &SimParams,
) -> Result<SimState, SimError> {
    params.validate()?;
    coverage_check(structure, shape)?;

    let pitch = structure.lattice_pitch();
    // kg/m³ → g/cm³ is a factor 1e-3; nominal voxel volume = pitch³ cm³.
    let mass = params.material_density * 1.0e-3 * pitch.powi(3);
    // Solid cube about its center: I = m a² / 6 about any principal axis.
    let inertia = mass * pitch * pitch / 6.0;

    let cells: Vec<Coord> = structure.iter().collect();
    let b_of = |c: Coord| shape.get(c).expect("coverage checked");

    // Rigid drop-in shift: lowest envelope bottom lands exactly on z = 0.
    let initial_radius = |c: Coord| {
        if params.settle_duration > 0.0 {
            pitch / 2.0
        } else {
            b_of(c) / 2.0
        }
    };
    let lowest = cells
        .iter()
        .map(|&c| c.z as f64 * pitch - initial_radius(c))
        .fold(f64::INFINITY, f64::min);

    let particles: Vec<Particle> = cells
        .iter()
        .map(|&c| Particle {
            position: Vector3::new(
                c.x as f64 * pitch,
                c.y as f64 * pitch,
                c.z as f64 * pitch - lowest,
            ),
            velocity: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
            mass,
            rotational_inertia: inertia,
        })
        .collect();

    let index_of = |c: Coord| -> usize {
        cells.binary_search(&c).expect("cell from the same structure")
    };

    let e_cgs = params.youngs_modulus * 10.0; // Pa → dyn/cm²
    let area = pitch * pitch;
    let second_moment = pitch.powi(4) / 12.0;
    // St. Venant torsion constant for a square section, ≈ 0.1406 a⁴.
    let torsion_constant = 0.1406 * pitch.powi(4);
    let shear_modulus = e_cgs / 2.6; // ν = 0.3

    let beams = structure
        .adjacent_pairs()
        .into_iter()
        .map(|(a, b)| {
            let rest = (b_of(a) + b_of(b)) / 2.0;
            let axis = if b.x > a.x {
                LatticeAxis::X
            } else if b.y > a.y {
                LatticeAxis::Y
            } else {
                LatticeAxis::Z
            };
            let axial = e_cgs * area / rest;
            let bend = 3.0 * e_cgs * second_moment / rest;
            let twist = shear_modulus * torsion_constant / rest;
            let reduced_mass = mass / 2.0;
            let reduced_inertia = inertia / 2.0;
            Beam {
                particles: (index_of(a), index_of(b)),
                base_rest_length: rest,
                axis,
                axial_stiffness: axial,
                bend_stiffness: bend,
                twist_stiffness: twist,
                axial_damping: 2.0 * params.beam_damping_ratio * (axial * reduced_mass).sqrt(),
                angular_damping: 2.0
                    * params.beam_damping_ratio
                    * (bend * reduced_inertia).sqrt(),
            }
        })
        .collect();

    Ok(SimState {
        particles,
        beams,
        time: 0.0,
    })
}

/// Require `shape` to be defined for exactly the voxels of `structure`.
fn coverage_check(structure: &VoxelStructure, shape: &Shape) -> Result<(), SimError> {
    for c in structure.iter() {
        if shape.get(c).is_none() {
            return Err(SimError::ShapeMismatch {
                x: c.x,
                y: c.y,
                z: c.z,
            });
        }
    }
    if shape.len() != structure.len() {
        // Extra keys: report the first shape key outside the structure.
        let extra = shape
            .iter()
            .map(|(c, _)| c)
            .find(|&c| !structure.contains(c))
            .expect("length mismatch implies an extra key");
        return Err(SimError::ShapeMismatch {
            x: extra.x,
            y: extra.y,
            z: extra.z,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::{build_quadruped, QuadrupedSpec};
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;

    fn line(n: i32) -> VoxelStructure {
        let cells: BTreeSet<Coord> = (0..n).map(|x| Coord::new(x, 0, 0)).collect();
        VoxelStructure::with_unit_pitch(cells).unwrap()
    }

    #[test]
    fn two_voxel_line_has_one_unit_beam() {
        let s = line(2);
        let shape = Shape::uniform(&s, 1.0).unwrap();
        let state = build_lattice(&s, &shape, &SimParams::default()).unwrap();
        assert_eq!(state.particles.len(), 2);
        assert_eq!(state.beams.len(), 1);
        assert_relative_eq!(state.beams[0].base_rest_length, 1.0);
        assert_eq!(state.beams[0].axis, LatticeAxis::X);
        let d = state.particles[1].position - state.particles[0].position;
        assert_relative_eq!(d.norm(), 1.0);
    }

    #[test]
    fn mixed_rest_lengths_average_on_the_shared_beam() {
        let s = line(2);
        let mut values = std::collections::BTreeMap::new();
        values.insert(Coord::new(0, 0, 0), 1.0);
        values.insert(Coord::new(1, 0, 0), 2.0);
        let shape = Shape::new(values).unwrap();
        let state = build_lattice(&s, &shape, &SimParams::default()).unwrap();
        assert_relative_eq!(state.beams[0].base_rest_length, 1.5);
    }

    #[test]
    fn quadruped_lattice_counts() {
        let q = build_quadruped(&QuadrupedSpec::full()).unwrap();
        let shape = Shape::nominal(&q);
        let state = build_lattice(&q, &shape, &SimParams::default()).unwrap();
        assert_eq!(state.particles.len(), 140);

        // Brute-force pair scan as the beam-count oracle.
        let cells: Vec<Coord> = q.iter().collect();
        let mut expected = 0;
        for (i, a) in cells.iter().enumerate() {
            for b in cells.iter().skip(i + 1) {
                let d = (a.x - b.x).abs() + (a.y - b.y).abs() + (a.z - b.z).abs();
                let face = d == 1;
                if face {
                    expected += 1;
                }
            }
        }
        assert_eq!(state.beams.len(), expected);

        // Mass is density-scaled and constant: 1000 kg/m³ → 1 g per voxel.
        for p in &state.particles {
            assert_relative_eq!(p.mass, 1.0);
            assert_relative_eq!(p.rotational_inertia, 1.0 / 6.0);
        }
    }

    #[test]
    fn body_is_placed_touching_the_ground() {
        let q = build_quadruped(&QuadrupedSpec::full()).unwrap();
        let shape = Shape::nominal(&q);
        let state = build_lattice(&q, &shape, &SimParams::default()).unwrap();
        let min_gap = state
            .particles
            .iter()
            .map(|p| p.position.z - 0.5)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(min_gap, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn coverage_mismatch_is_reported() {
        let s = line(3);
        let smaller = line(2);
        let shape = Shape::uniform(&smaller, 1.0).unwrap();
        assert!(matches!(
            build_lattice(&s, &shape, &SimParams::default()),
            Err(SimError::ShapeMismatch { x: 2, y: 0, z: 0 })
        ));
        let bigger = Shape::uniform(&line(4), 1.0).unwrap();
        assert!(matches!(
            build_lattice(&s, &bigger, &SimParams::default()),
            Err(SimError::ShapeMismatch { x: 3, y: 0, z: 0 })
        ));
    }

    #[test]
    fn stiffness_scales_inversely_with_rest_length() {
        let s = line(2);
        let long = Shape::uniform(&s, 2.0).unwrap();
        let short = Shape::uniform(&s, 1.0).unwrap();
        let p = SimParams::default();
        let a = build_lattice(&s, &long, &p).unwrap().beams[0].axial_stiffness;
        let b = build_lattice(&s, &short, &p).unwrap().beams[0].axial_stiffness;
        assert_relative_eq!(a, b / 2.0, max_relative = 1e-12);
        // E = 1 MPa = 1e7 dyn/cm² over a 1 cm² section and 1 cm length.
        assert_relative_eq!(b, 1.0e7, max_relative = 1e-12);
    }
}
