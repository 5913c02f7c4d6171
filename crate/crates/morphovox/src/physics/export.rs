//! Trajectory export for offline rendering: a flat CSV of sampled particle
//! positions, and an OBJ sequence with one cube per voxel per frame.

use std::io::Write as _;
use std::path::Path;

use super::{Frame, SimError};

/// Write sampled frames as CSV with columns `frame,particle_id,x,y,z`
/// (positions in cm).
pub fn write_trajectory_csv(path: &Path, frames: &[Frame]) -> Result<(), std::io::Error> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["frame", "particle_id", "x", "y", "z"])?;
    for frame in frames {
        for (id, pos) in frame.positions.iter().enumerate() {
            writer.write_record([
                frame.step.to_string(),
                id.to_string(),
                format!("{}", pos[0]),
                format!("{}", pos[1]),
                format!("{}", pos[2]),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Write one OBJ file per frame into `dir` (`frame_000000.obj`, ...), each
/// containing an axis-aligned cube of side `cube_side` cm centered on every
/// particle. Returns the number of files written.
pub fn write_trajectory_obj_sequence(
    dir: &Path,
    frames: &[Frame],
    cube_side: f64,
) -> Result<usize, std::io::Error> {
    std::fs::create_dir_all(dir)?;
    let h = cube_side / 2.0;
    for (n, frame) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{n:06}.obj"));
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# frame {} t = {:.6} s", frame.step, frame.time)?;
        for pos in &frame.positions {
            for (sx, sy, sz) in CUBE_CORNERS {
                writeln!(
                    out,
                    "v {} {} {}",
                    pos[0] + sx * h,
                    pos[1] + sy * h,
                    pos[2] + sz * h
                )?;
            }
        }
        for i in 0..frame.positions.len() {
            let base = (i * 8) as u64;
            for quad in CUBE_FACES {
                writeln!(
                    out,
                    "f {} {} {} {}",
                    base + quad[0],
                    base + quad[1],
                    base + quad[2],
                    base + quad[3]
                )?;
            }
        }
        out.flush()?;
    }
    Ok(frames.len())
}

/// Corner signs of a unit cube, in the vertex order the faces below index.
const CUBE_CORNERS: [(f64, f64, f64); 8] = [
    (-1.0, -1.0, -1.0),
    (1.0, -1.0, -1.0),
    (1.0, 1.0, -1.0),
    (-1.0, 1.0, -1.0),
    (-1.0, -1.0, 1.0),
    (1.0, -1.0, 1.0),
    (1.0, 1.0, 1.0),
    (-1.0, 1.0, 1.0),
];

/// Quad faces as 1-based indices into the corner list.
const CUBE_FACES: [[u64; 4]; 6] = [
    [1, 2, 3, 4], // bottom
    [5, 8, 7, 6], // top
    [1, 5, 6, 2], // front
    [2, 6, 7, 3], // right
    [3, 7, 8, 4], // back
    [4, 8, 5, 1], // left
];

/// Convenience: prevent silent misuse when callers pass a summary without
/// frames.
pub fn frames_or_error(frames: Option<&[Frame]>) -> Result<&[Frame], SimError> {
    frames.ok_or_else(|| SimError::BadParams("trajectory export needs recorded frames".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_frames() -> Vec<Frame> {
        vec![
            Frame {
                step: 0,
                time: 0.0,
                positions: vec![[0.0, 0.0, 0.5], [1.0, 0.0, 0.5]],
            },
            Frame {
                step: 100,
                time: 0.05,
                positions: vec![[0.1, 0.0, 0.5], [1.1, 0.0, 0.5]],
            },
        ]
    }

    #[test]
    fn csv_has_one_row_per_particle_per_frame() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectory.csv");
        write_trajectory_csv(&path, &sample_frames()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "frame,particle_id,x,y,z");
        assert_eq!(lines.count(), 4);
        assert!(text.contains("100,1,1.1,0,0.5"));
    }

    #[test]
    fn obj_sequence_writes_cube_meshes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("objs");
        let n = write_trajectory_obj_sequence(&out, &sample_frames(), 1.0).unwrap();
        assert_eq!(n, 2);
        let first = std::fs::read_to_string(out.join("frame_000000.obj")).unwrap();
        // 2 particles × 8 vertices and × 6 faces.
        assert_eq!(first.lines().filter(|l| l.starts_with("v ")).count(), 16);
        assert_eq!(first.lines().filter(|l| l.starts_with("f ")).count(), 12);
        assert!(out.join("frame_000001.obj").exists());
    }
}
