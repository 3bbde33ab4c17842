//! TUM RGB-D benchmark trajectory files: `timestamp tx ty tz qx qy qz qw` per line.

use std::fmt::Write;

use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};

use super::{EvalError, Trajectory};
use crate::geometry::Pose;

/// Quaternions whose norm is this far from 1 are rejected rather than silently renormalized.
const QUATERNION_NORM_TOL: f64 = 1e-3;

pub fn parse_tum(text: &str) -> Result<Trajectory, EvalError> {
    let mut stamps = Vec::new();
    let mut poses = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let err = |message: String| EvalError::Parse { line, message };
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 8];
        for (k, f) in fields.iter().enumerate() {
            v[k] = match f.parse::<f64>() {
                Ok(x) if x.is_finite() => x,
                _ => return Err(err(format!("field {} is not a finite number: '{f}'", k + 1))),
            };
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(err(format!("quaternion norm {} is not 1", q.norm())));
        }
        if let Some(&prev) = stamps.last() {
            if v[0] <= prev {
                return Err(err(format!("timestamp {} does not increase", fields[0])));
            }
        }
        let rotation: Rotation3<f64> = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        stamps.push(v[0]);
        poses.push(Pose::new(rotation, Vector3::new(v[1], v[2], v[3])));
    }
    Trajectory::new(stamps, poses)
}

/// Shortest round-trip decimal representation of every value.
pub fn write_tum(trajectory: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in trajectory.stamps().iter().zip(trajectory.poses()) {
        let q = UnitQuaternion::from_rotation_matrix(&p.rotation);
        let x = p.translation;
        writeln!(out, "{t} {} {} {} {} {} {} {}", x.x, x.y, x.z, q.i, q.j, q.k, q.w)
            .expect("writing to a String cannot fail");
    }
    out
}
