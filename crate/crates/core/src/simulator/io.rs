//! Line-oriented text format for ground truth and measurements.
//!
//! Every file starts with a fixed header line. Records are one per line, fields
//! separated by single spaces, floats written with 17 significant digits so that
//! a write/parse round trip is bit-exact. Lines starting with `#` are comments.
//! Rotations are stored as the 9 row-major entries of the rotation matrix.
//!
//! Ground truth records:
//!
//! ```text
//! plane <i> <a> <b> <c> <d>
//! point <i> <x> <y> <z> <plane index or -1>
//! quadric <i> <tx> <ty> <tz> <r00> .. <r22> <a> <b> <c> <support plane>
//! pose <frame> <timestamp> <tx> <ty> <tz> <r00> .. <r22>
//! ```
//!
//! Measurement records (`frames` must precede per-frame records):
//!
//! ```text
//! camera <fx> <fy> <cx> <cy>
//! frames <count>
//! pixel <frame> <point> <u> <v>
//! plane <frame> <plane> <a> <b> <c> <d>
//! conic <frame> <quadric> <c00> <c01> <c02> <c11> <c12> <c22>
//! odometry <frame> <tx> <ty> <tz> <r00> .. <r22>
//! ```

use std::fmt::Write;

use nalgebra::{Matrix3, Vector2, Vector3, Vector4};

use super::{FrameObservations, GroundTruth, MeasurementSet, SimError};
use crate::geometry::{
    plane_normalize, CameraIntrinsics, DualConic, DualQuadric, EllipsoidShape, PlaneLandmark, Pose,
};

pub const GROUND_TRUTH_HEADER: &str = "# structslam ground-truth v1";
pub const MEASUREMENTS_HEADER: &str = "# structslam measurements v1";

fn num(out: &mut String, v: f64) {
    write!(out, " {v:.16e}").expect("writing to a String cannot fail");
}

fn pose_fields(out: &mut String, p: &Pose) {
    for v in p.translation.iter() {
        num(out, *v);
    }
    let r = p.rotation.matrix();
    for i in 0..3 {
        for j in 0..3 {
            num(out, r[(i, j)]);
        }
    }
}

pub fn write_ground_truth(gt: &GroundTruth) -> String {
    let mut out = String::new();
    out.push_str(GROUND_TRUTH_HEADER);
    out.push('\n');
    for (i, p) in gt.planes.iter().enumerate() {
        out.push_str(&format!("plane {i}"));
        for v in p.coeffs().iter() {
            num(&mut out, *v);
        }
        out.push('\n');
    }
    for (i, (x, plane)) in gt.points.iter().zip(&gt.point_planes).enumerate() {
        out.push_str(&format!("point {i}"));
        for v in x.iter() {
            num(&mut out, *v);
        }
        let plane = plane.map_or(-1, |p| p as i64);
        out.push_str(&format!(" {plane}\n"));
    }
    for (i, (q, support)) in gt.quadrics.iter().zip(&gt.supports).enumerate() {
        out.push_str(&format!("quadric {i}"));
        pose_fields(&mut out, &q.pose);
        for v in q.shape.semi_axes().iter() {
            num(&mut out, *v);
        }
        out.push_str(&format!(" {support}\n"));
    }
    for (i, (p, t)) in gt.poses.iter().zip(&gt.timestamps).enumerate() {
        out.push_str(&format!("pose {i}"));
        num(&mut out, *t);
        pose_fields(&mut out, p);
        out.push('\n');
    }
    out
}

pub fn write_measurements(m: &MeasurementSet) -> String {
    let mut out = String::new();
    out.push_str(MEASUREMENTS_HEADER);
    out.push('\n');
    out.push_str("camera");
    for v in [m.camera.fx, m.camera.fy, m.camera.cx, m.camera.cy] {
        num(&mut out, v);
    }
    out.push_str(&format!("\nframes {}\n", m.frames.len()));
    for (f, frame) in m.frames.iter().enumerate() {
        if let Some(odo) = &frame.odometry {
            out.push_str(&format!("odometry {f}"));
            pose_fields(&mut out, odo);
            out.push('\n');
        }
        for (i, u) in &frame.pixels {
            out.push_str(&format!("pixel {f} {i}"));
            num(&mut out, u.x);
            num(&mut out, u.y);
            out.push('\n');
        }
        for (i, p) in &frame.planes {
            out.push_str(&format!("plane {f} {i}"));
            for v in p.coeffs().iter() {
                num(&mut out, *v);
            }
            out.push('\n');
        }
        for (i, c) in &frame.conics {
            out.push_str(&format!("conic {f} {i}"));
            let c = c.matrix();
            for (r, s) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
                num(&mut out, c[(r, s)]);
            }
            out.push('\n');
        }
    }
    out
}

/// Tokenized record with position-aware error reporting.
struct Record<'a> {
    line: usize,
    fields: Vec<&'a str>,
}

impl<'a> Record<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, SimError> {
        Err(SimError::Parse {
            line: self.line,
            message: message.into(),
        })
    }

    fn expect_len(&self, n: usize) -> Result<(), SimError> {
        if self.fields.len() != n {
            return self.err(format!(
                "'{}' record needs {} fields, found {}",
                self.fields[0],
                n - 1,
                self.fields.len() - 1
            ));
        }
        Ok(())
    }

    fn float(&self, i: usize) -> Result<f64, SimError> {
        match self.fields[i].parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => self.err(format!("field {i} is not a finite number: '{}'", self.fields[i])),
        }
    }

    fn index(&self, i: usize) -> Result<usize, SimError> {
        self.fields[i]
            .parse::<usize>()
            .or_else(|_| self.err(format!("field {i} is not an index: '{}'", self.fields[i])))
    }

    fn floats<const N: usize>(&self, start: usize) -> Result<[f64; N], SimError> {
        let mut out = [0.0; N];
        for (k, v) in out.iter_mut().enumerate() {
            *v = self.float(start + k)?;
        }
        Ok(out)
    }

    fn pose(&self, start: usize) -> Result<Pose, SimError> {
        let t: [f64; 3] = self.floats(start)?;
        let r: [f64; 9] = self.floats(start + 3)?;
        Pose::from_matrix(Matrix3::from_row_slice(&r), Vector3::from(t))
            .or_else(|e| self.err(e.to_string()))
    }

    fn plane(&self, start: usize) -> Result<PlaneLandmark, SimError> {
        let c: [f64; 4] = self.floats(start)?;
        plane_normalize(&Vector4::from(c)).or_else(|e| self.err(e.to_string()))
    }

    /// Checks that records of one kind arrive with consecutive indices.
    fn sequential(&self, i: usize, expected: usize) -> Result<(), SimError> {
        if i != expected {
            return self.err(format!("expected index {expected}, found {i}"));
        }
        Ok(())
    }
}

fn records<'a>(text: &'a str, header: &str) -> Result<Vec<Record<'a>>, SimError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == header => {}
        _ => {
            return Err(SimError::Parse {
                line: 1,
                message: format!("missing header '{header}'"),
            })
        }
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(n, l)| Record {
            line: n + 1,
            fields: l.split_whitespace().collect(),
        })
        .collect())
}

pub fn parse_ground_truth(text: &str) -> Result<GroundTruth, SimError> {
    let mut gt = GroundTruth {
        points: vec![],
        point_planes: vec![],
        planes: vec![],
        quadrics: vec![],
        supports: vec![],
        poses: vec![],
        timestamps: vec![],
    };
    let mut last_line = 1;
    for r in records(text, GROUND_TRUTH_HEADER)? {
        last_line = r.line;
        match r.fields[0] {
            "plane" => {
                r.expect_len(6)?;
                r.sequential(r.index(1)?, gt.planes.len())?;
                gt.planes.push(r.plane(2)?);
            }
            "point" => {
                r.expect_len(6)?;
                r.sequential(r.index(1)?, gt.points.len())?;
                gt.points.push(Vector3::from(r.floats::<3>(2)?));
                gt.point_planes.push(match r.fields[5] {
                    "-1" => None,
                    _ => Some(r.index(5)?),
                });
            }
            "quadric" => {
                r.expect_len(18)?;
                r.sequential(r.index(1)?, gt.quadrics.len())?;
                let pose = r.pose(2)?;
                let axes: [f64; 3] = r.floats(14)?;
                let shape = EllipsoidShape::from_vector(Vector3::from(axes)).or_else(|e| r.err(e.to_string()))?;
                gt.quadrics.push(DualQuadric::new(pose, shape));
                gt.supports.push(r.index(17)?);
            }
            "pose" => {
                r.expect_len(15)?;
                r.sequential(r.index(1)?, gt.poses.len())?;
                let t = r.float(2)?;
                if gt.timestamps.last().is_some_and(|prev| t <= *prev) {
                    return r.err("timestamps must increase");
                }
                gt.timestamps.push(t);
                gt.poses.push(r.pose(3)?);
            }
            other => return r.err(format!("unknown record '{other}'")),
        }
    }
    let plane_ok = |p: &usize| *p < gt.planes.len();
    if !gt.point_planes.iter().flatten().all(plane_ok) || !gt.supports.iter().all(plane_ok) {
        return Err(SimError::Parse {
            line: last_line,
            message: "reference to an undefined plane".into(),
        });
    }
    Ok(gt)
}

pub fn parse_measurements(text: &str) -> Result<MeasurementSet, SimError> {
    let mut camera = None;
    let mut frames: Option<Vec<FrameObservations>> = None;
    for r in records(text, MEASUREMENTS_HEADER)? {
        let frame_of = |frames: &mut Option<Vec<FrameObservations>>| -> Result<usize, SimError> {
            let f = r.index(1)?;
            match frames {
                Some(v) if f < v.len() => Ok(f),
                Some(_) => r.err(format!("frame {f} out of range")),
                None => r.err("'frames' record must come first"),
            }
        };
        match r.fields[0] {
            "camera" => {
                r.expect_len(5)?;
                let [fx, fy, cx, cy] = r.floats(1)?;
                camera = Some(CameraIntrinsics::new(fx, fy, cx, cy).or_else(|e| r.err(e.to_string()))?);
            }
            "frames" => {
                r.expect_len(2)?;
                frames = Some(vec![FrameObservations::default(); r.index(1)?]);
            }
            "pixel" => {
                r.expect_len(5)?;
                let f = frame_of(&mut frames)?;
                let [u, v] = r.floats(3)?;
                let i = r.index(2)?;
                frames.as_mut().expect("checked")[f].pixels.push((i, Vector2::new(u, v)));
            }
            "plane" => {
                r.expect_len(7)?;
                let f = frame_of(&mut frames)?;
                let (i, p) = (r.index(2)?, r.plane(3)?);
                frames.as_mut().expect("checked")[f].planes.push((i, p));
            }
            "conic" => {
                r.expect_len(9)?;
                let f = frame_of(&mut frames)?;
                let [a, b, c, d, e, g] = r.floats(3)?;
                let m = Matrix3::new(a, b, c, b, d, e, c, e, g);
                let i = r.index(2)?;
                frames.as_mut().expect("checked")[f].conics.push((i, DualConic::new(m)));
            }
            "odometry" => {
                r.expect_len(14)?;
                let f = frame_of(&mut frames)?;
                if f == 0 {
                    return r.err("the first frame has no odometry");
                }
                let odo = r.pose(2)?;
                frames.as_mut().expect("checked")[f].odometry = Some(odo);
            }
            other => return r.err(format!("unknown record '{other}'")),
        }
    }
    let missing = |what: &str| SimError::Parse {
        line: 1,
        message: format!("missing '{what}' record"),
    };
    let camera = camera.ok_or_else(|| missing("camera"))?;
    let frames = frames.ok_or_else(|| missing("frames"))?;
    if let Some(f) = frames.iter().skip(1).position(|fr| fr.odometry.is_none()) {
        return Err(SimError::Parse {
            line: 1,
            message: format!("frame {} has no odometry", f + 1),
        });
    }
    Ok(MeasurementSet { camera, frames })
}
