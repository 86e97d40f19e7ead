//! Waypoint paths: generation on the reachable set and CSV exchange.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Pose;
use crate::plant::{forward, ActuationVector, LoadSpec, PlantConfig, NUM_CHAMBERS, PRESSURE_MAX};

pub const WAYPOINT_HEADER: [&str; 6] = ["x", "y", "z", "yaw", "pitch", "roll"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathShape {
    Circle,
    FigureEight,
}

impl std::str::FromStr for PathShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Self::Circle),
            "figure-eight" | "eight" | "8" => Ok(Self::FigureEight),
            other => Err(Error::Config(format!("unknown path shape '{other}'"))),
        }
    }
}

/// Horizontal planar curve sampled at `n` points, closed (the start is not
/// repeated).
pub fn planar_curve(shape: PathShape, centre: [f64; 3], radius: f64, n: usize) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            let (dx, dy) = match shape {
                PathShape::Circle => (radius * t.cos(), radius * t.sin()),
                // lemniscate of Gerono, lobes along x
                PathShape::FigureEight => (radius * t.sin(), radius * t.sin() * t.cos()),
            };
            Vector3::new(centre[0] + dx, centre[1] + dy, centre[2])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSpec {
    pub shape: PathShape,
    pub centre: [f64; 3],
    pub radius: f64,
    pub waypoints: usize,
    /// Pressure bound the waypoint solutions must respect (kPa).
    pub pressure_margin: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            shape: PathShape::Circle,
            centre: [0.0, 0.0, 300.0],
            radius: 80.0,
            waypoints: 60,
            pressure_margin: 0.9 * PRESSURE_MAX,
        }
    }
}

/// Pressures placing the end pad at `target` on the unloaded ideal plant.
///
/// Damped Gauss-Newton on position from `q0`; orientation is whatever the
/// solution carries. Fails when the point is out of reach within `bound`.
pub fn position_ik(
    cfg: &PlantConfig,
    target: &Vector3<f64>,
    q0: &ActuationVector,
    bound: f64,
) -> Result<(ActuationVector, Pose)> {
    let load = LoadSpec::weightless();
    let pos = |q: &ActuationVector| -> Result<Vector3<f64>> { Ok(forward(cfg, q, &load)?.1.translation()) };
    let mut q = *q0;
    let mu = 1e-2;
    for _ in 0..200 {
        let p = pos(&q)?;
        let r = target - p;
        if r.norm() < 1e-4 {
            let pose = forward(cfg, &q, &load)?.1;
            return Ok((q, pose));
        }
        let mut j = DMatrix::zeros(3, NUM_CHAMBERS);
        for c in 0..NUM_CHAMBERS {
            let (mut hi, mut lo) = (q, q);
            hi.0[c] += 0.05;
            lo.0[c] -= 0.05;
            let d = (pos(&hi)? - pos(&lo)?) / 0.1;
            j.set_column(c, &d);
        }
        let jt = j.transpose();
        let mut a = &jt * &j;
        for k in 0..NUM_CHAMBERS {
            a[(k, k)] += mu;
        }
        let rhs = &jt * DVector::from_column_slice(r.as_slice());
        let dq = a
            .cholesky()
            .ok_or_else(|| Error::Numerical("singular position Jacobian".into()))?
            .solve(&rhs);
        for k in 0..NUM_CHAMBERS {
            q.0[k] = (q.0[k] + dq[k]).clamp(-bound, bound);
        }
    }
    Err(Error::Numerical(format!(
        "waypoint ({:.1}, {:.1}, {:.1}) not reachable within +-{bound} kPa",
        target.x, target.y, target.z
    )))
}

/// Reachable waypoint poses along the requested curve.
pub fn generate_path(cfg: &PlantConfig, spec: &PathSpec) -> Result<Vec<Pose>> {
    if spec.waypoints == 0 || !(spec.radius > 0.0) {
        return Err(Error::Config("path needs waypoints >= 1 and radius > 0".into()));
    }
    let mut q = ActuationVector::zeros();
    let mut out = Vec::with_capacity(spec.waypoints);
    for p in planar_curve(spec.shape, spec.centre, spec.radius, spec.waypoints) {
        let (qn, pose) = position_ik(cfg, &p, &q, spec.pressure_margin)?;
        q = qn;
        out.push(pose);
    }
    Ok(out)
}

pub fn write_waypoints<W: Write>(poses: &[Pose], mut out: W, comment: &[String]) -> Result<()> {
    let io = |e| Error::io("<waypoints>", e);
    for c in comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    writeln!(out, "{}", WAYPOINT_HEADER.join(",")).map_err(io)?;
    for p in poses {
        let f: Vec<String> = p.to_array().iter().map(f64::to_string).collect();
        writeln!(out, "{}", f.join(",")).map_err(io)?;
    }
    Ok(())
}

pub fn save_waypoints(poses: &[Pose], path: &Path, comment: &[String]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_waypoints(poses, std::io::BufWriter::new(file), comment)
}

pub fn read_waypoints<R: Read>(input: R, source_name: &str) -> Result<Vec<Pose>> {
    let mut text = String::new();
    let mut input = input;
    input
        .read_to_string(&mut text)
        .map_err(|e| Error::io(source_name, e))?;
    let mut header_seen = false;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if fields != WAYPOINT_HEADER {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected header {}", WAYPOINT_HEADER.join(",")),
                ));
            }
            header_seen = true;
            continue;
        }
        if fields.len() != 6 {
            return Err(Error::parse(source_name, line_no, format!("expected 6 fields, got {}", fields.len())));
        }
        let mut v = [0.0; 6];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(source_name, line_no, format!("bad number '{f}'")))?;
        }
        out.push(Pose::from_array(v));
    }
    if !header_seen {
        return Err(Error::parse(source_name, 1, "missing header"));
    }
    if out.is_empty() {
        return Err(Error::Empty("waypoint list"));
    }
    Ok(out)
}

pub fn load_waypoints(path: &Path) -> Result<Vec<Pose>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_waypoints(file, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curves_lie_in_a_horizontal_plane() {
        let c = planar_curve(PathShape::Circle, [1.0, 2.0, 300.0], 80.0, 60);
        assert_eq!(c.len(), 60);
        for p in &c {
            assert!(((p.x - 1.0).hypot(p.y - 2.0) - 80.0).abs() < 1e-9);
            assert_eq!(p.z, 300.0);
        }
        let e = planar_curve(PathShape::FigureEight, [0.0, 0.0, 300.0], 80.0, 60);
        // crosses the centre twice
        assert_eq!(e.iter().filter(|p| p.x.hypot(p.y) < 1e-9).count(), 2);
        assert!(e.iter().all(|p| p.x.abs() <= 80.0 && p.y.abs() <= 40.0));
    }

    #[test]
    fn generated_waypoints_are_reachable() {
        let cfg = PlantConfig::default();
        let spec = PathSpec {
            waypoints: 12,
            ..Default::default()
        };
        let poses = generate_path(&cfg, &spec).unwrap();
        let targets = planar_curve(spec.shape, spec.centre, spec.radius, 12);
        for (p, t) in poses.iter().zip(&targets) {
            assert!((p.translation() - t).norm() < 1e-3);
        }
        let far = PathSpec {
            radius: 2000.0,
            waypoints: 4,
            ..Default::default()
        };
        assert!(generate_path(&cfg, &far).is_err());
        assert!(generate_path(&cfg, &PathSpec { waypoints: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn waypoint_csv_round_trip() {
        let poses = vec![
            Pose::from_array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            Pose::from_array([-0.1, 1e-17, 330.0, 179.9, -45.5, 0.3]),
        ];
        let mut buf = Vec::new();
        write_waypoints(&poses, &mut buf, &["note".into()]).unwrap();
        let back = read_waypoints(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, poses);
    }

    #[test]
    fn malformed_waypoints_report_lines() {
        let err = read_waypoints("x,y,z,yaw,pitch,roll\n1,2,3,4,5\n".as_bytes(), "p.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = read_waypoints("x,y,z,yaw,pitch,roll\n1,2,3,4,5,abc\n".as_bytes(), "p.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = read_waypoints("1,2,3,4,5,6\n".as_bytes(), "p.csv").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(read_waypoints("x,y,z,yaw,pitch,roll\n".as_bytes(), "p.csv").is_err());
        assert_eq!("8".parse::<PathShape>().unwrap(), PathShape::FigureEight);
        assert!("square".parse::<PathShape>().is_err());
    }
}
