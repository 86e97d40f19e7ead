//! Constant-curvature geometry for one segment and frame bookkeeping for the
//! two-segment chain.
//!
//! The base frame sits at the ceiling mount with `z` pointing down along the
//! hanging arm. Each segment is a circular arc parameterised by curvature,
//! bending-plane angle and arc length; rigid pads of fixed half thickness sit
//! between the arcs.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest chamber length reachable by a bellow (mm).
pub const CHAMBER_LEN_MIN: f64 = 70.0;
/// Longest chamber length reachable by a bellow (mm).
pub const CHAMBER_LEN_MAX: f64 = 220.0;

/// Below this curvature (1/mm) a segment is treated as exactly straight.
const STRAIGHT_KAPPA: f64 = 1e-8;
/// Below this bend angle (rad) the arc map switches to its Taylor series.
const SERIES_BEND: f64 = 1e-4;
/// Pitch distance from +-90 deg (rad) treated as gimbal lock.
const GIMBAL_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcParams {
    /// Curvature (1/mm), never negative.
    pub kappa: f64,
    /// Bending-plane angle (rad) in (-pi, pi].
    pub phi: f64,
    /// Arc length of the centre line (mm).
    pub arc_len: f64,
}

impl ArcParams {
    pub fn straight(arc_len: f64) -> Self {
        Self {
            kappa: 0.0,
            phi: 0.0,
            arc_len,
        }
    }

    /// Total bend angle of the arc (rad).
    pub fn bend(&self) -> f64 {
        self.kappa * self.arc_len
    }
}

/// Proper rigid motion: `p' = rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Largest entry of `R^T R - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// ZYX intrinsic Euler angles in radians: `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerZyx {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Set when pitch sits on +-90 deg; roll is then pinned to zero and the
    /// whole yaw/roll coupling is reported through yaw.
    pub gimbal_lock: bool,
}

impl EulerZyx {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self {
            yaw,
            pitch,
            roll,
            gimbal_lock: false,
        }
    }

    pub fn to_rotation(&self) -> Matrix3<f64> {
        euler_to_rotation(self.yaw, self.pitch, self.roll)
    }
}

pub fn euler_to_rotation(yaw: f64, pitch: f64, roll: f64) -> Matrix3<f64> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Decomposes an orthonormal rotation into ZYX Euler angles.
pub fn rotation_to_euler(r: &Matrix3<f64>) -> EulerZyx {
    let sp = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if (PI / 2.0 - pitch.abs()) < GIMBAL_EPS {
        // R01 = -sin(yaw -/+ roll), R11 = cos(yaw -/+ roll); pin roll = 0.
        let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
        return EulerZyx {
            yaw,
            pitch,
            roll: 0.0,
            gimbal_lock: true,
        };
    }
    EulerZyx {
        yaw: r[(1, 0)].atan2(r[(0, 0)]),
        pitch,
        roll: r[(2, 1)].atan2(r[(2, 2)]),
        gimbal_lock: false,
    }
}

/// End-effector pose: translation in mm, ZYX Euler angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Pose {
    pub const DIM: usize = 6;

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            x: a[0],
            y: a[1],
            z: a[2],
            yaw: a[3],
            pitch: a[4],
            roll: a[5],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let a: [f64; 6] = v.try_into().map_err(|_| Error::Dimension {
            expected: 6,
            actual: v.len(),
        })?;
        Ok(Self::from_array(a))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.yaw, self.pitch, self.roll]
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn angles_deg(&self) -> [f64; 3] {
        [self.yaw, self.pitch, self.roll]
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let e = rotation_to_euler(&t.rotation);
        Self {
            x: t.translation.x,
            y: t.translation.y,
            z: t.translation.z,
            yaw: e.yaw.to_degrees(),
            pitch: e.pitch.to_degrees(),
            roll: e.roll.to_degrees(),
        }
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::new(
            euler_to_rotation(
                self.yaw.to_radians(),
                self.pitch.to_radians(),
                self.roll.to_radians(),
            ),
            self.translation(),
        )
    }

    /// Euclidean translation distance (mm).
    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.translation() - other.translation()).norm()
    }
}

/// Wraps an angle difference in degrees into (-180, 180].
pub fn wrap_deg(a: f64) -> f64 {
    let mut w = a.rem_euclid(360.0);
    if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// One spring: mount angle on the proximal pad and on the distal pad (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringMount {
    pub proximal_angle: f64,
    pub distal_angle: f64,
}

/// Mounting geometry shared by both segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentGeometry {
    /// Radius of the circle the three chamber axes sit on (mm).
    pub chamber_radius: f64,
    /// Radius of the circle the spring mounts sit on (mm).
    pub spring_radius: f64,
    /// Chamber angles around the segment axis (rad).
    pub chamber_angles: [f64; 3],
    /// Six springs, ordered pair by pair.
    pub spring_mounts: [SpringMount; 6],
    pub pad_half_thickness: f64,
}

impl Default for SegmentGeometry {
    fn default() -> Self {
        Self::with_crossing(60.0, 55.0, 10.0, 40f64.to_radians())
    }
}

impl SegmentGeometry {
    /// Three 'X' spring pairs centred between the chambers; within each pair
    /// the two springs cross by `crossing` (rad) between proximal and distal pads.
    pub fn with_crossing(
        chamber_radius: f64,
        spring_radius: f64,
        pad_half_thickness: f64,
        crossing: f64,
    ) -> Self {
        let step = 2.0 * PI / 3.0;
        let chamber_angles = [0.0, step, 2.0 * step];
        let half = crossing / 2.0;
        let mut spring_mounts = [SpringMount {
            proximal_angle: 0.0,
            distal_angle: 0.0,
        }; 6];
        for pair in 0..3 {
            let centre = PI / 3.0 + pair as f64 * step;
            spring_mounts[2 * pair] = SpringMount {
                proximal_angle: centre - half,
                distal_angle: centre + half,
            };
            spring_mounts[2 * pair + 1] = SpringMount {
                proximal_angle: centre + half,
                distal_angle: centre - half,
            };
        }
        Self {
            chamber_radius,
            spring_radius,
            chamber_angles,
            spring_mounts,
            pad_half_thickness,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chamber_radius > 0.0 && self.spring_radius > 0.0 && self.pad_half_thickness >= 0.0) {
            return Err(Error::Config(
                "segment radii must be positive and pad thickness non-negative".into(),
            ));
        }
        let step = 2.0 * PI / 3.0;
        for i in 0..3 {
            let j = (i + 1) % 3;
            let gap = (self.chamber_angles[j] - self.chamber_angles[i]).rem_euclid(2.0 * PI);
            if (gap - step).abs() > 1e-9 {
                return Err(Error::Config("chamber angles must be spaced by 120 degrees".into()));
            }
        }
        for m in &self.spring_mounts {
            if (m.proximal_angle - m.distal_angle).abs() < 1e-12 {
                return Err(Error::Config("spring mounts must cross between pads".into()));
            }
        }
        Ok(())
    }

    fn pad_offset(&self) -> RigidTransform {
        RigidTransform::from_translation(Vector3::new(0.0, 0.0, self.pad_half_thickness))
    }

    /// Spring mount points on a pad face, in that face's frame.
    pub fn mount_point(&self, angle: f64) -> Vector3<f64> {
        Vector3::new(self.spring_radius * angle.cos(), self.spring_radius * angle.sin(), 0.0)
    }
}

/// Closed-form arc parameters from the three chamber lengths of one segment.
///
/// Chambers sit at 0, 120 and 240 degrees; `phi` points towards the
/// shortest chamber, which lies on the inside of the bend.
pub fn chamber_lengths_to_arc(lengths: [f64; 3], chamber_radius: f64) -> Result<ArcParams> {
    for &l in &lengths {
        if !(CHAMBER_LEN_MIN..=CHAMBER_LEN_MAX).contains(&l) || !l.is_finite() {
            return Err(Error::Domain {
                quantity: "chamber length",
                value: l,
                min: CHAMBER_LEN_MIN,
                max: CHAMBER_LEN_MAX,
            });
        }
    }
    if !(chamber_radius > 0.0) {
        return Err(Error::Domain {
            quantity: "chamber radius",
            value: chamber_radius,
            min: f64::MIN_POSITIVE,
            max: f64::INFINITY,
        });
    }
    let [l1, l2, l3] = lengths;
    let sum = l1 + l2 + l3;
    // l1^2+l2^2+l3^2-l1l2-l2l3-l1l3 in a form that is exactly zero for equal lengths
    let disc = 0.5 * ((l1 - l2).powi(2) + (l2 - l3).powi(2) + (l1 - l3).powi(2));
    let kappa = 2.0 * disc.sqrt() / (chamber_radius * sum);
    let phi = if kappa == 0.0 {
        0.0
    } else {
        let p = (3f64.sqrt() * (l3 - l2)).atan2(l2 + l3 - 2.0 * l1);
        if p <= -PI {
            PI
        } else {
            p
        }
    };
    Ok(ArcParams {
        kappa,
        phi,
        arc_len: sum / 3.0,
    })
}

/// Frame at the distal end of an arc relative to its proximal end.
pub fn arc_to_transform(a: &ArcParams) -> RigidTransform {
    if a.kappa < STRAIGHT_KAPPA {
        return RigidTransform::from_translation(Vector3::new(0.0, 0.0, a.arc_len));
    }
    let theta = a.kappa * a.arc_len;
    let l = a.arc_len;
    let (x, z) = if theta < SERIES_BEND {
        let t2 = theta * theta;
        (l * (theta / 2.0 - theta * t2 / 24.0), l * (1.0 - t2 / 6.0))
    } else {
        ((1.0 - theta.cos()) / a.kappa, theta.sin() / a.kappa)
    };
    let rz = rot_z(a.phi);
    RigidTransform {
        rotation: rz * rot_y(theta) * rz.transpose(),
        translation: rz * Vector3::new(x, 0.0, z),
    }
}

/// Frames of the two-segment chain, from the ceiling down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainFrames {
    pub base: RigidTransform,
    /// Lower face of the base pad, where segment 1 starts.
    pub seg1_proximal: RigidTransform,
    /// Upper face of the middle pad, where segment 1 ends.
    pub seg1_distal: RigidTransform,
    pub mid_pad: RigidTransform,
    pub seg2_proximal: RigidTransform,
    pub seg2_distal: RigidTransform,
    pub end_pad: RigidTransform,
}

pub fn chain_frames(arc1: &ArcParams, arc2: &ArcParams, geometry: &SegmentGeometry) -> ChainFrames {
    let offset = geometry.pad_offset();
    let base = RigidTransform::identity();
    let seg1_proximal = base * offset;
    let seg1_distal = seg1_proximal * arc_to_transform(arc1);
    let mid_pad = seg1_distal * offset;
    let seg2_proximal = mid_pad * offset;
    let seg2_distal = seg2_proximal * arc_to_transform(arc2);
    let end_pad = seg2_distal * offset;
    ChainFrames {
        base,
        seg1_proximal,
        seg1_distal,
        mid_pad,
        seg2_proximal,
        seg2_distal,
        end_pad,
    }
}

/// Lengths of the six springs spanning one segment, given the two pad faces.
pub fn spring_lengths(
    geometry: &SegmentGeometry,
    proximal: &RigidTransform,
    distal: &RigidTransform,
) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (len, m) in out.iter_mut().zip(&geometry.spring_mounts) {
        let a = proximal.transform_point(&geometry.mount_point(m.proximal_angle));
        let b = distal.transform_point(&geometry.mount_point(m.distal_angle));
        *len = (b - a).norm();
    }
    out
}
