//! Rigid-body pose algebra.
//!
//! Poses are proper rigid transforms stored as a rotation matrix plus a
//! translation in metres. The session frames used throughout the crate are
//! gravity aligned: `+y` is up. Reference orientations built from a compass
//! heading use the column layout `(x = magnetic north, y = up, z = east)`.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Rot3 = Matrix3<f64>;

/// Maximum tolerated deviation from orthonormality / unit determinant.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Drift beyond which composed rotations are re-orthonormalized.
const DRIFT_TOLERANCE: f64 = 1e-12;

/// Minimum ground-plane length of the camera forward vector.
const MIN_FORWARD_PROJECTION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PoseError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation is improper (det = {0})")]
    Improper(f64),
    #[error("pose contains a non-finite component")]
    NonFinite,
    #[error("expected 12 pose values, got {0}")]
    WrongLength(usize),
    #[error("homogeneous matrix bottom row is not [0 0 0 1]")]
    NotHomogeneous,
    #[error("camera forward is within 1e-6 of vertical; retry with a later camera pose")]
    DegenerateAzimuth,
}

/// Checks that `r` is a proper rotation within [`ROTATION_TOLERANCE`].
pub fn validate_rotation(r: &Rot3) -> Result<(), PoseError> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(PoseError::NonFinite);
    }
    let drift = orthonormality_error(r);
    if drift > ROTATION_TOLERANCE {
        return Err(PoseError::NotOrthonormal(drift));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ROTATION_TOLERANCE {
        return Err(PoseError::Improper(det));
    }
    Ok(())
}

/// `max |RᵀR - I|` over all entries.
pub fn orthonormality_error(r: &Rot3) -> f64 {
    (r.transpose() * r - Rot3::identity()).abs().max()
}

/// Gram-Schmidt on the columns, keeping the first column's direction.
fn orthonormalize(r: &Rot3) -> Rot3 {
    let x = r.column(0).normalize();
    let y_raw = r.column(1) - x * x.dot(&r.column(1));
    let y = y_raw.normalize();
    let z = x.cross(&y);
    Rot3::from_columns(&[x, y, z])
}

fn settle(r: Rot3) -> Rot3 {
    if orthonormality_error(&r) > DRIFT_TOLERANCE {
        orthonormalize(&r)
    } else {
        r
    }
}

/// Rotation by `angle` radians about the `+y` (up) axis.
pub fn rotation_about_up(angle: f64) -> Rot3 {
    let (s, c) = angle.sin_cos();
    Rot3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Rotation by `angle` radians about an arbitrary (not necessarily unit) axis.
pub fn rotation_about_axis(axis: &Vec3, angle: f64) -> Rot3 {
    let axis = Unit::new_normalize(*axis);
    *Rotation3::from_axis_angle(&axis, angle).matrix()
}

/// A proper rigid transform: rotation plus translation in metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Rot3,
    translation: Vec3,
}

impl RigidPose {
    pub fn new(rotation: Rot3, translation: Vec3) -> Result<Self, PoseError> {
        validate_rotation(&rotation)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(PoseError::NonFinite);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Builds a pose from parts the caller has already checked, re-orthonormalizing
    /// the rotation if it drifted.
    pub(crate) fn from_parts(rotation: Rot3, translation: Vec3) -> Self {
        Self {
            rotation: settle(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Rot3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Rot3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Rot3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self, PoseError> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(PoseError::NotHomogeneous);
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Serialized layout: the 9 rotation entries row-major, then `tx, ty, tz`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self, PoseError> {
        if values.len() != 12 {
            return Err(PoseError::WrongLength(values.len()));
        }
        let rotation = Rot3::from_row_slice(&values[..9]);
        let translation = Vec3::new(values[9], values[10], values[11]);
        Self::new(rotation, translation)
    }
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for RigidPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        write!(f, "[")?;
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "]")
    }
}

/// Pose of an anchor expressed in a reference (beacon) frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RelativeTransform(RigidPose);

impl RelativeTransform {
    pub fn from_pose(pose: RigidPose) -> Self {
        Self(pose)
    }

    pub fn as_pose(&self) -> &RigidPose {
        &self.0
    }

    pub fn identity() -> Self {
        Self(RigidPose::identity())
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        self.0.to_row_major()
    }

    pub fn from_row_major(values: &[f64]) -> Result<Self, PoseError> {
        RigidPose::from_row_major(values).map(Self)
    }
}

/// A compass reading: clockwise from magnetic north viewed from above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadingReading {
    magnetic_heading: f64,
    pub timestamp: f64,
}

impl HeadingReading {
    pub fn new(magnetic_heading: f64, timestamp: f64) -> Self {
        Self {
            magnetic_heading: normalize_angle(magnetic_heading),
            timestamp,
        }
    }

    /// Heading in `[0, 2π)`.
    pub fn heading(&self) -> f64 {
        self.magnetic_heading
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let a = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if a >= TAU {
        0.0
    } else {
        a
    }
}

pub fn invert(p: &RigidPose) -> RigidPose {
    let rt = p.rotation.transpose();
    RigidPose::from_parts(rt, -(rt * p.translation))
}

/// Homogeneous product `a · b`.
pub fn compose(a: &RigidPose, b: &RigidPose) -> RigidPose {
    RigidPose::from_parts(
        a.rotation * b.rotation,
        a.rotation * b.translation + a.translation,
    )
}

/// `B⁻¹ · A`: the anchor expressed in the beacon's frame.
pub fn host_relative(beacon: &RigidPose, anchor: &RigidPose) -> RelativeTransform {
    RelativeTransform(compose(&invert(beacon), anchor))
}

/// `B · A_B`: the anchor back in the frame the beacon pose is expressed in.
pub fn resolve_anchor(beacon: &RigidPose, rel: &RelativeTransform) -> RigidPose {
    compose(beacon, &rel.0)
}

/// Builds the north-aligned reference orientation in session coordinates.
///
/// The camera's forward axis (`-z` of its rotation) is projected onto the
/// ground plane and turned by `+heading` about `+y` to find magnetic north.
/// Returned columns are `(north, up, east)` with `east = north × up`.
pub fn north_aligned_orientation(
    camera: &RigidPose,
    heading: &HeadingReading,
) -> Result<Rot3, PoseError> {
    let forward = -camera.rotation.column(2);
    let ground = Vec3::new(forward.x, 0.0, forward.z);
    let len = ground.norm();
    if len <= MIN_FORWARD_PROJECTION {
        return Err(PoseError::DegenerateAzimuth);
    }
    let forward_flat = ground / len;
    let north = rotation_about_up(heading.heading()) * forward_flat;
    let up = Vec3::y();
    let east = north.cross(&up);
    Ok(settle(Rot3::from_columns(&[north, up, east])))
}

pub fn make_reference_pose(stable_position: Vec3, north_rotation: Rot3) -> RigidPose {
    RigidPose::from_parts(north_rotation, stable_position)
}

/// Geodesic angle between two rotations, in `[0, π]`.
///
/// Equal to `acos((tr(r1ᵀ r2) - 1) / 2)`; evaluated through `atan2` with the
/// skew part so that tiny angles keep full precision.
pub fn rotation_angle_between(r1: &Rot3, r2: &Rot3) -> f64 {
    let d = r1.transpose() * r2;
    let cos = ((d.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let skew = Vec3::new(
        d[(2, 1)] - d[(1, 2)],
        d[(0, 2)] - d[(2, 0)],
        d[(1, 0)] - d[(0, 1)],
    );
    let sin = skew.norm() / 2.0;
    sin.atan2(cos)
}
