#![allow(dead_code)]

use beacon_sync::pose::{RigidPose, Rot3, Vec3};
use nalgebra::{Matrix4, Unit, UnitQuaternion};
use proptest::prelude::*;

/// Rotation built through quaternions, independently of the library's helpers.
pub fn quat_rotation(axis: [f64; 3], angle: f64) -> Rot3 {
    let axis = Vec3::from(axis);
    let axis = if axis.norm() < 1e-6 { Vec3::x() } else { axis };
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle)
        .to_rotation_matrix()
        .into_inner()
}

pub fn pose_strategy() -> impl Strategy<Value = RigidPose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -std::f64::consts::PI..std::f64::consts::PI,
        prop::array::uniform3(-50.0f64..50.0),
    )
        .prop_map(|(axis, angle, t)| {
            RigidPose::new(quat_rotation(axis, angle), Vec3::from(t)).unwrap()
        })
}

/// Homogeneous matrix assembled by hand from the pose parts.
pub fn homogeneous(p: &RigidPose) -> Matrix4<f64> {
    let r = p.rotation();
    let t = p.translation();
    let mut m = Matrix4::identity();
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = r[(i, j)];
        }
        m[(i, 3)] = t[i];
    }
    m
}

pub fn max_abs_diff(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    (a - b).abs().max()
}

/// Rotation angle through the quaternion route.
pub fn quat_angle(r1: &Rot3, r2: &Rot3) -> f64 {
    let q1 = UnitQuaternion::from_matrix(r1);
    let q2 = UnitQuaternion::from_matrix(r2);
    q1.angle_to(&q2)
}
