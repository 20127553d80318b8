//! Kinematic model of the mobile base, the 6-joint arm and the camera mount.

mod collision;
mod handeye;
mod ik;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec2, Vec3};

pub use collision::{base_allowed, check_config, footprint_corners, ClearanceReport, CollisionScene};
pub use handeye::{solve_hand_eye, HandEyeError, MotionPair};
pub use ik::{solve_arm_ik, solve_arm_ik_pointing, IkSettings, ORIENTATION_TOLERANCE, POSITION_TOLERANCE};

pub const NUM_JOINTS: usize = 6;

/// One standard Denavit–Hartenberg row: `Rz(theta + offset) Tz(d) Tx(a) Rx(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhRow {
    pub a: f64,
    pub alpha: f64,
    pub d: f64,
    pub theta_offset: f64,
}

impl DhRow {
    pub fn transform(&self, theta: f64) -> Pose {
        Pose::rot_z(theta + self.theta_offset)
            .compose(&Pose::from_translation(Vec3::new(self.a, 0.0, self.d)))
            .compose(&Pose::rot_x(self.alpha))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    pub dh: [DhRow; NUM_JOINTS],
    /// Arm base relative to the lifted mobile-base frame.
    pub base_to_arm: Pose,
    /// Camera relative to the frame of link `camera_link`.
    pub flange_to_camera: Pose,
    /// Link carrying the camera (1-based); joints after it do not move it.
    pub camera_link: usize,
    /// Footprint `(width, depth)`: width across the heading, depth along it.
    pub base_footprint: (f64, f64),
    /// Arm mount height above the floor.
    pub base_height: f64,
    pub joint_limits: [(f64, f64); NUM_JOINTS],
    /// m/s
    pub base_speed: f64,
    /// Radius of the capsule around every link segment.
    pub link_radius: f64,
}

impl Default for RobotParams {
    /// UR3 on a compact differential-drive base, camera on the fifth joint.
    fn default() -> Self {
        let a = [0.0, -0.2437, -0.2133, 0.0, 0.0, 0.0];
        let d = [0.1519, 0.0, 0.0, 0.1124, 0.0854, 0.0819];
        let alpha = [FRAC_PI_2, 0.0, 0.0, FRAC_PI_2, -FRAC_PI_2, 0.0];
        let dh = std::array::from_fn(|i| DhRow {
            a: a[i],
            alpha: alpha[i],
            d: d[i],
            theta_offset: 0.0,
        });
        Self {
            dh,
            base_to_arm: Pose::from_translation(Vec3::new(0.2, 0.0, 0.0)),
            // 5 cm standoff beyond the wrist flange face, looking along joint 6
            flange_to_camera: Pose::from_translation(Vec3::new(0.0, 0.0, 0.0819 + 0.05)),
            camera_link: 5,
            base_footprint: (0.4, 0.4),
            base_height: 1.25,
            joint_limits: [(-2.0 * PI, 2.0 * PI); NUM_JOINTS],
            base_speed: 0.08,
            link_radius: 0.05,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        for (i, (lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("joint {} limits [{lo}, {hi}] are empty", i + 1)));
            }
        }
        if !(self.base_speed > 0.0) {
            return Err(Error::InvalidParameter("base_speed must be > 0".into()));
        }
        if !(1..=NUM_JOINTS).contains(&self.camera_link) {
            return Err(Error::InvalidParameter(format!("camera_link {} not in 1..=6", self.camera_link)));
        }
        if !(self.base_footprint.0 > 0.0 && self.base_footprint.1 > 0.0 && self.base_height > 0.0) {
            return Err(Error::InvalidParameter("base dimensions must be > 0".into()));
        }
        Ok(())
    }

    /// Upper bound on the camera's distance from the shoulder (frame 1 origin).
    pub fn reach_bound(&self) -> f64 {
        let chain: f64 = self.dh[1..self.camera_link]
            .iter()
            .map(|r| r.a.abs() + r.d.abs())
            .sum();
        chain + self.flange_to_camera.translation().norm()
    }

    pub fn clamp(&self, joints: &mut [f64; NUM_JOINTS]) {
        for (q, (lo, hi)) in joints.iter_mut().zip(self.joint_limits) {
            *q = q.clamp(lo, hi);
        }
    }
}

/// Planar pose of the mobile base on the floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePose {
    pub x: f64,
    pub y: f64,
    /// Normalized to (-pi, pi].
    pub heading: f64,
}

impl BasePose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Floor-level frame of the base.
    pub fn to_pose(&self) -> Pose {
        Pose::new(*Pose::rot_z(self.heading).rotation(), Vec3::new(self.x, self.y, 0.0))
    }

    /// Pose facing the point `(tx, ty)`.
    pub fn facing(x: f64, y: f64, tx: f64, ty: f64) -> Self {
        Self::new(x, y, (ty - y).atan2(tx - x))
    }
}

pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    pub joints: [f64; NUM_JOINTS],
}

impl ArmConfig {
    pub fn new(joints: [f64; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn zero() -> Self {
        Self::new([0.0; NUM_JOINTS])
    }

    /// Folded, camera-up pose used when the base drives.
    pub fn folded() -> Self {
        Self::new([0.0, -FRAC_PI_2, 2.6, -2.6, -FRAC_PI_2, 0.0])
    }

    pub fn within_limits(&self, params: &RobotParams) -> Result<()> {
        for (i, (&q, &(lo, hi))) in self.joints.iter().zip(&params.joint_limits).enumerate() {
            if !(q >= lo && q <= hi) {
                return Err(Error::JointLimit {
                    joint: i + 1,
                    angle: q,
                    min: lo,
                    max: hi,
                });
            }
        }
        Ok(())
    }
}

/// Arm base frame in the world.
pub fn arm_base_pose(params: &RobotParams, base: &BasePose) -> Pose {
    base.to_pose()
        .compose(&Pose::from_translation(Vec3::new(0.0, 0.0, params.base_height)))
        .compose(&params.base_to_arm)
}

/// World frames of the arm base and links 1..=6, followed by the camera.
pub fn link_frames(params: &RobotParams, base: &BasePose, arm: &ArmConfig) -> Vec<Pose> {
    let mut frames = Vec::with_capacity(NUM_JOINTS + 2);
    let mut t = arm_base_pose(params, base);
    frames.push(t);
    for (row, &q) in params.dh.iter().zip(&arm.joints) {
        t = t.compose(&row.transform(q));
        frames.push(t);
    }
    frames.push(frames[params.camera_link].compose(&params.flange_to_camera));
    frames
}

/// World pose of the camera.
pub fn forward_kinematics(params: &RobotParams, base: &BasePose, arm: &ArmConfig) -> Result<Pose> {
    arm.within_limits(params)?;
    Ok(camera_pose_unchecked(params, base, arm))
}

pub(crate) fn camera_pose_unchecked(params: &RobotParams, base: &BasePose, arm: &ArmConfig) -> Pose {
    let mut t = arm_base_pose(params, base);
    for (row, &q) in params.dh.iter().zip(&arm.joints).take(params.camera_link) {
        t = t.compose(&row.transform(q));
    }
    t.compose(&params.flange_to_camera)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_configuration_matches_hand_product() {
        // At zero joints the standard-DH UR3 chain reduces to
        //   T = Tz(d1) Rx(pi/2) Tx(a2) Tx(a3) Tz(d4) Rx(pi/2) Tz(d5) Rx(-pi/2)
        // Composing by hand: Rx(pi/2) maps local z to world -y and local y to
        // world z. Position of frame 5 origin in the arm frame is
        //   (a2 + a3, -d4, d1 - d5) = (-0.4570, -0.1124, 0.0665)
        // and its z axis is world -y; the camera sits 0.1319 m further along it.
        let p = RobotParams::default();
        let cam = forward_kinematics(&p, &BasePose::new(0.0, 0.0, 0.0), &ArmConfig::zero()).unwrap();
        let arm_origin = Vec3::new(0.2, 0.0, p.base_height);
        let expected = arm_origin + Vec3::new(-0.4570, -0.1124 - 0.1319, 0.1519 - 0.0854);
        assert!((cam.translation() - expected).norm() < 1e-12, "{}", cam);
        assert!((cam.z_axis() - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn base_translation_moves_camera_rigidly() {
        let p = RobotParams::default();
        let arm = ArmConfig::new([0.3, -1.0, 1.2, -0.4, 0.7, 0.2]);
        let a = forward_kinematics(&p, &BasePose::new(0.0, 0.0, 0.4), &arm).unwrap();
        let b = forward_kinematics(&p, &BasePose::new(1.0, 0.0, 0.4), &arm).unwrap();
        assert!((b.translation() - a.translation() - Vec3::x()).norm() < 1e-12);
        assert!(a.rotation().angle_to(b.rotation()) < 1e-12);
    }

    #[test]
    fn heading_flip_rotates_camera_about_base() {
        let p = RobotParams::default();
        let arm = ArmConfig::new([0.3, -1.0, 1.2, -0.4, 0.7, 0.2]);
        let a = forward_kinematics(&p, &BasePose::new(0.0, 0.0, 0.0), &arm).unwrap();
        let b = forward_kinematics(&p, &BasePose::new(0.0, 0.0, PI), &arm).unwrap();
        let ta = a.translation();
        let tb = b.translation();
        assert!((tb - Vec3::new(-ta.x, -ta.y, ta.z)).norm() < 1e-12);
    }

    #[test]
    fn joint_limits_are_enforced() {
        let mut p = RobotParams::default();
        p.joint_limits[2] = (-1.0, 1.0);
        let arm = ArmConfig::new([0.0, 0.0, 1.5, 0.0, 0.0, 0.0]);
        assert!(matches!(
            forward_kinematics(&p, &BasePose::new(0.0, 0.0, 0.0), &arm),
            Err(Error::JointLimit { joint: 3, .. })
        ));
    }

    #[test]
    fn fk_is_continuous() {
        let p = RobotParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let q: [f64; 6] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let base = BasePose::new(0.0, 0.0, 0.0);
            let a = forward_kinematics(&p, &base, &ArmConfig::new(q)).unwrap();
            for j in 0..6 {
                let mut q2 = q;
                q2[j] += 1e-6;
                let b = forward_kinematics(&p, &base, &ArmConfig::new(q2)).unwrap();
                assert!((a.translation() - b.translation()).norm() < 1e-4);
            }
        }
    }

    #[test]
    fn camera_ignores_joints_past_its_link() {
        let p = RobotParams::default();
        let base = BasePose::new(0.0, 0.0, 0.0);
        let a = forward_kinematics(&p, &base, &ArmConfig::new([0.1, -1.0, 1.0, 0.2, 0.3, 0.0])).unwrap();
        let b = forward_kinematics(&p, &base, &ArmConfig::new([0.1, -1.0, 1.0, 0.2, 0.3, 2.0])).unwrap();
        assert!(a.approx_eq(&b, 1e-12, 1e-12));
    }

    #[test]
    fn heading_is_normalized() {
        assert!((BasePose::new(0.0, 0.0, 3.0 * PI).heading - PI).abs() < 1e-12);
        assert!((BasePose::new(0.0, 0.0, -PI).heading - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }
}
