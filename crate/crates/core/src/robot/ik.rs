//! Damped-least-squares inverse kinematics for the camera pose.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, Vector6};

use super::{arm_base_pose, ArmConfig, BasePose, RobotParams, NUM_JOINTS};
use crate::geometry::{Pose, Vec3};

/// Accepted camera position error (m).
pub const POSITION_TOLERANCE: f64 = 0.005;
/// Accepted camera orientation error (rad), 2 degrees.
pub const ORIENTATION_TOLERANCE: f64 = 2.0 * std::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSettings {
    pub damping: f64,
    pub max_iterations: usize,
    /// Largest joint step per iteration (rad).
    pub max_step: f64,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            damping: 0.05,
            max_iterations: 200,
            max_step: 0.5,
        }
    }
}

enum Target {
    Pose(Pose),
    /// Position plus optical axis; roll about the axis is free.
    Pointing { position: Vec3, axis: Vec3 },
}

struct Evaluation {
    error: Vector6<f64>,
    position_error: f64,
    angle_error: f64,
    jacobian: Matrix6<f64>,
}

fn evaluate(params: &RobotParams, base_frame: &Pose, q: &[f64; NUM_JOINTS], target: &Target) -> Evaluation {
    let mut frames = Vec::with_capacity(NUM_JOINTS + 1);
    let mut t = *base_frame;
    frames.push(t);
    for (row, &qi) in params.dh.iter().zip(q).take(params.camera_link) {
        t = t.compose(&row.transform(qi));
        frames.push(t);
    }
    let cam = t.compose(&params.flange_to_camera);
    let p = *cam.translation();

    let mut jacobian = Matrix6::zeros();
    for (j, frame) in frames.iter().take(params.camera_link).enumerate() {
        let z = frame.z_axis();
        let lin = z.cross(&(p - frame.translation()));
        jacobian.fixed_view_mut::<3, 1>(0, j).copy_from(&lin);
        jacobian.fixed_view_mut::<3, 1>(3, j).copy_from(&z);
    }

    let mut error = Vector6::zeros();
    let (position_error, angle_error) = match target {
        Target::Pose(goal) => {
            let dp = goal.translation() - p;
            let rot = goal.rotation() * cam.rotation().inverse();
            let w = rot.scaled_axis();
            error.fixed_view_mut::<3, 1>(0, 0).copy_from(&dp);
            error.fixed_view_mut::<3, 1>(3, 0).copy_from(&w);
            (dp.norm(), w.norm())
        }
        Target::Pointing { position, axis } => {
            let dp = position - p;
            let current = cam.z_axis();
            let cross = current.cross(axis);
            let angle = cross.norm().atan2(current.dot(axis));
            let w = cross.try_normalize(1e-15).map_or(Vec3::zeros(), |u| u * angle);
            // roll about the optical axis does not matter
            let project = Matrix3::identity() - current * current.transpose();
            let ang_rows = project * jacobian.fixed_view::<3, 6>(3, 0);
            jacobian.fixed_view_mut::<3, 6>(3, 0).copy_from(&ang_rows);
            error.fixed_view_mut::<3, 1>(0, 0).copy_from(&dp);
            error.fixed_view_mut::<3, 1>(3, 0).copy_from(&w);
            (dp.norm(), angle)
        }
    };
    Evaluation {
        error,
        position_error,
        angle_error,
        jacobian,
    }
}

/// Restart seeds derived from the caller's seed: shoulder turned half a
/// revolution and elbow / wrist mirrored.
fn restart_seeds(seed: &ArmConfig) -> impl Iterator<Item = [f64; NUM_JOINTS]> + '_ {
    (0..8).map(move |k| {
        let mut q = seed.joints;
        if k & 1 == 1 {
            q[0] += PI;
            q[1] = -PI - q[1];
        }
        if k & 2 == 2 {
            q[2] = -q[2];
        }
        if k & 4 == 4 {
            q[4] = -q[4];
        }
        q
    })
}

fn solve(params: &RobotParams, base: &BasePose, target: Target, seed: &ArmConfig, settings: &IkSettings) -> Option<ArmConfig> {
    if let Target::Pose(p) = &target {
        if !p.is_finite() {
            return None;
        }
    }
    let base_frame = arm_base_pose(params, base);
    restart_seeds(seed).find_map(|q| descend(params, &base_frame, &target, q, settings))
}

fn descend(params: &RobotParams, base_frame: &Pose, target: &Target, start: [f64; NUM_JOINTS], settings: &IkSettings) -> Option<ArmConfig> {
    let mut q = start;
    params.clamp(&mut q);
    let mut eval = evaluate(params, base_frame, &q, target);
    let mut cost = eval.error.norm_squared();
    let mut lambda = settings.damping;
    for _ in 0..settings.max_iterations {
        if eval.position_error < 1e-9 && eval.angle_error < 1e-9 {
            break;
        }
        let j = &eval.jacobian;
        let lhs = j * j.transpose() + Matrix6::identity() * (lambda * lambda);
        let Some(y) = lhs.cholesky().map(|c| c.solve(&eval.error)) else {
            lambda *= 4.0;
            continue;
        };
        let mut dq = j.transpose() * y;
        let largest = dq.amax();
        if largest > settings.max_step {
            dq *= settings.max_step / largest;
        }
        let mut trial = q;
        for (t, d) in trial.iter_mut().zip(dq.iter()) {
            *t += d;
        }
        params.clamp(&mut trial);
        let next = evaluate(params, base_frame, &trial, target);
        let next_cost = next.error.norm_squared();
        if next_cost < cost {
            q = trial;
            eval = next;
            cost = next_cost;
            lambda = (lambda * 0.5).max(settings.damping);
        } else {
            lambda = (lambda * 4.0).min(10.0);
            if dq.amax() < 1e-12 {
                break;
            }
        }
    }
    (eval.position_error <= POSITION_TOLERANCE && eval.angle_error <= ORIENTATION_TOLERANCE).then_some(ArmConfig::new(q))
}

/// Arm configuration placing the camera at `target_camera`, starting from `seed`.
///
/// Each of up to eight restarts gets the full iteration budget; returns `None`
/// when none reaches 5 mm / 2°.
pub fn solve_arm_ik(params: &RobotParams, base: &BasePose, target_camera: &Pose, seed_config: &ArmConfig) -> Option<ArmConfig> {
    solve(params, base, Target::Pose(*target_camera), seed_config, &IkSettings::default())
}

/// Like [`solve_arm_ik`] but only constrains the camera position and the
/// direction of its optical (+z) axis.
pub fn solve_arm_ik_pointing(
    params: &RobotParams,
    base: &BasePose,
    position: &Vec3,
    axis: &Vec3,
    seed_config: &ArmConfig,
) -> Option<ArmConfig> {
    let axis = axis.try_normalize(1e-12)?;
    solve(
        params,
        base,
        Target::Pointing {
            position: *position,
            axis,
        },
        seed_config,
        &IkSettings::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::forward_kinematics;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(rng: &mut ChaCha8Rng) -> ArmConfig {
        ArmConfig::new(std::array::from_fn(|_| rng.random_range(-PI..PI)))
    }

    fn verify(params: &RobotParams, base: &BasePose, sol: &ArmConfig, target: &Pose) {
        sol.within_limits(params).unwrap();
        let got = forward_kinematics(params, base, sol).unwrap();
        let (ang, pos) = got.distance_to(target);
        assert!(pos <= POSITION_TOLERANCE && ang <= ORIENTATION_TOLERANCE, "{pos} {ang}");
    }

    #[test]
    fn seed_at_solution_is_a_fixed_point() {
        let p = RobotParams::default();
        let base = BasePose::new(0.3, -0.2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let q = random_config(&mut rng);
            let target = forward_kinematics(&p, &base, &q).unwrap();
            let sol = solve_arm_ik(&p, &base, &target, &q).unwrap();
            let residual = forward_kinematics(&p, &base, &sol).unwrap().distance_to(&target);
            assert!(residual.0 < 1e-6 && residual.1 < 1e-6);
        }
    }

    #[test]
    fn far_target_is_unreachable() {
        let p = RobotParams::default();
        let base = BasePose::new(0.0, 0.0, 0.0);
        let target = Pose::from_translation(Vec3::new(10.0, 0.0, 1.0));
        assert!(solve_arm_ik(&p, &base, &target, &ArmConfig::folded()).is_none());
        assert!(solve_arm_ik_pointing(&p, &base, &Vec3::new(10.0, 0.0, 1.0), &Vec3::z(), &ArmConfig::folded()).is_none());
    }

    #[test]
    fn random_reachable_targets_mostly_solve() {
        let p = RobotParams::default();
        let base = BasePose::new(0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut ok = 0;
        for _ in 0..100 {
            let target = forward_kinematics(&p, &base, &random_config(&mut rng)).unwrap();
            let seed = random_config(&mut rng);
            if let Some(sol) = solve_arm_ik(&p, &base, &target, &seed) {
                verify(&p, &base, &sol, &target);
                ok += 1;
            }
        }
        assert!(ok >= 70, "only {ok}/100 solved");
    }

    #[test]
    fn pointing_solutions_verify_by_fk() {
        let p = RobotParams::default();
        let base = BasePose::new(0.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ok = 0;
        for _ in 0..50 {
            let target = forward_kinematics(&p, &base, &random_config(&mut rng)).unwrap();
            let axis = target.z_axis();
            if let Some(sol) = solve_arm_ik_pointing(&p, &base, target.translation(), &axis, &ArmConfig::folded()) {
                let got = forward_kinematics(&p, &base, &sol).unwrap();
                assert!((got.translation() - target.translation()).norm() <= POSITION_TOLERANCE);
                assert!(got.z_axis().angle(&axis) <= ORIENTATION_TOLERANCE);
                ok += 1;
            }
        }
        assert!(ok >= 35, "{ok}/50");
    }
}
