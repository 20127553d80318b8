//! Hand-eye calibration `AX = XB` by the Park–Martin least-squares method.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

/// Relative flange motion `a` and the matching camera motion `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPair {
    pub a: Pose,
    pub b: Pose,
}

impl MotionPair {
    pub fn new(a: Pose, b: Pose) -> Self {
        Self { a, b }
    }
}

/// Error of an estimate against a reference transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HandEyeError {
    pub rotation_deg: f64,
    pub translation_mm: f64,
    /// Absolute per-axis translation error, mm.
    pub axes_mm: [f64; 3],
}

impl HandEyeError {
    pub fn between(estimate: &Pose, truth: &Pose) -> Self {
        let (angle, _) = estimate.distance_to(truth);
        let d = (estimate.translation() - truth.translation()) * 1000.0;
        Self {
            rotation_deg: angle.to_degrees(),
            translation_mm: d.norm(),
            axes_mm: [d.x.abs(), d.y.abs(), d.z.abs()],
        }
    }
}

/// Relative singular value below which the motion axes count as degenerate.
const RANK_TOLERANCE: f64 = 1e-9;

/// Solves `A_i X = X B_i` for `X` in the least-squares sense.
///
/// Rotation: with `alpha_i = log(R_A)`, `beta_i = log(R_B)` and
/// `M = sum beta_i alpha_i^T`, `R_X = (M^T M)^(-1/2) M^T`.
/// Translation: stacked `(R_A - I) t_X = R_X t_B - t_A`.
pub fn solve_hand_eye(pairs: &[MotionPair]) -> Result<Pose> {
    if pairs.len() < 3 {
        return Err(Error::DegenerateMotions(format!("{} motion pairs, need at least 3", pairs.len())));
    }
    let mut m = Matrix3::zeros();
    for p in pairs {
        m += p.b.scaled_axis() * p.a.scaled_axis().transpose();
    }
    let svd = m.svd(true, true);
    let s = svd.singular_values;
    let s_max = s.max();
    if !(s_max > 0.0) || s.min() < RANK_TOLERANCE * s_max {
        return Err(Error::DegenerateMotions("rotation axes do not span 3-D".into()));
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v requested");
    // (M^T M)^(-1/2) M^T = V U^T for M = U S V^T
    let mut correction = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        correction[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * correction * u.transpose();

    let n = pairs.len();
    let mut lhs = DMatrix::zeros(3 * n, 3);
    let mut rhs = DVector::zeros(3 * n);
    for (i, p) in pairs.iter().enumerate() {
        let ra = p.a.rotation_matrix() - Matrix3::identity();
        lhs.view_mut((3 * i, 0), (3, 3)).copy_from(&ra);
        let b: Vec3 = r * p.b.translation() - p.a.translation();
        rhs.rows_mut(3 * i, 3).copy_from(&b);
    }
    let lsq = lhs.svd(true, true);
    let ls = &lsq.singular_values;
    if ls.min() < RANK_TOLERANCE * ls.max().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateMotions("translation system is rank deficient".into()));
    }
    let t = lsq
        .solve(&rhs, 0.0)
        .map_err(|e| Error::DegenerateMotions(e.to_string()))?;
    Ok(Pose::from_rotation_matrix(&r, Vec3::new(t[0], t[1], t[2])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, UnitSphere};

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Pose {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        let angle = rng.random_range(0.2..max_angle);
        let t = Vec3::from_fn(|_, _| rng.random_range(-max_t..max_t));
        Pose::from_scaled_axis(Vec3::from(axis) * angle, t)
    }

    fn synthetic(rng: &mut ChaCha8Rng, x: &Pose, n: usize) -> Vec<MotionPair> {
        (0..n)
            .map(|_| {
                let a = random_pose(rng, 2.5, 0.3);
                MotionPair::new(a, x.inverse() * a * *x)
            })
            .collect()
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = random_pose(&mut rng, 3.0, 0.1);
            let pairs = synthetic(&mut rng, &x, 10);
            let est = solve_hand_eye(&pairs).unwrap();
            let (ang, tr) = est.distance_to(&x);
            assert!(ang < 1e-9 && tr < 1e-9, "{ang} {tr}");
        }
    }

    #[test]
    fn two_pairs_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_pose(&mut rng, 1.0, 0.1);
        let pairs = synthetic(&mut rng, &x, 2);
        assert!(matches!(solve_hand_eye(&pairs), Err(Error::DegenerateMotions(_))));
    }

    #[test]
    fn parallel_axes_are_degenerate() {
        let x = Pose::from_scaled_axis(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.01, 0.02, 0.05));
        let pairs: Vec<_> = [0.3, 0.7, 1.1, 1.6]
            .iter()
            .map(|&ang| {
                let a = Pose::from_scaled_axis(Vec3::z() * ang, Vec3::new(0.1, 0.0, ang));
                MotionPair::new(a, x.inverse() * a * x)
            })
            .collect();
        assert!(matches!(solve_hand_eye(&pairs), Err(Error::DegenerateMotions(_))));
    }

    #[test]
    fn conjugation_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_pose(&mut rng, 2.0, 0.1);
        let pairs = synthetic(&mut rng, &x, 8);
        let direct = solve_hand_eye(&pairs).unwrap();
        let (a0, b0) = (pairs[0].a, pairs[0].b);
        let shifted: Vec<_> = pairs[1..].iter().map(|p| MotionPair::new(a0 * p.a, b0 * p.b)).collect();
        let again = solve_hand_eye(&shifted).unwrap();
        assert!(direct.approx_eq(&again, 1e-9, 1e-9));
    }

    #[test]
    fn noisy_median_error_is_small() {
        let rot_noise = Normal::new(0.0, 0.1f64.to_radians()).unwrap();
        let trans_noise = Normal::new(0.0, 0.001).unwrap();
        let mut rot_err = Vec::new();
        let mut trans_err = Vec::new();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = random_pose(&mut rng, 3.0, 0.1);
            let pairs: Vec<_> = synthetic(&mut rng, &x, 10)
                .into_iter()
                .map(|p| {
                    let dr = Vec3::from_fn(|_, _| rot_noise.sample(&mut rng));
                    let dt = Vec3::from_fn(|_, _| trans_noise.sample(&mut rng));
                    MotionPair::new(p.a, Pose::from_scaled_axis(dr, dt) * p.b)
                })
                .collect();
            let e = HandEyeError::between(&solve_hand_eye(&pairs).unwrap(), &x);
            rot_err.push(e.rotation_deg);
            trans_err.push(e.translation_mm);
        }
        rot_err.sort_by(f64::total_cmp);
        trans_err.sort_by(f64::total_cmp);
        assert!(rot_err[25] < 0.5, "{}", rot_err[25]);
        assert!(trans_err[25] < 10.0, "{}", trans_err[25]);
    }
}
