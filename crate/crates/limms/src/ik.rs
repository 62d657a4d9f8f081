//! Numerical inverse kinematics via Damped Least Squares.
//!
//! Iterates `dq = J^T (J J^T + lambda^2 I)^-1 e` with the position error in
//! meters and the orientation error as a rotation vector in radians, clamping
//! each step per joint and the joints to their limits. On failure the solve
//! restarts from uniformly random in-limit seeds, deterministically for a
//! fixed seed.

use nalgebra::{Matrix6, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::kinematics::{limms_chain, BaseEnd, JointVector, Pose, SerialChain};
use crate::model::ModuleParams;

#[derive(Debug, Error)]
pub enum IkError {
    #[error("target rotation is not orthonormal (residual {0:.3e})")]
    NonOrthonormalTarget(f64),
    #[error("invalid IK settings: {0}")]
    InvalidSettings(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSettings {
    /// DLS damping factor lambda.
    pub damping: f64,
    pub max_iters: usize,
    /// Position tolerance, m.
    pub pos_tol: f64,
    /// Orientation tolerance, rad.
    pub rot_tol: f64,
    /// Per-joint step clamp, rad.
    pub step_clamp: f64,
    /// Random restarts after the initial attempt fails.
    pub restarts: usize,
    pub seed: u64,
    /// Weight of the orientation error rows relative to position. Zero makes
    /// the solve position-only and skips the orientation convergence check.
    pub rot_weight: f64,
}

impl Default for IkSettings {
    fn default() -> Self {
        Self {
            damping: 0.1,
            max_iters: 200,
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            step_clamp: 0.3,
            restarts: 64,
            seed: 0,
            rot_weight: 1.0,
        }
    }
}

impl IkSettings {
    fn validate(&self) -> Result<(), IkError> {
        if !(self.damping > 0.0) {
            return Err(IkError::InvalidSettings(format!(
                "damping {} must be > 0",
                self.damping
            )));
        }
        if !(self.pos_tol > 0.0) || !(self.rot_tol > 0.0) {
            return Err(IkError::InvalidSettings("tolerances must be > 0".into()));
        }
        if !(self.rot_weight >= 0.0) {
            return Err(IkError::InvalidSettings("rot_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkResult {
    pub q: JointVector,
    pub converged: bool,
    /// Iterations spent in the attempt that produced `q`.
    pub iters: usize,
    pub final_pos_err: f64,
    pub final_rot_err: f64,
}

const MAX_POS_ERR: f64 = 0.1;
const MAX_ROT_ERR: f64 = 0.5;

/// One damped least squares step toward `target` from `q`.
///
/// Returns the clamped joint update. Exposed for the damping-monotonicity
/// property tests.
pub fn dls_step(
    chain: &SerialChain,
    q: &JointVector,
    target: &Pose,
    settings: &IkSettings,
) -> Vector6<f64> {
    let current = chain.fk(q);
    let jac = chain.jacobian(q);
    let mut pos_err = target.translation - current.translation;
    let mut rot_err = current.rotation_error_to(target);
    // Clamp error magnitudes so distant targets pull with a bounded step;
    // keeps the iteration inside the linearization's region of validity.
    let pos_norm = pos_err.norm();
    if pos_norm > MAX_POS_ERR {
        pos_err *= MAX_POS_ERR / pos_norm;
    }
    let rot_norm = rot_err.norm();
    if rot_norm > MAX_ROT_ERR {
        rot_err *= MAX_ROT_ERR / rot_norm;
    }
    let mut error = Vector6::zeros();
    for r in 0..3 {
        error[r] = pos_err[r];
        error[r + 3] = settings.rot_weight * rot_err[r];
    }
    let mut jw = jac;
    for r in 3..6 {
        for c in 0..6 {
            jw[(r, c)] *= settings.rot_weight;
        }
    }
    let jjt = jw * jw.transpose() + Matrix6::identity() * settings.damping * settings.damping;
    let f = jjt
        .cholesky()
        .map(|ch| ch.solve(&error))
        .unwrap_or_else(Vector6::zeros);
    let mut dq = jw.transpose() * f;
    for v in dq.iter_mut() {
        *v = v.clamp(-settings.step_clamp, settings.step_clamp);
    }
    dq
}

fn errors_at(chain: &SerialChain, q: &JointVector, target: &Pose) -> (f64, f64) {
    let pose = chain.fk(q);
    let pos = (target.translation - pose.translation).norm();
    let rot = pose.rotation_error_to(target).norm();
    (pos, rot)
}

fn attempt(
    chain: &SerialChain,
    limits: &[(f64, f64); 6],
    target: &Pose,
    settings: &IkSettings,
    q0: &JointVector,
) -> IkResult {
    let mut q = *q0;
    for (i, qi) in q.iter_mut().enumerate() {
        *qi = qi.clamp(limits[i].0, limits[i].1);
    }
    let mut iters = 0;
    let mut best_cost = f64::MAX;
    let mut since_improvement = 0;
    loop {
        let (pos, rot) = errors_at(chain, &q, target);
        let rot_ok = settings.rot_weight == 0.0 || rot < settings.rot_tol;
        if pos < settings.pos_tol && rot_ok {
            return IkResult {
                q,
                converged: true,
                iters,
                final_pos_err: pos,
                final_rot_err: rot,
            };
        }
        let cost = pos + settings.rot_weight * rot;
        if cost < best_cost * (1.0 - 1e-3) {
            best_cost = cost;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        // A stalled attempt is a local minimum; hand the budget to the next
        // restart instead of burning the full iteration count.
        if iters >= settings.max_iters || since_improvement > 25 {
            return IkResult {
                q,
                converged: false,
                iters,
                final_pos_err: pos,
                final_rot_err: rot,
            };
        }
        // Near the target the damping bias dominates the remaining error;
        // drop lambda for the endgame so the iteration contracts to
        // tolerance even close to singular configurations.
        let near = pos < 10.0 * settings.pos_tol
            && (settings.rot_weight == 0.0 || rot < 10.0 * settings.rot_tol);
        let step_settings = if near {
            IkSettings {
                damping: settings.damping * 0.1,
                ..settings.clone()
            }
        } else {
            settings.clone()
        };
        let dq = dls_step(chain, &q, target, &step_settings);
        for i in 0..6 {
            q[i] = (q[i] + dq[i]).clamp(limits[i].0, limits[i].1);
        }
        iters += 1;
    }
}

/// Solve IK on an arbitrary serial chain with explicit joint limits.
pub fn solve_ik_chain(
    chain: &SerialChain,
    limits: &[(f64, f64); 6],
    target: &Pose,
    settings: &IkSettings,
    q0: Option<&JointVector>,
) -> Result<IkResult, IkError> {
    settings.validate()?;
    let residual = target.orthonormality_residual();
    if residual > 1e-9 {
        return Err(IkError::NonOrthonormalTarget(residual));
    }
    let mid: JointVector = std::array::from_fn(|i| 0.5 * (limits[i].0 + limits[i].1));
    let first = q0.copied().unwrap_or(mid);
    let mut best = attempt(chain, limits, target, settings, &first);
    if best.converged {
        return Ok(best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for _ in 0..settings.restarts {
        let seed_q: JointVector =
            std::array::from_fn(|i| rng.gen_range(limits[i].0..limits[i].1));
        let result = attempt(chain, limits, target, settings, &seed_q);
        if result.converged {
            return Ok(result);
        }
        if result.final_pos_err + result.final_rot_err
            < best.final_pos_err + best.final_rot_err
        {
            best = result;
        }
    }
    Ok(best)
}

/// Solve IK for a module anchored at `base`.
pub fn solve_ik(
    params: &ModuleParams,
    target: &Pose,
    base: BaseEnd,
    settings: &IkSettings,
    q0: Option<&JointVector>,
) -> Result<IkResult, IkError> {
    let chain = limms_chain(params, base);
    solve_ik_chain(&chain, &params.joint_limits, target, settings, q0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::fk;
    use crate::model::nominal_params;
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(params: &ModuleParams, rng: &mut impl Rng) -> JointVector {
        std::array::from_fn(|i| {
            let (lo, hi) = params.joint_limits[i];
            rng.gen_range(lo..hi)
        })
    }

    #[test]
    fn roundtrip_targets_converge() {
        let p = nominal_params();
        let settings = IkSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ok = 0;
        for _ in 0..50 {
            let q_star = random_q(&p, &mut rng);
            let target = fk(&p, &q_star, BaseEnd::EndA).unwrap();
            let result = solve_ik(&p, &target, BaseEnd::EndA, &settings, None).unwrap();
            if result.converged {
                ok += 1;
                assert!(result.final_pos_err < 1e-4);
                assert!(result.final_rot_err < 1e-3);
                // Reported errors match a re-evaluation of fk on the result.
                let pose = fk(&p, &result.q, BaseEnd::EndA).unwrap();
                let pos = (target.translation - pose.translation).norm();
                assert!((pos - result.final_pos_err).abs() < 1e-12);
            }
        }
        assert!(ok >= 48, "only {ok}/50 converged");
    }

    #[test]
    fn unreachable_target_reports_failure() {
        let p = nominal_params();
        let target = Pose::new(Rotation3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let result = solve_ik(&p, &target, BaseEnd::EndA, &IkSettings::default(), None).unwrap();
        assert!(!result.converged);
        assert!(result.final_pos_err > 0.2);
    }

    #[test]
    fn warm_start_converges_quickly_from_base_b() {
        let p = nominal_params();
        let target = fk(&p, &[0.0; 6], BaseEnd::EndB).unwrap();
        let q0 = [0.02, -0.01, 0.015, -0.02, 0.01, 0.02];
        let result =
            solve_ik(&p, &target, BaseEnd::EndB, &IkSettings::default(), Some(&q0)).unwrap();
        assert!(result.converged);
        // Measured on the shipped nominal parameters; small perturbations of
        // the zero pose settle in a handful of damped steps.
        assert!(result.iters < 20, "took {} iterations", result.iters);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let p = nominal_params();
        let target = Pose::new(
            Rotation3::from_euler_angles(0.3, -0.2, 0.5),
            Vector3::new(0.25, 0.1, 0.35),
        );
        let settings = IkSettings {
            seed: 99,
            ..Default::default()
        };
        let a = solve_ik(&p, &target, BaseEnd::EndA, &settings, None).unwrap();
        let b = solve_ik(&p, &target, BaseEnd::EndA, &settings, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = nominal_params();
        let skewed = Pose::from_parts(
            nalgebra::Matrix3::new(1.0, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        );
        assert!(matches!(
            solve_ik(&p, &skewed, BaseEnd::EndA, &IkSettings::default(), None),
            Err(IkError::NonOrthonormalTarget(_))
        ));
        let bad = IkSettings {
            damping: 0.0,
            ..Default::default()
        };
        let target = fk(&p, &[0.0; 6], BaseEnd::EndA).unwrap();
        assert!(matches!(
            solve_ik(&p, &target, BaseEnd::EndA, &bad, None),
            Err(IkError::InvalidSettings(_))
        ));
    }

    #[test]
    fn step_norm_non_increasing_in_damping() {
        let p = nominal_params();
        let chain = limms_chain(&p, BaseEnd::EndA);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let q = random_q(&p, &mut rng);
            let q_t = random_q(&p, &mut rng);
            let target = chain.fk(&q_t);
            let mut last = f64::MAX;
            for damping in [0.05, 0.1, 0.2, 0.5, 1.0] {
                let settings = IkSettings {
                    damping,
                    step_clamp: f64::MAX,
                    ..Default::default()
                };
                let norm = dls_step(&chain, &q, &target, &settings).norm();
                assert!(norm <= last + 1e-12, "step grew with damping {damping}");
                last = norm;
            }
        }
    }

    #[test]
    fn position_only_mode_ignores_rotation() {
        let p = nominal_params();
        let settings = IkSettings {
            rot_weight: 0.0,
            ..Default::default()
        };
        // Reachable position with an arbitrary (likely infeasible) rotation.
        let target = Pose::new(
            Rotation3::from_euler_angles(1.0, 1.0, 1.0),
            Vector3::new(0.2, 0.1, 0.3),
        );
        let result = solve_ik(&p, &target, BaseEnd::EndA, &settings, None).unwrap();
        assert!(result.converged);
        assert!(result.final_pos_err < 1e-4);
    }
}
