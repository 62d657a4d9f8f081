//! Controllers and trajectory generators: per-joint position PID emitting
//! torque, operational-space keyframe plans with joint-space interpolation,
//! Raibert footstep placement, quartic Bezier swing trajectories, the trot
//! phase schedule, and the wheeled-balance PD law.

use nalgebra::{Rotation3, Vector2, Vector3};
use thiserror::Error;

use crate::ik::{solve_ik_chain, IkSettings};
use crate::kinematics::{limms_chain, mirror_joints, BaseEnd, JointVector, Pose};
use crate::model::{BalanceConfig, GaitConfig, ModuleParams, PidConfig};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("IK failed at keyframe {keyframe} for the {module} module (pos err {pos_err:.3e} m, rot err {rot_err:.3e} rad)")]
    IkFailure {
        keyframe: usize,
        module: &'static str,
        pos_err: f64,
        rot_err: f64,
    },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Ik(#[from] crate::ik::IkError),
}

/// Default clamp on the integral torque contribution, N·m.
pub const DEFAULT_INTEGRAL_CLAMP: f64 = 15.0;

/// Decentralized joint PID gains (same gains on every joint).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    /// N·m/rad.
    pub kp: f64,
    /// N·m/(rad·s).
    pub ki: f64,
    /// N·m·s/rad.
    pub kd: f64,
    /// Bound on |ki·∫e dt|, N·m.
    pub integral_clamp: f64,
}

impl PidGains {
    pub fn from_config(cfg: &PidConfig) -> Self {
        PidGains {
            kp: cfg.kp,
            ki: cfg.ki,
            kd: cfg.kd,
            integral_clamp: DEFAULT_INTEGRAL_CLAMP,
        }
    }
}

/// Integrator memory, one accumulator per joint.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PidState {
    pub integral: [f64; 6],
}

/// One PID update: τ = kp·(q_des − q) − kd·q̇ + ki·∫e dt, with the integral
/// contribution clamped and the output saturated to ±`torque_limit`. No
/// cross-joint terms.
pub fn pid_step(
    gains: &PidGains,
    q_des: &JointVector,
    q: &JointVector,
    qd: &JointVector,
    dt: f64,
    state: &mut PidState,
    torque_limit: f64,
) -> JointVector {
    assert!(dt > 0.0, "pid_step needs dt > 0, got {dt}");
    let mut tau = [0.0; 6];
    for j in 0..6 {
        let e = q_des[j] - q[j];
        state.integral[j] += e * dt;
        if gains.ki > 0.0 {
            let bound = gains.integral_clamp / gains.ki;
            state.integral[j] = state.integral[j].clamp(-bound, bound);
        }
        let raw = gains.kp * e - gains.kd * qd[j] + gains.ki * state.integral[j];
        tau[j] = raw.clamp(-torque_limit, torque_limit);
    }
    tau
}

/// One operational-space keyframe with its converged IK solution, expressed
/// in the module's base latch frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub time_s: f64,
    pub pose: Pose,
    pub q: JointVector,
}

/// Timed keyframes tracked by joint-space linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframePlan {
    pub keyframes: Vec<Keyframe>,
}

impl KeyframePlan {
    pub fn validate(&self) -> Result<(), ControlError> {
        if self.keyframes.len() < 2 {
            return Err(ControlError::InvalidPlan(
                "need at least two keyframes".into(),
            ));
        }
        for w in self.keyframes.windows(2) {
            if w[1].time_s <= w[0].time_s {
                return Err(ControlError::InvalidPlan(format!(
                    "timestamps not strictly increasing: {} then {}",
                    w[0].time_s, w[1].time_s
                )));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.keyframes.last().map(|k| k.time_s).unwrap_or(0.0)
    }

    /// Desired joint position and velocity at `t`, clamped to the plan's
    /// time span (zero velocity outside it).
    pub fn sample(&self, t: f64) -> (JointVector, JointVector) {
        let first = &self.keyframes[0];
        let last = self.keyframes.last().unwrap();
        if t <= first.time_s {
            return (first.q, [0.0; 6]);
        }
        if t >= last.time_s {
            return (last.q, [0.0; 6]);
        }
        let seg = self
            .keyframes
            .windows(2)
            .find(|w| t < w[1].time_s)
            .unwrap();
        let dt = seg[1].time_s - seg[0].time_s;
        let alpha = (t - seg[0].time_s) / dt;
        let mut q = [0.0; 6];
        let mut qd = [0.0; 6];
        for j in 0..6 {
            let dq = seg[1].q[j] - seg[0].q[j];
            q[j] = seg[0].q[j] + alpha * dq;
            qd[j] = dq / dt;
        }
        (q, qd)
    }

    /// Largest commanded joint speed over all segments, rad/s.
    pub fn max_joint_speed(&self) -> f64 {
        self.keyframes
            .windows(2)
            .flat_map(|w| {
                let dt = w[1].time_s - w[0].time_s;
                (0..6).map(move |j| ((w[1].q[j] - w[0].q[j]) / dt).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Keyframe plans for the two modules of a dual lift. The left module is
/// anchored by its end A, the right by its end B.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftPlans {
    pub left: KeyframePlan,
    pub right: KeyframePlan,
}

/// World poses of the two base latch frames for a standard dual lift.
///
/// Both anchors sit on the box's ±X axis at `standoff` from the center,
/// chain axes pointing horizontally at the box, raised `raise` above the
/// box center. The raise keeps the grasp targets off the chain axis, where
/// the flush latch orientation is outside the wrist's orientation
/// workspace.
pub fn standard_lift_anchors(box_pose: &Pose, standoff: f64, raise: f64) -> (Pose, Pose) {
    let toward_box =
        Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
    let left = Pose::new(
        box_pose.rotation * toward_box,
        box_pose.translation
            + box_pose.rotation * Vector3::new(-standoff, 0.0, raise),
    );
    let right = mirror_about_box_axis(box_pose).compose(&left);
    (left, right)
}

/// Rigid map rotating the world by π about the vertical axis through the box
/// center: carries the left module's geometry onto the right's.
fn mirror_about_box_axis(box_pose: &Pose) -> Pose {
    let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
    Pose::new(rot, box_pose.translation - rot * box_pose.translation)
}

/// Plan the three-keyframe lift (pre-lift at the box face, lifted, placed)
/// for both modules.
///
/// Keyframes sit at t = 0, duration/2, duration. The right module's targets
/// are the left's mapped through the π-about-vertical box symmetry, so with
/// mirrored anchors its IK (warm-started at `mirror_joints` of the left
/// solution) lands on the exactly mirrored branch.
#[allow(clippy::too_many_arguments)]
pub fn plan_lift_keyframes(
    box_pose: &Pose,
    anchors: &(Pose, Pose),
    box_size: f64,
    lift_height: f64,
    place_height: f64,
    duration_s: f64,
    params: &ModuleParams,
    settings: &IkSettings,
) -> Result<LiftPlans, ControlError> {
    if !(duration_s > 0.0) || !(box_size > 0.0) {
        return Err(ControlError::InvalidPlan(format!(
            "duration {duration_s} s and box size {box_size} m must be positive"
        )));
    }
    let chain_left = limms_chain(params, BaseEnd::EndA);
    let chain_right = limms_chain(params, BaseEnd::EndB);
    // Grasp orientation: the free-end latch as the straight chain would
    // present it from the left anchor.
    let grasp_rot = anchors.0.rotation * chain_left.fk(&[0.0; 6]).rotation;
    let grasp_pos =
        box_pose.translation - box_pose.rotation * (0.5 * box_size * Vector3::x());
    let lift = Vector3::new(0.0, 0.0, lift_height);
    let place = Vector3::new(0.0, 0.0, place_height);
    let world_targets = [
        (0.0, Pose::new(grasp_rot, grasp_pos)),
        (0.5 * duration_s, Pose::new(grasp_rot, grasp_pos + lift)),
        (duration_s, Pose::new(grasp_rot, grasp_pos + place)),
    ];
    let mirror = mirror_about_box_axis(box_pose);
    let base_inv = (anchors.0.inverse(), anchors.1.inverse());

    let mut left = Vec::with_capacity(3);
    let mut right = Vec::with_capacity(3);
    let mut warm_left: Option<JointVector> = None;
    for (i, (time_s, world)) in world_targets.iter().enumerate() {
        let target_left = base_inv.0.compose(world);
        let sol_left = solve_ik_chain(
            &chain_left,
            &params.joint_limits,
            &target_left,
            settings,
            warm_left.as_ref(),
        )?;
        if !sol_left.converged {
            return Err(ControlError::IkFailure {
                keyframe: i + 1,
                module: "left",
                pos_err: sol_left.final_pos_err,
                rot_err: sol_left.final_rot_err,
            });
        }
        warm_left = Some(sol_left.q);

        let target_right = base_inv.1.compose(&mirror.compose(world));
        let warm_right = mirror_joints(&sol_left.q);
        let sol_right = solve_ik_chain(
            &chain_right,
            &params.joint_limits,
            &target_right,
            settings,
            Some(&warm_right),
        )?;
        if !sol_right.converged {
            return Err(ControlError::IkFailure {
                keyframe: i + 1,
                module: "right",
                pos_err: sol_right.final_pos_err,
                rot_err: sol_right.final_rot_err,
            });
        }
        left.push(Keyframe {
            time_s: *time_s,
            pose: target_left,
            q: sol_left.q,
        });
        right.push(Keyframe {
            time_s: *time_s,
            pose: target_right,
            q: sol_right.q,
        });
    }
    let plans = LiftPlans {
        left: KeyframePlan { keyframes: left },
        right: KeyframePlan { keyframes: right },
    };
    plans.left.validate()?;
    plans.right.validate()?;
    Ok(plans)
}

/// Raibert footstep placement on the ground plane:
/// p = p_hip + (stance/2)·v + k_v·(v − v_des).
pub fn raibert_footstep(
    p_hip_ground: Vector2<f64>,
    v_body: Vector2<f64>,
    vel_des: Vector2<f64>,
    stance_s: f64,
    k_v: f64,
) -> Vector2<f64> {
    assert!(stance_s > 0.0, "stance_s must be positive, got {stance_s}");
    p_hip_ground + 0.5 * stance_s * v_body + k_v * (v_body - vel_des)
}

/// Default Raibert velocity-feedback gain, s.
pub const DEFAULT_RAIBERT_KV: f64 = 0.03;

/// Quartic Bezier swing-foot position at phase `u` in [0, 1].
///
/// Control points: endpoints exact, the two inner neighbors share their
/// endpoint's height (zero vertical velocity at touchdown/liftoff), and the
/// middle point is raised so the mid-swing height exceeds the endpoint mean
/// by exactly `step_height`.
pub fn bezier_swing(
    p_start: Vector3<f64>,
    p_end: Vector3<f64>,
    step_height: f64,
    u: f64,
) -> Vector3<f64> {
    assert!((0.0..=1.0).contains(&u), "phase {u} outside [0, 1]");
    let mut c1 = p_start.lerp(&p_end, 0.25);
    c1.z = p_start.z;
    let mut c3 = p_start.lerp(&p_end, 0.75);
    c3.z = p_end.z;
    let mut c2 = p_start.lerp(&p_end, 0.5);
    c2.z = 0.5 * (p_start.z + p_end.z) + (8.0 / 3.0) * step_height;
    let v = 1.0 - u;
    let b = [
        v * v * v * v,
        4.0 * v * v * v * u,
        6.0 * v * v * u * u,
        4.0 * v * u * u * u,
        u * u * u * u,
    ];
    b[0] * p_start + b[1] * c1 + b[2] * c2 + b[3] * c3 + b[4] * p_end
}

/// Quadruped leg identifiers; legs sit at the box's bottom corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Leg {
    FrontLeft,
    FrontRight,
    BackLeft,
    BackRight,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FrontLeft, Leg::FrontRight, Leg::BackLeft, Leg::BackRight];

    pub fn index(self) -> usize {
        match self {
            Leg::FrontLeft => 0,
            Leg::FrontRight => 1,
            Leg::BackLeft => 2,
            Leg::BackRight => 3,
        }
    }

    /// Diagonal pair membership: {FL, BR} is pair A, {FR, BL} is pair B.
    pub fn in_pair_a(self) -> bool {
        matches!(self, Leg::FrontLeft | Leg::BackRight)
    }
}

impl std::fmt::Display for Leg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Leg::FrontLeft => "front-left",
            Leg::FrontRight => "front-right",
            Leg::BackLeft => "back-left",
            Leg::BackRight => "back-right",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Stance,
    Swing,
}

/// Trot timing: diagonal pair A swings first, pair B while A stances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitSchedule {
    pub stance_s: f64,
    pub swing_s: f64,
    /// Desired forward body speed, m/s.
    pub vel_des: f64,
    /// Swing apex height above the ground line, m.
    pub step_height: f64,
}

impl GaitSchedule {
    pub fn from_config(cfg: &GaitConfig) -> Self {
        GaitSchedule {
            stance_s: cfg.stance_s,
            swing_s: cfg.swing_s,
            vel_des: cfg.vel_mps,
            step_height: cfg.step_height_m,
        }
    }

    pub fn period(&self) -> f64 {
        self.stance_s + self.swing_s
    }

    /// Phase of `leg` at time `t` and the fraction elapsed within that
    /// phase, in [0, 1).
    pub fn phase(&self, leg: Leg, t: f64) -> (Phase, f64) {
        let tm = t.rem_euclid(self.period());
        if leg.in_pair_a() {
            // Pair A swings over [0, swing_s).
            if tm < self.swing_s {
                (Phase::Swing, tm / self.swing_s)
            } else {
                (Phase::Stance, (tm - self.swing_s) / self.stance_s)
            }
        } else {
            // Pair B stances over [0, stance_s).
            if tm < self.stance_s {
                (Phase::Stance, tm / self.stance_s)
            } else {
                (Phase::Swing, (tm - self.stance_s) / self.swing_s)
            }
        }
    }

    /// Legs currently on the ground.
    pub fn stance_legs(&self, t: f64) -> Vec<Leg> {
        Leg::ALL
            .iter()
            .copied()
            .filter(|&leg| self.phase(leg, t).0 == Phase::Stance)
            .collect()
    }
}

/// Gains of the wheeled-balance PD law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceGains {
    /// N·m/rad.
    pub kp_theta: f64,
    /// N·m·s/rad.
    pub kd_theta: f64,
    /// N·m·s/m.
    pub kp_v: f64,
}

impl BalanceGains {
    pub fn from_config(cfg: &BalanceConfig) -> Self {
        BalanceGains {
            kp_theta: cfg.kp_theta,
            kd_theta: cfg.kd_theta,
            kp_v: cfg.kp_v,
        }
    }
}

/// Wheel torque of the balance controller:
/// τ = kp_θ·θ + kd_θ·θ̇ + kp_v·(v − v_des), saturated to ±`torque_limit`.
pub fn balance_torque(
    gains: &BalanceGains,
    theta: f64,
    theta_dot: f64,
    v: f64,
    v_des: f64,
    torque_limit: f64,
) -> f64 {
    let raw = gains.kp_theta * theta + gains.kd_theta * theta_dot + gains.kp_v * (v - v_des);
    raw.clamp(-torque_limit, torque_limit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::fk;
    use crate::model::nominal_params;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gains() -> PidGains {
        PidGains {
            kp: 60.0,
            ki: 2.0,
            kd: 4.0,
            integral_clamp: 15.0,
        }
    }

    #[test]
    fn pid_equilibrium_outputs_zero() {
        let mut state = PidState::default();
        let tau = pid_step(
            &gains(),
            &[0.3; 6],
            &[0.3; 6],
            &[0.0; 6],
            1e-3,
            &mut state,
            31.0,
        );
        assert_eq!(tau, [0.0; 6]);
    }

    #[test]
    fn pid_proportional_law() {
        let g = PidGains {
            kp: 10.0,
            ki: 0.0,
            kd: 0.0,
            integral_clamp: 15.0,
        };
        let mut state = PidState::default();
        let tau = pid_step(&g, &[0.5; 6], &[0.0; 6], &[0.0; 6], 1e-3, &mut state, 31.0);
        for t in tau {
            assert_abs_diff_eq!(t, 5.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn pid_integral_contribution_clamped() {
        let g = PidGains {
            kp: 0.0,
            ki: 100.0,
            kd: 0.0,
            integral_clamp: 2.0,
        };
        let mut state = PidState::default();
        let mut tau = [0.0; 6];
        for _ in 0..10_000 {
            tau = pid_step(&g, &[1.0; 6], &[0.0; 6], &[0.0; 6], 1e-2, &mut state, 31.0);
        }
        assert_abs_diff_eq!(tau[0], 2.0, epsilon = 1e-9);
    }

    #[test]
    fn raibert_matches_formula() {
        let hip = Vector2::new(0.2, 0.1);
        assert_eq!(
            raibert_footstep(hip, Vector2::zeros(), Vector2::zeros(), 0.5, 0.03),
            hip
        );
        let p = raibert_footstep(
            Vector2::zeros(),
            Vector2::new(0.3, 0.0),
            Vector2::new(0.3, 0.0),
            0.5,
            0.03,
        );
        assert_abs_diff_eq!(p.x, 0.075, epsilon = 1e-12);
        let p = raibert_footstep(
            Vector2::zeros(),
            Vector2::zeros(),
            Vector2::new(0.3, 0.0),
            0.5,
            0.03,
        );
        assert_abs_diff_eq!(p.x, -0.009, epsilon = 1e-12);
    }

    #[test]
    fn bezier_endpoints_and_apex() {
        let a = Vector3::new(0.1, -0.2, 0.0);
        let b = Vector3::new(0.25, -0.2, 0.0);
        assert_eq!(bezier_swing(a, b, 0.05, 0.0), a);
        assert_eq!(bezier_swing(a, b, 0.05, 1.0), b);
        let same = Vector3::new(0.1, 0.0, 0.0);
        let apex = bezier_swing(same, same, 0.05, 0.5);
        assert_abs_diff_eq!(apex.z, 0.05, epsilon = 1e-9);
        // Endpoint vertical velocity is zero: height stays quartically flat.
        let eps = 1e-4;
        assert!(bezier_swing(a, b, 0.05, eps).z < 0.05 * 6.0 * eps * eps * 3.0);
    }

    #[test]
    fn bezier_horizontal_monotone() {
        let a = Vector3::new(0.0, 0.0, 0.0);
        let b = Vector3::new(0.15, 0.05, 0.0);
        let mut prev = bezier_swing(a, b, 0.05, 0.0);
        for k in 1..=200 {
            let p = bezier_swing(a, b, 0.05, k as f64 / 200.0);
            assert!(p.x >= prev.x - 1e-12);
            assert!(p.y >= prev.y - 1e-12);
            prev = p;
        }
    }

    #[test]
    fn gait_phase_diagonal_and_periodic() {
        let g = GaitSchedule {
            stance_s: 0.5,
            swing_s: 0.5,
            vel_des: 0.3,
            step_height: 0.05,
        };
        for k in 0..400 {
            let t = k as f64 * 0.0173;
            let swinging: Vec<Leg> = Leg::ALL
                .iter()
                .copied()
                .filter(|&l| g.phase(l, t).0 == Phase::Swing)
                .collect();
            assert_eq!(swinging.len(), 2, "at t = {t}");
            assert_eq!(
                swinging[0].in_pair_a(),
                swinging[1].in_pair_a(),
                "swing legs must be a diagonal pair at t = {t}"
            );
            for leg in Leg::ALL {
                let (ph_a, u_a) = g.phase(leg, t);
                let (ph_b, u_b) = g.phase(leg, t + g.period());
                assert_eq!(ph_a, ph_b);
                assert_abs_diff_eq!(u_a, u_b, epsilon = 1e-9);
            }
        }
        // Pair A swings first, pair B second.
        assert_eq!(g.phase(Leg::FrontLeft, 0.1).0, Phase::Swing);
        assert_eq!(g.phase(Leg::FrontRight, 0.1).0, Phase::Stance);
        assert_eq!(g.phase(Leg::FrontLeft, 0.6).0, Phase::Stance);
        assert_eq!(g.phase(Leg::BackLeft, 0.6).0, Phase::Swing);
    }

    #[test]
    fn balance_torque_law() {
        let g = BalanceGains {
            kp_theta: 20.0,
            kd_theta: 0.0,
            kp_v: 0.0,
        };
        assert_eq!(balance_torque(&g, 0.0, 0.0, 0.5, 0.5, 31.0), 0.0);
        assert_abs_diff_eq!(balance_torque(&g, 0.1, 0.0, 0.0, 0.0, 31.0), 2.0, epsilon = 1e-12);
        assert_eq!(balance_torque(&g, 10.0, 0.0, 0.0, 0.0, 31.0), 31.0);
    }

    fn nominal_plans() -> LiftPlans {
        let params = nominal_params();
        let box_pose = Pose::identity();
        let anchors = standard_lift_anchors(&box_pose, 0.6, 0.10);
        plan_lift_keyframes(
            &box_pose,
            &anchors,
            0.3,
            0.05,
            0.025,
            10.0,
            &params,
            &IkSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn lift_plans_are_mirror_consistent() {
        let plans = nominal_plans();
        for t in [0.0, 1.3, 2.5, 5.0, 7.7, 10.0] {
            let (ql, _) = plans.left.sample(t);
            let (qr, _) = plans.right.sample(t);
            let mirrored = crate::kinematics::mirror_joints(&ql);
            for j in 0..6 {
                assert!(
                    (qr[j] - mirrored[j]).abs() < 1e-6,
                    "t = {t}, joint {j}: {} vs {}",
                    qr[j],
                    mirrored[j]
                );
            }
        }
    }

    #[test]
    fn lift_plan_velocity_within_limit() {
        let plans = nominal_plans();
        assert!(plans.left.max_joint_speed() <= 2.0);
        assert!(plans.right.max_joint_speed() <= 2.0);
    }

    #[test]
    fn lift_plan_keyframes_hit_targets() {
        let params = nominal_params();
        let plans = nominal_plans();
        for kf in &plans.left.keyframes {
            let pose = fk(&params, &kf.q, BaseEnd::EndA).unwrap();
            assert!((pose.translation - kf.pose.translation).norm() < 1e-4);
        }
        assert_eq!(plans.left.keyframes.len(), 3);
        assert_eq!(plans.left.keyframes[0].time_s, 0.0);
        assert_eq!(plans.left.keyframes[1].time_s, 5.0);
        assert_eq!(plans.left.keyframes[2].time_s, 10.0);
    }

    #[test]
    fn unreachable_box_names_keyframe_one() {
        let params = nominal_params();
        let box_pose = Pose::identity();
        // Anchors so far out that the box face is beyond the 0.75 m reach.
        let anchors = standard_lift_anchors(&box_pose, 1.2, 0.10);
        let err = plan_lift_keyframes(
            &box_pose,
            &anchors,
            0.3,
            0.05,
            0.025,
            10.0,
            &params,
            &IkSettings::default(),
        )
        .unwrap_err();
        match err {
            ControlError::IkFailure { keyframe, .. } => assert_eq!(keyframe, 1),
            other => panic!("expected IK failure, got {other}"),
        }
    }

    #[test]
    fn keyframe_sampling_is_piecewise_linear() {
        let plans = nominal_plans();
        let plan = &plans.left;
        let (q0, _) = plan.sample(0.0);
        let (q5, _) = plan.sample(5.0);
        let (qm, qdm) = plan.sample(2.5);
        for j in 0..6 {
            assert_abs_diff_eq!(qm[j], 0.5 * (q0[j] + q5[j]), epsilon = 1e-12);
            assert_abs_diff_eq!(qdm[j], (q5[j] - q0[j]) / 5.0, epsilon = 1e-12);
        }
        let (_, qd_end) = plan.sample(11.0);
        assert_eq!(qd_end, [0.0; 6]);
    }

    proptest! {
        #[test]
        fn pid_always_saturated(
            e in proptest::array::uniform6(-10.0f64..10.0),
            qd in proptest::array::uniform6(-10.0f64..10.0),
            integral in proptest::array::uniform6(-100.0f64..100.0),
        ) {
            let mut state = PidState { integral };
            let tau = pid_step(&gains(), &e, &[0.0; 6], &qd, 1e-3, &mut state, 31.0);
            for t in tau {
                prop_assert!(t.abs() <= 31.0);
            }
        }

        #[test]
        fn balance_torque_always_saturated(
            theta in -10.0f64..10.0,
            theta_dot in -50.0f64..50.0,
            v in -10.0f64..10.0,
        ) {
            let g = BalanceGains { kp_theta: 120.0, kd_theta: 18.0, kp_v: 4.0 };
            prop_assert!(balance_torque(&g, theta, theta_dot, v, 0.0, 31.0).abs() <= 31.0);
        }

        #[test]
        fn bezier_stays_finite_and_endpoint_exact(
            ax in -0.5f64..0.5, ay in -0.5f64..0.5,
            bx in -0.5f64..0.5, by in -0.5f64..0.5,
            h in 0.0f64..0.2,
        ) {
            let a = Vector3::new(ax, ay, 0.0);
            let b = Vector3::new(bx, by, 0.0);
            prop_assert_eq!(bezier_swing(a, b, h, 0.0), a);
            prop_assert_eq!(bezier_swing(a, b, h, 1.0), b);
        }
    }
}
