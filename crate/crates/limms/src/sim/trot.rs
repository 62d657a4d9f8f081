//! Quadruped trot: four modules legged under a box, kinematic body advance
//! with static stance-force distribution and Bezier swing trajectories.
//!
//! The body moves open loop at the commanded speed with constant height.
//! Stance feet are pinned at their Raibert footstep targets; their joint
//! torques are the static reaction to the shared vertical contact force
//! plus leg gravity. Swing feet track Bezier arcs via position-only IK with
//! gravity-compensation torque only.

use nalgebra::{Rotation3, Vector2, Vector3};

use crate::control::{
    bezier_swing, raibert_footstep, GaitSchedule, Leg, Phase, DEFAULT_RAIBERT_KV,
};
use crate::ik::{solve_ik_chain, IkSettings};
use crate::kinematics::{limms_chain, BaseEnd, JointVector, SerialChain};
use crate::model::ScenarioConfig;
use crate::sim::{static_load_torques, SegmentMasses, SimError, Trace, TraceRow};

/// Total supported weight: box plus all four leg modules, N.
pub fn total_weight(box_mass: f64, module_mass: f64, gravity: f64) -> f64 {
    (box_mass + 4.0 * module_mass) * gravity
}

/// Equal vertical load sharing, zero horizontal: per-foot upward force for
/// `n_stance` feet on the ground.
pub fn stance_force_per_foot(total_weight: f64, n_stance: usize) -> f64 {
    assert!(n_stance > 0, "no stance feet to carry the load");
    total_weight / n_stance as f64
}

struct LegState {
    leg: Leg,
    chain: SerialChain,
    /// Hip offset from the body center, body frame.
    hip_offset: Vector3<f64>,
    /// Lateral foot offset sign (+1 left legs, -1 right legs).
    lateral_sign: f64,
    q: JointVector,
    /// Current stance target or swing touchdown target (world, ground).
    target: Vector2<f64>,
    /// Liftoff position of the current swing (world, ground).
    liftoff: Vector2<f64>,
    last_phase: Phase,
}

fn hip_world(offset: &Vector3<f64>, body_x: f64, body_height: f64) -> Vector3<f64> {
    Vector3::new(body_x + offset.x, offset.y, body_height + offset.z)
}

/// Run the trot scenario: one trace row per leg (module 0-3) per timestep,
/// extras `body_x_m, body_v_mps`.
pub fn run_quadruped_trot(cfg: &ScenarioConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let params = cfg.module_params()?;
    let schedule = GaitSchedule::from_config(&cfg.gait);
    let seg = SegmentMasses::from_end_a(&params.link_masses, &params.link_coms);
    let vel = cfg.gait.vel_mps;
    let body_height = cfg.gait.body_height_m;
    let half = 0.5 * cfg.box_cfg.size_m;
    let foot_offset = cfg.gait.foot_offset_m;
    let weight = total_weight(cfg.box_cfg.mass_kg, params.total_mass, cfg.gravity_mps2);
    // All hips face straight down; the hip frame is the body frame flipped
    // about Y.
    let hip_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI);
    let g_hip = hip_rot.inverse() * Vector3::new(0.0, 0.0, -cfg.gravity_mps2);

    let ik = IkSettings {
        rot_weight: 0.0,
        max_iters: 120,
        restarts: 8,
        seed: cfg.seed,
        ..Default::default()
    };

    let mut legs: Vec<LegState> = Leg::ALL
        .iter()
        .map(|&leg| {
            let (sx, sy) = match leg {
                Leg::FrontLeft => (1.0, 1.0),
                Leg::FrontRight => (1.0, -1.0),
                Leg::BackLeft => (-1.0, 1.0),
                Leg::BackRight => (-1.0, -1.0),
            };
            let hip_offset = Vector3::new(sx * half, sy * half, -half);
            let hip0 = hip_world(&hip_offset, 0.0, body_height);
            let ground0 = Vector2::new(hip0.x, hip0.y + sy * foot_offset);
            let target = raibert_footstep(
                ground0,
                Vector2::new(vel, 0.0),
                Vector2::new(vel, 0.0),
                schedule.stance_s,
                DEFAULT_RAIBERT_KV,
            );
            LegState {
                leg,
                chain: limms_chain(&params, BaseEnd::EndA),
                hip_offset,
                lateral_sign: sy,
                q: [0.0, 0.5, -0.5, -0.5, 0.5, 0.0],
                target,
                liftoff: ground0,
                last_phase: schedule.phase(leg, 0.0).0,
            }
        })
        .collect();

    let dt = cfg.timestep_s;
    let steps = (cfg.duration_s / dt).round() as usize;
    let mut trace = Trace::new(vec!["body_x_m", "body_v_mps"]);

    for k in 0..=steps {
        let t = k as f64 * dt;
        let body_x = vel * t;
        let n_stance = schedule.stance_legs(t).len();
        for (m, leg) in legs.iter_mut().enumerate() {
            let (phase, u) = schedule.phase(leg.leg, t);
            if phase == Phase::Swing && leg.last_phase == Phase::Stance {
                // Liftoff: plan the touchdown with the Raibert heuristic at
                // the predicted hip position.
                leg.liftoff = leg.target;
                let t_td = t + (1.0 - u) * schedule.swing_s;
                let hip_td = hip_world(&leg.hip_offset, vel * t_td, body_height);
                let hip_ground =
                    Vector2::new(hip_td.x, hip_td.y + leg.lateral_sign * foot_offset);
                leg.target = raibert_footstep(
                    hip_ground,
                    Vector2::new(vel, 0.0),
                    Vector2::new(vel, 0.0),
                    schedule.stance_s,
                    DEFAULT_RAIBERT_KV,
                );
            }
            leg.last_phase = phase;

            let foot_world = match phase {
                Phase::Stance => Vector3::new(leg.target.x, leg.target.y, 0.0),
                Phase::Swing => bezier_swing(
                    Vector3::new(leg.liftoff.x, leg.liftoff.y, 0.0),
                    Vector3::new(leg.target.x, leg.target.y, 0.0),
                    schedule.step_height,
                    u,
                ),
            };
            let hip = hip_world(&leg.hip_offset, body_x, body_height);
            let local = hip_rot.inverse() * (foot_world - hip);
            let target_pose = crate::kinematics::Pose::new(Rotation3::identity(), local);
            let sol = solve_ik_chain(
                &leg.chain,
                &params.joint_limits,
                &target_pose,
                &ik,
                Some(&leg.q),
            )
            .map_err(|e| SimError::FootstepIk {
                time_s: t,
                leg: leg.leg.to_string(),
                phase: format!("{phase:?}").to_lowercase(),
                detail: e.to_string(),
            })?;
            if !sol.converged {
                return Err(SimError::FootstepIk {
                    time_s: t,
                    leg: leg.leg.to_string(),
                    phase: format!("{phase:?}").to_lowercase(),
                    detail: format!(
                        "position error {:.3e} m after {} iters",
                        sol.final_pos_err, sol.iters
                    ),
                });
            }
            let mut qd = [0.0; 6];
            if k > 0 {
                for j in 0..6 {
                    qd[j] = (sol.q[j] - leg.q[j]) / dt;
                }
            }
            leg.q = sol.q;

            // Quasi-static torque: cancel gravity plus, in stance, the
            // ground reaction at the foot.
            let tip_force_world = match phase {
                Phase::Stance => Vector3::new(
                    0.0,
                    0.0,
                    stance_force_per_foot(weight, n_stance.max(1)),
                ),
                Phase::Swing => Vector3::zeros(),
            };
            let load = static_load_torques(
                &leg.chain,
                &leg.q,
                &seg,
                g_hip,
                hip_rot.inverse() * tip_force_world,
            );
            let mut tau = [0.0; 6];
            let mut saturated = false;
            for j in 0..6 {
                tau[j] = (-load[j]).clamp(-params.torque_limit, params.torque_limit);
                if tau[j].abs() >= params.torque_limit - 1e-12 {
                    saturated = true;
                }
            }
            if saturated {
                trace.saturation_events += 1;
            }
            trace.rows.push(TraceRow {
                t_s: t,
                module: m,
                q: leg.q,
                qd,
                tau,
                extras: vec![body_x, vel],
            });
        }
    }
    Ok(trace)
}
