//! Planar wheeled-inverted-pendulum balance mode.
//!
//! The module stands on its end hub's wheel with all joints held at zero,
//! so the body is a straight stack of the remaining segments. Dynamics are
//! the standard two-variable wheeled-inverted-pendulum equations in
//! (x, θ), integrated with fixed-step RK4 under the balance PD law.

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector2, Vector4};

use crate::control::{balance_torque, BalanceGains};
use crate::model::{ModuleParams, ScenarioConfig};
use crate::sim::{SimError, Trace, TraceRow};

/// Tilt magnitude treated as a fall, rad.
pub const FALL_THETA: f64 = std::f64::consts::FRAC_PI_3;

/// Reduced planar model: wheel (the ground-side hub lump) plus a rigid
/// body (the remaining segments stacked above the axle).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceModel {
    /// Wheel mass, kg.
    pub m_w: f64,
    /// Body mass, kg.
    pub m_b: f64,
    /// Wheel spin inertia, kg·m².
    pub i_w: f64,
    /// Body inertia about its COM, kg·m².
    pub i_b: f64,
    /// Body COM distance above the axle, m.
    pub l: f64,
    /// Wheel radius, m.
    pub r: f64,
    /// Gravity, m/s².
    pub g: f64,
}

/// Build the planar model from module parameters at the zero (straight)
/// configuration: segment 1 is the wheel, segments 2-5 stack above the
/// axle as thin rods.
pub fn balance_model(params: &ModuleParams, gravity: f64) -> BalanceModel {
    let m_w = params.link_masses[0];
    let r = params.wheel_radius;
    let i_w = 0.5 * m_w * r * r;
    let mut m_b = 0.0;
    let mut moment = 0.0;
    let mut heights = [0.0; 5];
    let mut z = 0.0;
    for i in 1..5 {
        heights[i] = z + params.link_coms[i];
        z += params.link_lengths[i];
        m_b += params.link_masses[i];
        moment += params.link_masses[i] * heights[i];
    }
    let l = moment / m_b;
    let mut i_b = 0.0;
    for i in 1..5 {
        let seg_len = params.link_lengths[i];
        let d = heights[i] - l;
        i_b += params.link_masses[i] * (seg_len * seg_len / 12.0 + d * d);
    }
    BalanceModel {
        m_w,
        m_b,
        i_w,
        i_b,
        l,
        r,
        g: gravity,
    }
}

/// State [x, ẋ, θ, θ̇]: wheel ground position and body tilt from upright.
pub type BalanceState = Vector4<f64>;

fn mass_matrix(model: &BalanceModel, theta: f64) -> Matrix2<f64> {
    let m_t = model.m_b + model.m_w + model.i_w / (model.r * model.r);
    let c = model.m_b * model.l * theta.cos();
    Matrix2::new(m_t, c, c, model.i_b + model.m_b * model.l * model.l)
}

/// Time derivative of the state under wheel torque `tau`.
pub fn dynamics(model: &BalanceModel, state: &BalanceState, tau: f64) -> BalanceState {
    let theta = state[2];
    let omega = state[3];
    let rhs = Vector2::new(
        model.m_b * model.l * theta.sin() * omega * omega + tau / model.r,
        model.m_b * model.g * model.l * theta.sin() - tau,
    );
    let acc = mass_matrix(model, theta)
        .lu()
        .solve(&rhs)
        .expect("mass matrix is positive definite");
    Vector4::new(state[1], acc[0], state[3], acc[1])
}

/// One classical RK4 step with the torque held constant across the step.
pub fn rk4_step(model: &BalanceModel, state: &BalanceState, tau: f64, dt: f64) -> BalanceState {
    let k1 = dynamics(model, state, tau);
    let k2 = dynamics(model, &(state + 0.5 * dt * k1), tau);
    let k3 = dynamics(model, &(state + 0.5 * dt * k2), tau);
    let k4 = dynamics(model, &(state + dt * k3), tau);
    state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Total mechanical energy (kinetic + potential above the axle plane).
pub fn mechanical_energy(model: &BalanceModel, state: &BalanceState) -> f64 {
    let v = state[1];
    let theta = state[2];
    let omega = state[3];
    let m_t = model.m_b + model.m_w + model.i_w / (model.r * model.r);
    0.5 * m_t * v * v
        + model.m_b * model.l * theta.cos() * v * omega
        + 0.5 * (model.i_b + model.m_b * model.l * model.l) * omega * omega
        + model.m_b * model.g * model.l * theta.cos()
}

/// Small-angle linearization about upright: ẋ = A·x + B·τ with state
/// [x, ẋ, θ, θ̇].
pub fn linearized_balance_model(params: &ModuleParams, gravity: f64) -> (Matrix4<f64>, Vector4<f64>) {
    let model = balance_model(params, gravity);
    let minv = mass_matrix(&model, 0.0)
        .try_inverse()
        .expect("mass matrix is positive definite");
    let mgl = model.m_b * model.g * model.l;
    let mut a = Matrix4::zeros();
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(1, 2)] = minv[(0, 1)] * mgl;
    a[(3, 2)] = minv[(1, 1)] * mgl;
    let b = Vector4::new(
        0.0,
        minv[(0, 0)] / model.r - minv[(0, 1)],
        0.0,
        minv[(1, 0)] / model.r - minv[(1, 1)],
    );
    (a, b)
}

/// Closed-loop matrix under τ = kp_θ·θ + kd_θ·θ̇ + kp_v·(ẋ − v_des).
pub fn closed_loop_matrix(params: &ModuleParams, gravity: f64, gains: &BalanceGains) -> Matrix4<f64> {
    let (a, b) = linearized_balance_model(params, gravity);
    let k = Vector4::new(0.0, gains.kp_v, gains.kp_theta, gains.kd_theta);
    a + b * k.transpose()
}

/// Eigenvalues of the non-cyclic (ẋ, θ, θ̇) subsystem. The wheel position
/// itself is unregulated and contributes an exact zero mode, so stability
/// statements refer to these three.
pub fn subsystem_eigenvalues(m: &Matrix4<f64>) -> Vec<nalgebra::Complex<f64>> {
    let mut sub = DMatrix::zeros(3, 3);
    for (ri, r) in [1usize, 2, 3].iter().enumerate() {
        for (ci, c) in [1usize, 2, 3].iter().enumerate() {
            sub[(ri, ci)] = m[(*r, *c)];
        }
    }
    sub.complex_eigenvalues().iter().copied().collect()
}

/// Run the balance scenario: module 0, joints held at zero, wheel torque in
/// `tau1_nm`, extras `body_x_m, body_v_mps, theta_rad, theta_dot_radps`.
pub fn run_wheel_balance(cfg: &ScenarioConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let params = cfg.module_params()?;
    let model = balance_model(&params, cfg.gravity_mps2);
    let gains = BalanceGains::from_config(&cfg.balance);
    let dt = cfg.timestep_s;
    let steps = (cfg.duration_s / dt).round() as usize;
    let mut state = Vector4::new(0.0, 0.0, cfg.balance.theta0_rad, 0.0);
    let mut trace = Trace::new(vec![
        "body_x_m",
        "body_v_mps",
        "theta_rad",
        "theta_dot_radps",
    ]);
    for k in 0..=steps {
        let t = k as f64 * dt;
        if state[2].abs() > FALL_THETA {
            return Err(SimError::Fall {
                time_s: t,
                theta: state[2].abs(),
            });
        }
        let tau = balance_torque(
            &gains,
            state[2],
            state[3],
            state[1],
            cfg.balance.v_des_mps,
            params.torque_limit,
        );
        if tau.abs() >= params.torque_limit - 1e-12 {
            trace.saturation_events += 1;
        }
        let mut tau_row = [0.0; 6];
        tau_row[0] = tau;
        trace.rows.push(TraceRow {
            t_s: t,
            module: 0,
            q: [0.0; 6],
            qd: [0.0; 6],
            tau: tau_row,
            extras: vec![state[0], state[1], state[2], state[3]],
        });
        state = rk4_step(&model, &state, tau, dt);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{nominal_params, ScenarioKind};
    use approx::assert_abs_diff_eq;

    fn nominal_cfg() -> ScenarioConfig {
        ScenarioConfig::defaults_for(ScenarioKind::WheelBalance)
    }

    #[test]
    fn equilibrium_is_invariant() {
        let mut cfg = nominal_cfg();
        cfg.balance.theta0_rad = 0.0;
        cfg.duration_s = 2.0;
        let trace = run_wheel_balance(&cfg).unwrap();
        for row in &trace.rows {
            assert_eq!(row.tau[0], 0.0);
            assert_eq!(row.extras[2], 0.0);
        }
    }

    #[test]
    fn settles_from_initial_tilt() {
        let cfg = nominal_cfg();
        let trace = run_wheel_balance(&cfg).unwrap();
        let settled = trace
            .rows
            .iter()
            .filter(|r| r.t_s >= 3.0)
            .all(|r| r.extras[2].abs() < 0.01);
        assert!(settled, "theta did not settle below 0.01 rad by t = 3 s");
    }

    #[test]
    fn tracks_desired_speed() {
        let mut cfg = nominal_cfg();
        cfg.balance.theta0_rad = 0.0;
        cfg.balance.v_des_mps = 0.5;
        let trace = run_wheel_balance(&cfg).unwrap();
        let tail: Vec<f64> = trace
            .rows
            .iter()
            .filter(|r| r.t_s >= 5.0)
            .map(|r| r.extras[1])
            .collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!(
            (mean - 0.5).abs() < 0.025,
            "steady-state speed {mean} not within 5% of 0.5"
        );
    }

    #[test]
    fn open_loop_unstable_closed_loop_stable() {
        let p = nominal_params();
        let (a, _) = linearized_balance_model(&p, 9.81);
        assert!(a[(3, 2)] > 0.0);
        let open = subsystem_eigenvalues(&a);
        assert!(open.iter().any(|e| e.re > 1e-6), "open-loop eigs {open:?}");
        let gains = BalanceGains::from_config(&crate::model::BalanceConfig::default());
        let closed = subsystem_eigenvalues(&closed_loop_matrix(&p, 9.81, &gains));
        assert!(
            closed.iter().all(|e| e.re < -1e-6),
            "closed-loop eigs {closed:?}"
        );
    }

    #[test]
    fn passive_energy_conserved() {
        let p = nominal_params();
        let model = balance_model(&p, 9.81);
        let mut state = Vector4::new(0.0, 0.0, 0.5, 0.0);
        let e0 = mechanical_energy(&model, &state);
        let dt = 1e-3;
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            state = rk4_step(&model, &state, 0.0, dt);
            worst = worst.max((mechanical_energy(&model, &state) - e0).abs());
        }
        assert!(
            worst / e0.abs() < 1e-3,
            "energy drift {:.3e} relative to {e0}",
            worst / e0.abs()
        );
    }

    #[test]
    fn fall_detection_aborts() {
        let mut cfg = nominal_cfg();
        cfg.balance.kp_theta = 0.0;
        cfg.balance.kd_theta = 0.0;
        cfg.balance.kp_v = 0.0;
        cfg.balance.theta0_rad = 0.3;
        match run_wheel_balance(&cfg) {
            Err(SimError::Fall { .. }) => {}
            other => panic!("expected fall, got {other:?}"),
        }
    }

    #[test]
    fn balance_is_deterministic() {
        let cfg = nominal_cfg();
        let a = run_wheel_balance(&cfg).unwrap();
        let b = run_wheel_balance(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn model_geometry_is_sane() {
        let model = balance_model(&nominal_params(), 9.81);
        assert!(model.l > 0.2 && model.l < 0.6, "COM height {}", model.l);
        assert_abs_diff_eq!(
            model.m_w + model.m_b,
            nominal_params().total_mass,
            epsilon = 1e-12
        );
        assert!(model.i_b > 0.0);
    }

    #[test]
    fn energy_abort_on_nan_never_happens_in_nominal_run() {
        let trace = run_wheel_balance(&nominal_cfg()).unwrap();
        assert!(trace.rows.iter().all(|r| r.extras.iter().all(|v| v.is_finite())));
    }
}
