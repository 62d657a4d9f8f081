//! Reduced-order scenario engines producing per-timestep joint traces.
//!
//! Three engines cover the toolkit's scenarios: a dual-arm lift with
//! per-joint decoupled dynamics, a quadruped trot with kinematic body
//! advance and static stance forces, and a planar wheeled inverted
//! pendulum. All runs are single-threaded, fixed-step, and deterministic
//! for a given config.

pub mod balance;
pub mod dual_lift;
pub mod trot;

use std::io::Write;
use std::path::Path;

use nalgebra::Vector3;
use thiserror::Error;

use crate::control::ControlError;
use crate::kinematics::{JointVector, Primitive, SerialChain};
use crate::model::{save_config, ModelError, ScenarioConfig};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("instability at t = {time_s:.3} s: {detail}")]
    Instability { time_s: f64, detail: String },
    #[error("fall at t = {time_s:.3} s: |theta| = {theta:.3} rad exceeds pi/3")]
    Fall { time_s: f64, theta: f64 },
    #[error("IK failure at t = {time_s:.3} s for the {leg} leg during {phase}: {detail}")]
    FootstepIk {
        time_s: f64,
        leg: String,
        phase: String,
        detail: String,
    },
    #[error("io error writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One module's row at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t_s: f64,
    pub module: usize,
    pub q: JointVector,
    pub qd: JointVector,
    pub tau: JointVector,
    /// Scenario-specific extras, matching `Trace::extra_columns`.
    pub extras: Vec<f64>,
}

/// A complete scenario trace plus bookkeeping for the run report.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    pub extra_columns: Vec<&'static str>,
    /// Timesteps at which some commanded torque hit the saturation bound.
    pub saturation_events: usize,
    /// Human-readable event log (saturation onsets, phase changes, ...).
    pub events: Vec<String>,
}

impl Trace {
    pub fn new(extra_columns: Vec<&'static str>) -> Self {
        Trace {
            rows: Vec::new(),
            extra_columns,
            saturation_events: 0,
            events: Vec::new(),
        }
    }

    pub fn header(&self) -> String {
        let mut cols: Vec<String> = vec!["t_s".into(), "module".into()];
        cols.extend((1..=6).map(|j| format!("q{j}_rad")));
        cols.extend((1..=6).map(|j| format!("qd{j}_radps")));
        cols.extend((1..=6).map(|j| format!("tau{j}_nm")));
        cols.extend(self.extra_columns.iter().map(|c| c.to_string()));
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(&self.header());
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:.6},{}", row.t_s, row.module));
            for v in row.q.iter().chain(row.qd.iter()).chain(row.tau.iter()) {
                out.push_str(&format!(",{v:.9e}"));
            }
            for v in &row.extras {
                out.push_str(&format!(",{v:.9e}"));
            }
            out.push('\n');
        }
        out
    }

    /// Write the CSV trace plus a `.meta.toml` sidecar holding the fully
    /// resolved config (including the seed).
    pub fn write_csv(&self, cfg: &ScenarioConfig, path: &Path) -> Result<(), SimError> {
        let mut file = std::fs::File::create(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(self.to_csv().as_bytes())
            .map_err(|source| SimError::Io {
                path: path.display().to_string(),
                source,
            })?;
        let meta_path = path.with_extension("meta.toml");
        save_config(cfg, &meta_path)?;
        Ok(())
    }

    pub fn peak_abs_torque(&self) -> [f64; 6] {
        let mut peak = [0.0f64; 6];
        for row in &self.rows {
            for j in 0..6 {
                peak[j] = peak[j].max(row.tau[j].abs());
            }
        }
        peak
    }

    pub fn peak_abs_velocity(&self) -> [f64; 6] {
        let mut peak = [0.0f64; 6];
        for row in &self.rows {
            for j in 0..6 {
                peak[j] = peak[j].max(row.qd[j].abs());
            }
        }
        peak
    }
}

/// Mass geometry of a chain as traversed from its anchored end: per-segment
/// mass and COM offset along the segment, in traversal order.
#[derive(Debug, Clone, Copy)]
pub struct SegmentMasses {
    pub masses: [f64; 5],
    pub coms: [f64; 5],
}

impl SegmentMasses {
    /// Traversal-order masses for a chain anchored at end A.
    pub fn from_end_a(masses: &[f64; 5], coms: &[f64; 5]) -> Self {
        SegmentMasses {
            masses: *masses,
            coms: *coms,
        }
    }

    /// Traversal-order masses for the reversed chain (anchored at end B):
    /// segment order flips and COM offsets are re-measured from the B side.
    pub fn from_end_b(masses: &[f64; 5], coms: &[f64; 5], lengths: &[f64; 5]) -> Self {
        let mut m = [0.0; 5];
        let mut c = [0.0; 5];
        for i in 0..5 {
            m[i] = masses[4 - i];
            c[i] = lengths[4 - i] - coms[4 - i];
        }
        SegmentMasses { masses: m, coms: c }
    }
}

/// World-frame (base-frame) positions of the five segment COMs plus, for
/// convenience, the free-end point, by walking the chain's primitives.
pub fn segment_com_positions(
    chain: &SerialChain,
    q: &JointVector,
    seg: &SegmentMasses,
) -> ([Vector3<f64>; 5], Vector3<f64>) {
    let mut pose = crate::kinematics::Pose::identity();
    let mut coms = [Vector3::zeros(); 5];
    let mut k = 0;
    for prim in &chain.primitives {
        match prim {
            Primitive::Translate(v) => {
                let dir = v / v.norm();
                coms[k] = pose.translation + pose.rotation * (dir * seg.coms[k]);
                pose.translation += pose.rotation * v;
                k += 1;
            }
            Primitive::Joint { index, axis, sign } => {
                pose.rotation *=
                    nalgebra::Rotation3::from_axis_angle(axis, sign * q[*index]);
            }
            Primitive::Fixed(r) => {
                pose.rotation *= r;
            }
        }
    }
    (coms, pose.translation)
}

/// Torque that gravity and a tip force exert on each joint (base frame).
///
/// The per-joint model used by the scenario engines is
/// `I_j q̈ = τ_applied + τ_load`, so a static hold needs
/// `τ_applied = −τ_load`.
pub fn static_load_torques(
    chain: &SerialChain,
    q: &JointVector,
    seg: &SegmentMasses,
    gravity_base: Vector3<f64>,
    tip_force_base: Vector3<f64>,
) -> [f64; 6] {
    // Joint axes/origins in traversal order, with the traversal position at
    // which each was crossed so "distal" masses can be identified.
    let mut pose = crate::kinematics::Pose::identity();
    let mut joints: Vec<(usize, Vector3<f64>, Vector3<f64>, usize)> = Vec::with_capacity(6);
    let mut com_points: Vec<(Vector3<f64>, f64, usize)> = Vec::with_capacity(5);
    let mut seg_idx = 0;
    for prim in &chain.primitives {
        match prim {
            Primitive::Translate(v) => {
                let dir = v / v.norm();
                com_points.push((
                    pose.translation + pose.rotation * (dir * seg.coms[seg_idx]),
                    seg.masses[seg_idx],
                    seg_idx,
                ));
                pose.translation += pose.rotation * v;
                seg_idx += 1;
            }
            Primitive::Joint { index, axis, sign } => {
                let world_axis = (pose.rotation * axis.into_inner()) * *sign;
                joints.push((*index, world_axis, pose.translation, seg_idx));
                pose.rotation *= nalgebra::Rotation3::from_axis_angle(axis, sign * q[*index]);
            }
            Primitive::Fixed(r) => {
                pose.rotation *= r;
            }
        }
    }
    let tip = pose.translation;
    let mut tau = [0.0; 6];
    for (index, axis, p_joint, crossed_at) in joints {
        let mut t = 0.0;
        for (p_com, mass, seg_at) in &com_points {
            // A segment loads the joint only if it lies at or beyond the
            // joint in the traversal.
            if *seg_at >= crossed_at {
                let force = gravity_base * *mass;
                t += axis.dot(&(p_com - p_joint).cross(&force));
            }
        }
        t += axis.dot(&(tip - p_joint).cross(&tip_force_base));
        tau[index] = t;
    }
    tau
}

/// Diagonal composite-rigid-body inertia about each joint axis at `q`,
/// including a point payload at the tip, floored to keep the decoupled
/// joint model well conditioned.
pub fn composite_inertias(
    chain: &SerialChain,
    q: &JointVector,
    seg: &SegmentMasses,
    tip_mass: f64,
) -> [f64; 6] {
    const INERTIA_FLOOR: f64 = 0.02;
    let mut pose = crate::kinematics::Pose::identity();
    let mut joints: Vec<(usize, Vector3<f64>, Vector3<f64>, usize)> = Vec::with_capacity(6);
    let mut com_points: Vec<(Vector3<f64>, f64, usize)> = Vec::with_capacity(5);
    let mut seg_idx = 0;
    for prim in &chain.primitives {
        match prim {
            Primitive::Translate(v) => {
                let dir = v / v.norm();
                com_points.push((
                    pose.translation + pose.rotation * (dir * seg.coms[seg_idx]),
                    seg.masses[seg_idx],
                    seg_idx,
                ));
                pose.translation += pose.rotation * v;
                seg_idx += 1;
            }
            Primitive::Joint { index, axis, sign } => {
                let world_axis = (pose.rotation * axis.into_inner()) * *sign;
                joints.push((*index, world_axis, pose.translation, seg_idx));
                pose.rotation *= nalgebra::Rotation3::from_axis_angle(axis, sign * q[*index]);
            }
            Primitive::Fixed(r) => {
                pose.rotation *= r;
            }
        }
    }
    let tip = pose.translation;
    let mut inertia = [INERTIA_FLOOR; 6];
    for (index, axis, p_joint, crossed_at) in joints {
        let mut i_j = 0.0;
        for (p_com, mass, seg_at) in &com_points {
            if *seg_at >= crossed_at {
                let r = p_com - p_joint;
                let r_perp = r - axis * axis.dot(&r);
                i_j += mass * r_perp.norm_squared();
            }
        }
        let r = tip - p_joint;
        let r_perp = r - axis * axis.dot(&r);
        i_j += tip_mass * r_perp.norm_squared();
        inertia[index] = i_j.max(INERTIA_FLOOR);
    }
    inertia
}
