//! Physical parameters and scenario configuration.
//!
//! Everything downstream (kinematics, controllers, simulators) reads these
//! types without mutating them. The nominal parameter set is calibrated so
//! that the fully stretched module reaches 0.75 m and weighs 4.14 kg with a
//! 31 Nm / 2 rad/s actuator envelope.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{limms_chain, BaseEnd};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("config field `{field}` out of range: {reason}")]
    OutOfRange { field: String, reason: String },
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: Box<toml::de::Error>,
    },
    #[error("failed to serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Complete kinematic, mass, and actuator description of one module.
///
/// The chain runs end A -> end B through five rigid segments:
/// A-side hub, lower link, elbow block, upper link, B-side hub. Joints 1/6
/// roll about the chain axis at the hubs, joints 2/5 pitch about axes tilted
/// by `joint2_offset_axis_angle` (the X-offset rotation that flips sign when
/// the base end is switched), and joints 3/4 share the elbow block with axes
/// tilted `elbow_offset` from the chain axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleParams {
    /// Segment lengths in meters from end A to end B.
    pub link_lengths: [f64; 5],
    /// Tilt of the joint 3/4 axes from the chain axis (rad).
    pub elbow_offset: f64,
    /// Fixed offset rotation about local X between joints 1-2 (mirrored 6-5), rad.
    pub joint2_offset_axis_angle: f64,
    /// Per-joint (min, max) angle in rad.
    pub joint_limits: [(f64, f64); 6],
    /// Peak joint torque, N·m.
    pub torque_limit: f64,
    /// Peak joint speed, rad/s.
    pub velocity_limit: f64,
    /// Total module mass, kg.
    pub total_mass: f64,
    /// Per-segment masses, kg. Sums to `total_mass`.
    pub link_masses: [f64; 5],
    /// Per-segment center-of-mass offset along the segment, m.
    pub link_coms: [f64; 5],
    /// Wheel radius for the self-balancing mode, m.
    pub wheel_radius: f64,
}

impl ModuleParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, &l) in self.link_lengths.iter().enumerate() {
            if !(l > 0.0) {
                return Err(ModelError::InvalidParam {
                    field: "link_lengths",
                    reason: format!("segment {i} is {l}, must be > 0"),
                });
            }
        }
        if !(self.elbow_offset > 0.0 && self.elbow_offset < FRAC_PI_2) {
            return Err(ModelError::InvalidParam {
                field: "elbow_offset",
                reason: format!("{} not in (0, pi/2)", self.elbow_offset),
            });
        }
        let mass_sum: f64 = self.link_masses.iter().sum();
        if (mass_sum - self.total_mass).abs() > 1e-9 {
            return Err(ModelError::InvalidParam {
                field: "link_masses",
                reason: format!("sum {mass_sum} differs from total_mass {}", self.total_mass),
            });
        }
        if !(self.torque_limit > 0.0) || !(self.velocity_limit > 0.0) {
            return Err(ModelError::InvalidParam {
                field: "torque_limit/velocity_limit",
                reason: "actuator limits must be positive".into(),
            });
        }
        for (i, &(lo, hi)) in self.joint_limits.iter().enumerate() {
            if !(lo < hi) {
                return Err(ModelError::InvalidParam {
                    field: "joint_limits",
                    reason: format!("joint {} has min {lo} >= max {hi}", i + 1),
                });
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// True when every angle is inside the joint limits.
    pub fn within_limits(&self, q: &[f64; 6]) -> bool {
        q.iter()
            .zip(self.joint_limits.iter())
            .all(|(&a, &(lo, hi))| a >= lo && a <= hi)
    }
}

/// The shipped nominal parameter set.
///
/// Segment lengths sum to exactly 0.75 m (the stretched-reach target) and are
/// bilaterally symmetric; masses put 0.5 kg in each end hub for the wheel and
/// latch hardware with the remainder spread proportionally to length.
pub fn nominal_params() -> ModuleParams {
    let link_lengths = [0.095, 0.215, 0.13, 0.215, 0.095];
    let total_mass = 4.14;
    let hub_lump = 0.5;
    let distributed = total_mass - 2.0 * hub_lump;
    let total_len: f64 = link_lengths.iter().sum();
    let mut link_masses = [0.0; 5];
    for i in 0..5 {
        link_masses[i] = distributed * link_lengths[i] / total_len;
    }
    link_masses[0] += hub_lump;
    link_masses[4] += hub_lump;
    let mut link_coms = [0.0; 5];
    for i in 0..5 {
        link_coms[i] = link_lengths[i] / 2.0;
    }
    ModuleParams {
        link_lengths,
        elbow_offset: std::f64::consts::FRAC_PI_4,
        joint2_offset_axis_angle: std::f64::consts::FRAC_PI_6,
        joint_limits: [(-2.9, 2.9); 6],
        torque_limit: 31.0,
        velocity_limit: 2.0,
        total_mass,
        link_masses,
        link_coms,
        wheel_radius: 0.05,
    }
}

/// Maximum end-B distance from the end-A base over a dense joint grid.
///
/// Each joint is sampled at `samples_per_joint` evenly spaced values across
/// its limits (always including the midpoint for odd counts). The search
/// walks the grid depth-first with cached partial transforms and prunes
/// subtrees whose remaining chain length cannot beat the current best.
pub fn calibrate_reach(params: &ModuleParams, samples_per_joint: usize) -> Result<f64, ModelError> {
    params.validate()?;
    if samples_per_joint < 3 {
        return Err(ModelError::InvalidParam {
            field: "samples_per_joint",
            reason: format!("{samples_per_joint} < 3"),
        });
    }
    let chain = limms_chain(params, BaseEnd::EndA);
    Ok(chain.max_reach(&params.joint_limits, samples_per_joint))
}

/// Requirement constants for the delivery scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementsDefaults {
    pub payload_mass: f64,
    pub box_unit_length: f64,
    pub travel_distance: f64,
    pub curb_height: f64,
    pub stair_rise: f64,
    pub stair_depth: f64,
}

impl Default for RequirementsDefaults {
    fn default() -> Self {
        Self {
            payload_mass: 2.0,
            box_unit_length: 0.3048,
            travel_distance: 50.0,
            curb_height: 0.1524,
            stair_rise: 0.1778,
            stair_depth: 0.2794,
        }
    }
}

impl RequirementsDefaults {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("payload_mass", self.payload_mass),
            ("box_unit_length", self.box_unit_length),
            ("travel_distance", self.travel_distance),
            ("curb_height", self.curb_height),
            ("stair_rise", self.stair_rise),
            ("stair_depth", self.stair_depth),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(ModelError::OutOfRange {
                    field: name.into(),
                    reason: format!("{v} must be > 0"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    DualLift,
    QuadrupedTrot,
    WheelBalance,
    DexterityMap,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScenarioKind::DualLift => "dual_lift",
            ScenarioKind::QuadrupedTrot => "quadruped_trot",
            ScenarioKind::WheelBalance => "wheel_balance",
            ScenarioKind::DexterityMap => "dexterity_map",
        };
        f.write_str(s)
    }
}

/// Overrides for the nominal module parameters, config-file side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ModuleConfig {
    pub link_lengths_m: Option<Vec<f64>>,
    pub torque_limit_nm: Option<f64>,
    pub velocity_limit_radps: Option<f64>,
    pub total_mass_kg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitConfig {
    pub stance_s: f64,
    pub swing_s: f64,
    pub vel_mps: f64,
    pub step_height_m: f64,
    /// Lateral stance offset of each foot from its hip, m.
    #[serde(default = "default_foot_offset")]
    pub foot_offset_m: f64,
    /// Height of the box center above ground while trotting, m.
    #[serde(default = "default_body_height")]
    pub body_height_m: f64,
}

fn default_foot_offset() -> f64 {
    0.18
}

fn default_body_height() -> f64 {
    0.5
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            stance_s: 0.5,
            swing_s: 0.5,
            vel_mps: 0.3,
            step_height_m: 0.05,
            foot_offset_m: default_foot_offset(),
            body_height_m: default_body_height(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub mass_kg: f64,
    pub size_m: f64,
}

impl Default for BoxConfig {
    fn default() -> Self {
        Self {
            mass_kg: 2.0,
            size_m: 0.3048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            kp: 60.0,
            ki: 2.0,
            kd: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    pub kp_theta: f64,
    pub kd_theta: f64,
    pub kp_v: f64,
    /// Initial body tilt, rad.
    #[serde(default = "default_theta0")]
    pub theta0_rad: f64,
    /// Desired forward speed, m/s.
    #[serde(default)]
    pub v_des_mps: f64,
}

fn default_theta0() -> f64 {
    0.1
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            kp_theta: 120.0,
            kd_theta: 18.0,
            kp_v: 8.0,
            theta0_rad: default_theta0(),
            v_des_mps: 0.0,
        }
    }
}

/// Dual-lift geometry: where the two modules are anchored relative to the
/// box and how far it travels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    /// Horizontal distance from the box center to each anchor, m.
    pub anchor_standoff_m: f64,
    /// Anchor height above the box center, m. Nonzero keeps the grasp
    /// targets off the chain axis, where the flush latch orientation is
    /// unreachable.
    pub anchor_raise_m: f64,
    /// Vertical travel to the lifted keyframe, m.
    pub lift_height_m: f64,
    /// Final placement height above the start, m.
    pub place_height_m: f64,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self {
            anchor_standoff_m: 0.6,
            anchor_raise_m: 0.10,
            lift_height_m: 0.05,
            place_height_m: 0.025,
        }
    }
}

/// One simulation scenario, loadable from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioKind,
    pub timestep_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// Gravity magnitude, m/s^2. Zero disables gravity for null-load checks.
    #[serde(default = "default_gravity")]
    pub gravity_mps2: f64,
    #[serde(default)]
    pub module: ModuleConfig,
    #[serde(default)]
    pub gait: GaitConfig,
    #[serde(default, rename = "box")]
    pub box_cfg: BoxConfig,
    #[serde(default)]
    pub pid: PidConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub lift: LiftConfig,
}

fn default_gravity() -> f64 {
    9.81
}

impl ScenarioConfig {
    pub fn defaults_for(scenario: ScenarioKind) -> Self {
        Self {
            scenario,
            timestep_s: 1e-3,
            duration_s: match scenario {
                ScenarioKind::DualLift => 10.0,
                ScenarioKind::QuadrupedTrot => 3.0,
                ScenarioKind::WheelBalance => 10.0,
                ScenarioKind::DexterityMap => 0.0,
            },
            seed: 42,
            gravity_mps2: default_gravity(),
            module: ModuleConfig::default(),
            gait: GaitConfig::default(),
            box_cfg: BoxConfig::default(),
            pid: PidConfig::default(),
            balance: BalanceConfig::default(),
            lift: LiftConfig::default(),
        }
    }

    /// Module parameters with config overrides applied.
    pub fn module_params(&self) -> Result<ModuleParams, ModelError> {
        let mut p = nominal_params();
        if let Some(lengths) = &self.module.link_lengths_m {
            if lengths.len() != 5 {
                return Err(ModelError::OutOfRange {
                    field: "module.link_lengths_m".into(),
                    reason: format!("expected 5 segments, got {}", lengths.len()),
                });
            }
            p.link_lengths.copy_from_slice(lengths);
            for i in 0..5 {
                p.link_coms[i] = p.link_lengths[i] / 2.0;
            }
        }
        if let Some(t) = self.module.torque_limit_nm {
            p.torque_limit = t;
        }
        if let Some(v) = self.module.velocity_limit_radps {
            p.velocity_limit = v;
        }
        if let Some(m) = self.module.total_mass_kg {
            // Rescale the distributed masses, keeping the hub lumping pattern.
            let scale = m / p.total_mass;
            for lm in &mut p.link_masses {
                *lm *= scale;
            }
            p.total_mass = m;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.timestep_s > 0.0 && self.timestep_s <= 0.01) {
            return Err(ModelError::OutOfRange {
                field: "timestep_s".into(),
                reason: format!("{} not in (0, 0.01]", self.timestep_s),
            });
        }
        if self.scenario != ScenarioKind::DexterityMap && !(self.duration_s > 0.0) {
            return Err(ModelError::OutOfRange {
                field: "duration_s".into(),
                reason: format!("{} must be > 0", self.duration_s),
            });
        }
        let positives = [
            ("gait.stance_s", self.gait.stance_s),
            ("gait.swing_s", self.gait.swing_s),
            ("gait.step_height_m", self.gait.step_height_m),
            ("gait.body_height_m", self.gait.body_height_m),
            ("box.size_m", self.box_cfg.size_m),
            ("lift.anchor_standoff_m", self.lift.anchor_standoff_m),
        ];
        for (name, v) in positives {
            if !(v > 0.0) {
                return Err(ModelError::OutOfRange {
                    field: name.into(),
                    reason: format!("{v} must be > 0"),
                });
            }
        }
        let non_negatives = [
            ("gait.vel_mps", self.gait.vel_mps),
            ("box.mass_kg", self.box_cfg.mass_kg),
            ("gravity_mps2", self.gravity_mps2),
            ("pid.kp", self.pid.kp),
            ("pid.ki", self.pid.ki),
            ("pid.kd", self.pid.kd),
            ("balance.kp_theta", self.balance.kp_theta),
            ("balance.kd_theta", self.balance.kd_theta),
            ("balance.kp_v", self.balance.kp_v),
        ];
        for (name, v) in non_negatives {
            if !(v >= 0.0) {
                return Err(ModelError::OutOfRange {
                    field: name.into(),
                    reason: format!("{v} must be >= 0"),
                });
            }
        }
        self.module_params()?;
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| ModelError::Parse {
        path: path.display().to_string(),
        source: Box::new(e),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<(), ModelError> {
    let text = toml::to_string_pretty(cfg)?;
    std::fs::write(path, text).map_err(|e| ModelError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_is_valid_and_stable() {
        let a = nominal_params();
        let b = nominal_params();
        a.validate().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.torque_limit, 31.0);
        assert_eq!(a.velocity_limit, 2.0);
        assert_eq!(a.total_mass, 4.14);
        let mass_sum: f64 = a.link_masses.iter().sum();
        assert!((mass_sum - a.total_mass).abs() < 1e-9);
    }

    #[test]
    fn reach_within_five_percent_of_published() {
        let reach = calibrate_reach(&nominal_params(), 21).unwrap();
        assert!(reach >= 0.7125 && reach <= 0.7875, "reach = {reach}");
    }

    #[test]
    fn reach_bounded_by_chain_length() {
        let p = nominal_params();
        let reach = calibrate_reach(&p, 11).unwrap();
        assert!(reach <= p.total_length() + 1e-12);
    }

    #[test]
    fn reach_scales_linearly_with_lengths() {
        let p = nominal_params();
        let mut doubled = p.clone();
        for l in &mut doubled.link_lengths {
            *l *= 2.0;
        }
        let r1 = calibrate_reach(&p, 21).unwrap();
        let r2 = calibrate_reach(&doubled, 21).unwrap();
        assert!((r2 - 2.0 * r1).abs() < 1e-9, "r1={r1} r2={r2}");
    }

    #[test]
    fn reach_monotone_in_samples() {
        let p = nominal_params();
        let r1 = calibrate_reach(&p, 3).unwrap();
        let r2 = calibrate_reach(&p, 7).unwrap();
        let r3 = calibrate_reach(&p, 15).unwrap();
        assert!(r1 <= r2 + 1e-12 && r2 <= r3 + 1e-12);
    }

    #[test]
    fn reach_rejects_bad_params() {
        let mut p = nominal_params();
        p.link_lengths[2] = -0.1;
        assert!(calibrate_reach(&p, 5).is_err());
        assert!(calibrate_reach(&nominal_params(), 2).is_err());
    }

    #[test]
    fn config_roundtrip_identity() {
        let dir = tempfile::tempdir().unwrap();
        for kind in [
            ScenarioKind::DualLift,
            ScenarioKind::QuadrupedTrot,
            ScenarioKind::WheelBalance,
        ] {
            let cfg = ScenarioConfig::defaults_for(kind);
            let path = dir.path().join(format!("{kind}.toml"));
            save_config(&cfg, &path).unwrap();
            let loaded = load_config(&path).unwrap();
            assert_eq!(cfg, loaded);
        }
    }

    #[test]
    fn trot_defaults_match_gait_timing() {
        let cfg = ScenarioConfig::defaults_for(ScenarioKind::QuadrupedTrot);
        assert_eq!(cfg.gait.stance_s, 0.5);
        assert_eq!(cfg.gait.swing_s, 0.5);
        assert_eq!(cfg.gait.vel_mps, 0.3);
    }

    #[test]
    fn zero_timestep_names_field() {
        let mut cfg = ScenarioConfig::defaults_for(ScenarioKind::DualLift);
        cfg.timestep_s = 0.0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("timestep_s"), "{err}");
    }

    #[test]
    fn requirements_defaults_positive() {
        let req = RequirementsDefaults::default();
        req.validate().unwrap();
        assert_eq!(req.payload_mass, 2.0);
        assert_eq!(req.box_unit_length, 0.3048);
        assert_eq!(req.travel_distance, 50.0);
    }
}
