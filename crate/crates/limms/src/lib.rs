//! Kinematics, control, and reduced-order task simulation for a symmetric
//! dual-base 6-DoF modular robot.

pub mod control;
pub mod ik;
pub mod kinematics;
pub mod model;
pub mod sim;
pub mod workspace;
