//! Dual-base forward kinematics for the symmetric 6-DoF chain.
//!
//! The chain is stored as an explicit ordered list of primitives (fixed
//! translations, fixed rotations, and joint rotations about fixed local
//! axes) rather than DH parameters; see KINEMATICS.md for the frame layout.
//! Anchoring at the opposite end re-traverses the same list in reverse with
//! the X-axis offset rotations sign-flipped, which is computed here as the
//! exact algebraic inverse so the two base views agree to round-off.

use nalgebra::{Matrix3, Matrix6, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModuleParams;

/// Joint angles in rad, indexed 1..6 from end A to end B.
pub type JointVector = [f64; 6];

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("joint {joint} angle {angle} rad outside limits [{lo}, {hi}]")]
    OutOfLimits {
        joint: usize,
        angle: f64,
        lo: f64,
        hi: f64,
    },
}

/// Which latch is anchored as the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaseEnd {
    EndA,
    EndB,
}

impl BaseEnd {
    pub fn other(self) -> Self {
        match self {
            BaseEnd::EndA => BaseEnd::EndB,
            BaseEnd::EndB => BaseEnd::EndA,
        }
    }
}

/// Rigid transform: rotation then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        }
    }

    /// `self * other`, applying `other` in this pose's frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rinv = self.rotation.inverse();
        Pose {
            rotation: rinv,
            translation: -(rinv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation * p
    }

    /// Frobenius norm of `R^T R - I`.
    pub fn orthonormality_residual(&self) -> f64 {
        let m = self.rotation.matrix();
        (m.transpose() * m - Matrix3::identity()).norm()
    }

    /// Re-orthonormalize the rotation when drift exceeds 1e-12.
    pub fn renormalized(&self) -> Pose {
        if self.orthonormality_residual() <= 1e-12 {
            return *self;
        }
        // Closed-form quaternion extraction plus unit normalization; the
        // iterative `UnitQuaternion::from_matrix` refinement can fail to
        // terminate on some drifted inputs.
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        Pose {
            rotation: q.to_rotation_matrix(),
            translation: self.translation,
        }
    }

    /// Rotation-vector (log map) of the relative rotation `self -> target`.
    pub fn rotation_error_to(&self, target: &Pose) -> Vector3<f64> {
        (target.rotation * self.rotation.inverse()).scaled_axis()
    }
}

/// One step of a serial chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Translate(Vector3<f64>),
    /// Rotation by `sign * q[index]` about a fixed local axis.
    Joint {
        index: usize,
        axis: Unit<Vector3<f64>>,
        sign: f64,
    },
    Fixed(Rotation3<f64>),
}

/// An ordered chain of primitives mapping the base latch frame to the free
/// end latch frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SerialChain {
    pub primitives: Vec<Primitive>,
}

/// Latch frame turn-around: both latch Z axes point into the module, so the
/// free-end frame is flipped about Y relative to the chain direction.
fn latch_flip() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::PI)
}

impl SerialChain {
    /// Pose of the free end latch frame in the base latch frame.
    pub fn fk(&self, q: &JointVector) -> Pose {
        let mut pose = Pose::identity();
        for prim in &self.primitives {
            match prim {
                Primitive::Translate(v) => {
                    pose.translation += pose.rotation * v;
                }
                Primitive::Joint { index, axis, sign } => {
                    pose.rotation *= Rotation3::from_axis_angle(axis, sign * q[*index]);
                }
                Primitive::Fixed(r) => {
                    pose.rotation *= r;
                }
            }
        }
        pose.renormalized()
    }

    /// Cumulative pose after each joint, in traversal order, plus the free
    /// end latch frame (7 entries for a 6-joint chain).
    pub fn frame_chain(&self, q: &JointVector) -> Vec<Pose> {
        let mut frames = Vec::with_capacity(7);
        let mut pose = Pose::identity();
        for prim in &self.primitives {
            match prim {
                Primitive::Translate(v) => {
                    pose.translation += pose.rotation * v;
                }
                Primitive::Joint { index, axis, sign } => {
                    pose.rotation *= Rotation3::from_axis_angle(axis, sign * q[*index]);
                    frames.push(pose.renormalized());
                }
                Primitive::Fixed(r) => {
                    pose.rotation *= r;
                }
            }
        }
        frames.push(pose.renormalized());
        frames
    }

    /// Geometric Jacobian at `q`: column `i` is
    /// `(axis_i x (p_end - p_i); axis_i)` in the base frame, indexed by
    /// joint number regardless of traversal order.
    pub fn jacobian(&self, q: &JointVector) -> Matrix6<f64> {
        let mut pose = Pose::identity();
        let mut joints: Vec<(usize, Vector3<f64>, Vector3<f64>, f64)> = Vec::with_capacity(6);
        for prim in &self.primitives {
            match prim {
                Primitive::Translate(v) => {
                    pose.translation += pose.rotation * v;
                }
                Primitive::Joint { index, axis, sign } => {
                    let world_axis = pose.rotation * axis.into_inner();
                    joints.push((*index, world_axis, pose.translation, *sign));
                    pose.rotation *= Rotation3::from_axis_angle(axis, sign * q[*index]);
                }
                Primitive::Fixed(r) => {
                    pose.rotation *= r;
                }
            }
        }
        let p_end = pose.translation;
        let mut jac = Matrix6::zeros();
        for (index, axis, p_joint, sign) in joints {
            let lin = sign * axis.cross(&(p_end - p_joint));
            let ang = sign * axis;
            for r in 0..3 {
                jac[(r, index)] = lin[r];
                jac[(r + 3, index)] = ang[r];
            }
        }
        jac
    }

    /// The same chain traversed from the opposite latch.
    ///
    /// Built as the exact inverse of the primitive product, expressed in the
    /// flipped end frame: translations are preserved, joint rotations keep
    /// their angle with flipped axes, and fixed X-offset rotations reverse
    /// sign.
    pub fn reversed(&self) -> SerialChain {
        let flip = latch_flip();
        let mut primitives: Vec<Primitive> = vec![Primitive::Fixed(flip)];
        for prim in self.primitives.iter().rev() {
            primitives.push(match prim {
                Primitive::Translate(v) => Primitive::Translate(flip * -v),
                Primitive::Joint { index, axis, sign } => Primitive::Joint {
                    index: *index,
                    axis: Unit::new_normalize(flip * axis.into_inner()),
                    sign: -sign,
                },
                Primitive::Fixed(r) => Primitive::Fixed(flip * r.inverse() * flip),
            });
        }
        primitives.push(Primitive::Fixed(flip));
        SerialChain { primitives }
    }

    /// Sum of translation norms, an upper bound on any reachable distance.
    pub fn length_bound(&self) -> f64 {
        self.primitives
            .iter()
            .map(|p| match p {
                Primitive::Translate(v) => v.norm(),
                _ => 0.0,
            })
            .sum()
    }

    /// Maximum free-end distance over a per-joint sample grid.
    ///
    /// Depth-first over the grid with cached partial transforms; subtrees
    /// whose remaining chain length cannot beat the current best are pruned.
    pub fn max_reach(&self, limits: &[(f64, f64); 6], samples_per_joint: usize) -> f64 {
        // Segment the chain: fixed pose before the first joint, then one
        // (joint, trailing fixed pose) pair per joint in traversal order.
        let mut lead = Pose::identity();
        let mut segments: Vec<(usize, Unit<Vector3<f64>>, f64, Pose)> = Vec::new();
        for prim in &self.primitives {
            match prim {
                Primitive::Joint { index, axis, sign } => {
                    segments.push((*index, *axis, *sign, Pose::identity()));
                }
                other => {
                    let target = match segments.last_mut() {
                        Some((_, _, _, pose)) => pose,
                        None => &mut lead,
                    };
                    match other {
                        Primitive::Translate(v) => {
                            target.translation += target.rotation * v;
                        }
                        Primitive::Fixed(r) => {
                            target.rotation *= r;
                        }
                        Primitive::Joint { .. } => unreachable!(),
                    }
                }
            }
        }
        // Remaining-translation bound after each depth.
        let mut suffix = vec![0.0; segments.len() + 1];
        for d in (0..segments.len()).rev() {
            suffix[d] = suffix[d + 1] + segments[d].3.translation.norm();
        }
        // Per-joint sample values ordered center-out so the straight
        // configuration is tried early.
        let grids: Vec<Vec<f64>> = segments
            .iter()
            .map(|(index, _, _, _)| {
                let (lo, hi) = limits[*index];
                let mid = 0.5 * (lo + hi);
                let mut vals: Vec<f64> = (0..samples_per_joint)
                    .map(|k| lo + (hi - lo) * k as f64 / (samples_per_joint - 1) as f64)
                    .collect();
                vals.sort_by(|a, b| {
                    (a - mid)
                        .abs()
                        .partial_cmp(&(b - mid).abs())
                        .unwrap()
                        .then(a.partial_cmp(b).unwrap())
                });
                vals
            })
            .collect();

        fn rec(
            depth: usize,
            pose: &Pose,
            segments: &[(usize, Unit<Vector3<f64>>, f64, Pose)],
            grids: &[Vec<f64>],
            suffix: &[f64],
            best: &mut f64,
        ) {
            if depth == segments.len() {
                let d = pose.translation.norm();
                if d > *best {
                    *best = d;
                }
                return;
            }
            if pose.translation.norm() + suffix[depth] <= *best {
                return;
            }
            let (_, axis, sign, after) = &segments[depth];
            for &qv in &grids[depth] {
                let mut next = *pose;
                next.rotation *= Rotation3::from_axis_angle(axis, sign * qv);
                next = next.compose(after);
                rec(depth + 1, &next, segments, grids, suffix, best);
            }
        }

        let mut best = 0.0;
        rec(0, &lead, &segments, &grids, &suffix, &mut best);
        best
    }
}

/// Build the chain for one module anchored at `base`.
///
/// From end A: hub translation, joint 1 (roll about the chain axis), joint 2
/// (pitch about an axis tilted by the X-offset angle), lower link, elbow
/// joints 3 and 4 with axes tilted `elbow_offset` either side of the chain
/// axis, upper link, joints 5 and 6 mirroring 2 and 1, hub, latch flip.
pub fn limms_chain(params: &ModuleParams, base: BaseEnd) -> SerialChain {
    let [l1, l2, l3, l4, l5] = params.link_lengths;
    let beta = params.joint2_offset_axis_angle;
    let gamma = params.elbow_offset;
    let tz = |l: f64| Primitive::Translate(Vector3::new(0.0, 0.0, l));
    let joint = |index: usize, axis: Vector3<f64>| Primitive::Joint {
        index,
        axis: Unit::new_normalize(axis),
        sign: 1.0,
    };
    // Pitch axes tilted in the Y-Z plane: the tilt is the X-offset rotation
    // applied to the nominal axis, so the B-side traversal reverses it.
    let u2 = Vector3::new(0.0, beta.cos(), beta.sin());
    let u3 = Vector3::new(0.0, gamma.sin(), gamma.cos());
    let u4 = Vector3::new(0.0, -gamma.sin(), gamma.cos());
    let u5 = Vector3::new(0.0, beta.cos(), -beta.sin());
    let chain = SerialChain {
        primitives: vec![
            tz(l1),
            joint(0, Vector3::z()),
            joint(1, u2),
            tz(l2),
            joint(2, u3),
            tz(l3),
            joint(3, u4),
            tz(l4),
            joint(4, u5),
            joint(5, Vector3::z()),
            tz(l5),
            Primitive::Fixed(latch_flip()),
        ],
    };
    match base {
        BaseEnd::EndA => chain,
        BaseEnd::EndB => chain.reversed(),
    }
}

/// Pose of the free end latch frame in the base latch frame.
pub fn fk(params: &ModuleParams, q: &JointVector, base: BaseEnd) -> Result<Pose, KinematicsError> {
    check_limits(params, q)?;
    Ok(limms_chain(params, base).fk(q))
}

/// Cumulative joint frames plus the free end latch frame.
pub fn frame_chain(
    params: &ModuleParams,
    q: &JointVector,
    base: BaseEnd,
) -> Result<Vec<Pose>, KinematicsError> {
    check_limits(params, q)?;
    Ok(limms_chain(params, base).frame_chain(q))
}

/// Geometric Jacobian in the base latch frame, columns indexed by joint 1..6.
pub fn jacobian(
    params: &ModuleParams,
    q: &JointVector,
    base: BaseEnd,
) -> Result<Matrix6<f64>, KinematicsError> {
    check_limits(params, q)?;
    Ok(limms_chain(params, base).jacobian(q))
}

/// The joint vector that reproduces the same physical pose when the chain is
/// anchored at the opposite end: order reversed, pitch angles 2 and 5
/// sign-flipped by the X-offset reversal.
pub fn mirror_joints(q: &JointVector) -> JointVector {
    [q[5], -q[4], q[3], q[2], -q[1], q[0]]
}

pub fn check_limits(params: &ModuleParams, q: &JointVector) -> Result<(), KinematicsError> {
    for (i, (&angle, &(lo, hi))) in q.iter().zip(params.joint_limits.iter()).enumerate() {
        if angle < lo || angle > hi {
            return Err(KinematicsError::OutOfLimits {
                joint: i + 1,
                angle,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Joint limits for the traditional comparator chain.
pub const TRADITIONAL_LIMITS: [(f64, f64); 6] = [(-2.9, 2.9); 6];

/// A yaw-pitch base chain with a lateral shoulder offset, emulating the
/// topology of a conventional 6-DoF arm at roughly the same scale. Used as
/// the comparator preset for workspace dexterity runs.
pub fn traditional_chain() -> SerialChain {
    let joint = |index: usize, axis: Vector3<f64>| Primitive::Joint {
        index,
        axis: Unit::new_normalize(axis),
        sign: 1.0,
    };
    SerialChain {
        primitives: vec![
            Primitive::Translate(Vector3::new(0.0, 0.0, 0.10)),
            joint(0, Vector3::z()),
            // Lateral shoulder offset: the pitch plane misses the base axis,
            // leaving a low-dexterity sleeve around it.
            Primitive::Translate(Vector3::new(0.0, 0.20, 0.0)),
            joint(1, Vector3::y()),
            Primitive::Translate(Vector3::new(0.0, 0.0, 0.25)),
            joint(2, Vector3::y()),
            Primitive::Translate(Vector3::new(0.0, 0.0, 0.20)),
            joint(3, Vector3::y()),
            Primitive::Translate(Vector3::new(0.0, -0.06, 0.0)),
            joint(4, Vector3::z()),
            Primitive::Translate(Vector3::new(0.0, 0.0, 0.07)),
            joint(5, Vector3::y()),
            Primitive::Translate(Vector3::new(0.0, 0.0, 0.05)),
        ],
    }
}
