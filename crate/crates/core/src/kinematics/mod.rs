//! Skeleton model, forward kinematics and Jacobians.

mod frames;
mod skeleton;
mod state;

pub use frames::{
    center_of_mass, com_jacobian, forward_kinematics, point_jacobian, reduce_jacobian,
    BodyJacobian, FrameCache,
};
pub use skeleton::{BodyDef, JointDef, JointKind, JointLimits, Shape, Skeleton};
pub use state::{difference, integrate, limit_coordinates, JointState};
