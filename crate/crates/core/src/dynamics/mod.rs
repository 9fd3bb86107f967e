//! Joint-space dynamics, collision detection, constraint assembly and the
//! fixed-step integrator.

pub mod collision;
pub mod constraints;
mod inertia;
mod sim;
mod world;

pub use collision::{
    detect_contacts, detect_contacts_cached, CollisionParams, ContactPoint, Obstacle,
};
pub use constraints::{
    anchor_rows, assemble_constraints, contact_rows, joint_limit_rows, AssembledProblem,
    ConstraintRow, RowKey, RowTag, StabilizationParams,
};
pub use inertia::{
    bias_forces, bias_forces_cached, mass_matrix, mass_matrix_cached, spatial_momentum,
};
pub use sim::{
    anchor_feet, com_velocity, ground_clearance, release_feet, ContactReport, FootAnchor,
    SimParams, SimState, Simulator, StepReport, SupportMode, ANCHOR_TOLERANCE,
};
pub use world::{Ground, StaticBox, WorldDef};
