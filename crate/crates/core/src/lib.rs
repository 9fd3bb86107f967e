pub mod assets;
pub mod balance;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod lcp;
pub mod math;

pub use error::{Error, Result};
