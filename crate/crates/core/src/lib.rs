//! Tendon-driven finger simulation and step-wise identification of its
//! dynamic model: moment arms, joint viscoelasticity and tendon friction.

pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod identification;
pub mod io;
pub mod model;
pub mod poly;
pub mod testbed;
pub mod tendon_friction;
pub mod viscoelastic;

pub use error::{Error, Result};
pub use model::FingerModel;
