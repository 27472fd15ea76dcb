//! Mechanics on a chain of time atoms: a particle in a potential and the free rigid body.

pub mod particle;
pub mod rigid;

pub use particle::{DsBlocks, ParticleHistory, ParticleModel, Potential};
pub use rigid::{RigidHistory, RigidModel, VeselovModel};
