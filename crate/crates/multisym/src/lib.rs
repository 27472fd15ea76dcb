//! Discrete variational field theory on structured cellular spacetimes.
//!
//! Models live on three kinds of complexes ([`complex`]): chains of time atoms
//! for mechanics ([`mech1d`]), cartesian atom grids for scalar waves
//! ([`scalar2d`]) and cubical complexes with links and wedges for gauge and
//! BF models ([`gauge`], [`bfmod`]). Each model exposes its action, the
//! interior and gluing residuals, the Cartan form on boundary faces and the
//! multisymplectic form, plus reductions by solving gluing equations.
//! [`canonical`] implements the covariant Legendre map and [`coarse`] the
//! decimation maps and continuum-limit harness.

pub mod complex;
pub mod error;
pub mod liegroup;
pub mod numerics;
pub mod par;
pub mod variational;
pub mod mech1d;
pub mod scalar2d;
pub mod gauge;
pub mod bfmod;
pub mod canonical;
pub mod coarse;

pub use error::{Error, Result};
