//! Interface shared by the discrete models for variational checks.

use crate::numerics::DVec;

/// `dS[v]` split into contributions of bulk degrees of freedom and of `∂U`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsSplit {
    pub bulk: f64,
    pub boundary: f64,
}

impl DsSplit {
    pub fn total(&self) -> f64 {
        self.bulk + self.boundary
    }
}

/// A discrete action on histories with a flat tangent chart.
///
/// `retract(h, v)` moves `h` along the tangent vector `v` (addition for linear
/// fields, `g·exp(ξ)` or `exp(ξ)·g` for group variables) so that
/// `t ↦ S(retract(h, t v))` has derivative `ds(h, v).total()` at zero.
pub trait Variational {
    type History: Clone + Send + Sync;

    fn tangent_dim(&self, h: &Self::History) -> usize;
    fn action(&self, h: &Self::History) -> f64;
    fn ds(&self, h: &Self::History, v: &DVec) -> DsSplit;
    fn retract(&self, h: &Self::History, v: &DVec) -> Self::History;
}

/// Central difference of the action along `v`.
pub fn fd_ds<M: Variational>(m: &M, h: &M::History, v: &DVec, eps: f64) -> f64 {
    let p = m.action(&m.retract(h, &(v * eps)));
    let q = m.action(&m.retract(h, &(v * -eps)));
    (p - q) / (2.0 * eps)
}
