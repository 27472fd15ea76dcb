//! Particle of mass `m` in a potential on a chain of time atoms.
//!
//! `L = [m/2 |(q−q⁻)/a|² − V(q)] a + [m/2 |(q⁺−q)/a|² − V(q)] a`, lengths measured with `g_AB`.

use serde::{Deserialize, Serialize};

use crate::complex::TimeComplex;
use crate::error::{invalid, Error, Result};
use crate::numerics::{inf_norm, newton, DMat, DVec, NewtonOpts, NewtonReport};
use crate::variational::{DsSplit, Variational};

/// Separable potentials `V(q) = Σ_A v(q^A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `k q²/2`
    Harmonic { k: f64 },
    /// `k q²/2 + λ q⁴/4`
    Quartic { k: f64, lambda: f64 },
    /// `amp (1 − cos q)`
    Cosine { amp: f64 },
}

impl Potential {
    fn parts(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Potential::Zero => (0.0, 0.0, 0.0),
            Potential::Harmonic { k } => (0.5 * k * x * x, k * x, k),
            Potential::Quartic { k, lambda } => (
                0.5 * k * x * x + 0.25 * lambda * x.powi(4),
                k * x + lambda * x.powi(3),
                k + 3.0 * lambda * x * x,
            ),
            Potential::Cosine { amp } => (amp * (1.0 - x.cos()), amp * x.sin(), amp * x.cos()),
        }
    }

    pub fn value(&self, q: &DVec) -> f64 {
        q.iter().map(|&x| self.parts(x).0).sum()
    }

    pub fn grad(&self, q: &DVec) -> DVec {
        q.map(|x| self.parts(x).1)
    }

    pub fn hess_diag(&self, q: &DVec) -> DVec {
        q.map(|x| self.parts(x).2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleModel {
    pub mass: f64,
    pub metric: DMat,
    pub potential: Potential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleHistory {
    pub complex: TimeComplex,
    /// Positions at points `0..=2n` (see [`TimeComplex`]).
    pub q: Vec<DVec>,
}

/// Four blocks of `dS[v]`: `∂L/∂q⁻` at atom 1, interior terms, gluing terms, `∂L/∂q⁺` at atom n.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DsBlocks {
    pub first_boundary: f64,
    pub interior: f64,
    pub gluing: f64,
    pub last_boundary: f64,
}

impl DsBlocks {
    pub fn split(&self) -> DsSplit {
        DsSplit { bulk: self.interior + self.gluing, boundary: self.first_boundary + self.last_boundary }
    }
}

impl ParticleHistory {
    pub fn new(complex: TimeComplex, q: Vec<DVec>) -> Result<Self> {
        if q.len() != complex.n_points() {
            return invalid(format!("history needs {} points, got {}", complex.n_points(), q.len()));
        }
        Ok(ParticleHistory { complex, q })
    }

    pub fn dim(&self) -> usize {
        self.q[0].len()
    }
}

impl ParticleModel {
    pub fn new(mass: f64, dim: usize, potential: Potential) -> Result<Self> {
        if !(mass > 0.0) {
            return invalid(format!("mass must be positive, got {mass}"));
        }
        if dim == 0 {
            return invalid("configuration dimension must be positive");
        }
        Ok(ParticleModel { mass, metric: DMat::identity(dim, dim), potential })
    }

    pub fn with_metric(mut self, metric: DMat) -> Result<Self> {
        if metric.shape() != self.metric.shape() || metric.clone().cholesky().is_none() {
            return invalid("metric must be symmetric positive definite of matching size");
        }
        self.metric = metric;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.metric.nrows()
    }

    fn kin(&self, d: &DVec, a: f64) -> f64 {
        0.5 * self.mass * d.dot(&(&self.metric * d)) / a
    }

    /// `L⁻ + L⁺` of atom `i` (0-based).
    pub fn lagrangian(&self, h: &ParticleHistory, i: usize) -> f64 {
        let c = &h.complex;
        let a = c.lapse;
        let (qm, q, qp) = (&h.q[c.minus(i)], &h.q[c.center(i)], &h.q[c.plus(i)]);
        self.kin(&(q - qm), a) + self.kin(&(qp - q), a) - 2.0 * a * self.potential.value(q)
    }

    pub fn action(&self, h: &ParticleHistory) -> f64 {
        (0..h.complex.n_atoms).map(|i| self.lagrangian(h, i)).sum()
    }

    /// `∂L/∂q` at `Cν`.
    pub fn interior_residual(&self, h: &ParticleHistory, i: usize) -> DVec {
        let c = &h.complex;
        let a = c.lapse;
        let (qm, q, qp) = (&h.q[c.minus(i)], &h.q[c.center(i)], &h.q[c.plus(i)]);
        let m = self.mass;
        (&self.metric * ((q - qm) - (qp - q))) * (m / a) - self.potential.grad(q) * (2.0 * a)
    }

    /// `∂L/∂q⁺(ν) + ∂L/∂q⁻(ν+1)` at the shared marker `ν⁺`, `0 ≤ ν < n−1`.
    pub fn gluing_residual(&self, h: &ParticleHistory, i: usize) -> DVec {
        let c = &h.complex;
        let (q, qp, q1) = (&h.q[c.center(i)], &h.q[c.plus(i)], &h.q[c.center(i + 1)]);
        (&self.metric * ((qp - q) - (q1 - qp))) * (self.mass / c.lapse)
    }

    /// `Θ_L` at `ν⁻`: `m g (q − q⁻)/a` as a covector on `dq⁻`.
    pub fn theta_minus(&self, h: &ParticleHistory, i: usize) -> DVec {
        let c = &h.complex;
        (&self.metric * (&h.q[c.center(i)] - &h.q[c.minus(i)])) * (self.mass / c.lapse)
    }

    /// `Θ_L` at `ν⁺`: `m g (q⁺ − q)/a` on `dq⁺`.
    pub fn theta_plus(&self, h: &ParticleHistory, i: usize) -> DVec {
        let c = &h.complex;
        (&self.metric * (&h.q[c.plus(i)] - &h.q[c.center(i)])) * (self.mass / c.lapse)
    }

    /// Full gradient of the action over all points.
    pub fn gradient(&self, h: &ParticleHistory) -> DVec {
        let c = &h.complex;
        let d = h.dim();
        let mut g = DVec::zeros(c.n_points() * d);
        for i in 0..c.n_atoms {
            let tm = self.theta_minus(h, i);
            let tp = self.theta_plus(h, i);
            let r = self.interior_residual(h, i);
            add_block(&mut g, c.minus(i), &(-tm));
            add_block(&mut g, c.plus(i), &tp);
            add_block(&mut g, c.center(i), &r);
        }
        g
    }

    pub fn hessian(&self, h: &ParticleHistory) -> DMat {
        let c = &h.complex;
        let d = h.dim();
        let a = c.lapse;
        let mut hs = DMat::zeros(c.n_points() * d, c.n_points() * d);
        let k = &self.metric * (self.mass / a);
        for p in 0..c.n_points() - 1 {
            for (r, s, sg) in [(p, p, 1.0), (p + 1, p + 1, 1.0), (p, p + 1, -1.0), (p + 1, p, -1.0)] {
                let mut blk = hs.view_mut((r * d, s * d), (d, d));
                blk += &k * sg;
            }
        }
        for i in 0..c.n_atoms {
            let p = c.center(i);
            let vh = self.potential.hess_diag(&h.q[p]);
            for j in 0..d {
                hs[(p * d + j, p * d + j)] -= 2.0 * a * vh[j];
            }
        }
        hs
    }

    pub fn ds_blocks(&self, h: &ParticleHistory, v: &DVec) -> DsBlocks {
        let c = &h.complex;
        let d = h.dim();
        let blk = |p: usize| v.rows(p * d, d).clone_owned();
        let n = c.n_atoms;
        let mut out = DsBlocks {
            first_boundary: -self.theta_minus(h, 0).dot(&blk(0)),
            last_boundary: self.theta_plus(h, n - 1).dot(&blk(c.plus(n - 1))),
            ..Default::default()
        };
        for i in 0..n {
            out.interior += self.interior_residual(h, i).dot(&blk(c.center(i)));
        }
        for i in 0..n - 1 {
            out.gluing += self.gluing_residual(h, i).dot(&blk(c.plus(i)));
        }
        out
    }

    /// Largest interior or gluing residual component.
    pub fn max_residual(&self, h: &ParticleHistory) -> f64 {
        let c = &h.complex;
        let mut m: f64 = 0.0;
        for i in 0..c.n_atoms {
            m = m.max(inf_norm(&self.interior_residual(h, i)));
        }
        for i in 0..c.n_atoms - 1 {
            m = m.max(inf_norm(&self.gluing_residual(h, i)));
        }
        m
    }

    fn free_points(c: &TimeComplex) -> Vec<usize> {
        (1..c.n_points() - 1).collect()
    }

    /// Solves the interior and gluing equations with `q_1⁻ = qa`, `q_n⁺ = qb`.
    pub fn solve(
        &self,
        complex: TimeComplex,
        qa: &DVec,
        qb: &DVec,
        opts: &NewtonOpts,
    ) -> Result<(ParticleHistory, NewtonReport)> {
        let d = self.dim();
        if qa.len() != d || qb.len() != d {
            return invalid("boundary data dimension mismatch");
        }
        let np = complex.n_points();
        let q: Vec<DVec> = (0..np)
            .map(|p| {
                let t = p as f64 / (np - 1) as f64;
                qa * (1.0 - t) + qb * t
            })
            .collect();
        let h0 = ParticleHistory { complex, q };
        let free = Self::free_points(&complex);
        let idx: Vec<usize> = free.iter().flat_map(|&p| (0..d).map(move |j| p * d + j)).collect();
        let residual = |h: &ParticleHistory| {
            let g = self.gradient(h);
            DVec::from_iterator(idx.len(), idx.iter().map(|&k| g[k]))
        };
        let jacobian = |h: &ParticleHistory| self.hessian(h).select_rows(&idx).select_columns(&idx);
        let retract = |h: &ParticleHistory, dx: &DVec| {
            let mut out = h.clone();
            for (n, &p) in free.iter().enumerate() {
                for j in 0..d {
                    out.q[p][j] += dx[n * d + j];
                }
            }
            out
        };
        newton(h0, residual, jacobian, retract, opts)
    }

    /// Tangents to the solution space at `h`: one per boundary component,
    /// from the linearized interior and gluing equations.
    pub fn first_variations(&self, h: &ParticleHistory) -> Vec<DVec> {
        let c = &h.complex;
        let d = h.dim();
        let nt = c.n_points() * d;
        let free: Vec<usize> = (d..nt - d).collect();
        let bnd: Vec<usize> = (0..d).chain(nt - d..nt).collect();
        let hs = self.hessian(h);
        let hff = hs.select_rows(&free).select_columns(&free);
        let hfb = hs.select_rows(&free).select_columns(&bnd);
        let lu = hff.lu();
        bnd.iter()
            .enumerate()
            .map(|(col, &b)| {
                let rhs = -hfb.column(col);
                let x = lu.solve(&rhs.clone_owned()).expect("nonsingular linearization");
                let mut v = DVec::zeros(nt);
                v[b] = 1.0;
                for (n, &k) in free.iter().enumerate() {
                    v[k] = x[n];
                }
                v
            })
            .collect()
    }

    /// `Ω_L(v, w)` at `ν⁻`: `−(m/a) g dq ∧ dq⁻`.
    pub fn omega_minus(&self, h: &ParticleHistory, i: usize, v: &DVec, w: &DVec) -> f64 {
        let c = &h.complex;
        let d = h.dim();
        let (pc, pm) = (c.center(i), c.minus(i));
        -(self.mass / c.lapse) * wedge(&self.metric, &v.rows(pc * d, d), &v.rows(pm * d, d), &w.rows(pc * d, d), &w.rows(pm * d, d))
    }

    /// `Ω_L(v, w)` at `ν⁺`: `(m/a) g dq ∧ dq⁺`.
    pub fn omega_plus(&self, h: &ParticleHistory, i: usize, v: &DVec, w: &DVec) -> f64 {
        let c = &h.complex;
        let d = h.dim();
        let (pc, pp) = (c.center(i), c.plus(i));
        (self.mass / c.lapse) * wedge(&self.metric, &v.rows(pc * d, d), &v.rows(pp * d, d), &w.rows(pc * d, d), &w.rows(pp * d, d))
    }

    /// `Σ_∂U Ω_L = −Ω_L(1⁻) + Ω_L(n⁺)`.
    pub fn symplectic_defect(&self, h: &ParticleHistory, v: &DVec, w: &DVec) -> f64 {
        let n = h.complex.n_atoms;
        -self.omega_minus(h, 0, v, w) + self.omega_plus(h, n - 1, v, w)
    }

    /// Translation current `Θ_L(v)` at `ν⁻` and `ν⁺` for every atom. Requires `V = 0`
    /// and a solution to tolerance `tol`.
    pub fn noether_current(&self, h: &ParticleHistory, v: &DVec, tol: f64) -> Result<Vec<(f64, f64)>> {
        if self.potential != Potential::Zero {
            return invalid("translation current needs a translation-invariant potential");
        }
        let r = self.max_residual(h);
        if r > tol {
            return Err(Error::NotASolution(r));
        }
        Ok((0..h.complex.n_atoms)
            .map(|i| (self.theta_minus(h, i).dot(v), self.theta_plus(h, i).dot(v)))
            .collect())
    }

    /// Action of a run of half-atom segments `[p, p+1]`; `center_first` says whether
    /// point 0 of `pts` is an atom centre.
    pub fn segments_action(&self, pts: &[DVec], a: f64, center_first: bool) -> f64 {
        (0..pts.len() - 1)
            .map(|j| {
                let c = if (j % 2 == 0) == center_first { j } else { j + 1 };
                self.kin(&(&pts[j + 1] - &pts[j]), a) - a * self.potential.value(&pts[c])
            })
            .sum()
    }

    /// `S^r(q_k, …, q_{k+N}) = Σ [m/2 |(q_{i+1}−q_i)/2a|² − (V_i+V_{i+1})/2] 2a`.
    pub fn reduced_action(&self, bulk: &[DVec], a: f64) -> f64 {
        bulk.windows(2)
            .map(|w| {
                let dq = (&w[1] - &w[0]) / (2.0 * a);
                let kin = 0.5 * self.mass * dq.dot(&(&self.metric * &dq));
                let pot = 0.5 * (self.potential.value(&w[0]) + self.potential.value(&w[1]));
                (kin - pot) * 2.0 * a
            })
            .sum()
    }

    /// Points `C_k, k⁺, C_{k+1}, …, C_{k+N}` with gluing solved by midpoints.
    pub fn lift_bulk(bulk: &[DVec]) -> Vec<DVec> {
        let mut out = Vec::with_capacity(2 * bulk.len() - 1);
        for (j, q) in bulk.iter().enumerate() {
            if j > 0 {
                out.push((&bulk[j - 1] + q) * 0.5);
            }
            out.push(q.clone());
        }
        out
    }

    /// `∂S^r/∂q_i` for every bulk point (rows stacked).
    pub fn reduced_gradient(&self, bulk: &[DVec], a: f64) -> DVec {
        let d = self.dim();
        let mut g = DVec::zeros(bulk.len() * d);
        for (i, w) in bulk.windows(2).enumerate() {
            let f = (&self.metric * (&w[1] - &w[0])) * (self.mass / (2.0 * a));
            add_block(&mut g, i, &(-&f - self.potential.grad(&w[0]) * a));
            add_block(&mut g, i + 1, &(f - self.potential.grad(&w[1]) * a));
        }
        g
    }

    /// Extremizes `S^r` with the end points fixed.
    pub fn solve_reduced(&self, bulk0: &[DVec], a: f64, opts: &NewtonOpts) -> Result<Vec<DVec>> {
        let d = self.dim();
        let nb = bulk0.len();
        let free: Vec<usize> = (d..(nb - 1) * d).collect();
        let to_vec = |b: &Vec<DVec>| DVec::from_iterator(nb * d, b.iter().flat_map(|q| q.iter().copied()));
        let residual = |b: &Vec<DVec>| self.reduced_gradient(b, a).select_rows(&free);
        let jacobian = |b: &Vec<DVec>| {
            let x0 = to_vec(b);
            let cols = crate::numerics::fd_jacobian(free.len(), free.len(), crate::numerics::JAC_STEP, |j, t| {
                let mut x = x0.clone();
                x[free[j]] += t;
                let bb: Vec<DVec> = (0..nb).map(|i| x.rows(i * d, d).clone_owned()).collect();
                self.reduced_gradient(&bb, a).select_rows(&free)
            });
            cols
        };
        let retract = |b: &Vec<DVec>, dx: &DVec| {
            let mut out = b.clone();
            for (n, &k) in free.iter().enumerate() {
                out[k / d][k % d] += dx[n];
            }
            out
        };
        newton(bulk0.to_vec(), residual, jacobian, retract, opts).map(|(b, _)| b)
    }

    /// `S^b = Σ_ν [m/2 |(q⁺−q⁻)/2a|² − V((q⁻+q⁺)/2)] 2a` over boundary values `q_1⁻, q_1⁺, …, q_n⁺`.
    pub fn boundary_action(&self, markers: &[DVec], a: f64) -> f64 {
        markers
            .windows(2)
            .map(|w| {
                let dq = (&w[1] - &w[0]) / (2.0 * a);
                let mid = (&w[0] + &w[1]) * 0.5;
                (0.5 * self.mass * dq.dot(&(&self.metric * &dq)) - self.potential.value(&mid)) * 2.0 * a
            })
            .sum()
    }

    pub fn boundary_gradient(&self, markers: &[DVec], a: f64) -> DVec {
        let d = self.dim();
        let mut g = DVec::zeros(markers.len() * d);
        for (i, w) in markers.windows(2).enumerate() {
            let f = (&self.metric * (&w[1] - &w[0])) * (self.mass / (2.0 * a));
            let vg = self.potential.grad(&((&w[0] + &w[1]) * 0.5)) * a;
            add_block(&mut g, i, &(-&f - &vg));
            add_block(&mut g, i + 1, &(f - vg));
        }
        g
    }

    /// Extremizes `S^b` over interior markers with the two ends fixed.
    pub fn solve_boundary_model(&self, markers0: &[DVec], a: f64, opts: &NewtonOpts) -> Result<Vec<DVec>> {
        let d = self.dim();
        let nm = markers0.len();
        let free: Vec<usize> = (d..(nm - 1) * d).collect();
        let residual = |b: &Vec<DVec>| self.boundary_gradient(b, a).select_rows(&free);
        let jacobian = |b: &Vec<DVec>| {
            crate::numerics::fd_jacobian(free.len(), free.len(), crate::numerics::JAC_STEP, |j, t| {
                let mut bb = b.clone();
                bb[free[j] / d][free[j] % d] += t;
                self.boundary_gradient(&bb, a).select_rows(&free)
            })
        };
        let retract = |b: &Vec<DVec>, dx: &DVec| {
            let mut out = b.clone();
            for (n, &k) in free.iter().enumerate() {
                out[k / d][k % d] += dx[n];
            }
            out
        };
        newton(markers0.to_vec(), residual, jacobian, retract, opts).map(|(b, _)| b)
    }
}

impl Variational for ParticleModel {
    type History = ParticleHistory;

    fn tangent_dim(&self, h: &ParticleHistory) -> usize {
        h.complex.n_points() * h.dim()
    }

    fn action(&self, h: &ParticleHistory) -> f64 {
        ParticleModel::action(self, h)
    }

    fn ds(&self, h: &ParticleHistory, v: &DVec) -> DsSplit {
        self.ds_blocks(h, v).split()
    }

    fn retract(&self, h: &ParticleHistory, v: &DVec) -> ParticleHistory {
        let d = h.dim();
        let mut out = h.clone();
        for (p, q) in out.q.iter_mut().enumerate() {
            *q += v.rows(p * d, d);
        }
        out
    }
}

fn add_block(g: &mut DVec, p: usize, x: &DVec) {
    let d = x.len();
    let mut r = g.rows_mut(p * d, d);
    r += x;
}

/// `g_AB (dx^B ∧ dy^A)(v, w) = g(vx, wy) − g(wx, vy)`.
fn wedge<S1, S2, S3, S4>(
    g: &DMat,
    vx: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S1>,
    vy: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S2>,
    wx: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S3>,
    wy: &nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S4>,
) -> f64
where
    S1: nalgebra::Storage<f64, nalgebra::Dyn>,
    S2: nalgebra::Storage<f64, nalgebra::Dyn>,
    S3: nalgebra::Storage<f64, nalgebra::Dyn>,
    S4: nalgebra::Storage<f64, nalgebra::Dyn>,
{
    (g * vx).dot(wy) - (g * wx).dot(vy)
}
