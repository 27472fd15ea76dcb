//! Free rigid body on SO(N) in first-order form, and Veselov's discrete Lagrangian.
//!
//! Segment `p` joins points `p` and `p+1` with displacement `Φ_p = q_pᵀ q_{p+1}` and
//! carries `e_p`. Its Lagrangian is `e_p·θ(Φ_p) − (a/2) Σ_i e_{p,i}²/I_i`.
//! Variations are right-trivialized: `q_p → q_p exp(ξ_p)`.

use crate::complex::TimeComplex;
use crate::error::{invalid, Error, Result};
use crate::liegroup::{self, CMat, Group, Lie};
use crate::numerics::{fd_jacobian, fd_jacobian_banded, inf_norm, newton, null_space, DVec, NewtonOpts, NewtonReport, JAC_STEP};
use crate::variational::{DsSplit, Variational};

#[derive(Debug, Clone)]
pub struct RigidModel {
    pub lie: Lie,
    /// Inertia per algebra basis element.
    pub inertia: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RigidHistory {
    pub complex: TimeComplex,
    pub q: Vec<CMat>,
    /// One algebra element per half-atom segment, `2n` in total.
    pub e: Vec<Vec<f64>>,
}

/// Outcome of [`RigidModel::solve`]: the selected history and every distinct
/// branch found, with its action.
#[derive(Debug, Clone)]
pub struct RigidSolution {
    pub history: RigidHistory,
    pub report: NewtonReport,
    pub branches: Vec<(RigidHistory, f64)>,
}

impl RigidModel {
    pub fn new(lie: Lie, inertia: Vec<f64>) -> Result<Self> {
        if !matches!(lie.group, Group::SO(_)) {
            return invalid("rigid body lives on SO(N)");
        }
        if inertia.len() != lie.dim() || inertia.iter().any(|&x| !(x > 0.0)) {
            return invalid("inertia needs one positive entry per algebra direction");
        }
        Ok(RigidModel { lie, inertia })
    }

    /// Inertia for the plane `(a, b)` generator from a diagonal body matrix: `J_a + J_b`.
    pub fn from_body_diagonal(n: usize, j: &[f64]) -> Result<Self> {
        if j.len() != n || j.iter().any(|&x| !(x > 0.0)) {
            return invalid("body matrix needs n positive entries");
        }
        let mut inertia = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                inertia.push(j[a] + j[b]);
            }
        }
        RigidModel::new(Lie::so(n), inertia)
    }

    pub fn dim(&self) -> usize {
        self.lie.dim()
    }

    pub fn displacement(&self, h: &RigidHistory, p: usize) -> CMat {
        self.lie.inv(&h.q[p]) * &h.q[p + 1]
    }

    pub fn theta(&self, h: &RigidHistory, p: usize) -> Vec<f64> {
        self.lie.theta(&self.displacement(h, p))
    }

    pub fn segment_lagrangian(&self, h: &RigidHistory, p: usize) -> f64 {
        let a = h.complex.lapse;
        let e = &h.e[p];
        let quad: f64 = e.iter().zip(&self.inertia).map(|(x, i)| x * x / i).sum();
        liegroup::dot(e, &self.theta(h, p)) - 0.5 * a * quad
    }

    pub fn action(&self, h: &RigidHistory) -> f64 {
        (0..h.e.len()).map(|p| self.segment_lagrangian(h, p)).sum()
    }

    /// `A_p = coeffs(E_p Φ_p)`, conjugate to `ξ_{p+1}`.
    pub fn a_mom(&self, h: &RigidHistory, p: usize) -> Vec<f64> {
        self.lie.coeffs(&(self.lie.matrix(&h.e[p]) * self.displacement(h, p)))
    }

    /// `B_p = coeffs(Φ_p E_p)`, minus the coefficient of `ξ_p`.
    pub fn b_mom(&self, h: &RigidHistory, p: usize) -> Vec<f64> {
        self.lie.coeffs(&(self.displacement(h, p) * self.lie.matrix(&h.e[p])))
    }

    /// Body momenta `(u⁻, w⁻, w⁺, u⁺)` of atom `i`.
    pub fn body_momenta(&self, h: &RigidHistory, i: usize) -> [Vec<f64>; 4] {
        let (sm, sp) = (2 * i, 2 * i + 1);
        [self.b_mom(h, sm), self.a_mom(h, sm), self.b_mom(h, sp), self.a_mom(h, sp)]
    }

    /// Space angular momentum of segment `p`: `½(q_{p+1} E q_pᵀ + q_p E q_{p+1}ᵀ)`.
    pub fn space_momentum(&self, h: &RigidHistory, p: usize) -> Vec<f64> {
        let e = self.lie.matrix(&h.e[p]);
        let (q0, q1) = (&h.q[p], &h.q[p + 1]);
        let m = (q1 * &e * q0.adjoint() + q0 * &e * q1.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
        self.lie.coeffs(&m)
    }

    /// `∂S/∂q_p` in the right trivialization, all points.
    pub fn q_gradient(&self, h: &RigidHistory) -> Vec<Vec<f64>> {
        let np = h.q.len();
        (0..np)
            .map(|p| {
                let mut g = self.lie.zero_algebra();
                if p > 0 {
                    g = liegroup::add(&g, &self.a_mom(h, p - 1));
                }
                if p + 1 < np {
                    g = liegroup::sub(&g, &self.b_mom(h, p));
                }
                g
            })
            .collect()
    }

    /// `∂S/∂e_p = θ_p − a e_p/I`.
    pub fn e_gradient(&self, h: &RigidHistory, p: usize) -> Vec<f64> {
        let a = h.complex.lapse;
        self.theta(h, p).iter().zip(&h.e[p]).zip(&self.inertia).map(|((t, e), i)| t - a * e / i).collect()
    }

    fn flat_gradient(&self, h: &RigidHistory) -> DVec {
        let d = self.dim();
        let qg = self.q_gradient(h);
        let mut out = DVec::zeros(self.tangent_len(h));
        for (p, g) in qg.iter().enumerate() {
            for j in 0..d {
                out[p * d + j] = g[j];
            }
        }
        let off = h.q.len() * d;
        for p in 0..h.e.len() {
            let g = self.e_gradient(h, p);
            for j in 0..d {
                out[off + p * d + j] = g[j];
            }
        }
        out
    }

    fn tangent_len(&self, h: &RigidHistory) -> usize {
        (h.q.len() + h.e.len()) * self.dim()
    }

    /// Largest interior, gluing or momentum-velocity residual.
    pub fn max_residual(&self, h: &RigidHistory) -> f64 {
        let d = self.dim();
        let g = self.flat_gradient(h);
        let np = h.q.len();
        g.iter()
            .enumerate()
            .filter(|(k, _)| !(*k < d || (*k >= (np - 1) * d && *k < np * d)))
            .fold(0.0f64, |m, (_, x)| m.max(x.abs()))
    }

    /// `e_p = I θ_p / a` for every segment.
    pub fn set_momenta(&self, h: &mut RigidHistory) {
        let a = h.complex.lapse;
        for p in 0..h.e.len() {
            let th = self.theta(h, p);
            h.e[p] = th.iter().zip(&self.inertia).map(|(t, i)| i * t / a).collect();
        }
    }

    /// History rotating uniformly from `qa` by `step` per segment.
    pub fn uniform(&self, complex: TimeComplex, qa: &CMat, step: &[f64]) -> RigidHistory {
        let g = self.lie.exp(step);
        let mut q = vec![qa.clone()];
        for p in 0..2 * complex.n_atoms {
            let next = &q[p] * &g;
            q.push(next);
        }
        let mut h = RigidHistory { complex, q, e: vec![self.lie.zero_algebra(); 2 * complex.n_atoms] };
        self.set_momenta(&mut h);
        h
    }

    /// Solves with `q_1⁻ = qa`, `q_n⁺ = qb`. Starts from the geodesic and from
    /// its branch-reflected variants; the distinct converged histories are all
    /// reported and the one of least action is selected.
    pub fn solve(&self, complex: TimeComplex, qa: &CMat, qb: &CMat, opts: &NewtonOpts) -> Result<RigidSolution> {
        let n = self.lie.n();
        if !self.lie.is_member(qa, 1e-10) || !self.lie.is_member(qb, 1e-10) {
            return invalid("boundary data are not in SO(N)");
        }
        let x = self.lie.log(&(self.lie.inv(qa) * qb))?;
        let segs = (2 * complex.n_atoms) as f64;
        let mut steps = vec![liegroup::scale(&x, 1.0 / segs)];
        if n == 3 {
            // Coefficient norm is √2 times the rotation angle for this basis.
            let psi = liegroup::norm(&x) / 2f64.sqrt();
            if psi > 1e-8 {
                let tau = 2.0 * std::f64::consts::PI;
                steps.push(liegroup::scale(&x, (1.0 - tau / psi) / segs));
                let phi = psi / segs;
                steps.push(liegroup::scale(&x, (phi - std::f64::consts::PI) / phi / segs));
            }
        }
        let mut found: Vec<(RigidHistory, f64, NewtonReport)> = Vec::new();
        let mut last_err = None;
        for st in steps {
            let mut h0 = self.uniform(complex, qa, &st);
            *h0.q.last_mut().unwrap() = qb.clone();
            match self.newton_solve(h0, opts) {
                Ok((h, rep)) => {
                    let dup = found.iter().any(|(g, _, _)| {
                        g.q.iter().zip(&h.q).all(|(x, y)| (x - y).iter().all(|z| z.norm() < 1e-6))
                    });
                    if !dup {
                        let s = self.action(&h);
                        found.push((h, s, rep));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        if found.is_empty() {
            return Err(last_err.unwrap_or(Error::SolverFailure { iterations: 0, residual: f64::NAN }));
        }
        let best = found
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(k, _)| k)
            .unwrap();
        let (h, _, rep) = found[best].clone();
        Ok(RigidSolution {
            history: h,
            report: rep,
            branches: found.into_iter().map(|(h, s, _)| (h, s)).collect(),
        })
    }

    fn newton_solve(&self, h0: RigidHistory, opts: &NewtonOpts) -> Result<(RigidHistory, NewtonReport)> {
        let d = self.dim();
        let np = h0.q.len();
        let nf = (np - 2) * d;
        let interior = |h: &RigidHistory| -> DVec {
            let mut hh = h.clone();
            self.set_momenta(&mut hh);
            let qg = self.q_gradient(&hh);
            DVec::from_iterator(nf, qg[1..np - 1].iter().flat_map(|g| g.iter().copied()))
        };
        let retract = |h: &RigidHistory, dx: &DVec| {
            let mut out = h.clone();
            for p in 1..np - 1 {
                let xi: Vec<f64> = (0..d).map(|j| dx[(p - 1) * d + j]).collect();
                out.q[p] = self.lie.reproject(&(&out.q[p] * self.lie.exp(&xi)));
            }
            out
        };
        // Point p's equation reads only q_{p−1}, q_p, q_{p+1}.
        let jacobian = |h: &RigidHistory| fd_jacobian_banded(np - 2, d, 1, JAC_STEP, |dx| interior(&retract(h, dx)));
        let (mut h, rep) = newton(h0, interior, jacobian, retract, opts)?;
        self.set_momenta(&mut h);
        Ok((h, rep))
    }

    /// Space angular momentum of every segment; refuses unless `h` solves to `tol`.
    pub fn noether_current(&self, h: &RigidHistory, tol: f64) -> Result<Vec<Vec<f64>>> {
        let r = self.max_residual(h);
        if r > tol {
            return Err(Error::NotASolution(r));
        }
        Ok((0..h.e.len()).map(|p| self.space_momentum(h, p)).collect())
    }

    fn split(&self, h: &RigidHistory, v: &DVec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let d = self.dim();
        let np = h.q.len();
        let xi = (0..np).map(|p| v.rows(p * d, d).iter().copied().collect()).collect();
        let de = (0..h.e.len()).map(|p| v.rows((np + p) * d, d).iter().copied().collect()).collect();
        (xi, de)
    }

    /// `Θ_L` at `1⁻` (`u⁻` paired with `ξ_0`) and at `n⁺` (`u⁺` paired with `ξ_{2n}`).
    pub fn cartan_ends(&self, h: &RigidHistory, v: &DVec) -> (f64, f64) {
        let (xi, _) = self.split(h, v);
        let last = h.e.len() - 1;
        (liegroup::dot(&self.b_mom(h, 0), &xi[0]), liegroup::dot(&self.a_mom(h, last), &xi[last + 1]))
    }

    /// `Ω_L(v, w)` at `1⁻`.
    pub fn omega_first(&self, h: &RigidHistory, v: &DVec, w: &DVec) -> f64 {
        let (xv, ev) = self.split(h, v);
        let (xw, ew) = self.split(h, w);
        let phi = self.displacement(h, 0);
        let e = self.lie.matrix(&h.e[0]);
        let db = |x: &[Vec<f64>], de: &[Vec<f64>]| {
            self.lie.coeffs(&(&phi * (self.lie.matrix(&x[1]) * &e + self.lie.matrix(&de[0]))))
        };
        -(liegroup::dot(&xw[0], &db(&xv, &ev)) - liegroup::dot(&xv[0], &db(&xw, &ew)))
    }

    /// `Ω_L(v, w)` at `n⁺`.
    pub fn omega_last(&self, h: &RigidHistory, v: &DVec, w: &DVec) -> f64 {
        let (xv, ev) = self.split(h, v);
        let (xw, ew) = self.split(h, w);
        let p = h.e.len() - 1;
        let phi = self.displacement(h, p);
        let e = self.lie.matrix(&h.e[p]);
        let da = |x: &[Vec<f64>], de: &[Vec<f64>]| {
            self.lie.coeffs(&((self.lie.matrix(&de[p]) - &e * self.lie.matrix(&x[p])) * &phi))
        };
        -(liegroup::dot(&xw[p + 1], &da(&xv, &ev)) - liegroup::dot(&xv[p + 1], &da(&xw, &ew)))
    }

    pub fn symplectic_defect(&self, h: &RigidHistory, v: &DVec, w: &DVec) -> f64 {
        -self.omega_first(h, v, w) + self.omega_last(h, v, w)
    }

    /// Tangents to the solution space: null space of the linearized equations
    /// (all rows except the two boundary point rows).
    pub fn first_variations(&self, h: &RigidHistory) -> Vec<DVec> {
        let d = self.dim();
        let np = h.q.len();
        let n = self.tangent_len(h);
        let rows: Vec<usize> = (d..(np - 1) * d).chain(np * d..n).collect();
        let jac = fd_jacobian(rows.len(), n, JAC_STEP, |j, t| {
            let mut v = DVec::zeros(n);
            v[j] = t;
            self.flat_gradient(&self.retract(h, &v)).select_rows(&rows)
        });
        null_space(&jac, 1e-9)
    }
}

impl Variational for RigidModel {
    type History = RigidHistory;

    fn tangent_dim(&self, h: &RigidHistory) -> usize {
        self.tangent_len(h)
    }

    fn action(&self, h: &RigidHistory) -> f64 {
        RigidModel::action(self, h)
    }

    fn ds(&self, h: &RigidHistory, v: &DVec) -> DsSplit {
        let g = self.flat_gradient(h);
        let d = self.dim();
        let last = (h.q.len() - 1) * d;
        let mut out = DsSplit::default();
        for k in 0..g.len() {
            let c = g[k] * v[k];
            if k < d || (last..last + d).contains(&k) {
                out.boundary += c;
            } else {
                out.bulk += c;
            }
        }
        out
    }

    fn retract(&self, h: &RigidHistory, v: &DVec) -> RigidHistory {
        let (xi, de) = self.split(h, v);
        RigidHistory {
            complex: h.complex,
            q: h.q.iter().zip(&xi).map(|(q, x)| q * self.lie.exp(x)).collect(),
            e: h.e.iter().zip(&de).map(|(e, x)| liegroup::add(e, x)).collect(),
        }
    }
}

/// Veselov's segment Lagrangian `(2/a)[N − Tr(q_p J q_{p+1}ᵀ)]` with diagonal body matrix `J`.
#[derive(Debug, Clone)]
pub struct VeselovModel {
    pub lie: Lie,
    pub body: Vec<f64>,
}

impl VeselovModel {
    pub fn new(n: usize, body: Vec<f64>) -> Result<Self> {
        if body.len() != n || body.iter().any(|&x| !(x > 0.0)) {
            return invalid("body matrix needs n positive entries");
        }
        Ok(VeselovModel { lie: Lie::so(n), body })
    }

    fn jmat(&self) -> CMat {
        let n = self.body.len();
        CMat::from_fn(n, n, |r, c| if r == c { self.body[r].into() } else { 0.0.into() })
    }

    pub fn segment_lagrangian(&self, q0: &CMat, q1: &CMat, a: f64) -> f64 {
        let n = self.body.len() as f64;
        (2.0 / a) * (n - liegroup::re_tr(&(q0 * self.jmat() * q1.adjoint())))
    }

    pub fn action(&self, complex: &TimeComplex, q: &[CMat]) -> f64 {
        q.windows(2).map(|w| self.segment_lagrangian(&w[0], &w[1], complex.lapse)).sum()
    }

    /// Momentum conjugate to the later point of a segment with displacement `Φ`: `(2/a) coeffs(JΦ)`.
    pub fn later_momentum(&self, phi: &CMat, a: f64) -> Vec<f64> {
        liegroup::scale(&self.lie.coeffs(&(self.jmat() * phi)), 2.0 / a)
    }

    /// Momentum conjugate to the earlier point, `(2/a) coeffs(ΦJ)`; the right-trivialized gradient is its negative.
    pub fn earlier_momentum(&self, phi: &CMat, a: f64) -> Vec<f64> {
        liegroup::scale(&self.lie.coeffs(&(phi * self.jmat())), 2.0 / a)
    }
}

/// One row of the momentum comparison between the two rigid-body models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumMismatch {
    pub step: f64,
    pub mismatch: f64,
}

/// For displacements `Φ = exp(θ X̂)` compares `a·A` of the first-order model
/// (with `e = Iθ/a` and matching inertia `J_a + J_b`) to `a` times Veselov's
/// later-point momentum. The mismatch is the largest component difference.
pub fn veselov_vs_rigid(body: &[f64], dir: &[f64], steps: &[f64], a: f64) -> Result<Vec<MomentumMismatch>> {
    let n = body.len();
    let rigid = RigidModel::from_body_diagonal(n, body)?;
    let ves = VeselovModel::new(n, body.to_vec())?;
    if dir.len() != rigid.dim() || liegroup::norm(dir) == 0.0 {
        return invalid("direction must be a nonzero algebra element");
    }
    let unit = liegroup::scale(dir, 1.0 / liegroup::norm(dir));
    let complex = TimeComplex::new(1, a)?;
    Ok(steps
        .iter()
        .map(|&t| {
            let step = liegroup::scale(&unit, t);
            let h = rigid.uniform(complex, &rigid.lie.identity(), &step);
            let ar = rigid.a_mom(&h, 0);
            let av = ves.later_momentum(&rigid.displacement(&h, 0), a);
            let mismatch = ar.iter().zip(&av).fold(0.0f64, |m, (x, y)| m.max((a * (x - y)).abs()));
            MomentumMismatch { step: t, mismatch }
        })
        .collect())
}

/// Right-trivialized gradient of the Veselov action over all points.
pub fn veselov_gradient(m: &VeselovModel, complex: &TimeComplex, q: &[CMat]) -> Vec<Vec<f64>> {
    let a = complex.lapse;
    (0..q.len())
        .map(|p| {
            let mut g = m.lie.zero_algebra();
            if p > 0 {
                let phi = m.lie.inv(&q[p - 1]) * &q[p];
                g = liegroup::add(&g, &m.later_momentum(&phi, a));
            }
            if p + 1 < q.len() {
                let phi = m.lie.inv(&q[p]) * &q[p + 1];
                g = liegroup::sub(&g, &m.earlier_momentum(&phi, a));
            }
            g
        })
        .collect()
}

/// `inf_norm` over a list of algebra vectors.
pub fn max_abs(vs: &[Vec<f64>]) -> f64 {
    vs.iter().map(|v| inf_norm(&DVec::from_column_slice(v))).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::fit_order;
    use crate::variational::fd_ds;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> RigidModel {
        RigidModel::new(Lie::so(3), vec![1.0, 2.0, 3.0]).unwrap()
    }

    fn random_history(m: &RigidModel, n: usize, a: f64, rng: &mut ChaCha8Rng) -> RigidHistory {
        let c = TimeComplex::new(n, a).unwrap();
        RigidHistory {
            complex: c,
            q: (0..c.n_points()).map(|_| m.lie.random_element(rng, 1.5)).collect(),
            e: (0..2 * n).map(|_| m.lie.random_algebra(rng, 1.0)).collect(),
        }
    }

    #[test]
    fn identity_history_has_zero_action() {
        let m = model();
        let c = TimeComplex::new(3, 0.2).unwrap();
        let h = RigidHistory { complex: c, q: vec![m.lie.identity(); 7], e: vec![vec![0.0; 3]; 6] };
        assert_eq!(m.action(&h), 0.0);
    }

    #[test]
    fn ds_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = model();
        let h = random_history(&m, 2, 0.3, &mut rng);
        let v = DVec::from_fn(m.tangent_dim(&h), |_, _| rng.gen_range(-1.0..1.0));
        let ds = m.ds(&h, &v).total();
        for eps in [1e-3, 1e-4, 1e-5] {
            assert!((ds - fd_ds(&m, &h, &v, eps)).abs() < 20.0 * eps * eps + 1e-10);
        }
    }

    #[test]
    fn body_momentum_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let m = model();
        let h = random_history(&m, 3, 0.2, &mut rng);
        for i in 0..3 {
            let [um, wm, wp, up] = m.body_momenta(&h, i);
            let (pm, pp) = (m.displacement(&h, 2 * i), m.displacement(&h, 2 * i + 1));
            let wm2 = m.lie.coeffs(&(pm.adjoint() * m.lie.matrix(&um) * &pm));
            let up2 = m.lie.coeffs(&(pp.adjoint() * m.lie.matrix(&wp) * &pp));
            for j in 0..3 {
                assert!((wm[j] - wm2[j]).abs() < 1e-12);
                assert!((up[j] - up2[j]).abs() < 1e-12);
            }
            // Body momenta are the space momentum seen from each point.
            let ms = m.lie.matrix(&m.space_momentum(&h, 2 * i));
            let q = &h.q[2 * i];
            let um2 = m.lie.coeffs(&(q.adjoint() * ms * q));
            for j in 0..3 {
                assert!((um[j] - um2[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_rotation_solves_isotropic_body() {
        let m = RigidModel::new(Lie::so(3), vec![1.5; 3]).unwrap();
        let c = TimeComplex::new(6, 0.1).unwrap();
        let h = m.uniform(c, &m.lie.exp(&[0.3, -0.2, 0.1]), &[0.05, 0.02, -0.04]);
        assert!(m.max_residual(&h) < 1e-10);
    }

    #[test]
    fn solve_conserves_space_momentum() {
        let m = model();
        let c = TimeComplex::new(8, 0.05).unwrap();
        let qa = m.lie.identity();
        let qb = m.lie.exp(&[0.4, 0.3, -0.5]);
        let sol = m.solve(c, &qa, &qb, &NewtonOpts { tol: 1e-11, ..Default::default() }).unwrap();
        let h = &sol.history;
        assert!(m.max_residual(h) < 1e-10);
        let js = m.noether_current(h, 1e-10).unwrap();
        for j in &js {
            for k in 0..3 {
                assert!((j[k] - js[0][k]).abs() < 1e-9);
            }
        }
        assert!(!sol.branches.is_empty());
        let smin = sol.branches.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
        assert_eq!(m.action(h), smin);
    }

    #[test]
    fn noether_refuses_random_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let m = model();
        let h = random_history(&m, 2, 0.1, &mut rng);
        assert!(matches!(m.noether_current(&h, 1e-10), Err(Error::NotASolution(_))));
    }

    #[test]
    fn omega_matches_exterior_derivative_of_theta() {
        // Ω = −dΘ on left-invariant fields: −(v Θ(w) − w Θ(v) − Θ([v, w])).
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let m = model();
        let h = random_history(&m, 2, 0.3, &mut rng);
        let n = m.tangent_dim(&h);
        let v = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let d = 3;
        let np = h.q.len();
        let mut br = DVec::zeros(n);
        for p in 0..np {
            let a: Vec<f64> = v.rows(p * d, d).iter().copied().collect();
            let b: Vec<f64> = w.rows(p * d, d).iter().copied().collect();
            let c = m.lie.bracket(&a, &b);
            for j in 0..d {
                br[p * d + j] = c[j];
            }
        }
        let deriv = |f: &dyn Fn(&RigidHistory) -> f64, x: &DVec| {
            let e = 1e-5;
            (f(&m.retract(&h, &(x * e))) - f(&m.retract(&h, &(x * -e)))) / (2.0 * e)
        };
        for end in [0, 1] {
            let th = |hh: &RigidHistory, x: &DVec| {
                let (a, b) = m.cartan_ends(hh, x);
                if end == 0 { a } else { b }
            };
            let om = -(deriv(&|hh| th(hh, &w), &v) - deriv(&|hh| th(hh, &v), &w) - th(&h, &br));
            let mine = if end == 0 { m.omega_first(&h, &v, &w) } else { m.omega_last(&h, &v, &w) };
            assert!((om - mine).abs() < 1e-8, "{end}: {om} vs {mine}");
        }
    }

    #[test]
    fn symplectic_defect_vanishes_on_solution() {
        let m = model();
        let c = TimeComplex::new(3, 0.1).unwrap();
        let sol = m.solve(c, &m.lie.identity(), &m.lie.exp(&[0.2, -0.1, 0.3]), &NewtonOpts::default()).unwrap();
        let vs = m.first_variations(&sol.history);
        assert_eq!(vs.len(), 6);
        for v in &vs {
            for w in &vs {
                assert!(m.symplectic_defect(&sol.history, v, w).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn veselov_identity_examples() {
        let c = TimeComplex::new(1, 0.5).unwrap();
        let id = Lie::so(3).identity();
        let v = VeselovModel::new(3, vec![1.0; 3]).unwrap();
        assert_eq!(v.action(&c, &[id.clone(), id.clone()]), 0.0);
        let g = VeselovModel::new(3, vec![0.5, 1.0, 2.0]).unwrap();
        let l = g.segment_lagrangian(&id, &id, 0.5);
        assert!((l - (6.0 / 0.5) * (1.0 - 3.5 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn veselov_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let v = VeselovModel::new(3, vec![0.7, 1.1, 1.9]).unwrap();
        let c = TimeComplex::new(1, 0.3).unwrap();
        let q: Vec<CMat> = (0..3).map(|_| v.lie.random_element(&mut rng, 1.0)).collect();
        let g = veselov_gradient(&v, &c, &q);
        for p in 0..3 {
            for j in 0..3 {
                let mut xi = vec![0.0; 3];
                xi[j] = 1.0;
                let f = |t: f64| {
                    let mut qq = q.clone();
                    qq[p] = &q[p] * v.lie.exp(&liegroup::scale(&xi, t));
                    v.action(&c, &qq)
                };
                let fd = crate::numerics::central_diff(f, 1e-5);
                assert!((fd - g[p][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn veselov_mismatch_is_second_order() {
        let steps = [1e-1, 1e-2, 1e-3];
        let t = veselov_vs_rigid(&[0.6, 1.0, 1.7], &[0.3, -0.5, 0.8], &steps, 0.1).unwrap();
        for r in &t {
            assert!(r.mismatch / (r.step * r.step) < 10.0);
        }
        let ord = fit_order(&steps, &t.iter().map(|r| r.mismatch).collect::<Vec<_>>());
        assert!(ord >= 2.0 - 1e-6, "order {ord}");
    }
}
