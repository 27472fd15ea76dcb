//! Euclidean lattice gauge theory on a cubical complex.
//!
//! Histories carry `h_l` on links `Cν → Cτ` and `k_r` on links `Cτ → Cσ`. A wedge
//! has holonomy `g_s = h_{l2}⁻¹ k_{r2}⁻¹ k_{r1} h_{l1}` and the action is
//! `β Σ_s [1 − Re Tr(g_s)/N]` over geometric wedges. Variations are `h → h ξ` and
//! `k → ξ k`.

use rand::Rng;

use crate::complex::CubicalComplexND;
use crate::error::{invalid, Error, Result};
use crate::liegroup::{self, CMat, Lie};
use crate::numerics::{fd_jacobian, inf_norm, newton, null_space, DVec, LinearSolve, NewtonOpts, NewtonReport, JAC_STEP};
use crate::par;
use crate::variational::{DsSplit, Variational};

#[derive(Debug, Clone)]
pub struct GaugeModel {
    pub lie: Lie,
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct GaugeHistory {
    pub complex: CubicalComplexND,
    pub h: Vec<CMat>,
    pub k: Vec<CMat>,
}

/// Group elements at every `Cν`, `Cτ` and `Cσ`.
#[derive(Debug, Clone)]
pub struct GaugeTransform {
    pub atoms: Vec<CMat>,
    pub faces: Vec<CMat>,
    pub sigmas: Vec<CMat>,
}

impl GaugeHistory {
    pub fn identity(complex: CubicalComplexND, lie: &Lie) -> Self {
        GaugeHistory {
            h: vec![lie.identity(); complex.n_links()],
            k: vec![lie.identity(); complex.n_rlinks()],
            complex,
        }
    }

    /// Every link drawn as `exp(ξ)` with coefficients uniform in `[−r, r]`.
    pub fn random<R: Rng>(complex: CubicalComplexND, lie: &Lie, rng: &mut R, r: f64) -> Self {
        GaugeHistory {
            h: (0..complex.n_links()).map(|_| lie.random_element(rng, r)).collect(),
            k: (0..complex.n_rlinks()).map(|_| lie.random_element(rng, r)).collect(),
            complex,
        }
    }

    pub fn is_valid(&self, lie: &Lie, tol: f64) -> bool {
        self.h.iter().chain(&self.k).all(|g| lie.is_member(g, tol))
    }
}

impl GaugeTransform {
    pub fn random<R: Rng>(c: &CubicalComplexND, lie: &Lie, rng: &mut R, r: f64) -> Self {
        GaugeTransform {
            atoms: (0..c.n_atoms()).map(|_| lie.random_element(rng, r)).collect(),
            faces: (0..c.n_faces()).map(|_| lie.random_element(rng, r)).collect(),
            sigmas: (0..c.n_sigmas()).map(|_| lie.random_element(rng, r)).collect(),
        }
    }

    /// `h → g_τ h g_ν⁻¹`, `k → g_σ k g_τ⁻¹`.
    pub fn apply(&self, lie: &Lie, a: &GaugeHistory) -> GaugeHistory {
        let c = &a.complex;
        let h = (0..c.n_links())
            .map(|l| {
                let (atom, lf) = c.link_parts(l);
                let f = c.atom_face(atom, lf);
                &self.faces[f] * &a.h[l] * lie.inv(&self.atoms[atom])
            })
            .collect();
        let k = (0..c.n_rlinks())
            .map(|r| {
                let rl = c.rlink(r);
                &self.sigmas[rl.sigma] * &a.k[r] * lie.inv(&self.faces[rl.face])
            })
            .collect();
        GaugeHistory { complex: c.clone(), h, k }
    }
}

impl GaugeModel {
    pub fn new(lie: Lie, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return invalid(format!("beta must be positive, got {beta}"));
        }
        Ok(GaugeModel { lie, beta })
    }

    fn scale(&self) -> f64 {
        self.beta / self.lie.n() as f64
    }

    /// `g_∂s = h_{l2}⁻¹ k_{r2}⁻¹ k_{r1} h_{l1}`.
    pub fn holonomy(&self, a: &GaugeHistory, s: usize) -> CMat {
        let w = a.complex.wedge(s);
        self.lie.inv(&a.h[w.l2]) * self.lie.inv(&a.k[w.r2]) * &a.k[w.r1] * &a.h[w.l1]
    }

    /// `ĝ_s = k_{r1} h_{l1} h_{l2}⁻¹ k_{r2}⁻¹`.
    pub fn hat_holonomy(&self, a: &GaugeHistory, s: usize) -> CMat {
        let w = a.complex.wedge(s);
        &a.k[w.r1] * &a.h[w.l1] * self.lie.inv(&a.h[w.l2]) * self.lie.inv(&a.k[w.r2])
    }

    pub fn wedge_action(&self, a: &GaugeHistory, s: usize) -> f64 {
        let n = self.lie.n() as f64;
        self.beta * (1.0 - liegroup::re_tr(&self.holonomy(a, s)) / n)
    }

    pub fn action(&self, a: &GaugeHistory) -> f64 {
        let ws: Vec<usize> = a.complex.canonical_wedges().collect();
        par::map(&ws, |&s| self.wedge_action(a, s)).iter().sum()
    }

    /// Same sum over the reversed orientation of every wedge.
    pub fn action_reversed(&self, a: &GaugeHistory) -> f64 {
        a.complex.canonical_wedges().map(|s| self.wedge_action(a, a.complex.wedge(s).reverse)).sum()
    }

    /// `L_ν`, the action of the canonical wedges of one atom.
    pub fn atom_lagrangian(&self, a: &GaugeHistory, atom: usize) -> f64 {
        a.complex.atom_wedges(atom).filter(|&s| a.complex.wedge(s).canonical).map(|s| self.wedge_action(a, s)).sum()
    }

    /// `p_r = ∂L_ν/∂k_r[f_i k_r] = (β/N) θ̂_{s(r,ν)}`.
    pub fn momentum(&self, a: &GaugeHistory, r: usize, atom: usize) -> Vec<f64> {
        liegroup::scale(&self.lie.theta(&self.hat_holonomy(a, self.wedge_from(a, r, atom))), self.scale())
    }

    /// `Σ_{s ⊃ l} θ_s` over wedges whose boundary runs along `l`.
    pub fn interior_residual(&self, a: &GaugeHistory, l: usize) -> Vec<f64> {
        let mut out = self.lie.zero_algebra();
        for &s in a.complex.wedges_on_link(l) {
            out = liegroup::add(&out, &self.lie.theta(&self.holonomy(a, s)));
        }
        out
    }

    /// `Σ θ̂_s` over the wedges leaving through `r`, one per atom; for an interior `r`
    /// this is `θ̂_{s(r,ν)} − θ̂_{s(r,ν′)}` with compatible orientations.
    pub fn gluing_residual(&self, a: &GaugeHistory, r: usize) -> Result<Vec<f64>> {
        if !a.complex.face_is_interior(a.complex.rlink(r).face) {
            return invalid(format!("r-link {r} lies in a boundary face"));
        }
        Ok(self.k_gradient_raw(a, r))
    }

    fn k_gradient_raw(&self, a: &GaugeHistory, r: usize) -> Vec<f64> {
        let mut out = self.lie.zero_algebra();
        for &s in a.complex.wedges_with_r1(r) {
            out = liegroup::add(&out, &self.lie.theta(&self.hat_holonomy(a, s)));
        }
        out
    }

    /// The wedge of `atom` leaving through `r`.
    pub(crate) fn wedge_from(&self, a: &GaugeHistory, r: usize, atom: usize) -> usize {
        *a.complex.wedges_with_r1(r).iter().find(|&&s| a.complex.wedge(s).atom == atom).expect("r-link not in atom")
    }

    /// `Θ_L(v, τ_ν) = (β/N) Σ_{r ⊂ τ} ξ_r · θ̂_{s(r,ν)}`.
    pub fn cartan_form(&self, a: &GaugeHistory, face: usize, atom: usize, v: &DVec) -> f64 {
        let d = self.lie.dim();
        let off = a.complex.n_links() * d;
        a.complex
            .face_rlinks(face)
            .map(|r| {
                let th = self.lie.theta(&self.hat_holonomy(a, self.wedge_from(a, r, atom)));
                let xi = v.rows(off + r * d, d);
                self.scale() * th.iter().zip(xi.iter()).map(|(x, y)| x * y).sum::<f64>()
            })
            .sum()
    }

    /// `Σ_{r at Cτ} (Ad_{k_r} f_i) · ∂L/∂k_r` at a boundary face.
    pub fn gauge_constraint(&self, a: &GaugeHistory, face: usize) -> Vec<f64> {
        let atom = a.complex.face_atoms(face)[0];
        let mut out = self.lie.zero_algebra();
        for r in a.complex.face_rlinks(face) {
            let p = liegroup::scale(&self.lie.theta(&self.hat_holonomy(a, self.wedge_from(a, r, atom))), self.scale());
            out = liegroup::add(&out, &self.lie.ad_inv(&a.k[r], &p));
        }
        out
    }

    /// `Ω_L(v, w, τ_ν) = (β/N) Σ_{r ⊂ τ} [ξ_r^i Y_w^j − η_r^i Y_v^j] ϑ_{s,ij}` with
    /// `Y = Ad_{k_{r1}h_{l1}}(ξ_{l1} − ξ_{l2}) − Ad_ĝ ξ_{r2}`.
    pub fn omega(&self, a: &GaugeHistory, face: usize, atom: usize, v: &DVec, w: &DVec) -> f64 {
        let d = self.lie.dim();
        let nl = a.complex.n_links();
        let part = |x: &DVec, i: usize| -> Vec<f64> { x.rows(i * d, d).iter().copied().collect() };
        let mut total = 0.0;
        for r in a.complex.face_rlinks(face) {
            let s = self.wedge_from(a, r, atom);
            let wd = a.complex.wedge(s);
            let gh = self.hat_holonomy(a, s);
            let kh = &a.k[wd.r1] * &a.h[wd.l1];
            let y = |x: &DVec| {
                let t = self.lie.ad(&kh, &liegroup::sub(&part(x, wd.l1), &part(x, wd.l2)));
                liegroup::sub(&t, &self.lie.ad(&gh, &part(x, nl + wd.r2)))
            };
            let (yv, yw) = (y(v), y(w));
            let xr = part(v, nl + r);
            let er = part(w, nl + r);
            let th2 = self.lie.theta2(&gh);
            for i in 0..d {
                for j in 0..d {
                    total += (xr[i] * yw[j] - er[i] * yv[j]) * th2[i * d + j];
                }
            }
        }
        self.scale() * total
    }

    /// Largest interior or gluing residual component (without the `β/N` factor).
    pub fn max_residual(&self, a: &GaugeHistory) -> f64 {
        let c = &a.complex;
        let amax = |v: Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let li = par::map_range(c.n_links(), |l| amax(self.interior_residual(a, l)));
        let mut m = li.into_iter().fold(0.0, f64::max);
        for r in c.interior_rlinks() {
            m = m.max(amax(self.k_gradient_raw(a, r)));
        }
        m
    }

    pub fn multisymplectic_defect(&self, a: &GaugeHistory, v: &DVec, w: &DVec, tol: f64) -> Result<f64> {
        let r = self.max_residual(a);
        if r > tol {
            return Err(Error::NotASolution(r));
        }
        Ok(a.complex
            .boundary_faces()
            .into_iter()
            .map(|f| self.omega(a, f, a.complex.face_atoms(f)[0], v, w))
            .sum())
    }

    /// `dS` coefficients: `(β/N) Σ θ` per link and `(β/N) Σ θ̂` per r-link.
    pub fn gradient(&self, a: &GaugeHistory) -> DVec {
        let c = &a.complex;
        let d = self.lie.dim();
        let mut g = DVec::zeros((c.n_links() + c.n_rlinks()) * d);
        let hl = par::map_range(c.n_links(), |l| self.interior_residual(a, l));
        for (l, x) in hl.iter().enumerate() {
            for j in 0..d {
                g[l * d + j] = self.scale() * x[j];
            }
        }
        let off = c.n_links() * d;
        let kr = par::map_range(c.n_rlinks(), |r| self.k_gradient_raw(a, r));
        for (r, x) in kr.iter().enumerate() {
            for j in 0..d {
                g[off + r * d + j] = self.scale() * x[j];
            }
        }
        g
    }

    fn unknowns(&self, c: &CubicalComplexND) -> Vec<usize> {
        let d = self.lie.dim();
        let off = c.n_links() * d;
        (0..off).chain(c.interior_rlinks().into_iter().flat_map(|r| (0..d).map(move |j| off + r * d + j))).collect()
    }

    /// Solves for all `h_l` and interior `k_r` with the boundary `k_r` of `guess` held
    /// fixed. The system is gauge-degenerate; Newton steps are minimum-norm, which
    /// keeps them orthogonal to the gauge directions.
    pub fn solve(&self, guess: GaugeHistory, opts: &NewtonOpts) -> Result<(GaugeHistory, NewtonReport)> {
        let idx = self.unknowns(&guess.complex);
        let n = self.tangent_dim(&guess);
        let residual = |a: &GaugeHistory| self.gradient(a).select_rows(&idx);
        let embed = |dx: &DVec| {
            let mut v = DVec::zeros(n);
            for (m, &k) in idx.iter().enumerate() {
                v[k] = dx[m];
            }
            v
        };
        let jacobian = |a: &GaugeHistory| {
            fd_jacobian(idx.len(), idx.len(), JAC_STEP, |j, t| {
                let mut v = DVec::zeros(n);
                v[idx[j]] = t;
                self.gradient(&self.retract(a, &v)).select_rows(&idx)
            })
        };
        let retract = |a: &GaugeHistory, dx: &DVec| {
            let mut out = self.retract(a, &embed(dx));
            out.h.iter_mut().for_each(|g| *g = self.lie.reproject(g));
            out.k.iter_mut().for_each(|g| *g = self.lie.reproject(g));
            out
        };
        let o = NewtonOpts { linear: LinearSolve::Pinv, ..*opts };
        newton(guess, residual, jacobian, retract, &o)
    }

    /// Null space of the linearized bulk and gluing equations over all variables.
    pub fn first_variations(&self, a: &GaugeHistory) -> Vec<DVec> {
        let idx = self.unknowns(&a.complex);
        let n = self.tangent_dim(a);
        let jac = fd_jacobian(idx.len(), n, JAC_STEP, |j, t| {
            let mut v = DVec::zeros(n);
            v[j] = t;
            self.gradient(&self.retract(a, &v)).select_rows(&idx)
        });
        null_space(&jac, 1e-8)
    }

    /// Tangent of the gauge orbit generated by `ξ_ν, ξ_τ, ξ_σ` (flattened per site).
    pub fn gauge_direction(&self, a: &GaugeHistory, atoms: &[Vec<f64>], faces: &[Vec<f64>], sigmas: &[Vec<f64>]) -> DVec {
        let c = &a.complex;
        let d = self.lie.dim();
        let mut v = DVec::zeros(self.tangent_dim(a));
        for l in 0..c.n_links() {
            let (atom, lf) = c.link_parts(l);
            let f = c.atom_face(atom, lf);
            // h → (1+ξ_τ) h (1−ξ_ν) = h (1 + Ad_{h⁻¹} ξ_τ − ξ_ν)
            let x = liegroup::sub(&self.lie.ad_inv(&a.h[l], &faces[f]), &atoms[atom]);
            for j in 0..d {
                v[l * d + j] = x[j];
            }
        }
        let off = c.n_links() * d;
        for r in 0..c.n_rlinks() {
            let rl = c.rlink(r);
            // k → (1+ξ_σ) k (1−ξ_τ) = (1 + ξ_σ − Ad_k ξ_τ) k
            let x = liegroup::sub(&sigmas[rl.sigma], &self.lie.ad(&a.k[r], &faces[rl.face]));
            for j in 0..d {
                v[off + r * d + j] = x[j];
            }
        }
        v
    }

    /// Plaquette holonomy `ĝ_{σ*} = ĝ_{s4} ĝ_{s3} ĝ_{s2} ĝ_{s1}` at every interior `σ`.
    pub fn plaquettes(&self, a: &GaugeHistory) -> Vec<(usize, CMat)> {
        a.complex
            .interior_sigmas()
            .into_iter()
            .map(|sg| {
                let cyc = a.complex.sigma_cycle(sg).expect("interior sigma has a wedge cycle");
                let gs: Vec<CMat> = cyc.iter().map(|&s| self.hat_holonomy(a, s)).collect();
                (sg, self.lie.chain_product(&gs, None))
            })
            .collect()
    }

    /// `β Σ_□ 4[1 − Re Tr(g_□^{1/4})/N]`, with the plaquette variables used.
    pub fn reduce_wilson(&self, a: &GaugeHistory) -> Result<(f64, Vec<(usize, CMat)>)> {
        let n = self.lie.n() as f64;
        let plaq = self.plaquettes(a);
        let mut s = 0.0;
        for (_, g) in &plaq {
            let q = self.lie.powf(g, 0.25)?;
            s += 4.0 * self.beta * (1.0 - liegroup::re_tr(&q) / n);
        }
        Ok((s, plaq))
    }

    /// Full action restricted to wedges touching interior `σ` (the reduced domain).
    pub fn interior_sigma_action(&self, a: &GaugeHistory) -> f64 {
        a.complex
            .canonical_wedges()
            .filter(|&s| a.complex.sigma_is_interior(a.complex.wedge(s).sigma))
            .map(|s| self.wedge_action(a, s))
            .sum()
    }

    /// Sets the `k` links around every interior `σ` so that each of the four
    /// wedges has `ĝ_s = ĝ_{σ*}^{1/4}`, starting the cycle from the current value
    /// of `k_{r2(s1)}`. The `h` links are left untouched.
    pub fn split_fourth_roots(&self, a: &mut GaugeHistory) -> Result<()> {
        for sg in a.complex.interior_sigmas() {
            let cyc = a.complex.sigma_cycle(sg).expect("cycle");
            let hs: Vec<CMat> = cyc
                .iter()
                .map(|&s| {
                    let w = a.complex.wedge(s);
                    &a.h[w.l1] * self.lie.inv(&a.h[w.l2])
                })
                .collect();
            let k0 = a.k[a.complex.wedge(cyc[0]).r2].clone();
            let hprod = self.lie.chain_product(&hs, None);
            let gq = self.lie.powf(&(&k0 * hprod * self.lie.inv(&k0)), 0.25)?;
            let mut prev = k0;
            for (i, &s) in cyc.iter().enumerate().take(3) {
                let r1 = a.complex.wedge(s).r1;
                let next = &gq * &prev * self.lie.inv(&hs[i]);
                a.k[r1] = next.clone();
                prev = next;
            }
        }
        Ok(())
    }
}

impl Variational for GaugeModel {
    type History = GaugeHistory;

    fn tangent_dim(&self, a: &GaugeHistory) -> usize {
        (a.complex.n_links() + a.complex.n_rlinks()) * self.lie.dim()
    }

    fn action(&self, a: &GaugeHistory) -> f64 {
        GaugeModel::action(self, a)
    }

    fn ds(&self, a: &GaugeHistory, v: &DVec) -> DsSplit {
        let g = self.gradient(a);
        let c = &a.complex;
        let d = self.lie.dim();
        let off = c.n_links() * d;
        let mut out = DsSplit::default();
        for k in 0..g.len() {
            let t = g[k] * v[k];
            if k >= off && !c.face_is_interior(c.rlink((k - off) / d).face) {
                out.boundary += t;
            } else {
                out.bulk += t;
            }
        }
        out
    }

    fn retract(&self, a: &GaugeHistory, v: &DVec) -> GaugeHistory {
        let d = self.lie.dim();
        let off = a.complex.n_links() * d;
        let xi = |i: usize| -> Vec<f64> { v.rows(i, d).iter().copied().collect() };
        GaugeHistory {
            complex: a.complex.clone(),
            h: a.h.iter().enumerate().map(|(l, g)| g * self.lie.exp(&xi(l * d))).collect(),
            k: a.k.iter().enumerate().map(|(r, g)| self.lie.exp(&xi(off + r * d)) * g).collect(),
        }
    }
}

/// Largest entry of `|g − 1|` over a list of group elements.
pub fn distance_from_identity(lie: &Lie, gs: &[CMat]) -> f64 {
    gs.iter().map(|g| (g - lie.identity()).iter().fold(0.0f64, |m, z| m.max(z.norm()))).fold(0.0, f64::max)
}

/// Infinity norm of a residual given as a list of algebra vectors.
pub fn residual_inf(vs: &[Vec<f64>]) -> f64 {
    vs.iter().map(|v| inf_norm(&DVec::from_column_slice(v))).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::fd_ds;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn su2(beta: f64) -> GaugeModel {
        GaugeModel::new(Lie::su2(), beta).unwrap()
    }

    #[test]
    fn identity_history_is_flat() {
        let m = su2(2.0);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let a = GaugeHistory::identity(c.clone(), &m.lie);
        assert_eq!(m.action(&a), 0.0);
        assert_eq!(m.max_residual(&a), 0.0);
        assert_eq!(m.reduce_wilson(&a).unwrap().0, 0.0);
        for f in c.boundary_faces() {
            assert!(m.gauge_constraint(&a, f).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn single_wedge_closed_form() {
        let m = su2(1.5);
        let c = CubicalComplexND::new(&[1, 1]).unwrap();
        let mut a = GaugeHistory::identity(c.clone(), &m.lie);
        let s = c.canonical_wedges().next().unwrap();
        let th = 0.7;
        a.k[c.wedge(s).r1] = m.lie.exp(&[th, 0.0, 0.0]);
        let exact = 1.5 * (1.0 - (th / 2.0).cos());
        assert!((m.wedge_action(&a, s) - exact).abs() < 1e-14);
    }

    #[test]
    fn orientation_and_gauge_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = su2(1.0);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let a = GaugeHistory::random(c.clone(), &m.lie, &mut rng, 0.8);
        assert!((m.action(&a) - m.action_reversed(&a)).abs() < 1e-12);
        let s0 = m.action(&a);
        for _ in 0..5 {
            let g = GaugeTransform::random(&c, &m.lie, &mut rng, 2.0);
            let b = g.apply(&m.lie, &a);
            assert!((m.action(&b) - s0).abs() < 1e-12);
            for l in 0..c.n_links() {
                let (x, y) = (m.interior_residual(&a, l), m.interior_residual(&b, l));
                assert!((liegroup::norm(&x) - liegroup::norm(&y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ds_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let m = su2(1.3);
        for dims in [vec![1, 1], vec![2, 1], vec![1, 1, 1]] {
            let c = CubicalComplexND::new(&dims).unwrap();
            let a = GaugeHistory::random(c, &m.lie, &mut rng, 1.0);
            let v = DVec::from_fn(m.tangent_dim(&a), |_, _| rng.gen_range(-1.0..1.0));
            let ds = m.ds(&a, &v).total();
            for eps in [1e-3, 1e-4] {
                assert!((ds - fd_ds(&m, &a, &v, eps)).abs() < 50.0 * eps * eps);
            }
        }
    }

    #[test]
    fn gluing_matches_paired_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let m = su2(1.0);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let a = GaugeHistory::random(c.clone(), &m.lie, &mut rng, 0.7);
        for r in c.interior_rlinks() {
            let out = m.gluing_residual(&a, r).unwrap();
            // θ̂ of the wedge leaving through r in the lower atom, minus θ̂ of the
            // wedge entering through r in the upper atom.
            let atoms = c.face_atoms(c.rlink(r).face);
            let s = *c.wedges_with_r1(r).iter().find(|&&s| c.wedge(s).atom == atoms[0]).unwrap();
            let sp = *c.wedges_with_r2(r).iter().find(|&&s| c.wedge(s).atom == atoms[1]).unwrap();
            let d = liegroup::sub(&m.lie.theta(&m.hat_holonomy(&a, s)), &m.lie.theta(&m.hat_holonomy(&a, sp)));
            for j in 0..3 {
                assert!((out[j] - d[j]).abs() < 1e-13);
            }
        }
        assert!(m.gluing_residual(&a, c.boundary_rlinks()[0]).is_err());
    }

    #[test]
    fn constraint_equals_transported_link_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let m = su2(0.9);
        let c = CubicalComplexND::new(&[2, 1]).unwrap();
        let a = GaugeHistory::random(c.clone(), &m.lie, &mut rng, 0.9);
        for f in c.boundary_faces() {
            let atom = c.face_atoms(f)[0];
            let lf = (0..2 * c.n()).find(|&lf| c.atom_face(atom, lf) == f).unwrap();
            let l = c.link(atom, lf);
            let q = liegroup::scale(&m.interior_residual(&a, l), m.beta / 2.0);
            let lhs = m.lie.ad(&a.h[l], &q);
            let rhs = m.gauge_constraint(&a, f);
            for j in 0..3 {
                assert!((lhs[j] - rhs[j]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn omega_matches_exterior_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let m = su2(1.1);
        let c = CubicalComplexND::new(&[1, 1, 1]).unwrap();
        let a = GaugeHistory::random(c.clone(), &m.lie, &mut rng, 0.8);
        let n = m.tangent_dim(&a);
        let d = 3;
        let v = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        // Right variations on h bracket as [ξ, η]; left variations on k as −[ξ, η].
        let mut br = DVec::zeros(n);
        for b in 0..n / d {
            let x: Vec<f64> = v.rows(b * d, d).iter().copied().collect();
            let y: Vec<f64> = w.rows(b * d, d).iter().copied().collect();
            let z = m.lie.bracket(&x, &y);
            let sg = if b < c.n_links() { 1.0 } else { -1.0 };
            for j in 0..d {
                br[b * d + j] = sg * z[j];
            }
        }
        let f = c.boundary_faces()[2];
        let atom = 0;
        let th = |h: &GaugeHistory, x: &DVec| m.cartan_form(h, f, atom, x);
        let deriv = |x: &DVec, y: &DVec| {
            let e = 1e-5;
            (th(&m.retract(&a, &(x * e)), y) - th(&m.retract(&a, &(x * -e)), y)) / (2.0 * e)
        };
        let expect = -(deriv(&v, &w) - deriv(&w, &v) - th(&a, &br));
        assert!((expect - m.omega(&a, f, atom, &v, &w)).abs() < 1e-8);
    }

    #[test]
    fn gauge_null_directions_at_identity() {
        let m = su2(1.0);
        for dims in [vec![1, 1], vec![1, 1, 1]] {
            let c = CubicalComplexND::new(&dims).unwrap();
            let a = GaugeHistory::identity(c.clone(), &m.lie);
            let nl = c.n_links() * 3;
            let jac = fd_jacobian(nl, nl, JAC_STEP, |j, t| {
                let mut v = DVec::zeros(m.tangent_dim(&a));
                v[j] = t;
                m.gradient(&m.retract(&a, &v)).rows(0, nl).clone_owned()
            });
            assert_eq!(crate::numerics::rank(&jac, 1e-8), nl - 3);
        }
    }

    #[test]
    fn solve_small_boundary_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let m = su2(1.0);
        let c = CubicalComplexND::new(&[1, 1]).unwrap();
        let mut a = GaugeHistory::identity(c.clone(), &m.lie);
        for r in c.boundary_rlinks() {
            a.k[r] = m.lie.random_element(&mut rng, 0.05 / 3f64.sqrt());
        }
        let (sol, _) = m.solve(a, &NewtonOpts { tol: 1e-12, ..Default::default() }).unwrap();
        assert!(m.max_residual(&sol) < 1e-9);
        for f in c.boundary_faces() {
            assert!(inf_norm(&DVec::from_vec(m.gauge_constraint(&sol, f))) < 1e-9);
        }
    }

    #[test]
    fn pure_gauge_boundary_gives_flat_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let m = su2(1.0);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let g = GaugeTransform::random(&c, &m.lie, &mut rng, 0.3);
        let pure = g.apply(&m.lie, &GaugeHistory::identity(c.clone(), &m.lie));
        let mut guess = GaugeHistory::identity(c.clone(), &m.lie);
        for r in c.boundary_rlinks() {
            guess.k[r] = pure.k[r].clone();
        }
        let (sol, _) = m.solve(guess, &NewtonOpts { tol: 1e-12, ..Default::default() }).unwrap();
        let hol: Vec<CMat> = c.canonical_wedges().map(|s| m.holonomy(&sol, s)).collect();
        assert!(distance_from_identity(&m.lie, &hol) < 1e-9);
        assert!(m.action(&sol).abs() < 1e-12);
    }

    #[test]
    fn defect_vanishes_on_first_variations() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let m = su2(1.0);
        let c = CubicalComplexND::new(&[1, 1]).unwrap();
        let mut a = GaugeHistory::identity(c.clone(), &m.lie);
        for r in c.boundary_rlinks() {
            a.k[r] = m.lie.random_element(&mut rng, 0.1);
        }
        let (sol, _) = m.solve(a, &NewtonOpts { tol: 1e-13, ..Default::default() }).unwrap();
        let vs = m.first_variations(&sol);
        assert!(!vs.is_empty());
        for v in &vs {
            assert_eq!(m.multisymplectic_defect(&sol, v, v, 1e-10).unwrap(), 0.0);
            for w in &vs {
                assert!(m.multisymplectic_defect(&sol, v, w, 1e-10).unwrap().abs() < 1e-9);
            }
        }
        let z = vec![m.lie.zero_algebra(); c.n_sigmas()];
        let gv = m.gauge_direction(&sol, &[vec![0.3, -0.2, 0.5]], &vec![m.lie.zero_algebra(); c.n_faces()], &z);
        for v in &vs {
            assert!(m.multisymplectic_defect(&sol, &gv, v, 1e-10).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_wilson_on_split_histories() {
        let mut rng = ChaCha8Rng::seed_from_u64(49);
        let m = su2(1.7);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let mut a = GaugeHistory::random(c.clone(), &m.lie, &mut rng, 0.1);
        m.split_fourth_roots(&mut a).unwrap();
        for r in c.interior_rlinks() {
            if c.sigma_is_interior(c.rlink(r).sigma) {
                assert!(inf_norm(&DVec::from_vec(m.gluing_residual(&a, r).unwrap())) < 1e-13);
            }
        }
        let (sr, _) = m.reduce_wilson(&a).unwrap();
        assert!((sr - m.interior_sigma_action(&a)).abs() < 1e-12);
    }

    #[test]
    fn reduced_wilson_closed_form() {
        let m = su2(2.0);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let mut a = GaugeHistory::identity(c.clone(), &m.lie);
        let sg = c.interior_sigmas()[0];
        let s1 = c.sigma_cycle(sg).unwrap()[0];
        a.h[c.wedge(s1).l1] = m.lie.exp(&[0.0, 0.4, 0.0]);
        let (sr, plaq) = m.reduce_wilson(&a).unwrap();
        assert_eq!(plaq.len(), 1);
        assert!((sr - 4.0 * 2.0 * (1.0 - (0.4f64 / 8.0).cos())).abs() < 1e-14);
    }
}
