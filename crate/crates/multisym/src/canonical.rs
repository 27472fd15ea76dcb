//! Discrete dual jet bundle: covariant Legendre map, canonical forms and their
//! pullbacks for the scalar, gauge and BF models.
//!
//! Two-form pullbacks push variations through the Legendre map by five-point
//! differences of `f_L` along the model's retraction.

use serde::Serialize;

use crate::bfmod::{BFHistory, BFModel};
use crate::complex::FaceLabel;
use crate::error::{Error, Result};
use crate::gauge::{GaugeHistory, GaugeModel};
use crate::liegroup::{self, CMat, Lie};
use crate::numerics::{five_point, DVec};
use crate::scalar2d::{ScalarHistory, WaveModel};
use crate::variational::Variational;

const PUSH_STEP: f64 = 1e-3;

/// Largest absolute defect of each pullback identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PullbackReport {
    pub theta_hat: f64,
    pub theta: f64,
    pub omega_hat: f64,
    pub omega: f64,
}

impl PullbackReport {
    pub fn max(&self) -> f64 {
        self.theta_hat.max(self.theta).max(self.omega_hat).max(self.omega)
    }

    fn merge(&mut self, o: &PullbackReport) {
        self.theta_hat = self.theta_hat.max(o.theta_hat);
        self.theta = self.theta.max(o.theta);
        self.omega_hat = self.omega_hat.max(o.omega_hat);
        self.omega = self.omega.max(o.omega);
    }
}

/// `(ν, φ_ν, p_ν, {(τ, φ_τ, p_τ)})`, faces in [`FaceLabel::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarPoint {
    pub atom: usize,
    pub phi_nu: f64,
    pub p_nu: f64,
    pub faces: Vec<(usize, f64, f64)>,
}

impl ScalarPoint {
    /// `Θ̂ = p_ν + Σ_τ p_τ (φ_ν − φ_τ)`.
    pub fn theta_hat(&self) -> f64 {
        self.p_nu + self.faces.iter().map(|&(_, f, p)| p * (self.phi_nu - f)).sum::<f64>()
    }

    /// `ψ̄(ν_τ)[φ̃] = p_ν/#faces + p_τ (φ_ν − φ_τ)`; on a simplex `#faces = n+1`.
    pub fn affine_eval(&self, face_slot: usize) -> f64 {
        let (_, f, p) = self.faces[face_slot];
        self.p_nu / self.faces.len() as f64 + p * (self.phi_nu - f)
    }
}

/// `p_τ = ∂L/∂φ_τ`, `p_ν = L − Σ_τ p_τ (φ_ν − φ_τ)`.
pub fn legendre_scalar(m: &WaveModel, h: &ScalarHistory, atom: usize) -> ScalarPoint {
    let phi_nu = h.atoms[atom];
    let faces: Vec<(usize, f64, f64)> = FaceLabel::ALL
        .iter()
        .map(|&l| {
            let f = h.complex.face(atom, l);
            (f, h.faces[f], m.face_partial(h, atom, l))
        })
        .collect();
    let l = m.lagrangian(h, atom);
    let p_nu = l - faces.iter().map(|&(_, f, p)| p * (phi_nu - f)).sum::<f64>();
    ScalarPoint { atom, phi_nu, p_nu, faces }
}

/// `Σ_ν F_ν Σ_τ ψ̄(ν_τ)[φ̃]`.
pub fn scalar_measure(m: &WaveModel, h: &ScalarHistory, f: impl Fn(usize) -> f64) -> f64 {
    (0..h.atoms.len())
        .map(|atom| {
            let pt = legendre_scalar(m, h, atom);
            f(atom) * (0..pt.faces.len()).map(|k| pt.affine_eval(k)).sum::<f64>()
        })
        .sum()
}

/// Pushforward of `v` through `f_L` at one atom: `(v_{p_ν}, v_{p_τ} per face)`.
fn scalar_push(m: &WaveModel, h: &ScalarHistory, atom: usize, v: &DVec) -> (f64, Vec<f64>) {
    let pn = five_point(|t| legendre_scalar(m, &m.retract(h, &(v * t)), atom).p_nu, PUSH_STEP);
    let pt = (0..4)
        .map(|k| five_point(|t| legendre_scalar(m, &m.retract(h, &(v * t)), atom).faces[k].2, PUSH_STEP))
        .collect();
    (pn, pt)
}

/// Pullback identities at every atom (and each of its faces) for one variation pair.
pub fn pullback_check_scalar(m: &WaveModel, h: &ScalarHistory, v: &DVec, w: &DVec) -> PullbackReport {
    let na = h.atoms.len();
    let mut rep = PullbackReport::default();
    for atom in 0..na {
        let pt = legendre_scalar(m, h, atom);
        let mut r = PullbackReport { theta_hat: (pt.theta_hat() - m.lagrangian(h, atom)).abs(), ..Default::default() };
        let (vpn, vpt) = scalar_push(m, h, atom, v);
        let (_, wpt) = scalar_push(m, h, atom, w);
        // Ω̂ = −dΘ̂ on the pushed variation, against Ω̂_L = −dL_ν.
        let mut d_theta_hat = vpn;
        let mut dl = m.interior_residual(h, atom) * v[atom];
        for (k, &(f, phi_f, p)) in pt.faces.iter().enumerate() {
            d_theta_hat += vpt[k] * (pt.phi_nu - phi_f) + p * (v[atom] - v[na + f]);
            dl += p * v[na + f];
        }
        r.omega_hat = (d_theta_hat - dl).abs();
        for (k, &l) in FaceLabel::ALL.iter().enumerate() {
            let (f, _, p) = pt.faces[k];
            r.theta = r.theta.max((p * v[na + f] - m.cartan_form(h, atom, l, v)).abs());
            let om = -(vpt[k] * w[na + f] - wpt[k] * v[na + f]);
            r.omega = r.omega.max((om - m.omega(h, atom, l, v, w)).abs());
        }
        rep.merge(&r);
    }
    rep
}

/// Largest `|p_τ(ν) + p_τ(ν′)|` over interior faces, i.e. the gluing equation read as
/// matching of the two atoms' momenta (each computed with its own outward convention).
pub fn canonical_gluing_scalar(m: &WaveModel, h: &ScalarHistory, tol: f64) -> Result<f64> {
    let r = m.max_residual(h);
    if r > tol {
        return Err(Error::NotASolution(r));
    }
    let c = &h.complex;
    Ok(c.interior_faces()
        .into_iter()
        .map(|f| {
            c.sharing(f)
                .iter()
                .map(|&(atom, l)| {
                    let pt = legendre_scalar(m, h, atom);
                    pt.faces[FaceLabel::ALL.iter().position(|&x| x == l).unwrap()].2
                })
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max))
}

/// Models with connection variables `(h, k)` leading the tangent layout.
pub trait GroupLagrangian: Variational {
    fn lie(&self) -> &Lie;
    fn connection<'a>(&self, a: &'a Self::History) -> &'a GaugeHistory;
    fn atom_lagrangian(&self, a: &Self::History, atom: usize) -> f64;
    fn momentum(&self, a: &Self::History, r: usize, atom: usize) -> Vec<f64>;
    fn cartan(&self, a: &Self::History, face: usize, atom: usize, v: &DVec) -> f64;
    fn omega_l(&self, a: &Self::History, face: usize, atom: usize, v: &DVec, w: &DVec) -> f64;
    fn residual(&self, a: &Self::History) -> f64;
}

impl GroupLagrangian for GaugeModel {
    fn lie(&self) -> &Lie {
        &self.lie
    }
    fn connection<'a>(&self, a: &'a GaugeHistory) -> &'a GaugeHistory {
        a
    }
    fn atom_lagrangian(&self, a: &GaugeHistory, atom: usize) -> f64 {
        GaugeModel::atom_lagrangian(self, a, atom)
    }
    fn momentum(&self, a: &GaugeHistory, r: usize, atom: usize) -> Vec<f64> {
        GaugeModel::momentum(self, a, r, atom)
    }
    fn cartan(&self, a: &GaugeHistory, face: usize, atom: usize, v: &DVec) -> f64 {
        self.cartan_form(a, face, atom, v)
    }
    fn omega_l(&self, a: &GaugeHistory, face: usize, atom: usize, v: &DVec, w: &DVec) -> f64 {
        self.omega(a, face, atom, v, w)
    }
    fn residual(&self, a: &GaugeHistory) -> f64 {
        self.max_residual(a)
    }
}

impl GroupLagrangian for BFModel {
    fn lie(&self) -> &Lie {
        &self.lie
    }
    fn connection<'a>(&self, a: &'a BFHistory) -> &'a GaugeHistory {
        &a.gauge
    }
    fn atom_lagrangian(&self, a: &BFHistory, atom: usize) -> f64 {
        BFModel::atom_lagrangian(self, a, atom)
    }
    fn momentum(&self, a: &BFHistory, r: usize, atom: usize) -> Vec<f64> {
        BFModel::momentum(self, a, r, atom)
    }
    fn cartan(&self, a: &BFHistory, face: usize, atom: usize, v: &DVec) -> f64 {
        self.cartan_form(a, face, atom, v)
    }
    fn omega_l(&self, a: &BFHistory, face: usize, atom: usize, v: &DVec, w: &DVec) -> f64 {
        self.omega(a, face, atom, v, w)
    }
    fn residual(&self, a: &BFHistory) -> f64 {
        self.max_residual(a)
    }
}

/// `(ν; p_ν; {(r, k_r, p_r)})`; the interior configuration stays in the history.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub atom: usize,
    pub p_nu: f64,
    pub rlinks: Vec<(usize, CMat, Vec<f64>)>,
    /// `(r_s, r′_s, θ̂_s)` for every canonical wedge of the atom.
    pub wedges: Vec<(usize, usize, Vec<f64>)>,
}

impl GroupPoint {
    fn p(&self, r: usize) -> &[f64] {
        &self.rlinks.iter().find(|x| x.0 == r).expect("r-link of atom").2
    }

    /// `Θ̂ = p_ν − Σ_s (p_{r_s} − p_{r′_s}) · θ̂_s`.
    pub fn theta_hat(&self) -> f64 {
        self.p_nu - self.wedges.iter().map(|(r1, r2, th)| liegroup::dot(&liegroup::sub(self.p(*r1), self.p(*r2)), th)).sum::<f64>()
    }

    /// The two `(s, r)` units of a wedge: `p_ν/#units − p_r · θ̂` with `θ̂` taken on
    /// the orientation compatible with `r`; on a simplex `#units = n(n+1)`.
    pub fn affine_eval(&self, wedge_slot: usize, second: bool) -> f64 {
        let units = 2 * self.wedges.len();
        let (r1, r2, th) = &self.wedges[wedge_slot];
        let (r, sg) = if second { (*r2, -1.0) } else { (*r1, 1.0) };
        self.p_nu / units as f64 - sg * liegroup::dot(self.p(r), th)
    }
}

fn rlinks_of_atom(c: &crate::complex::CubicalComplexND, atom: usize) -> Vec<usize> {
    (0..2 * c.n()).flat_map(|lf| c.face_rlinks(c.atom_face(atom, lf))).collect()
}

fn hat(lie: &Lie, a: &GaugeHistory, s: usize) -> CMat {
    let w = a.complex.wedge(s);
    &a.k[w.r1] * &a.h[w.l1] * lie.inv(&a.h[w.l2]) * lie.inv(&a.k[w.r2])
}

/// `p_r = ∂L/∂k_r[f_i k_r]`, `p_ν = L + Σ_s (p_{r_s} − p_{r′_s}) · θ̂_s` with
/// `θ̂_s^i = −Re Tr(f_i ĝ_∂s)` based at `Cσ`.
pub fn legendre_group<M: GroupLagrangian>(m: &M, a: &M::History, atom: usize) -> GroupPoint {
    let g = m.connection(a);
    let c = &g.complex;
    let rlinks: Vec<(usize, CMat, Vec<f64>)> =
        rlinks_of_atom(c, atom).into_iter().map(|r| (r, g.k[r].clone(), m.momentum(a, r, atom))).collect();
    let wedges: Vec<(usize, usize, Vec<f64>)> = c
        .atom_wedges(atom)
        .filter(|&s| c.wedge(s).canonical)
        .map(|s| (c.wedge(s).r1, c.wedge(s).r2, m.lie().theta(&hat(m.lie(), g, s))))
        .collect();
    let mut pt = GroupPoint { atom, p_nu: 0.0, rlinks, wedges };
    pt.p_nu = m.atom_lagrangian(a, atom);
    pt.p_nu += pt.wedges.iter().map(|(r1, r2, th)| liegroup::dot(&liegroup::sub(pt.p(*r1), pt.p(*r2)), th)).sum::<f64>();
    pt
}

/// `Σ_ν F_ν Σ_{(s,r)} ĀE(ν)[æ̃]`.
pub fn group_measure<M: GroupLagrangian>(m: &M, a: &M::History, f: impl Fn(usize) -> f64) -> f64 {
    (0..m.connection(a).complex.n_atoms())
        .map(|atom| {
            let pt = legendre_group(m, a, atom);
            f(atom) * (0..pt.wedges.len()).map(|k| pt.affine_eval(k, false) + pt.affine_eval(k, true)).sum::<f64>()
        })
        .sum()
}

/// `dθ̂_s[v]_i = (ξ_{r1} + Y)^j ϑ_ij(ĝ)` with `Y = Ad_{k_{r1}h_{l1}}(ξ_{l1} − ξ_{l2}) − Ad_ĝ ξ_{r2}`.
fn d_theta_hat(lie: &Lie, a: &GaugeHistory, s: usize, v: &DVec) -> Vec<f64> {
    let d = lie.dim();
    let nl = a.complex.n_links();
    let part = |i: usize| -> Vec<f64> { v.rows(i * d, d).iter().copied().collect() };
    let w = a.complex.wedge(s);
    let gh = hat(lie, a, s);
    let kh = &a.k[w.r1] * &a.h[w.l1];
    let y = liegroup::sub(&lie.ad(&kh, &liegroup::sub(&part(w.l1), &part(w.l2))), &lie.ad(&gh, &part(nl + w.r2)));
    let x = liegroup::add(&part(nl + w.r1), &y);
    let t = lie.theta2(&gh);
    (0..d).map(|i| (0..d).map(|j| x[j] * t[i * d + j]).sum()).collect()
}

struct Pushed {
    p_nu: f64,
    p_r: Vec<Vec<f64>>,
}

fn group_push<M: GroupLagrangian>(m: &M, a: &M::History, atom: usize, v: &DVec) -> Pushed {
    let at = |t: f64| legendre_group(m, &m.retract(a, &(v * t)), atom);
    let p_nu = five_point(|t| at(t).p_nu, PUSH_STEP);
    let n = at(0.0).rlinks.len();
    let d = m.lie().dim();
    let p_r = (0..n)
        .map(|k| (0..d).map(|i| five_point(|t| at(t).rlinks[k].2[i], PUSH_STEP)).collect())
        .collect();
    Pushed { p_nu, p_r }
}

/// Pullback identities for the gauge or BF Legendre map at every atom.
pub fn pullback_check_group<M: GroupLagrangian>(m: &M, a: &M::History, v: &DVec, w: &DVec) -> PullbackReport {
    let g = m.connection(a);
    let c = &g.complex;
    let d = m.lie().dim();
    let nl = c.n_links();
    let xi = |x: &DVec, r: usize| -> Vec<f64> { x.rows((nl + r) * d, d).iter().copied().collect() };
    let mut rep = PullbackReport::default();
    for atom in 0..c.n_atoms() {
        let pt = legendre_group(m, a, atom);
        let l = m.atom_lagrangian(a, atom);
        let mut r = PullbackReport { theta_hat: (pt.theta_hat() - l).abs(), ..Default::default() };
        let pv = group_push(m, a, atom, v);
        let pw = group_push(m, a, atom, w);
        let slot = |rr: usize| pt.rlinks.iter().position(|x| x.0 == rr).unwrap();
        // dΘ̂ along the pushed variation, in bundle coordinates.
        let canon: Vec<usize> = c.atom_wedges(atom).filter(|&s| c.wedge(s).canonical).collect();
        let mut dth = pv.p_nu;
        for (k, &s) in canon.iter().enumerate() {
            let (r1, r2, th) = &pt.wedges[k];
            let dp = liegroup::sub(&pv.p_r[slot(*r1)], &pv.p_r[slot(*r2)]);
            let p = liegroup::sub(pt.p(*r1), pt.p(*r2));
            dth -= liegroup::dot(&dp, th) + liegroup::dot(&p, &d_theta_hat(m.lie(), g, s, v));
        }
        let dl = five_point(|t| m.atom_lagrangian(&m.retract(a, &(v * t)), atom), PUSH_STEP);
        r.omega_hat = (dth - dl).abs();
        for lf in 0..2 * c.n() {
            let f = c.atom_face(atom, lf);
            let mut th = 0.0;
            let mut om = 0.0;
            for rr in c.face_rlinks(f) {
                let k = slot(rr);
                let (x, y) = (xi(v, rr), xi(w, rr));
                th += liegroup::dot(&pt.rlinks[k].2, &x);
                om -= liegroup::dot(&pv.p_r[k], &y) - liegroup::dot(&pw.p_r[k], &x);
                om -= liegroup::dot(&pt.rlinks[k].2, &m.lie().bracket(&x, &y));
            }
            r.theta = r.theta.max((th - m.cartan(a, f, atom, v)).abs());
            r.omega = r.omega.max((om - m.omega_l(a, f, atom, v, w)).abs());
        }
        rep.merge(&r);
    }
    rep
}

/// Largest `‖p_r(ν) + p_r(ν′)‖_∞` over interior r-links.
pub fn canonical_gluing_group<M: GroupLagrangian>(m: &M, a: &M::History, tol: f64) -> Result<f64> {
    let res = m.residual(a);
    if res > tol {
        return Err(Error::NotASolution(res));
    }
    let c = &m.connection(a).complex;
    Ok(c.interior_rlinks()
        .into_iter()
        .map(|r| {
            let at = c.face_atoms(c.rlink(r).face);
            let s = liegroup::add(&m.momentum(a, r, at[0]), &m.momentum(a, r, at[1]));
            s.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
        })
        .fold(0.0, f64::max))
}

/// `Σ_r (Ad_{k_r} f_i) · p_r` at a boundary face from the Legendre image.
pub fn mapped_constraint<M: GroupLagrangian>(m: &M, a: &M::History, face: usize) -> Vec<f64> {
    let g = m.connection(a);
    let atom = g.complex.face_atoms(face)[0];
    let pt = legendre_group(m, a, atom);
    g.complex.face_rlinks(face).fold(m.lie().zero_algebra(), |acc, r| {
        let (_, k, p) = pt.rlinks.iter().find(|x| x.0 == r).unwrap();
        liegroup::add(&acc, &m.lie().ad_inv(k, p))
    })
}
