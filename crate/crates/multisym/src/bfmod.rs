//! Modified BF theories: connection `(h, k)`, one algebra variable `e_s` per wedge and
//! a multiplier `φ_ν` per atom, with action `Σ_ν [Σ_s e_s·θ_s + Φ(ν, {e_s}, φ_ν)]`.
//!
//! `θ_s^i = −Re Tr(f_i g_∂s)/|f_i|²`, which is `−2i Tr(J^i g)` for SU(2) and
//! `Tr(f_iᵀ g)` for SO(N).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complex::CubicalComplexND;
use crate::error::{invalid, Error, Result};
use crate::gauge::{GaugeHistory, GaugeTransform};
use crate::liegroup::{self, CMat, Lie};
use crate::numerics::{fd_jacobian, newton, null_space, DVec, LinearSolve, NewtonOpts, NewtonReport, JAC_STEP};
use crate::par;
use crate::variational::{DsSplit, Variational};

/// One entry `(s, s′, sgn)` of the sign table, in local canonical wedge indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgnEntry(pub usize, pub usize, pub i8);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiTerm {
    /// Pure BF.
    None,
    /// `−c φ^{ij} Σ sgn(s,s′) e_{s,i} e_{s′,j}` with `φ` symmetric traceless 3×3.
    Quadratic {
        table: Vec<SgnEntry>,
        #[serde(default = "default_coeff")]
        coeff: f64,
    },
    /// `−½ Σ_s Σ_i w_i (e_s^i)²`, no multiplier.
    Diagonal { weights: Vec<f64> },
}

fn default_coeff() -> f64 {
    1.0 / 60.0
}

/// Symmetric traceless 3×3 from five coordinates `(a, b, c, d, e)`:
/// `[[a, b, c], [b, d, e], [c, e, −a−d]]`.
pub fn sym_traceless(x: &[f64]) -> [[f64; 3]; 3] {
    [[x[0], x[1], x[2]], [x[1], x[3], x[4]], [x[2], x[4], -x[0] - x[3]]]
}

impl PhiTerm {
    pub fn multiplier_dim(&self) -> usize {
        match self {
            PhiTerm::Quadratic { .. } => 5,
            _ => 0,
        }
    }

    pub fn validate(&self, lie: &Lie, per_atom: usize) -> Result<()> {
        match self {
            PhiTerm::None => Ok(()),
            PhiTerm::Quadratic { table, coeff } => {
                if lie.dim() != 3 {
                    return invalid("quadratic Φ needs a 3-dimensional algebra");
                }
                if !coeff.is_finite() {
                    return invalid("Φ coefficient must be finite");
                }
                for &SgnEntry(a, b, s) in table {
                    if a >= per_atom || b >= per_atom || !(-1..=1).contains(&s) {
                        return invalid(format!("bad sgn entry ({a}, {b}, {s}) for {per_atom} wedges per atom"));
                    }
                }
                Ok(())
            }
            PhiTerm::Diagonal { weights } => {
                if weights.len() != lie.dim() {
                    return invalid(format!("expected {} weights, got {}", lie.dim(), weights.len()));
                }
                Ok(())
            }
        }
    }

    /// `Φ` at one atom from its wedge variables (canonical orientation).
    pub fn value(&self, e: &[&[f64]], phi: &[f64]) -> f64 {
        match self {
            PhiTerm::None => 0.0,
            PhiTerm::Quadratic { table, coeff } => {
                let m = sym_traceless(phi);
                -coeff
                    * table
                        .iter()
                        .map(|&SgnEntry(a, b, s)| s as f64 * bilinear(&m, e[a], e[b]))
                        .sum::<f64>()
            }
            PhiTerm::Diagonal { weights } => {
                -0.5 * e.iter().map(|x| x.iter().zip(weights).map(|(v, w)| w * v * v).sum::<f64>()).sum::<f64>()
            }
        }
    }

    /// `∂Φ/∂e_s` for every wedge of the atom.
    pub fn grad_e(&self, e: &[&[f64]], phi: &[f64]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = e.iter().map(|x| vec![0.0; x.len()]).collect();
        match self {
            PhiTerm::None => {}
            PhiTerm::Quadratic { table, coeff } => {
                let m = sym_traceless(phi);
                for &SgnEntry(a, b, s) in table {
                    let s = s as f64;
                    for i in 0..3 {
                        for j in 0..3 {
                            out[a][i] -= coeff * s * m[i][j] * e[b][j];
                            out[b][j] -= coeff * s * m[i][j] * e[a][i];
                        }
                    }
                }
            }
            PhiTerm::Diagonal { weights } => {
                for (o, x) in out.iter_mut().zip(e) {
                    for i in 0..x.len() {
                        o[i] = -weights[i] * x[i];
                    }
                }
            }
        }
        out
    }

    /// `∂Φ/∂φ` in the five coordinates of [`sym_traceless`].
    pub fn grad_phi(&self, e: &[&[f64]]) -> Vec<f64> {
        match self {
            PhiTerm::Quadratic { table, coeff } => (0..5)
                .map(|k| {
                    let mut unit = [0.0; 5];
                    unit[k] = 1.0;
                    let m = sym_traceless(&unit);
                    -coeff * table.iter().map(|&SgnEntry(a, b, s)| s as f64 * bilinear(&m, e[a], e[b])).sum::<f64>()
                })
                .collect(),
            _ => vec![],
        }
    }
}

fn bilinear(m: &[[f64; 3]; 3], x: &[f64], y: &[f64]) -> f64 {
    let mut t = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            t += m[i][j] * x[i] * y[j];
        }
    }
    t
}

/// Canonical wedges of a complex, numbered atom by atom.
#[derive(Debug, Clone, PartialEq)]
pub struct WedgeSlots {
    pub canonical: Vec<usize>,
    slot: Vec<usize>,
    pub per_atom: usize,
}

impl WedgeSlots {
    pub fn new(c: &CubicalComplexND) -> Self {
        let canonical: Vec<usize> = c.canonical_wedges().collect();
        let mut slot = vec![0; c.wedges().len()];
        for (k, &s) in canonical.iter().enumerate() {
            slot[s] = k;
            slot[c.wedge(s).reverse] = k;
        }
        WedgeSlots { per_atom: canonical.len() / c.n_atoms(), canonical, slot }
    }

    pub fn slot(&self, s: usize) -> usize {
        self.slot[s]
    }

    pub fn atom_slots(&self, atom: usize) -> std::ops::Range<usize> {
        atom * self.per_atom..(atom + 1) * self.per_atom
    }
}

#[derive(Debug, Clone)]
pub struct BFHistory {
    pub gauge: GaugeHistory,
    pub slots: WedgeSlots,
    /// `e_s` relative to the stored orientation `orient[slot]` (±1 against canonical).
    pub e: Vec<Vec<f64>>,
    pub orient: Vec<f64>,
    pub phi: Vec<Vec<f64>>,
}

impl BFHistory {
    pub fn new(gauge: GaugeHistory, e: Vec<Vec<f64>>, phi: Vec<Vec<f64>>) -> Result<Self> {
        let slots = WedgeSlots::new(&gauge.complex);
        if e.len() != slots.canonical.len() {
            return invalid(format!("expected {} wedge variables, got {}", slots.canonical.len(), e.len()));
        }
        if phi.len() != gauge.complex.n_atoms() {
            return invalid("one multiplier per atom expected");
        }
        Ok(BFHistory { orient: vec![1.0; e.len()], gauge, slots, e, phi })
    }

    pub fn zero(complex: CubicalComplexND, lie: &Lie, phi: &PhiTerm) -> Self {
        let slots = WedgeSlots::new(&complex);
        let n = slots.canonical.len();
        let na = complex.n_atoms();
        BFHistory {
            gauge: GaugeHistory::identity(complex, lie),
            slots,
            e: vec![lie.zero_algebra(); n],
            orient: vec![1.0; n],
            phi: vec![vec![0.0; phi.multiplier_dim()]; na],
        }
    }

    pub fn complex(&self) -> &CubicalComplexND {
        &self.gauge.complex
    }

    /// Reverses the stored orientation of a wedge; `(orientation, e)` flip together.
    pub fn flip(&mut self, slot: usize) {
        self.orient[slot] = -self.orient[slot];
        self.e[slot].iter_mut().for_each(|x| *x = -*x);
    }

    /// `e` in the canonical orientation.
    pub fn e_canonical(&self, slot: usize) -> Vec<f64> {
        liegroup::scale(&self.e[slot], self.orient[slot])
    }

    /// `e` along an oriented wedge id.
    pub fn e_oriented(&self, s: usize) -> Vec<f64> {
        let sg = if self.complex().wedge(s).canonical { 1.0 } else { -1.0 };
        liegroup::scale(&self.e_canonical(self.slots.slot(s)), sg)
    }

    /// `e_s → Ad_{g_ν} e_s` together with the link transformation.
    pub fn gauge_transform(&self, lie: &Lie, g: &GaugeTransform) -> BFHistory {
        let mut out = self.clone();
        out.gauge = g.apply(lie, &self.gauge);
        for (k, &s) in self.slots.canonical.iter().enumerate() {
            out.e[k] = lie.ad(&g.atoms[self.complex().wedge(s).atom], &self.e[k]);
        }
        out
    }
}

/// Residual infinity norms per equation class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub interior_l: f64,
    pub wedge: f64,
    pub multiplier: f64,
    pub gluing: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.interior_l.max(self.wedge).max(self.multiplier).max(self.gluing)
    }
}

#[derive(Debug, Clone)]
pub struct BFModel {
    pub lie: Lie,
    pub phi: PhiTerm,
}

fn amax(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl BFModel {
    pub fn new(lie: Lie, phi: PhiTerm) -> Result<Self> {
        Ok(BFModel { lie, phi })
    }

    pub fn check(&self, a: &BFHistory) -> Result<()> {
        self.phi.validate(&self.lie, a.slots.per_atom)?;
        if a.phi.iter().any(|p| p.len() != self.phi.multiplier_dim()) {
            return invalid("multiplier dimension does not match Φ");
        }
        Ok(())
    }

    fn inv_norm2(&self) -> f64 {
        1.0 / self.lie.group.basis_norm2()
    }

    pub fn theta(&self, g: &CMat) -> Vec<f64> {
        liegroup::scale(&self.lie.theta(g), self.inv_norm2())
    }

    fn holonomy(&self, a: &GaugeHistory, s: usize) -> CMat {
        let w = a.complex.wedge(s);
        self.lie.inv(&a.h[w.l2]) * self.lie.inv(&a.k[w.r2]) * &a.k[w.r1] * &a.h[w.l1]
    }

    fn hat(&self, a: &GaugeHistory, s: usize) -> CMat {
        let w = a.complex.wedge(s);
        &a.k[w.r1] * &a.h[w.l1] * self.lie.inv(&a.h[w.l2]) * self.lie.inv(&a.k[w.r2])
    }

    fn atom_e(&self, a: &BFHistory, atom: usize) -> Vec<Vec<f64>> {
        a.slots.atom_slots(atom).map(|k| a.e_canonical(k)).collect()
    }

    pub fn atom_lagrangian(&self, a: &BFHistory, atom: usize) -> f64 {
        let mut l = 0.0;
        for k in a.slots.atom_slots(atom) {
            let th = self.theta(&self.holonomy(&a.gauge, a.slots.canonical[k]));
            let th = liegroup::scale(&th, a.orient[k]);
            l += liegroup::dot(&a.e[k], &th);
        }
        let e = self.atom_e(a, atom);
        let refs: Vec<&[f64]> = e.iter().map(|x| x.as_slice()).collect();
        l + self.phi.value(&refs, &a.phi[atom])
    }

    pub fn action(&self, a: &BFHistory) -> f64 {
        par::map_range(a.complex().n_atoms(), |atom| self.atom_lagrangian(a, atom)).iter().sum()
    }

    /// `w_{s,j} = e^i ϑ_{ji}(g_∂s)/|f|²` on an oriented wedge.
    pub fn w(&self, a: &BFHistory, s: usize) -> Vec<f64> {
        let d = self.lie.dim();
        let e = a.e_oriented(s);
        let t = self.lie.theta2(&self.holonomy(&a.gauge, s));
        (0..d).map(|j| self.inv_norm2() * (0..d).map(|i| e[i] * t[j * d + i]).sum::<f64>()).collect()
    }

    /// `u_s = Ad_{k_{r1}h_{l1}} w_s`, the momentum conjugate to `k_{r1}`.
    pub fn u(&self, a: &BFHistory, s: usize) -> Vec<f64> {
        let w = a.complex().wedge(s);
        self.lie.ad(&(&a.gauge.k[w.r1] * &a.gauge.h[w.l1]), &self.w(a, s))
    }

    /// `p_r = ∂L_ν/∂k_r[f_i k_r] = u_{s(r,ν)}`.
    pub fn momentum(&self, a: &BFHistory, r: usize, atom: usize) -> Vec<f64> {
        self.u(a, self.wedge_from(a, r, atom))
    }

    /// `Σ_{s ⊃ l} w_s`.
    pub fn link_residual(&self, a: &BFHistory, l: usize) -> Vec<f64> {
        a.complex().wedges_on_link(l).iter().fold(self.lie.zero_algebra(), |acc, &s| liegroup::add(&acc, &self.w(a, s)))
    }

    /// `∂S/∂e_s` in the stored orientation, for every wedge of the atom.
    pub fn wedge_residuals(&self, a: &BFHistory, atom: usize) -> Vec<Vec<f64>> {
        let e = self.atom_e(a, atom);
        let refs: Vec<&[f64]> = e.iter().map(|x| x.as_slice()).collect();
        let ge = self.phi.grad_e(&refs, &a.phi[atom]);
        a.slots
            .atom_slots(atom)
            .zip(ge)
            .map(|(k, g)| {
                let th = self.theta(&self.holonomy(&a.gauge, a.slots.canonical[k]));
                liegroup::scale(&liegroup::add(&th, &g), a.orient[k])
            })
            .collect()
    }

    pub fn multiplier_residual(&self, a: &BFHistory, atom: usize) -> Vec<f64> {
        let e = self.atom_e(a, atom);
        let refs: Vec<&[f64]> = e.iter().map(|x| x.as_slice()).collect();
        self.phi.grad_phi(&refs)
    }

    fn k_gradient(&self, a: &BFHistory, r: usize) -> Vec<f64> {
        a.complex().wedges_with_r1(r).iter().fold(self.lie.zero_algebra(), |acc, &s| liegroup::add(&acc, &self.u(a, s)))
    }

    /// `u_σ(ν) − u_σ(ν′)` for the two atoms sharing `r`.
    pub fn gluing_residual(&self, a: &BFHistory, r: usize) -> Result<Vec<f64>> {
        if !a.complex().face_is_interior(a.complex().rlink(r).face) {
            return invalid(format!("r-link {r} lies in a boundary face"));
        }
        Ok(self.k_gradient(a, r))
    }

    /// `u_σ` from atom `ν`, with `σ` oriented by its wedge cycle (or reversed).
    pub fn u_sigma(&self, a: &BFHistory, sigma: usize, atom: usize, reversed: bool) -> Result<Vec<f64>> {
        let cyc = a.complex().sigma_cycle(sigma).ok_or_else(|| Error::InvalidArgument(format!("σ {sigma} is not interior")))?;
        let s = *cyc
            .iter()
            .find(|&&s| a.complex().wedge(s).atom == atom)
            .ok_or_else(|| Error::InvalidArgument(format!("atom {atom} does not contain σ {sigma}")))?;
        Ok(self.u(a, if reversed { a.complex().wedge(s).reverse } else { s }))
    }

    /// `max ‖u_σ(ν) − u_σ(ν′)‖` over atom pairs at `σ`.
    pub fn gluing_check(&self, a: &BFHistory, sigma: usize) -> Result<f64> {
        let cyc = a.complex().sigma_cycle(sigma).ok_or_else(|| Error::InvalidArgument(format!("σ {sigma} is not interior")))?;
        let us: Vec<Vec<f64>> = cyc.iter().map(|&s| self.u(a, s)).collect();
        let mut m = 0.0f64;
        for i in 0..us.len() {
            for j in i + 1..us.len() {
                m = m.max(liegroup::norm(&liegroup::sub(&us[i], &us[j])));
            }
        }
        Ok(m)
    }

    pub fn residuals(&self, a: &BFHistory) -> ResidualReport {
        let c = a.complex();
        ResidualReport {
            interior_l: par::map_range(c.n_links(), |l| amax(&self.link_residual(a, l))).into_iter().fold(0.0, f64::max),
            wedge: par::map_range(c.n_atoms(), |atom| {
                self.wedge_residuals(a, atom).iter().map(|x| amax(x)).fold(0.0, f64::max)
            })
            .into_iter()
            .fold(0.0, f64::max),
            multiplier: (0..c.n_atoms()).map(|atom| amax(&self.multiplier_residual(a, atom))).fold(0.0, f64::max),
            gluing: c.interior_rlinks().into_iter().map(|r| amax(&self.k_gradient(a, r))).fold(0.0, f64::max),
        }
    }

    pub fn max_residual(&self, a: &BFHistory) -> f64 {
        self.residuals(a).max()
    }

    fn offsets(&self, a: &BFHistory) -> [usize; 4] {
        let d = self.lie.dim();
        let c = a.complex();
        let kh = c.n_links() * d;
        let ke = kh + c.n_rlinks() * d;
        let kp = ke + a.e.len() * d;
        [kh, ke, kp, kp + c.n_atoms() * self.phi.multiplier_dim()]
    }

    /// Full gradient in the layout `[h, k, e, φ]`.
    pub fn gradient(&self, a: &BFHistory) -> DVec {
        let d = self.lie.dim();
        let c = a.complex();
        let [kh, ke, kp, n] = self.offsets(a);
        let mut g = DVec::zeros(n);
        for (l, x) in par::map_range(c.n_links(), |l| self.link_residual(a, l)).into_iter().enumerate() {
            g.rows_mut(l * d, d).copy_from_slice(&x);
        }
        for (r, x) in par::map_range(c.n_rlinks(), |r| self.k_gradient(a, r)).into_iter().enumerate() {
            g.rows_mut(kh + r * d, d).copy_from_slice(&x);
        }
        let md = self.phi.multiplier_dim();
        for atom in 0..c.n_atoms() {
            for (k, x) in a.slots.atom_slots(atom).zip(self.wedge_residuals(a, atom)) {
                g.rows_mut(ke + k * d, d).copy_from_slice(&x);
            }
            if md > 0 {
                g.rows_mut(kp + atom * md, md).copy_from_slice(&self.multiplier_residual(a, atom));
            }
        }
        g
    }

    /// Rows of the bulk equations in the tangent layout (everything but the boundary r-links).
    pub fn bulk_rows(&self, a: &BFHistory) -> Vec<usize> {
        let d = self.lie.dim();
        let [kh, ke, _, n] = self.offsets(a);
        (0..kh).chain(a.complex().interior_rlinks().into_iter().flat_map(|r| (0..d).map(move |j| kh + r * d + j))).chain(ke..n).collect()
    }

    /// `Θ_L(v, τ_ν) = Σ_{r ⊂ τ} ξ_r · u_{s(r,ν)}`.
    pub fn cartan_form(&self, a: &BFHistory, face: usize, atom: usize, v: &DVec) -> f64 {
        let d = self.lie.dim();
        let kh = self.offsets(a)[0];
        a.complex()
            .face_rlinks(face)
            .map(|r| {
                let s = self.wedge_from(a, r, atom);
                let xi: Vec<f64> = v.rows(kh + r * d, d).iter().copied().collect();
                liegroup::dot(&xi, &self.u(a, s))
            })
            .sum()
    }

    fn wedge_from(&self, a: &BFHistory, r: usize, atom: usize) -> usize {
        *a.complex().wedges_with_r1(r).iter().find(|&&s| a.complex().wedge(s).atom == atom).expect("r-link not in atom")
    }

    /// Directional derivative of `u_s` along `v`.
    fn du(&self, a: &BFHistory, s: usize, v: &DVec) -> Vec<f64> {
        let d = self.lie.dim();
        let [kh, ke, _, _] = self.offsets(a);
        let c = a.complex();
        let wd = c.wedge(s);
        let part = |i: usize| -> Vec<f64> { v.rows(i, d).iter().copied().collect() };
        let (xl1, xl2) = (part(wd.l1 * d), part(wd.l2 * d));
        let (xr1, xr2) = (part(kh + wd.r1 * d), part(kh + wd.r2 * d));
        let sg = if wd.canonical { 1.0 } else { -1.0 };
        let slot = a.slots.slot(s);
        let de = liegroup::scale(&part(ke + slot * d), sg * a.orient[slot]);
        let kk = &a.gauge.k[wd.r1] * &a.gauge.h[wd.l1];
        let gh = self.hat(&a.gauge, s);
        let e_hat = self.lie.matrix(&self.lie.ad(&kk, &a.e_oriented(s)));
        let y = liegroup::sub(&self.lie.ad(&kk, &liegroup::sub(&xl1, &xl2)), &self.lie.ad(&gh, &xr2));
        let rot = self.lie.matrix(&liegroup::add(&xr1, &self.lie.ad(&kk, &xl1)));
        let d_e_hat = &rot * &e_hat - &e_hat * &rot + self.lie.matrix(&self.lie.ad(&kk, &de));
        let dg = self.lie.matrix(&liegroup::add(&xr1, &y)) * &gh;
        let m = d_e_hat * &gh + &e_hat * dg;
        liegroup::scale(&self.lie.theta(&m), self.inv_norm2())
    }

    /// `Ω_L = −Σ_r (η_r·v(u) − ξ_r·w(u)) − Σ_r [ξ_r, η_r]·u`, with `v(u)` the full
    /// directional derivative of `u_{s(r,ν)}`.
    pub fn omega(&self, a: &BFHistory, face: usize, atom: usize, v: &DVec, w: &DVec) -> f64 {
        let d = self.lie.dim();
        let kh = self.offsets(a)[0];
        let mut total = 0.0;
        for r in a.complex().face_rlinks(face) {
            let s = self.wedge_from(a, r, atom);
            let xi: Vec<f64> = v.rows(kh + r * d, d).iter().copied().collect();
            let eta: Vec<f64> = w.rows(kh + r * d, d).iter().copied().collect();
            total -= liegroup::dot(&eta, &self.du(a, s, v)) - liegroup::dot(&xi, &self.du(a, s, w));
            total -= liegroup::dot(&self.lie.bracket(&xi, &eta), &self.u(a, s));
        }
        total
    }

    pub fn multisymplectic_defect(&self, a: &BFHistory, v: &DVec, w: &DVec, tol: f64) -> Result<f64> {
        let r = self.max_residual(a);
        if r > tol {
            return Err(Error::NotASolution(r));
        }
        let c = a.complex();
        Ok(c.boundary_faces().into_iter().map(|f| self.omega(a, f, c.face_atoms(f)[0], v, w)).sum())
    }

    /// Null space of the linearized bulk and gluing equations over all variables.
    pub fn first_variations(&self, a: &BFHistory) -> Vec<DVec> {
        let rows = self.bulk_rows(a);
        let n = self.tangent_dim(a);
        let jac = fd_jacobian(rows.len(), n, JAC_STEP, |j, t| {
            let mut v = DVec::zeros(n);
            v[j] = t;
            self.gradient(&self.retract(a, &v)).select_rows(&rows)
        });
        null_space(&jac, 1e-8)
    }

    /// Newton on `h`, interior `k`, `e` and `φ` with boundary `k` held fixed.
    pub fn solve(&self, guess: BFHistory, opts: &NewtonOpts) -> Result<(BFHistory, NewtonReport)> {
        self.check(&guess)?;
        let idx = self.bulk_rows(&guess);
        let n = self.tangent_dim(&guess);
        let embed = |dx: &DVec| {
            let mut v = DVec::zeros(n);
            for (m, &k) in idx.iter().enumerate() {
                v[k] = dx[m];
            }
            v
        };
        let jacobian = |a: &BFHistory| {
            fd_jacobian(idx.len(), idx.len(), JAC_STEP, |j, t| {
                let mut v = DVec::zeros(n);
                v[idx[j]] = t;
                self.gradient(&self.retract(a, &v)).select_rows(&idx)
            })
        };
        let o = NewtonOpts { linear: LinearSolve::Pinv, ..*opts };
        newton(guess, |a| self.gradient(a).select_rows(&idx), jacobian, |a, dx| self.retract(a, &embed(dx)), &o)
    }

    /// Degenerate chain: segment `p` is a single wedge with `h_{l1} = q_{p+1}`,
    /// `h_{l2} = q_p` and trivial `k`, so `g_∂s = q_p⁻¹ q_{p+1}`.
    pub fn chain_action(&self, q: &[CMat], e: &[Vec<f64>]) -> f64 {
        q.windows(2)
            .zip(e)
            .map(|(w, ep)| {
                let g = self.lie.inv(&w[0]) * &w[1];
                let th = self.theta(&g);
                liegroup::dot(ep, &th) + self.phi.value(&[ep.as_slice()], &[])
            })
            .sum()
    }
}

/// Flat pure-BF solution: links are the gauge transform of the identity by `g`, and
/// `e_s = Ad_{g_ν}(s₁ s₂ B_{a₁a₂})` for a wedge running from face `(a₁, s₁)` to
/// `(a₂, s₂)`, with `B` an antisymmetric array of algebra elements.
pub fn flat_solution(lie: &Lie, complex: CubicalComplexND, g: &GaugeTransform, b: &[Vec<Vec<f64>>]) -> BFHistory {
    let mut a = BFHistory::zero(complex.clone(), lie, &PhiTerm::None);
    for (k, &s) in a.slots.canonical.clone().iter().enumerate() {
        let w = complex.wedge(s);
        let (_, lf1) = complex.link_parts(w.l1);
        let (_, lf2) = complex.link_parts(w.l2);
        let (a1, s1) = crate::complex::local_face_parts(lf1);
        let (a2, s2) = crate::complex::local_face_parts(lf2);
        a.e[k] = liegroup::scale(&b[a1][a2], s1.value() * s2.value());
    }
    a.gauge_transform(lie, g)
}

/// Antisymmetric `B_{ab}` with random algebra entries.
pub fn random_b<R: Rng>(lie: &Lie, n: usize, rng: &mut R, r: f64) -> Vec<Vec<Vec<f64>>> {
    let mut b = vec![vec![lie.zero_algebra(); n]; n];
    for i in 0..n {
        for j in i + 1..n {
            b[i][j] = lie.random_algebra(rng, r);
            b[j][i] = liegroup::scale(&b[i][j], -1.0);
        }
    }
    b
}

impl Variational for BFModel {
    type History = BFHistory;

    fn tangent_dim(&self, a: &BFHistory) -> usize {
        self.offsets(a)[3]
    }

    fn action(&self, a: &BFHistory) -> f64 {
        BFModel::action(self, a)
    }

    fn ds(&self, a: &BFHistory, v: &DVec) -> DsSplit {
        let g = self.gradient(a);
        let d = self.lie.dim();
        let [kh, ke, _, _] = self.offsets(a);
        let c = a.complex();
        let mut out = DsSplit::default();
        for k in 0..g.len() {
            let t = g[k] * v[k];
            if (kh..ke).contains(&k) && !c.face_is_interior(c.rlink((k - kh) / d).face) {
                out.boundary += t;
            } else {
                out.bulk += t;
            }
        }
        out
    }

    fn retract(&self, a: &BFHistory, v: &DVec) -> BFHistory {
        let d = self.lie.dim();
        let [kh, ke, kp, _] = self.offsets(a);
        let md = self.phi.multiplier_dim();
        let xi = |i: usize| -> Vec<f64> { v.rows(i, d).iter().copied().collect() };
        let mut out = a.clone();
        for (l, h) in out.gauge.h.iter_mut().enumerate() {
            *h = self.lie.reproject(&(&*h * self.lie.exp(&xi(l * d))));
        }
        for (r, k) in out.gauge.k.iter_mut().enumerate() {
            *k = self.lie.reproject(&(self.lie.exp(&xi(kh + r * d)) * &*k));
        }
        for (s, e) in out.e.iter_mut().enumerate() {
            *e = liegroup::add(e, &xi(ke + s * d));
        }
        for (atom, p) in out.phi.iter_mut().enumerate() {
            for j in 0..md {
                p[j] += v[kp + atom * md + j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mech1d::RigidModel;
    use crate::variational::fd_ds;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_history(m: &BFModel, dims: &[usize], rng: &mut ChaCha8Rng, r: f64) -> BFHistory {
        let c = CubicalComplexND::new(dims).unwrap();
        let mut a = BFHistory::zero(c.clone(), &m.lie, &m.phi);
        a.gauge = GaugeHistory::random(c, &m.lie, rng, r);
        for e in a.e.iter_mut() {
            *e = m.lie.random_algebra(rng, 1.0);
        }
        for p in a.phi.iter_mut() {
            p.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        }
        a
    }

    fn table(per_atom: usize) -> PhiTerm {
        let mut t = vec![];
        for a in 0..per_atom {
            for b in 0..per_atom {
                if a != b {
                    t.push(SgnEntry(a, b, if (a + b) % 2 == 0 { 1 } else { -1 }));
                }
            }
        }
        PhiTerm::Quadratic { table: t, coeff: 1.0 / 60.0 }
    }

    #[test]
    fn trivial_actions() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let per = WedgeSlots::new(&c).per_atom;
        let m = BFModel::new(Lie::su2(), table(per)).unwrap();
        let mut a = random_history(&m, &[2, 2], &mut rng, 0.5);
        a.e.iter_mut().for_each(|e| e.iter_mut().for_each(|x| *x = 0.0));
        assert_eq!(m.action(&a), 0.0);
        let p = BFModel::new(Lie::su2(), PhiTerm::None).unwrap();
        let mut b = random_history(&p, &[2, 2], &mut rng, 0.5);
        b.gauge = GaugeHistory::identity(c, &p.lie);
        assert_eq!(p.action(&b), 0.0);
        assert_eq!(p.residuals(&BFHistory::zero(b.gauge.complex.clone(), &p.lie, &p.phi)).max(), 0.0);
    }

    #[test]
    fn flipping_orientations_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let c = CubicalComplexND::new(&[2, 1, 1]).unwrap();
        let m = BFModel::new(Lie::su2(), table(WedgeSlots::new(&c).per_atom)).unwrap();
        let a = random_history(&m, &[2, 1, 1], &mut rng, 0.7);
        let mut b = a.clone();
        for k in 0..b.e.len() {
            b.flip(k);
        }
        assert_eq!(m.action(&a).to_bits(), m.action(&b).to_bits());
        let mut c2 = a.clone();
        for k in (0..c2.e.len()).step_by(3) {
            c2.flip(k);
        }
        assert_eq!(m.action(&a).to_bits(), m.action(&c2).to_bits());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        for dims in [vec![2, 1], vec![1, 1, 1]] {
            let c = CubicalComplexND::new(&dims).unwrap();
            let m = BFModel::new(Lie::su2(), table(WedgeSlots::new(&c).per_atom)).unwrap();
            let mut a = random_history(&m, &dims, &mut rng, 0.9);
            a.flip(1);
            let n = m.tangent_dim(&a);
            for _ in 0..3 {
                let v = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
                let ds = m.ds(&a, &v).total();
                for eps in [1e-3, 1e-4] {
                    assert!((ds - fd_ds(&m, &a, &v, eps)).abs() < 100.0 * eps * eps, "{ds}");
                }
            }
        }
    }

    #[test]
    fn gluing_is_phi_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let per = WedgeSlots::new(&c).per_atom;
        let m1 = BFModel::new(Lie::su2(), table(per)).unwrap();
        let a = random_history(&m1, &[2, 2], &mut rng, 0.6);
        let m2 = BFModel::new(Lie::su2(), PhiTerm::Quadratic { table: vec![SgnEntry(0, 1, 1)], coeff: 0.7 }).unwrap();
        for r in c.interior_rlinks() {
            let (x, y) = (m1.gluing_residual(&a, r).unwrap(), m2.gluing_residual(&a, r).unwrap());
            assert!(x.iter().zip(&y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        let v = DVec::from_fn(m1.tangent_dim(&a), |_, _| rng.gen_range(-1.0..1.0));
        let f = c.boundary_faces()[0];
        let at = c.face_atoms(f)[0];
        assert_eq!(m1.cartan_form(&a, f, at, &v).to_bits(), m2.cartan_form(&a, f, at, &v).to_bits());
    }

    #[test]
    fn u_sigma_flips_sign_and_matches_paired_gluing() {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let m = BFModel::new(Lie::su2(), PhiTerm::None).unwrap();
        let a = random_history(&m, &[2, 2], &mut rng, 0.8);
        let sg = c.interior_sigmas()[0];
        for atom in 0..4 {
            let u = m.u_sigma(&a, sg, atom, false).unwrap();
            let ub = m.u_sigma(&a, sg, atom, true).unwrap();
            for j in 0..3 {
                assert!((u[j] + ub[j]).abs() < 1e-13);
            }
        }
        let cyc = c.sigma_cycle(sg).unwrap();
        for i in 0..4 {
            let r = c.wedge(cyc[i]).r1;
            let d = liegroup::sub(&m.u(&a, cyc[i]), &m.u(&a, cyc[(i + 1) % 4]));
            let g = m.gluing_residual(&a, r).unwrap();
            for j in 0..3 {
                assert!((d[j] - g[j]).abs() < 1e-13);
            }
        }
        let z = BFHistory::zero(c.clone(), &m.lie, &m.phi);
        assert_eq!(m.gluing_check(&z, sg).unwrap(), 0.0);
    }

    #[test]
    fn flat_solutions_satisfy_all_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(65);
        let lie = Lie::su2();
        for dims in [vec![2, 2], vec![2, 2, 1]] {
            let c = CubicalComplexND::new(&dims).unwrap();
            let g = GaugeTransform::random(&c, &lie, &mut rng, 1.0);
            let b = random_b(&lie, dims.len(), &mut rng, 1.0);
            let a = flat_solution(&lie, c.clone(), &g, &b);
            let m = BFModel::new(lie.clone(), PhiTerm::None).unwrap();
            assert!(m.max_residual(&a) < 1e-12, "{:?}", m.residuals(&a));
            for sg in c.interior_sigmas() {
                assert!(m.gluing_check(&a, sg).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn omega_matches_exterior_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let m = BFModel::new(Lie::su2(), PhiTerm::None).unwrap();
        let a = random_history(&m, &[2, 1], &mut rng, 0.8);
        let c = a.complex().clone();
        let n = m.tangent_dim(&a);
        let d = 3;
        let v = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let w = DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let kh = c.n_links() * d;
        let ke = kh + c.n_rlinks() * d;
        let mut br = DVec::zeros(n);
        for blk in 0..ke / d {
            let x: Vec<f64> = v.rows(blk * d, d).iter().copied().collect();
            let y: Vec<f64> = w.rows(blk * d, d).iter().copied().collect();
            let z = m.lie.bracket(&x, &y);
            let sg = if blk < c.n_links() { 1.0 } else { -1.0 };
            for j in 0..d {
                br[blk * d + j] = sg * z[j];
            }
        }
        for f in c.boundary_faces() {
            let atom = c.face_atoms(f)[0];
            let th = |h: &BFHistory, x: &DVec| m.cartan_form(h, f, atom, x);
            let deriv = |x: &DVec, y: &DVec| {
                let e = 1e-5;
                (th(&m.retract(&a, &(x * e)), y) - th(&m.retract(&a, &(x * -e)), y)) / (2.0 * e)
            };
            let expect = -(deriv(&v, &w) - deriv(&w, &v) - th(&a, &br));
            assert!((expect - m.omega(&a, f, atom, &v, &w)).abs() < 1e-8);
        }
    }

    #[test]
    fn defect_on_flat_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let lie = Lie::su2();
        let c = CubicalComplexND::new(&[2, 1]).unwrap();
        let g = GaugeTransform::random(&c, &lie, &mut rng, 0.5);
        let a = flat_solution(&lie, c.clone(), &g, &random_b(&lie, 2, &mut rng, 0.5));
        let m = BFModel::new(lie.clone(), PhiTerm::None).unwrap();
        let vs = m.first_variations(&a);
        assert!(vs.len() > 3);
        for v in &vs {
            assert_eq!(m.multisymplectic_defect(&a, v, v, 1e-10).unwrap(), 0.0);
            for w in &vs {
                assert!(m.multisymplectic_defect(&a, v, w, 1e-10).unwrap().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn solve_from_flat_boundary_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(68);
        let lie = Lie::su2();
        let c = CubicalComplexND::new(&[2, 1]).unwrap();
        let g = GaugeTransform::random(&c, &lie, &mut rng, 0.4);
        let flat = flat_solution(&lie, c.clone(), &g, &random_b(&lie, 2, &mut rng, 0.3));
        for phi in [PhiTerm::None, table(WedgeSlots::new(&c).per_atom)] {
            let m = BFModel::new(lie.clone(), phi).unwrap();
            let mut guess = BFHistory::zero(c.clone(), &lie, &m.phi);
            guess.gauge = flat.gauge.clone();
            guess.e = flat.e.clone();
            let idx = m.bulk_rows(&guess);
            let mut v = DVec::zeros(m.tangent_dim(&guess));
            for &k in &idx {
                v[k] = rng.gen_range(-0.01..0.01);
            }
            let guess = m.retract(&guess, &v);
            let (sol, _) = m.solve(guess, &NewtonOpts::default()).unwrap();
            assert!(m.max_residual(&sol) < 1e-10);
            if m.phi == PhiTerm::None {
                let hol: Vec<CMat> = c.canonical_wedges().map(|s| m.holonomy(&sol.gauge, s)).collect();
                assert!(crate::gauge::distance_from_identity(&lie, &hol) < 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_chain_recovers_rigid_body() {
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        let lie = Lie::so(3);
        let inertia = vec![1.3, 0.8, 2.1];
        let a = 0.2;
        let rigid = RigidModel::new(lie.clone(), inertia.clone()).unwrap();
        let m = BFModel::new(lie.clone(), PhiTerm::Diagonal { weights: inertia.iter().map(|i| a / i).collect() }).unwrap();
        let complex = crate::complex::TimeComplex::new(5, a).unwrap();
        let q: Vec<CMat> = (0..6).map(|_| lie.random_element(&mut rng, 1.0)).collect();
        let e: Vec<Vec<f64>> = (0..5).map(|_| lie.random_algebra(&mut rng, 1.0)).collect();
        let h = crate::mech1d::RigidHistory { complex, q: q.clone(), e: e.clone() };
        assert!((m.chain_action(&q, &e) - rigid.action(&h)).abs() < 1e-12);
    }
}
