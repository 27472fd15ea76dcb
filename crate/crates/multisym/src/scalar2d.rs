//! Nonlinear waves `½(φ_0² − φ_1²) + N(φ)` on a cartesian grid of atoms.
//!
//! A history stores `φ_ν` per atom and `φ_τ` per face. The atom Lagrangian is the
//! sum of four corner Lagrangians, which collapses to
//! `hk{(d0⁺² + d0⁻²)/h² − (d1⁺² + d1⁻²)/k² + 4N(φ_ν)}` with `d⁺ = φ_+ − φ_ν`, `d⁻ = φ_ν − φ_−`.

use serde::{Deserialize, Serialize};

use crate::complex::{BoundarySpec, CartesianComplex2D, FaceLabel, Sign};
use crate::error::{invalid, Error, Result};
use crate::numerics::{inf_norm, newton, DMat, DVec, NewtonOpts, NewtonReport};
use crate::par;
use crate::variational::{DsSplit, Variational};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    None,
    /// `N = c φ²/2`
    Quadratic { c: f64 },
    /// `N′ = λ φ³`, so `N = λ φ⁴/4`.
    Cubic { lambda: f64 },
    /// `N = amp cos φ`
    Cosine { amp: f64 },
}

impl Nonlinearity {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Quadratic { c } => 0.5 * c * x * x,
            Nonlinearity::Cubic { lambda } => 0.25 * lambda * x.powi(4),
            Nonlinearity::Cosine { amp } => amp * x.cos(),
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Quadratic { c } => c * x,
            Nonlinearity::Cubic { lambda } => lambda * x.powi(3),
            Nonlinearity::Cosine { amp } => -amp * x.sin(),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::None => 0.0,
            Nonlinearity::Quadratic { c } => c,
            Nonlinearity::Cubic { lambda } => 3.0 * lambda * x * x,
            Nonlinearity::Cosine { amp } => -amp * x.cos(),
        }
    }

    /// Largest relative mismatch between `N′`, `N″` and central differences on sample points.
    pub fn consistency_error(&self) -> f64 {
        let e = 1e-5;
        [-1.3, -0.4, 0.0, 0.7, 1.9]
            .iter()
            .map(|&x| {
                let f1 = (self.value(x + e) - self.value(x - e)) / (2.0 * e);
                let f2 = (self.d1(x + e) - self.d1(x - e)) / (2.0 * e);
                let s = 1.0 + self.d1(x).abs() + self.d2(x).abs();
                ((f1 - self.d1(x)).abs() + (f2 - self.d2(x)).abs()) / s
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveModel {
    pub n: Nonlinearity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarHistory {
    pub complex: CartesianComplex2D,
    pub atoms: Vec<f64>,
    pub faces: Vec<f64>,
}

impl ScalarHistory {
    pub fn new(complex: CartesianComplex2D, atoms: Vec<f64>, faces: Vec<f64>) -> Result<Self> {
        if atoms.len() != complex.n_atoms() || faces.len() != complex.n_faces() {
            return invalid("history arrays do not match the complex");
        }
        Ok(ScalarHistory { complex, atoms, faces })
    }

    pub fn constant(complex: CartesianComplex2D, v: f64) -> Self {
        let (na, nf) = (complex.n_atoms(), complex.n_faces());
        ScalarHistory { complex, atoms: vec![v; na], faces: vec![v; nf] }
    }

    /// Variations are laid out as `[atoms…, faces…]`.
    pub fn len(&self) -> usize {
        self.atoms.len() + self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn face_value(&self, atom: usize, l: FaceLabel) -> f64 {
        self.faces[self.complex.face(atom, l)]
    }

    pub fn to_vec(&self) -> DVec {
        DVec::from_iterator(self.len(), self.atoms.iter().chain(&self.faces).copied())
    }
}

/// Cauchy data for [`WaveModel::evolve`]: face values on the initial slice, the atom
/// values just past of it, and Dirichlet values on the two spatial sides per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub sigma: Vec<f64>,
    pub past: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// `hk/h²` for time faces, `−hk/k²` for space faces.
fn face_coeff(c: &CartesianComplex2D, l: FaceLabel) -> f64 {
    let (h, k) = (c.h, c.k);
    match l.axis {
        0 => k / h,
        _ => -h / k,
    }
}

impl WaveModel {
    pub fn new(n: Nonlinearity) -> Result<Self> {
        let err = n.consistency_error();
        if err > 1e-6 {
            return invalid(format!("nonlinearity derivatives inconsistent (error {err:e})"));
        }
        Ok(WaveModel { n })
    }

    /// `d⁺ = φ_+ − φ_ν` or `d⁻ = φ_ν − φ_−`.
    fn diff(h: &ScalarHistory, atom: usize, l: FaceLabel) -> f64 {
        let f = h.face_value(atom, l);
        l.sign.value() * (f - h.atoms[atom])
    }

    pub fn lagrangian(&self, h: &ScalarHistory, atom: usize) -> f64 {
        let c = &h.complex;
        let mut s = 4.0 * c.h * c.k * self.n.value(h.atoms[atom]);
        for l in FaceLabel::ALL {
            let d = Self::diff(h, atom, l);
            s += face_coeff(c, l) * d * d;
        }
        s
    }

    pub fn action(&self, h: &ScalarHistory) -> f64 {
        (0..h.atoms.len()).map(|a| self.lagrangian(h, a)).sum()
    }

    /// `∂L/∂φ_ν`.
    pub fn interior_residual(&self, h: &ScalarHistory, atom: usize) -> f64 {
        let c = &h.complex;
        let p = h.atoms[atom];
        let f = |axis, sign| h.face_value(atom, FaceLabel { axis, sign });
        let d0 = f(0, Sign::Plus) - 2.0 * p + f(0, Sign::Minus);
        let d1 = f(1, Sign::Plus) - 2.0 * p + f(1, Sign::Minus);
        2.0 * c.h * c.k * (-d0 / (c.h * c.h) + d1 / (c.k * c.k) + 2.0 * self.n.d1(p))
    }

    /// `∂L_ν/∂φ_τ` for face `l` of `atom`; `Θ_L(·, τ_ν)` is this times `dφ_τ`.
    pub fn face_partial(&self, h: &ScalarHistory, atom: usize, l: FaceLabel) -> f64 {
        2.0 * face_coeff(&h.complex, l) * l.sign.value() * Self::diff(h, atom, l)
    }

    /// Sum of the face partials of both atoms sharing an interior face.
    pub fn gluing_residual(&self, h: &ScalarHistory, face: usize) -> Result<f64> {
        let sh = h.complex.sharing(face);
        if sh.len() != 2 {
            return invalid(format!("face {face} is on the boundary"));
        }
        Ok(sh.iter().map(|&(a, l)| self.face_partial(h, a, l)).sum())
    }

    /// Value of `φ_τ` solving the gluing equation: the mean of the two atoms.
    pub fn glue_solve(h: &ScalarHistory, face: usize) -> Result<f64> {
        let fi = h.complex.face_info(face);
        match (fi.lower, fi.upper) {
            (Some(a), Some(b)) => Ok(0.5 * (h.atoms[a] + h.atoms[b])),
            _ => invalid(format!("face {face} is on the boundary")),
        }
    }

    pub fn cartan_form(&self, h: &ScalarHistory, atom: usize, l: FaceLabel, v: &DVec) -> f64 {
        let f = h.complex.face(atom, l);
        self.face_partial(h, atom, l) * v[h.atoms.len() + f]
    }

    /// `Ω_L(v, w)` at face `l` of `atom`: `±(2k/h or 2h/k) dφ_ν ∧ dφ_τ`.
    pub fn omega(&self, h: &ScalarHistory, atom: usize, l: FaceLabel, v: &DVec, w: &DVec) -> f64 {
        let na = h.atoms.len();
        let f = na + h.complex.face(atom, l);
        2.0 * face_coeff(&h.complex, l) * (v[atom] * w[f] - v[f] * w[atom])
    }

    pub fn max_residual(&self, h: &ScalarHistory) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..h.atoms.len() {
            m = m.max(self.interior_residual(h, a).abs());
        }
        for f in h.complex.interior_faces() {
            m = m.max(self.gluing_residual(h, f).unwrap().abs());
        }
        m
    }

    /// `Σ_∂U Ω_L(v, w)` over boundary faces; refuses unless `h` solves to `tol`.
    pub fn multisymplectic_defect(&self, h: &ScalarHistory, v: &DVec, w: &DVec, tol: f64) -> Result<f64> {
        let r = self.max_residual(h);
        if r > tol {
            return Err(Error::NotASolution(r));
        }
        Ok(h.complex
            .boundary_faces()
            .into_iter()
            .map(|f| {
                let (a, l) = h.complex.sharing(f)[0];
                self.omega(h, a, l, v, w)
            })
            .sum())
    }

    /// Gradient of the action over `[atoms…, faces…]`.
    pub fn gradient(&self, h: &ScalarHistory) -> DVec {
        let na = h.atoms.len();
        let mut g = DVec::zeros(h.len());
        for a in 0..na {
            g[a] = self.interior_residual(h, a);
            for l in FaceLabel::ALL {
                g[na + h.complex.face(a, l)] += self.face_partial(h, a, l);
            }
        }
        g
    }

    pub fn hessian(&self, h: &ScalarHistory) -> DMat {
        let c = &h.complex;
        let na = h.atoms.len();
        let mut m = DMat::zeros(h.len(), h.len());
        for a in 0..na {
            m[(a, a)] += 4.0 * c.h * c.k * self.n.d2(h.atoms[a]);
            for l in FaceLabel::ALL {
                let f = na + c.face(a, l);
                let cc = 2.0 * face_coeff(c, l);
                m[(a, a)] += cc;
                m[(f, f)] += cc;
                m[(a, f)] -= cc;
                m[(f, a)] -= cc;
            }
        }
        m
    }

    /// Variables solved for by [`Self::solve_bvp`]: all atoms and interior faces,
    /// plus boundary faces when the boundary is open.
    pub fn free_indices(c: &CartesianComplex2D) -> Vec<usize> {
        let na = c.n_atoms();
        let mut idx: Vec<usize> = (0..na).collect();
        for f in 0..c.n_faces() {
            if c.face_info(f).is_interior() || c.boundary == BoundarySpec::Open {
                idx.push(na + f);
            }
        }
        idx
    }

    /// Global Newton solve of the boundary-value problem; boundary faces keep the
    /// values of `guess` when the boundary is fixed.
    pub fn solve_bvp(&self, guess: ScalarHistory, opts: &NewtonOpts) -> Result<(ScalarHistory, NewtonReport)> {
        let idx = Self::free_indices(&guess.complex);
        let residual = |h: &ScalarHistory| self.gradient(h).select_rows(&idx);
        let jacobian = |h: &ScalarHistory| self.hessian(h).select_rows(&idx).select_columns(&idx);
        let retract = |h: &ScalarHistory, dx: &DVec| {
            let mut out = h.clone();
            let na = out.atoms.len();
            for (n, &k) in idx.iter().enumerate() {
                if k < na {
                    out.atoms[k] += dx[n];
                } else {
                    out.faces[k - na] += dx[n];
                }
            }
            out
        };
        newton(guess, residual, jacobian, retract, opts)
    }

    /// Tangents to the solution space, one per boundary face, from the linearized
    /// equations with fixed boundary data perturbed one face at a time.
    pub fn first_variations(&self, h: &ScalarHistory) -> Result<Vec<DVec>> {
        let c = &h.complex;
        let na = c.n_atoms();
        let free: Vec<usize> = (0..na).chain(c.interior_faces().into_iter().map(|f| na + f)).collect();
        let bnd: Vec<usize> = c.boundary_faces().into_iter().map(|f| na + f).collect();
        let hs = self.hessian(h);
        let lu = hs.select_rows(&free).select_columns(&free).lu();
        let hfb = hs.select_rows(&free).select_columns(&bnd);
        bnd.iter()
            .enumerate()
            .map(|(col, &b)| {
                let x = lu
                    .solve(&(-hfb.column(col)).clone_owned())
                    .ok_or_else(|| Error::InvalidArgument("linearized problem is singular".into()))?;
                let mut v = DVec::zeros(h.len());
                v[b] = 1.0;
                for (n, &k) in free.iter().enumerate() {
                    v[k] = x[n];
                }
                Ok(v)
            })
            .collect()
    }

    /// Explicit evolution over `n_steps` rows of `n1` atoms from Cauchy data.
    pub fn evolve(&self, n1: usize, h: f64, k: f64, data: &InitialData, n_steps: usize) -> Result<ScalarHistory> {
        if data.sigma.len() != n1 || data.past.len() != n1 {
            return invalid("initial slice data must have n1 entries");
        }
        if data.left.len() < n_steps || data.right.len() < n_steps {
            return invalid("side data must cover every step");
        }
        let c = CartesianComplex2D::new(n_steps, n1, h, k, BoundarySpec::Fixed)?;
        let mut out = ScalarHistory::constant(c.clone(), 0.0);
        let lab = |axis, sign| FaceLabel { axis, sign };
        let mut past = data.past.clone();
        for j in 0..n1 {
            out.faces[c.face(c.atom(0, j), lab(0, Sign::Minus))] = data.sigma[j];
        }
        for i in 0..n_steps {
            let row: Vec<f64> = par::map_range(n1, |j| {
                2.0 * out.faces[c.face(c.atom(i, j), lab(0, Sign::Minus))] - past[j]
            });
            for j in 0..n1 {
                out.atoms[c.atom(i, j)] = row[j];
            }
            out.faces[c.face(c.atom(i, 0), lab(1, Sign::Minus))] = data.left[i];
            out.faces[c.face(c.atom(i, n1 - 1), lab(1, Sign::Plus))] = data.right[i];
            for j in 0..n1.saturating_sub(1) {
                out.faces[c.face(c.atom(i, j), lab(1, Sign::Plus))] = 0.5 * (row[j] + row[j + 1]);
            }
            let top: Vec<f64> = par::map_range(n1, |j| {
                let a = c.atom(i, j);
                let p = out.atoms[a];
                let fm = out.faces[c.face(a, lab(0, Sign::Minus))];
                let s1 = out.faces[c.face(a, lab(1, Sign::Plus))] - 2.0 * p + out.faces[c.face(a, lab(1, Sign::Minus))];
                2.0 * p - fm + h * h * (s1 / (k * k) + 2.0 * self.n.d1(p))
            });
            for j in 0..n1 {
                out.faces[c.face(c.atom(i, j), lab(0, Sign::Plus))] = top[j];
            }
            past = row;
        }
        Ok(out)
    }

    /// Flux of the `φ → φ + 1` current (meaningful for `N = 0`): for each time slice `i`
    /// the charge `Q_i`, and for each row the outflow `F_i` through the spatial sides.
    /// On solutions `Q_{i+1} − Q_i + F_i = 0`.
    pub fn translation_flux(&self, h: &ScalarHistory) -> (Vec<f64>, Vec<f64>) {
        let c = &h.complex;
        let lab = |axis, sign| FaceLabel { axis, sign };
        let mut q = Vec::with_capacity(c.n0 + 1);
        for i in 0..c.n0 {
            q.push(-(0..c.n1).map(|j| self.face_partial(h, c.atom(i, j), lab(0, Sign::Minus))).sum::<f64>());
        }
        q.push((0..c.n1).map(|j| self.face_partial(h, c.atom(c.n0 - 1, j), lab(0, Sign::Plus))).sum());
        let f = (0..c.n0)
            .map(|i| {
                self.face_partial(h, c.atom(i, c.n1 - 1), lab(1, Sign::Plus))
                    + self.face_partial(h, c.atom(i, 0), lab(1, Sign::Minus))
            })
            .collect();
        (q, f)
    }

    /// Residuals of the bulk-only equations at every atom with four neighbours,
    /// keyed by atom index.
    pub fn reduced_residuals(&self, c: &CartesianComplex2D, bulk: &[f64]) -> Vec<(usize, f64)> {
        let (h, k) = (c.h, c.k);
        let mut out = Vec::new();
        for i in 1..c.n0.saturating_sub(1) {
            for j in 1..c.n1.saturating_sub(1) {
                let p = bulk[c.atom(i, j)];
                let d0 = bulk[c.atom(i + 1, j)] - 2.0 * p + bulk[c.atom(i - 1, j)];
                let d1 = bulk[c.atom(i, j + 1)] - 2.0 * p + bulk[c.atom(i, j - 1)];
                out.push((c.atom(i, j), h * k * (-d0 / (h * h) + d1 / (k * k) + 4.0 * self.n.d1(p))));
            }
        }
        out
    }

    /// Plaquette form of the reduced action on the domain spanned by the centres.
    pub fn reduced_action(&self, c: &CartesianComplex2D, bulk: &[f64]) -> f64 {
        let (h, k) = (c.h, c.k);
        let mut s = 0.0;
        for i in 0..c.n0.saturating_sub(1) {
            for j in 0..c.n1.saturating_sub(1) {
                let p00 = bulk[c.atom(i, j)];
                let p10 = bulk[c.atom(i + 1, j)];
                let p01 = bulk[c.atom(i, j + 1)];
                let p11 = bulk[c.atom(i + 1, j + 1)];
                let t = (((p10 - p00) / (2.0 * h)).powi(2) + ((p11 - p01) / (2.0 * h)).powi(2)) / 2.0;
                let x = (((p01 - p00) / (2.0 * k)).powi(2) + ((p11 - p10) / (2.0 * k)).powi(2)) / 2.0;
                let nn = [p00, p01, p11, p10].iter().map(|&v| self.n.value(v)).sum::<f64>() / 4.0;
                s += (0.5 * (t - x) + nn) * 4.0 * h * k;
            }
        }
        s
    }

    /// Full history from bulk values: interior faces by the midpoint rule, boundary
    /// faces copied from their atom (they lie outside the contracted domain).
    pub fn lift(c: &CartesianComplex2D, bulk: &[f64]) -> ScalarHistory {
        let faces = (0..c.n_faces())
            .map(|f| {
                let fi = c.face_info(f);
                match (fi.lower, fi.upper) {
                    (Some(a), Some(b)) => 0.5 * (bulk[a] + bulk[b]),
                    (Some(a), None) | (None, Some(a)) => bulk[a],
                    (None, None) => unreachable!(),
                }
            })
            .collect();
        ScalarHistory { complex: c.clone(), atoms: bulk.to_vec(), faces }
    }

    /// Action of a history restricted to the contracted domain: each atom keeps
    /// only the corners that point towards neighbouring atoms.
    pub fn contracted_action(&self, h: &ScalarHistory) -> f64 {
        let c = &h.complex;
        let hk = c.h * c.k;
        let mut s = 0.0;
        for a in 0..c.n_atoms() {
            let (i, j) = c.coords(a);
            let ok = |axis: usize, sign: Sign| match (axis, sign) {
                (0, Sign::Plus) => i + 1 < c.n0,
                (0, Sign::Minus) => i > 0,
                (_, Sign::Plus) => j + 1 < c.n1,
                (_, Sign::Minus) => j > 0,
            };
            for s0 in [Sign::Plus, Sign::Minus] {
                for s1 in [Sign::Plus, Sign::Minus] {
                    if !(ok(0, s0) && ok(1, s1)) {
                        continue;
                    }
                    let d0 = Self::diff(h, a, FaceLabel { axis: 0, sign: s0 }) / c.h;
                    let d1 = Self::diff(h, a, FaceLabel { axis: 1, sign: s1 }) / c.k;
                    s += (0.5 * (d0 * d0 - d1 * d1) + self.n.value(h.atoms[a])) * hk;
                }
            }
        }
        s
    }

    /// Extremizes the reduced action with the outer ring of atoms held fixed.
    pub fn solve_reduced(&self, c: &CartesianComplex2D, bulk0: &[f64], opts: &NewtonOpts) -> Result<Vec<f64>> {
        let inner: Vec<usize> = self.reduced_residuals(c, bulk0).into_iter().map(|(a, _)| a).collect();
        let pos: std::collections::HashMap<usize, usize> = inner.iter().enumerate().map(|(n, &a)| (a, n)).collect();
        let (h, k) = (c.h, c.k);
        let residual = |b: &Vec<f64>| DVec::from_iterator(inner.len(), self.reduced_residuals(c, b).into_iter().map(|x| x.1));
        let jacobian = |b: &Vec<f64>| {
            let mut m = DMat::zeros(inner.len(), inner.len());
            for (r, &a) in inner.iter().enumerate() {
                let (i, j) = c.coords(a);
                m[(r, r)] = h * k * (2.0 / (h * h) - 2.0 / (k * k) + 4.0 * self.n.d2(b[a]));
                for (nb, w) in [
                    (c.atom(i + 1, j), -k / h),
                    (c.atom(i - 1, j), -k / h),
                    (c.atom(i, j + 1), h / k),
                    (c.atom(i, j - 1), h / k),
                ] {
                    if let Some(&col) = pos.get(&nb) {
                        m[(r, col)] += w;
                    }
                }
            }
            m
        };
        let retract = |b: &Vec<f64>, dx: &DVec| {
            let mut out = b.clone();
            for (n, &a) in inner.iter().enumerate() {
                out[a] += dx[n];
            }
            out
        };
        newton(bulk0.to_vec(), residual, jacobian, retract, opts).map(|(b, _)| b)
    }

    /// Atomic-boundary-data Lagrangian summed over atoms, reading the face values of `h`.
    pub fn boundary_model_action(&self, h: &ScalarHistory) -> f64 {
        let c = &h.complex;
        (0..c.n_atoms())
            .map(|a| {
                let f = |axis, sign| h.face_value(a, FaceLabel { axis, sign });
                let (p0, m0, p1, m1) = (f(0, Sign::Plus), f(0, Sign::Minus), f(1, Sign::Plus), f(1, Sign::Minus));
                let mean = 0.25 * (p0 + m0 + p1 + m1);
                (((p0 - m0) / c.h).powi(2) - ((p1 - m1) / c.k).powi(2) + self.n.value(mean)) * 4.0 * c.h * c.k
            })
            .sum()
    }
}

impl Variational for WaveModel {
    type History = ScalarHistory;

    fn tangent_dim(&self, h: &ScalarHistory) -> usize {
        h.len()
    }

    fn action(&self, h: &ScalarHistory) -> f64 {
        WaveModel::action(self, h)
    }

    fn ds(&self, h: &ScalarHistory, v: &DVec) -> DsSplit {
        let na = h.atoms.len();
        let c = &h.complex;
        let mut out = DsSplit::default();
        for a in 0..na {
            out.bulk += self.interior_residual(h, a) * v[a];
            for l in FaceLabel::ALL {
                let f = c.face(a, l);
                let t = self.face_partial(h, a, l) * v[na + f];
                if c.face_info(f).is_interior() {
                    out.bulk += t;
                } else {
                    out.boundary += t;
                }
            }
        }
        out
    }

    fn retract(&self, h: &ScalarHistory, v: &DVec) -> ScalarHistory {
        let na = h.atoms.len();
        let mut out = h.clone();
        out.atoms.iter_mut().enumerate().for_each(|(i, x)| *x += v[i]);
        out.faces.iter_mut().enumerate().for_each(|(i, x)| *x += v[na + i]);
        out
    }
}

/// Largest component of the equations solved by [`WaveModel::solve_bvp`].
pub fn residual_norm(m: &WaveModel, h: &ScalarHistory) -> f64 {
    let g = m.gradient(h);
    let idx = WaveModel::free_indices(&h.complex);
    inf_norm(&g.select_rows(&idx))
}
