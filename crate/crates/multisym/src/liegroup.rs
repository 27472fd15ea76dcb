//! Matrix groups SO(N) and SU(N) with fixed algebra bases.
//!
//! SO(N) uses `(E_ab - E_ba)/sqrt 2`, orthonormal for `Tr(A^T B)`.
//! SU(N) uses `i λ/2` with generalized Gell-Mann `λ`; for N = 2 this is
//! `iJ_k = (i/2) σ_k`. Those generators have `Re Tr(A^† B) = δ/2`, so algebra
//! coefficients are read off with a factor 2 and the coefficient norm is the
//! one used for rotation angles.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub type CMat = DMatrix<Complex64>;

const C0: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const C1: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const CI: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    SO(usize),
    SU(usize),
}

impl Group {
    pub fn n(&self) -> usize {
        match *self {
            Group::SO(n) | Group::SU(n) => n,
        }
    }

    /// Dimension of the algebra.
    pub fn dim(&self) -> usize {
        match *self {
            Group::SO(n) => n * (n - 1) / 2,
            Group::SU(n) => n * n - 1,
        }
    }

    pub fn is_real(&self) -> bool {
        matches!(self, Group::SO(_))
    }

    /// Squared norm of each basis generator under `Re Tr(A^† B)`.
    pub fn basis_norm2(&self) -> f64 {
        if self.is_real() {
            1.0
        } else {
            0.5
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Group::SO(n) if n >= 2 => Ok(()),
            Group::SU(n) if n >= 2 => Ok(()),
            _ => invalid(format!("unsupported group {self:?}")),
        }
    }

    pub fn basis(&self) -> Vec<CMat> {
        let n = self.n();
        let mut out = Vec::with_capacity(self.dim());
        match self {
            Group::SO(_) => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                for a in 0..n {
                    for b in a + 1..n {
                        let mut m = CMat::zeros(n, n);
                        m[(a, b)] = Complex64::new(s, 0.0);
                        m[(b, a)] = Complex64::new(-s, 0.0);
                        out.push(m);
                    }
                }
            }
            Group::SU(_) => {
                let half_i = CI * 0.5;
                for a in 0..n {
                    for b in a + 1..n {
                        let mut sym = CMat::zeros(n, n);
                        sym[(a, b)] = C1;
                        sym[(b, a)] = C1;
                        out.push(sym * half_i);
                        let mut asym = CMat::zeros(n, n);
                        asym[(a, b)] = -CI;
                        asym[(b, a)] = CI;
                        out.push(asym * half_i);
                    }
                }
                for d in 1..n {
                    let norm = (2.0 / (d * (d + 1)) as f64).sqrt();
                    let mut m = CMat::zeros(n, n);
                    for j in 0..d {
                        m[(j, j)] = Complex64::new(norm, 0.0);
                    }
                    m[(d, d)] = Complex64::new(-(d as f64) * norm, 0.0);
                    out.push(m * half_i);
                }
            }
        }
        out
    }
}

/// Group with its basis precomputed.
#[derive(Debug, Clone)]
pub struct Lie {
    pub group: Group,
    pub basis: Vec<CMat>,
}

impl Lie {
    pub fn new(group: Group) -> Result<Lie> {
        group.validate()?;
        Ok(Lie { group, basis: group.basis() })
    }

    pub fn su2() -> Lie {
        Lie::new(Group::SU(2)).expect("SU(2)")
    }

    pub fn so(n: usize) -> Lie {
        Lie::new(Group::SO(n)).expect("SO(n)")
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn n(&self) -> usize {
        self.group.n()
    }

    pub fn identity(&self) -> CMat {
        CMat::identity(self.n(), self.n())
    }

    pub fn zero_algebra(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Matrix `ξ^i f_i`.
    pub fn matrix(&self, xi: &[f64]) -> CMat {
        let n = self.n();
        let mut m = CMat::zeros(n, n);
        for (c, f) in xi.iter().zip(&self.basis) {
            if *c != 0.0 {
                m += f * Complex64::new(*c, 0.0);
            }
        }
        m
    }

    /// Coefficients of the algebra projection of `x` (skew or antihermitian traceless part).
    pub fn coeffs(&self, x: &CMat) -> Vec<f64> {
        let k = 1.0 / self.group.basis_norm2();
        self.basis.iter().map(|f| k * re_tr_adj_mul(f, x)).collect()
    }

    /// `θ_i = -Re Tr(f_i g)`.
    pub fn theta(&self, g: &CMat) -> Vec<f64> {
        self.basis.iter().map(|f| -re_tr_mul(f, g)).collect()
    }

    /// `ϑ_ij = -Re Tr(f_i f_j g)`, row-major `dim × dim`.
    pub fn theta2(&self, g: &CMat) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = -re_tr_mul(&(&self.basis[i] * &self.basis[j]), g);
            }
        }
        out
    }

    pub fn inv(&self, g: &CMat) -> CMat {
        g.adjoint()
    }

    pub fn exp(&self, xi: &[f64]) -> CMat {
        match self.group {
            Group::SU(2) => su2_exp(xi),
            Group::SO(3) => so3_exp(xi),
            _ => self.matrix(xi).exp(),
        }
    }

    /// Exponential through the general dense routine, bypassing closed forms.
    pub fn exp_dense(&self, xi: &[f64]) -> CMat {
        self.matrix(xi).exp()
    }

    /// Principal logarithm. Fails when a rotation angle is within `π·1e-6` of `π`.
    pub fn log(&self, g: &CMat) -> Result<Vec<f64>> {
        match self.group {
            Group::SU(2) => su2_log(g),
            _ => self.log_schur(g),
        }
    }

    /// Principal logarithm via a complex Schur form (the matrix is normal).
    pub fn log_schur(&self, g: &CMat) -> Result<Vec<f64>> {
        let n = self.n();
        let (q, t) = nalgebra::linalg::Schur::new(g.clone()).unpack();
        let mut d = CMat::zeros(n, n);
        let mut sum = 0.0;
        for i in 0..n {
            let ang = t[(i, i)].arg();
            if ang.abs() > std::f64::consts::PI * (1.0 - 1e-6) {
                return Err(Error::BranchAmbiguity(format!("rotation angle {ang} at the cut locus")));
            }
            sum += ang;
            d[(i, i)] = Complex64::new(t[(i, i)].norm().ln(), ang);
        }
        if !self.group.is_real() && sum.abs() > 1e-8 {
            return Err(Error::BranchAmbiguity("principal logarithm is not traceless".into()));
        }
        let x = &q * d * q.adjoint();
        Ok(self.coeffs(&x))
    }

    /// `exp(log(g) t)`.
    pub fn powf(&self, g: &CMat, t: f64) -> Result<CMat> {
        let x = self.log(g)?;
        Ok(self.exp(&scale(&x, t)))
    }

    /// `g ξ g^{-1}`.
    pub fn ad(&self, g: &CMat, xi: &[f64]) -> Vec<f64> {
        self.coeffs(&(g * self.matrix(xi) * g.adjoint()))
    }

    /// `g^{-1} ξ g`.
    pub fn ad_inv(&self, g: &CMat, xi: &[f64]) -> Vec<f64> {
        self.coeffs(&(g.adjoint() * self.matrix(xi) * g))
    }

    pub fn bracket(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let (x, y) = (self.matrix(a), self.matrix(b));
        self.coeffs(&(&x * &y - &y * &x))
    }

    /// Membership check `g^† g = 1`, `det g = 1` within `tol`.
    pub fn is_member(&self, g: &CMat, tol: f64) -> bool {
        let n = self.n();
        if g.nrows() != n || g.ncols() != n {
            return false;
        }
        if self.group.is_real() && g.iter().any(|z| z.im.abs() > tol) {
            return false;
        }
        let e = (g.adjoint() * g - self.identity()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        e <= tol && (g.determinant() - C1).norm() <= tol
    }

    /// Nearest group element (polar projection), used for drift control.
    pub fn reproject(&self, g: &CMat) -> CMat {
        let svd = g.clone().svd(true, true);
        let mut p = svd.u.unwrap() * svd.v_t.unwrap();
        let n = self.n();
        let det = p.determinant();
        let phase = Complex64::from_polar(1.0, -det.arg() / n as f64);
        p *= phase;
        if self.group.is_real() {
            p.iter_mut().for_each(|z| z.im = 0.0);
        }
        p
    }

    /// Ordered product `g_k ⋯ g_1` of a chain, re-projecting every `every` factors.
    pub fn chain_product(&self, gs: &[CMat], every: Option<usize>) -> CMat {
        let mut p = self.identity();
        for (k, g) in gs.iter().enumerate() {
            p = g * p;
            if let Some(e) = every {
                if (k + 1) % e == 0 {
                    p = self.reproject(&p);
                }
            }
        }
        p
    }

    /// Algebra element with coefficients uniform in `[-r, r]`.
    pub fn random_algebra<R: Rng>(&self, rng: &mut R, r: f64) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.gen_range(-r..=r)).collect()
    }

    pub fn random_element<R: Rng>(&self, rng: &mut R, r: f64) -> CMat {
        let xi = self.random_algebra(rng, r);
        self.exp(&xi)
    }
}

pub fn scale(x: &[f64], t: f64) -> Vec<f64> {
    x.iter().map(|v| v * t).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `Re Tr(a b)` without forming the product.
pub fn re_tr_mul(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for k in 0..n {
            let (x, y) = (a[(i, k)], b[(k, i)]);
            s += x.re * y.re - x.im * y.im;
        }
    }
    s
}

/// `Re Tr(a^† b)`.
pub fn re_tr_adj_mul(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn re_tr(a: &CMat) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

fn su2_exp(xi: &[f64]) -> CMat {
    // exp(i φ n·σ/2) with φ = |ξ|.
    let phi = norm(xi);
    let (c, s) = ((phi / 2.0).cos(), if phi > 1e-300 { (phi / 2.0).sin() / phi } else { 0.5 });
    let (x, y, z) = (xi[0] * s, xi[1] * s, xi[2] * s);
    CMat::from_row_slice(
        2,
        2,
        &[
            Complex64::new(c, z),
            Complex64::new(y, x),
            Complex64::new(-y, x),
            Complex64::new(c, -z),
        ],
    )
}

fn su2_log(g: &CMat) -> Result<Vec<f64>> {
    // g = a0 + i a·σ with a0 = Re g00, a = (Im g01, Re g01, Im g00).
    let a0 = 0.5 * (g[(0, 0)].re + g[(1, 1)].re);
    let a = [
        0.5 * (g[(0, 1)].im + g[(1, 0)].im),
        0.5 * (g[(0, 1)].re - g[(1, 0)].re),
        0.5 * (g[(0, 0)].im - g[(1, 1)].im),
    ];
    let s = norm(&a);
    let half = s.atan2(a0);
    if half > std::f64::consts::PI * (1.0 - 1e-6) {
        return Err(Error::BranchAmbiguity(format!("SU(2) angle {} at the cut locus", 2.0 * half)));
    }
    let k = if s > 1e-300 { 2.0 * half / s } else { 2.0 };
    Ok(a.iter().map(|v| v * k).collect())
}

fn so3_exp(xi: &[f64]) -> CMat {
    // Basis order (01),(02),(12): X = (xi0 E01 + xi1 E02 + xi2 E12 - transposes)/sqrt 2.
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (p, q, s) = (xi[0] * r, xi[1] * r, xi[2] * r);
    let k = [[0.0, p, q], [-p, 0.0, s], [-q, -s, 0.0]];
    let phi = (p * p + q * q + s * s).sqrt();
    let (a, b) = if phi > 1e-8 {
        (phi.sin() / phi, (1.0 - phi.cos()) / (phi * phi))
    } else {
        (1.0 - phi * phi / 6.0, 0.5 - phi * phi / 24.0)
    };
    let mut m = CMat::from_element(3, 3, C0);
    for i in 0..3 {
        for j in 0..3 {
            let mut k2 = 0.0;
            for l in 0..3 {
                k2 += k[i][l] * k[l][j];
            }
            let id = if i == j { 1.0 } else { 0.0 };
            m[(i, j)] = Complex64::new(id + a * k[i][j] + b * k2, 0.0);
        }
    }
    m
}
