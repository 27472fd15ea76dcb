//! Decimation between a coarse and a fine complex, continuum-limit tables for
//! the bulk and boundary pairings of `dS`, and the corrected action of a coarse
//! history.

use crate::complex::{local_face, local_face_parts, CartesianComplex2D, CubicalComplexND, Sign, TimeComplex};
use crate::error::{invalid, Error, Result};
use crate::gauge::{GaugeHistory, GaugeTransform};
use crate::liegroup::{self, CMat};
use crate::mech1d::{ParticleHistory, ParticleModel, RigidHistory, RigidModel};
use crate::numerics::{five_point, fit_order, integrate, integrate_2d, newton, DVec, NewtonOpts};
use crate::par;
use crate::scalar2d::{ScalarHistory, WaveModel};
use crate::variational::Variational;

/// Coarse complex `Δ` and its refinement `Δ′` by `factor` along every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalePair<C> {
    pub coarse: C,
    pub fine: C,
    pub factor: usize,
}

/// Reads a coarse history off a fine one.
pub trait Decimate {
    type History;
    fn decimate(&self, fine: &Self::History) -> Result<Self::History>;
}

fn check_compose<C: PartialEq>(a: &ScalePair<C>, b: &ScalePair<C>) -> Result<()> {
    if a.fine != b.coarse {
        return invalid("fine complex of the outer pair is not the coarse complex of the inner one");
    }
    Ok(())
}

impl ScalePair<TimeComplex> {
    /// Each coarse atom becomes `factor` fine atoms; coarse point `p` sits at fine point `p·factor`.
    pub fn new(coarse: TimeComplex, factor: usize) -> Result<Self> {
        if factor == 0 {
            return invalid("refinement factor must be positive");
        }
        let fine = TimeComplex::new(coarse.n_atoms * factor, coarse.lapse / factor as f64)?;
        Ok(ScalePair { coarse, fine, factor })
    }

    pub fn point(&self, p: usize) -> usize {
        p * self.factor
    }

    pub fn compose(&self, inner: &Self) -> Result<Self> {
        check_compose(self, inner)?;
        Ok(ScalePair { coarse: self.coarse, fine: inner.fine, factor: self.factor * inner.factor })
    }
}

impl Decimate for ScalePair<TimeComplex> {
    type History = ParticleHistory;

    fn decimate(&self, fine: &ParticleHistory) -> Result<ParticleHistory> {
        if fine.complex != self.fine {
            return invalid("history does not live on the fine complex");
        }
        let q = (0..self.coarse.n_points()).map(|p| fine.q[self.point(p)].clone()).collect();
        ParticleHistory::new(self.coarse, q)
    }
}

fn odd_factor(factor: usize) -> Result<()> {
    if factor == 0 || factor % 2 == 0 {
        return invalid(format!("refinement factor must be odd so centres coincide, got {factor}"));
    }
    Ok(())
}

impl ScalePair<CartesianComplex2D> {
    /// Odd `factor` keeps every `Cν` and `Cτ` on a fine decimation point.
    pub fn new(coarse: CartesianComplex2D, factor: usize) -> Result<Self> {
        odd_factor(factor)?;
        let m = factor as f64;
        let fine = CartesianComplex2D::new(
            coarse.n0 * factor,
            coarse.n1 * factor,
            coarse.h / m,
            coarse.k / m,
            coarse.boundary,
        )?;
        Ok(ScalePair { coarse, fine, factor })
    }

    /// `ν′*`.
    pub fn atom(&self, atom: usize) -> usize {
        let (i, j) = self.coarse.coords(atom);
        let mid = (self.factor - 1) / 2;
        self.fine.atom(i * self.factor + mid, j * self.factor + mid)
    }

    /// `τ′*`.
    pub fn face(&self, f: usize) -> usize {
        let (atom, l) = self.coarse.sharing(f)[0];
        let (i, j) = self.coarse.coords(atom);
        let m = self.factor;
        let edge = if l.sign == Sign::Plus { m - 1 } else { 0 };
        let mid = (m - 1) / 2;
        let (fi, fj) = if l.axis == 0 { (i * m + edge, j * m + mid) } else { (i * m + mid, j * m + edge) };
        self.fine.face(self.fine.atom(fi, fj), l)
    }

    pub fn compose(&self, inner: &Self) -> Result<Self> {
        check_compose(self, inner)?;
        Ok(ScalePair { coarse: self.coarse.clone(), fine: inner.fine.clone(), factor: self.factor * inner.factor })
    }
}

impl Decimate for ScalePair<CartesianComplex2D> {
    type History = ScalarHistory;

    fn decimate(&self, fine: &ScalarHistory) -> Result<ScalarHistory> {
        if fine.complex != self.fine {
            return invalid("history does not live on the fine complex");
        }
        let atoms = (0..self.coarse.n_atoms()).map(|a| fine.atoms[self.atom(a)]).collect();
        let faces = (0..self.coarse.n_faces()).map(|f| fine.faces[self.face(f)]).collect();
        ScalarHistory::new(self.coarse.clone(), atoms, faces)
    }
}

/// Fine link and whether it is traversed backwards.
pub type PathStep = (usize, bool);

impl ScalePair<CubicalComplexND> {
    pub fn new(coarse: CubicalComplexND, factor: usize) -> Result<Self> {
        odd_factor(factor)?;
        let dims: Vec<usize> = coarse.dims.iter().map(|d| d * factor).collect();
        let fine = CubicalComplexND::new(&dims)?;
        Ok(ScalePair { coarse, fine, factor })
    }

    pub fn compose(&self, inner: &Self) -> Result<Self> {
        check_compose(self, inner)?;
        Ok(ScalePair { coarse: self.coarse.clone(), fine: inner.fine.clone(), factor: self.factor * inner.factor })
    }

    fn mid(&self) -> usize {
        (self.factor - 1) / 2
    }

    pub fn atom(&self, atom: usize) -> usize {
        let pos: Vec<usize> = self.coarse.atom_pos(atom).iter().map(|p| p * self.factor + self.mid()).collect();
        self.fine.atom_index(&pos)
    }

    pub fn face(&self, f: usize) -> usize {
        let (axis, pos) = self.coarse.face_parts(f);
        let fp: Vec<usize> = pos
            .iter()
            .enumerate()
            .map(|(b, &p)| if b == axis { p * self.factor } else { p * self.factor + self.mid() })
            .collect();
        self.fine.face_id(axis, &fp)
    }

    /// Fine links from `Cν′*` to `Cτ′*` along the link's axis.
    pub fn link_path(&self, l: usize) -> Vec<PathStep> {
        let (atom, lf) = self.coarse.link_parts(l);
        let (axis, sign) = local_face_parts(lf);
        let back = local_face(axis, if sign == Sign::Plus { Sign::Minus } else { Sign::Plus });
        let mut pos: Vec<usize> = self.coarse.atom_pos(atom).iter().map(|p| p * self.factor + self.mid()).collect();
        let mut path = vec![(self.fine.link(self.fine.atom_index(&pos), lf), false)];
        for _ in 0..self.mid() {
            if sign == Sign::Plus {
                pos[axis] += 1;
            } else {
                pos[axis] -= 1;
            }
            let a = self.fine.atom_index(&pos);
            path.push((self.fine.link(a, back), true));
            path.push((self.fine.link(a, lf), false));
        }
        path
    }

    /// Fine links from `Cτ′*` to the fine `Cσ′` at the coarse `Cσ`, inside the coarse face.
    pub fn rlink_path(&self, r: usize) -> Vec<PathStep> {
        let f = self.coarse.rlink(r).face;
        let (axis, _) = self.coarse.face_parts(f);
        let k = r - self.coarse.face_rlinks(f).start;
        let slot = k / 2;
        let other = if slot < axis { slot } else { slot + 1 };
        let sign = if k % 2 == 1 { Sign::Plus } else { Sign::Minus };
        let back = if sign == Sign::Plus { Sign::Minus } else { Sign::Plus };
        let mut cur = self.face(f);
        let mut path = vec![(self.fine.rlink_in_face(cur, other, sign), false)];
        for _ in 0..self.mid() {
            let (ax, mut pos) = self.fine.face_parts(cur);
            if sign == Sign::Plus {
                pos[other] += 1;
            } else {
                pos[other] -= 1;
            }
            cur = self.fine.face_id(ax, &pos);
            path.push((self.fine.rlink_in_face(cur, other, back), true));
            path.push((self.fine.rlink_in_face(cur, other, sign), false));
        }
        path
    }

    /// Fine `σ′` with `Cσ′ = Cσ`, for every coarse `σ`.
    pub fn sigmas(&self) -> Vec<usize> {
        let mut out = vec![usize::MAX; self.coarse.n_sigmas()];
        for r in 0..self.coarse.n_rlinks() {
            let s = self.coarse.rlink(r).sigma;
            if out[s] == usize::MAX {
                let &(last, _) = self.rlink_path(r).last().unwrap();
                out[s] = self.fine.rlink(last).sigma;
            }
        }
        out
    }

    /// Gauge transformation read at the coarse decimation points.
    pub fn restrict(&self, g: &GaugeTransform) -> GaugeTransform {
        GaugeTransform {
            atoms: (0..self.coarse.n_atoms()).map(|a| g.atoms[self.atom(a)].clone()).collect(),
            faces: (0..self.coarse.n_faces()).map(|f| g.faces[self.face(f)].clone()).collect(),
            sigmas: self.sigmas().into_iter().map(|s| g.sigmas[s].clone()).collect(),
        }
    }
}

/// Ordered product, later links on the left.
fn compose_path(path: &[PathStep], links: &[CMat]) -> CMat {
    let mut it = path.iter();
    let &(l0, inv0) = it.next().expect("nonempty path");
    let pick = |l: usize, inv: bool| if inv { links[l].adjoint() } else { links[l].clone() };
    let mut g = pick(l0, inv0);
    for &(l, inv) in it {
        g = pick(l, inv) * g;
    }
    g
}

impl Decimate for ScalePair<CubicalComplexND> {
    type History = GaugeHistory;

    fn decimate(&self, fine: &GaugeHistory) -> Result<GaugeHistory> {
        if fine.complex != self.fine || fine.h.len() != self.fine.n_links() || fine.k.len() != self.fine.n_rlinks() {
            return invalid("history does not live on the fine complex");
        }
        let h = (0..self.coarse.n_links()).map(|l| compose_path(&self.link_path(l), &fine.h)).collect();
        let k = (0..self.coarse.n_rlinks()).map(|r| compose_path(&self.rlink_path(r), &fine.k)).collect();
        Ok(GaugeHistory { complex: self.coarse.clone(), h, k })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    /// Half-atom spacing.
    pub scale: f64,
    pub bulk: f64,
    pub boundary: f64,
}

/// Discrete pairings per scale against their continuum values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub bulk_exact: f64,
    pub boundary_exact: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn bulk_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| (r.bulk - self.bulk_exact).abs()).collect()
    }

    pub fn boundary_errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| (r.boundary - self.boundary_exact).abs()).collect()
    }

    fn scales(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.scale).collect()
    }

    /// Least-squares order of the bulk error, `+∞` when every error is at round-off.
    pub fn bulk_order(&self) -> f64 {
        order(&self.scales(), &self.bulk_errors(), self.bulk_exact)
    }

    pub fn boundary_order(&self) -> f64 {
        order(&self.scales(), &self.boundary_errors(), self.boundary_exact)
    }

    pub fn max_error(&self) -> f64 {
        self.bulk_errors().into_iter().chain(self.boundary_errors()).fold(0.0, f64::max)
    }
}

/// Errors below this (relative to the continuum value) count as exact.
pub const ROUNDOFF: f64 = 1e-10;

fn order(scales: &[f64], err: &[f64], exact: f64) -> f64 {
    if err.iter().all(|&e| e <= ROUNDOFF * (1.0 + exact.abs())) {
        return f64::INFINITY;
    }
    fit_order(scales, err)
}

const DIFF_STEP: f64 = 1e-3;
const QUAD_TOL: f64 = 1e-10;

fn second(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (-f(2.0 * h) + 16.0 * f(h) - 30.0 * f(0.0) + 16.0 * f(-h) - f(-2.0 * h)) / (12.0 * h * h)
}

pub type Curve<'a> = &'a (dyn Fn(f64) -> DVec + Sync);
pub type Field2D<'a> = &'a (dyn Fn(f64, f64) -> f64 + Sync);

/// Particle on `[0, T]` with `n` atoms per row of `atoms`. Continuum values:
/// `∫(−m g q̈ − ∇V)·v dt` and `[m g q̇·v]₀ᵀ`.
pub fn particle_convergence(
    model: &ParticleModel,
    total: f64,
    q: Curve,
    v: Curve,
    atoms: &[usize],
) -> Result<ConvergenceTable> {
    if atoms.is_empty() || atoms.contains(&0) || !(total > 0.0) {
        return invalid("need positive atom counts and duration");
    }
    let d = model.dim();
    let dq = |t: f64| DVec::from_iterator(d, (0..d).map(|j| five_point(|s| q(t + s)[j], DIFF_STEP)));
    let ddq = |t: f64| DVec::from_iterator(d, (0..d).map(|j| second(|s| q(t + s)[j], DIFF_STEP)));
    let m = model.mass;
    let bulk_exact = integrate(
        |t| (-(&model.metric * ddq(t)) * m - model.potential.grad(&q(t))).dot(&v(t)),
        0.0,
        total,
        QUAD_TOL,
    );
    let mom = |t: f64| (&model.metric * dq(t) * m).dot(&v(t));
    let boundary_exact = mom(total) - mom(0.0);
    let rows = par::map(atoms, |&n| -> Result<ConvergenceRow> {
        let c = TimeComplex::new(n, total / (2 * n) as f64)?;
        let pts: Vec<f64> = (0..c.n_points()).map(|p| c.time(p)).collect();
        let h = ParticleHistory::new(c, pts.iter().map(|&t| q(t)).collect())?;
        let mut var = DVec::zeros(c.n_points() * d);
        for (p, &t) in pts.iter().enumerate() {
            var.rows_mut(p * d, d).copy_from(&v(t));
        }
        let s = model.ds_blocks(&h, &var).split();
        Ok(ConvergenceRow { scale: c.lapse, bulk: s.bulk, boundary: s.boundary })
    });
    Ok(ConvergenceTable { bulk_exact, boundary_exact, rows: rows.into_iter().collect::<Result<_>>()? })
}

pub type GroupCurve<'a> = &'a (dyn Fn(f64) -> CMat + Sync);
pub type AlgebraCurve<'a> = &'a (dyn Fn(f64) -> Vec<f64> + Sync);

/// Rigid body on SO(N) with `q → q exp(ξ)`. The discrete momenta are set from
/// the decimated configurations. With `Ω = q⁻¹q̇` the continuum values are
/// `∫[−IΩ̇·ξ + IΩ·[Ω, ξ]] dt` and `[IΩ·ξ]₀ᵀ`.
pub fn rigid_convergence(
    model: &RigidModel,
    total: f64,
    q: GroupCurve,
    xi: AlgebraCurve,
    atoms: &[usize],
) -> Result<ConvergenceTable> {
    if atoms.is_empty() || atoms.contains(&0) || !(total > 0.0) {
        return invalid("need positive atom counts and duration");
    }
    let lie = &model.lie;
    let omega = |t: f64| {
        let h = DIFF_STEP;
        let c = |x: f64| num_complex::Complex64::new(x, 0.0);
        let dq = (q(t - 2.0 * h) - q(t + 2.0 * h) + (q(t + h) - q(t - h)) * c(8.0)) * c(1.0 / (12.0 * h));
        lie.coeffs(&(lie.inv(&q(t)) * dq))
    };
    let mom = |w: &[f64]| -> Vec<f64> { w.iter().zip(&model.inertia).map(|(x, i)| x * i).collect() };
    let d = lie.dim();
    let bulk_exact = integrate(
        |t| {
            let w = omega(t);
            let dw: Vec<f64> = (0..d).map(|j| five_point(|s| omega(t + s)[j], DIFF_STEP)).collect();
            let x = xi(t);
            -liegroup::dot(&mom(&dw), &x) + liegroup::dot(&mom(&w), &lie.bracket(&w, &x))
        },
        0.0,
        total,
        QUAD_TOL,
    );
    let end = |t: f64| liegroup::dot(&mom(&omega(t)), &xi(t));
    let boundary_exact = end(total) - end(0.0);
    let rows = par::map(atoms, |&n| -> Result<ConvergenceRow> {
        let c = TimeComplex::new(n, total / (2 * n) as f64)?;
        let pts: Vec<f64> = (0..c.n_points()).map(|p| c.time(p)).collect();
        let mut h = RigidHistory {
            complex: c,
            q: pts.iter().map(|&t| q(t)).collect(),
            e: vec![lie.zero_algebra(); 2 * n],
        };
        model.set_momenta(&mut h);
        let mut var = DVec::zeros(model.tangent_dim(&h));
        for (p, &t) in pts.iter().enumerate() {
            for (j, x) in xi(t).into_iter().enumerate() {
                var[p * d + j] = x;
            }
        }
        let s = model.ds(&h, &var);
        Ok(ConvergenceRow { scale: c.lapse, bulk: s.bulk, boundary: s.boundary })
    });
    Ok(ConvergenceTable { bulk_exact, boundary_exact, rows: rows.into_iter().collect::<Result<_>>()? })
}

/// Wave model on `[0, L0] × [0, L1]` with `n × n` atoms per row of `grids`. For
/// the density `½(φ₀² − φ₁²) + N(φ)` the continuum values are
/// `∫(−φ₀₀ + φ₁₁ + N′(φ)) v` and `∮(φ₀ n₀ − φ₁ n₁) v`.
pub fn wave_convergence(
    model: &WaveModel,
    extent: (f64, f64),
    phi: Field2D,
    v: Field2D,
    grids: &[usize],
) -> Result<ConvergenceTable> {
    let (l0, l1) = extent;
    if grids.is_empty() || grids.contains(&0) || !(l0 > 0.0 && l1 > 0.0) {
        return invalid("need positive grid sizes and extent");
    }
    let h = DIFF_STEP;
    let p00 = |x: f64, y: f64| second(|s| phi(x + s, y), h);
    let p11 = |x: f64, y: f64| second(|s| phi(x, y + s), h);
    let p0 = |x: f64, y: f64| five_point(|s| phi(x + s, y), h);
    let p1 = |x: f64, y: f64| five_point(|s| phi(x, y + s), h);
    let bulk_exact = integrate_2d(
        |x, y| (-p00(x, y) + p11(x, y) + model.n.d1(phi(x, y))) * v(x, y),
        (0.0, l0),
        (0.0, l1),
        QUAD_TOL,
    );
    let time_sides = integrate(|y| p0(l0, y) * v(l0, y) - p0(0.0, y) * v(0.0, y), 0.0, l1, QUAD_TOL);
    let space_sides = integrate(|x| p1(x, l1) * v(x, l1) - p1(x, 0.0) * v(x, 0.0), 0.0, l0, QUAD_TOL);
    let boundary_exact = time_sides - space_sides;
    let rows = par::map(grids, |&n| -> Result<ConvergenceRow> {
        let c = CartesianComplex2D::new(n, n, l0 / (2 * n) as f64, l1 / (2 * n) as f64, Default::default())?;
        let sample = |f: Field2D| -> (Vec<f64>, Vec<f64>) {
            let atoms = (0..c.n_atoms()).map(|a| {
                let (x, y) = c.atom_center(a);
                f(x, y)
            });
            let faces = (0..c.n_faces()).map(|k| {
                let (x, y) = c.face_center(k);
                f(x, y)
            });
            (atoms.collect(), faces.collect())
        };
        let (a, f) = sample(phi);
        let hist = ScalarHistory::new(c.clone(), a, f)?;
        let (va, vf) = sample(v);
        let var = DVec::from_iterator(hist.len(), va.into_iter().chain(vf));
        let s = model.ds(&hist, &var);
        Ok(ConvergenceRow { scale: c.h.max(c.k), bulk: s.bulk, boundary: s.boundary })
    });
    Ok(ConvergenceTable { bulk_exact, boundary_exact, rows: rows.into_iter().collect::<Result<_>>()? })
}

/// Value of the fine action at the constrained extremum and the extremizer.
#[derive(Debug, Clone)]
pub struct Corrected<H> {
    pub value: f64,
    pub fine: H,
    /// Action of every distinct local minimum found; `value` is the least.
    pub minima: Vec<f64>,
}

/// Free fine variables: every fine point except those read by the decimation.
fn particle_free(pair: &ScalePair<TimeComplex>) -> Vec<usize> {
    (0..pair.fine.n_points()).filter(|p| p % pair.factor != 0).collect()
}

/// `S_Δ(Δ′)(φ)`: the fine action minimized over fine histories decimating to `coarse`.
/// Newton is started from the piecewise-linear interpolant and from two bumped
/// variants; stationary points whose free Hessian is not positive definite are
/// discarded.
pub fn corrected_action(
    pair: &ScalePair<TimeComplex>,
    coarse: &ParticleHistory,
    model: &ParticleModel,
    opts: &NewtonOpts,
) -> Result<Corrected<ParticleHistory>> {
    if coarse.complex != pair.coarse || coarse.dim() != model.dim() {
        return invalid("coarse history does not match the pair or the model");
    }
    let d = model.dim();
    let m = pair.factor;
    let free = particle_free(pair);
    let idx: Vec<usize> = free.iter().flat_map(|&p| (0..d).map(move |j| p * d + j)).collect();
    let start = |bump: f64| {
        let q = (0..pair.fine.n_points())
            .map(|p| {
                let (c0, r) = (p / m, p % m);
                if r == 0 {
                    return coarse.q[c0].clone();
                }
                let s = r as f64 / m as f64;
                &coarse.q[c0] * (1.0 - s) + &coarse.q[c0 + 1] * s
                    + DVec::from_element(d, bump * (std::f64::consts::PI * s).sin())
            })
            .collect();
        ParticleHistory { complex: pair.fine, q }
    };
    let residual = |h: &ParticleHistory| model.gradient(h).select_rows(&idx);
    let jacobian = |h: &ParticleHistory| model.hessian(h).select_rows(&idx).select_columns(&idx);
    let retract = |h: &ParticleHistory, dx: &DVec| {
        let mut out = h.clone();
        for (n, &p) in free.iter().enumerate() {
            for j in 0..d {
                out.q[p][j] += dx[n * d + j];
            }
        }
        out
    };
    let mut found: Vec<(ParticleHistory, f64)> = Vec::new();
    let mut last_err = None;
    let bumps: &[f64] = if m == 1 { &[0.0] } else { &[0.0, 1.0, -1.0] };
    for &b in bumps {
        match newton(start(b), residual, jacobian, retract, opts) {
            Ok((h, _)) => {
                if !idx.is_empty() && jacobian(&h).cholesky().is_none() {
                    continue;
                }
                let dup = found.iter().any(|(g, _)| {
                    g.q.iter().zip(&h.q).all(|(x, y)| (x - y).amax() <= 1e-8 * (1.0 + x.amax()))
                });
                if !dup {
                    let s = model.action(&h);
                    found.push((h, s));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    if found.is_empty() {
        return Err(last_err.unwrap_or_else(|| Error::BranchAmbiguity("no local minimum among stationary points".into())));
    }
    found.sort_by(|a, b| a.1.total_cmp(&b.1));
    let minima = found.iter().map(|x| x.1).collect();
    let (fine, value) = found.swap_remove(0);
    Ok(Corrected { value, fine, minima })
}

/// Corrected action of the decimated fine solution with ends `qa`, `qb`, for
/// each refinement factor over a fixed coarse complex.
pub fn corrected_tower(
    model: &ParticleModel,
    coarse: TimeComplex,
    qa: &DVec,
    qb: &DVec,
    factors: &[usize],
    opts: &NewtonOpts,
) -> Result<Vec<(f64, f64)>> {
    par::map(factors, |&m| -> Result<(f64, f64)> {
        let pair = ScalePair::<TimeComplex>::new(coarse, m)?;
        let (fine, _) = model.solve(pair.fine, qa, qb, opts)?;
        let c = corrected_action(&pair, &pair.decimate(&fine)?, model, opts)?;
        Ok((pair.fine.lapse, c.value))
    })
    .into_iter()
    .collect()
}

/// `S(T; q_a, q_b)` of `m q̇²/2 − k q²/2`.
pub fn harmonic_principal_function(mass: f64, k: f64, total: f64, qa: f64, qb: f64) -> f64 {
    let w = (k / mass).sqrt();
    let (s, c) = (w * total).sin_cos();
    mass * w / (2.0 * s) * ((qa * qa + qb * qb) * c - 2.0 * qa * qb)
}

/// Scalar analogue of [`corrected_action`]. The wave action is indefinite, so this
/// returns the stationary value over all fine atoms and faces not read by the
/// decimation, boundary faces included.
pub fn corrected_action_scalar(
    pair: &ScalePair<CartesianComplex2D>,
    coarse: &ScalarHistory,
    model: &WaveModel,
    opts: &NewtonOpts,
) -> Result<Corrected<ScalarHistory>> {
    if coarse.complex != pair.coarse {
        return invalid("coarse history does not match the pair");
    }
    let fine_c = &pair.fine;
    let na = fine_c.n_atoms();
    let mut pinned = vec![false; na + fine_c.n_faces()];
    let mut guess = ScalarHistory::constant(fine_c.clone(), 0.0);
    for a in 0..pair.coarse.n_atoms() {
        pinned[pair.atom(a)] = true;
    }
    for f in 0..pair.coarse.n_faces() {
        pinned[na + pair.face(f)] = true;
    }
    // Start from the nearest coarse value at every fine point.
    for a in 0..na {
        let (i, j) = fine_c.coords(a);
        guess.atoms[a] = coarse.atoms[pair.coarse.atom(i / pair.factor, j / pair.factor)];
    }
    for f in 0..fine_c.n_faces() {
        let (a, _) = fine_c.sharing(f)[0];
        guess.faces[f] = guess.atoms[a];
    }
    for a in 0..pair.coarse.n_atoms() {
        guess.atoms[pair.atom(a)] = coarse.atoms[a];
    }
    for f in 0..pair.coarse.n_faces() {
        guess.faces[pair.face(f)] = coarse.faces[f];
    }
    let idx: Vec<usize> = (0..pinned.len()).filter(|&i| !pinned[i]).collect();
    let residual = |h: &ScalarHistory| model.gradient(h).select_rows(&idx);
    let jacobian = |h: &ScalarHistory| model.hessian(h).select_rows(&idx).select_columns(&idx);
    let retract = |h: &ScalarHistory, dx: &DVec| {
        let mut out = h.clone();
        for (n, &k) in idx.iter().enumerate() {
            if k < na {
                out.atoms[k] += dx[n];
            } else {
                out.faces[k - na] += dx[n];
            }
        }
        out
    };
    let (fine, _) = newton(guess, residual, jacobian, retract, opts)?;
    let value = model.action(&fine);
    Ok(Corrected { value, fine, minima: vec![] })
}
