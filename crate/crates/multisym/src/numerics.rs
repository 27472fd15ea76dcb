//! Dense linear algebra, Newton iteration, finite differences and quadrature
//! shared by the models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par;

pub type DVec = DVector<f64>;
pub type DMat = DMatrix<f64>;

/// Fourth-order central difference step used for Jacobians of analytic residuals.
pub const JAC_STEP: f64 = 1e-3;

/// Jacobian column `j` is `d/dt f(j, t)` at `t = 0`, by the five-point stencil.
pub fn fd_jacobian<F>(n_out: usize, n_in: usize, h: f64, f: F) -> DMat
where
    F: Fn(usize, f64) -> DVec + Sync + Send,
{
    let cols = par::map_range(n_in, |j| {
        let p1 = f(j, h);
        let m1 = f(j, -h);
        let p2 = f(j, 2.0 * h);
        let m2 = f(j, -2.0 * h);
        (&m2 - &p2 + (&p1 - &m1) * 8.0) / (12.0 * h)
    });
    let mut jac = DMat::zeros(n_out, n_in);
    for (j, c) in cols.into_iter().enumerate() {
        jac.set_column(j, &c);
    }
    jac
}

/// [`fd_jacobian`] for residuals made of `d`-blocks where output block `i` only
/// reads input blocks `j` with `|i − j| ≤ w`. Input blocks are perturbed together in
/// `2w + 1` colour classes, so the cost does not grow with the number of blocks.
pub fn fd_jacobian_banded<F>(blocks: usize, d: usize, w: usize, h: f64, f: F) -> DMat
where
    F: Fn(&DVec) -> DVec + Sync + Send,
{
    let colours = 2 * w + 1;
    let n = blocks * d;
    let cols = par::map_range(colours * d, |ck| {
        let (c, k) = (ck / d, ck % d);
        let at = |t: f64| {
            let mut dx = DVec::zeros(n);
            for b in (c..blocks).step_by(colours) {
                dx[b * d + k] = t;
            }
            f(&dx)
        };
        (at(-2.0 * h) - at(2.0 * h) + (at(h) - at(-h)) * 8.0) / (12.0 * h)
    });
    let mut jac = DMat::zeros(n, n);
    for (ck, col) in cols.iter().enumerate() {
        let (c, k) = (ck / d, ck % d);
        for j in (c..blocks).step_by(colours) {
            for i in j.saturating_sub(w)..(j + w + 1).min(blocks) {
                for r in 0..d {
                    jac[(i * d + r, j * d + k)] = col[i * d + r];
                }
            }
        }
    }
    jac
}

/// Five-point derivative at 0, fourth order in `h`.
pub fn five_point(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(-2.0 * h) - f(2.0 * h) + 8.0 * (f(h) - f(-h))) / (12.0 * h)
}

/// Central difference `(f(h) - f(-h)) / 2h`.
pub fn central_diff(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

/// Minimum-norm least-squares solution of `a x = b`, dropping singular values
/// below `rcond * sigma_max`.
pub fn pinv_solve(a: &DMat, b: &DVec, rcond: f64) -> DVec {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = rcond * smax.max(f64::MIN_POSITIVE);
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut x = DVec::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let coef = u.column(k).dot(b) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    x
}

/// Column basis of the null space of `a` (singular values below `rcond * sigma_max`).
pub fn null_space(a: &DMat, rcond: f64) -> Vec<DVec> {
    let (m, n) = a.shape();
    let mut sq = DMat::zeros(m.max(n), n);
    sq.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = sq.svd(false, true);
    let smax = svd.singular_values.max();
    let cut = rcond * smax.max(f64::MIN_POSITIVE);
    let vt = svd.v_t.expect("svd v_t");
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(k, _)| vt.row(k).transpose())
        .collect()
}

pub fn rank(a: &DMat, rcond: f64) -> usize {
    let s = a.clone().singular_values();
    let smax = s.max();
    s.iter().filter(|&&x| x > rcond * smax).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearSolve {
    Lu,
    /// SVD pseudo-inverse; steps are orthogonal to the Jacobian's null space.
    Pinv,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOpts {
    pub tol: f64,
    pub max_iter: usize,
    pub linear: LinearSolve,
    pub rcond: f64,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol: 1e-12, max_iter: 60, linear: LinearSolve::Lu, rcond: 1e-10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

pub fn inf_norm(v: &DVec) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton with backtracking on the residual norm. The state lives on a
/// manifold reached through `retract`; `jacobian` is taken in the same chart.
pub fn newton<S, R, J, T>(
    mut state: S,
    residual: R,
    jacobian: J,
    retract: T,
    opts: &NewtonOpts,
) -> Result<(S, NewtonReport)>
where
    R: Fn(&S) -> DVec,
    J: Fn(&S) -> DMat,
    T: Fn(&S, &DVec) -> S,
{
    let mut f = residual(&state);
    let mut norm = inf_norm(&f);
    let mut report = NewtonReport { iterations: 0, residual: norm, history: vec![norm] };
    while norm > opts.tol {
        if report.iterations >= opts.max_iter {
            return Err(Error::SolverFailure { iterations: report.iterations, residual: norm });
        }
        let jac = jacobian(&state);
        let rhs = -&f;
        let dx = match opts.linear {
            LinearSolve::Lu => match jac.clone().lu().solve(&rhs) {
                Some(x) if x.iter().all(|v| v.is_finite()) => x,
                _ => pinv_solve(&jac, &rhs, opts.rcond),
            },
            LinearSolve::Pinv => pinv_solve(&jac, &rhs, opts.rcond),
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = retract(&state, &(&dx * t));
            let ft = residual(&trial);
            let nt = inf_norm(&ft);
            if nt.is_finite() && (nt < norm || nt <= opts.tol) {
                accepted = Some((trial, ft, nt));
                break;
            }
            t *= 0.5;
        }
        report.iterations += 1;
        match accepted {
            Some((s, ft, nt)) => {
                state = s;
                f = ft;
                norm = nt;
                report.history.push(norm);
            }
            None => {
                return Err(Error::SolverFailure { iterations: report.iterations, residual: norm })
            }
        }
    }
    report.residual = norm;
    Ok((state, report))
}

/// Least-squares slope of `log err` against `log h`.
pub fn fit_order(h: &[f64], err: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = h
        .iter()
        .zip(err)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&a, &e)| (a.ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss-Legendre on [a, b], doubling panels until two successive
/// estimates agree to `tol` (relative to the magnitude).
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (x, w) = gauss_legendre(8);
    let rule = |panels: usize| -> f64 {
        let hw = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let c = a + hw * (p as f64 + 0.5);
                x.iter().zip(&w).map(|(xi, wi)| wi * f(c + 0.5 * hw * xi)).sum::<f64>() * 0.5 * hw
            })
            .sum()
    };
    let mut panels = 1;
    let mut prev = rule(panels);
    loop {
        panels *= 2;
        let cur = rule(panels);
        if (cur - prev).abs() <= tol * cur.abs().max(1.0) || panels > 1 << 14 {
            return cur;
        }
        prev = cur;
    }
}

/// Tensor-product version of [`integrate`] on a rectangle.
pub fn integrate_2d(f: impl Fn(f64, f64) -> f64, x: (f64, f64), y: (f64, f64), tol: f64) -> f64 {
    integrate(|s| integrate(|t| f(s, t), y.0, y.1, tol), x.0, x.1, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_jacobian_matches_dense() {
        let (blocks, d) = (7, 2);
        let x0 = DVec::from_fn(blocks * d, |i, _| (i as f64 * 0.7).sin());
        let f = |dx: &DVec| {
            let x = &x0 + dx;
            DVec::from_fn(blocks * d, |i, _| {
                let (b, r) = (i / d, i % d);
                let mut s = x[i].powi(3);
                if b > 0 {
                    s += (x[(b - 1) * d + (1 - r)] * x[i]).sin();
                }
                if b + 1 < blocks {
                    s -= x[(b + 1) * d + r].exp();
                }
                s
            })
        };
        let dense = fd_jacobian(blocks * d, blocks * d, JAC_STEP, |j, t| {
            let mut dx = DVec::zeros(blocks * d);
            dx[j] = t;
            f(&dx)
        });
        let banded = fd_jacobian_banded(blocks, d, 1, JAC_STEP, f);
        assert!((dense - banded).amax() < 1e-13);
    }

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integrate_sine() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-14);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn fd_jacobian_of_quadratic_is_exact() {
        let a = DMat::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let f = |j: usize, t: f64| {
            let mut x = DVec::from_vec(vec![0.3, -0.2]);
            x[j] += t;
            DVec::from_vec(vec![(&a * &x)[0].powi(2), (&a * &x)[1]])
        };
        let jac = fd_jacobian(2, 2, 1e-3, f);
        let x = DVec::from_vec(vec![0.3, -0.2]);
        let y0 = (&a * &x)[0];
        assert!((jac[(0, 0)] - 2.0 * y0 * 1.0).abs() < 1e-12);
        assert!((jac[(0, 1)] - 2.0 * y0 * 2.0).abs() < 1e-12);
        assert!((jac[(1, 1)] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let a = DMat::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let ns = null_space(&a, 1e-12);
        assert_eq!(ns.len(), 1);
        assert!((&a * &ns[0]).norm() < 1e-14);
    }

    #[test]
    fn newton_scalar_root() {
        let (x, rep) = newton(
            DVec::from_vec(vec![1.0]),
            |x| DVec::from_vec(vec![x[0] * x[0] - 2.0]),
            |x| DMat::from_element(1, 1, 2.0 * x[0]),
            |x, d| x + d,
            &NewtonOpts::default(),
        )
        .unwrap();
        assert!((x[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!(rep.iterations < 10);
    }

    #[test]
    fn order_fit_recovers_slope() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_order(&h, &e) - 2.0).abs() < 1e-12);
    }
}
