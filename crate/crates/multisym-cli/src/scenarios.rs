//! One function per subcommand. Each returns the CSV files and the summary
//! fields; nothing touches the disk here.

use std::f64::consts::PI;

use multisym::bfmod::{flat_solution, random_b, BFHistory, BFModel};
use multisym::canonical::{pullback_check_group, pullback_check_scalar, PullbackReport};
use multisym::coarse::{self, corrected_tower, harmonic_principal_function, ConvergenceTable};
use multisym::complex::{BoundarySpec, CartesianComplex2D, ComplexSpec, CubicalComplexND, FaceLabel, Sign, TimeComplex};
use multisym::error::{Error, Result};
use multisym::gauge::{GaugeHistory, GaugeModel, GaugeTransform};
use multisym::liegroup::{self, Lie};
use multisym::mech1d::{ParticleModel, Potential, RigidModel};
use multisym::numerics::{fit_order, inf_norm, DVec, NewtonOpts};
use multisym::scalar2d::{InitialData, ScalarHistory, WaveModel};
use multisym::variational::Variational;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::config::*;

pub struct Output {
    pub files: Vec<(String, String)>,
    pub summary: Map<String, Value>,
}

pub struct Ctx {
    pub seed: u64,
    pub opts: NewtonOpts,
}

impl Ctx {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// 17 significant digits.
fn real(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref())).expect("in-memory write");
        Table { w }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.w.write_record(&cells).expect("in-memory write");
    }

    fn finish(self) -> String {
        String::from_utf8(self.w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

fn summary(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn time_complex(spec: &ComplexSpec) -> Result<TimeComplex> {
    match *spec {
        ComplexSpec::Time { n_atoms, lapse } => TimeComplex::new(n_atoms, lapse),
        _ => Err(Error::InvalidArgument("mech needs a time complex".into())),
    }
}

fn cubical(spec: &ComplexSpec) -> Result<CubicalComplexND> {
    match spec {
        ComplexSpec::Cubical { dims } => CubicalComplexND::new(dims),
        _ => Err(Error::InvalidArgument("a cubical complex is required".into())),
    }
}

pub fn mech(cfg: &MechConfig, ctx: &Ctx) -> Result<Output> {
    let c = time_complex(&cfg.complex)?;
    match &cfg.system {
        MechSystem::Particle { mass, potential, q_start, q_end, xi } => {
            let d = q_start.len();
            let m = ParticleModel::new(*mass, d, potential.clone())?;
            let xi = match xi {
                Some(x) if x.len() == d => DVec::from_column_slice(x),
                Some(_) => return Err(Error::InvalidArgument("xi must match the dimension".into())),
                None => DVec::from_fn(d, |i, _| (i == 0) as u8 as f64),
            };
            let (h, rep) = m.solve(c, &DVec::from_column_slice(q_start), &DVec::from_column_slice(q_end), &ctx.opts)?;
            let mut header = vec!["atom".to_string(), "t".to_string()];
            header.extend((0..d).map(|j| format!("q_{j}")));
            header.extend(["j_minus".to_string(), "j_plus".to_string()]);
            let mut t = Table::new(&header);
            for i in 0..c.n_atoms {
                let mut row = vec![i.to_string(), real(c.time(c.center(i)))];
                row.extend(h.q[c.center(i)].iter().map(|&x| real(x)));
                row.push(real(m.theta_minus(&h, i).dot(&xi)));
                row.push(real(m.theta_plus(&h, i).dot(&xi)));
                t.row(row);
            }
            Ok(Output {
                files: vec![("mech.csv".into(), t.finish())],
                summary: summary(vec![
                    ("system", json!("particle")),
                    ("action", json!(m.action(&h))),
                    ("max_residual", json!(m.max_residual(&h))),
                    ("iterations", json!(rep.iterations)),
                    ("conserved", json!(*potential == Potential::Zero)),
                ]),
            })
        }
        MechSystem::Rigid { inertia, rotation } => {
            let lie = Lie::so(3);
            let m = RigidModel::new(lie.clone(), inertia.clone())?;
            if rotation.len() != 3 {
                return Err(Error::InvalidArgument("rotation needs three components".into()));
            }
            let sol = m.solve(c, &lie.identity(), &lie.exp(rotation), &ctx.opts)?;
            let h = &sol.history;
            let mut t = Table::new(&["segment", "t", "m_0", "m_1", "m_2"]);
            for p in 0..h.e.len() {
                let mut row = vec![p.to_string(), real((p as f64 + 0.5) * c.lapse)];
                row.extend(m.space_momentum(h, p).into_iter().map(real));
                t.row(row);
            }
            Ok(Output {
                files: vec![("mech.csv".into(), t.finish())],
                summary: summary(vec![
                    ("system", json!("rigid")),
                    ("action", json!(m.action(h))),
                    ("max_residual", json!(m.max_residual(h))),
                    ("iterations", json!(sol.report.iterations)),
                    ("branches", json!(sol.branches.len())),
                ]),
            })
        }
    }
}

pub fn wave(cfg: &WaveConfig, ctx: &Ctx) -> Result<Output> {
    let m = WaveModel::new(cfg.nonlinearity)?;
    let (n1, h, k, steps) = (cfg.n1, cfg.h, cfg.k, cfg.steps);
    if n1 == 0 || steps == 0 {
        return Err(Error::InvalidArgument("n1 and steps must be positive".into()));
    }
    let len = 2.0 * n1 as f64 * k;
    let data = match cfg.initial {
        WaveInitial::PlaneWave { amp, wavenumber } => {
            let f = |t: f64, x: f64| amp * (wavenumber * (x - t)).sin();
            InitialData {
                sigma: (0..n1).map(|j| f(0.0, (2 * j + 1) as f64 * k)).collect(),
                past: (0..n1).map(|j| f(h, (2 * j + 1) as f64 * k)).collect(),
                left: (0..steps).map(|i| f((2 * i + 1) as f64 * h, 0.0)).collect(),
                right: (0..steps).map(|i| f((2 * i + 1) as f64 * h, len)).collect(),
            }
        }
        WaveInitial::Random { amp } => {
            let mut rng = ctx.rng();
            let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-amp..=amp)).collect::<Vec<f64>>();
            InitialData { sigma: draw(n1), past: draw(n1), left: draw(steps), right: draw(steps) }
        }
    };
    let hist = m.evolve(n1, h, k, &data, steps)?;
    let c = &hist.complex;
    let mut t = Table::new(&["step", "t", "interior_residual", "gluing_residual"]);
    let mut worst: f64 = 0.0;
    for i in 0..steps {
        let mut ri: f64 = 0.0;
        let mut rg: f64 = 0.0;
        for j in 0..n1 {
            let a = c.atom(i, j);
            ri = ri.max(m.interior_residual(&hist, a).abs());
            for l in [FaceLabel { axis: 0, sign: Sign::Minus }, FaceLabel { axis: 1, sign: Sign::Plus }] {
                let f = c.face(a, l);
                if c.face_info(f).is_interior() {
                    rg = rg.max(m.gluing_residual(&hist, f)?.abs());
                }
            }
        }
        worst = worst.max(ri).max(rg);
        t.row(vec![i.to_string(), real((2 * i + 1) as f64 * h), real(ri), real(rg)]);
    }
    Ok(Output {
        files: vec![("wave.csv".into(), t.finish())],
        summary: summary(vec![
            ("action", json!(m.action(&hist))),
            ("max_residual", json!(worst)),
            ("atoms", json!(c.n_atoms())),
        ]),
    })
}

pub fn lgt(cfg: &LgtConfig, ctx: &Ctx) -> Result<Output> {
    let lie = Lie::new(cfg.group)?;
    let m = GaugeModel::new(lie.clone(), cfg.beta)?;
    let c = cubical(&cfg.complex)?;
    let mut rng = ctx.rng();
    let mut guess = GaugeHistory::identity(c.clone(), &lie);
    for r in c.boundary_rlinks() {
        guess.k[r] = lie.random_element(&mut rng, cfg.boundary_radius);
    }
    let (sol, rep) = m.solve(guess, &ctx.opts)?;
    let mut t = Table::new(&["face", "interior", "constraint"]);
    let mut worst: f64 = 0.0;
    for f in 0..c.n_faces() {
        let g = liegroup::norm(&m.gauge_constraint(&sol, f));
        worst = worst.max(g);
        t.row(vec![f.to_string(), (c.face_is_interior(f) as u8).to_string(), real(g)]);
    }
    Ok(Output {
        files: vec![("lgt.csv".into(), t.finish())],
        summary: summary(vec![
            ("action", json!(m.action(&sol))),
            ("max_residual", json!(m.max_residual(&sol))),
            ("max_constraint", json!(worst)),
            ("iterations", json!(rep.iterations)),
        ]),
    })
}

pub fn bf(cfg: &BfConfig, ctx: &Ctx) -> Result<Output> {
    let lie = Lie::new(cfg.group)?;
    let c = cubical(&cfg.complex)?;
    let m = BFModel::new(lie.clone(), cfg.phi.clone())?;
    let mut rng = ctx.rng();
    let g = GaugeTransform::random(&c, &lie, &mut rng, cfg.gauge_radius);
    let flat = flat_solution(&lie, c.clone(), &g, &random_b(&lie, c.n(), &mut rng, cfg.b_radius));
    let mut guess = BFHistory::zero(c.clone(), &lie, &m.phi);
    guess.gauge = flat.gauge;
    guess.e = flat.e;
    let mut v = DVec::zeros(m.tangent_dim(&guess));
    for k in m.bulk_rows(&guess) {
        v[k] = rng.gen_range(-cfg.perturbation..=cfg.perturbation);
    }
    let (sol, rep) = m.solve(m.retract(&guess, &v), &ctx.opts)?;
    let mut t = Table::new(&["atom", "lagrangian"]);
    for a in 0..c.n_atoms() {
        t.row(vec![a.to_string(), real(m.atom_lagrangian(&sol, a))]);
    }
    let r = m.residuals(&sol);
    Ok(Output {
        files: vec![("bf.csv".into(), t.finish())],
        summary: summary(vec![
            ("action", json!(m.action(&sol))),
            ("max_residual", json!(r.max())),
            ("gluing_residual", json!(r.gluing)),
            ("iterations", json!(rep.iterations)),
        ]),
    })
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVec {
    DVec::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn canonical(cfg: &CanonicalConfig, ctx: &Ctx) -> Result<Output> {
    if cfg.configs == 0 {
        return Err(Error::InvalidArgument("configs must be positive".into()));
    }
    let mut rng = ctx.rng();
    let mut reports: Vec<PullbackReport> = Vec::new();
    match &cfg.family {
        CanonicalFamily::Scalar { nonlinearity, n0, n1, h, k } => {
            let m = WaveModel::new(*nonlinearity)?;
            let c = CartesianComplex2D::new(*n0, *n1, *h, *k, BoundarySpec::Fixed)?;
            for _ in 0..cfg.configs {
                let na = c.n_atoms();
                let nf = c.n_faces();
                let hist = ScalarHistory::new(
                    c.clone(),
                    (0..na).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    (0..nf).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )?;
                let (v, w) = (random_vec(&mut rng, hist.len()), random_vec(&mut rng, hist.len()));
                reports.push(pullback_check_scalar(&m, &hist, &v, &w));
            }
        }
        CanonicalFamily::Gauge { group, beta, dims, radius } => {
            let lie = Lie::new(*group)?;
            let m = GaugeModel::new(lie.clone(), *beta)?;
            let c = CubicalComplexND::new(dims)?;
            for _ in 0..cfg.configs {
                let a = GaugeHistory::random(c.clone(), &lie, &mut rng, *radius);
                let n = m.tangent_dim(&a);
                let (v, w) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
                reports.push(pullback_check_group(&m, &a, &v, &w));
            }
        }
        CanonicalFamily::Bf { group, phi, dims, radius } => {
            let lie = Lie::new(*group)?;
            let m = BFModel::new(lie.clone(), phi.clone())?;
            let c = CubicalComplexND::new(dims)?;
            for _ in 0..cfg.configs {
                let mut a = BFHistory::zero(c.clone(), &lie, &m.phi);
                a.gauge = GaugeHistory::random(c.clone(), &lie, &mut rng, *radius);
                a.e.iter_mut().for_each(|e| *e = lie.random_algebra(&mut rng, 1.0));
                let n = m.tangent_dim(&a);
                let (v, w) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
                reports.push(pullback_check_group(&m, &a, &v, &w));
            }
        }
    }
    let mut t = Table::new(&["config", "theta_hat", "theta", "omega_hat", "omega"]);
    for (i, r) in reports.iter().enumerate() {
        t.row(vec![i.to_string(), real(r.theta_hat), real(r.theta), real(r.omega_hat), real(r.omega)]);
    }
    let worst = reports.iter().map(|r| r.max()).fold(0.0, f64::max);
    Ok(Output {
        files: vec![("canonical.csv".into(), t.finish())],
        summary: summary(vec![("configs", json!(reports.len())), ("max_defect", json!(worst))]),
    })
}

fn order_json(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(if x > 0.0 { "exact" } else { "undefined" })
    }
}

fn order_cell(x: f64) -> String {
    if x.is_finite() {
        real(x)
    } else if x > 0.0 {
        "inf".into()
    } else {
        "nan".into()
    }
}

fn convergence_output(t: &ConvergenceTable) -> Output {
    let (bo, so) = (t.bulk_order(), t.boundary_order());
    let mut tab = Table::new(&["scale", "bulk_defect", "boundary_defect", "bulk_order", "boundary_order"]);
    for ((r, be), se) in t.rows.iter().zip(t.bulk_errors()).zip(t.boundary_errors()) {
        tab.row(vec![real(r.scale), real(be), real(se), order_cell(bo), order_cell(so)]);
    }
    Output {
        files: vec![("converge.csv".into(), tab.finish())],
        summary: summary(vec![
            ("bulk_exact", json!(t.bulk_exact)),
            ("boundary_exact", json!(t.boundary_exact)),
            ("bulk_order", order_json(bo)),
            ("boundary_order", order_json(so)),
            ("max_error", json!(t.max_error())),
        ]),
    }
}

pub fn converge(cfg: &ConvergeConfig, ctx: &Ctx) -> Result<Output> {
    if cfg.scales.len() < 2 || cfg.scales.contains(&0) {
        return Err(Error::InvalidArgument("need at least two positive scales".into()));
    }
    match &cfg.scenario {
        ConvergeScenario::Particle { mass, duration, section } => {
            let m = ParticleModel::new(*mass, 1, Potential::Zero)?;
            let v = |t: f64| DVec::from_element(1, t.sin());
            let t = match section {
                ParticleSection::Linear => {
                    coarse::particle_convergence(&m, *duration, &|t| DVec::from_element(1, t), &v, &cfg.scales)?
                }
                ParticleSection::Curved => coarse::particle_convergence(
                    &m,
                    *duration,
                    &|t| DVec::from_element(1, t.cos() + 0.5 * t * t),
                    &v,
                    &cfg.scales,
                )?,
            };
            Ok(convergence_output(&t))
        }
        ConvergeScenario::Rigid { inertia, duration, section } => {
            let lie = Lie::so(3);
            let m = RigidModel::new(lie.clone(), inertia.clone())?;
            let xi = |t: f64| vec![t.cos(), 0.5 * t, 1.0 - t];
            let t = match section {
                RigidSection::Steady => {
                    coarse::rigid_convergence(&m, *duration, &|t| lie.exp(&[0.0, 0.3 * t, 0.0]), &xi, &cfg.scales)?
                }
                RigidSection::Generic => coarse::rigid_convergence(
                    &m,
                    *duration,
                    &|t| lie.exp(&[0.1 * t, 0.05 * t * t, 0.0]) * lie.exp(&[0.0, 0.0, 0.08 * t.sin()]),
                    &xi,
                    &cfg.scales,
                )?,
            };
            Ok(convergence_output(&t))
        }
        ConvergeScenario::Wave { nonlinearity, section } => {
            let m = WaveModel::new(*nonlinearity)?;
            let t = match section {
                WaveSection::Sine => coarse::wave_convergence(
                    &m,
                    (PI, PI),
                    &|x, y| x.sin() * y.sin(),
                    &|x, y| (0.3 * x).cos() + 0.2 * y,
                    &cfg.scales,
                )?,
                WaveSection::Constant => {
                    coarse::wave_convergence(&m, (1.0, 1.0), &|_, _| 0.4, &|_, _| 1.5, &cfg.scales)?
                }
            };
            Ok(convergence_output(&t))
        }
        ConvergeScenario::Corrected { mass, k, duration, q_start, q_end } => {
            let pot = if *k == 0.0 { Potential::Zero } else { Potential::Harmonic { k: *k } };
            let m = ParticleModel::new(*mass, 1, pot)?;
            let c = TimeComplex::new(1, duration / 2.0)?;
            let rows = corrected_tower(
                &m,
                c,
                &DVec::from_element(1, *q_start),
                &DVec::from_element(1, *q_end),
                &cfg.scales,
                &ctx.opts,
            )?;
            let exact = if *k == 0.0 {
                mass * (q_end - q_start).powi(2) / (2.0 * duration)
            } else {
                harmonic_principal_function(*mass, *k, *duration, *q_start, *q_end)
            };
            let err: Vec<f64> = rows.iter().map(|r| (r.1 - exact).abs()).collect();
            let scales: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let floor = 1e-12 * (1.0 + exact.abs());
            let order =
                if err.iter().all(|&e| e <= floor) { f64::INFINITY } else { fit_order(&scales, &err) };
            let mut tab = Table::new(&["factor", "scale", "corrected_action", "error", "order"]);
            for ((f, r), e) in cfg.scales.iter().zip(&rows).zip(&err) {
                tab.row(vec![f.to_string(), real(r.0), real(r.1), real(*e), order_cell(order)]);
            }
            let worst = inf_norm(&DVec::from_vec(err));
            Ok(Output {
                files: vec![("converge.csv".into(), tab.finish())],
                summary: summary(vec![
                    ("principal_function", json!(exact)),
                    ("order", order_json(order)),
                    ("max_error", json!(worst)),
                ]),
            })
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => 2,
        Error::SolverFailure { .. } | Error::NotASolution(_) => 3,
        Error::BranchAmbiguity(_) => 4,
    }
}
