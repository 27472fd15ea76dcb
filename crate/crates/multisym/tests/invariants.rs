//! Property tests for the structural invariants of each module.

use multisym::bfmod::{BFHistory, BFModel, PhiTerm, SgnEntry, WedgeSlots};
use multisym::canonical::scalar_measure;
use multisym::coarse::{Decimate, ScalePair};
use multisym::complex::{local_face_parts, BoundarySpec, CartesianComplex2D, CubicalComplexND, FaceLabel, Sign, TimeComplex};
use multisym::gauge::{GaugeHistory, GaugeModel, GaugeTransform};
use multisym::liegroup::{self, Lie};
use multisym::mech1d::{ParticleHistory, ParticleModel, Potential, RigidHistory, RigidModel};
use multisym::numerics::{DVec, NewtonOpts};
use multisym::scalar2d::{InitialData, Nonlinearity, ScalarHistory, WaveModel};
use multisym::variational::{fd_ds, Variational};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lab(axis: usize, sign: Sign) -> FaceLabel {
    FaceLabel { axis, sign }
}

fn random_scalar(c: &CartesianComplex2D, r: &mut ChaCha8Rng) -> ScalarHistory {
    ScalarHistory::new(
        c.clone(),
        (0..c.n_atoms()).map(|_| r.gen_range(-1.0..1.0)).collect(),
        (0..c.n_faces()).map(|_| r.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn nonlinearity() -> impl Strategy<Value = Nonlinearity> {
    prop_oneof![
        Just(Nonlinearity::None),
        (-3.0..3.0f64).prop_map(|c| Nonlinearity::Quadratic { c }),
        (-3.0..3.0f64).prop_map(|lambda| Nonlinearity::Cubic { lambda }),
        (-3.0..3.0f64).prop_map(|amp| Nonlinearity::Cosine { amp }),
    ]
}

fn potential() -> impl Strategy<Value = Potential> {
    prop_oneof![
        Just(Potential::Zero),
        (-3.0..3.0f64).prop_map(|k| Potential::Harmonic { k }),
        (-3.0..3.0f64, 0.0..2.0f64).prop_map(|(k, lambda)| Potential::Quartic { k, lambda }),
        (-3.0..3.0f64).prop_map(|amp| Potential::Cosine { amp }),
    ]
}

fn cube_dims() -> impl Strategy<Value = Vec<usize>> {
    prop_oneof![prop::collection::vec(1..4usize, 2), prop::collection::vec(1..3usize, 3)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cartesian_sharing_and_counts(n0 in 1..7usize, n1 in 1..7usize) {
        let c = CartesianComplex2D::new(n0, n1, 0.1, 0.2, BoundarySpec::Fixed).unwrap();
        for f in c.interior_faces() {
            let sh = c.sharing(f);
            prop_assert_eq!(sh.len(), 2);
            prop_assert_eq!(sh[0].1.axis, sh[1].1.axis);
            prop_assert_ne!(sh[0].1.sign, sh[1].1.sign);
            for (a, l) in sh {
                prop_assert!(c.atom_faces(a).contains(&f));
                prop_assert_eq!(c.face(a, l), f);
            }
        }
        prop_assert_eq!(c.interior_faces().len(), n1 * (n0 - 1) + n0 * (n1 - 1));
        prop_assert_eq!(c.boundary_faces().len(), 2 * (n0 + n1));
        prop_assert_eq!(c.n_points(), c.n_atoms() + c.n_faces());
    }

    #[test]
    fn cubical_incidence_and_closed_wedges(dims in cube_dims()) {
        let c = CubicalComplexND::new(&dims).unwrap();
        for f in 0..c.n_faces() {
            let atoms = c.face_atoms(f);
            prop_assert_eq!(atoms.len(), if c.face_is_interior(f) { 2 } else { 1 });
            let mut labels = vec![];
            for &a in atoms {
                let lf = (0..2 * c.n()).find(|&lf| c.atom_face(a, lf) == f);
                prop_assert!(lf.is_some());
                labels.push(local_face_parts(lf.unwrap()));
            }
            if labels.len() == 2 {
                prop_assert_eq!(labels[0].0, labels[1].0);
                prop_assert_ne!(labels[0].1, labels[1].1);
            }
        }
        for w in c.wedges() {
            // ∂s = l₂⁻¹ r₂⁻¹ r₁ l₁ leaves Cν through τ₁, meets r₂ at σ and returns through τ₂.
            let (a1, lf1) = c.link_parts(w.l1);
            let (a2, lf2) = c.link_parts(w.l2);
            prop_assert_eq!(a1, w.atom);
            prop_assert_eq!(a2, w.atom);
            prop_assert_eq!(c.atom_face(w.atom, lf1), c.rlink(w.r1).face);
            prop_assert_eq!(c.atom_face(w.atom, lf2), c.rlink(w.r2).face);
            prop_assert_eq!(c.rlink(w.r1).sigma, c.rlink(w.r2).sigma);
        }
    }

    #[test]
    fn time_points_are_shared_between_neighbours(n in 1..40usize, lapse in 0.01..2.0f64) {
        let c = TimeComplex::new(n, lapse).unwrap();
        for i in 0..n - 1 {
            prop_assert_eq!(c.plus(i), c.minus(i + 1));
        }
        prop_assert!((c.time(c.plus(n - 1)) - c.total_time()).abs() <= 1e-12 * c.total_time());
    }

    #[test]
    fn theta_is_additive_to_first_order(seed in any::<u64>(), r in 1e-4..0.3f64, su2 in any::<bool>()) {
        let lie = if su2 { Lie::su2() } else { Lie::so(3) };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = (lie.random_algebra(&mut rng, r), lie.random_algebra(&mut rng, r));
        let lhs = lie.theta(&(lie.exp(&x) * lie.exp(&y)));
        let rhs = liegroup::add(&lie.theta(&lie.exp(&x)), &lie.theta(&lie.exp(&y)));
        let bound = 2.0 * liegroup::norm(&x) * liegroup::norm(&y) + 1e-15;
        for (a, b) in lhs.iter().zip(&rhs) {
            prop_assert!((a - b).abs() <= bound, "{} vs {}", (a - b).abs(), bound);
        }
    }

    #[test]
    fn particle_gluing_and_forms_ignore_the_potential(seed in any::<u64>(), p in potential()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let c = TimeComplex::new(4, 0.2).unwrap();
        let h = ParticleHistory::new(c, (0..c.n_points()).map(|_| DVec::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).collect()).unwrap();
        let nt = c.n_points() * 2;
        let v = DVec::from_fn(nt, |_, _| r.gen_range(-1.0..1.0));
        let w = DVec::from_fn(nt, |_, _| r.gen_range(-1.0..1.0));
        let eval = |m: &ParticleModel| {
            let mut out = vec![];
            for i in 0..4 {
                if i < 3 {
                    out.extend(m.gluing_residual(&h, i).iter());
                }
                out.extend(m.theta_minus(&h, i).iter());
                out.extend(m.theta_plus(&h, i).iter());
                out.push(m.omega_minus(&h, i, &v, &w));
                out.push(m.omega_plus(&h, i, &v, &w));
            }
            bits(&out)
        };
        let free = ParticleModel::new(0.7, 2, Potential::Zero).unwrap();
        let m = ParticleModel::new(0.7, 2, p).unwrap();
        prop_assert_eq!(eval(&free), eval(&m));
    }

    #[test]
    fn ds_matches_finite_differences(seed in any::<u64>(), p in potential(), n in nonlinearity()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let pm = ParticleModel::new(1.1, 2, p).unwrap();
        let c = TimeComplex::new(3, 0.25).unwrap();
        let h = ParticleHistory::new(c, (0..c.n_points()).map(|_| DVec::from_fn(2, |_, _| r.gen_range(-1.0..1.0))).collect()).unwrap();
        let v = DVec::from_fn(pm.tangent_dim(&h), |_, _| r.gen_range(-1.0..1.0));
        let ds = pm.ds(&h, &v);
        prop_assert!((ds.total() - fd_ds(&pm, &h, &v, 1e-4)).abs() <= 100.0 * 1e-8 + 1e-10);
        let wm = WaveModel::new(n).unwrap();
        let sc = CartesianComplex2D::new(2, 3, 0.2, 0.3, BoundarySpec::Fixed).unwrap();
        let sh = random_scalar(&sc, &mut r);
        let v = DVec::from_fn(sh.len(), |_, _| r.gen_range(-1.0..1.0));
        let split = wm.ds(&sh, &v);
        prop_assert!((split.bulk + split.boundary - fd_ds(&wm, &sh, &v, 1e-4)).abs() <= 100.0 * 1e-8 + 1e-10);
    }

    #[test]
    fn rigid_body_momentum_identities(seed in any::<u64>(), n in 1..5usize) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = RigidModel::new(Lie::so(3), vec![0.7, 1.3, 2.2]).unwrap();
        let c = TimeComplex::new(n, 0.15).unwrap();
        let h = RigidHistory {
            complex: c,
            q: (0..c.n_points()).map(|_| m.lie.random_element(&mut r, 2.0)).collect(),
            e: (0..2 * n).map(|_| m.lie.random_algebra(&mut r, 1.0)).collect(),
        };
        for i in 0..n {
            let [um, wm, wp, up] = m.body_momenta(&h, i);
            let (pm, pp) = (m.displacement(&h, 2 * i), m.displacement(&h, 2 * i + 1));
            let wm2 = m.lie.coeffs(&(pm.adjoint() * m.lie.matrix(&um) * &pm));
            let up2 = m.lie.coeffs(&(pp.adjoint() * m.lie.matrix(&wp) * &pp));
            for j in 0..3 {
                prop_assert!((wm[j] - wm2[j]).abs() <= 1e-12);
                prop_assert!((up[j] - up2[j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn wave_gluing_and_forms_ignore_the_nonlinearity(seed in any::<u64>(), n in nonlinearity()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let c = CartesianComplex2D::new(3, 3, 0.2, 0.25, BoundarySpec::Fixed).unwrap();
        let h = random_scalar(&c, &mut r);
        let v = DVec::from_fn(h.len(), |_, _| r.gen_range(-1.0..1.0));
        let w = DVec::from_fn(h.len(), |_, _| r.gen_range(-1.0..1.0));
        let eval = |m: &WaveModel| {
            let mut out: Vec<f64> = c.interior_faces().into_iter().map(|f| m.gluing_residual(&h, f).unwrap()).collect();
            for a in 0..c.n_atoms() {
                for l in [lab(0, Sign::Minus), lab(0, Sign::Plus), lab(1, Sign::Minus), lab(1, Sign::Plus)] {
                    out.push(m.cartan_form(&h, a, l, &v));
                    out.push(m.omega(&h, a, l, &v, &w));
                }
            }
            bits(&out)
        };
        prop_assert_eq!(eval(&WaveModel::new(Nonlinearity::None).unwrap()), eval(&WaveModel::new(n).unwrap()));
    }

    #[test]
    fn scalar_measure_with_unit_weight_is_the_action(seed in any::<u64>(), n in nonlinearity()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = WaveModel::new(n).unwrap();
        let c = CartesianComplex2D::new(3, 2, 0.1, 0.15, BoundarySpec::Fixed).unwrap();
        let h = random_scalar(&c, &mut r);
        prop_assert!((scalar_measure(&m, &h, |_| 1.0) - m.action(&h)).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn long_products_stay_in_the_group(seed in any::<u64>(), su2 in any::<bool>()) {
        let lie = if su2 { Lie::su2() } else { Lie::so(3) };
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let gs: Vec<_> = (0..10_000).map(|_| lie.random_element(&mut r, 1.0)).collect();
        prop_assert!(lie.is_member(&lie.chain_product(&gs, None), 1e-11));
        prop_assert!(lie.is_member(&lie.chain_product(&gs, Some(256)), 1e-11));
        let g = lie.chain_product(&gs[..100], None);
        prop_assert!(lie.is_member(&(lie.inv(&g) * &g), 1e-11));
    }

    #[test]
    fn evolving_restricted_newton_solution_reproduces_it(seed in any::<u64>(), n0 in 2..5usize, n1 in 2..5usize) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = WaveModel::new(Nonlinearity::None).unwrap();
        let (h, k) = (0.05, 0.08);
        let c = CartesianComplex2D::new(n0, n1, h, k, BoundarySpec::Fixed).unwrap();
        let mut g = ScalarHistory::constant(c.clone(), 0.0);
        for f in c.boundary_faces() {
            g.faces[f] = r.gen_range(-1.0..1.0);
        }
        let (sol, _) = m.solve_bvp(g, &NewtonOpts::default()).unwrap();
        let bottom = |j| c.face(c.atom(0, j), lab(0, Sign::Minus));
        let data = InitialData {
            sigma: (0..n1).map(|j| sol.faces[bottom(j)]).collect(),
            past: (0..n1).map(|j| 2.0 * sol.faces[bottom(j)] - sol.atoms[c.atom(0, j)]).collect(),
            left: (0..n0).map(|i| sol.faces[c.face(c.atom(i, 0), lab(1, Sign::Minus))]).collect(),
            right: (0..n0).map(|i| sol.faces[c.face(c.atom(i, n1 - 1), lab(1, Sign::Plus))]).collect(),
        };
        let ev = m.evolve(n1, h, k, &data, n0).unwrap();
        for (x, y) in ev.to_vec().iter().zip(sol.to_vec().iter()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn gauge_invariance_and_orientation(seed in any::<u64>(), dims in cube_dims(), beta in 0.2..3.0f64) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let m = GaugeModel::new(Lie::su2(), beta).unwrap();
        let c = CubicalComplexND::new(&dims).unwrap();
        let a = GaugeHistory::random(c.clone(), &m.lie, &mut r, 0.9);
        let g = GaugeTransform::random(&c, &m.lie, &mut r, 2.0);
        let b = g.apply(&m.lie, &a);
        prop_assert!((m.action(&a) - m.action(&b)).abs() <= 1e-11);
        prop_assert!((m.action(&a) - m.action_reversed(&a)).abs() <= 1e-11);
        for l in 0..c.n_links() {
            let (x, y) = (m.interior_residual(&a, l), m.interior_residual(&b, l));
            prop_assert!((liegroup::norm(&x) - liegroup::norm(&y)).abs() <= 1e-11);
        }
        for rr in c.interior_rlinks() {
            let (x, y) = (m.gluing_residual(&a, rr).unwrap(), m.gluing_residual(&b, rr).unwrap());
            prop_assert!((liegroup::norm(&x) - liegroup::norm(&y)).abs() <= 1e-11);
        }
    }

    #[test]
    fn bf_gluing_ignores_phi_and_orientation(seed in any::<u64>(), coeff in -1.0..1.0f64, flips in prop::collection::vec(any::<bool>(), 64)) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let c = CubicalComplexND::new(&[2, 2]).unwrap();
        let per = WedgeSlots::new(&c).per_atom;
        let table: Vec<SgnEntry> = (0..per)
            .flat_map(|a| (0..per).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && (a * 7 + b * 3) % 4 == 0)
            .map(|(a, b)| SgnEntry(a, b, if (a + b) % 2 == 0 { 1 } else { -1 }))
            .collect();
        let m1 = BFModel::new(Lie::su2(), PhiTerm::Quadratic { table, coeff }).unwrap();
        let m2 = BFModel::new(Lie::su2(), PhiTerm::Quadratic { table: vec![SgnEntry(0, 1, 1)], coeff: 0.3 }).unwrap();
        let mut a = BFHistory::zero(c.clone(), &m1.lie, &m1.phi);
        a.gauge = GaugeHistory::random(c.clone(), &m1.lie, &mut r, 0.7);
        a.e.iter_mut().for_each(|e| *e = m1.lie.random_algebra(&mut r, 1.0));
        a.phi.iter_mut().for_each(|p| p.iter_mut().for_each(|x| *x = r.gen_range(-1.0..1.0)));
        let v = DVec::from_fn(m1.tangent_dim(&a), |_, _| r.gen_range(-1.0..1.0));
        for rr in c.interior_rlinks() {
            prop_assert_eq!(bits(&m1.gluing_residual(&a, rr).unwrap()), bits(&m2.gluing_residual(&a, rr).unwrap()));
        }
        for f in c.boundary_faces() {
            let at = c.face_atoms(f)[0];
            prop_assert_eq!(m1.cartan_form(&a, f, at, &v).to_bits(), m2.cartan_form(&a, f, at, &v).to_bits());
        }
        let mut b = a.clone();
        for (k, &fl) in flips.iter().enumerate().take(b.e.len()) {
            if fl {
                b.flip(k);
            }
        }
        prop_assert_eq!(m1.action(&a).to_bits(), m1.action(&b).to_bits());
    }

    #[test]
    fn decimated_nonlinear_solution_is_not_a_coarse_solution(qa in -0.5..0.5f64, qb in 0.6..1.2f64) {
        let m = ParticleModel::new(1.0, 1, Potential::Quartic { k: 1.0, lambda: 0.5 }).unwrap();
        let pair = ScalePair::<TimeComplex>::new(TimeComplex::new(2, 0.2).unwrap(), 4).unwrap();
        let (fine, _) = m.solve(pair.fine, &DVec::from_element(1, qa), &DVec::from_element(1, qb), &NewtonOpts::default()).unwrap();
        prop_assert!(m.max_residual(&fine) <= 1e-10);
        let coarse = pair.decimate(&fine).unwrap();
        prop_assert!(m.max_residual(&coarse) > 1e-6);
    }
}
