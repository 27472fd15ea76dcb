//! The rayon path and the sequential path give bit-identical results.
//! Kept in its own binary because the switch is process-wide.

use multisym::coarse::{rigid_convergence, wave_convergence};
use multisym::complex::CubicalComplexND;
use multisym::gauge::{GaugeHistory, GaugeModel};
use multisym::liegroup::Lie;
use multisym::mech1d::RigidModel;
use multisym::numerics::NewtonOpts;
use multisym::par;
use multisym::scalar2d::{InitialData, Nonlinearity, WaveModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn run() -> Vec<u64> {
    let mut out = vec![];
    let wm = WaveModel::new(Nonlinearity::Cubic { lambda: 0.3 }).unwrap();
    let data = InitialData {
        sigma: (0..16).map(|j| (j as f64 * 0.3).sin()).collect(),
        past: (0..16).map(|j| (j as f64 * 0.3 - 0.05).sin()).collect(),
        left: vec![0.0; 12],
        right: vec![0.1; 12],
    };
    let h = wm.evolve(16, 0.05, 0.08, &data, 12).unwrap();
    out.extend(h.to_vec().iter().map(|x| x.to_bits()));
    let pi = std::f64::consts::PI;
    let t = wave_convergence(&wm, (pi, pi), &|x, y| x.sin() * y.cos(), &|x, _| x, &[2, 4, 8]).unwrap();
    out.extend(t.rows.iter().flat_map(|r| [r.bulk.to_bits(), r.boundary.to_bits()]));
    let lie = Lie::so(3);
    let rm = RigidModel::new(lie.clone(), vec![1.0, 2.0, 3.0]).unwrap();
    let t = rigid_convergence(&rm, 1.0, &|t| lie.exp(&[0.2 * t, 0.1, 0.0]), &|t| vec![t, 1.0, 0.0], &[4, 8]).unwrap();
    out.extend(t.rows.iter().flat_map(|r| [r.bulk.to_bits(), r.boundary.to_bits()]));
    let gm = GaugeModel::new(Lie::su2(), 1.0).unwrap();
    let c = CubicalComplexND::new(&[2, 2]).unwrap();
    let mut a = GaugeHistory::identity(c.clone(), &gm.lie);
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for rr in c.boundary_rlinks() {
        a.k[rr] = gm.lie.random_element(&mut r, 0.05);
    }
    let (sol, _) = gm.solve(a, &NewtonOpts::default()).unwrap();
    out.push(gm.action(&sol).to_bits());
    out
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    par::set_sequential(false);
    let a = run();
    par::set_sequential(true);
    let b = run();
    par::set_sequential(false);
    assert_eq!(a, b);
}
