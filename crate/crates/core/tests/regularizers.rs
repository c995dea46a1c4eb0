use flatlayer::grid::GridConfig;
use flatlayer::physics::build_green_kernel;
use flatlayer::regularize::{assemble_mode_system, tikhonov_solve, tsvd_solve, CMatrix, CVector, Cutoff, SvdFactor};
use flatlayer::{make_grids, Complex64, SpectralTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy() -> (flatlayer::Grid3D, flatlayer::Grid3D, SpectralTransform) {
    let (x, y) = make_grids(&GridConfig::thick_layer(8, 3, 2)).unwrap();
    let t = SpectralTransform::new(&x);
    (x, y, t)
}

#[test]
fn entries_match_kernel_table() {
    let (x, y, t) = toy();
    let k = build_green_kernel(&x, &y, 2.0, &t).unwrap();
    let mu = x.trapezoid_weights();
    for m in [0, 5, 17, 63] {
        let s = assemble_mode_system(&k, m, 2.0, &mu).unwrap();
        assert_eq!(s.a.shape(), (2, 3));
        for r in 0..2 {
            for (c, w) in mu.iter().enumerate() {
                assert_eq!(s.a[(r, c)], k.entry(m, r, c) * (4.0 * w));
            }
        }
    }
}

#[test]
fn prefactor_scaling() {
    let (x, y, t) = toy();
    let k = build_green_kernel(&x, &y, 2.0, &t).unwrap();
    let mu = x.trapezoid_weights();
    let zero = assemble_mode_system(&k, 9, 0.0, &mu).unwrap();
    assert!(zero.a.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    let a1 = assemble_mode_system(&k, 9, 2.0, &mu).unwrap().a;
    let a2 = assemble_mode_system(&k, 9, 4.0, &mu).unwrap().a;
    assert!((a2 - a1 * Complex64::new(4.0, 0.0)).norm() == 0.0);
    assert!(assemble_mode_system(&k, 64, 2.0, &mu).is_err());
    assert!(assemble_mode_system(&k, 0, 2.0, &mu[..2]).is_err());
}

#[test]
fn tikhonov_tends_to_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut g = || Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    let a = CMatrix::from_fn(9, 5, |_, _| g());
    let b = CVector::from_fn(9, |_, _| g());
    let smax = SvdFactor::new(&a).sigma_max();
    let ls = tsvd_solve(&a, &b, Cutoff::Relative(1e-15)).unwrap().x;
    let tik = tikhonov_solve(&a, &b, 1e-12 * smax * smax).unwrap();
    assert!((tik - &ls).norm() <= 1e-8 * ls.norm());
}

#[test]
fn physical_spectra_decay_fast_beyond_k0() {
    let omega = 2.0;
    let (x, y) = make_grids(&GridConfig::thick_layer(32, 31, 31)).unwrap();
    let t = SpectralTransform::new(&x);
    let k = build_green_kernel(&x, &y, omega, &t).unwrap();
    let mu = x.trapezoid_weights();
    let lat = t.lattice();
    let mut checked = 0;
    for o in 0..lat.n_orbits() {
        let m = lat.orbit_representative(o);
        if lat.omega_abs(m) <= omega {
            continue;
        }
        let s = SvdFactor::new(&assemble_mode_system(&k, m, omega, &mu).unwrap().a);
        let sv = s.singular_values();
        assert!(sv[9] / sv[0] < 1e-6, "mode {m}: {:e}", sv[9] / sv[0]);
        checked += 1;
    }
    assert!(checked > 0);
}
