use flatlayer::forward::{add_noise, contrast_source, scattered_from_source, BornOptions};
use flatlayer::grid::GridConfig;
use flatlayer::inverse::{recompute_internal_field, solve_modes, DEFAULT_EPS_DIV};
use flatlayer::io::{load_complex_field, load_real_field, save_complex_field, save_real_field};
use flatlayer::metrics::slice_relative_error;
use flatlayer::physics::{Phantom, SourceSet};
use flatlayer::pipeline::{combine, Scenario};
use flatlayer::regularize::RegularizerConfig;
use flatlayer::{Complex64, SpectralField};

fn scenario() -> Scenario {
    Scenario::new(&GridConfig::thick_layer(64, 15, 15), SourceSet::line_array()).unwrap()
}

#[test]
fn noisy_data_reconstruct_worse_than_exact() {
    let sc = scenario();
    let ph = Phantom::three_bumps(0.3);
    let k = sc.kernels(2.0).unwrap();
    let f = sc.synthesize(&ph, &k, BornOptions::default()).unwrap();
    let exact = sc.exact_xi(&ph);
    let err = |delta: f64| {
        let w = add_noise(&f.w_field, delta, 3).unwrap();
        let inv = sc.invert_frequency(&w, &k, &RegularizerConfig::for_noise_level(delta)).unwrap();
        let xi = combine(&[inv], DEFAULT_EPS_DIV).unwrap().xi;
        slice_relative_error(&xi, &exact).unwrap().mean().unwrap()
    };
    let (noisy, clean) = (err(1e-5), err(0.0));
    assert!(noisy > clean, "noisy {noisy} clean {clean}");
}

#[test]
fn discrepancy_solution_refits_data_per_mode() {
    let sc = scenario();
    let ph = Phantom::three_bumps(0.3);
    let k = sc.kernels(2.0).unwrap();
    let f = sc.synthesize(&ph, &k, BornOptions::default()).unwrap();
    let delta = 1e-5;
    let w = add_noise(&f.w_field, delta, 9).unwrap();
    let w_spec = sc.transform.forward_xy(&w);
    let reg = RegularizerConfig::for_noise_level(delta);
    let sol = solve_modes(&w_spec, &k.xy, &sc.scatterers, &reg).unwrap();
    let target = sol.stats.residual_target.unwrap();
    let (refit, _) = scattered_from_source(&sol.v_spec, &k.xy, &sc.receivers, &sc.transform).unwrap();
    let lat = sc.transform.lattice();
    let mut within = 0;
    for m in 0..lat.len() {
        let r: f64 = refit.mode(m).iter().zip(w_spec.mode(m)).map(|(a, b)| (a - b).norm_sqr()).sum();
        if r.sqrt() <= target * (1.0 + 1e-9) {
            within += 1;
        }
    }
    assert_eq!(within + sol.stats.unsatisfied, lat.len());
}

#[test]
fn internal_field_is_affine_in_source() {
    let sc = scenario();
    let k = sc.kernels(1.0).unwrap();
    let u0 = sc.incident(1.0).unwrap();
    let xi = sc.exact_xi(&Phantom::three_bumps(0.3));
    let v1 = contrast_source(&u0, &xi, &sc.transform).unwrap();
    let v2 = SpectralField::new(
        v1.grid().clone(),
        v1.lattice().clone(),
        v1.values().iter().map(|v| v * Complex64::new(0.0, 2.0)).collect(),
    )
    .unwrap();
    let sum = SpectralField::new(
        v1.grid().clone(),
        v1.lattice().clone(),
        v1.values().iter().zip(v2.values()).map(|(a, b)| a + b).collect(),
    )
    .unwrap();
    let zero = SpectralField::zeros(u0.grid().clone(), u0.lattice().clone());
    let s1 = recompute_internal_field(&v1, &zero, &k.xx).unwrap();
    let s2 = recompute_internal_field(&v2, &zero, &k.xx).unwrap();
    let s = recompute_internal_field(&sum, &zero, &k.xx).unwrap();
    for i in 0..s.values().len() {
        let e = s.values()[i] - s1.values()[i] - s2.values()[i];
        assert!(e.norm() <= 1e-13 * s.norm());
    }
}

#[test]
fn dumps_round_trip_through_files() {
    let sc = scenario();
    let ph = Phantom::three_bumps(0.3);
    let k = sc.kernels(2.0).unwrap();
    let f = sc.synthesize(&ph, &k, BornOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.laf");
    save_complex_field(&p, &f.w_field).unwrap();
    assert_eq!(load_complex_field(&p).unwrap(), f.w_field);
    let p = dir.path().join("xi.laf");
    let xi = sc.exact_xi(&ph);
    save_real_field(&p, &xi).unwrap();
    assert_eq!(load_real_field(&p).unwrap(), xi);
    assert!(load_real_field(&dir.path().join("missing.laf")).is_err());
}

#[test]
fn zero_phantom_gives_zero_data_and_xi() {
    let sc = scenario();
    let k = sc.kernels(2.0).unwrap();
    let f = sc.synthesize(&Phantom::zero(), &k, BornOptions::default()).unwrap();
    assert!(f.w_field.values().iter().all(|v| v.norm() == 0.0));
    let inv = sc.invert_frequency(&f.w_field, &k, &RegularizerConfig::default()).unwrap();
    let est = combine(&[inv], DEFAULT_EPS_DIV).unwrap();
    assert!(est.xi.values().iter().all(|&v| v == 0.0));
}
