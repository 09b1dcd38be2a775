use mshlab::fields::*;
use mshlab::fit::geometric_grid;
use mshlab::measures::*;
use mshlab::profiles::*;
use mshlab::weights::admissible_delta_bound;
use std::f64::consts::PI;

fn localized(model: &FlatModel, nu: f64) -> ScalarField {
    let theta = ThetaField::cosine(1.0, 1.0, 1, model.torus_periods.clone()).unwrap();
    let delta = admissible_delta_bound(model.k, model.m) + 1.0;
    ScalarField::Localized(LocalizedField::new(theta, nu, model.k, model.m, delta, 1.0, model).unwrap())
}

#[test]
fn monte_carlo_agrees_with_quadrature() {
    let model = FlatModel::new(3, 2, 2, 0.5).unwrap();
    let f = ScalarField::radial(WeightFamily::g_sub(2, 2, 2.0, 0.0));
    let quad = tube_integral(&f, &model, 0.1, TubeMethod::RadialQuadrature).unwrap().value;
    let cub = tube_integral(&f, &model, 0.1, TubeMethod::Cubature).unwrap().value;
    assert!((quad - cub).abs() < 1e-10 * quad.abs());
    let mc = tube_integral(&f, &model, 0.1, TubeMethod::MonteCarlo { samples_per_stratum: 20000, seed: 4 }).unwrap();
    let se = mc.std_error.unwrap();
    assert!((mc.value - quad).abs() < 3.0 * se, "mc {} +- {} vs {}", mc.value, se, quad);
}

#[test]
fn monte_carlo_agrees_with_cubature_off_axis() {
    let model = FlatModel::new(3, 2, 2, 0.5).unwrap();
    let f = localized(&model, 0.75);
    let cub = tube_integral(&f, &model, 0.05, TubeMethod::Cubature).unwrap().value;
    let mc = tube_integral(&f, &model, 0.05, TubeMethod::MonteCarlo { samples_per_stratum: 20000, seed: 8 }).unwrap();
    assert!((mc.value - cub).abs() < 3.0 * mc.std_error.unwrap(), "mc {:?} vs {}", mc, cub);
}

#[test]
fn monte_carlo_is_seeded() {
    let model = FlatModel::new(3, 2, 2, 0.5).unwrap();
    let f = localized(&model, 0.75);
    let m = TubeMethod::MonteCarlo { samples_per_stratum: 500, seed: 1 };
    assert_eq!(tube_integral(&f, &model, 0.1, m).unwrap(), tube_integral(&f, &model, 0.1, m).unwrap());
}

#[test]
fn tube_integrals_are_additive() {
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let a = localized(&model, 1.5);
    let b = ScalarField::radial(model.psi_v());
    let sum = a.clone().scaled(2.0).plus(b.clone());
    for method in [TubeMethod::Flux, TubeMethod::Cubature] {
        let ia = tube_integral(&a, &model, 0.1, method).unwrap().value;
        let ib = tube_integral(&b, &model, 0.1, method).unwrap().value;
        let is = tube_integral(&sum, &model, 0.1, method).unwrap().value;
        assert!((is - (2.0 * ia + ib)).abs() < 1e-10 * is.abs().max(1.0));
    }
}

#[test]
fn calibration_scales_with_torus_volume() {
    let a = calibrate(&FlatModel::new(3, 2, 1, 0.5).unwrap()).unwrap();
    let b = calibrate(&FlatModel::with_periods(3, 2, 1, 0.5, vec![PI]).unwrap()).unwrap();
    assert!((a.c_km * a.v_volume / (b.c_km * b.v_volume) - 1.0).abs() < 1e-10);
    // Newtonian flux of log-free pole: |S^3|·C(1,0)/4·2 = π²
    assert!((1.0 / (a.c_km * a.v_volume) - PI * PI).abs() < 1e-8);
}

#[test]
fn calibration_cache_round_trips() {
    let dir = std::env::temp_dir().join(format!("mshlab-cache-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("calib.json");
    let model = FlatModel::new(4, 3, 2, 0.5).unwrap();
    let mut cache = CalibrationCache::default();
    let c = cache.get_or_compute(&model).unwrap();
    cache.save(&path).unwrap();
    let mut back = CalibrationCache::load(&path).unwrap();
    assert_eq!(back, cache);
    assert_eq!(back.get_or_compute(&model).unwrap(), c);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn pole_multiples_are_linear() {
    for (n, k, m) in [(3usize, 2usize, 1usize), (3, 2, 2), (4, 3, 2)] {
        let model = FlatModel::new(n, k, m, 0.5).unwrap();
        let calib = calibrate(&model).unwrap();
        let grid = geometric_grid(0.125, 0.5, 8);
        for g in [0.5, 1.0, 2.0] {
            let f = ScalarField::radial(model.psi_v().with_gamma(g));
            let nu = lelong_number(&lelong_series(&f, &model, &grid, TubeMethod::Flux, &calib).unwrap()).unwrap();
            assert!((nu - g).abs() < 0.02 * g);
        }
    }
}

#[test]
fn sublevel_and_tube_limits_agree() {
    for (k, m, nu) in [(2usize, 1usize, 1.5f64), (2, 2, 0.75)] {
        let model = FlatModel::new(3, k, m, 0.5).unwrap();
        let calib = calibrate(&model).unwrap();
        let f = localized(&model, nu).plus(ScalarField::radial(model.psi_v()));
        let grid = geometric_grid(0.125, 0.5, 12);
        let tube = lelong_number(&lelong_series(&f, &model, &grid, TubeMethod::Flux, &calib).unwrap()).unwrap();
        let sub = defn26_series(&f, &model, &grid, &calib).unwrap();
        assert!(sub.monotone);
        assert!(sub.stokes_discrepancy.unwrap() < 1e-8);
        let lim = lelong_number(&sub).unwrap();
        assert!((tube - lim).abs() < 0.02 * tube, "{} vs {}", tube, lim);
        assert!((tube - 2.0).abs() < 0.05 * 2.0);
    }
}

#[test]
fn reweighted_sublevel_series_is_the_flux_series() {
    let model = FlatModel::new(4, 3, 2, 0.5).unwrap();
    let calib = calibrate(&model).unwrap();
    let f = localized(&model, 1.25);
    let grid = geometric_grid(0.125, 0.5, 8);
    let sub = defn26_series(&f, &model, &grid, &calib).unwrap();
    let re = reweight_to_tube_form(&sub, &model, &calib).unwrap();
    let tube = lelong_series(&f, &model, &grid, TubeMethod::Flux, &calib).unwrap();
    for (a, b) in re.scaled_values.iter().zip(&tube.scaled_values) {
        assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
    }
}

#[test]
fn polar_density_matches_patch_average() {
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let calib = calibrate(&model).unwrap();
    let f = localized(&model, 1.5);
    let grid = geometric_grid(0.125, 0.5, 10);
    for c in [0.0, 1.0, PI] {
        let patch = TorusPatch::around(&[c, 1.0], 0.5).unwrap();
        let pd = polar_density(&f, &model, &patch, &grid, &calib).unwrap();
        let est = pd.estimate.unwrap();
        let mean = pd.patch_mean_theta.unwrap();
        assert!((est - mean).abs() < 0.05 * mean.max(0.1), "center {}: {} vs {}", c, est, mean);
    }
}

#[test]
fn series_csv_has_expected_columns() {
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let calib = calibrate(&model).unwrap();
    let ts = lelong_series(&ScalarField::radial(model.psi_v()), &model, &geometric_grid(0.125, 0.5, 6), TubeMethod::Flux, &calib).unwrap();
    let mut buf = Vec::new();
    ts.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("s,raw,scaled,fit_residual"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn non_separable_fields_are_rejected() {
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let f = ScalarField::Max { field: Box::new(ScalarField::radial(model.psi_v())), floor: -10.0 };
    assert!(tube_integral(&f, &model, 0.1, TubeMethod::Flux).is_err());
    assert!(tube_integral(&ScalarField::radial(model.psi_v()), &model, 0.6, TubeMethod::Flux).is_err());
}
