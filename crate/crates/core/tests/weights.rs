use mshlab::fit::log_spaced_desc;
use mshlab::garding::{binomial, sigma_minors, sigma_profile};
use mshlab::profiles::*;
use mshlab::weights::*;
use proptest::prelude::*;

const TUPLES: [(usize, usize, f64); 5] = [(2, 1, 3.0), (3, 1, 5.0), (2, 2, 2.0), (3, 2, 2.0), (4, 3, 2.0)];
const PAIRS: [(usize, usize); 5] = [(2, 1), (3, 1), (2, 2), (3, 2), (4, 3)];

#[test]
fn pure_pole_is_maximal() {
    for (k, m) in PAIRS {
        let model = FlatModel::new(k + 1, k, m, 0.5).unwrap();
        let w = WeightFamily::g_pure(k, m);
        for r in log_spaced_desc(0.5, 1e-6, 50) {
            let p = radial_eigprofile(&eval_weight(&w, r).unwrap(), r, &model).unwrap();
            let s = sigma_profile(&p, m).unwrap();
            assert!(s.abs() < 1e-10 * p.lambda_tan.abs().powi(m as i32), "(k, m) = ({}, {}), r = {:e}: {}", k, m, r, s);
            let h = p.to_matrix().unwrap();
            assert!(sigma_minors(&h, m).unwrap().abs() < 1e-10 * p.lambda_tan.abs().powi(m as i32) * binomial(k + 1, m));
        }
    }
}

#[test]
fn radial_eigenvalues_of_monomial() {
    // r^2 = |z'|^2 has complex Hessian the identity on the normal block.
    let w = WeightFamily::g_pure(2, 2);
    let d = eval_weight(&w, 0.3).unwrap();
    assert!((d.value - 0.3f64.ln()).abs() < 1e-15);
    let sq = DerivTriple::new(0.09, 0.6, 2.0);
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let p = radial_eigprofile(&sq, 0.3, &model).unwrap();
    assert!((p.lambda_rad - 1.0).abs() < 1e-15 && (p.lambda_tan - 1.0).abs() < 1e-15);
}

#[test]
fn subweights_certify() {
    for (k, m, delta) in TUPLES {
        let model = FlatModel::new(k + 1, k, m, 0.5).unwrap();
        let cw = make_weight(WeightSide::Sub, k, m, delta, 0.0, &model).unwrap();
        let c = &cw.certificate;
        assert!(c.sigmas.iter().flatten().all(|s| *s >= 0.0));
        assert!((c.fitted_exponent / delta - 1.0).abs() < 0.02, "({}, {}, {}) exponent {}", k, m, delta, c.fitted_exponent);
        assert!(c.fitted_coefficient > 0.0);
        assert!((c.fitted_coefficient / c.expected_coefficient - 1.0).abs() < 0.05);
        // the normalized leading coefficient is an independent closed form
        let q = k as f64 / m as f64;
        let oracle = delta * (delta / 2.0 - (q - 1.0));
        assert!((c.expected_coefficient - oracle).abs() < 1e-12 * oracle.abs());
    }
}

#[test]
fn superweights_certify() {
    for (k, m, delta) in TUPLES {
        let model = FlatModel::new(k + 1, k, m, 0.5).unwrap();
        let cw = make_weight(WeightSide::Super, k, m, delta, 0.0, &model).unwrap();
        for s in &cw.certificate.sigmas {
            assert!(s[m - 1] < 0.0);
            assert!(s[..m - 1].iter().all(|v| *v > 0.0));
        }
        assert!(cw.certificate.fitted_coefficient < 0.0);
    }
}

#[test]
fn regularized_subweight_certifies() {
    let model = FlatModel::new(3, 2, 1, 0.5).unwrap();
    let cw = make_weight(WeightSide::Sub, 2, 1, 3.0, 1e-4, &model).unwrap();
    assert!(cw.certificate.sigmas.iter().flatten().all(|s| *s >= 0.0));
}

#[test]
fn inadmissible_weights_are_rejected() {
    let model = FlatModel::new(4, 3, 1, 0.5).unwrap();
    assert!(make_weight(WeightSide::Sub, 3, 1, 4.0, 0.0, &model).is_err());
    assert!(make_weight(WeightSide::Super, 3, 1, 5.0, 1e-3, &model).is_err());
    assert!(make_weight(WeightSide::Sub, 2, 3, 2.0, 0.0, &model).is_err());
}

#[test]
fn expansion_residual_is_higher_order() {
    for (k, m, delta) in TUPLES {
        for sign in [1.0, -1.0] {
            for eps in [0.0, 1e-4] {
                let grid = default_expansion_grid(delta, 0.5);
                let rep = verify_expansion(k, m, delta, eps, sign, &grid).unwrap();
                assert!(rep.exceeds_delta, "({}, {}, {}) A = {} eps = {}: exponent {}", k, m, delta, sign, eps, rep.fitted_exponent);
                assert!(rep.fitted_exponent > delta);
            }
        }
    }
}

#[test]
fn expansion_constants_satisfy_identities() {
    for (k, m, delta) in TUPLES {
        let c = expansion_constants(k, m, delta).unwrap();
        assert!((c.b3 - (c.b2 - c.b1)).abs() < 1e-12);
        let q = k as f64 / m as f64;
        assert!((c.b2 - (2.0 + delta)).abs() < 1e-15);
        assert!((c.b1 - 2.0 * ((1.0 - q) * (1.0 + delta) + delta * delta / 4.0)).abs() < 1e-12);
    }
}

#[test]
fn maximal_ode_matches_closed_form() {
    for (k, m) in PAIRS {
        let prof = maximal_radial_profile(k, m, 1.7, -0.3).unwrap();
        let s_v = 0.4;
        let d = prof.eval(s_v).unwrap();
        let radii = log_spaced_desc(s_v, 1e-3, 12);
        let ode = integrate_maximal_ode(k, m, s_v, d.value, d.d1, &radii).unwrap();
        for (r, f) in radii.iter().zip(&ode) {
            let exact = prof.eval(*r).unwrap().value;
            assert!((f - exact).abs() < 1e-8 * exact.abs().max(1.0), "(k, m) = ({}, {}) r = {}: {} vs {}", k, m, r, f, exact);
            let res = prof.ode_residual(*r).unwrap();
            let scale = eval_weight(&WeightFamily::g_pure(k, m), *r).unwrap().d1.abs() / (2.0 * r);
            assert!(res.abs() < 1e-10 * (1.7 * scale).powi(m as i32));
        }
    }
    assert!(maximal_radial_profile(2, 1, -1.0, 0.0).is_err());
}

#[test]
fn minimal_weight_is_harmonic() {
    for kappa in [3usize, 4] {
        let w = minimal_real_weight(kappa).unwrap();
        for r in log_spaced_desc(0.5, 0.05, 20) {
            assert!(laplacian_residual(&w, r).unwrap().abs() < 1e-8);
        }
    }
    let w = minimal_real_weight(3).unwrap();
    for r in log_spaced_desc(0.5, 0.05, 20) {
        let d = eval_weight(&w, r).unwrap() + DerivTriple::new(r, 1.0, 0.0);
        assert!((real_radial_laplacian(&d, r, 3) - 2.0 / r).abs() < 1e-8);
    }
    assert!(minimal_real_weight(2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn scaled_profile_routes_agree(idx in 0usize..5, sign in prop::sample::select(vec![1.0, -1.0]), lr in -4.0f64..-0.5, eps in prop::sample::select(vec![0.0, 1e-4])) {
        let (k, m, delta) = TUPLES[idx];
        let r = 10f64.powf(lr);
        let exact = scaled_profile_exact(k, m, delta, sign, eps, r).unwrap();
        let w = if sign > 0.0 { WeightFamily::g_sub(k, m, delta, eps) } else { WeightFamily::g_super(k, m, delta) };
        prop_assume!(sign > 0.0 || eps == 0.0);
        let (rad, tan) = scaled_profile_from_hessian(&w, r).unwrap();
        prop_assert!((exact.radial() - rad).abs() < 1e-8 * rad.abs().max(1.0));
        prop_assert!((exact.tangent() - tan).abs() < 1e-8 * tan.abs().max(1.0));
    }

    #[test]
    fn pole_profile_ratio_is_constant(k in 1usize..6, m in 1usize..6, lr in -6.0f64..-0.3) {
        prop_assume!(m <= k);
        let r = 10f64.powf(lr);
        let ratio = profile_ratio_check(&WeightFamily::g_pure(k, m), r).unwrap();
        let q = k as f64 / m as f64;
        prop_assert!((ratio - (1.0 - q)).abs() < 1e-9 * q);
    }
}
