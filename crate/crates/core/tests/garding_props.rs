use approx::assert_relative_eq;
use mshlab::garding::*;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn hermitian(dim: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec(-2.0f64..2.0, 2 * dim * dim).prop_map(move |v| {
        let e: Vec<Complex64> = v.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        HermitianMatrix::new(dim, e).unwrap()
    })
}

fn unitary(dim: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * dim * dim).prop_map(move |v| {
        let a = DMatrix::from_fn(dim, dim, |i, j| Complex64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]) + if i == j { 2.0 } else { 0.0 });
        a.qr().q()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn minors_agree_with_eigenvalues(h in (1usize..=6).prop_flat_map(hermitian)) {
        let eig = h.eigenvalues();
        let sig = sigma_all(&h, h.dim()).unwrap();
        for j in 1..=h.dim() {
            let oracle = elementary_symmetric(&eig, j);
            let scale = h.operator_norm().max(1.0).powi(j as i32) * binomial(h.dim(), j);
            prop_assert!((sig[j - 1] - oracle).abs() <= 1e-10 * scale, "j={} minors {} eig {}", j, sig[j - 1], oracle);
        }
    }

    #[test]
    fn sigma_is_unitarily_invariant((h, u) in (2usize..=5).prop_flat_map(|d| (hermitian(d), unitary(d)))) {
        let g = h.conjugate_by(&u).unwrap();
        for j in 1..=h.dim() {
            let a = sigma_minors(&h, j).unwrap();
            let b = sigma_minors(&g, j).unwrap();
            let scale = h.operator_norm().max(1.0).powi(j as i32) * binomial(h.dim(), j);
            prop_assert!((a - b).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn sigma_is_homogeneous(h in (1usize..=5).prop_flat_map(hermitian), c in 0.1f64..3.0) {
        let g = h.scaled(c);
        for j in 1..=h.dim() {
            let a = sigma_minors(&h, j).unwrap() * c.powi(j as i32);
            let b = sigma_minors(&g, j).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (c * h.operator_norm()).max(1.0).powi(j as i32) * binomial(h.dim(), j));
        }
    }

    #[test]
    fn cone_membership_is_scale_invariant(h in (1usize..=5).prop_flat_map(hermitian), m in 1usize..=5, c in 0.01f64..100.0) {
        let m = m.min(h.dim());
        let a = gamma_m_test(&h, m, DEFAULT_CONE_TOLERANCE).unwrap();
        let b = gamma_m_test(&h.scaled(c), m, DEFAULT_CONE_TOLERANCE).unwrap();
        if a.margin.abs() > 1e-6 {
            prop_assert_eq!(a.status, b.status);
        }
    }

    #[test]
    fn mixed_sigma_is_symmetric_and_reduces(a in prop::collection::vec(-2.0f64..2.0, 1..6), b0 in prop::collection::vec(-2.0f64..2.0, 6), m in 1usize..=5) {
        let n = a.len();
        let m = m.min(n);
        let b = &b0[..n];
        let ab = mixed_sigma_diag(&a, b, m).unwrap();
        let ba = mixed_sigma_diag(b, &a, m).unwrap();
        if m == 2 {
            prop_assert!((ab - ba).abs() < 1e-10);
        }
        let aa = mixed_sigma_diag(&a, &a, m).unwrap();
        let expect = m as f64 * elementary_symmetric(&a, m);
        prop_assert!((aa - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }

    #[test]
    fn profile_formula_matches_matrix(rad in -5.0f64..5.0, tan in -5.0f64..5.0, k in 1usize..5, extra in 0usize..3) {
        let p = EigenProfile::new(rad, tan, k, k + extra).unwrap();
        let h = p.to_matrix().unwrap();
        for j in 1..=k + extra {
            let a = sigma_profile(&p, j).unwrap();
            let b = sigma_minors(&h, j).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * 5f64.powi(j as i32) * binomial(k + extra, j));
        }
    }

    #[test]
    fn profile_sigma_is_linear_in_the_radial_eigenvalue(r1 in -3.0f64..3.0, r2 in -3.0f64..3.0, tan in -3.0f64..3.0, k in 2usize..5) {
        for j in 1..=k {
            let s = |r: f64| sigma_profile(&EigenProfile::new(r, tan, k, k).unwrap(), j).unwrap();
            let mid = s(0.5 * (r1 + r2));
            prop_assert!((mid - 0.5 * (s(r1) + s(r2))).abs() < 1e-9 * 3f64.powi(j as i32) * binomial(k, j));
        }
    }
}

#[test]
fn cone_examples() {
    let id = HermitianMatrix::identity(3).unwrap();
    assert_eq!(gamma_m_test(&id, 3, DEFAULT_CONE_TOLERANCE).unwrap().status, ConeStatus::StrictlyInside);
    let d = HermitianMatrix::diagonal(&[1.0, 1.0, -0.5]).unwrap();
    assert_eq!(gamma_m_test(&d, 1, DEFAULT_CONE_TOLERANCE).unwrap().status, ConeStatus::StrictlyInside);
    assert_eq!(gamma_m_test(&d, 3, DEFAULT_CONE_TOLERANCE).unwrap().status, ConeStatus::Outside);
    let z = HermitianMatrix::diagonal(&[1.0, -1.0]).unwrap();
    assert_eq!(gamma_m_test(&z, 1, DEFAULT_CONE_TOLERANCE).unwrap().status, ConeStatus::Boundary);
    assert_relative_eq!(sigma_minors(&d, 2).unwrap(), 1.0 - 0.5 - 0.5, epsilon = 1e-15);
}

#[test]
fn non_square_input_is_rejected() {
    assert!(HermitianMatrix::new(2, vec![Complex64::new(1.0, 0.0); 3]).is_err());
}
