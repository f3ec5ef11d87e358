use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dirac_core::geometry::*;

fn vec_of(n: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-10.0..10.0f64, n).prop_map(DVector::from_vec)
}

fn fiber_case() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    (1usize..=6)
        .prop_flat_map(|n| (Just(n), 0..n))
        .prop_flat_map(|(n, m)| {
            (
                prop::collection::vec(-1.0..1.0f64, m * n).prop_map(move |v| DMatrix::from_vec(m, n, v)),
                vec_of(n),
                vec_of(n),
            )
        })
}

fn tangent(n: usize) -> impl Strategy<Value = DoubleTangentVector> {
    (vec_of(n), vec_of(n), vec_of(n), vec_of(n)).prop_map(|(q, p, vq, vp)| DoubleTangentVector { q, p, vq, vp })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fiber_basis_is_lagrangian((g, q, p) in fiber_case()) {
        let n = q.len();
        let fiber = ConstraintFiber::from_gradients(g).unwrap();
        let basis = dirac_fiber_basis(&fiber, &q, &p).unwrap();
        prop_assert_eq!(basis.len(), 2 * n);
        prop_assert_eq!(basis_rank(&basis), 2 * n);
        prop_assert!(pair_isotropy(&basis).unwrap() < 1e-12);
        prop_assert!(membership_residual(&fiber, &basis) < MEMBERSHIP_TOL);
    }

    #[test]
    fn omega_flat_is_the_form_of_omega_one(w1 in tangent(3), w2 in tangent(3)) {
        let w2 = DoubleTangentVector { q: w1.q.clone(), p: w1.p.clone(), ..w2 };
        // Ω♭(w1)(w2) = w1.vq·w2.vp − w1.vp·w2.vq
        let (om, _) = canonical_two_forms(3).unwrap();
        let a = omega_flat(&w1).apply(&w2).unwrap();
        let expected = -w1.vp.dot(&w2.vq) + w1.vq.dot(&w2.vp);
        prop_assert!((a - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        // and the form is antisymmetric
        let b = omega_flat(&w2).apply(&w1).unwrap();
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert_eq!(&om, &(-om.transpose()));
    }

    #[test]
    fn maps_invert(w in tangent(4)) {
        prop_assert_eq!(omega_flat_inv(&omega_flat(&w)), w.clone());
        prop_assert_eq!(kappa_inv(&kappa(&w)), w.clone());
        let c = kappa(&w);
        prop_assert_eq!(gamma(&c), omega_flat(&kappa_inv(&c)));
    }

    #[test]
    fn pairing_is_symmetric(a in vec_of(4), b in vec_of(4), c in vec_of(4), d in vec_of(4)) {
        let base = DVector::zeros(4);
        let e1 = PontryaginElement::new(base.clone(), a, b).unwrap();
        let e2 = PontryaginElement::new(base, c, d).unwrap();
        prop_assert_eq!(pairing(&e1, &e2).unwrap(), pairing(&e2, &e1).unwrap());
    }
}

#[test]
fn dirac_differential_matches_partials_of_a_sampled_lagrangian() {
    // L = ½|v|² − ½|q|² + v·Bq: ∂L/∂q = −q + Bᵀv, ∂L/∂v = v + Bq
    let n = 3;
    let b = DMatrix::from_fn(n, n, |i, j| (i as f64) - 0.5 * (j as f64));
    let lag = QuadraticLagrangian {
        a: DMatrix::identity(n, n),
        b: b.clone(),
        c: -DMatrix::identity(n, n),
        linear_q: DVector::zeros(n),
        linear_v: DVector::zeros(n),
    };
    let q = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    let v = DVector::from_vec(vec![1.0, 0.5, -0.25]);
    let d = dirac_differential(&lag, &q, &v).unwrap();
    assert_eq!(d.p, &v + &b * &q);
    assert_eq!(d.theta, -(-&q + b.transpose() * &v));
    assert_eq!(d.psi, v);
}

#[test]
fn rank_deficient_gradients_rejected() {
    let g = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
    assert!(matches!(ConstraintFiber::from_gradients(g), Err(GeometryError::RankDeficient { .. })));
}
