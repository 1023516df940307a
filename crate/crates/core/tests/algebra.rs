use approx::assert_relative_eq;
use proptest::prelude::*;
use smp_control::sdp::VarAllocator;
use smp_control::tensor::*;

fn square(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| Matrix::from_vec(n, n, v))
}

fn sized_square() -> impl Strategy<Value = (usize, Matrix)> {
    (2usize..=4).prop_flat_map(|n| square(n).prop_map(move |x| (n, x)))
}

fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S: nalgebra::RawStorage<f64, R, C>>(
    m: &nalgebra::Matrix<f64, R, C, S>,
) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn duplication_restores_symmetric_vec((n, x) in sized_square()) {
        let s = symmetrize(&x);
        let d = duplication_matrix(n);
        let l = elimination_matrix(n);
        let vh = vech(&s).unwrap();
        prop_assert!(max_abs(&(&d * &vh - vec(&s))) < 1e-12);
        prop_assert!(max_abs(&(&l * vec(&x) - vech(&x).unwrap())) < 1e-12);
        prop_assert!(max_abs(&(&l * &d - Matrix::identity(half_dim(n), half_dim(n)))) < 1e-12);
        prop_assert_eq!(unvech(&vh, n).unwrap(), s);
    }

    #[test]
    fn magnus_dl_absorbed((n, x) in sized_square()) {
        let xx = kron(&x, &x);
        let d = duplication_matrix(n);
        let l = elimination_matrix(n);
        let lhs = &d * &l * &xx * &d;
        prop_assert!(max_abs(&(lhs - &xx * &d)) <= 1e-8 * (1.0 + max_abs(&xx)));
    }

    #[test]
    fn magnus_determinant((n, x) in sized_square()) {
        let c = compress(&kron(&x, &x), n).unwrap();
        let want = x.determinant().powi(n as i32 + 1);
        prop_assert!((c.determinant() - want).abs() <= 1e-8 * (1.0 + want.abs()));
    }

    #[test]
    fn magnus_inverse((n, x) in sized_square()) {
        prop_assume!(x.determinant().abs() > 1e-2);
        let xi = x.clone().try_inverse().unwrap();
        let c = compress(&kron(&x, &x), n).unwrap();
        let ci = compress(&kron(&xi, &xi), n).unwrap();
        let prod = &c * &ci;
        prop_assert!(max_abs(&(prod - Matrix::identity(half_dim(n), half_dim(n)))) <= 1e-8 * (1.0 + max_abs(&ci)));
    }

    #[test]
    fn kron_mixed_product(a in square(2), b in square(3), c in square(2), d in square(3)) {
        let lhs = kron(&a, &b) * kron(&c, &d);
        let rhs = kron(&(&a * &c), &(&b * &d));
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn vec_of_triple_product(a in square(3), x in square(3), b in square(3)) {
        let lhs = vec(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec(&x);
        prop_assert!(max_abs(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn compression_of_congruence((n, x) in sized_square(), (_, y) in sized_square()) {
        // 𝒞(Y (X⊗X)) = 𝒞(Y) 𝒞(X⊗X) whenever the sizes agree.
        prop_assume!(y.nrows() == n);
        let xx = kron(&x, &x);
        let yy = kron(&y, &y);
        let lhs = compress(&(&yy * &xx), n).unwrap();
        let rhs = compress(&yy, n).unwrap() * compress(&xx, n).unwrap();
        prop_assert!(max_abs(&(&lhs - rhs)) <= 1e-8 * (1.0 + max_abs(&lhs)));
    }

    #[test]
    fn vec_unvec_round_trip(v in prop::collection::vec(-5.0..5.0f64, 12)) {
        let x = Matrix::from_vec(3, 4, v);
        prop_assert_eq!(unvec(&vec(&x), 3, 4).unwrap(), x);
    }

    #[test]
    fn sym_pack_round_trip((n, x) in sized_square()) {
        let s = symmetrize(&x);
        let mut alloc = VarAllocator::new();
        let _ = alloc.scalar();
        let var = alloc.sym(n);
        let mut z = vec![0.0; alloc.dim()];
        var.pack_into(&s, &mut z);
        prop_assert_eq!(var.unpack(&z), s);
    }

    #[test]
    fn eigen_reconstructs((n, x) in sized_square()) {
        let s = SymMatrix::new(&x).unwrap();
        let eig = sym_eig(&s).unwrap();
        prop_assert!(max_abs(&(eig.reconstruct() - s.as_matrix())) < 1e-10);
        prop_assert!(eig.eigenvalues.as_slice().windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(eig.eigenvalues.len(), n);
    }
}

#[test]
fn scalar_compression_is_identity_map() {
    let y = Matrix::from_element(1, 1, 0.7);
    assert_relative_eq!(compress(&y, 1).unwrap()[(0, 0)], 0.7);
}
