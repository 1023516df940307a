mod common;

use proptest::prelude::*;
use smp_control::benchmark::benchmark_vertex_set;
use smp_control::expansion::{block_moment_matrices, FeedbackGain};
use smp_control::stability::build_s_cmi;
use smp_control::synthesis::*;
use smp_control::tensor::{block_diag, kron, vec, Matrix, Vector};

use common::max_abs;

fn stack(h: &Matrix, l: &Matrix) -> Vector {
    let (vh, vl) = (vec(h), vec(l));
    Vector::from_iterator(vh.len() + vl.len(), vh.iter().chain(vl.iter()).copied())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn block_maps_are_kronecker_products(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=2) {
        let mut r = common::rng(seed);
        let h = common::gaussian_matrix(&mut r, n, n);
        let l = common::gaussian_matrix(&mut r, m, n);
        let x = stack(&h, &l);
        let maps = block_maps(&(&x * x.transpose()), n, m).unwrap();
        prop_assert!(max_abs(&(maps.hh - kron(&h, &h))) < 1e-12);
        prop_assert!(max_abs(&(maps.hl - kron(&h, &l))) < 1e-12);
        prop_assert!(max_abs(&(maps.lh - kron(&l, &h))) < 1e-12);
        prop_assert!(max_abs(&(maps.ll - kron(&l, &l))) < 1e-12);
    }

    #[test]
    fn lmi_equals_qmi_at_rank_one(seed in any::<u64>()) {
        let e = block_moment_matrices(&benchmark_vertex_set());
        let mut r = common::rng(seed);
        let h = common::gaussian_matrix(&mut r, 2, 2);
        let l = common::gaussian_matrix(&mut r, 1, 2);
        let q = common::random_psd(&mut r, 3, 3);
        let x = stack(&h, &l);
        let z = &x * x.transpose();
        for k in [0, 4, 8] {
            let lmi = build_s_lmi(&e, k, &q, &z, 0.97).unwrap();
            let qmi = build_s_qmi(&e, k, &q, &h, &l, 0.97).unwrap();
            prop_assert!(max_abs(&(&lmi - &qmi)) <= 1e-10 * (1.0 + max_abs(&qmi)));
        }
    }

    #[test]
    fn qmi_is_congruent_to_cmi(seed in any::<u64>()) {
        let e = block_moment_matrices(&benchmark_vertex_set());
        let mut r = common::rng(seed);
        let h = common::well_conditioned(&mut r, 2);
        let l = common::gaussian_matrix(&mut r, 1, 2);
        let q = common::random_psd(&mut r, 3, 3) + Matrix::identity(3, 3) * 0.1;
        let gain = FeedbackGain::new(&l * h.clone().try_inverse().unwrap()).unwrap();
        let g = congruence_g(&h).unwrap();
        let p = g.transpose() * &q * &g;
        let t = block_diag(&g, &g);
        for k in 0..e.vertex_count() {
            let qmi = build_s_qmi(&e, k, &q, &h, &l, 0.9).unwrap();
            let cmi = build_s_cmi(&e, k, &p, &g, &gain, 0.9).unwrap();
            let lhs = t.transpose() * qmi * &t;
            prop_assert!(max_abs(&(&lhs - &cmi)) <= 1e-8 * (1.0 + max_abs(&cmi)));
        }
    }

    #[test]
    fn rank_one_factor_recovers_gain_up_to_sign(seed in any::<u64>(), flip in any::<bool>()) {
        let mut r = common::rng(seed);
        let h = common::well_conditioned(&mut r, 2);
        let l = common::gaussian_matrix(&mut r, 1, 2);
        let k_true = &l * h.clone().try_inverse().unwrap();
        let x = if flip { -stack(&h, &l) } else { stack(&h, &l) };
        let f = rank_one_extract(&(&x * x.transpose()), 2, 1).unwrap();
        let k = recover_gain(&f.h, &f.l, 1e12).unwrap();
        prop_assert!(max_abs(&(k.matrix() - &k_true)) <= 1e-8 * (1.0 + max_abs(&k_true)));
        prop_assert!(f.quality < 1e-10);
    }
}

#[test]
fn epsilon_hat_bounds_epsilon_over_random_pairs() {
    let mut r = common::rng(2024);
    let mut worst_self: f64 = 0.0;
    let mut worst_gap = f64::INFINITY;
    for i in 0..1000 {
        let n = 2 + i % 5;
        let z = common::random_psd(&mut r, n, 1 + i % n);
        let zp = common::random_psd(&mut r, n, 1 + (i / 3) % n);
        let eps = epsilon(&z).unwrap();
        worst_self = worst_self.max((epsilon_hat(&z, &z).unwrap() - eps).abs());
        worst_gap = worst_gap.min(epsilon_hat(&z, &zp).unwrap() - eps);
    }
    assert!(worst_self <= 1e-10, "ε̂(Z,Z) differs from ε(Z) by {worst_self:e}");
    assert!(worst_gap >= -1e-10, "ε̂(Z,Z′) undercuts ε(Z) by {worst_gap:e}");
}
