use landau_core::density::{cost_decomposition, mc_density, projection_sandwich, DensityConfig};
use landau_core::geometry::{exp_so, haar_sample, log_so, project_to_son, SkewMatrix};
use landau_core::linalg::{sym_eigen, Mat, Vector};
use landau_core::model::{collision_matrix, lambda_at, psi, GaussianFactor, InitialLaw};
use landau_core::rng::{stream, Substream};
use proptest::prelude::*;

fn skew(n: usize, coeffs: &[f64], max_norm: f64) -> SkewMatrix {
    let h = SkewMatrix::from_upper(n, &coeffs[..SkewMatrix::n_coeffs(n)]);
    let f = h.frobenius_norm();
    if f > max_norm {
        h.scale(max_norm / f)
    } else {
        h
    }
}

fn vec3() -> impl Strategy<Value = Vector> {
    prop::array::uniform3(-3.0f64..3.0).prop_map(|a| Vector::from_slice(&a))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn exp_lands_in_the_group(n in 2usize..=6, coeffs in prop::collection::vec(-2.0f64..2.0, 15)) {
        let r = exp_so(&skew(n, &coeffs, 6.0));
        prop_assert!(r.orthogonality_error() < 1e-12);
        prop_assert!(r.det_error() < 1e-12);
    }

    #[test]
    fn log_inverts_exp(n in 2usize..=6, coeffs in prop::collection::vec(-1.0f64..1.0, 15)) {
        // Frobenius norm 2.5 keeps every rotation angle below 2.5/√2.
        let h = skew(n, &coeffs, 2.5);
        let back = log_so(&exp_so(&h)).unwrap();
        prop_assert!(back.to_mat().max_abs_diff(&h.to_mat()) < 1e-9);
    }

    #[test]
    fn exp_of_negation_is_inverse(n in 2usize..=6, coeffs in prop::collection::vec(-2.0f64..2.0, 15)) {
        let h = skew(n, &coeffs, 8.0);
        let p = exp_so(&h).compose(&exp_so(&h.scale(-1.0)));
        prop_assert!(p.mat().max_abs_diff(&Mat::identity(n)) < 1e-12);
    }

    #[test]
    fn projection_fixes_rotations(n in 2usize..=6, seed in any::<u64>()) {
        let r = haar_sample(n, &mut stream(seed, 0, Substream::Aux));
        prop_assert!(r.orthogonality_error() < 1e-12);
        prop_assert!(project_to_son(r.mat()).unwrap().mat().max_abs_diff(r.mat()) < 1e-12);
    }

    #[test]
    fn projection_sandwich_holds(x0 in vec3(), v in vec3()) {
        prop_assume!(x0.norm() > 1e-6 && x0.norm() < v.norm());
        let (lo, mid, hi) = projection_sandwich(&x0, &v);
        prop_assert!(lo <= mid * (1.0 + 1e-12) + 1e-12);
        prop_assert!(mid <= hi * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn cost_is_symmetric_rotation_invariant_and_below_euclidean(
        x0 in vec3(), v in vec3(), t in 0.01f64..4.0, seed in any::<u64>()
    ) {
        let c = cost_decomposition(t, &x0, &v);
        let s = cost_decomposition(t, &v, &x0);
        let r = haar_sample(3, &mut stream(seed, 0, Substream::Aux));
        let rc = cost_decomposition(t, &r.apply(&x0), &r.apply(&v));
        let tol = 1e-9 * (1.0 + c.cost);
        prop_assert!(c.cost >= 0.0 && c.radial >= 0.0 && c.tangential >= 0.0);
        prop_assert!((c.cost - s.cost).abs() < tol && (c.delta_t - s.delta_t).abs() < 1e-12);
        prop_assert!((c.cost - rc.cost).abs() < tol);
        prop_assert!(c.cost <= (x0 - v).norm_sq() + tol);
        prop_assert!(c.delta_t > 0.0 && c.delta_t <= 1.0 / t.sqrt().min(1.0) + 1e-12);
        prop_assert!(cost_decomposition(t, &x0, &x0).cost < 1e-12);
    }

    #[test]
    fn collision_matrix_annihilates_its_argument(v in vec3()) {
        let a = collision_matrix(&v);
        prop_assert!((*a.mat() * v).norm() < 1e-12 * (1.0 + v.norm_sq() * v.norm()));
        let (ev, _) = sym_eigen(a.mat());
        prop_assert!(ev[0].abs() < 1e-10 * (1.0 + v.norm_sq()));
        prop_assert!((ev[1] - v.norm_sq()).abs() < 1e-10 * (1.0 + v.norm_sq()));
        prop_assert!((ev[2] - v.norm_sq()).abs() < 1e-10 * (1.0 + v.norm_sq()));
    }

    #[test]
    fn lambda_spectrum_lies_in_psi_band(
        w in prop::collection::vec(0.05f64..1.0, 4), energy in 0.1f64..5.0, t in 0.0f64..2.0
    ) {
        let total: f64 = w.iter().sum();
        let d: Vec<f64> = w.iter().map(|x| energy * x / total).collect();
        let law = InitialLaw::diagonal(&d).unwrap();
        let (ev, _) = sym_eigen(lambda_at(t, &law).mat());
        let lo = psi(4, t, law.lambda_bar());
        let hi = psi(4, t, law.lambda_under());
        for e in ev {
            prop_assert!(e / energy >= lo - 1e-10 && e / energy <= hi + 1e-10);
        }
    }

    #[test]
    fn gaussian_factor_matches_direct_formula(
        a in prop::collection::vec(-1.0f64..1.0, 9), y in vec3()
    ) {
        let b = Mat::from_row_slice(3, &a);
        let c = b.mul_transpose(&b) + Mat::identity(3).scale(0.1);
        let g = GaussianFactor::new(&c, 1e12).unwrap();
        let (ev, q) = sym_eigen(&c);
        let z = q.transpose_mul_vec(&y);
        let quad: f64 = (0..3).map(|i| z[i] * z[i] / ev[i]).sum();
        let det: f64 = ev.iter().product();
        let direct = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + det.ln() + quad);
        prop_assert!((g.log_density(&y) - direct).abs() < 1e-9 * (1.0 + direct.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn isotropic_density_is_rotation_equivariant(
        x0 in prop::array::uniform3(-1.0f64..1.0), dv in prop::array::uniform3(-0.6f64..0.6), seed in any::<u64>()
    ) {
        let law = InitialLaw::isotropic(3, 1.0);
        let dc = DensityConfig::new(4000, 0.01, seed % 1000);
        let x0 = Vector::from_slice(&x0);
        let v = x0 + Vector::from_slice(&dv);
        let r = haar_sample(3, &mut stream(seed, 1, Substream::Aux));
        let a = mc_density(&x0, &v, 0.5, &law, &dc).unwrap();
        let b = mc_density(&r.apply(&x0), &r.apply(&v), 0.5, &law, &DensityConfig::new(4000, 0.01, seed % 1000 + 1)).unwrap();
        let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        prop_assert!((a.value - b.value).abs() <= 4.0 * se, "{} vs {} (se {se})", a.value, b.value);
    }
}
