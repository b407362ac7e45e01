use isac_core::bfim::{
    bcrb_cov, beta_star_cov, data_fim_cov, fisher_cov, q_b_aoa, q_beta, saddle_objective, BetaMatrix, Scenario,
    NUM_PARAMS,
};
use isac_core::duality::{
    check_admissible_q, lambda_min, m_matrix_by_inverse, m_matrix_by_positive_vector, m_matrix_by_splitting,
};
use isac_core::maxmin::{aoa_scalarize, aoa_unscalarize};
use isac_core::model::{compute_moments, steering, steering_derivative, ArrayGeometry, SensingMoments, Side};
use isac_core::numerics::{
    de_embed, hermitian_eig, is_psd, max_abs_c, real_embed, trace_product, CMatrix, HermitianMatrix, RMatrix, C64,
};
use isac_core::random::{random_channels, random_psd, random_scenario};
use isac_core::sdr::extract_rank_one;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn instance(seed: u64, n: usize, k: usize) -> (Scenario, SensingMoments) {
    let s = random_scenario(&mut rng(seed), n, k);
    let m = compute_moments(&s.geometry, &s.alpha_prior, &s.theta_prior, 24).unwrap();
    (s, m)
}

fn random_hermitian(r: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
    HermitianMatrix::hermitian_part(&random_channels(r, n, n))
}

fn random_beta(r: &mut ChaCha8Rng) -> BetaMatrix {
    BetaMatrix(RMatrix::from_fn(NUM_PARAMS, NUM_PARAMS, |_, _| r.random_range(-1.0..1.0)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalarization_round_trips(b1 in -10.0..10.0f64, b2 in -10.0..10.0f64, b3 in 1e-3..10.0f64) {
        let (a, b) = aoa_scalarize([b1, b2, b3]).unwrap();
        let back = aoa_unscalarize(a, b);
        for (x, y) in back.iter().zip([b1, b2, b3]) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn scalarization_rejects_nonpositive_scale(b1 in -1.0..1.0f64, b3 in -10.0..=0.0f64) {
        prop_assert!(aoa_scalarize([b1, 0.0, b3]).is_err());
    }

    #[test]
    fn real_embedding_preserves_inner_products(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let f = random_hermitian(&mut r, n);
        let x = RMatrix::from_fn(2 * n, 2 * n, |_, _| r.random_range(-1.0..1.0));
        let x = (&x + x.transpose()) * 0.5;
        let lhs = real_embed(&f).component_mul(&x).sum();
        let rhs = 2.0 * f.trace_product(&de_embed(&x));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        let back = de_embed(&real_embed(&f));
        prop_assert!(max_abs_c(&(back.as_matrix() - f.as_matrix())) <= 1e-15);
    }

    #[test]
    fn real_embedding_doubles_the_spectrum(seed in any::<u64>(), n in 1usize..6) {
        let f = random_hermitian(&mut rng(seed), n);
        let mut ce: Vec<f64> = hermitian_eig(&f).values.iter().flat_map(|v| [*v, *v]).collect();
        let mut re: Vec<f64> = real_embed(&f).symmetric_eigenvalues().iter().copied().collect();
        ce.sort_by(f64::total_cmp);
        re.sort_by(f64::total_cmp);
        for (a, b) in ce.iter().zip(&re) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn steering_derivative_matches_central_differences(theta in -1.5..1.5f64, n in 1usize..24) {
        let g = ArrayGeometry::new(n, n).unwrap();
        let h = 1e-6;
        let fd = (steering(&g, theta + h, Side::Tx) - steering(&g, theta - h, Side::Tx)) / C64::from(2.0 * h);
        let d = steering_derivative(&g, theta, Side::Tx);
        let scale = d.camax().max(1.0);
        prop_assert!((fd - d).camax() <= 1e-6 * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn m_matrix_characterizations_agree(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let m = RMatrix::from_fn(n, n, |i, j| {
            if i == j { r.random_range(0.2..3.5) } else { -r.random_range(0.0..1.0) }
        });
        let by_inverse = m_matrix_by_inverse(&m);
        prop_assert_eq!(by_inverse, m_matrix_by_splitting(&m));
        prop_assert_eq!(by_inverse, m_matrix_by_positive_vector(&m).unwrap());
    }

    #[test]
    fn q_beta_carries_the_data_information(seed in any::<u64>(), n in 2usize..6, k in 1usize..3) {
        let (s, m) = instance(seed, n, k);
        let mut r = rng(seed ^ 0x9e37);
        let beta = random_beta(&mut r);
        let cov = random_psd(&mut r, n);
        let t = data_fim_cov(&cov, &m, &s);
        let lhs = q_beta(&beta, &m, &s).trace_product(&HermitianMatrix::hermitian_part(&cov));
        let rhs: f64 = (0..NUM_PARAMS).map(|l| {
            let b = beta.column(l);
            (b.transpose() * &t * &b)[(0, 0)]
        }).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn q_b_is_the_angle_column_of_q_beta(seed in any::<u64>(), a in 0.1..3.0f64, re in -2.0..2.0f64, im in -2.0..2.0f64) {
        let (s, m) = instance(seed, 4, 1);
        let b = C64::new(re, im);
        let mut beta = BetaMatrix::zeros();
        beta.0.set_column(2, &nalgebra::DVector::from_column_slice(&aoa_unscalarize(a, b)));
        let direct = q_beta(&beta, &m, &s);
        let scalar = q_b_aoa(b, &m).scale(a * a * s.prefactor());
        let err = max_abs_c(&(direct.as_matrix() - scalar.as_matrix()));
        prop_assert!(err <= 1e-10 * (1.0 + direct.max_abs()), "{err}");
    }

    #[test]
    fn optimal_beta_attains_the_bcrb(seed in any::<u64>(), n in 2usize..6, k in 1usize..3) {
        let (mut s, m) = instance(seed, n, k);
        let mut r = rng(seed ^ 0x51);
        s.weights = (0..NUM_PARAMS).map(|_| r.random_range(0.0..2.0)).collect();
        let cov = random_psd(&mut r, n);
        let j = fisher_cov(&cov, &m, &s).unwrap().j;
        let bound = bcrb_cov(&cov, &m, &s).unwrap();
        let star = beta_star_cov(&cov, &s, &m).unwrap();
        let at_star = saddle_objective(&star, &j, &s);
        prop_assert!((at_star - bound).abs() <= 1e-9 * (1.0 + bound.abs()));
        let other = random_beta(&mut r);
        prop_assert!(saddle_objective(&other, &j, &s) <= bound + 1e-9 * (1.0 + bound.abs()));
    }

    #[test]
    fn more_transmit_energy_never_hurts(seed in any::<u64>(), n in 2usize..6) {
        let (s, m) = instance(seed, n, 2);
        let mut r = rng(seed ^ 0x77);
        let cov = random_psd(&mut r, n);
        let extra = random_psd(&mut r, n);
        let base = bcrb_cov(&cov, &m, &s).unwrap();
        let more = bcrb_cov(&(&cov + &extra), &m, &s).unwrap();
        prop_assert!(more <= base * (1.0 + 1e-12));
    }

    #[test]
    fn rank_one_extraction_keeps_channel_gains(seed in any::<u64>(), n in 2usize..6, k in 1usize..4) {
        let s = random_scenario(&mut rng(seed), n, k);
        let mut r = rng(seed ^ 0x33);
        let covs: Vec<HermitianMatrix> =
            (0..k).map(|_| HermitianMatrix::hermitian_part(&random_psd(&mut r, n))).collect();
        let v = extract_rank_one(&covs, &s).unwrap();
        for u in 0..k {
            let h = s.channel(u);
            let vu = v.v.column(u).into_owned();
            let gain = h.dotc(&vu).norm_sqr();
            let target = covs[u].quad_form(&h);
            prop_assert!((gain - target).abs() <= 1e-10 * target);
            let gap = covs[u].sub(&HermitianMatrix::outer(&vu));
            prop_assert!(is_psd(&gap, 1e-9));
        }
    }

    #[test]
    fn rank_one_extraction_recovers_rank_one_inputs(seed in any::<u64>(), n in 2usize..6) {
        let s = random_scenario(&mut rng(seed), n, 1);
        let w = random_channels(&mut rng(seed ^ 0x44), n, 1).column(0).into_owned();
        let v = extract_rank_one(&[HermitianMatrix::outer(&w)], &s).unwrap();
        let vu = v.v.column(0).into_owned();
        let err = max_abs_c(&(&vu * vu.adjoint() - &w * w.adjoint()));
        prop_assert!(err <= 1e-10 * w.norm_squared());
    }

    #[test]
    fn covariance_is_basis_invariant(seed in any::<u64>(), n in 2usize..6, k in 1usize..4) {
        let (s, m) = instance(seed, n, k);
        let mut r = rng(seed ^ 0x21);
        let v = random_channels(&mut r, n, k);
        let q = random_channels(&mut r, k, k).qr().q();
        let vq = &v * &q;
        let a = bcrb_cov(&(&v * v.adjoint()), &m, &s).unwrap();
        let b = bcrb_cov(&(&vq * vq.adjoint()), &m, &s).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
        let tr: C64 = trace_product(&(&v * v.adjoint()), &CMatrix::identity(n, n));
        prop_assert!((tr.re - v.norm_squared()).abs() <= 1e-10 * tr.re);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn admissible_set_is_a_half_line_above_lambda_min(seed in any::<u64>()) {
        let (s, m) = instance(seed, 3, 2);
        let q = q_b_aoa(C64::new(0.3, 1.0), &m).scale(s.prefactor());
        let rho = hermitian_eig(&q).max();
        let tol = 1e-7 * rho.abs().max(1.0);
        let lmin = lambda_min(&q, &s, tol).unwrap();
        prop_assert!(lmin <= rho + tol);
        prop_assert!(check_admissible_q(lmin, &q, &s, 1e-10).unwrap().is_admissible());
        prop_assert!(check_admissible_q(lmin + 0.5 * (rho - lmin).abs() + 10.0 * tol, &q, &s, 1e-10).unwrap().is_admissible());
        prop_assert!(!check_admissible_q(lmin - 10.0 * tol, &q, &s, 1e-10).unwrap().is_admissible());
    }
}
