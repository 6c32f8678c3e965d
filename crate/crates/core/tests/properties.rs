//! Cross-module properties checked against oracles written directly in
//! test code (dense formulas, finite differences, dense decompositions).

use increpr::certificate::{check_certificate, s_apply};
use increpr::increpr::{rank_one_extract, Rank1Method};
use increpr::linalg::{hermitian_eigh, CMat, C64};
use increpr::measurement::{make_gaussian_ensemble, random_factor, random_signal, ComplexFactor, ScalarField};
use increpr::metrics::{add_gaussian_noise, relerr_phase};
use increpr::objective::{gradient, hessian_vec, value, ObjectiveSpec};
use proptest::prelude::*;

fn field_of(complex: bool) -> ScalarField {
    if complex {
        ScalarField::Complex
    } else {
        ScalarField::Real
    }
}

/// Least-squares objective straight from the measurement rows.
fn ls_oracle(rows: &CMat, b: &[f64], y: &CMat, lambda: f64) -> f64 {
    let m = rows.nrows();
    let mut acc = 0.0;
    for i in 0..m {
        let mut t = 0.0;
        for j in 0..y.ncols() {
            let mut z = C64::new(0.0, 0.0);
            for k in 0..y.nrows() {
                z += rows[(i, k)].conj() * y[(k, j)];
            }
            t += z.norm_sqr();
        }
        acc += (t - b[i]).powi(2);
    }
    acc / (2.0 * m as f64) + lambda * y.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn least_squares_value_matches_row_formula(
        n in 2usize..8, extra in 0usize..20, p in 1usize..4, complex in any::<bool>(),
        lambda in prop_oneof![Just(0.0), Just(0.5), Just(100.0)], seed in 0u64..1000,
    ) {
        let field = field_of(complex);
        let p = p.min(n);
        let m = 2 * n + extra;
        let x = random_signal(n, field, seed);
        let ens = make_gaussian_ensemble(n, m, field, seed + 1).unwrap().with_planted(&x).unwrap();
        let y = random_factor(n, p, field, seed + 2).unwrap();
        let got = value(&ObjectiveSpec::least_squares(lambda), &ens, y.matrix()).unwrap();
        let want = ls_oracle(&ens.dense_rows(), ens.b(), y.matrix(), lambda);
        prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn hessian_vec_is_symmetric(
        n in 2usize..7, p in 1usize..3, complex in any::<bool>(), poisson in any::<bool>(), seed in 0u64..1000,
    ) {
        let field = field_of(complex);
        let x = random_signal(n, field, seed);
        let ens = make_gaussian_ensemble(n, 4 * n, field, seed + 5).unwrap().with_planted(&x).unwrap();
        let spec = if poisson { ObjectiveSpec::poisson(0.5, &ens) } else { ObjectiveSpec::least_squares(0.5) };
        let y = random_factor(n, p, field, seed + 6).unwrap();
        let u = random_factor(n, p, field, seed + 7).unwrap();
        let v = random_factor(n, p, field, seed + 8).unwrap();
        let hu = hessian_vec(&spec, &ens, y.matrix(), u.matrix()).unwrap();
        let hv = hessian_vec(&spec, &ens, y.matrix(), v.matrix()).unwrap();
        let a = increpr::linalg::re_inner(&hu, v.matrix());
        let b = increpr::linalg::re_inner(u.matrix(), &hv);
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0));
    }

    #[test]
    fn adjoint_identity_holds(n in 2usize..8, m in 3usize..30, complex in any::<bool>(), seed in 0u64..1000) {
        // <A(Y Y*), w> = <Y, A*(w) Y> for any weights w
        let field = field_of(complex);
        let ens = make_gaussian_ensemble(n, m, field, seed).unwrap();
        let y = random_factor(n, 2, field, seed + 1).unwrap();
        let w: Vec<f64> = random_signal(m, ScalarField::Real, seed + 2).iter().map(|z| z.re).collect();
        let t = ens.forward_intensity(y.matrix()).unwrap();
        let lhs: f64 = t.iter().zip(&w).map(|(a, b)| a * b).sum();
        let ay = ens.adjoint_weighted_apply(&w, y.matrix()).unwrap();
        let rhs = increpr::linalg::re_inner(y.matrix(), &ay);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn padding_preserves_gradient_norm(n in 3usize..8, p in 1usize..3, complex in any::<bool>(), seed in 0u64..500) {
        let field = field_of(complex);
        let x = random_signal(n, field, seed);
        let ens = make_gaussian_ensemble(n, 5 * n, field, seed + 1).unwrap().with_planted(&x).unwrap();
        let spec = ObjectiveSpec::least_squares(0.3);
        let y = random_factor(n, p, field, seed + 2).unwrap();
        let padded = y.pad_zero_column().unwrap();
        let g = gradient(&spec, &ens, y.matrix()).unwrap();
        let gp = gradient(&spec, &ens, padded.matrix()).unwrap();
        prop_assert!((frob(&g) - frob(&gp)).abs() <= 1e-12 * frob(&g).max(1.0));
        prop_assert!(gp.column(p).iter().all(|z| z.norm() == 0.0));
        let f = value(&spec, &ens, y.matrix()).unwrap();
        let fp = value(&spec, &ens, padded.matrix()).unwrap();
        prop_assert!((f - fp).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn certificate_operator_is_gradient_over_y(n in 3usize..8, complex in any::<bool>(), seed in 0u64..500) {
        // G = 2 S Y, column by column
        let field = field_of(complex);
        let x = random_signal(n, field, seed);
        let ens = make_gaussian_ensemble(n, 4 * n, field, seed + 1).unwrap().with_planted(&x).unwrap();
        let spec = ObjectiveSpec::least_squares(0.7);
        let y = random_factor(n, 2, field, seed + 2).unwrap();
        let g = gradient(&spec, &ens, y.matrix()).unwrap();
        for j in 0..2 {
            let sy = s_apply(&spec, &ens, y.matrix(), &y.column(j)).unwrap();
            for k in 0..n {
                prop_assert!((g[(k, j)] - sy[k] * 2.0).norm() <= 1e-9 * frob(&g).max(1.0));
            }
        }
    }

    #[test]
    fn certificate_eigenvalue_matches_dense(n in 3usize..10, complex in any::<bool>(), seed in 0u64..500) {
        let field = field_of(complex);
        let x = random_signal(n, field, seed);
        let ens = make_gaussian_ensemble(n, 3 * n, field, seed + 1).unwrap().with_planted(&x).unwrap();
        let spec = ObjectiveSpec::least_squares(0.1);
        let y = random_factor(n, 1, field, seed + 2).unwrap();
        let mut s = CMat::zeros(n, n);
        for k in 0..n {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[k] = C64::new(1.0, 0.0);
            let col = s_apply(&spec, &ens, y.matrix(), &e).unwrap();
            for r in 0..n {
                s[(r, k)] = col[r];
            }
        }
        let (vals, _) = hermitian_eigh(&s);
        let dense_min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let cert = check_certificate(&spec, &ens, y.matrix(), 0.0).unwrap();
        prop_assert!(cert.converged);
        prop_assert!((cert.nu_min - dense_min).abs() <= 1e-6 * dense_min.abs().max(1.0));
    }

    #[test]
    fn svd_extraction_is_best_rank_one(n in 2usize..9, p in 1usize..4, complex in any::<bool>(), seed in 0u64..1000) {
        let field = field_of(complex);
        let p = p.min(n);
        let y = random_factor(n, p, field, seed).unwrap();
        let r = rank_one_extract(&y, Rank1Method::Svd);
        let sig = r.signal;
        // the optimal w for a fixed vector is Y* y / |y|^2; the residual
        // must equal the dense tail sum of squared singular values
        let ym = y.matrix();
        let s2: f64 = sig.iter().map(|z| z.norm_sqr()).sum();
        let mut resid = 0.0;
        for j in 0..p {
            let mut c = C64::new(0.0, 0.0);
            for k in 0..n {
                c += sig[k].conj() * ym[(k, j)];
            }
            let w = c / s2;
            for k in 0..n {
                resid += (ym[(k, j)] - sig[k] * w).norm_sqr();
            }
        }
        let gram = ym.adjoint() * ym;
        let (vals, _) = hermitian_eigh(&gram);
        let top = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tail: f64 = vals.iter().sum::<f64>() - top;
        prop_assert!((resid - tail).abs() <= 1e-9 * frob(ym).powi(2).max(1.0), "{resid} vs {tail}");
        prop_assert!((s2 - top).abs() <= 1e-9 * top.max(1.0));
    }

    #[test]
    fn relerr_ignores_global_phase(n in 1usize..20, theta in 0.0f64..6.3, seed in 0u64..1000) {
        let x = random_signal(n, ScalarField::Complex, seed);
        let rot: Vec<C64> = x.iter().map(|z| z * C64::from_polar(1.0, theta)).collect();
        prop_assert!(relerr_phase(&rot, &x).unwrap() < 1e-12);
    }

    #[test]
    fn relerr_matches_phase_grid_minimum(n in 1usize..8, seed in 0u64..500) {
        let x = random_signal(n, ScalarField::Complex, seed);
        let t = random_signal(n, ScalarField::Complex, seed + 1);
        let tn: f64 = t.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let grid = (0..4096).map(|k| {
            let c = C64::from_polar(1.0, k as f64 * std::f64::consts::TAU / 4096.0);
            x.iter().zip(&t).map(|(a, b)| (a * c - b).norm_sqr()).sum::<f64>().sqrt() / tn
        }).fold(f64::INFINITY, f64::min);
        let got = relerr_phase(&x, &t).unwrap();
        // squared error is a cosine in the phase, so the grid point nearest the
        // optimum is off by at most 2 |<x,t>| (1 - cos(half spacing)) / |t|^2
        let xn: f64 = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let slack = 2.0 * xn / tn * (1.0 - (std::f64::consts::PI / 4096.0).cos()) + 1e-12;
        prop_assert!(got <= grid + 1e-12 && grid * grid - got * got <= slack);
    }

    #[test]
    fn noise_hits_requested_snr(snr in 0.0f64..60.0, seed in 0u64..1000) {
        let b: Vec<f64> = (0..200).map(|k| 1.0 + (k % 13) as f64).collect();
        let noisy = add_gaussian_noise(&b, snr, seed, false).unwrap();
        let sig: f64 = b.iter().map(|v| v * v).sum();
        let err: f64 = b.iter().zip(&noisy.b).map(|(a, c)| (a - c).powi(2)).sum();
        prop_assert!((10.0 * (sig / err).log10() - snr).abs() < 1e-9);
    }

    #[test]
    fn factor_round_trips_through_file(n in 1usize..6, p in 1usize..3, complex in any::<bool>(), seed in 0u64..200) {
        let field = field_of(complex);
        let p = p.min(n);
        let y = random_factor(n, p, field, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.txt");
        increpr::measurement::save_factor(y.matrix(), field, &path).unwrap();
        let (f2, y2) = increpr::measurement::load_factor(&path).unwrap();
        prop_assert_eq!(f2, field);
        prop_assert_eq!(y2.matrix(), y.matrix());
    }
}

#[test]
fn max_norm_column_and_svd_agree_on_padded_vector() {
    let x = random_signal(6, ScalarField::Complex, 3);
    let y = ComplexFactor::from_vector(&x).unwrap().pad_zero_column().unwrap();
    for method in [Rank1Method::Svd, Rank1Method::MaxNormColumn] {
        let r = rank_one_extract(&y, method);
        assert!(!r.zero_factor);
        for (a, b) in r.signal.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12, "{method:?}");
        }
    }
}
