use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use waveir::dwt::{reconstruct_image, ImageStack, WaveletSpec};
use waveir::estimators::{center_columns, fit, kkt_violation, fit_net_design, Basis, Dataset, EstimatorConfig, Method, NetOptions, Transform};
use waveir::glm::{fit_glm, Family};
use waveir::inference::{add_one_p_value, pearson, permutation, pseudo_predictor_design};
use waveir::modelsel::make_folds;
use waveir::simulate::{CoefficientImageKind, CoefficientImageSpec};

fn matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
}

fn with_intercept(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Array2<f64> {
    let mut t = matrix(rng, n, extra + 1);
    t.column_mut(0).fill(1.0);
    t
}

fn image_data(seed: u64, n: usize, side: usize, family: Family) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = matrix(&mut rng, n, side * side);
    let t = with_intercept(&mut rng, n, 1);
    let eta = Array1::from_iter((0..n).map(|i| 2.0 * x[[i, 0]] - x[[i, 5]] + 0.5 * t[[i, 1]]));
    let y = match family {
        Family::GaussianIdentity => eta.mapv(|e| e + 0.3 * (rng.random::<f64>() - 0.5)),
        Family::BinomialLogit => eta.mapv(|e| f64::from(rng.random::<f64>() < waveir::glm::expit(e))),
    };
    Dataset::new(y, t, ImageStack::new(x, vec![side, side]).unwrap(), family).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gaussian_glm_deviance_is_rss(seed in any::<u64>(), n in 8usize..40, q in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = with_intercept(&mut rng, n, q - 1);
        let y = Array1::from_iter((0..n).map(|_| rng.random::<f64>() * 4.0));
        let f = fit_glm(x.view(), y.view(), Family::GaussianIdentity).unwrap();
        let rss: f64 = (&y - &x.dot(&f.coefficients)).mapv(|r| r * r).sum();
        prop_assert!((f.deviance - rss).abs() <= 1e-10 * (1.0 + rss));
    }

    #[test]
    fn logistic_means_stay_inside_unit_interval(seed in any::<u64>(), n in 10usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = with_intercept(&mut rng, n, 2);
        let y = Array1::from_iter((0..n).map(|i| f64::from(i % 3 == 0)));
        let f = fit_glm(x.view(), y.view(), Family::BinomialLogit).unwrap();
        prop_assert!(f.fitted_means.iter().all(|&m| m > 0.0 && m < 1.0));
    }

    #[test]
    fn centred_columns_have_zero_mean(seed in any::<u64>(), n in 1usize..30, p in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = matrix(&mut rng, n, p).mapv(|v| v * 100.0 + 7.0);
        let (c, means) = center_columns(x.view());
        for j in 0..p {
            prop_assert!(c.column(j).sum().abs() / n as f64 <= 1e-12 * 100.0);
            prop_assert!((means[j] - x.column(j).mean().unwrap()).abs() <= 1e-12 * 100.0);
        }
    }

    #[test]
    fn folds_partition_with_balanced_sizes(n in 2usize..80, k in 2usize..10, reps in 1usize..4, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let folds = make_folds(n, k, reps, seed).unwrap();
        prop_assert_eq!(folds.len(), reps);
        for rep in &folds {
            prop_assert_eq!(rep.len(), k);
            let mut all: Vec<usize> = rep.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let sizes: Vec<usize> = rep.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(make_folds(n, k, reps, seed).unwrap(), folds);
    }

    #[test]
    fn add_one_p_value_formula(observed in -5.0f64..5.0, null in proptest::collection::vec(-5.0f64..5.0, 1..60)) {
        let p = add_one_p_value(observed, &null);
        let count = null.iter().filter(|&&s| s <= observed).count();
        prop_assert_eq!(p, (1 + count) as f64 / (null.len() + 1) as f64);
        prop_assert!(p > 0.0 && p <= 1.0);
    }

    #[test]
    fn pseudo_predictor_matches_dense_formula(seed in any::<u64>(), n in 5usize..16, q in 1usize..4, p in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = with_intercept(&mut rng, n, q - 1);
        let x = matrix(&mut rng, n, p);
        let perm = permutation(n, seed, 0);
        let got = pseudo_predictor_design(t.view(), x.view(), &perm).unwrap();
        // dense oracle: T (T'T)^-1 T' X + Pi (X - T (T'T)^-1 T' X) with the inverse by Gauss-Jordan
        let gram = t.t().dot(&t);
        let inv = gauss_jordan_inverse(&gram);
        let fitted = t.dot(&inv).dot(&t.t()).dot(&x);
        let resid = &x - &fitted;
        for i in 0..n {
            for j in 0..p {
                let expect = fitted[[i, j]] + resid[[perm[i], j]];
                prop_assert!((got[[i, j]] - expect).abs() <= 1e-10);
            }
        }
        let identity: Vec<usize> = (0..n).collect();
        prop_assert_eq!(pseudo_predictor_design(t.view(), x.view(), &identity).unwrap(), x);
    }

    #[test]
    fn correlation_interval_contains_estimate(seed in any::<u64>(), n in 4usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array1::from_iter((0..n).map(|_| rng.random::<f64>()));
        let b = Array1::from_iter(a.iter().map(|v| v * rng.random::<f64>() + rng.random::<f64>()));
        if let Some(c) = pearson(a.view(), b.view(), 0.95) {
            prop_assert!((-1.0..=1.0).contains(&c.r));
            prop_assert!(c.lower <= c.r && c.r <= c.upper);
            prop_assert!(c.p_value >= 0.0 && c.p_value <= 1.0);
        }
    }

    #[test]
    fn coefficient_images_are_finite_and_block_is_binary(side in 4usize..40) {
        for kind in [CoefficientImageKind::GaussDiff, CoefficientImageKind::Bumps2d, CoefficientImageKind::Block] {
            let img = CoefficientImageSpec { kind, shape: vec![side, side], scale: 1.0 }.generate().unwrap();
            prop_assert_eq!(img.len(), side * side);
            prop_assert!(img.iter().all(|v| v.is_finite()));
            if kind == CoefficientImageKind::Block {
                prop_assert!(img.iter().all(|&v| v == 0.0 || v == 1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn net_satisfies_kkt_and_support_is_selected(seed in any::<u64>(), alpha in 0.05f64..1.0, frac in 0.02f64..0.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, p) = (40, 60);
        let x = matrix(&mut rng, n, p);
        let t = with_intercept(&mut rng, n, 2);
        let y = Array1::from_iter((0..n).map(|i| x[[i, 1]] * 3.0 - x[[i, 7]] + rng.random::<f64>()));
        let lmax = waveir::estimators::lambda_max(x.view(), t.view(), y.view(), Family::GaussianIdentity, alpha).unwrap();
        let lambda = lmax * frac;
        let f = fit_net_design(x.view(), t.view(), y.view(), Family::GaussianIdentity, alpha, lambda, &NetOptions::default()).unwrap();
        prop_assert!(f.converged);
        prop_assert!(kkt_violation(x.view(), t.view(), y.view(), &f, alpha, lambda) <= 1e-6);
        let support: Vec<usize> = (0..p).filter(|&j| f.beta_tilde[j] != 0.0).collect();
        prop_assert_eq!(support, f.selected.clone());
    }

    #[test]
    fn fitted_image_is_inverse_transform_of_coefficients(seed in any::<u64>(), which in 0usize..3, binomial in any::<bool>()) {
        let family = if binomial { Family::BinomialLogit } else { Family::GaussianIdentity };
        let d = image_data(seed, 40, 8, family);
        let spec = WaveletSpec::haar(1);
        let method = match which {
            0 => Method::Pcr { c: 20, m: 3 },
            1 => Method::Pls { c: 20, m: 3 },
            _ => Method::Net { alpha: 0.5, lambda: 0.05 },
        };
        let f = fit(&d, &EstimatorConfig::new(method, Transform::Wavelet(spec))).unwrap();
        let Basis::Wavelet { layout, padding, spec: s } = &f.basis else {
            panic!("wavelet basis expected");
        };
        let img = reconstruct_image(f.beta_tilde.view(), layout, padding, s).unwrap();
        prop_assert_eq!(&img, &f.beta_image);
        let support = f.support();
        match which {
            2 => prop_assert_eq!(support, f.selected.clone()),
            _ => prop_assert!(support.iter().all(|j| f.selected.contains(j))),
        }
    }
}

fn gauss_jordan_inverse(a: &Array2<f64>) -> Array2<f64> {
    let k = a.nrows();
    let mut m = Array2::zeros((k, 2 * k));
    for i in 0..k {
        for j in 0..k {
            m[[i, j]] = a[[i, j]];
        }
        m[[i, k + i]] = 1.0;
    }
    for c in 0..k {
        let piv = (c..k).max_by(|&r, &s| m[[r, c]].abs().total_cmp(&m[[s, c]].abs())).unwrap();
        for j in 0..2 * k {
            m.swap([c, j], [piv, j]);
        }
        let d = m[[c, c]];
        for j in 0..2 * k {
            m[[c, j]] /= d;
        }
        for r in 0..k {
            if r != c {
                let f = m[[r, c]];
                for j in 0..2 * k {
                    m[[r, j]] -= f * m[[c, j]];
                }
            }
        }
    }
    m.slice(ndarray::s![.., k..]).to_owned()
}
