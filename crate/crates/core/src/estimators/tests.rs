use super::*;
use crate::dwt::WaveletSpec;
use crate::glm::fit_glm;
use crate::linalg::Qr;
use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

fn covariates(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut t = gauss(n, extra + 1, rng);
    t.column_mut(0).fill(1.0);
    t
}

fn flat_data(x: Array2<f64>, t: Array2<f64>, y: Array1<f64>, family: Family) -> Dataset<f64> {
    let p = x.ncols();
    Dataset::new(y, t, ImageStack::new(x, vec![p]).unwrap(), family).unwrap()
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Array2<f64>, mut b: Array1<f64>) -> Array1<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[[i, k]].abs().partial_cmp(&a[[j, k]].abs()).unwrap()).unwrap();
        for j in 0..n {
            a.swap([k, j], [p, j]);
        }
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[[i, k]] / a[[k, k]];
            for j in k..n {
                a[[i, j]] -= f * a[[k, j]];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[[i, j]] * x[j]).sum();
        x[i] = (b[i] - s) / a[[i, i]];
    }
    x
}

fn max_abs_diff(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn identity(method: Method) -> EstimatorConfig {
    EstimatorConfig::new(method, Transform::Identity)
}

#[test]
fn pcr_full_rank_matches_min_norm_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, p) = (30, 50);
    let x = gauss(n, p, &mut rng);
    let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let t = Array2::ones((n, 1));
    let data = flat_data(x.clone(), t, y.clone(), Family::GaussianIdentity);
    let fit = fit(&data, &identity(Method::Pcr { c: p, m: n - 1 })).unwrap();

    // beta = Xc' a with (Xc Xc' + 11') a = y - ybar
    let (xc, _) = center_columns(x.view());
    let ybar = y.mean().unwrap();
    let g = xc.dot(&xc.t()) + Array2::<f64>::ones((n, n));
    let a = solve(g, y.mapv(|v| v - ybar));
    let want = xc.t().dot(&a);
    assert!(max_abs_diff(&fit.beta_tilde, &want) < 1e-8);
    assert!(fit.beta_image.shape() == [p]);
}

#[test]
fn pcr_rejects_rank_overflow() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = gauss(12, 3, &mut rng);
    let mix = gauss(3, 8, &mut rng);
    let x = base.dot(&mix);
    let y = Array1::from_iter((0..12).map(|i| i as f64));
    let err = fit_pcr_design(x.view(), Array2::ones((12, 1)).view(), y.view(), Family::GaussianIdentity, 8, 5);
    assert!(matches!(err, Err(Error::RankExceeded { requested: 5, rank: 3 })));
}

#[test]
fn pcr_exact_null_signal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 25;
    let t = covariates(n, 1, &mut rng);
    let y = t.dot(&ndarray::array![1.5, -2.0]);
    let data = flat_data(gauss(n, 40, &mut rng), t, y, Family::GaussianIdentity);
    let fit = fit(&data, &identity(Method::Pcr { c: 10, m: 3 })).unwrap();
    assert!(fit.beta_tilde.iter().all(|v| v.abs() < 1e-8));
    assert!((fit.delta[0] - 1.5).abs() < 1e-8 && (fit.delta[1] + 2.0).abs() < 1e-8);
}

#[test]
fn wavelet_fit_equals_identity_fit_on_transformed_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 20;
    let images = ImageStack::new(gauss(n, 256, &mut rng), vec![16, 16]).unwrap();
    let spec = WaveletSpec::least_asymmetric(4, 1).unwrap();
    let t = covariates(n, 1, &mut rng);
    let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let data = Dataset::new(y.clone(), t.clone(), images.clone(), Family::GaussianIdentity).unwrap();
    let xw = dwt_stack(&images, &spec).unwrap().matrix;
    let pre = Dataset::new(y, t, ImageStack::new(xw, vec![16, 16]).unwrap(), Family::GaussianIdentity).unwrap();
    for method in [Method::Pcr { c: 40, m: 5 }, Method::Pls { c: 40, m: 3 }, Method::Net { alpha: 0.5, lambda: 0.05 }] {
        let wfit = fit(&data, &EstimatorConfig::new(method, Transform::Wavelet(spec))).unwrap();
        let vfit = fit(&pre, &identity(method)).unwrap();
        assert!(max_abs_diff(&wfit.beta_tilde, &vfit.beta_tilde) < 1e-9, "{method:?}");
        let back = wfit.basis.image(vfit.beta_tilde.view()).unwrap();
        let diff = (&back - &wfit.beta_image).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff < 1e-9);
    }
}

#[test]
fn pls_first_direction_is_normalised_cross_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (xc, _) = center_columns(gauss(15, 6, &mut rng).view());
    let y = Array1::from_iter((0..15).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let r = pls_components(xc.view(), y.view(), 1).unwrap();
    let ybar = y.mean().unwrap();
    let mut s = Array1::<f64>::zeros(6);
    for j in 0..6 {
        s[j] = (0..15).map(|i| xc[[i, j]] * (y[i] - ybar)).sum();
    }
    let s = &s / s.dot(&s).sqrt();
    assert!(max_abs_diff(&r.column(0).to_owned(), &s) < 1e-12);
}

#[test]
fn pls_degenerate_without_signal() {
    let x: Array2<f64> = ndarray::array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let y = ndarray::array![1.0, 1.0, 1.0, 1.0];
    assert!(matches!(
        pls_components(x.view(), y.view(), 1),
        Err(Error::DegenerateDirection { component: 1 })
    ));
}

#[test]
fn pls_scores_are_orthogonal_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gauss(20, 3, &mut rng).dot(&gauss(3, 9, &mut rng));
    let (xc, _) = center_columns(x.view());
    let y = Array1::from_iter((0..20).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let r = pls_components(xc.view(), y.view(), 3).unwrap();
    let scores = xc.dot(&r);
    let gram = scores.t().dot(&scores);
    assert!(gram[[0, 1]].abs() <= 1e-8 && gram[[0, 2]].abs() <= 1e-8 && gram[[1, 2]].abs() <= 1e-8);
    for j in 0..3 {
        assert!((r.column(j).dot(&r.column(j)) - 1.0).abs() < 1e-12);
        assert!(scores.column(j).dot(&y) >= 0.0);
    }
    assert!(pls_components(xc.view(), y.view(), 4).is_err());
}

#[test]
fn full_pcr_and_pls_reproduce_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, p) = (30, 12);
    let x = gauss(n, p, &mut rng);
    let t = covariates(n, 1, &mut rng);
    let y = Array1::from_iter((0..n).map(|i| x[[i, 0]] - 0.5 * x[[i, 3]] + rng.sample::<f64, _>(StandardNormal)));
    let data = flat_data(x.clone(), t.clone(), y.clone(), Family::GaussianIdentity);
    let (xc, _) = center_columns(x.view());
    let mut full = Array2::zeros((n, 2 + p));
    full.slice_mut(s![.., ..2]).assign(&t);
    full.slice_mut(s![.., 2..]).assign(&xc);
    let ls = fit_glm(full.view(), y.view(), Family::GaussianIdentity).unwrap();
    let pcr = fit(&data, &identity(Method::Pcr { c: p, m: p })).unwrap();
    let pls = fit(&data, &identity(Method::Pls { c: p, m: p })).unwrap();
    let ls_beta = ls.coefficients.slice(s![2..]).to_owned();
    assert!(max_abs_diff(&pcr.beta_tilde, &ls_beta) < 1e-6);
    assert!(max_abs_diff(&pls.beta_tilde, &ls_beta) < 1e-6);
    assert!(max_abs_diff(&pcr.delta, &pls.delta) < 1e-6);
}

#[test]
fn pls_support_and_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 40;
    let x = gauss(n, 30, &mut rng);
    let y = Array1::from_iter((0..n).map(|i| if x[[i, 2]] + 0.3 * rng.sample::<f64, _>(StandardNormal) > 0.0 { 1.0 } else { 0.0 }));
    let data = flat_data(x, Array2::ones((n, 1)), y, Family::BinomialLogit);
    let a = fit(&data, &identity(Method::Pls { c: 10, m: 2 })).unwrap();
    let b = fit(&data, &identity(Method::Pls { c: 10, m: 2 })).unwrap();
    assert_eq!(a, b);
    assert!(a.support().len() <= 10);
    let one = fit(&data, &identity(Method::Pls { c: 1, m: 1 })).unwrap();
    assert_eq!(one.support().len(), 1);
    assert_eq!(one.selected, one.support());
}

#[test]
fn net_above_lambda_max_is_null_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 40;
    let x = gauss(n, 25, &mut rng);
    let t = covariates(n, 2, &mut rng);
    for family in [Family::GaussianIdentity, Family::BinomialLogit] {
        let y = Array1::from_iter((0..n).map(|i| match family {
            Family::GaussianIdentity => x[[i, 0]] + t[[i, 1]],
            Family::BinomialLogit => f64::from(x[[i, 0]] + t[[i, 1]] + 0.5 * rng.sample::<f64, _>(StandardNormal) > 0.0),
        }));
        for alpha in [1.0, 0.3] {
            let lmax = lambda_max(x.view(), t.view(), y.view(), family, alpha).unwrap();
            let fit = fit_net_design(x.view(), t.view(), y.view(), family, alpha, lmax, &NetOptions::default()).unwrap();
            assert!(fit.beta_tilde.iter().all(|&b| b == 0.0));
            let null = fit_glm(t.view(), y.view(), family).unwrap();
            assert!(max_abs_diff(&fit.delta, &null.coefficients) < 1e-6);
            let below = fit_net_design(x.view(), t.view(), y.view(), family, alpha, lmax * 0.9, &NetOptions::default()).unwrap();
            assert!(below.beta_tilde.iter().any(|&b| b != 0.0));
        }
    }
}

#[test]
fn net_without_penalty_is_the_glm() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (n, p) = (50, 10);
    let x = gauss(n, p, &mut rng);
    let t = covariates(n, 1, &mut rng);
    let (xc, _) = center_columns(x.view());
    let mut full = Array2::zeros((n, 2 + p));
    full.slice_mut(s![.., ..2]).assign(&t);
    full.slice_mut(s![.., 2..]).assign(&xc);
    let yg = Array1::from_iter((0..n).map(|i| x[[i, 1]] - x[[i, 4]] + rng.sample::<f64, _>(StandardNormal)));
    let yb = Array1::from_iter((0..n).map(|i| f64::from(0.4 * (x[[i, 1]] - x[[i, 4]]) + rng.sample::<f64, _>(StandardNormal) > 0.0)));
    for (family, y) in [(Family::GaussianIdentity, yg), (Family::BinomialLogit, yb)] {
        let oracle = fit_glm(full.view(), y.view(), family).unwrap();
        assert!(oracle.converged);
        let fit = fit_net_design(x.view(), t.view(), y.view(), family, 1.0, 0.0, &NetOptions::default()).unwrap();
        assert!(fit.converged);
        let mut got = fit.delta.to_vec();
        got.extend(fit.beta_tilde.iter());
        assert!(max_abs_diff(&Array1::from(got), &oracle.coefficients) < 1e-6, "{family:?}");
    }
}

#[test]
fn ridge_on_orthonormal_design_has_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, p) = (40, 6);
    let mut a = gauss(n, p + 1, &mut rng);
    a.column_mut(0).fill(1.0);
    let q = Qr::new(a.view(), false).thin_q(p + 1);
    let x = q.slice(s![.., 1..]).to_owned();
    let y = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let lambda = 0.02;
    let fit = fit_net_design(x.view(), Array2::ones((n, 1)).view(), y.view(), Family::GaussianIdentity, 0.0, lambda, &NetOptions::default()).unwrap();
    let ybar = y.mean().unwrap();
    let want = x.t().dot(&y.mapv(|v| v - ybar)) / (1.0 + 2.0 * n as f64 * lambda);
    assert!(max_abs_diff(&fit.beta_tilde, &want) < 1e-9);
}

#[test]
fn net_kkt_holds_and_path_support_mostly_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (n, p) = (60, 200);
    let x = gauss(n, p, &mut rng);
    let t = covariates(n, 2, &mut rng);
    let y = Array1::from_iter((0..n).map(|i| 2.0 * x[[i, 0]] - x[[i, 5]] + x[[i, 9]] + t[[i, 1]] + rng.sample::<f64, _>(StandardNormal)));
    for alpha in [1.0, 0.5, 0.1] {
        let lmax = lambda_max(x.view(), t.view(), y.view(), Family::GaussianIdentity, alpha).unwrap();
        let grid = lambda_grid(lmax, 20, 0.05);
        let path = net_path(x.view(), t.view(), y.view(), Family::GaussianIdentity, alpha, &grid, &NetOptions::default()).unwrap();
        let mut grows = 0;
        for (k, fit) in path.iter().enumerate() {
            assert!(kkt_violation(x.view(), t.view(), y.view(), fit, alpha, grid[k]) <= 1e-6);
            if k > 0 && fit.selected.len() >= path[k - 1].selected.len() {
                grows += 1;
            }
        }
        assert!(grows as f64 >= 0.95 * (grid.len() - 1) as f64);
    }
}

#[test]
fn voxel_counterpart_only_changes_transform() {
    let cfg = EstimatorConfig::new(Method::Net { alpha: 0.4, lambda: 0.1 }, Transform::Wavelet(WaveletSpec::default()));
    let v = voxel_counterpart(&cfg);
    assert_eq!(v.method, cfg.method);
    assert_eq!(v.transform, Transform::Identity);
    assert_eq!(voxel_counterpart(&v), v);
}

#[test]
fn predictions_ignore_constant_image_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 24;
    let images = ImageStack::new(gauss(n, 100, &mut rng), vec![10, 10]).unwrap();
    let t = covariates(n, 1, &mut rng);
    let y = Array1::from_iter((0..n).map(|i| images.data()[[i, 7]] + rng.sample::<f64, _>(StandardNormal) * 0.1));
    let data = Dataset::new(y, t.clone(), images.clone(), Family::GaussianIdentity).unwrap();
    let shifted = images.with_data(images.data() + 3.5).unwrap();
    let spec = WaveletSpec::least_asymmetric(4, 1).unwrap();
    for cfg in [
        EstimatorConfig::new(Method::Net { alpha: 1.0, lambda: 0.05 }, Transform::Wavelet(spec)),
        EstimatorConfig::new(Method::Pcr { c: 30, m: 4 }, Transform::Identity),
    ] {
        let a = fit(&data, &cfg).unwrap();
        let b = fit(&data.with_images(shifted.clone()).unwrap(), &cfg).unwrap();
        let pa = a.predict(t.view(), &images).unwrap();
        let pb = b.predict(t.view(), &shifted).unwrap();
        assert!(max_abs_diff(&pa, &pb) < 1e-8);
    }
}

#[test]
fn prediction_shape_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 12;
    let data = flat_data(gauss(n, 8, &mut rng), Array2::ones((n, 1)), Array1::from_iter((0..n).map(|i| i as f64)), Family::GaussianIdentity);
    let f = fit(&data, &identity(Method::Pcr { c: 4, m: 2 })).unwrap();
    let other = ImageStack::new(gauss(n, 9, &mut rng), vec![9]).unwrap();
    assert!(f.predict(data.t.view(), &other).is_err());
    assert!(f.predict(Array2::ones((n, 2)).view(), &data.images).is_err());
    let zero = ScalarOnImageFit {
        beta_tilde: Array1::zeros(8),
        ..f.clone()
    };
    let p = zero.predict(data.t.view(), &data.images).unwrap();
    assert!(p.iter().all(|&v| v == p[0]));
}

#[test]
fn f32_fits_run() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let n = 20;
    let x = gauss(n, 16, &mut rng).mapv(|v| v as f32);
    let y = Array1::from_iter((0..n).map(|i| x[[i, 0]] * 2.0));
    let data = Dataset::new(y, Array2::ones((n, 1)), ImageStack::new(x, vec![16]).unwrap(), Family::GaussianIdentity).unwrap();
    let spec = WaveletSpec::haar(1);
    let f = fit(&data, &EstimatorConfig::new(Method::Net { alpha: 1.0, lambda: 0.01 }, Transform::Wavelet(spec))).unwrap();
    assert!(f.converged);
    assert!(f.beta_image[[0]].abs() > 0.5);
}

#[test]
fn dataset_validation() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let images = ImageStack::new(gauss(5, 4, &mut rng), vec![4]).unwrap();
    let y = Array1::from(vec![0.0, 1.0, 1.0, 0.0, 2.0]);
    assert!(Dataset::new(y.clone(), Array2::ones((5, 1)), images.clone(), Family::BinomialLogit).is_err());
    assert!(Dataset::new(y.clone(), Array2::zeros((5, 1)), images.clone(), Family::GaussianIdentity).is_err());
    assert!(Dataset::new(y, Array2::ones((4, 1)), images, Family::GaussianIdentity).is_err());
}
