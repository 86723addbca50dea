//! Gaussian-identity and binomial-logit GLMs fitted by iteratively
//! reweighted least squares.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::linalg::Qr;
use crate::Real;

/// Lower clip applied to fitted probabilities (upper clip is `1 - PROB_CLIP`).
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    GaussianIdentity,
    BinomialLogit,
}

impl Family {
    pub fn is_binomial(self) -> bool {
        matches!(self, Family::BinomialLogit)
    }

    /// Inverse link; binomial means are clipped into the open unit interval.
    #[inline]
    pub fn mean<F: Real>(self, eta: F) -> F {
        match self {
            Family::GaussianIdentity => eta,
            Family::BinomialLogit => clip_prob(expit(eta)),
        }
    }

    #[inline]
    pub fn link<F: Real>(self, mu: F) -> F {
        match self {
            Family::GaussianIdentity => mu,
            Family::BinomialLogit => (mu / (F::one() - mu)).ln(),
        }
    }

    /// Checks that `y` is a valid response for this family.
    pub fn check_response<F: Real>(self, y: ArrayView1<F>) -> Result<()> {
        for (row, &v) in y.iter().enumerate() {
            let ok = match self {
                Family::GaussianIdentity => v.is_finite(),
                Family::BinomialLogit => v == F::zero() || v == F::one(),
            };
            if !ok {
                return Err(match self {
                    Family::BinomialLogit => Error::NotBinary {
                        row,
                        value: v.to_f64_lossy(),
                    },
                    Family::GaussianIdentity => {
                        Error::InvalidConfig(format!("non-finite response at row {row}"))
                    }
                });
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "gaussian-identity" => Ok(Family::GaussianIdentity),
            "binomial" | "binomial-logit" | "logistic" => Ok(Family::BinomialLogit),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

#[inline]
pub fn expit<F: Real>(eta: F) -> F {
    if eta >= F::zero() {
        F::one() / (F::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (F::one() + e)
    }
}

#[inline]
pub(crate) fn clip_prob<F: Real>(p: F) -> F {
    let lo = F::lit(PROB_CLIP).max(F::epsilon());
    p.max(lo).min(F::one() - lo)
}

/// Per-observation deviance contributions.
pub fn unit_deviances<F: Real>(y: ArrayView1<F>, mu: ArrayView1<F>, family: Family) -> Result<Array1<F>> {
    if y.len() != mu.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} responses but {} means",
            y.len(),
            mu.len()
        )));
    }
    match family {
        Family::GaussianIdentity => Ok(Zip::from(&y).and(&mu).map_collect(|&a, &b| (a - b) * (a - b))),
        Family::BinomialLogit => {
            for (row, &m) in mu.iter().enumerate() {
                if !(m > F::zero() && m < F::one()) {
                    return Err(Error::MeanOutOfRange {
                        row,
                        value: m.to_f64_lossy(),
                    });
                }
            }
            let two = F::lit(2.0);
            Ok(Zip::from(&y).and(&mu).map_collect(|&yi, &mi| {
                let m = clip_prob(mi);
                two * (xlogy(yi, m) + xlogy(F::one() - yi, F::one() - m))
            }))
        }
    }
}

/// `y log(y / mu)` with `0 log 0 = 0`.
#[inline]
fn xlogy<F: Real>(y: F, mu: F) -> F {
    if y == F::zero() {
        F::zero()
    } else {
        y * (y / mu).ln()
    }
}

/// Total deviance: residual sum of squares for the Gaussian family,
/// `2 sum [y log(y/mu) + (1-y) log((1-y)/(1-mu))]` for the binomial one.
pub fn deviance<F: Real>(y: ArrayView1<F>, mu: ArrayView1<F>, family: Family) -> Result<F> {
    Ok(unit_deviances(y, mu, family)?.sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmOptions {
    /// Relative deviance change `|D_new - D_old| / (|D_new| + 0.1)` below which IRLS stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmFit<F> {
    pub family: Family,
    pub coefficients: Array1<F>,
    pub fitted_means: Array1<F>,
    pub linear_predictor: Array1<F>,
    pub deviance: F,
    pub converged: bool,
    pub iterations: usize,
    /// Design was numerically rank deficient; coefficients are the minimum-norm solution.
    pub rank_deficient: bool,
    /// Some fitted probability reached the clip boundary (complete or quasi-complete separation).
    pub separation: bool,
    pub rank: usize,
    /// Gaussian: residual variance estimate; binomial: 1.
    pub dispersion: F,
    /// `dispersion * (X^T W X)^{-1}` at the solution, when the design has full rank.
    pub covariance: Option<Array2<F>>,
    /// Deviance after each IRLS iteration.
    pub deviance_trace: Vec<F>,
}

pub fn fit_glm<F: Real>(design: ArrayView2<F>, y: ArrayView1<F>, family: Family) -> Result<GlmFit<F>> {
    fit_glm_with(design, y, family, &GlmOptions::default())
}

pub fn fit_glm_with<F: Real>(
    design: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    opts: &GlmOptions,
) -> Result<GlmFit<F>> {
    let (n, q) = design.dim();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("design has {n} rows but y has {}", y.len())));
    }
    if q > n {
        return Err(Error::ShapeMismatch(format!("design has {q} columns for {n} observations")));
    }
    family.check_response(y)?;
    match family {
        Family::GaussianIdentity => Ok(fit_gaussian(design, y)),
        Family::BinomialLogit => Ok(fit_binomial(design, y, opts)),
    }
}

fn fit_gaussian<F: Real>(design: ArrayView2<F>, y: ArrayView1<F>) -> GlmFit<F> {
    let (n, q) = design.dim();
    let qr = Qr::new(design, true);
    let coefficients = qr.solve_least_squares(y);
    let eta = design.dot(&coefficients);
    let rss = Zip::from(&y).and(&eta).fold(F::zero(), |acc, &a, &b| acc + (a - b) * (a - b));
    let rank = qr.rank();
    let dispersion = if n > rank {
        rss / F::from_usize_lossy(n - rank)
    } else {
        F::zero()
    };
    let covariance = qr.inverse_gram().map(|g| g.mapv(|v| v * dispersion));
    GlmFit {
        family: Family::GaussianIdentity,
        coefficients,
        fitted_means: eta.clone(),
        linear_predictor: eta,
        deviance: rss,
        converged: true,
        iterations: 1,
        rank_deficient: rank < q,
        separation: false,
        rank,
        dispersion,
        covariance,
        deviance_trace: vec![rss],
    }
}

fn weighted_qr<F: Real>(design: ArrayView2<F>, mu: &Array1<F>) -> (Qr<F>, Array1<F>) {
    let floor = F::lit(1e-10);
    let sw = mu.mapv(|m| (m * (F::one() - m)).max(floor).sqrt());
    let mut xw = design.to_owned();
    for (mut row, &s) in xw.outer_iter_mut().zip(sw.iter()) {
        row.mapv_inplace(|v| v * s);
    }
    (Qr::new(xw.view(), true), sw)
}

fn fit_binomial<F: Real>(design: ArrayView2<F>, y: ArrayView1<F>, opts: &GlmOptions) -> GlmFit<F> {
    let family = Family::BinomialLogit;
    let q = design.ncols();
    let half = F::lit(0.5);
    let mut mu = y.mapv(|v| (v + half) / F::lit(2.0));
    let mut eta = mu.mapv(|m| family.link(m));
    let mut beta: Option<Array1<F>> = None;
    let mut dev = deviance(y, mu.view(), family).expect("means in range");
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut rank = q;
    let tol = F::lit(opts.tol).max(F::epsilon() * F::lit(10.0));

    for it in 1..=opts.max_iter {
        iterations = it;
        let (qr, sw) = weighted_qr(design, &mu);
        rank = qr.rank();
        let z = Zip::from(&eta)
            .and(&y)
            .and(&mu)
            .and(&sw)
            .map_collect(|&e, &yi, &m, &s| s * (e + (yi - m) / (s * s)));
        let mut candidate = qr.solve_least_squares(z.view());
        let mut cand_eta = design.dot(&candidate);
        let mut cand_mu = cand_eta.mapv(|e| family.mean(e));
        let mut cand_dev = deviance(y, cand_mu.view(), family).expect("clipped means");
        if let Some(prev) = &beta {
            let mut halvings = 0;
            while cand_dev > dev + F::lit(1e-10) * (F::one() + dev.abs()) && halvings < 30 {
                candidate = (&candidate + prev).mapv(|v| v * half);
                cand_eta = design.dot(&candidate);
                cand_mu = cand_eta.mapv(|e| family.mean(e));
                cand_dev = deviance(y, cand_mu.view(), family).expect("clipped means");
                halvings += 1;
            }
        }
        let rel = (cand_dev - dev).abs() / (cand_dev.abs() + F::lit(0.1));
        beta = Some(candidate);
        eta = cand_eta;
        mu = cand_mu;
        dev = cand_dev;
        trace.push(dev);
        if rel < tol {
            converged = true;
            break;
        }
    }

    let boundary = F::lit(1e-8);
    let separation = mu.iter().any(|&m| m < boundary || m > F::one() - boundary);
    let (qr, _) = weighted_qr(design, &mu);
    let covariance = if separation { None } else { qr.inverse_gram() };
    GlmFit {
        family,
        coefficients: beta.unwrap_or_else(|| Array1::zeros(q)),
        fitted_means: mu,
        linear_predictor: eta,
        deviance: dev,
        converged: converged && !separation,
        iterations,
        rank_deficient: rank < q,
        separation,
        rank,
        dispersion: F::one(),
        covariance,
        deviance_trace: trace,
    }
}

impl<F: Real> GlmFit<F> {
    /// Means `g^{-1}(X b)` for a new design.
    pub fn predict(&self, design: ArrayView2<F>) -> Result<Array1<F>> {
        if design.ncols() != self.coefficients.len() {
            return Err(Error::ShapeMismatch(format!(
                "design has {} columns but the fit has {} coefficients",
                design.ncols(),
                self.coefficients.len()
            )));
        }
        Ok(design.dot(&self.coefficients).mapv(|e| self.family.mean(e)))
    }

    /// Residual degrees of freedom.
    pub fn df_residual(&self) -> usize {
        self.fitted_means.len().saturating_sub(self.rank)
    }

    /// Wald estimates, intervals and two-sided p-values per coefficient
    /// (normal reference for the binomial family, Student t otherwise).
    pub fn wald_summary(&self, level: f64) -> Option<Vec<WaldRow>> {
        let cov = self.covariance.as_ref()?;
        let (crit, pval): (f64, Box<dyn Fn(f64) -> f64>) = match self.family {
            Family::BinomialLogit => {
                let normal = Normal::standard();
                (
                    normal.inverse_cdf(0.5 + level / 2.0),
                    Box::new(move |z: f64| 2.0 * normal.cdf(-z.abs())),
                )
            }
            Family::GaussianIdentity => {
                let df = self.df_residual().max(1) as f64;
                let t = StudentsT::new(0.0, 1.0, df).ok()?;
                (
                    t.inverse_cdf(0.5 + level / 2.0),
                    Box::new(move |z: f64| 2.0 * t.cdf(-z.abs())),
                )
            }
        };
        Some(
            self.coefficients
                .iter()
                .enumerate()
                .map(|(j, &b)| {
                    let est = b.to_f64_lossy();
                    let se = cov[[j, j]].to_f64_lossy().max(0.0).sqrt();
                    let stat = est / se;
                    WaldRow {
                        estimate: est,
                        std_error: se,
                        lower: est - crit * se,
                        upper: est + crit * se,
                        statistic: stat,
                        p_value: pval(stat),
                    }
                })
                .collect(),
        )
    }
}

/// One coefficient row of a Wald summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldRow {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub statistic: f64,
    pub p_value: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn deviance_closed_forms() {
        let g = deviance(array![1.0, 2.0].view(), array![0.0, 0.0].view(), Family::GaussianIdentity).unwrap();
        assert_eq!(g, 5.0);
        let b = deviance(array![1.0, 0.0].view(), array![0.5, 0.5].view(), Family::BinomialLogit).unwrap();
        assert!((b - 4.0 * 2f64.ln()).abs() < 1e-12);
        assert!((b - 2.7726).abs() < 1e-4);
    }

    #[test]
    fn saturated_binomial_deviance_is_tiny() {
        let y = array![1.0, 0.0, 1.0, 1.0];
        let mu = y.mapv(|v: f64| v.clamp(PROB_CLIP, 1.0 - PROB_CLIP));
        let d = deviance(y.view(), mu.view(), Family::BinomialLogit).unwrap();
        assert!(d <= 1e-10 * 4.0);
    }

    #[test]
    fn binomial_means_must_be_inside_unit_interval() {
        let err = deviance(array![1.0, 0.0].view(), array![1.0, 0.5].view(), Family::BinomialLogit);
        assert!(matches!(err, Err(Error::MeanOutOfRange { row: 0, .. })));
    }

    #[test]
    fn orthonormal_gaussian_coefficients_are_projections() {
        let qr = Qr::new(random(8, 3, 1).view(), false);
        let q = qr.thin_q(3);
        let y = array![1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0, 2.0];
        let fit = fit_glm(q.view(), y.view(), Family::GaussianIdentity).unwrap();
        let want = q.t().dot(&y);
        for (a, b) in fit.coefficients.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((fit.deviance - (&y - &fit.fitted_means).mapv(|v| v * v).sum()).abs() < 1e-10);
    }

    #[test]
    fn gaussian_matches_normal_equations_20x3() {
        let x = random(20, 3, 2);
        let y = Array1::from_iter((0..20).map(|i| (i as f64 * 0.37).cos()));
        let fit = fit_glm(x.view(), y.view(), Family::GaussianIdentity).unwrap();
        // independent route: solve X^T X b = X^T y by Gaussian elimination
        let mut a = x.t().dot(&x);
        let mut b = x.t().dot(&y);
        for k in 0..3 {
            for i in k + 1..3 {
                let f = a[[i, k]] / a[[k, k]];
                for j in k..3 {
                    a[[i, j]] -= f * a[[k, j]];
                }
                b[i] -= f * b[k];
            }
        }
        let mut sol = [0.0; 3];
        for i in (0..3).rev() {
            let s: f64 = (i + 1..3).map(|j| a[[i, j]] * sol[j]).sum();
            sol[i] = (b[i] - s) / a[[i, i]];
        }
        for (c, s) in fit.coefficients.iter().zip(sol) {
            assert!((c - s).abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_logistic_at_half() {
        let x: Array2<f64> = Array2::ones((6, 1));
        let y = array![1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let fit = fit_glm(x.view(), y.view(), Family::BinomialLogit).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients[0].abs() < 1e-12);
        assert!(fit.fitted_means.iter().all(|&m| (m - 0.5).abs() < 1e-12));
    }

    #[test]
    fn logistic_irls_deviance_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut x = random(80, 3, 3);
        x.column_mut(0).fill(1.0);
        let y = Array1::from_iter((0..80).map(|i| {
            let eta = 0.3 + 1.5 * x[[i, 1]] - x[[i, 2]];
            if rng.random::<f64>() < expit(eta) { 1.0 } else { 0.0 }
        }));
        let fit = fit_glm(x.view(), y.view(), Family::BinomialLogit).unwrap();
        assert!(fit.converged);
        for w in fit.deviance_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
        // score equations hold at the optimum
        let score = x.t().dot(&(&y - &fit.fitted_means));
        assert!(score.iter().all(|s| s.abs() < 1e-6));
        assert!(fit.fitted_means.iter().all(|&m| m > 0.0 && m < 1.0));
    }

    #[test]
    fn separation_is_flagged_not_fatal() {
        let x = array![[1.0, -2.0], [1.0, -1.0], [1.0, 1.0], [1.0, 2.0]];
        let y = array![0.0, 0.0, 1.0, 1.0];
        let fit = fit_glm(x.view(), y.view(), Family::BinomialLogit).unwrap();
        assert!(!fit.converged);
        assert!(fit.separation);
        assert!(fit.deviance < 1e-3);
    }

    #[test]
    fn rank_deficient_design_gives_min_norm_and_flag() {
        let mut x = random(10, 3, 4);
        let c0 = x.column(0).to_owned();
        x.column_mut(2).assign(&c0);
        let y = Array1::from_iter((0..10).map(|i| i as f64));
        let fit = fit_glm(x.view(), y.view(), Family::GaussianIdentity).unwrap();
        assert!(fit.rank_deficient);
        assert!((fit.coefficients[0] - fit.coefficients[2]).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_extra_column_leaves_coefficients() {
        // columns: intercept, a, and b orthogonal to both and to y
        let x: Array2<f64> = array![[1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0], [1.0, -1.0, -1.0]];
        let y = array![3.0, 1.0, 3.0, 1.0];
        let small = fit_glm(x.slice(ndarray::s![.., ..2]), y.view(), Family::GaussianIdentity).unwrap();
        let big = fit_glm(x.view(), y.view(), Family::GaussianIdentity).unwrap();
        for j in 0..2 {
            assert!((small.coefficients[j] - big.coefficients[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn logistic_prediction_by_hand() {
        let x = array![[1.0, 0.2], [1.0, -1.0], [1.0, 0.7], [1.0, 2.0], [1.0, -0.3]];
        let fit = GlmFit {
            family: Family::BinomialLogit,
            coefficients: array![0.4, -1.2],
            fitted_means: Array1::zeros(5),
            linear_predictor: Array1::zeros(5),
            deviance: 0.0,
            converged: true,
            iterations: 0,
            rank_deficient: false,
            separation: false,
            rank: 2,
            dispersion: 1.0,
            covariance: None,
            deviance_trace: vec![],
        };
        let p = fit.predict(x.view()).unwrap();
        let etas: [f64; 5] = [0.4 - 0.24, 0.4 + 1.2, 0.4 - 0.84, 0.4 - 2.4, 0.4 + 0.36];
        for (pi, e) in p.iter().zip(etas) {
            assert!((pi - 1.0 / (1.0 + (-e).exp())).abs() < 1e-15);
        }
        assert!(fit.predict(x.slice(ndarray::s![.., ..1])).is_err());
    }

    #[test]
    fn wald_intervals_contain_estimates() {
        let mut x = random(40, 2, 5);
        x.column_mut(0).fill(1.0);
        let y = Array1::from_iter((0..40).map(|i| 1.0 + 2.0 * x[[i, 1]] + ((i * 7 % 5) as f64 - 2.0) * 0.1));
        let fit = fit_glm(x.view(), y.view(), Family::GaussianIdentity).unwrap();
        let rows = fit.wald_summary(0.95).unwrap();
        for r in &rows {
            assert!(r.lower <= r.estimate && r.estimate <= r.upper);
        }
        assert!(rows[1].p_value < 1e-6);
    }
}
