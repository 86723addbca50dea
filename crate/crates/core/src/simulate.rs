//! Synthetic data: coefficient images, eigenimage predictor models, and
//! gaussian or logistic outcomes at a target R^2.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dwt::{dwt_stack, reconstruct_image, ImageStack, WaveletSpec};
use crate::error::{Error, Result};
use crate::estimators::{center_columns, column_variances, top_indices, Dataset};
use crate::glm::{expit, Family};
use crate::linalg::{thin_svd, Qr};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientImageKind {
    /// Difference of two bivariate normal densities.
    GaussDiff,
    /// Two-dimensional bumps.
    Bumps2d,
    /// Centred binary block.
    Block,
}

impl std::str::FromStr for CoefficientImageKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta1" | "gauss-diff" => Ok(CoefficientImageKind::GaussDiff),
            "beta2" | "bumps2d" | "bumps" => Ok(CoefficientImageKind::Bumps2d),
            "block" => Ok(CoefficientImageKind::Block),
            other => Err(Error::InvalidConfig(format!("unknown coefficient image `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientImageSpec {
    pub kind: CoefficientImageKind,
    pub shape: Vec<usize>,
    pub scale: f64,
}

impl CoefficientImageSpec {
    /// Row-major flattened image.
    pub fn generate(&self) -> Result<Array1<f64>> {
        let img = match self.kind {
            CoefficientImageKind::GaussDiff => make_beta1(&self.shape)?,
            CoefficientImageKind::Bumps2d => make_beta2(&self.shape)?,
            CoefficientImageKind::Block => make_block(&self.shape)?,
        };
        Ok(img * self.scale)
    }
}

fn square_grid(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [a, b] if *a >= 2 && *b >= 2 => Ok((*a, *b)),
        _ => Err(Error::InvalidConfig(format!("a 2-D grid with sides >= 2 is required, got {shape:?}"))),
    }
}

/// Pixel index `i` of an axis of length `len` mapped onto `[1, 64]`.
fn domain_coord(i: usize, len: usize) -> f64 {
    if len == 64 {
        (i + 1) as f64
    } else {
        1.0 + 63.0 * i as f64 / (len - 1) as f64
    }
}

pub fn bivariate_normal_density(s: (f64, f64), mean: (f64, f64), var: f64) -> f64 {
    let d2 = (s.0 - mean.0).powi(2) + (s.1 - mean.1).powi(2);
    (-d2 / (2.0 * var)).exp() / (2.0 * PI * var)
}

pub const BETA1_MEANS: [(f64, f64); 2] = [(30.0, 20.0), (20.0, 55.0)];
pub const BETA1_VARIANCE: f64 = 10.0;

/// `phi((s1, s2); (30, 20), 10 I) - phi((s1, s2); (20, 55), 10 I)` on `[1, 64]^2`;
/// pixel `(i, j)` sits at `s = (i + 1, j + 1)` on a 64 x 64 grid.
pub fn make_beta1(shape: &[usize]) -> Result<Array1<f64>> {
    let (h, w) = square_grid(shape)?;
    Ok(Array1::from_iter((0..h * w).map(|k| {
        let s = (domain_coord(k / w, h), domain_coord(k % w, w));
        bivariate_normal_density(s, BETA1_MEANS[0], BETA1_VARIANCE)
            - bivariate_normal_density(s, BETA1_MEANS[1], BETA1_VARIANCE)
    })))
}

/// One radial bump `height * (1 + r / width)^-4` at `center` in `[1, 64]^2` coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub center: (f64, f64),
    pub height: f64,
    pub width: f64,
}

/// The eleven one-dimensional bumps (positions, heights and widths on
/// `[0, 1]`) paired as `(t_j, t_{3j mod 11})`, centres rounded to pixels
/// of the 64 x 64 grid and widths doubled in pixel units.
pub const BUMPS: [Bump; 11] = [
    Bump { center: (7.0, 7.0), height: 4.0, width: 0.63 },
    Bump { center: (9.0, 15.0), height: 5.0, width: 0.63 },
    Bump { center: (10.0, 29.0), height: 3.0, width: 0.756 },
    Bump { center: (15.0, 50.0), height: 4.0, width: 1.26 },
    Bump { center: (17.0, 9.0), height: 5.0, width: 1.26 },
    Bump { center: (26.0, 17.0), height: 4.2, width: 3.78 },
    Bump { center: (29.0, 42.0), height: 2.1, width: 1.26 },
    Bump { center: (42.0, 52.0), height: 4.3, width: 1.26 },
    Bump { center: (49.0, 10.0), height: 3.1, width: 0.63 },
    Bump { center: (50.0, 26.0), height: 5.1, width: 1.008 },
    Bump { center: (52.0, 49.0), height: 4.2, width: 0.63 },
];

/// Sum of the [`BUMPS`] kernels evaluated at every pixel.
pub fn make_beta2(shape: &[usize]) -> Result<Array1<f64>> {
    let (h, w) = square_grid(shape)?;
    Ok(Array1::from_iter((0..h * w).map(|k| {
        let s = (domain_coord(k / w, h), domain_coord(k % w, w));
        BUMPS
            .iter()
            .map(|b| {
                let r = ((s.0 - b.center.0).powi(2) + (s.1 - b.center.1).powi(2)).sqrt();
                b.height * (1.0 + r / b.width).powi(-4)
            })
            .sum()
    })))
}

/// Binary image: 1 on the centred box with sides `round(len / 4)`, 0 elsewhere.
pub fn make_block(shape: &[usize]) -> Result<Array1<f64>> {
    if shape.is_empty() || shape.iter().any(|&s| s < 4) {
        return Err(Error::InvalidConfig(format!("block image needs sides >= 4, got {shape:?}")));
    }
    let ranges: Vec<(usize, usize)> = shape
        .iter()
        .map(|&len| {
            let side = (len as f64 / 4.0).round() as usize;
            let start = (len - side) / 2;
            (start, start + side)
        })
        .collect();
    let total: usize = shape.iter().product();
    Ok(Array1::from_iter((0..total).map(|mut k| {
        let mut inside = true;
        for (d, &len) in shape.iter().enumerate().rev() {
            let i = k % len;
            k /= len;
            inside &= i >= ranges[d].0 && i < ranges[d].1;
        }
        if inside {
            1.0
        } else {
            0.0
        }
    })))
}

/// Smooth random fields: a fixed positive blob plus low-frequency cosine
/// modes (up to 6 per axis) with variances `(1 + |k|^2)^-2`.
pub fn synthetic_seed_stack(shape: &[usize], n_images: usize, seed: u64) -> Result<ImageStack<f64>> {
    if shape.is_empty() || shape.contains(&0) || n_images == 0 {
        return Err(Error::InvalidConfig("seed stack needs a non-empty grid and at least one image".into()));
    }
    const MODES: usize = 6;
    let d = shape.len();
    let total: usize = shape.iter().product();
    let coords: Vec<Vec<usize>> = (0..total)
        .map(|mut k| {
            let mut c = vec![0; d];
            for a in (0..d).rev() {
                c[a] = k % shape[a];
                k /= shape[a];
            }
            c
        })
        .collect();
    let freqs: Vec<Vec<usize>> = (0..MODES.pow(d as u32))
        .map(|mut k| {
            let mut f = vec![0; d];
            for a in (0..d).rev() {
                f[a] = k % MODES;
                k /= MODES;
            }
            f
        })
        .collect();
    let basis: Vec<Vec<f64>> = freqs
        .iter()
        .map(|f| {
            coords
                .iter()
                .map(|c| {
                    (0..d)
                        .map(|a| (PI * f[a] as f64 * (c[a] as f64 + 0.5) / shape[a] as f64).cos())
                        .product()
                })
                .collect()
        })
        .collect();
    let sds: Vec<f64> = freqs
        .iter()
        .map(|f| 1.0 / (1.0 + f.iter().map(|&k| (k * k) as f64).sum::<f64>()))
        .collect();
    let blob: Vec<f64> = coords
        .iter()
        .map(|c| {
            let r2: f64 = (0..d)
                .map(|a| ((c[a] as f64 + 0.5) / shape[a] as f64 - 0.5).powi(2))
                .sum();
            (-r2 / 0.08).exp()
        })
        .collect();
    let mut data = Array2::zeros((n_images, total));
    let mut rng = rng::stream(seed, "seed-stack", 0);
    for mut row in data.outer_iter_mut() {
        row.assign(&ArrayView1::from(&blob));
        for (b, sd) in basis.iter().zip(&sds) {
            let a: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
            row.scaled_add(a, &ArrayView1::from(b));
        }
    }
    ImageStack::new(data, shape.to_vec())
}

/// Eigenimage model of an image population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub shape: Vec<usize>,
    /// `J x V`, orthonormal rows.
    pub eigenimages: Array2<f64>,
    /// Non-increasing, nonnegative.
    pub variances: Vec<f64>,
    /// Retained wavelet coefficients (increasing).
    pub support: Vec<usize>,
    pub spec: WaveletSpec,
    /// Share of the excess coefficient variance captured by `support`.
    pub retained_variance: f64,
}

/// Johnstone-Lu excess variance `max(var_j - median var, 0)` captured by `selected`.
pub fn excess_variance_fraction(variances: ArrayView1<f64>, selected: &[usize]) -> f64 {
    let mut sorted = variances.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k = sorted.len();
    let median = if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    };
    let excess = |v: f64| (v - median).max(0.0);
    let total: f64 = variances.iter().map(|&v| excess(v)).sum();
    if total <= 0.0 {
        return 1.0;
    }
    selected.iter().map(|&j| excess(variances[j])).sum::<f64>() / total
}

/// Sparse PCA on the `n_wavelet_coefs` highest-variance wavelet coefficients;
/// eigenimages are the inverse transforms of the loadings.
pub fn fit_predictor_model(
    seed_images: &ImageStack<f64>,
    n_components: usize,
    n_wavelet_coefs: usize,
    spec: &WaveletSpec,
) -> Result<PredictorModel> {
    let n = seed_images.n();
    if n_components == 0 || n_components > n {
        return Err(Error::InvalidConfig(format!(
            "{n_components} components requested from {n} seed images"
        )));
    }
    let coeffs = dwt_stack(seed_images, spec)?;
    let (xc, _) = center_columns(coeffs.matrix.view());
    let vars = column_variances(xc.view());
    let support = top_indices(vars.view(), n_wavelet_coefs)?;
    let sub = xc.select(Axis(1), &support);
    let svd = thin_svd(sub.view());
    let rank = svd.rank();
    if n_components > rank {
        return Err(Error::RankExceeded {
            requested: n_components,
            rank,
        });
    }
    let total = coeffs.layout.len();
    let voxels = seed_images.voxels();
    let mut eig = Array2::zeros((n_components, voxels));
    for j in 0..n_components {
        let mut full = Array1::zeros(total);
        for (k, &idx) in support.iter().enumerate() {
            full[idx] = svd.v[[k, j]];
        }
        let img = reconstruct_image(full.view(), &coeffs.layout, &coeffs.padding, spec)?;
        eig.row_mut(j).assign(&Array1::from_iter(img.iter().copied()));
    }
    if !coeffs.padding.is_empty() {
        // cropping breaks orthonormality; restore it keeping the order
        let qr = Qr::new(eig.t(), false);
        let mut q = qr.thin_q(n_components);
        for j in 0..n_components {
            if qr.r(j, j) < 0.0 {
                q.column_mut(j).mapv_inplace(|v| -v);
            }
        }
        eig = q.t().to_owned();
    }
    let denom = (n.max(2) - 1) as f64;
    Ok(PredictorModel {
        shape: seed_images.shape().to_vec(),
        eigenimages: eig,
        variances: svd.s.iter().take(n_components).map(|s| s * s / denom).collect(),
        retained_variance: excess_variance_fraction(vars.view(), &support),
        support,
        spec: *spec,
    })
}

impl PredictorModel {
    pub fn validate(&self) -> Result<()> {
        let v: usize = self.shape.iter().product();
        if self.eigenimages.ncols() != v || self.eigenimages.nrows() != self.variances.len() {
            return Err(Error::ShapeMismatch("eigenimages do not match the grid or variances".into()));
        }
        if self.variances.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig("variances must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

/// `x_i = sum_j c_ij rho_j` with independent `c_ij ~ N(0, lambda_j)`.
pub fn simulate_predictors(model: &PredictorModel, n: usize, seed: u64) -> Result<ImageStack<f64>> {
    model.validate()?;
    let mut rng = rng::stream(seed, "predictors", 0);
    let sds: Vec<f64> = model.variances.iter().map(|l| l.sqrt()).collect();
    let c = Array2::from_shape_fn((n, sds.len()), |(_, j)| rng.sample::<f64, _>(StandardNormal) * sds[j]);
    ImageStack::new(c.dot(&model.eigenimages), model.shape.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub family: Family,
    pub target_r2: f64,
    /// Binomial only.
    pub base_rate: f64,
    pub seed: u64,
}

impl OutcomeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.target_r2) {
            return Err(Error::InvalidConfig(format!("R^2 must lie in [0, 1), got {}", self.target_r2)));
        }
        if self.family.is_binomial() && !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(Error::InvalidConfig(format!("base rate must lie in (0, 1), got {}", self.base_rate)));
        }
        Ok(())
    }
}

/// Error variance of the latent scale: 1 for gaussian, `pi^2 / 3` for logistic.
pub fn latent_error_variance(family: Family) -> f64 {
    match family {
        Family::GaussianIdentity => 1.0,
        Family::BinomialLogit => PI * PI / 3.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta {
    pub beta: Array1<f64>,
    pub scale: f64,
    pub delta0: f64,
}

fn sample_variance(v: ArrayView1<f64>) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let m = v.sum() / n as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Scales `beta` so that `Var(x'beta) / (Var(x'beta) + s^2) = target_r2`, with
/// `s^2` from [`latent_error_variance`] and `Var` the sample variance over
/// `predictors`; for binomial outcomes `delta0` then matches the mean
/// probability to the base rate.
pub fn scale_beta_for_r2(beta: ArrayView1<f64>, predictors: ArrayView2<f64>, spec: &OutcomeSpec) -> Result<ScaledBeta> {
    spec.validate()?;
    if beta.len() != predictors.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "beta has {} entries, predictors have {} columns",
            beta.len(),
            predictors.ncols()
        )));
    }
    let eta = predictors.dot(&beta);
    let v = sample_variance(eta.view());
    let scale = if spec.target_r2 == 0.0 {
        0.0
    } else if v <= 0.0 {
        return Err(Error::InvalidConfig("x'beta has zero variance; cannot reach a positive R^2".into()));
    } else {
        let target = spec.target_r2 / (1.0 - spec.target_r2) * latent_error_variance(spec.family);
        (target / v).sqrt()
    };
    let delta0 = if spec.family.is_binomial() {
        solve_intercept(eta.mapv(|e| e * scale).view(), spec.base_rate)
    } else {
        0.0
    };
    Ok(ScaledBeta {
        beta: beta.mapv(|b| b * scale),
        scale,
        delta0,
    })
}

/// Bisection for `mean_i expit(d + eta_i) = rate`.
pub fn solve_intercept(eta: ArrayView1<f64>, rate: f64) -> f64 {
    let mean_at = |d: f64| eta.iter().map(|&e| expit(d + e)).sum::<f64>() / eta.len().max(1) as f64;
    let (mut lo, mut hi) = (-1.0, 1.0);
    while mean_at(lo) > rate && lo > -1e6 {
        lo *= 2.0;
    }
    while mean_at(hi) < rate && hi < 1e6 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Gaussian: `y = T delta + delta0 + X beta + sigma eps`;
/// binomial: `y_i ~ Bernoulli(expit(T delta + delta0 + x_i' beta))`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_outcomes(
    predictors: ArrayView2<f64>,
    beta: ArrayView1<f64>,
    delta0: f64,
    t: ArrayView2<f64>,
    delta: ArrayView1<f64>,
    family: Family,
    sigma: f64,
    seed: u64,
) -> Result<Array1<f64>> {
    Ok(simulate_latent(predictors, beta, delta0, t, delta, family, sigma, seed)?.0)
}

/// Outcomes together with their latent responses `eta + e`: `e ~ N(0, sigma^2)`
/// with `y` the latent value for gaussian, `e ~ Logistic(0, 1)` with
/// `y = 1{latent > 0}` for binomial.
#[allow(clippy::too_many_arguments)]
pub fn simulate_latent(
    predictors: ArrayView2<f64>,
    beta: ArrayView1<f64>,
    delta0: f64,
    t: ArrayView2<f64>,
    delta: ArrayView1<f64>,
    family: Family,
    sigma: f64,
    seed: u64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = predictors.nrows();
    if beta.len() != predictors.ncols() || t.nrows() != n || t.ncols() != delta.len() {
        return Err(Error::ShapeMismatch("outcome model inputs are not conformable".into()));
    }
    let eta = predictors.dot(&beta) + t.dot(&delta) + delta0;
    let mut rng = rng::stream(seed, "outcomes", 0);
    Ok(match family {
        Family::GaussianIdentity => {
            let latent = if sigma == 0.0 {
                eta
            } else {
                let noise = Normal::new(0.0, sigma)
                    .map_err(|e| Error::InvalidConfig(format!("noise scale: {e}")))?;
                eta.mapv(|e| e + noise.sample(&mut rng))
            };
            (latent.clone(), latent)
        }
        Family::BinomialLogit => {
            let latent = eta.mapv(|e| {
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                e + (u / (1.0 - u)).ln()
            });
            (latent.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }), latent)
        }
    })
}

/// Empirical R^2 `1 - Var(latent - eta) / Var(latent)` of simulated latent responses.
pub fn empirical_r2(latent: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
    let resid = &latent - &eta;
    1.0 - sample_variance(resid.view()) / sample_variance(latent)
}

/// Full simulation recipe; every field is echoed into [`Truth`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub design: CoefficientImageKind,
    pub n: usize,
    pub grid: usize,
    pub family: Family,
    pub r2: f64,
    pub base_rate: f64,
    pub seed: u64,
    /// Seed of the seed stack; fixed across replicates so the eigenimages are shared.
    pub stack_seed: u64,
    pub seed_images: usize,
    pub components: usize,
    pub wavelet_coefs: usize,
    pub wavelet: WaveletSpec,
    pub sigma: f64,
}

impl SimulationSpec {
    /// 33 seed images, 32 components, and 492 coefficients scaled by the grid area (at least 64).
    pub fn new(design: CoefficientImageKind, n: usize, grid: usize, family: Family, r2: f64, base_rate: f64, seed: u64) -> Self {
        let coefs = ((492.0 * (grid * grid) as f64 / 4096.0).round() as usize).clamp(64, grid * grid);
        SimulationSpec {
            design,
            n,
            grid,
            family,
            r2,
            base_rate,
            seed,
            stack_seed: 0,
            seed_images: 33,
            components: 32,
            wavelet_coefs: coefs,
            wavelet: WaveletSpec::default().with_j0(4.min(grid.max(4).next_power_of_two().ilog2() as usize - 1)),
            sigma: 1.0,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.grid, self.grid]
    }

    pub fn outcome(&self) -> OutcomeSpec {
        OutcomeSpec {
            family: self.family,
            target_r2: self.r2,
            base_rate: self.base_rate,
            seed: self.seed,
        }
    }

    pub fn predictor_model(&self) -> Result<PredictorModel> {
        let stack = synthetic_seed_stack(&self.shape(), self.seed_images, self.stack_seed)?;
        fit_predictor_model(&stack, self.components, self.wavelet_coefs, &self.wavelet)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SimulationSpec,
    /// Row-major true coefficient image after scaling.
    pub beta: Vec<f64>,
    pub beta_scale: f64,
    pub delta0: f64,
    pub retained_variance: f64,
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset<f64>,
    pub truth: Truth,
}

pub fn simulate(spec: &SimulationSpec) -> Result<Simulated> {
    simulate_with_model(spec, &spec.predictor_model()?)
}

/// As [`simulate`], reusing an already fitted predictor model.
pub fn simulate_with_model(spec: &SimulationSpec, model: &PredictorModel) -> Result<Simulated> {
    if model.shape != spec.shape() {
        return Err(Error::ShapeMismatch(format!(
            "model grid {:?} differs from {:?}",
            model.shape,
            spec.shape()
        )));
    }
    spec.outcome().validate()?;
    let beta0 = CoefficientImageSpec {
        kind: spec.design,
        shape: spec.shape(),
        scale: 1.0,
    }
    .generate()?;
    let stack = simulate_predictors(model, spec.n, spec.seed)?;
    let x = stack.data();
    let scaled = scale_beta_for_r2(beta0.view(), x.view(), &spec.outcome())?;
    let t = Array2::ones((spec.n, 1));
    let y = simulate_outcomes(
        x.view(),
        scaled.beta.view(),
        scaled.delta0,
        t.view(),
        Array1::zeros(1).view(),
        spec.family,
        spec.sigma,
        spec.seed,
    )?;
    let dataset = Dataset::new(y, t, stack, spec.family)?;
    Ok(Simulated {
        dataset,
        truth: Truth {
            spec: spec.clone(),
            beta: scaled.beta.to_vec(),
            beta_scale: scaled.scale,
            delta0: scaled.delta0,
            retained_variance: model.retained_variance,
        },
    })
}

/// Slope for a standard normal covariate giving latent R^2 `r2` on its own.
pub fn covariate_slope(r2: f64, family: Family) -> Result<f64> {
    if !(0.0..1.0).contains(&r2) {
        return Err(Error::InvalidConfig(format!("R^2 must lie in [0, 1), got {r2}")));
    }
    Ok((r2 / (1.0 - r2) * latent_error_variance(family)).sqrt())
}

/// Images-plus-covariate design: `t ~ N(0, 1)` with slope from
/// [`covariate_slope`] and `T = [1 | t]`. Returns `(T, delta)` with zero intercept.
pub fn covariate_design(n: usize, r2: f64, family: Family, seed: u64) -> Result<(Array2<f64>, Array1<f64>)> {
    let slope = covariate_slope(r2, family)?;
    let mut rng = rng::stream(seed, "covariate", 0);
    let mut t = Array2::ones((n, 2));
    for i in 0..n {
        t[[i, 1]] = rng.sample(StandardNormal);
    }
    Ok((t, Array1::from_vec(vec![0.0, slope])))
}

/// Design for confounding checks on smooth seed-stack-like images.
///
/// Confounded: `y` depends on `t` only and `t` adds `strength * t` to a
/// block region of every image. Unconfounded: `t` is independent of both
/// images and response, while the images carry a real block effect.
pub fn confounded_design(
    shape: &[usize],
    n: usize,
    family: Family,
    confounded: bool,
    seed: u64,
) -> Result<Dataset<f64>> {
    let stack = synthetic_seed_stack(shape, n, rng::derive_seed(seed, "confounding-images", 0))?;
    let block = make_block(shape)?;
    let mut x = stack.data().clone();
    let (xc, _) = center_columns(x.view());
    x = xc;
    let mut rng = rng::stream(seed, "confounding", 0);
    let t: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let r2 = 0.3;
    let (beta, slope) = if confounded {
        let field_sd = column_variances(x.view()).mapv(f64::sqrt).mean().unwrap_or(1.0);
        for (mut row, &ti) in x.outer_iter_mut().zip(t.iter()) {
            row.scaled_add(field_sd * ti, &block);
        }
        (Array1::zeros(block.len()), covariate_slope(r2, family)?)
    } else {
        let spec = OutcomeSpec {
            family,
            target_r2: r2,
            base_rate: 0.5,
            seed,
        };
        (scale_beta_for_r2(block.view(), x.view(), &spec)?.beta, 0.0)
    };
    let mut tm = Array2::ones((n, 2));
    tm.column_mut(1).assign(&t);
    let delta = Array1::from_vec(vec![0.0, slope]);
    let y = simulate_outcomes(x.view(), beta.view(), 0.0, tm.view(), delta.view(), family, 1.0, seed)?;
    Dataset::new(y, tm, ImageStack::new(x, shape.to_vec())?, family)
}
