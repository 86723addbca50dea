//! Permutation tests of the image effect with the minimised CV score as
//! statistic, and confounding diagnostics.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimators::{Dataset, Design, EstimatorConfig, ScalarOnImageFit, Transform};
use crate::glm::{fit_glm, Family};
use crate::linalg::Qr;
use crate::modelsel::{make_folds, tune_on, CvConfig, GridSpec};
use crate::rng;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Permute the responses; only exchangeable when `T` is intercept-only.
    ResponsePermutation,
    /// Replace `X` by `P_T X + Pi (I - P_T) X`.
    PseudoPredictor,
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "response" | "response-permutation" => Ok(SchemeKind::ResponsePermutation),
            "pseudo" | "pseudo-predictor" => Ok(SchemeKind::PseudoPredictor),
            other => Err(Error::InvalidConfig(format!("unknown permutation scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationScheme {
    pub kind: SchemeKind,
    /// Number of permutations `B`.
    pub permutations: usize,
    pub seed: u64,
    /// Allow response permutation with covariates beyond the intercept.
    #[serde(default)]
    pub allow_covariates: bool,
}

impl PermutationScheme {
    pub fn new(kind: SchemeKind, permutations: usize, seed: u64) -> Self {
        PermutationScheme {
            kind,
            permutations,
            seed,
            allow_covariates: false,
        }
    }
}

/// Uniform random permutation number `index` of the stream `seed`.
pub fn permutation(n: usize, seed: u64, index: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, "perm", index));
    p
}

fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::ShapeMismatch(format!("permutation of length {} for {n} rows", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidConfig("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `P_T X + Pi (I - P_T) X` with `(Pi A)_i = A_{perm[i]}`; rows fixed by the
/// permutation are copied from `X` unchanged.
pub fn pseudo_predictor_design<F: Real>(t: ArrayView2<F>, x: ArrayView2<F>, perm: &[usize]) -> Result<Array2<F>> {
    let n = t.nrows();
    if x.nrows() != n {
        return Err(Error::ShapeMismatch(format!("T has {n} rows, X has {}", x.nrows())));
    }
    check_permutation(perm, n)?;
    let qr = Qr::new(t, true);
    if qr.rank() < t.ncols() {
        return Err(Error::RankDeficientCovariates {
            columns: qr.perm()[qr.rank()..].to_vec(),
        });
    }
    let q = qr.thin_q(t.ncols());
    let fitted = q.dot(&q.t().dot(&x));
    let mut out = x.to_owned();
    for (i, &pi) in perm.iter().enumerate() {
        if pi == i {
            continue;
        }
        let mut row = out.row_mut(i);
        for j in 0..x.ncols() {
            row[j] = fitted[[i, j]] + (x[[pi, j]] - fitted[[pi, j]]);
        }
    }
    Ok(out)
}

/// Dataset for one permutation under a scheme.
pub fn permuted_dataset<F: Real>(data: &Dataset<F>, kind: SchemeKind, perm: &[usize]) -> Result<Dataset<F>> {
    let n = data.n();
    check_permutation(perm, n)?;
    match kind {
        SchemeKind::PseudoPredictor => {
            let x = data.images.masked_data();
            let xp = pseudo_predictor_design(data.t.view(), x.view(), perm)?;
            data.with_images(data.images.with_data(xp)?)
        }
        SchemeKind::ResponsePermutation => {
            // pairs y_i with x_{perm[i]}, as the pseudo-predictor scheme does
            let mut y = data.y.clone();
            for (i, &pi) in perm.iter().enumerate() {
                y[pi] = data.y[i];
            }
            data.with_response(y)
        }
    }
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| if x.is_finite() { Some(*x) } else { None }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub observed: f64,
    #[serde(with = "finite_or_null")]
    pub null_stats: Vec<f64>,
    pub p_value: f64,
    pub scheme: PermutationScheme,
    pub cv: CvConfig,
    pub grid: GridSpec,
    pub transform: Transform,
    pub observed_best: EstimatorConfig,
    /// Configuration selected on each permuted dataset.
    pub null_best: Vec<EstimatorConfig>,
}

/// `(1 + #{null <= observed}) / (B + 1)`.
pub fn add_one_p_value(observed: f64, null_stats: &[f64]) -> f64 {
    let count = null_stats.iter().filter(|&&s| s <= observed).count();
    (1 + count) as f64 / (null_stats.len() + 1) as f64
}

/// Permutation test with the minimum CV score over the grid as statistic.
/// Every permuted dataset is re-tuned over the same grid and folds.
pub fn perm_test<F: Real>(
    data: &Dataset<F>,
    grid: &GridSpec,
    transform: &Transform,
    cv: &CvConfig,
    scheme: &PermutationScheme,
) -> Result<PermTestResult> {
    if scheme.permutations == 0 {
        return Err(Error::InvalidConfig("at least one permutation is required".into()));
    }
    if scheme.kind == SchemeKind::ResponsePermutation && data.t.ncols() > 1 && !scheme.allow_covariates {
        return Err(Error::InvalidConfig(
            "response permutation ignores scalar covariates; use the pseudo-predictor scheme".into(),
        ));
    }
    let n = data.n();
    let folds = make_folds(n, cv.folds, cv.reps, cv.seed)?;
    let design = Design::from_stack(&data.images, transform)?;
    let obs = tune_on(data, &design, grid, transform, cv, &folds)?;
    let null: Vec<(f64, EstimatorConfig)> = (0..scheme.permutations)
        .into_par_iter()
        .map(|b| {
            let perm = permutation(n, scheme.seed, b as u64);
            let pdata = permuted_dataset(data, scheme.kind, &perm)?;
            let pdesign = Design::from_stack(&pdata.images, transform)?;
            let r = tune_on(&pdata, &pdesign, grid, transform, cv, &folds)?;
            Ok((r.best_score(), *r.best_config()))
        })
        .collect::<Result<_>>()?;
    let null_stats: Vec<f64> = null.iter().map(|x| x.0).collect();
    Ok(PermTestResult {
        observed: obs.best_score(),
        p_value: add_one_p_value(obs.best_score(), &null_stats),
        null_stats,
        scheme: *scheme,
        cv: *cv,
        grid: grid.clone(),
        transform: *transform,
        observed_best: *obs.best_config(),
        null_best: null.into_iter().map(|x| x.1).collect(),
    })
}

impl PermTestResult {
    pub fn summary(&self) -> String {
        let exceed = self.null_stats.iter().filter(|&&s| s <= self.observed).count();
        format!(
            "scheme            {:?}\npermutations      {}\nobserved CV       {:.6}\nnull CV (median)  {:.6}\nnull <= observed  {}\np-value           {:.4}\n",
            self.scheme.kind,
            self.null_stats.len(),
            self.observed,
            median(&self.null_stats),
            exceed,
            self.p_value
        )
    }
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Pearson correlation with a Fisher-z interval and a t-test p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `None` when either input is constant or there are fewer than four points.
pub fn pearson<F: Real>(a: ArrayView1<F>, b: ArrayView1<F>, level: f64) -> Option<Correlation> {
    let n = a.len();
    if n != b.len() || n < 4 {
        return None;
    }
    let nf = n as f64;
    let ma = a.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / nf;
    let mb = b.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / nf;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x.to_f64_lossy() - ma;
        let dy = y.to_f64_lossy() - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale_a = ma.abs().max(1.0) * 1e-12;
    let scale_b = mb.abs().max(1.0) * 1e-12;
    if saa.sqrt() <= scale_a * nf.sqrt() || sbb.sqrt() <= scale_b * nf.sqrt() {
        return None;
    }
    let r = (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let t = StudentsT::new(0.0, 1.0, df).ok()?;
    let p_value = if r.abs() >= 1.0 {
        0.0
    } else {
        let stat = r * (df / (1.0 - r * r)).sqrt();
        2.0 * t.cdf(-stat.abs())
    };
    let z = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh();
    let normal = statrs::distribution::Normal::standard();
    let crit = normal.inverse_cdf(0.5 + level / 2.0);
    let se = 1.0 / (nf - 3.0).sqrt();
    Some(Correlation {
        r,
        lower: (z - crit * se).tanh().min(r),
        upper: (z + crit * se).tanh().max(r),
        p_value,
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateEffect {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCorrelation {
    pub name: String,
    /// `None` when the covariate or the image score is constant.
    pub correlation: Option<Correlation>,
}

/// Exploratory: share of strong coefficient-image voxels where the voxelwise
/// correlation with the covariate exceeds `threshold` in magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalOverlap {
    pub name: String,
    pub threshold: f64,
    pub support_size: usize,
    pub fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfounderReport {
    pub family: Family,
    pub level: f64,
    /// Regression of `y` on all scalar covariates with Wald intervals.
    pub scalar_model: Vec<CovariateEffect>,
    pub scalar_model_converged: bool,
    /// Correlation of each non-intercept covariate with the images-only linear predictor.
    pub image_score_correlations: Vec<ScoreCorrelation>,
    pub local_overlap: Vec<LocalOverlap>,
}

/// Threshold on `|corr|` for [`ConfounderReport::flagged`] and the local overlap.
pub const CORRELATION_THRESHOLD: f64 = 0.3;
/// Voxels with `|beta(s)| >= SUPPORT_FRACTION * max |beta|` count as the coefficient-image support.
pub const SUPPORT_FRACTION: f64 = 0.1;

pub fn confounder_diagnostics<F: Real>(
    data: &Dataset<F>,
    images_only_fit: &ScalarOnImageFit<F>,
    names: Option<&[String]>,
) -> Result<ConfounderReport> {
    if images_only_fit.delta.len() != 1 {
        return Err(Error::InvalidConfig(
            "the image fit for diagnostics must use the intercept as its only covariate".into(),
        ));
    }
    let q = data.t.ncols();
    let names: Vec<String> = match names {
        Some(v) if v.len() == q => v.to_vec(),
        Some(v) => {
            return Err(Error::ShapeMismatch(format!("{} names for {q} covariates", v.len())));
        }
        None => (0..q).map(|j| if j == 0 { "(intercept)".into() } else { format!("t{j}") }).collect(),
    };
    let level = 0.95;
    let glm = fit_glm(data.t.view(), data.y.view(), data.family)?;
    let scalar_model = match glm.wald_summary(level) {
        Some(rows) => rows
            .into_iter()
            .zip(&names)
            .map(|(r, name)| CovariateEffect {
                name: name.clone(),
                estimate: r.estimate,
                std_error: r.std_error,
                lower: r.lower,
                upper: r.upper,
                p_value: r.p_value,
            })
            .collect(),
        None => glm
            .coefficients
            .iter()
            .zip(&names)
            .map(|(b, name)| CovariateEffect {
                name: name.clone(),
                estimate: b.to_f64_lossy(),
                std_error: f64::NAN,
                lower: f64::NAN,
                upper: f64::NAN,
                p_value: f64::NAN,
            })
            .collect(),
    };
    let score = images_only_fit.image_score(&data.images)?;
    let image_score_correlations = (1..q)
        .map(|j| ScoreCorrelation {
            name: names[j].clone(),
            correlation: pearson(data.t.column(j), score.view(), level),
        })
        .collect();

    let beta = &images_only_fit.beta_image;
    let bmax = beta.iter().fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
    let support: Vec<usize> = if bmax > 0.0 {
        beta.iter()
            .enumerate()
            .filter(|(_, v)| v.to_f64_lossy().abs() >= SUPPORT_FRACTION * bmax)
            .map(|(i, _)| i)
            .collect()
    } else {
        Vec::new()
    };
    let x = data.images.masked_data();
    let local_overlap = (1..q)
        .map(|j| {
            let tj = data.t.column(j);
            let fraction = if support.is_empty() {
                None
            } else {
                let hits = support
                    .iter()
                    .filter(|&&s| {
                        pearson(tj, x.column(s), level).is_some_and(|c| c.r.abs() > CORRELATION_THRESHOLD)
                    })
                    .count();
                Some(hits as f64 / support.len() as f64)
            };
            LocalOverlap {
                name: names[j].clone(),
                threshold: CORRELATION_THRESHOLD,
                support_size: support.len(),
                fraction,
            }
        })
        .collect();
    Ok(ConfounderReport {
        family: data.family,
        level,
        scalar_model,
        scalar_model_converged: glm.converged,
        image_score_correlations,
        local_overlap,
    })
}

impl ConfounderReport {
    /// Covariates whose image-score correlation exceeds `threshold` in magnitude with `p < alpha`.
    pub fn flagged(&self, threshold: f64, alpha: f64) -> Vec<String> {
        self.image_score_correlations
            .iter()
            .filter(|c| c.correlation.is_some_and(|r| r.r.abs() > threshold && r.p_value < alpha))
            .map(|c| c.name.clone())
            .collect()
    }

    /// Fixed-width text table of both diagnostics.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let scale = match self.family {
            Family::BinomialLogit => "log odds ratio",
            Family::GaussianIdentity => "coefficient",
        };
        s.push_str(&format!(
            "Scalar covariate model ({scale}, {:.0}% Wald interval)\n",
            self.level * 100.0
        ));
        s.push_str(&format!(
            "{:<16} {:>10} {:>22} {:>10}\n",
            "covariate", "estimate", "interval", "p-value"
        ));
        for e in &self.scalar_model {
            s.push_str(&format!(
                "{:<16} {:>10.4} {:>22} {:>10}\n",
                e.name,
                e.estimate,
                format!("({:.4}, {:.4})", e.lower, e.upper),
                fmt_p(e.p_value)
            ));
        }
        s.push_str(&format!(
            "\nCorrelation with image-only linear predictor (Fisher-z {:.0}% interval)\n",
            self.level * 100.0
        ));
        s.push_str(&format!(
            "{:<16} {:>10} {:>22} {:>10}\n",
            "covariate", "corr", "interval", "p-value"
        ));
        for c in &self.image_score_correlations {
            match c.correlation {
                Some(r) => s.push_str(&format!(
                    "{:<16} {:>10.4} {:>22} {:>10}\n",
                    c.name,
                    r.r,
                    format!("({:.4}, {:.4})", r.lower, r.upper),
                    fmt_p(r.p_value)
                )),
                None => s.push_str(&format!("{:<16} {:>10}\n", c.name, "undefined")),
            }
        }
        s
    }
}

fn fmt_p(p: f64) -> String {
    if p.is_nan() {
        "NA".into()
    } else if p < 1e-4 {
        "<0.0001".into()
    } else {
        format!("{p:.4}")
    }
}
