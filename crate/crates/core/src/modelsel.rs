//! Repeated K-fold cross-validation and grid search.
//!
//! For repetition `r` and fold `k` let `S_rk` be the summed held-out loss
//! of the model trained without fold `k`. The mean aggregate is
//! `(1/(RK)) sum_rk S_rk`, the median aggregate `(1/R) sum_r median_k S_rk`.
//! Transforms act row by row, so the coefficient-domain design is computed
//! once; centring, screening, SVDs, loadings and penalty fits are redone on
//! every training split.

use std::cmp::Ordering;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    fit_design, lambda_grid, lambda_max, net_path, CoefFit, Dataset, Design, EstimatorConfig, Method, NetOptions,
    Transform,
};
use crate::glm::{unit_deviances, Family};
use crate::rng;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    SquaredError,
    Deviance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    Mean,
    Median,
}

impl std::str::FromStr for Aggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregate::Mean),
            "median" => Ok(Aggregate::Median),
            other => Err(Error::InvalidConfig(format!("unknown aggregate `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub reps: usize,
    pub seed: u64,
    pub loss: Loss,
    pub aggregate: Aggregate,
}

impl CvConfig {
    /// Five folds, five repetitions; deviance loss; mean aggregate for the
    /// Gaussian family and median for the binomial one.
    pub fn for_family(family: Family, seed: u64) -> Self {
        CvConfig {
            folds: 5,
            reps: 5,
            seed,
            loss: Loss::Deviance,
            aggregate: match family {
                Family::GaussianIdentity => Aggregate::Mean,
                Family::BinomialLogit => Aggregate::Median,
            },
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.folds < 2 || self.folds > n {
            return Err(Error::InvalidConfig(format!(
                "folds = {} must lie in 2..={n}",
                self.folds
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        Ok(())
    }
}

/// `R` independent partitions of `0..n` into `K` folds whose sizes differ by at most one.
pub type Folds = Vec<Vec<Vec<usize>>>;

pub fn make_folds(n: usize, folds: usize, reps: usize, seed: u64) -> Result<Folds> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidConfig(format!("folds = {folds} must lie in 2..={n}")));
    }
    Ok((0..reps)
        .map(|r| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(seed, "folds", r as u64));
            let mut parts = vec![Vec::with_capacity(n / folds + 1); folds];
            for (pos, &i) in order.iter().enumerate() {
                parts[pos % folds].push(i);
            }
            for p in &mut parts {
                p.sort_unstable();
            }
            parts
        })
        .collect())
}

fn check_folds(folds: &Folds, n: usize) -> Result<()> {
    if folds.is_empty() {
        return Err(Error::InvalidConfig("no fold repetitions".into()));
    }
    for rep in folds {
        let mut seen = vec![false; n];
        for &i in rep.iter().flatten() {
            if i >= n || seen[i] {
                return Err(Error::InvalidConfig("folds do not partition the observations".into()));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) || rep.len() < 2 {
            return Err(Error::InvalidConfig("folds do not partition the observations".into()));
        }
    }
    Ok(())
}

/// Held-out loss sum of one fitted model.
fn fold_loss<F: Real>(
    fit: &CoefFit<F>,
    design: &Array2<F>,
    data: &Dataset<F>,
    test: &[usize],
    loss: Loss,
) -> Result<f64> {
    let x = design.select(Axis(0), test);
    let t = data.t.select(Axis(0), test);
    let y = data.y.select(Axis(0), test);
    let mu = fit.predict(x.view(), t.view(), data.family)?;
    let total = match loss {
        Loss::SquaredError => (&y - &mu).mapv(|v| v * v).sum(),
        Loss::Deviance => unit_deviances(y.view(), mu.view(), data.family)?.sum(),
    };
    Ok(total.to_f64_lossy())
}

fn complement(n: usize, test: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in test {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Model trained on `train` rows of a precomputed design.
pub fn fold_fit<F: Real>(design: &Design<F>, data: &Dataset<F>, train: &[usize], method: &Method) -> Result<CoefFit<F>> {
    let x = design.matrix.select(Axis(0), train);
    let t = data.t.select(Axis(0), train);
    let y = data.y.select(Axis(0), train);
    fit_design(x.view(), t.view(), y.view(), data.family, method)
}

/// Applies the aggregate to an `R x K` table of fold sums (row-major).
pub fn aggregate(sums: &[f64], reps: usize, agg: Aggregate) -> f64 {
    if sums.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let k = sums.len() / reps.max(1);
    match agg {
        Aggregate::Mean => sums.iter().sum::<f64>() / sums.len() as f64,
        Aggregate::Median => {
            sums.chunks(k)
                .map(|row| {
                    let mut v = row.to_vec();
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
                    if k % 2 == 1 {
                        v[k / 2]
                    } else {
                        0.5 * (v[k / 2 - 1] + v[k / 2])
                    }
                })
                .sum::<f64>()
                / reps as f64
        }
    }
}

/// Standard error of the mean fold sum, `sd(S_rk) / sqrt(RK)`.
pub fn standard_error(sums: &[f64]) -> f64 {
    let m = sums.len();
    if m < 2 || sums.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let mean = sums.iter().sum::<f64>() / m as f64;
    let var = sums.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
    (var / m as f64).sqrt()
}

/// CV score of a single configuration.
pub fn cv_score<F: Real>(data: &Dataset<F>, config: &EstimatorConfig, cv: &CvConfig) -> Result<f64> {
    cv.check(data.n())?;
    let folds = make_folds(data.n(), cv.folds, cv.reps, cv.seed)?;
    cv_score_with_folds(data, config, &folds, cv)
}

/// CV score on explicit folds; `cv.folds`/`cv.reps`/`cv.seed` are ignored.
pub fn cv_score_with_folds<F: Real>(data: &Dataset<F>, config: &EstimatorConfig, folds: &Folds, cv: &CvConfig) -> Result<f64> {
    check_folds(folds, data.n())?;
    let design = Design::from_stack(&data.images, &config.transform)?;
    let sums = fold_table(data, &design, std::slice::from_ref(&config.method), folds, cv.loss)?;
    Ok(aggregate(&sums[0], folds.len(), cv.aggregate))
}

/// Evaluates every method on every fold; returns one row of fold sums per method.
/// Failed fits give `+inf`. Net methods sharing `alpha` are fitted as a warm-started path.
fn fold_table<F: Real>(
    data: &Dataset<F>,
    design: &Design<F>,
    methods: &[Method],
    folds: &Folds,
    loss: Loss,
) -> Result<Vec<Vec<f64>>> {
    let n = data.n();
    let tasks: Vec<&Vec<usize>> = folds.iter().flatten().collect();
    let paths = net_groups(methods);
    let per_fold: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|test| {
            let train = complement(n, test);
            let mut out = vec![f64::INFINITY; methods.len()];
            for (idx, method) in methods.iter().enumerate() {
                if matches!(method, Method::Net { .. }) {
                    continue;
                }
                if let Ok(fit) = fold_fit(design, data, &train, method) {
                    out[idx] = fold_loss(&fit, &design.matrix, data, test, loss).unwrap_or(f64::INFINITY);
                }
            }
            if !paths.is_empty() {
                let x = design.matrix.select(Axis(0), &train);
                let t = data.t.select(Axis(0), &train);
                let y = data.y.select(Axis(0), &train);
                for (alpha, members) in &paths {
                    let lambdas: Vec<f64> = members.iter().map(|&(_, l)| l).collect();
                    if let Ok(fits) = net_path(x.view(), t.view(), y.view(), data.family, *alpha, &lambdas, &NetOptions::default()) {
                        for (fit, &(idx, _)) in fits.iter().zip(members) {
                            out[idx] = fold_loss(fit, &design.matrix, data, test, loss).unwrap_or(f64::INFINITY);
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok((0..methods.len())
        .map(|j| per_fold.iter().map(|row| row[j]).collect())
        .collect())
}

/// Net configurations grouped by `alpha`, each group sorted by decreasing `lambda`.
fn net_groups(methods: &[Method]) -> Vec<(f64, Vec<(usize, f64)>)> {
    let mut groups: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    for (idx, m) in methods.iter().enumerate() {
        if let Method::Net { alpha, lambda } = *m {
            match groups.iter_mut().find(|(a, _)| *a == alpha) {
                Some((_, g)) => g.push((idx, lambda)),
                None => groups.push((alpha, vec![(idx, lambda)])),
            }
        }
    }
    for (_, g) in &mut groups {
        g.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "values")]
pub enum LambdaSpec {
    /// Log-spaced from `lambda_max(alpha)` down to `lambda_max * min_ratio`
    /// (default 0.01 when columns outnumber observations, else 1e-4).
    Auto { count: usize, min_ratio: Option<f64> },
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum GridSpec {
    Pcr { c: Vec<usize>, m: Vec<usize> },
    Pls { c: Vec<usize>, m: Vec<usize> },
    Net { alpha: Vec<f64>, lambda: LambdaSpec },
}

impl GridSpec {
    /// Default net grid: alpha in {0.1, 0.4, 0.7, 1.0}, 100 automatic lambdas.
    pub fn default_net() -> Self {
        GridSpec::Net {
            alpha: vec![0.1, 0.4, 0.7, 1.0],
            lambda: LambdaSpec::Auto {
                count: 100,
                min_ratio: None,
            },
        }
    }

    /// Concrete configurations for a dataset. Automatic lambda sequences start
    /// at the largest `lambda_max` over the full data and every training split
    /// in `folds`, so the first configuration is the null model everywhere.
    pub fn expand<F: Real>(&self, data: &Dataset<F>, design: &Design<F>, folds: &Folds) -> Result<Vec<Method>> {
        let n = data.n();
        let ncols = design.matrix.ncols();
        let out: Vec<Method> = match self {
            GridSpec::Pcr { c, m } | GridSpec::Pls { c, m } => {
                let pcr = matches!(self, GridSpec::Pcr { .. });
                let mut v = Vec::new();
                for &ci in c {
                    for &mi in m {
                        if ci >= 1 && ci <= ncols && mi >= 1 && mi <= ci.min(n.saturating_sub(1)) {
                            v.push(if pcr { Method::Pcr { c: ci, m: mi } } else { Method::Pls { c: ci, m: mi } });
                        }
                    }
                }
                v
            }
            GridSpec::Net { alpha, lambda } => {
                let mut v = Vec::new();
                for &a in alpha {
                    if !(0.0..=1.0).contains(&a) {
                        return Err(Error::InvalidConfig(format!("alpha = {a} must lie in [0, 1]")));
                    }
                    let lambdas = match lambda {
                        LambdaSpec::Values(vals) => vals.clone(),
                        LambdaSpec::Auto { count, min_ratio } => {
                            let mut lmax = lambda_max(design.matrix.view(), data.t.view(), data.y.view(), data.family, a)?;
                            for test in folds.iter().flatten() {
                                let train = complement(n, test);
                                let x = design.matrix.select(Axis(0), &train);
                                let t = data.t.select(Axis(0), &train);
                                let y = data.y.select(Axis(0), &train);
                                if let Ok(l) = lambda_max(x.view(), t.view(), y.view(), data.family, a) {
                                    lmax = lmax.max(l);
                                }
                            }
                            let ratio = min_ratio.unwrap_or(if ncols > n { 0.01 } else { 1e-4 });
                            lambda_grid(lmax, *count, ratio)
                        }
                    };
                    for l in lambdas {
                        if !(l >= 0.0 && l.is_finite()) {
                            return Err(Error::InvalidConfig(format!("lambda = {l} must be finite and >= 0")));
                        }
                        v.push(Method::Net { alpha: a, lambda: l });
                    }
                }
                v
            }
        };
        if out.is_empty() {
            return Err(Error::InvalidConfig("tuning grid has no admissible configuration".into()));
        }
        Ok(out)
    }
}

/// `true` when `a` is the sparser (preferred on ties) of two methods.
fn sparser(a: &Method, b: &Method) -> bool {
    match (a, b) {
        (Method::Net { alpha: aa, lambda: la }, Method::Net { alpha: ab, lambda: lb }) => {
            la > lb || (la == lb && aa > ab)
        }
        (Method::Pcr { c: ca, m: ma }, Method::Pcr { c: cb, m: mb })
        | (Method::Pls { c: ca, m: ma }, Method::Pls { c: cb, m: mb }) => (ca, ma) < (cb, mb),
        _ => false,
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

    pub mod nested {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(
                v.iter()
                    .map(|row| row.iter().map(|x| if x.is_finite() { Some(*x) } else { None }).collect::<Vec<_>>()),
            )
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
            let v: Vec<Vec<Option<f64>>> = Vec::deserialize(d)?;
            Ok(v.into_iter()
                .map(|row| row.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
                .collect())
        }
    }
}

/// Outcome of a grid search. Scores of configurations with a failed fold are
/// `+inf` (written as `null` in JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub family: Family,
    pub cv: CvConfig,
    pub n: usize,
    pub grid: Vec<EstimatorConfig>,
    #[serde(with = "finite_or_null")]
    pub scores: Vec<f64>,
    /// Per configuration, the `R*K` fold sums in repetition-major order.
    #[serde(with = "finite_or_null::nested")]
    pub per_fold: Vec<Vec<f64>>,
    #[serde(with = "finite_or_null")]
    pub std_errors: Vec<f64>,
    pub best: usize,
    /// Largest-lambda net configuration with the best alpha whose score is within one SE of the best.
    pub one_se: Option<usize>,
}

impl CvResult {
    pub fn best_config(&self) -> &EstimatorConfig {
        &self.grid[self.best]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best]
    }

    /// One row per configuration per fold.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["config", "method", "c", "m", "alpha", "lambda", "rep", "fold", "loss", "score"])?;
        let k = self.cv.folds;
        for (idx, cfg) in self.grid.iter().enumerate() {
            let (c, m, a, l) = match cfg.method {
                Method::Pcr { c, m } | Method::Pls { c, m } => (c.to_string(), m.to_string(), String::new(), String::new()),
                Method::Net { alpha, lambda } => (String::new(), String::new(), alpha.to_string(), lambda.to_string()),
            };
            for (pos, loss) in self.per_fold[idx].iter().enumerate() {
                out.write_record([
                    idx.to_string(),
                    cfg.method.name().to_string(),
                    c.clone(),
                    m.clone(),
                    a.clone(),
                    l.clone(),
                    (pos / k).to_string(),
                    (pos % k).to_string(),
                    loss.to_string(),
                    self.scores[idx].to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("csv", e))?;
        Ok(())
    }
}

/// Grid search by repeated K-fold CV at a fixed transform.
pub fn tune<F: Real>(data: &Dataset<F>, grid: &GridSpec, transform: &Transform, cv: &CvConfig) -> Result<CvResult> {
    cv.check(data.n())?;
    let folds = make_folds(data.n(), cv.folds, cv.reps, cv.seed)?;
    let design = Design::from_stack(&data.images, transform)?;
    tune_on(data, &design, grid, transform, cv, &folds)
}

/// Grid search on a precomputed design and folds.
pub fn tune_on<F: Real>(
    data: &Dataset<F>,
    design: &Design<F>,
    grid: &GridSpec,
    transform: &Transform,
    cv: &CvConfig,
    folds: &Folds,
) -> Result<CvResult> {
    check_folds(folds, data.n())?;
    let methods = grid.expand(data, design, folds)?;
    let table = fold_table(data, design, &methods, folds, cv.loss)?;
    let scores: Vec<f64> = table.iter().map(|s| aggregate(s, folds.len(), cv.aggregate)).collect();
    let std_errors: Vec<f64> = table.iter().map(|s| standard_error(s)).collect();
    let mut best = 0;
    for j in 1..methods.len() {
        let better = scores[j] < scores[best] || (scores[j] == scores[best] && sparser(&methods[j], &methods[best]));
        if better {
            best = j;
        }
    }
    let one_se = match methods[best] {
        Method::Net { alpha, .. } if scores[best].is_finite() => {
            let limit = scores[best] + std_errors[best];
            let mut pick = best;
            for (j, m) in methods.iter().enumerate() {
                if let Method::Net { alpha: a, lambda } = *m {
                    if a == alpha && scores[j] <= limit {
                        if let Method::Net { lambda: lp, .. } = methods[pick] {
                            if lambda > lp {
                                pick = j;
                            }
                        }
                    }
                }
            }
            Some(pick)
        }
        _ => None,
    };
    Ok(CvResult {
        family: data.family,
        cv: CvConfig {
            folds: folds[0].len(),
            reps: folds.len(),
            ..*cv
        },
        n: data.n(),
        grid: methods.into_iter().map(|m| EstimatorConfig::new(m, *transform)).collect(),
        scores,
        per_fold: table,
        std_errors,
        best,
        one_se,
    })
}
