use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use waveir::dwt::WaveletSpec;
use waveir::estimators::{EstimatorConfig, Method, Transform};
use waveir::glm::Family;
use waveir::inference::SchemeKind;
use waveir::modelsel::{Aggregate, CvConfig, GridSpec, LambdaSpec};
use waveir::simulate::CoefficientImageKind;

#[derive(Debug, Parser)]
#[command(name = "waveir", version, about = "Wavelet-domain regression of scalar outcomes on images")]
pub struct Cli {
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset bundle.
    Simulate(SimulateArgs),
    /// Fit one estimator configuration.
    Fit(FitArgs),
    /// Tune over a grid by repeated K-fold cross-validation.
    Cv(CvArgs),
    /// Permutation test of the image effect.
    Permtest(PermArgs),
    /// Confounding diagnostics for the scalar covariates.
    Diagnose(CvArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::GaussianIdentity,
            FamilyArg::Binomial => Family::BinomialLogit,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DesignArg {
    Beta1,
    Beta2,
    Block,
}

impl From<DesignArg> for CoefficientImageKind {
    fn from(d: DesignArg) -> Self {
        match d {
            DesignArg::Beta1 => CoefficientImageKind::GaussDiff,
            DesignArg::Beta2 => CoefficientImageKind::Bumps2d,
            DesignArg::Block => CoefficientImageKind::Block,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "beta1")]
    pub design: DesignArg,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Side length of the square image grid.
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub family: FamilyArg,
    #[arg(long, default_value_t = 0.5)]
    pub r2: f64,
    /// Event probability (binomial only).
    #[arg(long)]
    pub base_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum MethodArg {
    Pcr,
    Pls,
    Net,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum DomainArg {
    Wavelet,
    Voxel,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "net")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "wavelet")]
    pub domain: DomainArg,
    /// Coarsest decomposition level (wavelet domain; default 4, lowered on small grids).
    #[arg(long)]
    pub j0: Option<usize>,
    /// Retained coefficients (pcr, pls); comma-separated for a grid.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<usize>,
    /// Components (pcr, pls); comma-separated for a grid.
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    /// Elastic-net mixing (net); comma-separated for a grid.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Penalty (net): a value, a comma-separated list, or `auto`.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Length of the automatic lambda sequence.
    #[arg(long)]
    pub nlambda: Option<usize>,
    /// Smallest automatic lambda as a fraction of the largest.
    #[arg(long)]
    pub lambda_min_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvFlags {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Defaults to mean for gaussian and median for binomial outcomes.
    #[arg(long, value_parser = ["mean", "median"])]
    pub cv_aggregate: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub cv: CvFlags,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum SchemeArg {
    Response,
    Pseudo,
}

#[derive(Debug, Args)]
pub struct PermArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub cv: CvFlags,
    #[arg(long, value_enum, default_value = "pseudo")]
    pub scheme: SchemeArg,
    /// Number of permutations.
    #[arg(long = "B", default_value_t = 99)]
    pub permutations: usize,
    /// Permit response permutation with covariates beyond the intercept.
    #[arg(long)]
    pub allow_covariates: bool,
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Response => SchemeKind::ResponsePermutation,
            SchemeArg::Pseudo => SchemeKind::PseudoPredictor,
        }
    }
}

/// Problem with the combination of flags.
#[derive(Debug)]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

enum LambdaArg {
    Auto,
    Values(Vec<f64>),
}

fn parse_lambda(s: &str) -> Result<LambdaArg, UsageError> {
    if s.trim() == "auto" {
        return Ok(LambdaArg::Auto);
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map(LambdaArg::Values)
        .or_else(|_| usage(format!("--lambda expects numbers or `auto`, got `{s}`")))
}

impl ModelArgs {
    /// Transform for a bundle with images of `shape`.
    pub fn transform_for(&self, shape: &[usize]) -> Result<Transform, UsageError> {
        let t = self.transform()?;
        if self.j0.is_some() {
            return Ok(t);
        }
        let levels = shape.iter().map(|&s| s.next_power_of_two().trailing_zeros() as usize).min().unwrap_or(1);
        Ok(match t {
            Transform::Wavelet(spec) => Transform::Wavelet(spec.with_j0(spec.j0.min(levels.saturating_sub(1)))),
            other => other,
        })
    }

    pub fn transform(&self) -> Result<Transform, UsageError> {
        match self.domain {
            DomainArg::Wavelet => Ok(Transform::Wavelet(WaveletSpec::default().with_j0(self.j0.unwrap_or(4)))),
            DomainArg::Voxel if self.j0.is_some() => usage("--j0 applies only to --domain wavelet"),
            DomainArg::Voxel => Ok(Transform::Identity),
        }
    }

    fn check_combination(&self) -> Result<(), UsageError> {
        let net_flags = !self.alpha.is_empty()
            || self.lambda.is_some()
            || self.nlambda.is_some()
            || self.lambda_min_ratio.is_some();
        let comp_flags = !self.c.is_empty() || !self.m.is_empty();
        match self.method {
            MethodArg::Pcr | MethodArg::Pls if net_flags => {
                usage("--alpha, --lambda, --nlambda and --lambda-min-ratio apply only to --method net")
            }
            MethodArg::Net if comp_flags => usage("--c and --m apply only to --method pcr or pls"),
            _ => Ok(()),
        }
    }

    /// Single configuration for `fit`.
    pub fn config(&self) -> Result<EstimatorConfig, UsageError> {
        self.check_combination()?;
        let single = |v: &[usize], name: &str| match v {
            [x] => Ok(*x),
            [] => usage(format!("--{name} is required for --method {:?}", self.method).to_lowercase()),
            _ => usage(format!("fit takes a single --{name}; use cv for grids")),
        };
        let method = match self.method {
            MethodArg::Pcr => Method::Pcr {
                c: single(&self.c, "c")?,
                m: single(&self.m, "m")?,
            },
            MethodArg::Pls => Method::Pls {
                c: single(&self.c, "c")?,
                m: single(&self.m, "m")?,
            },
            MethodArg::Net => {
                if self.nlambda.is_some() || self.lambda_min_ratio.is_some() {
                    return usage("--nlambda and --lambda-min-ratio apply only to cv, permtest and diagnose");
                }
                let alpha = match self.alpha.as_slice() {
                    [] => 1.0,
                    [a] => *a,
                    _ => return usage("fit takes a single --alpha; use cv for grids"),
                };
                let lambda = match self.lambda.as_deref().map(parse_lambda).transpose()? {
                    Some(LambdaArg::Values(v)) if v.len() == 1 => v[0],
                    Some(LambdaArg::Values(_)) => return usage("fit takes a single --lambda; use cv for grids"),
                    Some(LambdaArg::Auto) => return usage("--lambda auto needs a search; use cv"),
                    None => return usage("--lambda is required for fit --method net"),
                };
                Method::Net { alpha, lambda }
            }
        };
        Ok(EstimatorConfig::new(method, self.transform()?))
    }

    /// Grid for `cv`, `permtest` and `diagnose`.
    pub fn grid(&self) -> Result<GridSpec, UsageError> {
        self.check_combination()?;
        match self.method {
            MethodArg::Pcr | MethodArg::Pls => {
                if self.c.is_empty() || self.m.is_empty() {
                    return usage("--c and --m are required for --method pcr or pls");
                }
                let (c, m) = (self.c.clone(), self.m.clone());
                Ok(if self.method == MethodArg::Pcr {
                    GridSpec::Pcr { c, m }
                } else {
                    GridSpec::Pls { c, m }
                })
            }
            MethodArg::Net => {
                let alpha = if self.alpha.is_empty() {
                    vec![0.1, 0.4, 0.7, 1.0]
                } else {
                    self.alpha.clone()
                };
                let lambda = match self.lambda.as_deref().map(parse_lambda).transpose()? {
                    None | Some(LambdaArg::Auto) => LambdaSpec::Auto {
                        count: self.nlambda.unwrap_or(100),
                        min_ratio: self.lambda_min_ratio,
                    },
                    Some(LambdaArg::Values(v)) => {
                        if self.nlambda.is_some() || self.lambda_min_ratio.is_some() {
                            return usage("--nlambda and --lambda-min-ratio need --lambda auto");
                        }
                        LambdaSpec::Values(v)
                    }
                };
                Ok(GridSpec::Net { alpha, lambda })
            }
        }
    }
}

impl CvFlags {
    pub fn config(&self, family: Family) -> CvConfig {
        let mut cv = CvConfig::for_family(family, self.seed);
        cv.folds = self.folds;
        cv.reps = self.reps;
        if let Some(a) = &self.cv_aggregate {
            cv.aggregate = if a == "mean" { Aggregate::Mean } else { Aggregate::Median };
        }
        cv
    }
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
