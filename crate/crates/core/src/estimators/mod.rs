//! Scalar-on-image estimators: sparse PCR, sparse PLS and the elastic net,
//! fitted either on wavelet coefficients or directly on voxels.
//!
//! Every estimator works on a coefficient-domain design `X~` (one
//! transformed image per row). Columns of `X~` are centred with the
//! training means, which are kept for prediction; the scalar covariates `T`
//! are never screened or penalised.

mod components;
mod net;
mod screening;

use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use crate::dwt::{dwt_stack, reconstruct_image, CoeffLayout, ImageStack, Padding, WaveletSpec};
use crate::error::{Error, Result};
use crate::glm::{fit_glm, Family};
use crate::Real;

pub use components::{fit_pcr_design, fit_pls_design, pls_components};
pub use net::{fit_net_design, kkt_violation, lambda_grid, lambda_max, net_path, NetOptions, ALPHA_FLOOR};
pub use screening::{
    center_columns, column_covariances, column_variances, select_by_covariance, select_by_variance, top_indices,
};

/// Estimator and its tuning parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Pcr { c: usize, m: usize },
    Pls { c: usize, m: usize },
    Net { alpha: f64, lambda: f64 },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Pcr { .. } => "pcr",
            Method::Pls { .. } => "pls",
            Method::Net { .. } => "net",
        }
    }

    /// `(c, m, alpha, lambda)`, with `None` for parameters the method does not have.
    pub fn parameters(&self) -> (Option<usize>, Option<usize>, Option<f64>, Option<f64>) {
        match *self {
            Method::Pcr { c, m } | Method::Pls { c, m } => (Some(c), Some(m), None, None),
            Method::Net { alpha, lambda } => (None, None, Some(alpha), Some(lambda)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Wavelet(WaveletSpec),
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    #[serde(flatten)]
    pub method: Method,
    pub transform: Transform,
}

impl EstimatorConfig {
    pub fn new(method: Method, transform: Transform) -> Self {
        EstimatorConfig { method, transform }
    }

    pub fn validate(&self, n: usize, ncols: usize) -> Result<()> {
        match self.method {
            Method::Pcr { c, m } | Method::Pls { c, m } => components::check_counts(c, m, n, ncols),
            Method::Net { alpha, lambda } => {
                if !(0.0..=1.0).contains(&alpha) {
                    return Err(Error::InvalidConfig(format!("alpha = {alpha} must lie in [0, 1]")));
                }
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidConfig(format!("lambda = {lambda} must be finite and >= 0")));
                }
                Ok(())
            }
        }
    }
}

/// Same configuration fitted on raw voxels.
pub fn voxel_counterpart(config: &EstimatorConfig) -> EstimatorConfig {
    EstimatorConfig {
        method: config.method,
        transform: Transform::Identity,
    }
}

/// Scalar response, covariates (first column all ones) and image predictors.
#[derive(Debug, Clone)]
pub struct Dataset<F> {
    pub y: Array1<F>,
    pub t: Array2<F>,
    pub images: ImageStack<F>,
    pub family: Family,
}

impl<F: Real> Dataset<F> {
    pub fn new(y: Array1<F>, t: Array2<F>, images: ImageStack<F>, family: Family) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::ShapeMismatch(format!("need at least 2 observations, got {n}")));
        }
        if t.nrows() != n || images.n() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} responses, {} covariate rows, {} images",
                t.nrows(),
                images.n()
            )));
        }
        if t.ncols() == 0 || t.column(0).iter().any(|&v| v != F::one()) {
            return Err(Error::InvalidConfig("first covariate column must be the constant 1".into()));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("covariates contain non-finite values".into()));
        }
        family.check_response(y.view())?;
        Ok(Dataset { y, t, images, family })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Dataset {
            y: self.y.select(Axis(0), rows),
            t: self.t.select(Axis(0), rows),
            images: self.images.select_rows(rows),
            family: self.family,
        }
    }

    /// Same data with the images replaced.
    pub fn with_images(&self, images: ImageStack<F>) -> Result<Self> {
        Dataset::new(self.y.clone(), self.t.clone(), images, self.family)
    }

    /// Same data with the response replaced.
    pub fn with_response(&self, y: Array1<F>) -> Result<Self> {
        Dataset::new(y, self.t.clone(), self.images.clone(), self.family)
    }
}

/// How coefficient-domain columns map back to the image grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Basis {
    Wavelet {
        spec: WaveletSpec,
        layout: CoeffLayout,
        padding: Padding,
    },
    Identity {
        shape: Vec<usize>,
    },
}

impl Basis {
    pub fn grid_shape(&self) -> &[usize] {
        match self {
            Basis::Wavelet { padding, .. } => &padding.original_shape,
            Basis::Identity { shape } => shape,
        }
    }

    /// Number of coefficient-domain columns.
    pub fn len(&self) -> usize {
        match self {
            Basis::Wavelet { layout, .. } => layout.len(),
            Basis::Identity { shape } => shape.iter().product(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks internal consistency (used after deserialisation).
    pub fn validate(&self) -> Result<()> {
        match self {
            Basis::Wavelet { spec, layout, padding } => {
                spec.check()?;
                layout.validate()?;
                if layout.j0 != spec.j0 || layout.padded_shape != padding.padded_shape() {
                    return Err(Error::LayoutMismatch(format!(
                        "layout {:?} (j0 = {}) does not match padding {:?} and spec j0 = {}",
                        layout.padded_shape,
                        layout.j0,
                        padding.padded_shape(),
                        spec.j0
                    )));
                }
                if padding != &Padding::for_shape(&padding.original_shape) {
                    return Err(Error::LayoutMismatch("padding is not the canonical one for its shape".into()));
                }
                Ok(())
            }
            Basis::Identity { shape } => {
                if shape.is_empty() || shape.contains(&0) {
                    return Err(Error::LayoutMismatch(format!("invalid grid {shape:?}")));
                }
                Ok(())
            }
        }
    }

    /// Image-domain coefficient map of a coefficient vector.
    pub fn image<F: Real>(&self, coeffs: ArrayView1<F>) -> Result<ArrayD<F>> {
        if coeffs.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficients for a basis of {}",
                coeffs.len(),
                self.len()
            )));
        }
        match self {
            Basis::Wavelet { spec, layout, padding } => reconstruct_image(coeffs, layout, padding, spec),
            Basis::Identity { shape } => Ok(coeffs
                .to_owned()
                .into_shape_with_order(IxDyn(shape))
                .expect("length checked")),
        }
    }

    /// Coefficient-domain design of a stack on this basis's grid.
    pub fn design<F: Real>(&self, stack: &ImageStack<F>) -> Result<Array2<F>> {
        if stack.shape() != self.grid_shape() {
            return Err(Error::ShapeMismatch(format!(
                "images have grid {:?} but the fit expects {:?}",
                stack.shape(),
                self.grid_shape()
            )));
        }
        match self {
            Basis::Wavelet { spec, .. } => Ok(dwt_stack(stack, spec)?.matrix),
            Basis::Identity { .. } => Ok(stack.masked_data()),
        }
    }
}

/// Coefficient-domain design matrix with its basis.
#[derive(Debug, Clone)]
pub struct Design<F> {
    pub matrix: Array2<F>,
    pub basis: Basis,
}

impl<F: Real> Design<F> {
    pub fn from_stack(stack: &ImageStack<F>, transform: &Transform) -> Result<Self> {
        match transform {
            Transform::Wavelet(spec) => {
                let sc = dwt_stack(stack, spec)?;
                Ok(Design {
                    matrix: sc.matrix,
                    basis: Basis::Wavelet {
                        spec: *spec,
                        layout: sc.layout,
                        padding: sc.padding,
                    },
                })
            }
            Transform::Identity => Ok(Design {
                matrix: stack.masked_data(),
                basis: Basis::Identity {
                    shape: stack.shape().to_vec(),
                },
            }),
        }
    }
}

/// Coefficient-domain estimate before mapping back to the image grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefFit<F> {
    pub delta: Array1<F>,
    /// Dense coefficient vector, zero off `selected` (or off the support for the net).
    pub beta_tilde: Array1<F>,
    pub selected: Vec<usize>,
    /// Loadings on the selected columns (`c x m`), for PCR and PLS.
    pub components: Option<Array2<F>>,
    pub column_centers: Array1<F>,
    pub converged: bool,
}

impl<F: Real> CoefFit<F> {
    /// `(X~ - 1 centers') beta~` restricted to the nonzero coefficients.
    pub fn image_score(&self, x: ArrayView2<F>) -> Result<Array1<F>> {
        if x.ncols() != self.beta_tilde.len() {
            return Err(Error::ShapeMismatch(format!(
                "design has {} columns, fit has {}",
                x.ncols(),
                self.beta_tilde.len()
            )));
        }
        let support: Vec<usize> = (0..self.beta_tilde.len())
            .filter(|&j| self.beta_tilde[j] != F::zero())
            .collect();
        let mut out = Array1::zeros(x.nrows());
        let offset = support
            .iter()
            .fold(F::zero(), |a, &j| a + self.column_centers[j] * self.beta_tilde[j]);
        for (o, row) in out.iter_mut().zip(x.outer_iter()) {
            *o = support.iter().fold(F::zero(), |a, &j| a + row[j] * self.beta_tilde[j]) - offset;
        }
        Ok(out)
    }

    pub fn linear_predictor(&self, x: ArrayView2<F>, t: ArrayView2<F>) -> Result<Array1<F>> {
        if t.ncols() != self.delta.len() || t.nrows() != x.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "covariates are {}x{}, fit expects {} columns and {} rows",
                t.nrows(),
                t.ncols(),
                self.delta.len(),
                x.nrows()
            )));
        }
        Ok(t.dot(&self.delta) + self.image_score(x)?)
    }

    pub fn predict(&self, x: ArrayView2<F>, t: ArrayView2<F>, family: Family) -> Result<Array1<F>> {
        Ok(self.linear_predictor(x, t)?.mapv(|e| family.mean(e)))
    }
}

/// Fits `[T | X_sel L]` and maps the score coefficients back through the loadings `L`.
pub(crate) fn glm_on_scores<F: Real>(
    xs: &Array2<F>,
    loadings: Array2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    selected: Vec<usize>,
    centers: Array1<F>,
) -> Result<CoefFit<F>> {
    let n = xs.nrows();
    let q = t.ncols();
    let m = loadings.ncols();
    if t.nrows() != n {
        return Err(Error::ShapeMismatch(format!("{n} design rows but {} covariate rows", t.nrows())));
    }
    let scores = xs.dot(&loadings);
    let mut full = Array2::zeros((n, q + m));
    full.slice_mut(ndarray::s![.., ..q]).assign(&t);
    full.slice_mut(ndarray::s![.., q..]).assign(&scores);
    let glm = fit_glm(full.view(), y, family)?;
    let gamma = glm.coefficients.slice(ndarray::s![q..]).to_owned();
    let local = loadings.dot(&gamma);
    let mut beta = Array1::zeros(centers.len());
    for (&j, &b) in selected.iter().zip(local.iter()) {
        beta[j] = b;
    }
    Ok(CoefFit {
        delta: glm.coefficients.slice(ndarray::s![..q]).to_owned(),
        beta_tilde: beta,
        selected,
        components: Some(loadings),
        column_centers: centers,
        converged: glm.converged,
    })
}

/// Fits any method on a coefficient-domain design.
pub fn fit_design<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    method: &Method,
) -> Result<CoefFit<F>> {
    match *method {
        Method::Pcr { c, m } => fit_pcr_design(x, t, y, family, c, m),
        Method::Pls { c, m } => fit_pls_design(x, t, y, family, c, m),
        Method::Net { alpha, lambda } => fit_net_design(x, t, y, family, alpha, lambda, &NetOptions::default()),
    }
}

/// A fitted scalar-on-image regression.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarOnImageFit<F> {
    pub delta: Array1<F>,
    pub beta_tilde: Array1<F>,
    pub selected: Vec<usize>,
    pub components: Option<Array2<F>>,
    pub column_centers: Array1<F>,
    /// Coefficient image on the original grid.
    pub beta_image: ArrayD<F>,
    pub config: EstimatorConfig,
    pub family: Family,
    pub basis: Basis,
    pub converged: bool,
}

impl<F: Real> ScalarOnImageFit<F> {
    pub fn from_coef(coef: CoefFit<F>, basis: Basis, config: EstimatorConfig, family: Family) -> Result<Self> {
        let beta_image = basis.image(coef.beta_tilde.view())?;
        Ok(ScalarOnImageFit {
            delta: coef.delta,
            beta_tilde: coef.beta_tilde,
            selected: coef.selected,
            components: coef.components,
            column_centers: coef.column_centers,
            beta_image,
            config,
            family,
            basis,
            converged: coef.converged,
        })
    }

    fn coef_view(&self) -> CoefFit<F> {
        CoefFit {
            delta: self.delta.clone(),
            beta_tilde: self.beta_tilde.clone(),
            selected: Vec::new(),
            components: None,
            column_centers: self.column_centers.clone(),
            converged: self.converged,
        }
    }

    /// `x~_i' beta~` relative to the training centres, without the covariate part.
    pub fn image_score(&self, images: &ImageStack<F>) -> Result<Array1<F>> {
        let x = self.basis.design(images)?;
        self.coef_view().image_score(x.view())
    }

    pub fn linear_predictor(&self, t: ArrayView2<F>, images: &ImageStack<F>) -> Result<Array1<F>> {
        let x = self.basis.design(images)?;
        self.coef_view().linear_predictor(x.view(), t)
    }

    /// Predicted means `g^{-1}(T delta + (X~ - centers) beta~)` for new data.
    pub fn predict(&self, t: ArrayView2<F>, images: &ImageStack<F>) -> Result<Array1<F>> {
        Ok(self.linear_predictor(t, images)?.mapv(|e| self.family.mean(e)))
    }

    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta_tilde.len())
            .filter(|&j| self.beta_tilde[j] != F::zero())
            .collect()
    }
}

/// Fits the configured estimator to a dataset.
pub fn fit<F: Real>(data: &Dataset<F>, config: &EstimatorConfig) -> Result<ScalarOnImageFit<F>> {
    let design = Design::from_stack(&data.images, &config.transform)?;
    config.validate(data.n(), design.matrix.ncols())?;
    let coef = fit_design(design.matrix.view(), data.t.view(), data.y.view(), data.family, &config.method)?;
    ScalarOnImageFit::from_coef(coef, design.basis, *config, data.family)
}

fn fit_checked<F: Real>(data: &Dataset<F>, config: &EstimatorConfig, want: &str) -> Result<ScalarOnImageFit<F>> {
    if config.method.name() != want {
        return Err(Error::InvalidConfig(format!(
            "expected a {want} configuration, got {}",
            config.method.name()
        )));
    }
    fit(data, config)
}

pub fn fit_pcr<F: Real>(data: &Dataset<F>, config: &EstimatorConfig) -> Result<ScalarOnImageFit<F>> {
    fit_checked(data, config, "pcr")
}

pub fn fit_pls<F: Real>(data: &Dataset<F>, config: &EstimatorConfig) -> Result<ScalarOnImageFit<F>> {
    fit_checked(data, config, "pls")
}

pub fn fit_net<F: Real>(data: &Dataset<F>, config: &EstimatorConfig) -> Result<ScalarOnImageFit<F>> {
    fit_checked(data, config, "net")
}

#[cfg(test)]
mod tests;
