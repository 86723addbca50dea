//! JSON persistence of fitted models. Coefficients are stored sparsely and
//! the file carries a SHA-256 digest of its own content.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{Basis, EstimatorConfig, ScalarOnImageFit};
use crate::glm::Family;

pub const FIT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub len: usize,
    pub index: Vec<usize>,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub format_version: u32,
    pub config: EstimatorConfig,
    pub family: Family,
    pub basis: Basis,
    pub delta: Vec<f64>,
    /// Nonzero coefficient-domain coefficients.
    pub beta_tilde: SparseVector,
    /// Training column means on the support of `beta_tilde`.
    pub column_centers: Vec<f64>,
    pub selected: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Array2<f64>>,
    pub converged: bool,
    /// Free-form run record (resolved configuration, seed, inputs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
    /// Hex SHA-256 of the file serialised with this field empty.
    #[serde(default)]
    pub sha256: String,
}

impl FitFile {
    pub fn from_fit(fit: &ScalarOnImageFit<f64>, run: Option<serde_json::Value>) -> Result<Self> {
        let support = fit.support();
        let mut f = FitFile {
            format_version: FIT_VERSION,
            config: fit.config,
            family: fit.family,
            basis: fit.basis.clone(),
            delta: fit.delta.to_vec(),
            beta_tilde: SparseVector {
                len: fit.beta_tilde.len(),
                value: support.iter().map(|&j| fit.beta_tilde[j]).collect(),
                index: support.clone(),
            },
            column_centers: support.iter().map(|&j| fit.column_centers[j]).collect(),
            selected: fit.selected.clone(),
            components: fit.components.clone(),
            converged: fit.converged,
            run,
            sha256: String::new(),
        };
        f.sha256 = f.digest()?;
        Ok(f)
    }

    pub fn digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.sha256.clear();
        let bytes = serde_json::to_vec(&copy)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// Validates the file and rebuilds the fit.
    pub fn into_fit(self, file: &str) -> Result<ScalarOnImageFit<f64>> {
        if self.format_version != FIT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: FIT_VERSION,
            });
        }
        if self.digest()? != self.sha256 {
            return Err(Error::format(file, "sha256", "content does not match its digest"));
        }
        self.basis
            .validate()
            .map_err(|e| Error::format(file, "basis", e.to_string()))?;
        let len = self.basis.len();
        let b = &self.beta_tilde;
        if b.len != len {
            return Err(Error::format(file, "beta_tilde.len", format!("{} coefficients for a basis of {len}", b.len)));
        }
        if b.index.len() != b.value.len() || self.column_centers.len() != b.index.len() {
            return Err(Error::format(file, "beta_tilde", "index, value and centre lengths differ"));
        }
        if b.index.windows(2).any(|w| w[0] >= w[1]) || b.index.last().is_some_and(|&i| i >= len) {
            return Err(Error::format(file, "beta_tilde.index", "indices must be increasing and in range"));
        }
        if self.delta.is_empty() {
            return Err(Error::format(file, "delta", "at least the intercept is required"));
        }
        let mut beta = Array1::zeros(len);
        let mut centers = Array1::zeros(len);
        for (k, &j) in b.index.iter().enumerate() {
            beta[j] = b.value[k];
            centers[j] = self.column_centers[k];
        }
        let beta_image = self.basis.image(beta.view())?;
        Ok(ScalarOnImageFit {
            delta: Array1::from_vec(self.delta),
            beta_tilde: beta,
            selected: self.selected,
            components: self.components,
            column_centers: centers,
            beta_image,
            config: self.config,
            family: self.family,
            basis: self.basis,
            converged: self.converged,
        })
    }
}

pub fn persist_fit(path: &Path, fit: &ScalarOnImageFit<f64>, run: Option<serde_json::Value>) -> Result<FitFile> {
    let f = FitFile::from_fit(fit, run)?;
    fs::write(path, serde_json::to_string_pretty(&f)? + "\n").map_err(|e| Error::io(path, e))?;
    Ok(f)
}

pub fn load_fit(path: &Path) -> Result<ScalarOnImageFit<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let f: FitFile = serde_json::from_str(&text).map_err(|e| Error::format(&name, "json", e.to_string()))?;
    f.into_fit(&name)
}
