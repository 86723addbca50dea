//! Dataset bundles: a directory with `manifest.json`, a covariate CSV and
//! an image array file whose first axis indexes subjects.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, Axis, IxDyn};
use serde::{Deserialize, Serialize};

use super::array::{load_array, save_array};
use crate::dwt::ImageStack;
use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::glm::Family;

pub const BUNDLE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const INTERCEPT_NAME: &str = "(intercept)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n: usize,
    pub image_shape: Vec<usize>,
    pub family: Family,
    /// Array file of shape `[n, image_shape...]`.
    pub images: String,
    pub covariates: String,
    /// CSV column holding the response.
    pub response: String,
    /// CSV columns used as scalar covariates, in order.
    #[serde(default)]
    pub covariate_columns: Vec<String>,
    /// Optional array file of the grid shape; nonzero marks voxels inside the mask.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub manifest: Manifest,
    pub dataset: Dataset<f64>,
    /// One name per column of `T`, starting with the intercept.
    pub covariate_names: Vec<String>,
    pub warnings: Vec<String>,
}

/// Numeric value of a CSV cell: decimal numbers, or `true/false`, `yes/no`,
/// `t/f`, `y/n` (any case) as 1/0.
pub fn parse_cell(cell: &str) -> Option<f64> {
    let s = cell.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "t" | "y" => Some(1.0),
        "false" | "no" | "f" | "n" => Some(0.0),
        _ => None,
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(MANIFEST_FILE, "manifest", e.to_string()))?;
    if m.format_version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch {
            found: m.format_version,
            expected: BUNDLE_VERSION,
        });
    }
    Ok(m)
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let manifest = read_manifest(dir)?;
    let images = load_array(&dir.join(&manifest.images))?;
    let ifile = manifest.images.as_str();
    if images.ndim() != manifest.image_shape.len() + 1 || images.shape()[1..] != manifest.image_shape[..] {
        return Err(Error::format(
            ifile,
            "shape",
            format!(
                "array shape {:?} does not match [n, {:?}] from {MANIFEST_FILE}",
                images.shape(),
                manifest.image_shape
            ),
        ));
    }
    let n_images = images.shape()[0];
    if n_images != manifest.n {
        return Err(Error::format(
            ifile,
            "n",
            format!("{n_images} images but {MANIFEST_FILE} declares n = {}", manifest.n),
        ));
    }

    let cfile = manifest.covariates.as_str();
    let cpath = dir.join(cfile);
    let mut reader = csv::Reader::from_path(&cpath).map_err(|e| Error::format(cfile, "csv", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(cfile, "header", e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::format(cfile, name, "column not found"))
    };
    let yi = column(&manifest.response)?;
    let ci: Vec<usize> = manifest
        .covariate_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); ci.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::format(cfile, "row", format!("row {}: {e}", row + 1)))?;
        let get = |idx: usize, name: &str| -> Result<f64> {
            let cell = record.get(idx).unwrap_or("");
            if cell.trim().is_empty() {
                return Err(Error::format(cfile, name, format!("row {}: missing value", row + 1)));
            }
            parse_cell(cell)
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::format(cfile, name, format!("row {}: non-numeric value `{cell}`", row + 1)))
        };
        y.push(get(yi, &manifest.response)?);
        for (k, &idx) in ci.iter().enumerate() {
            cols[k].push(get(idx, &manifest.covariate_columns[k])?);
        }
    }
    if y.len() != n_images {
        return Err(Error::format(
            cfile,
            "rows",
            format!("{} rows in {cfile} but {n_images} images in {ifile}", y.len()),
        ));
    }

    let n = y.len();
    let mut names = Vec::new();
    let mut warnings = Vec::new();
    let first_is_intercept = cols.first().is_some_and(|c| c.iter().all(|&v| v == 1.0));
    let q = if first_is_intercept { cols.len() } else { cols.len() + 1 };
    let mut t = Array2::ones((n, q));
    let offset = if first_is_intercept { 0 } else { 1 };
    if !first_is_intercept {
        names.push(INTERCEPT_NAME.to_string());
    }
    for (k, c) in cols.iter().enumerate() {
        t.column_mut(k + offset).assign(&Array1::from_vec(c.clone()));
        names.push(manifest.covariate_columns[k].clone());
        if k + offset > 0 && c.iter().all(|&v| v == c[0]) {
            let msg = format!("{cfile}: covariate `{}` is constant", manifest.covariate_columns[k]);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let voxels: usize = manifest.image_shape.iter().product();
    let data = images
        .into_shape_with_order((n, voxels))
        .map_err(|e| Error::format(ifile, "shape", e.to_string()))?;
    let mut stack = ImageStack::new(data, manifest.image_shape.clone())?;
    if let Some(mfile) = &manifest.mask {
        let mask = load_array(&dir.join(mfile))?;
        if mask.shape() != manifest.image_shape.as_slice() {
            return Err(Error::format(
                mfile.as_str(),
                "shape",
                format!("mask shape {:?} differs from image shape {:?}", mask.shape(), manifest.image_shape),
            ));
        }
        stack = stack.with_mask(mask.iter().map(|&v| v != 0.0).collect())?;
    }
    let dataset = Dataset::new(Array1::from_vec(y), t, stack, manifest.family)?;
    Ok(Bundle {
        manifest,
        dataset,
        covariate_names: names,
        warnings,
    })
}

/// Writes `dataset` as a bundle. `names` labels the columns of `T` after the
/// intercept; the intercept itself is not written.
pub fn write_bundle(
    dir: &Path,
    dataset: &Dataset<f64>,
    names: &[String],
    truth: Option<serde_json::Value>,
) -> Result<Manifest> {
    let q = dataset.t.ncols();
    if names.len() + 1 != q {
        return Err(Error::ShapeMismatch(format!("{} names for {} covariates after the intercept", names.len(), q - 1)));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = dataset.images.shape().to_vec();
    let mut full = vec![dataset.n()];
    full.extend_from_slice(&shape);
    let images = ArrayD::from_shape_vec(IxDyn(&full), dataset.images.data().iter().copied().collect())
        .expect("stack is n x voxels");
    save_array(&dir.join("images.arr"), &images)?;
    let mask = match dataset.images.mask() {
        Some(m) => {
            let a = ArrayD::from_shape_vec(IxDyn(&shape), m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                .expect("mask has one entry per voxel");
            save_array(&dir.join("mask.arr"), &a)?;
            Some("mask.arr".to_string())
        }
        None => None,
    };
    let cpath = dir.join("covariates.csv");
    let mut w = csv::Writer::from_path(&cpath).map_err(|e| Error::format("covariates.csv", "csv", e.to_string()))?;
    let mut header = vec!["y".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (i, row) in dataset.t.axis_iter(Axis(0)).enumerate() {
        let mut rec = vec![format!("{}", dataset.y[i])];
        rec.extend(row.iter().skip(1).map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&cpath, e))?;
    let manifest = Manifest {
        format_version: BUNDLE_VERSION,
        n: dataset.n(),
        image_shape: shape,
        family: dataset.family,
        images: "images.arr".into(),
        covariates: "covariates.csv".into(),
        response: "y".into(),
        covariate_columns: names.to_vec(),
        mask,
        truth,
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize, seed: u64) -> Dataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 12), |_| rng.random::<f64>() - 0.5);
        let mut t = Array2::ones((n, 3));
        for i in 0..n {
            t[[i, 1]] = rng.random::<f64>() * 80.0;
            t[[i, 2]] = if rng.random::<bool>() { 1.0 } else { 0.0 };
        }
        let y = Array1::from_iter((0..n).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }));
        Dataset::new(y, t, ImageStack::new(x, vec![3, 4]).unwrap(), Family::BinomialLogit).unwrap()
    }

    fn names() -> Vec<String> {
        vec!["age".into(), "sex".into()]
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = dataset(10, 1);
        let truth = serde_json::json!({"seed": 3});
        write_bundle(dir.path(), &d, &names(), Some(truth.clone())).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.dataset.y, d.y);
        assert_eq!(b.dataset.t, d.t);
        assert_eq!(b.dataset.images.data(), d.images.data());
        assert_eq!(b.dataset.images.shape(), d.images.shape());
        assert_eq!(b.dataset.family, d.family);
        assert_eq!(b.manifest.truth, Some(truth));
        assert_eq!(b.covariate_names, vec!["(intercept)", "age", "sex"]);
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = dataset(6, 2);
        let mask: Vec<bool> = (0..12).map(|i| i % 3 != 0).collect();
        let d = d.with_images(d.images.clone().with_mask(mask.clone()).unwrap()).unwrap();
        write_bundle(dir.path(), &d, &names(), None).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.dataset.images.mask(), Some(mask.as_slice()));
    }

    #[test]
    fn row_count_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &dataset(10, 3), &names(), None).unwrap();
        let short = dataset(9, 3);
        let images = ArrayD::from_shape_vec(IxDyn(&[9, 3, 4]), short.images.data().iter().copied().collect()).unwrap();
        save_array(&dir.path().join("images.arr"), &images).unwrap();
        let mut m = read_manifest(dir.path()).unwrap();
        m.n = 9;
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let err = read_bundle(dir.path()).unwrap_err().to_string();
        assert!(err.contains("covariates.csv") && err.contains("10 rows") && err.contains("9 images"), "{err}");
    }

    #[test]
    fn encodings_constants_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &dataset(5, 4), &names(), None).unwrap();
        let csv = "y,age,sex,site\nyes,30,male,1\nno,31,female,1\nTRUE,32,male,1\nfalse,33,female,1\n1,34,male,1\n";
        fs::write(dir.path().join("covariates.csv"), csv).unwrap();
        let mut m = read_manifest(dir.path()).unwrap();
        m.covariate_columns = vec!["age".into(), "site".into()];
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.dataset.y.to_vec(), vec![1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].contains("site"));

        m.covariate_columns = vec!["sex".into()];
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        match read_bundle(dir.path()) {
            Err(Error::Format { file, field, message }) => {
                assert_eq!(file, "covariates.csv");
                assert_eq!(field, "sex");
                assert!(message.contains("male"));
            }
            other => panic!("{other:?}"),
        }
        m.covariate_columns = vec![];
        m.response = "outcome".into();
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(read_bundle(dir.path()), Err(Error::Format { field, .. }) if field == "outcome"));
    }

    #[test]
    fn explicit_intercept_column_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &dataset(4, 5), &names(), None).unwrap();
        let csv = "y,one,age\n1,1,2\n0,1,3\n1,1,5\n0,1,7\n";
        fs::write(dir.path().join("covariates.csv"), csv).unwrap();
        let mut m = read_manifest(dir.path()).unwrap();
        m.covariate_columns = vec!["one".into(), "age".into()];
        fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let b = read_bundle(dir.path()).unwrap();
        assert_eq!(b.dataset.t.ncols(), 2);
        assert_eq!(b.covariate_names, vec!["one", "age"]);
    }
}
