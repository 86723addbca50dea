//! Files: binary arrays, dataset bundles, persisted fits and result tables.

mod array;
mod bundle;
mod fit;

use std::path::Path;

pub use array::{load_array, read_array, save_array, write_array, ARRAY_VERSION, DTYPE_F64, MAGIC};
pub use bundle::{
    parse_cell, read_bundle, read_manifest, write_bundle, Bundle, Manifest, BUNDLE_VERSION, INTERCEPT_NAME,
    MANIFEST_FILE,
};
pub use fit::{load_fit, persist_fit, FitFile, SparseVector, FIT_VERSION};

use crate::error::{Error, Result};
use crate::inference::{ConfounderReport, PermTestResult};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), "csv", format!("{other:?}")),
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// One row per permutation: index, null statistic, selected configuration.
pub fn write_perm_csv(path: &Path, r: &PermTestResult) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["permutation", "statistic", "method", "c", "m", "alpha", "lambda"])?;
    for (b, (s, cfg)) in r.null_stats.iter().zip(&r.null_best).enumerate() {
        let (c, m, alpha, lambda) = cfg.method.parameters();
        w.write_record([
            b.to_string(),
            num(*s),
            cfg.method.name().to_string(),
            c.map(|v| v.to_string()).unwrap_or_default(),
            m.map(|v| v.to_string()).unwrap_or_default(),
            alpha.map(num).unwrap_or_default(),
            lambda.map(num).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Long table with one row per statistic: `section, covariate, estimate, lower, upper, p_value`.
pub fn write_confounder_csv(path: &Path, r: &ConfounderReport) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["section", "covariate", "estimate", "lower", "upper", "p_value"])?;
    for e in &r.scalar_model {
        w.write_record(["scalar_model", &e.name, &num(e.estimate), &num(e.lower), &num(e.upper), &num(e.p_value)])?;
    }
    for c in &r.image_score_correlations {
        let (est, lo, hi, p) = match c.correlation {
            Some(k) => (num(k.r), num(k.lower), num(k.upper), num(k.p_value)),
            None => Default::default(),
        };
        w.write_record(["image_score_correlation", &c.name, &est, &lo, &hi, &p])?;
    }
    for o in &r.local_overlap {
        w.write_record(["local_overlap", &o.name, &o.fraction.map(num).unwrap_or_default(), "", "", ""])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
