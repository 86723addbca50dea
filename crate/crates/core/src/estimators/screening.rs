//! Column centring and the variance / covariance screens.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::column_means;
use crate::Real;

/// Subtracts column means; returns the centred matrix and the means.
pub fn center_columns<F: Real>(x: ArrayView2<F>) -> (Array2<F>, Array1<F>) {
    let means = column_means(x);
    let mut out = x.to_owned();
    for mut row in out.outer_iter_mut() {
        row -= &means;
    }
    (out, means)
}

/// Sample variances (`1/(n-1)`) of the columns of a centred matrix.
pub fn column_variances<F: Real>(xc: ArrayView2<F>) -> Array1<F> {
    let denom = F::from_usize_lossy(xc.nrows().saturating_sub(1).max(1));
    xc.map_axis(Axis(0), |col| col.iter().fold(F::zero(), |a, &v| a + v * v) / denom)
}

/// Sample covariances (`1/(n-1)`) of each centred column with `y`.
pub fn column_covariances<F: Real>(xc: ArrayView2<F>, y: ArrayView1<F>) -> Array1<F> {
    let n = y.len();
    let ybar = y.sum() / F::from_usize_lossy(n.max(1));
    let yc = y.mapv(|v| v - ybar);
    let denom = F::from_usize_lossy(n.saturating_sub(1).max(1));
    xc.t().dot(&yc).mapv(|v| v / denom)
}

/// Indices of the `c` largest scores, ties to the lower index, returned in increasing order.
pub fn top_indices<F: Real>(scores: ArrayView1<F>, c: usize) -> Result<Vec<usize>> {
    let n = scores.len();
    if c == 0 || c > n {
        return Err(Error::InvalidConfig(format!("cannot retain {c} of {n} columns")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(c);
    order.sort_unstable();
    Ok(order)
}

/// The `c` columns of largest sample variance.
pub fn select_by_variance<F: Real>(xc: ArrayView2<F>, c: usize) -> Result<Vec<usize>> {
    top_indices(column_variances(xc).view(), c)
}

/// The `c` columns of largest absolute sample covariance with `y`.
pub fn select_by_covariance<F: Real>(xc: ArrayView2<F>, y: ArrayView1<F>, c: usize) -> Result<Vec<usize>> {
    if y.len() != xc.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} responses",
            xc.nrows(),
            y.len()
        )));
    }
    let cov = column_covariances(xc, y).mapv(|v| v.abs());
    top_indices(cov.view(), c)
}
