//! Sparse principal component and sparse partial least squares regression.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::screening::{center_columns, select_by_covariance, select_by_variance};
use super::{glm_on_scores, CoefFit};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::linalg::thin_svd;
use crate::Real;

pub(crate) fn check_counts(c: usize, m: usize, n: usize, ncols: usize) -> Result<()> {
    if c == 0 || c > ncols {
        return Err(Error::InvalidConfig(format!("c = {c} must lie in 1..={ncols}")));
    }
    let mmax = c.min(n.saturating_sub(1));
    if m == 0 || m > mmax {
        return Err(Error::InvalidConfig(format!(
            "m = {m} must lie in 1..={mmax} (min of c and n - 1)"
        )));
    }
    Ok(())
}

/// Sparse PCR on a coefficient-domain design: variance screen, SVD of the
/// screened centred columns, GLM on `[T | X* V_m]`.
pub fn fit_pcr_design<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    c: usize,
    m: usize,
) -> Result<CoefFit<F>> {
    check_counts(c, m, x.nrows(), x.ncols())?;
    let (xc, centers) = center_columns(x);
    let selected = select_by_variance(xc.view(), c)?;
    let xs = xc.select(Axis(1), &selected);
    let svd = thin_svd(xs.view());
    let rank = svd.rank();
    if m > rank {
        return Err(Error::RankExceeded { requested: m, rank });
    }
    let v = svd.v.slice(s![.., ..m]).to_owned();
    glm_on_scores(&xs, v, t, y, family, selected, centers)
}

/// Loading matrix whose columns are the successive unit-norm directions
/// maximising `|cov(y, X r)|` subject to `r' X'X r_k = 0` for earlier `k`.
///
/// Each direction is the projection of `X'y` onto the orthogonal complement
/// of the previous loadings `X'X r_k`, normalised.
pub fn pls_components<F: Real>(xc: ArrayView2<F>, y: ArrayView1<F>, m: usize) -> Result<Array2<F>> {
    let (n, p) = xc.dim();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} rows but {} responses", y.len())));
    }
    let rank = thin_svd(xc).rank();
    if m > rank {
        return Err(Error::RankExceeded { requested: m, rank });
    }
    let ybar = y.sum() / F::from_usize_lossy(n);
    let s0 = xc.t().dot(&y.mapv(|v| v - ybar));
    let s_norm = norm(s0.view());
    let mut r = Array2::zeros((p, m));
    // orthonormal basis of the loadings X'X r_k
    let mut basis: Vec<Array1<F>> = Vec::with_capacity(m);
    let tiny = F::epsilon() * F::lit(100.0);
    for j in 0..m {
        let mut dir = s0.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&dir);
                dir.scaled_add(-c, b);
            }
        }
        let len = norm(dir.view());
        if !(s_norm > F::zero()) || len <= tiny * s_norm {
            return Err(Error::DegenerateDirection { component: j + 1 });
        }
        dir.mapv_inplace(|v| v / len);
        let mut load = xc.t().dot(&xc.dot(&dir));
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&load);
                load.scaled_add(-c, b);
            }
        }
        let ln = norm(load.view());
        if ln > F::zero() {
            load.mapv_inplace(|v| v / ln);
            basis.push(load);
        }
        r.column_mut(j).assign(&dir);
    }
    Ok(r)
}

/// Sparse PLS: covariance screen, linear PLS directions, GLM on `[T | X† R_m]`.
pub fn fit_pls_design<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    c: usize,
    m: usize,
) -> Result<CoefFit<F>> {
    check_counts(c, m, x.nrows(), x.ncols())?;
    let (xc, centers) = center_columns(x);
    let selected = select_by_covariance(xc.view(), y, c)?;
    let xs = xc.select(Axis(1), &selected);
    let r = pls_components(xs.view(), y, m)?;
    glm_on_scores(&xs, r, t, y, family, selected, centers)
}

fn norm<F: Real>(v: ArrayView1<F>) -> F {
    v.dot(&v).sqrt()
}
