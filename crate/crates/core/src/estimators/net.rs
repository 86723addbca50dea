//! Naive elastic net by cyclic coordinate descent.
//!
//! For the Gaussian family the objective is
//!
//! ```text
//! (1/(2n)) ||y - T delta - Xc beta||^2 + lambda * (alpha ||beta||_1 + (1 - alpha) ||beta||_2^2)
//! ```
//!
//! with `Xc` the column-centred coefficient design. The binomial family
//! replaces the squared error by `deviance / (2n)` and is solved by an outer
//! IRLS loop around the same penalised least-squares solver. `T` is never
//! penalised: it is profiled out by projecting the (weighted) design and
//! working response onto the orthogonal complement of its column space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::screening::center_columns;
use super::CoefFit;
use crate::error::{Error, Result};
use crate::glm::{self, Family};
use crate::linalg::{self, Qr};
use crate::Real;

/// Penalty strength is divided by `max(alpha, ALPHA_FLOOR)` when computing `lambda_max`.
pub const ALPHA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetOptions {
    /// Coordinate descent stops once `max_j |change_j| * ||x_j|| / sqrt(n)` is below `tol * sd(y)`.
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_outer: usize,
}

impl Default for NetOptions {
    fn default() -> Self {
        NetOptions {
            tol: 1e-7,
            max_sweeps: 100_000,
            max_outer: 100,
        }
    }
}

fn check_alpha_lambda(alpha: f64, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidConfig(format!("alpha = {alpha} must lie in [0, 1]")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig(format!("lambda = {lambda} must be finite and >= 0")));
    }
    Ok(())
}

/// Centred design and covariate factorisation shared by every fit on a path.
struct Problem<'a, F> {
    /// Centred design, one column per row.
    xct: Array2<F>,
    /// Squares of `xct`, kept for weighted fits.
    xct_sq: Option<Array2<F>>,
    centers: Array1<F>,
    t: ArrayView2<'a, F>,
    y: ArrayView1<'a, F>,
    family: Family,
    null_delta: Array1<F>,
    null_eta: Array1<F>,
    null_deviance: F,
}

impl<'a, F: Real> Problem<'a, F> {
    fn new(x: ArrayView2<'a, F>, t: ArrayView2<'a, F>, y: ArrayView1<'a, F>, family: Family) -> Result<Self> {
        let n = x.nrows();
        if t.nrows() != n || y.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "design has {n} rows, covariates {}, responses {}",
                t.nrows(),
                y.len()
            )));
        }
        if t.ncols() >= n {
            return Err(Error::ShapeMismatch(format!(
                "{} covariates leave no residual degrees of freedom with {n} observations",
                t.ncols()
            )));
        }
        family.check_response(y)?;
        let null = glm::fit_glm(t, y, family)?;
        if null.rank_deficient {
            let qr = Qr::new(t, true);
            return Err(Error::RankDeficientCovariates {
                columns: qr.perm()[qr.rank()..].to_vec(),
            });
        }
        let (xc, centers) = center_columns(x);
        let xct = xc.reversed_axes().as_standard_layout().into_owned();
        let xct_sq = (family == Family::BinomialLogit).then(|| xct.mapv(|v| v * v));
        Ok(Problem {
            xct,
            xct_sq,
            centers,
            t,
            y,
            family,
            null_delta: null.coefficients,
            null_eta: null.linear_predictor,
            null_deviance: null.deviance,
        })
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn lambda_max(&self, alpha: f64) -> F {
        let mu = self.null_eta.mapv(|e| self.family.mean(e));
        let resid = &self.y - &mu;
        let grad = self.xct.dot(&resid);
        let gmax = grad.iter().fold(F::zero(), |a, &g| a.max(g.abs()));
        gmax / (F::from_usize_lossy(self.n()) * F::lit(alpha.max(ALPHA_FLOOR)))
    }

    /// Implicit `(I - P_{sw T}) diag(sw) Xc`.
    fn residualized(&self, sw: Option<&Array1<F>>) -> Residualized<'_, F> {
        let mut tw = self.t.to_owned();
        if let Some(sw) = sw {
            for (mut tr, &s) in tw.outer_iter_mut().zip(sw.iter()) {
                tr.mapv_inplace(|v| v * s);
            }
        }
        let qr = Qr::new(tw.view(), true);
        let q = qr.thin_q(self.t.ncols()).reversed_axes().as_standard_layout().into_owned();
        let inv_n = F::one() / F::from_usize_lossy(self.n());
        let (c, xsq, weights) = match sw {
            Some(sw) => {
                let qw = &q * sw;
                let c = self.xct.dot(&qw.t());
                let w2 = sw.mapv(|v| v * v);
                let raw = match &self.xct_sq {
                    Some(sq) => sq.dot(&w2),
                    None => self.xct.mapv(|v| v * v).dot(&w2),
                };
                let xsq = raw
                    .iter()
                    .zip(c.outer_iter())
                    .map(|(&s, cj)| ((s - cj.dot(&cj)) * inv_n).max(F::zero()))
                    .collect();
                (c, xsq, Some(Weights { sw: sw.clone(), w2, qw }))
            }
            None => {
                let c = self.xct.dot(&q.t());
                let xsq = self
                    .xct
                    .outer_iter()
                    .zip(c.outer_iter())
                    .map(|(x, cj)| ((x.dot(&x) - cj.dot(&cj)) * inv_n).max(F::zero()))
                    .collect();
                (c, xsq, None)
            }
        };
        Residualized {
            x: self.xct.view(),
            weights,
            c,
            q,
            xsq,
            qr,
        }
    }

    /// `Xc beta`, skipping zero coefficients.
    fn xb(&self, beta: &Array1<F>) -> Array1<F> {
        let mut out = Array1::zeros(self.n());
        for (j, &b) in beta.iter().enumerate() {
            if b != F::zero() {
                out.scaled_add(b, &self.xct.row(j));
            }
        }
        out
    }

    fn penalty(&self, beta: &Array1<F>, alpha: F, lambda: F) -> F {
        let (l1, l2) = beta
            .iter()
            .fold((F::zero(), F::zero()), |(a, b), &v| (a + v.abs(), b + v * v));
        lambda * (alpha * l1 + (F::one() - alpha) * l2)
    }

    fn eta(&self, delta: &Array1<F>, beta: &Array1<F>) -> Array1<F> {
        self.t.dot(delta) + self.xb(beta)
    }

    fn deviance(&self, eta: &Array1<F>) -> F {
        let mu = eta.mapv(|e| self.family.mean(e));
        glm::deviance(self.y, mu.view(), self.family).expect("clipped means")
    }

    fn gaussian(&self, rx: &Residualized<'_, F>, alpha: F, lambda: F, beta: &mut Array1<F>, opts: &NetOptions) -> (Array1<F>, bool) {
        let yr = rx.project_out(self.y.to_owned());
        let mut r = rx.residual(&yr, beta);
        let tol = F::lit(opts.tol) * scale(&yr);
        let ok = coordinate_descent(rx, &mut r, beta, lambda * alpha, F::lit(2.0) * lambda * (F::one() - alpha), tol, opts.max_sweeps);
        let delta = rx.qr.solve_least_squares((&self.y - &self.xb(beta)).view());
        (delta, ok)
    }

    fn binomial(&self, alpha: F, lambda: F, delta: &mut Array1<F>, beta: &mut Array1<F>, opts: &NetOptions) -> bool {
        let n = F::from_usize_lossy(self.n());
        let objective = |d: &Array1<F>, b: &Array1<F>| {
            self.deviance(&self.eta(d, b)) / (F::lit(2.0) * n) + self.penalty(b, alpha, lambda)
        };
        let mut obj = objective(delta, beta);
        let floor = F::lit(1e-5);
        for _ in 0..opts.max_outer {
            let eta = self.eta(delta, beta);
            let mu = eta.mapv(|e| self.family.mean(e));
            let w = mu.mapv(|m| (m * (F::one() - m)).max(floor));
            let sw = w.mapv(|v| v.sqrt());
            let z = Zip::from(&eta).and(self.y).and(&mu).and(&w).map_collect(|&e, &yi, &m, &wi| e + (yi - m) / wi);
            let zw = &z * &sw;
            let rx = self.residualized(Some(&sw));
            let yr = rx.project_out(zw);
            let mut new_beta = beta.clone();
            let mut r = rx.residual(&yr, &new_beta);
            let tol = F::lit(opts.tol) * scale(&yr);
            let inner_ok = coordinate_descent(&rx, &mut r, &mut new_beta, lambda * alpha, F::lit(2.0) * lambda * (F::one() - alpha), tol, opts.max_sweeps);
            let xb = self.xb(&new_beta);
            let mut new_delta = rx.qr.solve_least_squares(((&z - &xb) * &sw).view());
            let mut new_obj = objective(&new_delta, &new_beta);
            let mut halvings = 0;
            while new_obj > obj + F::lit(1e-12) * (F::one() + obj.abs()) && halvings < 30 {
                let half = F::lit(0.5);
                new_beta = (&new_beta + &*beta).mapv(|v| v * half);
                new_delta = (&new_delta + &*delta).mapv(|v| v * half);
                new_obj = objective(&new_delta, &new_beta);
                halvings += 1;
            }
            let change = (obj - new_obj).abs() / (new_obj.abs() + F::lit(0.1));
            *beta = new_beta;
            *delta = new_delta;
            obj = new_obj;
            if change < F::lit(1e-10) && inner_ok {
                return true;
            }
        }
        false
    }

    fn fit_one(&self, alpha: f64, lambda: f64, warm: Option<(&Array1<F>, &Array1<F>)>, gauss: Option<&Residualized<'_, F>>, opts: &NetOptions) -> CoefFit<F> {
        let a = F::lit(alpha);
        let l = F::lit(lambda);
        let (mut delta, mut beta) = match warm {
            Some((d, b)) => (d.clone(), b.clone()),
            None => (self.null_delta.clone(), Array1::zeros(self.xct.nrows())),
        };
        let converged = match self.family {
            Family::GaussianIdentity => {
                let (d, ok) = match gauss {
                    Some(rx) => self.gaussian(rx, a, l, &mut beta, opts),
                    None => self.gaussian(&self.residualized(None), a, l, &mut beta, opts),
                };
                delta = d;
                ok
            }
            Family::BinomialLogit => self.binomial(a, l, &mut delta, &mut beta, opts),
        };
        let selected = beta
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != F::zero())
            .map(|(j, _)| j)
            .collect();
        CoefFit {
            delta,
            beta_tilde: beta,
            selected,
            components: None,
            column_centers: self.centers.clone(),
            converged,
        }
    }
}

/// Design columns residualized on the (weighted) covariates, held implicitly:
/// column `j` is `sw * x_j - q' c_j`. Residuals are stored as `sw * r` and
/// are orthogonal to the rows of `q`.
struct Residualized<'a, F> {
    x: ArrayView2<'a, F>,
    weights: Option<Weights<F>>,
    /// Projections of the weighted columns on the basis, one row per column.
    c: Array2<F>,
    /// Orthonormal basis of the weighted covariate space, one vector per row.
    q: Array2<F>,
    /// Mean squares of the residualized columns.
    xsq: Vec<F>,
    qr: Qr<F>,
}

struct Weights<F> {
    sw: Array1<F>,
    w2: Array1<F>,
    /// `q` with each vector multiplied by `sw`.
    qw: Array2<F>,
}

impl<F: Real> Residualized<'_, F> {
    fn project_out(&self, mut v: Array1<F>) -> Array1<F> {
        for qk in self.q.outer_iter() {
            let c = qk.dot(&v);
            v.scaled_add(-c, &qk);
        }
        v
    }

    /// Column `j` dotted with the residual whose stored form is `rs`.
    #[inline]
    fn dot(&self, j: usize, rs: &Array1<F>) -> F {
        self.x.row(j).dot(rs)
    }

    /// Adds `a` times column `j` to the residual stored as `rs`.
    #[inline]
    fn axpy(&self, j: usize, a: F, rs: &mut Array1<F>) {
        let x = self.x.row(j);
        let (lead, basis) = match &self.weights {
            Some(w) => {
                Zip::from(&mut *rs).and(&x).and(&w.w2).for_each(|ri, &xi, &wi| *ri += a * xi * wi);
                (true, &w.qw)
            }
            None => (false, &self.q),
        };
        if !lead {
            rs.scaled_add(a, &x);
        }
        for (&ck, qk) in self.c.row(j).iter().zip(basis.outer_iter()) {
            rs.scaled_add(-a * ck, &qk);
        }
    }

    /// Inner product of columns `j` and `l`.
    fn gram(&self, j: usize, l: usize) -> F {
        let raw = match &self.weights {
            Some(w) => Zip::from(self.x.row(j))
                .and(self.x.row(l))
                .and(&w.w2)
                .fold(F::zero(), |acc, &a, &b, &s| acc + a * b * s),
            None => self.x.row(j).dot(&self.x.row(l)),
        };
        raw - self.c.row(j).dot(&self.c.row(l))
    }

    /// Stored form of `yr - sum_j beta_j column_j` for `yr` orthogonal to the basis.
    fn residual(&self, yr: &Array1<F>, beta: &Array1<F>) -> Array1<F> {
        let mut rs = match &self.weights {
            Some(w) => yr * &w.sw,
            None => yr.clone(),
        };
        for (j, &b) in beta.iter().enumerate() {
            if b != F::zero() {
                self.axpy(j, -b, &mut rs);
            }
        }
        rs
    }
}

fn scale<F: Real>(v: &Array1<F>) -> F {
    let n = F::from_usize_lossy(v.len().max(1));
    let sd = (v.dot(v) / n).sqrt();
    if sd > F::zero() {
        sd
    } else {
        F::one()
    }
}

#[inline]
fn soft<F: Real>(z: F, g: F) -> F {
    if z > g {
        z - g
    } else if z < -g {
        z + g
    } else {
        F::zero()
    }
}

/// Cyclic coordinate descent for `(1/(2n))||r||^2 + l1 ||b||_1 + (l2/2) ||b||^2`
/// where `r = y - X b` is kept up to date. Returns whether it converged.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent<F: Real>(
    cols: &Residualized<'_, F>,
    r: &mut Array1<F>,
    beta: &mut Array1<F>,
    l1: F,
    l2: F,
    tol: F,
    max_sweeps: usize,
) -> bool {
    let n = r.len();
    let inv_n = F::one() / F::from_usize_lossy(n);
    let mut sweeps = 0;
    let update = |j: usize, r: &mut Array1<F>, beta: &mut Array1<F>| -> F {
        let xsq = &cols.xsq;
        let old = beta[j];
        let denom = xsq[j] + l2;
        let new = if denom > F::zero() {
            soft(cols.dot(j, r) * inv_n + xsq[j] * old, l1) / denom
        } else {
            F::zero()
        };
        if new != old {
            cols.axpy(j, old - new, r);
            beta[j] = new;
            (new - old).abs() * xsq[j].sqrt()
        } else {
            F::zero()
        }
    };
    let p = beta.len();
    loop {
        let mut dmax = F::zero();
        for j in 0..p {
            dmax = dmax.max(update(j, r, beta));
        }
        sweeps += 1;
        if dmax < tol {
            return true;
        }
        if sweeps >= max_sweeps {
            return false;
        }
        let active: Vec<usize> = (0..p).filter(|&j| beta[j] != F::zero()).collect();
        let mut next_exact = 2;
        let mut inner = 0;
        loop {
            let mut dmax = F::zero();
            for &j in &active {
                dmax = dmax.max(update(j, r, beta));
            }
            sweeps += 1;
            inner += 1;
            if dmax < tol {
                break;
            }
            if sweeps >= max_sweeps {
                return false;
            }
            if inner == next_exact {
                next_exact *= 2;
                if exact_active_step(cols, &active, r, beta, l1, l2, inv_n) {
                    break;
                }
            }
        }
    }
}

/// Active-set step on the coordinates in `active` with their signs held
/// fixed. Takes the Newton step for the restricted problem, or a descent
/// step along a direction in which the restricted Hessian is singular, stops
/// at the first coefficient that reaches zero, drops it and repeats. Returns
/// whether a full sign-consistent Newton step was reached.
fn exact_active_step<F: Real>(cols: &Residualized<'_, F>, active: &[usize], r: &mut Array1<F>, beta: &mut Array1<F>, l1: F, l2: F, inv_n: F) -> bool {
    let mut act: Vec<usize> = active.iter().copied().filter(|&j| beta[j] != F::zero()).collect();
    let k0 = act.len();
    let mut gram = Array2::zeros((k0, k0));
    for a in 0..k0 {
        for b in 0..=a {
            let v = cols.gram(act[a], act[b]) * inv_n;
            gram[[a, b]] = v;
            gram[[b, a]] = v;
        }
    }
    let mut pos: Vec<usize> = (0..k0).collect();
    while !act.is_empty() {
        let k = act.len();
        let h = Array2::from_shape_fn((k, k), |(a, b)| gram[[pos[a], pos[b]]] + if a == b { l2 } else { F::zero() });
        let g = Array1::from_iter(
            act.iter()
                .map(|&j| cols.dot(j, r) * inv_n - l1 * beta[j].signum() - l2 * beta[j]),
        );
        let (dir, newton) = match linalg::cholesky(&h, F::lit(1e-10)) {
            Ok(l) => (linalg::cholesky_substitute(&l, &g), true),
            Err((j, l)) => {
                // column j is (numerically) a combination of the columns before it
                let c = linalg::cholesky_substitute(&l, &h.slice(ndarray::s![..j, j]).to_owned());
                let mut v = Array1::zeros(k);
                v.slice_mut(ndarray::s![..j]).assign(&c.mapv(|x| -x));
                v[j] = F::one();
                if g.dot(&v) < F::zero() {
                    v.mapv_inplace(|x| -x);
                }
                (v, false)
            }
        };
        let mut step = if newton { F::one() } else { F::infinity() };
        let mut hit = None;
        for a in 0..k {
            let b = beta[act[a]];
            if dir[a] != F::zero() && (dir[a] > F::zero()) != (b > F::zero()) {
                let t = -b / dir[a];
                if t <= step {
                    step = t;
                    hit = Some(a);
                }
            }
        }
        if !newton {
            // the quadratic is only nearly flat along `dir`; never step past its minimum
            let curv = dir.dot(&h.dot(&dir));
            let slope = g.dot(&dir);
            if hit.is_none() || F::lit(0.5) * step * curv > slope {
                return false;
            }
        }
        for a in 0..k {
            let j = act[a];
            let v = if hit == Some(a) { F::zero() } else { beta[j] + step * dir[a] };
            cols.axpy(j, beta[j] - v, r);
            beta[j] = v;
        }
        match hit {
            None => return true,
            Some(a) => {
                act.remove(a);
                pos.remove(a);
            }
        }
    }
    false
}

/// Smallest `lambda` at which every coefficient is zero for this `alpha`
/// (with `alpha` floored at [`ALPHA_FLOOR`]).
pub fn lambda_max<F: Real>(x: ArrayView2<F>, t: ArrayView2<F>, y: ArrayView1<F>, family: Family, alpha: f64) -> Result<f64> {
    let problem = Problem::new(x, t, y, family)?;
    Ok(problem.lambda_max(alpha).to_f64_lossy())
}

/// Log-spaced sequence from `lmax` down to `lmax * ratio`.
pub fn lambda_grid(lmax: f64, count: usize, ratio: f64) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lmax],
        _ => (0..count)
            .map(|k| lmax * ratio.powf(k as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Elastic-net fit at a single `(alpha, lambda)`.
pub fn fit_net_design<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    alpha: f64,
    lambda: f64,
    opts: &NetOptions,
) -> Result<CoefFit<F>> {
    check_alpha_lambda(alpha, lambda)?;
    let problem = Problem::new(x, t, y, family)?;
    Ok(problem.fit_one(alpha, lambda, None, None, opts))
}

/// Warm-started fits along a decreasing `lambda` sequence at fixed `alpha`.
///
/// Once the fraction of null deviance explained exceeds 0.999 the
/// remaining (smaller) penalties reuse the last fit.
pub fn net_path<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    family: Family,
    alpha: f64,
    lambdas: &[f64],
    opts: &NetOptions,
) -> Result<Vec<CoefFit<F>>> {
    for &l in lambdas {
        check_alpha_lambda(alpha, l)?;
    }
    let problem = Problem::new(x, t, y, family)?;
    let gauss = match family {
        Family::GaussianIdentity => Some(problem.residualized(None)),
        Family::BinomialLogit => None,
    };
    let mut out: Vec<CoefFit<F>> = Vec::with_capacity(lambdas.len());
    let mut saturated = false;
    for &l in lambdas {
        if saturated {
            let last = out.last().expect("nonempty").clone();
            out.push(last);
            continue;
        }
        let warm = out.last().map(|f| (&f.delta, &f.beta_tilde));
        let fit = problem.fit_one(alpha, l, warm, gauss.as_ref(), opts);
        let dev = problem.deviance(&problem.eta(&fit.delta, &fit.beta_tilde));
        if problem.null_deviance > F::zero() && F::one() - dev / problem.null_deviance >= F::lit(0.999) {
            saturated = true;
        }
        out.push(fit);
    }
    Ok(out)
}

/// Largest violation of the elastic-net optimality conditions for the
/// Gaussian objective documented above.
pub fn kkt_violation<F: Real>(
    x: ArrayView2<F>,
    t: ArrayView2<F>,
    y: ArrayView1<F>,
    fit: &CoefFit<F>,
    alpha: f64,
    lambda: f64,
) -> f64 {
    let n = F::from_usize_lossy(y.len());
    let mut xc = x.to_owned();
    for mut row in xc.outer_iter_mut() {
        row -= &fit.column_centers;
    }
    let r = &y - &t.dot(&fit.delta) - xc.dot(&fit.beta_tilde);
    let grad = xc.t().dot(&r).mapv(|g| g / n);
    let tgrad = t.t().dot(&r).mapv(|g| g / n);
    let a = F::lit(alpha);
    let l = F::lit(lambda);
    let mut worst = tgrad.iter().fold(F::zero(), |m, g| m.max(g.abs()));
    for (g, &b) in grad.iter().zip(fit.beta_tilde.iter()) {
        let v = if b != F::zero() {
            (*g - F::lit(2.0) * l * (F::one() - a) * b - l * a * b.signum()).abs()
        } else {
            (g.abs() - l * a).max(F::zero())
        };
        worst = worst.max(v);
    }
    worst.to_f64_lossy()
}
