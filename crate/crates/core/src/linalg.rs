//! Dense linear algebra used by the estimators: Householder QR with column
//! pivoting, minimum-norm least squares through a complete orthogonal
//! decomposition, and a thin SVD computed by one-sided Jacobi rotations on
//! the QR triangle.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::Real;

/// Householder QR factorisation `A P = Q R` of an `n x q` matrix.
///
/// Columns are stored contiguously: column `j` (in pivoted order) holds
/// `R[0..=j, j]` on and above the diagonal and the Householder vector below
/// it (with an implicit leading one).
#[derive(Debug, Clone)]
pub struct Qr<F> {
    data: Vec<F>,
    tau: Vec<F>,
    perm: Vec<usize>,
    nrows: usize,
    ncols: usize,
    rank: usize,
}

impl<F: Real> Qr<F> {
    /// Factorises `a`. With `pivot`, the column of largest remaining norm is
    /// moved forward at every step, which makes the diagonal of `R`
    /// non-increasing in magnitude and exposes the numerical rank.
    pub fn new(a: ArrayView2<F>, pivot: bool) -> Self {
        let (n, q) = a.dim();
        let mut data = vec![F::zero(); n * q];
        for j in 0..q {
            for i in 0..n {
                data[j * n + i] = a[[i, j]];
            }
        }
        let kmax = n.min(q);
        let mut perm: Vec<usize> = (0..q).collect();
        let mut tau = vec![F::zero(); kmax];
        let mut norms: Vec<F> = (0..q).map(|j| sq_norm(&data[j * n..(j + 1) * n])).collect();
        let mut ref_norms = norms.clone();

        for k in 0..kmax {
            if pivot {
                let mut best = k;
                for j in k + 1..q {
                    if norms[j] > norms[best] {
                        best = j;
                    }
                }
                if best != k {
                    for i in 0..n {
                        data.swap(k * n + i, best * n + i);
                    }
                    perm.swap(k, best);
                    norms.swap(k, best);
                    ref_norms.swap(k, best);
                }
            }
            let (head, tail) = data.split_at_mut((k + 1) * n);
            let col = &mut head[k * n + k..(k + 1) * n];
            tau[k] = make_householder(col);
            let v = &*col;
            for j in 0..q - k - 1 {
                let other = &mut tail[j * n + k..(j + 1) * n];
                apply_householder(v, tau[k], other);
                if pivot {
                    let jj = k + 1 + j;
                    norms[jj] -= other[0] * other[0];
                    if norms[jj] <= F::lit(1e-3) * ref_norms[jj] {
                        norms[jj] = sq_norm(&other[1..]);
                        ref_norms[jj] = norms[jj];
                    }
                }
            }
        }

        let mut qr = Qr {
            data,
            tau,
            perm,
            nrows: n,
            ncols: q,
            rank: kmax,
        };
        qr.rank = qr.numerical_rank(default_rank_tol::<F>(n, q));
        qr
    }

    fn numerical_rank(&self, rel_tol: F) -> usize {
        let kmax = self.nrows.min(self.ncols);
        if kmax == 0 {
            return 0;
        }
        let r00 = self.r(0, 0).abs();
        if r00 == F::zero() {
            return 0;
        }
        (0..kmax)
            .take_while(|&k| self.r(k, k).abs() > rel_tol * r00)
            .count()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Column permutation: position `k` of the factorisation holds original column `perm()[k]`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Entry `R[i, j]` (pivoted column order), `i <= j`.
    #[inline]
    pub fn r(&self, i: usize, j: usize) -> F {
        debug_assert!(i <= j);
        self.data[j * self.nrows + i]
    }

    fn householder(&self, k: usize) -> &[F] {
        &self.data[k * self.nrows + k..(k + 1) * self.nrows]
    }

    /// Overwrites `b` with `Q^T b`.
    pub fn apply_qt(&self, b: &mut [F]) {
        assert_eq!(b.len(), self.nrows);
        for k in 0..self.tau.len() {
            apply_householder(self.householder(k), self.tau[k], &mut b[k..]);
        }
    }

    /// Overwrites `b` with `Q b`.
    pub fn apply_q(&self, b: &mut [F]) {
        assert_eq!(b.len(), self.nrows);
        for k in (0..self.tau.len()).rev() {
            apply_householder(self.householder(k), self.tau[k], &mut b[k..]);
        }
    }

    /// First `k` columns of `Q` as an `n x k` matrix.
    pub fn thin_q(&self, k: usize) -> Array2<F> {
        let n = self.nrows;
        let mut q = Array2::zeros((n, k));
        let mut e = vec![F::zero(); n];
        for j in 0..k {
            e.iter_mut().for_each(|v| *v = F::zero());
            e[j] = F::one();
            self.apply_q(&mut e);
            for i in 0..n {
                q[[i, j]] = e[i];
            }
        }
        q
    }

    /// Upper-triangular factor `R` restricted to its first `k` rows (pivoted column order).
    pub fn r_matrix(&self, k: usize) -> Array2<F> {
        let mut r = Array2::zeros((k, self.ncols));
        for j in 0..self.ncols {
            for i in 0..k.min(j + 1) {
                r[[i, j]] = self.r(i, j);
            }
        }
        r
    }

    /// Minimum-norm least-squares solution of `A x ~= b`.
    ///
    /// Full-rank problems are solved by back substitution; rank-deficient
    /// ones go through a complete orthogonal decomposition of the leading
    /// `rank` rows of `R`.
    pub fn solve_least_squares(&self, b: ArrayView1<F>) -> Array1<F> {
        let mut c = b.to_vec();
        self.apply_qt(&mut c);
        let q = self.ncols;
        let r = self.rank;
        let mut xp = vec![F::zero(); q];
        if r == q {
            back_substitute(|i, j| self.r(i, j), &c[..q], &mut xp);
        } else if r > 0 {
            // M = R[0..r, :] ; M^T = Z L  =>  x = Z L^{-T} c
            let mut mt = Array2::zeros((q, r));
            for j in 0..q {
                for i in 0..r.min(j + 1) {
                    mt[[j, i]] = self.r(i, j);
                }
            }
            let cod = Qr::new(mt.view(), false);
            let mut w = vec![F::zero(); q];
            for i in 0..r {
                let mut s = c[i];
                for k in 0..i {
                    s -= cod.r(k, i) * w[k];
                }
                w[i] = s / cod.r(i, i);
            }
            cod.apply_q(&mut w);
            xp = w;
        }
        let mut x = Array1::zeros(q);
        for (k, &orig) in self.perm.iter().enumerate() {
            x[orig] = xp[k];
        }
        x
    }

    /// `(A^T A)^{-1}` in the original column order, or `None` when rank deficient.
    pub fn inverse_gram(&self) -> Option<Array2<F>> {
        let q = self.ncols;
        if self.rank < q {
            return None;
        }
        // R^{-1}, upper triangular
        let mut rinv = Array2::<F>::zeros((q, q));
        for j in 0..q {
            let mut e = vec![F::zero(); q];
            e[j] = F::one();
            let mut col = vec![F::zero(); q];
            back_substitute(|i, k| self.r(i, k), &e, &mut col);
            for i in 0..q {
                rinv[[i, j]] = col[i];
            }
        }
        let g = rinv.dot(&rinv.t());
        let mut out = Array2::zeros((q, q));
        for a in 0..q {
            for b in 0..q {
                out[[self.perm[a], self.perm[b]]] = g[[a, b]];
            }
        }
        Some(out)
    }
}

fn default_rank_tol<F: Real>(n: usize, q: usize) -> F {
    F::epsilon() * F::from_usize_lossy(n.max(q).max(1) * 1000)
}

#[inline]
fn sq_norm<F: Real>(x: &[F]) -> F {
    x.iter().fold(F::zero(), |acc, &v| acc + v * v)
}

/// Turns `x` into a Householder reflector: on return `x[0]` holds the new
/// diagonal entry and `x[1..]` the reflector tail (implicit leading one).
fn make_householder<F: Real>(x: &mut [F]) -> F {
    let tail = sq_norm(&x[1..]);
    let x0 = x[0];
    if tail == F::zero() {
        return F::zero();
    }
    let alpha = (x0 * x0 + tail).sqrt();
    let beta = if x0 >= F::zero() { -alpha } else { alpha };
    let v0 = x0 - beta;
    for v in x[1..].iter_mut() {
        *v /= v0;
    }
    x[0] = beta;
    (beta - x0) / beta
}

/// `y <- (I - tau v v^T) y` with `v[0] = 1` implicit.
#[inline]
fn apply_householder<F: Real>(v: &[F], tau: F, y: &mut [F]) {
    if tau == F::zero() {
        return;
    }
    let mut s = y[0];
    for i in 1..v.len() {
        s += v[i] * y[i];
    }
    s *= tau;
    y[0] -= s;
    for i in 1..v.len() {
        y[i] -= s * v[i];
    }
}

fn back_substitute<F: Real>(r: impl Fn(usize, usize) -> F, c: &[F], x: &mut [F]) {
    let q = x.len();
    for i in (0..q).rev() {
        let mut s = c[i];
        for j in i + 1..q {
            s -= r(i, j) * x[j];
        }
        x[i] = s / r(i, i);
    }
}

/// Thin singular value decomposition `X = U diag(s) V^T` with singular
/// values in non-increasing order; `U` is `n x k`, `V` is `p x k`,
/// `k = min(n, p)`.
#[derive(Debug, Clone)]
pub struct Svd<F> {
    pub u: Array2<F>,
    pub s: Array1<F>,
    pub v: Array2<F>,
}

impl<F: Real> Svd<F> {
    /// Number of singular values above `max(n, p) * eps * 100` relative to the largest.
    pub fn rank(&self) -> usize {
        let (n, p) = (self.u.nrows(), self.v.nrows());
        let s0 = match self.s.first() {
            Some(&s) if s > F::zero() => s,
            _ => return 0,
        };
        let tol = s0 * F::epsilon() * F::from_usize_lossy(n.max(p) * 100);
        self.s.iter().take_while(|&&s| s > tol).count()
    }
}

pub fn thin_svd<F: Real>(x: ArrayView2<F>) -> Svd<F> {
    let (n, p) = x.dim();
    if n >= p {
        // X P = Q R,  R = Ur S Vr^T  =>  U = Q [Ur; 0],  V = P Vr
        let qr = Qr::new(x, true);
        let r = qr.r_matrix(p);
        let (ur, s, vr) = jacobi_svd(r.view());
        let mut u = Array2::zeros((n, p));
        let mut col = vec![F::zero(); n];
        for j in 0..p {
            col.iter_mut().for_each(|v| *v = F::zero());
            for i in 0..p {
                col[i] = ur[[i, j]];
            }
            qr.apply_q(&mut col);
            for i in 0..n {
                u[[i, j]] = col[i];
            }
        }
        let mut v = Array2::zeros((p, p));
        for (k, &orig) in qr.perm().iter().enumerate() {
            v.row_mut(orig).assign(&vr.row(k));
        }
        Svd { u, s, v }
    } else {
        // X^T P = Q R  =>  X = P R^T Q^T,  R^T = Ur S Vr^T
        let qr = Qr::new(x.t(), true);
        let rt = qr.r_matrix(n).reversed_axes();
        let (ur, s, vr) = jacobi_svd(rt.view());
        let mut u = Array2::zeros((n, n));
        for (k, &orig) in qr.perm().iter().enumerate() {
            u.row_mut(orig).assign(&ur.row(k));
        }
        let mut v = Array2::zeros((p, n));
        let mut col = vec![F::zero(); p];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = F::zero());
            for i in 0..n {
                col[i] = vr[[i, j]];
            }
            qr.apply_q(&mut col);
            for i in 0..p {
                v[[i, j]] = col[i];
            }
        }
        Svd { u, s, v }
    }
}

/// One-sided Jacobi SVD of a square matrix. Columns of `U` belonging to
/// zero singular values are left as zero vectors.
fn jacobi_svd<F: Real>(a: ArrayView2<F>) -> (Array2<F>, Array1<F>, Array2<F>) {
    let k = a.nrows();
    debug_assert_eq!(k, a.ncols());
    // rows of `w` are the working columns, rows of `vt` the right vectors
    let mut w: Vec<Vec<F>> = (0..k).map(|j| a.column(j).to_vec()).collect();
    let mut vt: Vec<Vec<F>> = (0..k)
        .map(|j| {
            let mut e = vec![F::zero(); k];
            e[j] = F::one();
            e
        })
        .collect();
    let eps = F::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..k {
            for j in i + 1..k {
                let (alpha, beta, gamma) = {
                    let (wi, wj) = (&w[i], &w[j]);
                    let mut a = F::zero();
                    let mut b = F::zero();
                    let mut g = F::zero();
                    for t in 0..k {
                        a += wi[t] * wi[t];
                        b += wj[t] * wj[t];
                        g += wi[t] * wj[t];
                    }
                    (a, b, g)
                };
                if gamma == F::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (F::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (F::one() + zeta * zeta).sqrt());
                let c = F::one() / (F::one() + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, i, j, c, s);
                rotate_pair(&mut vt, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<F> = w.iter().map(|c| sq_norm(c).sqrt()).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));
    let mut u = Array2::zeros((k, k));
    let mut v = Array2::zeros((k, k));
    let mut s = Array1::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        for t in 0..k {
            if norms[src] > F::zero() {
                u[[t, dst]] = w[src][t] / norms[src];
            }
            v[[t, dst]] = vt[src][t];
        }
    }
    (u, s, v)
}

fn rotate_pair<F: Real>(m: &mut [Vec<F>], i: usize, j: usize, c: F, s: F) {
    let (lo, hi) = m.split_at_mut(j);
    let (a, b) = (&mut lo[i], &mut hi[0]);
    for t in 0..a.len() {
        let x = a[t];
        let y = b[t];
        a[t] = c * x - s * y;
        b[t] = s * x + c * y;
    }
}

/// Column means of a matrix.
pub fn column_means<F: Real>(x: ArrayView2<F>) -> Array1<F> {
    let n = F::from_usize_lossy(x.nrows().max(1));
    x.sum_axis(ndarray::Axis(0)).mapv(|s| s / n)
}

/// Lower Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Stops at the first pivot that is not above `rel_tol` times the largest
/// diagonal entry and returns that index with the factor of the leading block.
pub fn cholesky<F: Real>(a: &Array2<F>, rel_tol: F) -> std::result::Result<Array2<F>, (usize, Array2<F>)> {
    let k = a.nrows();
    let dmax = (0..k).fold(F::zero(), |m, i| m.max(a[[i, i]]));
    let mut l = Array2::zeros((k, k));
    for j in 0..k {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        if !(d > rel_tol * dmax) {
            return Err((j, l));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..k {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L L^T x = b` using the leading `b.len()` block of `l`.
pub fn cholesky_substitute<F: Real>(l: &Array2<F>, b: &Array1<F>) -> Array1<F> {
    let k = b.len();
    let mut x = b.clone();
    for i in 0..k {
        for p in 0..i {
            x[i] = x[i] - l[[i, p]] * x[p];
        }
        x[i] /= l[[i, i]];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            x[i] = x[i] - l[[p, i]] * x[p];
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
/// Returns `None` when a pivot falls below `rel_tol` times the largest diagonal.
pub fn cholesky_solve<F: Real>(a: &Array2<F>, b: &Array1<F>, rel_tol: F) -> Option<Array1<F>> {
    cholesky(a, rel_tol).ok().map(|l| cholesky_substitute(&l, b))
}
