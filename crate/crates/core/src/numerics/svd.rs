//! Truncated singular value decomposition.
//!
//! The dense path reduces the thinner orientation with a Householder QR and then
//! runs one-sided (Hestenes) Jacobi on the square triangular factor. Results are
//! sorted by descending singular value and are bitwise reproducible for a given
//! input.
//!
//! The slice path ([`SliceSvd`]) consumes a matrix one column block at a time and
//! keeps only a thin factorization plus the current block in memory.

use crate::error::{Error, Result};
use crate::numerics::matrix::{dot, Matrix};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;
/// Column norms below this are treated as exact zeros and completed.
const NULL_NORM: f64 = 1e-150;
/// Relative threshold under which a new slice direction is considered to be
/// inside the current basis.
const SLICE_RESIDUAL_TOL: f64 = 1e-13;
/// Relative threshold under which merged singular triples are discarded.
const SLICE_DROP_TOL: f64 = 1e-13;

/// Thin factorization `M ≈ U diag(S) Vᵀ` holding the leading `k` triples.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdResult {
    /// Left singular vectors, `rows x k`, orthonormal columns.
    pub u: Matrix,
    /// Singular values, non-negative and non-increasing.
    pub s: Vec<f64>,
    /// Right singular vectors, `cols x k`, orthonormal columns.
    pub v: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `U diag(S) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for r in 0..us.rows() {
            for (x, s) in us.row_mut(r).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factors have consistent shapes")
    }
}

/// Leading `k` singular triples of `m`.
pub fn truncated_svd(m: &Matrix, k: usize) -> Result<SvdResult> {
    let (n, c) = m.shape();
    if k == 0 || k > n.min(c) {
        return Err(Error::dim(format!(
            "rank {k} outside 1..={} for a {n}x{c} matrix",
            n.min(c)
        )));
    }
    m.check_finite("svd input")?;
    let mut full = if n >= c {
        thin_svd(m)
    } else {
        let t = thin_svd(&m.transpose());
        SvdResult { u: t.v, s: t.s, v: t.u }
    };
    truncate(&mut full, k);
    Ok(full)
}

/// Full thin SVD (`k = min(rows, cols)`).
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    truncated_svd(m, m.rows().min(m.cols()))
}

/// Numerical rank: singular values above `rel_tol * s_max` (`s_max > 0`).
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if m.is_empty() {
        return Ok(0);
    }
    let s = svd(m)?.s;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * top).count())
}

fn truncate(svd: &mut SvdResult, k: usize) {
    if svd.s.len() > k {
        svd.s.truncate(k);
        svd.u = svd.u.col_range(0, k);
        svd.v = svd.v.col_range(0, k);
    }
}

/// SVD of a matrix with at least as many rows as columns.
fn thin_svd(m: &Matrix) -> SvdResult {
    let (n, c) = m.shape();
    debug_assert!(n >= c);
    if n == c {
        let (u, s, v) = jacobi(m);
        return sorted(u, s, v);
    }
    let (q, r) = householder_qr(m);
    let (ur, s, v) = jacobi(&r);
    let u = q.matmul(&ur).expect("qr factors have consistent shapes");
    sorted(u, s, v)
}

/// One-sided Jacobi on a square matrix. Returns unsorted `(U, s, V)`.
fn jacobi(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let n = a.rows();
    let c = a.cols();
    // Columns stored as contiguous rows.
    let mut w = a.transpose();
    let mut vt = Matrix::identity(c);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate_rows(&mut w, p, q, cs, sn);
                rotate_rows(&mut vt, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut s = Vec::with_capacity(c);
    let mut u = Matrix::zeros(n, c);
    let mut missing = Vec::new();
    for j in 0..c {
        let col = w.row(j);
        let norm = dot(col, col).sqrt();
        if norm < NULL_NORM {
            s.push(0.0);
            missing.push(j);
        } else {
            s.push(norm);
            let unit: Vec<f64> = col.iter().map(|x| x / norm).collect();
            u.set_col(j, &unit);
        }
    }
    complete_columns(&mut u, &missing);
    (u, s, vt.transpose())
}

#[inline]
fn rotate_rows(m: &mut Matrix, p: usize, q: usize, cs: f64, sn: f64) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let a = *x;
        let b = *y;
        *x = cs * a - sn * b;
        *y = sn * a + cs * b;
    }
}

fn sorted(u: Matrix, s: Vec<f64>, v: Matrix) -> SvdResult {
    let mut order: Vec<usize> = (0..s.len()).collect();
    // Stable sort keeps ties in column order, so the output is reproducible.
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).expect("finite singular values"));
    let u = Matrix::from_fn(u.rows(), order.len(), |r, c| u[(r, order[c])]);
    let v = Matrix::from_fn(v.rows(), order.len(), |r, c| v[(r, order[c])]);
    let s = order.iter().map(|&i| s[i]).collect();
    SvdResult { u, s, v }
}

/// Thin Householder QR of a tall matrix: returns `Q` (`n x c`) and `R` (`c x c`).
pub(crate) fn householder_qr(m: &Matrix) -> (Matrix, Matrix) {
    let (n, c) = m.shape();
    debug_assert!(n >= c);
    // Column-major working copy.
    let mut cols: Vec<Vec<f64>> = (0..c).map(|j| m.col(j)).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(c);

    for j in 0..c {
        let x = &cols[j][j..];
        let xnorm = dot(x, x).sqrt();
        if xnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        for col in cols.iter_mut().skip(j) {
            apply_reflector(&v, &mut col[j..]);
        }
        reflectors.push(Some(v));
    }

    let r = Matrix::from_fn(c, c, |i, j| if i <= j { cols[j][i] } else { 0.0 });

    let mut q_cols: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    for (j, v) in reflectors.iter().enumerate().rev() {
        if let Some(v) = v {
            for qc in q_cols.iter_mut() {
                apply_reflector(v, &mut qc[j..]);
            }
        }
    }
    let q = Matrix::from_fn(n, c, |i, j| q_cols[j][i]);
    (q, r)
}

#[inline]
fn apply_reflector(v: &[f64], x: &mut [f64]) {
    let d = 2.0 * dot(v, x);
    if d != 0.0 {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi -= d * vi;
        }
    }
}

/// Replaces the listed columns of `u` with unit vectors orthogonal to every
/// other column, drawn deterministically from the standard basis.
pub(crate) fn complete_columns(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows();
    let mut basis: Vec<Vec<f64>> = (0..u.cols())
        .filter(|j| !missing.contains(j))
        .map(|j| u.col(j))
        .collect();
    let mut candidate = 0;
    for &j in missing {
        loop {
            assert!(candidate < n, "cannot complete more than {n} orthonormal columns");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let proj = dot(b, &e);
                    for (ei, bi) in e.iter_mut().zip(b) {
                        *ei -= proj * bi;
                    }
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 0.5 {
                e.iter_mut().for_each(|x| *x /= norm);
                u.set_col(j, &e);
                basis.push(e);
                break;
            }
        }
    }
}

/// Streaming SVD over the column blocks `[C₁ C₂ … C_L]` of a matrix.
///
/// Each pushed block is projected onto the current left basis; the residual is
/// orthonormalized and the small core `[[diag(S), UᵀC], [0, QᵀC]]` is
/// re-decomposed. Only the thin factors and the incoming block are held in
/// memory. By default every numerically nonzero direction is retained, which
/// makes the final truncation agree with the dense SVD; `with_max_rank` caps the
/// retained rank for a hard memory bound at the cost of approximation error.
#[derive(Clone, Debug, Default)]
pub struct SliceSvd {
    rows: Option<usize>,
    cols: usize,
    u: Option<Matrix>,
    s: Vec<f64>,
    v: Option<Matrix>,
    max_rank: Option<usize>,
}

impl SliceSvd {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_rank(max_rank: usize) -> Self {
        SliceSvd {
            max_rank: Some(max_rank),
            ..Self::default()
        }
    }

    /// Number of columns consumed so far.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Rank currently retained.
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn push(&mut self, block: &Matrix) -> Result<()> {
        let n = *self.rows.get_or_insert(block.rows());
        if block.rows() != n {
            return Err(Error::dim(format!("slice has {} rows, expected {n}", block.rows())));
        }
        block.check_finite("svd slice")?;
        let a = block.cols();
        if a == 0 {
            return Ok(());
        }
        let r = self.s.len();
        let u = self.u.take().unwrap_or_else(|| Matrix::zeros(n, 0));
        let v = self.v.take().unwrap_or_else(|| Matrix::zeros(self.cols, 0));

        let scale = self.s.first().copied().unwrap_or(0.0).max(block.frobenius_norm());

        // Orthonormal residual directions of the block w.r.t. the current basis.
        let mut basis: Vec<Vec<f64>> = (0..r).map(|j| u.col(j)).collect();
        let mut fresh = 0usize;
        if scale > 0.0 {
            for j in 0..a {
                let mut c = block.col(j);
                for _ in 0..2 {
                    for b in &basis {
                        let proj = dot(b, &c);
                        for (ci, bi) in c.iter_mut().zip(b) {
                            *ci -= proj * bi;
                        }
                    }
                }
                let norm = dot(&c, &c).sqrt();
                if norm > SLICE_RESIDUAL_TOL * scale {
                    c.iter_mut().for_each(|x| *x /= norm);
                    basis.push(c);
                    fresh += 1;
                }
            }
        }
        let width = r + fresh;
        let b = Matrix::from_fn(n, width, |i, j| basis[j][i]);

        // Core matrix [[diag(S), UᵀC], [0, QᵀC]].
        let coeffs = b.t_matmul(block)?;
        let mut core = Matrix::zeros(width, r + a);
        for (i, &s) in self.s.iter().enumerate() {
            core[(i, i)] = s;
        }
        for i in 0..width {
            for j in 0..a {
                core[(i, r + j)] = coeffs[(i, j)];
            }
        }

        let cols_after = self.cols + a;
        if width == 0 {
            self.u = Some(u);
            self.v = Some(Matrix::zeros(cols_after, 0));
            self.cols = cols_after;
            return Ok(());
        }

        let inner = svd(&core)?;
        let top = inner.s.first().copied().unwrap_or(0.0);
        let mut keep = inner
            .s
            .iter()
            .take_while(|&&s| top > 0.0 && s > SLICE_DROP_TOL * top)
            .count();
        if let Some(cap) = self.max_rank {
            keep = keep.min(cap);
        }

        let uk = inner.u.col_range(0, keep);
        let vk = inner.v.col_range(0, keep);
        let new_u = b.matmul(&uk)?;
        // [[V, 0], [0, I_a]] · Vk
        let mut new_v = Matrix::zeros(cols_after, keep);
        for row in 0..self.cols {
            let vrow = v.row(row);
            for col in 0..keep {
                let mut acc = 0.0;
                for (t, &x) in vrow.iter().enumerate() {
                    acc += x * vk[(t, col)];
                }
                new_v[(row, col)] = acc;
            }
        }
        for j in 0..a {
            for col in 0..keep {
                new_v[(self.cols + j, col)] = vk[(r + j, col)];
            }
        }

        self.s = inner.s[..keep].to_vec();
        self.u = Some(new_u);
        self.v = Some(new_v);
        self.cols = cols_after;
        Ok(())
    }

    /// Leading `k` triples of everything pushed so far.
    pub fn finish(self, k: usize) -> Result<SvdResult> {
        let n = self.rows.unwrap_or(0);
        if k == 0 || k > n.min(self.cols) {
            return Err(Error::dim(format!(
                "rank {k} outside 1..={} for a {n}x{} matrix",
                n.min(self.cols),
                self.cols
            )));
        }
        let r = self.s.len();
        let u = self.u.unwrap_or_else(|| Matrix::zeros(n, 0));
        let v = self.v.unwrap_or_else(|| Matrix::zeros(self.cols, 0));
        if r >= k {
            return Ok(SvdResult {
                u: u.col_range(0, k),
                s: self.s[..k].to_vec(),
                v: v.col_range(0, k),
            });
        }
        // Fewer than k nonzero directions: pad with zero singular values.
        let missing: Vec<usize> = (r..k).collect();
        let mut u_full = Matrix::zeros(n, k);
        let mut v_full = Matrix::zeros(self.cols, k);
        for j in 0..r {
            u_full.set_col(j, &u.col(j));
            v_full.set_col(j, &v.col(j));
        }
        complete_columns(&mut u_full, &missing);
        complete_columns(&mut v_full, &missing);
        let mut s = self.s;
        s.resize(k, 0.0);
        Ok(SvdResult {
            u: u_full,
            s,
            v: v_full,
        })
    }
}

/// Truncated SVD of the horizontal concatenation of `slices`, consuming one
/// slice at a time.
pub fn incremental_truncated_svd<I>(slices: I, k: usize) -> Result<SvdResult>
where
    I: IntoIterator<Item = Matrix>,
{
    let mut acc = SliceSvd::new();
    for slice in slices {
        acc.push(&slice)?;
    }
    acc.finish(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormality_error(q: &Matrix) -> f64 {
        q.t_matmul(q).unwrap().max_abs_diff(&Matrix::identity(q.cols()))
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = truncated_svd(&Matrix::identity(2), 2).unwrap();
        assert_eq!(r.s, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_matrix_gives_zero_values_and_orthonormal_factors() {
        let r = truncated_svd(&Matrix::zeros(3, 3), 2).unwrap();
        assert_eq!(r.s, vec![0.0, 0.0]);
        assert!(orthonormality_error(&r.u) < 1e-12);
        assert!(orthonormality_error(&r.v) < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let m = random(3, 2, 1);
        assert!(matches!(truncated_svd(&m, 0), Err(Error::Dimension(_))));
        assert!(matches!(truncated_svd(&m, 3), Err(Error::Dimension(_))));
    }

    #[test]
    fn non_finite_input_rejected() {
        let mut m = random(3, 3, 2);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(truncated_svd(&m, 1), Err(Error::NumericInput(_))));
    }

    #[test]
    fn wide_and_tall_factorizations_reconstruct() {
        for (rows, cols) in [(7, 3), (3, 7), (5, 5), (1, 4), (4, 1)] {
            let m = random(rows, cols, (rows * 10 + cols) as u64);
            let r = svd(&m).unwrap();
            assert!(r.reconstruct().max_abs_diff(&m) < 1e-12, "{rows}x{cols}");
            assert!(orthonormality_error(&r.u) < 1e-12);
            assert!(orthonormality_error(&r.v) < 1e-12);
            assert!(r.s.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn rank_deficient_input() {
        // Rank 2 matrix, 6x5.
        let a = random(6, 2, 3);
        let b = random(2, 5, 4);
        let m = a.matmul(&b).unwrap();
        let r = svd(&m).unwrap();
        assert!(r.s[2] < 1e-13 * r.s[0]);
        assert!(orthonormality_error(&r.u) < 1e-12);
        assert_eq!(numerical_rank(&m, 1e-10).unwrap(), 2);
    }

    #[test]
    fn single_slice_matches_dense() {
        let m = random(8, 3, 5);
        let dense = truncated_svd(&m, 2).unwrap();
        let streamed = incremental_truncated_svd([m.clone()], 2).unwrap();
        for (a, b) in dense.s.iter().zip(&streamed.s) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn zero_slices_give_zero_spectrum() {
        let slices = vec![Matrix::zeros(5, 2); 3];
        let r = incremental_truncated_svd(slices, 3).unwrap();
        assert_eq!(r.s, vec![0.0; 3]);
        assert!(orthonormality_error(&r.u) < 1e-12);
        assert!(orthonormality_error(&r.v) < 1e-12);
    }

    #[test]
    fn inconsistent_slice_heights() {
        let slices = vec![Matrix::zeros(4, 2), Matrix::zeros(5, 2)];
        assert!(matches!(incremental_truncated_svd(slices, 1), Err(Error::Dimension(_))));
    }

    #[test]
    fn capped_rank_is_respected() {
        let m = random(10, 8, 6);
        let mut acc = SliceSvd::with_max_rank(3);
        for j in 0..4 {
            acc.push(&m.col_range(2 * j, 2 * j + 2)).unwrap();
            assert!(acc.rank() <= 3);
        }
        let r = acc.finish(3).unwrap();
        assert_eq!(r.u.shape(), (10, 3));
        assert_eq!(r.v.shape(), (8, 3));
    }

    #[test]
    fn deterministic() {
        let m = random(9, 6, 7);
        let a = truncated_svd(&m, 4).unwrap();
        let b = truncated_svd(&m, 4).unwrap();
        assert_eq!(a, b);
    }
}
