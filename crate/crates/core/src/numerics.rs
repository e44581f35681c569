//! Dense complex-valued linear algebra kernels.
//!
//! Everything downstream (estimators, precoders, training) runs on two small
//! matrix types defined here: [`CMat`] (complex f64) and [`RMat`] (real f64),
//! both column-major. Column-major layout is part of the persistence
//! contract: a matrix serialized column by column as little-endian
//! `(re, im)` pairs re-loads bit-for-bit.
//!
//! The decomposition routines are sized for this workload (matrices up to a
//! few thousand entries per side in tests, typically 64×N in production):
//! a one-sided Jacobi SVD and an unpivoted complex Cholesky factorization.

use num_complex::Complex64;

use crate::error::{Error, Result};

// ─── Complex matrices ────────────────────────────────────────────────────────

/// Dense complex matrix, column-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMat {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Build from a column-major slice; `data.len()` must equal `rows * cols`.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "CMat::from_col_major: {} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(CMat { rows, cols, data })
    }

    /// Build entry-wise from a closure over (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        CMat { rows, cols, data }
    }

    /// Single-column matrix from a vector.
    pub fn from_column(v: &[Complex64]) -> Self {
        CMat { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// Horizontal concatenation of equal-height columns blocks.
    pub fn hstack(blocks: &[&CMat]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Dim("hstack of zero blocks".into()));
        }
        let rows = blocks[0].rows;
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::Dim("hstack: row counts differ".into()));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for b in blocks {
            data.extend_from_slice(&b.data);
        }
        Ok(CMat { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Column-major backing slice.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Contiguous view of column `j`.
    pub fn col(&self, j: usize) -> &[Complex64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [Complex64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Copy of column `j` as a fresh single-column matrix.
    pub fn column_matrix(&self, j: usize) -> CMat {
        CMat::from_column(self.col(j))
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Plain transpose (no conjugation).
    pub fn transpose(&self) -> CMat {
        CMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Entry-wise conjugate.
    pub fn conj(&self) -> CMat {
        let data = self.data.iter().map(|z| z.conj()).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    /// Entry-wise sum; panics on shape mismatch (programming error).
    pub fn add(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "CMat::add shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    /// Entry-wise difference; panics on shape mismatch.
    pub fn sub(&self, other: &CMat) -> CMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "CMat::sub shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    /// Scale by a complex scalar.
    pub fn scale(&self, s: Complex64) -> CMat {
        let data = self.data.iter().map(|z| z * s).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    /// Scale by a real scalar.
    pub fn scale_re(&self, s: f64) -> CMat {
        let data = self.data.iter().map(|z| z * s).collect();
        CMat { rows: self.rows, cols: self.cols, data }
    }

    /// Squared Frobenius norm.
    pub fn frob_norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// True when every component is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest entry-wise absolute difference to `other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "CMat::max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[j * self.rows + i]
    }
}

/// Entrywise unit-circle projection `z/|z|`, with zero mapped to 1 — the
/// deterministic rule shared by the analog-precoder projection and its
/// differentiable tape counterpart.
pub fn unit_modulus(z: Complex64) -> Complex64 {
    let n = z.norm();
    if n == 0.0 {
        Complex64::new(1.0, 0.0)
    } else {
        z / n
    }
}

/// Frobenius inner product `tr(AᴴB) = Σ conj(a)·b`.
pub fn frob_inner(a: &CMat, b: &CMat) -> Complex64 {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols), "frob_inner shape");
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| x.conj() * y)
        .sum()
}

/// Matrix product `A·B`.
///
/// Column-major friendly: each output column is accumulated as a sequence of
/// axpy updates over columns of `A`, so the inner loop is contiguous.
pub fn matmul(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.cols != b.rows {
        return Err(Error::Dim(format!(
            "matmul: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut c = CMat::zeros(a.rows, b.cols);
    for j in 0..b.cols {
        let bcol = &b.data[j * b.rows..(j + 1) * b.rows];
        let ccol = &mut c.data[j * a.rows..(j + 1) * a.rows];
        for (k, &bkj) in bcol.iter().enumerate() {
            if bkj == Complex64::new(0.0, 0.0) {
                continue;
            }
            let acol = &a.data[k * a.rows..(k + 1) * a.rows];
            for (ci, &aik) in ccol.iter_mut().zip(acol) {
                *ci += aik * bkj;
            }
        }
    }
    Ok(c)
}

// ─── Real matrices ───────────────────────────────────────────────────────────

/// Dense real matrix, column-major storage. Scalars are 1×1 matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RMat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dim(format!(
                "RMat::from_col_major: {} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(RMat { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        RMat { rows, cols, data }
    }

    /// 1×1 matrix holding `x`.
    pub fn scalar(x: f64) -> Self {
        RMat { rows: 1, cols: 1, data: vec![x] }
    }

    /// Value of a 1×1 matrix; panics otherwise.
    pub fn as_scalar(&self) -> f64 {
        assert_eq!((self.rows, self.cols), (1, 1), "RMat::as_scalar on non-scalar");
        self.data[0]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn add(&self, other: &RMat) -> RMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "RMat::add shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        RMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &RMat) -> RMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "RMat::sub shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        RMat { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, s: f64) -> RMat {
        let data = self.data.iter().map(|x| x * s).collect();
        RMat { rows: self.rows, cols: self.cols, data }
    }

    /// Real matrix product.
    pub fn matmul(&self, b: &RMat) -> Result<RMat> {
        if self.cols != b.rows {
            return Err(Error::Dim(format!(
                "RMat::matmul: {}x{} times {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut c = RMat::zeros(self.rows, b.cols);
        for j in 0..b.cols {
            for k in 0..self.cols {
                let bkj = b[(k, j)];
                if bkj == 0.0 {
                    continue;
                }
                let acol = &self.data[k * self.rows..(k + 1) * self.rows];
                let ccol = &mut c.data[j * self.rows..(j + 1) * self.rows];
                for (ci, &aik) in ccol.iter_mut().zip(acol) {
                    *ci += aik * bkj;
                }
            }
        }
        Ok(c)
    }

    pub fn transpose(&self) -> RMat {
        RMat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }
}

impl std::ops::Index<(usize, usize)> for RMat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for RMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.rows + i]
    }
}

// ─── Singular value decomposition ────────────────────────────────────────────

/// Thin SVD `A = U·diag(s)·Vᴴ` with singular values sorted descending.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `rows × min(rows, cols)`, orthonormal columns.
    pub u: CMat,
    /// Singular values, descending, non-negative.
    pub s: Vec<f64>,
    /// Right singular vectors as rows, `min(rows, cols) × cols`.
    pub vh: CMat,
}

/// Thin SVD via one-sided Jacobi rotations.
///
/// Jacobi sweeps orthogonalize column pairs of the working matrix until every
/// pair is numerically orthogonal; column norms then give the singular values
/// and the accumulated rotations the right singular vectors. Tall input is
/// required internally; wide matrices are factored through their adjoint.
pub fn svd(a: &CMat) -> Result<SvdResult> {
    if a.rows == 0 || a.cols == 0 {
        return Err(Error::Dim("svd of empty matrix".into()));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("svd: non-finite input".into()));
    }
    if a.rows < a.cols {
        // A = (Aᴴ)ᴴ = V·S·Uᴴ where Aᴴ = U·S·Vᴴ.
        let t = svd(&a.adjoint())?;
        let u = t.vh.adjoint();
        let vh = t.u.adjoint();
        return Ok(SvdResult { u, s: t.s, vh });
    }

    let m = a.rows;
    let n = a.cols;
    let mut w = a.clone(); // working matrix, columns rotated in place
    let mut v = CMat::identity(n);

    let tol = 1e-14;
    let max_sweeps = 64;
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = Complex64::new(0.0, 0.0);
                {
                    let (head, tail) = w.data.split_at(q * m);
                    let cp = &head[p * m..p * m + m];
                    let cq = &tail[..m];
                    for (x, y) in cp.iter().zip(cq) {
                        alpha += x.norm_sqr();
                        beta += y.norm_sqr();
                        gamma += x.conj() * y;
                    }
                }
                let gn = gamma.norm();
                if gn <= tol * (alpha * beta).sqrt() || gn == 0.0 {
                    continue;
                }
                rotated = true;
                // Phase factor turning the 2×2 Gram block real, then a classic
                // real Jacobi rotation annihilating the off-diagonal.
                let phase = gamma / gn;
                let zeta = (beta - alpha) / (2.0 * gn);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let e = phase.conj(); // e^{-iθ}
                rotate_pair(&mut w.data, m, p, q, c, s, e);
                rotate_pair(&mut v.data, n, p, q, c, s, e);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric("svd: Jacobi sweeps did not converge".into()));
    }

    // Column norms are singular values; normalize to get U.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.col(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u = CMat::zeros(m, n);
    let mut s = Vec::with_capacity(n);
    let mut vh = CMat::zeros(n, n);
    let smax = norms.iter().cloned().fold(0.0, f64::max);
    for (dst, &src) in order.iter().enumerate() {
        let sv = norms[src];
        s.push(sv);
        if sv > smax * 1e-13 && sv > 0.0 {
            for i in 0..m {
                u[(i, dst)] = w[(i, src)] / sv;
            }
        }
        for i in 0..n {
            vh[(dst, i)] = v[(i, src)].conj();
        }
    }
    // Orthonormal completion for (near-)zero singular values so U always has
    // orthonormal columns.
    complete_orthonormal(&mut u, &s, smax);

    Ok(SvdResult { u, s, vh })
}

/// Apply the 2×2 unitary `[[c, s], [-s·e, c·e]]` to columns (p, q).
fn rotate_pair(data: &mut [Complex64], rows: usize, p: usize, q: usize, c: f64, s: f64, e: Complex64) {
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let (head, tail) = data.split_at_mut(hi * rows);
    let cp = &mut head[lo * rows..lo * rows + rows];
    let cq = &mut tail[..rows];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x * c - *y * (e * s);
        let xq = *x * s + *y * (e * c);
        *x = xp;
        *y = xq;
    }
}

/// Replace columns associated with negligible singular values by unit vectors
/// orthogonal to all other columns (Gram-Schmidt over the canonical basis).
fn complete_orthonormal(u: &mut CMat, s: &[f64], smax: f64) {
    let m = u.rows();
    for j in 0..s.len() {
        if s[j] > smax * 1e-13 && s[j] > 0.0 {
            continue;
        }
        // Try canonical basis vectors until one survives projection removal.
        'basis: for b in 0..m {
            let mut cand = vec![Complex64::new(0.0, 0.0); m];
            cand[b] = Complex64::new(1.0, 0.0);
            for k in 0..s.len() {
                if k == j {
                    continue;
                }
                let col = u.col(k);
                let inner: Complex64 = col.iter().zip(&cand).map(|(x, y)| x.conj() * y).sum();
                for (ci, x) in cand.iter_mut().zip(col) {
                    *ci -= inner * x;
                }
            }
            let norm: f64 = cand.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.5 {
                for (dst, src) in u.col_mut(j).iter_mut().zip(&cand) {
                    *dst = src / norm;
                }
                break 'basis;
            }
        }
    }
}

// ─── Hermitian positive definite solvers ─────────────────────────────────────

/// Lower-triangular Cholesky factor of a Hermitian positive definite matrix.
///
/// Only the lower triangle of the input is read, so inputs that are Hermitian
/// up to rounding are handled deterministically.
pub fn cholesky(a: &CMat) -> Result<CMat> {
    if a.rows != a.cols {
        return Err(Error::Dim("cholesky of non-square matrix".into()));
    }
    let n = a.rows;
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numeric(format!(
                "cholesky: non-positive pivot {d:.3e} at index {j}"
            )));
        }
        let ljj = d.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / ljj;
        }
    }
    Ok(l)
}

/// `ln det(S)` for Hermitian positive definite `S`, through Cholesky.
pub fn logdet_psd(s: &CMat) -> Result<f64> {
    let l = cholesky(s)?;
    let mut acc = 0.0;
    for i in 0..l.rows() {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc)
}

/// Solve `S·X = B` for Hermitian positive definite `S`.
///
/// Uses a root-free LDLᴴ factorization (unit lower-triangular `L`, real
/// positive diagonal `D`): each unknown is divided by its pivot exactly once,
/// so the 1×1 system degenerates to the single division `b/s` with no extra
/// rounding — the scalar linear-estimator identity relies on that. Only the
/// lower triangle of `S` is read.
pub fn solve_hpd(s: &CMat, b: &CMat) -> Result<CMat> {
    if s.rows != s.cols {
        return Err(Error::Dim("solve_hpd of non-square matrix".into()));
    }
    if s.rows != b.rows {
        return Err(Error::Dim(format!(
            "solve_hpd: {}x{} system with {}x{} right-hand side",
            s.rows, s.cols, b.rows, b.cols
        )));
    }
    let n = s.rows;
    let mut l = CMat::zeros(n, n);
    let mut d = vec![0.0; n];
    for j in 0..n {
        let mut dj = s[(j, j)].re;
        for k in 0..j {
            dj -= l[(j, k)].norm_sqr() * d[k];
        }
        if !(dj > 0.0) || !dj.is_finite() {
            return Err(Error::Numeric(format!(
                "solve_hpd: non-positive pivot {dj:.3e} at index {j}"
            )));
        }
        d[j] = dj;
        for i in (j + 1)..n {
            let mut v = s[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj() * d[k];
            }
            l[(i, j)] = v / dj;
        }
    }
    let mut x = b.clone();
    for j in 0..b.cols {
        let col = x.col_mut(j);
        // forward: L z = b (unit diagonal, no divisions)
        for i in 0..n {
            let mut v = col[i];
            for k in 0..i {
                v -= l[(i, k)] * col[k];
            }
            col[i] = v;
        }
        // diagonal: D w = z
        for i in 0..n {
            col[i] /= d[i];
        }
        // backward: Lᴴ x = w (unit diagonal again)
        for i in (0..n).rev() {
            let mut v = col[i];
            for k in (i + 1)..n {
                v -= l[(k, i)].conj() * col[k];
            }
            col[i] = v;
        }
    }
    Ok(x)
}
