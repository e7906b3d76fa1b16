//! Dense linear algebra kernels: truncated pseudoinverses, kernel bases and
//! symmetric square roots.

use faer::{Col, Mat, MatRef, Side};
use thiserror::Error;

pub type Matrix = Mat<f64>;
pub type Vector = Col<f64>;

/// Relative singular-value threshold used when a caller has no preference.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Eigenvalue tolerance for the PSD/PD checks on weight matrices.
pub const WEIGHT_TOL: f64 = 1e-10;

/// Rank cutoff of `max(rows, cols) * eps`, the usual LAPACK-style default.
pub fn machine_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * f64::EPSILON
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("singular value decomposition failed to converge")]
    SvdFailed,
    #[error("eigendecomposition failed to converge")]
    EigFailed,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid tolerance {0}")]
    Tolerance(f64),
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub fn is_finite(m: MatRef<'_, f64>) -> bool {
    (0..m.ncols()).all(|j| (0..m.nrows()).all(|i| m[(i, j)].is_finite()))
}

pub fn ensure_finite(m: MatRef<'_, f64>) -> Result<()> {
    if is_finite(m) {
        Ok(())
    } else {
        Err(LinalgError::NonFinite)
    }
}

/// Builds a matrix from row-major values, rejecting non-finite entries.
pub fn from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Matrix> {
    if values.len() != rows * cols {
        return Err(LinalgError::Dimension(format!(
            "expected {} values for a {rows}x{cols} matrix, got {}",
            rows * cols,
            values.len()
        )));
    }
    let m = Mat::from_fn(rows, cols, |i, j| values[i * cols + j]);
    ensure_finite(m.as_ref())?;
    Ok(m)
}

pub fn col_from_slice(values: &[f64]) -> Vector {
    Col::from_fn(values.len(), |i| values[i])
}

pub fn col_to_vec(v: &Vector) -> Vec<f64> {
    (0..v.nrows()).map(|i| v[i]).collect()
}

/// Stacks matrices with equal column counts on top of each other.
pub fn vstack(blocks: &[MatRef<'_, f64>]) -> Result<Matrix> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(LinalgError::Dimension("vstack needs equal column counts".into()));
    }
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.as_mut().submatrix_mut(r, 0, b.nrows(), cols).copy_from(b);
        r += b.nrows();
    }
    Ok(out)
}

/// Thin singular value decomposition `M = U diag(s) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdFactorization {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

impl SvdFactorization {
    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `tol * sigma_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let cut = tol * self.sigma_max();
        if self.sigma_max() == 0.0 {
            return 0;
        }
        self.s.iter().take_while(|&&s| s > cut).count()
    }

    /// Pseudoinverse keeping the leading `k` singular triplets.
    pub fn pinv_rank(&self, k: usize) -> Matrix {
        let (m, n) = (self.u.nrows(), self.v.nrows());
        if k == 0 {
            return Mat::zeros(n, m);
        }
        let vk = self.v.as_ref().subcols(0, k);
        let uk = self.u.as_ref().subcols(0, k);
        let scaled = Mat::from_fn(n, k, |i, j| vk[(i, j)] / self.s[j]);
        scaled * uk.transpose()
    }

    /// Applies the rank-`k` pseudoinverse to a block of right-hand sides.
    pub fn pinv_apply(&self, k: usize, rhs: MatRef<'_, f64>) -> Matrix {
        let n = self.v.nrows();
        if k == 0 {
            return Mat::zeros(n, rhs.ncols());
        }
        let mut c = self.u.as_ref().subcols(0, k).transpose() * rhs;
        for i in 0..k {
            for j in 0..c.ncols() {
                c[(i, j)] /= self.s[i];
            }
        }
        self.v.as_ref().subcols(0, k) * c
    }
}

pub fn svd(m: MatRef<'_, f64>) -> Result<SvdFactorization> {
    ensure_finite(m)?;
    let (r, c) = (m.nrows(), m.ncols());
    if r == 0 || c == 0 {
        return Ok(SvdFactorization {
            u: Mat::zeros(r, 0),
            s: Vec::new(),
            v: Mat::zeros(c, 0),
        });
    }
    let f = m.thin_svd().map_err(|_| LinalgError::SvdFailed)?;
    let s: Vec<f64> = f.S().column_vector().iter().copied().collect();
    let out = SvdFactorization {
        u: f.U().to_owned(),
        s,
        v: f.V().to_owned(),
    };
    if out.s.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::SvdFailed);
    }
    Ok(out)
}

pub fn singular_values(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    ensure_finite(m)?;
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vec::new());
    }
    let s = m.singular_values().map_err(|_| LinalgError::SvdFailed)?;
    if s.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::SvdFailed);
    }
    Ok(s)
}

/// Numerical rank with the relative threshold `tol * sigma_max`.
pub fn rank(m: MatRef<'_, f64>, tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > tol * smax).count())
}

/// Moore–Penrose pseudoinverse; singular values `<= tol * sigma_max` are dropped.
pub fn pinv(m: MatRef<'_, f64>, tol: f64) -> Result<Matrix> {
    if !(tol >= 0.0) {
        return Err(LinalgError::Tolerance(tol));
    }
    let f = svd(m)?;
    Ok(f.pinv_rank(f.rank(tol)))
}

/// `pinv(m, tol) * rhs` without forming the pseudoinverse.
pub fn pinv_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>, tol: f64) -> Result<Matrix> {
    if !(tol >= 0.0) {
        return Err(LinalgError::Tolerance(tol));
    }
    if rhs.nrows() != m.nrows() {
        return Err(LinalgError::Dimension(format!(
            "pinv_solve: {} rows against {}",
            rhs.nrows(),
            m.nrows()
        )));
    }
    let f = svd(m)?;
    Ok(f.pinv_apply(f.rank(tol), rhs))
}

/// Like [`pinv_solve`] but singular values `<= tol * scale` are dropped, so a
/// product that is numerically zero relative to `scale` is treated as zero.
pub fn pinv_solve_scaled(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>, tol: f64, scale: f64) -> Result<Matrix> {
    if !(tol >= 0.0) {
        return Err(LinalgError::Tolerance(tol));
    }
    if rhs.nrows() != m.nrows() {
        return Err(LinalgError::Dimension(format!(
            "pinv_solve_scaled: {} rows against {}",
            rhs.nrows(),
            m.nrows()
        )));
    }
    let f = svd(m)?;
    let cut = tol * scale.max(f.sigma_max());
    let k = f.s.iter().take_while(|&&s| s > cut).count();
    Ok(f.pinv_apply(k, rhs))
}

/// Pseudoinverse with an absolute cutoff: singular values `< eps` are dropped.
pub fn pinv_eps(m: MatRef<'_, f64>, eps: f64) -> Result<Matrix> {
    if !(eps > 0.0) {
        return Err(LinalgError::Tolerance(eps));
    }
    let f = svd(m)?;
    let k = f.s.iter().take_while(|&&s| s >= eps).count();
    Ok(f.pinv_rank(k))
}

/// Orthonormal basis of `Ker(m)`; may have zero columns.
pub fn kernel_basis(m: MatRef<'_, f64>, tol: f64) -> Result<Matrix> {
    ensure_finite(m)?;
    let (r, c) = (m.nrows(), m.ncols());
    if c == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    if r == 0 {
        return Ok(Mat::identity(c, c));
    }
    let f = m.svd().map_err(|_| LinalgError::SvdFailed)?;
    let s: Vec<f64> = f.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rk = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&x| x > tol * smax).count()
    };
    Ok(f.V().subcols(rk, c - rk).to_owned())
}

/// Kernel basis of `m` together with the minimum-norm solution `m† rhs`,
/// sharing one full decomposition. Returns `(kernel, solution, rank)`.
pub fn kernel_and_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>, tol: f64) -> Result<(Matrix, Matrix, usize)> {
    ensure_finite(m)?;
    let (r, c) = (m.nrows(), m.ncols());
    if rhs.nrows() != r {
        return Err(LinalgError::Dimension("kernel_and_solve: rhs rows".into()));
    }
    if r == 0 || c == 0 {
        return Ok((Mat::identity(c, c), Mat::zeros(c, rhs.ncols()), 0));
    }
    let f = m.svd().map_err(|_| LinalgError::SvdFailed)?;
    let s: Vec<f64> = f.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rk = if smax == 0.0 {
        0
    } else {
        s.iter().filter(|&&x| x > tol * smax).count()
    };
    let mut coef = f.U().subcols(0, rk).transpose() * rhs;
    for i in 0..rk {
        for j in 0..coef.ncols() {
            coef[(i, j)] /= s[i];
        }
    }
    let x = f.V().subcols(0, rk) * coef;
    Ok((f.V().subcols(rk, c - rk).to_owned(), x, rk))
}

/// Symmetric eigendecomposition with eigenvalues in non-decreasing order.
pub fn sym_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Matrix)> {
    ensure_finite(m)?;
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Dimension("eigendecomposition of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let sym = symmetrize(m);
    let e = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LinalgError::EigFailed)?;
    let vals = e.S().column_vector().iter().copied().collect();
    Ok((vals, e.U().to_owned()))
}

pub fn symmetrize(m: MatRef<'_, f64>) -> Matrix {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

fn asymmetry(m: MatRef<'_, f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Checks symmetry and the eigenvalue sign condition (`strict` asks for PD).
pub fn check_weight(m: MatRef<'_, f64>, strict: bool, name: &str) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::InvalidWeight(format!("{name} is not square")));
    }
    let scale = m.norm_max().max(1.0);
    if asymmetry(m) > WEIGHT_TOL * scale {
        return Err(LinalgError::InvalidWeight(format!("{name} is not symmetric")));
    }
    let (vals, _) = sym_eigen(m)?;
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0).abs().max(1.0);
    if strict && lo <= WEIGHT_TOL * hi {
        return Err(LinalgError::InvalidWeight(format!(
            "{name} is not positive definite (min eigenvalue {lo:e})"
        )));
    }
    if !strict && lo < -WEIGHT_TOL * hi {
        return Err(LinalgError::InvalidWeight(format!(
            "{name} is not positive semidefinite (min eigenvalue {lo:e})"
        )));
    }
    Ok(vals)
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues are clamped.
pub fn sym_sqrt(m: MatRef<'_, f64>) -> Result<Matrix> {
    let (vals, v) = sym_eigen(m)?;
    let n = vals.len();
    let scaled = Mat::from_fn(n, n, |i, j| v[(i, j)] * vals[j].max(0.0).sqrt());
    Ok(&scaled * v.transpose())
}

/// `L = [Q^{1/2} Y; R^{1/2} U]`, so that `LᵀL = YᵀQY + UᵀRU`.
pub fn stacked_sqrt_factor(
    q: MatRef<'_, f64>,
    r: MatRef<'_, f64>,
    y: MatRef<'_, f64>,
    u: MatRef<'_, f64>,
) -> Result<Matrix> {
    if q.nrows() != y.nrows() || r.nrows() != u.nrows() || y.ncols() != u.ncols() {
        return Err(LinalgError::Dimension(format!(
            "Q {}x{}, R {}x{}, Y {}x{}, U {}x{}",
            q.nrows(),
            q.ncols(),
            r.nrows(),
            r.ncols(),
            y.nrows(),
            y.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    check_weight(q, false, "Q")?;
    check_weight(r, true, "R")?;
    let top = sym_sqrt(q)? * y;
    let bottom = sym_sqrt(r)? * u;
    vstack(&[top.as_ref(), bottom.as_ref()])
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: MatRef<'_, f64>) -> Result<f64> {
    ensure_finite(m)?;
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Dimension("spectral radius of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = m.eigenvalues().map_err(|_| LinalgError::EigFailed)?;
    Ok(ev.iter().map(|z| z.re.hypot(z.im)).fold(0.0, f64::max))
}

/// Solves the square system `m x = rhs` by LU with partial pivoting.
pub fn solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Result<Matrix> {
    use faer::linalg::solvers::Solve;
    if m.nrows() != m.ncols() || rhs.nrows() != m.nrows() {
        return Err(LinalgError::Dimension("solve needs a square system".into()));
    }
    let x = m.partial_piv_lu().solve(rhs);
    ensure_finite(x.as_ref())?;
    Ok(x)
}

/// Solves `m x = rhs` for symmetric positive definite `m` by Cholesky.
pub fn spd_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Result<Matrix> {
    use faer::linalg::solvers::Solve;
    if m.nrows() != m.ncols() || rhs.nrows() != m.nrows() {
        return Err(LinalgError::Dimension("spd_solve needs a square system".into()));
    }
    let llt = m
        .llt(Side::Lower)
        .map_err(|_| LinalgError::InvalidWeight("matrix is not positive definite".into()))?;
    let x = llt.solve(rhs);
    ensure_finite(x.as_ref())?;
    Ok(x)
}

/// Explicit inverse by LU; only for studies that need the fragile path.
pub fn inverse(m: MatRef<'_, f64>) -> Result<Matrix> {
    use faer::linalg::solvers::DenseSolveCore;
    if m.nrows() != m.ncols() {
        return Err(LinalgError::Dimension("inverse of a non-square matrix".into()));
    }
    let inv = m.partial_piv_lu().inverse();
    ensure_finite(inv.as_ref())?;
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        from_row_major(rows, cols, v).unwrap()
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Mat::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        let z = Mat::<f64>::zeros(2, 3);
        let p = pinv(z.as_ref(), DEFAULT_TOL).unwrap();
        assert_eq!((p.nrows(), p.ncols()), (3, 2));
        assert_eq!(p.norm_l2(), 0.0);
    }

    #[test]
    fn pinv_diagonal() {
        let p = pinv(mat(2, 2, &[2.0, 0.0, 0.0, 0.0]).as_ref(), DEFAULT_TOL).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(p[(0, 1)], 0.0);
    }

    #[test]
    fn penrose_conditions_random() {
        let m = lcg_matrix(3, 5, 7);
        let x = pinv(m.as_ref(), DEFAULT_TOL).unwrap();
        let mx = &m * &x;
        let xm = &x * &m;
        assert!((&mx * &m - &m).norm_l2() <= 1e-8 * m.norm_l2());
        assert!((&xm * &x - &x).norm_l2() <= 1e-8 * x.norm_l2());
        assert!((mx.transpose() - &mx).norm_l2() <= 1e-8);
        assert!((xm.transpose() - &xm).norm_l2() <= 1e-8);
    }

    #[test]
    fn pinv_eps_truncates_absolutely() {
        let p = pinv_eps(mat(2, 2, &[3.0, 0.0, 0.0, 1e-9]).as_ref(), 1e-6).unwrap();
        assert!((p[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p[(1, 1)], 0.0);
        let i4 = Mat::<f64>::identity(4, 4);
        assert!((pinv_eps(i4.as_ref(), 1e-6).unwrap() - &i4).norm_l2() < 1e-14);
        assert!(pinv_eps(i4.as_ref(), 0.0).is_err());
    }

    #[test]
    fn pinv_eps_small_matches_plain_inverse() {
        let m = lcg_matrix(5, 5, 3);
        let a = pinv_eps(m.as_ref(), 1e-300).unwrap();
        let b = pinv(m.as_ref(), 0.0).unwrap();
        assert!((a - &b).norm_l2() <= 1e-12 * b.norm_l2());
    }

    #[test]
    fn kernel_of_rank_one_diagonal() {
        let k = kernel_basis(mat(2, 2, &[1.0, 0.0, 0.0, 0.0]).as_ref(), DEFAULT_TOL).unwrap();
        assert_eq!(k.ncols(), 1);
        assert!((k[(1, 0)].abs() - 1.0).abs() < 1e-15);
        assert!(k[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn kernel_of_wide_and_square() {
        let m = lcg_matrix(3, 7, 11);
        let k = kernel_basis(m.as_ref(), DEFAULT_TOL).unwrap();
        assert_eq!(k.ncols(), 4);
        assert!((&m * &k).norm_l2() <= 1e-8);
        let ktk = k.transpose() * &k;
        assert!((ktk - Mat::<f64>::identity(4, 4)).norm_l2() <= 1e-10);
        let sq = lcg_matrix(4, 4, 5);
        assert_eq!(kernel_basis(sq.as_ref(), DEFAULT_TOL).unwrap().ncols(), 0);
    }

    #[test]
    fn sqrt_factor_reductions() {
        let u = lcg_matrix(3, 6, 2);
        let y = lcg_matrix(2, 6, 9);
        let q0 = Mat::<f64>::zeros(2, 2);
        let r = Mat::<f64>::identity(3, 3);
        let l = stacked_sqrt_factor(q0.as_ref(), r.as_ref(), y.as_ref(), u.as_ref()).unwrap();
        assert!((l.transpose() * &l - u.transpose() * &u).norm_l2() < 1e-12);

        let i = Mat::<f64>::identity(3, 3);
        let l = stacked_sqrt_factor(i.as_ref(), i.as_ref(), i.as_ref(), i.as_ref()).unwrap();
        let expect = vstack(&[i.as_ref(), i.as_ref()]).unwrap();
        assert!((l - expect).norm_l2() < 1e-14);
    }

    #[test]
    fn sqrt_factor_random_weights() {
        let g = lcg_matrix(4, 4, 21);
        let q = &g * g.transpose();
        let h = lcg_matrix(3, 3, 22);
        let r = &h * h.transpose() + Mat::<f64>::identity(3, 3);
        let y = lcg_matrix(4, 8, 23);
        let u = lcg_matrix(3, 8, 24);
        let l = stacked_sqrt_factor(q.as_ref(), r.as_ref(), y.as_ref(), u.as_ref()).unwrap();
        let yqy = y.transpose() * &q * &y;
        let uru = u.transpose() * &r * &u;
        let resid = (l.transpose() * &l - &yqy - &uru).norm_l2();
        assert!(resid <= 1e-8 * (yqy.norm_l2() + uru.norm_l2()));
    }

    #[test]
    fn sqrt_factor_rejects_singular_r() {
        let q = Mat::<f64>::zeros(1, 1);
        let r = mat(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let y = Mat::<f64>::zeros(1, 3);
        let u = Mat::<f64>::zeros(2, 3);
        let err = stacked_sqrt_factor(q.as_ref(), r.as_ref(), y.as_ref(), u.as_ref());
        assert!(matches!(err, Err(LinalgError::InvalidWeight(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(from_row_major(1, 2, &[1.0, f64::NAN]).unwrap_err(), LinalgError::NonFinite);
        let m = Mat::from_fn(2, 2, |i, j| if i == j { f64::INFINITY } else { 0.0 });
        assert!(pinv(m.as_ref(), DEFAULT_TOL).is_err());
    }

    #[test]
    fn spectral_radius_of_rotation() {
        let m = mat(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        assert!((spectral_radius(m.as_ref()).unwrap() - 2.0).abs() < 1e-12);
    }
}
