//! Data-driven controls computed from experiment records alone.
//!
//! Every routine returns the input in reverse-time stacking together with
//! rank and residual diagnostics, so suboptimal-but-feasible regimes can be
//! told apart from exact recovery without access to the model.

use faer::{Col, MatRef};

use crate::error::{Error, Result};
use crate::experiments::{DataMatrices, NoiseSpec};
use crate::linalg::{self, Matrix, Vector};
use crate::network::{ControlSequence, Weight};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Rank of `U`; not computed by the approximate formulas, which never factor `U`.
    pub rank_u: Option<usize>,
    pub rank_yt: usize,
    pub kernel_dim: usize,
    /// `|YT alpha - y_f|`, or the analogous endpoint residual on the recorded data.
    pub residual: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct DDSolution {
    pub u: ControlSequence,
    pub alpha: Option<Vector>,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub eta: f64,
    /// Right-hand side of the bound; infinite when `eta >= 1`.
    pub bound: f64,
    pub sigma_min_ct: f64,
    pub kappa_ct: f64,
    pub delta: f64,
}

impl BoundReport {
    pub fn is_vacuous(&self) -> bool {
        !self.bound.is_finite()
    }
}

fn col(v: &Vector) -> MatRef<'_, f64> {
    v.as_mat()
}

fn first_col(m: Matrix) -> Vector {
    m.col(0).to_owned()
}

fn check_target(data: &DataMatrices, y_f: &Vector) -> Result<()> {
    if y_f.nrows() != data.p {
        return Err(Error::Dimension(format!("target has {} entries, outputs have {}", y_f.nrows(), data.p)));
    }
    linalg::ensure_finite(y_f.as_mat())?;
    Ok(())
}

fn require_full_row_rank(rank: usize, p: usize, what: &'static str) -> Result<()> {
    if rank < p {
        return Err(Error::RankDeficient {
            what,
            rank,
            required: p,
        });
    }
    Ok(())
}

fn finish(data: &DataMatrices, alpha: Option<Vector>, u: Vector, mut diag: Diagnostics, y_f: &Vector) -> Result<DDSolution> {
    if let Some(a) = &alpha {
        diag.residual = (&data.yt * a - y_f).norm_l2();
    }
    Ok(DDSolution {
        u: ControlSequence::from_stacked(u, data.m)?,
        alpha,
        diagnostics: diag,
    })
}

fn weights_match(data: &DataMatrices, q: &Weight, r: &Weight) -> Result<()> {
    if q.dim() != data.ymid.nrows() || r.dim() != data.u.nrows() {
        return Err(Error::Dimension(format!(
            "weights Q {} / R {} against Ymid {} / U {} rows",
            q.dim(),
            r.dim(),
            data.ymid.nrows(),
            data.u.nrows()
        )));
    }
    q.validate(false, "Q")?;
    r.validate(true, "R")?;
    Ok(())
}

/// `L = [Q^{1/2} Ymid; R^{1/2} U]`; the top block is dropped when `Q = 0`.
pub fn stacked_factor(data: &DataMatrices, q: &Weight, r: &Weight) -> Result<Matrix> {
    weights_match(data, q, r)?;
    let bottom = r.sqrt()?.apply(data.u.as_ref());
    if q.is_zero() {
        return Ok(bottom);
    }
    let top = q.sqrt()?.apply(data.ymid.as_ref());
    Ok(linalg::vstack(&[top.as_ref(), bottom.as_ref()])?)
}

fn rank_of(m: &Matrix, tol: f64) -> Result<usize> {
    Ok(linalg::rank(m.as_ref(), tol)?)
}

/// General data-driven control `U (I - K (L K)† L) YT† y_f`.
pub fn dd_optimal(data: &DataMatrices, q: &Weight, r: &Weight, y_f: &Vector, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let l = stacked_factor(data, q, r)?;
    let (k, a, rank_yt) = linalg::kernel_and_solve(data.yt.as_ref(), col(y_f), tol)?;
    require_full_row_rank(rank_yt, data.p, "YT")?;
    let a = first_col(a);
    let alpha = if k.ncols() == 0 {
        a
    } else {
        let lk = &l * &k;
        let la = &l * &a;
        let beta = linalg::pinv_solve_scaled(lk.as_ref(), col(&la), tol, l.norm_l2())?;
        &a - &k * beta.col(0)
    };
    let diag = Diagnostics {
        rank_u: Some(rank_of(&data.u, tol)?),
        rank_yt,
        kernel_dim: k.ncols(),
        ..Default::default()
    };
    let u = &data.u * &alpha;
    finish(data, Some(alpha), u, diag, y_f)
}

/// Variant for experiments with measured initial states `X0`, steering from rest:
/// `U K0 (I - Kz (L K0 Kz)† L K0) (YT K0)† y_f`, `K0 = Ker X0`, `Kz = Ker(YT K0)`.
pub fn dd_optimal_x0(data: &DataMatrices, q: &Weight, r: &Weight, y_f: &Vector, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let x0 = data
        .x0
        .as_ref()
        .ok_or_else(|| Error::Invalid("initial states X0 are required".into()))?;
    let l = stacked_factor(data, q, r)?;
    let k0 = linalg::kernel_basis(x0.as_ref(), tol)?;
    let z = &data.yt * &k0;
    let (kz, a, rank_z) = linalg::kernel_and_solve(z.as_ref(), col(y_f), tol)?;
    require_full_row_rank(rank_z, data.p, "YT K_X0")?;
    let a = first_col(a);
    let inner = if kz.ncols() == 0 {
        a
    } else {
        let lk0 = &l * &k0;
        let m = &lk0 * &kz;
        let la = &lk0 * &a;
        let beta = linalg::pinv_solve_scaled(m.as_ref(), col(&la), tol, l.norm_l2())?;
        &a - &kz * beta.col(0)
    };
    let alpha = &k0 * &inner;
    let diag = Diagnostics {
        rank_u: Some(rank_of(&data.u, tol)?),
        rank_yt: rank_z,
        kernel_dim: kz.ncols(),
        ..Default::default()
    };
    let u = &data.u * &alpha;
    finish(data, Some(alpha), u, diag, y_f)
}

/// How the from-state solver damps directions of `L` that the data barely excite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateRegularization {
    /// Least squares over `Ker [X0; YT]` with singular values of `L K` below
    /// `proj_tol * sigma_max` dropped.
    Truncated { proj_tol: f64 },
    /// Minimizes `|L alpha|^2 + lambda |alpha|^2` with
    /// `lambda = rel * trace(L^T L) / N`; one Cholesky of an `N x N` matrix.
    Ridge { rel: f64 },
}

/// Steers from a measured start state `x_start` to `y_f` using experiments
/// with recorded `X0`: minimizes `|L alpha|` subject to `X0 alpha = x_start`,
/// `YT alpha = y_f`, regularized as requested.
pub fn dd_optimal_from_state(
    data: &DataMatrices,
    q: &Weight,
    r: &Weight,
    x_start: &Vector,
    y_f: &Vector,
    tol: f64,
    reg: StateRegularization,
) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let x0 = data
        .x0
        .as_ref()
        .ok_or_else(|| Error::Invalid("initial states X0 are required".into()))?;
    if x_start.nrows() != x0.nrows() {
        return Err(Error::Dimension(format!("start state has {} entries, X0 has {} rows", x_start.nrows(), x0.nrows())));
    }
    let l = stacked_factor(data, q, r)?;
    let cons = linalg::vstack(&[x0.as_ref(), data.yt.as_ref()])?;
    let n = x0.nrows();
    let rhs = Col::from_fn(n + data.p, |i| if i < n { x_start[i] } else { y_f[i - n] });
    let mut diag = Diagnostics::default();
    let alpha = match reg {
        StateRegularization::Truncated { proj_tol } => {
            let (k, a, rank_c) = linalg::kernel_and_solve(cons.as_ref(), col(&rhs), tol)?;
            let a = first_col(a);
            diag.rank_yt = rank_c;
            diag.kernel_dim = k.ncols();
            if k.ncols() == 0 {
                a
            } else {
                let lk = &l * &k;
                let la = &l * &a;
                let beta = linalg::pinv_solve_scaled(lk.as_ref(), col(&la), proj_tol, l.norm_l2())?;
                &a - &k * beta.col(0)
            }
        }
        StateRegularization::Ridge { rel } => {
            if !(rel > 0.0) || !rel.is_finite() {
                return Err(Error::Invalid(format!("ridge factor must be positive, got {rel}")));
            }
            let samples = data.samples();
            let mut gram = l.transpose() * &l;
            let lambda = rel * (0..samples).map(|i| gram[(i, i)]).sum::<f64>() / samples as f64;
            let lambda = if lambda > 0.0 { lambda } else { rel };
            for i in 0..samples {
                gram[(i, i)] += lambda;
            }
            let z = linalg::spd_solve(gram.as_ref(), cons.transpose())?;
            // The Schur complement spans scales from 1 to 1/λ, so it is factored
            // rather than truncated; truncation is only the fallback when it is singular.
            let s = linalg::symmetrize((&cons * &z).as_ref());
            let rank_c = rank_of(&cons, tol)?;
            diag.rank_yt = rank_c;
            diag.kernel_dim = samples - rank_c;
            let w = match linalg::spd_solve(s.as_ref(), col(&rhs)) {
                Ok(w) => w,
                Err(_) => linalg::pinv_solve(s.as_ref(), col(&rhs), tol)?,
            };
            &z * w.col(0)
        }
    };
    let cons_resid = (&cons * &alpha - &rhs).norm_l2();
    if cons_resid > 1e-6 * rhs.norm_l2().max(1.0) {
        diag.warnings.push(format!("start/target constraints only met to {cons_resid:e}"));
    }
    let u = &data.u * &alpha;
    let mut sol = finish(data, Some(alpha), u, diag, y_f)?;
    sol.diagnostics.residual = cons_resid;
    Ok(sol)
}

/// Compact minimum-energy control `(YT U†)† y_f`.
pub fn dd_min_energy(data: &DataMatrices, y_f: &Vector, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let rank_yt = rank_of(&data.yt, tol)?;
    require_full_row_rank(rank_yt, data.p, "YT")?;
    let fu = linalg::svd(data.u.as_ref())?;
    let rank_u = fu.rank(tol);
    let p = &data.yt * fu.pinv_rank(rank_u);
    let u = first_col(linalg::pinv_solve(p.as_ref(), col(y_f), tol)?);
    let diag = Diagnostics {
        rank_u: Some(rank_u),
        rank_yt,
        kernel_dim: data.samples() - rank_yt,
        residual: (&p * &u - y_f).norm_l2(),
        ..Default::default()
    };
    finish(data, None, u, diag, y_f)
}

/// Long form `(I - U K (U K)†) U YT† y_f` with `K = Ker YT`.
pub fn dd_min_energy_long_form(data: &DataMatrices, y_f: &Vector, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let (k, a, rank_yt) = linalg::kernel_and_solve(data.yt.as_ref(), col(y_f), tol)?;
    require_full_row_rank(rank_yt, data.p, "YT")?;
    let a = first_col(a);
    let u0 = &data.u * &a;
    let u = if k.ncols() == 0 {
        u0
    } else {
        let uk = &data.u * &k;
        let proj = &uk * linalg::pinv_solve_scaled(uk.as_ref(), col(&u0), tol, data.u.norm_l2())?;
        &u0 - proj.col(0)
    };
    let diag = Diagnostics {
        rank_u: Some(rank_of(&data.u, tol)?),
        rank_yt,
        kernel_dim: k.ncols(),
        ..Default::default()
    };
    let mut sol = finish(data, None, u, diag, y_f)?;
    sol.diagnostics.residual = (&data.yt * &a - y_f).norm_l2();
    Ok(sol)
}

/// Approximate minimum-energy control `U YT† y_f`.
pub fn dd_min_energy_approx(data: &DataMatrices, y_f: &Vector, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let f = linalg::svd(data.yt.as_ref())?;
    let rank_yt = f.rank(tol);
    require_full_row_rank(rank_yt, data.p, "YT")?;
    let alpha = first_col(f.pinv_apply(rank_yt, col(y_f)));
    let u = &data.u * &alpha;
    let diag = Diagnostics {
        rank_yt,
        kernel_dim: data.samples() - rank_yt,
        ..Default::default()
    };
    finish(data, Some(alpha), u, diag, y_f)
}

fn shifted_gram(x: &Matrix, shift: f64) -> Matrix {
    let mut g = x * x.transpose();
    for i in 0..g.nrows() {
        g[(i, i)] -= shift;
    }
    linalg::symmetrize(g.as_ref())
}

fn indefinite_warning(g: &Matrix, name: &str, diag: &mut Diagnostics) -> Result<()> {
    let (vals, _) = linalg::sym_eigen(g.as_ref())?;
    let lo = vals.first().copied().unwrap_or(0.0);
    let hi = vals.last().copied().unwrap_or(0.0).abs();
    if lo < -1e-10 * hi.max(1.0) {
        diag.warnings.push(format!("corrected {name} Gram is indefinite (min eigenvalue {lo:e})"));
    }
    Ok(())
}

fn too_few_samples(data: &DataMatrices, diag: &mut Diagnostics) {
    if data.samples() <= data.u.nrows() {
        diag.warnings.push(format!(
            "N = {} does not exceed mT = {}; noise correction is unreliable",
            data.samples(),
            data.u.nrows()
        ));
    }
}

/// Input-noise corrected compact control `(YT Uᵀ (U Uᵀ - N σ_U² I)†)† y_f`.
pub fn dd_min_energy_corrected(data: &DataMatrices, y_f: &Vector, sigma_u2: f64, tol: f64) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let rank_yt = rank_of(&data.yt, tol)?;
    require_full_row_rank(rank_yt, data.p, "YT")?;
    let mut diag = Diagnostics {
        rank_yt,
        kernel_dim: data.samples() - rank_yt,
        ..Default::default()
    };
    too_few_samples(data, &mut diag);
    let g = shifted_gram(&data.u, data.samples() as f64 * sigma_u2);
    indefinite_warning(&g, "input", &mut diag)?;
    let fg = linalg::svd(g.as_ref())?;
    let rank_g = fg.rank(tol);
    diag.rank_u = Some(rank_g);
    let p = &data.yt * data.u.transpose() * fg.pinv_rank(rank_g);
    let u = first_col(linalg::pinv_solve(p.as_ref(), col(y_f), tol)?);
    diag.residual = (&p * &u - y_f).norm_l2();
    finish(data, None, u, diag, y_f)
}

/// Output-noise corrected approximate control `U YTᵀ (YT YTᵀ - N σ_YT² I)† y_f`.
pub fn dd_min_energy_approx_corrected(
    data: &DataMatrices,
    y_f: &Vector,
    sigma_yt2: f64,
    tol: f64,
) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let mut diag = Diagnostics::default();
    let gy = shifted_gram(&data.yt, data.samples() as f64 * sigma_yt2);
    indefinite_warning(&gy, "output", &mut diag)?;
    let w = linalg::pinv_solve(gy.as_ref(), col(y_f), tol)?;
    diag.rank_yt = rank_of(&gy, tol)?;
    diag.kernel_dim = data.samples().saturating_sub(diag.rank_yt);
    let alpha = data.yt.transpose() * w.col(0);
    let u = &data.u * &alpha;
    finish(data, Some(alpha), u, diag, y_f)
}

/// Default absolute truncation level: `1e-6 * trace(G) / dim(G)`.
pub fn default_eps(g: &Matrix) -> f64 {
    let d = g.nrows().max(1);
    let tr: f64 = (0..g.nrows()).map(|i| g[(i, i)]).sum();
    (1e-6 * tr.abs() / d as f64).max(f64::MIN_POSITIVE)
}

/// Pieces shared by the fully corrected estimators: with `G = YT YTᵀ - N σ_YT² I`,
/// `a = YTᵀ G† y_f` is never formed; only the Gram products enter.
struct CorrectedParts {
    gy_pinv: Matrix,
    rank_gy: usize,
}

fn corrected_output_gram(data: &DataMatrices, sigma_yt2: f64, tol: f64, diag: &mut Diagnostics) -> Result<CorrectedParts> {
    let gy = shifted_gram(&data.yt, data.samples() as f64 * sigma_yt2);
    indefinite_warning(&gy, "output", diag)?;
    let f = linalg::svd(gy.as_ref())?;
    let rank_gy = f.rank(tol);
    Ok(CorrectedParts {
        gy_pinv: f.pinv_rank(rank_gy),
        rank_gy,
    })
}

/// Fully corrected long-form minimum-energy control
/// `(I - U Π Uᵀ (U Π Uᵀ - N σ_U² I)†_ε) U YTᵀ (YT YTᵀ - N σ_YT² I)† y_f`,
/// `Π = I - YTᵀ (YT YTᵀ - N σ_YT² I)† YT`.
pub fn dd_min_energy_full_corrected(
    data: &DataMatrices,
    y_f: &Vector,
    sigma_u2: f64,
    sigma_yt2: f64,
    eps: Option<f64>,
    tol: f64,
) -> Result<DDSolution> {
    check_target(data, y_f)?;
    let mut diag = Diagnostics::default();
    too_few_samples(data, &mut diag);
    let parts = corrected_output_gram(data, sigma_yt2, tol, &mut diag)?;
    diag.rank_yt = parts.rank_gy;
    diag.kernel_dim = data.samples().saturating_sub(parts.rank_gy);
    let uyt = &data.u * data.yt.transpose();
    let u0 = &uyt * (&parts.gy_pinv * y_f);
    let upu = &data.u * data.u.transpose() - &uyt * &parts.gy_pinv * uyt.transpose();
    let mut mc = upu.clone();
    let shift = data.samples() as f64 * sigma_u2;
    for i in 0..mc.nrows() {
        mc[(i, i)] -= shift;
    }
    let mc = linalg::symmetrize(mc.as_ref());
    let eps = eps.unwrap_or_else(|| default_eps(&mc));
    let corr = &upu * (linalg::pinv_eps(mc.as_ref(), eps)? * &u0);
    let u = &u0 - &corr;
    diag.rank_u = Some(rank_of(&data.u, tol)?);
    finish(data, None, u, diag, y_f)
}

/// Noise-corrected general control. With `G = YT YTᵀ - N σ_YT² I` and
/// `Π = I - YTᵀ G† YT`, returns
/// `U a - U Π Lᵀ (L Π Lᵀ - diag(N σ_Y² Q, N σ_U² R))†_ε L a`, `a = YTᵀ G† y_f`.
pub fn dd_optimal_corrected(
    data: &DataMatrices,
    q: &Weight,
    r: &Weight,
    y_f: &Vector,
    noise: &NoiseSpec,
    eps: Option<f64>,
    tol: f64,
) -> Result<DDSolution> {
    check_target(data, y_f)?;
    noise.validate()?;
    let l = stacked_factor(data, q, r)?;
    let mut diag = Diagnostics::default();
    too_few_samples(data, &mut diag);
    let parts = corrected_output_gram(data, noise.sigma_yt2, tol, &mut diag)?;
    diag.rank_yt = parts.rank_gy;
    diag.kernel_dim = data.samples().saturating_sub(parts.rank_gy);
    let nf = data.samples() as f64;
    let ytl = &data.yt * l.transpose();
    let uyt = &data.u * data.yt.transpose();
    let w = &parts.gy_pinv * y_f;
    let u0 = &uyt * &w;
    let la = ytl.transpose() * &w;
    let upl = &data.u * l.transpose() - &uyt * &parts.gy_pinv * &ytl;
    let mut mc = &l * l.transpose() - ytl.transpose() * &parts.gy_pinv * &ytl;
    let top = if q.is_zero() { 0 } else { q.dim() };
    if top > 0 && noise.sigma_y2 > 0.0 {
        let qd = q.to_dense();
        let mut blk = mc.as_mut().submatrix_mut(0, 0, top, top);
        for j in 0..top {
            for i in 0..top {
                blk[(i, j)] -= nf * noise.sigma_y2 * qd[(i, j)];
            }
        }
    }
    if noise.sigma_u2 > 0.0 {
        let rd = r.to_dense();
        let k = r.dim();
        let mut blk = mc.as_mut().submatrix_mut(top, top, k, k);
        for j in 0..k {
            for i in 0..k {
                blk[(i, j)] -= nf * noise.sigma_u2 * rd[(i, j)];
            }
        }
    }
    let mc = linalg::symmetrize(mc.as_ref());
    let eps = eps.unwrap_or_else(|| default_eps(&mc));
    let corr = &upl * (linalg::pinv_eps(mc.as_ref(), eps)? * &la);
    let u = &u0 - &corr;
    diag.rank_u = Some(rank_of(&data.u, tol)?);
    finish(data, None, u, diag, y_f)
}

/// Non-asymptotic bound on `|u* - U YT† y_f|` for standard Gaussian inputs:
/// `eta = sqrt(mT/N) + sqrt(2 ln(1/delta)/N)` and
/// `bound = 3 max(eta, eta²)/σ_min(C_T) (1 + (1+eta)/(1-eta) κ²(C_T)) |y_f|`.
pub fn sample_bound(ct: MatRef<'_, f64>, samples: usize, delta: f64, y_f: &Vector) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) || samples == 0 {
        return Err(Error::Invalid(format!("need 0 < delta < 1 and N >= 1 (got {delta}, {samples})")));
    }
    let p = ct.nrows();
    let s = linalg::singular_values(ct)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&x| x > linalg::DEFAULT_TOL * smax).count();
    if rank < p || p == 0 {
        return Err(Error::NotTargetControllable(format!("rank(C_T) = {rank} < p = {p}")));
    }
    let sigma_min = s[p - 1];
    let kappa = smax / sigma_min;
    let nf = samples as f64;
    let eta = (ct.ncols() as f64 / nf).sqrt() + (2.0 * (1.0 / delta).ln() / nf).sqrt();
    let bound = if eta >= 1.0 {
        f64::INFINITY
    } else {
        3.0 * eta.max(eta * eta) / sigma_min * (1.0 + (1.0 + eta) / (1.0 - eta) * kappa * kappa) * y_f.norm_l2()
    };
    Ok(BoundReport {
        eta,
        bound,
        sigma_min_ct: sigma_min,
        kappa_ct: kappa,
        delta,
    })
}

/// Minimum-energy weights `Q = 0`, `R = I` sized for `data`.
pub fn min_energy_weights(data: &DataMatrices) -> (Weight, Weight) {
    (Weight::scaled(data.ymid.nrows(), 0.0), Weight::scaled(data.u.nrows(), 1.0))
}
