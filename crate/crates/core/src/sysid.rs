//! Subspace identification from full-state data and the identify-then-control baseline.

use faer::Mat;

use crate::error::{Error, Result};
use crate::experiments::DataMatrices;
use crate::linalg::{self, Matrix, Vector, DEFAULT_TOL};
use crate::network::{self, ControlSequence, LinearNetwork};

#[derive(Debug, Clone)]
pub struct IdentifiedModel {
    pub a_hat: Matrix,
    pub b_hat: Matrix,
    /// `|YT - Ĉ_T U|_F`.
    pub ctrb_residual: f64,
    /// `|Ĉ_right - Â Ĉ_left|_F`.
    pub shift_residual: f64,
    pub warnings: Vec<String>,
}

impl IdentifiedModel {
    pub fn network(&self) -> Result<LinearNetwork> {
        LinearNetwork::full_state(self.a_hat.clone(), self.b_hat.clone())
    }

    /// Network file text with a provenance header.
    pub fn to_text(&self) -> Result<String> {
        let mut out = format!(
            "# identified by subspace least squares\n# ctrb residual {:e}\n# shift residual {:e}\n",
            self.ctrb_residual, self.shift_residual
        );
        out.push_str(&self.network()?.to_text());
        Ok(out)
    }
}

fn require_full_state(data: &DataMatrices) -> Result<()> {
    if data.p != data.n {
        return Err(Error::Invalid(format!(
            "identification needs full-state outputs (p = n), got p = {} and n = {}; \
             with partial outputs the network matrix cannot be reconstructed exactly",
            data.p, data.n
        )));
    }
    Ok(())
}

/// `Ĉ_T = YT U†` and its fit residual.
pub fn estimate_ctrb_with_residual(data: &DataMatrices, tol: f64) -> Result<(Matrix, f64, usize)> {
    require_full_state(data)?;
    let f = linalg::svd(data.u.as_ref())?;
    let rank = f.rank(tol);
    if rank == 0 {
        return Err(Error::RankDeficient {
            what: "U",
            rank,
            required: 1,
        });
    }
    let ct = &data.yt * f.pinv_rank(rank);
    let resid = (&data.yt - &ct * &data.u).norm_l2();
    Ok((ct, resid, rank))
}

/// Least-squares controllability matrix estimate `YT U†`.
pub fn estimate_ctrb(data: &DataMatrices) -> Result<Matrix> {
    Ok(estimate_ctrb_with_residual(data, DEFAULT_TOL)?.0)
}

/// `B̂` is the first input block of `Ĉ_T`; `Â` solves the shifted-block least squares.
pub fn subspace_id(data: &DataMatrices) -> Result<IdentifiedModel> {
    subspace_id_with(data, DEFAULT_TOL)
}

/// [`subspace_id`] with an explicit pseudoinverse tolerance.
pub fn subspace_id_with(data: &DataMatrices, tol: f64) -> Result<IdentifiedModel> {
    let (m, t) = (data.m, data.t);
    if t < 2 {
        return Err(Error::Invalid("identification needs T >= 2".into()));
    }
    let (ct, ctrb_residual, rank_u) = estimate_ctrb_with_residual(data, tol)?;
    let mut warnings = Vec::new();
    if rank_u < m * t {
        warnings.push(format!("rank(U) = {rank_u} < mT = {}; estimates are not exact", m * t));
    }
    let n = ct.nrows();
    let b_hat = ct.as_ref().subcols(0, m).to_owned();
    let right = ct.as_ref().subcols(m, m * (t - 1));
    let left = ct.as_ref().subcols(0, m * (t - 1));
    let fl = linalg::svd(left)?;
    let rank_left = fl.rank(tol);
    if rank_left < n {
        warnings.push(format!("shifted block has rank {rank_left} < n = {n}; A is not identifiable"));
    }
    let a_hat = right * fl.pinv_rank(rank_left);
    let shift_residual = (right - &a_hat * left).norm_l2();
    Ok(IdentifiedModel {
        a_hat,
        b_hat,
        ctrb_residual,
        shift_residual,
        warnings,
    })
}

/// Rescales to `A / (ρ(A) + 0.01)` when the spectral radius is at least one.
pub fn stabilize(a_hat: &Matrix) -> Result<Matrix> {
    let rho = linalg::spectral_radius(a_hat.as_ref())?;
    if rho < 1.0 {
        return Ok(a_hat.clone());
    }
    let s = 1.0 / (rho + 0.01);
    Ok(Mat::from_fn(a_hat.nrows(), a_hat.ncols(), |i, j| a_hat[(i, j)] * s))
}

/// Identify `(Â, B̂)`, then apply the model-based minimum-energy input
/// `Ĉ_T† y_f` built from powers of the estimates. No reachability check is
/// made: a poor identification yields an input, not an error.
pub fn two_step_min_energy(data: &DataMatrices, y_f: &Vector) -> Result<ControlSequence> {
    two_step_min_energy_with(data, y_f, DEFAULT_TOL)
}

pub fn two_step_min_energy_with(data: &DataMatrices, y_f: &Vector, tol: f64) -> Result<ControlSequence> {
    let model = subspace_id_with(data, tol)?;
    let net = model.network()?;
    let ct = network::output_ctrb_matrix(&net, data.t);
    let u = linalg::pinv_solve(ct.as_ref(), y_f.as_mat(), tol)?;
    ControlSequence::from_stacked(u.col(0).to_owned(), data.m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(us: &[f64], ys: &[f64]) -> DataMatrices {
        let k = us.len();
        DataMatrices::new(
            Mat::from_fn(1, k, |_, j| us[j]),
            Mat::zeros(0, k),
            Mat::from_fn(1, k, |_, j| ys[j]),
            None,
            1,
            1,
        )
        .unwrap()
    }

    #[test]
    fn scalar_least_squares() {
        let us = [1.0, 2.0, -1.0];
        let ys = [2.1, 3.9, -2.2];
        let ct = estimate_ctrb(&scalar(&us, &ys)).unwrap();
        let expect: f64 = us.iter().zip(&ys).map(|(u, y)| u * y).sum::<f64>() / us.iter().map(|u| u * u).sum::<f64>();
        assert!((ct[(0, 0)] - expect).abs() < 1e-14);
    }

    #[test]
    fn partial_state_rejected() {
        let d = DataMatrices::new(Mat::zeros(2, 3), Mat::zeros(1, 3), Mat::zeros(1, 3), None, 2, 2).unwrap();
        assert!(matches!(subspace_id(&d), Err(Error::Invalid(_))));
    }

    #[test]
    fn stabilize_cases() {
        let a = Mat::from_fn(2, 2, |i, j| if i == j { [1.5, 0.1][i] } else { 0.0 });
        let s = stabilize(&a).unwrap();
        assert!((s[(0, 0)] - 1.5 / 1.51).abs() < 1e-14);
        assert!((s[(1, 1)] - 0.1 / 1.51).abs() < 1e-14);
        let half = Mat::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 });
        assert_eq!(stabilize(&half).unwrap(), half);
        let two = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 0.0 });
        let r = linalg::spectral_radius(stabilize(&two).unwrap().as_ref()).unwrap();
        assert!((r - 2.0 / 2.01).abs() < 1e-12);
    }
}
