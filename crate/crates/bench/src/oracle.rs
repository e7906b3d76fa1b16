//! Brute-force reference solution of the constrained quadratic program by a dense KKT solve.

use faer::{Col, Mat};
use netctl_core::linalg;
use netctl_core::network::{hankel_blocks, output_ctrb_matrix, ControlProblem, ControlSequence, LinearNetwork};
use netctl_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub u: ControlSequence,
    pub cost: f64,
    /// `|K z - rhs| / |rhs|` for the assembled system.
    pub residual: f64,
}

/// Solves `[2(HᵀQH + R), C_Tᵀ; C_T, 0] [u; λ] = [0; y_f]`.
pub fn oracle_kkt(net: &LinearNetwork, prob: &ControlProblem) -> Result<KktSolution> {
    let (m, p, t) = (net.m(), net.p(), prob.t);
    if prob.y_f.nrows() != p {
        return Err(Error::Dimension(format!("target has {} entries, network has {p} outputs", prob.y_f.nrows())));
    }
    let ct = output_ctrb_matrix(net, t);
    let h = hankel_blocks(net, t);
    let hess = h.transpose() * prob.q.to_dense() * &h + prob.r.to_dense();
    let d = m * t;
    let mut kkt = Mat::<f64>::zeros(d + p, d + p);
    for i in 0..d {
        for j in 0..d {
            kkt[(i, j)] = 2.0 * hess[(i, j)];
        }
        for k in 0..p {
            kkt[(i, d + k)] = ct[(k, i)];
            kkt[(d + k, i)] = ct[(k, i)];
        }
    }
    let rhs = Col::from_fn(d + p, |i| if i < d { 0.0 } else { prob.y_f[i - d] });
    // A singular system means the target constraint is rank deficient.
    let unreachable = |residual| Error::Unreachable {
        residual,
        target_norm: prob.y_f.norm_l2(),
    };
    let z = linalg::solve(kkt.as_ref(), rhs.as_mat()).map_err(|_| unreachable(f64::INFINITY))?;
    let residual = (&kkt * &z - rhs.as_mat()).norm_l2() / rhs.norm_l2().max(f64::MIN_POSITIVE);
    if residual > 1e-6 {
        return Err(unreachable(residual));
    }
    let u = ControlSequence::from_stacked(Col::from_fn(d, |i| z[(i, 0)]), m)?;
    let cost = prob.cost(net, &u)?;
    Ok(KktSolution { u, cost, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use netctl_core::network::model_based_optimal;
    use netctl_core::{graphs, seed};

    #[test]
    fn integrator_min_energy() {
        let net = LinearNetwork::new(Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)).unwrap();
        let prob = ControlProblem::min_energy(2, 1, Col::from_fn(1, |_| 1.0)).unwrap();
        let sol = oracle_kkt(&net, &prob).unwrap();
        assert!((sol.u.at(0)[0] - 0.5).abs() < 1e-12 && (sol.u.at(1)[0] - 0.5).abs() < 1e-12);
        assert!((sol.cost - 0.5).abs() < 1e-12);
    }

    #[test]
    fn delayed_integrator_uses_first_step() {
        // x1 = u, x2 = x1: only u(0) reaches y(2) = x2.
        let a = Mat::from_fn(2, 2, |i, j| if i == 1 && j == 0 { 1.0 } else { 0.0 });
        let b = Mat::from_fn(2, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let c = Mat::from_fn(1, 2, |_, j| if j == 1 { 1.0 } else { 0.0 });
        let net = LinearNetwork::new(a, b, c).unwrap();
        let prob = ControlProblem::min_energy(2, 1, Col::from_fn(1, |_| 1.0)).unwrap();
        let sol = oracle_kkt(&net, &prob).unwrap();
        assert!((sol.u.at(0)[0] - 1.0).abs() < 1e-12 && sol.u.at(1)[0].abs() < 1e-12);
        assert!((sol.cost - 1.0).abs() < 1e-12);
        assert!(sol.residual <= 1e-10);
    }

    #[test]
    fn agrees_with_batch_formula() {
        let mut compared = 0;
        for s in 0..100u64 {
            let mut rng = seed::rng(seed::derive(7, &[s]));
            let spec = graphs::GraphSpec::new(12, 0.3, true, s).unwrap();
            let (net, _) = graphs::random_network(&spec, 2, Some(3), &mut rng).unwrap();
            let y_f = Col::from_fn(3, |i| (i as f64 + 1.0) * if s % 2 == 0 { 1.0 } else { -0.5 });
            let prob = ControlProblem::scalar(4, 2, 1.0, 1.0, y_f).unwrap();
            let Ok(kkt) = oracle_kkt(&net, &prob) else {
                continue;
            };
            compared += 1;
            let batch = model_based_optimal(&net, &prob).unwrap();
            let diff = (kkt.u.stacked() - batch.stacked()).norm_l2();
            assert!(diff <= 1e-8 * kkt.u.stacked().norm_l2().max(1.0), "seed {s}: {diff:e}");
        }
        assert!(compared >= 50, "only {compared} reachable networks");
    }
}
