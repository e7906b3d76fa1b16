#![allow(dead_code)]

use faer::{Col, Mat};
use netctl_core::network::{hankel_blocks, output_ctrb_matrix, ControlProblem, ControlSequence, LinearNetwork};
use netctl_core::{graphs, linalg, seed, Vector};

/// Dense KKT solve of the constrained quadratic program, independent of the library's solvers.
pub fn kkt(net: &LinearNetwork, prob: &ControlProblem) -> ControlSequence {
    let (m, p, t) = (net.m(), net.p(), prob.t);
    let ct = output_ctrb_matrix(net, t);
    let h = hankel_blocks(net, t);
    let hess = h.transpose() * prob.q.to_dense() * &h + prob.r.to_dense();
    let d = m * t;
    let k = Mat::from_fn(d + p, d + p, |i, j| match (i < d, j < d) {
        (true, true) => 2.0 * hess[(i, j)],
        (true, false) => ct[(j - d, i)],
        (false, true) => ct[(i - d, j)],
        (false, false) => 0.0,
    });
    let rhs = Col::from_fn(d + p, |i| if i < d { 0.0 } else { prob.y_f[i - d] });
    let z = linalg::solve(k.as_ref(), rhs.as_mat()).unwrap();
    ControlSequence::from_stacked(Col::from_fn(d, |i| z[(i, 0)]), m).unwrap()
}

pub fn net(n: usize, m: usize, p: usize, s: u64) -> LinearNetwork {
    let spec = graphs::GraphSpec::new(n, ((n as f64).ln() / n as f64 + 0.1).min(1.0), true, s).unwrap();
    let mut rng = seed::rng_at(s, &[1]);
    graphs::random_network(&spec, m, Some(p), &mut rng).unwrap().0
}

pub fn target(p: usize, s: u64) -> Vector {
    let mut rng = seed::rng_at(s, &[2]);
    netctl_core::experiments::gaussian(p, 1, 1.0, &mut rng).col(0).to_owned()
}

pub fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm_l2() / b.norm_l2().max(1e-300)
}
