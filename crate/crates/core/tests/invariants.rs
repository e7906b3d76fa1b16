mod common;

use faer::Mat;
use netctl_core::ddcontrol;
use netctl_core::experiments::{random_inputs, run_episodic};
use netctl_core::linalg::{self, DEFAULT_TOL};
use netctl_core::network::{self, output_ctrb_matrix, simulate, ControlSequence};
use netctl_core::seed;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, s: u64) -> netctl_core::Matrix {
    netctl_core::experiments::gaussian(rows, cols, 1.0, &mut seed::rng(s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pinv_satisfies_penrose(rows in 1usize..8, cols in 1usize..8, rank_cut in 0usize..3, s in any::<u64>()) {
        let k = rows.min(cols).saturating_sub(rank_cut).max(1);
        let m = matrix(rows, k, s) * matrix(k, cols, s ^ 1);
        let x = linalg::pinv(m.as_ref(), DEFAULT_TOL).unwrap();
        let scale = m.norm_l2().max(1.0);
        prop_assert!((&m * &x * &m - &m).norm_l2() <= 1e-8 * scale);
        prop_assert!((&x * &m * &x - &x).norm_l2() <= 1e-8 * x.norm_l2().max(1.0));
        let mx = &m * &x;
        let xm = &x * &m;
        prop_assert!((&mx - mx.transpose()).norm_l2() <= 1e-8);
        prop_assert!((&xm - xm.transpose()).norm_l2() <= 1e-8);
    }

    #[test]
    fn final_outputs_are_ctrb_times_stacked_inputs(n in 3usize..12, m in 1usize..3, t in 1usize..6, s in any::<u64>()) {
        let p = n.min(3);
        let net = common::net(n, m, p, s);
        let mut rng = seed::rng(s);
        let u = random_inputs(m, t, 4, &mut rng);
        let data = run_episodic(&net, &u, t).unwrap();
        let ct = output_ctrb_matrix(&net, t);
        prop_assert!((&ct * &data.u - &data.yt).norm_l2() <= 1e-9 * data.yt.norm_l2().max(1.0));
        let seq = ControlSequence::from_stacked(data.u.col(0).to_owned(), m).unwrap();
        let traj = simulate(&net, &seq, &faer::Col::zeros(n)).unwrap();
        prop_assert!((traj.final_output() - data.yt.col(0)).norm_l2() <= 1e-9 * traj.final_output().norm_l2().max(1.0));
    }

    #[test]
    fn compact_min_energy_reaches_target(n in 6usize..16, s in any::<u64>()) {
        let (m, p, t) = (2, 3, 5);
        let net = common::net(n, m, p, s);
        let ct = output_ctrb_matrix(&net, t);
        prop_assume!(linalg::rank(ct.as_ref(), 1e-6).unwrap() == p);
        let mut rng = seed::rng(s ^ 7);
        let data = run_episodic(&net, &random_inputs(m, t, m * t, &mut rng), t).unwrap();
        let y_f = common::target(p, s);
        let sol = ddcontrol::dd_min_energy(&data, &y_f, DEFAULT_TOL).unwrap();
        prop_assert!((&ct * sol.u.stacked() - &y_f).norm_l2() <= 1e-6 * y_f.norm_l2());
        // The minimum-energy input lies in the row space of C_T.
        let proj = linalg::pinv(ct.as_ref(), DEFAULT_TOL).unwrap() * &ct;
        let u = sol.u.stacked();
        prop_assert!((&proj * u - u).norm_l2() <= 1e-6 * u.norm_l2().max(1e-12));
    }

    #[test]
    fn gramian_and_batch_agree_on_small_nets(n in 3usize..8, s in any::<u64>()) {
        let net = common::net(n, 1, 1, s);
        let t = n + 2;
        let y_f = common::target(1, s);
        let ct = output_ctrb_matrix(&net, t);
        prop_assume!(ct.norm_l2() > 1e-6);
        let a = network::model_based_min_energy_gramian(&net, t, &y_f).unwrap();
        let b = linalg::pinv(ct.as_ref(), DEFAULT_TOL).unwrap() * &y_f;
        prop_assert!(common::rel(a.stacked(), &b) < 1e-6);
    }
}

#[test]
fn reverse_time_stacking_convention() {
    // x(t+1) = x(t) + u(t), y = x: the last applied input occupies the top block.
    let net = netctl_core::network::LinearNetwork::new(Mat::identity(1, 1), Mat::identity(1, 1), Mat::identity(1, 1)).unwrap();
    let seq = ControlSequence::from_steps(&[vec![1.0], vec![10.0], vec![100.0]]).unwrap();
    assert_eq!(seq.stacked()[0], 100.0);
    let traj = simulate(&net, &seq, &faer::Col::zeros(1)).unwrap();
    assert_eq!(traj.final_output()[0], 111.0);
}
