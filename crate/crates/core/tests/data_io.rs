mod common;

use common::{kkt, net, rel, target};
use faer::Mat;
use netctl_core::ddcontrol;
use netctl_core::experiments::{self, random_inputs, run_episodic, DataMatrices};
use netctl_core::linalg::{self, DEFAULT_TOL};
use netctl_core::network::{ControlProblem, LinearNetwork};
use netctl_core::seed;

fn tmp(name: &str) -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("netctl-core-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn data_directory_round_trip() {
    let net = net(12, 2, 3, 1);
    let mut rng = seed::rng_at(1, &[9]);
    let data = run_episodic(&net, &random_inputs(2, 4, 11, &mut rng), 4).unwrap().with_seed(77);
    let dir = tmp("data");
    data.write_dir(&dir).unwrap();
    let back = DataMatrices::read_dir(&dir).unwrap();
    assert_eq!(back.meta(), data.meta());
    assert_eq!(back.u, data.u);
    assert_eq!(back.ymid, data.ymid);
    assert_eq!(back.yt, data.yt);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn network_text_round_trip() {
    let net = net(9, 2, 4, 2);
    let back = LinearNetwork::from_text(&net.to_text()).unwrap();
    assert_eq!(back.a(), net.a());
    assert_eq!(back.b(), net.b());
    assert_eq!(back.c(), net.c());
    let dir = tmp("net");
    let path = dir.join("net.txt");
    net.save(&path).unwrap();
    assert_eq!(LinearNetwork::load(&path).unwrap().a(), net.a());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sliding_window_single_trajectory_control() {
    let (n, m, p, t, len) = (8, 2, 3, 4, 150);
    let raw = net(n, m, p, 5);
    let rho = linalg::spectral_radius(raw.a()).unwrap();
    let net = raw.with_a(Mat::from_fn(n, n, |i, j| raw.a()[(i, j)] * 0.8 / rho)).unwrap();
    let mut rng = seed::rng_at(5, &[10]);
    let u_long = experiments::gaussian(m, len, 1.0, &mut rng);
    let mut x = experiments::gaussian(n, 1, 1.0, &mut rng);
    let mut x_long = Mat::<f64>::zeros(n, len);
    for k in 0..len {
        x_long.as_mut().subcols_mut(k, 1).copy_from(&x);
        x = net.a() * &x + net.b() * u_long.as_ref().subcols(k, 1);
    }
    let y_long = net.c() * &x_long;
    let data = experiments::sliding_window(u_long.as_ref(), y_long.as_ref(), Some(x_long.as_ref()), t, 1).unwrap();
    assert_eq!(data.samples(), len - t);
    let y_f = target(p, 5);
    let prob = ControlProblem::scalar(t, m, 1.0, 1.0, y_f.clone()).unwrap();
    let sol = ddcontrol::dd_optimal_x0(&data, &prob.q, &prob.r, &y_f, DEFAULT_TOL).unwrap();
    assert!(rel(sol.u.stacked(), kkt(&net, &prob).stacked()) < 1e-6);
}

#[test]
fn sliding_window_rejects_short_trajectories() {
    let u = Mat::<f64>::zeros(1, 3);
    let y = Mat::<f64>::zeros(1, 3);
    assert!(experiments::sliding_window(u.as_ref(), y.as_ref(), None, 3, 1).is_err());
    assert!(experiments::sliding_window(u.as_ref(), y.as_ref(), None, 2, 0).is_err());
}
