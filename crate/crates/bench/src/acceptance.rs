//! The thirteen acceptance checks, shared by `netctl verify` and the `acceptance` test target.

use std::time::Instant;

use faer::{Col, Mat};
use rand::Rng;

use netctl_core::ddcontrol;
use netctl_core::experiments::{self, add_noise, DataMatrices, NoiseSpec};
use netctl_core::linalg::{self, Matrix, Vector, DEFAULT_TOL};
use netctl_core::network::{self, ControlProblem, LinearNetwork};
use netctl_core::{seed, swing, sysid, Result};

use crate::oracle::oracle_kkt;
use crate::stats::median;
use crate::studies::{self, er_network, gaussian_target, Keys, Point, StudyId, StudyRecord, StudySpec, Trial};

const MASTER: u64 = 20_240_917;

/// Rounding allowance below a cost ratio of one. Both costs are evaluated on
/// inputs that meet the target only to about 1e-11, so either may sit slightly
/// under the true optimum.
const COST_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<34} {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub const TITLES: [&str; 13] = [
    "exact reconstruction at N = mT",
    "feasibility at N = p",
    "long form equals compact form",
    "scalar output-noise bias",
    "non-asymptotic bound coverage",
    "subspace identification exactness",
    "perturbed Gramian error trend",
    "two-step vs direct",
    "data-driven error ceiling",
    "timing ordering",
    "noise-corrected consistency",
    "swing fault recovery",
    "nonzero initial state formula",
];

/// Runs one criterion by number (1 to 13).
pub fn run(id: u8) -> Outcome {
    let start = Instant::now();
    let res = match id {
        1 => c01_exact_reconstruction(),
        2 => c02_feasibility(),
        3 => c03_long_form(),
        4 => c04_scalar_bias(),
        5 => c05_bound_coverage(),
        6 => c06_subspace(),
        7 => c07_gramian_trend(),
        8 => c08_two_step(),
        9 => c09_error_ceiling(),
        10 => c10_timing(),
        11 => c11_noise_consistency(),
        12 => c12_swing(),
        13 => c13_initial_state(),
        _ => Ok((false, format!("unknown criterion {id}"))),
    };
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    let seconds = start.elapsed().as_secs_f64();
    Outcome {
        id,
        title: TITLES.get(id.wrapping_sub(1) as usize).copied().unwrap_or("unknown"),
        passed,
        detail,
        seconds,
    }
}

pub fn run_all() -> Vec<Outcome> {
    (1..=13).map(run).collect()
}

type Check = Result<(bool, String)>;

fn sweep(spec: &StudySpec) -> Result<Vec<StudyRecord>> {
    Ok(studies::run_study(spec, MASTER, 1, None)?.records)
}

fn by_method<'a>(rs: &'a [StudyRecord], method: &str) -> Vec<&'a StudyRecord> {
    rs.iter().filter(|r| r.method == method).collect()
}

fn fig2c_at(samples: usize, reps: usize) -> StudySpec {
    StudySpec {
        samples: vec![samples],
        reps,
        ..StudySpec::default_for(StudyId::Fig2c)
    }
}

fn c01_exact_reconstruction() -> Check {
    let start = Instant::now();
    let rs = sweep(&fig2c_at(50, 50))?;
    let dd = by_method(&rs, "dd_optimal");
    let failed = dd.iter().filter(|r| !r.is_ok()).count();
    let worst_err = dd.iter().map(|r| r.control_error).fold(0.0, f64::max);
    let (lo, hi) = dd
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.cost_ratio), b.max(r.cost_ratio)));
    let secs = start.elapsed().as_secs_f64();
    let ok = failed == 0 && dd.len() == 50 && worst_err <= 1e-6 && lo >= 1.0 - COST_SLACK && hi <= 1.0 + 1e-8 && secs < 60.0;
    Ok((
        ok,
        format!("max rel err {worst_err:.2e}, cost ratio in [{lo:.15}, {hi:.15}], {secs:.1}s"),
    ))
}

fn c02_feasibility() -> Check {
    let rs = sweep(&fig2c_at(20, 50))?;
    let dd = by_method(&rs, "dd_optimal");
    let failed = dd.iter().filter(|r| !r.is_ok()).count();
    let worst = dd.iter().map(|r| r.final_error).fold(0.0, f64::max);
    let not_below = dd.iter().all(|r| r.cost_ratio >= 1.0 - COST_SLACK);
    let strict = dd.iter().filter(|r| r.cost_ratio > 1.0 + 1e-9).count();
    let frac = strict as f64 / dd.len().max(1) as f64;
    let ok = failed == 0 && dd.len() == 50 && worst <= 1e-6 && not_below && frac >= 0.9;
    Ok((ok, format!("max final error {worst:.2e}, strictly costlier in {strict}/{}", dd.len())))
}

/// Random data set with `YT = C_T U`; every other set has a rank-deficient `U`.
fn long_form_data<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<DataMatrices> {
    let p = rng.random_range(1..=4usize);
    let m = rng.random_range(1..=3usize);
    let t = rng.random_range(1..=4usize).max(p.div_ceil(m) + 1);
    let dim = m * t;
    let samples = rng.random_range(p..=dim + 6);
    let full = dim.min(samples);
    let r = if k % 2 == 1 && full > p { rng.random_range(p..full) } else { full };
    let left = experiments::gaussian(dim, r, 1.0, rng);
    let right = experiments::gaussian(r, samples, 1.0, rng);
    let u = &left * &right;
    let ct = experiments::gaussian(p, dim, 1.0, rng);
    let yt = &ct * &u;
    DataMatrices::new(u, Mat::zeros(p * (t - 1), samples), yt, None, t, p)
}

fn columns_of(data: &DataMatrices, f: impl Fn(&Vector) -> Result<ddcontrol::DDSolution>) -> Result<Matrix> {
    let p = data.p;
    let mut out = Mat::zeros(data.m * data.t, p);
    for i in 0..p {
        let e = Col::from_fn(p, |k| if k == i { 1.0 } else { 0.0 });
        let u = f(&e)?.u.into_stacked();
        for r in 0..u.nrows() {
            out[(r, i)] = u[r];
        }
    }
    Ok(out)
}

fn c03_long_form() -> Check {
    let mut worst_gap = 0.0_f64;
    let mut worst_penrose = 0.0_f64;
    let mut deficient = 0;
    for k in 0..200usize {
        let mut rng = seed::rng_at(MASTER, &[3, k as u64]);
        let data = long_form_data(k, &mut rng)?;
        if linalg::rank(data.u.as_ref(), DEFAULT_TOL)? < data.u.nrows().min(data.samples()) {
            deficient += 1;
        }
        let long = columns_of(&data, |e| ddcontrol::dd_min_energy_long_form(&data, e, DEFAULT_TOL))?;
        let compact = columns_of(&data, |e| ddcontrol::dd_min_energy(&data, e, DEFAULT_TOL))?;
        worst_gap = worst_gap.max((&long - &compact).norm_l2());
        let pm = &data.yt * linalg::pinv(data.u.as_ref(), DEFAULT_TOL)?;
        let x = &long;
        let px = &pm * x;
        let xp = x * &pm;
        let conds = [
            (&px * &pm - &pm).norm_l2(),
            (&xp * x - x).norm_l2(),
            (&px - px.transpose()).norm_l2(),
            (&xp - xp.transpose()).norm_l2(),
        ];
        worst_penrose = conds.into_iter().fold(worst_penrose, f64::max);
    }
    let ok = worst_gap <= 1e-8 && worst_penrose <= 1e-8 && deficient > 0;
    Ok((
        ok,
        format!("max gap {worst_gap:.2e}, max Penrose residual {worst_penrose:.2e}, {deficient} rank-deficient U"),
    ))
}

fn c04_scalar_bias() -> Check {
    let samples = 1_000_000;
    let sigma2 = 0.25;
    let y_f = Col::from_fn(1, |_| 1.0);
    let net = LinearNetwork::new(Mat::zeros(1, 1), Mat::identity(1, 1), Mat::identity(1, 1))?;
    let mut worst_plain = 0.0_f64;
    let mut worst_fixed = 0.0_f64;
    let mut last = (0.0, 0.0);
    for s in 0..3u64 {
        let mut rng = seed::rng_at(MASTER, &[4, s]);
        let u = experiments::random_inputs(1, 1, samples, &mut rng);
        let clean = experiments::run_episodic(&net, &u, 1)?;
        let noisy = add_noise(&clean, &NoiseSpec::new(0.0, 0.0, sigma2)?, &mut rng)?;
        let plain = ddcontrol::dd_min_energy_approx(&noisy, &y_f, DEFAULT_TOL)?.u.stacked()[0];
        let fixed = ddcontrol::dd_min_energy_approx_corrected(&noisy, &y_f, sigma2, DEFAULT_TOL)?.u.stacked()[0];
        worst_plain = worst_plain.max((plain / 0.8 - 1.0).abs());
        worst_fixed = worst_fixed.max((fixed - 1.0).abs());
        last = (plain, fixed);
    }
    let ok = worst_plain <= 0.01 && worst_fixed <= 0.01;
    Ok((
        ok,
        format!(
            "uncorrected {:.4} (rel dev from 0.8 up to {worst_plain:.1e}), corrected {:.4} (dev up to {worst_fixed:.1e})",
            last.0, last.1
        ),
    ))
}

fn c05_bound_coverage() -> Check {
    let rs = sweep(&StudySpec::default_for(StudyId::Thm1Coverage))?;
    let failed = rs.iter().filter(|r| !r.is_ok()).count();
    let covered = rs.iter().filter(|r| r.is_ok() && r.control_error <= r.bound).count();
    let frac = covered as f64 / rs.len().max(1) as f64;
    let med_ratio = median(&rs.iter().map(|r| r.control_error / r.bound).collect::<Vec<_>>());
    Ok((
        failed == 0 && rs.len() == 200 && frac >= 0.95,
        format!("covered {covered}/{} (median error/bound {med_ratio:.2e})", rs.len()),
    ))
}

fn c06_subspace() -> Check {
    let mut worst_a = 0.0_f64;
    let mut worst_b = 0.0_f64;
    for s in 0..50u64 {
        let mut rng = seed::rng_at(MASTER, &[6, s]);
        let n = 10 + 10 * (s as usize % 5);
        let m = (n / 5).max(2);
        let t = n.div_ceil(m) + 2;
        let net = controllable_network(n, m, t - 1, &mut rng)?;
        let u = experiments::random_inputs(m, t, m * t + 10, &mut rng);
        let data = experiments::run_episodic(&net, &u, t)?;
        let model = sysid::subspace_id(&data)?;
        worst_a = worst_a.max((&model.a_hat - net.a()).norm_l2());
        worst_b = worst_b.max((&model.b_hat - net.b()).norm_l2());
    }
    Ok((
        worst_a <= 1e-6 && worst_b <= 1e-6,
        format!("max |A_hat - A|_F {worst_a:.2e}, max |B_hat - B|_F {worst_b:.2e}"),
    ))
}

/// Redraws until `[B AB ... A^(k-1) B]` has full row rank.
fn controllable_network<R: Rng + ?Sized>(n: usize, m: usize, k: usize, rng: &mut R) -> Result<LinearNetwork> {
    for _ in 0..100 {
        let net = er_network(n, m, None, 0.05, rng)?;
        if linalg::rank(network::output_ctrb_matrix(&net, k).as_ref(), DEFAULT_TOL)? == n {
            return Ok(net);
        }
    }
    Err(netctl_core::Error::Invalid(format!("no controllable network with n = {n}, m = {m} in 100 draws")))
}

fn medians_by(rs: &[StudyRecord], method: &str, key: impl Fn(&StudyRecord) -> bool) -> f64 {
    let v: Vec<f64> = rs
        .iter()
        .filter(|r| r.method == method && key(r))
        .map(|r| if r.is_ok() { r.final_error } else { f64::INFINITY })
        .collect();
    median(&v)
}

fn c07_gramian_trend() -> Check {
    let spec = StudySpec {
        delta: vec![0.0, 1e-3],
        ..StudySpec::default_for(StudyId::Fig1c)
    };
    let rs = sweep(&spec)?;
    let ns = spec.n.clone();
    let pert: Vec<f64> = ns.iter().map(|&n| medians_by(&rs, "gramian", |r| r.n == n && r.delta > 0.0)).collect();
    let base: Vec<f64> = ns.iter().map(|&n| medians_by(&rs, "gramian", |r| r.n == n && r.delta == 0.0)).collect();
    let monotone = pert.windows(2).all(|w| w[1] >= w[0]);
    let ratio = pert[ns.len() - 1] / base[ns.len() - 1];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(" ");
    Ok((
        monotone && ratio >= 10.0,
        format!("perturbed medians [{}], unperturbed [{}], ratio at n=100 {ratio:.1e}", fmt(&pert), fmt(&base)),
    ))
}

fn c08_two_step() -> Check {
    let spec = StudySpec {
        n: vec![50, 100, 200],
        ..StudySpec::default_for(StudyId::Fig3b)
    };
    let rs = sweep(&spec)?;
    let mut parts = Vec::new();
    let mut ok = true;
    let mut last_ratio = 0.0;
    for &n in &spec.n {
        let two = medians_by(&rs, "two_step", |r| r.n == n);
        let direct = medians_by(&rs, "dd_min_energy", |r| r.n == n);
        ok &= two >= direct;
        last_ratio = two / direct;
        parts.push(format!("n={n}: {two:.1e} vs {direct:.1e}"));
    }
    ok &= last_ratio >= 10.0;
    Ok((ok, format!("{}; ratio at n=200 {last_ratio:.1e}", parts.join(", "))))
}

fn fig3c_spec(n: Vec<usize>, reps: usize) -> StudySpec {
    StudySpec {
        n,
        reps,
        ..StudySpec::default_for(StudyId::Fig3c)
    }
}

fn c09_error_ceiling() -> Check {
    let start = Instant::now();
    let rs = sweep(&fig3c_spec(vec![1000, 2000], 2))?;
    let dd: Vec<&StudyRecord> = rs.iter().filter(|r| r.method == "dd_min_energy" || r.method == "dd_approx").collect();
    let failed: Vec<&str> = dd.iter().filter(|r| !r.is_ok()).map(|r| r.error.as_str()).collect();
    let worst = dd.iter().filter(|r| r.is_ok()).map(|r| r.final_error).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("max final error {worst:.2e} over {} runs, {secs:.0}s", dd.len());
    if let Some(e) = failed.first() {
        detail.push_str(&format!("; {} failed ({e})", failed.len()));
    }
    Ok((failed.is_empty() && dd.len() == 8 && worst <= 1e-5 && secs < 600.0, detail))
}

fn c10_timing() -> Check {
    let spec = fig3c_spec(vec![2000], 1);
    let keys = Keys {
        master: MASTER,
        study: StudyId::Fig3c,
    };
    let pt = Point {
        n: 2000,
        samples: 0,
        delta: 0.0,
        sigma: 0.0,
    };
    let tr = Trial {
        spec: &spec,
        keys: &keys,
        point_index: 0,
        point: pt,
        rep: 0,
        out_dir: None,
    };
    let d = studies::Dims::resolve(&spec, &pt);
    let mut rng = seed::rng(keys.data(tr.point_index, tr.rep));
    let raw = er_network(d.n, d.m, Some(d.p), spec.edge_eps, &mut rng)?;
    let net = raw.with_a(sysid::stabilize(&raw.a().to_owned())?)?;
    let y_f = gaussian_target(d.p, &mut rng);
    let u = experiments::random_inputs(d.m, d.t, d.samples, &mut rng);
    let data = experiments::run_episodic(&net, &u, d.t)?;
    let prob = ControlProblem::min_energy(d.t, d.m, y_f.clone())?;
    let tol = linalg::machine_tol(data.u.nrows(), data.samples());
    let mut dd_times = Vec::new();
    let mut mb_times = Vec::new();
    for _ in 0..10 {
        let s = Instant::now();
        ddcontrol::dd_min_energy_approx(&data, &y_f, tol)?;
        dd_times.push(s.elapsed().as_secs_f64());
        let s = Instant::now();
        network::model_based_optimal(&net, &prob)?;
        mb_times.push(s.elapsed().as_secs_f64());
    }
    let (dd, mb) = (median(&dd_times), median(&mb_times));
    Ok((dd < mb, format!("median data-driven {dd:.4}s vs model-based {mb:.4}s")))
}

fn c11_noise_consistency() -> Check {
    let rs = sweep(&StudySpec::default_for(StudyId::NoiseConsistency))?;
    let med = |method: &str, n: usize| {
        let v: Vec<f64> = rs
            .iter()
            .filter(|r| r.method == method && r.samples == n)
            .map(|r| if r.is_ok() { r.control_error } else { f64::INFINITY })
            .collect();
        median(&v)
    };
    let fixed: Vec<f64> = [1_000, 10_000, 100_000].iter().map(|&n| med("min_energy_corrected", n)).collect();
    let plain = med("min_energy_noisy_u", 100_000);
    let decreasing = fixed.windows(2).all(|w| w[1] < w[0]);
    let ok = fixed[2] < 0.5 * plain && decreasing;
    Ok((
        ok,
        format!(
            "corrected medians {:.2e} {:.2e} {:.2e}; uncorrected at 1e5 {plain:.2e}",
            fixed[0], fixed[1], fixed[2]
        ),
    ))
}

fn c12_swing() -> Check {
    let spec = StudySpec::default_for(StudyId::SwingDemo);
    let cfg = spec.swing.clone().unwrap_or_else(swing::default_config);
    let out = studies::swing_demo(&cfg, spec.samples[0], spec.t.unwrap_or(400), spec.sigma[0], seed::derive(MASTER, &[12]))?;
    let ok = out.controlled.recovered && !out.uncontrolled.recovered;
    Ok((
        ok,
        format!(
            "controlled max |w| {:.2e} (recovered {}), uncontrolled {:.2e} (recovered {})",
            out.controlled.final_max_omega, out.controlled.recovered, out.uncontrolled.final_max_omega, out.uncontrolled.recovered
        ),
    ))
}

fn c13_initial_state() -> Check {
    let (n, m, p, t, len) = (10, 2, 4, 5, 200);
    let mut worst = 0.0_f64;
    let mut skipped = 0;
    for s in 0..20u64 {
        let mut rng = seed::rng_at(MASTER, &[13, s]);
        let raw = er_network(n, m, Some(p), 0.1, &mut rng)?;
        // A long free trajectory needs a stable network.
        let rho = linalg::spectral_radius(raw.a())?;
        let net = raw.with_a(Mat::from_fn(n, n, |i, j| raw.a()[(i, j)] * 0.9 / rho))?;
        let u_long = experiments::gaussian(m, len, 1.0, &mut rng);
        let mut x_long = Mat::<f64>::zeros(n, len + 1);
        let x_init = experiments::gaussian(n, 1, 1.0, &mut rng);
        x_long.as_mut().subcols_mut(0, 1).copy_from(&x_init);
        for k in 0..len {
            let next = net.a() * x_long.as_ref().subcols(k, 1) + net.b() * u_long.as_ref().subcols(k, 1);
            x_long.as_mut().subcols_mut(k + 1, 1).copy_from(&next);
        }
        let x_long = x_long.as_ref().subcols(0, len).to_owned();
        let y_long = net.c() * &x_long;
        let data = experiments::sliding_window(u_long.as_ref(), y_long.as_ref(), Some(x_long.as_ref()), t, 1)?;
        let stacked = linalg::vstack(&[data.u.as_ref(), data.x0.as_ref().expect("states recorded").as_ref()])?;
        if linalg::rank(stacked.as_ref(), DEFAULT_TOL)? != m * t + n {
            skipped += 1;
            continue;
        }
        let y_f = gaussian_target(p, &mut rng);
        let prob = ControlProblem::scalar(t, m, 1.0, 1.0, y_f.clone())?;
        let oracle = oracle_kkt(&net, &prob)?;
        let sol = ddcontrol::dd_optimal_x0(&data, &prob.q, &prob.r, &y_f, DEFAULT_TOL)?;
        worst = worst.max(studies::relative_gap(sol.u.stacked(), oracle.u.stacked()));
    }
    let used = 20 - skipped;
    Ok((
        worst <= 1e-6 && used >= 10,
        format!("max rel err vs KKT {worst:.2e} over {used} trajectories ({skipped} without full rank [U; X0] skipped)"),
    ))
}
