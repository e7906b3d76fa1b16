//! Study protocols, sweep execution and CSV/JSON emission.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use clap::ValueEnum;
use faer::Col;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use netctl_core::ddcontrol::{self, StateRegularization};
use netctl_core::experiments::{self, add_noise, NoiseSpec};
use netctl_core::graphs::{self, GraphSpec, PerturbScope};
use netctl_core::linalg::{self, Vector, DEFAULT_TOL};
use netctl_core::network::{self, simulate, ControlProblem, ControlSequence, LinearNetwork, Weight};
use netctl_core::swing::{self, HarvestOptions, RecoveryControl, RecoveryCriteria, SwingConfig};
use netctl_core::{seed, sysid, Error, Result};

use crate::oracle::oracle_kkt;
use crate::stats::summarize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum StudyId {
    Fig1c,
    Fig2c,
    Fig3a,
    Fig3b,
    Fig3c,
    NoiseConsistency,
    Thm1Coverage,
    SwingDemo,
}

impl StudyId {
    pub const ALL: [StudyId; 8] = [
        StudyId::Fig1c,
        StudyId::Fig2c,
        StudyId::Fig3a,
        StudyId::Fig3b,
        StudyId::Fig3c,
        StudyId::NoiseConsistency,
        StudyId::Thm1Coverage,
        StudyId::SwingDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudyId::Fig1c => "fig1c",
            StudyId::Fig2c => "fig2c",
            StudyId::Fig3a => "fig3a",
            StudyId::Fig3b => "fig3b",
            StudyId::Fig3c => "fig3c",
            StudyId::NoiseConsistency => "noise-consistency",
            StudyId::Thm1Coverage => "thm1-coverage",
            StudyId::SwingDemo => "swing-demo",
        }
    }

    fn code(self) -> u64 {
        StudyId::ALL.iter().position(|s| *s == self).unwrap_or(0) as u64 + 1
    }
}

/// Parameter grid of one study. Unset dimensions fall back to the protocol's
/// size-dependent rules (for example `m = n / 10` in fig3b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub study: StudyId,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub samples: Vec<usize>,
    #[serde(default)]
    pub t: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub p: Option<usize>,
    /// Edge perturbation (fig1c) or confidence level (thm1-coverage).
    #[serde(default)]
    pub delta: Vec<f64>,
    /// Noise standard deviations (noise-consistency) or perturbation std (swing-demo).
    #[serde(default)]
    pub sigma: Vec<f64>,
    /// Edge probability is `ln n / n + edge_eps`.
    pub edge_eps: f64,
    pub reps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swing: Option<SwingConfig>,
}

impl StudySpec {
    /// Desk-scale defaults for each protocol.
    pub fn default_for(study: StudyId) -> Self {
        let base = Self {
            study,
            n: vec![],
            samples: vec![],
            t: None,
            m: None,
            p: None,
            delta: vec![],
            sigma: vec![],
            edge_eps: 0.05,
            reps: 50,
            swing: None,
        };
        match study {
            StudyId::Fig1c => Self {
                n: vec![20, 40, 60, 80, 100],
                m: Some(10),
                delta: vec![0.0, 1e-4, 1e-3],
                edge_eps: 0.1,
                reps: 100,
                ..base
            },
            StudyId::Fig2c => Self {
                n: vec![100],
                samples: vec![20, 30, 40, 50, 60, 70, 80],
                t: Some(10),
                m: Some(5),
                p: Some(20),
                ..base
            },
            StudyId::Fig3a => Self {
                n: vec![100],
                samples: vec![20, 30, 40, 50, 60, 80, 100, 200, 500, 1000],
                t: Some(10),
                m: Some(5),
                p: Some(20),
                ..base
            },
            StudyId::Fig3b => Self {
                n: vec![50, 100, 150, 200],
                t: Some(40),
                ..base
            },
            StudyId::Fig3c => Self {
                n: vec![1000, 2000, 4000],
                t: Some(50),
                reps: 1,
                ..base
            },
            StudyId::NoiseConsistency => Self {
                n: vec![30],
                samples: vec![1_000, 10_000, 100_000],
                t: Some(5),
                m: Some(3),
                p: Some(5),
                sigma: vec![0.1],
                reps: 20,
                ..base
            },
            StudyId::Thm1Coverage => Self {
                n: vec![100],
                t: Some(10),
                m: Some(5),
                p: Some(20),
                delta: vec![0.05],
                reps: 200,
                ..base
            },
            StudyId::SwingDemo => Self {
                samples: vec![4000],
                t: Some(400),
                sigma: vec![0.1],
                reps: 1,
                swing: Some(swing::default_config()),
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Invalid("reps must be at least 1".into()));
        }
        let need = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{} needs a non-empty {what} grid", self.study.name())))
            }
        };
        match self.study {
            StudyId::Fig1c => {
                need(!self.n.is_empty(), "n")?;
                need(!self.delta.is_empty(), "delta")?;
            }
            StudyId::Fig2c | StudyId::Fig3a => {
                need(!self.n.is_empty(), "n")?;
                need(!self.samples.is_empty(), "samples")?;
            }
            StudyId::Fig3b | StudyId::Fig3c => need(!self.n.is_empty(), "n")?,
            StudyId::NoiseConsistency => {
                need(!self.n.is_empty(), "n")?;
                need(!self.samples.is_empty(), "samples")?;
                need(!self.sigma.is_empty(), "sigma")?;
            }
            StudyId::Thm1Coverage => {
                need(!self.n.is_empty(), "n")?;
                need(!self.delta.is_empty(), "delta")?;
            }
            StudyId::SwingDemo => {
                need(!self.samples.is_empty(), "samples")?;
                need(!self.sigma.is_empty(), "sigma")?;
            }
        }
        if self.n.contains(&0) || self.samples.contains(&0) || self.t == Some(0) {
            return Err(Error::Invalid("sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Grid points in a fixed order.
    pub fn points(&self) -> Vec<Point> {
        let mut out = Vec::new();
        let pt = |n, samples, delta, sigma| Point { n, samples, delta, sigma };
        match self.study {
            StudyId::Fig1c => {
                for &n in &self.n {
                    for &d in &self.delta {
                        out.push(pt(n, 0, d, 0.0));
                    }
                }
            }
            StudyId::Fig2c | StudyId::Fig3a => {
                for &n in &self.n {
                    for &s in &self.samples {
                        out.push(pt(n, s, 0.0, 0.0));
                    }
                }
            }
            StudyId::Fig3b | StudyId::Fig3c => out.extend(self.n.iter().map(|&n| pt(n, 0, 0.0, 0.0))),
            StudyId::NoiseConsistency => {
                for &n in &self.n {
                    for &sg in &self.sigma {
                        for &s in &self.samples {
                            out.push(pt(n, s, 0.0, sg));
                        }
                    }
                }
            }
            StudyId::Thm1Coverage => {
                for &n in &self.n {
                    for &d in &self.delta {
                        out.push(pt(n, 0, d, 0.0));
                    }
                }
            }
            StudyId::SwingDemo => {
                for &s in &self.samples {
                    for &sg in &self.sigma {
                        out.push(pt(0, s, 0.0, sg));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub n: usize,
    /// Zero means "use the protocol's rule".
    pub samples: usize,
    pub delta: f64,
    pub sigma: f64,
}

/// One CSV row. Metrics that do not apply are NaN; `wall_time_s` is last so
/// deterministic columns can be compared byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRecord {
    pub study: String,
    pub point: usize,
    pub rep: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub t: usize,
    pub samples: usize,
    pub delta: f64,
    pub sigma: f64,
    pub method: String,
    pub final_error: f64,
    pub control_error: f64,
    pub cost: f64,
    pub cost_ratio: f64,
    pub bound: f64,
    pub rank: Option<usize>,
    pub recovered: Option<bool>,
    pub error: String,
    pub wall_time_s: f64,
}

impl StudyRecord {
    fn blank(study: StudyId, point: usize, rep: usize, seed: u64, dims: Dims, pt: &Point, method: &str) -> Self {
        Self {
            study: study.name().into(),
            point,
            rep,
            seed,
            n: dims.n,
            m: dims.m,
            p: dims.p,
            t: dims.t,
            samples: dims.samples,
            delta: pt.delta,
            sigma: pt.sigma,
            method: method.into(),
            final_error: f64::NAN,
            control_error: f64::NAN,
            cost: f64::NAN,
            cost_ratio: f64::NAN,
            bound: f64::NAN,
            rank: None,
            recovered: None,
            error: String::new(),
            wall_time_s: f64::NAN,
        }
    }

    fn failed(mut self, e: &Error) -> Self {
        self.error = e.to_string().replace(['\n', ','], " ");
        self
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub t: usize,
    pub samples: usize,
}

impl Dims {
    /// Resolves size rules of each protocol at a grid point.
    pub fn resolve(spec: &StudySpec, pt: &Point) -> Dims {
        let n = pt.n;
        let pick = |v: Option<usize>, rule: usize| v.unwrap_or(rule).max(1);
        match spec.study {
            StudyId::Fig1c => {
                let t = spec.t.unwrap_or(2 * n);
                Dims { n, m: pick(spec.m, 10).min(n), p: n, t, samples: 0 }
            }
            StudyId::Fig3b => {
                let (m, t) = (pick(spec.m, n / 10), pick(spec.t, 40));
                Dims { n, m, p: n, t, samples: if pt.samples > 0 { pt.samples } else { m * t + 10 } }
            }
            StudyId::Fig3c => {
                let (m, p, t) = (pick(spec.m, n / 100), pick(spec.p, n / 50), pick(spec.t, 50));
                Dims { n, m, p, t, samples: if pt.samples > 0 { pt.samples } else { m * t + 100 } }
            }
            StudyId::Thm1Coverage => {
                let (m, p, t) = (pick(spec.m, 5), pick(spec.p, 20), pick(spec.t, 10));
                Dims { n, m, p, t, samples: 100 * m * t }
            }
            StudyId::SwingDemo => {
                let g = spec.swing.as_ref().map_or(10, |c| c.grid.generators());
                Dims { n: 2 * (g - 1), m: g - 1, p: 2 * (g - 1), t: pick(spec.t, 400), samples: pt.samples }
            }
            _ => Dims {
                n,
                m: pick(spec.m, 5),
                p: pick(spec.p, 20),
                t: pick(spec.t, 10),
                samples: pt.samples,
            },
        }
    }
}

/// Random-input ER network in the connected regime, adjacency scaled by `1/sqrt(n)`.
pub fn er_network<R: rand::Rng + ?Sized>(n: usize, m: usize, p: Option<usize>, eps: f64, rng: &mut R) -> Result<LinearNetwork> {
    let prob = ((n as f64).ln() / n as f64 + eps).clamp(0.0, 1.0);
    let spec = GraphSpec::new(n, prob, true, 0)?;
    Ok(graphs::random_network(&spec, m, p, rng)?.0)
}

pub fn gaussian_target<R: rand::Rng + ?Sized>(p: usize, rng: &mut R) -> Vector {
    experiments::gaussian(p, 1, 1.0, rng).col(0).to_owned()
}

/// `|y(T) - y_f|` after applying `u` to `net` from rest.
pub fn final_error(net: &LinearNetwork, u: &ControlSequence, y_f: &Vector) -> Result<f64> {
    let traj = simulate(net, u, &Col::zeros(net.n()))?;
    Ok((traj.final_output() - y_f).norm_l2())
}

pub fn relative_gap(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm_l2() / b.norm_l2().max(f64::MIN_POSITIVE)
}

/// Streams keyed by study, point and repetition, so results do not depend on scheduling.
pub struct Keys {
    pub master: u64,
    pub study: StudyId,
}

impl Keys {
    pub fn net(&self, n: usize, rep: usize) -> u64 {
        seed::derive(self.master, &[self.study.code(), 1, n as u64, rep as u64])
    }
    pub fn data(&self, point: usize, rep: usize) -> u64 {
        seed::derive(self.master, &[self.study.code(), 2, point as u64, rep as u64])
    }
}

pub struct Trial<'a> {
    pub spec: &'a StudySpec,
    pub keys: &'a Keys,
    pub point_index: usize,
    pub point: Point,
    pub rep: usize,
    pub out_dir: Option<&'a Path>,
}

impl Trial<'_> {
    fn dims(&self) -> Dims {
        Dims::resolve(self.spec, &self.point)
    }
    fn record(&self, seed: u64, method: &str) -> StudyRecord {
        StudyRecord::blank(self.spec.study, self.point_index, self.rep, seed, self.dims(), &self.point, method)
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> (Result<T>, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Spectral radius the fig1c networks are scaled to. Unscaled ER adjacencies have
/// radius well above one, and at `T = 2n` their Gramians overflow double precision.
pub const GRAMIAN_STUDY_RADIUS: f64 = 0.9;

/// Gramian-based minimum energy designed on a perturbed copy, evaluated on the true network.
/// Edges carry unit weight when perturbed; both copies are then scaled by the same factor.
pub fn fig1c_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let net_seed = tr.keys.net(d.n, tr.rep);
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let mut rec = tr.record(seed_data, "gramian");
    let run = || -> Result<(f64, f64)> {
        let mut rng = seed::rng(net_seed);
        let prob = ((d.n as f64).ln() / d.n as f64 + tr.spec.edge_eps).clamp(0.0, 1.0);
        let (raw, _) = graphs::random_network(&GraphSpec::new(d.n, prob, false, 0)?, d.m, None, &mut rng)?;
        let x_f = gaussian_target(d.n, &mut rng);
        let factor = GRAMIAN_STUDY_RADIUS / linalg::spectral_radius(raw.a())?;
        let scaled = |a: faer::MatRef<'_, f64>| faer::Mat::from_fn(d.n, d.n, |i, j| a[(i, j)] * factor);
        let net = raw.with_a(scaled(raw.a()))?;
        let design = if tr.point.delta > 0.0 {
            let a = graphs::perturb_edges(&raw.a().to_owned(), tr.point.delta, PerturbScope::Edges, &mut seed::rng(seed_data));
            raw.with_a(scaled(a.as_ref()))?
        } else {
            net.clone()
        };
        let start = Instant::now();
        let u = network::model_based_min_energy_gramian(&design, d.t, &x_f)?;
        let secs = start.elapsed().as_secs_f64();
        Ok((final_error(&net, &u, &x_f)?, secs))
    };
    match run() {
        Ok((err, secs)) => {
            rec.final_error = err;
            rec.wall_time_s = secs;
            vec![rec]
        }
        Err(e) => vec![rec.failed(&e)],
    }
}

/// Weighted problem (`Q = R = I`) or minimum energy, data-driven against model-based and the KKT oracle.
fn data_sweep_trial(tr: &Trial<'_>, min_energy: bool) -> Vec<StudyRecord> {
    let d = tr.dims();
    let net_seed = tr.keys.net(d.n, tr.rep);
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let mut rng = seed::rng(net_seed);
    let mut setup = || -> Result<_> {
        let net = er_network(d.n, d.m, Some(d.p), tr.spec.edge_eps, &mut rng)?;
        let y_f = gaussian_target(d.p, &mut rng);
        let prob = if min_energy {
            ControlProblem::min_energy(d.t, d.m, y_f.clone())?
        } else {
            ControlProblem::scalar(d.t, d.m, 1.0, 1.0, y_f.clone())?
        };
        let oracle = oracle_kkt(&net, &prob)?;
        let u = experiments::random_inputs(d.m, d.t, d.samples, &mut seed::rng(seed_data));
        let data = experiments::run_episodic(&net, &u, d.t)?;
        Ok((net, y_f, prob, oracle, data))
    };
    let (net, y_f, prob, oracle, data) = match setup() {
        Ok(s) => s,
        Err(e) => return vec![tr.record(seed_data, "setup").failed(&e)],
    };
    let fill = |method: &str, res: Result<(ControlSequence, Option<usize>)>, secs: f64| {
        let mut rec = tr.record(seed_data, method);
        rec.wall_time_s = secs;
        let body = || -> Result<StudyRecord> {
            let (u, rank) = res?;
            let mut rec = rec.clone();
            rec.final_error = final_error(&net, &u, &y_f)?;
            rec.cost = prob.cost(&net, &u)?;
            rec.cost_ratio = rec.cost / oracle.cost;
            rec.control_error = relative_gap(u.stacked(), oracle.u.stacked());
            rec.rank = rank;
            Ok(rec)
        };
        body().unwrap_or_else(|e| rec.failed(&e))
    };
    let mut out = Vec::new();
    let (q, r) = (prob.q.clone(), prob.r.clone());
    if min_energy {
        let (res, s) = timed(|| ddcontrol::dd_min_energy(&data, &y_f, DEFAULT_TOL));
        out.push(fill("dd_min_energy", res.map(|x| (x.u, x.diagnostics.rank_u)), s));
        let (res, s) = timed(|| ddcontrol::dd_min_energy_approx(&data, &y_f, DEFAULT_TOL));
        out.push(fill("dd_approx", res.map(|x| (x.u, Some(x.diagnostics.rank_yt))), s));
    } else {
        let (res, s) = timed(|| ddcontrol::dd_optimal(&data, &q, &r, &y_f, DEFAULT_TOL));
        out.push(fill("dd_optimal", res.map(|x| (x.u, x.diagnostics.rank_u)), s));
    }
    let (res, s) = timed(|| network::model_based_optimal(&net, &prob));
    out.push(fill("model_based", res.map(|u| (u, None)), s));
    out
}

/// Direct data-driven minimum energy against identify-then-control on full-state data.
pub fn fig3b_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let mut rng = seed::rng(seed_data);
    let mut setup = || -> Result<_> {
        let net = er_network(d.n, d.m, None, tr.spec.edge_eps, &mut rng)?;
        let y_f = gaussian_target(d.n, &mut rng);
        let u = experiments::random_inputs(d.m, d.t, d.samples, &mut rng);
        let data = experiments::run_episodic(&net, &u, d.t)?;
        Ok((net, y_f, data))
    };
    let (net, y_f, data) = match setup() {
        Ok(s) => s,
        Err(e) => return vec![tr.record(seed_data, "setup").failed(&e)],
    };
    let eval = |method: &str, f: &dyn Fn() -> Result<ControlSequence>| {
        let mut rec = tr.record(seed_data, method);
        let (res, secs) = timed(f);
        rec.wall_time_s = secs;
        match res.and_then(|u| final_error(&net, &u, &y_f)) {
            Ok(err) => {
                rec.final_error = err;
                rec
            }
            Err(e) => rec.failed(&e),
        }
    };
    // Few actuators over a long horizon leave YT with a wide singular spectrum,
    // so every method uses the machine-precision cutoff.
    let tol = linalg::machine_tol(data.yt.nrows(), data.samples());
    vec![
        eval("dd_min_energy", &|| Ok(ddcontrol::dd_min_energy(&data, &y_f, tol)?.u)),
        eval("dd_approx", &|| Ok(ddcontrol::dd_min_energy_approx(&data, &y_f, tol)?.u)),
        eval("two_step", &|| sysid::two_step_min_energy_with(&data, &y_f, tol)),
    ]
}

/// Large sparse-actuation networks: compute time and final error of data-driven and model-based controls.
pub fn fig3c_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let mut rng = seed::rng(seed_data);
    let mut setup = || -> Result<_> {
        // The sqrt(n) scaling leaves a Perron root near ln n / sqrt(n) + eps sqrt(n),
        // about 2.4 at n = 2000, which collapses 50-step data to rank one.
        let raw = er_network(d.n, d.m, Some(d.p), tr.spec.edge_eps, &mut rng)?;
        let net = raw.with_a(sysid::stabilize(&raw.a().to_owned())?)?;
        let y_f = gaussian_target(d.p, &mut rng);
        let u = experiments::random_inputs(d.m, d.t, d.samples, &mut rng);
        let data = experiments::run_episodic(&net, &u, d.t)?;
        Ok((net, y_f, data))
    };
    let (net, y_f, data) = match setup() {
        Ok(s) => s,
        Err(e) => return vec![tr.record(seed_data, "setup").failed(&e)],
    };
    let eval = |method: &str, f: &dyn Fn() -> Result<ControlSequence>| {
        let mut rec = tr.record(seed_data, method);
        let (res, secs) = timed(f);
        rec.wall_time_s = secs;
        match res.and_then(|u| final_error(&net, &u, &y_f)) {
            Ok(err) => {
                rec.final_error = err;
                rec
            }
            Err(e) => rec.failed(&e),
        }
    };
    let tol = linalg::machine_tol(data.u.nrows(), data.samples());
    vec![
        eval("dd_min_energy", &|| Ok(ddcontrol::dd_min_energy(&data, &y_f, tol)?.u)),
        eval("dd_approx", &|| Ok(ddcontrol::dd_min_energy_approx(&data, &y_f, tol)?.u)),
        eval("model_based", &|| {
            let prob = ControlProblem::min_energy(d.t, d.m, y_f.clone())?;
            network::model_based_optimal(&net, &prob)
        }),
    ]
}

/// Uncorrected and noise-corrected minimum-energy estimates under input or output noise.
pub fn noise_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let net_seed = tr.keys.net(d.n, tr.rep);
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let var = tr.point.sigma * tr.point.sigma;
    let mut rng = seed::rng(net_seed);
    let mut setup = || -> Result<_> {
        let net = er_network(d.n, d.m, Some(d.p), tr.spec.edge_eps, &mut rng)?;
        let y_f = gaussian_target(d.p, &mut rng);
        let u_star = network::model_based_optimal(&net, &ControlProblem::min_energy(d.t, d.m, y_f.clone())?)?;
        let mut drng = seed::rng(seed_data);
        let u = experiments::random_inputs(d.m, d.t, d.samples, &mut drng);
        let clean = experiments::run_episodic(&net, &u, d.t)?;
        let noisy_u = add_noise(&clean, &NoiseSpec::new(var, 0.0, 0.0)?, &mut drng)?;
        let noisy_y = add_noise(&clean, &NoiseSpec::new(0.0, var, var)?, &mut drng)?;
        Ok((net, y_f, u_star, noisy_u, noisy_y))
    };
    let (net, y_f, u_star, noisy_u, noisy_y) = match setup() {
        Ok(s) => s,
        Err(e) => return vec![tr.record(seed_data, "setup").failed(&e)],
    };
    let eval = |method: &str, res: Result<ddcontrol::DDSolution>| {
        let mut rec = tr.record(seed_data, method);
        match res.and_then(|s| Ok((final_error(&net, &s.u, &y_f)?, s))) {
            Ok((err, s)) => {
                rec.final_error = err;
                rec.control_error = relative_gap(s.u.stacked(), u_star.stacked());
                rec.rank = s.diagnostics.rank_u.or(Some(s.diagnostics.rank_yt));
                rec
            }
            Err(e) => rec.failed(&e),
        }
    };
    vec![
        eval("min_energy_noisy_u", ddcontrol::dd_min_energy(&noisy_u, &y_f, DEFAULT_TOL)),
        eval("min_energy_corrected", ddcontrol::dd_min_energy_corrected(&noisy_u, &y_f, var, DEFAULT_TOL)),
        eval("approx_noisy_y", ddcontrol::dd_min_energy_approx(&noisy_y, &y_f, DEFAULT_TOL)),
        eval("approx_corrected", ddcontrol::dd_min_energy_approx_corrected(&noisy_y, &y_f, var, DEFAULT_TOL)),
    ]
}

/// Distance of the approximate minimum-energy input from the optimum next to the non-asymptotic bound.
pub fn bound_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let mut rec = tr.record(seed_data, "dd_approx");
    let run = || -> Result<(f64, f64)> {
        let mut rng = seed::rng(seed_data);
        let net = er_network(d.n, d.m, Some(d.p), tr.spec.edge_eps, &mut rng)?;
        let y_f = gaussian_target(d.p, &mut rng);
        let ct = network::output_ctrb_matrix(&net, d.t);
        let u_star = netctl_core::linalg::pinv_solve(ct.as_ref(), y_f.as_mat(), DEFAULT_TOL)?;
        let u = experiments::random_inputs(d.m, d.t, d.samples, &mut rng);
        let data = experiments::run_episodic(&net, &u, d.t)?;
        let sol = ddcontrol::dd_min_energy_approx(&data, &y_f, DEFAULT_TOL)?;
        let bound = ddcontrol::sample_bound(ct.as_ref(), d.samples, tr.point.delta, &y_f)?;
        Ok(((sol.u.stacked() - u_star.col(0)).norm_l2(), bound.bound))
    };
    match run() {
        Ok((err, bound)) => {
            rec.control_error = err;
            rec.bound = bound;
            vec![rec]
        }
        Err(e) => vec![rec.failed(&e)],
    }
}

/// Outcome of the swing fault-recovery demonstration.
pub struct SwingOutcome {
    pub controlled: swing::RecoveryRun,
    pub uncontrolled: swing::RecoveryRun,
    pub rejected: usize,
    pub control_rank: usize,
}

/// Harvests perturbation data, then runs the fault with and without the
/// data-driven controller (`Q = 0.01 I`, `R = I`).
pub fn swing_demo(cfg: &SwingConfig, episodes: usize, t: usize, sigma: f64, data_seed: u64) -> Result<SwingOutcome> {
    let mut scenario = cfg.scenario(1e-10)?;
    scenario.timing.control_duration = t as f64 * scenario.timing.ts;
    scenario.timing.validate()?;
    let opts = HarvestOptions {
        x0_std: sigma,
        input_std: sigma,
        ..Default::default()
    };
    let harvest = swing::harvest_perturbation_data(
        &scenario.post,
        &scenario.equilibrium,
        episodes,
        t,
        scenario.timing.ts,
        &opts,
        &mut seed::rng(data_seed),
    )?;
    let data = harvest.data;
    let q = Weight::scaled(data.p * (t - 1), 0.01);
    let r = Weight::scaled(data.m * t, 1.0);
    let target = Col::zeros(data.p);
    let rank = std::cell::Cell::new(0usize);
    let ctl = |x: &Vector| -> Result<ControlSequence> {
        let sol = ddcontrol::dd_optimal_from_state(
            &data,
            &q,
            &r,
            x,
            &target,
            DEFAULT_TOL,
            StateRegularization::Ridge { rel: 1e-4 },
        )?;
        rank.set(sol.diagnostics.rank_yt);
        Ok(sol.u)
    };
    let criteria = RecoveryCriteria::default();
    let controlled = swing::run_fault_recovery(&scenario, RecoveryControl::FromState(&ctl), &criteria, 40)?;
    let uncontrolled = swing::run_fault_recovery(&scenario, RecoveryControl::None, &criteria, 40)?;
    Ok(SwingOutcome {
        controlled,
        uncontrolled,
        rejected: harvest.rejected,
        control_rank: rank.get(),
    })
}

pub fn swing_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    let d = tr.dims();
    let seed_data = tr.keys.data(tr.point_index, tr.rep);
    let cfg = tr.spec.swing.clone().unwrap_or_else(swing::default_config);
    let start = Instant::now();
    let out = match swing_demo(&cfg, d.samples, d.t, tr.point.sigma, seed_data) {
        Ok(o) => o,
        Err(e) => return vec![tr.record(seed_data, "dd_optimal").failed(&e)],
    };
    let secs = start.elapsed().as_secs_f64();
    if let Some(dir) = tr.out_dir {
        let tag = format!("p{}_r{}", tr.point_index, tr.rep);
        let writes = [
            out.controlled.write_csv(&dir.join(format!("trajectory_control_{tag}.csv"))),
            out.uncontrolled.write_csv(&dir.join(format!("trajectory_none_{tag}.csv"))),
        ];
        if let Some(Err(e)) = writes.into_iter().find(|w| w.is_err()) {
            return vec![tr.record(seed_data, "dd_optimal").failed(&e)];
        }
    }
    let mk = |method: &str, run: &swing::RecoveryRun| {
        let mut rec = tr.record(seed_data, method);
        rec.final_error = run.final_max_omega;
        rec.control_error = run.tail_max_rhs;
        rec.cost = run.control_energy;
        rec.recovered = Some(run.recovered);
        rec
    };
    let mut ctl = mk("dd_optimal", &out.controlled);
    ctl.rank = Some(out.control_rank);
    ctl.wall_time_s = secs;
    vec![ctl, mk("none", &out.uncontrolled)]
}

pub fn run_trial(tr: &Trial<'_>) -> Vec<StudyRecord> {
    match tr.spec.study {
        StudyId::Fig1c => fig1c_trial(tr),
        StudyId::Fig2c => data_sweep_trial(tr, false),
        StudyId::Fig3a => data_sweep_trial(tr, true),
        StudyId::Fig3b => fig3b_trial(tr),
        StudyId::Fig3c => fig3c_trial(tr),
        StudyId::NoiseConsistency => noise_trial(tr),
        StudyId::Thm1Coverage => bound_trial(tr),
        StudyId::SwingDemo => swing_trial(tr),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub study: String,
    pub point: usize,
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub t: usize,
    pub samples: usize,
    pub delta: f64,
    pub sigma: f64,
    pub metric: String,
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Aggregates per `(point, method)`: medians, means and 95% bands of each metric.
pub fn summarize_records(records: &[StudyRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, String), Vec<&StudyRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.point, r.method.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((point, method), rows) in groups {
        let first = rows[0];
        let failures = rows.iter().filter(|r| !r.is_ok()).count();
        let ok: Vec<&&StudyRecord> = rows.iter().filter(|r| r.is_ok()).collect();
        let mut metrics: Vec<(&str, Vec<f64>)> = vec![
            ("final_error", ok.iter().map(|r| r.final_error).collect()),
            ("control_error", ok.iter().map(|r| r.control_error).collect()),
            ("cost", ok.iter().map(|r| r.cost).collect()),
            ("cost_ratio", ok.iter().map(|r| r.cost_ratio).collect()),
            ("wall_time_s", ok.iter().map(|r| r.wall_time_s).collect()),
        ];
        if ok.iter().any(|r| !r.bound.is_nan()) {
            metrics.push((
                "within_bound",
                ok.iter().map(|r| if r.control_error <= r.bound { 1.0 } else { 0.0 }).collect(),
            ));
        }
        if ok.iter().any(|r| r.recovered.is_some()) {
            metrics.push((
                "recovered",
                ok.iter().map(|r| if r.recovered == Some(true) { 1.0 } else { 0.0 }).collect(),
            ));
        }
        for (name, values) in metrics {
            let s = summarize(&values);
            if s.count == 0 {
                continue;
            }
            out.push(SummaryRow {
                study: first.study.clone(),
                point,
                method: method.clone(),
                n: first.n,
                m: first.m,
                p: first.p,
                t: first.t,
                samples: first.samples,
                delta: first.delta,
                sigma: first.sigma,
                metric: name.into(),
                count: s.count,
                failures,
                mean: s.mean,
                median: s.median,
                lo: s.lo,
                hi: s.hi,
            });
        }
    }
    out
}

pub struct StudyOutput {
    pub records: Vec<StudyRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every `(point, rep)` trial. The timing study always uses one worker.
pub fn run_study(spec: &StudySpec, master_seed: u64, workers: usize, out_dir: Option<&Path>) -> Result<StudyOutput> {
    spec.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let keys = Keys {
        master: master_seed,
        study: spec.study,
    };
    let points = spec.points();
    let jobs: Vec<(usize, Point, usize)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..spec.reps).map(move |r| (i, *p, r)))
        .collect();
    let workers = if spec.study == StudyId::Fig3c { 1 } else { workers.max(1) };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let records: Vec<StudyRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(point_index, point, rep)| {
                run_trial(&Trial {
                    spec,
                    keys: &keys,
                    point_index,
                    point,
                    rep,
                    out_dir,
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = summarize_records(&records);
    if let Some(dir) = out_dir {
        write_rows(&dir.join("raw.csv"), &records)?;
        write_rows(&dir.join("summary.csv"), &summary)?;
        let meta = serde_json::json!({
            "spec": spec,
            "master_seed": master_seed,
            "workers": workers,
            "trials": jobs.len(),
            "failed_rows": records.iter().filter(|r| !r.is_ok()).count(),
            "netctl_version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    Ok(StudyOutput { records, summary })
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for id in StudyId::ALL {
            let spec = StudySpec::default_for(id);
            spec.validate().unwrap();
            let back = StudySpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let mut spec = StudySpec::default_for(StudyId::Fig2c);
        spec.samples.clear();
        assert!(spec.validate().is_err());
        let mut spec = StudySpec::default_for(StudyId::Fig3b);
        spec.reps = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn size_rules() {
        let spec = StudySpec::default_for(StudyId::Fig3c);
        let d = Dims::resolve(&spec, &spec.points()[1]);
        assert_eq!((d.n, d.m, d.p, d.t, d.samples), (2000, 20, 40, 50, 1100));
        let spec = StudySpec::default_for(StudyId::Fig3b);
        let d = Dims::resolve(&spec, &spec.points()[0]);
        assert_eq!((d.m, d.p, d.samples), (5, 50, 210));
    }

    #[test]
    fn small_sweep_is_deterministic() {
        let mut spec = StudySpec::default_for(StudyId::Fig2c);
        spec.n = vec![30];
        spec.samples = vec![8, 50];
        spec.m = Some(2);
        spec.p = Some(4);
        spec.t = Some(4);
        spec.reps = 3;
        let a = run_study(&spec, 11, 2, None).unwrap();
        let b = run_study(&spec, 11, 1, None).unwrap();
        let strip = |rs: &[StudyRecord]| {
            rs.iter()
                .map(|r| StudyRecord { wall_time_s: 0.0, ..r.clone() })
                .collect::<Vec<_>>()
        };
        assert_eq!(format!("{:?}", strip(&a.records)), format!("{:?}", strip(&b.records)));
        assert!(a.records.iter().all(|r| r.is_ok()));
        let at_full = a.records.iter().filter(|r| r.samples == 50 && r.method == "dd_optimal");
        for r in at_full {
            assert!(r.control_error < 1e-6, "{r:?}");
        }
    }
}
