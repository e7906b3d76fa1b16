//! Swing-equation generator grid, perturbation data harvesting and fault recovery.
//!
//! Control coordinates are deviations from the equilibrium of every
//! non-reference generator: `x = [wrapped phase deviations; frequencies]`,
//! so `n = 2(g-1)` states and `m = g-1` inputs.

use std::f64::consts::PI;
use std::path::Path;

use faer::{Col, Mat};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::DataMatrices;
use crate::linalg::{Matrix, Vector};
use crate::network::ControlSequence;
use crate::seed;

pub const DEFAULT_TS: f64 = 2.5e-4;
pub const DIVERGENCE_GUARD: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingGrid {
    #[serde(rename = "H")]
    pub h: Vec<f64>,
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(rename = "Pm")]
    pub pm: Vec<f64>,
    #[serde(rename = "E")]
    pub e: Vec<f64>,
    #[serde(rename = "Gii")]
    pub gii: Vec<f64>,
    /// Transfer conductances; the diagonal is ignored.
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    /// Transfer susceptances; the diagonal is ignored.
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub f_b: f64,
    pub reference: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingState {
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
}

impl SwingState {
    pub fn zeros(g: usize) -> Self {
        Self {
            delta: vec![0.0; g],
            omega: vec![0.0; g],
        }
    }

    pub fn inf_norm(&self) -> f64 {
        self.delta.iter().chain(&self.omega).fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn check_square(mat: &[Vec<f64>], g: usize, name: &str) -> Result<()> {
    if mat.len() != g || mat.iter().any(|r| r.len() != g) {
        return Err(Error::Dimension(format!("{name} must be {g} x {g}")));
    }
    for i in 0..g {
        for j in 0..g {
            let (a, b) = (mat[i][j], mat[j][i]);
            if !a.is_finite() {
                return Err(Error::Invalid(format!("{name} has a non-finite entry")));
            }
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::Invalid(format!("{name} is not symmetric at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

impl SwingGrid {
    pub fn generators(&self) -> usize {
        self.h.len()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.generators();
        if g < 2 {
            return Err(Error::Invalid("a grid needs at least two generators".into()));
        }
        for (name, v) in [("D", &self.d), ("Pm", &self.pm), ("E", &self.e), ("Gii", &self.gii)] {
            if v.len() != g {
                return Err(Error::Dimension(format!("{name} has {} entries, expected {g}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Invalid(format!("{name} has a non-finite entry")));
            }
        }
        if self.h.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::Invalid("inertia constants must be positive".into()));
        }
        check_square(&self.g, g, "G")?;
        check_square(&self.b, g, "B")?;
        if !(self.f_b > 0.0) || !self.f_b.is_finite() {
            return Err(Error::Invalid("base frequency must be positive".into()));
        }
        if self.reference >= g {
            return Err(Error::Invalid(format!("reference index {} out of range", self.reference)));
        }
        Ok(())
    }

    /// Same machines with a different coupling network.
    pub fn with_coupling(&self, g: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let out = Self { g, b, ..self.clone() };
        out.validate()?;
        Ok(out)
    }

    /// Copy with the lines `(i, j)` set to zero in both coupling matrices.
    pub fn with_lines_tripped(&self, lines: &[(usize, usize)]) -> Result<Self> {
        let (mut g, mut b) = (self.g.clone(), self.b.clone());
        for &(i, j) in lines {
            if i >= self.generators() || j >= self.generators() {
                return Err(Error::Invalid(format!("line ({i}, {j}) out of range")));
            }
            g[i][j] = 0.0;
            g[j][i] = 0.0;
            b[i][j] = 0.0;
            b[j][i] = 0.0;
        }
        self.with_coupling(g, b)
    }

    /// Non-reference generators in index order.
    pub fn controlled(&self) -> Vec<usize> {
        (0..self.generators()).filter(|&i| i != self.reference).collect()
    }

    pub fn state_dim(&self) -> usize {
        2 * (self.generators() - 1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid: Self = serde_json::from_str(text)?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Electrical power `-Gii E_i^2 + sum_j E_i E_j (G_ij cos + B_ij sin)` per generator.
    pub fn electrical_power(&self, delta: &[f64]) -> Vec<f64> {
        let pairs = Coupling::new(self);
        let mut out = vec![0.0; self.generators()];
        pairs.power(self, delta, &mut out);
        out
    }
}

/// Nonzero couplings `(i, j, E_i E_j G_ij, E_i E_j B_ij)` with `i < j`.
struct Coupling {
    pairs: Vec<(usize, usize, f64, f64)>,
    rate: Vec<f64>,
}

impl Coupling {
    fn new(grid: &SwingGrid) -> Self {
        let gn = grid.generators();
        let mut pairs = Vec::new();
        for i in 0..gn {
            for j in i + 1..gn {
                let (gij, bij) = (grid.g[i][j], grid.b[i][j]);
                if gij != 0.0 || bij != 0.0 {
                    let ee = grid.e[i] * grid.e[j];
                    pairs.push((i, j, ee * gij, ee * bij));
                }
            }
        }
        let rate = grid.h.iter().map(|h| PI * grid.f_b / h).collect();
        Self { pairs, rate }
    }

    fn power(&self, grid: &SwingGrid, delta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = -grid.gii[i] * grid.e[i] * grid.e[i];
        }
        for &(i, j, eg, eb) in &self.pairs {
            let (s, c) = (delta[i] - delta[j]).sin_cos();
            out[i] += eg * c + eb * s;
            out[j] += eg * c - eb * s;
        }
    }

    /// Frequency derivative into `out`; reference entry is zero.
    fn accel(&self, grid: &SwingGrid, state: &SwingState, out: &mut [f64]) {
        self.power(grid, &state.delta, out);
        for i in 0..out.len() {
            out[i] = self.rate[i] * (-grid.d[i] * state.omega[i] + grid.pm[i] + out[i]);
        }
        out[grid.reference] = 0.0;
    }

    fn step(&self, grid: &SwingGrid, state: &mut SwingState, input: Option<&[f64]>, dt: f64, scratch: &mut [f64]) {
        self.accel(grid, state, scratch);
        let r = grid.reference;
        for i in 0..scratch.len() {
            if i == r {
                continue;
            }
            state.delta[i] += dt * state.omega[i];
            let f = input.map_or(0.0, |u| u[i]);
            state.omega[i] += dt * (scratch[i] + f);
        }
    }
}

/// Time derivative of the state; the reference generator's entries are zero.
pub fn swing_rhs(grid: &SwingGrid, state: &SwingState) -> SwingState {
    let c = Coupling::new(grid);
    let mut omega = vec![0.0; grid.generators()];
    c.accel(grid, state, &mut omega);
    let mut delta = state.omega.clone();
    delta[grid.reference] = 0.0;
    SwingState { delta, omega }
}

/// One forward Euler step; `input` is a per-generator forcing added to the
/// frequency derivative (reference entry ignored).
pub fn euler_step(grid: &SwingGrid, state: &SwingState, input: &[f64], dt: f64) -> Result<SwingState> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("step size must be positive, got {dt}")));
    }
    if input.len() != grid.generators() {
        return Err(Error::Dimension(format!("input has {} entries, expected {}", input.len(), grid.generators())));
    }
    let c = Coupling::new(grid);
    let mut next = state.clone();
    let mut scratch = vec![0.0; grid.generators()];
    c.step(grid, &mut next, Some(input), dt, &mut scratch);
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: SwingState,
    /// `|rhs|_inf` at the returned state.
    pub residual: f64,
    pub iterations: usize,
}

/// Overdamped relaxation `delta += h (Pm + Pe(delta))` with zero frequencies,
/// the infinite-damping limit of the swing dynamics, until `|rhs|_inf <= tol`.
pub fn find_equilibrium(grid: &SwingGrid, guess: &[f64], tol: f64, max_iter: usize) -> Result<Equilibrium> {
    grid.validate()?;
    let gn = grid.generators();
    if guess.len() != gn {
        return Err(Error::Dimension(format!("guess has {} entries, expected {gn}", guess.len())));
    }
    let c = Coupling::new(grid);
    let mut row = vec![0.0_f64; gn];
    for &(i, j, eg, eb) in &c.pairs {
        let w = eg.abs() + eb.abs();
        row[i] += w;
        row[j] += w;
    }
    let h = 0.5 / row.iter().cloned().fold(1e-12, f64::max);
    let mut state = SwingState {
        delta: guess.to_vec(),
        omega: vec![0.0; gn],
    };
    let mut pe = vec![0.0; gn];
    for it in 0..=max_iter {
        c.power(grid, &state.delta, &mut pe);
        let mut resid = 0.0_f64;
        for i in (0..gn).filter(|&i| i != grid.reference) {
            resid = resid.max((c.rate[i] * (grid.pm[i] + pe[i])).abs());
        }
        if !resid.is_finite() {
            break;
        }
        if resid <= tol {
            return Ok(Equilibrium {
                state,
                residual: resid,
                iterations: it,
            });
        }
        for i in (0..gn).filter(|&i| i != grid.reference) {
            state.delta[i] += h * (grid.pm[i] + pe[i]);
        }
    }
    Err(Error::NoConvergence(format!("no equilibrium within {max_iter} relaxation steps")))
}

/// Deviation coordinates `[wrapped delta - delta*; omega]` over non-reference generators.
pub fn deviation(grid: &SwingGrid, eq: &SwingState, state: &SwingState) -> Vector {
    let idx = grid.controlled();
    let k = idx.len();
    Col::from_fn(2 * k, |r| {
        if r < k {
            wrap_angle(state.delta[idx[r]] - eq.delta[idx[r]])
        } else {
            state.omega[idx[r - k]] - eq.omega[idx[r - k]]
        }
    })
}

/// Inverse of [`deviation`] with the reference generator held at equilibrium.
pub fn from_deviation(grid: &SwingGrid, eq: &SwingState, x: &[f64]) -> SwingState {
    let idx = grid.controlled();
    let k = idx.len();
    let mut s = eq.clone();
    for (r, &i) in idx.iter().enumerate() {
        s.delta[i] += x[r];
        s.omega[i] += x[k + r];
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarvestOptions {
    pub x0_std: f64,
    pub input_std: f64,
    pub guard: f64,
    /// Total attempts allowed per requested episode before giving up.
    pub max_attempts_factor: usize,
}

impl Default for HarvestOptions {
    fn default() -> Self {
        Self {
            x0_std: 0.1,
            input_std: 0.1,
            guard: DIVERGENCE_GUARD,
            max_attempts_factor: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Harvest {
    pub data: DataMatrices,
    pub rejected: usize,
    pub max_abs_omega: f64,
}

/// Per-step frequency increments `u` enter as forcing `u / ts`, so one
/// Euler step adds exactly `u` to each controlled frequency.
fn increments_as_forcing(grid: &SwingGrid, u: &[f64], ts: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (r, i) in grid.controlled().into_iter().enumerate() {
        out[i] = u[r] / ts;
    }
}

/// Runs `episodes` perturbed episodes of `t` steps around `eq` and records
/// them in deviation coordinates. Inputs are per-step frequency increments.
pub fn harvest_perturbation_data<R: Rng + ?Sized>(
    grid: &SwingGrid,
    eq: &SwingState,
    episodes: usize,
    t: usize,
    ts: f64,
    opts: &HarvestOptions,
    rng: &mut R,
) -> Result<Harvest> {
    grid.validate()?;
    if episodes == 0 || t == 0 {
        return Err(Error::Invalid("need at least one episode of at least one step".into()));
    }
    if !(ts > 0.0) {
        return Err(Error::Invalid("sampling period must be positive".into()));
    }
    if !(opts.x0_std >= 0.0) || !(opts.input_std >= 0.0) {
        return Err(Error::Invalid("perturbation deviations must be non-negative".into()));
    }
    let gn = grid.generators();
    let m = gn - 1;
    let n = 2 * m;
    let c = Coupling::new(grid);
    let nx0 = Normal::new(0.0, opts.x0_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let nu = Normal::new(0.0, opts.input_std).map_err(|e| Error::Invalid(e.to_string()))?;
    let master: u64 = rng.random();

    let mut u_mat = Mat::<f64>::zeros(m * t, episodes);
    let mut ymid = Mat::<f64>::zeros(n * (t - 1), episodes);
    let mut yt = Mat::<f64>::zeros(n, episodes);
    let mut x0m = Mat::<f64>::zeros(n, episodes);

    let mut scratch = vec![0.0; gn];
    let mut forcing = vec![0.0; gn];
    let mut steps = vec![0.0; m * t];
    let mut rows = vec![0.0; n * t];
    let mut rejected = 0usize;
    let mut attempts = 0usize;
    let mut max_abs_omega = 0.0_f64;
    let budget = episodes * opts.max_attempts_factor.max(1);

    let mut ep = 0;
    while ep < episodes {
        if attempts >= budget {
            return Err(Error::NoConvergence(format!(
                "{rejected} episodes diverged; gave up after {attempts} attempts"
            )));
        }
        let mut er = seed::rng(seed::derive(master, &[ep as u64, attempts as u64]));
        attempts += 1;
        let x0: Vec<f64> = (0..n).map(|_| nx0.sample(&mut er)).collect();
        steps.iter_mut().for_each(|v| *v = nu.sample(&mut er));
        let mut state = from_deviation(grid, eq, &x0);
        let mut ok = true;
        let mut peak = 0.0_f64;
        for k in 0..t {
            increments_as_forcing(grid, &steps[k * m..(k + 1) * m], ts, &mut forcing);
            c.step(grid, &mut state, Some(&forcing), ts, &mut scratch);
            let x = deviation(grid, eq, &state);
            let raw = state
                .delta
                .iter()
                .zip(&eq.delta)
                .map(|(a, b)| (a - b).abs())
                .chain(state.omega.iter().map(|w| w.abs()))
                .fold(0.0, f64::max);
            if !raw.is_finite() || raw > opts.guard {
                ok = false;
                break;
            }
            for r in 0..n {
                rows[k * n + r] = x[r];
            }
            peak = peak.max(x.iter().skip(m).fold(0.0, |a, v| a.max(v.abs())));
        }
        if !ok {
            rejected += 1;
            continue;
        }
        max_abs_omega = max_abs_omega.max(peak);
        for k in 0..t {
            for r in 0..m {
                u_mat[((t - 1 - k) * m + r, ep)] = steps[k * m + r];
            }
        }
        for i in 0..n * (t - 1) {
            ymid[(i, ep)] = rows[i];
        }
        for r in 0..n {
            yt[(r, ep)] = rows[(t - 1) * n + r];
            x0m[(r, ep)] = x0[r];
        }
        ep += 1;
    }
    let data = DataMatrices::new(u_mat, ymid, yt, Some(x0m), t, n)?.with_seed(master);
    Ok(Harvest {
        data,
        rejected,
        max_abs_omega,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTiming {
    pub onset: f64,
    pub clearing: f64,
    pub control_start: f64,
    pub control_duration: f64,
    pub end: f64,
    pub ts: f64,
}

impl Default for ScenarioTiming {
    fn default() -> Self {
        Self {
            onset: 2.0,
            clearing: 2.5,
            control_start: 2.5,
            control_duration: 0.1,
            end: 15.0,
            ts: DEFAULT_TS,
        }
    }
}

impl ScenarioTiming {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ts > 0.0
            && self.onset >= 0.0
            && self.onset < self.clearing
            && self.clearing <= self.control_start
            && self.control_duration >= 0.0
            && self.control_start + self.control_duration <= self.end;
        if !ok {
            return Err(Error::Invalid(format!("inconsistent scenario timing {self:?}")));
        }
        Ok(())
    }

    fn steps(&self, secs: f64) -> usize {
        (secs / self.ts).round() as usize
    }

    /// Number of control samples in the control window.
    pub fn control_steps(&self) -> usize {
        self.steps(self.control_duration)
    }
}

#[derive(Debug, Clone)]
pub struct FaultScenario {
    pub pre: SwingGrid,
    pub faulted: SwingGrid,
    pub post: SwingGrid,
    /// Equilibrium of the post-fault grid, the steering target.
    pub equilibrium: SwingState,
    pub timing: ScenarioTiming,
}

impl FaultScenario {
    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        for g in [&self.pre, &self.faulted, &self.post] {
            g.validate()?;
        }
        let gn = self.pre.generators();
        if self.faulted.generators() != gn || self.post.generators() != gn {
            return Err(Error::Dimension("grids in a scenario must have the same generators".into()));
        }
        if self.equilibrium.delta.len() != gn || self.equilibrium.omega.len() != gn {
            return Err(Error::Dimension("equilibrium has the wrong size".into()));
        }
        Ok(())
    }
}

pub enum RecoveryControl<'a> {
    None,
    /// A precomputed sequence of per-step frequency increments.
    Fixed(&'a ControlSequence),
    /// Computes the sequence from the deviation state at control start.
    FromState(&'a dyn Fn(&Vector) -> Result<ControlSequence>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryCriteria {
    pub sync_tol: f64,
    pub settle_tol: f64,
    /// Fraction of the run at the end over which `|rhs|_inf` must stay small.
    pub settle_fraction: f64,
}

impl Default for RecoveryCriteria {
    fn default() -> Self {
        Self {
            sync_tol: 1e-2,
            settle_tol: 1e-2,
            settle_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryRun {
    pub times: Vec<f64>,
    pub states: Vec<SwingState>,
    pub recovered: bool,
    pub final_max_omega: f64,
    pub tail_max_rhs: f64,
    /// Deviation state when the control window opened.
    pub control_start_state: Vector,
    pub control_energy: f64,
}

impl RecoveryRun {
    /// CSV rows `time, delta_1..delta_g, omega_1..omega_g`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let g = self.states.first().map_or(0, |s| s.delta.len());
        let mut header = vec!["time".to_string()];
        header.extend((1..=g).map(|i| format!("delta_{i}")));
        header.extend((1..=g).map(|i| format!("omega_{i}")));
        w.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.6}")];
            row.extend(s.delta.iter().chain(&s.omega).map(|v| format!("{v:.10e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Integrates pre-fault, faulted, cleared, control window and free run.
/// States are recorded every `record_every` steps.
pub fn run_fault_recovery(
    scenario: &FaultScenario,
    control: RecoveryControl<'_>,
    criteria: &RecoveryCriteria,
    record_every: usize,
) -> Result<RecoveryRun> {
    scenario.validate()?;
    let tm = &scenario.timing;
    let gn = scenario.pre.generators();
    let m = gn - 1;
    let onset = tm.steps(tm.onset);
    let clear = tm.steps(tm.clearing);
    let c_start = tm.steps(tm.control_start);
    let total = tm.steps(tm.end);
    let settle_from = total - ((total as f64) * criteria.settle_fraction).ceil() as usize;
    let record_every = record_every.max(1);

    let couplings = [
        Coupling::new(&scenario.pre),
        Coupling::new(&scenario.faulted),
        Coupling::new(&scenario.post),
    ];
    let mut state = scenario.equilibrium.clone();
    let mut scratch = vec![0.0; gn];
    let mut forcing = vec![0.0; gn];
    let mut times = vec![0.0];
    let mut states = vec![state.clone()];
    let mut plan: Option<ControlSequence> = None;
    let mut control_start_state = Col::zeros(2 * m);
    let mut tail_max_rhs = 0.0_f64;

    for k in 0..total {
        let (grid, cp) = if k < onset {
            (&scenario.pre, &couplings[0])
        } else if k < clear {
            (&scenario.faulted, &couplings[1])
        } else {
            (&scenario.post, &couplings[2])
        };
        if k == c_start {
            control_start_state = deviation(grid, &scenario.equilibrium, &state);
            plan = match &control {
                RecoveryControl::None => None,
                RecoveryControl::Fixed(seq) => Some((*seq).clone()),
                RecoveryControl::FromState(f) => Some(f(&control_start_state)?),
            };
            if let Some(p) = &plan {
                if p.m() != m {
                    return Err(Error::Dimension(format!("control has {} channels, grid needs {m}", p.m())));
                }
            }
        }
        let input = match &plan {
            Some(p) if k >= c_start && k - c_start < p.horizon() => {
                increments_as_forcing(grid, &p.at(k - c_start), tm.ts, &mut forcing);
                Some(forcing.as_slice())
            }
            _ => None,
        };
        if k >= settle_from {
            cp.accel(grid, &state, &mut scratch);
            let r = scratch.iter().chain(&state.omega).fold(0.0_f64, |a, v| a.max(v.abs()));
            tail_max_rhs = tail_max_rhs.max(r);
        }
        cp.step(grid, &mut state, input, tm.ts, &mut scratch);
        if (k + 1) % record_every == 0 || k + 1 == total {
            times.push((k + 1) as f64 * tm.ts);
            states.push(state.clone());
        }
    }
    let final_max_omega = state.omega.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let recovered = final_max_omega.is_finite()
        && final_max_omega < criteria.sync_tol
        && tail_max_rhs.is_finite()
        && tail_max_rhs < criteria.settle_tol;
    Ok(RecoveryRun {
        times,
        states,
        recovered,
        final_max_omega,
        tail_max_rhs,
        control_start_state,
        control_energy: plan.map_or(0.0, |p| p.energy()),
    })
}

/// Serialized grid, fault and timing description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwingConfig {
    pub grid: SwingGrid,
    /// Coupling matrices while the fault is active.
    pub faulted_g: Vec<Vec<f64>>,
    pub faulted_b: Vec<Vec<f64>>,
    /// Phases of a known equilibrium of the normal grid, used as the relaxation guess.
    pub equilibrium_guess: Vec<f64>,
    pub timing: ScenarioTiming,
}

impl SwingConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.grid.validate()?;
        cfg.grid.with_coupling(cfg.faulted_g.clone(), cfg.faulted_b.clone())?;
        cfg.timing.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Scenario whose pre- and post-fault grids are the normal grid.
    pub fn scenario(&self, eq_tol: f64) -> Result<FaultScenario> {
        let eq = find_equilibrium(&self.grid, &self.equilibrium_guess, eq_tol, 1_000_000)?;
        let faulted = self.grid.with_coupling(self.faulted_g.clone(), self.faulted_b.clone())?;
        Ok(FaultScenario {
            pre: self.grid.clone(),
            faulted,
            post: self.grid.clone(),
            equilibrium: eq.state,
            timing: self.timing.clone(),
        })
    }
}

/// Synthetic ten-machine ring. Susceptances are negative so that the
/// `+B sin` coupling term is restoring; mechanical powers are chosen so the
/// listed phases are an exact equilibrium. The fault trips lines (4,5) and (5,6).
pub fn default_config() -> SwingConfig {
    const G: usize = 10;
    const COUPLING: f64 = 2.0;
    const LOAD: f64 = 2.5;
    let h = vec![50.0, 30.0, 35.0, 28.0, 26.0, 35.0, 26.0, 24.0, 34.0, 42.0];
    let shape = [0.0, 0.35, 0.5, 0.3, 0.45, 0.7, 0.4, 0.25, 0.2, 0.1];
    let delta_star: Vec<f64> = shape.iter().map(|s| LOAD * s).collect();
    let mut b = vec![vec![0.0; G]; G];
    for i in 0..G {
        let j = (i + 1) % G;
        b[i][j] = -COUPLING;
        b[j][i] = -COUPLING;
    }
    let mut grid = SwingGrid {
        h,
        d: vec![0.3; G],
        pm: vec![0.0; G],
        e: vec![1.02; G],
        gii: vec![0.05; G],
        g: vec![vec![0.0; G]; G],
        b,
        f_b: 60.0,
        reference: 0,
    };
    grid.pm = grid.electrical_power(&delta_star).into_iter().map(|p| -p).collect();
    let faulted = grid.with_lines_tripped(&[(4, 5), (5, 6)]).expect("valid default lines");
    SwingConfig {
        faulted_g: faulted.g,
        faulted_b: faulted.b,
        grid,
        equilibrium_guess: delta_star,
        timing: ScenarioTiming::default(),
    }
}

/// Stacks deviation samples as a matrix, one column per recorded state.
pub fn deviation_matrix(grid: &SwingGrid, eq: &SwingState, states: &[SwingState]) -> Matrix {
    let n = grid.state_dim();
    let mut out = Mat::zeros(n, states.len());
    for (j, s) in states.iter().enumerate() {
        let x = deviation(grid, eq, s);
        for i in 0..n {
            out[(i, j)] = x[i];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(pm1: f64) -> SwingGrid {
        SwingGrid {
            h: vec![5.0, 5.0],
            d: vec![1.0, 1.0],
            pm: vec![0.0, pm1],
            e: vec![1.0, 1.0],
            gii: vec![0.0, 0.0],
            g: vec![vec![0.0; 2]; 2],
            b: vec![vec![0.0, -1.0], vec![-1.0, 0.0]],
            f_b: 60.0,
            reference: 0,
        }
    }

    #[test]
    fn identical_pair_at_rest_is_equilibrium() {
        let mut grid = pair(0.0);
        grid.g = vec![vec![0.0, 0.2], vec![0.2, 0.0]];
        grid.gii = vec![0.1, 0.1];
        grid.e = vec![1.1, 1.1];
        let pm = 0.1 * 1.21 - 1.21 * 0.2;
        grid.pm = vec![pm, pm];
        let d = swing_rhs(&grid, &SwingState::zeros(2));
        assert!(d.inf_norm() < 1e-12);
    }

    #[test]
    fn decoupled_balanced_grid_stays_put() {
        let mut grid = pair(0.0);
        grid.b = vec![vec![0.0; 2]; 2];
        grid.gii = vec![0.3, 0.3];
        grid.pm = vec![0.3, 0.3];
        let s0 = SwingState {
            delta: vec![0.0, 0.7],
            omega: vec![0.0, 0.0],
        };
        let s1 = euler_step(&grid, &s0, &[0.0, 0.0], 1e-3).unwrap();
        assert_eq!(s0, s1);
        let eq = find_equilibrium(&grid, &s0.delta, 1e-12, 10).unwrap();
        assert_eq!(eq.iterations, 0);
    }

    #[test]
    fn input_only_moves_frequency() {
        let grid = pair(0.3);
        let s0 = SwingState {
            delta: vec![0.0, 0.2],
            omega: vec![0.0, 0.1],
        };
        let a = euler_step(&grid, &s0, &[0.0, 0.0], 1e-3).unwrap();
        let b = euler_step(&grid, &s0, &[5.0, 5.0], 1e-3).unwrap();
        assert_eq!(a.delta, b.delta);
        assert!((b.omega[1] - a.omega[1] - 5e-3).abs() < 1e-15);
        assert_eq!(b.omega[0], 0.0);
        assert_eq!(b.delta[0], 0.0);
    }

    #[test]
    fn pair_equilibrium_and_infeasible_load() {
        let eq = find_equilibrium(&pair(0.5), &[0.0, 0.0], 1e-8, 100_000).unwrap();
        assert!(swing_rhs(&pair(0.5), &eq.state).inf_norm() <= 1e-8);
        assert!((eq.state.delta[1] - (0.5_f64).asin()).abs() < 1e-6);
        assert!(matches!(
            find_equilibrium(&pair(1.5), &[0.0, 0.0], 1e-8, 20_000),
            Err(Error::NoConvergence(_))
        ));
    }

    #[test]
    fn wrap_angle_range() {
        for x in [-7.0, -PI, -1.0, 0.0, 2.0, PI, 3.5, 100.0] {
            let w = wrap_angle(x);
            assert!(w > -PI && w <= PI);
            assert!(((x - w) / (2.0 * PI)).fract().abs() < 1e-12 || ((x - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn default_config_is_exact_equilibrium() {
        let cfg = default_config();
        let sc = cfg.scenario(1e-10).unwrap();
        assert_eq!(sc.equilibrium.delta, cfg.equilibrium_guess);
        let back = SwingConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn zero_variance_harvest_is_zero() {
        let cfg = default_config();
        let sc = cfg.scenario(1e-10).unwrap();
        let opts = HarvestOptions {
            x0_std: 0.0,
            input_std: 0.0,
            ..Default::default()
        };
        let h = harvest_perturbation_data(&cfg.grid, &sc.equilibrium, 3, 5, DEFAULT_TS, &opts, &mut seed::rng(1)).unwrap();
        assert_eq!(h.data.u.nrows(), 9 * 5);
        assert_eq!(h.data.yt.nrows(), 18);
        assert!(h.data.ymid.norm_max() < 1e-12 && h.data.yt.norm_max() < 1e-12);
    }
}
