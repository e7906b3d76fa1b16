//! Linear network model `x(t+1) = A x(t) + B u(t)`, `y(t) = C x(t)`, its
//! controllability objects and the model-based optimal controls.
//!
//! Stacked input vectors use reverse time: the top block is `u(T-1)` and the
//! bottom block is `u(0)`, matching the block order of `[CB CAB ... CA^{T-1}B]`.

use std::fmt::Write as _;
use std::path::Path;

use faer::{Col, Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector, DEFAULT_TOL};

/// Relative least-squares residual above which a target counts as unreachable.
pub const REACH_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LinearNetwork {
    a: Matrix,
    b: Matrix,
    c: Matrix,
}

impl LinearNetwork {
    pub fn new(a: Matrix, b: Matrix, c: Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        for m in [&a, &b, &c] {
            linalg::ensure_finite(m.as_ref())?;
        }
        Ok(Self { a, b, c })
    }

    /// Full-state output (`C = I`).
    pub fn full_state(a: Matrix, b: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, Mat::identity(n, n))
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    pub fn p(&self) -> usize {
        self.c.nrows()
    }
    pub fn a(&self) -> MatRef<'_, f64> {
        self.a.as_ref()
    }
    pub fn b(&self) -> MatRef<'_, f64> {
        self.b.as_ref()
    }
    pub fn c(&self) -> MatRef<'_, f64> {
        self.c.as_ref()
    }

    pub fn with_a(&self, a: Matrix) -> Result<Self> {
        Self::new(a, self.b.clone(), self.c.clone())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, m) in [("A", &self.a), ("B", &self.b), ("C", &self.c)] {
            write_matrix_block(&mut out, name, m.as_ref());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let blocks = parse_matrix_blocks(text)?;
        let take = |name: &str| {
            blocks
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, m)| m.clone())
                .ok_or_else(|| Error::Parse(format!("missing matrix {name}")))
        };
        Self::new(take("A")?, take("B")?, take("C")?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Appends `name rows cols` followed by one line per row.
pub fn write_matrix_block(out: &mut String, name: &str, m: MatRef<'_, f64>) {
    let _ = writeln!(out, "{name} {} {}", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
}

/// Parses the plain-text matrix format; `#` starts a comment line.
pub fn parse_matrix_blocks(text: &str) -> Result<Vec<(String, Matrix)>> {
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(str::split_whitespace);
    let mut blocks = Vec::new();
    while let Some(name) = tokens.next() {
        let mut dim = || -> Result<usize> {
            tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("truncated header for {name}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad dimension for {name}: {e}")))
        };
        let (rows, cols) = (dim()?, dim()?);
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("matrix {name} has too few values")))?;
            values.push(
                tok.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad value {tok:?} in {name}: {e}")))?,
            );
        }
        blocks.push((name.to_string(), linalg::from_row_major(rows, cols, &values)?));
    }
    Ok(blocks)
}

/// Weight matrix, either dense or a scaled identity that is never materialized.
#[derive(Debug, Clone)]
pub enum Weight {
    Scaled { dim: usize, scale: f64 },
    Dense(Matrix),
}

impl Weight {
    pub fn scaled(dim: usize, scale: f64) -> Self {
        Weight::Scaled { dim, scale }
    }

    pub fn dim(&self) -> usize {
        match self {
            Weight::Scaled { dim, .. } => *dim,
            Weight::Dense(m) => m.nrows(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Weight::Scaled { scale, .. } => *scale == 0.0,
            Weight::Dense(m) => m.norm_max() == 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Weight::Scaled { scale, .. } if *scale == 1.0)
    }

    pub fn validate(&self, strict: bool, name: &str) -> Result<()> {
        match self {
            Weight::Scaled { scale, .. } => {
                let ok = scale.is_finite() && if strict { *scale > 0.0 } else { *scale >= 0.0 };
                if !ok {
                    return Err(linalg::LinalgError::InvalidWeight(format!(
                        "{name} scale {scale} out of range"
                    ))
                    .into());
                }
            }
            Weight::Dense(m) => {
                linalg::check_weight(m.as_ref(), strict, name)?;
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            Weight::Scaled { dim, scale } => Mat::from_fn(*dim, *dim, |i, j| if i == j { *scale } else { 0.0 }),
            Weight::Dense(m) => m.clone(),
        }
    }

    /// Symmetric square root of the weight.
    pub fn sqrt(&self) -> Result<Weight> {
        Ok(match self {
            Weight::Scaled { dim, scale } => Weight::Scaled {
                dim: *dim,
                scale: scale.max(0.0).sqrt(),
            },
            Weight::Dense(m) => Weight::Dense(linalg::sym_sqrt(m.as_ref())?),
        })
    }

    /// `W * x`.
    pub fn apply(&self, x: MatRef<'_, f64>) -> Matrix {
        match self {
            Weight::Scaled { scale, .. } => {
                Mat::from_fn(x.nrows(), x.ncols(), |i, j| scale * x[(i, j)])
            }
            Weight::Dense(m) => m * x,
        }
    }

    /// `W + c I`.
    pub fn shifted(&self, c: f64) -> Weight {
        match self {
            Weight::Scaled { dim, scale } => Weight::Scaled {
                dim: *dim,
                scale: scale + c,
            },
            Weight::Dense(m) => Weight::Dense(Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
                m[(i, j)] + if i == j { c } else { 0.0 }
            })),
        }
    }

    pub fn quad(&self, v: &Vector) -> f64 {
        match self {
            Weight::Scaled { scale, .. } => scale * v.squared_norm_l2(),
            Weight::Dense(m) => {
                let mv = m * v;
                v.transpose() * &mv
            }
        }
    }
}

/// Horizon, weights and target of the constrained quadratic control problem.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub t: usize,
    pub q: Weight,
    pub r: Weight,
    pub y_f: Vector,
}

impl ControlProblem {
    pub fn new(t: usize, q: Weight, r: Weight, y_f: Vector, m: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        let p = y_f.nrows();
        if q.dim() != p * (t - 1) {
            return Err(Error::Dimension(format!("Q is {0}x{0}, expected {1}", q.dim(), p * (t - 1))));
        }
        if r.dim() != m * t {
            return Err(Error::Dimension(format!("R is {0}x{0}, expected {1}", r.dim(), m * t)));
        }
        linalg::ensure_finite(y_f.as_mat())?;
        q.validate(false, "Q")?;
        r.validate(true, "R")?;
        Ok(Self { t, q, r, y_f })
    }

    /// Per-step scalar weights `Q = q I`, `R = r I`.
    pub fn scalar(t: usize, m: usize, q: f64, r: f64, y_f: Vector) -> Result<Self> {
        let p = y_f.nrows();
        Self::new(
            t,
            Weight::scaled(p * t.saturating_sub(1), q),
            Weight::scaled(m * t, r),
            y_f,
            m,
        )
    }

    /// `Q = 0`, `R = I`.
    pub fn min_energy(t: usize, m: usize, y_f: Vector) -> Result<Self> {
        Self::scalar(t, m, 0.0, 1.0, y_f)
    }

    pub fn is_min_energy(&self) -> bool {
        self.q.is_zero() && self.r.is_identity()
    }

    /// `y_{1:T-1}ᵀ Q y_{1:T-1} + uᵀ R u` for an input applied to `net` from rest.
    pub fn cost(&self, net: &LinearNetwork, u: &ControlSequence) -> Result<f64> {
        let traj = simulate(net, u, &Col::zeros(net.n()))?;
        let p = net.p();
        let ymid = Col::from_fn(p * (self.t - 1), |i| traj.outputs[(i % p, 1 + i / p)]);
        Ok(self.q.quad(&ymid) + self.r.quad(u.stacked()))
    }
}

/// Stacked input `[u(T-1); ...; u(0)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSequence {
    stacked: Vector,
    m: usize,
}

impl ControlSequence {
    pub fn from_stacked(stacked: Vector, m: usize) -> Result<Self> {
        if m == 0 || stacked.nrows() % m != 0 {
            return Err(Error::Dimension(format!(
                "stacked input of length {} is not a multiple of m = {m}",
                stacked.nrows()
            )));
        }
        Ok(Self { stacked, m })
    }

    /// Builds from forward-time steps `u(0), u(1), ...`.
    pub fn from_steps(steps: &[Vec<f64>]) -> Result<Self> {
        let m = steps.first().map_or(0, Vec::len);
        if steps.iter().any(|s| s.len() != m) {
            return Err(Error::Dimension("input steps have unequal lengths".into()));
        }
        let t = steps.len();
        let stacked = Col::from_fn(m * t, |i| steps[t - 1 - i / m][i % m]);
        Self::from_stacked(stacked, m)
    }

    pub fn zeros(m: usize, t: usize) -> Self {
        Self {
            stacked: Col::zeros(m * t),
            m,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn horizon(&self) -> usize {
        self.stacked.nrows() / self.m
    }
    pub fn stacked(&self) -> &Vector {
        &self.stacked
    }
    pub fn into_stacked(self) -> Vector {
        self.stacked
    }

    /// `u(t)` in forward time.
    pub fn at(&self, t: usize) -> Vec<f64> {
        let block = self.horizon() - 1 - t;
        (0..self.m).map(|i| self.stacked[block * self.m + i]).collect()
    }

    pub fn steps(&self) -> Vec<Vec<f64>> {
        (0..self.horizon()).map(|t| self.at(t)).collect()
    }

    pub fn energy(&self) -> f64 {
        self.stacked.squared_norm_l2()
    }
}

/// States `x(0..=T)` and outputs `y(0..=T)` stored column-wise.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Matrix,
    pub outputs: Matrix,
}

impl Trajectory {
    pub fn x(&self, t: usize) -> Vector {
        self.states.col(t).to_owned()
    }
    pub fn y(&self, t: usize) -> Vector {
        self.outputs.col(t).to_owned()
    }
    pub fn final_output(&self) -> Vector {
        self.y(self.outputs.ncols() - 1)
    }
}

pub fn simulate(net: &LinearNetwork, u: &ControlSequence, x0: &Vector) -> Result<Trajectory> {
    if u.m() != net.m() || x0.nrows() != net.n() {
        return Err(Error::Dimension(format!(
            "input width {} / state {} against network m = {}, n = {}",
            u.m(),
            x0.nrows(),
            net.m(),
            net.n()
        )));
    }
    let t_len = u.horizon();
    let mut states = Mat::zeros(net.n(), t_len + 1);
    states.col_mut(0).copy_from(x0);
    for t in 0..t_len {
        let ut = linalg::col_from_slice(&u.at(t));
        let next = net.a() * states.col(t) + net.b() * &ut;
        states.col_mut(t + 1).copy_from(&next);
    }
    let outputs = net.c() * &states;
    Ok(Trajectory { states, outputs })
}

/// `C_T = [CB CAB ... CA^{T-1}B]`, built by running right-multiplication of `CA^t` by `A`.
pub fn output_ctrb_matrix(net: &LinearNetwork, t: usize) -> Matrix {
    let (p, m) = (net.p(), net.m());
    let mut out = Mat::zeros(p, m * t);
    let mut cat = net.c().to_owned();
    for k in 0..t {
        let block = &cat * net.b();
        out.as_mut().submatrix_mut(0, k * m, p, m).copy_from(&block);
        if k + 1 < t {
            cat = &cat * net.a();
        }
    }
    out
}

/// `W_T = C_T C_Tᵀ`.
pub fn output_gramian(net: &LinearNetwork, t: usize) -> Matrix {
    let ct = output_ctrb_matrix(net, t);
    let w = &ct * ct.transpose();
    linalg::symmetrize(w.as_ref())
}

/// Block anti-triangular map from the stacked input to `[y(1); ...; y(T-1)]`.
pub fn hankel_blocks(net: &LinearNetwork, t: usize) -> Matrix {
    let (p, m) = (net.p(), net.m());
    if t < 2 {
        return Mat::zeros(0, m * t);
    }
    let markov = output_ctrb_matrix(net, t - 1);
    let mut h = Mat::zeros(p * (t - 1), m * t);
    for k in 0..t - 1 {
        for j in (t - 1 - k)..t {
            let d = k + j + 1 - t;
            h.as_mut()
                .submatrix_mut(k * p, j * m, p, m)
                .copy_from(markov.as_ref().submatrix(0, d * m, p, m));
        }
    }
    h
}

fn reachable_lsq(ct: MatRef<'_, f64>, y_f: &Vector, tol: f64) -> Result<(linalg::SvdFactorization, usize, Vector)> {
    let f = linalg::svd(ct)?;
    let k = f.rank(tol);
    let a = f.pinv_apply(k, y_f.as_mat()).col(0).to_owned();
    let resid = (ct * &a - y_f).norm_l2();
    let target_norm = y_f.norm_l2();
    if resid > REACH_TOL * target_norm.max(f64::MIN_POSITIVE) && resid > 0.0 {
        return Err(Error::Unreachable {
            residual: resid,
            target_norm,
        });
    }
    Ok((f, k, a))
}

/// Batch model-based optimum `(I - K (M K)† M) C_T† y_f`, `MᵀM = H_TᵀQH_T + R`.
pub fn model_based_optimal(net: &LinearNetwork, prob: &ControlProblem) -> Result<ControlSequence> {
    model_based_optimal_tol(net, prob, DEFAULT_TOL)
}

pub fn model_based_optimal_tol(
    net: &LinearNetwork,
    prob: &ControlProblem,
    tol: f64,
) -> Result<ControlSequence> {
    check_problem(net, prob)?;
    let t = prob.t;
    let ct = output_ctrb_matrix(net, t);
    let (_, _, a) = reachable_lsq(ct.as_ref(), &prob.y_f, tol)?;
    if prob.is_min_energy() {
        return ControlSequence::from_stacked(a, net.m());
    }
    let k = linalg::kernel_basis(ct.as_ref(), tol)?;
    if k.ncols() == 0 {
        return ControlSequence::from_stacked(a, net.m());
    }
    let qh = prob.q.sqrt()?.apply(hankel_blocks(net, t).as_ref());
    let rh = prob.r.sqrt()?.apply(Mat::<f64>::identity(net.m() * t, net.m() * t).as_ref());
    let msq = linalg::vstack(&[qh.as_ref(), rh.as_ref()])?;
    let mk = &msq * &k;
    let ma = &msq * &a;
    let beta = linalg::pinv_solve(mk.as_ref(), ma.as_mat(), tol)?;
    let u = &a - &k * beta.col(0);
    ControlSequence::from_stacked(u, net.m())
}

fn check_problem(net: &LinearNetwork, prob: &ControlProblem) -> Result<()> {
    if prob.y_f.nrows() != net.p() || prob.r.dim() != net.m() * prob.t {
        return Err(Error::Dimension(format!(
            "problem with |y_f| = {}, R {} does not match network p = {}, m = {}",
            prob.y_f.nrows(),
            prob.r.dim(),
            net.p(),
            net.m()
        )));
    }
    Ok(())
}

/// How the Gramian is applied to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GramianSolve {
    #[default]
    Lu,
    ExplicitInverse,
}

/// Gramian formula `u(t) = Bᵀ (Aᵀ)^{T-t-1} Cᵀ W_T^{-1} y_f`.
pub fn model_based_min_energy_gramian(net: &LinearNetwork, t: usize, y_f: &Vector) -> Result<ControlSequence> {
    model_based_min_energy_gramian_with(net, t, y_f, GramianSolve::Lu)
}

pub fn model_based_min_energy_gramian_with(
    net: &LinearNetwork,
    t: usize,
    y_f: &Vector,
    mode: GramianSolve,
) -> Result<ControlSequence> {
    if y_f.nrows() != net.p() || t == 0 {
        return Err(Error::Dimension("target length or horizon".into()));
    }
    let w = output_gramian(net, t);
    let singular = |_| Error::NotTargetControllable("output Gramian is singular".into());
    let lam = match mode {
        GramianSolve::Lu => linalg::solve(w.as_ref(), y_f.as_mat()).map_err(singular)?,
        GramianSolve::ExplicitInverse => linalg::inverse(w.as_ref()).map_err(singular)? * y_f.as_mat(),
    };
    let m = net.m();
    let mut z: Vector = net.c().transpose() * lam.col(0);
    let mut stacked = Col::zeros(m * t);
    for k in 0..t {
        let blk = net.b().transpose() * &z;
        for i in 0..m {
            stacked[k * m + i] = blk[i];
        }
        if k + 1 < t {
            z = net.a().transpose() * &z;
        }
    }
    ControlSequence::from_stacked(stacked, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllabilityReport {
    pub controllable: bool,
    pub rank: usize,
    pub p: usize,
}

pub fn is_output_controllable(net: &LinearNetwork, t: usize, tol: f64) -> Result<ControllabilityReport> {
    let rank = linalg::rank(output_ctrb_matrix(net, t).as_ref(), tol)?;
    Ok(ControllabilityReport {
        controllable: rank == net.p(),
        rank,
        p: net.p(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrator() -> LinearNetwork {
        let a = linalg::from_row_major(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let b = linalg::from_row_major(2, 1, &[0.0, 1.0]).unwrap();
        LinearNetwork::full_state(a, b).unwrap()
    }

    fn vec2(a: f64, b: f64) -> Vector {
        linalg::col_from_slice(&[a, b])
    }

    #[test]
    fn stacking_round_trip() {
        let steps = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let u = ControlSequence::from_steps(&steps).unwrap();
        assert_eq!(linalg::col_to_vec(u.stacked()), vec![5.0, 6.0, 3.0, 4.0, 1.0, 2.0]);
        assert_eq!(u.steps(), steps);
        assert_eq!(u.at(0), vec![1.0, 2.0]);
    }

    #[test]
    fn constant_input_passthrough() {
        let i3 = Mat::<f64>::identity(3, 3);
        let net = LinearNetwork::full_state(Mat::zeros(3, 3), i3).unwrap();
        let v = vec![1.0, -2.0, 0.5];
        let u = ControlSequence::from_steps(&vec![v.clone(); 4]).unwrap();
        let tr = simulate(&net, &u, &Col::zeros(3)).unwrap();
        for t in 1..=4 {
            assert_eq!(linalg::col_to_vec(&tr.x(t)), v);
        }
    }

    #[test]
    fn integrator_two_steps() {
        let net = integrator();
        let u = ControlSequence::from_steps(&[vec![1.0], vec![0.0]]).unwrap();
        let tr = simulate(&net, &u, &Col::zeros(2)).unwrap();
        assert_eq!(linalg::col_to_vec(&tr.x(2)), vec![1.0, 0.0]);
        let c2 = output_ctrb_matrix(&net, 2);
        assert_eq!(c2, linalg::from_row_major(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap());
        let w = output_gramian(&net, 2);
        assert_eq!(w, Mat::<f64>::identity(2, 2));
    }

    #[test]
    fn zero_dynamics_ctrb() {
        let b = linalg::from_row_major(2, 1, &[1.0, 2.0]).unwrap();
        let net = LinearNetwork::full_state(Mat::zeros(2, 2), b).unwrap();
        let ct = output_ctrb_matrix(&net, 3);
        assert_eq!((ct[(0, 0)], ct[(1, 0)]), (1.0, 2.0));
        assert_eq!(ct.as_ref().subcols(1, 2).norm_l2(), 0.0);
    }

    #[test]
    fn hankel_shapes() {
        let net = integrator();
        let h2 = hankel_blocks(&net, 2);
        assert_eq!((h2.nrows(), h2.ncols()), (2, 2));
        assert_eq!(h2.as_ref().col(0).norm_l2(), 0.0);
        assert_eq!(h2[(1, 1)], 1.0);
        assert_eq!(hankel_blocks(&net, 1).nrows(), 0);

        let i2 = Mat::<f64>::identity(2, 2);
        let net = LinearNetwork::new(Mat::zeros(2, 2), i2.clone(), i2).unwrap();
        let h = hankel_blocks(&net, 4);
        for k in 0..3 {
            for j in 0..4 {
                let blk = h.as_ref().submatrix(2 * k, 2 * j, 2, 2);
                let expect = if j + k == 3 { 1.0 } else { 0.0 };
                assert_eq!(blk[(0, 0)], expect);
                assert_eq!(blk[(0, 1)], 0.0);
            }
        }
    }

    #[test]
    fn integrator_optimal_controls() {
        let net = integrator();
        let y = vec2(1.0, 0.0);
        let prob = ControlProblem::min_energy(2, 1, y.clone()).unwrap();
        let u = model_based_optimal(&net, &prob).unwrap();
        assert!((u.at(0)[0] - 1.0).abs() < 1e-14 && u.at(1)[0].abs() < 1e-14);
        let g = model_based_min_energy_gramian(&net, 2, &y).unwrap();
        assert!((g.stacked() - u.stacked()).norm_l2() < 1e-14);
        let e = model_based_min_energy_gramian_with(&net, 2, &y, GramianSolve::ExplicitInverse).unwrap();
        assert!((e.stacked() - u.stacked()).norm_l2() < 1e-14);
    }

    #[test]
    fn integrator_controllability() {
        let net = integrator();
        assert!(is_output_controllable(&net, 2, DEFAULT_TOL).unwrap().controllable);
        let r1 = is_output_controllable(&net, 1, DEFAULT_TOL).unwrap();
        assert!(!r1.controllable);
        assert_eq!(r1.rank, 1);
    }

    #[test]
    fn unreachable_target_reports_residual() {
        let net = integrator();
        let prob = ControlProblem::min_energy(1, 1, vec2(1.0, 0.0)).unwrap();
        match model_based_optimal(&net, &prob) {
            Err(Error::Unreachable { residual, .. }) => assert!((residual - 1.0).abs() < 1e-12),
            other => panic!("expected unreachable, got {other:?}"),
        }
    }

    #[test]
    fn singular_gramian_is_an_error() {
        let net = integrator();
        assert!(matches!(
            model_based_min_energy_gramian(&net, 1, &vec2(1.0, 0.0)),
            Err(Error::NotTargetControllable(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let net = integrator();
        let back = LinearNetwork::from_text(&format!("# comment\n{}", net.to_text())).unwrap();
        assert_eq!(back.a(), net.a());
        assert_eq!(back.b(), net.b());
        assert_eq!(back.c(), net.c());
        assert!(LinearNetwork::from_text("A 2 2\n1 2 3").is_err());
    }

    #[test]
    fn weights_validate() {
        let y = vec2(1.0, 0.0);
        assert!(ControlProblem::scalar(2, 1, 0.0, 0.0, y.clone()).is_err());
        assert!(ControlProblem::scalar(2, 1, -1.0, 1.0, y.clone()).is_err());
        let bad = Weight::Dense(linalg::from_row_major(2, 2, &[1.0, 2.0, 0.0, 1.0]).unwrap());
        assert!(ControlProblem::new(2, Weight::scaled(2, 1.0), bad, y, 1).is_err());
    }
}
