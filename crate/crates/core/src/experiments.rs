//! Experiment records: episodic runs, runs from measured initial states,
//! sliding windows over one long trajectory, and additive noise.

use std::path::Path;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::LinearNetwork;

/// Noiseless copies kept next to corrupted data, for test harnesses only.
#[derive(Debug, Clone)]
pub struct CleanRecord {
    pub u: Matrix,
    pub ymid: Matrix,
    pub yt: Matrix,
}

/// Data matrices with one experiment per column.
///
/// `u` is `mT x N` in reverse-time stacking, `ymid` is `p(T-1) x N` holding
/// `y(1)` on top through `y(T-1)`, `yt` is `p x N`, `x0` is `n x N` when present.
#[derive(Debug, Clone)]
pub struct DataMatrices {
    pub u: Matrix,
    pub ymid: Matrix,
    pub yt: Matrix,
    pub x0: Option<Matrix>,
    pub t: usize,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    pub seed: Option<u64>,
    clean: Option<CleanRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DataMeta {
    #[serde(rename = "T")]
    pub t: usize,
    pub m: usize,
    pub p: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub samples: usize,
    pub seed: Option<u64>,
}

impl DataMatrices {
    pub fn new(
        u: Matrix,
        ymid: Matrix,
        yt: Matrix,
        x0: Option<Matrix>,
        t: usize,
        n: usize,
    ) -> Result<Self> {
        if t == 0 || u.nrows() % t != 0 {
            return Err(Error::Dimension(format!("U has {} rows, not a multiple of T = {t}", u.nrows())));
        }
        let m = u.nrows() / t;
        let p = yt.nrows();
        let cols = u.ncols();
        let shape_ok = ymid.nrows() == p * (t - 1)
            && ymid.ncols() == cols
            && yt.ncols() == cols
            && x0.as_ref().is_none_or(|x| x.nrows() == n && x.ncols() == cols);
        if !shape_ok {
            return Err(Error::Dimension(format!(
                "U {}x{}, Ymid {}x{}, YT {}x{} inconsistent for T = {t}",
                u.nrows(),
                u.ncols(),
                ymid.nrows(),
                ymid.ncols(),
                yt.nrows(),
                yt.ncols()
            )));
        }
        for mat in [&u, &ymid, &yt].into_iter().chain(x0.as_ref()) {
            linalg::ensure_finite(mat.as_ref())?;
        }
        Ok(Self {
            u,
            ymid,
            yt,
            x0,
            t,
            m,
            p,
            n,
            seed: None,
            clean: None,
        })
    }

    pub fn samples(&self) -> usize {
        self.u.ncols()
    }

    pub fn ground_truth(&self) -> Option<&CleanRecord> {
        self.clean.as_ref()
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn meta(&self) -> DataMeta {
        DataMeta {
            t: self.t,
            m: self.m,
            p: self.p,
            n: self.n,
            samples: self.samples(),
            seed: self.seed,
        }
    }

    /// Keeps the first `k` experiments.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.samples());
        let cut = |m: &Matrix| m.as_ref().subcols(0, k).to_owned();
        Self {
            u: cut(&self.u),
            ymid: cut(&self.ymid),
            yt: cut(&self.yt),
            x0: self.x0.as_ref().map(cut),
            clean: self.clean.as_ref().map(|c| CleanRecord {
                u: cut(&c.u),
                ymid: cut(&c.ymid),
                yt: cut(&c.yt),
            }),
            ..*self
        }
    }

    /// Writes `U.csv`, `Ymid.csv`, `YT.csv`, optional `X0.csv` and `meta.json`.
    /// Ground truth is deliberately left out.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join("U.csv"), self.u.as_ref())?;
        write_csv(&dir.join("Ymid.csv"), self.ymid.as_ref())?;
        write_csv(&dir.join("YT.csv"), self.yt.as_ref())?;
        if let Some(x0) = &self.x0 {
            write_csv(&dir.join("X0.csv"), x0.as_ref())?;
        }
        std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta())?)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let meta: DataMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("meta.json"))?)?;
        let n_cols = meta.samples;
        let u = read_csv(&dir.join("U.csv"), meta.m * meta.t, n_cols)?;
        let ymid = read_csv(&dir.join("Ymid.csv"), meta.p * (meta.t - 1), n_cols)?;
        let yt = read_csv(&dir.join("YT.csv"), meta.p, n_cols)?;
        let x0_path = dir.join("X0.csv");
        let x0 = if x0_path.exists() {
            Some(read_csv(&x0_path, meta.n, n_cols)?)
        } else {
            None
        };
        let mut data = Self::new(u, ymid, yt, x0, meta.t, meta.n)?;
        data.seed = meta.seed;
        Ok(data)
    }
}

pub fn write_csv(path: &Path, m: MatRef<'_, f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for i in 0..m.nrows() {
        w.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a headerless numeric CSV; an empty file is accepted for zero-row matrices.
pub fn read_csv(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!("{}: row with {} fields, expected {cols}", path.display(), rec.len())));
        }
        for f in rec.iter() {
            values.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{}: {f:?}: {e}", path.display())))?,
            );
        }
        seen += 1;
    }
    if seen != rows {
        return Err(Error::Parse(format!("{}: {seen} rows, expected {rows}", path.display())));
    }
    Ok(linalg::from_row_major(rows, cols, &values)?)
}

/// Standard-normal `mT x N` input record.
pub fn random_inputs<R: Rng + ?Sized>(m: usize, t: usize, samples: usize, rng: &mut R) -> Matrix {
    gaussian(m * t, samples, 1.0, rng)
}

pub fn gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> Matrix {
    let mut out = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            let z: f64 = StandardNormal.sample(rng);
            out[(i, j)] = std * z;
        }
    }
    out
}

fn run_batch(net: &LinearNetwork, u: &Matrix, x0: Option<&Matrix>, t: usize) -> Result<DataMatrices> {
    let (n, m, p) = (net.n(), net.m(), net.p());
    if t == 0 || u.nrows() != m * t {
        return Err(Error::Dimension(format!("U has {} rows, expected mT = {}", u.nrows(), m * t)));
    }
    let cols = u.ncols();
    if let Some(x) = x0 {
        if x.nrows() != n || x.ncols() != cols {
            return Err(Error::Dimension(format!("X0 is {}x{}, expected {n}x{cols}", x.nrows(), x.ncols())));
        }
    }
    let mut x = x0.cloned().unwrap_or_else(|| Mat::zeros(n, cols));
    let mut ymid = Mat::zeros(p * (t - 1), cols);
    let mut yt = Mat::zeros(p, cols);
    for k in 0..t {
        let uk = u.as_ref().subrows((t - 1 - k) * m, m);
        x = net.a() * &x + net.b() * uk;
        let y = net.c() * &x;
        if k + 1 < t {
            ymid.as_mut().subrows_mut(k * p, p).copy_from(&y);
        } else {
            yt = y;
        }
    }
    DataMatrices::new(u.clone(), ymid, yt, x0.cloned(), t, n)
}

/// Experiments from the zero state.
pub fn run_episodic(net: &LinearNetwork, u: &Matrix, t: usize) -> Result<DataMatrices> {
    run_batch(net, u, None, t)
}

/// Experiments from measured initial states (one column of `x0` each).
pub fn run_with_initial_states(net: &LinearNetwork, u: &Matrix, x0: &Matrix, t: usize) -> Result<DataMatrices> {
    run_batch(net, u, Some(x0), t)
}

/// Cuts windows of length `t` out of one trajectory.
///
/// `u_long` is `m x S` with column `k` equal to `u(k)`; `y_long` is `p x S`
/// and `x_long`, if given, `n x S`. Window `s` uses `u(s..s+T-1)`,
/// `y(s+1..s+T)` and `x(s)`.
pub fn sliding_window(
    u_long: MatRef<'_, f64>,
    y_long: MatRef<'_, f64>,
    x_long: Option<MatRef<'_, f64>>,
    t: usize,
    stride: usize,
) -> Result<DataMatrices> {
    let s_len = u_long.ncols();
    if t == 0 || stride == 0 {
        return Err(Error::Invalid("horizon and stride must be positive".into()));
    }
    if s_len < t + 1 || y_long.ncols() != s_len || x_long.is_some_and(|x| x.ncols() != s_len) {
        return Err(Error::Dimension(format!(
            "trajectory of length {s_len} cannot hold a window of length {}",
            t + 1
        )));
    }
    let (m, p) = (u_long.nrows(), y_long.nrows());
    let starts: Vec<usize> = (0..s_len - t).step_by(stride).collect();
    let cols = starts.len();
    let u = Mat::from_fn(m * t, cols, |i, j| u_long[(i % m, starts[j] + t - 1 - i / m)]);
    let ymid = Mat::from_fn(p * (t - 1), cols, |i, j| y_long[(i % p, starts[j] + 1 + i / p)]);
    let yt = Mat::from_fn(p, cols, |i, j| y_long[(i, starts[j] + t)]);
    let n = x_long.map_or(0, |x| x.nrows());
    let x0 = x_long.map(|x| Mat::from_fn(n, cols, |i, j| x[(i, starts[j])]));
    DataMatrices::new(u, ymid, yt, x0, t, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Uniform,
}

/// Variances of the additive noise on `U`, `Ymid` and `YT`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_u2: f64,
    pub sigma_y2: f64,
    pub sigma_yt2: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn new(sigma_u2: f64, sigma_y2: f64, sigma_yt2: f64) -> Result<Self> {
        let spec = Self {
            sigma_u2,
            sigma_y2,
            sigma_yt2,
            distribution: NoiseDistribution::Gaussian,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.sigma_u2, self.sigma_y2, self.sigma_yt2] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("noise variance {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, var: f64, rng: &mut R) -> f64 {
        match self.distribution {
            NoiseDistribution::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                var.sqrt() * z
            }
            NoiseDistribution::Uniform => {
                let half = (3.0 * var).sqrt();
                rng.random_range(-half..=half)
            }
        }
    }

    fn corrupt<R: Rng + ?Sized>(&self, m: &Matrix, var: f64, rng: &mut R) -> Matrix {
        if var == 0.0 {
            return m.clone();
        }
        let mut out = m.clone();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                out[(i, j)] += self.sample(var, rng);
            }
        }
        out
    }
}

/// Adds independent zero-mean noise to each channel and keeps the clean copy.
pub fn add_noise<R: Rng + ?Sized>(data: &DataMatrices, spec: &NoiseSpec, rng: &mut R) -> Result<DataMatrices> {
    spec.validate()?;
    let clean = data.clean.clone().unwrap_or_else(|| CleanRecord {
        u: data.u.clone(),
        ymid: data.ymid.clone(),
        yt: data.yt.clone(),
    });
    Ok(DataMatrices {
        u: spec.corrupt(&data.u, spec.sigma_u2, rng),
        ymid: spec.corrupt(&data.ymid, spec.sigma_y2, rng),
        yt: spec.corrupt(&data.yt, spec.sigma_yt2, rng),
        x0: data.x0.clone(),
        clean: Some(clean),
        ..*data
    })
}
