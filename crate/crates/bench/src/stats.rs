//! Order statistics for per-point summaries.

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// 2.5th percentile.
    pub lo: f64,
    /// 97.5th percentile.
    pub hi: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// NaN entries are skipped; infinities are kept.
pub fn summarize(values: &[f64]) -> Summary {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return Summary {
            count: 0,
            mean: f64::NAN,
            median: f64::NAN,
            lo: f64::NAN,
            hi: f64::NAN,
        };
    }
    v.sort_by(|a, b| a.total_cmp(b));
    Summary {
        count: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        median: percentile_sorted(&v, 0.5),
        lo: percentile_sorted(&v, 0.025),
        hi: percentile_sorted(&v, 0.975),
    }
}

pub fn median(values: &[f64]) -> f64 {
    summarize(values).median
}
