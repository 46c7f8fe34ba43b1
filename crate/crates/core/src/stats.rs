//! Mergeable accumulators, regressions and two-sample tests.

use rayon::prelude::*;
use serde::Serialize;

/// Paths per reduction block. Blocks are merged in index order, so the
/// reduction tree is fixed regardless of thread count.
pub const BLOCK: usize = 512;

pub trait Merge {
    fn merge(&mut self, other: Self);
}

/// Runs `f(acc, i)` for `i in 0..n` in fixed-size blocks, in parallel, and
/// merges block results left to right.
pub fn block_reduce<A, I, F>(n: usize, init: I, f: F) -> A
where
    A: Merge + Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, usize) + Sync,
{
    let n_blocks = n.div_ceil(BLOCK);
    let parts: Vec<A> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = init();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
                f(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        total.merge(p);
    }
    total
}

impl<T: Merge> Merge for Vec<T> {
    fn merge(&mut self, other: Self) {
        assert_eq!(self.len(), other.len());
        for (a, b) in self.iter_mut().zip(other) {
            a.merge(b);
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge(&mut self, other: Self) {
        self.0.merge(other.0);
        self.1.merge(other.1);
    }
}

/// Welford mean/variance accumulator with Chan's merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut m = Self::new();
        xs.iter().for_each(|&x| m.push(x));
        m
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

impl Merge for MeanVar {
    fn merge(&mut self, o: Self) {
        if o.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.n as f64 / n as f64;
        self.m2 += o.m2 + d * d * (self.n as f64) * (o.n as f64) / n as f64;
        self.mean = mean;
        self.n = n;
    }
}

/// Mean of `exp(x_i)` accumulated in log space.
///
/// Stores `max`, `Σ exp(x−max)` and `Σ exp(2(x−max))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMeanExp {
    pub n: u64,
    max: f64,
    s1: f64,
    s2: f64,
}

impl Default for LogMeanExp {
    fn default() -> Self {
        LogMeanExp { n: 0, max: f64::NEG_INFINITY, s1: 0.0, s2: 0.0 }
    }
}

impl LogMeanExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_log(&mut self, x: f64) {
        self.n += 1;
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            let r = (self.max - x).exp();
            self.s1 = self.s1 * r + 1.0;
            self.s2 = self.s2 * r * r + 1.0;
            self.max = x;
        } else {
            let e = (x - self.max).exp();
            self.s1 += e;
            self.s2 += e * e;
        }
    }

    /// `ln( (1/n) Σ exp(x_i) )`.
    pub fn log_mean(&self) -> f64 {
        if self.n == 0 || self.s1 == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.max + (self.s1 / self.n as f64).ln()
    }

    pub fn mean(&self) -> f64 {
        self.log_mean().exp()
    }

    /// Standard error of the mean divided by the mean.
    pub fn rel_std_error(&self) -> f64 {
        if self.n < 2 || self.s1 == 0.0 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = ((self.s2 - self.s1 * self.s1 / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt() / (self.s1 / n)
    }

    pub fn std_error(&self) -> f64 {
        if self.s1 == 0.0 {
            return 0.0;
        }
        self.rel_std_error() * self.mean()
    }
}

impl Merge for LogMeanExp {
    fn merge(&mut self, o: Self) {
        let n = self.n + o.n;
        if o.s1 == 0.0 {
            self.n = n;
            return;
        }
        if self.s1 == 0.0 {
            *self = LogMeanExp { n, ..o };
            return;
        }
        let m = self.max.max(o.max);
        let ra = (self.max - m).exp();
        let rb = (o.max - m).exp();
        self.s1 = self.s1 * ra + o.s1 * rb;
        self.s2 = self.s2 * ra * ra + o.s2 * rb * rb;
        self.max = m;
        self.n = n;
    }
}

/// Ordinary least squares `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2);
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    LinearFit { slope, intercept, slope_se }
}

/// Log–log slope of `y` against `x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Weighted least squares with design rows `design[i]` and weights `w[i]`.
/// Returns coefficients and their standard errors.
pub fn weighted_least_squares(design: &[Vec<f64>], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = design.len();
    let p = design[0].len();
    assert!(n > p, "need more observations than parameters");
    let mut xtx = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut xty = nalgebra::DVector::<f64>::zeros(p);
    for i in 0..n {
        for a in 0..p {
            xty[a] += w[i] * design[i][a] * y[i];
            for b in 0..p {
                xtx[(a, b)] += w[i] * design[i][a] * design[i][b];
            }
        }
    }
    let inv = xtx.try_inverse().expect("singular design");
    let beta = &inv * &xty;
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..p).map(|a| design[i][a] * beta[a]).sum();
            w[i] * (y[i] - fit).powi(2)
        })
        .sum();
    let sigma2 = rss / (n - p) as f64;
    let se = (0..p).map(|a| (sigma2 * inv[(a, a)]).max(0.0).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}

/// Result of a two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value and the usual small-sample
/// correction of the argument.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    let p = kolmogorov_q((sq + 0.12 + 0.11 / sq) * d);
    KsResult { statistic: d, p_value: p, n_a: na, n_b: nb }
}

/// Linear-interpolated empirical quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
