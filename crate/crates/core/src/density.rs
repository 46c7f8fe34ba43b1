//! Monte Carlo transition densities and verification of two-sided bounds.
//!
//! Given the rotation path, `X_t` is Gaussian with mean `Z_t x₀` and
//! covariance `C_t`, so `f_{x₀}(t, v) = E[φ_{C_t}(v − Z_t x₀)]`. All estimators
//! stream paths once and evaluate every query sharing a path at once (common
//! random numbers across the grid).

use crate::brownian::{walk_path, BmConfig, Scheme};
use crate::error::{config_err, Error, Result};
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::model::{covariance_c_bar, det_variational_bound, effective_time, eta_bounds, CovarianceQuadrature, GaussianFactor, InitialLaw};
use crate::rng::{self, Substream};
use crate::stats::{block_reduce, loglog_fit, weighted_least_squares, LinearFit, LogMeanExp, MeanVar, Merge};
use serde::Serialize;
use std::f64::consts::PI;

/// Condition number above which a sampled `C_t` is skipped.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative standard error above which an estimate is rejected.
pub const MAX_REL_SE: f64 = 0.2;

/// Path simulation settings shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl DensityConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        DensityConfig { n_paths, dt, seed, scheme: Scheme::Geometric }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(config_err("n_paths must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(config_err("dt must be positive"));
        }
        Ok(())
    }
}

/// Grid layout: the path horizon and the step index of each requested time.
#[derive(Debug, Clone)]
struct TimeGrid {
    cfg: BmConfig,
    steps: Vec<usize>,
}

impl TimeGrid {
    fn new(n: usize, times: &[f64], dc: &DensityConfig) -> Result<Self> {
        dc.validate()?;
        if times.is_empty() {
            return Err(config_err("time grid is empty"));
        }
        let tmax = times.iter().copied().fold(0.0, f64::max);
        if !(times.iter().all(|&t| t > 0.0)) {
            return Err(config_err("times must be positive"));
        }
        let n_steps = (tmax / dc.dt).round().max(1.0) as usize;
        let dt = tmax / n_steps as f64;
        let steps = times
            .iter()
            .map(|&t| {
                let k = (t / dt).round() as usize;
                if (k as f64 * dt - t).abs() > 1e-9 * t.max(1.0) || k == 0 {
                    Err(config_err(format!("time {t} is not a multiple of dt = {dt}")))
                } else {
                    Ok(k)
                }
            })
            .collect::<Result<_>>()?;
        let cfg = BmConfig::new(n, tmax, n_steps, dc.seed)?.with_scheme(dc.scheme);
        Ok(TimeGrid { cfg, steps })
    }
}

/// Resolvent and conditional covariance of one path at one grid time.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub t: f64,
    pub z: Mat,
    pub c: Mat,
}

/// Walks path `index` and calls `f(j, snapshot)` for each requested time `j`.
fn for_each_snapshot<F: FnMut(usize, &Snapshot)>(grid: &TimeGrid, law: &InitialLaw, index: u64, mut f: F) {
    let mut q = CovarianceQuadrature::new(law);
    let mut prev = Mat::identity(grid.cfg.n);
    let mut prev_t = 0.0;
    walk_path(&grid.cfg, index, |k, t, u, ls| {
        if k > 0 {
            q.push(prev_t, t, &prev, u.mat());
        }
        prev = *u.mat();
        prev_t = t;
        for (j, &kj) in grid.steps.iter().enumerate() {
            if kj == k {
                let snap = Snapshot { t, z: u.mat().scale(ls.exp()), c: q.value(t, u.mat()) };
                f(j, &snap);
            }
        }
    });
}

/// Monte Carlo density value with its standard error.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub t: f64,
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub value: f64,
    pub std_error: f64,
    /// `ln value`, finite even when `value` underflows.
    pub log_value: f64,
    pub rel_std_error: f64,
    pub n_paths: usize,
    pub n_skipped: u64,
}

impl DensityEstimate {
    fn from_acc(t: f64, x0: &Vector, v: &Vector, acc: &LogMeanExp, skipped: u64, n_paths: usize) -> Self {
        DensityEstimate {
            t,
            x0: x0.to_vec(),
            v: v.to_vec(),
            value: acc.mean(),
            std_error: acc.std_error(),
            log_value: acc.log_mean(),
            rel_std_error: if acc.n > 1 { acc.rel_std_error() } else { 0.0 },
            n_paths,
            n_skipped: skipped,
        }
    }

    /// `ln(value + k·se)`, `−∞` if the argument is not positive.
    pub fn log_shifted(&self, k: f64) -> f64 {
        let r = 1.0 + k * self.rel_std_error;
        if r <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_value + r.ln()
        }
    }
}

/// One `(t, x₀, v)` evaluation point.
#[derive(Debug, Clone, Copy)]
pub struct Query {
    pub t: f64,
    pub x0: Vector,
    pub v: Vector,
}

#[derive(Clone)]
struct DensityAcc {
    lme: Vec<LogMeanExp>,
    skipped: Vec<u64>,
}

impl Merge for DensityAcc {
    fn merge(&mut self, o: Self) {
        self.lme.merge(o.lme);
        for (a, b) in self.skipped.iter_mut().zip(o.skipped) {
            *a += b;
        }
    }
}

fn distinct_times(ts: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for t in ts {
        if !out.iter().any(|&s| (s - t).abs() <= 1e-12 * t.max(1.0)) {
            out.push(t);
        }
    }
    out
}

fn time_slot(times: &[f64], t: f64) -> usize {
    times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.max(1.0)).expect("time registered")
}

/// Densities at all queries from one set of `n_paths` paths.
pub fn mc_density_batch(law: &InitialLaw, dc: &DensityConfig, queries: &[Query]) -> Result<Vec<DensityEstimate>> {
    if law.label() == crate::model::LawLabel::DegenerateLine && law.energy() == 0.0 {
        return Err(config_err("law is a Dirac mass"));
    }
    let times = distinct_times(queries.iter().map(|q| q.t));
    let grid = TimeGrid::new(law.dim(), &times, dc)?;
    let by_time: Vec<Vec<usize>> =
        (0..times.len()).map(|j| (0..queries.len()).filter(|&i| time_slot(&times, queries[i].t) == j).collect()).collect();
    let nq = queries.len();
    let acc = block_reduce(
        dc.n_paths,
        || DensityAcc { lme: vec![LogMeanExp::new(); nq], skipped: vec![0; nq] },
        |acc, p| {
            for_each_snapshot(&grid, law, p as u64, |j, s| match GaussianFactor::new(&s.c, MAX_CONDITION) {
                Ok(g) => {
                    for &i in &by_time[j] {
                        let q = &queries[i];
                        acc.lme[i].push_log(g.log_density(&(q.v - s.z * q.x0)));
                    }
                }
                Err(_) => {
                    for &i in &by_time[j] {
                        acc.skipped[i] += 1;
                    }
                }
            });
        },
    );
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, q)| DensityEstimate::from_acc(q.t, &q.x0, &q.v, &acc.lme[i], acc.skipped[i], dc.n_paths))
        .collect())
}

/// `f̂_{x₀}(t, v)` averaged over `n_paths` paths.
pub fn mc_density(x0: &Vector, v: &Vector, t: f64, law: &InitialLaw, dc: &DensityConfig) -> Result<DensityEstimate> {
    let mut r = mc_density_batch(law, dc, &[Query { t, x0: *x0, v: *v }])?;
    Ok(r.remove(0))
}

/// Marginal density `f_t(v) = ∫ f₀(x₀) f_{x₀}(t, v) dx₀` with `x₀` drawn from
/// the law itself (substream `Initial` of each path).
pub fn mc_marginal_density(law: &InitialLaw, dc: &DensityConfig, queries: &[(f64, Vector)]) -> Result<Vec<DensityEstimate>> {
    let times = distinct_times(queries.iter().map(|q| q.0));
    let grid = TimeGrid::new(law.dim(), &times, dc)?;
    let nq = queries.len();
    let acc = block_reduce(
        dc.n_paths,
        || DensityAcc { lme: vec![LogMeanExp::new(); nq], skipped: vec![0; nq] },
        |acc, p| {
            let x0 = law.sample(&mut rng::stream(dc.seed, p as u64, Substream::Initial));
            for_each_snapshot(&grid, law, p as u64, |j, s| {
                let g = GaussianFactor::new(&s.c, MAX_CONDITION);
                for (i, (t, v)) in queries.iter().enumerate() {
                    if time_slot(&times, *t) != j {
                        continue;
                    }
                    match &g {
                        Ok(g) => acc.lme[i].push_log(g.log_density(&(*v - s.z * x0))),
                        Err(_) => acc.skipped[i] += 1,
                    }
                }
            });
        },
    );
    let zero = Vector::zeros(law.dim());
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, (t, v))| DensityEstimate::from_acc(*t, &zero, v, &acc.lme[i], acc.skipped[i], dc.n_paths))
        .collect())
}

/// `∫ f̂ dv` over the cube `[−L, L]^N` by the midpoint rule, `N ≤ 3`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalizationCheck {
    pub half_width: f64,
    pub points_per_axis: usize,
    pub integral: f64,
}

pub fn normalization_integral(
    x0: &Vector,
    t: f64,
    law: &InitialLaw,
    dc: &DensityConfig,
    half_width: f64,
    points_per_axis: usize,
) -> Result<NormalizationCheck> {
    let n = law.dim();
    if n > 3 {
        return Err(config_err("normalization grid is limited to N <= 3"));
    }
    let h = 2.0 * half_width / points_per_axis as f64;
    let total = points_per_axis.pow(n as u32);
    let queries: Vec<Query> = (0..total)
        .map(|mut idx| {
            let v = Vector::from_fn(n, |_| {
                let k = idx % points_per_axis;
                idx /= points_per_axis;
                -half_width + (k as f64 + 0.5) * h
            });
            Query { t, x0: *x0, v }
        })
        .collect();
    let est = mc_density_batch(law, dc, &queries)?;
    Ok(NormalizationCheck { half_width, points_per_axis, integral: est.iter().map(|e| e.value).sum::<f64>() * h.powi(n as i32) })
}

/// Per-sample check of the `(η̄, η̲)` envelopes at one `(t, x₀, v)`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    pub t: f64,
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
    pub log_lower: f64,
    pub log_estimate: f64,
    pub log_upper: f64,
    pub n_samples: usize,
    /// Samples outside the envelopes built on `τ(t)`.
    pub violations: usize,
    /// Samples outside the envelopes built on `t` itself.
    pub literal_violations: usize,
}

impl EnvelopeCheck {
    /// `lower ≤ estimate ≤ upper`, compared in log space.
    pub fn ordered(&self) -> bool {
        let tol = |x: f64| 1e-12 * x.abs().max(1.0);
        self.log_lower <= self.log_estimate + tol(self.log_estimate) && self.log_estimate <= self.log_upper + tol(self.log_upper)
    }
}

#[derive(Clone)]
struct EnvAcc {
    lo: Vec<LogMeanExp>,
    mid: Vec<LogMeanExp>,
    hi: Vec<LogMeanExp>,
    bad: Vec<usize>,
    bad_literal: Vec<usize>,
}

impl Merge for EnvAcc {
    fn merge(&mut self, o: Self) {
        self.lo.merge(o.lo);
        self.mid.merge(o.mid);
        self.hi.merge(o.hi);
        for (a, b) in self.bad.iter_mut().zip(o.bad) {
            *a += b;
        }
        for (a, b) in self.bad_literal.iter_mut().zip(o.bad_literal) {
            *a += b;
        }
    }
}

/// `ln` of the isotropic Gaussian envelope `(2π a)^{−N/2} exp(−r²/(2b))`.
fn log_envelope(n: usize, a: f64, b: f64, r2: f64) -> f64 {
    -0.5 * n as f64 * (2.0 * PI * a).ln() - r2 / (2.0 * b)
}

/// Envelopes `(2π η̲ E s)^{−N/2} E[exp(−|v−Z_t x₀|²/(2η̄ E s))]` and the
/// mirror upper bound, with `s = τ(t)`, on the same path samples as the
/// density estimate. Eigenvalue slack `10 Δt ‖K‖` covers the quadrature of
/// the anisotropic part `K`; the isotropic part is integrated exactly.
pub fn sample_envelopes(law: &InitialLaw, dc: &DensityConfig, queries: &[Query]) -> Result<Vec<EnvelopeCheck>> {
    let (eta_bar, eta_under) = eta_bounds(law)?;
    let n = law.dim();
    let e = law.energy();
    let times = distinct_times(queries.iter().map(|q| q.t));
    let grid = TimeGrid::new(n, &times, dc)?;
    let eps = quadrature_slack(law, grid.cfg.dt());
    let nq = queries.len();
    let tol = 1e-12;
    let acc = block_reduce(
        dc.n_paths,
        || EnvAcc {
            lo: vec![LogMeanExp::new(); nq],
            mid: vec![LogMeanExp::new(); nq],
            hi: vec![LogMeanExp::new(); nq],
            bad: vec![0; nq],
            bad_literal: vec![0; nq],
        },
        |acc, p| {
            for_each_snapshot(&grid, law, p as u64, |j, s| {
                let tau = effective_time(n, s.t);
                let (lmin, lmax) = (eta_bar * e * tau - eps, eta_under * e * tau + eps);
                let (lmin_lit, lmax_lit) = (eta_bar * e * s.t - eps, eta_under * e * s.t + eps);
                let g = GaussianFactor::new(&s.c, f64::INFINITY).expect("non-degenerate covariance");
                for (i, q) in queries.iter().enumerate() {
                    if time_slot(&times, q.t) != j {
                        continue;
                    }
                    let y = q.v - s.z * q.x0;
                    let r2 = y.norm_sq();
                    let lp = g.log_density(&y);
                    let lo = log_envelope(n, lmax, lmin, r2);
                    let hi = log_envelope(n, lmin, lmax, r2);
                    acc.lo[i].push_log(lo);
                    acc.mid[i].push_log(lp);
                    acc.hi[i].push_log(hi);
                    if lp < lo - tol * lo.abs().max(1.0) || lp > hi + tol * hi.abs().max(1.0) {
                        acc.bad[i] += 1;
                    }
                    let lo_l = log_envelope(n, lmax_lit, lmin_lit, r2);
                    let hi_l = log_envelope(n, lmin_lit, lmax_lit, r2);
                    if lp < lo_l - tol * lo_l.abs().max(1.0) || lp > hi_l + tol * hi_l.abs().max(1.0) {
                        acc.bad_literal[i] += 1;
                    }
                }
            });
        },
    );
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, q)| EnvelopeCheck {
            t: q.t,
            x0: q.x0.to_vec(),
            v: q.v.to_vec(),
            lower: acc.lo[i].mean(),
            estimate: acc.mid[i].mean(),
            upper: acc.hi[i].mean(),
            log_lower: acc.lo[i].log_mean(),
            log_estimate: acc.mid[i].log_mean(),
            log_upper: acc.hi[i].log_mean(),
            n_samples: dc.n_paths,
            violations: acc.bad[i],
            literal_violations: acc.bad_literal[i],
        })
        .collect())
}

/// `10 Δt ‖K‖₂` with `K = (E/N) Id − Σ₀`.
pub fn quadrature_slack(law: &InitialLaw, dt: f64) -> f64 {
    let k = sym_eigen(&law.lambda_aniso()).0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    10.0 * dt * k
}

/// Radial and tangential parts of the off-diagonal cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostDecomposition {
    pub radial: f64,
    pub tangential: f64,
    pub delta_t: f64,
    /// `radial + tangential`.
    pub cost: f64,
    /// `|x₀ − v|²` when `|x₀| ∧ |v| ≤ 1`.
    pub gaussian_cost: Option<f64>,
}

impl CostDecomposition {
    /// The Gaussian substitute when available, otherwise `cost`.
    pub fn effective_cost(&self) -> f64 {
        self.gaussian_cost.unwrap_or(self.cost)
    }
}

pub fn cost_decomposition(t: f64, x0: &Vector, v: &Vector) -> CostDecomposition {
    assert!(t > 0.0, "t must be positive");
    let (a, b) = (x0.norm(), v.norm());
    let m = a.min(b);
    let radial = (b - a).powi(2);
    let w = 1.0f64.min(m);
    let tangential = if a == 0.0 || b == 0.0 { 0.0 } else { w * w * (v.scale(1.0 / b) - x0.scale(1.0 / a)).norm_sq() };
    let st = t.sqrt();
    let delta_t = 1.0f64.min(st / 1.0f64.max(m)) / 1.0f64.min(st);
    CostDecomposition { radial, tangential, delta_t, cost: radial + tangential, gaussian_cost: (m <= 1.0).then(|| (*x0 - *v).norm_sq()) }
}

/// `(|v−Π(v)|² + |Π(v)−x₀|², |v−x₀|², 2(…))` with `Π` the projection onto the
/// ball of radius `|x₀|`; requires `|x₀| < |v|`.
pub fn projection_sandwich(x0: &Vector, v: &Vector) -> (f64, f64, f64) {
    let r = x0.norm();
    let p = v.scale(r / v.norm());
    let s = (*v - p).norm_sq() + (p - *x0).norm_sq();
    (s, (*v - *x0).norm_sq(), 2.0 * s)
}

/// One point of a fitted sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub t: f64,
    pub x0: Vec<f64>,
    pub v: Vec<f64>,
    pub estimate: f64,
    pub std_error: f64,
    pub rel_std_error: f64,
    pub log_estimate: f64,
    /// `ln` of the polynomial prefactor of the bound.
    pub log_prefactor: f64,
    /// Exponent argument `x`, so the bounds read `pref·exp(−C x)/C`, `C·pref·exp(−x/C)`.
    pub cost: f64,
    /// `−(ln f̂ − ln prefactor)`.
    pub y: f64,
}

impl GridPoint {
    fn new(e: &DensityEstimate, log_prefactor: f64, cost: f64) -> Self {
        GridPoint {
            t: e.t,
            x0: e.x0.clone(),
            v: e.v.clone(),
            estimate: e.value,
            std_error: e.std_error,
            rel_std_error: e.rel_std_error,
            log_estimate: e.log_value,
            log_prefactor,
            cost,
            y: -(e.log_value - log_prefactor),
        }
    }

    fn shifted(&self, k: f64) -> f64 {
        let r = 1.0 + k * self.rel_std_error;
        if r <= 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_estimate + r.ln()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
}

/// Smallest `C ≥ 1` making both bounds hold at every point with `f̂ ± 3 SE`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnvelopeFit {
    pub constant: f64,
    pub finite: bool,
    pub binding_index: usize,
    pub binding_side: Side,
}

/// Largest `ln C` searched.
const LOG_C_MAX: f64 = 700.0;
const RADIAL_LOG_C_MAX: f64 = 100.0;

fn min_log_c(max: f64, pred: impl Fn(f64) -> bool) -> f64 {
    if pred(0.0) {
        return 0.0;
    }
    if !pred(max) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0.0, max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    hi
}

/// Fits the constant of `pref·e^{−Cx}/C ≤ f ≤ C·pref·e^{−x/C}`.
pub fn fit_constant(points: &[GridPoint]) -> EnvelopeFit {
    let mut best = (0.0f64, 0usize, Side::Lower);
    for (i, p) in points.iter().enumerate() {
        let l_hi = p.shifted(3.0) - p.log_prefactor;
        let l_lo = p.shifted(-3.0) - p.log_prefactor;
        let x = p.cost;
        let lower = min_log_c(LOG_C_MAX, |u| u + u.exp() * x >= -l_hi);
        let upper = if l_lo == f64::NEG_INFINITY { 0.0 } else { min_log_c(LOG_C_MAX, |u| u - x * (-u).exp() >= l_lo) };
        if lower > best.0 {
            best = (lower, i, Side::Lower);
        }
        if upper > best.0 {
            best = (upper, i, Side::Upper);
        }
    }
    EnvelopeFit { constant: best.0.exp(), finite: best.0.is_finite(), binding_index: best.1, binding_side: best.2 }
}

/// `|C_fine/C_coarse − 1|`, infinite unless both are finite.
pub fn relative_change(coarse: &EnvelopeFit, fine: &EnvelopeFit) -> f64 {
    if coarse.finite && fine.finite {
        (fine.constant / coarse.constant - 1.0).abs()
    } else {
        f64::INFINITY
    }
}

fn precision_guard(points: &[GridPoint]) -> Result<()> {
    if let Some(p) = points.iter().filter(|p| !(p.rel_std_error <= MAX_REL_SE)).max_by(|a, b| a.rel_std_error.total_cmp(&b.rel_std_error)) {
        return Err(Error::InsufficientPrecision { rel_se: p.rel_std_error, location: format!("t={}, x0={:?}, v={:?}", p.t, p.x0, p.v) });
    }
    Ok(())
}

/// A named pass/fail check inside a report.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, pass: value >= threshold }
    }
}

/// Sandwich fit on a grid and on its refinement, plus named checks.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub kind: String,
    pub points: Vec<GridPoint>,
    pub fit: EnvelopeFit,
    pub refined_points: Vec<GridPoint>,
    pub refined_fit: EnvelopeFit,
    /// `|C_refined/C − 1|`.
    pub stability: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl EnvelopeReport {
    fn finish(kind: &str, points: Vec<GridPoint>, refined_points: Vec<GridPoint>, mut checks: Vec<Check>) -> Self {
        let fit = fit_constant(&points);
        let refined_fit = fit_constant(&refined_points);
        let stability = relative_change(&fit, &refined_fit);
        checks.insert(0, Check::at_most("fitted constant finite", if fit.finite { 0.0 } else { 1.0 }, 0.0));
        checks.insert(1, Check::at_most("grid-doubling change of C", stability, 0.2));
        let pass = checks.iter().all(|c| c.pass);
        EnvelopeReport { kind: kind.into(), points, fit, refined_points, refined_fit, stability, checks, pass }
    }
}

/// Grid of the multiscale sandwich: `x₀ = a e₁`, `v = b (cos θ e₁ + sin θ e₂)`.
#[derive(Debug, Clone, Serialize)]
pub struct MultiscaleGrid {
    pub times: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub angles: Vec<f64>,
    /// Nonzero angles are used when `t ≥ angle_min_time` or `|x₀||v| ≤ angle_product`.
    pub angle_min_time: f64,
    pub angle_product: f64,
}

fn midpoints(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * xs.len());
    for w in xs.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(xs.last());
    out
}

impl MultiscaleGrid {
    /// Inserts the midpoint between consecutive times and magnitudes.
    pub fn refined(&self) -> Self {
        MultiscaleGrid {
            times: midpoints(&self.times),
            magnitudes: midpoints(&self.magnitudes),
            angles: self.angles.clone(),
            angle_min_time: self.angle_min_time,
            angle_product: self.angle_product,
        }
    }

    pub fn queries(&self, n: usize) -> Vec<Query> {
        let mut out = Vec::new();
        for &t in &self.times {
            for &a in &self.magnitudes {
                for &b in &self.magnitudes {
                    for &th in &self.angles {
                        if th != 0.0 && t < self.angle_min_time && a * b > self.angle_product {
                            continue;
                        }
                        let mut v = Vector::zeros(n);
                        v[0] = b * th.cos();
                        v[1] = b * th.sin();
                        out.push(Query { t, x0: Vector::basis(n, 0).scale(a), v });
                    }
                }
            }
        }
        out
    }
}

fn multiscale_point(e: &DensityEstimate) -> GridPoint {
    let n = e.x0.len();
    let cd = cost_decomposition(e.t, &Vector::from_slice(&e.x0), &Vector::from_slice(&e.v));
    let log_pref = (n as f64 - 1.0) * cd.delta_t.ln() - 0.5 * n as f64 * e.t.ln();
    GridPoint::new(e, log_pref, cd.effective_cost() / e.t)
}

/// The tangential slice `x₀ = r e₁`, `v = r e₂` at fixed `t`.
#[derive(Debug, Clone, Serialize)]
pub struct SuperDiffusiveSlice {
    pub t: f64,
    pub radii: Vec<f64>,
    pub y: Vec<f64>,
    pub rel_std_error: Vec<f64>,
    /// `y(r_max) − y(r_min)`.
    pub growth: f64,
    /// Growth of the Gaussian-kernel exponent `|v−x₀|²/(2(1−1/N)E t)` over the
    /// same radii.
    pub gaussian_growth: f64,
}

/// Settings of [`verify_multiscale_bounds`].
#[derive(Debug, Clone, Serialize)]
pub struct MultiscaleSettings {
    pub grid: MultiscaleGrid,
    pub slice_t: f64,
    pub slice_radii: Vec<f64>,
    /// Allowed `growth / gaussian_growth`.
    pub slice_ratio: f64,
}

pub fn verify_multiscale_bounds(law: &InitialLaw, settings: &MultiscaleSettings, dc: &DensityConfig) -> Result<EnvelopeReport> {
    eta_bounds(law)?;
    let n = law.dim();
    let coarse = settings.grid.queries(n);
    let fine = settings.grid.refined().queries(n);
    let slice: Vec<Query> = settings
        .slice_radii
        .iter()
        .map(|&r| Query { t: settings.slice_t, x0: Vector::basis(n, 0).scale(r), v: Vector::basis(n, 1).scale(r) })
        .collect();
    let mut all = coarse.clone();
    all.extend(fine.iter().copied());
    all.extend(slice.iter().copied());
    let est = mc_density_batch(law, dc, &all)?;
    let pts: Vec<GridPoint> = est.iter().map(multiscale_point).collect();
    precision_guard(&pts)?;
    let (a, rest) = pts.split_at(coarse.len());
    let (b, c) = rest.split_at(fine.len());
    let sd = super_diffusive(law, settings, c);
    let checks = vec![Check::at_most("super-diffusive growth / Gaussian growth", sd.growth / sd.gaussian_growth, settings.slice_ratio)];
    let mut report = EnvelopeReport::finish("multiscale", a.to_vec(), b.to_vec(), checks);
    report.kind = format!("multiscale (slice t={}, y={:?})", sd.t, sd.y);
    Ok(report)
}

fn super_diffusive(law: &InitialLaw, s: &MultiscaleSettings, pts: &[GridPoint]) -> SuperDiffusiveSlice {
    let n = law.dim() as f64;
    let var = (1.0 - 1.0 / n) * law.energy() * s.slice_t;
    let g = |r: f64| 2.0 * r * r / (2.0 * var);
    let y: Vec<f64> = pts.iter().map(|p| p.y).collect();
    let (r0, r1) = (s.slice_radii[0], s.slice_radii[s.slice_radii.len() - 1]);
    SuperDiffusiveSlice {
        t: s.slice_t,
        radii: s.slice_radii.clone(),
        growth: y[y.len() - 1] - y[0],
        y,
        rel_std_error: pts.iter().map(|p| p.rel_std_error).collect(),
        gaussian_growth: g(r1) - g(r0),
    }
}

/// Super-diffusive slice on its own.
pub fn super_diffusive_slice(law: &InitialLaw, settings: &MultiscaleSettings, dc: &DensityConfig) -> Result<SuperDiffusiveSlice> {
    let n = law.dim();
    let q: Vec<Query> = settings
        .slice_radii
        .iter()
        .map(|&r| Query { t: settings.slice_t, x0: Vector::basis(n, 0).scale(r), v: Vector::basis(n, 1).scale(r) })
        .collect();
    let pts: Vec<GridPoint> = mc_density_batch(law, dc, &q)?.iter().map(multiscale_point).collect();
    precision_guard(&pts)?;
    Ok(super_diffusive(law, settings, &pts))
}

/// `y(r)` of the slice for the norm-preserving representation `X = U_t x₀ + N(0, (1−1/N) E t Id)`
/// with `U` the undamped rotation; isotropic laws only.
pub fn orthogonal_representation_slice(law: &InitialLaw, settings: &MultiscaleSettings, dc: &DensityConfig) -> Result<SuperDiffusiveSlice> {
    let n = law.dim();
    if law.lambda_aniso().max_abs() > 1e-12 {
        return Err(config_err("orthogonal representation slice needs an isotropic law"));
    }
    let t = settings.slice_t;
    let grid = TimeGrid::new(n, &[t], dc)?;
    let var = (1.0 - 1.0 / n as f64) * law.energy() * t;
    let nr = settings.slice_radii.len();
    let acc = block_reduce(
        dc.n_paths,
        || vec![LogMeanExp::new(); nr],
        |acc, p| {
            let (u, _) = crate::brownian::terminal_rotation(&grid.cfg, p as u64);
            for (i, &r) in settings.slice_radii.iter().enumerate() {
                let y = Vector::basis(n, 1).scale(r) - *u.mat() * Vector::basis(n, 0).scale(r);
                acc[i].push_log(log_envelope(n, var, var, y.norm_sq()));
            }
        },
    );
    let pts: Vec<GridPoint> = settings
        .slice_radii
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let e = DensityEstimate::from_acc(t, &Vector::basis(n, 0).scale(r), &Vector::basis(n, 1).scale(r), &acc[i], 0, dc.n_paths);
            multiscale_point(&e)
        })
        .collect();
    precision_guard(&pts)?;
    Ok(super_diffusive(law, settings, &pts))
}

/// Cost objects of the degenerate (line) regime.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DegenerateCost {
    /// `|v¹−x₀¹|/t + |v¹−x₀¹|²/t + Σ_{i≥2} |v^i|²/t`.
    pub cost: f64,
    #[serde(skip)]
    pub scale: Mat,
}

pub fn degenerate_cost(t: f64, x0: f64, v: &Vector) -> DegenerateCost {
    assert!(t > 0.0, "t must be positive");
    let d = (v[0] - x0).abs();
    let tang: f64 = (1..v.dim()).map(|i| v[i] * v[i]).sum();
    let mut s = vec![1.0; v.dim()];
    s[0] = t.sqrt();
    DegenerateCost { cost: d / t + d * d / t + tang / t, scale: Mat::from_diag(&s) }
}

/// `M_t = t^{−1} T_t^{−1} C_t T_t^{−1}` with `T_t = diag(√t, 1, …, 1)`.
pub fn rescaled_covariance(t: f64, c: &Mat) -> Mat {
    let n = c.dim();
    let inv = |i: usize| if i == 0 { 1.0 / t.sqrt() } else { 1.0 };
    Mat::from_fn(n, |i, j| c[(i, j)] * inv(i) * inv(j) / t)
}

/// Per-path determinant control at each time of a grid.
#[derive(Debug, Clone, Serialize)]
pub struct DetBoundSummary {
    pub t: f64,
    pub bound: f64,
    pub damped_bound: f64,
    pub eps_quad: f64,
    pub n_paths: usize,
    pub min_ratio: f64,
    pub min_damped_ratio: f64,
    pub violations: usize,
    pub damped_violations: usize,
}

#[derive(Clone)]
struct DetAcc {
    min: Vec<f64>,
    min_d: Vec<f64>,
    bad: Vec<usize>,
    bad_d: Vec<usize>,
}

impl Merge for DetAcc {
    fn merge(&mut self, o: Self) {
        for j in 0..self.min.len() {
            self.min[j] = self.min[j].min(o.min[j]);
            self.min_d[j] = self.min_d[j].min(o.min_d[j]);
            self.bad[j] += o.bad[j];
            self.bad_d[j] += o.bad_d[j];
        }
    }
}

/// `det C_t` against both variational bounds, unit-energy law on `e₁`.
pub fn det_bound_check(n: usize, times: &[f64], dc: &DensityConfig) -> Result<Vec<DetBoundSummary>> {
    let law = InitialLaw::line(n, 1.0);
    let grid = TimeGrid::new(n, times, dc)?;
    let eps = 10.0 * grid.cfg.dt();
    let bounds: Vec<(f64, f64)> = times.iter().map(|&t| (det_variational_bound(n, t, false), det_variational_bound(n, t, true))).collect();
    let m = times.len();
    let acc = block_reduce(
        dc.n_paths,
        || DetAcc { min: vec![f64::INFINITY; m], min_d: vec![f64::INFINITY; m], bad: vec![0; m], bad_d: vec![0; m] },
        |acc, p| {
            for_each_snapshot(&grid, &law, p as u64, |j, s| {
                let d = s.c.det();
                let (b, bd) = bounds[j];
                acc.min[j] = acc.min[j].min(d / b);
                acc.min_d[j] = acc.min_d[j].min(d / bd);
                acc.bad[j] += usize::from(d < b * (1.0 - eps));
                acc.bad_d[j] += usize::from(d < bd * (1.0 - eps));
            });
        },
    );
    Ok(times
        .iter()
        .enumerate()
        .map(|(j, &t)| DetBoundSummary {
            t,
            bound: bounds[j].0,
            damped_bound: bounds[j].1,
            eps_quad: eps,
            n_paths: dc.n_paths,
            min_ratio: acc.min[j],
            min_damped_ratio: acc.min_d[j],
            violations: acc.bad[j],
            damped_violations: acc.bad_d[j],
        })
        .collect())
}

/// Log–log slope of the variational bound over `times`.
pub fn det_bound_slope(n: usize, times: &[f64]) -> LinearFit {
    let b: Vec<f64> = times.iter().map(|&t| det_variational_bound(n, t, false)).collect();
    loglog_fit(times, &b)
}

/// Small-time variances of `X_t` from `x₀ = 0` (degenerate unit-energy law),
/// `Var(X_t^i) = E[C_t^{ii}]`, with log–log slopes.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceScales {
    pub times: Vec<f64>,
    /// `E[C_t^{11}]` and its standard error.
    pub first: Vec<f64>,
    pub first_se: Vec<f64>,
    /// Mean of `E[C_t^{ii}]` over `i ≥ 2`.
    pub others: Vec<f64>,
    pub others_se: Vec<f64>,
    pub first_slope: f64,
    pub others_slope: f64,
}

pub fn degenerate_variance_scales(n: usize, times: &[f64], dc: &DensityConfig) -> Result<VarianceScales> {
    let law = InitialLaw::line(n, 1.0);
    let grid = TimeGrid::new(n, times, dc)?;
    let m = times.len();
    let acc = block_reduce(
        dc.n_paths,
        || (vec![MeanVar::new(); m], vec![MeanVar::new(); m]),
        |acc, p| {
            for_each_snapshot(&grid, &law, p as u64, |j, s| {
                acc.0[j].push(s.c[(0, 0)]);
                acc.1[j].push((1..n).map(|i| s.c[(i, i)]).sum::<f64>() / (n - 1) as f64);
            });
        },
    );
    let first: Vec<f64> = acc.0.iter().map(|a| a.mean).collect();
    let others: Vec<f64> = acc.1.iter().map(|a| a.mean).collect();
    Ok(VarianceScales {
        times: times.to_vec(),
        first_slope: loglog_fit(times, &first).slope,
        others_slope: loglog_fit(times, &others).slope,
        first_se: acc.0.iter().map(|a| a.std_error()).collect(),
        others_se: acc.1.iter().map(|a| a.std_error()).collect(),
        first,
        others,
    })
}

/// `E[C̄_t^{11}]/t²` over small `t` and its extrapolation to `t → 0`.
#[derive(Debug, Clone, Serialize)]
pub struct LeadingCoefficient {
    pub times: Vec<f64>,
    pub ratio: Vec<f64>,
    pub ratio_se: Vec<f64>,
    /// Intercept of the weighted fit `ratio ≈ c₀ + c₁ t`.
    pub coefficient: f64,
    pub coefficient_se: f64,
    /// Closed-form `E[C̄_t^{11}]/t²` at the same times.
    pub exact_ratio: Vec<f64>,
}

pub fn cbar_leading_coefficient(n: usize, times: &[f64], n_steps: usize, n_paths: usize, seed: u64) -> Result<LeadingCoefficient> {
    let law = InitialLaw::line(n, 1.0);
    let mut ratio = Vec::new();
    let mut se = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let cfg = BmConfig::new(n, t, n_steps, seed.wrapping_add(j as u64))?;
        let acc = block_reduce(n_paths, MeanVar::new, |acc, p| {
            let path = crate::brownian::simulate_path(&cfg, p as u64);
            acc.push(covariance_c_bar(&path, &law).expect("nonempty path").mat()[(0, 0)] / (t * t));
        });
        ratio.push(acc.mean);
        se.push(acc.std_error());
    }
    let design: Vec<Vec<f64>> = times.iter().map(|&t| vec![1.0, t]).collect();
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s).max(1e-300)).collect();
    let (beta, beta_se) = weighted_least_squares(&design, &ratio, &w);
    Ok(LeadingCoefficient {
        times: times.to_vec(),
        exact_ratio: times.iter().map(|&t| crate::model::mean_conditional_covariance(t, &law)[(0, 0)] / (t * t)).collect(),
        ratio,
        ratio_se: se,
        coefficient: beta[0],
        coefficient_se: beta_se[0],
    })
}

/// Two-sample comparison of `det C_t` and `det C̄_t` on independent path sets.
#[derive(Debug, Clone, Serialize)]
pub struct DetLawReport {
    pub t: f64,
    pub n_paths: usize,
    pub mean_det: f64,
    pub mean_det_bar: f64,
    pub ks: crate::stats::KsResult,
}

pub fn det_law_comparison(law: &InitialLaw, cfg: &BmConfig, n_paths: usize) -> Result<DetLawReport> {
    let collect = |offset: u64, reversed: bool| -> Vec<f64> {
        crate::brownian::block_collect(n_paths, |i| {
            let path = crate::brownian::simulate_path(cfg, offset + i as u64);
            let c = if reversed { covariance_c_bar(&path, law) } else { crate::model::covariance_c(&path, law) };
            c.expect("nonempty path").det()
        })
        .into_iter()
        .flatten()
        .collect()
    };
    let a = collect(0, false);
    let b = collect(n_paths as u64, true);
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(DetLawReport { t: cfg.horizon, n_paths, mean_det: mean(&a), mean_det_bar: mean(&b), ks: crate::stats::ks_two_sample(&a, &b) })
}

/// Ray grid of the degenerate sandwich.
#[derive(Debug, Clone, Serialize)]
pub struct DegenerateGrid {
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    /// `v − x₀ = u t e₁` for these `u`.
    pub axial: Vec<f64>,
    /// `v − x₀ = w √t e₂` for these `w`.
    pub transverse: Vec<f64>,
}

impl DegenerateGrid {
    pub fn refined(&self) -> Self {
        DegenerateGrid {
            starts: self.starts.clone(),
            times: self.times.clone(),
            axial: midpoints(&self.axial),
            transverse: midpoints(&self.transverse),
        }
    }

    pub fn queries(&self, n: usize) -> Vec<Query> {
        let mut out = Vec::new();
        for &t in &self.times {
            for &a in &self.starts {
                let x0 = Vector::basis(n, 0).scale(a);
                for &u in &self.axial {
                    out.push(Query { t, x0, v: x0 + Vector::basis(n, 0).scale(u * t) });
                }
                for &w in &self.transverse {
                    out.push(Query { t, x0, v: x0 + Vector::basis(n, 1).scale(w * t.sqrt()) });
                }
            }
        }
        out
    }
}

fn degenerate_point(e: &DensityEstimate) -> GridPoint {
    let n = e.x0.len();
    let dc = degenerate_cost(e.t, e.x0[0], &Vector::from_slice(&e.v));
    GridPoint::new(e, -0.5 * (n as f64 + 1.0) * e.t.ln(), dc.cost)
}

/// Least-squares fit of `−ln f̂` on `{1, ξ/t, (ξ/t)²}` along the `e₁` ray from `x₀ = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct MixtureFit {
    pub t: f64,
    /// Unweighted fit; standard errors from the residuals.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `linear / se(linear)` of the unweighted fit.
    pub linear_z: f64,
    /// Same statistic with inverse-variance weights.
    pub weighted_linear_z: f64,
}

pub fn mixture_fit(points: &[GridPoint], t: f64) -> Result<MixtureFit> {
    let sel: Vec<&GridPoint> = points
        .iter()
        .filter(|p| p.t == t && p.x0.iter().all(|&x| x == 0.0) && p.v[1..].iter().all(|&x| x == 0.0) && p.v[0] > 0.0)
        .collect();
    if sel.len() < 4 {
        return Err(config_err("mixture fit needs at least 4 axial points from the origin"));
    }
    let design: Vec<Vec<f64>> = sel.iter().map(|p| vec![1.0, p.v[0] / t, (p.v[0] / t).powi(2)]).collect();
    let y: Vec<f64> = sel.iter().map(|p| -p.log_estimate).collect();
    let (beta, se) = weighted_least_squares(&design, &y, &vec![1.0; y.len()]);
    let w: Vec<f64> = sel.iter().map(|p| 1.0 / p.rel_std_error.max(1e-6).powi(2)).collect();
    let (wb, wse) = weighted_least_squares(&design, &y, &w);
    Ok(MixtureFit { t, linear_z: beta[1] / se[1], weighted_linear_z: wb[1] / wse[1], coefficients: beta, std_errors: se })
}

/// Settings of [`verify_degenerate_bounds`].
#[derive(Debug, Clone, Serialize)]
pub struct DegenerateSettings {
    pub grid: DegenerateGrid,
    /// Upper end of the small-time regime; grid times above it are dropped.
    pub t_max: f64,
    /// Default regime limit; a `t_max` beyond it is evaluated as an extra time
    /// and flags the fit as degraded.
    pub regime_limit: f64,
    pub det_paths: usize,
}

/// Sandwich report plus the mixture fits and determinant control.
#[derive(Debug, Clone, Serialize)]
pub struct DegenerateReport {
    pub envelope: EnvelopeReport,
    pub mixture: Vec<MixtureFit>,
    pub det: Vec<DetBoundSummary>,
    /// Points at `t_max` when it lies beyond the regime limit (not fitted).
    pub beyond_regime: Vec<GridPoint>,
    /// Sandwich constant refitted with the points beyond the regime limit.
    pub beyond_regime_constant: Option<f64>,
    pub degraded: bool,
    pub pass: bool,
}

pub fn verify_degenerate_bounds(settings: &DegenerateSettings, n: usize, dc: &DensityConfig) -> Result<DegenerateReport> {
    let law = InitialLaw::line(n, 1.0);
    let mut grid = settings.grid.clone();
    grid.times.retain(|&t| t <= settings.t_max);
    if grid.times.is_empty() {
        return Err(config_err("no grid time at or below t_max"));
    }
    let degraded = settings.t_max > settings.regime_limit;
    let extra = DegenerateGrid { times: if degraded { vec![settings.t_max] } else { vec![] }, ..grid.clone() };
    let coarse = grid.queries(n);
    let fine = grid.refined().queries(n);
    let beyond = extra.queries(n);
    let mut all = coarse.clone();
    all.extend(fine.iter().copied());
    all.extend(beyond.iter().copied());
    let est = mc_density_batch(&law, dc, &all)?;
    let pts: Vec<GridPoint> = est.iter().map(degenerate_point).collect();
    let (a, rest) = pts.split_at(coarse.len());
    let (b, c) = rest.split_at(fine.len());
    precision_guard(a)?;
    precision_guard(b)?;
    let mixture = grid.times.iter().map(|&t| mixture_fit(a, t)).collect::<Result<Vec<_>>>()?;
    let det = det_bound_check(n, &grid.times, &DensityConfig { n_paths: settings.det_paths, ..*dc })?;
    let mut checks: Vec<Check> =
        mixture.iter().map(|m| Check::at_least(&format!("linear coefficient z-score at t={}", m.t), m.linear_z, 3.0)).collect();
    for m in &mixture {
        checks.push(Check::at_least(&format!("linear coefficient at t={}", m.t), m.coefficients[1], 0.0));
    }
    for d in &det {
        checks.push(Check::at_most(&format!("damped determinant violations at t={}", d.t), d.damped_violations as f64, 0.0));
    }
    checks.push(Check::at_most("t_max within regime limit", settings.t_max, settings.regime_limit));
    let envelope = EnvelopeReport::finish("degenerate", a.to_vec(), b.to_vec(), checks);
    let beyond_regime_constant = (!c.is_empty()).then(|| {
        let usable: Vec<GridPoint> = a.iter().chain(c.iter().filter(|p| p.rel_std_error <= MAX_REL_SE)).cloned().collect();
        fit_constant(&usable).constant
    });
    let pass = envelope.pass;
    Ok(DegenerateReport { envelope, mixture, det, beyond_regime: c.to_vec(), beyond_regime_constant, degraded, pass })
}

/// `count` pairs `x₀ ~ N(0, Id)`, `v = x₀ + g/2` with `g ~ N(0, Id)`.
pub fn random_pairs(n: usize, count: usize, seed: u64) -> Vec<(Vector, Vector)> {
    (0..count)
        .map(|i| {
            let mut r = rng::stream(seed, i as u64, Substream::Aux);
            let x0 = Vector::from_fn(n, |_| rng::normal(&mut r));
            let g = Vector::from_fn(n, |_| rng::normal(&mut r));
            (x0, x0 + g.scale(0.5))
        })
        .collect()
}

/// Per-sample envelope check over a grid of times and pairs.
#[derive(Debug, Clone, Serialize)]
pub struct BdsReport {
    pub eta_bar: f64,
    pub eta_under: f64,
    pub checks: Vec<EnvelopeCheck>,
    pub total_samples: usize,
    pub violations: usize,
    pub literal_violations: usize,
    pub all_ordered: bool,
    pub pass: bool,
}

/// The last pair is moved, at each time, to the far tail `|v − x₀| = 10√t`
/// along its own direction.
pub fn verify_bds(law: &InitialLaw, times: &[f64], pairs: &[(Vector, Vector)], dc: &DensityConfig) -> Result<BdsReport> {
    let (eta_bar, eta_under) = eta_bounds(law)?;
    let last = pairs.len().saturating_sub(1);
    let queries: Vec<Query> = times
        .iter()
        .flat_map(|&t| {
            pairs.iter().enumerate().map(move |(i, &(x0, v))| {
                let v = if i == last { x0 + (v - x0).scale(10.0 * t.sqrt() / (v - x0).norm()) } else { v };
                Query { t, x0, v }
            })
        })
        .collect();
    let checks = sample_envelopes(law, dc, &queries)?;
    let violations = checks.iter().map(|c| c.violations).sum();
    let all_ordered = checks.iter().all(|c| c.ordered() && c.log_lower.is_finite());
    Ok(BdsReport {
        eta_bar,
        eta_under,
        total_samples: checks.iter().map(|c| c.n_samples).sum(),
        literal_violations: checks.iter().map(|c| c.literal_violations).sum(),
        pass: violations == 0 && all_ordered,
        violations,
        all_ordered,
        checks,
    })
}

/// Two-sided comparison of `f_t` with Gaussian convolutions of a Gaussian `f₀`.
#[derive(Debug, Clone, Serialize)]
pub struct RadialReport {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    /// Estimates along `e₁` and along the diagonal, per time.
    pub estimates: Vec<Vec<DensityEstimate>>,
    /// Per time, the smallest `C` with `C^{−N−1} φ_{s²+t/C²} ≤ f̂+3SE` and `C^{N+1} φ_{s²+C²t} ≥ f̂−3SE`.
    pub constants: Vec<f64>,
    /// `max |f̂(r u) − f̂(r u')| / combined SE` over the two directions.
    pub max_direction_z: f64,
    /// `max |ln(f̂ / φ_{s²+t})|` at the last time (plain heat evolution of `f₀`).
    pub heat_log_ratio: f64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// `f₀ = N(0, s² Id)` with `s² = E/N`; `v` runs over `radii` along `e₁` and a
/// diagonal direction. The constant is fitted at `times[0]`; the heat
/// comparison at the last time must stay within `C^{N+1}`.
pub fn radial_convolution_check(law: &InitialLaw, times: &[f64], radii: &[f64], dc: &DensityConfig) -> Result<RadialReport> {
    let n = law.dim();
    let nf = n as f64;
    let s2 = law.energy() / nf;
    if law.second_moment().max_abs_diff(&Mat::identity(n).scale(s2)) > 1e-12 || law.sampler() != crate::model::SamplerKind::Gaussian {
        return Err(config_err("radial check needs an isotropic Gaussian initial law"));
    }
    if times.is_empty() || radii.is_empty() {
        return Err(config_err("radial check needs nonempty time and radius grids"));
    }
    let diag = Vector::from_fn(n, |_| 1.0 / nf.sqrt());
    let mut q = Vec::new();
    for &t in times {
        for &r in radii {
            q.push((t, Vector::basis(n, 0).scale(r)));
            q.push((t, diag.scale(r)));
        }
    }
    let est = mc_marginal_density(law, dc, &q)?;
    if let Some(e) = est.iter().find(|e| !(e.rel_std_error <= MAX_REL_SE)) {
        return Err(Error::InsufficientPrecision { rel_se: e.rel_std_error, location: format!("t={}, v={:?}", e.t, e.v) });
    }
    let per_t: Vec<Vec<DensityEstimate>> = est.chunks(2 * radii.len()).map(|c| c.to_vec()).collect();
    let log_phi = |var: f64, r: f64| -0.5 * nf * (2.0 * PI * var).ln() - r * r / (2.0 * var);
    let mut constants = Vec::new();
    let mut max_z = 0.0f64;
    for (k, block) in per_t.iter().enumerate() {
        let t = times[k];
        let mut log_c = 0.0f64;
        for (i, e) in block.iter().enumerate() {
            let r = radii[i / 2];
            let (hi, lo) = (e.log_shifted(3.0), e.log_shifted(-3.0));
            log_c = log_c.max(min_log_c(RADIAL_LOG_C_MAX, |u| -(nf + 1.0) * u + log_phi(s2 + t * (-2.0 * u).exp(), r) <= hi));
            if lo > f64::NEG_INFINITY {
                log_c = log_c.max(min_log_c(RADIAL_LOG_C_MAX, |u| (nf + 1.0) * u + log_phi(s2 + t * (2.0 * u).exp(), r) >= lo));
            }
        }
        constants.push(log_c.exp());
        for pair in block.chunks(2) {
            let se = (pair[0].std_error.powi(2) + pair[1].std_error.powi(2)).sqrt() + 1e-12 * pair[0].value;
            max_z = max_z.max((pair[0].value - pair[1].value).abs() / se);
        }
    }
    let t_last = times[times.len() - 1];
    let heat_log_ratio = per_t[per_t.len() - 1]
        .iter()
        .enumerate()
        .map(|(i, e)| (e.log_value - log_phi(s2 + t_last, radii[i / 2])).abs())
        .fold(0.0, f64::max);
    let checks = vec![
        Check::at_most("fitted constant finite", if constants[0].is_finite() { 0.0 } else { 1.0 }, 0.0),
        Check::at_most("rotation invariance (max z)", max_z, 3.0),
        Check::at_most("heat comparison at last time, |ln ratio|", heat_log_ratio, (nf + 1.0) * constants[0].ln()),
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(RadialReport {
        times: times.to_vec(),
        radii: radii.to_vec(),
        estimates: per_t,
        constants,
        max_direction_z: max_z,
        heat_log_ratio,
        checks,
        pass,
    })
}
