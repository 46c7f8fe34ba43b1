//! Brownian motion on so(N) and the resolvent process on SO(N).
//!
//! The driving motion `B` has independent upper entries of variance `t`. The
//! resolvent of the linear Landau SDE solves the Itô equation
//! `dZ = dB Z − (N−1) Z dt`; it factors as `Z_t = e^{−(N−1)t/2} U_t` with
//! `U` the Stratonovich Brownian motion `dU = dB ∘ U` on SO(N). Paths store
//! `U` together with the log of the scalar factor.

use crate::error::{config_err, Result};
use crate::geometry::{exp_so, project_near_son, Rotation, SkewMatrix};
use crate::linalg::{Mat, MAX_DIM};
use crate::rng::{self, StreamRng, Substream};
use crate::stats::{block_reduce, ks_two_sample, KsResult, Merge};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `U ← exp(ΔB) U`; exact group preservation.
    Geometric,
    /// Euler step of the Itô form followed by polar projection; the polar
    /// scale is accumulated as the resolvent's scalar factor.
    ItoEulerProjected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BmConfig {
    pub n: usize,
    pub horizon: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub seed: u64,
}

impl BmConfig {
    pub fn new(n: usize, horizon: f64, n_steps: usize, seed: u64) -> Result<Self> {
        let cfg = BmConfig { n, horizon, n_steps, scheme: Scheme::Geometric, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_DIM).contains(&self.n) {
            return Err(config_err(format!("dimension must be in 2..={MAX_DIM}, got {}", self.n)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(config_err(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(config_err("n_steps must be at least 1"));
        }
        Ok(())
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }
}

/// `ln` of the scalar factor of the resolvent at time `t`: `−(N−1)t/2`.
#[inline]
pub fn resolvent_log_scale(n: usize, t: f64) -> f64 {
    -0.5 * (n as f64 - 1.0) * t
}

/// Draws `ΔB` with independent upper entries of variance `dt`.
pub fn sample_skew_increment<R: Rng + ?Sized>(n: usize, dt: f64, rng: &mut R) -> SkewMatrix {
    let mut h = SkewMatrix::zeros(n);
    if dt == 0.0 {
        return h;
    }
    let sd = dt.sqrt();
    for x in h.upper_mut() {
        *x = sd * rng::normal(rng);
    }
    h
}

pub fn step_geometric(u: &Rotation, db: &SkewMatrix) -> Rotation {
    exp_so(db).compose(u)
}

/// One Itô–Euler step `M = (Id + ΔB − (N−1)Δt Id) U`, projected to SO(N).
/// Returns the rotation and the log-scale increment `ln det(P) / N` of the
/// symmetric polar factor `P`.
pub fn step_ito_projected(u: &Rotation, db: &SkewMatrix, dt: f64) -> Result<(Rotation, f64)> {
    let n = u.dim();
    let a = Mat::identity(n).scale(1.0 - (n as f64 - 1.0) * dt) + db.to_mat();
    project_near_son(&(a * *u.mat()))
}

/// A simulated path on the uniform grid.
#[derive(Debug, Clone)]
pub struct RotationPath {
    pub times: Vec<f64>,
    /// `U_{t_k}` for `k = 0..=m`.
    pub rotations: Vec<Rotation>,
    /// `ΔB_k` for `k = 0..m`.
    pub increments: Vec<SkewMatrix>,
    /// `ln` of the resolvent's scalar factor at each grid time.
    pub log_scale: Vec<f64>,
}

impl RotationPath {
    pub fn dim(&self) -> usize {
        self.rotations[0].dim()
    }

    pub fn n_steps(&self) -> usize {
        self.increments.len()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty grid")
    }

    pub fn terminal(&self) -> &Rotation {
        self.rotations.last().expect("nonempty path")
    }

    /// `Z_{t_k} = e^{log_scale_k} U_{t_k}`.
    pub fn resolvent(&self, k: usize) -> Mat {
        self.rotations[k].mat().scale(self.log_scale[k].exp())
    }

    /// Largest orthogonality and determinant errors along the path.
    pub fn max_group_error(&self) -> (f64, f64) {
        self.rotations.iter().fold((0.0, 0.0), |(o, d), r| (o.max(r.orthogonality_error()), d.max(r.det_error())))
    }

    /// CSV trace: `t,log_scale,u11,u12,…` (row-major `U_t`).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string(), "log_scale".to_string()];
        for i in 1..=n {
            for j in 1..=n {
                header.push(format!("u{i}{j}"));
            }
        }
        writeln!(w, "{}", header.join(","))?;
        for ((t, r), s) in self.times.iter().zip(&self.rotations).zip(&self.log_scale) {
            let mut row = vec![format!("{t:.17e}"), format!("{s:.17e}")];
            row.extend(r.mat().as_slice().iter().map(|x| format!("{x:.17e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Random stream driving path `path_index`.
pub fn path_rng(cfg: &BmConfig, path_index: u64) -> StreamRng {
    rng::stream(cfg.seed, path_index, Substream::Rotation)
}

/// Streams a path: `visit(k, t_k, U_k, log_scale_k)` for `k = 0..=n_steps`,
/// with increments drawn from `next_increment`.
pub fn walk_with<F, G>(cfg: &BmConfig, mut next_increment: G, mut visit: F)
where
    F: FnMut(usize, f64, &Rotation, f64),
    G: FnMut(usize) -> SkewMatrix,
{
    let n = cfg.n;
    let dt = cfg.dt();
    let mut u = Rotation::identity(n);
    let mut ls = 0.0;
    visit(0, 0.0, &u, ls);
    for k in 0..cfg.n_steps {
        let db = next_increment(k);
        match cfg.scheme {
            Scheme::Geometric => {
                u = step_geometric(&u, &db);
                ls = resolvent_log_scale(n, cfg.time(k + 1));
            }
            Scheme::ItoEulerProjected => {
                let (next, dls) = step_ito_projected(&u, &db, dt).expect("Euler step stays nonsingular");
                u = next;
                ls += dls;
            }
        }
        if cfg!(debug_assertions) && k % 64 == 63 {
            assert!(u.orthogonality_error() < 1e-9 && u.det_error() < 1e-9, "left SO(N) at step {k}");
        }
        visit(k + 1, cfg.time(k + 1), &u, ls);
    }
}

/// Streams path `path_index` drawn from its own random stream.
pub fn walk_path<F>(cfg: &BmConfig, path_index: u64, visit: F)
where
    F: FnMut(usize, f64, &Rotation, f64),
{
    let mut rng = path_rng(cfg, path_index);
    let dt = cfg.dt();
    walk_with(cfg, |_| sample_skew_increment(cfg.n, dt, &mut rng), visit)
}

/// Simulates path `path_index` and keeps the full trajectory.
pub fn simulate_path(cfg: &BmConfig, path_index: u64) -> RotationPath {
    let mut rng = path_rng(cfg, path_index);
    simulate_path_with_rng(cfg, &mut rng)
}

pub fn simulate_path_with_rng<R: Rng + ?Sized>(cfg: &BmConfig, rng: &mut R) -> RotationPath {
    let dt = cfg.dt();
    let increments: Vec<SkewMatrix> = (0..cfg.n_steps).map(|_| sample_skew_increment(cfg.n, dt, rng)).collect();
    path_from_increments(cfg, &increments)
}

/// Deterministic path driven by the given increments.
pub fn path_from_increments(cfg: &BmConfig, increments: &[SkewMatrix]) -> RotationPath {
    assert_eq!(increments.len(), cfg.n_steps, "one increment per step");
    let mut path = RotationPath {
        times: Vec::with_capacity(cfg.n_steps + 1),
        rotations: Vec::with_capacity(cfg.n_steps + 1),
        increments: increments.to_vec(),
        log_scale: Vec::with_capacity(cfg.n_steps + 1),
    };
    walk_with(
        cfg,
        |k| increments[k],
        |_, t, u, ls| {
            path.times.push(t);
            path.rotations.push(*u);
            path.log_scale.push(ls);
        },
    );
    path
}

/// Terminal `(U_T, log_scale_T)` of path `path_index` without storing the path.
pub fn terminal_rotation(cfg: &BmConfig, path_index: u64) -> (Rotation, f64) {
    let mut out = (Rotation::identity(cfg.n), 0.0);
    walk_path(cfg, path_index, |k, _, u, ls| {
        if k == cfg.n_steps {
            out = (*u, ls);
        }
    });
    out
}

/// Entrywise mean of a matrix-valued statistic with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixMoments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub samples: u64,
}

#[derive(Clone)]
struct MatAcc(Vec<crate::stats::MeanVar>);

impl Merge for MatAcc {
    fn merge(&mut self, o: Self) {
        self.0.merge(o.0);
    }
}

/// Monte Carlo estimate of `E[Z_T]` (entrywise) over `n_paths` paths.
pub fn resolvent_mean(cfg: &BmConfig, n_paths: usize) -> MatrixMoments {
    let n = cfg.n;
    let acc = block_reduce(
        n_paths,
        || MatAcc(vec![crate::stats::MeanVar::new(); n * n]),
        |acc, i| {
            let (u, ls) = terminal_rotation(cfg, i as u64);
            let z = u.mat().scale(ls.exp());
            for (a, x) in acc.0.iter_mut().zip(z.as_slice()) {
                a.push(*x);
            }
        },
    );
    MatrixMoments {
        n,
        mean: acc.0.iter().map(|a| a.mean).collect(),
        std_error: acc.0.iter().map(|a| a.std_error()).collect(),
        samples: n_paths as u64,
    }
}

/// Outcome of the time-reversal law comparison.
#[derive(Debug, Clone, Serialize)]
pub struct TimeReversalReport {
    pub t: f64,
    pub s: f64,
    pub ks: KsResult,
}

/// Compares the law of `‖U_t U_{t−s}ᵀ − Id‖_F` with that of `‖U_s − Id‖_F`
/// on two independent path sets. `s` must lie on the time grid. The first
/// statistic is evaluated as `‖U_t − U_{t−s}‖_F`, which is equal by
/// orthogonal invariance of the norm.
pub fn time_reversed_law_check(cfg: &BmConfig, n_paths: usize, s: f64) -> Result<TimeReversalReport> {
    let t = cfg.horizon;
    let ks = (s / cfg.dt()).round() as usize;
    if !(0.0..=t).contains(&s) || (ks as f64 * cfg.dt() - s).abs() > 1e-9 * t.max(1.0) {
        return Err(config_err(format!("s = {s} is not a grid time in [0, {t}]")));
    }
    let back = cfg.n_steps - ks;
    let id = Mat::identity(cfg.n);
    let stat = |path_offset: u64, reversed: bool| -> Vec<f64> {
        let mut out: Vec<Vec<f64>> = block_collect(n_paths, |i| {
            let mut at_back = Rotation::identity(cfg.n);
            let mut value = 0.0;
            walk_path(cfg, path_offset + i as u64, |k, _, u, _| {
                if reversed {
                    if k == back {
                        at_back = *u;
                    }
                    if k == cfg.n_steps {
                        value = (*u.mat() - *at_back.mat()).frobenius_norm();
                    }
                } else if k == ks {
                    value = (*u.mat() - id).frobenius_norm();
                }
            });
            value
        });
        out.drain(..).flatten().collect()
    };
    let a = stat(0, true);
    let b = stat(n_paths as u64, false);
    Ok(TimeReversalReport { t, s, ks: ks_two_sample(&a, &b) })
}

/// Parallel map over `0..n` in fixed blocks, results in index order.
pub(crate) fn block_collect<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<Vec<T>> {
    use rayon::prelude::*;
    let bs = crate::stats::BLOCK;
    (0..n.div_ceil(bs)).into_par_iter().map(|b| (b * bs..((b + 1) * bs).min(n)).map(&f).collect()).collect()
}
