//! Two samplers of the linear Landau process.
//!
//! The factorized sampler is exact in law given the rotation path:
//! `X_t = Z_t (x₀ − Γ_t)` with `Γ_t = ∫₀ᵗ Z_s^{−1} dB̄_s` and `B̄` an
//! independent centered Gaussian process with `d⟨B̄⟩_s = Λ_s ds`. The particle
//! system discretizes the common space-time noise into `M` cells, one per
//! particle, and serves as an independent oracle.

use crate::brownian::{path_rng, sample_skew_increment, walk_with, BmConfig, RotationPath, Scheme};
use crate::error::{config_err, Result};
use crate::geometry::SkewMatrix;
use crate::linalg::{sym_eigen, Mat, Vector};
use crate::model::{second_moment_at, InitialLaw, SpdMatrix};
use crate::quad::int_exp;
use crate::rng::{self, Substream};
use crate::stats::{block_reduce, ks_two_sample, quantile_sorted, KsResult, MeanVar, Merge};
use rand::Rng;
use serde::Serialize;

/// `∫_{t0}^{t1} Λ_s ds`, in closed form.
pub fn bbar_increment_cov(t0: f64, t1: f64, law: &InitialLaw) -> SpdMatrix {
    weighted_cov(t0, t1, law, 0.0)
}

/// `∫_{t0}^{t1} e^{(N−1)s} Λ_s ds`: the covariance of `∫ e^{(N−1)s/2} dB̄_s`.
pub fn bbar_weighted_increment_cov(t0: f64, t1: f64, law: &InitialLaw) -> SpdMatrix {
    weighted_cov(t0, t1, law, law.dim() as f64 - 1.0)
}

fn weighted_cov(t0: f64, t1: f64, law: &InitialLaw, rate: f64) -> SpdMatrix {
    assert!(0.0 <= t0 && t0 <= t1, "need 0 <= t0 <= t1");
    let n = law.dim();
    let iso = law.lambda_iso() * int_exp(t0, t1, 0.0, rate);
    let w = int_exp(t0, t1, 0.0, rate - 2.0 * n as f64);
    let m = Mat::identity(n).scale(iso).axpy(w, &law.lambda_aniso());
    SpdMatrix::from_sym(m)
}

/// `L` with `L Lᵀ = Σ`, from the symmetric eigendecomposition.
fn psd_factor(s: &Mat) -> Mat {
    let (vals, vecs) = sym_eigen(s);
    let d: Vec<f64> = vals.iter().map(|x| x.max(0.0).sqrt()).collect();
    vecs * Mat::from_diag(&d)
}

/// Terminal state of one factorized draw.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FactorizedSample {
    pub t: f64,
    /// Rotation part `U_t` of the resolvent.
    #[serde(skip)]
    pub u: crate::geometry::Rotation,
    /// `ln` of the resolvent's scalar factor.
    pub log_scale: f64,
    #[serde(skip)]
    pub gamma: Vector,
    #[serde(skip)]
    pub x: Vector,
}

impl FactorizedSample {
    /// `Z_t = e^{log_scale} U_t`.
    pub fn resolvent(&self) -> Mat {
        self.u.mat().scale(self.log_scale.exp())
    }

    /// `|X_t − Z_t (x₀ − Γ_t)|`.
    pub fn residual(&self, x0: &Vector) -> f64 {
        (self.x - self.resolvent() * (*x0 - self.gamma)).norm()
    }
}

/// Factorized sampler with the per-step `B̄` factors precomputed.
#[derive(Debug, Clone)]
pub struct FactorizedSampler {
    cfg: BmConfig,
    law: InitialLaw,
    factors: Vec<Mat>,
}

impl FactorizedSampler {
    pub fn new(cfg: BmConfig, law: InitialLaw) -> Result<Self> {
        cfg.validate()?;
        if law.dim() != cfg.n {
            return Err(config_err(format!("law has dimension {}, config {}", law.dim(), cfg.n)));
        }
        let factors = (0..cfg.n_steps)
            .map(|k| {
                let (a, b) = (cfg.time(k), cfg.time(k + 1));
                let cov = match cfg.scheme {
                    Scheme::Geometric => bbar_weighted_increment_cov(a, b, &law),
                    Scheme::ItoEulerProjected => bbar_increment_cov(a, b, &law),
                };
                psd_factor(cov.mat())
            })
            .collect();
        Ok(FactorizedSampler { cfg, law, factors })
    }

    pub fn config(&self) -> &BmConfig {
        &self.cfg
    }

    pub fn law(&self) -> &InitialLaw {
        &self.law
    }

    /// Draw `index` started at `x0`; rotation and `B̄` noise come from
    /// separate substreams of `index`.
    pub fn sample(&self, x0: &Vector, index: u64) -> FactorizedSample {
        let mut rot = path_rng(&self.cfg, index);
        let mut bbar = rng::stream(self.cfg.seed, index, Substream::Bbar);
        self.sample_with(x0, &mut rot, &mut bbar)
    }

    /// Draw `index` with `X₀` from the law (substream `Initial`).
    pub fn sample_from_law(&self, index: u64) -> (Vector, FactorizedSample) {
        let mut init = rng::stream(self.cfg.seed, index, Substream::Initial);
        let x0 = self.law.sample(&mut init);
        (x0, self.sample(&x0, index))
    }

    pub fn sample_with<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, x0: &Vector, rot: &mut R1, bbar: &mut R2) -> FactorizedSample {
        let n = self.cfg.n;
        let dt = self.cfg.dt();
        self.run(x0, |_| sample_skew_increment(n, dt, rot), |_| Vector::from_fn(n, |_| rng::normal(bbar)))
    }

    /// Deterministic draw from given rotation increments and standard normal
    /// `B̄` innovations.
    pub fn sample_forced(&self, x0: &Vector, increments: &[SkewMatrix], innovations: &[Vector]) -> FactorizedSample {
        assert_eq!(increments.len(), self.cfg.n_steps);
        assert_eq!(innovations.len(), self.cfg.n_steps);
        self.run(x0, |k| increments[k], |k| innovations[k])
    }

    fn run<G, H>(&self, x0: &Vector, next_increment: G, mut innovation: H) -> FactorizedSample
    where
        G: FnMut(usize) -> SkewMatrix,
        H: FnMut(usize) -> Vector,
    {
        let n = self.cfg.n;
        let geometric = self.cfg.scheme == Scheme::Geometric;
        let mut gamma = Vector::zeros(n);
        let mut last = (crate::geometry::Rotation::identity(n), 0.0);
        let steps = self.cfg.n_steps;
        walk_with(&self.cfg, next_increment, |k, _, u, ls| {
            if k < steps {
                let xi = self.factors[k] * innovation(k);
                let w = if geometric { 1.0 } else { (-ls).exp() };
                gamma += u.mat().transpose_mul_vec(&xi).scale(w);
            } else {
                last = (*u, ls);
            }
        });
        let (u, ls) = last;
        let x = (*u.mat() * (*x0 - gamma)).scale(ls.exp());
        FactorizedSample { t: self.cfg.horizon, u, log_scale: ls, gamma, x }
    }

    /// `X_t − Z_t x₀` for a fixed rotation path and fresh `B̄` noise.
    pub fn fluctuation_on_path<R: Rng + ?Sized>(&self, path: &RotationPath, rng: &mut R) -> Vector {
        assert_eq!(path.n_steps(), self.cfg.n_steps);
        let n = self.cfg.n;
        let geometric = self.cfg.scheme == Scheme::Geometric;
        let mut gamma = Vector::zeros(n);
        for k in 0..path.n_steps() {
            let xi = self.factors[k] * Vector::from_fn(n, |_| rng::normal(rng));
            let w = if geometric { 1.0 } else { (-path.log_scale[k]).exp() };
            gamma += path.rotations[k].mat().transpose_mul_vec(&xi).scale(w);
        }
        let m = path.terminal().mat().scale(path.log_scale[path.n_steps()].exp());
        -(m * gamma)
    }
}

/// One factorized draw: `sample_factorized(x0, cfg, law, index)`.
pub fn sample_factorized(x0: &Vector, cfg: &BmConfig, law: &InitialLaw, index: u64) -> Result<FactorizedSample> {
    Ok(FactorizedSampler::new(*cfg, law.clone())?.sample(x0, index))
}

/// Exchangeable interacting particle system.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub positions: Vec<Vector>,
    pub time: f64,
}

/// Common noise of one particle step.
#[derive(Debug, Clone, Copy)]
pub struct StepNoise {
    /// `Σ_j ΔB^{(j)}`, the increment of the driving motion `B`.
    pub sum: SkewMatrix,
    /// Zero-mean linear part of the ensemble-energy increment, `−2 X̄·Σ_j ΔB^{(j)} X^j`.
    pub energy_martingale: f64,
    /// `E[Δenergy | state] = (N−1)² Δt² (energy − |X̄|²)`.
    pub energy_compensator: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<Vector>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(config_err("an ensemble needs at least 2 particles"));
        }
        let n = positions[0].dim();
        if positions.iter().any(|p| p.dim() != n || !p.is_finite()) {
            return Err(config_err("particles must be finite and of equal dimension"));
        }
        Ok(ParticleEnsemble { positions, time: 0.0 })
    }

    pub fn from_law<R: Rng + ?Sized>(law: &InitialLaw, m: usize, rng: &mut R) -> Result<Self> {
        Self::new((0..m).map(|_| law.sample(rng)).collect())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].dim()
    }

    pub fn mean(&self) -> Vector {
        let mut s = Vector::zeros(self.dim());
        for p in &self.positions {
            s += *p;
        }
        s.scale(1.0 / self.len() as f64)
    }

    /// `(1/M) Σ |X^i|²`.
    pub fn energy(&self) -> f64 {
        self.positions.iter().map(|p| p.norm_sq()).sum::<f64>() / self.len() as f64
    }

    /// `(1/M) Σ X^i ⊗ X^i`.
    pub fn second_moment(&self) -> Mat {
        let mut s = Mat::zeros(self.dim());
        for p in &self.positions {
            s += Mat::outer(p, p);
        }
        s.scale(1.0 / self.len() as f64)
    }
}

/// `X^i ← X^i + Σ_j ΔB^{(j)}(X^i − X^j) − (N−1)(X^i − X̄) Δt` with i.i.d.
/// `ΔB^{(j)}` of per-entry variance `Δt/M`, common to every particle.
pub fn particle_step<R: Rng + ?Sized>(ens: &mut ParticleEnsemble, dt: f64, rng: &mut R) -> StepNoise {
    let n = ens.dim();
    let m = ens.len();
    let c = n as f64 - 1.0;
    let var = dt / m as f64;
    let mut s = SkewMatrix::zeros(n);
    let mut t = Vector::zeros(n);
    for xj in &ens.positions {
        let db = sample_skew_increment(n, var, rng);
        s.add_scaled(1.0, &db);
        t += db.apply(xj);
    }
    let mean = ens.mean();
    let energy = ens.energy();
    for x in ens.positions.iter_mut() {
        let noise = s.apply(x) - t;
        let drift = (*x - mean).scale(-c * dt);
        *x += noise + drift;
    }
    ens.time += dt;
    StepNoise { sum: s, energy_martingale: -2.0 * mean.dot(&t), energy_compensator: c * c * dt * dt * (energy - mean.norm_sq()) }
}

/// One simulated ensemble with its common-noise resolvent.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub initial: Vec<Vector>,
    pub ensemble: ParticleEnsemble,
    /// Itô–Euler resolvent driven by `Σ_j ΔB^{(j)}`.
    pub resolvent: Mat,
    pub initial_energy: f64,
    /// Σ of the zero-mean linear energy increments.
    pub energy_martingale: f64,
    /// Σ of the conditional expected energy increments.
    pub energy_compensator: f64,
}

/// Replicate `rep` of an `M`-particle run to `n_steps · dt`.
pub fn simulate_ensemble(law: &InitialLaw, m: usize, dt: f64, n_steps: usize, seed: u64, rep: u64) -> Result<EnsembleRun> {
    if !(dt > 0.0) {
        return Err(config_err("dt must be positive"));
    }
    let mut init = rng::stream(seed, rep, Substream::Initial);
    let mut noise = rng::stream(seed, rep, Substream::Aux);
    let mut ens = ParticleEnsemble::from_law(law, m, &mut init)?;
    let initial = ens.positions.clone();
    let initial_energy = ens.energy();
    let n = law.dim();
    let c = n as f64 - 1.0;
    let mut z = Mat::identity(n);
    let (mut mart, mut comp) = (0.0, 0.0);
    for _ in 0..n_steps {
        let step = particle_step(&mut ens, dt, &mut noise);
        z = z + step.sum.to_mat() * z - z.scale(c * dt);
        mart += step.energy_martingale;
        comp += step.energy_compensator;
    }
    Ok(EnsembleRun { initial, ensemble: ens, resolvent: z, initial_energy, energy_martingale: mart, energy_compensator: comp })
}

/// Relative ensemble-energy drift of the particle system over replicates.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyDriftReport {
    pub m: usize,
    pub dt: f64,
    pub horizon: f64,
    pub n_reps: usize,
    /// Mean of `(E_T − E_0)/E_0`.
    pub raw: f64,
    pub raw_se: f64,
    /// Same with the zero-mean linear noise term removed (control variate).
    pub controlled: f64,
    pub controlled_se: f64,
    /// Mean of the summed conditional expected increments over `E_0`.
    pub compensator: f64,
}

/// Replicates are run in parallel; replicate `r` uses stream index `r`.
pub fn particle_energy_drift(law: &InitialLaw, m: usize, dt: f64, horizon: f64, n_reps: usize, seed: u64) -> Result<EnergyDriftReport> {
    let n_steps = (horizon / dt).round() as usize;
    if n_steps == 0 || n_reps == 0 {
        return Err(config_err("need at least one step and one replicate"));
    }
    let runs: Vec<EnsembleRun> = crate::brownian::block_collect(n_reps, |r| simulate_ensemble(law, m, dt, n_steps, seed, r as u64))
        .into_iter()
        .flatten()
        .collect::<Result<_>>()?;
    let mut raw = MeanVar::new();
    let mut ctl = MeanVar::new();
    let mut comp = MeanVar::new();
    for r in &runs {
        let d = r.ensemble.energy() - r.initial_energy;
        raw.push(d / r.initial_energy);
        ctl.push((d - r.energy_martingale) / r.initial_energy);
        comp.push(r.energy_compensator / r.initial_energy);
    }
    Ok(EnergyDriftReport {
        m,
        dt,
        horizon: n_steps as f64 * dt,
        n_reps,
        raw: raw.mean,
        raw_se: raw.std_error(),
        controlled: ctl.mean,
        controlled_se: ctl.std_error(),
        compensator: comp.mean,
    })
}

/// Entrywise estimate with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixEstimate {
    pub mean: Vec<Vec<f64>>,
    pub std_error: Vec<Vec<f64>>,
}

impl MatrixEstimate {
    fn from_acc(n: usize, acc: &[MeanVar]) -> Self {
        MatrixEstimate {
            mean: (0..n).map(|i| (0..n).map(|j| acc[i * n + j].mean).collect()).collect(),
            std_error: (0..n).map(|i| (0..n).map(|j| acc[i * n + j].std_error()).collect()).collect(),
        }
    }
}

/// Small-time variance scales for a law on a line.
#[derive(Debug, Clone, Serialize)]
pub struct ScaleComparison {
    /// `Var(X¹_t − (Z_t x₀)¹)/t²` then `Var(X^i_t)/t` for `i ≥ 2`.
    pub factorized: Vec<f64>,
    pub factorized_se: Vec<f64>,
    pub particle: Vec<f64>,
    pub particle_se: Vec<f64>,
    pub max_standardized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidationReport {
    pub n: usize,
    pub t: f64,
    pub m: usize,
    pub n_steps: usize,
    pub n_reps: usize,
    /// Closed-form `E[X_t ⊗ X_t]`.
    pub target: Vec<Vec<f64>>,
    pub factorized: MatrixEstimate,
    pub particle: MatrixEstimate,
    /// `max |a−b| / √(se_a² + se_b²)` over entries.
    pub max_standardized: f64,
    /// Entrywise `|a−b| ≤ 3 se + 0.02 E/N`.
    pub covariance_agrees: bool,
    pub quantile_levels: Vec<f64>,
    pub radial_quantiles_factorized: Vec<f64>,
    pub radial_quantiles_particle: Vec<f64>,
    /// Two-sample statistic on `|X_t|`; particles within a replicate are
    /// dependent, so the p-value is indicative only.
    pub radial_ks: KsResult,
    pub scales: Option<ScaleComparison>,
}

#[derive(Clone)]
struct CvAcc {
    second: Vec<MeanVar>,
    scale: Vec<MeanVar>,
    radii: Vec<f64>,
}

impl Merge for CvAcc {
    fn merge(&mut self, o: Self) {
        self.second.merge(o.second);
        self.scale.merge(o.scale);
        self.radii.extend(o.radii);
    }
}

/// Compares the factorized sampler (`M · n_reps` independent draws with
/// `X₀` from `law`) with `n_reps` particle ensembles of size `M`.
pub fn cross_validate(law: &InitialLaw, t: f64, m: usize, n_steps: usize, n_reps: usize, seed: u64) -> Result<CrossValidationReport> {
    if !(t >= 0.0) || n_steps == 0 || n_reps < 2 || m < 2 {
        return Err(config_err("cross_validate needs t >= 0, n_steps >= 1, n_reps >= 2, M >= 2"));
    }
    let n = law.dim();
    let n_fact = m * n_reps;
    let degenerate = law.is_degenerate();
    let scale_of = |fluct: &Vector, x: &Vector| -> Vec<f64> {
        let mut v = vec![fluct[0] * fluct[0] / (t * t)];
        v.extend((1..n).map(|i| x[i] * x[i] / t));
        v
    };
    let new_acc = || CvAcc { second: vec![MeanVar::new(); n * n], scale: vec![MeanVar::new(); n], radii: Vec::new() };

    // Factorized side.
    let sampler = if t > 0.0 { Some(FactorizedSampler::new(BmConfig::new(n, t, n_steps, seed)?, law.clone())?) } else { None };
    let fact = block_reduce(n_fact, new_acc, |acc, i| {
        let (x, fluct) = match &sampler {
            Some(s) => {
                let (x0, d) = s.sample_from_law(i as u64);
                (d.x, d.x - d.resolvent() * x0)
            }
            None => (law.sample(&mut rng::stream(seed, i as u64, Substream::Initial)), Vector::zeros(n)),
        };
        for a in 0..n {
            for b in 0..n {
                acc.second[a * n + b].push(x[a] * x[b]);
            }
        }
        if degenerate && t > 0.0 {
            for (k, v) in scale_of(&fluct, &x).into_iter().enumerate() {
                acc.scale[k].push(v);
            }
        }
        acc.radii.push(x.norm());
    });

    // Particle side: one accumulator entry per replicate.
    let dt = if t > 0.0 { t / n_steps as f64 } else { 1.0 };
    let steps = if t > 0.0 { n_steps } else { 0 };
    let rep_offset = 1u64 << 40;
    let part = block_reduce(n_reps, new_acc, |acc, r| {
        let run = simulate_ensemble(law, m, dt, steps, seed, rep_offset + r as u64).expect("validated inputs");
        let sm = run.ensemble.second_moment();
        for a in 0..n {
            for b in 0..n {
                acc.second[a * n + b].push(sm[(a, b)]);
            }
        }
        if degenerate && t > 0.0 {
            let mut per = vec![0.0; n];
            for (x, x0) in run.ensemble.positions.iter().zip(&run.initial) {
                let fl = *x - run.resolvent * *x0;
                for (k, v) in scale_of(&fl, x).into_iter().enumerate() {
                    per[k] += v / m as f64;
                }
            }
            for (k, v) in per.into_iter().enumerate() {
                acc.scale[k].push(v);
            }
        }
        acc.radii.extend(run.ensemble.positions.iter().map(|x| x.norm()));
    });

    let mut max_std = 0.0f64;
    let mut agrees = true;
    let allowance = 0.02 * law.energy() / n as f64;
    for k in 0..n * n {
        let (a, b) = (&fact.second[k], &part.second[k]);
        let se = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
        let d = (a.mean - b.mean).abs();
        max_std = max_std.max(standardized(d, se));
        agrees &= d <= 3.0 * se + allowance;
    }
    let levels = vec![0.1, 0.25, 0.5, 0.75, 0.9];
    let mut ra = fact.radii.clone();
    let mut rb = part.radii.clone();
    ra.sort_by(f64::total_cmp);
    rb.sort_by(f64::total_cmp);
    let scales = (degenerate && t > 0.0).then(|| {
        let mut ms = 0.0f64;
        for k in 0..n {
            let se = (fact.scale[k].std_error().powi(2) + part.scale[k].std_error().powi(2)).sqrt();
            ms = ms.max(standardized((fact.scale[k].mean - part.scale[k].mean).abs(), se));
        }
        ScaleComparison {
            factorized: fact.scale.iter().map(|a| a.mean).collect(),
            factorized_se: fact.scale.iter().map(|a| a.std_error()).collect(),
            particle: part.scale.iter().map(|a| a.mean).collect(),
            particle_se: part.scale.iter().map(|a| a.std_error()).collect(),
            max_standardized: ms,
        }
    });
    Ok(CrossValidationReport {
        n,
        t,
        m,
        n_steps,
        n_reps,
        target: second_moment_at(t, law).to_rows(),
        factorized: MatrixEstimate::from_acc(n, &fact.second),
        particle: MatrixEstimate::from_acc(n, &part.second),
        max_standardized: max_std,
        covariance_agrees: agrees,
        radial_quantiles_factorized: levels.iter().map(|&p| quantile_sorted(&ra, p)).collect(),
        radial_quantiles_particle: levels.iter().map(|&p| quantile_sorted(&rb, p)).collect(),
        quantile_levels: levels,
        radial_ks: ks_two_sample(&ra, &rb),
        scales,
    })
}

fn standardized(d: f64, se: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else if se > 0.0 {
        d / se
    } else {
        f64::INFINITY
    }
}
