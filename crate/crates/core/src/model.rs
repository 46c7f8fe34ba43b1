//! Closed-form model quantities of the linearized Landau SDE.
//!
//! `Λ_t = E[|X_t|²] Id − E[X_t ⊗ X_t]` has the closed form
//! `Λ_t = iso·Id + e^{−2Nt} K` with `iso = E(N−1)/N` and the traceless part
//! `K = (E/N) Id − Σ₀`. Conditional covariances integrate rotated copies of
//! `Λ` along a path; the `Λ` factor is integrated exactly over each grid
//! interval and the rotation by the trapezoid rule.

use crate::brownian::RotationPath;
use crate::error::{config_err, Error, Result};
use crate::linalg::{cholesky, sym_eigen, Mat, Vector};
use crate::quad::{int_exp, integrate};
use crate::rng;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `λ̄` above this value classifies a law as supported on a line.
pub const DEGENERACY_THRESHOLD: f64 = 1.0 - 1e-9;

/// Symmetric positive semi-definite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpdMatrix(Mat);

impl SpdMatrix {
    /// Validates symmetry (`1e−12` relative) and `λ_min ≥ −1e−12 ‖M‖`.
    pub fn new(m: Mat) -> Result<Self> {
        let scale = m.frobenius_norm().max(1.0);
        let asym = (m - m.transpose()).max_abs();
        if asym > 1e-12 * scale {
            return Err(config_err(format!("matrix is not symmetric (asymmetry {asym:e})")));
        }
        let s = SpdMatrix(m.symmetric_part());
        let lmin = s.eigenvalues()[0];
        if lmin < -1e-12 * scale {
            return Err(config_err(format!("matrix is not positive semi-definite (eigenvalue {lmin:e})")));
        }
        Ok(s)
    }

    /// Symmetrizes without validation.
    pub(crate) fn from_sym(m: Mat) -> Self {
        SpdMatrix(m.symmetric_part())
    }

    #[inline]
    pub fn mat(&self) -> &Mat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigen(&self.0).0
    }

    pub fn det(&self) -> f64 {
        self.0.det()
    }

    pub fn condition_number(&self) -> f64 {
        let e = self.eigenvalues();
        let lo = e[0];
        let hi = e[e.len() - 1];
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// `a(v) = |v|² Id − v ⊗ v`.
pub fn collision_matrix(v: &Vector) -> SpdMatrix {
    let n = v.dim();
    SpdMatrix(Mat::identity(n).scale(v.norm_sq()) - Mat::outer(v, v))
}

/// How initial conditions are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Centered Gaussian with covariance `Σ₀`.
    Gaussian,
    /// `±√E u` with `u` spanning the range of a rank-one `Σ₀`.
    RademacherLine,
    /// `√E` times a uniform point of the sphere; requires isotropic `Σ₀`.
    UniformSphereScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawLabel {
    NonDegenerate,
    DegenerateLine,
}

/// Mean-zero law of `X₀`.
#[derive(Debug, Clone)]
pub struct InitialLaw {
    n: usize,
    energy: f64,
    second_moment: Mat,
    sampler: SamplerKind,
    label: LawLabel,
    lambda_bar: f64,
    lambda_under: f64,
    factor: Mat,
}

/// Serialized description of an initial law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LawConfig {
    pub dimension: usize,
    #[serde(default = "default_energy")]
    pub energy: f64,
    pub second_moment: SecondMomentSpec,
    #[serde(default)]
    pub sampler: Option<SamplerKind>,
}

fn default_energy() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SecondMomentSpec {
    /// `"isotropic"` or `"line:e<k>"`.
    Named(String),
    Dense(Vec<Vec<f64>>),
}

impl InitialLaw {
    /// Law with second-moment matrix `Σ₀`; the energy is `tr Σ₀`.
    pub fn new(second_moment: Mat, sampler: SamplerKind) -> Result<Self> {
        let n = second_moment.dim();
        if n < 2 {
            return Err(config_err("dimension must be at least 2"));
        }
        let s = SpdMatrix::new(second_moment)?;
        let energy = s.mat().trace();
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(config_err("energy must be positive and finite"));
        }
        let (vals, vecs) = sym_eigen(s.mat());
        let lambda_bar = vals[n - 1] / energy;
        let lambda_under = vals[0].max(0.0) / energy;
        let label = if lambda_bar > DEGENERACY_THRESHOLD { LawLabel::DegenerateLine } else { LawLabel::NonDegenerate };
        let factor = match sampler {
            SamplerKind::Gaussian => {
                let d: Vec<f64> = vals.iter().map(|x| x.max(0.0).sqrt()).collect();
                vecs * Mat::from_diag(&d)
            }
            SamplerKind::RademacherLine => {
                if label != LawLabel::DegenerateLine {
                    return Err(config_err("rademacher_line sampler needs a rank-one second moment"));
                }
                let mut u = vecs.column(n - 1);
                let k = (0..n).find(|&i| u[i].abs() > 1e-12).unwrap_or(0);
                if u[k] < 0.0 {
                    u = -u;
                }
                let mut f = Mat::zeros(n);
                f.set_column(0, &u.scale(energy.sqrt()));
                f
            }
            SamplerKind::UniformSphereScaled => {
                let iso = Mat::identity(n).scale(energy / n as f64);
                if s.mat().max_abs_diff(&iso) > 1e-12 * energy {
                    return Err(config_err("uniform_sphere_scaled sampler needs an isotropic second moment"));
                }
                Mat::identity(n).scale(energy.sqrt())
            }
        };
        Ok(InitialLaw { n, energy, second_moment: *s.mat(), sampler, label, lambda_bar, lambda_under, factor })
    }

    /// `Σ₀ = (E/N) Id`, Gaussian sampler.
    pub fn isotropic(n: usize, energy: f64) -> Self {
        Self::new(Mat::identity(n).scale(energy / n as f64), SamplerKind::Gaussian).expect("valid isotropic law")
    }

    /// `Σ₀ = E e₁ ⊗ e₁`, Rademacher sampler.
    pub fn line(n: usize, energy: f64) -> Self {
        let mut m = Mat::zeros(n);
        m[(0, 0)] = energy;
        Self::new(m, SamplerKind::RademacherLine).expect("valid line law")
    }

    /// `Σ₀ = diag(d)`, Gaussian sampler.
    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diag(d), SamplerKind::Gaussian)
    }

    /// Parses `isotropic`, `line:e<k>` or `aniso:<d1>,<d2>,…` (a diagonal
    /// second moment whose entries sum to the energy).
    pub fn parse(spec: &str, n: usize, energy: f64) -> Result<Self> {
        let spec = spec.trim();
        if spec == "isotropic" {
            if !(2..=crate::linalg::MAX_DIM).contains(&n) {
                return Err(config_err(format!("unsupported dimension {n}")));
            }
            return Ok(Self::isotropic(n, energy));
        }
        if let Some(axis) = spec.strip_prefix("line:") {
            let k = parse_axis(axis, n)?;
            let mut m = Mat::zeros(n);
            m[(k, k)] = energy;
            return Self::new(m, SamplerKind::RademacherLine);
        }
        if let Some(list) = spec.strip_prefix("aniso:") {
            let d: Vec<f64> = list
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| config_err(format!("bad entry {x:?}: {e}"))))
                .collect::<Result<_>>()?;
            if d.len() != n {
                return Err(config_err(format!("aniso spec has {} entries for dimension {n}", d.len())));
            }
            return Self::diagonal(&d);
        }
        Err(config_err(format!("unknown law spec {spec:?}")))
    }

    pub fn from_config(cfg: &LawConfig) -> Result<Self> {
        let n = cfg.dimension;
        if !(2..=crate::linalg::MAX_DIM).contains(&n) {
            return Err(config_err(format!("unsupported dimension {n}")));
        }
        let (m, default_sampler) = match &cfg.second_moment {
            SecondMomentSpec::Named(name) if name == "isotropic" => (Mat::identity(n).scale(cfg.energy / n as f64), SamplerKind::Gaussian),
            SecondMomentSpec::Named(name) => match name.strip_prefix("line:") {
                Some(axis) => {
                    let k = parse_axis(axis, n)?;
                    let mut m = Mat::zeros(n);
                    m[(k, k)] = cfg.energy;
                    (m, SamplerKind::RademacherLine)
                }
                None => return Err(config_err(format!("unknown second_moment {name:?}"))),
            },
            SecondMomentSpec::Dense(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(config_err("second_moment must be a dimension x dimension matrix"));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let m = Mat::from_row_slice(n, &flat);
                if (m.trace() - cfg.energy).abs() > 1e-12 * cfg.energy.max(1.0) {
                    return Err(config_err(format!("trace of second_moment ({}) differs from energy ({})", m.trace(), cfg.energy)));
                }
                (m, SamplerKind::Gaussian)
            }
        };
        Self::new(m, cfg.sampler.unwrap_or(default_sampler))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn second_moment(&self) -> &Mat {
        &self.second_moment
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn label(&self) -> LawLabel {
        self.label
    }

    pub fn is_degenerate(&self) -> bool {
        self.label == LawLabel::DegenerateLine
    }

    /// Largest eigenvalue of `Σ₀` over the energy.
    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    /// Smallest eigenvalue of `Σ₀` over the energy.
    pub fn lambda_under(&self) -> f64 {
        self.lambda_under
    }

    /// Scalar part `E(N−1)/N` of `Λ_t`.
    pub fn lambda_iso(&self) -> f64 {
        self.energy * (self.n as f64 - 1.0) / self.n as f64
    }

    /// Traceless part `K = (E/N) Id − Σ₀` of `Λ_0`.
    pub fn lambda_aniso(&self) -> Mat {
        Mat::identity(self.n).scale(self.energy / self.n as f64) - self.second_moment
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.n;
        match self.sampler {
            SamplerKind::Gaussian => self.factor * Vector::from_fn(n, |_| rng::normal(rng)),
            SamplerKind::RademacherLine => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                self.factor.column(0).scale(sign)
            }
            SamplerKind::UniformSphereScaled => {
                let g = Vector::from_fn(n, |_| rng::normal(rng));
                g.scale(self.energy.sqrt() / g.norm())
            }
        }
    }
}

fn parse_axis(axis: &str, n: usize) -> Result<usize> {
    let k: usize =
        axis.strip_prefix('e').and_then(|x| x.parse().ok()).ok_or_else(|| config_err(format!("bad axis {axis:?}, expected e<k>")))?;
    if k == 0 || k > n {
        return Err(config_err(format!("axis e{k} outside dimension {n}")));
    }
    Ok(k - 1)
}

/// `Λ_t = (1/N)[N−1+e^{−2Nt}] E Id − e^{−2Nt} Σ₀`.
pub fn lambda_at(t: f64, law: &InitialLaw) -> SpdMatrix {
    let n = law.dim() as f64;
    SpdMatrix::from_sym(Mat::identity(law.dim()).scale(law.lambda_iso()).axpy((-2.0 * n * t).exp(), &law.lambda_aniso()))
}

/// `E[X_t ⊗ X_t] = (E/N) Id − e^{−2Nt} K`.
pub fn second_moment_at(t: f64, law: &InitialLaw) -> Mat {
    let n = law.dim();
    Mat::identity(n).scale(law.energy() / n as f64).axpy(-(-2.0 * n as f64 * t).exp(), &law.lambda_aniso())
}

/// `Ψ_N(t, β) = (1−1/N)(1−e^{−2Nt}) + (1−β) e^{−2Nt}`.
pub fn psi(n: usize, t: f64, beta: f64) -> f64 {
    let n = n as f64;
    let e = (-2.0 * n * t).exp();
    (1.0 - 1.0 / n) * (1.0 - e) + (1.0 - beta) * e
}

/// `(η̄, η̲) = ((1−λ̄) ∧ (1−1/N), (1−λ̲) ∨ (1−1/N))`.
pub fn eta_bounds(law: &InitialLaw) -> Result<(f64, f64)> {
    if law.is_degenerate() {
        return Err(Error::Degenerate);
    }
    let base = 1.0 - 1.0 / law.dim() as f64;
    Ok(((1.0 - law.lambda_bar()).min(base), (1.0 - law.lambda_under()).max(base)))
}

/// `ā(t, v) = Λ_t + a(v)`.
pub fn abar(t: f64, v: &Vector, law: &InitialLaw) -> SpdMatrix {
    SpdMatrix(*lambda_at(t, law).mat() + *collision_matrix(v).mat())
}

/// Effective time `τ(t) = ∫₀ᵗ e^{−(N−1)(t−s)} ds = (1 − e^{−(N−1)t})/(N−1)`.
pub fn effective_time(n: usize, t: f64) -> f64 {
    let c = n as f64 - 1.0;
    -(-c * t).exp_m1() / c
}

/// Streaming quadrature of
/// `C_t = ∫₀ᵗ e^{−(N−1)(t−s)} U_t U_sᵀ Λ_s U_s U_tᵀ ds`.
///
/// Accumulates `S = Σ_k J_k (U_kᵀ K U_k + U_{k+1}ᵀ K U_{k+1})/2` with
/// `J_k = ∫ e^{(N−1−2N)s} ds` over the interval, so `C` can be read off at
/// any grid time: `C_t = iso τ(t) Id + e^{−(N−1)t} U_t S U_tᵀ`.
#[derive(Debug, Clone)]
pub struct CovarianceQuadrature {
    n: usize,
    iso: f64,
    aniso: Mat,
    isotropic: bool,
    acc: Mat,
}

impl CovarianceQuadrature {
    pub fn new(law: &InitialLaw) -> Self {
        let aniso = law.lambda_aniso();
        CovarianceQuadrature { n: law.dim(), iso: law.lambda_iso(), isotropic: aniso.max_abs() == 0.0, aniso, acc: Mat::zeros(law.dim()) }
    }

    /// Adds the interval `[a, b]` with endpoint rotations `U_a`, `U_b`.
    #[inline]
    pub fn push(&mut self, a: f64, b: f64, ua: &Mat, ub: &Mat) {
        if self.isotropic {
            return;
        }
        let n = self.n as f64;
        let j = int_exp(a, b, 0.0, -(n + 1.0));
        let avg = ua.congruence_t(&self.aniso) + ub.congruence_t(&self.aniso);
        self.acc = self.acc.axpy(0.5 * j, &avg);
    }

    /// `C_t` given the rotation `U_t` at the current time `t`.
    pub fn value(&self, t: f64, ut: &Mat) -> Mat {
        let c = self.n as f64 - 1.0;
        let iso = Mat::identity(self.n).scale(self.iso * effective_time(self.n, t));
        if self.isotropic {
            return iso;
        }
        iso + ut.congruence(&self.acc).scale((-c * t).exp())
    }
}

/// Streaming quadrature of `C̄_t = ∫₀ᵗ e^{−(N−1)s} U_s Λ_{t−s} U_sᵀ ds` for a
/// fixed horizon `t`.
#[derive(Debug, Clone)]
pub struct ReversedCovarianceQuadrature {
    n: usize,
    t: f64,
    iso: f64,
    aniso: Mat,
    acc: Mat,
}

impl ReversedCovarianceQuadrature {
    pub fn new(law: &InitialLaw, t: f64) -> Self {
        ReversedCovarianceQuadrature { n: law.dim(), t, iso: law.lambda_iso(), aniso: law.lambda_aniso(), acc: Mat::zeros(law.dim()) }
    }

    #[inline]
    pub fn push(&mut self, a: f64, b: f64, ua: &Mat, ub: &Mat) {
        let n = self.n as f64;
        let w = int_exp(a, b, -2.0 * n * self.t, n + 1.0);
        let avg = ua.congruence(&self.aniso) + ub.congruence(&self.aniso);
        self.acc = self.acc.axpy(0.5 * w, &avg);
    }

    pub fn value(&self) -> Mat {
        Mat::identity(self.n).scale(self.iso * effective_time(self.n, self.t)) + self.acc
    }
}

fn check_path(path: &RotationPath, law: &InitialLaw) -> Result<()> {
    if path.n_steps() == 0 {
        return Err(Error::EmptyPath);
    }
    if path.dim() != law.dim() {
        return Err(config_err("path and law dimensions differ"));
    }
    Ok(())
}

/// Conditional covariance `C_t` at the path horizon.
pub fn covariance_c(path: &RotationPath, law: &InitialLaw) -> Result<SpdMatrix> {
    Ok(*covariance_c_series(path, law)?.last().expect("nonempty"))
}

/// `C_{t_k}` at every grid time of the path.
pub fn covariance_c_series(path: &RotationPath, law: &InitialLaw) -> Result<Vec<SpdMatrix>> {
    check_path(path, law)?;
    let mut q = CovarianceQuadrature::new(law);
    let mut out = Vec::with_capacity(path.times.len());
    out.push(SpdMatrix::from_sym(Mat::zeros(law.dim())));
    for k in 0..path.n_steps() {
        let (a, b) = (path.times[k], path.times[k + 1]);
        let (ua, ub) = (path.rotations[k].mat(), path.rotations[k + 1].mat());
        q.push(a, b, ua, ub);
        out.push(SpdMatrix::from_sym(q.value(b, ub)));
    }
    Ok(out)
}

/// Time-reversed conditional covariance `C̄_t` at the path horizon.
pub fn covariance_c_bar(path: &RotationPath, law: &InitialLaw) -> Result<SpdMatrix> {
    check_path(path, law)?;
    let mut q = ReversedCovarianceQuadrature::new(law, path.horizon());
    for k in 0..path.n_steps() {
        q.push(path.times[k], path.times[k + 1], path.rotations[k].mat(), path.rotations[k + 1].mat());
    }
    Ok(SpdMatrix::from_sym(q.value()))
}

/// Exact `E[C_t]` over the Brownian path, using
/// `E[U_r A U_rᵀ] = (tr A/N) Id + e^{−N r}(A − (tr A/N) Id)`.
pub fn mean_conditional_covariance(t: f64, law: &InitialLaw) -> Mat {
    let n = law.dim();
    let nf = n as f64;
    let w = int_exp(0.0, t, -(2.0 * nf - 1.0) * t, -1.0);
    Mat::identity(n).scale(law.lambda_iso() * effective_time(n, t)).axpy(w, &law.lambda_aniso())
}

/// `D_s` for the unit-energy law on `e₁`:
/// `diag((N−1)(1−e^{−2Ns})/N, 1−(1−e^{−2Ns})/N, …)`.
pub fn d_matrix(n: usize, s: f64) -> SpdMatrix {
    let nf = n as f64;
    let g = -(-2.0 * nf * s).exp_m1();
    let mut d = vec![1.0 - g / nf; n];
    d[0] = (nf - 1.0) * g / nf;
    SpdMatrix(Mat::from_diag(&d))
}

/// Determinant control of the conditional covariance in the degenerate case.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetBound {
    pub t: f64,
    pub det_c: f64,
    /// `(∫₀ᵗ det(D_s)^{1/N} ds)^N`.
    pub bound: f64,
    /// `(∫₀ᵗ e^{−(N−1)(t−s)} det(D_s)^{1/N} ds)^N`.
    pub damped_bound: f64,
    /// `10 Δt E`.
    pub eps_quad: f64,
}

impl DetBound {
    pub fn holds(&self) -> bool {
        self.det_c >= self.bound * (1.0 - self.eps_quad)
    }

    pub fn damped_holds(&self) -> bool {
        self.det_c >= self.damped_bound * (1.0 - self.eps_quad)
    }
}

/// `(∫₀ᵗ w(s) det(D_s)^{1/N} ds)^N` with `w = 1` or the damping weight.
pub fn det_variational_bound(n: usize, t: f64, damped: bool) -> f64 {
    let nf = n as f64;
    let c = nf - 1.0;
    // s = t u^N removes the s^{1/N} singularity at the origin.
    let f = |u: f64| {
        let s = t * u.powf(nf);
        let w = if damped { (-c * (t - s)).exp() } else { 1.0 };
        let g = d_matrix(n, s).mat().diagonal().as_slice().iter().product::<f64>().max(0.0);
        w * g.powf(1.0 / nf) * nf * t * u.powf(nf - 1.0)
    };
    integrate(f, 0.0, 1.0, 16).powf(nf)
}

/// `det(C_t)` along `path` (unit-energy law on `e₁`) with both variational
/// bounds.
pub fn det_lower_bound(path: &RotationPath) -> Result<DetBound> {
    let n = path.dim();
    let law = InitialLaw::line(n, 1.0);
    let c = covariance_c(path, &law)?;
    let t = path.horizon();
    Ok(DetBound {
        t,
        det_c: c.det(),
        bound: det_variational_bound(n, t, false),
        damped_bound: det_variational_bound(n, t, true),
        eps_quad: 10.0 * t / path.n_steps() as f64,
    })
}

/// Cholesky-based Gaussian log-density helper for a covariance matrix.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFactor {
    pub chol: Mat,
    pub log_det: f64,
}

impl GaussianFactor {
    /// Factors `c`, adding `1e−14 tr(c)` jitter if the plain factorization
    /// fails. Rejects condition numbers above `max_condition`.
    pub fn new(c: &Mat, max_condition: f64) -> Result<Self> {
        let l = match cholesky(c) {
            Some(l) => l,
            None => {
                let jitter = 1e-14 * c.trace();
                cholesky(&(*c + Mat::identity(c.dim()).scale(jitter))).ok_or(Error::DegenerateConditioning { condition: f64::INFINITY })?
            }
        };
        let d = l.diagonal();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..c.dim() {
            lo = lo.min(d[i]);
            hi = hi.max(d[i]);
        }
        let cond_est = (hi / lo).powi(2);
        if cond_est > max_condition {
            let cond = SpdMatrix::from_sym(*c).condition_number();
            if cond > max_condition {
                return Err(Error::DegenerateConditioning { condition: cond });
            }
        }
        let log_det = 2.0 * d.as_slice().iter().map(|x| x.ln()).sum::<f64>();
        Ok(GaussianFactor { chol: l, log_det })
    }

    /// `ln φ_C(y)`.
    pub fn log_density(&self, y: &Vector) -> f64 {
        let n = y.dim() as f64;
        let z = crate::linalg::forward_substitute(&self.chol, y);
        -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + self.log_det + z.norm_sq())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{path_from_increments, simulate_path, BmConfig};
    use crate::geometry::SkewMatrix;

    #[test]
    fn collision_examples() {
        assert_eq!(collision_matrix(&Vector::zeros(3)).mat().max_abs(), 0.0);
        let a = collision_matrix(&Vector::basis(3, 0));
        assert_eq!(*a.mat(), Mat::from_diag(&[0.0, 1.0, 1.0]));
        let v = Vector::from_slice(&[0.3, -1.2, 0.5, 2.0]);
        let e = collision_matrix(&v).eigenvalues();
        assert!(e[0].abs() < 1e-12);
        for x in &e[1..] {
            assert!((x - v.norm_sq()).abs() < 1e-12);
        }
        assert!((*collision_matrix(&v).mat() * v).norm() < 1e-13);
    }

    #[test]
    fn lambda_examples() {
        let line = InitialLaw::line(4, 1.0);
        assert!(lambda_at(0.0, &line).mat().max_abs_diff(&Mat::from_diag(&[0.0, 1.0, 1.0, 1.0])) < 1e-15);
        let iso = InitialLaw::isotropic(3, 2.0);
        for &t in &[0.0, 0.3, 5.0] {
            assert!(lambda_at(t, &iso).mat().max_abs_diff(&Mat::identity(3).scale(4.0 / 3.0)) < 1e-15);
        }
        let an = InitialLaw::diagonal(&[0.7, 0.3]).unwrap();
        assert!(lambda_at(20.0, &an).mat().max_abs_diff(&Mat::identity(2).scale(0.5)) < 1e-15);
    }

    #[test]
    fn psi_limits_and_eta() {
        assert!((psi(3, 0.0, 0.4) - 0.6).abs() < 1e-15);
        assert!((psi(3, 50.0, 0.4) - 2.0 / 3.0).abs() < 1e-15);
        let (a, b) = eta_bounds(&InitialLaw::isotropic(3, 1.0)).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
        let (a, b) = eta_bounds(&InitialLaw::diagonal(&[0.7, 0.3]).unwrap()).unwrap();
        assert!((a - 0.3).abs() < 1e-15 && (b - 0.7).abs() < 1e-15);
        assert_eq!(eta_bounds(&InitialLaw::line(3, 1.0)), Err(Error::Degenerate));
    }

    #[test]
    fn abar_examples() {
        let law = InitialLaw::diagonal(&[0.5, 0.3, 0.2]).unwrap();
        let v = Vector::from_slice(&[10.0, 0.0, 0.0]);
        let a = abar(0.2, &v, &law);
        let l = lambda_at(0.2, &law);
        let xi = Vector::basis(3, 1);
        assert!((xi.dot(&(*a.mat() * xi)) - xi.dot(&(*l.mat() * xi)) - 100.0).abs() < 1e-12);
        let e1 = Vector::basis(3, 0);
        assert!((e1.dot(&(*a.mat() * e1)) - e1.dot(&(*l.mat() * e1))).abs() < 1e-12);
        assert_eq!(abar(0.2, &Vector::zeros(3), &law), l);
    }

    #[test]
    fn law_parsing() {
        assert!(InitialLaw::parse("isotropic", 3, 1.0).unwrap().label() == LawLabel::NonDegenerate);
        assert!(InitialLaw::parse("line:e1", 3, 1.0).unwrap().is_degenerate());
        let a = InitialLaw::parse("aniso:0.7,0.3", 2, 1.0).unwrap();
        assert!((a.lambda_bar() - 0.7).abs() < 1e-15);
        assert!(InitialLaw::parse("aniso:0.7", 2, 1.0).is_err());
        assert!(InitialLaw::parse("line:e4", 3, 1.0).is_err());
        assert!(InitialLaw::parse("bogus", 3, 1.0).is_err());
        let cfg: LawConfig =
            serde_json::from_str(r#"{"dimension":3,"energy":1.0,"second_moment":"isotropic","sampler":"uniform_sphere_scaled"}"#).unwrap();
        assert_eq!(InitialLaw::from_config(&cfg).unwrap().sampler(), SamplerKind::UniformSphereScaled);
        let cfg: LawConfig = serde_json::from_str(r#"{"dimension":2,"energy":1.0,"second_moment":[[0.6,0.1],[0.1,0.5]]}"#).unwrap();
        assert!(InitialLaw::from_config(&cfg).is_err());
        let bad = InitialLaw::new(Mat::from_diag(&[0.5, 0.5]), SamplerKind::RademacherLine);
        assert!(bad.is_err());
    }

    #[test]
    fn frozen_path_covariance_matches_closed_form() {
        let law = InitialLaw::diagonal(&[0.6, 0.25, 0.15]).unwrap();
        let t = 0.4;
        let cfg = BmConfig::new(3, t, 7, 0).unwrap();
        let path = path_from_increments(&cfg, &vec![SkewMatrix::zeros(3); 7]);
        let c = covariance_c(&path, &law).unwrap();
        let cb = covariance_c_bar(&path, &law).unwrap();
        for i in 0..3 {
            let exact = integrate(|s| (-2.0 * (t - s)).exp() * lambda_at(s, &law).mat()[(i, i)], 0.0, t, 8);
            assert!((c.mat()[(i, i)] - exact).abs() < 1e-14, "{i}");
            assert!((cb.mat()[(i, i)] - exact).abs() < 1e-14, "{i}");
        }
    }

    #[test]
    fn isotropic_covariance_is_deterministic() {
        let law = InitialLaw::isotropic(3, 1.0);
        let cfg = BmConfig::new(3, 0.5, 32, 4).unwrap();
        let p = simulate_path(&cfg, 0);
        let c = covariance_c(&p, &law).unwrap();
        let cb = covariance_c_bar(&p, &law).unwrap();
        let exact = Mat::identity(3).scale(2.0 / 3.0 * effective_time(3, 0.5));
        assert!(c.mat().max_abs_diff(&exact) < 1e-15);
        assert!(cb.mat().max_abs_diff(&exact) < 1e-15);
    }

    #[test]
    fn d_matrix_equals_degenerate_lambda() {
        let law = InitialLaw::line(4, 1.0);
        for &s in &[0.0, 0.01, 0.3, 2.0] {
            assert!(d_matrix(4, s).mat().max_abs_diff(lambda_at(s, &law).mat()) < 1e-15);
        }
        assert!(d_matrix(3, 40.0).mat().max_abs_diff(&Mat::identity(3).scale(2.0 / 3.0)) < 1e-15);
    }

    #[test]
    fn variational_bound_small_t_behaviour() {
        // det(D_s) ≈ 2(N−1) s near 0, so the bound ≈ (2(N−1))·(N/(N+1))^N t^{N+1}.
        let n = 3;
        let t: f64 = 1e-5;
        let lead = 4.0 * (3.0f64 / 4.0).powi(3) * t.powi(4);
        assert!((det_variational_bound(n, t, false) / lead - 1.0).abs() < 1e-3);
    }

    #[test]
    fn gaussian_factor_density() {
        let c = Mat::from_diag(&[2.0, 0.5]);
        let g = GaussianFactor::new(&c, 1e12).unwrap();
        let y = Vector::from_slice(&[1.0, -0.5]);
        let expect = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (1.0f64).ln() - 0.5 * (0.5 + 0.5);
        assert!((g.log_density(&y) - expect).abs() < 1e-14);
        assert!(matches!(GaussianFactor::new(&Mat::from_diag(&[1.0, 1e-14]), 1e12), Err(Error::DegenerateConditioning { .. })));
    }
}
