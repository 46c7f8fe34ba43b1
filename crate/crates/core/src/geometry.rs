//! Geometry of SO(N) and its Lie algebra of skew-symmetric matrices.
//!
//! Matrix norms are Frobenius throughout. `exp_so` uses closed forms for
//! `N = 2, 3` and Padé scaling-and-squaring (via `nalgebra`) otherwise;
//! `log_so` uses Rodrigues' inverse for `N <= 3` and a real Schur form for
//! larger `N`.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector, MAX_DIM};
use crate::rng::{self, Substream};
use crate::stats::{block_reduce, MeanVar};
use rand::Rng;
use serde::Serialize;
use std::f64::consts::PI;

/// Default tolerance on `‖RᵀR − Id‖_F` and `|det R − 1|`.
pub const ROTATION_TOL: f64 = 1e-9;
/// Largest rotation angle accepted by the principal logarithm.
pub const ANGLE_CUTOFF: f64 = PI - 0.1;
/// Zero threshold on `⟨s, e_k⟩` in the Gram–Schmidt cascade.
pub const GS_ZERO: f64 = 1e-12;

const UPPER_CAP: usize = MAX_DIM * (MAX_DIM - 1) / 2;

/// Element of the Lie algebra so(N), stored by its strictly upper
/// triangular coefficients `h_{ij}`, `i < j`, in row order.
#[derive(Clone, Copy, PartialEq)]
pub struct SkewMatrix {
    n: usize,
    upper: [f64; UPPER_CAP],
}

impl std::fmt::Debug for SkewMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SkewMatrix({}, {:?})", self.n, self.upper())
    }
}

impl SkewMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!((2..=MAX_DIM).contains(&n), "dimension {n} outside 2..={MAX_DIM}");
        SkewMatrix { n, upper: [0.0; UPPER_CAP] }
    }

    /// Number of free coefficients, `N(N−1)/2`.
    pub fn n_coeffs(n: usize) -> usize {
        n * (n - 1) / 2
    }

    pub fn from_upper(n: usize, coeffs: &[f64]) -> Self {
        assert_eq!(coeffs.len(), Self::n_coeffs(n));
        let mut h = Self::zeros(n);
        h.upper[..coeffs.len()].copy_from_slice(coeffs);
        h
    }

    /// Generator of the rotation by `theta` in the oriented plane `(e_i, e_j)`:
    /// `exp` maps `e_i` to `cos θ e_i + sin θ e_j`.
    pub fn plane(n: usize, i: usize, j: usize, theta: f64) -> Self {
        assert!(i != j);
        let mut h = Self::zeros(n);
        h.set(j, i, theta);
        h
    }

    /// Skew part `(M − Mᵀ)/2` of an arbitrary matrix.
    pub fn from_mat(m: &Mat) -> Self {
        let n = m.dim();
        let mut h = Self::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                h.upper[k] = 0.5 * (m[(i, j)] - m[(j, i)]);
                k += 1;
            }
        }
        h
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper[..Self::n_coeffs(self.n)]
    }

    pub fn upper_mut(&mut self) -> &mut [f64] {
        let k = Self::n_coeffs(self.n);
        &mut self.upper[..k]
    }

    #[inline]
    fn slot(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.upper[Self::slot(self.n, i, j)],
            std::cmp::Ordering::Greater => -self.upper[Self::slot(self.n, j, i)],
            std::cmp::Ordering::Equal => 0.0,
        }
    }

    /// Sets entry `(i, j)` and, implicitly, `(j, i)` to its negative.
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => self.upper[Self::slot(self.n, i, j)] = x,
            std::cmp::Ordering::Greater => self.upper[Self::slot(self.n, j, i)] = -x,
            std::cmp::Ordering::Equal => assert!(x == 0.0, "diagonal of a skew matrix is zero"),
        }
    }

    pub fn to_mat(&self) -> Mat {
        let n = self.n;
        let mut m = Mat::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                m[(i, j)] = self.upper[k];
                m[(j, i)] = -self.upper[k];
                k += 1;
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut h = *self;
        h.upper_mut().iter_mut().for_each(|x| *x *= s);
        h
    }

    pub fn add(&self, other: &SkewMatrix) -> Self {
        let mut h = *self;
        for (x, y) in h.upper_mut().iter_mut().zip(other.upper()) {
            *x += y;
        }
        h
    }

    pub fn frobenius_norm(&self) -> f64 {
        (2.0 * self.upper().iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    /// `H v` without expanding `H`.
    #[inline]
    pub fn apply(&self, v: &Vector) -> Vector {
        let n = self.n;
        let mut out = Vector::zeros(n);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                let h = self.upper[k];
                out[i] += h * v[j];
                out[j] -= h * v[i];
                k += 1;
            }
        }
        out
    }

    /// `self += s·other`.
    #[inline]
    pub fn add_scaled(&mut self, s: f64, other: &SkewMatrix) {
        let k = Self::n_coeffs(self.n);
        for (x, y) in self.upper[..k].iter_mut().zip(&other.upper[..k]) {
            *x += s * y;
        }
    }
}

/// Element of SO(N).
#[derive(Clone, Copy, PartialEq)]
pub struct Rotation(Mat);

impl std::fmt::Debug for Rotation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Rotation({:?})", self.0)
    }
}

impl Rotation {
    pub fn identity(n: usize) -> Self {
        Rotation(Mat::identity(n))
    }

    /// Validates `m` against the default tolerances.
    pub fn new(m: Mat) -> Result<Self> {
        Self::with_tolerance(m, ROTATION_TOL)
    }

    pub fn with_tolerance(m: Mat, tol: f64) -> Result<Self> {
        let r = Rotation(m);
        let (orth, det) = (r.orthogonality_error(), r.det_error());
        if orth <= tol && det <= tol {
            Ok(r)
        } else {
            Err(Error::NotRotation { orth, det })
        }
    }

    #[inline]
    pub fn mat(&self) -> &Mat {
        &self.0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `‖RᵀR − Id‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose_mul(&self.0) - Mat::identity(self.dim())).frobenius_norm()
    }

    /// `|det R − 1|`.
    pub fn det_error(&self) -> f64 {
        (self.0.det() - 1.0).abs()
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        self.0 * *v
    }

    /// Planar rotation by `theta` in the oriented plane `(e_i, e_j)`.
    pub fn plane(n: usize, i: usize, j: usize, theta: f64) -> Self {
        let mut m = Mat::identity(n);
        let (s, c) = theta.sin_cos();
        m[(i, i)] = c;
        m[(j, j)] = c;
        m[(j, i)] = s;
        m[(i, j)] = -s;
        Rotation(m)
    }
}

/// Unit vector of ℝ^N.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereVector(Vector);

impl SphereVector {
    pub fn new(v: Vector) -> Result<Self> {
        let err = (v.norm() - 1.0).abs();
        if err <= 1e-12 {
            Ok(SphereVector(v))
        } else {
            Err(Error::Config(format!("vector norm differs from 1 by {err:e}")))
        }
    }

    pub fn normalize(v: Vector) -> Self {
        let r = v.norm();
        assert!(r > 0.0, "cannot normalize the zero vector");
        SphereVector(v.scale(1.0 / r))
    }

    pub fn coords(&self) -> &Vector {
        &self.0
    }
}

/// Matrix exponential of a skew matrix.
pub fn exp_so(h: &SkewMatrix) -> Rotation {
    match h.dim() {
        2 => {
            let theta = h.get(1, 0);
            Rotation::plane(2, 0, 1, theta)
        }
        3 => Rotation(rodrigues(h)),
        _ => Rotation(Mat::from_dmatrix(&h.to_mat().to_dmatrix().exp())),
    }
}

fn rodrigues(h: &SkewMatrix) -> Mat {
    let k = h.to_mat();
    let t2 = h.upper().iter().map(|x| x * x).sum::<f64>();
    let theta = t2.sqrt();
    let (a, b) = if theta < 1e-4 {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / t2)
    };
    let mut m = Mat::identity(3).axpy(a, &k);
    m = m.axpy(b, &(k * k));
    m
}

/// Principal matrix logarithm of a rotation.
pub fn log_so(r: &Rotation) -> Result<SkewMatrix> {
    let n = r.dim();
    let m = r.mat();
    let h = match n {
        2 => {
            let theta = m[(1, 0)].atan2(m[(0, 0)]);
            check_angle(theta)?;
            SkewMatrix::plane(2, 0, 1, theta)
        }
        3 => {
            let w = SkewMatrix::from_mat(m);
            let sin_t = w.frobenius_norm() / std::f64::consts::SQRT_2;
            let cos_t = 0.5 * (m.trace() - 1.0);
            let theta = sin_t.atan2(cos_t);
            check_angle(theta)?;
            let f = if theta < 1e-4 { 1.0 + theta * theta / 6.0 + 7.0 * theta.powi(4) / 360.0 } else { theta / theta.sin() };
            w.scale(f)
        }
        _ => log_schur(m)?,
    };
    debug_assert!((exp_so(&h).mat().max_abs_diff(m)) < 1e-8, "log_so round trip failed");
    Ok(h)
}

fn check_angle(theta: f64) -> Result<()> {
    if theta.abs() > ANGLE_CUTOFF {
        Err(Error::Domain { angle: theta.abs(), cutoff: ANGLE_CUTOFF })
    } else {
        Ok(())
    }
}

fn log_schur(m: &Mat) -> Result<SkewMatrix> {
    let n = m.dim();
    let (q, t) = nalgebra::Schur::new(m.to_dmatrix()).unpack();
    let mut l = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-13 {
            let c = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            let theta = s.atan2(c);
            check_angle(theta)?;
            l[(i + 1, i)] = theta;
            l[(i, i + 1)] = -theta;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                return Err(Error::Domain { angle: PI, cutoff: ANGLE_CUTOFF });
            }
            i += 1;
        }
    }
    let h = &q * l * q.transpose();
    let hm = Mat::from_dmatrix(&h);
    let residual = (hm + hm.transpose()).max_abs();
    debug_assert!(residual < 1e-10, "log is not skew: {residual:e}");
    Ok(SkewMatrix::from_mat(&hm))
}

/// Result of [`carnot_distance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarnotDistance {
    pub value: f64,
    /// `false` when the rotation lies outside the principal-log domain and
    /// `value` is the cap [`carnot_cap`].
    pub exact: bool,
}

/// Upper proxy used outside the principal-log domain: `π √2 ⌊N/2⌋`.
pub fn carnot_cap(n: usize) -> f64 {
    PI * std::f64::consts::SQRT_2 * (n / 2) as f64
}

/// `d(Id, R) = ‖log R‖_F`.
pub fn carnot_distance(r: &Rotation) -> CarnotDistance {
    match log_so(r) {
        Ok(h) => CarnotDistance { value: h.frobenius_norm(), exact: true },
        Err(_) => CarnotDistance { value: carnot_cap(r.dim()), exact: false },
    }
}

/// Nearest rotation in Frobenius norm (polar factor with determinant fixed
/// by flipping the smallest singular direction).
pub fn project_to_son(m: &Mat) -> Result<Rotation> {
    let n = m.dim();
    let svd = m.to_dmatrix().svd(true, true);
    let sv = &svd.singular_values;
    let (kmin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, &s)| if s < acc.1 { (k, s) } else { acc });
    if smin < 1e-14 {
        return Err(Error::Singular { sigma_min: smin });
    }
    let mut u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let r = Mat::from_dmatrix(&(&u * &v_t));
    if r.det() < 0.0 {
        for i in 0..n {
            u[(i, kmin)] = -u[(i, kmin)];
        }
        return Ok(Rotation(Mat::from_dmatrix(&(&u * &v_t))));
    }
    Ok(Rotation(r))
}

/// Polar projection specialised to matrices close to a positive multiple of
/// a rotation. Returns the rotation and `ln det(P) / N` for the symmetric
/// factor `P`. Falls back to [`project_to_son`] when Newton–Schulz does not
/// converge.
pub fn project_near_son(m: &Mat) -> Result<(Rotation, f64)> {
    let n = m.dim();
    let det = m.det();
    if !(det > 0.0) {
        let r = project_to_son(m)?;
        return Ok((r, (det.abs().max(f64::MIN_POSITIVE)).ln() / n as f64));
    }
    let log_scale = det.ln() / n as f64;
    let mut x = m.scale((-log_scale).exp());
    let id = Mat::identity(n);
    for _ in 0..30 {
        let e = x.transpose_mul(&x) - id;
        let err = e.frobenius_norm();
        if err < 1e-15 {
            return Ok((Rotation(x), log_scale));
        }
        if err > 0.5 {
            break;
        }
        x = x * (id.scale(1.5) - (e + id).scale(0.5));
    }
    Ok((project_to_son(m)?, log_scale))
}

/// Haar-distributed rotation: Gaussian matrix, Gram–Schmidt (triangular
/// factor with positive diagonal), then determinant fixed to +1 by negating
/// the first column.
pub fn haar_sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Rotation {
    let g = Mat::from_fn(n, |_, _| rng::normal(rng));
    let mut q = orthonormalize_columns(&g);
    if q.det() < 0.0 {
        let c = q.column(0).scale(-1.0);
        q.set_column(0, &c);
    }
    Rotation(q)
}

/// Modified Gram–Schmidt applied twice to the columns of `m`.
fn orthonormalize_columns(m: &Mat) -> Mat {
    let n = m.dim();
    let mut q = *m;
    for _pass in 0..2 {
        for j in 0..n {
            let mut v = q.column(j);
            for k in 0..j {
                let qk = q.column(k);
                v = v.axpy(-qk.dot(&v), &qk);
            }
            let r = v.norm();
            q.set_column(j, &v.scale(1.0 / r));
        }
    }
    q
}

/// Frame `V_s ∈ SO(N)` with first column `s`, obtained by orthonormalizing
/// `(s, e_{k+1}, …, e_N, e_1, …, e_{k−1})` where `k` is the first coordinate
/// with `|s_k| ≥ GS_ZERO`; the last column is negated if needed to land in
/// SO(N).
pub fn gram_schmidt_frame(s: &SphereVector) -> Rotation {
    let v = s.coords();
    let n = v.dim();
    let k = (0..n).find(|&i| v[i].abs() >= GS_ZERO).expect("unit vector has a nonzero coordinate");
    let mut family = Mat::zeros(n);
    family.set_column(0, v);
    for (col, idx) in ((k + 1)..n).chain(0..k).enumerate() {
        family.set_column(col + 1, &Vector::basis(n, idx));
    }
    let mut q = orthonormalize_columns(&family);
    if q.det() < 0.0 {
        let c = q.column(n - 1).scale(-1.0);
        q.set_column(n - 1, &c);
    }
    Rotation(q)
}

/// Block embedding `L_h = diag(1, h)`.
pub fn embed(h: &Rotation) -> Rotation {
    let m = h.dim() + 1;
    let mut l = Mat::identity(m);
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            l[(i + 1, j + 1)] = h.mat()[(i, j)];
        }
    }
    Rotation(l)
}

/// `φ(s, h) = V_s L_h`.
pub fn phi(s: &SphereVector, h: &Rotation) -> Rotation {
    assert_eq!(s.coords().dim(), h.dim() + 1, "phi: dimension mismatch");
    gram_schmidt_frame(s).compose(&embed(h))
}

/// `φ⁻¹(g) = (g e₁, π_{N−1}(V_{g e₁}ᵀ g))`.
pub fn phi_inv(g: &Rotation) -> (SphereVector, Rotation) {
    let n = g.dim();
    let s = SphereVector::normalize(g.mat().column(0));
    let w = gram_schmidt_frame(&s).mat().transpose_mul(g.mat());
    let h = Mat::from_fn(n - 1, |i, j| w[(i + 1, j + 1)]);
    (s, Rotation(h))
}

/// Largest `‖φ(φ⁻¹(g)) − g‖_max` and `‖φ⁻¹(φ(s, h)) − (s, h)‖_max` over
/// `count` Haar draws.
pub fn phi_round_trip_error(n: usize, count: usize, seed: u64) -> f64 {
    assert!(n >= 2, "phi needs N >= 2");
    let mut worst = 0.0f64;
    for i in 0..count {
        let mut rng = rng::stream(seed, i as u64, Substream::Aux);
        let g = haar_sample(n, &mut rng);
        let (s, h) = phi_inv(&g);
        worst = worst.max(phi(&s, &h).mat().max_abs_diff(g.mat()));
        let s2 = SphereVector::normalize(Vector::from_fn(n, |_| rng::normal(&mut rng)));
        let h2 = if n > 2 { haar_sample(n - 1, &mut rng) } else { Rotation::identity(1) };
        let (s3, h3) = phi_inv(&phi(&s2, &h2));
        worst = worst.max((*s3.coords() - *s2.coords()).norm()).max(h3.mat().max_abs_diff(h2.mat()));
    }
    worst
}

/// Monte Carlo estimate of the Haar measure of a Carnot ball.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct VolumeEstimate {
    pub radius: f64,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

/// `μ{g : d(Id, g) ≤ r}` estimated from `n_samples` Haar draws.
pub fn ball_volume(n: usize, r: f64, n_samples: usize, seed: u64) -> VolumeEstimate {
    assert!(r > 0.0, "radius must be positive");
    if r >= carnot_cap(n) {
        return VolumeEstimate { radius: r, value: 1.0, std_error: 0.0, n_samples };
    }
    let acc = block_reduce(n_samples, MeanVar::new, |acc, i| {
        let mut rng = rng::stream(seed, i as u64, Substream::Aux);
        let g = haar_sample(n, &mut rng);
        let d = carnot_distance(&g);
        acc.push(if d.exact && d.value <= r { 1.0 } else { 0.0 });
    });
    VolumeEstimate { radius: r, value: acc.mean, std_error: acc.std_error(), n_samples }
}

/// Ball volumes over several radii and the fitted log–log exponent.
#[derive(Debug, Clone, Serialize)]
pub struct VolumeScaling {
    pub n: usize,
    pub estimates: Vec<VolumeEstimate>,
    pub exponent: f64,
    pub exponent_se: f64,
    /// `dim SO(N) = N(N−1)/2`.
    pub expected: f64,
}

pub fn volume_scaling(n: usize, radii: &[f64], n_samples: usize, seed: u64) -> VolumeScaling {
    let estimates: Vec<VolumeEstimate> = radii.iter().map(|&r| ball_volume(n, r, n_samples, seed)).collect();
    let v: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let fit = crate::stats::loglog_fit(radii, &v);
    VolumeScaling { n, estimates, exponent: fit.slope, exponent_se: fit.slope_se, expected: (n * (n - 1)) as f64 / 2.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_skew(n: usize, scale: f64, seed: u64) -> SkewMatrix {
        let mut r = stream(seed, 0, Substream::Aux);
        let c: Vec<f64> = (0..SkewMatrix::n_coeffs(n)).map(|_| scale * rng::normal(&mut r)).collect();
        SkewMatrix::from_upper(n, &c)
    }

    #[test]
    fn skew_storage_is_antisymmetric() {
        let h = random_skew(5, 1.0, 1);
        let m = h.to_mat();
        assert_eq!((m + m.transpose()).max_abs(), 0.0);
        assert_eq!(SkewMatrix::from_mat(&m), h);
        assert!((h.frobenius_norm() - m.frobenius_norm()).abs() < 1e-14);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for n in 2..=6 {
            assert_eq!(exp_so(&SkewMatrix::zeros(n)).mat().max_abs_diff(&Mat::identity(n)), 0.0);
        }
    }

    #[test]
    fn exp_planar_quarter_turn() {
        let r = exp_so(&SkewMatrix::plane(2, 0, 1, PI / 2.0));
        let expect = Mat::from_row_slice(2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(r.mat().max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn exp_inverse_identity_all_dims() {
        for n in 2..=6 {
            let h = random_skew(n, 0.8, n as u64);
            let p = exp_so(&h).compose(&exp_so(&h.scale(-1.0)));
            assert!(p.mat().max_abs_diff(&Mat::identity(n)) < 1e-12, "n={n}");
            assert!(exp_so(&h).orthogonality_error() < 1e-13);
        }
    }

    #[test]
    fn rodrigues_matches_pade() {
        let h = random_skew(3, 1.3, 9);
        let pade = Mat::from_dmatrix(&h.to_mat().to_dmatrix().exp());
        assert!(exp_so(&h).mat().max_abs_diff(&pade) < 1e-13);
        let tiny = random_skew(3, 1e-6, 10);
        let pade = Mat::from_dmatrix(&tiny.to_mat().to_dmatrix().exp());
        assert!(exp_so(&tiny).mat().max_abs_diff(&pade) < 1e-15);
    }

    #[test]
    fn log_examples() {
        assert_eq!(log_so(&Rotation::identity(4)).unwrap().frobenius_norm(), 0.0);
        let r = Rotation::plane(3, 0, 1, 0.3);
        let h = log_so(&r).unwrap();
        assert!((h.to_mat().max_abs_diff(&SkewMatrix::plane(3, 0, 1, 0.3).to_mat())) < 1e-15);
        for n in 2..=6 {
            let h = random_skew(n, 0.2, 100 + n as u64);
            let back = log_so(&exp_so(&h)).unwrap();
            assert!(back.to_mat().max_abs_diff(&h.to_mat()) < 1e-10, "n={n}");
        }
    }

    #[test]
    fn log_large_angle_schur() {
        for n in 4..=6 {
            let h = random_skew(n, 0.9, 200 + n as u64);
            if let Ok(back) = log_so(&exp_so(&h)) {
                assert!(exp_so(&back).mat().max_abs_diff(exp_so(&h).mat()) < 1e-10);
            }
        }
    }

    #[test]
    fn log_rejects_near_half_turn() {
        let r = Rotation::plane(3, 0, 2, PI - 0.01);
        assert!(matches!(log_so(&r), Err(Error::Domain { .. })));
        let r4 = Rotation::plane(4, 1, 3, PI - 0.01);
        assert!(matches!(log_so(&r4), Err(Error::Domain { .. })));
        let d = carnot_distance(&r);
        assert!(!d.exact && d.value == carnot_cap(3));
    }

    #[test]
    fn carnot_planar_is_sqrt2_theta() {
        for &theta in &[0.1, -0.7, 2.5] {
            let d = carnot_distance(&Rotation::plane(4, 1, 2, theta));
            assert!(d.exact && (d.value - std::f64::consts::SQRT_2 * theta.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_examples() {
        let r = exp_so(&random_skew(3, 1.0, 5));
        assert!(project_to_son(r.mat()).unwrap().mat().max_abs_diff(r.mat()) < 1e-14);
        let p = project_to_son(&Mat::identity(4).scale(2.0)).unwrap();
        assert!(p.mat().max_abs_diff(&Mat::identity(4)) < 1e-15);
        let mut rr = stream(3, 0, Substream::Aux);
        let e = Mat::from_fn(3, |_, _| rng::normal(&mut rr));
        let e = e.scale(1e-3 / e.frobenius_norm());
        let p = project_to_son(&(Mat::identity(3) + e)).unwrap();
        assert!((*p.mat() - Mat::identity(3)).frobenius_norm() < 2e-3);
        assert!(matches!(project_to_son(&Mat::zeros(3)), Err(Error::Singular { .. })));
        let reflect = Mat::from_diag(&[1.0, 1.0, -1.0]);
        let p = project_to_son(&reflect).unwrap();
        assert!(p.det_error() < 1e-12);
    }

    #[test]
    fn newton_schulz_matches_svd() {
        let r = exp_so(&random_skew(4, 0.5, 11));
        let m = (Mat::identity(4) + random_skew(4, 0.05, 12).to_mat()).scale(0.97) * *r.mat();
        let (a, ls) = project_near_son(&m).unwrap();
        let b = project_to_son(&m).unwrap();
        assert!(a.mat().max_abs_diff(b.mat()) < 1e-13);
        assert!((ls - m.det().ln() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn gram_schmidt_examples() {
        let e1 = SphereVector::new(Vector::basis(4, 0)).unwrap();
        assert!(gram_schmidt_frame(&e1).mat().max_abs_diff(&Mat::identity(4)) < 1e-15);
        let e2 = SphereVector::new(Vector::basis(4, 1)).unwrap();
        let v = gram_schmidt_frame(&e2);
        assert!((v.mat().column(0) - Vector::basis(4, 1)).norm() < 1e-15);
        assert!(v.det_error() < 1e-14 && v.orthogonality_error() < 1e-14);
    }

    #[test]
    fn phi_identity() {
        let e1 = SphereVector::new(Vector::basis(3, 0)).unwrap();
        assert!(phi(&e1, &Rotation::identity(2)).mat().max_abs_diff(&Mat::identity(3)) < 1e-15);
        let (s, h) = phi_inv(&Rotation::identity(3));
        assert_eq!(s, e1);
        assert!(h.mat().max_abs_diff(&Mat::identity(2)) < 1e-15);
    }

    #[test]
    fn ball_volume_limits() {
        assert_eq!(ball_volume(3, 10.0, 10, 1).value, 1.0);
        assert_eq!(ball_volume(3, 1e-6, 2000, 1).value, 0.0);
    }
}
