//! Deterministic one-dimensional quadrature.

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; order];
    let mut w = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[order - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule with `panels` equal panels of 16 nodes.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(16);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        total += 0.5 * h * x.iter().zip(&w).map(|(xi, wi)| wi * f(mid + 0.5 * h * xi)).sum::<f64>();
    }
    total
}

/// `∫_a^b exp(alpha + beta s) ds`, stable for small and large `beta (b−a)`.
pub fn int_exp(a: f64, b: f64, alpha: f64, beta: f64) -> f64 {
    let len = b - a;
    if beta == 0.0 {
        return alpha.exp() * len;
    }
    if beta > 0.0 {
        (alpha + beta * b).exp() * (-(-beta * len).exp_m1()) / beta
    } else {
        (alpha + beta * a).exp() * (-(beta * len).exp_m1()) / (-beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 1);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn int_exp_matches_quadrature() {
        for &(a, b, al, be) in &[(0.0, 1.0, 0.3, -2.0), (0.5, 0.6, -1.0, 7.0), (0.0, 1e-9, 0.0, 3.0), (1.0, 2.0, 0.2, 0.0)] {
            let q = integrate(|s: f64| (al + be * s).exp(), a, b, 8);
            assert!((int_exp(a, b, al, be) - q).abs() < 1e-13 * q.abs().max(1e-300));
        }
    }
}
