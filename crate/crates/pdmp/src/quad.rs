//! Fixed-node Gaussian quadrature rules.
//!
//! Gauss–Legendre nodes are used for arc integrals along PDMP trajectories
//! and for the diffusion-bridge potential; Gauss–Hermite nodes back the
//! small-dimension quadrature oracles in the diagnostics.

/// Gauss–Legendre nodes and weights on [-1, 1].
///
/// Newton iteration on the Legendre recurrence; standard cosine initial
/// guesses converge in a handful of steps for any practical `n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            // Evaluate P_n(z) and its derivative via the three-term recurrence.
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            let pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                let pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                x[i] = -z;
                x[n - 1 - i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
                w[n - 1 - i] = w[i];
                break;
            }
        }
    }
    (x, w)
}

/// Gauss–Legendre nodes and weights mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

/// Gauss–Hermite nodes and weights for the physicists' weight exp(-t^2).
///
/// Newton iteration on the orthonormal Hermite recurrence with the classical
/// initial guesses (largest root inward).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    let nf = n as f64;
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    // Return in increasing node order.
    x.reverse();
    w.reverse();
    (x, w)
}

/// Nodes and weights for expectations against N(0, 1): weights sum to one.
pub fn gauss_hermite_standard_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, w) = gauss_hermite(n);
    let sqrt_pi = std::f64::consts::PI.sqrt();
    (
        t.iter().map(|&ti| std::f64::consts::SQRT_2 * ti).collect(),
        w.iter().map(|&wi| wi / sqrt_pi).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        // GL with n nodes is exact through degree 2n-1.
        let (x, w) = gauss_legendre_on(8, 0.0, 2.0);
        // integral of t^7 over [0,2] = 2^8/8 = 32
        let val: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.powi(7)).sum();
        assert!((val - 32.0).abs() < 1e-12, "got {val}");
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_smooth_integrand() {
        let (x, w) = gauss_legendre_on(32, 0.0, std::f64::consts::PI);
        let val: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.sin()).sum();
        assert!((val - 2.0).abs() < 1e-13, "got {val}");
    }

    #[test]
    fn hermite_moments_of_standard_normal() {
        let (x, w) = gauss_hermite_standard_normal(40);
        let m0: f64 = w.iter().sum();
        let m2: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t * t).sum();
        let m4: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.powi(4)).sum();
        assert!((m0 - 1.0).abs() < 1e-12, "m0 {m0}");
        assert!((m2 - 1.0).abs() < 1e-12, "m2 {m2}");
        assert!((m4 - 3.0).abs() < 1e-11, "m4 {m4}");
        // E[cos(X)] = exp(-1/2) for X ~ N(0,1)
        let ec: f64 = x.iter().zip(&w).map(|(&t, &wi)| wi * t.cos()).sum();
        assert!((ec - (-0.5_f64).exp()).abs() < 1e-12, "E cos {ec}");
    }
}
