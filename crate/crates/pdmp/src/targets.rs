//! Target potentials Φ and their derivative/growth metadata.
//!
//! A target is a Gibbs tilt `exp(-Φ)` of the Gaussian reference. Samplers
//! need Φ's gradient for event rates and the growth constants
//! `‖∇Φ(x)‖ ≤ m0 + m1‖x‖` for valid thinning majorants; those constants are
//! part of the [`TargetPotential`] contract and are validated empirically
//! (no symbolic derivation is attempted).

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PdmpError, Result};
use crate::quad::gauss_legendre_on;
use crate::spectral::{BasisKind, SpectralBasis};

/// A potential Φ on the truncated space, with gradient and growth metadata.
///
/// Implementations must be immutable and thread-safe; all samplers share one
/// target across channels and chains.
pub trait TargetPotential: Send + Sync {
    fn n_modes(&self) -> usize;

    /// Φ(x).
    fn evaluate(&self, x: &[f64]) -> f64;

    /// ∇Φ(x) written into `out`.
    fn gradient_into(&self, x: &[f64], out: &mut [f64]);

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.gradient_into(x, &mut out);
        out
    }

    /// ∂_iΦ(x). Default goes through the full gradient; cheap targets
    /// override.
    fn partial(&self, x: &[f64], i: usize) -> f64 {
        self.gradient(x)[i]
    }

    /// (m0, m1) with ‖∇Φ(x)‖ ≤ m0 + m1‖x‖ everywhere.
    fn grad_growth(&self) -> (f64, f64);

    /// sup over x of the operator norm of ∇²Φ (may be +∞).
    fn hessian_bound(&self) -> f64;

    /// inf Φ.
    fn lower_bound(&self) -> f64;
}

/// Φ ≡ 0: the reference measure itself.
#[derive(Clone, Debug)]
pub struct ZeroPotential {
    n: usize,
}

impl ZeroPotential {
    pub fn new(n_modes: usize) -> Self {
        Self { n: n_modes }
    }
}

impl TargetPotential for ZeroPotential {
    fn n_modes(&self) -> usize {
        self.n
    }
    fn evaluate(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn gradient_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn partial(&self, _x: &[f64], _i: usize) -> f64 {
        0.0
    }
    fn grad_growth(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
    fn hessian_bound(&self) -> f64 {
        0.0
    }
    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Φ(x) = ‖x‖²/2.
#[derive(Clone, Debug)]
pub struct QuadraticPotential {
    n: usize,
}

impl TargetPotential for QuadraticPotential {
    fn n_modes(&self) -> usize {
        self.n
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|xi| xi * xi).sum::<f64>()
    }
    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }
    fn partial(&self, x: &[f64], i: usize) -> f64 {
        x[i]
    }
    fn grad_growth(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
    fn hessian_bound(&self) -> f64 {
        1.0
    }
    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Φ(x) = ‖x‖²/2 on the modes of `basis`.
pub fn quadratic_target(basis: &SpectralBasis) -> QuadraticPotential {
    QuadraticPotential {
        n: basis.n_modes(),
    }
}

/// Drift b of a one-dimensional SDE, with derivatives up to third order.
///
/// Selected by name from a built-in registry; no runtime code loading.
#[derive(Clone, Debug)]
pub enum BridgeDrift {
    /// b(y) = -theta * y. Unbounded, but its bridge potential still has
    /// linear gradient growth.
    Linear { theta: f64 },
    /// b(y) = amp * sin(freq * y).
    Sine { amp: f64, freq: f64 },
    /// b(y) = amp * tanh(y / scale).
    TanhScaled { amp: f64, scale: f64 },
}

impl BridgeDrift {
    pub fn by_name(name: &str, params: &[(&str, f64)]) -> Result<Self> {
        let get = |key: &str, default: Option<f64>| -> Result<f64> {
            params
                .iter()
                .find(|(k, _)| *k == key)
                .map(|&(_, v)| Ok(v))
                .unwrap_or_else(|| {
                    default.ok_or_else(|| {
                        PdmpError::Config(format!("target.{key}: required for drift '{name}'"))
                    })
                })
        };
        match name {
            "linear" => Ok(Self::Linear {
                theta: get("theta", None)?,
            }),
            "sine" => Ok(Self::Sine {
                amp: get("amp", None)?,
                freq: get("freq", Some(1.0))?,
            }),
            "tanh" => Ok(Self::TanhScaled {
                amp: get("amp", None)?,
                scale: get("scale", Some(1.0))?,
            }),
            other => Err(PdmpError::Config(format!(
                "target.drift: unknown drift '{other}' (expected linear|sine|tanh)"
            ))),
        }
    }

    pub fn b(&self, y: f64) -> f64 {
        match *self {
            Self::Linear { theta } => -theta * y,
            Self::Sine { amp, freq } => amp * (freq * y).sin(),
            Self::TanhScaled { amp, scale } => amp * (y / scale).tanh(),
        }
    }

    pub fn b1(&self, y: f64) -> f64 {
        match *self {
            Self::Linear { theta } => -theta,
            Self::Sine { amp, freq } => amp * freq * (freq * y).cos(),
            Self::TanhScaled { amp, scale } => {
                let c = (y / scale).cosh();
                amp / (scale * c * c)
            }
        }
    }

    pub fn b2(&self, y: f64) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::Sine { amp, freq } => -amp * freq * freq * (freq * y).sin(),
            Self::TanhScaled { amp, scale } => {
                let u = y / scale;
                let sech2 = 1.0 / (u.cosh() * u.cosh());
                -2.0 * amp / (scale * scale) * sech2 * u.tanh()
            }
        }
    }

    pub fn b3(&self, y: f64) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::Sine { amp, freq } => -amp * freq.powi(3) * (freq * y).cos(),
            Self::TanhScaled { amp, scale } => {
                let u = y / scale;
                let t = u.tanh();
                let sech2 = 1.0 - t * t;
                amp / scale.powi(3) * (4.0 * sech2 * t * t - 2.0 * sech2 * sech2)
            }
        }
    }

    /// sup |b|, possibly infinite (linear drift).
    pub fn b_bound(&self) -> f64 {
        match *self {
            Self::Linear { .. } => f64::INFINITY,
            Self::Sine { amp, .. } => amp.abs(),
            Self::TanhScaled { amp, .. } => amp.abs(),
        }
    }

    pub fn b1_bound(&self) -> f64 {
        match *self {
            Self::Linear { theta } => theta.abs(),
            Self::Sine { amp, freq } => (amp * freq).abs(),
            Self::TanhScaled { amp, scale } => (amp / scale).abs(),
        }
    }

    pub fn b2_bound(&self) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::Sine { amp, freq } => (amp * freq * freq).abs(),
            // max of 2 sech^2(u) tanh(u) is 4/(3 sqrt 3)
            Self::TanhScaled { amp, scale } => {
                2.0 * (amp / (scale * scale)).abs() * 2.0 / (3.0 * 3.0f64.sqrt())
            }
        }
    }

    pub fn b3_bound(&self) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::Sine { amp, freq } => (amp * freq.powi(3)).abs(),
            Self::TanhScaled { amp, scale } => 2.0 * (amp / scale.powi(3)).abs(),
        }
    }

    /// Girsanov integrand g(y) = b''(y)/2 + b(y) b'(y) at y = 0.
    fn g0(&self) -> f64 {
        0.5 * self.b2(0.0) + self.b(0.0) * self.b1(0.0)
    }

    /// sup |g'| with g' = b'''/2 + (b')² + b b''; finite for every registry
    /// drift (for linear it is theta²).
    fn g_lipschitz(&self) -> f64 {
        match *self {
            Self::Linear { theta } => theta * theta,
            _ => {
                0.5 * self.b3_bound() + self.b1_bound() * self.b1_bound()
                    + self.b_bound() * self.b2_bound()
            }
        }
    }

    /// Finite-difference consistency of the stored derivatives.
    pub fn validate_derivatives<R: Rng + ?Sized>(&self, rng: &mut R, n_points: usize) -> Result<()> {
        let h = 1e-5;
        for _ in 0..n_points {
            let y: f64 = 6.0 * rng.sample::<f64, _>(StandardNormal);
            let checks = [
                (self.b1(y), (self.b(y + h) - self.b(y - h)) / (2.0 * h), "b'"),
                (self.b2(y), (self.b1(y + h) - self.b1(y - h)) / (2.0 * h), "b''"),
                (self.b3(y), (self.b2(y + h) - self.b2(y - h)) / (2.0 * h), "b'''"),
            ];
            for (exact, fd, label) in checks {
                let scale = exact.abs().max(fd.abs()).max(1.0);
                if (exact - fd).abs() / scale > 1e-5 {
                    return Err(PdmpError::Config(format!(
                        "drift derivative {label} inconsistent at y={y}: {exact} vs fd {fd}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Girsanov potential of a diffusion bridge: for a path
/// x(t) = Σ_k x_k √(2/T) sin(kπt/T) pinned at 0 on both ends,
///
///   Φ(x) = ½∫₀ᵀ b'(x(t)) dt + ½∫₀ᵀ b(x(t))² dt,
///
/// with gradient coordinate i the quadrature of
/// [½b''(x(t)) + b(x(t))b'(x(t))] against the i-th eigenfunction.
pub struct BridgePotential {
    n: usize,
    drift: BridgeDrift,
    /// quadrature weights
    weights: Vec<f64>,
    /// node-major basis table: e[q * n + k] = √(2/T) sin((k+1)π t_q / T)
    table: Vec<f64>,
    grad_growth: (f64, f64),
    hessian_bound: f64,
    lower_bound: f64,
    bridge_t: f64,
    quad_points: usize,
}

impl BridgePotential {
    pub fn bridge_t(&self) -> f64 {
        self.bridge_t
    }

    pub fn quad_points(&self) -> usize {
        self.quad_points
    }

    /// Path value x(t) = Σ_k x_k √(2/T) sin(kπ t/T).
    pub fn path_value(&self, x: &[f64], t: f64) -> f64 {
        bridge_path_value(self.bridge_t, x, t)
    }

    fn path_at_nodes(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for (q, yq) in y.iter_mut().enumerate() {
            let row = &self.table[q * n..(q + 1) * n];
            *yq = row.iter().zip(x).map(|(e, xi)| e * xi).sum();
        }
    }
}

/// Evaluate the bridge path x(t) from its sine coefficients.
pub fn bridge_path_value(bridge_t: f64, x: &[f64], t: f64) -> f64 {
    let scale = (2.0 / bridge_t).sqrt();
    x.iter()
        .enumerate()
        .map(|(k, xk)| {
            xk * scale * ((k as f64 + 1.0) * std::f64::consts::PI * t / bridge_t).sin()
        })
        .sum()
}

impl TargetPotential for BridgePotential {
    fn n_modes(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; self.weights.len()];
        self.path_at_nodes(x, &mut y);
        y.iter()
            .zip(&self.weights)
            .map(|(&yq, &wq)| wq * (0.5 * self.drift.b1(yq) + 0.5 * self.drift.b(yq).powi(2)))
            .sum()
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut y = vec![0.0; self.weights.len()];
        self.path_at_nodes(x, &mut y);
        out.fill(0.0);
        for (q, (&yq, &wq)) in y.iter().zip(&self.weights).enumerate() {
            let g = wq * (0.5 * self.drift.b2(yq) + self.drift.b(yq) * self.drift.b1(yq));
            let row = &self.table[q * n..(q + 1) * n];
            for (o, e) in out.iter_mut().zip(row) {
                *o += g * e;
            }
        }
    }

    fn grad_growth(&self) -> (f64, f64) {
        self.grad_growth
    }

    fn hessian_bound(&self) -> f64 {
        self.hessian_bound
    }

    fn lower_bound(&self) -> f64 {
        self.lower_bound
    }
}

/// Build the bridge potential over a BrownianBridge basis.
pub fn bridge_target(
    basis: &SpectralBasis,
    drift: BridgeDrift,
    quad_points: usize,
) -> Result<BridgePotential> {
    let bridge_t = match *basis.kind() {
        BasisKind::BrownianBridge { t } => t,
        _ => {
            return Err(PdmpError::Config(
                "target: bridge potential requires a BrownianBridge basis".into(),
            ))
        }
    };
    if quad_points < 16 {
        return Err(PdmpError::Config(format!(
            "target.quad_points: need at least 16, got {quad_points}"
        )));
    }
    let n = basis.n_modes();
    let (nodes, weights) = gauss_legendre_on(quad_points, 0.0, bridge_t);
    let scale = (2.0 / bridge_t).sqrt();
    let mut table = vec![0.0; quad_points * n];
    for (q, &tq) in nodes.iter().enumerate() {
        for k in 0..n {
            table[q * n + k] =
                scale * ((k as f64 + 1.0) * std::f64::consts::PI * tq / bridge_t).sin();
        }
    }

    // Largest singular value of the quadrature-weighted basis table, i.e.
    // the top eigenvalue of the Gram matrix G = Eᵀ W E. It is 1 up to
    // quadrature error and enters the growth constants so that thinning
    // majorants stay valid despite that error.
    let mut gram = vec![0.0; n * n];
    for q in 0..quad_points {
        let row = &table[q * n..(q + 1) * n];
        let w = weights[q];
        for i in 0..n {
            let wi = w * row[i];
            for j in 0..n {
                gram[i * n + j] += wi * row[j];
            }
        }
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut sigma_sq = 1.0;
    for _ in 0..200 {
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = gram[i * n..(i + 1) * n]
                .iter()
                .zip(&v)
                .map(|(g, vj)| g * vj)
                .sum();
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        sigma_sq = norm;
        for x in w.iter_mut() {
            *x /= norm;
        }
        v = w;
    }
    let sigma_sq = sigma_sq * (1.0 + 1e-9);

    // ‖∇Φ(x)‖ ≤ σ (√T|g(0)| + L σ ‖x‖) with g the Girsanov integrand.
    let sigma = sigma_sq.sqrt();
    let g0 = drift.g0().abs();
    let lip = drift.g_lipschitz();
    let grad_growth = (sigma * bridge_t.sqrt() * g0, sigma_sq * lip);
    let hessian_bound = sigma_sq * lip;
    // Φ ≥ -½ T sup|b'| (the b² part is nonnegative).
    let lower_bound = -0.5 * bridge_t * drift.b1_bound();

    Ok(BridgePotential {
        n,
        drift,
        weights,
        table,
        grad_growth,
        hessian_bound,
        lower_bound,
        bridge_t,
        quad_points,
    })
}

/// Φ_N = Φ ∘ Proj_N: coordinates above `n_keep` are ignored and their
/// gradient entries are exactly zero.
pub struct ProjectedPotential {
    base: Arc<dyn TargetPotential>,
    n_keep: usize,
}

impl ProjectedPotential {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        p[self.n_keep..].fill(0.0);
        p
    }
}

impl TargetPotential for ProjectedPotential {
    fn n_modes(&self) -> usize {
        self.base.n_modes()
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        self.base.evaluate(&self.project(x))
    }

    fn gradient_into(&self, x: &[f64], out: &mut [f64]) {
        self.base.gradient_into(&self.project(x), out);
        out[self.n_keep..].fill(0.0);
    }

    fn partial(&self, x: &[f64], i: usize) -> f64 {
        if i >= self.n_keep {
            0.0
        } else {
            self.base.partial(&self.project(x), i)
        }
    }

    fn grad_growth(&self) -> (f64, f64) {
        self.base.grad_growth()
    }

    fn hessian_bound(&self) -> f64 {
        self.base.hessian_bound()
    }

    fn lower_bound(&self) -> f64 {
        self.base.lower_bound()
    }
}

pub fn projected_target(base: Arc<dyn TargetPotential>, n_keep: usize) -> Result<ProjectedPotential> {
    if n_keep == 0 || n_keep > base.n_modes() {
        return Err(PdmpError::Config(format!(
            "sampler.approx_level: must be in 1..={}, got {n_keep}",
            base.n_modes()
        )));
    }
    Ok(ProjectedPotential { base, n_keep })
}

/// Centered finite-difference check of the target gradient; returns the
/// worst relative error over `n_points` random points with ‖x‖ ≤ 10.
pub fn validate_gradient<R: Rng + ?Sized>(
    target: &dyn TargetPotential,
    rng: &mut R,
    n_points: usize,
) -> f64 {
    let n = target.n_modes();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let mut x: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 10.0 {
            for v in x.iter_mut() {
                *v *= 10.0 / norm;
            }
        }
        let grad = target.gradient(&x);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1.0);
        for i in 0..n {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (target.evaluate(&xp) - target.evaluate(&xm)) / (2.0 * h);
            worst = worst.max((grad[i] - fd).abs() / gnorm);
        }
    }
    worst
}

/// Check ‖∇Φ(x)‖ ≤ m0 + m1‖x‖ at random points; returns worst violation
/// (≤ 0 means the growth constants hold everywhere tested).
pub fn validate_growth<R: Rng + ?Sized>(
    target: &dyn TargetPotential,
    rng: &mut R,
    n_points: usize,
) -> f64 {
    let n = target.n_modes();
    let (m0, m1) = target.grad_growth();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..n_points {
        let x: Vec<f64> = (0..n)
            .map(|_| 3.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gnorm = target
            .gradient(&x)
            .iter()
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gnorm - (m0 + m1 * xnorm));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn quadratic_values() {
        let basis = SpectralBasis::power_law(2.0, 2).unwrap();
        let t = quadratic_target(&basis);
        assert_eq!(t.evaluate(&[0.0, 0.0]), 0.0);
        assert_eq!(t.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(t.evaluate(&[1.0, 1.0]), 1.0);
        assert_eq!(t.gradient(&[1.0, 1.0]), vec![1.0, 1.0]);
        assert_eq!(t.grad_growth(), (0.0, 1.0));
    }

    #[test]
    fn bridge_zero_drift_is_zero() {
        let basis = SpectralBasis::brownian_bridge(1.0, 8).unwrap();
        let drift = BridgeDrift::Sine { amp: 0.0, freq: 1.0 };
        let t = bridge_target(&basis, drift, 32).unwrap();
        let x = vec![0.3, -0.2, 0.1, 0.0, 0.5, -0.4, 0.2, 0.1];
        assert!(t.evaluate(&x).abs() < 1e-15);
        assert!(t.gradient(&x).iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn bridge_linear_drift_at_origin() {
        let basis = SpectralBasis::brownian_bridge(1.0, 8).unwrap();
        let t = bridge_target(&basis, BridgeDrift::Linear { theta: 1.0 }, 64).unwrap();
        // Φ(0) = ½ ∫ b' = -θT/2
        assert!((t.evaluate(&vec![0.0; 8]) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn bridge_rejects_wrong_basis_and_few_nodes() {
        let pl = SpectralBasis::power_law(2.0, 4).unwrap();
        assert!(bridge_target(&pl, BridgeDrift::Linear { theta: 1.0 }, 64).is_err());
        let bb = SpectralBasis::brownian_bridge(1.0, 4).unwrap();
        assert!(bridge_target(&bb, BridgeDrift::Linear { theta: 1.0 }, 8).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(21, &[0]);
        let basis = SpectralBasis::brownian_bridge(1.0, 6).unwrap();
        let targets: Vec<Box<dyn TargetPotential>> = vec![
            Box::new(quadratic_target(&basis)),
            Box::new(bridge_target(&basis, BridgeDrift::Linear { theta: 1.0 }, 64).unwrap()),
            Box::new(
                bridge_target(
                    &basis,
                    BridgeDrift::TanhScaled { amp: 1.5, scale: 0.7 },
                    64,
                )
                .unwrap(),
            ),
            Box::new(
                bridge_target(&basis, BridgeDrift::Sine { amp: 0.8, freq: 2.0 }, 64).unwrap(),
            ),
        ];
        for t in &targets {
            let err = validate_gradient(t.as_ref(), &mut rng, 100);
            assert!(err < 1e-5, "fd mismatch {err}");
        }
    }

    #[test]
    fn growth_constants_hold() {
        let mut rng = stream(22, &[0]);
        let basis = SpectralBasis::brownian_bridge(1.0, 6).unwrap();
        let targets: Vec<Box<dyn TargetPotential>> = vec![
            Box::new(quadratic_target(&basis)),
            Box::new(bridge_target(&basis, BridgeDrift::Linear { theta: 1.3 }, 64).unwrap()),
            Box::new(
                bridge_target(
                    &basis,
                    BridgeDrift::TanhScaled { amp: 1.5, scale: 0.7 },
                    64,
                )
                .unwrap(),
            ),
        ];
        for t in &targets {
            let worst = validate_growth(t.as_ref(), &mut rng, 100);
            assert!(worst <= 0.0, "growth constants violated by {worst}");
        }
    }

    #[test]
    fn bounded_drift_gives_bounded_gradient() {
        let basis = SpectralBasis::brownian_bridge(1.0, 6).unwrap();
        let t = bridge_target(
            &basis,
            BridgeDrift::TanhScaled { amp: 2.0, scale: 1.0 },
            64,
        )
        .unwrap();
        let mut rng = stream(23, &[0]);
        // Gradient norm stays under m0 + m1 ‖x‖ with finite constants.
        let (m0, m1) = t.grad_growth();
        assert!(m0.is_finite() && m1.is_finite());
        for _ in 0..100 {
            let x: Vec<f64> = (0..6)
                .map(|_| 5.0 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let g = t.gradient(&x);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gn <= m0 + m1 * xn);
        }
    }

    #[test]
    fn drift_derivatives_consistent() {
        let mut rng = stream(24, &[0]);
        for d in [
            BridgeDrift::Linear { theta: 0.9 },
            BridgeDrift::Sine { amp: 1.2, freq: 1.7 },
            BridgeDrift::TanhScaled { amp: 0.8, scale: 1.3 },
        ] {
            d.validate_derivatives(&mut rng, 100).unwrap();
        }
    }

    #[test]
    fn drift_registry_by_name() {
        assert!(BridgeDrift::by_name("linear", &[("theta", 2.0)]).is_ok());
        assert!(BridgeDrift::by_name("sine", &[("amp", 1.0)]).is_ok());
        assert!(BridgeDrift::by_name("tanh", &[("amp", 1.0), ("scale", 2.0)]).is_ok());
        assert!(BridgeDrift::by_name("linear", &[]).is_err());
        assert!(BridgeDrift::by_name("cubic", &[("amp", 1.0)]).is_err());
    }

    #[test]
    fn projection_examples() {
        let basis = SpectralBasis::power_law(2.0, 2).unwrap();
        let base: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let p = projected_target(base, 1).unwrap();
        assert!((p.evaluate(&[3.0, 4.0]) - 4.5).abs() < 1e-15);
        assert_eq!(p.gradient(&[3.0, 4.0]), vec![3.0, 0.0]);
        assert_eq!(p.partial(&[3.0, 4.0], 1), 0.0);
    }

    #[test]
    fn projection_idempotent_and_full_is_identity() {
        let basis = SpectralBasis::brownian_bridge(1.0, 5).unwrap();
        let base: Arc<dyn TargetPotential> =
            Arc::new(bridge_target(&basis, BridgeDrift::Linear { theta: 1.0 }, 64).unwrap());
        let p3: Arc<dyn TargetPotential> = Arc::new(projected_target(base.clone(), 3).unwrap());
        let p3_again = projected_target(p3.clone(), 3).unwrap();
        let full = projected_target(base.clone(), 5).unwrap();
        let mut rng = stream(25, &[0]);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            assert!((p3.evaluate(&x) - p3_again.evaluate(&x)).abs() < 1e-15);
            assert!((full.evaluate(&x) - base.evaluate(&x)).abs() < 1e-15);
            for i in 3..5 {
                assert_eq!(p3.partial(&x, i), 0.0);
            }
        }
    }
}
