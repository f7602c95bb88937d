//! Concrete sampler assemblies: Zig-Zag, Bouncy Particle and the two
//! Boomerang variants, with canonical or smoothed rates, refreshments, and
//! truncated approximants.
//!
//! Each assembly is a flow plus a set of [`RateChannel`]s for the generic
//! engine. With `approx_level = N'` the channels act on modes ≤ N' only
//! (projected potential, projected reflections, refresh that redraws only
//! active modes) and the rotation flow freezes the tail — the finite-level
//! approximant whose convergence the diagnostics study.
//!
//! The Bouncy Particle sampler is shipped as *experimental*: invariance
//! holds, but well-posedness in the untruncated limit is an open question;
//! at any finite truncation it is a standard BPS and well-posed.

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::engine::{Flow, PhaseState, RateChannel};
use crate::error::{PdmpError, Result};
use crate::spectral::{CoeffVector, SpectralBasis};
use crate::targets::{projected_target, TargetPotential};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    ZigZag,
    BouncyParticle,
    BoomerangPure,
    BoomerangFactorised,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMode {
    Canonical,
    Smoothed,
}

/// Optional additional switching intensity γ_i(x, v) for one channel. It
/// must be symmetric under that channel's reflection, γ_i(x, R_i v) =
/// γ_i(x, v), which assembly verifies on random probes; `sup` is a constant
/// majorant used for thinning.
#[derive(Clone)]
pub struct ExtraRate {
    pub rate: Arc<dyn Fn(&PhaseState) -> f64 + Send + Sync>,
    pub sup: f64,
}

/// Everything needed to assemble a sampler.
#[derive(Clone)]
pub struct SamplerSpec {
    pub algorithm: Algorithm,
    pub rate_mode: RateMode,
    /// λ_r; 0 disables refreshment.
    pub refresh_rate: f64,
    /// Zig-Zag speeds a_i; default a_i = γ_i^(3-2r) with `zz_r` below.
    pub zz_velocities: Option<Vec<f64>>,
    /// Exponent r in the default Zig-Zag tuning a_i = γ_i^(3-2r).
    pub zz_r: f64,
    /// ζ ≥ 2 for the BPS velocity measure N(0, Σ^ζ); values below 4 lose
    /// the theoretical guarantees and produce a warning.
    pub bps_zeta: f64,
    /// N' ≤ N: run the truncated approximant on the leading N' modes.
    pub approx_level: Option<usize>,
    /// Per-reflection-channel additional rates.
    pub extra_rate: Option<Vec<Option<ExtraRate>>>,
}

impl SamplerSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            rate_mode: RateMode::Canonical,
            refresh_rate: 1.0,
            zz_velocities: None,
            zz_r: 0.0,
            bps_zeta: 4.0,
            approx_level: None,
            extra_rate: None,
        }
    }
}

/// Numerically stable softplus: λ̃(u) = log(1 + e^u). Strictly positive,
/// ≥ u⁺, and λ̃(u) − λ̃(−u) = u exactly in exact arithmetic.
pub fn smoothed_rate(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
fn pos(u: f64) -> f64 {
    if u > 0.0 {
        u
    } else {
        0.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Zig-Zag switching rates λ_i = (v_i (x_i/γ_i² + ∂_iΦ(x)))⁺.
pub fn zigzag_rates(
    state: &PhaseState,
    target: &dyn TargetPotential,
    basis: &SpectralBasis,
) -> Vec<f64> {
    let grad = target.gradient(&state.x);
    (0..state.n_modes())
        .map(|i| pos(state.v[i] * (state.x[i] / basis.eigenvalue(i) + grad[i])))
        .collect()
}

/// F_i: negate velocity coordinate i.
pub fn zigzag_flip(state: &PhaseState, i: usize) -> PhaseState {
    let mut out = state.clone();
    out.v[i] = -out.v[i];
    out
}

/// Pure-reflection Boomerang rate ⟨∇Φ(x), v⟩⁺.
pub fn boomerang_pure_rate(state: &PhaseState, target: &dyn TargetPotential) -> f64 {
    pos(dot(&target.gradient(&state.x), &state.v))
}

/// Factorised Boomerang rates λ_i = (v_i ∂_iΦ(x))⁺ (no Gaussian term: the
/// rotation flow already preserves the reference measure).
pub fn boomerang_factorised_rates(state: &PhaseState, target: &dyn TargetPotential) -> Vec<f64> {
    let grad = target.gradient(&state.x);
    state
        .v
        .iter()
        .zip(&grad)
        .map(|(&vi, &gi)| pos(vi * gi))
        .collect()
}

/// BPS reflection in the hyperplane geometry of the tilted gradient
/// ∇Ψ = ∇Φ(x) + Σ⁻¹x:
///
///   R(x) v = v − 2 ⟨v, ∇Ψ⟩ / ‖Σ^(ζ/2)∇Ψ‖² · Σ^ζ ∇Ψ.
///
/// Errors with [`PdmpError::DegenerateGradient`] at critical points where
/// the weighted gradient norm vanishes; callers fall back to negating v.
pub fn bps_reflect(
    state: &PhaseState,
    target: &dyn TargetPotential,
    basis: &SpectralBasis,
    zeta: f64,
) -> Result<PhaseState> {
    let n = state.n_modes();
    let mut grad_psi = target.gradient(&state.x);
    for i in 0..n {
        grad_psi[i] += state.x[i] / basis.eigenvalue(i);
    }
    let mut denom = 0.0; // ⟨Σ^ζ ∇Ψ, ∇Ψ⟩ = ‖Σ^(ζ/2)∇Ψ‖²
    let mut sigma_zeta_grad = vec![0.0; n];
    for i in 0..n {
        let w = basis.eigenvalue(i).powf(zeta);
        sigma_zeta_grad[i] = w * grad_psi[i];
        denom += w * grad_psi[i] * grad_psi[i];
    }
    if denom < 1e-14 {
        return Err(PdmpError::DegenerateGradient { norm_sq: denom });
    }
    let coef = 2.0 * dot(&state.v, &grad_psi) / denom;
    let mut out = state.clone();
    for i in 0..n {
        out.v[i] -= coef * sigma_zeta_grad[i];
    }
    Ok(out)
}

/// Gradient reflection with an explicit velocity covariance Σ_v:
///
///   R(x) v = v − 2 ⟨∇Φ(x), v⟩ / ⟨Σ_v ∇Φ, ∇Φ⟩ · Σ_v ∇Φ.
pub fn finite_dim_reflect(
    state: &PhaseState,
    target: &dyn TargetPotential,
    sigma_v: &[f64],
) -> Result<PhaseState> {
    let n = state.n_modes();
    let grad = target.gradient(&state.x);
    let mut denom = 0.0;
    for i in 0..n {
        denom += sigma_v[i] * grad[i] * grad[i];
    }
    if denom < 1e-14 {
        return Err(PdmpError::DegenerateGradient { norm_sq: denom });
    }
    let coef = 2.0 * dot(&grad, &state.v) / denom;
    let mut out = state.clone();
    for i in 0..n {
        out.v[i] -= coef * sigma_v[i] * grad[i];
    }
    Ok(out)
}

/// The four reflection kinds, bundled for property probing.
pub enum ReflectionOp {
    NegateAll,
    FlipMode(usize),
    BpsHyperplane { zeta: f64 },
    FiniteDimGradient { sigma_v: Vec<f64> },
}

impl ReflectionOp {
    pub fn apply(
        &self,
        state: &PhaseState,
        target: &dyn TargetPotential,
        basis: &SpectralBasis,
    ) -> Result<PhaseState> {
        match self {
            ReflectionOp::NegateAll => {
                let mut out = state.clone();
                for v in out.v.iter_mut() {
                    *v = -*v;
                }
                Ok(out)
            }
            ReflectionOp::FlipMode(i) => Ok(zigzag_flip(state, *i)),
            ReflectionOp::BpsHyperplane { zeta } => bps_reflect(state, target, basis, *zeta),
            ReflectionOp::FiniteDimGradient { sigma_v } => {
                finite_dim_reflect(state, target, sigma_v)
            }
        }
    }
}

/// Velocity reference measure ν₀.
#[derive(Clone, Debug)]
pub enum VelocityLaw {
    /// Independent N(0, std_i²) coordinates.
    Gaussian { std: Vec<f64> },
    /// Independent ±a_i with equal probability (Zig-Zag).
    Rademacher { a: Vec<f64> },
}

impl VelocityLaw {
    pub fn n_modes(&self) -> usize {
        match self {
            VelocityLaw::Gaussian { std } => std.len(),
            VelocityLaw::Rademacher { a } => a.len(),
        }
    }

    /// Per-mode variance.
    pub fn variance(&self, i: usize) -> f64 {
        match self {
            VelocityLaw::Gaussian { std } => std[i] * std[i],
            VelocityLaw::Rademacher { a } => a[i] * a[i],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CoeffVector {
        match self {
            VelocityLaw::Gaussian { std } => CoeffVector::from_raw(
                std.iter()
                    .map(|s| s * rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            ),
            VelocityLaw::Rademacher { a } => CoeffVector::from_raw(
                a.iter()
                    .map(|ai| if rng.gen::<bool>() { *ai } else { -*ai })
                    .collect(),
            ),
        }
    }
}

/// Full velocity refresh: v ← fresh draw from ν₀ on the active modes, the
/// frozen tail untouched; x unchanged.
///
/// Draws are consumed for every mode (even frozen ones) so that coupled
/// runs at different truncation levels stay on a shared randomness stream.
pub fn refresh_jump(
    state: &PhaseState,
    law: &VelocityLaw,
    n_active: usize,
    rng: &mut dyn RngCore,
) -> PhaseState {
    let fresh = law.sample(rng);
    let mut out = state.clone();
    out.v[..n_active].copy_from_slice(&fresh[..n_active]);
    out
}

/// Which switching mechanism a reflection channel implements.
#[derive(Clone, Debug)]
enum ChannelKind {
    /// λ = (v_i (x_i/γ_i² + ∂_iΦ))⁺, jump flips v_i.
    ZigZagFlip { mode: usize },
    /// λ = (v_i ∂_iΦ)⁺, jump flips v_i.
    BoomerangFlip { mode: usize },
    /// λ = ⟨∇Φ, v⟩⁺, jump negates the active velocity block.
    BoomerangNegate,
    /// λ = ⟨∇Ψ, v⟩⁺, jump is the hyperplane reflection (NegateAll fallback
    /// at degenerate points).
    BpsReflect,
}

/// One deterministic-jump channel of a sampler assembly.
pub struct ReflectionChannel {
    id: u32,
    kind: ChannelKind,
    target: Arc<dyn TargetPotential>,
    basis: SpectralBasis,
    smoothed: bool,
    extra: Option<ExtraRate>,
    n_active: usize,
    zeta: f64,
    /// growth constants of the (projected) target
    m0: f64,
    m1: f64,
}

impl ReflectionChannel {
    /// The switch argument u whose positive part (or softplus) is the rate.
    pub fn switch_argument(&self, state: &PhaseState) -> f64 {
        match self.kind {
            ChannelKind::ZigZagFlip { mode } => {
                state.v[mode]
                    * (state.x[mode] / self.basis.eigenvalue(mode)
                        + self.target.partial(&state.x, mode))
            }
            ChannelKind::BoomerangFlip { mode } => {
                state.v[mode] * self.target.partial(&state.x, mode)
            }
            ChannelKind::BoomerangNegate => {
                let grad = self.target.gradient(&state.x);
                dot(&grad[..self.n_active], &state.v[..self.n_active])
            }
            ChannelKind::BpsReflect => {
                let grad = self.target.gradient(&state.x);
                let mut u = dot(&grad[..self.n_active], &state.v[..self.n_active]);
                for i in 0..self.n_active {
                    u += state.x[i] * state.v[i] / self.basis.eigenvalue(i);
                }
                u
            }
        }
    }

    /// Deterministic reflected state (the jump, minus the BPS degenerate
    /// fallback path which also needs no randomness).
    pub fn reflect(&self, state: &PhaseState) -> PhaseState {
        match self.kind {
            ChannelKind::ZigZagFlip { mode } | ChannelKind::BoomerangFlip { mode } => {
                zigzag_flip(state, mode)
            }
            ChannelKind::BoomerangNegate => {
                let mut out = state.clone();
                for v in out.v[..self.n_active].iter_mut() {
                    *v = -*v;
                }
                out
            }
            ChannelKind::BpsReflect => {
                match bps_reflect(state, self.target.as_ref(), &self.basis, self.zeta) {
                    Ok(out) => out,
                    Err(PdmpError::DegenerateGradient { .. }) => {
                        // Documented fallback: reflection undefined at a
                        // critical point; negate the velocity instead.
                        let mut out = state.clone();
                        for v in out.v[..self.n_active].iter_mut() {
                            *v = -*v;
                        }
                        out
                    }
                    Err(e) => unreachable!("bps_reflect only fails as degenerate: {e}"),
                }
            }
        }
    }
}

impl RateChannel for ReflectionChannel {
    fn id(&self) -> u32 {
        self.id
    }

    fn rate(&self, state: &PhaseState) -> f64 {
        let u = self.switch_argument(state);
        let base = if self.smoothed {
            smoothed_rate(u)
        } else {
            pos(u)
        };
        base + self.extra.as_ref().map_or(0.0, |e| (e.rate)(state))
    }

    fn bound(&self, state: &PhaseState, horizon: f64) -> f64 {
        let base = match self.kind {
            ChannelKind::ZigZagFlip { mode } => {
                // Linear flow: v_i constant, |x_i(s)| ≤ |x_i| + h|v_i|,
                // ‖x(s)‖ ≤ ‖x‖ + h‖v‖.
                let xa = norm(&state.x);
                let va = norm(&state.v);
                let r = xa + horizon * va;
                let vi = state.v[mode].abs();
                vi * ((state.x[mode].abs() + horizon * vi) / self.basis.eigenvalue(mode)
                    + self.m0
                    + self.m1 * r)
            }
            ChannelKind::BoomerangFlip { mode } => {
                // Rotation conserves both the per-mode radius and the total
                // active radius.
                let r = active_radius(state, self.n_active);
                let ri = (state.x[mode] * state.x[mode] + state.v[mode] * state.v[mode]).sqrt();
                ri * (self.m0 + self.m1 * r)
            }
            ChannelKind::BoomerangNegate => {
                let r = active_radius(state, self.n_active);
                r * (self.m0 + self.m1 * r)
            }
            ChannelKind::BpsReflect => {
                let xa = norm(&state.x[..self.n_active]);
                let va = norm(&state.v[..self.n_active]);
                let r = xa + horizon * va;
                // ⟨Σ⁻¹x(s), v⟩ = ⟨Σ⁻¹x, v⟩ + s⟨Σ⁻¹v, v⟩, increasing in s.
                let mut c = 0.0;
                let mut d = 0.0;
                for i in 0..self.n_active {
                    let inv = 1.0 / self.basis.eigenvalue(i);
                    c += state.x[i] * state.v[i] * inv;
                    d += state.v[i] * state.v[i] * inv;
                }
                va * (self.m0 + self.m1 * r) + pos(c + horizon * d)
            }
        };
        let smooth_slack = if self.smoothed {
            std::f64::consts::LN_2
        } else {
            0.0
        };
        base + smooth_slack + self.extra.as_ref().map_or(0.0, |e| e.sup)
    }

    fn jump(&self, state: &PhaseState, _rng: &mut dyn RngCore) -> PhaseState {
        self.reflect(state)
    }
}

fn active_radius(state: &PhaseState, n_active: usize) -> f64 {
    state.x[..n_active]
        .iter()
        .zip(&state.v[..n_active])
        .map(|(x, v)| x * x + v * v)
        .sum::<f64>()
        .sqrt()
}

/// Constant-rate full velocity refreshment.
pub struct RefreshChannel {
    id: u32,
    pub rate: f64,
    pub law: VelocityLaw,
    pub n_active: usize,
}

impl RateChannel for RefreshChannel {
    fn id(&self) -> u32 {
        self.id
    }
    fn rate(&self, _state: &PhaseState) -> f64 {
        self.rate
    }
    fn bound(&self, _state: &PhaseState, _horizon: f64) -> f64 {
        self.rate
    }
    fn jump(&self, state: &PhaseState, rng: &mut dyn RngCore) -> PhaseState {
        refresh_jump(state, &self.law, self.n_active, rng)
    }
}

/// A fully assembled sampler: flow plus channels, with the pieces exposed
/// individually for the diagnostics (generator assembly, Πf averaging).
pub struct SamplerAssembly {
    pub algorithm: Algorithm,
    pub flow: Flow,
    pub reflections: Vec<ReflectionChannel>,
    pub refresh: Option<RefreshChannel>,
    /// ν₀ over all N modes (refresh uses it on the active block).
    pub velocity_law: VelocityLaw,
    pub n_active: usize,
    pub n_modes: usize,
    /// The (possibly projected) potential driving the rates.
    pub target: Arc<dyn TargetPotential>,
    pub warnings: Vec<String>,
}

impl SamplerAssembly {
    pub fn channels(&self) -> Vec<&dyn RateChannel> {
        let mut out: Vec<&dyn RateChannel> = Vec::with_capacity(self.reflections.len() + 1);
        for r in &self.reflections {
            out.push(r);
        }
        if let Some(r) = &self.refresh {
            out.push(r);
        }
        out
    }

    /// Fresh full-dimensional velocity from ν₀.
    pub fn sample_velocity<R: Rng + ?Sized>(&self, rng: &mut R) -> CoeffVector {
        self.velocity_law.sample(rng)
    }
}

/// Default Zig-Zag speeds a_i = γ_i^(3-2r) = (γ_i²)^((3-2r)/2).
pub fn default_zz_velocities(basis: &SpectralBasis, r: f64) -> Vec<f64> {
    basis
        .eigenvalues()
        .iter()
        .map(|g2| g2.powf(0.5 * (3.0 - 2.0 * r)))
        .collect()
}

/// Build the flow and channels for a sampler spec.
pub fn assemble_sampler(
    spec: &SamplerSpec,
    target: Arc<dyn TargetPotential>,
    basis: &SpectralBasis,
) -> Result<SamplerAssembly> {
    let n = basis.n_modes();
    if target.n_modes() != n {
        return Err(PdmpError::Config(format!(
            "target has {} modes, basis has {n}",
            target.n_modes()
        )));
    }
    let n_active = spec.approx_level.unwrap_or(n);
    if n_active == 0 || n_active > n {
        return Err(PdmpError::Config(format!(
            "sampler.approx_level: must be in 1..={n}, got {n_active}"
        )));
    }
    let mut warnings = Vec::new();

    let eff_target: Arc<dyn TargetPotential> = if n_active < n {
        Arc::new(projected_target(target.clone(), n_active)?)
    } else {
        target.clone()
    };
    let (m0, m1) = eff_target.grad_growth();
    if !(m0.is_finite() && m1.is_finite()) {
        return Err(PdmpError::Config(
            "target.grad_growth: growth constants must be finite for thinning".into(),
        ));
    }
    let smoothed = spec.rate_mode == RateMode::Smoothed;

    if let Some(extra) = &spec.extra_rate {
        let expected = match spec.algorithm {
            Algorithm::ZigZag | Algorithm::BoomerangFactorised => n_active,
            Algorithm::BouncyParticle | Algorithm::BoomerangPure => 1,
        };
        if extra.len() != expected {
            return Err(PdmpError::Config(format!(
                "sampler.extra_rate: expected {expected} entries, got {}",
                extra.len()
            )));
        }
    }
    let extra_for = |i: usize| -> Option<ExtraRate> {
        spec.extra_rate
            .as_ref()
            .and_then(|v| v.get(i).cloned().flatten())
    };

    let mk_channel = |id: u32, kind: ChannelKind, extra: Option<ExtraRate>| ReflectionChannel {
        id,
        kind,
        target: eff_target.clone(),
        basis: basis.clone(),
        smoothed,
        extra,
        n_active,
        zeta: spec.bps_zeta,
        m0,
        m1,
    };

    let (flow, reflections, velocity_law) = match spec.algorithm {
        Algorithm::ZigZag => {
            let a = match &spec.zz_velocities {
                Some(a) => {
                    if a.len() != n {
                        return Err(PdmpError::Config(format!(
                            "sampler.zz_velocities: expected {n} entries, got {}",
                            a.len()
                        )));
                    }
                    a.clone()
                }
                None => default_zz_velocities(basis, spec.zz_r),
            };
            let mut sum = 0.0;
            for (i, &ai) in a.iter().enumerate() {
                if !(ai > 0.0) || !ai.is_finite() {
                    return Err(PdmpError::Config(format!(
                        "sampler.zz_velocities[{i}]: must be positive and finite, got {ai}"
                    )));
                }
                sum += ai * ai / basis.eigenvalue(i).powi(2);
            }
            if !sum.is_finite() {
                return Err(PdmpError::Config(
                    "sampler.zz_velocities: Σ a_i²/γ_i⁴ overflows (Σ⁻¹v outside the space)".into(),
                ));
            }
            let channels = (0..n_active)
                .map(|i| mk_channel(i as u32, ChannelKind::ZigZagFlip { mode: i }, extra_for(i)))
                .collect();
            (
                Flow::Linear,
                channels,
                VelocityLaw::Rademacher { a },
            )
        }
        Algorithm::BouncyParticle => {
            if spec.bps_zeta < 2.0 {
                return Err(PdmpError::Config(format!(
                    "sampler.bps_zeta: must be >= 2, got {}",
                    spec.bps_zeta
                )));
            }
            if spec.bps_zeta < 4.0 {
                warnings.push(format!(
                    "bps_zeta = {} is below 4; reflection-invariance guarantees need zeta >= 4",
                    spec.bps_zeta
                ));
            }
            let std = basis
                .eigenvalues()
                .iter()
                .map(|g2| g2.powf(0.5 * spec.bps_zeta))
                .collect();
            let channels = vec![mk_channel(0, ChannelKind::BpsReflect, extra_for(0))];
            (Flow::Linear, channels, VelocityLaw::Gaussian { std })
        }
        Algorithm::BoomerangPure | Algorithm::BoomerangFactorised => {
            let mut omega = vec![0.0; n];
            omega[..n_active].fill(1.0);
            let std = basis.eigenvalues().iter().map(|g2| g2.sqrt()).collect();
            let channels = if spec.algorithm == Algorithm::BoomerangPure {
                vec![mk_channel(0, ChannelKind::BoomerangNegate, extra_for(0))]
            } else {
                (0..n_active)
                    .map(|i| {
                        mk_channel(i as u32, ChannelKind::BoomerangFlip { mode: i }, extra_for(i))
                    })
                    .collect()
            };
            if spec.refresh_rate == 0.0 {
                warnings.push(
                    "Boomerang without refreshment is not ergodic; diagnostics requiring \
                     stationarity will reject this assembly"
                        .into(),
                );
            }
            (Flow::Rotation { omega }, channels, VelocityLaw::Gaussian { std })
        }
    };

    let refresh = if spec.refresh_rate > 0.0 {
        Some(RefreshChannel {
            id: reflections.len() as u32,
            rate: spec.refresh_rate,
            law: velocity_law.clone(),
            n_active,
        })
    } else {
        None
    };

    let assembly = SamplerAssembly {
        algorithm: spec.algorithm,
        flow,
        reflections,
        refresh,
        velocity_law,
        n_active,
        n_modes: n,
        target: eff_target,
        warnings,
    };

    if spec.extra_rate.is_some() {
        validate_extra_rate_symmetry(&assembly)?;
    }
    Ok(assembly)
}

/// Randomized check of the extra-rate symmetry γ_i(x, R_i v) = γ_i(x, v).
fn validate_extra_rate_symmetry(assembly: &SamplerAssembly) -> Result<()> {
    let mut rng = crate::rng::stream(0x455854, &[0]);
    for ch in &assembly.reflections {
        if ch.extra.is_none() {
            continue;
        }
        let extra = ch.extra.as_ref().unwrap();
        for _ in 0..100 {
            let x = CoeffVector::from_raw(
                (0..assembly.n_modes)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect(),
            );
            let v = assembly.velocity_law.sample(&mut rng);
            let state = PhaseState::new(x, v)?;
            let reflected = ch.reflect(&state);
            let g1 = (extra.rate)(&state);
            let g2 = (extra.rate)(&reflected);
            if (g1 - g2).abs() > 1e-9 * g1.abs().max(g2.abs()).max(1.0) {
                return Err(PdmpError::Config(format!(
                    "sampler.extra_rate[{}]: not symmetric under its reflection ({g1} vs {g2})",
                    ch.id
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_pdmp, EngineConfig};
    use crate::rng::stream;
    use crate::spectral::{sample_gaussian, GaussianMeasure};
    use crate::targets::{quadratic_target, ZeroPotential};

    fn state(x: Vec<f64>, v: Vec<f64>) -> PhaseState {
        PhaseState::new(CoeffVector::from_raw(x), CoeffVector::from_raw(v)).unwrap()
    }

    #[test]
    fn zigzag_rate_examples() {
        let basis = SpectralBasis::custom(vec![1.0]).unwrap();
        let zero = ZeroPotential::new(1);
        let s = state(vec![2.0], vec![1.5]);
        let r = zigzag_rates(&s, &zero, &basis);
        assert!((r[0] - 3.0).abs() < 1e-15); // v x / γ² with positive part active

        let s = state(vec![2.0], vec![-1.5]);
        assert_eq!(zigzag_rates(&s, &zero, &basis)[0], 0.0);

        let quad = quadratic_target(&basis);
        let s = state(vec![1.0], vec![1.0]);
        assert!((zigzag_rates(&s, &quad, &basis)[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn flip_examples() {
        let s = state(vec![0.0, 0.0], vec![1.0, -2.0]);
        let f = zigzag_flip(&s, 1);
        assert_eq!(&*f.v, &[1.0, 2.0]);
        let ff = zigzag_flip(&f, 1);
        assert_eq!(&*ff.v, &*s.v);
        assert_eq!(norm(&f.v), norm(&s.v));
    }

    #[test]
    fn boomerang_rate_examples() {
        let basis = SpectralBasis::custom(vec![1.0, 1.0]).unwrap();
        let zero = ZeroPotential::new(2);
        let quad = quadratic_target(&basis);
        let s = state(vec![1.0, 0.0], vec![1.0, 0.0]);
        assert_eq!(boomerang_pure_rate(&s, &zero), 0.0);
        assert!((boomerang_pure_rate(&s, &quad) - 1.0).abs() < 1e-15);
        let neg = state(vec![1.0, 0.0], vec![-1.0, 0.0]);
        assert_eq!(boomerang_pure_rate(&neg, &quad), 0.0);

        let s = state(vec![2.0, 0.0], vec![1.0, 1.0]);
        let r = boomerang_factorised_rates(&s, &quad);
        assert_eq!(r, vec![2.0, 0.0]);
    }

    #[test]
    fn smoothed_rate_identities() {
        assert!((smoothed_rate(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(smoothed_rate(40.0) - 40.0 <= 1e-15);
        let u = -40.0f64;
        let lo = smoothed_rate(u);
        assert!(lo > 0.0 && (lo - u.exp()).abs() < 1e-30);
        let mut u = -30.0;
        while u <= 30.0 {
            assert!((smoothed_rate(u) - smoothed_rate(-u) - u).abs() < 1e-12);
            assert!(smoothed_rate(u) >= pos(u));
            u += 0.37;
        }
    }

    #[test]
    fn bps_reflection_properties() {
        let basis = SpectralBasis::power_law(2.0, 4).unwrap();
        let quad = quadratic_target(&basis);
        let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
        let nu0 = GaussianMeasure::new(basis.clone(), 4.0);
        let mut rng = stream(31, &[0]);
        for _ in 0..200 {
            let x = sample_gaussian(&pi0, &mut rng);
            let v = sample_gaussian(&nu0, &mut rng);
            let s = PhaseState::new(x, v).unwrap();
            let r = bps_reflect(&s, &quad, &basis, 4.0).unwrap();
            let rr = bps_reflect(&r, &quad, &basis, 4.0).unwrap();
            for i in 0..4 {
                assert!((rr.v[i] - s.v[i]).abs() <= 1e-12 * s.v[i].abs().max(1.0));
            }
            // ⟨R v, ∇Ψ⟩ = −⟨v, ∇Ψ⟩
            let mut grad_psi = quad.gradient(&s.x);
            for i in 0..4 {
                grad_psi[i] += s.x[i] / basis.eigenvalue(i);
            }
            let before = dot(&s.v, &grad_psi);
            let after = dot(&r.v, &grad_psi);
            assert!((before + after).abs() <= 1e-10 * before.abs().max(1.0));
            // covariance form ⟨Σ^(-ζ) v, v⟩ preserved (the quadratic form
            // under which ν₀ = N(0, Σ^ζ) is invariant)
            let form = |v: &[f64]| -> f64 {
                v.iter()
                    .enumerate()
                    .map(|(i, vi)| vi * vi / basis.eigenvalue(i).powf(4.0))
                    .sum()
            };
            let q0 = form(&s.v);
            let q1 = form(&r.v);
            assert!((q0 - q1).abs() <= 1e-9 * q0.max(1.0));
        }
    }

    #[test]
    fn bps_degenerate_at_origin() {
        let basis = SpectralBasis::power_law(2.0, 3).unwrap();
        let quad = quadratic_target(&basis);
        let s = state(vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]);
        let err = bps_reflect(&s, &quad, &basis, 4.0).unwrap_err();
        assert!(matches!(err, PdmpError::DegenerateGradient { .. }));
    }

    #[test]
    fn refresh_examples() {
        let law = VelocityLaw::Gaussian {
            std: vec![1.0, 0.5],
        };
        let s = state(vec![0.7, -0.3], vec![1.0, 1.0]);
        let mut rng = stream(32, &[0]);
        let out = refresh_jump(&s, &law, 2, &mut rng);
        assert_eq!(&*out.x, &*s.x);

        // determinism
        let a = refresh_jump(&s, &law, 2, &mut stream(9, &[1]));
        let b = refresh_jump(&s, &law, 2, &mut stream(9, &[1]));
        assert_eq!(&*a.v, &*b.v);

        // variance of refreshed modes
        let n = 100_000;
        let mut sum_sq = [0.0f64; 2];
        for _ in 0..n {
            let out = refresh_jump(&s, &law, 2, &mut rng);
            sum_sq[0] += out.v[0] * out.v[0];
            sum_sq[1] += out.v[1] * out.v[1];
        }
        for i in 0..2 {
            let var = sum_sq[i] / n as f64;
            let expect = law.variance(i);
            let se = expect * (2.0 / n as f64).sqrt();
            assert!((var - expect).abs() < 4.0 * se, "mode {i} var {var}");
        }

        // frozen tail untouched
        let out = refresh_jump(&s, &law, 1, &mut rng);
        assert_eq!(out.v[1], s.v[1]);
    }

    /// Σ_n [λ_n(x,v) − λ_n(x, R_n v)] = ⟨∇Φ_eff(x), v⟩ with ∇Φ_eff = ∇Ψ for
    /// the linear-flow samplers and ∇Φ for the Boomerangs.
    #[test]
    fn switching_identity_all_samplers() {
        let basis = SpectralBasis::power_law(2.0, 4).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
        let mut rng = stream(33, &[0]);
        for algorithm in [
            Algorithm::ZigZag,
            Algorithm::BouncyParticle,
            Algorithm::BoomerangPure,
            Algorithm::BoomerangFactorised,
        ] {
            let spec = SamplerSpec::new(algorithm);
            let asm = assemble_sampler(&spec, target.clone(), &basis).unwrap();
            for _ in 0..100 {
                let x = sample_gaussian(&pi0, &mut rng);
                let v = asm.sample_velocity(&mut rng);
                let s = PhaseState::new(x, v).unwrap();
                let mut total = 0.0;
                for ch in &asm.reflections {
                    let reflected = ch.reflect(&s);
                    total += ch.rate(&s) - ch.rate(&reflected);
                }
                let grad = target.gradient(&s.x);
                let mut expect = dot(&grad, &s.v);
                if matches!(algorithm, Algorithm::ZigZag | Algorithm::BouncyParticle) {
                    for i in 0..4 {
                        expect += s.x[i] * s.v[i] / basis.eigenvalue(i);
                    }
                }
                assert!(
                    (total - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                    "{algorithm:?}: {total} vs {expect}"
                );
            }
        }
    }

    /// The same identity holds with smoothed rates since
    /// λ̃(u) − λ̃(−u) = u.
    #[test]
    fn switching_identity_smoothed() {
        let basis = SpectralBasis::power_law(2.0, 3).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
        let mut rng = stream(34, &[0]);
        let mut spec = SamplerSpec::new(Algorithm::BoomerangFactorised);
        spec.rate_mode = RateMode::Smoothed;
        let asm = assemble_sampler(&spec, target.clone(), &basis).unwrap();
        for _ in 0..100 {
            let x = sample_gaussian(&pi0, &mut rng);
            let v = asm.sample_velocity(&mut rng);
            let s = PhaseState::new(x, v).unwrap();
            let mut total = 0.0;
            for ch in &asm.reflections {
                total += ch.rate(&s) - ch.rate(&ch.reflect(&s));
            }
            let expect = dot(&target.gradient(&s.x), &s.v);
            assert!((total - expect).abs() <= 1e-9 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn assembly_channel_counts() {
        let basis = SpectralBasis::power_law(2.0, 5).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let zz = assemble_sampler(&SamplerSpec::new(Algorithm::ZigZag), target.clone(), &basis)
            .unwrap();
        assert_eq!(zz.reflections.len(), 5);
        let bp = assemble_sampler(
            &SamplerSpec::new(Algorithm::BouncyParticle),
            target.clone(),
            &basis,
        )
        .unwrap();
        assert_eq!(bp.reflections.len(), 1);
        let bf = assemble_sampler(
            &SamplerSpec::new(Algorithm::BoomerangFactorised),
            target.clone(),
            &basis,
        )
        .unwrap();
        assert_eq!(bf.reflections.len(), 5);
    }

    #[test]
    fn default_velocities_power_law() {
        let basis = SpectralBasis::power_law(2.0, 4).unwrap();
        let a = default_zz_velocities(&basis, 0.0);
        for (i, ai) in a.iter().enumerate() {
            let expect = ((i + 1) as f64).powf(-3.0);
            assert!((ai - expect).abs() < 1e-14);
        }
        let a1 = default_zz_velocities(&basis, 1.5);
        assert!(a1.iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn boomerang_no_potential_never_jumps() {
        let basis = SpectralBasis::power_law(2.0, 3).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(ZeroPotential::new(3));
        let mut spec = SamplerSpec::new(Algorithm::BoomerangPure);
        spec.refresh_rate = 0.0;
        let asm = assemble_sampler(&spec, target, &basis).unwrap();
        let s = state(vec![1.0, 0.5, -0.2], vec![0.1, -0.6, 0.8]);
        let sk = run_pdmp(
            &s,
            &asm.channels(),
            &asm.flow,
            25.0,
            77,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(sk.n_events(), 0);
    }

    #[test]
    fn approx_level_full_is_identity() {
        let basis = SpectralBasis::power_law(2.0, 6).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let spec_full = SamplerSpec::new(Algorithm::BoomerangFactorised);
        let mut spec_lvl = spec_full.clone();
        spec_lvl.approx_level = Some(6);
        let full = assemble_sampler(&spec_full, target.clone(), &basis).unwrap();
        let lvl = assemble_sampler(&spec_lvl, target, &basis).unwrap();
        let mut rng = stream(35, &[0]);
        let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
        let x = sample_gaussian(&pi0, &mut rng);
        let v = full.sample_velocity(&mut rng);
        let s = PhaseState::new(x, v).unwrap();
        let cfg = EngineConfig::default();
        let a = run_pdmp(&s, &full.channels(), &full.flow, 30.0, 123, &cfg).unwrap();
        let b = run_pdmp(&s, &lvl.channels(), &lvl.flow, 30.0, 123, &cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(a.n_events() > 10);
    }

    #[test]
    fn boomerang_conserves_energy_without_refresh() {
        let basis = SpectralBasis::power_law(2.0, 4).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        for algorithm in [Algorithm::BoomerangPure, Algorithm::BoomerangFactorised] {
            let mut spec = SamplerSpec::new(algorithm);
            spec.refresh_rate = 0.0;
            let asm = assemble_sampler(&spec, target.clone(), &basis).unwrap();
            let s = state(
                vec![1.0, -0.5, 0.25, 0.1],
                vec![0.3, 0.8, -0.2, 0.05],
            );
            let e0 = s.hamiltonian();
            let sk = run_pdmp(
                &s,
                &asm.channels(),
                &asm.flow,
                600.0,
                55,
                &EngineConfig::default(),
            )
            .unwrap();
            assert!(sk.n_events() > 50, "{algorithm:?}: too few events");
            for e in &sk.events {
                assert!((e.state_after.hamiltonian() - e0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn bps_zeta_validation() {
        let basis = SpectralBasis::power_law(2.0, 3).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        let mut spec = SamplerSpec::new(Algorithm::BouncyParticle);
        spec.bps_zeta = 1.0;
        assert!(assemble_sampler(&spec, target.clone(), &basis).is_err());
        spec.bps_zeta = 3.0;
        let asm = assemble_sampler(&spec, target, &basis).unwrap();
        assert!(!asm.warnings.is_empty());
    }

    #[test]
    fn extra_rate_symmetry_enforced() {
        let basis = SpectralBasis::power_law(2.0, 2).unwrap();
        let target: Arc<dyn TargetPotential> = Arc::new(quadratic_target(&basis));
        // symmetric extra rate (depends on |v_i|) passes
        let mut spec = SamplerSpec::new(Algorithm::BoomerangFactorised);
        spec.extra_rate = Some(vec![
            Some(ExtraRate {
                rate: Arc::new(|s: &PhaseState| s.v[0].abs()),
                sup: 100.0,
            }),
            None,
        ]);
        assert!(assemble_sampler(&spec, target.clone(), &basis).is_ok());
        // asymmetric extra rate rejected
        spec.extra_rate = Some(vec![
            Some(ExtraRate {
                rate: Arc::new(|s: &PhaseState| pos(s.v[0])),
                sup: 100.0,
            }),
            None,
        ]);
        assert!(assemble_sampler(&spec, target, &basis).is_err());
    }

    #[test]
    fn reflection_op_involution_probes() {
        let basis = SpectralBasis::power_law(2.0, 4).unwrap();
        let quad = quadratic_target(&basis);
        let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
        let sigma_v: Vec<f64> = basis.eigenvalues().to_vec();
        let ops = [
            ReflectionOp::NegateAll,
            ReflectionOp::FlipMode(2),
            ReflectionOp::BpsHyperplane { zeta: 4.0 },
            ReflectionOp::FiniteDimGradient { sigma_v },
        ];
        let mut rng = stream(36, &[0]);
        for _ in 0..100 {
            let x = sample_gaussian(&pi0, &mut rng);
            let v = sample_gaussian(&pi0, &mut rng);
            let s = PhaseState::new(x, v).unwrap();
            for op in &ops {
                let r = op.apply(&s, &quad, &basis).unwrap();
                let rr = op.apply(&r, &quad, &basis).unwrap();
                for i in 0..4 {
                    assert!((rr.v[i] - s.v[i]).abs() <= 1e-12 * s.v[i].abs().max(1.0));
                    assert_eq!(rr.x[i], s.x[i]);
                }
            }
        }
    }
}
