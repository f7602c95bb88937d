//! Estimators and verification procedures: time-average variance, generator
//! invariance, decay-rate fitting, drift conditions, truncation-error
//! studies and tuning formulas.
//!
//! Statistical checks are expressed in multiples of estimated standard
//! errors; absolute tolerances are reserved for deterministic identities.

use std::sync::Arc;

use rand::Rng;

use crate::engine::{
    arc_quad, default_max_piece, evolve, EngineConfig, EventSkeleton, Flow, PhaseState,
    RateChannel,
};
use crate::error::{PdmpError, Result};
use crate::quad::{gauss_hermite_standard_normal, gauss_legendre};
use crate::rng::stream;
use crate::samplers::{
    assemble_sampler, default_zz_velocities, Algorithm, SamplerAssembly, SamplerSpec, VelocityLaw,
};
use crate::spectral::{
    hurwitz_tail, sample_gaussian, BasisKind, CoeffVector, GaussianMeasure, SpectralBasis,
};
use crate::targets::TargetPotential;

/// ν² = 4√(2/π): asymptotic variance of f(x) = x² under the unit-speed 1D
/// canonical Zig-Zag process on N(0,1).
pub const NU_SQ_1D_GAUSSIAN: f64 = 4.0 * 0.7978845608028654; // 4 sqrt(2/pi)

/// Batch-means estimate of the asymptotic variance of a time average.
#[derive(Clone, Debug)]
pub struct VarianceEstimate {
    pub functional_name: String,
    pub time_average: f64,
    pub asym_variance: f64,
    /// √(asym_variance / total_time): standard error of the time average.
    pub std_error: f64,
    pub batches: usize,
    pub events_per_unit_time: f64,
}

impl VarianceEstimate {
    /// Standard error of the asym_variance estimate itself
    /// (≈ σ̂² √(2/(B−1)) for B roughly independent batches).
    pub fn variance_std_error(&self) -> f64 {
        self.asym_variance * (2.0 / (self.batches as f64 - 1.0)).sqrt()
    }
}

/// Split [0, t_end] into equal batches, arc-average f per batch, and scale
/// the sample variance of the batch means by the batch length.
pub fn batch_means_variance(
    skeleton: &EventSkeleton,
    flow: &Flow,
    f: &dyn Fn(&PhaseState) -> f64,
    n_batches: usize,
    functional_name: &str,
) -> Result<VarianceEstimate> {
    if n_batches < 20 {
        return Err(PdmpError::InsufficientLength {
            detail: format!("need at least 20 batches, got {n_batches}"),
        });
    }
    let t_end = skeleton.t_end;
    let batch_len = t_end / n_batches as f64;
    let n_events = skeleton.n_events();
    let mean_iet = t_end / (n_events.max(1)) as f64;
    if n_events == 0 || batch_len < 10.0 * mean_iet {
        return Err(PdmpError::InsufficientLength {
            detail: format!(
                "batch length {batch_len:.3} below 10x mean inter-event time {mean_iet:.3}"
            ),
        });
    }

    let (nodes, weights) = gauss_legendre(8);
    let max_piece = default_max_piece(flow);
    let mut batch_int = vec![0.0f64; n_batches];

    // Single pass over the arcs, splitting each at batch boundaries.
    let mut seg_state = skeleton.initial.clone();
    let mut seg_t0 = 0.0f64;
    let mut event_iter = skeleton.events.iter();
    loop {
        let (seg_t1, next) = match event_iter.next() {
            Some(e) => (e.time, Some(e)),
            None => (t_end, None),
        };
        let mut t = seg_t0;
        let mut local = seg_state.clone();
        while t < seg_t1 - 1e-12 * t_end.max(1.0) {
            let mut b = (t / batch_len) as usize;
            while (b + 1) as f64 * batch_len <= t + 1e-12 * batch_len {
                b += 1;
            }
            let b = b.min(n_batches - 1);
            let piece_end = seg_t1.min((b + 1) as f64 * batch_len);
            let len = piece_end - t;
            if len > 0.0 {
                batch_int[b] += arc_quad(&local, flow, len, f, &nodes, &weights, max_piece);
                flow.advance_mut(&mut local, len);
            }
            t = piece_end;
        }
        match next {
            Some(e) => {
                seg_state = e.state_after.clone();
                seg_t0 = e.time;
            }
            None => break,
        }
    }

    let time_average: f64 = batch_int.iter().sum::<f64>() / t_end;
    let means: Vec<f64> = batch_int.iter().map(|s| s / batch_len).collect();
    let mean_of_means = means.iter().sum::<f64>() / n_batches as f64;
    let var = means
        .iter()
        .map(|m| (m - mean_of_means) * (m - mean_of_means))
        .sum::<f64>()
        / (n_batches as f64 - 1.0);
    let asym_variance = batch_len * var;
    Ok(VarianceEstimate {
        functional_name: functional_name.to_string(),
        time_average,
        asym_variance,
        std_error: (asym_variance / t_end).sqrt(),
        batches: n_batches,
        events_per_unit_time: n_events as f64 / t_end,
    })
}

/// Optimal Zig-Zag speeds a_i = γ_i^(3-2r) plus the predicted asymptotic
/// variance σ_r² = ν² Σ γ_i^(5-4r) / a_i.
#[derive(Clone, Debug)]
pub struct TuningTable {
    pub velocities: Vec<f64>,
    pub predicted_sigma_sq: f64,
    /// Set when the smoothness partial sum Σ γ_i^(2-4r) is not visibly
    /// convergent at this truncation.
    pub warning: Option<String>,
}

pub fn optimal_zz_velocities(basis: &SpectralBasis, r: f64) -> TuningTable {
    let velocities = default_zz_velocities(basis, r);
    let predicted_sigma_sq = NU_SQ_1D_GAUSSIAN
        * basis
            .eigenvalues()
            .iter()
            .zip(&velocities)
            .map(|(g2, a)| g2.powf(0.5 * (5.0 - 4.0 * r)) / a)
            .sum::<f64>();
    let smooth_terms: Vec<f64> = basis
        .eigenvalues()
        .iter()
        .map(|g2| g2.powf(0.5 * (2.0 - 4.0 * r)))
        .collect();
    let total: f64 = smooth_terms.iter().sum();
    let last = *smooth_terms.last().unwrap();
    let warning = if last > 0.01 * total {
        Some(format!(
            "smoothness sum Σ γ^(2-4r) not visibly convergent: last term is {:.1}% of the partial sum",
            100.0 * last / total
        ))
    } else {
        None
    };
    TuningTable {
        velocities,
        predicted_sigma_sq,
        warning,
    }
}

/// A cylindrical test function of (x, v) with componentwise gradients.
#[derive(Clone, Copy)]
pub struct TestFunction {
    pub name: &'static str,
    pub eval: fn(&[f64], &[f64]) -> f64,
    pub grad_x: fn(&[f64], &[f64], usize) -> f64,
    pub grad_v: fn(&[f64], &[f64], usize) -> f64,
}

fn zero_grad(_x: &[f64], _v: &[f64], _i: usize) -> f64 {
    0.0
}

/// The fixed 8-function battery: polynomials and cosines of one and two
/// coordinates, mixing position and velocity. Requires n_modes ≥ 2.
pub fn standard_battery() -> Vec<TestFunction> {
    vec![
        TestFunction {
            name: "x1",
            eval: |x, _v| x[0],
            grad_x: |_x, _v, i| if i == 0 { 1.0 } else { 0.0 },
            grad_v: zero_grad,
        },
        TestFunction {
            name: "x1^2",
            eval: |x, _v| x[0] * x[0],
            grad_x: |x, _v, i| if i == 0 { 2.0 * x[0] } else { 0.0 },
            grad_v: zero_grad,
        },
        TestFunction {
            name: "x1*v1",
            eval: |x, v| x[0] * v[0],
            grad_x: |_x, v, i| if i == 0 { v[0] } else { 0.0 },
            grad_v: |x, _v, i| if i == 0 { x[0] } else { 0.0 },
        },
        TestFunction {
            name: "v1^2",
            eval: |_x, v| v[0] * v[0],
            grad_x: zero_grad,
            grad_v: |_x, v, i| if i == 0 { 2.0 * v[0] } else { 0.0 },
        },
        TestFunction {
            name: "cos(x1)",
            eval: |x, _v| x[0].cos(),
            grad_x: |x, _v, i| if i == 0 { -x[0].sin() } else { 0.0 },
            grad_v: zero_grad,
        },
        TestFunction {
            name: "cos(x1+v1)",
            eval: |x, v| (x[0] + v[0]).cos(),
            grad_x: |x, v, i| if i == 0 { -(x[0] + v[0]).sin() } else { 0.0 },
            grad_v: |x, v, i| if i == 0 { -(x[0] + v[0]).sin() } else { 0.0 },
        },
        TestFunction {
            name: "x2^2*v2",
            eval: |x, v| x[1] * x[1] * v[1],
            grad_x: |x, v, i| if i == 1 { 2.0 * x[1] * v[1] } else { 0.0 },
            grad_v: |x, _v, i| if i == 1 { x[1] * x[1] } else { 0.0 },
        },
        TestFunction {
            name: "cos(x2)*v1",
            eval: |x, v| x[1].cos() * v[0],
            grad_x: |x, v, i| if i == 1 { -x[1].sin() * v[0] } else { 0.0 },
            grad_v: |x, _v, i| if i == 0 { x[1].cos() } else { 0.0 },
        },
    ]
}

/// ⟨flow generator⟩ f at a state: ⟨v, ∇_x f⟩ for linear flow, the rotation
/// bracket Σ ω_i (v_i ∂_{x_i} f − x_i ∂_{v_i} f) otherwise.
fn flow_term(flow: &Flow, f: &TestFunction, x: &[f64], v: &[f64]) -> f64 {
    match flow {
        Flow::Linear => (0..x.len()).map(|i| v[i] * (f.grad_x)(x, v, i)).sum(),
        Flow::Rotation { omega } => (0..x.len())
            .map(|i| omega[i] * (v[i] * (f.grad_x)(x, v, i) - x[i] * (f.grad_v)(x, v, i)))
            .sum(),
    }
}

/// Flow term plus reflection differences Σ λ_i (f∘R_i − f); the refresh term
/// is added by the caller (its Πf average differs between the Monte Carlo
/// and quadrature paths).
fn lf_reflective(
    assembly: &SamplerAssembly,
    f: &TestFunction,
    state: &PhaseState,
    rate_scale: f64,
) -> f64 {
    let mut l = flow_term(&assembly.flow, f, &state.x, &state.v);
    let f0 = (f.eval)(&state.x, &state.v);
    for ch in &assembly.reflections {
        let rate = rate_scale * ch.rate(state);
        if rate > 0.0 {
            let r = ch.reflect(state);
            l += rate * ((f.eval)(&r.x, &r.v) - f0);
        }
    }
    l
}

/// Residual estimate for one test function.
#[derive(Clone, Debug)]
pub struct FunctionResidual {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimate E_μ[ℒf] for each test function by self-normalized importance
/// sampling from μ₀ = π₀ × ν₀ with weights exp(−Φ(x)) (max-subtracted).
///
/// `nested` is the inner Monte Carlo size for the refresh average Πf;
/// `rate_scale` multiplies the reflection rates (1.0 for the real sampler,
/// anything else for negative controls). Residuals should be 0 within
/// Monte Carlo error exactly when the assembly leaves μ invariant.
pub fn invariance_residual(
    assembly: &SamplerAssembly,
    basis: &SpectralBasis,
    funcs: &[TestFunction],
    n_samples: usize,
    nested: usize,
    rate_scale: f64,
    seed: u64,
) -> Result<Vec<FunctionResidual>> {
    let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
    let mut rng = stream(seed, &[0x494e56]);
    let nf = funcs.len();
    let n_active = assembly.n_active;
    let mut logw = Vec::with_capacity(n_samples);
    let mut lf = vec![Vec::with_capacity(n_samples); nf];
    let mut vprime: Vec<f64> = Vec::new();
    for _ in 0..n_samples {
        let x = sample_gaussian(&pi0, &mut rng);
        let v = assembly.sample_velocity(&mut rng);
        let state = PhaseState::new(x, v)?;
        logw.push(-assembly.target.evaluate(&state.x));
        // Fresh velocities for the nested Πf average, shared across the
        // battery; only the active block is replaced, as in refresh_jump.
        let wdraws: Vec<CoeffVector> = if assembly.refresh.is_some() {
            (0..nested)
                .map(|_| assembly.velocity_law.sample(&mut rng))
                .collect()
        } else {
            Vec::new()
        };
        for (k, f) in funcs.iter().enumerate() {
            let mut l = lf_reflective(assembly, f, &state, rate_scale);
            if let Some(rc) = &assembly.refresh {
                let f0 = (f.eval)(&state.x, &state.v);
                let mut pif = 0.0;
                for w in &wdraws {
                    vprime.clear();
                    vprime.extend_from_slice(&w[..n_active]);
                    vprime.extend_from_slice(&state.v[n_active..]);
                    pif += (f.eval)(&state.x, &vprime);
                }
                pif /= nested as f64;
                l += rc.rate * (pif - f0);
            }
            lf[k].push(l);
        }
    }
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|lw| (lw - m).exp()).collect();
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|wi| wi * wi).sum();
    let ess = sum_w * sum_w / sum_w2;
    if ess < 0.05 * n_samples as f64 {
        return Err(PdmpError::DegenerateWeights {
            ess,
            n: n_samples,
        });
    }
    let mut out = Vec::with_capacity(nf);
    for (k, f) in funcs.iter().enumerate() {
        let estimate = w.iter().zip(&lf[k]).map(|(wi, li)| wi * li).sum::<f64>() / sum_w;
        let se = w
            .iter()
            .zip(&lf[k])
            .map(|(wi, li)| {
                let d = li - estimate;
                wi * wi * d * d
            })
            .sum::<f64>()
            .sqrt()
            / sum_w;
        out.push(FunctionResidual {
            name: f.name.to_string(),
            estimate,
            std_error: se,
        });
    }
    Ok(out)
}

/// Product grid over the velocity measure with weights summing to one.
fn velocity_grid(law: &VelocityLaw, n_nodes: usize) -> Vec<(f64, Vec<f64>)> {
    match law {
        VelocityLaw::Gaussian { std } => {
            let (t, w) = gauss_hermite_standard_normal(n_nodes);
            let mut grid = vec![(1.0, Vec::new())];
            for s in std {
                let mut next = Vec::with_capacity(grid.len() * n_nodes);
                for (wg, point) in &grid {
                    for (ti, wi) in t.iter().zip(&w) {
                        let mut p = point.clone();
                        p.push(s * ti);
                        next.push((wg * wi, p));
                    }
                }
                grid = next;
            }
            grid
        }
        VelocityLaw::Rademacher { a } => {
            let mut grid = vec![(1.0, Vec::new())];
            for ai in a {
                let mut next = Vec::with_capacity(grid.len() * 2);
                for (wg, point) in &grid {
                    for s in [-*ai, *ai] {
                        let mut p = point.clone();
                        p.push(s);
                        next.push((wg * 0.5, p));
                    }
                }
                grid = next;
            }
            grid
        }
    }
}

/// Deterministic quadrature version of [`invariance_residual`] for
/// two-mode assemblies: tensor Gauss–Hermite over x (tilted by e^{−Φ} and
/// self-normalized) and over v, with Πf computed exactly on the v-grid.
pub fn invariance_quadrature_oracle(
    assembly: &SamplerAssembly,
    basis: &SpectralBasis,
    funcs: &[TestFunction],
    n_nodes: usize,
    rate_scale: f64,
) -> Result<Vec<f64>> {
    if basis.n_modes() != 2 {
        return Err(PdmpError::Config(
            "quadrature oracle supports exactly 2 modes".into(),
        ));
    }
    let (t, w) = gauss_hermite_standard_normal(n_nodes);
    let std: Vec<f64> = basis.eigenvalues().iter().map(|g| g.sqrt()).collect();
    let vgrid = velocity_grid(&assembly.velocity_law, n_nodes);
    let mut num = vec![0.0; funcs.len()];
    let mut den = 0.0;
    for (i, (&ti, &wi)) in t.iter().zip(&w).enumerate() {
        let _ = i;
        for (&tj, &wj) in t.iter().zip(&w) {
            let x = vec![std[0] * ti, std[1] * tj];
            let tilt = (-assembly.target.evaluate(&x)).exp();
            let wx = wi * wj * tilt;
            // Πf depends on x only: average over the v-grid once.
            let mut pif = vec![0.0; funcs.len()];
            if assembly.refresh.is_some() {
                for (wv, vv) in &vgrid {
                    for (k, f) in funcs.iter().enumerate() {
                        pif[k] += wv * (f.eval)(&x, vv);
                    }
                }
            }
            for (wv, vv) in &vgrid {
                let state = PhaseState::new(
                    CoeffVector::from_raw(x.clone()),
                    CoeffVector::from_raw(vv.clone()),
                )?;
                for (k, f) in funcs.iter().enumerate() {
                    let mut l = lf_reflective(assembly, f, &state, rate_scale);
                    if let Some(rc) = &assembly.refresh {
                        l += rc.rate * (pif[k] - (f.eval)(&x, vv));
                    }
                    num[k] += wx * wv * l;
                }
            }
            den += wx;
        }
    }
    Ok(num.into_iter().map(|n| n / den).collect())
}

/// Exponential-decay fit of the stationary autocovariance of f.
#[derive(Clone, Debug)]
pub struct DecayFit {
    pub kappa: f64,
    pub r_squared: f64,
    /// (t, autocovariance) including any non-positive trailing estimates.
    pub curve: Vec<(f64, f64)>,
}

/// Estimate the stationary autocovariance of f on `t_grid` from an
/// ensemble initialized by importance resampling from μ₀, then fit
/// log cov(t) = α − κt by least squares.
pub fn decay_rate_fit(
    assembly: &SamplerAssembly,
    basis: &SpectralBasis,
    f: &dyn Fn(&PhaseState) -> f64,
    ensemble: usize,
    t_grid: &[f64],
    seed: u64,
) -> Result<DecayFit> {
    if ensemble < 1000 {
        return Err(PdmpError::Config(format!(
            "decay fit needs ensemble >= 1000, got {ensemble}"
        )));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|p| p[1] <= p[0]) || t_grid[0] <= 0.0 {
        return Err(PdmpError::Config(
            "decay fit: t_grid must be positive and strictly increasing".into(),
        ));
    }
    if matches!(
        assembly.algorithm,
        Algorithm::BoomerangPure | Algorithm::BoomerangFactorised
    ) && assembly.refresh.is_none()
    {
        return Err(PdmpError::Config(
            "decay fit: Boomerang ergodicity requires refresh_rate > 0".into(),
        ));
    }

    // Importance resampling from μ₀-proposals toward μ.
    let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
    let mut rng = stream(seed, &[0x444543]);
    let n_prop = ensemble * 4;
    let mut proposals = Vec::with_capacity(n_prop);
    let mut logw = Vec::with_capacity(n_prop);
    for _ in 0..n_prop {
        let x = sample_gaussian(&pi0, &mut rng);
        let v = assembly.sample_velocity(&mut rng);
        logw.push(-assembly.target.evaluate(&x));
        proposals.push(PhaseState::new(x, v)?);
    }
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|lw| (lw - m).exp()).collect();
    let total: f64 = w.iter().sum();
    // Systematic resampling: deterministic given the stream.
    let u0: f64 = rng.gen::<f64>() / ensemble as f64;
    let mut picks = Vec::with_capacity(ensemble);
    let mut cum = 0.0;
    let mut j = 0usize;
    for k in 0..ensemble {
        let target_mass = (u0 + k as f64 / ensemble as f64) * total;
        while cum + w[j] < target_mass && j + 1 < n_prop {
            cum += w[j];
            j += 1;
        }
        picks.push(proposals[j].clone());
    }

    // Evolve each member along the grid, recording f at every grid time.
    let channels = assembly.channels();
    let cfg = EngineConfig::default();
    let n_t = t_grid.len();
    let mut f0 = Vec::with_capacity(ensemble);
    let mut ft = vec![Vec::with_capacity(ensemble); n_t];
    for (k, z0) in picks.iter().enumerate() {
        f0.push(f(z0));
        let mut cur = z0.clone();
        let mut t_prev = 0.0;
        for (gi, &tg) in t_grid.iter().enumerate() {
            let seg_seed = stream(seed, &[0x444543, 1 + k as u64, gi as u64]).gen::<u64>();
            let (next, _) = evolve(&cur, &channels, &assembly.flow, tg - t_prev, seg_seed, &cfg)?;
            ft[gi].push(f(&next));
            cur = next;
            t_prev = tg;
        }
    }

    let mean0: f64 = f0.iter().sum::<f64>() / ensemble as f64;
    let var0: f64 = f0.iter().map(|a| (a - mean0) * (a - mean0)).sum::<f64>()
        / (ensemble as f64 - 1.0);
    if var0 <= 1e-20 * mean0.abs().max(1.0) {
        return Err(PdmpError::NonPositiveCovariance {
            detail: "degenerate input: f has zero variance under μ".into(),
        });
    }
    let mut curve = Vec::with_capacity(n_t);
    for (gi, &tg) in t_grid.iter().enumerate() {
        let meant: f64 = ft[gi].iter().sum::<f64>() / ensemble as f64;
        let cov: f64 = f0
            .iter()
            .zip(&ft[gi])
            .map(|(a, b)| (a - mean0) * (b - meant))
            .sum::<f64>()
            / (ensemble as f64 - 1.0);
        curve.push((tg, cov));
    }

    // Fit on the longest positive prefix.
    let fit: Vec<(f64, f64)> = curve
        .iter()
        .take_while(|(_, c)| *c > 0.0)
        .map(|&(t, c)| (t, c.ln()))
        .collect();
    if fit.len() < 3 {
        return Err(PdmpError::NonPositiveCovariance {
            detail: format!(
                "only {} positive autocovariance points before the window ends",
                fit.len()
            ),
        });
    }
    let n = fit.len() as f64;
    let sx: f64 = fit.iter().map(|(t, _)| t).sum();
    let sy: f64 = fit.iter().map(|(_, y)| y).sum();
    let sxx: f64 = fit.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = fit.iter().map(|(t, y)| t * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let ybar = sy / n;
    let ss_tot: f64 = fit.iter().map(|(_, y)| (y - ybar) * (y - ybar)).sum();
    let ss_res: f64 = fit
        .iter()
        .map(|(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    Ok(DecayFit {
        kappa: -slope,
        r_squared,
        curve,
    })
}

/// Evaluate the drift-condition margin m(x) = 𝒜Φ(x) + c₁‖Σ^½∇Φ(x)‖² − c₂
/// at probes from π₀, where
/// 𝒜Φ = Tr(Σ∇²Φ) − ⟨x, ∇Φ⟩ − ⟨∇Φ, Σ∇Φ⟩ (trace by central differences of
/// the gradient). Satisfied means every probe has m(x) ≤ 0.
pub fn drift_condition_check(
    target: &dyn TargetPotential,
    basis: &SpectralBasis,
    c1: f64,
    c2: f64,
    n_probes: usize,
    seed: u64,
) -> (f64, bool) {
    let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
    let mut rng = stream(seed, &[0x445243]);
    let n = basis.n_modes();
    let h = 1e-4;
    let mut worst = f64::NEG_INFINITY;
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for _ in 0..n_probes {
        let x = sample_gaussian(&pi0, &mut rng);
        let grad = target.gradient(&x);
        let mut trace = 0.0;
        let mut xp = x.to_vec();
        for i in 0..n {
            xp[i] = x[i] + h;
            target.gradient_into(&xp, &mut gp);
            xp[i] = x[i] - h;
            target.gradient_into(&xp, &mut gm);
            xp[i] = x[i];
            trace += basis.eigenvalue(i) * (gp[i] - gm[i]) / (2.0 * h);
        }
        let x_dot_g: f64 = x.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let sigma_quad: f64 = grad
            .iter()
            .enumerate()
            .map(|(i, g)| basis.eigenvalue(i) * g * g)
            .sum();
        let m = trace - x_dot_g - sigma_quad + c1 * sigma_quad - c2;
        worst = worst.max(m);
    }
    (worst, worst <= 0.0)
}

/// One level of the truncation-error study.
#[derive(Clone, Debug)]
pub struct ApproxStudyRow {
    pub n_approx: usize,
    pub t_horizon: f64,
    pub error_l2mu: f64,
    pub error_se: f64,
    /// C·T·√(Σ_{i>N'} γ_i²) with C calibrated at the smallest level.
    pub predicted_bound: f64,
}

/// Tail Σ_{i>level} γ_i²: analytic for power laws, stored otherwise.
pub fn eigen_tail(basis: &SpectralBasis, level: usize) -> Result<f64> {
    match basis.kind() {
        BasisKind::PowerLaw { s } => hurwitz_tail(*s, level as u64),
        _ => Ok(basis.eigenvalues()[level.min(basis.n_modes())..]
            .iter()
            .sum()),
    }
}

/// Common-random-number estimate of ‖P_T^{N'}f − P_T^{N_ref}f‖_{L²(μ)} for
/// each level N'. One seed per ensemble member drives both the truncated
/// and the reference trajectory; the per-window streams re-synchronize the
/// coupling whenever accept/reject decisions diverge. Initial states are
/// μ₀-draws weighted by exp(−Φ) (self-normalized).
pub fn approx_error_study(
    spec: &SamplerSpec,
    target: Arc<dyn TargetPotential>,
    basis: &SpectralBasis,
    f: &dyn Fn(&PhaseState) -> f64,
    levels: &[usize],
    t_horizon: f64,
    ensemble: usize,
    seed: u64,
) -> Result<(Vec<ApproxStudyRow>, f64)> {
    let n = basis.n_modes();
    if levels.is_empty() || levels.windows(2).any(|p| p[1] <= p[0]) {
        return Err(PdmpError::Config(
            "study.levels: must be non-empty and strictly increasing".into(),
        ));
    }
    if *levels.last().unwrap() > n {
        return Err(PdmpError::Config(format!(
            "study.levels: last level exceeds truncation {n}"
        )));
    }
    let reference = assemble_sampler(
        &SamplerSpec {
            approx_level: None,
            ..spec.clone()
        },
        target.clone(),
        basis,
    )?;
    let truncated: Vec<SamplerAssembly> = levels
        .iter()
        .map(|&l| {
            assemble_sampler(
                &SamplerSpec {
                    approx_level: Some(l),
                    ..spec.clone()
                },
                target.clone(),
                basis,
            )
        })
        .collect::<Result<_>>()?;

    let pi0 = GaussianMeasure::new(basis.clone(), 1.0);
    let cfg = EngineConfig::default();
    let ref_channels = reference.channels();
    let mut rng = stream(seed, &[0x435253]);
    let mut weights = Vec::with_capacity(ensemble);
    let mut sq_diffs = vec![Vec::with_capacity(ensemble); levels.len()];
    for member in 0..ensemble {
        let x = sample_gaussian(&pi0, &mut rng);
        let v = reference.sample_velocity(&mut rng);
        let z0 = PhaseState::new(x, v)?;
        weights.push((-target.evaluate(&z0.x)).exp());
        let member_seed = stream(seed, &[0x435253, 1 + member as u64]).gen::<u64>();
        let (z_ref, _) = evolve(
            &z0,
            &ref_channels,
            &reference.flow,
            t_horizon,
            member_seed,
            &cfg,
        )?;
        let f_ref = f(&z_ref);
        for (li, asm) in truncated.iter().enumerate() {
            let (z_lvl, _) = evolve(&z0, &asm.channels(), &asm.flow, t_horizon, member_seed, &cfg)?;
            let d = f(&z_lvl) - f_ref;
            sq_diffs[li].push(d * d);
        }
    }
    let sum_w: f64 = weights.iter().sum();
    let mut rows = Vec::with_capacity(levels.len());
    let mut c_cal = 0.0;
    for (li, &level) in levels.iter().enumerate() {
        let mean_sq: f64 = weights
            .iter()
            .zip(&sq_diffs[li])
            .map(|(w, d)| w * d)
            .sum::<f64>()
            / sum_w;
        let se_sq: f64 = weights
            .iter()
            .zip(&sq_diffs[li])
            .map(|(w, d)| {
                let r = d - mean_sq;
                w * w * r * r
            })
            .sum::<f64>()
            .sqrt()
            / sum_w;
        let error = mean_sq.sqrt();
        let error_se = if error > 0.0 { se_sq / (2.0 * error) } else { 0.0 };
        let tail = eigen_tail(basis, level)?;
        if li == 0 {
            c_cal = if tail > 0.0 {
                error / (t_horizon * tail.sqrt())
            } else {
                0.0
            };
        }
        rows.push(ApproxStudyRow {
            n_approx: level,
            t_horizon,
            error_l2mu: error,
            error_se,
            predicted_bound: c_cal * t_horizon * tail.sqrt(),
        });
    }
    Ok((rows, c_cal))
}

/// One factor of the μ/μ_N discrepancy product in log space:
/// log[(γ²+1)/√(2γ²+1)].
pub fn mu_factor_log(g2: f64) -> f64 {
    g2.ln_1p() - 0.5 * (2.0 * g2).ln_1p()
}

/// Exact and asymptotic divergence between μ and its truncation for the
/// quadratic potential ‖x‖²/2:
///
///   exact = Π_{i>N} (γ_i²+1)/√(2γ_i²+1) − 1,   asymptotic = ½ Σ_{i>N} γ_i⁴.
///
/// Power-law bases extend the product over the analytic tail; other bases
/// use their stored eigenvalues only (an empty tail gives (0, 0)).
pub fn mu_divergence(basis: &SpectralBasis, quadratic: bool, n_trunc: usize) -> Result<(f64, f64)> {
    if !quadratic {
        return Err(PdmpError::Config(
            "mu_divergence: product formula is only valid for the quadratic potential".into(),
        ));
    }
    match basis.kind() {
        BasisKind::PowerLaw { s } => {
            let s = *s;
            const CUTOFF: u64 = 1_000_000;
            let mut log_sum = 0.0;
            let mut i = CUTOFF;
            while i > n_trunc as u64 {
                log_sum += mu_factor_log((i as f64).powf(-s));
                i -= 1;
            }
            // Beyond the cutoff each factor is ½γ⁴ + O(γ⁶).
            log_sum += 0.5 * hurwitz_tail(2.0 * s, CUTOFF)?;
            let asymptotic = 0.5 * hurwitz_tail(2.0 * s, n_trunc as u64)?;
            Ok((log_sum.exp_m1(), asymptotic))
        }
        _ => {
            let tail = &basis.eigenvalues()[n_trunc.min(basis.n_modes())..];
            let log_sum: f64 = tail.iter().map(|&g2| mu_factor_log(g2)).sum();
            let asymptotic: f64 = 0.5 * tail.iter().map(|&g2| g2 * g2).sum::<f64>();
            Ok((log_sum.exp_m1(), asymptotic))
        }
    }
}
