//! Experiment configuration: a flat, sectioned, plain-text key=value format.
//!
//! Sections are `[basis]`, `[target]`, `[sampler]`, `[run]` and `[study]`.
//! Parsing is strict: unknown sections or keys are hard errors, and every
//! invalid value is reported with its `section.key` path. A parsed config
//! serializes back to text ([`ExperimentConfig::to_config_string`]) for the
//! metadata sidecar, and the round trip re-parses to an equal config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::engine::EngineConfig;
use crate::error::{PdmpError, Result};
use crate::samplers::{Algorithm, RateMode, SamplerSpec};
use crate::spectral::SpectralBasis;
use crate::targets::{bridge_target, quadratic_target, BridgeDrift, TargetPotential, ZeroPotential};

/// `[basis]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisConfig {
    pub kind: String,
    pub n_modes: usize,
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub eigenvalues: Option<Vec<f64>>,
}

/// `[target]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetConfig {
    pub name: String,
    pub drift: Option<String>,
    pub theta: Option<f64>,
    pub amp: Option<f64>,
    pub freq: Option<f64>,
    pub scale: Option<f64>,
    pub quad_points: usize,
}

/// `[sampler]` section, mirroring [`SamplerSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    pub algorithm: String,
    pub rate_mode: String,
    pub refresh_rate: f64,
    pub zz_r: f64,
    pub zz_velocities: Option<Vec<f64>>,
    pub bps_zeta: f64,
    pub approx_level: Option<usize>,
}

/// `[run]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    pub seed: u64,
    pub chains: usize,
    pub max_events: u64,
    pub window: f64,
}

/// `[study]` section. `kind` selects the procedure; the remaining keys are
/// read only by the studies that use them.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyConfig {
    pub kind: String,
    pub function: String,
    pub n_samples: usize,
    pub nested: usize,
    pub rate_scale: f64,
    pub n_batches: usize,
    pub ensemble: usize,
    pub t_max: f64,
    pub t_steps: usize,
    pub t_horizon: f64,
    pub levels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub basis: BasisConfig,
    pub target: TargetConfig,
    pub sampler: SamplerConfig,
    pub run: RunConfig,
    pub study: StudyConfig,
}

/// One section's raw keys, with consumption tracking for unknown-key errors.
struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, (String, bool)>,
}

impl<'a> Section<'a> {
    fn new(name: &'a str, raw: BTreeMap<String, String>) -> Self {
        Section {
            name,
            entries: raw.into_iter().map(|(k, v)| (k, (v, false))).collect(),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.get_mut(key).map(|(v, used)| {
            *used = true;
            v.clone()
        })
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| bad(self.name, key, &v, "a number")),
        }
    }

    fn f64_opt(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| bad(self.name, key, &v, "a number")),
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| bad(self.name, key, &v, "a non-negative integer")),
        }
    }

    fn usize_opt(&mut self, key: &str) -> Result<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| bad(self.name, key, &v, "a non-negative integer")),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| bad(self.name, key, &v, "a non-negative integer")),
        }
    }

    fn string(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map(Some)
                .map_err(|_| bad(self.name, key, &v, "a comma-separated list of numbers")),
        }
    }

    fn usize_list(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map(Some)
                .map_err(|_| bad(self.name, key, &v, "a comma-separated list of integers")),
        }
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, (_, used))| !used)
            .map(|(k, _)| format!("{}.{}", self.name, k))
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(PdmpError::Config(format!(
                "unknown key(s): {}",
                unknown.join(", ")
            )))
        }
    }
}

fn bad(section: &str, key: &str, value: &str, wanted: &str) -> PdmpError {
    PdmpError::Config(format!(
        "{section}.{key}: {value:?} is not {wanted}"
    ))
}

impl ExperimentConfig {
    /// Parse the sectioned key=value text. `#` starts a comment; blank lines
    /// are ignored; keys may not appear before the first section header.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(i) => &raw_line[..i],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim().to_string();
                if !matches!(name.as_str(), "basis" | "target" | "sampler" | "run" | "study") {
                    return Err(PdmpError::Config(format!(
                        "line {}: unknown section [{name}]",
                        lineno + 1
                    )));
                }
                current = Some(name.clone());
                sections.entry(name).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(PdmpError::Config(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                )));
            };
            let Some(section) = &current else {
                return Err(PdmpError::Config(format!(
                    "line {}: key before any [section] header",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let map = sections.get_mut(section).unwrap();
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(PdmpError::Config(format!(
                    "{section}.{key}: duplicate key"
                )));
            }
        }

        let take = |name: &'static str, s: &mut BTreeMap<String, BTreeMap<String, String>>| {
            Section::new(name, s.remove(name).unwrap_or_default())
        };

        let mut b = take("basis", &mut sections);
        let basis = BasisConfig {
            kind: b.string("kind", "power_law"),
            n_modes: b.usize("n_modes", 0)?,
            s: b.f64_opt("s")?,
            t: b.f64_opt("t")?,
            eigenvalues: b.f64_list("eigenvalues")?,
        };
        b.finish()?;

        let mut t = take("target", &mut sections);
        let target = TargetConfig {
            name: t.string("name", "zero"),
            drift: t.take("drift"),
            theta: t.f64_opt("theta")?,
            amp: t.f64_opt("amp")?,
            freq: t.f64_opt("freq")?,
            scale: t.f64_opt("scale")?,
            quad_points: t.usize("quad_points", 128)?,
        };
        t.finish()?;

        let mut s = take("sampler", &mut sections);
        let sampler = SamplerConfig {
            algorithm: s.string("algorithm", "zigzag"),
            rate_mode: s.string("rate_mode", "canonical"),
            refresh_rate: s.f64("refresh_rate", 1.0)?,
            zz_r: s.f64("zz_r", 0.0)?,
            zz_velocities: s.f64_list("zz_velocities")?,
            bps_zeta: s.f64("bps_zeta", 4.0)?,
            approx_level: s.usize_opt("approx_level")?,
        };
        s.finish()?;

        let mut r = take("run", &mut sections);
        let run = RunConfig {
            t_end: r.f64("t_end", 1.0)?,
            seed: r.u64("seed", 0)?,
            chains: r.usize("chains", 1)?,
            max_events: r.u64("max_events", EngineConfig::default().max_events)?,
            window: r.f64("window", 1.0)?,
        };
        r.finish()?;

        let mut st = take("study", &mut sections);
        let study = StudyConfig {
            kind: st.string("kind", "run"),
            function: st.string("function", "x1"),
            n_samples: st.usize("n_samples", 100_000)?,
            nested: st.usize("nested", 32)?,
            rate_scale: st.f64("rate_scale", 1.0)?,
            n_batches: st.usize("n_batches", 100)?,
            ensemble: st.usize("ensemble", 1000)?,
            t_max: st.f64("t_max", 2.5)?,
            t_steps: st.usize("t_steps", 10)?,
            t_horizon: st.f64("t_horizon", 5.0)?,
            levels: st.usize_list("levels")?.unwrap_or_default(),
        };
        st.finish()?;

        let cfg = ExperimentConfig {
            basis,
            target,
            sampler,
            run,
            study,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field validation beyond what the library builders re-check.
    fn validate(&self) -> Result<()> {
        if self.basis.n_modes == 0 {
            return Err(PdmpError::Config("basis.n_modes: must be positive".into()));
        }
        match self.basis.kind.as_str() {
            "power_law" => {
                let s = self
                    .basis
                    .s
                    .ok_or_else(|| PdmpError::Config("basis.s: required for power_law".into()))?;
                if s <= 1.0 {
                    return Err(PdmpError::Config(format!(
                        "basis.s: {s} must be > 1 for a trace-class covariance"
                    )));
                }
            }
            "brownian_bridge" => {
                if self.basis.t.map_or(true, |t| t <= 0.0) {
                    return Err(PdmpError::Config(
                        "basis.t: positive interval length required for brownian_bridge".into(),
                    ));
                }
            }
            "wiener" => {}
            "custom" => {
                let eig = self.basis.eigenvalues.as_deref().unwrap_or(&[]);
                if eig.len() != self.basis.n_modes {
                    return Err(PdmpError::Config(format!(
                        "basis.eigenvalues: need exactly n_modes = {} values",
                        self.basis.n_modes
                    )));
                }
            }
            other => {
                return Err(PdmpError::Config(format!(
                    "basis.kind: unknown kind {other:?}"
                )))
            }
        }
        match self.target.name.as_str() {
            "zero" | "quadratic" => {}
            "bridge" => {
                if self.target.drift.is_none() {
                    return Err(PdmpError::Config(
                        "target.drift: required for the bridge target".into(),
                    ));
                }
            }
            other => {
                return Err(PdmpError::Config(format!(
                    "target.name: unknown target {other:?}"
                )))
            }
        }
        match self.sampler.algorithm.as_str() {
            "zigzag" | "bps" | "boomerang" | "boomerang_factorised" => {}
            other => {
                return Err(PdmpError::Config(format!(
                    "sampler.algorithm: unknown algorithm {other:?}"
                )))
            }
        }
        match self.sampler.rate_mode.as_str() {
            "canonical" | "smoothed" => {}
            other => {
                return Err(PdmpError::Config(format!(
                    "sampler.rate_mode: unknown mode {other:?}"
                )))
            }
        }
        if self.run.t_end <= 0.0 {
            return Err(PdmpError::Config("run.t_end: must be positive".into()));
        }
        if self.run.chains == 0 {
            return Err(PdmpError::Config("run.chains: must be positive".into()));
        }
        match self.study.kind.as_str() {
            "run" | "invariance" | "variance" | "decay" | "approx" | "tuning" => {}
            other => {
                return Err(PdmpError::Config(format!(
                    "study.kind: unknown study {other:?}"
                )))
            }
        }
        if self.study.kind == "approx" && self.study.levels.is_empty() {
            return Err(PdmpError::Config(
                "study.levels: required for the approx study".into(),
            ));
        }
        Ok(())
    }

    pub fn build_basis(&self) -> Result<SpectralBasis> {
        match self.basis.kind.as_str() {
            "power_law" => SpectralBasis::power_law(self.basis.s.unwrap(), self.basis.n_modes),
            "brownian_bridge" => {
                SpectralBasis::brownian_bridge(self.basis.t.unwrap(), self.basis.n_modes)
            }
            "wiener" => SpectralBasis::wiener(self.basis.n_modes),
            "custom" => SpectralBasis::custom(self.basis.eigenvalues.clone().unwrap()),
            _ => unreachable!("validated"),
        }
    }

    pub fn build_target(&self, basis: &SpectralBasis) -> Result<Arc<dyn TargetPotential>> {
        match self.target.name.as_str() {
            "zero" => Ok(Arc::new(ZeroPotential::new(basis.n_modes()))),
            "quadratic" => Ok(Arc::new(quadratic_target(basis))),
            "bridge" => {
                let mut params = Vec::new();
                if let Some(theta) = self.target.theta {
                    params.push(("theta", theta));
                }
                if let Some(amp) = self.target.amp {
                    params.push(("amp", amp));
                }
                if let Some(freq) = self.target.freq {
                    params.push(("freq", freq));
                }
                if let Some(scale) = self.target.scale {
                    params.push(("scale", scale));
                }
                let drift = BridgeDrift::by_name(self.target.drift.as_deref().unwrap(), &params)?;
                Ok(Arc::new(bridge_target(
                    basis,
                    drift,
                    self.target.quad_points,
                )?))
            }
            _ => unreachable!("validated"),
        }
    }

    pub fn build_spec(&self) -> SamplerSpec {
        let algorithm = match self.sampler.algorithm.as_str() {
            "zigzag" => Algorithm::ZigZag,
            "bps" => Algorithm::BouncyParticle,
            "boomerang" => Algorithm::BoomerangPure,
            "boomerang_factorised" => Algorithm::BoomerangFactorised,
            _ => unreachable!("validated"),
        };
        let mut spec = SamplerSpec::new(algorithm);
        spec.rate_mode = if self.sampler.rate_mode == "smoothed" {
            RateMode::Smoothed
        } else {
            RateMode::Canonical
        };
        spec.refresh_rate = self.sampler.refresh_rate;
        spec.zz_r = self.sampler.zz_r;
        spec.zz_velocities = self.sampler.zz_velocities.clone();
        spec.bps_zeta = self.sampler.bps_zeta;
        spec.approx_level = self.sampler.approx_level;
        spec
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            window: self.run.window,
            max_events: self.run.max_events,
        }
    }

    /// Serialize back to the config format; re-parsing yields an equal value.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[basis]");
        let _ = writeln!(out, "kind={}", self.basis.kind);
        let _ = writeln!(out, "n_modes={}", self.basis.n_modes);
        if let Some(s) = self.basis.s {
            let _ = writeln!(out, "s={s}");
        }
        if let Some(t) = self.basis.t {
            let _ = writeln!(out, "t={t}");
        }
        if let Some(e) = &self.basis.eigenvalues {
            let list: Vec<String> = e.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "eigenvalues={}", list.join(","));
        }
        let _ = writeln!(out, "[target]");
        let _ = writeln!(out, "name={}", self.target.name);
        if let Some(d) = &self.target.drift {
            let _ = writeln!(out, "drift={d}");
        }
        for (k, v) in [
            ("theta", self.target.theta),
            ("amp", self.target.amp),
            ("freq", self.target.freq),
            ("scale", self.target.scale),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        let _ = writeln!(out, "quad_points={}", self.target.quad_points);
        let _ = writeln!(out, "[sampler]");
        let _ = writeln!(out, "algorithm={}", self.sampler.algorithm);
        let _ = writeln!(out, "rate_mode={}", self.sampler.rate_mode);
        let _ = writeln!(out, "refresh_rate={}", self.sampler.refresh_rate);
        let _ = writeln!(out, "zz_r={}", self.sampler.zz_r);
        if let Some(v) = &self.sampler.zz_velocities {
            let list: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            let _ = writeln!(out, "zz_velocities={}", list.join(","));
        }
        let _ = writeln!(out, "bps_zeta={}", self.sampler.bps_zeta);
        if let Some(l) = self.sampler.approx_level {
            let _ = writeln!(out, "approx_level={l}");
        }
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "t_end={}", self.run.t_end);
        let _ = writeln!(out, "seed={}", self.run.seed);
        let _ = writeln!(out, "chains={}", self.run.chains);
        let _ = writeln!(out, "max_events={}", self.run.max_events);
        let _ = writeln!(out, "window={}", self.run.window);
        let _ = writeln!(out, "[study]");
        let _ = writeln!(out, "kind={}", self.study.kind);
        let _ = writeln!(out, "function={}", self.study.function);
        let _ = writeln!(out, "n_samples={}", self.study.n_samples);
        let _ = writeln!(out, "nested={}", self.study.nested);
        let _ = writeln!(out, "rate_scale={}", self.study.rate_scale);
        let _ = writeln!(out, "n_batches={}", self.study.n_batches);
        let _ = writeln!(out, "ensemble={}", self.study.ensemble);
        let _ = writeln!(out, "t_max={}", self.study.t_max);
        let _ = writeln!(out, "t_steps={}", self.study.t_steps);
        let _ = writeln!(out, "t_horizon={}", self.study.t_horizon);
        if !self.study.levels.is_empty() {
            let list: Vec<String> = self.study.levels.iter().map(|l| l.to_string()).collect();
            let _ = writeln!(out, "levels={}", list.join(","));
        }
        out
    }
}
