//! Batch experiment runner: configure a target and sampler from a config
//! file, run trajectories or one of the named studies, and write CSV plus a
//! metadata sidecar. Exit codes: 1 config error, 2 runtime error,
//! 3 explosion guard.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::Rng;

use pdmp::config::ExperimentConfig;
use pdmp::diagnostics::{
    approx_error_study, batch_means_variance, decay_rate_fit, invariance_residual,
    optimal_zz_velocities, standard_battery, TestFunction,
};
use pdmp::engine::{run_pdmp, PhaseState};
use pdmp::rng::chain_stream;
use pdmp::samplers::{assemble_sampler, SamplerAssembly};
use pdmp::spectral::{sample_gaussian, GaussianMeasure, SpectralBasis};
use pdmp::PdmpError;

#[derive(Parser)]
#[command(name = "pdmp", version, about = "Piecewise deterministic MCMC runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (falls back to $PDMP_OUT_DIR, then the CWD).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Chain-level parallelism (default: logical cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write one skeleton CSV per chain.
    Run(Common),
    /// Execute the study named in [study] kind and write its CSV.
    Study(Common),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version exit 0; bad usage is a config problem (exit 1)
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            e.exit();
        }
    };
    let (label, common) = match &cli.command {
        Command::Run(c) => ("run", c),
        Command::Study(c) => ("study", c),
    };
    match dispatch(label, common) {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                PdmpError::Config(_) => 1,
                PdmpError::ExplosionSuspected { .. } => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

struct Experiment {
    cfg: ExperimentConfig,
    basis: SpectralBasis,
    assembly: SamplerAssembly,
    out_dir: PathBuf,
    threads: usize,
}

fn dispatch(label: &str, common: &Common) -> Result<String, PdmpError> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&common.config).map_err(|e| {
        PdmpError::Config(format!("cannot read {}: {e}", common.config.display()))
    })?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    let out_dir = common
        .out
        .clone()
        .or_else(|| std::env::var_os("PDMP_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let basis = cfg.build_basis()?;
    let target = cfg.build_target(&basis)?;
    let assembly = assemble_sampler(&cfg.build_spec(), target, &basis)?;
    let threads = common
        .threads
        .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
        .unwrap_or(1)
        .max(1);
    let exp = Experiment {
        cfg,
        basis,
        assembly,
        out_dir,
        threads,
    };
    let (summary, extra_meta) = match (label, exp.cfg.study.kind.as_str()) {
        ("run", _) | ("study", "run") => cmd_run(&exp)?,
        (_, "tuning") => study_tuning(&exp)?,
        (_, "invariance") => study_invariance(&exp)?,
        (_, "variance") => study_variance(&exp)?,
        (_, "decay") => study_decay(&exp)?,
        (_, "approx") => study_approx(&exp)?,
        (_, other) => return Err(PdmpError::Config(format!("study.kind: {other:?}"))),
    };
    write_metadata(&exp, label, &extra_meta, started.elapsed().as_secs_f64())?;
    Ok(summary)
}

/// Write atomically: temp file in the same directory, then rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<(), PdmpError> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn write_metadata(
    exp: &Experiment,
    command: &str,
    extra: &[(String, String)],
    wall_clock: f64,
) -> Result<(), PdmpError> {
    let mut meta = String::new();
    meta.push_str(&format!("command={command}\n"));
    meta.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    meta.push_str(&format!("seed={}\n", exp.cfg.run.seed));
    meta.push_str(&format!("wall_clock_s={wall_clock:.3}\n"));
    for w in &exp.assembly.warnings {
        meta.push_str(&format!("warning={w}\n"));
    }
    for (k, v) in extra {
        meta.push_str(&format!("{k}={v}\n"));
    }
    // The config follows the '---' marker and re-parses to an equal config.
    meta.push_str("---\n");
    meta.push_str(&exp.cfg.to_config_string());
    write_atomic(&exp.out_dir, "metadata.txt", &meta)
}

/// Initial state for chain k: x ~ π₀, v from the sampler's velocity law,
/// both from the chain's own stream, plus a fresh engine seed.
fn chain_start(exp: &Experiment, k: usize) -> Result<(PhaseState, u64), PdmpError> {
    let pi0 = GaussianMeasure::new(exp.basis.clone(), 1.0);
    let mut rng = chain_stream(exp.cfg.run.seed, k as u64);
    let x = sample_gaussian(&pi0, &mut rng);
    let v = exp.assembly.sample_velocity(&mut rng);
    let engine_seed = rng.gen::<u64>();
    Ok((PhaseState::new(x, v)?, engine_seed))
}

fn cmd_run(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let chains = exp.cfg.run.chains;
    let engine_cfg = exp.cfg.engine_config();
    let channels = exp.assembly.channels();
    // Round-robin the chains over workers; output is keyed by chain index,
    // so the reduction is independent of the thread count.
    let mut results: Vec<Option<Result<(String, usize), PdmpError>>> =
        (0..chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for worker in 0..exp.threads.min(chains) {
            let channels = &channels;
            let engine_cfg = &engine_cfg;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut k = worker;
                while k < chains {
                    let res = chain_start(exp, k).and_then(|(z0, engine_seed)| {
                        let sk = run_pdmp(
                            &z0,
                            channels,
                            &exp.assembly.flow,
                            exp.cfg.run.t_end,
                            engine_seed,
                            engine_cfg,
                        )?;
                        Ok((sk.to_csv(), sk.n_events()))
                    });
                    out.push((k, res));
                    k += exp.threads.min(chains);
                }
                out
            }));
        }
        for h in handles {
            for (k, res) in h.join().expect("worker panicked") {
                results[k] = Some(res);
            }
        }
    });
    let mut total_events = 0usize;
    for (k, slot) in results.into_iter().enumerate() {
        let (csv, n_events) = slot.expect("chain not scheduled")?;
        write_atomic(&exp.out_dir, &format!("chain_{k}.csv"), &csv)?;
        total_events += n_events;
    }
    let summary = format!(
        "run: {chains} chain(s), {total_events} events total -> {}",
        exp.out_dir.display()
    );
    Ok((summary, vec![("total_events".into(), total_events.to_string())]))
}

fn battery_function(name: &str) -> Result<TestFunction, PdmpError> {
    standard_battery()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| PdmpError::Config(format!("study.function: unknown function {name:?}")))
}

fn study_tuning(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let table = optimal_zz_velocities(&exp.basis, exp.cfg.sampler.zz_r);
    let mut csv = String::from("mode,gamma_sq,a\n");
    for (i, a) in table.velocities.iter().enumerate() {
        csv.push_str(&format!(
            "{},{:.16e},{:.16e}\n",
            i + 1,
            exp.basis.eigenvalue(i),
            a
        ));
    }
    write_atomic(&exp.out_dir, "tuning.csv", &csv)?;
    let mut meta = vec![(
        "predicted_sigma_sq".to_string(),
        format!("{:.16e}", table.predicted_sigma_sq),
    )];
    if let Some(w) = &table.warning {
        meta.push(("tuning_warning".into(), w.clone()));
    }
    Ok((
        format!(
            "tuning: {} modes, predicted sigma^2 = {:.6} -> {}",
            exp.basis.n_modes(),
            table.predicted_sigma_sq,
            exp.out_dir.display()
        ),
        meta,
    ))
}

fn study_invariance(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let funcs = standard_battery();
    let res = invariance_residual(
        &exp.assembly,
        &exp.basis,
        &funcs,
        exp.cfg.study.n_samples,
        exp.cfg.study.nested,
        exp.cfg.study.rate_scale,
        exp.cfg.run.seed,
    )?;
    let mut csv = String::from("function,residual,std_error\n");
    let mut worst = 0.0f64;
    for r in &res {
        csv.push_str(&format!(
            "{},{:.16e},{:.16e}\n",
            r.name, r.estimate, r.std_error
        ));
        worst = worst.max(r.estimate.abs() / r.std_error.max(1e-300));
    }
    write_atomic(&exp.out_dir, "invariance.csv", &csv)?;
    Ok((
        format!(
            "invariance: {} functions, worst |residual|/se = {worst:.2} -> {}",
            res.len(),
            exp.out_dir.display()
        ),
        vec![("worst_residual_se".into(), format!("{worst:.6}"))],
    ))
}

fn study_variance(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let f = battery_function(&exp.cfg.study.function)?;
    let (z0, engine_seed) = chain_start(exp, 0)?;
    let sk = run_pdmp(
        &z0,
        &exp.assembly.channels(),
        &exp.assembly.flow,
        exp.cfg.run.t_end,
        engine_seed,
        &exp.cfg.engine_config(),
    )?;
    let est = batch_means_variance(
        &sk,
        &exp.assembly.flow,
        &|s: &PhaseState| (f.eval)(&s.x, &s.v),
        exp.cfg.study.n_batches,
        f.name,
    )?;
    let csv = format!(
        "function,time_average,asym_variance,std_error,batches,events_per_unit_time\n{},{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
        est.functional_name,
        est.time_average,
        est.asym_variance,
        est.std_error,
        est.batches,
        est.events_per_unit_time
    );
    write_atomic(&exp.out_dir, "variance.csv", &csv)?;
    Ok((
        format!(
            "variance: {} = {:.6} +/- {:.6}, asym var {:.6} -> {}",
            est.functional_name,
            est.time_average,
            est.std_error,
            est.asym_variance,
            exp.out_dir.display()
        ),
        vec![("asym_variance".into(), format!("{:.16e}", est.asym_variance))],
    ))
}

fn study_decay(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let f = battery_function(&exp.cfg.study.function)?;
    let steps = exp.cfg.study.t_steps.max(1);
    let grid: Vec<f64> = (1..=steps)
        .map(|k| exp.cfg.study.t_max * k as f64 / steps as f64)
        .collect();
    let fit = decay_rate_fit(
        &exp.assembly,
        &exp.basis,
        &|s: &PhaseState| (f.eval)(&s.x, &s.v),
        exp.cfg.study.ensemble,
        &grid,
        exp.cfg.run.seed,
    )?;
    let mut csv = String::from("t,autocovariance\n");
    for (t, c) in &fit.curve {
        csv.push_str(&format!("{t:.16e},{c:.16e}\n"));
    }
    write_atomic(&exp.out_dir, "decay.csv", &csv)?;
    Ok((
        format!(
            "decay: kappa = {:.4}, r^2 = {:.4} -> {}",
            fit.kappa,
            fit.r_squared,
            exp.out_dir.display()
        ),
        vec![
            ("kappa".into(), format!("{:.16e}", fit.kappa)),
            ("r_squared".into(), format!("{:.16e}", fit.r_squared)),
        ],
    ))
}

fn study_approx(exp: &Experiment) -> Result<(String, Vec<(String, String)>), PdmpError> {
    let f = battery_function(&exp.cfg.study.function)?;
    let target = exp.cfg.build_target(&exp.basis)?;
    let (rows, c_cal) = approx_error_study(
        &exp.cfg.build_spec(),
        Arc::clone(&target),
        &exp.basis,
        &|s: &PhaseState| (f.eval)(&s.x, &s.v),
        &exp.cfg.study.levels,
        exp.cfg.study.t_horizon,
        exp.cfg.study.ensemble,
        exp.cfg.run.seed,
    )?;
    let mut csv = String::from("n_approx,t_horizon,error_l2mu,error_se,predicted_bound\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.n_approx, r.t_horizon, r.error_l2mu, r.error_se, r.predicted_bound
        ));
    }
    write_atomic(&exp.out_dir, "approx.csv", &csv)?;
    Ok((
        format!(
            "approx: {} levels, calibrated C = {c_cal:.6} -> {}",
            rows.len(),
            exp.out_dir.display()
        ),
        vec![("calibrated_c".into(), format!("{c_cal:.16e}"))],
    ))
}
