//! Command-line front end: `unravel run | validate-kernel | invariance | novikov | preset`.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 usage or configuration
//! error, 3 inadmissible kernel.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{MatrixSpec, RunConfig, ScenarioRef, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::kernels::PositivityReport;
use crate::linalg::{self, CMat};
use crate::noise::{write_correlations_csv, CorrelationAccumulator, FidelitySummary, NoiseSampler, RngStreamSpec};
use crate::novikov::{novikov_check, standard_batch, standard_functionals, NovikovReport};
use crate::output::{write_mean_rho_csv, write_observables_csv, write_solution_csv};
use crate::scenarios::{
    check_eta_independence, check_positivity, check_reference, check_trace, preset, CheckVerdict, Scenario,
    PRESET_NAMES,
};
use crate::unraveling::{invariance_check, run_ensemble, EnsembleOptions};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INADMISSIBLE: i32 = 3;

const DEFAULT_OUT_DIR: &str = "unravel-out";
const KNOWN_CHECKS: [&str; 4] = ["positivity", "trace", "reference", "eta-independence"];
/// Fraction of empirical correlation entries that must lie within 4 stderr.
const FIDELITY_FRACTION: f64 = 0.99;

#[derive(Debug, Parser)]
#[command(name = "unravel", version, about = "Non-Markovian stochastic Schrödinger equation ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Source {
    /// Run configuration file (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset instead of a configuration file.
    #[arg(long)]
    pub preset: Option<String>,
    /// Scenario variant label.
    #[arg(long)]
    pub variant: Option<String>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "UNRAVEL_OUT_DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate an ensemble, write averages and evaluate the scenario's checks.
    Run {
        #[command(flatten)]
        source: Source,
        /// Ensemble size.
        #[arg(long)]
        ensemble: Option<usize>,
        /// Integration step.
        #[arg(long)]
        dt: Option<f64>,
        /// Checks to run (comma separated).
        #[arg(long, value_delimiter = ',')]
        check: Vec<String>,
    },
    /// Positivity of the correlation block and empirical fidelity of the sampler.
    ValidateKernel {
        #[command(flatten)]
        source: Source,
        /// Sampled paths for the empirical correlations.
        #[arg(long, default_value_t = 20000)]
        samples: usize,
        /// Grid points for the empirical correlations.
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Per-realization invariance under a unitary change of noise base.
    Invariance {
        #[command(flatten)]
        source: Source,
        /// Seed of the Haar-random unitary.
        #[arg(long, default_value_t = 0)]
        unitary_seed: u64,
        /// Unitary given as a matrix file (JSON) instead of a random one.
        #[arg(long, conflicts_with = "identity")]
        unitary: Option<PathBuf>,
        /// Use the identity.
        #[arg(long)]
        identity: bool,
        #[arg(long, default_value_t = 10)]
        realizations: usize,
        #[arg(long, default_value_t = 1e-9)]
        bound: f64,
    },
    /// Monte Carlo check of the Gaussian integration-by-parts identity.
    Novikov {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Evaluation time.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Largest admissible z-score.
        #[arg(long, default_value_t = 4.0)]
        bound: f64,
    },
    /// Preset utilities.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum PresetAction {
    /// Print the preset names.
    List,
    /// Write a preset as an editable run configuration.
    Export {
        name: String,
        /// Destination file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Inadmissible { .. } | Error::FactorizationFailed { .. } => EXIT_INADMISSIBLE,
        Error::BlowUp { .. } | Error::TooManyBlowUps { .. } => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { source, ensemble, dt, check } => cmd_run(&source, ensemble, dt, check),
        Command::ValidateKernel { source, samples, points } => cmd_validate_kernel(&source, samples, points),
        Command::Invariance { source, unitary_seed, unitary, identity, realizations, bound } => {
            cmd_invariance(&source, unitary_seed, unitary.as_deref(), identity, realizations, bound)
        }
        Command::Novikov { source, samples, t, bound } => cmd_novikov(&source, samples, t, bound),
        Command::Preset { action } => cmd_preset(action),
    }
}

/// The run configuration named by `--config`/`--preset` with flag overrides,
/// and the directory relative kernel files are resolved against.
fn load(source: &Source) -> Result<(RunConfig, PathBuf)> {
    let (mut config, base) = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text =
                fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::from_json(&text)?, base)
        }
        (None, Some(name)) => (RunConfig::for_preset(name), PathBuf::from(".")),
        (None, None) => return Err(Error::Config("one of --config or --preset is required".into())),
    };
    if source.variant.is_some() {
        config.variant = source.variant.clone();
    }
    if let Some(s) = source.seed {
        config.seed = s;
    }
    if source.threads.is_some() {
        config.threads = source.threads;
    }
    config.validate()?;
    if let Some(n) = config.threads {
        // Already-initialized pools keep their size; ensemble runs use a scoped pool anyway.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok((config, base))
}

fn out_dir(source: &Source, config: &RunConfig) -> PathBuf {
    source.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    use std::io::Write;
    writeln!(w)?;
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn report_inadmissible(report: &PositivityReport) -> Result<i32> {
    eprintln!(
        "error: inadmissible correlation kernel: minimum eigenvalue {:.6e} below -{:.3e}",
        report.min_eigenvalue, report.tolerance
    );
    print_json(report)?;
    Ok(EXIT_INADMISSIBLE)
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub command: &'static str,
    pub config: RunConfig,
    pub scenario: crate::scenarios::ScenarioSpec,
    pub ensemble: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub sampler: &'static str,
    pub trajectories_averaged: usize,
    pub blow_ups: usize,
    pub wall_time_s: f64,
    pub checks: Vec<CheckVerdict>,
    pub pass: bool,
}

fn cmd_run(source: &Source, ensemble: Option<usize>, dt: Option<f64>, check: Vec<String>) -> Result<i32> {
    let started = Instant::now();
    let (mut config, base) = load(source)?;
    if ensemble.is_some() {
        config.ensemble = ensemble;
    }
    if dt.is_some() {
        config.dt = dt;
    }
    if !check.is_empty() {
        config.checks = check;
    }
    config.validate()?;
    let spec = config.resolve()?;
    let checks = if config.checks.is_empty() { spec.checks.clone() } else { config.checks.clone() };
    if let Some(c) = checks.iter().find(|c| !KNOWN_CHECKS.contains(&c.as_str())) {
        return Err(Error::Config(format!("unknown check '{c}' (known: {})", KNOWN_CHECKS.join(", "))));
    }
    let scenario = spec.build(&base)?;
    let (positivity, report) = check_positivity(&scenario)?;
    if !report.pass {
        return report_inadmissible(&report);
    }
    let m = config.ensemble_size(&spec);
    let opts = EnsembleOptions { threads: config.threads, ..EnsembleOptions::default() };
    eprintln!("running {} ({m} trajectories, seed {})", spec.name, config.seed);
    let run = run_ensemble(&scenario.simulation, m, config.seed, opts)?;
    let acc = &run.accumulator;

    let dir = out_dir(source, &config);
    write_observables_csv(create(&dir, "observables.csv")?, acc)?;
    write_mean_rho_csv(create(&dir, "mean_rho.csv")?, acc)?;

    let mut verdicts = Vec::new();
    for name in &checks {
        match name.as_str() {
            "positivity" => verdicts.push(positivity.clone()),
            "trace" => verdicts.push(check_trace(acc, scenario.simulation.closure)),
            "reference" => verdicts.extend(reference_checks(&scenario, acc, &dir)?),
            "eta-independence" => {
                let r = check_eta_independence(&spec, &base, m, config.seed, opts, "sigma_x")?;
                verdicts.extend([r.mean, r.dispersion]);
            }
            _ => unreachable!("validated above"),
        }
    }
    let pass = verdicts.iter().all(|v| v.pass);
    for v in &verdicts {
        eprintln!(
            "{} {}: measured {:.6e}, bound {:.6e}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.measured,
            v.bound
        );
    }
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION"),
        command: "run",
        config: config.clone(),
        scenario: spec.clone(),
        ensemble: m,
        seed: config.seed,
        threads: config.threads,
        sampler: run.sampler,
        trajectories_averaged: acc.count(),
        blow_ups: acc.blow_ups(),
        wall_time_s: started.elapsed().as_secs_f64(),
        checks: verdicts,
        pass,
    };
    write_json(&dir, "manifest.json", &manifest)?;
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn reference_checks(
    s: &Scenario,
    acc: &crate::unraveling::EnsembleAccumulator,
    dir: &Path,
) -> Result<Vec<CheckVerdict>> {
    let Some(spec) = &s.spec.reference else {
        return Err(Error::Config(format!("scenario '{}' defines no reference oracle", s.spec.name)));
    };
    let sol = s.reference_solution()?.expect("reference section present");
    write_solution_csv(create(dir, "reference_rho.csv")?, &sol)?;
    check_reference(acc, spec, &sol)
}

#[derive(Debug, Serialize)]
struct KernelValidation {
    scenario: String,
    positivity: PositivityReport,
    samples: usize,
    grid_points: usize,
    sampler: &'static str,
    fidelity: FidelitySummary,
    fidelity_bound: f64,
    max_mean_z_score: f64,
    pass: bool,
}

fn cmd_validate_kernel(source: &Source, samples: usize, points: usize) -> Result<i32> {
    let (config, base) = load(source)?;
    if samples < 2 || points < 2 {
        return Err(Error::Config("need at least 2 samples and 2 grid points".into()));
    }
    let spec = config.resolve()?;
    let scenario = spec.build(&base)?;
    let (_, positivity) = check_positivity(&scenario)?;
    if !positivity.pass {
        return report_inadmissible(&positivity);
    }
    let grid = Arc::new(scenario.output_grid()?.subsample(points));
    let k = scenario.kernel();
    let sampler = NoiseSampler::new(k, &grid)?;
    let batches: Vec<(usize, usize)> = (0..samples).step_by(256).map(|s| (s, (s + 256).min(samples))).collect();
    let parts: Vec<Result<CorrelationAccumulator>> = batches
        .par_iter()
        .map(|&(lo, hi)| {
            let mut acc = CorrelationAccumulator::new(grid.clone(), k.n_channels());
            for i in lo..hi {
                acc.push(&sampler.sample(RngStreamSpec::new(config.seed, i as u64))?)?;
            }
            Ok(acc)
        })
        .collect();
    let mut acc = CorrelationAccumulator::new(grid.clone(), k.n_channels());
    for p in parts {
        acc.merge(&p?)?;
    }
    let emp = acc.finish()?;
    let fidelity = emp.compare_kernel(k, 4.0);
    let dir = out_dir(source, &config);
    write_correlations_csv(create(&dir, "correlations.csv")?, &emp, Some(k))?;
    let report = KernelValidation {
        scenario: spec.name.clone(),
        pass: fidelity.fraction_within >= FIDELITY_FRACTION,
        positivity,
        samples,
        grid_points: grid.len(),
        sampler: sampler.method(),
        fidelity,
        fidelity_bound: FIDELITY_FRACTION,
        max_mean_z_score: emp.max_mean_z_score(),
    };
    write_json(&dir, "validate.json", &report)?;
    print_json(&report)?;
    Ok(if report.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Serialize)]
struct InvarianceReport {
    scenario: String,
    unitary: MatrixSpec,
    realizations: usize,
    max_deviation: f64,
    bound: f64,
    pass: bool,
}

fn cmd_invariance(
    source: &Source,
    unitary_seed: u64,
    unitary: Option<&Path>,
    identity: bool,
    realizations: usize,
    bound: f64,
) -> Result<i32> {
    let (config, base) = load(source)?;
    let spec = config.resolve()?;
    let scenario = spec.build(&base)?;
    let sim = &scenario.simulation;
    let n = sim.kernel.n_channels();
    let u: CMat = if identity {
        linalg::identity(n)
    } else if let Some(path) = unitary {
        let text =
            fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str::<MatrixSpec>(&text).map_err(|e| Error::Config(e.to_string()))?.to_matrix()?
    } else {
        linalg::random_unitary(n, &mut rand_chacha::ChaCha8Rng::seed_from_u64(unitary_seed))
    };
    let sampler = NoiseSampler::new(&sim.kernel, &sim.integrator.noise_grid(&sim.kernel))?;
    let mut worst = 0.0f64;
    for i in 0..realizations.max(1) {
        let nr = sampler.sample(RngStreamSpec::new(config.seed, i as u64))?;
        worst = worst.max(invariance_check(sim, &nr, &u)?);
    }
    let report = InvarianceReport {
        scenario: spec.name.clone(),
        unitary: MatrixSpec::from_matrix(&u),
        realizations: realizations.max(1),
        max_deviation: worst,
        bound,
        pass: worst <= bound,
    };
    if let Some(dir) = source.out.clone().or(config.out.clone()) {
        write_json(&dir, "invariance.json", &report)?;
    }
    print_json(&report)?;
    Ok(if report.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

#[derive(Debug, Serialize)]
struct NovikovSummary {
    samples: usize,
    t: f64,
    bound: f64,
    combinations: usize,
    within_3_stderr: usize,
    max_z_score: f64,
    pass: bool,
    reports: Vec<NovikovReport>,
}

fn cmd_novikov(source: &Source, samples: usize, t: f64, bound: f64) -> Result<i32> {
    let seed = source.seed.unwrap_or(0);
    let (reports, out) = if source.config.is_some() || source.preset.is_some() {
        let (config, base) = load(source)?;
        let spec = config.resolve()?;
        let scenario = spec.build(&base)?;
        let mut reports = Vec::new();
        for (c, tf) in standard_functionals(t, 20)?.iter().enumerate() {
            let mut r = novikov_check(tf, scenario.kernel(), 0, t, samples, config.seed.wrapping_add(c as u64))?;
            r.kernel = spec.name.clone();
            reports.push(r);
        }
        (reports, source.out.clone().or(config.out))
    } else {
        (standard_batch(t, samples, seed)?, source.out.clone())
    };
    let max_z = reports.iter().map(|r| r.z_score).fold(0.0, f64::max);
    let summary = NovikovSummary {
        samples,
        t,
        bound,
        combinations: reports.len(),
        within_3_stderr: reports.iter().filter(|r| r.z_score <= 3.0).count(),
        max_z_score: max_z,
        pass: max_z <= bound,
        reports,
    };
    if let Some(dir) = out {
        write_json(&dir, "novikov.json", &summary)?;
    }
    print_json(&summary)?;
    Ok(if summary.pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn cmd_preset(action: PresetAction) -> Result<i32> {
    match action {
        PresetAction::List => {
            for name in PRESET_NAMES {
                println!("{name}");
            }
        }
        PresetAction::Export { name, out } => {
            let spec = preset(&name)?;
            let config = RunConfig {
                schema: SCHEMA_VERSION,
                ensemble: Some(spec.ensemble),
                scenario: ScenarioRef::Inline(Box::new(spec)),
                ..RunConfig::for_preset(&name)
            };
            let text = config.to_json()?;
            match out {
                Some(path) => {
                    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                        fs::create_dir_all(dir)?;
                    }
                    fs::write(path, text + "\n")?;
                }
                None => println!("{text}"),
            }
        }
    }
    Ok(EXIT_PASS)
}
