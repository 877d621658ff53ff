//! Command-line entry point.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::experiments::{experiment_decorrelation, experiment_misspecification, generate_synthetic, rank_aggregate};
use crate::filter::{run_filter, Record};
use crate::io::{
    self, load_series, read_chain_csv, write_bands_csv, write_grid_csv, write_json, write_manifest, write_outputs,
    write_ranks_csv, write_series, write_trajectory_csv, ConfigError, DataBlock, Format, HospitalizationSeries,
    OutputError, RunConfig, SeriesError, SeriesQuery,
};
use crate::pmcmc::{chain_summary, run_chain, ChainError};
use crate::rng::{derive_seed, label};

/// Environment variable overriding `output.dir`.
pub const OUT_DIR_ENV: &str = "BKSIHR_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "bksihr", version, about = "Stochastic SIHR model with a Black-Karasinski transmission rate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `sampler.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the environment and `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `sampler.particles`.
    #[arg(long)]
    np: Option<usize>,
    /// Overrides `sampler.iterations`. When not above `sampler.burn_in`,
    /// the burn-in shrinks to a tenth of the iterations.
    #[arg(long)]
    iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a synthetic dataset from `[data.synthetic]`.
    Simulate(Common),
    /// Run the particle filter at the parameters in `[model]`.
    Filter(Common),
    /// Run the pMCMC sampler, then filter at the posterior mean.
    Fit(Common),
    /// Transmission-rate recovery studies.
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
    /// Summarise `chain.csv` in the output directory.
    Summarize(Common),
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// RMSE of the recovered transmission rate across decorrelation times.
    Decorrelation(Common),
    /// RMSE when the filter's decorrelation time differs from the truth.
    Misspec(Common),
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Series(_) | CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::Config(_) | ChainError::Initialization { .. } => CliError::Invalid(e.to_string()),
            ChainError::Filter(_) => CliError::Runtime(e.to_string()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

struct Run {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
}

fn prepare(common: &Common) -> Result<Run, CliError> {
    let mut config = RunConfig::load(&common.config)?;
    if let Some(np) = common.np {
        config.sampler.particles = np;
    }
    if let Some(m) = common.iters {
        config.sampler.iterations = m;
        if m <= config.sampler.burn_in {
            let burn_in = (m / 10).max(1);
            eprintln!("note: burn-in reduced from {} to {burn_in} for {m} iterations", config.sampler.burn_in);
            config.sampler.burn_in = burn_in;
        }
    }
    if let Some(seed) = common.seed {
        config.sampler.seed = seed;
        if let Some(syn) = config.data.as_mut().and_then(|d| d.synthetic.as_mut()) {
            syn.seed = None;
        }
    }
    config.validate()?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.output.dir.clone());
    config.output.dir = out.clone();
    let seed = config.sampler.seed;
    Ok(Run { config, seed, out })
}

/// Observed series from `[data]`: a CSV file or an in-memory simulation.
fn observations(config: &RunConfig, seed: u64) -> Result<HospitalizationSeries, CliError> {
    let data: &DataBlock = config.require_data()?;
    if let Some(path) = &data.path {
        let query = SeriesQuery {
            date_column: &data.date_column,
            count_column: &data.count_column,
            region_column: data.region_column.as_deref(),
            region: data.region.as_deref(),
            start: data.start,
            end: data.end,
        };
        return Ok(load_series(path, &query)?);
    }
    let syn = data.synthetic.as_ref().expect("validated");
    let truth = config.true_params(syn.i0, syn.h0, syn.beta0)?;
    let ds = generate_synthetic(&truth, syn.t_end, syn.seed.unwrap_or(seed)).map_err(runtime)?;
    Ok(HospitalizationSeries::daily("synthetic", syn.start_date, ds.observations))
}

fn simulate(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let data = config.require_data()?;
    let syn = data
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Invalid("invalid `data.synthetic`: `simulate` needs a [data.synthetic] table".into()))?;
    let truth = config.true_params(syn.i0, syn.h0, syn.beta0)?;
    let seed = syn.seed.unwrap_or(run.seed);
    let ds = generate_synthetic(&truth, syn.t_end, seed).map_err(runtime)?;
    io::create_dir(&run.out)?;
    let series = HospitalizationSeries::daily("synthetic", syn.start_date, ds.observations.clone());
    let mut files = Vec::new();
    if config.output.formats.contains(&Format::Csv) {
        write_trajectory_csv(&run.out.join("trajectory.csv"), &ds.trajectory)?;
        write_series(&run.out.join("observations.csv"), &series).map_err(runtime)?;
        files.extend(["trajectory.csv", "observations.csv"]);
    }
    if config.output.formats.contains(&Format::Json) {
        write_json(&run.out.join("dataset.json"), &ds)?;
        files.push("dataset.json");
    }
    write_manifest(&run.out, "simulate", config, run.seed, &files)?;
    println!("simulated {} days into {}", syn.t_end, run.out.display());
    Ok(())
}

#[derive(serde::Serialize)]
struct FilterReport<'a> {
    log_likelihood: f64,
    degenerate_at: Option<usize>,
    increments: &'a [f64],
    ess: &'a [f64],
}

fn filter(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let series = observations(config, run.seed)?;
    let model = config.model.state_space();
    let result = run_filter(&series.counts, &model, &config.filter_config(Record::Bands), run.seed).map_err(runtime)?;
    io::create_dir(&run.out)?;
    let mut files = Vec::new();
    if config.output.formats.contains(&Format::Csv) {
        write_bands_csv(&run.out.join("bands.csv"), &result)?;
        files.push("bands.csv");
    }
    if config.output.formats.contains(&Format::Json) {
        let report = FilterReport {
            log_likelihood: result.log_likelihood,
            degenerate_at: result.degenerate_at,
            increments: &result.increments,
            ess: &result.ess,
        };
        write_json(&run.out.join("filter.json"), &report)?;
        files.push("filter.json");
    }
    write_manifest(&run.out, "filter", config, run.seed, &files)?;
    println!("log-likelihood {}", result.log_likelihood);
    Ok(())
}

fn fit(run: &Run) -> Result<(), CliError> {
    let config = &run.config;
    let priors = config.require_priors()?;
    let series = observations(config, run.seed)?;
    let template = config.model.template();
    let chain = run_chain(&series.counts, priors, &template, &config.chain_config(), run.seed)?;
    let mean = chain.posterior_mean(config.sampler.burn_in);
    let model = template.model_for(&mean).map_err(runtime)?;
    let result = run_filter(
        &series.counts,
        &model,
        &config.filter_config(Record::Bands),
        derive_seed(run.seed, &[label::FILTER, 0]),
    )
    .map_err(runtime)?;
    write_outputs(&chain, &result, &run.out, config, run.seed)?;
    println!(
        "{} iterations, acceptance rate {:.3}, outputs in {}",
        chain.len(),
        chain.acceptance_rate(),
        run.out.display()
    );
    Ok(())
}

fn experiment(run: &Run, misspec: bool) -> Result<(), CliError> {
    let config = &run.config;
    let (block, ex) = config.experiment_config()?;
    io::create_dir(&run.out)?;
    if misspec {
        let grid = experiment_misspecification(&block.true_days, &block.filter_days, block.replicates, &ex, run.seed)
            .map_err(runtime)?;
        let ranks = rank_aggregate(&grid).map_err(runtime)?;
        write_grid_csv(&run.out.join("rmse_grid.csv"), &grid)?;
        write_ranks_csv(&run.out.join("ranks.csv"), &ranks)?;
        write_manifest(&run.out, "experiment misspec", config, run.seed, &["rmse_grid.csv", "ranks.csv"])?;
    } else {
        let grid =
            experiment_decorrelation(&block.decorrelation_days, block.replicates, &ex, run.seed).map_err(runtime)?;
        write_grid_csv(&run.out.join("rmse_grid.csv"), &grid)?;
        write_manifest(&run.out, "experiment decorrelation", config, run.seed, &["rmse_grid.csv"])?;
    }
    println!("grid written to {}", run.out.display());
    Ok(())
}

fn summarize(run: &Run) -> Result<(), CliError> {
    let path = run.out.join("chain.csv");
    let chain = read_chain_csv(&path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let discard = run.config.sampler.burn_in.min(chain.len() - 1);
    let summary = chain_summary(&chain, discard).map_err(CliError::Invalid)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("serialisable"));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(c) => simulate(&prepare(c)?),
        Command::Filter(c) => filter(&prepare(c)?),
        Command::Fit(c) => fit(&prepare(c)?),
        Command::Experiment { which: ExperimentCommand::Decorrelation(c) } => experiment(&prepare(c)?, false),
        Command::Experiment { which: ExperimentCommand::Misspec(c) } => experiment(&prepare(c)?, true),
        Command::Summarize(c) => summarize(&prepare(c)?),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status: 0 on success, 1 on usage or
/// validation errors, 2 on runtime failures.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Default output location for a config, after the environment override.
pub fn default_out_dir(config: &RunConfig) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| config.output.dir.clone())
}

