//! Run configuration: one TOML file describing model, priors, sampler,
//! data source, output and experiment grids.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ExperimentConfig, TrueParams};
use crate::filter::{FilterConfig, InitialStatePrior, Record, Resampling, StateSpaceModel};
use crate::model::{BkParams, DriverKind, SihrParams};
use crate::observation::ObservationModel;
use crate::pmcmc::{ChainConfig, Likelihood, ModelTemplate, PriorSet};
use crate::presets;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub n: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Hospital recovery rate used by `simulate` and `filter`.
    pub eta: f64,
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub driver: DriverKind<f64>,
    pub observation: ObservationModel<f64>,
    pub initial: InitialStatePrior<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_substeps() -> usize {
    presets::SUBSTEPS
}

impl ModelBlock {
    pub fn sihr(&self) -> SihrParams<f64> {
        SihrParams { n: self.n, alpha: self.alpha, gamma: self.gamma, eta: self.eta }
    }

    pub fn state_space(&self) -> StateSpaceModel<f64> {
        StateSpaceModel { sihr: self.sihr(), driver: self.driver, observation: self.observation, initial: self.initial }
    }

    pub fn bk(&self) -> Option<BkParams<f64>> {
        match self.driver {
            DriverKind::BlackKarasinski(bk) => Some(bk),
            _ => None,
        }
    }

    pub fn likelihood(&self) -> Likelihood {
        match self.observation {
            ObservationModel::Poisson => Likelihood::Poisson,
            ObservationModel::NegativeBinomial { .. } => Likelihood::NegativeBinomial,
        }
    }

    pub fn template(&self) -> ModelTemplate {
        ModelTemplate {
            n: self.n,
            alpha: self.alpha,
            gamma: self.gamma,
            likelihood: self.likelihood(),
            initial: self.initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerBlock {
    pub iterations: usize,
    pub burn_in: usize,
    pub particles: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub parallel: bool,
    #[serde(default = "always")]
    pub resampling: Resampling<f64>,
}

fn yes() -> bool {
    true
}

fn always() -> Resampling<f64> {
    Resampling::Always
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBlock {
    pub t_end: usize,
    pub i0: f64,
    #[serde(default)]
    pub h0: f64,
    pub beta0: f64,
    /// Date assigned to `t = 0` when the series is written out.
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    /// Dataset seed; the sampler seed is used when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    /// CSV file; relative paths resolve against the config file's directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_date_column")]
    pub date_column: String,
    #[serde(default = "default_count_column")]
    pub count_column: String,
    #[serde(default)]
    pub region_column: Option<String>,
    #[serde(default)]
    pub region: Option<String>,
    #[serde(default)]
    pub start: Option<NaiveDate>,
    #[serde(default)]
    pub end: Option<NaiveDate>,
    #[serde(default)]
    pub synthetic: Option<SyntheticBlock>,
}

fn default_date_column() -> String {
    "date".into()
}

fn default_count_column() -> String {
    "count".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: default_out(), formats: default_formats() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default = "default_decorrelation")]
    pub decorrelation_days: Vec<f64>,
    #[serde(default = "presets::decorrelation_grid")]
    pub true_days: Vec<f64>,
    #[serde(default = "presets::decorrelation_grid")]
    pub filter_days: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_t_end")]
    pub t_end: usize,
    /// Initial infected count and transmission rate of the simulated truth.
    #[serde(default = "default_i0")]
    pub i0: f64,
    #[serde(default = "default_beta0")]
    pub beta0: f64,
    #[serde(default = "default_threshold")]
    pub mask_threshold: u64,
}

fn default_decorrelation() -> Vec<f64> {
    vec![7.0, 35.0, 98.0]
}
fn default_replicates() -> usize {
    10
}
fn default_t_end() -> usize {
    presets::T
}
fn default_i0() -> f64 {
    presets::I0
}
fn default_beta0() -> f64 {
    presets::BETA0
}
fn default_threshold() -> u64 {
    5
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            decorrelation_days: default_decorrelation(),
            true_days: presets::decorrelation_grid(),
            filter_days: presets::decorrelation_grid(),
            replicates: default_replicates(),
            t_end: default_t_end(),
            i0: default_i0(),
            beta0: default_beta0(),
            mask_threshold: default_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub priors: Option<PriorSet>,
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub data: Option<DataBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub experiment: Option<ExperimentBlock>,
}

fn finite_positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive finite number, got {x}")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new(""));
        if let Some(data) = config.data.as_mut() {
            if let Some(p) = data.path.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Checks every numeric field against the invariants of the types it feeds.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        finite_positive("model.n", m.n)?;
        finite_positive("model.dt", m.dt)?;
        if m.substeps == 0 {
            return Err(invalid("model.substeps", "must be at least 1"));
        }
        m.sihr().validate().map_err(|e| model_error("model", e))?;
        m.driver.validate().map_err(|e| model_error("model.driver", e))?;
        m.observation.validate().map_err(|e| model_error("model.observation", e))?;
        m.initial
            .validate(m.n, &m.driver)
            .map_err(|e| invalid("model.initial", e.to_string()))?;

        let s = &self.sampler;
        if s.particles < 2 {
            return Err(invalid("sampler.particles", format!("need at least 2, got {}", s.particles)));
        }
        if s.burn_in < 1 {
            return Err(invalid("sampler.burn_in", "must be at least 1"));
        }
        if s.iterations <= s.burn_in {
            return Err(invalid(
                "sampler.iterations",
                format!("must exceed sampler.burn_in = {}, got {}", s.burn_in, s.iterations),
            ));
        }
        if let Resampling::EssBelow { fraction } = s.resampling {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(invalid("sampler.resampling.fraction", format!("must lie in (0, 1], got {fraction}")));
            }
        }

        if let Some(p) = &self.priors {
            for param in p.present() {
                let prior = p.get(param).expect("present");
                prior
                    .validate()
                    .map_err(|e| invalid(&format!("priors.{}", param.name()), e))?;
            }
            match (m.likelihood(), p.phi.is_some()) {
                (Likelihood::NegativeBinomial, false) => {
                    return Err(invalid("priors.phi", "required by the negative-binomial likelihood"))
                }
                (Likelihood::Poisson, true) => return Err(invalid("priors.phi", "not used by the Poisson likelihood")),
                _ => {}
            }
        }

        if let Some(d) = &self.data {
            match (&d.path, &d.synthetic) {
                (Some(_), Some(_)) => return Err(invalid("data", "give either `path` or `synthetic`, not both")),
                (None, None) => return Err(invalid("data", "needs `path` or a `synthetic` table")),
                (Some(p), None) => {
                    if !p.is_file() {
                        return Err(invalid("data.path", format!("file not found: {}", p.display())));
                    }
                }
                (None, Some(syn)) => {
                    if syn.t_end == 0 {
                        return Err(invalid("data.synthetic.t_end", "must be at least 1"));
                    }
                    if !(syn.i0 >= 0.0 && syn.i0 <= m.n) {
                        return Err(invalid("data.synthetic.i0", format!("must lie in [0, model.n], got {}", syn.i0)));
                    }
                    if !(syn.h0 >= 0.0 && syn.i0 + syn.h0 <= m.n) {
                        return Err(invalid("data.synthetic.h0", format!("must be non-negative with i0 + h0 <= model.n, got {}", syn.h0)));
                    }
                    finite_positive("data.synthetic.beta0", syn.beta0)?;
                }
            }
            if let (Some(a), Some(b)) = (d.start, d.end) {
                if a > b {
                    return Err(invalid("data.end", format!("{b} precedes data.start {a}")));
                }
            }
            if d.region.is_some() && d.region_column.is_none() {
                return Err(invalid("data.region_column", "required when data.region is set"));
            }
        }

        if self.output.formats.is_empty() {
            return Err(invalid("output.formats", "list at least one format"));
        }

        if let Some(e) = &self.experiment {
            for (field, set) in [
                ("experiment.decorrelation_days", &e.decorrelation_days),
                ("experiment.true_days", &e.true_days),
                ("experiment.filter_days", &e.filter_days),
            ] {
                if set.is_empty() {
                    return Err(invalid(field, "must not be empty"));
                }
                if let Some(d) = set.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
                    return Err(invalid(field, format!("decorrelation times must be positive, got {d}")));
                }
            }
            if e.replicates == 0 {
                return Err(invalid("experiment.replicates", "must be at least 1"));
            }
            if e.t_end == 0 {
                return Err(invalid("experiment.t_end", "must be at least 1"));
            }
            if !(e.i0 >= 0.0 && e.i0 <= m.n) {
                return Err(invalid("experiment.i0", format!("must lie in [0, model.n], got {}", e.i0)));
            }
            finite_positive("experiment.beta0", e.beta0)?;
        }
        Ok(())
    }

    pub fn filter_config(&self, record: Record) -> FilterConfig<f64> {
        FilterConfig {
            particles: self.sampler.particles,
            dt: self.model.dt,
            substeps: self.model.substeps,
            resampling: self.sampler.resampling,
            record,
            parallel: self.sampler.parallel,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            iterations: self.sampler.iterations,
            burn_in: self.sampler.burn_in,
            filter: self.filter_config(Record::LikelihoodOnly),
        }
    }

    /// Truth for simulation: requires the Black-Karasinski driver.
    pub fn true_params(&self, i0: f64, h0: f64, beta0: f64) -> Result<TrueParams, ConfigError> {
        let bk = self
            .model
            .bk()
            .ok_or_else(|| invalid("model.driver.kind", "simulation needs black_karasinski"))?;
        Ok(TrueParams {
            sihr: self.model.sihr(),
            bk,
            i0,
            h0,
            beta0,
            observation: self.model.observation,
            substeps: self.model.substeps,
        })
    }

    pub fn experiment_config(&self) -> Result<(ExperimentBlock, ExperimentConfig), ConfigError> {
        let block = self.experiment.clone().unwrap_or_default();
        if self.model.dt != 1.0 {
            return Err(invalid("model.dt", "experiments use daily steps (dt = 1)"));
        }
        let config = ExperimentConfig {
            truth: self.true_params(block.i0, 0.0, block.beta0)?,
            t_end: block.t_end,
            filter: self.filter_config(Record::Bands),
            initial: self.model.initial,
            mask_threshold: block.mask_threshold,
        };
        Ok((block, config))
    }

    pub fn require_priors(&self) -> Result<&PriorSet, ConfigError> {
        self.priors.as_ref().ok_or_else(|| invalid("priors", "the `fit` command needs a [priors] table"))
    }

    pub fn require_data(&self) -> Result<&DataBlock, ConfigError> {
        self.data.as_ref().ok_or_else(|| invalid("data", "this command needs a [data] table"))
    }
}

fn model_error(prefix: &str, e: crate::model::ModelError) -> ConfigError {
    match e {
        crate::model::ModelError::InvalidParameter { name, value, constraint } => {
            invalid(&format!("{prefix}.{name}"), format!("{value} violates {constraint}"))
        }
        other => invalid(prefix, other.to_string()),
    }
}
