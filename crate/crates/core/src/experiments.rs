//! Synthetic data generation and the transmission-rate recovery studies.
//!
//! Every job seeds itself from the run seed and its own coordinates, so a
//! grid is the same whatever order (or thread) its cells run on.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{case_mask, rmse_beta, run_filter, FilterConfig, FilterError, InitialStatePrior, Record};
use crate::model::{simulate_trajectory, BkParams, DriverKind, ModelError, SihrParams, StateVector, Trajectory};
use crate::observation::ObservationModel;
use crate::presets;
use crate::rng::{derive_seed, label, StreamKey};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("grid is not a full cross product: {0}")]
    IncompleteGrid(String),
}

/// Every quantity needed to simulate a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub sihr: SihrParams<f64>,
    pub bk: BkParams<f64>,
    pub i0: f64,
    /// Initial hospitalised count.
    #[serde(default)]
    pub h0: f64,
    pub beta0: f64,
    pub observation: ObservationModel<f64>,
    pub substeps: usize,
}

impl Default for TrueParams {
    fn default() -> Self {
        Self {
            sihr: presets::sihr(),
            bk: presets::bk(),
            i0: presets::I0,
            h0: 0.0,
            beta0: presets::BETA0,
            observation: presets::observation(),
            substeps: presets::SUBSTEPS,
        }
    }
}

impl TrueParams {
    pub fn with_decorrelation(mut self, days: f64) -> Self {
        self.bk.lambda = 1.0 / days;
        self
    }

    pub fn initial_state(&self) -> StateVector<f64> {
        StateVector::with_population(self.sihr.n, self.i0, self.h0, 0.0, self.beta0.ln())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub true_params: TrueParams,
    pub t_end: usize,
    pub seed: u64,
    pub trajectory: Trajectory<f64>,
    /// `y_0..=y_T`, one count per trajectory point.
    pub observations: Vec<u64>,
}

impl SyntheticDataset {
    pub fn true_betas(&self) -> Vec<f64> {
        self.trajectory.betas()
    }
}

/// Simulates `t_end` days at unit spacing and samples one count per day
/// from the observation model at the latent `H_t`.
pub fn generate_synthetic(params: &TrueParams, t_end: usize, seed: u64) -> Result<SyntheticDataset, ExperimentError> {
    params.observation.validate()?;
    if !(params.i0 >= 0.0 && params.h0 >= 0.0 && params.i0 + params.h0 <= params.sihr.n) {
        return Err(ExperimentError::Config(format!(
            "i0 = {}, h0 = {} must be non-negative with i0 + h0 <= N",
            params.i0, params.h0
        )));
    }
    if !(params.beta0 > 0.0 && params.beta0.is_finite()) {
        return Err(ExperimentError::Config(format!("beta0 = {} must be positive", params.beta0)));
    }
    let trajectory = simulate_trajectory(
        &params.initial_state(),
        &params.sihr,
        &DriverKind::BlackKarasinski(params.bk),
        t_end as f64,
        1.0,
        params.substeps,
        seed,
    )?;
    let mut rng = StreamKey::new(seed, label::OBSERVE, 0).stream(0);
    let observations = trajectory
        .states
        .iter()
        .map(|s| params.observation.sample(s.h, &mut rng))
        .collect();
    Ok(SyntheticDataset { true_params: *params, t_end, seed, trajectory, observations })
}

/// Settings shared by the recovery experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Truth apart from the decorrelation time, which each job sets.
    pub truth: TrueParams,
    pub t_end: usize,
    pub filter: FilterConfig<f64>,
    /// Particle initialisation used by the filter.
    pub initial: InitialStatePrior<f64>,
    /// Minimum observed count for a time point to enter the masked RMSE.
    pub mask_threshold: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truth: TrueParams::default(),
            t_end: presets::T,
            filter: FilterConfig { particles: 300, ..FilterConfig::default() },
            initial: presets::initial_prior(),
            mask_threshold: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub true_days: f64,
    pub filter_days: f64,
    pub replicate: usize,
    /// RMSE of the filtered median `beta_t` over every time point. Infinite
    /// when the filter lost every particle.
    pub rmse: f64,
    /// Same over time points with at least the threshold count observed;
    /// `None` when no point qualifies.
    pub rmse_masked: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RmseGrid {
    pub rows: Vec<RmseRow>,
}

impl RmseGrid {
    /// Unmasked RMSE values of the rows with `true_days == filter_days == days`.
    pub fn matched(&self, days: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.true_days == days && r.filter_days == days)
            .map(|r| r.rmse)
            .collect()
    }
}

fn dataset_seed(seed: u64, true_days: f64, replicate: usize) -> u64 {
    derive_seed(seed, &[label::DATASET, true_days.to_bits(), replicate as u64])
}

/// Every filter setting applied to one dataset uses the same filter seed.
fn filter_seed(seed: u64, true_days: f64, replicate: usize) -> u64 {
    derive_seed(seed, &[label::FILTER, true_days.to_bits(), replicate as u64])
}

fn check_days(set: &[f64], what: &str) -> Result<(), ExperimentError> {
    if set.is_empty() {
        return Err(ExperimentError::Config(format!("{what} is empty")));
    }
    if let Some(d) = set.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(ExperimentError::Config(format!("{what} contains {d}; decorrelation times must be positive")));
    }
    Ok(())
}

fn filter_job(
    data: &SyntheticDataset,
    true_days: f64,
    filter_days: f64,
    replicate: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RmseRow, ExperimentError> {
    let truth = data.true_params.with_decorrelation(filter_days);
    let model = crate::filter::StateSpaceModel {
        sihr: truth.sihr,
        driver: DriverKind::BlackKarasinski(truth.bk),
        observation: truth.observation,
        initial: config.initial,
    };
    // jobs already run in parallel
    let filter = FilterConfig { record: Record::Bands, parallel: false, substeps: truth.substeps, ..config.filter };
    let result = run_filter(&data.observations, &model, &filter, seed)?;
    let (rmse, rmse_masked) = if result.is_degenerate() {
        (f64::INFINITY, Some(f64::INFINITY))
    } else {
        let truth = data.true_betas();
        let full = rmse_beta(&result, &truth, &vec![true; truth.len()])?;
        let masked = match rmse_beta(&result, &truth, &case_mask(&data.observations, config.mask_threshold)) {
            Ok(v) => Some(v),
            Err(FilterError::EmptyMask) => None,
            Err(e) => return Err(e.into()),
        };
        (full, masked)
    };
    Ok(RmseRow { true_days, filter_days, replicate, rmse, rmse_masked })
}

fn datasets(
    true_set: &[f64],
    replicates: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(f64, usize, SyntheticDataset)>, ExperimentError> {
    let cells: Vec<(f64, usize)> = true_set
        .iter()
        .flat_map(|&d| (0..replicates).map(move |r| (d, r)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, r)| {
            let truth = config.truth.with_decorrelation(d);
            generate_synthetic(&truth, config.t_end, dataset_seed(seed, d, r)).map(|ds| (d, r, ds))
        })
        .collect()
}

/// Filters each of `replicates` datasets per decorrelation time at the
/// true parameters.
pub fn experiment_decorrelation(
    decorrelation_days: &[f64],
    replicates: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RmseGrid, ExperimentError> {
    check_days(decorrelation_days, "decorrelation set")?;
    if replicates == 0 {
        return Err(ExperimentError::Config("replicates must be at least 1".into()));
    }
    let data = datasets(decorrelation_days, replicates, config, seed)?;
    let rows = data
        .par_iter()
        .map(|(d, r, ds)| filter_job(ds, *d, *d, *r, config, filter_seed(seed, *d, *r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RmseGrid { rows })
}

/// Filters every dataset once per filter decorrelation time, holding the
/// other parameters at their true values.
pub fn experiment_misspecification(
    true_set: &[f64],
    filter_set: &[f64],
    replicates: usize,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RmseGrid, ExperimentError> {
    check_days(true_set, "true decorrelation set")?;
    check_days(filter_set, "filter decorrelation set")?;
    if replicates == 0 {
        return Err(ExperimentError::Config("replicates must be at least 1".into()));
    }
    let data = datasets(true_set, replicates, config, seed)?;
    let jobs: Vec<(&SyntheticDataset, f64, f64, usize)> = data
        .iter()
        .flat_map(|(d, r, ds)| filter_set.iter().map(move |&f| (ds, *d, f, *r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(ds, d, f, r)| filter_job(ds, d, f, r, config, filter_seed(seed, d, r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RmseGrid { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanRank {
    pub filter_days: f64,
    pub mean_rank: f64,
    /// Cells that entered the average.
    pub cells: usize,
}

/// Average ranks (1 = best) of `values`; ties share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[k]] {
            j += 1;
        }
        let rank = (k + j) as f64 / 2.0 + 1.0;
        for &idx in &order[k..=j] {
            ranks[idx] = rank;
        }
        k = j + 1;
    }
    ranks
}

/// Ranks filter settings by masked RMSE within each (true decorrelation,
/// replicate) cell and averages per filter setting. Cells whose mask is
/// empty are skipped. Output is sorted by `filter_days`.
pub fn rank_aggregate(grid: &RmseGrid) -> Result<Vec<MeanRank>, ExperimentError> {
    let key = |x: f64| x.to_bits();
    let mut filters: Vec<f64> = grid.rows.iter().map(|r| r.filter_days).collect();
    filters.sort_by(f64::total_cmp);
    filters.dedup();
    let mut cells: BTreeMap<(u64, usize), BTreeMap<u64, Option<f64>>> = BTreeMap::new();
    for row in &grid.rows {
        let cell = cells.entry((key(row.true_days), row.replicate)).or_default();
        if cell.insert(key(row.filter_days), row.rmse_masked).is_some() {
            return Err(ExperimentError::IncompleteGrid(format!(
                "duplicate row for true {} / filter {} / replicate {}",
                row.true_days, row.filter_days, row.replicate
            )));
        }
    }
    if cells.is_empty() {
        return Err(ExperimentError::IncompleteGrid("grid has no rows".into()));
    }
    let trues: std::collections::BTreeSet<u64> = cells.keys().map(|k| k.0).collect();
    let reps: std::collections::BTreeSet<usize> = cells.keys().map(|k| k.1).collect();
    if cells.len() != trues.len() * reps.len() {
        return Err(ExperimentError::IncompleteGrid("some (true, replicate) cells are missing".into()));
    }
    let mut sums = vec![0.0; filters.len()];
    let mut used = 0;
    for ((t, r), cell) in &cells {
        if cell.len() != filters.len() {
            return Err(ExperimentError::IncompleteGrid(format!(
                "cell true {} / replicate {r} has {} of {} filter settings",
                f64::from_bits(*t),
                cell.len(),
                filters.len()
            )));
        }
        let values: Option<Vec<f64>> = filters.iter().map(|f| cell[&key(*f)]).collect();
        let Some(values) = values else { continue };
        for (s, rank) in sums.iter_mut().zip(average_ranks(&values)) {
            *s += rank;
        }
        used += 1;
    }
    if used == 0 {
        return Err(ExperimentError::IncompleteGrid("no cell has a non-empty mask".into()));
    }
    Ok(filters
        .into_iter()
        .zip(sums)
        .map(|(filter_days, s)| MeanRank { filter_days, mean_rank: s / used as f64, cells: used })
        .collect())
}
