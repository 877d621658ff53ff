//! Result files and the manifest that fingerprints them.
//!
//! Floats are written with 17 significant digits so every value reads back
//! to the same bits.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{Format, RunConfig};
use crate::experiments::{MeanRank, RmseGrid};
use crate::filter::{Coordinate, FilterResult};
use crate::model::Trajectory;
use crate::pmcmc::{chain_summary, Chain, Param, ParamVector};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("chain has no draws")]
    EmptyChain,
    #[error("{0}")]
    Summary(String),
}

/// `x` in scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, OutputError> {
    csv::Writer::from_path(path).map_err(|e| OutputError::Csv { path: path.to_path_buf(), message: e.to_string() })
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<(), OutputError> {
    w.flush().map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

fn rows<I, R>(path: &Path, header: &[&str], records: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_err = |e: csv::Error| OutputError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(r.into_iter().collect::<Vec<_>>()).map_err(csv_err)?;
    }
    finish(w, path)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    std::fs::write(path, text).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

fn chain_params(chain: &Chain) -> Vec<Param> {
    Param::ALL.into_iter().filter(|&p| chain.draws[0].get(p).is_some()).collect()
}

/// `iteration, <parameters>, log_post, log_likelihood, accepted`, one row per iteration.
pub fn write_chain_csv(path: &Path, chain: &Chain) -> Result<(), OutputError> {
    if chain.is_empty() {
        return Err(OutputError::EmptyChain);
    }
    let params = chain_params(chain);
    let mut header = vec!["iteration"];
    header.extend(params.iter().map(|p| p.name()));
    header.extend(["log_post", "log_likelihood", "accepted"]);
    let records = (0..chain.len()).map(|k| {
        let mut r = vec![(k + 1).to_string()];
        r.extend(params.iter().map(|&p| fmt_f64(chain.draws[k].get(p).expect("present"))));
        r.push(fmt_f64(chain.log_posts[k]));
        r.push(fmt_f64(chain.log_likelihoods[k]));
        r.push(u8::from(chain.accepted[k]).to_string());
        r
    });
    rows(path, &header, records)
}

/// Reads a file written by [`write_chain_csv`]. Only the draws, values and
/// acceptance flags are recovered.
pub fn read_chain_csv(path: &Path) -> Result<Chain, OutputError> {
    let csv_err = |m: String| OutputError::Csv { path: path.to_path_buf(), message: m };
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let headers = r.headers().map_err(|e| csv_err(e.to_string()))?.clone();
    let idx = |name: &str| headers.iter().position(|h| h == name);
    let params: Vec<(Param, usize)> = Param::ALL.into_iter().filter_map(|p| idx(p.name()).map(|i| (p, i))).collect();
    let need = |name: &str| idx(name).ok_or_else(|| csv_err(format!("missing column `{name}`")));
    let (lp, ll, acc) = (need("log_post")?, need("log_likelihood")?, need("accepted")?);
    for p in [Param::Eta, Param::Lambda, Param::Mu, Param::Sigma] {
        need(p.name())?;
    }
    let num = |rec: &csv::StringRecord, i: usize| -> Result<f64, OutputError> {
        rec.get(i)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| csv_err(format!("bad number in column {}", headers.get(i).unwrap_or("?"))))
    };
    let mut chain = Chain {
        free: Vec::new(),
        initial: ParamVector { eta: 0.0, lambda: 0.0, mu: 0.0, sigma: 0.0, phi: None },
        initial_log_post: f64::NAN,
        draws: Vec::new(),
        log_posts: Vec::new(),
        log_likelihoods: Vec::new(),
        accepted: Vec::new(),
        proposal_cov_history: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let mut theta = chain.initial;
        for &(p, i) in &params {
            theta.set(p, num(&rec, i)?);
        }
        chain.draws.push(theta);
        chain.log_posts.push(num(&rec, lp)?);
        chain.log_likelihoods.push(num(&rec, ll)?);
        chain.accepted.push(rec.get(acc) == Some("1"));
    }
    if chain.is_empty() {
        return Err(OutputError::EmptyChain);
    }
    chain.initial = chain.draws[0];
    Ok(chain)
}

/// Long format: `t, coordinate, q05, q50, q95`.
pub fn write_bands_csv(path: &Path, result: &FilterResult<f64>) -> Result<(), OutputError> {
    let records = result.bands.iter().enumerate().flat_map(|(t, b)| {
        Coordinate::ALL.into_iter().map(move |c| {
            let i = c.index();
            vec![t.to_string(), c.name().to_string(), fmt_f64(b.q05[i]), fmt_f64(b.q50[i]), fmt_f64(b.q95[i])]
        })
    });
    rows(path, &["t", "coordinate", "q05", "q50", "q95"], records)
}

/// `t, S, I, H, R, beta`.
pub fn write_trajectory_csv(path: &Path, trajectory: &Trajectory<f64>) -> Result<(), OutputError> {
    let records = trajectory.times().zip(&trajectory.states).map(|(t, s)| {
        vec![fmt_f64(t), fmt_f64(s.s), fmt_f64(s.i), fmt_f64(s.h), fmt_f64(s.r), fmt_f64(s.beta())]
    });
    rows(path, &["t", "S", "I", "H", "R", "beta"], records)
}

/// `true_days, filter_days, replicate, rmse, rmse_masked` (empty when the mask selects nothing).
pub fn write_grid_csv(path: &Path, grid: &RmseGrid) -> Result<(), OutputError> {
    let records = grid.rows.iter().map(|r| {
        vec![
            fmt_f64(r.true_days),
            fmt_f64(r.filter_days),
            r.replicate.to_string(),
            fmt_f64(r.rmse),
            r.rmse_masked.map(fmt_f64).unwrap_or_default(),
        ]
    });
    rows(path, &["true_days", "filter_days", "replicate", "rmse", "rmse_masked"], records)
}

/// `filter_days, mean_rank, cells`.
pub fn write_ranks_csv(path: &Path, ranks: &[MeanRank]) -> Result<(), OutputError> {
    let records = ranks
        .iter()
        .map(|r| vec![fmt_f64(r.filter_days), fmt_f64(r.mean_rank), r.cells.to_string()]);
    rows(path, &["filter_days", "mean_rank", "cells"], records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// File name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String, OutputError> {
    let bytes = std::fs::read(path).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes `files` (names inside `dir`) and writes `manifest.json`.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    seed: u64,
    files: &[&str],
) -> Result<Manifest, OutputError> {
    let mut hashes = BTreeMap::new();
    for f in files {
        hashes.insert(f.to_string(), sha256_file(&dir.join(f))?);
    }
    let manifest = Manifest { command: command.to_string(), seed, config: config.clone(), files: hashes };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn create_dir(dir: &Path) -> Result<(), OutputError> {
    std::fs::create_dir_all(dir).map_err(|source| OutputError::Io { path: dir.to_path_buf(), source })
}

/// Writes the chain, its summary (discarding `config.sampler.burn_in`
/// draws), the filtered bands and the manifest into `dir`.
pub fn write_outputs(
    chain: &Chain,
    filter: &FilterResult<f64>,
    dir: &Path,
    config: &RunConfig,
    seed: u64,
) -> Result<Manifest, OutputError> {
    if chain.is_empty() {
        return Err(OutputError::EmptyChain);
    }
    create_dir(dir)?;
    let mut files = Vec::new();
    if config.output.formats.contains(&Format::Csv) {
        write_chain_csv(&dir.join("chain.csv"), chain)?;
        write_bands_csv(&dir.join("bands.csv"), filter)?;
        files.extend(["chain.csv", "bands.csv"]);
    }
    if config.output.formats.contains(&Format::Json) {
        let discard = config.sampler.burn_in.min(chain.len() - 1);
        let summary = chain_summary(chain, discard).map_err(OutputError::Summary)?;
        write_json(&dir.join("summary.json"), &summary)?;
        files.push("summary.json");
    }
    write_manifest(dir, "fit", config, seed, &files)
}
