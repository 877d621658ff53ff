//! Daily hospitalisation count series in CSV form.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path} line {line}: count `{value}` is not a non-negative integer")]
    NonInteger { path: PathBuf, line: u64, value: String },
    #[error("{path} line {line}: `{value}` is not an ISO-8601 date")]
    BadDate { path: PathBuf, line: u64, value: String },
    #[error("{path}: date {date} does not follow {previous}")]
    NotIncreasing { path: PathBuf, date: NaiveDate, previous: NaiveDate },
    #[error("{path}: gap in daily dates, {missing} is missing")]
    Gap { path: PathBuf, missing: NaiveDate },
    #[error("{path}: rows carry several regions ({first}, {other}); select one")]
    MixedRegions { path: PathBuf, first: String, other: String },
    #[error("{path}: selection contains no rows")]
    EmptySelection { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HospitalizationSeries {
    pub region: String,
    pub dates: Vec<NaiveDate>,
    pub counts: Vec<u64>,
}

impl HospitalizationSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Consecutive daily dates from `start`.
    pub fn daily(region: &str, start: NaiveDate, counts: Vec<u64>) -> Self {
        let dates = start.iter_days().take(counts.len()).collect();
        Self { region: region.to_string(), dates, counts }
    }
}

/// What to read from a CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesQuery<'a> {
    pub date_column: &'a str,
    pub count_column: &'a str,
    /// Column holding the region label. When absent, a `region` column is
    /// used if the file has one.
    pub region_column: Option<&'a str>,
    /// Keep only rows with this label.
    pub region: Option<&'a str>,
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
}

impl Default for SeriesQuery<'_> {
    fn default() -> Self {
        Self { date_column: "date", count_column: "count", region_column: None, region: None, start: None, end: None }
    }
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize, SeriesError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| SeriesError::MissingColumn { path: path.to_path_buf(), column: name.to_string() })
}

/// Reads a daily count series. Dates must be strictly increasing with no
/// missing day (checked over the selected region before range filtering).
pub fn load_series(path: &Path, query: &SeriesQuery<'_>) -> Result<HospitalizationSeries, SeriesError> {
    let file = std::fs::File::open(path).map_err(|source| SeriesError::Io { path: path.to_path_buf(), source })?;
    let csv_err = |e: csv::Error| SeriesError::Csv { path: path.to_path_buf(), message: e.to_string() };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.clone();
    let date_idx = column(&headers, query.date_column, path)?;
    let count_idx = column(&headers, query.count_column, path)?;
    let region_idx = match query.region_column {
        Some(name) => Some(column(&headers, name, path)?),
        None => headers.iter().position(|h| h.trim() == "region"),
    };

    let mut region: Option<String> = query.region.map(str::to_string);
    let mut dates = Vec::new();
    let mut counts = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(k as u64 + 2, |p| p.line());
        if let Some(ri) = region_idx {
            let label = record.get(ri).unwrap_or("");
            match (&query.region, &region) {
                (Some(want), _) if label != *want => continue,
                (None, Some(first)) if label != first => {
                    return Err(SeriesError::MixedRegions {
                        path: path.to_path_buf(),
                        first: first.clone(),
                        other: label.to_string(),
                    })
                }
                (None, None) => region = Some(label.to_string()),
                _ => {}
            }
        }
        let date_text = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| SeriesError::BadDate {
            path: path.to_path_buf(),
            line,
            value: date_text.to_string(),
        })?;
        let count_text = record.get(count_idx).unwrap_or("");
        let count: u64 = count_text.parse().map_err(|_| SeriesError::NonInteger {
            path: path.to_path_buf(),
            line,
            value: count_text.to_string(),
        })?;
        if let Some(&previous) = dates.last() {
            if date <= previous {
                return Err(SeriesError::NotIncreasing { path: path.to_path_buf(), date, previous });
            }
            let expected = previous.succ_opt().expect("date in range");
            if date != expected {
                return Err(SeriesError::Gap { path: path.to_path_buf(), missing: expected });
            }
        }
        dates.push(date);
        counts.push(count);
    }

    let keep: Vec<usize> = (0..dates.len())
        .filter(|&k| query.start.is_none_or(|s| dates[k] >= s) && query.end.is_none_or(|e| dates[k] <= e))
        .collect();
    if keep.is_empty() {
        return Err(SeriesError::EmptySelection { path: path.to_path_buf() });
    }
    Ok(HospitalizationSeries {
        region: region.unwrap_or_default(),
        dates: keep.iter().map(|&k| dates[k]).collect(),
        counts: keep.iter().map(|&k| counts[k]).collect(),
    })
}

/// Writes `date,region,count` rows that [`load_series`] reads back exactly.
pub fn write_series(path: &Path, series: &HospitalizationSeries) -> Result<(), SeriesError> {
    let io_err = |source| SeriesError::Io { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(|e| SeriesError::Csv { path: path.to_path_buf(), message: e.to_string() })?;
    let csv_err = |e: csv::Error| SeriesError::Csv { path: path.to_path_buf(), message: e.to_string() };
    w.write_record(["date", "region", "count"]).map_err(csv_err)?;
    for (d, c) in series.dates.iter().zip(&series.counts) {
        w.write_record([d.format("%Y-%m-%d").to_string(), series.region.clone(), c.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = HospitalizationSeries::daily("AZ", ymd(2022, 12, 30), vec![3, 0, 17, 250]);
        let p = dir.path().join("s.csv");
        write_series(&p, &s).unwrap();
        assert_eq!(load_series(&p, &SeriesQuery::default()).unwrap(), s);
    }

    #[test]
    fn diagnostics_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let q = SeriesQuery::default();
        let p = write(&dir, "a.csv", "day,count\n2022-01-01,1\n");
        assert!(matches!(load_series(&p, &q), Err(SeriesError::MissingColumn { column, .. }) if column == "date"));
        let p = write(&dir, "b.csv", "date,count\n2022-01-01,1.5\n");
        assert!(matches!(load_series(&p, &q), Err(SeriesError::NonInteger { line: 2, .. })));
        let p = write(&dir, "c.csv", "date,count\n2022-01-01,-1\n");
        assert!(matches!(load_series(&p, &q), Err(SeriesError::NonInteger { .. })));
        let p = write(&dir, "d.csv", "date,count\n2022-01-01,1\n2022-01-02,1\n2022-01-04,2\n");
        let err = load_series(&p, &q).unwrap_err();
        assert!(matches!(err, SeriesError::Gap { missing, .. } if missing == ymd(2022, 1, 3)));
        assert!(err.to_string().contains("2022-01-03"));
        let p = write(&dir, "e.csv", "date,count\n2022-01-02,1\n2022-01-01,1\n");
        assert!(matches!(load_series(&p, &q), Err(SeriesError::NotIncreasing { .. })));
        let p = write(&dir, "f.csv", "date,count\n2022-01-01,1\n2022-01-02,5\n");
        let none = SeriesQuery { start: Some(ymd(2023, 1, 1)), ..SeriesQuery::default() };
        assert!(matches!(load_series(&p, &none), Err(SeriesError::EmptySelection { .. })));
        let one = SeriesQuery { start: Some(ymd(2022, 1, 2)), ..SeriesQuery::default() };
        assert_eq!(load_series(&p, &one).unwrap().counts, vec![5]);
    }

    #[test]
    fn region_selection() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "state,date,admits\nAZ,2022-01-01,1\nCA,2022-01-01,9\nAZ,2022-01-02,2\nCA,2022-01-02,8\n",
        );
        let q = SeriesQuery {
            date_column: "date",
            count_column: "admits",
            region_column: Some("state"),
            region: Some("CA"),
            ..SeriesQuery::default()
        };
        let s = load_series(&p, &q).unwrap();
        assert_eq!((s.region.as_str(), s.counts), ("CA", vec![9, 8]));
        let mixed = SeriesQuery { region: None, ..q };
        assert!(matches!(load_series(&p, &mixed), Err(SeriesError::MixedRegions { .. })));
    }
}
