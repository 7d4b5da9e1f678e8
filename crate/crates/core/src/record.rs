//! Per-episode audit rows and their CSV encoding.
//!
//! Columns, in order: `trial,episode,algorithm,kind,rho,h_k,value,mixture_value,violation,cum_regret`.
//! Optional fields are empty when absent, floats carry 17 significant digits,
//! booleans are `true`/`false` and lines end with `\n`. Episodes are numbered from 1.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfmt::fmt_f64;

pub const CSV_HEADER: [&str; 10] = [
    "trial",
    "episode",
    "algorithm",
    "kind",
    "rho",
    "h_k",
    "value",
    "mixture_value",
    "violation",
    "cum_regret",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "stepmix")]
    StepMix,
    #[serde(rename = "epsmix")]
    EpsMix,
    /// Greedy on the upper bound every episode; the threshold is only reported against.
    #[serde(rename = "optimistic", alias = "optimistic-only")]
    OptimisticOnly,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::StepMix, Algorithm::EpsMix, Algorithm::OptimisticOnly];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::StepMix => "stepmix",
            Algorithm::EpsMix => "epsmix",
            Algorithm::OptimisticOnly => "optimistic",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stepmix" => Ok(Algorithm::StepMix),
            "epsmix" => Ok(Algorithm::EpsMix),
            "optimistic" | "optimistic-only" | "optimisticonly" => Ok(Algorithm::OptimisticOnly),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected stepmix, epsmix or optimistic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionKind {
    Baseline,
    Optimistic,
    /// Step mixture of two neighbouring candidates.
    Mixture,
    /// Whole-episode coin flip between the optimistic and baseline policies.
    EpisodicMixture,
}

impl SelectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionKind::Baseline => "baseline",
            SelectionKind::Optimistic => "optimistic",
            SelectionKind::Mixture => "mixture",
            SelectionKind::EpisodicMixture => "episodic-mixture",
        }
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, SelectionKind::Mixture | SelectionKind::EpisodicMixture)
    }
}

impl fmt::Display for SelectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SelectionKind::Baseline),
            "optimistic" => Ok(SelectionKind::Optimistic),
            "mixture" => Ok(SelectionKind::Mixture),
            "episodic-mixture" => Ok(SelectionKind::EpisodicMixture),
            other => Err(Error::Config(format!("unknown selection kind `{other}`"))),
        }
    }
}

/// Which policy an episodic coin flip executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Optimistic,
    Baseline,
}

/// One CSV row.
///
/// `value` is the exact expected return of the policy actually rolled out.
/// For episodic mixtures `mixture_value` holds the exact expectation over the
/// coin flip, and it is that quantity which decides `violation`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub episode: usize,
    pub algorithm: Algorithm,
    pub kind: SelectionKind,
    pub rho: Option<f64>,
    pub h_k: Option<usize>,
    pub value: f64,
    pub mixture_value: Option<f64>,
    pub violation: bool,
    pub cum_regret: f64,
}

impl EpisodeRecord {
    /// The value the constraint is judged on.
    pub fn governing_value(&self) -> f64 {
        self.mixture_value.unwrap_or(self.value)
    }
}

/// Diagnostics kept alongside a record but not written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeAudit {
    /// Lower confidence bound of the executed (possibly mixed) policy.
    pub lcb_value: f64,
    /// For mixtures: the two lower bounds combined as `ρ·[0] + (1 − ρ)·[1]`.
    pub mixed_lcbs: Option<[f64; 2]>,
    pub realized_branch: Option<Branch>,
    /// The rolled-out branch's exact value fell below the threshold.
    pub realized_violation: bool,
}

impl EpisodeAudit {
    /// `ρ·lcb₀ + (1 − ρ)·lcb₁` for mixture selections.
    pub fn mixed_lcb(&self, rho: f64) -> Option<f64> {
        self.mixed_lcbs
            .map(|[first, second]| rho * first + (1.0 - rho) * second)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub record: EpisodeRecord,
    pub audit: EpisodeAudit,
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_csv<W: Write>(writer: W, records: &[EpisodeRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.episode.to_string(),
            r.algorithm.as_str().to_string(),
            r.kind.as_str().to_string(),
            opt_f64(r.rho),
            r.h_k.map(|h| h.to_string()).unwrap_or_default(),
            fmt_f64(r.value),
            opt_f64(r.mixture_value),
            r.violation.to_string(),
            fmt_f64(r.cum_regret),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or_default();
    raw.parse().map_err(|_| Error::Parse {
        line: row,
        msg: format!("column `{}` has invalid value {raw:?}", CSV_HEADER[idx]),
    })
}

fn opt_field<T: FromStr>(rec: &csv::StringRecord, idx: usize, row: usize) -> Result<Option<T>> {
    if rec.get(idx).unwrap_or_default().is_empty() {
        Ok(None)
    } else {
        field(rec, idx, row).map(Some)
    }
}

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let algorithm: String = field(&rec, 2, row)?;
        let kind: String = field(&rec, 3, row)?;
        out.push(EpisodeRecord {
            trial: field(&rec, 0, row)?,
            episode: field(&rec, 1, row)?,
            algorithm: algorithm.parse()?,
            kind: kind.parse()?,
            rho: opt_field(&rec, 4, row)?,
            h_k: opt_field(&rec, 5, row)?,
            value: field(&rec, 6, row)?,
            mixture_value: opt_field(&rec, 7, row)?,
            violation: field(&rec, 8, row)?,
            cum_regret: field(&rec, 9, row)?,
        });
    }
    Ok(out)
}

pub fn emit_csv(path: &Path, records: &[EpisodeRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Parameter("refusing to write an empty record file".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), records).map_err(|e| match e {
        Error::Csv(inner) => Error::io(path, std::io::Error::other(inner.to_string())),
        other => other,
    })
}

pub fn load_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(episode: usize) -> EpisodeRecord {
        EpisodeRecord {
            trial: 0,
            episode,
            algorithm: Algorithm::EpsMix,
            kind: SelectionKind::EpisodicMixture,
            rho: Some(1.0 / 3.0),
            h_k: None,
            value: 2.123456789012345,
            mixture_value: Some(2.2),
            violation: false,
            cum_regret: 0.1 * episode as f64,
        }
    }

    #[test]
    fn header_and_rows() {
        let rows: Vec<_> = (1..=3).map(sample).collect();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.split('\n').collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[4], "");
        assert!(!text.contains('\r'));
        assert!(lines[1].starts_with("0,1,epsmix,episodic-mixture,3.3333333333333331e-1,,"));
        assert_eq!(read_csv(text.as_bytes()).unwrap(), rows);
    }

    #[test]
    fn bad_header_and_values() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let text = format!("{}\n0,1,stepmix,baseline,,,abc,,false,0\n", CSV_HEADER.join(","));
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("value"));
    }

    #[test]
    fn algorithm_names() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.as_str().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("ucbvi".parse::<Algorithm>().is_err());
    }
}
