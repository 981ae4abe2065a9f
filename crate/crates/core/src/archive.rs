//! Append-only run archive: `trials.jsonl` (one trial per line) plus a
//! `manifest.json` describing the run.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trial::{Condition, Trial, TrialError};

pub const TRIALS_FILE: &str = "trials.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VARIANTS_FILE: &str = "variants.json";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive not found: {0}")]
    Missing(PathBuf),
    #[error("{path}:{line}: malformed trial record: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("record {index}: trial rejected: {source}")]
    Invalid {
        index: u64,
        #[source]
        source: TrialError,
    },
    #[error("record {index}: write failed: {source}")]
    Storage {
        index: u64,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Single-writer, append-only trial log.
pub struct ArchiveWriter {
    path: PathBuf,
    out: BufWriter<File>,
    next_index: u64,
}

impl ArchiveWriter {
    /// Creates (truncating) the trial log at `path`.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self, ArchiveError> {
        let path = path.into();
        let file = File::create(&path).map_err(|source| ArchiveError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
            next_index: 0,
        })
    }

    /// Opens an existing log for further appends.
    pub fn append_to(path: impl Into<PathBuf>) -> Result<Self, ArchiveError> {
        let path = path.into();
        let existing = match File::open(&path) {
            Ok(f) => BufReader::new(f)
                .lines()
                .map_while(Result::ok)
                .filter(|l| !l.trim().is_empty())
                .count() as u64,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(source) => return Err(ArchiveError::Io { path, source }),
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| ArchiveError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(Self {
            path,
            out: BufWriter::new(file),
            next_index: existing,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.next_index
    }

    pub fn is_empty(&self) -> bool {
        self.next_index == 0
    }

    /// Validates and appends one trial; returns its record index.
    pub fn append_trial(&mut self, trial: &Trial) -> Result<u64, ArchiveError> {
        let index = self.next_index;
        trial
            .validate()
            .map_err(|source| ArchiveError::Invalid { index, source })?;
        let mut line = serde_json::to_vec(trial).map_err(|e| ArchiveError::Storage {
            index,
            source: io::Error::other(e),
        })?;
        line.push(b'\n');
        self.out
            .write_all(&line)
            .and_then(|_| self.out.flush())
            .map_err(|source| ArchiveError::Storage { index, source })?;
        self.next_index += 1;
        Ok(index)
    }

    pub fn finish(mut self) -> Result<(), ArchiveError> {
        let index = self.next_index;
        self.out
            .flush()
            .and_then(|_| self.out.get_ref().sync_all())
            .map_err(|source| ArchiveError::Storage { index, source })
    }
}

/// Loads the trials accepted by `filter(variant_id, model, condition)`.
///
/// A malformed line aborts the load with its 1-based line number.
pub fn load_trials<F>(path: impl AsRef<Path>, filter: F) -> Result<Vec<Trial>, ArchiveError>
where
    F: Fn(&str, &str, Condition) -> bool,
{
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ArchiveError::Missing(path.to_path_buf()))
        }
        Err(source) => {
            return Err(ArchiveError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ArchiveError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let trial: Trial = serde_json::from_str(&line).map_err(|source| ArchiveError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        if filter(&trial.variant_id, &trial.model, trial.condition) {
            out.push(trial);
        }
    }
    Ok(out)
}

pub fn accept_all(_: &str, _: &str, _: Condition) -> bool {
    true
}

/// Selector over (variant, model, condition). Empty sets accept everything.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialFilter {
    pub variants: BTreeSet<String>,
    pub models: BTreeSet<String>,
    pub conditions: BTreeSet<Condition>,
}

impl TrialFilter {
    /// Parses `key=value[|value...]` selectors separated by commas, e.g.
    /// `variant=v1|v2,model=sim,condition=oracle|inj_10`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let mut filter = TrialFilter::default();
        for clause in spec.split(',').map(str::trim).filter(|c| !c.is_empty()) {
            let (key, values) = clause
                .split_once('=')
                .ok_or_else(|| format!("filter clause `{clause}` must be key=value"))?;
            let values = values.split('|').map(str::trim).filter(|v| !v.is_empty());
            match key.trim() {
                "variant" | "variant_id" => filter.variants.extend(values.map(String::from)),
                "model" => filter.models.extend(values.map(String::from)),
                "condition" => {
                    for v in values {
                        filter.conditions.insert(v.parse()?);
                    }
                }
                other => return Err(format!("unknown filter key `{other}`")),
            }
        }
        Ok(filter)
    }

    pub fn accepts(&self, variant_id: &str, model: &str, condition: Condition) -> bool {
        (self.variants.is_empty() || self.variants.contains(variant_id))
            && (self.models.is_empty() || self.models.contains(model))
            && (self.conditions.is_empty() || self.conditions.contains(&condition))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UncalibratedCell {
    pub model: String,
    pub variant_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub protocol: crate::trial::Protocol,
    pub seeds: Vec<u64>,
    pub agents: Vec<String>,
    pub n_variants: usize,
    pub n_trials: u64,
    pub stats_seed: u64,
    #[serde(default)]
    pub uncalibrated: Vec<UncalibratedCell>,
    #[serde(default)]
    pub failed_cells: usize,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), ArchiveError> {
        write_json(&dir.join(MANIFEST_FILE), self)
    }

    pub fn read(dir: &Path) -> Result<Self, ArchiveError> {
        read_json(&dir.join(MANIFEST_FILE))
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArchiveError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| ArchiveError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ArchiveError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(ArchiveError::Missing(path.to_path_buf()))
        }
        Err(source) => {
            return Err(ArchiveError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    serde_json::from_str(&text).map_err(|source| ArchiveError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::fixtures::trial;
    use crate::trial::{Condition, Fraction};

    #[test]
    fn append_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let t = trial("v1", Condition::Injection(Fraction::P50), 1, 4);
        let mut w = ArchiveWriter::create(&path).unwrap();
        assert_eq!(w.append_trial(&t).unwrap(), 0);
        w.finish().unwrap();
        let loaded = load_trials(&path, accept_all).unwrap();
        assert_eq!(loaded, vec![t]);
    }

    #[test]
    fn load_preserves_append_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let mut w = ArchiveWriter::create(&path).unwrap();
        for seed in 0..3 {
            w.append_trial(&trial("v1", Condition::Oracle, seed, 2)).unwrap();
        }
        w.finish().unwrap();
        let seeds: Vec<u64> = load_trials(&path, accept_all)
            .unwrap()
            .iter()
            .map(|t| t.seed)
            .collect();
        assert_eq!(seeds, vec![0, 1, 2]);
    }

    #[test]
    fn append_to_existing_continues_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let mut w = ArchiveWriter::create(&path).unwrap();
        w.append_trial(&trial("v1", Condition::Oracle, 0, 2)).unwrap();
        w.finish().unwrap();
        let mut w = ArchiveWriter::append_to(&path).unwrap();
        assert_eq!(w.append_trial(&trial("v1", Condition::Oracle, 1, 2)).unwrap(), 1);
        w.finish().unwrap();
        assert_eq!(load_trials(&path, accept_all).unwrap().len(), 2);
    }

    #[test]
    fn invalid_trial_rejected_before_write() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let mut bad = trial("v1", Condition::Oracle, 0, 3);
        bad.total_actions = 2;
        let mut w = ArchiveWriter::create(&path).unwrap();
        let err = w.append_trial(&bad).unwrap_err();
        assert!(matches!(err, ArchiveError::Invalid { index: 0, .. }));
        w.finish().unwrap();
        assert!(load_trials(&path, accept_all).unwrap().is_empty());
    }

    #[test]
    fn filter_on_condition_kind() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let mut w = ArchiveWriter::create(&path).unwrap();
        for seed in 0..3 {
            w.append_trial(&trial("v1", Condition::Oracle, seed, 2)).unwrap();
            w.append_trial(&trial("v1", Condition::NoClarification, seed, 2)).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(load_trials(&path, accept_all).unwrap().len(), 6);
        let oracle = load_trials(&path, |_, _, c| c == Condition::Oracle).unwrap();
        assert_eq!(oracle.len(), 3);
    }

    #[test]
    fn truncated_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRIALS_FILE);
        let mut w = ArchiveWriter::create(&path).unwrap();
        w.append_trial(&trial("v1", Condition::Oracle, 0, 2)).unwrap();
        w.append_trial(&trial("v1", Condition::Oracle, 1, 2)).unwrap();
        w.finish().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let cut = text.len() - 20;
        fs::write(&path, &text[..cut]).unwrap();
        match load_trials(&path, accept_all) {
            Err(ArchiveError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_trials(dir.path().join("nope.jsonl"), accept_all).unwrap_err();
        assert!(matches!(err, ArchiveError::Missing(_)));
    }

    #[test]
    fn filter_parsing() {
        let f = TrialFilter::parse("variant=a|b, condition=oracle|inj_30").unwrap();
        assert!(f.accepts("a", "any", Condition::Oracle));
        assert!(f.accepts("b", "any", Condition::Injection(Fraction::P30)));
        assert!(!f.accepts("c", "any", Condition::Oracle));
        assert!(!f.accepts("a", "any", Condition::NoClarification));
        assert!(TrialFilter::parse("colour=red").is_err());
        assert!(TrialFilter::parse("").unwrap().accepts("x", "y", Condition::Oracle));
    }
}
