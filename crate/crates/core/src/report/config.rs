use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ReportError;
use crate::gateway::{EndpointDescriptor, GraderDescriptor};
use crate::protocol::TemplateTable;
use crate::sim::CommitmentProfile;
use crate::trial::{
    AmbiguityClass, Condition, Dimension, Protocol, RemovedSegment, TaskVariant,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forced,
    Natural,
    /// Forced protocol over variants generated from a profile document and
    /// answered by the built-in simulator.
    Simulate,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn default_max_actions() -> u32 {
    200
}

fn default_permutations() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default)]
    pub variants: Option<PathBuf>,
    #[serde(default)]
    pub agents: Vec<EndpointDescriptor>,
    #[serde(default)]
    pub conditions: Option<Vec<Condition>>,
    #[serde(default)]
    pub trials_per_cell: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub profiles: Option<PathBuf>,
    /// Salt for simulated grading draws; distinct values give independent
    /// replicates of the same profile document.
    #[serde(default)]
    pub sim_seed: u64,
    #[serde(default = "default_max_actions")]
    pub max_actions: u32,
    #[serde(default)]
    pub stats_seed: u64,
    #[serde(default = "default_permutations")]
    pub n_permutations: u64,
    #[serde(default)]
    pub templates: Option<TemplateTable>,
}

/// One entry of a simulate-mode profile document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(flatten)]
    pub profile: CommitmentProfile<f64>,
    #[serde(default = "one")]
    pub variants: usize,
    #[serde(default = "sim_benchmark")]
    pub benchmark: String,
    #[serde(default = "outcome_critical")]
    pub ambiguity_class: AmbiguityClass,
}

fn one() -> usize {
    1
}

fn sim_benchmark() -> String {
    "sim".into()
}

fn outcome_critical() -> AmbiguityClass {
    AmbiguityClass::OutcomeCritical
}

fn config_error(path: &Path, message: impl Into<String>) -> ReportError {
    ReportError::Config {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses a JSON document, reporting the failing field path.
pub(crate) fn parse_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(path, e.to_string()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        config_error(path, format!("at `{field}`: {}", e.inner()))
    })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let mut config: RunConfig = parse_document(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let relative = [&mut config.variants, &mut config.profiles].into_iter().flatten();
        for p in relative.chain([&mut config.output]) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn protocol(&self) -> Protocol {
        match self.mode {
            Mode::Natural => Protocol::Natural,
            Mode::Forced | Mode::Simulate => Protocol::Forced,
        }
    }

    /// The seed list after reconciling `seeds` with `trials_per_cell`.
    pub fn resolved_seeds(&self) -> Result<Vec<u64>, String> {
        match self.trials_per_cell {
            None => Ok(self.seeds.clone()),
            Some(n) if n == self.seeds.len() => Ok(self.seeds.clone()),
            Some(n) if self.seeds == default_seeds() => Ok((0..n as u64).collect()),
            Some(n) => Err(format!(
                "trials_per_cell is {n} but {} seeds are listed",
                self.seeds.len()
            )),
        }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        self.conditions.clone().unwrap_or_else(|| Condition::ALL.to_vec())
    }

    /// Checks everything that can be checked without running agents.
    pub fn validate(&self, origin: &Path) -> Result<(), ReportError> {
        let err = |m: String| config_error(origin, m);
        let seeds = self.resolved_seeds().map_err(err)?;
        if seeds.is_empty() {
            return Err(err("seeds must not be empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(err("seeds must be distinct".into()));
        }
        if self.parallelism == 0 {
            return Err(err("parallelism must be at least 1".into()));
        }
        if self.max_actions == 0 {
            return Err(err("max_actions must be at least 1".into()));
        }
        match self.mode {
            Mode::Simulate => {
                if self.profiles.is_none() {
                    return Err(err("simulate mode requires `profiles`".into()));
                }
            }
            Mode::Forced | Mode::Natural => {
                if self.variants.is_none() {
                    return Err(err("`variants` is required outside simulate mode".into()));
                }
                if self.agents.is_empty() {
                    return Err(err("`agents` must name at least one endpoint".into()));
                }
            }
        }
        let mut models: Vec<&str> = self.agents.iter().map(EndpointDescriptor::model).collect();
        models.sort_unstable();
        if models.windows(2).any(|w| w[0] == w[1]) {
            return Err(err("agent model identifiers must be unique".into()));
        }
        let conditions = self.conditions();
        if self.mode != Mode::Natural
            && conditions.iter().any(|c| c.is_injection())
            && !conditions.contains(&Condition::Oracle)
        {
            return Err(err("injection conditions require the oracle condition".into()));
        }
        Ok(())
    }

    /// Digest of every field that can change recorded trials.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = PathBuf::new();
        canonical.parallelism = 0;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

fn default_subdimension(d: Dimension) -> &'static str {
    match d {
        Dimension::Goal => "format",
        Dimension::Input => "source",
        Dimension::Constraint => "temporal",
        Dimension::Context => "background",
    }
}

/// Expands a profile document into simulator-graded variants.
pub fn simulated_variants(specs: &[ProfileSpec], salt: u64) -> Vec<TaskVariant> {
    let mut out = Vec::new();
    for (p, spec) in specs.iter().enumerate() {
        let d = spec.profile.dimension;
        for i in 0..spec.variants {
            let detail = format!("detail {p}.{i}");
            out.push(TaskVariant {
                variant_id: format!("{}-{}-p{p}-{i:04}", spec.benchmark, d.as_str()),
                benchmark: spec.benchmark.clone(),
                oracle_prompt: format!("Complete simulated {} task {p}.{i} using {detail}.", d.as_str()),
                underspecified_prompt: format!("Complete simulated {} task {p}.{i}.", d.as_str()),
                removed_segments: vec![RemovedSegment {
                    dimension: d,
                    subdimension: default_subdimension(d).into(),
                    value: detail,
                }],
                primary_dimension: d,
                ambiguity_class: spec.ambiguity_class,
                grader: GraderDescriptor::Sim {
                    profile: spec.profile,
                    salt,
                },
                tools: Vec::new(),
            });
        }
    }
    out
}

pub fn load_profiles(path: &Path) -> Result<Vec<ProfileSpec>, ReportError> {
    let specs: Vec<ProfileSpec> = parse_document(path)?;
    for (i, s) in specs.iter().enumerate() {
        s.profile
            .validate()
            .map_err(|e| config_error(path, format!("at `[{i}]`: {e}")))?;
    }
    if specs.is_empty() {
        return Err(config_error(path, "profile document is empty"));
    }
    Ok(specs)
}
