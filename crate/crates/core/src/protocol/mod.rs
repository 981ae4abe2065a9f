//! Budget calibration, injection scheduling, clarification messages and the
//! forced-injection / natural-ask trial loops.

mod budget;
mod engine;
mod experiment;
mod message;

use thiserror::Error;

use crate::gateway::{GatewayError, GradeError};
use crate::trial::{Condition, Trial};

pub use budget::{calibrate_budget, injection_action, injection_action_at, Budget, InjectionPlan};
pub use engine::{
    run_forced_trial, run_natural_session, EchoEnvironment, EngineSettings, Environment,
    EARLY_TERMINATION_NOTE, NATURAL_ASK_SUFFIX,
};
pub use experiment::{run_experiment, CellReport, ExperimentConfig, ExperimentSummary};
pub use message::{build_injection_message, Template, TemplateTable, DEFAULT_FALLBACK};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cannot calibrate a budget from zero oracle trajectories")]
    NoOracleLengths,
    #[error("budget must be at least 1")]
    ZeroBudget,
    #[error("fraction {0} is not one of 0.1, 0.3, 0.5, 0.7, 0.9")]
    UnknownFraction(f64),
    #[error("condition {0} is not an injection condition")]
    NotInjection(Condition),
    #[error("no removed segments to render")]
    NoSegments,
    #[error("removed segment {0} has an empty value")]
    EmptySegment(usize),
    #[error("injection condition {0} requires a calibrated budget")]
    MissingBudget(Condition),
    #[error("could not open agent session: {0}")]
    Session(#[source] GatewayError),
    #[error("grading failed for {variant_id}/{condition}: {source}", variant_id = .trial.variant_id, condition = .trial.condition)]
    Grading {
        trial: Box<Trial>,
        #[source]
        source: GradeError,
    },
    #[error("archive: {0}")]
    Archive(#[from] crate::archive::ArchiveError),
    #[error("invalid experiment: {0}")]
    Config(String),
}
