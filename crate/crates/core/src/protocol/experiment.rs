use std::slice;

use rayon::prelude::*;
use serde_json::Map;

use super::{
    calibrate_budget, run_forced_trial, run_natural_session, Budget, EngineSettings, Environment,
    InjectionPlan, ProtocolError,
};
use crate::archive::{ArchiveWriter, UncalibratedCell};
use crate::gateway::{open_session, EndpointDescriptor, Session};
use crate::trial::{validate_corpus, Condition, Protocol, TaskVariant, Trial, TrialStatus};

const UNCALIBRATED_NOTE: &str = "skipped: no completed oracle trial to calibrate a budget";

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    /// Ignored for the natural protocol, which always records
    /// no-clarification sessions.
    pub conditions: Vec<Condition>,
    /// One trial per seed in every cell, in this order.
    pub seeds: Vec<u64>,
    pub parallelism: usize,
    pub settings: EngineSettings,
}

impl ExperimentConfig {
    fn grid(&self) -> Result<Vec<Condition>, ProtocolError> {
        if self.seeds.is_empty() {
            return Err(ProtocolError::Config("seed list is empty".into()));
        }
        if self.protocol == Protocol::Natural {
            return Ok(vec![Condition::NoClarification]);
        }
        if self.conditions.is_empty() {
            return Err(ProtocolError::Config("condition list is empty".into()));
        }
        let ordered: Vec<Condition> = Condition::ALL
            .into_iter()
            .filter(|c| self.conditions.contains(c))
            .collect();
        if ordered.iter().any(|c| c.is_injection()) && !ordered.contains(&Condition::Oracle) {
            return Err(ProtocolError::Config(
                "injection conditions need the oracle condition for budget calibration".into(),
            ));
        }
        Ok(ordered)
    }
}

/// Per-cell progress, emitted in archive order.
#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub model: String,
    pub variant_id: String,
    pub condition: Condition,
    pub n_trials: usize,
    pub n_graded: usize,
    pub n_success: usize,
    /// No trial in the cell produced a grader verdict.
    pub failed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentSummary {
    pub trials: u64,
    pub uncalibrated: Vec<UncalibratedCell>,
    pub failed_cells: usize,
}

struct UnitOutcome {
    trials: Vec<Trial>,
    uncalibrated: bool,
}

fn failed_trial(
    variant: &TaskVariant,
    model: &str,
    protocol: Protocol,
    condition: Condition,
    seed: u64,
    status: TrialStatus,
    note: String,
) -> Trial {
    Trial {
        variant_id: variant.variant_id.clone(),
        model: model.to_string(),
        protocol,
        condition,
        injection_point: None,
        seed,
        actions: Vec::new(),
        conversation: Vec::new(),
        final_answer: None,
        task_success: false,
        total_actions: 0,
        pre_injection_actions: 0,
        post_injection_actions: 0,
        duration_seconds: 0.0,
        ask_events: Vec::new(),
        status,
        annotations: vec![note],
        extra: Map::new(),
    }
}

fn one_trial(
    variant: &TaskVariant,
    session: &mut Session,
    config: &ExperimentConfig,
    condition: Condition,
    seed: u64,
    plan: Option<&InjectionPlan>,
    env: &dyn Environment,
) -> Result<Trial, ProtocolError> {
    let outcome = match config.protocol {
        Protocol::Natural => run_natural_session(variant, session, seed, env, &config.settings),
        Protocol::Forced => {
            run_forced_trial(variant, session, condition, seed, plan, env, &config.settings)
        }
    };
    match outcome {
        Err(ProtocolError::Grading { trial, .. }) => Ok(*trial),
        other => other,
    }
}

fn run_unit(
    variant: &TaskVariant,
    agent: &EndpointDescriptor,
    grid: &[Condition],
    config: &ExperimentConfig,
    env: &dyn Environment,
) -> Result<UnitOutcome, ProtocolError> {
    let planned = grid.len() * config.seeds.len();
    let mut trials = Vec::with_capacity(planned);
    let mut session = match open_session(agent, slice::from_ref(variant)) {
        Ok(s) => s,
        Err(e) => {
            let note = format!("session failed to open: {e}");
            for &condition in grid {
                for &seed in &config.seeds {
                    trials.push(failed_trial(
                        variant,
                        agent.model(),
                        config.protocol,
                        condition,
                        seed,
                        TrialStatus::AgentError,
                        note.clone(),
                    ));
                }
            }
            return Ok(UnitOutcome {
                trials,
                uncalibrated: false,
            });
        }
    };

    let mut budget = None;
    let mut uncalibrated = false;
    for &condition in grid {
        if condition.is_injection() && budget.is_none() {
            let lengths: Vec<u32> = trials
                .iter()
                .filter(|t: &&Trial| {
                    t.condition == Condition::Oracle && t.status == TrialStatus::Completed
                })
                .map(|t| t.total_actions)
                .collect();
            match calibrate_budget(&lengths) {
                Ok(value) => {
                    budget = Some(Budget {
                        model: agent.model().to_string(),
                        variant_id: variant.variant_id.clone(),
                        value,
                    })
                }
                Err(_) => uncalibrated = true,
            }
        }
        let plan = match (&budget, condition.is_injection()) {
            (Some(b), true) => Some(InjectionPlan::new(condition, b.clone())?),
            _ => None,
        };
        for &seed in &config.seeds {
            if condition.is_injection() && plan.is_none() {
                trials.push(failed_trial(
                    variant,
                    agent.model(),
                    config.protocol,
                    condition,
                    seed,
                    TrialStatus::Skipped,
                    UNCALIBRATED_NOTE.to_string(),
                ));
                continue;
            }
            trials.push(one_trial(
                variant,
                &mut session,
                config,
                condition,
                seed,
                plan.as_ref(),
                env,
            )?);
        }
    }
    Ok(UnitOutcome {
        trials,
        uncalibrated,
    })
}

fn report_cells(trials: &[Trial], per_cell: usize, progress: &mut dyn FnMut(&CellReport)) -> usize {
    let mut failed = 0;
    for cell in trials.chunks(per_cell) {
        let first = &cell[0];
        let n_graded = cell.iter().filter(|t| t.status.is_graded()).count();
        let skipped = cell.iter().all(|t| t.status == TrialStatus::Skipped);
        let report = CellReport {
            model: first.model.clone(),
            variant_id: first.variant_id.clone(),
            condition: first.condition,
            n_trials: cell.len(),
            n_graded,
            n_success: cell
                .iter()
                .filter(|t| t.status.is_graded() && t.task_success)
                .count(),
            failed: n_graded == 0 && !skipped,
        };
        if report.failed {
            failed += 1;
        }
        progress(&report);
    }
    failed
}

/// Runs the full (agent × variant × condition × seed) grid and appends every
/// trial to `writer` in grid order: agents, then variants, then conditions
/// in canonical order, then seeds. Units run concurrently up to
/// `config.parallelism`; results are identical for any thread count.
pub fn run_experiment(
    variants: &[TaskVariant],
    agents: &[EndpointDescriptor],
    config: &ExperimentConfig,
    env: &dyn Environment,
    writer: &mut ArchiveWriter,
    progress: &mut dyn FnMut(&CellReport),
) -> Result<ExperimentSummary, ProtocolError> {
    let grid = config.grid()?;
    if agents.is_empty() {
        return Err(ProtocolError::Config("no agents configured".into()));
    }
    if let Some(v) = validate_corpus(variants).first() {
        return Err(ProtocolError::Config(format!("variant corpus: {v}")));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| ProtocolError::Config(e.to_string()))?;

    let units: Vec<(&EndpointDescriptor, &TaskVariant)> = agents
        .iter()
        .flat_map(|a| variants.iter().map(move |v| (a, v)))
        .collect();
    let per_cell = config.seeds.len();
    let batch = config.parallelism.max(1) * 4;
    let mut summary = ExperimentSummary::default();

    for chunk in units.chunks(batch) {
        let outcomes: Vec<Result<UnitOutcome, ProtocolError>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|(agent, variant)| run_unit(variant, agent, &grid, config, env))
                .collect()
        });
        for ((agent, variant), outcome) in chunk.iter().zip(outcomes) {
            let outcome = outcome?;
            for t in &outcome.trials {
                writer.append_trial(t)?;
            }
            summary.trials += outcome.trials.len() as u64;
            if outcome.uncalibrated {
                summary.uncalibrated.push(UncalibratedCell {
                    model: agent.model().to_string(),
                    variant_id: variant.variant_id.clone(),
                });
            }
            summary.failed_cells += report_cells(&outcome.trials, per_cell, progress);
        }
    }
    Ok(summary)
}
