use std::fs;
use std::path::{Path, PathBuf};

use super::config::{load_profiles, parse_document, simulated_variants, Mode, RunConfig};
use super::ReportError;
use crate::archive::{ArchiveWriter, Manifest, TrialFilter, TRIALS_FILE, VARIANTS_FILE};
use crate::gateway::EndpointDescriptor;
use crate::protocol::{
    run_experiment, CellReport, EchoEnvironment, EngineSettings, ExperimentConfig, ExperimentSummary,
};
use crate::trial::{validate_corpus, TaskVariant};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: ExperimentSummary,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Resolves variants and agents, then runs the experiment into
/// `config.output`. Every configuration problem surfaces before any file is
/// written.
pub fn cmd_run(
    config: &RunConfig,
    origin: &Path,
    filter: Option<&TrialFilter>,
    progress: &mut dyn FnMut(&CellReport),
) -> Result<RunOutcome, ReportError> {
    config.validate(origin)?;
    let seeds = config.resolved_seeds().expect("validated");
    let mut variants: Vec<TaskVariant> = match config.mode {
        Mode::Simulate => {
            let path = config.profiles.as_ref().expect("validated");
            simulated_variants(&load_profiles(path)?, config.sim_seed)
        }
        Mode::Forced | Mode::Natural => {
            parse_document(config.variants.as_ref().expect("validated"))?
        }
    };
    let mut agents = config.agents.clone();
    if agents.is_empty() {
        agents.push(EndpointDescriptor::Sim {
            model: "sim".into(),
            passthrough: Default::default(),
        });
    }
    let mut conditions = config.conditions();
    if let Some(f) = filter {
        variants.retain(|v| f.variants.is_empty() || f.variants.contains(&v.variant_id));
        agents.retain(|a| f.models.is_empty() || f.models.contains(a.model()));
        conditions.retain(|c| f.conditions.is_empty() || f.conditions.contains(c));
    }
    if let Some(v) = validate_corpus(&variants).first() {
        return Err(ReportError::Config {
            path: origin.to_path_buf(),
            message: format!("variant corpus: {v}"),
        });
    }
    if variants.is_empty() || agents.is_empty() {
        return Err(ReportError::Config {
            path: origin.to_path_buf(),
            message: "nothing to run after filtering".into(),
        });
    }
    let experiment = ExperimentConfig {
        protocol: config.protocol(),
        conditions,
        seeds: seeds.clone(),
        parallelism: config.parallelism,
        settings: EngineSettings {
            max_actions: config.max_actions,
            templates: config.templates.clone().unwrap_or_default(),
        },
    };

    let dir = config.output.clone();
    fs::create_dir_all(&dir).map_err(io_error(&dir))?;
    crate::archive::write_json(&dir.join(VARIANTS_FILE), &variants)?;
    let mut writer = ArchiveWriter::create(dir.join(TRIALS_FILE))?;
    let summary = run_experiment(&variants, &agents, &experiment, &EchoEnvironment, &mut writer, progress)?;
    writer.finish()?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: config.hash(),
        protocol: config.protocol(),
        seeds,
        agents: agents.iter().map(|a| a.model().to_string()).collect(),
        n_variants: variants.len(),
        n_trials: summary.trials,
        stats_seed: config.stats_seed,
        uncalibrated: summary.uncalibrated.clone(),
        failed_cells: summary.failed_cells,
    };
    manifest.write(&dir)?;
    Ok(RunOutcome { dir, summary })
}
