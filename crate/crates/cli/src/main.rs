use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clarify_core::archive::TrialFilter;
use clarify_core::report::{cmd_analyze, cmd_report, cmd_run, ReportError, RunConfig};

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "clarify", version, about = "Clarification-timing experiments: run, analyze, report")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment grid and write trials.jsonl and manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; overrides the config's `output`.
        #[arg(long, env = "CLARIFY_OUT")]
        out: Option<PathBuf>,
        #[arg(long, env = "CLARIFY_PARALLELISM")]
        parallelism: Option<usize>,
        /// Comma-separated seeds, one trial per seed in every cell.
        #[arg(long, value_delimiter = ',')]
        seed_list: Option<Vec<u64>>,
        /// Selectors such as `variant=a|b,model=m,condition=oracle|inj_30`.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Compute every analysis table from a run directory.
    Analyze {
        run_dir: PathBuf,
        /// Analysis directory; defaults to `<run_dir>/analysis`.
        #[arg(long, env = "CLARIFY_OUT")]
        out: Option<PathBuf>,
        #[arg(long)]
        filter: Option<String>,
    },
    /// Render an analysis directory as report.txt.
    Report { analysis_dir: PathBuf },
}

fn parse_filter(spec: Option<&str>) -> Result<Option<TrialFilter>, ReportError> {
    spec.map(|s| {
        TrialFilter::parse(s).map_err(|message| ReportError::Config {
            path: PathBuf::from("--filter"),
            message,
        })
    })
    .transpose()
}

fn execute(command: Command) -> Result<u8, ReportError> {
    match command {
        Command::Run {
            config,
            out,
            parallelism,
            seed_list,
            filter,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output = out;
            }
            if let Some(p) = parallelism {
                cfg.parallelism = p;
            }
            if let Some(seeds) = seed_list {
                cfg.seeds = seeds;
                cfg.trials_per_cell = None;
            }
            let filter = parse_filter(filter.as_deref())?;
            let outcome = cmd_run(&cfg, &config, filter.as_ref(), &mut |cell| {
                eprintln!(
                    "{} {} {}: {}/{} graded, {} succeeded",
                    cell.model, cell.variant_id, cell.condition, cell.n_graded, cell.n_trials, cell.n_success
                );
            })?;
            let s = &outcome.summary;
            println!("{} trials written to {}", s.trials, outcome.dir.display());
            if !s.uncalibrated.is_empty() {
                println!("{} (model, variant) units could not be calibrated", s.uncalibrated.len());
            }
            if s.failed_cells > 0 {
                println!("{} cells failed entirely", s.failed_cells);
                return Ok(EXIT_PARTIAL);
            }
            Ok(0)
        }
        Command::Analyze { run_dir, out, filter } => {
            let filter = parse_filter(filter.as_deref())?;
            let dir = cmd_analyze(&run_dir, out.as_deref(), filter.as_ref())?;
            println!("analysis written to {}", dir.display());
            Ok(0)
        }
        Command::Report { analysis_dir } => {
            let path = cmd_report(&analysis_dir)?;
            print!("{}", std::fs::read_to_string(&path).unwrap_or_default());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_PARTIAL })
        }
    }
}
