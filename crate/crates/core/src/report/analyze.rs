use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde_json::{json, Value};

use super::table::{fmt4, opt4, Table};
use super::ReportError;
use crate::archive::{load_trials, Manifest, TrialFilter, TRIALS_FILE, VARIANTS_FILE};
use crate::metrics::{ask_stats, cell_summaries, group_mean, select_oracle_trace, wasted_compute, CellSummary, WasteMode};
use crate::rng::StreamKey;
use crate::stats::{cross_model_tau_matrix, point_of_no_return, TauMatrix};
use crate::trial::{AmbiguityClass, Condition, Dimension, Fraction, Protocol, TaskVariant, Trial};

/// Mean wasted value and unit count per fraction.
type WasteRow = BTreeMap<Fraction, (f64, usize)>;

pub const ANALYSIS_DIR: &str = "analysis";
pub const ANALYSIS_META: &str = "analysis_meta.json";
const K: u64 = 3;
const PONR_ALPHA: f64 = 0.05;

pub(crate) const VOI_FILE: &str = "voi_curves.csv";
pub(crate) const PLOT_VOI_FILE: &str = "plot_voi.csv";
pub(crate) const WASTED_FILE: &str = "wasted_compute.csv";
pub(crate) const PLOT_WASTED_FILE: &str = "plot_wasted.csv";
pub(crate) const KENDALL_FILE: &str = "kendall_matrix.csv";
pub(crate) const KENDALL_P_FILE: &str = "kendall_pvalues.csv";
pub(crate) const PONR_FILE: &str = "ponr.csv";
pub(crate) const PONR_TESTS_FILE: &str = "ponr_tests.csv";
pub(crate) const ASK_FILE: &str = "ask_summary.csv";
pub(crate) const FINDINGS_FILE: &str = "findings.csv";

struct Unit<'a> {
    benchmark: &'a str,
    dimension: Dimension,
    class: AmbiguityClass,
}

fn condition_columns() -> Vec<Condition> {
    let mut cols = vec![Condition::Oracle];
    cols.extend(Fraction::ALL.map(Condition::Injection));
    cols.push(Condition::NoClarification);
    cols
}

fn injection_header(lead: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(Fraction::ALL.map(|f| Condition::Injection(f).key()))
        .collect()
}

fn missing_as_input(e: crate::archive::ArchiveError) -> ReportError {
    match e {
        crate::archive::ArchiveError::Missing(p) => ReportError::MissingInput(p),
        other => ReportError::Archive(other),
    }
}

/// Computes every analysis table from a run directory. The output is a
/// pure function of the archive, variants and manifest.
pub fn cmd_analyze(
    run_dir: &Path,
    out_dir: Option<&Path>,
    filter: Option<&TrialFilter>,
) -> Result<PathBuf, ReportError> {
    let manifest = Manifest::read(run_dir).map_err(missing_as_input)?;
    let variants: Vec<TaskVariant> =
        crate::archive::read_json(&run_dir.join(VARIANTS_FILE)).map_err(missing_as_input)?;
    let trials = match filter {
        Some(f) => load_trials(run_dir.join(TRIALS_FILE), |v, m, c| f.accepts(v, m, c)),
        None => load_trials(run_dir.join(TRIALS_FILE), crate::archive::accept_all),
    }
    .map_err(missing_as_input)?;
    let n_graded = trials.iter().filter(|t| t.status.is_graded()).count();
    if n_graded == 0 {
        return Err(ReportError::NoGradedTrials);
    }

    let out = out_dir.map_or_else(|| run_dir.join(ANALYSIS_DIR), Path::to_path_buf);
    fs::create_dir_all(&out).map_err(|source| ReportError::Io {
        path: out.clone(),
        source,
    })?;

    let by_id: HashMap<&str, Unit<'_>> = variants
        .iter()
        .map(|v| {
            (
                v.variant_id.as_str(),
                Unit {
                    benchmark: &v.benchmark,
                    dimension: v.primary_dimension,
                    class: v.ambiguity_class,
                },
            )
        })
        .collect();
    let cells = cell_summaries(&trials, K);
    let unknown_cells = cells
        .iter()
        .filter(|c| !by_id.contains_key(c.variant_id.as_str()))
        .count();
    let unit = |c: &CellSummary| by_id.get(c.variant_id.as_str());

    let voi_meta = write_voi(&out, &cells, &unit)?;
    let wasted_meta = write_wasted(&out, &trials, &by_id)?;
    let models: Vec<String> = {
        let seen: BTreeSet<&str> = cells.iter().map(|c| c.model.as_str()).collect();
        let mut ordered: Vec<String> = manifest
            .agents
            .iter()
            .filter(|m| seen.contains(m.as_str()))
            .cloned()
            .collect();
        ordered.extend(
            seen.iter()
                .filter(|m| !manifest.agents.iter().any(|a| a == *m))
                .map(|m| m.to_string()),
        );
        ordered
    };
    let matrix = write_kendall(&out, &cells, &models)?;
    let ponr = write_ponr(&out, &cells, &unit, manifest.stats_seed)?;
    let asks = write_asks(&out, &trials, &models)?;
    write_findings(&out, &voi_meta.means, &ponr, matrix.as_ref())?;

    let meta = json!({
        "protocol": manifest.protocol,
        "k": K,
        "n_trials": trials.len(),
        "n_graded": n_graded,
        "n_cells": cells.len(),
        "models": models,
        "unknown_variant_cells": unknown_cells,
        "voi_cells": voi_meta.counts,
        "wasted_compute": wasted_meta,
        "kendall_shared_units": matrix.as_ref().map(|m| json!(m.shared_units)),
        "ask_summary": asks,
    });
    let path = out.join(ANALYSIS_META);
    let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
    Ok(out)
}

type Means = BTreeMap<(String, Dimension), BTreeMap<Condition, f64>>;

struct VoiMeta {
    means: Means,
    counts: Vec<Value>,
}

fn write_voi<'a>(
    out: &Path,
    cells: &[CellSummary],
    unit: &dyn Fn(&CellSummary) -> Option<&'a Unit<'a>>,
) -> Result<VoiMeta, ReportError> {
    let groups = group_mean(cells, |c| {
        unit(c).map(|u| (u.benchmark.to_string(), u.dimension, c.condition))
    });
    let mut injection_units: BTreeMap<(String, Dimension), BTreeSet<(&str, &str)>> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.condition.is_injection()) {
        if let Some(u) = unit(c) {
            injection_units
                .entry((u.benchmark.to_string(), u.dimension))
                .or_default()
                .insert((c.variant_id.as_str(), c.model.as_str()));
        }
    }
    let mut means: Means = BTreeMap::new();
    let mut counts = Vec::new();
    for ((bench, dim, cond), g) in &groups {
        means
            .entry((bench.clone(), *dim))
            .or_default()
            .insert(*cond, g.mean);
        counts.push(json!({
            "benchmark": bench,
            "dimension": dim,
            "condition": cond.key(),
            "n_units": g.n_units,
        }));
    }

    let columns = condition_columns();
    let mut header = vec!["benchmark", "dimension", "n"];
    let keys: Vec<String> = columns.iter().map(|c| c.key()).collect();
    header.extend(keys.iter().map(String::as_str));
    let mut table = Table::new(&header);
    let mut plot = Table::new(&["benchmark", "dimension", "series", "x", "y"]);
    for ((bench, dim), row) in &means {
        let n = injection_units.get(&(bench.clone(), *dim)).map_or(0, BTreeSet::len);
        let mut cells = vec![bench.clone(), dim.to_string(), n.to_string()];
        cells.extend(columns.iter().map(|c| row.get(c).map_or(String::new(), |&m| fmt4(m))));
        table.push(cells);
        for f in Fraction::ALL {
            if let Some(&y) = row.get(&Condition::Injection(f)) {
                plot.push(vec![bench.clone(), dim.to_string(), "injection".into(), f.as_str().into(), fmt4(y)]);
            }
        }
        for (series, cond) in [("oracle", Condition::Oracle), ("no_clarification", Condition::NoClarification)] {
            if let Some(&y) = row.get(&cond) {
                for x in ["0.0", "1.0"] {
                    plot.push(vec![bench.clone(), dim.to_string(), series.into(), x.into(), fmt4(y)]);
                }
            }
        }
    }
    table.write(&out.join(VOI_FILE))?;
    plot.write(&out.join(PLOT_VOI_FILE))?;
    Ok(VoiMeta { means, counts })
}

fn write_wasted(out: &Path, trials: &[Trial], by_id: &HashMap<&str, Unit<'_>>) -> Result<Value, ReportError> {
    let mut oracle: HashMap<(&str, &str), Vec<&Trial>> = HashMap::new();
    for t in trials.iter().filter(|t| t.condition == Condition::Oracle) {
        oracle.entry((&t.variant_id, &t.model)).or_default().push(t);
    }
    let traces: HashMap<(&str, &str), &Trial> = oracle
        .into_iter()
        .filter_map(|(k, ts)| select_oracle_trace(ts).map(|t| (k, t)))
        .collect();

    // (benchmark, mode, fraction) -> cell key -> per-trial values
    type CellValues<'a> = BTreeMap<(&'a str, &'a str), Vec<f64>>;
    let mut acc: BTreeMap<(String, &'static str, Fraction), CellValues<'_>> = BTreeMap::new();
    let mut no_trace = 0usize;
    for t in trials.iter().filter(|t| t.status.is_graded() && t.protocol == Protocol::Forced) {
        let Some(f) = t.condition.fraction() else { continue };
        let Some(u) = by_id.get(t.variant_id.as_str()) else { continue };
        let Some(trace) = traces.get(&(t.variant_id.as_str(), t.model.as_str())) else {
            no_trace += 1;
            continue;
        };
        for (label, mode) in [("fraction", WasteMode::Fraction), ("absolute", WasteMode::Absolute)] {
            let w = wasted_compute(t, &trace.actions, mode).expect("injection trial");
            acc.entry((u.benchmark.to_string(), label, f))
                .or_default()
                .entry((&t.variant_id, &t.model))
                .or_default()
                .push(w);
        }
    }

    let mut rows: BTreeMap<(String, &'static str), WasteRow> = BTreeMap::new();
    for ((bench, label, f), per_cell) in &acc {
        let cell_means: Vec<f64> = per_cell
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let mean = cell_means.iter().sum::<f64>() / cell_means.len() as f64;
        rows.entry((bench.clone(), *label))
            .or_default()
            .insert(*f, (mean, cell_means.len()));
    }

    let header = injection_header(&["benchmark", "mode"]);
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut table = Table::new(&header_refs);
    let mut plot = Table::new(&["benchmark", "mode", "x", "y"]);
    let mut meta = Vec::new();
    // fraction rows before absolute rows within each benchmark
    let mut keys: Vec<&(String, &str)> = rows.keys().collect();
    keys.sort_by_key(|(b, l)| (b.clone(), *l != "fraction"));
    for key in keys {
        let row = &rows[key];
        let (bench, label) = key;
        let mut cells = vec![bench.clone(), label.to_string()];
        cells.extend(Fraction::ALL.map(|f| row.get(&f).map_or(String::new(), |m| fmt4(m.0))));
        table.push(cells);
        for (f, (m, n)) in row {
            plot.push(vec![bench.clone(), label.to_string(), f.as_str().into(), fmt4(*m)]);
            meta.push(json!({"benchmark": bench, "mode": label, "fraction": f.as_str(), "n_cells": n}));
        }
    }
    table.write(&out.join(WASTED_FILE))?;
    plot.write(&out.join(PLOT_WASTED_FILE))?;
    Ok(json!({ "cells": meta, "trials_without_oracle_trace": no_trace }))
}

fn write_kendall(out: &Path, cells: &[CellSummary], models: &[String]) -> Result<Option<TauMatrix>, ReportError> {
    let mut header = vec!["model"];
    header.extend(models.iter().map(String::as_str));
    let mut taus = Table::new(&header);
    let mut pvals = Table::new(&header);
    let matrix = cross_model_tau_matrix(cells, models).ok();
    for (i, m) in models.iter().enumerate() {
        let mut t_row = vec![m.clone()];
        let mut p_row = vec![m.clone()];
        for j in 0..models.len() {
            let entry = matrix.as_ref().and_then(|mx| mx.entries[i][j].as_ref());
            t_row.push(entry.map_or_else(|| "--".into(), |r| fmt4(r.statistic)));
            p_row.push(entry.map_or_else(|| "--".into(), |r| format!("{:.3e}", r.p_value)));
        }
        taus.push(t_row);
        pvals.push(p_row);
    }
    taus.write(&out.join(KENDALL_FILE))?;
    pvals.write(&out.join(KENDALL_P_FILE))?;
    Ok(matrix)
}

fn ponr_seed(stats_seed: u64, dimension: Dimension, class: AmbiguityClass) -> u64 {
    StreamKey::new("ponr")
        .with_u64(stats_seed)
        .with_str(dimension.as_str())
        .with_str(class.as_str())
        .stream()
        .next_u64()
}

type Ponr = BTreeMap<(Dimension, AmbiguityClass), Option<Fraction>>;

fn write_ponr<'a>(
    out: &Path,
    cells: &[CellSummary],
    unit: &dyn Fn(&CellSummary) -> Option<&'a Unit<'a>>,
    stats_seed: u64,
) -> Result<Ponr, ReportError> {
    let mut groups: BTreeMap<(Dimension, AmbiguityClass), BTreeMap<Condition, Vec<f64>>> = BTreeMap::new();
    for c in cells {
        if let Some(u) = unit(c) {
            groups
                .entry((u.dimension, u.class))
                .or_default()
                .entry(c.condition)
                .or_default()
                .push(c.pass_at_k);
        }
    }
    let mut tests = Table::new(&[
        "dimension",
        "ambiguity_class",
        "fraction",
        "statistic",
        "p_value",
        "p_adjusted",
        "n_injection",
        "n_nc",
        "significant",
    ]);
    let mut result: Ponr = BTreeMap::new();
    for ((dim, class), by_cond) in &groups {
        let Some(nc) = by_cond.get(&Condition::NoClarification) else { continue };
        let inj: BTreeMap<Fraction, Vec<f64>> = by_cond
            .iter()
            .filter_map(|(c, v)| c.fraction().map(|f| (f, v.clone())))
            .collect();
        let Ok(outcome) = point_of_no_return(&inj, nc, PONR_ALPHA, ponr_seed(stats_seed, *dim, *class)) else {
            continue;
        };
        for t in &outcome.tests {
            tests.push(vec![
                dim.to_string(),
                class.to_string(),
                t.fraction.as_str().into(),
                fmt4(t.raw.statistic),
                format!("{:.6}", t.raw.p_value),
                format!("{:.6}", t.adjusted.p_value),
                inj[&t.fraction].len().to_string(),
                nc.len().to_string(),
                t.significant.to_string(),
            ]);
        }
        result.insert((*dim, *class), outcome.point);
    }

    let mut header = vec!["dimension"];
    header.extend(AmbiguityClass::ALL.map(AmbiguityClass::as_str));
    let mut grid = Table::new(&header);
    for dim in Dimension::ALL {
        let mut row = vec![dim.to_string()];
        for class in AmbiguityClass::ALL {
            row.push(match result.get(&(dim, class)) {
                Some(Some(f)) => format!("{}%", f.percent()),
                _ => "--".into(),
            });
        }
        grid.push(row);
    }
    grid.write(&out.join(PONR_FILE))?;
    tests.write(&out.join(PONR_TESTS_FILE))?;
    Ok(result)
}

fn write_asks(out: &Path, trials: &[Trial], models: &[String]) -> Result<Value, ReportError> {
    let path = out.join(ASK_FILE);
    let natural: Vec<&Trial> = trials
        .iter()
        .filter(|t| t.protocol == Protocol::Natural && t.status.is_graded())
        .collect();
    if natural.is_empty() {
        if path.exists() {
            fs::remove_file(&path).map_err(|source| ReportError::Io { path, source })?;
        }
        return Ok(Value::Null);
    }
    let mut table = Table::new(&[
        "model",
        "sessions",
        "ask_rate",
        "total_calls",
        "mean_first_timing",
        "median_first_timing",
        "calls_per_asking_session",
    ]);
    for m in models {
        let sessions: Vec<Trial> = natural.iter().filter(|t| &t.model == m).map(|t| (*t).clone()).collect();
        if sessions.is_empty() {
            continue;
        }
        let s = ask_stats(m, &sessions);
        table.push(vec![
            s.model,
            s.sessions.to_string(),
            fmt4(s.ask_rate),
            s.total_calls.to_string(),
            opt4(s.mean_first_timing),
            opt4(s.median_first_timing),
            fmt4(s.calls_per_asking_session),
        ]);
    }
    table.write(&path)?;
    Ok(json!({ "sessions": natural.len() }))
}

fn write_findings(
    out: &Path,
    means: &Means,
    ponr: &Ponr,
    matrix: Option<&TauMatrix>,
) -> Result<(), ReportError> {
    let mut table = Table::new(&["finding", "subject", "value"]);
    let inj = |row: &BTreeMap<Condition, f64>, f| row.get(&Condition::Injection(f)).copied();
    for ((bench, dim), row) in means {
        let subject = format!("{bench}/{dim}");
        let (Some(a), Some(b)) = (inj(row, Fraction::P10), inj(row, Fraction::P50)) else { continue };
        table.push(vec!["drop_10_to_50".into(), subject.clone(), fmt4(a - b)]);
        let span = match (row.get(&Condition::Oracle), row.get(&Condition::NoClarification)) {
            (Some(o), Some(n)) if (o - n).abs() > 1e-12 => Some((a - b) / (o - n)),
            _ => None,
        };
        table.push(vec!["normalized_drop_10_to_50".into(), subject, opt4(span)]);
    }
    for ((dim, class), point) in ponr {
        table.push(vec![
            "point_of_no_return".into(),
            format!("{dim}/{class}"),
            point.map_or_else(|| "--".into(), |f| format!("{}%", f.percent())),
        ]);
    }
    if let Some(m) = matrix {
        let off: Vec<f64> = (0..m.models.len())
            .flat_map(|i| (i + 1..m.models.len()).map(move |j| (i, j)))
            .filter_map(|(i, j)| m.entries[i][j].as_ref().map(|r| r.statistic))
            .collect();
        if let (Some(lo), Some(hi)) = (
            off.iter().copied().reduce(f64::min),
            off.iter().copied().reduce(f64::max),
        ) {
            table.push(vec!["tau_min".into(), "all_pairs".into(), fmt4(lo)]);
            table.push(vec!["tau_max".into(), "all_pairs".into(), fmt4(hi)]);
        }
    }
    table.write(&out.join(FINDINGS_FILE))
}
