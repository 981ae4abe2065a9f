use std::fs;
use std::path::{Path, PathBuf};

use super::analyze::{
    ASK_FILE, FINDINGS_FILE, KENDALL_FILE, KENDALL_P_FILE, PONR_FILE, VOI_FILE, WASTED_FILE,
};
use super::table::Table;
use super::ReportError;

pub const REPORT_FILE: &str = "report.txt";

fn section(out: &mut String, title: &str, body: &str) {
    out.push_str(title);
    out.push('\n');
    out.push_str(&"=".repeat(title.len()));
    out.push_str("\n\n");
    out.push_str(body);
    out.push('\n');
}

/// Renders the analysis CSVs as one text document. No number is computed
/// here; every value is copied from a CSV cell.
pub fn cmd_report(analysis_dir: &Path) -> Result<PathBuf, ReportError> {
    let read = |name: &str| Table::read(&analysis_dir.join(name));
    let voi = read(VOI_FILE)?;
    let wasted = read(WASTED_FILE)?;
    let tau = read(KENDALL_FILE)?;
    let tau_p = read(KENDALL_P_FILE)?;
    let ponr = read(PONR_FILE)?;
    let findings = read(FINDINGS_FILE)?;
    let asks = match read(ASK_FILE) {
        Ok(t) => Some(t),
        Err(ReportError::MissingInput(_)) => None,
        Err(e) => return Err(e),
    };

    let mut out = String::new();
    section(&mut out, "VOI curves (mean pass@3 per cell)", &voi.render());
    section(&mut out, "Wasted compute (pre-injection actions absent from the oracle trace)", &wasted.render());
    section(
        &mut out,
        "Cross-model Kendall tau-b",
        &format!("{}\np-values\n\n{}", tau.render(), tau_p.render()),
    );
    section(&mut out, "Point of no return", &ponr.render());
    match asks {
        Some(t) => section(&mut out, "Natural ask", &t.render()),
        None => section(&mut out, "Natural ask", "Omitted: this run used the forced-injection protocol.\n"),
    }
    section(&mut out, "Findings", &findings.render());

    let path = analysis_dir.join(REPORT_FILE);
    fs::write(&path, &out).map_err(|source| ReportError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
