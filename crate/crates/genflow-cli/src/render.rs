//! report.json to plot-ready CSV files.

use std::path::{Path, PathBuf};

use crate::formats::write_columns;
use crate::report::Report;
use crate::tasks::create;
use crate::CliError;

pub fn read_report(path: &Path) -> Result<Report, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: malformed report: {e}", path.display())))
}

fn safe_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// One `(t, name)` CSV per monitored quantity and one `(h, defect, fitted_order)`
/// CSV per refinement study. Returns the files written, in order.
pub fn render(report: &Report, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(CliError::runtime)?;
    let mut written = Vec::new();
    if let Some(ev) = &report.evolution {
        for s in &ev.monitors {
            if s.values.len() != ev.t.len() {
                return Err(CliError::Schema(format!("monitor `{}` has {} values for {} times", s.name, s.values.len(), ev.t.len())));
            }
            let p = out.join(format!("{}.csv", safe_name(&s.name)));
            write_columns(create(&p)?, &["t", &s.name], &[&ev.t, &s.values])?;
            written.push(p);
        }
    }
    for st in &report.studies {
        if st.h.len() != st.defect.len() {
            return Err(CliError::Schema(format!("study `{}` has mismatched columns", st.check)));
        }
        let order = vec![st.fitted_order; st.h.len()];
        let p = out.join(format!("study_{}.csv", safe_name(&st.check)));
        write_columns(create(&p)?, &["h", "defect", "fitted_order"], &[&st.h, &st.defect, &order])?;
        written.push(p);
    }
    Ok(written)
}
