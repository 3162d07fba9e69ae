//! Plain-text summary of a finished run, read back from `summary.json`.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

/// Renders the run summary under `dir` as an aligned table.
pub fn render(dir: &Path) -> Result<String, String> {
    let path = dir.join("summary.json");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let summary: Value =
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    render_summary(&summary).ok_or_else(|| format!("{}: unexpected schema", path.display()))
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if x.is_finite() => format!("{x:.4}"),
        _ => "-".to_string(),
    }
}

fn render_summary(summary: &Value) -> Option<String> {
    let mut out = String::new();
    writeln!(
        out,
        "scenario: {}   build: {}   trials: {}/{} (flagged {})   steps: {}",
        summary.get("scenario")?.as_str()?,
        summary.get("build")?.as_str()?,
        summary.get("trials_used")?,
        summary.get("trials_requested")?,
        summary.get("flagged_trials")?,
        summary.get("steps")?,
    )
    .ok()?;
    let estimators = summary.get("estimators")?.as_object()?;
    writeln!(
        out,
        "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "estimator", "rmse", "pos_rmse", "att_rmse", "cover3s", "nees_in", "mean_kl"
    )
    .ok()?;
    for (name, e) in estimators {
        writeln!(
            out,
            "{:<14} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
            name,
            num(e.get("rmse")?),
            num(e.get("pos_rmse")?),
            e.get("att_rmse").map(num).unwrap_or_else(|| "-".into()),
            num(e.get("coverage_3sigma")?),
            num(e.get("nees_within_fraction")?),
            num(e.get("mean_kl")?),
        )
        .ok()?;
    }
    let first = estimators.values().next()?;
    writeln!(
        out,
        "nees bounds (95%): [{}, {}] at dim {}",
        num(first.get("nees_lower")?),
        num(first.get("nees_upper")?),
        first.get("dim")?,
    )
    .ok()?;
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_a_written_run() {
        let cfg = crate::config::LinearToyConfig {
            trials: 3,
            steps: 8,
            ..Default::default()
        };
        let out = crate::runner::run_linear(&cfg, 1, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let config = serde_json::to_value(&cfg).unwrap();
        crate::runner::write_outputs(&out, dir.path(), &config).unwrap();
        let table = render(dir.path()).unwrap();
        assert!(table.contains("scenario: linear"));
        assert!(table.contains("proposed-sp"));
        assert!(table.contains("naive"));
        assert!(table.contains("nees bounds"));
    }

    #[test]
    fn missing_directory_is_a_readable_error() {
        let err = render(Path::new("/nonexistent-run-dir")).unwrap_err();
        assert!(err.contains("summary.json"));
    }
}
