use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::{instance_seed, ExperimentResult, HarnessError};

pub const TRACE_HEADER: &str = "round,mean_cum_regret,ci_low,ci_high";
pub const SUMMARY_HEADER: &str = "algorithm,sweep_value,final_mean,final_ci_half,wall_ms";
/// Name of the summary file inside an experiment directory.
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub dir: PathBuf,
    pub traces: Vec<PathBuf>,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub round: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Writes `<root>/<experiment>/`: one trace CSV per series, `summary.csv`
/// and `manifest.json`. Everything but the `wall_ms` column is a pure
/// function of the spec.
pub fn write_outputs(result: &ExperimentResult, root: &Path) -> Result<OutputFiles, HarnessError> {
    let dir = root.join(&result.spec.name);
    fs::create_dir_all(&dir)?;
    let mut traces = Vec::new();
    let mut summary = String::from(SUMMARY_HEADER);
    summary.push('\n');
    for trace in &result.traces {
        let mut csv = String::with_capacity(trace.horizon() * 48);
        csv.push_str(TRACE_HEADER);
        csv.push('\n');
        for (t, (m, h)) in trace.mean.iter().zip(&trace.ci_half).enumerate() {
            let _ = writeln!(csv, "{},{},{},{}", t + 1, m, m - h, m + h);
        }
        let path = dir.join(format!("{}.csv", file_stem(&trace.series_name())));
        fs::write(&path, csv)?;
        traces.push(path);
        let sweep = trace.sweep_value.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            trace.algorithm,
            sweep,
            trace.final_mean(),
            trace.final_ci_half(),
            trace.wall_ms
        );
    }
    let summary_path = dir.join(SUMMARY_FILE);
    fs::write(&summary_path, summary)?;

    let spec = &result.spec;
    let seeds: Vec<u64> = (0..spec.replications)
        .map(|r| instance_seed(spec, r))
        .collect();
    let manifest = json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "spec": spec,
        "instance_seeds": seeds,
        "series": result
            .traces
            .iter()
            .map(|t| json!({"label": t.series_name(), "file": format!("{}.csv", file_stem(&t.series_name()))}))
            .collect::<Vec<_>>(),
        "single_replication_warning": spec.replications == 1,
    });
    let manifest_path = dir.join("manifest.json");
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
    )?;
    Ok(OutputFiles {
        dir,
        traces,
        summary: summary_path,
        manifest: manifest_path,
    })
}

/// File-name-safe form of a series name; the manifest keeps the mapping.
pub fn file_stem(series: &str) -> String {
    series
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._@=+-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Parses a trace CSV; `None` when the header is not a trace header.
pub fn read_trace_csv(path: &Path) -> Result<Option<Vec<TraceRow>>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Ok(None);
    }
    let bad =
        |line: &str| HarnessError::Config(format!("{}: malformed row `{line}`", path.display()));
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(line));
        }
        let f = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(line));
        rows.push(TraceRow {
            round: cols[0].trim().parse().map_err(|_| bad(line))?,
            mean: f(cols[1])?,
            ci_low: f(cols[2])?,
            ci_high: f(cols[3])?,
        });
    }
    Ok(Some(rows))
}
