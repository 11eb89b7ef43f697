//! Tidy plot-data tables built from a directory of campaign results.
//!
//! - `weekly_biases.csv`: starboard and port bias per (platform, week), the
//!   two rows of a fit sharing a `pair_id`.
//! - `port_minus_starboard_sorted.csv`: per platform, weekly port-minus-
//!   starboard estimates sorted increasingly with their plotting quantile.
//! - `difference_sd_sorted.csv`: the same for `√2·σ`.
//! - `model_vs_empirical.csv`: per (platform, antenna), the mean weekly model
//!   bias next to the mean weekly empirical bias.
//! - `skipped.txt`: result files that could not be used, with the reason.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::campaign::write_atomic;
use crate::fit::{Estimate, FitResult};
use crate::{Error, Result};

/// One fit as used by the report.
#[derive(Clone, Debug)]
pub struct ReportEntry {
    pub platform: String,
    pub week: usize,
    pub fit: FitResult,
}

#[derive(Clone, Debug, Default)]
pub struct ReportInputs {
    /// Sorted by (platform, week).
    pub entries: Vec<ReportEntry>,
    /// `(platform, antenna) -> [(week, bias)]` from `empirical.csv`, when
    /// present.
    pub empirical: BTreeMap<(String, String), Vec<(usize, f64)>>,
    pub skipped: Vec<(PathBuf, String)>,
}

fn entry_from_file(path: &Path) -> std::result::Result<ReportEntry, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let fit: FitResult = serde_json::from_str(&text).map_err(|e| format!("not a fit result: {e}"))?;
    let platform = fit.provenance.data.get("platform").cloned().ok_or("no platform in provenance")?;
    let week = fit
        .provenance
        .data
        .get("week.index")
        .and_then(|w| w.parse().ok())
        .ok_or("no week index in provenance")?;
    Ok(ReportEntry { platform, week, fit })
}

/// Reads every `*.json` under `results/fits` (or `results` itself when it
/// has no `fits` subdirectory) and `results/empirical.csv` if present.
pub fn load_results(results: &Path) -> Result<ReportInputs> {
    let fits_dir = if results.join("fits").is_dir() { results.join("fits") } else { results.to_path_buf() };
    let mut files: Vec<PathBuf> = std::fs::read_dir(&fits_dir)
        .map_err(|e| Error::io(&fits_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();

    let mut inputs = ReportInputs::default();
    for path in files {
        match entry_from_file(&path) {
            Ok(e) => inputs.entries.push(e),
            Err(reason) => inputs.skipped.push((path, reason)),
        }
    }
    inputs.entries.sort_by(|a, b| a.platform.cmp(&b.platform).then(a.week.cmp(&b.week)));

    let emp_path = results.join("empirical.csv");
    if emp_path.is_file() {
        let mut reader = csv::Reader::from_path(&emp_path)?;
        for (k, rec) in reader.records().enumerate() {
            let parsed = rec.map_err(|e| e.to_string()).and_then(|r| {
                let field = |i: usize| r.get(i).unwrap_or("").to_string();
                if field(3) != "ok" {
                    return Ok(None);
                }
                let week: usize = field(1).parse().map_err(|_| "bad week".to_string())?;
                let bias: f64 = field(5).parse().map_err(|_| "bad bias".to_string())?;
                Ok(Some((field(0), field(2), week, bias)))
            });
            match parsed {
                Ok(Some((platform, antenna, week, bias))) => {
                    inputs.empirical.entry((platform, antenna)).or_default().push((week, bias));
                }
                Ok(None) => {}
                Err(reason) => inputs.skipped.push((emp_path.clone(), format!("row {}: {reason}", k + 2))),
            }
        }
    }
    Ok(inputs)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn weekly_biases_csv(entries: &[ReportEntry]) -> String {
    let mut out = String::from("platform,week,antenna,bias,se,pair_id,converged\n");
    for e in entries {
        let b = &e.fit.bias_summary;
        let pair_id = format!("{}-w{:02}", e.platform, e.week);
        for (antenna, est) in [("starboard", b.starboard), ("port", b.port)] {
            let _ = writeln!(
                out,
                "{},{},{antenna},{},{},{pair_id},{}",
                e.platform,
                e.week,
                est.value,
                opt(est.se),
                e.fit.converged
            );
        }
    }
    out
}

/// Per platform, estimates sorted increasingly (ties by week) with plotting
/// quantile `(rank + 0.5) / count`.
pub fn sorted_quantiles_csv(entries: &[ReportEntry], pick: impl Fn(&FitResult) -> Estimate) -> String {
    let mut out = String::from("platform,rank,quantile,estimate,se,week\n");
    let mut by_platform: BTreeMap<&str, Vec<(f64, Option<f64>, usize)>> = BTreeMap::new();
    for e in entries {
        let est = pick(&e.fit);
        by_platform.entry(&e.platform).or_default().push((est.value, est.se, e.week));
    }
    for (platform, mut rows) in by_platform {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let n = rows.len() as f64;
        for (rank, (value, se, week)) in rows.into_iter().enumerate() {
            let q = (rank as f64 + 0.5) / n;
            let _ = writeln!(out, "{platform},{rank},{q},{value},{},{week}", opt(se));
        }
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn model_vs_empirical_csv(inputs: &ReportInputs) -> String {
    let mut out = String::from("platform,antenna,model_mean,model_weeks,empirical_mean,empirical_weeks\n");
    let mut model: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
    for e in &inputs.entries {
        let b = &e.fit.bias_summary;
        model.entry((&e.platform, "starboard")).or_default().push(b.starboard.value);
        model.entry((&e.platform, "port")).or_default().push(b.port.value);
    }
    for ((platform, antenna), values) in model {
        let emp: Vec<f64> = inputs
            .empirical
            .get(&(platform.to_string(), antenna.to_string()))
            .map(|v| v.iter().map(|(_, b)| *b).collect())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{platform},{antenna},{},{},{},{}",
            opt(mean(&values)),
            values.len(),
            opt(mean(&emp)),
            emp.len()
        );
    }
    out
}

/// Files written by [`write_report`].
pub const REPORT_FILES: [&str; 5] = [
    "weekly_biases.csv",
    "port_minus_starboard_sorted.csv",
    "difference_sd_sorted.csv",
    "model_vs_empirical.csv",
    "skipped.txt",
];

/// Builds all tables from `results` and writes them to `out_dir`.
pub fn write_report(results: &Path, out_dir: &Path) -> Result<ReportInputs> {
    let inputs = load_results(results)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut skipped = String::new();
    for (path, reason) in &inputs.skipped {
        let _ = writeln!(skipped, "{}\t{reason}", path.display());
    }
    let tables = [
        weekly_biases_csv(&inputs.entries),
        sorted_quantiles_csv(&inputs.entries, |f| f.bias_summary.port_minus_starboard),
        sorted_quantiles_csv(&inputs.entries, |f| f.bias_summary.difference_sd),
        model_vs_empirical_csv(&inputs),
        skipped,
    ];
    for (name, body) in REPORT_FILES.iter().zip(tables) {
        write_atomic(&out_dir.join(name), body.as_bytes())?;
    }
    Ok(inputs)
}
