//! Aggregates run verdicts into a deterministic `report.csv` and a
//! human-oriented `report.txt`. Wall-clock timing appears only in the text
//! report (clearly marked), so the CSV stays byte-identical across reruns.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cipherid::regressors::TaskSpec;

use crate::runner::{read_verdict, VerdictFile};

/// One run pulled into a report.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub dir: PathBuf,
    pub verdict: VerdictFile,
}

/// Short CSV-safe task tag: structure kind plus its order parameters.
pub fn task_label(task: &TaskSpec) -> String {
    match *task {
        TaskSpec::TransferFunction { n, m } => format!("tf_{n}_{m}"),
        TaskSpec::StateSpace { n, n_u } => format!("ssm_{n}_{n_u}"),
        TaskSpec::MultiStep { n, horizon } => format!("msp_{n}_{horizon}"),
    }
}

/// Reads `verdict.json` from every directory; a directory without one is an
/// error naming the offender, not a silently shorter report.
pub fn collect(dirs: &[PathBuf]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let path = dir.join("verdict.json");
        if !path.exists() {
            bail!(
                "missing run: {} has no verdict.json (run `identify` or `validate` there first)",
                dir.display()
            );
        }
        let verdict =
            read_verdict(&path).with_context(|| format!("unreadable verdict in {}", dir.display()))?;
        rows.push(ReportRow {
            dir: dir.clone(),
            verdict: verdict.clone(),
        });
    }
    Ok(rows)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-(task, backend) mean and max of the final error, attached to every
/// row of the group so sweeps read off their aggregate in place.
fn group_stats(rows: &[ReportRow]) -> Vec<(Option<f64>, Option<f64>)> {
    let key = |r: &ReportRow| {
        (
            task_label(&r.verdict.task),
            r.verdict.backend.as_str().to_string(),
        )
    };
    rows.iter()
        .map(|row| {
            let k = key(row);
            let errors: Vec<f64> = rows
                .iter()
                .filter(|r| key(r) == k)
                .filter_map(|r| r.verdict.final_error)
                .collect();
            if errors.is_empty() {
                (None, None)
            } else {
                let mean = errors.iter().sum::<f64>() / errors.len() as f64;
                let max = errors.iter().cloned().fold(f64::MIN, f64::max);
                (Some(mean), Some(max))
            }
        })
        .collect()
}

const HEADER: [&str; 13] = [
    "task",
    "seed",
    "backend",
    "mode",
    "L",
    "final_error",
    "error_vs_true",
    "cert_spectral",
    "cert_magnitude",
    "guaranteed",
    "depth_used",
    "mean_error",
    "max_error",
];

fn row_cells(row: &ReportRow, stats: (Option<f64>, Option<f64>)) -> [String; 13] {
    let v = &row.verdict;
    [
        task_label(&v.task),
        opt_u64(v.seed),
        v.backend.as_str().to_string(),
        v.mode.as_str().to_string(),
        v.samples.to_string(),
        opt_f64(v.final_error),
        opt_f64(v.error_vs_true),
        opt_bool(v.cert_spectral_ok),
        opt_bool(v.cert_magnitude_ok),
        v.guaranteed.to_string(),
        v.depth_used.map(|d| d.to_string()).unwrap_or_default(),
        opt_f64(stats.0),
        opt_f64(stats.1),
    ]
}

/// Renders the deterministic CSV.
pub fn render_csv(rows: &[ReportRow]) -> String {
    let stats = group_stats(rows);
    let mut out = HEADER.join(",");
    out.push('\n');
    for (row, stat) in rows.iter().zip(stats) {
        out.push_str(&row_cells(row, stat).join(","));
        out.push('\n');
    }
    out
}

/// Renders the text report: the same table aligned for reading, then any
/// wall-clock timing gathered from the run directories.
pub fn render_text(rows: &[ReportRow]) -> String {
    let stats = group_stats(rows);
    let table: Vec<[String; 13]> = rows
        .iter()
        .zip(stats)
        .map(|(row, stat)| row_cells(row, stat))
        .collect();
    let mut widths: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
    for cells in &table {
        for (w, cell) in widths.iter_mut().zip(cells.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = String::new();
    for (h, w) in HEADER.iter().zip(&widths) {
        let _ = write!(line, "{h:<w$}  ");
    }
    out.push_str(line.trim_end());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for cells in &table {
        let mut line = String::new();
        for (cell, w) in cells.iter().zip(&widths) {
            let _ = write!(line, "{cell:<w$}  ");
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }

    let mut timing = String::new();
    for row in rows {
        let path = row.dir.join("timing.txt");
        if let Ok(text) = fs::read_to_string(&path) {
            let flat = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join("  ");
            let _ = writeln!(timing, "{}: {}", row.dir.display(), flat);
        }
    }
    if !timing.is_empty() {
        out.push_str("\nTiming (wall clock; non-deterministic, excluded from report.csv)\n");
        out.push_str(&timing);
    }
    out
}

/// Writes `report.csv` and `report.txt` into `out_dir`; returns their paths.
pub fn write_report(out_dir: &Path, rows: &[ReportRow]) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("report.csv");
    let txt_path = out_dir.join("report.txt");
    fs::write(&csv_path, render_csv(rows))?;
    fs::write(&txt_path, render_text(rows))?;
    Ok((csv_path, txt_path))
}
