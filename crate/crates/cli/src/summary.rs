//! Aggregation of report files: success rates with Wilson intervals for
//! reconstruction runs, error quantiles for estimator runs.

use crate::experiments::Report;
use anyhow::{anyhow, bail, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Two-sided Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    assert!(trials > 0);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

const WILSON_Z: f64 = 1.96;

fn column(report: &Report, name: &str) -> Result<usize> {
    report
        .columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| anyhow!("report lacks a {name:?} column"))
}

/// Rate of `q` among the sorted values by nearest-rank.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// One aggregate table over reports that must all share one kind.
pub fn summarize(reports: &[Report]) -> Result<String> {
    if reports.is_empty() {
        return Err(anyhow!("no reports to summarize"));
    }
    let kind = &reports[0].kind;
    if let Some(other) = reports.iter().find(|r| &r.kind != kind) {
        bail!("mixed report kinds: {} and {}", kind, other.kind);
    }
    match kind.as_str() {
        "recon-known" | "recon-unknown" => summarize_success(reports),
        "estimator-error" => summarize_estimator(reports),
        other => bail!("kind {other} has no aggregate form, read its report directly"),
    }
}

fn summarize_success(reports: &[Report]) -> Result<String> {
    // (n, t, config) -> (successes, trials)
    let mut cells: BTreeMap<(u64, u64, String), (u64, u64)> = BTreeMap::new();
    for report in reports {
        let n_col = column(report, "n")?;
        let t_col = column(report, "t")?;
        let s_col = column(report, "success")?;
        for row in &report.rows {
            let key = (
                row[n_col].parse::<u64>()?,
                row[t_col].parse::<u64>()?,
                report.config.clone(),
            );
            let success = row[s_col].parse::<u64>()?;
            let cell = cells.entry(key).or_insert((0, 0));
            cell.0 += success;
            cell.1 += 1;
        }
    }
    if cells.is_empty() {
        return Err(anyhow!("reports contain no data rows"));
    }
    let mut out = String::from("n,t,config,runs,successes,rate,wilson_low,wilson_high\n");
    for ((n, t, config), (successes, trials)) in cells {
        let rate = successes as f64 / trials as f64;
        let (low, high) = wilson_interval(successes, trials, WILSON_Z);
        writeln!(out, "{n},{t},{config},{trials},{successes},{rate},{low},{high}")?;
    }
    Ok(out)
}

fn summarize_estimator(reports: &[Report]) -> Result<String> {
    // (n, t, config, letter) -> abs errors
    let mut cells: BTreeMap<(u64, u64, String, u64), Vec<f64>> = BTreeMap::new();
    for report in reports {
        let n_col = column(report, "n")?;
        let t_col = column(report, "t")?;
        let letter_col = column(report, "letter")?;
        let err_col = column(report, "abs_err")?;
        for row in &report.rows {
            let key = (
                row[n_col].parse::<u64>()?,
                row[t_col].parse::<u64>()?,
                report.config.clone(),
                row[letter_col].parse::<u64>()?,
            );
            cells.entry(key).or_default().push(row[err_col].parse::<f64>()?);
        }
    }
    if cells.is_empty() {
        return Err(anyhow!("reports contain no data rows"));
    }
    let mut out = String::from("n,t,config,letter,runs,abs_err_p50,abs_err_p90,abs_err_max\n");
    for ((n, t, config, letter), mut errs) in cells {
        errs.sort_by(|a, b| a.total_cmp(b));
        writeln!(
            out,
            "{n},{t},{config},{letter},{},{},{},{}",
            errs.len(),
            quantile(&errs, 0.5),
            quantile(&errs, 0.9),
            errs[errs.len() - 1]
        )?;
    }
    Ok(out)
}
