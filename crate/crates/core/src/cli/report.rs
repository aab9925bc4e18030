//! Cross-campaign comparison tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::fuzz::{CampaignDir, StatsPoint};

/// Each speed divided by the mean of all speeds. The last value is taken
/// as the complement so that the results average to exactly 1.
pub fn relative_speeds(speeds: &[f64]) -> Vec<f64> {
    let n = speeds.len() as f64;
    let total: f64 = speeds.iter().sum();
    if speeds.is_empty() || total <= 0.0 {
        return vec![1.0; speeds.len()];
    }
    let mut out: Vec<f64> = speeds.iter().map(|s| n * s / total).collect();
    let head: f64 = out[..speeds.len() - 1].iter().sum();
    *out.last_mut().expect("non-empty") = n - head;
    out
}

/// A table with a header row, rendered as CSV or aligned text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn csv(&self) -> String {
        let mut out = self.header.join(",") + "\n";
        for r in &self.rows {
            out += &r.join(",");
            out.push('\n');
        }
        out
    }

    pub fn text(&self) -> String {
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| self.rows.iter().map(|r| r[c].len()).chain([self.header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let mut s = String::new();
            for (c, w) in cells.iter().zip(&widths) {
                let _ = write!(s, "{c:<w$}  ");
            }
            s.trim_end().to_string() + "\n"
        };
        let mut out = format!("{}\n", self.name);
        out += &line(&self.header);
        for r in &self.rows {
            out += &line(r);
        }
        out
    }
}

fn value_at(series: &[StatsPoint], time: u64, field: fn(&StatsPoint) -> u64) -> u64 {
    series.iter().take_while(|p| p.time <= time).last().map_or(0, field)
}

fn over_time(name: &str, runs: &[(String, CampaignDir)], field: fn(&StatsPoint) -> u64) -> Table {
    let times: BTreeSet<u64> = runs.iter().flat_map(|(_, d)| d.series.iter().map(|p| p.time)).collect();
    let mut header = vec!["time".to_string()];
    header.extend(runs.iter().map(|(n, _)| n.clone()));
    let rows = times
        .into_iter()
        .map(|t| {
            let mut row = vec![t.to_string()];
            row.extend(runs.iter().map(|(_, d)| value_at(&d.series, t, field).to_string()));
            row
        })
        .collect();
    Table { name: name.into(), header, rows }
}

/// Relative speed, paths over time, crashes over time and time to first
/// crash for the labelled campaign directories.
pub fn report_tables(runs: &[(String, CampaignDir)]) -> Vec<Table> {
    let speeds: Vec<f64> = runs.iter().map(|(_, d)| d.stat("execs_per_sec").unwrap_or(0.0)).collect();
    let speed = Table {
        name: "relative_speed".into(),
        header: vec!["fuzzer".into(), "execs_per_sec".into(), "relative_speed".into()],
        rows: runs
            .iter()
            .zip(&speeds)
            .zip(relative_speeds(&speeds))
            .map(|(((n, _), s), r)| vec![n.clone(), format!("{s:.2}"), format!("{r}")])
            .collect(),
    };
    let first = Table {
        name: "first_crash".into(),
        header: vec!["fuzzer".into(), "time_to_first_crash".into(), "execs_to_first_crash".into()],
        rows: runs
            .iter()
            .map(|(n, d)| {
                let timeout = d.stats.get("timeout").cloned().unwrap_or_else(|| "?".into());
                match (d.stat::<f64>("first_crash_time"), d.stats.get("first_crash_execs")) {
                    (Some(t), Some(e)) => vec![n.clone(), format!("{t:.3}"), e.clone()],
                    _ => vec![n.clone(), format!("> {timeout}"), "-".into()],
                }
            })
            .collect(),
    };
    vec![
        speed,
        over_time("paths", runs, |p| p.paths_total as u64),
        over_time("crashes", runs, |p| p.unique_crashes as u64),
        first,
    ]
}
