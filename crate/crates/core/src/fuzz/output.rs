//! On-disk layout of a campaign output directory.
//!
//! ```text
//! queue/id:000000,time:0        retained inputs, time in milliseconds
//! crashes/id:000000,sig:<key>   one input per unique crash
//! hangs/id:000000,sig:<key>
//! crash_reports.json            crash and hang reports
//! fuzzer_stats                  key=value summary
//! plot_data                     time series, CSV
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::{CampaignConfig, CampaignResult, CrashReport, StatsPoint};

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), OutputError> {
    fs::write(path, data).map_err(io_err(path))
}

fn mkdir(path: &Path) -> Result<(), OutputError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub const PLOT_HEADER: &str = "# unix_time, paths_total, unique_crashes, execs_done";

/// Writes everything except the manifest, which the caller owns.
pub fn write_campaign_dir(
    dir: &Path,
    program_name: &str,
    config: &CampaignConfig,
    result: &CampaignResult,
) -> Result<(), OutputError> {
    for sub in ["queue", "crashes", "hangs"] {
        mkdir(&dir.join(sub))?;
    }
    for s in &result.queue {
        let ms = (s.discovery_time * 1000.0).round() as u64;
        write(&dir.join("queue").join(format!("id:{:06},time:{ms}", s.id)), &s.input)?;
    }
    for (sub, reports) in [("crashes", &result.crashes), ("hangs", &result.hangs)] {
        for (i, r) in reports.iter().enumerate() {
            write(&dir.join(sub).join(format!("id:{i:06},sig:{:016x}", r.dedup_key)), &r.input)?;
        }
    }
    let all: Vec<&CrashReport> = result.crashes.iter().chain(&result.hangs).collect();
    let json = serde_json::to_string_pretty(&all).expect("reports serialize");
    write(&dir.join("crash_reports.json"), json + "\n")?;

    let st = &result.stats;
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    let rows = [
        ("program", program_name.to_string()),
        ("mode", config.mode.as_str().to_string()),
        ("rng_seed", config.rng_seed.to_string()),
        ("timeout", config.timeout.to_string()),
        ("run_time", format!("{:.3}", st.elapsed)),
        ("execs_done", st.execs_done.to_string()),
        ("execs_per_sec", format!("{:.2}", st.execs_per_sec)),
        ("paths_total", st.paths_total.to_string()),
        ("unique_crashes", st.unique_crashes.to_string()),
        ("unique_bugs", st.unique_bugs.to_string()),
        ("unique_hangs", st.unique_hangs.to_string()),
        ("first_crash_time", opt(st.first_crash_time.map(|t| format!("{t:.3}")))),
        ("first_crash_execs", opt(st.first_crash_execs.map(|e| e.to_string()))),
    ];
    let stats: String = rows.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write(&dir.join("fuzzer_stats"), stats)?;

    let mut plot = format!("{PLOT_HEADER}\n");
    for p in &st.series {
        plot += &format!("{}, {}, {}, {}\n", p.time, p.paths_total, p.unique_crashes, p.execs_done);
    }
    write(&dir.join("plot_data"), plot)
}

/// Parsed contents of a campaign output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignDir {
    pub stats: BTreeMap<String, String>,
    pub series: Vec<StatsPoint>,
    pub reports: Vec<CrashReport>,
}

impl CampaignDir {
    pub fn stat<T: std::str::FromStr>(&self, key: &str) -> Option<T> {
        self.stats.get(key).and_then(|v| v.parse().ok())
    }
}

pub fn read_campaign_dir(dir: &Path) -> Result<CampaignDir, OutputError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(io_err(&path)).map(|t| (path, t))
    };
    let bad = |path: &Path, message: String| OutputError::Format { path: path.to_path_buf(), message };

    let (path, text) = read("fuzzer_stats")?;
    let mut stats = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| bad(&path, format!("malformed line {line:?}")))?;
        stats.insert(k.trim().to_string(), v.trim().to_string());
    }

    let (path, text) = read("plot_data")?;
    let mut series = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let f: Vec<u64> = line
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(&path, format!("{line:?}: {e}")))?;
        let [time, paths, crashes, execs] = f[..] else {
            return Err(bad(&path, format!("expected 4 columns in {line:?}")));
        };
        series.push(StatsPoint {
            time,
            paths_total: paths as usize,
            unique_crashes: crashes as usize,
            execs_done: execs,
        });
    }

    let (path, text) = read("crash_reports.json")?;
    let reports = serde_json::from_str(&text).map_err(|e| bad(&path, e.to_string()))?;
    Ok(CampaignDir { stats, series, reports })
}
