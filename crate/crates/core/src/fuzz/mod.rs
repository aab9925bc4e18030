//! Mutation-based fuzzing campaigns, directed or coverage-only.

mod campaign;
mod crash;
mod energy;
mod mutate;
mod output;

pub use campaign::{run_campaign, CampaignError, CampaignResult, CampaignStats, StatsPoint};
pub use crash::{dedup_crash, CrashReport, CrashSite, DEDUP_DEPTH};
pub use energy::{assign_energy, normalize_distances, power_multiplier, temperature};
pub use mutate::{
    havoc_one, mutate_deterministic, mutate_havoc, DetStage, Deterministic, ARITH_MAX, INTERESTING, MAX_INPUT_LEN,
};
pub use output::{read_campaign_dir, write_campaign_dir, CampaignDir, OutputError};

use serde::{Deserialize, Serialize};

use crate::distance::{TargetSpec, DEFAULT_RADIUS};
use crate::vm::DEFAULT_STEP_LIMIT;

/// Virtual-clock rate: this many interpreter steps make one second.
pub const DEFAULT_STEPS_PER_SEC: f64 = 200_000.0;
pub const DEFAULT_HALF_LIFE: f64 = 600.0;
pub const DEFAULT_HAVOC_BASE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Mode {
    Directed,
    CoverageOnly,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Directed => "directed",
            Mode::CoverageOnly => "coverage_only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Elapsed time derived from executed steps; campaigns are reproducible.
    Virtual,
    /// Real elapsed time, for measuring execution speed.
    Wall,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub mode: Mode,
    /// Campaign length in seconds of the configured clock.
    pub timeout: f64,
    pub step_limit: u64,
    pub rng_seed: u64,
    /// Seconds for the annealing temperature to halve.
    pub cooling_half_life: f64,
    pub havoc_base: u32,
    pub target_spec: Option<TargetSpec>,
    pub radius: u32,
    /// Optional execution budget; the campaign stops at whichever of
    /// timeout or budget comes first.
    pub max_execs: Option<u64>,
    /// Stop at the first crash or hang.
    pub exit_on_fault: bool,
    pub clock: Clock,
    pub steps_per_sec: f64,
    /// Run the deterministic stages once per seed before havoc.
    pub deterministic: bool,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            mode: Mode::CoverageOnly,
            timeout: 3600.0,
            step_limit: DEFAULT_STEP_LIMIT,
            rng_seed: 0,
            cooling_half_life: DEFAULT_HALF_LIFE,
            havoc_base: DEFAULT_HAVOC_BASE,
            target_spec: None,
            radius: DEFAULT_RADIUS,
            max_execs: None,
            exit_on_fault: false,
            clock: Clock::Virtual,
            steps_per_sec: DEFAULT_STEPS_PER_SEC,
            deterministic: true,
        }
    }
}

impl CampaignConfig {
    pub fn coverage_only() -> Self {
        Self::default()
    }

    pub fn directed(targets: TargetSpec) -> Self {
        CampaignConfig { mode: Mode::Directed, target_spec: Some(targets), ..Self::default() }
    }
}

/// A retained input and its scheduling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub id: usize,
    pub input: Vec<u8>,
    pub exec_steps: u64,
    pub block_count: usize,
    pub distance: Option<f64>,
    pub normalized_distance: f64,
    pub discovery_time: f64,
    pub favored: bool,
    /// Coverage-map indices hit by this seed, sorted.
    pub edges: Vec<u16>,
    /// Hash of the bucketed hit counts this seed produces.
    pub path_checksum: u64,
    pub det_done: bool,
    pub was_fuzzed: bool,
}

impl Seed {
    pub fn new(id: usize, input: Vec<u8>) -> Self {
        Seed {
            id,
            input,
            exec_steps: 0,
            block_count: 0,
            distance: None,
            normalized_distance: 1.0,
            discovery_time: 0.0,
            favored: false,
            edges: Vec::new(),
            path_checksum: 0,
            det_done: false,
            was_fuzzed: false,
        }
    }

    /// Size-times-speed cost used to pick favored seeds.
    pub fn cost(&self) -> u64 {
        self.exec_steps.saturating_mul(self.input.len() as u64)
    }
}
