//! Repeated campaigns over the bundled fixtures.

use super::Fixture;
use crate::distance::TargetSpec;
use crate::fuzz::{run_campaign, CampaignConfig, CampaignError, Mode};
use crate::vm::parse_program;

pub const SUITE_BUDGET: u64 = 5_000_000;
pub const SUITE_TRIALS: u64 = 10;

/// Campaign settings for suite trials. Both modes skip the deterministic
/// stages and stop at the first fault or after `budget` executions.
pub fn suite_config(mode: Mode, targets: Option<TargetSpec>, rng_seed: u64, budget: u64) -> CampaignConfig {
    CampaignConfig {
        mode,
        target_spec: targets,
        rng_seed,
        timeout: f64::INFINITY,
        max_execs: Some(budget),
        exit_on_fault: true,
        deterministic: false,
        ..CampaignConfig::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub rng_seed: u64,
    /// Executions until the seeded bug fired, if it did within budget.
    pub execs_to_bug: Option<u64>,
    pub execs_done: u64,
}

/// Runs `trials` campaigns with rng seeds `0..trials`.
pub fn run_trials(
    fixture: &Fixture,
    mode: Mode,
    targets: Option<&TargetSpec>,
    trials: u64,
    budget: u64,
) -> Result<Vec<Trial>, CampaignError> {
    let program = parse_program(&fixture.target.text).expect("bundled fixtures parse");
    let bug = &fixture.target.ground_truth.bugs[0];
    (0..trials)
        .map(|rng_seed| {
            let cfg = suite_config(mode, targets.cloned(), rng_seed, budget);
            let r = run_campaign(&program, &cfg, std::slice::from_ref(&fixture.target.seed))?;
            let execs_to_bug = r
                .first_fault()
                .filter(|f| f.kind == bug.kind && f.site.file == bug.file && f.site.line == bug.line)
                .map(|f| f.execs_found);
            Ok(Trial { rng_seed, execs_to_bug, execs_done: r.stats.execs_done })
        })
        .collect()
}

/// Median executions to the bug; misses count as infinitely many.
pub fn median_execs(trials: &[Trial]) -> f64 {
    let mut v: Vec<f64> = trials.iter().map(|t| t.execs_to_bug.map_or(f64::INFINITY, |e| e as f64)).collect();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::INFINITY,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub fn hits(trials: &[Trial]) -> usize {
    trials.iter().filter(|t| t.execs_to_bug.is_some()).count()
}
