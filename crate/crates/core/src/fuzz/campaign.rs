use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::crash::{dedup_key, CrashReport, CrashSite};
use super::energy::{assign_energy, normalize_distances};
use super::mutate::{havoc_one, DetStage};
use super::{CampaignConfig, Clock, Mode, Seed};
use crate::distance::{resolve_targets, seed_distance, DistanceMap, TargetError};
use crate::hash::Fnv64;
use crate::vm::{bucket_flag, CoverageMap, Executor, FaultKind, HitCounts, Outcome, Program, MAP_SIZE};

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error("a campaign needs at least one initial input")]
    NoInputs,
    #[error("directed mode needs a target spec")]
    MissingTargets,
    #[error(transparent)]
    Targets(#[from] TargetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsPoint {
    /// Whole seconds since campaign start.
    pub time: u64,
    pub paths_total: usize,
    pub unique_crashes: usize,
    pub execs_done: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub execs_done: u64,
    pub execs_per_sec: f64,
    pub paths_total: usize,
    pub unique_crashes: usize,
    pub unique_bugs: usize,
    pub unique_hangs: usize,
    pub elapsed: f64,
    pub first_crash_time: Option<f64>,
    pub first_crash_execs: Option<u64>,
    pub series: Vec<StatsPoint>,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub queue: Vec<Seed>,
    pub crashes: Vec<CrashReport>,
    pub hangs: Vec<CrashReport>,
    pub stats: CampaignStats,
}

impl CampaignResult {
    /// First crash or hang report, by discovery order.
    pub fn first_fault(&self) -> Option<&CrashReport> {
        self.crashes.iter().chain(&self.hangs).min_by_key(|r| r.execs_found)
    }
}

struct Fuzzer<'p, 'c> {
    program: &'p Program,
    config: &'c CampaignConfig,
    exec: Executor<'p>,
    hashes: Vec<u16>,
    hits: HitCounts,
    virgin: CoverageMap,
    dmap: Option<DistanceMap>,
    rng: ChaCha8Rng,
    queue: Vec<Seed>,
    queue_changed: bool,
    top_rated: Vec<u32>,
    crashes: Vec<CrashReport>,
    crash_keys: HashSet<u64>,
    bugs: BTreeSet<(FaultKind, CrashSite)>,
    hangs: Vec<CrashReport>,
    hang_keys: HashSet<u64>,
    execs: u64,
    total_steps: u64,
    start: Instant,
    series: Vec<StatsPoint>,
}

const UNRATED: u32 = u32::MAX;

impl<'p, 'c> Fuzzer<'p, 'c> {
    fn elapsed(&self) -> f64 {
        match self.config.clock {
            Clock::Virtual => self.total_steps as f64 / self.config.steps_per_sec,
            Clock::Wall => self.start.elapsed().as_secs_f64(),
        }
    }

    fn done(&self) -> bool {
        self.elapsed() >= self.config.timeout
            || self.config.max_execs.is_some_and(|m| self.execs >= m)
            || (self.config.exit_on_fault && !(self.crashes.is_empty() && self.hangs.is_empty()))
    }

    fn run_input(&mut self, input: &[u8], always_keep: bool) -> Outcome {
        let outcome = self.exec.run(input, self.config.step_limit);
        self.execs += 1;
        self.total_steps += self.exec.steps();
        if outcome == Outcome::Halt {
            self.hits.load(&self.hashes, self.exec.trace());
            let new = self.virgin.update_hits(&self.hits);
            if new || always_keep {
                self.add_seed(input);
            }
        } else {
            self.record_fault(input, outcome);
        }
        self.tick();
        outcome
    }

    fn add_seed(&mut self, input: &[u8]) {
        let blocks = self.exec.block_set();
        let mut edges = self.hits.touched().to_vec();
        edges.sort_unstable();
        let seed = Seed {
            exec_steps: self.exec.steps(),
            block_count: blocks.len(),
            distance: self.dmap.as_ref().and_then(|d| seed_distance(&blocks, d)),
            discovery_time: self.elapsed(),
            edges,
            path_checksum: self.path_checksum(),
            ..Seed::new(self.queue.len(), input.to_vec())
        };
        self.queue.push(seed);
        normalize_distances(&mut self.queue);
        self.queue_changed = true;
    }

    fn record_fault(&mut self, input: &[u8], outcome: Outcome) {
        let kind = outcome.fault_kind().expect("faulting outcome");
        let block = self.exec.last_block();
        let anchor = self.exec.last_anchor();
        let stack = if outcome.is_crash() { self.exec.stack() } else { Vec::new() };
        let key = dedup_key(kind, self.program.block_uid(block), &stack);
        let keys = if kind == FaultKind::Hang { &mut self.hang_keys } else { &mut self.crash_keys };
        if !keys.insert(key) {
            return;
        }
        let site = CrashSite {
            function: self.program.functions[self.program.block_info(block).function].name.clone(),
            file: anchor.file.clone(),
            line: anchor.line,
        };
        let report = CrashReport {
            dedup_key: key,
            kind,
            site: site.clone(),
            trace: stack,
            input: input.to_vec(),
            time_found: self.elapsed(),
            execs_found: self.execs,
        };
        if kind == FaultKind::Hang {
            self.hangs.push(report);
        } else {
            self.bugs.insert((kind, site));
            self.crashes.push(report);
        }
    }

    fn point(&self, time: u64) -> StatsPoint {
        StatsPoint {
            time,
            paths_total: self.queue.len(),
            unique_crashes: self.crashes.len(),
            execs_done: self.execs,
        }
    }

    /// Appends a stats row on the first execution of every new second.
    fn tick(&mut self) {
        let sec = self.elapsed().floor() as u64;
        if self.series.last().is_none_or(|p| p.time < sec) {
            let p = self.point(sec);
            self.series.push(p);
        }
    }

    fn better(&self, a: &Seed, b: &Seed) -> bool {
        match self.config.mode {
            Mode::Directed => a
                .normalized_distance
                .total_cmp(&b.normalized_distance)
                .then(a.cost().cmp(&b.cost()))
                .then(a.id.cmp(&b.id))
                .is_lt(),
            Mode::CoverageOnly => (a.cost(), a.id) < (b.cost(), b.id),
        }
    }

    /// Marks the best seed for every covered edge as favored.
    fn cull(&mut self) {
        let mut rated = Vec::new();
        for s in &self.queue {
            for &e in &s.edges {
                let cur = self.top_rated[e as usize];
                if cur == UNRATED {
                    rated.push(e);
                    self.top_rated[e as usize] = s.id as u32;
                } else if self.better(s, &self.queue[cur as usize]) {
                    self.top_rated[e as usize] = s.id as u32;
                }
            }
        }
        self.queue.iter_mut().for_each(|s| s.favored = false);
        for e in rated {
            let id = std::mem::replace(&mut self.top_rated[e as usize], UNRATED);
            self.queue[id as usize].favored = true;
        }
        self.queue_changed = false;
    }

    fn should_skip(&mut self, id: usize) -> bool {
        let pending_favored = self.queue.iter().any(|s| s.favored && !s.was_fuzzed);
        let s = &self.queue[id];
        let pct = if pending_favored {
            if s.was_fuzzed || !s.favored {
                99
            } else {
                0
            }
        } else if !s.favored && self.queue.len() > 10 {
            if s.was_fuzzed {
                95
            } else {
                75
            }
        } else {
            0
        };
        pct > 0 && self.rng.random_range(0..100) < pct
    }

    /// Order-independent hash of the bucketed hit counts of the last run.
    fn path_checksum(&self) -> u64 {
        let mut cells: Vec<(u16, u8)> =
            self.hits.touched().iter().map(|&i| (i, bucket_flag(self.hits.count(i as usize)))).collect();
        cells.sort_unstable();
        let mut h = Fnv64::default();
        for (i, b) in cells {
            h.write(&i.to_le_bytes()).write(&[b]);
        }
        h.finish()
    }

    /// Deterministic stages. Bytes whose inversion leaves the path unchanged
    /// are skipped by every stage after the single-byte flip.
    fn deterministic(&mut self, id: usize, input: &[u8]) -> bool {
        let expected = self.queue[id].path_checksum;
        let mut effective = vec![false; input.len()];
        for stage in DetStage::ORDER {
            let filtered = !matches!(stage, DetStage::Flip1 | DetStage::Flip2 | DetStage::Flip4 | DetStage::ByteFlip1);
            for i in 0..stage.count(input.len()) {
                if self.done() {
                    return false;
                }
                let pos = stage.position(i);
                if filtered && !effective[pos..(pos + stage.width()).min(input.len())].contains(&true) {
                    continue;
                }
                let m = stage.mutate(input, i);
                let outcome = self.run_input(&m, false);
                if stage == DetStage::ByteFlip1 && (outcome != Outcome::Halt || self.path_checksum() != expected) {
                    effective[pos] = true;
                }
            }
        }
        true
    }

    fn fuzz_one(&mut self, id: usize) {
        let input = self.queue[id].input.clone();
        if self.config.deterministic && !self.queue[id].det_done {
            if !self.deterministic(id, &input) {
                return;
            }
            self.queue[id].det_done = true;
        }
        let energy = assign_energy(&self.queue[id], self.elapsed(), self.config);
        for _ in 0..energy {
            if self.done() {
                return;
            }
            let m = havoc_one(&input, &mut self.rng);
            self.run_input(&m, false);
        }
        self.queue[id].was_fuzzed = true;
    }

    fn run(mut self, initial: &[Vec<u8>]) -> CampaignResult {
        for input in initial {
            self.run_input(input, true);
        }
        'campaign: while !self.queue.is_empty() && !self.done() {
            if self.queue_changed {
                self.cull();
            }
            let (favored, rest): (Vec<usize>, Vec<usize>) =
                self.queue.iter().map(|s| s.id).partition(|&i| self.queue[i].favored);
            for id in favored.into_iter().chain(rest) {
                if self.done() {
                    break 'campaign;
                }
                if self.should_skip(id) {
                    continue;
                }
                self.fuzz_one(id);
                if self.queue_changed {
                    self.cull();
                }
            }
        }
        self.finish()
    }

    fn finish(mut self) -> CampaignResult {
        let elapsed = self.elapsed();
        let last = self.point(elapsed.floor() as u64);
        match self.series.last_mut() {
            Some(p) if p.time == last.time => *p = last,
            _ => self.series.push(last),
        }
        let first = self.crashes.iter().min_by_key(|r| r.execs_found);
        let stats = CampaignStats {
            execs_done: self.execs,
            execs_per_sec: if elapsed > 0.0 { self.execs as f64 / elapsed } else { 0.0 },
            paths_total: self.queue.len(),
            unique_crashes: self.crashes.len(),
            unique_bugs: self.bugs.len(),
            unique_hangs: self.hangs.len(),
            elapsed,
            first_crash_time: first.map(|r| r.time_found),
            first_crash_execs: first.map(|r| r.execs_found),
            series: self.series,
        };
        CampaignResult { queue: self.queue, crashes: self.crashes, hangs: self.hangs, stats }
    }
}

/// Runs a fuzzing campaign. With the virtual clock the result is a pure
/// function of the arguments.
pub fn run_campaign(
    program: &Program,
    config: &CampaignConfig,
    initial_inputs: &[Vec<u8>],
) -> Result<CampaignResult, CampaignError> {
    if initial_inputs.is_empty() {
        return Err(CampaignError::NoInputs);
    }
    let dmap = match config.mode {
        Mode::Directed => {
            let spec = config.target_spec.as_ref().ok_or(CampaignError::MissingTargets)?;
            let resolved = resolve_targets(program, spec, config.radius)?;
            Some(DistanceMap::compute(program, &resolved))
        }
        Mode::CoverageOnly => None,
    };
    let fuzzer = Fuzzer {
        program,
        config,
        exec: Executor::new(program),
        hashes: program.block_ids().map(|b| program.block_info(b).hash).collect(),
        hits: HitCounts::default(),
        virgin: CoverageMap::new(),
        dmap,
        rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
        queue: Vec::new(),
        queue_changed: false,
        top_rated: vec![UNRATED; MAP_SIZE],
        crashes: Vec::new(),
        crash_keys: HashSet::new(),
        bugs: BTreeSet::new(),
        hangs: Vec::new(),
        hang_keys: HashSet::new(),
        execs: 0,
        total_steps: 0,
        start: Instant::now(),
        series: Vec::new(),
    };
    Ok(fuzzer.run(initial_inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::TargetSpec;
    use crate::vm::parse_program;

    const GUARDED: &str = "program g mem=8
file g.c
fn main entry=b0
block b0
  LOADIN r0, 0 @g.c:1
  SUB r0, 7 @g.c:1
  BR r0, out, b1 @g.c:1
block b1
  LOADIN r0, 1 @g.c:2
  SUB r0, 9 @g.c:2
  BR r0, out, boom @g.c:2
block boom
  BUG 4 @g.c:3
block out
  HALT @g.c:4
";

    #[test]
    fn timeout_zero_only_calibrates() {
        let p = parse_program(GUARDED).unwrap();
        let cfg = CampaignConfig { timeout: 0.0, ..CampaignConfig::coverage_only() };
        let r = run_campaign(&p, &cfg, &[vec![0, 0], vec![1, 1]]).unwrap();
        assert_eq!(r.queue.len(), 2);
        assert_eq!(r.stats.unique_crashes, 0);
        assert_eq!(r.stats.execs_done, 2);
    }

    #[test]
    fn entry_bug_crashes_immediately() {
        let p = parse_program("program b mem=0\nfile a.c\nfn main entry=b\nblock b\n  BUG 0 @a.c:1\n").unwrap();
        let r = run_campaign(&p, &CampaignConfig { timeout: 1.0, ..Default::default() }, &[vec![0]]).unwrap();
        assert_eq!(r.stats.unique_bugs, 1);
        assert_eq!(r.stats.unique_crashes, 1);
        assert!(r.queue.is_empty());
    }

    #[test]
    fn finds_shallow_bug_and_is_reproducible() {
        let p = parse_program(GUARDED).unwrap();
        let cfg = CampaignConfig { timeout: 60.0, rng_seed: 5, ..Default::default() };
        let a = run_campaign(&p, &cfg, &[vec![0, 0]]).unwrap();
        assert_eq!(a.stats.unique_bugs, 1);
        assert!(a.stats.unique_bugs <= a.stats.unique_crashes);
        let b = run_campaign(&p, &cfg, &[vec![0, 0]]).unwrap();
        assert_eq!(a.stats, b.stats);
        assert_eq!(a.crashes, b.crashes);
        assert_eq!(a.queue, b.queue);
        for w in a.stats.series.windows(2) {
            assert!(w[0].time < w[1].time);
            assert!(w[0].paths_total <= w[1].paths_total);
            assert!(w[0].unique_crashes <= w[1].unique_crashes);
            assert!(w[0].execs_done <= w[1].execs_done);
        }
    }

    #[test]
    fn directed_mode_requires_resolvable_targets() {
        let p = parse_program(GUARDED).unwrap();
        let missing = CampaignConfig { mode: Mode::Directed, ..Default::default() };
        assert!(matches!(run_campaign(&p, &missing, &[vec![0]]), Err(CampaignError::MissingTargets)));
        let bad = CampaignConfig::directed(TargetSpec::ground_truth([("nope.c", 1)]).unwrap());
        assert!(matches!(run_campaign(&p, &bad, &[vec![0]]), Err(CampaignError::Targets(_))));
        assert!(matches!(run_campaign(&p, &Default::default(), &[]), Err(CampaignError::NoInputs)));
    }

    #[test]
    fn directed_seeds_carry_distances() {
        let p = parse_program(GUARDED).unwrap();
        let cfg = CampaignConfig {
            timeout: 0.0,
            radius: 0,
            ..CampaignConfig::directed(TargetSpec::ground_truth([("g.c", 3)]).unwrap())
        };
        let r = run_campaign(&p, &cfg, &[vec![0, 0], vec![7, 0]]).unwrap();
        // b0 -> out executes {b0, out}; b0 -> b1 -> out executes {b0, b1, out}
        assert_eq!(r.queue[0].distance, Some(2.0));
        assert_eq!(r.queue[1].distance, Some(1.5));
        assert_eq!(r.queue[0].normalized_distance, 1.0);
        assert_eq!(r.queue[1].normalized_distance, 0.0);
    }

    #[test]
    fn queue_holds_only_coverage_novel_inputs() {
        let p = parse_program(GUARDED).unwrap();
        let cfg = CampaignConfig { timeout: 30.0, rng_seed: 1, ..Default::default() };
        let r = run_campaign(&p, &cfg, &[vec![0, 0]]).unwrap();
        // three distinct non-crashing paths exist: b0->out, b0->b1->out, and
        // nothing else, so at most the initial seed plus one new path
        assert!(r.queue.len() <= 2);
        assert_eq!(r.stats.paths_total, r.queue.len());
    }
}
