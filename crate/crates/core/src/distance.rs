//! Target resolution and distance-to-target computation.
//!
//! Function distances are harmonic aggregates of call-graph hop counts;
//! block distances combine intra-procedural hop counts with call-site
//! distances scaled by [`CALL_SITE_FACTOR`]. All undefined values stay
//! `None` so that means over executed blocks remain well-defined.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::vm::{extract_callgraph, extract_cfg, BlockId, CallGraph, Cfg, Program};

/// Multiplier applied to callee function distances at call-site blocks.
pub const CALL_SITE_FACTOR: f64 = 10.0;
/// Default line radius used when matching predicted lines onto blocks.
pub const DEFAULT_RADIUS: u32 = 10;

#[derive(Debug, thiserror::Error)]
pub enum TargetError {
    #[error("no targets resolvable ({} entries unresolved)", .unresolved.len())]
    NoTargets { unresolved: Vec<(String, u32)> },
    #[error("duplicate target {0}:{1}")]
    Duplicate(String, u32),
    #[error("target {0}:{1} has a non-finite or negative score")]
    BadScore(String, u32),
    #[error("target {0}:{1}: lines start at 1")]
    BadLine(String, u32),
    #[error("target file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Predicted,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub file: String,
    pub line: u32,
    pub score: f64,
    pub origin: Origin,
}

/// Vulnerable-location list handed from the predictor to the fuzzer.
/// Serialized as a JSON array of entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TargetSpec {
    entries: Vec<TargetEntry>,
}

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let entries = Vec::<TargetEntry>::deserialize(d)?;
        TargetSpec::new(entries).map_err(serde::de::Error::custom)
    }
}

impl TargetSpec {
    pub fn new(entries: Vec<TargetEntry>) -> Result<Self, TargetError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.line == 0 {
                return Err(TargetError::BadLine(e.file.clone(), e.line));
            }
            if !e.score.is_finite() || e.score < 0.0 {
                return Err(TargetError::BadScore(e.file.clone(), e.line));
            }
            if !seen.insert((e.file.as_str(), e.line)) {
                return Err(TargetError::Duplicate(e.file.clone(), e.line));
            }
        }
        Ok(TargetSpec { entries })
    }

    /// Ground-truth spec with unit scores.
    pub fn ground_truth<'a>(locations: impl IntoIterator<Item = (&'a str, u32)>) -> Result<Self, TargetError> {
        Self::new(
            locations
                .into_iter()
                .map(|(file, line)| TargetEntry { file: file.into(), line, score: 1.0, origin: Origin::GroundTruth })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[TargetEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self, TargetError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("target spec serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedTargets {
    pub target_blocks: BTreeSet<BlockId>,
    pub target_functions: BTreeSet<usize>,
    pub unresolved: Vec<(String, u32)>,
}

/// Marks every block holding an instruction within `radius` lines of a
/// spec entry (same file) as a target.
pub fn resolve_targets(program: &Program, spec: &TargetSpec, radius: u32) -> Result<ResolvedTargets, TargetError> {
    let mut target_blocks = BTreeSet::new();
    let mut unresolved = Vec::new();
    for e in spec.entries() {
        let lo = e.line.saturating_sub(radius);
        let hi = e.line.saturating_add(radius);
        let mut hit = false;
        for id in program.block_ids() {
            if program
                .block(id)
                .instructions
                .iter()
                .any(|i| i.anchor.file == e.file && (lo..=hi).contains(&i.anchor.line))
            {
                target_blocks.insert(id);
                hit = true;
            }
        }
        if !hit {
            unresolved.push((e.file.clone(), e.line));
        }
    }
    if target_blocks.is_empty() {
        return Err(TargetError::NoTargets { unresolved });
    }
    let target_functions = target_blocks.iter().map(|&b| program.block_info(b).function).collect();
    Ok(ResolvedTargets { target_blocks, target_functions, unresolved })
}

/// Anchored line of `file` closest to `line`, if the file has any.
pub fn nearest_anchored_line(program: &Program, file: &str, line: u32) -> Option<u32> {
    program
        .anchored_lines()
        .into_iter()
        .filter(|a| a.file == file)
        .min_by_key(|a| (a.line.abs_diff(line), a.line))
        .map(|a| a.line)
}

fn bfs(adj: &[Vec<usize>], start: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(n) = queue.pop_front() {
        let d = dist[n].expect("queued nodes have a distance");
        for &m in &adj[n] {
            if dist[m].is_none() {
                dist[m] = Some(d + 1);
                queue.push_back(m);
            }
        }
    }
    dist
}

/// `(sum of 1/x)^-1`. A lone term is returned unchanged so that integer
/// distances stay exact.
fn harmonic(terms: &[f64]) -> Option<f64> {
    match terms {
        [] => None,
        [x] => Some(*x),
        _ => Some(1.0 / terms.iter().map(|x| 1.0 / x).sum::<f64>()),
    }
}

/// Harmonic function-level distance: 0 for targets, otherwise
/// `(sum over reachable targets of 1/hops)^-1`, or `None` if none reachable.
pub fn function_distances(callgraph: &CallGraph, targets: &BTreeSet<usize>) -> Vec<Option<f64>> {
    let callers = callgraph.callers();
    let mut terms = vec![Vec::new(); callgraph.names.len()];
    for &t in targets {
        // hop counts from every function to t, via the reversed graph
        for (n, hops) in bfs(&callers, t).into_iter().enumerate() {
            if let Some(h) = hops.filter(|&h| h > 0) {
                terms[n].push(h as f64);
            }
        }
    }
    (0..callgraph.names.len())
        .map(|n| if targets.contains(&n) { Some(0.0) } else { harmonic(&terms[n]) })
        .collect()
}

/// Distance contributed by a call from a call-site block into `callee`.
/// Calls straight into a target function count as one block hop so that
/// only target blocks sit at distance zero.
pub fn call_site_term(callee: usize, fdist: &[Option<f64>], targets: &BTreeSet<usize>) -> Option<f64> {
    if targets.contains(&callee) {
        Some(1.0)
    } else {
        fdist[callee].map(|d| CALL_SITE_FACTOR * d)
    }
}

/// Block-level distances, indexed by [`BlockId`].
pub fn block_distances(
    program: &Program,
    callgraph: &CallGraph,
    cfgs: &[Cfg],
    resolved: &ResolvedTargets,
    fdist: &[Option<f64>],
) -> Vec<Option<f64>> {
    let mut out = vec![None; program.num_blocks()];
    for cfg in cfgs {
        let n = cfg.nodes.len();
        // Anchors: target blocks and call sites reaching a target.
        let mut anchor: Vec<Option<f64>> = vec![None; n];
        for (i, &b) in cfg.nodes.iter().enumerate() {
            if resolved.target_blocks.contains(&b) {
                anchor[i] = Some(0.0);
            } else if let Some(callees) = callgraph.call_sites.get(&b) {
                anchor[i] = callees
                    .iter()
                    .filter_map(|&g| call_site_term(g, fdist, &resolved.target_functions))
                    .min_by(f64::total_cmp);
            }
        }
        for i in 0..n {
            out[cfg.nodes[i].index()] = match anchor[i] {
                Some(d) => Some(d),
                None => {
                    let hops = bfs(&cfg.succs, i);
                    let terms: Vec<f64> =
                        anchor.iter().zip(hops).filter_map(|(d_t, h)| Some(h? as f64 + (*d_t)?)).collect();
                    harmonic(&terms)
                }
            };
        }
    }
    out
}

/// Mean block distance over the executed blocks that have one.
pub fn seed_distance<'a>(block_set: impl IntoIterator<Item = &'a BlockId>, dmap: &DistanceMap) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for b in block_set {
        if let Some(d) = dmap.block(*b) {
            sum += d;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub function_distance: Vec<Option<f64>>,
    pub block_distance: Vec<Option<f64>>,
}

impl DistanceMap {
    /// Runs the full static pipeline for already-resolved targets.
    pub fn compute(program: &Program, resolved: &ResolvedTargets) -> DistanceMap {
        let cg = extract_callgraph(program);
        let cfgs: Vec<Cfg> = (0..program.functions.len()).map(|f| extract_cfg(program, f)).collect();
        let function_distance = function_distances(&cg, &resolved.target_functions);
        let block_distance = block_distances(program, &cg, &cfgs, resolved, &function_distance);
        DistanceMap { function_distance, block_distance }
    }

    pub fn block(&self, id: BlockId) -> Option<f64> {
        self.block_distance[id.index()]
    }

    /// `block_uid,distance` rows, one per block; undefined distances are empty.
    pub fn to_csv(&self, program: &Program) -> String {
        let mut out = String::from("block_uid,distance\n");
        for id in program.block_ids() {
            let _ = match self.block(id) {
                Some(d) => writeln!(out, "{},{}", program.block_uid(id), d),
                None => writeln!(out, "{},", program.block_uid(id)),
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_program;

    fn graph(n: usize, edges: &[(usize, usize)]) -> CallGraph {
        let mut callees = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            callees[a].insert(b);
        }
        CallGraph { names: (0..n).map(|i| format!("f{i}")).collect(), callees, call_sites: Default::default() }
    }

    #[test]
    fn chain_distances() {
        // main -> a -> b, b is the target
        let d = function_distances(&graph(3, &[(0, 1), (1, 2)]), &BTreeSet::from([2]));
        assert_eq!(d, vec![Some(2.0), Some(1.0), Some(0.0)]);
    }

    #[test]
    fn harmonic_over_two_targets() {
        // main -> a -> b(target), main -> c(target)
        let d = function_distances(&graph(4, &[(0, 1), (1, 2), (0, 3)]), &BTreeSet::from([2, 3]));
        assert!((d[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d[1], Some(1.0));
    }

    #[test]
    fn unreachable_is_undefined() {
        let d = function_distances(&graph(3, &[(0, 1)]), &BTreeSet::from([2]));
        assert_eq!(d, vec![None, None, Some(0.0)]);
    }

    const TWO_LEVEL: &str = "program t mem=0
file a.c
fn main entry=b0
block b0
  JMP b1 @a.c:1
block b1
  JMP b2 @a.c:2
block b2
  CALL f @a.c:3
  HALT @a.c:3
block side
  HALT @a.c:4
fn f entry=e
block e
  CALL g @a.c:10
  RET @a.c:10
fn g entry=e
block e
  BUG 0 @a.c:20
";

    #[test]
    fn block_distance_cases() {
        let p = parse_program(TWO_LEVEL).unwrap();
        let spec = TargetSpec::ground_truth([("a.c", 20)]).unwrap();
        let r = resolve_targets(&p, &spec, 0).unwrap();
        let dm = DistanceMap::compute(&p, &r);
        let d = |uid: &str| dm.block(p.block_by_uid(uid).unwrap());
        assert_eq!(d("g::e"), Some(0.0));
        // direct call into the target function
        assert_eq!(d("f::e"), Some(1.0));
        // call site into f, whose function distance is 1
        assert_eq!(d("main::b2"), Some(10.0));
        assert_eq!(d("main::b1"), Some(11.0));
        assert_eq!(d("main::b0"), Some(12.0));
        assert_eq!(d("main::side"), None);
    }

    #[test]
    fn two_hops_above_target_block() {
        let p = parse_program(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  JMP b @a.c:1\nblock b\n  JMP c @a.c:2\nblock c\n  BUG 0 @a.c:3\n",
        )
        .unwrap();
        let r = resolve_targets(&p, &TargetSpec::ground_truth([("a.c", 3)]).unwrap(), 0).unwrap();
        let dm = DistanceMap::compute(&p, &r);
        assert_eq!(dm.block(p.block_by_uid("main::a").unwrap()), Some(2.0));
    }

    #[test]
    fn call_site_uses_factor_ten() {
        // call site into a function two call hops from the target
        let p = parse_program(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  CALL f @a.c:1\n  HALT @a.c:1\nfn f entry=a\nblock a\n  CALL g @a.c:2\n  RET @a.c:2\nfn g entry=a\nblock a\n  CALL h @a.c:3\n  RET @a.c:3\nfn h entry=a\nblock a\n  BUG 1 @a.c:4\n",
        )
        .unwrap();
        let r = resolve_targets(&p, &TargetSpec::ground_truth([("a.c", 4)]).unwrap(), 0).unwrap();
        let dm = DistanceMap::compute(&p, &r);
        assert_eq!(dm.function_distance[p.function_index("f").unwrap()], Some(2.0));
        assert_eq!(dm.block(p.block_by_uid("main::a").unwrap()), Some(20.0));
    }

    #[test]
    fn resolution_radius_and_errors() {
        let p = parse_program(TWO_LEVEL).unwrap();
        let spec = TargetSpec::ground_truth([("a.c", 15), ("zz.c", 1)]).unwrap();
        assert!(matches!(resolve_targets(&p, &spec, 0), Err(TargetError::NoTargets { .. })));
        let r = resolve_targets(&p, &spec, 5).unwrap();
        assert_eq!(r.target_blocks.len(), 2);
        assert_eq!(r.unresolved, vec![("zz.c".to_string(), 1)]);
        assert!(matches!(
            resolve_targets(&p, &TargetSpec::default(), 10),
            Err(TargetError::NoTargets { .. })
        ));
        assert_eq!(nearest_anchored_line(&p, "a.c", 14), Some(10));
    }

    #[test]
    fn seed_distance_mean_and_undefined() {
        let dm = DistanceMap {
            function_distance: vec![],
            block_distance: vec![Some(0.0), Some(2.0), Some(4.0), None],
        };
        let ids = [BlockId(0), BlockId(1), BlockId(2), BlockId(3)];
        assert_eq!(seed_distance(&ids, &dm), Some(2.0));
        assert_eq!(seed_distance(&[BlockId(0)], &dm), Some(0.0));
        assert_eq!(seed_distance(&[BlockId(3)], &dm), None);
    }

    #[test]
    fn target_spec_json_and_validation() {
        let json = r#"[{"file":"decompile.c","line":381,"score":0.95,"origin":"predicted"}]"#;
        let spec = TargetSpec::from_json(json).unwrap();
        assert_eq!(spec.entries()[0].origin, Origin::Predicted);
        assert_eq!(TargetSpec::from_json(&spec.to_json()).unwrap(), spec);
        let dup = r#"[{"file":"a","line":1,"score":1,"origin":"predicted"},{"file":"a","line":1,"score":2,"origin":"ground_truth"}]"#;
        assert!(TargetSpec::from_json(dup).is_err());
        assert!(TargetSpec::new(vec![TargetEntry {
            file: "a".into(),
            line: 1,
            score: f64::NAN,
            origin: Origin::Predicted
        }])
        .is_err());
    }
}
