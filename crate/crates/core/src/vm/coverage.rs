//! AFL-style edge coverage with hit-count buckets.

use super::{BlockId, Program};

pub const MAP_SIZE: usize = 1 << 16;

/// Map index of the edge `prev -> cur` given the 16-bit block hashes.
#[inline]
pub fn edge_index(prev_hash: u16, cur_hash: u16) -> usize {
    ((prev_hash >> 1) ^ cur_hash) as usize % MAP_SIZE
}

/// Bucket flag for a raw hit count: 1, 2, 3, 4-7, 8-15, 16-31, 32-127, 128+.
/// A count of zero has no flag.
#[inline]
pub fn bucket_flag(count: u32) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 4,
        4..=7 => 8,
        8..=15 => 16,
        16..=31 => 32,
        32..=127 => 64,
        _ => 128,
    }
}

/// Raw per-index hit counts of one execution. Only touched cells are reset
/// between runs.
#[derive(Clone)]
pub struct HitCounts {
    counts: Vec<u32>,
    touched: Vec<u16>,
}

impl Default for HitCounts {
    fn default() -> Self {
        HitCounts { counts: vec![0; MAP_SIZE], touched: Vec::new() }
    }
}

impl HitCounts {
    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.counts[i as usize] = 0;
        }
        self.touched.clear();
    }

    #[inline]
    pub fn hit(&mut self, index: usize) {
        let c = &mut self.counts[index];
        if *c == 0 {
            self.touched.push(index as u16);
        }
        *c = c.saturating_add(1);
    }

    /// Replaces the current counts with those of `trace`.
    pub fn load(&mut self, hashes: &[u16], trace: &[(BlockId, BlockId)]) {
        self.clear();
        for &(prev, cur) in trace {
            self.hit(edge_index(hashes[prev.index()], hashes[cur.index()]));
        }
    }

    pub fn count(&self, index: usize) -> u32 {
        self.counts[index]
    }

    /// Indices hit at least once, in first-hit order.
    pub fn touched(&self) -> &[u16] {
        &self.touched
    }
}

/// Accumulated bucket flags over a campaign; starts all-zero.
#[derive(Clone, PartialEq, Eq)]
pub struct CoverageMap {
    cells: Box<[u8]>,
}

impl Default for CoverageMap {
    fn default() -> Self {
        CoverageMap { cells: vec![0; MAP_SIZE].into_boxed_slice() }
    }
}

impl std::fmt::Debug for CoverageMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoverageMap").field("edges", &self.edges_covered()).finish()
    }
}

impl CoverageMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    /// Merges one execution's hit counts; true iff some bucket flag went 0 -> 1.
    pub fn update_hits(&mut self, hits: &HitCounts) -> bool {
        let mut new = false;
        for &i in hits.touched() {
            let flag = bucket_flag(hits.count(i as usize));
            let cell = &mut self.cells[i as usize];
            if *cell & flag == 0 {
                *cell |= flag;
                new = true;
            }
        }
        new
    }

    /// Merges the edges of `trace` (block ids of `program`).
    pub fn update(&mut self, program: &Program, trace: &[(BlockId, BlockId)]) -> bool {
        let mut hits = HitCounts::default();
        hits.load(&program.block_hashes(), trace);
        self.update_hits(&hits)
    }

    pub fn edges_covered(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    pub fn flags_set(&self) -> u32 {
        self.cells.iter().map(|c| c.count_ones()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{execute, parse_program};
    use proptest::prelude::*;

    fn looping(times: i64) -> Program {
        parse_program(&format!(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  CONST r1, {times} @a.c:1\n  JMP l @a.c:1\nblock l\n  SUB r1, 1 @a.c:2\n  BR r1, l, d @a.c:2\nblock d\n  HALT @a.c:3\n"
        ))
        .unwrap()
    }

    #[test]
    fn empty_trace_changes_nothing() {
        let p = looping(1);
        let mut map = CoverageMap::new();
        assert!(!map.update(&p, &[]));
        assert_eq!(map, CoverageMap::new());
    }

    #[test]
    fn same_trace_twice_is_not_new() {
        let p = looping(3);
        let r = execute(&p, b"", 1000);
        let mut map = CoverageMap::new();
        assert!(map.update(&p, &r.edge_trace));
        assert!(!map.update(&p, &r.edge_trace));
    }

    #[test]
    fn nine_hits_set_the_8_to_15_bucket() {
        // l -> l is taken 9 times when the counter starts at 10
        let p = looping(10);
        let r = execute(&p, b"", 1000);
        let l = p.block_by_uid("main::l").unwrap();
        let hashes = p.block_hashes();
        let idx = edge_index(hashes[l.index()], hashes[l.index()]);
        assert_eq!(r.edge_trace.iter().filter(|e| **e == (l, l)).count(), 9);
        let mut map = CoverageMap::new();
        map.update(&p, &r.edge_trace);
        assert_eq!(map.cells()[idx] & 16, 16);
    }

    #[test]
    fn bucket_boundaries() {
        let table = [
            (1, 1), (2, 2), (3, 4), (4, 8), (7, 8), (8, 16), (15, 16), (16, 32), (31, 32),
            (32, 64), (127, 64), (128, 128), (u32::MAX, 128),
        ];
        for (c, f) in table {
            assert_eq!(bucket_flag(c), f, "count {c}");
        }
    }

    proptest! {
        #[test]
        fn every_count_has_exactly_one_bucket(c in 1u32..100_000) {
            prop_assert_eq!(bucket_flag(c).count_ones(), 1);
        }

        #[test]
        fn flags_never_clear(traces in proptest::collection::vec(proptest::collection::vec((0usize..65536, 1u32..200), 0..20), 1..10)) {
            let mut map = CoverageMap::new();
            let mut hits = HitCounts::default();
            for t in traces {
                let before = map.clone();
                hits.clear();
                for (i, n) in t {
                    for _ in 0..n { hits.hit(i); }
                }
                map.update_hits(&hits);
                for (a, b) in before.cells().iter().zip(map.cells()) {
                    prop_assert_eq!(a & b, *a);
                }
            }
        }
    }
}
