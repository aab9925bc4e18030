use std::collections::{BTreeMap, BTreeSet};

use super::{BlockId, Op, Program};

/// Intra-procedural control-flow graph of one function. Calls do not leave
/// the graph: a call-site block simply continues after the callee returns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub function: usize,
    /// Nodes in block definition order.
    pub nodes: Vec<BlockId>,
    /// Successors by node position; indices into `nodes`.
    pub succs: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn num_edges(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    pub fn position(&self, id: BlockId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == id)
    }

    /// Reverse adjacency, for backwards breadth-first searches.
    pub fn preds(&self) -> Vec<Vec<usize>> {
        let mut preds = vec![Vec::new(); self.nodes.len()];
        for (from, succ) in self.succs.iter().enumerate() {
            for &to in succ {
                preds[to].push(from);
            }
        }
        preds
    }
}

pub fn extract_cfg(program: &Program, function: usize) -> Cfg {
    let f = &program.functions[function];
    let nodes: Vec<BlockId> = program.function_blocks(function).collect();
    let local = |label: &str| {
        f.blocks
            .iter()
            .position(|b| b.id == label)
            .expect("validated label")
    };
    let succs = f
        .blocks
        .iter()
        .map(|b| {
            let mut s = match &b.terminator().op {
                Op::Br { nonzero, zero, .. } => vec![local(nonzero), local(zero)],
                Op::Jmp { target } => vec![local(target)],
                _ => Vec::new(),
            };
            s.dedup();
            s
        })
        .collect();
    Cfg { function, nodes, succs }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    pub names: Vec<String>,
    /// Callees by function index, multi-edges collapsed.
    pub callees: Vec<BTreeSet<usize>>,
    /// Functions called from each call-site block.
    pub call_sites: BTreeMap<BlockId, BTreeSet<usize>>,
}

impl CallGraph {
    pub fn num_edges(&self) -> usize {
        self.callees.iter().map(BTreeSet::len).sum()
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        let idx = |n: &str| self.names.iter().position(|x| x == n);
        match (idx(from), idx(to)) {
            (Some(a), Some(b)) => self.callees[a].contains(&b),
            _ => false,
        }
    }

    pub fn callers(&self) -> Vec<Vec<usize>> {
        let mut callers = vec![Vec::new(); self.names.len()];
        for (f, cs) in self.callees.iter().enumerate() {
            for &g in cs {
                callers[g].push(f);
            }
        }
        callers
    }
}

pub fn extract_callgraph(program: &Program) -> CallGraph {
    let names: Vec<String> = program.functions.iter().map(|f| f.name.clone()).collect();
    let mut callees = vec![BTreeSet::new(); names.len()];
    let mut call_sites: BTreeMap<BlockId, BTreeSet<usize>> = BTreeMap::new();
    for fi in 0..names.len() {
        for id in program.function_blocks(fi) {
            for ins in &program.block(id).instructions {
                if let Op::Call { callee } = &ins.op {
                    let g = program.function_index(callee).expect("validated callee");
                    callees[fi].insert(g);
                    call_sites.entry(id).or_default().insert(g);
                }
            }
        }
    }
    CallGraph { names, callees, call_sites }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::parse_program;

    #[test]
    fn straight_line_is_a_path() {
        let p = parse_program(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  JMP b @a.c:1\nblock b\n  JMP c @a.c:2\nblock c\n  HALT @a.c:3\n",
        )
        .unwrap();
        let cfg = extract_cfg(&p, 0);
        assert_eq!(cfg.nodes.len(), 3);
        assert_eq!(cfg.succs, vec![vec![1], vec![2], vec![]]);
    }

    #[test]
    fn branch_has_two_out_edges_and_calls_stay_local() {
        let p = parse_program(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  CALL f @a.c:1\n  BR r0, b, c @a.c:1\nblock b\n  HALT @a.c:2\nblock c\n  HALT @a.c:3\nfn f entry=e\nblock e\n  RET @a.c:4\n",
        )
        .unwrap();
        let cfg = extract_cfg(&p, 0);
        assert_eq!(cfg.succs[0].len(), 2);
        assert_eq!(cfg.num_edges(), 2);
        let cg = extract_callgraph(&p);
        assert!(cg.has_edge("main", "f"));
        assert_eq!(cg.call_sites.len(), 1);
    }

    #[test]
    fn no_calls_no_edges_and_self_loop() {
        let p = parse_program("program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  HALT @a.c:1\n").unwrap();
        assert_eq!(extract_callgraph(&p).num_edges(), 0);
        let r = parse_program(
            "program t mem=0\nfile a.c\nfn main entry=a\nblock a\n  CALL main @a.c:1\n  CALL main @a.c:1\n  HALT @a.c:1\n",
        )
        .unwrap();
        let cg = extract_callgraph(&r);
        assert!(cg.has_edge("main", "main"));
        assert_eq!(cg.num_edges(), 1);
    }
}
