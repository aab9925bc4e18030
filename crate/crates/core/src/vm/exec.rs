use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Anchor, ArithOp, BlockId, CSrc, Code, Program, NUM_REGS, ARG_REGS};

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Halt,
    CrashBug(u32),
    CrashDivZero,
    CrashOob,
    Hang,
}

impl Outcome {
    pub fn is_crash(self) -> bool {
        matches!(self, Outcome::CrashBug(_) | Outcome::CrashDivZero | Outcome::CrashOob)
    }

    pub fn fault_kind(self) -> Option<FaultKind> {
        match self {
            Outcome::Halt => None,
            Outcome::CrashBug(_) => Some(FaultKind::Bug),
            Outcome::CrashDivZero => Some(FaultKind::DivZero),
            Outcome::CrashOob => Some(FaultKind::Oob),
            Outcome::Hang => Some(FaultKind::Hang),
        }
    }
}

/// Fault classes used for triage: the three crash outcomes plus hangs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Bug,
    DivZero,
    Oob,
    Hang,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [FaultKind::Bug, FaultKind::DivZero, FaultKind::Oob, FaultKind::Hang];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::Bug => "bug",
            FaultKind::DivZero => "div_zero",
            FaultKind::Oob => "oob",
            FaultKind::Hang => "hang",
        }
    }

    pub fn parse(s: &str) -> Option<FaultKind> {
        FaultKind::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl std::fmt::Display for FaultKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StackFrame {
    pub function: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub outcome: Outcome,
    pub edge_trace: Vec<(BlockId, BlockId)>,
    pub block_set: BTreeSet<BlockId>,
    /// Outermost frame first; the last frame holds the faulting instruction.
    pub call_stack_at_fault: Vec<StackFrame>,
    pub steps: u64,
    /// Block executing when the run crashed or ran out of steps.
    pub fault_block: Option<BlockId>,
    pub fault_anchor: Option<Anchor>,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    block: u32,
    pc: u32,
}

/// Reusable interpreter state. Keeps the edge trace and the frames of the last
/// run so callers can inspect them without re-executing.
pub struct Executor<'p> {
    program: &'p Program,
    frames: Vec<Frame>,
    /// Registers of suspended callers; the running frame's live in `run`.
    saved: Vec<[i64; NUM_REGS]>,
    mem: Vec<i64>,
    trace: Vec<(BlockId, BlockId)>,
    steps: u64,
    outcome: Outcome,
}

impl<'p> Executor<'p> {
    pub fn new(program: &'p Program) -> Self {
        Executor {
            program,
            frames: Vec::new(),
            saved: Vec::new(),
            mem: vec![0; program.memory_size],
            trace: Vec::new(),
            steps: 0,
            outcome: Outcome::Halt,
        }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn trace(&self) -> &[(BlockId, BlockId)] {
        &self.trace
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    /// Executes the program over `input`. A run that reaches `step_limit`
    /// executed steps is reported as [`Outcome::Hang`].
    pub fn run(&mut self, input: &[u8], step_limit: u64) -> Outcome {
        let prog = self.program;
        self.frames.clear();
        self.saved.clear();
        self.trace.clear();
        self.mem.iter_mut().for_each(|c| *c = 0);

        let entry = prog.function_entry_block(prog.entry_function()).0;
        self.frames.push(Frame { block: entry, pc: 0 });
        let mut regs = [0i64; NUM_REGS];

        let mem_size = self.mem.len() as i64;
        let mut block = entry;
        let mut pc = 0u32;
        let mut code = prog.code(block);
        let mut steps = 0u64;

        let outcome = loop {
            steps += 1;
            if steps >= step_limit {
                break Outcome::Hang;
            }
            let val = |regs: &[i64; NUM_REGS], s: CSrc| match s {
                CSrc::Reg(r) => regs[r as usize],
                CSrc::Imm(v) => v,
            };
            match code[pc as usize] {
                Code::Const(d, v) => regs[d as usize] = v,
                Code::Arith(op, d, s) => {
                    let rhs = val(&regs, s);
                    let lhs = regs[d as usize];
                    regs[d as usize] = match op {
                        ArithOp::Add => lhs.wrapping_add(rhs),
                        ArithOp::Sub => lhs.wrapping_sub(rhs),
                        ArithOp::Mul => lhs.wrapping_mul(rhs),
                        ArithOp::Div => {
                            if rhs == 0 {
                                break Outcome::CrashDivZero;
                            }
                            lhs.wrapping_div(rhs)
                        }
                    };
                }
                Code::LoadIn(d, s) => {
                    let idx = val(&regs, s);
                    regs[d as usize] = if idx >= 0 && (idx as u64) < input.len() as u64 {
                        input[idx as usize] as i64
                    } else {
                        0
                    };
                }
                Code::MemR(d, s) => {
                    let addr = val(&regs, s);
                    if addr < 0 || addr >= mem_size {
                        break Outcome::CrashOob;
                    }
                    regs[d as usize] = self.mem[addr as usize];
                }
                Code::MemW(a, v) => {
                    let addr = val(&regs, a);
                    if addr < 0 || addr >= mem_size {
                        break Outcome::CrashOob;
                    }
                    self.mem[addr as usize] = val(&regs, v);
                }
                Code::Br(c, nz, z) => {
                    let next = if regs[c as usize] != 0 { nz } else { z };
                    self.trace.push((BlockId(block), BlockId(next)));
                    block = next;
                    pc = 0;
                    code = prog.code(block);
                    continue;
                }
                Code::Jmp(t) => {
                    self.trace.push((BlockId(block), BlockId(t)));
                    block = t;
                    pc = 0;
                    code = prog.code(block);
                    continue;
                }
                Code::Call(g) => {
                    let mut callee_regs = [0; NUM_REGS];
                    callee_regs[..ARG_REGS].copy_from_slice(&regs[..ARG_REGS]);
                    let callee_entry = prog.function_entry_block(g as usize).0;
                    self.trace.push((BlockId(block), BlockId(callee_entry)));
                    *self.frames.last_mut().expect("live frame") = Frame { block, pc };
                    self.frames.push(Frame { block: callee_entry, pc: 0 });
                    self.saved.push(regs);
                    regs = callee_regs;
                    block = callee_entry;
                    pc = 0;
                    code = prog.code(block);
                    continue;
                }
                Code::Ret => {
                    if self.frames.len() == 1 {
                        *self.frames.last_mut().expect("live frame") = Frame { block, pc };
                        break Outcome::Halt;
                    }
                    let ret = regs[0];
                    self.frames.pop();
                    regs = self.saved.pop().expect("caller frame");
                    regs[0] = ret;
                    let caller = *self.frames.last().expect("caller frame");
                    self.trace.push((BlockId(block), BlockId(caller.block)));
                    block = caller.block;
                    pc = caller.pc + 1;
                    code = prog.code(block);
                    continue;
                }
                Code::Bug(id) => break Outcome::CrashBug(id),
                Code::Halt => break Outcome::Halt,
            }
            pc += 1;
        };
        *self.frames.last_mut().expect("live frame") = Frame { block, pc };
        self.steps = steps;
        self.outcome = outcome;
        outcome
    }

    /// Block executing when the last run stopped.
    pub fn last_block(&self) -> BlockId {
        BlockId(self.frames.last().expect("run() was called").block)
    }

    /// Anchor of the instruction the last run stopped at.
    pub fn last_anchor(&self) -> &'p Anchor {
        let f = self.frames.last().expect("run() was called");
        &self.program.block(BlockId(f.block)).instructions[f.pc as usize].anchor
    }

    /// Live call stack of the last run, outermost first.
    pub fn stack(&self) -> Vec<StackFrame> {
        self.frames
            .iter()
            .map(|f| {
                let id = BlockId(f.block);
                let info = self.program.block_info(id);
                let anchor = &self.program.block(id).instructions[f.pc as usize].anchor;
                StackFrame {
                    function: self.program.functions[info.function].name.clone(),
                    file: anchor.file.clone(),
                    line: anchor.line,
                }
            })
            .collect()
    }

    /// Blocks visited by the last run.
    pub fn block_set(&self) -> BTreeSet<BlockId> {
        let entry = self.program.function_entry_block(self.program.entry_function());
        std::iter::once(entry).chain(self.trace.iter().map(|&(_, cur)| cur)).collect()
    }

    pub fn result(&self) -> ExecResult {
        let faulted = self.outcome != Outcome::Halt;
        ExecResult {
            outcome: self.outcome,
            edge_trace: self.trace.clone(),
            block_set: self.block_set(),
            call_stack_at_fault: if self.outcome.is_crash() { self.stack() } else { Vec::new() },
            steps: self.steps,
            fault_block: faulted.then(|| self.last_block()),
            fault_anchor: faulted.then(|| self.last_anchor().clone()),
        }
    }
}

/// Runs `program` on `input`; a pure function of its arguments.
pub fn execute(program: &Program, input: &[u8], step_limit: u64) -> ExecResult {
    let mut ex = Executor::new(program);
    ex.run(input, step_limit);
    ex.result()
}
