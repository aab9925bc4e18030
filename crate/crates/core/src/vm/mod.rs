//! The micro-target language: program model, text format, interpreter,
//! control-flow extraction and edge coverage.

mod cfg;
mod coverage;
mod exec;
mod parse;

pub use cfg::{extract_callgraph, extract_cfg, CallGraph, Cfg};
pub use coverage::{bucket_flag, edge_index, CoverageMap, HitCounts, MAP_SIZE};
pub use exec::{execute, ExecResult, Executor, FaultKind, Outcome, StackFrame, DEFAULT_STEP_LIMIT};
pub use parse::parse_program;

use std::collections::HashMap;
use std::fmt;

use crate::hash::{fnv1a64, fold16};

pub const NUM_REGS: usize = 16;
/// Registers copied from caller to callee on CALL.
pub const ARG_REGS: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProgramError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid program: {0}")]
    Invalid(String),
}

/// Index of a block in the program-wide flattened block table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct BlockId(pub u32);

impl BlockId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct Anchor {
    pub file: String,
    pub line: u32,
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Reg(pub u8);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A source operand: register or immediate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Src {
    Reg(Reg),
    Imm(i64),
}

impl fmt::Display for Src {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Src::Reg(r) => r.fmt(f),
            Src::Imm(v) => v.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Const,
    Add,
    Sub,
    Mul,
    Div,
    LoadIn,
    MemR,
    MemW,
    Br,
    Jmp,
    Call,
    Ret,
    Bug,
    Halt,
}

impl Opcode {
    pub const ALL: [Opcode; 14] = [
        Opcode::Const,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Div,
        Opcode::LoadIn,
        Opcode::MemR,
        Opcode::MemW,
        Opcode::Br,
        Opcode::Jmp,
        Opcode::Call,
        Opcode::Ret,
        Opcode::Bug,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Const => "CONST",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::Div => "DIV",
            Opcode::LoadIn => "LOADIN",
            Opcode::MemR => "MEMR",
            Opcode::MemW => "MEMW",
            Opcode::Br => "BR",
            Opcode::Jmp => "JMP",
            Opcode::Call => "CALL",
            Opcode::Ret => "RET",
            Opcode::Bug => "BUG",
            Opcode::Halt => "HALT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    pub fn is_terminator(self) -> bool {
        matches!(self, Opcode::Br | Opcode::Jmp | Opcode::Ret | Opcode::Halt | Opcode::Bug)
    }
}

/// Instruction with typed operands. Labels and callees are kept by name;
/// [`Program`] resolves them when it is validated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Op {
    Const { dst: Reg, value: i64 },
    Add { dst: Reg, src: Src },
    Sub { dst: Reg, src: Src },
    Mul { dst: Reg, src: Src },
    Div { dst: Reg, src: Src },
    /// `dst = input[index]`, or 0 past the end of the input.
    LoadIn { dst: Reg, index: Src },
    MemR { dst: Reg, addr: Src },
    MemW { addr: Src, value: Src },
    /// Jump to `nonzero` if `cond != 0`, else to `zero`.
    Br { cond: Reg, nonzero: String, zero: String },
    Jmp { target: String },
    Call { callee: String },
    Ret,
    Bug { id: u32 },
    Halt,
}

impl Op {
    pub fn opcode(&self) -> Opcode {
        match self {
            Op::Const { .. } => Opcode::Const,
            Op::Add { .. } => Opcode::Add,
            Op::Sub { .. } => Opcode::Sub,
            Op::Mul { .. } => Opcode::Mul,
            Op::Div { .. } => Opcode::Div,
            Op::LoadIn { .. } => Opcode::LoadIn,
            Op::MemR { .. } => Opcode::MemR,
            Op::MemW { .. } => Opcode::MemW,
            Op::Br { .. } => Opcode::Br,
            Op::Jmp { .. } => Opcode::Jmp,
            Op::Call { .. } => Opcode::Call,
            Op::Ret => Opcode::Ret,
            Op::Bug { .. } => Opcode::Bug,
            Op::Halt => Opcode::Halt,
        }
    }

    fn registers(&self) -> Vec<Reg> {
        let mut regs = Vec::new();
        let src = |s: &Src, regs: &mut Vec<Reg>| {
            if let Src::Reg(r) = s {
                regs.push(*r);
            }
        };
        match self {
            Op::Const { dst, .. } => regs.push(*dst),
            Op::Add { dst, src: s }
            | Op::Sub { dst, src: s }
            | Op::Mul { dst, src: s }
            | Op::Div { dst, src: s }
            | Op::LoadIn { dst, index: s }
            | Op::MemR { dst, addr: s } => {
                regs.push(*dst);
                src(s, &mut regs);
            }
            Op::MemW { addr, value } => {
                src(addr, &mut regs);
                src(value, &mut regs);
            }
            Op::Br { cond, .. } => regs.push(*cond),
            _ => {}
        }
        regs
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.opcode().mnemonic();
        match self {
            Op::Const { dst, value } => write!(f, "{m} {dst}, {value}"),
            Op::Add { dst, src } | Op::Sub { dst, src } | Op::Mul { dst, src } | Op::Div { dst, src } => {
                write!(f, "{m} {dst}, {src}")
            }
            Op::LoadIn { dst, index } => write!(f, "{m} {dst}, {index}"),
            Op::MemR { dst, addr } => write!(f, "{m} {dst}, {addr}"),
            Op::MemW { addr, value } => write!(f, "{m} {addr}, {value}"),
            Op::Br { cond, nonzero, zero } => write!(f, "{m} {cond}, {nonzero}, {zero}"),
            Op::Jmp { target } => write!(f, "{m} {target}"),
            Op::Call { callee } => write!(f, "{m} {callee}"),
            Op::Bug { id } => write!(f, "{m} {id}"),
            Op::Ret | Op::Halt => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Op,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: String,
    pub instructions: Vec<Instruction>,
}

impl BasicBlock {
    pub fn terminator(&self) -> &Instruction {
        self.instructions.last().expect("validated blocks are non-empty")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDef {
    pub name: String,
    pub entry_block: String,
    pub blocks: Vec<BasicBlock>,
}

/// Per-block data derived at validation time.
#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub function: usize,
    pub local: usize,
    pub uid: String,
    pub hash: u16,
}

/// Lowered instruction with labels and callees resolved to indices.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Code {
    Const(u8, i64),
    Arith(ArithOp, u8, CSrc),
    LoadIn(u8, CSrc),
    MemR(u8, CSrc),
    MemW(CSrc, CSrc),
    Br(u8, u32, u32),
    Jmp(u32),
    Call(u32),
    Ret,
    Bug(u32),
    Halt,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum CSrc {
    Reg(u8),
    Imm(i64),
}

impl From<Src> for CSrc {
    fn from(s: Src) -> Self {
        match s {
            Src::Reg(r) => CSrc::Reg(r.0),
            Src::Imm(v) => CSrc::Imm(v),
        }
    }
}

/// A validated micro-target program.
#[derive(Debug, Clone)]
pub struct Program {
    pub name: String,
    pub memory_size: usize,
    pub files: Vec<String>,
    pub functions: Vec<FunctionDef>,
    pub entry: String,
    func_index: HashMap<String, usize>,
    /// Global id of each function's first block.
    func_offset: Vec<u32>,
    func_entry: Vec<u32>,
    blocks: Vec<BlockInfo>,
    code: Vec<Vec<Code>>,
}

impl Program {
    /// Validates the parts of a program and builds the lookup tables.
    pub fn new(
        name: String,
        memory_size: usize,
        files: Vec<String>,
        functions: Vec<FunctionDef>,
    ) -> Result<Program, ProgramError> {
        let invalid = |m: String| Err(ProgramError::Invalid(m));
        let mut func_index = HashMap::new();
        for (i, f) in functions.iter().enumerate() {
            if func_index.insert(f.name.clone(), i).is_some() {
                return invalid(format!("function `{}` defined twice", f.name));
            }
        }
        if !func_index.contains_key("main") {
            return invalid("entry function `main` is not defined".into());
        }
        let mut seen_files = std::collections::HashSet::new();
        for file in &files {
            if !seen_files.insert(file.as_str()) {
                return invalid(format!("file `{file}` declared twice"));
            }
        }

        let mut blocks = Vec::new();
        let mut func_offset = Vec::new();
        let mut func_entry = Vec::new();
        let mut local_index: Vec<HashMap<&str, usize>> = Vec::new();
        for (fi, f) in functions.iter().enumerate() {
            func_offset.push(blocks.len() as u32);
            let mut map = HashMap::new();
            for (bi, b) in f.blocks.iter().enumerate() {
                if map.insert(b.id.as_str(), bi).is_some() {
                    return invalid(format!("block `{}` defined twice in function `{}`", b.id, f.name));
                }
                let uid = format!("{}::{}", f.name, b.id);
                let hash = fold16(fnv1a64(uid.as_bytes()));
                blocks.push(BlockInfo { function: fi, local: bi, uid, hash });
            }
            match map.get(f.entry_block.as_str()) {
                Some(&bi) => func_entry.push(func_offset[fi] + bi as u32),
                None => {
                    return invalid(format!(
                        "entry block `{}` of function `{}` does not exist",
                        f.entry_block, f.name
                    ))
                }
            }
            local_index.push(map);
        }

        let mut code = Vec::with_capacity(blocks.len());
        for (fi, f) in functions.iter().enumerate() {
            if f.blocks.is_empty() {
                return invalid(format!("function `{}` has no blocks", f.name));
            }
            for b in &f.blocks {
                let where_ = || format!("block `{}` of function `{}`", b.id, f.name);
                if b.instructions.is_empty() {
                    return invalid(format!("{} is empty", where_()));
                }
                let n = b.instructions.len();
                let mut lowered = Vec::with_capacity(n);
                for (ii, ins) in b.instructions.iter().enumerate() {
                    let last = ii + 1 == n;
                    let term = ins.op.opcode().is_terminator();
                    if last && !term {
                        return invalid(format!("{} does not end in a terminator", where_()));
                    }
                    if !last && term {
                        return invalid(format!("{} has a terminator before its final instruction", where_()));
                    }
                    if !seen_files.contains(ins.anchor.file.as_str()) {
                        return invalid(format!(
                            "instruction `{}` in {} is anchored to undeclared file `{}`",
                            ins.op,
                            where_(),
                            ins.anchor.file
                        ));
                    }
                    for r in ins.op.registers() {
                        if r.0 as usize >= NUM_REGS {
                            return invalid(format!("register {r} out of range in {}", where_()));
                        }
                    }
                    let label = |l: &str| -> Result<u32, ProgramError> {
                        local_index[fi]
                            .get(l)
                            .map(|&bi| func_offset[fi] + bi as u32)
                            .ok_or_else(|| {
                                ProgramError::Invalid(format!(
                                    "branch target `{l}` in {} is not a block of `{}`",
                                    where_(),
                                    f.name
                                ))
                            })
                    };
                    let c = match &ins.op {
                        Op::Const { dst, value } => Code::Const(dst.0, *value),
                        Op::Add { dst, src } => Code::Arith(ArithOp::Add, dst.0, (*src).into()),
                        Op::Sub { dst, src } => Code::Arith(ArithOp::Sub, dst.0, (*src).into()),
                        Op::Mul { dst, src } => Code::Arith(ArithOp::Mul, dst.0, (*src).into()),
                        Op::Div { dst, src } => Code::Arith(ArithOp::Div, dst.0, (*src).into()),
                        Op::LoadIn { dst, index } => Code::LoadIn(dst.0, (*index).into()),
                        Op::MemR { dst, addr } => Code::MemR(dst.0, (*addr).into()),
                        Op::MemW { addr, value } => Code::MemW((*addr).into(), (*value).into()),
                        Op::Br { cond, nonzero, zero } => Code::Br(cond.0, label(nonzero)?, label(zero)?),
                        Op::Jmp { target } => Code::Jmp(label(target)?),
                        Op::Call { callee } => match func_index.get(callee) {
                            Some(&gi) => Code::Call(gi as u32),
                            None => {
                                return invalid(format!(
                                    "CALL in {} names undefined function `{callee}`",
                                    where_()
                                ))
                            }
                        },
                        Op::Ret => Code::Ret,
                        Op::Bug { id } => Code::Bug(*id),
                        Op::Halt => Code::Halt,
                    };
                    lowered.push(c);
                }
                code.push(lowered);
            }
        }

        Ok(Program {
            name,
            memory_size,
            files,
            functions,
            entry: "main".into(),
            func_index,
            func_offset,
            func_entry,
            blocks,
            code,
        })
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.func_index.get(name).copied()
    }

    pub fn entry_function(&self) -> usize {
        self.func_index["main"]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_info(&self, id: BlockId) -> &BlockInfo {
        &self.blocks[id.index()]
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        let info = &self.blocks[id.index()];
        &self.functions[info.function].blocks[info.local]
    }

    pub fn block_uid(&self, id: BlockId) -> &str {
        &self.blocks[id.index()].uid
    }

    pub fn block_by_uid(&self, uid: &str) -> Option<BlockId> {
        let (f, b) = uid.split_once("::")?;
        let fi = self.function_index(f)?;
        let local = self.functions[fi].blocks.iter().position(|x| x.id == b)?;
        Some(BlockId(self.func_offset[fi] + local as u32))
    }

    /// Global ids of the blocks of function `fi`, in definition order.
    pub fn function_blocks(&self, fi: usize) -> impl Iterator<Item = BlockId> {
        let start = self.func_offset[fi];
        (start..start + self.functions[fi].blocks.len() as u32).map(BlockId)
    }

    pub fn function_entry_block(&self, fi: usize) -> BlockId {
        BlockId(self.func_entry[fi])
    }

    pub fn block_ids(&self) -> impl Iterator<Item = BlockId> {
        (0..self.blocks.len() as u32).map(BlockId)
    }

    pub(crate) fn code(&self, id: u32) -> &[Code] {
        &self.code[id as usize]
    }

    pub(crate) fn block_hashes(&self) -> Vec<u16> {
        self.blocks.iter().map(|b| b.hash).collect()
    }

    /// Every (file, line) anchor used by the program, sorted.
    pub fn anchored_lines(&self) -> Vec<Anchor> {
        let mut v: Vec<Anchor> = self
            .functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .flat_map(|b| b.instructions.iter().map(|i| i.anchor.clone()))
            .collect();
        v.sort();
        v.dedup();
        v
    }

    /// Canonical text form; `parse_program(p.to_text())` reproduces `p`.
    pub fn to_text(&self) -> String {
        parse::serialize(self)
    }
}
