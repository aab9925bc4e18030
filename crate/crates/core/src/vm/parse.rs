//! Line-oriented text format for micro-target programs.
//!
//! ```text
//! # comment (anywhere; runs to end of line)
//! program <name> mem=<cells>
//! file <file-name>
//! fn <name> entry=<block>
//! block <id>
//!   <OPCODE> <operand>, <operand> @<file>:<line>
//! ```
//!
//! Operands: registers `r0`..`r15`, decimal or `0x` hex immediates (optionally
//! negative), and block or function identifiers. The canonical form written by
//! [`serialize`] uses single spaces, `, ` between operands, two-space
//! instruction indentation and a blank line before each `fn`.

use super::{Anchor, BasicBlock, FunctionDef, Instruction, Op, Opcode, Program, ProgramError, Reg, Src};

fn syntax<T>(line: usize, message: impl Into<String>) -> Result<T, ProgramError> {
    Err(ProgramError::Syntax { line, message: message.into() })
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_file_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-' | '/'))
}

fn parse_int(s: &str) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = body.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok()?
    } else if !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit()) {
        body.parse().ok()?
    } else {
        return None;
    };
    Some(if neg { -v } else { v })
}

fn parse_reg(s: &str) -> Option<Reg> {
    let digits = s.strip_prefix('r')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) || digits.len() > 3 {
        return None;
    }
    digits.parse::<u8>().ok().map(Reg)
}

struct Header {
    name: String,
    mem: usize,
}

pub fn parse_program(text: &str) -> Result<Program, ProgramError> {
    let mut header: Option<Header> = None;
    let mut files: Vec<String> = Vec::new();
    let mut functions: Vec<FunctionDef> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (head, rest) = match line.split_once(char::is_whitespace) {
            Some((h, r)) => (h, r.trim()),
            None => (line, ""),
        };
        match head {
            "program" => {
                if header.is_some() {
                    return syntax(ln, "duplicate `program` header");
                }
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, mem] = parts.as_slice() else {
                    return syntax(ln, "expected `program <name> mem=<N>`");
                };
                if !is_ident(name) {
                    return syntax(ln, format!("bad program name `{name}`"));
                }
                let Some(mem) = mem.strip_prefix("mem=").and_then(|m| m.parse::<usize>().ok()) else {
                    return syntax(ln, format!("bad memory size `{mem}`"));
                };
                header = Some(Header { name: name.to_string(), mem });
            }
            _ if header.is_none() => return syntax(ln, "expected `program` header first"),
            "file" => {
                if !is_file_name(rest) {
                    return syntax(ln, format!("bad file name `{rest}`"));
                }
                files.push(rest.to_string());
            }
            "fn" => {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let [name, entry] = parts.as_slice() else {
                    return syntax(ln, "expected `fn <name> entry=<block>`");
                };
                let Some(entry) = entry.strip_prefix("entry=").filter(|e| is_ident(e)) else {
                    return syntax(ln, format!("bad entry clause `{entry}`"));
                };
                if !is_ident(name) {
                    return syntax(ln, format!("bad function name `{name}`"));
                }
                functions.push(FunctionDef {
                    name: name.to_string(),
                    entry_block: entry.to_string(),
                    blocks: Vec::new(),
                });
            }
            "block" => {
                let Some(f) = functions.last_mut() else {
                    return syntax(ln, "`block` outside of a function");
                };
                if !is_ident(rest) {
                    return syntax(ln, format!("bad block id `{rest}`"));
                }
                f.blocks.push(BasicBlock { id: rest.to_string(), instructions: Vec::new() });
            }
            _ => {
                let Some(block) = functions.last_mut().and_then(|f| f.blocks.last_mut()) else {
                    return syntax(ln, format!("unexpected `{head}` outside of a block"));
                };
                block.instructions.push(parse_instruction(ln, head, rest)?);
            }
        }
    }

    let Some(header) = header else {
        return syntax(1, "missing `program` header");
    };
    Program::new(header.name, header.mem, files, functions)
}

fn parse_instruction(ln: usize, head: &str, rest: &str) -> Result<Instruction, ProgramError> {
    let Some(opcode) = Opcode::from_mnemonic(head) else {
        return syntax(ln, format!("unknown opcode `{head}`"));
    };
    let Some((ops_text, anchor_text)) = rest.rsplit_once('@') else {
        return syntax(ln, "instruction is missing its `@file:line` anchor");
    };
    let anchor = match anchor_text.trim().rsplit_once(':') {
        Some((file, line)) if is_file_name(file) => match line.parse::<u32>() {
            Ok(line) if line > 0 => Anchor { file: file.to_string(), line },
            _ => return syntax(ln, format!("bad anchor line `{line}`")),
        },
        _ => return syntax(ln, format!("bad anchor `{}`", anchor_text.trim())),
    };
    let ops_text = ops_text.trim();
    let operands: Vec<&str> = if ops_text.is_empty() {
        Vec::new()
    } else {
        ops_text.split(',').map(str::trim).collect()
    };
    let arity = match opcode {
        Opcode::Ret | Opcode::Halt => 0,
        Opcode::Jmp | Opcode::Call | Opcode::Bug => 1,
        Opcode::Br => 3,
        _ => 2,
    };
    if operands.len() != arity {
        return syntax(
            ln,
            format!("{} takes {arity} operand(s), found {}", opcode.mnemonic(), operands.len()),
        );
    }
    let reg = |s: &str| parse_reg(s).map_or_else(|| syntax(ln, format!("expected register, found `{s}`")), Ok);
    let src = |s: &str| match parse_reg(s) {
        Some(r) => Ok(Src::Reg(r)),
        None => parse_int(s)
            .map(Src::Imm)
            .map_or_else(|| syntax(ln, format!("expected register or integer, found `{s}`")), Ok),
    };
    let ident = |s: &str| {
        if is_ident(s) && parse_reg(s).is_none() {
            Ok(s.to_string())
        } else {
            syntax(ln, format!("expected identifier, found `{s}`"))
        }
    };
    let op = match opcode {
        Opcode::Const => Op::Const {
            dst: reg(operands[0])?,
            value: parse_int(operands[1])
                .map_or_else(|| syntax(ln, format!("expected integer, found `{}`", operands[1])), Ok)?,
        },
        Opcode::Add => Op::Add { dst: reg(operands[0])?, src: src(operands[1])? },
        Opcode::Sub => Op::Sub { dst: reg(operands[0])?, src: src(operands[1])? },
        Opcode::Mul => Op::Mul { dst: reg(operands[0])?, src: src(operands[1])? },
        Opcode::Div => Op::Div { dst: reg(operands[0])?, src: src(operands[1])? },
        Opcode::LoadIn => Op::LoadIn { dst: reg(operands[0])?, index: src(operands[1])? },
        Opcode::MemR => Op::MemR { dst: reg(operands[0])?, addr: src(operands[1])? },
        Opcode::MemW => Op::MemW { addr: src(operands[0])?, value: src(operands[1])? },
        Opcode::Br => Op::Br {
            cond: reg(operands[0])?,
            nonzero: ident(operands[1])?,
            zero: ident(operands[2])?,
        },
        Opcode::Jmp => Op::Jmp { target: ident(operands[0])? },
        Opcode::Call => Op::Call { callee: ident(operands[0])? },
        Opcode::Bug => match parse_int(operands[0]) {
            Some(id) if (0..=u32::MAX as i64).contains(&id) => Op::Bug { id: id as u32 },
            _ => return syntax(ln, format!("BUG needs a non-negative id, found `{}`", operands[0])),
        },
        Opcode::Ret => Op::Ret,
        Opcode::Halt => Op::Halt,
    };
    Ok(Instruction { op, anchor })
}

pub(super) fn serialize(p: &Program) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "program {} mem={}", p.name, p.memory_size);
    for f in &p.files {
        let _ = writeln!(out, "file {f}");
    }
    for f in &p.functions {
        let _ = writeln!(out, "\nfn {} entry={}", f.name, f.entry_block);
        for b in &f.blocks {
            let _ = writeln!(out, "block {}", b.id);
            for ins in &b.instructions {
                let _ = writeln!(out, "  {} @{}", ins.op, ins.anchor);
            }
        }
    }
    out
}
