//! Statement-level code snippets shared by target and corpus generation.
//!
//! Every snippet emits the instructions of one source line. None of them can
//! fault in a program with at least [`MEM_CELLS`] memory cells.

use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::Rng;

pub const MEM_CELLS: usize = 256;

/// Builds the text of one function, one anchored line at a time.
pub(crate) struct FnWriter {
    file: String,
    text: String,
    labels: usize,
    pub line: u32,
    /// Input bytes that snippets may read.
    pub inputs: std::ops::Range<u32>,
}

impl FnWriter {
    pub fn new(name: &str, file: &str, line: u32) -> Self {
        FnWriter { file: file.to_string(), text: format!("fn {name} entry=b0\nblock b0\n"), labels: 1, line, inputs: 0..16 }
    }

    pub fn ins(&mut self, ins: &str) {
        writeln!(self.text, "  {ins} @{}:{}", self.file, self.line).expect("string write");
    }

    pub fn block(&mut self, label: &str) {
        writeln!(self.text, "block {label}").expect("string write");
    }

    pub fn fresh(&mut self) -> String {
        self.labels += 1;
        format!("b{}", self.labels - 1)
    }

    pub fn finish(self) -> String {
        self.text
    }
}

const TEMPS: [u8; 8] = [4, 5, 6, 7, 8, 9, 10, 11];

fn temps<const N: usize, R: Rng + ?Sized>(rng: &mut R) -> [u8; N] {
    let picked: Vec<u8> = TEMPS.choose_multiple(rng, N).copied().collect();
    picked.try_into().expect("enough temporaries")
}

fn byte<R: Rng + ?Sized>(w: &FnWriter, rng: &mut R) -> u32 {
    rng.random_range(w.inputs.clone())
}

/// Allocation sized from the input, written without a bounds clamp. Leaves
/// the line open so a caller can append to it.
pub(crate) fn motif<R: Rng + ?Sized>(w: &mut FnWriter, rng: &mut R) {
    let [a, b] = temps(rng);
    let k = byte(w, rng);
    w.ins(&format!("LOADIN r{a}, {k}"));
    w.ins(&format!("MEMW r{a}, r{b}"));
}

/// The motif with a clamp between the read and the write.
pub(crate) fn guarded_motif<R: Rng + ?Sized>(w: &mut FnWriter, rng: &mut R) {
    let [a, b] = temps(rng);
    let k = byte(w, rng);
    w.ins(&format!("LOADIN r{a}, {k}"));
    w.ins(&format!("DIV r{a}, {}", rng.random_range(16..=64)));
    w.ins(&format!("MEMW r{a}, r{b}"));
    w.line += 1;
}

/// Any one non-motif statement. May open new blocks.
pub(crate) fn filler<R: Rng + ?Sized>(w: &mut FnWriter, rng: &mut R) {
    let [a, b, c] = temps(rng);
    match rng.random_range(0..8) {
        0 => {
            w.ins(&format!("CONST r{a}, {}", rng.random_range(0..1000)));
            w.ins(&format!("ADD r{a}, r{b}"));
            w.ins(&format!("MUL r{a}, {}", rng.random_range(2..9)));
        }
        1 => {
            let k = byte(w, rng);
    w.ins(&format!("LOADIN r{a}, {k}"));
            w.ins(&format!("ADD r{b}, r{a}"));
        }
        2 => w.ins(&format!("MEMR r{a}, {}", rng.random_range(0..MEM_CELLS))),
        3 => {
            w.ins(&format!("CONST r{a}, {}", rng.random_range(0..MEM_CELLS)));
            w.ins(&format!("MEMW r{a}, r{b}"));
        }
        4 => {
            w.ins(&format!("SUB r{a}, r{b}"));
            w.ins(&format!("DIV r{a}, {}", rng.random_range(2..40)));
        }
        5 => {
            // if (input[k]) x += y;
            let (then, join) = (w.fresh(), w.fresh());
            let k = byte(w, rng);
    w.ins(&format!("LOADIN r{a}, {k}"));
            w.ins(&format!("BR r{a}, {then}, {join}"));
            w.block(&then);
            w.ins(&format!("ADD r{b}, r{c}"));
            w.ins(&format!("JMP {join}"));
            w.block(&join);
        }
        6 => {
            // for (i = n; i; i--) x += i;
            let (body, join) = (w.fresh(), w.fresh());
            w.ins(&format!("CONST r{a}, {}", rng.random_range(1..5)));
            w.ins(&format!("JMP {body}"));
            w.block(&body);
            w.ins(&format!("ADD r{b}, r{a}"));
            w.ins(&format!("SUB r{a}, 1"));
            w.ins(&format!("BR r{a}, {body}, {join}"));
            w.block(&join);
        }
        _ => {
            w.ins(&format!("MEMR r{a}, {}", rng.random_range(0..MEM_CELLS)));
            w.ins(&format!("MUL r{a}, r{b}"));
            w.ins(&format!("CONST r{c}, {}", rng.random_range(0..MEM_CELLS)));
            w.ins(&format!("MEMW r{c}, r{a}"));
        }
    }
    w.line += 1;
}

/// `if (input[k] == value) { ... }` in the style of a header check.
pub(crate) fn byte_check<R: Rng + ?Sized>(w: &mut FnWriter, rng: &mut R) {
    let (pass, join) = (w.fresh(), w.fresh());
    let [a] = temps(rng);
    w.ins(&format!("LOADIN r0, {}", rng.random_range(0..8)));
    w.ins(&format!("SUB r0, {}", rng.random_range(1..256)));
    w.ins(&format!("BR r0, {join}, {pass}"));
    w.block(&pass);
    w.line += 1;
    w.ins(&format!("ADD r{a}, 1"));
    w.ins(&format!("JMP {join}"));
    w.block(&join);
    w.line += 1;
}

/// Loop over `len` input bytes starting at `start`, dispatching each into
/// one of `ways` value ranges. Produces many hit-count variations, never
/// faults. `ways` must divide 256.
pub(crate) fn byte_switch_loop(w: &mut FnWriter, start: u32, len: u32, ways: u32) {
    let (head, next, done) = (w.fresh(), w.fresh(), w.fresh());
    let cases: Vec<String> = (0..ways).map(|_| w.fresh()).collect();
    w.ins(&format!("CONST r4, {start}"));
    w.ins(&format!("CONST r5, {len}"));
    w.ins(&format!("JMP {head}"));
    w.line += 1;
    w.block(&head);
    w.ins("LOADIN r6, r4");
    w.ins(&format!("DIV r6, {}", 256 / ways));
    for (j, case) in cases.iter().enumerate().take(ways as usize - 1) {
        let rest = w.fresh();
        w.ins(&format!("BR r6, {rest}, {case}"));
        w.line += 1;
        w.block(&rest);
        if j + 2 < ways as usize {
            w.ins("SUB r6, 1");
        }
    }
    w.ins(&format!("JMP {}", cases[ways as usize - 1]));
    w.line += 1;
    for (cell, label) in cases.iter().enumerate() {
        w.block(label);
        w.ins(&format!("MEMR r8, {}", cell + 1));
        w.ins("ADD r8, 1");
        w.ins(&format!("CONST r9, {}", cell + 1));
        w.ins("MEMW r9, r8");
        w.ins(&format!("JMP {next}"));
        w.line += 1;
    }
    w.block(&next);
    w.ins("ADD r4, 1");
    w.ins("SUB r5, 1");
    w.ins(&format!("BR r5, {head}, {done}"));
    w.line += 1;
    w.block(&done);
}
