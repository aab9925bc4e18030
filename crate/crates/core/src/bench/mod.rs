//! Bug-seeded micro-target generation and the bundled fixture suite.
//!
//! A generated target is a `main -> ... -> leaf` call chain. The hop out of
//! chain function `i` requires input byte `i` to equal `guard_bytes[i]`;
//! guard bytes left over once the chain runs out are checked in the leaf.
//! The leaf holds an unclamped input-sized write followed by the seeded
//! fault, all on the bug line. Decoy functions called from `main` loop over
//! input bytes and cannot fault.

mod corpus;
mod files;
mod snippets;
mod suite;

pub use corpus::{
    generate_predictor_corpus, motif_oracle, read_corpus_jsonl, write_corpus_jsonl, CorpusError, CorpusFunction, DEFAULT_IMBALANCE,
};
pub use files::{bundle_contents, program_file, sidecar_file, write_bundle, Sidecar, CORPUS_FILE, CORPUS_POSITIVES, CORPUS_SEED};
pub use snippets::MEM_CELLS;
pub use suite::{hits, median_execs, run_trials, suite_config, Trial, SUITE_BUDGET, SUITE_TRIALS};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distance::{Origin, TargetEntry, TargetSpec};
use crate::vm::FaultKind;
use snippets::{byte_switch_loop, filler, guarded_motif, motif, FnWriter};

/// Input-dispatch loops shared out among the decoys of a target.
const DECOY_LOOPS: usize = 6;

/// Length of the neutral seed and witness inputs, unless the guards need more.
pub const SEED_LEN: usize = 400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainSite {
    pub function: String,
    pub file: String,
    /// Call line of the next hop; the bug line for the leaf.
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecipe {
    pub name: String,
    pub call_chain_depth: usize,
    pub guard_bytes: Vec<u8>,
    pub bug_kind: FaultKind,
    pub decoy_functions: usize,
    /// Negatives per positive in the predictor corpus.
    pub imbalance_ratio: f64,
    /// Optional fixed names and locations for the chain, one per function.
    #[serde(default)]
    pub chain: Vec<ChainSite>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecipeError {
    #[error("call_chain_depth must be at least 1")]
    Depth,
    #[error("at most 64 guard bytes are supported")]
    Guards,
    #[error("chain layout lists {0} functions, depth is {1}")]
    Chain(usize, usize),
    #[error("chain layout leaves no room before line {0}")]
    Layout(u32),
}

impl CorpusRecipe {
    pub fn new(name: &str, depth: usize, guards: &[u8], kind: FaultKind, decoys: usize) -> Self {
        CorpusRecipe {
            name: name.to_string(),
            call_chain_depth: depth,
            guard_bytes: guards.to_vec(),
            bug_kind: kind,
            decoy_functions: decoys,
            imbalance_ratio: DEFAULT_IMBALANCE,
            chain: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), RecipeError> {
        if self.call_chain_depth == 0 {
            return Err(RecipeError::Depth);
        }
        if self.guard_bytes.len() > 64 {
            return Err(RecipeError::Guards);
        }
        if !self.chain.is_empty() && self.chain.len() != self.call_chain_depth {
            return Err(RecipeError::Chain(self.chain.len(), self.call_chain_depth));
        }
        Ok(())
    }

    fn stem(&self) -> &str {
        self.name.strip_suffix("_like").unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugEntry {
    pub file: String,
    pub line: u32,
    pub kind: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub program: String,
    pub bugs: Vec<BugEntry>,
    /// Function name to "contains the planted motif".
    pub labels: BTreeMap<String, bool>,
}

impl GroundTruth {
    pub fn target_spec(&self) -> TargetSpec {
        TargetSpec::ground_truth(self.bugs.iter().map(|b| (b.file.as_str(), b.line))).expect("bug lines are distinct")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedTarget {
    pub text: String,
    pub ground_truth: GroundTruth,
    /// Input that reaches the bug.
    pub witness: Vec<u8>,
    /// All-zero input that does not.
    pub seed: Vec<u8>,
}

pub(crate) const NAMES: [&str; 24] = [
    "parse_header", "read_block", "decode_frame", "emit_record", "scan_tags", "load_table", "unpack_field",
    "walk_nodes", "copy_chunk", "check_magic", "open_stream", "fill_buffer", "handle_tag", "read_string",
    "next_token", "push_value", "expand_macro", "seek_entry", "merge_runs", "apply_filter", "dump_state",
    "lookup_symbol", "write_output", "reset_context",
];

/// Generates a target program and its ground truth. Deterministic for a
/// fixed recipe and seed.
pub fn generate_target(recipe: &CorpusRecipe, rng_seed: u64) -> Result<GeneratedTarget, RecipeError> {
    recipe.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let depth = recipe.call_chain_depth;
    let stem = recipe.stem();
    let mut names: Vec<&str> = NAMES.to_vec();
    names.shuffle(&mut rng);

    let chain: Vec<ChainSite> = if recipe.chain.is_empty() {
        (0..depth)
            .map(|i| ChainSite {
                function: if i == 0 { "main".into() } else { names[i - 1].to_string() },
                file: if i == 0 { format!("{stem}.c") } else { format!("{stem}_lib.c") },
                line: 40 + 60 * i as u32 + rng.random_range(0..20),
            })
            .collect()
    } else {
        recipe.chain.clone()
    };
    let decoys: Vec<String> = (0..recipe.decoy_functions)
        .map(|k| names.get(depth - 1 + k).map_or_else(|| format!("aux_{k}"), |n| format!("{n}_aux")))
        .collect();
    let decoy_file = format!("{stem}_util.c");

    let guards = &recipe.guard_bytes;
    let seed_len = SEED_LEN.max(guards.len() + 28);
    // only guard checks read the guard prefix; a gap keeps multi-byte
    // mutations of data bytes from reaching it
    let data = guards.len() as u32 + 4..guards.len() as u32 + 20;
    let mut text = format!("program {} mem={MEM_CELLS}\n", recipe.name);
    let mut files: Vec<&str> = chain.iter().map(|c| c.file.as_str()).collect();
    if !decoys.is_empty() {
        files.push(&decoy_file);
    }
    files.sort_unstable();
    files.dedup();
    for f in &files {
        text += &format!("file {f}\n");
    }

    for (i, site) in chain.iter().enumerate() {
        let leaf = i + 1 == depth;
        let own_guards: Vec<usize> = if leaf { (i..guards.len()).collect() } else { (i..guards.len().min(i + 1)).collect() };
        let prologue = rng.random_range(1..=2);
        let calls = if i == 0 { decoys.len() } else { 0 };
        // guarded motif + fillers + decoy calls + guard lines precede the site line
        let before = 1 + prologue + calls + own_guards.len();
        let start = site.line.checked_sub(before as u32).filter(|&s| s > 0).ok_or(RecipeError::Layout(site.line))?;
        let mut w = FnWriter::new(&site.function, &site.file, start);
        w.inputs = data.clone();
        guarded_motif(&mut w, &mut rng);
        for _ in 0..prologue {
            filler(&mut w, &mut rng);
        }
        for d in &decoys[..calls] {
            w.ins(&format!("CALL {d}"));
            w.line += 1;
        }
        let out = w.fresh();
        for &g in &own_guards {
            let pass = w.fresh();
            w.ins(&format!("LOADIN r0, {g}"));
            w.ins(&format!("SUB r0, {}", guards[g]));
            w.ins(&format!("BR r0, {out}, {pass}"));
            w.block(&pass);
            w.line += 1;
        }
        debug_assert_eq!(w.line, site.line);
        if leaf {
            motif(&mut w, &mut rng);
            match recipe.bug_kind {
                FaultKind::Bug => w.ins("BUG 1"),
                FaultKind::DivZero => {
                    w.ins("CONST r12, 0");
                    w.ins("DIV r13, r12");
                    w.ins(&format!("JMP {out}"));
                }
                FaultKind::Oob => {
                    w.ins(&format!("MEMR r13, {}", MEM_CELLS * 64));
                    w.ins(&format!("JMP {out}"));
                }
                FaultKind::Hang => {
                    let spin = w.fresh();
                    w.ins(&format!("JMP {spin}"));
                    w.block(&spin);
                    w.ins(&format!("JMP {spin}"));
                }
            }
        } else {
            w.ins(&format!("CALL {}", chain[i + 1].function));
            w.ins(&format!("JMP {out}"));
        }
        w.line += 1;
        w.block(&out);
        if !leaf && rng.random_bool(0.5) {
            filler(&mut w, &mut rng);
        }
        w.ins(if i == 0 { "HALT" } else { "RET" });
        text += "\n";
        text += &w.finish();
    }

    for (k, d) in decoys.iter().enumerate() {
        let mut w = FnWriter::new(d, &decoy_file, 2000 + 80 * k as u32);
        w.inputs = data.clone();
        guarded_motif(&mut w, &mut rng);
        filler(&mut w, &mut rng);
        for _ in 0..DECOY_LOOPS.div_ceil(decoys.len()) {
            let start = rng.random_range(data.clone());
            byte_switch_loop(&mut w, start, 1, 64);
        }
        w.ins("RET");
        text += "\n";
        text += &w.finish();
    }

    let leaf = chain.last().expect("depth >= 1");
    let mut labels: BTreeMap<String, bool> = chain.iter().map(|c| (c.function.clone(), false)).collect();
    labels.extend(decoys.iter().map(|d| (d.clone(), false)));
    labels.insert(leaf.function.clone(), true);
    let mut witness = vec![0u8; seed_len];
    witness[..guards.len()].copy_from_slice(guards);
    Ok(GeneratedTarget {
        text,
        ground_truth: GroundTruth {
            program: recipe.name.clone(),
            bugs: vec![BugEntry { file: leaf.file.clone(), line: leaf.line, kind: recipe.bug_kind }],
            labels,
        },
        witness,
        seed: vec![0u8; seed_len],
    })
}

/// A bundled benchmark target.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub recipe: CorpusRecipe,
    pub rng_seed: u64,
    pub target: GeneratedTarget,
    /// Predicted locations shipped alongside the fixture, if any.
    pub predicted_targets: Option<TargetSpec>,
}

impl Fixture {
    pub fn name(&self) -> &str {
        &self.recipe.name
    }
}

fn site(function: &str, file: &str, line: u32) -> ChainSite {
    ChainSite { function: function.into(), file: file.into(), line }
}

/// Ten-function chain with an "FWS" header and a version byte.
pub fn listaction_recipe() -> CorpusRecipe {
    CorpusRecipe {
        chain: vec![
            site("main", "main.c", 354),
            site("readMovie", "main.c", 281),
            site("outputBlock", "outputtxt.c", 2933),
            site("outputSWF_DOACTION", "outputtxt.c", 1620),
            site("decompile5Action", "decompile.c", 3517),
            site("decompileActions", "decompile.c", 3494),
            site("decompileAction", "decompile.c", 3413),
            site("decompileSingleArgBuiltInFunctionCall", "decompile.c", 2994),
            site("newVar_N", "decompile.c", 725),
            site("getString", "decompile.c", 381),
        ],
        ..CorpusRecipe::new("listaction_like", 10, b"FWS\x4a", FaultKind::Bug, 2)
    }
}

pub fn gifsponge_recipe() -> CorpusRecipe {
    CorpusRecipe {
        chain: vec![
            site("main", "gifsponge.c", 76),
            site("EGifSpew", "egif_lib.c", 1162),
            site("EGifPutImageDesc", "egif_lib.c", 640),
            site("EGifPutLine", "egif_lib.c", 771),
        ],
        ..CorpusRecipe::new("gifsponge_like", 4, b"GIF", FaultKind::Oob, 4)
    }
}

/// The eight bundled fixtures, in table order.
pub fn bundled_suite() -> Vec<Fixture> {
    let recipes = [
        (listaction_recipe(), 1),
        (CorpusRecipe::new("listswf_like", 6, b"SW\x09", FaultKind::Oob, 5), 2),
        (CorpusRecipe::new("swftocxx_like", 4, b"CX", FaultKind::DivZero, 4), 3),
        (CorpusRecipe::new("swftoperl_like", 5, b"PL\x05", FaultKind::Bug, 5), 4),
        (CorpusRecipe::new("swftophp_like", 7, b"PHP\x07", FaultKind::Hang, 5), 5),
        (CorpusRecipe::new("swftopython_like", 3, b"PY", FaultKind::Oob, 3), 6),
        (CorpusRecipe::new("swftotcl_like", 8, &[0x10, 0x20, 0x40, 0x80, 0x01, 0xff], FaultKind::DivZero, 4), 7),
        (gifsponge_recipe(), 8),
    ];
    recipes
        .into_iter()
        .map(|(recipe, rng_seed)| {
            let target = generate_target(&recipe, rng_seed).expect("bundled recipes are valid");
            let predicted_targets = (recipe.name == "gifsponge_like").then(|| {
                let entry = |line, score| TargetEntry { file: "egif_lib.c".into(), line, score, origin: Origin::Predicted };
                TargetSpec::new(vec![entry(764, 0.81), entry(802, 0.64)]).expect("valid spec")
            });
            Fixture { recipe, rng_seed, target, predicted_targets }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::{execute, parse_program, Outcome};

    #[test]
    fn depth_one_without_guards_faults_on_any_input() {
        let r = CorpusRecipe::new("t", 1, b"", FaultKind::Bug, 0);
        let g = generate_target(&r, 0).unwrap();
        let p = parse_program(&g.text).unwrap();
        for input in [vec![], vec![7], vec![0xff; 20]] {
            assert_eq!(execute(&p, &input, 10_000).outcome, Outcome::CrashBug(1));
        }
    }

    #[test]
    fn same_seed_same_text() {
        let r = CorpusRecipe::new("t", 5, b"ab", FaultKind::Oob, 2);
        assert_eq!(generate_target(&r, 9).unwrap(), generate_target(&r, 9).unwrap());
        assert_ne!(generate_target(&r, 9).unwrap().text, generate_target(&r, 10).unwrap().text);
    }

    #[test]
    fn recipe_validation() {
        assert_eq!(CorpusRecipe::new("t", 0, b"", FaultKind::Bug, 0).validate(), Err(RecipeError::Depth));
        assert_eq!(CorpusRecipe::new("t", 2, &[1; 65], FaultKind::Bug, 0).validate(), Err(RecipeError::Guards));
        let short = CorpusRecipe { chain: vec![site("main", "a.c", 50)], ..CorpusRecipe::new("t", 2, b"", FaultKind::Bug, 0) };
        assert_eq!(short.validate(), Err(RecipeError::Chain(1, 2)));
    }

    #[test]
    fn leftover_guards_move_into_the_leaf() {
        let r = CorpusRecipe::new("t", 2, b"abcd", FaultKind::DivZero, 1);
        let g = generate_target(&r, 3).unwrap();
        let p = parse_program(&g.text).unwrap();
        assert_eq!(execute(&p, &g.witness, 100_000).outcome, Outcome::CrashDivZero);
        let mut near = g.witness.clone();
        near[3] ^= 1;
        assert_eq!(execute(&p, &near, 100_000).outcome, Outcome::Halt);
    }
}
