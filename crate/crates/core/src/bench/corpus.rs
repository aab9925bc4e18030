//! Labeled function corpus for training the vulnerability predictor.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::snippets::{byte_check, byte_switch_loop, filler, guarded_motif, motif, FnWriter};
use super::{CorpusRecipe, NAMES};
use crate::predictor::{tokenize_function, Token, TokenSeq, MAX_LEN};

/// Negatives per positive.
pub const DEFAULT_IMBALANCE: f64 = 16.5;

const FILES: [&str; 6] = ["decompile.c", "parser.c", "util.c", "stream.c", "codec.c", "table.c"];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("n_positive must be at least 20, got {0}")]
    TooSmall(usize),
    #[error("imbalance ratio must be finite and non-negative")]
    Ratio,
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFunction {
    pub name: String,
    pub file: String,
    pub label: bool,
    pub tokens: Vec<(String, u32)>,
    /// Line holding the planted motif, for positives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motif_line: Option<u32>,
}

impl CorpusFunction {
    pub fn from_seq(seq: &TokenSeq, file: &str, motif_line: Option<u32>) -> Self {
        CorpusFunction {
            name: seq.function_name.clone(),
            file: file.to_string(),
            label: seq.label.unwrap_or(false),
            tokens: seq.tokens.iter().map(|t| (t.text.clone(), t.line)).collect(),
            motif_line,
        }
    }

    pub fn to_seq(&self) -> TokenSeq {
        TokenSeq {
            function_name: self.name.clone(),
            tokens: self
                .tokens
                .iter()
                .map(|(text, line)| Token { text: text.clone(), file: self.file.clone(), line: *line })
                .collect(),
            label: Some(self.label),
        }
    }
}

/// True iff the token stream contains an input read immediately followed by
/// a write through the same register.
pub fn motif_oracle(tokens: &[(String, u32)]) -> bool {
    tokens.windows(6).any(|w| w[0].0 == "LOADIN" && w[2].0 == "," && w[4].0 == "MEMW" && w[5].0 == w[1].0)
}

fn function_text<R: Rng + ?Sized>(name: &str, file: &str, positive: bool, rng: &mut R) -> (String, Option<u32>) {
    let start = rng.random_range(20..4000);
    let mut w = FnWriter::new(name, file, start);
    let statements = rng.random_range(2..=5);
    let guarded = rng.random_range(if positive { 0..=1 } else { 1..=2 });
    let mut kinds: Vec<u8> = std::iter::repeat_n(0, statements).chain(std::iter::repeat_n(1, guarded)).collect();
    if rng.random_bool(0.1) {
        kinds.push(2);
    }
    kinds.extend(std::iter::repeat_n(4, rng.random_range(0..=1)));
    kinds.extend(std::iter::repeat_n(5, rng.random_range(0..=1)));
    if positive {
        kinds.push(3);
    }
    kinds.shuffle(rng);
    let mut motif_line = None;
    for k in kinds {
        match k {
            0 => filler(&mut w, rng),
            1 => guarded_motif(&mut w, rng),
            2 => byte_switch_loop(&mut w, rng.random_range(0..16), rng.random_range(2..8), 4),
            4 => byte_check(&mut w, rng),
            5 => {
                w.ins(&format!("CALL {}", NAMES.choose(rng).expect("non-empty")));
                w.line += 1;
            }
            _ => {
                motif_line = Some(w.line);
                motif(&mut w, rng);
                w.line += 1;
            }
        }
    }
    w.ins(if rng.random_bool(0.1) { "HALT" } else { "RET" });
    (w.finish(), motif_line)
}

/// `n_positive` motif-bearing functions and `round(n_positive * ratio)`
/// functions carrying only the clamped variant, shuffled. Every function fits
/// in `MAX_LEN` tokens so the classifier sees all of it.
pub fn generate_predictor_corpus(
    recipe: &CorpusRecipe,
    n_positive: usize,
    rng_seed: u64,
) -> Result<Vec<CorpusFunction>, CorpusError> {
    if n_positive < 20 {
        return Err(CorpusError::TooSmall(n_positive));
    }
    if !recipe.imbalance_ratio.is_finite() || recipe.imbalance_ratio < 0.0 {
        return Err(CorpusError::Ratio);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n_negative = (n_positive as f64 * recipe.imbalance_ratio).round() as usize;
    let mut labels: Vec<bool> = std::iter::repeat_n(true, n_positive).chain(std::iter::repeat_n(false, n_negative)).collect();
    labels.shuffle(&mut rng);
    let corpus = labels
        .into_iter()
        .enumerate()
        .map(|(i, positive)| {
            let name = format!("{}_{i}", NAMES.choose(&mut rng).expect("non-empty"));
            let file = *FILES.choose(&mut rng).expect("non-empty");
            let (mut seq, motif_line) = loop {
                let (text, motif_line) = function_text(&name, file, positive, &mut rng);
                let seq = tokenize_function(&text, file, 1).expect("generated text tokenizes");
                if seq.tokens.len() <= MAX_LEN {
                    break (seq, motif_line);
                }
            };
            seq.label = Some(positive);
            CorpusFunction::from_seq(&seq, file, motif_line)
        })
        .collect();
    Ok(corpus)
}

pub fn write_corpus_jsonl(corpus: &[CorpusFunction]) -> String {
    corpus.iter().map(|f| serde_json::to_string(f).expect("record serializes") + "\n").collect()
}

/// Parses JSON lines; blank lines are skipped. Errors carry the 1-based line.
pub fn read_corpus_jsonl(text: &str) -> Result<Vec<CorpusFunction>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vm::FaultKind;

    fn recipe() -> CorpusRecipe {
        CorpusRecipe::new("c", 3, b"", FaultKind::Bug, 0)
    }

    #[test]
    fn counts_follow_the_ratio() {
        let c = generate_predictor_corpus(&recipe(), 40, 1).unwrap();
        assert_eq!(c.iter().filter(|f| f.label).count(), 40);
        assert_eq!(c.iter().filter(|f| !f.label).count(), 660);
        assert!(c.iter().all(|f| f.label == f.motif_line.is_some()));
        assert!(c.iter().all(|f| f.tokens.len() <= MAX_LEN));
        assert_eq!(generate_predictor_corpus(&recipe(), 19, 1), Err(CorpusError::TooSmall(19)));
    }

    #[test]
    fn oracle_is_exact_and_lines_match() {
        for f in generate_predictor_corpus(&recipe(), 60, 7).unwrap() {
            assert_eq!(motif_oracle(&f.tokens), f.label, "{}", f.name);
            if let Some(line) = f.motif_line {
                let at = f.tokens.iter().position(|t| t.1 == line && t.0 == "LOADIN").unwrap();
                assert_eq!(f.tokens[at + 4], ("MEMW".to_string(), line));
            }
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let c = generate_predictor_corpus(&recipe(), 20, 2).unwrap();
        let text = write_corpus_jsonl(&c);
        assert_eq!(read_corpus_jsonl(&text).unwrap(), c);
        assert_eq!(read_corpus_jsonl("\n{").unwrap_err().0, 2);
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_predictor_corpus(&recipe(), 20, 3), generate_predictor_corpus(&recipe(), 20, 3));
    }
}
