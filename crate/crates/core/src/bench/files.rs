//! The on-disk fixture bundle: program text plus a JSON sidecar per fixture
//! and the predictor training corpus.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{bundled_suite, generate_predictor_corpus, listaction_recipe, write_corpus_jsonl, CorpusRecipe, Fixture, GroundTruth};
use crate::distance::TargetSpec;

pub const CORPUS_POSITIVES: usize = 200;
pub const CORPUS_SEED: u64 = 11;
pub const CORPUS_FILE: &str = "predictor_corpus.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub recipe: CorpusRecipe,
    pub rng_seed: u64,
    pub ground_truth: GroundTruth,
    #[serde(with = "hex")]
    pub seed: Vec<u8>,
    #[serde(with = "hex")]
    pub witness: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_targets: Option<TargetSpec>,
}

impl Sidecar {
    pub fn of(f: &Fixture) -> Self {
        Sidecar {
            recipe: f.recipe.clone(),
            rng_seed: f.rng_seed,
            ground_truth: f.target.ground_truth.clone(),
            seed: f.target.seed.clone(),
            witness: f.target.witness.clone(),
            predicted_targets: f.predicted_targets.clone(),
        }
    }
}

pub fn program_file(name: &str) -> String {
    format!("{name}.mt")
}

pub fn sidecar_file(name: &str) -> String {
    format!("{name}.truth.json")
}

/// Everything the bundle holds, as (file name, contents).
pub fn bundle_contents() -> Vec<(String, String)> {
    let mut out = Vec::new();
    for f in bundled_suite() {
        out.push((program_file(f.name()), f.target.text.clone()));
        let json = serde_json::to_string_pretty(&Sidecar::of(&f)).expect("sidecar serializes");
        out.push((sidecar_file(f.name()), json + "\n"));
    }
    let corpus = generate_predictor_corpus(&listaction_recipe(), CORPUS_POSITIVES, CORPUS_SEED).expect("valid size");
    out.push((CORPUS_FILE.to_string(), write_corpus_jsonl(&corpus)));
    out
}

pub fn write_bundle(dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    bundle_contents()
        .into_iter()
        .map(|(name, text)| {
            let path = dir.join(name);
            fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}
