use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distance::{Origin, TargetEntry, TargetSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendedToken {
    pub token: String,
    pub file: String,
    pub line: u32,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub function_name: String,
    pub probability: f64,
    /// Weight of each token the model saw, in sequence order. Tokens past
    /// the model length are not listed.
    #[serde(default)]
    pub attention: Vec<f64>,
    /// Highest-weight tokens, descending.
    pub top_tokens: Vec<AttendedToken>,
}

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Per line, the summed weight of the top `k` tokens of every report at or
/// above `threshold`; lines shared by several reports keep the largest sum.
pub fn extract_attention_targets(reports: &[AttentionReport], k: usize, threshold: f64) -> TargetSpec {
    let mut best: BTreeMap<(String, u32), f64> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.probability >= threshold) {
        let mut top: Vec<&AttendedToken> = r.top_tokens.iter().collect();
        top.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
        let mut lines: BTreeMap<(String, u32), f64> = BTreeMap::new();
        for t in top.into_iter().take(k).filter(|t| t.line > 0) {
            *lines.entry((t.file.clone(), t.line)).or_default() += t.alpha;
        }
        for (key, score) in lines {
            let e = best.entry(key).or_insert(score);
            *e = e.max(score);
        }
    }
    let entries = best
        .into_iter()
        .filter(|(_, s)| s.is_finite() && *s >= 0.0)
        .map(|((file, line), score)| TargetEntry { file, line, score, origin: Origin::Predicted })
        .collect();
    TargetSpec::new(entries).expect("keys are unique and scores checked")
}
