use serde::{Deserialize, Serialize};

use crate::hash::Fnv64;
use crate::vm::{ExecResult, FaultKind, Program, StackFrame};

/// Innermost frames that take part in the dedup key.
pub const DEDUP_DEPTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrashSite {
    pub function: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashReport {
    #[serde(with = "hex_key")]
    pub dedup_key: u64,
    pub kind: FaultKind,
    pub site: CrashSite,
    pub trace: Vec<StackFrame>,
    #[serde(with = "hex")]
    pub input: Vec<u8>,
    pub time_found: f64,
    pub execs_found: u64,
}

impl CrashReport {
    /// Key identifying the underlying bug, ignoring the calling context.
    pub fn bug_id(&self) -> (FaultKind, &CrashSite) {
        (self.kind, &self.site)
    }
}

mod hex_key {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{k:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// Hash of the fault kind, faulting block and innermost call frames.
/// Panics if `result` did not fault.
pub fn dedup_crash(program: &Program, result: &ExecResult) -> u64 {
    let kind = result.outcome.fault_kind().expect("dedup of a faulting run");
    let block = result.fault_block.expect("faulting runs record their block");
    dedup_key(kind, program.block_uid(block), &result.call_stack_at_fault)
}

pub(crate) fn dedup_key(kind: FaultKind, block_uid: &str, stack: &[StackFrame]) -> u64 {
    let mut h = Fnv64::default();
    h.field(kind.as_str().as_bytes()).field(block_uid.as_bytes());
    let tail = &stack[stack.len().saturating_sub(DEDUP_DEPTH)..];
    for f in tail {
        h.field(f.function.as_bytes()).field(&f.line.to_le_bytes());
    }
    h.finish()
}
