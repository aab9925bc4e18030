//! Directed greybox fuzzing guided by an attention-based vulnerability
//! predictor, over a small bytecode target language.

pub mod hash;
pub mod bench;
pub mod cli;
pub mod distance;
pub mod fuzz;
pub mod predictor;
pub mod vm;
