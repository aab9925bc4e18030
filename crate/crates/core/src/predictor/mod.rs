//! Attention-based bidirectional LSTM classifier over function tokens.

mod attention;
mod model;
mod token;
mod train;
mod vocab;

pub use attention::{extract_attention_targets, AttendedToken, AttentionReport, DEFAULT_THRESHOLD, DEFAULT_TOP_K};
pub use model::{forward, loss_and_grad, Dims, Forward, ForwardCache, LstmParams, ModelError, ModelParams, Tensor, GATES, MAX_LEN};
pub use token::{split_functions, tokenize_function, Token, TokenSeq, TokenizeError, NUM, STR};
pub use train::{train, Metrics, Model, TrainConfig, TrainError, Trained};
pub use vocab::{Vocab, OOV, PAD};
