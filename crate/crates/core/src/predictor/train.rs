use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{AttendedToken, AttentionReport};
use super::model::{forward, loss_and_grad, Dims, ModelError, ModelParams};
use super::vocab::Vocab;
use super::TokenSeq;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("corpus needs both classes in its training split ({positives} positive, {negatives} negative)")]
    SingleClass { positives: usize, negatives: usize },
    #[error("corpus record {0} has no label")]
    Unlabeled(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub rng_seed: u64,
    pub holdout: f64,
    /// Defaults to negatives / positives of the training split.
    pub class_weight_pos: Option<f64>,
    /// Tokens rarer than this in the training split map to OOV.
    pub min_count: usize,
    pub embed: usize,
    pub hidden: usize,
    pub attn: usize,
    pub max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            rng_seed: 0,
            holdout: 0.2,
            class_weight_pos: None,
            min_count: 2,
            embed: 32,
            hidden: 32,
            attn: 32,
            max_len: super::model::MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
}

impl Metrics {
    pub fn from_predictions(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut m = Metrics::default();
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => m.true_pos += 1,
                (true, false) => m.false_pos += 1,
                (false, true) => m.false_neg += 1,
                (false, false) => m.true_neg += 1,
            }
        }
        let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
        m.precision = ratio(m.true_pos, m.false_pos);
        m.recall = ratio(m.true_pos, m.false_neg);
        m.f1 = if m.precision + m.recall == 0.0 { 0.0 } else { 2.0 * m.precision * m.recall / (m.precision + m.recall) };
        m
    }
}

/// Vocabulary plus parameters; the unit stored in a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub vocab: Vocab,
    pub params: ModelParams,
}

const MODEL_FORMAT: &str = "defuzz-bilstm";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: Model,
}

impl Model {
    pub fn report(&self, seq: &TokenSeq, top: usize) -> Result<AttentionReport, ModelError> {
        let len = self.params.dims.max_len;
        let f = forward(&self.params, &self.vocab.encode(seq, len))?;
        let mut top_tokens: Vec<AttendedToken> = seq
            .tokens
            .iter()
            .zip(&f.attention)
            .map(|(t, &alpha)| AttendedToken { token: t.text.clone(), file: t.file.clone(), line: t.line, alpha })
            .collect();
        let attention = top_tokens.iter().map(|t| t.alpha).collect();
        top_tokens.sort_by(|a, b| b.alpha.total_cmp(&a.alpha));
        top_tokens.truncate(top);
        Ok(AttentionReport { function_name: seq.function_name.clone(), probability: f.probability, attention, top_tokens })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(format!("unsupported model format {} v{}", file.format, file.version));
        }
        let m = file.model;
        if m.params.dims.vocab != m.vocab.len() {
            return Err(format!("vocabulary has {} entries, parameters expect {}", m.vocab.len(), m.params.dims.vocab));
        }
        m.params.validate().map_err(|e| e.to_string())?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| TrainError::File { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let err = |message: String| TrainError::File { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Model::from_json(&text).map_err(err)
    }
}

struct Adam {
    m: ModelParams,
    v: ModelParams,
    step: i32,
}

impl Adam {
    fn new(dims: Dims) -> Self {
        Adam { m: ModelParams::zeros(dims), v: ModelParams::zeros(dims), step: 0 }
    }

    fn update(&mut self, params: &mut ModelParams, grads: &ModelParams, c: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        let grads = grads.tensors();
        for (((p, m), v), (_, g)) in params.tensors_mut().into_iter().zip(self.m.tensors_mut()).zip(self.v.tensors_mut()).zip(grads) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = c.beta1 * m.data[i] + (1.0 - c.beta1) * gi;
                v.data[i] = c.beta2 * v.data[i] + (1.0 - c.beta2) * gi * gi;
                p.data[i] -= c.lr * (m.data[i] / bc1) / ((v.data[i] / bc2).sqrt() + c.eps);
            }
        }
    }
}

/// Stratified split: the first `holdout` fraction of each shuffled class is
/// held out.
fn split(corpus: &[TokenSeq], holdout: f64, rng: &mut ChaCha8Rng) -> Result<(Vec<usize>, Vec<usize>), TrainError> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [true, false] {
        let mut idx = Vec::new();
        for (i, s) in corpus.iter().enumerate() {
            match s.label {
                None => return Err(TrainError::Unlabeled(s.function_name.clone())),
                Some(l) if l == class => idx.push(i),
                Some(_) => {}
            }
        }
        idx.shuffle(rng);
        let k = (idx.len() as f64 * holdout).round() as usize;
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    Ok((train, test))
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// Scores on the held-out split.
    pub metrics: Metrics,
    /// Corpus indices of the held-out split.
    pub holdout: Vec<usize>,
}

pub fn train(corpus: &[TokenSeq], config: &TrainConfig) -> Result<Trained, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let (mut train_idx, test_idx) = split(corpus, config.holdout, &mut rng)?;
    let positives = train_idx.iter().filter(|&&i| corpus[i].label == Some(true)).count();
    let negatives = train_idx.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(TrainError::SingleClass { positives, negatives });
    }
    let w_pos = config.class_weight_pos.unwrap_or(negatives as f64 / positives as f64);

    let vocab = Vocab::build(train_idx.iter().map(|&i| &corpus[i]), config.min_count);
    let dims = Dims { vocab: vocab.len(), embed: config.embed, hidden: config.hidden, attn: config.attn, max_len: config.max_len };
    let mut params = ModelParams::init(dims, &mut rng);
    let encoded: Vec<(Vec<u32>, bool)> =
        corpus.iter().map(|s| (vocab.encode(s, config.max_len), s.label == Some(true))).collect();

    let mut adam = Adam::new(dims);
    for _ in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        for chunk in train_idx.chunks(config.batch.max(1)) {
            let batch: Vec<(Vec<u32>, bool)> = chunk.iter().map(|&i| encoded[i].clone()).collect();
            let (_, grads) = loss_and_grad(&params, &batch, w_pos)?;
            adam.update(&mut params, &grads, config);
        }
    }
    let model = Model { vocab, params };
    let mut pairs = Vec::with_capacity(test_idx.len());
    for &i in &test_idx {
        let p = forward(&model.params, &encoded[i].0)?.probability;
        pairs.push((p >= 0.5, encoded[i].1));
    }
    Ok(Trained { model, metrics: Metrics::from_predictions(pairs), holdout: test_idx })
}
