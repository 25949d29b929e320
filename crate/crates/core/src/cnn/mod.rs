//! Shallow convolutional text classifier: embedding lookup, parallel
//! convolution modules with max-over-time pooling, and a softmax head.
//!
//! The network's internal document representation — the concatenation of all
//! max-pooled filter activations — is the quantity the reduction stage later
//! approximates from n-gram presence features, so it is exposed directly
//! alongside class probabilities.
//!
//! Parameters live in one flat vector addressed through a layout of ranges;
//! that keeps the Adam update, regularization, and finite-difference checks
//! free of per-tensor bookkeeping.

mod train;

pub use train::{loss_and_grad, train, write_training_log, EpochLog, Example};

use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{load_json, save_json, token_list_digest, Provenance};
use crate::corpus::Vocabulary;
use crate::linalg::{argmax, Matrix};

#[derive(Debug, Error)]
pub enum CnnError {
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("empty validation set")]
    EmptyValidationSet,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("model artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

/// Network and optimizer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_module: usize,
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for CnnConfig {
    /// Desk-scale defaults; the optimizer settings follow the usual
    /// text-CNN recipe (learning rate 1e-3, minibatch 32, patience 10).
    fn default() -> Self {
        CnnConfig {
            embed_dim: 16,
            filter_widths: vec![3, 4, 5],
            filters_per_module: 8,
            l2_coeff: 1e-3,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<(), CnnError> {
        if self.embed_dim == 0 {
            return Err(CnnError::InvalidConfig("embed_dim must be positive".into()));
        }
        if self.filters_per_module == 0 {
            return Err(CnnError::InvalidConfig("filters_per_module must be positive".into()));
        }
        if self.filter_widths.is_empty() || self.filter_widths.contains(&0) {
            return Err(CnnError::InvalidConfig("filter widths must be positive".into()));
        }
        if self.patience == 0 {
            return Err(CnnError::InvalidConfig("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CnnError::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.l2_coeff >= 0.0) || !(self.learning_rate >= 0.0) {
            return Err(CnnError::InvalidConfig("coefficients must be non-negative".into()));
        }
        Ok(())
    }

    /// Representation dimension: one output per filter per module.
    pub fn rep_dim(&self) -> usize {
        self.filter_widths.len() * self.filters_per_module
    }
}

/// Addresses of each tensor inside the flat parameter vector.
#[derive(Debug, Clone)]
struct Layout {
    emb: Range<usize>,
    conv_w: Vec<Range<usize>>,
    conv_b: Vec<Range<usize>>,
    head_w: Range<usize>,
    head_b: Range<usize>,
    total: usize,
}

impl Layout {
    fn new(vocab_size: usize, config: &CnnConfig, num_classes: usize) -> Layout {
        let e = config.embed_dim;
        let f = config.filters_per_module;
        let mut cursor = 0usize;
        let mut take = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        let emb = take(vocab_size * e);
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        for &m in &config.filter_widths {
            conv_w.push(take(m * e * f));
            conv_b.push(take(f));
        }
        let head_w = take(config.rep_dim() * num_classes);
        let head_b = take(num_classes);
        Layout { emb, conv_w, conv_b, head_w, head_b, total: cursor }
    }

    /// Ranges subject to l2 regularization: all weights, no biases. The pad
    /// embedding row is outside the parameter vector entirely.
    fn weight_ranges(&self) -> Vec<Range<usize>> {
        let mut r = vec![self.emb.clone()];
        r.extend(self.conv_w.iter().cloned());
        r.push(self.head_w.clone());
        r
    }
}

/// The classifier: flat parameters plus the layout to address them.
#[derive(Debug, Clone)]
pub struct CnnModel {
    config: CnnConfig,
    vocab_size: usize,
    num_classes: usize,
    params: Vec<f64>,
    layout: Layout,
    zero_row: Vec<f64>,
}

impl CnnModel {
    /// Fresh randomly initialized model. Embeddings start uniform in
    /// ±0.05; convolution and head weights use a uniform fan-in scheme;
    /// biases start at zero.
    pub fn new(
        vocab_size: usize,
        num_classes: usize,
        config: &CnnConfig,
    ) -> Result<Self, CnnError> {
        config.validate()?;
        if vocab_size == 0 {
            return Err(CnnError::InvalidConfig("vocabulary is empty".into()));
        }
        if num_classes < 2 {
            return Err(CnnError::InvalidConfig("need at least 2 classes".into()));
        }
        let layout = Layout::new(vocab_size, config, num_classes);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        for idx in layout.emb.clone() {
            params[idx] = rng.random_range(-0.05..0.05);
        }
        for (j, range) in layout.conv_w.iter().enumerate() {
            let fan_in = (config.filter_widths[j] * config.embed_dim) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for idx in range.clone() {
                params[idx] = rng.random_range(-limit..limit);
            }
        }
        let limit = (6.0 / config.rep_dim() as f64).sqrt();
        for idx in layout.head_w.clone() {
            params[idx] = rng.random_range(-limit..limit);
        }
        Ok(CnnModel {
            config: config.clone(),
            vocab_size,
            num_classes,
            params,
            layout,
            zero_row: vec![0.0; config.embed_dim],
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rep_dim(&self) -> usize {
        self.config.rep_dim()
    }

    /// Reserved padding id: one past the last vocabulary id. Its embedding
    /// row is identically zero and carries no parameters.
    pub fn pad_id(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn embedding_row(&self, id: usize) -> &[f64] {
        if id == self.vocab_size {
            return &self.zero_row;
        }
        let e = self.config.embed_dim;
        let start = self.layout.emb.start + id * e;
        &self.params[start..start + e]
    }

    fn conv_w(&self, module: usize) -> &[f64] {
        &self.params[self.layout.conv_w[module].clone()]
    }

    fn conv_b(&self, module: usize) -> &[f64] {
        &self.params[self.layout.conv_b[module].clone()]
    }

    fn head_w(&self) -> &[f64] {
        &self.params[self.layout.head_w.clone()]
    }

    fn head_b(&self) -> &[f64] {
        &self.params[self.layout.head_b.clone()]
    }

    pub(crate) fn layout_weight_ranges(&self) -> Vec<Range<usize>> {
        self.layout.weight_ranges()
    }

    pub(crate) fn layout_ranges(
        &self,
    ) -> (Range<usize>, &[Range<usize>], &[Range<usize>], Range<usize>, Range<usize>) {
        (
            self.layout.emb.clone(),
            &self.layout.conv_w,
            &self.layout.conv_b,
            self.layout.head_w.clone(),
            self.layout.head_b.clone(),
        )
    }

    /// Right-pads with the reserved pad id until the widest filter fits.
    pub fn padded(&self, ids: &[usize]) -> Vec<usize> {
        let need = self.config.filter_widths.iter().copied().max().unwrap_or(1);
        let mut out = ids.to_vec();
        while out.len() < need {
            out.push(self.pad_id());
        }
        out
    }

    /// Token-id sequence to its embedding matrix, one row per token.
    pub fn embed(&self, ids: &[usize]) -> Matrix {
        let e = self.config.embed_dim;
        let mut h = Matrix::zeros(ids.len(), e);
        for (i, &id) in ids.iter().enumerate() {
            debug_assert!(id <= self.vocab_size, "token id out of range");
            h.row_mut(i).copy_from_slice(self.embedding_row(id));
        }
        h
    }

    /// Concatenated max-pooled filter activations for a document.
    pub fn representation(&self, ids: &[usize]) -> Vec<f64> {
        let padded = self.padded(ids);
        let h = self.embed(&padded);
        let mut rep = Vec::with_capacity(self.rep_dim());
        for (j, &width) in self.config.filter_widths.iter().enumerate() {
            rep.extend(conv_module_forward(&h, self.conv_w(j), width, self.conv_b(j)));
        }
        rep
    }

    fn logits(&self, rep: &[f64]) -> Vec<f64> {
        let c = self.num_classes;
        let w = self.head_w();
        let mut logits = self.head_b().to_vec();
        for (d, &r) in rep.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            for (k, logit) in logits.iter_mut().enumerate() {
                *logit += r * w[d * c + k];
            }
        }
        logits
    }

    /// Class probabilities via a numerically stable softmax.
    pub fn predict_proba(&self, ids: &[usize]) -> Vec<f64> {
        let rep = self.representation(ids);
        softmax(&self.logits(&rep))
    }

    /// Most probable class; ties resolve to the lowest class id.
    pub fn predict_label(&self, ids: &[usize]) -> usize {
        argmax(&self.predict_proba(ids))
    }
}

/// One convolution module: slide `F` filters of the given width over the
/// embedded document, apply ReLU, and max-pool over positions.
pub fn conv_module_forward(h: &Matrix, weights: &[f64], width: usize, bias: &[f64]) -> Vec<f64> {
    let f_count = bias.len();
    let e = h.cols();
    assert_eq!(weights.len(), width * e * f_count, "weight tensor shape mismatch");
    assert!(h.rows() >= width, "document shorter than filter width; pad first");
    let mut out = vec![0.0; f_count];
    for (f, o) in out.iter_mut().enumerate() {
        let mut best = f64::NEG_INFINITY;
        for i in 0..=h.rows() - width {
            let mut z = bias[f];
            for m in 0..width {
                let row = h.row(i + m);
                for (n, &hv) in row.iter().enumerate() {
                    z += hv * weights[(m * e + n) * f_count + f];
                }
            }
            if z > best {
                best = z;
            }
        }
        *o = best.max(0.0);
    }
    out
}

/// How far a document's pooled maxima sit from the nearest kink of the loss
/// surface: the minimum over filters of (a) the gap between the best and
/// second-best window score among windows with distinct token content, and
/// (b) the distance of the best score from the ReLU threshold. Finite
/// difference checks are only meaningful where the objective is
/// differentiable, so they skip instances whose margin is small. Ties between
/// windows holding identical tokens are excluded; they move in lockstep under
/// any parameter change and cannot produce a kink.
pub fn pool_margin(model: &CnnModel, ids: &[usize]) -> f64 {
    let config = &model.config;
    let e = config.embed_dim;
    let f_count = config.filters_per_module;
    let padded = model.padded(ids);
    let h = model.embed(&padded);
    let mut margin = f64::INFINITY;
    for (j, &width) in config.filter_widths.iter().enumerate() {
        let w = model.conv_w(j);
        let b = model.conv_b(j);
        for f in 0..f_count {
            // Best score per distinct window content.
            let mut best_per_content: Vec<(&[usize], f64)> = Vec::new();
            for i in 0..=h.rows() - width {
                let mut z = b[f];
                for m in 0..width {
                    let row = h.row(i + m);
                    for (n, &hv) in row.iter().enumerate() {
                        z += hv * w[(m * e + n) * f_count + f];
                    }
                }
                let content = &padded[i..i + width];
                match best_per_content.iter_mut().find(|(c, _)| *c == content) {
                    Some((_, old)) => *old = old.max(z),
                    None => best_per_content.push((content, z)),
                }
            }
            let mut scores: Vec<f64> = best_per_content.iter().map(|&(_, z)| z).collect();
            scores.sort_by(|a, b| b.total_cmp(a));
            margin = margin.min(scores[0].abs());
            if scores.len() > 1 {
                margin = margin.min(scores[0] - scores[1]);
            }
        }
    }
    margin
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let peak = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&v| v / total).collect()
}

#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    kind: String,
    version: u32,
    provenance: Option<Provenance>,
    config: CnnConfig,
    num_classes: usize,
    vocab: Vec<String>,
    vocab_sha256: String,
    params: Vec<f64>,
}

const MODEL_KIND: &str = "cnn-model";
const MODEL_VERSION: u32 = 1;

/// Writes the model, its vocabulary, and optional provenance as one JSON
/// artifact.
pub fn save_model(
    path: &Path,
    model: &CnnModel,
    vocab: &Vocabulary,
    provenance: Option<Provenance>,
) -> Result<(), CnnError> {
    assert_eq!(vocab.size(), model.vocab_size, "vocabulary does not match model");
    let artifact = ModelArtifact {
        kind: MODEL_KIND.to_string(),
        version: MODEL_VERSION,
        provenance,
        config: model.config.clone(),
        num_classes: model.num_classes,
        vocab: vocab.tokens().to_vec(),
        vocab_sha256: token_list_digest(vocab.tokens()),
        params: model.params.clone(),
    };
    Ok(save_json(path, &artifact)?)
}

pub fn load_model(path: &Path) -> Result<(CnnModel, Vocabulary, Option<Provenance>), CnnError> {
    let artifact: ModelArtifact = load_json(path)?;
    if artifact.kind != MODEL_KIND || artifact.version != MODEL_VERSION {
        return Err(CnnError::ArtifactMismatch(format!(
            "expected {MODEL_KIND} v{MODEL_VERSION}, found {} v{}",
            artifact.kind, artifact.version
        )));
    }
    if token_list_digest(&artifact.vocab) != artifact.vocab_sha256 {
        return Err(CnnError::ArtifactMismatch("vocabulary digest mismatch".into()));
    }
    artifact.config.validate()?;
    let vocab = Vocabulary::from_tokens(artifact.vocab)?;
    let layout = Layout::new(vocab.size(), &artifact.config, artifact.num_classes);
    if artifact.params.len() != layout.total {
        return Err(CnnError::ArtifactMismatch(format!(
            "parameter vector has {} entries, layout needs {}",
            artifact.params.len(),
            layout.total
        )));
    }
    if artifact.params.iter().any(|v| !v.is_finite()) {
        return Err(CnnError::ArtifactMismatch("non-finite parameter".into()));
    }
    let zero_row = vec![0.0; artifact.config.embed_dim];
    let model = CnnModel {
        config: artifact.config,
        vocab_size: vocab.size(),
        num_classes: artifact.num_classes,
        params: artifact.params,
        layout,
        zero_row,
    };
    Ok((model, vocab, artifact.provenance))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(e: usize, widths: Vec<usize>, f: usize, seed: u64) -> CnnConfig {
        CnnConfig {
            embed_dim: e,
            filter_widths: widths,
            filters_per_module: f,
            seed,
            ..CnnConfig::default()
        }
    }

    fn zeroed_model(v: usize, c: usize, config: &CnnConfig) -> CnnModel {
        let mut m = CnnModel::new(v, c, config).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        m
    }

    #[test]
    fn embed_looks_up_rows() {
        let config = tiny_config(4, vec![2], 1, 1);
        let model = CnnModel::new(5, 2, &config).unwrap();
        let h = model.embed(&[3, 0, 3]);
        assert_eq!(h.rows(), 3);
        assert_eq!(h.cols(), 4);
        assert_eq!(h.row(0), model.embedding_row(3));
        assert_eq!(h.row(1), model.embedding_row(0));
        assert_eq!(h.row(0), h.row(2), "repeated token must repeat its row");
    }

    #[test]
    fn embed_zero_table_gives_zero_rows() {
        let config = tiny_config(3, vec![2], 1, 2);
        let model = zeroed_model(4, 2, &config);
        let h = model.embed(&[1, 2, 3]);
        assert!(h.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_bias_passes_through_zero_weights() {
        let h = Matrix::zeros(4, 3);
        let out = conv_module_forward(&h, &vec![0.0; 2 * 3 * 2], 2, &[0.5, 0.5]);
        assert_eq!(out, vec![0.5, 0.5]);
    }

    #[test]
    fn conv_negative_bias_is_clamped() {
        let h = Matrix::zeros(4, 3);
        let out = conv_module_forward(&h, &vec![0.0; 2 * 3 * 1], 2, &[-1.0]);
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn conv_maxpools_over_windows() {
        // Windows score 1+2 and 2+3; pooling keeps 5.
        let h = Matrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = conv_module_forward(&h, &[1.0, 1.0], 2, &[0.0]);
        assert_eq!(out, vec![5.0]);
    }

    #[test]
    fn representation_concatenates_in_module_order() {
        let config = tiny_config(2, vec![2, 3], 3, 3);
        let mut model = zeroed_model(4, 2, &config);
        let (_, _, conv_b, _, _) = model.layout_ranges();
        let (b0, b1) = (conv_b[0].clone(), conv_b[1].clone());
        model.params_mut()[b0].copy_from_slice(&[1.0, 2.0, 3.0]);
        model.params_mut()[b1].copy_from_slice(&[4.0, 5.0, 6.0]);
        let rep = model.representation(&[0, 1, 2]);
        assert_eq!(rep, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn representation_is_nonnegative() {
        let config = tiny_config(4, vec![2, 3], 2, 4);
        let model = CnnModel::new(6, 3, &config).unwrap();
        for ids in [vec![0], vec![1, 2, 3, 4, 5], vec![5, 5, 5]] {
            let rep = model.representation(&ids);
            assert_eq!(rep.len(), model.rep_dim());
            assert!(rep.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn representation_all_negative_biases_is_zero() {
        let config = tiny_config(2, vec![2], 2, 5);
        let mut model = zeroed_model(3, 2, &config);
        let (_, _, conv_b, _, _) = model.layout_ranges();
        let b = conv_b[0].clone();
        model.params_mut()[b].copy_from_slice(&[-1.0, -2.0]);
        assert_eq!(model.representation(&[0, 1, 2]), vec![0.0, 0.0]);
    }

    #[test]
    fn low_scoring_prefix_does_not_move_the_pool() {
        // One filter of width 1 reading a 1-d embedding: token 1 embeds to a
        // large value, token 2 to a small one. Prepending small tokens
        // cannot beat the existing maximum.
        let config = tiny_config(1, vec![1], 1, 6);
        let mut model = zeroed_model(3, 2, &config);
        let (emb, conv_w, _, _, _) = model.layout_ranges();
        let w = conv_w[0].clone();
        model.params_mut()[emb.start + 1] = 3.0; // token 1
        model.params_mut()[emb.start + 2] = 0.1; // token 2
        model.params_mut()[w.start] = 2.0;
        let lone = model.representation(&[1]);
        let prefixed = model.representation(&[2, 2, 1]);
        assert_eq!(lone, prefixed);
        assert_eq!(lone, vec![6.0]);
    }

    #[test]
    fn short_documents_are_padded() {
        let config = tiny_config(2, vec![4], 2, 7);
        let model = CnnModel::new(3, 2, &config).unwrap();
        // A one-token document against width-4 filters must still produce a
        // finite representation.
        let rep = model.representation(&[1]);
        assert_eq!(rep.len(), 2);
        assert!(rep.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn uniform_probabilities_from_zero_head() {
        let config = tiny_config(2, vec![2], 2, 8);
        let model = zeroed_model(3, 4, &config);
        let probs = model.predict_proba(&[0, 1]);
        for p in probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn probabilities_ignore_logit_shifts() {
        let config = tiny_config(2, vec![2], 2, 9);
        let mut model = zeroed_model(3, 3, &config);
        let (_, _, _, _, head_b) = model.layout_ranges();
        let hb = head_b.clone();
        model.params_mut()[hb.clone()].copy_from_slice(&[0.3, -0.2, 1.1]);
        let before = model.predict_proba(&[0, 1]);
        for idx in hb {
            model.params_mut()[idx] += 17.0;
        }
        let after = model.predict_proba(&[0, 1]);
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let config = tiny_config(2, vec![2], 2, 10);
        let mut model = zeroed_model(3, 2, &config);
        let (_, _, _, _, head_b) = model.layout_ranges();
        let hb = head_b.clone();
        model.params_mut()[hb].copy_from_slice(&[0.0, 3.0f64.ln()]);
        let probs = model.predict_proba(&[0, 1]);
        assert!((probs[0] - 0.25).abs() < 1e-12);
        assert!((probs[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn probabilities_form_a_distribution() {
        let config = tiny_config(3, vec![2, 3], 2, 11);
        let model = CnnModel::new(6, 4, &config).unwrap();
        let probs = model.predict_proba(&[0, 2, 4, 5]);
        assert!(probs.iter().all(|&p| p >= 0.0));
        assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn model_artifact_roundtrip() {
        use crate::corpus::{build_vocab, Document};
        let docs = vec![Document {
            doc_id: 0,
            tokens: vec!["alpha".into(), "beta".into(), "gamma".into()],
            label: 0,
        }];
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = tiny_config(3, vec![2], 2, 12);
        let model = CnnModel::new(vocab.size(), 2, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_model(&path, &model, &vocab, None).unwrap();
        let (back, vocab_back, prov) = load_model(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(vocab_back.tokens(), vocab.tokens());
        assert!(prov.is_none());
        let ids = vocab.encode(&["alpha".into(), "gamma".into()]);
        assert_eq!(model.predict_proba(&ids), back.predict_proba(&ids));
    }

    #[test]
    fn load_rejects_foreign_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.json");
        save_json(&path, &serde_json::json!({"kind": "corpus", "version": 1})).unwrap();
        assert!(load_model(&path).is_err());
    }
}
