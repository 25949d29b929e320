//! Training for the convolutional classifier: manual backpropagation through
//! the softmax head, max-pooling, convolutions, and embedding lookups, with
//! Adam updates and validation-based early stopping.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, softmax, CnnConfig, CnnError, CnnModel};
use crate::corpus::{Document, Vocabulary};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Decouples the epoch-shuffle stream from parameter initialization, which
/// consumes the raw config seed.
const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

/// An encoded example: token ids (unpadded) and label.
pub type Example = (Vec<usize>, usize);

struct Trace {
    /// Padded token ids the forward pass actually saw.
    ids: Vec<usize>,
    rep: Vec<f64>,
    /// Winning window start per representation coordinate, or -1 when the
    /// pooled pre-activation was non-positive (ReLU gate shut).
    winners: Vec<i64>,
}

fn forward_trace(model: &CnnModel, ids: &[usize]) -> Trace {
    let config = model.config();
    let e = config.embed_dim;
    let f_count = config.filters_per_module;
    let padded = model.padded(ids);
    let h = model.embed(&padded);
    let mut rep = vec![0.0; model.rep_dim()];
    let mut winners = vec![-1i64; model.rep_dim()];
    for (j, &width) in config.filter_widths.iter().enumerate() {
        let w = model.conv_w(j);
        let b = model.conv_b(j);
        for f in 0..f_count {
            let mut best_z = f64::NEG_INFINITY;
            let mut best_i = 0usize;
            for i in 0..=h.rows() - width {
                let mut z = b[f];
                for m in 0..width {
                    let row = h.row(i + m);
                    for (n, &hv) in row.iter().enumerate() {
                        z += hv * w[(m * e + n) * f_count + f];
                    }
                }
                if z > best_z {
                    best_z = z;
                    best_i = i;
                }
            }
            let d = j * f_count + f;
            if best_z > 0.0 {
                rep[d] = best_z;
                winners[d] = best_i as i64;
            }
        }
    }
    Trace { ids: padded, rep, winners }
}

/// Batch objective — mean cross-entropy plus l2 on all weights — and its
/// gradient with respect to every parameter.
pub fn loss_and_grad(model: &CnnModel, batch: &[Example]) -> (f64, Vec<f64>) {
    assert!(!batch.is_empty(), "empty batch");
    let config = model.config();
    let c = model.num_classes();
    let e = config.embed_dim;
    let f_count = config.filters_per_module;
    let inv_b = 1.0 / batch.len() as f64;
    let (emb, conv_w, conv_b, head_w, head_b) = model.layout_ranges();
    let conv_w: Vec<_> = conv_w.to_vec();
    let conv_b: Vec<_> = conv_b.to_vec();

    let mut loss = 0.0;
    let mut grad = vec![0.0; model.params().len()];
    for (ids, label) in batch {
        debug_assert!(*label < c);
        let trace = forward_trace(model, ids);
        let logits = model.logits(&trace.rep);
        let probs = softmax(&logits);
        loss -= probs[*label].max(1e-300).ln() * inv_b;

        let mut d_logits = probs;
        d_logits[*label] -= 1.0;
        d_logits.iter_mut().for_each(|v| *v *= inv_b);

        let hw = model.head_w();
        let mut d_rep = vec![0.0; trace.rep.len()];
        for (d, &r) in trace.rep.iter().enumerate() {
            for (k, &dl) in d_logits.iter().enumerate() {
                grad[head_w.start + d * c + k] += r * dl;
                d_rep[d] += hw[d * c + k] * dl;
            }
        }
        for (k, &dl) in d_logits.iter().enumerate() {
            grad[head_b.start + k] += dl;
        }

        for (j, &width) in config.filter_widths.iter().enumerate() {
            let w = model.conv_w(j);
            for f in 0..f_count {
                let d = j * f_count + f;
                if trace.winners[d] < 0 {
                    continue;
                }
                let g = d_rep[d];
                if g == 0.0 {
                    continue;
                }
                grad[conv_b[j].start + f] += g;
                let win = trace.winners[d] as usize;
                for m in 0..width {
                    let id = trace.ids[win + m];
                    if id == model.pad_id() {
                        continue; // zero row: no signal in, no gradient out
                    }
                    let row = model.embedding_row(id);
                    for (n, &hv) in row.iter().enumerate() {
                        let wi = (m * e + n) * f_count + f;
                        grad[conv_w[j].start + wi] += hv * g;
                        grad[emb.start + id * e + n] += w[wi] * g;
                    }
                }
            }
        }
    }

    let l2 = config.l2_coeff;
    if l2 > 0.0 {
        for range in model.layout_weight_ranges() {
            for idx in range {
                let p = model.params()[idx];
                loss += l2 * p * p;
                grad[idx] += 2.0 * l2 * p;
            }
        }
    }
    (loss, grad)
}

fn encode(docs: &[Document], vocab: &Vocabulary, classes: usize) -> Result<Vec<Example>, CnnError> {
    docs.iter()
        .map(|d| {
            if d.label >= classes {
                Err(CnnError::LabelOutOfRange { label: d.label, classes })
            } else {
                Ok((vocab.encode(&d.tokens), d.label))
            }
        })
        .collect()
}

fn eval_accuracy(model: &CnnModel, examples: &[Example]) -> f64 {
    let correct = examples
        .iter()
        .filter(|(ids, label)| argmax(&model.logits(&model.representation(ids))) == *label)
        .count();
    correct as f64 / examples.len() as f64
}

/// Trains a fresh model with Adam, evaluating validation accuracy after each
/// epoch. Returns the parameter snapshot with the highest validation
/// accuracy (earliest epoch on ties) and the per-epoch log. Stops early once
/// `patience` epochs pass without improvement. Deterministic given the
/// config seed.
pub fn train(
    train_docs: &[Document],
    val_docs: &[Document],
    vocab: &Vocabulary,
    num_classes: usize,
    config: &CnnConfig,
) -> Result<(CnnModel, Vec<EpochLog>), CnnError> {
    config.validate()?;
    if train_docs.is_empty() {
        return Err(CnnError::EmptyTrainingSet);
    }
    if val_docs.is_empty() {
        return Err(CnnError::EmptyValidationSet);
    }
    let train_set = encode(train_docs, vocab, num_classes)?;
    let val_set = encode(val_docs, vocab, num_classes)?;

    let mut model = CnnModel::new(vocab.size(), num_classes, config)?;
    let n_params = model.params().len();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
    let mut adam_m = vec![0.0; n_params];
    let mut adam_v = vec![0.0; n_params];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best_params = model.params().to_vec();
    let mut best_accuracy = -1.0f64;
    let mut stale_epochs = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let (loss, grad) = loss_and_grad(&model, &batch);
            epoch_loss += loss;
            batches += 1;
            step += 1;
            let corr1 = 1.0 - ADAM_BETA1.powi(step);
            let corr2 = 1.0 - ADAM_BETA2.powi(step);
            let params = model.params_mut();
            for i in 0..n_params {
                adam_m[i] = ADAM_BETA1 * adam_m[i] + (1.0 - ADAM_BETA1) * grad[i];
                adam_v[i] = ADAM_BETA2 * adam_v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                let m_hat = adam_m[i] / corr1;
                let v_hat = adam_v[i] / corr2;
                params[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        let val_accuracy = eval_accuracy(&model, &val_set);
        log.push(EpochLog { epoch, train_loss: epoch_loss / batches as f64, val_accuracy });
        if val_accuracy > best_accuracy {
            best_accuracy = val_accuracy;
            best_params.copy_from_slice(model.params());
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= config.patience {
                break;
            }
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    Ok((model, log))
}

/// Writes the log as JSONL, one epoch per line.
pub fn write_training_log(path: &Path, log: &[EpochLog]) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for entry in log {
        serde_json::to_writer(&mut out, entry).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;
    use rand::Rng;

    fn keyword_corpus() -> Vec<Document> {
        let texts: [(&[&str], usize); 6] = [
            (&["the", "scan", "shows", "benign", "tissue"], 0),
            (&["benign", "growth", "noted", "today"], 0),
            (&["results", "look", "benign", "overall"], 0),
            (&["the", "scan", "shows", "malignant", "tissue"], 1),
            (&["malignant", "growth", "noted", "today"], 1),
            (&["results", "look", "malignant", "overall"], 1),
        ];
        texts
            .iter()
            .enumerate()
            .map(|(i, (tokens, label))| Document {
                doc_id: i,
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                label: *label,
            })
            .collect()
    }

    /// Builds a random tiny model and batch, resampling until every pooled
    /// maximum sits clear of ties and the ReLU threshold — central
    /// differences are only meaningful where the loss is differentiable.
    fn differentiable_instance(seed: u64) -> (CnnModel, Vec<Example>) {
        for attempt in 0..50 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(attempt * 0x517c_c1b7));
            let vocab_size = rng.random_range(4..=20);
            let widths: Vec<usize> = match rng.random_range(0..3) {
                0 => vec![2],
                1 => vec![1, 3],
                _ => vec![2, 3],
            };
            let config = CnnConfig {
                embed_dim: rng.random_range(1..=4),
                filter_widths: widths,
                filters_per_module: rng.random_range(1..=3),
                seed: rng.random(),
                ..CnnConfig::default()
            };
            let classes = rng.random_range(2..=4);
            let model = CnnModel::new(vocab_size, classes, &config).unwrap();
            let batch: Vec<Example> = (0..3)
                .map(|_| {
                    let len = rng.random_range(1..=8);
                    let ids = (0..len).map(|_| rng.random_range(0..vocab_size)).collect();
                    (ids, rng.random_range(0..classes))
                })
                .collect();
            if batch.iter().all(|(ids, _)| crate::cnn::pool_margin(&model, ids) > 1e-3) {
                return (model, batch);
            }
        }
        panic!("no differentiable instance found for seed {seed}");
    }

    #[test]
    fn gradients_match_central_differences() {
        for round in 0..5u64 {
            let (mut model, batch) = differentiable_instance(100 + round);
            let (_, analytic) = loss_and_grad(&model, &batch);
            let h = 1e-5;
            for i in 0..model.params().len() {
                let orig = model.params()[i];
                model.params_mut()[i] = orig + h;
                let plus = loss_and_grad(&model, &batch).0;
                model.params_mut()[i] = orig - h;
                let minus = loss_and_grad(&model, &batch).0;
                model.params_mut()[i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let rel = (analytic[i] - numeric).abs()
                    / analytic[i].abs().max(numeric.abs()).max(1e-3);
                assert!(
                    rel < 1e-4,
                    "round {round} param {i}: analytic {} vs numeric {numeric}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn learns_a_keyword_separable_corpus() {
        let docs = keyword_corpus();
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = CnnConfig {
            embed_dim: 8,
            filter_widths: vec![3],
            filters_per_module: 4,
            learning_rate: 0.05,
            max_epochs: 100,
            patience: 100,
            seed: 5,
            ..CnnConfig::default()
        };
        let (model, log) = train(&docs, &docs, &vocab, 2, &config).unwrap();
        let examples = encode(&docs, &vocab, 2).unwrap();
        assert_eq!(eval_accuracy(&model, &examples), 1.0, "log tail: {:?}", log.last());
    }

    #[test]
    fn zero_learning_rate_freezes_initialization() {
        let docs = keyword_corpus();
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = CnnConfig {
            embed_dim: 4,
            filter_widths: vec![2],
            filters_per_module: 2,
            learning_rate: 0.0,
            max_epochs: 3,
            patience: 10,
            seed: 6,
            ..CnnConfig::default()
        };
        let (model, _) = train(&docs, &docs, &vocab, 2, &config).unwrap();
        let fresh = CnnModel::new(vocab.size(), 2, &config).unwrap();
        assert_eq!(model.params(), fresh.params());
    }

    #[test]
    fn training_is_deterministic() {
        let docs = keyword_corpus();
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = CnnConfig {
            embed_dim: 6,
            filter_widths: vec![2, 3],
            filters_per_module: 3,
            max_epochs: 8,
            seed: 7,
            ..CnnConfig::default()
        };
        let (m1, log1) = train(&docs, &docs, &vocab, 2, &config).unwrap();
        let (m2, log2) = train(&docs, &docs, &vocab, 2, &config).unwrap();
        assert_eq!(log1, log2);
        assert_eq!(m1.params(), m2.params());
    }

    #[test]
    fn returned_snapshot_has_the_best_validation_accuracy() {
        let docs = keyword_corpus();
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = CnnConfig {
            embed_dim: 8,
            filter_widths: vec![3],
            filters_per_module: 4,
            learning_rate: 0.05,
            max_epochs: 30,
            patience: 5,
            seed: 8,
            ..CnnConfig::default()
        };
        let (model, log) = train(&docs[..4], &docs[4..], &vocab, 2, &config).unwrap();
        assert!(!log.is_empty());
        assert!(log.len() <= 30);
        let val = encode(&docs[4..], &vocab, 2).unwrap();
        let returned = eval_accuracy(&model, &val);
        let best_logged = log.iter().map(|l| l.val_accuracy).fold(f64::MIN, f64::max);
        assert!(
            (returned - best_logged).abs() < 1e-12,
            "returned {returned} vs best logged {best_logged}"
        );
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let docs = keyword_corpus();
        let vocab = build_vocab(&docs, 1).unwrap();
        let config = CnnConfig::default();
        assert!(matches!(
            train(&[], &docs, &vocab, 2, &config),
            Err(CnnError::EmptyTrainingSet)
        ));
        assert!(matches!(
            train(&docs, &[], &vocab, 2, &config),
            Err(CnnError::EmptyValidationSet)
        ));
        let mut bad = docs.clone();
        bad[0].label = 9;
        assert!(matches!(
            train(&bad, &docs, &vocab, 2, &config),
            Err(CnnError::LabelOutOfRange { label: 9, classes: 2 })
        ));
    }

    #[test]
    fn training_log_writes_jsonl() {
        let log = vec![
            EpochLog { epoch: 1, train_loss: 0.9, val_accuracy: 0.5 },
            EpochLog { epoch: 2, train_loss: 0.4, val_accuracy: 0.75 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        write_training_log(&path, &log).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<EpochLog> =
            text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines, log);
    }
}
