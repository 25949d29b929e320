//! Cross-validated comparison of the network against its reduced form.
//!
//! Each fold trains the network on its training rows (validation rows drive
//! early stopping), pushes every document through the final model to get
//! representations, fits the presence-to-representation map on training rows
//! only, keeps the top-contributing n-grams, and tunes/fits the kernel
//! classifier over the reduced features. Both models are then scored on the
//! untouched test rows. Every stage records which document rows it consumed,
//! so the absence of test leakage is auditable from the report itself.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{self, CnnConfig, CnnError, CnnModel};
use crate::corpus::{
    generate_synth, read_corpus, read_phrases, stratified_kfold, build_vocab, Document, FoldPlan,
    CorpusError, Vocabulary,
};
use crate::gp::{self, default_scale_grid, median_heuristic, GpError, KernelClassifier, KernelConfig};
use crate::linalg::Matrix;
use crate::ngram::{build_dictionary, presence_vector, NgramError, PresenceVector};
use crate::nnls;
use crate::reduce::{
    contributions, fit_linear_map, presence_matrix, select_top_k, LinearMap, ReduceError,
};

/// Any single pipeline stage's failure, preserving the original error.
#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Network(#[from] CnnError),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Classifier(#[from] GpError),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("accuracy undefined: {0}")]
    InvalidAccuracyInput(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("fold {fold} failed during {stage}: {source}")]
    Fold { fold: usize, stage: &'static str, source: Box<StageError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stage<T, E: Into<StageError>>(
    fold: usize,
    name: &'static str,
    result: Result<T, E>,
) -> Result<T, EvalError> {
    result.map_err(|e| EvalError::Fold { fold, stage: name, source: Box::new(e.into()) })
}

/// Where the documents come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    /// Generate a planted-phrase corpus in memory.
    Synthetic(crate::corpus::SynthSpec),
    /// Load a JSONL corpus from disk; a phrase sidecar, when given, enables
    /// the recovery metric.
    Files { corpus: PathBuf, phrases: Option<PathBuf> },
}

/// How many features survive the reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopK {
    /// Keep exactly this many features.
    Count(usize),
    /// Keep ceil(fraction · dictionary size) features; fraction in (0, 1].
    Fraction(f64),
}

impl TopK {
    /// Resolves to a concrete count once the dictionary size is known.
    pub fn resolve(self, p: usize) -> Result<usize, ReduceError> {
        match self {
            TopK::Count(k) if k >= 1 && k <= p => Ok(k),
            TopK::Count(k) => {
                Err(ReduceError::FeatureCountOutOfRange { requested: k, available: p })
            }
            TopK::Fraction(f) => {
                let k = ((f * p as f64).ceil() as usize).max(1);
                if k > p {
                    return Err(ReduceError::FeatureCountOutOfRange { requested: k, available: p });
                }
                Ok(k)
            }
        }
    }
}

/// Everything a cross-validated run depends on. A run is a pure function of
/// this value: identical configs produce identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus: CorpusSource,
    pub folds: usize,
    /// Minimum token count for the network vocabulary, built per fold on
    /// training rows.
    pub vocab_min_count: usize,
    pub cnn: CnnConfig,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Minimum document frequency for dictionary n-grams.
    pub min_df: usize,
    pub top_k: TopK,
    /// Kernel settings. An empty scale grid means: search the default grid
    /// anchored at the median pairwise distance of the fold's training
    /// features.
    pub kernel: KernelConfig,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.folds < 2 {
            return Err(EvalError::InvalidConfig(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        if self.vocab_min_count == 0 {
            return Err(EvalError::InvalidConfig("vocab_min_count must be positive".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(EvalError::InvalidConfig(format!(
                "bad n-gram range [{}, {}]",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.min_df == 0 {
            return Err(EvalError::InvalidConfig("min_df must be positive".into()));
        }
        match self.top_k {
            TopK::Count(0) => {
                return Err(EvalError::InvalidConfig("top_k count must be positive".into()))
            }
            TopK::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(EvalError::InvalidConfig(format!(
                    "top_k fraction must be in (0, 1], got {f}"
                )))
            }
            _ => {}
        }
        if !(self.kernel.length_scale > 0.0) || !(self.kernel.ridge > 0.0) {
            return Err(EvalError::InvalidConfig("kernel parameters must be positive".into()));
        }
        if self.kernel.scale_grid.iter().any(|&s| !(s > 0.0)) {
            return Err(EvalError::InvalidConfig("kernel scale grid must be positive".into()));
        }
        self.cnn
            .validate()
            .map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Documents each stage consumed, as sorted row indices into the corpus.
/// Test rows may appear only in `test_rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldProvenance {
    pub train_rows: Vec<usize>,
    pub validation_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub dictionary_rows: Vec<usize>,
    pub map_rows: Vec<usize>,
    pub tuning_rows: Vec<usize>,
    pub classifier_rows: Vec<usize>,
}

/// One fold's outcome for both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub cnn_test_accuracy: f64,
    pub reduced_test_accuracy: f64,
    pub active_feature_count: usize,
    pub dictionary_size: usize,
    pub nnls_objective: f64,
    pub kkt_residual: f64,
    pub tuned_length_scale: f64,
    /// Fraction of planted phrases whose length-3-or-longer sub-n-grams made
    /// the selected set. Absent for corpora without phrase ground truth.
    pub phrase_recovery: Option<f64>,
    pub provenance: FoldProvenance,
}

/// Aggregate over all folds, ordered by fold index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config: PipelineConfig,
    pub folds: Vec<FoldReport>,
    pub mean_cnn_accuracy: f64,
    pub std_cnn_accuracy: f64,
    pub mean_reduced_accuracy: f64,
    pub std_reduced_accuracy: f64,
    pub mean_active_features: f64,
    pub mean_nnls_objective: f64,
    pub mean_phrase_recovery: Option<f64>,
}

/// Fraction of positions where the vectors agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::InvalidAccuracyInput(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(EvalError::InvalidAccuracyInput("empty label vectors".into()));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Derives an independent seed per consumer from the master seed
/// (splitmix64 finalizer over the stream index).
fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream 0 plans the folds; stream 1+f seeds fold f's network.
const FOLD_SEED_OFFSET: u64 = 1;

fn resolve_corpus(
    source: &CorpusSource,
) -> Result<(Vec<Document>, Option<Vec<Vec<String>>>), EvalError> {
    match source {
        CorpusSource::Synthetic(spec) => {
            let synth = generate_synth(spec)?;
            let flat: Vec<Vec<String>> = synth.phrases.into_iter().flatten().collect();
            Ok((synth.docs, Some(flat)))
        }
        CorpusSource::Files { corpus, phrases } => {
            let docs = read_corpus(corpus)?;
            let flat = match phrases {
                Some(path) => {
                    Some(read_phrases(path)?.into_iter().flatten().collect())
                }
                None => None,
            };
            Ok((docs, flat))
        }
    }
}

/// Fraction of planted phrases with at least one contiguous sub-n-gram of
/// length ≥ 3 among the selected dictionary entries.
fn phrase_recovery(phrases: &[Vec<String>], map: &LinearMap, selected: &[usize]) -> f64 {
    if phrases.is_empty() {
        return 0.0;
    }
    let kept: std::collections::BTreeSet<&[String]> =
        selected.iter().map(|&i| map.dictionary().ngram(i)).collect();
    let recovered = phrases
        .iter()
        .filter(|phrase| {
            (3..=phrase.len()).any(|n| phrase.windows(n).any(|w| kept.contains(w)))
        })
        .count();
    recovered as f64 / phrases.len() as f64
}

/// The fitted pieces of one fold, for callers that need more than the
/// report: the final network, the full map, and the reduced classifier.
#[derive(Debug, Clone)]
pub struct FoldArtifacts {
    pub model: CnnModel,
    pub vocabulary: Vocabulary,
    pub map: LinearMap,
    pub selected: Vec<usize>,
    pub classifier: KernelClassifier,
}

/// Runs one fold end to end and reports both models' test accuracy.
pub fn run_fold(
    docs: &[Document],
    plan: &FoldPlan,
    fold: usize,
    config: &PipelineConfig,
    phrases: Option<&[Vec<String>]>,
) -> Result<FoldReport, EvalError> {
    run_fold_with_artifacts(docs, plan, fold, config, phrases).map(|(report, _)| report)
}

/// [`run_fold`], also returning what it fitted.
pub fn run_fold_with_artifacts(
    docs: &[Document],
    plan: &FoldPlan,
    fold: usize,
    config: &PipelineConfig,
    phrases: Option<&[Vec<String>]>,
) -> Result<(FoldReport, FoldArtifacts), EvalError> {
    let test = plan.test_indices(fold);
    let val = plan.val_indices(fold).to_vec();
    let train = plan.train_indices(fold);
    let pick = |rows: &[usize]| -> Vec<Document> {
        rows.iter().map(|&i| docs[i].clone()).collect()
    };
    let labels_of = |rows: &[usize]| -> Vec<usize> { rows.iter().map(|&i| docs[i].label).collect() };
    let num_classes = docs.iter().map(|d| d.label).max().unwrap_or(0) + 1;

    let train_docs = pick(&train);
    let val_docs = pick(&val);
    let vocab = stage(fold, "vocabulary", build_vocab(&train_docs, config.vocab_min_count))?;

    let mut cnn_config = config.cnn.clone();
    cnn_config.seed = derive_seed(config.seed, FOLD_SEED_OFFSET + fold as u64);
    let (model, _log) =
        stage(fold, "network-training", cnn::train(&train_docs, &val_docs, &vocab, num_classes, &cnn_config))?;

    // The final model sees every document; only training rows feed the fits.
    let reps_all: Vec<Vec<f64>> =
        docs.iter().map(|d| model.representation(&vocab.encode(&d.tokens))).collect();

    let dictionary = stage(
        fold,
        "dictionary",
        build_dictionary(&train_docs, config.ngram_min, config.ngram_max, config.min_df),
    )?;
    let presence_all: Vec<PresenceVector> =
        docs.iter().map(|d| presence_vector(d, &dictionary)).collect();
    let dictionary = Arc::new(dictionary);
    let dictionary_size = dictionary.len();

    let train_presence: Vec<PresenceVector> =
        train.iter().map(|&i| presence_all[i].clone()).collect();
    let design = stage(fold, "map-fit", presence_matrix(&train_presence))?;
    let rep_rows: Vec<Vec<f64>> = train.iter().map(|&i| reps_all[i].clone()).collect();
    let reps_train = Matrix::from_rows(&rep_rows);
    let map = stage(
        fold,
        "map-fit",
        fit_linear_map(&design, &reps_train, dictionary.clone(), nnls::DEFAULT_TOL),
    )?;

    let k = stage(fold, "feature-selection", config.top_k.resolve(dictionary_size))?;
    let ranking = contributions(&map);
    let selected = stage(fold, "feature-selection", select_top_k(&ranking, k))?;

    let features_of = |rows: &[usize]| -> Matrix {
        let rows: Vec<Vec<f64>> =
            rows.iter().map(|&i| presence_all[i].dense_subset(&selected)).collect();
        Matrix::from_rows(&rows)
    };
    let train_features = features_of(&train);
    let train_labels = labels_of(&train);
    let mut kernel = config.kernel.clone();
    if kernel.scale_grid.is_empty() {
        kernel.scale_grid = default_scale_grid(median_heuristic(&train_features));
    }
    let tuned = stage(
        fold,
        "scale-tuning",
        gp::tune_scale(
            &train_features,
            &train_labels,
            &features_of(&val),
            &labels_of(&val),
            num_classes,
            &kernel,
        ),
    )?;
    kernel.length_scale = tuned;
    let classifier =
        stage(fold, "classifier-fit", gp::fit(&train_features, &train_labels, num_classes, &kernel))?;

    let cnn_predictions: Vec<usize> =
        test.iter().map(|&i| model.predict_label(&vocab.encode(&docs[i].tokens))).collect();
    let cnn_test_accuracy = accuracy(&cnn_predictions, &labels_of(&test))?;
    let reduced_predictions =
        stage(fold, "evaluation", classifier.predict(&features_of(&test)))?;
    let reduced_test_accuracy = accuracy(&reduced_predictions, &labels_of(&test))?;

    let recovery = phrases.map(|ps| phrase_recovery(ps, &map, &selected));
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    let train_sorted = sorted(train.clone());
    let diagnostics = map.diagnostics();
    let report = FoldReport {
        fold,
        cnn_test_accuracy,
        reduced_test_accuracy,
        active_feature_count: k,
        dictionary_size,
        nnls_objective: diagnostics.objective,
        kkt_residual: diagnostics.kkt_residual,
        tuned_length_scale: tuned,
        phrase_recovery: recovery,
        provenance: FoldProvenance {
            train_rows: train_sorted.clone(),
            validation_rows: sorted(val.clone()),
            test_rows: sorted(test),
            dictionary_rows: train_sorted.clone(),
            map_rows: train_sorted.clone(),
            tuning_rows: sorted(val),
            classifier_rows: train_sorted,
        },
    };
    let artifacts =
        FoldArtifacts { model, vocabulary: vocab, map, selected, classifier };
    Ok((report, artifacts))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// The fold assignment a cross-validated run of this config will use.
pub fn plan_folds(labels: &[usize], config: &PipelineConfig) -> Result<FoldPlan, EvalError> {
    Ok(stratified_kfold(labels, config.folds, derive_seed(config.seed, 0))?)
}

/// Runs every fold (in parallel, with per-fold derived seeds) and aggregates.
pub fn run_cv(config: &PipelineConfig) -> Result<CvReport, EvalError> {
    run_cv_with_artifacts(config).map(|(report, _)| report)
}

/// [`run_cv`], also returning each fold's fitted artifacts (by fold index).
pub fn run_cv_with_artifacts(
    config: &PipelineConfig,
) -> Result<(CvReport, Vec<FoldArtifacts>), EvalError> {
    config.validate()?;
    let (docs, phrases) = resolve_corpus(&config.corpus)?;
    let labels: Vec<usize> = docs.iter().map(|d| d.label).collect();
    let plan = plan_folds(&labels, config)?;
    let results: Vec<Result<(FoldReport, FoldArtifacts), EvalError>> = (0..config.folds)
        .into_par_iter()
        .map(|fold| run_fold_with_artifacts(&docs, &plan, fold, config, phrases.as_deref()))
        .collect();
    let mut folds = Vec::with_capacity(config.folds);
    let mut artifacts = Vec::with_capacity(config.folds);
    for result in results {
        let (report, fitted) = result?;
        folds.push(report);
        artifacts.push(fitted);
    }

    let cnn_accs: Vec<f64> = folds.iter().map(|f| f.cnn_test_accuracy).collect();
    let reduced_accs: Vec<f64> = folds.iter().map(|f| f.reduced_test_accuracy).collect();
    let (mean_cnn_accuracy, std_cnn_accuracy) = mean_std(&cnn_accs);
    let (mean_reduced_accuracy, std_reduced_accuracy) = mean_std(&reduced_accs);
    let mean_active_features =
        folds.iter().map(|f| f.active_feature_count as f64).sum::<f64>() / folds.len() as f64;
    let mean_nnls_objective =
        folds.iter().map(|f| f.nnls_objective).sum::<f64>() / folds.len() as f64;
    let recoveries: Option<Vec<f64>> = folds.iter().map(|f| f.phrase_recovery).collect();
    let mean_phrase_recovery =
        recoveries.map(|rs| rs.iter().sum::<f64>() / rs.len() as f64);

    let report = CvReport {
        config: config.clone(),
        folds,
        mean_cnn_accuracy,
        std_cnn_accuracy,
        mean_reduced_accuracy,
        std_reduced_accuracy,
        mean_active_features,
        mean_nnls_objective,
        mean_phrase_recovery,
    };
    Ok((report, artifacts))
}

/// Renders the comparison as a plain-text table: the full network on one row,
/// its reduced form on the other.
pub fn render_table(report: &CvReport) -> String {
    let headers =
        ["Features", "Reduction", "Classifier", "Model type", "Active features", "Accuracy"];
    let rows = vec![
        [
            "convolutional".to_string(),
            "-".to_string(),
            "softmax linear".to_string(),
            "dense".to_string(),
            "-".to_string(),
            format!("{:.4}", report.mean_cnn_accuracy),
        ],
        [
            "n-gram presence".to_string(),
            "non-negative linear map".to_string(),
            "RBF kernel".to_string(),
            "sparse".to_string(),
            format!("{:.1}", report.mean_active_features),
            format!("{:.4}", report.mean_reduced_accuracy),
        ],
    ];
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let render_row = |cells: &[String]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:<width$}", cell, width = widths[i]));
        }
        line.trim_end().to_string()
    };
    let header_cells: Vec<String> = headers.iter().map(|h| h.to_string()).collect();
    out.push_str(&render_row(&header_cells));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &rows {
        out.push_str(&render_row(row));
        out.push('\n');
    }
    out
}
