//! RBF-kernel classifier over reduced n-gram presence features — the final
//! prediction stage of the reduced model.
//!
//! One-vs-rest kernel ridge regression on one-hot labels: fitting solves
//! (K + λI)·α = Y by a symmetric positive-definite factorization, prediction
//! scores test points against the training set and takes the best class. The
//! kernel length scale is chosen by validation-accuracy grid search, with the
//! median pairwise distance heuristic anchoring the grid.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{load_json, save_json, Provenance};
use crate::linalg::{argmax, spd_solve, LinalgError, Matrix};

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid kernel config: {0}")]
    InvalidConfig(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{n} training rows cannot cover {classes} classes")]
    TooFewSamples { n: usize, classes: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("classifier artifact mismatch: {0}")]
    ArtifactMismatch(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Kernel hyperparameters and the length-scale candidates searched during
/// tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub length_scale: f64,
    pub ridge: f64,
    pub scale_grid: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { length_scale: 1.0, ridge: 1e-3, scale_grid: vec![1.0] }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        if !(self.length_scale > 0.0) {
            return Err(GpError::InvalidConfig("length_scale must be positive".into()));
        }
        if !(self.ridge > 0.0) {
            return Err(GpError::InvalidConfig("ridge must be positive".into()));
        }
        if self.scale_grid.is_empty() || self.scale_grid.iter().any(|&s| !(s > 0.0)) {
            return Err(GpError::InvalidConfig("scale grid must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Multipliers applied to the median-distance heuristic to form the default
/// length-scale search grid.
pub const SCALE_GRID_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

/// Builds the default search grid around a distance scale.
pub fn default_scale_grid(anchor: f64) -> Vec<f64> {
    let anchor = if anchor > 0.0 { anchor } else { 1.0 };
    SCALE_GRID_MULTIPLIERS.iter().map(|m| m * anchor).collect()
}

/// Median pairwise Euclidean distance between rows; the standard anchor for
/// RBF length scales. Returns 1.0 when there are no distinct pairs or every
/// distance is zero. With an even pair count the lower middle is taken, which
/// keeps the value deterministic.
pub fn median_heuristic(features: &Matrix) -> f64 {
    let n = features.rows();
    let mut dists = Vec::with_capacity(n.saturating_sub(1) * n / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = features
                .row(i)
                .iter()
                .zip(features.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let median = dists[(dists.len() - 1) / 2];
    if median > 0.0 {
        median
    } else {
        1.0
    }
}

/// K[i, j] = exp(−||X_i − Y_j||² / (2ℓ²)).
pub fn rbf_kernel(x: &Matrix, y: &Matrix, length_scale: f64) -> Matrix {
    assert!(length_scale > 0.0, "length scale must be positive");
    assert_eq!(x.cols(), y.cols(), "feature dimensions differ");
    let denom = 2.0 * length_scale * length_scale;
    let mut k = Matrix::zeros(x.rows(), y.rows());
    for i in 0..x.rows() {
        let xi = x.row(i);
        for j in 0..y.rows() {
            let d2: f64 =
                xi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            k[(i, j)] = (-d2 / denom).exp();
        }
    }
    k
}

/// A fitted one-vs-rest kernel ridge classifier.
#[derive(Debug, Clone)]
pub struct KernelClassifier {
    train_features: Matrix,
    dual_coef: Matrix,
    length_scale: f64,
    ridge: f64,
    num_classes: usize,
}

/// Solves (K + λI)·α = Y with Y the one-hot label matrix.
pub fn fit(
    features: &Matrix,
    labels: &[usize],
    num_classes: usize,
    config: &KernelConfig,
) -> Result<KernelClassifier, GpError> {
    config.validate()?;
    let n = features.rows();
    if labels.len() != n {
        return Err(GpError::DimensionMismatch(format!(
            "{n} feature rows vs {} labels",
            labels.len()
        )));
    }
    if n < num_classes {
        return Err(GpError::TooFewSamples { n, classes: num_classes });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(GpError::LabelOutOfRange { label, classes: num_classes });
    }
    let mut system = rbf_kernel(features, features, config.length_scale);
    for i in 0..n {
        system[(i, i)] += config.ridge;
    }
    let mut one_hot = Matrix::zeros(n, num_classes);
    for (i, &label) in labels.iter().enumerate() {
        one_hot[(i, label)] = 1.0;
    }
    let dual_coef = spd_solve(&system, &one_hot)?;
    Ok(KernelClassifier {
        train_features: features.clone(),
        dual_coef,
        length_scale: config.length_scale,
        ridge: config.ridge,
        num_classes,
    })
}

impl KernelClassifier {
    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn train_features(&self) -> &Matrix {
        &self.train_features
    }

    pub fn dual_coefficients(&self) -> &Matrix {
        &self.dual_coef
    }

    /// Per-class scores: rbf(features, train)·α.
    pub fn scores(&self, features: &Matrix) -> Result<Matrix, GpError> {
        if features.cols() != self.train_features.cols() {
            return Err(GpError::DimensionMismatch(format!(
                "classifier expects {} features, got {}",
                self.train_features.cols(),
                features.cols()
            )));
        }
        let k = rbf_kernel(features, &self.train_features, self.length_scale);
        Ok(k.matmul(&self.dual_coef)?)
    }

    /// Best-scoring class per row; ties resolve to the lowest class id.
    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>, GpError> {
        let scores = self.scores(features)?;
        Ok((0..scores.rows()).map(|i| argmax(scores.row(i))).collect())
    }
}

/// Grid search for the length scale maximizing validation accuracy; ties go
/// to the smallest candidate. Duplicates in the grid are harmless.
pub fn tune_scale(
    train_features: &Matrix,
    train_labels: &[usize],
    val_features: &Matrix,
    val_labels: &[usize],
    num_classes: usize,
    config: &KernelConfig,
) -> Result<f64, GpError> {
    config.validate()?;
    let mut grid = config.scale_grid.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best: Option<(f64, f64)> = None; // (accuracy, scale)
    for &scale in &grid {
        let candidate = KernelConfig { length_scale: scale, ..config.clone() };
        let clf = fit(train_features, train_labels, num_classes, &candidate)?;
        let predictions = clf.predict(val_features)?;
        let correct =
            predictions.iter().zip(val_labels).filter(|(p, t)| p == t).count();
        let accuracy = correct as f64 / val_labels.len().max(1) as f64;
        if best.is_none_or(|(acc, _)| accuracy > acc) {
            best = Some((accuracy, scale));
        }
    }
    Ok(best.expect("validated grid is non-empty").1)
}

#[derive(Serialize, Deserialize)]
struct ClassifierArtifact {
    kind: String,
    version: u32,
    provenance: Option<Provenance>,
    length_scale: f64,
    ridge: f64,
    num_classes: usize,
    /// Dictionary positions of the reduced feature set, in selection order.
    selected_features: Vec<usize>,
    train_features: Matrix,
    dual_coef: Matrix,
}

const CLASSIFIER_KIND: &str = "kernel-classifier";
const CLASSIFIER_VERSION: u32 = 1;

/// Writes the classifier together with the reduced feature index set it
/// expects as input.
pub fn save_classifier(
    path: &Path,
    clf: &KernelClassifier,
    selected_features: &[usize],
    provenance: Option<Provenance>,
) -> Result<(), GpError> {
    let artifact = ClassifierArtifact {
        kind: CLASSIFIER_KIND.to_string(),
        version: CLASSIFIER_VERSION,
        provenance,
        length_scale: clf.length_scale,
        ridge: clf.ridge,
        num_classes: clf.num_classes,
        selected_features: selected_features.to_vec(),
        train_features: clf.train_features.clone(),
        dual_coef: clf.dual_coef.clone(),
    };
    Ok(save_json(path, &artifact)?)
}

pub fn load_classifier(
    path: &Path,
) -> Result<(KernelClassifier, Vec<usize>, Option<Provenance>), GpError> {
    let artifact: ClassifierArtifact = load_json(path)?;
    if artifact.kind != CLASSIFIER_KIND || artifact.version != CLASSIFIER_VERSION {
        return Err(GpError::ArtifactMismatch(format!(
            "expected {CLASSIFIER_KIND} v{CLASSIFIER_VERSION}, found {} v{}",
            artifact.kind, artifact.version
        )));
    }
    if artifact.train_features.rows() != artifact.dual_coef.rows()
        || artifact.dual_coef.cols() != artifact.num_classes
    {
        return Err(GpError::ArtifactMismatch("coefficient shape mismatch".into()));
    }
    if !(artifact.length_scale > 0.0) || !(artifact.ridge > 0.0) {
        return Err(GpError::ArtifactMismatch("non-positive kernel parameters".into()));
    }
    let clf = KernelClassifier {
        train_features: artifact.train_features,
        dual_coef: artifact.dual_coef,
        length_scale: artifact.length_scale,
        ridge: artifact.ridge,
        num_classes: artifact.num_classes,
    };
    Ok((clf, artifact.selected_features, artifact.provenance))
}
