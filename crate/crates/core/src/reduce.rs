//! Reduction of a trained network to a sparse non-negative linear map.
//!
//! The map A sends a document's binary n-gram presence vector to an
//! approximation of the network's internal representation: A·tp(x) ≈ φ(x).
//! It is fitted column-independently by non-negative least squares, one
//! n-gram contributes through one column, and summing a column measures how
//! much that n-gram feeds the representation overall. Reduction keeps the
//! top-scoring columns; the Moore–Penrose pseudo-inverse of the full map runs
//! the approximation backwards and scores which n-grams explain a given
//! representation.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::ngram::{NgramDictionary, PresenceVector};
use crate::nnls::{default_max_iter, nnls_multi, NnlsError};

/// Relative singular-value cutoff for the pseudo-inverse. The dictionary is
/// usually wider than the sample count, so the map is rank-deficient and
/// truncation is mandatory rather than cosmetic.
const PINV_REL_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("feature count {requested} outside 1..={available}")]
    FeatureCountOutOfRange { requested: usize, available: usize },
    #[error("malformed map file at line {line}: {reason}")]
    MalformedMap { line: usize, reason: String },
    #[error(transparent)]
    Solver(#[from] NnlsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Aggregate solve quality over all representation coordinates: total
/// residual sum of squares and the worst per-column optimality violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub kkt_residual: f64,
}

/// The fitted non-negative map from presence features to representations.
///
/// Shape is rep_dim × p: row j holds the weights feeding representation
/// coordinate j, column i holds everything n-gram i contributes.
#[derive(Debug, Clone)]
pub struct LinearMap {
    a: Matrix,
    dictionary: Arc<NgramDictionary>,
    diagnostics: FitDiagnostics,
    pinv: OnceLock<Matrix>,
}

impl LinearMap {
    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn dictionary(&self) -> &NgramDictionary {
        &self.dictionary
    }

    pub fn rep_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn num_features(&self) -> usize {
        self.a.cols()
    }

    pub fn diagnostics(&self) -> FitDiagnostics {
        self.diagnostics
    }

    /// Moore–Penrose pseudo-inverse (p × rep_dim), computed on first use and
    /// cached. Singular values below 1e-10 of the largest are truncated.
    pub fn pseudo_inverse(&self) -> Result<&Matrix, ReduceError> {
        if let Some(p) = self.pinv.get() {
            return Ok(p);
        }
        let p = crate::linalg::pseudo_inverse(&self.a, PINV_REL_TOL)?;
        Ok(self.pinv.get_or_init(|| p))
    }
}

/// Stacks sparse presence rows into the dense design matrix the solver takes.
pub fn presence_matrix(rows: &[PresenceVector]) -> Result<Matrix, ReduceError> {
    let Some(first) = rows.first() else {
        return Err(ReduceError::InvalidInput("no presence rows".into()));
    };
    let p = first.dict_size();
    if let Some(bad) = rows.iter().find(|r| r.dict_size() != p) {
        return Err(ReduceError::DimensionMismatch(format!(
            "presence rows disagree on dictionary size: {p} vs {}",
            bad.dict_size()
        )));
    }
    let mut m = Matrix::zeros(rows.len(), p);
    for (i, row) in rows.iter().enumerate() {
        for &j in row.indices() {
            m[(i, j)] = 1.0;
        }
    }
    Ok(m)
}

fn check_fit_inputs(
    presence: &Matrix,
    reps: &Matrix,
    dictionary: &NgramDictionary,
) -> Result<(), ReduceError> {
    if presence.rows() != reps.rows() {
        return Err(ReduceError::DimensionMismatch(format!(
            "{} presence rows vs {} representation rows",
            presence.rows(),
            reps.rows()
        )));
    }
    if presence.cols() != dictionary.len() {
        return Err(ReduceError::DimensionMismatch(format!(
            "presence has {} columns but the dictionary holds {} n-grams",
            presence.cols(),
            dictionary.len()
        )));
    }
    if presence.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(ReduceError::InvalidInput("presence matrix must be binary".into()));
    }
    if reps.data().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(ReduceError::InvalidInput(
            "representations must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

fn aggregate(per_column: &[crate::nnls::NnlsDiagnostics]) -> FitDiagnostics {
    FitDiagnostics {
        objective: per_column.iter().map(|d| d.objective).sum(),
        kkt_residual: per_column.iter().map(|d| d.kkt_residual).fold(0.0, f64::max),
    }
}

/// Fits A by solving one non-negative least-squares problem per
/// representation coordinate: minimize ||presence·A_jᵀ − reps_j||² over
/// A_j ≥ 0, sharing the Gram matrix across coordinates.
pub fn fit_linear_map(
    presence: &Matrix,
    reps: &Matrix,
    dictionary: Arc<NgramDictionary>,
    tol: f64,
) -> Result<LinearMap, ReduceError> {
    check_fit_inputs(presence, reps, &dictionary)?;
    let max_iter = default_max_iter(presence.cols());
    let (solution, per_column) = nnls_multi(presence, reps, tol, max_iter)?;
    Ok(LinearMap {
        a: solution.transpose(),
        dictionary,
        diagnostics: aggregate(&per_column),
        pinv: OnceLock::new(),
    })
}

/// A map refitted with only a subset of the dictionary columns — a
/// diagnostic for how much fit quality the discarded features carried. Its
/// objective can never beat the full map's.
#[derive(Debug, Clone)]
pub struct RestrictedFit {
    pub columns: Vec<usize>,
    pub a: Matrix,
    pub diagnostics: FitDiagnostics,
}

pub fn fit_restricted(
    presence: &Matrix,
    reps: &Matrix,
    columns: &[usize],
    tol: f64,
) -> Result<RestrictedFit, ReduceError> {
    if columns.is_empty() {
        return Err(ReduceError::InvalidInput("no columns selected".into()));
    }
    let distinct: BTreeSet<usize> = columns.iter().copied().collect();
    if distinct.len() != columns.len() {
        return Err(ReduceError::InvalidInput("duplicate column selected".into()));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= presence.cols()) {
        return Err(ReduceError::FeatureCountOutOfRange {
            requested: bad,
            available: presence.cols(),
        });
    }
    if presence.rows() != reps.rows() {
        return Err(ReduceError::DimensionMismatch(format!(
            "{} presence rows vs {} representation rows",
            presence.rows(),
            reps.rows()
        )));
    }
    let mut design = Matrix::zeros(presence.rows(), columns.len());
    for i in 0..presence.rows() {
        for (out, &c) in columns.iter().enumerate() {
            design[(i, out)] = presence[(i, c)];
        }
    }
    let max_iter = default_max_iter(columns.len());
    let (solution, per_column) = nnls_multi(&design, reps, tol, max_iter)?;
    Ok(RestrictedFit {
        columns: columns.to_vec(),
        a: solution.transpose(),
        diagnostics: aggregate(&per_column),
    })
}

/// Per-feature totals of the map plus the permutation that ranks them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRanking {
    contributions: Vec<f64>,
    order: Vec<usize>,
}

impl ContributionRanking {
    pub fn contributions(&self) -> &[f64] {
        &self.contributions
    }

    /// Feature indices sorted by descending contribution, ties by ascending
    /// index.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Scores n-gram i by the sum of column i of A: the total weight it feeds
/// into the representation across all coordinates.
pub fn contributions(map: &LinearMap) -> ContributionRanking {
    let a = map.matrix();
    let mut sums = vec![0.0; a.cols()];
    for i in 0..a.rows() {
        for (j, &v) in a.row(i).iter().enumerate() {
            sums[j] += v;
        }
    }
    let mut order: Vec<usize> = (0..sums.len()).collect();
    order.sort_by(|&i, &j| sums[j].total_cmp(&sums[i]).then(i.cmp(&j)));
    ContributionRanking { contributions: sums, order }
}

/// The k best-contributing feature indices, strongest first.
pub fn select_top_k(ranking: &ContributionRanking, k: usize) -> Result<Vec<usize>, ReduceError> {
    let p = ranking.order.len();
    if k == 0 || k > p {
        return Err(ReduceError::FeatureCountOutOfRange { requested: k, available: p });
    }
    Ok(ranking.order[..k].to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationItem {
    pub ngram: String,
    pub score: f64,
}

/// Ranked n-gram attributions reconstructed from a representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub doc_id: String,
    pub items: Vec<ExplanationItem>,
}

/// Runs the map backwards: s = A†·rep scores every dictionary n-gram by how
/// strongly the representation points at it. Returns the top_m entries by
/// descending score, ties by ascending dictionary index.
pub fn explain(
    doc_id: &str,
    rep: &[f64],
    map: &LinearMap,
    top_m: usize,
) -> Result<Explanation, ReduceError> {
    if rep.len() != map.rep_dim() {
        return Err(ReduceError::DimensionMismatch(format!(
            "representation has {} entries, map expects {}",
            rep.len(),
            map.rep_dim()
        )));
    }
    let scores = map.pseudo_inverse()?.matvec(rep)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let items = order
        .into_iter()
        .take(top_m)
        .map(|i| ExplanationItem {
            ngram: map.dictionary().ngram(i).join(" "),
            score: scores[i],
        })
        .collect();
    Ok(Explanation { doc_id: doc_id.to_string(), items })
}

/// Writes the map as a header line `rep_dim p objective kkt_residual`
/// followed by one row of A per line. Floats use scientific notation, which
/// parses back to the identical bits.
pub fn write_map(path: &Path, map: &LinearMap) -> Result<(), ReduceError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        out,
        "{} {} {:e} {:e}",
        map.rep_dim(),
        map.num_features(),
        map.diagnostics.objective,
        map.diagnostics.kkt_residual
    )?;
    for i in 0..map.rep_dim() {
        let row: Vec<String> = map.a.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a map written by [`write_map`] and reattaches its dictionary.
pub fn read_map(path: &Path, dictionary: Arc<NgramDictionary>) -> Result<LinearMap, ReduceError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| ReduceError::MalformedMap { line: 1, reason: "empty file".into() })?;
    let header = header?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(ReduceError::MalformedMap {
            line: 1,
            reason: format!("expected 4 header fields, found {}", fields.len()),
        });
    }
    let parse_dim = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| ReduceError::MalformedMap {
            line: 1,
            reason: format!("unreadable {what}: {s}"),
        })
    };
    let parse_float = |s: &str, what: &str| {
        s.parse::<f64>().map_err(|_| ReduceError::MalformedMap {
            line: 1,
            reason: format!("unreadable {what}: {s}"),
        })
    };
    let rep_dim = parse_dim(fields[0], "row count")?;
    let p = parse_dim(fields[1], "column count")?;
    let objective = parse_float(fields[2], "objective")?;
    let kkt_residual = parse_float(fields[3], "optimality residual")?;
    if p != dictionary.len() {
        return Err(ReduceError::DimensionMismatch(format!(
            "map has {p} columns but the dictionary holds {} n-grams",
            dictionary.len()
        )));
    }
    let mut a = Matrix::zeros(rep_dim, p);
    let mut rows_read = 0;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if rows_read == rep_dim {
            return Err(ReduceError::MalformedMap {
                line: idx + 1,
                reason: format!("more than {rep_dim} rows"),
            });
        }
        let mut count = 0;
        for (j, field) in line.split_whitespace().enumerate() {
            if j >= p {
                return Err(ReduceError::MalformedMap {
                    line: idx + 1,
                    reason: format!("more than {p} entries"),
                });
            }
            let v: f64 = field.parse().map_err(|_| ReduceError::MalformedMap {
                line: idx + 1,
                reason: format!("unreadable entry: {field}"),
            })?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ReduceError::MalformedMap {
                    line: idx + 1,
                    reason: format!("negative or non-finite entry: {field}"),
                });
            }
            a[(rows_read, j)] = v;
            count += 1;
        }
        if count != p {
            return Err(ReduceError::MalformedMap {
                line: idx + 1,
                reason: format!("expected {p} entries, found {count}"),
            });
        }
        rows_read += 1;
    }
    if rows_read != rep_dim {
        return Err(ReduceError::MalformedMap {
            line: rows_read + 2,
            reason: format!("expected {rep_dim} rows, found {rows_read}"),
        });
    }
    Ok(LinearMap {
        a,
        dictionary,
        diagnostics: FitDiagnostics { objective, kkt_residual },
        pinv: OnceLock::new(),
    })
}

/// Writes the ranking as `rank,ngram,contribution` CSV, rank starting at 1.
/// Tokens never contain commas (the tokenizer strips punctuation).
pub fn write_ranking(
    path: &Path,
    ranking: &ContributionRanking,
    dictionary: &NgramDictionary,
) -> Result<(), ReduceError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "rank,ngram,contribution")?;
    for (rank, &i) in ranking.order.iter().enumerate() {
        writeln!(out, "{},{},{:e}", rank + 1, dictionary.ngram(i).join(" "), ranking.contributions[i])?;
    }
    out.flush()?;
    Ok(())
}
