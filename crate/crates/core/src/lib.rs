//! Model reduction of shallow convolutional text classifiers.
//!
//! The pipeline trains a small convolutional network on token sequences,
//! then approximates its internal document representation as a sparse
//! non-negative linear map over binary n-gram presence features. The reduced
//! model pairs a handful of n-grams with a kernel classifier, matching the
//! network's accuracy while staying inspectable: every prediction can be
//! traced back to the n-grams that produced it.

pub mod artifact;
pub mod cnn;
pub mod corpus;
pub mod eval;
pub mod gp;
pub mod linalg;
pub mod ngram;
pub mod nnls;
pub mod reduce;

pub use corpus::{Document, Vocabulary};
pub use linalg::{LinalgError, Matrix};
