//! The JSON config file: one document with optional per-module sections.
//! Command-line flags always override file values, which override built-in
//! defaults.

use std::path::Path;

use serde::Deserialize;

use ngd_core::cnn::CnnConfig;
use ngd_core::corpus::SynthSpec;
use ngd_core::eval::{CorpusSource, TopK};
use ngd_core::gp::KernelConfig;

use crate::{usage, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NgramSection {
    pub min: usize,
    pub max: usize,
    pub min_df: usize,
}

impl Default for NgramSection {
    /// Paper-shaped defaults: n-grams of length 3 through 5, discarding any
    /// with document frequency below 3.
    fn default() -> Self {
        NgramSection { min: 3, max: 5, min_df: 3 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub synth: Option<SynthSpec>,
    pub cnn: Option<CnnConfig>,
    pub ngram: Option<NgramSection>,
    pub kernel: Option<KernelConfig>,
    pub corpus: Option<CorpusSource>,
    pub folds: Option<usize>,
    pub vocab_min_count: Option<usize>,
    pub top_k: Option<TopK>,
    pub seed: Option<u64>,
}

pub fn load_config(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("malformed config {}: {e}", path.display())))
}

/// Kernel defaults for commands that tune the length scale themselves: the
/// empty grid means "derive candidates from the data's median distance".
pub fn auto_kernel() -> KernelConfig {
    KernelConfig { length_scale: 1.0, ridge: 1e-3, scale_grid: Vec::new() }
}

pub fn default_synth_spec() -> SynthSpec {
    SynthSpec {
        num_classes: 6,
        docs_per_class: 60,
        doc_length: 120,
        phrases_per_class: 3,
        phrase_length: 3,
        filler_vocab_size: 40,
        noise_rate: 0.05,
        seed: 0,
    }
}
