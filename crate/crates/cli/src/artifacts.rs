//! CLI-owned artifact helpers: the provenance sidecar written next to
//! line-oriented files (which have no room for embedded metadata) and the
//! selected-feature-set artifact connecting `reduce` to `classify`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ngd_core::artifact::{load_json, save_json, token_list_digest, Provenance};
use ngd_core::ngram::NgramDictionary;

use crate::{runtime, CliResult};

pub const META_KIND: &str = "meta";
pub const META_VERSION: u32 = 1;

/// Sidecar describing a non-JSON artifact: which format the main file uses
/// and the command invocation that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaArtifact {
    pub kind: String,
    pub version: u32,
    /// Format name of the file the sidecar describes.
    pub describes: String,
    pub provenance: Provenance,
}

/// `corpus.jsonl` → `corpus.jsonl.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_meta(path: &Path, describes: &str, provenance: &Provenance) -> CliResult<()> {
    let meta = MetaArtifact {
        kind: META_KIND.to_string(),
        version: META_VERSION,
        describes: describes.to_string(),
        provenance: provenance.clone(),
    };
    save_json(&meta_path(path), &meta)?;
    Ok(())
}

pub const EXPLANATION_KIND: &str = "explanation";
pub const EXPLANATION_VERSION: u32 = 1;

/// A per-document explanation wrapped with schema and provenance fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationArtifact {
    pub kind: String,
    pub version: u32,
    pub provenance: Option<Provenance>,
    #[serde(flatten)]
    pub explanation: ngd_core::reduce::Explanation,
}

impl ExplanationArtifact {
    pub fn new(
        explanation: ngd_core::reduce::Explanation,
        provenance: Option<Provenance>,
    ) -> Self {
        ExplanationArtifact {
            kind: EXPLANATION_KIND.to_string(),
            version: EXPLANATION_VERSION,
            provenance,
            explanation,
        }
    }
}

pub const SELECTED_KIND: &str = "selected-features";
pub const SELECTED_VERSION: u32 = 1;

/// The reduced feature set: dictionary positions that survived top-k
/// selection, tied to the dictionary by digest so a mismatched pairing is
/// caught at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeatures {
    pub kind: String,
    pub version: u32,
    pub provenance: Option<Provenance>,
    pub dictionary_sha256: String,
    /// Selected dictionary positions in ranking order.
    pub indices: Vec<usize>,
}

pub fn dictionary_digest(dict: &NgramDictionary) -> String {
    let joined: Vec<String> = dict.ngrams().iter().map(|g| g.join(" ")).collect();
    token_list_digest(&joined)
}

pub fn save_selected(
    path: &Path,
    dict: &NgramDictionary,
    indices: &[usize],
    provenance: Option<Provenance>,
) -> CliResult<()> {
    let artifact = SelectedFeatures {
        kind: SELECTED_KIND.to_string(),
        version: SELECTED_VERSION,
        provenance,
        dictionary_sha256: dictionary_digest(dict),
        indices: indices.to_vec(),
    };
    save_json(path, &artifact)?;
    Ok(())
}

/// Loads a selected-feature set and checks it against the dictionary it will
/// index into.
pub fn load_selected(path: &Path, dict: &NgramDictionary) -> CliResult<SelectedFeatures> {
    let artifact: SelectedFeatures =
        load_json(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    if artifact.kind != SELECTED_KIND || artifact.version != SELECTED_VERSION {
        return Err(runtime(format!(
            "{}: expected {SELECTED_KIND} v{SELECTED_VERSION}, found {} v{}",
            path.display(),
            artifact.kind,
            artifact.version
        )));
    }
    if artifact.dictionary_sha256 != dictionary_digest(dict) {
        return Err(runtime(format!(
            "{}: feature set was selected against a different dictionary",
            path.display()
        )));
    }
    if let Some(&bad) = artifact.indices.iter().find(|&&i| i >= dict.len()) {
        return Err(runtime(format!(
            "{}: selected index {bad} out of range for dictionary of {}",
            path.display(),
            dict.len()
        )));
    }
    Ok(artifact)
}
