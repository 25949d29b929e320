//! The `inspect` command: identify any artifact the pipeline writes, print
//! its schema version, and prove the owning reader and writer agree by
//! running a read → write → read round trip against a temporary copy.
//!
//! JSON artifacts self-describe through their `kind` field; line-oriented
//! formats are recognized by their headers. Formats without an embedded
//! version are at schema version 1, the only one in existence.

use std::path::Path;
use std::sync::Arc;

use serde_json::Value;

use ngd_core::artifact::{load_json, save_json};
use ngd_core::cnn::{self, EpochLog};
use ngd_core::corpus::{read_corpus, read_phrases, write_corpus, write_phrases};
use ngd_core::eval::CvReport;
use ngd_core::gp;
use ngd_core::ngram::{read_dictionary, read_presence, write_dictionary, write_presence};
use ngd_core::reduce::{read_map, write_map};

use crate::artifacts::{
    ExplanationArtifact, MetaArtifact, SelectedFeatures, EXPLANATION_KIND, META_KIND,
    SELECTED_KIND,
};
use crate::{runtime, usage, CliResult, InspectArgs};

pub fn inspect(args: &InspectArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&args.path)
        .map_err(|e| runtime(format!("cannot read {}: {e}", args.path.display())))?;
    let (kind, version) = identify_and_roundtrip(args, &text)?;
    println!("kind: {kind}");
    println!("version: {version}");
    println!("round-trip: ok");
    Ok(())
}

fn identify_and_roundtrip(args: &InspectArgs, text: &str) -> CliResult<(String, u64)> {
    let path = &args.path;
    // A whole-file JSON document is either a kind-tagged artifact or a
    // one-line corpus/phrase/log file; both dispatch on their keys.
    if let Ok(value) = serde_json::from_str::<Value>(text) {
        return inspect_json(path, &value);
    }
    let Some(first) = text.lines().find(|l| !l.trim().is_empty()) else {
        return Err(runtime(format!("{}: empty file", path.display())));
    };
    if first.trim_start().starts_with('{') {
        let head: Value = serde_json::from_str(first)
            .map_err(|e| runtime(format!("{}: malformed first line: {e}", path.display())))?;
        return inspect_json(path, &head);
    }
    inspect_text(args, text, first)
}

/// Dispatches a JSON object by its `kind` field, falling back to key shape
/// for the formats that predate kind tags (reports) and line formats.
fn inspect_json(path: &Path, value: &Value) -> CliResult<(String, u64)> {
    let has = |key: &str| value.get(key).is_some();
    match value.get("kind").and_then(Value::as_str) {
        Some("cnn-model") => roundtrip_model(path, value),
        Some("kernel-classifier") => roundtrip_classifier(path, value),
        Some(SELECTED_KIND) => roundtrip_selected(path),
        Some(META_KIND) => roundtrip_meta(path),
        Some(EXPLANATION_KIND) => roundtrip_explanation(path),
        Some(other) => Err(runtime(format!("{}: unknown artifact kind {other:?}", path.display()))),
        None if has("config") && has("folds") => roundtrip_report(path),
        None if has("id") && has("text") && has("label") => roundtrip_corpus(path),
        None if has("class") && has("phrases") => roundtrip_phrases(path),
        None if has("epoch") && has("train_loss") && has("val_accuracy") => roundtrip_log(path),
        None => Err(runtime(format!("{}: unrecognized JSON artifact", path.display()))),
    }
}

fn inspect_text(args: &InspectArgs, text: &str, header: &str) -> CliResult<(String, u64)> {
    let path = &args.path;
    if header == "rank,ngram,contribution" {
        return roundtrip_ranking(path, text);
    }
    if header.starts_with("Features") {
        return roundtrip_table(path, text);
    }
    let fields: Vec<&str> = header.split_whitespace().collect();
    let ints = fields.iter().take_while(|f| f.parse::<usize>().is_ok()).count();
    if fields.len() == 3 && ints == 3 {
        return roundtrip_presence(path);
    }
    if fields.len() == 4
        && ints >= 2
        && fields[2].parse::<f64>().is_ok()
        && fields[3].parse::<f64>().is_ok()
    {
        return roundtrip_linear_map(path, args.dict.as_deref());
    }
    roundtrip_dictionary(path)
}

fn embedded_version(value: &Value) -> u64 {
    value.get("version").and_then(Value::as_u64).unwrap_or(1)
}

fn temp_dir() -> CliResult<tempfile::TempDir> {
    Ok(tempfile::tempdir()?)
}

/// Two files hold the same JSON value (whitespace and key order aside).
fn check_same_json(original: &Path, rewritten: &Path, what: &str) -> CliResult<()> {
    let a: Value = load_json(original)?;
    let b: Value = load_json(rewritten)?;
    if a != b {
        return Err(runtime(format!("{}: {what} round-trip mismatch", original.display())));
    }
    Ok(())
}

fn roundtrip_model(path: &Path, value: &Value) -> CliResult<(String, u64)> {
    let (model, vocab, prov) = cnn::load_model(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("model.json");
    cnn::save_model(&copy, &model, &vocab, prov)?;
    check_same_json(path, &copy, "model")?;
    Ok(("cnn-model".to_string(), embedded_version(value)))
}

fn roundtrip_classifier(path: &Path, value: &Value) -> CliResult<(String, u64)> {
    let (clf, selected, prov) = gp::load_classifier(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("classifier.json");
    gp::save_classifier(&copy, &clf, &selected, prov)?;
    check_same_json(path, &copy, "classifier")?;
    Ok(("kernel-classifier".to_string(), embedded_version(value)))
}

fn roundtrip_selected(path: &Path) -> CliResult<(String, u64)> {
    let artifact: SelectedFeatures = load_json(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("selected.json");
    save_json(&copy, &artifact)?;
    check_same_json(path, &copy, "feature set")?;
    Ok((artifact.kind, u64::from(artifact.version)))
}

fn roundtrip_meta(path: &Path) -> CliResult<(String, u64)> {
    let artifact: MetaArtifact = load_json(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("meta.json");
    save_json(&copy, &artifact)?;
    check_same_json(path, &copy, "sidecar")?;
    Ok((artifact.kind, u64::from(artifact.version)))
}

fn roundtrip_explanation(path: &Path) -> CliResult<(String, u64)> {
    let artifact: ExplanationArtifact = load_json(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("explanation.json");
    save_json(&copy, &artifact)?;
    check_same_json(path, &copy, "explanation")?;
    Ok((artifact.kind, u64::from(artifact.version)))
}

fn roundtrip_report(path: &Path) -> CliResult<(String, u64)> {
    let report: CvReport = load_json(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("report.json");
    save_json(&copy, &report)?;
    let again: CvReport = load_json(&copy)?;
    if again != report {
        return Err(runtime(format!("{}: report round-trip mismatch", path.display())));
    }
    Ok(("cv-report".to_string(), 1))
}

fn roundtrip_corpus(path: &Path) -> CliResult<(String, u64)> {
    let docs = read_corpus(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("corpus.jsonl");
    write_corpus(&copy, &docs)?;
    if read_corpus(&copy)? != docs {
        return Err(runtime(format!("{}: corpus round-trip mismatch", path.display())));
    }
    Ok(("corpus".to_string(), 1))
}

fn roundtrip_phrases(path: &Path) -> CliResult<(String, u64)> {
    let phrases = read_phrases(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("phrases.jsonl");
    write_phrases(&copy, &phrases)?;
    if read_phrases(&copy)? != phrases {
        return Err(runtime(format!("{}: phrase round-trip mismatch", path.display())));
    }
    Ok(("phrases".to_string(), 1))
}

fn roundtrip_log(path: &Path) -> CliResult<(String, u64)> {
    let parse = |text: &str| -> CliResult<Vec<EpochLog>> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<EpochLog>(l).map_err(Into::into))
            .collect()
    };
    let log = parse(&std::fs::read_to_string(path)?)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("log.jsonl");
    cnn::write_training_log(&copy, &log)?;
    if parse(&std::fs::read_to_string(&copy)?)? != log {
        return Err(runtime(format!("{}: log round-trip mismatch", path.display())));
    }
    Ok(("training-log".to_string(), 1))
}

fn roundtrip_ranking(path: &Path, text: &str) -> CliResult<(String, u64)> {
    // Parse every row and re-emit it with the writer's own formatting; equal
    // bytes prove the notations agree.
    let mut rebuilt = String::from("rank,ngram,contribution\n");
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, ',');
        let (rank, ngram, score) = (parts.next(), parts.next(), parts.next());
        let (Some(rank), Some(ngram), Some(score)) = (rank, ngram, score) else {
            return Err(runtime(format!("{}: ranking line {} malformed", path.display(), i + 1)));
        };
        let rank: usize = rank
            .parse()
            .map_err(|_| runtime(format!("{}: bad rank on line {}", path.display(), i + 1)))?;
        let score: f64 = score
            .parse()
            .map_err(|_| runtime(format!("{}: bad score on line {}", path.display(), i + 1)))?;
        rebuilt.push_str(&format!("{},{},{:e}\n", rank, ngram, score));
    }
    if rebuilt != text {
        return Err(runtime(format!("{}: ranking round-trip mismatch", path.display())));
    }
    Ok(("ranking".to_string(), 1))
}

fn roundtrip_table(path: &Path, text: &str) -> CliResult<(String, u64)> {
    let dir = temp_dir()?;
    let copy = dir.path().join("table.txt");
    std::fs::write(&copy, text)?;
    if std::fs::read_to_string(&copy)? != text {
        return Err(runtime(format!("{}: table round-trip mismatch", path.display())));
    }
    Ok(("table".to_string(), 1))
}

fn roundtrip_presence(path: &Path) -> CliResult<(String, u64)> {
    let rows = read_presence(path)?;
    let dir = temp_dir()?;
    let copy = dir.path().join("presence.txt");
    write_presence(&copy, &rows)?;
    if read_presence(&copy)? != rows {
        return Err(runtime(format!("{}: presence round-trip mismatch", path.display())));
    }
    Ok(("presence".to_string(), 1))
}

fn roundtrip_linear_map(path: &Path, dict: Option<&Path>) -> CliResult<(String, u64)> {
    let Some(dict_path) = dict else {
        return Err(usage("--dict is required to round-trip map artifacts"));
    };
    let dict = Arc::new(read_dictionary(dict_path)?);
    let map = read_map(path, Arc::clone(&dict))?;
    let dir = temp_dir()?;
    let copy = dir.path().join("map.txt");
    write_map(&copy, &map)?;
    let again = read_map(&copy, dict)?;
    let same_bits = map
        .matrix()
        .data()
        .iter()
        .zip(again.matrix().data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_bits || map.diagnostics() != again.diagnostics() {
        return Err(runtime(format!("{}: map round-trip mismatch", path.display())));
    }
    Ok(("linear-map".to_string(), 1))
}

fn roundtrip_dictionary(path: &Path) -> CliResult<(String, u64)> {
    let dict = read_dictionary(path)
        .map_err(|e| runtime(format!("{}: unrecognized artifact ({e})", path.display())))?;
    let dir = temp_dir()?;
    let copy = dir.path().join("dict.txt");
    write_dictionary(&copy, &dict)?;
    let again = read_dictionary(&copy)?;
    let same = again.ngrams() == dict.ngrams()
        && (0..dict.len()).all(|i| dict.doc_freq(i) == again.doc_freq(i));
    if !same {
        return Err(runtime(format!("{}: dictionary round-trip mismatch", path.display())));
    }
    Ok(("dictionary".to_string(), 1))
}
