//! Document model, tokenization, vocabulary construction, synthetic
//! planted-phrase corpora, and stratified fold planning.
//!
//! The synthetic generator produces corpora whose labels are fully determined
//! by short token phrases planted into filler text. Phrase tokens come from a
//! pool disjoint from the filler vocabulary, so a rule matcher over the
//! planted phrases classifies a noise-free corpus perfectly — which is what
//! makes ground-truth checks of feature selection possible.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("document too short: length {doc_length} cannot hold {phrases} phrases of {phrase_length} tokens")]
    DocumentTooShort { doc_length: usize, phrases: usize, phrase_length: usize },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("stratified folds require k >= 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("stratified split needs at least 2 distinct classes")]
    SingleClass,
    #[error("class {class} has {count} documents, fewer than {k} folds")]
    ClassTooSmall { class: usize, count: usize, k: usize },
    #[error("line {line}: document tokenizes to nothing")]
    EmptyDocument { line: usize },
    #[error("line {line}: {source}")]
    MalformedLine { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A tokenized, labeled document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: usize,
    pub tokens: Vec<String>,
    pub label: usize,
}

/// Lowercases, replaces every non-alphanumeric character with a separator,
/// and splits. Total: whitespace-only input yields an empty sequence.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Returns true when `phrase` occurs as a contiguous subsequence of `tokens`.
pub fn contains_phrase<S: AsRef<str>, T: AsRef<str>>(tokens: &[S], phrase: &[T]) -> bool {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return false;
    }
    tokens
        .windows(phrase.len())
        .any(|w| w.iter().zip(phrase).all(|(a, b)| a.as_ref() == b.as_ref()))
}

/// Token string reserved for out-of-vocabulary words. The tokenizer strips
/// angle brackets, so no document token can collide with it.
pub const UNK_TOKEN: &str = "<unk>";

/// Token-to-id bijection with a reserved unknown-token sink at id 0.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds the bijection from an id-ordered token list. The first entry
    /// must be the unknown token.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, CorpusError> {
        if tokens.first().map(String::as_str) != Some(UNK_TOKEN) {
            return Err(CorpusError::InvalidSpec(format!(
                "vocabulary must start with {UNK_TOKEN}"
            )));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(CorpusError::InvalidSpec(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, ids })
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn unk_id(&self) -> usize {
        0
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Id-ordered token list, suitable for serialization.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }
}

/// Builds a vocabulary from every token with corpus frequency >= `min_count`.
/// Ids are assigned in descending frequency order, ties broken
/// lexicographically, after the reserved unknown token at id 0.
pub fn build_vocab(docs: &[Document], min_count: usize) -> Result<Vocabulary, CorpusError> {
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in docs {
        for t in &doc.tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> =
        counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let mut tokens = Vec::with_capacity(kept.len() + 1);
    tokens.push(UNK_TOKEN.to_string());
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

/// Parameters of the synthetic planted-phrase corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub docs_per_class: usize,
    pub doc_length: usize,
    pub phrases_per_class: usize,
    pub phrase_length: usize,
    pub filler_vocab_size: usize,
    /// Probability that a planted phrase is omitted from a document.
    pub noise_rate: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), CorpusError> {
        if self.num_classes < 2 {
            return Err(CorpusError::InvalidSpec("need at least 2 classes".into()));
        }
        if self.docs_per_class == 0 {
            return Err(CorpusError::InvalidSpec("docs_per_class must be positive".into()));
        }
        if !(3..=5).contains(&self.phrase_length) {
            return Err(CorpusError::InvalidSpec(format!(
                "phrase_length must be in [3, 5], got {}",
                self.phrase_length
            )));
        }
        if self.filler_vocab_size == 0 {
            return Err(CorpusError::InvalidSpec("filler_vocab_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(CorpusError::InvalidSpec(format!(
                "noise_rate must be a probability, got {}",
                self.noise_rate
            )));
        }
        if self.doc_length < self.phrases_per_class * self.phrase_length {
            return Err(CorpusError::DocumentTooShort {
                doc_length: self.doc_length,
                phrases: self.phrases_per_class,
                phrase_length: self.phrase_length,
            });
        }
        Ok(())
    }
}

/// A generated corpus together with its ground truth: the planted phrases of
/// each class, indexed `phrases[class][phrase][token]`.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: Vec<Document>,
    pub phrases: Vec<Vec<Vec<String>>>,
}

/// Generates filler documents with each class's phrases planted at random
/// positions with probability `1 - noise_rate`. Deterministic given the seed.
///
/// Each document is divided into `phrases_per_class` equal segments and
/// phrase `j` lands inside segment `j`, which keeps planted phrases from
/// overwriting each other. Phrase tokens are globally unique and disjoint
/// from the filler pool, so phrases are class-disjoint by construction.
pub fn generate_synth(spec: &SynthSpec) -> Result<SynthCorpus, CorpusError> {
    spec.validate()?;
    let filler: Vec<String> = (0..spec.filler_vocab_size).map(|i| format!("w{i:03}")).collect();
    let mut next_phrase_token = 0usize;
    let phrases: Vec<Vec<Vec<String>>> = (0..spec.num_classes)
        .map(|_| {
            (0..spec.phrases_per_class)
                .map(|_| {
                    (0..spec.phrase_length)
                        .map(|_| {
                            let t = format!("k{next_phrase_token:04}");
                            next_phrase_token += 1;
                            t
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let segment = if spec.phrases_per_class == 0 {
        spec.doc_length
    } else {
        spec.doc_length / spec.phrases_per_class
    };
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut docs = Vec::with_capacity(spec.num_classes * spec.docs_per_class);
    for class in 0..spec.num_classes {
        for _ in 0..spec.docs_per_class {
            let mut tokens: Vec<String> = (0..spec.doc_length)
                .map(|_| filler[rng.random_range(0..filler.len())].clone())
                .collect();
            for (j, phrase) in phrases[class].iter().enumerate() {
                if rng.random::<f64>() < spec.noise_rate {
                    continue;
                }
                let offset = j * segment + rng.random_range(0..=segment - spec.phrase_length);
                for (t, token) in phrase.iter().enumerate() {
                    tokens[offset + t] = token.clone();
                }
            }
            docs.push(Document { doc_id: docs.len(), tokens, label: class });
        }
    }
    Ok(SynthCorpus { docs, phrases })
}

/// Fraction of each class's per-fold training rows held out for validation.
const VALIDATION_FRACTION: f64 = 0.1;

/// Cross-validation plan: a test-fold assignment per document plus, for each
/// test fold, the training rows held out as the validation split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Test-fold index of each document.
    pub assignments: Vec<usize>,
    /// `validation[f]` lists the documents used for validation when fold `f`
    /// is the test fold; always a subset of that fold's training rows.
    pub validation: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn val_indices(&self, fold: usize) -> &[usize] {
        &self.validation[fold]
    }

    /// Training rows of `fold`: not in the test fold and not held out for
    /// validation.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let val = &self.validation[fold];
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold && !val.contains(&i))
            .collect()
    }
}

/// Plans a stratified k-fold split: per-class counts across folds differ by
/// at most one, and each fold's training rows carry a stratified
/// validation hold-out. Deterministic given the seed.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidFoldCount(k));
    }
    if labels.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(CorpusError::SingleClass);
    }
    for (&class, members) in &by_class {
        if members.len() < k {
            return Err(CorpusError::ClassTooSmall { class, count: members.len(), k });
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut assignments = vec![0usize; labels.len()];
    // Rotate the dealing offset between classes so remainder documents do not
    // all pile into the low folds.
    let mut offset = 0usize;
    for members in by_class.values() {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for (pos, &doc) in shuffled.iter().enumerate() {
            assignments[doc] = (offset + pos) % k;
        }
        offset = (offset + shuffled.len()) % k;
    }
    let mut validation = Vec::with_capacity(k);
    for fold in 0..k {
        let mut held_out = Vec::new();
        for members in by_class.values() {
            let mut train: Vec<usize> =
                members.iter().copied().filter(|&d| assignments[d] != fold).collect();
            train.shuffle(&mut rng);
            let n = train.len();
            // Keep at least one training row per class.
            let take = if n <= 1 {
                0
            } else {
                ((n as f64 * VALIDATION_FRACTION).round() as usize).clamp(1, n - 1)
            };
            held_out.extend(train.into_iter().take(take));
        }
        held_out.sort_unstable();
        validation.push(held_out);
    }
    Ok(FoldPlan { k, assignments, validation })
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    id: usize,
    text: String,
    label: usize,
}

/// Writes one `{"id", "text", "label"}` JSON object per document, tokens
/// space-joined.
pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    for doc in docs {
        let line = CorpusLine {
            id: doc.doc_id,
            text: doc.tokens.join(" "),
            label: doc.label,
        };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a JSONL corpus, tokenizing each document's text.
pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CorpusLine = serde_json::from_str(&line)
            .map_err(|source| CorpusError::MalformedLine { line: idx + 1, source })?;
        let tokens = tokenize(&parsed.text);
        if tokens.is_empty() {
            return Err(CorpusError::EmptyDocument { line: idx + 1 });
        }
        docs.push(Document { doc_id: parsed.id, tokens, label: parsed.label });
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(docs)
}

#[derive(Serialize, Deserialize)]
struct PhraseLine {
    class: usize,
    phrases: Vec<Vec<String>>,
}

/// Writes the planted-phrase sidecar: one `{"class", "phrases"}` object per
/// class.
pub fn write_phrases(path: &Path, phrases: &[Vec<Vec<String>>]) -> Result<(), CorpusError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (class, list) in phrases.iter().enumerate() {
        let line = PhraseLine { class, phrases: list.clone() };
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_phrases(path: &Path) -> Result<Vec<Vec<Vec<String>>>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut by_class: BTreeMap<usize, Vec<Vec<String>>> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PhraseLine = serde_json::from_str(&line)
            .map_err(|source| CorpusError::MalformedLine { line: idx + 1, source })?;
        by_class.insert(parsed.class, parsed.phrases);
    }
    Ok(by_class.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: usize, tokens: &[&str], label: usize) -> Document {
        Document {
            doc_id: id,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            label,
        }
    }

    #[test]
    fn tokenize_strips_punctuation_and_case() {
        assert_eq!(tokenize("Tumor: LEFT breast."), vec!["tumor", "left", "breast"]);
    }

    #[test]
    fn tokenize_empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t \n").is_empty());
    }

    #[test]
    fn tokenize_collapses_whitespace() {
        assert_eq!(tokenize("a  b\tc"), vec!["a", "b", "c"]);
    }

    #[test]
    fn tokenize_idempotent() {
        for text in ["Tumor: LEFT breast.", "a  b\tc", "x9 99x", "Mixed-CASE, with 3 numbers!"] {
            let once = tokenize(text);
            let twice = tokenize(&once.join(" "));
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn build_vocab_applies_threshold() {
        let docs = vec![doc(0, &["a", "a", "b"], 0), doc(1, &["a"], 1)];
        let v = build_vocab(&docs, 2).unwrap();
        assert_eq!(v.size(), 2);
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("b"), v.unk_id());
        let v1 = build_vocab(&docs, 1).unwrap();
        assert_eq!(v1.size(), 3);
    }

    #[test]
    fn build_vocab_breaks_frequency_ties_lexicographically() {
        let docs = vec![doc(0, &["b", "a"], 0), doc(1, &["a", "b"], 1)];
        let v = build_vocab(&docs, 1).unwrap();
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("b"), 2);
    }

    #[test]
    fn build_vocab_rejects_empty_corpus() {
        assert!(matches!(build_vocab(&[], 1), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn vocab_roundtrips_ids() {
        let docs = vec![doc(0, &["x", "y", "z", "y"], 0)];
        let v = build_vocab(&docs, 1).unwrap();
        for id in 0..v.size() {
            assert_eq!(v.id(v.token(id)), id);
        }
    }

    fn small_spec(noise: f64) -> SynthSpec {
        SynthSpec {
            num_classes: 2,
            docs_per_class: 5,
            doc_length: 30,
            phrases_per_class: 2,
            phrase_length: 3,
            filler_vocab_size: 10,
            noise_rate: noise,
            seed: 11,
        }
    }

    #[test]
    fn synth_noise_free_docs_contain_all_class_phrases() {
        let corpus = generate_synth(&small_spec(0.0)).unwrap();
        assert_eq!(corpus.docs.len(), 10);
        for d in &corpus.docs {
            for phrase in &corpus.phrases[d.label] {
                assert!(contains_phrase(&d.tokens, phrase), "doc {} missing phrase", d.doc_id);
            }
        }
    }

    #[test]
    fn synth_is_deterministic() {
        let a = generate_synth(&small_spec(0.3)).unwrap();
        let b = generate_synth(&small_spec(0.3)).unwrap();
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.phrases, b.phrases);
    }

    #[test]
    fn synth_full_noise_plants_nothing() {
        let corpus = generate_synth(&small_spec(1.0)).unwrap();
        for d in &corpus.docs {
            for class_phrases in &corpus.phrases {
                for phrase in class_phrases {
                    assert!(!contains_phrase(&d.tokens, phrase));
                }
            }
        }
    }

    #[test]
    fn synth_rejects_short_documents() {
        let mut spec = small_spec(0.0);
        spec.doc_length = 5; // 2 phrases * 3 tokens = 6 > 5
        assert!(matches!(
            generate_synth(&spec),
            Err(CorpusError::DocumentTooShort { .. })
        ));
    }

    #[test]
    fn synth_noise_free_corpus_is_rule_separable() {
        let corpus = generate_synth(&small_spec(0.0)).unwrap();
        let mut correct = 0;
        for d in &corpus.docs {
            let predicted = (0..corpus.phrases.len())
                .find(|&c| corpus.phrases[c].iter().any(|p| contains_phrase(&d.tokens, p)));
            if predicted == Some(d.label) {
                correct += 1;
            }
        }
        assert_eq!(correct, corpus.docs.len());
    }

    #[test]
    fn kfold_balances_small_example() {
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let plan = stratified_kfold(&labels, 2, 3).unwrap();
        for fold in 0..2 {
            let test = plan.test_indices(fold);
            assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 2);
            assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 2);
        }
    }

    #[test]
    fn kfold_rejects_single_fold() {
        assert!(matches!(
            stratified_kfold(&[0, 1], 1, 0),
            Err(CorpusError::InvalidFoldCount(1))
        ));
    }

    #[test]
    fn kfold_rejects_undersized_class() {
        let labels = [0, 0, 0, 1];
        match stratified_kfold(&labels, 2, 0) {
            Err(CorpusError::ClassTooSmall { class: 1, count: 1, k: 2 }) => {}
            other => panic!("expected class-too-small error, got {other:?}"),
        }
    }

    #[test]
    fn kfold_rejects_a_single_class() {
        assert!(matches!(
            stratified_kfold(&[3, 3, 3, 3], 2, 0),
            Err(CorpusError::SingleClass)
        ));
    }

    #[test]
    fn kfold_six_by_fifty_counts() {
        let labels: Vec<usize> = (0..6).flat_map(|c| std::iter::repeat_n(c, 50)).collect();
        let plan = stratified_kfold(&labels, 10, 7).unwrap();
        for fold in 0..10 {
            let test = plan.test_indices(fold);
            for class in 0..6 {
                assert_eq!(test.iter().filter(|&&i| labels[i] == class).count(), 5);
            }
        }
    }

    #[test]
    fn kfold_partitions_and_stratifies() {
        // Uneven class sizes exercise the remainder-balancing path.
        let labels: Vec<usize> =
            (0..23).map(|_| 0).chain((0..17).map(|_| 1)).chain((0..11).map(|_| 2)).collect();
        let plan = stratified_kfold(&labels, 4, 9).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for fold in 0..4 {
            for i in plan.test_indices(fold) {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "folds must partition the corpus");
        for class in 0..3 {
            let counts: Vec<usize> = (0..4)
                .map(|f| {
                    plan.test_indices(f).iter().filter(|&&i| labels[i] == class).count()
                })
                .collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            assert!(spread <= 1, "class {class} fold counts {counts:?}");
        }
    }

    #[test]
    fn kfold_validation_rows_come_from_training() {
        let labels: Vec<usize> = (0..4).flat_map(|c| std::iter::repeat_n(c, 30)).collect();
        let plan = stratified_kfold(&labels, 5, 21).unwrap();
        for fold in 0..5 {
            let val = plan.val_indices(fold);
            assert!(!val.is_empty());
            assert!(val.iter().all(|&i| plan.assignments[i] != fold));
            let train = plan.train_indices(fold);
            assert!(train.iter().all(|i| !val.contains(i)));
            // Test + train + val cover everything exactly once.
            assert_eq!(train.len() + val.len() + plan.test_indices(fold).len(), labels.len());
        }
    }

    #[test]
    fn kfold_is_deterministic() {
        let labels: Vec<usize> = (0..3).flat_map(|c| std::iter::repeat_n(c, 20)).collect();
        let a = stratified_kfold(&labels, 5, 42).unwrap();
        let b = stratified_kfold(&labels, 5, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.validation, b.validation);
    }

    #[test]
    fn corpus_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let corpus = generate_synth(&small_spec(0.2)).unwrap();
        write_corpus(&path, &corpus.docs).unwrap();
        let back = read_corpus(&path).unwrap();
        assert_eq!(back, corpus.docs);

        let phrase_path = dir.path().join("phrases.jsonl");
        write_phrases(&phrase_path, &corpus.phrases).unwrap();
        assert_eq!(read_phrases(&phrase_path).unwrap(), corpus.phrases);
    }

    #[test]
    fn contains_phrase_edge_cases() {
        let tokens = ["a", "b", "c"];
        assert!(contains_phrase(&tokens, &["a", "b", "c"]));
        assert!(!contains_phrase(&tokens, &["a", "b", "c", "d"]));
        assert!(!contains_phrase::<_, &str>(&tokens, &[]));
        assert!(!contains_phrase(&tokens, &["b", "a"]));
    }
}
