//! N-gram dictionary construction with document-frequency filtering, and
//! binary presence featurization of documents against a fixed dictionary.
//!
//! Presence is binary by design: a dictionary n-gram contributes one feature
//! that is set when the n-gram occurs contiguously in the document, no matter
//! how many times. Counts and tf-idf weighting are deliberately out of scope.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::Document;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid n-gram range [{n_min}, {n_max}]")]
    InvalidRange { n_min: usize, n_max: usize },
    #[error("dictionary entries must be unique and lexicographically sorted (entry {0})")]
    UnsortedEntries(usize),
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// All contiguous token subsequences of lengths `n_min..=n_max`, de-duplicated
/// and lexicographically ordered.
pub fn extract_ngrams(tokens: &[String], n_min: usize, n_max: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for n in n_min..=n_max {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            out.insert(window.to_vec());
        }
    }
    out
}

/// Ordered n-gram dictionary with per-entry document frequencies.
#[derive(Debug, Clone)]
pub struct NgramDictionary {
    ngrams: Vec<Vec<String>>,
    doc_freq: Vec<usize>,
    lengths: BTreeSet<usize>,
    index: HashMap<Vec<String>, usize>,
}

impl NgramDictionary {
    /// Builds a dictionary from pre-sorted entries. Entries must be strictly
    /// increasing lexicographically.
    pub fn from_entries(
        ngrams: Vec<Vec<String>>,
        doc_freq: Vec<usize>,
    ) -> Result<Self, NgramError> {
        assert_eq!(ngrams.len(), doc_freq.len(), "entry/frequency length mismatch");
        for (i, pair) in ngrams.windows(2).enumerate() {
            if pair[0] >= pair[1] {
                return Err(NgramError::UnsortedEntries(i + 1));
            }
        }
        let lengths = ngrams.iter().map(Vec::len).collect();
        let index = ngrams.iter().enumerate().map(|(i, g)| (g.clone(), i)).collect();
        Ok(NgramDictionary { ngrams, doc_freq, lengths, index })
    }

    pub fn len(&self) -> usize {
        self.ngrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngrams.is_empty()
    }

    pub fn ngram(&self, i: usize) -> &[String] {
        &self.ngrams[i]
    }

    pub fn ngrams(&self) -> &[Vec<String>] {
        &self.ngrams
    }

    pub fn doc_freq(&self, i: usize) -> usize {
        self.doc_freq[i]
    }

    pub fn position(&self, ngram: &[String]) -> Option<usize> {
        self.index.get(ngram).copied()
    }
}

/// Collects every n-gram whose document frequency reaches `min_df`.
/// Frequencies count each document at most once per n-gram.
pub fn build_dictionary(
    docs: &[Document],
    n_min: usize,
    n_max: usize,
    min_df: usize,
) -> Result<NgramDictionary, NgramError> {
    if docs.is_empty() {
        return Err(NgramError::EmptyCorpus);
    }
    if n_min == 0 || n_min > n_max {
        return Err(NgramError::InvalidRange { n_min, n_max });
    }
    let mut df: BTreeMap<Vec<String>, usize> = BTreeMap::new();
    for doc in docs {
        for gram in extract_ngrams(&doc.tokens, n_min, n_max) {
            *df.entry(gram).or_insert(0) += 1;
        }
    }
    let mut ngrams = Vec::new();
    let mut doc_freq = Vec::new();
    for (gram, count) in df {
        if count >= min_df {
            ngrams.push(gram);
            doc_freq.push(count);
        }
    }
    NgramDictionary::from_entries(ngrams, doc_freq)
}

/// Sparse binary feature vector: the sorted dictionary positions present in
/// one document, plus the total dictionary size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceVector {
    indices: Vec<usize>,
    p: usize,
}

impl PresenceVector {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Self {
        indices.sort_unstable();
        indices.dedup();
        assert!(indices.last().is_none_or(|&i| i < p), "index out of range");
        PresenceVector { indices, p }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn dict_size(&self) -> usize {
        self.p
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.p];
        for &i in &self.indices {
            v[i] = 1.0;
        }
        v
    }

    /// Dense 0/1 values restricted to a subset of dictionary positions, in
    /// the order given.
    pub fn dense_subset(&self, positions: &[usize]) -> Vec<f64> {
        positions.iter().map(|&i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }
}

/// Marks each dictionary n-gram that occurs contiguously in the document.
pub fn presence_vector(doc: &Document, dict: &NgramDictionary) -> PresenceVector {
    let mut indices = Vec::new();
    for &n in &dict.lengths {
        if n > doc.tokens.len() {
            continue;
        }
        for window in doc.tokens.windows(n) {
            if let Some(i) = dict.index.get(window) {
                indices.push(*i);
            }
        }
    }
    PresenceVector::new(indices, dict.len())
}

/// Writes one n-gram per line: document frequency, then space-joined tokens.
pub fn write_dictionary(path: &Path, dict: &NgramDictionary) -> Result<(), NgramError> {
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..dict.len() {
        writeln!(out, "{} {}", dict.doc_freq(i), dict.ngram(i).join(" "))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_dictionary(path: &Path) -> Result<NgramDictionary, NgramError> {
    let reader = BufReader::new(File::open(path)?);
    let mut ngrams = Vec::new();
    let mut doc_freq = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let df: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| NgramError::MalformedLine {
                line: idx + 1,
                reason: "expected leading document frequency".into(),
            })?;
        let gram: Vec<String> = parts.map(str::to_string).collect();
        if gram.is_empty() {
            return Err(NgramError::MalformedLine {
                line: idx + 1,
                reason: "n-gram has no tokens".into(),
            });
        }
        ngrams.push(gram);
        doc_freq.push(df);
    }
    NgramDictionary::from_entries(ngrams, doc_freq)
}

/// Writes presence rows as a sparse triplet file: a `rows cols nnz` header,
/// then one `row col 1` line per set feature.
pub fn write_presence(path: &Path, rows: &[PresenceVector]) -> Result<(), NgramError> {
    let p = rows.first().map_or(0, PresenceVector::dict_size);
    assert!(rows.iter().all(|r| r.dict_size() == p), "inconsistent dictionary sizes");
    let nnz: usize = rows.iter().map(|r| r.indices.len()).sum();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {} {}", rows.len(), p, nnz)?;
    for (i, row) in rows.iter().enumerate() {
        for &j in &row.indices {
            writeln!(out, "{i} {j} 1")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_presence(path: &Path) -> Result<Vec<PresenceVector>, NgramError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(NgramError::MalformedLine {
        line: 1,
        reason: "missing header".into(),
    })?;
    let header = header?;
    let dims: Vec<usize> = header.split_whitespace().filter_map(|s| s.parse().ok()).collect();
    let [n, p, nnz] = dims[..] else {
        return Err(NgramError::MalformedLine {
            line: 1,
            reason: format!("expected 'rows cols nnz' header, got {header:?}"),
        });
    };
    let mut indices: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut seen = 0usize;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<usize> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        let [row, col, one] = fields[..] else {
            return Err(NgramError::MalformedLine {
                line: idx + 1,
                reason: "expected 'row col 1'".into(),
            });
        };
        if row >= n || col >= p || one != 1 {
            return Err(NgramError::MalformedLine {
                line: idx + 1,
                reason: format!("triplet ({row}, {col}, {one}) out of range for {n}x{p}"),
            });
        }
        indices[row].push(col);
        seen += 1;
    }
    if seen != nnz {
        return Err(NgramError::MalformedLine {
            line: 1,
            reason: format!("header declares {nnz} entries, file has {seen}"),
        });
    }
    Ok(indices.into_iter().map(|ix| PresenceVector::new(ix, p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn doc(id: usize, tokens: &[&str]) -> Document {
        Document {
            doc_id: id,
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            label: 0,
        }
    }

    fn grams(list: &[&[&str]]) -> Vec<Vec<String>> {
        list.iter().map(|g| g.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn extract_enumerates_windows() {
        let d = doc(0, &["a", "b", "c", "d"]);
        let got = extract_ngrams(&d.tokens, 3, 3);
        let expected: BTreeSet<Vec<String>> =
            grams(&[&["a", "b", "c"], &["b", "c", "d"]]).into_iter().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn extract_short_document_is_empty() {
        let d = doc(0, &["a", "b"]);
        assert!(extract_ngrams(&d.tokens, 3, 5).is_empty());
    }

    #[test]
    fn extract_deduplicates() {
        let d = doc(0, &["a", "a", "a", "a"]);
        let got = extract_ngrams(&d.tokens, 3, 4);
        let expected: BTreeSet<Vec<String>> =
            grams(&[&["a", "a", "a"], &["a", "a", "a", "a"]]).into_iter().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn dictionary_keeps_frequency_boundary() {
        let docs = vec![
            doc(0, &["a", "b", "c"]),
            doc(1, &["a", "b", "c", "x"]),
            doc(2, &["z", "a", "b", "c"]),
        ];
        let dict = build_dictionary(&docs, 3, 3, 3).unwrap();
        let abc: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        assert_eq!(dict.position(&abc), Some(dict.ngrams().iter().position(|g| *g == abc).unwrap()));
        assert_eq!(dict.doc_freq(dict.position(&abc).unwrap()), 3);
    }

    #[test]
    fn dictionary_discards_below_threshold() {
        // (x, y, z) appears in two documents; a threshold of 3 discards it.
        let docs = vec![
            doc(0, &["x", "y", "z"]),
            doc(1, &["x", "y", "z"]),
            doc(2, &["q", "r", "s"]),
        ];
        let dict = build_dictionary(&docs, 3, 3, 3).unwrap();
        assert!(dict.is_empty());
        let loose = build_dictionary(&docs, 3, 3, 2).unwrap();
        assert_eq!(loose.len(), 1);
    }

    #[test]
    fn dictionary_with_unit_threshold_is_union() {
        let docs =
            vec![doc(0, &["a", "b", "c", "d"]), doc(1, &["c", "d", "e"]), doc(2, &["f", "g", "h"])];
        let dict = build_dictionary(&docs, 3, 3, 1).unwrap();
        let mut union = BTreeSet::new();
        for d in &docs {
            union.extend(extract_ngrams(&d.tokens, 3, 3));
        }
        assert_eq!(dict.ngrams().to_vec(), union.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn dictionary_is_sorted_and_deterministic() {
        let docs = vec![
            doc(0, &["m", "n", "o", "a", "b", "c"]),
            doc(1, &["a", "b", "c", "m", "n", "o"]),
        ];
        let d1 = build_dictionary(&docs, 3, 4, 1).unwrap();
        let d2 = build_dictionary(&docs, 3, 4, 1).unwrap();
        assert_eq!(d1.ngrams(), d2.ngrams());
        for pair in d1.ngrams().windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn presence_marks_contiguous_matches() {
        let d = doc(0, &["a", "b", "c", "b", "c", "d"]);
        let dict = NgramDictionary::from_entries(
            grams(&[&["a", "b", "c"], &["b", "c", "b"], &["c", "d", "e"]]),
            vec![1, 1, 1],
        )
        .unwrap();
        let pv = presence_vector(&d, &dict);
        assert_eq!(pv.indices(), &[0, 1]);
    }

    #[test]
    fn presence_empty_overlap() {
        let d = doc(0, &["q", "r", "s"]);
        let dict =
            NgramDictionary::from_entries(grams(&[&["a", "b", "c"]]), vec![1]).unwrap();
        assert!(presence_vector(&d, &dict).indices().is_empty());
    }

    #[test]
    fn presence_is_binary_under_repetition() {
        let d = doc(0, &["a", "b", "c", "a", "b", "c", "a", "b", "c"]);
        let dict =
            NgramDictionary::from_entries(grams(&[&["a", "b", "c"]]), vec![1]).unwrap();
        let pv = presence_vector(&d, &dict);
        assert_eq!(pv.indices(), &[0]);
    }

    #[test]
    fn presence_grows_monotonically_with_appended_tokens() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let alphabet = ["a", "b", "c", "d"];
        for _ in 0..20 {
            let tokens: Vec<String> = (0..12)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
                .collect();
            let base = doc(0, &tokens.iter().map(String::as_str).collect::<Vec<_>>());
            let dict = build_dictionary(&[base.clone()], 3, 4, 1).unwrap();
            let before = presence_vector(&base, &dict);
            let mut extended = base.clone();
            extended.tokens.push("e".to_string());
            extended.tokens.push("a".to_string());
            let after = presence_vector(&extended, &dict);
            assert!(before.indices().iter().all(|i| after.contains(*i)));
        }
    }

    #[test]
    fn presence_agrees_with_subsequence_scan() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let alphabet = ["a", "b", "c"];
        let docs: Vec<Document> = (0..8)
            .map(|i| {
                let tokens: Vec<String> = (0..10)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
                    .collect();
                Document { doc_id: i, tokens, label: 0 }
            })
            .collect();
        let dict = build_dictionary(&docs, 3, 4, 2).unwrap();
        for d in &docs {
            let pv = presence_vector(d, &dict);
            for i in 0..dict.len() {
                let direct = crate::corpus::contains_phrase(&d.tokens, dict.ngram(i));
                assert_eq!(pv.contains(i), direct, "doc {} entry {i}", d.doc_id);
            }
        }
    }

    #[test]
    fn dictionary_file_roundtrip() {
        let docs = vec![
            doc(0, &["a", "b", "c", "d", "e"]),
            doc(1, &["b", "c", "d", "e", "f"]),
            doc(2, &["a", "b", "c", "x", "y"]),
        ];
        let dict = build_dictionary(&docs, 3, 4, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dict.txt");
        write_dictionary(&path, &dict).unwrap();
        let back = read_dictionary(&path).unwrap();
        assert_eq!(back.ngrams(), dict.ngrams());
        for i in 0..dict.len() {
            assert_eq!(back.doc_freq(i), dict.doc_freq(i));
        }
    }

    #[test]
    fn presence_file_roundtrip() {
        let rows = vec![
            PresenceVector::new(vec![2, 0], 5),
            PresenceVector::new(vec![], 5),
            PresenceVector::new(vec![4], 5),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("presence.txt");
        write_presence(&path, &rows).unwrap();
        let back = read_presence(&path).unwrap();
        assert_eq!(back, rows);
    }
}
