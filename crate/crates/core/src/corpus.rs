//! Domain types, gloss vocabulary construction, frequency-aware BCE weights,
//! and on-disk persistence for corpora and feature matrices.
//!
//! A corpus is a JSON Lines file (`corpus.jsonl`, one record per line) plus
//! one binary feature file per record, addressed by a path stored in the
//! record and resolved relative to the corpus directory.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// File name of the record list inside a corpus directory.
pub const CORPUS_FILE: &str = "corpus.jsonl";
/// File name of the frame-level oracle labels inside a corpus directory.
pub const ORACLE_FILE: &str = "oracle.jsonl";

const FEATURE_MAGIC: &[u8; 4] = b"GLFT";
const FEATURE_VERSION: u32 = 1;

/// One sample: spoken-language text, pseudo glosses in their various states,
/// and a relative path to the frame features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub text: Vec<String>,
    pub llm_gloss: Vec<String>,
    pub true_gloss: Option<Vec<String>>,
    pub reordered_gloss: Option<Vec<String>>,
    /// Relative path to the feature file; empty when no features exist yet.
    pub features: String,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>) -> Self {
        SampleRecord {
            id: id.into(),
            text: Vec::new(),
            llm_gloss: Vec::new(),
            true_gloss: None,
            reordered_gloss: None,
            features: String::new(),
        }
    }
}

/// Frame-feature sequence: `frames x dim` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(Error::Shape(format!(
                "feature matrix must be at least 1x1, got {frames}x{dim}"
            )));
        }
        if data.len() != frames * dim {
            return Err(Error::Shape(format!(
                "feature matrix {frames}x{dim} needs {} values, got {}",
                frames * dim,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Shape(
                "feature matrix contains non-finite values".into(),
            ));
        }
        Ok(FeatureMatrix { frames, dim, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Write in the `GLFT` binary layout: magic, u32 version, u32 frames,
    /// u32 dim, then `frames * dim` little-endian f32 values row-major.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(FEATURE_MAGIC)?;
        out.write_all(&FEATURE_VERSION.to_le_bytes())?;
        out.write_all(&(self.frames as u32).to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let format_err = |reason: &str| Error::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut file = BufReader::new(fs::File::open(path)?);
        let mut header = [0u8; 16];
        file.read_exact(&mut header)
            .map_err(|_| format_err("truncated header"))?;
        if &header[0..4] != FEATURE_MAGIC {
            return Err(format_err("bad magic, expected GLFT"));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != FEATURE_VERSION {
            return Err(format_err(&format!("unsupported version {version}")));
        }
        let frames = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut raw = vec![
            0u8;
            frames
                .checked_mul(dim)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| format_err("size overflow"),)?
        ];
        file.read_exact(&mut raw)
            .map_err(|_| format_err("truncated data section"))?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureMatrix::new(frames, dim, data)
    }
}

/// Frame-wise probability distribution over the gloss vocabulary:
/// `frames x classes`, every row on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

/// Tolerance for the row-sum invariant.
pub const ROW_SUM_TOL: f64 = 1e-6;

impl ProbMatrix {
    pub fn new(frames: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * classes {
            return Err(Error::Shape(format!(
                "probability matrix {frames}x{classes} needs {} values, got {}",
                frames * classes,
                data.len()
            )));
        }
        for t in 0..frames {
            let row = &data[t * classes..(t + 1) * classes];
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::Shape(format!(
                    "row {t} has negative or non-finite entries"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Shape(format!("row {t} sums to {sum}, not 1")));
            }
        }
        Ok(ProbMatrix {
            frames,
            classes,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.classes..(t + 1) * self.classes]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Global pseudo-gloss vocabulary with per-gloss draft frequencies and
/// frequency-aware BCE weights.
///
/// Ids are dense `0..len()` and assigned by lexicographic token order, so a
/// vocabulary built from the same corpus is identical across runs and
/// platforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlossVocabulary {
    symbols: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    freq: Vec<u64>,
    weights: Vec<f64>,
}

impl GlossVocabulary {
    fn from_parts(symbols: Vec<String>, freq: Vec<u64>, weights: Vec<f64>) -> Self {
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        GlossVocabulary {
            symbols,
            index,
            freq,
            weights,
        }
    }

    /// Number of distinct glosses.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn freq(&self, id: usize) -> u64 {
        self.freq[id]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Map tokens to ids, failing on the first token outside the vocabulary.
    pub fn ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| {
                self.id(t)
                    .ok_or_else(|| Error::UnknownToken { token: t.clone() })
            })
            .collect()
    }
}

/// Build the global vocabulary from the raw LLM gloss drafts of `records`.
///
/// Frequencies count token occurrences (a token repeated within one draft
/// counts each time); ids follow lexicographic token order. Weights are
/// initialized to 1 until [`compute_weights`] is applied.
pub fn build_vocabulary(records: &[SampleRecord]) -> Result<GlossVocabulary> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for record in records {
        if record.llm_gloss.is_empty() {
            return Err(Error::Record {
                id: record.id.clone(),
                reason: "empty llm_gloss".into(),
            });
        }
        for token in &record.llm_gloss {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut symbols: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
    symbols.sort_unstable();
    let freq: Vec<u64> = symbols.iter().map(|s| counts[s.as_str()]).collect();
    let weights = vec![1.0; symbols.len()];
    Ok(GlossVocabulary::from_parts(symbols, freq, weights))
}

/// Frequency-aware reweighting: `w_k = w_base + ln(f_max / f_k)`.
///
/// The most frequent gloss gets exactly `w_base`; rarer glosses get larger
/// weights, monotone in `f_max / f_k`.
pub fn compute_weights(vocab: GlossVocabulary, w_base: f64) -> Result<GlossVocabulary> {
    if !w_base.is_finite() || w_base <= 0.0 {
        return Err(Error::Config(format!(
            "w_base must be positive, got {w_base}"
        )));
    }
    let f_max = *vocab.freq.iter().max().expect("vocabulary is never empty") as f64;
    let weights = vocab
        .freq
        .iter()
        .map(|&f| w_base + (f_max / f as f64).ln())
        .collect();
    Ok(GlossVocabulary { weights, ..vocab })
}

/// A record list together with the feature matrix of every record.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<SampleRecord>,
    /// Parallel to `records`.
    pub features: Vec<FeatureMatrix>,
}

impl Corpus {
    pub fn new(records: Vec<SampleRecord>, features: Vec<FeatureMatrix>) -> Result<Self> {
        if records.len() != features.len() {
            return Err(Error::Shape(format!(
                "{} records but {} feature matrices",
                records.len(),
                features.len()
            )));
        }
        Ok(Corpus { records, features })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Write a record list as JSON Lines.
pub fn write_records(path: &Path, records: &[SampleRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a JSON Lines record list, reporting the 1-based line number of the
/// first malformed line.
pub fn read_records(path: &Path) -> Result<Vec<SampleRecord>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::CorpusLine {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Save records and their feature files under `dir`.
///
/// Records that do not yet name a feature path get `features/<id>.glft`.
pub fn save_corpus(dir: &Path, corpus: &Corpus) -> Result<Vec<SampleRecord>> {
    fs::create_dir_all(dir)?;
    let mut records = corpus.records.clone();
    for (record, features) in records.iter_mut().zip(&corpus.features) {
        if record.features.is_empty() {
            record.features = format!("features/{}.glft", record.id);
        }
        features.write_to(&dir.join(&record.features))?;
    }
    write_records(&dir.join(CORPUS_FILE), &records)?;
    Ok(records)
}

/// Load records and all referenced feature files from `dir`.
///
/// A missing or unreadable feature file is reported against the record id.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let records = read_records(&dir.join(CORPUS_FILE))?;
    let mut features = Vec::with_capacity(records.len());
    for record in &records {
        if record.features.is_empty() {
            return Err(Error::Feature {
                id: record.id.clone(),
                path: dir.to_path_buf(),
                reason: "record has no feature path".into(),
            });
        }
        let path = dir.join(&record.features);
        let matrix = FeatureMatrix::read_from(&path).map_err(|e| Error::Feature {
            id: record.id.clone(),
            path: path.clone(),
            reason: e.to_string(),
        })?;
        features.push(matrix);
    }
    Corpus::new(records, features)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OracleLine {
    id: String,
    frame_gloss_ids: Vec<usize>,
}

/// Write per-record frame-level gloss ids (`oracle.jsonl`).
pub fn write_oracle(path: &Path, ids: &[String], labels: &[Vec<usize>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    for (id, frame_gloss_ids) in ids.iter().zip(labels) {
        let line = OracleLine {
            id: id.clone(),
            frame_gloss_ids: frame_gloss_ids.clone(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Read `oracle.jsonl` into an id -> frame labels map (insertion ordered as
/// a vec of pairs).
pub fn read_oracle(path: &Path) -> Result<Vec<(String, Vec<usize>)>> {
    let file = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: OracleLine = serde_json::from_str(&line).map_err(|e| Error::CorpusLine {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push((parsed.id, parsed.frame_gloss_ids));
    }
    Ok(out)
}
