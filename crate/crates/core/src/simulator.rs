//! Synthetic corpus generator with known gloss order and frame alignments.
//!
//! Every record is produced by a pure function of `(config, record index)`:
//! the master seed is expanded into one ChaCha20 stream per record, so
//! corpora are reproducible across runs and record generation order.
//!
//! Frames for a gloss are its unit-vector embedding plus isotropic Gaussian
//! noise; the LLM draft is the true gloss corrupted by deletions, insertions,
//! and one left-to-right adjacent-swap pass, which models drafts that follow
//! spoken-language order instead of sign order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{build_vocabulary, Corpus, FeatureMatrix, GlossVocabulary, SampleRecord};
use crate::error::{Error, Result};

/// The only supported generator name; kept in the config file so corpora
/// stay reproducible across implementations.
pub const RNG_NAME: &str = "chacha20";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Size of the synthetic gloss vocabulary (K).
    pub vocab_size: usize,
    /// Feature dimension (D).
    pub feature_dim: usize,
    pub num_samples: usize,
    /// Inclusive range for the number of distinct glosses per video.
    pub glosses_per_video: (usize, usize),
    /// Inclusive range for the duration of each gloss, in frames.
    pub frames_per_gloss: (usize, usize),
    pub noise_sigma: f64,
    /// Probability that each adjacent pair is swapped in one
    /// left-to-right pass over the draft.
    pub disorder: f64,
    pub p_insert: f64,
    pub p_delete: f64,
    pub seed: u64,
    pub rng: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            vocab_size: 20,
            feature_dim: 64,
            num_samples: 200,
            glosses_per_video: (4, 8),
            frames_per_gloss: (2, 4),
            noise_sigma: 0.1,
            disorder: 0.5,
            p_insert: 0.0,
            p_delete: 0.0,
            seed: crate::DEFAULT_SEED,
            rng: RNG_NAME.to_string(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, reason: String| Err(Error::Config(format!("sim.{field}: {reason}")));
        if self.vocab_size == 0 {
            return bad("vocab_size", "must be at least 1".into());
        }
        if self.feature_dim == 0 {
            return bad("feature_dim", "must be at least 1".into());
        }
        if self.num_samples == 0 {
            return bad("num_samples", "must be at least 1".into());
        }
        let (glo, ghi) = self.glosses_per_video;
        if glo == 0 || glo > ghi {
            return bad(
                "glosses_per_video",
                format!("range [{glo}, {ghi}] is empty"),
            );
        }
        if ghi > self.vocab_size {
            return bad(
                "glosses_per_video",
                format!("upper bound {ghi} exceeds vocab_size {}", self.vocab_size),
            );
        }
        let (flo, fhi) = self.frames_per_gloss;
        if flo == 0 || flo > fhi {
            return bad("frames_per_gloss", format!("range [{flo}, {fhi}] is empty"));
        }
        for (field, p) in [
            ("disorder", self.disorder),
            ("p_insert", self.p_insert),
            ("p_delete", self.p_delete),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(field, format!("{p} is not a probability"));
            }
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return bad(
                "noise_sigma",
                format!("{} must be finite and nonnegative", self.noise_sigma),
            );
        }
        if self.rng != RNG_NAME {
            return bad(
                "rng",
                format!("unsupported generator {:?}, use {RNG_NAME:?}", self.rng),
            );
        }
        Ok(())
    }
}

/// Everything a simulation produces: the corpus, the vocabulary its drafts
/// induce, and the true gloss id of every frame of every record.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub corpus: Corpus,
    pub vocab: GlossVocabulary,
    /// Per record: one vocabulary id per frame.
    pub oracle: Vec<Vec<usize>>,
    /// Unit-vector gloss embeddings, one per vocabulary id.
    pub embeddings: Vec<Vec<f64>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gloss_token(id: usize, width: usize) -> String {
    format!("G{id:0width$}")
}

fn token_width(vocab_size: usize) -> usize {
    format!("{}", vocab_size.saturating_sub(1)).len().max(3)
}

/// Sample random unit vectors, one per gloss id.
pub fn gloss_embeddings<R: Rng>(
    vocab_size: usize,
    feature_dim: usize,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..vocab_size)
        .map(|_| loop {
            let v: Vec<f64> = (0..feature_dim).map(|_| normal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-9 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Corrupt a gloss sequence: deletions, then insertions drawn uniformly from
/// `vocab_tokens`, then one left-to-right adjacent-swap pass. If deletions
/// empty the sequence, one uniformly chosen original token is retained.
pub fn scramble<R: Rng>(
    gloss: &[String],
    disorder: f64,
    p_insert: f64,
    p_delete: f64,
    vocab_tokens: &[String],
    rng: &mut R,
) -> Vec<String> {
    assert!(!gloss.is_empty(), "scramble needs a nonempty gloss");
    let mut kept: Vec<String> = gloss
        .iter()
        .filter(|_| !rng.random_bool(p_delete))
        .cloned()
        .collect();
    if kept.is_empty() {
        kept.push(gloss[rng.random_range(0..gloss.len())].clone());
    }
    let mut out = Vec::with_capacity(kept.len() + 2);
    for token in kept {
        if rng.random_bool(p_insert) {
            out.push(vocab_tokens[rng.random_range(0..vocab_tokens.len())].clone());
        }
        out.push(token);
    }
    if rng.random_bool(p_insert) {
        out.push(vocab_tokens[rng.random_range(0..vocab_tokens.len())].clone());
    }
    for i in 0..out.len().saturating_sub(1) {
        if rng.random_bool(disorder) {
            out.swap(i, i + 1);
        }
    }
    out
}

/// Emit frame features for a gloss sequence: `durations[i]` frames of
/// `embeddings[gloss_ids[i]]` plus iid Gaussian noise per coordinate.
pub fn emit_features<R: Rng>(
    gloss_ids: &[usize],
    durations: &[usize],
    embeddings: &[Vec<f64>],
    noise_sigma: f64,
    rng: &mut R,
) -> Result<FeatureMatrix> {
    if gloss_ids.len() != durations.len() {
        return Err(Error::Shape(format!(
            "{} glosses but {} durations",
            gloss_ids.len(),
            durations.len()
        )));
    }
    if let Some(&bad) = gloss_ids.iter().find(|&&g| g >= embeddings.len()) {
        return Err(Error::Shape(format!(
            "gloss id {bad} has no embedding (only {} available)",
            embeddings.len()
        )));
    }
    let dim = embeddings.first().map_or(0, Vec::len);
    let noise =
        Normal::new(0.0, noise_sigma).map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;
    let frames: usize = durations.iter().sum();
    let mut data = Vec::with_capacity(frames * dim);
    for (&gloss, &duration) in gloss_ids.iter().zip(durations) {
        for _ in 0..duration {
            for &coordinate in &embeddings[gloss] {
                data.push((coordinate + noise.sample(rng)) as f32);
            }
        }
    }
    FeatureMatrix::new(frames, dim, data)
}

struct RecordDraw {
    record: SampleRecord,
    features: FeatureMatrix,
    frame_labels: Vec<usize>,
}

/// Generate record `index` as a pure function of the config.
fn generate_record(
    config: &SimConfig,
    tokens: &[String],
    embeddings: &[Vec<f64>],
    index: usize,
) -> Result<RecordDraw> {
    let mut rng = stream_rng(config.seed, 1 + index as u64);
    let (glo, ghi) = config.glosses_per_video;
    let (flo, fhi) = config.frames_per_gloss;
    let count = rng.random_range(glo..=ghi);
    let gloss_ids: Vec<usize> =
        rand::seq::index::sample(&mut rng, config.vocab_size, count).into_vec();
    let durations: Vec<usize> = (0..count).map(|_| rng.random_range(flo..=fhi)).collect();
    let features = emit_features(
        &gloss_ids,
        &durations,
        embeddings,
        config.noise_sigma,
        &mut rng,
    )?;

    let true_gloss: Vec<String> = gloss_ids.iter().map(|&g| tokens[g].clone()).collect();
    let llm_gloss = scramble(
        &true_gloss,
        config.disorder,
        config.p_insert,
        config.p_delete,
        tokens,
        &mut rng,
    );
    let frame_labels: Vec<usize> = gloss_ids
        .iter()
        .zip(&durations)
        .flat_map(|(&g, &d)| std::iter::repeat_n(g, d))
        .collect();

    let id = format!("sim{index:05}");
    let record = SampleRecord {
        text: llm_gloss.iter().map(|t| t.to_lowercase()).collect(),
        llm_gloss,
        true_gloss: Some(true_gloss),
        reordered_gloss: None,
        features: format!("features/{id}.glft"),
        id,
    };
    Ok(RecordDraw {
        record,
        features,
        frame_labels,
    })
}

/// Generate a full synthetic corpus.
///
/// The returned vocabulary is built from the LLM drafts (the same
/// construction downstream training uses); since synthetic tokens sort
/// lexicographically by id, its ids coincide with the generator ids used in
/// `oracle`. A draft corpus that fails to cover some vocabulary token is
/// rejected rather than silently renumbered.
pub fn generate_corpus(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let tokens: Vec<String> = {
        let width = token_width(config.vocab_size);
        (0..config.vocab_size)
            .map(|id| gloss_token(id, width))
            .collect()
    };
    let mut master = stream_rng(config.seed, 0);
    let embeddings = gloss_embeddings(config.vocab_size, config.feature_dim, &mut master);
    for a in 0..embeddings.len() {
        for b in (a + 1)..embeddings.len() {
            if embeddings[a] == embeddings[b] {
                return Err(Error::Config(format!(
                    "gloss embeddings {a} and {b} collide; change sim.seed"
                )));
            }
        }
    }

    let mut records = Vec::with_capacity(config.num_samples);
    let mut features = Vec::with_capacity(config.num_samples);
    let mut oracle = Vec::with_capacity(config.num_samples);
    for index in 0..config.num_samples {
        let draw = generate_record(config, &tokens, &embeddings, index)?;
        records.push(draw.record);
        features.push(draw.features);
        oracle.push(draw.frame_labels);
    }

    let vocab = build_vocabulary(&records)?;
    if vocab.len() != config.vocab_size {
        let missing: Vec<&String> = tokens.iter().filter(|t| vocab.id(t).is_none()).collect();
        return Err(Error::Config(format!(
            "drafts never use vocabulary tokens {missing:?}; increase sim.num_samples or lower sim.p_delete"
        )));
    }
    debug_assert!(tokens
        .iter()
        .enumerate()
        .all(|(i, t)| vocab.id(t) == Some(i)));

    Ok(SimOutput {
        corpus: Corpus::new(records, features)?,
        vocab,
        oracle,
        embeddings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean_config() -> SimConfig {
        SimConfig {
            num_samples: 30,
            disorder: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn no_corruption_leaves_drafts_equal_to_truth() {
        let out = generate_corpus(&clean_config()).unwrap();
        for record in &out.corpus.records {
            assert_eq!(Some(&record.llm_gloss), record.true_gloss.as_ref());
        }
    }

    #[test]
    fn zero_noise_frames_equal_embeddings() {
        let config = SimConfig {
            noise_sigma: 0.0,
            ..clean_config()
        };
        let out = generate_corpus(&config).unwrap();
        for (features, labels) in out.corpus.features.iter().zip(&out.oracle) {
            for (t, &gloss) in labels.iter().enumerate() {
                let expected: Vec<f32> = out.embeddings[gloss].iter().map(|&x| x as f32).collect();
                assert_eq!(features.row(t), &expected[..]);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_identically() {
        let config = SimConfig {
            disorder: 0.5,
            p_insert: 0.1,
            p_delete: 0.1,
            num_samples: 40,
            ..SimConfig::default()
        };
        let a = generate_corpus(&config).unwrap();
        let b = generate_corpus(&config).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.oracle, b.oracle);
        assert_eq!(a.vocab, b.vocab);
    }

    #[test]
    fn oracle_merged_reproduces_true_gloss() {
        let out = generate_corpus(&SimConfig {
            num_samples: 25,
            ..SimConfig::default()
        })
        .unwrap();
        for (record, labels) in out.corpus.records.iter().zip(&out.oracle) {
            let mut merged: Vec<usize> = Vec::new();
            for &label in labels {
                if merged.last() != Some(&label) {
                    merged.push(label);
                }
            }
            let merged_tokens: Vec<String> = merged
                .iter()
                .map(|&g| out.vocab.symbol(g).to_string())
                .collect();
            assert_eq!(Some(&merged_tokens), record.true_gloss.as_ref());
        }
    }

    #[test]
    fn swap_only_corruption_preserves_multisets() {
        let out = generate_corpus(&SimConfig {
            disorder: 0.7,
            num_samples: 25,
            ..SimConfig::default()
        })
        .unwrap();
        for record in &out.corpus.records {
            let mut draft = record.llm_gloss.clone();
            let mut truth = record.true_gloss.clone().unwrap();
            draft.sort();
            truth.sort();
            assert_eq!(draft, truth);
        }
    }

    #[test]
    fn scramble_forced_swap() {
        let mut rng = stream_rng(7, 0);
        let gloss = vec!["A".to_string(), "B".to_string()];
        let out = scramble(&gloss, 1.0, 0.0, 0.0, &gloss, &mut rng);
        assert_eq!(out, vec!["B".to_string(), "A".to_string()]);
    }

    #[test]
    fn scramble_all_rates_zero_is_identity() {
        let mut rng = stream_rng(7, 0);
        let gloss: Vec<String> = ["X", "Y", "Z"].iter().map(|s| s.to_string()).collect();
        assert_eq!(scramble(&gloss, 0.0, 0.0, 0.0, &gloss, &mut rng), gloss);
    }

    #[test]
    fn scramble_full_deletion_keeps_one_original() {
        let gloss: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        for seed in 0..20 {
            let mut rng = stream_rng(seed, 0);
            let out = scramble(&gloss, 0.0, 0.0, 1.0, &gloss, &mut rng);
            assert_eq!(out.len(), 1);
            assert!(gloss.contains(&out[0]));
        }
    }

    #[test]
    fn emit_features_layout() {
        let embeddings = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut rng = stream_rng(1, 0);
        let m = emit_features(&[0, 1], &[2, 3], &embeddings, 0.0, &mut rng).unwrap();
        assert_eq!(m.frames(), 5);
        for t in 0..2 {
            assert_eq!(m.row(t), &[1.0, 0.0]);
        }
        for t in 2..5 {
            assert_eq!(m.row(t), &[0.0, 1.0]);
        }
    }

    #[test]
    fn nearest_embedding_recovers_oracle_labels() {
        let out = generate_corpus(&SimConfig {
            num_samples: 40,
            ..SimConfig::default()
        })
        .unwrap();
        let mut correct = 0usize;
        let mut total = 0usize;
        for (features, labels) in out.corpus.features.iter().zip(&out.oracle) {
            for (t, &truth) in labels.iter().enumerate() {
                let row = features.row(t);
                let nearest = out
                    .embeddings
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        let da: f64 = a
                            .iter()
                            .zip(row)
                            .map(|(&e, &x)| (e - x as f64).powi(2))
                            .sum();
                        let db: f64 = b
                            .iter()
                            .zip(row)
                            .map(|(&e, &x)| (e - x as f64).powi(2))
                            .sum();
                        da.partial_cmp(&db).unwrap()
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                correct += usize::from(nearest == truth);
                total += 1;
            }
        }
        let accuracy = correct as f64 / total as f64;
        assert!(accuracy > 0.99, "nearest-embedding accuracy {accuracy}");
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let cases = [
            SimConfig {
                glosses_per_video: (9, 4),
                ..SimConfig::default()
            },
            SimConfig {
                glosses_per_video: (4, 30),
                ..SimConfig::default()
            },
            SimConfig {
                disorder: 1.5,
                ..SimConfig::default()
            },
            SimConfig {
                rng: "mt19937".into(),
                ..SimConfig::default()
            },
        ];
        for config in cases {
            assert!(config.validate().is_err());
        }
    }
}
