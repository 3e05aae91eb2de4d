//! Weakly supervised multi-label frame classifier.
//!
//! A linear map from frame features to gloss logits, softmax over the
//! vocabulary, temporal max-pooling into per-gloss presence probabilities,
//! frequency-weighted binary cross-entropy against the draft's token set,
//! and an L1 temporal smoothness penalty. Gradients are analytic; training
//! is plain per-sample SGD with a seeded shuffle.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureMatrix, GlossVocabulary, ProbMatrix};
use crate::error::{Error, Result};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before logs.
pub const PROB_EPS: f64 = 1e-12;

const CHECKPOINT_MAGIC: &[u8; 4] = b"GLCF";
/// Checkpoint version for a plain classifier over the gloss vocabulary.
pub const CHECKPOINT_PLAIN: u32 = 1;
/// Checkpoint version flagging the blank-augmented convention (class 0 is
/// the CTC blank).
pub const CHECKPOINT_BLANK: u32 = 2;

/// Linear frame classifier: `logits = features * weights + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    input_dim: usize,
    classes: usize,
    /// `input_dim x classes`, row-major.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LinearClassifier {
    pub fn new(
        input_dim: usize,
        classes: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != input_dim * classes || bias.len() != classes {
            return Err(Error::Shape(format!(
                "classifier {input_dim}x{classes} needs {} weights and {classes} biases, got {} and {}",
                input_dim * classes,
                weights.len(),
                bias.len()
            )));
        }
        if !weights.iter().chain(bias.iter()).all(|v| v.is_finite()) {
            return Err(Error::Shape("classifier parameters must be finite".into()));
        }
        Ok(LinearClassifier {
            input_dim,
            classes,
            weights,
            bias,
        })
    }

    /// Seeded uniform(-scale, scale) initialization; `scale` defaults to
    /// `1/sqrt(input_dim)`.
    pub fn init<R: Rng>(input_dim: usize, classes: usize, scale: Option<f64>, rng: &mut R) -> Self {
        let s = scale.unwrap_or(1.0 / (input_dim as f64).sqrt());
        let weights = (0..input_dim * classes)
            .map(|_| rng.random_range(-s..s))
            .collect();
        let bias = (0..classes).map(|_| rng.random_range(-s..s)).collect();
        LinearClassifier {
            input_dim,
            classes,
            weights,
            bias,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Raw logit rows, one per frame.
    pub fn logits(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.dim() != self.input_dim {
            return Err(Error::Shape(format!(
                "features have dim {}, classifier expects {}",
                features.dim(),
                self.input_dim
            )));
        }
        let frames = features.frames();
        let mut z = vec![0.0f64; frames * self.classes];
        for t in 0..frames {
            let row = features.row(t);
            let out = &mut z[t * self.classes..(t + 1) * self.classes];
            out.copy_from_slice(&self.bias);
            for (d, &x) in row.iter().enumerate() {
                let x = x as f64;
                let wrow = &self.weights[d * self.classes..(d + 1) * self.classes];
                for (o, &w) in out.iter_mut().zip(wrow) {
                    *o += x * w;
                }
            }
        }
        Ok(z)
    }

    /// Frame-wise softmax probabilities (max-subtracted for overflow safety).
    pub fn forward(&self, features: &FeatureMatrix) -> Result<ProbMatrix> {
        let frames = features.frames();
        let mut z = self.logits(features)?;
        for t in 0..frames {
            softmax_in_place(&mut z[t * self.classes..(t + 1) * self.classes]);
        }
        ProbMatrix::new(frames, self.classes, z)
    }

    fn step(&mut self, grad_w: &[f64], grad_b: &[f64], learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(grad_w) {
            *w -= learning_rate * g;
        }
        for (b, g) in self.bias.iter_mut().zip(grad_b) {
            *b -= learning_rate * g;
        }
    }

    /// Write a `GLCF` checkpoint: magic, u32 version, u32 input_dim,
    /// u32 classes, weights row-major f64 LE, bias f64 LE. The version also
    /// records the class convention ([`CHECKPOINT_PLAIN`] or
    /// [`CHECKPOINT_BLANK`]).
    pub fn save(&self, path: &Path, version: u32) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&version.to_le_bytes())?;
        out.write_all(&(self.input_dim as u32).to_le_bytes())?;
        out.write_all(&(self.classes as u32).to_le_bytes())?;
        for v in self.weights.iter().chain(self.bias.iter()) {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a `GLCF` checkpoint, returning the classifier and its version
    /// flag.
    pub fn load(path: &Path) -> Result<(Self, u32)> {
        let format_err = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut file = BufReader::new(fs::File::open(path)?);
        let mut header = [0u8; 16];
        file.read_exact(&mut header)
            .map_err(|_| format_err("truncated header".into()))?;
        if &header[0..4] != CHECKPOINT_MAGIC {
            return Err(format_err("bad magic, expected GLCF".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != CHECKPOINT_PLAIN && version != CHECKPOINT_BLANK {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let input_dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let classes = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let count = input_dim * classes + classes;
        let mut raw = vec![0u8; count * 8];
        file.read_exact(&mut raw)
            .map_err(|_| format_err("truncated parameter section".into()))?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (weights, bias) = values.split_at(input_dim * classes);
        Ok((
            LinearClassifier::new(input_dim, classes, weights.to_vec(), bias.to_vec())?,
            version,
        ))
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Video-level presence probabilities: columnwise max over frames.
pub fn pool_presence(probs: &ProbMatrix) -> Vec<f64> {
    let mut pooled = vec![f64::NEG_INFINITY; probs.classes()];
    for t in 0..probs.frames() {
        for (p, &v) in pooled.iter_mut().zip(probs.row(t)) {
            if v > *p {
                *p = v;
            }
        }
    }
    pooled
}

/// Weighted binary cross-entropy against a presence vector; predictions are
/// clamped to `[PROB_EPS, 1 - PROB_EPS]` before the logs.
pub fn bce_loss(predicted: &[f64], present: &[bool], weights: &[f64]) -> f64 {
    predicted
        .iter()
        .zip(present)
        .zip(weights)
        .map(|((&p, &y), &w)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            -w * if y { p.ln() } else { (1.0 - p).ln() }
        })
        .sum()
}

/// Mean L1 distance between consecutive probability rows; 0 for a single
/// frame. Always in `[0, 2]`.
pub fn smooth_loss(probs: &ProbMatrix) -> f64 {
    smooth_rows(probs.data(), probs.frames(), probs.classes())
}

fn smooth_rows(data: &[f64], frames: usize, classes: usize) -> f64 {
    if frames <= 1 {
        return 0.0;
    }
    let mut total = 0.0;
    for t in 0..frames - 1 {
        let a = &data[t * classes..(t + 1) * classes];
        let b = &data[(t + 1) * classes..(t + 2) * classes];
        total += a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    total / (frames - 1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothTarget {
    /// Penalize differences of softmax probabilities (the default).
    Probabilities,
    /// Penalize differences of raw logits instead.
    Logits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlcTrainConfig {
    pub w_base: f64,
    /// Weight of the smoothness penalty; 0 disables it.
    pub smooth_weight: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` selects `1/sqrt(feature_dim)`.
    pub init_scale: Option<f64>,
    pub seed: u64,
    /// Presence threshold for set prediction.
    pub threshold: f64,
    /// Use frequency-aware BCE weights; plain BCE when false.
    pub use_freq_weights: bool,
    pub smooth_target: SmoothTarget,
}

impl Default for MlcTrainConfig {
    fn default() -> Self {
        MlcTrainConfig {
            w_base: 1.0,
            smooth_weight: 1.0,
            learning_rate: 0.05,
            epochs: 30,
            init_scale: None,
            seed: crate::DEFAULT_SEED,
            threshold: 0.5,
            use_freq_weights: true,
            smooth_target: SmoothTarget::Probabilities,
        }
    }
}

impl MlcTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, reason: String| Err(Error::Config(format!("mlc.{field}: {reason}")));
        if !self.w_base.is_finite() || self.w_base <= 0.0 {
            return bad("w_base", format!("{} must be positive", self.w_base));
        }
        if self.smooth_weight < 0.0 || !self.smooth_weight.is_finite() {
            return bad(
                "smooth_weight",
                format!("{} must be nonnegative", self.smooth_weight),
            );
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad(
                "learning_rate",
                format!("{} must be positive", self.learning_rate),
            );
        }
        if self.epochs == 0 {
            return bad("epochs", "must be at least 1".into());
        }
        if let Some(s) = self.init_scale {
            if !s.is_finite() || s <= 0.0 {
                return bad("init_scale", format!("{s} must be positive"));
            }
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 || self.threshold >= 1.0 {
            return bad(
                "threshold",
                format!("{} must lie in (0, 1)", self.threshold),
            );
        }
        Ok(())
    }
}

/// Total loss: weighted BCE on pooled presence plus
/// `smooth_weight * smooth_loss`.
pub fn total_loss(
    classifier: &LinearClassifier,
    features: &FeatureMatrix,
    present: &[bool],
    weights: &[f64],
    smooth_weight: f64,
) -> Result<f64> {
    let probs = classifier.forward(features)?;
    let pooled = pool_presence(&probs);
    Ok(bce_loss(&pooled, present, weights) + smooth_weight * smooth_loss(&probs))
}

/// Weight and bias gradients, in parameter layout order.
pub type GradientPair = (Vec<f64>, Vec<f64>);

/// Exact gradient of the total loss with respect to the classifier weights
/// and bias.
///
/// The max-pool routes each class's BCE term to its earliest argmax frame;
/// `|x|` uses the subgradient `sign(x)` with `sign(0) = 0`.
pub fn gradients(
    classifier: &LinearClassifier,
    features: &FeatureMatrix,
    present: &[bool],
    weights: &[f64],
    smooth_weight: f64,
) -> Result<GradientPair> {
    Ok(loss_and_gradients(
        classifier,
        features,
        present,
        weights,
        smooth_weight,
        SmoothTarget::Probabilities,
    )?
    .1)
}

pub fn loss_and_gradients(
    classifier: &LinearClassifier,
    features: &FeatureMatrix,
    present: &[bool],
    weights: &[f64],
    smooth_weight: f64,
    smooth_target: SmoothTarget,
) -> Result<(f64, GradientPair)> {
    let classes = classifier.classes();
    let frames = features.frames();
    if present.len() != classes || weights.len() != classes {
        return Err(Error::Shape(format!(
            "label and weight vectors must have {classes} entries, got {} and {}",
            present.len(),
            weights.len()
        )));
    }
    let logits = classifier.logits(features)?;
    let mut probs = logits.clone();
    for t in 0..frames {
        softmax_in_place(&mut probs[t * classes..(t + 1) * classes]);
    }

    // pooled presence and the (earliest) frame that attains each max
    let mut pooled = vec![f64::NEG_INFINITY; classes];
    let mut arg_frame = vec![0usize; classes];
    for t in 0..frames {
        let row = &probs[t * classes..(t + 1) * classes];
        for k in 0..classes {
            if row[k] > pooled[k] {
                pooled[k] = row[k];
                arg_frame[k] = t;
            }
        }
    }

    let loss_smooth = match smooth_target {
        SmoothTarget::Probabilities => smooth_rows(&probs, frames, classes),
        SmoothTarget::Logits => smooth_rows(&logits, frames, classes),
    };
    let loss = bce_loss(&pooled, present, weights) + smooth_weight * loss_smooth;

    // dL/dP, assembled frame by frame
    let mut grad_p = vec![0.0f64; frames * classes];
    for k in 0..classes {
        let p = pooled[k].clamp(PROB_EPS, 1.0 - PROB_EPS);
        let dl_dyhat = if present[k] {
            -weights[k] / p
        } else {
            weights[k] / (1.0 - p)
        };
        grad_p[arg_frame[k] * classes + k] += dl_dyhat;
    }
    if smooth_weight > 0.0 && frames > 1 && smooth_target == SmoothTarget::Probabilities {
        add_smooth_subgradient(&mut grad_p, &probs, frames, classes, smooth_weight);
    }

    // backprop through the row-wise softmax: dz_j = p_j (g_j - sum_k g_k p_k)
    let mut grad_z = vec![0.0f64; frames * classes];
    for t in 0..frames {
        let p = &probs[t * classes..(t + 1) * classes];
        let g = &grad_p[t * classes..(t + 1) * classes];
        let dot: f64 = p.iter().zip(g).map(|(&pi, &gi)| pi * gi).sum();
        let z = &mut grad_z[t * classes..(t + 1) * classes];
        for k in 0..classes {
            z[k] = p[k] * (g[k] - dot);
        }
    }
    if smooth_weight > 0.0 && frames > 1 && smooth_target == SmoothTarget::Logits {
        add_smooth_subgradient(&mut grad_z, &logits, frames, classes, smooth_weight);
    }

    // dW = F^T dZ, db = column sums of dZ
    let dim = classifier.input_dim();
    let mut grad_w = vec![0.0f64; dim * classes];
    let mut grad_b = vec![0.0f64; classes];
    for t in 0..frames {
        let x = features.row(t);
        let z = &grad_z[t * classes..(t + 1) * classes];
        for (d, &xd) in x.iter().enumerate() {
            let xd = xd as f64;
            let wrow = &mut grad_w[d * classes..(d + 1) * classes];
            for (w, &g) in wrow.iter_mut().zip(z) {
                *w += xd * g;
            }
        }
        for (b, &g) in grad_b.iter_mut().zip(z) {
            *b += g;
        }
    }
    Ok((loss, (grad_w, grad_b)))
}

fn add_smooth_subgradient(
    grad: &mut [f64],
    rows: &[f64],
    frames: usize,
    classes: usize,
    smooth_weight: f64,
) {
    let scale = smooth_weight / (frames - 1) as f64;
    for t in 0..frames - 1 {
        for k in 0..classes {
            let diff = rows[t * classes + k] - rows[(t + 1) * classes + k];
            let s = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[t * classes + k] += scale * s;
            grad[(t + 1) * classes + k] -= scale * s;
        }
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub epoch_loss: Vec<f64>,
}

/// Binary presence vector of a record's draft token set.
pub fn presence_vector(llm_gloss: &[String], vocab: &GlossVocabulary) -> Result<Vec<bool>> {
    let mut present = vec![false; vocab.len()];
    for id in vocab.ids(llm_gloss)? {
        present[id] = true;
    }
    Ok(present)
}

/// Train the frame classifier with per-sample SGD over a seeded shuffle.
///
/// Labels are the presence vectors of each record's draft gloss set. A
/// non-finite loss aborts with the epoch and record id.
pub fn train(
    corpus: &Corpus,
    vocab: &GlossVocabulary,
    config: &MlcTrainConfig,
) -> Result<(LinearClassifier, TrainHistory)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = corpus.features[0].dim();
    let labels: Vec<Vec<bool>> = corpus
        .records
        .iter()
        .map(|r| {
            presence_vector(&r.llm_gloss, vocab).map_err(|e| Error::Record {
                id: r.id.clone(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let class_weights: Vec<f64> = if config.use_freq_weights {
        vocab.weights().to_vec()
    } else {
        vec![1.0; vocab.len()]
    };

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut classifier = LinearClassifier::init(dim, vocab.len(), config.init_scale, &mut rng);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for &idx in &order {
            let (loss, (grad_w, grad_b)) = loss_and_gradients(
                &classifier,
                &corpus.features[idx],
                &labels[idx],
                &class_weights,
                config.smooth_weight,
                config.smooth_target,
            )?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    id: corpus.records[idx].id.clone(),
                });
            }
            classifier.step(&grad_w, &grad_b, config.learning_rate);
            epoch_total += loss;
        }
        let mean = epoch_total / corpus.len() as f64;
        log::info!("mlc epoch {epoch}: mean loss {mean:.6}");
        history.epoch_loss.push(mean);
    }
    Ok((classifier, history))
}

/// Gloss ids whose pooled presence probability reaches `threshold`.
pub fn predict_set(
    classifier: &LinearClassifier,
    features: &FeatureMatrix,
    threshold: f64,
) -> Result<BTreeSet<usize>> {
    let pooled = pool_presence(&classifier.forward(features)?);
    Ok(pooled
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(k, _)| k)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn features(frames: usize, dim: usize, values: Vec<f32>) -> FeatureMatrix {
        FeatureMatrix::new(frames, dim, values).unwrap()
    }

    #[test]
    fn zero_classifier_is_uniform() {
        let clf = LinearClassifier::new(2, 4, vec![0.0; 8], vec![0.0; 4]).unwrap();
        let probs = clf.forward(&features(3, 2, vec![1.0; 6])).unwrap();
        for t in 0..3 {
            for &p in probs.row(t) {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn softmax_hand_value() {
        // z = (ln 3, 0) -> (0.75, 0.25)
        let clf = LinearClassifier::new(1, 2, vec![0.0, 0.0], vec![3.0f64.ln(), 0.0]).unwrap();
        let probs = clf.forward(&features(1, 1, vec![0.0])).unwrap();
        assert_abs_diff_eq!(probs.row(0)[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(probs.row(0)[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn forward_rows_are_on_the_simplex() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let clf = LinearClassifier::init(5, 7, None, &mut rng);
        let data: Vec<f32> = (0..20).map(|_| rng.random_range(-2.0..2.0)).collect();
        let probs = clf.forward(&features(4, 5, data)).unwrap();
        for t in 0..4 {
            let sum: f64 = probs.row(t).iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(probs.row(t).iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn forward_rejects_dim_mismatch() {
        let clf = LinearClassifier::new(3, 2, vec![0.0; 6], vec![0.0; 2]).unwrap();
        assert!(clf.forward(&features(1, 2, vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn logit_shift_leaves_forward_unchanged() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let clf = LinearClassifier::init(3, 4, None, &mut rng);
        let shifted = LinearClassifier::new(
            3,
            4,
            clf.weights().to_vec(),
            clf.bias().iter().map(|b| b + 7.5).collect(),
        )
        .unwrap();
        let data: Vec<f32> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = features(3, 3, data);
        let a = clf.forward(&f).unwrap();
        let b = shifted.forward(&f).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn pool_presence_hand_values() {
        let probs = ProbMatrix::new(2, 2, vec![0.9, 0.1, 0.2, 0.8]).unwrap();
        assert_eq!(pool_presence(&probs), vec![0.9, 0.8]);
        let single = ProbMatrix::new(1, 2, vec![0.3, 0.7]).unwrap();
        assert_eq!(pool_presence(&single), vec![0.3, 0.7]);
    }

    #[test]
    fn bce_hand_values() {
        // K=1, w=1, y=1, p=0.5 -> ln 2
        let loss = bce_loss(&[0.5], &[true], &[1.0]);
        assert_abs_diff_eq!(loss, 2.0f64.ln(), epsilon = 1e-12);
        // doubling weights doubles the loss
        let double = bce_loss(&[0.5], &[true], &[2.0]);
        assert_abs_diff_eq!(double, 2.0 * loss, epsilon = 1e-12);
        // perfect prediction is ~0 after clamping
        let perfect = bce_loss(&[1.0, 0.0], &[true, false], &[1.0, 1.0]);
        assert!(perfect.abs() < 1e-9);
    }

    #[test]
    fn smooth_loss_hand_values() {
        let flat = ProbMatrix::new(3, 2, vec![0.4, 0.6, 0.4, 0.6, 0.4, 0.6]).unwrap();
        assert_eq!(smooth_loss(&flat), 0.0);
        let flip = ProbMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(smooth_loss(&flip), 2.0, epsilon = 1e-15);
        let single = ProbMatrix::new(1, 2, vec![0.5, 0.5]).unwrap();
        assert_eq!(smooth_loss(&single), 0.0);
    }

    #[test]
    fn total_loss_reduces_to_bce_without_smoothing() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let clf = LinearClassifier::init(2, 3, None, &mut rng);
        let f = features(2, 2, vec![0.5, -0.5, 1.0, 0.25]);
        let present = [true, false, true];
        let w = [1.0, 1.5, 2.0];
        let probs = clf.forward(&f).unwrap();
        let expected = bce_loss(&pool_presence(&probs), &present, &w);
        let got = total_loss(&clf, &f, &present, &w, 0.0).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        let with_smooth = total_loss(&clf, &f, &present, &w, 1.0).unwrap();
        assert_abs_diff_eq!(with_smooth, expected + smooth_loss(&probs), epsilon = 1e-12);
    }

    /// Central finite differences on every parameter.
    fn finite_difference(
        clf: &LinearClassifier,
        f: &FeatureMatrix,
        present: &[bool],
        w: &[f64],
        lambda: f64,
    ) -> (Vec<f64>, Vec<f64>) {
        let h = 1e-5;
        let dim = clf.input_dim();
        let classes = clf.classes();
        let mut grad_w = vec![0.0; dim * classes];
        let mut grad_b = vec![0.0; classes];
        for i in 0..dim * classes {
            for (sign, acc) in [(1.0, true), (-1.0, false)] {
                let mut weights = clf.weights().to_vec();
                weights[i] += sign * h;
                let probe =
                    LinearClassifier::new(dim, classes, weights, clf.bias().to_vec()).unwrap();
                let loss = total_loss(&probe, f, present, w, lambda).unwrap();
                grad_w[i] += if acc { loss } else { -loss };
            }
            grad_w[i] /= 2.0 * h;
        }
        for i in 0..classes {
            for (sign, acc) in [(1.0, true), (-1.0, false)] {
                let mut bias = clf.bias().to_vec();
                bias[i] += sign * h;
                let probe =
                    LinearClassifier::new(dim, classes, clf.weights().to_vec(), bias).unwrap();
                let loss = total_loss(&probe, f, present, w, lambda).unwrap();
                grad_b[i] += if acc { loss } else { -loss };
            }
            grad_b[i] /= 2.0 * h;
        }
        (grad_w, grad_b)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..10 {
            let (frames, dim, classes) = (6, 4, 3);
            let clf = LinearClassifier::init(dim, classes, None, &mut rng);
            let data: Vec<f32> = (0..frames * dim)
                .map(|_| rng.random_range(-1.5..1.5))
                .collect();
            let f = features(frames, dim, data);
            let present: Vec<bool> = (0..classes).map(|_| rng.random_bool(0.5)).collect();
            let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.5..3.0)).collect();
            let lambda = 0.7;
            let (grad_w, grad_b) = gradients(&clf, &f, &present, &w, lambda).unwrap();
            let (fd_w, fd_b) = finite_difference(&clf, &f, &present, &w, lambda);
            for (a, e) in grad_w.iter().zip(&fd_w).chain(grad_b.iter().zip(&fd_b)) {
                let err = (a - e).abs() / f64::max(1.0, f64::max(a.abs(), e.abs()));
                assert!(err < 1e-4, "analytic {a} vs fd {e}");
            }
        }
    }

    #[test]
    fn single_frame_single_class_is_stationary() {
        // T=1, K=1: the softmax of a lone logit is always 1, so the loss is
        // constant in the parameters and the exact gradient is zero.
        let clf = LinearClassifier::new(2, 1, vec![0.3, -0.7], vec![0.2]).unwrap();
        let f = features(1, 2, vec![1.0, 2.0]);
        let (grad_w, grad_b) = gradients(&clf, &f, &[true], &[1.0], 0.0).unwrap();
        assert!(grad_w.iter().chain(grad_b.iter()).all(|&g| g == 0.0));
    }

    #[test]
    fn single_frame_two_classes_match_logistic_regression() {
        // With K=2 and labels (1, 0), the pooled BCE is logistic regression
        // in the logit difference: dL/dz0 = -2 (1 - sigmoid(z0 - z1)).
        let clf = LinearClassifier::new(1, 2, vec![0.4, 0.0], vec![0.1, 0.0]).unwrap();
        let f = features(1, 1, vec![2.0]);
        let (grad_w, grad_b) = gradients(&clf, &f, &[true, false], &[1.0, 1.0], 0.0).unwrap();
        let delta: f64 = 0.4 * 2.0 + 0.1;
        let sigma = 1.0 / (1.0 + (-delta).exp());
        let dz0 = -2.0 * (1.0 - sigma);
        assert_abs_diff_eq!(grad_b[0], dz0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad_b[1], -dz0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad_w[0], 2.0 * dz0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad_w[1], -2.0 * dz0, epsilon = 1e-12);
    }

    #[test]
    fn saturated_predictions_have_vanishing_gradient() {
        // strong logits, labels matching: gradient should be ~0
        let clf = LinearClassifier::new(1, 2, vec![40.0, -40.0], vec![0.0, 0.0]).unwrap();
        let f = features(2, 1, vec![1.0, 1.0]);
        let (grad_w, grad_b) = gradients(&clf, &f, &[true, false], &[1.0, 1.0], 1.0).unwrap();
        let norm: f64 = grad_w
            .iter()
            .chain(grad_b.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }

    #[test]
    fn predict_set_thresholds_pooled_probabilities() {
        let clf = LinearClassifier::new(1, 2, vec![5.0, -5.0], vec![0.0, 0.0]).unwrap();
        let f = features(1, 1, vec![1.0]);
        let set = predict_set(&clf, &f, 0.5).unwrap();
        assert_eq!(set, BTreeSet::from([0]));
        let all = predict_set(&clf, &f, 1e-9).unwrap();
        assert_eq!(all, BTreeSet::from([0, 1]));
    }

    #[test]
    fn train_rejects_zero_epochs() {
        let config = MlcTrainConfig {
            epochs: 0,
            ..MlcTrainConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.bin");
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let clf = LinearClassifier::init(4, 3, None, &mut rng);
        clf.save(&path, CHECKPOINT_PLAIN).unwrap();
        let (back, version) = LinearClassifier::load(&path).unwrap();
        assert_eq!(back, clf);
        assert_eq!(version, CHECKPOINT_PLAIN);
    }

    proptest::proptest! {
        #[test]
        fn losses_stay_in_bounds(
            seed in 0u64..1000,
            frames in 1usize..6,
            lambda in 0.0f64..2.0,
        ) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (dim, classes) = (3usize, 4usize);
            let clf = LinearClassifier::init(dim, classes, None, &mut rng);
            let data: Vec<f32> = (0..frames * dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let f = features(frames, dim, data);
            let present: Vec<bool> = (0..classes).map(|_| rng.random_bool(0.5)).collect();
            let w: Vec<f64> = (0..classes).map(|_| rng.random_range(0.1..3.0)).collect();
            let probs = clf.forward(&f).unwrap();
            let smooth = smooth_loss(&probs);
            proptest::prop_assert!((0.0..=2.0).contains(&smooth));
            let total = total_loss(&clf, &f, &present, &w, lambda).unwrap();
            proptest::prop_assert!(total >= 0.0);
        }
    }
}
