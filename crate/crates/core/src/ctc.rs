//! Connectionist Temporal Classification over the pseudo-gloss vocabulary:
//! exact log-space forward(-backward) likelihood, analytic gradients, greedy
//! best-path decoding, feasibility checks, and a toy recognizer trainer.
//!
//! Class 0 is the blank; vocabulary ids shift by +1 inside this module so
//! the frame classifier stays blank-free.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, FeatureMatrix, GlossVocabulary, ProbMatrix};
use crate::error::{Error, Result};
use crate::metrics;
use crate::mlc::{LinearClassifier, CHECKPOINT_BLANK};

/// Id of the CTC blank class.
pub const BLANK: usize = 0;

/// A label sequence over `1..classes` (never the blank).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CtcTarget {
    labels: Vec<usize>,
}

impl CtcTarget {
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Shape(
                "CTC target must contain at least one label".into(),
            ));
        }
        if labels.contains(&BLANK) {
            return Err(Error::Shape("CTC target may not contain the blank".into()));
        }
        Ok(CtcTarget { labels })
    }

    /// Map gloss tokens to blank-shifted label ids (`vocab id + 1`).
    pub fn from_tokens(tokens: &[String], vocab: &GlossVocabulary) -> Result<Self> {
        CtcTarget::new(vocab.ids(tokens)?.into_iter().map(|id| id + 1).collect())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn adjacent_repeats(&self) -> usize {
        self.labels.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

/// A target fits in `frames` iff `frames >= len + adjacent repeats` (each
/// repeated label needs a separating blank).
pub fn ctc_feasible(target: &CtcTarget, frames: usize) -> bool {
    frames >= target.len() + target.adjacent_repeats()
}

/// Frame-wise log-probability rows (log-softmax outputs).
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    frames: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogProbMatrix {
    /// Log-softmax each row of raw logits.
    pub fn from_logits(frames: usize, classes: usize, mut logits: Vec<f64>) -> Result<Self> {
        if logits.len() != frames * classes || frames == 0 || classes < 2 {
            return Err(Error::Shape(format!(
                "log-prob matrix {frames}x{classes} needs {} finite values, got {}",
                frames * classes,
                logits.len()
            )));
        }
        for t in 0..frames {
            let row = &mut logits[t * classes..(t + 1) * classes];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            for z in row.iter_mut() {
                *z -= lse;
            }
        }
        Ok(LogProbMatrix {
            frames,
            classes,
            data: logits,
        })
    }

    /// Elementwise log of a probability matrix, clamped away from zero.
    pub fn from_probs(probs: &ProbMatrix) -> Self {
        LogProbMatrix {
            frames: probs.frames(),
            classes: probs.classes(),
            data: probs
                .data()
                .iter()
                .map(|&p| p.max(crate::mlc::PROB_EPS).ln())
                .collect(),
        }
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
}

fn logsumexp2(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn logsumexp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// Blank-augmented label sequence: blank, l1, blank, l2, ..., blank.
fn extended_labels(target: &CtcTarget) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &label in target.labels() {
        ext.push(label);
        ext.push(BLANK);
    }
    ext
}

fn check_instance(log_probs: &LogProbMatrix, target: &CtcTarget) -> Result<()> {
    if let Some(&bad) = target.labels().iter().find(|&&l| l >= log_probs.classes()) {
        return Err(Error::Shape(format!(
            "target label {bad} outside class range 1..{}",
            log_probs.classes()
        )));
    }
    if !ctc_feasible(target, log_probs.frames()) {
        let repeats = target.adjacent_repeats();
        return Err(Error::Infeasible {
            target_len: target.len(),
            repeats,
            needed: target.len() + repeats,
            frames: log_probs.frames(),
        });
    }
    Ok(())
}

/// Forward lattice, `frames x (2M + 1)`, emissions included at every step.
fn forward_lattice(log_probs: &LogProbMatrix, ext: &[usize]) -> Vec<f64> {
    let frames = log_probs.frames();
    let states = ext.len();
    let mut alpha = vec![f64::NEG_INFINITY; frames * states];
    alpha[0] = log_probs.row(0)[ext[0]];
    if states > 1 {
        alpha[1] = log_probs.row(0)[ext[1]];
    }
    for t in 1..frames {
        let row = log_probs.row(t);
        for s in 0..states {
            let stay = alpha[(t - 1) * states + s];
            let step = if s >= 1 {
                alpha[(t - 1) * states + s - 1]
            } else {
                f64::NEG_INFINITY
            };
            let total = if s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2] {
                logsumexp3(stay, step, alpha[(t - 1) * states + s - 2])
            } else {
                logsumexp2(stay, step)
            };
            alpha[t * states + s] = total + row[ext[s]];
        }
    }
    alpha
}

/// Backward lattice, same convention (emission at `t` included).
fn backward_lattice(log_probs: &LogProbMatrix, ext: &[usize]) -> Vec<f64> {
    let frames = log_probs.frames();
    let states = ext.len();
    let mut beta = vec![f64::NEG_INFINITY; frames * states];
    let last = log_probs.row(frames - 1);
    beta[(frames - 1) * states + states - 1] = last[ext[states - 1]];
    if states > 1 {
        beta[(frames - 1) * states + states - 2] = last[ext[states - 2]];
    }
    for t in (0..frames - 1).rev() {
        let row = log_probs.row(t);
        for s in 0..states {
            let stay = beta[(t + 1) * states + s];
            let step = if s + 1 < states {
                beta[(t + 1) * states + s + 1]
            } else {
                f64::NEG_INFINITY
            };
            let total = if s + 2 < states && ext[s + 2] != BLANK && ext[s + 2] != ext[s] {
                logsumexp3(stay, step, beta[(t + 1) * states + s + 2])
            } else {
                logsumexp2(stay, step)
            };
            beta[t * states + s] = total + row[ext[s]];
        }
    }
    beta
}

fn log_likelihood(log_probs: &LogProbMatrix, ext: &[usize], alpha: &[f64]) -> f64 {
    let frames = log_probs.frames();
    let states = ext.len();
    logsumexp2(
        alpha[(frames - 1) * states + states - 1],
        alpha[(frames - 1) * states + states - 2],
    )
}

/// Negative log-likelihood of the target under the blank-augmented forward
/// recursion, entirely in log space. Infeasible targets are an explicit
/// error, never a silent `-inf`.
pub fn ctc_loss(log_probs: &LogProbMatrix, target: &CtcTarget) -> Result<f64> {
    check_instance(log_probs, target)?;
    let ext = extended_labels(target);
    let alpha = forward_lattice(log_probs, &ext);
    Ok(-log_likelihood(log_probs, &ext, &alpha))
}

/// Exact gradient of `ctc_loss` with respect to the logits that produced
/// `log_probs`: `dL/dz[t][k] = P[t][k] - gamma[t][k]`, where `gamma` is the
/// posterior label occupancy aggregated over the augmented states.
pub fn ctc_gradients(log_probs: &LogProbMatrix, target: &CtcTarget) -> Result<Vec<f64>> {
    check_instance(log_probs, target)?;
    let ext = extended_labels(target);
    let frames = log_probs.frames();
    let classes = log_probs.classes();
    let states = ext.len();
    let alpha = forward_lattice(log_probs, &ext);
    let beta = backward_lattice(log_probs, &ext);
    let loglik = log_likelihood(log_probs, &ext, &alpha);

    let mut grad = vec![0.0f64; frames * classes];
    for t in 0..frames {
        let row = log_probs.row(t);
        let out = &mut grad[t * classes..(t + 1) * classes];
        for (k, &lp) in row.iter().enumerate() {
            out[k] = lp.exp();
        }
        for (s, &label) in ext.iter().enumerate() {
            let joint = alpha[t * states + s] + beta[t * states + s] - row[label];
            if joint > f64::NEG_INFINITY {
                out[label] -= (joint - loglik).exp();
            }
        }
    }
    Ok(grad)
}

/// Best-path decoding: per-frame argmax, collapse runs, drop blanks; returns
/// unshifted vocabulary ids.
pub fn ctc_greedy_decode(probs: &ProbMatrix) -> Vec<usize> {
    let mut out = Vec::new();
    let mut previous = usize::MAX;
    for t in 0..probs.frames() {
        let row = probs.row(t);
        let mut best = 0usize;
        for (k, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = k;
            }
        }
        if best != previous && best != BLANK {
            out.push(best - 1);
        }
        previous = best;
    }
    out
}

/// The toy Sign2Gloss recognizer: a linear classifier with `vocab + 1`
/// outputs, class 0 reserved for the blank.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcRecognizer {
    pub classifier: LinearClassifier,
}

impl CtcRecognizer {
    pub fn vocab_classes(&self) -> usize {
        self.classifier.classes() - 1
    }

    pub fn log_probs(&self, features: &FeatureMatrix) -> Result<LogProbMatrix> {
        let logits = self.classifier.logits(features)?;
        LogProbMatrix::from_logits(features.frames(), self.classifier.classes(), logits)
    }

    /// Greedy-decode one record into vocabulary ids.
    pub fn decode(&self, features: &FeatureMatrix) -> Result<Vec<usize>> {
        Ok(ctc_greedy_decode(&self.classifier.forward(features)?))
    }

    pub fn decode_tokens(
        &self,
        features: &FeatureMatrix,
        vocab: &GlossVocabulary,
    ) -> Result<Vec<String>> {
        Ok(self
            .decode(features)?
            .into_iter()
            .map(|id| vocab.symbol(id).to_string())
            .collect())
    }

    /// Save with the blank-convention header flag.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        self.classifier.save(path, CHECKPOINT_BLANK)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (classifier, version) = LinearClassifier::load(path)?;
        if version != CHECKPOINT_BLANK {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("checkpoint version {version} is not a blank-augmented recognizer"),
            });
        }
        Ok(CtcRecognizer { classifier })
    }
}

/// Which gloss field supplies the training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlossSource {
    Reordered,
    Llm,
    TrueGloss,
}

/// Epoch-indexed weight on the CTC loss. `DropFinal` silences the loss for
/// the last `epochs` epochs, which represents schedules that remove the CTC
/// term late in training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossSchedule {
    Constant { weight: f64 },
    DropFinal { epochs: usize },
}

impl Default for LossSchedule {
    fn default() -> Self {
        LossSchedule::Constant { weight: 1.0 }
    }
}

impl LossSchedule {
    pub fn weight(&self, epoch: usize, total_epochs: usize) -> f64 {
        match *self {
            LossSchedule::Constant { weight } => weight,
            LossSchedule::DropFinal { epochs } => {
                if epoch + epochs >= total_epochs {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtcTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` selects `1/sqrt(feature_dim)`.
    pub init_scale: Option<f64>,
    pub seed: u64,
    pub targets: GlossSource,
    pub loss_schedule: LossSchedule,
}

impl Default for CtcTrainConfig {
    fn default() -> Self {
        CtcTrainConfig {
            learning_rate: 0.1,
            epochs: 40,
            init_scale: None,
            seed: crate::DEFAULT_SEED,
            targets: GlossSource::Reordered,
            loss_schedule: LossSchedule::default(),
        }
    }
}

impl CtcTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, reason: String| Err(Error::Config(format!("ctc.{field}: {reason}")));
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
        if let LossSchedule::Constant { weight } = self.loss_schedule {
            if weight < 0.0 || !weight.is_finite() {
                return bad(
                    "loss_schedule",
                    format!("weight {weight} must be nonnegative"),
                );
            }
        }
        Ok(())
    }
}

/// Per-epoch mean loss, dev WER (when a dev corpus is given), and the number
/// of records skipped as infeasible or empty.
#[derive(Debug, Clone, Default)]
pub struct CtcTrainReport {
    pub epoch_loss: Vec<f64>,
    pub dev_wer: Vec<f64>,
    pub skipped: usize,
}

fn target_tokens(
    record: &crate::corpus::SampleRecord,
    source: GlossSource,
) -> Result<&[String]> {
    match source {
        GlossSource::Llm => Ok(&record.llm_gloss),
        GlossSource::Reordered => record
            .reordered_gloss
            .as_deref()
            .ok_or_else(|| Error::Record {
                id: record.id.clone(),
                reason: "missing reordered_gloss (run the align stage first)".into(),
            }),
        GlossSource::TrueGloss => record.true_gloss.as_deref().ok_or_else(|| Error::Record {
            id: record.id.clone(),
            reason: "missing true_gloss".into(),
        }),
    }
}

/// Train the recognizer with per-sample SGD on the CTC loss.
///
/// Records whose target is empty or infeasible for their frame count are
/// skipped with a warning and counted in the report.
pub fn train_sign2gloss(
    train: &Corpus,
    dev: Option<&Corpus>,
    vocab: &GlossVocabulary,
    config: &CtcTrainConfig,
) -> Result<(CtcRecognizer, CtcTrainReport)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let dim = train.features[0].dim();
    let classes = vocab.len() + 1;

    let mut report = CtcTrainReport::default();
    let mut instances: Vec<(usize, CtcTarget)> = Vec::new();
    for (idx, record) in train.records.iter().enumerate() {
        let tokens = target_tokens(record, config.targets)?;
        if tokens.is_empty() {
            log::warn!("record {}: empty target, skipped", record.id);
            report.skipped += 1;
            continue;
        }
        let target = CtcTarget::from_tokens(tokens, vocab).map_err(|e| Error::Record {
            id: record.id.clone(),
            reason: e.to_string(),
        })?;
        if !ctc_feasible(&target, train.features[idx].frames()) {
            log::warn!(
                "record {}: target of length {} infeasible in {} frames, skipped",
                record.id,
                target.len(),
                train.features[idx].frames()
            );
            report.skipped += 1;
            continue;
        }
        instances.push((idx, target));
    }
    if instances.is_empty() {
        return Err(Error::Config("no feasible CTC training records".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut recognizer = CtcRecognizer {
        classifier: LinearClassifier::init(dim, classes, config.init_scale, &mut rng),
    };
    let mut order: Vec<usize> = (0..instances.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let weight = config.loss_schedule.weight(epoch, config.epochs);
        let mut epoch_total = 0.0;
        for &slot in &order {
            let (idx, ref target) = instances[slot];
            let features = &train.features[idx];
            let log_probs = recognizer.log_probs(features)?;
            let loss = ctc_loss(&log_probs, target)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    id: train.records[idx].id.clone(),
                });
            }
            epoch_total += loss;
            if weight > 0.0 {
                let grad_z = ctc_gradients(&log_probs, target)?;
                apply_logit_gradients(
                    &mut recognizer.classifier,
                    features,
                    &grad_z,
                    weight * config.learning_rate,
                );
            }
        }
        let mean = epoch_total / instances.len() as f64;
        report.epoch_loss.push(mean);
        if let Some(dev_corpus) = dev {
            let wer = dev_corpus_wer(&recognizer, dev_corpus, vocab)?;
            log::info!("ctc epoch {epoch}: mean loss {mean:.6}, dev WER {wer:.4}");
            report.dev_wer.push(wer);
        } else {
            log::info!("ctc epoch {epoch}: mean loss {mean:.6}");
        }
    }
    Ok((recognizer, report))
}

/// Chain a logit-space gradient through the linear layer and take one SGD
/// step.
fn apply_logit_gradients(
    classifier: &mut LinearClassifier,
    features: &FeatureMatrix,
    grad_z: &[f64],
    step: f64,
) {
    let classes = classifier.classes();
    let dim = classifier.input_dim();
    let mut grad_w = vec![0.0f64; dim * classes];
    let mut grad_b = vec![0.0f64; classes];
    for t in 0..features.frames() {
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
    let updated = LinearClassifier::new(
        dim,
        classes,
        classifier
            .weights()
            .iter()
            .zip(&grad_w)
            .map(|(w, g)| w - step * g)
            .collect(),
        classifier
            .bias()
            .iter()
            .zip(&grad_b)
            .map(|(b, g)| b - step * g)
            .collect(),
    )
    .expect("shapes are preserved");
    *classifier = updated;
}

/// Cap every generated gloss field (`llm_gloss`, `reordered_gloss`) that is
/// infeasible for its record's frame count, removing stop-list words first
/// and truncating as a last resort. Returns how many fields were capped.
/// True glosses are never touched.
pub fn cap_targets(corpus: &mut Corpus, stop_list: &std::collections::HashSet<String>) -> usize {
    fn fits(tokens: &[String], frames: usize) -> bool {
        let repeats = tokens.windows(2).filter(|w| w[0] == w[1]).count();
        tokens.len() + repeats <= frames
    }
    fn cap(
        tokens: &mut Vec<String>,
        frames: usize,
        stop_list: &std::collections::HashSet<String>,
    ) -> bool {
        if tokens.is_empty() || fits(tokens, frames) {
            return false;
        }
        let mut max_len = frames.min(tokens.len());
        let mut shortened = crate::llm::cap_length(std::mem::take(tokens), max_len, stop_list);
        while !fits(&shortened, frames) && max_len > 1 {
            max_len -= 1;
            shortened = crate::llm::cap_length(shortened, max_len, stop_list);
        }
        *tokens = shortened;
        true
    }
    let mut capped = 0usize;
    for (record, features) in corpus.records.iter_mut().zip(&corpus.features) {
        let frames = features.frames();
        capped += usize::from(cap(&mut record.llm_gloss, frames, stop_list));
        if let Some(reordered) = record.reordered_gloss.as_mut() {
            capped += usize::from(cap(reordered, frames, stop_list));
        }
    }
    capped
}

/// Corpus-level WER of greedy decodes against the true glosses.
pub fn dev_corpus_wer(
    recognizer: &CtcRecognizer,
    corpus: &Corpus,
    vocab: &GlossVocabulary,
) -> Result<f64> {
    let mut pairs = Vec::with_capacity(corpus.len());
    for (record, features) in corpus.records.iter().zip(&corpus.features) {
        let truth = record.true_gloss.as_ref().ok_or_else(|| Error::Record {
            id: record.id.clone(),
            reason: "missing true_gloss for WER evaluation".into(),
        })?;
        let hyp = recognizer.decode_tokens(features, vocab)?;
        pairs.push((hyp, truth.clone()));
    }
    metrics::corpus_wer(&pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn target(labels: &[usize]) -> CtcTarget {
        CtcTarget::new(labels.to_vec()).unwrap()
    }

    /// Collapse a raw frame path: merge runs, then drop blanks.
    fn collapse(path: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut previous = usize::MAX;
        for &c in path {
            if c != previous && c != BLANK {
                out.push(c);
            }
            previous = c;
        }
        out
    }

    /// Reference loss by exhaustive path enumeration.
    fn brute_force_loss(log_probs: &LogProbMatrix, tgt: &CtcTarget) -> f64 {
        let frames = log_probs.frames();
        let classes = log_probs.classes();
        let mut total = 0.0f64;
        let paths = (classes as u64).pow(frames as u32);
        for code in 0..paths {
            let mut c = code;
            let mut path = Vec::with_capacity(frames);
            for _ in 0..frames {
                path.push((c % classes as u64) as usize);
                c /= classes as u64;
            }
            if collapse(&path) == tgt.labels() {
                let logp: f64 = path
                    .iter()
                    .enumerate()
                    .map(|(t, &cls)| log_probs.row(t)[cls])
                    .sum();
                total += logp.exp();
            }
        }
        -total.ln()
    }

    fn random_log_probs(frames: usize, classes: usize, seed: u64) -> LogProbMatrix {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..frames * classes)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        LogProbMatrix::from_logits(frames, classes, logits).unwrap()
    }

    #[test]
    fn feasibility_rules() {
        assert!(!ctc_feasible(&target(&[1, 1]), 2));
        assert!(ctc_feasible(&target(&[1, 1]), 3));
        assert!(ctc_feasible(&target(&[1, 2, 3]), 3));
        assert!(!ctc_feasible(&target(&[1, 2, 3]), 2));
    }

    #[test]
    fn single_frame_single_label() {
        // P(A) = 0.8 with one frame: the only path is [A]
        let probs = ProbMatrix::new(1, 2, vec![0.2, 0.8]).unwrap();
        let lp = LogProbMatrix::from_probs(&probs);
        let loss = ctc_loss(&lp, &target(&[1])).unwrap();
        assert_abs_diff_eq!(loss, -(0.8f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn uniform_two_frames_three_paths() {
        // uniform over {blank, A, B}: paths (A,blank), (blank,A), (A,A)
        let probs = ProbMatrix::new(2, 3, vec![1.0 / 3.0; 6]).unwrap();
        let lp = LogProbMatrix::from_probs(&probs);
        let loss = ctc_loss(&lp, &target(&[1])).unwrap();
        assert_abs_diff_eq!(loss, 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        for seed in 0..40u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 1000);
            let frames = rng.random_range(1..=5);
            let classes = rng.random_range(2..=4);
            let lp = random_log_probs(frames, classes, seed);
            let len = rng.random_range(1..=frames);
            let labels: Vec<usize> = (0..len).map(|_| rng.random_range(1..classes)).collect();
            let tgt = target(&labels);
            if !ctc_feasible(&tgt, frames) {
                assert!(ctc_loss(&lp, &tgt).is_err());
                continue;
            }
            let got = ctc_loss(&lp, &tgt).unwrap();
            let expected = brute_force_loss(&lp, &tgt);
            assert!(
                (got - expected).abs() < 1e-9,
                "seed {seed}: {got} vs {expected}"
            );
        }
    }

    #[test]
    fn infeasible_target_is_an_error() {
        let lp = random_log_probs(2, 3, 9);
        assert!(matches!(
            ctc_loss(&lp, &target(&[1, 1])),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn likelihood_is_a_probability() {
        for seed in 0..10u64 {
            let lp = random_log_probs(4, 3, seed);
            let loss = ctc_loss(&lp, &target(&[1, 2])).unwrap();
            let p = (-loss).exp();
            assert!(p > 0.0 && p <= 1.0, "p = {p}");
        }
    }

    #[test]
    fn loss_invariant_under_class_permutation() {
        let lp = random_log_probs(4, 4, 77);
        let loss = ctc_loss(&lp, &target(&[1, 3, 2])).unwrap();
        // swap classes 1 and 3 in both rows and target
        let permuted: Vec<f64> = (0..lp.frames())
            .flat_map(|t| {
                let row = lp.row(t);
                vec![row[0], row[3], row[2], row[1]]
            })
            .collect();
        let lp2 = LogProbMatrix {
            frames: 4,
            classes: 4,
            data: permuted,
        };
        let loss2 = ctc_loss(&lp2, &target(&[3, 1, 2])).unwrap();
        assert_abs_diff_eq!(loss, loss2, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-5;
        for seed in 0..6u64 {
            let (frames, classes) = (5, 4);
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 50);
            let logits: Vec<f64> = (0..frames * classes)
                .map(|_| rng.random_range(-1.5..1.5))
                .collect();
            let tgt = target(&[1, 2, 3]);
            let lp = LogProbMatrix::from_logits(frames, classes, logits.clone()).unwrap();
            let grad = ctc_gradients(&lp, &tgt).unwrap();
            for i in 0..logits.len() {
                let mut plus = logits.clone();
                plus[i] += h;
                let mut minus = logits.clone();
                minus[i] -= h;
                let lp_plus = LogProbMatrix::from_logits(frames, classes, plus).unwrap();
                let lp_minus = LogProbMatrix::from_logits(frames, classes, minus).unwrap();
                let fd = (ctc_loss(&lp_plus, &tgt).unwrap() - ctc_loss(&lp_minus, &tgt).unwrap())
                    / (2.0 * h);
                let err = (grad[i] - fd).abs() / f64::max(1.0, f64::max(grad[i].abs(), fd.abs()));
                assert!(err < 1e-4, "entry {i}: analytic {} vs fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let lp = random_log_probs(6, 4, 3);
        let grad = ctc_gradients(&lp, &target(&[2, 1])).unwrap();
        for t in 0..6 {
            let sum: f64 = grad[t * 4..(t + 1) * 4].iter().sum();
            assert_abs_diff_eq!(sum, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_frame_gradient_is_p_minus_onehot() {
        let lp = random_log_probs(1, 3, 12);
        let grad = ctc_gradients(&lp, &target(&[2])).unwrap();
        let p: Vec<f64> = lp.row(0).iter().map(|&l| l.exp()).collect();
        assert_abs_diff_eq!(grad[0], p[0], epsilon = 1e-12);
        assert_abs_diff_eq!(grad[1], p[1], epsilon = 1e-12);
        assert_abs_diff_eq!(grad[2], p[2] - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn greedy_decode_collapses_and_drops_blanks() {
        // frame argmaxes: A, A, blank, B -> [A, B]
        let probs = ProbMatrix::new(
            4,
            3,
            vec![
                0.1, 0.8, 0.1, //
                0.2, 0.7, 0.1, //
                0.9, 0.05, 0.05, //
                0.1, 0.1, 0.8,
            ],
        )
        .unwrap();
        assert_eq!(ctc_greedy_decode(&probs), vec![0, 1]);

        let all_blank = ProbMatrix::new(2, 2, vec![0.9, 0.1, 0.9, 0.1]).unwrap();
        assert_eq!(ctc_greedy_decode(&all_blank), Vec::<usize>::new());

        // blank separates a repeat: A, blank, A -> [A, A]
        let repeat = ProbMatrix::new(3, 2, vec![0.1, 0.9, 0.9, 0.1, 0.1, 0.9]).unwrap();
        assert_eq!(ctc_greedy_decode(&repeat), vec![0, 0]);
    }

    #[test]
    fn trainer_skips_infeasible_and_empty_records() {
        use crate::corpus::{build_vocabulary, Corpus, FeatureMatrix, SampleRecord};
        let mut ok = SampleRecord::new("ok");
        ok.llm_gloss = vec!["A".to_string(), "B".to_string()];
        let mut too_long = SampleRecord::new("too_long");
        too_long.llm_gloss = vec!["A".to_string(); 5];
        let mut empty = SampleRecord::new("empty");
        empty.llm_gloss = vec!["B".to_string()];
        let vocab = build_vocabulary(&[ok.clone(), too_long.clone()]).unwrap();
        empty.llm_gloss.clear();

        let frames = |n: usize| FeatureMatrix::new(n, 2, vec![0.1; n * 2]).unwrap();
        let corpus = Corpus::new(
            vec![ok, too_long, empty],
            vec![frames(4), frames(3), frames(2)],
        )
        .unwrap();
        let config = CtcTrainConfig {
            epochs: 2,
            targets: GlossSource::Llm,
            ..CtcTrainConfig::default()
        };
        let (_, report) = train_sign2gloss(&corpus, None, &vocab, &config).unwrap();
        assert_eq!(report.skipped, 2);
    }

    #[test]
    fn loss_schedule_weights() {
        let constant = LossSchedule::Constant { weight: 0.5 };
        assert_eq!(constant.weight(0, 10), 0.5);
        let drop = LossSchedule::DropFinal { epochs: 3 };
        assert_eq!(drop.weight(6, 10), 1.0);
        assert_eq!(drop.weight(7, 10), 0.0);
        assert_eq!(drop.weight(9, 10), 0.0);
    }
}
