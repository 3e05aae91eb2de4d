//! Subcommand implementations.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use glossweave_core::config::{load_config, ToolkitConfig};
use glossweave_core::corpus::{
    self, build_vocabulary, compute_weights, Corpus, GlossVocabulary, SampleRecord, CORPUS_FILE,
    ORACLE_FILE,
};
use glossweave_core::ctc::{self, CtcRecognizer, GlossSource};
use glossweave_core::llm::{self, generate, Convention, ExamplePair, LlmClient, PromptSpec};
use glossweave_core::metrics;
use glossweave_core::mlc::{self, LinearClassifier, CHECKPOINT_PLAIN};
use glossweave_core::reorder;
use glossweave_core::simulator::generate_corpus;

use crate::{CliError, CliResult, Command};

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { config, out, seed } => simulate(config.config, out, seed),
        Command::Gengloss {
            config,
            corpus,
            out,
            mock,
            endpoint,
            model,
            examples,
            num_examples,
        } => gengloss(
            config.config,
            corpus,
            out,
            mock,
            endpoint,
            model,
            examples,
            num_examples,
        ),
        Command::BaselineGloss {
            config,
            corpus,
            out,
        } => baseline_gloss(config.config, corpus, out),
        Command::TrainMlc {
            config,
            corpus,
            out,
            epochs,
            seed,
        } => train_mlc(config.config, corpus, out, epochs, seed),
        Command::Align {
            config,
            corpus,
            clf,
            audit,
            out,
        } => align(config.config, corpus, clf, audit, out),
        Command::TrainCtc {
            config,
            corpus,
            out,
            dev_corpus,
            targets,
            epochs,
            seed,
        } => train_ctc(
            config.config,
            corpus,
            out,
            dev_corpus,
            targets,
            epochs,
            seed,
        ),
        Command::Evaluate {
            config,
            corpus,
            clf,
            ctc,
            hyp,
            out,
        } => evaluate(config.config, corpus, clf, ctc, hyp, out),
        Command::Report { inputs } => report(inputs),
        Command::Config { config } => {
            let cfg = toolkit_config(config.config)?;
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(runtime)?);
            Ok(())
        }
    }
}

fn runtime(err: impl ToString) -> CliError {
    CliError::Runtime(err.to_string())
}

fn validation(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn toolkit_config(path: Option<PathBuf>) -> CliResult<ToolkitConfig> {
    match path {
        None => Ok(ToolkitConfig::default()),
        Some(p) => {
            require_file(&p, "config file")?;
            Ok(load_config(&p)?)
        }
    }
}

fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(validation(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn require_corpus_dir(dir: &Path) -> CliResult<()> {
    if !dir.join(CORPUS_FILE).is_file() {
        return Err(validation(format!(
            "no {CORPUS_FILE} in corpus directory {}",
            dir.display()
        )));
    }
    Ok(())
}

/// Write (possibly updated) records to `out`, copying feature files and the
/// oracle when writing to a different directory.
fn write_corpus_out(
    source_dir: &Path,
    out: Option<PathBuf>,
    records: &[SampleRecord],
) -> CliResult<()> {
    let out_dir = out.unwrap_or_else(|| source_dir.to_path_buf());
    fs::create_dir_all(&out_dir).map_err(runtime)?;
    corpus::write_records(&out_dir.join(CORPUS_FILE), records)?;
    if out_dir != source_dir {
        for record in records {
            if record.features.is_empty() {
                continue;
            }
            let src = source_dir.join(&record.features);
            if src.is_file() {
                let dst = out_dir.join(&record.features);
                if let Some(parent) = dst.parent() {
                    fs::create_dir_all(parent).map_err(runtime)?;
                }
                fs::copy(&src, &dst).map_err(runtime)?;
            }
        }
        let oracle = source_dir.join(ORACLE_FILE);
        if oracle.is_file() {
            fs::copy(&oracle, out_dir.join(ORACLE_FILE)).map_err(runtime)?;
        }
    }
    Ok(())
}

fn weighted_vocabulary(records: &[SampleRecord], w_base: f64) -> CliResult<GlossVocabulary> {
    Ok(compute_weights(build_vocabulary(records)?, w_base)?)
}

fn simulate(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> CliResult<()> {
    let mut cfg = toolkit_config(config)?;
    if let Some(seed) = seed {
        cfg.sim.seed = seed;
    }
    let sim = generate_corpus(&cfg.sim)?;
    corpus::save_corpus(&out, &sim.corpus)?;
    let ids: Vec<String> = sim.corpus.records.iter().map(|r| r.id.clone()).collect();
    corpus::write_oracle(&out.join(ORACLE_FILE), &ids, &sim.oracle)?;
    log::info!(
        "wrote {} records ({} glosses, dim {}) to {}",
        sim.corpus.len(),
        sim.vocab.len(),
        cfg.sim.feature_dim,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn gengloss(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    out: Option<PathBuf>,
    mock: Option<PathBuf>,
    endpoint: Option<String>,
    model: Option<String>,
    examples: Option<PathBuf>,
    num_examples: Option<usize>,
) -> CliResult<()> {
    let mut cfg = toolkit_config(config)?;
    if let Some(mock) = mock {
        require_file(&mock, "canned-response file")?;
        cfg.llm.mock_path = Some(mock);
    }
    if let Some(endpoint) = endpoint {
        cfg.llm.endpoint = endpoint;
    }
    if let Some(model) = model {
        cfg.llm.model = model;
    }
    require_corpus_dir(&corpus_dir)?;
    let mut records = corpus::read_records(&corpus_dir.join(CORPUS_FILE))?;

    let mut pairs: Vec<ExamplePair> = match &examples {
        None => Vec::new(),
        Some(path) => {
            require_file(path, "example-pairs file")?;
            let raw = fs::read_to_string(path).map_err(runtime)?;
            serde_json::from_str(&raw)
                .map_err(|e| validation(format!("{}: {e}", path.display())))?
        }
    };
    if let Some(n) = num_examples {
        pairs.truncate(n);
    }

    let convention = Convention::from_tag(&cfg.llm.language_tag)?;
    let mut spec = match convention {
        Convention::Dgs => PromptSpec::dgs(pairs),
        Convention::Asl => PromptSpec::asl(pairs),
    };
    spec.language_tag = cfg.llm.language_tag.clone();
    if let Some(q) = cfg.llm.queries_per_call {
        spec.queries_per_call = q;
    }

    let client = LlmClient::from_config(&cfg.llm.client_config())?;
    let report = generate(&mut records, &spec, &client)?;
    if let Some(max_len) = cfg.llm.max_gloss_len {
        let stops = llm::stop_set();
        for record in &mut records {
            record.llm_gloss =
                llm::cap_length(std::mem::take(&mut record.llm_gloss), max_len, &stops);
        }
    }
    write_corpus_out(&corpus_dir, out, &records)?;
    log::info!(
        "filled {} records ({} network calls)",
        report.filled,
        client.network_calls()
    );
    if !report.failures.is_empty() {
        for (id, reason) in &report.failures {
            log::error!("record {id}: {reason}");
        }
        return Err(runtime(format!(
            "{} of {} records failed after retries",
            report.failures.len(),
            records.len()
        )));
    }
    Ok(())
}

fn baseline_gloss(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let cfg = toolkit_config(config)?;
    require_corpus_dir(&corpus_dir)?;
    let mut records = corpus::read_records(&corpus_dir.join(CORPUS_FILE))?;
    let convention = Convention::from_tag(&cfg.llm.language_tag)?;
    let stops = llm::stop_set();
    let mut empty = 0usize;
    for record in &mut records {
        record.llm_gloss = llm::stopword_baseline(&record.text, &stops, convention);
        if record.llm_gloss.is_empty() {
            empty += 1;
            log::warn!("record {}: baseline gloss is empty", record.id);
        }
    }
    write_corpus_out(&corpus_dir, out, &records)?;
    log::info!("baseline glosses written ({empty} empty)");
    Ok(())
}

fn train_mlc(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    out: PathBuf,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> CliResult<()> {
    let mut cfg = toolkit_config(config)?;
    if let Some(epochs) = epochs {
        cfg.mlc.epochs = epochs;
    }
    if let Some(seed) = seed {
        cfg.mlc.seed = seed;
    }
    cfg.mlc.validate()?;
    require_corpus_dir(&corpus_dir)?;
    let corpus = corpus::load_corpus(&corpus_dir)?;
    let vocab = weighted_vocabulary(&corpus.records, cfg.mlc.w_base)?;
    let (classifier, history) = mlc::train(&corpus, &vocab, &cfg.mlc)?;
    classifier.save(&out, CHECKPOINT_PLAIN)?;
    log::info!(
        "trained frame classifier over {} glosses; final mean loss {:.6}; wrote {}",
        vocab.len(),
        history.epoch_loss.last().copied().unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn align(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    clf_path: PathBuf,
    audit: Option<PathBuf>,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let cfg = toolkit_config(config)?;
    require_corpus_dir(&corpus_dir)?;
    require_file(&clf_path, "classifier checkpoint")?;
    let mut corpus = corpus::load_corpus(&corpus_dir)?;
    let vocab = weighted_vocabulary(&corpus.records, cfg.mlc.w_base)?;
    let (classifier, version) = LinearClassifier::load(&clf_path)?;
    if version != CHECKPOINT_PLAIN {
        return Err(validation(format!(
            "{} is a blank-augmented recognizer, not a frame classifier",
            clf_path.display()
        )));
    }
    if classifier.classes() != vocab.len() {
        return Err(validation(format!(
            "classifier has {} classes but the corpus vocabulary has {}",
            classifier.classes(),
            vocab.len()
        )));
    }
    let results = reorder::align_corpus(&mut corpus, &classifier, &vocab)?;
    if let Some(audit_path) = &audit {
        reorder::write_audit(audit_path, &corpus, &results, &vocab)?;
        log::info!("audit written to {}", audit_path.display());
    }
    write_corpus_out(&corpus_dir, out, &corpus.records)?;
    log::info!("reordered {} records", corpus.len());
    Ok(())
}

fn parse_targets(raw: &str) -> CliResult<GlossSource> {
    match raw {
        "reordered" => Ok(GlossSource::Reordered),
        "llm" => Ok(GlossSource::Llm),
        "true" | "true_gloss" => Ok(GlossSource::TrueGloss),
        other => Err(validation(format!(
            "--targets must be reordered, llm, or true_gloss, got {other:?}"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_ctc(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    out: PathBuf,
    dev_corpus: Option<PathBuf>,
    targets: Option<String>,
    epochs: Option<usize>,
    seed: Option<u64>,
) -> CliResult<()> {
    let mut cfg = toolkit_config(config)?;
    if let Some(raw) = targets {
        cfg.ctc.targets = parse_targets(&raw)?;
    }
    if let Some(epochs) = epochs {
        cfg.ctc.epochs = epochs;
    }
    if let Some(seed) = seed {
        cfg.ctc.seed = seed;
    }
    cfg.ctc.validate()?;
    require_corpus_dir(&corpus_dir)?;
    let mut train = corpus::load_corpus(&corpus_dir)?;
    let dev = match &dev_corpus {
        None => None,
        Some(dir) => {
            require_corpus_dir(dir)?;
            Some(corpus::load_corpus(dir)?)
        }
    };
    let vocab = weighted_vocabulary(&train.records, cfg.mlc.w_base)?;
    let capped = ctc::cap_targets(&mut train, &llm::stop_set());
    if capped > 0 {
        log::info!("capped {capped} over-long gloss fields for CTC feasibility");
    }
    let (recognizer, report) = ctc::train_sign2gloss(&train, dev.as_ref(), &vocab, &cfg.ctc)?;
    recognizer.save(&out)?;
    log::info!(
        "trained recognizer; final mean loss {:.6}{}; skipped {}; wrote {}",
        report.epoch_loss.last().copied().unwrap_or(f64::NAN),
        report
            .dev_wer
            .last()
            .map(|w| format!(", dev WER {w:.4}"))
            .unwrap_or_default(),
        report.skipped,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MetricsFile {
    wer: f64,
    bleu1: f64,
    bleu2: f64,
    bleu3: f64,
    bleu4: f64,
    rouge_l: f64,
    precision: f64,
    recall: f64,
    kendall_llm: f64,
    kendall_reordered: f64,
    flags: Vec<String>,
}

const METRIC_COLUMNS: [&str; 10] = [
    "wer",
    "bleu1",
    "bleu2",
    "bleu3",
    "bleu4",
    "rouge_l",
    "precision",
    "recall",
    "kendall_llm",
    "kendall_reordered",
];

fn evaluate(
    config: Option<PathBuf>,
    corpus_dir: PathBuf,
    clf_path: Option<PathBuf>,
    ctc_path: Option<PathBuf>,
    hyp: String,
    out: Option<PathBuf>,
) -> CliResult<()> {
    let cfg = toolkit_config(config)?;
    require_corpus_dir(&corpus_dir)?;
    let needs_features = clf_path.is_some() || ctc_path.is_some();
    let corpus = if needs_features {
        corpus::load_corpus(&corpus_dir)?
    } else {
        let records = corpus::read_records(&corpus_dir.join(CORPUS_FILE))?;
        Corpus {
            features: Vec::new(),
            records,
        }
    };
    let references: Vec<Vec<String>> = corpus
        .records
        .iter()
        .map(|r| {
            r.true_gloss
                .clone()
                .ok_or_else(|| validation(format!("record {}: evaluate requires true_gloss", r.id)))
        })
        .collect::<CliResult<_>>()?;

    let mut flags: Vec<String> = Vec::new();
    let recognizer = match &ctc_path {
        None => None,
        Some(path) => {
            require_file(path, "recognizer checkpoint")?;
            Some(CtcRecognizer::load(path)?)
        }
    };
    let vocab = weighted_vocabulary(&corpus.records, cfg.mlc.w_base)?;

    let source = match hyp.as_str() {
        "auto" => {
            if recognizer.is_some() {
                "decode"
            } else if corpus.records.iter().all(|r| r.reordered_gloss.is_some()) {
                "reordered"
            } else {
                "llm"
            }
        }
        other => other,
    };
    let hypotheses: Vec<Vec<String>> = match source {
        "decode" => {
            let recognizer = recognizer
                .as_ref()
                .ok_or_else(|| validation("--hyp decode requires --ctc"))?;
            if recognizer.vocab_classes() != vocab.len() {
                return Err(validation(format!(
                    "recognizer covers {} glosses but the corpus vocabulary has {}",
                    recognizer.vocab_classes(),
                    vocab.len()
                )));
            }
            corpus
                .features
                .iter()
                .map(|f| recognizer.decode_tokens(f, &vocab))
                .collect::<Result<_, _>>()?
        }
        "reordered" => corpus
            .records
            .iter()
            .map(|r| {
                r.reordered_gloss.clone().ok_or_else(|| {
                    validation(format!("record {}: no reordered_gloss (run align)", r.id))
                })
            })
            .collect::<CliResult<_>>()?,
        "llm" => corpus.records.iter().map(|r| r.llm_gloss.clone()).collect(),
        other => {
            return Err(validation(format!(
                "--hyp must be auto, decode, reordered, or llm, got {other:?}"
            )))
        }
    };
    log::info!("scoring hypothesis source: {source}");

    let pairs: Vec<(Vec<String>, Vec<String>)> = hypotheses
        .iter()
        .cloned()
        .zip(references.iter().cloned())
        .collect();
    let wer = metrics::corpus_wer(&pairs)?;
    let mut bleu = [0.0f64; 4];
    for (n, slot) in bleu.iter_mut().enumerate() {
        *slot = metrics::bleu(&hypotheses, &references, n + 1)?;
    }
    let rouge_l = {
        let mut total = 0.0;
        for (hyp_seq, reference) in hypotheses.iter().zip(&references) {
            total += metrics::rouge_l(hyp_seq, reference)?;
        }
        total / references.len().max(1) as f64
    };

    let (precision, recall) = match &clf_path {
        None => {
            flags.push("precision_recall_unavailable_without_clf".to_string());
            (0.0, 0.0)
        }
        Some(path) => {
            require_file(path, "classifier checkpoint")?;
            let (classifier, version) = LinearClassifier::load(path)?;
            if version != CHECKPOINT_PLAIN {
                return Err(validation(format!(
                    "{} is not a frame classifier checkpoint",
                    path.display()
                )));
            }
            if classifier.classes() != vocab.len() {
                return Err(validation(format!(
                    "classifier has {} classes but the corpus vocabulary has {}",
                    classifier.classes(),
                    vocab.len()
                )));
            }
            let mut predicted = Vec::with_capacity(corpus.len());
            let mut truth = Vec::with_capacity(corpus.len());
            for (record, features) in corpus.records.iter().zip(&corpus.features) {
                predicted.push(mlc::predict_set(&classifier, features, cfg.eval.threshold)?);
                let set: BTreeSet<usize> = record
                    .true_gloss
                    .as_ref()
                    .expect("checked above")
                    .iter()
                    .filter_map(|t| vocab.id(t))
                    .collect();
                truth.push(set);
            }
            let pr = metrics::set_precision_recall(&predicted, &truth)?;
            if !pr.precision_defined {
                flags.push("precision_undefined_all_predictions_empty".to_string());
            }
            (pr.precision, pr.recall)
        }
    };

    let kendall_llm = corpus
        .records
        .iter()
        .zip(&references)
        .map(|(r, reference)| metrics::kendall_distance(&r.llm_gloss, reference))
        .sum::<f64>()
        / corpus.len().max(1) as f64;
    let reordered_count = corpus
        .records
        .iter()
        .filter(|r| r.reordered_gloss.is_some())
        .count();
    let kendall_reordered = if reordered_count == 0 {
        flags.push("kendall_reordered_unavailable_without_align".to_string());
        0.0
    } else {
        corpus
            .records
            .iter()
            .zip(&references)
            .filter_map(|(r, reference)| {
                r.reordered_gloss
                    .as_ref()
                    .map(|g| metrics::kendall_distance(g, reference))
            })
            .sum::<f64>()
            / reordered_count as f64
    };

    let file = MetricsFile {
        wer,
        bleu1: bleu[0],
        bleu2: bleu[1],
        bleu3: bleu[2],
        bleu4: bleu[3],
        rouge_l,
        precision,
        recall,
        kendall_llm,
        kendall_reordered,
        flags,
    };

    let values = [
        file.wer,
        file.bleu1,
        file.bleu2,
        file.bleu3,
        file.bleu4,
        file.rouge_l,
        file.precision,
        file.recall,
        file.kendall_llm,
        file.kendall_reordered,
    ];
    let width = METRIC_COLUMNS.iter().map(|c| c.len()).max().unwrap();
    println!("{:<width$}  value", "metric");
    for (name, value) in METRIC_COLUMNS.iter().zip(values) {
        println!("{name:<width$}  {value:.4}");
    }
    for flag in &file.flags {
        println!("flag: {flag}");
    }

    let out_path = out.unwrap_or_else(|| corpus_dir.join("metrics.json"));
    if let Some(parent) = out_path.parent() {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    fs::write(
        &out_path,
        serde_json::to_string_pretty(&file).map_err(runtime)? + "\n",
    )
    .map_err(runtime)?;
    log::info!("metrics written to {}", out_path.display());
    Ok(())
}

fn report(inputs: Vec<PathBuf>) -> CliResult<()> {
    let mut rows: Vec<(String, serde_json::Value)> = Vec::new();
    for path in &inputs {
        require_file(path, "metrics file")?;
        let raw = fs::read_to_string(path).map_err(runtime)?;
        let value: serde_json::Value = serde_json::from_str(&raw)
            .map_err(|e| validation(format!("{}: {e}", path.display())))?;
        let label = path
            .parent()
            .and_then(Path::file_name)
            .map(|s| s.to_string_lossy().into_owned())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| path.display().to_string());
        rows.push((label, value));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let label_width = rows
        .iter()
        .map(|(l, _)| l.len())
        .chain(std::iter::once("run".len()))
        .max()
        .unwrap();
    let cell = 9usize;
    print!("{:<label_width$}", "run");
    for column in METRIC_COLUMNS {
        print!("  {column:>cell$}");
    }
    println!();
    for (label, value) in &rows {
        print!("{label:<label_width$}");
        for column in METRIC_COLUMNS {
            match value.get(column).and_then(serde_json::Value::as_f64) {
                Some(v) => print!("  {v:>cell$.4}"),
                None => print!("  {:>cell$}", "-"),
            }
        }
        println!();
    }
    Ok(())
}
