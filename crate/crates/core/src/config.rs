//! The toolkit configuration file: one JSON document with `sim`, `llm`,
//! `mlc`, `ctc`, and `eval` sections. Every field has a documented default,
//! unknown keys are rejected, and violations are reported with a
//! `section.field` path.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctc::CtcTrainConfig;
use crate::error::{Error, Result};
use crate::llm::LlmClientConfig;
use crate::mlc::MlcTrainConfig;
use crate::simulator::SimConfig;

pub use crate::DEFAULT_SEED;

/// The `llm` section: client settings plus prompt preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSection {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
    pub mock_path: Option<PathBuf>,
    pub response_text_path: String,
    /// Convention identifier, e.g. `DGS-weather` or `ASL`.
    pub language_tag: String,
    /// `None` selects the per-convention default (1 for DGS, 3 for ASL).
    pub queries_per_call: Option<usize>,
    /// Cap generated glosses to this many tokens; `None` leaves them uncut.
    pub max_gloss_len: Option<usize>,
}

impl Default for LlmSection {
    fn default() -> Self {
        let client = LlmClientConfig::default();
        LlmSection {
            endpoint: client.endpoint,
            model: client.model,
            timeout_secs: client.timeout_secs,
            max_retries: client.max_retries,
            mock_path: None,
            response_text_path: client.response_text_path,
            language_tag: "DGS-weather".to_string(),
            queries_per_call: None,
            max_gloss_len: None,
        }
    }
}

impl LlmSection {
    pub fn client_config(&self) -> LlmClientConfig {
        LlmClientConfig {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            timeout_secs: self.timeout_secs,
            max_retries: self.max_retries,
            mock_path: self.mock_path.clone(),
            response_text_path: self.response_text_path.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.client_config().validate()?;
        crate::llm::Convention::from_tag(&self.language_tag)
            .map_err(|e| Error::Config(format!("llm.language_tag: {e}")))?;
        if self.queries_per_call == Some(0) {
            return Err(Error::Config(
                "llm.queries_per_call: must be at least 1".into(),
            ));
        }
        if self.max_gloss_len == Some(0) {
            return Err(Error::Config(
                "llm.max_gloss_len: must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// The `eval` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Presence threshold for set prediction metrics.
    pub threshold: f64,
    pub bleu_max_n: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold: 0.5,
            bleu_max_n: 4,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "eval.threshold: {} must lie in (0, 1)",
                self.threshold
            )));
        }
        if !(1..=4).contains(&self.bleu_max_n) {
            return Err(Error::Config(format!(
                "eval.bleu_max_n: {} must lie in 1..=4",
                self.bleu_max_n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolkitConfig {
    pub sim: SimConfig,
    pub llm: LlmSection,
    pub mlc: MlcTrainConfig,
    pub ctc: CtcTrainConfig,
    pub eval: EvalConfig,
}

impl ToolkitConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.llm.validate()?;
        self.mlc.validate()?;
        self.ctc.validate()?;
        self.eval.validate()
    }
}

const SECTIONS: [&str; 5] = ["sim", "llm", "mlc", "ctc", "eval"];

fn parse_section<T: for<'de> Deserialize<'de> + Default>(
    root: &serde_json::Map<String, serde_json::Value>,
    name: &str,
) -> Result<T> {
    match root.get(name) {
        None => Ok(T::default()),
        Some(value) => {
            serde_json::from_value(value.clone()).map_err(|e| Error::Config(format!("{name}: {e}")))
        }
    }
}

/// Load and validate a toolkit config. A missing section or field takes its
/// default; an unknown section or field is rejected with its path.
pub fn load_config(path: &Path) -> Result<ToolkitConfig> {
    let raw = fs::read_to_string(path)?;
    parse_config(&raw)
}

pub fn parse_config(raw: &str) -> Result<ToolkitConfig> {
    let value: serde_json::Value = serde_json::from_str(raw)?;
    let root = value
        .as_object()
        .ok_or_else(|| Error::Config("config root must be a JSON object".into()))?;
    for key in root.keys() {
        if !SECTIONS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "{key}: unknown section (expected one of {SECTIONS:?})"
            )));
        }
    }
    let config = ToolkitConfig {
        sim: parse_section(root, "sim")?,
        llm: parse_section(root, "llm")?,
        mlc: parse_section(root, "mlc")?,
        ctc: parse_section(root, "ctc")?,
        eval: parse_section(root, "eval")?,
    };
    config.validate()?;
    Ok(config)
}
