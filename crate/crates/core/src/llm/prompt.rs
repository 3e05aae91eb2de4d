//! Prompt construction for pseudo-gloss generation and parsing of the
//! bracketed gloss lists the model returns.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::Convention;

/// One in-context text/gloss pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub text: String,
    pub gloss: String,
}

/// Everything needed to render a generation prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub example_pairs: Vec<ExamplePair>,
    /// The glossing-rule block placed between examples and query slots.
    pub instruction: String,
    pub queries_per_call: usize,
    /// Convention identifier, e.g. `DGS-weather` or `ASL`.
    pub language_tag: String,
}

const DGS_FEWSHOT_RULES: &str = "The output gloss should be optimized for sign language video translation by considering which words (e.g., nouns, adjectives, adverbs, numbers) are crucial in the context of weather forecasting.\n\nThe gloss should:\n- Exclude function words like articles (\"der, die, das\") and auxiliary verbs unless necessary.\n- Preserve key content words such as weather conditions, time expressions, and geographic references.\n- Follow the typical structure of German sign language glosses for video.";

const DGS_ZEROSHOT_RULES: &str = "Your task is to generate German Sign Language gloss based on the given German text. Your gloss generation should align with the standard glossing conventions used in German Sign Language, particularly in the context of weather forecasting. The output gloss should be optimized for sign language video translation by considering which words (e.g., nouns, adjectives, adverbs, numbers) are crucial in the context of weather forecasting.\n\nThe gloss should:\n- All numbers must be written in German words (e.g., \"eins\", \"zwei\", \"drei\").\n- Exclude function words like articles (\"der, die, das\") and auxiliary verbs unless necessary.\n- Preserve key content words such as weather conditions, time expressions, and geographic references.\n- Follow the typical structure of German sign language glosses for video.";

const ASL_RULES: &str = "Your task is to generate an American Sign Language (ASL) gloss based on the given English sentence.\n\nGlossing Guidelines:\nPreserve key content words, such as nouns, adjectives, verbs, adverbs, and numbers, while omitting function words like articles (\"a, the\") and auxiliary verbs unless necessary.\n\nConvert numbers into fingerspelling-friendly formats (e.g., \"21\" should be \"TWO-ONE\").\nSpell out names and place names using ASL fingerspelling conventions, unless an established ASL sign exists.\nUse common ASL gloss abbreviations where applicable (e.g., \"IX\" for pronouns).";

const DGS_EXAMPLES_HEADER: &str = "German text to German gloss examples:";

const DGS_BRIDGE: &str = "These examples demonstrate the transformation from natural German text into structured German gloss, specifically based on the benchmark for sign language translation in German weather forecasts.";

const DGS_OUTPUT_DIRECTIVE: &str =
    "The output should follow the following format without any text formatting:\nOutput: the generated gloss.";

impl PromptSpec {
    /// German weather-forecast template: one query per call, upper-case
    /// glosses. Zero example pairs select the zero-shot rule block.
    pub fn dgs(example_pairs: Vec<ExamplePair>) -> Self {
        let instruction = if example_pairs.is_empty() {
            DGS_ZEROSHOT_RULES
        } else {
            DGS_FEWSHOT_RULES
        };
        PromptSpec {
            example_pairs,
            instruction: instruction.to_string(),
            queries_per_call: 1,
            language_tag: "DGS-weather".to_string(),
        }
    }

    /// ASL template: three queries per call, lower-case glosses.
    pub fn asl(example_pairs: Vec<ExamplePair>) -> Self {
        PromptSpec {
            example_pairs,
            instruction: ASL_RULES.to_string(),
            queries_per_call: 3,
            language_tag: "ASL".to_string(),
        }
    }

    pub fn convention(&self) -> Result<Convention> {
        Convention::from_tag(&self.language_tag)
    }

    pub fn validate(&self) -> Result<()> {
        if self.queries_per_call == 0 {
            return Err(Error::Config(
                "llm.queries_per_call: must be at least 1".into(),
            ));
        }
        self.convention()?;
        Ok(())
    }
}

fn count_word(n: usize) -> String {
    match n {
        1 => "one".into(),
        2 => "two".into(),
        3 => "three".into(),
        4 => "four".into(),
        5 => "five".into(),
        6 => "six".into(),
        7 => "seven".into(),
        8 => "eight".into(),
        9 => "nine".into(),
        10 => "ten".into(),
        _ => n.to_string(),
    }
}

/// Render the generation prompt for a batch of queries.
///
/// Byte-deterministic: equal inputs produce equal prompts. `queries` may be
/// shorter than `queries_per_call` for a final partial batch, never longer.
pub fn build_prompt(spec: &PromptSpec, queries: &[String]) -> Result<String> {
    spec.validate()?;
    if queries.is_empty() || queries.len() > spec.queries_per_call {
        return Err(Error::Config(format!(
            "prompt expects 1..={} queries, got {}",
            spec.queries_per_call,
            queries.len()
        )));
    }
    match spec.convention()? {
        Convention::Dgs => Ok(build_dgs(spec, queries)),
        Convention::Asl => Ok(build_asl(spec, queries)),
    }
}

fn build_dgs(spec: &PromptSpec, queries: &[String]) -> String {
    let mut blocks: Vec<String> = Vec::new();
    if !spec.example_pairs.is_empty() {
        let mut examples = String::from(DGS_EXAMPLES_HEADER);
        examples.push('\n');
        for (n, pair) in spec.example_pairs.iter().enumerate() {
            examples.push_str(&format!(
                "\nExample {}: text: [{}] gloss: [{}]",
                n + 1,
                pair.text,
                pair.gloss
            ));
        }
        blocks.push(examples);
        blocks.push(DGS_BRIDGE.to_string());
    }
    blocks.push(spec.instruction.clone());

    let lead = if spec.example_pairs.is_empty() {
        if queries.len() == 1 {
            "text".to_string()
        } else {
            format!("Here are the {} German texts:", count_word(queries.len()))
        }
    } else if queries.len() == 1 {
        "Now, based on the examples provided above, please infer the most suitable German gloss sequence for the following German text:".to_string()
    } else {
        format!(
            "Now, based on the examples provided above, please infer the most suitable German gloss sequence for the following {} German texts:",
            count_word(queries.len())
        )
    };
    if queries.len() == 1 {
        if spec.example_pairs.is_empty() {
            blocks.push(format!("text: [{}]", queries[0]));
        } else {
            blocks.push(lead);
            blocks.push(format!("text: [{}]", queries[0]));
        }
    } else {
        blocks.push(lead);
        for (n, query) in queries.iter().enumerate() {
            blocks.push(format!("text{}: [{}]", n + 1, query));
        }
    }
    blocks.push(DGS_OUTPUT_DIRECTIVE.to_string());
    blocks.join("\n\n")
}

fn build_asl(spec: &PromptSpec, queries: &[String]) -> String {
    let mut blocks: Vec<String> = vec![spec.instruction.clone()];
    if !spec.example_pairs.is_empty() {
        blocks.push("Examples:".to_string());
        for pair in &spec.example_pairs {
            blocks.push(format!("sentence: [{}] gloss: [{}]", pair.text, pair.gloss));
        }
    }
    if queries.len() == 1 {
        blocks.push(
            "Now, infer the most suitable ASL gloss sequence for the following English sentence:"
                .to_string(),
        );
    } else {
        blocks.push(format!(
            "Now, infer the most suitable ASL gloss sequence for the following {} English sentences:",
            count_word(queries.len())
        ));
    }
    for (n, query) in queries.iter().enumerate() {
        blocks.push(format!("sentence{}: [{}]", n + 1, query));
    }
    blocks.push(
        "The output should be a single line containing the generated gloss without any additional text formatting:"
            .to_string(),
    );
    for n in 1..queries.len() {
        blocks.push(format!("[generated gloss{n}]"));
    }
    blocks.push(format!("[generated gloss{}].", queries.len()));
    blocks.join("\n\n")
}

/// Extract exactly `expected` bracketed token groups, in order, tolerating
/// an `Output:` prefix and surrounding prose. Tokens split on whitespace.
pub fn parse_response(raw: &str, expected: usize) -> Result<Vec<Vec<String>>> {
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut rest = raw;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else {
            break;
        };
        groups.push(
            after[..close]
                .split_whitespace()
                .map(str::to_string)
                .collect(),
        );
        rest = &after[close + 1..];
    }
    if groups.len() != expected {
        return Err(Error::ResponseParse {
            expected,
            found: groups.len(),
            raw: raw.to_string(),
        });
    }
    Ok(groups)
}
