//! Prompt assembly and rendering.
//!
//! The scored input is an ordered bundle: system prompt, reference
//! questions, target question, prior steps, reference steps, target step.
//! Reference steps are attached immediately before the target step and
//! nowhere else; prior steps are rendered bare. Rendering is
//! byte-deterministic, and a bundle with no references renders to exactly
//! the baseline (retrieval-free) template output.
//!
//! Payload lines that would collide with a section delimiter are escaped by
//! prefixing a backslash, so section order survives adversarial step text.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retrieval::RetrievalBundle;

pub const TEMPLATE_SCHEMA: &str = "rprm-template/1";
pub const TRAIN_SCHEMA: &str = "rprm-train/1";

const ESCAPE: char = '\\';

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("target step is empty")]
    EmptyTargetStep,
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("label {0} outside {{0,1}}")]
    InvalidLabel(u8),
    #[error("template file {path}: {message}")]
    BadFile { path: String, message: String },
}

/// The hard prompt template: system texts, section delimiters, and the two
/// label tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    /// Baseline instructions, including what "+" and "-" mean.
    pub system_prompt: String,
    /// Appended to the system prompt when any reference is present; tells
    /// the model to ignore unhelpful references. Empty in the baseline
    /// template.
    pub retrieval_extension: String,
    pub reference_questions_delimiter: String,
    pub question_delimiter: String,
    pub prior_steps_delimiter: String,
    pub reference_steps_delimiter: String,
    pub current_step_delimiter: String,
    pub positive_token: String,
    pub negative_token: String,
    /// Include each reference question's solutions, not just its text.
    pub include_reference_solutions: bool,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            version: "default-v1".to_string(),
            system_prompt: "You are a verifier of step-by-step solutions to math problems. \
                            Given a question, the steps so far, and the current step, judge \
                            whether the current step is correct. All previous steps are known \
                            to be correct. Answer with \"+\" if the current step is correct \
                            and \"-\" if it is incorrect."
                .to_string(),
            retrieval_extension: "Reference questions and reference steps that are similar to \
                                  this problem may be provided as a warm-up. You may use them \
                                  to inform your judgment; if a reference question or step \
                                  contains no relevant or helpful information, it should not \
                                  be considered."
                .to_string(),
            reference_questions_delimiter: "### Reference Questions".to_string(),
            question_delimiter: "### Question".to_string(),
            prior_steps_delimiter: "### Previous Steps".to_string(),
            reference_steps_delimiter: "### Reference Steps".to_string(),
            current_step_delimiter: "### Current Step".to_string(),
            positive_token: "+".to_string(),
            negative_token: "-".to_string(),
            include_reference_solutions: true,
        }
    }
}

impl PromptTemplate {
    /// The same template with the retrieval extension removed: what a plain
    /// (non-retrieval) verifier would be prompted with.
    pub fn baseline(&self) -> Self {
        let mut t = self.clone();
        t.retrieval_extension = String::new();
        t
    }

    pub fn delimiters(&self) -> [&str; 5] {
        [
            &self.reference_questions_delimiter,
            &self.question_delimiter,
            &self.prior_steps_delimiter,
            &self.reference_steps_delimiter,
            &self.current_step_delimiter,
        ]
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.positive_token == self.negative_token {
            return Err(PromptError::InvalidTemplate(
                "positive and negative tokens are equal".to_string(),
            ));
        }
        if self.positive_token.is_empty() || self.negative_token.is_empty() {
            return Err(PromptError::InvalidTemplate(
                "empty label token".to_string(),
            ));
        }
        let delims = self.delimiters();
        for (i, d) in delims.iter().enumerate() {
            if d.is_empty() {
                return Err(PromptError::InvalidTemplate("empty delimiter".to_string()));
            }
            if d.contains('\n') {
                return Err(PromptError::InvalidTemplate(format!(
                    "delimiter {d:?} spans multiple lines"
                )));
            }
            for other in delims.iter().skip(i + 1) {
                if d == other {
                    return Err(PromptError::InvalidTemplate(format!(
                        "delimiter {d:?} is not unique"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Escape payload text so none of its lines collides with a delimiter
    /// line or an escape prefix.
    pub fn escape_payload(&self, text: &str) -> String {
        let delims = self.delimiters();
        let lines: Vec<String> = text
            .split('\n')
            .map(|line| {
                if line.starts_with(ESCAPE) || delims.contains(&line) {
                    format!("{ESCAPE}{line}")
                } else {
                    line.to_string()
                }
            })
            .collect();
        lines.join("\n")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let content = fs::read_to_string(path).map_err(|e| PromptError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let file: TemplateFile = toml::from_str(&content).map_err(|e| PromptError::BadFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        if file.schema != TEMPLATE_SCHEMA {
            return Err(PromptError::BadFile {
                path: path.display().to_string(),
                message: format!(
                    "wrong schema {:?}, expected {TEMPLATE_SCHEMA:?}",
                    file.schema
                ),
            });
        }
        let template = PromptTemplate {
            version: file.version,
            system_prompt: file.system_prompt,
            retrieval_extension: file.retrieval_extension,
            reference_questions_delimiter: file.delimiters.reference_questions,
            question_delimiter: file.delimiters.question,
            prior_steps_delimiter: file.delimiters.prior_steps,
            reference_steps_delimiter: file.delimiters.reference_steps,
            current_step_delimiter: file.delimiters.current_step,
            positive_token: file.positive_token,
            negative_token: file.negative_token,
            include_reference_solutions: file.include_reference_solutions,
        };
        template.validate()?;
        Ok(template)
    }

    pub fn to_toml(&self) -> String {
        let file = TemplateFile {
            schema: TEMPLATE_SCHEMA.to_string(),
            version: self.version.clone(),
            positive_token: self.positive_token.clone(),
            negative_token: self.negative_token.clone(),
            include_reference_solutions: self.include_reference_solutions,
            system_prompt: self.system_prompt.clone(),
            retrieval_extension: self.retrieval_extension.clone(),
            delimiters: TemplateDelimiters {
                reference_questions: self.reference_questions_delimiter.clone(),
                question: self.question_delimiter.clone(),
                prior_steps: self.prior_steps_delimiter.clone(),
                reference_steps: self.reference_steps_delimiter.clone(),
                current_step: self.current_step_delimiter.clone(),
            },
        };
        toml::to_string_pretty(&file).expect("template serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateFile {
    schema: String,
    version: String,
    positive_token: String,
    negative_token: String,
    #[serde(default = "default_true")]
    include_reference_solutions: bool,
    system_prompt: String,
    #[serde(default)]
    retrieval_extension: String,
    delimiters: TemplateDelimiters,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct TemplateDelimiters {
    reference_questions: String,
    question: String,
    prior_steps: String,
    reference_steps: String,
    current_step: String,
}

/// Strip one level of payload escaping.
pub fn unescape_payload(text: &str) -> String {
    let lines: Vec<&str> = text
        .split('\n')
        .map(|line| line.strip_prefix(ESCAPE).unwrap_or(line))
        .collect();
    lines.join("\n")
}

/// A reference question and the steps of each of its solutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceQuestion {
    pub question: String,
    pub solutions: Vec<Vec<String>>,
}

/// The ordered input for scoring one step: system text, reference
/// questions, target question, prior steps, reference steps, target step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub reference_questions: Vec<ReferenceQuestion>,
    pub question: String,
    pub prior_steps: Vec<String>,
    pub reference_steps: Vec<String>,
    pub target_step: String,
}

impl PromptBundle {
    /// 1-based index of the target step.
    pub fn step_index(&self) -> usize {
        self.prior_steps.len() + 1
    }
}

/// A rendered prompt: deterministic text plus its hash and the template
/// version that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub template_version: String,
    pub content_hash: String,
}

/// Build the ordered bundle for scoring step j of a question. `prior_steps`
/// must be exactly steps 1..j-1; the retrieval bundle contributes reference
/// questions and the reference steps retrieved for this target step only.
pub fn assemble_input(
    question: &str,
    prior_steps: &[String],
    target_step: &str,
    retrieval: &RetrievalBundle,
    template: &PromptTemplate,
) -> Result<PromptBundle, PromptError> {
    if target_step.is_empty() {
        return Err(PromptError::EmptyTargetStep);
    }
    template.validate()?;

    let reference_questions: Vec<ReferenceQuestion> = retrieval
        .reference_questions
        .iter()
        .map(|hit| ReferenceQuestion {
            question: hit.question_text.clone(),
            solutions: if template.include_reference_solutions {
                hit.solutions.iter().map(|s| s.steps.clone()).collect()
            } else {
                Vec::new()
            },
        })
        .collect();
    let reference_steps: Vec<String> = retrieval
        .reference_steps
        .iter()
        .map(|hit| hit.text.clone())
        .collect();

    let has_references = !reference_questions.is_empty() || !reference_steps.is_empty();
    let system_text = if has_references && !template.retrieval_extension.is_empty() {
        format!(
            "{}\n\n{}",
            template.system_prompt, template.retrieval_extension
        )
    } else {
        template.system_prompt.clone()
    };

    Ok(PromptBundle {
        system_text,
        reference_questions,
        question: question.to_string(),
        prior_steps: prior_steps.to_vec(),
        reference_steps,
        target_step: target_step.to_string(),
    })
}

/// Render a bundle to text. Sections appear in bundle order; reference
/// sections are omitted entirely when empty, which is what makes the
/// empty-retrieval rendering byte-identical to the baseline template's.
pub fn render(
    template: &PromptTemplate,
    bundle: &PromptBundle,
) -> Result<RenderedPrompt, PromptError> {
    template.validate()?;
    let mut blocks: Vec<String> = Vec::with_capacity(6);

    blocks.push(bundle.system_text.clone());

    if !bundle.reference_questions.is_empty() {
        let mut block = template.reference_questions_delimiter.clone();
        for (qi, reference) in bundle.reference_questions.iter().enumerate() {
            block.push_str(&format!(
                "\nReference Question {}:\n{}",
                qi + 1,
                template.escape_payload(&reference.question)
            ));
            for (si, solution) in reference.solutions.iter().enumerate() {
                block.push_str(&format!("\nReference Solution {}.{}:", qi + 1, si + 1));
                for (j, step) in solution.iter().enumerate() {
                    block.push_str(&format!(
                        "\nStep {}: {}",
                        j + 1,
                        template.escape_payload(step)
                    ));
                }
            }
        }
        blocks.push(block);
    }

    blocks.push(format!(
        "{}\n{}",
        template.question_delimiter,
        template.escape_payload(&bundle.question)
    ));

    let mut prior_block = template.prior_steps_delimiter.clone();
    for (j, step) in bundle.prior_steps.iter().enumerate() {
        prior_block.push_str(&format!(
            "\nStep {}: {}",
            j + 1,
            template.escape_payload(step)
        ));
    }
    blocks.push(prior_block);

    if !bundle.reference_steps.is_empty() {
        let mut block = template.reference_steps_delimiter.clone();
        for (i, step) in bundle.reference_steps.iter().enumerate() {
            block.push_str(&format!(
                "\nReference Step {}: {}",
                i + 1,
                template.escape_payload(step)
            ));
        }
        blocks.push(block);
    }

    blocks.push(format!(
        "{}\nStep {}: {}",
        template.current_step_delimiter,
        bundle.step_index(),
        template.escape_payload(&bundle.target_step)
    ));

    let text = format!("{}\n", blocks.join("\n\n"));
    let content_hash = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(RenderedPrompt {
        text,
        template_version: template.version.clone(),
        content_hash,
    })
}

/// Byte offset of a section delimiter line in rendered text. Payload
/// collisions are escaped at render time, so an unescaped match is the
/// section marker itself.
pub fn delimiter_offset(text: &str, delimiter: &str) -> Option<usize> {
    let needle = format!("\n{delimiter}\n");
    text.find(&needle).map(|p| p + 1)
}

/// Content of the current-step section of a rendered prompt: the text after
/// the last current-step delimiter, with the "Step N: " prefix and payload
/// escaping removed. Used by label-oracle scorers to recover the target
/// step.
pub fn extract_current_step(text: &str, template: &PromptTemplate) -> Option<String> {
    let needle = format!("\n{}\n", template.current_step_delimiter);
    let start = text.rfind(&needle)? + needle.len();
    let section = text[start..].strip_suffix('\n').unwrap_or(&text[start..]);
    let first_newline = section.find('\n').unwrap_or(section.len());
    let first_line = &section[..first_newline];
    let rest = &section[first_newline..];
    let stripped = strip_step_prefix(first_line).unwrap_or(first_line);
    Some(unescape_payload(&format!("{stripped}{rest}")))
}

/// Content of the question section of a rendered prompt, unescaped.
pub fn extract_question(text: &str, template: &PromptTemplate) -> Option<String> {
    let start_needle = format!("\n{}\n", template.question_delimiter);
    let start = text.find(&start_needle)? + start_needle.len();
    let end_needle = format!("\n{}\n", template.prior_steps_delimiter);
    let end = text[start..].find(&end_needle)? + start;
    let section = text[start..end]
        .strip_suffix('\n')
        .unwrap_or(&text[start..end]);
    Some(unescape_payload(section))
}

fn strip_step_prefix(line: &str) -> Option<&str> {
    let rest = line.strip_prefix("Step ")?;
    let colon = rest.find(": ")?;
    rest[..colon].parse::<usize>().ok()?;
    Some(&rest[colon + 2..])
}

/// One instruction-tuning record: the rendered prompt and the label token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub prompt: String,
    pub completion: String,
    pub meta: TrainingMeta,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub question_id: String,
    pub solution_id: String,
    pub step_index: usize,
    pub template_version: String,
}

impl TrainingRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "schema": TRAIN_SCHEMA,
            "prompt": self.prompt,
            "completion": self.completion,
            "meta": self.meta,
        })
        .to_string()
    }
}

/// Render a bundle as a training record: positive token iff label is 1.
pub fn render_training_record(
    template: &PromptTemplate,
    bundle: &PromptBundle,
    label: u8,
    meta: TrainingMeta,
) -> Result<TrainingRecord, PromptError> {
    let completion = match label {
        1 => template.positive_token.clone(),
        0 => template.negative_token.clone(),
        other => return Err(PromptError::InvalidLabel(other)),
    };
    let rendered = render(template, bundle)?;
    Ok(TrainingRecord {
        prompt: rendered.text,
        completion,
        meta,
    })
}
