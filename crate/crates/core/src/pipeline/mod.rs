//! Two-stage generation with validation feedback and a four-rung
//! degradation ladder: Full, SinglePass, BasicStyle, Emergency.
//!
//! | stage 1 | stage 2 | single pass | level      |
//! |---------|---------|-------------|------------|
//! | ok      | ok      | not run     | Full       |
//! | ok      | fails   | not run     | BasicStyle |
//! | fails   | not run | ok          | SinglePass |
//! | fails   | not run | fails       | Emergency  |

mod fallback;
mod prompts;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::knowledge::{select_theme, strip_code_fences, StructuredKnowledge, Theme};

pub use fallback::{
    apply_basic_styling, emergency_template, escape_html, BASIC_STYLE_MARKER, EMERGENCY_MESSAGE,
};
pub use prompts::{
    build_single_pass_prompt, build_stage1_prompt, build_stage2_prompt, knowledge_context,
    numbered, NONE_PROVIDED, STAGE1_PROMPT, STAGE2_PROMPT,
};
pub use validate::{
    validate_stage1, validate_stage2, validate_well_formed, ValidationIssue, ValidationReport,
};

use prompts::{generation_request, with_feedback};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DegradationLevel {
    Full,
    SinglePass,
    BasicStyle,
    Emergency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub stage1_max_attempts: u32,
    pub stage2_max_attempts: u32,
    pub single_pass_max_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stage1_max_attempts: 3,
            stage2_max_attempts: 2,
            single_pass_max_attempts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub html: String,
    pub level: DegradationLevel,
    pub stage1_attempts: u32,
    pub stage2_attempts: u32,
    pub single_pass_attempts: u32,
    /// Every validation report, in the order produced.
    pub reports: Vec<ValidationReport>,
    /// Gateway failures that ended a stage early.
    pub gateway_errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StageError {
    #[error("validation failed after {attempts} attempts")]
    ValidationExhausted {
        attempts: u32,
        reports: Vec<ValidationReport>,
    },
    #[error("model call failed after {attempts} attempts: {error}")]
    Gateway {
        attempts: u32,
        reports: Vec<ValidationReport>,
        error: GatewayError,
    },
}

impl StageError {
    pub fn attempts(&self) -> u32 {
        match self {
            StageError::ValidationExhausted { attempts, .. }
            | StageError::Gateway { attempts, .. } => *attempts,
        }
    }

    pub fn reports(&self) -> &[ValidationReport] {
        match self {
            StageError::ValidationExhausted { reports, .. }
            | StageError::Gateway { reports, .. } => reports,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutput {
    pub html: String,
    pub attempts: u32,
    pub reports: Vec<ValidationReport>,
}

/// Strips a fenced block wrapper from model output.
pub fn extract_html(output: &str) -> String {
    strip_code_fences(output).to_string()
}

/// Generate, validate, and on failure re-prompt with the error list.
fn run_stage(
    gateway: &Gateway,
    k: &StructuredKnowledge,
    prompt: &str,
    max_attempts: u32,
    validate: &dyn Fn(&str) -> ValidationReport,
) -> Result<StageOutput, StageError> {
    let max_attempts = max_attempts.max(1);
    let mut reports: Vec<ValidationReport> = Vec::new();
    for attempt in 1..=max_attempts {
        let text = match reports.last() {
            Some(last) => with_feedback(prompt, &last.feedback()),
            None => prompt.to_string(),
        };
        let completion = gateway
            .complete(&generation_request(k, text))
            .map_err(|error| StageError::Gateway {
                attempts: attempt,
                reports: reports.clone(),
                error,
            })?;
        let html = extract_html(&completion.text);
        let report = validate(&html);
        let passed = report.passed();
        reports.push(report);
        if passed {
            return Ok(StageOutput {
                html,
                attempts: attempt,
                reports,
            });
        }
        tracing::debug!(attempt, "generated page failed validation");
    }
    Err(StageError::ValidationExhausted {
        attempts: max_attempts,
        reports,
    })
}

pub fn run_stage1(
    k: &StructuredKnowledge,
    gateway: &Gateway,
    max_attempts: u32,
) -> Result<StageOutput, StageError> {
    run_stage(
        gateway,
        k,
        &build_stage1_prompt(k),
        max_attempts,
        &validate_stage1,
    )
}

pub fn run_stage2(
    k: &StructuredKnowledge,
    stage1_html: &str,
    theme: &Theme,
    gateway: &Gateway,
    max_attempts: u32,
) -> Result<StageOutput, StageError> {
    run_stage(
        gateway,
        k,
        &build_stage2_prompt(stage1_html, theme),
        max_attempts,
        &|h| validate_stage2(h, theme),
    )
}

pub fn run_single_pass(
    k: &StructuredKnowledge,
    theme: &Theme,
    gateway: &Gateway,
    max_attempts: u32,
) -> Result<StageOutput, StageError> {
    run_stage(
        gateway,
        k,
        &build_single_pass_prompt(k, theme),
        max_attempts,
        &validate_well_formed,
    )
}

pub fn run_pipeline(k: &StructuredKnowledge, gateway: &Gateway) -> GenerationOutcome {
    run_pipeline_with(k, gateway, &PipelineConfig::default())
}

pub fn run_pipeline_with(
    k: &StructuredKnowledge,
    gateway: &Gateway,
    config: &PipelineConfig,
) -> GenerationOutcome {
    let theme = select_theme(k.subject_area);
    let mut outcome = GenerationOutcome {
        html: String::new(),
        level: DegradationLevel::Emergency,
        stage1_attempts: 0,
        stage2_attempts: 0,
        single_pass_attempts: 0,
        reports: Vec::new(),
        gateway_errors: Vec::new(),
    };
    let absorb = |outcome: &mut GenerationOutcome, err: &StageError| {
        outcome.reports.extend_from_slice(err.reports());
        if let StageError::Gateway { error, .. } = err {
            outcome.gateway_errors.push(error.to_string());
        }
    };

    match run_stage1(k, gateway, config.stage1_max_attempts) {
        Ok(stage1) => {
            outcome.stage1_attempts = stage1.attempts;
            outcome.reports.extend(stage1.reports);
            match run_stage2(k, &stage1.html, &theme, gateway, config.stage2_max_attempts) {
                Ok(stage2) => {
                    outcome.stage2_attempts = stage2.attempts;
                    outcome.reports.extend(stage2.reports);
                    outcome.html = stage2.html;
                    outcome.level = DegradationLevel::Full;
                }
                Err(e) => {
                    outcome.stage2_attempts = e.attempts();
                    absorb(&mut outcome, &e);
                    outcome.html = apply_basic_styling(&stage1.html, &theme);
                    outcome.level = DegradationLevel::BasicStyle;
                }
            }
        }
        Err(e) => {
            outcome.stage1_attempts = e.attempts();
            absorb(&mut outcome, &e);
            match run_single_pass(k, &theme, gateway, config.single_pass_max_attempts) {
                Ok(single) => {
                    outcome.single_pass_attempts = single.attempts;
                    outcome.reports.extend(single.reports);
                    outcome.html = single.html;
                    outcome.level = DegradationLevel::SinglePass;
                }
                Err(e) => {
                    outcome.single_pass_attempts = e.attempts();
                    absorb(&mut outcome, &e);
                    outcome.html = emergency_template(k);
                    outcome.level = DegradationLevel::Emergency;
                }
            }
        }
    }
    tracing::info!(level = ?outcome.level, stage1 = outcome.stage1_attempts, stage2 = outcome.stage2_attempts, "generation finished");
    outcome
}
