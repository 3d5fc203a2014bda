//! Direct concept input: maps a teacher-filled form onto the same record the
//! document analysis produces, without any model call.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    GradeLevel, KnowledgeError, Parameter, ProceduralConcept, StructuredKnowledge, SubjectArea,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptForm {
    pub subject: String,
    pub concept_name: String,
    #[serde(default)]
    pub overview: String,
    #[serde(default)]
    pub mastery_points: Vec<String>,
    #[serde(default)]
    pub design_ideas: String,
}

static ENUM_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*(?:\d+[.)]|[-*•]|step\s+\d+:?)\s*").unwrap());
static SENTENCE_END: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[.;!?。；]\s+|[。；]").unwrap());
static PARAM_VERB: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:adjust(?:s|ing)?|change(?:s)?|vary(?:ing)?|varies|set(?:s|ting)?|control(?:s|ling)?|modify(?:ing)?|modifies|tune(?:s)?)\s+(?:the\s+)?").unwrap()
});
static LIST_END: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\s+(?:to|so|in order|while|until|then|for|which|that)\b|[.;:!?()]").unwrap()
});
static LIST_SEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\s*,\s*(?:and\s+|or\s+)?|\s+(?:and|or)\s+").unwrap());

const NON_PARAMETER_HEADS: &[&str] = &[
    "observe", "see", "watch", "compare", "measure", "record", "notice", "explore", "view",
];

/// Splits free text into ordered step descriptions on line breaks, list
/// markers and sentence ends.
pub fn split_steps(text: &str) -> Vec<String> {
    text.lines()
        .flat_map(|line| {
            let line = ENUM_MARKER.replace(line, "");
            SENTENCE_END
                .split(&line)
                .map(str::to_string)
                .collect::<Vec<_>>()
        })
        .map(|s| s.trim().trim_end_matches(['.', '。']).trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Finds the parameter list in phrases such as "adjust mass, velocity, and
/// friction to ...". Names keep their source wording.
pub fn extract_parameters(text: &str) -> Vec<Parameter> {
    let mut out: Vec<Parameter> = Vec::new();
    for sentence in split_steps(text) {
        for m in PARAM_VERB.find_iter(&sentence) {
            let rest = &sentence[m.end()..];
            let list = match LIST_END.find(rest) {
                Some(end) => &rest[..end.start()],
                None => rest,
            };
            for item in LIST_SEP.split(list) {
                let name = item.trim().trim_start_matches("the ").trim();
                let head = name
                    .split_whitespace()
                    .next()
                    .unwrap_or("")
                    .to_ascii_lowercase();
                if name.is_empty() || NON_PARAMETER_HEADS.contains(&head.as_str()) {
                    continue;
                }
                if out.iter().any(|p| p.name.eq_ignore_ascii_case(name)) {
                    continue;
                }
                out.push(Parameter {
                    name: name.to_string(),
                    description: sentence.clone(),
                });
            }
        }
    }
    out
}

fn clean_list(items: &[String]) -> Vec<String> {
    items
        .iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn knowledge_from_form(form: &ConceptForm) -> Result<StructuredKnowledge, KnowledgeError> {
    let subject = form.subject.trim();
    let concept = form.concept_name.trim();
    if subject.is_empty() {
        return Err(KnowledgeError::EmptyRequiredField("subject"));
    }
    if concept.is_empty() {
        return Err(KnowledgeError::EmptyRequiredField("concept_name"));
    }
    let subject_area = SubjectArea::parse(subject).unwrap_or(SubjectArea::Other);
    let mastery = clean_list(&form.mastery_points);

    let mut main_topics = vec![concept.to_string()];
    let pads = [
        format!("{concept} fundamentals"),
        format!("{concept} applications"),
    ];
    for t in mastery.iter().chain(pads.iter()) {
        if main_topics.len() >= 3 {
            break;
        }
        if !main_topics.iter().any(|m| m.eq_ignore_ascii_case(t)) {
            main_topics.push(t.clone());
        }
    }

    let mut key_concepts = vec![concept.to_string()];
    let mut procedural_concepts = Vec::new();
    let design = form.design_ideas.trim();
    let steps = split_steps(design);
    let parameters = extract_parameters(design);
    if steps.len() >= 2 || !parameters.is_empty() {
        let mut all_steps = Vec::new();
        let overview = form.overview.trim();
        if !overview.is_empty() {
            all_steps.push(format!("Introduce: {}", overview.trim_end_matches('.')));
        }
        all_steps.extend(steps);
        procedural_concepts.push(ProceduralConcept {
            name: concept.to_string(),
            steps: all_steps,
            parameters,
        });
    } else {
        key_concepts.extend(
            [form.overview.trim(), design]
                .into_iter()
                .filter(|s| !s.is_empty())
                .map(str::to_string),
        );
    }

    let k = StructuredKnowledge {
        main_topics,
        key_concepts,
        learning_objectives: mastery,
        prerequisite_knowledge: Vec::new(),
        procedural_concepts,
        subject_area,
        grade_level: GradeLevel::High,
    };
    k.validate()?;
    Ok(k)
}
