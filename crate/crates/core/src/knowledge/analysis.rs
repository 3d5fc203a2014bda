use serde::Deserialize;
use serde_json::Value;

use super::{
    DocumentPages, GradeLevel, KnowledgeError, Parameter, ProceduralConcept, StructuredKnowledge,
    SubjectArea,
};
use crate::gateway::{ChatRequest, ConfigKey, Message};

pub const ANALYSIS_PROMPT: &str =
    "Analyze the provided educational document and extract the following
information in JSON format:

1. Main Topics: List 3-5 broad subject areas covered
2. Key Concepts: Specific terminology and principles students must master
3. Learning Objectives: Measurable outcomes students should achieve
4. Prerequisite Knowledge: Foundational concepts required beforehand
5. Procedural Concepts: Step-by-step processes suitable for simulation
   - Name of the procedure
   - List of steps
   - Adjustable parameters
6. Subject Area: One of [Physics, Chemistry, Biology, Math, Geography, Other]
7. Grade Level: One of [Primary, Middle, High, Undergraduate, Graduate]

Focus on identifying content that would benefit from interactive
visualization. Be precise and comprehensive.

Response format: Valid JSON only, no markdown formatting.
";

/// The multimodal request for a document: the fixed template plus every page
/// image, in page order.
pub fn build_analysis_prompt(pages: &DocumentPages) -> ChatRequest {
    ChatRequest {
        messages: vec![Message::user(ANALYSIS_PROMPT)],
        images: pages.pages().to_vec(),
        config_key: ConfigKey::MultiModalAnalysis,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnalysis {
    pub knowledge: StructuredKnowledge,
    /// Non-fatal normalizations, such as an unknown subject mapped to Other.
    pub warnings: Vec<String>,
}

/// Returns the body of the first fenced block, or the input when unfenced.
pub fn strip_code_fences(text: &str) -> &str {
    let trimmed = text.trim();
    let Some(start) = trimmed.find("```") else {
        return trimmed;
    };
    let after = &trimmed[start + 3..];
    // Skip an info string such as `json`.
    let body = match after.find('\n') {
        Some(nl) if !after[..nl].contains('{') => &after[nl + 1..],
        _ => after,
    };
    match body.find("```") {
        Some(end) => body[..end].trim(),
        None => body.trim(),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawParameter {
    Named(String),
    Full {
        name: String,
        #[serde(default)]
        description: String,
    },
}

#[derive(Deserialize)]
struct RawProcedure {
    name: String,
    steps: Vec<String>,
    #[serde(default)]
    parameters: Vec<RawParameter>,
}

#[derive(Deserialize)]
struct RawKnowledge {
    main_topics: Vec<String>,
    key_concepts: Vec<String>,
    learning_objectives: Vec<String>,
    prerequisite_knowledge: Vec<String>,
    procedural_concepts: Vec<RawProcedure>,
    subject_area: String,
    grade_level: String,
}

pub fn parse_analysis_response(text: &str) -> Result<ParsedAnalysis, KnowledgeError> {
    let body = strip_code_fences(text);
    let (Some(open), Some(close)) = (body.find('{'), body.rfind('}')) else {
        return Err(KnowledgeError::MalformedJson("no JSON object found".into()));
    };
    if close < open {
        return Err(KnowledgeError::MalformedJson("no JSON object found".into()));
    }
    let value: Value = serde_json::from_str(&body[open..=close])
        .map_err(|e| KnowledgeError::MalformedJson(e.to_string()))?;
    let raw: RawKnowledge = serde_json::from_value(value)
        .map_err(|e| KnowledgeError::schema("record", e.to_string()))?;

    let mut warnings = Vec::new();
    let subject_area = match SubjectArea::parse(&raw.subject_area) {
        Some(s) => s,
        None => {
            warnings.push(format!(
                "unknown subject area {:?} normalized to Other",
                raw.subject_area
            ));
            SubjectArea::Other
        }
    };
    let grade_level = GradeLevel::parse(&raw.grade_level).ok_or_else(|| {
        KnowledgeError::schema(
            "grade_level",
            format!("unknown grade level {:?}", raw.grade_level),
        )
    })?;

    let knowledge = StructuredKnowledge {
        main_topics: raw.main_topics,
        key_concepts: raw.key_concepts,
        learning_objectives: raw.learning_objectives,
        prerequisite_knowledge: raw.prerequisite_knowledge,
        procedural_concepts: raw
            .procedural_concepts
            .into_iter()
            .map(|p| ProceduralConcept {
                name: p.name,
                steps: p.steps,
                parameters: p
                    .parameters
                    .into_iter()
                    .map(|r| match r {
                        RawParameter::Named(name) => Parameter {
                            name,
                            description: String::new(),
                        },
                        RawParameter::Full { name, description } => Parameter { name, description },
                    })
                    .collect(),
            })
            .collect(),
        subject_area,
        grade_level,
    };
    knowledge.validate()?;
    Ok(ParsedAnalysis {
        knowledge,
        warnings,
    })
}
