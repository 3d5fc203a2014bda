//! Structured pedagogical knowledge: the record every generation decision
//! reads, plus the two ways of producing it (model analysis of page images,
//! or a teacher-filled form) and the subject theme palette.

mod analysis;
mod form;
mod theme;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::gateway::{MediaType, PageImage};
pub use analysis::{
    build_analysis_prompt, parse_analysis_response, strip_code_fences, ParsedAnalysis,
    ANALYSIS_PROMPT,
};
pub use form::{extract_parameters, knowledge_from_form, split_steps, ConceptForm};
pub use theme::{select_theme, HexColor, Theme};

pub const MAX_PAGES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubjectArea {
    Physics,
    Chemistry,
    Biology,
    Math,
    Geography,
    Other,
}

impl SubjectArea {
    pub const ALL: [SubjectArea; 6] = [
        SubjectArea::Physics,
        SubjectArea::Chemistry,
        SubjectArea::Biology,
        SubjectArea::Math,
        SubjectArea::Geography,
        SubjectArea::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SubjectArea::Physics => "Physics",
            SubjectArea::Chemistry => "Chemistry",
            SubjectArea::Biology => "Biology",
            SubjectArea::Math => "Math",
            SubjectArea::Geography => "Geography",
            SubjectArea::Other => "Other",
        }
    }

    /// Case-insensitive match on the enum names and a few common synonyms.
    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim().to_lowercase();
        let hit = match lower.as_str() {
            "physics" | "物理" => SubjectArea::Physics,
            "chemistry" | "化学" => SubjectArea::Chemistry,
            "biology" | "生物" => SubjectArea::Biology,
            "math" | "maths" | "mathematics" | "数学" => SubjectArea::Math,
            "geography" | "地理" => SubjectArea::Geography,
            "other" => SubjectArea::Other,
            _ => return None,
        };
        Some(hit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradeLevel {
    Primary,
    Middle,
    High,
    Undergraduate,
    Graduate,
}

impl GradeLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            GradeLevel::Primary => "Primary",
            GradeLevel::Middle => "Middle",
            GradeLevel::High => "High",
            GradeLevel::Undergraduate => "Undergraduate",
            GradeLevel::Graduate => "Graduate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let lower = lower.strip_suffix(" school").unwrap_or(&lower);
        let hit = match lower {
            "primary" | "elementary" => GradeLevel::Primary,
            "middle" | "junior high" => GradeLevel::Middle,
            "high" | "senior high" => GradeLevel::High,
            "undergraduate" => GradeLevel::Undergraduate,
            "graduate" | "postgraduate" => GradeLevel::Graduate,
            _ => return None,
        };
        Some(hit)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProceduralConcept {
    pub name: String,
    pub steps: Vec<String>,
    #[serde(default)]
    pub parameters: Vec<Parameter>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredKnowledge {
    pub main_topics: Vec<String>,
    pub key_concepts: Vec<String>,
    pub learning_objectives: Vec<String>,
    pub prerequisite_knowledge: Vec<String>,
    pub procedural_concepts: Vec<ProceduralConcept>,
    pub subject_area: SubjectArea,
    pub grade_level: GradeLevel,
}

impl StructuredKnowledge {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let n = self.main_topics.len();
        if !(3..=5).contains(&n) {
            return Err(KnowledgeError::schema(
                "main_topics",
                format!("expected 3-5 entries, found {n}"),
            ));
        }
        if self.key_concepts.is_empty() && self.procedural_concepts.is_empty() {
            return Err(KnowledgeError::schema(
                "key_concepts",
                "key_concepts and procedural_concepts are both empty",
            ));
        }
        for (i, p) in self.procedural_concepts.iter().enumerate() {
            if p.steps.is_empty() {
                return Err(KnowledgeError::schema(
                    format!("procedural_concepts[{i}].steps"),
                    "no steps",
                ));
            }
        }
        Ok(())
    }
}

/// Validated page list, 1 to [`MAX_PAGES`] pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentPages {
    pages: Vec<PageImage>,
}

impl DocumentPages {
    pub fn new(pages: Vec<PageImage>) -> Result<Self, KnowledgeError> {
        if pages.is_empty() {
            return Err(KnowledgeError::EmptyDocument);
        }
        if pages.len() > MAX_PAGES {
            return Err(KnowledgeError::PageLimitExceeded { count: pages.len() });
        }
        Ok(Self { pages })
    }

    pub fn pages(&self) -> &[PageImage] {
        &self.pages
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KnowledgeError {
    #[error("document has {count} pages; the limit is 50")]
    PageLimitExceeded { count: usize },
    #[error("document has no pages")]
    EmptyDocument,
    #[error("analysis response is not valid JSON: {0}")]
    MalformedJson(String),
    #[error("analysis field {field}: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("required field {0} is empty")]
    EmptyRequiredField(&'static str),
}

impl KnowledgeError {
    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        KnowledgeError::SchemaViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            KnowledgeError::PageLimitExceeded { .. } => "page_limit_exceeded",
            KnowledgeError::EmptyDocument => "empty_document",
            KnowledgeError::MalformedJson(_) => "malformed_json",
            KnowledgeError::SchemaViolation { .. } => "schema_violation",
            KnowledgeError::EmptyRequiredField(_) => "empty_required_field",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn png() -> PageImage {
        PageImage {
            media_type: MediaType::Png,
            bytes: vec![0x89, b'P', b'N', b'G'],
        }
    }

    #[test]
    fn page_bounds() {
        assert_eq!(
            DocumentPages::new(vec![]),
            Err(KnowledgeError::EmptyDocument)
        );
        assert_eq!(
            DocumentPages::new(vec![png(); 51]),
            Err(KnowledgeError::PageLimitExceeded { count: 51 })
        );
        assert_eq!(
            DocumentPages::new(vec![png(); 50]).unwrap().page_count(),
            50
        );
    }

    #[test]
    fn subject_synonyms() {
        assert_eq!(SubjectArea::parse(" mathematics "), Some(SubjectArea::Math));
        assert_eq!(SubjectArea::parse("PHYSICS"), Some(SubjectArea::Physics));
        assert_eq!(SubjectArea::parse("Astronomy"), None);
        assert_eq!(GradeLevel::parse("High School"), Some(GradeLevel::High));
    }
}
