use crate::gateway::{ChatRequest, ConfigKey, Message};
use crate::knowledge::{ProceduralConcept, StructuredKnowledge, Theme};

pub const STAGE1_PROMPT: &str = "Generate an interactive HTML/JavaScript simulation based on the
following educational content:

Subject: {subject_area}
Key Concepts: {key_concepts}
Procedural Concepts: {procedural_concepts}

Requirements:
1. Left panel: Step-by-step process display with current step highlighting
2. Right panel: Interactive controls for adjusting parameters
3. Real-time coupling between process and simulation panels
4. Scientific accuracy is paramount---verify all formulas and relationships
5. Include explanatory tooltips for technical terms
6. Use vanilla JavaScript (no external dependencies)
7. Responsive layout for tablet devices (min-width: 768px)

Generate complete, valid HTML with embedded CSS and JavaScript.
";

pub const STAGE2_PROMPT: &str = "Apply visual polish to the following HTML simulation:

Current HTML: {stage1_html}
Theme: {theme_config}

Enhancements to apply:
1. Apply theme colors consistently (primary: {primary}, accent: {accent})
2. Improve typography hierarchy
3. Add smooth animations for state transitions
4. Ensure consistent spacing and alignment
5. Validate all HTML structure
6. Maintain all interactive functionality

Return complete polished HTML.
";

pub const NONE_PROVIDED: &str = "(none provided)";

const SINGLE_PASS_THEME: &str = "
Visual requirements:
1. Apply theme colors consistently (primary: {primary}, accent: {accent})
2. Improve typography hierarchy
3. Add smooth animations for state transitions
4. Ensure consistent spacing and alignment

Return only the complete HTML document.
";

/// Renders items as `1. item` lines, one per line; the first line starts
/// right after the placeholder.
pub fn numbered(items: &[String]) -> String {
    if items.is_empty() {
        return NONE_PROVIDED.to_string();
    }
    let lines: Vec<String> = items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect();
    format!("\n{}", lines.join("\n"))
}

fn procedure_line(p: &ProceduralConcept) -> String {
    let mut line = format!("{} (steps: {})", p.name, p.steps.join(" -> "));
    if !p.parameters.is_empty() {
        let params: Vec<String> = p
            .parameters
            .iter()
            .map(|q| {
                if q.description.is_empty() {
                    q.name.clone()
                } else {
                    format!("{} [{}]", q.name, q.description)
                }
            })
            .collect();
        line.push_str(&format!("; adjustable parameters: {}", params.join(", ")));
    }
    line
}

pub fn build_stage1_prompt(k: &StructuredKnowledge) -> String {
    let procedures: Vec<String> = k.procedural_concepts.iter().map(procedure_line).collect();
    STAGE1_PROMPT
        .replace("{subject_area}", k.subject_area.as_str())
        .replace("{key_concepts}", &numbered(&k.key_concepts))
        .replace("{procedural_concepts}", &numbered(&procedures))
}

pub fn build_stage2_prompt(stage1_html: &str, theme: &Theme) -> String {
    // Substitute the HTML last so placeholder-like text inside it survives.
    STAGE2_PROMPT
        .replace("{theme_config}", &theme.config_text())
        .replace("{primary}", &theme.primary_color.to_string())
        .replace("{accent}", &theme.accent_color.to_string())
        .replace("{stage1_html}", stage1_html)
}

pub fn build_single_pass_prompt(k: &StructuredKnowledge, theme: &Theme) -> String {
    let theme_part = SINGLE_PASS_THEME
        .replace("{primary}", &theme.primary_color.to_string())
        .replace("{accent}", &theme.accent_color.to_string());
    format!("{}{theme_part}", build_stage1_prompt(k))
}

/// Record fields the templates have no slot for, sent as a system message.
pub fn knowledge_context(k: &StructuredKnowledge) -> String {
    format!(
        "Audience grade level: {}\nMain topics:{}\nLearning objectives:{}\nPrerequisite knowledge:{}",
        k.grade_level.as_str(),
        numbered(&k.main_topics),
        numbered(&k.learning_objectives),
        numbered(&k.prerequisite_knowledge),
    )
}

pub(crate) fn generation_request(k: &StructuredKnowledge, prompt: String) -> ChatRequest {
    ChatRequest::new(
        ConfigKey::TextGeneration,
        vec![Message::system(knowledge_context(k)), Message::user(prompt)],
    )
}

pub(crate) fn with_feedback(prompt: &str, errors: &str) -> String {
    format!("{prompt}\nThe previous output failed validation:\n{errors}\nFix every listed problem and return the complete HTML document.\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{select_theme, GradeLevel, Parameter, SubjectArea};

    fn physics() -> StructuredKnowledge {
        StructuredKnowledge {
            main_topics: vec!["Mechanics".into(), "Energy".into(), "Work".into()],
            key_concepts: vec!["potential energy".into(), "mass".into()],
            learning_objectives: vec!["compute Ep = mgh".into()],
            prerequisite_knowledge: vec![],
            procedural_concepts: vec![ProceduralConcept {
                name: "Lift a block".into(),
                steps: vec!["pick mass".into(), "raise".into()],
                parameters: vec![Parameter {
                    name: "height".into(),
                    description: "m".into(),
                }],
            }],
            subject_area: SubjectArea::Physics,
            grade_level: GradeLevel::Middle,
        }
    }

    #[test]
    fn stage1_has_requirements_verbatim() {
        let p = build_stage1_prompt(&physics());
        let requirements = &STAGE1_PROMPT[STAGE1_PROMPT.find("Requirements:").unwrap()..];
        assert!(p.ends_with(requirements));
        assert!(p.contains("Subject: Physics"));
        assert!(p.contains("\n1. potential energy\n2. mass\n"));
        assert!(p.contains(
            "Lift a block (steps: pick mass -> raise); adjustable parameters: height [m]"
        ));
        assert!(!p.contains('{'));
    }

    #[test]
    fn empty_procedures_placeholder() {
        let mut k = physics();
        k.procedural_concepts.clear();
        assert!(build_stage1_prompt(&k).contains("Procedural Concepts: (none provided)\n"));
    }

    #[test]
    fn distinct_records_distinct_prompts() {
        let a = physics();
        let mut b = physics();
        b.key_concepts.push("height".into());
        assert_ne!(build_stage1_prompt(&a), build_stage1_prompt(&b));
        let mut c = physics();
        c.grade_level = GradeLevel::High;
        assert_eq!(build_stage1_prompt(&a), build_stage1_prompt(&c));
        assert_ne!(
            generation_request(&a, build_stage1_prompt(&a)),
            generation_request(&c, build_stage1_prompt(&c))
        );
    }

    #[test]
    fn stage2_substitution() {
        let theme = select_theme(SubjectArea::Chemistry);
        let p = build_stage2_prompt("<p>{primary}</p>", &theme);
        assert!(p.contains("Current HTML: <p>{primary}</p>\n"));
        assert!(p.contains("(primary: #E65100, accent: "));
        assert!(p.contains(&format!("accent: {})", theme.accent_color)));
        assert!(p.contains("\"subject_area\":\"Chemistry\""));
        assert!(p.ends_with("Return complete polished HTML.\n"));
    }

    #[test]
    fn single_pass_combines_both() {
        let theme = select_theme(SubjectArea::Physics);
        let p = build_single_pass_prompt(&physics(), &theme);
        assert!(p.starts_with(&build_stage1_prompt(&physics())));
        assert!(p.contains("primary: #1E5AA8"));
    }
}
