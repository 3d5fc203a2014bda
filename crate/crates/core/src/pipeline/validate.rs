//! Static checks on generated pages. Nothing is executed; "interactive" means
//! the markup carries a script and something a student can operate.

use serde::{Deserialize, Serialize};

use crate::dom::{parse_html, DomTree, NodeId};
use crate::knowledge::Theme;

const CONTROL_TAGS: &[&str] = &["INPUT", "BUTTON", "SELECT", "TEXTAREA"];
const PROCESS_KEYWORDS: &[&str] = &["process", "step"];
const SIMULATION_KEYWORDS: &[&str] = &["simulation", "control"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub code: String,
    pub message: String,
    /// 1-based source line, when the problem has a position.
    pub line: Option<usize>,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "[{}] {} (line {l})", self.code, self.message),
            None => write!(f, "[{}] {}", self.code, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub well_formed: bool,
    pub has_script: bool,
    pub has_interactive_control: bool,
    pub has_two_panel_layout: bool,
    /// Only checked after visual polish.
    pub has_theme_color: Option<bool>,
    /// One entry per failed check that applies to the stage.
    pub errors: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty()
    }

    /// Error list in the form fed back to the model.
    pub fn feedback(&self) -> String {
        self.errors
            .iter()
            .map(|e| format!("- {e}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

fn well_formedness(tree: &DomTree, html: &str) -> Vec<ValidationIssue> {
    let mut issues: Vec<ValidationIssue> = tree
        .structural_repairs()
        .map(|r| ValidationIssue {
            code: "structural_repair".into(),
            message: match &r.tag {
                Some(t) => format!("{:?} on <{}>", r.kind, t.to_ascii_lowercase()),
                None => format!("{:?}", r.kind),
            },
            line: Some(line_of(html, r.offset)),
        })
        .collect();
    if tree.elements().is_empty() {
        issues.push(ValidationIssue {
            code: "no_elements".into(),
            message: "output contains no HTML elements".into(),
            line: None,
        });
    }
    issues
}

fn marker_matches(tree: &DomTree, id: NodeId, keywords: &[&str]) -> bool {
    let Some(el) = tree.element(id) else {
        return false;
    };
    let id_attr = el.attr("id").unwrap_or("").to_ascii_lowercase();
    let class_attr = el.attr("class").unwrap_or("").to_ascii_lowercase();
    keywords
        .iter()
        .any(|k| id_attr.contains(k) || class_attr.contains(k))
}

/// Two distinct sibling elements, one marked as the process panel and the
/// other as the simulation panel.
fn two_panels(tree: &DomTree) -> bool {
    let mut parents: Vec<NodeId> = vec![tree.root()];
    parents.extend(tree.elements());
    parents.into_iter().any(|p| {
        let kids: Vec<NodeId> = tree.element_children(p).collect();
        kids.iter().any(|&a| {
            marker_matches(tree, a, PROCESS_KEYWORDS)
                && kids
                    .iter()
                    .any(|&b| b != a && marker_matches(tree, b, SIMULATION_KEYWORDS))
        })
    })
}

fn has_control(tree: &DomTree) -> bool {
    tree.elements()
        .into_iter()
        .filter_map(|id| tree.element(id))
        .any(|el| {
            CONTROL_TAGS.contains(&el.tag.as_str())
                || el
                    .attrs
                    .iter()
                    .any(|(name, _)| name.len() > 2 && name.starts_with("on"))
        })
}

fn base_report(html: &str) -> (DomTree, ValidationReport) {
    let tree = parse_html(html);
    let errors = well_formedness(&tree, html);
    let report = ValidationReport {
        well_formed: errors.is_empty(),
        has_script: tree.find_first("script").is_some(),
        has_interactive_control: has_control(&tree),
        has_two_panel_layout: two_panels(&tree),
        has_theme_color: None,
        errors,
    };
    (tree, report)
}

pub fn validate_stage1(html: &str) -> ValidationReport {
    let (_, mut report) = base_report(html);
    let mut push = |code: &str, message: &str| {
        report.errors.push(ValidationIssue {
            code: code.into(),
            message: message.into(),
            line: None,
        })
    };
    if !report.has_script {
        push("missing_script", "no <script> block");
    }
    if !report.has_interactive_control {
        push(
            "missing_control",
            "no input, button, select or textarea element and no on* event handler attribute",
        );
    }
    if !report.has_two_panel_layout {
        push(
            "missing_two_panel_layout",
            "need sibling containers whose id or class names the process/step panel and the simulation/control panel",
        );
    }
    report
}

pub fn validate_stage2(html: &str, theme: &Theme) -> ValidationReport {
    let (_, mut report) = base_report(html);
    let primary = theme.primary_color.to_string().to_ascii_lowercase();
    let present = html.to_ascii_lowercase().contains(&primary);
    report.has_theme_color = Some(present);
    if !present {
        report.errors.push(ValidationIssue {
            code: "missing_theme_color".into(),
            message: format!(
                "theme primary color {} does not appear in the page",
                theme.primary_color
            ),
            line: None,
        });
    }
    report
}

/// Well-formedness only, as used for single-pass output.
pub fn validate_well_formed(html: &str) -> ValidationReport {
    base_report(html).1
}
