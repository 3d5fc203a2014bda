//! Deterministic, model-free output for the lower rungs of the ladder.

use crate::knowledge::{select_theme, StructuredKnowledge, Theme};

pub const BASIC_STYLE_MARKER: &str = "data-courseware-basic-style";

pub const EMERGENCY_MESSAGE: &str =
    "We could not generate the interactive simulation this time. Your content has been saved; please try generating again in a moment.";

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn basic_style_block(theme: &Theme) -> String {
    let p = theme.primary_color;
    let a = theme.accent_color;
    format!(
        "<style {BASIC_STYLE_MARKER}>\n\
body {{ font-family: system-ui, sans-serif; line-height: 1.5; color: #212121; }}\n\
h1, h2, h3 {{ color: {p}; }}\n\
button {{ background: {p}; color: #ffffff; border: none; border-radius: 4px; padding: 0.4em 0.9em; }}\n\
button:hover {{ background: {a}; }}\n\
input[type=range] {{ accent-color: {p}; }}\n\
a {{ color: {p}; }}\n\
</style>\n"
    )
}

fn find_ascii_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack.to_ascii_lowercase().find(needle)
}

/// Inserts a theme style block before `</head>`, else before `<body`, else at
/// the start. A second application is a no-op.
pub fn apply_basic_styling(html: &str, theme: &Theme) -> String {
    if html.contains(BASIC_STYLE_MARKER) {
        return html.to_string();
    }
    let at = find_ascii_ci(html, "</head>")
        .or_else(|| find_ascii_ci(html, "<body"))
        .unwrap_or(0);
    let mut out = String::with_capacity(html.len() + 400);
    out.push_str(&html[..at]);
    out.push_str(&basic_style_block(theme));
    out.push_str(&html[at..]);
    out
}

/// A static page naming the subject and concepts, with a retry message.
pub fn emergency_template(k: &StructuredKnowledge) -> String {
    let theme = select_theme(k.subject_area);
    let mut concepts: Vec<&str> = k.key_concepts.iter().map(String::as_str).collect();
    for p in &k.procedural_concepts {
        if !concepts.contains(&p.name.as_str()) {
            concepts.push(&p.name);
        }
    }
    let items: String = concepts
        .iter()
        .map(|c| format!("<li>{}</li>\n", escape_html(c)))
        .collect();
    let subject = k.subject_area.as_str();
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{subject} courseware</title>\n\
<style>\nbody {{ font-family: system-ui, sans-serif; margin: 2em; color: #212121; }}\n\
h1 {{ color: {primary}; }}\n.notice {{ border-left: 4px solid {accent}; padding: 0.5em 1em; background: #f5f5f5; }}\n</style>\n\
</head>\n<body>\n<h1>{subject}</h1>\n<p class=\"notice\">{message}</p>\n<h2>Key concepts</h2>\n<ul>\n{items}</ul>\n</body>\n</html>\n",
        primary = theme.primary_color,
        accent = theme.accent_color,
        message = EMERGENCY_MESSAGE,
    )
}
