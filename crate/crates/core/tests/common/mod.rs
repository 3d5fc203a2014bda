//! Corpus generators shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use courseware::knowledge::{GradeLevel, ProceduralConcept, StructuredKnowledge, SubjectArea};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

const WORDS: &[&str] = &[
    "div", "span", "mass", "force", "velocity", "step", "panel", "slider", "x", "y", "{", "}", ";",
    "return", "const", "let",
];

/// A line drawn from a small vocabulary, so repeats are common.
pub fn random_line(rng: &mut StdRng) -> String {
    if rng.random_bool(0.08) {
        return String::new();
    }
    if rng.random_bool(0.15) {
        return "}".into();
    }
    let n = rng.random_range(1..6);
    let indent = " ".repeat(2 * rng.random_range(0..4));
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{indent}{}", words.join(" "))
}

pub fn random_lines(rng: &mut StdRng, n: usize) -> Vec<String> {
    (0..n).map(|_| random_line(rng)).collect()
}

/// Applies between 1 and 12 random inserts, deletes and replacements.
pub fn mutate(rng: &mut StdRng, lines: &[String]) -> Vec<String> {
    let mut out = lines.to_vec();
    for _ in 0..rng.random_range(1..=12) {
        match rng.random_range(0..3) {
            0 => {
                let at = rng.random_range(0..=out.len());
                for k in 0..rng.random_range(1..4) {
                    out.insert(at + k, random_line(rng));
                }
            }
            1 if !out.is_empty() => {
                let at = rng.random_range(0..out.len());
                let n = rng.random_range(1..4).min(out.len() - at);
                out.drain(at..at + n);
            }
            _ if !out.is_empty() => {
                let at = rng.random_range(0..out.len());
                out[at] = format!("{} changed", random_line(rng));
            }
            _ => out.push(random_line(rng)),
        }
    }
    out
}

pub fn join(lines: &[String], trailing_newline: bool) -> String {
    let mut s = lines.join("\n");
    if trailing_newline && !lines.is_empty() {
        s.push('\n');
    }
    s
}

pub fn physics() -> StructuredKnowledge {
    StructuredKnowledge {
        main_topics: vec![
            "Newton's first law".into(),
            "Inertia".into(),
            "Friction".into(),
        ],
        key_concepts: vec!["An object keeps its velocity unless a net force acts".into()],
        learning_objectives: vec!["Predict motion on a frictionless surface".into()],
        prerequisite_knowledge: vec!["Velocity".into()],
        procedural_concepts: vec![ProceduralConcept {
            name: "Sliding block".into(),
            steps: vec![
                "Set the mass".into(),
                "Push the block".into(),
                "Observe the motion".into(),
            ],
            parameters: vec![],
        }],
        subject_area: SubjectArea::Physics,
        grade_level: GradeLevel::High,
    }
}

/// A courseware-like page with one element per line and at least
/// `min_lines` lines. Roughly a fifth of the elements carry ids.
pub fn random_page(rng: &mut StdRng, min_lines: usize) -> String {
    let mut lines = vec![
        "<!DOCTYPE html>".to_string(),
        "<html lang=\"en\">".into(),
        "<head>".into(),
        "<meta charset=\"utf-8\">".into(),
        "<title>Inertia lab</title>".into(),
        "<style>".into(),
        "body { font-family: sans-serif; color: #1E5AA8; }".into(),
        ".panel { padding: 12px; border-radius: 8px; }".into(),
        "</style>".into(),
        "</head>".into(),
        "<body>".into(),
    ];
    let mut section = 0;
    let mut next_id = 0;
    while lines.len() + 4 < min_lines {
        section += 1;
        lines.push(format!(
            "<section class=\"panel\" id=\"section-{section}\">"
        ));
        lines.push(format!(
            "<h2>Part {section}: {}</h2>",
            WORDS.choose(rng).unwrap()
        ));
        for _ in 0..rng.random_range(3..9) {
            let id = if rng.random_bool(0.2) {
                next_id += 1;
                format!(" id=\"item-{next_id}\"")
            } else {
                String::new()
            };
            let v: u32 = rng.random_range(0..1000);
            let line = match rng.random_range(0..4) {
                0 => format!(
                    "<p{id}>Measure the {} at step {v}.</p>",
                    WORDS.choose(rng).unwrap()
                ),
                1 => {
                    format!("<button{id} class=\"control\" onclick=\"step({v})\">Step {v}</button>")
                }
                2 => format!(
                    "<input{id} type=\"range\" min=\"0\" max=\"{v}\" value=\"{}\">",
                    v / 2
                ),
                _ => format!("<span{id} class=\"value\">{v} m/s</span>"),
            };
            lines.push(line);
        }
        lines.push("</section>".into());
    }
    lines.push("<script>".into());
    lines.push("function step(n) { document.title = 'step ' + n; }".into());
    lines.push("</script>".into());
    lines.push("</body>".into());
    lines.push("</html>".into());
    join(&lines, true)
}

/// 1-based line numbers of element lines that a single-element edit may touch.
pub fn editable_lines(page: &str) -> Vec<usize> {
    page.lines()
        .enumerate()
        .filter(|(_, l)| {
            l.starts_with("<p")
                || l.starts_with("<button")
                || l.starts_with("<span")
                || l.starts_with("<h2")
        })
        .map(|(i, _)| i + 1)
        .collect()
}

/// Rewrites one element line the way a small instruction would.
pub fn edit_line(rng: &mut StdRng, line: &str) -> String {
    match rng.random_range(0..3) {
        0 => line.replacen('>', " style=\"color: #C62828\">", 1),
        1 => line.replace("step", "stage").replace("Step", "Stage") + "<!-- edited -->",
        _ => {
            let open_end = line.find('>').map_or(line.len(), |i| i + 1);
            let close = line.rfind("</").unwrap_or(line.len());
            if close > open_end {
                format!(
                    "{}Updated text for this element{}",
                    &line[..open_end],
                    &line[close..]
                )
            } else {
                line.replacen('>', " data-edited=\"1\">", 1)
            }
        }
    }
}

const TAGS: &[&str] = &[
    "div", "section", "p", "span", "ul", "li", "button", "em", "article",
];

/// Random nested markup with up to `max_elements` elements; `id_ratio` of
/// them get ids. With `duplicate_ids`, ids are drawn from a tiny pool.
pub fn random_dom(
    rng: &mut StdRng,
    max_elements: usize,
    id_ratio: f64,
    duplicate_ids: bool,
) -> String {
    fn build(
        rng: &mut StdRng,
        out: &mut String,
        budget: &mut usize,
        depth: usize,
        id_ratio: f64,
        dup: bool,
        next: &mut usize,
    ) {
        let children = rng.random_range(0..5);
        for _ in 0..children {
            if *budget == 0 {
                return;
            }
            *budget -= 1;
            let tag = if depth > 6 {
                "span"
            } else {
                *TAGS.choose(rng).unwrap()
            };
            let tag = if tag == "p" || tag == "li" {
                "div"
            } else {
                tag
            };
            out.push('<');
            out.push_str(tag);
            if rng.random_bool(id_ratio) {
                *next += 1;
                let id = if dup { rng.random_range(0..3) } else { *next };
                out.push_str(&format!(" id=\"n{id}\""));
            }
            if rng.random_bool(0.3) {
                out.push_str(&format!(" class=\"c{}\"", rng.random_range(0..4)));
            }
            out.push('>');
            if rng.random_bool(0.4) {
                out.push_str("text");
            }
            if depth < 12 {
                build(rng, out, budget, depth + 1, id_ratio, dup, next);
            }
            out.push_str(&format!("</{tag}>"));
        }
    }
    let mut out = String::from("<html><head><title>t</title></head><body>");
    let mut budget = max_elements.saturating_sub(4);
    let mut next = 0;
    while budget > 0 {
        let before = budget;
        build(
            rng,
            &mut out,
            &mut budget,
            0,
            id_ratio,
            duplicate_ids,
            &mut next,
        );
        if budget == before && rng.random_bool(0.5) {
            break;
        }
    }
    out.push_str("</body></html>");
    out
}

pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub const GOOD_STAGE1: &str = r#"<!DOCTYPE html>
<html><head><title>Inertia</title></head><body>
<div class="layout">
<div id="process-panel"><ol><li class="step">Set the mass</li><li class="step">Push</li></ol></div>
<div id="simulation-panel"><input type="range" id="mass" min="1" max="10"><button onclick="run()">Run</button></div>
</div>
<script>function run() { document.title = 'running'; }</script>
</body></html>"#;

/// Stage-1 output with the physics theme color added.
pub fn good_stage2() -> String {
    GOOD_STAGE1.replace(
        "<title>Inertia</title>",
        "<title>Inertia</title><style>h1 { color: #1E5AA8; }</style>",
    )
}

pub const STAGE1_MARKER: &str = "Generate an interactive HTML/JavaScript";
pub const STAGE2_MARKER: &str = "Apply visual polish";
pub const SINGLE_PASS_MARKER: &str = "Visual requirements:";

/// A script where each ladder stage either always passes or always fails
/// validation. The single-pass prompt embeds the stage-1 text, so its
/// entry comes first.
pub fn ladder_script(
    stage1_ok: bool,
    stage2_ok: bool,
    single_ok: bool,
) -> courseware::gateway::MockScript {
    use courseware::gateway::{MockScript, ScriptEntry};
    let single = if single_ok {
        good_stage2()
    } else {
        "<div><p>unclosed".to_string()
    };
    let stage2 = if stage2_ok {
        good_stage2()
    } else {
        GOOD_STAGE1.to_string()
    };
    let stage1 = if stage1_ok {
        GOOD_STAGE1.to_string()
    } else {
        "<p>no script here</p>".to_string()
    };
    MockScript::new(vec![
        ScriptEntry::respond(single)
            .when_contains(SINGLE_PASS_MARKER)
            .repeating(),
        ScriptEntry::respond(stage2)
            .when_contains(STAGE2_MARKER)
            .repeating(),
        ScriptEntry::respond(stage1)
            .when_contains(STAGE1_MARKER)
            .repeating(),
    ])
}

/// Expected rung and model calls for one cell of the ladder grid.
pub fn ladder_expectation(
    stage1_ok: bool,
    stage2_ok: bool,
    single_ok: bool,
) -> (courseware::pipeline::DegradationLevel, usize) {
    use courseware::pipeline::DegradationLevel::*;
    match (stage1_ok, stage2_ok, single_ok) {
        (true, true, _) => (Full, 2),
        (true, false, _) => (BasicStyle, 3),
        (false, _, true) => (SinglePass, 4),
        (false, _, false) => (Emergency, 4),
    }
}
