//! Click-to-locate edit sessions: the model is asked for a unified diff
//! against the current version; failed diffs are retried with a wider view
//! of the document, and after the diff budget is spent the whole page is
//! regenerated once.

use serde::{Deserialize, Serialize};

use super::{content_hash, Service, ServiceError, Version, VersionOrigin};
use crate::diff::{apply_to_text, parse_unified_diff, FuzzPolicy, PatchReport};
use crate::dom::{
    find_by_snippet, parse_html, resolve_css_selector, resolve_xpath, BoundingBox, DomTree, NodeId,
    SNIPPET_LIMIT,
};
use crate::gateway::{ChatRequest, ConfigKey, Gateway, GatewayError, Message, StreamEvent};
use crate::knowledge::strip_code_fences;
use crate::pipeline::{extract_html, validate_well_formed};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ElementSelector {
    #[serde(default)]
    pub xpath: String,
    #[serde(default, alias = "cssSelector")]
    pub css_selector: String,
    #[serde(default, alias = "elementHtml")]
    pub snippet: String,
    #[serde(
        default,
        alias = "boundingBox",
        skip_serializing_if = "Option::is_none"
    )]
    pub bounding_box: Option<BoundingBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRequest {
    pub element_selector: ElementSelector,
    pub instruction: String,
    pub context_html: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditPolicy {
    pub diff_attempts: u32,
    pub regenerate_on_failure: bool,
    /// Lines shown on each side of the cited element in retry prompts.
    pub context_radius: usize,
    pub min_context_lines: usize,
    pub fuzz: FuzzPolicy,
}

impl Default for EditPolicy {
    fn default() -> Self {
        Self {
            diff_attempts: 3,
            regenerate_on_failure: true,
            context_radius: 40,
            min_context_lines: 3,
            fuzz: FuzzPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditStatus {
    Pending,
    DiffApplied,
    Regenerated,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptKind {
    Diff,
    Regeneration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub kind: AttemptKind,
    pub prompt_chars: usize,
    pub response_chars: usize,
    pub error: Option<String>,
    pub report: Option<PatchReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSession {
    pub courseware_id: String,
    pub status: EditStatus,
    pub attempts: u32,
    pub gateway_calls: u32,
    /// Which selector found the element: `xpath`, `css_selector` or `snippet`.
    pub resolved_by: Option<String>,
    pub records: Vec<AttemptRecord>,
    pub new_version: Option<u32>,
}

/// Events streamed while an edit runs. Exactly one of `Applied`,
/// `Regenerated` or `Error` ends every stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EditEvent {
    Token {
        attempt: u32,
        text: String,
    },
    Diff {
        attempt: u32,
        diff: String,
        accepted: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
    },
    Applied {
        attempt: u32,
        version: u32,
        content_hash: String,
        report: PatchReport,
    },
    Regenerated {
        attempt: u32,
        version: u32,
        content_hash: String,
    },
    Error {
        code: String,
        message: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        attempt: Option<u32>,
    },
}

impl EditEvent {
    /// SSE event name.
    pub fn name(&self) -> &'static str {
        match self {
            EditEvent::Token { .. } => "token",
            EditEvent::Diff { .. } => "diff",
            EditEvent::Applied { .. } => "applied",
            EditEvent::Regenerated { .. } => "regenerated",
            EditEvent::Error { .. } => "error",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            EditEvent::Applied { .. } | EditEvent::Regenerated { .. } | EditEvent::Error { .. }
        )
    }
}

const EDIT_SYSTEM: &str = "You modify an HTML document according to a teacher's instruction.
Reply with exactly one unified diff against the document and nothing else: no explanations and no code fences.
Begin with the header lines `--- original.html` and `+++ modified.html`.
Give every hunk a correct `@@ -start,count +start,count @@` header and at least {context} unchanged context lines before and after each change, copied exactly from the document.
Change only what the instruction asks for.";

const REGENERATE_SYSTEM: &str = "You modify an HTML document according to a teacher's instruction.
Return the complete updated HTML document and nothing else. Keep everything the instruction does not ask to change.";

/// What the prompt needs to know about the cited element.
#[derive(Debug, Clone)]
pub struct CitedElement {
    pub xpath: String,
    pub css_selector: String,
    pub snippet: String,
    /// 1-based inclusive line range of the element in the document.
    pub lines: (usize, usize),
}

fn cited_block(instruction: &str, cited: &CitedElement, html: &str) -> String {
    format!(
        "Instruction:\n{instruction}\n\nSelected element (XPath: {}, CSS selector: {}, lines {}-{}):\n{}\n\nDocument original.html ({} lines):\n{html}",
        cited.xpath,
        cited.css_selector,
        cited.lines.0,
        cited.lines.1,
        cited.snippet,
        html.lines().count(),
    )
}

/// Diff-requesting prompt. `retry` carries the previous failure and widens
/// the context shown around the element.
pub fn build_edit_prompt(
    instruction: &str,
    cited: &CitedElement,
    html: &str,
    policy: &EditPolicy,
    retry: Option<(u32, &str)>,
) -> ChatRequest {
    let context = policy.min_context_lines + 2 * retry.map_or(0, |(n, _)| n as usize);
    let mut user = cited_block(instruction, cited, html);
    if let Some((_, reason)) = retry {
        let lines: Vec<&str> = html.lines().collect();
        let from = cited.lines.0.saturating_sub(policy.context_radius).max(1);
        let to = (cited.lines.1 + policy.context_radius).min(lines.len());
        let window = if from <= to {
            lines[from - 1..to].join("\n")
        } else {
            String::new()
        };
        user.push_str(&format!(
            "\n\nYour previous reply could not be applied: {reason}\nLines {from}-{to} of original.html, around the selected element:\n{window}\n\nCopy context lines exactly from these lines and use at least {context} of them around each change."
        ));
    }
    ChatRequest::new(
        ConfigKey::TextGeneration,
        vec![
            Message::system(EDIT_SYSTEM.replace("{context}", &context.to_string())),
            Message::user(user),
        ],
    )
}

pub fn build_regeneration_prompt(
    instruction: &str,
    cited: &CitedElement,
    html: &str,
) -> ChatRequest {
    ChatRequest::new(
        ConfigKey::TextGeneration,
        vec![
            Message::system(REGENERATE_SYSTEM),
            Message::user(cited_block(instruction, cited, html)),
        ],
    )
}

fn line_range(tree: &DomTree, html: &str, node: NodeId) -> (usize, usize) {
    let span = &tree.node(node).span;
    let line_at = |offset: usize| {
        html.as_bytes()[..offset.min(html.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    };
    let end = span.end.max(span.start + 1);
    (line_at(span.start), line_at(end - 1))
}

/// Tries the xpath, then the css selector, then the snippet.
fn locate(tree: &DomTree, sel: &ElementSelector) -> Option<(NodeId, &'static str)> {
    if !sel.xpath.is_empty() {
        if let Ok(Some(n)) = resolve_xpath(tree, &sel.xpath) {
            return Some((n, "xpath"));
        }
    }
    if !sel.css_selector.is_empty() {
        if let Ok(Some(n)) = resolve_css_selector(tree, &sel.css_selector) {
            return Some((n, "css_selector"));
        }
    }
    if !sel.snippet.is_empty() {
        if let Some(n) = find_by_snippet(tree, &sel.snippet) {
            return Some((n, "snippet"));
        }
    }
    None
}

enum DiffFailure {
    Parse(String),
    Apply(String, Option<PatchReport>),
}

fn try_diff(
    html: &str,
    response: &str,
    policy: &FuzzPolicy,
) -> Result<(String, PatchReport), DiffFailure> {
    let body = strip_code_fences(response);
    let doc = parse_unified_diff(body).map_err(|e| DiffFailure::Parse(e.to_string()))?;
    if doc.is_empty() {
        return Err(DiffFailure::Parse("the diff contains no hunks".into()));
    }
    apply_to_text(html, &doc, policy).map_err(|e| {
        let report = match &e {
            crate::diff::PatchError::HunkApplicationFailure { report, .. } => Some(report.clone()),
            _ => None,
        };
        DiffFailure::Apply(e.to_string(), report)
    })
}

impl EditSession {
    pub fn new(courseware_id: impl Into<String>) -> Self {
        Self {
            courseware_id: courseware_id.into(),
            status: EditStatus::Pending,
            attempts: 0,
            gateway_calls: 0,
            resolved_by: None,
            records: Vec::new(),
            new_version: None,
        }
    }
}

/// The page produced by [`edit_html`].
#[derive(Debug, Clone, PartialEq)]
pub struct EditedPage {
    pub html: String,
    pub origin: VersionOrigin,
    pub attempt: u32,
    pub report: Option<PatchReport>,
}

fn check_request(selector: &ElementSelector, instruction: &str) -> Result<(), ServiceError> {
    if instruction.trim().is_empty() {
        return Err(ServiceError::InvalidRequest("instruction is empty".into()));
    }
    if selector.snippet.chars().count() > SNIPPET_LIMIT {
        return Err(ServiceError::InvalidRequest(format!(
            "snippet longer than {SNIPPET_LIMIT} characters"
        )));
    }
    Ok(())
}

/// Runs the diff attempts, then the regeneration fallback, against `html`.
/// Emits `token` and `diff` events; terminal events are left to the caller.
pub fn edit_html(
    gateway: &Gateway,
    policy: &EditPolicy,
    html: &str,
    selector: &ElementSelector,
    instruction: &str,
    session: &mut EditSession,
    on_event: &mut dyn FnMut(&EditEvent),
) -> Result<EditedPage, ServiceError> {
    check_request(selector, instruction)?;
    let tree = parse_html(html);
    let (node, how) = locate(&tree, selector).ok_or(ServiceError::SelectorMiss)?;
    session.resolved_by = Some(how.to_string());
    let cited = CitedElement {
        xpath: selector.xpath.clone(),
        css_selector: selector.css_selector.clone(),
        snippet: if selector.snippet.is_empty() {
            tree.outer_html(node).chars().take(SNIPPET_LIMIT).collect()
        } else {
            selector.snippet.clone()
        },
        lines: line_range(&tree, html, node),
    };

    let mut last_reason: Option<String> = None;
    for n in 1..=policy.diff_attempts {
        session.attempts = n;
        let retry = last_reason.as_deref().map(|r| (n - 1, r));
        let prompt = build_edit_prompt(instruction, &cited, html, policy, retry);
        let response = stream_attempt(gateway, &prompt, n, session, on_event)?;
        let mut record = AttemptRecord {
            attempt: n,
            kind: AttemptKind::Diff,
            prompt_chars: prompt.joined_text().chars().count(),
            response_chars: response.chars().count(),
            error: None,
            report: None,
        };
        match try_diff(html, &response, &policy.fuzz) {
            Ok((patched, report)) => {
                on_event(&EditEvent::Diff {
                    attempt: n,
                    diff: response,
                    accepted: true,
                    reason: None,
                });
                record.report = Some(report.clone());
                session.records.push(record);
                session.status = EditStatus::DiffApplied;
                return Ok(EditedPage {
                    html: patched,
                    origin: VersionOrigin::Edited,
                    attempt: n,
                    report: Some(report),
                });
            }
            Err(failure) => {
                let reason = match failure {
                    DiffFailure::Parse(r) => format!("malformed diff: {r}"),
                    DiffFailure::Apply(r, report) => {
                        record.report = report;
                        format!("diff did not apply: {r}")
                    }
                };
                tracing::debug!(attempt = n, %reason, "edit attempt failed");
                on_event(&EditEvent::Diff {
                    attempt: n,
                    diff: response,
                    accepted: false,
                    reason: Some(reason.clone()),
                });
                record.error = Some(reason.clone());
                session.records.push(record);
                last_reason = Some(reason);
            }
        }
    }

    let reason = last_reason.unwrap_or_else(|| "no diff attempts allowed".into());
    if !policy.regenerate_on_failure {
        return Err(ServiceError::EditFailed {
            attempts: session.attempts,
            reason,
        });
    }
    let n = policy.diff_attempts + 1;
    session.attempts = n;
    let prompt = build_regeneration_prompt(instruction, &cited, html);
    let response = stream_attempt(gateway, &prompt, n, session, on_event)?;
    let page = extract_html(&response);
    let report = validate_well_formed(&page);
    session.records.push(AttemptRecord {
        attempt: n,
        kind: AttemptKind::Regeneration,
        prompt_chars: prompt.joined_text().chars().count(),
        response_chars: response.chars().count(),
        error: (!report.passed()).then(|| report.feedback()),
        report: None,
    });
    if !report.passed() {
        return Err(ServiceError::EditFailed {
            attempts: n,
            reason: format!("regenerated page is not well-formed: {}", report.feedback()),
        });
    }
    session.status = EditStatus::Regenerated;
    Ok(EditedPage {
        html: page,
        origin: VersionOrigin::Regenerated,
        attempt: n,
        report: None,
    })
}

fn stream_attempt(
    gateway: &Gateway,
    request: &ChatRequest,
    attempt: u32,
    session: &mut EditSession,
    on_event: &mut dyn FnMut(&EditEvent),
) -> Result<String, ServiceError> {
    let result = gateway.stream_with(request, &mut |ev| {
        if let StreamEvent::TokenChunk(text) = ev {
            on_event(&EditEvent::Token {
                attempt,
                text: text.clone(),
            });
        }
    });
    match result {
        Ok(c) => {
            session.gateway_calls += c.calls;
            Ok(c.text)
        }
        Err(e) => {
            session.gateway_calls += match &e {
                GatewayError::AllModelsFailed { calls, .. } => *calls,
                GatewayError::InvalidRequest(_) => 0,
                _ => 1,
            };
            Err(ServiceError::EditFailed {
                attempts: attempt,
                reason: format!("model call failed: {e}"),
            })
        }
    }
}

/// Terminal event for a failed session.
pub fn error_event(e: &ServiceError, session: &EditSession) -> EditEvent {
    EditEvent::Error {
        code: e.code().to_string(),
        message: e.to_string(),
        attempt: (session.attempts > 0).then_some(session.attempts),
    }
}

impl Service {
    /// Runs one edit session. Events go to `on_event`; exactly one terminal
    /// event is emitted whether or not the edit succeeds.
    pub fn submit_edit(
        &self,
        courseware_id: &str,
        request: &EditRequest,
        on_event: &mut dyn FnMut(&EditEvent),
    ) -> Result<EditSession, ServiceError> {
        let mut session = EditSession::new(courseware_id);
        match self.run_edit(courseware_id, request, &mut session, on_event) {
            Ok(()) => Ok(session),
            Err(e) => {
                session.status = EditStatus::Failed;
                on_event(&error_event(&e, &session));
                Err(e)
            }
        }
    }

    fn run_edit(
        &self,
        courseware_id: &str,
        request: &EditRequest,
        session: &mut EditSession,
        on_event: &mut dyn FnMut(&EditEvent),
    ) -> Result<(), ServiceError> {
        check_request(&request.element_selector, &request.instruction)?;
        let lock = self.lock_for(courseware_id);
        let _guard = lock.lock().unwrap_or_else(|p| p.into_inner());

        let cw = self.get_courseware(courseware_id)?;
        let current = cw.current();
        let found = content_hash(&request.context_html);
        if found != current.content_hash {
            return Err(ServiceError::StaleContext {
                expected: current.content_hash.clone(),
                found,
            });
        }
        let page = edit_html(
            &self.gateway,
            &self.edit_policy,
            &current.html,
            &request.element_selector,
            &request.instruction,
            session,
            on_event,
        )?;
        let version = self.store_version(&cw, page.html, page.origin)?;
        session.new_version = Some(version.number);
        on_event(&match page.origin {
            VersionOrigin::Edited => EditEvent::Applied {
                attempt: page.attempt,
                version: version.number,
                content_hash: version.content_hash,
                report: page.report.unwrap_or_default(),
            },
            _ => EditEvent::Regenerated {
                attempt: page.attempt,
                version: version.number,
                content_hash: version.content_hash,
            },
        });
        Ok(())
    }

    fn store_version(
        &self,
        cw: &super::Courseware,
        html: String,
        origin: VersionOrigin,
    ) -> Result<Version, ServiceError> {
        let version = Version {
            number: cw.latest_number() + 1,
            content_hash: content_hash(&html),
            html,
            origin,
            created_at: self.clock.now(),
        };
        self.repo.append_version(&cw.id, &version)?;
        Ok(version)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::diff_texts;
    use crate::gateway::{Gateway, MockScript, ScriptEntry};
    use crate::knowledge::{GradeLevel, StructuredKnowledge, SubjectArea};

    const PAGE: &str = "<html>\n<body>\n<h1 id=\"title\">Energy</h1>\n<p>one</p>\n<p>two</p>\n<p>three</p>\n<p>four</p>\n</body>\n</html>\n";

    fn knowledge() -> StructuredKnowledge {
        StructuredKnowledge {
            main_topics: vec!["a".into(), "b".into(), "c".into()],
            key_concepts: vec!["k".into()],
            learning_objectives: vec![],
            prerequisite_knowledge: vec![],
            procedural_concepts: vec![],
            subject_area: SubjectArea::Physics,
            grade_level: GradeLevel::High,
        }
    }

    fn request(html: &str) -> EditRequest {
        EditRequest {
            element_selector: ElementSelector {
                xpath: "//*[@id=\"title\"]".into(),
                css_selector: "#title".into(),
                snippet: "<h1 id=\"title\">Energy</h1>".into(),
                bounding_box: None,
            },
            instruction: "make this red".into(),
            context_html: html.into(),
        }
    }

    fn red_diff() -> String {
        diff_texts(
            PAGE,
            &PAGE.replace("<h1 id=\"title\">", "<h1 id=\"title\" style=\"color:red\">"),
        )
        .to_string()
    }

    fn service(
        script: MockScript,
    ) -> (Service, std::sync::Arc<crate::gateway::MockBackend>, String) {
        let (gw, mock) = Gateway::mock(script);
        let svc = Service::in_memory(gw).unwrap();
        let id = svc.import_courseware(knowledge(), PAGE.into()).unwrap().id;
        (svc, mock, id)
    }

    #[test]
    fn one_shot_diff_applies() {
        let (svc, mock, id) = service(MockScript::new(vec![ScriptEntry::respond(red_diff())]));
        let mut events = Vec::new();
        let s = svc
            .submit_edit(&id, &request(PAGE), &mut |e| events.push(e.clone()))
            .unwrap();
        assert_eq!(s.status, EditStatus::DiffApplied);
        assert_eq!(
            (s.attempts, s.gateway_calls, mock.call_count() as u32),
            (1, 1, 1)
        );
        assert_eq!(s.resolved_by.as_deref(), Some("xpath"));
        let cw = svc.get_courseware(&id).unwrap();
        assert_eq!(cw.current_version, 2);
        assert!(cw.current().html.contains("style=\"color:red\""));
        assert_eq!(events.iter().filter(|e| e.is_terminal()).count(), 1);
        assert!(matches!(
            events.last(),
            Some(EditEvent::Applied { version: 2, .. })
        ));
        assert!(mock.calls()[0].prompt.contains("make this red"));
    }

    #[test]
    fn three_bad_diffs_then_regeneration() {
        let rewrite = PAGE.replace("Energy", "<b>Energy</b>");
        let (svc, mock, id) = service(MockScript::new(vec![
            ScriptEntry::respond("sure, here is the change"),
            ScriptEntry::respond("@@ -1,1 +1,1 @@\n-nope\n+yes\n"),
            ScriptEntry::respond("--- a\n+++ b\n@@ -1,2 +1,2 @@\n x\n"),
            ScriptEntry::respond(rewrite.clone()),
        ]));
        let mut events = Vec::new();
        let s = svc
            .submit_edit(&id, &request(PAGE), &mut |e| events.push(e.clone()))
            .unwrap();
        assert_eq!(s.status, EditStatus::Regenerated);
        assert_eq!((s.attempts, s.gateway_calls), (4, 4));
        assert_eq!(mock.call_count(), 4);
        let prompts: Vec<String> = mock.calls().into_iter().map(|c| c.prompt).collect();
        assert!(prompts[1].contains("Your previous reply could not be applied: malformed diff"));
        assert!(prompts[1].contains("Lines 1-9 of original.html"));
        assert!(prompts[2].contains("at least 7 unchanged context lines"));
        assert!(prompts[3].contains("Return the complete updated HTML document"));
        let cw = svc.get_courseware(&id).unwrap();
        assert_eq!(cw.current().html, rewrite.trim_end());
        assert_eq!(cw.current().origin, VersionOrigin::Regenerated);
        assert!(matches!(
            events.last(),
            Some(EditEvent::Regenerated { attempt: 4, .. })
        ));
    }

    #[test]
    fn stale_context_makes_no_calls() {
        let (svc, mock, id) = service(MockScript::new(vec![ScriptEntry::respond(red_diff())]));
        let mut events = Vec::new();
        let err = svc
            .submit_edit(&id, &request("<p>old</p>"), &mut |e| events.push(e.clone()))
            .unwrap_err();
        assert!(matches!(err, ServiceError::StaleContext { .. }));
        assert_eq!(mock.call_count(), 0);
        assert_eq!(svc.list_versions(&id).unwrap().len(), 1);
        assert!(matches!(&events[..], [EditEvent::Error { code, .. }] if code == "stale_context"));
    }

    #[test]
    fn selector_fallbacks() {
        let (svc, _, id) = service(MockScript::new(vec![
            ScriptEntry::respond(red_diff()).repeating()
        ]));
        let mut req = request(PAGE);
        req.element_selector.xpath = "/HTML[1]/BODY[1]/H2[1]".into();
        let s = svc.submit_edit(&id, &req, &mut |_| {}).unwrap();
        assert_eq!(s.resolved_by.as_deref(), Some("css_selector"));

        let html = svc.get_courseware(&id).unwrap().current().html.clone();
        let mut req = request(&html);
        req.element_selector.xpath = "//bogus".into();
        req.element_selector.css_selector = "#missing".into();
        req.element_selector.snippet = "<p>three</p>".into();
        let err = svc.submit_edit(&id, &req, &mut |_| {});
        // the red diff no longer applies to version 2, but the element was found by snippet
        assert!(!matches!(err, Err(ServiceError::SelectorMiss)));

        let html = svc.get_courseware(&id).unwrap().current().html.clone();
        let mut req = request(&html);
        req.element_selector = ElementSelector {
            xpath: "//*[@id=\"nope\"]".into(),
            css_selector: "#nope".into(),
            snippet: "<aside>".into(),
            bounding_box: None,
        };
        assert!(matches!(
            svc.submit_edit(&id, &req, &mut |_| {}),
            Err(ServiceError::SelectorMiss)
        ));
    }

    #[test]
    fn camel_case_selector_accepted() {
        let json = r#"{"element_selector":{"xpath":"/HTML[1]","cssSelector":"html","elementHtml":"<html>","boundingBox":{"x":0,"y":0,"width":1,"height":1}},
            "instruction":"x","context_html":"<html></html>"}"#;
        let req: EditRequest = serde_json::from_str(json).unwrap();
        assert_eq!(req.element_selector.css_selector, "html");
        assert!(req.element_selector.bounding_box.is_some());
    }

    #[test]
    fn empty_instruction_rejected() {
        let (svc, mock, id) = service(MockScript::default());
        let mut req = request(PAGE);
        req.instruction = "  ".into();
        assert!(matches!(
            svc.submit_edit(&id, &req, &mut |_| {}),
            Err(ServiceError::InvalidRequest(_))
        ));
        assert_eq!(mock.call_count(), 0);
    }
}
