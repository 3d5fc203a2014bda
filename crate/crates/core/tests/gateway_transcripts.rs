//! Replays the scripted transcripts in `tests/fixtures/transcripts`.

use std::path::Path;

use serde::Deserialize;

use courseware::gateway::{
    ChatRequest, ConfigKey, Gateway, GatewayConfig, Message, MockScript, StreamEvent,
};

#[derive(Deserialize)]
struct Transcript {
    request: RequestSpec,
    script: MockScript,
    expect: Expect,
}

#[derive(Deserialize)]
struct RequestSpec {
    config_key: ConfigKey,
    prompt: String,
}

#[derive(Deserialize)]
struct Expect {
    text: Option<String>,
    model_id: Option<String>,
    used_fallback: Option<bool>,
    calls: usize,
    retries: Option<u32>,
    error_code: Option<String>,
    events: Vec<String>,
}

fn kind(e: &StreamEvent) -> &'static str {
    match e {
        StreamEvent::TokenChunk(_) => "token",
        StreamEvent::Done(_) => "done",
        StreamEvent::Error { .. } => "error",
    }
}

fn replay(path: &Path) {
    let t: Transcript = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let (gateway, mock) = Gateway::mock(t.script);
    assert_eq!(gateway.config(), &GatewayConfig::default());
    let request = ChatRequest::new(t.request.config_key, vec![Message::user(t.request.prompt)]);

    let mut events = Vec::new();
    let result = gateway.stream_with(&request, &mut |e| events.push(e.clone()));
    let name = path.display();
    assert_eq!(
        events.iter().map(kind).collect::<Vec<_>>(),
        t.expect.events,
        "{name}"
    );
    assert_eq!(
        events.iter().filter(|e| e.is_terminal()).count(),
        1,
        "{name}"
    );
    assert!(events.last().unwrap().is_terminal(), "{name}");
    assert_eq!(mock.call_count(), t.expect.calls, "{name}");

    match result {
        Ok(c) => {
            assert_eq!(t.expect.error_code, None, "{name}");
            assert_eq!(Some(&c.text), t.expect.text.as_ref(), "{name}");
            assert_eq!(Some(&c.model_id), t.expect.model_id.as_ref(), "{name}");
            assert_eq!(Some(c.used_fallback), t.expect.used_fallback, "{name}");
            assert_eq!(Some(c.retries), t.expect.retries, "{name}");
            assert_eq!(c.calls as usize, t.expect.calls, "{name}");
            assert!(c.retries <= 2 * gateway.config().for_key(request.config_key).max_retries);
            let tokens: String = events
                .iter()
                .filter_map(|e| match e {
                    StreamEvent::TokenChunk(s) => Some(s.as_str()),
                    _ => None,
                })
                .collect();
            assert_eq!(tokens, c.text, "{name}");
        }
        Err(e) => assert_eq!(Some(e.code()), t.expect.error_code.as_deref(), "{name}"),
    }
}

#[test]
fn transcript_corpus_replays() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts");
    let mut paths: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.sort();
    assert!(paths.len() >= 3);
    for p in paths {
        replay(&p);
    }
}

#[test]
fn same_script_same_transcript() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/transcripts");
    let text = std::fs::read_to_string(dir.join("fallback_answers.json")).unwrap();
    let run = || {
        let t: Transcript = serde_json::from_str(&text).unwrap();
        let (gateway, mock) = Gateway::mock(t.script);
        let request = ChatRequest::new(t.request.config_key, vec![Message::user(t.request.prompt)]);
        let events = gateway.stream(&request);
        (events, mock.calls())
    };
    assert_eq!(run(), run());
}
