//! Adapter for OpenAI-style `chat/completions` endpoints with SSE streaming.

use std::io::{BufRead, BufReader};
use std::sync::OnceLock;
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatRequest, ModelTarget, Role};

#[derive(Debug, Default)]
pub struct HttpBackend {
    // Built on first use so construction never happens on an async thread.
    client: OnceLock<reqwest::blocking::Client>,
}

impl HttpBackend {
    pub fn new() -> Self {
        Self::default()
    }

    fn client(&self) -> &reqwest::blocking::Client {
        self.client.get_or_init(reqwest::blocking::Client::new)
    }
}

pub(crate) fn request_body(target: &ModelTarget<'_>, request: &ChatRequest) -> Value {
    let last_user = request.messages.iter().rposition(|m| m.role == Role::User);
    let messages: Vec<Value> = request
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            if Some(i) == last_user && !request.images.is_empty() {
                let mut parts = vec![json!({"type": "text", "text": m.content})];
                for img in &request.images {
                    let data = base64::engine::general_purpose::STANDARD.encode(&img.bytes);
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:{};base64,{}", img.media_type.as_str(), data)}
                    }));
                }
                json!({"role": role, "content": parts})
            } else {
                json!({"role": role, "content": m.content})
            }
        })
        .collect();
    json!({
        "model": target.model_id,
        "messages": messages,
        "temperature": target.config.temperature,
        "max_tokens": target.config.max_output_tokens,
        "stream": true,
    })
}

fn map_reqwest(e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Transport(e.to_string())
    }
}

fn map_io(e: std::io::Error) -> BackendError {
    match e.kind() {
        std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => BackendError::Timeout,
        _ => BackendError::Transport(e.to_string()),
    }
}

/// Content delta of one SSE `data:` payload.
fn delta_text(payload: &Value) -> Option<&str> {
    let choice = payload.get("choices")?.get(0)?;
    choice
        .get("delta")
        .and_then(|d| d.get("content"))
        .or_else(|| choice.get("message").and_then(|m| m.get("content")))
        .and_then(Value::as_str)
}

impl ChatBackend for HttpBackend {
    fn chat(
        &self,
        target: &ModelTarget<'_>,
        request: &ChatRequest,
        on_chunk: &mut dyn FnMut(&str),
    ) -> Result<String, BackendError> {
        let url = format!(
            "{}/chat/completions",
            target.config.endpoint.trim_end_matches('/')
        );
        let mut builder = self
            .client()
            .post(url)
            .timeout(Duration::from_secs(target.config.timeout_secs))
            .json(&request_body(target, request));
        if let Ok(key) = std::env::var(&target.config.api_key_env) {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(map_reqwest)?;
        let status = response.status();
        if !status.is_success() {
            let message = response.text().unwrap_or_default();
            return Err(BackendError::Status {
                code: status.as_u16(),
                message: message.chars().take(500).collect(),
            });
        }

        let is_sse = response
            .headers()
            .get(reqwest::header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.starts_with("text/event-stream"));
        if !is_sse {
            let body: Value = response
                .json()
                .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            let text = delta_text(&body)
                .ok_or_else(|| BackendError::InvalidResponse("no message content".into()))?
                .to_string();
            if !text.is_empty() {
                on_chunk(&text);
            }
            return Ok(text);
        }

        let mut out = String::new();
        let mut finished = false;
        for line in BufReader::new(response).lines() {
            let line = line.map_err(map_io)?;
            let Some(data) = line.strip_prefix("data:") else {
                continue;
            };
            let data = data.trim();
            if data == "[DONE]" {
                finished = true;
                break;
            }
            let payload: Value = serde_json::from_str(data)
                .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            if let Some(err) = payload.get("error") {
                return Err(BackendError::InvalidResponse(err.to_string()));
            }
            if let Some(text) = delta_text(&payload) {
                if !text.is_empty() {
                    on_chunk(text);
                    out.push_str(text);
                }
            }
        }
        if !finished {
            return Err(BackendError::Transport(
                "stream ended without [DONE]".into(),
            ));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{ConfigKey, GatewayConfig, MediaType, Message, PageImage};
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// Serves one canned HTTP response and returns the raw request it received.
    fn serve_once(response: String) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            sock.write_all(response.as_bytes()).unwrap();
            String::from_utf8_lossy(&buf).into_owned()
        });
        (format!("http://{addr}"), handle)
    }

    fn sse(events: &[&str]) -> String {
        let body: String = events.iter().map(|e| format!("data: {e}\n\n")).collect();
        format!(
            "HTTP/1.1 200 OK\r\nContent-Type: text/event-stream\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        )
    }

    fn config_for(endpoint: String) -> GatewayConfig {
        let mut c = GatewayConfig::default();
        c.text_generation.endpoint = endpoint.clone();
        c.multimodal_analysis.endpoint = endpoint;
        c.text_generation.timeout_secs = 5;
        c
    }

    #[test]
    fn streams_sse_chunks() {
        let (url, handle) = serve_once(sse(&[
            r#"{"choices":[{"delta":{"content":"<div>"}}]}"#,
            r#"{"choices":[{"delta":{"content":"</div>"}}]}"#,
            "[DONE]",
        ]));
        let cfg = config_for(url);
        let backend = HttpBackend::new();
        let target = ModelTarget {
            model_id: "glm-4.7",
            is_fallback: false,
            config: &cfg.text_generation,
        };
        let mut seen = Vec::new();
        let text = backend
            .chat(&target, &ChatRequest::text("hi"), &mut |c| {
                seen.push(c.to_string())
            })
            .unwrap();
        assert_eq!(text, "<div></div>");
        assert_eq!(seen, vec!["<div>", "</div>"]);
        let raw = handle.join().unwrap();
        assert!(raw.starts_with("POST /chat/completions"));
        assert!(raw.contains(r#""model":"glm-4.7""#));
        assert!(raw.contains(r#""max_tokens":8192"#));
    }

    #[test]
    fn non_success_status() {
        let body = "overloaded";
        let (url, handle) = serve_once(format!(
            "HTTP/1.1 503 Service Unavailable\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        ));
        let cfg = config_for(url);
        let target = ModelTarget {
            model_id: "glm-4.7",
            is_fallback: false,
            config: &cfg.text_generation,
        };
        let err = HttpBackend::new()
            .chat(&target, &ChatRequest::text("hi"), &mut |_| {})
            .unwrap_err();
        assert_eq!(
            err,
            BackendError::Status {
                code: 503,
                message: "overloaded".into()
            }
        );
        handle.join().unwrap();
    }

    #[test]
    fn truncated_stream_is_transport_error() {
        let (url, handle) = serve_once(sse(&[r#"{"choices":[{"delta":{"content":"<p>"}}]}"#]));
        let cfg = config_for(url);
        let target = ModelTarget {
            model_id: "glm-4.7",
            is_fallback: false,
            config: &cfg.text_generation,
        };
        let mut seen = 0;
        let err = HttpBackend::new()
            .chat(&target, &ChatRequest::text("hi"), &mut |_| seen += 1)
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport(_)));
        assert_eq!(seen, 1);
        handle.join().unwrap();
    }

    #[test]
    fn images_become_data_urls() {
        let cfg = GatewayConfig::default();
        let target = ModelTarget {
            model_id: "glm-4.6v",
            is_fallback: false,
            config: &cfg.multimodal_analysis,
        };
        let mut req = ChatRequest::new(
            ConfigKey::MultiModalAnalysis,
            vec![Message::system("s"), Message::user("describe")],
        );
        req.images.push(PageImage {
            media_type: MediaType::Png,
            bytes: vec![1, 2, 3],
        });
        let body = request_body(&target, &req);
        let parts = body["messages"][1]["content"].as_array().unwrap();
        assert_eq!(parts[0]["text"], "describe");
        assert_eq!(parts[1]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(body["messages"][0]["content"], "s");
        assert_eq!(body["temperature"], 0.2);
    }
}
