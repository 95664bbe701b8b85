//! HTTP backends: an OpenAI-compatible chat-completions client and the
//! locator endpoint client.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{BoxFormat, ChatModel, ChatRequest, EndpointConfig, GatewayError, Locator};
use crate::action::UiCommand;
use crate::geometry::BoundingBox;
use crate::trace::Observation;

pub const ENV_MLLM_BASE_URL: &str = "MLLM_BASE_URL";
pub const ENV_MLLM_API_KEY: &str = "MLLM_API_KEY";
pub const ENV_LOCATOR_BASE_URL: &str = "LOCATOR_BASE_URL";

const BACKOFF_BASE_MS: u64 = 200;
const BACKOFF_CAP_MS: u64 = 5_000;

fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn mime_for(tag: &str) -> String {
    match tag {
        "jpg" | "jpeg" => "image/jpeg".into(),
        other => format!("image/{other}"),
    }
}

pub fn image_data_url(obs: &Observation) -> String {
    format!("data:{};base64,{}", mime_for(&obs.format_tag), base64::engine::general_purpose::STANDARD.encode(&obs.bytes))
}

/// Request body for one chat completion: a system message and a user message
/// holding one text part and, when present, one image part.
pub fn chat_request_body(cfg: &EndpointConfig, req: &ChatRequest<'_>) -> Value {
    let mut content = vec![json!({ "type": "text", "text": req.prompt })];
    if let Some(obs) = req.image {
        content.push(json!({ "type": "image_url", "image_url": { "url": image_data_url(obs) } }));
    }
    json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            { "role": "system", "content": req.system },
            { "role": "user", "content": content },
        ],
    })
}

/// `choices[0].message.content`, accepting either a string or a list of text parts.
pub fn completion_text(body: &Value) -> Result<String, GatewayError> {
    let content = body
        .pointer("/choices/0/message/content")
        .ok_or_else(|| GatewayError::MalformedResponse("missing choices[0].message.content".into()))?;
    let text = match content {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts.iter().filter_map(|p| p.get("text").and_then(Value::as_str)).collect::<Vec<_>>().join(""),
        Value::Null => String::new(),
        other => return Err(GatewayError::MalformedResponse(format!("unexpected content type: {other}"))),
    };
    if text.trim().is_empty() {
        return Err(GatewayError::ModelRefusal);
    }
    Ok(text)
}

struct Poster {
    client: reqwest::blocking::Client,
    cfg: EndpointConfig,
}

enum Failure {
    Retryable(String),
    Fatal(GatewayError),
}

impl Poster {
    fn new(cfg: EndpointConfig) -> Result<Self, GatewayError> {
        cfg.validate().map_err(|message| GatewayError::Transport { attempts: 0, message })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(Poster { client, cfg })
    }

    fn once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut request = self.client.post(url).json(body);
        if let Some(key) = &self.cfg.api_key {
            request = request.bearer_auth(key.expose());
        }
        let response = request.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Failure::Retryable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(GatewayError::Transport { attempts: 1, message: format!("HTTP {status}: {text}") }));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(GatewayError::MalformedResponse(format!("invalid JSON: {e}"))))
    }

    /// At most `1 + max_retries` attempts; only network errors, 429 and 5xx are retried.
    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = join_url(&self.cfg.base_url, path);
        let attempts = 1 + self.cfg.max_retries;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis((BACKOFF_BASE_MS << (attempt - 1)).min(BACKOFF_CAP_MS)));
            }
            match self.once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(GatewayError::Transport { message, .. })) => {
                    return Err(GatewayError::Transport { attempts: attempt + 1, message })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => {
                    log::warn!("POST {url} attempt {} failed: {message}", attempt + 1);
                    last = message;
                }
            }
        }
        Err(GatewayError::Transport { attempts, message: last })
    }
}

/// Client for `POST {base_url}/chat/completions`.
pub struct OpenAiChatClient {
    poster: Poster,
}

impl OpenAiChatClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self, GatewayError> {
        Ok(OpenAiChatClient { poster: Poster::new(cfg)? })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.poster.cfg
    }
}

impl ChatModel for OpenAiChatClient {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, GatewayError> {
        let body = chat_request_body(&self.poster.cfg, req);
        let response = self.poster.post("chat/completions", &body)?;
        completion_text(&response)
    }
}

/// Interprets a locator response according to the configured wire format.
pub fn parse_locator_box(body: &Value, format: BoxFormat, obs: &Observation) -> Result<BoundingBox, GatewayError> {
    let num = |key: &str| {
        body.get(key)
            .and_then(Value::as_f64)
            .ok_or_else(|| GatewayError::MalformedBox(format!("missing numeric field {key:?} in {body}")))
    };
    let malformed = |e: crate::geometry::GeometryError| GatewayError::MalformedBox(e.to_string());
    match format {
        BoxFormat::NormalizedBox => BoundingBox::new(num("x1")?, num("y1")?, num("x2")?, num("y2")?).map_err(malformed),
        BoxFormat::PixelBox => {
            let (w, h) = (obs.screen_w as f64, obs.screen_h as f64);
            BoundingBox::new(num("x1")? / w, num("y1")? / h, num("x2")? / w, num("y2")? / h).map_err(malformed)
        }
        BoxFormat::NormalizedPoint => {
            let (x, y) = (num("x")?, num("y")?);
            BoundingBox::new(x, y, x, y).map_err(malformed)
        }
    }
}

/// Client for `POST {base_url}/locate` with `{"image_b64", "command"}`.
pub struct HttpLocator {
    poster: Poster,
}

impl HttpLocator {
    pub fn new(cfg: EndpointConfig) -> Result<Self, GatewayError> {
        Ok(HttpLocator { poster: Poster::new(cfg)? })
    }
}

pub fn locate_request_body(obs: &Observation, command: &UiCommand) -> Value {
    json!({
        "image_b64": base64::engine::general_purpose::STANDARD.encode(&obs.bytes),
        "command": command.as_str(),
    })
}

impl Locator for HttpLocator {
    fn locate(&self, obs: &Observation, command: &UiCommand) -> Result<BoundingBox, GatewayError> {
        let response = self.poster.post("locate", &locate_request_body(obs, command)).map_err(|e| match e {
            GatewayError::MalformedResponse(m) => GatewayError::MalformedBox(m),
            other => other,
        })?;
        parse_locator_box(&response, self.poster.cfg.box_format, obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Purpose;
    use crate::trace::{Subset, TaskSpec};

    fn obs() -> Observation {
        Observation::new(vec![0x89, b'P', b'N', b'G'], "png", 1000, 2000, 0)
    }

    #[test]
    fn body_has_one_text_and_one_image_part() {
        let task = TaskSpec::new("t", Subset::General, "x");
        let o = obs();
        let req = ChatRequest {
            purpose: Purpose::Decision,
            attempt: 0,
            system: "sys",
            prompt: "hello",
            image: Some(&o),
            task: &task,
            app_list: &[],
            app_hint: None,
        };
        let cfg = EndpointConfig::new("http://localhost", "InternVL2-76B");
        let body = chat_request_body(&cfg, &req);
        assert_eq!(body["model"], "InternVL2-76B");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["role"], "system");
        let parts = body["messages"][1]["content"].as_array().unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0]["text"], "hello");
        assert_eq!(parts[1]["image_url"]["url"], "data:image/png;base64,iVBORw==");
    }

    #[test]
    fn completion_extraction() {
        let ok = json!({"choices":[{"message":{"content":"ACTION: SWIPE\nDIRECTION: up"}}]});
        assert_eq!(completion_text(&ok).unwrap(), "ACTION: SWIPE\nDIRECTION: up");
        let parts = json!({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]});
        assert_eq!(completion_text(&parts).unwrap(), "ab");
        assert_eq!(completion_text(&json!({"choices":[{"message":{"content":""}}]})), Err(GatewayError::ModelRefusal));
        assert!(matches!(completion_text(&json!({"error":"x"})), Err(GatewayError::MalformedResponse(_))));
    }

    #[test]
    fn box_formats() {
        let o = obs();
        let b = parse_locator_box(&json!({"x1":0.1,"y1":0.2,"x2":0.3,"y2":0.4}), BoxFormat::NormalizedBox, &o).unwrap();
        assert_eq!(b.as_array(), [0.1, 0.2, 0.3, 0.4]);
        let b = parse_locator_box(&json!({"x1":100,"y1":200,"x2":300,"y2":400}), BoxFormat::PixelBox, &o).unwrap();
        assert_eq!(b.as_array(), [0.1, 0.1, 0.3, 0.2]);
        let b = parse_locator_box(&json!({"x":0.5,"y":0.25}), BoxFormat::NormalizedPoint, &o).unwrap();
        assert_eq!(b.center(), (0.5, 0.25));
        let err = parse_locator_box(&json!({"x1":1.2,"y1":0.2,"x2":1.3,"y2":0.4}), BoxFormat::NormalizedBox, &o);
        assert!(matches!(err, Err(GatewayError::MalformedBox(_))));
        let err = parse_locator_box(&json!({"x1":0.5,"y1":0.2,"x2":0.3,"y2":0.4}), BoxFormat::NormalizedBox, &o);
        assert!(matches!(err, Err(GatewayError::MalformedBox(_))));
    }

    #[test]
    fn url_joining() {
        assert_eq!(join_url("http://h:1/v1/", "chat/completions"), "http://h:1/v1/chat/completions");
        assert_eq!(join_url("http://h:1", "locate"), "http://h:1/locate");
    }
}
