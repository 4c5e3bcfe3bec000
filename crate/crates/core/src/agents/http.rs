use serde::Deserialize;
use serde_json::json;

use super::{BackendError, ChatBackend, ChatMessage, CompletionParams};

/// Client for an OpenAI-style `/v1/chat/completions` endpoint.
pub struct HttpChatBackend {
    url: String,
    model: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

impl HttpChatBackend {
    /// `base_url` is the server root; the chat path is appended.
    pub fn new(base_url: &str, model: impl Into<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(HttpChatBackend {
            url: chat_url(base_url),
            model: model.into(),
            client,
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

fn chat_url(base: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

pub(crate) fn request_body(model: &str, messages: &[ChatMessage], params: &CompletionParams) -> serde_json::Value {
    let mut body = json!({
        "model": model,
        "messages": messages,
        "max_tokens": params.max_tokens,
        "temperature": params.temperature,
        "stream": false,
    });
    if !params.stop_sequences.is_empty() {
        body["stop"] = json!(params.stop_sequences);
    }
    body
}

pub(crate) fn parse_response(body: &str) -> Result<String, BackendError> {
    let parsed: ChatResponse =
        serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".into()))
}

impl ChatBackend for HttpChatBackend {
    fn complete(&self, messages: &[ChatMessage], params: &CompletionParams) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.url)
            .timeout(params.timeout)
            .json(&request_body(&self.model, messages, params))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Rejected(format!("{status}: {text}")));
        }
        parse_response(&text)
    }
}
