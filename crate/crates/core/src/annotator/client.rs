//! Chat-completion clients used by the annotator.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ServiceError;
use crate::io::{self, sha256_hex, IoError};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub temperature: f64,
    pub system: &'a str,
    pub user: &'a str,
}

pub trait ChatClient: Sync {
    /// Returns the assistant message text.
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ServiceError>;
}

/// Serves recorded replies keyed by the user message, for offline runs.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    replies: HashMap<String, String>,
}

/// Line format of a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub key: String,
    pub response: String,
}

impl ReplayClient {
    pub fn key_for(user_message: &str) -> String {
        sha256_hex(user_message.as_bytes())
    }

    pub fn from_entries(entries: impl IntoIterator<Item = ReplayEntry>) -> Self {
        Self {
            replies: entries.into_iter().map(|e| (e.key, e.response)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Ok(Self::from_entries(io::read_jsonl::<ReplayEntry>(path)?))
    }

    pub fn len(&self) -> usize {
        self.replies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replies.is_empty()
    }
}

impl ChatClient for ReplayClient {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ServiceError> {
        self.replies
            .get(&Self::key_for(request.user))
            .cloned()
            .ok_or_else(|| ServiceError {
                status: Some(404),
                message: "no recorded reply for this prompt".into(),
            })
    }
}

#[cfg(feature = "http")]
pub use self::openai::OpenAiClient;

#[cfg(feature = "http")]
mod openai {
    use std::time::Duration;

    use serde::Deserialize;
    use serde_json::json;

    use super::{ChatClient, ChatRequest};
    use crate::corpus::ServiceError;

    pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
    pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

    /// OpenAI-compatible `/chat/completions` endpoint.
    pub struct OpenAiClient {
        base_url: String,
        api_key: Option<String>,
        http: reqwest::blocking::Client,
    }

    #[derive(Deserialize)]
    struct Completion {
        choices: Vec<Choice>,
    }

    #[derive(Deserialize)]
    struct Choice {
        message: Message,
    }

    #[derive(Deserialize)]
    struct Message {
        content: Option<String>,
    }

    impl OpenAiClient {
        pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, ServiceError> {
            let http = reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| ServiceError { status: None, message: e.to_string() })?;
            Ok(Self {
                base_url: base_url.into().trim_end_matches('/').to_string(),
                api_key,
                http,
            })
        }

        pub fn from_env(base_url: Option<String>) -> Result<Self, ServiceError> {
            Self::new(
                base_url.unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
                std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            )
        }
    }

    impl ChatClient for OpenAiClient {
        fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ServiceError> {
            let body = json!({
                "model": request.model,
                "temperature": request.temperature,
                "response_format": {"type": "json_object"},
                "messages": [
                    {"role": "system", "content": request.system},
                    {"role": "user", "content": request.user},
                ],
            });
            let mut req = self
                .http
                .post(format!("{}/chat/completions", self.base_url))
                .json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| ServiceError {
                status: e.status().map(|s| s.as_u16()),
                message: e.to_string(),
            })?;
            let status = resp.status();
            if !status.is_success() {
                let text = resp.text().unwrap_or_default();
                return Err(ServiceError {
                    status: Some(status.as_u16()),
                    message: format!("HTTP {status}: {}", text.chars().take(300).collect::<String>()),
                });
            }
            let completion: Completion = resp.json().map_err(|e| ServiceError {
                status: Some(status.as_u16()),
                message: format!("bad completion body: {e}"),
            })?;
            completion
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| ServiceError {
                    status: Some(status.as_u16()),
                    message: "completion had no message content".into(),
                })
        }
    }

}
