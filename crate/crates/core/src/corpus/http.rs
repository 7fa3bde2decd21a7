//! Recommendation-service client over HTTP.

use std::time::Duration;

use serde::Deserialize;

use super::{RawRecommendation, RecommendationClient, ServiceError};

pub const DEFAULT_BASE_URL: &str = "https://api.semanticscholar.org";
pub const API_KEY_ENV: &str = "S2_API_KEY";

pub struct HttpRecommendationClient {
    base_url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpRecommendationClient {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, ServiceError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| ServiceError { status: None, message: e.to_string() })?;
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            http,
        })
    }

    /// Base URL from the argument or the default; key from `S2_API_KEY`.
    pub fn from_env(base_url: Option<String>) -> Result<Self, ServiceError> {
        Self::new(
            base_url.unwrap_or_else(|| DEFAULT_BASE_URL.to_string()),
            std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        )
    }
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Response {
    #[serde(default)]
    recommended_papers: Vec<Item>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Item {
    paper_id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
}

impl RecommendationClient for HttpRecommendationClient {
    fn name(&self) -> &str {
        "semantic-scholar-recommendations"
    }

    fn recommend(&self, paper_id: &str, limit: usize) -> Result<Vec<RawRecommendation>, ServiceError> {
        let url = format!(
            "{}/recommendations/v1/papers/forpaper/{}?limit={limit}&fields=paperId,title,abstract",
            self.base_url, paper_id
        );
        let mut req = self.http.get(url);
        if let Some(key) = &self.api_key {
            req = req.header("x-api-key", key);
        }
        let resp = req.send().map_err(|e| ServiceError {
            status: e.status().map(|s| s.as_u16()),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ServiceError {
                status: Some(status.as_u16()),
                message: format!("HTTP {status}"),
            });
        }
        let body: Response = resp.json().map_err(|e| ServiceError {
            status: Some(status.as_u16()),
            message: format!("bad response body: {e}"),
        })?;
        Ok(body
            .recommended_papers
            .into_iter()
            .filter_map(|it| {
                Some(RawRecommendation {
                    paper_id: it.paper_id?,
                    title: it.title,
                    abstract_text: it.abstract_text,
                })
            })
            .collect())
    }
}
