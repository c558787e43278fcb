//! Live HTTP transport for the keyword-extraction endpoint.

use std::time::Duration;

use asrl_core::curation::{CurationError, KeywordTransport};

pub struct UreqTransport {
    url: String,
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(url: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(15)))
            .build();
        UreqTransport { url: url.to_string(), agent: config.new_agent() }
    }
}

impl KeywordTransport for UreqTransport {
    fn post(&mut self, request: &serde_json::Value) -> Result<serde_json::Value, CurationError> {
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(request.to_string())
            .map_err(|e| CurationError::ExtractorFailure(format!("POST {}: {e}", self.url)))?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| CurationError::ExtractorFailure(format!("reading response body: {e}")))?;
        serde_json::from_str(&body).map_err(|e| {
            CurationError::ExtractorFailure(format!("endpoint returned invalid JSON: {e}"))
        })
    }
}
