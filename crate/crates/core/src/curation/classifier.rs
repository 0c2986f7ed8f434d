//! Single-object screening clients: a deterministic keyword mock and a
//! generic HTTP client posting the four screening views as PNGs.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectCount {
    Single,
    Multiple,
    Unknown,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("classifier unavailable: {0}")]
    Unavailable(String),
    #[error("classifier response malformed: {0}")]
    BadResponse(String),
}

/// One tone-mapped view sent for screening.
#[derive(Clone, Debug)]
pub struct ScreeningImage {
    pub name: String,
    pub png: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct ScreeningRequest {
    pub asset_id: String,
    pub metadata: Vec<String>,
    pub views: Vec<ScreeningImage>,
}

pub trait SingleObjectClient: Send + Sync {
    fn classify(&self, request: &ScreeningRequest) -> Result<ObjectCount, ClientError>;
}

/// Offline stand-in for the vision-language classifier.
#[derive(Clone, Debug)]
pub enum MockClient {
    AlwaysSingle,
    AlwaysMultiple,
    /// Looks up each metadata tag (case-insensitive) in order; the first hit
    /// wins, no hit gives `Unknown`.
    Keywords(BTreeMap<String, ObjectCount>),
}

impl MockClient {
    /// Keyword table understanding the tags used by the bundled fixtures.
    pub fn default_keywords() -> Self {
        let mut table = BTreeMap::new();
        for k in ["single", "object"] {
            table.insert(k.to_string(), ObjectCount::Single);
        }
        for k in ["multiple", "pair", "group", "scene"] {
            table.insert(k.to_string(), ObjectCount::Multiple);
        }
        MockClient::Keywords(table)
    }
}

impl SingleObjectClient for MockClient {
    fn classify(&self, request: &ScreeningRequest) -> Result<ObjectCount, ClientError> {
        Ok(match self {
            MockClient::AlwaysSingle => ObjectCount::Single,
            MockClient::AlwaysMultiple => ObjectCount::Multiple,
            MockClient::Keywords(table) => request
                .metadata
                .iter()
                .find_map(|tag| table.get(&tag.to_lowercase()).copied())
                .unwrap_or(ObjectCount::Unknown),
        })
    }
}

/// Posts `multipart/form-data` with one PNG part per view (field name = view
/// name) and expects `{"objects": <int>}` back.
pub struct HttpClient {
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ObjectsResponse {
    objects: i64,
}

const BOUNDARY: &str = "emberforge-screening-boundary-7f3a9c";

impl HttpClient {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).build();
        Self { url: url.into(), agent: ureq::Agent::new_with_config(config) }
    }

    pub fn multipart_body(request: &ScreeningRequest) -> Vec<u8> {
        let mut body = Vec::new();
        for v in &request.views {
            body.extend_from_slice(
                format!(
                    "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{0}\"; filename=\"{0}.png\"\r\nContent-Type: image/png\r\n\r\n",
                    v.name
                )
                .as_bytes(),
            );
            body.extend_from_slice(&v.png);
            body.extend_from_slice(b"\r\n");
        }
        body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
        body
    }

    pub fn content_type() -> String {
        format!("multipart/form-data; boundary={BOUNDARY}")
    }
}

/// Maps an object count reported by a classifier to a verdict.
pub fn count_to_verdict(objects: i64) -> ObjectCount {
    match objects {
        1 => ObjectCount::Single,
        n if n >= 2 => ObjectCount::Multiple,
        _ => ObjectCount::Unknown,
    }
}

impl SingleObjectClient for HttpClient {
    fn classify(&self, request: &ScreeningRequest) -> Result<ObjectCount, ClientError> {
        let body = Self::multipart_body(request);
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Content-Type", Self::content_type())
            .header("X-Asset-Id", &request.asset_id)
            .send(&body[..])
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::BadResponse(e.to_string()))?;
        let parsed: ObjectsResponse =
            serde_json::from_str(&text).map_err(|e| ClientError::BadResponse(format!("{e}: {text}")))?;
        Ok(count_to_verdict(parsed.objects))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tags: &[&str]) -> ScreeningRequest {
        ScreeningRequest {
            asset_id: "a".into(),
            metadata: tags.iter().map(|s| s.to_string()).collect(),
            views: vec![ScreeningImage { name: "front".into(), png: vec![1, 2, 3] }],
        }
    }

    #[test]
    fn keyword_mock() {
        let m = MockClient::default_keywords();
        assert_eq!(m.classify(&req(&["LED", "Single"])).unwrap(), ObjectCount::Single);
        assert_eq!(m.classify(&req(&["pair"])).unwrap(), ObjectCount::Multiple);
        assert_eq!(m.classify(&req(&["lamp"])).unwrap(), ObjectCount::Unknown);
        assert_eq!(MockClient::AlwaysMultiple.classify(&req(&[])).unwrap(), ObjectCount::Multiple);
    }

    #[test]
    fn counts() {
        assert_eq!(count_to_verdict(1), ObjectCount::Single);
        assert_eq!(count_to_verdict(3), ObjectCount::Multiple);
        assert_eq!(count_to_verdict(0), ObjectCount::Unknown);
    }

    #[test]
    fn multipart_layout() {
        let body = HttpClient::multipart_body(&req(&[]));
        let text = String::from_utf8_lossy(&body);
        assert!(text.starts_with(&format!("--{BOUNDARY}\r\n")));
        assert!(text.contains("name=\"front\"; filename=\"front.png\""));
        assert!(text.ends_with(&format!("--{BOUNDARY}--\r\n")));
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        let c = HttpClient::new("http://127.0.0.1:9/classify", Duration::from_millis(500));
        assert!(matches!(c.classify(&req(&[])), Err(ClientError::Unavailable(_))));
    }
}
