//! HTTP access to the backend's `/api/v1/` endpoints.

use std::time::Duration;

use reqwest::{Method, RequestBuilder, StatusCode};
use serde_json::Value;
use url::Url;

use crate::CliError;

#[derive(Debug, Clone)]
pub struct Client {
    http: reqwest::Client,
    base: Url,
    token: Option<String>,
}

impl Client {
    pub fn new(base: &Url, token: Option<String>) -> Result<Self, CliError> {
        let mut base = base.clone();
        if base.cannot_be_a_base() {
            return Err(CliError::Usage(format!("backend URL `{base}` cannot be a base")));
        }
        if !base.path().ends_with('/') {
            base.set_path(&format!("{}/", base.path()));
        }
        let http = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(5))
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| CliError::Remote(format!("http client: {e}")))?;
        Ok(Self { http, base, token })
    }

    pub fn base(&self) -> &Url {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> Result<RequestBuilder, CliError> {
        let url = self
            .base
            .join(path)
            .map_err(|e| CliError::Usage(format!("bad path `{path}`: {e}")))?;
        let mut req = self.http.request(method, url);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        Ok(req)
    }

    async fn send(&self, req: RequestBuilder) -> Result<Vec<u8>, CliError> {
        let resp = req
            .send()
            .await
            .map_err(|e| CliError::Remote(format!("cannot reach backend at {}: {e}", self.base)))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| CliError::Remote(format!("reading response: {e}")))?;
        if status.is_success() {
            Ok(bytes.to_vec())
        } else {
            Err(api_error(status, &bytes))
        }
    }

    pub async fn get_bytes(&self, path: &str) -> Result<Vec<u8>, CliError> {
        self.send(self.request(Method::GET, path)?).await
    }

    /// Sends raw bytes, returning the raw response body.
    pub async fn post_bytes(&self, path: &str, body: Vec<u8>) -> Result<Vec<u8>, CliError> {
        let req = self
            .request(Method::POST, path)?
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        self.send(req).await
    }

    /// The `body` of the enveloped response.
    pub async fn get(&self, path: &str) -> Result<Value, CliError> {
        envelope_body(&self.get_bytes(path).await?)
    }

    pub async fn post(&self, path: &str, body: &Value) -> Result<Value, CliError> {
        envelope_body(&self.post_bytes(path, body.to_string().into_bytes()).await?)
    }
}

pub fn envelope_body(bytes: &[u8]) -> Result<Value, CliError> {
    let mut v: Value = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Remote(format!("backend sent malformed JSON: {e}")))?;
    match v.get_mut("body") {
        Some(body) => Ok(body.take()),
        None => Err(CliError::Remote("backend response has no body".into())),
    }
}

/// Client-side mistakes in content map to validation failures; everything
/// else (auth, missing resources, conflicts, server faults) is remote.
fn api_error(status: StatusCode, bytes: &[u8]) -> CliError {
    let parsed: Option<Value> = serde_json::from_slice(bytes).ok();
    let err = parsed.as_ref().and_then(|v| v.get("error"));
    let code = err.and_then(|e| e.get("code")).and_then(Value::as_str).unwrap_or("HTTP_ERROR");
    let message = err
        .and_then(|e| e.get("message"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| String::from_utf8_lossy(bytes).into_owned());
    let text = format!("{code} ({}): {message}", status.as_u16());
    match status {
        StatusCode::BAD_REQUEST | StatusCode::PAYLOAD_TOO_LARGE | StatusCode::UNPROCESSABLE_ENTITY => {
            CliError::Invalid(text)
        }
        _ => CliError::Remote(text),
    }
}
