//! Dispatch and callback envelopes exchanged between the backend and modules.
//!
//! Payloads travel as raw JSON so that what a module receives on an input port
//! is byte-for-byte what the producing module sent back.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;
use url::Url;
use uuid::Uuid;

/// POSTed by the backend to a processor's `data_endpoint`. The module must
/// answer `202 Accepted` and deliver results to `callback_url` later.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispatchEnvelope {
    pub job_id: Uuid,
    pub node_id: String,
    pub callback_url: String,
    #[serde(default)]
    pub settings: Value,
    /// Input port name to a serialized data model envelope.
    pub inputs: BTreeMap<String, Box<RawValue>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallbackStatus {
    Success,
    Failure,
}

/// POSTed by a module to the callback URL it was given.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallbackEnvelope {
    pub job_id: Uuid,
    pub node_id: String,
    pub callback_token: String,
    pub status: CallbackStatus,
    /// Output port name to a serialized data model envelope. Success only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub outputs: BTreeMap<String, Box<RawValue>>,
    /// Failure only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl CallbackEnvelope {
    pub fn success(
        dispatch: &DispatchEnvelope,
        token: impl Into<String>,
        outputs: BTreeMap<String, Box<RawValue>>,
    ) -> Self {
        Self {
            job_id: dispatch.job_id,
            node_id: dispatch.node_id.clone(),
            callback_token: token.into(),
            status: CallbackStatus::Success,
            outputs,
            message: None,
        }
    }

    pub fn failure(dispatch: &DispatchEnvelope, token: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            job_id: dispatch.job_id,
            node_id: dispatch.node_id.clone(),
            callback_token: token.into(),
            status: CallbackStatus::Failure,
            outputs: BTreeMap::new(),
            message: Some(message.into()),
        }
    }
}

/// Wraps already-serialized envelope bytes without re-encoding them.
pub fn raw_payload(bytes: Vec<u8>) -> Result<Box<RawValue>, serde_json::Error> {
    let text = String::from_utf8(bytes).map_err(|e| {
        serde::de::Error::custom(format!("payload is not UTF-8: {e}"))
    })?;
    RawValue::from_string(text)
}

/// `{public}/callback/{job}/{node}?token={token}` with proper escaping.
pub fn callback_url(public: &Url, job_id: Uuid, node_id: &str, token: &str) -> Url {
    let mut url = public.clone();
    {
        let mut segments = url
            .path_segments_mut()
            .expect("public URL must be a base URL");
        segments.pop_if_empty().push("callback").push(&job_id.to_string()).push(node_id);
    }
    url.query_pairs_mut().clear().append_pair("token", token);
    url
}

/// Reads the callback token back out of a callback URL.
pub fn token_from_callback_url(url: &str) -> Option<String> {
    let url = Url::parse(url).ok()?;
    url.query_pairs()
        .find(|(k, _)| k == "token")
        .map(|(_, v)| v.into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn callback_url_escapes_node_ids() {
        let public = Url::parse("http://127.0.0.1:8080/").unwrap();
        let job = Uuid::nil();
        let url = callback_url(&public, job, "ner 1/x", "tok");
        assert_eq!(
            url.as_str(),
            "http://127.0.0.1:8080/callback/00000000-0000-0000-0000-000000000000/ner%201%2Fx?token=tok"
        );
        assert_eq!(token_from_callback_url(url.as_str()).as_deref(), Some("tok"));
    }

    #[test]
    fn raw_inputs_keep_their_bytes() {
        let payload = br#"{"b":1,  "a":2}"#.to_vec();
        let dispatch = DispatchEnvelope {
            job_id: Uuid::nil(),
            node_id: "n".into(),
            callback_url: "http://x/callback".into(),
            settings: Value::Null,
            inputs: BTreeMap::from([("in".to_string(), raw_payload(payload).unwrap())]),
        };
        let text = serde_json::to_string(&dispatch).unwrap();
        let back: DispatchEnvelope = serde_json::from_str(&text).unwrap();
        assert_eq!(back.inputs["in"].get(), r#"{"b":1,  "a":2}"#);
    }

    #[test]
    fn failure_callback_shape() {
        let dispatch = DispatchEnvelope {
            job_id: Uuid::nil(),
            node_id: "n".into(),
            callback_url: String::new(),
            settings: Value::Null,
            inputs: BTreeMap::new(),
        };
        let cb = CallbackEnvelope::failure(&dispatch, "t", "boom");
        let v: Value = serde_json::to_value(&cb).unwrap();
        assert_eq!(v["status"], "failure");
        assert_eq!(v["message"], "boom");
        assert!(v.get("outputs").is_none());
    }
}
