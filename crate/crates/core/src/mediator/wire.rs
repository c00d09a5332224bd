// SPDX-License-Identifier: Apache-2.0

//! Newline-delimited JSON messages: `{"type": ..., "msg_id": n, "body": {...}}`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uuid::Uuid;

use super::session::SessionSummary;
use super::MediationResult;
use crate::simnet::{attr_map, Attributes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    pub msg_id: u64,
    #[serde(default)]
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitIntent {
    pub intent_text: String,
    pub requester: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBody {
    /// Absent when the answering agent kept no session (escalations).
    pub session_id: Option<Uuid>,
    pub outcome: MediationResult,
    #[serde(default)]
    pub escalation_count: u32,
    #[serde(default)]
    pub agent_chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Escalate {
    pub intent_text: String,
    pub requester: String,
    pub hop_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advertize {
    pub service: String,
    #[serde(default, with = "attr_map")]
    pub attrs: Attributes,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sessions {
    pub sessions: Vec<SessionSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SubmitIntent(SubmitIntent),
    Result(Box<ResultBody>),
    Escalate(Escalate),
    Advertize(Advertize),
    Ack(Ack),
    Ping,
    Pong,
    ListSessions,
    Sessions(Sessions),
    Shutdown,
    Error(ErrorBody),
}

pub mod codes {
    pub const MALFORMED_JSON: &str = "malformed_json";
    pub const MALFORMED_ENVELOPE: &str = "malformed_envelope";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const BAD_BODY: &str = "bad_body";
    pub const UNEXPECTED: &str = "unexpected_message";
    pub const REJECTED: &str = "rejected";
}

impl Message {
    pub fn error(code: &str, message: impl Into<String>) -> Message {
        Message::Error(ErrorBody {
            code: code.to_string(),
            message: message.into(),
        })
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Message::SubmitIntent(_) => "SUBMIT_INTENT",
            Message::Result(_) => "RESULT",
            Message::Escalate(_) => "ESCALATE",
            Message::Advertize(_) => "ADVERTIZE",
            Message::Ack(_) => "ACK",
            Message::Ping => "PING",
            Message::Pong => "PONG",
            Message::ListSessions => "LIST_SESSIONS",
            Message::Sessions(_) => "SESSIONS",
            Message::Shutdown => "SHUTDOWN",
            Message::Error(_) => "ERROR",
        }
    }

    pub fn into_envelope(self, msg_id: u64) -> Envelope {
        let kind = self.type_name().to_string();
        let body = match self {
            Message::SubmitIntent(b) => to_value(&b),
            Message::Result(b) => to_value(&*b),
            Message::Escalate(b) => to_value(&b),
            Message::Advertize(b) => to_value(&b),
            Message::Ack(b) => to_value(&b),
            Message::Sessions(b) => to_value(&b),
            Message::Error(b) => to_value(&b),
            Message::Ping | Message::Pong | Message::ListSessions | Message::Shutdown => {
                Value::Object(Default::default())
            }
        };
        Envelope { kind, msg_id, body }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Message, ErrorBody> {
        Ok(match env.kind.as_str() {
            "SUBMIT_INTENT" => Message::SubmitIntent(body(env)?),
            "RESULT" => Message::Result(Box::new(body(env)?)),
            "ESCALATE" => Message::Escalate(body(env)?),
            "ADVERTIZE" => Message::Advertize(body(env)?),
            "ACK" => Message::Ack(body(env)?),
            "PING" => Message::Ping,
            "PONG" => Message::Pong,
            "LIST_SESSIONS" => Message::ListSessions,
            "SESSIONS" => Message::Sessions(body(env)?),
            "SHUTDOWN" => Message::Shutdown,
            "ERROR" => Message::Error(body(env)?),
            other => {
                return Err(ErrorBody {
                    code: codes::UNKNOWN_TYPE.into(),
                    message: format!("unknown message type {other:?}"),
                })
            }
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("message bodies serialize")
}

fn body<T: DeserializeOwned>(env: &Envelope) -> Result<T, ErrorBody> {
    serde_json::from_value(env.body.clone()).map_err(|e| ErrorBody {
        code: codes::BAD_BODY.into(),
        message: format!("{} body: {e}", env.kind),
    })
}

/// One line of JSON, without the trailing newline.
pub fn encode(env: &Envelope) -> String {
    serde_json::to_string(env).expect("envelopes serialize")
}

/// Decodes one line. On failure, returns the msg_id if one could be
/// recovered so the error reply can echo it.
pub fn decode(line: &str) -> Result<(u64, Message), (u64, ErrorBody)> {
    let value: Value = serde_json::from_str(line).map_err(|e| {
        (
            0,
            ErrorBody {
                code: codes::MALFORMED_JSON.into(),
                message: e.to_string(),
            },
        )
    })?;
    let msg_id = value.get("msg_id").and_then(Value::as_u64).unwrap_or(0);
    let env: Envelope = serde_json::from_value(value).map_err(|e| {
        (
            msg_id,
            ErrorBody {
                code: codes::MALFORMED_ENVELOPE.into(),
                message: e.to_string(),
            },
        )
    })?;
    Message::from_envelope(&env).map(|m| (env.msg_id, m)).map_err(|e| (msg_id, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_shape() {
        let m = Message::SubmitIntent(SubmitIntent {
            intent_text: "<pull, x, NULL>".into(),
            requester: "n1".into(),
        });
        let line = encode(&m.clone().into_envelope(4));
        assert_eq!(
            line,
            r#"{"type":"SUBMIT_INTENT","msg_id":4,"body":{"intent_text":"<pull, x, NULL>","requester":"n1"}}"#
        );
        assert_eq!(decode(&line).unwrap(), (4, m));
        assert_eq!(decode(r#"{"type":"PING","msg_id":1}"#).unwrap(), (1, Message::Ping));
    }

    #[test]
    fn malformed_inputs() {
        let code = |line: &str| decode(line).unwrap_err().1.code;
        assert_eq!(code("not json"), codes::MALFORMED_JSON);
        assert_eq!(code(r#"{"msg_id":3}"#), codes::MALFORMED_ENVELOPE);
        assert_eq!(code(r#"{"type":"NOPE","msg_id":3}"#), codes::UNKNOWN_TYPE);
        assert_eq!(code(r#"{"type":"SUBMIT_INTENT","msg_id":3,"body":{}}"#), codes::BAD_BODY);
        assert_eq!(decode(r#"{"type":"NOPE","msg_id":3}"#).unwrap_err().0, 3);
    }
}
