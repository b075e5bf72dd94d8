//! Length-prefixed RPC frames.
//!
//! A frame is a 4-byte big-endian payload length followed by the canonical
//! JSON encoding of one [`Envelope`]:
//!
//! ```text
//! call:   {"args":[...],"id":<u64>,"kind":"call","method":"<name>"}
//! result: {"id":<u64>,"kind":"result","value":<arg>}
//! error:  {"id":<u64>,"kind":"error","message":"<text>"}
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Number, Value};

use crate::json;
use crate::value::{ArgValue, HandlePolicy, ValueError};

/// Largest payload a frame may carry.
pub const MAX_PAYLOAD: usize = i32::MAX as usize;

pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Call {
        id: u64,
        method: String,
        args: Vec<ArgValue>,
    },
    Result {
        id: u64,
        value: ArgValue,
    },
    Error {
        id: u64,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrameError {
    #[error("frame payload of {len} bytes exceeds limit of {limit}")]
    TooLarge { len: usize, limit: usize },
    #[error("need {needed} more bytes")]
    NeedMoreData { needed: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Value(#[from] ValueError),
}

impl Envelope {
    pub fn id(&self) -> u64 {
        match self {
            Envelope::Call { id, .. } | Envelope::Result { id, .. } | Envelope::Error { id, .. } => {
                *id
            }
        }
    }

    pub fn to_json(&self) -> Result<Value, FrameError> {
        let mut m = Map::new();
        m.insert("id".into(), Value::Number(Number::from(self.id())));
        match self {
            Envelope::Call { method, args, .. } => {
                if method.is_empty() {
                    return Err(FrameError::Protocol("call with empty method name".into()));
                }
                m.insert("kind".into(), Value::String("call".into()));
                m.insert("method".into(), Value::String(method.clone()));
                let args = args
                    .iter()
                    .map(|a| a.to_json(HandlePolicy::Reject))
                    .collect::<Result<_, _>>()?;
                m.insert("args".into(), Value::Array(args));
            }
            Envelope::Result { value, .. } => {
                m.insert("kind".into(), Value::String("result".into()));
                m.insert("value".into(), value.to_json(HandlePolicy::Reject)?);
            }
            Envelope::Error { message, .. } => {
                m.insert("kind".into(), Value::String("error".into()));
                m.insert("message".into(), Value::String(message.clone()));
            }
        }
        Ok(Value::Object(m))
    }

    pub fn from_json(value: &Value) -> Result<Self, FrameError> {
        let obj = value
            .as_object()
            .ok_or_else(|| protocol("envelope is not an object"))?;
        let kind = obj
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| protocol("missing kind"))?;
        let id = obj
            .get("id")
            .and_then(Value::as_u64)
            .ok_or_else(|| protocol("missing or invalid id"))?;
        let expect_keys = |keys: &[&str]| -> Result<(), FrameError> {
            if obj.len() != keys.len() || !keys.iter().all(|k| obj.contains_key(*k)) {
                return Err(protocol("unexpected envelope fields"));
            }
            Ok(())
        };
        match kind {
            "call" => {
                expect_keys(&["id", "kind", "method", "args"])?;
                let method = obj["method"]
                    .as_str()
                    .filter(|m| !m.is_empty())
                    .ok_or_else(|| protocol("call method must be a nonempty string"))?;
                let args = obj["args"]
                    .as_array()
                    .ok_or_else(|| protocol("call args must be an array"))?
                    .iter()
                    .map(|a| ArgValue::from_json(a, HandlePolicy::Reject))
                    .collect::<Result<_, _>>()?;
                Ok(Envelope::Call {
                    id,
                    method: method.into(),
                    args,
                })
            }
            "result" => {
                expect_keys(&["id", "kind", "value"])?;
                Ok(Envelope::Result {
                    id,
                    value: ArgValue::from_json(&obj["value"], HandlePolicy::Reject)?,
                })
            }
            "error" => {
                expect_keys(&["id", "kind", "message"])?;
                let message = obj["message"]
                    .as_str()
                    .ok_or_else(|| protocol("error message must be a string"))?;
                Ok(Envelope::Error {
                    id,
                    message: message.into(),
                })
            }
            other => Err(FrameError::Protocol(alloc::format!("unknown kind {other:?}"))),
        }
    }
}

fn protocol(msg: &str) -> FrameError {
    FrameError::Protocol(msg.to_string())
}

pub fn encode_frame(e: &Envelope) -> Result<Vec<u8>, FrameError> {
    encode_frame_with_limit(e, MAX_PAYLOAD)
}

/// Like [`encode_frame`] with a caller-chosen payload limit (capped at
/// [`MAX_PAYLOAD`]). The payload length is measured before any bytes are
/// buffered.
pub fn encode_frame_with_limit(e: &Envelope, limit: usize) -> Result<Vec<u8>, FrameError> {
    let limit = limit.min(MAX_PAYLOAD);
    let body = e.to_json()?;
    let len = json::encoded_len(&body);
    if len > limit {
        return Err(FrameError::TooLarge { len, limit });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    json::write_value(&mut out, &body);
    Ok(out)
}

/// Reads the payload length from a frame header, if complete.
pub fn payload_len(bytes: &[u8]) -> Result<usize, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::NeedMoreData {
            needed: HEADER_LEN - bytes.len(),
        });
    }
    let len = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_PAYLOAD {
        return Err(FrameError::TooLarge {
            len,
            limit: MAX_PAYLOAD,
        });
    }
    Ok(len)
}

/// Decodes the frame at the start of `bytes`, returning the envelope and the
/// number of bytes consumed. Trailing bytes are left for the caller.
pub fn decode_frame(bytes: &[u8]) -> Result<(Envelope, usize), FrameError> {
    let len = payload_len(bytes)?;
    let end = HEADER_LEN + len;
    if bytes.len() < end {
        return Err(FrameError::NeedMoreData {
            needed: end - bytes.len(),
        });
    }
    Ok((decode_payload(&bytes[HEADER_LEN..end])?, end))
}

pub fn decode_payload(payload: &[u8]) -> Result<Envelope, FrameError> {
    let value: Value = serde_json::from_slice(payload)
        .map_err(|e| FrameError::Protocol(alloc::format!("malformed JSON: {e}")))?;
    Envelope::from_json(&value)
}
