//! Canonical JSON: object keys sorted by byte order, no insignificant
//! whitespace, floats in shortest round-trip form.
//!
//! The writer is generic over a [`Sink`] so a frame's length can be measured
//! without materializing it.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde_json::{Number, Value};

pub trait Sink {
    fn put(&mut self, bytes: &[u8]);
}

impl Sink for Vec<u8> {
    fn put(&mut self, bytes: &[u8]) {
        self.extend_from_slice(bytes);
    }
}

/// Counts bytes without storing them.
#[derive(Debug, Default, Clone, Copy)]
pub struct Counter(pub usize);

impl Sink for Counter {
    fn put(&mut self, bytes: &[u8]) {
        self.0 += bytes.len();
    }
}

pub fn write_value<S: Sink>(out: &mut S, value: &Value) {
    match value {
        Value::Null => out.put(b"null"),
        Value::Bool(true) => out.put(b"true"),
        Value::Bool(false) => out.put(b"false"),
        Value::Number(n) => write_number(out, n),
        Value::String(s) => write_str(out, s),
        Value::Array(items) => {
            out.put(b"[");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.put(b",");
                }
                write_value(out, item);
            }
            out.put(b"]");
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.put(b"{");
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.put(b",");
                }
                write_str(out, key);
                out.put(b":");
                write_value(out, &map[key]);
            }
            out.put(b"}");
        }
    }
}

fn write_number<S: Sink>(out: &mut S, n: &Number) {
    let mut buf = String::new();
    if let Some(i) = n.as_i64() {
        let _ = write!(buf, "{i}");
        out.put(buf.as_bytes());
    } else if let Some(u) = n.as_u64() {
        let _ = write!(buf, "{u}");
        out.put(buf.as_bytes());
    } else if let Some(x) = n.as_f64() {
        // serde_json never holds non-finite numbers
        let mut ryu_buf = ryu::Buffer::new();
        out.put(ryu_buf.format_finite(x).as_bytes());
    }
}

fn write_str<S: Sink>(out: &mut S, s: &str) {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    out.put(b"\"");
    let bytes = s.as_bytes();
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        let escape: Option<&[u8]> = match b {
            b'"' => Some(b"\\\""),
            b'\\' => Some(b"\\\\"),
            b'\n' => Some(b"\\n"),
            b'\r' => Some(b"\\r"),
            b'\t' => Some(b"\\t"),
            0x08 => Some(b"\\b"),
            0x0c => Some(b"\\f"),
            0x00..=0x1f => None,
            _ => continue,
        };
        out.put(&bytes[start..i]);
        match escape {
            Some(e) => out.put(e),
            None => out.put(&[
                b'\\',
                b'u',
                b'0',
                b'0',
                HEX[(b >> 4) as usize],
                HEX[(b & 0xf) as usize],
            ]),
        }
        start = i + 1;
    }
    out.put(&bytes[start..]);
    out.put(b"\"");
}

pub fn to_vec(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    write_value(&mut out, value);
    out
}

pub fn to_string(value: &Value) -> String {
    // the writer only emits valid UTF-8
    String::from_utf8(to_vec(value)).unwrap_or_default()
}

pub fn encoded_len(value: &Value) -> usize {
    let mut c = Counter::default();
    write_value(&mut c, value);
    c.0
}
