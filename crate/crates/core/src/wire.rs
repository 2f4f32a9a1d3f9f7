//! JSON encoding of values and the worker request/response frames.
//!
//! Frames are newline-delimited JSON objects:
//!
//! ```text
//! request:  {"id": "<id>", "op": "call", "args": [<wire value>, ...]}
//! response: {"id": "<id>", "status": "ok" | "invalid-input" | "error",
//!            "value"?: <wire value>, "message"?: "<text>"}
//! ```
//!
//! Wire values: booleans, integers and strings as JSON scalars; sequences
//! as JSON arrays; `{"tuple": [...]}`; `{"none": true}`;
//! `{"set": {"kind": "full" | "subset", "values": [...]}}`;
//! `{"map": {"<key>": <wire value>, ...}}`. Special values never appear
//! inside wire values; they are carried by the response status.
//!
//! Stored artifacts (fixture tables, records) use the same encoding plus
//! `{"special": "angelic" | "demonic" | "undefined"}`; this is the serde
//! form of [`Value`].

use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Number};
use thiserror::Error;

use crate::value::{SetKind, Special, Value, ValueSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("value cannot be sent over the wire: {0}")]
    Unencodable(String),
}

fn malformed(msg: impl Into<String>) -> WireError {
    WireError::Malformed(msg.into())
}

pub fn to_wire(v: &Value) -> Result<serde_json::Value, WireError> {
    encode(v, false)
}

pub fn from_wire(j: &serde_json::Value) -> Result<Value, WireError> {
    decode(j, false)
}

/// Stored form of a value; specials allowed.
pub fn to_json(v: &Value) -> serde_json::Value {
    encode(v, true).expect("every value has a stored form")
}

pub fn from_json(j: &serde_json::Value) -> Result<Value, WireError> {
    decode(j, true)
}

fn encode(v: &Value, stored: bool) -> Result<serde_json::Value, WireError> {
    let to_wire = |v: &Value| encode(v, stored);
    Ok(match v {
        Value::None => json!({"none": true}),
        Value::Bool(b) => json!(b),
        Value::Int(i) => serde_json::Value::Number(
            Number::from_str(&i.to_string()).map_err(|e| WireError::Unencodable(e.to_string()))?,
        ),
        Value::Str(s) => json!(s),
        Value::Seq(vs) => serde_json::Value::Array(vs.iter().map(to_wire).collect::<Result<_, _>>()?),
        Value::Tuple(vs) => {
            json!({"tuple": vs.iter().map(to_wire).collect::<Result<Vec<_>, _>>()?})
        }
        Value::Map(m) => {
            let mut obj = Map::new();
            for (k, v) in m {
                obj.insert(k.clone(), to_wire(v)?);
            }
            json!({"map": obj})
        }
        Value::Set(kind, s) => {
            let kind = match kind {
                SetKind::Full => "full",
                SetKind::Subset => "subset",
            };
            let values = s.iter().map(to_wire).collect::<Result<Vec<_>, _>>()?;
            json!({"set": {"kind": kind, "values": values}})
        }
        Value::Special(s) if stored => json!({"special": s}),
        Value::Special(s) => return Err(WireError::Unencodable(format!("special value {s}"))),
    })
}

fn decode(j: &serde_json::Value, stored: bool) -> Result<Value, WireError> {
    let from_wire = |j: &serde_json::Value| decode(j, stored);
    match j {
        serde_json::Value::Null => Ok(Value::None),
        serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
        serde_json::Value::Number(n) => {
            BigInt::from_str(&n.to_string()).map(Value::Int).map_err(|_| malformed(format!("non-integer number {n}")))
        }
        serde_json::Value::String(s) => Ok(Value::Str(s.clone())),
        serde_json::Value::Array(items) => Ok(Value::Seq(items.iter().map(from_wire).collect::<Result<_, _>>()?)),
        serde_json::Value::Object(obj) => {
            if obj.len() != 1 {
                return Err(malformed("tagged value must have exactly one key"));
            }
            let (tag, body) = obj.iter().next().expect("one entry");
            match tag.as_str() {
                "none" => match body {
                    serde_json::Value::Bool(true) => Ok(Value::None),
                    _ => Err(malformed("none tag must be true")),
                },
                "tuple" => match body {
                    serde_json::Value::Array(items) => {
                        Ok(Value::Tuple(items.iter().map(from_wire).collect::<Result<_, _>>()?))
                    }
                    _ => Err(malformed("tuple body must be an array")),
                },
                "map" => match body {
                    serde_json::Value::Object(m) => {
                        let mut out = BTreeMap::new();
                        for (k, v) in m {
                            out.insert(k.clone(), from_wire(v)?);
                        }
                        Ok(Value::Map(out))
                    }
                    _ => Err(malformed("map body must be an object")),
                },
                "set" => {
                    let kind = match body.get("kind").and_then(|k| k.as_str()) {
                        Some("full") => SetKind::Full,
                        Some("subset") => SetKind::Subset,
                        _ => return Err(malformed("set kind must be \"full\" or \"subset\"")),
                    };
                    let values = body
                        .get("values")
                        .and_then(|v| v.as_array())
                        .ok_or_else(|| malformed("set values must be an array"))?;
                    let elems = values.iter().map(from_wire).collect::<Result<Vec<_>, _>>()?;
                    Ok(Value::Set(kind, ValueSet::new(elems)))
                }
                "special" if stored => serde_json::from_value::<Special>(body.clone())
                    .map(Value::Special)
                    .map_err(|e| malformed(e.to_string())),
                other => Err(malformed(format!("unknown value tag {other:?}"))),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: String,
    pub op: String,
    pub args: Vec<serde_json::Value>,
}

impl Request {
    pub fn call(id: impl Into<String>, args: &[Value]) -> Result<Request, WireError> {
        Ok(Request { id: id.into(), op: "call".into(), args: args.iter().map(to_wire).collect::<Result<_, _>>()? })
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("request serializes");
        s.push('\n');
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "ok")]
    Ok,
    #[serde(rename = "invalid-input")]
    InvalidInput,
    #[serde(rename = "error")]
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl Response {
    pub fn ok(id: impl Into<String>, v: &Value) -> Result<Response, WireError> {
        Ok(Response { id: id.into(), status: Status::Ok, value: Some(to_wire(v)?), message: None })
    }

    /// Value the response denotes: the payload on success, `Undefined` for
    /// rejected input, `Demonic` for any other failure.
    pub fn outcome(&self) -> Result<Value, WireError> {
        match self.status {
            Status::Ok => {
                let v = self.value.as_ref().ok_or_else(|| malformed("ok response without value"))?;
                from_wire(v)
            }
            Status::InvalidInput => Ok(Value::Special(Special::Undefined)),
            Status::Error => Ok(Value::Special(Special::Demonic)),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        to_json(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = serde_json::Value::deserialize(d)?;
        from_json(&j).map_err(serde::de::Error::custom)
    }
}

pub fn parse_response(frame: &[u8]) -> Result<Response, WireError> {
    serde_json::from_slice(frame).map_err(|e| malformed(e.to_string()))
}

/// Decodes one response frame into the value it denotes.
pub fn decode_wire_value(frame: &[u8]) -> Result<Value, WireError> {
    parse_response(frame)?.outcome()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_set_frame() {
        let v =
            decode_wire_value(br#"{"id":"1","status":"ok","value":{"set":{"kind":"full","values":[0,1]}}}"#).unwrap();
        assert_eq!(v, Value::full_set([Value::int(0), Value::int(1)]));
    }

    #[test]
    fn subset_frame() {
        let v =
            decode_wire_value(br#"{"id":"1","status":"ok","value":{"set":{"kind":"subset","values":[-1]}}}"#).unwrap();
        assert_eq!(v, Value::subset([Value::int(-1)]));
    }

    #[test]
    fn invalid_input_is_undefined() {
        let v = decode_wire_value(br#"{"id":"7","status":"invalid-input","message":"ValueError"}"#).unwrap();
        assert_eq!(v, Value::UNDEFINED);
        let v = decode_wire_value(br#"{"id":"7","status":"error","message":"boom"}"#).unwrap();
        assert_eq!(v, Value::DEMONIC);
    }

    #[test]
    fn malformed_frames_are_errors() {
        assert!(decode_wire_value(b"not json").is_err());
        assert!(decode_wire_value(br#"{"id":"1","status":"ok"}"#).is_err());
        assert!(decode_wire_value(br#"{"id":"1","status":"ok","value":1.5}"#).is_err());
        assert!(decode_wire_value(br#"{"id":"1","status":"ok","value":{"a":1,"b":2}}"#).is_err());
        assert!(decode_wire_value(br#"{"id":"1","status":"maybe"}"#).is_err());
    }

    #[test]
    fn request_layout_is_exact() {
        let r = Request::call("3", &[Value::int(1), Value::None, Value::tuple([Value::str("a")])]).unwrap();
        assert_eq!(r.to_line(), "{\"id\":\"3\",\"op\":\"call\",\"args\":[1,{\"none\":true},{\"tuple\":[\"a\"]}]}\n");
    }

    #[test]
    fn big_integers_survive() {
        let big: BigInt = "123456789012345678901234567890".parse().unwrap();
        let v = Value::Int(big);
        assert_eq!(from_wire(&to_wire(&v).unwrap()).unwrap(), v);
    }

    #[test]
    fn specials_do_not_encode() {
        assert!(to_wire(&Value::DEMONIC).is_err());
        assert!(from_wire(&json!({"special": "demonic"})).is_err());
    }

    #[test]
    fn stored_form_keeps_specials() {
        let v = Value::tuple([Value::UNDEFINED, Value::subset([Value::int(1)])]);
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(text, r#"{"tuple":[{"special":"undefined"},{"set":{"kind":"subset","values":[1]}}]}"#);
        assert_eq!(serde_json::from_str::<Value>(&text).unwrap(), v);
    }
}
