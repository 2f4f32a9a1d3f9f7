//! The runtime value model exchanged with candidate programs.
//!
//! A [`Value`] is a small JSON-like datum (none, booleans, big integers,
//! strings, sequences, tuples, string-keyed maps) extended with two
//! variants that only make sense while checking properties: marked sets
//! ([`SetKind::Full`] or [`SetKind::Subset`]) and special values
//! ([`Special`]).
//!
//! # Canonical encoding
//!
//! Every value has a *fingerprint*: a prefix-free byte string that is
//! stable across runs and platforms. The grammar is
//!
//! ```text
//! enc(None)          = "n"
//! enc(Bool(true))    = "t"          enc(Bool(false)) = "f"
//! enc(Int(k))        = "i" decimal(k) ";"
//! enc(Str(s))        = "s" len(utf8(s)) ":" utf8(s)
//! enc(Seq([v..]))    = "l" count ":" enc(v)..
//! enc(Tuple([v..]))  = "u" count ":" enc(v)..
//! enc(Map({k: v..})) = "m" count ":" (enc(Str(k)) enc(v))..   keys ascending
//! enc(Full{v..})     = "S" count ":" enc(v)..                 sorted by enc, deduplicated
//! enc(Subset{v..})   = "P" count ":" enc(v)..                 fingerprint only
//! enc(Angelic)       = "!A"   enc(Demonic) = "!D"   enc(Undefined) = "!U"   fingerprint only
//! ```
//!
//! [`canonical_encode`] is the restriction of the fingerprint to the
//! Normal / Full-set fragment and is used as the on-disk key of fixture
//! tables. It is injective on that fragment.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failures of the value contracts.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValueError {
    #[error("special value {0} has no canonical encoding")]
    SpecialNotEncodable(Special),
    #[error("subset-marked set has no canonical encoding")]
    SubsetNotEncodable,
    #[error("cannot pick the strongest of an empty list of special values")]
    NoSpecials,
}

/// Special values used when checking properties.
///
/// The derived order is the strength order: `Undefined < Angelic < Demonic`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Special {
    /// The program rejected its input as invalid.
    Undefined,
    /// A tolerated gap in the evidence.
    Angelic,
    /// A crash, timeout or protocol violation.
    Demonic,
}

impl Special {
    fn tag(self) -> &'static str {
        match self {
            Special::Undefined => "!U",
            Special::Angelic => "!A",
            Special::Demonic => "!D",
        }
    }
}

impl fmt::Display for Special {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Special::Undefined => "undefined",
            Special::Angelic => "angelic",
            Special::Demonic => "demonic",
        };
        f.write_str(name)
    }
}

/// Whether a set is known completely or only a tractable part of it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Full,
    Subset,
}

/// The elements of a set, kept sorted by fingerprint and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ValueSet {
    elems: Vec<Value>,
}

impl ValueSet {
    pub fn new(items: impl IntoIterator<Item = Value>) -> Self {
        let mut keyed: Vec<(Vec<u8>, Value)> = items.into_iter().map(|v| (v.fingerprint(), v)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        keyed.dedup_by(|a, b| a.0 == b.0);
        ValueSet { elems: keyed.into_iter().map(|(_, v)| v).collect() }
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Value> {
        self.elems.iter()
    }

    pub fn contains(&self, v: &Value) -> bool {
        let key = v.fingerprint();
        self.elems.binary_search_by(|e| e.fingerprint().cmp(&key)).is_ok()
    }

    pub fn into_vec(self) -> Vec<Value> {
        self.elems
    }
}

impl<'a> IntoIterator for &'a ValueSet {
    type Item = &'a Value;
    type IntoIter = std::slice::Iter<'a, Value>;

    fn into_iter(self) -> Self::IntoIter {
        self.elems.iter()
    }
}

/// A runtime value.
///
/// Sets are normalized on construction, so the derived equality is
/// semantic equality (order-insensitive for sets).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    None,
    Bool(bool),
    Int(BigInt),
    Str(String),
    Seq(Vec<Value>),
    Tuple(Vec<Value>),
    Map(BTreeMap<String, Value>),
    Set(SetKind, ValueSet),
    Special(Special),
}

impl Value {
    pub fn int(i: i64) -> Value {
        Value::Int(BigInt::from(i))
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn full_set(items: impl IntoIterator<Item = Value>) -> Value {
        Value::Set(SetKind::Full, ValueSet::new(items))
    }

    pub fn subset(items: impl IntoIterator<Item = Value>) -> Value {
        Value::Set(SetKind::Subset, ValueSet::new(items))
    }

    pub fn tuple(items: impl IntoIterator<Item = Value>) -> Value {
        Value::Tuple(items.into_iter().collect())
    }

    pub fn seq(items: impl IntoIterator<Item = Value>) -> Value {
        Value::Seq(items.into_iter().collect())
    }

    pub const ANGELIC: Value = Value::Special(Special::Angelic);
    pub const DEMONIC: Value = Value::Special(Special::Demonic);
    pub const UNDEFINED: Value = Value::Special(Special::Undefined);

    pub fn as_special(&self) -> Option<Special> {
        match self {
            Value::Special(s) => Some(*s),
            _ => None,
        }
    }

    pub fn is_special(&self) -> bool {
        matches!(self, Value::Special(_))
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// True if the value, at any depth, contains a special value.
    pub fn contains_special(&self) -> bool {
        match self {
            Value::Special(_) => true,
            Value::Seq(vs) | Value::Tuple(vs) => vs.iter().any(Value::contains_special),
            Value::Map(m) => m.values().any(Value::contains_special),
            Value::Set(_, s) => s.iter().any(Value::contains_special),
            _ => false,
        }
    }

    /// Name of the outermost constructor, used to dispatch over union types.
    pub fn constructor_tag(&self) -> &'static str {
        match self {
            Value::None => "none",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Str(_) => "str",
            Value::Seq(_) => "seq",
            Value::Tuple(_) => "tuple",
            Value::Map(_) => "map",
            Value::Set(..) => "set",
            Value::Special(_) => "special",
        }
    }

    /// Fingerprint of any value, including specials and subset-marked sets.
    pub fn fingerprint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_fingerprint(self, &mut out);
        out
    }
}

fn write_fingerprint(v: &Value, out: &mut Vec<u8>) {
    match v {
        Value::None => out.push(b'n'),
        Value::Bool(true) => out.push(b't'),
        Value::Bool(false) => out.push(b'f'),
        Value::Int(i) => {
            out.push(b'i');
            out.extend_from_slice(i.to_string().as_bytes());
            out.push(b';');
        }
        Value::Str(s) => write_str(s, out),
        Value::Seq(vs) => write_list(b'l', vs.iter(), vs.len(), out),
        Value::Tuple(vs) => write_list(b'u', vs.iter(), vs.len(), out),
        Value::Map(m) => {
            out.push(b'm');
            out.extend_from_slice(m.len().to_string().as_bytes());
            out.push(b':');
            for (k, v) in m {
                write_str(k, out);
                write_fingerprint(v, out);
            }
        }
        Value::Set(kind, s) => {
            let tag = match kind {
                SetKind::Full => b'S',
                SetKind::Subset => b'P',
            };
            write_list(tag, s.iter(), s.len(), out)
        }
        Value::Special(s) => out.extend_from_slice(s.tag().as_bytes()),
    }
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    out.push(b's');
    out.extend_from_slice(s.len().to_string().as_bytes());
    out.push(b':');
    out.extend_from_slice(s.as_bytes());
}

fn write_list<'a>(tag: u8, vs: impl Iterator<Item = &'a Value>, n: usize, out: &mut Vec<u8>) {
    out.push(tag);
    out.extend_from_slice(n.to_string().as_bytes());
    out.push(b':');
    for v in vs {
        write_fingerprint(v, out);
    }
}

/// Canonical encoding of a value without specials or subset markers.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(pub String);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_encodable(v: &Value) -> Result<(), ValueError> {
    match v {
        Value::Special(s) => Err(ValueError::SpecialNotEncodable(*s)),
        Value::Set(SetKind::Subset, _) => Err(ValueError::SubsetNotEncodable),
        Value::Set(SetKind::Full, s) => s.iter().try_for_each(check_encodable),
        Value::Seq(vs) | Value::Tuple(vs) => vs.iter().try_for_each(check_encodable),
        Value::Map(m) => m.values().try_for_each(check_encodable),
        _ => Ok(()),
    }
}

pub fn canonical_encode(v: &Value) -> Result<CanonicalKey, ValueError> {
    check_encodable(v)?;
    // The grammar only emits ASCII tags around UTF-8 string payloads.
    let bytes = v.fingerprint();
    Ok(CanonicalKey(String::from_utf8(bytes).expect("fingerprint is valid UTF-8")))
}

/// Key of an argument tuple.
pub fn encode_args(args: &[Value]) -> Result<CanonicalKey, ValueError> {
    canonical_encode(&Value::Tuple(args.to_vec()))
}

/// Structural equality on Normal and Full-set values.
///
/// Specials and subset-marked sets are rejected: their comparison is
/// defined by the property engine, not here.
pub fn values_equal(a: &Value, b: &Value) -> Result<bool, ValueError> {
    Ok(canonical_encode(a)? == canonical_encode(b)?)
}

pub fn strongest(specials: &[Special]) -> Result<Special, ValueError> {
    specials.iter().copied().max().ok_or(ValueError::NoSpecials)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, open: &str, vs: &[Value], close: &str) -> fmt::Result {
            f.write_str(open)?;
            for (i, v) in vs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{v}")?;
            }
            f.write_str(close)
        }
        match self {
            Value::None => f.write_str("None"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Seq(vs) => list(f, "[", vs, "]"),
            Value::Tuple(vs) => list(f, "(", vs, ")"),
            Value::Map(m) => {
                f.write_str("{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k:?}: {v}")?;
                }
                f.write_str("}")
            }
            Value::Set(kind, s) => {
                list(f, "{", &s.elems, "}")?;
                if *kind == SetKind::Subset {
                    f.write_str("*")?;
                }
                Ok(())
            }
            Value::Special(s) => write!(f, "<{s}>"),
        }
    }
}
