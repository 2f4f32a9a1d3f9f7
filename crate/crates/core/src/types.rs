//! Semantic type tags carried by function signatures.
//!
//! Tags use the Python-flavoured notation that code-generation prompts
//! speak: `int`, `str`, `list[int]`, `Optional[str]`, `tuple[int, str]`,
//! `set[str]`, `dict[str, int]`, `A | B`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse type tag {input:?}: {reason}")]
pub struct TypeParseError {
    pub input: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeTag {
    Any,
    NoneType,
    Bool,
    Int,
    Str,
    List(Box<TypeTag>),
    Set(Box<TypeTag>),
    Tuple(Vec<TypeTag>),
    Dict(Box<TypeTag>),
    /// Union of at least two disjuncts; `Optional[T]` is `Union[T, None]`.
    Union(Vec<TypeTag>),
}

impl TypeTag {
    pub fn list(t: TypeTag) -> TypeTag {
        TypeTag::List(Box::new(t))
    }

    pub fn set(t: TypeTag) -> TypeTag {
        TypeTag::Set(Box::new(t))
    }

    pub fn optional(t: TypeTag) -> TypeTag {
        TypeTag::union(vec![t, TypeTag::NoneType])
    }

    /// Builds a union, flattening nested unions and collapsing singletons.
    pub fn union(parts: Vec<TypeTag>) -> TypeTag {
        let mut flat: Vec<TypeTag> = Vec::new();
        for p in parts {
            match p {
                TypeTag::Union(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        let mut dedup: Vec<TypeTag> = Vec::new();
        for t in flat {
            if !dedup.contains(&t) {
                dedup.push(t);
            }
        }
        if dedup.len() == 1 {
            dedup.pop().unwrap()
        } else {
            TypeTag::Union(dedup)
        }
    }

    /// Disjuncts of a union, or the type itself.
    pub fn disjuncts(&self) -> Vec<TypeTag> {
        match self {
            TypeTag::Union(ts) => ts.clone(),
            t => vec![t.clone()],
        }
    }

    pub fn is_union(&self) -> bool {
        matches!(self, TypeTag::Union(_))
    }

    /// Constructor tag used to name the branch of a union disjunct.
    pub fn constructor_tag(&self) -> &'static str {
        match self {
            TypeTag::Any => "any",
            TypeTag::NoneType => "none",
            TypeTag::Bool => "bool",
            TypeTag::Int => "int",
            TypeTag::Str => "str",
            TypeTag::List(_) => "seq",
            TypeTag::Set(_) => "set",
            TypeTag::Tuple(_) => "tuple",
            TypeTag::Dict(_) => "map",
            TypeTag::Union(_) => "union",
        }
    }

    /// Does a value inhabit this type? Specials never do.
    pub fn admits(&self, v: &Value) -> bool {
        match (self, v) {
            (_, Value::Special(_)) => false,
            (TypeTag::Any, _) => true,
            (TypeTag::NoneType, Value::None) => true,
            (TypeTag::Bool, Value::Bool(_)) => true,
            (TypeTag::Int, Value::Int(_)) => true,
            (TypeTag::Str, Value::Str(_)) => true,
            (TypeTag::List(t), Value::Seq(vs)) => vs.iter().all(|v| t.admits(v)),
            (TypeTag::Set(t), Value::Set(_, s)) => s.iter().all(|v| t.admits(v)),
            // Sets travel as lists through JSON-based generators.
            (TypeTag::Set(t), Value::Seq(vs)) => vs.iter().all(|v| t.admits(v)),
            (TypeTag::Tuple(ts), Value::Tuple(vs)) => {
                ts.len() == vs.len() && ts.iter().zip(vs).all(|(t, v)| t.admits(v))
            }
            (TypeTag::Tuple(ts), Value::Seq(vs)) => ts.len() == vs.len() && ts.iter().zip(vs).all(|(t, v)| t.admits(v)),
            (TypeTag::Dict(t), Value::Map(m)) => m.values().all(|v| t.admits(v)),
            (TypeTag::Union(ts), v) => ts.iter().any(|t| t.admits(v)),
            _ => false,
        }
    }

    /// Coerces a value produced by a loosely-typed generator into the shape
    /// the type expects (lists into tuples or sets). Returns `None` when the
    /// value does not conform.
    pub fn coerce(&self, v: &Value) -> Option<Value> {
        match (self, v) {
            (_, Value::Special(_)) => None,
            (TypeTag::Tuple(ts), Value::Seq(vs)) | (TypeTag::Tuple(ts), Value::Tuple(vs)) => {
                if ts.len() != vs.len() {
                    return None;
                }
                let items = ts.iter().zip(vs).map(|(t, v)| t.coerce(v)).collect::<Option<Vec<_>>>()?;
                Some(Value::Tuple(items))
            }
            (TypeTag::Set(t), Value::Seq(vs)) => {
                let items = vs.iter().map(|v| t.coerce(v)).collect::<Option<Vec<_>>>()?;
                Some(Value::full_set(items))
            }
            (TypeTag::Set(t), Value::Set(kind, s)) => {
                let items = s.iter().map(|v| t.coerce(v)).collect::<Option<Vec<_>>>()?;
                Some(Value::Set(*kind, crate::value::ValueSet::new(items)))
            }
            (TypeTag::List(t), Value::Seq(vs)) => {
                let items = vs.iter().map(|v| t.coerce(v)).collect::<Option<Vec<_>>>()?;
                Some(Value::Seq(items))
            }
            (TypeTag::Dict(t), Value::Map(m)) => {
                let items = m.iter().map(|(k, v)| t.coerce(v).map(|v| (k.clone(), v))).collect::<Option<_>>()?;
                Some(Value::Map(items))
            }
            (TypeTag::Union(ts), v) => ts.iter().find_map(|t| t.coerce(v)),
            (t, v) if t.admits(v) => Some(v.clone()),
            _ => None,
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Any => f.write_str("Any"),
            TypeTag::NoneType => f.write_str("None"),
            TypeTag::Bool => f.write_str("bool"),
            TypeTag::Int => f.write_str("int"),
            TypeTag::Str => f.write_str("str"),
            TypeTag::List(t) => write!(f, "list[{t}]"),
            TypeTag::Set(t) => write!(f, "set[{t}]"),
            TypeTag::Dict(t) => write!(f, "dict[str, {t}]"),
            TypeTag::Tuple(ts) => {
                f.write_str("tuple[")?;
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str("]")
            }
            TypeTag::Union(ts) => {
                if ts.len() == 2 && ts[1] == TypeTag::NoneType {
                    return write!(f, "Optional[{}]", ts[0]);
                }
                for (i, t) in ts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: impl Into<String>) -> TypeParseError {
        TypeParseError { input: self.src.to_string(), reason: reason.into() }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<&'a str, TypeParseError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.')).unwrap_or(rest.len());
        if len == 0 {
            return Err(self.err(format!("expected a type name at offset {}", self.pos)));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn args(&mut self) -> Result<Vec<TypeTag>, TypeParseError> {
        let mut out = Vec::new();
        if !self.eat('[') {
            return Ok(out);
        }
        loop {
            out.push(self.union()?);
            if self.eat(',') {
                continue;
            }
            if self.eat(']') {
                return Ok(out);
            }
            return Err(self.err("expected ',' or ']'"));
        }
    }

    fn union(&mut self) -> Result<TypeTag, TypeParseError> {
        let mut parts = vec![self.atom()?];
        while self.eat('|') {
            parts.push(self.atom()?);
        }
        Ok(TypeTag::union(parts))
    }

    fn atom(&mut self) -> Result<TypeTag, TypeParseError> {
        let name = self.ident()?;
        let name = name.rsplit('.').next().unwrap_or(name);
        let args = self.args()?;
        let one = |args: Vec<TypeTag>, p: &Self| -> Result<TypeTag, TypeParseError> {
            match <[TypeTag; 1]>::try_from(args) {
                Ok([t]) => Ok(t),
                Err(_) => Err(p.err(format!("{name} takes one type argument"))),
            }
        };
        let t = match name {
            "Any" | "any" | "object" => TypeTag::Any,
            "None" | "NoneType" => TypeTag::NoneType,
            "bool" => TypeTag::Bool,
            "int" => TypeTag::Int,
            "str" => TypeTag::Str,
            "list" | "List" | "Seq" | "Sequence" => TypeTag::list(one(args, self)?),
            "set" | "Set" | "frozenset" | "FrozenSet" => TypeTag::set(one(args, self)?),
            "Optional" => TypeTag::optional(one(args, self)?),
            "Union" => {
                if args.len() < 2 {
                    return Err(self.err("Union takes at least two type arguments"));
                }
                TypeTag::union(args)
            }
            "tuple" | "Tuple" => TypeTag::Tuple(args),
            "dict" | "Dict" | "Mapping" => match <[TypeTag; 2]>::try_from(args) {
                Ok([TypeTag::Str, v]) => TypeTag::Dict(Box::new(v)),
                _ => return Err(self.err("only dict[str, T] is supported")),
            },
            other => return Err(self.err(format!("unknown type {other:?}"))),
        };
        Ok(t)
    }
}

impl FromStr for TypeTag {
    type Err = TypeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { src: s, pos: 0 };
        let t = p.union()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err(format!("trailing input at offset {}", p.pos)));
        }
        Ok(t)
    }
}

impl Serialize for TypeTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypeTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_shapes() {
        let t: TypeTag = "Optional[str]".parse().unwrap();
        assert_eq!(t, TypeTag::optional(TypeTag::Str));
        let t: TypeTag = "tuple[int, list[str]]".parse().unwrap();
        assert_eq!(t, TypeTag::Tuple(vec![TypeTag::Int, TypeTag::list(TypeTag::Str)]));
        let t: TypeTag = "int | None".parse().unwrap();
        assert_eq!(t, TypeTag::optional(TypeTag::Int));
        assert!("list[int".parse::<TypeTag>().is_err());
        assert!("Frobnicate".parse::<TypeTag>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for src in ["Optional[str]", "tuple[int, str]", "set[list[int]]", "dict[str, bool]", "int | str"] {
            let t: TypeTag = src.parse().unwrap();
            assert_eq!(t.to_string().parse::<TypeTag>().unwrap(), t);
        }
    }

    #[test]
    fn admits_and_coerces() {
        let t: TypeTag = "tuple[int, str]".parse().unwrap();
        let v = Value::seq([Value::int(1), Value::str("a")]);
        assert_eq!(t.coerce(&v), Some(Value::tuple([Value::int(1), Value::str("a")])));
        assert!(!TypeTag::Int.admits(&Value::str("1")));
        assert!(TypeTag::optional(TypeTag::Str).admits(&Value::None));
        assert!(!TypeTag::Int.admits(&Value::UNDEFINED));
    }
}
