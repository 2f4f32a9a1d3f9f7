//! Textual form of terms.
//!
//! ```text
//! term   := var | literal
//!         | (call NAME term*) | (map NAME term) | (tolerate term)
//!         | (= term term) | (in term term) | (not term)
//!         | (and term term+) | (or term term+) | (implies term term)
//!         | (forall binder domain term)
//! binder := var | (var var+)
//! domain := term | (values literal*)
//! literal:= INT | STRING | true | false | none | #A | #D | #U
//!         | (list literal*) | (tuple literal*) | (set literal*) | (subset literal*)
//!         | (dict (STRING literal)*)
//! ```
//!
//! Strings use JSON escaping. `and`/`or` with more than two operands nest
//! to the right.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use thiserror::Error;

use super::{Binder, Domain, Term};
use crate::value::{SetKind, Special, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("term syntax error at byte {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Sx {
    Atom(String, usize),
    Str(String, usize),
    List(Vec<Sx>, usize),
}

impl Sx {
    fn pos(&self) -> usize {
        match self {
            Sx::Atom(_, p) | Sx::Str(_, p) | Sx::List(_, p) => *p,
        }
    }
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError { pos, msg: msg.into() })
}

struct Reader<'a> {
    src: &'a str,
    pos: usize,
}

impl Reader<'_> {
    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        if trimmed.starts_with(';') {
            let end = trimmed.find('\n').map_or(trimmed.len(), |i| i + 1);
            self.pos += end;
            self.skip_ws();
        }
    }

    fn read(&mut self) -> Result<Sx, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.src[self.pos..];
        match rest.chars().next() {
            None => err(start, "unexpected end of input"),
            Some('(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.src[self.pos..].chars().next() {
                        None => return err(start, "unclosed parenthesis"),
                        Some(')') => {
                            self.pos += 1;
                            return Ok(Sx::List(items, start));
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some(')') => err(start, "unexpected ')'"),
            Some('"') => {
                let bytes = rest.as_bytes();
                let mut i = 1;
                while i < bytes.len() {
                    match bytes[i] {
                        b'\\' => i += 2,
                        b'"' => break,
                        _ => i += 1,
                    }
                }
                if i >= bytes.len() {
                    return err(start, "unterminated string");
                }
                let lit = &rest[..=i];
                let s: String = serde_json::from_str(lit)
                    .map_err(|e| ParseError { pos: start, msg: format!("bad string literal: {e}") })?;
                self.pos += i + 1;
                Ok(Sx::Str(s, start))
            }
            Some(_) => {
                let end = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == ';')
                    .unwrap_or(rest.len());
                self.pos += end;
                Ok(Sx::Atom(rest[..end].to_string(), start))
            }
        }
    }
}

const KEYWORDS: &[&str] = &[
    "true", "false", "none", "call", "map", "tolerate", "=", "in", "not", "and", "or", "implies", "forall", "values",
    "list", "tuple", "set", "subset", "dict",
];

fn is_int(s: &str) -> bool {
    let digits = s.strip_prefix('-').unwrap_or(s);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn var_name(sx: &Sx) -> Result<String, ParseError> {
    match sx {
        Sx::Atom(a, p) => {
            if KEYWORDS.contains(&a.as_str()) || a.starts_with('#') || is_int(a) {
                err(*p, format!("{a:?} cannot name a variable"))
            } else {
                Ok(a.clone())
            }
        }
        other => err(other.pos(), "expected a variable name"),
    }
}

fn literal(sx: &Sx) -> Result<Option<Value>, ParseError> {
    Ok(Some(match sx {
        Sx::Str(s, _) => Value::Str(s.clone()),
        Sx::Atom(a, p) => match a.as_str() {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            "none" => Value::None,
            "#A" => Value::ANGELIC,
            "#D" => Value::DEMONIC,
            "#U" => Value::UNDEFINED,
            _ if is_int(a) => Value::Int(a.parse::<BigInt>().map_err(|e| ParseError { pos: *p, msg: e.to_string() })?),
            _ => return Ok(None),
        },
        Sx::List(items, _) => {
            let Some(Sx::Atom(head, _)) = items.first() else {
                return Ok(None);
            };
            let rest = &items[1..];
            let values = || -> Result<Vec<Value>, ParseError> {
                rest.iter().map(|i| literal(i)?.map_or_else(|| err(i.pos(), "expected a literal"), Ok)).collect()
            };
            match head.as_str() {
                "list" => Value::Seq(values()?),
                "tuple" => Value::Tuple(values()?),
                "set" => Value::full_set(values()?),
                "subset" => Value::subset(values()?),
                "dict" => {
                    let mut m = BTreeMap::new();
                    for entry in rest {
                        match entry {
                            Sx::List(kv, _) if kv.len() == 2 => {
                                let Sx::Str(k, _) = &kv[0] else {
                                    return err(kv[0].pos(), "dict keys are strings");
                                };
                                let v = literal(&kv[1])?.map_or_else(|| err(kv[1].pos(), "expected a literal"), Ok)?;
                                m.insert(k.clone(), v);
                            }
                            other => return err(other.pos(), "dict entries are (KEY VALUE)"),
                        }
                    }
                    Value::Map(m)
                }
                _ => return Ok(None),
            }
        }
    }))
}

fn arity(items: &[Sx], n: usize, pos: usize, head: &str) -> Result<(), ParseError> {
    if items.len() == n + 1 {
        Ok(())
    } else {
        err(pos, format!("{head} takes {n} operand(s), got {}", items.len() - 1))
    }
}

fn name(sx: &Sx) -> Result<String, ParseError> {
    match sx {
        Sx::Atom(a, _) => Ok(a.clone()),
        Sx::Str(s, _) => Ok(s.clone()),
        other => err(other.pos(), "expected a candidate name"),
    }
}

fn term(sx: &Sx) -> Result<Term, ParseError> {
    if let Some(v) = literal(sx)? {
        return Ok(Term::Const(v));
    }
    let (items, pos) = match sx {
        Sx::Atom(..) => return Ok(Term::Var(var_name(sx)?)),
        Sx::List(items, pos) => (items, *pos),
        Sx::Str(..) => unreachable!("strings are literals"),
    };
    let Some(Sx::Atom(head, _)) = items.first() else {
        return err(pos, "expected an operator");
    };
    let sub = |i: usize| term(&items[i]).map(Box::new);
    Ok(match head.as_str() {
        "call" => {
            if items.len() < 2 {
                return err(pos, "call needs a candidate name");
            }
            Term::Call(name(&items[1])?, items[2..].iter().map(term).collect::<Result<_, _>>()?)
        }
        "map" => {
            arity(items, 2, pos, head)?;
            Term::Map(name(&items[1])?, sub(2)?)
        }
        "tolerate" => {
            arity(items, 1, pos, head)?;
            Term::Tolerate(sub(1)?)
        }
        "not" => {
            arity(items, 1, pos, head)?;
            Term::Not(sub(1)?)
        }
        "=" | "in" | "implies" => {
            arity(items, 2, pos, head)?;
            let (a, b) = (sub(1)?, sub(2)?);
            match head.as_str() {
                "=" => Term::Eq(a, b),
                "in" => Term::In(a, b),
                _ => Term::Implies(a, b),
            }
        }
        "and" | "or" => {
            if items.len() < 3 {
                return err(pos, format!("{head} takes at least 2 operands"));
            }
            let ops = items[1..].iter().map(term).collect::<Result<Vec<_>, _>>()?;
            let join = if head == "and" { Term::and } else { Term::or };
            ops.into_iter().rev().reduce(|acc, t| join(t, acc)).expect("non-empty")
        }
        "forall" => {
            arity(items, 3, pos, head)?;
            let binder = match &items[1] {
                Sx::List(vs, p) => {
                    if vs.is_empty() {
                        return err(*p, "empty binder pattern");
                    }
                    Binder::Tuple(vs.iter().map(var_name).collect::<Result<_, _>>()?)
                }
                other => Binder::Var(var_name(other)?),
            };
            let domain = match &items[2] {
                Sx::List(vs, _) if matches!(vs.first(), Some(Sx::Atom(h, _)) if h == "values") => Domain::Explicit(
                    vs[1..]
                        .iter()
                        .map(|v| literal(v)?.map_or_else(|| err(v.pos(), "expected a literal"), Ok))
                        .collect::<Result<_, _>>()?,
                ),
                other => Domain::Term(Box::new(term(other)?)),
            };
            Term::ForAll { binder, domain, body: sub(3)? }
        }
        other => return err(pos, format!("unknown operator {other:?}")),
    })
}

pub fn parse_term(src: &str) -> Result<Term, ParseError> {
    let mut r = Reader { src, pos: 0 };
    let sx = r.read()?;
    r.skip_ws();
    if r.pos != src.len() {
        return err(r.pos, "trailing input");
    }
    term(&sx)
}

fn render_value(v: &Value, out: &mut String) {
    let seq = |head: &str, vs: &mut dyn Iterator<Item = &Value>, out: &mut String| {
        out.push('(');
        out.push_str(head);
        for v in vs {
            out.push(' ');
            render_value(v, out);
        }
        out.push(')');
    };
    match v {
        Value::None => out.push_str("none"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Seq(vs) => seq("list", &mut vs.iter(), out),
        Value::Tuple(vs) => seq("tuple", &mut vs.iter(), out),
        Value::Set(SetKind::Full, s) => seq("set", &mut s.iter(), out),
        Value::Set(SetKind::Subset, s) => seq("subset", &mut s.iter(), out),
        Value::Map(m) => {
            out.push_str("(dict");
            for (k, v) in m {
                out.push_str(" (");
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push(' ');
                render_value(v, out);
                out.push(')');
            }
            out.push(')');
        }
        Value::Special(s) => out.push_str(match s {
            Special::Angelic => "#A",
            Special::Demonic => "#D",
            Special::Undefined => "#U",
        }),
    }
}

fn render_name(n: &str, out: &mut String) {
    let plain = !n.is_empty()
        && !n.chars().any(|c| c.is_whitespace() || "()\";".contains(c))
        && !n.starts_with('#')
        && !is_int(n)
        && !KEYWORDS.contains(&n);
    if plain {
        out.push_str(n);
    } else {
        out.push_str(&serde_json::to_string(n).expect("strings serialize"));
    }
}

fn render_into(t: &Term, out: &mut String) {
    let op = |head: &str, args: &[&Term], out: &mut String| {
        out.push('(');
        out.push_str(head);
        for a in args {
            out.push(' ');
            render_into(a, out);
        }
        out.push(')');
    };
    match t {
        Term::Const(v) => render_value(v, out),
        Term::Var(v) => out.push_str(v),
        Term::Call(c, args) => {
            out.push_str("(call ");
            render_name(c, out);
            for a in args {
                out.push(' ');
                render_into(a, out);
            }
            out.push(')');
        }
        Term::Map(c, seq) => {
            out.push_str("(map ");
            render_name(c, out);
            out.push(' ');
            render_into(seq, out);
            out.push(')');
        }
        Term::Tolerate(a) => op("tolerate", &[a], out),
        Term::Eq(a, b) => op("=", &[a, b], out),
        Term::In(a, b) => op("in", &[a, b], out),
        Term::Or(a, b) => op("or", &[a, b], out),
        Term::And(a, b) => op("and", &[a, b], out),
        Term::Not(a) => op("not", &[a], out),
        Term::Implies(a, b) => op("implies", &[a, b], out),
        Term::ForAll { binder, domain, body } => {
            out.push_str("(forall ");
            match binder {
                Binder::Var(v) => out.push_str(v),
                Binder::Tuple(vs) => {
                    out.push('(');
                    out.push_str(&vs.join(" "));
                    out.push(')');
                }
            }
            out.push(' ');
            match domain {
                Domain::Term(d) => render_into(d, out),
                Domain::Explicit(vs) => {
                    out.push_str("(values");
                    for v in vs {
                        out.push(' ');
                        render_value(v, out);
                    }
                    out.push(')');
                }
            }
            out.push(' ');
            render_into(body, out);
            out.push(')');
        }
    }
}

pub(super) fn render(t: &Term) -> String {
    let mut out = String::new();
    render_into(t, &mut out);
    out
}
