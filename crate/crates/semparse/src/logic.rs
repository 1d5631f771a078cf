//! Logical forms and their execution against a small knowledge base.
//!
//! The language is a compact subset of lambda-DCS: type filters, joins,
//! reversals, intersection, counting, superlatives and comparatives, plus
//! depth-1 lambda abstractions used as degree functions. Logical forms are
//! exchanged as token sequences; [`parse_lf`] and [`print_lf`] are inverse
//! on every form the corpus grammar can emit.
//!
//! A knowledge base is a list of `(subject, property, object)` triples where
//! the reserved property `type` assigns type labels and objects are either
//! entities or numbers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

// ── Surface tokens ─────────────────────────────────────────────────────────

pub const INTERSECT: &str = "⊓";
pub const ARGMAX: &str = "argmax";
pub const ARGMIN: &str = "argmin";
pub const COUNT: &str = "count";
pub const REVERSE: &str = "R";
pub const LAMBDA: &str = "λ";
pub const TYPE: &str = "Type";
pub const DOT: &str = ".";
pub const LPAREN: &str = "(";
pub const RPAREN: &str = ")";
pub const COMMA: &str = ",";

/// The reserved `type` property in knowledge-base files.
pub const TYPE_PROP: &str = "type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Le,
    Ge,
    Lt,
    Gt,
    Eq,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Le, CmpOp::Ge, CmpOp::Lt, CmpOp::Gt, CmpOp::Eq];

    pub fn token(self) -> &'static str {
        match self {
            CmpOp::Le => "≤",
            CmpOp::Ge => "≥",
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Eq => "=",
        }
    }

    pub fn from_token(t: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.token() == t)
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            CmpOp::Le => lhs <= rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Lt => lhs < rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Eq => lhs == rhs,
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

// ── Abstract syntax ────────────────────────────────────────────────────────

/// A set-denoting expression.
#[derive(Debug, Clone, PartialEq)]
pub enum LogicalForm {
    /// `Type . T` — all entities with type label `T`.
    TypeFilter(String),
    /// `lhs ⊓ rhs`.
    Intersect(Box<LogicalForm>, Box<LogicalForm>),
    /// `prop . value`.
    Join(PropExpr, JoinValue),
    /// `argmax ( set , degree )` / `argmin ( set , degree )`.
    /// Ties all survive.
    Superlative {
        max: bool,
        set: Box<LogicalForm>,
        degree: PropExpr,
    },
    /// `count ( set )`.
    Count(Box<LogicalForm>),
    /// A bare entity constant.
    Entity(String),
    /// A bare number constant.
    Number(f64),
    /// The lambda-bound variable (depth ≤ 1).
    Var(String),
}

/// A binary-relation expression usable as a join head or degree function.
#[derive(Debug, Clone, PartialEq)]
pub enum PropExpr {
    Named(String),
    /// `R ( prop )` — the relation with arguments swapped.
    Reverse(Box<PropExpr>),
    /// `R ( λ x . body )` — maps an entity `x` to the value of `body`.
    ReverseLambda(String, Box<LogicalForm>),
}

/// The value side of a join.
#[derive(Debug, Clone, PartialEq)]
pub enum JoinValue {
    Set(Box<LogicalForm>),
    /// `cmp . number` — a comparative; only representable inside a join.
    Compare(CmpOp, f64),
}

// ── Errors ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty logical form")]
    Empty,
    #[error("unexpected end of input, expected {expected}")]
    UnexpectedEnd { expected: &'static str },
    #[error("unexpected token {token:?} at position {pos}, expected {expected}")]
    UnexpectedToken {
        pos: usize,
        token: String,
        expected: &'static str,
    },
    #[error("trailing tokens starting at position {pos}")]
    Trailing { pos: usize },
    #[error("nested lambda at position {pos} (depth must be ≤ 1)")]
    NestedLambda { pos: usize },
    #[error("number token {token:?} at position {pos} is not finite")]
    BadNumber { pos: usize, token: String },
}

/// Everything that makes a predicted logical form unusable at evaluation
/// time. Beam filtering treats all variants uniformly.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("parse: {0}")]
    Parse(#[from] ParseError),
    #[error("unknown type {0:?}")]
    UnknownType(String),
    #[error("unknown property {0:?}")]
    UnknownProperty(String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("argmax/argmin over an empty domain")]
    EmptyArgmax,
    #[error("variable used outside a lambda")]
    UnboundVariable,
}

// ── Knowledge base ─────────────────────────────────────────────────────────

/// A triple object: entity id or number.
#[derive(Debug, Clone, PartialEq)]
pub enum Obj {
    Entity(String),
    Number(f64),
}

impl Obj {
    fn parse(s: &str) -> Obj {
        match parse_number_token(s) {
            Some(n) => Obj::Number(n),
            None => Obj::Entity(s.to_string()),
        }
    }

    pub fn to_token(&self) -> String {
        match self {
            Obj::Entity(e) => e.clone(),
            Obj::Number(n) => format_number(*n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub subject: String,
    pub property: String,
    pub object: Obj,
}

#[derive(Debug, Clone, Default)]
pub struct Kb {
    triples: Vec<Triple>,
    types: BTreeMap<String, BTreeSet<String>>,
    /// (subject, property) → objects, excluding `type` triples.
    by_subject: HashMap<(String, String), Vec<Obj>>,
    /// property → (subject, object) pairs, excluding `type` triples.
    by_property: HashMap<String, Vec<(String, Obj)>>,
    entities: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KbFormatError {
    #[error("line {line}: expected 3 tab-separated fields, got {got}")]
    FieldCount { line: usize, got: usize },
    #[error("line {line}: empty field")]
    EmptyField { line: usize },
}

impl Kb {
    pub fn new() -> Self {
        Kb::default()
    }

    pub fn add(&mut self, subject: &str, property: &str, object: Obj) {
        self.entities.insert(subject.to_string());
        if property == TYPE_PROP {
            if let Obj::Entity(t) = &object {
                self.types
                    .entry(t.clone())
                    .or_default()
                    .insert(subject.to_string());
            }
        } else {
            if let Obj::Entity(e) = &object {
                self.entities.insert(e.clone());
            }
            self.by_subject
                .entry((subject.to_string(), property.to_string()))
                .or_default()
                .push(object.clone());
            self.by_property
                .entry(property.to_string())
                .or_default()
                .push((subject.to_string(), object.clone()));
        }
        self.triples.push(Triple {
            subject: subject.to_string(),
            property: property.to_string(),
            object,
        });
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entities(&self) -> &BTreeSet<String> {
        &self.entities
    }

    pub fn has_type(&self, t: &str) -> bool {
        self.types.contains_key(t)
    }

    pub fn has_property(&self, p: &str) -> bool {
        self.by_property.contains_key(p)
    }

    pub fn of_type(&self, t: &str) -> Option<&BTreeSet<String>> {
        self.types.get(t)
    }

    fn objects(&self, subject: &str, property: &str) -> &[Obj] {
        self.by_subject
            .get(&(subject.to_string(), property.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    fn pairs(&self, property: &str) -> &[(String, Obj)] {
        self.by_property
            .get(property)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Parse the `subject<TAB>property<TAB>object` format.
    pub fn from_tsv(text: &str) -> Result<Kb, KbFormatError> {
        let mut kb = Kb::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(KbFormatError::FieldCount {
                    line,
                    got: fields.len(),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(KbFormatError::EmptyField { line });
            }
            kb.add(fields[0], fields[1], Obj::parse(fields[2]));
        }
        Ok(kb)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            out.push_str(&t.subject);
            out.push('\t');
            out.push_str(&t.property);
            out.push('\t');
            out.push_str(&t.object.to_token());
            out.push('\n');
        }
        out
    }
}

// ── Denotations ────────────────────────────────────────────────────────────

/// The result of executing a logical form. Canonical: entity sets are
/// sorted/deduplicated by `BTreeSet`; number sets are sorted ascending and
/// deduplicated. A count is a `Number`, distinct from a one-element set.
#[derive(Debug, Clone, PartialEq)]
pub enum Denotation {
    Entities(BTreeSet<String>),
    Numbers(Vec<f64>),
    Number(f64),
}

impl Denotation {
    pub fn entities<I: IntoIterator<Item = S>, S: Into<String>>(items: I) -> Denotation {
        Denotation::Entities(items.into_iter().map(Into::into).collect())
    }

    pub fn len(&self) -> usize {
        match self {
            Denotation::Entities(s) => s.len(),
            Denotation::Numbers(v) => v.len(),
            Denotation::Number(_) => 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Denotation::Entities(s) => s.is_empty(),
            Denotation::Numbers(v) => v.is_empty(),
            Denotation::Number(_) => false,
        }
    }
}

/// Structural equality with type tags: a count of 2 never equals the
/// two-element set it counted.
pub fn denotation_equal(a: &Denotation, b: &Denotation) -> bool {
    a == b
}

// ── Number token handling ──────────────────────────────────────────────────

/// A token is a number iff it starts like one and parses to a finite f64.
/// (Names such as `inf` or `nan` stay names.)
pub fn parse_number_token(tok: &str) -> Option<f64> {
    let mut chars = tok.chars();
    let first = chars.next()?;
    let numeric_start = first.is_ascii_digit()
        || ((first == '-' || first == '.') && chars.next().is_some_and(|c| c.is_ascii_digit()));
    if !numeric_start {
        return None;
    }
    tok.parse::<f64>().ok().filter(|n| n.is_finite())
}

/// Shortest round-tripping representation (`800`, `2.5`, …).
pub fn format_number(n: f64) -> String {
    format!("{}", n)
}

// ── Parser ─────────────────────────────────────────────────────────────────

struct Parser<'a> {
    tokens: &'a [&'a str],
    pos: usize,
    lambda_var: Option<String>,
}

const RESERVED: [&str; 16] = [
    INTERSECT, ARGMAX, ARGMIN, COUNT, REVERSE, LAMBDA, TYPE, DOT, LPAREN, RPAREN, COMMA, "≤", "≥",
    "<", ">", "=",
];

fn is_name(tok: &str) -> bool {
    !RESERVED.contains(&tok) && parse_number_token(tok).is_none()
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, expected: &'static str) -> Result<&'a str, ParseError> {
        let t = self
            .peek()
            .ok_or(ParseError::UnexpectedEnd { expected })?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, tok: &'static str) -> Result<(), ParseError> {
        let got = self.next(tok)?;
        if got != tok {
            return Err(ParseError::UnexpectedToken {
                pos: self.pos - 1,
                token: got.to_string(),
                expected: tok,
            });
        }
        Ok(())
    }

    fn expect_name(&mut self, expected: &'static str) -> Result<String, ParseError> {
        let got = self.next(expected)?;
        if !is_name(got) {
            return Err(ParseError::UnexpectedToken {
                pos: self.pos - 1,
                token: got.to_string(),
                expected,
            });
        }
        Ok(got.to_string())
    }

    fn parse_set(&mut self) -> Result<LogicalForm, ParseError> {
        let mut lhs = self.parse_atom()?;
        while self.peek() == Some(INTERSECT) {
            self.pos += 1;
            let rhs = self.parse_atom()?;
            lhs = LogicalForm::Intersect(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_atom(&mut self) -> Result<LogicalForm, ParseError> {
        let tok = self.next("a set expression")?;
        match tok {
            TYPE => {
                self.expect(DOT)?;
                Ok(LogicalForm::TypeFilter(self.expect_name("a type name")?))
            }
            ARGMAX | ARGMIN => {
                let max = tok == ARGMAX;
                self.expect(LPAREN)?;
                let set = self.parse_set()?;
                self.expect(COMMA)?;
                let degree = self.parse_prop()?;
                self.expect(RPAREN)?;
                Ok(LogicalForm::Superlative {
                    max,
                    set: Box::new(set),
                    degree,
                })
            }
            COUNT => {
                self.expect(LPAREN)?;
                let set = self.parse_set()?;
                self.expect(RPAREN)?;
                Ok(LogicalForm::Count(Box::new(set)))
            }
            REVERSE => {
                // A reversal at set level must head a join.
                let prop = self.parse_reverse_body()?;
                self.expect(DOT)?;
                let value = self.parse_join_value()?;
                Ok(LogicalForm::Join(prop, value))
            }
            _ => {
                if let Some(n) = parse_number_token(tok) {
                    return Ok(LogicalForm::Number(n));
                }
                if !is_name(tok) {
                    return Err(ParseError::UnexpectedToken {
                        pos: self.pos - 1,
                        token: tok.to_string(),
                        expected: "a set expression",
                    });
                }
                if self.lambda_var.as_deref() == Some(tok) {
                    return Ok(LogicalForm::Var(tok.to_string()));
                }
                if self.peek() == Some(DOT) {
                    self.pos += 1;
                    let value = self.parse_join_value()?;
                    Ok(LogicalForm::Join(PropExpr::Named(tok.to_string()), value))
                } else {
                    Ok(LogicalForm::Entity(tok.to_string()))
                }
            }
        }
    }

    fn parse_join_value(&mut self) -> Result<JoinValue, ParseError> {
        if let Some(t) = self.peek() {
            if let Some(op) = CmpOp::from_token(t) {
                self.pos += 1;
                self.expect(DOT)?;
                let tok = self.next("a number")?;
                let n = parse_number_token(tok).ok_or_else(|| ParseError::UnexpectedToken {
                    pos: self.pos - 1,
                    token: tok.to_string(),
                    expected: "a number",
                })?;
                return Ok(JoinValue::Compare(op, n));
            }
        }
        Ok(JoinValue::Set(Box::new(self.parse_atom()?)))
    }

    /// The inside of `R ( … )`, with the opening `R` already consumed.
    fn parse_reverse_body(&mut self) -> Result<PropExpr, ParseError> {
        self.expect(LPAREN)?;
        let out = match self.peek() {
            Some(LAMBDA) => {
                if self.lambda_var.is_some() {
                    return Err(ParseError::NestedLambda { pos: self.pos });
                }
                self.pos += 1;
                let var = self.expect_name("a variable name")?;
                self.expect(DOT)?;
                self.lambda_var = Some(var.clone());
                let body = self.parse_set()?;
                self.lambda_var = None;
                PropExpr::ReverseLambda(var, Box::new(body))
            }
            Some(REVERSE) => {
                self.pos += 1;
                PropExpr::Reverse(Box::new(self.parse_reverse_body()?))
            }
            _ => PropExpr::Reverse(Box::new(PropExpr::Named(
                self.expect_name("a property name")?,
            ))),
        };
        self.expect(RPAREN)?;
        Ok(out)
    }

    fn parse_prop(&mut self) -> Result<PropExpr, ParseError> {
        match self.peek() {
            Some(REVERSE) => {
                self.pos += 1;
                self.parse_reverse_body()
            }
            _ => Ok(PropExpr::Named(self.expect_name("a property name")?)),
        }
    }
}

pub fn parse_lf<S: AsRef<str>>(tokens: &[S]) -> Result<LogicalForm, ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let toks: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let mut p = Parser {
        tokens: &toks,
        pos: 0,
        lambda_var: None,
    };
    let lf = p.parse_set()?;
    if p.pos != toks.len() {
        return Err(ParseError::Trailing { pos: p.pos });
    }
    Ok(lf)
}

// ── Printer ────────────────────────────────────────────────────────────────

pub fn print_lf(lf: &LogicalForm) -> Vec<String> {
    let mut out = Vec::new();
    print_set(lf, &mut out);
    out
}

fn print_set(lf: &LogicalForm, out: &mut Vec<String>) {
    match lf {
        LogicalForm::TypeFilter(t) => {
            out.push(TYPE.into());
            out.push(DOT.into());
            out.push(t.clone());
        }
        LogicalForm::Intersect(a, b) => {
            print_set(a, out);
            out.push(INTERSECT.into());
            print_set(b, out);
        }
        LogicalForm::Join(prop, value) => {
            print_prop(prop, out);
            out.push(DOT.into());
            match value {
                JoinValue::Compare(op, n) => {
                    out.push(op.token().into());
                    out.push(DOT.into());
                    out.push(format_number(*n));
                }
                JoinValue::Set(s) => print_set(s, out),
            }
        }
        LogicalForm::Superlative { max, set, degree } => {
            out.push(if *max { ARGMAX } else { ARGMIN }.into());
            out.push(LPAREN.into());
            print_set(set, out);
            out.push(COMMA.into());
            print_prop(degree, out);
            out.push(RPAREN.into());
        }
        LogicalForm::Count(s) => {
            out.push(COUNT.into());
            out.push(LPAREN.into());
            print_set(s, out);
            out.push(RPAREN.into());
        }
        LogicalForm::Entity(e) => out.push(e.clone()),
        LogicalForm::Number(n) => out.push(format_number(*n)),
        LogicalForm::Var(v) => out.push(v.clone()),
    }
}

fn print_prop(prop: &PropExpr, out: &mut Vec<String>) {
    match prop {
        PropExpr::Named(p) => out.push(p.clone()),
        PropExpr::Reverse(inner) => {
            out.push(REVERSE.into());
            out.push(LPAREN.into());
            match inner.as_ref() {
                PropExpr::Named(p) => out.push(p.clone()),
                other => print_prop(other, out),
            }
            out.push(RPAREN.into());
        }
        PropExpr::ReverseLambda(var, body) => {
            out.push(REVERSE.into());
            out.push(LPAREN.into());
            out.push(LAMBDA.into());
            out.push(var.clone());
            out.push(DOT.into());
            print_set(body, out);
            out.push(RPAREN.into());
        }
    }
}

// ── Executor ───────────────────────────────────────────────────────────────

/// Intermediate value during evaluation.
#[derive(Debug, Clone, PartialEq)]
enum Val {
    Ents(BTreeSet<String>),
    Nums(Vec<f64>),
    Num(f64),
}

impl Val {
    fn into_denotation(self) -> Denotation {
        match self {
            Val::Ents(s) => Denotation::Entities(s),
            Val::Nums(mut v) => {
                v.sort_by(f64::total_cmp);
                v.dedup();
                Denotation::Numbers(v)
            }
            Val::Num(n) => Denotation::Number(n),
        }
    }
}

pub fn execute(lf: &LogicalForm, kb: &Kb) -> Result<Denotation, ExecError> {
    Ok(eval_set(lf, kb, None)?.into_denotation())
}

/// Parse and execute a token sequence in one step.
pub fn execute_tokens<S: AsRef<str>>(tokens: &[S], kb: &Kb) -> Result<Denotation, ExecError> {
    let lf = parse_lf(tokens)?;
    execute(&lf, kb)
}

fn eval_set(lf: &LogicalForm, kb: &Kb, var: Option<&str>) -> Result<Val, ExecError> {
    match lf {
        LogicalForm::TypeFilter(t) => match kb.of_type(t) {
            Some(s) => Ok(Val::Ents(s.clone())),
            None => Err(ExecError::UnknownType(t.clone())),
        },
        LogicalForm::Intersect(a, b) => {
            let va = eval_set(a, kb, var)?;
            let vb = eval_set(b, kb, var)?;
            match (va, vb) {
                (Val::Ents(x), Val::Ents(y)) => {
                    Ok(Val::Ents(x.intersection(&y).cloned().collect()))
                }
                (Val::Nums(x), Val::Nums(y)) => Ok(Val::Nums(
                    x.into_iter().filter(|n| y.contains(n)).collect(),
                )),
                (a, b) => Err(ExecError::TypeError(format!(
                    "cannot intersect {} with {}",
                    val_kind(&a),
                    val_kind(&b)
                ))),
            }
        }
        LogicalForm::Join(prop, value) => eval_join(prop, value, kb, var),
        LogicalForm::Superlative { max, set, degree } => {
            let domain = match eval_set(set, kb, var)? {
                Val::Ents(s) => s,
                other => {
                    return Err(ExecError::TypeError(format!(
                        "superlative over {}",
                        val_kind(&other)
                    )))
                }
            };
            if domain.is_empty() {
                return Err(ExecError::EmptyArgmax);
            }
            let mut scored: Vec<(String, f64)> = Vec::new();
            for e in &domain {
                if let Some(d) = degree_of(degree, e, kb)? {
                    scored.push((e.clone(), d));
                }
            }
            if scored.is_empty() {
                return Err(ExecError::EmptyArgmax);
            }
            let best = scored
                .iter()
                .map(|(_, d)| *d)
                .fold(if *max { f64::NEG_INFINITY } else { f64::INFINITY }, |acc, d| {
                    if *max {
                        acc.max(d)
                    } else {
                        acc.min(d)
                    }
                });
            Ok(Val::Ents(
                scored
                    .into_iter()
                    .filter(|(_, d)| *d == best)
                    .map(|(e, _)| e)
                    .collect(),
            ))
        }
        LogicalForm::Count(s) => match eval_set(s, kb, var)? {
            Val::Ents(set) => Ok(Val::Num(set.len() as f64)),
            Val::Nums(mut v) => {
                v.sort_by(f64::total_cmp);
                v.dedup();
                Ok(Val::Num(v.len() as f64))
            }
            Val::Num(_) => Err(ExecError::TypeError("count of a number".into())),
        },
        LogicalForm::Entity(e) => {
            if kb.entities().contains(e) {
                Ok(Val::Ents(std::iter::once(e.clone()).collect()))
            } else {
                Err(ExecError::UnknownEntity(e.clone()))
            }
        }
        LogicalForm::Number(n) => Ok(Val::Num(*n)),
        LogicalForm::Var(_) => match var {
            Some(e) => Ok(Val::Ents(std::iter::once(e.to_string()).collect())),
            None => Err(ExecError::UnboundVariable),
        },
    }
}

fn val_kind(v: &Val) -> &'static str {
    match v {
        Val::Ents(_) => "an entity set",
        Val::Nums(_) => "a number set",
        Val::Num(_) => "a number",
    }
}

/// Objects reachable from evaluated join values, as match predicates.
enum Target {
    Ents(BTreeSet<String>),
    Nums(Vec<f64>),
    Cmp(CmpOp, f64),
}

impl Target {
    fn matches(&self, obj: &Obj) -> bool {
        match (self, obj) {
            (Target::Ents(set), Obj::Entity(e)) => set.contains(e),
            (Target::Nums(ns), Obj::Number(x)) => ns.contains(x),
            (Target::Cmp(op, n), Obj::Number(x)) => op.holds(*x, *n),
            _ => false,
        }
    }
}

fn join_target(value: &JoinValue, kb: &Kb, var: Option<&str>) -> Result<Target, ExecError> {
    match value {
        JoinValue::Compare(op, n) => Ok(Target::Cmp(*op, *n)),
        JoinValue::Set(s) => Ok(match eval_set(s, kb, var)? {
            Val::Ents(set) => Target::Ents(set),
            Val::Nums(v) => Target::Nums(v),
            Val::Num(n) => Target::Nums(vec![n]),
        }),
    }
}

fn eval_join(
    prop: &PropExpr,
    value: &JoinValue,
    kb: &Kb,
    var: Option<&str>,
) -> Result<Val, ExecError> {
    match normalize_prop(prop) {
        NormProp::Forward(p) => {
            // { s : ∃ o ∈ target, (s, p, o) }
            require_property(kb, p)?;
            let target = join_target(value, kb, var)?;
            let mut out = BTreeSet::new();
            for (s, o) in kb.pairs(p) {
                if target.matches(o) {
                    out.insert(s.clone());
                }
            }
            Ok(Val::Ents(out))
        }
        NormProp::Backward(p) => {
            // { o : ∃ s ∈ target, (s, p, o) } — objects may be numbers.
            require_property(kb, p)?;
            let target = join_target(value, kb, var)?;
            let subjects: BTreeSet<String> = match target {
                Target::Ents(set) => set,
                _ => {
                    return Err(ExecError::TypeError(
                        "reversed join needs an entity-set value".into(),
                    ))
                }
            };
            let mut ents = BTreeSet::new();
            let mut nums = Vec::new();
            for (s, o) in kb.pairs(p) {
                if subjects.contains(s) {
                    match o {
                        Obj::Entity(e) => {
                            ents.insert(e.clone());
                        }
                        Obj::Number(n) => nums.push(*n),
                    }
                }
            }
            match (ents.is_empty(), nums.is_empty()) {
                (false, false) => Err(ExecError::TypeError(
                    "reversed join mixes entity and number objects".into(),
                )),
                (true, false) => Ok(Val::Nums(nums)),
                _ => Ok(Val::Ents(ents)),
            }
        }
        NormProp::Lambda(body) => {
            // { s : value of body at x:=s matches the join target }
            let target = join_target(value, kb, var)?;
            let mut out = BTreeSet::new();
            for e in kb.entities() {
                let v = eval_set(body, kb, Some(e))?;
                let matched = match &v {
                    Val::Num(n) => target.matches(&Obj::Number(*n)),
                    Val::Nums(ns) => ns.iter().any(|n| target.matches(&Obj::Number(*n))),
                    Val::Ents(es) => es.iter().any(|x| target.matches(&Obj::Entity(x.clone()))),
                };
                if matched {
                    out.insert(e.clone());
                }
            }
            Ok(Val::Ents(out))
        }
    }
}

/// Degree of entity `e` under a degree expression, if defined.
fn degree_of(degree: &PropExpr, e: &str, kb: &Kb) -> Result<Option<f64>, ExecError> {
    match normalize_prop(degree) {
        NormProp::Forward(p) => {
            require_property(kb, p)?;
            let mut best: Option<f64> = None;
            for o in kb.objects(e, p) {
                if let Obj::Number(n) = o {
                    best = Some(best.map_or(*n, |b| b.max(*n)));
                }
            }
            Ok(best)
        }
        NormProp::Backward(_) => Err(ExecError::TypeError(
            "degree must map an entity to a number".into(),
        )),
        NormProp::Lambda(body) => match eval_set(body, kb, Some(e))? {
            Val::Num(n) => Ok(Some(n)),
            Val::Nums(ns) => Ok(ns.iter().cloned().fold(None, |acc: Option<f64>, n| {
                Some(acc.map_or(n, |b| b.max(n)))
            })),
            Val::Ents(_) => Err(ExecError::TypeError(
                "degree must map an entity to a number".into(),
            )),
        },
    }
}

fn require_property(kb: &Kb, p: &str) -> Result<(), ExecError> {
    if kb.has_property(p) {
        Ok(())
    } else {
        Err(ExecError::UnknownProperty(p.to_string()))
    }
}

/// A property expression with reversals resolved to a direction.
enum NormProp<'a> {
    /// `p` used left-to-right: subject position.
    Forward(&'a str),
    /// `R(p)`: object position.
    Backward(&'a str),
    /// `R(λ var . body)`; the single binder needs no name at execution time.
    Lambda(&'a LogicalForm),
}

fn normalize_prop(prop: &PropExpr) -> NormProp<'_> {
    fn walk(prop: &PropExpr, flips: usize) -> NormProp<'_> {
        match prop {
            PropExpr::Named(p) => {
                if flips.is_multiple_of(2) {
                    NormProp::Forward(p)
                } else {
                    NormProp::Backward(p)
                }
            }
            PropExpr::Reverse(inner) => walk(inner, flips + 1),
            // An even number of extra reversals around a lambda cancels; the
            // lambda itself is always written under exactly one `R`.
            PropExpr::ReverseLambda(_, body) => NormProp::Lambda(body),
        }
    }
    walk(prop, 0)
}
