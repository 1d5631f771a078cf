//! Helpers shared by the integration-test targets.
#![allow(dead_code)] // each target uses its own subset

use std::collections::BTreeSet;

use semparse::logic::{JoinValue, Kb, LogicalForm, Obj, PropExpr};

pub fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Value computed by the reference evaluator.
#[derive(Debug, PartialEq)]
pub enum OracleValue {
    Set(BTreeSet<String>),
    Num(f64),
}

/// All (subject, object) pairs of a relation, by naive triple scanning.
/// A reversed lambda enumerates every KB entity and evaluates the body.
fn oracle_pairs(prop: &PropExpr, kb: &Kb) -> Vec<(String, Obj)> {
    match prop {
        PropExpr::Named(p) => kb
            .triples()
            .iter()
            .filter(|t| t.property == *p)
            .map(|t| (t.subject.clone(), t.object.clone()))
            .collect(),
        PropExpr::Reverse(inner) => oracle_pairs(inner, kb)
            .into_iter()
            .filter_map(|(s, o)| match o {
                Obj::Entity(e) => Some((e, Obj::Entity(s))),
                Obj::Number(_) => None,
            })
            .collect(),
        PropExpr::ReverseLambda(var, body) => kb
            .entities()
            .iter()
            .filter_map(|e| match oracle_eval(body, kb, Some((var, e))) {
                OracleValue::Num(n) => Some((e.clone(), Obj::Number(n))),
                OracleValue::Set(_) => None,
            })
            .collect(),
    }
}

fn oracle_set(lf: &LogicalForm, kb: &Kb, bind: Option<(&str, &str)>) -> BTreeSet<String> {
    match oracle_eval(lf, kb, bind) {
        OracleValue::Set(s) => s,
        OracleValue::Num(_) => BTreeSet::new(),
    }
}

/// Reference semantics by exhaustive entity enumeration — no indexes, no
/// sharing with the production executor.
pub fn oracle_eval(lf: &LogicalForm, kb: &Kb, bind: Option<(&str, &str)>) -> OracleValue {
    match lf {
        LogicalForm::TypeFilter(t) => OracleValue::Set(
            kb.triples()
                .iter()
                .filter(|tr| tr.property == "type" && tr.object == Obj::Entity(t.clone()))
                .map(|tr| tr.subject.clone())
                .collect(),
        ),
        LogicalForm::Intersect(a, b) => {
            let sa = oracle_set(a, kb, bind);
            let sb = oracle_set(b, kb, bind);
            OracleValue::Set(sa.intersection(&sb).cloned().collect())
        }
        LogicalForm::Entity(e) => OracleValue::Set(BTreeSet::from([e.clone()])),
        LogicalForm::Var(v) => match bind {
            Some((name, e)) if name == v => OracleValue::Set(BTreeSet::from([e.to_string()])),
            _ => OracleValue::Set(BTreeSet::new()),
        },
        LogicalForm::Number(n) => OracleValue::Num(*n),
        LogicalForm::Count(set) => OracleValue::Num(oracle_set(set, kb, bind).len() as f64),
        LogicalForm::Join(prop, value) => {
            let pairs = oracle_pairs(prop, kb);
            let keep: BTreeSet<String> = match value {
                JoinValue::Compare(op, n) => pairs
                    .into_iter()
                    .filter(|(_, o)| matches!(o, Obj::Number(m) if op.holds(*m, *n)))
                    .map(|(s, _)| s)
                    .collect(),
                JoinValue::Set(v) => match oracle_eval(v, kb, bind) {
                    OracleValue::Num(n) => pairs
                        .into_iter()
                        .filter(|(_, o)| matches!(o, Obj::Number(m) if *m == n))
                        .map(|(s, _)| s)
                        .collect(),
                    OracleValue::Set(vs) => pairs
                        .into_iter()
                        .filter(|(_, o)| matches!(o, Obj::Entity(e) if vs.contains(e)))
                        .map(|(s, _)| s)
                        .collect(),
                },
            };
            OracleValue::Set(keep)
        }
        LogicalForm::Superlative { max, set, degree } => {
            let members = oracle_set(set, kb, bind);
            let pairs = oracle_pairs(degree, kb);
            let mut scored: Vec<(String, f64)> = Vec::new();
            for e in members {
                let vals: Vec<f64> = pairs
                    .iter()
                    .filter(|(s, _)| *s == e)
                    .filter_map(|(_, o)| match o {
                        Obj::Number(n) => Some(*n),
                        Obj::Entity(_) => None,
                    })
                    .collect();
                if let Some(v) = vals
                    .into_iter()
                    .reduce(|a, b| if *max { a.max(b) } else { a.min(b) })
                {
                    scored.push((e, v));
                }
            }
            let best = scored
                .iter()
                .map(|(_, v)| *v)
                .reduce(|a, b| if *max { a.max(b) } else { a.min(b) });
            OracleValue::Set(match best {
                Some(b) => scored
                    .into_iter()
                    .filter(|(_, v)| *v == b)
                    .map(|(e, _)| e)
                    .collect(),
                None => BTreeSet::new(),
            })
        }
    }
}
