//! Beam-search inference and denotation-based evaluation.
//!
//! Decoding expands masked action distributions breadth-first, keeping the
//! `beam` best unfinished hypotheses per step; hypotheses that emit the
//! end-of-sequence token are frozen and returned ranked by raw cumulative
//! log-probability (no length normalization). Evaluation executes the
//! highest-ranked hypothesis that parses and runs against the knowledge
//! base and compares denotations with the gold form's.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::arch::{ArchError, Model, Session};
use crate::corpus::{Corpus, Example};
use crate::logic::{
    self, CmpOp, Denotation, JoinValue, Kb, LogicalForm, PropExpr,
};
use crate::seq2seq::{action_probabilities, Action, Seq2SeqError};
use crate::vocab::EOS;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Seq2Seq(#[from] Seq2SeqError),
    #[error("invalid decode configuration: {0}")]
    BadConfig(&'static str),
    #[error("domain {name:?} is not part of the model")]
    UnknownDomain { name: String },
    #[error("domain {domain:?} has an empty test split")]
    EmptyTest { domain: String },
    #[error(
        "gold logical form {index} in domain {domain:?} does not execute: {detail}"
    )]
    GoldExecution {
        domain: String,
        index: usize,
        detail: String,
    },
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("need at least 2 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("rank correlation is undefined for a constant sequence")]
    ConstantInput,
}

// ── Hypotheses ─────────────────────────────────────────────────────────────

/// A (partial or finished) decode: the actions taken, the surface tokens
/// they realize, and the summed log-probability of the chosen actions.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub actions: Vec<Action>,
    pub tokens: Vec<String>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// The realized logical-form tokens, without the terminator.
    pub fn lf_tokens(&self) -> &[String] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }
}

/// Ranking order: higher log-probability first, ties broken by token
/// sequence so results are reproducible.
fn rank_order(a: &(f64, Vec<String>), b: &(f64, Vec<String>)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1))
}

/// One live beam entry: enough to expand one more step.
struct Live {
    state: crate::seq2seq::LstmState,
    actions: Vec<Action>,
    tokens: Vec<String>,
    log_prob: f64,
}

/// A scored expansion candidate, not yet advanced through the LSTM.
struct Cand {
    parent: usize,
    context: crate::tensor::NodeId,
    parent_state: crate::seq2seq::LstmState,
    action: Action,
    token: String,
    log_prob: f64,
}

/// Beam search over the masked action space. Returns up to `beam` finished
/// hypotheses, best first; an empty list means nothing emitted the
/// end-of-sequence token within `max_len` steps.
pub fn beam_search(
    model: &Model,
    domain: usize,
    utterance: &[String],
    beam: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>, DecodeError> {
    beam_search_masked(model, domain, utterance, beam, max_len, None)
}

/// Beam search under an explicit write mask (replacing the model's own),
/// e.g. to forbid chosen output tokens at decode time. Copy actions are
/// never maskable.
pub fn beam_search_masked(
    model: &Model,
    domain: usize,
    utterance: &[String],
    beam: usize,
    max_len: usize,
    write_mask: Option<&[bool]>,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if beam == 0 {
        return Err(DecodeError::BadConfig("beam must be positive"));
    }
    if max_len == 0 {
        return Err(DecodeError::BadConfig("max_len must be positive"));
    }
    let mut session = model.session(domain, utterance)?;
    let n_write = session.n_write();
    if let Some(mask) = write_mask {
        if mask.len() != n_write {
            return Err(DecodeError::BadConfig(
                "write mask length must match the output vocabulary",
            ));
        }
    }
    let s0 = session.initial_state()?;
    let mut live = vec![Live {
        state: s0,
        actions: Vec::new(),
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        // A finished hypothesis only ever outranks future extensions of a
        // live one whose score is already no better: log-probabilities only
        // decrease, so once `beam` finished hypotheses beat every live
        // score the search is over.
        if finished.len() >= beam {
            let mut ranked: Vec<(f64, Vec<String>)> = finished
                .iter()
                .map(|h| (h.log_prob, h.tokens.clone()))
                .collect();
            ranked.sort_by(rank_order);
            let bar = ranked[beam - 1].0;
            let best_live = live
                .iter()
                .map(|l| l.log_prob)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_live <= bar {
                break;
            }
        }

        // Expand every live hypothesis over its full action distribution.
        let mut cands: Vec<Cand> = Vec::new();
        for (pi, hyp) in live.iter().enumerate() {
            let nodes = session.step(hyp.state)?;
            let logits = session.tape.value(nodes.logits).data().to_vec();
            let mask = write_mask.or(Some(session.write_mask()));
            let dist = action_probabilities(&logits, n_write, mask)?;
            for idx in 0..dist.len() {
                let p = dist.probs[idx];
                if p <= 0.0 {
                    continue;
                }
                let action = dist.action(idx);
                let token = match action {
                    Action::Write(w) => session.dec_vocab().token(w).to_string(),
                    Action::Copy(i) => session.input_tokens()[i].clone(),
                };
                cands.push(Cand {
                    parent: pi,
                    context: nodes.context,
                    parent_state: hyp.state,
                    action,
                    token,
                    log_prob: hyp.log_prob + p.ln(),
                });
            }
        }

        // Merge candidates that realize the same token sequence, keeping
        // the highest-scoring one (no probability summing).
        let mut best: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for (ci, cand) in cands.iter().enumerate() {
            let mut seq = live[cand.parent].tokens.clone();
            seq.push(cand.token.clone());
            match best.get(&seq) {
                Some(&prev) if cands[prev].log_prob >= cand.log_prob => {}
                _ => {
                    best.insert(seq, ci);
                }
            }
        }
        let mut merged: Vec<(Vec<String>, usize)> = best.into_iter().collect();
        merged.sort_by(|a, b| {
            rank_order(
                &(cands[a.1].log_prob, a.0.clone()),
                &(cands[b.1].log_prob, b.0.clone()),
            )
        });

        // Keep the `beam` best candidates overall: finished ones among
        // them are frozen, the rest stay live. Candidates below the cut
        // are dropped even if they just emitted the terminator.
        let mut next_live: Vec<(Vec<String>, usize)> = Vec::new();
        for (seq, ci) in merged.into_iter().take(beam) {
            let cand = &cands[ci];
            if cand.token == EOS {
                let mut actions = live[cand.parent].actions.clone();
                actions.push(cand.action);
                finished.push(Hypothesis {
                    actions,
                    tokens: seq,
                    log_prob: cand.log_prob,
                    finished: true,
                });
            } else {
                next_live.push((seq, ci));
            }
        }

        // Advance only the survivors through the recurrence.
        let mut new_live = Vec::with_capacity(next_live.len());
        for (seq, ci) in next_live {
            let cand = &cands[ci];
            let state =
                session.advance(cand.parent_state, &cand.token, cand.context)?;
            let mut actions = live[cand.parent].actions.clone();
            actions.push(cand.action);
            new_live.push(Live {
                state,
                actions,
                tokens: seq,
                log_prob: cand.log_prob,
            });
        }
        live = new_live;
    }

    let mut keyed: Vec<(usize, (f64, Vec<String>))> = finished
        .iter()
        .enumerate()
        .map(|(i, h)| (i, (h.log_prob, h.tokens.clone())))
        .collect();
    keyed.sort_by(|a, b| rank_order(&a.1, &b.1));
    let mut out: Vec<Hypothesis> = Vec::with_capacity(beam.min(keyed.len()));
    for (i, _) in keyed.into_iter().take(beam) {
        out.push(finished[i].clone());
    }
    Ok(out)
}

/// Exhaustively enumerate every action sequence up to `max_len` steps and
/// return all finished hypotheses, ranked like `beam_search`. Only usable
/// on toy action spaces; intended for verifying the beam against a ground
/// truth.
pub fn exhaustive_decode(
    model: &Model,
    domain: usize,
    utterance: &[String],
    max_len: usize,
    write_mask: Option<&[bool]>,
) -> Result<Vec<Hypothesis>, DecodeError> {
    if max_len == 0 {
        return Err(DecodeError::BadConfig("max_len must be positive"));
    }
    let mut session = model.session(domain, utterance)?;
    let n_write = session.n_write();
    let s0 = session.initial_state()?;
    let mut finished = Vec::new();
    let mut stack = vec![Live {
        state: s0,
        actions: Vec::new(),
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    while let Some(hyp) = stack.pop() {
        let nodes = session.step(hyp.state)?;
        let logits = session.tape.value(nodes.logits).data().to_vec();
        let mask = write_mask.or(Some(session.write_mask()));
        let dist = action_probabilities(&logits, n_write, mask)?;
        for idx in 0..dist.len() {
            let p = dist.probs[idx];
            if p <= 0.0 {
                continue;
            }
            let action = dist.action(idx);
            let token = match action {
                Action::Write(w) => session.dec_vocab().token(w).to_string(),
                Action::Copy(i) => session.input_tokens()[i].clone(),
            };
            let mut actions = hyp.actions.clone();
            actions.push(action);
            let mut tokens = hyp.tokens.clone();
            tokens.push(token.clone());
            let log_prob = hyp.log_prob + p.ln();
            if token == EOS {
                finished.push(Hypothesis {
                    actions,
                    tokens,
                    log_prob,
                    finished: true,
                });
            } else if tokens.len() < max_len {
                let state = session.advance(hyp.state, &token, nodes.context)?;
                stack.push(Live {
                    state,
                    actions,
                    tokens,
                    log_prob,
                });
            }
        }
    }
    let mut keyed: Vec<(usize, (f64, Vec<String>))> = finished
        .iter()
        .enumerate()
        .map(|(i, h)| (i, (h.log_prob, h.tokens.clone())))
        .collect();
    keyed.sort_by(|a, b| rank_order(&a.1, &b.1));
    Ok(keyed
        .into_iter()
        .map(|(i, _)| finished[i].clone())
        .collect())
}

// ── Executor-filtered selection ────────────────────────────────────────────

/// The first hypothesis (in rank order) whose tokens parse and execute,
/// with its denotation. `None` when every hypothesis fails.
pub fn pick_executable(
    hypotheses: &[Hypothesis],
    kb: &Kb,
) -> Option<(usize, Denotation)> {
    for (i, hyp) in hypotheses.iter().enumerate() {
        if let Ok(den) = logic::execute_tokens(hyp.lf_tokens(), kb) {
            return Some((i, den));
        }
    }
    None
}

// ── Evaluation ─────────────────────────────────────────────────────────────

/// How predictions are produced during evaluation: real beam decoding, or
/// an oracle that echoes the gold sequence (for harness self-checks).
pub enum Predictor<'a> {
    Beam {
        model: &'a Model,
        beam: usize,
        max_len: usize,
    },
    GoldEcho,
}

impl Predictor<'_> {
    fn predict(
        &self,
        domain: usize,
        example: &Example,
    ) -> Result<Vec<Hypothesis>, DecodeError> {
        match self {
            Predictor::Beam {
                model,
                beam,
                max_len,
            } => beam_search(model, domain, &example.utterance, *beam, *max_len),
            Predictor::GoldEcho => {
                let mut tokens = example.lf.clone();
                tokens.push(EOS.to_string());
                Ok(vec![Hypothesis {
                    actions: Vec::new(),
                    tokens,
                    log_prob: 0.0,
                    finished: true,
                }])
            }
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Predictor::Beam { model, .. } => model.count_parameters(),
            Predictor::GoldEcho => 0,
        }
    }
}

/// Default decode-length cap: twice the longest gold form seen in training.
pub fn default_max_len(corpus: &Corpus) -> usize {
    (2 * corpus.max_train_lf_len()).max(1)
}

/// Per-domain evaluation tallies.
#[derive(Debug, Clone)]
pub struct DomainEval {
    pub domain: String,
    pub n_test: usize,
    pub n_correct: usize,
    /// Predictions where no hypothesis parsed and executed.
    pub n_exec_error: usize,
    pub accuracy: f64,
}

/// Evaluation over all domains: denotation accuracy per domain, their
/// unweighted mean, the model's parameter count, and the structural
/// breakdown of wrong predictions.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub domains: Vec<DomainEval>,
    pub average: f64,
    pub param_count: usize,
    pub categories: BTreeMap<ErrorCategory, usize>,
}

/// Denotation accuracy: a prediction counts iff its chosen hypothesis
/// executes to the same denotation as the gold form. Gold forms must
/// execute; anything else is a corpus-integrity failure.
pub fn evaluate(
    predictor: &Predictor<'_>,
    corpus: &Corpus,
) -> Result<EvalReport, DecodeError> {
    let mut domains = Vec::with_capacity(corpus.domains.len());
    let mut categories: BTreeMap<ErrorCategory, usize> = BTreeMap::new();
    for (di, data) in corpus.domains.iter().enumerate() {
        if data.test.is_empty() {
            return Err(DecodeError::EmptyTest {
                domain: data.name.clone(),
            });
        }
        let model_domain = match predictor {
            Predictor::Beam { model, .. } => {
                model
                    .domain_index(&data.name)
                    .ok_or_else(|| DecodeError::UnknownDomain {
                        name: data.name.clone(),
                    })?
            }
            Predictor::GoldEcho => di,
        };
        let mut n_correct = 0usize;
        let mut n_exec_error = 0usize;
        for (i, ex) in data.test.iter().enumerate() {
            let gold_den = logic::execute_tokens(&ex.lf, &data.kb).map_err(|e| {
                DecodeError::GoldExecution {
                    domain: data.name.clone(),
                    index: i,
                    detail: e.to_string(),
                }
            })?;
            let hyps = predictor.predict(model_domain, ex)?;
            match pick_executable(&hyps, &data.kb) {
                Some((idx, den)) => {
                    if logic::denotation_equal(&den, &gold_den) {
                        n_correct += 1;
                    } else {
                        let cat =
                            categorize_error_tokens(hyps[idx].lf_tokens(), &ex.lf);
                        *categories.entry(cat).or_insert(0) += 1;
                    }
                }
                None => {
                    n_exec_error += 1;
                    *categories.entry(ErrorCategory::Other).or_insert(0) += 1;
                }
            }
        }
        let n_test = data.test.len();
        domains.push(DomainEval {
            domain: data.name.clone(),
            n_test,
            n_correct,
            n_exec_error,
            accuracy: n_correct as f64 / n_test as f64,
        });
    }
    let average =
        domains.iter().map(|d| d.accuracy).sum::<f64>() / domains.len() as f64;
    Ok(EvalReport {
        domains,
        average,
        param_count: predictor.param_count(),
        categories,
    })
}

// ── Rank correlation ───────────────────────────────────────────────────────

/// Ranks with ties averaged, 1-based.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share the mean of ranks i+1..=j+1.
        let mean = (i + 1 + j + 1) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64, DecodeError> {
    if xs.len() != ys.len() {
        return Err(DecodeError::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(DecodeError::TooFewPoints { n: xs.len() });
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(DecodeError::ConstantInput);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

// ── Structural error categories ────────────────────────────────────────────

/// Where a wrong prediction diverges from the gold form, judged on
/// constant-stripped operator trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ErrorCategory {
    /// Same operator tree; only constants differ.
    CorrectStructure,
    /// Trees differ only in comparison operators (e.g. `>` for `≥`).
    ComparativeMismatch,
    /// Trees differ only inside superlative degree/direction subtrees.
    SuperlativeMismatch,
    Other,
}

impl ErrorCategory {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCategory::CorrectStructure => "correct-structure",
            ErrorCategory::ComparativeMismatch => "comparative-mismatch",
            ErrorCategory::SuperlativeMismatch => "superlative-mismatch",
            ErrorCategory::Other => "other",
        }
    }
}

/// Erase every constant: entity, type, and property names become empty
/// strings, numbers become 0. Operators and tree shape survive.
fn strip_constants(lf: &LogicalForm) -> LogicalForm {
    match lf {
        LogicalForm::TypeFilter(_) => LogicalForm::TypeFilter(String::new()),
        LogicalForm::Intersect(a, b) => LogicalForm::Intersect(
            Box::new(strip_constants(a)),
            Box::new(strip_constants(b)),
        ),
        LogicalForm::Join(p, v) => {
            LogicalForm::Join(strip_prop(p), strip_value(v))
        }
        LogicalForm::Superlative { max, set, degree } => {
            LogicalForm::Superlative {
                max: *max,
                set: Box::new(strip_constants(set)),
                degree: strip_prop(degree),
            }
        }
        LogicalForm::Count(s) => {
            LogicalForm::Count(Box::new(strip_constants(s)))
        }
        LogicalForm::Entity(_) => LogicalForm::Entity(String::new()),
        LogicalForm::Number(_) => LogicalForm::Number(0.0),
        LogicalForm::Var(_) => LogicalForm::Var(String::new()),
    }
}

fn strip_prop(p: &PropExpr) -> PropExpr {
    match p {
        PropExpr::Named(_) => PropExpr::Named(String::new()),
        PropExpr::Reverse(inner) => PropExpr::Reverse(Box::new(strip_prop(inner))),
        PropExpr::ReverseLambda(_, body) => PropExpr::ReverseLambda(
            String::new(),
            Box::new(strip_constants(body)),
        ),
    }
}

fn strip_value(v: &JoinValue) -> JoinValue {
    match v {
        JoinValue::Set(s) => JoinValue::Set(Box::new(strip_constants(s))),
        JoinValue::Compare(op, _) => JoinValue::Compare(*op, 0.0),
    }
}

/// Collapse all comparison operators to one placeholder.
fn wipe_comparators(lf: &LogicalForm) -> LogicalForm {
    match lf {
        LogicalForm::Intersect(a, b) => LogicalForm::Intersect(
            Box::new(wipe_comparators(a)),
            Box::new(wipe_comparators(b)),
        ),
        LogicalForm::Join(p, v) => {
            let v = match v {
                JoinValue::Set(s) => {
                    JoinValue::Set(Box::new(wipe_comparators(s)))
                }
                JoinValue::Compare(_, n) => JoinValue::Compare(CmpOp::Eq, *n),
            };
            LogicalForm::Join(wipe_comparators_prop(p), v)
        }
        LogicalForm::Superlative { max, set, degree } => {
            LogicalForm::Superlative {
                max: *max,
                set: Box::new(wipe_comparators(set)),
                degree: wipe_comparators_prop(degree),
            }
        }
        LogicalForm::Count(s) => {
            LogicalForm::Count(Box::new(wipe_comparators(s)))
        }
        other => other.clone(),
    }
}

fn wipe_comparators_prop(p: &PropExpr) -> PropExpr {
    match p {
        PropExpr::Named(n) => PropExpr::Named(n.clone()),
        PropExpr::Reverse(inner) => {
            PropExpr::Reverse(Box::new(wipe_comparators_prop(inner)))
        }
        PropExpr::ReverseLambda(v, body) => PropExpr::ReverseLambda(
            v.clone(),
            Box::new(wipe_comparators(body)),
        ),
    }
}

/// Collapse every superlative to a canonical direction and degree.
fn wipe_superlatives(lf: &LogicalForm) -> LogicalForm {
    match lf {
        LogicalForm::Intersect(a, b) => LogicalForm::Intersect(
            Box::new(wipe_superlatives(a)),
            Box::new(wipe_superlatives(b)),
        ),
        LogicalForm::Join(p, v) => {
            let v = match v {
                JoinValue::Set(s) => {
                    JoinValue::Set(Box::new(wipe_superlatives(s)))
                }
                JoinValue::Compare(op, n) => JoinValue::Compare(*op, *n),
            };
            LogicalForm::Join(wipe_superlatives_prop(p), v)
        }
        LogicalForm::Superlative { set, .. } => LogicalForm::Superlative {
            max: true,
            set: Box::new(wipe_superlatives(set)),
            degree: PropExpr::Named(String::new()),
        },
        LogicalForm::Count(s) => {
            LogicalForm::Count(Box::new(wipe_superlatives(s)))
        }
        other => other.clone(),
    }
}

fn wipe_superlatives_prop(p: &PropExpr) -> PropExpr {
    match p {
        PropExpr::Named(n) => PropExpr::Named(n.clone()),
        PropExpr::Reverse(inner) => {
            PropExpr::Reverse(Box::new(wipe_superlatives_prop(inner)))
        }
        PropExpr::ReverseLambda(v, body) => PropExpr::ReverseLambda(
            v.clone(),
            Box::new(wipe_superlatives(body)),
        ),
    }
}

/// Classify how a wrong prediction's structure relates to the gold form's.
pub fn categorize_errors(pred: &LogicalForm, gold: &LogicalForm) -> ErrorCategory {
    let sp = strip_constants(pred);
    let sg = strip_constants(gold);
    if sp == sg {
        return ErrorCategory::CorrectStructure;
    }
    if wipe_comparators(&sp) == wipe_comparators(&sg) {
        return ErrorCategory::ComparativeMismatch;
    }
    if wipe_superlatives(&sp) == wipe_superlatives(&sg) {
        return ErrorCategory::SuperlativeMismatch;
    }
    ErrorCategory::Other
}

/// Token-level front end: unparseable predictions fall into `Other`.
pub fn categorize_error_tokens(pred: &[String], gold: &[String]) -> ErrorCategory {
    match (logic::parse_lf(pred), logic::parse_lf(gold)) {
        (Ok(p), Ok(g)) => categorize_errors(&p, &g),
        _ => ErrorCategory::Other,
    }
}

// Session is only used via Model::session in this module; silence the
// unused-import lint when compiled without tests.
#[allow(unused)]
fn _session_type_anchor(_: &Session<'_>) {}
