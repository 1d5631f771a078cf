//! Sequence-to-sequence building blocks on the autodiff tape.
//!
//! The decoder follows the attention recurrence
//!
//! ```text
//! s_1     = tanh(W_s · v)                 v = encoder summary
//! e_ji    = s_jᵀ · W_a · b_i              raw attention scores
//! α_j     = softmax(e_j)
//! c_j     = Σ_i α_ji · b_i
//! p(a_j)  ∝ exp(concat(U·[s_j; c_j], e_j))   writes ∥ copies, one softmax
//! s_{j+1} = LSTM([emb(y_j); c_j (; d)], s_j)
//! ```
//!
//! where the action space at step j is every output-vocabulary token (write
//! actions) plus one copy action per input position, scored by the raw
//! attention scores. Architectures differ only in which parameters they bind
//! and in the widths of the encoder summary and context.

use thiserror::Error;

use crate::tensor::{NodeId, Params, Tape, Tensor, TensorError};
use crate::vocab::Vocab;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Seq2SeqError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("empty input sequence")]
    EmptyInput,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: usize, size: usize },
    #[error("cell expects input width {expected}, got {got}")]
    InputWidth { expected: usize, got: usize },
    #[error("gold token {token:?} is not writable and not copyable from the input")]
    UncoverableGold { token: String },
    #[error("all actions are masked")]
    AllMasked,
}

// ── LSTM cell ──────────────────────────────────────────────────────────────

/// Parameter names for one LSTM cell, `<prefix>.wx/.wh/.b`.
///
/// `wx` is `[4H × input]`, `wh` is `[4H × H]`, `b` is `[4H]`; rows partition
/// into input, forget, output and candidate gates in that order.
#[derive(Debug, Clone)]
pub struct CellRef {
    pub wx: NodeId,
    pub wh: NodeId,
    pub b: NodeId,
    pub input: usize,
    pub hidden: usize,
}

/// Allocate cell parameters into `params` (zeros; initialization happens
/// later over the whole store).
pub fn alloc_cell(
    params: &mut Params,
    prefix: &str,
    input: usize,
    hidden: usize,
) -> Result<(), TensorError> {
    params.insert(&format!("{prefix}.wx"), Tensor::zeros(&[4 * hidden, input]))?;
    params.insert(&format!("{prefix}.wh"), Tensor::zeros(&[4 * hidden, hidden]))?;
    params.insert(&format!("{prefix}.b"), Tensor::zeros(&[4 * hidden]))?;
    Ok(())
}

/// Bind a cell's parameters onto the tape.
pub fn bind_cell(
    tape: &mut Tape,
    params: &Params,
    prefix: &str,
    input: usize,
    hidden: usize,
) -> Result<CellRef, TensorError> {
    Ok(CellRef {
        wx: tape.param(params, &format!("{prefix}.wx"))?,
        wh: tape.param(params, &format!("{prefix}.wh"))?,
        b: tape.param(params, &format!("{prefix}.b"))?,
        input,
        hidden,
    })
}

/// Hidden state and cell memory, both `[H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

/// Zero initial state.
pub fn zero_state(tape: &mut Tape, hidden: usize) -> LstmState {
    let h = tape.constant(Tensor::zeros(&[hidden]));
    let c = tape.constant(Tensor::zeros(&[hidden]));
    LstmState { h, c }
}

/// One LSTM step.
pub fn lstm_step(
    tape: &mut Tape,
    cell: &CellRef,
    x: NodeId,
    state: LstmState,
) -> Result<LstmState, Seq2SeqError> {
    let got = tape.value(x).numel();
    if tape.value(x).rank() != 1 || got != cell.input {
        return Err(Seq2SeqError::InputWidth {
            expected: cell.input,
            got,
        });
    }
    let h = cell.hidden;
    let gx = tape.matmul(cell.wx, x)?;
    let gh = tape.matmul(cell.wh, state.h)?;
    let pre = tape.add(gx, gh)?;
    let pre = tape.add(pre, cell.b)?;
    let i = tape.slice(pre, 0, 0, h)?;
    let f = tape.slice(pre, 0, h, h)?;
    let o = tape.slice(pre, 0, 2 * h, h)?;
    let g = tape.slice(pre, 0, 3 * h, h)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let o = tape.sigmoid(o);
    let g = tape.tanh(g);
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next);
    let h_next = tape.mul(o, tc)?;
    Ok(LstmState {
        h: h_next,
        c: c_next,
    })
}

// ── Encoder ────────────────────────────────────────────────────────────────

/// Output of one bidirectional encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// Contextual state `b_i = [h^F_i; h^B_i]` per input position, each `[2H]`.
    pub states: Vec<NodeId>,
    /// Final forward state `h^F_m`.
    pub final_fwd: NodeId,
    /// First backward state `h^B_1` (the backward pass's last step).
    pub first_bwd: NodeId,
}

/// Run forward and backward LSTMs over embedded token ids and concatenate
/// per-position states. Initial states are zero.
pub fn encode_bidirectional(
    tape: &mut Tape,
    embed: NodeId,
    fwd: &CellRef,
    bwd: &CellRef,
    token_ids: &[usize],
) -> Result<EncoderOutput, Seq2SeqError> {
    if token_ids.is_empty() {
        return Err(Seq2SeqError::EmptyInput);
    }
    let vocab_size = tape.value(embed).shape()[0];
    for &id in token_ids {
        if id >= vocab_size {
            return Err(Seq2SeqError::TokenOutOfRange {
                id,
                size: vocab_size,
            });
        }
    }
    let m = token_ids.len();
    let embs: Vec<NodeId> = token_ids
        .iter()
        .map(|&id| tape.row(embed, id))
        .collect::<Result<_, _>>()?;

    let mut fwd_states = Vec::with_capacity(m);
    let mut st = zero_state(tape, fwd.hidden);
    for &e in &embs {
        st = lstm_step(tape, fwd, e, st)?;
        fwd_states.push(st.h);
    }
    let mut bwd_states: Vec<NodeId> = Vec::with_capacity(m);
    let mut st = zero_state(tape, bwd.hidden);
    for &e in embs.iter().rev() {
        st = lstm_step(tape, bwd, e, st)?;
        bwd_states.push(st.h);
    }
    bwd_states.reverse(); // bwd_states[i] is the backward state at position i

    let mut states = Vec::with_capacity(m);
    for i in 0..m {
        states.push(tape.concat(&[fwd_states[i], bwd_states[i]], 0)?);
    }
    Ok(EncoderOutput {
        states,
        final_fwd: fwd_states[m - 1],
        first_bwd: bwd_states[0],
    })
}

// ── Decoder ────────────────────────────────────────────────────────────────

/// Bound decoder parameters plus the dimensions the graph fragments need.
///
/// `ctx_width` is the width of attention targets and contexts (2H for a
/// single encoder, 4H when two encoders are concatenated); `init_width` is
/// the width of the encoder summary fed to `W_s`.
#[derive(Debug, Clone)]
pub struct DecoderRef {
    pub cell: CellRef,
    pub embed: NodeId,
    pub w_s: NodeId,
    pub w_a: NodeId,
    pub u: NodeId,
    /// Constant one-hot domain vector appended to each cell input, if the
    /// architecture conditions the decoder on the domain.
    pub domain_vec: Option<NodeId>,
    pub hidden: usize,
    pub ctx_width: usize,
    pub init_width: usize,
}

/// Attention targets: the encoder states stacked as an `[m, ctx_width]`
/// matrix, plus the summary vector for `s_1`.
#[derive(Debug, Clone)]
pub struct EncoderBundle {
    pub b_matrix: NodeId,
    pub summary: NodeId,
    pub len: usize,
    pub width: usize,
}

/// Stack encoder states and the `s_1` summary for a single encoder.
pub fn bundle_single(
    tape: &mut Tape,
    enc: &EncoderOutput,
) -> Result<EncoderBundle, Seq2SeqError> {
    let b_matrix = tape.stack_rows(&enc.states)?;
    let summary = tape.concat(&[enc.final_fwd, enc.first_bwd], 0)?;
    let shape = tape.value(b_matrix).shape().to_vec();
    Ok(EncoderBundle {
        b_matrix,
        summary,
        len: shape[0],
        width: shape[1],
    })
}

/// Stack two encoders side by side: states `[b^k_i; b^g_i]` and summary
/// `[h^F,k; h^B,k; h^F,g; h^B,g]`.
pub fn bundle_pair(
    tape: &mut Tape,
    specific: &EncoderOutput,
    general: &EncoderOutput,
) -> Result<EncoderBundle, Seq2SeqError> {
    if specific.states.len() != general.states.len() {
        return Err(Seq2SeqError::InputWidth {
            expected: specific.states.len(),
            got: general.states.len(),
        });
    }
    let mut rows = Vec::with_capacity(specific.states.len());
    for (s, g) in specific.states.iter().zip(&general.states) {
        rows.push(tape.concat(&[*s, *g], 0)?);
    }
    let b_matrix = tape.stack_rows(&rows)?;
    let summary = tape.concat(
        &[
            specific.final_fwd,
            specific.first_bwd,
            general.final_fwd,
            general.first_bwd,
        ],
        0,
    )?;
    let shape = tape.value(b_matrix).shape().to_vec();
    Ok(EncoderBundle {
        b_matrix,
        summary,
        len: shape[0],
        width: shape[1],
    })
}

/// `s_1 = tanh(W_s · summary)`, entries in (−1, 1).
pub fn init_decoder(
    tape: &mut Tape,
    dec: &DecoderRef,
    bundle: &EncoderBundle,
) -> Result<LstmState, Seq2SeqError> {
    let pre = tape.matmul(dec.w_s, bundle.summary)?;
    let h = tape.tanh(pre);
    let c = tape.constant(Tensor::zeros(&[dec.hidden]));
    Ok(LstmState { h, c })
}

/// One attention pass: raw scores `e_j`, weights `α_j` and context `c_j`.
pub struct Attention {
    pub scores: NodeId,
    pub weights: NodeId,
    pub context: NodeId,
}

pub fn attend(
    tape: &mut Tape,
    dec: &DecoderRef,
    s: NodeId,
    bundle: &EncoderBundle,
) -> Result<Attention, Seq2SeqError> {
    let u = tape.matmul(s, dec.w_a)?; // sᵀ W_a, a [ctx_width] vector
    let scores = tape.matmul(bundle.b_matrix, u)?; // e_ji = b_i · u
    let weights = tape.softmax(scores)?;
    let context = tape.matmul(weights, bundle.b_matrix)?; // Σ α_ji b_i
    Ok(Attention {
        scores,
        weights,
        context,
    })
}

/// Full action-space logits at one step: `U·[s; c]` for write actions
/// followed by the raw attention scores for copy actions.
pub fn action_logits(
    tape: &mut Tape,
    dec: &DecoderRef,
    s: NodeId,
    att: &Attention,
) -> Result<NodeId, Seq2SeqError> {
    let sc = tape.concat(&[s, att.context], 0)?;
    let writes = tape.matmul(dec.u, sc)?;
    Ok(tape.concat(&[writes, att.scores], 0)?)
}

/// Advance the decoder state after emitting output-vocabulary id `y`.
pub fn decoder_step(
    tape: &mut Tape,
    dec: &DecoderRef,
    y_id: usize,
    context: NodeId,
    state: LstmState,
) -> Result<LstmState, Seq2SeqError> {
    let vocab_size = tape.value(dec.embed).shape()[0];
    if y_id >= vocab_size {
        return Err(Seq2SeqError::TokenOutOfRange {
            id: y_id,
            size: vocab_size,
        });
    }
    let emb = tape.row(dec.embed, y_id)?;
    let x = match dec.domain_vec {
        Some(d) => tape.concat(&[emb, context, d], 0)?,
        None => tape.concat(&[emb, context], 0)?,
    };
    lstm_step(tape, &dec.cell, x, state)
}

// ── Action space ───────────────────────────────────────────────────────────

/// An action is either writing an output-vocabulary token or copying the
/// input token at a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Write(usize),
    Copy(usize),
}

/// Probabilities over the joint action space at one decode step, after
/// masking: a boolean mask restricts write actions (copies are always
/// allowed), masked actions have probability exactly 0, and the rest are
/// renormalized over the unmasked subset.
#[derive(Debug, Clone)]
pub struct OutputDistribution {
    pub probs: Vec<f64>,
    pub n_write: usize,
    pub n_copy: usize,
}

impl OutputDistribution {
    pub fn action(&self, idx: usize) -> Action {
        if idx < self.n_write {
            Action::Write(idx)
        } else {
            Action::Copy(idx - self.n_write)
        }
    }

    pub fn prob(&self, a: Action) -> f64 {
        match a {
            Action::Write(w) => self.probs[w],
            Action::Copy(i) => self.probs[self.n_write + i],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Softmax over the unmasked subset of an action-logit vector.
/// `write_mask[w] == false` zeroes write action `w` exactly; `None` means
/// all writes are allowed.
pub fn action_probabilities(
    logits: &[f64],
    n_write: usize,
    write_mask: Option<&[bool]>,
) -> Result<OutputDistribution, Seq2SeqError> {
    let n = logits.len();
    assert!(n_write <= n, "write count exceeds logit count");
    if let Some(mask) = write_mask {
        assert_eq!(mask.len(), n_write, "mask length must match write count");
    }
    let allowed = |i: usize| -> bool {
        match write_mask {
            Some(mask) if i < n_write => mask[i],
            _ => true,
        }
    };
    let mut max = f64::NEG_INFINITY;
    for (i, &logit) in logits.iter().enumerate() {
        if allowed(i) && logit > max {
            max = logit;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Seq2SeqError::AllMasked);
    }
    let mut probs = vec![0.0; n];
    let mut sum = 0.0;
    for i in 0..n {
        if allowed(i) {
            let e = (logits[i] - max).exp();
            probs[i] = e;
            sum += e;
        }
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    Ok(OutputDistribution {
        probs,
        n_write,
        n_copy: n - n_write,
    })
}

/// Indices (into the joint action space) whose realizations equal the gold
/// token: its write action plus every input position holding that token.
pub fn gold_action_indices(
    gold: &str,
    out_vocab: &Vocab,
    input_tokens: &[String],
    n_write: usize,
) -> Result<Vec<usize>, Seq2SeqError> {
    let mut idx = Vec::new();
    if let Some(w) = out_vocab.id(gold) {
        idx.push(w);
    }
    for (i, t) in input_tokens.iter().enumerate() {
        if t == gold {
            idx.push(n_write + i);
        }
    }
    if idx.is_empty() {
        return Err(Seq2SeqError::UncoverableGold {
            token: gold.to_string(),
        });
    }
    Ok(idx)
}

/// Negative log of the total probability mass on `gold_indices` under the
/// (unmasked) softmax of `logits`:
/// `−log Σ_{a ∈ gold} p(a) = logsumexp(all) − logsumexp(gold)`.
pub fn step_nll(
    tape: &mut Tape,
    logits: NodeId,
    gold_indices: &[usize],
) -> Result<NodeId, Seq2SeqError> {
    let lse_all = tape.log_sum_exp(logits)?;
    let gold = tape.gather(logits, gold_indices.to_vec())?;
    let lse_gold = tape.log_sum_exp(gold)?;
    Ok(tape.sub(lse_all, lse_gold)?)
}
