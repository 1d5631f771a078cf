//! Multi-domain parameter sharing: six ways to tie K parsers together.
//!
//! * `indep` — K disjoint models, one per domain, over per-domain
//!   vocabularies. The baseline everything else is measured against.
//! * `one2one` — a single encoder-decoder over union vocabularies serving
//!   every domain.
//! * `inputtoken` — `one2one` plus one extra encoder embedding per domain;
//!   the token `@<domain>` is prepended to the utterance at training and
//!   test time.
//! * `domainencoding` — `one2one` plus a one-hot domain vector appended to
//!   every decoder LSTM input (and nowhere else), adding exactly `4·H·K`
//!   parameters.
//! * `one2many` — one shared encoder, K domain decoders.
//! * `many2many` — K domain encoders plus one general encoder shared by
//!   all domains, and K domain decoders attending over the concatenated
//!   states of both encoders.
//!
//! Per-domain decoders size their output layers by the domain's own
//! vocabulary; shared decoders use the union and restrict illegal writes
//! with a per-domain mask at prediction time (training is unmasked).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::seq2seq::{
    action_logits, alloc_cell, attend, bind_cell, bundle_pair, bundle_single, decoder_step,
    encode_bidirectional, gold_action_indices, init_decoder, step_nll, Attention,
    DecoderRef, EncoderBundle, LstmState, Seq2SeqError,
};
use crate::tensor::{NodeId, Params, Tape, Tensor, TensorError};
use crate::vocab::{Vocab, EOS, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    Indep,
    One2One,
    InputToken,
    DomainEncoding,
    One2Many,
    Many2Many,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Indep,
        Architecture::One2One,
        Architecture::InputToken,
        Architecture::DomainEncoding,
        Architecture::One2Many,
        Architecture::Many2Many,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Indep => "indep",
            Architecture::One2One => "one2one",
            Architecture::InputToken => "inputtoken",
            Architecture::DomainEncoding => "domainencoding",
            Architecture::One2Many => "one2many",
            Architecture::Many2Many => "many2many",
        }
    }

    pub fn from_name(s: &str) -> Option<Architecture> {
        Architecture::ALL.into_iter().find(|a| a.name() == s)
    }

    /// Domain-specific encoder per domain?
    fn per_domain_encoder(self) -> bool {
        matches!(self, Architecture::Indep | Architecture::Many2Many)
    }

    /// Domain-specific decoder per domain?
    pub fn per_domain_decoder(self) -> bool {
        matches!(
            self,
            Architecture::Indep | Architecture::One2Many | Architecture::Many2Many
        )
    }

    /// Width of attention targets / contexts.
    fn ctx_width(self, hidden: usize) -> usize {
        match self {
            Architecture::Many2Many => 4 * hidden,
            _ => 2 * hidden,
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum ArchError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Seq2Seq(#[from] Seq2SeqError),
    #[error("model needs at least one domain")]
    NoDomains,
    #[error("duplicate domain name {0:?}")]
    DuplicateDomain(String),
    #[error("domain index {index} out of range ({len} domains)")]
    DomainOutOfRange { index: usize, len: usize },
    #[error("hidden and embedding sizes must be positive")]
    ZeroDim,
}

/// A domain as the model sees it: name and its own vocabularies.
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub name: String,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
}

/// Marker token prepended by the `inputtoken` architecture.
pub fn domain_token(name: &str) -> String {
    format!("@{name}")
}

/// A built model: parameter store plus the vocabulary tables and masks the
/// architecture implies.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub hidden: usize,
    pub emb: usize,
    pub domains: Vec<DomainSpec>,
    pub params: Params,
    /// Union input vocabulary (with `@domain` rows under `inputtoken`);
    /// `None` when every encoder is per-domain.
    input_union: Option<Vocab>,
    /// Union output vocabulary; `None` under per-domain decoders.
    output_union: Option<Vocab>,
    /// Per-domain write mask over that domain's decoding vocabulary.
    write_masks: Vec<Vec<bool>>,
}

fn union_tokens<'a>(vocabs: impl Iterator<Item = &'a Vocab>) -> Vec<String> {
    let mut set = BTreeSet::new();
    for v in vocabs {
        for t in v.tokens() {
            if t != UNK && t != EOS {
                set.insert(t.clone());
            }
        }
    }
    set.into_iter().collect()
}

fn alloc_encoder(
    params: &mut Params,
    prefix: &str,
    v_in: usize,
    emb: usize,
    hidden: usize,
) -> Result<(), TensorError> {
    params.insert(&format!("{prefix}.embed"), Tensor::zeros(&[v_in, emb]))?;
    alloc_cell(params, &format!("{prefix}.fwd"), emb, hidden)?;
    alloc_cell(params, &format!("{prefix}.bwd"), emb, hidden)?;
    Ok(())
}

fn alloc_decoder(
    params: &mut Params,
    prefix: &str,
    v_out: usize,
    emb: usize,
    hidden: usize,
    ctx: usize,
    extra_input: usize,
) -> Result<(), TensorError> {
    params.insert(&format!("{prefix}.embed"), Tensor::zeros(&[v_out, emb]))?;
    alloc_cell(
        params,
        &format!("{prefix}.cell"),
        emb + ctx + extra_input,
        hidden,
    )?;
    params.insert(&format!("{prefix}.ws"), Tensor::zeros(&[hidden, ctx]))?;
    params.insert(&format!("{prefix}.wa"), Tensor::zeros(&[hidden, ctx]))?;
    params.insert(
        &format!("{prefix}.u"),
        Tensor::zeros(&[v_out, hidden + ctx]),
    )?;
    Ok(())
}

impl Model {
    pub fn build(
        arch: Architecture,
        domains: Vec<DomainSpec>,
        hidden: usize,
        emb: usize,
    ) -> Result<Model, ArchError> {
        if domains.is_empty() {
            return Err(ArchError::NoDomains);
        }
        if hidden == 0 || emb == 0 {
            return Err(ArchError::ZeroDim);
        }
        {
            let mut names = BTreeSet::new();
            for d in &domains {
                if !names.insert(&d.name) {
                    return Err(ArchError::DuplicateDomain(d.name.clone()));
                }
            }
        }
        let k = domains.len();
        let ctx = arch.ctx_width(hidden);

        let input_union = if arch.per_domain_encoder() && arch != Architecture::Many2Many {
            None
        } else {
            let mut words = union_tokens(domains.iter().map(|d| &d.input_vocab));
            if arch == Architecture::InputToken {
                words.extend(domains.iter().map(|d| domain_token(&d.name)));
            }
            Some(Vocab::input_vocab(words))
        };
        let output_union = if arch.per_domain_decoder() {
            None
        } else {
            Some(Vocab::output_vocab(
                union_tokens(domains.iter().map(|d| &d.output_vocab)),
            ))
        };

        let mut params = Params::new();
        match arch {
            Architecture::Indep => {
                for (i, d) in domains.iter().enumerate() {
                    alloc_encoder(
                        &mut params,
                        &format!("d{i}.enc"),
                        d.input_vocab.len(),
                        emb,
                        hidden,
                    )?;
                    alloc_decoder(
                        &mut params,
                        &format!("d{i}.dec"),
                        d.output_vocab.len(),
                        emb,
                        hidden,
                        ctx,
                        0,
                    )?;
                }
            }
            Architecture::One2One | Architecture::InputToken | Architecture::DomainEncoding => {
                let v_in = input_union.as_ref().unwrap().len();
                let v_out = output_union.as_ref().unwrap().len();
                let extra = if arch == Architecture::DomainEncoding {
                    k
                } else {
                    0
                };
                alloc_encoder(&mut params, "shared.enc", v_in, emb, hidden)?;
                alloc_decoder(&mut params, "shared.dec", v_out, emb, hidden, ctx, extra)?;
            }
            Architecture::One2Many => {
                let v_in = input_union.as_ref().unwrap().len();
                alloc_encoder(&mut params, "shared.enc", v_in, emb, hidden)?;
                for (i, d) in domains.iter().enumerate() {
                    alloc_decoder(
                        &mut params,
                        &format!("d{i}.dec"),
                        d.output_vocab.len(),
                        emb,
                        hidden,
                        ctx,
                        0,
                    )?;
                }
            }
            Architecture::Many2Many => {
                let v_in = input_union.as_ref().unwrap().len();
                alloc_encoder(&mut params, "g.enc", v_in, emb, hidden)?;
                for (i, d) in domains.iter().enumerate() {
                    alloc_encoder(
                        &mut params,
                        &format!("d{i}.enc"),
                        d.input_vocab.len(),
                        emb,
                        hidden,
                    )?;
                    alloc_decoder(
                        &mut params,
                        &format!("d{i}.dec"),
                        d.output_vocab.len(),
                        emb,
                        hidden,
                        ctx,
                        0,
                    )?;
                }
            }
        }

        let write_masks = domains
            .iter()
            .map(|d| {
                let dec = output_union.as_ref().unwrap_or(&d.output_vocab);
                dec.tokens()
                    .iter()
                    .map(|t| t != UNK && (t == EOS || d.output_vocab.contains(t)))
                    .collect()
            })
            .collect();

        Ok(Model {
            arch,
            hidden,
            emb,
            domains,
            params,
            input_union,
            output_union,
            write_masks,
        })
    }

    pub fn k(&self) -> usize {
        self.domains.len()
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domains.iter().position(|d| d.name == name)
    }

    fn check_domain(&self, index: usize) -> Result<(), ArchError> {
        if index >= self.domains.len() {
            return Err(ArchError::DomainOutOfRange {
                index,
                len: self.domains.len(),
            });
        }
        Ok(())
    }

    /// Vocabulary used to embed utterance tokens for this domain.
    pub fn enc_vocab(&self, domain: usize) -> &Vocab {
        match self.arch {
            Architecture::Indep => &self.domains[domain].input_vocab,
            _ => self.input_union.as_ref().unwrap(),
        }
    }

    /// Vocabulary whose entries are this domain's write actions.
    pub fn dec_vocab(&self, domain: usize) -> &Vocab {
        self.output_union
            .as_ref()
            .unwrap_or(&self.domains[domain].output_vocab)
    }

    /// Write actions this domain may use at prediction time.
    pub fn write_mask(&self, domain: usize) -> &[bool] {
        &self.write_masks[domain]
    }

    pub fn count_parameters(&self) -> usize {
        self.params.total_scalars()
    }

    fn enc_prefixes(&self, domain: usize) -> Vec<String> {
        match self.arch {
            Architecture::Indep => vec![format!("d{domain}.enc")],
            Architecture::Many2Many => vec![format!("d{domain}.enc"), "g.enc".into()],
            _ => vec!["shared.enc".into()],
        }
    }

    fn dec_prefix(&self, domain: usize) -> String {
        if self.arch.per_domain_decoder() {
            format!("d{domain}.dec")
        } else {
            "shared.dec".into()
        }
    }

    /// Start a per-example session: encode the utterance and bind the
    /// decoder for this domain on a fresh tape.
    pub fn session(&self, domain: usize, utterance: &[String]) -> Result<Session<'_>, ArchError> {
        self.check_domain(domain)?;
        let mut tape = Tape::new();
        let (h, emb_dim) = (self.hidden, self.emb);
        let ctx = self.arch.ctx_width(h);

        let mut input_tokens: Vec<String> = utterance.to_vec();
        if self.arch == Architecture::InputToken {
            input_tokens.insert(0, domain_token(&self.domains[domain].name));
        }

        let prefixes = self.enc_prefixes(domain);
        let mut outputs = Vec::with_capacity(prefixes.len());
        for (which, prefix) in prefixes.iter().enumerate() {
            // Many2Many: the domain encoder embeds with the domain
            // vocabulary, the general encoder with the union.
            let vocab = match self.arch {
                Architecture::Many2Many if which == 0 => &self.domains[domain].input_vocab,
                Architecture::Many2Many => self.input_union.as_ref().unwrap(),
                _ => self.enc_vocab(domain),
            };
            let ids: Vec<usize> = input_tokens.iter().map(|t| vocab.id_or_unk(t)).collect();
            let embed = tape.param(&self.params, &format!("{prefix}.embed"))?;
            let fwd = bind_cell(&mut tape, &self.params, &format!("{prefix}.fwd"), emb_dim, h)?;
            let bwd = bind_cell(&mut tape, &self.params, &format!("{prefix}.bwd"), emb_dim, h)?;
            outputs.push(encode_bidirectional(&mut tape, embed, &fwd, &bwd, &ids)?);
        }
        let bundle = match self.arch {
            Architecture::Many2Many => bundle_pair(&mut tape, &outputs[0], &outputs[1])?,
            _ => bundle_single(&mut tape, &outputs[0])?,
        };

        let dp = self.dec_prefix(domain);
        let extra = if self.arch == Architecture::DomainEncoding {
            self.k()
        } else {
            0
        };
        let domain_vec = if self.arch == Architecture::DomainEncoding {
            let mut one_hot = vec![0.0; self.k()];
            one_hot[domain] = 1.0;
            Some(tape.constant(Tensor::vector(one_hot)))
        } else {
            None
        };
        let dec = DecoderRef {
            cell: bind_cell(
                &mut tape,
                &self.params,
                &format!("{dp}.cell"),
                emb_dim + ctx + extra,
                h,
            )?,
            embed: tape.param(&self.params, &format!("{dp}.embed"))?,
            w_s: tape.param(&self.params, &format!("{dp}.ws"))?,
            w_a: tape.param(&self.params, &format!("{dp}.wa"))?,
            u: tape.param(&self.params, &format!("{dp}.u"))?,
            domain_vec,
            hidden: h,
            ctx_width: ctx,
            init_width: ctx,
        };

        Ok(Session {
            model: self,
            tape,
            domain,
            bundle,
            dec,
            input_tokens,
        })
    }

    /// Teacher-forced negative log-likelihood of one example, summed over
    /// steps (each gold token, then sequence end). The per-step target mass
    /// marginalizes over the gold write action and every input position
    /// holding the gold token.
    pub fn example_nll(
        &self,
        domain: usize,
        utterance: &[String],
        gold_lf: &[String],
    ) -> Result<(Session<'_>, NodeId), ArchError> {
        let mut session = self.session(domain, utterance)?;
        let loss = session.nll(gold_lf)?;
        Ok((session, loss))
    }
}

/// One utterance's encoding plus the bound decoder, on an owned tape.
/// Drives both training (teacher forcing) and beam search.
pub struct Session<'m> {
    model: &'m Model,
    pub tape: Tape,
    domain: usize,
    bundle: EncoderBundle,
    dec: DecoderRef,
    input_tokens: Vec<String>,
}

/// One decode step's graph nodes: the joint action logits (writes then
/// copies) and the attention context needed to advance the state.
pub struct StepNodes {
    pub logits: NodeId,
    pub context: NodeId,
    pub attention: Attention,
}

impl<'m> Session<'m> {
    /// Effective input positions (including any prepended domain marker):
    /// copy action `i` realizes `input_tokens()[i]`.
    pub fn input_tokens(&self) -> &[String] {
        &self.input_tokens
    }

    pub fn dec_vocab(&self) -> &Vocab {
        self.model.dec_vocab(self.domain)
    }

    pub fn write_mask(&self) -> &[bool] {
        self.model.write_mask(self.domain)
    }

    pub fn n_write(&self) -> usize {
        self.dec_vocab().len()
    }

    pub fn n_copy(&self) -> usize {
        self.input_tokens.len()
    }

    /// `s_1`.
    pub fn initial_state(&mut self) -> Result<LstmState, ArchError> {
        Ok(init_decoder(&mut self.tape, &self.dec, &self.bundle)?)
    }

    /// Attention and action logits for the current state.
    pub fn step(&mut self, s: LstmState) -> Result<StepNodes, ArchError> {
        let attention = attend(&mut self.tape, &self.dec, s.h, &self.bundle)?;
        let logits = action_logits(&mut self.tape, &self.dec, s.h, &attention)?;
        Ok(StepNodes {
            logits,
            context: attention.context,
            attention,
        })
    }

    /// Feed the realized token back and advance the LSTM. Tokens outside
    /// the decoding vocabulary (copied test-only constants) embed as the
    /// unknown entry.
    pub fn advance(
        &mut self,
        s: LstmState,
        token: &str,
        context: NodeId,
    ) -> Result<LstmState, ArchError> {
        let y = self.dec_vocab().id_or_unk(token);
        Ok(decoder_step(&mut self.tape, &self.dec, y, context, s)?)
    }

    /// Teacher-forced loss over `gold ++ [<eos>]`, summed across steps.
    pub fn nll(&mut self, gold_lf: &[String]) -> Result<NodeId, ArchError> {
        let n_write = self.n_write();
        let mut s = self.initial_state()?;
        let mut total: Option<NodeId> = None;
        for t in 0..=gold_lf.len() {
            let nodes = self.step(s)?;
            let gold: &str = if t < gold_lf.len() {
                &gold_lf[t]
            } else {
                EOS
            };
            let indices =
                gold_action_indices(gold, self.dec_vocab(), &self.input_tokens, n_write)?;
            let loss = step_nll(&mut self.tape, nodes.logits, &indices)?;
            total = Some(match total {
                Some(acc) => self.tape.add(acc, loss)?,
                None => loss,
            });
            if t < gold_lf.len() {
                s = self.advance(s, gold, nodes.context)?;
            }
        }
        Ok(total.expect("loop ran at least once"))
    }
}

/// Synthetic domain specs with controlled vocabulary overlap, for
/// parameter-accounting studies: every domain shares `shared_in` input
/// words and `shared_out` output tokens and owns `unique_in` / `unique_out`
/// more of each.
pub fn sized_specs(
    k: usize,
    shared_in: usize,
    unique_in: usize,
    shared_out: usize,
    unique_out: usize,
) -> Vec<DomainSpec> {
    (0..k)
        .map(|d| {
            let input: Vec<String> = (0..shared_in)
                .map(|i| format!("w{i}"))
                .chain((0..unique_in).map(|i| format!("d{d}w{i}")))
                .collect();
            let output: Vec<String> = (0..shared_out)
                .map(|i| format!("T{i}"))
                .chain((0..unique_out).map(|i| format!("D{d}T{i}")))
                .collect();
            DomainSpec {
                name: format!("domain{d}"),
                input_vocab: Vocab::input_vocab(input),
                output_vocab: Vocab::output_vocab(output),
            }
        })
        .collect()
}
