//! The optimization recipe: uniform initialization, stochastic gradient
//! descent with a plateau learning-rate schedule, and text checkpoints
//! that round-trip bitwise.
//!
//! Training is batch-size-1 SGD over the shuffled union of all domains'
//! training examples, re-shuffled every epoch from the run seed. The rate
//! starts at 0.1 and halves every 5 epochs from epoch 15: 0.1 (1–14),
//! 0.05 (15–19), 0.025 (20–24), 0.0125 (25–30). Runs longer than 30
//! epochs hold the final plateau. A non-finite loss aborts immediately.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arch::{ArchError, Architecture, DomainSpec, Model};
use crate::corpus::{input_vocab, output_vocab, Corpus};
use crate::tensor::{Gradients, Params};
use crate::vocab::Vocab;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("epoch {0} outside the 1..=30 schedule")]
    EpochOutOfRange(usize),
    #[error("non-finite loss at epoch {epoch}, example {step} (domain {domain})")]
    NonFinite {
        epoch: usize,
        step: usize,
        domain: String,
    },
    #[error("model domains {model:?} do not match corpus domains {corpus:?}")]
    DomainMismatch {
        model: Vec<String>,
        corpus: Vec<String>,
    },
    #[error("corpus has no training examples")]
    EmptyTrain,
    #[error("gradient for {name} has shape {got:?}, parameter has {expected:?}")]
    GradientShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint line {line}: {detail}")]
    Checkpoint { line: usize, detail: String },
    #[error("checkpoint vocabulary hash mismatch")]
    VocabHash,
}

// ── Configuration ──────────────────────────────────────────────────────────

/// Hyperparameters of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub emb: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub init_range: f64,
    pub beam: usize,
    pub seed: u64,
    /// Fraction of the training data this run sees (metadata; subsampling
    /// happens before training).
    pub fraction: f64,
}

impl TrainConfig {
    /// Full-scale settings: 200 hidden units, 100-dimensional embeddings.
    pub fn full(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: 200,
            emb: 100,
            epochs: 30,
            lr0: 0.1,
            init_range: 0.1,
            beam: 5,
            seed,
            fraction: 1.0,
        }
    }

    /// Minutes-scale settings for the synthetic desk corpus.
    pub fn desk(seed: u64) -> TrainConfig {
        TrainConfig {
            hidden: 32,
            emb: 16,
            ..TrainConfig::full(seed)
        }
    }
}

// ── Schedule ───────────────────────────────────────────────────────────────

fn plateau_factor(epoch: usize) -> f64 {
    match epoch {
        1..=14 => 1.0,
        15..=19 => 0.5,
        20..=24 => 0.25,
        _ => 0.125,
    }
}

/// The stepped schedule, defined for 1-based epochs 1..=30.
pub fn learning_rate(epoch: usize) -> Result<f64, TrainError> {
    if epoch == 0 || epoch > 30 {
        return Err(TrainError::EpochOutOfRange(epoch));
    }
    Ok(0.1 * plateau_factor(epoch))
}

// ── Initialization and updates ─────────────────────────────────────────────

/// Fill every trainable scalar i.i.d. uniform on [−range, range],
/// visiting parameters in sorted-name order so the draw is reproducible.
pub fn init_params(params: &mut Params, range: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, tensor) in params.iter_mut() {
        for x in tensor.data_mut() {
            *x = rng.gen_range(-range..=range);
        }
    }
}

/// θ ← θ − rate·∇θ for every parameter with a gradient.
pub fn sgd_step(params: &mut Params, grads: &Gradients, rate: f64) -> Result<(), TrainError> {
    for (name, g) in grads.iter() {
        let p = params.get_mut(name).map_err(ArchError::from)?;
        if p.shape() != g.shape() {
            return Err(TrainError::GradientShape {
                name: name.clone(),
                got: g.shape().to_vec(),
                expected: p.shape().to_vec(),
            });
        }
        for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
            *x -= rate * d;
        }
    }
    Ok(())
}

// ── Training loop ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub rate: f64,
    pub mean_loss: f64,
}

pub type TrainLog = Vec<EpochLog>;

/// Derive per-domain specs (vocabularies from the training split) in
/// corpus order.
pub fn domain_specs(corpus: &Corpus) -> Vec<DomainSpec> {
    corpus
        .domains
        .iter()
        .map(|d| DomainSpec {
            name: d.name.clone(),
            input_vocab: input_vocab(&d.train),
            output_vocab: output_vocab(&d.train),
        })
        .collect()
}

/// Build a model sized to the corpus and initialize its parameters from
/// the config seed.
pub fn build_model(
    arch: Architecture,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<Model, TrainError> {
    let mut model = Model::build(arch, domain_specs(corpus), config.hidden, config.emb)?;
    init_params(&mut model.params, config.init_range, config.seed);
    Ok(model)
}

/// Run SGD for `config.epochs` epochs over the shuffled union of all
/// domains' training examples. Deterministic in (model, corpus, config).
pub fn train(
    model: &mut Model,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    let model_names: Vec<String> = model.domains.iter().map(|d| d.name.clone()).collect();
    let corpus_names = corpus.domain_names();
    if model_names != corpus_names {
        return Err(TrainError::DomainMismatch {
            model: model_names,
            corpus: corpus_names,
        });
    }
    let mut order: Vec<(usize, usize)> = corpus
        .domains
        .iter()
        .enumerate()
        .flat_map(|(d, dom)| (0..dom.train.len()).map(move |i| (d, i)))
        .collect();
    if order.is_empty() {
        return Err(TrainError::EmptyTrain);
    }

    // A separate stream from initialization: epoch shuffles draw from the
    // seed's successor so reordering is independent of the init draw.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let rate = config.lr0 * plateau_factor(epoch.min(30));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (step, &(d, i)) in order.iter().enumerate() {
            let example = &corpus.domains[d].train[i];
            let (loss_value, grads) = {
                let (session, loss) =
                    model.example_nll(d, &example.utterance, &example.lf)?;
                let v = session.tape.value(loss).item();
                if !v.is_finite() {
                    return Err(TrainError::NonFinite {
                        epoch,
                        step,
                        domain: corpus.domains[d].name.clone(),
                    });
                }
                (v, session.tape.backward(loss).map_err(ArchError::from)?)
            };
            sgd_step(&mut model.params, &grads, rate)?;
            total += loss_value;
        }
        log.push(EpochLog {
            epoch,
            rate,
            mean_loss: total / order.len() as f64,
        });
    }
    Ok(log)
}

/// Build, initialize and train in one call.
pub fn train_model(
    arch: Architecture,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(Model, TrainLog), TrainError> {
    let mut model = build_model(arch, corpus, config)?;
    let log = train(&mut model, corpus, config)?;
    Ok((model, log))
}

// ── Checkpoints ────────────────────────────────────────────────────────────

/// Run metadata carried alongside the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub fraction: f64,
    pub beam: usize,
    pub epochs: usize,
    /// Decoding cap: twice the longest training logical form.
    pub max_len: usize,
}

/// Order-sensitive digest of every domain's name and vocabularies; a
/// checkpoint only loads against data that reproduces it.
pub fn vocab_digest(domains: &[DomainSpec]) -> String {
    let mut hasher = Sha256::new();
    for d in domains {
        hasher.update(d.name.as_bytes());
        hasher.update([0]);
        for v in [&d.input_vocab, &d.output_vocab] {
            for t in v.tokens() {
                hasher.update(t.as_bytes());
                hasher.update([1]);
            }
            hasher.update([2]);
        }
    }
    let digest = hasher.finalize();
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Serialize the model and metadata as versioned text. Floating-point
/// values print in shortest round-trip form, so save → load is bitwise.
pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    meta: &CheckpointMeta,
) -> Result<(), TrainError> {
    let mut out = String::new();
    out.push_str("semparse-checkpoint v1\n");
    let _ = writeln!(out, "arch {}", model.arch.name());
    let _ = writeln!(out, "hidden {}", model.hidden);
    let _ = writeln!(out, "emb {}", model.emb);
    let _ = writeln!(out, "seed {}", meta.seed);
    let _ = writeln!(out, "fraction {}", meta.fraction);
    let _ = writeln!(out, "beam {}", meta.beam);
    let _ = writeln!(out, "epochs {}", meta.epochs);
    let _ = writeln!(out, "max_len {}", meta.max_len);
    let _ = writeln!(out, "domains {}", model.domains.len());
    for d in &model.domains {
        let _ = writeln!(out, "domain {}", d.name);
        for (label, v) in [("input_vocab", &d.input_vocab), ("output_vocab", &d.output_vocab)] {
            let _ = writeln!(out, "{label} {}", v.len());
            let _ = writeln!(out, "{}", v.tokens().join(" "));
        }
    }
    let _ = writeln!(out, "vocab_sha256 {}", vocab_digest(&model.domains));
    let _ = writeln!(out, "params {}", model.params.len());
    for (name, t) in model.params.iter() {
        let shape: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "param {name} {} {}", t.rank(), shape.join(" "));
        let data: Vec<String> = t.data().iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(out, "{}", data.join(" "));
    }
    out.push_str("end\n");
    std::fs::write(path, out)?;
    Ok(())
}

struct LineReader<'a> {
    lines: std::str::Lines<'a>,
    n: usize,
}

impl<'a> LineReader<'a> {
    fn next(&mut self, expected: &str) -> Result<&'a str, TrainError> {
        self.n += 1;
        self.lines.next().ok_or_else(|| TrainError::Checkpoint {
            line: self.n,
            detail: format!("unexpected end of file, expected {expected}"),
        })
    }

    fn field<'b>(&self, line: &'b str, key: &str) -> Result<&'b str, TrainError> {
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| TrainError::Checkpoint {
                line: self.n,
                detail: format!("expected {key:?}, got {line:?}"),
            })
    }

    /// Read the next line and strip its `<key> ` prefix.
    fn kv(&mut self, key: &str) -> Result<&'a str, TrainError> {
        let line = self.next(key)?;
        self.field(line, key)
    }

    fn parse<T: std::str::FromStr>(&self, raw: &str, what: &str) -> Result<T, TrainError> {
        raw.parse().map_err(|_| TrainError::Checkpoint {
            line: self.n,
            detail: format!("bad {what}: {raw:?}"),
        })
    }
}

/// Load a checkpoint saved by [`save_checkpoint`], rebuilding the model
/// and verifying the vocabulary digest.
pub fn load_checkpoint(path: &Path) -> Result<(Model, CheckpointMeta), TrainError> {
    let text = std::fs::read_to_string(path)?;
    let mut r = LineReader {
        lines: text.lines(),
        n: 0,
    };
    let header = r.next("header")?;
    if header != "semparse-checkpoint v1" {
        return Err(TrainError::Checkpoint {
            line: 1,
            detail: format!("unsupported header {header:?}"),
        });
    }
    let arch_name = r.kv("arch")?.to_string();
    let arch = Architecture::from_name(&arch_name).ok_or(TrainError::Checkpoint {
        line: 2,
        detail: format!("unknown architecture {arch_name:?}"),
    })?;
    let raw = r.kv("hidden")?;
    let hidden: usize = r.parse(raw, "hidden")?;
    let raw = r.kv("emb")?;
    let emb: usize = r.parse(raw, "emb")?;
    let raw = r.kv("seed")?;
    let seed: u64 = r.parse(raw, "seed")?;
    let raw = r.kv("fraction")?;
    let fraction: f64 = r.parse(raw, "fraction")?;
    let raw = r.kv("beam")?;
    let beam: usize = r.parse(raw, "beam")?;
    let raw = r.kv("epochs")?;
    let epochs: usize = r.parse(raw, "epochs")?;
    let raw = r.kv("max_len")?;
    let max_len: usize = r.parse(raw, "max_len")?;
    let raw = r.kv("domains")?;
    let k: usize = r.parse(raw, "domain count")?;

    let mut specs = Vec::with_capacity(k);
    for _ in 0..k {
        let name = r.kv("domain")?.to_string();
        let mut vocabs = Vec::with_capacity(2);
        for label in ["input_vocab", "output_vocab"] {
            let raw = r.kv(label)?;
            let n: usize = r.parse(raw, "vocab size")?;
            let toks: Vec<String> = r
                .next("vocabulary tokens")?
                .split(' ')
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect();
            if toks.len() != n {
                return Err(TrainError::Checkpoint {
                    line: r.n,
                    detail: format!("{label} expected {n} tokens, got {}", toks.len()),
                });
            }
            vocabs.push(Vocab::from_tokens(toks));
        }
        let output_vocab = vocabs.pop().unwrap();
        let input_vocab = vocabs.pop().unwrap();
        specs.push(DomainSpec {
            name,
            input_vocab,
            output_vocab,
        });
    }

    let digest = r.kv("vocab_sha256")?.to_string();
    if digest != vocab_digest(&specs) {
        return Err(TrainError::VocabHash);
    }

    let mut model = Model::build(arch, specs, hidden, emb)?;
    let raw = r.kv("params")?;
    let n_params: usize = r.parse(raw, "param count")?;
    if n_params != model.params.len() {
        return Err(TrainError::Checkpoint {
            line: r.n,
            detail: format!(
                "expected {} parameters for this architecture, file has {n_params}",
                model.params.len()
            ),
        });
    }
    for _ in 0..n_params {
        let line = r.next("param")?;
        let rest = r.field(line, "param")?;
        let mut parts = rest.split(' ');
        let name = parts
            .next()
            .ok_or_else(|| TrainError::Checkpoint {
                line: r.n,
                detail: "missing parameter name".into(),
            })?
            .to_string();
        let rank: usize = r.parse(parts.next().unwrap_or(""), "rank")?;
        let shape: Vec<usize> = parts
            .map(|s| r.parse(s, "shape dimension"))
            .collect::<Result<_, _>>()?;
        if shape.len() != rank {
            return Err(TrainError::Checkpoint {
                line: r.n,
                detail: format!("rank {rank} with {} dimensions", shape.len()),
            });
        }
        let data_line = r.next("parameter data")?;
        let data: Vec<f64> = data_line
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(|s| r.parse(s, "value"))
            .collect::<Result<_, _>>()?;
        let target = model.params.get_mut(&name).map_err(ArchError::from)?;
        if target.shape() != shape.as_slice() || target.numel() != data.len() {
            return Err(TrainError::Checkpoint {
                line: r.n,
                detail: format!(
                    "parameter {name} has shape {:?} in the model, {:?} with {} values in the file",
                    target.shape(),
                    shape,
                    data.len()
                ),
            });
        }
        target.data_mut().copy_from_slice(&data);
    }
    let last = r.next("end")?;
    if last != "end" {
        return Err(TrainError::Checkpoint {
            line: r.n,
            detail: format!("expected trailer, got {last:?}"),
        });
    }
    Ok((
        model,
        CheckpointMeta {
            seed,
            fraction,
            beam,
            epochs,
            max_len,
        },
    ))
}
