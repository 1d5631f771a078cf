//! Experiment commands: dataset generation, training, evaluation, learning
//! curves, the constant-renaming ablation, transfer analysis, and parameter
//! audits.
//!
//! Every command is a pure function of its [`RunConfig`]: given the same
//! config (and therefore the same seeds) it writes byte-identical artifacts.
//! Multi-run commands fan independent runs out to a worker pool whose size
//! comes from the `SEMPARSE_WORKERS` environment variable; results are
//! written in a fixed order regardless of scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::{ArchError, Architecture, Model};
use crate::corpus::{self, Corpus, CorpusError};
use crate::decode::{self, DecodeError, ErrorCategory, EvalReport, Predictor};
use crate::grammar::{builtin_domains, DomainGrammar};
use crate::training::{
    self, domain_specs, train_model, CheckpointMeta, TrainConfig, TrainError,
};

/// Environment variable naming the worker-pool size for fan-out commands.
pub const WORKERS_ENV: &str = "SEMPARSE_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("unknown architecture {0:?} (expected one of indep, one2one, inputtoken, domainencoding, one2many, many2many)")]
    UnknownArchitecture(String),
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("unknown preset {0:?} (expected \"full\" or \"desk\")")]
    UnknownPreset(String),
    #[error("no data found under {0}")]
    MissingData(PathBuf),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("config serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error(
        "checkpoint/data mismatch: checkpoint vocabularies hash to \
         {checkpoint}, data to {data}"
    )]
    VocabMismatch { checkpoint: String, data: String },
}

// ── Configuration ──────────────────────────────────────────────────────────

/// Fully explicit description of one command invocation, persisted next to
/// the artifacts it produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    /// Architecture tag for single-architecture commands.
    pub arch: Option<String>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Base RNG seed; multi-seed commands use `seeds` instead.
    pub seed: u64,
    /// `"full"` (full-scale defaults) or `"desk"` (minutes-scale).
    pub preset: String,
    /// Training-set fraction for single-run commands.
    pub fraction: f64,
    /// Fraction grid for the learning-curve command.
    pub fractions: Vec<f64>,
    /// Seeds for multi-seed commands; empty means `seed..seed+5`.
    pub seeds: Vec<u64>,
    /// Domains to generate; empty means the built-in set.
    pub domains: Vec<String>,
    /// Architectures for grid commands; empty means all six.
    pub archs: Vec<String>,
    /// Examples per domain written by `generate`.
    pub train_per_domain: usize,
    pub test_per_domain: usize,
    /// Optional overrides of the preset's training hyperparameters.
    pub epochs: Option<usize>,
    pub beam: Option<usize>,
    pub hidden: Option<usize>,
    pub emb: Option<usize>,
    pub lr0: Option<f64>,
    /// Checkpoint consumed by `evaluate`.
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: &str, data_dir: &Path, out_dir: &Path) -> RunConfig {
        RunConfig {
            command: command.to_string(),
            arch: None,
            data_dir: data_dir.to_path_buf(),
            out_dir: out_dir.to_path_buf(),
            seed: 1,
            preset: "desk".into(),
            fraction: 1.0,
            fractions: vec![0.1, 0.2, 0.5, 1.0],
            seeds: Vec::new(),
            domains: Vec::new(),
            archs: Vec::new(),
            train_per_domain: corpus::TRAIN_PER_DOMAIN,
            test_per_domain: corpus::TEST_PER_DOMAIN,
            epochs: None,
            beam: None,
            hidden: None,
            emb: None,
            lr0: None,
            checkpoint: None,
        }
    }

    /// The preset plus any explicit overrides, bound to `seed`.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig, HarnessError> {
        let mut tc = match self.preset.as_str() {
            "full" => TrainConfig::full(seed),
            "desk" => TrainConfig::desk(seed),
            other => return Err(HarnessError::UnknownPreset(other.to_string())),
        };
        tc.fraction = self.fraction;
        if let Some(e) = self.epochs {
            tc.epochs = e;
        }
        if let Some(b) = self.beam {
            tc.beam = b;
        }
        if let Some(h) = self.hidden {
            tc.hidden = h;
        }
        if let Some(m) = self.emb {
            tc.emb = m;
        }
        if let Some(l) = self.lr0 {
            tc.lr0 = l;
        }
        Ok(tc)
    }

    /// Seeds for multi-seed commands: explicit list, or five consecutive
    /// seeds starting at `seed`.
    pub fn seed_list(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (self.seed..self.seed + 5).collect()
        } else {
            self.seeds.clone()
        }
    }

    /// Architectures for grid commands: explicit list or all six.
    pub fn arch_list(&self) -> Result<Vec<Architecture>, HarnessError> {
        if self.archs.is_empty() {
            return Ok(Architecture::ALL.to_vec());
        }
        self.archs.iter().map(|a| parse_arch(a)).collect()
    }

    pub fn single_arch(&self) -> Result<Architecture, HarnessError> {
        match &self.arch {
            Some(a) => parse_arch(a),
            None => Err(HarnessError::Config(
                "this command requires --arch".into(),
            )),
        }
    }

    /// Persist the resolved config next to the artifacts.
    pub fn snapshot(&self) -> Result<(), HarnessError> {
        fs::create_dir_all(&self.out_dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(self.out_dir.join("config.json"), text)?;
        Ok(())
    }
}

pub fn parse_arch(tag: &str) -> Result<Architecture, HarnessError> {
    Architecture::from_name(tag)
        .ok_or_else(|| HarnessError::UnknownArchitecture(tag.to_string()))
}

// ── Worker pool ────────────────────────────────────────────────────────────

/// Worker count: `SEMPARSE_WORKERS` if set and positive, else the number of
/// available CPUs.
pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                return n;
            }
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Run `jobs` through a dedicated pool, preserving input order in the
/// output regardless of scheduling.
pub fn run_jobs<I, O, F>(jobs: Vec<I>, f: F) -> Result<Vec<O>, HarnessError>
where
    I: Send + Sync,
    O: Send,
    F: Fn(&I) -> Result<O, HarnessError> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(&f).collect())
}

// ── CSV plumbing ───────────────────────────────────────────────────────────

pub const METRICS_HEADER: &str =
    "model,architecture,domain,fraction,seed,accuracy,n_test,param_count";

/// One metrics row; `domain` may be the synthetic `average` row.
#[allow(clippy::too_many_arguments)]
fn metrics_row(
    out: &mut String,
    model: &str,
    arch: &str,
    domain: &str,
    fraction: f64,
    seed: u64,
    accuracy: f64,
    n_test: usize,
    param_count: usize,
) {
    let _ = writeln!(
        out,
        "{model},{arch},{domain},{fraction},{seed},{accuracy},{n_test},{param_count}"
    );
}

/// Append a report's per-domain rows plus its average row.
fn report_rows(
    out: &mut String,
    model: &str,
    arch: &str,
    fraction: f64,
    seed: u64,
    report: &EvalReport,
) {
    for d in &report.domains {
        metrics_row(
            out,
            model,
            arch,
            &d.domain,
            fraction,
            seed,
            d.accuracy,
            d.n_test,
            report.param_count,
        );
    }
    let total_n: usize = report.domains.iter().map(|d| d.n_test).sum();
    metrics_row(
        out, model, arch, "average", fraction, seed, report.average, total_n,
        report.param_count,
    );
}

fn write_atomic(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

// ── generate ───────────────────────────────────────────────────────────────

fn selected_grammars(config: &RunConfig) -> Result<Vec<DomainGrammar>, HarnessError> {
    let all = builtin_domains();
    if config.domains.is_empty() {
        return Ok(all);
    }
    config
        .domains
        .iter()
        .map(|name| {
            all.iter()
                .find(|g| g.name == *name)
                .cloned()
                .ok_or_else(|| HarnessError::UnknownDomain(name.clone()))
        })
        .collect()
}

/// Generate the synthetic corpus and KBs into `data_dir`, plus a manifest
/// recording the seed and per-domain counts.
pub fn cmd_generate(config: &RunConfig) -> Result<Corpus, HarnessError> {
    if config.train_per_domain == 0 || config.test_per_domain == 0 {
        return Err(HarnessError::Config(
            "train/test counts must be positive".into(),
        ));
    }
    let grammars = selected_grammars(config)?;
    let domains = grammars
        .iter()
        .map(|g| {
            corpus::generate_domain(
                g,
                config.seed,
                config.train_per_domain,
                config.test_per_domain,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let corpus = Corpus { domains };
    corpus::write_dir(&corpus, &config.data_dir)?;

    #[derive(Serialize)]
    struct DomainEntry<'a> {
        name: &'a str,
        n_train: usize,
        n_test: usize,
        kb_triples: usize,
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        seed: u64,
        domains: Vec<DomainEntry<'a>>,
    }
    let manifest = Manifest {
        seed: config.seed,
        domains: corpus
            .domains
            .iter()
            .map(|d| DomainEntry {
                name: &d.name,
                n_train: d.train.len(),
                n_test: d.test.len(),
                kb_triples: d.kb.triples().len(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&config.data_dir.join("manifest.json"), &text)?;
    config.snapshot()?;
    Ok(corpus)
}

fn read_data(config: &RunConfig) -> Result<Corpus, HarnessError> {
    if !config.data_dir.is_dir() {
        return Err(HarnessError::MissingData(config.data_dir.clone()));
    }
    let corpus = corpus::read_dir(&config.data_dir)?;
    if corpus.domains.is_empty() {
        return Err(HarnessError::MissingData(config.data_dir.clone()));
    }
    Ok(corpus)
}

// ── train ──────────────────────────────────────────────────────────────────

/// Wall-clock-free description of a finished training run.
pub struct TrainOutcome {
    pub model: Model,
    pub meta: CheckpointMeta,
    pub checkpoint: PathBuf,
}

/// Subsample per the config's fraction, train, and persist the checkpoint,
/// the per-epoch loss log, and the config snapshot.
pub fn cmd_train(config: &RunConfig) -> Result<TrainOutcome, HarnessError> {
    let arch = config.single_arch()?;
    let tc = config.train_config(config.seed)?;
    let corpus = read_data(config)?;
    let sub = corpus::subsample(&corpus, tc.fraction, tc.seed)?;
    let (model, log) = train_model(arch, &sub, &tc)?;

    fs::create_dir_all(&config.out_dir)?;
    let mut loss_csv = String::from("epoch,rate,mean_loss\n");
    for row in &log {
        let _ = writeln!(loss_csv, "{},{},{}", row.epoch, row.rate, row.mean_loss);
    }
    write_atomic(&config.out_dir.join("loss.csv"), &loss_csv)?;

    let meta = CheckpointMeta {
        seed: tc.seed,
        fraction: tc.fraction,
        beam: tc.beam,
        epochs: tc.epochs,
        max_len: decode::default_max_len(&sub),
    };
    let checkpoint = config.out_dir.join("checkpoint.txt");
    training::save_checkpoint(&checkpoint, &model, &meta)?;
    config.snapshot()?;
    Ok(TrainOutcome {
        model,
        meta,
        checkpoint,
    })
}

// ── evaluate ───────────────────────────────────────────────────────────────

/// Load a checkpoint, verify it matches the data directory (the training
/// subsample's vocabularies must hash identically), evaluate on the test
/// split, and write the metrics CSV.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvalReport, HarnessError> {
    let path = config.checkpoint.clone().ok_or_else(|| {
        HarnessError::Config("evaluate requires a checkpoint path".into())
    })?;
    let (model, meta) = training::load_checkpoint(&path)?;
    let corpus = read_data(config)?;
    let sub = corpus::subsample(&corpus, meta.fraction, meta.seed)?;
    let data_specs = domain_specs(&sub);
    let data_digest = training::vocab_digest(&data_specs);
    let model_specs: Vec<_> = (0..model.k())
        .map(|d| crate::arch::DomainSpec {
            name: model.domains[d].name.clone(),
            input_vocab: model.domains[d].input_vocab.clone(),
            output_vocab: model.domains[d].output_vocab.clone(),
        })
        .collect();
    let model_digest = training::vocab_digest(&model_specs);
    if data_digest != model_digest {
        return Err(HarnessError::VocabMismatch {
            checkpoint: model_digest,
            data: data_digest,
        });
    }

    let beam = config.beam.unwrap_or(meta.beam);
    let predictor = Predictor::Beam {
        model: &model,
        beam,
        max_len: meta.max_len,
    };
    let report = decode::evaluate(&predictor, &corpus)?;

    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    report_rows(
        &mut csv,
        &label,
        model.arch.name(),
        meta.fraction,
        meta.seed,
        &report,
    );
    write_atomic(&config.out_dir.join("metrics.csv"), &csv)?;
    config.snapshot()?;
    Ok(report)
}

// ── learning curve ─────────────────────────────────────────────────────────

/// One grid cell of the learning-curve command.
#[derive(Debug, Clone)]
pub struct CurveCell {
    pub arch: Architecture,
    pub fraction: f64,
    pub seed: u64,
    pub report: EvalReport,
}

/// Train and evaluate in memory for a (architecture, fraction, seed) cell.
fn run_cell(
    corpus: &Corpus,
    config: &RunConfig,
    arch: Architecture,
    fraction: f64,
    seed: u64,
) -> Result<CurveCell, HarnessError> {
    let mut tc = config.train_config(seed)?;
    tc.fraction = fraction;
    let sub = corpus::subsample(corpus, fraction, seed)?;
    let (model, _log) = train_model(arch, &sub, &tc)?;
    let predictor = Predictor::Beam {
        model: &model,
        beam: tc.beam,
        max_len: decode::default_max_len(&sub),
    };
    let report = decode::evaluate(&predictor, corpus)?;
    Ok(CurveCell {
        arch,
        fraction,
        seed,
        report,
    })
}

/// The full (architecture × fraction × seed) grid: subsample → train →
/// evaluate each cell, then write one aggregated CSV.
pub fn cmd_learning_curve(config: &RunConfig) -> Result<Vec<CurveCell>, HarnessError> {
    if config.fractions.is_empty() {
        return Err(HarnessError::Config("fraction list is empty".into()));
    }
    let archs = config.arch_list()?;
    let corpus = read_data(config)?;
    let mut jobs = Vec::new();
    for &arch in &archs {
        for &fraction in &config.fractions {
            for &seed in &config.seed_list() {
                jobs.push((arch, fraction, seed));
            }
        }
    }
    let cells = run_jobs(jobs, |&(arch, fraction, seed)| {
        run_cell(&corpus, config, arch, fraction, seed)
    })?;

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for cell in &cells {
        report_rows(
            &mut csv,
            "learning-curve",
            cell.arch.name(),
            cell.fraction,
            cell.seed,
            &cell.report,
        );
    }
    write_atomic(&config.out_dir.join("learning_curve.csv"), &csv)?;
    config.snapshot()?;
    Ok(cells)
}

// ── constant-renaming ablation ─────────────────────────────────────────────

/// Rows produced by the ablation: per seed, the shared architecture on the
/// original corpus, the same on the renamed corpus, and the per-domain
/// baseline.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub label: &'static str,
    pub arch: Architecture,
    pub seed: u64,
    pub report: EvalReport,
}

/// Rename every KB constant with a domain suffix, retrain, and emit paired
/// rows (original vs renamed vs baseline) across the seed list.
pub fn cmd_ablate_constants(
    config: &RunConfig,
) -> Result<Vec<AblationRun>, HarnessError> {
    let shared = match &config.arch {
        Some(a) => parse_arch(a)?,
        None => Architecture::DomainEncoding,
    };
    let corpus = read_data(config)?;
    let renamed = corpus::rename_constants(&corpus)?;
    let mut jobs: Vec<(&'static str, Architecture, u64)> = Vec::new();
    for &seed in &config.seed_list() {
        jobs.push(("original", shared, seed));
        jobs.push(("renamed", shared, seed));
        jobs.push(("baseline", Architecture::Indep, seed));
    }
    let runs = run_jobs(jobs, |&(label, arch, seed)| {
        let data = if label == "renamed" { &renamed } else { &corpus };
        let mut tc = config.train_config(seed)?;
        tc.fraction = config.fraction;
        let sub = corpus::subsample(data, tc.fraction, tc.seed)?;
        let (model, _) = train_model(arch, &sub, &tc)?;
        let predictor = Predictor::Beam {
            model: &model,
            beam: tc.beam,
            max_len: decode::default_max_len(&sub),
        };
        let report = decode::evaluate(&predictor, data)?;
        Ok(AblationRun {
            label,
            arch,
            seed,
            report,
        })
    })?;

    let mut csv = String::from(METRICS_HEADER);
    csv.push('\n');
    for run in &runs {
        report_rows(
            &mut csv,
            run.label,
            run.arch.name(),
            config.fraction,
            run.seed,
            &run.report,
        );
    }
    write_atomic(&config.out_dir.join("ablation.csv"), &csv)?;
    config.snapshot()?;
    Ok(runs)
}

// ── analysis ───────────────────────────────────────────────────────────────

/// Outputs of the transfer analysis: training-size/improvement correlation
/// plus structural error tallies on a held-out development split.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub train_sizes: Vec<(String, usize)>,
    pub accuracies: Vec<(String, String, f64)>,
    pub improvements: Vec<(String, f64)>,
    pub rho: Result<f64, String>,
    pub dev_errors: Vec<(String, ErrorCategory, usize)>,
}

/// Carve a development split out of a training list: every fifth example
/// (in corpus order) is held out.
fn dev_split(
    train: &[corpus::Example],
) -> (Vec<corpus::Example>, Vec<corpus::Example>) {
    let mut rest = Vec::new();
    let mut dev = Vec::new();
    for (i, ex) in train.iter().enumerate() {
        if i % 5 == 0 {
            dev.push(ex.clone());
        } else {
            rest.push(ex.clone());
        }
    }
    (rest, dev)
}

/// Compare the per-domain baseline against a shared architecture across
/// domains of deliberately different sizes: correlate training-set size
/// with the accuracy improvement, and tally structural error categories on
/// the development split.
pub fn cmd_analyze(config: &RunConfig) -> Result<Analysis, HarnessError> {
    let shared = match &config.arch {
        Some(a) => parse_arch(a)?,
        None => Architecture::DomainEncoding,
    };
    let corpus = read_data(config)?;
    let k = corpus.domains.len();
    // Unequal training sizes: domain i keeps (i+1)/k of its examples.
    let fractions: Vec<f64> = (0..k).map(|i| (i + 1) as f64 / k as f64).collect();
    let sized = corpus::subsample_per_domain(&corpus, &fractions, config.seed)?;

    // Hold out a dev split from each domain's (resized) training set.
    let mut train_domains = Vec::with_capacity(k);
    let mut dev_domains = Vec::with_capacity(k);
    for d in &sized.domains {
        let (rest, dev) = dev_split(&d.train);
        train_domains.push(corpus::DomainData {
            name: d.name.clone(),
            kb: d.kb.clone(),
            train: rest,
            test: d.test.clone(),
        });
        dev_domains.push(dev);
    }
    let train_corpus = Corpus {
        domains: train_domains,
    };

    let models = run_jobs(
        vec![Architecture::Indep, shared],
        |&arch| {
            let tc = config.train_config(config.seed)?;
            let (model, _) = train_model(arch, &train_corpus, &tc)?;
            Ok(model)
        },
    )?;

    let mut accuracies = Vec::new();
    let mut per_domain: Vec<Vec<f64>> = Vec::new();
    let mut dev_errors = Vec::new();
    let tc = config.train_config(config.seed)?;
    for model in &models {
        let predictor = Predictor::Beam {
            model,
            beam: tc.beam,
            max_len: decode::default_max_len(&train_corpus),
        };
        let report = decode::evaluate(&predictor, &train_corpus)?;
        per_domain.push(report.domains.iter().map(|d| d.accuracy).collect());
        for d in &report.domains {
            accuracies.push((
                model.arch.name().to_string(),
                d.domain.clone(),
                d.accuracy,
            ));
        }
        // Dev-split error categories: evaluate the same model against the
        // dev examples as a temporary test set.
        let dev_corpus = Corpus {
            domains: train_corpus
                .domains
                .iter()
                .zip(&dev_domains)
                .map(|(d, dev)| corpus::DomainData {
                    name: d.name.clone(),
                    kb: d.kb.clone(),
                    train: d.train.clone(),
                    test: dev.clone(),
                })
                .collect(),
        };
        let dev_report = decode::evaluate(&predictor, &dev_corpus)?;
        for (cat, n) in &dev_report.categories {
            dev_errors.push((model.arch.name().to_string(), *cat, *n));
        }
    }

    let train_sizes: Vec<(String, usize)> = train_corpus
        .domains
        .iter()
        .map(|d| (d.name.clone(), d.train.len()))
        .collect();
    let improvements: Vec<(String, f64)> = (0..k)
        .map(|i| {
            (
                train_corpus.domains[i].name.clone(),
                per_domain[1][i] - per_domain[0][i],
            )
        })
        .collect();
    let sizes_f: Vec<f64> = train_sizes.iter().map(|(_, n)| *n as f64).collect();
    let improv_f: Vec<f64> = improvements.iter().map(|(_, v)| *v).collect();
    let rho = decode::spearman_rho(&sizes_f, &improv_f).map_err(|e| e.to_string());

    let mut csv = String::from("record,model,key,value\n");
    for (domain, n) in &train_sizes {
        let _ = writeln!(csv, "train_size,,{domain},{n}");
    }
    for (model, domain, acc) in &accuracies {
        let _ = writeln!(csv, "test_accuracy,{model},{domain},{acc}");
    }
    for (domain, v) in &improvements {
        let _ = writeln!(csv, "improvement,,{domain},{v}");
    }
    match &rho {
        Ok(v) => {
            let _ = writeln!(csv, "spearman_rho,,,{v}");
        }
        Err(msg) => {
            let _ = writeln!(csv, "spearman_error,,{msg},");
        }
    }
    for (model, cat, n) in &dev_errors {
        let _ = writeln!(csv, "dev_error,{model},{},{n}", cat.name());
    }
    write_atomic(&config.out_dir.join("analysis.csv"), &csv)?;
    config.snapshot()?;
    Ok(Analysis {
        train_sizes,
        accuracies,
        improvements,
        rho,
        dev_errors,
    })
}

// ── parameter audit ────────────────────────────────────────────────────────

/// Parameter counts for every architecture over the data directory's
/// vocabularies at the configured width.
pub fn cmd_count_params(
    config: &RunConfig,
) -> Result<Vec<(Architecture, usize)>, HarnessError> {
    let corpus = read_data(config)?;
    let tc = config.train_config(config.seed)?;
    let mut rows = Vec::new();
    for &arch in &config.arch_list()? {
        let model = Model::build(arch, domain_specs(&corpus), tc.hidden, tc.emb)?;
        rows.push((arch, model.count_parameters()));
    }
    let mut csv = String::from("architecture,hidden,emb,param_count\n");
    for (arch, n) in &rows {
        let _ = writeln!(csv, "{},{},{},{n}", arch.name(), tc.hidden, tc.emb);
    }
    write_atomic(&config.out_dir.join("params.csv"), &csv)?;
    config.snapshot()?;
    Ok(rows)
}
