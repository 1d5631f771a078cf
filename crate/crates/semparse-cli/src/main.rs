//! `semparse` — generate synthetic multi-domain semantic-parsing data,
//! train sequence-to-sequence parsers in six parameter-sharing
//! configurations, and evaluate them by executing predicted logical forms
//! against their knowledge bases.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semparse::harness::{
    cmd_ablate_constants, cmd_analyze, cmd_count_params, cmd_evaluate,
    cmd_generate, cmd_learning_curve, cmd_train, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "semparse",
    version,
    about = "Multi-domain semantic parsing experiments",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct Common {
    /// Directory holding (or receiving) `<domain>.{train,test,kb}.tsv`.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Directory receiving checkpoints, CSVs, and the config snapshot.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Base RNG seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Hyperparameter preset: `full` (full scale) or `desk` (minutes).
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Training-set fraction for single-run commands.
    #[arg(long, default_value_t = 1.0)]
    fraction: f64,
    /// Beam size override (preset default: 5).
    #[arg(long)]
    beam: Option<usize>,
    /// Epoch-count override (preset default: 30).
    #[arg(long)]
    epochs: Option<usize>,
    /// Hidden-size override.
    #[arg(long)]
    hidden: Option<usize>,
    /// Embedding-size override.
    #[arg(long)]
    emb: Option<usize>,
    /// Base learning-rate override.
    #[arg(long)]
    lr0: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic domains' train/test TSVs and knowledge bases.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Domains to generate (default: housing calendar restaurants).
        #[arg(long, num_args = 1..)]
        domains: Vec<String>,
        /// Training examples per domain.
        #[arg(long, default_value_t = semparse::corpus::TRAIN_PER_DOMAIN)]
        train_per_domain: usize,
        /// Test examples per domain.
        #[arg(long, default_value_t = semparse::corpus::TEST_PER_DOMAIN)]
        test_per_domain: usize,
    },
    /// Train one architecture and write a checkpoint plus loss log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Architecture: indep | one2one | inputtoken | domainencoding |
        /// one2many | many2many.
        #[arg(long)]
        arch: String,
    },
    /// Evaluate a checkpoint on the test split (denotation accuracy).
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file produced by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train/evaluate over a grid of architectures, fractions, and seeds.
    LearningCurve {
        #[command(flatten)]
        common: Common,
        /// Training fractions (default 0.1 0.2 0.5 1.0).
        #[arg(long, num_args = 1..)]
        fractions: Vec<f64>,
        /// Explicit seed list (default: five seeds from --seed).
        #[arg(long, num_args = 1..)]
        seeds: Vec<u64>,
        /// Architectures to sweep (default: all six).
        #[arg(long = "archs", num_args = 1..)]
        archs: Vec<String>,
    },
    /// Retrain after renaming every KB constant apart per domain and emit
    /// paired original/renamed/baseline rows.
    AblateConstants {
        #[command(flatten)]
        common: Common,
        /// Shared architecture under ablation (default domainencoding).
        #[arg(long)]
        arch: Option<String>,
        /// Explicit seed list (default: five seeds from --seed).
        #[arg(long, num_args = 1..)]
        seeds: Vec<u64>,
    },
    /// Correlate domain training size with the shared model's improvement
    /// and tally structural error categories on a dev split.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Shared architecture to compare against indep (default
        /// domainencoding).
        #[arg(long)]
        arch: Option<String>,
    },
    /// Audit parameter counts for each architecture on the given data.
    CountParams {
        #[command(flatten)]
        common: Common,
        /// Architectures to include (default: all six).
        #[arg(long = "archs", num_args = 1..)]
        archs: Vec<String>,
    },
}

fn base_config(command: &str, common: &Common) -> RunConfig {
    let mut config = RunConfig::new(command, &common.data_dir, &common.out_dir);
    config.seed = common.seed;
    config.preset = common.preset.clone();
    config.fraction = common.fraction;
    config.beam = common.beam;
    config.epochs = common.epochs;
    config.hidden = common.hidden;
    config.emb = common.emb;
    config.lr0 = common.lr0;
    config
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            common,
            domains,
            train_per_domain,
            test_per_domain,
        } => {
            let mut config = base_config("generate", &common);
            config.domains = domains;
            config.train_per_domain = train_per_domain;
            config.test_per_domain = test_per_domain;
            let corpus = cmd_generate(&config)?;
            for d in &corpus.domains {
                println!(
                    "{}: {} train, {} test, {} KB triples",
                    d.name,
                    d.train.len(),
                    d.test.len(),
                    d.kb.triples().len()
                );
            }
            println!("wrote {}", config.data_dir.display());
        }
        Command::Train { common, arch } => {
            let mut config = base_config("train", &common);
            config.arch = Some(arch);
            let outcome = cmd_train(&config)?;
            println!(
                "trained {} ({} parameters), checkpoint {}",
                outcome.model.arch.name(),
                outcome.model.count_parameters(),
                outcome.checkpoint.display()
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let mut config = base_config("evaluate", &common);
            config.checkpoint = Some(checkpoint);
            let report = cmd_evaluate(&config)?;
            for d in &report.domains {
                println!(
                    "{}: accuracy {:.3} ({} test, {} inexecutable)",
                    d.domain, d.accuracy, d.n_test, d.n_exec_error
                );
            }
            println!("average: {:.3}", report.average);
            println!("metrics: {}", config.out_dir.join("metrics.csv").display());
        }
        Command::LearningCurve {
            common,
            fractions,
            seeds,
            archs,
        } => {
            let mut config = base_config("learning-curve", &common);
            if !fractions.is_empty() {
                config.fractions = fractions;
            }
            config.seeds = seeds;
            config.archs = archs;
            let cells = cmd_learning_curve(&config)?;
            println!(
                "{} runs written to {}",
                cells.len(),
                config.out_dir.join("learning_curve.csv").display()
            );
        }
        Command::AblateConstants {
            common,
            arch,
            seeds,
        } => {
            let mut config = base_config("ablate-constants", &common);
            config.arch = arch;
            config.seeds = seeds;
            let runs = cmd_ablate_constants(&config)?;
            for run in &runs {
                println!(
                    "{} {} seed {}: average {:.3}",
                    run.label,
                    run.arch.name(),
                    run.seed,
                    run.report.average
                );
            }
            println!(
                "rows written to {}",
                config.out_dir.join("ablation.csv").display()
            );
        }
        Command::Analyze { common, arch } => {
            let mut config = base_config("analyze", &common);
            config.arch = arch;
            let analysis = cmd_analyze(&config)?;
            for (domain, n) in &analysis.train_sizes {
                println!("{domain}: {n} training examples");
            }
            for (domain, v) in &analysis.improvements {
                println!("{domain}: improvement {v:+.3}");
            }
            match &analysis.rho {
                Ok(v) => println!("spearman rho: {v:.3}"),
                Err(msg) => println!("spearman rho unavailable: {msg}"),
            }
            println!(
                "details in {}",
                config.out_dir.join("analysis.csv").display()
            );
        }
        Command::CountParams { common, archs } => {
            let mut config = base_config("count-params", &common);
            config.archs = archs;
            let rows = cmd_count_params(&config)?;
            for (arch, n) in &rows {
                println!("{}: {} parameters", arch.name(), n);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
