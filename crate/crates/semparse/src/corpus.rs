//! Datasets: generation, disk format, vocabularies and transformations.
//!
//! A corpus is a list of domains; each domain owns a knowledge base and a
//! train/test split of (utterance, logical form) pairs. On disk a corpus is
//! a directory of `<domain>.train.tsv`, `<domain>.test.tsv` and
//! `<domain>.kb.tsv` files; dataset rows are
//! `utterance<TAB>logical form`, both sides space-separated token
//! sequences.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::grammar::{domain_seed, DomainGrammar};
use crate::logic::{parse_lf, print_lf, Kb, KbFormatError, LogicalForm, PropExpr, TYPE_PROP};
use crate::vocab::Vocab;

pub const TRAIN_PER_DOMAIN: usize = 200;
pub const TEST_PER_DOMAIN: usize = 100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}: {source}")]
    KbFormat {
        file: String,
        source: KbFormatError,
    },
    #[error("{file} line {line}: expected 2 tab-separated fields, got {got}")]
    BadRow {
        file: String,
        line: usize,
        got: usize,
    },
    #[error("{file} line {line}: empty side")]
    EmptyRow { file: String, line: usize },
    #[error("domain {domain:?}: need {need} distinct examples, generated {have}")]
    InsufficientExamples {
        domain: String,
        need: usize,
        have: usize,
    },
    #[error("domain {domain:?}: logical form does not parse: {detail}")]
    BadLogicalForm { domain: String, detail: String },
    #[error("constant {token:?} is already renamed")]
    AlreadyRenamed { token: String },
    #[error("no domains found in {dir}")]
    EmptyCorpus { dir: String },
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("expected {expected} fractions, got {got}")]
    FractionCount { expected: usize, got: usize },
}

/// One supervised pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub utterance: Vec<String>,
    pub lf: Vec<String>,
}

impl Example {
    pub fn new(utterance: Vec<String>, lf: Vec<String>) -> Example {
        Example { utterance, lf }
    }
}

/// A domain's KB and split data.
#[derive(Debug, Clone)]
pub struct DomainData {
    pub name: String,
    pub kb: Kb,
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

/// A multi-domain dataset, domains in a fixed order.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub domains: Vec<DomainData>,
}

impl Corpus {
    pub fn domain(&self, name: &str) -> Option<&DomainData> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    /// Longest training logical form (in tokens) over all domains.
    pub fn max_train_lf_len(&self) -> usize {
        self.domains
            .iter()
            .flat_map(|d| d.train.iter())
            .map(|e| e.lf.len())
            .max()
            .unwrap_or(0)
    }
}

// ── Generation ─────────────────────────────────────────────────────────────

/// Generate one domain: enumerate candidates, deduplicate by utterance,
/// shuffle with the domain's seed stream and split.
pub fn generate_domain(
    grammar: &DomainGrammar,
    seed: u64,
    n_train: usize,
    n_test: usize,
) -> Result<DomainData, CorpusError> {
    let kb = grammar.generate_kb(seed);
    let mut seen = BTreeSet::new();
    let mut pool: Vec<Example> = Vec::new();
    for c in grammar.candidates(&kb) {
        let key = c.utterance.join(" ");
        if seen.insert(key) {
            pool.push(Example::new(c.utterance, c.lf));
        }
    }
    let need = n_train + n_test;
    if pool.len() < need {
        return Err(CorpusError::InsufficientExamples {
            domain: grammar.name.clone(),
            need,
            have: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(domain_seed(seed.wrapping_add(1), &grammar.name));
    pool.shuffle(&mut rng);
    pool.truncate(need);
    let test = pool.split_off(n_train);
    Ok(DomainData {
        name: grammar.name.clone(),
        kb,
        train: pool,
        test,
    })
}

/// Generate a corpus over the given grammars with the standard split sizes.
pub fn generate(grammars: &[DomainGrammar], seed: u64) -> Result<Corpus, CorpusError> {
    let domains = grammars
        .iter()
        .map(|g| generate_domain(g, seed, TRAIN_PER_DOMAIN, TEST_PER_DOMAIN))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Corpus { domains })
}

// ── Disk format ────────────────────────────────────────────────────────────

fn rows_to_tsv(examples: &[Example]) -> String {
    let mut out = String::new();
    for e in examples {
        out.push_str(&e.utterance.join(" "));
        out.push('\t');
        out.push_str(&e.lf.join(" "));
        out.push('\n');
    }
    out
}

fn rows_from_tsv(text: &str, file: &str) -> Result<Vec<Example>, CorpusError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 2 {
            return Err(CorpusError::BadRow {
                file: file.to_string(),
                line,
                got: fields.len(),
            });
        }
        let utterance: Vec<String> = fields[0].split_whitespace().map(String::from).collect();
        let lf: Vec<String> = fields[1].split_whitespace().map(String::from).collect();
        if utterance.is_empty() || lf.is_empty() {
            return Err(CorpusError::EmptyRow {
                file: file.to_string(),
                line,
            });
        }
        out.push(Example::new(utterance, lf));
    }
    Ok(out)
}

/// Write `<domain>.train.tsv`, `<domain>.test.tsv` and `<domain>.kb.tsv`
/// for every domain. Creates the directory if needed.
pub fn write_dir(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    for d in &corpus.domains {
        fs::write(dir.join(format!("{}.train.tsv", d.name)), rows_to_tsv(&d.train))?;
        fs::write(dir.join(format!("{}.test.tsv", d.name)), rows_to_tsv(&d.test))?;
        fs::write(dir.join(format!("{}.kb.tsv", d.name)), d.kb.to_tsv())?;
    }
    Ok(())
}

/// Read every domain in the directory (discovered via `*.kb.tsv`, sorted
/// by name).
pub fn read_dir(dir: &Path) -> Result<Corpus, CorpusError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let fname = entry.file_name();
        let fname = fname.to_string_lossy();
        if let Some(stem) = fname.strip_suffix(".kb.tsv") {
            names.push(stem.to_string());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            dir: dir.display().to_string(),
        });
    }
    let mut domains = Vec::new();
    for name in names {
        let kb_file = format!("{name}.kb.tsv");
        let kb_text = fs::read_to_string(dir.join(&kb_file))?;
        let kb = Kb::from_tsv(&kb_text).map_err(|source| CorpusError::KbFormat {
            file: kb_file,
            source,
        })?;
        let train_file = format!("{name}.train.tsv");
        let train = rows_from_tsv(&fs::read_to_string(dir.join(&train_file))?, &train_file)?;
        let test_file = format!("{name}.test.tsv");
        let test = rows_from_tsv(&fs::read_to_string(dir.join(&test_file))?, &test_file)?;
        domains.push(DomainData {
            name,
            kb,
            train,
            test,
        });
    }
    Ok(Corpus { domains })
}

// ── Vocabularies ───────────────────────────────────────────────────────────

/// Input vocabulary of a domain: words occurring at least twice in training
/// utterances, sorted, behind the unknown-word entry. Rarer words fall back
/// to the unknown embedding but keep their surface form for copying.
pub fn input_vocab(train: &[Example]) -> Vocab {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for e in train {
        for w in &e.utterance {
            *freq.entry(w).or_default() += 1;
        }
    }
    Vocab::input_vocab(
        freq.iter()
            .filter(|(_, &n)| n >= 2)
            .map(|(w, _)| w.to_string()),
    )
}

/// Output vocabulary of a domain: every token of the training logical
/// forms, sorted, behind the sequence-end and unknown entries.
pub fn output_vocab(train: &[Example]) -> Vocab {
    let tokens: BTreeSet<&String> = train.iter().flat_map(|e| e.lf.iter()).collect();
    Vocab::output_vocab(tokens.into_iter().cloned())
}

// ── Transformations ────────────────────────────────────────────────────────

/// Keep a seeded random `fraction` of each domain's training examples
/// (at least one). Test splits and KBs are untouched.
pub fn subsample(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    let fractions = vec![fraction; corpus.domains.len()];
    subsample_per_domain(corpus, &fractions, seed)
}

/// Like [`subsample`] with one fraction per domain, in corpus order.
pub fn subsample_per_domain(
    corpus: &Corpus,
    fractions: &[f64],
    seed: u64,
) -> Result<Corpus, CorpusError> {
    if fractions.len() != corpus.domains.len() {
        return Err(CorpusError::FractionCount {
            expected: corpus.domains.len(),
            got: fractions.len(),
        });
    }
    for &f in fractions {
        if !(f > 0.0 && f <= 1.0) {
            return Err(CorpusError::BadFraction(f));
        }
    }
    let mut domains = Vec::with_capacity(corpus.domains.len());
    for (d, &f) in corpus.domains.iter().zip(fractions) {
        let mut train = d.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(domain_seed(seed, &d.name));
        train.shuffle(&mut rng);
        let keep = ((train.len() as f64) * f).ceil().max(1.0) as usize;
        train.truncate(keep.min(d.train.len()));
        domains.push(DomainData {
            name: d.name.clone(),
            kb: d.kb.clone(),
            train,
            test: d.test.clone(),
        });
    }
    Ok(Corpus { domains })
}

/// Append `@k` (1-based domain index) to every constant — type names,
/// property names and entities — in each domain's logical forms and KB.
/// Utterances, numbers, variables and operators are untouched, so after
/// renaming no constant is shared between domains. Renaming twice is an
/// error.
pub fn rename_constants(corpus: &Corpus) -> Result<Corpus, CorpusError> {
    let mut domains = Vec::with_capacity(corpus.domains.len());
    for (i, d) in corpus.domains.iter().enumerate() {
        let tag = i + 1;
        let rename = |c: &str| -> Result<String, CorpusError> {
            if c.contains('@') {
                return Err(CorpusError::AlreadyRenamed {
                    token: c.to_string(),
                });
            }
            Ok(format!("{c}@{tag}"))
        };

        let mut kb = Kb::new();
        for t in d.kb.triples() {
            let subject = rename(&t.subject)?;
            if t.property == TYPE_PROP {
                let label = match &t.object {
                    crate::logic::Obj::Entity(l) => crate::logic::Obj::Entity(rename(l)?),
                    n => n.clone(),
                };
                kb.add(&subject, TYPE_PROP, label);
            } else {
                let property = rename(&t.property)?;
                let object = match &t.object {
                    crate::logic::Obj::Entity(e) => crate::logic::Obj::Entity(rename(e)?),
                    n => n.clone(),
                };
                kb.add(&subject, &property, object);
            }
        }

        let rename_split = |examples: &[Example]| -> Result<Vec<Example>, CorpusError> {
            examples
                .iter()
                .map(|e| {
                    let lf = parse_lf(&e.lf).map_err(|err| CorpusError::BadLogicalForm {
                        domain: d.name.clone(),
                        detail: err.to_string(),
                    })?;
                    let lf = rename_lf(&lf, &rename)?;
                    Ok(Example::new(e.utterance.clone(), print_lf(&lf)))
                })
                .collect()
        };

        domains.push(DomainData {
            name: d.name.clone(),
            kb,
            train: rename_split(&d.train)?,
            test: rename_split(&d.test)?,
        });
    }
    Ok(Corpus { domains })
}

fn rename_lf<F>(lf: &LogicalForm, rename: &F) -> Result<LogicalForm, CorpusError>
where
    F: Fn(&str) -> Result<String, CorpusError>,
{
    Ok(match lf {
        LogicalForm::TypeFilter(t) => LogicalForm::TypeFilter(rename(t)?),
        LogicalForm::Intersect(a, b) => LogicalForm::Intersect(
            Box::new(rename_lf(a, rename)?),
            Box::new(rename_lf(b, rename)?),
        ),
        LogicalForm::Join(p, v) => LogicalForm::Join(
            rename_prop(p, rename)?,
            match v {
                crate::logic::JoinValue::Set(s) => {
                    crate::logic::JoinValue::Set(Box::new(rename_lf(s, rename)?))
                }
                cmp => cmp.clone(),
            },
        ),
        LogicalForm::Superlative { max, set, degree } => LogicalForm::Superlative {
            max: *max,
            set: Box::new(rename_lf(set, rename)?),
            degree: rename_prop(degree, rename)?,
        },
        LogicalForm::Count(s) => LogicalForm::Count(Box::new(rename_lf(s, rename)?)),
        LogicalForm::Entity(e) => LogicalForm::Entity(rename(e)?),
        LogicalForm::Number(n) => LogicalForm::Number(*n),
        LogicalForm::Var(v) => LogicalForm::Var(v.clone()),
    })
}

fn rename_prop<F>(prop: &PropExpr, rename: &F) -> Result<PropExpr, CorpusError>
where
    F: Fn(&str) -> Result<String, CorpusError>,
{
    Ok(match prop {
        PropExpr::Named(p) => PropExpr::Named(rename(p)?),
        PropExpr::Reverse(inner) => PropExpr::Reverse(Box::new(rename_prop(inner, rename)?)),
        PropExpr::ReverseLambda(var, body) => {
            PropExpr::ReverseLambda(var.clone(), Box::new(rename_lf(body, rename)?))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::builtin_domains;
    use crate::logic::{denotation_equal, execute_tokens, parse_number_token};

    fn tiny_corpus(seed: u64) -> Corpus {
        generate(&builtin_domains(), seed).expect("builtin corpus generates")
    }

    #[test]
    fn generation_meets_split_sizes_and_is_deterministic() {
        let a = tiny_corpus(42);
        assert_eq!(a.domains.len(), 3);
        for d in &a.domains {
            assert_eq!(d.train.len(), TRAIN_PER_DOMAIN);
            assert_eq!(d.test.len(), TEST_PER_DOMAIN);
        }
        let b = tiny_corpus(42);
        for (x, y) in a.domains.iter().zip(&b.domains) {
            assert_eq!(x.train, y.train);
            assert_eq!(x.test, y.test);
        }
        let c = tiny_corpus(43);
        assert!(
            a.domains[0].train != c.domains[0].train,
            "different seeds give different splits"
        );
    }

    #[test]
    fn no_utterance_appears_twice_within_a_domain() {
        let corpus = tiny_corpus(1);
        for d in &corpus.domains {
            let mut seen = BTreeSet::new();
            for e in d.train.iter().chain(&d.test) {
                assert!(
                    seen.insert(e.utterance.join(" ")),
                    "duplicate: {:?}",
                    e.utterance
                );
            }
        }
    }

    #[test]
    fn every_gold_form_executes_on_its_kb() {
        let corpus = tiny_corpus(9);
        for d in &corpus.domains {
            for e in d.train.iter().chain(&d.test) {
                execute_tokens(&e.lf, &d.kb).expect("gold executes");
            }
        }
    }

    #[test]
    fn round_trip_through_directory_preserves_everything() {
        let corpus = tiny_corpus(5);
        let dir = tempfile::tempdir().unwrap();
        write_dir(&corpus, dir.path()).unwrap();
        let back = read_dir(dir.path()).unwrap();
        assert_eq!(back.domain_names(), vec!["calendar", "housing", "restaurants"]);
        for d in &corpus.domains {
            let r = back.domain(&d.name).unwrap();
            assert_eq!(d.train, r.train);
            assert_eq!(d.test, r.test);
            assert_eq!(d.kb.to_tsv(), r.kb.to_tsv());
        }
    }

    #[test]
    fn input_vocab_drops_words_seen_once() {
        let train = vec![
            Example::new(
                ["which", "units", "have", "tenant", "alice"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                vec!["Type".into()],
            ),
            Example::new(
                ["which", "units", "have", "tenant", "bob"]
                    .iter()
                    .map(|s| s.to_string())
                    .collect(),
                vec!["Type".into()],
            ),
        ];
        let v = input_vocab(&train);
        assert!(v.contains("which") && v.contains("tenant"));
        assert!(!v.contains("alice") && !v.contains("bob"));
        assert_eq!(Some(v.id_or_unk("alice")), v.unk_id());
    }

    #[test]
    fn output_vocab_covers_all_training_tokens() {
        let corpus = tiny_corpus(2);
        for d in &corpus.domains {
            let v = output_vocab(&d.train);
            for e in &d.train {
                for t in &e.lf {
                    assert!(v.contains(t), "{t:?} missing from output vocab");
                }
            }
        }
    }

    #[test]
    fn subsample_shrinks_train_only_and_nests_by_construction() {
        let corpus = tiny_corpus(3);
        let half = subsample(&corpus, 0.5, 17).unwrap();
        let quarter = subsample(&corpus, 0.25, 17).unwrap();
        for ((full, h), q) in corpus.domains.iter().zip(&half.domains).zip(&quarter.domains) {
            assert_eq!(h.train.len(), 100);
            assert_eq!(q.train.len(), 50);
            assert_eq!(h.test, full.test);
            // same seed means the shuffles agree, so smaller is a prefix
            assert_eq!(&h.train[..50], &q.train[..]);
        }
        assert!(matches!(
            subsample(&corpus, 0.0, 1),
            Err(CorpusError::BadFraction(_))
        ));
        assert!(matches!(
            subsample(&corpus, 1.5, 1),
            Err(CorpusError::BadFraction(_))
        ));
    }

    #[test]
    fn per_domain_fractions_apply_in_order() {
        let corpus = tiny_corpus(3);
        let mixed = subsample_per_domain(&corpus, &[0.35, 0.7, 1.0], 9).unwrap();
        assert_eq!(mixed.domains[0].train.len(), 70);
        assert_eq!(mixed.domains[1].train.len(), 140);
        assert_eq!(mixed.domains[2].train.len(), 200);
        assert!(matches!(
            subsample_per_domain(&corpus, &[0.5], 9),
            Err(CorpusError::FractionCount { .. })
        ));
    }

    #[test]
    fn renaming_tags_constants_but_not_numbers_or_structure() {
        let corpus = tiny_corpus(7);
        let renamed = rename_constants(&corpus).unwrap();
        for (i, (orig, ren)) in corpus.domains.iter().zip(&renamed.domains).enumerate() {
            let tag = format!("@{}", i + 1);
            for (a, b) in orig.train.iter().zip(&ren.train) {
                assert_eq!(a.utterance, b.utterance, "utterances untouched");
                assert_eq!(a.lf.len(), b.lf.len(), "structure preserved");
                for (ta, tb) in a.lf.iter().zip(&b.lf) {
                    if parse_number_token(ta).is_some() || ta == tb {
                        assert_eq!(ta, tb);
                    } else {
                        assert_eq!(*tb, format!("{ta}{tag}"));
                    }
                }
            }
        }
        // renamed gold still executes on the renamed KB, same answer shape
        for (orig, ren) in corpus.domains.iter().zip(&renamed.domains) {
            for (a, b) in orig.test.iter().zip(&ren.test) {
                let da = execute_tokens(&a.lf, &orig.kb).unwrap();
                let db = execute_tokens(&b.lf, &ren.kb).unwrap();
                assert_eq!(da.len(), db.len());
                assert_eq!(da.is_empty(), db.is_empty());
                if let (crate::logic::Denotation::Number(x), crate::logic::Denotation::Number(y)) =
                    (&da, &db)
                {
                    assert!(denotation_equal(
                        &crate::logic::Denotation::Number(*x),
                        &crate::logic::Denotation::Number(*y)
                    ));
                }
            }
        }
    }

    #[test]
    fn renaming_twice_is_an_error() {
        let corpus = tiny_corpus(7);
        let once = rename_constants(&corpus).unwrap();
        assert!(matches!(
            rename_constants(&once),
            Err(CorpusError::AlreadyRenamed { .. })
        ));
    }

    #[test]
    fn renaming_disjoins_constants_across_domains() {
        let corpus = tiny_corpus(4);
        let shared_before = shared_lf_constants(&corpus);
        assert!(
            !shared_before.is_empty(),
            "people should recur across domains before renaming"
        );
        let renamed = rename_constants(&corpus).unwrap();
        assert!(shared_lf_constants(&renamed).is_empty());
    }

    /// Non-number, non-operator tokens appearing in ≥2 domains' forms.
    fn shared_lf_constants(corpus: &Corpus) -> BTreeSet<String> {
        let ops: BTreeSet<&str> = [
            "Type", ".", "⊓", "(", ")", ",", "R", "λ", "x", "argmax", "argmin", "count", "≤",
            "≥", "<", ">", "=",
        ]
        .into_iter()
        .collect();
        let mut by_domain: Vec<BTreeSet<String>> = Vec::new();
        for d in &corpus.domains {
            let mut set = BTreeSet::new();
            for e in d.train.iter().chain(&d.test) {
                for t in &e.lf {
                    if !ops.contains(t.as_str()) && parse_number_token(t).is_none() {
                        set.insert(t.clone());
                    }
                }
            }
            by_domain.push(set);
        }
        let mut shared = BTreeSet::new();
        for (i, a) in by_domain.iter().enumerate() {
            for b in by_domain.iter().skip(i + 1) {
                shared.extend(a.intersection(b).cloned());
            }
        }
        shared
    }
}
