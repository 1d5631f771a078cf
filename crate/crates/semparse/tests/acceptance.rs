//! Release gates: ten end-to-end checks covering gradients, decoding,
//! execution, parameter accounting, the training recipe, multi-domain
//! sharing, the constant-renaming ablation, and reproducibility.
//!
//! Each check prints one `criterion NN PASS/FAIL/SKIP` line (visible with
//! `cargo test --test acceptance -- --nocapture`); the test fails if any
//! gating criterion fails. Every tolerance is pinned as a constant below.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semparse::arch::{sized_specs, Architecture, DomainSpec, Model};
use semparse::corpus::{self, Corpus, DomainData, Example};
use semparse::decode::{
    beam_search, beam_search_masked, default_max_len, evaluate, exhaustive_decode, Predictor,
};
use semparse::grammar::builtin_domains;
use semparse::harness::{cmd_evaluate, cmd_generate, cmd_train, RunConfig};
use semparse::logic::{execute, parse_lf, parse_number_token, Denotation, Kb, Obj};
use semparse::seq2seq::{action_probabilities, Action};
use semparse::tensor::check::check_gradients;
use semparse::tensor::Params;
use semparse::training::{init_params, learning_rate, train_model, TrainConfig};
use semparse::vocab::{Vocab, EOS};

mod common;
use common::{median, oracle_eval, toks, OracleValue};

// ── Pinned tolerances and budgets ──────────────────────────────────────────

/// Criterion 1: worst relative gradient error allowed, and its time budget.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-4;
const GRAD_BUDGET_SECS: f64 = 120.0;
/// Criterion 2: distribution mass must be 1 within this.
const SUM_TOL: f64 = 1e-12;
const NORMALIZATION_CASES: usize = 1000;
/// Criterion 7: low-data margin (accuracy points) and total time budget.
const QUARTER_MARGIN: f64 = 0.02;
const GRID_BUDGET_SECS: f64 = 1800.0;
/// Criterion 8: renamed accuracy must sit within this band of unrenamed.
const ABLATION_BAND: f64 = 0.05;

fn spec(name: &str, input: &str, output: &str) -> DomainSpec {
    DomainSpec {
        name: name.into(),
        input_vocab: Vocab::input_vocab(toks(input)),
        output_vocab: Vocab::output_vocab(toks(output)),
    }
}

/// Two minimal domains whose gold sequences exercise both the write and the
/// copy route for the same token (`Size`/`800` appear in the utterance and
/// the output vocabulary).
fn tiny_specs() -> Vec<DomainSpec> {
    vec![
        spec("alpha", "which units Size 800", "Type . Size 800"),
        spec("beta", "which meetings Length 2", "Type . Length 2"),
    ]
}

fn tiny_cases() -> [(usize, Vec<String>, Vec<String>); 2] {
    [
        (0, toks("which units Size 800"), toks("Type . Size 800")),
        (1, toks("which meetings Length 2"), toks("Type . Length 2")),
    ]
}

fn with_params(model: &Model, params: &Params) -> Model {
    let mut m = model.clone();
    m.params = params.clone();
    m
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

// ── Criterion 1: gradient fidelity ─────────────────────────────────────────

fn c1_gradient_fidelity() -> Result<String, String> {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for arch in Architecture::ALL {
        let mut model = Model::build(arch, tiny_specs(), 8, 6)
            .map_err(|e| format!("build {}: {e}", arch.name()))?;
        init_params(&mut model.params, 0.5, 11);
        for (domain, utt, gold) in tiny_cases() {
            let loss_of = |p: &Params| -> f64 {
                let m = with_params(&model, p);
                let (session, loss) = m.example_nll(domain, &utt, &gold).expect("forward");
                session.tape.value(loss).item()
            };
            let grads_of = |p: &Params| {
                let m = with_params(&model, p);
                let (session, loss) = m.example_nll(domain, &utt, &gold).expect("forward");
                session.tape.backward(loss).expect("backward")
            };
            let report = check_gradients(&model.params, grads_of, loss_of, GRAD_STEP);
            compared += report.compared;
            worst = worst.max(report.max_rel_err);
            if report.max_rel_err >= GRAD_REL_TOL {
                return Err(format!(
                    "{} domain {domain}: max rel err {:.3e} at {:?} (tol {GRAD_REL_TOL:.0e})",
                    arch.name(),
                    report.max_rel_err,
                    report.worst
                ));
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    if secs >= GRAD_BUDGET_SECS {
        return Err(format!("took {secs:.1}s, budget {GRAD_BUDGET_SECS}s"));
    }
    Ok(format!(
        "max rel err {worst:.2e} over {compared} gradients, six architectures, two domains ({secs:.1}s)"
    ))
}

// ── Criterion 2: normalization and masking ─────────────────────────────────

fn c2_normalization() -> Result<String, String> {
    let models: Vec<Model> = Architecture::ALL
        .into_iter()
        .map(|arch| Model::build(arch, tiny_specs(), 8, 6).expect("build"))
        .collect();
    let words = ["which", "units", "Size", "800", "meetings", "Length", "2"];
    let feed = ["Type", ".", "Size", "800", "junk"];
    let mut beam_runs = 0usize;
    for case in 0..NORMALIZATION_CASES {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + case as u64);
        let mut model = models[case % models.len()].clone();
        init_params(&mut model.params, 0.5, 100 + case as u64);
        let domain = case % 2;
        let n = rng.gen_range(1..=5);
        let utt: Vec<String> = (0..n)
            .map(|_| words[rng.gen_range(0..words.len())].to_string())
            .collect();
        let mut session = model
            .session(domain, &utt)
            .map_err(|e| format!("case {case}: {e}"))?;
        let mut state = session.initial_state().map_err(|e| e.to_string())?;
        for _ in 0..rng.gen_range(0..=3usize) {
            let nodes = session.step(state).map_err(|e| e.to_string())?;
            let tok = feed[rng.gen_range(0..feed.len())];
            state = session
                .advance(state, tok, nodes.context)
                .map_err(|e| e.to_string())?;
        }
        let nodes = session.step(state).map_err(|e| e.to_string())?;

        let weights = session.tape.value(nodes.attention.weights).data().to_vec();
        let wsum: f64 = weights.iter().sum();
        if (wsum - 1.0).abs() > SUM_TOL || weights.iter().any(|w| *w < 0.0) {
            return Err(format!("case {case}: attention mass {wsum:.17}"));
        }

        let logits = session.tape.value(nodes.logits).data().to_vec();
        let n_write = session.n_write();
        let full = action_probabilities(&logits, n_write, None).map_err(|e| e.to_string())?;
        let fsum: f64 = full.probs.iter().sum();
        if (fsum - 1.0).abs() > SUM_TOL {
            return Err(format!("case {case}: unmasked mass {fsum:.17}"));
        }

        let eos = session.dec_vocab().eos_id().expect("eos present");
        let mask: Vec<bool> = (0..n_write).map(|w| w == eos || rng.gen_bool(0.5)).collect();
        let dist =
            action_probabilities(&logits, n_write, Some(&mask)).map_err(|e| e.to_string())?;
        let msum: f64 = dist.probs.iter().sum();
        if (msum - 1.0).abs() > SUM_TOL {
            return Err(format!("case {case}: masked mass {msum:.17}"));
        }
        for (w, allowed) in mask.iter().enumerate() {
            if !allowed && dist.probs[w] != 0.0 {
                return Err(format!(
                    "case {case}: masked write {w} has probability {}",
                    dist.probs[w]
                ));
            }
        }

        if case % 100 == 0 {
            drop(session);
            let hyps = beam_search_masked(&model, domain, &utt, 4, 4, Some(&mask))
                .map_err(|e| format!("case {case}: {e}"))?;
            for h in &hyps {
                for a in &h.actions {
                    if let Action::Write(w) = a {
                        if !mask[*w] {
                            return Err(format!("case {case}: masked write {w} in beam output"));
                        }
                    }
                }
            }
            beam_runs += 1;
        }
    }
    Ok(format!(
        "{NORMALIZATION_CASES} random cases: attention and action mass within {SUM_TOL:.0e}, masked writes exactly 0, {beam_runs} masked beam runs clean"
    ))
}

// ── Criterion 3: beam exactness on enumerable models ───────────────────────

fn c3_beam_oracle() -> Result<String, String> {
    let archs = [Architecture::Indep, Architecture::DomainEncoding];
    let mut exact = 0usize;
    for (ai, arch) in archs.into_iter().enumerate() {
        let mut model = Model::build(arch, tiny_specs(), 8, 6).map_err(|e| e.to_string())?;
        let utt = toks("units 800");
        // restrict writes to {<eos>, Type}: 2 writes + 2 copies = 4 actions
        let dec = model.dec_vocab(0).clone();
        let mut mask = vec![false; dec.len()];
        mask[dec.eos_id().expect("eos")] = true;
        mask[dec.id("Type").expect("Type in output vocab")] = true;

        for seed in 1..=5u64 {
            init_params(&mut model.params, 0.5, 40 * (ai as u64 + 1) + seed);
            // 4 actions, max_len 4, beam 256 = 4^4 covers every sequence
            let all = exhaustive_decode(&model, 0, &utt, 4, Some(&mask))
                .map_err(|e| e.to_string())?;
            let beamed =
                beam_search_masked(&model, 0, &utt, 256, 4, Some(&mask)).map_err(|e| e.to_string())?;
            let best = all.first().ok_or("exhaustive search found nothing")?;
            let top = beamed.first().ok_or("beam found nothing")?;
            if top.tokens != best.tokens || (top.log_prob - best.log_prob).abs() > 1e-12 {
                return Err(format!(
                    "{} seed {seed}: beam {:?} ({:.6}) vs exhaustive {:?} ({:.6})",
                    arch.name(),
                    top.tokens,
                    top.log_prob,
                    best.tokens,
                    best.log_prob
                ));
            }
            exact += 1;

            // beam of one must replay the greedy decoder
            let greedy = greedy_tokens(&model, 0, &utt, 8).map_err(|e| e.to_string())?;
            let one = beam_search(&model, 0, &utt, 1, 8).map_err(|e| e.to_string())?;
            match (greedy, one.first()) {
                (Some(g), Some(h)) if g == h.tokens => {}
                (None, None) => {}
                (g, h) => {
                    return Err(format!(
                        "{} seed {seed}: greedy {g:?} vs beam-1 {:?}",
                        arch.name(),
                        h.map(|h| h.tokens.clone())
                    ))
                }
            }
        }
    }
    Ok(format!(
        "beam matched exhaustive argmax in {exact}/10 runs (4 actions, depth 4); beam-1 equals greedy"
    ))
}

/// Greedy rollout under the model's own mask; `None` if it never finishes.
fn greedy_tokens(
    model: &Model,
    domain: usize,
    utt: &[String],
    max_len: usize,
) -> Result<Option<Vec<String>>, String> {
    let mut session = model.session(domain, utt).map_err(|e| e.to_string())?;
    let n_write = session.n_write();
    let mut state = session.initial_state().map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for _ in 0..max_len {
        let nodes = session.step(state).map_err(|e| e.to_string())?;
        let logits = session.tape.value(nodes.logits).data().to_vec();
        let dist = action_probabilities(&logits, n_write, Some(session.write_mask()))
            .map_err(|e| e.to_string())?;
        let (best, _) = dist
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty distribution");
        let token = match dist.action(best) {
            Action::Write(w) => session.dec_vocab().token(w).to_string(),
            Action::Copy(i) => session.input_tokens()[i].clone(),
        };
        out.push(token.clone());
        if token == EOS {
            return Ok(Some(out));
        }
        state = session
            .advance(state, &token, nodes.context)
            .map_err(|e| e.to_string())?;
    }
    Ok(None)
}

// ── Criterion 4: executor vs brute-force oracle ────────────────────────────

fn c4_executor_oracle() -> Result<String, String> {
    let mut kbs = 0usize;
    let mut compared = 0usize;
    'outer: for seed in 0..17u64 {
        for g in builtin_domains() {
            let kb = g.generate_kb(seed);
            if kb.entities().len() > 30 {
                return Err(format!("{} seed {seed}: {} entities", g.name, kb.entities().len()));
            }
            kbs += 1;
            for cand in g.candidates(&kb) {
                let ast = parse_lf(&cand.lf).map_err(|e| format!("parse {:?}: {e}", cand.lf))?;
                let got = execute(&ast, &kb)
                    .map_err(|e| format!("{} seed {seed} {:?}: {e}", g.name, cand.lf))?;
                let want = oracle_eval(&ast, &kb, None);
                let agree = match (&got, &want) {
                    (Denotation::Entities(a), OracleValue::Set(b)) => a == b,
                    (Denotation::Number(a), OracleValue::Num(b)) => a == b,
                    _ => false,
                };
                if !agree {
                    return Err(format!(
                        "{} seed {seed} {:?}: executor {got:?} vs oracle {want:?}",
                        g.name, cand.lf
                    ));
                }
                compared += 1;
            }
            if kbs >= 51 {
                break 'outer;
            }
        }
    }

    // every gold form of freshly generated corpora must execute
    let mut golds = 0usize;
    for seed in [1u64, 2] {
        let corpus = corpus::generate(&builtin_domains(), seed).map_err(|e| e.to_string())?;
        for d in &corpus.domains {
            for ex in d.train.iter().chain(&d.test) {
                let den = semparse::logic::execute_tokens(&ex.lf, &d.kb)
                    .map_err(|e| format!("gold {:?}: {e}", ex.lf))?;
                if den.is_empty() {
                    return Err(format!("gold executes to nothing: {:?}", ex.lf));
                }
                golds += 1;
            }
        }
    }
    Ok(format!(
        "executor agreed with the enumeration oracle on {compared} forms over {kbs} KBs; {golds}/{golds} gold forms execute"
    ))
}

// ── Criterion 5: parameter accounting ──────────────────────────────────────

fn c5_parameter_accounting() -> Result<String, String> {
    let count = |arch: Architecture, specs: Vec<DomainSpec>, h: usize, e: usize| -> usize {
        Model::build(arch, specs, h, e)
            .expect("build")
            .count_parameters()
    };
    let (h, e) = (16, 10);

    // K independent models cost exactly K single-domain models
    let one = count(Architecture::Indep, sized_specs(1, 20, 5, 12, 3), h, e);
    for k in [2usize, 6] {
        let many = count(Architecture::Indep, sized_specs(k, 20, 5, 12, 3), h, e);
        if many != k * one {
            return Err(format!("Indep({k}) = {many}, expected {k}·{one}"));
        }
    }

    // a fully shared model does not grow with the number of domains
    let shared: Vec<usize> = [2usize, 5, 8]
        .into_iter()
        .map(|k| count(Architecture::One2One, sized_specs(k, 25, 0, 14, 0), h, e))
        .collect();
    if shared[0] != shared[1] || shared[1] != shared[2] {
        return Err(format!("One2One counts vary with K: {shared:?}"));
    }

    // the domain-vector variant adds exactly the 4·H·K recurrence columns
    for k in [2usize, 3, 8] {
        let specs = sized_specs(k, 30, 7, 15, 4);
        let base = count(Architecture::One2One, specs.clone(), h, e);
        let enc = count(Architecture::DomainEncoding, specs, h, e);
        if enc - base != 4 * h * k {
            return Err(format!("K={k}: DomainEncoding−One2One = {}", enc - base));
        }
    }

    // at full scale (H=200, emb=100, 8 realistic domains) the independent
    // ensemble costs 5–9x the shared domain-vector model
    let specs = sized_specs(8, 200, 120, 15, 55);
    let indep = count(Architecture::Indep, specs.clone(), 200, 100);
    let shared8 = count(Architecture::DomainEncoding, specs, 200, 100);
    let ratio = indep as f64 / shared8 as f64;
    if !(5.0..=9.0).contains(&ratio) {
        return Err(format!(
            "full-scale ratio {ratio:.2} outside [5, 9] ({indep} vs {shared8})"
        ));
    }
    Ok(format!(
        "identities hold; full-scale ensemble/shared ratio {ratio:.2} ({:.1}M vs {:.1}M scalars)",
        indep as f64 / 1e6,
        shared8 as f64 / 1e6
    ))
}

// ── Criterion 6: training recipe ───────────────────────────────────────────

fn c6_training_recipe() -> Result<String, String> {
    // the four-plateau schedule
    for (epochs, want) in [
        (1usize..=14, 0.1),
        (15..=19, 0.05),
        (20..=24, 0.025),
        (25..=30, 0.0125),
    ] {
        for epoch in epochs {
            let got = learning_rate(epoch).map_err(|e| e.to_string())?;
            if got != want {
                return Err(format!("learning_rate({epoch}) = {got}, want {want}"));
            }
        }
    }

    // uniform init within ±0.1
    let mut model =
        Model::build(Architecture::One2One, tiny_specs(), 32, 16).map_err(|e| e.to_string())?;
    init_params(&mut model.params, 0.1, 5);
    for (name, tensor) in model.params.iter() {
        for v in tensor.data() {
            if v.abs() > 0.1 {
                return Err(format!("{name}: init value {v} outside ±0.1"));
            }
        }
    }

    // words seen once fall back to the unknown entry
    let train = vec![
        Example::new(toks("which units have tenant alice"), toks("Type")),
        Example::new(toks("which units have tenant bob"), toks("Type")),
    ];
    let v = corpus::input_vocab(&train);
    if v.contains("alice") || v.contains("bob") || !v.contains("which") {
        return Err("singleton handling wrong in the input vocabulary".into());
    }

    // a single example is memorized to < 0.1 nats within 50 epochs by
    // every architecture (small nets need a larger step at this init scale)
    let solo = Corpus {
        domains: vec![DomainData {
            name: "solo".into(),
            kb: Kb::new(),
            train: vec![Example::new(toks("show all units"), toks("Type . HousingUnit"))],
            test: vec![],
        }],
    };
    let config = TrainConfig {
        hidden: 32,
        emb: 16,
        epochs: 50,
        lr0: 2.0,
        ..TrainConfig::desk(3)
    };
    let mut worst_loss = 0.0f64;
    for arch in Architecture::ALL {
        let (_, log) = train_model(arch, &solo, &config).map_err(|e| e.to_string())?;
        let last = log.last().expect("epochs ran").mean_loss;
        worst_loss = worst_loss.max(last);
        if !last.is_finite() || last >= 0.1 {
            return Err(format!("{}: loss {last:.4} after 50 epochs", arch.name()));
        }
    }
    Ok(format!(
        "schedule exact, init bounded, singletons→unk, memorization worst loss {worst_loss:.4} nats"
    ))
}

// ── Criteria 7–8: the shared measurement grid ──────────────────────────────

struct Grid {
    indep_q: Vec<f64>,
    shared_q: Vec<f64>,
    indep_f: Vec<f64>,
    shared_f: Vec<f64>,
    renamed_f: Vec<f64>,
    secs: f64,
}

fn run_grid() -> Result<Grid, String> {
    let t0 = Instant::now();
    let corpus = corpus::generate(&builtin_domains(), 1).map_err(|e| e.to_string())?;
    let renamed = corpus::rename_constants(&corpus).map_err(|e| e.to_string())?;

    let run = |arch: Architecture, data: &Corpus, fraction: f64, seed: u64| -> Result<f64, String> {
        let tc = TrainConfig {
            fraction,
            ..TrainConfig::desk(seed)
        };
        let sub = corpus::subsample(data, fraction, seed).map_err(|e| e.to_string())?;
        let (model, _) = train_model(arch, &sub, &tc).map_err(|e| e.to_string())?;
        let predictor = Predictor::Beam {
            model: &model,
            beam: tc.beam,
            max_len: default_max_len(&sub),
        };
        Ok(evaluate(&predictor, data).map_err(|e| e.to_string())?.average)
    };

    let seeds: Vec<u64> = (1..=5).collect();
    let leg = |arch, data: &Corpus, fraction| -> Result<Vec<f64>, String> {
        seeds.iter().map(|&s| run(arch, data, fraction, s)).collect()
    };
    let grid = Grid {
        indep_q: leg(Architecture::Indep, &corpus, 0.25)?,
        shared_q: leg(Architecture::DomainEncoding, &corpus, 0.25)?,
        indep_f: leg(Architecture::Indep, &corpus, 1.0)?,
        shared_f: leg(Architecture::DomainEncoding, &corpus, 1.0)?,
        renamed_f: leg(Architecture::DomainEncoding, &renamed, 1.0)?,
        secs: t0.elapsed().as_secs_f64(),
    };
    Ok(grid)
}

fn c7_sharing_effect(grid: &Grid) -> Result<String, String> {
    let (iq, sq) = (median(grid.indep_q.clone()), median(grid.shared_q.clone()));
    let (inf, sf) = (median(grid.indep_f.clone()), median(grid.shared_f.clone()));
    if sq < iq + QUARTER_MARGIN {
        return Err(format!(
            "quarter data: shared {} vs independent {} — needs +{} points",
            pct(sq),
            pct(iq),
            100.0 * QUARTER_MARGIN
        ));
    }
    if sf < inf {
        return Err(format!("full data: shared {} below independent {}", pct(sf), pct(inf)));
    }
    if (sq - iq) <= (sf - inf) {
        return Err(format!(
            "gap did not shrink with data: {:+.1} at quarter vs {:+.1} at full",
            100.0 * (sq - iq),
            100.0 * (sf - inf)
        ));
    }
    if grid.secs >= GRID_BUDGET_SECS {
        return Err(format!("grid took {:.0}s, budget {GRID_BUDGET_SECS}s", grid.secs));
    }
    Ok(format!(
        "medians over 5 seeds: quarter data {} vs {} (gap {:+.1}), full data {} vs {} (gap {:+.1}); grid in {:.0}s",
        pct(sq),
        pct(iq),
        100.0 * (sq - iq),
        pct(sf),
        pct(inf),
        100.0 * (sf - inf),
        grid.secs
    ))
}

// ── Criterion 8: constant-renaming ablation ────────────────────────────────

/// Per-domain constant tokens: everything in the logical forms and KB that
/// is not an operator (set algebra, superlatives, comparisons, punctuation),
/// a number, or the bound variable.
fn constant_tokens(d: &DomainData) -> BTreeSet<String> {
    let operators: BTreeSet<&str> = [
        "⊓", "argmax", "argmin", "count", "R", "λ", "Type", ".", "(", ")", ",", "x", "≤", "≥",
        "<", ">", "=",
    ]
    .into_iter()
    .collect();
    let mut out = BTreeSet::new();
    for ex in d.train.iter().chain(&d.test) {
        for t in &ex.lf {
            if !operators.contains(t.as_str()) && parse_number_token(t).is_none() {
                out.insert(t.clone());
            }
        }
    }
    for t in d.kb.triples() {
        out.insert(t.subject.clone());
        if t.property != "type" {
            out.insert(t.property.clone());
        }
        if let Obj::Entity(e) = &t.object {
            out.insert(e.clone());
        }
    }
    out
}

fn shared_constants(corpus: &Corpus) -> BTreeSet<String> {
    let sets: Vec<BTreeSet<String>> = corpus.domains.iter().map(constant_tokens).collect();
    let mut shared = BTreeSet::new();
    for (i, a) in sets.iter().enumerate() {
        for b in sets.iter().skip(i + 1) {
            shared.extend(a.intersection(b).cloned());
        }
    }
    shared
}

fn c8_renaming_ablation(grid: &Grid) -> Result<String, String> {
    // the rename must actually disjoin the constant vocabularies
    let corpus = corpus::generate(&builtin_domains(), 1).map_err(|e| e.to_string())?;
    if shared_constants(&corpus).is_empty() {
        return Err("audit has no power: original domains share no constants".into());
    }
    let renamed = corpus::rename_constants(&corpus).map_err(|e| e.to_string())?;
    let leaked = shared_constants(&renamed);
    if !leaked.is_empty() {
        return Err(format!("constants still shared after renaming: {leaked:?}"));
    }

    let ren = median(grid.renamed_f.clone());
    let orig = median(grid.shared_f.clone());
    let indep = median(grid.indep_f.clone());
    if ren < indep {
        return Err(format!("renamed {} fell below independent {}", pct(ren), pct(indep)));
    }
    if (orig - ren).abs() > ABLATION_BAND {
        return Err(format!(
            "renamed {} more than {} points from unrenamed {}",
            pct(ren),
            100.0 * ABLATION_BAND,
            pct(orig)
        ));
    }
    Ok(format!(
        "medians over 5 seeds: renamed {} vs unrenamed {} (Δ{:+.1} points, band ±{}), independent {}; renamed constant vocabularies disjoint",
        pct(ren),
        pct(orig),
        100.0 * (ren - orig),
        100.0 * ABLATION_BAND,
        pct(indep)
    ))
}

// ── Criterion 9: byte-identical reruns ─────────────────────────────────────

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).expect("prefix").to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).expect("read"));
            }
        }
    }
    out
}

type DirSnapshot = BTreeMap<String, Vec<u8>>;

/// Run `cmd` twice with one identical config, wiping its outputs in
/// between, and return the bytes both runs produced under `watch`.
fn rerun<F>(cmd: F, watch: &[&Path]) -> Result<(DirSnapshot, DirSnapshot), String>
where
    F: Fn() -> Result<(), String>,
{
    let collect = |dirs: &[&Path]| {
        let mut all = BTreeMap::new();
        for d in dirs {
            for (rel, bytes) in dir_bytes(d) {
                all.insert(format!("{}/{rel}", d.file_name().unwrap().to_string_lossy()), bytes);
            }
        }
        all
    };
    cmd()?;
    let first = collect(watch);
    for d in watch {
        std::fs::remove_dir_all(d).map_err(|e| e.to_string())?;
    }
    cmd()?;
    Ok((first, collect(watch)))
}

fn c9_determinism() -> Result<String, String> {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mk = |name: &str| root.path().join(name);
    let data = mk("data");

    let mut gen = RunConfig::new("generate", &data, &mk("gen-out"));
    gen.seed = 5;
    gen.train_per_domain = 24;
    gen.test_per_domain = 12;
    let (a, b) = rerun(
        || cmd_generate(&gen).map(|_| ()).map_err(|e| e.to_string()),
        &[&data, &mk("gen-out")],
    )?;
    if a != b {
        return Err("generate: reruns differ".into());
    }

    let train_out = mk("train");
    let mut train = RunConfig::new("train", &data, &train_out);
    train.arch = Some("domainencoding".into());
    train.seed = 5;
    train.epochs = Some(6);
    train.hidden = Some(16);
    train.emb = Some(8);
    let (ta, tb) = rerun(
        || cmd_train(&train).map(|_| ()).map_err(|e| e.to_string()),
        &[&train_out],
    )?;
    if ta != tb {
        let diff: Vec<&String> = ta
            .iter()
            .filter(|(k, v)| tb.get(*k) != Some(v))
            .map(|(k, _)| k)
            .collect();
        return Err(format!("train: reruns differ in {diff:?}"));
    }
    if !ta.contains_key("train/checkpoint.txt") || !ta.contains_key("train/loss.csv") {
        return Err(format!("train outputs missing: {:?}", ta.keys().collect::<Vec<_>>()));
    }

    let eval_out = mk("eval");
    let mut eval = RunConfig::new("evaluate", &data, &eval_out);
    eval.checkpoint = Some(train_out.join("checkpoint.txt"));
    eval.beam = Some(3);
    let (ea, eb) = rerun(
        || cmd_evaluate(&eval).map(|_| ()).map_err(|e| e.to_string()),
        &[&eval_out],
    )?;
    if ea != eb {
        return Err("evaluate: reruns differ".into());
    }
    if !ea.contains_key("eval/metrics.csv") {
        return Err(format!("evaluate outputs missing: {:?}", ea.keys().collect::<Vec<_>>()));
    }
    Ok("generate, train, and evaluate reruns are byte-identical (datasets, checkpoint, loss and metrics CSVs, config snapshots)".into())
}

// ── Runner ─────────────────────────────────────────────────────────────────

#[test]
fn acceptance_criteria() {
    let grid = catch_unwind(run_grid).unwrap_or_else(|p| Err(panic_text(p)));

    type Check<'a> = Box<dyn FnOnce() -> Result<String, String> + 'a>;
    let checks: Vec<(&str, Check<'_>)> = vec![
        ("gradient fidelity vs central differences", Box::new(c1_gradient_fidelity)),
        ("distribution normalization and write masking", Box::new(c2_normalization)),
        ("beam search exactness on enumerable models", Box::new(c3_beam_oracle)),
        ("executor agreement with enumeration oracle", Box::new(c4_executor_oracle)),
        ("parameter accounting and model-size ratio", Box::new(c5_parameter_accounting)),
        ("training recipe conformance", Box::new(c6_training_recipe)),
        (
            "low-data sharing advantage",
            Box::new({
                let g = as_ref_result(&grid);
                move || g.and_then(|g| c7_sharing_effect(g))
            }),
        ),
        (
            "constant-renaming ablation direction",
            Box::new({
                let g = as_ref_result(&grid);
                move || g.and_then(|g| c8_renaming_ablation(g))
            }),
        ),
        ("byte-identical command reruns", Box::new(c9_determinism)),
    ];

    let mut failures = Vec::new();
    for (i, (name, check)) in checks.into_iter().enumerate() {
        let n = i + 1;
        match catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| Err(panic_text(p))) {
            Ok(detail) => println!("criterion {n:2} PASS — {name}: {detail}"),
            Err(detail) => {
                println!("criterion {n:2} FAIL — {name}: {detail}");
                failures.push(n);
            }
        }
    }
    println!(
        "criterion 10 SKIP — full-scale external-corpus comparison: optional and not gating; no full-scale dataset ships with this repository"
    );

    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

fn as_ref_result<'a>(grid: &'a Result<Grid, String>) -> Result<&'a Grid, String> {
    grid.as_ref().map_err(|e| format!("measurement grid failed: {e}"))
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        format!("panicked: {s}")
    } else if let Some(s) = p.downcast_ref::<String>() {
        format!("panicked: {s}")
    } else {
        "panicked".into()
    }
}
