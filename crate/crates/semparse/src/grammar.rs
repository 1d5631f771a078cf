//! Synchronous grammars for generating (utterance, logical form) pairs.
//!
//! Three built-in desk-scale domains — housing, calendar, restaurants —
//! share four template families:
//!
//! * **join** — `Type . T ⊓ prop . value` with an entity or number value;
//! * **comparative** — `Type . T ⊓ attr . op . n` for op ∈ {≤, ≥, <, >};
//! * **superlative** — `argmax/argmin ( Type . T , degree )` where the
//!   degree is a numeric attribute or a relation count;
//! * **count comparative** — `Type . T ⊓ R ( λ x . count ( … x ) ) . op . n`.
//!
//! Every domain has one main entity type, three numeric attributes, one
//! multi-valued relation to a shared pool of people and one single-valued
//! relation. Relations are stored in both orientations across domains
//! (housing and calendar put the main entity in subject position,
//! restaurants in object position), so generated forms exercise both the
//! plain and the reversed join when counting.
//!
//! Person names and numbers recur across domains; property and type names
//! do not. Numbers appear verbatim in utterances, so comparatives and
//! numeric joins exercise the copy path. Entity constants are formal KB
//! symbols tied to utterance words by the lexicon (`"alice"` ↔ `Alice`),
//! so the decoder has to write them from the output vocabulary instead of
//! copying them.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::logic::{
    execute, format_number, print_lf, CmpOp, Denotation, JoinValue, Kb, LogicalForm, Obj,
    PropExpr, TYPE_PROP,
};

/// A generated (utterance, logical form) pair, both as token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub utterance: Vec<String>,
    pub lf: Vec<String>,
    /// Template family, used by error analysis and tests.
    pub family: TemplateFamily,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemplateFamily {
    Join,
    Comparative,
    Superlative,
    CountComparative,
}

/// A numeric attribute of the main entity type.
#[derive(Debug, Clone)]
pub struct NumericAttr {
    pub prop: String,
    /// Surface noun used in utterances (`"size"`).
    pub noun: String,
    /// Closed set of values; KB values and utterance numbers both come
    /// from here.
    pub values: Vec<f64>,
}

/// The multi-valued relation between main entities and people.
#[derive(Debug, Clone)]
pub struct MultiRel {
    pub prop: String,
    /// `true` when triples are stored `(person, prop, main)`; `false` for
    /// `(main, prop, person)`.
    pub person_is_subject: bool,
    pub singular: String,
    pub plural: String,
    pub people: Vec<String>,
}

/// The single-valued relation between main entities and a small target set.
#[derive(Debug, Clone)]
pub struct SingleRel {
    pub prop: String,
    /// Type label given to targets in the KB.
    pub target_type: String,
    pub targets: Vec<String>,
    /// Utterance tails with a `{t}` slot (`"located in {t}"`).
    pub phrases: Vec<String>,
}

/// Everything needed to generate one domain: KB shape and surface lexicon.
#[derive(Debug, Clone)]
pub struct DomainGrammar {
    pub name: String,
    pub main_type: String,
    pub main_singular: String,
    pub main_plural: String,
    /// Main entity ids are `<entity_prefix>1 ..= <entity_prefix><n_main>`.
    pub entity_prefix: String,
    pub n_main: usize,
    pub attrs: Vec<NumericAttr>,
    pub multi: MultiRel,
    pub single: SingleRel,
    /// Thresholds for count comparatives.
    pub count_values: Vec<f64>,
}

const PEOPLE: [&str; 10] = [
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "henry", "iris", "jack",
];

/// KB constant for a lexicon surface word: `"alice"` → `"Alice"`.
///
/// Entity constants are formal symbols distinct from every utterance token;
/// numbers are the only values shared verbatim between utterances and
/// logical forms.
pub fn kb_constant(surface: &str) -> String {
    let mut chars = surface.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn housing() -> DomainGrammar {
    DomainGrammar {
        name: "housing".into(),
        main_type: "HousingUnit".into(),
        main_singular: "unit".into(),
        main_plural: "units".into(),
        entity_prefix: "u".into(),
        n_main: 10,
        attrs: vec![
            NumericAttr {
                prop: "Size".into(),
                noun: "size".into(),
                values: vec![400.0, 600.0, 800.0, 1000.0, 1200.0, 1400.0],
            },
            NumericAttr {
                prop: "Rent".into(),
                noun: "rent".into(),
                values: vec![900.0, 1100.0, 1300.0, 1500.0, 1700.0, 1900.0],
            },
            NumericAttr {
                prop: "Age".into(),
                noun: "age".into(),
                values: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            },
        ],
        multi: MultiRel {
            prop: "Tenant".into(),
            person_is_subject: false,
            singular: "tenant".into(),
            plural: "tenants".into(),
            people: PEOPLE.iter().map(|s| s.to_string()).collect(),
        },
        single: SingleRel {
            prop: "District".into(),
            target_type: "District".into(),
            targets: ["downtown", "midtown", "hillside", "riverside"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            phrases: vec!["in {t}".into(), "located in {t}".into()],
        },
        count_values: vec![1.0, 2.0, 3.0, 4.0],
    }
}

pub fn calendar() -> DomainGrammar {
    DomainGrammar {
        name: "calendar".into(),
        main_type: "Meeting".into(),
        main_singular: "meeting".into(),
        main_plural: "meetings".into(),
        entity_prefix: "m".into(),
        n_main: 10,
        attrs: vec![
            NumericAttr {
                prop: "Length".into(),
                noun: "length".into(),
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            },
            NumericAttr {
                prop: "Priority".into(),
                noun: "priority".into(),
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            },
            NumericAttr {
                prop: "Start".into(),
                noun: "start".into(),
                values: vec![8.0, 9.0, 10.0, 11.0, 14.0, 16.0],
            },
        ],
        multi: MultiRel {
            prop: "Attendee".into(),
            person_is_subject: false,
            singular: "attendee".into(),
            plural: "attendees".into(),
            people: PEOPLE.iter().map(|s| s.to_string()).collect(),
        },
        single: SingleRel {
            prop: "Room".into(),
            target_type: "Room".into(),
            targets: ["boardroom", "lab", "studio", "annex"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            phrases: vec!["in the {t}".into(), "held in the {t}".into()],
        },
        count_values: vec![1.0, 2.0, 3.0, 4.0],
    }
}

pub fn restaurants() -> DomainGrammar {
    DomainGrammar {
        name: "restaurants".into(),
        main_type: "Restaurant".into(),
        main_singular: "restaurant".into(),
        main_plural: "restaurants".into(),
        entity_prefix: "r".into(),
        n_main: 10,
        attrs: vec![
            NumericAttr {
                prop: "Rating".into(),
                noun: "rating".into(),
                values: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            },
            NumericAttr {
                prop: "Price".into(),
                noun: "price".into(),
                values: vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            },
            NumericAttr {
                prop: "Capacity".into(),
                noun: "capacity".into(),
                values: vec![20.0, 40.0, 60.0, 80.0, 100.0, 120.0],
            },
        ],
        multi: MultiRel {
            prop: "Reviewer".into(),
            person_is_subject: true,
            singular: "reviewer".into(),
            plural: "reviewers".into(),
            people: PEOPLE.iter().map(|s| s.to_string()).collect(),
        },
        single: SingleRel {
            prop: "Cuisine".into(),
            target_type: "Cuisine".into(),
            targets: ["thai", "italian", "sushi", "tapas"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            phrases: vec!["serving {t}".into(), "that serve {t}".into()],
        },
        count_values: vec![1.0, 2.0, 3.0, 4.0],
    }
}

/// The three built-in domains in canonical order.
pub fn builtin_domains() -> Vec<DomainGrammar> {
    vec![housing(), calendar(), restaurants()]
}

/// Stable per-domain stream: the base seed xor'd with a hash of the name.
pub fn domain_seed(base: u64, name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    base ^ u64::from_le_bytes(b)
}

// ── Surface patterns ───────────────────────────────────────────────────────

const PERSON_JOIN_PATTERNS: [&str; 5] = [
    "which {main} have {rel_sing} {p}",
    "list {main} with {rel_sing} {p}",
    "{main} where {p} is a {rel_sing}",
    "find {main} whose {rel_plural} include {p}",
    "show me {main} with {rel_sing} {p}",
];

const SINGLE_JOIN_PREFIXES: [&str; 4] = [
    "which {main}",
    "list {main}",
    "find {main}",
    "show me {main}",
];

const NUMBER_JOIN_PATTERNS: [&str; 4] = [
    "which {main} have {attr} {num}",
    "list {main} with {attr} {num}",
    "{main} whose {attr} is {num}",
    "find {main} with {attr} of {num}",
];

const COMPARATIVE_PATTERNS: [&str; 4] = [
    "which {main} have {attr} {cmp} {num}",
    "list {main} with {attr} {cmp} {num}",
    "{main} whose {attr} is {cmp} {num}",
    "find {main} with {attr} {cmp} {num}",
];

const SUPERLATIVE_ATTR_PATTERNS: [&str; 4] = [
    "which {main_sing} has the {deg} {attr}",
    "find the {main_sing} with the {deg} {attr}",
    "what is the {main_sing} with the {deg} {attr}",
    "{main_sing} with the {deg} {attr}",
];

const SUPERLATIVE_COUNT_PATTERNS: [&str; 4] = [
    "which {main_sing} has the {deg} {rel_plural}",
    "find the {main_sing} with the {deg} {rel_plural}",
    "what is the {main_sing} with the {deg} {rel_plural}",
    "{main_sing} with the {deg} {rel_plural}",
];

const COUNT_CMP_PATTERNS: [&str; 4] = [
    "which {main} have {cmp} {num} {rel_plural}",
    "list {main} with {cmp} {num} {rel_plural}",
    "find {main} with {cmp} {num} {rel_plural}",
    "{main} having {cmp} {num} {rel_plural}",
];

/// Comparatives used by generated forms, with their surface phrasings.
pub const COMPARATIVE_OPS: [CmpOp; 4] = [CmpOp::Le, CmpOp::Ge, CmpOp::Lt, CmpOp::Gt];

fn cmp_phrases(op: CmpOp) -> &'static [&'static str] {
    match op {
        CmpOp::Le => &["at most", "no more than"],
        CmpOp::Ge => &["at least", "no less than"],
        CmpOp::Lt => &["less than", "under"],
        CmpOp::Gt => &["more than", "over"],
        CmpOp::Eq => &["exactly"],
    }
}

fn superlative_degree_words(max: bool, count_degree: bool) -> &'static [&'static str] {
    match (max, count_degree) {
        (true, false) => &["highest", "largest"],
        (false, false) => &["lowest", "smallest"],
        (true, true) => &["most"],
        (false, true) => &["fewest"],
    }
}

/// Fill `{slot}` placeholders and split into word tokens.
fn fill(pattern: &str, slots: &[(&str, &str)]) -> Vec<String> {
    let mut s = pattern.to_string();
    for (name, value) in slots {
        s = s.replace(&format!("{{{name}}}"), value);
    }
    debug_assert!(!s.contains('{'), "unfilled slot in pattern {pattern:?}");
    s.split_whitespace().map(String::from).collect()
}

// ── KB generation ──────────────────────────────────────────────────────────

impl DomainGrammar {
    pub fn main_entities(&self) -> Vec<String> {
        (1..=self.n_main)
            .map(|i| format!("{}{}", self.entity_prefix, i))
            .collect()
    }

    /// Generate the domain KB with attribute values, person links and
    /// targets drawn from the grammar's closed sets.
    pub fn generate_kb(&self, seed: u64) -> Kb {
        let mut rng = ChaCha8Rng::seed_from_u64(domain_seed(seed, &self.name));
        let mut kb = Kb::new();
        for e in self.main_entities() {
            kb.add(&e, TYPE_PROP, Obj::Entity(self.main_type.clone()));
            for attr in &self.attrs {
                let v = attr.values[rng.gen_range(0..attr.values.len())];
                kb.add(&e, &attr.prop, Obj::Number(v));
            }
            let k = rng.gen_range(1..=4usize);
            let mut chosen: Vec<&String> =
                self.multi.people.choose_multiple(&mut rng, k).collect();
            chosen.sort();
            for p in chosen {
                let p = kb_constant(p);
                if self.multi.person_is_subject {
                    kb.add(&p, &self.multi.prop, Obj::Entity(e.clone()));
                } else {
                    kb.add(&e, &self.multi.prop, Obj::Entity(p));
                }
            }
            let t = &self.single.targets[rng.gen_range(0..self.single.targets.len())];
            kb.add(&e, &self.single.prop, Obj::Entity(kb_constant(t)));
        }
        for p in &self.multi.people {
            kb.add(&kb_constant(p), TYPE_PROP, Obj::Entity("Person".into()));
        }
        for t in &self.single.targets {
            kb.add(
                &kb_constant(t),
                TYPE_PROP,
                Obj::Entity(self.single.target_type.clone()),
            );
        }
        kb
    }

    // ── Logical-form builders ──────────────────────────────────────────

    fn type_filter(&self) -> LogicalForm {
        LogicalForm::TypeFilter(self.main_type.clone())
    }

    fn restrict(&self, join: LogicalForm) -> LogicalForm {
        LogicalForm::Intersect(Box::new(self.type_filter()), Box::new(join))
    }

    /// Join from main entities to a person, respecting storage direction.
    fn person_join(&self, person: &str) -> LogicalForm {
        let prop = PropExpr::Named(self.multi.prop.clone());
        let prop = if self.multi.person_is_subject {
            PropExpr::Reverse(Box::new(prop))
        } else {
            prop
        };
        self.restrict(LogicalForm::Join(
            prop,
            JoinValue::Set(Box::new(LogicalForm::Entity(kb_constant(person)))),
        ))
    }

    /// Degree function mapping a main entity to its person count.
    fn count_degree(&self) -> PropExpr {
        let inner = PropExpr::Named(self.multi.prop.clone());
        let inner = if self.multi.person_is_subject {
            inner
        } else {
            PropExpr::Reverse(Box::new(inner))
        };
        let body = LogicalForm::Count(Box::new(LogicalForm::Join(
            inner,
            JoinValue::Set(Box::new(LogicalForm::Var("x".into()))),
        )));
        PropExpr::ReverseLambda("x".into(), Box::new(body))
    }

    // ── Candidate enumeration ──────────────────────────────────────────

    /// Enumerate every template instantiation, keeping only pairs whose
    /// logical form executes to a non-degenerate denotation on `kb`:
    /// non-empty and not simply the set of all main entities.
    pub fn candidates(&self, kb: &Kb) -> Vec<Candidate> {
        let all_main = Denotation::entities(self.main_entities());
        let mut out = Vec::new();
        let mut push = |utterance: Vec<String>, lf: &LogicalForm, family: TemplateFamily| {
            match execute(lf, kb) {
                Ok(d) if !d.is_empty() && d != all_main => out.push(Candidate {
                    utterance,
                    lf: print_lf(lf),
                    family,
                }),
                _ => {}
            }
        };

        let main = self.main_plural.as_str();
        let main_sing = self.main_singular.as_str();
        let rel_sing = self.multi.singular.as_str();
        let rel_plural = self.multi.plural.as_str();

        // join: person
        for p in &self.multi.people {
            let lf = self.person_join(p);
            for pat in PERSON_JOIN_PATTERNS {
                let utt = fill(
                    pat,
                    &[
                        ("main", main),
                        ("rel_sing", rel_sing),
                        ("rel_plural", rel_plural),
                        ("p", p),
                    ],
                );
                push(utt, &lf, TemplateFamily::Join);
            }
        }

        // join: single-valued target
        for t in &self.single.targets {
            let lf = self.restrict(LogicalForm::Join(
                PropExpr::Named(self.single.prop.clone()),
                JoinValue::Set(Box::new(LogicalForm::Entity(kb_constant(t)))),
            ));
            for prefix in SINGLE_JOIN_PREFIXES {
                for phrase in &self.single.phrases {
                    let full = format!("{prefix} {phrase}");
                    let utt = fill(&full, &[("main", main), ("t", t)]);
                    push(utt, &lf, TemplateFamily::Join);
                }
            }
        }

        // join: exact numeric value
        for attr in &self.attrs {
            for &v in &attr.values {
                let lf = self.restrict(LogicalForm::Join(
                    PropExpr::Named(attr.prop.clone()),
                    JoinValue::Set(Box::new(LogicalForm::Number(v))),
                ));
                let num = format_number(v);
                for pat in NUMBER_JOIN_PATTERNS {
                    let utt = fill(
                        pat,
                        &[("main", main), ("attr", &attr.noun), ("num", &num)],
                    );
                    push(utt, &lf, TemplateFamily::Join);
                }
            }
        }

        // comparative
        for attr in &self.attrs {
            for op in COMPARATIVE_OPS {
                for &v in &attr.values {
                    let lf = self.restrict(LogicalForm::Join(
                        PropExpr::Named(attr.prop.clone()),
                        JoinValue::Compare(op, v),
                    ));
                    let num = format_number(v);
                    for pat in COMPARATIVE_PATTERNS {
                        for cmp in cmp_phrases(op) {
                            let utt = fill(
                                pat,
                                &[
                                    ("main", main),
                                    ("attr", &attr.noun),
                                    ("cmp", cmp),
                                    ("num", &num),
                                ],
                            );
                            push(utt, &lf, TemplateFamily::Comparative);
                        }
                    }
                }
            }
        }

        // superlative: attribute degree
        for attr in &self.attrs {
            for max in [true, false] {
                let lf = LogicalForm::Superlative {
                    max,
                    set: Box::new(self.type_filter()),
                    degree: PropExpr::Named(attr.prop.clone()),
                };
                for pat in SUPERLATIVE_ATTR_PATTERNS {
                    for deg in superlative_degree_words(max, false) {
                        let utt = fill(
                            pat,
                            &[("main_sing", main_sing), ("deg", deg), ("attr", &attr.noun)],
                        );
                        push(utt, &lf, TemplateFamily::Superlative);
                    }
                }
            }
        }

        // superlative: person-count degree
        for max in [true, false] {
            let lf = LogicalForm::Superlative {
                max,
                set: Box::new(self.type_filter()),
                degree: self.count_degree(),
            };
            for pat in SUPERLATIVE_COUNT_PATTERNS {
                for deg in superlative_degree_words(max, true) {
                    let utt = fill(
                        pat,
                        &[
                            ("main_sing", main_sing),
                            ("deg", deg),
                            ("rel_plural", rel_plural),
                        ],
                    );
                    push(utt, &lf, TemplateFamily::Superlative);
                }
            }
        }

        // count comparative
        for op in COMPARATIVE_OPS {
            for &v in &self.count_values {
                let lf = self.restrict(LogicalForm::Join(
                    self.count_degree(),
                    JoinValue::Compare(op, v),
                ));
                let num = format_number(v);
                for pat in COUNT_CMP_PATTERNS {
                    for cmp in cmp_phrases(op) {
                        let utt = fill(
                            pat,
                            &[
                                ("main", main),
                                ("cmp", cmp),
                                ("num", &num),
                                ("rel_plural", rel_plural),
                            ],
                        );
                        push(utt, &lf, TemplateFamily::CountComparative);
                    }
                }
            }
        }

        out
    }
}
