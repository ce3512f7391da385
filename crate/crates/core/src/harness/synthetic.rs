//! A synthetic stand-in for the object-affordance data: objects drawn from
//! category prototypes with noisy attributes, and affordances that follow a
//! fixed rule table over those attributes.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::logic::{
    parse_formula, parse_mln, EvidenceAtom, EvidenceDatabase, Formula, MlnModel, WeightedFormula,
};

pub const QUERY_PREDICATE: &str = "HasAffordance";
pub const OBJECT_DOMAIN: &str = "object";

/// A model with training and test evidence. The test database includes the
/// query-predicate atoms used as labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub model: MlnModel,
    pub train: EvidenceDatabase,
    pub test: EvidenceDatabase,
    pub query_predicate: String,
    pub object_domain: String,
}

const DECLS: &str = "IsA(object, category)\n\
HasVisualAttribute(object, attribute)\n\
HasWeight(object, weight)\n\
HasSize(object, size)\n\
HasAffordance(object, affordance)\n";

/// The five untrained formulas of the affordance model. The last relates
/// categories to each other.
pub const AFFORDANCE_FORMULAS: [&str; 5] = [
    "IsA(obj, +category) => HasAffordance(obj, +affordance)",
    "HasVisualAttribute(obj, +attribute) => HasAffordance(obj, +affordance)",
    "HasWeight(obj, +weight) => HasAffordance(obj, +affordance)",
    "HasSize(obj, +size) => HasAffordance(obj, +affordance)",
    "IsA(obj, +category) => IsA(obj, +category2)",
];

pub fn affordance_model() -> MlnModel {
    let mut text = String::from(DECLS);
    for f in AFFORDANCE_FORMULAS {
        text.push_str("0 ");
        text.push_str(f);
        text.push('\n');
    }
    parse_mln(&text).expect("built-in model parses")
}

pub const ATTRIBUTES: [&str; 6] = ["Round", "Flat", "Sharp", "Soft", "Handle", "Hollow"];
pub const WEIGHTS: [&str; 3] = ["Light", "Moderate", "Heavy"];
pub const SIZES: [&str; 3] = ["Small", "Medium", "Large"];
pub const AFFORDANCES: [&str; 6] = ["Grasp", "Lift", "Throw", "Push", "Sit", "Contain"];

struct Prototype {
    name: &'static str,
    parent: &'static str,
    attributes: &'static [&'static str],
    weight: &'static str,
    size: &'static str,
}

const PROTOTYPES: [Prototype; 6] = [
    Prototype { name: "Cup", parent: "Artifact", attributes: &["Round", "Handle", "Hollow"], weight: "Light", size: "Small" },
    Prototype { name: "Bottle", parent: "Artifact", attributes: &["Round", "Hollow"], weight: "Moderate", size: "Medium" },
    Prototype { name: "Knife", parent: "Artifact", attributes: &["Sharp", "Handle", "Flat"], weight: "Light", size: "Small" },
    Prototype { name: "Chair", parent: "Artifact", attributes: &["Flat"], weight: "Heavy", size: "Large" },
    Prototype { name: "Ball", parent: "Artifact", attributes: &["Round", "Soft"], weight: "Light", size: "Medium" },
    Prototype { name: "Dog", parent: "Living", attributes: &["Soft"], weight: "Moderate", size: "Medium" },
];

/// The hidden rules: an object has an affordance iff the formula (over `o`)
/// holds for it.
pub const RULES: [(&str, &str); 6] = [
    ("Grasp", "HasVisualAttribute(o, Handle) v HasSize(o, Small)"),
    ("Lift", "!HasWeight(o, Heavy)"),
    ("Throw", "HasVisualAttribute(o, Round) ^ HasWeight(o, Light)"),
    ("Push", "HasSize(o, Large) v HasVisualAttribute(o, Round)"),
    ("Sit", "HasVisualAttribute(o, Flat) ^ HasSize(o, Large)"),
    ("Contain", "HasVisualAttribute(o, Hollow)"),
];

const KEEP_ATTRIBUTE: f64 = 0.85;
const EXTRA_ATTRIBUTE: f64 = 0.08;
const KEEP_PROTOTYPE_VALUE: f64 = 0.8;

fn rule_formulas(decls: &[crate::logic::PredicateDecl]) -> Vec<(&'static str, Formula)> {
    RULES
        .iter()
        .map(|(a, f)| (*a, parse_formula(f, decls).expect("rule parses")))
        .collect()
}

/// The rule table as a model: `HasAffordance(o, A) <=> rule` for each row.
pub fn oracle_model(weight: f64) -> Result<MlnModel> {
    let base = affordance_model();
    let mut formulas = Vec::new();
    for (a, rule) in RULES {
        let text = format!("HasAffordance(o, {a}) <=> ({rule})");
        formulas.push(WeightedFormula::soft(weight, parse_formula(&text, &base.decls)?));
    }
    MlnModel::new(base.decls, formulas, Default::default())
}

fn object_name(prefix: &str, i: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("{prefix}{:0width$}", i + 1)
}

fn pick_other<'a>(rng: &mut ChaCha8Rng, all: &[&'a str], proto: &'a str) -> &'a str {
    if rng.gen_bool(KEEP_PROTOTYPE_VALUE) {
        proto
    } else {
        all.choose(rng).expect("non-empty")
    }
}

fn generate_object(
    rng: &mut ChaCha8Rng,
    name: &str,
    rules: &[(&'static str, Formula)],
    out: &mut Vec<EvidenceAtom>,
) {
    let proto = &PROTOTYPES[rng.gen_range(0..PROTOTYPES.len())];
    let mut facts = vec![
        EvidenceAtom::new("IsA", [name, proto.name], true),
        EvidenceAtom::new("IsA", [name, proto.parent], true),
    ];
    for a in ATTRIBUTES {
        let p = if proto.attributes.contains(&a) { KEEP_ATTRIBUTE } else { EXTRA_ATTRIBUTE };
        if rng.gen_bool(p) {
            facts.push(EvidenceAtom::new("HasVisualAttribute", [name, a], true));
        }
    }
    let weight = pick_other(rng, &WEIGHTS, proto.weight);
    facts.push(EvidenceAtom::new("HasWeight", [name, weight], true));
    let size = pick_other(rng, &SIZES, proto.size);
    facts.push(EvidenceAtom::new("HasSize", [name, size], true));

    let holds = |atom: &crate::logic::Atom| {
        facts.iter().any(|f| {
            f.predicate == atom.predicate
                && f.args.len() == atom.args.len()
                && f.args[0] == name
                && f.args[1..].iter().zip(&atom.args[1..]).all(|(c, t)| c == t.name())
        })
    };
    let mut labels = Vec::new();
    for (aff, rule) in rules {
        if rule.eval(&holds) {
            labels.push(EvidenceAtom::new(QUERY_PREDICATE, [name, aff], true));
        }
    }
    out.extend(facts);
    out.extend(labels);
}

/// Deterministic in `seed`. Training objects are named `Tr01..`, test
/// objects `Te01..`.
pub fn generate_synthetic_dataset(seed: u64, n_train: usize, n_test: usize) -> Result<Dataset> {
    if n_train < 2 || n_test < 2 {
        return Err(crate::error::Error::Invalid(
            "the synthetic dataset needs at least 2 training and 2 test objects".into(),
        ));
    }
    let model = affordance_model();
    let rules = rule_formulas(&model.decls);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    for i in 0..n_train {
        generate_object(&mut rng, &object_name("Tr", i, n_train), &rules, &mut train);
    }
    let mut test = Vec::new();
    for i in 0..n_test {
        generate_object(&mut rng, &object_name("Te", i, n_test), &rules, &mut test);
    }
    Ok(Dataset {
        model,
        train: EvidenceDatabase::new(train),
        test: EvidenceDatabase::new(test),
        query_predicate: QUERY_PREDICATE.into(),
        object_domain: OBJECT_DOMAIN.into(),
    })
}
