//! Versioned JSON form of a knowledge list.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{KnowledgeCategory, KnowledgeList, KnowledgeTriplet};
use crate::error::{Error, Result};
use crate::logic::{parse_formula, parse_mln, DomainMap, Weight, WeightedFormula};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FileRepr {
    version: u32,
    decls: Vec<String>,
    domains: BTreeMap<String, Vec<String>>,
    categories: Vec<CategoryRepr>,
    next_index: usize,
}

#[derive(Serialize, Deserialize)]
struct CategoryRepr {
    index: usize,
    domains: Vec<String>,
    triplets: Vec<TripletRepr>,
}

#[derive(Serialize, Deserialize)]
struct TripletRepr {
    formula_text: String,
    weight: WeightRepr,
    z: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightRepr {
    Soft(f64),
    Hard(HardTag),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum HardTag {
    Hard,
}

fn triplet_repr(t: &KnowledgeTriplet) -> Result<TripletRepr> {
    let weight = match t.formula.weight {
        Weight::Soft(w) if w.is_finite() => WeightRepr::Soft(w),
        Weight::Soft(w) => {
            return Err(Error::Invalid(format!(
                "weight {w} of `{}` cannot be stored",
                t.formula.formula
            )))
        }
        Weight::Hard => WeightRepr::Hard(HardTag::Hard),
    };
    Ok(TripletRepr {
        formula_text: t.formula.formula.to_string(),
        weight,
        z: t.z,
    })
}

pub fn to_json(kl: &KnowledgeList) -> Result<String> {
    let mut categories = Vec::with_capacity(kl.categories.len());
    for c in &kl.categories {
        categories.push(CategoryRepr {
            index: c.index,
            domains: c.domains.iter().cloned().collect(),
            triplets: c.triplets.iter().map(triplet_repr).collect::<Result<_>>()?,
        });
    }
    let repr = FileRepr {
        version: FORMAT_VERSION,
        decls: kl.decls.iter().map(ToString::to_string).collect(),
        domains: kl
            .domains
            .iter()
            .map(|(d, cs)| (d.to_string(), cs.iter().cloned().collect()))
            .collect(),
        categories,
        next_index: kl.next_index,
    };
    let mut s = serde_json::to_string_pretty(&repr)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<KnowledgeList> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let found = value.get("version").and_then(serde_json::Value::as_u64);
    match found {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::Version {
                found: v as u32,
                expected: FORMAT_VERSION,
            })
        }
        None => return Err(Error::Corrupt("missing `version`".into())),
    }
    let repr: FileRepr = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    let decls = if repr.decls.is_empty() {
        Vec::new()
    } else {
        let model = parse_mln(&repr.decls.join("\n")).map_err(|e| Error::Corrupt(e.to_string()))?;
        if !model.formulas.is_empty() || model.decls.len() != repr.decls.len() {
            return Err(Error::Corrupt("`decls` holds something other than declarations".into()));
        }
        model.decls
    };
    let mut domains = DomainMap::new();
    for (d, cs) in repr.domains {
        for c in cs {
            domains.insert(d.clone(), c);
        }
    }
    let mut categories = Vec::with_capacity(repr.categories.len());
    for c in repr.categories {
        let mut cat = KnowledgeCategory::new(c.index, c.domains.into_iter().collect::<BTreeSet<_>>());
        for t in c.triplets {
            let formula = parse_formula(&t.formula_text, &decls)
                .map_err(|e| Error::Corrupt(format!("`{}`: {e}", t.formula_text)))?;
            let weight = match t.weight {
                WeightRepr::Soft(w) => Weight::Soft(w),
                WeightRepr::Hard(_) => Weight::Hard,
            };
            cat.triplets.push(KnowledgeTriplet::new(WeightedFormula { weight, formula }, t.z));
        }
        categories.push(cat);
    }
    let kl = KnowledgeList {
        decls,
        domains,
        categories,
        next_index: repr.next_index,
    };
    kl.check_invariants()
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(kl)
}

pub fn save_knowledge_list(kl: &KnowledgeList, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json(kl)?)?;
    Ok(())
}

pub fn load_knowledge_list(path: impl AsRef<Path>) -> Result<KnowledgeList> {
    from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulative::build_knowledge_list;
    use crate::logic::{parse_mln, EvidenceDatabase, Formula, Term};

    #[test]
    fn empty_list_round_trips() {
        let kl = KnowledgeList::default();
        let text = to_json(&kl).unwrap();
        assert_eq!(from_json(&text).unwrap(), kl);
    }

    #[test]
    fn shape_size_list_round_trip() {
        let m = parse_mln(
            "object = { Ball, Glass, Shoe, Chair }\nshape = { Round, Cube }\n\
             action = { Push, Throw, Pull, Open }\nsize = { Large, Small }\n\
             Shape(object, shape)\nAffordance(object, action)\nSize(object, size)\n\
             0.563 Size(o, Large) => Affordance(o, Push)\n\
             -1.27 Size(o, Small) => !Affordance(o, Throw)\n\
             Shape(o, Round) => Affordance(o, Push).\n",
        )
        .unwrap();
        let mut kl = build_knowledge_list(&m, &EvidenceDatabase::default()).unwrap();
        kl.categories[0].triplets[0].z = 8;
        kl.categories[0].triplets[1].z = 4;
        let text = to_json(&kl).unwrap();
        let back = from_json(&text).unwrap();
        assert_eq!(back, kl);
        assert_eq!(to_json(&back).unwrap(), text);
    }

    #[test]
    fn version_and_corruption() {
        let kl = KnowledgeList::default();
        let text = to_json(&kl).unwrap().replace("\"version\": 1", "\"version\": 99");
        assert!(matches!(from_json(&text), Err(Error::Version { found: 99, .. })));
        assert!(matches!(from_json("{ not json"), Err(Error::Corrupt(_))));
        assert!(matches!(from_json("{\"version\": 1}"), Err(Error::Corrupt(_))));
    }

    #[test]
    fn duplicate_formula_is_corrupt() {
        let m = parse_mln("P(a)\nQ(a, b)\n1 P(x)\n2 Q(x, y)\n").unwrap();
        let mut kl = build_knowledge_list(&m, &EvidenceDatabase::default()).unwrap();
        kl.categories[0].triplets.push(KnowledgeTriplet::soft(
            Formula::atom("P", vec![Term::Var("y".into())]),
            3.0,
            1,
        ));
        let text = to_json(&kl).unwrap();
        assert!(matches!(from_json(&text), Err(Error::Corrupt(_))));
    }
}
