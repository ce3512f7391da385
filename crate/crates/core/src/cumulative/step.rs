//! One cumulative learning step: classify incoming knowledge, train the
//! affected categories with warm starts, and merge the result back.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::{
    add_unit_triplets, build_knowledge_list, domain_signature, normalize_in_place,
    KnowledgeCategory, KnowledgeList, KnowledgeTriplet, UpdateStrategy,
};
use crate::error::{Error, Result};
use crate::learning::{
    count_formula_evidence, learn_discriminative_on, learn_generative_on, LearnMethod,
    LearnOptions, TrainingProblem,
};
use crate::logic::{extract_domains, find_decl, EvidenceDatabase, MlnModel, PredicateDecl};

/// New knowledge for a step: formulas and declarations, evidence, or both.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Incoming {
    pub model: Option<MlnModel>,
    pub db: Option<EvidenceDatabase>,
}

impl Incoming {
    pub fn db(db: EvidenceDatabase) -> Self {
        Incoming {
            model: None,
            db: Some(db),
        }
    }

    pub fn model(model: MlnModel) -> Self {
        Incoming {
            model: Some(model),
            db: None,
        }
    }

    pub fn both(model: MlnModel, db: EvidenceDatabase) -> Self {
        Incoming {
            model: Some(model),
            db: Some(db),
        }
    }
}

/// How the affected categories are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitTraining {
    /// One model over all affected categories and their evidence.
    #[default]
    Joint,
    /// Each affected category on its own evidence partition, in parallel.
    Independent,
}

/// Learns structure when everything incoming is already known. Returns a
/// weighted model that is merged back like a trained split.
pub trait StructureLearner: Send + Sync {
    fn learn(&self, model: &MlnModel, db: &EvidenceDatabase, opts: &LearnOptions) -> Result<MlnModel>;
}

#[derive(Clone, Default)]
pub enum StructureHook {
    #[default]
    Unsupported,
    /// Fall back to weight learning.
    WeightsOnly,
    Custom(Arc<dyn StructureLearner>),
}

impl fmt::Debug for StructureHook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureHook::Unsupported => f.write_str("Unsupported"),
            StructureHook::WeightsOnly => f.write_str("WeightsOnly"),
            StructureHook::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClaOptions {
    pub learn: LearnOptions,
    pub split_training: SplitTraining,
    pub structure_hook: StructureHook,
    /// The structure hook runs when at least this fraction of the incoming
    /// items is already known.
    pub min_known_fraction: f64,
}

impl Default for ClaOptions {
    fn default() -> Self {
        ClaOptions {
            learn: LearnOptions::default(),
            split_training: SplitTraining::Joint,
            structure_hook: StructureHook::Unsupported,
            min_known_fraction: 1.0,
        }
    }
}

/// What an incoming step contains that the list does not know yet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Novelty {
    pub new_predicates: Vec<String>,
    /// `(domain, constant)` pairs.
    pub new_constants: Vec<(String, String)>,
    pub new_formulas: usize,
    pub known: usize,
    pub total: usize,
}

impl Novelty {
    pub fn known_fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.known as f64 / self.total as f64
        }
    }
}

fn all_decls(kl: &KnowledgeList, incoming: &Incoming) -> Result<Vec<PredicateDecl>> {
    let mut decls = kl.decls.clone();
    if let Some(m) = &incoming.model {
        for d in &m.decls {
            match find_decl(&decls, &d.name) {
                Some(old) if old == d => {}
                Some(old) => {
                    return Err(Error::Invalid(format!(
                        "predicate `{}` redeclared as `{d}` (known as `{old}`)",
                        d.name
                    )))
                }
                None => decls.push(d.clone()),
            }
        }
    }
    Ok(decls)
}

/// Counts incoming predicates, constants and formulas against the list.
pub fn classify(kl: &KnowledgeList, incoming: &Incoming) -> Result<Novelty> {
    let decls = all_decls(kl, incoming)?;
    let mut preds = BTreeSet::new();
    let mut consts = BTreeSet::new();
    let mut out = Novelty::default();
    if let Some(m) = &incoming.model {
        for d in &m.decls {
            preds.insert(d.name.clone());
        }
        for wf in &m.formulas {
            out.total += 1;
            if kl.get(&wf.formula).is_some() {
                out.known += 1;
            } else {
                out.new_formulas += 1;
            }
            for p in wf.formula.predicates() {
                preds.insert(p.to_string());
            }
        }
        for (dom, cs) in m.domains.iter() {
            for c in cs {
                consts.insert((dom.to_string(), c.clone()));
            }
        }
    }
    if let Some(db) = &incoming.db {
        db.validate(&decls)?;
        for p in db.predicates() {
            preds.insert(p.to_string());
        }
        for (dom, cs) in extract_domains(db, &decls).iter() {
            for c in cs {
                consts.insert((dom.to_string(), c.clone()));
            }
        }
    }
    for p in preds {
        out.total += 1;
        if kl.decl(&p).is_some() {
            out.known += 1;
        } else {
            out.new_predicates.push(p);
        }
    }
    for (dom, c) in consts {
        out.total += 1;
        if kl.domains.contains(&dom, &c) {
            out.known += 1;
        } else {
            out.new_constants.push((dom, c));
        }
    }
    Ok(out)
}

struct Split {
    categories: Vec<KnowledgeCategory>,
    db: EvidenceDatabase,
}

/// Runs one step and returns the updated list; `kl` is never modified.
pub fn cla_step(
    kl: &KnowledgeList,
    incoming: &Incoming,
    s: &UpdateStrategy,
    opts: &ClaOptions,
) -> Result<KnowledgeList> {
    if incoming.model.is_none() && incoming.db.is_none() {
        return Err(Error::EmptyIncoming);
    }
    let novelty = classify(kl, incoming)?;
    if novelty.total == 0 {
        return Err(Error::EmptyIncoming);
    }
    let decls = all_decls(kl, incoming)?;
    let db = incoming.db.clone().unwrap_or_default().dedup();

    // Working copy: declarations, constants and new formulas; weights of
    // known formulas are left as they are.
    let mut base = kl.clone();
    base.decls = decls.clone();
    let mut working = base.clone();
    let mut signatures: Vec<BTreeSet<String>> = Vec::new();
    if let Some(m) = &incoming.model {
        let m = MlnModel::new(decls.clone(), m.formulas.clone(), m.domains.clone())?;
        working.domains.extend(&m.domains);
        for wf in &m.formulas {
            signatures.push(domain_signature(&wf.formula, &decls)?);
            if working.get(&wf.formula).is_none() {
                working.insert(KnowledgeTriplet::new(wf.clone(), 0), s)?;
            }
        }
        let fresh: Vec<&str> = m
            .decls
            .iter()
            .filter(|d| kl.decl(&d.name).is_none())
            .map(|d| d.name.as_str())
            .collect();
        for name in &fresh {
            if let Some(d) = find_decl(&decls, name) {
                signatures.push(d.arg_domains.iter().cloned().collect());
            }
        }
        add_unit_triplets(&mut working, fresh)?;
    }
    working.domains.extend(&extract_domains(&db, &decls));
    for a in &db.atoms {
        let d = find_decl(&decls, &a.predicate).expect("validated");
        signatures.push(d.arg_domains.iter().cloned().collect());
    }
    normalize_in_place(&mut working, s)?;
    base.domains = working.domains.clone();

    let structure = novelty.known_fraction() >= opts.min_known_fraction;
    if structure {
        if let StructureHook::Unsupported = opts.structure_hook {
            return Err(Error::StructureLearningUnsupported);
        }
    }

    let affected: Vec<&KnowledgeCategory> = working
        .categories
        .iter()
        .filter(|c| signatures.iter().any(|sig| !c.domains.is_disjoint(sig)))
        .collect();
    let atom_domains = |a: &crate::logic::EvidenceAtom| -> BTreeSet<String> {
        find_decl(&decls, &a.predicate)
            .map(|d| d.arg_domains.iter().cloned().collect())
            .unwrap_or_default()
    };
    let fits = |c: &KnowledgeCategory, a: &crate::logic::EvidenceAtom| atom_domains(a).is_subset(&c.domains);

    let joint = structure || opts.split_training == SplitTraining::Joint;
    let splits: Vec<Split> = if joint {
        if affected.is_empty() {
            Vec::new()
        } else {
            vec![Split {
                categories: affected.iter().map(|c| (*c).clone()).collect(),
                db: db.filter(|a| affected.iter().any(|c| fits(c, a))),
            }]
        }
    } else {
        affected
            .iter()
            .map(|c| Split {
                categories: vec![(*c).clone()],
                db: db.filter(|a| fits(c, a)),
            })
            .collect()
    };

    let run = |split: &Split| -> Result<Vec<KnowledgeTriplet>> {
        if split.db.is_empty() {
            // Nothing to learn from: only formulas the list lacks are carried over.
            return Ok(split
                .categories
                .iter()
                .flat_map(|c| c.triplets.iter())
                .filter(|t| kl.locate(t.key()).is_none())
                .cloned()
                .collect());
        }
        let mut model = working.categories_to_mln(&split.categories);
        model.decls = decls.clone();
        model.domains = model.formula_domains();
        if structure {
            if let StructureHook::Custom(learner) = &opts.structure_hook {
                let learned = learner.learn(&model, &split.db, &opts.learn)?;
                let rebuilt = build_knowledge_list(&learned, &split.db)?;
                return Ok(rebuilt.triplets().cloned().collect());
            }
        }
        train_split(&model, &split.db, &working, opts)
    };

    let results: Vec<Result<Vec<KnowledgeTriplet>>> = if splits.len() > 1 {
        splits.par_iter().map(run).collect()
    } else {
        splits.iter().map(run).collect()
    };
    let mut out = base;
    for r in results {
        for t in r? {
            out.insert(t, s)?;
        }
    }
    normalize_in_place(&mut out, s)?;
    Ok(out)
}

fn train_split(
    model: &MlnModel,
    db: &EvidenceDatabase,
    working: &KnowledgeList,
    opts: &ClaOptions,
) -> Result<Vec<KnowledgeTriplet>> {
    let problem = match TrainingProblem::new(model, db, Some(&working.domains), &opts.learn.grounding) {
        Ok(p) => p,
        Err(Error::EmptyGrounding) => {
            return Ok(model
                .formulas
                .iter()
                .map(|wf| KnowledgeTriplet::new(wf.clone(), count_formula_evidence(&wf.formula, db)))
                .collect())
        }
        Err(e) => return Err(e),
    };
    let warm = problem.initial_weights();
    let query: Vec<String> = opts
        .learn
        .query_predicates
        .iter()
        .filter(|q| problem.net.atoms().iter().any(|a| &a.predicate == *q))
        .cloned()
        .collect();
    let learned = match opts.learn.method {
        LearnMethod::Discriminative if !query.is_empty() => {
            learn_discriminative_on(&problem, &query, Some(&warm), &opts.learn)?
        }
        _ => learn_generative_on(&problem, Some(&warm), &opts.learn)?,
    };
    let dedup = db.dedup();
    let mut out: Vec<KnowledgeTriplet> = learned
        .templates
        .iter()
        .zip(&learned.evidence_counts)
        .map(|(t, &z)| KnowledgeTriplet::new(t.to_weighted(), z))
        .collect();
    // Plus-formulas stay in the list so later constants are expanded too.
    for wf in &model.formulas {
        if wf.formula.has_plus_variables() {
            out.push(KnowledgeTriplet::new(wf.clone(), count_formula_evidence(&wf.formula, &dedup)));
        }
    }
    Ok(out)
}

/// [`cla_step`] that replaces `kl` only on success.
pub fn cla_step_in_place(
    kl: &mut KnowledgeList,
    incoming: &Incoming,
    s: &UpdateStrategy,
    opts: &ClaOptions,
) -> Result<()> {
    *kl = cla_step(kl, incoming, s, opts)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulative::unit_formula;
    use crate::learning::learn_generative;
    use crate::logic::{parse_db, parse_mln, Weight};

    fn model() -> MlnModel {
        parse_mln("Size(obj, size)\nAff(obj, act)\n0 Size(o, +s) => Aff(o, +a)\n").unwrap()
    }

    fn db1(m: &MlnModel) -> EvidenceDatabase {
        parse_db("Size(A, Big)\nAff(A, Push)\nSize(B, Small)\nAff(B, Throw)\n", &m.decls).unwrap()
    }

    #[test]
    fn single_naive_step_equals_batch() {
        let m = model();
        let db = db1(&m);
        let kl = build_knowledge_list(&m, &EvidenceDatabase::default()).unwrap();
        let opts = ClaOptions::default();
        let out = cla_step(&kl, &Incoming::db(db.clone()), &UpdateStrategy::Naive, &opts).unwrap();
        let batch = learn_generative(&m, &db, None, &opts.learn).unwrap();
        assert_eq!(out.num_formulas(), batch.templates.len() + 1);
        for t in &batch.templates {
            let got = out.get(&t.formula).expect("trained formula present");
            assert_eq!(got.weight(), t.weight);
        }
        out.check_invariants().unwrap();
    }

    #[test]
    fn known_evidence_needs_the_structure_hook() {
        let m = model();
        let db = db1(&m);
        let kl = build_knowledge_list(&m, &db).unwrap();
        let mut kl2 = kl.clone();
        let err = cla_step_in_place(&mut kl2, &Incoming::db(db.clone()), &UpdateStrategy::Naive, &ClaOptions::default());
        assert!(matches!(err, Err(Error::StructureLearningUnsupported)));
        assert_eq!(kl2, kl);

        let opts = ClaOptions {
            structure_hook: StructureHook::WeightsOnly,
            ..ClaOptions::default()
        };
        let out = cla_step(&kl, &Incoming::db(db), &UpdateStrategy::Naive, &opts).unwrap();
        assert_eq!(out.categories.len(), kl.categories.len());
        assert!(out.num_formulas() > kl.num_formulas());
    }

    #[test]
    fn new_declaration_alone_makes_zero_triplet() {
        let m = model();
        let kl = build_knowledge_list(&m, &db1(&m)).unwrap();
        let incoming = parse_mln("Color(obj, color)\n").unwrap();
        let out = cla_step(&kl, &Incoming::model(incoming.clone()), &UpdateStrategy::Balanced, &ClaOptions::default()).unwrap();
        assert_eq!(out.categories.len(), kl.categories.len() + 1);
        let t = out.get(&unit_formula(&incoming.decls[0])).unwrap();
        assert_eq!((t.weight(), t.z), (Weight::Soft(0.0), 0));
        assert_eq!(out.categories.last().unwrap().triplets.len(), 1);
    }

    #[test]
    fn balanced_keeps_weight_without_new_evidence() {
        let m = parse_mln("Size(obj, size)\nAff(obj, act)\nColor(obj, color)\n0.7 Size(o, Big) => Aff(o, Push)\n0 Color(o, +c)\n").unwrap();
        let db = parse_db("Size(A, Big)\nAff(A, Push)\nColor(A, Red)\n", &m.decls).unwrap();
        let opts = ClaOptions {
            split_training: SplitTraining::Independent,
            ..ClaOptions::default()
        };
        let kl = build_knowledge_list(&m, &db).unwrap();
        let step = parse_db("Color(C, Blue)\n", &m.decls).unwrap();
        let out = cla_step(&kl, &Incoming::db(step), &UpdateStrategy::Balanced, &opts).unwrap();
        let f = &m.formulas[0].formula;
        assert_eq!(out.get(f).unwrap().weight(), Weight::Soft(0.7));
        assert_eq!(out.get(f).unwrap().z, 2);
    }

    #[test]
    fn failure_leaves_list_untouched() {
        let m = model();
        let kl = build_knowledge_list(&m, &EvidenceDatabase::default()).unwrap();
        let mut opts = ClaOptions::default();
        opts.learn.grounding.max_clauses = 1;
        let mut kl2 = kl.clone();
        let r = cla_step_in_place(&mut kl2, &Incoming::db(db1(&m)), &UpdateStrategy::Naive, &opts);
        assert!(matches!(r, Err(Error::GroundingCap { .. })));
        assert_eq!(kl2, kl);
        assert!(matches!(
            cla_step(&kl, &Incoming::default(), &UpdateStrategy::Naive, &opts),
            Err(Error::EmptyIncoming)
        ));
    }

    #[test]
    fn custom_structure_learner_output_is_merged() {
        struct AddUnit;
        impl StructureLearner for AddUnit {
            fn learn(&self, model: &MlnModel, _: &EvidenceDatabase, _: &LearnOptions) -> Result<MlnModel> {
                let mut m = model.clone();
                let f = crate::logic::parse_weighted_formula("0.25 Aff(o, Push)", &m.decls)?;
                m.formulas.push(f);
                Ok(m)
            }
        }
        let m = model();
        let db = db1(&m);
        let kl = build_knowledge_list(&m, &db).unwrap();
        let opts = ClaOptions {
            structure_hook: StructureHook::Custom(Arc::new(AddUnit)),
            ..ClaOptions::default()
        };
        let out = cla_step(&kl, &Incoming::db(db), &UpdateStrategy::Naive, &opts).unwrap();
        assert_eq!(out.num_formulas(), kl.num_formulas() + 1);
    }
}
