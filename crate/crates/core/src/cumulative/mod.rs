//! Knowledge lists: formulas clustered into categories by the set of domains
//! they range over, with weight/evidence-count triplets merged by an update
//! strategy.

mod io;
mod step;

pub use io::{from_json, load_knowledge_list, save_knowledge_list, to_json, FORMAT_VERSION};
pub use step::{
    cla_step, cla_step_in_place, classify, ClaOptions, Incoming, Novelty, SplitTraining,
    StructureHook, StructureLearner,
};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::learning::count_formula_evidence;
use crate::logic::{
    extract_domains, find_decl, DomainMap, EvidenceDatabase, Formula, MlnModel, PredicateDecl,
    Term, Weight, WeightedFormula,
};

/// A formula with its weight and the evidence count its weight was learned on.
#[derive(Debug, Clone)]
pub struct KnowledgeTriplet {
    pub formula: WeightedFormula,
    pub z: u64,
    key: String,
}

impl PartialEq for KnowledgeTriplet {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.z == other.z && weight_bits(self.formula.weight) == weight_bits(other.formula.weight)
    }
}

fn weight_bits(w: Weight) -> Option<u64> {
    w.value().map(f64::to_bits)
}

impl KnowledgeTriplet {
    pub fn new(formula: WeightedFormula, z: u64) -> Self {
        let key = formula.formula.canonical_key();
        KnowledgeTriplet { formula, z, key }
    }

    pub fn soft(formula: Formula, weight: f64, z: u64) -> Self {
        Self::new(WeightedFormula::soft(weight, formula), z)
    }

    /// Canonical form used to decide whether two formulas are the same.
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn weight(&self) -> Weight {
        self.formula.weight
    }

    fn with(&self, weight: Weight, z: u64) -> Self {
        KnowledgeTriplet {
            formula: WeightedFormula {
                weight,
                formula: self.formula.formula.clone(),
            },
            z,
            key: self.key.clone(),
        }
    }
}

/// User-supplied conflict resolution. Must be a pure function of its inputs.
pub trait MergeRule: Send + Sync {
    fn merge(&self, old: (f64, u64), new: (f64, u64)) -> (f64, u64);
}

#[derive(Clone)]
pub enum UpdateStrategy {
    Naive,
    Conservative,
    Balanced,
    Custom(Arc<dyn MergeRule>),
}

impl UpdateStrategy {
    pub const BUILTIN: [UpdateStrategy; 3] = [
        UpdateStrategy::Naive,
        UpdateStrategy::Conservative,
        UpdateStrategy::Balanced,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            UpdateStrategy::Naive => "naive",
            UpdateStrategy::Conservative => "conservative",
            UpdateStrategy::Balanced => "balanced",
            UpdateStrategy::Custom(_) => "custom",
        }
    }

    /// Resolves a conflict between an old `(w1, z1)` and a new `(w2, z2)`.
    pub fn merge_values(&self, old: (f64, u64), new: (f64, u64)) -> (f64, u64) {
        let ((w1, z1), (w2, z2)) = (old, new);
        match self {
            UpdateStrategy::Naive => (w2, z2),
            UpdateStrategy::Conservative => {
                if z2 > z1 {
                    (w2, z2)
                } else {
                    (w1, z1)
                }
            }
            UpdateStrategy::Balanced => {
                if z1 == 0 && z2 == 0 {
                    ((w1 + w2) / 2.0, 0)
                } else if w1 == w2 {
                    // The weighted mean of equal values; avoids rounding drift.
                    (w1, z1 + z2)
                } else {
                    let w = (z1 as f64 * w1 + z2 as f64 * w2) / (z1 + z2) as f64;
                    (w.clamp(w1.min(w2), w1.max(w2)), z1 + z2)
                }
            }
            UpdateStrategy::Custom(rule) => rule.merge(old, new),
        }
    }
}

impl fmt::Debug for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for UpdateStrategy {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (UpdateStrategy::Custom(a), UpdateStrategy::Custom(b)) => Arc::ptr_eq(a, b),
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

impl FromStr for UpdateStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" | "cl-naive" => Ok(UpdateStrategy::Naive),
            "conservative" | "cl-conservative" => Ok(UpdateStrategy::Conservative),
            "balanced" | "cl-balanced" => Ok(UpdateStrategy::Balanced),
            _ => Err(Error::Invalid(format!("unknown strategy `{s}`"))),
        }
    }
}

/// Merges two triplets of the same formula. A hard formula stays hard.
pub fn merge_triplet(
    old: &KnowledgeTriplet,
    new: &KnowledgeTriplet,
    s: &UpdateStrategy,
) -> Result<KnowledgeTriplet> {
    if old.key != new.key {
        return Err(Error::FormulaMismatch {
            old: old.formula.formula.to_string(),
            new: new.formula.formula.to_string(),
        });
    }
    let (w1, w2) = (old.formula.weight, new.formula.weight);
    let (w, z) = s.merge_values((w1.value().unwrap_or(0.0), old.z), (w2.value().unwrap_or(0.0), new.z));
    let weight = if w1.is_hard() || w2.is_hard() {
        Weight::Hard
    } else {
        Weight::Soft(w)
    };
    Ok(old.with(weight, z))
}

/// Union of the argument domains of every predicate in the formula.
pub fn domain_signature(f: &Formula, decls: &[PredicateDecl]) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for a in f.atoms() {
        let d = find_decl(decls, &a.predicate).ok_or_else(|| Error::UndeclaredPredicate {
            name: a.predicate.clone(),
            line: 0,
        })?;
        out.extend(d.arg_domains.iter().cloned());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeCategory {
    pub index: usize,
    pub domains: BTreeSet<String>,
    pub triplets: Vec<KnowledgeTriplet>,
}

impl KnowledgeCategory {
    pub fn new(index: usize, domains: BTreeSet<String>) -> Self {
        KnowledgeCategory {
            index,
            domains,
            triplets: Vec::new(),
        }
    }

    pub fn find(&self, key: &str) -> Option<usize> {
        self.triplets.iter().position(|t| t.key == key)
    }

    pub fn get(&self, formula: &Formula) -> Option<&KnowledgeTriplet> {
        self.find(&formula.canonical_key()).map(|i| &self.triplets[i])
    }

    fn absorb(&mut self, t: KnowledgeTriplet, s: &UpdateStrategy) -> Result<()> {
        match self.find(&t.key) {
            Some(i) => self.triplets[i] = merge_triplet(&self.triplets[i], &t, s)?,
            None => self.triplets.push(t),
        }
        Ok(())
    }
}

/// Merges `src` into `target`, which must range over a superset of its domains.
/// `src` holds the newer knowledge when formulas conflict.
pub fn merge_category_into(
    target: &KnowledgeCategory,
    src: &KnowledgeCategory,
    s: &UpdateStrategy,
) -> Result<KnowledgeCategory> {
    if !src.domains.is_subset(&target.domains) {
        return Err(Error::NotSubset {
            src: src.index,
            target: target.index,
        });
    }
    let mut out = target.clone();
    for t in &src.triplets {
        out.absorb(t.clone(), s)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeList {
    pub decls: Vec<PredicateDecl>,
    pub domains: DomainMap,
    pub categories: Vec<KnowledgeCategory>,
    pub next_index: usize,
}

impl KnowledgeList {
    pub fn new(decls: Vec<PredicateDecl>, domains: DomainMap) -> Self {
        KnowledgeList {
            decls,
            domains,
            categories: Vec::new(),
            next_index: 0,
        }
    }

    pub fn category(&self, index: usize) -> Option<&KnowledgeCategory> {
        self.categories.iter().find(|c| c.index == index)
    }

    /// Position of the category and triplet holding a canonical formula.
    pub fn locate(&self, key: &str) -> Option<(usize, usize)> {
        self.categories
            .iter()
            .enumerate()
            .find_map(|(ci, c)| c.find(key).map(|ti| (ci, ti)))
    }

    pub fn get(&self, formula: &Formula) -> Option<&KnowledgeTriplet> {
        let (ci, ti) = self.locate(&formula.canonical_key())?;
        Some(&self.categories[ci].triplets[ti])
    }

    pub fn triplets(&self) -> impl Iterator<Item = &KnowledgeTriplet> {
        self.categories.iter().flat_map(|c| c.triplets.iter())
    }

    pub fn num_formulas(&self) -> usize {
        self.categories.iter().map(|c| c.triplets.len()).sum()
    }

    pub fn formula_keys(&self) -> BTreeSet<String> {
        self.triplets().map(|t| t.key.clone()).collect()
    }

    pub fn decl(&self, name: &str) -> Option<&PredicateDecl> {
        find_decl(&self.decls, name)
    }

    /// Adds a declaration unless one of that name exists. A same-named
    /// declaration over different domains is an error.
    pub fn declare(&mut self, d: &PredicateDecl) -> Result<bool> {
        match self.decl(&d.name) {
            Some(old) if old == d => Ok(false),
            Some(old) => Err(Error::Invalid(format!(
                "predicate `{}` redeclared as `{d}` (known as `{old}`)",
                d.name
            ))),
            None => {
                self.decls.push(d.clone());
                Ok(true)
            }
        }
    }

    /// Places a triplet: merged into the existing copy of its formula, else
    /// added to the category with exactly its domain signature, else into a
    /// new category. Does not normalize.
    pub fn insert(&mut self, t: KnowledgeTriplet, s: &UpdateStrategy) -> Result<()> {
        if let Some((ci, ti)) = self.locate(&t.key) {
            let merged = merge_triplet(&self.categories[ci].triplets[ti], &t, s)?;
            self.categories[ci].triplets[ti] = merged;
            return Ok(());
        }
        let sig = domain_signature(&t.formula.formula, &self.decls)?;
        match self.categories.iter_mut().find(|c| c.domains == sig) {
            Some(c) => c.triplets.push(t),
            None => {
                let mut c = KnowledgeCategory::new(self.next_index, sig);
                self.next_index += 1;
                c.triplets.push(t);
                self.categories.push(c);
            }
        }
        Ok(())
    }

    /// The category as a standalone model at its current weights, with
    /// declarations and domains restricted to the category's domains.
    pub fn category_to_mln(&self, index: usize) -> Result<MlnModel> {
        let c = self.category(index).ok_or(Error::UnknownCategory(index))?;
        Ok(self.categories_to_mln(std::slice::from_ref(c)))
    }

    pub(crate) fn categories_to_mln(&self, cats: &[KnowledgeCategory]) -> MlnModel {
        let doms: BTreeSet<&str> = cats
            .iter()
            .flat_map(|c| c.domains.iter().map(String::as_str))
            .collect();
        let decls = self
            .decls
            .iter()
            .filter(|d| d.arg_domains.iter().all(|x| doms.contains(x.as_str())))
            .cloned()
            .collect();
        MlnModel {
            decls,
            formulas: cats
                .iter()
                .flat_map(|c| c.triplets.iter().map(|t| t.formula.clone()))
                .collect(),
            domains: self.domains.restrict(doms.iter().copied()),
        }
    }

    /// The union of all categories as one model.
    pub fn to_mln(&self) -> MlnModel {
        MlnModel {
            decls: self.decls.clone(),
            formulas: self.triplets().map(|t| t.formula.clone()).collect(),
            domains: self.domains.clone(),
        }
    }

    /// Checks the structural invariants of a normalized list.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen_index = BTreeSet::new();
        let mut seen_key = BTreeSet::new();
        for c in &self.categories {
            if !seen_index.insert(c.index) || c.index >= self.next_index {
                return Err(Error::Corrupt(format!("category index {} is not unique", c.index)));
            }
            let mut sig = BTreeSet::new();
            for t in &c.triplets {
                if !seen_key.insert(t.key.clone()) {
                    return Err(Error::Corrupt(format!(
                        "formula `{}` appears in more than one place",
                        t.formula.formula
                    )));
                }
                t.formula.formula.type_variables(&self.decls)?;
                sig.extend(domain_signature(&t.formula.formula, &self.decls)?);
            }
            if !c.triplets.is_empty() && sig != c.domains {
                return Err(Error::Corrupt(format!(
                    "category {} domains do not match its formulas",
                    c.index
                )));
            }
        }
        for a in &self.categories {
            for b in &self.categories {
                if a.index != b.index && a.domains.is_subset(&b.domains) {
                    return Err(Error::Corrupt(format!(
                        "category {} domains are contained in category {}",
                        a.index, b.index
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Repeatedly merges every category whose domains are contained in another's.
///
/// Sources are taken smallest domain set first, ties by lowest index. The
/// target is the smallest superset (ties by lowest index); for equal domain
/// sets the lower index survives.
pub fn normalize(kl: &KnowledgeList, s: &UpdateStrategy) -> Result<KnowledgeList> {
    let mut out = kl.clone();
    normalize_in_place(&mut out, s)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(kl: &mut KnowledgeList, s: &UpdateStrategy) -> Result<()> {
    loop {
        let mut order: Vec<usize> = (0..kl.categories.len()).collect();
        let rank = |c: &KnowledgeCategory| (c.domains.len(), c.index);
        order.sort_by_key(|&i| rank(&kl.categories[i]));
        let mut pair = None;
        'search: for &src in &order {
            for &tgt in &order {
                if src == tgt {
                    continue;
                }
                let (a, b) = (&kl.categories[src], &kl.categories[tgt]);
                if !a.domains.is_subset(&b.domains) {
                    continue;
                }
                if a.domains == b.domains && a.index < b.index {
                    continue;
                }
                pair = Some((src, tgt));
                break 'search;
            }
        }
        let Some((src, tgt)) = pair else {
            break;
        };
        let merged = merge_category_into(&kl.categories[tgt], &kl.categories[src], s)?;
        kl.categories[tgt] = merged;
        kl.categories.remove(src);
    }
    kl.categories.sort_by_key(|c| c.index);
    Ok(())
}

/// `P(a0, a1, ...)` for a declaration.
pub fn unit_formula(d: &PredicateDecl) -> Formula {
    Formula::atom(
        d.name.clone(),
        (0..d.arity()).map(|i| Term::Var(format!("a{i}"))).collect(),
    )
}

/// The initial knowledge list of a model and a database.
///
/// Each formula becomes a triplet at its current weight with its evidence
/// count; a repeated formula keeps its first occurrence. Each declaration no
/// formula uses gets a zero-weight, zero-count unit triplet.
pub fn build_knowledge_list(model: &MlnModel, db: &EvidenceDatabase) -> Result<KnowledgeList> {
    db.validate(&model.decls)?;
    let db = db.dedup();
    let mut kl = KnowledgeList::new(
        model.decls.clone(),
        model.domains.union(&extract_domains(&db, &model.decls)),
    );
    for wf in &model.formulas {
        wf.formula.type_variables(&model.decls)?;
        for (dom, c) in wf.formula.constants_by_domain(&model.decls) {
            kl.domains.insert(dom, c);
        }
        let t = KnowledgeTriplet::new(wf.clone(), count_formula_evidence(&wf.formula, &db));
        if kl.locate(&t.key).is_none() {
            kl.insert(t, &UpdateStrategy::Naive)?;
        }
    }
    add_unit_triplets(&mut kl, model.decls.iter().map(|d| d.name.as_str()))?;
    normalize_in_place(&mut kl, &UpdateStrategy::Balanced)?;
    Ok(kl)
}

/// Adds unit triplets for the named declarations that no formula in the list uses.
pub(crate) fn add_unit_triplets<'a>(
    kl: &mut KnowledgeList,
    names: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let used: BTreeSet<String> = kl
        .triplets()
        .flat_map(|t| t.formula.formula.predicates().into_iter().map(str::to_string))
        .collect();
    let mut units = Vec::new();
    for name in names {
        if used.contains(name) {
            continue;
        }
        if let Some(d) = kl.decl(name) {
            units.push(KnowledgeTriplet::soft(unit_formula(d), 0.0, 0));
        }
    }
    for t in units {
        kl.insert(t, &UpdateStrategy::Balanced)?;
    }
    Ok(())
}

/// Weights of the list's formulas keyed by canonical form.
pub fn weights_by_key(kl: &KnowledgeList) -> HashMap<String, Weight> {
    kl.triplets().map(|t| (t.key.clone(), t.formula.weight)).collect()
}
