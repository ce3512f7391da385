//! `+`-variable expansion and grounding of a model into a propositional
//! Markov network over ground atoms.
//!
//! Grounding is closed-world: the only atoms that exist are those built from
//! the declared domains (plus any explicitly requested query atoms).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::logic::{
    to_clauses, DomainMap, Formula, MlnModel, PredicateDecl, Term, Weight, WeightedFormula,
};

pub const DEFAULT_GROUNDING_CAP: usize = 5_000_000;
pub const GROUNDING_CAP_ENV: &str = "MLNCLA_GROUNDING_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundingOptions {
    pub max_clauses: usize,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        GroundingOptions {
            max_clauses: DEFAULT_GROUNDING_CAP,
        }
    }
}

impl GroundingOptions {
    /// Default options, with the cap overridden by `MLNCLA_GROUNDING_CAP` if set.
    pub fn from_env() -> Self {
        let max_clauses = std::env::var(GROUNDING_CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_GROUNDING_CAP);
        GroundingOptions { max_clauses }
    }
}

/// One weighted formula after `+`-expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct FormulaTemplate {
    /// Index of the source formula in its model.
    pub origin: usize,
    pub plus_binding: BTreeMap<String, String>,
    pub weight: Weight,
    pub formula: Formula,
}

impl FormulaTemplate {
    pub fn to_weighted(&self) -> WeightedFormula {
        WeightedFormula {
            weight: self.weight,
            formula: self.formula.clone(),
        }
    }
}

/// Expands plus-variables into one template per combination of constants.
///
/// A formula without plus-variables yields itself. A plus-variable over an
/// empty domain yields no templates.
pub fn expand_plus(
    wf: &WeightedFormula,
    decls: &[PredicateDecl],
    domains: &DomainMap,
) -> Result<Vec<FormulaTemplate>> {
    let plus: Vec<String> = wf
        .formula
        .plus_variables()
        .into_iter()
        .map(str::to_string)
        .collect();
    if plus.is_empty() {
        return Ok(vec![FormulaTemplate {
            origin: 0,
            plus_binding: BTreeMap::new(),
            weight: wf.weight,
            formula: wf.formula.clone(),
        }]);
    }
    let types = wf.formula.type_variables(decls)?;
    let choices: Vec<Vec<&str>> = plus
        .iter()
        .map(|v| domains.constants(&types[v]).collect())
        .collect();
    let mut out = Vec::new();
    for_each_product(&choices, |combo| {
        let binding: BTreeMap<String, String> = plus
            .iter()
            .cloned()
            .zip(combo.iter().map(|c| c.to_string()))
            .collect();
        let formula = wf.formula.map_terms(&mut |t| match t {
            Term::PlusVar(v) => binding
                .get(v)
                .map_or_else(|| t.clone(), |c| Term::PlusConst(c.clone())),
            Term::Var(v) => binding
                .get(v)
                .map_or_else(|| t.clone(), |c| Term::Const(c.clone())),
            _ => t.clone(),
        });
        out.push(FormulaTemplate {
            origin: 0,
            plus_binding: binding,
            weight: wf.weight,
            formula,
        });
    });
    Ok(out)
}

/// Calls `f` on every element of the Cartesian product, last position fastest.
fn for_each_product<'a>(choices: &[Vec<&'a str>], mut f: impl FnMut(&[&'a str])) {
    if choices.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; choices.len()];
    let mut combo: Vec<&str> = choices.iter().map(|c| c[0]).collect();
    loop {
        f(&combo);
        let mut pos = choices.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                combo[pos] = choices[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            combo[pos] = choices[pos][0];
        }
    }
}

/// Expands every formula of a model over `plus_domains`.
///
/// Formulas the model states explicitly take precedence over expansions of a
/// plus-formula that produce the same canonical formula. The result is ordered
/// by canonical key, so two models holding the same formulas in a different
/// order produce identical template lists.
pub fn materialize(model: &MlnModel, plus_domains: &DomainMap) -> Result<Vec<FormulaTemplate>> {
    let mut explicit = HashSet::new();
    for wf in &model.formulas {
        if !wf.formula.has_plus_variables() {
            explicit.insert(wf.formula.canonical_key());
        }
    }
    let mut seen = HashSet::new();
    let mut keyed = Vec::new();
    for (origin, wf) in model.formulas.iter().enumerate() {
        let generated = wf.formula.has_plus_variables();
        for mut t in expand_plus(wf, &model.decls, plus_domains)? {
            let key = t.formula.canonical_key();
            if generated && explicit.contains(&key) {
                continue;
            }
            if !seen.insert(key.clone()) {
                continue;
            }
            t.origin = origin;
            keyed.push((key, t));
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(keyed.into_iter().map(|(_, t)| t).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroundLiteral {
    pub atom: u32,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundClause {
    /// Sorted by atom id, each atom at most once.
    pub literals: Vec<GroundLiteral>,
    pub template: usize,
    /// Share of the template weight carried by this clause (1/k for a
    /// formula whose CNF has k clauses).
    pub scale: f64,
}

impl GroundClause {
    pub fn satisfied(&self, world: &[bool]) -> bool {
        self.literals
            .iter()
            .any(|l| world[l.atom as usize] == l.positive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateInfo {
    pub weight: Weight,
    pub text: String,
    /// Ground clauses retained after dropping tautologies.
    pub groundings: usize,
}

#[derive(Debug, Clone, Default)]
pub struct GroundNetwork {
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, usize>,
    clauses: Vec<GroundClause>,
    adjacency: Vec<Vec<usize>>,
    incidence: Vec<Vec<(u32, bool)>>,
    templates: Vec<TemplateInfo>,
}

impl GroundNetwork {
    pub fn atoms(&self) -> &[GroundAtom] {
        &self.atoms
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom_id(&self, atom: &GroundAtom) -> Option<usize> {
        self.index.get(atom).copied()
    }

    pub fn clauses(&self) -> &[GroundClause] {
        &self.clauses
    }

    /// Clause ids mentioning an atom.
    pub fn clauses_of(&self, atom: usize) -> &[usize] {
        &self.adjacency[atom]
    }

    /// `(clause id, literal polarity)` for every clause mentioning an atom.
    pub fn incidence(&self, atom: usize) -> &[(u32, bool)] {
        &self.incidence[atom]
    }

    pub fn templates(&self) -> &[TemplateInfo] {
        &self.templates
    }

    pub fn num_templates(&self) -> usize {
        self.templates.len()
    }

    /// Template weights; hard templates report `None`.
    pub fn template_weights(&self) -> Vec<Option<f64>> {
        self.templates.iter().map(|t| t.weight.value()).collect()
    }

    /// Per-clause weight for the given per-template soft weights. Hard
    /// clauses get `f64::INFINITY`.
    pub fn clause_weights(&self, template_weights: &[f64]) -> Vec<f64> {
        self.clauses
            .iter()
            .map(|c| match self.templates[c.template].weight {
                Weight::Hard => f64::INFINITY,
                Weight::Soft(_) => template_weights[c.template] * c.scale,
            })
            .collect()
    }

    /// Soft weights as stored in the templates (0 for hard ones).
    pub fn soft_weights(&self) -> Vec<f64> {
        self.templates
            .iter()
            .map(|t| t.weight.value().unwrap_or(0.0))
            .collect()
    }

    /// Builds a network directly from propositional clauses, mostly for tests.
    /// Each clause is `(literals, template)`; templates get scale 1.
    pub fn from_clauses(
        atoms: Vec<GroundAtom>,
        templates: Vec<Weight>,
        clauses: Vec<(Vec<(usize, bool)>, usize)>,
    ) -> GroundNetwork {
        let mut b = Builder::default();
        for a in atoms {
            b.intern(a);
        }
        b.templates = templates
            .into_iter()
            .enumerate()
            .map(|(i, weight)| TemplateInfo {
                weight,
                text: format!("t{i}"),
                groundings: 0,
            })
            .collect();
        for (lits, template) in clauses {
            let lits = lits
                .into_iter()
                .map(|(atom, positive)| GroundLiteral {
                    atom: atom as u32,
                    positive,
                })
                .collect();
            b.push_clause(lits, template, 1.0);
        }
        b.finish()
    }
}

#[derive(Default)]
struct Builder {
    atoms: Vec<GroundAtom>,
    index: HashMap<GroundAtom, usize>,
    clauses: Vec<GroundClause>,
    templates: Vec<TemplateInfo>,
}

impl Builder {
    fn intern(&mut self, atom: GroundAtom) -> usize {
        if let Some(&id) = self.index.get(&atom) {
            return id;
        }
        let id = self.atoms.len();
        self.atoms.push(atom.clone());
        self.index.insert(atom, id);
        id
    }

    fn push_clause(&mut self, mut lits: Vec<GroundLiteral>, template: usize, scale: f64) {
        lits.sort_by_key(|l| (l.atom, l.positive));
        lits.dedup();
        if lits.windows(2).any(|w| w[0].atom == w[1].atom) {
            return;
        }
        self.templates[template].groundings += 1;
        self.clauses.push(GroundClause {
            literals: lits,
            template,
            scale,
        });
    }

    fn finish(self) -> GroundNetwork {
        let mut adjacency = vec![Vec::new(); self.atoms.len()];
        let mut incidence = vec![Vec::new(); self.atoms.len()];
        for (ci, c) in self.clauses.iter().enumerate() {
            for l in &c.literals {
                adjacency[l.atom as usize].push(ci);
                incidence[l.atom as usize].push((ci as u32, l.positive));
            }
        }
        GroundNetwork {
            atoms: self.atoms,
            index: self.index,
            clauses: self.clauses,
            adjacency,
            incidence,
            templates: self.templates,
        }
    }
}

/// Grounds templates over the model's domains.
pub fn ground(
    model: &MlnModel,
    templates: &[FormulaTemplate],
    opts: &GroundingOptions,
) -> Result<GroundNetwork> {
    ground_with_atoms(model, templates, std::iter::empty(), opts)
}

/// Like [`ground`], additionally making sure the listed atoms exist even if
/// no clause mentions them. Extra atoms get ids after clause atoms.
pub fn ground_with_atoms(
    model: &MlnModel,
    templates: &[FormulaTemplate],
    extra: impl IntoIterator<Item = GroundAtom>,
    opts: &GroundingOptions,
) -> Result<GroundNetwork> {
    let mut b = Builder {
        templates: templates
            .iter()
            .map(|t| TemplateInfo {
                weight: t.weight,
                text: t.formula.to_string(),
                groundings: 0,
            })
            .collect(),
        ..Builder::default()
    };
    let mut budget: u128 = 0;
    for (ti, t) in templates.iter().enumerate() {
        let clauses = to_clauses(&t.formula);
        if clauses.is_empty() {
            continue;
        }
        let types = t.formula.type_variables(&model.decls)?;
        let vars: Vec<&str> = t.formula.variables();
        let choices: Vec<Vec<&str>> = vars
            .iter()
            .map(|v| model.domains.constants(&types[*v]).collect())
            .collect();
        let substitutions: u128 = choices.iter().map(|c| c.len() as u128).product();
        let required = substitutions * clauses.len() as u128;
        budget += required;
        if budget > opts.max_clauses as u128 {
            return Err(Error::GroundingCap {
                formula: t.formula.to_string(),
                required,
                cap: opts.max_clauses,
            });
        }
        let scale = 1.0 / clauses.len() as f64;
        let slot: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let ground_term = |term: &Term, combo: &[&str]| -> String {
            match term {
                Term::Var(v) | Term::PlusVar(v) => combo[slot[v.as_str()]].to_string(),
                Term::Const(c) | Term::PlusConst(c) => c.clone(),
            }
        };
        let mut pending: Vec<(Vec<GroundLiteral>, usize)> = Vec::new();
        let mut emit = |combo: &[&str], b: &mut Builder| {
            for clause in &clauses {
                let lits: Vec<GroundLiteral> = clause
                    .iter()
                    .map(|lit| {
                        let atom = GroundAtom {
                            predicate: lit.atom.predicate.clone(),
                            args: lit.atom.args.iter().map(|a| ground_term(a, combo)).collect(),
                        };
                        GroundLiteral {
                            atom: b.intern(atom) as u32,
                            positive: lit.positive,
                        }
                    })
                    .collect();
                pending.push((lits, ti));
            }
        };
        if vars.is_empty() {
            emit(&[], &mut b);
        } else {
            for_each_product(&choices, |combo| emit(combo, &mut b));
        }
        for (lits, ti) in pending {
            b.push_clause(lits, ti, scale);
        }
    }
    for a in extra {
        b.intern(a);
    }
    Ok(b.finish())
}

/// Number of ground clauses of a template satisfied by `world`.
pub fn count_true_groundings(template: usize, world: &[bool], net: &GroundNetwork) -> usize {
    net.clauses
        .iter()
        .filter(|c| c.template == template && c.satisfied(world))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::parse_mln;

    fn templates_of(model: &MlnModel) -> Vec<FormulaTemplate> {
        materialize(model, &model.domains).unwrap()
    }

    #[test]
    fn affordance_model_weight_formula_expands_per_constant_pair() {
        let m = parse_mln(
            "weight = { W1, W2 }\naffordance = { Lift, Throw }\n\
             HasWeight(obj, weight)\nHasAffordance(obj, affordance)\n\
             HasWeight(obj,+weight) => HasAffordance(obj,+affordance)\n",
        )
        .unwrap();
        let ts = expand_plus(&m.formulas[0], &m.decls, &m.domains).unwrap();
        assert_eq!(ts.len(), 4);
        assert!(ts.iter().all(|t| !t.formula.has_plus_variables()));
        assert_eq!(ts[0].plus_binding["weight"], "W1");
        assert_eq!(ts[0].plus_binding["affordance"], "Lift");
        assert_eq!(
            ts[3].formula.to_string(),
            "HasWeight(obj, +W2) => HasAffordance(obj, +Throw)"
        );
    }

    #[test]
    fn expansion_edge_cases() {
        let m = parse_mln("weight = { W1 }\nA(obj)\nH(obj, weight)\n1 A(x)\n2 H(x, +w)\n3 H(x, +z) ^ A(x)\n")
            .unwrap();
        let plain = expand_plus(&m.formulas[0], &m.decls, &m.domains).unwrap();
        assert_eq!(plain.len(), 1);
        assert_eq!(plain[0].formula, m.formulas[0].formula);
        let single = expand_plus(&m.formulas[1], &m.decls, &m.domains).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].formula.to_string(), "H(x, +W1)");
        let empty = expand_plus(&m.formulas[1], &m.decls, &DomainMap::new()).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn grounding_is_linear_in_domain() {
        let m = parse_mln("d = { P, Q, R }\nA(d)\nB(d)\n1 !A(x) v B(x)\n").unwrap();
        let net = ground(&m, &templates_of(&m), &GroundingOptions::default()).unwrap();
        assert_eq!(net.clauses().len(), 3);
        assert_eq!(net.num_atoms(), 6);
    }

    #[test]
    fn tautologies_are_dropped() {
        let m = parse_mln("d = { P, Q, R }\nA(d)\n1 A(x) v !A(x)\n2 A(x) v !A(y)\n").unwrap();
        let net = ground(&m, &templates_of(&m), &GroundingOptions::default()).unwrap();
        // 9 substitutions of (x, y), 3 of them with x = y.
        assert_eq!(net.clauses().len(), 6);
    }

    #[test]
    fn counting_true_groundings() {
        let m = parse_mln("d = { P, Q, R }\nA(d)\nB(d)\n1 A(x) => B(x)\n").unwrap();
        let net = ground(&m, &templates_of(&m), &GroundingOptions::default()).unwrap();
        let all_true = vec![true; net.num_atoms()];
        assert_eq!(count_true_groundings(0, &all_true, &net), 3);
        let violate: Vec<bool> = net.atoms().iter().map(|a| a.predicate == "A").collect();
        assert_eq!(count_true_groundings(0, &violate, &net), 0);
    }

    #[test]
    fn cap_names_the_formula() {
        let m = parse_mln("d = { P, Q, R }\nA(d)\nB(d)\n1 A(x) => B(y)\n").unwrap();
        let err = ground(&m, &templates_of(&m), &GroundingOptions { max_clauses: 8 }).unwrap_err();
        match err {
            Error::GroundingCap { formula, required, .. } => {
                assert_eq!(required, 9);
                assert!(formula.contains("A(x)"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn multi_clause_formulas_split_weight() {
        let m = parse_mln("d = { P }\nA(d)\nB(d)\n3 A(x) <=> B(x)\n").unwrap();
        let net = ground(&m, &templates_of(&m), &GroundingOptions::default()).unwrap();
        assert_eq!(net.clauses().len(), 2);
        assert!(net.clauses().iter().all(|c| c.scale == 0.5));
        assert_eq!(net.clause_weights(&[3.0]), vec![1.5, 1.5]);
    }

    #[test]
    fn materialize_prefers_explicit_formulas() {
        let m = parse_mln(
            "weight = { W1, W2 }\nH(obj, weight)\nL(obj)\n\
             0 H(x, +w) => L(x)\n1.5 H(y, +W2) => L(y)\n",
        )
        .unwrap();
        let ts = materialize(&m, &m.domains).unwrap();
        assert_eq!(ts.len(), 2);
        let w2 = ts.iter().find(|t| t.formula.to_string().contains("W2")).unwrap();
        assert_eq!(w2.weight, Weight::Soft(1.5));
        assert_eq!(w2.origin, 1);
    }
}
