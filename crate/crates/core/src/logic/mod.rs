//! First-order logic data model: predicate declarations, domains, formulas,
//! weighted models and evidence databases.
//!
//! Formulas are implicitly universally quantified and function-free. Every
//! variable is typed by the argument positions it occupies; a variable used at
//! positions of two different domains is rejected.

mod cnf;
mod format;
mod parser;

pub use cnf::{to_clauses, Clause, Literal};
pub use format::{format_db, format_mln};
pub use parser::{parse_db, parse_formula, parse_mln, parse_weighted_formula};

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Returns true for identifiers naming constants (leading uppercase letter).
pub fn is_constant_name(s: &str) -> bool {
    s.chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
    /// `+x`: a separate weight per constant the variable ranges over.
    PlusVar(String),
    /// `+C`: a constant that was substituted for a plus-variable.
    PlusConst(String),
}

impl Term {
    pub fn name(&self) -> &str {
        match self {
            Term::Var(s) | Term::Const(s) | Term::PlusVar(s) | Term::PlusConst(s) => s,
        }
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Var(_) | Term::PlusVar(_))
    }

    pub fn is_constant(&self) -> bool {
        !self.is_variable()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            predicate: predicate.into(),
            args,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Formula::Atom(Atom::new(predicate, args))
    }

    pub fn not(f: Formula) -> Self {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Self {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Self {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    /// Visits atoms left to right.
    pub fn for_each_atom<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::Atom(a) => f(a),
            Formula::Not(x) => x.for_each_atom(f),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => {
                a.for_each_atom(f);
                b.for_each_atom(f);
            }
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.for_each_atom(&mut |a| out.push(a));
        out
    }

    pub fn predicates(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            out.insert(a.predicate.as_str());
        });
        out
    }

    /// Distinct variable names in order of first occurrence.
    pub fn variables(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        self.for_each_atom(&mut |a| {
            for t in &a.args {
                if t.is_variable() && seen.insert(t.name()) {
                    out.push(t.name());
                }
            }
        });
        out
    }

    /// Names of plus-variables, sorted.
    pub fn plus_variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            for t in &a.args {
                if let Term::PlusVar(v) = t {
                    out.insert(v.as_str());
                }
            }
        });
        out
    }

    pub fn has_plus_variables(&self) -> bool {
        !self.plus_variables().is_empty()
    }

    /// Rebuilds the formula with every term passed through `f`.
    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Term) -> Formula {
        match self {
            Formula::Atom(a) => Formula::Atom(Atom {
                predicate: a.predicate.clone(),
                args: a.args.iter().map(&mut *f).collect(),
            }),
            Formula::Not(x) => Formula::not(x.map_terms(f)),
            Formula::And(a, b) => Formula::and(a.map_terms(f), b.map_terms(f)),
            Formula::Or(a, b) => Formula::or(a.map_terms(f), b.map_terms(f)),
            Formula::Implies(a, b) => Formula::implies(a.map_terms(f), b.map_terms(f)),
            Formula::Iff(a, b) => Formula::iff(a.map_terms(f), b.map_terms(f)),
        }
    }

    /// Truth value under an assignment of atoms, which must be ground.
    pub fn eval(&self, value: &impl Fn(&Atom) -> bool) -> bool {
        match self {
            Formula::Atom(a) => value(a),
            Formula::Not(x) => !x.eval(value),
            Formula::And(a, b) => a.eval(value) && b.eval(value),
            Formula::Or(a, b) => a.eval(value) || b.eval(value),
            Formula::Implies(a, b) => !a.eval(value) || b.eval(value),
            Formula::Iff(a, b) => a.eval(value) == b.eval(value),
        }
    }

    /// Infers the domain of every variable from the declarations.
    pub fn type_variables(&self, decls: &[PredicateDecl]) -> Result<BTreeMap<String, String>> {
        self.type_variables_at(decls, 0)
    }

    pub(crate) fn type_variables_at(
        &self,
        decls: &[PredicateDecl],
        line: usize,
    ) -> Result<BTreeMap<String, String>> {
        let mut types: BTreeMap<String, String> = BTreeMap::new();
        let mut err = None;
        self.for_each_atom(&mut |a| {
            if err.is_some() {
                return;
            }
            let Some(decl) = find_decl(decls, &a.predicate) else {
                err = Some(Error::UndeclaredPredicate {
                    name: a.predicate.clone(),
                    line,
                });
                return;
            };
            if decl.arg_domains.len() != a.args.len() {
                err = Some(Error::ArityMismatch {
                    predicate: a.predicate.clone(),
                    expected: decl.arg_domains.len(),
                    found: a.args.len(),
                    line,
                });
                return;
            }
            for (t, dom) in a.args.iter().zip(&decl.arg_domains) {
                if !t.is_variable() {
                    continue;
                }
                match types.get(t.name()) {
                    Some(prev) if prev != dom => {
                        err = Some(Error::TypeConflict {
                            variable: t.name().to_string(),
                            first: prev.clone(),
                            second: dom.clone(),
                            line,
                        });
                        return;
                    }
                    Some(_) => {}
                    None => {
                        types.insert(t.name().to_string(), dom.clone());
                    }
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(types),
        }
    }

    /// Constants occurring in the formula paired with the domain of their position.
    pub fn constants_by_domain(&self, decls: &[PredicateDecl]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.for_each_atom(&mut |a| {
            if let Some(decl) = find_decl(decls, &a.predicate) {
                for (t, dom) in a.args.iter().zip(&decl.arg_domains) {
                    if t.is_constant() {
                        out.push((dom.clone(), t.name().to_string()));
                    }
                }
            }
        });
        out
    }

    /// Key under which two formulas count as "the same formula".
    ///
    /// Sorted-clause CNF with variables renamed by first occurrence in that
    /// sorted order. Plus markers on variables and constants are kept.
    pub fn canonical_key(&self) -> String {
        let clauses = to_clauses(self);
        let masked = |lit: &Literal| -> String {
            let args: Vec<String> = lit
                .atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(_) => "?".to_string(),
                    Term::PlusVar(_) => "+?".to_string(),
                    Term::Const(c) => c.clone(),
                    Term::PlusConst(c) => format!("+{c}"),
                })
                .collect();
            format!(
                "{}{}({})",
                if lit.positive { "" } else { "!" },
                lit.atom.predicate,
                args.join(",")
            )
        };
        let mut sorted: Vec<Vec<&Literal>> = clauses
            .iter()
            .map(|c| {
                let mut lits: Vec<&Literal> = c.iter().collect();
                lits.sort_by_key(|l| masked(l));
                lits
            })
            .collect();
        sorted.sort_by_key(|c| c.iter().map(|l| masked(l)).collect::<Vec<_>>());

        let mut rename: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &sorted {
            for l in c {
                for t in &l.atom.args {
                    if t.is_variable() {
                        let n = rename.len();
                        rename.entry(t.name()).or_insert(n);
                    }
                }
            }
        }
        let render = |lit: &Literal| -> String {
            let args: Vec<String> = lit
                .atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Var(v) => format!("v{}", rename[v.as_str()]),
                    Term::PlusVar(v) => format!("+v{}", rename[v.as_str()]),
                    Term::Const(c) => c.clone(),
                    Term::PlusConst(c) => format!("+{c}"),
                })
                .collect();
            format!(
                "{}{}({})",
                if lit.positive { "" } else { "!" },
                lit.atom.predicate,
                args.join(",")
            )
        };
        let mut rendered: Vec<String> = sorted
            .iter()
            .map(|c| {
                let mut lits: Vec<String> = c.iter().map(|l| render(l)).collect();
                lits.sort();
                lits.join(" v ")
            })
            .collect();
        rendered.sort();
        rendered.dedup();
        rendered.join(" ^ ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Soft(f64),
    /// Infinite weight: a hard constraint.
    Hard,
}

impl Weight {
    pub fn value(&self) -> Option<f64> {
        match self {
            Weight::Soft(w) => Some(*w),
            Weight::Hard => None,
        }
    }

    pub fn is_hard(&self) -> bool {
        matches!(self, Weight::Hard)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFormula {
    pub weight: Weight,
    pub formula: Formula,
}

impl WeightedFormula {
    pub fn soft(weight: f64, formula: Formula) -> Self {
        WeightedFormula {
            weight: Weight::Soft(weight),
            formula,
        }
    }

    pub fn hard(formula: Formula) -> Self {
        WeightedFormula {
            weight: Weight::Hard,
            formula,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PredicateDecl {
    pub name: String,
    pub arg_domains: Vec<String>,
}

impl PredicateDecl {
    pub fn new<S: Into<String>>(name: impl Into<String>, domains: impl IntoIterator<Item = S>) -> Self {
        PredicateDecl {
            name: name.into(),
            arg_domains: domains.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.arg_domains.len()
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.arg_domains.iter().map(String::as_str).collect()
    }
}

pub fn find_decl<'a>(decls: &'a [PredicateDecl], name: &str) -> Option<&'a PredicateDecl> {
    decls.iter().find(|d| d.name == name)
}

/// Domain name to the constants it contains. Empty domains are not stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DomainMap {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl DomainMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: impl Into<String>, constant: impl Into<String>) -> bool {
        self.entries
            .entry(domain.into())
            .or_default()
            .insert(constant.into())
    }

    pub fn get(&self, domain: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(domain)
    }

    pub fn constants(&self, domain: &str) -> impl Iterator<Item = &str> {
        self.entries
            .get(domain)
            .into_iter()
            .flat_map(|s| s.iter().map(String::as_str))
    }

    pub fn contains(&self, domain: &str, constant: &str) -> bool {
        self.entries.get(domain).is_some_and(|s| s.contains(constant))
    }

    /// Domains a constant belongs to. A constant may belong to several.
    pub fn domains_of(&self, constant: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, s)| s.contains(constant))
            .map(|(d, _)| d.as_str())
            .collect()
    }

    pub fn extend(&mut self, other: &DomainMap) {
        for (d, cs) in &other.entries {
            self.entries.entry(d.clone()).or_default().extend(cs.iter().cloned());
        }
    }

    pub fn union(&self, other: &DomainMap) -> DomainMap {
        let mut out = self.clone();
        out.extend(other);
        out
    }

    /// Keeps only the listed domains.
    pub fn restrict<'a>(&self, domains: impl IntoIterator<Item = &'a str>) -> DomainMap {
        let keep: BTreeSet<&str> = domains.into_iter().collect();
        DomainMap {
            entries: self
                .entries
                .iter()
                .filter(|(d, _)| keep.contains(d.as_str()))
                .map(|(d, s)| (d.clone(), s.clone()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.entries.iter().map(|(d, s)| (d.as_str(), s))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn size(&self, domain: &str) -> usize {
        self.entries.get(domain).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MlnModel {
    pub decls: Vec<PredicateDecl>,
    pub formulas: Vec<WeightedFormula>,
    pub domains: DomainMap,
}

impl MlnModel {
    /// Validates formulas against the declarations and registers formula
    /// constants into their domains.
    pub fn new(
        decls: Vec<PredicateDecl>,
        formulas: Vec<WeightedFormula>,
        mut domains: DomainMap,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &decls {
            if !seen.insert(d.name.as_str()) {
                return Err(Error::DuplicateDeclaration {
                    name: d.name.clone(),
                    line: 0,
                });
            }
            if d.arg_domains.is_empty() || d.arg_domains.iter().any(String::is_empty) {
                return Err(Error::Invalid(format!(
                    "predicate `{}` needs at least one named domain",
                    d.name
                )));
            }
        }
        for wf in &formulas {
            wf.formula.type_variables(&decls)?;
            for (dom, c) in wf.formula.constants_by_domain(&decls) {
                domains.insert(dom, c);
            }
        }
        Ok(MlnModel {
            decls,
            formulas,
            domains,
        })
    }

    pub fn decl(&self, name: &str) -> Option<&PredicateDecl> {
        find_decl(&self.decls, name)
    }

    /// Domains holding only the constants named in formulas.
    pub fn formula_domains(&self) -> DomainMap {
        let mut out = DomainMap::new();
        for wf in &self.formulas {
            for (dom, c) in wf.formula.constants_by_domain(&self.decls) {
                out.insert(dom, c);
            }
        }
        out
    }

    /// The same model with its constant enumeration reduced to formula constants.
    pub fn without_extra_constants(&self) -> MlnModel {
        MlnModel {
            decls: self.decls.clone(),
            formulas: self.formulas.clone(),
            domains: self.formula_domains(),
        }
    }
}

/// A signed ground atom.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EvidenceAtom {
    pub predicate: String,
    pub args: Vec<String>,
    pub positive: bool,
}

impl EvidenceAtom {
    pub fn new<S: Into<String>>(
        predicate: impl Into<String>,
        args: impl IntoIterator<Item = S>,
        positive: bool,
    ) -> Self {
        EvidenceAtom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
            positive,
        }
    }
}

impl fmt::Display for EvidenceAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.positive {
            f.write_str("!")?;
        }
        write!(f, "{}({})", self.predicate, self.args.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EvidenceDatabase {
    pub atoms: Vec<EvidenceAtom>,
}

impl EvidenceDatabase {
    pub fn new(atoms: Vec<EvidenceAtom>) -> Self {
        EvidenceDatabase { atoms }
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Drops repeated atoms, keeping first occurrences in order.
    pub fn dedup(&self) -> EvidenceDatabase {
        let mut seen = HashSet::new();
        EvidenceDatabase {
            atoms: self
                .atoms
                .iter()
                .filter(|a| seen.insert(*a))
                .cloned()
                .collect(),
        }
    }

    pub fn concat(&self, other: &EvidenceDatabase) -> EvidenceDatabase {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        EvidenceDatabase { atoms }
    }

    pub fn filter(&self, mut keep: impl FnMut(&EvidenceAtom) -> bool) -> EvidenceDatabase {
        EvidenceDatabase {
            atoms: self.atoms.iter().filter(|a| keep(a)).cloned().collect(),
        }
    }

    pub fn predicates(&self) -> BTreeSet<&str> {
        self.atoms.iter().map(|a| a.predicate.as_str()).collect()
    }

    /// Checks every atom against the declarations.
    pub fn validate(&self, decls: &[PredicateDecl]) -> Result<()> {
        for (i, a) in self.atoms.iter().enumerate() {
            let decl = find_decl(decls, &a.predicate).ok_or_else(|| Error::UndeclaredPredicate {
                name: a.predicate.clone(),
                line: i + 1,
            })?;
            if decl.arity() != a.args.len() {
                return Err(Error::ArityMismatch {
                    predicate: a.predicate.clone(),
                    expected: decl.arity(),
                    found: a.args.len(),
                    line: i + 1,
                });
            }
            if let Some(bad) = a.args.iter().find(|c| !is_constant_name(c)) {
                return Err(Error::NonGroundAtom {
                    atom: format!("{a} (argument `{bad}`)"),
                    line: i + 1,
                });
            }
        }
        Ok(())
    }
}

/// Assigns every evidence constant to the domain of the argument position it
/// occupies. A constant seen at positions of different domains is recorded in
/// all of them.
pub fn extract_domains(db: &EvidenceDatabase, decls: &[PredicateDecl]) -> DomainMap {
    let mut out = DomainMap::new();
    for a in &db.atoms {
        if let Some(decl) = find_decl(decls, &a.predicate) {
            for (c, dom) in a.args.iter().zip(&decl.arg_domains) {
                out.insert(dom.clone(), c.clone());
            }
        }
    }
    out
}
