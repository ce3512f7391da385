use std::fmt::{self, Write as _};

use super::{Atom, EvidenceDatabase, Formula, MlnModel, PredicateDecl, Term, Weight, WeightedFormula};

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(s) | Term::Const(s) => f.write_str(s),
            Term::PlusVar(s) | Term::PlusConst(s) => write!(f, "+{s}"),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.predicate)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{t}")?;
        }
        f.write_str(")")
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, x: &Formula) -> fmt::Result {
    match x {
        Formula::Atom(_) | Formula::Not(_) => write!(f, "{x}"),
        _ => write!(f, "({x})"),
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, op, b) = match self {
            Formula::Atom(a) => return write!(f, "{a}"),
            Formula::Not(x) => {
                f.write_str("!")?;
                return write_operand(f, x);
            }
            Formula::And(a, b) => (a, "^", b),
            Formula::Or(a, b) => (a, "v", b),
            Formula::Implies(a, b) => (a, "=>", b),
            Formula::Iff(a, b) => (a, "<=>", b),
        };
        write_operand(f, a)?;
        write!(f, " {op} ")?;
        write_operand(f, b)
    }
}

impl fmt::Display for WeightedFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.weight {
            Weight::Soft(w) => write!(f, "{w} {}", self.formula),
            Weight::Hard => write!(f, "{}.", self.formula),
        }
    }
}

impl fmt::Display for PredicateDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.arg_domains.join(", "))
    }
}

/// Renders a model in the `.mln` grammar accepted by [`super::parse_mln`].
pub fn format_mln(model: &MlnModel) -> String {
    let mut out = String::new();
    for (domain, constants) in model.domains.iter() {
        let cs: Vec<&str> = constants.iter().map(String::as_str).collect();
        let _ = writeln!(out, "{domain} = {{ {} }}", cs.join(", "));
    }
    if !model.domains.is_empty() {
        out.push('\n');
    }
    for d in &model.decls {
        let _ = writeln!(out, "{d}");
    }
    if !model.decls.is_empty() {
        out.push('\n');
    }
    for wf in &model.formulas {
        let _ = writeln!(out, "{wf}");
    }
    out
}

pub fn format_db(db: &EvidenceDatabase) -> String {
    let mut out = String::new();
    for a in &db.atoms {
        let _ = writeln!(out, "{a}");
    }
    out
}
