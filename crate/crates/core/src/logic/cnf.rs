use super::{Atom, Formula};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub positive: bool,
    pub atom: Atom,
}

/// A disjunction of literals.
pub type Clause = Vec<Literal>;

enum Nnf {
    Lit(Literal),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

fn nnf(f: &Formula, negated: bool) -> Nnf {
    match f {
        Formula::Atom(a) => Nnf::Lit(Literal {
            positive: !negated,
            atom: a.clone(),
        }),
        Formula::Not(x) => nnf(x, !negated),
        Formula::And(a, b) if !negated => Nnf::And(vec![nnf(a, false), nnf(b, false)]),
        Formula::And(a, b) => Nnf::Or(vec![nnf(a, true), nnf(b, true)]),
        Formula::Or(a, b) if !negated => Nnf::Or(vec![nnf(a, false), nnf(b, false)]),
        Formula::Or(a, b) => Nnf::And(vec![nnf(a, true), nnf(b, true)]),
        Formula::Implies(a, b) if !negated => Nnf::Or(vec![nnf(a, true), nnf(b, false)]),
        Formula::Implies(a, b) => Nnf::And(vec![nnf(a, false), nnf(b, true)]),
        Formula::Iff(a, b) if !negated => Nnf::And(vec![
            Nnf::Or(vec![nnf(a, true), nnf(b, false)]),
            Nnf::Or(vec![nnf(b, true), nnf(a, false)]),
        ]),
        Formula::Iff(a, b) => Nnf::And(vec![
            Nnf::Or(vec![nnf(a, false), nnf(b, false)]),
            Nnf::Or(vec![nnf(a, true), nnf(b, true)]),
        ]),
    }
}

fn distribute(n: Nnf) -> Vec<Clause> {
    match n {
        Nnf::Lit(l) => vec![vec![l]],
        Nnf::And(parts) => parts.into_iter().flat_map(distribute).collect(),
        Nnf::Or(parts) => {
            let mut acc: Vec<Clause> = vec![Vec::new()];
            for p in parts {
                let cs = distribute(p);
                let mut next = Vec::with_capacity(acc.len() * cs.len());
                for a in &acc {
                    for c in &cs {
                        let mut joined = a.clone();
                        joined.extend(c.iter().cloned());
                        next.push(joined);
                    }
                }
                acc = next;
            }
            acc
        }
    }
}

fn simplify(clause: Clause) -> Option<Clause> {
    let mut out: Clause = Vec::with_capacity(clause.len());
    for lit in clause {
        if out.iter().any(|l| l.atom == lit.atom && l.positive != lit.positive) {
            return None;
        }
        if !out.contains(&lit) {
            out.push(lit);
        }
    }
    Some(out)
}

fn same_clause(a: &Clause, b: &Clause) -> bool {
    a.len() == b.len() && a.iter().all(|l| b.contains(l))
}

/// Converts a formula to an equivalent set of clauses.
///
/// Literals repeated within a clause are merged, clauses containing an atom
/// and its negation are dropped, and duplicate clauses are removed. A
/// tautology therefore yields an empty clause set.
pub fn to_clauses(f: &Formula) -> Vec<Clause> {
    let mut out: Vec<Clause> = Vec::new();
    for c in distribute(nnf(f, false)).into_iter().filter_map(simplify) {
        if !out.iter().any(|o| same_clause(o, &c)) {
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, PredicateDecl};

    fn decls() -> Vec<PredicateDecl> {
        vec![
            PredicateDecl::new("A", ["d"]),
            PredicateDecl::new("B", ["d"]),
        ]
    }

    fn render(cs: &[Clause]) -> Vec<String> {
        cs.iter()
            .map(|c| {
                c.iter()
                    .map(|l| format!("{}{}", if l.positive { "" } else { "!" }, l.atom.predicate))
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .collect()
    }

    #[test]
    fn implication_elimination() {
        let f = parse_formula("A(x) => B(x)", &decls()).unwrap();
        assert_eq!(render(&to_clauses(&f)), vec!["!A|B"]);
    }

    #[test]
    fn biconditional_gives_two_clauses() {
        let f = parse_formula("A(x) <=> B(x)", &decls()).unwrap();
        assert_eq!(render(&to_clauses(&f)), vec!["!A|B", "!B|A"]);
    }

    #[test]
    fn de_morgan() {
        let f = parse_formula("!(A(x) v B(x))", &decls()).unwrap();
        assert_eq!(render(&to_clauses(&f)), vec!["!A", "!B"]);
    }

    #[test]
    fn tautology_has_no_clauses() {
        let f = parse_formula("A(x) v !A(x)", &decls()).unwrap();
        assert!(to_clauses(&f).is_empty());
        let g = parse_formula("A(x) v !A(y)", &decls()).unwrap();
        assert_eq!(to_clauses(&g).len(), 1);
    }
}
