//! Line-oriented parser for `.mln` model files and `.db` evidence files.
//!
//! Model statements, one per line:
//!
//! ```text
//! // comment
//! object = { Ball, Cup }                  domain enumeration
//! HasWeight(object, weight)               predicate declaration
//! 1.3 HasWeight(x, Heavy) => !Lift(x)     weighted formula
//! HasWeight(x, +w) => Lift(x)             untrained formula (weight 0)
//! Lift(x) => Grasp(x).                    hard formula
//! ```
//!
//! Operators by increasing precedence: `<=>`, `=>` (right associative), `v`,
//! `^`, `!`. Identifiers starting with an uppercase letter are constants,
//! lowercase ones are variables; `+` marks a per-constant variable.

use super::{
    find_decl, is_constant_name, Atom, DomainMap, EvidenceAtom, EvidenceDatabase, Formula,
    MlnModel, PredicateDecl, Term, Weight, WeightedFormula,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Not,
    And,
    Implies,
    Iff,
    Plus,
    Eq,
    Dot,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: usize,
}

fn syntax(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column: col,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find("//") {
        Some(i) => &line[..i],
        None => line,
    }
}

fn lex(text: &str, line: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            ',' => Some(Tok::Comma),
            '!' => Some(Tok::Not),
            '^' => Some(Tok::And),
            '+' => Some(Tok::Plus),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, col });
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
        } else if c == '=' && chars.get(i + 1) == Some(&'>') {
            out.push(Token { tok: Tok::Implies, col });
            i += 2;
        } else if c == '<' && chars.get(i + 1) == Some(&'=') && chars.get(i + 2) == Some(&'>') {
            out.push(Token { tok: Tok::Iff, col });
            i += 3;
        } else if c == '=' {
            out.push(Token { tok: Tok::Eq, col });
            i += 1;
        } else if c.is_ascii_digit()
            || (c == '-' || c == '.')
                && chars
                    .get(i + 1)
                    .is_some_and(|n| n.is_ascii_digit() || (c == '-' && *n == '.'))
        {
            let start = i;
            i += 1;
            while i < chars.len() {
                let d = chars[i];
                let exp_sign = (d == '-' || d == '+') && matches!(chars[i - 1], 'e' | 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exp_sign {
                    i += 1;
                } else {
                    break;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v: f64 = s
                .parse()
                .map_err(|_| syntax(line, col, format!("invalid number `{s}`")))?;
            out.push(Token {
                tok: Tok::Number(v),
                col,
            });
        } else if c == '.' {
            out.push(Token { tok: Tok::Dot, col });
            i += 1;
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                col,
            });
        } else {
            return Err(syntax(line, col, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Token],
    pos: usize,
    line: usize,
    end_col: usize,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [Token], line: usize, end_col: usize) -> Self {
        Cursor {
            toks,
            pos: 0,
            line,
            end_col,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_col, |t| t.col)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|t| &t.tok);
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let col = self.col();
        let line = self.line;
        match self.next() {
            Some(t) if *t == want => Ok(()),
            Some(t) => Err(syntax(line, col, format!("expected {what}, found {t:?}"))),
            None => Err(syntax(line, col, format!("expected {what}, found end of line"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String> {
        let col = self.col();
        let line = self.line;
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s.clone()),
            Some(t) => Err(syntax(line, col, format!("expected {what}, found {t:?}"))),
            None => Err(syntax(line, col, format!("expected {what}, found end of line"))),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn is_or(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == "v")
    }

    fn formula(&mut self) -> Result<Formula> {
        let lhs = self.implication()?;
        if self.peek() == Some(&Tok::Iff) {
            self.next();
            let rhs = self.formula()?;
            return Ok(Formula::iff(lhs, rhs));
        }
        Ok(lhs)
    }

    fn implication(&mut self) -> Result<Formula> {
        let lhs = self.disjunction()?;
        if self.peek() == Some(&Tok::Implies) {
            self.next();
            let rhs = self.implication()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.conjunction()?;
        while self.is_or() {
            self.next();
            let rhs = self.conjunction()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Formula> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::And) {
            self.next();
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula> {
        match self.peek() {
            Some(Tok::Not) => {
                self.next();
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::LParen) => {
                self.next();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            _ => Ok(Formula::Atom(self.atom()?)),
        }
    }

    fn atom(&mut self) -> Result<Atom> {
        let predicate = self.ident("predicate name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        loop {
            let plus = if self.peek() == Some(&Tok::Plus) {
                self.next();
                true
            } else {
                false
            };
            let name = self.ident("argument")?;
            args.push(match (plus, is_constant_name(&name)) {
                (false, false) => Term::Var(name),
                (false, true) => Term::Const(name),
                (true, false) => Term::PlusVar(name),
                (true, true) => Term::PlusConst(name),
            });
            let col = self.col();
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RParen) => break,
                _ => return Err(syntax(self.line, col, "expected `,` or `)` in argument list")),
            }
        }
        Ok(Atom { predicate, args })
    }
}

fn parse_formula_tokens(
    toks: &[Token],
    line: usize,
    end_col: usize,
    decls: &[PredicateDecl],
) -> Result<WeightedFormula> {
    let mut cur = Cursor::new(toks, line, end_col);
    let weight = match cur.peek() {
        Some(Tok::Number(w)) => {
            let w = *w;
            cur.next();
            Some(w)
        }
        _ => None,
    };
    let formula = cur.formula()?;
    let hard = if cur.peek() == Some(&Tok::Dot) {
        cur.next();
        true
    } else {
        false
    };
    if !cur.at_end() {
        return Err(syntax(line, cur.col(), "unexpected trailing input"));
    }
    if hard && weight.is_some() {
        return Err(syntax(line, end_col, "a hard formula cannot also carry a weight"));
    }
    formula.type_variables_at(decls, line)?;
    let weight = if hard {
        Weight::Hard
    } else {
        Weight::Soft(weight.unwrap_or(0.0))
    };
    Ok(WeightedFormula { weight, formula })
}

/// Parses a single formula (no weight) and type-checks it.
pub fn parse_formula(text: &str, decls: &[PredicateDecl]) -> Result<Formula> {
    let wf = parse_weighted_formula(text, decls)?;
    match wf.weight {
        Weight::Soft(0.0) => Ok(wf.formula),
        _ => Err(Error::Invalid(format!("expected an unweighted formula: `{text}`"))),
    }
}

/// Parses `[weight] formula[.]`.
pub fn parse_weighted_formula(text: &str, decls: &[PredicateDecl]) -> Result<WeightedFormula> {
    let text = strip_comment(text);
    let toks = lex(text, 1)?;
    parse_formula_tokens(&toks, 1, text.chars().count() + 1, decls)
}

fn is_declaration(toks: &[Token], decls: &[PredicateDecl]) -> bool {
    // Pred(dom, dom, ...) with an undeclared predicate and lowercase arguments.
    let Some(Tok::Ident(name)) = toks.first().map(|t| &t.tok) else {
        return false;
    };
    if find_decl(decls, name).is_some() || toks.len() < 4 {
        return false;
    }
    if toks[1].tok != Tok::LParen || toks.last().map(|t| &t.tok) != Some(&Tok::RParen) {
        return false;
    }
    let inner = &toks[2..toks.len() - 1];
    inner.iter().enumerate().all(|(i, t)| match (&t.tok, i % 2) {
        (Tok::Ident(s), 0) => !is_constant_name(s),
        (Tok::Comma, 1) => true,
        _ => false,
    }) && inner.len() % 2 == 1
}

pub fn parse_mln(text: &str) -> Result<MlnModel> {
    let mut decls: Vec<PredicateDecl> = Vec::new();
    let mut formulas = Vec::new();
    let mut domains = DomainMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let toks = lex(body, line)?;
        let end_col = body.chars().count() + 1;

        if toks.len() >= 2 && toks[1].tok == Tok::Eq {
            let mut cur = Cursor::new(&toks, line, end_col);
            let name = cur.ident("domain name")?;
            if is_constant_name(&name) {
                return Err(syntax(line, toks[0].col, "domain names must start lowercase"));
            }
            cur.next();
            cur.expect(Tok::LBrace, "`{`")?;
            if cur.peek() != Some(&Tok::RBrace) {
                loop {
                    let col = cur.col();
                    let c = cur.ident("constant")?;
                    if !is_constant_name(&c) {
                        return Err(syntax(line, col, format!("`{c}` is not a constant")));
                    }
                    domains.insert(name.clone(), c);
                    let col = cur.col();
                    match cur.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBrace) => break,
                        _ => return Err(syntax(line, col, "expected `,` or `}`")),
                    }
                }
            } else {
                cur.next();
            }
            if !cur.at_end() {
                return Err(syntax(line, cur.col(), "unexpected trailing input"));
            }
            continue;
        }

        if is_declaration(&toks, &decls) {
            let mut cur = Cursor::new(&toks, line, end_col);
            let name = cur.ident("predicate name")?;
            cur.next();
            let mut arg_domains = Vec::new();
            loop {
                arg_domains.push(cur.ident("domain name")?);
                if cur.next() == Some(&Tok::RParen) {
                    break;
                }
            }
            decls.push(PredicateDecl { name, arg_domains });
            continue;
        }

        formulas.push(parse_formula_tokens(&toks, line, end_col, &decls)?);
    }
    MlnModel::new(decls, formulas, domains)
}

/// Parses an evidence file. Duplicates are kept; see [`EvidenceDatabase::dedup`].
pub fn parse_db(text: &str, decls: &[PredicateDecl]) -> Result<EvidenceDatabase> {
    if decls.is_empty() {
        return Err(Error::Invalid("evidence requires predicate declarations".into()));
    }
    let mut atoms = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = strip_comment(raw);
        if body.trim().is_empty() {
            continue;
        }
        let toks = lex(body, line)?;
        let end_col = body.chars().count() + 1;
        let mut cur = Cursor::new(&toks, line, end_col);
        let positive = if cur.peek() == Some(&Tok::Not) {
            cur.next();
            false
        } else {
            true
        };
        let atom = cur.atom()?;
        if !cur.at_end() {
            return Err(syntax(line, cur.col(), "one ground atom per line"));
        }
        let decl = find_decl(decls, &atom.predicate).ok_or_else(|| Error::UndeclaredPredicate {
            name: atom.predicate.clone(),
            line,
        })?;
        if decl.arity() != atom.args.len() {
            return Err(Error::ArityMismatch {
                predicate: atom.predicate.clone(),
                expected: decl.arity(),
                found: atom.args.len(),
                line,
            });
        }
        let mut args = Vec::with_capacity(atom.args.len());
        for t in &atom.args {
            match t {
                Term::Const(c) => args.push(c.clone()),
                _ => {
                    return Err(Error::NonGroundAtom {
                        atom: body.trim().to_string(),
                        line,
                    })
                }
            }
        }
        atoms.push(EvidenceAtom {
            predicate: atom.predicate,
            args,
            positive,
        });
    }
    Ok(EvidenceDatabase { atoms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::extract_domains;

    const AFFORDANCE_MODEL: &str = "\
IsA(obj, category)
HasVisualAttribute(obj, attribute)
HasWeight(obj, weight)
HasSize(obj, size)
HasAffordance(obj, affordance)
IsA(obj,+category) => HasAffordance(obj,+affordance)
HasVisualAttribute(obj,+attribute) => HasAffordance(obj,+affordance)
HasWeight(obj,+weight) => HasAffordance(obj,+affordance)
HasSize(obj,+size) => HasAffordance(obj,+affordance)
IsA(obj,+category) => IsA(obj,+category)
";

    #[test]
    fn single_weighted_formula() {
        let m = parse_mln(
            "SharpEdge(object)\nAffordance(object, action)\n1.3 SharpEdge(x) => Affordance(x, Cutting)\n",
        )
        .unwrap();
        assert_eq!(m.decls.len(), 2);
        assert_eq!(m.formulas.len(), 1);
        assert_eq!(m.formulas[0].weight, Weight::Soft(1.3));
        assert!(m.domains.contains("action", "Cutting"));
    }

    #[test]
    fn comments_only_is_empty_model() {
        let m = parse_mln("// nothing here\n\n   // still nothing\n").unwrap();
        assert!(m.decls.is_empty());
        assert!(m.formulas.is_empty());
        assert_eq!(parse_mln("").unwrap(), MlnModel::default());
    }

    #[test]
    fn affordance_model_formulas_have_plus_variables() {
        let m = parse_mln(AFFORDANCE_MODEL).unwrap();
        assert_eq!(m.formulas.len(), 5);
        assert!(m.formulas.iter().all(|f| f.formula.has_plus_variables()));
    }

    #[test]
    fn hard_formula() {
        let m = parse_mln("A(d)\nB(d)\nA(x) => B(x).\n").unwrap();
        assert_eq!(m.formulas[0].weight, Weight::Hard);
        assert!(parse_mln("A(d)\n2 A(x).\n").is_err());
    }

    #[test]
    fn precedence() {
        let decls = vec![
            PredicateDecl::new("A", ["d"]),
            PredicateDecl::new("B", ["d"]),
            PredicateDecl::new("C", ["d"]),
        ];
        let f = parse_formula("!A(x) ^ B(x) v C(x) => A(x) <=> B(x)", &decls).unwrap();
        let a = || Formula::atom("A", vec![Term::Var("x".into())]);
        let b = || Formula::atom("B", vec![Term::Var("x".into())]);
        let c = || Formula::atom("C", vec![Term::Var("x".into())]);
        let expected = Formula::iff(
            Formula::implies(
                Formula::or(Formula::and(Formula::not(a()), b()), c()),
                a(),
            ),
            b(),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_mln("A(d)\n1.0 A(x\n").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 2);
                assert_eq!(column, 8);
            }
            e => panic!("unexpected {e:?}"),
        }
        assert!(matches!(parse_mln("A(d)\n1 A(x) & B(x)"), Err(Error::Syntax { line: 2, .. })));
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            parse_mln("A(d)\n1 A(x) => B(x)\n"),
            Err(Error::UndeclaredPredicate { line: 2, .. })
        ));
        assert!(matches!(
            parse_mln("A(d)\n1 A(x, y)\n"),
            Err(Error::ArityMismatch { line: 2, .. })
        ));
        assert!(matches!(
            parse_mln("A(d)\nB(e)\n1 A(x) => B(x)\n"),
            Err(Error::TypeConflict { line: 3, .. })
        ));
        // A repeated declaration line reads as an unweighted atom formula.
        assert_eq!(parse_mln("A(d)\nA(e)\n").unwrap().formulas.len(), 1);
    }

    #[test]
    fn domain_enumeration() {
        let m = parse_mln("object = { Ball, Cup }\nweight = {}\nHasWeight(object, weight)\n").unwrap();
        assert_eq!(m.domains.size("object"), 2);
        assert_eq!(m.domains.size("weight"), 0);
    }

    #[test]
    fn evidence_lines() {
        let decls = vec![
            PredicateDecl::new("IsA", ["object", "category"]),
            PredicateDecl::new("HasAffordance", ["object", "affordance"]),
        ];
        let db = parse_db("IsA(Cat, Animal)\n!HasAffordance(Chair, Throw) // no\n", &decls).unwrap();
        assert_eq!(db.len(), 2);
        assert!(db.atoms[0].positive);
        assert!(!db.atoms[1].positive);
        let d = extract_domains(&db, &decls);
        assert!(d.contains("object", "Cat") && d.contains("category", "Animal"));

        let dup = parse_db("IsA(Cat, Animal)\nIsA(Cat, Animal)\n", &decls).unwrap();
        assert_eq!(dup.len(), 2);
        assert_eq!(dup.dedup().len(), 1);
    }

    #[test]
    fn evidence_errors() {
        let decls = vec![PredicateDecl::new("IsA", ["object", "category"])];
        assert!(matches!(
            parse_db("Foo(Cat)\n", &decls),
            Err(Error::UndeclaredPredicate { line: 1, .. })
        ));
        assert!(matches!(
            parse_db("\nIsA(x, Animal)\n", &decls),
            Err(Error::NonGroundAtom { line: 2, .. })
        ));
        assert!(matches!(
            parse_db("IsA(Cat)\n", &decls),
            Err(Error::ArityMismatch { .. })
        ));
        assert!(parse_db("IsA(Cat, Animal)", &[]).is_err());
    }
}
