//! Abstract syntax for quantified modal formulas.
//!
//! Only the primitive connectives are stored: `¬`, `∧`, `∃`, `◇ₐ`, plus the
//! difference quantifier `∃^≠` and the constant `⊤`. Everything else is
//! built with the helper constructors at the bottom of this file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

pub type Name = Arc<str>;

/// Modality identifier. Modalities are numbered from 1.
pub type Modality = u32;

/// The variable used by the type machinery. The parser rejects it in input.
pub const TYPE_VAR: &str = "_x";

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Name),
    Const(Name),
    Iota(Name, Box<Formula>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    Atom(Name, Vec<Term>),
    Eq(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Exists(Name, Box<Formula>),
    /// `∃^≠x ψ`: some x-variant other than the current value of `x`.
    ExistsOther(Name, Box<Formula>),
    Dia(Modality, Box<Formula>),
}

impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(name(x))
    }

    pub fn cst(c: &str) -> Term {
        Term::Const(name(c))
    }

    pub fn iota(x: &str, body: Formula) -> Term {
        Term::Iota(name(x), Box::new(body))
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(_) => 1,
            Term::Iota(_, f) => 1 + f.size(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            Term::Var(x) => {
                out.insert(x.clone());
            }
            Term::Const(_) => {}
            Term::Iota(x, f) => {
                let mut inner = BTreeSet::new();
                f.collect_free(&mut inner);
                inner.remove(x);
                out.extend(inner);
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            Term::Iota(_, f) => f.modal_depth(),
            _ => 0,
        }
    }

    pub fn has_iota(&self) -> bool {
        matches!(self, Term::Iota(..))
    }
}

impl Formula {
    pub fn size(&self) -> usize {
        match self {
            Formula::True => 1,
            Formula::Atom(_, ts) => 1 + ts.iter().map(Term::size).sum::<usize>(),
            Formula::Eq(a, b) => 1 + a.size() + b.size(),
            Formula::Not(f) | Formula::Exists(_, f) | Formula::ExistsOther(_, f) | Formula::Dia(_, f) => {
                1 + f.size()
            }
            Formula::And(a, b) => 1 + a.size() + b.size(),
        }
    }

    pub fn modal_depth(&self) -> usize {
        match self {
            Formula::True => 0,
            Formula::Atom(_, ts) => ts.iter().map(Term::depth).max().unwrap_or(0),
            Formula::Eq(a, b) => a.depth().max(b.depth()),
            Formula::Not(f) | Formula::Exists(_, f) | Formula::ExistsOther(_, f) => f.modal_depth(),
            Formula::And(a, b) => a.modal_depth().max(b.modal_depth()),
            Formula::Dia(_, f) => 1 + f.modal_depth(),
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            Formula::True => {}
            Formula::Atom(_, ts) => ts.iter().for_each(|t| t.collect_free(out)),
            Formula::Eq(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Formula::Not(f) | Formula::Dia(_, f) => f.collect_free(out),
            Formula::And(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            Formula::Exists(x, f) => {
                let mut inner = BTreeSet::new();
                f.collect_free(&mut inner);
                inner.remove(x);
                out.extend(inner);
            }
            // the bound variable stays free: ∃^≠ compares against its current value
            Formula::ExistsOther(x, f) => {
                f.collect_free(out);
                out.insert(x.clone());
            }
        }
    }

    pub fn is_sentence(&self) -> bool {
        self.free_vars().is_empty()
    }

    pub fn constants(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| {
            if let Term::Const(c) = t {
                out.insert(c.clone());
            }
        });
        out
    }

    /// Predicate symbols with their arities. An inconsistent arity keeps the first one seen.
    pub fn predicates(&self) -> BTreeMap<Name, usize> {
        let mut out = BTreeMap::new();
        self.visit(&mut |f| {
            if let Formula::Atom(p, ts) = f {
                out.entry(p.clone()).or_insert(ts.len());
            }
        });
        out
    }

    pub fn modalities(&self) -> BTreeSet<Modality> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| {
            if let Formula::Dia(a, _) = f {
                out.insert(*a);
            }
        });
        out
    }

    /// All variable names occurring anywhere, bound or free.
    pub fn variables(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.visit(&mut |f| match f {
            Formula::Exists(x, _) | Formula::ExistsOther(x, _) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        self.visit_terms(&mut |t| match t {
            Term::Var(x) | Term::Iota(x, _) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        out
    }

    pub fn has_iota(&self) -> bool {
        let mut found = false;
        self.visit_terms(&mut |t| found |= t.has_iota());
        found
    }

    pub fn has_difference(&self) -> bool {
        let mut found = false;
        self.visit(&mut |f| found |= matches!(f, Formula::ExistsOther(..)));
        found
    }

    /// Pre-order traversal over formula nodes, descending into ι bodies.
    pub fn visit(&self, f: &mut dyn FnMut(&Formula)) {
        f(self);
        match self {
            Formula::True => {}
            Formula::Atom(_, ts) => ts.iter().for_each(|t| t.visit_formulas(f)),
            Formula::Eq(a, b) => {
                a.visit_formulas(f);
                b.visit_formulas(f);
            }
            Formula::Not(g) | Formula::Exists(_, g) | Formula::ExistsOther(_, g) | Formula::Dia(_, g) => g.visit(f),
            Formula::And(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Visits every term, including terms nested inside ι bodies.
    pub fn visit_terms(&self, f: &mut dyn FnMut(&Term)) {
        self.visit(&mut |g| match g {
            Formula::Atom(_, ts) => ts.iter().for_each(|t| f(t)),
            Formula::Eq(a, b) => {
                f(a);
                f(b);
            }
            _ => {}
        });
    }

    /// Replaces free occurrences of variable `from` by the term `to`.
    /// `to` must not contain variables that would be captured.
    pub fn subst(&self, from: &str, to: &Term) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(p, ts) => Formula::Atom(p.clone(), ts.iter().map(|t| t.subst(from, to)).collect()),
            Formula::Eq(a, b) => Formula::Eq(a.subst(from, to), b.subst(from, to)),
            Formula::Not(f) => Formula::Not(Box::new(f.subst(from, to))),
            Formula::And(a, b) => Formula::And(Box::new(a.subst(from, to)), Box::new(b.subst(from, to))),
            Formula::Exists(x, f) if &**x == from => Formula::Exists(x.clone(), f.clone()),
            Formula::Exists(x, f) => Formula::Exists(x.clone(), Box::new(f.subst(from, to))),
            Formula::ExistsOther(x, f) if &**x == from => Formula::ExistsOther(x.clone(), f.clone()),
            Formula::ExistsOther(x, f) => Formula::ExistsOther(x.clone(), Box::new(f.subst(from, to))),
            Formula::Dia(a, f) => Formula::Dia(*a, Box::new(f.subst(from, to))),
        }
    }

    /// Renames every variable (bound or free) to `x`. Only meaningful for
    /// formulas in which every subformula has at most one free variable.
    pub fn rename_all_vars(&self, x: &Name) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::Atom(p, ts) => Formula::Atom(p.clone(), ts.iter().map(|t| t.rename_all_vars(x)).collect()),
            Formula::Eq(a, b) => Formula::Eq(a.rename_all_vars(x), b.rename_all_vars(x)),
            Formula::Not(f) => Formula::Not(Box::new(f.rename_all_vars(x))),
            Formula::And(a, b) => Formula::And(Box::new(a.rename_all_vars(x)), Box::new(b.rename_all_vars(x))),
            Formula::Exists(_, f) => Formula::Exists(x.clone(), Box::new(f.rename_all_vars(x))),
            Formula::ExistsOther(_, f) => Formula::ExistsOther(x.clone(), Box::new(f.rename_all_vars(x))),
            Formula::Dia(a, f) => Formula::Dia(*a, Box::new(f.rename_all_vars(x))),
        }
    }

    /// Immediate subformulas, including ι bodies inside terms.
    pub fn children(&self) -> Vec<&Formula> {
        match self {
            Formula::True => vec![],
            Formula::Atom(_, ts) => ts
                .iter()
                .filter_map(|t| match t {
                    Term::Iota(_, f) => Some(&**f),
                    _ => None,
                })
                .collect(),
            Formula::Eq(a, b) => [a, b]
                .into_iter()
                .filter_map(|t| match t {
                    Term::Iota(_, f) => Some(&**f),
                    _ => None,
                })
                .collect(),
            Formula::Not(f) | Formula::Exists(_, f) | Formula::ExistsOther(_, f) | Formula::Dia(_, f) => vec![f],
            Formula::And(a, b) => vec![a, b],
        }
    }

    /// Collapses `¬¬ψ` to `ψ` at the top only.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::Not(f) => (**f).clone(),
            f => Formula::Not(Box::new(f.clone())),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Formula::Atom(..) | Formula::Eq(..) | Formula::True)
    }
}

impl Term {
    pub fn subst(&self, from: &str, to: &Term) -> Term {
        match self {
            Term::Var(x) if &**x == from => to.clone(),
            Term::Var(_) | Term::Const(_) => self.clone(),
            Term::Iota(x, _) if &**x == from => self.clone(),
            Term::Iota(x, f) => Term::Iota(x.clone(), Box::new(f.subst(from, to))),
        }
    }

    fn rename_all_vars(&self, x: &Name) -> Term {
        match self {
            Term::Var(_) => Term::Var(x.clone()),
            Term::Const(_) => self.clone(),
            Term::Iota(_, f) => Term::Iota(x.clone(), Box::new(f.rename_all_vars(x))),
        }
    }

    fn visit_formulas(&self, f: &mut dyn FnMut(&Formula)) {
        if let Term::Iota(_, g) = self {
            g.visit(f);
        }
    }
}

// Constructors for primitive and derived connectives.

pub fn top() -> Formula {
    Formula::True
}

pub fn bot() -> Formula {
    not(top())
}

pub fn atom(p: &str, terms: Vec<Term>) -> Formula {
    Formula::Atom(name(p), terms)
}

pub fn eq(a: Term, b: Term) -> Formula {
    Formula::Eq(a, b)
}

pub fn not(f: Formula) -> Formula {
    Formula::Not(Box::new(f))
}

pub fn and(a: Formula, b: Formula) -> Formula {
    Formula::And(Box::new(a), Box::new(b))
}

pub fn or(a: Formula, b: Formula) -> Formula {
    not(and(not(a), not(b)))
}

pub fn implies(a: Formula, b: Formula) -> Formula {
    not(and(a, not(b)))
}

pub fn iff(a: Formula, b: Formula) -> Formula {
    and(implies(a.clone(), b.clone()), implies(b, a))
}

pub fn exists(x: &str, f: Formula) -> Formula {
    Formula::Exists(name(x), Box::new(f))
}

pub fn exists_other(x: &str, f: Formula) -> Formula {
    Formula::ExistsOther(name(x), Box::new(f))
}

pub fn forall(x: &str, f: Formula) -> Formula {
    not(exists(x, not(f)))
}

pub fn dia(a: Modality, f: Formula) -> Formula {
    Formula::Dia(a, Box::new(f))
}

pub fn bx(a: Modality, f: Formula) -> Formula {
    not(dia(a, not(f)))
}

/// Conjunction of a list; `⊤` when empty.
pub fn conj<I: IntoIterator<Item = Formula>>(fs: I) -> Formula {
    let mut it = fs.into_iter();
    match it.next() {
        None => top(),
        Some(first) => it.fold(first, and),
    }
}

/// `□_{a₁}⋯□_{aₖ} χ` for the path `a₁⋯aₖ`.
pub fn box_path(path: &[Modality], chi: Formula) -> Formula {
    path.iter().rev().fold(chi, |acc, &a| bx(a, acc))
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::render::render(self))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::render::render_term(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn px() -> Formula {
        atom("P", vec![Term::var("x")])
    }

    #[test]
    fn free_vars_examples() {
        assert_eq!(px().free_vars(), [name("x")].into_iter().collect());
        assert!(exists("x", px()).free_vars().is_empty());
        let f = eq(Term::var("x"), Term::iota("y", atom("Q", vec![Term::var("y")])));
        assert_eq!(f.free_vars(), [name("x")].into_iter().collect());
    }

    #[test]
    fn depth_examples() {
        assert_eq!(atom("P", vec![Term::cst("c")]).modal_depth(), 0);
        assert_eq!(dia(1, dia(2, px())).modal_depth(), 2);
        let t = Term::iota("x", dia(1, atom("Q", vec![Term::var("x")])));
        assert_eq!(atom("P", vec![t]).modal_depth(), 1);
    }

    #[test]
    fn size_examples() {
        assert_eq!(Term::var("x").size(), 1);
        assert_eq!(px().size(), 2);
        assert_eq!(Term::iota("x", px()).size(), 3);
        assert_eq!(eq(Term::var("x"), Term::cst("c")).size(), 3);
    }

    #[test]
    fn subst_respects_binders() {
        let f = and(px(), exists("x", px()));
        let g = f.subst("x", &Term::cst("c"));
        assert_eq!(g, and(atom("P", vec![Term::cst("c")]), exists("x", px())));
    }

    #[test]
    fn difference_keeps_variable_free() {
        let f = exists_other("x", px());
        assert_eq!(f.free_vars().len(), 1);
    }
}
