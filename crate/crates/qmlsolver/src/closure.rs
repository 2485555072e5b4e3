//! Fragment classification, the one-variable subformula closure, surrogates,
//! and the compiled closure used by the decision procedures.

use crate::error::{Error, Result};
use crate::formula::*;
use crate::fresh::fresh;
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    OneVariable,
    Monodic,
    NonMonodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct FragmentTag {
    pub kind: FragmentKind,
    pub has_counting: bool,
    pub has_dd: bool,
    pub has_constants: bool,
}

fn max_free_under(f: &Formula, pred: &dyn Fn(&Formula) -> bool) -> usize {
    let mut m = 0;
    f.visit(&mut |g| {
        if pred(g) {
            m = m.max(g.free_vars().len());
        }
    });
    m
}

pub fn classify_fragment(f: &Formula) -> FragmentTag {
    let unary = f.predicates().values().all(|&n| n <= 1);
    let kind = if unary && f.variables().len() <= 1 {
        FragmentKind::OneVariable
    } else if max_free_under(f, &|g| matches!(g, Formula::Dia(..))) <= 1 {
        FragmentKind::Monodic
    } else {
        FragmentKind::NonMonodic
    };
    FragmentTag { kind, has_counting: false, has_dd: f.has_iota(), has_constants: !f.constants().is_empty() }
}

/// True when renaming every variable to a single name preserves meaning:
/// predicates are at most unary and no subformula (or ι body) has two free variables.
pub fn is_one_variable_up_to_renaming(f: &Formula) -> bool {
    if !f.predicates().values().all(|&n| n <= 1) {
        return false;
    }
    let mut ok = true;
    f.visit(&mut |g| {
        if g.free_vars().len() > 1 {
            ok = false;
        }
        if let Formula::ExistsOther(x, body) = g {
            // ∃^≠x ψ compares against x, so ψ may only mention x
            if body.free_vars().iter().any(|y| y != x) {
                ok = false;
            }
        }
    });
    f.visit_terms(&mut |t| {
        if let Term::Iota(x, body) = t {
            if body.free_vars().iter().any(|y| y != x) {
                ok = false;
            }
        }
    });
    ok
}

/// Renames all variables to the reserved type variable after checking the gate.
pub fn one_variable_form(f: &Formula) -> Result<Formula> {
    if !is_one_variable_up_to_renaming(f) {
        return Err(Error::Fragment(format!("not in the one-variable fragment: {f}")));
    }
    Ok(f.rename_all_vars(&name(TYPE_VAR)))
}

fn collect_subformulas(f: &Formula, out: &mut Vec<Formula>) {
    f.visit(&mut |g| out.push(g.clone()));
}

/// `{ψ{x/y}, ¬ψ{x/y} | ψ(y) ∈ sub(φ)}` with `x` the reserved type variable.
pub fn sub_x_closure(f: &Formula) -> Result<BTreeSet<Formula>> {
    if !f.is_sentence() {
        return Err(Error::Invalid(format!("not a sentence: {f}")));
    }
    let x = Term::Var(name(TYPE_VAR));
    let mut subs = Vec::new();
    collect_subformulas(f, &mut subs);
    let mut out = BTreeSet::new();
    for s in subs {
        let fv = s.free_vars();
        if fv.len() > 1 {
            return Err(Error::Fragment(format!("subformula with two free variables: {s}")));
        }
        let g = match fv.iter().next() {
            Some(y) => s.subst(y, &x),
            None => s,
        };
        out.insert(g.negate());
        out.insert(g);
    }
    Ok(out)
}

fn canonical_key(g: &Formula) -> String {
    match g.free_vars().iter().next() {
        Some(y) => g.subst(y, &Term::Var(name(TYPE_VAR))).to_string(),
        None => g.to_string(),
    }
}

/// Replaces every outermost `◇ₐψ` by a surrogate atom: `R_…(y)` when it has a
/// free variable `y`, `p_…` when it is a sentence.
pub fn surrogate(f: &Formula) -> Result<Formula> {
    let mut taken: BTreeSet<Name> = f.predicates().keys().cloned().collect();
    let mut names: BTreeMap<String, Name> = BTreeMap::new();
    fn go(f: &Formula, taken: &mut BTreeSet<Name>, names: &mut BTreeMap<String, Name>) -> Result<Formula> {
        Ok(match f {
            Formula::Dia(..) => {
                let fv = f.free_vars();
                if fv.len() > 1 {
                    return Err(Error::Fragment(format!("modal subformula with several free variables: {f}")));
                }
                let key = canonical_key(f);
                let prefix = if fv.is_empty() { "p_dia" } else { "R_dia" };
                let n = match names.get(&key) {
                    Some(n) => n.clone(),
                    None => {
                        let n = fresh(prefix, &key, taken);
                        taken.insert(n.clone());
                        names.insert(key, n.clone());
                        n
                    }
                };
                Formula::Atom(n, fv.into_iter().map(Term::Var).collect())
            }
            Formula::True | Formula::Atom(..) | Formula::Eq(..) => f.clone(),
            Formula::Not(g) => not(go(g, taken, names)?),
            Formula::And(a, b) => and(go(a, taken, names)?, go(b, taken, names)?),
            Formula::Exists(x, g) => Formula::Exists(x.clone(), Box::new(go(g, taken, names)?)),
            Formula::ExistsOther(x, g) => Formula::ExistsOther(x.clone(), Box::new(go(g, taken, names)?)),
        })
    }
    go(f, &mut taken, &mut names)
}

/// Bitset over the basic members of a [`Closure`].
pub type Bits = u128;

pub const MAX_BASICS: usize = 128;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Node {
    True,
    Not(usize),
    And(usize, usize),
    Basic(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BasicKind {
    /// `P(x)`
    Pred(Name),
    /// 0-ary `p`
    Prop(Name),
    /// `x = c`
    EqConst(Name),
    /// `∃x ψ` with the body's node
    Exists(usize),
    /// `◇ₐ ψ` with the body's node
    Dia(Modality, usize),
}

#[derive(Clone, Debug)]
pub struct Basic {
    pub kind: BasicKind,
    pub formula: Formula,
    /// contains a free occurrence of the type variable
    pub free: bool,
    pub depth: usize,
    pub node: usize,
}

/// Compiled closure of a one-variable sentence in decision normal form:
/// constants occur only in `x = c`, all variables are the type variable.
#[derive(Clone, Debug)]
pub struct Closure {
    pub formula: Formula,
    pub nodes: Vec<Node>,
    pub node_formula: Vec<Formula>,
    pub node_depth: Vec<usize>,
    pub basics: Vec<Basic>,
    pub root: usize,
    pub constants: Vec<Name>,
    pub modalities: Vec<Modality>,
    index: HashMap<Formula, usize>,
}

impl Closure {
    pub fn new(f: &Formula) -> Result<Closure> {
        let mut c = Closure {
            formula: f.clone(),
            nodes: vec![],
            node_formula: vec![],
            node_depth: vec![],
            basics: vec![],
            root: 0,
            constants: vec![],
            modalities: vec![],
            index: HashMap::new(),
        };
        c.root = c.intern(f)?;
        if !f.is_sentence() {
            return Err(Error::Invalid(format!("not a sentence: {f}")));
        }
        let mut consts = BTreeSet::new();
        let mut mods = BTreeSet::new();
        for b in &c.basics {
            match &b.kind {
                BasicKind::EqConst(k) => {
                    consts.insert(k.clone());
                }
                BasicKind::Dia(a, _) => {
                    mods.insert(*a);
                }
                _ => {}
            }
        }
        c.constants = consts.into_iter().collect();
        c.modalities = mods.into_iter().collect();
        Ok(c)
    }

    fn push(&mut self, f: &Formula, n: Node, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(n);
        self.node_formula.push(f.clone());
        self.node_depth.push(depth);
        self.index.insert(f.clone(), id);
        id
    }

    fn push_basic(&mut self, f: &Formula, kind: BasicKind, depth: usize) -> Result<usize> {
        if self.basics.len() >= MAX_BASICS {
            return Err(Error::Cap(format!("closure has more than {MAX_BASICS} basic members")));
        }
        let bi = self.basics.len();
        let id = self.push(f, Node::Basic(bi), depth);
        let free = !f.free_vars().is_empty();
        self.basics.push(Basic { kind, formula: f.clone(), free, depth, node: id });
        Ok(id)
    }

    fn intern(&mut self, f: &Formula) -> Result<usize> {
        if let Some(&id) = self.index.get(f) {
            return Ok(id);
        }
        let is_x = |t: &Term| matches!(t, Term::Var(v) if &**v == TYPE_VAR);
        match f {
            Formula::True => Ok(self.push(f, Node::True, 0)),
            Formula::Not(g) => {
                if let Formula::Not(h) = &**g {
                    let id = self.intern(h)?;
                    self.index.insert(f.clone(), id);
                    return Ok(id);
                }
                let a = self.intern(g)?;
                let d = self.node_depth[a];
                Ok(self.push(f, Node::Not(a), d))
            }
            Formula::And(g, h) => {
                let a = self.intern(g)?;
                let b = self.intern(h)?;
                let d = self.node_depth[a].max(self.node_depth[b]);
                Ok(self.push(f, Node::And(a, b), d))
            }
            Formula::Atom(p, ts) if ts.is_empty() => self.push_basic(f, BasicKind::Prop(p.clone()), 0),
            Formula::Atom(p, ts) if ts.len() == 1 && is_x(&ts[0]) => {
                self.push_basic(f, BasicKind::Pred(p.clone()), 0)
            }
            Formula::Eq(a, Term::Const(c)) if is_x(a) => self.push_basic(f, BasicKind::EqConst(c.clone()), 0),
            Formula::Exists(x, g) if &**x == TYPE_VAR => {
                let b = self.intern(g)?;
                let d = self.node_depth[b];
                self.push_basic(f, BasicKind::Exists(b), d)
            }
            Formula::Dia(a, g) => {
                let b = self.intern(g)?;
                let d = self.node_depth[b] + 1;
                self.push_basic(f, BasicKind::Dia(*a, b), d)
            }
            _ => Err(Error::Invalid(format!("not in decision normal form: {f}"))),
        }
    }

    pub fn node_of(&self, f: &Formula) -> Option<usize> {
        self.index.get(f).copied()
    }

    /// Truth of a node under a valuation of the basic members.
    pub fn eval(&self, node: usize, bits: Bits) -> bool {
        match self.nodes[node] {
            Node::True => true,
            Node::Not(a) => !self.eval(a, bits),
            Node::And(a, b) => self.eval(a, bits) && self.eval(b, bits),
            Node::Basic(i) => bits >> i & 1 == 1,
        }
    }

    pub fn depth(&self) -> usize {
        self.node_depth[self.root]
    }

    /// Basic members of modal depth at most `k`.
    pub fn mask_upto(&self, k: usize) -> Bits {
        self.mask_where(|b| b.depth <= k)
    }

    pub fn mask_where(&self, pred: impl Fn(&Basic) -> bool) -> Bits {
        self.basics.iter().enumerate().filter(|(_, b)| pred(b)).fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn const_index(&self, c: &str) -> Option<usize> {
        self.constants.iter().position(|k| &**k == c)
    }

    /// Bit of the basic `x = c` for each constant, in `constants` order.
    pub fn const_bits(&self) -> Vec<Bits> {
        self.constants
            .iter()
            .map(|c| self.mask_where(|b| matches!(&b.kind, BasicKind::EqConst(k) if k == c)))
            .collect()
    }

    /// Formulas of the closure that hold under `bits`, restricted to nodes of depth ≤ `k`,
    /// in the form `sub_x_closure` uses (both polarities resolved).
    pub fn members(&self, bits: Bits, k: usize) -> Vec<Formula> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, f) in self.node_formula.iter().enumerate() {
            if self.node_depth[i] > k || matches!(self.nodes[i], Node::True) && i != self.root {
                continue;
            }
            let g = if self.eval(i, bits) { f.clone() } else { f.negate() };
            if seen.insert(g.clone()) {
                out.push(g);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    fn p(s: &str) -> Formula {
        parse_formula(s).unwrap()
    }

    #[test]
    fn closure_of_exists() {
        let c = sub_x_closure(&p("exists y. P(y)")).unwrap();
        let x = Term::var(TYPE_VAR);
        let ex = exists("y", atom("P", vec![Term::var("y")]));
        let px = atom("P", vec![x]);
        let expected: BTreeSet<Formula> = [ex.clone(), not(ex), px.clone(), not(px)].into_iter().collect();
        assert_eq!(c, expected);
    }

    #[test]
    fn closure_contains_constant_equation() {
        // sub(P(c) ∧ ∃y(y=c)) = {the conjunction, P(c), ∃y(y=c), y=c}
        let c = sub_x_closure(&p("P(c) and exists y. y = c")).unwrap();
        let xc = eq(Term::var(TYPE_VAR), Term::cst("c"));
        assert!(c.contains(&xc));
        assert!(c.contains(&not(xc)));
        assert_eq!(c.len(), 8);
    }

    #[test]
    fn closure_without_quantifiers() {
        let f = p("p and dia 1 q");
        let c = sub_x_closure(&f).unwrap();
        assert_eq!(c.len(), 8);
    }

    #[test]
    fn surrogate_examples() {
        let f = p("exists x. dia 1 P(x) and Q(x)");
        let s = surrogate(&f).unwrap();
        assert!(!s.modalities().iter().any(|_| true));
        assert_eq!(s.free_vars(), f.free_vars());
        let g = p("forall x. dia 1 P(x)");
        let sg = surrogate(&g).unwrap();
        assert!(matches!(&sg, Formula::Not(b) if matches!(&**b, Formula::Exists(..))));
        let h = p("P(x)");
        assert_eq!(surrogate(&h).unwrap(), h);
    }

    #[test]
    fn surrogate_names_are_variable_independent() {
        let f = p("(exists x. dia 1 P(x)) and exists y. dia 1 P(y)");
        let s = surrogate(&f).unwrap();
        assert_eq!(s.predicates().len(), 1);
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify_fragment(&p("exists x. P(x) and dia 1 Q(x)")).kind, FragmentKind::OneVariable);
        assert_eq!(classify_fragment(&p("exists x. exists y. F(x, y) and dia 1 F(x, y)")).kind, FragmentKind::NonMonodic);
        let v = classify_fragment(&p(
            "exists x. x = vulcan and vulcan = iota z. OrbitsBetween(z, sun, mercury)",
        ));
        assert_eq!(v.kind, FragmentKind::Monodic);
        assert!(v.has_dd && v.has_constants);
    }

    #[test]
    fn compiled_closure_depths() {
        let f = one_variable_form(&p("dia 1 exists y. P(y) and dia 2 Q(y)")).unwrap();
        let c = Closure::new(&f).unwrap();
        assert_eq!(c.depth(), 2);
        assert_eq!(c.modalities, vec![1, 2]);
        assert!(Closure::new(&p("P(c)")).is_err());
    }
}
