//! Finite Kripke interpretations with partial constants, and their semantics.

use crate::formula::*;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

pub type Elem = u32;
pub type Assignment = BTreeMap<Name, Elem>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct World {
    pub label: String,
    pub domain: BTreeSet<Elem>,
    pub preds: BTreeMap<Name, BTreeSet<Vec<Elem>>>,
    /// partial: absent means the constant does not designate here
    pub consts: BTreeMap<Name, Elem>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Interpretation {
    pub worlds: Vec<World>,
    /// `(a, w, v)` for `w R_a v`
    pub edges: BTreeSet<(Modality, usize, usize)>,
}

impl Interpretation {
    pub fn add_world(&mut self, w: World) -> usize {
        self.worlds.push(w);
        self.worlds.len() - 1
    }

    pub fn add_edge(&mut self, a: Modality, w: usize, v: usize) {
        self.edges.insert((a, w, v));
    }

    pub fn successors(&self, w: usize, a: Modality) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((a, w, 0)..=(a, w, usize::MAX)).map(|e| e.2)
    }

    pub fn is_constant_domain(&self) -> bool {
        self.worlds.windows(2).all(|p| p[0].domain == p[1].domain)
    }

    /// Nonempty domains, `Δ_w ⊆ Δ_v` along edges, extensions and constants inside the domain.
    pub fn well_formed(&self) -> Result<(), String> {
        for (i, w) in self.worlds.iter().enumerate() {
            if w.domain.is_empty() {
                return Err(format!("world {i} has an empty domain"));
            }
            for (p, ext) in &w.preds {
                if ext.iter().flatten().any(|e| !w.domain.contains(e)) {
                    return Err(format!("extension of {p} at world {i} leaves the domain"));
                }
            }
            for (c, e) in &w.consts {
                if !w.domain.contains(e) {
                    return Err(format!("constant {c} at world {i} designates outside the domain"));
                }
            }
        }
        for &(a, w, v) in &self.edges {
            if w >= self.worlds.len() || v >= self.worlds.len() {
                return Err(format!("edge ({a}, {w}, {v}) points outside the frame"));
            }
            if !self.worlds[w].domain.is_subset(&self.worlds[v].domain) {
                return Err(format!("domain shrinks along {w} R_{a} {v}"));
            }
        }
        Ok(())
    }

    /// Each `R_a` restricted to `worlds` is an equivalence relation.
    pub fn is_s5_on(&self, worlds: &[usize], mods: &BTreeSet<Modality>) -> bool {
        mods.iter().all(|&a| {
            let r = |u: usize, v: usize| self.edges.contains(&(a, u, v));
            worlds.iter().all(|&u| r(u, u))
                && worlds.iter().all(|&u| worlds.iter().all(|&v| r(u, v) == r(v, u)))
                && worlds
                    .iter()
                    .all(|&u| worlds.iter().all(|&v| !r(u, v) || worlds.iter().all(|&z| !r(v, z) || r(u, z))))
        })
    }

    /// Worlds reachable from `root`, in breadth-first order.
    pub fn reachable(&self, root: usize) -> Vec<usize> {
        let mut seen = vec![false; self.worlds.len()];
        let mut out = vec![root];
        seen[root] = true;
        let mut i = 0;
        while i < out.len() {
            let w = out[i];
            for &(_, u, v) in &self.edges {
                if u == w && !seen[v] {
                    seen[v] = true;
                    out.push(v);
                }
            }
            i += 1;
        }
        out
    }

    pub fn has_pred(&self, w: usize, p: &str, args: &[Elem]) -> bool {
        self.worlds[w].preds.get(p).is_some_and(|ext| ext.contains(args))
    }
}

/// Denotation of a term; `None` when it does not designate.
pub fn eval_term(m: &Interpretation, w: usize, asg: &Assignment, t: &Term) -> Option<Elem> {
    match t {
        Term::Var(x) => asg.get(x).copied(),
        Term::Const(c) => m.worlds[w].consts.get(c).copied(),
        Term::Iota(x, body) => {
            let mut found = None;
            let mut a = asg.clone();
            for &e in &m.worlds[w].domain {
                a.insert(x.clone(), e);
                if satisfies(m, w, &a, body) {
                    if found.is_some() {
                        return None;
                    }
                    found = Some(e);
                }
            }
            found
        }
    }
}

pub fn satisfies(m: &Interpretation, w: usize, asg: &Assignment, f: &Formula) -> bool {
    Evaluator::new(m, f).eval_root(w, asg)
}

/// Memoising evaluator: subformulas are indexed once and their truth values
/// cached per world and values of their free variables.
pub struct Evaluator<'m> {
    m: &'m Interpretation,
    root: usize,
    nodes: Vec<ENode>,
    memo: HashMap<(usize, usize, Vec<Elem>), bool>,
}

enum ETerm {
    Var(Name),
    Const(Name),
    /// bound variable, body node
    Iota(Name, usize),
}

enum EKind {
    True,
    Atom(Name, Vec<ETerm>),
    Eq(ETerm, ETerm),
    Not(usize),
    And(usize, usize),
    Exists(Name, usize),
    ExistsOther(Name, usize),
    Dia(Modality, usize),
}

struct ENode {
    kind: EKind,
    free: Vec<Name>,
}

impl<'m> Evaluator<'m> {
    pub fn new(m: &'m Interpretation, f: &Formula) -> Evaluator<'m> {
        let mut ev = Evaluator { m, root: 0, nodes: vec![], memo: HashMap::new() };
        ev.root = ev.index(f);
        ev
    }

    fn index_term(&mut self, t: &Term) -> ETerm {
        match t {
            Term::Var(x) => ETerm::Var(x.clone()),
            Term::Const(c) => ETerm::Const(c.clone()),
            Term::Iota(x, b) => ETerm::Iota(x.clone(), self.index(b)),
        }
    }

    fn index(&mut self, f: &Formula) -> usize {
        let kind = match f {
            Formula::True => EKind::True,
            Formula::Atom(p, ts) => EKind::Atom(p.clone(), ts.iter().map(|t| self.index_term(t)).collect()),
            Formula::Eq(a, b) => EKind::Eq(self.index_term(a), self.index_term(b)),
            Formula::Not(g) => EKind::Not(self.index(g)),
            Formula::And(a, b) => EKind::And(self.index(a), self.index(b)),
            Formula::Exists(x, g) => EKind::Exists(x.clone(), self.index(g)),
            Formula::ExistsOther(x, g) => EKind::ExistsOther(x.clone(), self.index(g)),
            Formula::Dia(a, g) => EKind::Dia(*a, self.index(g)),
        };
        self.nodes.push(ENode { kind, free: f.free_vars().into_iter().collect() });
        self.nodes.len() - 1
    }

    pub fn eval_root(&mut self, w: usize, asg: &Assignment) -> bool {
        self.eval(self.root, w, asg)
    }

    fn term(&mut self, t: &ETerm, w: usize, asg: &Assignment) -> Option<Elem> {
        match t {
            ETerm::Var(x) => asg.get(x).copied(),
            ETerm::Const(c) => self.m.worlds[w].consts.get(c).copied(),
            ETerm::Iota(x, body) => {
                let (x, body) = (x.clone(), *body);
                let mut a = asg.clone();
                let mut found = None;
                for &e in &self.m.worlds[w].domain {
                    a.insert(x.clone(), e);
                    if self.eval(body, w, &a) {
                        if found.is_some() {
                            return None;
                        }
                        found = Some(e);
                    }
                }
                found
            }
        }
    }

    fn eval(&mut self, n: usize, w: usize, asg: &Assignment) -> bool {
        let key_vals: Vec<Elem> = self.nodes[n].free.iter().map(|x| asg.get(x).copied().unwrap_or(Elem::MAX)).collect();
        let key = (n, w, key_vals);
        if let Some(&v) = self.memo.get(&key) {
            return v;
        }
        // the node is only borrowed through indices below
        let v = match &self.nodes[n].kind {
            EKind::True => true,
            EKind::Atom(..) | EKind::Eq(..) => self.eval_atomic(n, w, asg),
            &EKind::Not(g) => !self.eval(g, w, asg),
            &EKind::And(a, b) => self.eval(a, w, asg) && self.eval(b, w, asg),
            EKind::Exists(x, g) | EKind::ExistsOther(x, g) => {
                let (x, g) = (x.clone(), *g);
                let other = matches!(self.nodes[n].kind, EKind::ExistsOther(..));
                let current = asg.get(&x).copied();
                let mut a = asg.clone();
                let dom: Vec<Elem> = self.m.worlds[w].domain.iter().copied().collect();
                dom.into_iter().filter(|&e| !other || Some(e) != current).any(|e| {
                    a.insert(x.clone(), e);
                    self.eval(g, w, &a)
                })
            }
            &EKind::Dia(a, g) => {
                let succ: Vec<usize> = self.m.successors(w, a).collect();
                succ.into_iter().any(|v| self.eval(g, v, asg))
            }
        };
        self.memo.insert(key, v);
        v
    }

    fn eval_atomic(&mut self, n: usize, w: usize, asg: &Assignment) -> bool {
        // temporarily take the node out to evaluate its terms
        let kind = std::mem::replace(&mut self.nodes[n].kind, EKind::True);
        let v = match &kind {
            EKind::Atom(p, ts) => {
                let mut args = Vec::with_capacity(ts.len());
                let mut ok = true;
                for t in ts {
                    match self.term(t, w, asg) {
                        Some(e) => args.push(e),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                ok && self.m.has_pred(w, p, &args)
            }
            EKind::Eq(a, b) => {
                let x = self.term(a, w, asg);
                let y = self.term(b, w, asg);
                x.is_some() && x == y
            }
            _ => unreachable!(),
        };
        self.nodes[n].kind = kind;
        v
    }
}

/// A second evaluator, kept deliberately plain: environment passing, no
/// indexing, no memo, edges found by scanning. Only for small models.
pub mod naive {
    use super::*;

    fn denote(m: &Interpretation, w: usize, env: &[(Name, Elem)], t: &Term) -> Option<Elem> {
        match t {
            Term::Var(x) => env.iter().rev().find(|(y, _)| y == x).map(|p| p.1),
            Term::Const(c) => m.worlds[w].consts.get(c).copied(),
            Term::Iota(x, body) => {
                let mut hits = vec![];
                for &e in &m.worlds[w].domain {
                    let mut env2 = env.to_vec();
                    env2.push((x.clone(), e));
                    if holds(m, w, &env2, body) {
                        hits.push(e);
                    }
                }
                if hits.len() == 1 {
                    Some(hits[0])
                } else {
                    None
                }
            }
        }
    }

    fn holds(m: &Interpretation, w: usize, env: &[(Name, Elem)], f: &Formula) -> bool {
        match f {
            Formula::True => true,
            Formula::Atom(p, ts) => {
                let args: Option<Vec<Elem>> = ts.iter().map(|t| denote(m, w, env, t)).collect();
                match args {
                    Some(a) => m.worlds[w].preds.get(p).map(|ext| ext.contains(&a)).unwrap_or(false),
                    None => false,
                }
            }
            Formula::Eq(a, b) => match (denote(m, w, env, a), denote(m, w, env, b)) {
                (Some(x), Some(y)) => x == y,
                _ => false,
            },
            Formula::Not(g) => !holds(m, w, env, g),
            Formula::And(a, b) => holds(m, w, env, a) && holds(m, w, env, b),
            Formula::Exists(x, g) | Formula::ExistsOther(x, g) => {
                let current = denote(m, w, env, &Term::Var(x.clone()));
                let other = matches!(f, Formula::ExistsOther(..));
                m.worlds[w].domain.iter().any(|&e| {
                    if other && Some(e) == current {
                        return false;
                    }
                    let mut env2 = env.to_vec();
                    env2.push((x.clone(), e));
                    holds(m, w, &env2, g)
                })
            }
            Formula::Dia(a, g) => {
                let mut found = false;
                for &(b, u, v) in &m.edges {
                    if b == *a && u == w && holds(m, v, env, g) {
                        found = true;
                    }
                }
                found
            }
        }
    }

    pub fn satisfies(m: &Interpretation, w: usize, asg: &Assignment, f: &Formula) -> bool {
        let env: Vec<(Name, Elem)> = asg.iter().map(|(x, &e)| (x.clone(), e)).collect();
        holds(m, w, &env, f)
    }
}

/// The unfolding of `m` from `root` into a tree of depth `d`: worlds are
/// paths `w₀a₀w₁⋯`, world data is copied from the last world of the path.
pub fn unfold_tree(m: &Interpretation, root: usize, d: usize) -> Interpretation {
    let mut out = Interpretation::default();
    let mut first = m.worlds[root].clone();
    first.label = format!("w{root}");
    out.add_world(first);
    let mut frontier = vec![(0usize, root)];
    for _ in 0..d {
        let mut next = vec![];
        for &(u, tail) in &frontier {
            for &(a, w, v) in &m.edges {
                if w != tail {
                    continue;
                }
                let mut copy = m.worlds[v].clone();
                copy.label = format!("{}.{a}.w{v}", out.worlds[u].label);
                let id = out.add_world(copy);
                out.add_edge(a, u, id);
                next.push((id, v));
            }
        }
        frontier = next;
    }
    out
}

/// S5 unfolding: paths with `w_j ≠ w_{j+1}` and `a_j ≠ a_{j+1}`, each `R_a`
/// closed to the smallest equivalence containing the one-step pairs.
pub fn unfold_tree_s5(m: &Interpretation, root: usize, d: usize) -> Interpretation {
    let mods: BTreeSet<Modality> = m.edges.iter().map(|e| e.0).collect();
    let mut out = Interpretation::default();
    let mut first = m.worlds[root].clone();
    first.label = format!("w{root}");
    out.add_world(first);
    // (tree world, original world, modality used to enter)
    let mut frontier: Vec<(usize, usize, Option<Modality>)> = vec![(0, root, None)];
    let mut steps: Vec<(Modality, usize, usize)> = vec![];
    for _ in 0..d {
        let mut next = vec![];
        for &(u, tail, via) in &frontier {
            for &(a, w, v) in &m.edges {
                if w != tail || v == w || Some(a) == via {
                    continue;
                }
                let mut copy = m.worlds[v].clone();
                copy.label = format!("{}.{a}.w{v}", out.worlds[u].label);
                let id = out.add_world(copy);
                steps.push((a, u, id));
                next.push((id, v, Some(a)));
            }
        }
        frontier = next;
    }
    close_equivalences(&mut out, &mods, &steps);
    out
}

/// Adds every `R_a` as the equivalence closure of the given steps.
pub fn close_equivalences(out: &mut Interpretation, mods: &BTreeSet<Modality>, steps: &[(Modality, usize, usize)]) {
    let n = out.worlds.len();
    for &a in mods {
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for &(b, u, v) in steps {
            if b == a {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                parent[ru] = rv;
            }
        }
        let roots: Vec<usize> = (0..n).map(|x| find(&mut parent, x)).collect();
        for u in 0..n {
            for v in 0..n {
                if roots[u] == roots[v] {
                    out.add_edge(a, u, v);
                }
            }
        }
    }
}

#[derive(serde::Serialize)]
struct WorldJson {
    id: usize,
    label: String,
    domain: Vec<Elem>,
    predicates: BTreeMap<String, Vec<Vec<Elem>>>,
    constants: BTreeMap<String, Elem>,
}

#[derive(serde::Serialize)]
struct EdgeJson {
    modality: Modality,
    from: usize,
    to: usize,
}

#[derive(serde::Serialize)]
struct ModelJson {
    schema: &'static str,
    worlds: Vec<WorldJson>,
    edges: Vec<EdgeJson>,
}

pub const MODEL_SCHEMA: &str = "qmlsolver.model/1";

impl Interpretation {
    pub fn to_json(&self) -> serde_json::Value {
        let worlds = self
            .worlds
            .iter()
            .enumerate()
            .map(|(i, w)| WorldJson {
                id: i,
                label: w.label.clone(),
                domain: w.domain.iter().copied().collect(),
                predicates: w.preds.iter().map(|(p, e)| (p.to_string(), e.iter().cloned().collect())).collect(),
                constants: w.consts.iter().map(|(c, &e)| (c.to_string(), e)).collect(),
            })
            .collect();
        let edges = self.edges.iter().map(|&(modality, from, to)| EdgeJson { modality, from, to }).collect();
        serde_json::to_value(ModelJson { schema: MODEL_SCHEMA, worlds, edges }).expect("model serialises")
    }

    /// Graphviz rendering; reflexive S5 loops are omitted.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph model {\n  node [shape=box];\n");
        for (i, w) in self.worlds.iter().enumerate() {
            let mut lines = vec![format!("{} |D|={}", w.label, w.domain.len())];
            for (p, ext) in &w.preds {
                let items: Vec<String> = ext.iter().map(|t| format!("{t:?}")).collect();
                lines.push(format!("{p}: {}", items.join(" ")));
            }
            for (c, e) in &w.consts {
                lines.push(format!("{c} = {e}"));
            }
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", lines.join("\\n").replace('"', "'"));
        }
        for &(a, u, v) in &self.edges {
            if u != v {
                let _ = writeln!(s, "  n{u} -> n{v} [label=\"{a}\"];");
            }
        }
        s.push_str("}\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;

    fn world(dom: &[Elem], preds: &[(&str, &[Elem])], consts: &[(&str, Elem)]) -> World {
        World {
            label: String::new(),
            domain: dom.iter().copied().collect(),
            preds: preds.iter().map(|(p, es)| (name(p), es.iter().map(|&e| vec![e]).collect())).collect(),
            consts: consts.iter().map(|&(c, e)| (name(c), e)).collect(),
        }
    }

    fn sat(m: &Interpretation, s: &str) -> bool {
        let f = parse_formula(s).unwrap();
        let a = satisfies(m, 0, &Assignment::new(), &f);
        assert_eq!(a, naive::satisfies(m, 0, &Assignment::new(), &f), "evaluators disagree on {s}");
        a
    }

    #[test]
    fn iota_terms() {
        let mut m = Interpretation::default();
        m.add_world(world(&[0, 1], &[("P", &[1]), ("Q", &[0, 1])], &[]));
        let asg = Assignment::new();
        assert_eq!(eval_term(&m, 0, &asg, &Term::iota("x", atom("P", vec![Term::var("x")]))), Some(1));
        assert_eq!(eval_term(&m, 0, &asg, &Term::iota("x", atom("Q", vec![Term::var("x")]))), None);
        assert_eq!(eval_term(&m, 0, &asg, &Term::cst("c")), None);
    }

    #[test]
    fn undefined_atoms_are_false() {
        let mut m = Interpretation::default();
        m.add_world(world(&[0], &[("P", &[0])], &[]));
        assert!(!sat(&m, "P(c)"));
        assert!(sat(&m, "not P(c)"));
        assert!(!sat(&m, "c = c"));
        assert!(sat(&m, "box 1 false"));
    }

    #[test]
    fn vulcan_without_designation() {
        // neither vulcan nor the description designates at either world
        let mut m = Interpretation::default();
        let w0 = m.add_world(world(&[0, 1], &[("Planet", &[0])], &[]));
        let w1 = m.add_world(world(&[0, 1], &[("Planet", &[0, 1])], &[]));
        m.add_edge(1, w0, w1);
        assert!(sat(&m, "not exists x. x = vulcan"));
        assert!(sat(&m, "not exists x. x = iota z. OrbitsBetween(z, sun, mercury)"));
        assert!(sat(&m, "not (vulcan = iota z. OrbitsBetween(z, sun, mercury))"));
    }

    #[test]
    fn difference_quantifier() {
        let mut m = Interpretation::default();
        m.add_world(world(&[0, 1], &[("P", &[0])], &[]));
        assert!(sat(&m, "exists x. P(x) and not exists_ne x. P(x)"));
        assert!(sat(&m, "forall x. exists_ne x. true"));
        let mut one = Interpretation::default();
        one.add_world(world(&[0], &[], &[]));
        assert!(!sat(&one, "exists x. exists_ne x. true"));
    }

    #[test]
    fn unfold_reflexive_world() {
        let mut m = Interpretation::default();
        m.add_world(world(&[0], &[("P", &[0])], &[]));
        m.add_edge(1, 0, 0);
        let t = unfold_tree(&m, 0, 2);
        assert_eq!(t.worlds.len(), 3);
        assert_eq!(t.edges.len(), 2);
        let f = parse_formula("dia 1 dia 1 exists x. P(x)").unwrap();
        assert!(satisfies(&t, 0, &Assignment::new(), &f));
    }

    #[test]
    fn json_shape() {
        let mut m = Interpretation::default();
        m.add_world(world(&[0], &[("P", &[0])], &[("c", 0)]));
        let j = m.to_json();
        assert_eq!(j["schema"], MODEL_SCHEMA);
        assert_eq!(j["worlds"][0]["constants"]["c"], 0);
        assert_eq!(j["worlds"][0]["predicates"]["P"][0][0], 0);
        assert!(m.to_dot().starts_with("digraph"));
    }
}
