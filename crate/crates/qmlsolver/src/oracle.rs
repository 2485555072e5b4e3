//! Bounded model search used as the independent reference.
//!
//! For K frames the search space is every prefix-closed subtree of the full
//! tree of the given depth and branching (per modality); for S5 it is every
//! tuple of partitions of at most `max_worlds` worlds. Within a frame, domains,
//! extensions and partial constant maps up to `max_domain` elements are
//! searched exhaustively by a SAT solver. Found models are re-checked with
//! [`crate::model::satisfies`].

use crate::error::{Error, Result};
use crate::formula::*;
use crate::model::{satisfies, Assignment, Elem, Interpretation, World};
use crate::parse::{ConstSemantics, Domains};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use varisat::{ExtendFormula, Lit, Solver};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameClass {
    K,
    S5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Semantics {
    pub frames: FrameClass,
    pub domains: Domains,
    pub constants: ConstSemantics,
}

impl Semantics {
    pub fn k(domains: Domains, constants: ConstSemantics) -> Semantics {
        Semantics { frames: FrameClass::K, domains, constants }
    }

    pub fn s5(constants: ConstSemantics) -> Semantics {
        Semantics { frames: FrameClass::S5, domains: Domains::Constant, constants }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    pub max_worlds: usize,
    pub max_depth: usize,
    /// successors per world and modality (K frames)
    pub max_branching: usize,
    pub max_domain: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_worlds: 4, max_depth: 2, max_branching: 3, max_domain: 4 }
    }
}

/// Upper limit on SAT variables before the search gives up.
pub const MAX_VARS: usize = 4_000_000;

impl Bounds {
    /// Parses `w=4,d=2,b=3,dom=4`; missing keys keep their defaults.
    pub fn parse(s: &str) -> Result<Bounds> {
        let mut b = Bounds::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Invalid(format!("bad bound {part:?}")))?;
            let v: usize = v.trim().parse().map_err(|_| Error::Invalid(format!("bad bound value {part:?}")))?;
            match k.trim() {
                "w" => b.max_worlds = v,
                "d" => b.max_depth = v,
                "b" => b.max_branching = v,
                "dom" => b.max_domain = v,
                _ => return Err(Error::Invalid(format!("unknown bound {k:?}"))),
            }
        }
        if b.max_domain == 0 || b.max_worlds == 0 {
            return Err(Error::Invalid("bounds must be positive".into()));
        }
        Ok(b)
    }
}

/// A frame skeleton: worlds, which of them may be switched off, and edges.
struct Skeleton {
    /// parent of each world; `None` for the root and for S5 worlds
    parent: Vec<Option<usize>>,
    edges: Vec<(Modality, usize, usize)>,
    optional: bool,
}

fn tree_skeleton(mods: &[Modality], depth: usize, branching: usize) -> Skeleton {
    let mut parent = vec![None];
    let mut edges = vec![];
    let mut frontier = vec![0];
    for _ in 0..depth {
        let mut next = vec![];
        for &w in &frontier {
            for &a in mods {
                for _ in 0..branching {
                    let v = parent.len();
                    parent.push(Some(w));
                    edges.push((a, w, v));
                    next.push(v);
                }
            }
        }
        frontier = next;
    }
    Skeleton { parent, edges, optional: true }
}

/// All set partitions of `0..n` as block labels, first occurrence order.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, cur: &mut Vec<usize>, blocks: usize, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..=blocks {
            cur.push(b);
            go(i + 1, n, cur, blocks.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = vec![];
    go(0, n, &mut vec![], 0, &mut out);
    out
}

fn s5_skeletons(mods: &[Modality], n: usize) -> Vec<Skeleton> {
    let parts = partitions(n);
    let mut out = vec![];
    let mut idx = vec![0usize; mods.len()];
    loop {
        let mut edges = vec![];
        for (k, &a) in mods.iter().enumerate() {
            let p = &parts[idx[k]];
            for u in 0..n {
                for v in 0..n {
                    if p[u] == p[v] {
                        edges.push((a, u, v));
                    }
                }
            }
        }
        // worlds not reachable from 0 only repeat smaller frames
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for &(_, x, y) in &edges {
                if x == u && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        if seen.iter().all(|&s| s) {
            out.push(Skeleton { parent: vec![None; n], edges, optional: false });
        }
        let mut k = 0;
        loop {
            if k == mods.len() {
                return out;
            }
            idx[k] += 1;
            if idx[k] < parts.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Subformula index shared by the encoder.
enum N {
    True,
    Atom(Name, Vec<T>),
    Eq(T, T),
    Not(usize),
    And(usize, usize),
    Exists(Name, usize, bool),
    Dia(Modality, usize),
}

enum T {
    Var(Name),
    Const(Name),
    Iota(Name, usize),
}

struct Index {
    nodes: Vec<(N, Vec<Name>)>,
}

impl Index {
    fn term(&mut self, t: &Term) -> T {
        match t {
            Term::Var(x) => T::Var(x.clone()),
            Term::Const(c) => T::Const(c.clone()),
            Term::Iota(x, b) => T::Iota(x.clone(), self.add(b)),
        }
    }

    fn add(&mut self, f: &Formula) -> usize {
        let n = match f {
            Formula::True => N::True,
            Formula::Atom(p, ts) => N::Atom(p.clone(), ts.iter().map(|t| self.term(t)).collect()),
            Formula::Eq(a, b) => N::Eq(self.term(a), self.term(b)),
            Formula::Not(g) => N::Not(self.add(g)),
            Formula::And(a, b) => N::And(self.add(a), self.add(b)),
            Formula::Exists(x, g) => N::Exists(x.clone(), self.add(g), false),
            Formula::ExistsOther(x, g) => N::Exists(x.clone(), self.add(g), true),
            Formula::Dia(a, g) => N::Dia(*a, self.add(g)),
        };
        self.nodes.push((n, f.free_vars().into_iter().collect()));
        self.nodes.len() - 1
    }
}

struct Enc<'a> {
    s: Solver<'static>,
    idx: &'a Index,
    sk: &'a Skeleton,
    dom: usize,
    tt: Lit,
    alive: Vec<Lit>,
    /// `in_dom[w][e]`
    in_dom: Vec<Vec<Lit>>,
    preds: HashMap<(Name, usize, Vec<Elem>), Lit>,
    des: HashMap<(Name, usize, Elem), Lit>,
    memo: HashMap<(usize, usize, Vec<Elem>), Lit>,
    succ: HashMap<(usize, Modality), Vec<usize>>,
    consts: BTreeSet<Name>,
    nvars: usize,
}

impl<'a> Enc<'a> {
    fn fresh(&mut self) -> Result<Lit> {
        self.nvars += 1;
        if self.nvars > MAX_VARS {
            return Err(Error::Cap(format!("oracle encoding exceeds {MAX_VARS} variables")));
        }
        Ok(self.s.new_lit())
    }

    fn and_of(&mut self, ls: &[Lit]) -> Result<Lit> {
        if ls.is_empty() {
            return Ok(self.tt);
        }
        if ls.len() == 1 {
            return Ok(ls[0]);
        }
        let g = self.fresh()?;
        for &l in ls {
            self.s.add_clause(&[!g, l]);
        }
        let mut c: Vec<Lit> = ls.iter().map(|&l| !l).collect();
        c.push(g);
        self.s.add_clause(&c);
        Ok(g)
    }

    fn or_of(&mut self, ls: &[Lit]) -> Result<Lit> {
        let neg: Vec<Lit> = ls.iter().map(|&l| !l).collect();
        Ok(!self.and_of(&neg)?)
    }

    fn new(idx: &'a Index, sk: &'a Skeleton, sem: Semantics, dom: usize, f: &Formula) -> Result<Enc<'a>> {
        let mut s = Solver::new();
        let tt = s.new_lit();
        s.add_clause(&[tt]);
        let nw = sk.parent.len();
        let mut e = Enc {
            s,
            idx,
            sk,
            dom,
            tt,
            alive: vec![],
            in_dom: vec![],
            preds: HashMap::new(),
            des: HashMap::new(),
            memo: HashMap::new(),
            succ: HashMap::new(),
            consts: f.constants(),
            nvars: 1,
        };
        for w in 0..nw {
            let l = if sk.optional && w > 0 { e.fresh()? } else { tt };
            e.alive.push(l);
        }
        for w in 0..nw {
            if let Some(p) = sk.parent[w] {
                let (a, b) = (e.alive[w], e.alive[p]);
                e.s.add_clause(&[!a, b]);
            }
        }
        for &(a, u, v) in &sk.edges {
            e.succ.entry((u, a)).or_default().push(v);
        }
        match sem.domains {
            Domains::Constant => {
                let row: Vec<Lit> = (0..dom).map(|_| e.fresh()).collect::<Result<_>>()?;
                // elements are used in order
                for k in 1..dom {
                    e.s.add_clause(&[!row[k], row[k - 1]]);
                }
                e.s.add_clause(&[row[0]]);
                e.in_dom = vec![row; nw];
            }
            Domains::Expanding => {
                for w in 0..nw {
                    let row: Vec<Lit> = (0..dom).map(|_| e.fresh()).collect::<Result<_>>()?;
                    let mut c = row.clone();
                    c.push(!e.alive[w]);
                    e.s.add_clause(&c);
                    e.in_dom.push(row);
                }
                for &(_, u, v) in &sk.edges {
                    for k in 0..dom {
                        let (x, y) = (e.in_dom[u][k], e.in_dom[v][k]);
                        e.s.add_clause(&[!x, y]);
                    }
                }
            }
        }
        let consts: Vec<Name> = e.consts.iter().cloned().collect();
        for c in &consts {
            for w in 0..nw {
                let ls: Vec<Lit> = (0..dom as Elem).map(|k| e.des_lit(c, w, k)).collect::<Result<_>>()?;
                for i in 0..ls.len() {
                    for j in i + 1..ls.len() {
                        e.s.add_clause(&[!ls[i], !ls[j]]);
                    }
                }
                if sem.constants == ConstSemantics::Total {
                    let mut cl = ls.clone();
                    cl.push(!e.alive[w]);
                    e.s.add_clause(&cl);
                }
            }
        }
        Ok(e)
    }

    fn des_lit(&mut self, c: &Name, w: usize, k: Elem) -> Result<Lit> {
        if let Some(&l) = self.des.get(&(c.clone(), w, k)) {
            return Ok(l);
        }
        let l = self.fresh()?;
        let d = self.in_dom[w][k as usize];
        self.s.add_clause(&[!l, d]);
        self.des.insert((c.clone(), w, k), l);
        Ok(l)
    }

    fn pred_lit(&mut self, p: &Name, w: usize, args: Vec<Elem>) -> Result<Lit> {
        let key = (p.clone(), w, args);
        if let Some(&l) = self.preds.get(&key) {
            return Ok(l);
        }
        let l = self.fresh()?;
        for &a in &key.2 {
            let d = self.in_dom[w][a as usize];
            self.s.add_clause(&[!l, d]);
        }
        self.preds.insert(key, l);
        Ok(l)
    }

    /// Literal for "term denotes `k`".
    fn den(&mut self, t: &T, w: usize, asg: &BTreeMap<Name, Elem>, k: Elem) -> Result<Lit> {
        match t {
            T::Var(x) => Ok(if asg.get(x) == Some(&k) { self.tt } else { !self.tt }),
            T::Const(c) => self.des_lit(c, w, k),
            T::Iota(x, body) => {
                let mut hits = vec![];
                for j in 0..self.dom as Elem {
                    let mut a = asg.clone();
                    a.insert(x.clone(), j);
                    let inside = self.in_dom[w][j as usize];
                    let b = self.enc(*body, w, &a)?;
                    hits.push(self.and_of(&[inside, b])?);
                }
                let mut conj = vec![hits[k as usize]];
                for (j, &h) in hits.iter().enumerate() {
                    if j != k as usize {
                        conj.push(!h);
                    }
                }
                self.and_of(&conj)
            }
        }
    }

    fn enc(&mut self, n: usize, w: usize, asg: &BTreeMap<Name, Elem>) -> Result<Lit> {
        let (node, free) = &self.idx.nodes[n];
        let key_vals: Vec<Elem> = free.iter().map(|x| asg[x]).collect();
        if let Some(&l) = self.memo.get(&(n, w, key_vals.clone())) {
            return Ok(l);
        }
        let l = match node {
            N::True => self.tt,
            N::Atom(p, ts) => {
                let mut disj = vec![];
                let mut tuple = vec![0 as Elem; ts.len()];
                loop {
                    let mut conj = vec![];
                    for (i, t) in ts.iter().enumerate() {
                        conj.push(self.den(t, w, asg, tuple[i])?);
                    }
                    if !conj.contains(&!self.tt) {
                        conj.push(self.pred_lit(p, w, tuple.clone())?);
                        disj.push(self.and_of(&conj)?);
                    }
                    // next tuple
                    let mut i = 0;
                    while i < tuple.len() {
                        tuple[i] += 1;
                        if (tuple[i] as usize) < self.dom {
                            break;
                        }
                        tuple[i] = 0;
                        i += 1;
                    }
                    if i == tuple.len() {
                        break;
                    }
                }
                self.or_of(&disj)?
            }
            N::Eq(a, b) => {
                let mut disj = vec![];
                for k in 0..self.dom as Elem {
                    let x = self.den(a, w, asg, k)?;
                    let y = self.den(b, w, asg, k)?;
                    disj.push(self.and_of(&[x, y])?);
                }
                self.or_of(&disj)?
            }
            N::Not(g) => !self.enc(*g, w, asg)?,
            N::And(a, b) => {
                let x = self.enc(*a, w, asg)?;
                let y = self.enc(*b, w, asg)?;
                self.and_of(&[x, y])?
            }
            N::Exists(x, g, other) => {
                let current = asg.get(x).copied();
                let mut disj = vec![];
                for k in 0..self.dom as Elem {
                    if *other && Some(k) == current {
                        continue;
                    }
                    let mut a = asg.clone();
                    a.insert(x.clone(), k);
                    let inside = self.in_dom[w][k as usize];
                    let b = self.enc(*g, w, &a)?;
                    disj.push(self.and_of(&[inside, b])?);
                }
                self.or_of(&disj)?
            }
            N::Dia(a, g) => {
                let succ = self.succ.get(&(w, *a)).cloned().unwrap_or_default();
                let mut disj = vec![];
                for v in succ {
                    let b = self.enc(*g, v, asg)?;
                    let al = self.alive[v];
                    disj.push(self.and_of(&[al, b])?);
                }
                self.or_of(&disj)?
            }
        };
        self.memo.insert((n, w, key_vals), l);
        Ok(l)
    }

    fn decode(&self, model: &[Lit]) -> Interpretation {
        let val = |l: Lit| {
            if l == self.tt {
                return true;
            }
            if l == !self.tt {
                return false;
            }
            let v = model[l.var().index()];
            v == l
        };
        let nw = self.sk.parent.len();
        let mut ids = vec![usize::MAX; nw];
        let mut m = Interpretation::default();
        for w in 0..nw {
            if !val(self.alive[w]) {
                continue;
            }
            let domain = (0..self.dom).filter(|&k| val(self.in_dom[w][k])).map(|k| k as Elem).collect();
            ids[w] = m.add_world(World { label: format!("w{w}"), domain, ..World::default() });
        }
        for ((p, w, args), &l) in &self.preds {
            if ids[*w] != usize::MAX && val(l) {
                m.worlds[ids[*w]].preds.entry(p.clone()).or_default().insert(args.clone());
            }
        }
        for ((c, w, k), &l) in &self.des {
            if ids[*w] != usize::MAX && val(l) {
                m.worlds[ids[*w]].consts.insert(c.clone(), *k);
            }
        }
        for &(a, u, v) in &self.sk.edges {
            if ids[u] != usize::MAX && ids[v] != usize::MAX {
                m.add_edge(a, ids[u], ids[v]);
            }
        }
        m
    }
}

fn solve_on(f: &Formula, sk: &Skeleton, sem: Semantics, dom: usize) -> Result<Option<Interpretation>> {
    let mut idx = Index { nodes: vec![] };
    let root = idx.add(f);
    let mut e = Enc::new(&idx, sk, sem, dom, f)?;
    let r = e.enc(root, 0, &BTreeMap::new())?;
    e.s.add_clause(&[r]);
    let ok = e.s.solve().map_err(|err| Error::Cap(format!("SAT solver: {err}")))?;
    if !ok {
        return Ok(None);
    }
    let model = e.s.model().expect("model after SAT");
    Ok(Some(e.decode(&model)))
}

/// Domain sizes tried in order; the last covers every smaller size too.
fn domain_schedule(max: usize) -> Vec<usize> {
    let mut v: Vec<usize> = [1, 2, 4].into_iter().filter(|&k| k < max).collect();
    v.push(max);
    v
}

/// Searches for a model of the sentence `f` at the root within `bounds`.
/// Modalities are those occurring in `f`.
pub fn brute_force_sat(f: &Formula, bounds: Bounds, sem: Semantics) -> Result<Option<Interpretation>> {
    if !f.is_sentence() {
        return Err(Error::Invalid(format!("not a sentence: {f}")));
    }
    let mods: Vec<Modality> = f.modalities().into_iter().collect();
    let skeletons: Vec<Skeleton> = match sem.frames {
        FrameClass::K => vec![tree_skeleton(&mods, bounds.max_depth, bounds.max_branching)],
        FrameClass::S5 => (1..=bounds.max_worlds).flat_map(|n| s5_skeletons(&mods, n)).collect(),
    };
    for sk in &skeletons {
        if sem.frames == FrameClass::K && sk.parent.len() > bounds.max_worlds.max(1) * 1000 {
            return Err(Error::Cap(format!("tree skeleton with {} worlds", sk.parent.len())));
        }
    }
    for dom in domain_schedule(bounds.max_domain) {
        for sk in &skeletons {
            if let Some(m) = solve_on(f, sk, sem, dom)? {
                if let Err(e) = m.well_formed() {
                    return Err(Error::SelfCheck(format!("oracle produced an ill-formed model: {e}")));
                }
                if !satisfies(&m, 0, &Assignment::new(), f) {
                    return Err(Error::SelfCheck(format!("oracle model does not satisfy {f}")));
                }
                return Ok(Some(m));
            }
        }
    }
    Ok(None)
}

/// Literal enumeration of the same search space as [`brute_force_sat`] for K
/// frames; usable only for tiny bounds, it exists to test the encoding.
pub fn enumerate_sat(f: &Formula, bounds: Bounds, sem: Semantics) -> Option<Interpretation> {
    let mods: Vec<Modality> = f.modalities().into_iter().collect();
    let sk = tree_skeleton(&mods, bounds.max_depth, bounds.max_branching);
    let nw = sk.parent.len();
    let preds: Vec<(Name, usize)> = f.predicates().into_iter().collect();
    let consts: Vec<Name> = f.constants().into_iter().collect();
    let d = bounds.max_domain;
    for alive_mask in 0u64..1 << (nw - 1) {
        let alive: Vec<bool> = (0..nw).map(|w| w == 0 || alive_mask >> (w - 1) & 1 == 1).collect();
        if (1..nw).any(|w| alive[w] && !alive[sk.parent[w].unwrap()]) {
            continue;
        }
        let live: Vec<usize> = (0..nw).filter(|&w| alive[w]).collect();
        let mut frame = Interpretation::default();
        let mut id = vec![usize::MAX; nw];
        for &w in &live {
            id[w] = frame.add_world(World { label: format!("w{w}"), ..World::default() });
        }
        for &(a, u, v) in &sk.edges {
            if alive[u] && alive[v] {
                frame.add_edge(a, id[u], id[v]);
            }
        }
        // domain choices per world
        let dom_choices: Vec<Vec<BTreeSet<Elem>>> = match sem.domains {
            Domains::Constant => (1..=d).map(|k| vec![(0..k as Elem).collect(); live.len()]).collect(),
            Domains::Expanding => {
                let subsets: Vec<BTreeSet<Elem>> = (1u32..1 << d)
                    .map(|m| (0..d as Elem).filter(|&e| m >> e & 1 == 1).collect())
                    .collect();
                let mut all: Vec<Vec<BTreeSet<Elem>>> = vec![vec![]];
                for _ in &live {
                    all = all.into_iter().flat_map(|p| subsets.iter().map(move |s| [p.clone(), vec![s.clone()]].concat())).collect();
                }
                all.into_iter()
                    .filter(|ds| {
                        frame.edges.iter().all(|&(_, u, v)| ds[u].is_subset(&ds[v]))
                    })
                    .collect()
            }
        };
        for doms in dom_choices {
            let mut m = frame.clone();
            for (i, dset) in doms.iter().enumerate() {
                m.worlds[i].domain = dset.clone();
            }
            // slots: predicate facts, then constant choices
            let mut facts: Vec<(usize, Name, Vec<Elem>)> = vec![];
            for (i, dset) in doms.iter().enumerate() {
                for (p, ar) in &preds {
                    let elems: Vec<Elem> = dset.iter().copied().collect();
                    let mut tuples: Vec<Vec<Elem>> = vec![vec![]];
                    for _ in 0..*ar {
                        tuples = tuples.into_iter().flat_map(|t| elems.iter().map(move |&e| [t.clone(), vec![e]].concat())).collect();
                    }
                    for t in tuples {
                        facts.push((i, p.clone(), t));
                    }
                }
            }
            let mut cslots: Vec<(usize, Name, Vec<Option<Elem>>)> = vec![];
            for (i, dset) in doms.iter().enumerate() {
                for c in &consts {
                    let mut opts: Vec<Option<Elem>> = dset.iter().map(|&e| Some(e)).collect();
                    if sem.constants == ConstSemantics::Partial {
                        opts.insert(0, None);
                    }
                    cslots.push((i, c.clone(), opts));
                }
            }
            if facts.len() > 24 {
                return None;
            }
            let mut cidx = vec![0usize; cslots.len()];
            loop {
                for mask in 0u64..1 << facts.len() {
                    let mut mm = m.clone();
                    for (j, (i, p, t)) in facts.iter().enumerate() {
                        if mask >> j & 1 == 1 {
                            mm.worlds[*i].preds.entry(p.clone()).or_default().insert(t.clone());
                        }
                    }
                    for (j, (i, c, opts)) in cslots.iter().enumerate() {
                        if let Some(e) = opts[cidx[j]] {
                            mm.worlds[*i].consts.insert(c.clone(), e);
                        }
                    }
                    if satisfies(&mm, 0, &Assignment::new(), f) {
                        return Some(mm);
                    }
                }
                let mut k = 0;
                while k < cidx.len() {
                    cidx[k] += 1;
                    if cidx[k] < cslots[k].2.len() {
                        break;
                    }
                    cidx[k] = 0;
                    k += 1;
                }
                if k == cidx.len() {
                    break;
                }
            }
        }
    }
    None
}
