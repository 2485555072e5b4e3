//! Satisfiability over K_n and S5_n trees by search over quasistates.
//!
//! Constant domains: a world is summarised by its sentence part, the set `G`
//! of types carried by infinitely many elements and a finite multiset `U` of
//! individually tracked elements (constants live here). Expanding domains: a
//! world is a finite multiset of types, children receive the images of all
//! elements plus whatever new elements their existentials and constants need.

use crate::closure::{BasicKind, Bits, Closure};
use crate::error::{Error, Result};
use crate::extnat::ExtNat::{Aleph0, Fin};
use crate::formula::Modality;
use crate::levels::{Frames, Levels, Obligation};
use crate::quasimodel::{Frame, Run, WeakQuasimodel};
use crate::quasistate::Quasistate;
use itertools::Itertools;
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Limits {
    /// non-constant unit types a transition may split off the generic part
    pub spawn_cap: usize,
    /// non-constant unit types at the root
    pub root_units: usize,
    /// search nodes before giving up
    pub max_nodes: u64,
}

impl Limits {
    pub fn for_closure(cl: &Closure) -> Limits {
        let c = cl.constants.len();
        Limits { spawn_cap: if c == 0 { 0 } else { c + 1 }, root_units: c, max_nodes: 5_000_000 }
    }
}

/// Constant-domain state `(σ, G, U)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GState {
    pub sigma: Bits,
    pub generic: Vec<Bits>,
    pub units: Vec<(Bits, u32)>,
}

impl GState {
    /// Units of a type in `generic` are absorbed by it.
    pub fn new(sigma: Bits, generic: Vec<Bits>, units: impl IntoIterator<Item = Bits>) -> GState {
        let mut counts: BTreeMap<Bits, u32> = BTreeMap::new();
        for u in units {
            if generic.binary_search(&u).is_err() {
                *counts.entry(u).or_default() += 1;
            }
        }
        GState { sigma, generic, units: counts.into_iter().collect() }
    }

    pub fn copies(&self) -> Vec<Bits> {
        self.units.iter().flat_map(|&(t, k)| std::iter::repeat(t).take(k as usize)).collect()
    }

    pub fn quasistate(&self) -> Quasistate {
        let mut q = Quasistate::new();
        for &g in &self.generic {
            q.add(g, Aleph0);
        }
        for &(t, k) in &self.units {
            q.add(t, Fin(k as u64));
        }
        q
    }

    fn support(&self) -> Vec<Bits> {
        let mut s: Vec<Bits> = self.generic.iter().copied().chain(self.units.iter().map(|u| u.0)).collect();
        s.sort();
        s
    }
}

/// What a child has to witness: a closed diamond, or a diamond of one type's prototype.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Sentence(Obligation),
    Elem(Bits, Obligation),
}

impl Target {
    pub fn obligation(&self) -> Obligation {
        match *self {
            Target::Sentence(o) | Target::Elem(_, o) => o,
        }
    }
}

/// Where the prototype of a parent type goes in a child.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Landing {
    Generic(Bits),
    /// the spawned unit with this index
    Spawn(usize),
    /// the first copy of the unit type
    Unit,
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub a: Modality,
    pub child: GState,
    /// target type of each parent unit copy, in the order of `copies()`
    pub routes: Vec<Bits>,
    /// `(source generic type, spawned unit type)`
    pub spawns: Vec<(Bits, Bits)>,
    pub landings: BTreeMap<Bits, Landing>,
}

pub(crate) fn targets(lv: &Levels, level: usize, via: Option<Modality>, support: &[Bits]) -> Vec<Target> {
    let mut out = vec![];
    for &t in support {
        for ob in lv.obligations(t, level, via) {
            let tg = if ob.elem { Target::Elem(t, ob) } else { Target::Sentence(ob) };
            if !out.contains(&tg) {
                out.push(tg);
            }
        }
    }
    out
}

/// Subsets of `items`, smallest first, generated lazily.
pub(crate) fn subsets_asc(items: &[Bits]) -> impl Iterator<Item = Vec<Bits>> + '_ {
    (0..=items.len()).flat_map(move |k| items.iter().copied().combinations(k))
}

pub(crate) fn subsets_upto(items: &[Bits], k: usize) -> Vec<Vec<Bits>> {
    let mut out = vec![vec![]];
    fn go(items: &[Bits], k: usize, start: usize, cur: &mut Vec<Bits>, out: &mut Vec<Vec<Bits>>) {
        if cur.len() == k {
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            out.push(cur.clone());
            go(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    go(items, k, 0, &mut vec![], &mut out);
    out
}

/// Assignments of a target to each copy; copies of one type take targets in
/// non-decreasing order, except `free` (the prototype copy) which is unordered.
pub(crate) fn route_combos(copies: &[Bits], succ: &[Vec<Bits>], free: Option<usize>) -> Vec<Vec<Bits>> {
    let mut out = vec![];
    fn go(i: usize, copies: &[Bits], succ: &[Vec<Bits>], free: Option<usize>, cur: &mut Vec<Bits>, out: &mut Vec<Vec<Bits>>) {
        if i == copies.len() {
            out.push(cur.clone());
            return;
        }
        let floor = if i > 0 && copies[i - 1] == copies[i] && Some(i - 1) != free && Some(i) != free {
            Some(cur[i - 1])
        } else {
            None
        };
        for &t in &succ[i] {
            if floor.is_some_and(|f| t < f) {
                continue;
            }
            cur.push(t);
            go(i + 1, copies, succ, free, cur, out);
            cur.pop();
        }
    }
    go(0, copies, succ, free, &mut vec![], &mut out);
    out
}

/// Ways to give each constant in `missing` exactly one holder among `cand`.
pub(crate) fn holder_sets(cand: &[Bits], const_bits: &[Bits], missing: Bits) -> Vec<Vec<Bits>> {
    let all: Bits = const_bits.iter().fold(0, |m, b| m | b);
    let mut out = vec![];
    fn go(cand: &[Bits], all: Bits, missing: Bits, cur: &mut Vec<Bits>, out: &mut Vec<Vec<Bits>>) {
        if missing == 0 {
            out.push(cur.clone());
            return;
        }
        let low = missing & missing.wrapping_neg();
        for &t in cand {
            let cb = t & all;
            if cb & low != 0 && cb & !missing == 0 {
                cur.push(t);
                go(cand, all, missing & !cb, cur, out);
                cur.pop();
            }
        }
    }
    go(cand, all, missing, &mut vec![], &mut out);
    out
}

pub(crate) fn const_mask(cl: &Closure) -> Bits {
    cl.const_bits().iter().fold(0, |m, b| m | b)
}

/// Constant-domain search, shared by K_n and S5_n.
pub struct ConstantSearch<'a, 'c> {
    pub lv: &'a Levels<'c>,
    pub limits: Limits,
    memo: HashMap<(usize, Option<Modality>, GState), bool>,
    pub nodes: u64,
    cmask: Bits,
}

impl<'a, 'c> ConstantSearch<'a, 'c> {
    pub fn new(lv: &'a Levels<'c>, limits: Limits) -> Self {
        ConstantSearch { lv, limits, memo: HashMap::new(), nodes: 0, cmask: const_mask(lv.cl) }
    }

    fn is_const(&self, t: Bits) -> bool {
        t & self.cmask != 0
    }

    fn child_via(&self, a: Modality) -> Option<Modality> {
        match self.lv.frames {
            Frames::K => None,
            Frames::S5 => Some(a),
        }
    }

    fn realisable(&self, level: usize, st: &GState) -> bool {
        self.lv.space(level).is_realisable(&st.quasistate())
    }

    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.limits.max_nodes {
            return Err(Error::Cap(format!("search exceeded {} nodes", self.limits.max_nodes)));
        }
        Ok(())
    }

    /// Visits root states in search order until `f` returns `Some`. Smaller
    /// generic parts come first, across all sentence valuations.
    pub fn for_each_root<T>(&mut self, mut f: impl FnMut(&mut Self, GState) -> Result<Option<T>>) -> Result<Option<T>> {
        let lv = self.lv;
        let cb = lv.cl.const_bits();
        let all_consts = cb.iter().fold(0, |m, b| m | b);
        let per_sigma: Vec<(Bits, Vec<Bits>, Vec<Vec<Bits>>)> = lv
            .root_sigmas()
            .into_iter()
            .map(|sigma| {
                let types = lv.viable_types(lv.d, None, sigma);
                let nc: Vec<Bits> = types.iter().copied().filter(|&t| !self.is_const(t)).collect();
                let ct: Vec<Bits> = types.iter().copied().filter(|&t| self.is_const(t)).collect();
                (sigma, nc, holder_sets(&ct, &cb, all_consts))
            })
            .collect();
        let widest = per_sigma.iter().map(|p| p.1.len()).max().unwrap_or(0);
        for k in 0..=widest {
            for (sigma, nc, holders) in &per_sigma {
                for g in nc.iter().copied().combinations(k) {
                    let rest: Vec<Bits> = nc.iter().copied().filter(|t| !g.contains(t)).collect();
                    for h in holders {
                        for extra in subsets_upto(&rest, self.limits.root_units) {
                            let st = GState::new(*sigma, g.clone(), h.iter().chain(&extra).copied());
                            self.tick()?;
                            if self.realisable(lv.d, &st) {
                                if let Some(x) = f(self, st)? {
                                    return Ok(Some(x));
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    pub fn sub(&mut self, level: usize, via: Option<Modality>, st: &GState) -> Result<bool> {
        let key = (level, via, st.clone());
        if let Some(&b) = self.memo.get(&key) {
            return Ok(b);
        }
        self.tick()?;
        let mut ok = self.realisable(level, st);
        if ok && level > 0 {
            for tg in targets(self.lv, level, via, &st.support()) {
                if self.find_child(level, st, tg)?.is_none() {
                    ok = false;
                    break;
                }
            }
        }
        self.memo.insert(key, ok);
        Ok(ok)
    }

    /// A transition for `tg` whose child state passes `sub`.
    pub fn find_child(&mut self, level: usize, st: &GState, tg: Target) -> Result<Option<Transition>> {
        let lv = self.lv;
        let ob = tg.obligation();
        let a = ob.a;
        let lc = level - 1;
        let vc = self.child_via(a);
        let cb = lv.cl.const_bits();
        let copies = st.copies();
        let proto_copy = match tg {
            Target::Elem(t, _) if st.generic.binary_search(&t).is_err() => copies.iter().position(|&c| c == t),
            _ => None,
        };
        let sigmas: Vec<Bits> = lv
            .viable(lc, vc)
            .keys()
            .copied()
            .filter(|&s2| lv.coherent_sentences(a, st.sigma, level, s2))
            .filter(|&s2| !matches!(tg, Target::Sentence(o) if !lv.cl.eval(o.body, s2)))
            .collect();
        for s2 in sigmas {
            let cand = lv.viable_types(lc, vc, s2);
            let succ = |t: Bits| -> Vec<Bits> { cand.iter().copied().filter(|&t2| lv.coherent(a, t, level, t2)).collect() };
            let g_succ: Vec<Vec<Bits>> = st
                .generic
                .iter()
                .map(|&g| succ(g).into_iter().filter(|&t2| !self.is_const(t2)).collect())
                .collect();
            if g_succ.iter().any(Vec::is_empty) {
                continue;
            }
            let n_all: Vec<Bits> = g_succ.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let options: Box<dyn Iterator<Item = Vec<Bits>>> = if st.generic.is_empty() {
                Box::new(std::iter::once(vec![]))
            } else if lc == 0 {
                Box::new(std::iter::once(n_all.clone()))
            } else {
                Box::new(subsets_asc(&n_all))
            };
            let mut copy_succ: Vec<Vec<Bits>> = copies.iter().map(|&t| succ(t)).collect();
            if let (Some(i0), Target::Elem(_, o)) = (proto_copy, tg) {
                copy_succ[i0].retain(|&t2| lv.cl.eval(o.body, t2));
            }
            if copy_succ.iter().any(Vec::is_empty) {
                continue;
            }
            let routes_all = route_combos(&copies, &copy_succ, proto_copy);
            // spawn sources
            let spawnable: Vec<(Bits, Bits)> = cand
                .iter()
                .copied()
                .filter_map(|t2| st.generic.iter().copied().find(|&g| lv.coherent(a, g, level, t2)).map(|g| (g, t2)))
                .collect();
            let const_cand: Vec<Bits> = spawnable.iter().map(|p| p.1).filter(|&t2| self.is_const(t2)).collect();
            for gp in options {
                let gp = &gp;
                self.tick()?;
                if !g_succ.iter().all(|s| s.iter().any(|t| gp.binary_search(t).is_ok())) {
                    continue;
                }
                let nc_spawn: Vec<Bits> = spawnable
                    .iter()
                    .map(|p| p.1)
                    .filter(|&t2| !self.is_const(t2) && gp.binary_search(&t2).is_err())
                    .collect();
                let nc_sets = subsets_upto(&nc_spawn, if lc == 0 { 0 } else { self.limits.spawn_cap });
                for routes in &routes_all {
                    let mut held: Bits = 0;
                    let mut clash = false;
                    for &t2 in routes {
                        let c = t2 & self.cmask;
                        clash |= held & c != 0;
                        held |= c;
                    }
                    if clash {
                        continue;
                    }
                    let missing = self.cmask & !held;
                    let holder_opts = if missing == 0 { vec![vec![]] } else { holder_sets(&const_cand, &cb, missing) };
                    for hs in &holder_opts {
                        for ns in &nc_sets {
                            let mut spawns: Vec<(Bits, Bits)> = hs
                                .iter()
                                .chain(ns)
                                .map(|&t2| *spawnable.iter().find(|p| p.1 == t2).unwrap())
                                .collect();
                            let mut landings = BTreeMap::new();
                            match tg {
                                Target::Sentence(_) => {}
                                Target::Elem(t, o) if proto_copy.is_some() => {
                                    let _ = o;
                                    landings.insert(t, Landing::Unit);
                                }
                                Target::Elem(t, o) => {
                                    let fits = |t2: Bits| lv.coherent(a, t, level, t2) && lv.cl.eval(o.body, t2);
                                    if let Some(&g2) = gp.iter().find(|&&g2| fits(g2)) {
                                        landings.insert(t, Landing::Generic(g2));
                                    } else if let Some(k) = spawns.iter().position(|s| fits(s.1)) {
                                        spawns[k].0 = t;
                                        landings.insert(t, Landing::Spawn(k));
                                    } else {
                                        continue;
                                    }
                                }
                            }
                            let child = GState::new(s2, gp.clone(), routes.iter().chain(spawns.iter().map(|s| &s.1)).copied());
                            self.tick()?;
                            if !self.realisable(lc, &child) {
                                continue;
                            }
                            if self.sub(lc, vc, &child)? {
                                return Ok(Some(Transition { a, child, routes: routes.clone(), spawns, landings }));
                            }
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    /// The tree of transitions below a state known to pass `sub`.
    pub fn build(&mut self, level: usize, via: Option<Modality>, st: &GState) -> Result<WitnessNode> {
        let mut kids: Vec<Transition> = vec![];
        if level > 0 {
            for tg in targets(self.lv, level, via, &st.support()) {
                let mut served = false;
                for tr in kids.iter_mut() {
                    if serves(self.lv, level, st, tr, tg) {
                        served = true;
                        break;
                    }
                }
                if !served {
                    let tr = self
                        .find_child(level, st, tg)?
                        .ok_or_else(|| Error::SelfCheck("lost a transition while building the witness".into()))?;
                    kids.push(tr);
                }
            }
        }
        let mut children = vec![];
        for tr in kids {
            let vc = self.child_via(tr.a);
            let node = self.build(level - 1, vc, &tr.child)?;
            children.push((tr, node));
        }
        Ok(WitnessNode { level, state: st.clone(), children })
    }

    /// Decides satisfiability; on success returns a weak quasimodel.
    pub fn run(&mut self) -> Result<Option<WeakQuasimodel>> {
        let d = self.lv.d;
        let found = self.for_each_root(|me, st| Ok(if me.sub(d, None, &st)? { Some(st) } else { None }))?;
        match found {
            Some(st) => {
                let tree = self.build(d, None, &st)?;
                materialise(self.lv, &tree).map(Some)
            }
            None => Ok(None),
        }
    }
}

/// Whether an existing transition also serves `tg`; records the landing.
pub(crate) fn serves(lv: &Levels, level: usize, st: &GState, tr: &mut Transition, tg: Target) -> bool {
    let ob = tg.obligation();
    if ob.a != tr.a {
        return false;
    }
    match tg {
        Target::Sentence(o) => lv.cl.eval(o.body, tr.child.sigma),
        Target::Elem(t, o) => {
            if st.generic.binary_search(&t).is_err() {
                let i0 = st.copies().iter().position(|&c| c == t).unwrap();
                if lv.cl.eval(o.body, tr.routes[i0]) {
                    tr.landings.insert(t, Landing::Unit);
                    return true;
                }
                return false;
            }
            match tr.landings.get(&t) {
                Some(Landing::Generic(g2)) => lv.cl.eval(o.body, *g2),
                Some(Landing::Spawn(k)) => lv.cl.eval(o.body, tr.spawns[*k].1),
                Some(Landing::Unit) => false,
                None => {
                    let found = tr
                        .child
                        .generic
                        .iter()
                        .copied()
                        .find(|&g2| lv.coherent(tr.a, t, level, g2) && lv.cl.eval(o.body, g2));
                    match found {
                        Some(g2) => {
                            tr.landings.insert(t, Landing::Generic(g2));
                            true
                        }
                        None => false,
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct WitnessNode {
    pub level: usize,
    pub state: GState,
    pub children: Vec<(Transition, WitnessNode)>,
}

/// Runs each generic type needs at a node so that every child gets enough.
fn demands(lv: &Levels, node: &WitnessNode) -> BTreeMap<Bits, u64> {
    let mut need: BTreeMap<Bits, u64> = node.state.generic.iter().map(|&g| (g, 1)).collect();
    for (tr, kid) in &node.children {
        let dk = demands(lv, kid);
        let mut supply: BTreeMap<Bits, u64> = BTreeMap::new();
        for (&g2, &k) in &dk {
            *supply.entry(supplier(lv, node, tr, g2)).or_default() += k;
        }
        for s in &tr.spawns {
            *supply.entry(s.0).or_default() += 1;
        }
        for (&t, l) in &tr.landings {
            if matches!(l, Landing::Generic(_)) {
                *supply.entry(t).or_default() += 1;
            }
        }
        for (g, k) in supply {
            let e = need.get_mut(&g).expect("supplies come from generic types");
            *e = (*e).max(k);
        }
    }
    need
}

fn supplier(lv: &Levels, node: &WitnessNode, tr: &Transition, g2: Bits) -> Bits {
    node.state
        .generic
        .iter()
        .copied()
        .find(|&g| lv.coherent(tr.a, g, node.level, g2))
        .expect("every child generic type has a generic predecessor")
}

struct Builder {
    frame: Frame,
    runs: Vec<BTreeMap<usize, Bits>>,
    proto: BTreeMap<(usize, Bits), usize>,
}

impl Builder {
    fn fresh(&mut self) -> usize {
        self.runs.push(BTreeMap::new());
        self.runs.len() - 1
    }

    fn finish(self) -> WeakQuasimodel {
        let n = self.frame.len();
        let runs: Vec<Run> = self.runs.iter().map(|r| (0..n).map(|w| r.get(&w).copied()).collect()).collect();
        let mut q = vec![Quasistate::new(); n];
        for r in &runs {
            for (w, t) in r.iter().enumerate() {
                if let Some(t) = t {
                    q[w].add(*t, Fin(1));
                }
            }
        }
        WeakQuasimodel { frame: self.frame, q, runs, proto: self.proto }
    }
}

fn mat(lv: &Levels, b: &mut Builder, node: &WitnessNode, w: usize, pool: &BTreeMap<Bits, Vec<usize>>, units: &[usize]) {
    let copies = node.state.copies();
    for (g, rs) in pool {
        for &r in rs {
            b.runs[r].insert(w, *g);
        }
        b.proto.insert((w, *g), rs[0]);
    }
    for (i, &r) in units.iter().enumerate() {
        b.runs[r].insert(w, copies[i]);
        b.proto.entry((w, copies[i])).or_insert(r);
    }
    for (tr, kid) in &node.children {
        let v = b.frame.add_world(kid.level, Some((w, tr.a)));
        b.frame.edges.insert((tr.a, w, v));
        let dk = demands(lv, kid);
        let mut cpool: BTreeMap<Bits, Vec<usize>> = BTreeMap::new();
        let mut cunits: Vec<(Bits, usize)> = vec![];
        let mut spawn_run: BTreeMap<usize, usize> = BTreeMap::new();
        for (&g, rs) in pool {
            let mut next = 0;
            match tr.landings.get(&g) {
                Some(Landing::Generic(g2)) => {
                    cpool.entry(*g2).or_default().push(rs[0]);
                    next = 1;
                }
                Some(Landing::Spawn(k)) => {
                    spawn_run.insert(*k, rs[0]);
                    next = 1;
                }
                _ => {}
            }
            for (k, s) in tr.spawns.iter().enumerate() {
                if s.0 == g && !spawn_run.contains_key(&k) {
                    spawn_run.insert(k, rs[next]);
                    next += 1;
                }
            }
            for (&g2, &k) in &dk {
                if supplier(lv, node, tr, g2) == g {
                    for _ in 0..k {
                        cpool.entry(g2).or_default().push(rs[next]);
                        next += 1;
                    }
                }
            }
            let sink = match tr.landings.get(&g) {
                Some(Landing::Generic(g2)) => *g2,
                _ => *kid.state.generic.iter().find(|&&g2| lv.coherent(tr.a, g, node.level, g2)).unwrap(),
            };
            for &r in &rs[next..] {
                cpool.entry(sink).or_default().push(r);
            }
        }
        for (k, s) in tr.spawns.iter().enumerate() {
            cunits.push((s.1, spawn_run[&k]));
        }
        for (i, &r) in units.iter().enumerate() {
            let t2 = tr.routes[i];
            if kid.state.generic.binary_search(&t2).is_ok() {
                cpool.entry(t2).or_default().push(r);
            } else {
                cunits.push((t2, r));
            }
        }
        // a unit landing must stay the first copy of its type in the child
        let firsts: Vec<usize> = tr
            .landings
            .iter()
            .filter(|l| matches!(l.1, Landing::Unit))
            .map(|l| units[copies.iter().position(|&c| c == *l.0).unwrap()])
            .collect();
        cunits.sort_by_key(|&(t, r)| (t, !firsts.contains(&r)));
        let cu: Vec<usize> = cunits.iter().map(|p| p.1).collect();
        mat(lv, b, kid, v, &cpool, &cu);
    }
}

/// Turns a tree of transitions into a weak quasimodel with finitely many runs.
pub fn materialise(lv: &Levels, tree: &WitnessNode) -> Result<WeakQuasimodel> {
    let mut b = Builder { frame: Frame::default(), runs: vec![], proto: BTreeMap::new() };
    let root = b.frame.add_world(tree.level, None);
    let dem = demands(lv, tree);
    let mut pool = BTreeMap::new();
    for (&g, &k) in &dem {
        let rs: Vec<usize> = (0..k).map(|_| b.fresh()).collect();
        pool.insert(g, rs);
    }
    let units: Vec<usize> = tree.state.copies().iter().map(|_| b.fresh()).collect();
    mat(lv, &mut b, tree, root, &pool, &units);
    let wq = b.finish();
    wq.check(lv).map_err(|e| Error::SelfCheck(format!("witness: {e}")))?;
    Ok(wq)
}

/// Expanding-domain state: a finite multiset of types.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MState {
    pub sigma: Bits,
    pub types: Vec<(Bits, u32)>,
}

impl MState {
    pub fn new(sigma: Bits, ts: impl IntoIterator<Item = Bits>) -> MState {
        let mut counts: BTreeMap<Bits, u32> = BTreeMap::new();
        for t in ts {
            *counts.entry(t).or_default() += 1;
        }
        MState { sigma, types: counts.into_iter().collect() }
    }

    pub fn copies(&self) -> Vec<Bits> {
        self.types.iter().flat_map(|&(t, k)| std::iter::repeat(t).take(k as usize)).collect()
    }

    pub fn size(&self) -> usize {
        self.types.iter().map(|p| p.1 as usize).sum()
    }

    pub fn quasistate(&self) -> Quasistate {
        Quasistate::from_pairs(self.types.iter().map(|&(t, k)| (t, Fin(k as u64))))
    }
}

#[derive(Clone, Debug)]
pub struct ExpTransition {
    pub a: Modality,
    pub child: MState,
    pub routes: Vec<Bits>,
    pub extras: Vec<Bits>,
    /// parent types whose first copy is routed to a witness here
    pub landed: BTreeSet<Bits>,
}

#[derive(Clone, Debug)]
pub struct ExpNode {
    pub level: usize,
    pub state: MState,
    pub children: Vec<(ExpTransition, ExpNode)>,
}

/// Expanding-domain search over finite multisets.
pub struct ExpandingSearch<'a, 'c> {
    pub lv: &'a Levels<'c>,
    pub max_nodes: u64,
    memo: HashMap<(usize, MState), bool>,
    pub nodes: u64,
    /// `1 + (d + 1)·|φ|`
    pub bound: usize,
    /// largest multiset and deepest level visited
    pub max_size: usize,
    pub max_depth: usize,
    cmask: Bits,
    /// `(∃ bit, body)` per level
    exists: Vec<Vec<(usize, usize)>>,
}

impl<'a, 'c> ExpandingSearch<'a, 'c> {
    pub fn new(lv: &'a Levels<'c>, max_nodes: u64) -> Self {
        let exists = (0..=lv.d)
            .map(|l| {
                lv.cl
                    .basics
                    .iter()
                    .enumerate()
                    .filter_map(|(i, b)| match b.kind {
                        BasicKind::Exists(body) if b.depth <= l && b.free == false => Some((i, body)),
                        _ => None,
                    })
                    .collect()
            })
            .collect();
        ExpandingSearch {
            lv,
            max_nodes,
            memo: HashMap::new(),
            nodes: 0,
            bound: 1 + (lv.d + 1) * lv.cl.formula.size(),
            max_size: 0,
            max_depth: 0,
            cmask: const_mask(lv.cl),
            exists,
        }
    }

    fn realisable(&self, level: usize, st: &MState) -> bool {
        self.lv.space(level).is_realisable(&st.quasistate())
    }

    /// New elements covering the existentials and constants `images` leave open.
    fn covers(&self, level: usize, sigma: Bits, cand: &[Bits], images: &[Bits]) -> Vec<Vec<Bits>> {
        let lv = self.lv;
        let held = images.iter().fold(0, |m, &t| m | (t & self.cmask));
        let open_exists: Vec<usize> = self.exists[level]
            .iter()
            .filter(|&&(i, body)| sigma >> i & 1 == 1 && !images.iter().any(|&t| lv.cl.eval(body, t)))
            .map(|p| p.1)
            .collect();
        let cb = lv.cl.const_bits();
        let mut out = BTreeSet::new();
        #[allow(clippy::too_many_arguments)]
        fn go(
            lv: &Levels,
            cand: &[Bits],
            images: &[Bits],
            cmask: Bits,
            cb: &[Bits],
            open: &[usize],
            held: Bits,
            cur: &mut Vec<Bits>,
            out: &mut BTreeSet<Vec<Bits>>,
        ) {
            let first_exists = open.iter().find(|&&body| !cur.iter().any(|&t| lv.cl.eval(body, t)));
            let first_const = cb.iter().find(|&&c| held & c == 0);
            let meets: Box<dyn Fn(Bits) -> bool> = match (first_exists, first_const) {
                (Some(&body), _) => Box::new(move |t| lv.cl.eval(body, t)),
                (None, Some(&c)) => Box::new(move |t| t & c != 0),
                (None, None) => {
                    let mut v = cur.clone();
                    v.sort();
                    out.insert(v);
                    return;
                }
            };
            for &t in cand {
                if images.contains(&t) || cur.contains(&t) || !meets(t) || t & cmask & held != 0 {
                    continue;
                }
                cur.push(t);
                go(lv, cand, images, cmask, cb, open, held | (t & cmask), cur, out);
                cur.pop();
            }
        }
        go(lv, cand, images, self.cmask, &cb, &open_exists, held, &mut vec![], &mut out);
        if images.is_empty() && out.contains(&vec![]) {
            out.remove(&vec![]);
            for &t in cand {
                if t & self.cmask == 0 {
                    out.insert(vec![t]);
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn roots(&self) -> Vec<MState> {
        let lv = self.lv;
        let mut out = vec![];
        for sigma in lv.root_sigmas() {
            let cand = lv.viable_types(lv.d, None, sigma);
            for c in self.covers(lv.d, sigma, cand, &[]) {
                let st = MState::new(sigma, c);
                if self.realisable(lv.d, &st) {
                    out.push(st);
                }
            }
        }
        out
    }

    fn check_bound(&mut self, level: usize, st: &MState) -> Result<()> {
        self.max_size = self.max_size.max(st.size());
        self.max_depth = self.max_depth.max(self.lv.d.saturating_sub(level));
        if st.size() >= self.bound || level > self.lv.d {
            return Err(Error::SelfCheck(format!(
                "state of size {} at depth {} breaks the bound {}",
                st.size(),
                self.lv.d - level,
                self.bound
            )));
        }
        Ok(())
    }

    pub fn sub(&mut self, level: usize, st: &MState) -> Result<bool> {
        let key = (level, st.clone());
        if let Some(&b) = self.memo.get(&key) {
            return Ok(b);
        }
        self.check_bound(level, st)?;
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(Error::Cap(format!("search exceeded {} nodes", self.max_nodes)));
        }
        let mut ok = self.realisable(level, st);
        if ok && level > 0 {
            let support: Vec<Bits> = st.types.iter().map(|p| p.0).collect();
            for tg in targets(self.lv, level, None, &support) {
                if self.find_child(level, st, tg)?.is_none() {
                    ok = false;
                    break;
                }
            }
        }
        self.memo.insert(key, ok);
        Ok(ok)
    }

    pub fn find_child(&mut self, level: usize, st: &MState, tg: Target) -> Result<Option<ExpTransition>> {
        let lv = self.lv;
        let a = tg.obligation().a;
        let lc = level - 1;
        let copies = st.copies();
        let proto_copy = match tg {
            Target::Elem(t, _) => copies.iter().position(|&c| c == t),
            Target::Sentence(_) => None,
        };
        let sigmas: Vec<Bits> = lv
            .viable(lc, None)
            .keys()
            .copied()
            .filter(|&s2| lv.coherent_sentences(a, st.sigma, level, s2))
            .filter(|&s2| !matches!(tg, Target::Sentence(o) if !lv.cl.eval(o.body, s2)))
            .collect();
        for s2 in sigmas {
            let cand = lv.viable_types(lc, None, s2);
            let mut copy_succ: Vec<Vec<Bits>> =
                copies.iter().map(|&t| cand.iter().copied().filter(|&t2| lv.arrow(a, t, level, t2)).collect()).collect();
            if let (Some(i0), Target::Elem(_, o)) = (proto_copy, tg) {
                copy_succ[i0].retain(|&t2| lv.cl.eval(o.body, t2));
            }
            if copy_succ.iter().any(Vec::is_empty) {
                continue;
            }
            for routes in route_combos(&copies, &copy_succ, proto_copy) {
                let mut held: Bits = 0;
                if routes.iter().any(|&t2| {
                    let c = t2 & self.cmask;
                    let clash = held & c != 0;
                    held |= c;
                    clash
                }) {
                    continue;
                }
                for extras in self.covers(lc, s2, cand, &routes) {
                    let child = MState::new(s2, routes.iter().chain(&extras).copied());
                    if !self.realisable(lc, &child) {
                        continue;
                    }
                    if self.sub(lc, &child)? {
                        let landed = match tg {
                            Target::Elem(t, _) => [t].into_iter().collect(),
                            Target::Sentence(_) => BTreeSet::new(),
                        };
                        return Ok(Some(ExpTransition { a, child, routes, extras, landed }));
                    }
                }
            }
        }
        Ok(None)
    }

    fn serves(&self, st: &MState, tr: &mut ExpTransition, tg: Target) -> bool {
        let lv = self.lv;
        if tg.obligation().a != tr.a {
            return false;
        }
        match tg {
            Target::Sentence(o) => lv.cl.eval(o.body, tr.child.sigma),
            Target::Elem(t, o) => {
                let i0 = st.copies().iter().position(|&c| c == t).unwrap();
                let ok = lv.cl.eval(o.body, tr.routes[i0]);
                if ok {
                    tr.landed.insert(t);
                }
                ok
            }
        }
    }

    pub fn build(&mut self, level: usize, st: &MState) -> Result<ExpNode> {
        let mut kids: Vec<ExpTransition> = vec![];
        if level > 0 {
            let support: Vec<Bits> = st.types.iter().map(|p| p.0).collect();
            for tg in targets(self.lv, level, None, &support) {
                if !kids.iter_mut().any(|tr| self.serves(st, tr, tg)) {
                    let tr = self
                        .find_child(level, st, tg)?
                        .ok_or_else(|| Error::SelfCheck("lost a transition while building the witness".into()))?;
                    kids.push(tr);
                }
            }
        }
        let mut children = vec![];
        for tr in kids {
            let node = self.build(level - 1, &tr.child)?;
            children.push((tr, node));
        }
        Ok(ExpNode { level, state: st.clone(), children })
    }

    pub fn run(&mut self) -> Result<Option<WeakQuasimodel>> {
        for st in self.roots() {
            if self.sub(self.lv.d, &st)? {
                let tree = self.build(self.lv.d, &st)?;
                let mut b = Builder { frame: Frame::default(), runs: vec![], proto: BTreeMap::new() };
                let root = b.frame.add_world(tree.level, None);
                let elems: Vec<usize> = st.copies().iter().map(|_| b.fresh()).collect();
                mat_exp(&mut b, &tree, root, &elems);
                let wq = b.finish();
                wq.check(self.lv).map_err(|e| Error::SelfCheck(format!("witness: {e}")))?;
                return Ok(Some(wq));
            }
        }
        Ok(None)
    }
}

fn mat_exp(b: &mut Builder, node: &ExpNode, w: usize, elems: &[usize]) {
    let copies = node.state.copies();
    for (i, &r) in elems.iter().enumerate() {
        b.runs[r].insert(w, copies[i]);
        b.proto.entry((w, copies[i])).or_insert(r);
    }
    for (tr, kid) in &node.children {
        let v = b.frame.add_world(kid.level, Some((w, tr.a)));
        b.frame.edges.insert((tr.a, w, v));
        let firsts: Vec<usize> =
            tr.landed.iter().map(|t| elems[copies.iter().position(|c| c == t).unwrap()]).collect();
        let mut next: Vec<(Bits, usize)> = elems.iter().enumerate().map(|(i, &r)| (tr.routes[i], r)).collect();
        for &t in &tr.extras {
            let r = b.fresh();
            next.push((t, r));
        }
        next.sort_by_key(|&(t, r)| (t, !firsts.contains(&r)));
        let rs: Vec<usize> = next.iter().map(|p| p.1).collect();
        mat_exp(b, kid, v, &rs);
    }
}
