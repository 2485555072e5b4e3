//! Linear systems over ℕ ∪ {ℵ₀} and the link-system check of transitions
//! between constant-domain quasistates.

use crate::closure::Bits;
use crate::decide::{decide_by, Decision, Options, Procedure, Stats};
use crate::error::{Error, Result};
use crate::extnat::ExtNat::{self, Aleph0, Fin};
use crate::formula::{Formula, Modality};
use crate::kn::{
    const_mask, holder_sets, materialise, route_combos, serves, subsets_asc, subsets_upto, targets, GState, Landing,
    Limits, Target, Transition, WitnessNode,
};
use crate::levels::Levels;
use num_bigint::BigUint;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Rel {
    Eq,
    Le,
    Ge,
}

/// `Σ coeffs · x  rel  rhs`
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, ExtNat)>,
    pub rel: Rel,
    pub rhs: ExtNat,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearSystem {
    pub vars: usize,
    pub constraints: Vec<Constraint>,
}

impl Constraint {
    pub fn lhs(&self, x: &[ExtNat]) -> ExtNat {
        self.coeffs.iter().map(|&(i, a)| a * x[i]).sum()
    }

    pub fn holds(&self, x: &[ExtNat]) -> bool {
        let l = self.lhs(x);
        match self.rel {
            Rel::Eq => l == self.rhs,
            Rel::Le => l <= self.rhs,
            Rel::Ge => l >= self.rhs,
        }
    }
}

impl LinearSystem {
    pub fn new(vars: usize) -> LinearSystem {
        LinearSystem { vars, constraints: vec![] }
    }

    pub fn add(&mut self, coeffs: Vec<(usize, ExtNat)>, rel: Rel, rhs: ExtNat) {
        self.constraints.push(Constraint { coeffs, rel, rhs });
    }

    pub fn holds(&self, x: &[ExtNat]) -> bool {
        x.len() == self.vars && self.constraints.iter().all(|c| c.holds(x))
    }

    /// Largest finite coefficient or right-hand side.
    pub fn max_constant(&self) -> u64 {
        self.constraints
            .iter()
            .flat_map(|c| c.coeffs.iter().map(|p| p.1).chain([c.rhs]))
            .filter_map(ExtNat::finite)
            .max()
            .unwrap_or(0)
    }

    /// `(2(k + 2m + 1)M − 1)^{2m}`: a solvable system has a solution whose
    /// finite entries stay below this.
    pub fn solution_bound(&self) -> BigUint {
        let (k, m, big_m) = (self.vars as u64, self.constraints.len() as u32, self.max_constant());
        let base = (2 * (k + 2 * m as u64 + 1) * big_m).saturating_sub(1).max(1);
        BigUint::from(base).pow(2 * m)
    }
}

/// A solution, or `None`. Variables that no finite `=` or `≤` constraint
/// mentions are set to ℵ₀ (raising them never breaks a constraint); the rest
/// are bounded by those constraints and searched in ascending order, so the
/// answer is deterministic.
pub fn solve(sys: &LinearSystem) -> Option<Vec<ExtNat>> {
    let mut bound: Vec<Option<u64>> = vec![None; sys.vars];
    for c in &sys.constraints {
        let Fin(b) = c.rhs else { continue };
        if c.rel == Rel::Ge {
            continue;
        }
        for &(i, a) in &c.coeffs {
            let lim = match a {
                Fin(0) => continue,
                Fin(a) => b / a,
                Aleph0 => 0,
            };
            bound[i] = Some(bound[i].map_or(lim, |x| x.min(lim)));
        }
    }
    let order: Vec<usize> = (0..sys.vars).filter(|&i| bound[i].is_some()).collect();
    let mut x: Vec<ExtNat> = bound.iter().map(|b| if b.is_some() { Fin(0) } else { Aleph0 }).collect();
    // a constraint is checked once its last bounded variable is assigned
    let mut pos = vec![usize::MAX; sys.vars];
    for (p, &i) in order.iter().enumerate() {
        pos[i] = p;
    }
    let mut ready: Vec<Vec<usize>> = vec![vec![]; order.len() + 1];
    for (ci, c) in sys.constraints.iter().enumerate() {
        let last = c.coeffs.iter().filter(|p| pos[p.0] != usize::MAX).map(|p| pos[p.0] + 1).max().unwrap_or(0);
        ready[last].push(ci);
    }
    if !ready[0].iter().all(|&ci| sys.constraints[ci].holds(&x)) {
        return None;
    }
    fn go(sys: &LinearSystem, order: &[usize], bound: &[Option<u64>], ready: &[Vec<usize>], p: usize, x: &mut Vec<ExtNat>) -> bool {
        if p == order.len() {
            return true;
        }
        let i = order[p];
        for v in 0..=bound[i].unwrap() {
            x[i] = Fin(v);
            if ready[p + 1].iter().all(|&ci| sys.constraints[ci].holds(x)) && go(sys, order, bound, ready, p + 1, x) {
                return true;
            }
        }
        x[i] = Fin(0);
        false
    }
    go(sys, &order, &bound, &ready, 0, &mut x).then_some(x)
}

/// Exhaustive search over `{0, …, M + 1, ℵ₀}` per variable.
pub fn naive_solve(sys: &LinearSystem) -> Option<Vec<ExtNat>> {
    let m = sys.max_constant();
    let values: Vec<ExtNat> = (0..=m + 1).map(Fin).chain([Aleph0]).collect();
    let mut idx = vec![0usize; sys.vars];
    loop {
        let x: Vec<ExtNat> = idx.iter().map(|&i| values[i]).collect();
        if sys.holds(&x) {
            return Some(x);
        }
        let mut p = 0;
        loop {
            if p == sys.vars {
                return None;
            }
            idx[p] += 1;
            if idx[p] < values.len() {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

/// A random system with `k` variables, `m` constraints and finite constants ≤ `max`.
pub fn random_system<R: Rng>(rng: &mut R, k: usize, m: usize, max: u64) -> LinearSystem {
    let mut sys = LinearSystem::new(k);
    let val = |rng: &mut R| if rng.gen_bool(0.15) { Aleph0 } else { Fin(rng.gen_range(0..=max)) };
    for _ in 0..m {
        let mut coeffs: Vec<(usize, ExtNat)> = vec![];
        for i in 0..k {
            if rng.gen_bool(0.6) {
                coeffs.push((i, val(rng)));
            }
        }
        let rel = [Rel::Eq, Rel::Le, Rel::Ge][rng.gen_range(0..3)];
        let rhs = val(rng);
        sys.add(coeffs, rel, rhs);
    }
    sys
}

/// The link system between a parent and a child state along `a`: one
/// variable per coherent pair of types counting the elements that move from
/// one to the other, rows and columns summing to the multiplicities, and the
/// prototype of the target's type landing on a witness.
pub struct LinkSystem {
    pub system: LinearSystem,
    /// `(parent type, child type)` per variable
    pub cells: Vec<(Bits, Bits)>,
}

pub fn build_link_system(lv: &Levels, level: usize, st: &GState, child: &GState, a: Modality, tg: Target) -> LinkSystem {
    let pq = st.quasistate();
    let cq = child.quasistate();
    let mut cells = vec![];
    for t in pq.support() {
        for t2 in cq.support() {
            if lv.coherent(a, t, level, t2) {
                cells.push((t, t2));
            }
        }
    }
    let mut sys = LinearSystem::new(cells.len());
    for t in pq.support() {
        let row = (0..cells.len()).filter(|&i| cells[i].0 == t).map(|i| (i, Fin(1))).collect();
        sys.add(row, Rel::Eq, pq.get(t));
    }
    for t2 in cq.support() {
        let col = (0..cells.len()).filter(|&i| cells[i].1 == t2).map(|i| (i, Fin(1))).collect();
        sys.add(col, Rel::Eq, cq.get(t2));
    }
    if let Target::Elem(t, o) = tg {
        let hit = (0..cells.len()).filter(|&i| cells[i].0 == t && lv.cl.eval(o.body, cells[i].1)).map(|i| (i, Fin(1))).collect();
        sys.add(hit, Rel::Ge, Fin(1));
    }
    LinkSystem { system: sys, cells }
}

/// Reads a transition off a solution of the link system.
fn transition_of(lv: &Levels, st: &GState, child: &GState, a: Modality, tg: Target, ls: &LinkSystem, x: &[ExtNat]) -> Transition {
    let proto_body = match tg {
        Target::Elem(t, o) => Some((t, o.body)),
        Target::Sentence(_) => None,
    };
    let mut routes = vec![];
    for &(u, _) in &st.units {
        let mut outs: Vec<(bool, Bits, u64)> = (0..ls.cells.len())
            .filter(|&i| ls.cells[i].0 == u)
            .map(|i| {
                let t2 = ls.cells[i].1;
                let hit = proto_body.is_some_and(|(t, b)| t == u && lv.cl.eval(b, t2));
                (!hit, t2, x[i].finite().expect("unit rows are finite"))
            })
            .collect();
        outs.sort();
        for (_, t2, n) in outs {
            routes.extend(std::iter::repeat(t2).take(n as usize));
        }
    }
    let mut spawns = vec![];
    for (i, &(t, t2)) in ls.cells.iter().enumerate() {
        if st.generic.binary_search(&t).is_ok() && child.generic.binary_search(&t2).is_err() {
            let n = x[i].finite().expect("unit columns are finite");
            spawns.extend(std::iter::repeat((t, t2)).take(n as usize));
        }
    }
    let mut landings = BTreeMap::new();
    if let Some((t, body)) = proto_body {
        if st.generic.binary_search(&t).is_err() {
            landings.insert(t, Landing::Unit);
        } else {
            let i = (0..ls.cells.len())
                .find(|&i| ls.cells[i].0 == t && !x[i].is_zero() && lv.cl.eval(body, ls.cells[i].1))
                .expect("prototype constraint holds");
            let t2 = ls.cells[i].1;
            if child.generic.binary_search(&t2).is_ok() {
                landings.insert(t, Landing::Generic(t2));
            } else {
                let k = spawns.iter().position(|&s| s == (t, t2)).unwrap();
                landings.insert(t, Landing::Spawn(k));
            }
        }
    }
    Transition { a, child: child.clone(), routes, spawns, landings }
}

/// Constant-domain K_n search whose transitions are found by solving link systems.
pub struct LinkSearch<'a, 'c> {
    pub lv: &'a Levels<'c>,
    pub limits: Limits,
    memo: HashMap<(usize, GState), bool>,
    pub nodes: u64,
    pub systems: u64,
    cmask: Bits,
}

impl<'a, 'c> LinkSearch<'a, 'c> {
    pub fn new(lv: &'a Levels<'c>, limits: Limits) -> Self {
        LinkSearch { lv, limits, memo: HashMap::new(), nodes: 0, systems: 0, cmask: const_mask(lv.cl) }
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

    /// Candidate child states along `a` with sentence part `s2` and generic
    /// part `gp`: units are images of the parent's units plus types split
    /// off for constants and spare units.
    fn child_states(&self, level: usize, st: &GState, a: Modality, s2: Bits, gp: &[Bits]) -> Vec<GState> {
        let lv = self.lv;
        let lc = level - 1;
        let cand = lv.viable_types(lc, None, s2);
        let is_const = |t: Bits| t & self.cmask != 0;
        let succ = |t: Bits| -> Vec<Bits> { cand.iter().copied().filter(|&t2| lv.coherent(a, t, level, t2)).collect() };
        let copies = st.copies();
        let copy_succ: Vec<Vec<Bits>> = copies.iter().map(|&t| succ(t)).collect();
        let images = route_combos(&copies, &copy_succ, None);
        let from_generic: Vec<Bits> =
            cand.iter().copied().filter(|&t2| st.generic.iter().any(|&g| lv.coherent(a, g, level, t2))).collect();
        let cb = lv.cl.const_bits();
        let const_cand: Vec<Bits> = from_generic.iter().copied().filter(|&t| is_const(t)).collect();
        let spare: Vec<Bits> = from_generic.iter().copied().filter(|&t| !is_const(t) && gp.binary_search(&t).is_err()).collect();
        let spare_sets = subsets_upto(&spare, if lc == 0 { 0 } else { self.limits.spawn_cap });
        let mut out = BTreeSet::new();
        for img in &images {
            let held = img.iter().fold(0, |m, &t| m | (t & self.cmask));
            let missing = self.cmask & !held;
            let holders = if missing == 0 { vec![vec![]] } else { holder_sets(&const_cand, &cb, missing) };
            for h in &holders {
                for sp in &spare_sets {
                    out.insert(GState::new(s2, gp.to_vec(), img.iter().chain(h).chain(sp).copied()));
                }
            }
        }
        out.into_iter().collect()
    }

    /// Generic parts for the child: every parent generic type needs a
    /// non-constant successor among them, or its row of the link system
    /// has no cell to carry ℵ₀ elements.
    fn generic_options(&self, level: usize, st: &GState, a: Modality, s2: Bits) -> Option<(Vec<Vec<Bits>>, Vec<Bits>)> {
        let lv = self.lv;
        let cand = lv.viable_types(level - 1, None, s2);
        let g_succ: Vec<Vec<Bits>> = st
            .generic
            .iter()
            .map(|&g| cand.iter().copied().filter(|&t2| t2 & self.cmask == 0 && lv.coherent(a, g, level, t2)).collect())
            .collect();
        if g_succ.iter().any(Vec::is_empty) {
            return None;
        }
        let n_all: Vec<Bits> = g_succ.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
        Some((g_succ, n_all))
    }

    pub fn sub(&mut self, level: usize, st: &GState) -> Result<bool> {
        let key = (level, st.clone());
        if let Some(&b) = self.memo.get(&key) {
            return Ok(b);
        }
        self.tick()?;
        let mut ok = self.realisable(level, st);
        if ok && level > 0 {
            let support: Vec<Bits> = st.quasistate().support().collect();
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

    pub fn find_child(&mut self, level: usize, st: &GState, tg: Target) -> Result<Option<Transition>> {
        let lv = self.lv;
        let a = tg.obligation().a;
        let sigmas: Vec<Bits> = lv
            .viable(level - 1, None)
            .keys()
            .copied()
            .filter(|&s2| lv.coherent_sentences(a, st.sigma, level, s2))
            .filter(|&s2| !matches!(tg, Target::Sentence(o) if !lv.cl.eval(o.body, s2)))
            .collect();
        for s2 in sigmas {
            let Some((g_succ, n_all)) = self.generic_options(level, st, a, s2) else { continue };
            let options: Box<dyn Iterator<Item = Vec<Bits>>> = if st.generic.is_empty() {
                Box::new(std::iter::once(vec![]))
            } else if level == 1 {
                Box::new(std::iter::once(n_all.clone()))
            } else {
                Box::new(subsets_asc(&n_all))
            };
            for gp in options {
                if !g_succ.iter().all(|s| s.iter().any(|t| gp.binary_search(t).is_ok())) {
                    continue;
                }
                for child in self.child_states(level, st, a, s2, &gp) {
                    self.tick()?;
                    if !self.realisable(level - 1, &child) {
                        continue;
                    }
                    let ls = build_link_system(lv, level, st, &child, a, tg);
                    self.systems += 1;
                    let Some(x) = solve(&ls.system) else { continue };
                    let b = ls.system.solution_bound();
                    if x.iter().filter_map(|v| v.finite()).any(|v| BigUint::from(v) > b) {
                        return Err(Error::SelfCheck("link solution exceeds the solution bound".into()));
                    }
                    if self.sub(level - 1, &child)? {
                        return Ok(Some(transition_of(lv, st, &child, a, tg, &ls, &x)));
                    }
                }
            }
        }
        Ok(None)
    }

    fn build(&mut self, level: usize, st: &GState) -> Result<WitnessNode> {
        let mut kids: Vec<Transition> = vec![];
        if level > 0 {
            let support: Vec<Bits> = st.quasistate().support().collect();
            for tg in targets(self.lv, level, None, &support) {
                if !kids.iter_mut().any(|tr| serves(self.lv, level, st, tr, tg)) {
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
        Ok(WitnessNode { level, state: st.clone(), children })
    }

    /// Root states are the same as for the direct search.
    pub fn run(&mut self) -> Result<Option<crate::quasimodel::WeakQuasimodel>> {
        let lv = self.lv;
        let mut direct = crate::kn::ConstantSearch::new(lv, self.limits);
        let d = lv.d;
        let found = direct.for_each_root(|_, st| Ok(if self.sub(d, &st)? { Some(st) } else { None }))?;
        self.nodes += direct.nodes;
        if let Some(st) = found {
            let tree = self.build(d, &st)?;
            return materialise(lv, &tree).map(Some);
        }
        Ok(None)
    }
}

/// Constant-domain K_n satisfiability with transitions checked by link systems.
pub fn decide_constant_kn_links(phi: &Formula) -> Result<Decision> {
    decide_links(phi, Options::default())
}

pub fn decide_links(phi: &Formula, opts: Options) -> Result<Decision> {
    decide_by(phi, Procedure::ConstantKn, opts, |lv, limits| {
        let mut s = LinkSearch::new(lv, limits);
        let r = s.run()?;
        Ok((r, Stats { search_nodes: s.nodes, ..Stats::default() }))
    })
}
