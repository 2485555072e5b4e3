//! Quasimodels: frames labelled with quasistates and covered by runs, the
//! weak (prototype) variant the searches produce, and the translations between
//! them and interpretations.

use crate::closure::{BasicKind, Bits};
use crate::error::{Error, Result};
use crate::extnat::ExtNat::Fin;
use crate::formula::{Modality, TYPE_VAR};
use crate::levels::{Frames, Levels};
use crate::model::{close_equivalences, Assignment, Elem, Evaluator, Interpretation, World};
use crate::quasistate::{squeeze, Quasistate};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// A run: the type of one element at each world, `None` where it does not exist.
pub type Run = Vec<Option<Bits>>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Frame {
    /// closure level each world's types are taken from
    pub level: Vec<usize>,
    /// `(w, a)` when the world was entered from `w` along `a`; all `None` off trees
    pub parent: Vec<Option<(usize, Modality)>>,
    /// `(a, w, v)` for `w R_a v`
    pub edges: BTreeSet<(Modality, usize, usize)>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.level.len()
    }

    pub fn is_empty(&self) -> bool {
        self.level.is_empty()
    }

    pub fn add_world(&mut self, level: usize, parent: Option<(usize, Modality)>) -> usize {
        self.level.push(level);
        self.parent.push(parent);
        self.level.len() - 1
    }

    pub fn successors(&self, w: usize, a: Modality) -> impl Iterator<Item = usize> + '_ {
        self.edges.range((a, w, 0)..=(a, w, usize::MAX)).map(|e| e.2)
    }

    /// Tree children as `(a, v)`.
    pub fn children(&self, w: usize) -> Vec<(Modality, usize)> {
        (0..self.len()).filter_map(|v| self.parent[v].filter(|p| p.0 == w).map(|p| (p.1, v))).collect()
    }

    pub fn via(&self, w: usize) -> Option<Modality> {
        self.parent[w].map(|p| p.1)
    }

    /// Worlds in breadth-first order from world 0.
    pub fn bfs(&self) -> Vec<usize> {
        let kids = self.child_lists();
        let mut out = vec![0];
        let mut i = 0;
        while i < out.len() {
            out.extend(kids[out[i]].iter().map(|c| c.1));
            i += 1;
        }
        out
    }

    fn child_lists(&self) -> Vec<Vec<(Modality, usize)>> {
        let mut kids = vec![vec![]; self.len()];
        for v in 0..self.len() {
            if let Some((w, a)) = self.parent[v] {
                kids[w].push((a, v));
            }
        }
        kids
    }

    pub fn is_tree(&self) -> bool {
        self.len() == 1 || (self.parent[0].is_none() && self.parent[1..].iter().all(Option::is_some))
    }
}

/// A quasimodel; `mult[i]` elements follow run `i`.
#[derive(Clone, Debug)]
pub struct Quasimodel {
    pub frame: Frame,
    pub q: Vec<Quasistate>,
    pub runs: Vec<Run>,
    pub mult: Vec<u64>,
}

/// A weak quasimodel over a tree: only the prototype `proto[(w, t)]` of each
/// type at each world has to be saturated.
#[derive(Clone, Debug)]
pub struct WeakQuasimodel {
    pub frame: Frame,
    pub q: Vec<Quasistate>,
    pub runs: Vec<Run>,
    pub proto: BTreeMap<(usize, Bits), usize>,
}

fn tally<'a>(runs: impl IntoIterator<Item = (&'a Run, u64)>, w: usize) -> Quasistate {
    let mut q = Quasistate::new();
    for (r, m) in runs {
        if let Some(t) = r[w] {
            q.add(t, Fin(m));
        }
    }
    q
}

/// Domain monotonicity and coherence of a run along every edge.
pub fn check_run_edges(lv: &Levels, fr: &Frame, run: &Run) -> std::result::Result<(), String> {
    for &(a, w, v) in &fr.edges {
        match (run[w], run[v]) {
            (Some(_), None) => return Err(format!("run leaves the domain along {w} R_{a} {v}")),
            (Some(t), Some(t2)) if !lv.coherent_lv(a, t, fr.level[w], t2, fr.level[v]) => {
                return Err(format!("run is not coherent along {w} R_{a} {v}"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Whether every diamond of the run at `w` has a witness among the successors.
pub fn saturated_at(lv: &Levels, fr: &Frame, run: &Run, w: usize) -> bool {
    let Some(t) = run[w] else { return true };
    lv.dias.iter().filter(|m| m.depth <= fr.level[w] && t >> m.bit & 1 == 1).all(|m| {
        fr.successors(w, m.a).any(|v| {
            fr.level[v] + 1 >= m.depth && run[v].is_some_and(|t2| lv.cl.eval(m.body, t2))
        })
    })
}

/// Tree variant: the diamonds a child has to witness, per the search's obligations.
fn tree_saturated_at(lv: &Levels, fr: &Frame, kids: &[(Modality, usize)], run: &Run, w: usize) -> bool {
    let Some(t) = run[w] else { return true };
    lv.obligations(t, fr.level[w], fr.via(w)).iter().all(|ob| {
        kids.iter().any(|&(a, v)| a == ob.a && run[v].is_some_and(|t2| lv.cl.eval(ob.body, t2)))
    })
}

/// Each quasistate is realisable at its level and counts exactly the runs through it.
pub fn check_card(lv: &Levels, fr: &Frame, q: &[Quasistate], runs: &[Run], mult: &[u64]) -> std::result::Result<(), String> {
    for w in 0..fr.len() {
        if !lv.space(fr.level[w]).is_realisable(&q[w]) {
            return Err(format!("quasistate at world {w} is not realisable"));
        }
        if tally(runs.iter().zip(mult.iter().copied()), w) != q[w] {
            return Err(format!("runs do not match the quasistate at world {w}"));
        }
    }
    Ok(())
}

fn check_root(lv: &Levels, q: &[Quasistate]) -> std::result::Result<(), String> {
    match q.first().and_then(|q0| q0.support().next()) {
        Some(t) if lv.cl.eval(lv.cl.root, t) => Ok(()),
        _ => Err("the formula is not in the root quasistate".into()),
    }
}

impl Quasimodel {
    pub fn check(&self, lv: &Levels) -> std::result::Result<(), String> {
        check_root(lv, &self.q)?;
        check_card(lv, &self.frame, &self.q, &self.runs, &self.mult)?;
        for (i, r) in self.runs.iter().enumerate() {
            check_run_edges(lv, &self.frame, r).map_err(|e| format!("run {i}: {e}"))?;
            for w in 0..self.frame.len() {
                if !saturated_at(lv, &self.frame, r, w) {
                    return Err(format!("run {i} is not saturated at world {w}"));
                }
            }
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.frame.len()
    }
}

impl WeakQuasimodel {
    pub fn check(&self, lv: &Levels) -> std::result::Result<(), String> {
        if !self.frame.is_tree() {
            return Err("weak quasimodels live on trees".into());
        }
        check_root(lv, &self.q)?;
        let ones = vec![1; self.runs.len()];
        check_card(lv, &self.frame, &self.q, &self.runs, &ones)?;
        for (i, r) in self.runs.iter().enumerate() {
            check_run_edges(lv, &self.frame, r).map_err(|e| format!("run {i}: {e}"))?;
        }
        let kids = self.frame.child_lists();
        for w in 0..self.frame.len() {
            for t in self.q[w].support() {
                let Some(&p) = self.proto.get(&(w, t)) else {
                    return Err(format!("no prototype for a type at world {w}"));
                };
                if self.runs[p][w] != Some(t) {
                    return Err(format!("prototype run {p} has the wrong type at world {w}"));
                }
                if !tree_saturated_at(lv, &self.frame, &kids[w], &self.runs[p], w) {
                    return Err(format!("prototype run {p} is not saturated at world {w}"));
                }
            }
        }
        Ok(())
    }
}

/// Levels for a model's worlds: `d − depth` on a tree rooted at `root`, `d` otherwise.
fn frame_of(m: &Interpretation, root: usize, d: usize) -> (Frame, Vec<usize>) {
    let order = m.reachable(root);
    let mut index = vec![usize::MAX; m.worlds.len()];
    for (i, &w) in order.iter().enumerate() {
        index[w] = i;
    }
    let edges: BTreeSet<(Modality, usize, usize)> = m
        .edges
        .iter()
        .filter(|e| index[e.1] != usize::MAX)
        .map(|&(a, w, v)| (a, index[w], index[v]))
        .collect();
    let n = order.len();
    let mut parent = vec![None; n];
    let mut indeg = vec![0; n];
    for &(a, w, v) in &edges {
        indeg[v] += 1;
        parent[v] = Some((w, a));
    }
    let tree = indeg[0] == 0 && indeg[1..].iter().all(|&k| k == 1);
    let mut level = vec![d; n];
    if tree {
        for i in 1..n {
            // breadth-first order puts parents first
            let p = parent[i].unwrap().0;
            level[i] = level[p].saturating_sub(1);
        }
    } else {
        parent = vec![None; n];
    }
    (Frame { level, parent, edges }, order)
}

/// The quasimodel read off a total interpretation: each element's run is its
/// sequence of types, equal runs merged. Satisfaction at `root` of the closure's
/// formula survives the round trip through [`quasimodel_to_model`].
pub fn model_to_quasimodel(lv: &Levels, m: &Interpretation, root: usize) -> Result<Quasimodel> {
    let (frame, order) = frame_of(m, root, lv.d);
    let x = crate::formula::name(TYPE_VAR);
    let mut evals: Vec<Evaluator> = lv.cl.basics.iter().map(|b| Evaluator::new(m, &b.formula)).collect();
    let elems: BTreeSet<Elem> = order.iter().flat_map(|&w| m.worlds[w].domain.iter().copied()).collect();
    let mut merged: BTreeMap<Run, u64> = BTreeMap::new();
    for &e in &elems {
        let mut run = vec![None; order.len()];
        for (i, &w) in order.iter().enumerate() {
            if !m.worlds[w].domain.contains(&e) {
                continue;
            }
            for c in &lv.cl.constants {
                if !m.worlds[w].consts.contains_key(c) {
                    return Err(Error::Invalid(format!("constant {c} does not designate at world {w}")));
                }
            }
            let asg: Assignment = [(x.clone(), e)].into_iter().collect();
            let mask = lv.cl.mask_upto(frame.level[i]);
            let t = evals
                .iter_mut()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .fold(0 as Bits, |t, (b, ev)| if ev.eval_root(w, &asg) { t | 1 << b } else { t });
            run[i] = Some(t);
        }
        *merged.entry(run).or_default() += 1;
    }
    let (runs, mult): (Vec<Run>, Vec<u64>) = merged.into_iter().unzip();
    let q = (0..frame.len()).map(|w| tally(runs.iter().zip(mult.iter().copied()), w)).collect();
    Ok(Quasimodel { frame, q, runs, mult })
}

/// The interpretation of a quasimodel: one element per copy of each run,
/// predicates and constants read off the types, propositions off the sentence part.
pub fn quasimodel_to_model(lv: &Levels, qm: &Quasimodel) -> Result<Interpretation> {
    qm.check(lv).map_err(Error::Invalid)?;
    let mut out = Interpretation::default();
    for w in 0..qm.frame.len() {
        out.add_world(World { label: format!("w{w}"), ..World::default() });
    }
    let mut next: Elem = 0;
    for (r, &k) in qm.runs.iter().zip(&qm.mult) {
        for _ in 0..k {
            let e = next;
            next += 1;
            for (w, t) in r.iter().enumerate() {
                let Some(t) = *t else { continue };
                let world = &mut out.worlds[w];
                world.domain.insert(e);
                for (b, basic) in lv.cl.basics.iter().enumerate() {
                    if t >> b & 1 == 0 {
                        continue;
                    }
                    match &basic.kind {
                        BasicKind::Pred(p) => {
                            world.preds.entry(p.clone()).or_default().insert(vec![e]);
                        }
                        BasicKind::Prop(p) => {
                            world.preds.entry(p.clone()).or_default().insert(vec![]);
                        }
                        BasicKind::EqConst(c) => {
                            world.consts.insert(c.clone(), e);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    out.edges = qm.frame.edges.clone();
    Ok(out)
}

/// Keeps the root and, for the first run of each type at each kept world, one
/// witness child per diamond; the kept runs become a weak quasimodel.
pub fn shrink_weak(lv: &Levels, qm: &Quasimodel) -> Result<WeakQuasimodel> {
    if !qm.frame.is_tree() {
        return Err(Error::Invalid("shrink_weak needs a quasimodel over a tree".into()));
    }
    let runs: Vec<Run> = qm
        .runs
        .iter()
        .zip(&qm.mult)
        .flat_map(|(r, &k)| std::iter::repeat(r.clone()).take(k as usize))
        .collect();
    let fr = &qm.frame;
    let kids = fr.child_lists();
    let first = |w: usize, t: Bits| runs.iter().position(|r| r[w] == Some(t)).unwrap();
    let mut keep = vec![false; fr.len()];
    keep[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(w) = queue.pop_front() {
        for t in qm.q[w].support() {
            let p = &runs[first(w, t)];
            for ob in lv.obligations(t, fr.level[w], fr.via(w)) {
                let v = kids[w]
                    .iter()
                    .find(|&&(a, v)| a == ob.a && p[v].is_some_and(|t2| lv.cl.eval(ob.body, t2)))
                    .map(|c| c.1)
                    .ok_or_else(|| Error::Invalid(format!("unsaturated run at world {w}")))?;
                if !keep[v] {
                    keep[v] = true;
                    queue.push_back(v);
                }
            }
        }
    }
    let mut frame = Frame::default();
    let mut index = vec![usize::MAX; fr.len()];
    for w in fr.bfs() {
        if keep[w] {
            let parent = fr.parent[w].map(|(u, a)| (index[u], a));
            index[w] = frame.add_world(fr.level[w], parent);
            if let Some((u, a)) = parent {
                frame.edges.insert((a, u, index[w]));
            }
        }
    }
    let kept: Vec<usize> = fr.bfs().into_iter().filter(|&w| keep[w]).collect();
    let new_runs: Vec<Run> = runs
        .iter()
        .map(|r| kept.iter().map(|&w| r[w]).collect::<Run>())
        .filter(|r| r.iter().any(Option::is_some))
        .collect();
    let q: Vec<Quasistate> = (0..frame.len()).map(|w| tally(new_runs.iter().map(|r| (r, 1)), w)).collect();
    let mut proto = BTreeMap::new();
    for (w, qw) in q.iter().enumerate() {
        for t in qw.support() {
            proto.insert((w, t), new_runs.iter().position(|r| r[w] == Some(t)).unwrap());
        }
    }
    Ok(WeakQuasimodel { frame, q, runs: new_runs, proto })
}

/// Saturation by swapping: worlds become pairs of a world and a permutation
/// of the runs, and below a world each unsaturated run trades places with the
/// prototype of its type. The result has at most `|F|·|R|^d` worlds.
pub fn saturate(lv: &Levels, wq: &WeakQuasimodel) -> Result<Quasimodel> {
    wq.check(lv).map_err(Error::Invalid)?;
    let fr = &wq.frame;
    let kids = fr.child_lists();
    let n = wq.runs.len();
    // repairs per world: (run, its prototype) for unsaturated runs
    let repairs: Vec<Vec<(usize, usize)>> = (0..fr.len())
        .map(|w| {
            let mut out: Vec<(usize, usize)> = vec![];
            for (y, r) in wq.runs.iter().enumerate() {
                if let Some(t) = r[w] {
                    let p = wq.proto[&(w, t)];
                    if p != y && !tree_saturated_at(lv, fr, &kids[w], r, w) {
                        out.push((y, p));
                    }
                }
            }
            out
        })
        .collect();
    let mut frame = Frame::default();
    let mut nodes: Vec<(usize, Vec<usize>)> = vec![(0, (0..n).collect())];
    frame.add_world(fr.level[0], None);
    let mut steps = vec![];
    let mut i = 0;
    while i < nodes.len() {
        let (w, perm) = nodes[i].clone();
        let swaps = std::iter::once(None).chain(repairs[w].iter().copied().map(Some));
        for s in swaps {
            let moved: Vec<usize> = match s {
                None => perm.clone(),
                Some((y, p)) => perm.iter().map(|&z| if z == y { p } else if z == p { y } else { z }).collect(),
            };
            for &(a, v) in &kids[w] {
                let id = frame.add_world(fr.level[v], Some((i, a)));
                steps.push((a, i, id));
                nodes.push((v, moved.clone()));
            }
        }
        i += 1;
    }
    match lv.frames {
        Frames::K => frame.edges = steps.iter().copied().collect(),
        Frames::S5 => {
            let mut tmp = Interpretation { worlds: vec![World::default(); frame.len()], ..Default::default() };
            let mods: BTreeSet<Modality> = lv.modalities().iter().copied().collect();
            close_equivalences(&mut tmp, &mods, &steps);
            frame.edges = tmp.edges;
        }
    }
    let runs: Vec<Run> = (0..n).map(|x| nodes.iter().map(|(w, perm)| wq.runs[perm[x]][*w]).collect()).collect();
    let q = nodes.iter().map(|(w, _)| wq.q[*w].clone()).collect();
    let qm = Quasimodel { frame, q, runs, mult: vec![1; n] };
    qm.check(lv).map_err(|e| Error::SelfCheck(format!("saturation: {e}")))?;
    Ok(qm)
}

/// Expanding domains: keeps one root element, then at each world the elements
/// coming from the parent plus what `squeeze` adds, so that every world holds
/// at most `1 + (depth + 1)·|φ|` elements. Prototypes move onto kept elements
/// by switching the original run an element follows below that world.
pub fn shrink_quasistates(lv: &Levels, wq: &WeakQuasimodel) -> Result<WeakQuasimodel> {
    wq.check(lv).map_err(Error::Invalid)?;
    let fr = &wq.frame;
    let nw = fr.len();
    // per new element: original run followed at each world
    let mut src: Vec<Vec<Option<usize>>> = vec![];
    let mut proto = BTreeMap::new();
    for w in fr.bfs() {
        let ts = lv.space(fr.level[w]);
        let mut n = Quasistate::new();
        let mut entering: Vec<usize> = vec![];
        if let Some((u, _)) = fr.parent[w] {
            for (x, s) in src.iter_mut().enumerate() {
                if let Some(y) = s[u] {
                    s[w] = Some(y);
                    entering.push(x);
                    n.add(wq.runs[y][w].expect("runs stay in the domain"), Fin(1));
                }
            }
        } else {
            n.add(wq.q[w].support().next().expect("nonempty root"), Fin(1));
        }
        let m2 = squeeze(ts, &wq.q[w], &n)?;
        let used: BTreeSet<usize> = entering.iter().map(|&x| src[x][w].unwrap()).collect();
        for t in m2.support() {
            let p = wq.proto[&(w, t)];
            let of_t: Vec<usize> = entering.iter().copied().filter(|&x| wq.runs[src[x][w].unwrap()][w] == Some(t)).collect();
            let mut fresh: Vec<usize> = (0..wq.runs.len())
                .filter(|&y| wq.runs[y][w] == Some(t) && !used.contains(&y) && y != p)
                .collect();
            let mut extra = m2.get(t).finite().unwrap() as usize - of_t.len();
            let designated = if let Some(&x) = of_t.iter().find(|&&x| src[x][w] == Some(p)) {
                x
            } else if extra > 0 {
                extra -= 1;
                fresh.insert(0, p);
                usize::MAX
            } else {
                src[of_t[0]][w] = Some(p);
                of_t[0]
            };
            let mut born = vec![];
            for &y in fresh.iter().take(extra + usize::from(designated == usize::MAX)) {
                let mut s = vec![None; nw];
                s[w] = Some(y);
                src.push(s);
                born.push(src.len() - 1);
            }
            let d = if designated == usize::MAX { born[0] } else { designated };
            proto.insert((w, t), d);
        }
    }
    // sources are inherited downwards; a child inherits before it may switch
    let runs: Vec<Run> = src
        .iter()
        .map(|s| (0..nw).map(|w| s[w].and_then(|y| wq.runs[y][w])).collect())
        .collect();
    let q = (0..nw).map(|w| tally(runs.iter().map(|r| (r, 1)), w)).collect();
    let out = WeakQuasimodel { frame: fr.clone(), q, runs, proto };
    out.check(lv).map_err(|e| Error::SelfCheck(format!("shrink_quasistates: {e}")))?;
    Ok(out)
}
