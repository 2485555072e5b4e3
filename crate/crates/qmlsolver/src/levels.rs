//! Level-indexed type spaces for tree-shaped frames.
//!
//! In a tree of depth `d(φ)` a world at depth `j` only has to get the members
//! of modal depth at most `d(φ) − j` right, so its types are taken from the
//! space of level `d(φ) − j`. The coherence relations compare a type of level
//! `L` at a world with a type of level `L − 1` at a child.

use crate::closure::{BasicKind, Bits, Closure};
use crate::formula::Modality;
use crate::quasistate::TypeSpace;
use std::collections::{BTreeMap, HashMap};

/// A member `◇ₐψ` of the closure.
#[derive(Clone, Debug)]
pub struct DiaMember {
    pub bit: usize,
    pub a: Modality,
    pub body: usize,
    pub depth: usize,
    /// the body has a free variable
    pub free: bool,
}

/// An unmet `◇ₐψ` of a type: `elem` when it concerns the element itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Obligation {
    pub a: Modality,
    pub body: usize,
    pub elem: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frames {
    K,
    S5,
}

pub struct Levels<'c> {
    pub cl: &'c Closure,
    pub d: usize,
    pub frames: Frames,
    pub spaces: Vec<TypeSpace<'c>>,
    pub dias: Vec<DiaMember>,
    /// viable types per (level, modality the world was entered by) and sentence part
    viable: BTreeMap<(usize, Option<Modality>), BTreeMap<Bits, Vec<Bits>>>,
}

fn bit(t: Bits, i: usize) -> bool {
    t >> i & 1 == 1
}

impl<'c> Levels<'c> {
    pub fn new(cl: &'c Closure, frames: Frames) -> Levels<'c> {
        let d = cl.depth();
        let spaces = (0..=d).map(|l| TypeSpace::new(cl, l)).collect();
        let dias = cl
            .basics
            .iter()
            .enumerate()
            .filter_map(|(i, b)| match b.kind {
                BasicKind::Dia(a, body) => Some(DiaMember {
                    bit: i,
                    a,
                    body,
                    depth: b.depth,
                    free: !cl.node_formula[body].free_vars().is_empty(),
                }),
                _ => None,
            })
            .collect();
        let mut lv = Levels { cl, d, frames, spaces, dias, viable: BTreeMap::new() };
        lv.compute_viable();
        lv
    }

    pub fn space(&self, level: usize) -> &TypeSpace<'c> {
        &self.spaces[level]
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.cl.modalities
    }

    pub fn sigma(&self, t: Bits, level: usize) -> Bits {
        t & self.spaces[level].sent
    }

    /// `t →ₐ t2` for `t` of level `level` and `t2` of level `level − 1`.
    pub fn arrow(&self, a: Modality, t: Bits, level: usize, t2: Bits) -> bool {
        self.arrow_lv(a, t, level, t2, level.saturating_sub(1))
    }

    /// `→ₐ` between types of arbitrary levels, over the diamonds both sides valuate.
    pub fn arrow_lv(&self, a: Modality, t: Bits, l1: usize, t2: Bits, l2: usize) -> bool {
        self.dias
            .iter()
            .filter(|m| m.a == a && m.depth <= l1 && m.depth - 1 <= l2)
            .all(|m| bit(t, m.bit) || !self.cl.eval(m.body, t2))
    }

    /// `t ↔ₐ t2` between a world of level `level` and an `a`-child.
    pub fn equiv(&self, a: Modality, t: Bits, level: usize, t2: Bits) -> bool {
        self.equiv_lv(a, t, level, t2, level.saturating_sub(1))
    }

    /// `↔ₐ` between types of arbitrary levels.
    pub fn equiv_lv(&self, a: Modality, t: Bits, l1: usize, t2: Bits, l2: usize) -> bool {
        self.dias.iter().filter(|m| m.a == a).all(|m| {
            let (in1, in2) = (m.depth <= l1, m.depth <= l2);
            let (b1, b2) = (m.depth - 1 <= l1, m.depth - 1 <= l2);
            (!(in1 && in2) || bit(t, m.bit) == bit(t2, m.bit))
                && (!(in1 && b2) || bit(t, m.bit) || !self.cl.eval(m.body, t2))
                && (!(in2 && b1) || bit(t2, m.bit) || !self.cl.eval(m.body, t))
                && (!in1 || bit(t, m.bit) || !self.cl.eval(m.body, t))
                && (!in2 || bit(t2, m.bit) || !self.cl.eval(m.body, t2))
        })
    }

    /// Coherence along an `R_a` pair of worlds with the given levels.
    pub fn coherent_lv(&self, a: Modality, t: Bits, l1: usize, t2: Bits, l2: usize) -> bool {
        match self.frames {
            Frames::K => self.arrow_lv(a, t, l1, t2, l2),
            Frames::S5 => self.equiv_lv(a, t, l1, t2, l2),
        }
    }

    /// Coherence of sentence parts: the same check restricted to closed diamonds.
    pub fn coherent_sentences(&self, a: Modality, s: Bits, level: usize, s2: Bits) -> bool {
        let l2 = level - 1;
        self.dias.iter().filter(|m| m.a == a && !m.free).all(|m| match self.frames {
            Frames::K => m.depth > level || bit(s, m.bit) || !self.cl.eval(m.body, s2),
            Frames::S5 => {
                let (in1, in2) = (m.depth <= level, m.depth <= l2);
                (!(in1 && in2) || bit(s, m.bit) == bit(s2, m.bit))
                    && (!(in1 && m.depth - 1 <= l2) || bit(s, m.bit) || !self.cl.eval(m.body, s2))
            }
        })
    }

    /// Coherence between a world and its `a`-child in the chosen frame class.
    pub fn coherent(&self, a: Modality, t: Bits, level: usize, t2: Bits) -> bool {
        match self.frames {
            Frames::K => self.arrow(a, t, level, t2),
            Frames::S5 => self.equiv(a, t, level, t2),
        }
    }

    /// `ψ ∈ t ⇒ ◇ₐψ ∈ t`, required of every type on S5 frames.
    pub fn reflexive(&self, t: Bits, level: usize) -> bool {
        self.dias.iter().filter(|m| m.depth <= level).all(|m| bit(t, m.bit) || !self.cl.eval(m.body, t))
    }

    /// The `◇ₐψ` members true in `t` that a child has to witness. On S5
    /// frames a world entered by `a` leaves its `a`-diamonds to its parent,
    /// and diamonds already witnessed by `t` itself are dropped.
    pub fn obligations(&self, t: Bits, level: usize, via: Option<Modality>) -> Vec<Obligation> {
        self.dias
            .iter()
            .filter(|m| m.depth <= level && bit(t, m.bit))
            .filter(|m| match self.frames {
                Frames::K => true,
                Frames::S5 => Some(m.a) != via && !self.cl.eval(m.body, t),
            })
            .map(|m| Obligation { a: m.a, body: m.body, elem: m.free })
            .collect()
    }

    /// Locally consistent types of a level with sentence part `sigma`.
    pub fn local_types(&self, level: usize, sigma: Bits) -> Vec<Bits> {
        let sp = &self.spaces[level];
        sp.types_with(sigma)
            .into_iter()
            .filter(|&t| self.frames == Frames::K || self.reflexive(t, level))
            .collect()
    }

    /// Types that survive the necessary conditions: local consistency, and a
    /// viable coherent child type for each obligation, inside a sentence part
    /// whose existentials and constants can be covered by viable types.
    pub fn viable(&self, level: usize, via: Option<Modality>) -> &BTreeMap<Bits, Vec<Bits>> {
        let via = if self.frames == Frames::K { None } else { via };
        &self.viable[&(level, via)]
    }

    pub fn viable_types(&self, level: usize, via: Option<Modality>, sigma: Bits) -> &[Bits] {
        self.viable(level, via).get(&sigma).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn vias(&self) -> Vec<Option<Modality>> {
        match self.frames {
            Frames::K => vec![None],
            Frames::S5 => std::iter::once(None).chain(self.cl.modalities.iter().map(|&a| Some(a))).collect(),
        }
    }

    fn compute_viable(&mut self) {
        // witness lookups keyed by what coherence reads of the parent type
        let mut memo: HashMap<(usize, Modality, usize, Bits, Bits), bool> = HashMap::new();
        for level in 0..=self.d {
            for via in self.vias() {
                let mut per_sigma = BTreeMap::new();
                // the top level only ever holds the root
                let top = level == self.d;
                if top && via.is_some() {
                    self.viable.insert((level, via), per_sigma);
                    continue;
                }
                for sigma in self.spaces[level].sentence_parts() {
                    if top && !self.cl.eval(self.cl.root, sigma) {
                        continue;
                    }
                    let types: Vec<Bits> = self
                        .local_types(level, sigma)
                        .into_iter()
                        .filter(|&t| {
                            self.obligations(t, level, via).iter().all(|o| {
                                if level == 0 {
                                    return false;
                                }
                                let key = (level, o.a, o.body, self.dia_bits(o.a, t, level), self.dia_bodies(o.a, t, level));
                                *memo.entry(key).or_insert_with(|| self.has_witness(t, level, o))
                            })
                        })
                        .collect();
                    if self.coverable(level, &types) {
                        per_sigma.insert(sigma, types);
                    }
                }
                self.viable.insert((level, via), per_sigma);
            }
        }
    }

    /// The `◇ₐ` members of `t` at this level.
    fn dia_bits(&self, a: Modality, t: Bits, level: usize) -> Bits {
        self.dias.iter().filter(|m| m.a == a && m.depth <= level && bit(t, m.bit)).fold(0, |acc, m| acc | 1 << m.bit)
    }

    /// Which `◇ₐ` bodies `t` satisfies; only S5 coherence reads these.
    fn dia_bodies(&self, a: Modality, t: Bits, level: usize) -> Bits {
        if self.frames == Frames::K {
            return 0;
        }
        self.dias
            .iter()
            .filter(|m| m.a == a && m.depth <= level + 1 && m.depth >= 1 && self.cl.eval(m.body, t))
            .fold(0, |acc, m| acc | 1 << m.bit)
    }

    fn has_witness(&self, t: Bits, level: usize, o: &Obligation) -> bool {
        let via = if self.frames == Frames::K { None } else { Some(o.a) };
        self.viable[&(level - 1, via)]
            .values()
            .flatten()
            .any(|&t2| self.cl.eval(o.body, t2) && self.coherent(o.a, t, level, t2))
    }

    /// Every existential of the sentence part has a witness among `types`
    /// and every constant a holder.
    pub fn coverable(&self, level: usize, types: &[Bits]) -> bool {
        let Some(&t0) = types.first() else { return false };
        let sp = &self.spaces[level];
        let sigma = t0 & sp.sent;
        self.exists_members(level).iter().all(|&(i, body)| !bit(sigma, i) || types.iter().any(|&t| self.cl.eval(body, t)))
            && sp.const_bits.iter().all(|&cb| types.iter().any(|&t| t & cb != 0))
    }

    /// `(bit, body)` of each `∃xψ` member of the level whose body is free.
    pub fn exists_members(&self, level: usize) -> Vec<(usize, usize)> {
        self.cl
            .basics
            .iter()
            .enumerate()
            .filter(|(_, b)| b.depth <= level)
            .filter_map(|(i, b)| match b.kind {
                BasicKind::Exists(body) if !self.cl.node_formula[body].free_vars().is_empty() => Some((i, body)),
                _ => None,
            })
            .collect()
    }

    /// Sentence parts at the top level that contain the formula.
    pub fn root_sigmas(&self) -> Vec<Bits> {
        self.viable(self.d, None).keys().copied().filter(|&s| self.cl.eval(self.cl.root, s)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_formula;
    use crate::reductions::decision_form;

    fn cl(s: &str) -> Closure {
        Closure::new(&decision_form(&parse_formula(s).unwrap(), false).unwrap()).unwrap()
    }

    #[test]
    fn arrow_examples() {
        let c = cl("exists x. dia 1 P(x)");
        let lv = Levels::new(&c, Frames::K);
        let top = lv.space(1).enumerate(1 << 10).unwrap();
        let low = lv.space(0).enumerate(1 << 10).unwrap();
        let dia_p = lv.dias[0].bit;
        let p_node = lv.dias[0].body;
        for &t in &top {
            for &t2 in &low {
                let expect = bit(t, dia_p) || !c.eval(p_node, t2);
                assert_eq!(lv.arrow(1, t, 1, t2), expect);
            }
        }
    }

    #[test]
    fn equiv_is_an_equivalence_on_same_level() {
        let c = cl("exists x. (dia 1 P(x) and dia 1 not P(x) and dia 1 dia 1 P(x))");
        let lv = Levels::new(&c, Frames::S5);
        // compare level-(d−1) types through a common level-d parent
        let d = lv.d;
        let par: Vec<Bits> = lv.space(d).enumerate(1 << 12).unwrap().into_iter().filter(|&t| lv.reflexive(t, d)).collect();
        let kids: Vec<Bits> =
            lv.space(d - 1).enumerate(1 << 12).unwrap().into_iter().filter(|&t| lv.reflexive(t, d - 1)).collect();
        for &p in &par {
            let cls: Vec<Bits> = kids.iter().copied().filter(|&k| lv.equiv(1, p, d, k)).collect();
            for &x in &cls {
                for &y in &cls {
                    // siblings agree on the diamonds they both valuate
                    for m in lv.dias.iter().filter(|m| m.depth < d) {
                        assert_eq!(bit(x, m.bit), bit(y, m.bit));
                        assert!(!c.eval(m.body, x) || bit(y, m.bit));
                    }
                }
            }
        }
    }

    #[test]
    fn contradiction_has_no_root() {
        let c = cl("dia 1 (exists x. P(x)) and box 1 forall x. not P(x)");
        assert!(Levels::new(&c, Frames::K).root_sigmas().is_empty());
        let c = cl("(exists x. P(x)) and box 1 forall x. not P(x)");
        assert!(!Levels::new(&c, Frames::K).root_sigmas().is_empty());
        assert!(Levels::new(&c, Frames::S5).root_sigmas().is_empty());
    }
}
