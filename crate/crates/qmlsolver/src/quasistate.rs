//! Types, quasistate candidates, realisability and squeezing for the
//! one-variable fragment.
//!
//! A type is a valuation of the basic members of a [`Closure`] (atoms `P(x)`,
//! `p`, `x = c`, and the members `∃xψ`, `◇ₐψ`), which is the same thing as a
//! Boolean-saturated subset of the closure. A *level-k* type only valuates
//! members of modal depth at most `k`; the full types are those of level `d(φ)`.

use crate::closure::{BasicKind, Bits, Closure, Node};
use crate::error::{Error, Result};
use crate::extnat::{ExtNat, Fin};
use std::collections::BTreeMap;

pub const DEFAULT_TYPE_CAP: u64 = 1 << 20;

/// The type cap, overridable through `QMLSOLVER_CAP_TYPES`.
pub fn type_cap() -> u64 {
    std::env::var("QMLSOLVER_CAP_TYPES").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(DEFAULT_TYPE_CAP)
}

/// Bit-level view of the types of one level of a closure.
#[derive(Clone, Debug)]
pub struct TypeSpace<'c> {
    pub cl: &'c Closure,
    pub level: usize,
    /// members valuated at this level
    pub mask: Bits,
    /// sentence members (no free variable): uniform across a quasistate
    pub sent: Bits,
    /// members with a free variable
    pub elem: Bits,
    pub const_bits: Vec<Bits>,
    const_any: Bits,
    /// (basic index, body node, body has a free variable)
    exists: Vec<(usize, usize, bool)>,
}

impl<'c> TypeSpace<'c> {
    pub fn new(cl: &'c Closure, level: usize) -> TypeSpace<'c> {
        let mask = cl.mask_upto(level);
        let sent = mask & cl.mask_where(|b| !b.free);
        let exists = cl
            .basics
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .filter_map(|(i, b)| match b.kind {
                BasicKind::Exists(body) => Some((i, body, cl.node_formula[body].free_vars().len() == 1)),
                _ => None,
            })
            .collect();
        let const_bits = cl.const_bits();
        let const_any = const_bits.iter().fold(0, |a, b| a | b);
        TypeSpace { cl, level, mask, sent, elem: mask & !sent, const_bits, const_any, exists }
    }

    pub fn full(cl: &'c Closure) -> TypeSpace<'c> {
        TypeSpace::new(cl, cl.depth())
    }

    pub fn holds(&self, t: Bits, node: usize) -> bool {
        debug_assert!(self.cl.node_depth[node] <= self.level);
        self.cl.eval(node, t)
    }

    pub fn is_constant_type(&self, t: Bits) -> bool {
        t & self.const_any != 0
    }

    /// All valuations of the members of this level (the Boolean-saturated subsets).
    pub fn enumerate(&self, cap: u64) -> Result<Vec<Bits>> {
        let idx: Vec<usize> = (0..self.cl.basics.len()).filter(|i| self.mask >> i & 1 == 1).collect();
        if idx.len() >= 63 || (1u64 << idx.len()) > cap {
            return Err(Error::Cap(format!("{} closure atoms give more than {cap} types", idx.len())));
        }
        Ok((0..1u64 << idx.len()).map(|m| spread(m, &idx)).collect())
    }

    /// A type that can occur in some realisable quasistate on its own terms:
    /// if it satisfies ψ then it contains ∃xψ, and ∃xψ with a closed body agrees with the body.
    pub fn locally_consistent(&self, t: Bits) -> bool {
        self.exists.iter().all(|&(i, body, free)| {
            let e = t >> i & 1 == 1;
            let b = self.cl.eval(body, t);
            if free {
                !b || e
            } else {
                e == b
            }
        })
    }

    /// Locally consistent types whose sentence part is `sigma`.
    pub fn types_with(&self, sigma: Bits) -> Vec<Bits> {
        let idx: Vec<usize> = (0..self.cl.basics.len()).filter(|i| self.elem >> i & 1 == 1).collect();
        (0..1u64 << idx.len())
            .map(|m| spread(m, &idx) | sigma)
            .filter(|&t| self.locally_consistent(t))
            .collect()
    }

    /// Sentence valuations that at least one locally consistent type extends.
    pub fn sentence_parts(&self) -> Vec<Bits> {
        let idx: Vec<usize> = (0..self.cl.basics.len()).filter(|i| self.sent >> i & 1 == 1).collect();
        (0..1u64 << idx.len())
            .map(|m| spread(m, &idx))
            .filter(|&s| self.exists.iter().all(|&(i, body, free)| free || (s >> i & 1 == 1) == self.cl.eval(body, s)))
            .collect()
    }

    /// Uniformity and ∃-witnessing for a support (multiplicities aside).
    pub fn support_ok<'a>(&self, support: impl IntoIterator<Item = &'a Bits> + Clone) -> bool {
        let mut it = support.clone().into_iter();
        let Some(&first) = it.next() else { return false };
        let sigma = first & self.sent;
        if !support.clone().into_iter().all(|&t| t & self.sent == sigma && self.locally_consistent(t)) {
            return false;
        }
        self.exists.iter().filter(|e| e.2).all(|&(i, body, _)| {
            let e = sigma >> i & 1 == 1;
            e == support.clone().into_iter().any(|&t| self.cl.eval(body, t))
        })
    }

    /// Realisability of a candidate: uniformity, witnesses and constants. The
    /// canonical-structure check follows from these by induction on the
    /// closure and is only asserted in debug builds.
    pub fn is_realisable(&self, q: &Quasistate) -> bool {
        let support: Vec<Bits> = q.support().collect();
        if support.is_empty() || !self.support_ok(&support) {
            return false;
        }
        for &cb in &self.const_bits {
            let holders: Vec<&Bits> = support.iter().filter(|&&t| t & cb != 0).collect();
            if holders.len() != 1 || q.get(*holders[0]) != Fin(1) {
                return false;
            }
        }
        debug_assert!(self.canonical_check(&support));
        true
    }

    /// Builds the structure whose domain is the support, with `P` read off the
    /// types and modal members read as surrogate atoms, and checks that every
    /// member of the level is true of an element exactly when its type says so.
    pub fn canonical_check(&self, support: &[Bits]) -> bool {
        let cl = self.cl;
        let mut memo: BTreeMap<(usize, Bits), bool> = BTreeMap::new();
        fn sat(
            ts: &TypeSpace,
            support: &[Bits],
            node: usize,
            t: Bits,
            memo: &mut BTreeMap<(usize, Bits), bool>,
        ) -> bool {
            if let Some(&v) = memo.get(&(node, t)) {
                return v;
            }
            let cl = ts.cl;
            let v = match cl.nodes[node] {
                Node::True => true,
                Node::Not(a) => !sat(ts, support, a, t, memo),
                Node::And(a, b) => sat(ts, support, a, t, memo) && sat(ts, support, b, t, memo),
                Node::Basic(i) => match cl.basics[i].kind {
                    BasicKind::Pred(_) | BasicKind::Prop(_) | BasicKind::Dia(..) => t >> i & 1 == 1,
                    BasicKind::EqConst(_) => {
                        let bit: Bits = 1 << i;
                        t & bit != 0 && support.iter().filter(|&&s| s & bit != 0).count() == 1
                    }
                    BasicKind::Exists(body) => support.iter().any(|&s| sat(ts, support, body, s, memo)),
                },
            };
            memo.insert((node, t), v);
            v
        }
        support.iter().all(|&t| {
            (0..cl.nodes.len())
                .filter(|&n| cl.node_depth[n] <= self.level)
                .all(|n| sat(self, support, n, t, &mut memo) == cl.eval(n, t))
        })
    }

    /// Types of the closure as readable member lists.
    pub fn describe(&self, t: Bits) -> Vec<String> {
        self.cl.members(t, self.level).iter().map(|f| f.to_string()).collect()
    }
}

fn spread(m: u64, idx: &[usize]) -> Bits {
    idx.iter().enumerate().fold(0, |acc, (j, &i)| if m >> j & 1 == 1 { acc | 1 << i } else { acc })
}

/// All types of the closure (full level), up to the type cap.
pub fn enumerate_types(cl: &Closure) -> Result<Vec<Bits>> {
    TypeSpace::full(cl).enumerate(type_cap())
}

/// A multiset of types with multiplicities in ℕ ∪ {ℵ₀}.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Quasistate(pub BTreeMap<Bits, ExtNat>);

impl Quasistate {
    pub fn new() -> Quasistate {
        Quasistate(BTreeMap::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Bits, ExtNat)>) -> Quasistate {
        let mut q = Quasistate::new();
        for (t, m) in pairs {
            q.add(t, m);
        }
        q
    }

    pub fn add(&mut self, t: Bits, m: ExtNat) {
        if m.is_zero() {
            return;
        }
        let e = self.0.entry(t).or_insert(Fin(0));
        *e = *e + m;
    }

    pub fn get(&self, t: Bits) -> ExtNat {
        self.0.get(&t).copied().unwrap_or(Fin(0))
    }

    pub fn support(&self) -> impl Iterator<Item = Bits> + Clone + '_ {
        self.0.iter().filter(|(_, m)| !m.is_zero()).map(|(t, _)| *t)
    }

    pub fn cardinality(&self) -> ExtNat {
        self.0.values().copied().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.values().all(|m| m.is_finite())
    }

    pub fn le(&self, other: &Quasistate) -> bool {
        self.0.iter().all(|(t, m)| *m <= other.get(*t))
    }
}

/// `n ∼₀ n′`: same support, and every constant type has multiplicity one in both.
pub fn simply_compatible(ts: &TypeSpace, n: &Quasistate, n2: &Quasistate) -> bool {
    let s1: Vec<Bits> = n.support().collect();
    let s2: Vec<Bits> = n2.support().collect();
    s1 == s2 && s1.iter().filter(|&&t| ts.is_constant_type(t)).all(|&t| n.get(t) == Fin(1) && n2.get(t) == Fin(1))
}

/// A finite realisable `m′` with `n ≤ m′ ≤ m` and `|m′| ≤ |n| + |φ|`: constant
/// types and one witness type per `∃xψ` of `m` are kept with one extra copy.
pub fn squeeze(ts: &TypeSpace, m: &Quasistate, n: &Quasistate) -> Result<Quasistate> {
    if !n.le(m) || !n.is_finite() || n.cardinality().is_zero() {
        return Err(Error::Invalid("squeeze needs a nonempty finite n ≤ m".into()));
    }
    if !ts.is_realisable(m) {
        return Err(Error::Invalid("squeeze needs a realisable m".into()));
    }
    let support: Vec<Bits> = m.support().collect();
    let sigma = support[0] & ts.sent;
    let mut keep: Vec<Bits> = support.iter().copied().filter(|&t| ts.is_constant_type(t)).collect();
    for &(i, body, free) in &ts.exists {
        if !free || sigma >> i & 1 == 0 {
            continue;
        }
        // prefer a witness n already uses
        let w = support
            .iter()
            .copied()
            .filter(|&t| ts.cl.eval(body, t))
            .min_by_key(|&t| (n.get(t).is_zero(), t))
            .expect("realisable m witnesses its existentials");
        keep.push(w);
    }
    let mut out = Quasistate::new();
    for &t in &support {
        let nt = n.get(t);
        let v = if keep.contains(&t) { m.get(t).min(nt + Fin(1)) } else { nt };
        out.add(t, v);
    }
    Ok(out)
}

#[derive(serde::Serialize)]
pub struct TypeDump {
    #[serde(rename = "type")]
    pub members: Vec<String>,
    pub mult: ExtNat,
}

/// JSON debug dump: `[{type: [...], mult: n | "aleph0"}]`.
pub fn dump(ts: &TypeSpace, q: &Quasistate) -> Vec<TypeDump> {
    q.0.iter().map(|(&t, &m)| TypeDump { members: ts.describe(t), mult: m }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closure::one_variable_form;
    use crate::extnat::Aleph0;
    use crate::parse::parse_formula;

    fn closure(s: &str) -> Closure {
        Closure::new(&one_variable_form(&parse_formula(s).unwrap()).unwrap()).unwrap()
    }

    #[test]
    fn four_types_for_exists() {
        let cl = closure("exists y. P(y)");
        assert_eq!(enumerate_types(&cl).unwrap().len(), 4);
    }

    #[test]
    fn contradiction_still_has_types() {
        let cl = closure("exists y. P(y) and not P(y)");
        let ts = TypeSpace::full(&cl);
        let all = enumerate_types(&cl).unwrap();
        assert!(!all.is_empty());
        // the root member is in some types, but no support containing them is realisable
        assert!(all.iter().any(|&t| ts.holds(t, cl.root)));
        assert!(all.iter().all(|&t| !ts.holds(t, cl.root) || !ts.support_ok(&[t])));
    }

    fn type_with(ts: &TypeSpace, f: impl Fn(&[String]) -> bool) -> Bits {
        ts.enumerate(1 << 10).unwrap().into_iter().find(|&t| f(&ts.describe(t))).unwrap()
    }

    #[test]
    fn realisability_examples() {
        let cl = closure("exists y. P(y)");
        let ts = TypeSpace::full(&cl);
        let has = |m: &[String], s: &str| m.iter().any(|x| x == s);
        let t_pe = type_with(&ts, |m| has(m, "P(_x)") && has(m, "exists _x. P(_x)"));
        assert!(ts.is_realisable(&Quasistate::from_pairs([(t_pe, Fin(1))])));
        let t_e = type_with(&ts, |m| !has(m, "P(_x)") && has(m, "exists _x. P(_x)"));
        assert!(!ts.is_realisable(&Quasistate::from_pairs([(t_e, Fin(3))])));
        assert!(ts.is_realisable(&Quasistate::from_pairs([(t_e, Aleph0), (t_pe, Fin(2))])));

        let cl = closure("exists y. y = c");
        let ts = TypeSpace::full(&cl);
        let t_c = type_with(&ts, |m| has(m, "_x = c") && has(m, "exists _x. _x = c"));
        assert!(ts.is_realisable(&Quasistate::from_pairs([(t_c, Fin(1))])));
        assert!(!ts.is_realisable(&Quasistate::from_pairs([(t_c, Fin(2))])));
    }

    #[test]
    fn simple_compatibility_examples() {
        let cl = closure("exists y. P(y) and y = c");
        let ts = TypeSpace::full(&cl);
        let all = ts.enumerate(1 << 10).unwrap();
        let tc = *all.iter().find(|&&t| ts.is_constant_type(t)).unwrap();
        let t1 = *all.iter().find(|&&t| !ts.is_constant_type(t)).unwrap();
        let t2 = *all.iter().rev().find(|&&t| !ts.is_constant_type(t)).unwrap();
        let q = |v: &[(Bits, ExtNat)]| Quasistate::from_pairs(v.iter().copied());
        assert!(simply_compatible(&ts, &q(&[(t1, Fin(3)), (t2, Aleph0)]), &q(&[(t1, Fin(1)), (t2, Fin(1))])));
        assert!(simply_compatible(&ts, &q(&[(tc, Fin(1)), (t1, Fin(5))]), &q(&[(tc, Fin(1)), (t1, Fin(1))])));
        assert!(!simply_compatible(&ts, &q(&[(tc, Fin(1))]), &q(&[(tc, Fin(1)), (t1, Fin(1))])));
    }

    #[test]
    fn squeeze_keeps_witness() {
        let cl = closure("(exists y. P(y)) and exists y. not P(y)");
        let ts = TypeSpace::full(&cl);
        let has = |m: &[String], s: &str| m.iter().any(|x| x == s);
        let valid: Vec<Bits> = ts
            .enumerate(1 << 10)
            .unwrap()
            .into_iter()
            .filter(|&t| ts.holds(t, cl.root) && ts.locally_consistent(t))
            .collect();
        let tp = *valid.iter().find(|&&t| has(&ts.describe(t), "P(_x)")).unwrap();
        let tn = *valid.iter().find(|&&t| !has(&ts.describe(t), "P(_x)")).unwrap();
        let m = Quasistate::from_pairs([(tp, Aleph0), (tn, Aleph0)]);
        let n = Quasistate::from_pairs([(tp, Fin(1))]);
        let m2 = squeeze(&ts, &m, &n).unwrap();
        assert!(ts.is_realisable(&m2));
        assert_eq!(m2.get(tn), Fin(1));
        assert!(m2.cardinality() <= Fin(1 + cl.formula.size() as u64));
    }
}
