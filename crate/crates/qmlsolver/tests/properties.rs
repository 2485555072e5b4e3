mod common;

use common::*;
use itertools::Itertools;
use proptest::prelude::*;
use qmlsolver::closure::{sub_x_closure, surrogate, BasicKind, Bits, Closure};
use qmlsolver::decide::{decide_constant_kn, decide_expanding_kn};
use qmlsolver::extnat::ExtNat::{self, Aleph0, Fin};
use qmlsolver::formula::*;
use qmlsolver::levels::{Frames, Levels};
use qmlsolver::model::{naive, satisfies, unfold_tree, Assignment, Interpretation, World};
use qmlsolver::oracle::{brute_force_sat, Bounds, Semantics};
use qmlsolver::parse::{parse_formula, ConstSemantics, Domains};
use qmlsolver::quasistate::{simply_compatible, squeeze, Quasistate, TypeSpace};
use qmlsolver::random::{random_sentence, rng, GenConfig};
use qmlsolver::reductions::{self, decision_form, Mode};
use qmlsolver::render::render;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashSet};

fn sentence(seed: u64, cfg: &GenConfig) -> Formula {
    random_sentence(&mut rng(seed), cfg)
}

fn small() -> GenConfig {
    GenConfig::default()
}

fn deep() -> GenConfig {
    GenConfig { max_depth: 12, max_size: 80, props: vec!["p".into()], difference: true, ..GenConfig::default() }
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn ext() -> impl Strategy<Value = ExtNat> {
    prop_oneof![4 => (0u64..50).prop_map(Fin), 1 => Just(Aleph0)]
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn extnat_semiring(a in ext(), b in ext(), c in ext()) {
        prop_assert_eq!(a + b, b + a);
        prop_assert_eq!(a * b, b * a);
        prop_assert_eq!((a + b) + c, a + (b + c));
        prop_assert_eq!((a * b) * c, a * (b * c));
        prop_assert_eq!(a * (b + c), a * b + a * c);
        prop_assert_eq!(a + Fin(0), a);
        prop_assert_eq!(a * Fin(0), Fin(0));
        prop_assert!(a <= Aleph0);
        prop_assert!(a <= a + b);
        prop_assert_eq!(a + Aleph0, Aleph0);
        if !a.is_zero() {
            prop_assert_eq!(a * Aleph0, Aleph0);
        }
    }

    #[test]
    fn parse_inverts_render(seed in any::<u64>()) {
        let f = sentence(seed, &deep());
        let text = render(&f);
        let g = parse_formula(&text).unwrap();
        prop_assert_eq!(&g, &f);
        let spaced = text.replace(' ', "  ").replace('(', "( ");
        prop_assert_eq!(render(&parse_formula(&spaced).unwrap()), text);
    }

    #[test]
    fn structural_operations_are_total(seed in any::<u64>()) {
        let f = sentence(seed, &deep());
        let _ = (f.size(), f.modal_depth(), f.free_vars(), f.constants(), render(&f));
        let cl = sub_x_closure(&f).unwrap();
        prop_assert!(cl.len() <= 2 * f.size());
        let s = surrogate(&f).unwrap();
        let mut modal = false;
        s.visit(&mut |g| modal |= matches!(g, Formula::Dia(..)));
        prop_assert!(!modal);
        prop_assert_eq!(surrogate(&s).unwrap(), s.clone());
        prop_assert_eq!(s.free_vars(), f.free_vars());
    }

    #[test]
    fn surrogate_keeps_free_variables_of_open_formulas(seed in any::<u64>()) {
        let f = sentence(seed, &small());
        let open = match &f {
            Formula::Exists(_, b) => (**b).clone(),
            Formula::Not(g) => match &**g {
                Formula::Exists(_, b) => (**b).clone(),
                _ => f.clone(),
            },
            _ => f.clone(),
        };
        prop_assert_eq!(surrogate(&open).unwrap().free_vars(), open.free_vars());
    }

    #[test]
    fn fast_evaluator_matches_naive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = sentence(r.gen(), &small());
        let bodies = [p("P(z)"), p("Q(z) and not P(z)"), p("z = c")];
        let f = if r.gen_bool(0.3) { constants_to_iota(&f, &mut r, &bodies) } else { f };
        let m = random_interpretation(&mut r);
        let w = r.gen_range(0..m.worlds.len());
        let asg = Assignment::new();
        prop_assert_eq!(satisfies(&m, w, &asg, &f), naive::satisfies(&m, w, &asg, &f));
    }

    #[test]
    fn oracle_models_are_well_formed_and_unfold(seed in any::<u64>(), expanding in any::<bool>()) {
        let f = sentence(seed, &small());
        let d = if expanding { Domains::Expanding } else { Domains::Constant };
        let b = Bounds { max_worlds: 4, max_depth: 2, max_branching: 2, max_domain: 3 };
        if let Some(m) = brute_force_sat(&f, b, Semantics::k(d, ConstSemantics::Partial)).unwrap() {
            prop_assert!(m.well_formed().is_ok());
            if !expanding {
                prop_assert!(m.is_constant_domain());
            }
            prop_assert!(satisfies(&m, 0, &Assignment::new(), &f));
            let t = unfold_tree(&m, 0, f.modal_depth());
            prop_assert!(t.well_formed().is_ok());
            prop_assert!(satisfies(&t, 0, &Assignment::new(), &f));
        }
    }

    #[test]
    fn constant_sat_implies_expanding_sat(seed in any::<u64>()) {
        let f = sentence(seed, &small());
        let c = decide_constant_kn(&f).unwrap();
        let e = decide_expanding_kn(&f).unwrap();
        prop_assert!(!c.sat || e.sat);
        for m in [&c.model, &e.model].into_iter().flatten() {
            prop_assert!(satisfies(m, 0, &Assignment::new(), &f));
        }
    }

    #[test]
    fn fixed_points_are_identities(seed in any::<u64>()) {
        let free = GenConfig { constants: vec![], ..small() };
        let f = sentence(seed, &free);
        prop_assert_eq!(reductions::eliminate_dd(&f, &[], Mode::Validity).unwrap().0, f.clone());
        prop_assert_eq!(reductions::constants_to_difference(&f, &[]).unwrap().0, f.clone());
        prop_assert_eq!(reductions::difference_to_constants(&f, &[], Mode::Validity).unwrap().0, f.clone());
        prop_assert_eq!(reductions::partial_to_total(&f, &[]).unwrap().0, f.clone());
        prop_assert_eq!(reductions::total_to_partial(&f, &[], Mode::Validity).unwrap().0, f);
    }

    #[test]
    fn reductions_introduce_only_fresh_symbols(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cfg = GenConfig { props: vec!["p".into()], difference: r.gen_bool(0.3), ..small() };
        let f = sentence(r.gen(), &cfg);
        let f = if r.gen_bool(0.5) { constants_to_iota(&f, &mut r, &[p("P(z)"), p("not Q(z)")]) } else { f };
        let old: BTreeSet<Name> = signature(&f);
        let outs = [
            reductions::eliminate_dd(&f, &[], Mode::Validity).map(|x| x.0),
            reductions::partial_to_total(&f, &[]).map(|x| x.0),
            reductions::total_to_partial(&f, &[], Mode::Validity).map(|x| x.0),
            reductions::expanding_to_constant(&f),
            reductions::constants_to_difference(&f, &[]).map(|x| x.0),
            reductions::difference_to_constants(&f, &[], Mode::Validity).map(|x| x.0),
        ];
        for g in outs.into_iter().flatten() {
            let (op, oc) = (preds_of(&f), f.constants());
            for n in g.predicates().keys().filter(|n| !op.contains_key(*n)) {
                prop_assert!(!old.contains(n), "{} reused in {}", n, g);
            }
            for n in g.constants().iter().filter(|n| !oc.contains(*n)) {
                prop_assert!(!old.contains(n), "{} reused in {}", n, g);
            }
        }
    }
}

proptest! {
    #![proptest_config(config(60))]

    #[test]
    fn realisability_matches_structure_enumeration(seed in any::<u64>()) {
        let cfg = GenConfig { max_depth: 1, max_size: 14, ..small() };
        let g = decision_form(&sentence(seed, &cfg), false).unwrap();
        let cl = Closure::new(&g).unwrap();
        let ts = TypeSpace::full(&cl);
        let Some(realised) = realised_multisets(&cl, 4) else { return Ok(()) };
        for q in &realised {
            prop_assert!(ts.is_realisable(q), "missed {:?}", q);
        }
        let mut r = rng(seed);
        for _ in 0..300 {
            let sigmas = ts.sentence_parts();
            let Some(&sigma) = sigmas.choose(&mut r) else { break };
            let types = ts.types_with(sigma);
            if types.is_empty() {
                continue;
            }
            let mut q = Quasistate::new();
            for _ in 0..r.gen_range(1..=4) {
                q.add(*types.choose(&mut r).unwrap(), Fin(1));
            }
            prop_assert_eq!(ts.is_realisable(&q), realised.contains(&q), "{:?}", q);
        }
    }

    #[test]
    fn realisability_is_closed_under_simple_compatibility(seed in any::<u64>()) {
        let g = decision_form(&sentence(seed, &small()), true).unwrap();
        let cl = Closure::new(&g).unwrap();
        let ts = TypeSpace::full(&cl);
        let mut r = rng(seed);
        let Some(n) = realisable_candidate(&ts, &mut r) else { return Ok(()) };
        let mut n2 = Quasistate::new();
        for (&t, &m) in &n.0 {
            let m2 = if ts.is_constant_type(t) { m } else { [Fin(1), Fin(2), Fin(5), Aleph0][r.gen_range(0..4)] };
            n2.add(t, m2);
        }
        prop_assert!(simply_compatible(&ts, &n, &n2));
        prop_assert!(ts.is_realisable(&n2));
    }

    #[test]
    fn squeeze_stays_realisable_and_small(seed in any::<u64>()) {
        let g = decision_form(&sentence(seed, &small()), true).unwrap();
        let cl = Closure::new(&g).unwrap();
        let ts = TypeSpace::full(&cl);
        let mut r = rng(seed);
        let Some(m) = realisable_candidate(&ts, &mut r) else { return Ok(()) };
        let (&t, _) = m.0.iter().collect_vec()[r.gen_range(0..m.0.len())];
        let n = Quasistate::from_pairs([(t, Fin(1))]);
        let m2 = squeeze(&ts, &m, &n).unwrap();
        prop_assert!(ts.is_realisable(&m2));
        prop_assert!(n.le(&m2) && m2.le(&m));
        prop_assert!(m2.cardinality() <= n.cardinality() + Fin(g.size() as u64));
    }

    #[test]
    fn s5_coherence_is_an_equivalence(seed in any::<u64>()) {
        let cfg = GenConfig { modalities: 1, max_size: 14, ..small() };
        let g = decision_form(&sentence(seed, &cfg), true).unwrap();
        let cl = Closure::new(&g).unwrap();
        let lv = Levels::new(&cl, Frames::S5);
        let d = lv.d;
        let Ok(all) = lv.space(d).enumerate(1 << 9) else { return Ok(()) };
        let types: Vec<Bits> = all.into_iter().filter(|&t| lv.reflexive(t, d)).collect();
        for a in cl.modalities.iter().copied() {
            let e = |x: Bits, y: Bits| lv.equiv_lv(a, x, d, y, d);
            for &x in &types {
                prop_assert!(e(x, x));
                for &y in &types {
                    prop_assert_eq!(e(x, y), e(y, x));
                    if e(x, y) {
                        for &z in types.iter().filter(|&&z| e(y, z)) {
                            prop_assert!(e(x, z));
                        }
                    }
                }
            }
        }
    }
}

fn preds_of(f: &Formula) -> BTreeMap<Name, usize> {
    f.predicates()
}

fn signature(f: &Formula) -> BTreeSet<Name> {
    let mut s: BTreeSet<Name> = f.predicates().into_keys().collect();
    s.extend(f.constants());
    s.extend(f.variables());
    s
}

fn random_interpretation(r: &mut ChaCha8Rng) -> Interpretation {
    let n = r.gen_range(1..=3);
    let expanding = r.gen_bool(0.5);
    let mut m = Interpretation::default();
    let mut dom: BTreeSet<u32> = (0..r.gen_range(1..=2)).collect();
    for i in 0..n {
        if expanding && r.gen_bool(0.5) {
            dom.insert(dom.len() as u32);
        }
        let mut w = World { label: format!("w{i}"), domain: dom.clone(), ..World::default() };
        for p in ["P", "Q"] {
            let ext = dom.iter().filter(|_| r.gen_bool(0.5)).map(|&e| vec![e]).collect();
            w.preds.insert(name(p), ext);
        }
        if r.gen_bool(0.7) {
            let e = *dom.iter().collect_vec()[r.gen_range(0..dom.len())];
            w.consts.insert(name("c"), e);
        }
        m.add_world(w);
    }
    // edges only go forward so that expanding domains grow along them
    for u in 0..n {
        for v in u..n {
            for a in 1..=2 {
                if r.gen_bool(0.4) {
                    m.add_edge(a, u, v);
                }
            }
        }
    }
    m
}

fn realisable_candidate(ts: &TypeSpace, r: &mut ChaCha8Rng) -> Option<Quasistate> {
    for _ in 0..200 {
        let sigmas = ts.sentence_parts();
        let sigma = *sigmas.choose(r)?;
        let types = ts.types_with(sigma);
        let mut q = Quasistate::new();
        for _ in 0..r.gen_range(1..=5) {
            let t = *types.choose(r)?;
            let m = if ts.is_constant_type(t) { Fin(1) } else { [Fin(1), Fin(3), Aleph0][r.gen_range(0..3)] };
            q.0.insert(t, m);
        }
        if ts.is_realisable(&q) {
            return Some(q);
        }
    }
    None
}

/// Every multiset of types realised by a first-order structure with at most
/// `max` elements, with the closure's modal members read as fresh atoms and
/// total constants. `None` if the enumeration would be too large.
fn realised_multisets(cl: &Closure, max: usize) -> Option<HashSet<Quasistate>> {
    let free_atoms: Vec<usize> = (0..cl.basics.len())
        .filter(|&i| matches!(cl.basics[i].kind, BasicKind::Pred(_)) || matches!(cl.basics[i].kind, BasicKind::Dia(..)) && cl.basics[i].free)
        .collect();
    let closed_atoms: Vec<usize> = (0..cl.basics.len())
        .filter(|&i| matches!(cl.basics[i].kind, BasicKind::Prop(_)) || matches!(cl.basics[i].kind, BasicKind::Dia(..)) && !cl.basics[i].free)
        .collect();
    if free_atoms.len() > 5 || closed_atoms.len() > 4 {
        return None;
    }
    let consts = cl.const_bits();
    let valuations: Vec<Bits> = (0..1u32 << free_atoms.len())
        .map(|m| free_atoms.iter().enumerate().filter(|(j, _)| m >> j & 1 == 1).fold(0, |a, (_, &i)| a | 1 << i))
        .collect();
    let mut out = HashSet::new();
    for s in 0..1u32 << closed_atoms.len() {
        let sigma: Bits = closed_atoms.iter().enumerate().filter(|(j, _)| s >> j & 1 == 1).fold(0, |a, (_, &i)| a | 1 << i);
        for n in 1..=max {
            for elems in valuations.iter().combinations_with_replacement(n) {
                for holders in (0..consts.len()).map(|_| 0..n).multi_cartesian_product() {
                    let mut t: Vec<Bits> = elems.iter().map(|&&v| v | sigma).collect();
                    for (k, &h) in holders.iter().enumerate() {
                        t[h] |= consts[k];
                    }
                    // ∃ members in closure order: bodies come first
                    for (i, b) in cl.basics.iter().enumerate() {
                        if let BasicKind::Exists(body) = b.kind {
                            if t.iter().any(|&u| cl.eval(body, u)) {
                                t.iter_mut().for_each(|u| *u |= 1 << i);
                            }
                        }
                    }
                    let mut q = Quasistate::new();
                    for u in t {
                        q.add(u, Fin(1));
                    }
                    out.insert(q);
                }
            }
        }
    }
    Some(out)
}

#[test]
fn structure_enumeration_is_not_vacuous() {
    let cfg = GenConfig { max_depth: 1, max_size: 14, ..small() };
    let covered = (0..40)
        .filter(|&s| {
            let g = decision_form(&sentence(s, &cfg), false).unwrap();
            realised_multisets(&Closure::new(&g).unwrap(), 4).is_some_and(|r| !r.is_empty())
        })
        .count();
    assert!(covered >= 30, "only {covered} of 40 closures enumerated");
}
