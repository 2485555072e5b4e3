//! Worked examples for the decision procedures. Every expected verdict is
//! confirmed against the brute-force oracle before it is compared.

mod common;

use common::*;
use qmlsolver::closure::Closure;
use qmlsolver::decide::*;
use qmlsolver::formula::*;
use qmlsolver::levels::{Frames, Levels};
use qmlsolver::model::{satisfies, Assignment, Interpretation, World};
use qmlsolver::oracle::{brute_force_sat, Bounds, Semantics};
use qmlsolver::parse::{ConstSemantics, Domains};
use qmlsolver::quasimodel::*;
use qmlsolver::reductions::{self, decision_form, Mode};

const PARTIAL: ConstSemantics = ConstSemantics::Partial;
const TOTAL: ConstSemantics = ConstSemantics::Total;

fn oracle(f: &Formula, sem: Semantics) -> bool {
    let b = Bounds { max_worlds: 4, max_depth: f.modal_depth().max(1), max_branching: 2, max_domain: 3 };
    brute_force_sat(f, b, sem).unwrap().is_some()
}

fn k_const() -> Semantics {
    Semantics::k(Domains::Constant, PARTIAL)
}

fn k_exp() -> Semantics {
    Semantics::k(Domains::Expanding, PARTIAL)
}

fn s5() -> Semantics {
    Semantics::s5(PARTIAL)
}

/// Runs the procedure, checks the verdict against the oracle and the witness
/// against the formula, and returns the verdict.
fn sat(f: &Formula, proc: Procedure) -> bool {
    let d = decide(f, proc, Options::default()).unwrap();
    let sem = match proc {
        Procedure::ConstantKn => k_const(),
        Procedure::ExpandingKn => k_exp(),
        Procedure::S5n => s5(),
    };
    assert_eq!(d.sat, oracle(f, sem), "oracle disagrees on {f}");
    if let Some(m) = &d.model {
        assert!(satisfies(m, 0, &Assignment::new(), f));
    }
    assert_eq!(d.sat, d.model.is_some());
    d.sat
}

#[test]
fn diamond_exists_everywhere() {
    let f = p("dia 1 exists x. P(x)");
    for proc in [Procedure::ConstantKn, Procedure::ExpandingKn, Procedure::S5n] {
        assert!(sat(&f, proc));
    }
    let g = p("dia 1 (exists x. P(x)) and box 1 forall x. not P(x)");
    for proc in [Procedure::ConstantKn, Procedure::ExpandingKn, Procedure::S5n] {
        assert!(!sat(&g, proc));
    }
}

#[test]
fn barcan_and_converse() {
    let bf = p("(forall x. box 1 P(x)) implies box 1 forall x. P(x)");
    let cbf = p("(box 1 forall x. P(x)) implies forall x. box 1 P(x)");
    assert!(!sat(&not(bf.clone()), Procedure::ConstantKn));
    assert!(sat(&not(bf), Procedure::ExpandingKn));
    assert!(!sat(&not(cbf.clone()), Procedure::ConstantKn));
    assert!(!sat(&not(cbf), Procedure::ExpandingKn));
}

#[test]
fn non_rigid_constant() {
    let f = p("exists x. (x = c and dia 1 not x = c)");
    for proc in [Procedure::ConstantKn, Procedure::ExpandingKn] {
        assert!(sat(&f, proc));
    }
    // S5 does not force rigidity either: c may move within the cluster
    assert!(sat(&f, Procedure::S5n));
}

#[test]
fn constant_that_stops_designating() {
    let f = p("(exists x. x = c) and dia 1 forall x. not x = c");
    assert!(sat(&f, Procedure::ConstantKn));
    let total = Semantics::k(Domains::Constant, TOTAL);
    assert!(!oracle(&f, total));
    let d = decide(&f, Procedure::ConstantKn, Options { partial: false, ..Options::default() }).unwrap();
    assert!(!d.sat);
}

#[test]
fn s5_examples() {
    assert!(sat(&p("dia 1 (exists x. P(x)) and forall x. not P(x)"), Procedure::S5n));
    assert!(!sat(&p("(exists x. P(x)) and box 1 forall x. not P(x)"), Procedure::S5n));
    let four = p("(dia 1 dia 1 exists x. P(x)) implies dia 1 exists x. P(x)");
    assert!(!sat(&not(four.clone()), Procedure::S5n));
    assert!(sat(&not(four), Procedure::ConstantKn));
}

#[test]
fn s5_with_two_modalities() {
    let f = p("dia 1 dia 2 (exists x. P(x)) and box 2 forall x. not P(x)");
    assert!(sat(&f, Procedure::S5n));
    let g = p("(exists x. P(x)) and (box 1 box 2 forall x. not P(x))");
    assert!(!sat(&g, Procedure::S5n));
}

#[test]
fn vulcan_sentences() {
    // the planet between the sun and mercury is vulcan, read over unary bodies
    let f = p("exists x. (x = (iota z. Between(z)) and x = vulcan) and dia 1 not exists x. x = vulcan");
    assert!(sat(&f, Procedure::ConstantKn));
    let g = p("not exists x. x = vulcan and not exists x. x = (iota z. Between(z))");
    let d = decide_constant_kn(&g).unwrap();
    assert!(d.sat);
    let m = d.model.unwrap();
    assert!(m.worlds[0].consts.get("vulcan").is_none());
}

#[test]
fn stats_stay_within_bounds() {
    for f in corpus_sample() {
        let g = reductions::prepare(&f, true).unwrap().formula;
        let n = 1 + (g.modal_depth() + 1) * g.size();
        let d = decide_expanding_kn(&f).unwrap();
        assert!(d.stats.max_state < n);
        assert!(d.stats.max_depth <= g.modal_depth());
    }
}

fn corpus_sample() -> Vec<Formula> {
    qmlsolver::random::corpus(77, 60, &qmlsolver::random::GenConfig::default())
}

#[test]
fn s5_witness_frames_are_equivalences() {
    for f in corpus_sample() {
        let d = decide_s5n(&f).unwrap();
        assert_eq!(d.sat, oracle(&f, s5()), "{f}");
        if let Some(m) = d.model {
            let all: Vec<usize> = (0..m.worlds.len()).collect();
            assert!(m.is_s5_on(&all, &f.modalities()), "{f}");
            assert!(m.is_constant_domain());
        }
    }
}

fn single_world(preds: &[(&str, &[u32])], dom: u32) -> World {
    let mut w = World { label: "w".into(), domain: (0..dom).collect(), ..World::default() };
    for (p, ext) in preds {
        w.preds.insert(name(p), ext.iter().map(|&e| vec![e]).collect());
    }
    w
}

fn levels_for(f: &Formula) -> (Formula, Closure) {
    let g = decision_form(f, false).unwrap();
    let cl = Closure::new(&g).unwrap();
    (g, cl)
}

#[test]
fn quasimodel_of_one_world() {
    let f = p("exists x. P(x)");
    let (_, cl) = levels_for(&f);
    let lv = Levels::new(&cl, Frames::K);
    let mut m = Interpretation::default();
    m.add_world(single_world(&[("P", &[0])], 1));
    let qm = model_to_quasimodel(&lv, &m, 0).unwrap();
    assert_eq!(qm.runs.len(), 1);
    assert_eq!(qm.q[0].0.len(), 1);
    let mut m2 = Interpretation::default();
    m2.add_world(single_world(&[("P", &[0, 1])], 2));
    let qm2 = model_to_quasimodel(&lv, &m2, 0).unwrap();
    assert_eq!(qm2.runs.len(), 1);
    assert_eq!(qm2.mult, vec![2]);
    let back = quasimodel_to_model(&lv, &qm).unwrap();
    assert!(satisfies(&back, 0, &Assignment::new(), &f));
    assert_eq!(back.worlds[0].domain.len(), 1);
}

#[test]
fn shrinking_a_fan_keeps_only_witnesses() {
    let f = p("dia 1 exists x. P(x)");
    let (g, cl) = levels_for(&f);
    let lv = Levels::new(&cl, Frames::K);
    let mut m = Interpretation::default();
    m.add_world(single_world(&[], 1));
    for _ in 0..10 {
        let v = m.add_world(single_world(&[("P", &[0])], 1));
        m.add_edge(1, 0, v);
    }
    assert!(satisfies(&m, 0, &Assignment::new(), &g));
    let qm = model_to_quasimodel(&lv, &m, 0).unwrap();
    qm.check(&lv).unwrap();
    let wq = shrink_weak(&lv, &qm).unwrap();
    wq.check(&lv).unwrap();
    assert_eq!(wq.frame.len(), 2);
    let sq = saturate(&lv, &wq).unwrap();
    sq.check(&lv).unwrap();
    assert!(sq.frame.len() <= wq.frame.len() * wq.runs.len().max(1));
    let back = quasimodel_to_model(&lv, &sq).unwrap();
    assert!(satisfies(&back, 0, &Assignment::new(), &f));
}

#[test]
fn saturation_copies_successors_for_unsaturated_runs() {
    // three elements need their own ◇-witness; a single successor serves one of them
    let f = p("forall x. dia 1 P(x)");
    let (_, cl) = levels_for(&f);
    let lv = Levels::new(&cl, Frames::K);
    let mut m = Interpretation::default();
    m.add_world(single_world(&[], 3));
    for e in 0..3 {
        let v = m.add_world(single_world(&[("P", &[e])], 3));
        m.add_edge(1, 0, v);
    }
    assert!(satisfies(&m, 0, &Assignment::new(), &f));
    let qm = model_to_quasimodel(&lv, &m, 0).unwrap();
    let wq = shrink_weak(&lv, &qm).unwrap();
    wq.check(&lv).unwrap();
    let sq = saturate(&lv, &wq).unwrap();
    sq.check(&lv).unwrap();
    for r in &sq.runs {
        for w in 0..sq.frame.len() {
            if r[w].is_some() {
                assert!(saturated_at(&lv, &sq.frame, r, w));
            }
        }
    }
    assert!(sq.frame.len() <= wq.frame.len() * wq.runs.len().max(1));
    let back = quasimodel_to_model(&lv, &sq).unwrap();
    assert!(satisfies(&back, 0, &Assignment::new(), &f));
}

#[test]
fn reductions_on_worked_examples() {
    let cases: Vec<(Formula, Formula, Semantics, Semantics)> = vec![
        {
            let f = p("exists x. x = (iota y. Q(y))");
            let g = reductions::eliminate_dd(&f, &[], Mode::Validity).unwrap().0;
            (f, g, k_const(), k_const())
        },
        {
            let f = p("dia 1 P(c)");
            let g = reductions::total_to_partial(&f, &[], Mode::Validity).unwrap().0;
            (f, g, Semantics::k(Domains::Constant, TOTAL), k_const())
        },
        {
            let f = p("exists x. exists_ne x. P(x)");
            let g = reductions::difference_to_constants(&f, &[], Mode::Validity).unwrap().0;
            (f, g, k_const(), k_const())
        },
        {
            let f = p("dia 1 (exists x. exists_ne x. P(x)) and box 1 forall x. (P(x) implies Q(x))");
            let g = reductions::difference_to_constants(&f, &[], Mode::Validity).unwrap().0;
            (f, g, k_const(), k_const())
        },
        {
            let f = p("not ((forall x. box 1 P(x)) implies box 1 forall x. P(x))");
            let g = reductions::expanding_to_constant(&f).unwrap();
            (f, g, Semantics::k(Domains::Expanding, TOTAL), Semantics::k(Domains::Constant, TOTAL))
        },
        {
            let f = p("not ((box 1 forall x. P(x)) implies forall x. box 1 P(x))");
            let g = reductions::expanding_to_constant(&f).unwrap();
            (f, g, Semantics::k(Domains::Expanding, TOTAL), Semantics::k(Domains::Constant, TOTAL))
        },
    ];
    let expected = [true, true, true, true, true, false];
    for ((f, g, s1, s2), want) in cases.into_iter().zip(expected) {
        assert_ne!(f, g);
        assert_eq!(oracle(&f, s1), want, "{f}");
        assert_eq!(oracle(&g, s2), want, "{g}");
    }
}
