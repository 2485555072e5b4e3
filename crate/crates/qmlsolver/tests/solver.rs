mod common;

use common::*;
use qmlsolver::formula::*;
use qmlsolver::model::{satisfies, Assignment};
use qmlsolver::parse::{parse_problem, ConstSemantics, Domains, Logic, SourceProblem, Task};
use qmlsolver::random::{corpus, GenConfig};
use qmlsolver::solver::*;

fn problem(f: Formula, logic: Logic, domains: Domains, constants: ConstSemantics) -> SourceProblem {
    SourceProblem { formula: f, theory: vec![], logic, domains, task: Task::Sat, constants }
}

fn cross(p: &SourceProblem) -> Report {
    let r = run(p, &RunConfig { cross_validate: true, ..RunConfig::default() }).unwrap_or_else(|e| panic!("{}: {e}", p.formula));
    if let Some(m) = r.model() {
        let decided = if p.task == Task::Sat { p.formula.clone() } else { not(p.formula.clone()) };
        assert!(satisfies(m, 0, &Assignment::new(), &decided));
    }
    r
}

#[test]
fn constant_domain_backends_agree() {
    for constants in [ConstSemantics::Partial, ConstSemantics::Total] {
        for f in corpus(31, 150, &GenConfig::default()) {
            let r = cross(&problem(f, Logic::Kn(2), Domains::Constant, constants));
            assert_eq!(r.backends.len(), 3);
            assert!(r.backends.iter().filter(|b| b.complete).all(|b| b.sat == r.backends[0].sat));
        }
    }
}

#[test]
fn expanding_domain_backends_agree() {
    for constants in [ConstSemantics::Partial, ConstSemantics::Total] {
        for f in corpus(32, 60, &GenConfig::default()) {
            let r = cross(&problem(f, Logic::Kn(2), Domains::Expanding, constants));
            assert_eq!(r.backends.len(), 3);
        }
    }
}

#[test]
fn s5_backends_agree() {
    let cfg = GenConfig { modalities: 1, ..GenConfig::default() };
    for f in corpus(33, 150, &cfg) {
        cross(&problem(f, Logic::S5, Domains::Constant, ConstSemantics::Partial));
    }
}

#[test]
fn validity_is_reported_both_ways() {
    let bf = p("(forall x. box 1 P(x)) implies box 1 forall x. P(x)");
    let mut pr = problem(bf, Logic::Kn(1), Domains::Constant, ConstSemantics::Partial);
    pr.task = Task::Valid;
    let r = cross(&pr);
    assert_eq!((r.verdict, r.decided, r.exit_code()), ("valid", "unsat", 0));
    pr.domains = Domains::Expanding;
    let r = cross(&pr);
    assert_eq!((r.verdict, r.decided, r.exit_code()), ("invalid", "sat", 1));
    assert_eq!(r.witness_role, Some("counter_model"));
    let steps: Vec<&str> = r.pipeline.iter().map(|s| s.step.as_str()).collect();
    assert_eq!(steps[..2], ["parse", "negate"]);
}

#[test]
fn gates() {
    let f = p("box 1 forall x. P(x)");
    let mut pr = problem(f.clone(), Logic::Kn(1), Domains::Constant, ConstSemantics::Partial);
    pr.task = Task::Global;
    pr.theory = vec![p("forall x. P(x)")];
    assert_eq!(run(&pr, &RunConfig::default()).unwrap_err().code(), "undecidable");
    pr.logic = Logic::S5;
    assert_eq!(run(&pr, &RunConfig::default()).unwrap().verdict, "valid");
    pr.logic = Logic::S5n(2);
    assert_eq!(run(&pr, &RunConfig::default()).unwrap_err().code(), "undecidable");

    let pr = problem(f.clone(), Logic::S5, Domains::Expanding, ConstSemantics::Partial);
    assert_eq!(run(&pr, &RunConfig::default()).unwrap_err().code(), "invalid");
    let pr = problem(p("dia 3 exists x. P(x)"), Logic::Kn(2), Domains::Constant, ConstSemantics::Partial);
    assert!(check_problem(&pr).is_err());
    let pr = problem(f, Logic::Kn(1), Domains::Expanding, ConstSemantics::Partial);
    let cfg = RunConfig { backend: Some(Backend::Links), ..RunConfig::default() };
    assert!(run(&pr, &cfg).is_err());
}

#[test]
fn two_variable_input_is_rejected_before_search() {
    let pr = problem(p("exists x. exists y. (P(x) and dia 1 Q(y))"), Logic::Kn(1), Domains::Constant, ConstSemantics::Partial);
    let e = run(&pr, &RunConfig::default()).unwrap_err();
    assert_eq!(e.code(), "fragment");
}

#[test]
fn every_reduction_renders_a_parsable_problem() {
    let src = "logic: kn:2\ndomains: expanding\ntask: sat\nconstants: total\nformula:\n  exists x. (x = c and dia 1 not P(c)) and dia 2 exists x. x = (iota z. Q(z))\n";
    let base = parse_problem(src).unwrap();
    let no_dd = reduce(&base, "eliminate_dd").unwrap();
    let one_var = SourceProblem {
        formula: p("exists x. (x = c and dia 1 not P(c)) and dia 2 exists x. Q(x)"),
        domains: Domains::Constant,
        constants: ConstSemantics::Partial,
        ..base.clone()
    };
    for which in REDUCTIONS {
        let input = match *which {
            "eliminate_dd" => base.clone(),
            "total_to_partial" | "expanding_to_constant" => no_dd.clone(),
            "constants_to_difference" => one_var.clone(),
            "partial_to_total" => SourceProblem { constants: ConstSemantics::Partial, ..no_dd.clone() },
            "difference_to_constants" => reduce(&one_var, "constants_to_difference").unwrap(),
            "s5_global_to_validity" => SourceProblem {
                logic: Logic::S5,
                domains: Domains::Constant,
                task: Task::Global,
                theory: vec![p("forall x. P(x)")],
                formula: p("box 1 forall x. P(x)"),
                constants: ConstSemantics::Partial,
            },
            _ => SourceProblem { domains: Domains::Constant, ..base.clone() },
        };
        let out = reduce(&input, which).unwrap_or_else(|e| panic!("{which}: {e}"));
        let text = render_problem(&out);
        let back = parse_problem(&text).unwrap_or_else(|e| panic!("{which}: {e}\n{text}"));
        assert_eq!(back, out, "{which}");
        let a = run(&input, &RunConfig::default()).unwrap();
        let b = run(&out, &RunConfig::default()).unwrap();
        assert_eq!(a.decided == "sat", b.decided == "sat", "{which}");
    }
}

#[test]
fn reports_are_deterministic() {
    for f in corpus(34, 20, &GenConfig::default()) {
        let pr = problem(f, Logic::Kn(2), Domains::Constant, ConstSemantics::Partial);
        let cfg = RunConfig { emit: Some(Emit::Json), ..RunConfig::default() };
        let a = serde_json::to_string(&run(&pr, &cfg).unwrap().without_timings()).unwrap();
        let b = serde_json::to_string(&run(&pr, &cfg).unwrap().without_timings()).unwrap();
        assert_eq!(a, b);
    }
}
