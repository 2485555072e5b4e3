//! One problem end to end: gatekeeping, the reduction pipeline, backend
//! dispatch, cross-validation and the JSON report.

use crate::closure::{classify_fragment, one_variable_form, FragmentTag};
use crate::decide::{check_model, check_total, decide, Decision, Options, Procedure};
use crate::error::{Error, Result};
use crate::formula::*;
use crate::kn::Limits;
use crate::links::decide_links;
use crate::model::Interpretation;
use crate::oracle::{brute_force_sat, Bounds, Semantics};
use crate::parse::{ConstSemantics, Domains, Logic, SourceProblem, Task};
use crate::reductions::{self, prepare, Mode};
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Instant;

pub const REPORT_SCHEMA: &str = "qmlsolver.report/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// weak quasimodel search (constant domains; expanding via relativisation)
    Weakq,
    /// multiset search for expanding domains
    Qksat,
    /// transitions checked by extended-Diophantine link systems
    Links,
    /// bounded brute-force model search
    Oracle,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "weakq" => Ok(Backend::Weakq),
            "qksat" => Ok(Backend::Qksat),
            "links" => Ok(Backend::Links),
            "oracle" => Ok(Backend::Oracle),
            o => Err(format!("unknown backend '{o}' (expected qksat, weakq, links or oracle)")),
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Weakq => "weakq",
            Backend::Qksat => "qksat",
            Backend::Links => "links",
            Backend::Oracle => "oracle",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emit {
    Json,
    Dot,
}

#[derive(Clone, Debug, Default)]
pub struct RunConfig {
    pub backend: Option<Backend>,
    pub cross_validate: bool,
    pub oracle_bounds: Bounds,
    pub emit: Option<Emit>,
    pub seed: Option<u64>,
    pub limits: Option<Limits>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceStep {
    pub step: String,
    pub formula: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct BackendRun {
    pub backend: Backend,
    pub sat: bool,
    /// false for the bounded oracle's negative answers
    pub complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_nodes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_worlds: Option<usize>,
    #[serde(skip)]
    pub model: Option<Interpretation>,
    #[serde(skip)]
    pub millis: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: &'static str,
    pub task: Task,
    pub logic: String,
    pub domains: Domains,
    pub constants: ConstSemantics,
    /// `sat`/`unsat` for satisfiability, `valid`/`invalid` otherwise
    pub verdict: &'static str,
    /// satisfiability of the formula actually decided
    pub decided: &'static str,
    pub complete: bool,
    pub backend: Backend,
    pub fragment: FragmentTag,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_role: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_dot: Option<String>,
    pub pipeline: Vec<TraceStep>,
    pub backends: Vec<BackendRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// milliseconds per stage
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    /// Exit status: 0 for sat/valid, 1 for unsat/invalid.
    pub fn exit_code(&self) -> i32 {
        match self.verdict {
            "sat" | "valid" => 0,
            _ => 1,
        }
    }

    /// The report with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Report {
        Report { timings: BTreeMap::new(), ..self.clone() }
    }

    pub fn model(&self) -> Option<&Interpretation> {
        self.backends.iter().find(|b| b.backend == self.backend).and_then(|b| b.model.as_ref())
    }
}

/// The JSON object for an error, with its machine-readable code.
pub fn error_json(e: &Error) -> serde_json::Value {
    serde_json::json!({
        "schema": REPORT_SCHEMA,
        "error": { "code": e.code(), "message": e.to_string() },
    })
}

/// 2 for errors, 3 when a resource cap was hit.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Cap(_) => 3,
        _ => 2,
    }
}

/// Rejects incompatible logic, domain and task combinations.
pub fn check_problem(p: &SourceProblem) -> Result<()> {
    if p.logic.is_s5() && p.domains == Domains::Expanding {
        return Err(Error::Invalid("expanding domains are not supported over S5 frames".into()));
    }
    if p.task == Task::Global {
        match p.logic {
            Logic::Kn(n) => {
                return Err(Error::Undecidable(format!("global consequence over K{n} is undecidable in this language")))
            }
            Logic::S5n(n) if n > 1 => {
                return Err(Error::Undecidable(format!(
                    "global consequence over S5 with {n} modalities is undecidable in this language"
                )))
            }
            _ => {}
        }
    } else if !p.theory.is_empty() {
        return Err(Error::Invalid("a theory is only allowed with task global".into()));
    }
    let n = p.logic.modalities();
    for f in p.theory.iter().chain([&p.formula]) {
        if let Some(a) = f.modalities().into_iter().find(|&a| a == 0 || a > n) {
            return Err(Error::Invalid(format!("modality {a} is not available in {}", p.logic)));
        }
        if !f.is_sentence() {
            return Err(Error::Invalid(format!("not a sentence: {f}")));
        }
    }
    Ok(())
}

pub fn applicable(logic: Logic, domains: Domains) -> Vec<Backend> {
    match (logic.is_s5(), domains) {
        (true, _) => vec![Backend::Weakq, Backend::Oracle],
        (false, Domains::Constant) => vec![Backend::Weakq, Backend::Links, Backend::Oracle],
        (false, Domains::Expanding) => vec![Backend::Qksat, Backend::Weakq, Backend::Oracle],
    }
}

pub fn default_backend(domains: Domains) -> Backend {
    match domains {
        Domains::Expanding => Backend::Qksat,
        Domains::Constant => Backend::Weakq,
    }
}

/// Satisfiability of `phi` under the given semantics with one backend. Any
/// model returned has passed the model checker against `phi`.
pub fn run_backend(
    phi: &Formula,
    logic: Logic,
    domains: Domains,
    constants: ConstSemantics,
    backend: Backend,
    cfg: &RunConfig,
) -> Result<BackendRun> {
    let start = Instant::now();
    let partial = constants == ConstSemantics::Partial;
    let opts = Options { partial, limits: cfg.limits };
    let proc = if logic.is_s5() { Procedure::S5n } else { Procedure::ConstantKn };
    let decided: Result<(Decision, bool)> = match (backend, domains) {
        (Backend::Qksat, Domains::Expanding) => decide(phi, Procedure::ExpandingKn, opts).map(|d| (d, true)),
        (Backend::Qksat, Domains::Constant) => {
            Err(Error::Invalid("backend qksat decides expanding domains only".into()))
        }
        (Backend::Links, Domains::Expanding) => {
            Err(Error::Invalid("backend links decides constant-domain K_n only".into()))
        }
        (Backend::Links, _) if logic.is_s5() => {
            Err(Error::Invalid("backend links decides constant-domain K_n only".into()))
        }
        (Backend::Weakq, Domains::Constant) => decide(phi, proc, opts).map(|d| (d, true)),
        (Backend::Links, Domains::Constant) => decide_links(phi, opts).map(|d| (d, true)),
        (Backend::Weakq, Domains::Expanding) => decide_relativised(phi, partial, cfg.limits).map(|d| (d, true)),
        (Backend::Oracle, _) => {
            let sem = if logic.is_s5() { Semantics::s5(constants) } else { Semantics::k(domains, constants) };
            brute_force_sat(phi, cfg.oracle_bounds, sem).map(|m| {
                let sat = m.is_some();
                (Decision { sat, model: m, stats: Default::default() }, sat)
            })
        }
    };
    let (d, complete) = decided?;
    if let Some(m) = &d.model {
        let proc = match domains {
            Domains::Expanding => Procedure::ExpandingKn,
            Domains::Constant => proc,
        };
        check_model(m, phi, proc)?;
        if !partial {
            check_total(m)?;
        }
    }
    let searched = backend != Backend::Oracle;
    Ok(BackendRun {
        backend,
        sat: d.sat,
        complete,
        search_nodes: searched.then_some(d.stats.search_nodes),
        model_worlds: d.model.as_ref().map(|m| m.worlds.len()),
        model: d.model,
        millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Expanding-domain satisfiability through the existence-predicate
/// relativisation and the constant-domain search. The model is cut back to
/// the existence predicate's extension at each world.
pub fn decide_relativised(phi: &Formula, partial: bool, limits: Option<Limits>) -> Result<Decision> {
    let prep = prepare(phi, partial)?;
    let base = &prep.formula;
    let mut rel = reductions::expanding_to_constant(base)?;
    let before: BTreeSet<Name> = base.predicates().into_keys().collect();
    let e = rel
        .predicates()
        .into_iter()
        .find(|(p, n)| *n == 1 && !before.contains(p))
        .map(|(p, _)| p)
        .ok_or_else(|| Error::SelfCheck("relativisation introduced no existence predicate".into()))?;
    if !partial {
        // total constants designate an existing object wherever a world may be
        let x = base.variables().into_iter().next().unwrap_or_else(|| name(TYPE_VAR));
        let xv = Term::Var(x.clone());
        let guards = reductions::all_paths(base).into_iter().flat_map(|p| {
            let (xv, e, x) = (xv.clone(), e.clone(), x.clone());
            base.constants().into_iter().map(move |c| {
                box_path(&p, exists(&x, and(Formula::Atom(e.clone(), vec![xv.clone()]), eq(xv.clone(), Term::Const(c)))))
            })
        });
        rel = conj(std::iter::once(rel).chain(guards));
    }
    let opts = Options { partial: false, limits };
    let d = decide(&rel, Procedure::ConstantKn, opts)?;
    let model = d.model.map(|m| cut_to_existence(&m, &e, &prep.definedness, phi));
    Ok(Decision { model, ..d })
}

fn cut_to_existence(m: &Interpretation, e: &Name, definedness: &BTreeMap<Name, Name>, phi: &Formula) -> Interpretation {
    let preds: BTreeSet<Name> = phi.predicates().into_keys().collect();
    let consts = phi.constants();
    let mut out = m.clone();
    for w in &mut out.worlds {
        let dom: BTreeSet<_> = w.preds.get(e).map(|ext| ext.iter().filter_map(|t| t.first().copied()).collect()).unwrap_or_default();
        for (c, p) in definedness {
            if !w.preds.get(p).is_some_and(|ext| ext.contains(&vec![])) {
                w.consts.remove(c);
            }
        }
        w.consts.retain(|c, v| consts.contains(c) && dom.contains(v));
        w.preds.retain(|p, _| preds.contains(p));
        for ext in w.preds.values_mut() {
            ext.retain(|t| t.iter().all(|v| dom.contains(v)));
        }
        w.domain = dom;
    }
    out
}

/// The sentence whose satisfiability answers the task, with the steps taken.
pub fn task_formula(p: &SourceProblem) -> Result<(Formula, Vec<TraceStep>)> {
    let mut trace = vec![];
    let mut f = p.formula.clone();
    let mut task = p.task;
    if task == Task::Global {
        f = reductions::s5_global_to_validity(&p.theory, &f, p.logic)?;
        trace.push(step("s5_global_to_validity", &f));
        task = Task::Valid;
    }
    if task == Task::Valid {
        f = not(f);
        trace.push(step("negate", &f));
    }
    Ok((f, trace))
}

fn step(name: &str, f: &Formula) -> TraceStep {
    TraceStep { step: name.to_string(), formula: f.to_string() }
}

fn ms(t: Instant) -> f64 {
    (t.elapsed().as_secs_f64() * 1e6).round() / 1e3
}

/// Decides a problem. With `cross_validate`, every applicable backend runs
/// and any disagreement is an error.
pub fn run(p: &SourceProblem, cfg: &RunConfig) -> Result<Report> {
    let t0 = Instant::now();
    let mut timings = BTreeMap::new();
    check_problem(p)?;
    let mut pipeline = vec![step("parse", &p.formula)];
    let fragment = classify_fragment(&p.formula);
    let (f, steps) = task_formula(p)?;
    pipeline.extend(steps);
    let backend = cfg.backend.unwrap_or_else(|| default_backend(p.domains));
    if !applicable(p.logic, p.domains).contains(&backend) {
        return Err(Error::Invalid(format!("backend {backend} does not apply to {} with {:?} domains", p.logic, p.domains)));
    }
    let t = Instant::now();
    one_variable_form(&f)?;
    if backend != Backend::Oracle {
        let prep = prepare(&f, p.constants == ConstSemantics::Partial)?;
        pipeline.extend(prep.trace.iter().map(|(s, g)| step(s, g)));
        if p.domains == Domains::Expanding && backend != Backend::Qksat {
            pipeline.push(step("expanding_to_constant", &reductions::expanding_to_constant(&prep.formula)?));
        }
    }
    timings.insert("prepare".to_string(), ms(t));

    let mut order = vec![backend];
    if cfg.cross_validate {
        order.extend(applicable(p.logic, p.domains).into_iter().filter(|&b| b != backend));
    }
    let mut runs = vec![];
    for b in order {
        let r = run_backend(&f, p.logic, p.domains, p.constants, b, cfg)?;
        timings.insert(format!("backend.{b}"), (r.millis * 1e3).round() / 1e3);
        runs.push(r);
    }
    let main = &runs[0];
    for r in &runs[1..] {
        // a bounded search that finds nothing is no evidence either way
        let conflict = if r.complete && main.complete { r.sat != main.sat } else { r.sat && !main.sat };
        if conflict {
            return Err(Error::SelfCheck(format!(
                "backends disagree: {} says {}, {} says {}",
                main.backend,
                sat_word(main.sat),
                r.backend,
                sat_word(r.sat)
            )));
        }
        if !main.complete && r.complete && r.sat != main.sat {
            return Err(Error::SelfCheck(format!("backend {} contradicts the bounded search", r.backend)));
        }
    }
    let sat = main.sat;
    let verdict = match (p.task, sat) {
        (Task::Sat, true) => "sat",
        (Task::Sat, false) => "unsat",
        (_, true) => "invalid",
        (_, false) => "valid",
    };
    let witness_role = main.model.as_ref().map(|_| if p.task == Task::Sat { "model" } else { "counter_model" });
    let (witness, witness_dot) = match (&main.model, cfg.emit) {
        (Some(m), Some(Emit::Dot)) => (None, Some(m.to_dot())),
        (Some(m), _) => (Some(m.to_json()), None),
        _ => (None, None),
    };
    timings.insert("total".to_string(), ms(t0));
    Ok(Report {
        schema: REPORT_SCHEMA,
        task: p.task,
        logic: p.logic.to_string(),
        domains: p.domains,
        constants: p.constants,
        verdict,
        decided: sat_word(sat),
        complete: main.complete || sat,
        backend,
        fragment,
        witness_role,
        witness,
        witness_dot,
        pipeline,
        backends: runs,
        seed: cfg.seed,
        timings,
    })
}

fn sat_word(sat: bool) -> &'static str {
    if sat {
        "sat"
    } else {
        "unsat"
    }
}

/// Reductions selectable by name for `--reduce`.
pub const REDUCTIONS: &[&str] = &[
    "eliminate_dd",
    "partial_to_total",
    "total_to_partial",
    "expanding_to_constant",
    "constants_to_difference",
    "difference_to_constants",
    "s5_global_to_validity",
    "decision_form",
];

/// Applies one named reduction to a problem without solving it.
pub fn reduce(p: &SourceProblem, which: &str) -> Result<SourceProblem> {
    check_problem(p)?;
    let mode = if p.task == Task::Global { Mode::Global } else { Mode::Validity };
    let mut out = p.clone();
    let (f, g) = match which {
        "eliminate_dd" => reductions::eliminate_dd(&p.formula, &p.theory, mode)?,
        "partial_to_total" => {
            if p.constants == ConstSemantics::Total {
                return Err(Error::Invalid("constants are already total".into()));
            }
            out.constants = ConstSemantics::Total;
            reductions::partial_to_total(&p.formula, &p.theory)?
        }
        "total_to_partial" => {
            if p.constants == ConstSemantics::Partial {
                return Err(Error::Invalid("constants are already partial".into()));
            }
            out.constants = ConstSemantics::Partial;
            reductions::total_to_partial(&p.formula, &p.theory, mode)?
        }
        "expanding_to_constant" => {
            if p.domains != Domains::Expanding || p.constants != ConstSemantics::Total || !p.theory.is_empty() {
                return Err(Error::Invalid(
                    "expanding_to_constant needs expanding domains, total constants and no theory".into(),
                ));
            }
            out.domains = Domains::Constant;
            (reductions::expanding_to_constant(&p.formula)?, vec![])
        }
        "constants_to_difference" => reductions::constants_to_difference(&p.formula, &p.theory)?,
        "difference_to_constants" => reductions::difference_to_constants(&p.formula, &p.theory, mode)?,
        "s5_global_to_validity" => {
            if p.task != Task::Global {
                return Err(Error::Invalid("s5_global_to_validity needs task global".into()));
            }
            out.task = Task::Valid;
            (reductions::s5_global_to_validity(&p.theory, &p.formula, p.logic)?, vec![])
        }
        "decision_form" => {
            if p.task == Task::Global {
                return Err(Error::Invalid("decision_form applies to sat and valid tasks".into()));
            }
            out.constants = ConstSemantics::Total;
            let g = reductions::decision_form(&p.formula, p.constants == ConstSemantics::Partial)?;
            // the internal variable is reserved in the input syntax
            let taken: BTreeSet<Name> = g.constants().into_iter().chain(g.predicates().into_keys()).collect();
            let x = ["x", "y", "z"].into_iter().map(name).find(|v| !taken.contains(v)).unwrap_or_else(|| crate::fresh::fresh("x", "x", &taken));
            (g.rename_all_vars(&x), vec![])
        }
        o => return Err(Error::Invalid(format!("unknown reduction '{o}' (expected one of {})", REDUCTIONS.join(", ")))),
    };
    out.formula = f;
    out.theory = g;
    Ok(out)
}

/// A problem in the input file format.
pub fn render_problem(p: &SourceProblem) -> String {
    let mut s = format!(
        "logic: {}\ndomains: {}\ntask: {}\nconstants: {}\n",
        p.logic,
        match p.domains {
            Domains::Constant => "constant",
            Domains::Expanding => "expanding",
        },
        match p.task {
            Task::Sat => "sat",
            Task::Valid => "valid",
            Task::Global => "global",
        },
        match p.constants {
            ConstSemantics::Partial => "partial",
            ConstSemantics::Total => "total",
        }
    );
    if !p.theory.is_empty() {
        let items: Vec<String> = p.theory.iter().map(|g| format!("  {g}")).collect();
        s.push_str("theory:\n");
        s.push_str(&items.join(";\n"));
        s.push('\n');
    }
    s.push_str(&format!("formula:\n  {}\n", p.formula));
    s
}
